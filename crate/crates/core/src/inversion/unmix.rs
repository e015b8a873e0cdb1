use nalgebra::{DMatrix, DVector};

use super::nnls::{nnls, KktCertificate};
use crate::error::{Error, Result};
use crate::speckle::{AutocorrMap, BasisKernel, LagMask};

/// Measured ensemble map expressed over a set of basis kernels.
#[derive(Debug, Clone)]
pub struct UnmixProblem<'a> {
    pub measured: &'a AutocorrMap,
    pub bases: &'a [BasisKernel],
    pub lag_mask: LagMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbundanceEstimate {
    pub species: Vec<String>,
    /// mg/mL, one per basis.
    pub abundances: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub rank_deficient: bool,
    pub kkt: KktCertificate,
}

impl AbundanceEstimate {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.species.iter().position(|s| s == name).map(|i| self.abundances[i])
    }
}

impl<'a> UnmixProblem<'a> {
    pub fn new(measured: &'a AutocorrMap, bases: &'a [BasisKernel], lag_mask: LagMask) -> Result<Self> {
        if bases.is_empty() {
            return Err(Error::Config("unmixing needs at least one basis kernel".into()));
        }
        if !measured.mean_subtracted {
            return Err(Error::Config("measured map must be mean-subtracted".into()));
        }
        for b in bases {
            b.ensure_compatible(measured)?;
        }
        let p = Self {
            measured,
            bases,
            lag_mask,
        };
        if p.lag_indices().is_empty() {
            return Err(Error::Config(format!(
                "lag mask [{}, {}] selects no lags",
                lag_mask.r_min, lag_mask.r_max
            )));
        }
        Ok(p)
    }

    fn lag_indices(&self) -> Vec<usize> {
        self.lag_mask
            .indices(self.measured.grid.width(), self.measured.grid.height())
    }

    /// Design matrix (one basis per column) and data vector on the mask.
    pub fn system(&self) -> (DMatrix<f64>, DVector<f64>) {
        let idx = self.lag_indices();
        let a = DMatrix::from_fn(idx.len(), self.bases.len(), |r, c| self.bases[c].map.grid.data()[idx[r]]);
        let y = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.measured.grid.data()[i]));
        (a, y)
    }
}

pub fn nnls_unmix(p: &UnmixProblem) -> AbundanceEstimate {
    let (a, y) = p.system();
    let s = nnls(&a, &y);
    AbundanceEstimate {
        species: p.bases.iter().map(|b| b.species.name.clone()).collect(),
        abundances: s.x,
        residual_norm: s.residual_norm,
        iterations: s.iterations,
        converged: s.converged,
        rank_deficient: s.rank_deficient,
        kkt: s.kkt,
    }
}

/// Least-squares projection coefficients `⟨b_m, y⟩ / ⟨b_m, b_m⟩` of the
/// measured map onto each basis, on the mask. Zero for a null basis.
pub fn projection_coefficients(p: &UnmixProblem) -> Vec<f64> {
    let (a, y) = p.system();
    a.column_iter()
        .map(|c| {
            let nn = c.norm_squared();
            if nn > 0.0 {
                c.dot(&y) / nn
            } else {
                0.0
            }
        })
        .collect()
}
