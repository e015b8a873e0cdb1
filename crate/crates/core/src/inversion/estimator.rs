//! Two-stage estimator: `h = tanh(θ·[X; I; 1])`, descriptor
//! `ŝ = softmax(φ·[h; 1])`, abundances `ĉ = softplus(ψ·[h; 1])`.
//!
//! Weight matrices are row-major with the bias as the last column.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorParams {
    pub n_x: usize,
    pub n_i: usize,
    pub n_hidden: usize,
    pub n_desc: usize,
    pub n_out: usize,
    /// `n_hidden × (n_x + n_i + 1)`.
    pub theta: Vec<f64>,
    /// `n_desc × (n_hidden + 1)`.
    pub phi: Vec<f64>,
    /// `n_out × (n_hidden + 1)`.
    pub psi: Vec<f64>,
}

impl EstimatorParams {
    /// Weights drawn from `N(0, 1/√fan_in)`, biases zero.
    pub fn init(n_x: usize, n_i: usize, n_hidden: usize, n_desc: usize, n_out: usize, seed: u64) -> Result<Self> {
        if n_x + n_i == 0 || n_hidden == 0 || n_desc == 0 || n_out == 0 {
            return Err(Error::Parameter("estimator dimensions must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layer = |rows: usize, fan_in: usize| -> Vec<f64> {
            let d = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("finite sigma");
            let mut w = Vec::with_capacity(rows * (fan_in + 1));
            for _ in 0..rows {
                for _ in 0..fan_in {
                    w.push(d.sample(&mut rng));
                }
                w.push(0.0);
            }
            w
        };
        let p = Self {
            theta: layer(n_hidden, n_x + n_i),
            phi: layer(n_desc, n_hidden),
            psi: layer(n_out, n_hidden),
            n_x,
            n_i,
            n_hidden,
            n_desc,
            n_out,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("theta", self.theta.len(), self.n_hidden * (self.n_x + self.n_i + 1)),
            ("phi", self.phi.len(), self.n_desc * (self.n_hidden + 1)),
            ("psi", self.psi.len(), self.n_out * (self.n_hidden + 1)),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(Error::Shape(format!("{name} has {got} weights, expected {want}")));
            }
        }
        if self.theta.iter().chain(&self.phi).chain(&self.psi).any(|v| !v.is_finite()) {
            return Err(Error::Parameter("estimator weights must be finite".into()));
        }
        Ok(())
    }

    /// SHA-256 over the encoder weights and shape.
    pub fn theta_digest(&self) -> String {
        let mut h = Sha256::new();
        for d in [self.n_x, self.n_i, self.n_hidden] {
            h.update((d as u64).to_le_bytes());
        }
        for v in &self.theta {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// `y = W·[v; 1]` for a row-major `rows × (len(v)+1)` matrix.
fn affine(w: &[f64], v: &[f64], rows: usize) -> Vec<f64> {
    let cols = v.len() + 1;
    (0..rows)
        .map(|r| {
            let row = &w[r * cols..(r + 1) * cols];
            row[..v.len()].iter().zip(v).map(|(a, b)| a * b).sum::<f64>() + row[v.len()]
        })
        .collect()
}

pub fn encode(x: &[f64], i: &[f64], p: &EstimatorParams) -> Result<Vec<f64>> {
    if x.len() != p.n_x || i.len() != p.n_i {
        return Err(Error::Shape(format!(
            "encoder expects X of {} and I of {}, got {} and {}",
            p.n_x,
            p.n_i,
            x.len(),
            i.len()
        )));
    }
    let mut input = Vec::with_capacity(x.len() + i.len());
    input.extend_from_slice(x);
    input.extend_from_slice(i);
    Ok(affine(&p.theta, &input, p.n_hidden).into_iter().map(f64::tanh).collect())
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `ln(1 + eˣ)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn map_descriptor(h: &[f64], p: &EstimatorParams) -> Result<Vec<f64>> {
    check_hidden(h, p)?;
    Ok(softmax(&affine(&p.phi, h, p.n_desc)))
}

pub fn head(h: &[f64], p: &EstimatorParams) -> Result<Vec<f64>> {
    check_hidden(h, p)?;
    Ok(affine(&p.psi, h, p.n_out).into_iter().map(softplus).collect())
}

pub fn estimate(x: &[f64], i: &[f64], p: &EstimatorParams) -> Result<Vec<f64>> {
    head(&encode(x, i, p)?, p)
}

fn check_hidden(h: &[f64], p: &EstimatorParams) -> Result<()> {
    if h.len() != p.n_hidden {
        return Err(Error::Shape(format!("hidden vector has {} entries, expected {}", h.len(), p.n_hidden)));
    }
    Ok(())
}

/// `−(1/N) Σ_n Σ_i t_ni · ln ŝ_ni`.
pub fn loss_rep(s: &[Vec<f64>], t: &[Vec<f64>]) -> Result<f64> {
    if s.is_empty() || s.len() != t.len() {
        return Err(Error::Shape(format!("loss_rep: {} predictions vs {} targets", s.len(), t.len())));
    }
    let mut acc = 0.0;
    for (sn, tn) in s.iter().zip(t) {
        if sn.len() != tn.len() {
            return Err(Error::Shape("loss_rep: descriptor length mismatch".into()));
        }
        for (&si, &ti) in sn.iter().zip(tn) {
            if !(si > 0.0) {
                return Err(Error::Domain(format!("descriptor component {si} is not positive")));
            }
            acc -= ti * si.ln();
        }
    }
    Ok(acc / s.len() as f64)
}

/// `(1/2N) Σ_n ‖ĉ_n − c*_n‖`, or with `‖·‖²` when `squared`.
pub fn loss_qt(c_hat: &[Vec<f64>], c_star: &[Vec<f64>], squared: bool) -> Result<f64> {
    if c_hat.is_empty() || c_hat.len() != c_star.len() {
        return Err(Error::Shape(format!("loss_qt: {} estimates vs {} targets", c_hat.len(), c_star.len())));
    }
    let mut acc = 0.0;
    for (a, b) in c_hat.iter().zip(c_star) {
        if a.len() != b.len() {
            return Err(Error::Shape("loss_qt: abundance length mismatch".into()));
        }
        let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        acc += if squared { sq } else { sq.sqrt() };
    }
    Ok(acc / (2.0 * c_hat.len() as f64))
}

/// Gradients with the same layout as [`EstimatorParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
}

impl Gradients {
    pub fn zeros(p: &EstimatorParams) -> Self {
        Self {
            theta: vec![0.0; p.theta.len()],
            phi: vec![0.0; p.phi.len()],
            psi: vec![0.0; p.psi.len()],
        }
    }
}

/// One training example as seen by the losses.
pub struct Example<'a> {
    pub x: &'a [f64],
    pub i: &'a [f64],
    pub t: &'a [f64],
    pub c: &'a [f64],
}

fn input(e: &Example) -> Vec<f64> {
    let mut v = Vec::with_capacity(e.x.len() + e.i.len());
    v.extend_from_slice(e.x);
    v.extend_from_slice(e.i);
    v
}

/// Accumulates `g += a ⊗ [v; 1]` into a row-major matrix.
fn outer_acc(g: &mut [f64], a: &[f64], v: &[f64]) {
    let cols = v.len() + 1;
    for (r, &ar) in a.iter().enumerate() {
        let row = &mut g[r * cols..(r + 1) * cols];
        for (gk, vk) in row.iter_mut().zip(v) {
            *gk += ar * vk;
        }
        row[v.len()] += ar;
    }
}

/// Back-propagates `dL/dh` through the encoder into `g.theta`.
fn backprop_encoder(g: &mut Gradients, inp: &[f64], h: &[f64], dh: &[f64]) {
    let dz: Vec<f64> = dh.iter().zip(h).map(|(d, hv)| d * (1.0 - hv * hv)).collect();
    outer_acc(&mut g.theta, &dz, inp);
}

/// `W[:, ..n_in]ᵀ·a`: pulls a gradient back through an affine layer.
fn back_through(w: &[f64], a: &[f64], n_in: usize) -> Vec<f64> {
    let cols = n_in + 1;
    let mut out = vec![0.0; n_in];
    for (r, &ar) in a.iter().enumerate() {
        for (k, o) in out.iter_mut().enumerate() {
            *o += w[r * cols + k] * ar;
        }
    }
    out
}

/// `L_rep` and its gradient with respect to θ and φ.
pub fn loss_rep_grad(p: &EstimatorParams, batch: &[Example]) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    let n = batch.len() as f64;
    let mut g = Gradients::zeros(p);
    let mut loss = 0.0;
    for e in batch {
        let inp = input(e);
        let h = encode(e.x, e.i, p)?;
        let s = map_descriptor(&h, p)?;
        if e.t.len() != p.n_desc {
            return Err(Error::Shape(format!("target has {} classes, expected {}", e.t.len(), p.n_desc)));
        }
        let t_sum: f64 = e.t.iter().sum();
        for (&si, &ti) in s.iter().zip(e.t) {
            if ti != 0.0 {
                loss -= ti * si.ln() / n;
            }
        }
        let dl: Vec<f64> = s.iter().zip(e.t).map(|(si, ti)| (si * t_sum - ti) / n).collect();
        outer_acc(&mut g.phi, &dl, &h);
        let dh = back_through(&p.phi, &dl, p.n_hidden);
        backprop_encoder(&mut g, &inp, &h, &dh);
    }
    Ok((loss, g))
}

/// Samples within this distance of their target sit on the kink of the
/// un-squared norm.
pub fn qt_kink(e: &Example, p: &EstimatorParams, tol: f64) -> Result<bool> {
    let c = estimate(e.x, e.i, p)?;
    let d2: f64 = c.iter().zip(e.c).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(d2.sqrt() <= tol)
}

/// `L_qt` and its gradient with respect to θ and ψ. At the kink of the
/// un-squared norm the zero subgradient is used.
pub fn loss_qt_grad(p: &EstimatorParams, batch: &[Example], squared: bool) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    let n = batch.len() as f64;
    let mut g = Gradients::zeros(p);
    let mut loss = 0.0;
    for e in batch {
        if e.c.len() != p.n_out {
            return Err(Error::Shape(format!("target has {} abundances, expected {}", e.c.len(), p.n_out)));
        }
        let inp = input(e);
        let h = encode(e.x, e.i, p)?;
        let a = affine(&p.psi, &h, p.n_out);
        let c: Vec<f64> = a.iter().map(|&v| softplus(v)).collect();
        let d: Vec<f64> = c.iter().zip(e.c).map(|(x, y)| x - y).collect();
        let sq: f64 = d.iter().map(|v| v * v).sum();
        let (l, coef) = if squared {
            (sq, 1.0 / n)
        } else {
            let norm = sq.sqrt();
            (norm, if norm > 0.0 { 1.0 / (2.0 * n * norm) } else { 0.0 })
        };
        loss += l / (2.0 * n);
        let da: Vec<f64> = d.iter().zip(&a).map(|(dv, av)| coef * dv * sigmoid(*av)).collect();
        outer_acc(&mut g.psi, &da, &h);
        let dh = back_through(&p.psi, &da, p.n_hidden);
        backprop_encoder(&mut g, &inp, &h, &dh);
    }
    Ok((loss, g))
}
