//! Non-negative least squares, `min ‖A·c − y‖²` subject to `c ≥ 0`.

use nalgebra::{DMatrix, DVector};

pub const NNLS_TOLERANCE: f64 = 1e-10;
pub const NNLS_MAX_ITER: usize = 10_000;
/// KKT slack relative to `‖A‖_F·‖y‖`.
pub const KKT_RELATIVE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct KktCertificate {
    /// Largest violation: `|g_m|` on the support, `max(0, −g_m)` off it,
    /// where `g = Aᵀ(A·c − y)`.
    pub max_violation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsSolution {
    pub x: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Columns of `A` are linearly dependent, so the minimizer need not be
    /// unique; `converged` is false in that case.
    pub rank_deficient: bool,
    pub kkt: KktCertificate,
}

pub fn kkt_certificate(a: &DMatrix<f64>, y: &DVector<f64>, x: &DVector<f64>) -> KktCertificate {
    let g = a.transpose() * (a * x - y);
    let tolerance = KKT_RELATIVE * a.norm() * y.norm();
    let mut max_violation = 0.0f64;
    for (gi, xi) in g.iter().zip(x.iter()) {
        let v = if *xi > 0.0 { gi.abs() } else { (-gi).max(0.0) };
        max_violation = max_violation.max(v);
    }
    KktCertificate {
        max_violation,
        tolerance,
        passed: max_violation <= tolerance,
    }
}

/// Lawson–Hanson active set with a projected-gradient polish when the active
/// set stalls. Deterministic.
pub fn nnls(a: &DMatrix<f64>, y: &DVector<f64>) -> NnlsSolution {
    let n = a.ncols();
    assert_eq!(a.nrows(), y.len(), "design matrix and data disagree");
    let scale = a.norm() * y.norm();
    let rank_deficient = is_rank_deficient(a);

    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let mut iterations = 0;
    let mut stalled = false;

    if scale > 0.0 {
        'outer: loop {
            let w = a.transpose() * (y - a * &x);
            let candidate = (0..n)
                .filter(|&j| !passive[j])
                .max_by(|&i, &j| w[i].total_cmp(&w[j]).then(j.cmp(&i)));
            match candidate {
                Some(j) if w[j] > NNLS_TOLERANCE * scale => passive[j] = true,
                _ => break,
            }
            loop {
                iterations += 1;
                if iterations > NNLS_MAX_ITER {
                    stalled = true;
                    break 'outer;
                }
                let s = solve_passive(a, y, &passive);
                if (0..n).all(|i| !passive[i] || s[i] > 0.0) {
                    x = s;
                    break;
                }
                let mut alpha = f64::INFINITY;
                for i in 0..n {
                    if passive[i] && s[i] <= 0.0 {
                        alpha = alpha.min(x[i] / (x[i] - s[i]));
                    }
                }
                let alpha = if alpha.is_finite() { alpha.clamp(0.0, 1.0) } else { 0.0 };
                x += (s - &x) * alpha;
                for i in 0..n {
                    if passive[i] && x[i] <= NNLS_TOLERANCE * x.amax().max(1.0) {
                        passive[i] = false;
                        x[i] = 0.0;
                    }
                }
            }
        }
    }

    let mut kkt = kkt_certificate(a, y, &x);
    if !kkt.passed {
        iterations += projected_gradient(a, y, &mut x, NNLS_MAX_ITER);
        kkt = kkt_certificate(a, y, &x);
        stalled = stalled || !kkt.passed;
    }
    NnlsSolution {
        residual_norm: (a * &x - y).norm(),
        x: x.iter().copied().collect(),
        iterations,
        converged: !stalled && kkt.passed && !rank_deficient,
        rank_deficient,
        kkt,
    }
}

fn is_rank_deficient(a: &DMatrix<f64>) -> bool {
    if a.ncols() == 0 {
        return false;
    }
    if a.nrows() < a.ncols() {
        return true;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.max();
    max == 0.0 || sv.min() <= 1e-12 * max
}

/// Unconstrained least squares on the passive columns; zero elsewhere.
fn solve_passive(a: &DMatrix<f64>, y: &DVector<f64>, passive: &[bool]) -> DVector<f64> {
    let cols: Vec<usize> = (0..passive.len()).filter(|&i| passive[i]).collect();
    let sub = a.select_columns(cols.iter());
    let svd = sub.svd(true, true);
    let eps = 1e-13 * svd.singular_values.max();
    let s = svd.solve(y, eps).unwrap_or_else(|_| DVector::zeros(cols.len()));
    let mut out = DVector::zeros(passive.len());
    for (k, &i) in cols.iter().enumerate() {
        out[i] = s[k];
    }
    out
}

/// Projected gradient with step `1/σ_max²`; returns the iterations used.
fn projected_gradient(a: &DMatrix<f64>, y: &DVector<f64>, x: &mut DVector<f64>, cap: usize) -> usize {
    let sv = a.clone().svd(false, false).singular_values;
    let l = sv.max().powi(2);
    if l == 0.0 {
        return 0;
    }
    let ata = a.transpose() * a;
    let aty = a.transpose() * y;
    for it in 1..=cap {
        let g = &ata * &*x - &aty;
        x.zip_apply(&g, |xi, gi| *xi = (*xi - gi / l).max(0.0));
        if it % 16 == 0 && kkt_certificate(a, y, x).passed {
            return it;
        }
    }
    cap
}
