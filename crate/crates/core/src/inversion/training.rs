use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::estimator::{
    encode, estimate, loss_qt_grad, loss_rep_grad, qt_kink, softplus, EstimatorParams, Example, Gradients,
};
use crate::error::{Error, Result};
use crate::rng;

/// How descriptor targets `t_n` are derived from abundances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    /// One-hot on the species with the largest mass fraction.
    #[default]
    OneHot,
    /// The mass fractions themselves.
    MassFraction,
}

impl TargetKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "one-hot" => Ok(Self::OneHot),
            "mass-fraction" => Ok(Self::MassFraction),
            other => Err(Error::Parameter(format!("unknown target kind '{other}'"))),
        }
    }
}

/// Target distribution for abundances `c`. An all-zero vector maps to the
/// uniform distribution.
pub fn target_distribution(c: &[f64], kind: TargetKind) -> Vec<f64> {
    let total: f64 = c.iter().sum();
    if c.is_empty() || !(total > 0.0) {
        return vec![1.0 / c.len().max(1) as f64; c.len()];
    }
    match kind {
        TargetKind::MassFraction => c.iter().map(|v| v / total).collect(),
        TargetKind::OneHot => {
            // First index wins ties.
            let mut best = 0;
            for (k, v) in c.iter().enumerate() {
                if *v > c[best] {
                    best = k;
                }
            }
            (0..c.len()).map(|k| if k == best { 1.0 } else { 0.0 }).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingRow {
    /// Image-derived features.
    pub x: Vec<f64>,
    /// Physics-prior features.
    pub i: Vec<f64>,
    /// Target descriptor distribution.
    pub t: Vec<f64>,
    /// Ground-truth abundances, mg/mL.
    pub c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSet {
    pub species: Vec<String>,
    pub rows: Vec<TrainingRow>,
}

impl TrainingSet {
    pub fn validate(&self) -> Result<()> {
        let first = self
            .rows
            .first()
            .ok_or_else(|| Error::Parameter("training set is empty".into()))?;
        for (n, r) in self.rows.iter().enumerate() {
            if r.x.len() != first.x.len() || r.i.len() != first.i.len() || r.t.len() != first.t.len() || r.c.len() != first.c.len() {
                return Err(Error::Shape(format!("row {n} dimensions differ from row 0")));
            }
            let sum: f64 = r.t.iter().sum();
            if r.t.iter().any(|v| !(*v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Domain(format!("row {n}: target is not a distribution (sum {sum})")));
            }
            if r.c.iter().chain(&r.x).chain(&r.i).any(|v| !v.is_finite()) || r.c.iter().any(|v| *v < 0.0) {
                return Err(Error::Domain(format!("row {n}: non-finite features or negative abundance")));
            }
        }
        if !self.species.is_empty() && self.species.len() != first.c.len() {
            return Err(Error::Shape(format!(
                "{} species names for {} abundances",
                self.species.len(),
                first.c.len()
            )));
        }
        Ok(())
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        self.rows
            .first()
            .map_or((0, 0, 0, 0), |r| (r.x.len(), r.i.len(), r.t.len(), r.c.len()))
    }

    fn examples(&self) -> Vec<Example<'_>> {
        self.rows
            .iter()
            .map(|r| Example {
                x: &r.x,
                i: &r.i,
                t: &r.t,
                c: &r.c,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    I,
    II,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// 0 means full batch.
    pub batch_size: usize,
    pub seed: u64,
    pub stage: Stage,
    pub optimizer: Optimizer,
    pub hidden: usize,
    /// Use `‖·‖²` in the quantification loss.
    pub squared_qt: bool,
}

impl TrainConfig {
    pub fn new(stage: Stage) -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 500,
            batch_size: 0,
            seed: 0,
            stage,
            optimizer: Optimizer::Adam,
            hidden: 16,
            squared_qt: false,
        }
    }

    pub fn validate(&self, stage: Stage) -> Result<()> {
        if self.stage != stage {
            return Err(Error::Config(format!("config is for stage {:?}, expected {stage:?}", self.stage)));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be >= 0, got {}", self.learning_rate)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters at the best recorded full-set loss.
    pub params: EstimatorParams,
    /// `(epoch, full-set loss)`; epoch 0 is the initialization.
    pub trace: Vec<(usize, f64)>,
    pub best_epoch: usize,
    pub best_loss: f64,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, w: &mut [f64], g: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for k in 0..w.len() {
            self.m[k] = B1 * self.m[k] + (1.0 - B1) * g[k];
            self.v[k] = B2 * self.v[k] + (1.0 - B2) * g[k] * g[k];
            w[k] -= lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + 1e-12);
        }
    }
}

#[derive(Clone, Copy)]
enum Which {
    Rep,
    Qt { squared: bool },
}

fn loss_and_grad(p: &EstimatorParams, batch: &[Example], which: Which) -> Result<(f64, Gradients)> {
    match which {
        Which::Rep => loss_rep_grad(p, batch),
        Which::Qt { squared } => loss_qt_grad(p, batch, squared),
    }
}

/// Weight vectors a stage is allowed to update, in a fixed order.
fn groups(p: &mut EstimatorParams, which: Which) -> Vec<&mut Vec<f64>> {
    match which {
        Which::Rep => vec![&mut p.theta, &mut p.phi],
        Which::Qt { .. } => vec![&mut p.psi],
    }
}

fn grad_groups(g: &Gradients, which: Which) -> Vec<&Vec<f64>> {
    match which {
        Which::Rep => vec![&g.theta, &g.phi],
        Which::Qt { .. } => vec![&g.psi],
    }
}

fn run(set: &TrainingSet, init: EstimatorParams, cfg: &TrainConfig, which: Which) -> Result<TrainOutcome> {
    let examples = set.examples();
    let mut p = init;
    let (init_loss, _) = loss_and_grad(&p, &examples, which)?;
    if !init_loss.is_finite() {
        return Err(Error::Divergence { epoch: 0, loss: init_loss });
    }
    let mut trace = vec![(0, init_loss)];
    let mut best = (p.clone(), 0, init_loss);
    let mut adams: Vec<Adam> = groups(&mut p.clone(), which).iter().map(|w| Adam::new(w.len())).collect();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let batch = if cfg.batch_size == 0 { examples.len() } else { cfg.batch_size.min(examples.len()) };

    for epoch in 1..=cfg.epochs {
        if batch < examples.len() {
            let mut r = rng::stream(cfg.seed, &[0x7a1, epoch as u64]);
            order.shuffle(&mut r);
        }
        for chunk in order.chunks(batch) {
            let mb: Vec<Example> = chunk
                .iter()
                .map(|&k| Example {
                    x: examples[k].x,
                    i: examples[k].i,
                    t: examples[k].t,
                    c: examples[k].c,
                })
                .collect();
            let (_, g) = loss_and_grad(&p, &mb, which)?;
            let gs = grad_groups(&g, which);
            for ((w, gv), adam) in groups(&mut p, which).into_iter().zip(gs).zip(adams.iter_mut()) {
                match cfg.optimizer {
                    Optimizer::Adam => adam.step(w, gv, cfg.learning_rate),
                    Optimizer::Sgd => w.iter_mut().zip(gv).for_each(|(wk, gk)| *wk -= cfg.learning_rate * gk),
                }
            }
        }
        let (loss, _) = loss_and_grad(&p, &examples, which)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
        trace.push((epoch, loss));
        if loss < best.2 {
            best = (p.clone(), epoch, loss);
        }
    }
    Ok(TrainOutcome {
        params: best.0,
        trace,
        best_epoch: best.1,
        best_loss: best.2,
    })
}

/// Stage I: fits θ and φ on the representation loss from a seeded
/// initialization.
pub fn train_stage1(set: &TrainingSet, cfg: &TrainConfig) -> Result<TrainOutcome> {
    set.validate()?;
    cfg.validate(Stage::I)?;
    let (nx, ni, nd, nc) = set.dims();
    let init = EstimatorParams::init(nx, ni, cfg.hidden, nd, nc, cfg.seed)?;
    run(set, init, cfg, Which::Rep)
}

/// Stage I from given parameters (ψ is carried through untouched).
pub fn train_stage1_from(set: &TrainingSet, init: EstimatorParams, cfg: &TrainConfig) -> Result<TrainOutcome> {
    set.validate()?;
    cfg.validate(Stage::I)?;
    check_dims(set, &init)?;
    run(set, init, cfg, Which::Rep)
}

/// Stage II: θ is frozen, ψ is fitted on the quantification loss.
pub fn train_stage2(set: &TrainingSet, frozen: EstimatorParams, cfg: &TrainConfig) -> Result<TrainOutcome> {
    set.validate()?;
    cfg.validate(Stage::II)?;
    check_dims(set, &frozen)?;
    let digest = frozen.theta_digest();
    let out = run(set, frozen, cfg, Which::Qt { squared: cfg.squared_qt })?;
    if out.params.theta_digest() != digest {
        return Err(Error::Parameter("encoder weights changed during stage II".into()));
    }
    Ok(out)
}

fn check_dims(set: &TrainingSet, p: &EstimatorParams) -> Result<()> {
    p.validate()?;
    let (nx, ni, nd, nc) = set.dims();
    if (nx, ni, nd, nc) != (p.n_x, p.n_i, p.n_desc, p.n_out) {
        return Err(Error::Shape(format!(
            "training set dims (X {nx}, I {ni}, t {nd}, c {nc}) do not match parameters (X {}, I {}, t {}, c {})",
            p.n_x, p.n_i, p.n_desc, p.n_out
        )));
    }
    Ok(())
}

/// Training-set predictions.
pub fn predict(set: &TrainingSet, p: &EstimatorParams) -> Result<Vec<Vec<f64>>> {
    set.rows.iter().map(|r| estimate(&r.x, &r.i, p)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Rep,
    Qt { squared: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// `max |analytic − numeric| / max(|analytic|, |numeric|, 1e-12)`.
    pub max_rel_error: f64,
    pub n_params: usize,
    /// Samples sitting on the kink of the un-squared norm, left out.
    pub excluded_samples: usize,
}

/// Fourth-order central difference of `f` along coordinate `k`.
fn central(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], k: usize, eps: f64) -> f64 {
    let mut y = x.to_vec();
    let mut at = |d: f64| {
        y[k] = x[k] + d;
        f(&y)
    };
    let (p1, m1, p2, m2) = (at(eps), at(-eps), at(2.0 * eps), at(-2.0 * eps));
    (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * eps)
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-12)
}

/// Compares a gradient with central differences of `f` at `x`.
pub fn grad_check_fn(mut f: impl FnMut(&[f64]) -> f64, grad: &[f64], x: &[f64], eps: f64) -> Result<f64> {
    check_eps(eps)?;
    if grad.len() != x.len() {
        return Err(Error::Shape(format!("{} gradient entries for {} parameters", grad.len(), x.len())));
    }
    let mut worst = 0.0f64;
    for (k, g) in grad.iter().enumerate() {
        worst = worst.max(rel_err(*g, central(&mut f, x, k, eps)));
    }
    Ok(worst)
}

fn check_eps(eps: f64) -> Result<()> {
    if !(1e-7..=1e-4).contains(&eps) {
        return Err(Error::Parameter(format!("eps must be in [1e-7, 1e-4], got {eps}")));
    }
    Ok(())
}

/// Checks the analytic gradient of `which` with respect to every weight it
/// depends on (θ, φ for the representation loss; θ, ψ for the
/// quantification loss).
pub fn grad_check(p: &EstimatorParams, set: &TrainingSet, which: LossKind, eps: f64) -> Result<GradCheck> {
    check_eps(eps)?;
    set.validate()?;
    check_dims(set, p)?;
    let all = set.examples();
    let mut excluded = 0;
    let examples: Vec<Example> = match which {
        LossKind::Qt { squared: false } => {
            let mut keep = Vec::new();
            for e in all {
                let scale = 1.0 + e.c.iter().map(|v| v * v).sum::<f64>().sqrt();
                if qt_kink(&e, p, 1e3 * eps * scale)? {
                    excluded += 1;
                } else {
                    keep.push(e);
                }
            }
            keep
        }
        _ => all,
    };
    if examples.is_empty() {
        return Ok(GradCheck {
            max_rel_error: 0.0,
            n_params: 0,
            excluded_samples: excluded,
        });
    }
    let lk = match which {
        LossKind::Rep => Which::Rep,
        LossKind::Qt { squared } => Which::Qt { squared },
    };
    let (_, g) = loss_and_grad(p, &examples, lk)?;
    // (group index, analytic gradient) pairs: 0 = θ, 1 = φ, 2 = ψ.
    let checked: Vec<(usize, &Vec<f64>)> = match which {
        LossKind::Rep => vec![(0, &g.theta), (1, &g.phi)],
        LossKind::Qt { .. } => vec![(0, &g.theta), (2, &g.psi)],
    };
    let mut worst = 0.0f64;
    let mut n_params = 0;
    for (group, grad) in checked {
        let base = match group {
            0 => p.theta.clone(),
            1 => p.phi.clone(),
            _ => p.psi.clone(),
        };
        let mut f = |w: &[f64]| {
            let mut q = p.clone();
            match group {
                0 => q.theta = w.to_vec(),
                1 => q.phi = w.to_vec(),
                _ => q.psi = w.to_vec(),
            }
            loss_and_grad(&q, &examples, lk).map_or(f64::NAN, |(l, _)| l)
        };
        for (k, g) in grad.iter().enumerate().take(base.len()) {
            worst = worst.max(rel_err(*g, central(&mut f, &base, k, eps)));
            n_params += 1;
        }
    }
    Ok(GradCheck {
        max_rel_error: worst,
        n_params,
        excluded_samples: excluded,
    })
}

/// Two Gaussian blobs separated along `(1, 1)`, one-hot targets.
pub fn separable_toy_set(n: usize, seed: u64) -> TrainingSet {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.3).expect("finite sigma");
    let rows = (0..n)
        .map(|k| {
            let class = k % 2;
            let center = if class == 0 { -1.0 } else { 1.0 };
            let x = vec![center + noise.sample(&mut r), center + noise.sample(&mut r)];
            let t = if class == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] };
            TrainingRow {
                x,
                i: vec![],
                c: t.clone(),
                t,
            }
        })
        .collect();
    TrainingSet {
        species: vec!["a".into(), "b".into()],
        rows,
    }
}

/// Rows whose abundances are exactly `softplus(M·h + b)` with `h` the
/// frozen encoder output of `p`, so a head can fit them perfectly.
pub fn synthetic_linear_set(p: &EstimatorParams, n: usize, seed: u64, kind: TargetKind) -> Result<TrainingSet> {
    p.validate()?;
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let m: Vec<f64> = (0..p.n_out * (p.n_hidden + 1))
        .map(|_| r.random_range(-1.5..1.5))
        .collect();
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..p.n_x).map(|_| r.random_range(-1.0..1.0)).collect();
        let i: Vec<f64> = (0..p.n_i).map(|_| r.random_range(-1.0..1.0)).collect();
        let h = encode(&x, &i, p)?;
        let cols = p.n_hidden + 1;
        let c: Vec<f64> = (0..p.n_out)
            .map(|o| {
                let row = &m[o * cols..(o + 1) * cols];
                softplus(row[..p.n_hidden].iter().zip(&h).map(|(a, b)| a * b).sum::<f64>() + row[p.n_hidden])
            })
            .collect();
        let t = if p.n_desc == c.len() {
            target_distribution(&c, kind)
        } else {
            vec![1.0 / p.n_desc as f64; p.n_desc]
        };
        rows.push(TrainingRow { x, i, t, c });
    }
    Ok(TrainingSet {
        species: (0..p.n_out).map(|k| format!("s{k}")).collect(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn targets() {
        assert_eq!(target_distribution(&[1.0, 3.0], TargetKind::OneHot), vec![0.0, 1.0]);
        assert_eq!(target_distribution(&[1.0, 3.0], TargetKind::MassFraction), vec![0.25, 0.75]);
        assert_eq!(target_distribution(&[2.0, 2.0], TargetKind::OneHot), vec![1.0, 0.0]);
        assert_eq!(target_distribution(&[0.0, 0.0], TargetKind::OneHot), vec![0.5, 0.5]);
    }

    #[test]
    fn quadratic_grad_check() {
        // f(x) = Σ k·x_k², ∇f = 2k·x_k.
        let x = [0.3, -1.2, 2.5, 0.01];
        let grad: Vec<f64> = x.iter().enumerate().map(|(k, v)| 2.0 * (k + 1) as f64 * v).collect();
        let f = |y: &[f64]| y.iter().enumerate().map(|(k, v)| (k + 1) as f64 * v * v).sum::<f64>();
        assert!(grad_check_fn(f, &grad, &x, 1e-5).unwrap() <= 1e-9);
        assert!(grad_check_fn(f, &grad, &x, 1.0).is_err());
    }

    #[test]
    fn set_validation() {
        let mut s = separable_toy_set(4, 1);
        assert!(s.validate().is_ok());
        s.rows[1].t = vec![0.6, 0.6];
        assert!(matches!(s.validate(), Err(Error::Domain(_))));
        let mut s = separable_toy_set(4, 1);
        s.rows[2].x.push(1.0);
        assert!(matches!(s.validate(), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let set = separable_toy_set(20, 3);
        let mut cfg = TrainConfig::new(Stage::I);
        cfg.learning_rate = 0.0;
        cfg.epochs = 5;
        let init = EstimatorParams::init(2, 0, cfg.hidden, 2, 2, cfg.seed).unwrap();
        let out = train_stage1(&set, &cfg).unwrap();
        assert_eq!(out.params, init);
        let mut cfg2 = TrainConfig::new(Stage::II);
        cfg2.learning_rate = 0.0;
        cfg2.epochs = 5;
        let out2 = train_stage2(&set, init.clone(), &cfg2).unwrap();
        assert_eq!(out2.params, init);
    }

    #[test]
    fn wrong_stage_rejected() {
        let set = separable_toy_set(4, 3);
        assert!(train_stage1(&set, &TrainConfig::new(Stage::II)).is_err());
    }

    #[test]
    fn divergence_names_epoch() {
        let set = separable_toy_set(10, 3);
        let mut cfg = TrainConfig::new(Stage::II);
        cfg.optimizer = Optimizer::Sgd;
        cfg.learning_rate = 1e308;
        cfg.epochs = 3;
        let p = EstimatorParams::init(2, 0, 4, 2, 2, 0).unwrap();
        match train_stage2(&set, p, &cfg) {
            Err(Error::Divergence { epoch, .. }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
