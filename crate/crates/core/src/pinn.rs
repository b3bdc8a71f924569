//! Physics-informed loss and training loop for the transport equation.
//!
//! The network `S(x, t)` is trained to minimize
//!
//! ```text
//! w_r  * mean_r  (dS/dt + v_d g'(S) dS/dx)^2      residual points
//! + w_bc * mean_bc (S(0, t) - s_inj)^2            boundary points
//! + w_ic * mean_ic (S(x, 0) - s_wc)^2             initial points
//! ```
//!
//! where `g` is either the raw fractional flow (naive weak form, known to
//! fail on this problem) or the convex-hull flux (entropy-constrained).
//! Gradients flow exactly through `g'` via the flux curvature; outputs are
//! clamped to `[0, 1]` only at reporting time, never inside the loss.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flux::{FluxCurve, HullFlux, RockFluidParams};
use crate::moc::MocSolution;
use crate::net::{ArchSpec, MlpModel, ParamGrad};
use crate::optim::{Adam, AdamParams};

/// Which flux curve the residual differentiates through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FluxMode {
    Naive,
    Hull,
}

/// Space-time extent of the collocation domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub x_max: f64,
    pub t_max: f64,
}

impl Default for Domain {
    fn default() -> Self {
        Self {
            x_max: 2.0,
            t_max: 1.0,
        }
    }
}

/// Number of residual, boundary and initial collocation points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollocationCounts {
    pub n_r: usize,
    pub n_bc: usize,
    pub n_ic: usize,
}

impl Default for CollocationCounts {
    fn default() -> Self {
        Self {
            n_r: 10_000,
            n_bc: 200,
            n_ic: 200,
        }
    }
}

/// Sampled training points. Rows carry full input coordinates, so boundary
/// rows have `x = 0` and initial rows `t = 0`; parameterized sets append the
/// per-point velocity as a third column.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationSet {
    pub residual_pts: Array2<f64>,
    pub boundary_pts: Array2<f64>,
    pub initial_pts: Array2<f64>,
    pub seed: u64,
}

impl CollocationSet {
    pub fn input_width(&self) -> usize {
        self.residual_pts.ncols()
    }
}

/// Uniform pseudo-random collocation points, deterministic per seed.
pub fn sample_collocation(
    counts: &CollocationCounts,
    domain: &Domain,
    seed: u64,
) -> Result<CollocationSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_collocation_with_rng(counts, domain, seed, &mut rng)
}

pub(crate) fn sample_collocation_with_rng(
    counts: &CollocationCounts,
    domain: &Domain,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<CollocationSet> {
    if counts.n_r == 0 || counts.n_bc == 0 || counts.n_ic == 0 {
        return Err(Error::InvalidArgument(
            "collocation counts must all be positive".into(),
        ));
    }
    let mut residual = Array2::zeros((counts.n_r, 2));
    for mut row in residual.rows_mut() {
        row[0] = rng.random_range(0.0..domain.x_max);
        row[1] = rng.random_range(0.0..domain.t_max);
    }
    let mut boundary = Array2::zeros((counts.n_bc, 2));
    for mut row in boundary.rows_mut() {
        row[0] = 0.0;
        row[1] = rng.random_range(0.0..domain.t_max);
    }
    let mut initial = Array2::zeros((counts.n_ic, 2));
    for mut row in initial.rows_mut() {
        row[0] = rng.random_range(0.0..domain.x_max);
        row[1] = 0.0;
    }
    Ok(CollocationSet {
        residual_pts: residual,
        boundary_pts: boundary,
        initial_pts: initial,
        seed,
    })
}

/// Training hyperparameters. `seed` initializes the network,
/// `collocation_seed` drives point sampling (and resampling when
/// `resample_every > 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub flux_mode: FluxMode,
    pub iterations: usize,
    pub learning_rate: f64,
    /// Weights `(w_r, w_bc, w_ic)` of the loss terms.
    pub loss_weights: [f64; 3],
    pub counts: CollocationCounts,
    pub adam: AdamParams,
    /// Redraw collocation points every this many steps; 0 disables.
    pub resample_every: usize,
    pub seed: u64,
    pub collocation_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            flux_mode: FluxMode::Hull,
            iterations: 30_000,
            learning_rate: 1e-3,
            loss_weights: [1.0, 1.0, 1.0],
            counts: CollocationCounts::default(),
            adam: AdamParams::default(),
            resample_every: 0,
            seed: 42,
            collocation_seed: 4242,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::InvalidArgument("iterations must be >= 1".into()));
        }
        self.check_numerics()
    }

    fn check_numerics(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.loss_weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "loss_weights must be > 0, got {:?}",
                self.loss_weights
            )));
        }
        Ok(())
    }
}

/// Loss terms at one training step; `loss_total` is the weighted sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub loss_residual: f64,
    pub loss_bc: f64,
    pub loss_ic: f64,
    pub loss_total: f64,
}

/// Where the residual takes its velocity from: a shared scalar (the
/// deterministic problem) or a per-point input column (the parameterized one).
#[derive(Debug, Clone, Copy)]
pub(crate) enum VdSource {
    Scalar(f64),
    Column(usize),
}

pub(crate) struct LossParts {
    pub r: f64,
    pub bc: f64,
    pub ic: f64,
}

impl LossParts {
    pub fn total(&self, w: &[f64; 3]) -> f64 {
        w[0] * self.r + w[1] * self.bc + w[2] * self.ic
    }
}

/// Mean-squared-error batch over values only, against a constant target.
fn value_mse(
    model: &MlpModel,
    points: &Array2<f64>,
    target: f64,
    want_grad: bool,
) -> Result<(f64, Option<ParamGrad>)> {
    let pass = model.augmented_forward(points, &[])?;
    let values = pass.values();
    let n = values.len() as f64;
    let loss = values.iter().map(|&v| (v - target) * (v - target)).sum::<f64>() / n;
    if !want_grad {
        return Ok((loss, None));
    }
    let d_value = values.mapv(|v| 2.0 * (v - target) / n);
    let grad = model.backward(&pass, d_value.view(), &[]);
    Ok((loss, Some(grad)))
}

/// Mean-squared PDE residual and, optionally, its parameter gradient.
fn residual_mse(
    model: &MlpModel,
    points: &Array2<f64>,
    curve: &FluxCurve<'_>,
    vd: VdSource,
    want_grad: bool,
) -> Result<(f64, Option<ParamGrad>)> {
    let pass = model.augmented_forward(points, &[0, 1])?;
    let values = pass.values();
    let sx = pass.tangent(0);
    let st = pass.tangent(1);
    let n = values.len();
    let nf = n as f64;

    let mut loss = 0.0;
    let mut resid = Array1::zeros(n);
    let mut vds = Array1::zeros(n);
    let mut slopes = Array1::zeros(n);
    for i in 0..n {
        let v = match vd {
            VdSource::Scalar(v) => v,
            VdSource::Column(c) => points[[i, c]],
        };
        let slope = curve.slope(values[i]);
        let r = st[i] + v * slope * sx[i];
        loss += r * r;
        resid[i] = r;
        vds[i] = v;
        slopes[i] = slope;
    }
    loss /= nf;
    if !want_grad {
        return Ok((loss, None));
    }

    // dr/dS = v g''(S) Sx, dr/dSx = v g'(S), dr/dSt = 1.
    let mut d_value = Array1::zeros(n);
    let mut d_sx = Array1::zeros(n);
    let mut d_st = Array1::zeros(n);
    for i in 0..n {
        let scale = 2.0 * resid[i] / nf;
        d_value[i] = scale * vds[i] * curve.curvature(values[i]) * sx[i];
        d_sx[i] = scale * vds[i] * slopes[i];
        d_st[i] = scale;
    }
    let grad = model.backward(&pass, d_value.view(), &[d_sx, d_st]);
    Ok((loss, Some(grad)))
}

/// All three loss terms and the weighted parameter gradient.
pub(crate) fn loss_and_grad(
    model: &MlpModel,
    colloc: &CollocationSet,
    curve: &FluxCurve<'_>,
    vd: VdSource,
    s_inj: f64,
    s_wc: f64,
    weights: &[f64; 3],
    want_grad: bool,
) -> Result<(LossParts, Option<ParamGrad>)> {
    let (loss_r, grad_r) = residual_mse(model, &colloc.residual_pts, curve, vd, want_grad)?;
    let (loss_bc, grad_bc) = value_mse(model, &colloc.boundary_pts, s_inj, want_grad)?;
    let (loss_ic, grad_ic) = value_mse(model, &colloc.initial_pts, s_wc, want_grad)?;
    let parts = LossParts {
        r: loss_r,
        bc: loss_bc,
        ic: loss_ic,
    };
    if !want_grad {
        return Ok((parts, None));
    }
    let mut grad = ParamGrad::zeros_like(model);
    grad.scaled_add(weights[0], &grad_r.unwrap());
    grad.scaled_add(weights[1], &grad_bc.unwrap());
    grad.scaled_add(weights[2], &grad_ic.unwrap());
    Ok((parts, Some(grad)))
}

fn curve_for<'a>(mode: FluxMode, p: &'a RockFluidParams, hull: &'a HullFlux) -> FluxCurve<'a> {
    match mode {
        FluxMode::Naive => FluxCurve::Naive(p),
        FluxMode::Hull => FluxCurve::Hull(hull),
    }
}

/// PDE residual `dS/dt + v_d g'(S) dS/dx` of the network at one point.
pub fn pinn_residual(
    model: &MlpModel,
    x: f64,
    t: f64,
    mode: FluxMode,
    hull: &HullFlux,
    v_d: f64,
) -> Result<f64> {
    let pts = Array2::from_shape_vec((1, 2), vec![x, t])
        .map_err(|_| Error::DimensionMismatch("point shape".into()))?;
    let pass = model.augmented_forward(&pts, &[0, 1])?;
    let s = pass.values()[0];
    let curve = curve_for(mode, &hull.params, hull);
    let r = pass.tangent(1)[0] + v_d * curve.slope(s) * pass.tangent(0)[0];
    if !r.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    Ok(r)
}

/// The three mean-squared terms and their weighted total at the current
/// parameters.
pub fn total_loss(
    model: &MlpModel,
    colloc: &CollocationSet,
    cfg: &TrainConfig,
    p: &RockFluidParams,
    hull: &HullFlux,
    v_d: f64,
) -> Result<LossRecord> {
    let curve = curve_for(cfg.flux_mode, p, hull);
    let (parts, _) = loss_and_grad(
        model,
        colloc,
        &curve,
        VdSource::Scalar(v_d),
        p.s_inj,
        p.s_wc,
        &cfg.loss_weights,
        false,
    )?;
    let total = parts.total(&cfg.loss_weights);
    if !total.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    Ok(LossRecord {
        step: model.steps_trained as usize,
        loss_residual: parts.r,
        loss_bc: parts.bc,
        loss_ic: parts.ic,
        loss_total: total,
    })
}

/// Adam training on the deterministic problem. Losses are recorded every
/// 100 steps plus once after the final update; `sink` sees each record as it
/// is produced, so partial histories survive a divergence abort.
pub fn train_with_sink(
    cfg: &TrainConfig,
    p: &RockFluidParams,
    v_d: f64,
    arch: &ArchSpec,
    domain: &Domain,
    sink: &mut dyn FnMut(&LossRecord),
) -> Result<(MlpModel, Vec<LossRecord>)> {
    p.validate()?;
    arch.validate()?;
    if arch.layer_sizes[0] != 2 {
        return Err(Error::DimensionMismatch(format!(
            "deterministic training needs input width 2, got {}",
            arch.layer_sizes[0]
        )));
    }
    if !(v_d > 0.0) {
        return Err(Error::InvalidArgument(format!("v_d must be > 0, got {v_d}")));
    }
    cfg.check_numerics()?;
    let hull = HullFlux::build(p, 1e-12)?;
    let curve = curve_for(cfg.flux_mode, p, &hull);

    let mut colloc_rng = ChaCha8Rng::seed_from_u64(cfg.collocation_seed);
    let mut colloc =
        sample_collocation_with_rng(&cfg.counts, domain, cfg.collocation_seed, &mut colloc_rng)?;

    let mut model = MlpModel::xavier(arch, cfg.seed)?;
    let mut adam = Adam::new(model.param_count(), cfg.learning_rate, cfg.adam);
    let mut theta = model.flat_params();
    let mut records = Vec::new();

    let mut record = |step: usize,
                      parts: &LossParts,
                      records: &mut Vec<LossRecord>,
                      sink: &mut dyn FnMut(&LossRecord)| {
        let rec = LossRecord {
            step,
            loss_residual: parts.r,
            loss_bc: parts.bc,
            loss_ic: parts.ic,
            loss_total: parts.total(&cfg.loss_weights),
        };
        sink(&rec);
        records.push(rec);
    };

    for step in 0..cfg.iterations {
        if cfg.resample_every > 0 && step > 0 && step % cfg.resample_every == 0 {
            colloc = sample_collocation_with_rng(
                &cfg.counts,
                domain,
                cfg.collocation_seed,
                &mut colloc_rng,
            )?;
        }
        let (parts, grad) = match loss_and_grad(
            &model,
            &colloc,
            &curve,
            VdSource::Scalar(v_d),
            p.s_inj,
            p.s_wc,
            &cfg.loss_weights,
            true,
        ) {
            Ok(ok) => ok,
            Err(Error::NonFiniteLoss) => return Err(Error::Divergence { step }),
            Err(e) => return Err(e),
        };
        if !parts.total(&cfg.loss_weights).is_finite() {
            return Err(Error::Divergence { step });
        }
        if step % 100 == 0 {
            record(step, &parts, &mut records, sink);
        }
        adam.step(&mut theta, &grad.unwrap().to_flat());
        model.set_flat_params(&theta)?;
        model.steps_trained += 1;
    }

    // Closing record at the post-update parameters.
    let (parts, _) = match loss_and_grad(
        &model,
        &colloc,
        &curve,
        VdSource::Scalar(v_d),
        p.s_inj,
        p.s_wc,
        &cfg.loss_weights,
        false,
    ) {
        Ok(ok) => ok,
        Err(Error::NonFiniteLoss) => {
            return Err(Error::Divergence {
                step: cfg.iterations,
            })
        }
        Err(e) => return Err(e),
    };
    record(cfg.iterations, &parts, &mut records, sink);

    Ok((model, records))
}

/// [`train_with_sink`] without a progress observer.
pub fn train(
    cfg: &TrainConfig,
    p: &RockFluidParams,
    v_d: f64,
    arch: &ArchSpec,
    domain: &Domain,
) -> Result<(MlpModel, Vec<LossRecord>)> {
    train_with_sink(cfg, p, v_d, arch, domain, &mut |_| {})
}

/// Network profile on a uniform grid at time `t`, clamped to `[0, 1]`
/// (reporting-time clamp only).
pub fn eval_profile(model: &MlpModel, t: f64, x_max: f64, nx: usize) -> (Vec<f64>, Vec<f64>) {
    let xs: Vec<f64> = (0..nx).map(|i| x_max * i as f64 / (nx - 1) as f64).collect();
    let mut pts = Array2::zeros((nx, 2));
    for (i, &x) in xs.iter().enumerate() {
        pts[[i, 0]] = x;
        pts[[i, 1]] = t;
    }
    let ss = model
        .forward_batch(&pts)
        .iter()
        .map(|&v| v.clamp(0.0, 1.0))
        .collect();
    (xs, ss)
}

/// Root-mean-square distance between the (clamped) network profile and the
/// analytical solution on a uniform `nx`-point grid at time `t`.
pub fn l2_error(model: &MlpModel, sol: &MocSolution, t: f64, x_max: f64, nx: usize) -> f64 {
    let (xs, ss) = eval_profile(model, t, x_max, nx);
    let mut sum = 0.0;
    for (x, s) in xs.iter().zip(&ss) {
        let d = s - sol.eval(*x, t);
        sum += d * d;
    }
    (sum / nx as f64).sqrt()
}

/// [`l2_error`] normalized by the RMS of the analytical profile.
pub fn relative_l2_error(model: &MlpModel, sol: &MocSolution, t: f64, x_max: f64, nx: usize) -> f64 {
    let (xs, ss) = eval_profile(model, t, x_max, nx);
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, s) in xs.iter().zip(&ss) {
        let exact = sol.eval(*x, t);
        num += (s - exact) * (s - exact);
        den += exact * exact;
    }
    (num / den).sqrt()
}

/// Fractional decrease of the total loss over the last sixth of training;
/// small values indicate the plateau the naive weak form gets stuck on.
pub fn plateau_decrease(records: &[LossRecord]) -> f64 {
    let last = match records.last() {
        Some(r) => r,
        None => return 0.0,
    };
    let cutoff = last.step.saturating_sub(last.step / 6);
    let at_cutoff = records
        .iter()
        .find(|r| r.step >= cutoff)
        .unwrap_or(last)
        .loss_total;
    if at_cutoff <= 0.0 {
        return 0.0;
    }
    (at_cutoff - last.loss_total) / at_cutoff
}
