//! Diffusion baseline: a DDPM noise-prediction model over relative trajectories,
//! conditioned on `x_0`, with optional cost guidance at sampling time.

use std::time::Instant;

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, CheckpointManifest, ModelKind, CHECKPOINT_MAGIC};
use crate::cost::{cost_gradient, CostBox, CostParams};
use crate::dataset::OfflineDataset;
use crate::drift::{to_absolute, to_relative, FlatTraj};
use crate::error::{Error, Result};
use crate::nn::{Activation, AdamState, Mlp, NormalizationStats};
use crate::planner::TrajectorySampler;
use crate::rng::{self, gaussian, SimRng};
use crate::trainer::{dataset_cost_scale, EpochRecord, TrainLog};
use crate::trajectory::Layout;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DdpmConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub hidden: Vec<usize>,
    /// Sinusoidal time features fed to the denoiser (even).
    pub time_features: usize,
    /// Bound on the denoised estimate during sampling, in normalized units.
    pub clip_denoised: f64,
    pub guidance_scale: f64,
    /// Set from the run seed, not read from config files.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for DdpmConfig {
    fn default() -> Self {
        Self {
            steps: 64,
            beta_start: 1e-4 * 1000.0 / 64.0,
            beta_end: 0.02 * 1000.0 / 64.0,
            epochs: 500,
            batch_size: 64,
            lr: 1e-3,
            hidden: vec![256, 256, 256],
            time_features: 8,
            clip_denoised: 5.0,
            guidance_scale: 0.01,
            seed: 0,
        }
    }
}

impl DdpmConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidParam(m));
        if self.steps == 0 || self.epochs == 0 || self.batch_size == 0 {
            return fail("ddpm.steps, epochs and batch_size must be >= 1".into());
        }
        if self.time_features == 0 || !self.time_features.is_multiple_of(2) {
            return fail("ddpm.time_features must be a positive even number".into());
        }
        if !(self.clip_denoised > 0.0) {
            return fail("ddpm.clip_denoised must be positive".into());
        }
        if !(self.lr > 0.0) || !self.guidance_scale.is_finite() || self.guidance_scale < 0.0 {
            return fail("ddpm.lr must be positive and guidance_scale finite and >= 0".into());
        }
        NoiseSchedule::linear(self.beta_start, self.beta_end, self.steps).map(|_| ())
    }
}

/// `β_1..β_S` with `ᾱ_0 = 1` and `ᾱ_t = Π_{s≤t}(1 − β_s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub betas: Vec<f64>,
    pub alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    pub fn linear(start: f64, end: f64, steps: usize) -> Result<Self> {
        let betas = if steps == 1 {
            vec![end]
        } else {
            (0..steps)
                .map(|i| start + (end - start) * i as f64 / (steps - 1) as f64)
                .collect()
        };
        Self::from_betas(betas)
    }

    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() || betas.iter().any(|b| !(*b > 0.0 && *b < 1.0)) {
            return Err(Error::InvalidParam(
                "noise schedule needs 0 < β_t < 1".into(),
            ));
        }
        if betas.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParam(
                "noise schedule must be non-decreasing".into(),
            ));
        }
        let mut alpha_bars = vec![1.0];
        for b in &betas {
            let last = *alpha_bars.last().expect("nonempty");
            alpha_bars.push(last * (1.0 - b));
        }
        let last = alpha_bars[betas.len()];
        if last > 0.01 {
            return Err(Error::InvalidParam(format!(
                "noise schedule leaves too much signal: final cumulative alpha {last:.4} > 0.01"
            )));
        }
        Ok(Self { betas, alpha_bars })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    /// Posterior variance of `z_{t-1}` given `z_t` and `z_0`.
    pub fn posterior_variance(&self, t: usize) -> f64 {
        self.betas[t - 1] * (1.0 - self.alpha_bars[t - 1]) / (1.0 - self.alpha_bars[t])
    }

    /// `√ᾱ_t z_0 + √(1−ᾱ_t) ε`.
    pub fn noise(&self, z0: &[f64], eps: &[f64], t: usize) -> Vec<f64> {
        let (a, s) = (self.alpha_bars[t].sqrt(), (1.0 - self.alpha_bars[t]).sqrt());
        z0.iter().zip(eps).map(|(z, e)| a * z + s * e).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceConfig {
    pub scale: f64,
    pub omega: CostParams,
    pub fix_initial: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DdpmModel {
    pub net: Mlp,
    pub schedule: NoiseSchedule,
    pub layout: Layout,
    pub time_features: usize,
    pub clip_denoised: f64,
    /// `cond_*` covers `x_0`, `out_*` the relative trajectory.
    pub norm: NormalizationStats,
    pub cost_scale: f64,
}

fn time_embedding(t: usize, n: usize) -> impl Iterator<Item = f64> {
    let half = n / 2;
    (0..half).flat_map(move |j| {
        let w = t as f64 / 10_000f64.powf(j as f64 / half as f64);
        [w.sin(), w.cos()]
    })
}

impl DdpmModel {
    pub fn out_dim(&self) -> usize {
        self.layout.len()
    }

    fn input_dim(out_dim: usize, time_features: usize, d_x: usize) -> usize {
        out_dim + time_features + d_x
    }

    /// Denoiser input rows `[z_t | time features | normalized x_0]`.
    fn input_matrix(&self, z: &Array2<f64>, ts: &[usize], x0s: &[&[f64]]) -> Array2<f64> {
        let d = self.out_dim();
        let mut input = Array2::<f64>::zeros((z.nrows(), self.net.input_dim()));
        for (row, (&t, x0)) in ts.iter().zip(x0s).enumerate() {
            let mut r = input.row_mut(row);
            r.slice_mut(ndarray::s![..d]).assign(&z.row(row));
            let feats = time_embedding(t, self.time_features).chain(self.norm.normalize_cond(x0));
            for (slot, v) in r.iter_mut().skip(d).zip(feats) {
                *slot = v;
            }
        }
        input
    }

    /// Predicted noise for each row of `z` (normalized units).
    pub fn predict_noise(
        &self,
        z: &Array2<f64>,
        ts: &[usize],
        x0s: &[&[f64]],
    ) -> Result<Array2<f64>> {
        self.net.forward(self.input_matrix(z, ts, x0s).view())
    }

    pub fn to_checkpoint(&self, cfg: &DdpmConfig, epochs_done: usize) -> Checkpoint {
        Checkpoint {
            manifest: CheckpointManifest {
                magic: String::from_utf8_lossy(CHECKPOINT_MAGIC).into_owned(),
                kind: ModelKind::Ddpm,
                layer_dims: self.net.dims().to_vec(),
                activation: self.net.activation(),
                d_eps: self.time_features,
                cond_dim: self.layout.d_x,
                out_dim: self.out_dim(),
                horizon: self.layout.horizon,
                d_x: self.layout.d_x,
                d_u: self.layout.d_u,
                cost_scale: self.cost_scale,
                seed: cfg.seed,
                epochs_done,
                param_count: self.net.num_params(),
                norm: self.norm.clone(),
                train: toml::Table::try_from(cfg).expect("ddpm config serializes"),
                optimizer: None,
                ddpm_betas: Some(self.schedule.betas.clone()),
            },
            params: self.net.params().to_vec(),
            moments: None,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let m = &ck.manifest;
        if m.kind != ModelKind::Ddpm {
            return Err(Error::InvalidParam(format!(
                "checkpoint holds a {} model, not ddpm",
                m.kind.as_str()
            )));
        }
        let betas = m
            .ddpm_betas
            .clone()
            .ok_or_else(|| Error::Config("ddpm checkpoint has no noise schedule".into()))?;
        let layout = Layout::new(m.horizon, m.d_x, m.d_u);
        let net = Mlp::from_params(m.layer_dims.clone(), m.activation, ck.params.clone())?;
        if net.input_dim() != Self::input_dim(layout.len(), m.d_eps, m.d_x)
            || net.output_dim() != layout.len()
        {
            return Err(Error::Shape(
                "ddpm network dims do not match the manifest".into(),
            ));
        }
        let cfg: DdpmConfig = m
            .train
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("stored ddpm config: {e}")))?;
        Ok(Self {
            clip_denoised: cfg.clip_denoised,
            net,
            schedule: NoiseSchedule::from_betas(betas)?,
            layout,
            time_features: m.d_eps,
            norm: m.norm.clone(),
            cost_scale: m.cost_scale,
        })
    }
}

/// Train the noise-prediction objective on every dataset trajectory.
pub fn ddpm_train(
    ds: &OfflineDataset,
    cost_box: &CostBox,
    cfg: &DdpmConfig,
) -> Result<(DdpmModel, TrainLog)> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::InvalidParam(
            "cannot train on an empty dataset".into(),
        ));
    }
    let layout = ds.layout();
    let rel: Vec<Vec<f64>> = ds.trajectories.iter().map(|t| to_relative(t).vec).collect();
    let norm = NormalizationStats::from_samples(&ds.initial_states, &rel, layout.d_x, layout.len());
    let z0s: Vec<Vec<f64>> = rel.iter().map(|r| norm.normalize_out(r)).collect();

    let mut dims = vec![DdpmModel::input_dim(
        layout.len(),
        cfg.time_features,
        layout.d_x,
    )];
    dims.extend(&cfg.hidden);
    dims.push(layout.len());
    let net = Mlp::new(dims, Activation::Silu, &mut rng::stream(cfg.seed, u64::MAX))?;
    let mut model = DdpmModel {
        net,
        schedule: NoiseSchedule::linear(cfg.beta_start, cfg.beta_end, cfg.steps)?,
        layout,
        time_features: cfg.time_features,
        clip_denoised: cfg.clip_denoised,
        norm,
        cost_scale: dataset_cost_scale(ds, cost_box)?,
    };
    let mut adam = AdamState::new(model.net.num_params(), cfg.lr);
    let steps_per_epoch = ds.len().div_ceil(cfg.batch_size);
    let d = layout.len();
    let mut log = TrainLog::default();

    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let mut epoch_loss = 0.0;
        for k in 0..steps_per_epoch {
            let step = (epoch * steps_per_epoch + k) as u64;
            let mut r = rng::substream(cfg.seed, step, 0);
            let b = cfg.batch_size;
            let mut z = Array2::<f64>::zeros((b, d));
            let mut eps = Array2::<f64>::zeros((b, d));
            let mut ts = Vec::with_capacity(b);
            let mut idx = Vec::with_capacity(b);
            for row in 0..b {
                let i = r.random_range(0..ds.len());
                let t = r.random_range(1..=cfg.steps);
                let e = gaussian(&mut r, d);
                z.row_mut(row)
                    .assign(&ArrayView1::from(&model.schedule.noise(&z0s[i], &e, t)));
                eps.row_mut(row).assign(&ArrayView1::from(&e));
                ts.push(t);
                idx.push(i);
            }
            let x0s: Vec<&[f64]> = idx
                .iter()
                .map(|&i| ds.initial_states[i].as_slice())
                .collect();
            let input = model.input_matrix(&z, &ts, &x0s);
            let cache = model.net.forward_cached(input.view())?;
            let resid = cache.output() - &eps;
            let loss = resid.iter().map(|v| v * v).sum::<f64>() / b as f64;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite diffusion loss at step {step}"
                )));
            }
            let grads = model.net.backward(&cache, resid * (2.0 / b as f64));
            adam.step(model.net.params_mut(), &grads)?;
            epoch_loss += loss;
        }
        log.epochs.push(EpochRecord {
            epoch,
            loss: epoch_loss / steps_per_epoch as f64,
            drift_norm: 0.0,
            beta: 0.0,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok((model, log))
}

/// Ancestral sampling of `m` relative trajectories from `x0`.
///
/// Each candidate runs on its own stream seeded from `rng` in order, so the
/// first `m` candidates of a larger batch are unchanged.
pub fn ddpm_sample_batch(
    model: &DdpmModel,
    x0: &[f64],
    m: usize,
    rng: &mut SimRng,
    guidance: Option<&GuidanceConfig>,
) -> Result<Vec<Vec<f64>>> {
    let d = model.out_dim();
    let mut streams: Vec<SimRng> = (0..m)
        .map(|_| SimRng::seed_from_u64(rng.random()))
        .collect();
    let mut z = Array2::<f64>::zeros((m, d));
    for (row, r) in streams.iter_mut().enumerate() {
        z.row_mut(row).assign(&ArrayView1::from(&gaussian(r, d)));
    }
    let sched = &model.schedule;
    let x0s = vec![x0; m];
    let guidance = guidance.filter(|g| g.scale != 0.0);
    let clip = model.clip_denoised;
    let mut z0_hat = vec![0.0; d];
    for t in (1..=sched.steps()).rev() {
        let eps_hat = model.predict_noise(&z, &vec![t; m], &x0s)?;
        let (beta, ab, ab_prev) = (
            sched.betas[t - 1],
            sched.alpha_bars[t],
            sched.alpha_bars[t - 1],
        );
        let var = sched.posterior_variance(t);
        let c0 = ab_prev.sqrt() * beta / (1.0 - ab);
        let ct = (1.0 - beta).sqrt() * (1.0 - ab_prev) / (1.0 - ab);
        let mut mean = Array2::<f64>::zeros((m, d));
        for row in 0..m {
            for (j, slot) in z0_hat.iter_mut().enumerate() {
                let zt = z[[row, j]];
                *slot =
                    ((zt - (1.0 - ab).sqrt() * eps_hat[[row, j]]) / ab.sqrt()).clamp(-clip, clip);
                mean[[row, j]] = c0 * *slot + ct * zt;
            }
            if let Some(g) = guidance {
                let rel = model.norm.denormalize_out(ArrayView1::from(&z0_hat));
                let tau = to_absolute(&FlatTraj::relative(model.layout, rel)?, x0)?;
                let grad = cost_gradient(&tau, &g.omega, g.fix_initial)?;
                let k = g.scale * var / model.cost_scale;
                for (j, mu) in mean.row_mut(row).iter_mut().enumerate() {
                    *mu -= k * grad[j] * model.norm.out_std[j];
                }
            }
        }
        if t > 1 {
            let sd = var.sqrt();
            for (row, r) in streams.iter_mut().enumerate() {
                let xi = gaussian(r, d);
                for (mu, x) in mean.row_mut(row).iter_mut().zip(xi) {
                    *mu += sd * x;
                }
            }
        }
        z = mean;
    }
    let out: Vec<Vec<f64>> = z
        .rows()
        .into_iter()
        .map(|r| model.norm.denormalize_out(r))
        .collect();
    if out.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("diffusion sample is not finite".into()));
    }
    Ok(out)
}

pub fn ddpm_sample(
    model: &DdpmModel,
    x0: &[f64],
    rng: &mut SimRng,
    guidance: Option<&GuidanceConfig>,
) -> Result<Vec<f64>> {
    Ok(ddpm_sample_batch(model, x0, 1, rng, guidance)?.remove(0))
}

/// Diffusion model as a planner sampler; guidance uses the planner's `ω`.
pub struct DdpmSampler<'a> {
    pub model: &'a DdpmModel,
    /// `None` samples unguided.
    pub guidance_scale: Option<f64>,
}

impl TrajectorySampler for DdpmSampler<'_> {
    fn layout(&self) -> Layout {
        self.model.layout
    }

    fn sample(&self, x: &[f64], omega: &CostParams, rng: &mut SimRng) -> Result<Vec<f64>> {
        Ok(self.sample_batch(x, omega, 1, rng)?.remove(0))
    }

    fn sample_batch(
        &self,
        x: &[f64],
        omega: &CostParams,
        m: usize,
        rng: &mut SimRng,
    ) -> Result<Vec<Vec<f64>>> {
        let guidance = self.guidance_scale.map(|scale| GuidanceConfig {
            scale,
            omega: omega.clone(),
            fix_initial: true,
        });
        ddpm_sample_batch(self.model, x, m, rng, guidance.as_ref())
    }
}
