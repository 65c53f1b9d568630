//! Training loop for the tilted drifting generator.
//!
//! Each step samples `B` queries `(x_0, ω)` with `x_0` drawn from the dataset's
//! initial states and `ω` uniform on the cost box, retrieves and relabels a
//! positive batch per query, draws `M` negatives from the current generator,
//! and takes one Adam step on the mean constant-target loss.
//!
//! Drift fields and the loss live in the generator's normalized output space.
//! Relabeled costs are divided by `cost_scale` before tilting, so `β` is
//! comparable across cost parameters.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, CheckpointManifest, ModelKind, CHECKPOINT_MAGIC};
use crate::cost::{cost, sample_omega, CostBox, CostParams};
use crate::dataset::{knn_prior, LocalPrior, OfflineDataset};
use crate::drift::{self, sq_dist, DriftBatch};
use crate::error::{Error, Result};
use crate::nn::{Activation, AdamState, GeneratorModel, Mlp, NormalizationStats};
use crate::rng::{self, gaussian};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaSchedule {
    Linear,
    Constant,
}

/// Kernel temperature: per-batch median heuristic or a fixed value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Temperature {
    Fixed(f64),
    Rule(TemperatureRule),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemperatureRule {
    Median,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_queries: usize,
    pub positives: usize,
    pub negatives: usize,
    pub lr: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    pub beta_schedule: BetaSchedule,
    /// Neighbors retrieved into the local prior.
    pub knn_k: usize,
    pub hidden: Vec<usize>,
    pub d_eps: usize,
    pub temperature: Temperature,
    /// Set from the run seed, not read from config files.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_queries: 16,
            positives: 32,
            negatives: 16,
            lr: 1e-3,
            beta_min: 0.0,
            beta_max: 1.0,
            beta_schedule: BetaSchedule::Linear,
            knn_k: 64,
            hidden: vec![256, 256, 256],
            d_eps: 32,
            temperature: Temperature::Rule(TemperatureRule::Median),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidParam(m.to_string()));
        if self.epochs == 0 {
            return fail("train.epochs must be >= 1");
        }
        if self.negatives < 2 {
            return fail("train.negatives must be >= 2");
        }
        if self.positives == 0 || self.batch_queries == 0 || self.knn_k == 0 || self.d_eps == 0 {
            return fail("train.positives, batch_queries, knn_k and d_eps must be >= 1");
        }
        if !(self.beta_min >= 0.0 && self.beta_min <= self.beta_max) {
            return fail("need 0 <= beta_min <= beta_max");
        }
        if !(self.lr > 0.0) {
            return fail("train.lr must be positive");
        }
        if let Temperature::Fixed(t) = self.temperature {
            if !(t > 0.0) {
                return fail("fixed temperature must be positive");
            }
        }
        Ok(())
    }
}

/// Inverse temperature at `epoch` (0-based).
pub fn beta_at(cfg: &TrainConfig, epoch: usize) -> f64 {
    match cfg.beta_schedule {
        BetaSchedule::Constant => cfg.beta_max,
        BetaSchedule::Linear => {
            if cfg.epochs <= 1 {
                cfg.beta_max
            } else {
                cfg.beta_min
                    + (cfg.beta_max - cfg.beta_min) * epoch as f64 / (cfg.epochs - 1) as f64
            }
        }
    }
}

/// What the generator is conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    /// `(x_0, q, r)`
    Query,
    /// `x_0` only.
    InitialState,
}

impl Conditioning {
    pub fn for_kind(kind: ModelKind) -> Self {
        match kind {
            ModelKind::DriftingPrior => Conditioning::InitialState,
            _ => Conditioning::Query,
        }
    }

    pub fn dim(self, d_x: usize, d_u: usize) -> usize {
        match self {
            Conditioning::Query => 2 * d_x + d_u,
            Conditioning::InitialState => d_x,
        }
    }

    pub fn vector(self, x0: &[f64], omega: &CostParams) -> Vec<f64> {
        match self {
            Conditioning::Query => x0.iter().chain(&omega.q).chain(&omega.r).copied().collect(),
            Conditioning::InitialState => x0.to_vec(),
        }
    }
}

/// Trained generator plus what is needed to query it.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftingModel {
    pub generator: GeneratorModel,
    pub kind: ModelKind,
    pub cost_scale: f64,
}

impl DriftingModel {
    pub fn conditioning(&self) -> Conditioning {
        Conditioning::for_kind(self.kind)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let m = &ck.manifest;
        if m.kind == ModelKind::Ddpm {
            return Err(Error::InvalidParam(
                "checkpoint holds a diffusion model".into(),
            ));
        }
        let net = Mlp::from_params(m.layer_dims.clone(), m.activation, ck.params.clone())?;
        let layout = crate::trajectory::Layout::new(m.horizon, m.d_x, m.d_u);
        let generator = GeneratorModel::new(net, m.d_eps, m.cond_dim, layout, m.norm.clone())?;
        Ok(Self {
            generator,
            kind: m.kind,
            cost_scale: m.cost_scale,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub drift_norm: f64,
    pub beta: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch", "loss", "drift_norm", "beta", "seconds"])?;
        for r in &self.epochs {
            w.write_record([
                r.epoch.to_string(),
                r.loss.to_string(),
                r.drift_norm.to_string(),
                r.beta.to_string(),
                r.seconds.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Moving average over `window` epochs.
    pub fn smoothed_loss(&self, window: usize) -> Vec<f64> {
        let losses: Vec<f64> = self.epochs.iter().map(|r| r.loss).collect();
        losses
            .windows(window.max(1))
            .map(|w| w.iter().sum::<f64>() / w.len() as f64)
            .collect()
    }
}

/// Statistics of one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    /// Mean `‖V‖²` over the step's negatives, equal to `loss` by construction.
    pub mean_sq_drift: f64,
    pub mean_drift_norm: f64,
}

/// Cost normalizer: median relabeled cost of the dataset at the box center.
pub fn dataset_cost_scale(ds: &OfflineDataset, cost_box: &CostBox) -> Result<f64> {
    let omega = cost_box.center(ds.meta.d_x, ds.meta.d_u);
    let mut costs = ds
        .trajectories
        .iter()
        .map(|t| cost(t, &omega))
        .collect::<Result<Vec<_>>>()?;
    costs.sort_by(f64::total_cmp);
    let n = costs.len();
    let med = if n % 2 == 1 {
        costs[n / 2]
    } else {
        0.5 * (costs[n / 2 - 1] + costs[n / 2])
    };
    Ok(if med > 0.0 { med } else { 1.0 })
}

pub struct Trainer<'a> {
    ds: &'a OfflineDataset,
    cost_box: CostBox,
    cfg: TrainConfig,
    kind: ModelKind,
    model: GeneratorModel,
    adam: AdamState,
    cost_scale: f64,
    epochs_done: usize,
    priors: Vec<LocalPrior>,
    /// Normalized relative flats of every dataset trajectory.
    positives: Vec<Vec<f64>>,
    log: TrainLog,
    failure_dump: Option<PathBuf>,
}

impl<'a> Trainer<'a> {
    pub fn new(
        ds: &'a OfflineDataset,
        cost_box: CostBox,
        cfg: TrainConfig,
        kind: ModelKind,
    ) -> Result<Self> {
        if kind == ModelKind::Ddpm {
            return Err(Error::InvalidParam(
                "use the diffusion trainer for ddpm models".into(),
            ));
        }
        cfg.validate()?;
        cost_box.validate()?;
        if ds.is_empty() {
            return Err(Error::InvalidParam(
                "cannot train on an empty dataset".into(),
            ));
        }
        let layout = ds.layout();
        let cond = Conditioning::for_kind(kind);
        let cond_dim = cond.dim(layout.d_x, layout.d_u);

        let rel: Vec<Vec<f64>> = ds
            .trajectories
            .iter()
            .map(|t| drift::to_relative(t).vec)
            .collect();
        let mut norm = NormalizationStats::from_samples(&[], &rel, 0, layout.len());
        let (mut cm, mut cs) = (Vec::new(), Vec::new());
        let xs = NormalizationStats::from_samples(&ds.initial_states, &[], layout.d_x, 0);
        cm.extend(&xs.cond_mean);
        cs.extend(&xs.cond_std);
        if cond == Conditioning::Query {
            let uni = |lo: f64, hi: f64| (0.5 * (lo + hi), ((hi - lo) / 12f64.sqrt()).max(1e-6));
            let (qm, qs) = uni(cost_box.q_min, cost_box.q_max);
            let (rm, rs) = uni(cost_box.r_min, cost_box.r_max);
            cm.extend(
                std::iter::repeat_n(qm, layout.d_x).chain(std::iter::repeat_n(rm, layout.d_u)),
            );
            cs.extend(
                std::iter::repeat_n(qs, layout.d_x).chain(std::iter::repeat_n(rs, layout.d_u)),
            );
        }
        norm.cond_mean = cm;
        norm.cond_std = cs;

        let mut dims = vec![cfg.d_eps + cond_dim];
        dims.extend(&cfg.hidden);
        dims.push(layout.len());
        let net = Mlp::new(dims, Activation::Silu, &mut rng::stream(cfg.seed, u64::MAX))?;
        let model = GeneratorModel::new(net, cfg.d_eps, cond_dim, layout, norm)?;
        let adam = AdamState::new(model.net.num_params(), cfg.lr);
        let cost_scale = dataset_cost_scale(ds, &cost_box)?;
        Self::assemble(ds, cost_box, cfg, kind, model, adam, cost_scale, 0)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        ds: &'a OfflineDataset,
        cost_box: CostBox,
        cfg: TrainConfig,
        kind: ModelKind,
        model: GeneratorModel,
        adam: AdamState,
        cost_scale: f64,
        epochs_done: usize,
    ) -> Result<Self> {
        let k = cfg.knn_k.min(ds.len());
        let priors = ds
            .initial_states
            .par_iter()
            .map(|x| knn_prior(ds, x, k))
            .collect::<Result<Vec<_>>>()?;
        let positives = ds
            .trajectories
            .iter()
            .map(|t| model.norm.normalize_out(&drift::to_relative(t).vec))
            .collect();
        Ok(Self {
            ds,
            cost_box,
            cfg,
            kind,
            model,
            adam,
            cost_scale,
            epochs_done,
            priors,
            positives,
            log: TrainLog::default(),
            failure_dump: None,
        })
    }

    /// Continue from a checkpoint written by [`Trainer::checkpoint`].
    pub fn resume(ds: &'a OfflineDataset, cost_box: CostBox, ck: &Checkpoint) -> Result<Self> {
        let m = &ck.manifest;
        let mut cfg: TrainConfig = m
            .train
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("stored train config: {e}")))?;
        cfg.seed = m.seed;
        if ds.layout() != crate::trajectory::Layout::new(m.horizon, m.d_x, m.d_u) {
            return Err(Error::Shape(format!(
                "checkpoint is for H={}, d_x={}, d_u={}; dataset has H={}, d_x={}, d_u={}",
                m.horizon, m.d_x, m.d_u, ds.meta.horizon, ds.meta.d_x, ds.meta.d_u
            )));
        }
        let model = DriftingModel::from_checkpoint(ck)?;
        let adam = ck.adam_state().ok_or_else(|| {
            Error::Config("checkpoint has no optimizer state to resume from".into())
        })?;
        Self::assemble(
            ds,
            cost_box,
            cfg,
            m.kind,
            model.generator,
            adam,
            m.cost_scale,
            m.epochs_done,
        )
    }

    /// Where to write a checkpoint if training hits a non-finite loss.
    pub fn with_failure_dump(mut self, path: impl Into<PathBuf>) -> Self {
        self.failure_dump = Some(path.into());
        self
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.ds.len().div_ceil(self.cfg.batch_queries)
    }

    pub fn model(&self) -> DriftingModel {
        DriftingModel {
            generator: self.model.clone(),
            kind: self.kind,
            cost_scale: self.cost_scale,
        }
    }

    fn beta(&self, epoch: usize) -> f64 {
        match self.kind {
            ModelKind::DriftingPrior => 0.0,
            _ => beta_at(&self.cfg, epoch),
        }
    }

    fn temperature(&self, positives: &[Vec<f64>]) -> f64 {
        match self.cfg.temperature {
            Temperature::Fixed(t) => t,
            Temperature::Rule(TemperatureRule::Median) => drift::median_temperature(positives),
        }
    }

    /// One optimizer step; `global_step` addresses the random streams.
    pub fn step(&mut self, global_step: u64, beta: f64) -> Result<StepStats> {
        let cfg = &self.cfg;
        let layout = self.model.layout;
        let cond_kind = Conditioning::for_kind(self.kind);
        let (b_count, m_count) = (cfg.batch_queries, cfg.negatives);

        let mut qrng = rng::substream(cfg.seed, global_step, 0);
        let queries: Vec<(usize, CostParams)> = (0..b_count)
            .map(|_| {
                let i = qrng.random_range(0..self.ds.len());
                let omega = sample_omega(&self.cost_box, layout.d_x, layout.d_u, &mut qrng);
                (i, omega)
            })
            .collect();

        let mut eps = Vec::with_capacity(b_count * m_count);
        let mut conds = Vec::with_capacity(b_count * m_count);
        let mut pos_batches = Vec::with_capacity(b_count);
        for (b, (i, omega)) in queries.iter().enumerate() {
            let mut r = rng::substream(cfg.seed, global_step, b as u64 + 1);
            let mut pos = Vec::with_capacity(cfg.positives);
            let mut costs = Vec::with_capacity(cfg.positives);
            for _ in 0..cfg.positives {
                let idx = self.priors[*i].draw(&mut r);
                pos.push(self.positives[idx].clone());
                costs.push(cost(&self.ds.trajectories[idx], omega)? / self.cost_scale);
            }
            pos_batches.push((pos, costs));
            let c = cond_kind.vector(&self.ds.initial_states[*i], omega);
            for _ in 0..m_count {
                eps.push(gaussian(&mut r, cfg.d_eps));
                conds.push(c.clone());
            }
        }

        let input = self.model.input_matrix(&eps, &conds)?;
        let cache = self.model.net.forward_cached(input.view())?;
        let out = cache.output();
        if out.iter().any(|v| !v.is_finite()) {
            return self.fail(global_step, "generator output");
        }

        let temps: Vec<f64> = pos_batches
            .iter()
            .map(|(p, _)| self.temperature(p))
            .collect();
        let per_query = pos_batches
            .into_par_iter()
            .zip(temps)
            .enumerate()
            .map(|(b, ((positives, costs), temperature))| {
                let negatives = (0..m_count)
                    .map(|j| out.row(b * m_count + j).to_vec())
                    .collect();
                let batch = DriftBatch {
                    positives,
                    costs,
                    negatives,
                    beta,
                    temperature,
                };
                drift::drift_targets(&batch)
            })
            .collect::<Result<Vec<_>>>()?;

        let n = b_count * m_count;
        let dim = layout.len();
        let mut d_out = Array2::<f64>::zeros((n, dim));
        let (mut sq_total, mut norm_total) = (0.0, 0.0);
        for (row, target) in per_query.iter().flatten().enumerate() {
            let o = out.row(row);
            let sq = sq_dist(o.as_slice().expect("row-major output"), target);
            sq_total += sq;
            norm_total += sq.sqrt();
            for k in 0..dim {
                d_out[[row, k]] = 2.0 * (o[k] - target[k]) / n as f64;
            }
        }
        let loss = sq_total / n as f64;
        if !loss.is_finite() {
            return self.fail(global_step, "loss");
        }
        let grads = self.model.net.backward(&cache, d_out);
        self.adam.step(self.model.net.params_mut(), &grads)?;
        Ok(StepStats {
            loss,
            mean_sq_drift: loss,
            mean_drift_norm: norm_total / n as f64,
        })
    }

    fn fail<T>(&self, step: u64, what: &str) -> Result<T> {
        if let Some(path) = &self.failure_dump {
            if let Err(e) = self.checkpoint().save(path) {
                log::error!("could not dump checkpoint after numeric failure: {e}");
            }
        }
        Err(Error::Numeric(format!("non-finite {what} at step {step}")))
    }

    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        let epoch = self.epochs_done;
        let beta = self.beta(epoch);
        let start = Instant::now();
        let steps = self.steps_per_epoch();
        let (mut loss, mut norm) = (0.0, 0.0);
        for k in 0..steps {
            let s = self.step((epoch * steps + k) as u64, beta)?;
            loss += s.loss;
            norm += s.mean_drift_norm;
        }
        self.epochs_done += 1;
        let rec = EpochRecord {
            epoch,
            loss: loss / steps as f64,
            drift_norm: norm / steps as f64,
            beta,
            seconds: start.elapsed().as_secs_f64(),
        };
        log::debug!(
            "epoch {epoch}: loss {:.5} drift {:.5} beta {beta:.3}",
            rec.loss,
            rec.drift_norm
        );
        self.log.epochs.push(rec.clone());
        Ok(rec)
    }

    /// Train until `cfg.epochs` epochs are done.
    pub fn run(&mut self) -> Result<()> {
        while self.epochs_done < self.cfg.epochs {
            self.run_epoch()?;
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let layout = self.model.layout;
        let mut optimizer = self.adam.clone();
        let moments = (
            std::mem::take(&mut optimizer.m),
            std::mem::take(&mut optimizer.v),
        );
        let train = toml::Table::try_from(&self.cfg).expect("train config serializes");
        Checkpoint {
            manifest: CheckpointManifest {
                magic: String::from_utf8_lossy(CHECKPOINT_MAGIC).into_owned(),
                kind: self.kind,
                layer_dims: self.model.net.dims().to_vec(),
                activation: self.model.net.activation(),
                d_eps: self.model.d_eps,
                cond_dim: self.model.cond_dim,
                out_dim: layout.len(),
                horizon: layout.horizon,
                d_x: layout.d_x,
                d_u: layout.d_u,
                cost_scale: self.cost_scale,
                seed: self.cfg.seed,
                epochs_done: self.epochs_done,
                param_count: self.model.net.num_params(),
                norm: self.model.norm.clone(),
                train,
                optimizer: Some(optimizer),
                ddpm_betas: None,
            },
            params: self.model.net.params().to_vec(),
            moments: Some(moments),
        }
    }
}

/// Train a generator from scratch for `cfg.epochs` epochs.
pub fn train(
    ds: &OfflineDataset,
    cost_box: &CostBox,
    cfg: &TrainConfig,
    kind: ModelKind,
) -> Result<(DriftingModel, TrainLog)> {
    let mut trainer = Trainer::new(ds, *cost_box, cfg.clone(), kind)?;
    trainer.run()?;
    Ok((trainer.model(), trainer.log.clone()))
}

/// Write a training log next to a checkpoint stem as `<stem>.log.csv`.
pub fn log_path(stem: &Path) -> PathBuf {
    let (m, _) = crate::checkpoint::checkpoint_paths(stem);
    m.with_extension("log.csv")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{collect, CollectConfig};
    use crate::dynamics::{discretize_zoh, MsdParams};

    fn small_dataset(n: usize, horizon: usize) -> OfflineDataset {
        let sys = discretize_zoh(&MsdParams::default()).unwrap();
        collect(
            &sys,
            &CollectConfig {
                n,
                horizon,
                seed: 5,
                ..CollectConfig::default()
            },
        )
        .unwrap()
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            batch_queries: 4,
            positives: 8,
            negatives: 4,
            knn_k: 8,
            hidden: vec![16, 16],
            d_eps: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn beta_schedule_values() {
        let cfg = TrainConfig {
            epochs: 11,
            beta_min: 0.0,
            beta_max: 2.0,
            ..TrainConfig::default()
        };
        assert_eq!(beta_at(&cfg, 0), 0.0);
        assert_eq!(beta_at(&cfg, 10), 2.0);
        assert!((beta_at(&cfg, 5) - 1.0).abs() < 1e-15);
        let constant = TrainConfig {
            beta_schedule: BetaSchedule::Constant,
            ..cfg
        };
        assert_eq!(beta_at(&constant, 3), 2.0);
    }

    #[test]
    fn invalid_configs_rejected() {
        let ds = small_dataset(8, 4);
        for bad in [
            TrainConfig {
                epochs: 0,
                ..small_config()
            },
            TrainConfig {
                negatives: 1,
                ..small_config()
            },
            TrainConfig {
                beta_min: 2.0,
                beta_max: 1.0,
                ..small_config()
            },
        ] {
            assert!(Trainer::new(&ds, CostBox::default(), bad, ModelKind::Drifting).is_err());
        }
    }

    #[test]
    fn reported_loss_is_mean_squared_drift() {
        let ds = small_dataset(16, 4);
        let mut tr =
            Trainer::new(&ds, CostBox::default(), small_config(), ModelKind::Drifting).unwrap();
        for s in 0..5 {
            // recompute the drift at the current parameters from scratch
            let before = tr.model.clone();
            let stats = tr.step(s, 0.7).unwrap();
            let mut replay =
                Trainer::new(&ds, CostBox::default(), small_config(), ModelKind::Drifting).unwrap();
            replay.model = before;
            let again = replay.step(s, 0.7).unwrap();
            assert_eq!(stats.loss, again.loss);
            assert_eq!(stats.loss, stats.mean_sq_drift);
        }
    }

    #[test]
    fn serial_runs_are_bit_identical() {
        let ds = small_dataset(16, 4);
        let run = || {
            let mut tr =
                Trainer::new(&ds, CostBox::default(), small_config(), ModelKind::Drifting).unwrap();
            tr.run().unwrap();
            tr.checkpoint()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn resume_equals_straight_through() {
        let ds = small_dataset(16, 4);
        let dir = tempfile::tempdir().unwrap();
        let mut full =
            Trainer::new(&ds, CostBox::default(), small_config(), ModelKind::Drifting).unwrap();
        full.run().unwrap();

        let mut part =
            Trainer::new(&ds, CostBox::default(), small_config(), ModelKind::Drifting).unwrap();
        part.run_epoch().unwrap();
        part.run_epoch().unwrap();
        part.checkpoint().save(&dir.path().join("ck")).unwrap();
        let ck = Checkpoint::load(&dir.path().join("ck")).unwrap();
        let mut resumed = Trainer::resume(&ds, CostBox::default(), &ck).unwrap();
        resumed.run().unwrap();
        assert_eq!(resumed.checkpoint(), full.checkpoint());
    }

    #[test]
    fn prior_kind_conditions_on_state_only() {
        let ds = small_dataset(8, 4);
        let tr = Trainer::new(
            &ds,
            CostBox::default(),
            small_config(),
            ModelKind::DriftingPrior,
        )
        .unwrap();
        assert_eq!(tr.checkpoint().manifest.cond_dim, 2);
        assert_eq!(tr.beta(tr.cfg.epochs - 1), 0.0);
        let tr =
            Trainer::new(&ds, CostBox::default(), small_config(), ModelKind::Drifting).unwrap();
        assert_eq!(tr.checkpoint().manifest.cond_dim, 5);
    }

    #[test]
    fn single_trajectory_collapse() {
        let ds = small_dataset(1, 4);
        let cfg = TrainConfig {
            epochs: 200,
            batch_queries: 16,
            positives: 1,
            negatives: 16,
            knn_k: 1,
            beta_max: 0.0,
            hidden: vec![32, 32],
            d_eps: 4,
            ..TrainConfig::default()
        };
        let (model, _) = train(&ds, &CostBox::default(), &cfg, ModelKind::Drifting).unwrap();
        let atom = model
            .generator
            .norm
            .normalize_out(&drift::to_relative(&ds.trajectories[0]).vec);
        let mut r = rng::stream(77, 0);
        let x0 = ds.initial_states[0].clone();
        let omega = CostBox::default().center(2, 1);
        let c = Conditioning::Query.vector(&x0, &omega);
        let eps: Vec<Vec<f64>> = (0..64).map(|_| gaussian(&mut r, 4)).collect();
        let out = model
            .generator
            .forward_normalized(&eps, &vec![c; 64])
            .unwrap();
        let mean_dist = out
            .rows()
            .into_iter()
            .map(|row| sq_dist(row.as_slice().unwrap(), &atom).sqrt())
            .sum::<f64>()
            / 64.0;
        assert!(mean_dist <= 0.05, "mean distance {mean_dist}");
    }
}
