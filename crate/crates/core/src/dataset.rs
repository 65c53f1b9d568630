//! Offline dataset: collection from a behavior-controller mixture, binary
//! persistence, the nearest-neighbor local prior over stored trajectories and
//! cost relabeling.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{cost, CostParams, Trajectory};
use crate::dynamics::{rollout, Controller, DiscreteLinearSystem, InitBox};
use crate::error::{Error, Result};
use crate::oracle::{solve_riccati, LqrController};
use crate::rng::{self, SimRng};
use crate::trajectory::Layout;

pub const DATASET_MAGIC: &[u8; 8] = b"DMPCDS01";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerTag {
    NoisyLqr = 0,
    NoisyPd = 1,
    SmoothRandom = 2,
}

impl ControllerTag {
    pub const ALL: [ControllerTag; 3] = [Self::NoisyLqr, Self::NoisyPd, Self::SmoothRandom];

    fn from_byte(b: u8) -> Option<Self> {
        Self::ALL.get(usize::from(b)).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqrBehavior {
    /// Cost weights the behavior LQR is solved for.
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub action_noise: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdBehavior {
    pub kp: f64,
    pub kd: f64,
    pub action_noise: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothRandomBehavior {
    /// Lag-1 correlation of the AR(1) control sequence.
    pub rho: f64,
    /// Stationary standard deviation.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectConfig {
    pub n: usize,
    pub horizon: usize,
    /// Set from the run seed, not read from config files.
    #[serde(skip)]
    pub seed: u64,
    /// Fractions of (noisy LQR, noisy PD, smooth random) trajectories.
    pub mixture: [f64; 3],
    pub init_box: InitBox,
    pub lqr: LqrBehavior,
    pub pd: PdBehavior,
    pub random: SmoothRandomBehavior,
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            horizon: 30,
            seed: 0,
            mixture: [0.1, 0.1, 0.8],
            init_box: InitBox::default(),
            lqr: LqrBehavior {
                q: vec![1.0, 1.0],
                r: vec![0.1],
                action_noise: 0.1,
            },
            pd: PdBehavior {
                kp: 2.0,
                kd: 1.0,
                action_noise: 0.1,
            },
            random: SmoothRandomBehavior {
                rho: 0.9,
                sigma: 1.0,
            },
        }
    }
}

impl CollectConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.horizon == 0 {
            return Err(Error::InvalidParam(
                "dataset needs N >= 1 and H >= 1".into(),
            ));
        }
        let total: f64 = self.mixture.iter().sum();
        if self.mixture.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParam(format!(
                "mixture {:?} must be nonnegative and sum to 1",
                self.mixture
            )));
        }
        if !(-1.0..=1.0).contains(&self.random.rho) {
            return Err(Error::InvalidParam(
                "smooth-random rho must lie in [-1, 1]".into(),
            ));
        }
        self.init_box.validate()
    }

    /// Exact per-class counts; the last class absorbs rounding.
    pub fn quota(&self) -> [usize; 3] {
        let a = (self.n as f64 * self.mixture[0]).round() as usize;
        let b = ((self.n as f64 * self.mixture[1]).round() as usize).min(self.n - a.min(self.n));
        let a = a.min(self.n);
        [a, b, self.n - a - b]
    }
}

/// `u = −k_p p − k_d v + noise`, positions are the first `d_u` state entries
/// and velocities the next `d_u`.
pub struct PdController {
    pub gains: PdBehavior,
}

impl Controller for PdController {
    fn control(&mut self, _t: usize, x: &[f64], rng: &mut SimRng) -> Result<Vec<f64>> {
        let d_u = x.len() / 2;
        Ok((0..d_u.max(1))
            .map(|i| {
                let p = x[i];
                let v = x.get(i + d_u).copied().unwrap_or(0.0);
                let noise = if self.gains.action_noise > 0.0 {
                    self.gains.action_noise * rng::normal(rng)
                } else {
                    0.0
                };
                -self.gains.kp * p - self.gains.kd * v + noise
            })
            .collect())
    }
}

/// Open-loop AR(1) controls `u_t = ρ u_{t−1} + √(1−ρ²) σ ξ_t`, started in stationarity.
pub struct SmoothRandomController {
    pub params: SmoothRandomBehavior,
    pub d_u: usize,
    prev: Option<Vec<f64>>,
}

impl SmoothRandomController {
    pub fn new(params: SmoothRandomBehavior, d_u: usize) -> Self {
        Self {
            params,
            d_u,
            prev: None,
        }
    }
}

impl Controller for SmoothRandomController {
    fn control(&mut self, _t: usize, _x: &[f64], rng: &mut SimRng) -> Result<Vec<f64>> {
        let SmoothRandomBehavior { rho, sigma } = self.params;
        let innovation = (1.0 - rho * rho).sqrt() * sigma;
        let u: Vec<f64> = match &self.prev {
            None => (0..self.d_u).map(|_| sigma * rng::normal(rng)).collect(),
            Some(prev) => prev
                .iter()
                .map(|p| rho * p + innovation * rng::normal(rng))
                .collect(),
        };
        self.prev = Some(u.clone());
        Ok(u)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub d_x: usize,
    pub d_u: usize,
    pub horizon: usize,
    pub seed: u64,
    pub mixture: [f64; 3],
    pub collect: Option<CollectConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    pub trajectories: Vec<Trajectory>,
    pub initial_states: Vec<Vec<f64>>,
    pub tags: Vec<ControllerTag>,
    pub meta: DatasetMeta,
}

impl OfflineDataset {
    pub fn new(
        trajectories: Vec<Trajectory>,
        tags: Vec<ControllerTag>,
        meta: DatasetMeta,
    ) -> Result<Self> {
        if trajectories.len() != tags.len() {
            return Err(Error::Shape(
                "one controller tag per trajectory required".into(),
            ));
        }
        let layout = Layout::new(meta.horizon, meta.d_x, meta.d_u);
        if let Some(bad) = trajectories.iter().position(|t| t.layout() != layout) {
            return Err(Error::Shape(format!(
                "trajectory {bad} does not match {layout:?}"
            )));
        }
        let initial_states = trajectories
            .iter()
            .map(|t| t.initial_state().to_vec())
            .collect();
        Ok(Self {
            trajectories,
            initial_states,
            tags,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.meta.horizon, self.meta.d_x, self.meta.d_u)
    }

    pub fn count(&self, tag: ControllerTag) -> usize {
        self.tags.iter().filter(|&&t| t == tag).count()
    }

    /// Binary records plus a `<path>.toml` manifest.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let layout = self.layout();
        let mut buf = Vec::with_capacity(24 + self.len() * (1 + 8 * layout.len()));
        buf.extend_from_slice(DATASET_MAGIC);
        for v in [layout.d_x, layout.d_u, layout.horizon, self.len()] {
            let v =
                u32::try_from(v).map_err(|_| Error::InvalidParam("dataset too large".into()))?;
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for (tau, tag) in self.trajectories.iter().zip(&self.tags) {
            buf.push(*tag as u8);
            for v in tau.states.iter().chain(tau.controls.iter()) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.write_all(&buf).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))?;

        let manifest = toml::to_string(&self.meta).map_err(|e| Error::Config(e.to_string()))?;
        let mpath = manifest_path(path);
        fs::write(&mpath, manifest).map_err(|e| Error::io(&mpath, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        BufReader::new(file)
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(path, e))?;
        if bytes.len() < 24 || &bytes[..8] != DATASET_MAGIC {
            return Err(Error::format(path, "missing DMPCDS01 header"));
        }
        let field = |i: usize| {
            u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().expect("4 bytes")) as usize
        };
        let (d_x, d_u, horizon, n) = (field(0), field(1), field(2), field(3));
        let layout = Layout::new(horizon, d_x, d_u);
        let record = 1 + 8 * layout.len();
        if bytes.len() != 24 + n * record {
            return Err(Error::format(
                path,
                format!(
                    "expected {} bytes for {n} records, found {}",
                    24 + n * record,
                    bytes.len()
                ),
            ));
        }
        let mut trajectories = Vec::with_capacity(n);
        let mut tags = Vec::with_capacity(n);
        for i in 0..n {
            let rec = &bytes[24 + i * record..24 + (i + 1) * record];
            tags.push(ControllerTag::from_byte(rec[0]).ok_or_else(|| {
                Error::format(path, format!("unknown controller tag {}", rec[0]))
            })?);
            let vals: Vec<f64> = rec[1..]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let ns = (horizon + 1) * d_x;
            let states = Array2::from_shape_vec((horizon + 1, d_x), vals[..ns].to_vec())
                .map_err(|e| Error::format(path, e.to_string()))?;
            let controls = Array2::from_shape_vec((horizon, d_u), vals[ns..].to_vec())
                .map_err(|e| Error::format(path, e.to_string()))?;
            trajectories.push(Trajectory::new(states, controls)?);
        }

        let mpath = manifest_path(path);
        let meta = match fs::read_to_string(&mpath) {
            Ok(text) => {
                let meta: DatasetMeta =
                    toml::from_str(&text).map_err(|e| Error::format(&mpath, e.to_string()))?;
                if (meta.d_x, meta.d_u, meta.horizon) != (d_x, d_u, horizon) {
                    return Err(Error::format(
                        &mpath,
                        "manifest dimensions disagree with data file",
                    ));
                }
                meta
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => DatasetMeta {
                d_x,
                d_u,
                horizon,
                seed: 0,
                mixture: [0.0; 3],
                collect: None,
            },
            Err(e) => return Err(Error::io(&mpath, e)),
        };
        Self::new(trajectories, tags, meta)
    }
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".toml");
    PathBuf::from(s)
}

/// Roll out `cfg.n` trajectories from the controller mixture.
///
/// Class counts are fixed by quota and their order shuffled once; trajectory
/// `i` uses its own stream `(seed, i)`, so the result does not depend on the
/// number of worker threads.
pub fn collect(sys: &DiscreteLinearSystem, cfg: &CollectConfig) -> Result<OfflineDataset> {
    cfg.validate()?;
    if cfg.init_box.lower.len() != sys.d_x() {
        return Err(Error::Shape("init box dimension differs from d_x".into()));
    }
    let lqr_omega = CostParams::new(cfg.lqr.q.clone(), cfg.lqr.r.clone())?;
    let riccati = solve_riccati(sys, &lqr_omega, cfg.horizon)?;

    let quota = cfg.quota();
    let mut tags: Vec<ControllerTag> = ControllerTag::ALL
        .iter()
        .zip(quota)
        .flat_map(|(&tag, count)| std::iter::repeat_n(tag, count))
        .collect();
    tags.shuffle(&mut rng::stream(cfg.seed, u64::MAX));

    let trajectories = tags
        .par_iter()
        .enumerate()
        .map(|(i, tag)| {
            let mut rng = rng::stream(cfg.seed, i as u64);
            let x0 = cfg.init_box.sample(&mut rng);
            match tag {
                ControllerTag::NoisyLqr => {
                    let mut c = LqrController {
                        solution: &riccati,
                        action_noise: cfg.lqr.action_noise,
                    };
                    rollout(sys, &x0, &mut c, cfg.horizon, &mut rng)
                }
                ControllerTag::NoisyPd => {
                    let mut c = PdController { gains: cfg.pd };
                    rollout(sys, &x0, &mut c, cfg.horizon, &mut rng)
                }
                ControllerTag::SmoothRandom => {
                    let mut c = SmoothRandomController::new(cfg.random, sys.d_u());
                    rollout(sys, &x0, &mut c, cfg.horizon, &mut rng)
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let meta = DatasetMeta {
        d_x: sys.d_x(),
        d_u: sys.d_u(),
        horizon: cfg.horizon,
        seed: cfg.seed,
        mixture: cfg.mixture,
        collect: Some(cfg.clone()),
    };
    OfflineDataset::new(trajectories, tags, meta)
}

/// Bandwidth of the initial-state kernel `k_x(x_0, x_i) = exp(-‖x_0 − x_i‖² / h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorBandwidth {
    /// Median of the K neighbor squared distances, floored at 1e-8.
    Median,
    Fixed(f64),
    /// `k_x ≡ 1`: uniform weights over the neighbors.
    Infinite,
}

/// Categorical law over K retrieved dataset trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalPrior {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
    pub query_state: Vec<f64>,
}

pub fn knn_prior(ds: &OfflineDataset, x0: &[f64], k: usize) -> Result<LocalPrior> {
    knn_prior_with(ds, x0, k, PriorBandwidth::Median)
}

pub fn knn_prior_with(
    ds: &OfflineDataset,
    x0: &[f64],
    k: usize,
    bandwidth: PriorBandwidth,
) -> Result<LocalPrior> {
    if ds.is_empty() {
        return Err(Error::InvalidParam("empty dataset".into()));
    }
    if k == 0 || k > ds.len() {
        return Err(Error::InvalidParam(format!(
            "K = {k} outside 1..={}",
            ds.len()
        )));
    }
    if x0.len() != ds.meta.d_x {
        return Err(Error::Shape(
            "query state dimension differs from dataset".into(),
        ));
    }
    let mut scored: Vec<(f64, usize)> = ds
        .initial_states
        .iter()
        .enumerate()
        .map(|(i, xi)| {
            (
                xi.iter()
                    .zip(x0)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>(),
                i,
            )
        })
        .collect();
    // total order on (distance, index) gives the smallest-index tie-break
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    scored.truncate(k);

    let h = match bandwidth {
        PriorBandwidth::Median => {
            let mut d: Vec<f64> = scored.iter().map(|s| s.0).collect();
            d.sort_by(f64::total_cmp);
            let med = if k % 2 == 1 {
                d[k / 2]
            } else {
                0.5 * (d[k / 2 - 1] + d[k / 2])
            };
            med.max(1e-8)
        }
        PriorBandwidth::Fixed(h) => {
            if !(h > 0.0) {
                return Err(Error::InvalidParam(
                    "prior bandwidth must be positive".into(),
                ));
            }
            h
        }
        PriorBandwidth::Infinite => f64::INFINITY,
    };
    let raw: Vec<f64> = scored.iter().map(|(d, _)| (-d / h).exp()).collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Numeric("local prior weights vanished".into()));
    }
    Ok(LocalPrior {
        indices: scored.iter().map(|s| s.1).collect(),
        weights: raw.iter().map(|w| w / total).collect(),
        query_state: x0.to_vec(),
    })
}

impl LocalPrior {
    /// Draw one dataset index from the categorical law.
    pub fn draw(&self, rng: &mut SimRng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (idx, w) in self.indices.iter().zip(&self.weights) {
            acc += w;
            if u < acc {
                return *idx;
            }
        }
        // rounding left the cumulative sum a hair under 1
        let last = self
            .weights
            .iter()
            .rposition(|&w| w > 0.0)
            .expect("weights sum to one");
        self.indices[last]
    }
}

/// `count` i.i.d. draws from the local prior, with their dataset indices.
pub fn sample_positives<'a>(
    prior: &LocalPrior,
    ds: &'a OfflineDataset,
    count: usize,
    rng: &mut SimRng,
) -> Result<Vec<(&'a Trajectory, usize)>> {
    if prior.indices.is_empty() {
        return Err(Error::InvalidParam("empty local prior".into()));
    }
    Ok((0..count)
        .map(|_| {
            let i = prior.draw(rng);
            (&ds.trajectories[i], i)
        })
        .collect())
}

/// Cost of a stored trajectory under a new cost parameter, evaluated on its
/// own absolute states.
pub fn relabel_cost(tau: &Trajectory, omega: &CostParams) -> Result<f64> {
    cost(tau, omega)
}
