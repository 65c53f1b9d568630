//! Benchmark harness: paired closed-loop episodes, bootstrap statistics and CSV export.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::cost::{cost, CostParams};
use crate::dynamics::{rollout, DiscreteLinearSystem, InitBox};
use crate::error::{Error, Result};
use crate::oracle::{solve_riccati, LqrController};
use crate::planner::{run_closed_loop, TrajectorySampler};
use crate::rng::{self, SimRng};
use crate::trajectory::Trajectory;

pub const ORACLE_LABEL: &str = "oracle";

/// A method under evaluation.
pub enum Method<'a> {
    /// Finite-horizon LQR on the true dynamics.
    Oracle,
    /// Best-of-M planning with a sampler.
    Planner {
        label: String,
        sampler: &'a (dyn TrajectorySampler + Sync),
    },
}

impl Method<'_> {
    pub fn label(&self) -> &str {
        match self {
            Method::Oracle => ORACLE_LABEL,
            Method::Planner { label, .. } => label,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub episodes: usize,
    pub m_plan: usize,
    pub seed: u64,
    pub init_box: InitBox,
    pub omega: CostParams,
    /// Run episodes on the rayon pool. Off by default so wall times are not
    /// distorted by contention.
    pub parallel: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 100,
            m_plan: 16,
            seed: 0,
            init_box: InitBox::default(),
            omega: CostParams {
                q: vec![1.0, 1.0],
                r: vec![0.1],
            },
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub method: String,
    pub horizon: usize,
    /// Episode index; the initial state is drawn from stream `(seed, episode)`.
    pub episode: u64,
    pub x0: Vec<f64>,
    pub cost: f64,
    pub time_ms: f64,
    pub step_ms: Vec<f64>,
    pub trajectory: Trajectory,
}

impl EvalRecord {
    pub fn row(&self) -> EpisodeRow {
        EpisodeRow {
            method: self.method.clone(),
            horizon: self.horizon,
            episode: self.episode,
            x0: self.x0.clone(),
            cost: self.cost,
            time_ms: self.time_ms,
        }
    }
}

/// Initial states shared by every method, one per episode.
pub fn episode_initial_states(cfg: &EvalConfig) -> Vec<Vec<f64>> {
    (0..cfg.episodes as u64)
        .map(|e| cfg.init_box.sample(&mut rng::stream(cfg.seed, e)))
        .collect()
}

fn label_key(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

fn run_episode(
    sys: &DiscreteLinearSystem,
    method: &Method<'_>,
    horizon: usize,
    cfg: &EvalConfig,
    episode: u64,
    x0: &[f64],
) -> Result<EvalRecord> {
    let mut r = rng::substream(cfg.seed, episode, label_key(method.label()));
    let start = Instant::now();
    let (trajectory, realized, step_ms) = match method {
        Method::Oracle => {
            let sol = solve_riccati(sys, &cfg.omega, horizon)?;
            let mut ctrl = LqrController {
                solution: &sol,
                action_noise: 0.0,
            };
            let tau = rollout(sys, x0, &mut ctrl, horizon, &mut r)?;
            let c = cost(&tau, &cfg.omega)?;
            (tau, c, Vec::new())
        }
        Method::Planner { sampler, .. } => {
            let out = run_closed_loop(*sampler, sys, x0, &cfg.omega, horizon, cfg.m_plan, &mut r)?;
            let steps = out.step_seconds.iter().map(|s| s * 1e3).collect();
            (out.trajectory, out.cost, steps)
        }
    };
    let time_ms = (start.elapsed().as_secs_f64() * 1e3).max(f64::MIN_POSITIVE);
    Ok(EvalRecord {
        method: method.label().to_string(),
        horizon,
        episode,
        x0: x0.to_vec(),
        cost: realized,
        time_ms,
        step_ms,
        trajectory,
    })
}

/// Run every method on the same initial states; records are sorted by (method, episode).
pub fn evaluate(
    sys: &DiscreteLinearSystem,
    methods: &[Method<'_>],
    horizon: usize,
    cfg: &EvalConfig,
) -> Result<Vec<EvalRecord>> {
    if cfg.episodes == 0 {
        return Err(Error::InvalidParam("eval.episodes must be >= 1".into()));
    }
    if horizon == 0 {
        return Err(Error::InvalidParam("horizon must be >= 1".into()));
    }
    cfg.omega.validate()?;
    for m in methods {
        if let Method::Planner { label, sampler } = m {
            let h = sampler.layout().horizon;
            if h != horizon {
                return Err(Error::Shape(format!(
                    "method {label} was trained for H={h} but the requested horizon is H={horizon}"
                )));
            }
        }
    }
    let x0s = episode_initial_states(cfg);
    let jobs: Vec<(usize, u64)> = (0..methods.len())
        .flat_map(|m| (0..cfg.episodes as u64).map(move |e| (m, e)))
        .collect();
    let run =
        |&(m, e): &(usize, u64)| run_episode(sys, &methods[m], horizon, cfg, e, &x0s[e as usize]);
    let mut records = if cfg.parallel {
        jobs.par_iter().map(run).collect::<Result<Vec<_>>>()?
    } else {
        jobs.iter().map(run).collect::<Result<Vec<_>>>()?
    };
    records
        .sort_by(|a, b| (&a.method, a.horizon, a.episode).cmp(&(&b.method, b.horizon, b.episode)));
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Mean,
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CiMethod {
    Percentile,
    Bca,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub confidence: f64,
    pub method: CiMethod,
    pub statistic: Statistic,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resamples: 10_000,
            confidence: 0.95,
            method: CiMethod::Bca,
            statistic: Statistic::Mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapSummary {
    pub statistic: Statistic,
    /// Interval method actually used (BCa falls back to percentile when undefined).
    pub method: CiMethod,
    pub estimate: f64,
    pub mean: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub resamples: usize,
}

/// Linear interpolation between order statistics (type 7). `sorted` must be ascending.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn statistic(values: &[f64], stat: Statistic) -> f64 {
    match stat {
        Statistic::Mean => values.iter().sum::<f64>() / values.len() as f64,
        Statistic::Median => quantile(&sorted(values), 0.5),
    }
}

/// Bootstrap distribution of a statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct Replicates {
    pub statistic: Statistic,
    pub estimate: f64,
    /// Ascending.
    pub sorted: Vec<f64>,
}

pub fn replicates(
    values: &[f64],
    stat: Statistic,
    resamples: usize,
    rng: &mut SimRng,
) -> Result<Replicates> {
    if values.len() < 2 {
        return Err(Error::InvalidParam(
            "bootstrap needs at least 2 values".into(),
        ));
    }
    if resamples == 0 {
        return Err(Error::InvalidParam(
            "bootstrap needs at least 1 resample".into(),
        ));
    }
    let n = values.len();
    let mut buf = vec![0.0; n];
    let mut reps = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        for slot in buf.iter_mut() {
            *slot = values[rng.random_range(0..n)];
        }
        reps.push(statistic(&buf, stat));
    }
    reps.sort_by(f64::total_cmp);
    Ok(Replicates {
        statistic: stat,
        estimate: statistic(values, stat),
        sorted: reps,
    })
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

impl Replicates {
    pub fn se(&self) -> f64 {
        let b = self.sorted.len() as f64;
        let m = self.sorted.iter().sum::<f64>() / b;
        if self.sorted.len() < 2 {
            return 0.0;
        }
        (self.sorted.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (b - 1.0)).sqrt()
    }

    pub fn percentile(&self, confidence: f64) -> (f64, f64) {
        let a = (1.0 - confidence) / 2.0;
        (quantile(&self.sorted, a), quantile(&self.sorted, 1.0 - a))
    }

    /// Bias-corrected and accelerated interval; `None` when the correction is undefined.
    pub fn bca(&self, values: &[f64], confidence: f64) -> Option<(f64, f64)> {
        let b = self.sorted.len() as f64;
        let below = self.sorted.iter().filter(|&&v| v < self.estimate).count() as f64;
        let ties = self.sorted.iter().filter(|&&v| v == self.estimate).count() as f64;
        let p0 = (below + 0.5 * ties) / b;
        if !(p0 > 0.0 && p0 < 1.0) {
            return None;
        }
        let normal = std_normal();
        let z0 = normal.inverse_cdf(p0);

        let n = values.len();
        let mut jack = Vec::with_capacity(n);
        let mut loo = Vec::with_capacity(n - 1);
        for i in 0..n {
            loo.clear();
            loo.extend(
                values
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, v)| *v),
            );
            jack.push(statistic(&loo, self.statistic));
        }
        let jbar = jack.iter().sum::<f64>() / n as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for j in &jack {
            let d = jbar - j;
            num += d * d * d;
            den += d * d;
        }
        if den <= 0.0 {
            return None;
        }
        let accel = num / (6.0 * den.powf(1.5));
        let alpha = (1.0 - confidence) / 2.0;
        let adjust = |a: f64| {
            let z = normal.inverse_cdf(a);
            normal.cdf(z0 + (z0 + z) / (1.0 - accel * (z0 + z)))
        };
        let (lo, hi) = (adjust(alpha), adjust(1.0 - alpha));
        if !(lo.is_finite() && hi.is_finite()) {
            return None;
        }
        Some((quantile(&self.sorted, lo), quantile(&self.sorted, hi)))
    }
}

pub fn bootstrap(
    values: &[f64],
    cfg: &BootstrapConfig,
    rng: &mut SimRng,
) -> Result<BootstrapSummary> {
    if !(cfg.confidence > 0.0 && cfg.confidence < 1.0) {
        return Err(Error::InvalidParam("confidence must lie in (0, 1)".into()));
    }
    let reps = replicates(values, cfg.statistic, cfg.resamples, rng)?;
    let (method, (ci_low, ci_high)) = match cfg.method {
        CiMethod::Percentile => (CiMethod::Percentile, reps.percentile(cfg.confidence)),
        CiMethod::Bca => match reps.bca(values, cfg.confidence) {
            Some(ci) => (CiMethod::Bca, ci),
            None => {
                log::warn!(
                    "BCa interval undefined (constant or degenerate data); using percentile"
                );
                (CiMethod::Percentile, reps.percentile(cfg.confidence))
            }
        },
    };
    let s = sorted(values);
    Ok(BootstrapSummary {
        statistic: cfg.statistic,
        method,
        estimate: reps.estimate,
        mean: statistic(values, Statistic::Mean),
        se: reps.se(),
        ci_low,
        ci_high,
        median: quantile(&s, 0.5),
        q25: quantile(&s, 0.25),
        q75: quantile(&s, 0.75),
        resamples: cfg.resamples,
    })
}

/// One line of `episodes.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRow {
    pub method: String,
    pub horizon: usize,
    pub episode: u64,
    pub x0: Vec<f64>,
    pub cost: f64,
    pub time_ms: f64,
}

/// One line of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    #[serde(rename = "H")]
    pub horizon: usize,
    pub n: usize,
    pub mean: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub time_mean_ms: f64,
    pub time_se_ms: f64,
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// One summary row per (method, H), bootstrapping the mean cost.
pub fn summarize(rows: &[EpisodeRow], cfg: &BootstrapConfig, seed: u64) -> Result<Vec<SummaryRow>> {
    let mut groups: BTreeMap<(String, usize), Vec<&EpisodeRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.method.clone(), r.horizon))
            .or_default()
            .push(r);
    }
    let mut out = Vec::with_capacity(groups.len());
    for ((method, horizon), mut g) in groups {
        g.sort_by_key(|r| r.episode);
        let costs: Vec<f64> = g.iter().map(|r| r.cost).collect();
        let times: Vec<f64> = g.iter().map(|r| r.time_ms).collect();
        let s = sorted(&costs);
        let (mean, se, ci_lo, ci_hi) = if costs.len() >= 2 {
            let mut r = rng::substream(seed, label_key(&method), horizon as u64);
            let b = bootstrap(
                &costs,
                &BootstrapConfig {
                    statistic: Statistic::Mean,
                    ..*cfg
                },
                &mut r,
            )?;
            (b.mean, b.se, b.ci_low, b.ci_high)
        } else {
            (costs[0], 0.0, costs[0], costs[0])
        };
        let (time_mean_ms, time_se_ms) = mean_se(&times);
        out.push(SummaryRow {
            method,
            horizon,
            n: costs.len(),
            mean,
            se,
            ci_lo,
            ci_hi,
            median: quantile(&s, 0.5),
            q25: quantile(&s, 0.25),
            q75: quantile(&s, 0.75),
            time_mean_ms,
            time_se_ms,
        });
    }
    Ok(out)
}

pub fn write_episodes(rows: &[EpisodeRow], path: &Path) -> Result<()> {
    let d_x = rows.first().map_or(2, |r| r.x0.len());
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["method".to_string(), "H".into(), "seed".into()];
    header.extend((0..d_x).map(|i| format!("x0_{i}")));
    header.extend(["cost".to_string(), "time_ms".into()]);
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.method.clone(),
            r.horizon.to_string(),
            r.episode.to_string(),
        ];
        rec.extend(r.x0.iter().map(f64::to_string));
        rec.extend([r.cost.to_string(), r.time_ms.to_string()]);
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_episodes(path: &Path) -> Result<Vec<EpisodeRow>> {
    let mut rd = csv::Reader::from_path(path)?;
    let header = rd.headers()?.clone();
    let bad = |m: String| Error::format(path, m);
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| bad(format!("missing column `{name}`")))
    };
    let (im, ih, is, ic, it) = (
        find("method")?,
        find("H")?,
        find("seed")?,
        find("cost")?,
        find("time_ms")?,
    );
    let xcols: Vec<usize> = (0..)
        .map_while(|i| header.iter().position(|h| h == format!("x0_{i}")))
        .collect();
    let mut rows = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| bad(format!("row {}: `{}` is not a number", line + 2, &rec[i])))
        };
        let int = |i: usize| -> Result<u64> {
            rec[i]
                .parse()
                .map_err(|_| bad(format!("row {}: `{}` is not an integer", line + 2, &rec[i])))
        };
        rows.push(EpisodeRow {
            method: rec[im].to_string(),
            horizon: int(ih)? as usize,
            episode: int(is)?,
            x0: xcols.iter().map(|&i| num(i)).collect::<Result<_>>()?,
            cost: num(ic)?,
            time_ms: num(it)?,
        });
    }
    Ok(rows)
}

pub fn write_summary(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record([
            "method",
            "H",
            "n",
            "mean",
            "se",
            "ci_lo",
            "ci_hi",
            "median",
            "q25",
            "q75",
            "time_mean_ms",
            "time_se_ms",
        ])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut rd = csv::Reader::from_path(path)?;
    Ok(rd
        .deserialize()
        .collect::<std::result::Result<Vec<_>, _>>()?)
}

/// Per-step states and controls: `t, x_0.., u..`; the last row has empty controls.
pub fn write_rollout(tau: &Trajectory, path: &Path) -> Result<()> {
    let (d_x, d_u) = (tau.states.ncols(), tau.controls.ncols());
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((0..d_x).map(|i| format!("x_{i}")));
    header.extend((0..d_u).map(|i| {
        if d_u == 1 {
            "u".to_string()
        } else {
            format!("u_{i}")
        }
    }));
    w.write_record(&header)?;
    for t in 0..=tau.horizon() {
        let mut rec = vec![t.to_string()];
        rec.extend(tau.states.row(t).iter().map(f64::to_string));
        if t < tau.horizon() {
            rec.extend(tau.controls.row(t).iter().map(f64::to_string));
        } else {
            rec.extend(std::iter::repeat_n(String::new(), d_u));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Write `episodes.csv`, `summary.csv` and one `rollout_<method>_<H>.csv` per group
/// (the lowest-index episode).
pub fn export(
    records: &[EvalRecord],
    out_dir: &Path,
    cfg: &BootstrapConfig,
    seed: u64,
) -> Result<Vec<SummaryRow>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let rows: Vec<EpisodeRow> = records.iter().map(EvalRecord::row).collect();
    write_episodes(&rows, &out_dir.join("episodes.csv"))?;
    let summary = summarize(&rows, cfg, seed)?;
    write_summary(&summary, &out_dir.join("summary.csv"))?;
    let mut first: BTreeMap<(&str, usize), &EvalRecord> = BTreeMap::new();
    for r in records {
        let e = first.entry((&r.method, r.horizon)).or_insert(r);
        if r.episode < e.episode {
            *e = r;
        }
    }
    for ((method, h), r) in first {
        write_rollout(
            &r.trajectory,
            &out_dir.join(format!("rollout_{method}_{h}.csv")),
        )?;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{discretize_zoh, MsdParams};
    use crate::rng::{gaussian, stream};
    use crate::trajectory::Layout;

    struct Zero(Layout);

    impl TrajectorySampler for Zero {
        fn layout(&self) -> Layout {
            self.0
        }
        fn sample(&self, _: &[f64], _: &CostParams, _: &mut SimRng) -> Result<Vec<f64>> {
            Ok(vec![0.0; self.0.len()])
        }
    }

    fn small_cfg(episodes: usize) -> EvalConfig {
        EvalConfig {
            episodes,
            m_plan: 2,
            seed: 11,
            ..EvalConfig::default()
        }
    }

    #[test]
    fn oracle_episodes_match_riccati_value() {
        let sys = discretize_zoh(&MsdParams::default()).unwrap();
        let cfg = small_cfg(20);
        let recs = evaluate(&sys, &[Method::Oracle], 30, &cfg).unwrap();
        let sol = solve_riccati(&sys, &cfg.omega, 30).unwrap();
        for r in &recs {
            assert!((r.cost - sol.value(&r.x0)).abs() < 1e-8);
            assert!(r.time_ms > 0.0);
        }
    }

    #[test]
    fn paired_initial_states_and_oracle_lower_bound() {
        let sys = discretize_zoh(&MsdParams::default()).unwrap();
        let zero = Zero(Layout::new(10, 2, 1));
        let methods = [
            Method::Oracle,
            Method::Planner {
                label: "zero".into(),
                sampler: &zero,
            },
        ];
        let recs = evaluate(&sys, &methods, 10, &small_cfg(15)).unwrap();
        let oracle: Vec<_> = recs.iter().filter(|r| r.method == "oracle").collect();
        let zero: Vec<_> = recs.iter().filter(|r| r.method == "zero").collect();
        assert_eq!(oracle.len(), 15);
        for (o, z) in oracle.iter().zip(&zero) {
            assert_eq!(o.x0, z.x0);
            assert_eq!(o.episode, z.episode);
            assert!(z.cost >= o.cost - 1e-6);
        }
    }

    #[test]
    fn bad_requests_rejected() {
        let sys = discretize_zoh(&MsdParams::default()).unwrap();
        assert!(evaluate(&sys, &[Method::Oracle], 10, &small_cfg(0)).is_err());
        let zero = Zero(Layout::new(50, 2, 1));
        let err = evaluate(
            &sys,
            &[Method::Planner {
                label: "z".into(),
                sampler: &zero,
            }],
            30,
            &small_cfg(2),
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("H=50") && err.contains("H=30"), "{err}");
    }

    #[test]
    fn order_statistics() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&s, 0.5), 3.0);
        assert_eq!(quantile(&s, 0.25), 2.0);
        assert_eq!(quantile(&s, 0.75), 4.0);
        assert_eq!(quantile(&[1.0, 2.0], 0.5), 1.5);
        let b = bootstrap(
            &s,
            &BootstrapConfig {
                resamples: 500,
                statistic: Statistic::Median,
                ..Default::default()
            },
            &mut stream(0, 0),
        )
        .unwrap();
        assert_eq!((b.estimate, b.median, b.q25, b.q75), (3.0, 3.0, 2.0, 4.0));
    }

    #[test]
    fn constant_data() {
        let v = [2.5; 10];
        let p = bootstrap(
            &v,
            &BootstrapConfig {
                method: CiMethod::Percentile,
                resamples: 200,
                ..Default::default()
            },
            &mut stream(1, 0),
        )
        .unwrap();
        assert_eq!(p.ci_high - p.ci_low, 0.0);
        let b = bootstrap(
            &v,
            &BootstrapConfig {
                resamples: 200,
                ..Default::default()
            },
            &mut stream(1, 0),
        )
        .unwrap();
        assert_eq!(b.method, CiMethod::Percentile);
        assert_eq!((b.ci_low, b.ci_high), (2.5, 2.5));
        assert!(bootstrap(&[1.0], &BootstrapConfig::default(), &mut stream(1, 0)).is_err());
    }

    #[test]
    fn coverage_is_roughly_nominal() {
        let reps = 300;
        let (mut hit_p, mut hit_b) = (0, 0);
        for k in 0..reps {
            let mut r = stream(99, k);
            let x = gaussian(&mut r, 100);
            let rep = replicates(&x, Statistic::Mean, 1000, &mut r).unwrap();
            let (lo, hi) = rep.percentile(0.95);
            hit_p += (lo <= 0.0 && 0.0 <= hi) as usize;
            let (lo, hi) = rep.bca(&x, 0.95).unwrap();
            hit_b += (lo <= 0.0 && 0.0 <= hi) as usize;
        }
        for hits in [hit_p, hit_b] {
            let c = hits as f64 / reps as f64;
            assert!((0.89..=0.99).contains(&c), "coverage {c}");
        }
    }

    #[test]
    fn export_roundtrip_and_consistency() {
        let dir = tempfile::tempdir().unwrap();
        let empty = export(&[], dir.path(), &BootstrapConfig::default(), 0).unwrap();
        assert!(empty.is_empty());
        assert_eq!(
            fs::read_to_string(dir.path().join("episodes.csv"))
                .unwrap()
                .lines()
                .count(),
            1
        );
        assert_eq!(
            fs::read_to_string(dir.path().join("summary.csv"))
                .unwrap()
                .lines()
                .count(),
            1
        );

        let sys = discretize_zoh(&MsdParams::default()).unwrap();
        let recs = evaluate(&sys, &[Method::Oracle], 30, &small_cfg(12)).unwrap();
        let bcfg = BootstrapConfig {
            resamples: 400,
            ..Default::default()
        };
        let summary = export(&recs, dir.path(), &bcfg, 5).unwrap();
        assert_eq!(
            read_summary(&dir.path().join("summary.csv")).unwrap(),
            summary
        );
        let rows = read_episodes(&dir.path().join("episodes.csv")).unwrap();
        assert_eq!(rows, recs.iter().map(EvalRecord::row).collect::<Vec<_>>());
        assert_eq!(summarize(&rows, &bcfg, 5).unwrap(), summary);
        let mean = rows.iter().map(|r| r.cost).sum::<f64>() / rows.len() as f64;
        assert_eq!(summary[0].mean, mean);
        let rollout = fs::read_to_string(dir.path().join("rollout_oracle_30.csv")).unwrap();
        assert!(rollout.starts_with("t,x_0,x_1,u\n"));
        assert_eq!(rollout.lines().count(), 32);
    }
}
