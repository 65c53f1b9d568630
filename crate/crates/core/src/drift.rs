//! Drift fields on flattened relative trajectories.
//!
//! A generated sample `τ` is pulled toward a cost-tilted, kernel-weighted mean
//! of the positive batch and pushed away from the kernel-weighted mean of the
//! other generated samples. The fixed-point target `τ + V(τ)` is what the
//! generator regresses onto, with the target held constant.
//!
//! All weights are normalized ratios, so they are computed in the log domain
//! after subtracting the largest log-weight. This is exact up to rounding and
//! keeps `exp(-βJ)` and narrow kernels from underflowing to an all-zero batch.

use ndarray::Array2;

use crate::cost::Trajectory;
use crate::error::{Error, Result};
use crate::trajectory::Layout;

const TEMPERATURE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    Absolute,
    /// Every state has the initial state subtracted.
    Relative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlatTraj {
    pub vec: Vec<f64>,
    pub frame: Frame,
    pub layout: Layout,
}

impl FlatTraj {
    pub fn relative(layout: Layout, vec: Vec<f64>) -> Result<Self> {
        if vec.len() != layout.len() {
            return Err(Error::Shape(format!(
                "flat trajectory has {} entries, layout needs {}",
                vec.len(),
                layout.len()
            )));
        }
        Ok(Self {
            vec,
            frame: Frame::Relative,
            layout,
        })
    }
}

pub fn to_relative(tau: &Trajectory) -> FlatTraj {
    let layout = tau.layout();
    let mut vec = tau.flatten();
    let x0: Vec<f64> = tau.initial_state().to_vec();
    for t in 0..=layout.horizon {
        let o = layout.state_offset(t);
        for (i, x) in x0.iter().enumerate() {
            vec[o + i] -= x;
        }
    }
    FlatTraj {
        vec,
        frame: Frame::Relative,
        layout,
    }
}

/// Adds `x0` to every state block, including the nominally zero `x_0` block.
pub fn to_absolute(f: &FlatTraj, x0: &[f64]) -> Result<Trajectory> {
    if f.frame != Frame::Relative {
        return Err(Error::InvalidParam(
            "to_absolute needs a relative trajectory".into(),
        ));
    }
    if x0.len() != f.layout.d_x {
        return Err(Error::Shape(format!(
            "x0 has {} entries, layout has d_x = {}",
            x0.len(),
            f.layout.d_x
        )));
    }
    let mut vec = f.vec.clone();
    for t in 0..=f.layout.horizon {
        let o = f.layout.state_offset(t);
        for (i, x) in x0.iter().enumerate() {
            vec[o + i] += x;
        }
    }
    Trajectory::from_flat(f.layout, &vec)
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `exp(-‖a − b‖² / T)`.
pub fn kernel(a: &FlatTraj, b: &FlatTraj, temperature: f64) -> Result<f64> {
    if !(temperature > 0.0) {
        return Err(Error::InvalidParam(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if a.frame != b.frame || a.vec.len() != b.vec.len() {
        return Err(Error::Shape(
            "kernel arguments differ in frame or length".into(),
        ));
    }
    Ok((-sq_dist(&a.vec, &b.vec) / temperature).exp())
}

/// Median of pairwise squared distances within `points`, floored at 1e-8.
pub fn median_temperature(points: &[Vec<f64>]) -> f64 {
    let mut d: Vec<f64> = Vec::with_capacity(points.len() * points.len().saturating_sub(1) / 2);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            d.push(sq_dist(&points[i], &points[j]));
        }
    }
    if d.is_empty() {
        return TEMPERATURE_FLOOR;
    }
    d.sort_by(f64::total_cmp);
    let n = d.len();
    let med = if n % 2 == 1 {
        d[n / 2]
    } else {
        0.5 * (d[n / 2 - 1] + d[n / 2])
    };
    med.max(TEMPERATURE_FLOOR)
}

/// One query's positive and negative batches, in a common coordinate frame.
#[derive(Debug, Clone)]
pub struct DriftBatch {
    pub positives: Vec<Vec<f64>>,
    /// Relabeled cost of each positive.
    pub costs: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
    pub beta: f64,
    pub temperature: f64,
}

impl DriftBatch {
    pub fn validate(&self) -> Result<()> {
        if self.positives.is_empty() {
            return Err(Error::InvalidParam("positive batch is empty".into()));
        }
        if self.costs.len() != self.positives.len() {
            return Err(Error::Shape(
                "one relabeled cost per positive required".into(),
            ));
        }
        if self.negatives.len() < 2 {
            return Err(Error::InvalidParam(format!(
                "negative field needs at least 2 negatives, got {}",
                self.negatives.len()
            )));
        }
        if !(self.temperature > 0.0) || !(self.beta >= 0.0) {
            return Err(Error::InvalidParam(format!(
                "need T > 0 and beta >= 0 (T = {}, beta = {})",
                self.temperature, self.beta
            )));
        }
        let dim = self.positives[0].len();
        if self
            .positives
            .iter()
            .chain(&self.negatives)
            .any(|v| v.len() != dim)
        {
            return Err(Error::Shape("batch vectors differ in length".into()));
        }
        Ok(())
    }

    fn dim(&self) -> usize {
        self.positives[0].len()
    }

    fn check_point(&self, tau: &[f64]) -> Result<()> {
        if tau.len() != self.dim() {
            return Err(Error::Shape(format!(
                "point has {} entries, batch vectors have {}",
                tau.len(),
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Normalize log-weights after subtracting their maximum.
fn softmax_in_place(logw: &mut [f64]) -> Result<()> {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Numeric("degenerate batch: no finite weight".into()));
    }
    let mut total = 0.0;
    for w in logw.iter_mut() {
        *w = (*w - max).exp();
        total += *w;
    }
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Numeric(
            "degenerate batch: weights do not normalize".into(),
        ));
    }
    for w in logw.iter_mut() {
        *w /= total;
    }
    Ok(())
}

/// `w_i ∝ exp(-β (J̃_i − min_j J̃_j)) · k(τ, τ_i⁺)`, normalized.
pub fn tilted_positive_weights(batch: &DriftBatch, tau: &[f64]) -> Result<Vec<f64>> {
    batch.validate()?;
    batch.check_point(tau)?;
    let j_min = batch.costs.iter().copied().fold(f64::INFINITY, f64::min);
    let mut logw: Vec<f64> = batch
        .positives
        .iter()
        .zip(&batch.costs)
        .map(|(p, &j)| -batch.beta * (j - j_min) - sq_dist(tau, p) / batch.temperature)
        .collect();
    softmax_in_place(&mut logw)?;
    Ok(logw)
}

fn weighted_shift(
    points: &[Vec<f64>],
    weights: &[f64],
    tau: &[f64],
    skip: Option<usize>,
) -> Vec<f64> {
    let mut field = vec![0.0; tau.len()];
    let mut wi = weights.iter();
    for (idx, p) in points.iter().enumerate() {
        if Some(idx) == skip {
            continue;
        }
        let w = *wi.next().expect("one weight per retained point");
        if w == 0.0 {
            continue;
        }
        for ((f, x), t) in field.iter_mut().zip(p).zip(tau) {
            *f += w * (x - t);
        }
    }
    field
}

/// `Σ_i w_i (τ_i⁺ − τ)` with the tilted weights.
pub fn positive_field(batch: &DriftBatch, tau: &[f64]) -> Result<Vec<f64>> {
    let w = tilted_positive_weights(batch, tau)?;
    Ok(weighted_shift(&batch.positives, &w, tau, None))
}

/// Kernel mean shift toward the other negatives, `τ` itself excluded.
pub fn negative_field(batch: &DriftBatch, tau: &[f64], self_index: usize) -> Result<Vec<f64>> {
    batch.validate()?;
    batch.check_point(tau)?;
    if self_index >= batch.negatives.len() {
        return Err(Error::InvalidParam(format!(
            "self index {self_index} outside negative batch of {}",
            batch.negatives.len()
        )));
    }
    let mut logw: Vec<f64> = batch
        .negatives
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != self_index)
        .map(|(_, n)| -sq_dist(tau, n) / batch.temperature)
        .collect();
    softmax_in_place(&mut logw)?;
    Ok(weighted_shift(
        &batch.negatives,
        &logw,
        tau,
        Some(self_index),
    ))
}

/// Full drift `V(τ_j⁻) = V⁺(τ_j⁻) − V⁻(τ_j⁻)` for every negative.
pub fn drift_fields(batch: &DriftBatch) -> Result<Vec<Vec<f64>>> {
    batch.validate()?;
    batch
        .negatives
        .iter()
        .enumerate()
        .map(|(j, tau)| {
            let pos = positive_field(batch, tau)?;
            let neg = negative_field(batch, tau, j)?;
            Ok(pos.iter().zip(&neg).map(|(p, n)| p - n).collect())
        })
        .collect()
}

/// Regression targets `τ_j⁻ + V(τ_j⁻)`; constants for the optimizer.
pub fn drift_targets(batch: &DriftBatch) -> Result<Vec<Vec<f64>>> {
    let fields = drift_fields(batch)?;
    Ok(batch
        .negatives
        .iter()
        .zip(fields)
        .map(|(n, v)| n.iter().zip(&v).map(|(a, b)| a + b).collect())
        .collect())
}

/// Same targets packed as a matrix, one row per negative.
pub fn drift_target_matrix(batch: &DriftBatch) -> Result<Array2<f64>> {
    let targets = drift_targets(batch)?;
    let rows = targets.len();
    let cols = batch.dim();
    Array2::from_shape_vec((rows, cols), targets.into_iter().flatten().collect())
        .map_err(|e| Error::Shape(e.to_string()))
}

/// Closed-form tilt `p_β ∝ exp(-β J) p_0` over a finite set of atoms.
pub fn tilted_distribution(p0: &[f64], costs: &[f64], beta: f64) -> Result<Vec<f64>> {
    if p0.len() != costs.len() {
        return Err(Error::Shape("reference and costs differ in length".into()));
    }
    let j_min = costs
        .iter()
        .zip(p0)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&j, _)| j)
        .fold(f64::INFINITY, f64::min);
    let mut logw: Vec<f64> = p0
        .iter()
        .zip(costs)
        .map(|(&p, &j)| {
            if p > 0.0 {
                p.ln() - beta * (j - j_min)
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    softmax_in_place(&mut logw)?;
    Ok(logw)
}

/// `E_p[J] + KL(p ‖ p_0) / β`, with `0 · log 0 = 0`.
pub fn free_energy(p: &[f64], p0: &[f64], costs: &[f64], beta: f64) -> Result<f64> {
    if p.len() != p0.len() || p.len() != costs.len() {
        return Err(Error::Shape(
            "free energy arguments differ in length".into(),
        ));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidParam("free energy needs beta > 0".into()));
    }
    let mut expected = 0.0;
    let mut kl = 0.0;
    for ((&pi, &qi), &j) in p.iter().zip(p0).zip(costs) {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(Error::InvalidParam(
                "p puts mass where the reference has none".into(),
            ));
        }
        expected += pi * j;
        kl += pi * (pi / qi).ln();
    }
    Ok(expected + kl / beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian, stream, SimRng};
    use rand::Rng;

    fn random_batch(rng: &mut SimRng, k: usize, m: usize, dim: usize, beta: f64) -> DriftBatch {
        let positives: Vec<Vec<f64>> = (0..k).map(|_| gaussian(rng, dim)).collect();
        let negatives: Vec<Vec<f64>> = (0..m).map(|_| gaussian(rng, dim)).collect();
        let costs = (0..k).map(|_| rng.random_range(0.0..5.0)).collect();
        let temperature = median_temperature(&positives);
        DriftBatch {
            positives,
            costs,
            negatives,
            beta,
            temperature,
        }
    }

    #[test]
    fn relative_frame_edge_cases() {
        let layout = Layout::new(3, 2, 1);
        let mut tau = Trajectory::zeros(layout);
        tau.controls.fill(0.7);
        let f = to_relative(&tau);
        assert_eq!(f.vec, tau.flatten());

        let mut still = Trajectory::zeros(layout);
        for mut row in still.states.rows_mut() {
            row.assign(&ndarray::array![1.5, -0.5]);
        }
        assert!(to_relative(&still).vec.iter().all(|&v| v == 0.0));

        let zero = FlatTraj::relative(layout, vec![0.0; layout.len()]).unwrap();
        let back = to_absolute(&zero, &[2.0, 3.0]).unwrap();
        assert!(back
            .states
            .rows()
            .into_iter()
            .all(|r| r.to_vec() == vec![2.0, 3.0]));
        assert!(back.controls.iter().all(|&u| u == 0.0));
    }

    #[test]
    fn absolute_input_rejected() {
        let layout = Layout::new(1, 2, 1);
        let f = FlatTraj {
            vec: vec![0.0; layout.len()],
            frame: Frame::Absolute,
            layout,
        };
        assert!(to_absolute(&f, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn relative_roundtrip_is_bit_exact() {
        let layout = Layout::new(5, 2, 1);
        let mut rng = stream(12, 0);
        for _ in 0..100 {
            let mut flat = gaussian(&mut rng, layout.len());
            flat.iter_mut().for_each(|v| *v *= 4.0);
            let tau = Trajectory::from_flat(layout, &flat).unwrap();
            let x0 = tau.initial_state().to_vec();
            let back = to_absolute(&to_relative(&tau), &x0).unwrap();
            // x + x0 - x0 is not always bit-exact; the contract is on the stored values
            let rel = to_relative(&tau);
            let again = to_relative(&back);
            assert_eq!(rel.vec, again.vec);
            assert_eq!(back.controls, tau.controls);
            assert_eq!(back.states.row(0), tau.states.row(0));
        }
    }

    #[test]
    fn kernel_values() {
        let layout = Layout::new(1, 1, 1);
        let a = FlatTraj::relative(layout, vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(kernel(&a, &a, 0.3).unwrap(), 1.0);
        let b = FlatTraj::relative(layout, vec![1.0, 1.0, 2.0]).unwrap();
        assert!((kernel(&a, &b, 1.0).unwrap() - (-1f64).exp()).abs() < 1e-15);
        assert!(kernel(&a, &b, 0.0).is_err());
        let mut rng = stream(1, 0);
        for _ in 0..100 {
            let x = FlatTraj::relative(layout, gaussian(&mut rng, 3)).unwrap();
            let y = FlatTraj::relative(layout, gaussian(&mut rng, 3)).unwrap();
            assert_eq!(kernel(&x, &y, 0.7).unwrap(), kernel(&y, &x, 0.7).unwrap());
        }
    }

    #[test]
    fn kernel_scale_covariance() {
        let layout = Layout::new(2, 2, 1);
        let mut rng = stream(2, 0);
        for _ in 0..50 {
            let x = gaussian(&mut rng, layout.len());
            let y = gaussian(&mut rng, layout.len());
            let k1 = kernel(
                &FlatTraj::relative(layout, x.clone()).unwrap(),
                &FlatTraj::relative(layout, y.clone()).unwrap(),
                1.3,
            )
            .unwrap();
            // scaling by 2 multiplies squared distances by 4
            let k2 = kernel(
                &FlatTraj::relative(layout, x.iter().map(|v| 2.0 * v).collect()).unwrap(),
                &FlatTraj::relative(layout, y.iter().map(|v| 2.0 * v).collect()).unwrap(),
                4.0 * 1.3,
            )
            .unwrap();
            assert!((k1 - k2).abs() <= 1e-14);
        }
    }

    #[test]
    fn beta_zero_and_constant_costs_agree() {
        let mut rng = stream(3, 0);
        let mut batch = random_batch(&mut rng, 6, 4, 5, 0.0);
        let tau = batch.negatives[0].clone();
        let w0 = tilted_positive_weights(&batch, &tau).unwrap();
        let kern: Vec<f64> = batch
            .positives
            .iter()
            .map(|p| (-sq_dist(&tau, p) / batch.temperature).exp())
            .collect();
        let total: f64 = kern.iter().sum();
        for (w, k) in w0.iter().zip(&kern) {
            assert!((w - k / total).abs() < 1e-14);
        }
        batch.beta = 3.0;
        batch.costs = vec![2.5; 6];
        let wc = tilted_positive_weights(&batch, &tau).unwrap();
        assert_eq!(w0, wc);
    }

    #[test]
    fn large_beta_selects_cheapest() {
        let positives = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0]];
        let batch = DriftBatch {
            positives,
            costs: vec![3.0, 1.0, 2.0],
            negatives: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            beta: 1e3,
            temperature: 1.0,
        };
        let w = tilted_positive_weights(&batch, &[0.0, 0.0]).unwrap();
        assert!(w[1] >= 1.0 - 1e-6);
    }

    #[test]
    fn shift_invariance_is_bit_exact_for_representable_shifts() {
        let mut rng = stream(4, 0);
        for _ in 0..50 {
            let mut batch = random_batch(&mut rng, 8, 3, 4, 1.7);
            batch.costs = batch
                .costs
                .iter()
                .map(|c| (c * 8.0).round() / 8.0)
                .collect();
            let tau = batch.negatives[1].clone();
            let w = tilted_positive_weights(&batch, &tau).unwrap();
            let shift = f64::from(rng.random_range(-50..50i32));
            batch.costs.iter_mut().for_each(|c| *c += shift);
            assert_eq!(w, tilted_positive_weights(&batch, &tau).unwrap());
            let sum: f64 = w.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-12 && w.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn positive_field_symmetries() {
        let single = DriftBatch {
            positives: vec![vec![0.4, -1.0]],
            costs: vec![1.0],
            negatives: vec![vec![0.0, 0.0], vec![1.0, 1.0]],
            beta: 1.0,
            temperature: 1.0,
        };
        assert_eq!(
            positive_field(&single, &[0.4, -1.0]).unwrap(),
            vec![0.0, 0.0]
        );

        let pair = DriftBatch {
            positives: vec![vec![1.0, 2.5], vec![-1.0, 1.5]],
            costs: vec![0.5, 0.5],
            negatives: vec![vec![0.0, 0.0], vec![1.0, 1.0]],
            beta: 2.0,
            temperature: 0.8,
        };
        let f = positive_field(&pair, &[0.0, 2.0]).unwrap();
        assert!(f.iter().all(|v| v.abs() < 1e-15));
    }

    /// Unweighted mean shift under the explicitly tilted categorical law.
    fn field_under_explicit_tilt(batch: &DriftBatch, tau: &[f64]) -> Vec<f64> {
        let k = batch.positives.len();
        let p_beta =
            tilted_distribution(&vec![1.0 / k as f64; k], &batch.costs, batch.beta).unwrap();
        let mut num = vec![0.0; tau.len()];
        let mut den = 0.0;
        for (p, pi) in batch.positives.iter().zip(&p_beta) {
            let kv = (-sq_dist(tau, p) / batch.temperature).exp();
            den += pi * kv;
            for ((n, x), t) in num.iter_mut().zip(p).zip(tau) {
                *n += pi * kv * (x - t);
            }
        }
        num.iter().map(|n| n / den).collect()
    }

    #[test]
    fn tilting_identity_holds_on_random_batches() {
        let mut rng = stream(5, 0);
        for &beta in &[0.0, 0.1, 1.0, 10.0] {
            for _ in 0..100 {
                let batch = random_batch(&mut rng, 8, 4, 6, beta);
                for tau in &batch.negatives {
                    let a = positive_field(&batch, tau).unwrap();
                    let b = field_under_explicit_tilt(&batch, tau);
                    for (x, y) in a.iter().zip(&b) {
                        assert!((x - y).abs() <= 1e-12, "beta {beta}: {x} vs {y}");
                    }
                }
            }
        }
    }

    #[test]
    fn negative_field_edge_cases() {
        let batch = DriftBatch {
            positives: vec![vec![0.0, 0.0]],
            costs: vec![0.0],
            negatives: vec![vec![1.0, 2.0], vec![-3.0, 0.5]],
            beta: 0.0,
            temperature: 0.5,
        };
        assert_eq!(
            negative_field(&batch, &[1.0, 2.0], 0).unwrap(),
            vec![-4.0, -1.5]
        );

        let same = DriftBatch {
            negatives: vec![vec![0.3, 0.3]; 4],
            ..batch.clone()
        };
        assert_eq!(
            negative_field(&same, &[0.3, 0.3], 2).unwrap(),
            vec![0.0, 0.0]
        );

        let lonely = DriftBatch {
            negatives: vec![vec![0.0, 0.0]],
            ..batch
        };
        assert!(negative_field(&lonely, &[0.0, 0.0], 0).is_err());
    }

    #[test]
    fn negative_field_matches_explicit_exclusion() {
        let mut rng = stream(6, 0);
        for _ in 0..100 {
            let batch = random_batch(&mut rng, 3, 7, 5, 0.0);
            for (j, tau) in batch.negatives.iter().enumerate() {
                let fast = negative_field(&batch, tau, j).unwrap();
                let others: Vec<&Vec<f64>> = batch
                    .negatives
                    .iter()
                    .enumerate()
                    .filter_map(|(i, n)| (i != j).then_some(n))
                    .collect();
                let ks: Vec<f64> = others
                    .iter()
                    .map(|n| (-sq_dist(tau, n) / batch.temperature).exp())
                    .collect();
                let den: f64 = ks.iter().sum();
                for d in 0..tau.len() {
                    let num: f64 = others
                        .iter()
                        .zip(&ks)
                        .map(|(n, k)| k * (n[d] - tau[d]))
                        .sum();
                    assert!((fast[d] - num / den).abs() <= 1e-14);
                }
            }
        }
    }

    #[test]
    fn one_dimensional_drift_points_at_positive() {
        let batch = DriftBatch {
            positives: vec![vec![1.0]],
            costs: vec![0.0],
            negatives: vec![vec![-1.0], vec![-1.0 + 1e-6]],
            beta: 0.0,
            temperature: 1.0,
        };
        let v = drift_fields(&batch).unwrap();
        // V⁺ = 1 − τ_j, V⁻ = τ_other − τ_j
        assert!((v[0][0] - (2.0 - 1e-6)).abs() < 1e-12);
        assert!((v[1][0] - 2.0).abs() < 1e-12);
        assert!(v.iter().all(|f| f[0] > 0.0));
    }

    #[test]
    fn equilibrium_targets_and_loss_identity() {
        let batch = DriftBatch {
            positives: vec![vec![1.0, 0.0], vec![-1.0, 0.0]],
            costs: vec![0.0, 0.0],
            negatives: vec![
                vec![1.0, 0.0],
                vec![1.0, 0.0],
                vec![-1.0, 0.0],
                vec![-1.0, 0.0],
            ],
            beta: 0.0,
            temperature: 1e-3,
        };
        let targets = drift_targets(&batch).unwrap();
        // two negatives on each atom: no pull toward the positives and no push
        // from the twin
        for (t, n) in targets.iter().zip(&batch.negatives) {
            for (a, b) in t.iter().zip(n) {
                assert!((a - b).abs() < 1e-12);
            }
        }

        let mut rng = stream(7, 0);
        let random = random_batch(&mut rng, 5, 6, 4, 0.5);
        let fields = drift_fields(&random).unwrap();
        let targets = drift_targets(&random).unwrap();
        let loss: f64 = random
            .negatives
            .iter()
            .zip(&targets)
            .map(|(n, t)| sq_dist(n, t))
            .sum::<f64>()
            / 6.0;
        let field_norm: f64 = fields
            .iter()
            .map(|v| v.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            / 6.0;
        assert!((loss - field_norm).abs() <= 1e-12 * field_norm.max(1.0));
    }

    #[test]
    fn equilibrium_is_distributional_fixed_point() {
        // negatives resampled from the positive atoms: the mean drift norm
        // should not depend on which independent resample is used
        let mut rng = stream(8, 0);
        let atoms: Vec<Vec<f64>> = (0..12).map(|_| gaussian(&mut rng, 3)).collect();
        let temperature = median_temperature(&atoms);
        let statistic = |rng: &mut SimRng| -> Vec<f64> {
            (0..1000)
                .map(|_| {
                    let negatives: Vec<Vec<f64>> = (0..8)
                        .map(|_| atoms[rng.random_range(0..atoms.len())].clone())
                        .collect();
                    let batch = DriftBatch {
                        positives: atoms.clone(),
                        costs: vec![0.0; atoms.len()],
                        negatives,
                        beta: 0.0,
                        temperature,
                    };
                    let v = drift_fields(&batch).unwrap();
                    v.iter()
                        .map(|f| f.iter().map(|x| x * x).sum::<f64>().sqrt())
                        .sum::<f64>()
                        / 8.0
                })
                .collect()
        };
        let a = statistic(&mut stream(8, 1));
        let b = statistic(&mut stream(8, 2));
        let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
        let var = |x: &[f64], m: f64| {
            x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
        };
        let (ma, mb) = (mean(&a), mean(&b));
        let t = (ma - mb) / (var(&a, ma) / 1000.0 + var(&b, mb) / 1000.0).sqrt();
        assert!(t.abs() < 1.96, "welch t = {t}");
    }

    #[test]
    fn free_energy_basics() {
        let p0 = vec![0.25, 0.25, 0.5];
        let costs = vec![1.0, 3.0, 2.0];
        let fe = free_energy(&p0, &p0, &costs, 2.0).unwrap();
        assert!((fe - (0.25 + 0.75 + 1.0)).abs() < 1e-15);
        assert!(free_energy(&[0.5, 0.5, 0.0], &[1.0, 0.0, 0.0], &costs, 1.0).is_err());
        let sharp = tilted_distribution(&p0, &costs, 1e6).unwrap();
        assert!(sharp[0] > 1.0 - 1e-12);
    }

    #[test]
    fn closed_form_tilt_minimizes_free_energy() {
        let mut rng = stream(9, 0);
        for _ in 0..5 {
            let raw: Vec<f64> = (0..10).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let p0: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let costs: Vec<f64> = (0..10).map(|_| rng.random_range(0.0..10.0)).collect();
            let beta = rng.random_range(0.1..3.0);
            let p_beta = tilted_distribution(&p0, &costs, beta).unwrap();
            let best = free_energy(&p_beta, &p0, &costs, beta).unwrap();
            for _ in 0..1000 {
                let mut p: Vec<f64> = p_beta
                    .iter()
                    .map(|v| (v * (1.0 + 0.5 * rng.random_range(-1.0..1.0))).max(0.0))
                    .collect();
                let s: f64 = p.iter().sum();
                p.iter_mut().for_each(|v| *v /= s);
                assert!(free_energy(&p, &p0, &costs, beta).unwrap() - best >= -1e-10);
            }
        }
    }
}
