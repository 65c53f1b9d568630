//! Best-of-M receding-horizon planning over any trajectory sampler.

use std::time::Instant;

use rand::Rng;

use crate::cost::{cost, CostParams};
use crate::drift::{to_absolute, FlatTraj};
use crate::dynamics::DiscreteLinearSystem;
use crate::error::{Error, Result};
use crate::rng::{gaussian, SimRng};
use crate::trainer::DriftingModel;
use crate::trajectory::{Layout, Trajectory};

/// Source of candidate plans in the relative frame.
pub trait TrajectorySampler {
    fn layout(&self) -> Layout;

    /// One relative flat trajectory for current state `x` under cost `omega`.
    fn sample(&self, x: &[f64], omega: &CostParams, rng: &mut SimRng) -> Result<Vec<f64>>;

    /// `m` candidates. Implementations consume `rng` candidate by candidate, so the
    /// first `m` outputs of a larger batch equal a batch of size `m`.
    fn sample_batch(
        &self,
        x: &[f64],
        omega: &CostParams,
        m: usize,
        rng: &mut SimRng,
    ) -> Result<Vec<Vec<f64>>> {
        (0..m).map(|_| self.sample(x, omega, rng)).collect()
    }
}

/// Drifting generator (or drifting prior) as a sampler: one forward pass per batch.
pub struct DriftingSampler<'a> {
    pub model: &'a DriftingModel,
}

impl<'a> DriftingSampler<'a> {
    pub fn new(model: &'a DriftingModel) -> Self {
        Self { model }
    }
}

impl TrajectorySampler for DriftingSampler<'_> {
    fn layout(&self) -> Layout {
        self.model.generator.layout
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
        let g = &self.model.generator;
        let c = self.model.conditioning().vector(x, omega);
        let eps: Vec<Vec<f64>> = (0..m).map(|_| gaussian(rng, g.d_eps)).collect();
        g.forward_batch(&eps, &vec![c; m])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanStep {
    pub costs: Vec<f64>,
    /// 0-based index of the executed candidate.
    pub chosen: usize,
    pub control: Vec<f64>,
    pub seconds: f64,
}

impl PlanStep {
    pub fn chosen_cost(&self) -> f64 {
        self.costs[self.chosen]
    }
}

/// Index of the smallest value; the first one wins ties.
pub fn argmin_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        match best {
            Some(b) if !(*v < values[b]) => {}
            _ if v.is_nan() => {}
            _ => best = Some(i),
        }
    }
    best
}

pub fn plan_step<S: TrajectorySampler + ?Sized>(
    sampler: &S,
    x: &[f64],
    omega: &CostParams,
    m_plan: usize,
    rng: &mut SimRng,
) -> Result<PlanStep> {
    if m_plan == 0 {
        return Err(Error::InvalidParam("m_plan must be >= 1".into()));
    }
    let start = Instant::now();
    let layout = sampler.layout();
    let candidates = sampler.sample_batch(x, omega, m_plan, rng)?;
    let mut trajectories = Vec::with_capacity(m_plan);
    let mut costs = Vec::with_capacity(m_plan);
    for flat in candidates {
        let tau = to_absolute(&FlatTraj::relative(layout, flat)?, x)?;
        costs.push(cost(&tau, omega)?);
        trajectories.push(tau);
    }
    let chosen =
        argmin_first(&costs).ok_or_else(|| Error::Numeric("every candidate cost is NaN".into()))?;
    let control = trajectories[chosen].controls.row(0).to_vec();
    Ok(PlanStep {
        costs,
        chosen,
        control,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop {
    pub trajectory: Trajectory,
    pub cost: f64,
    /// Planning time per step (sampling, scoring, selection), seconds.
    pub step_seconds: Vec<f64>,
}

impl ClosedLoop {
    pub fn total_seconds(&self) -> f64 {
        self.step_seconds.iter().sum()
    }
}

/// Run `horizon` planning steps against the true dynamics from `x0`.
pub fn run_closed_loop<S: TrajectorySampler + ?Sized>(
    sampler: &S,
    sys: &DiscreteLinearSystem,
    x0: &[f64],
    omega: &CostParams,
    horizon: usize,
    m_plan: usize,
    rng: &mut SimRng,
) -> Result<ClosedLoop> {
    let layout = Layout::new(horizon, sys.d_x(), sys.d_u());
    if sampler.layout().d_x != layout.d_x || sampler.layout().d_u != layout.d_u {
        return Err(Error::Shape(
            "sampler dimensions do not match the system".into(),
        ));
    }
    let mut tau = Trajectory::zeros(layout);
    let mut x = x0.to_vec();
    tau.states.row_mut(0).assign(&ndarray::ArrayView1::from(&x));
    let mut step_seconds = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let step = plan_step(sampler, &x, omega, m_plan, rng)?;
        step_seconds.push(step.seconds);
        x = sys.step(&x, &step.control)?;
        tau.controls
            .row_mut(t)
            .assign(&ndarray::ArrayView1::from(&step.control));
        tau.states
            .row_mut(t + 1)
            .assign(&ndarray::ArrayView1::from(&x));
    }
    let cost = cost(&tau, omega)?;
    Ok(ClosedLoop {
        trajectory: tau,
        cost,
        step_seconds,
    })
}

/// Candidate-cost model with a known δ-optimal set.
///
/// A candidate lands in the δ-optimal set with probability `max(0, η − ε)`:
/// the perturbation `ε` moves that much mass off the set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticCandidates {
    pub eta: f64,
    pub epsilon: f64,
    pub delta: f64,
}

impl SyntheticCandidates {
    pub fn new(eta: f64, epsilon: f64) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) || !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidParam(format!(
                "need eta in (0,1] and epsilon in [0,1], got {eta}, {epsilon}"
            )));
        }
        Ok(Self {
            eta,
            epsilon,
            delta: 0.1,
        })
    }

    pub fn good_mass(&self) -> f64 {
        (self.eta - self.epsilon).max(0.0)
    }

    /// Suboptimality of one candidate: in `[0, δ]` on the good set, in `(δ, 1 + δ]` off it.
    pub fn draw(&self, rng: &mut SimRng) -> f64 {
        let good = rng.random::<f64>() < self.good_mass();
        let v = rng.random::<f64>();
        if good {
            self.delta * v
        } else {
            self.delta + (1.0 - v)
        }
    }
}

/// Fraction of trials in which best-of-`m_plan` misses the δ-optimal set.
pub fn best_of_m_failure_rate(
    sampler: &SyntheticCandidates,
    m_plan: usize,
    trials: usize,
    rng: &mut SimRng,
) -> Result<f64> {
    if m_plan == 0 || trials == 0 {
        return Err(Error::InvalidParam("m_plan and trials must be >= 1".into()));
    }
    let mut failures = 0usize;
    let mut costs = vec![0.0; m_plan];
    for _ in 0..trials {
        for c in costs.iter_mut() {
            *c = sampler.draw(rng);
        }
        let best = argmin_first(&costs).expect("finite costs");
        if costs[best] > sampler.delta {
            failures += 1;
        }
    }
    Ok(failures as f64 / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::to_relative;
    use crate::dynamics::{discretize_zoh, rollout, MsdParams};
    use crate::oracle::{oracle_control, solve_riccati, LqrController, RiccatiSolution};
    use crate::rng::stream;
    use std::cell::Cell;

    /// Emits fixed relative plans in order, cycling.
    struct Fixed {
        layout: Layout,
        plans: Vec<Vec<f64>>,
        next: Cell<usize>,
    }

    impl TrajectorySampler for Fixed {
        fn layout(&self) -> Layout {
            self.layout
        }
        fn sample(&self, _: &[f64], _: &CostParams, _: &mut SimRng) -> Result<Vec<f64>> {
            let i = self.next.get();
            self.next.set(i + 1);
            Ok(self.plans[i % self.plans.len()].clone())
        }
    }

    /// Time-varying LQR plan from the current state, advancing one stage per call.
    struct OracleSampler<'a> {
        sys: &'a DiscreteLinearSystem,
        sol: &'a RiccatiSolution,
        t: Cell<usize>,
    }

    impl TrajectorySampler for OracleSampler<'_> {
        fn layout(&self) -> Layout {
            Layout::new(self.sol.horizon(), self.sys.d_x(), self.sys.d_u())
        }
        fn sample(&self, x: &[f64], _: &CostParams, _: &mut SimRng) -> Result<Vec<f64>> {
            let t0 = self.t.get();
            self.t.set(t0 + 1);
            let h = self.sol.horizon();
            let mut tau = Trajectory::zeros(self.layout());
            let mut s = x.to_vec();
            tau.states.row_mut(0).assign(&ndarray::ArrayView1::from(&s));
            for k in 0..h {
                let u = if t0 + k < h {
                    oracle_control(self.sol, t0 + k, &s)?
                } else {
                    vec![0.0]
                };
                s = self.sys.step(&s, &u)?;
                tau.controls
                    .row_mut(k)
                    .assign(&ndarray::ArrayView1::from(&u));
                tau.states
                    .row_mut(k + 1)
                    .assign(&ndarray::ArrayView1::from(&s));
            }
            Ok(to_relative(&tau).vec)
        }
    }

    fn constant_control_plan(layout: Layout, u: f64) -> Vec<f64> {
        let mut v = vec![0.0; layout.len()];
        for t in 0..layout.horizon {
            v[layout.control_offset(t)] = u;
        }
        v
    }

    #[test]
    fn argmin_ties_and_nan() {
        assert_eq!(argmin_first(&[5.0, 3.0, 7.0]), Some(1));
        assert_eq!(argmin_first(&[2.0, 1.0, 1.0]), Some(1));
        assert_eq!(argmin_first(&[f64::NAN, 4.0]), Some(1));
        assert_eq!(argmin_first(&[]), None);
    }

    #[test]
    fn single_candidate_and_known_costs() {
        let layout = Layout::new(1, 1, 1);
        let omega = CostParams::new(vec![0.0], vec![1.0]).unwrap();
        // costs of u = sqrt(5), sqrt(3), sqrt(7) are 5, 3, 7
        let plans: Vec<Vec<f64>> = [5.0f64, 3.0, 7.0]
            .iter()
            .map(|c| vec![0.0, c.sqrt(), 0.0])
            .collect();
        let s = Fixed {
            layout,
            plans: plans.clone(),
            next: Cell::new(0),
        };
        let step = plan_step(&s, &[0.0], &omega, 3, &mut stream(0, 0)).unwrap();
        assert_eq!(step.chosen, 1);
        assert!((step.chosen_cost() - 3.0).abs() < 1e-12);
        assert!(step.costs.iter().all(|&c| step.chosen_cost() <= c));

        let s = Fixed {
            layout,
            plans,
            next: Cell::new(0),
        };
        let one = plan_step(&s, &[0.0], &omega, 1, &mut stream(0, 0)).unwrap();
        assert_eq!(one.chosen, 0);
        assert_eq!(one.control, vec![5f64.sqrt()]);

        let tie = Fixed {
            layout,
            plans: vec![vec![0.0, 1.0, 0.0], vec![0.0, -1.0, 0.0]],
            next: Cell::new(0),
        };
        let step = plan_step(&tie, &[0.0], &omega, 2, &mut stream(0, 0)).unwrap();
        assert_eq!(step.chosen, 0);
        assert_eq!(step.control, vec![1.0]);
    }

    #[test]
    fn zero_m_plan_rejected() {
        let s = Fixed {
            layout: Layout::new(1, 1, 1),
            plans: vec![vec![0.0; 3]],
            next: Cell::new(0),
        };
        let omega = CostParams::new(vec![1.0], vec![1.0]).unwrap();
        assert!(plan_step(&s, &[0.0], &omega, 0, &mut stream(0, 0)).is_err());
    }

    #[test]
    fn oracle_sampler_reproduces_oracle_cost() {
        let sys = discretize_zoh(&MsdParams::default()).unwrap();
        let omega = CostParams::new(vec![1.0, 1.0], vec![0.1]).unwrap();
        let h = 30;
        let sol = solve_riccati(&sys, &omega, h).unwrap();
        let x0 = [1.3, -0.4];
        let s = OracleSampler {
            sys: &sys,
            sol: &sol,
            t: Cell::new(0),
        };
        let out = run_closed_loop(&s, &sys, &x0, &omega, h, 1, &mut stream(0, 0)).unwrap();
        assert!((out.cost - sol.value(&x0)).abs() < 1e-8);
        let mut ctrl = LqrController {
            solution: &sol,
            action_noise: 0.0,
        };
        let direct = rollout(&sys, &x0, &mut ctrl, h, &mut stream(0, 1)).unwrap();
        assert!((cost(&direct, &omega).unwrap() - out.cost).abs() < 1e-8);
        assert_eq!(out.step_seconds.len(), h);
    }

    #[test]
    fn zero_control_matches_lyapunov_sum() {
        let sys = discretize_zoh(&MsdParams::default()).unwrap();
        let omega = CostParams::new(vec![1.0, 1.0], vec![0.1]).unwrap();
        let h = 30;
        let layout = Layout::new(h, 2, 1);
        let s = Fixed {
            layout,
            plans: vec![constant_control_plan(layout, 0.0)],
            next: Cell::new(0),
        };
        let out = run_closed_loop(&s, &sys, &[1.0, 0.0], &omega, h, 4, &mut stream(0, 0)).unwrap();
        // x0ᵀ(Σ_{k=0}^{H} (Aᵏ)ᵀ Q Aᵏ) x0 with Q = I is Σ ‖Aᵏ x0‖²
        let mut x = ndarray::arr1(&[1.0, 0.0]);
        let mut expected = 0.0;
        for _ in 0..=h {
            expected += x.dot(&x);
            x = sys.a.dot(&x);
        }
        assert!((out.cost - expected).abs() < 1e-10 * expected);
    }

    #[test]
    fn superset_never_worse() {
        let layout = Layout::new(3, 1, 1);
        let omega = CostParams::new(vec![1.0], vec![0.5]).unwrap();
        struct Noise(Layout);
        impl TrajectorySampler for Noise {
            fn layout(&self) -> Layout {
                self.0
            }
            fn sample(&self, _: &[f64], _: &CostParams, rng: &mut SimRng) -> Result<Vec<f64>> {
                Ok(gaussian(rng, self.0.len()))
            }
        }
        for seed in 0..50 {
            let mut prev = f64::INFINITY;
            for m in 1..=12 {
                let step =
                    plan_step(&Noise(layout), &[0.3], &omega, m, &mut stream(seed, 0)).unwrap();
                assert!(step.chosen_cost() <= prev);
                prev = step.chosen_cost();
            }
        }
    }

    #[test]
    fn failure_rate_laws() {
        let mut rng = stream(3, 0);
        let always = SyntheticCandidates::new(1.0, 0.0).unwrap();
        assert_eq!(
            best_of_m_failure_rate(&always, 1, 1000, &mut rng).unwrap(),
            0.0
        );

        let trials = 100_000;
        for (eta, m) in [(0.3, 1usize), (0.2, 10)] {
            let s = SyntheticCandidates::new(eta, 0.0).unwrap();
            let rate = best_of_m_failure_rate(&s, m, trials, &mut rng).unwrap();
            let p = (1.0 - eta).powi(m as i32);
            let sigma = (p * (1.0 - p) / trials as f64).sqrt();
            assert!(
                (rate - p).abs() <= 3.0 * sigma,
                "eta {eta} m {m}: {rate} vs {p}"
            );
            assert!(rate <= (-(m as f64) * eta).exp() + 3.0 * sigma);
        }
    }
}
