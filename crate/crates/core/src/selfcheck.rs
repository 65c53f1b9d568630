//! Fast runtime checks of the core numerical identities.

use std::path::Path;

use ndarray::{s, Array2};
use rand::Rng;

use crate::checkpoint::{Checkpoint, ModelKind};
use crate::cost::{cost, CostParams};
use crate::drift::{positive_field, tilted_distribution, DriftBatch};
use crate::dynamics::{discretize_zoh, rollout, MsdParams};
use crate::nn::{Activation, Mlp};
use crate::oracle::{solve_riccati, LqrController};
use crate::rng::{gaussian, stream, uniform};
use crate::trainer::DriftingModel;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &str, worst: f64, tol: f64) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed: worst <= tol,
        detail: format!("max error {worst:.3e} (tolerance {tol:.0e})"),
    }
}

fn failed(name: &str, err: impl std::fmt::Display) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed: false,
        detail: err.to_string(),
    }
}

/// Kernel-weighted positive field against the field under the explicitly tilted categorical.
pub fn check_tilting() -> CheckResult {
    let name = "tilted weights match explicit tilting";
    let run = || -> crate::Result<f64> {
        let mut worst: f64 = 0.0;
        let mut r = stream(1, 0);
        for _ in 0..20 {
            let k = 6;
            let positives: Vec<Vec<f64>> = (0..k).map(|_| gaussian(&mut r, 4)).collect();
            let costs: Vec<f64> = (0..k).map(|_| uniform(&mut r, 0.0, 5.0)).collect();
            let tau = gaussian(&mut r, 4);
            for beta in [0.0, 0.1, 1.0, 10.0] {
                let batch = DriftBatch {
                    positives: positives.clone(),
                    costs: costs.clone(),
                    negatives: vec![vec![0.0; 4]; 2],
                    beta,
                    temperature: 1.5,
                };
                let field = positive_field(&batch, &tau)?;
                let kern: Vec<f64> = positives
                    .iter()
                    .map(|p| (-crate::drift::sq_dist(&tau, p) / 1.5).exp())
                    .collect();
                let total: f64 = kern.iter().sum();
                let p0: Vec<f64> = kern.iter().map(|w| w / total).collect();
                let p = tilted_distribution(&p0, &costs, beta)?;
                for d in 0..4 {
                    let expected: f64 = p
                        .iter()
                        .zip(&positives)
                        .map(|(w, x)| w * (x[d] - tau[d]))
                        .sum();
                    worst = worst.max((expected - field[d]).abs());
                }
            }
        }
        Ok(worst)
    };
    run().map_or_else(|e| failed(name, e), |w| outcome(name, w, 1e-12))
}

/// Reverse-mode gradient of the constant-target loss against central differences.
pub fn check_gradient() -> CheckResult {
    let name = "network gradient matches finite differences";
    let run = || -> crate::Result<f64> {
        let mut r = stream(2, 0);
        let mut net = Mlp::new(vec![3, 6, 2], Activation::Silu, &mut r)?;
        let input = Array2::from_shape_fn((4, 3), |_| r.random::<f64>() - 0.5);
        let target = Array2::from_shape_fn((4, 2), |_| r.random::<f64>() - 0.5);
        let (_, grad) = net.mse_to_constant(input.view(), target.view())?;
        let h = 1e-6;
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for i in 0..grad.len() {
            let orig = net.params()[i];
            net.params_mut()[i] = orig + h;
            let (lp, _) = net.mse_to_constant(input.view(), target.view())?;
            net.params_mut()[i] = orig - h;
            let (lm, _) = net.mse_to_constant(input.view(), target.view())?;
            net.params_mut()[i] = orig;
            let fd = (lp - lm) / (2.0 * h);
            num += (fd - grad[i]).powi(2);
            den += grad[i].powi(2);
        }
        Ok((num / den.max(1e-300)).sqrt())
    };
    run().map_or_else(|e| failed(name, e), |w| outcome(name, w, 1e-4))
}

/// LQR closed-loop cost against the Riccati value.
pub fn check_riccati() -> CheckResult {
    let name = "LQR rollout cost equals Riccati value";
    let run = || -> crate::Result<f64> {
        let sys = discretize_zoh(&MsdParams::default())?;
        let mut r = stream(3, 0);
        let mut worst: f64 = 0.0;
        for _ in 0..10 {
            let omega = CostParams::new(
                vec![uniform(&mut r, 0.5, 5.0), uniform(&mut r, 0.5, 5.0)],
                vec![uniform(&mut r, 0.05, 1.0)],
            )?;
            let h = r.random_range(1..=60);
            let x0 = vec![uniform(&mut r, -2.0, 2.0), uniform(&mut r, -2.0, 2.0)];
            let sol = solve_riccati(&sys, &omega, h)?;
            let mut ctrl = LqrController {
                solution: &sol,
                action_noise: 0.0,
            };
            let tau = rollout(&sys, &x0, &mut ctrl, h, &mut r)?;
            worst = worst.max((cost(&tau, &omega)? - sol.value(&x0)).abs());
        }
        Ok(worst)
    };
    run().map_or_else(|e| failed(name, e), |w| outcome(name, w, 1e-8))
}

/// ZOH discretization against a 40-term Taylor series of the augmented exponential.
pub fn check_zoh() -> CheckResult {
    let name = "ZOH discretization matches Taylor series";
    let run = || -> crate::Result<f64> {
        let p = MsdParams::default();
        let sys = discretize_zoh(&p)?;
        let (a, b) = p.continuous();
        let mut aug = Array2::<f64>::zeros((3, 3));
        aug.slice_mut(s![..2, ..2]).assign(&(&a * p.dt));
        aug.slice_mut(s![..2, 2..]).assign(&(&b * p.dt));
        let mut term = Array2::<f64>::eye(3);
        let mut sum = term.clone();
        for k in 1..=40 {
            term = term.dot(&aug) / k as f64;
            sum += &term;
        }
        let da = (&sys.a - &sum.slice(s![..2, ..2]))
            .mapv(f64::abs)
            .fold(0.0f64, |m, v| m.max(*v));
        let db = (&sys.b - &sum.slice(s![..2, 2..]))
            .mapv(f64::abs)
            .fold(0.0f64, |m, v| m.max(*v));
        Ok(da.max(db))
    };
    run().map_or_else(|e| failed(name, e), |w| outcome(name, w, 1e-12))
}

/// Load a checkpoint and run one forward pass.
pub fn check_checkpoint(path: &Path) -> CheckResult {
    let name = format!("checkpoint {}", path.display());
    let run = || -> crate::Result<String> {
        let ck = Checkpoint::load(path)?;
        if ck.params.iter().any(|v| !v.is_finite()) {
            return Err(crate::Error::Numeric("non-finite parameters".into()));
        }
        let m = &ck.manifest;
        if m.kind == ModelKind::Ddpm {
            crate::baselines::DdpmModel::from_checkpoint(&ck)?;
        } else {
            let model = DriftingModel::from_checkpoint(&ck)?;
            let g = &model.generator;
            g.forward(&vec![0.0; g.d_eps], &g.norm.cond_mean)?;
        }
        Ok(format!(
            "{} model, H={}, {} parameters",
            m.kind.as_str(),
            m.horizon,
            m.param_count
        ))
    };
    match run() {
        Ok(detail) => CheckResult {
            name,
            passed: true,
            detail,
        },
        Err(e) => failed(&name, e),
    }
}

/// The numerical checks plus one entry per checkpoint.
pub fn run_all(checkpoints: &[&Path]) -> Vec<CheckResult> {
    let mut out = vec![
        check_tilting(),
        check_gradient(),
        check_riccati(),
        check_zoh(),
    ];
    out.extend(checkpoints.iter().map(|p| check_checkpoint(p)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_build_passes() {
        for c in run_all(&[]) {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn corrupt_checkpoint_flagged() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("bad");
        std::fs::write(dir.path().join("bad.toml"), "magic = 3").unwrap();
        std::fs::write(dir.path().join("bad.bin"), b"garbage").unwrap();
        let res = check_checkpoint(&stem);
        assert!(!res.passed);
    }
}
