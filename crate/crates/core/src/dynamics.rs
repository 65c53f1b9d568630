//! Mass-spring-damper model, exact zero-order-hold discretization and
//! closed-loop rollouts against the true discrete dynamics.

use ndarray::{s, Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::cost::Trajectory;
use crate::error::{ensure_finite, Error, Result};
use crate::linalg;
use crate::rng::{self, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsdParams {
    pub mass: f64,
    pub spring: f64,
    pub damping: f64,
    pub dt: f64,
}

impl Default for MsdParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            spring: 1.0,
            damping: 0.2,
            dt: 0.05,
        }
    }
}

impl MsdParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.mass > 0.0
            && self.dt > 0.0
            && self.spring >= 0.0
            && self.damping >= 0.0
            && [self.mass, self.spring, self.damping, self.dt]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!(
                "mass-spring-damper needs m > 0, dt > 0, k_s >= 0, c >= 0 (got {self:?})"
            )))
        }
    }

    /// Continuous-time `(A, B)` for state `(position, velocity)`.
    pub fn continuous(&self) -> (Array2<f64>, Array2<f64>) {
        let m = self.mass;
        let a = ndarray::array![[0.0, 1.0], [-self.spring / m, -self.damping / m]];
        let b = ndarray::array![[0.0], [1.0 / m]];
        (a, b)
    }
}

/// `x_{t+1} = A_d x_t + B_d u_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLinearSystem {
    pub a: Array2<f64>,
    pub b: Array2<f64>,
}

impl DiscreteLinearSystem {
    pub fn new(a: Array2<f64>, b: Array2<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() || b.nrows() != a.nrows() || b.ncols() == 0 {
            return Err(Error::Shape(format!(
                "A is {}x{}, B is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        ensure_finite(a.as_slice_memory_order().unwrap_or(&[]), "A_d")?;
        ensure_finite(b.as_slice_memory_order().unwrap_or(&[]), "B_d")?;
        Ok(Self { a, b })
    }

    pub fn d_x(&self) -> usize {
        self.a.nrows()
    }

    pub fn d_u(&self) -> usize {
        self.b.ncols()
    }

    pub fn step(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d_x() || u.len() != self.d_u() {
            return Err(Error::Shape(format!(
                "step expects x in R^{} and u in R^{}, got {} and {}",
                self.d_x(),
                self.d_u(),
                x.len(),
                u.len()
            )));
        }
        let next = self.a.dot(&ArrayView1::from(x)) + self.b.dot(&ArrayView1::from(u));
        Ok(next.to_vec())
    }

    /// Largest eigenvalue modulus of `A_d` (2×2 closed form, power iteration otherwise).
    pub fn spectral_radius(&self) -> f64 {
        if self.d_x() == 2 {
            let (a, b, c, d) = (
                self.a[[0, 0]],
                self.a[[0, 1]],
                self.a[[1, 0]],
                self.a[[1, 1]],
            );
            let tr = a + d;
            let det = a * d - b * c;
            let disc = tr * tr / 4.0 - det;
            if disc >= 0.0 {
                let r = disc.sqrt();
                (tr / 2.0 + r).abs().max((tr / 2.0 - r).abs())
            } else {
                det.abs().sqrt()
            }
        } else {
            let mut v = Array1::<f64>::ones(self.d_x());
            let mut rho = 0.0;
            for _ in 0..500 {
                let w = self.a.dot(&v);
                let norm = w.dot(&w).sqrt();
                if norm == 0.0 {
                    return 0.0;
                }
                rho = norm / v.dot(&v).sqrt();
                v = w / norm;
            }
            rho
        }
    }
}

/// Exact zero-order-hold discretization of `ẋ = A x + B u` with step `dt`.
///
/// Both blocks come out of one exponential of the augmented generator
/// `[[A, B], [0, 0]] · dt`.
pub fn discretize_linear(
    a: &Array2<f64>,
    b: &Array2<f64>,
    dt: f64,
) -> Result<DiscreteLinearSystem> {
    let (n, m) = (a.nrows(), b.ncols());
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::Shape("continuous A/B shapes disagree".into()));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParam(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let mut aug = Array2::<f64>::zeros((n + m, n + m));
    aug.slice_mut(s![..n, ..n]).assign(&(a * dt));
    aug.slice_mut(s![..n, n..]).assign(&(b * dt));
    let e = linalg::expm(aug.view())?;
    DiscreteLinearSystem::new(
        e.slice(s![..n, ..n]).to_owned(),
        e.slice(s![..n, n..]).to_owned(),
    )
}

pub fn discretize_zoh(params: &MsdParams) -> Result<DiscreteLinearSystem> {
    params.validate()?;
    let (a, b) = params.continuous();
    discretize_linear(&a, &b, params.dt)
}

/// Axis-aligned box the initial states are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl InitBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let b = Self { lower, upper };
        b.validate()?;
        Ok(b)
    }

    pub fn symmetric(half_width: f64, d_x: usize) -> Self {
        Self {
            lower: vec![-half_width; d_x],
            upper: vec![half_width; d_x],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() {
            return Err(Error::Shape("init box bounds differ in length".into()));
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::InvalidParam("init box needs lower <= upper".into()));
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut SimRng) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| rng::uniform(rng, l, u))
            .collect()
    }
}

impl Default for InitBox {
    fn default() -> Self {
        Self::symmetric(2.0, 2)
    }
}

/// Anything that maps (time, state) to a control.
pub trait Controller {
    fn control(&mut self, t: usize, x: &[f64], rng: &mut SimRng) -> Result<Vec<f64>>;
}

impl<F> Controller for F
where
    F: FnMut(usize, &[f64], &mut SimRng) -> Vec<f64>,
{
    fn control(&mut self, t: usize, x: &[f64], rng: &mut SimRng) -> Result<Vec<f64>> {
        Ok(self(t, x, rng))
    }
}

pub fn rollout<C: Controller + ?Sized>(
    sys: &DiscreteLinearSystem,
    x0: &[f64],
    controller: &mut C,
    steps: usize,
    rng: &mut SimRng,
) -> Result<Trajectory> {
    rollout_with_noise(sys, x0, controller, steps, 0.0, rng)
}

/// Closed-loop rollout with optional additive Gaussian process noise.
///
/// With `noise_std == 0` no noise is drawn, so the controller alone decides
/// what the rng is used for.
pub fn rollout_with_noise<C: Controller + ?Sized>(
    sys: &DiscreteLinearSystem,
    x0: &[f64],
    controller: &mut C,
    steps: usize,
    noise_std: f64,
    rng: &mut SimRng,
) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::InvalidParam(
            "rollout needs at least one step".into(),
        ));
    }
    if x0.len() != sys.d_x() {
        return Err(Error::Shape(format!(
            "x0 has {} entries, system has d_x = {}",
            x0.len(),
            sys.d_x()
        )));
    }
    let mut states = Array2::<f64>::zeros((steps + 1, sys.d_x()));
    let mut controls = Array2::<f64>::zeros((steps, sys.d_u()));
    states.row_mut(0).assign(&ArrayView1::from(x0));
    let mut x = x0.to_vec();
    for t in 0..steps {
        let u = controller.control(t, &x, rng)?;
        if u.len() != sys.d_u() {
            return Err(Error::Shape(format!(
                "controller returned {} controls, expected {}",
                u.len(),
                sys.d_u()
            )));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "controller returned non-finite control at t={t}"
            )));
        }
        let mut next = sys.step(&x, &u)?;
        if noise_std > 0.0 {
            for v in next.iter_mut() {
                *v += noise_std * rng::normal(rng);
            }
        }
        controls.row_mut(t).assign(&ArrayView1::from(&u[..]));
        states.row_mut(t + 1).assign(&ArrayView1::from(&next[..]));
        x = next;
    }
    Trajectory::new(states, controls)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_controller(_t: usize, _x: &[f64], _rng: &mut SimRng) -> Vec<f64> {
        vec![0.0]
    }

    #[test]
    fn double_integrator_is_polynomial() {
        let p = MsdParams {
            mass: 1.0,
            spring: 0.0,
            damping: 0.0,
            dt: 0.05,
        };
        let sys = discretize_zoh(&p).unwrap();
        let expect_a = [[1.0, 0.05], [0.0, 1.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((sys.a[[i, j]] - expect_a[i][j]).abs() < 1e-15);
            }
        }
        assert!((sys.b[[0, 0]] - 0.00125).abs() < 1e-15);
        assert!((sys.b[[1, 0]] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn tiny_dt_is_near_identity() {
        let p = MsdParams {
            dt: 1e-8,
            ..MsdParams::default()
        };
        let sys = discretize_zoh(&p).unwrap();
        let diff = &sys.a - &Array2::<f64>::eye(2);
        assert!(linalg::inf_norm(diff.view()) <= 2e-8);
        assert!(sys.b.iter().all(|v| v.abs() <= 2e-8));
    }

    #[test]
    fn invalid_params_rejected() {
        let bad = MsdParams {
            mass: 0.0,
            ..MsdParams::default()
        };
        assert!(discretize_zoh(&bad).is_err());
        let bad = MsdParams {
            dt: -0.1,
            ..MsdParams::default()
        };
        assert!(discretize_zoh(&bad).is_err());
    }

    #[test]
    fn step_checks_shapes() {
        let sys = discretize_zoh(&MsdParams::default()).unwrap();
        assert_eq!(sys.step(&[0.0, 0.0], &[0.0]).unwrap(), vec![0.0, 0.0]);
        assert!(sys.step(&[0.0], &[0.0]).is_err());
        assert!(sys.step(&[0.0, 0.0], &[]).is_err());
    }

    #[test]
    fn double_integrator_step_keeps_position() {
        let p = MsdParams {
            mass: 1.0,
            spring: 0.0,
            damping: 0.0,
            dt: 0.05,
        };
        let sys = discretize_zoh(&p).unwrap();
        let next = sys.step(&[1.0, 0.0], &[0.0]).unwrap();
        assert_eq!(next, vec![1.0, 0.0]);
    }

    #[test]
    fn zero_rollouts() {
        let sys = discretize_zoh(&MsdParams::default()).unwrap();
        let mut rng = rng::stream(0, 0);
        let tau = rollout(&sys, &[0.0, 0.0], &mut zero_controller, 5, &mut rng).unwrap();
        assert!(tau
            .states
            .iter()
            .chain(tau.controls.iter())
            .all(|&v| v == 0.0));

        let tau = rollout(&sys, &[1.0, 0.0], &mut zero_controller, 2, &mut rng).unwrap();
        let x1 = sys.a.dot(&ndarray::array![1.0, 0.0]);
        let x2 = sys.a.dot(&x1);
        assert_eq!(tau.states.row(1).to_vec(), x1.to_vec());
        assert_eq!(tau.states.row(2).to_vec(), x2.to_vec());
    }

    #[test]
    fn rollout_rejects_bad_controls() {
        let sys = discretize_zoh(&MsdParams::default()).unwrap();
        let mut rng = rng::stream(0, 0);
        let mut nan = |_t: usize, _x: &[f64], _r: &mut SimRng| vec![f64::NAN];
        assert!(matches!(
            rollout(&sys, &[1.0, 0.0], &mut nan, 3, &mut rng),
            Err(Error::Numeric(_))
        ));
        assert!(rollout(&sys, &[1.0, 0.0], &mut zero_controller, 0, &mut rng).is_err());
    }

    #[test]
    fn default_msd_is_stable_and_decays() {
        let sys = discretize_zoh(&MsdParams::default()).unwrap();
        assert!(sys.spectral_radius() < 1.0);
        let mut rng = rng::stream(0, 0);
        let tau = rollout(&sys, &[1.5, -1.0], &mut zero_controller, 200, &mut rng).unwrap();
        let norm = |t: usize| tau.states.row(t).dot(&tau.states.row(t)).sqrt();
        for t in 0..=180 {
            assert!(norm(t + 20) < norm(t), "t={t}");
        }
    }

    #[test]
    fn discretization_is_deterministic() {
        let a = discretize_zoh(&MsdParams::default()).unwrap();
        let b = discretize_zoh(&MsdParams::default()).unwrap();
        let bits = |m: &Array2<f64>| m.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.a), bits(&b.a));
        assert_eq!(bits(&a.b), bits(&b.b));
    }

    #[test]
    fn process_noise_hook() {
        let sys = discretize_zoh(&MsdParams::default()).unwrap();
        let mut r1 = rng::stream(5, 0);
        let quiet =
            rollout_with_noise(&sys, &[1.0, 0.0], &mut zero_controller, 10, 0.0, &mut r1).unwrap();
        let mut r2 = rng::stream(5, 0);
        let noisy =
            rollout_with_noise(&sys, &[1.0, 0.0], &mut zero_controller, 10, 0.1, &mut r2).unwrap();
        assert_ne!(quiet.states, noisy.states);
        assert_eq!(quiet.states.row(0), noisy.states.row(0));
    }
}
