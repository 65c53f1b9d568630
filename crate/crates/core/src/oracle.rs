//! Finite-horizon LQR by backward Riccati recursion on the true dynamics.

use ndarray::{Array1, Array2, ArrayView1};

use crate::cost::CostParams;
use crate::dynamics::{Controller, DiscreteLinearSystem};
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{self, SimRng};

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    /// `K_t` for `t = 0..H`, each `d_u × d_x`.
    pub gains: Vec<Array2<f64>>,
    /// `P_t` for `t = 0..=H`, each `d_x × d_x`, with `P_H = Q`.
    pub value_mats: Vec<Array2<f64>>,
}

impl RiccatiSolution {
    pub fn horizon(&self) -> usize {
        self.gains.len()
    }

    /// Optimal cost-to-go `x_0ᵀ P_0 x_0`.
    pub fn value(&self, x0: &[f64]) -> f64 {
        let x = ArrayView1::from(x0);
        x.dot(&self.value_mats[0].dot(&x))
    }
}

fn diag(v: &[f64]) -> Array2<f64> {
    Array2::from_diag(&Array1::from(v.to_vec()))
}

pub fn solve_riccati(
    sys: &DiscreteLinearSystem,
    omega: &CostParams,
    horizon: usize,
) -> Result<RiccatiSolution> {
    if horizon == 0 {
        return Err(Error::InvalidParam("Riccati recursion needs H >= 1".into()));
    }
    if omega.q.len() != sys.d_x() || omega.r.len() != sys.d_u() {
        return Err(Error::Shape(
            "cost weights do not match system dimensions".into(),
        ));
    }
    let q = diag(&omega.q);
    let r = diag(&omega.r);
    let (a, b) = (&sys.a, &sys.b);
    let bt = b.t();

    let mut value_mats = vec![Array2::zeros((sys.d_x(), sys.d_x())); horizon + 1];
    let mut gains = vec![Array2::zeros((sys.d_u(), sys.d_x())); horizon];
    value_mats[horizon] = q.clone();
    for t in (0..horizon).rev() {
        let p_next = &value_mats[t + 1];
        let bt_p = bt.dot(p_next);
        let lhs = &r + &bt_p.dot(b);
        let rhs = bt_p.dot(a);
        let k = linalg::solve(lhs.view(), rhs.view()).map_err(|e| match e {
            Error::Singular(msg) => Error::Singular(format!("R + BᵀPB at t={t}: {msg}")),
            other => other,
        })?;
        let closed = a - &b.dot(&k);
        let mut p = &q + &a.t().dot(p_next).dot(&closed);
        linalg::symmetrize(&mut p);
        if p.iter().chain(k.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "Riccati recursion diverged at t={t}"
            )));
        }
        gains[t] = k;
        value_mats[t] = p;
    }
    Ok(RiccatiSolution { gains, value_mats })
}

/// `u = -K_t x`.
pub fn oracle_control(sol: &RiccatiSolution, t: usize, x: &[f64]) -> Result<Vec<f64>> {
    let k = sol.gains.get(t).ok_or_else(|| {
        Error::InvalidParam(format!("step {t} outside horizon {}", sol.horizon()))
    })?;
    if x.len() != k.ncols() {
        return Err(Error::Shape(format!(
            "state has {} entries, gain expects {}",
            x.len(),
            k.ncols()
        )));
    }
    Ok((-k.dot(&ArrayView1::from(x))).to_vec())
}

/// Time-varying LQR feedback with optional Gaussian action noise.
#[derive(Debug, Clone)]
pub struct LqrController<'a> {
    pub solution: &'a RiccatiSolution,
    pub action_noise: f64,
}

impl Controller for LqrController<'_> {
    fn control(&mut self, t: usize, x: &[f64], rng: &mut SimRng) -> Result<Vec<f64>> {
        let mut u = oracle_control(self.solution, t, x)?;
        if self.action_noise > 0.0 {
            for v in u.iter_mut() {
                *v += self.action_noise * rng::normal(rng);
            }
        }
        Ok(u)
    }
}
