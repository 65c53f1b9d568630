//! Quadratic trajectory cost, the cost-parameter box and its closed-form gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, SimRng};
pub use crate::trajectory::Trajectory;

/// Diagonal weights `Q = diag(q)`, `R = diag(r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub q: Vec<f64>,
    pub r: Vec<f64>,
}

impl CostParams {
    pub fn new(q: Vec<f64>, r: Vec<f64>) -> Result<Self> {
        let p = Self { q, r };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self
            .q
            .iter()
            .chain(&self.r)
            .all(|v| *v >= 0.0 && v.is_finite())
        {
            Ok(())
        } else {
            Err(Error::InvalidParam(
                "cost weights must be finite and nonnegative".into(),
            ))
        }
    }

    /// Flattened `(q, r)`, the cost part of a query vector.
    pub fn to_vec(&self) -> Vec<f64> {
        self.q.iter().chain(&self.r).copied().collect()
    }

    pub fn add(&self, other: &CostParams) -> CostParams {
        CostParams {
            q: self.q.iter().zip(&other.q).map(|(a, b)| a + b).collect(),
            r: self.r.iter().zip(&other.r).map(|(a, b)| a + b).collect(),
        }
    }

    fn check_shape(&self, tau: &Trajectory) -> Result<()> {
        if self.q.len() != tau.states.ncols() || self.r.len() != tau.controls.ncols() {
            return Err(Error::Shape(format!(
                "cost weights ({}, {}) vs trajectory dims ({}, {})",
                self.q.len(),
                self.r.len(),
                tau.states.ncols(),
                tau.controls.ncols()
            )));
        }
        Ok(())
    }
}

/// `Ω = [q_min, q_max]^{d_x} × [r_min, r_max]^{d_u}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBox {
    pub q_min: f64,
    pub q_max: f64,
    pub r_min: f64,
    pub r_max: f64,
}

impl Default for CostBox {
    fn default() -> Self {
        Self {
            q_min: 0.5,
            q_max: 5.0,
            r_min: 0.05,
            r_max: 1.0,
        }
    }
}

impl CostBox {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 <= self.q_min
            && self.q_min <= self.q_max
            && 0.0 <= self.r_min
            && self.r_min <= self.r_max
            && self.q_max.is_finite()
            && self.r_max.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("invalid cost box {self:?}")))
        }
    }

    pub fn center(&self, d_x: usize, d_u: usize) -> CostParams {
        CostParams {
            q: vec![0.5 * (self.q_min + self.q_max); d_x],
            r: vec![0.5 * (self.r_min + self.r_max); d_u],
        }
    }

    pub fn contains(&self, omega: &CostParams) -> bool {
        omega.q.iter().all(|&q| self.q_min <= q && q <= self.q_max)
            && omega.r.iter().all(|&r| self.r_min <= r && r <= self.r_max)
    }
}

/// `ω ~ Unif(Ω)`, coordinates drawn q first, then r.
pub fn sample_omega(cost_box: &CostBox, d_x: usize, d_u: usize, rng: &mut SimRng) -> CostParams {
    let q = (0..d_x)
        .map(|_| rng::uniform(rng, cost_box.q_min, cost_box.q_max))
        .collect();
    let r = (0..d_u)
        .map(|_| rng::uniform(rng, cost_box.r_min, cost_box.r_max))
        .collect();
    CostParams { q, r }
}

/// `Σ_{t<H} (x_tᵀ Q x_t + u_tᵀ R u_t) + x_Hᵀ Q x_H`, summed left to right in t.
pub fn cost(tau: &Trajectory, omega: &CostParams) -> Result<f64> {
    omega.check_shape(tau)?;
    let h = tau.horizon();
    let mut total = 0.0;
    for t in 0..=h {
        for (x, q) in tau.states.row(t).iter().zip(&omega.q) {
            total += q * x * x;
        }
        if t < h {
            for (u, r) in tau.controls.row(t).iter().zip(&omega.r) {
                total += r * u * u;
            }
        }
    }
    Ok(total)
}

/// Gradient of [`cost`] with respect to the flattened trajectory.
///
/// With `fix_initial` the `x_0` block is zero, since the initial state is
/// conditioning rather than a decision variable.
pub fn cost_gradient(tau: &Trajectory, omega: &CostParams, fix_initial: bool) -> Result<Vec<f64>> {
    omega.check_shape(tau)?;
    let layout = tau.layout();
    let mut grad = vec![0.0; layout.len()];
    for t in 0..=layout.horizon {
        if !(fix_initial && t == 0) {
            let o = layout.state_offset(t);
            for (i, (x, q)) in tau.states.row(t).iter().zip(&omega.q).enumerate() {
                grad[o + i] = 2.0 * q * x;
            }
        }
        if t < layout.horizon {
            let o = layout.control_offset(t);
            for (j, (u, r)) in tau.controls.row(t).iter().zip(&omega.r).enumerate() {
                grad[o + j] = 2.0 * r * u;
            }
        }
    }
    Ok(grad)
}
