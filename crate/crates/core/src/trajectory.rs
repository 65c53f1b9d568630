use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Horizon and dimensions of a trajectory, plus the flattened layout
/// `[x_0 | u_0 | x_1 | u_1 | … | u_{H-1} | x_H]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub horizon: usize,
    pub d_x: usize,
    pub d_u: usize,
}

impl Layout {
    pub fn new(horizon: usize, d_x: usize, d_u: usize) -> Self {
        Self { horizon, d_x, d_u }
    }

    /// `H·(d_x + d_u) + d_x`.
    pub fn len(&self) -> usize {
        self.horizon * (self.d_x + self.d_u) + self.d_x
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state_offset(&self, t: usize) -> usize {
        t * (self.d_x + self.d_u)
    }

    pub fn control_offset(&self, t: usize) -> usize {
        t * (self.d_x + self.d_u) + self.d_x
    }

    pub fn is_state_index(&self, i: usize) -> bool {
        i % (self.d_x + self.d_u) < self.d_x
    }
}

/// Absolute H-step trajectory: `H+1` states and `H` controls.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Array2<f64>,
    pub controls: Array2<f64>,
}

impl Trajectory {
    pub fn new(states: Array2<f64>, controls: Array2<f64>) -> Result<Self> {
        if states.nrows() != controls.nrows() + 1 || states.ncols() == 0 {
            return Err(Error::Shape(format!(
                "{} states for {} controls",
                states.nrows(),
                controls.nrows()
            )));
        }
        Ok(Self { states, controls })
    }

    pub fn zeros(layout: Layout) -> Self {
        Self {
            states: Array2::zeros((layout.horizon + 1, layout.d_x)),
            controls: Array2::zeros((layout.horizon, layout.d_u)),
        }
    }

    pub fn horizon(&self) -> usize {
        self.controls.nrows()
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.horizon(), self.states.ncols(), self.controls.ncols())
    }

    pub fn initial_state(&self) -> ArrayView1<'_, f64> {
        self.states.row(0)
    }

    pub fn is_finite(&self) -> bool {
        self.states
            .iter()
            .chain(self.controls.iter())
            .all(|v| v.is_finite())
    }

    /// Flattened absolute coordinates in the canonical layout.
    pub fn flatten(&self) -> Vec<f64> {
        let layout = self.layout();
        let mut out = Vec::with_capacity(layout.len());
        for t in 0..layout.horizon {
            out.extend(self.states.row(t).iter());
            out.extend(self.controls.row(t).iter());
        }
        out.extend(self.states.row(layout.horizon).iter());
        out
    }

    pub fn from_flat(layout: Layout, flat: &[f64]) -> Result<Self> {
        if flat.len() != layout.len() {
            return Err(Error::Shape(format!(
                "flat trajectory has {} entries, layout needs {}",
                flat.len(),
                layout.len()
            )));
        }
        let mut tau = Self::zeros(layout);
        for t in 0..=layout.horizon {
            let o = layout.state_offset(t);
            for i in 0..layout.d_x {
                tau.states[[t, i]] = flat[o + i];
            }
            if t < layout.horizon {
                let o = layout.control_offset(t);
                for j in 0..layout.d_u {
                    tau.controls[[t, j]] = flat[o + j];
                }
            }
        }
        Ok(tau)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_offsets() {
        let l = Layout::new(3, 2, 1);
        assert_eq!(l.len(), 11);
        assert_eq!(l.state_offset(3), 9);
        assert_eq!(l.control_offset(1), 5);
        assert!(l.is_state_index(3) && !l.is_state_index(2));
    }

    #[test]
    fn flatten_roundtrip() {
        let l = Layout::new(2, 2, 1);
        let flat: Vec<f64> = (0..l.len()).map(|i| i as f64).collect();
        let tau = Trajectory::from_flat(l, &flat).unwrap();
        assert_eq!(tau.states.row(1).to_vec(), vec![3.0, 4.0]);
        assert_eq!(tau.controls[[1, 0]], 5.0);
        assert_eq!(tau.flatten(), flat);
        assert!(Trajectory::from_flat(l, &flat[1..]).is_err());
    }
}
