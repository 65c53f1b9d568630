//! Dense networks with reverse-mode gradients for constant-target losses,
//! Adam, and input/output normalization for conditional generators.
//!
//! The only loss that is ever differentiated has the form
//! `mean_b ‖f(input_b) − target_b‖²` with the targets held constant, which
//! covers both the drift fixed-point loss (its target sits behind a
//! stop-gradient) and the noise-prediction loss of the diffusion baseline.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::trajectory::Layout;

pub use crate::rng::gaussian;

const STD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// `x · sigmoid(x)`
    Silu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Silu => x / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
        }
    }

    #[inline]
    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-x).exp());
                s * (1.0 + x * (1.0 - s))
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Multilayer perceptron with a linear head.
///
/// Parameters live in one flat buffer in declaration order: for each layer,
/// the `in × out` weight matrix (row-major) followed by the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

/// Pre-activations and activations of one batched forward pass.
pub struct ForwardCache {
    /// `activations[0]` is the input, `activations[L]` the output.
    activations: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations
            .last()
            .expect("cache holds the input at least")
    }
}

impl Mlp {
    pub fn zeros(dims: Vec<usize>, activation: Activation) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Shape(format!("invalid layer dims {dims:?}")));
        }
        let n = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Self {
            dims,
            activation,
            params: vec![0.0; n],
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn new(dims: Vec<usize>, activation: Activation, rng: &mut SimRng) -> Result<Self> {
        let mut mlp = Self::zeros(dims, activation)?;
        for l in 0..mlp.num_layers() {
            let (fan_in, fan_out) = (mlp.dims[l], mlp.dims[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let (w, _) = mlp.layer_ranges(l);
            for p in &mut mlp.params[w] {
                *p = rng.random_range(-limit..limit);
            }
        }
        Ok(mlp)
    }

    pub fn from_params(dims: Vec<usize>, activation: Activation, params: Vec<f64>) -> Result<Self> {
        let mut mlp = Self::zeros(dims, activation)?;
        if params.len() != mlp.params.len() {
            return Err(Error::Shape(format!(
                "{} parameters supplied, architecture has {}",
                params.len(),
                mlp.params.len()
            )));
        }
        mlp.params = params;
        Ok(mlp)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("at least two dims")
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer_ranges(&self, layer: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let start: usize = self.dims[..=layer]
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum();
        let (i, o) = (self.dims[layer], self.dims[layer + 1]);
        (start..start + i * o, start + i * o..start + i * o + o)
    }

    pub fn weight(&self, layer: usize) -> ArrayView2<'_, f64> {
        let (w, _) = self.layer_ranges(layer);
        ArrayView2::from_shape((self.dims[layer], self.dims[layer + 1]), &self.params[w])
            .expect("weight slice matches layer shape")
    }

    pub fn weight_mut(&mut self, layer: usize) -> ArrayViewMut2<'_, f64> {
        let (w, _) = self.layer_ranges(layer);
        let shape = (self.dims[layer], self.dims[layer + 1]);
        ArrayViewMut2::from_shape(shape, &mut self.params[w])
            .expect("weight slice matches layer shape")
    }

    pub fn bias(&self, layer: usize) -> ArrayView1<'_, f64> {
        let (_, b) = self.layer_ranges(layer);
        ArrayView1::from(&self.params[b])
    }

    /// Zero the head so the network initially outputs exactly zero.
    pub fn zero_output_layer(&mut self) {
        let last = self.num_layers() - 1;
        let (w, b) = self.layer_ranges(last);
        self.params[w.start..b.end].fill(0.0);
    }

    fn check_input(&self, input: &ArrayView2<'_, f64>) -> Result<()> {
        if input.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                input.ncols()
            )));
        }
        Ok(())
    }

    /// Batched forward pass; one sample per row.
    pub fn forward(&self, input: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(&input)?;
        let mut h = input.to_owned();
        for l in 0..self.num_layers() {
            let mut z = h.dot(&self.weight(l));
            z += &self.bias(l);
            if l + 1 < self.num_layers() {
                let act = self.activation;
                z.mapv_inplace(|v| act.apply(v));
            }
            h = z;
        }
        Ok(h)
    }

    pub fn forward_cached(&self, input: ArrayView2<'_, f64>) -> Result<ForwardCache> {
        self.check_input(&input)?;
        let mut activations = vec![input.to_owned()];
        let mut pre_activations = Vec::with_capacity(self.num_layers());
        for l in 0..self.num_layers() {
            let mut z = activations[l].dot(&self.weight(l));
            z += &self.bias(l);
            let a = if l + 1 < self.num_layers() {
                let act = self.activation;
                z.mapv(|v| act.apply(v))
            } else {
                z.clone()
            };
            pre_activations.push(z);
            activations.push(a);
        }
        Ok(ForwardCache {
            activations,
            pre_activations,
        })
    }

    /// Parameter gradient given `∂loss/∂output` for every row of the cached batch.
    pub fn backward(&self, cache: &ForwardCache, d_output: Array2<f64>) -> Vec<f64> {
        let mut grads = vec![0.0; self.params.len()];
        let mut delta = d_output;
        for l in (0..self.num_layers()).rev() {
            if l + 1 < self.num_layers() {
                let act = self.activation;
                ndarray::Zip::from(&mut delta)
                    .and(&cache.pre_activations[l])
                    .for_each(|d, &z| *d *= act.derivative(z));
            }
            let (w, b) = self.layer_ranges(l);
            let dw = cache.activations[l].t().dot(&delta);
            grads[w].copy_from_slice(dw.as_standard_layout().as_slice().expect("standard layout"));
            let db = delta.sum_axis(Axis(0));
            grads[b].copy_from_slice(db.as_slice().expect("contiguous"));
            if l > 0 {
                delta = delta.dot(&self.weight(l).t());
            }
        }
        grads
    }

    /// `mean_b ‖f(input_b) − target_b‖²` and its exact gradient, targets held constant.
    pub fn mse_to_constant(
        &self,
        input: ArrayView2<'_, f64>,
        targets: ArrayView2<'_, f64>,
    ) -> Result<(f64, Vec<f64>)> {
        let cache = self.forward_cached(input)?;
        let out = cache.output();
        if targets.dim() != out.dim() {
            return Err(Error::Shape(format!(
                "targets are {:?}, outputs are {:?}",
                targets.dim(),
                out.dim()
            )));
        }
        let n = out.nrows();
        if n == 0 {
            return Err(Error::InvalidParam("empty batch".into()));
        }
        let residual = out - &targets;
        let loss = residual.iter().map(|r| r * r).sum::<f64>() / n as f64;
        if !loss.is_finite() {
            return Err(Error::Numeric("non-finite loss".into()));
        }
        let d_out = residual * (2.0 / n as f64);
        Ok((loss, self.backward(&cache, d_out)))
    }
}

/// Bias-corrected Adam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    #[serde(skip)]
    pub m: Vec<f64>,
    #[serde(skip)]
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(num_params: usize, lr: f64) -> Self {
        Self {
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam state for {} params, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - self.beta1.powf(t);
        let c2 = 1.0 - self.beta2.powf(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Affine maps between raw conditioning/outputs and the network's unit-scale space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub cond_mean: Vec<f64>,
    pub cond_std: Vec<f64>,
    pub out_mean: Vec<f64>,
    pub out_std: Vec<f64>,
}

fn mean_std(rows: &[Vec<f64>], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len().max(1) as f64;
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for r in rows {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var.iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
    (mean, std)
}

impl NormalizationStats {
    pub fn identity(cond_dim: usize, out_dim: usize) -> Self {
        Self {
            cond_mean: vec![0.0; cond_dim],
            cond_std: vec![1.0; cond_dim],
            out_mean: vec![0.0; out_dim],
            out_std: vec![1.0; out_dim],
        }
    }

    /// Per-coordinate mean and population std, std floored at 1e-6.
    pub fn from_samples(
        conds: &[Vec<f64>],
        outs: &[Vec<f64>],
        cond_dim: usize,
        out_dim: usize,
    ) -> Self {
        let (cond_mean, cond_std) = mean_std(conds, cond_dim);
        let (out_mean, out_std) = mean_std(outs, out_dim);
        Self {
            cond_mean,
            cond_std,
            out_mean,
            out_std,
        }
    }

    pub fn normalize_cond(&self, c: &[f64]) -> Vec<f64> {
        c.iter()
            .zip(self.cond_mean.iter().zip(&self.cond_std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn normalize_out(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(self.out_mean.iter().zip(&self.out_std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn denormalize_out(&self, z: ArrayView1<'_, f64>) -> Vec<f64> {
        z.iter()
            .zip(self.out_mean.iter().zip(&self.out_std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

/// Conditional one-step generator `z = G(ε, c)` over flattened relative trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorModel {
    pub net: Mlp,
    pub d_eps: usize,
    pub cond_dim: usize,
    pub layout: Layout,
    pub norm: NormalizationStats,
}

impl GeneratorModel {
    pub fn new(
        net: Mlp,
        d_eps: usize,
        cond_dim: usize,
        layout: Layout,
        norm: NormalizationStats,
    ) -> Result<Self> {
        if net.input_dim() != d_eps + cond_dim || net.output_dim() != layout.len() {
            return Err(Error::Shape(format!(
                "network is {}->{}, generator needs {}->{}",
                net.input_dim(),
                net.output_dim(),
                d_eps + cond_dim,
                layout.len()
            )));
        }
        if norm.cond_mean.len() != cond_dim || norm.out_mean.len() != layout.len() {
            return Err(Error::Shape(
                "normalization stats do not match generator dims".into(),
            ));
        }
        Ok(Self {
            net,
            d_eps,
            cond_dim,
            layout,
            norm,
        })
    }

    pub fn out_dim(&self) -> usize {
        self.layout.len()
    }

    /// Network input rows `[ε | normalized c]`.
    pub fn input_matrix(&self, eps: &[Vec<f64>], conds: &[Vec<f64>]) -> Result<Array2<f64>> {
        if eps.len() != conds.len() {
            return Err(Error::Shape(
                "noise and conditioning batches differ in size".into(),
            ));
        }
        let mut input = Array2::<f64>::zeros((eps.len(), self.d_eps + self.cond_dim));
        for (row, (e, c)) in eps.iter().zip(conds).enumerate() {
            if e.len() != self.d_eps || c.len() != self.cond_dim {
                return Err(Error::Shape(format!(
                    "sample {row}: noise dim {} (want {}), cond dim {} (want {})",
                    e.len(),
                    self.d_eps,
                    c.len(),
                    self.cond_dim
                )));
            }
            let mut r = input.row_mut(row);
            r.slice_mut(s![..self.d_eps])
                .assign(&ArrayView1::from(&e[..]));
            r.slice_mut(s![self.d_eps..])
                .assign(&Array1::from(self.norm.normalize_cond(c)));
        }
        Ok(input)
    }

    /// Outputs in normalized units, one row per sample.
    pub fn forward_normalized(&self, eps: &[Vec<f64>], conds: &[Vec<f64>]) -> Result<Array2<f64>> {
        let out = self.net.forward(self.input_matrix(eps, conds)?.view())?;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(
                "generator produced non-finite output".into(),
            ));
        }
        Ok(out)
    }

    /// De-normalized output for one `(ε, c)` pair.
    pub fn forward(&self, eps: &[f64], c: &[f64]) -> Result<Vec<f64>> {
        let out = self.forward_normalized(&[eps.to_vec()], &[c.to_vec()])?;
        Ok(self.norm.denormalize_out(out.row(0)))
    }

    pub fn forward_batch(&self, eps: &[Vec<f64>], conds: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let out = self.forward_normalized(eps, conds)?;
        Ok(out
            .rows()
            .into_iter()
            .map(|r| self.norm.denormalize_out(r))
            .collect())
    }

    /// Constant-target MSE in de-normalized output units and its parameter gradient.
    pub fn backward_mse_to_constant(
        &self,
        eps: &[Vec<f64>],
        conds: &[Vec<f64>],
        targets: &[Vec<f64>],
    ) -> Result<(f64, Vec<f64>)> {
        let n = eps.len();
        if n == 0 || targets.len() != n {
            return Err(Error::InvalidParam(
                "batch must be nonempty and match targets".into(),
            ));
        }
        let cache = self
            .net
            .forward_cached(self.input_matrix(eps, conds)?.view())?;
        let raw = cache.output();
        let mut d_out = Array2::<f64>::zeros(raw.dim());
        let mut loss = 0.0;
        for (b, target) in targets.iter().enumerate() {
            if target.len() != self.out_dim() {
                return Err(Error::Shape("target length differs from output dim".into()));
            }
            for k in 0..self.out_dim() {
                let y = raw[[b, k]] * self.norm.out_std[k] + self.norm.out_mean[k];
                let r = y - target[k];
                loss += r * r;
                d_out[[b, k]] = 2.0 * r * self.norm.out_std[k] / n as f64;
            }
        }
        loss /= n as f64;
        if !loss.is_finite() {
            return Err(Error::Numeric("non-finite loss".into()));
        }
        Ok((loss, self.net.backward(&cache, d_out)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn random_mlp(dims: Vec<usize>, seed: u64) -> Mlp {
        let mut rng = stream(seed, 0);
        let mut m = Mlp::new(dims, Activation::Silu, &mut rng).unwrap();
        // nonzero biases so their gradients are exercised
        let n = m.num_params();
        let noise = gaussian(&mut rng, n);
        for (p, e) in m.params_mut().iter_mut().zip(noise) {
            *p += 0.05 * e;
        }
        m
    }

    fn fd_check(mlp: &Mlp, input: &Array2<f64>, targets: &Array2<f64>) -> f64 {
        let (_, grad) = mlp.mse_to_constant(input.view(), targets.view()).unwrap();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for i in 0..mlp.num_params() {
            let mut plus = mlp.clone();
            plus.params_mut()[i] += h;
            let mut minus = mlp.clone();
            minus.params_mut()[i] -= h;
            let lp = plus
                .mse_to_constant(input.view(), targets.view())
                .unwrap()
                .0;
            let lm = minus
                .mse_to_constant(input.view(), targets.view())
                .unwrap()
                .0;
            let fd = (lp - lm) / (2.0 * h);
            let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6);
            worst = worst.max(rel);
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences_small_net() {
        let mlp = random_mlp(vec![4, 8, 5], 1);
        let mut rng = stream(2, 0);
        let input = Array2::from_shape_vec((3, 4), gaussian(&mut rng, 12)).unwrap();
        let targets = Array2::from_shape_vec((3, 5), gaussian(&mut rng, 15)).unwrap();
        assert!(fd_check(&mlp, &input, &targets) <= 1e-4);
    }

    #[test]
    fn loss_and_gradient_vanish_at_own_outputs() {
        let mlp = random_mlp(vec![3, 6, 6, 2], 4);
        let input = Array2::from_shape_vec((5, 3), gaussian(&mut stream(5, 0), 15)).unwrap();
        let out = mlp.forward(input.view()).unwrap();
        let (loss, grad) = mlp.mse_to_constant(input.view(), out.view()).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn scalar_linear_hand_derivative() {
        let w = 0.7;
        let mlp = Mlp::from_params(vec![1, 1], Activation::Silu, vec![w, 0.0]).unwrap();
        let input = ndarray::array![[1.0]];
        let target = ndarray::array![[0.0]];
        let (loss, grad) = mlp.mse_to_constant(input.view(), target.view()).unwrap();
        assert!((loss - w * w).abs() < 1e-15);
        assert!((grad[0] - 2.0 * w).abs() < 1e-15);
    }

    #[test]
    fn identity_linear_layer() {
        let mut mlp = Mlp::zeros(vec![3, 3], Activation::Silu).unwrap();
        mlp.weight_mut(0).assign(&Array2::eye(3));
        let x = ndarray::array![[1.0, -2.0, 0.5]];
        assert_eq!(mlp.forward(x.view()).unwrap(), x);
    }

    #[test]
    fn shape_errors() {
        let mlp = random_mlp(vec![2, 3], 0);
        assert!(mlp.forward(Array2::zeros((1, 3)).view()).is_err());
        assert!(Mlp::zeros(vec![3], Activation::Silu).is_err());
        assert!(Mlp::from_params(vec![2, 2], Activation::Silu, vec![0.0; 3]).is_err());
    }

    #[test]
    fn adam_fresh_zero_gradient_is_a_noop() {
        let mut params = vec![1.0, -2.0];
        let mut adam = AdamState::new(2, 1e-2);
        adam.step(&mut params, &[0.0, 0.0]).unwrap();
        assert_eq!(params, vec![1.0, -2.0]);
    }

    #[test]
    fn adam_constant_gradient_moves_by_lr() {
        let mut params = vec![0.0, 0.0];
        let mut adam = AdamState::new(2, 1e-3);
        let mut last = params.clone();
        for _ in 0..2000 {
            last.copy_from_slice(&params);
            adam.step(&mut params, &[3.0, -0.01]).unwrap();
        }
        assert!(((params[0] - last[0]) + 1e-3).abs() < 1e-6);
        assert!(((params[1] - last[1]) - 1e-3).abs() < 1e-5);
    }

    #[test]
    fn adam_converges_on_quadratic_bowl() {
        let mut w = vec![1.0, 1.0];
        let mut adam = AdamState::new(2, 1e-2);
        for _ in 0..500 {
            let g: Vec<f64> = w.iter().map(|v| 2.0 * v).collect();
            adam.step(&mut w, &g).unwrap();
        }
        let norm = (w[0] * w[0] + w[1] * w[1]).sqrt();
        assert!(norm <= 1e-3, "norm {norm}");
    }

    fn tiny_generator(seed: u64) -> GeneratorModel {
        let layout = Layout::new(2, 2, 1);
        let mut rng = stream(seed, 0);
        let net = Mlp::new(vec![3 + 5, 16, layout.len()], Activation::Silu, &mut rng).unwrap();
        let mut norm = NormalizationStats::identity(5, layout.len());
        norm.out_mean = (0..layout.len()).map(|i| i as f64 * 0.1).collect();
        norm.out_std = vec![2.0; layout.len()];
        norm.cond_std = vec![0.5; 5];
        GeneratorModel::new(net, 3, 5, layout, norm).unwrap()
    }

    #[test]
    fn zero_head_outputs_the_mean() {
        let mut g = tiny_generator(3);
        g.net.zero_output_layer();
        for seed in 0..4 {
            let eps = gaussian(&mut stream(seed, 9), 3);
            let out = g.forward(&eps, &[1.0, 2.0, 1.0, 1.0, 0.1]).unwrap();
            assert_eq!(out, g.norm.out_mean);
        }
    }

    #[test]
    fn generator_gradient_in_output_units() {
        let g = tiny_generator(8);
        let mut rng = stream(8, 1);
        let eps: Vec<Vec<f64>> = (0..3).map(|_| gaussian(&mut rng, 3)).collect();
        let conds: Vec<Vec<f64>> = (0..3).map(|_| gaussian(&mut rng, 5)).collect();
        let targets: Vec<Vec<f64>> = (0..3).map(|_| gaussian(&mut rng, 8)).collect();
        let (_, grad) = g.backward_mse_to_constant(&eps, &conds, &targets).unwrap();
        let h = 1e-6;
        for i in (0..g.net.num_params()).step_by(7) {
            let mut p = g.clone();
            p.net.params_mut()[i] += h;
            let mut m = g.clone();
            m.net.params_mut()[i] -= h;
            let fd = (p
                .backward_mse_to_constant(&eps, &conds, &targets)
                .unwrap()
                .0
                - m.backward_mse_to_constant(&eps, &conds, &targets)
                    .unwrap()
                    .0)
                / (2.0 * h);
            assert!((fd - grad[i]).abs() <= 1e-4 * fd.abs().max(grad[i].abs()).max(1e-6));
        }
    }

    #[test]
    fn generator_golden_output() {
        let g = tiny_generator(2024);
        let out = g
            .forward(&[0.3, -1.2, 0.8], &[1.0, -0.5, 2.0, 3.0, 0.4])
            .unwrap();
        let again = tiny_generator(2024)
            .forward(&[0.3, -1.2, 0.8], &[1.0, -0.5, 2.0, 3.0, 0.4])
            .unwrap();
        assert_eq!(out, again);
        assert_eq!(
            out[0].to_bits(),
            GOLDEN_FIRST_OUTPUT_BITS,
            "got {:#x}",
            out[0].to_bits()
        );
    }

    const GOLDEN_FIRST_OUTPUT_BITS: u64 = 0xbfad_fdb7_dfbd_96f9;
}
