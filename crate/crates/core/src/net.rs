//! Feed-forward network with exact derivatives.
//!
//! The surrogate is a plain multi-layer perceptron
//! `nu(x) = sigma_out(W_n * sigma(W_{n-1} * ... * sigma(W_0 x + b_0) ...) + b_n)`.
//! Input derivatives (needed by the PDE residual) are propagated forward as
//! tangent columns alongside the values; parameter gradients are obtained by
//! reverse mode through that *augmented* pass, so second-order terms
//! (d/dtheta of d(nu)/dx) come out exactly rather than by nesting tapes.
//!
//! Everything is batched: a batch of points is a row-major `n x width`
//! matrix and every layer is one GEMM per carried quantity.

use ndarray::{Array1, Array2, ArrayView1, Axis, Zip};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hidden-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Relu,
}

/// Final-layer activation. Linear trains more stably for saturation
/// inference; sigmoid is available for strictly bounded outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Linear,
    Sigmoid,
}

/// Network architecture: layer widths (input first, 1 last) and activations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    #[serde(default = "default_output_activation")]
    pub output_activation: OutputActivation,
}

fn default_output_activation() -> OutputActivation {
    OutputActivation::Linear
}

impl ArchSpec {
    pub fn new(layer_sizes: Vec<usize>, hidden_activation: Activation) -> Self {
        Self {
            layer_sizes,
            hidden_activation,
            output_activation: OutputActivation::Linear,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::DimensionMismatch(
                "need at least input and output layers".into(),
            ));
        }
        if self.layer_sizes.iter().any(|&w| w == 0) {
            return Err(Error::DimensionMismatch("zero-width layer".into()));
        }
        if *self.layer_sizes.last().unwrap() != 1 {
            return Err(Error::DimensionMismatch("output layer must have width 1".into()));
        }
        Ok(())
    }
}

#[inline]
fn act(p: f64, a: Activation) -> f64 {
    match a {
        Activation::Tanh => p.tanh(),
        Activation::Sigmoid => 1.0 / (1.0 + (-p).exp()),
        Activation::Relu => p.max(0.0),
    }
}

/// First derivative expressed through the activated value.
#[inline]
fn d1_from_act(z: f64, a: Activation) -> f64 {
    match a {
        Activation::Tanh => 1.0 - z * z,
        Activation::Sigmoid => z * (1.0 - z),
        Activation::Relu => {
            if z > 0.0 {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Second derivative expressed through the activated value.
#[inline]
fn d2_from_act(z: f64, a: Activation) -> f64 {
    match a {
        Activation::Tanh => -2.0 * z * (1.0 - z * z),
        Activation::Sigmoid => z * (1.0 - z) * (1.0 - 2.0 * z),
        Activation::Relu => 0.0,
    }
}

/// Per-layer activation resolved from the model: `None` means identity
/// (the linear output layer).
#[derive(Clone, Copy)]
enum LayerAct {
    Identity,
    Act(Activation),
}

/// Weights, biases and activations of the feed-forward surrogate.
///
/// `weights[l]` has shape `(layer_sizes[l+1], layer_sizes[l])`; flat
/// parameter order is layer by layer, row-major weights then bias.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub hidden_activation: Activation,
    pub output_activation: OutputActivation,
    /// Seed the parameters were initialized from.
    pub seed: u64,
    /// Optimizer steps applied so far (checkpoint metadata).
    pub steps_trained: u64,
}

impl MlpModel {
    /// Xavier/Glorot-uniform weights (`|w| <= sqrt(6/(fan_in+fan_out))`),
    /// zero biases, fully determined by the seed.
    pub fn xavier(arch: &ArchSpec, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..arch.layer_sizes.len() - 1 {
            let fan_in = arch.layer_sizes[l];
            let fan_out = arch.layer_sizes[l + 1];
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-bound..bound));
            weights.push(w);
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Self {
            layer_sizes: arch.layer_sizes.clone(),
            weights,
            biases,
            hidden_activation: arch.hidden_activation,
            output_activation: arch.output_activation,
            seed,
            steps_trained: 0,
        })
    }

    pub fn arch(&self) -> ArchSpec {
        ArchSpec {
            layer_sizes: self.layer_sizes.clone(),
            hidden_activation: self.hidden_activation,
            output_activation: self.output_activation,
        }
    }

    pub fn input_width(&self) -> usize {
        self.layer_sizes[0]
    }

    fn layer_count(&self) -> usize {
        self.weights.len()
    }

    fn layer_act(&self, layer: usize) -> LayerAct {
        if layer + 1 < self.layer_count() {
            LayerAct::Act(self.hidden_activation)
        } else {
            match self.output_activation {
                OutputActivation::Linear => LayerAct::Identity,
                OutputActivation::Sigmoid => LayerAct::Act(Activation::Sigmoid),
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.layer_sizes.len() - 1
            || self.biases.len() != self.weights.len()
        {
            return Err(Error::DimensionMismatch("layer count mismatch".into()));
        }
        for l in 0..self.weights.len() {
            let (rows, cols) = self.weights[l].dim();
            if rows != self.layer_sizes[l + 1] || cols != self.layer_sizes[l] {
                return Err(Error::DimensionMismatch(format!(
                    "weight {l} has shape {rows}x{cols}, expected {}x{}",
                    self.layer_sizes[l + 1],
                    self.layer_sizes[l]
                )));
            }
            if self.biases[l].len() != rows {
                return Err(Error::DimensionMismatch(format!("bias {l} length")));
            }
            if self.weights[l].iter().any(|v| !v.is_finite())
                || self.biases[l].iter().any(|v| !v.is_finite())
            {
                return Err(Error::DimensionMismatch(format!(
                    "non-finite parameter in layer {l}"
                )));
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }

    /// Parameters in the canonical flat order.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} parameters given, model has {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for v in w.iter_mut() {
                *v = flat[offset];
                offset += 1;
            }
            for v in b.iter_mut() {
                *v = flat[offset];
                offset += 1;
            }
        }
        Ok(())
    }

    /// Scalar output for a single input point.
    pub fn forward(&self, input: &[f64]) -> Result<f64> {
        if input.len() != self.input_width() {
            return Err(Error::DimensionMismatch(format!(
                "input width {} vs model width {}",
                input.len(),
                self.input_width()
            )));
        }
        let x = Array2::from_shape_vec((1, input.len()), input.to_vec()).unwrap();
        Ok(self.forward_batch(&x)[0])
    }

    /// Output values for a batch of points (rows).
    pub fn forward_batch(&self, x: &Array2<f64>) -> Array1<f64> {
        debug_assert_eq!(x.ncols(), self.input_width());
        let mut a = x.clone();
        for l in 0..self.layer_count() {
            let mut p = a.dot(&self.weights[l].t());
            p += &self.biases[l];
            if let LayerAct::Act(af) = self.layer_act(l) {
                p.mapv_inplace(|v| act(v, af));
            }
            a = p;
        }
        a.index_axis(Axis(1), 0).to_owned()
    }

    /// Exact derivatives of the output with respect to every input
    /// component, by forward-mode tangent propagation.
    pub fn input_jacobian(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_width() {
            return Err(Error::DimensionMismatch(format!(
                "input width {} vs model width {}",
                input.len(),
                self.input_width()
            )));
        }
        let dirs: Vec<usize> = (0..self.input_width()).collect();
        let x = Array2::from_shape_vec((1, input.len()), input.to_vec()).unwrap();
        let pass = self.augmented_forward(&x, &dirs)?;
        Ok((0..dirs.len()).map(|k| pass.tangent(k)[0]).collect())
    }

    /// Value, input derivatives, and the flat parameter gradient of the
    /// output itself at one point.
    pub fn evaluate_with_grads(&self, input: &[f64]) -> Result<GradientBundle> {
        let dirs: Vec<usize> = (0..self.input_width()).collect();
        let x = Array2::from_shape_vec((1, input.len()), input.to_vec())
            .map_err(|_| Error::DimensionMismatch("input shape".into()))?;
        let pass = self.augmented_forward(&x, &dirs)?;
        let value = pass.values()[0];
        let d_dinput = (0..dirs.len()).map(|k| pass.tangent(k)[0]).collect();
        let d_value = Array1::ones(1);
        let d_tangents: Vec<Array1<f64>> = dirs.iter().map(|_| Array1::zeros(1)).collect();
        let grad = self.backward(&pass, d_value.view(), &d_tangents);
        Ok(GradientBundle {
            value,
            d_dinput,
            d_dtheta: grad.to_flat(),
        })
    }

    /// Forward pass carrying tangent columns for the requested input
    /// directions, caching everything reverse mode needs.
    pub fn augmented_forward(&self, x: &Array2<f64>, dirs: &[usize]) -> Result<BatchPass> {
        if x.ncols() != self.input_width() {
            return Err(Error::DimensionMismatch(format!(
                "batch width {} vs model width {}",
                x.ncols(),
                self.input_width()
            )));
        }
        if let Some(&bad) = dirs.iter().find(|&&d| d >= self.input_width()) {
            return Err(Error::DimensionMismatch(format!(
                "tangent direction {bad} out of range"
            )));
        }
        if !dirs.is_empty() && self.hidden_activation == Activation::Relu {
            return Err(Error::NonDifferentiableActivation("relu"));
        }
        let n = x.nrows();
        let layers = self.layer_count();

        let mut acts: Vec<Array2<f64>> = Vec::with_capacity(layers + 1);
        acts.push(x.clone());
        let mut tangents: Vec<Vec<Array2<f64>>> = dirs
            .iter()
            .map(|&d| {
                let mut t0 = Array2::zeros((n, self.input_width()));
                t0.column_mut(d).fill(1.0);
                vec![t0]
            })
            .collect();
        let mut tangent_pres: Vec<Vec<Array2<f64>>> = dirs.iter().map(|_| Vec::new()).collect();

        for l in 0..layers {
            let wt = self.weights[l].t();
            let mut p = acts[l].dot(&wt);
            p += &self.biases[l];
            let layer_act = self.layer_act(l);
            let z = match layer_act {
                LayerAct::Identity => p,
                LayerAct::Act(af) => {
                    let mut z = p;
                    z.mapv_inplace(|v| act(v, af));
                    z
                }
            };
            for k in 0..dirs.len() {
                let q = tangents[k][l].dot(&wt);
                let t_next = match layer_act {
                    LayerAct::Identity => q.clone(),
                    LayerAct::Act(af) => {
                        let mut t = q.clone();
                        Zip::from(&mut t)
                            .and(&z)
                            .for_each(|t, &zv| *t *= d1_from_act(zv, af));
                        t
                    }
                };
                tangent_pres[k].push(q);
                tangents[k].push(t_next);
            }
            acts.push(z);
        }

        Ok(BatchPass {
            acts,
            tangents,
            tangent_pres,
            n_dirs: dirs.len(),
        })
    }

    /// Reverse mode through the augmented pass: given the loss sensitivities
    /// to the output values and to each carried tangent, accumulate the
    /// gradient with respect to all weights and biases.
    pub fn backward(
        &self,
        pass: &BatchPass,
        d_value: ArrayView1<f64>,
        d_tangents: &[Array1<f64>],
    ) -> ParamGrad {
        assert_eq!(d_tangents.len(), pass.n_dirs);
        let layers = self.layer_count();
        let n = pass.acts[0].nrows();

        let mut g_a = d_value
            .to_owned()
            .into_shape_with_order((n, 1))
            .expect("column reshape");
        let mut g_t: Vec<Array2<f64>> = d_tangents
            .iter()
            .map(|d| {
                d.clone()
                    .into_shape_with_order((n, 1))
                    .expect("column reshape")
            })
            .collect();

        let mut d_weights: Vec<Array2<f64>> = self
            .weights
            .iter()
            .map(|w| Array2::zeros(w.dim()))
            .collect();
        let mut d_biases: Vec<Array1<f64>> =
            self.biases.iter().map(|b| Array1::zeros(b.len())).collect();

        for l in (0..layers).rev() {
            let z = &pass.acts[l + 1];
            let layer_act = self.layer_act(l);

            // dL/d(pre-activation): the value path plus the curvature term
            // each tangent contributes through sigma''.
            let mut g_p = match layer_act {
                LayerAct::Identity => g_a,
                LayerAct::Act(af) => {
                    let mut g = g_a;
                    Zip::from(&mut g)
                        .and(z)
                        .for_each(|g, &zv| *g *= d1_from_act(zv, af));
                    g
                }
            };
            if let LayerAct::Act(af) = layer_act {
                for k in 0..pass.n_dirs {
                    let q = &pass.tangent_pres[k][l];
                    Zip::from(&mut g_p)
                        .and(z)
                        .and(&g_t[k])
                        .and(q)
                        .for_each(|g, &zv, &gt, &qv| *g += gt * d2_from_act(zv, af) * qv);
                }
            }
            let g_q: Vec<Array2<f64>> = (0..pass.n_dirs)
                .map(|k| match layer_act {
                    LayerAct::Identity => g_t[k].clone(),
                    LayerAct::Act(af) => {
                        let mut g = g_t[k].clone();
                        Zip::from(&mut g)
                            .and(z)
                            .for_each(|g, &zv| *g *= d1_from_act(zv, af));
                        g
                    }
                })
                .collect();

            let mut dw = g_p.t().dot(&pass.acts[l]);
            for k in 0..pass.n_dirs {
                dw += &g_q[k].t().dot(&pass.tangents[k][l]);
            }
            d_weights[l] = dw;
            d_biases[l] = g_p.sum_axis(Axis(0));

            if l > 0 {
                g_a = g_p.dot(&self.weights[l]);
                for k in 0..pass.n_dirs {
                    g_t[k] = g_q[k].dot(&self.weights[l]);
                }
            } else {
                g_a = g_p; // consumed; keeps the loop uniform
            }
        }

        ParamGrad {
            d_weights,
            d_biases,
        }
    }
}

/// Cached augmented forward pass over one batch.
pub struct BatchPass {
    /// Layer inputs/outputs `A_0..A_L`.
    acts: Vec<Array2<f64>>,
    /// Per direction: tangent matrices `T_0..T_L`.
    tangents: Vec<Vec<Array2<f64>>>,
    /// Per direction, per layer: pre-activation tangents `Q_l = T_l W_l^T`.
    tangent_pres: Vec<Vec<Array2<f64>>>,
    n_dirs: usize,
}

impl BatchPass {
    /// Network output per batch row.
    pub fn values(&self) -> ArrayView1<'_, f64> {
        self.acts.last().unwrap().column(0)
    }

    /// d(output)/d(input direction k) per batch row.
    pub fn tangent(&self, k: usize) -> ArrayView1<'_, f64> {
        self.tangents[k].last().unwrap().column(0)
    }

    pub fn n_points(&self) -> usize {
        self.acts[0].nrows()
    }
}

/// Value, input derivatives and flat parameter gradient at one point.
#[derive(Debug, Clone)]
pub struct GradientBundle {
    pub value: f64,
    pub d_dinput: Vec<f64>,
    pub d_dtheta: Vec<f64>,
}

/// Structured parameter gradient mirroring the model layout.
#[derive(Debug, Clone)]
pub struct ParamGrad {
    pub d_weights: Vec<Array2<f64>>,
    pub d_biases: Vec<Array1<f64>>,
}

impl ParamGrad {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            d_weights: model
                .weights
                .iter()
                .map(|w| Array2::zeros(w.dim()))
                .collect(),
            d_biases: model.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
        }
    }

    /// `self += c * other`, layer by layer.
    pub fn scaled_add(&mut self, c: f64, other: &Self) {
        for (a, b) in self.d_weights.iter_mut().zip(&other.d_weights) {
            a.scaled_add(c, b);
        }
        for (a, b) in self.d_biases.iter_mut().zip(&other.d_biases) {
            a.scaled_add(c, b);
        }
    }

    /// Flatten in the model's canonical parameter order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.d_weights.iter().zip(&self.d_biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }
}

/// A scalar loss over a batch: the value plus its sensitivities to each
/// network output and to each carried input-derivative column.
pub trait BatchLoss {
    fn eval(
        &self,
        values: ArrayView1<'_, f64>,
        tangents: &[ArrayView1<'_, f64>],
    ) -> (f64, Array1<f64>, Vec<Array1<f64>>);
}

/// Reverse-mode gradient of a scalar batch loss with respect to all model
/// parameters. Deterministic for fixed inputs; rejects non-finite losses.
pub fn loss_gradient<L: BatchLoss + ?Sized>(
    model: &MlpModel,
    inputs: &Array2<f64>,
    dirs: &[usize],
    loss: &L,
) -> Result<(f64, ParamGrad)> {
    let pass = model.augmented_forward(inputs, dirs)?;
    let tangent_views: Vec<ArrayView1<'_, f64>> =
        (0..dirs.len()).map(|k| pass.tangent(k)).collect();
    let (value, d_value, d_tangents) = loss.eval(pass.values(), &tangent_views);
    if !value.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    let grad = model.backward(&pass, d_value.view(), &d_tangents);
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn small_arch(sizes: &[usize]) -> ArchSpec {
        ArchSpec::new(sizes.to_vec(), Activation::Tanh)
    }

    /// Second, loop-based forward implementation used as an oracle.
    fn forward_oracle(m: &MlpModel, input: &[f64]) -> f64 {
        let mut a: Vec<f64> = input.to_vec();
        for l in 0..m.weights.len() {
            let w = &m.weights[l];
            let mut next = vec![0.0; w.nrows()];
            for i in 0..w.nrows() {
                let mut acc = m.biases[l][i];
                for j in 0..w.ncols() {
                    acc += w[[i, j]] * a[j];
                }
                next[i] = if l + 1 == m.weights.len() {
                    match m.output_activation {
                        OutputActivation::Linear => acc,
                        OutputActivation::Sigmoid => 1.0 / (1.0 + (-acc).exp()),
                    }
                } else {
                    match m.hidden_activation {
                        Activation::Tanh => acc.tanh(),
                        Activation::Sigmoid => 1.0 / (1.0 + (-acc).exp()),
                        Activation::Relu => acc.max(0.0),
                    }
                };
            }
            a = next;
        }
        a[0]
    }

    #[test]
    fn zero_model_outputs_zero() {
        let arch = small_arch(&[2, 8, 1]);
        let mut m = MlpModel::xavier(&arch, 1).unwrap();
        for w in m.weights.iter_mut() {
            w.fill(0.0);
        }
        assert_eq!(m.forward(&[0.3, -2.0]).unwrap(), 0.0);
        assert_eq!(m.input_jacobian(&[0.3, -2.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_linear_layer_is_identity_map() {
        let arch = small_arch(&[1, 1]);
        let mut m = MlpModel::xavier(&arch, 1).unwrap();
        m.weights[0] = array![[1.0]];
        m.biases[0] = array![0.0];
        assert_eq!(m.forward(&[0.42]).unwrap(), 0.42);
    }

    #[test]
    fn linear_layer_jacobian_is_weight_row() {
        let arch = small_arch(&[2, 1]);
        let mut m = MlpModel::xavier(&arch, 1).unwrap();
        m.weights[0] = array![[3.0, -5.0]];
        m.biases[0] = array![0.7];
        let j = m.input_jacobian(&[0.1, 0.2]).unwrap();
        assert_eq!(j, vec![3.0, -5.0]);
    }

    #[test]
    fn forward_matches_independent_oracle() {
        let arch = small_arch(&[2, 16, 1]);
        let m = MlpModel::xavier(&arch, 1234).unwrap();
        let input = [0.3, 0.7];
        let fast = m.forward(&input).unwrap();
        let slow = forward_oracle(&m, &input);
        assert!((fast - slow).abs() <= 1e-12, "{fast} vs {slow}");

        let sig = MlpModel::xavier(
            &ArchSpec {
                output_activation: OutputActivation::Sigmoid,
                ..small_arch(&[2, 16, 1])
            },
            99,
        )
        .unwrap();
        let fast = sig.forward(&input).unwrap();
        let slow = forward_oracle(&sig, &input);
        assert!((fast - slow).abs() <= 1e-12);
    }

    #[test]
    fn input_jacobian_matches_finite_differences() {
        let arch = small_arch(&[3, 16, 16, 1]);
        let m = MlpModel::xavier(&arch, 77).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let input: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let jac = m.input_jacobian(&input).unwrap();
            let h = 1e-5;
            for k in 0..3 {
                let mut plus = input.clone();
                let mut minus = input.clone();
                plus[k] += h;
                minus[k] -= h;
                let fd = (m.forward(&plus).unwrap() - m.forward(&minus).unwrap()) / (2.0 * h);
                let rel = (jac[k] - fd).abs() / jac[k].abs().max(1e-8);
                assert!(rel <= 1e-6, "component {k}: {} vs fd {fd}", jac[k]);
            }
        }
    }

    #[test]
    fn xavier_init_is_seed_deterministic_and_bounded() {
        let arch = small_arch(&[2, 32, 32, 1]);
        let a = MlpModel::xavier(&arch, 42).unwrap();
        let b = MlpModel::xavier(&arch, 42).unwrap();
        assert_eq!(a.flat_params(), b.flat_params());
        let c = MlpModel::xavier(&arch, 43).unwrap();
        assert_ne!(a.flat_params(), c.flat_params());
        for (l, w) in a.weights.iter().enumerate() {
            let bound = (6.0 / (arch.layer_sizes[l] + arch.layer_sizes[l + 1]) as f64).sqrt();
            assert!(w.iter().all(|v| v.abs() <= bound));
        }
        assert!(a.biases.iter().all(|b| b.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn relu_rejected_on_residual_path_only() {
        let arch = ArchSpec::new(vec![2, 8, 1], Activation::Relu);
        let m = MlpModel::xavier(&arch, 7).unwrap();
        let x = Array2::zeros((4, 2));
        assert!(matches!(
            m.augmented_forward(&x, &[0, 1]),
            Err(Error::NonDifferentiableActivation(_))
        ));
        // Plain regression use is fine.
        assert!(m.augmented_forward(&x, &[]).is_ok());
        assert!(m.forward(&[0.1, 0.2]).is_ok());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let m = MlpModel::xavier(&small_arch(&[2, 4, 1]), 7).unwrap();
        assert!(matches!(m.forward(&[1.0]), Err(Error::DimensionMismatch(_))));
        let x = Array2::zeros((3, 2));
        assert!(m.augmented_forward(&x, &[5]).is_err());
    }

    struct ConstantLoss;
    impl BatchLoss for ConstantLoss {
        fn eval(
            &self,
            values: ArrayView1<'_, f64>,
            _tangents: &[ArrayView1<'_, f64>],
        ) -> (f64, Array1<f64>, Vec<Array1<f64>>) {
            (3.0, Array1::zeros(values.len()), vec![])
        }
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let m = MlpModel::xavier(&small_arch(&[2, 8, 1]), 3).unwrap();
        let x = Array2::from_shape_fn((5, 2), |(i, j)| (i + j) as f64 * 0.1);
        let (value, grad) = loss_gradient(&m, &x, &[], &ConstantLoss).unwrap();
        assert_eq!(value, 3.0);
        assert!(grad.to_flat().iter().all(|&g| g == 0.0));
    }

    /// Mean squared error against targets; no tangent terms.
    struct MseLoss {
        targets: Array1<f64>,
    }
    impl BatchLoss for MseLoss {
        fn eval(
            &self,
            values: ArrayView1<'_, f64>,
            _tangents: &[ArrayView1<'_, f64>],
        ) -> (f64, Array1<f64>, Vec<Array1<f64>>) {
            let n = values.len() as f64;
            let diff = &values.to_owned() - &self.targets;
            let loss = diff.mapv(|d| d * d).sum() / n;
            (loss, diff.mapv(|d| 2.0 * d / n), vec![])
        }
    }

    #[test]
    fn linear_model_gradient_matches_normal_equations() {
        // 1-1 linear model: dL/dw = 2 mean((w x + b - y) x), dL/db = 2 mean(w x + b - y).
        let mut m = MlpModel::xavier(&small_arch(&[1, 1]), 11).unwrap();
        m.weights[0] = array![[0.8]];
        m.biases[0] = array![-0.1];
        let xs = [0.0, 0.5, 1.0, 1.5];
        let ys = [0.1, 0.4, 0.9, 1.4];
        let x = Array2::from_shape_vec((4, 1), xs.to_vec()).unwrap();
        let loss = MseLoss {
            targets: Array1::from_vec(ys.to_vec()),
        };
        let (_, grad) = loss_gradient(&m, &x, &[], &loss).unwrap();
        let w = 0.8;
        let b = -0.1;
        let expected_dw: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(&x, &y)| 2.0 * (w * x + b - y) * x)
            .sum::<f64>()
            / 4.0;
        let expected_db: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(&x, &y)| 2.0 * (w * x + b - y))
            .sum::<f64>()
            / 4.0;
        let flat = grad.to_flat();
        assert!((flat[0] - expected_dw).abs() <= 1e-14);
        assert!((flat[1] - expected_db).abs() <= 1e-14);
    }

    /// Loss exercising both value and tangent sensitivities:
    /// mean(values^2) + sum over directions of mean(tangent^2).
    struct AugmentedLoss;
    impl BatchLoss for AugmentedLoss {
        fn eval(
            &self,
            values: ArrayView1<'_, f64>,
            tangents: &[ArrayView1<'_, f64>],
        ) -> (f64, Array1<f64>, Vec<Array1<f64>>) {
            let n = values.len() as f64;
            let mut loss = values.mapv(|v| v * v).sum() / n;
            let d_value = values.mapv(|v| 2.0 * v / n);
            let mut d_tangents = Vec::new();
            for t in tangents {
                loss += t.mapv(|v| v * v).sum() / n;
                d_tangents.push(t.mapv(|v| 2.0 * v / n));
            }
            (loss, d_value, d_tangents)
        }
    }

    fn directional_fd_check(m: &MlpModel, x: &Array2<f64>, dirs: &[usize], tol: f64) {
        let (_, grad) = loss_gradient(m, x, dirs, &AugmentedLoss).unwrap();
        let flat_grad = grad.to_flat();
        let theta = m.flat_params();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let dir: Vec<f64> = (0..theta.len())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
            let dir: Vec<f64> = dir.iter().map(|d| d / norm).collect();
            let h = 1e-6;
            let mut probe = m.clone();
            let plus: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + h * d).collect();
            probe.set_flat_params(&plus).unwrap();
            let (lp, _) = loss_gradient(&probe, x, dirs, &AugmentedLoss).unwrap();
            let minus: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t - h * d).collect();
            probe.set_flat_params(&minus).unwrap();
            let (lm, _) = loss_gradient(&probe, x, dirs, &AugmentedLoss).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            let analytic: f64 = flat_grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
            let rel = (analytic - fd).abs() / analytic.abs().max(1e-10);
            assert!(
                rel <= tol,
                "directional derivative {analytic} vs fd {fd} (rel {rel})"
            );
        }
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let m = MlpModel::xavier(&small_arch(&[2, 12, 12, 1]), 2024).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(501);
        let x = Array2::from_shape_fn((40, 2), |_| rng.random_range(0.0..1.0));
        directional_fd_check(&m, &x, &[0, 1], 1e-5);

        // Sigmoid hidden and sigmoid output exercise the other activation
        // derivative formulas.
        let sig = MlpModel::xavier(
            &ArchSpec {
                layer_sizes: vec![2, 10, 1],
                hidden_activation: Activation::Sigmoid,
                output_activation: OutputActivation::Sigmoid,
            },
            7,
        )
        .unwrap();
        directional_fd_check(&sig, &x, &[0, 1], 1e-5);
    }

    #[test]
    fn forward_and_gradients_are_bit_deterministic() {
        let m = MlpModel::xavier(&small_arch(&[2, 16, 16, 1]), 9).unwrap();
        let x = Array2::from_shape_fn((30, 2), |(i, j)| ((i * 7 + j * 3) % 10) as f64 * 0.07);
        let (l1, g1) = loss_gradient(&m, &x, &[0, 1], &AugmentedLoss).unwrap();
        let (l2, g2) = loss_gradient(&m, &x, &[0, 1], &AugmentedLoss).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(g1.to_flat(), g2.to_flat());
    }

    #[test]
    fn evaluate_with_grads_bundles_consistently() {
        let m = MlpModel::xavier(&small_arch(&[2, 8, 1]), 15).unwrap();
        let bundle = m.evaluate_with_grads(&[0.2, 0.6]).unwrap();
        assert_eq!(bundle.value, m.forward(&[0.2, 0.6]).unwrap());
        assert_eq!(bundle.d_dinput, m.input_jacobian(&[0.2, 0.6]).unwrap());
        assert_eq!(bundle.d_dtheta.len(), m.param_count());
        // d(value)/d(output bias) is 1 for a linear output layer.
        assert_eq!(*bundle.d_dtheta.last().unwrap(), 1.0);
    }
}
