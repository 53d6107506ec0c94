//! Dense linear algebra, fully-connected networks with hand-derived
//! backward passes, the Adam optimizer, and deterministic initialization.
//!
//! Everything is 64-bit; all functions are pure except for the explicit
//! optimizer state update.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FieldError, Result};

/// The single fixed RNG algorithm used everywhere (counter-based ChaCha8;
/// identical seed gives an identical stream on every platform).
pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent substream for a (seed, index) pair, e.g. one per collection.
pub fn rng_substream(seed: u64, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_add(1));
    rng
}

/// Row-major dense matrix of f64.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |v| v.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c);
            data.extend(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// self (r x k) * other (k x c) -> (r x c)
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k);
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let out_row = out.row_mut(i);
                for j in 0..other.cols {
                    out_row[j] += a * orow[j];
                }
            }
        }
        out
    }

    /// self (r x k) * other^T where other is (c x k) -> (r x c)
    pub fn matmul_nt(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols);
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let arow = self.row(i);
            let out_row = out.row_mut(i);
            for j in 0..other.rows {
                let brow = other.row(j);
                let mut acc = 0.0;
                for k in 0..arow.len() {
                    acc += arow[k] * brow[k];
                }
                out_row[j] = acc;
            }
        }
        out
    }

    /// self^T (k x r)^T as (r x k) times other (r x c) -> (k x c)
    pub fn matmul_tn(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows);
        let mut out = Matrix::zeros(self.cols, other.cols);
        for r in 0..self.rows {
            let arow = self.row(r);
            let brow = other.row(r);
            for i in 0..self.cols {
                let a = arow[i];
                if a == 0.0 {
                    continue;
                }
                let out_row = out.row_mut(i);
                for j in 0..brow.len() {
                    out_row[j] += a * brow[j];
                }
            }
        }
        out
    }
}

/// One affine layer: y = W x + b, W is (out x in).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// A fully-connected network with tanh on all but the final layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].weight.cols];
        d.extend(self.layers.iter().map(|l| l.weight.rows));
        d
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.rows
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data.len() + l.bias.len())
            .sum()
    }

    /// All tensors concatenated in declaration order (weight row-major,
    /// then bias, per layer).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weight.data);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Inverse of [`flatten`] for a known layer structure.
    pub fn unflatten(dims: &[usize], flat: &[f64]) -> Result<Self> {
        let expected: usize = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if flat.len() != expected {
            return Err(FieldError::Dimension(format!(
                "flat parameter vector has {} values, dims {:?} need {}",
                flat.len(),
                dims,
                expected
            )));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        let mut off = 0;
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weight = Matrix {
                rows: fan_out,
                cols: fan_in,
                data: flat[off..off + fan_out * fan_in].to_vec(),
            };
            off += fan_out * fan_in;
            let bias = flat[off..off + fan_out].to_vec();
            off += fan_out;
            layers.push(Layer { weight, bias });
        }
        Ok(MlpParams { layers })
    }

    pub fn write_flat(&self, flat: &mut [f64]) {
        let mut off = 0;
        for l in &self.layers {
            flat[off..off + l.weight.data.len()].copy_from_slice(&l.weight.data);
            off += l.weight.data.len();
            flat[off..off + l.bias.len()].copy_from_slice(&l.bias);
            off += l.bias.len();
        }
    }

    pub fn read_flat(&mut self, flat: &[f64]) {
        let mut off = 0;
        for l in &mut self.layers {
            let n = l.weight.data.len();
            l.weight.data.copy_from_slice(&flat[off..off + n]);
            off += n;
            let n = l.bias.len();
            l.bias.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }
}

/// Gradients shaped like an [`MlpParams`].
pub type MlpGrads = MlpParams;

pub fn zero_grads(p: &MlpParams) -> MlpGrads {
    MlpParams {
        layers: p
            .layers
            .iter()
            .map(|l| Layer {
                weight: Matrix::zeros(l.weight.rows, l.weight.cols),
                bias: vec![0.0; l.bias.len()],
            })
            .collect(),
    }
}

/// Weights uniform in +-sqrt(1/fan_in), biases zero, deterministic per seed.
pub fn init_mlp(dims: &[usize], rng: &mut Rng) -> MlpParams {
    assert!(dims.len() >= 2, "need at least input and output dims");
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for w in dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let bound = (1.0 / fan_in as f64).sqrt();
        let mut weight = Matrix::zeros(fan_out, fan_in);
        for v in weight.data.iter_mut() {
            *v = rng.random_range(-bound..bound);
        }
        layers.push(Layer {
            weight,
            bias: vec![0.0; fan_out],
        });
    }
    MlpParams { layers }
}

fn check_input(p: &MlpParams, x_len: usize) -> Result<()> {
    if x_len != p.input_dim() {
        return Err(FieldError::Dimension(format!(
            "input length {} does not match first layer input {}",
            x_len,
            p.input_dim()
        )));
    }
    Ok(())
}

/// Forward pass on a single input vector.
pub fn mlp_forward(p: &MlpParams, x: &[f64]) -> Result<Vec<f64>> {
    check_input(p, x.len())?;
    let mut a = x.to_vec();
    let last = p.layers.len() - 1;
    for (i, l) in p.layers.iter().enumerate() {
        let mut z = l.bias.clone();
        for (row, zi) in z.iter_mut().enumerate() {
            let wrow = l.weight.row(row);
            for (k, &ak) in a.iter().enumerate() {
                *zi += wrow[k] * ak;
            }
        }
        if i != last {
            for v in z.iter_mut() {
                *v = v.tanh();
            }
        }
        a = z;
    }
    Ok(a)
}

/// Per-layer post-activation values from a forward pass, used by backward.
struct ForwardCache {
    /// activations[0] = input; activations[i] = output of layer i-1
    /// (tanh applied on hidden layers, affine only on the last).
    activations: Vec<Vec<f64>>,
}

fn forward_with_cache(p: &MlpParams, x: &[f64]) -> ForwardCache {
    let mut acts = Vec::with_capacity(p.layers.len() + 1);
    acts.push(x.to_vec());
    let last = p.layers.len() - 1;
    for (i, l) in p.layers.iter().enumerate() {
        let a = acts.last().unwrap();
        let mut z = l.bias.clone();
        for (row, zi) in z.iter_mut().enumerate() {
            let wrow = l.weight.row(row);
            for (k, &ak) in a.iter().enumerate() {
                *zi += wrow[k] * ak;
            }
        }
        if i != last {
            for v in z.iter_mut() {
                *v = v.tanh();
            }
        }
        acts.push(z);
    }
    ForwardCache { activations: acts }
}

/// Reverse-mode pass: gradients of cotangent . output with respect to every
/// parameter and to the input.
pub fn mlp_backward(p: &MlpParams, x: &[f64], cotangent: &[f64]) -> Result<(MlpGrads, Vec<f64>)> {
    check_input(p, x.len())?;
    if cotangent.len() != p.output_dim() {
        return Err(FieldError::Dimension(format!(
            "cotangent length {} does not match output dim {}",
            cotangent.len(),
            p.output_dim()
        )));
    }
    let cache = forward_with_cache(p, x);
    let mut grads = zero_grads(p);
    let mut delta = cotangent.to_vec();
    let last = p.layers.len() - 1;
    for i in (0..p.layers.len()).rev() {
        // tanh derivative uses the stored post-activation: 1 - a^2
        if i != last {
            let a = &cache.activations[i + 1];
            for (d, &ai) in delta.iter_mut().zip(a) {
                *d *= 1.0 - ai * ai;
            }
        }
        let input = &cache.activations[i];
        let gl = &mut grads.layers[i];
        for (row, &d) in delta.iter().enumerate() {
            let grow = gl.weight.row_mut(row);
            for (k, &ik) in input.iter().enumerate() {
                grow[k] += d * ik;
            }
            gl.bias[row] += d;
        }
        let mut next = vec![0.0; input.len()];
        let w = &p.layers[i].weight;
        for (row, &d) in delta.iter().enumerate() {
            let wrow = w.row(row);
            for (k, n) in next.iter_mut().enumerate() {
                *n += d * wrow[k];
            }
        }
        delta = next;
    }
    Ok((grads, delta))
}

/// Full Jacobian d(output)/d(input), (out_dim x in_dim), by forward-mode
/// propagation through the layers.
pub fn mlp_input_gradient(p: &MlpParams, x: &[f64]) -> Result<Matrix> {
    check_input(p, x.len())?;
    let last = p.layers.len() - 1;
    let mut a = x.to_vec();
    // J is (cur_dim x in_dim)
    let mut jac = Matrix::zeros(x.len(), x.len());
    for i in 0..x.len() {
        *jac.at_mut(i, i) = 1.0;
    }
    for (i, l) in p.layers.iter().enumerate() {
        let mut z = l.bias.clone();
        for (row, zi) in z.iter_mut().enumerate() {
            let wrow = l.weight.row(row);
            for (k, &ak) in a.iter().enumerate() {
                *zi += wrow[k] * ak;
            }
        }
        let mut jnew = l.weight.matmul(&jac);
        if i != last {
            for v in z.iter_mut() {
                *v = v.tanh();
            }
            for (row, &ai) in z.iter().enumerate() {
                let s = 1.0 - ai * ai;
                for v in jnew.row_mut(row) {
                    *v *= s;
                }
            }
        }
        a = z;
        jac = jnew;
    }
    Ok(jac)
}

/// Cache for the batched pass; row b of each matrix belongs to sample b.
pub struct BatchCache {
    activations: Vec<Matrix>,
}

/// Batched forward over input rows; returns the cache for backward.
pub fn mlp_forward_batch(p: &MlpParams, x: &Matrix) -> Result<(Matrix, BatchCache)> {
    check_input(p, x.cols)?;
    let mut acts = Vec::with_capacity(p.layers.len() + 1);
    acts.push(x.clone());
    let last = p.layers.len() - 1;
    for (i, l) in p.layers.iter().enumerate() {
        let a = acts.last().unwrap();
        let mut z = a.matmul_nt(&l.weight);
        for r in 0..z.rows {
            let row = z.row_mut(r);
            for (v, &b) in row.iter_mut().zip(&l.bias) {
                *v += b;
            }
            if i != last {
                for v in row.iter_mut() {
                    *v = v.tanh();
                }
            }
        }
        acts.push(z);
    }
    let out = acts.last().unwrap().clone();
    Ok((out, BatchCache { activations: acts }))
}

/// Batched reverse pass; cotangents are rows matched to the forward batch.
/// Returns parameter gradients summed over the batch and per-row input grads.
pub fn mlp_backward_batch(
    p: &MlpParams,
    cache: &BatchCache,
    cotangents: &Matrix,
) -> Result<(MlpGrads, Matrix)> {
    if cotangents.cols != p.output_dim() || cotangents.rows != cache.activations[0].rows {
        return Err(FieldError::Dimension("cotangent batch shape mismatch".into()));
    }
    let mut grads = zero_grads(p);
    let mut delta = cotangents.clone();
    let last = p.layers.len() - 1;
    for i in (0..p.layers.len()).rev() {
        if i != last {
            let a = &cache.activations[i + 1];
            for (d, &av) in delta.data.iter_mut().zip(&a.data) {
                *d *= 1.0 - av * av;
            }
        }
        let input = &cache.activations[i];
        let gl = &mut grads.layers[i];
        gl.weight = delta.matmul_tn(input);
        for r in 0..delta.rows {
            for (b, &d) in gl.bias.iter_mut().zip(delta.row(r)) {
                *b += d;
            }
        }
        delta = delta.matmul(&p.layers[i].weight);
    }
    Ok((grads, delta))
}

/// Adam optimizer state over a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState {
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Standard Adam update with bias correction, in place.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(FieldError::Dimension(format!(
            "adam shapes: params {}, grads {}, state {}",
            params.len(),
            grads.len(),
            state.first_moment.len()
        )));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(FieldError::NonFinite("gradient passed to adam_step".into()));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.first_moment[i] = state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * g;
        state.second_moment[i] = state.beta2 * state.second_moment[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.first_moment[i] / bc1;
        let v_hat = state.second_moment[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}

/// Central finite differences of a scalar function, one coordinate at a time.
pub fn finite_difference_gradient<F>(f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    assert!(h > 0.0);
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let orig = xp[i];
        xp[i] = orig + h;
        let fp = f(&xp);
        xp[i] = orig - h;
        let fm = f(&xp);
        xp[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_mlp(dims: &[usize], seed: u64) -> MlpParams {
        let mut rng = rng_from_seed(seed);
        init_mlp(dims, &mut rng)
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = random_mlp(&[2, 32, 32, 32, 1], 42);
        let b = random_mlp(&[2, 32, 32, 32, 1], 42);
        assert_eq!(a, b);
        // (2*32+32) + 2*(32*32+32) + (32+1)
        assert_eq!(a.param_count(), 2241);
        for l in &a.layers {
            let bound = (1.0 / l.weight.cols as f64).sqrt();
            assert!(l.weight.data.iter().all(|w| w.abs() <= bound));
            assert!(l.bias.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn forward_zero_weights_returns_bias() {
        let mut p = random_mlp(&[3, 4, 2], 1);
        for l in &mut p.layers {
            l.weight.data.iter_mut().for_each(|w| *w = 0.0);
        }
        p.layers[1].bias = vec![0.5, -1.5];
        let y = mlp_forward(&p, &[9.0, -3.0, 0.1]).unwrap();
        assert_eq!(y, vec![0.5, -1.5]);
    }

    #[test]
    fn forward_single_linear_layer() {
        let p = MlpParams {
            layers: vec![Layer {
                weight: Matrix::from_rows(vec![vec![1.0, 2.0], vec![-1.0, 0.5]]),
                bias: vec![0.0, 0.0],
            }],
        };
        let y = mlp_forward(&p, &[3.0, 4.0]).unwrap();
        assert_eq!(y, vec![11.0, -1.0]);
    }

    #[test]
    fn forward_matches_naive_reimplementation() {
        // independent straight-line evaluation of a depth-3 width-4 net
        let p = random_mlp(&[2, 4, 4, 1], 99);
        let x = [0.3, -0.7];
        let mut a = x.to_vec();
        for (i, l) in p.layers.iter().enumerate() {
            let mut z = vec![0.0; l.weight.rows];
            for r in 0..l.weight.rows {
                let mut acc = l.bias[r];
                for c in 0..l.weight.cols {
                    acc += l.weight.at(r, c) * a[c];
                }
                z[r] = acc;
            }
            if i + 1 != p.layers.len() {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            a = z;
        }
        let y = mlp_forward(&p, &x).unwrap();
        assert!((y[0] - a[0]).abs() < 1e-12);
    }

    #[test]
    fn forward_dimension_mismatch() {
        let p = random_mlp(&[2, 4, 1], 0);
        assert!(mlp_forward(&p, &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn backward_linear_layer() {
        let p = MlpParams {
            layers: vec![Layer {
                weight: Matrix::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]]),
                bias: vec![0.0, 0.0],
            }],
        };
        let x = [5.0, 7.0];
        let cot = [1.0, -2.0];
        let (g, gx) = mlp_backward(&p, &x, &cot).unwrap();
        // param gradient = cotangent outer x
        assert_eq!(g.layers[0].weight.data, vec![5.0, 7.0, -10.0, -14.0]);
        assert_eq!(g.layers[0].bias, vec![1.0, -2.0]);
        // input gradient = W^T cot
        assert_eq!(gx, vec![1.0 - 6.0, 2.0 - 8.0]);
    }

    #[test]
    fn backward_zero_cotangent() {
        let p = random_mlp(&[2, 4, 3], 5);
        let (g, gx) = mlp_backward(&p, &[0.1, 0.2], &[0.0, 0.0, 0.0]).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
        assert!(gx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let p = random_mlp(&[3, 5, 5, 2], 11);
        let x = [0.4, -0.2, 0.9];
        let cot = [0.7, -1.3];
        let (grads, gx) = mlp_backward(&p, &x, &cot).unwrap();
        let flat = p.flatten();
        let dims = p.dims();
        let scalar = |flat_params: &[f64]| {
            let q = MlpParams::unflatten(&dims, flat_params).unwrap();
            let y = mlp_forward(&q, &x).unwrap();
            y.iter().zip(&cot).map(|(a, b)| a * b).sum::<f64>()
        };
        let fd = finite_difference_gradient(scalar, &flat, 1e-6);
        for (a, b) in grads.flatten().iter().zip(&fd) {
            let scale = b.abs().max(1e-6);
            assert!((a - b).abs() / scale < 1e-6, "param grad {a} vs fd {b}");
        }
        let fd_x = finite_difference_gradient(
            |xv| {
                let y = mlp_forward(&p, xv).unwrap();
                y.iter().zip(&cot).map(|(a, b)| a * b).sum::<f64>()
            },
            &x,
            1e-6,
        );
        for (a, b) in gx.iter().zip(&fd_x) {
            assert!((a - b).abs() / b.abs().max(1e-6) < 1e-6);
        }
    }

    #[test]
    fn input_gradient_linear_and_constant() {
        let w = Matrix::from_rows(vec![vec![1.5, -2.0], vec![0.0, 3.0]]);
        let p = MlpParams {
            layers: vec![Layer {
                weight: w.clone(),
                bias: vec![0.1, 0.2],
            }],
        };
        let j = mlp_input_gradient(&p, &[1.0, 1.0]).unwrap();
        assert_eq!(j, w);

        let mut c = random_mlp(&[2, 4, 1], 3);
        for l in &mut c.layers {
            l.weight.data.iter_mut().for_each(|v| *v = 0.0);
        }
        let j = mlp_input_gradient(&c, &[0.5, 0.5]).unwrap();
        assert!(j.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let p = random_mlp(&[2, 6, 6, 1], 21);
        let x = [0.3, -0.8];
        let j = mlp_input_gradient(&p, &x).unwrap();
        let fd = finite_difference_gradient(|xv| mlp_forward(&p, xv).unwrap()[0], &x, 1e-6);
        for k in 0..2 {
            let scale = fd[k].abs().max(1e-6);
            assert!((j.at(0, k) - fd[k]).abs() / scale < 1e-6);
        }
    }

    #[test]
    fn batch_matches_single() {
        let p = random_mlp(&[3, 8, 8, 2], 13);
        let xs = vec![
            vec![0.1, 0.2, 0.3],
            vec![-0.5, 0.9, 0.0],
            vec![1.0, -1.0, 0.5],
        ];
        let xm = Matrix::from_rows(xs.clone());
        let (y, cache) = mlp_forward_batch(&p, &xm).unwrap();
        for (b, x) in xs.iter().enumerate() {
            let ys = mlp_forward(&p, x).unwrap();
            for j in 0..2 {
                assert!((y.at(b, j) - ys[j]).abs() < 1e-13);
            }
        }
        let cots = vec![vec![1.0, 0.5], vec![-0.3, 0.7], vec![0.0, 2.0]];
        let cm = Matrix::from_rows(cots.clone());
        let (g, gx) = mlp_backward_batch(&p, &cache, &cm).unwrap();
        let mut g_sum = zero_grads(&p).flatten();
        for (x, c) in xs.iter().zip(&cots) {
            let (gi, gxi) = mlp_backward(&p, x, c).unwrap();
            for (s, v) in g_sum.iter_mut().zip(gi.flatten()) {
                *s += v;
            }
            let b = xs.iter().position(|v| v == x).unwrap();
            for j in 0..3 {
                assert!((gx.at(b, j) - gxi[j]).abs() < 1e-12);
            }
        }
        for (a, b) in g.flatten().iter().zip(&g_sum) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_first_step() {
        let mut st = AdamState::new(1);
        let mut params = vec![1.0];
        adam_step(&mut st, &mut params, &[2.0], 0.1).unwrap();
        // bias-corrected first step moves by ~lr in the gradient direction
        assert!((params[0] - (1.0 - 0.1)).abs() < 1e-6);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn adam_zero_gradient_and_determinism() {
        let mut st = AdamState::new(3);
        let mut params = vec![1.0, -2.0, 0.5];
        let orig = params.clone();
        adam_step(&mut st, &mut params, &[0.0, 0.0, 0.0], 0.1).unwrap();
        assert_eq!(params, orig);

        let mut st2 = AdamState::new(3);
        let mut p2 = vec![1.0, -2.0, 0.5];
        adam_step(&mut st2, &mut p2, &[0.0, 0.0, 0.0], 0.1).unwrap();
        assert_eq!(p2, params);
        assert_eq!(st2, st);
    }

    #[test]
    fn adam_rejects_nonfinite() {
        let mut st = AdamState::new(1);
        let mut params = vec![1.0];
        assert!(adam_step(&mut st, &mut params, &[f64::NAN], 0.1).is_err());
    }

    #[test]
    fn fd_gradient_quadratic() {
        let g = finite_difference_gradient(|x| x.iter().map(|v| v * v).sum(), &[1.0, 2.0], 1e-5);
        assert!((g[0] - 2.0).abs() < 1e-8);
        assert!((g[1] - 4.0).abs() < 1e-8);
        let gz = finite_difference_gradient(|_| 3.5, &[1.0, 2.0], 1e-5);
        assert!(gz.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn flatten_roundtrip() {
        let p = random_mlp(&[5, 7, 3], 77);
        let q = MlpParams::unflatten(&p.dims(), &p.flatten()).unwrap();
        assert_eq!(p, q);
        assert!(MlpParams::unflatten(&[5, 7, 3], &[0.0; 4]).is_err());
    }

    #[test]
    fn tanh_activations_bounded() {
        let p = random_mlp(&[2, 16, 16, 1], 8);
        let cache = forward_with_cache(&p, &[50.0, -50.0]);
        for acts in &cache.activations[1..cache.activations.len() - 1] {
            assert!(acts.iter().all(|a| a.abs() <= 1.0));
        }
    }
}
