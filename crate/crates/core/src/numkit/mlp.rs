//! Fully connected networks with hand-written backward passes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{axpy, dot, Tensor};
use super::NumError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `[out × in]`, row-major.
    pub weight: Tensor,
    /// `[out]`
    pub bias: Tensor,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    /// Writes `activation(W x + b)` into `out`.
    #[inline]
    pub fn forward_row(&self, x: &[f64], out: &mut [f64]) {
        let n_in = self.in_dim();
        let w = self.weight.data();
        let b = self.bias.data();
        for (o, slot) in out.iter_mut().enumerate() {
            let z = dot(&w[o * n_in..(o + 1) * n_in], x) + b[o];
            *slot = self.activation.apply(z);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layers: Vec<Layer>,
}

/// Activations recorded by [`MlpParams::forward`], consumed by [`MlpParams::backward`].
#[derive(Debug, Clone)]
pub struct MlpCache {
    fingerprint: u64,
    rows: usize,
    /// `values[0]` is the input; `values[k + 1]` is the output of layer `k`.
    values: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.values.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl MlpParams {
    pub fn new(layers: Vec<Layer>) -> Result<Self, NumError> {
        if layers.is_empty() {
            return Err(NumError::Shape("an MLP needs at least one layer".into()));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.weight.shape().len() != 2 || l.bias.shape().len() != 1 {
                return Err(NumError::Shape(format!("layer {k}: weight must be 2-D, bias 1-D")));
            }
            if l.bias.len() != l.out_dim() {
                return Err(NumError::Shape(format!(
                    "layer {k}: bias length {} != out dim {}",
                    l.bias.len(),
                    l.out_dim()
                )));
            }
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(NumError::Shape(format!(
                    "layer {k} outputs {} but layer {} expects {}",
                    pair[0].out_dim(),
                    k + 1,
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Uniform fan-in initialization; `out_scale` multiplies the final layer's weights.
    pub fn init<R: Rng>(
        dims: &[usize],
        activations: &[Activation],
        out_scale: f64,
        rng: &mut R,
    ) -> Result<Self, NumError> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(NumError::Shape(format!(
                "{} dims need {} activations, got {}",
                dims.len(),
                dims.len().saturating_sub(1),
                activations.len()
            )));
        }
        let last = activations.len() - 1;
        let layers = dims
            .windows(2)
            .zip(activations)
            .enumerate()
            .map(|(k, (d, &act))| {
                let (n_in, n_out) = (d[0], d[1]);
                let gain = match act {
                    Activation::Relu => 6.0f64.sqrt(),
                    _ => 3.0f64.sqrt(),
                };
                let mut bound = gain / (n_in.max(1) as f64).sqrt();
                if k == last {
                    bound *= out_scale;
                }
                let w = (0..n_in * n_out)
                    .map(|_| rng.gen_range(-1.0..=1.0) * bound)
                    .collect();
                Layer {
                    weight: Tensor::new(vec![n_out, n_in], w).expect("sized above"),
                    bias: Tensor::zeros(vec![n_out]),
                    activation: act,
                }
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Zero-valued parameters with the same topology; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: Tensor::zeros(l.weight.shape().to_vec()),
                    bias: Tensor::zeros(l.bias.shape().to_vec()),
                    activation: l.activation,
                })
                .collect(),
        }
    }

    /// Parameter slices in a fixed order: weight then bias per layer.
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.data(), l.bias.data()])
            .collect()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                let Layer { weight, bias, .. } = l;
                [weight.data_mut(), bias.data_mut()]
            })
            .collect()
    }

    /// Cheap content hash used to detect a cache taken from different parameters.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for s in self.slices() {
            h ^= s.len() as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
            for v in s {
                h ^= v.to_bits();
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    pub fn check_finite(&self) -> Result<(), NumError> {
        for l in &self.layers {
            l.weight.check_finite()?;
            l.bias.check_finite()?;
        }
        Ok(())
    }

    /// Single-row inference without recording a cache.
    pub fn infer(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for l in &self.layers {
            let mut next = vec![0.0; l.out_dim()];
            l.forward_row(&cur, &mut next);
            cur = next;
        }
        cur
    }

    /// Batched forward pass over the rows of `input` (`[.. × in]`).
    pub fn forward(&self, input: &Tensor) -> Result<(Tensor, MlpCache), NumError> {
        if input.last_dim() != self.in_dim() {
            return Err(NumError::Shape(format!(
                "input last dimension {} != network input {}",
                input.last_dim(),
                self.in_dim()
            )));
        }
        let (values, rows) = self.forward_rows(input.data(), self.in_dim())?;
        let mut shape = input.shape().to_vec();
        if shape.is_empty() {
            shape.push(self.out_dim());
        } else {
            *shape.last_mut().unwrap() = self.out_dim();
        }
        let out = Tensor::new(shape, values.last().unwrap().clone())?;
        Ok((
            out,
            MlpCache {
                fingerprint: self.fingerprint(),
                rows,
                values,
            },
        ))
    }

    fn forward_rows(&self, input: &[f64], n_in: usize) -> Result<(Vec<Vec<f64>>, usize), NumError> {
        let rows = input.len().checked_div(n_in).unwrap_or(0);
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(input.to_vec());
        for l in &self.layers {
            let prev = values.last().unwrap();
            let (li, lo) = (l.in_dim(), l.out_dim());
            let mut out = vec![0.0; rows * lo];
            for r in 0..rows {
                l.forward_row(&prev[r * li..(r + 1) * li], &mut out[r * lo..(r + 1) * lo]);
            }
            if out.iter().any(|v| !v.is_finite()) {
                return Err(NumError::NonFinite("MLP forward produced a non-finite value".into()));
            }
            values.push(out);
        }
        Ok((values, rows))
    }

    /// Backpropagates `grad_output` through the recorded forward pass.
    ///
    /// Returns parameter gradients summed over rows, and the gradient with
    /// respect to the input.
    pub fn backward(
        &self,
        cache: &MlpCache,
        grad_output: &Tensor,
    ) -> Result<(MlpParams, Tensor), NumError> {
        let mut grads = self.zeros_like();
        let gin = self.backward_into(cache, grad_output.data(), &mut grads)?;
        let mut shape = grad_output.shape().to_vec();
        if let Some(last) = shape.last_mut() {
            *last = self.in_dim();
        }
        Ok((grads, Tensor::new(shape, gin)?))
    }

    /// Like [`backward`](Self::backward) but accumulates into existing gradients.
    pub fn backward_into(
        &self,
        cache: &MlpCache,
        grad_output: &[f64],
        grads: &mut MlpParams,
    ) -> Result<Vec<f64>, NumError> {
        Ok(self.backward_impl(cache, grad_output, grads, true)?.unwrap_or_default())
    }

    /// Parameter gradients only; skips the input-gradient product of the first layer.
    pub fn backward_params_into(
        &self,
        cache: &MlpCache,
        grad_output: &[f64],
        grads: &mut MlpParams,
    ) -> Result<(), NumError> {
        self.backward_impl(cache, grad_output, grads, false).map(|_| ())
    }

    fn backward_impl(
        &self,
        cache: &MlpCache,
        grad_output: &[f64],
        grads: &mut MlpParams,
        input_grad: bool,
    ) -> Result<Option<Vec<f64>>, NumError> {
        if cache.fingerprint != self.fingerprint() || cache.values.len() != self.layers.len() + 1 {
            return Err(NumError::StaleCache);
        }
        if grad_output.len() != cache.rows * self.out_dim() {
            return Err(NumError::Shape(format!(
                "grad_output has {} elements, expected {}",
                grad_output.len(),
                cache.rows * self.out_dim()
            )));
        }
        let rows = cache.rows;
        let mut g = grad_output.to_vec();
        for (k, l) in self.layers.iter().enumerate().rev() {
            let (li, lo) = (l.in_dim(), l.out_dim());
            let y = &cache.values[k + 1];
            let x = &cache.values[k];
            for (gi, &yi) in g.iter_mut().zip(y) {
                *gi *= l.activation.grad_from_output(yi);
            }
            let gl = &mut grads.layers[k];
            let gw = gl.weight.data_mut();
            for r in 0..rows {
                let xr = &x[r * li..(r + 1) * li];
                for o in 0..lo {
                    let go = g[r * lo + o];
                    if go != 0.0 {
                        axpy(go, xr, &mut gw[o * li..(o + 1) * li]);
                    }
                }
            }
            let gb = gl.bias.data_mut();
            for r in 0..rows {
                for o in 0..lo {
                    gb[o] += g[r * lo + o];
                }
            }
            if k == 0 && !input_grad {
                return Ok(None);
            }
            let w = l.weight.data();
            let mut gin = vec![0.0; rows * li];
            for r in 0..rows {
                let dst = &mut gin[r * li..(r + 1) * li];
                for o in 0..lo {
                    let go = g[r * lo + o];
                    if go != 0.0 {
                        axpy(go, &w[o * li..(o + 1) * li], dst);
                    }
                }
            }
            g = gin;
        }
        Ok(Some(g))
    }

    /// `self += alpha * other`, same topology.
    pub fn add_scaled(&mut self, alpha: f64, other: &MlpParams) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            axpy(alpha, b, a);
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v *= alpha);
        }
    }

    pub fn sq_norm(&self) -> f64 {
        self.slices().iter().map(|s| dot(s, s)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layer(out: usize, inp: usize, w: Vec<f64>, b: Vec<f64>, a: Activation) -> Layer {
        Layer {
            weight: Tensor::new(vec![out, inp], w).unwrap(),
            bias: Tensor::new(vec![out], b).unwrap(),
            activation: a,
        }
    }

    #[test]
    fn identity_network() {
        let net = MlpParams::new(vec![layer(
            2,
            2,
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0],
            Activation::Identity,
        )])
        .unwrap();
        let (y, _) = net.forward(&Tensor::vector(vec![1.0, 2.0]).unwrap()).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);
    }

    #[test]
    fn constant_network() {
        let net = MlpParams::new(vec![layer(1, 2, vec![0.0, 0.0], vec![3.0], Activation::Identity)])
            .unwrap();
        let (y, _) = net.forward(&Tensor::vector(vec![-7.0, 11.0]).unwrap()).unwrap();
        assert_eq!(y.data(), &[3.0]);
    }

    #[test]
    fn chained_dims_checked() {
        let a = layer(3, 2, vec![0.0; 6], vec![0.0; 3], Activation::Relu);
        let b = layer(1, 4, vec![0.0; 4], vec![0.0], Activation::Identity);
        assert!(matches!(MlpParams::new(vec![a, b]), Err(NumError::Shape(_))));
    }

    #[test]
    fn input_dim_mismatch() {
        let net = MlpParams::new(vec![layer(1, 2, vec![0.0; 2], vec![0.0], Activation::Identity)])
            .unwrap();
        assert!(matches!(
            net.forward(&Tensor::vector(vec![1.0; 3]).unwrap()),
            Err(NumError::Shape(_))
        ));
    }

    #[test]
    fn linear_layer_gradient_closed_form() {
        let net = MlpParams::new(vec![layer(
            2,
            3,
            vec![0.5, -1.0, 2.0, 0.1, 0.2, 0.3],
            vec![0.1, -0.2],
            Activation::Identity,
        )])
        .unwrap();
        let x = [1.0, 2.0, -1.0];
        let g = [0.7, -1.3];
        let (_, cache) = net.forward(&Tensor::vector(x.to_vec()).unwrap()).unwrap();
        let (grads, _) = net.backward(&cache, &Tensor::vector(g.to_vec()).unwrap()).unwrap();
        let gw = grads.layers()[0].weight.data();
        for o in 0..2 {
            for i in 0..3 {
                assert!((gw[o * 3 + i] - g[o] * x[i]).abs() < 1e-15);
            }
        }
        assert_eq!(grads.layers()[0].bias.data(), &g);
    }

    #[test]
    fn dead_relu_blocks_input_gradient() {
        let net = MlpParams::new(vec![layer(
            2,
            2,
            vec![1.0, 1.0, 1.0, 1.0],
            vec![-10.0, -10.0],
            Activation::Relu,
        )])
        .unwrap();
        let (_, cache) = net.forward(&Tensor::vector(vec![1.0, 2.0]).unwrap()).unwrap();
        let (_, gin) = net
            .backward(&cache, &Tensor::vector(vec![1.0, 1.0]).unwrap())
            .unwrap();
        assert_eq!(gin.data(), &[0.0, 0.0]);
    }

    #[test]
    fn stale_cache_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net =
            MlpParams::init(&[3, 4, 2], &[Activation::Tanh, Activation::Identity], 1.0, &mut rng)
                .unwrap();
        let (_, cache) = net.forward(&Tensor::vector(vec![0.1, 0.2, 0.3]).unwrap()).unwrap();
        net.layers_mut()[0].bias.data_mut()[0] += 1.0;
        let g = Tensor::vector(vec![1.0, 1.0]).unwrap();
        assert!(matches!(net.backward(&cache, &g), Err(NumError::StaleCache)));
    }

    #[test]
    fn batched_rows_match_single_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = MlpParams::init(&[4, 5, 3], &[Activation::Relu, Activation::Tanh], 1.0, &mut rng)
            .unwrap();
        let xs: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
        let (y, _) = net.forward(&Tensor::new(vec![3, 4], xs.clone()).unwrap()).unwrap();
        for r in 0..3 {
            assert_eq!(&y.data()[r * 3..r * 3 + 3], net.infer(&xs[r * 4..r * 4 + 4]).as_slice());
        }
    }
}
