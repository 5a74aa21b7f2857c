//! Building blocks with explicit backward passes. Each `forward` returns
//! what its `backward` needs; `backward` accumulates parameter gradients
//! (when asked) and returns the gradient with respect to the input.

use rand::Rng;

use super::tensor::{affine, axpy, dot, join, Param, Parameters, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `[out, in]`
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    pub fn new(input: usize, output: usize, std: f64, rng: &mut impl Rng) -> Self {
        Linear {
            weight: Param::new(Tensor::normal(&[output, input], std, rng)),
            bias: Param::zeros(&[output]),
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Linear {
            weight: Param::zeros(&[output, input]),
            bias: Param::zeros(&[output]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn forward(&self, x: &[f64], n: usize) -> Vec<f64> {
        affine(x, n, self.weight.value.data(), self.bias.value.data(), self.output_dim())
    }

    pub fn backward(&mut self, x: &[f64], n: usize, dy: &[f64], param_grads: bool) -> Vec<f64> {
        let (inp, out) = (self.input_dim(), self.output_dim());
        let w = self.weight.value.data();
        let mut dx = vec![0.0; n * inp];
        for i in 0..n {
            let dyi = &dy[i * out..(i + 1) * out];
            let dxi = &mut dx[i * inp..(i + 1) * inp];
            for (o, &g) in dyi.iter().enumerate() {
                if g != 0.0 {
                    axpy(g, &w[o * inp..(o + 1) * inp], dxi);
                }
            }
        }
        if param_grads {
            let dw = self.weight.grad.data_mut();
            let db = self.bias.grad.data_mut();
            for i in 0..n {
                let xi = &x[i * inp..(i + 1) * inp];
                for o in 0..out {
                    let g = dy[i * out + o];
                    if g != 0.0 {
                        axpy(g, xi, &mut dw[o * inp..(o + 1) * inp]);
                        db[o] += g;
                    }
                }
            }
        }
        dx
    }
}

impl Parameters for Linear {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        f(join(prefix, "weight"), &mut self.weight);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Param,
    pub beta: Param,
}

pub struct LayerNormCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(width: usize) -> Self {
        LayerNorm {
            gamma: Param::new(Tensor::filled(&[width], 1.0)),
            beta: Param::zeros(&[width]),
        }
    }

    pub fn width(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&self, x: &[f64], n: usize) -> (Vec<f64>, LayerNormCache) {
        let w = self.width();
        let (g, b) = (self.gamma.value.data(), self.beta.value.data());
        let mut y = vec![0.0; n * w];
        let mut xhat = vec![0.0; n * w];
        let mut inv_std = vec![0.0; n];
        for i in 0..n {
            let xi = &x[i * w..(i + 1) * w];
            let mean = xi.iter().sum::<f64>() / w as f64;
            let var = xi.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / w as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[i] = is;
            for j in 0..w {
                let h = (xi[j] - mean) * is;
                xhat[i * w + j] = h;
                y[i * w + j] = g[j] * h + b[j];
            }
        }
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(&mut self, cache: &LayerNormCache, dy: &[f64], param_grads: bool) -> Vec<f64> {
        let w = self.width();
        let n = cache.inv_std.len();
        let g = self.gamma.value.data().to_vec();
        let mut dx = vec![0.0; n * w];
        for i in 0..n {
            let dyi = &dy[i * w..(i + 1) * w];
            let xh = &cache.xhat[i * w..(i + 1) * w];
            let dxhat: Vec<f64> = dyi.iter().zip(&g).map(|(d, g)| d * g).collect();
            let sum = dxhat.iter().sum::<f64>();
            let sum_x = dot(&dxhat, xh);
            let k = cache.inv_std[i] / w as f64;
            for j in 0..w {
                dx[i * w + j] = k * (w as f64 * dxhat[j] - sum - xh[j] * sum_x);
            }
            if param_grads {
                let dg = self.gamma.grad.data_mut();
                for j in 0..w {
                    dg[j] += dyi[j] * xh[j];
                }
                axpy(1.0, dyi, self.beta.grad.data_mut());
            }
        }
        dx
    }
}

impl Parameters for LayerNorm {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        f(join(prefix, "gamma"), &self.gamma);
        f(join(prefix, "beta"), &self.beta);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        f(join(prefix, "gamma"), &mut self.gamma);
        f(join(prefix, "beta"), &mut self.beta);
    }
}

const INV_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact (erf-based) GELU.
#[inline]
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * INV_SQRT_2))
}

#[inline]
pub fn gelu_grad(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * INV_SQRT_2)) + x * INV_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn gelu_all(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| gelu(v)).collect()
}

/// `dy ⊙ gelu'(x)`
pub fn gelu_backward(x: &[f64], dy: &[f64]) -> Vec<f64> {
    x.iter().zip(dy).map(|(&x, &d)| d * gelu_grad(x)).collect()
}

/// Numerically stable softmax of one row, in place.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Cross-entropy of `logits` against `target`, with its gradient.
pub fn cross_entropy(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let mut p = logits.to_vec();
    softmax_in_place(&mut p);
    let loss = -p[target].max(f64::MIN_POSITIVE).ln();
    p[target] -= 1.0;
    (loss, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_reference_values() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(1.0) - 0.841_344_746_068_542_9).abs() < 1e-12);
        assert!((gelu(-1.0) + 0.158_655_253_931_457_05).abs() < 1e-12);
        for x in [-2.0, -0.3, 0.0, 0.7, 3.0] {
            let h = 1e-5;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn layer_norm_normalizes_rows() {
        let ln = LayerNorm::new(4);
        let (y, _) = ln.forward(&[1., 2., 3., 4., -1., -1., 1., 1.], 2);
        for row in y.chunks(4) {
            let mean: f64 = row.iter().sum::<f64>() / 4.0;
            let var: f64 = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn cross_entropy_gradient_sums_to_zero() {
        let (loss, g) = cross_entropy(&[1.0, 2.0, 0.5], 1);
        assert!(loss > 0.0);
        assert!(g.iter().sum::<f64>().abs() < 1e-12);
        assert!(g[1] < 0.0);
    }
}
