use rand::Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

/// Dense row-major tensor of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape {shape:?} vs {} values", data.len());
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    /// Normal(0, std) entries rounded to the f32 grid.
    pub fn normal(shape: &[usize], std: f64, rng: &mut impl Rng) -> Self {
        let dist = Normal::new(0.0, std).expect("finite std");
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: (0..n).map(|_| to_f32_grid(dist.sample(rng))).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }
}

/// Round to the nearest `f32`. Parameters live on this grid so that fp32
/// checkpoints reproduce them exactly.
#[inline]
pub fn to_f32_grid(x: f64) -> f64 {
    x as f32 as f64
}

/// A trainable tensor with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Param { value, grad }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Param::new(Tensor::zeros(shape))
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Named parameter enumeration. Names are dot-separated paths.
pub trait Parameters {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, p| n += p.len());
        n
    }

    fn zero_grad(&mut self) {
        self.visit_mut("", &mut |_, p| p.zero_grad());
    }

    fn named_params(&self, prefix: &str) -> Vec<(String, &Param)> {
        let mut out = Vec::new();
        self.visit(prefix, &mut |n, p| out.push((n, p)));
        out
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// SHA-256 over parameter names, shapes and value bits.
pub fn fingerprint(p: &dyn ParametersDyn) -> String {
    let mut h = Sha256::new();
    p.visit_dyn(&mut |name, param| {
        h.update(name.as_bytes());
        for d in param.value.shape() {
            h.update((*d as u64).to_le_bytes());
        }
        for x in param.value.data() {
            h.update(x.to_bits().to_le_bytes());
        }
    });
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Object-safe view of [`Parameters`] for fingerprinting.
pub trait ParametersDyn {
    fn visit_dyn(&self, f: &mut dyn FnMut(String, &Param));
}

impl<T: Parameters> ParametersDyn for T {
    fn visit_dyn(&self, f: &mut dyn FnMut(String, &Param)) {
        self.visit("", &mut |n, p| f(n, p));
    }
}

// Dense kernels over row-major slices.

/// `y[n×out] = x[n×in] · wᵀ + b`, with `w` stored `[out×in]`.
pub(crate) fn affine(x: &[f64], n: usize, w: &[f64], b: &[f64], out: usize) -> Vec<f64> {
    let inp = w.len() / out;
    let mut y = vec![0.0; n * out];
    for i in 0..n {
        let xi = &x[i * inp..(i + 1) * inp];
        for o in 0..out {
            let wo = &w[o * inp..(o + 1) * inp];
            y[i * out + o] = b[o] + dot(xi, wo);
        }
    }
    y
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
