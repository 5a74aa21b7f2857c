//! Classification heads.

use rand::Rng;

use super::layers::{gelu_all, gelu_backward, LayerNorm, LayerNormCache, Linear};
use super::tensor::{axpy, join, Param, Parameters, Tensor};
use crate::encoding::PatternVerbalizerPair;
use crate::error::{Error, Result};

pub const HEAD_INIT_STD: f64 = 0.02;

/// Affine map of the first position's hidden state to class logits.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardHead {
    pub classifier: Linear,
}

impl StandardHead {
    pub fn new(hidden: usize, classes: usize, rng: &mut impl Rng) -> Self {
        StandardHead {
            classifier: Linear::new(hidden, classes, HEAD_INIT_STD, rng),
        }
    }

    pub fn classes(&self) -> usize {
        self.classifier.output_dim()
    }

    pub fn forward(&self, hidden: &Tensor) -> Result<Vec<f64>> {
        if hidden.is_empty() || hidden.cols() != self.classifier.input_dim() {
            return Err(Error::shape(format!(
                "standard head expects width {}, got {:?}",
                self.classifier.input_dim(),
                hidden.shape()
            )));
        }
        Ok(self.classifier.forward(hidden.row(0), 1))
    }

    pub fn backward(&mut self, hidden: &Tensor, d_logits: &[f64]) -> Tensor {
        let dx = self.classifier.backward(hidden.row(0), 1, d_logits, true);
        let mut d = Tensor::zeros(hidden.shape());
        d.row_mut(0).copy_from_slice(&dx);
        d
    }
}

impl Parameters for StandardHead {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        self.classifier.visit(&join(prefix, "classifier"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        self.classifier.visit_mut(&join(prefix, "classifier"), f);
    }
}

/// Sum, per label, of the logits its verbalizer tokens receive at the
/// successive mask positions. `mask_logits` is `[masks, vocab]`; labels
/// with fewer tokens than masks ignore the surplus masks.
pub fn verbalizer_class_logits(mask_logits: &Tensor, label_index: &[Vec<usize>]) -> Vec<f64> {
    label_index
        .iter()
        .map(|toks| toks.iter().enumerate().map(|(j, &t)| mask_logits.row(j)[t]).sum())
        .collect()
}

pub fn verbalizer_class_backward(d_class: &[f64], shape: &[usize], label_index: &[Vec<usize>]) -> Tensor {
    let mut d = Tensor::zeros(shape);
    for (toks, &g) in label_index.iter().zip(d_class) {
        for (j, &t) in toks.iter().enumerate() {
            d.row_mut(j)[t] += g;
        }
    }
    d
}

/// Scores verbalizer tokens at the mask positions:
/// `emit(norm(gelu(project(h))))`, one row of verbalizer-vocabulary logits
/// per mask, summed per label into class logits.
#[derive(Debug, Clone, PartialEq)]
pub struct PetHead {
    pub project: Linear,
    pub norm: LayerNorm,
    pub emit: Linear,
    pub label_index: Vec<Vec<usize>>,
    pub mask_count: usize,
}

pub struct PetHeadCache {
    positions: Vec<usize>,
    n: usize,
    gathered: Vec<f64>,
    pre: Vec<f64>,
    norm: LayerNormCache,
    normed: Vec<f64>,
    pub mask_logits: Tensor,
}

impl PetHead {
    pub fn new(hidden: usize, pvp: &PatternVerbalizerPair, rng: &mut impl Rng) -> Self {
        PetHead {
            project: Linear::new(hidden, hidden, HEAD_INIT_STD, rng),
            norm: LayerNorm::new(hidden),
            emit: Linear::new(hidden, pvp.vocab.len(), HEAD_INIT_STD, rng),
            label_index: pvp.label_vocab_index.clone(),
            mask_count: pvp.mask_count,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.emit.output_dim()
    }

    pub fn forward(&self, hidden: &Tensor, mask_positions: &[usize]) -> Result<(Vec<f64>, PetHeadCache)> {
        if mask_positions.len() != self.mask_count {
            return Err(Error::shape(format!(
                "PET head expects {} mask positions, got {}",
                self.mask_count,
                mask_positions.len()
            )));
        }
        let h = self.project.input_dim();
        if hidden.cols() != h {
            return Err(Error::shape(format!("PET head expects width {h}, got {:?}", hidden.shape())));
        }
        let m = mask_positions.len();
        let mut gathered = Vec::with_capacity(m * h);
        for &p in mask_positions {
            if p >= hidden.rows() {
                return Err(Error::shape(format!("mask position {p} beyond sequence of {}", hidden.rows())));
            }
            gathered.extend_from_slice(hidden.row(p));
        }
        let pre = self.project.forward(&gathered, m);
        let act = gelu_all(&pre);
        let (normed, norm) = self.norm.forward(&act, m);
        let mask_logits = Tensor::from_vec(&[m, self.vocab_size()], self.emit.forward(&normed, m));
        let logits = verbalizer_class_logits(&mask_logits, &self.label_index);
        Ok((
            logits,
            PetHeadCache {
                positions: mask_positions.to_vec(),
                n: hidden.rows(),
                gathered,
                pre,
                norm,
                normed,
                mask_logits,
            },
        ))
    }

    pub fn backward(&mut self, c: &PetHeadCache, d_logits: &[f64]) -> Tensor {
        let h = self.project.input_dim();
        let m = c.positions.len();
        let d_mask = verbalizer_class_backward(d_logits, c.mask_logits.shape(), &self.label_index);
        let d_normed = self.emit.backward(&c.normed, m, d_mask.data(), true);
        let d_act = self.norm.backward(&c.norm, &d_normed, true);
        let d_pre = gelu_backward(&c.pre, &d_act);
        let d_gathered = self.project.backward(&c.gathered, m, &d_pre, true);
        let mut d = Tensor::zeros(&[c.n, h]);
        for (i, &p) in c.positions.iter().enumerate() {
            axpy(1.0, &d_gathered[i * h..(i + 1) * h], d.row_mut(p));
        }
        d
    }
}

impl Parameters for PetHead {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        self.project.visit(&join(prefix, "project"), f);
        self.norm.visit(&join(prefix, "norm"), f);
        self.emit.visit(&join(prefix, "emit"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        self.project.visit_mut(&join(prefix, "project"), f);
        self.norm.visit_mut(&join(prefix, "norm"), f);
        self.emit.visit_mut(&join(prefix, "emit"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn naive_sum_of_mask_logits() {
        // vocab order: argument, claim, Satz, für, gegen, ohne
        let (argument, claim, satz, fuer, gegen, ohne) = (0, 1, 2, 3, 4, 5);
        let label_index = vec![
            vec![argument, fuer],
            vec![argument, gegen],
            vec![claim, fuer],
            vec![claim, gegen],
            vec![satz, ohne],
        ];
        let m = Tensor::from_vec(&[2, 6], vec![2., 1., 0., 0., 0., 0., 0., 0., 0., 3., 1., 0.]);
        let logits = verbalizer_class_logits(&m, &label_index);
        assert_eq!(logits, vec![5.0, 3.0, 4.0, 2.0, 0.0]);
    }

    #[test]
    fn short_verbalizers_ignore_surplus_masks() {
        let label_index = vec![vec![0, 1, 2], vec![3]];
        let m = Tensor::from_vec(&[3, 4], (0..12).map(f64::from).collect());
        // label 0: m[0][0] + m[1][1] + m[2][2] = 0 + 5 + 10; label 1: m[0][3] = 3
        assert_eq!(verbalizer_class_logits(&m, &label_index), vec![15.0, 3.0]);
        let d = verbalizer_class_backward(&[1.0, 2.0], &[3, 4], &label_index);
        assert_eq!(d.data().iter().sum::<f64>(), 5.0);
        assert_eq!(d.row(0)[3], 2.0);
    }
}
