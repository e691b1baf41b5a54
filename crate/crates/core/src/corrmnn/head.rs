use rand_chacha::ChaCha8Rng;

use super::params::{Dense, ParamSet};
use crate::error::{Error, Result};

/// Trunk of tanh layers followed by a class head and a correlation head.
/// With the default three trunk widths each head sits behind four affine layers.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpHead {
    pub trunk: Vec<Dense>,
    pub class_head: Dense,
    pub corr_head: Dense,
}

/// Inputs to every layer of one forward pass.
#[derive(Debug, Clone)]
pub struct HeadCache {
    /// `acts[0]` is the head input; `acts[i + 1]` is the output of trunk layer `i`.
    acts: Vec<Vec<f64>>,
}

impl MlpHead {
    pub fn new(rng: &mut ChaCha8Rng, input: usize, widths: &[usize], classes: usize, k_corr: usize) -> Self {
        let mut trunk = Vec::with_capacity(widths.len());
        let mut prev = input;
        for &w in widths {
            trunk.push(Dense::new(rng, prev, w));
            prev = w;
        }
        Self {
            trunk,
            class_head: Dense::new(rng, prev, classes),
            corr_head: Dense::new(rng, prev, k_corr),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.first().unwrap_or(&self.class_head).input_dim()
    }

    pub fn classes(&self) -> usize {
        self.class_head.output_dim()
    }

    pub fn k_corr(&self) -> usize {
        self.corr_head.output_dim()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.trunk.iter().map(Dense::output_dim).collect()
    }

    /// Returns `(logits, correlation output, cache)`.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>, HeadCache)> {
        if x.len() != self.input_dim() {
            return Err(Error::shape(format!(
                "head expects input {}, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        let mut acts = Vec::with_capacity(self.trunk.len() + 1);
        acts.push(x.to_vec());
        for layer in &self.trunk {
            let y: Vec<f64> = layer.forward(acts.last().unwrap())?.into_iter().map(f64::tanh).collect();
            acts.push(y);
        }
        let top = acts.last().unwrap();
        let logits = self.class_head.forward(top)?;
        let h = self.corr_head.forward(top)?;
        Ok((logits, h, HeadCache { acts }))
    }

    /// Accumulates parameter gradients into `acc` and returns `∂L/∂input`.
    pub fn backward(&self, cache: &HeadCache, g_logits: &[f64], g_h: &[f64], acc: &mut MlpHead) -> Result<Vec<f64>> {
        if cache.acts.len() != self.trunk.len() + 1 || cache.acts[0].len() != self.input_dim() {
            return Err(Error::shape("head cache does not match these parameters"));
        }
        if g_logits.len() != self.classes() || g_h.len() != self.k_corr() {
            return Err(Error::shape("head output gradient has the wrong length"));
        }
        let top = cache.acts.last().unwrap();
        let mut g = self.class_head.backward(top, g_logits, &mut acc.class_head);
        for (a, b) in g.iter_mut().zip(self.corr_head.backward(top, g_h, &mut acc.corr_head)) {
            *a += b;
        }
        for (i, layer) in self.trunk.iter().enumerate().rev() {
            let y = &cache.acts[i + 1];
            for (gi, yi) in g.iter_mut().zip(y) {
                *gi *= 1.0 - yi * yi;
            }
            g = layer.backward(&cache.acts[i], &g, &mut acc.trunk[i]);
        }
        Ok(g)
    }
}

impl ParamSet for MlpHead {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = self.trunk.iter().flat_map(|d| d.tensors()).collect();
        v.extend(self.class_head.tensors());
        v.extend(self.corr_head.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = self.trunk.iter_mut().flat_map(|d| d.tensors_mut()).collect();
        v.extend(self.class_head.tensors_mut());
        v.extend(self.corr_head.tensors_mut());
        v
    }
}

/// One head per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrUnitParams {
    pub head1: MlpHead,
    pub head2: MlpHead,
}

impl ParamSet for CorrUnitParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut v = self.head1.tensors();
        v.extend(self.head2.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.head1.tensors_mut();
        v.extend(self.head2.tensors_mut());
        v
    }
}

#[derive(Debug, Clone)]
pub struct CorrUnitOutput {
    pub logits1: Vec<f64>,
    pub logits2: Vec<f64>,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
}

pub fn corr_unit_forward(unit: &CorrUnitParams, o1: &[f64], o2: &[f64]) -> Result<CorrUnitOutput> {
    let (logits1, h1, _) = unit.head1.forward(o1)?;
    let (logits2, h2, _) = unit.head2.forward(o2)?;
    Ok(CorrUnitOutput {
        logits1,
        logits2,
        h1,
        h2,
    })
}
