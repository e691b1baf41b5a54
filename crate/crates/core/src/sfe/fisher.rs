use super::gmm::GmmModel;
use crate::error::{Error, Result};
use crate::numkit::{l2_norm, Matrix};

/// Fisher vector split into its three gradient blocks.
///
/// Total length is `K(2D+1) − 1`: the weight block has `K − 1` entries
/// (component 0 is the reference absorbed by the sum-to-one constraint),
/// mean and variance blocks have `K·D` entries each, component-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherVector {
    pub weight: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub strong_ratio: f64,
}

impl FisherVector {
    pub fn len(&self) -> usize {
        self.weight.len() + self.mean.len() + self.variance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&self.weight);
        v.extend_from_slice(&self.mean);
        v.extend_from_slice(&self.variance);
        v
    }
}

/// Length of a Fisher vector for `k` components over `d`-dimensional descriptors.
pub fn fisher_len(k: usize, d: usize) -> usize {
    k * (2 * d + 1) - 1
}

/// Average log-likelihood gradients of `descriptors` with respect to the GMM
/// weights, means and standard deviations, each scaled by the closed-form
/// diagonal Fisher information and by `strong_ratio`.
pub fn fisher_encode(model: &GmmModel, descriptors: &Matrix, strong_ratio: f64) -> Result<FisherVector> {
    let (t, d) = descriptors.shape();
    let k = model.k();
    if d != model.dim() {
        return Err(Error::shape(format!(
            "descriptors have dimension {d}, model expects {}",
            model.dim()
        )));
    }
    if !(0.0..=1.0).contains(&strong_ratio) {
        return Err(Error::input(format!("strong ratio must lie in [0, 1], got {strong_ratio}")));
    }
    if t == 0 {
        return Err(Error::input("cannot encode an empty descriptor set"));
    }
    let mut weight = vec![0.0; k - 1];
    let mut mean = vec![0.0; k * d];
    let mut variance = vec![0.0; k * d];
    let sqrt_w: Vec<f64> = model.weights.iter().map(|w| w.sqrt()).collect();
    let sigma: Vec<f64> = model.variances.as_slice().iter().map(|v| v.sqrt()).collect();

    for x in descriptors.row_iter() {
        let gamma = model.posteriors(x)?;
        for j in 1..k {
            weight[j - 1] += gamma[j] / sqrt_w[j] - gamma[0] * sqrt_w[j] / model.weights[0];
        }
        for j in 0..k {
            let g = gamma[j];
            if g == 0.0 {
                continue;
            }
            let mu = model.means.row(j);
            for dd in 0..d {
                let u = (x[dd] - mu[dd]) / sigma[j * d + dd];
                mean[j * d + dd] += g * u;
                variance[j * d + dd] += g * (u * u - 1.0);
            }
        }
    }

    let tf = t as f64;
    for v in weight.iter_mut() {
        *v *= strong_ratio / tf;
    }
    for j in 0..k {
        let mscale = strong_ratio / (tf * sqrt_w[j]);
        let vscale = strong_ratio / (tf * (2.0 * model.weights[j]).sqrt());
        for dd in 0..d {
            mean[j * d + dd] *= mscale;
            variance[j * d + dd] *= vscale;
        }
    }
    Ok(FisherVector {
        weight,
        mean,
        variance,
        strong_ratio,
    })
}

/// Replaces each entry `g` by `g·|g| / Σ|g|` within its block, then L2-normalizes the whole vector.
///
/// All-zero blocks stay zero, and an all-zero vector stays zero.
pub fn group_normalize(fv: &FisherVector) -> FisherVector {
    fn block(g: &[f64]) -> Vec<f64> {
        let l1: f64 = g.iter().map(|v| v.abs()).sum();
        if l1 == 0.0 {
            return vec![0.0; g.len()];
        }
        g.iter().map(|v| v * v.abs() / l1).collect()
    }
    let mut out = FisherVector {
        weight: block(&fv.weight),
        mean: block(&fv.mean),
        variance: block(&fv.variance),
        strong_ratio: fv.strong_ratio,
    };
    let norm = l2_norm(&out.to_vec());
    if norm > 0.0 {
        for v in out
            .weight
            .iter_mut()
            .chain(out.mean.iter_mut())
            .chain(out.variance.iter_mut())
        {
            *v /= norm;
        }
    }
    out
}
