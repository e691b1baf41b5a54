use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::binfmt::{ModelKind, Reader, Writer};
use crate::error::{Error, Result};
use crate::numkit::{column_mean_var, log_sum_exp, Matrix};

/// Relative improvement below which EM stops.
pub const GMM_REL_TOL: f64 = 1e-7;
/// Components whose weight falls below this are re-seeded.
pub const GMM_COLLAPSE_WEIGHT: f64 = 1e-8;
const ABS_VAR_FLOOR: f64 = 1e-12;

/// Diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    /// K × D
    pub means: Matrix,
    /// K × D
    pub variances: Matrix,
}

#[derive(Debug, Clone, Default)]
pub struct GmmReport {
    /// Total log-likelihood before each M-step, plus the final model's value.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub reseeded: usize,
    pub converged: bool,
}

impl GmmModel {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.cols()
    }

    /// `ln(w_k) + ln N(x; μ_k, σ²_k)` for every component.
    pub fn component_log_densities(&self, x: &[f64]) -> Vec<f64> {
        (0..self.k())
            .map(|k| {
                let mut acc = 0.0;
                for ((&xd, &mu), &var) in x.iter().zip(self.means.row(k)).zip(self.variances.row(k)) {
                    let diff = xd - mu;
                    acc += (2.0 * PI * var).ln() + diff * diff / var;
                }
                self.weights[k].ln() - 0.5 * acc
            })
            .collect()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        log_sum_exp(&self.component_log_densities(x))
    }

    /// Posterior responsibilities γ(k | x), computed in log space.
    pub fn posteriors(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::shape(format!(
                "descriptor has dimension {}, model expects {}",
                x.len(),
                self.dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gmm posterior input"));
        }
        let mut lp = self.component_log_densities(x);
        let lse = log_sum_exp(&lp);
        for v in lp.iter_mut() {
            *v = (*v - lse).exp();
        }
        let s: f64 = lp.iter().sum();
        lp.iter_mut().for_each(|v| *v /= s);
        Ok(lp)
    }

    pub fn total_log_likelihood(&self, data: &Matrix) -> f64 {
        data.row_iter().map(|x| self.log_density(x)).sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(ModelKind::Gmm);
        w.count(self.k())
            .count(self.dim())
            .reals(&self.weights)
            .reals(self.means.as_slice())
            .reals(self.variances.as_slice());
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, ModelKind::Gmm)?;
        let k = r.count()?;
        let d = r.count()?;
        let weights = r.reals_exact(k, "weights")?;
        let means = Matrix::new(k, d, r.reals_exact(k * d, "means")?)?;
        let variances = Matrix::new(k, d, r.reals_exact(k * d, "variances")?)?;
        r.finish()?;
        Ok(Self {
            weights,
            means,
            variances,
        })
    }

    pub fn dump_text(&self) -> String {
        let mut s = format!("gmm K={} D={}\n", self.k(), self.dim());
        for k in 0..self.k() {
            let _ = writeln!(s, "component {k} weight {:.12e}", self.weights[k]);
            let _ = writeln!(s, "  mean {:?}", self.means.row(k));
            let _ = writeln!(s, "  var  {:?}", self.variances.row(k));
        }
        s
    }
}

/// Fits a K-component diagonal GMM by EM.
///
/// Means start from k-means++ seeding, variances from the global per-dimension
/// variance, weights uniform. Variances are floored at
/// `var_floor × global variance` (and never below 1e-12).
pub fn gmm_fit(data: &Matrix, k: usize, seed: u64, max_iters: usize, var_floor: f64) -> Result<(GmmModel, GmmReport)> {
    let (t, d) = data.shape();
    if k == 0 {
        return Err(Error::input("GMM needs at least one component"));
    }
    if t < k {
        return Err(Error::input(format!("GMM with K={k} needs at least {k} descriptors, got {t}")));
    }
    if d == 0 {
        return Err(Error::input("descriptors have zero dimension"));
    }
    if !data.is_finite() {
        return Err(Error::NonFinite("gmm descriptors"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (global_mean, global_var, _) = column_mean_var(data.row_iter(), d);
    let floor: Vec<f64> = global_var.iter().map(|v| (var_floor * v).max(ABS_VAR_FLOOR)).collect();
    let init_var: Vec<f64> = global_var.iter().zip(&floor).map(|(v, f)| v.max(*f)).collect();

    let means = kmeans_pp(data, k, &mut rng);
    let mut variances = Matrix::zeros(k, d);
    for j in 0..k {
        variances.row_mut(j).copy_from_slice(&init_var);
    }
    let mut model = GmmModel {
        weights: vec![1.0 / k as f64; k],
        means,
        variances,
    };
    let mut report = GmmReport::default();
    let mut resp = vec![0.0; t * k];
    let mut prev = f64::NEG_INFINITY;

    for _ in 0..max_iters {
        let ll = e_step(&model, data, &mut resp);
        report.loglik_trace.push(ll);
        if prev.is_finite() && (ll - prev) <= GMM_REL_TOL * prev.abs() {
            report.converged = true;
            break;
        }
        prev = ll;
        report.iterations += 1;
        m_step(&mut model, data, &resp, &floor, &init_var, &global_mean, &mut report.reseeded);
    }
    if !report.converged {
        let ll = model.total_log_likelihood(data);
        report.loglik_trace.push(ll);
    }
    Ok((model, report))
}

fn e_step(model: &GmmModel, data: &Matrix, resp: &mut [f64]) -> f64 {
    let k = model.k();
    let mut total = 0.0;
    for (x, r) in data.row_iter().zip(resp.chunks_exact_mut(k)) {
        let lp = model.component_log_densities(x);
        let lse = log_sum_exp(&lp);
        total += lse;
        for (ri, l) in r.iter_mut().zip(&lp) {
            *ri = (l - lse).exp();
        }
    }
    total
}

#[allow(clippy::too_many_arguments)]
fn m_step(
    model: &mut GmmModel,
    data: &Matrix,
    resp: &[f64],
    floor: &[f64],
    init_var: &[f64],
    global_mean: &[f64],
    reseeded: &mut usize,
) {
    let (t, d) = data.shape();
    let k = model.k();
    for j in 0..k {
        let nk: f64 = (0..t).map(|i| resp[i * k + j]).sum();
        if nk / (t as f64) < GMM_COLLAPSE_WEIGHT {
            // re-seed from the datum farthest (in global-variance units) from the global mean
            let far = data
                .row_iter()
                .enumerate()
                .map(|(i, x)| {
                    let s: f64 = x
                        .iter()
                        .zip(global_mean)
                        .zip(init_var)
                        .map(|((v, m), var)| (v - m).powi(2) / var)
                        .sum();
                    (i, s)
                })
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(i, _)| i)
                .unwrap_or(0);
            model.means.row_mut(j).copy_from_slice(data.row(far));
            model.variances.row_mut(j).copy_from_slice(init_var);
            model.weights[j] = 1.0 / k as f64;
            *reseeded += 1;
            log::warn!("gmm: component {j} collapsed; re-seeded from descriptor {far}");
            continue;
        }
        let mut mean = vec![0.0; d];
        for (i, x) in data.row_iter().enumerate() {
            let r = resp[i * k + j];
            for (m, v) in mean.iter_mut().zip(x) {
                *m += r * v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= nk);
        let mut var = vec![0.0; d];
        for (i, x) in data.row_iter().enumerate() {
            let r = resp[i * k + j];
            for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
                *s += r * (v - m) * (v - m);
            }
        }
        for (s, f) in var.iter_mut().zip(floor) {
            *s = (*s / nk).max(*f);
        }
        model.weights[j] = nk / t as f64;
        model.means.row_mut(j).copy_from_slice(&mean);
        model.variances.row_mut(j).copy_from_slice(&var);
    }
    let s: f64 = model.weights.iter().sum();
    model.weights.iter_mut().for_each(|w| *w /= s);
}

/// k-means++ seeding: returns K × D initial centres.
pub(crate) fn kmeans_pp(data: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let (t, d) = data.shape();
    let mut centres = Matrix::zeros(k, d);
    let first = rng.random_range(0..t);
    centres.row_mut(0).copy_from_slice(data.row(first));
    let mut dist: Vec<f64> = data.row_iter().map(|x| sq_dist(x, data.row(first))).collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = t - 1;
            for (i, &w) in dist.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..t)
        };
        centres.row_mut(c).copy_from_slice(data.row(pick));
        for (i, x) in data.row_iter().enumerate() {
            dist[i] = dist[i].min(sq_dist(x, data.row(pick)));
        }
    }
    centres
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
