//! Multi-switch discriminator: one Gaussian HMM per class.
//!
//! Each class gets an ergodic HMM with diagonal Gaussian emissions, fitted
//! by Baum-Welch on that class's fused feature sequences. A test sequence is
//! assigned to the class whose model gives the highest forward
//! log-likelihood.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::binfmt::{ModelKind, Reader, Writer};
use crate::error::{Error, Result};
use crate::numkit::{column_mean_var, log_sum_exp, Matrix};
use crate::sfe::kmeans_pp;

/// Relative log-likelihood improvement below which Baum-Welch stops.
pub const HMM_REL_TOL: f64 = 1e-7;
/// States whose total occupancy falls below this are re-seeded.
pub const HMM_STARVATION: f64 = 1e-8;
/// Extra self-transition mass added to the uniform initial transition matrix.
pub const SELF_TRANSITION_BONUS: f64 = 1e-3;

const ABS_VAR_FLOOR: f64 = 1e-12;
const KMEANS_ITERS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHmm {
    pub initial: Vec<f64>,
    /// N × N, row `i` is the distribution of the next state given state `i`.
    pub transitions: Matrix,
    /// N × D
    pub means: Matrix,
    /// N × D
    pub variances: Matrix,
}

impl GaussianHmm {
    pub fn states(&self) -> usize {
        self.initial.len()
    }

    pub fn dim(&self) -> usize {
        self.means.cols()
    }

    fn log_emission(&self, state: usize, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for ((v, m), var) in x.iter().zip(self.means.row(state)).zip(self.variances.row(state)) {
            s += (2.0 * PI * var).ln() + (v - m) * (v - m) / var;
        }
        -0.5 * s
    }

    /// T × N matrix of per-frame, per-state emission log-densities.
    pub fn log_emissions(&self, seq: &Matrix) -> Result<Matrix> {
        if seq.cols() != self.dim() {
            return Err(Error::shape(format!(
                "observation width {} does not match model width {}",
                seq.cols(),
                self.dim()
            )));
        }
        let n = self.states();
        let data = seq
            .row_iter()
            .flat_map(|x| (0..n).map(move |j| self.log_emission(j, x)))
            .collect();
        Ok(Matrix::from_vec_unchecked(seq.rows(), n, data))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(ModelKind::Hmm);
        w.count(self.states())
            .count(self.dim())
            .reals(&self.initial)
            .reals(self.transitions.as_slice())
            .reals(self.means.as_slice())
            .reals(self.variances.as_slice());
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, ModelKind::Hmm)?;
        let n = r.count()?;
        let d = r.count()?;
        let initial = r.reals_exact(n, "initial distribution")?;
        let transitions = Matrix::new(n, n, r.reals_exact(n * n, "transitions")?)?;
        let means = Matrix::new(n, d, r.reals_exact(n * d, "means")?)?;
        let variances = Matrix::new(n, d, r.reals_exact(n * d, "variances")?)?;
        r.finish()?;
        if n == 0 || variances.as_slice().iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Model("HMM has no states or a non-positive variance".into()));
        }
        Ok(Self {
            initial,
            transitions,
            means,
            variances,
        })
    }

    pub fn dump_text(&self) -> String {
        let mut s = format!("hmm N={} D={}\n", self.states(), self.dim());
        let _ = writeln!(s, "pi {:?}", self.initial);
        for i in 0..self.states() {
            let _ = writeln!(s, "A[{i}] {:?}", self.transitions.row(i));
        }
        for i in 0..self.states() {
            let _ = writeln!(s, "state {i} mean {:?}", self.means.row(i));
            let _ = writeln!(s, "state {i} var {:?}", self.variances.row(i));
        }
        s
    }
}

/// Appends `f_sp` to every frame of `f_tp`.
pub fn fuse_features(f_sp: &[f64], f_tp: &Matrix) -> Matrix {
    let w = f_tp.cols() + f_sp.len();
    let mut data = Vec::with_capacity(f_tp.rows() * w);
    for row in f_tp.row_iter() {
        data.extend_from_slice(row);
        data.extend_from_slice(f_sp);
    }
    Matrix::from_vec_unchecked(f_tp.rows(), w, data)
}

/// Scaled forward pass. Returns the per-step normalized alphas (T × N),
/// the per-step shifts, log normalizers and the total log-likelihood.
struct Forward {
    alpha: Matrix,
    /// Emission scale `b'_t(j) = exp(logb_t(j) − shift_t)`
    scaled_emissions: Matrix,
    /// `ln c_t`
    log_norm: Vec<f64>,
    loglik: f64,
}

fn forward(model: &GaussianHmm, seq: &Matrix) -> Result<Forward> {
    let logb = model.log_emissions(seq)?;
    let (t_len, n) = logb.shape();
    if t_len == 0 {
        return Err(Error::input("empty observation sequence"));
    }
    let mut b = Matrix::zeros(t_len, n);
    let mut alpha = Matrix::zeros(t_len, n);
    let mut log_norm = Vec::with_capacity(t_len);
    let mut loglik = 0.0;
    for t in 0..t_len {
        // predictive state distribution before the emission
        let mut row = vec![0.0; n];
        if t == 0 {
            row.copy_from_slice(&model.initial);
        } else {
            let prev = alpha.row(t - 1);
            for (i, &a) in prev.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (r, p) in row.iter_mut().zip(model.transitions.row(i)) {
                    *r += a * p;
                }
            }
        }
        // shift by the best reachable state so the step cannot underflow to zero
        let logb_t = logb.row(t);
        let shift = logb_t
            .iter()
            .zip(&row)
            .filter(|&(_, &r)| r > 0.0)
            .map(|(&l, _)| l)
            .fold(f64::NEG_INFINITY, f64::max);
        if !shift.is_finite() {
            return Err(Error::NonFinite("HMM emission log-density"));
        }
        for ((o, r), l) in b.row_mut(t).iter_mut().zip(row.iter_mut()).zip(logb_t) {
            // unreachable states may sit above the shift; capping keeps 0·∞ out
            *o = (l - shift).min(0.0).exp();
            *r *= *o;
        }
        let c: f64 = row.iter().sum();
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::NonFinite("HMM forward normalizer"));
        }
        alpha.row_mut(t).iter_mut().zip(&row).for_each(|(a, r)| *a = r / c);
        log_norm.push(c.ln());
        loglik += c.ln() + shift;
    }
    Ok(Forward {
        alpha,
        scaled_emissions: b,
        log_norm,
        loglik,
    })
}

/// Sequence log-likelihood by the scaled forward algorithm.
pub fn forward_loglik(model: &GaussianHmm, seq: &Matrix) -> Result<f64> {
    Ok(forward(model, seq)?.loglik)
}

/// Scores every class model and picks the best; ties go to the lowest index.
pub fn classify(models: &[GaussianHmm], seq: &Matrix) -> Result<(usize, Vec<f64>)> {
    if models.is_empty() {
        return Err(Error::input("no class models to classify with"));
    }
    let scores = models.iter().map(|m| forward_loglik(m, seq)).collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok((best, scores))
}

#[derive(Debug, Clone, Default)]
pub struct HmmReport {
    /// Log-likelihood before each M-step, plus the final model's.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `(iteration, state)` for each starved state that was re-seeded.
    pub reseeded: Vec<(usize, usize)>,
}

/// Sufficient statistics from one sequence's E-step.
struct SeqStats {
    loglik: f64,
    gamma: Matrix,
    xi_sum: Matrix,
}

fn e_step(model: &GaussianHmm, seq: &Matrix) -> Result<SeqStats> {
    let f = forward(model, seq)?;
    let (t_len, n) = f.alpha.shape();
    let b = &f.scaled_emissions;
    let a = &model.transitions;
    let mut beta = Matrix::zeros(t_len, n);
    beta.row_mut(t_len - 1).fill(1.0);
    for t in (0..t_len - 1).rev() {
        let c = f.log_norm[t + 1].exp();
        let next: Vec<f64> = (0..n).map(|j| b[(t + 1, j)] * beta[(t + 1, j)]).collect();
        for i in 0..n {
            let s: f64 = a.row(i).iter().zip(&next).map(|(p, q)| p * q).sum();
            beta[(t, i)] = s / c;
        }
    }
    let mut gamma = Matrix::zeros(t_len, n);
    for t in 0..t_len {
        let row: Vec<f64> = (0..n).map(|j| f.alpha[(t, j)] * beta[(t, j)]).collect();
        let s: f64 = row.iter().sum();
        gamma.row_mut(t).iter_mut().zip(&row).for_each(|(g, r)| *g = r / s);
    }
    let mut xi_sum = Matrix::zeros(n, n);
    for t in 0..t_len - 1 {
        let c = f.log_norm[t + 1].exp();
        let next: Vec<f64> = (0..n).map(|j| b[(t + 1, j)] * beta[(t + 1, j)] / c).collect();
        for i in 0..n {
            let ai = f.alpha[(t, i)];
            if ai == 0.0 {
                continue;
            }
            for ((x, p), q) in xi_sum.row_mut(i).iter_mut().zip(a.row(i)).zip(&next) {
                *x += ai * p * q;
            }
        }
    }
    Ok(SeqStats {
        loglik: f.loglik,
        gamma,
        xi_sum,
    })
}

fn total_loglik(model: &GaussianHmm, seqs: &[Matrix]) -> Result<f64> {
    let lls = seqs.par_iter().map(|s| forward_loglik(model, s)).collect::<Result<Vec<f64>>>()?;
    Ok(lls.iter().sum())
}

/// k-means++ seeding followed by Lloyd iterations.
fn kmeans(data: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let (t, d) = data.shape();
    let mut centres = kmeans_pp(data, k, rng);
    let mut assign = vec![usize::MAX; t];
    for _ in 0..KMEANS_ITERS {
        let mut changed = false;
        for (i, x) in data.row_iter().enumerate() {
            let best = (0..k)
                .map(|j| {
                    let dist: f64 = x.iter().zip(centres.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                    (j, dist)
                })
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(j, _)| j)
                .unwrap_or(0);
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (x, &a) in data.row_iter().zip(&assign) {
            counts[a] += 1;
            for (s, v) in sums.row_mut(a).iter_mut().zip(x) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                let c = counts[j] as f64;
                for (dst, s) in centres.row_mut(j).iter_mut().zip(sums.row(j)) {
                    *dst = s / c;
                }
            }
        }
    }
    centres
}

/// Fits an ergodic `n`-state HMM to one class's sequences by Baum-Welch.
///
/// Initialization: uniform start distribution, uniform transitions with a
/// small self-transition bonus, emission means from k-means on the pooled
/// frames and variances from the pooled per-dimension variance. Variances
/// are floored at `var_floor × pooled variance` (never below 1e-12).
/// Stops after `iterations` M-steps or once the relative log-likelihood
/// improvement drops below [`HMM_REL_TOL`].
pub fn baum_welch_fit(
    seqs: &[Matrix],
    n: usize,
    iterations: usize,
    seed: u64,
    var_floor: f64,
) -> Result<(GaussianHmm, HmmReport)> {
    if seqs.is_empty() {
        return Err(Error::input("cannot fit an HMM to an empty class"));
    }
    if n == 0 {
        return Err(Error::input("HMM needs at least one state"));
    }
    if !(var_floor >= 0.0) {
        return Err(Error::input(format!("variance floor must be >= 0, got {var_floor}")));
    }
    let d = seqs[0].cols();
    for (i, s) in seqs.iter().enumerate() {
        if s.cols() != d {
            return Err(Error::shape(format!("sequence {i} has width {}, expected {d}", s.cols())));
        }
        if s.rows() < 2 {
            return Err(Error::input(format!("sequence {i} has {} frame(s); need >= 2", s.rows())));
        }
        if !s.is_finite() {
            return Err(Error::NonFinite("HMM training sequence"));
        }
    }
    let pooled_rows: Vec<&[f64]> = seqs.iter().flat_map(|s| s.row_iter()).collect();
    let pooled = Matrix::from_rows(&pooled_rows)?;
    if pooled.rows() < n {
        return Err(Error::input(format!("{} frames cannot seed {n} states", pooled.rows())));
    }
    let (_, global_var, _) = column_mean_var(pooled.row_iter(), d);
    let floor: Vec<f64> = global_var.iter().map(|v| (var_floor * v).max(ABS_VAR_FLOOR)).collect();
    let init_var: Vec<f64> = global_var.iter().zip(&floor).map(|(v, f)| v.max(*f)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means = kmeans(&pooled, n, &mut rng);
    let mut variances = Matrix::zeros(n, d);
    for j in 0..n {
        variances.row_mut(j).copy_from_slice(&init_var);
    }
    let mut transitions = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            transitions[(i, j)] = 1.0 + if i == j { SELF_TRANSITION_BONUS } else { 0.0 };
        }
        normalize(transitions.row_mut(i));
    }
    let mut model = GaussianHmm {
        initial: vec![1.0 / n as f64; n],
        transitions,
        means,
        variances,
    };

    let mut report = HmmReport::default();
    let mut prev = f64::NEG_INFINITY;
    for iter in 0..iterations {
        let stats: Vec<SeqStats> = seqs.par_iter().map(|s| e_step(&model, s)).collect::<Result<_>>()?;
        let ll: f64 = stats.iter().map(|s| s.loglik).sum();
        report.loglik_trace.push(ll);
        if prev.is_finite() && (ll - prev) <= HMM_REL_TOL * prev.abs() {
            report.converged = true;
            break;
        }
        prev = ll;
        report.iterations += 1;
        m_step(&mut model, seqs, &stats, &floor, &init_var, &pooled, &mut rng, iter, &mut report.reseeded);
    }
    if !report.converged {
        report.loglik_trace.push(total_loglik(&model, seqs)?);
    }
    Ok((model, report))
}

#[allow(clippy::too_many_arguments)]
fn m_step(
    model: &mut GaussianHmm,
    seqs: &[Matrix],
    stats: &[SeqStats],
    floor: &[f64],
    init_var: &[f64],
    pooled: &Matrix,
    rng: &mut ChaCha8Rng,
    iter: usize,
    reseeded: &mut Vec<(usize, usize)>,
) {
    let n = model.states();
    let d = model.dim();
    let mut initial = vec![0.0; n];
    let mut xi = Matrix::zeros(n, n);
    let mut occ = vec![0.0; n];
    let mut mean_acc = Matrix::zeros(n, d);
    for (s, seq) in stats.iter().zip(seqs) {
        for (p, g) in initial.iter_mut().zip(s.gamma.row(0)) {
            *p += g;
        }
        for (x, v) in xi.as_mut_slice().iter_mut().zip(s.xi_sum.as_slice()) {
            *x += v;
        }
        for (g, o) in s.gamma.row_iter().zip(seq.row_iter()) {
            for j in 0..n {
                occ[j] += g[j];
                for (m, v) in mean_acc.row_mut(j).iter_mut().zip(o) {
                    *m += g[j] * v;
                }
            }
        }
    }
    for j in 0..n {
        if occ[j] >= HMM_STARVATION {
            mean_acc.row_mut(j).iter_mut().for_each(|m| *m /= occ[j]);
        }
    }
    let mut var_acc = Matrix::zeros(n, d);
    for (s, seq) in stats.iter().zip(seqs) {
        for (g, o) in s.gamma.row_iter().zip(seq.row_iter()) {
            for j in 0..n {
                for ((acc, v), m) in var_acc.row_mut(j).iter_mut().zip(o).zip(mean_acc.row(j)) {
                    *acc += g[j] * (v - m) * (v - m);
                }
            }
        }
    }

    normalize(&mut initial);
    model.initial = initial;
    for i in 0..n {
        let row_sum: f64 = xi.row(i).iter().sum();
        if row_sum > 0.0 {
            let row = model.transitions.row_mut(i);
            row.copy_from_slice(xi.row(i));
            normalize(row);
        }
    }
    for j in 0..n {
        if occ[j] < HMM_STARVATION {
            let frame = rng.random_range(0..pooled.rows());
            model.means.row_mut(j).copy_from_slice(pooled.row(frame));
            model.variances.row_mut(j).copy_from_slice(init_var);
            reseeded.push((iter, j));
            log::warn!("hmm: state {j} starved at iteration {iter}; re-seeded from frame {frame}");
            continue;
        }
        model.means.row_mut(j).copy_from_slice(mean_acc.row(j));
        for ((dst, acc), f) in model.variances.row_mut(j).iter_mut().zip(var_acc.row(j)).zip(floor) {
            *dst = (acc / occ[j]).max(*f);
        }
    }
}

fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

/// `ln Σ_paths P(path, seq)` by enumerating every state path. Exponential in `T`; for testing.
#[doc(hidden)]
pub fn brute_force_loglik(model: &GaussianHmm, seq: &Matrix) -> Result<f64> {
    let logb = model.log_emissions(seq)?;
    let (t_len, n) = logb.shape();
    let total = n.pow(t_len as u32);
    let mut terms = Vec::with_capacity(total);
    for code in 0..total {
        let mut c = code;
        let mut path = Vec::with_capacity(t_len);
        for _ in 0..t_len {
            path.push(c % n);
            c /= n;
        }
        let mut lp = model.initial[path[0]].ln() + logb[(0, path[0])];
        for t in 1..t_len {
            lp += model.transitions[(path[t - 1], path[t])].ln() + logb[(t, path[t])];
        }
        terms.push(lp);
    }
    Ok(log_sum_exp(&terms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn random_model(rng: &mut ChaCha8Rng, n: usize, d: usize) -> GaussianHmm {
        let mut initial: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        normalize(&mut initial);
        let mut transitions = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                transitions[(i, j)] = rng.random_range(0.1..1.0);
            }
            normalize(transitions.row_mut(i));
        }
        GaussianHmm {
            initial,
            transitions,
            means: Matrix::new(n, d, (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap(),
            variances: Matrix::new(n, d, (0..n * d).map(|_| rng.random_range(0.3..2.0)).collect()).unwrap(),
        }
    }

    fn random_seq(rng: &mut ChaCha8Rng, t: usize, d: usize) -> Matrix {
        Matrix::new(t, d, (0..t * d).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap()
    }

    #[test]
    fn unreachable_state_far_above_the_rest() {
        // state 0 explains the data best but can never be entered
        let m = GaussianHmm {
            initial: vec![0.0, 1.0],
            transitions: Matrix::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            means: Matrix::new(1, 2, vec![0.0, 40.0]).unwrap().transpose(),
            variances: Matrix::new(2, 1, vec![1e-4, 1.0]).unwrap(),
        };
        let seq = Matrix::new(3, 1, vec![0.0, 0.1, -0.1]).unwrap();
        let a = forward_loglik(&m, &seq).unwrap();
        let b = brute_force_loglik(&m, &seq).unwrap();
        assert!(a.is_finite());
        assert!((a - b).abs() < 1e-9 * b.abs(), "{a} vs {b}");
    }

    #[test]
    fn forward_matches_path_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [2, 3] {
            for t in [3, 4] {
                for _ in 0..10 {
                    let m = random_model(&mut rng, n, 2);
                    let s = random_seq(&mut rng, t, 2);
                    let a = forward_loglik(&m, &s).unwrap();
                    let b = brute_force_loglik(&m, &s).unwrap();
                    assert!((a - b).abs() < 1e-9, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn single_state_is_iid() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_model(&mut rng, 1, 3);
        let s = random_seq(&mut rng, 5, 3);
        let direct: f64 = s.row_iter().map(|x| m.log_emission(0, x)).sum();
        assert!((forward_loglik(&m, &s).unwrap() - direct).abs() < 1e-10);
    }

    #[test]
    fn identical_emissions_reduce_to_single_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let single = random_model(&mut rng, 1, 2);
        let n = 3;
        let mut means = Matrix::zeros(n, 2);
        let mut vars = Matrix::zeros(n, 2);
        for j in 0..n {
            means.row_mut(j).copy_from_slice(single.means.row(0));
            vars.row_mut(j).copy_from_slice(single.variances.row(0));
        }
        let multi = GaussianHmm {
            initial: vec![1.0 / 3.0; 3],
            transitions: Matrix::new(3, 3, vec![1.0 / 3.0; 9]).unwrap(),
            means,
            variances: vars,
        };
        let s = random_seq(&mut rng, 6, 2);
        let a = forward_loglik(&single, &s).unwrap();
        let b = forward_loglik(&multi, &s).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn single_state_fit_is_pooled_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let seqs: Vec<Matrix> = (0..4).map(|_| random_seq(&mut rng, 6, 2)).collect();
        let (m, _) = baum_welch_fit(&seqs, 1, 20, 0, 1e-3).unwrap();
        let rows: Vec<&[f64]> = seqs.iter().flat_map(|s| s.row_iter()).collect();
        let (mean, var, _) = column_mean_var(rows.iter().copied(), 2);
        for k in 0..2 {
            assert!((m.means[(0, k)] - mean[k]).abs() < 1e-10);
            assert!((m.variances[(0, k)] - var[k]).abs() < 1e-10);
        }
        let iid: f64 = seqs.iter().flat_map(|s| s.row_iter()).map(|x| m.log_emission(0, x)).sum();
        assert!((total_loglik(&m, &seqs).unwrap() - iid).abs() < 1e-9);
    }

    fn two_regime(rng: &mut ChaCha8Rng, count: usize, t: usize) -> Vec<Matrix> {
        (0..count)
            .map(|_| {
                let mut data = Vec::with_capacity(t);
                let mut state = rng.random_range(0..2);
                for _ in 0..t {
                    if rng.random::<f64>() < 0.2 {
                        state = 1 - state;
                    }
                    let e: f64 = rng.sample(StandardNormal);
                    data.push(if state == 0 { 3.0 } else { -3.0 } + e);
                }
                Matrix::new(t, 1, data).unwrap()
            })
            .collect()
    }

    #[test]
    fn recovers_two_regimes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let seqs = two_regime(&mut rng, 20, 50);
        let (m, rep) = baum_welch_fit(&seqs, 2, 200, 1, 1e-3).unwrap();
        let mut mu = vec![m.means[(0, 0)], m.means[(1, 0)]];
        mu.sort_by(f64::total_cmp);
        assert!((mu[0] + 3.0).abs() < 0.3 && (mu[1] - 3.0).abs() < 0.3, "{mu:?}");
        for w in rep.loglik_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-8 * w[0].abs().max(1.0));
        }
    }

    #[test]
    fn stochastic_constraints_hold_after_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let seqs = two_regime(&mut rng, 5, 20);
        let (m, _) = baum_welch_fit(&seqs, 3, 10, 2, 1e-3).unwrap();
        assert!((m.initial.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..3 {
            assert!((m.transitions.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn classify_ties_and_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_model(&mut rng, 2, 2);
        let s = random_seq(&mut rng, 4, 2);
        let (c, scores) = classify(&[m.clone(), m.clone()], &s).unwrap();
        assert_eq!(c, 0);
        assert_eq!(scores[0], scores[1]);
        assert_eq!(classify(std::slice::from_ref(&m), &s).unwrap().0, 0);
        assert!(classify(&[m], &random_seq(&mut rng, 4, 3)).is_err());
    }

    #[test]
    fn fit_errors() {
        assert!(baum_welch_fit(&[], 2, 5, 0, 1e-3).is_err());
        let short = Matrix::zeros(1, 2);
        assert!(baum_welch_fit(&[short], 1, 5, 0, 1e-3).is_err());
    }

    #[test]
    fn fuse_broadcasts() {
        let tp = Matrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let f = fuse_features(&[9.0], &tp);
        assert_eq!(f.as_slice(), &[1.0, 2.0, 9.0, 3.0, 4.0, 9.0]);
        assert_eq!(fuse_features(&[0.0; 3], &Matrix::zeros(10, 20)).shape(), (10, 23));
    }

    #[test]
    fn binary_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = random_model(&mut rng, 3, 2);
        assert_eq!(GaussianHmm::from_bytes(&m.to_bytes()).unwrap(), m);
        assert!(m.dump_text().starts_with("hmm N=3 D=2"));
    }
}
