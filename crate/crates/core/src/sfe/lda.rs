use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::binfmt::{ModelKind, Reader, Writer};
use crate::error::{Error, Result};
use crate::numkit::{cholesky, solve_lower, solve_lower_transpose, sym_eig, Matrix};

/// Within-class scatter is regularized by `LDA_RIDGE_FACTOR · trace(S_w) / D`.
pub const LDA_RIDGE_FACTOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    /// D_in × d_out; columns are S_w-orthonormal discriminant directions.
    pub projection: Matrix,
    /// C × D_in, row `c` is the mean of class `c`.
    pub class_means: Matrix,
    pub overall_mean: Vec<f64>,
    /// Generalized eigenvalues of the kept directions, descending.
    pub eigenvalues: Vec<f64>,
}

impl LdaModel {
    pub fn input_dim(&self) -> usize {
        self.projection.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.projection.cols()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(ModelKind::Lda);
        w.count(self.input_dim())
            .count(self.output_dim())
            .count(self.class_means.rows())
            .reals(self.projection.as_slice())
            .reals(self.class_means.as_slice())
            .reals(&self.overall_mean)
            .reals(&self.eigenvalues);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, ModelKind::Lda)?;
        let d_in = r.count()?;
        let d_out = r.count()?;
        let c = r.count()?;
        let projection = Matrix::new(d_in, d_out, r.reals_exact(d_in * d_out, "projection")?)?;
        let class_means = Matrix::new(c, d_in, r.reals_exact(c * d_in, "class means")?)?;
        let overall_mean = r.reals_exact(d_in, "overall mean")?;
        let eigenvalues = r.reals_exact(d_out, "eigenvalues")?;
        r.finish()?;
        Ok(Self {
            projection,
            class_means,
            overall_mean,
            eigenvalues,
        })
    }

    pub fn dump_text(&self) -> String {
        let mut s = format!(
            "lda D_in={} d_out={} classes={}\n",
            self.input_dim(),
            self.output_dim(),
            self.class_means.rows()
        );
        let _ = writeln!(s, "eigenvalues {:?}", self.eigenvalues);
        for j in 0..self.output_dim() {
            let _ = writeln!(s, "direction {j} {:?}", self.projection.column(j));
        }
        s
    }
}

/// Fits LDA: the top `d_out` generalized eigenvectors of between-class versus
/// (ridge-regularized) within-class scatter.
///
/// Labels must cover `0..C` with at least two samples per class.
pub fn lda_fit(features: &Matrix, labels: &[usize], d_out: usize) -> Result<LdaModel> {
    let (n, d) = features.shape();
    if labels.len() != n {
        return Err(Error::shape(format!("{n} feature rows but {} labels", labels.len())));
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let c = counts.len();
    if counts.keys().next_back().is_some_and(|&max| max + 1 != c) {
        return Err(Error::input("LDA labels must cover 0..C without gaps"));
    }
    if let Some((&class, &count)) = counts.iter().find(|(_, &n)| n < 2) {
        return Err(Error::input(format!("LDA class {class} has {count} sample(s); need >= 2")));
    }
    if d_out == 0 || d_out + 1 > c {
        return Err(Error::shape(format!(
            "LDA output dimension {d_out} must lie in 1..={} for {c} classes",
            c.saturating_sub(1)
        )));
    }
    if d_out > d {
        return Err(Error::shape(format!("LDA output dimension {d_out} exceeds input dimension {d}")));
    }

    let mut class_means = Matrix::zeros(c, d);
    for (x, &l) in features.row_iter().zip(labels) {
        for (m, v) in class_means.row_mut(l).iter_mut().zip(x) {
            *m += v;
        }
    }
    for (cl, &cnt) in &counts {
        class_means.row_mut(*cl).iter_mut().for_each(|m| *m /= cnt as f64);
    }
    let mut overall = vec![0.0; d];
    for x in features.row_iter() {
        for (m, v) in overall.iter_mut().zip(x) {
            *m += v;
        }
    }
    overall.iter_mut().for_each(|m| *m /= n as f64);

    // within-class scatter, upper triangle then mirrored
    let mut sw = Matrix::zeros(d, d);
    let mut dev = vec![0.0; d];
    for (x, &l) in features.row_iter().zip(labels) {
        for ((o, v), m) in dev.iter_mut().zip(x).zip(class_means.row(l)) {
            *o = v - m;
        }
        for i in 0..d {
            let di = dev[i];
            if di == 0.0 {
                continue;
            }
            let row = sw.row_mut(i);
            for j in i..d {
                row[j] += di * dev[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            sw[(i, j)] = sw[(j, i)];
        }
    }
    let ridge = (LDA_RIDGE_FACTOR * sw.trace() / d as f64).max(1e-12);
    sw.add_diag(ridge);

    // S_b = M·Mᵀ with column c = √n_c (μ_c − μ)
    let mut mcols = Matrix::zeros(d, c);
    for (cl, &cnt) in &counts {
        let s = (cnt as f64).sqrt();
        for i in 0..d {
            mcols[(i, *cl)] = s * (class_means[(*cl, i)] - overall[i]);
        }
    }
    let l = cholesky(&sw)?;
    let b = solve_lower(&l, &mcols)?;
    let g = b.t_matmul(&b)?;
    let eig = sym_eig(&g)?;

    let mut y = Matrix::zeros(d, d_out);
    let mut eigenvalues = Vec::with_capacity(d_out);
    for j in 0..d_out {
        let lam = eig.values[j];
        if !(lam > 1e-300) {
            return Err(Error::input(format!(
                "between-class scatter has rank < {d_out}; class means coincide"
            )));
        }
        let u = eig.vectors.column(j);
        let s = 1.0 / lam.sqrt();
        for i in 0..d {
            y[(i, j)] = s * b.row(i).iter().zip(&u).map(|(a, b)| a * b).sum::<f64>();
        }
        eigenvalues.push(lam);
    }
    let projection = solve_lower_transpose(&l, &y)?;
    Ok(LdaModel {
        projection,
        class_means,
        overall_mean: overall,
        eigenvalues,
    })
}

/// Projects one feature vector onto the discriminant directions.
pub fn lda_project(model: &LdaModel, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != model.input_dim() {
        return Err(Error::shape(format!(
            "feature has length {}, LDA expects {}",
            x.len(),
            model.input_dim()
        )));
    }
    let centred: Vec<f64> = x.iter().zip(&model.overall_mean).map(|(a, m)| a - m).collect();
    let mut out = vec![0.0; model.output_dim()];
    for (i, &v) in centred.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        for (o, p) in out.iter_mut().zip(model.projection.row(i)) {
            *o += v * p;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn blobs(means: &[Vec<f64>], per_class: usize, noise: f64, seed: u64) -> (Matrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = means[0].len();
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for (c, m) in means.iter().enumerate() {
            for _ in 0..per_class {
                for mm in m {
                    let e: f64 = rng.sample(StandardNormal);
                    data.push(mm + noise * e);
                }
                labels.push(c);
            }
        }
        (Matrix::new(labels.len(), d, data).unwrap(), labels)
    }

    /// tr((VᵀS_wV)⁻¹ VᵀS_bV) for d_out = 1 reduces to the Rayleigh quotient.
    fn fisher_ratio(x: &Matrix, labels: &[usize], v: &[f64]) -> f64 {
        let proj: Vec<f64> = x.row_iter().map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum()).collect();
        let c = labels.iter().max().unwrap() + 1;
        let mut sums = vec![0.0; c];
        let mut cnt = vec![0.0; c];
        for (p, &l) in proj.iter().zip(labels) {
            sums[l] += p;
            cnt[l] += 1.0;
        }
        let means: Vec<f64> = sums.iter().zip(&cnt).map(|(s, n)| s / n).collect();
        let overall = proj.iter().sum::<f64>() / proj.len() as f64;
        let sb: f64 = means.iter().zip(&cnt).map(|(m, n)| n * (m - overall).powi(2)).sum();
        let sw: f64 = proj.iter().zip(labels).map(|(p, &l)| (p - means[l]).powi(2)).sum();
        sb / sw
    }

    #[test]
    fn recovers_generating_axis() {
        let mut e1 = vec![0.0; 5];
        e1[0] = 1.0;
        let neg: Vec<f64> = e1.iter().map(|v| -v).collect();
        let (x, labels) = blobs(&[e1, neg], 400, 0.5, 3);
        let m = lda_fit(&x, &labels, 1).unwrap();
        let v = m.projection.column(0);
        let cos = v[0].abs() / v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let angle = cos.min(1.0).acos().to_degrees();
        assert!(angle < 5.0, "angle {angle}");
    }

    #[test]
    fn beats_random_projections() {
        let means = vec![vec![1.0, 0.0, 0.5, 0.0], vec![0.0, 1.0, 0.0, -0.5], vec![-1.0, -1.0, 0.0, 0.0]];
        let (x, labels) = blobs(&means, 60, 0.8, 4);
        let m = lda_fit(&x, &labels, 1).unwrap();
        let best = fisher_ratio(&x, &labels, &m.projection.column(0));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let v: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
            assert!(best > fisher_ratio(&x, &labels, &v));
        }
    }

    #[test]
    fn dimension_bounds() {
        let means = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![0.0; 3]];
        let (x, labels) = blobs(&means, 10, 0.3, 6);
        let m = lda_fit(&x, &labels, 3).unwrap();
        assert_eq!(m.output_dim(), 3);
        assert!(matches!(lda_fit(&x, &labels, 4), Err(Error::Shape(_))));
        assert_eq!(lda_project(&m, x.row(0)).unwrap().len(), 3);
        assert!(lda_project(&m, &[1.0]).is_err());
        assert_eq!(LdaModel::from_bytes(&m.to_bytes()).unwrap(), m);
    }

    #[test]
    fn singular_within_scatter_is_regularized() {
        // more dimensions than samples
        let mut means = vec![vec![0.0; 30], vec![0.0; 30]];
        means[0][0] = 2.0;
        let (x, labels) = blobs(&means, 5, 0.3, 7);
        let m = lda_fit(&x, &labels, 1).unwrap();
        assert!(m.projection.is_finite());
    }

    #[test]
    fn singleton_class_rejected() {
        let x = Matrix::new(3, 1, vec![0.0, 1.0, 2.0]).unwrap();
        assert!(lda_fit(&x, &[0, 0, 1], 1).is_err());
    }
}
