use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numkit::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    /// Eight time-domain statistics per signal.
    TimeStats,
    /// DFT magnitude spectrum per signal.
    FreqSpectrum,
    /// Frames used as-is.
    Direct,
}

/// T descriptors of dimension D, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    pub vectors: Matrix,
    pub source_kind: SourceKind,
}

impl DescriptorSet {
    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    /// Stacks several sets of the same kind and dimension.
    pub fn concat(sets: &[DescriptorSet]) -> Result<DescriptorSet> {
        let first = sets
            .first()
            .ok_or_else(|| Error::input("no descriptor sets to concatenate"))?;
        let dim = first.dim();
        let mut data = Vec::new();
        let mut rows = 0;
        for s in sets {
            if s.dim() != dim || s.source_kind != first.source_kind {
                return Err(Error::shape("descriptor sets differ in kind or dimension"));
            }
            data.extend_from_slice(s.vectors.as_slice());
            rows += s.len();
        }
        Ok(DescriptorSet {
            vectors: Matrix::from_vec_unchecked(rows, dim, data),
            source_kind: first.source_kind,
        })
    }
}

/// `(mean, rms, skewness, excess kurtosis, waveform, crest, impulse, margin)`.
///
/// Skewness and kurtosis use population moments. Any factor whose
/// denominator is zero is reported as 0.
pub fn time_domain_features(x: &[f64]) -> Result<[f64; 8]> {
    let n = x.len();
    if n < 2 {
        return Err(Error::input(format!("time-domain features need >= 2 samples, got {n}")));
    }
    let nf = n as f64;
    let mean = x.iter().sum::<f64>() / nf;
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / nf).sqrt();
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    let degenerate = m2 <= f64::EPSILON * mean * mean || m2 == 0.0;
    let skew = if degenerate { 0.0 } else { m3 / m2.powf(1.5) };
    let kurt = if degenerate { 0.0 } else { m4 / (m2 * m2) - 3.0 };
    let mean_abs = x.iter().map(|v| v.abs()).sum::<f64>() / nf;
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mean_sqrt_abs = x.iter().map(|v| v.abs().sqrt()).sum::<f64>() / nf;
    let ratio = |num: f64, den: f64| if den == 0.0 { 0.0 } else { num / den };
    Ok([
        mean,
        rms,
        skew,
        kurt,
        ratio(rms, mean_abs),
        ratio(peak, rms),
        ratio(peak, mean_abs),
        ratio(peak, mean_sqrt_abs * mean_sqrt_abs),
    ])
}

/// DFT magnitude spectrum: entry `b` is `|Σₐ xₐ (cos(2πab/D) − i·sin(2πab/D))|`.
pub fn freq_domain_features(x: &[f64]) -> Vec<f64> {
    let d = x.len();
    if d == 0 {
        return Vec::new();
    }
    // twiddles indexed by (a·b) mod D keep the angle argument small
    let (cos, sin): (Vec<f64>, Vec<f64>) = (0..d)
        .map(|k| {
            let angle = 2.0 * PI * k as f64 / d as f64;
            (angle.cos(), angle.sin())
        })
        .unzip();
    (0..d)
        .map(|b| {
            let mut re = 0.0;
            let mut im = 0.0;
            for (a, &xa) in x.iter().enumerate() {
                let k = (a * b) % d;
                re += xa * cos[k];
                im -= xa * sin[k];
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}

/// Each frame of a window as one descriptor.
pub fn direct_descriptors(window: &Matrix) -> DescriptorSet {
    DescriptorSet {
        vectors: window.clone(),
        source_kind: SourceKind::Direct,
    }
}

/// One 8-dimensional descriptor per feature column, computed over the window's time axis.
pub fn time_descriptors(window: &Matrix) -> Result<DescriptorSet> {
    let mut data = Vec::with_capacity(window.cols() * 8);
    for j in 0..window.cols() {
        data.extend_from_slice(&time_domain_features(&window.column(j))?);
    }
    Ok(DescriptorSet {
        vectors: Matrix::new(window.cols(), 8, data)?,
        source_kind: SourceKind::TimeStats,
    })
}

/// One spectrum descriptor (length = window timesteps) per feature column.
pub fn freq_descriptors(window: &Matrix) -> Result<DescriptorSet> {
    let t = window.rows();
    let mut data = Vec::with_capacity(window.cols() * t);
    for j in 0..window.cols() {
        data.extend(freq_domain_features(&window.column(j)));
    }
    Ok(DescriptorSet {
        vectors: Matrix::new(window.cols(), t, data)?,
        source_kind: SourceKind::FreqSpectrum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn constant_signal_degeneracies() {
        let f = time_domain_features(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(f, [1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn alternating_signal() {
        let f = time_domain_features(&[1.0, -1.0, 1.0, -1.0]).unwrap();
        assert_eq!(f[0], 0.0);
        assert_eq!(f[1], 1.0);
        assert_eq!(f[4], 1.0);
        assert_eq!(f[5], 1.0);
    }

    #[test]
    fn single_spike_by_hand() {
        // deviations (−0.75, 2.25, −0.75, −0.75): m2 = 27/16, m3 = 81/32, m4 = 1701/256
        let f = time_domain_features(&[0.0, 3.0, 0.0, 0.0]).unwrap();
        let m2: f64 = 27.0 / 16.0;
        let skew = (81.0 / 32.0) / m2.powf(1.5);
        let kurt = (1701.0 / 256.0) / (m2 * m2) - 3.0;
        let expected = [0.75, 1.5, skew, kurt, 2.0, 2.0, 4.0, 16.0];
        assert!(close(&f, &expected, 1e-12), "{f:?}");
        assert!((skew - 2.0 / 3f64.sqrt()).abs() < 1e-12);
        assert!((kurt + 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_signal_has_zero_ratios() {
        let f = time_domain_features(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(f, [0.0; 8]);
        assert!(time_domain_features(&[1.0]).is_err());
    }

    #[test]
    fn dc_spectrum() {
        let s = freq_domain_features(&[-2.0; 5]);
        assert!(close(&s, &[10.0, 0.0, 0.0, 0.0, 0.0], 1e-12));
    }

    #[test]
    fn cosine_peaks_at_bins_one_and_seven() {
        let x: Vec<f64> = (0..8).map(|a| (2.0 * PI * a as f64 / 8.0).cos()).collect();
        let s = freq_domain_features(&x);
        for (b, v) in s.iter().enumerate() {
            let expected = if b == 1 || b == 7 { 4.0 } else { 0.0 };
            assert!((v - expected).abs() < 1e-12, "bin {b}: {v}");
        }
    }

    #[test]
    fn descriptor_shapes() {
        let w = Matrix::new(10, 3, (0..30).map(|v| (v as f64).sin()).collect()).unwrap();
        assert_eq!(time_descriptors(&w).unwrap().vectors.shape(), (3, 8));
        assert_eq!(freq_descriptors(&w).unwrap().vectors.shape(), (3, 10));
        assert_eq!(direct_descriptors(&w).vectors.shape(), (10, 3));
    }

    proptest! {
        #[test]
        fn parseval(x in prop::collection::vec(-10.0f64..10.0, 1..64)) {
            let s = freq_domain_features(&x);
            let lhs: f64 = s.iter().map(|v| v * v).sum();
            let rhs = x.len() as f64 * x.iter().map(|v| v * v).sum::<f64>();
            prop_assert!((lhs - rhs).abs() <= 1e-8 * rhs.max(1.0));
        }
    }
}
