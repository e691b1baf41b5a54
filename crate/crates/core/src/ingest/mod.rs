//! Loading, windowing, normalization and splitting of bimodal gait records.

mod csv_channel;
mod gaitndd;
mod synth;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::binfmt::{ModelKind, Reader, Writer};
use crate::error::{Error, Result};
use crate::numkit::{column_mean_var, Matrix};

pub use csv_channel::{load_csv_channel, ColumnSelection};
pub use gaitndd::{load_gaitndd_record, GaitnddOptions, GAITNDD_COLUMNS, GAITNDD_FEATURES};
pub use synth::{synth_bimodal, SynthSpec};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub kept: usize,
    /// Malformed lines.
    pub skipped: usize,
    /// Frames removed by outlier cleaning.
    pub dropped: usize,
}

/// One channel of one subject's recording.
#[derive(Debug, Clone)]
pub struct ChannelRecord {
    pub subject_id: String,
    pub label: usize,
    /// frames × features
    pub frames: Matrix,
    /// `None` for event-indexed data such as stride series.
    pub sample_rate_hz: Option<f64>,
    pub report: LoadReport,
}

#[derive(Debug, Clone)]
pub struct BimodalRecord {
    pub subject_id: String,
    pub label: usize,
    pub channel1: Matrix,
    pub channel2: Matrix,
    pub sample_rate_hz: [Option<f64>; 2],
}

impl BimodalRecord {
    pub fn from_channels(ch1: ChannelRecord, ch2: ChannelRecord) -> Result<Self> {
        if ch1.label != ch2.label {
            return Err(Error::input(format!(
                "channel labels differ for subject {}: {} vs {}",
                ch1.subject_id, ch1.label, ch2.label
            )));
        }
        Ok(Self {
            subject_id: ch1.subject_id,
            label: ch1.label,
            channel1: ch1.frames,
            channel2: ch2.frames,
            sample_rate_hz: [ch1.sample_rate_hz, ch2.sample_rate_hz],
        })
    }
}

/// One training/test unit: a window from each channel plus the class label.
#[derive(Debug, Clone, PartialEq)]
pub struct BimodalSample {
    /// timestep₁ × P
    pub x1: Matrix,
    /// timestep₂ × Q
    pub x2: Matrix,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub timestep: usize,
    pub stride: usize,
}

/// Cuts `frames` into contiguous windows of `timestep` rows, advancing by `stride`.
///
/// Returns an empty list when there are fewer frames than `timestep`.
pub fn window(frames: &Matrix, timestep: usize, stride: usize) -> Result<Vec<Matrix>> {
    if timestep == 0 || stride == 0 {
        return Err(Error::input("window timestep and stride must be >= 1"));
    }
    if frames.rows() < timestep {
        return Ok(Vec::new());
    }
    let count = (frames.rows() - timestep) / stride + 1;
    Ok((0..count)
        .map(|i| frames.slice_rows(i * stride, i * stride + timestep))
        .collect())
}

/// Pairs the i-th window of each channel; excess windows of the longer channel are dropped.
pub fn record_samples(record: &BimodalRecord, w1: WindowSpec, w2: WindowSpec) -> Result<Vec<BimodalSample>> {
    let a = window(&record.channel1, w1.timestep, w1.stride)?;
    let b = window(&record.channel2, w2.timestep, w2.stride)?;
    Ok(a
        .into_iter()
        .zip(b)
        .map(|(x1, x2)| BimodalSample {
            x1,
            x2,
            label: record.label,
        })
        .collect())
}

/// Per-feature z-score statistics fitted on training windows.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    /// Zero marks a degenerate (constant) feature, which maps to 0.
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn fit(windows: &[Matrix]) -> Result<Self> {
        let width = windows
            .first()
            .ok_or_else(|| Error::input("cannot fit normalization on zero windows"))?
            .cols();
        if windows.iter().any(|w| w.cols() != width) {
            return Err(Error::shape("windows differ in feature count"));
        }
        let (mean, var, _) = column_mean_var(windows.iter().flat_map(|w| w.row_iter()), width);
        let std = mean
            .iter()
            .zip(&var)
            .map(|(m, v)| {
                let s = v.sqrt();
                if s <= 1e-12 * m.abs().max(1.0) {
                    0.0
                } else {
                    s
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, w: &Matrix) -> Result<Matrix> {
        if w.cols() != self.mean.len() {
            return Err(Error::shape(format!(
                "window has {} features, statistics have {}",
                w.cols(),
                self.mean.len()
            )));
        }
        let mut out = w.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = if *s == 0.0 { 0.0 } else { (*v - m) / s };
            }
        }
        Ok(out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(ModelKind::NormStats);
        w.count(self.mean.len()).reals(&self.mean).reals(&self.std);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, ModelKind::NormStats)?;
        let n = r.count()?;
        let mean = r.reals_exact(n, "mean")?;
        let std = r.reals_exact(n, "std")?;
        r.finish()?;
        Ok(Self { mean, std })
    }
}

/// Fits z-score statistics on `train` and applies them to both partitions.
pub fn normalize_fit_apply(train: &[Matrix], test: &[Matrix]) -> Result<(Vec<Matrix>, Vec<Matrix>, NormStats)> {
    let stats = NormStats::fit(train)?;
    let a = train.iter().map(|w| stats.apply(w)).collect::<Result<_>>()?;
    let b = test.iter().map(|w| stats.apply(w)).collect::<Result<_>>()?;
    Ok((a, b, stats))
}

/// Index partition produced by [`split`]; both lists are ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified, seeded train/test split over sample labels.
///
/// Each class contributes `round(fraction · n_c)` samples to training,
/// clamped so both partitions receive at least one sample of the class.
pub fn split(labels: &[usize], train_fraction: f64, seed: u64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::input(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (&class, idx) in &by_class {
        if idx.len() < 2 {
            return Err(Error::Stratification {
                class,
                count: idx.len(),
            });
        }
        let mut idx = idx.clone();
        idx.shuffle(&mut rng);
        let n_train = ((train_fraction * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1);
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

/// One manifest line per loaded record.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub path1: String,
    pub path2: String,
    pub label: usize,
    pub report1: LoadReport,
    pub report2: LoadReport,
    pub windows: usize,
    pub note: Option<String>,
}

pub fn render_manifest(entries: &[ManifestEntry]) -> String {
    let mut s = String::from(
        "# path1\tpath2\tlabel\tkept1\tskipped1\tdropped1\tkept2\tskipped2\tdropped2\twindows\tnote\n",
    );
    for e in entries {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            e.path1,
            e.path2,
            e.label,
            e.report1.kept,
            e.report1.skipped,
            e.report1.dropped,
            e.report2.kept,
            e.report2.skipped,
            e.report2.dropped,
            e.windows,
            e.note.as_deref().unwrap_or("-")
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(frames: usize, width: usize) -> Matrix {
        Matrix::new(frames, width, (0..frames * width).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn window_counts() {
        assert_eq!(window(&ramp(25, 2), 10, 5).unwrap().len(), 4);
        let one = window(&ramp(10, 3), 10, 1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0], ramp(10, 3));
        assert!(window(&ramp(9, 3), 10, 1).unwrap().is_empty());
        assert!(window(&ramp(9, 3), 0, 1).is_err());
    }

    #[test]
    fn pairing_drops_excess_windows() {
        let rec = BimodalRecord {
            subject_id: "s".into(),
            label: 1,
            channel1: ramp(30, 2),
            channel2: ramp(12, 3),
            sample_rate_hz: [None, None],
        };
        let w = WindowSpec {
            timestep: 10,
            stride: 1,
        };
        let samples = record_samples(&rec, w, w).unwrap();
        assert_eq!(samples.len(), 3);
        assert_eq!(samples[2].x1.row(0), ramp(30, 2).row(2));
    }

    #[test]
    fn normalization_rules() {
        let constant = Matrix::new(3, 1, vec![7.0; 3]).unwrap();
        let (tr, _, _) = normalize_fit_apply(&[constant.clone()], &[]).unwrap();
        assert!(tr[0].as_slice().iter().all(|&v| v == 0.0));

        // mean 5, population std 2
        let train = Matrix::new(2, 1, vec![3.0, 7.0]).unwrap();
        let test = Matrix::new(1, 1, vec![9.0]).unwrap();
        let (tr, te, stats) = normalize_fit_apply(&[train], &[test.clone()]).unwrap();
        assert_eq!(te[0][(0, 0)], 2.0);
        let (mean, _, _) = column_mean_var(tr.iter().flat_map(|w| w.row_iter()), 1);
        assert!(mean[0].abs() < 1e-9);
        let again = stats.apply(&test).unwrap();
        assert_eq!(again, te[0]);
        assert_eq!(NormStats::from_bytes(&stats.to_bytes()).unwrap(), stats);
    }

    #[test]
    fn split_counts_and_determinism() {
        let labels: Vec<usize> = (0..100).map(|i| i % 4).collect();
        let s = split(&labels, 0.8, 42).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (80, 20));
        for c in 0..4 {
            assert_eq!(s.train.iter().filter(|&&i| labels[i] == c).count(), 20);
            assert_eq!(s.test.iter().filter(|&&i| labels[i] == c).count(), 5);
        }
        assert_eq!(s, split(&labels, 0.8, 42).unwrap());
        assert!(s.train.iter().all(|i| !s.test.contains(i)));
    }

    #[test]
    fn split_rejects_singleton_class() {
        let err = split(&[0, 0, 1], 0.5, 1).unwrap_err();
        assert!(matches!(err, Error::Stratification { class: 1, count: 1 }));
        assert!(split(&[0, 0], 1.0, 1).is_err());
    }

    proptest! {
        #[test]
        fn non_overlapping_windows_reassemble(frames in 1usize..40, width in 1usize..4, ts in 1usize..8) {
            let m = ramp(frames, width);
            let ws = window(&m, ts, ts).unwrap();
            let joined: Vec<f64> = ws.iter().flat_map(|w| w.as_slice().to_vec()).collect();
            let covered = (frames / ts) * ts * width;
            prop_assert_eq!(&joined[..], &m.as_slice()[..covered]);
        }

        #[test]
        fn split_preserves_counts(labels in prop::collection::vec(0usize..3, 6..60), seed in 0u64..1000) {
            let mut labels = labels;
            // guarantee two of each class present
            labels.extend_from_slice(&[0, 0, 1, 1, 2, 2]);
            let s = split(&labels, 0.7, seed).unwrap();
            prop_assert_eq!(s.train.len() + s.test.len(), labels.len());
            for c in 0..3 {
                let total = labels.iter().filter(|&&l| l == c).count();
                let got = s.train.iter().chain(&s.test).filter(|&&i| labels[i] == c).count();
                prop_assert_eq!(total, got);
            }
        }
    }
}
