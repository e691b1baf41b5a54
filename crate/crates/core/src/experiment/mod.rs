//! Experiment orchestration: configuration, pipeline wiring, metrics and
//! artifact export.
//!
//! Stages run in a fixed order: load, split, normalize, fit SFE, train
//! CorrMNN, fit one HMM per class, score the test partition, report. Every
//! fit sees only the training partition. Output files are written to a
//! temporary name and renamed into place; if any stage fails, files
//! written by the failed run are removed.

mod config;
mod metrics;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rayon::prelude::*;

use crate::corrmnn::{extract_temporal_features, train_corrmnn, CorrMnnModel, TrainReport};
use crate::discriminator::{baum_welch_fit, classify, fuse_features, GaussianHmm, HmmReport};
use crate::error::{Error, Result};
use crate::ingest::{
    load_csv_channel, load_gaitndd_record, record_samples, render_manifest, split, synth_bimodal, BimodalRecord,
    BimodalSample, ChannelRecord, ColumnSelection, GaitnddOptions, ManifestEntry, NormStats, Split,
};
use crate::numkit::Matrix;
use crate::sfe::{sfe_fit, sfe_pipeline, SfeModels, SfeReport};

pub use config::{
    load_config, parse_config, DatasetConfig, ExperimentConfig, HmmConfig, RecordFormat, RecordSpec,
    RecordsConfig, SplitUnit,
};
pub use metrics::{
    compute_metrics, metrics_csv, read_scores_csv, roc_curve, scores_csv, MetricsReport, RocCurve,
};

/// Loaded samples with the record each came from.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<BimodalSample>,
    /// Index into `manifest` for each sample.
    pub record_of: Vec<usize>,
    pub manifest: Vec<ManifestEntry>,
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }
}

fn select(rec: ChannelRecord, sel: &ColumnSelection, path: &Path) -> Result<ChannelRecord> {
    let idx = match sel {
        ColumnSelection::All => return Ok(rec),
        ColumnSelection::Indices(idx) => idx,
        ColumnSelection::Names(_) => {
            return Err(Error::Config(format!(
                "{}: column names need a csv file with a header",
                path.display()
            )))
        }
    };
    let cols = rec.frames.cols();
    if let Some(&bad) = idx.iter().find(|&&i| i >= cols) {
        return Err(Error::format(path, format!("unknown column {bad}")));
    }
    let data: Vec<f64> = rec.frames.row_iter().flat_map(|r| idx.iter().map(move |&i| r[i])).collect();
    let frames = Matrix::new(rec.frames.rows(), idx.len(), data)?;
    Ok(ChannelRecord { frames, ..rec })
}

fn load_channel(
    format: RecordFormat,
    path: &Path,
    label: usize,
    sel: &ColumnSelection,
    r: &RecordsConfig,
) -> Result<ChannelRecord> {
    match format {
        RecordFormat::Gaitndd => {
            let opts = GaitnddOptions {
                clean_threshold: r.clean_threshold,
            };
            select(load_gaitndd_record(path, label, &opts)?, sel, path)
        }
        RecordFormat::Csv => load_csv_channel(path, sel, r.csv_header, label),
    }
}

/// Loads and windows every record, or generates the synthetic set.
pub fn load_dataset(dataset: &DatasetConfig) -> Result<Dataset> {
    match dataset {
        DatasetConfig::Synthetic(spec) => {
            let samples = synth_bimodal(spec)?;
            let n = samples.len();
            Ok(Dataset {
                record_of: (0..n).collect(),
                manifest: samples
                    .iter()
                    .enumerate()
                    .map(|(i, s)| ManifestEntry {
                        path1: format!("synthetic:{i}"),
                        path2: format!("synthetic:{i}"),
                        label: s.label,
                        report1: Default::default(),
                        report2: Default::default(),
                        windows: 1,
                        note: None,
                    })
                    .collect(),
                class_names: (0..spec.classes).map(|c| format!("class{c}")).collect(),
                samples,
            })
        }
        DatasetConfig::Records(r) => {
            let mut samples = Vec::new();
            let mut record_of = Vec::new();
            let mut manifest = Vec::new();
            for spec in &r.records {
                let label = r
                    .class_names
                    .iter()
                    .position(|c| c == &spec.class)
                    .ok_or_else(|| Error::Config(format!("record class '{}' not in dataset.classes", spec.class)))?;
                let ch1 = load_channel(spec.format1, &spec.path1, label, &r.ch1_columns, r)?;
                let ch2 = load_channel(spec.format2, &spec.path2, label, &r.ch2_columns, r)?;
                let (rep1, rep2) = (ch1.report, ch2.report);
                let record = BimodalRecord::from_channels(ch1, ch2)?;
                let windows = record_samples(&record, r.window1, r.window2)?;
                let note = windows.is_empty().then(|| "too short for one window".to_string());
                if let Some(n) = &note {
                    log::warn!("{}: {n}", spec.path1.display());
                }
                record_of.extend(std::iter::repeat_n(manifest.len(), windows.len()));
                manifest.push(ManifestEntry {
                    path1: spec.path1.display().to_string(),
                    path2: spec.path2.display().to_string(),
                    label,
                    report1: rep1,
                    report2: rep2,
                    windows: windows.len(),
                    note,
                });
                samples.extend(windows);
            }
            if samples.is_empty() {
                return Err(Error::input("no record yields a complete window"));
            }
            Ok(Dataset {
                samples,
                record_of,
                manifest,
                class_names: r.class_names.clone(),
            })
        }
    }
}

/// Stratified split over samples or over whole records.
pub fn split_dataset(data: &Dataset, unit: SplitUnit, fraction: f64, seed: u64) -> Result<Split> {
    match unit {
        SplitUnit::Sample => split(&data.labels(), fraction, seed),
        SplitUnit::Record => {
            let used: Vec<usize> = (0..data.manifest.len()).filter(|&r| data.manifest[r].windows > 0).collect();
            let labels: Vec<usize> = used.iter().map(|&r| data.manifest[r].label).collect();
            let s = split(&labels, fraction, seed)?;
            let mut is_train = vec![false; data.manifest.len()];
            for &i in &s.train {
                is_train[used[i]] = true;
            }
            let (train, test): (Vec<usize>, Vec<usize>) =
                (0..data.samples.len()).partition(|&i| is_train[data.record_of[i]]);
            Ok(Split { train, test })
        }
    }
}

/// Fits per-channel z-scores on `train` and applies them to every sample.
pub fn normalize_samples(samples: &[BimodalSample], train: &[usize]) -> Result<(Vec<BimodalSample>, [NormStats; 2])> {
    let w1: Vec<Matrix> = train.iter().map(|&i| samples[i].x1.clone()).collect();
    let w2: Vec<Matrix> = train.iter().map(|&i| samples[i].x2.clone()).collect();
    let n1 = NormStats::fit(&w1)?;
    let n2 = NormStats::fit(&w2)?;
    let out = samples
        .iter()
        .map(|s| {
            Ok(BimodalSample {
                x1: n1.apply(&s.x1)?,
                x2: n2.apply(&s.x2)?,
                label: s.label,
            })
        })
        .collect::<Result<_>>()?;
    Ok((out, [n1, n2]))
}

/// Spatial and temporal features of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleFeatures {
    pub label: usize,
    pub f_sp: Vec<f64>,
    pub f_tp: Matrix,
}

impl SampleFeatures {
    pub fn fused(&self) -> Matrix {
        fuse_features(&self.f_sp, &self.f_tp)
    }
}

pub fn sample_features(samples: &[BimodalSample], sfe: &SfeModels, net: &CorrMnnModel) -> Result<Vec<SampleFeatures>> {
    samples
        .par_iter()
        .map(|s| {
            Ok(SampleFeatures {
                label: s.label,
                f_sp: sfe_pipeline(s, sfe)?,
                f_tp: extract_temporal_features(net, s)?,
            })
        })
        .collect()
}

/// One row per sample: label, `sp_*` spatial entries, then `tp_<node>_<j>` temporal entries.
pub fn features_csv(features: &[SampleFeatures]) -> String {
    let mut s = String::from("label");
    if let Some(f) = features.first() {
        for j in 0..f.f_sp.len() {
            let _ = write!(s, ",sp_{j}");
        }
        for i in 0..f.f_tp.rows() {
            for j in 0..f.f_tp.cols() {
                let _ = write!(s, ",tp_{i}_{j}");
            }
        }
    }
    s.push('\n');
    for f in features {
        let _ = write!(s, "{}", f.label);
        for v in f.f_sp.iter().chain(f.f_tp.as_slice()) {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

/// Writes `features_csv` to `path` atomically.
pub fn export_features(features: &[SampleFeatures], path: &Path) -> Result<()> {
    write_atomic(path, features_csv(features).as_bytes())
}

/// Recomputes metrics from a `scores.csv` table and writes `metrics.csv`,
/// `confusion.csv` and `roc_<class>.csv` into `dir`. Partial output is
/// removed on failure.
pub fn rescore(scores_path: &Path, dir: &Path) -> Result<MetricsReport> {
    let (truth, pred, scores) = read_scores_csv(scores_path)?;
    let report = compute_metrics(&truth, &pred, &scores)?;
    let mut out = Outputs::new(dir)?;
    let written = (|| {
        out.write("confusion.csv", report.confusion_csv())?;
        for c in 0..report.classes() {
            out.write(&format!("roc_{c}.csv"), report.roc_csv(c))?;
        }
        out.write("metrics.csv", metrics_csv(&report, truth.len(), &[]))
    })();
    if let Err(e) = written {
        out.rollback();
        return Err(e);
    }
    Ok(report)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::input(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

/// Tracks files written by one run so a failed run can remove them.
struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes.as_ref())?;
        self.written.push(path);
        Ok(())
    }

    fn rollback(&self) {
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
    }
}

/// Nearest class mean (Euclidean) classifier fitted on `train`, scored on `test`.
pub fn nearest_mean_accuracy(train: &[(Vec<f64>, usize)], test: &[(Vec<f64>, usize)], classes: usize) -> f64 {
    if test.is_empty() || train.is_empty() {
        return 0.0;
    }
    let d = train[0].0.len();
    let mut means = vec![vec![0.0; d]; classes];
    let mut counts = vec![0usize; classes];
    for (x, l) in train {
        counts[*l] += 1;
        for (m, v) in means[*l].iter_mut().zip(x) {
            *m += v;
        }
    }
    for (m, &n) in means.iter_mut().zip(&counts) {
        if n > 0 {
            m.iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    let hits = test
        .iter()
        .filter(|(x, l)| {
            let mut best = usize::MAX;
            let mut best_d = f64::INFINITY;
            for (c, m) in means.iter().enumerate() {
                if counts[c] == 0 {
                    continue;
                }
                let dist: f64 = x.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum();
                if dist < best_d {
                    best_d = dist;
                    best = c;
                }
            }
            best == *l
        })
        .count();
    hits as f64 / test.len() as f64
}

/// Everything fitted on the training partition.
#[derive(Debug, Clone)]
pub struct FittedModels {
    pub norm: [NormStats; 2],
    pub sfe: SfeModels,
    pub sfe_report: SfeReport,
    pub corrmnn: CorrMnnModel,
    pub train_report: TrainReport,
    /// One per class; empty after an export-only run.
    pub hmms: Vec<GaussianHmm>,
    pub hmm_reports: Vec<HmmReport>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    /// `None` after an export-only run.
    pub metrics: Option<MetricsReport>,
    /// Nearest-mean test accuracy on `F_sp` alone and on flattened `F_tp` alone.
    pub baselines: [f64; 2],
    pub split: Split,
    pub class_names: Vec<String>,
    /// Wall-clock seconds per stage, in execution order.
    pub timings: Vec<(&'static str, f64)>,
    pub models: FittedModels,
    pub features: Vec<SampleFeatures>,
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
}

struct Timer {
    timings: Vec<(&'static str, f64)>,
}

impl Timer {
    fn stage<T>(&mut self, name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        info!("stage {name}");
        let t0 = Instant::now();
        let out = f().map_err(|e| e.in_stage(name))?;
        let secs = t0.elapsed().as_secs_f64();
        info!("stage {name} done in {secs:.3}s");
        self.timings.push((name, secs));
        Ok(out)
    }
}

/// Runs the full pipeline and writes every artifact into `cfg.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    run(cfg, false)
}

/// Runs through feature extraction and writes `features.csv` plus the
/// fitted SFE and CorrMNN models; no HMMs are fitted.
pub fn run_export(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    run(cfg, true)
}

fn run(cfg: &ExperimentConfig, export_only: bool) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let mut out = Outputs::new(&cfg.out_dir)?;
    match run_stages(cfg, export_only, &mut out) {
        Ok(mut outcome) => {
            outcome.files = out.written.clone();
            Ok(outcome)
        }
        Err(e) => {
            out.rollback();
            Err(e)
        }
    }
}

fn run_stages(cfg: &ExperimentConfig, export_only: bool, out: &mut Outputs) -> Result<ExperimentOutcome> {
    let mut timer = Timer { timings: Vec::new() };
    let data = timer.stage("load", || load_dataset(&cfg.dataset))?;
    let classes = data.class_names.len();
    let parts = timer.stage("split", || split_dataset(&data, cfg.split_unit, cfg.train_fraction, cfg.seed))?;
    if let Some(c) = (0..classes).find(|&c| !parts.train.iter().any(|&i| data.samples[i].label == c)) {
        return Err(Error::Stratification { class: c, count: 0 }.in_stage("split"));
    }
    let (samples, norm) = timer.stage("normalize", || normalize_samples(&data.samples, &parts.train))?;
    let train: Vec<BimodalSample> = parts.train.iter().map(|&i| samples[i].clone()).collect();

    let (sfe, sfe_report) = timer.stage("sfe", || sfe_fit(&train, &cfg.sfe))?;
    let (net, train_report) = timer.stage("corrmnn", || train_corrmnn(&train, &cfg.corrmnn))?;
    let features = timer.stage("features", || sample_features(&samples, &sfe, &net))?;

    timer.stage("write-models", || {
        out.write("manifest.txt", render_manifest(&data.manifest))?;
        out.write("norm_channel1.bin", norm[0].to_bytes())?;
        out.write("norm_channel2.bin", norm[1].to_bytes())?;
        for (name, g) in [
            ("gmm_direct", &sfe.gmm_direct),
            ("gmm_time", &sfe.gmm_time),
            ("gmm_freq", &sfe.gmm_freq),
        ] {
            out.write(&format!("{name}.bin"), g.to_bytes())?;
            out.write(&format!("{name}.txt"), g.dump_text())?;
        }
        out.write("lda.bin", sfe.lda.to_bytes())?;
        out.write("lda.txt", sfe.lda.dump_text())?;
        out.write("corrmnn.bin", net.to_bytes())?;
        out.write("corrmnn.txt", net.dump_text())?;
        out.write("loss_curve.csv", train_report.loss_curve_csv())?;
        out.write("features.csv", features_csv(&features))
    })?;

    let as_rows = |idx: &[usize], f: &dyn Fn(&SampleFeatures) -> Vec<f64>| -> Vec<(Vec<f64>, usize)> {
        idx.iter().map(|&i| (f(&features[i]), features[i].label)).collect()
    };
    let sp = |f: &SampleFeatures| f.f_sp.clone();
    let tp = |f: &SampleFeatures| f.f_tp.as_slice().to_vec();
    let baselines = [
        nearest_mean_accuracy(&as_rows(&parts.train, &sp), &as_rows(&parts.test, &sp), classes),
        nearest_mean_accuracy(&as_rows(&parts.train, &tp), &as_rows(&parts.test, &tp), classes),
    ];

    let mut models = FittedModels {
        norm,
        sfe,
        sfe_report,
        corrmnn: net,
        train_report,
        hmms: Vec::new(),
        hmm_reports: Vec::new(),
    };
    let mut metrics = None;
    if !export_only {
        let fits = timer.stage("hmm", || {
            (0..classes)
                .into_par_iter()
                .map(|c| {
                    let seqs: Vec<Matrix> = parts
                        .train
                        .iter()
                        .filter(|&&i| features[i].label == c)
                        .map(|&i| features[i].fused())
                        .collect();
                    baum_welch_fit(
                        &seqs,
                        cfg.hmm.states,
                        cfg.hmm.iterations,
                        cfg.seed.wrapping_add(c as u64),
                        cfg.hmm.var_floor,
                    )
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let (hmms, hmm_reports): (Vec<_>, Vec<_>) = fits.into_iter().unzip();
        let (truth, pred, scores) = timer.stage("score", || {
            let results: Vec<(usize, Vec<f64>)> = parts
                .test
                .par_iter()
                .map(|&i| classify(&hmms, &features[i].fused()))
                .collect::<Result<_>>()?;
            let truth: Vec<usize> = parts.test.iter().map(|&i| features[i].label).collect();
            let pred: Vec<usize> = results.iter().map(|r| r.0).collect();
            let rows: Vec<Vec<f64>> = results.into_iter().map(|r| r.1).collect();
            Ok((truth, pred, Matrix::from_rows(&rows)?))
        })?;
        let report = timer.stage("report", || {
            let report = compute_metrics(&truth, &pred, &scores)?;
            for (c, h) in hmms.iter().enumerate() {
                out.write(&format!("hmm_{c}.bin"), h.to_bytes())?;
                out.write(&format!("hmm_{c}.txt"), h.dump_text())?;
            }
            out.write("scores.csv", scores_csv(&truth, &pred, &scores))?;
            out.write("confusion.csv", report.confusion_csv())?;
            for c in 0..classes {
                out.write(&format!("roc_{c}.csv"), report.roc_csv(c))?;
            }
            let extra = vec![
                ("n_train".to_string(), parts.train.len().to_string()),
                ("baseline_sfe_nearest_mean".to_string(), baselines[0].to_string()),
                ("baseline_corrmnn_nearest_mean".to_string(), baselines[1].to_string()),
            ];
            out.write("metrics.csv", metrics_csv(&report, truth.len(), &extra))?;
            Ok(report)
        })?;
        info!(
            "accuracy {:.4} (SFE-only {:.4}, CorrMNN-only {:.4})",
            report.accuracy, baselines[0], baselines[1]
        );
        models.hmms = hmms;
        models.hmm_reports = hmm_reports;
        metrics = Some(report);
    }

    let mut t = String::from("stage,seconds\n");
    for (name, secs) in &timer.timings {
        let _ = writeln!(t, "{name},{secs:.6}");
    }
    out.write("timings.csv", t)?;
    Ok(ExperimentOutcome {
        metrics,
        baselines,
        split: parts,
        class_names: data.class_names,
        timings: timer.timings,
        models,
        features,
        out_dir: cfg.out_dir.clone(),
        files: Vec::new(),
    })
}
