//! Plain-text experiment configuration.
//!
//! One `section.key = value` assignment per line. `#` starts a comment,
//! blank lines are ignored, and keys may appear at most once except
//! `dataset.record`, which is repeatable. Unknown keys are errors. Relative
//! paths resolve against the directory holding the config file.
//!
//! ```text
//! experiment.seed = 42
//! experiment.split = 0.8
//! experiment.out_dir = out
//! dataset.kind = synthetic
//! dataset.classes = 4
//! dataset.separation = 5.0
//! ```
//!
//! For recorded data, each `dataset.record` line is
//! `class, format1, path1, format2, path2` where a format is `gaitndd`
//! (whitespace-separated stride file) or `csv`.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::corrmnn::TrainConfig;
use crate::error::{Error, Result};
use crate::ingest::{ColumnSelection, SynthSpec, WindowSpec};
use crate::sfe::SfeConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordFormat {
    Gaitndd,
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordSpec {
    pub class: String,
    pub format1: RecordFormat,
    pub path1: PathBuf,
    pub format2: RecordFormat,
    pub path2: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordsConfig {
    pub records: Vec<RecordSpec>,
    /// Class order; defaults to order of first appearance among records.
    pub class_names: Vec<String>,
    pub window1: WindowSpec,
    pub window2: WindowSpec,
    pub clean_threshold: Option<f64>,
    pub csv_header: bool,
    pub ch1_columns: ColumnSelection,
    pub ch2_columns: ColumnSelection,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetConfig {
    Synthetic(SynthSpec),
    Records(RecordsConfig),
}

/// Whether the train/test split is drawn over windows or over whole records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitUnit {
    Sample,
    Record,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmmConfig {
    pub states: usize,
    pub iterations: usize,
    /// Relative to the pooled per-dimension variance.
    pub var_floor: f64,
}

impl Default for HmmConfig {
    fn default() -> Self {
        Self {
            states: 10,
            iterations: 200,
            var_floor: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub train_fraction: f64,
    pub split_unit: SplitUnit,
    pub out_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub sfe: SfeConfig,
    pub corrmnn: TrainConfig,
    pub hmm: HmmConfig,
}

impl ExperimentConfig {
    /// Synthetic four-class defaults; mostly useful as a starting point in code.
    pub fn synthetic(spec: SynthSpec, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            seed: spec.seed,
            train_fraction: 0.8,
            split_unit: SplitUnit::Sample,
            out_dir: out_dir.into(),
            dataset: DatasetConfig::Synthetic(spec),
            sfe: SfeConfig::default(),
            corrmnn: TrainConfig::default(),
            hmm: HmmConfig::default(),
        }
    }

    /// Propagates the experiment seed into every stage.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.sfe.seed = seed;
        self.corrmnn.seed = seed;
        if let DatasetConfig::Synthetic(s) = &mut self.dataset {
            s.seed = seed;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "experiment.split must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        self.corrmnn.validate()?;
        let s = &self.sfe;
        if s.k1 == 0 || s.k2 == 0 || s.gmm_iters == 0 {
            return Err(Error::Config("sfe.k1, sfe.k2 and sfe.gmm_iters must be positive".into()));
        }
        if !(0.0..=1.0).contains(&s.strong_ratio) {
            return Err(Error::Config("sfe.strong_ratio must lie in [0, 1]".into()));
        }
        if !(s.var_floor >= 0.0) {
            return Err(Error::Config("sfe.var_floor must be >= 0".into()));
        }
        if self.hmm.states == 0 || self.hmm.iterations == 0 || !(self.hmm.var_floor >= 0.0) {
            return Err(Error::Config("hmm.states and hmm.iterations must be positive, hmm.var_floor >= 0".into()));
        }
        match &self.dataset {
            DatasetConfig::Synthetic(sp) => {
                if sp.classes < 2 || sp.samples_per_class < 2 || sp.timesteps == 0 || sp.dim1 == 0 || sp.dim2 == 0 {
                    return Err(Error::Config(
                        "synthetic dataset needs >= 2 classes, >= 2 samples per class and positive sizes".into(),
                    ));
                }
            }
            DatasetConfig::Records(r) => {
                if r.records.is_empty() {
                    return Err(Error::Config("dataset.kind = records needs at least one dataset.record".into()));
                }
                for w in [r.window1, r.window2] {
                    if w.timestep == 0 || w.stride == 0 {
                        return Err(Error::Config("window timestep and stride must be positive".into()));
                    }
                }
                for rec in &r.records {
                    for p in [&rec.path1, &rec.path2] {
                        if !p.exists() {
                            return Err(Error::Config(format!("record file {} does not exist", p.display())));
                        }
                    }
                    if !r.class_names.contains(&rec.class) {
                        return Err(Error::Config(format!("record class '{}' not in dataset.classes", rec.class)));
                    }
                }
                if self.split_unit == SplitUnit::Record {
                    // checked again after loading, but catch the obvious case early
                    for c in &r.class_names {
                        if r.records.iter().filter(|x| &x.class == c).count() < 2 {
                            return Err(Error::Config(format!(
                                "experiment.split_unit = record needs >= 2 records of class '{c}'"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Reads and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let cfg = parse_config(&text, &base)?;
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Default)]
struct Raw {
    kind: Option<String>,
    classes: Option<String>,
    records: Vec<(usize, String)>,
}

/// Parses config text; relative paths resolve against `base`. Does not check that files exist.
pub fn parse_config(text: &str, base: &Path) -> Result<ExperimentConfig> {
    let mut synth = SynthSpec {
        classes: 4,
        samples_per_class: 200,
        timesteps: 10,
        dim1: 4,
        dim2: 4,
        separation: 5.0,
        seed: 0,
    };
    let mut rec = RecordsConfig {
        records: Vec::new(),
        class_names: Vec::new(),
        window1: WindowSpec { timestep: 10, stride: 10 },
        window2: WindowSpec { timestep: 10, stride: 10 },
        clean_threshold: Some(10.0),
        csv_header: true,
        ch1_columns: ColumnSelection::All,
        ch2_columns: ColumnSelection::All,
    };
    let mut cfg = ExperimentConfig::synthetic(synth.clone(), base.join("out"));
    let mut seed: Option<u64> = None;
    let mut synth_seed: Option<u64> = None;
    let mut raw = Raw::default();
    let mut seen = BTreeSet::new();

    for (no, line) in text.lines().enumerate() {
        let lineno = no + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {lineno}: expected 'section.key = value'")))?;
        let key = key.trim();
        let value = value.trim();
        if key != "dataset.record" && !seen.insert(key.to_string()) {
            return Err(Error::Config(format!("line {lineno}: duplicate key '{key}'")));
        }
        let v = Value { key, value, lineno };
        match key {
            "experiment.seed" => seed = Some(v.parse()?),
            "experiment.split" => cfg.train_fraction = v.parse()?,
            "experiment.split_unit" => {
                cfg.split_unit = match value {
                    "sample" => SplitUnit::Sample,
                    "record" => SplitUnit::Record,
                    _ => return Err(v.invalid("expected 'sample' or 'record'")),
                }
            }
            "experiment.out_dir" => cfg.out_dir = base.join(value),

            "dataset.kind" => raw.kind = Some(value.to_string()),
            "dataset.classes" => raw.classes = Some(value.to_string()),
            "dataset.samples_per_class" => synth.samples_per_class = v.parse()?,
            "dataset.timesteps" => synth.timesteps = v.parse()?,
            "dataset.dim1" => synth.dim1 = v.parse()?,
            "dataset.dim2" => synth.dim2 = v.parse()?,
            "dataset.separation" => synth.separation = v.parse()?,
            "dataset.seed" => synth_seed = Some(v.parse()?),
            "dataset.record" => raw.records.push((lineno, value.to_string())),
            "dataset.timestep1" => rec.window1.timestep = v.parse()?,
            "dataset.stride1" => rec.window1.stride = v.parse()?,
            "dataset.timestep2" => rec.window2.timestep = v.parse()?,
            "dataset.stride2" => rec.window2.stride = v.parse()?,
            "dataset.clean_threshold" => {
                rec.clean_threshold = if value == "none" { None } else { Some(v.parse()?) }
            }
            "dataset.csv_header" => rec.csv_header = v.parse()?,
            "dataset.ch1_columns" => rec.ch1_columns = columns(value),
            "dataset.ch2_columns" => rec.ch2_columns = columns(value),

            "sfe.k1" => cfg.sfe.k1 = v.parse()?,
            "sfe.k2" => cfg.sfe.k2 = v.parse()?,
            "sfe.strong_ratio" => cfg.sfe.strong_ratio = v.parse()?,
            "sfe.d_out" => cfg.sfe.d_out = Some(v.parse()?),
            "sfe.gmm_iters" => cfg.sfe.gmm_iters = v.parse()?,
            "sfe.var_floor" => cfg.sfe.var_floor = v.parse()?,

            "corrmnn.learning_rate" => cfg.corrmnn.learning_rate = v.parse()?,
            "corrmnn.batch_size" => cfg.corrmnn.batch_size = v.parse()?,
            "corrmnn.hidden" => cfg.corrmnn.hidden = v.parse()?,
            "corrmnn.epochs" => cfg.corrmnn.epochs = v.parse()?,
            "corrmnn.cca_ridge" => cfg.corrmnn.cca_ridge = v.parse()?,
            "corrmnn.k_corr" => cfg.corrmnn.k_corr = v.parse()?,
            "corrmnn.mlp_widths" => cfg.corrmnn.mlp_widths = v.list()?,
            "corrmnn.nodes" => cfg.corrmnn.nodes = Some(v.parse()?),

            "hmm.states" => cfg.hmm.states = v.parse()?,
            "hmm.iterations" => cfg.hmm.iterations = v.parse()?,
            "hmm.var_floor" => cfg.hmm.var_floor = v.parse()?,
            _ => return Err(Error::Config(format!("line {lineno}: unknown key '{key}'"))),
        }
    }

    let kind = raw.kind.as_deref().unwrap_or("synthetic");
    cfg.dataset = match kind {
        "synthetic" => {
            if !raw.records.is_empty() {
                return Err(Error::Config("dataset.record given for a synthetic dataset".into()));
            }
            if let Some(c) = &raw.classes {
                synth.classes = c
                    .parse()
                    .map_err(|_| Error::Config(format!("dataset.classes: expected a count, got '{c}'")))?;
            }
            DatasetConfig::Synthetic(synth)
        }
        "records" => {
            for (lineno, line) in &raw.records {
                rec.records.push(parse_record(line, *lineno, base)?);
            }
            rec.class_names = match &raw.classes {
                Some(c) => c.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
                None => {
                    let mut names: Vec<String> = Vec::new();
                    for r in &rec.records {
                        if !names.contains(&r.class) {
                            names.push(r.class.clone());
                        }
                    }
                    names
                }
            };
            DatasetConfig::Records(rec)
        }
        other => return Err(Error::Config(format!("dataset.kind: unknown kind '{other}'"))),
    };
    cfg.set_seed(seed.unwrap_or(0));
    if let (Some(s), DatasetConfig::Synthetic(sp)) = (synth_seed, &mut cfg.dataset) {
        sp.seed = s;
    }
    Ok(cfg)
}

struct Value<'a> {
    key: &'a str,
    value: &'a str,
    lineno: usize,
}

impl Value<'_> {
    fn invalid(&self, why: impl std::fmt::Display) -> Error {
        Error::Config(format!("line {}: {}: {why} (got '{}')", self.lineno, self.key, self.value))
    }

    fn parse<T: std::str::FromStr>(&self) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.value.parse().map_err(|e| self.invalid(e))
    }

    fn list<T: std::str::FromStr>(&self) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.value
            .split(',')
            .map(|s| s.trim().parse().map_err(|e| self.invalid(e)))
            .collect()
    }
}

fn columns(value: &str) -> ColumnSelection {
    if value == "all" {
        return ColumnSelection::All;
    }
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    match parts.iter().map(|p| p.parse::<usize>()).collect::<std::result::Result<Vec<_>, _>>() {
        Ok(idx) => ColumnSelection::Indices(idx),
        Err(_) => ColumnSelection::Names(parts.iter().map(|s| s.to_string()).collect()),
    }
}

fn parse_record(line: &str, lineno: usize, base: &Path) -> Result<RecordSpec> {
    let parts: Vec<&str> = line.split(',').map(str::trim).collect();
    if parts.len() != 5 {
        return Err(Error::Config(format!(
            "line {lineno}: dataset.record expects 'class, format1, path1, format2, path2'"
        )));
    }
    let format = |s: &str| match s {
        "gaitndd" => Ok(RecordFormat::Gaitndd),
        "csv" => Ok(RecordFormat::Csv),
        _ => Err(Error::Config(format!("line {lineno}: unknown record format '{s}'"))),
    };
    Ok(RecordSpec {
        class: parts[0].to_string(),
        format1: format(parts[1])?,
        path1: base.join(parts[2]),
        format2: format(parts[3])?,
        path2: base.join(parts[4]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let text = "# comment\nexperiment.seed = 42\nsfe.k1 = 3 # trailing\ncorrmnn.mlp_widths = 8, 4\n\nhmm.states = 5\n";
        let cfg = parse_config(text, Path::new("/tmp/x")).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.sfe.seed, 42);
        assert_eq!(cfg.corrmnn.seed, 42);
        assert_eq!(cfg.sfe.k1, 3);
        assert_eq!(cfg.sfe.k2, 20);
        assert_eq!(cfg.corrmnn.mlp_widths, vec![8, 4]);
        assert_eq!(cfg.hmm.states, 5);
        assert_eq!(cfg.out_dir, Path::new("/tmp/x/out"));
        match cfg.dataset {
            DatasetConfig::Synthetic(s) => assert_eq!((s.classes, s.seed), (4, 42)),
            _ => panic!(),
        }
    }

    #[test]
    fn unknown_and_duplicate_keys() {
        assert!(matches!(parse_config("sfe.kk = 1", Path::new(".")), Err(Error::Config(_))));
        assert!(parse_config("sfe.k1 = 1\nsfe.k1 = 2", Path::new(".")).is_err());
        assert!(parse_config("sfe.k1 = many", Path::new(".")).is_err());
        assert!(parse_config("just text", Path::new(".")).is_err());
    }

    #[test]
    fn records_section() {
        let text = "dataset.kind = records\n\
                    dataset.record = park, gaitndd, a/park1.ts, gaitndd, a/park1.ts\n\
                    dataset.record = als, csv, b.csv, csv, c.csv\n\
                    dataset.ch1_columns = 0, 1\n\
                    dataset.ch2_columns = left, right\n\
                    dataset.clean_threshold = none\n";
        let cfg = parse_config(text, Path::new("/d")).unwrap();
        let DatasetConfig::Records(r) = cfg.dataset else { panic!() };
        assert_eq!(r.class_names, vec!["park", "als"]);
        assert_eq!(r.records[0].path1, Path::new("/d/a/park1.ts"));
        assert_eq!(r.records[1].format1, RecordFormat::Csv);
        assert_eq!(r.ch1_columns, ColumnSelection::Indices(vec![0, 1]));
        assert_eq!(r.ch2_columns, ColumnSelection::Names(vec!["left".into(), "right".into()]));
        assert_eq!(r.clean_threshold, None);
    }

    #[test]
    fn missing_record_file_fails_validation() {
        let text = "dataset.kind = records\ndataset.record = a, csv, nope.csv, csv, nope.csv\n";
        let cfg = parse_config(text, Path::new("/nonexistent")).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
