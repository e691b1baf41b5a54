use std::fs;
use std::path::Path;

use super::{ChannelRecord, LoadReport};
use crate::error::{Error, Result};
use crate::numkit::Matrix;

/// Columns on a gaitndd stride line: elapsed time followed by 12 features.
pub const GAITNDD_COLUMNS: usize = 13;
pub const GAITNDD_FEATURES: usize = GAITNDD_COLUMNS - 1;

#[derive(Debug, Clone, Copy)]
pub struct GaitnddOptions {
    /// Frames with any `|value| > threshold × median|column|` are dropped.
    /// `None` disables cleaning.
    pub clean_threshold: Option<f64>,
}

impl Default for GaitnddOptions {
    fn default() -> Self {
        Self {
            clean_threshold: Some(10.0),
        }
    }
}

/// Loads a whitespace-separated stride-interval file (13 numeric columns per line).
///
/// The elapsed-time column is checked for monotone non-decrease and then
/// dropped, leaving 12 features per frame. Malformed lines are skipped and
/// counted.
pub fn load_gaitndd_record(path: &Path, label: usize, opts: &GaitnddOptions) -> Result<ChannelRecord> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_gaitndd(&text, path, label, opts)
}

pub(crate) fn parse_gaitndd(
    text: &str,
    path: &Path,
    label: usize,
    opts: &GaitnddOptions,
) -> Result<ChannelRecord> {
    if text.trim().is_empty() {
        return Err(Error::format(path, "empty file"));
    }
    let mut rows: Vec<[f64; GAITNDD_COLUMNS]> = Vec::new();
    let mut skipped = 0usize;
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(line) {
            Some(r) => rows.push(r),
            None => skipped += 1,
        }
    }
    if rows.is_empty() {
        return Err(Error::format(
            path,
            format!("no line has {GAITNDD_COLUMNS} numeric columns"),
        ));
    }
    for (i, w) in rows.windows(2).enumerate() {
        if w[1][0] < w[0][0] {
            return Err(Error::format(
                path,
                format!(
                    "elapsed time decreases between frames {} and {} ({} -> {})",
                    i,
                    i + 1,
                    w[0][0],
                    w[1][0]
                ),
            ));
        }
    }

    let features: Vec<&[f64]> = rows.iter().map(|r| &r[1..]).collect();
    let keep = match opts.clean_threshold {
        Some(t) => outlier_mask(&features, t),
        None => vec![true; features.len()],
    };
    let dropped = keep.iter().filter(|k| !**k).count();
    let mut data = Vec::with_capacity((rows.len() - dropped) * GAITNDD_FEATURES);
    for (f, _) in features.iter().zip(&keep).filter(|(_, k)| **k) {
        data.extend_from_slice(f);
    }
    let kept = rows.len() - dropped;
    if kept == 0 {
        return Err(Error::format(path, "every frame was removed by cleaning"));
    }
    let frames = Matrix::new(kept, GAITNDD_FEATURES, data)?;
    Ok(ChannelRecord {
        subject_id: subject_id(path),
        label,
        frames,
        sample_rate_hz: None,
        report: LoadReport {
            kept,
            skipped,
            dropped,
        },
    })
}

fn parse_line(line: &str) -> Option<[f64; GAITNDD_COLUMNS]> {
    let mut out = [0.0; GAITNDD_COLUMNS];
    let mut n = 0;
    for tok in line.split_whitespace() {
        if n == GAITNDD_COLUMNS {
            return None;
        }
        let v: f64 = tok.parse().ok()?;
        if !v.is_finite() {
            return None;
        }
        out[n] = v;
        n += 1;
    }
    (n == GAITNDD_COLUMNS).then_some(out)
}

/// `true` for frames to keep.
pub(crate) fn outlier_mask(rows: &[&[f64]], threshold: f64) -> Vec<bool> {
    let width = rows.first().map_or(0, |r| r.len());
    let medians: Vec<f64> = (0..width)
        .map(|j| {
            let mut col: Vec<f64> = rows.iter().map(|r| r[j].abs()).collect();
            col.sort_by(f64::total_cmp);
            let n = col.len();
            if n % 2 == 1 {
                col[n / 2]
            } else {
                0.5 * (col[n / 2 - 1] + col[n / 2])
            }
        })
        .collect();
    rows.iter()
        .map(|r| {
            r.iter()
                .zip(&medians)
                .all(|(v, m)| *m == 0.0 || v.abs() <= threshold * m)
        })
        .collect()
}

pub(crate) fn subject_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}
