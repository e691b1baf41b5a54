use std::path::Path;

use super::{gaitndd::subject_id, ChannelRecord, LoadReport};
use crate::error::{Error, Result};
use crate::numkit::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnSelection {
    All,
    Indices(Vec<usize>),
    /// Requires a header row.
    Names(Vec<String>),
}

/// Loads selected columns of a comma-delimited numeric table.
pub fn load_csv_channel(
    path: &Path,
    columns: &ColumnSelection,
    has_header: bool,
    label: usize,
) -> Result<ChannelRecord> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::format(path, e.to_string()))?;

    let header: Vec<String> = if has_header {
        reader
            .headers()
            .map_err(|e| Error::format(path, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect()
    } else {
        Vec::new()
    };

    let mut width = if has_header { Some(header.len()) } else { None };
    let mut data = Vec::new();
    let mut selected: Option<Vec<usize>> = None;
    let mut rows = 0usize;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(Error::format(
                path,
                format!("ragged row {}: {} fields, expected {w}", i + 1, rec.len()),
            ));
        }
        if selected.is_none() {
            selected = Some(resolve(columns, &header, w, path)?);
        }
        for &j in selected.as_ref().unwrap() {
            let field = &rec[j];
            let v: f64 = field.parse().map_err(|_| {
                Error::format(path, format!("row {}, column {j}: '{field}' is not numeric", i + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::format(path, format!("row {}, column {j}: non-finite", i + 1)));
            }
            data.push(v);
        }
        rows += 1;
    }
    let selected = match selected {
        Some(s) => s,
        None => resolve(columns, &header, width.unwrap_or(0), path)?,
    };
    if rows == 0 {
        return Err(Error::format(path, "no data rows"));
    }
    let frames = Matrix::new(rows, selected.len(), data)?;
    Ok(ChannelRecord {
        subject_id: subject_id(path),
        label,
        frames,
        sample_rate_hz: None,
        report: LoadReport {
            kept: rows,
            skipped: 0,
            dropped: 0,
        },
    })
}

fn resolve(sel: &ColumnSelection, header: &[String], width: usize, path: &Path) -> Result<Vec<usize>> {
    let cols = match sel {
        ColumnSelection::All => (0..width).collect(),
        ColumnSelection::Indices(ix) => {
            if let Some(&bad) = ix.iter().find(|&&j| j >= width) {
                return Err(Error::format(
                    path,
                    format!("unknown column {bad}: table has {width} columns"),
                ));
            }
            ix.clone()
        }
        ColumnSelection::Names(names) => names
            .iter()
            .map(|n| {
                header
                    .iter()
                    .position(|h| h == n)
                    .ok_or_else(|| Error::format(path, format!("unknown column '{n}'")))
            })
            .collect::<Result<_>>()?,
    };
    if cols.is_empty() {
        return Err(Error::format(path, "no columns selected"));
    }
    Ok(cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn projects_selected_columns() {
        let f = write("1,2,3\n4,5,6\n");
        let rec = load_csv_channel(f.path(), &ColumnSelection::Indices(vec![0, 2]), false, 1).unwrap();
        assert_eq!(rec.frames.shape(), (2, 2));
        assert_eq!(rec.frames.row(1), &[4.0, 6.0]);
    }

    #[test]
    fn header_is_skipped_and_names_resolve() {
        let f = write("a,b,c\n1,2,3\n4,5,6\n");
        let rec = load_csv_channel(f.path(), &ColumnSelection::All, true, 0).unwrap();
        assert_eq!(rec.frames.rows(), 2);
        let rec = load_csv_channel(f.path(), &ColumnSelection::Names(vec!["c".into()]), true, 0)
            .unwrap();
        assert_eq!(rec.frames.column(0), vec![3.0, 6.0]);
        assert!(load_csv_channel(f.path(), &ColumnSelection::Names(vec!["z".into()]), true, 0).is_err());
    }

    #[test]
    fn unknown_index_and_ragged_rows() {
        let f = write("1,2,3,4\n5,6,7,8\n");
        let err = load_csv_channel(f.path(), &ColumnSelection::Indices(vec![5]), false, 0).unwrap_err();
        assert!(err.to_string().contains("unknown column 5"));
        let g = write("1,2,3\n4,5\n");
        let err = load_csv_channel(g.path(), &ColumnSelection::All, false, 0).unwrap_err();
        assert!(err.to_string().contains("ragged"));
    }
}
