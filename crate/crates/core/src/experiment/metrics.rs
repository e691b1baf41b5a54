use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numkit::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    /// `None` when the class has no positives or no negatives in the test set.
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    /// `None` for classes absent from the true labels.
    pub per_class_accuracy: Vec<Option<f64>>,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
    pub roc: Vec<RocCurve>,
}

impl MetricsReport {
    pub fn classes(&self) -> usize {
        self.confusion.len()
    }

    pub fn confusion_csv(&self) -> String {
        let c = self.classes();
        let mut s = String::from("true");
        for j in 0..c {
            let _ = write!(s, ",pred_{j}");
        }
        s.push('\n');
        for (i, row) in self.confusion.iter().enumerate() {
            let _ = write!(s, "{i}");
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn roc_csv(&self, class: usize) -> String {
        let mut s = String::from("fpr,tpr\n");
        for (f, t) in &self.roc[class].points {
            let _ = writeln!(s, "{f},{t}");
        }
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| x.to_string())
}

/// `metric,value` rows; extra rows are appended verbatim.
pub fn metrics_csv(report: &MetricsReport, n_test: usize, extra: &[(String, String)]) -> String {
    let mut s = String::from("metric,value\n");
    let _ = writeln!(s, "accuracy,{}", report.accuracy);
    let _ = writeln!(s, "n_test,{n_test}");
    for (c, a) in report.per_class_accuracy.iter().enumerate() {
        let _ = writeln!(s, "accuracy_class_{c},{}", opt(*a));
    }
    for (c, r) in report.roc.iter().enumerate() {
        let _ = writeln!(s, "auc_class_{c},{}", opt(r.auc));
    }
    for (k, v) in extra {
        let _ = writeln!(s, "{k},{v}");
    }
    s
}

/// Accuracy, confusion matrix and one-vs-rest ROC curves.
///
/// ROC scores for class `c` are margins `score_c − max_{j≠c} score_j`.
pub fn compute_metrics(truth: &[usize], predicted: &[usize], scores: &Matrix) -> Result<MetricsReport> {
    let n = truth.len();
    let c = scores.cols();
    if predicted.len() != n || scores.rows() != n {
        return Err(Error::shape(format!(
            "{n} labels, {} predictions, {} score rows",
            predicted.len(),
            scores.rows()
        )));
    }
    if n == 0 {
        return Err(Error::input("no samples to score"));
    }
    if c < 2 {
        return Err(Error::input("metrics need at least two classes"));
    }
    if let Some(&bad) = truth.iter().chain(predicted).find(|&&l| l >= c) {
        return Err(Error::input(format!("label {bad} out of range for {c} classes")));
    }
    let mut confusion = vec![vec![0usize; c]; c];
    for (&t, &p) in truth.iter().zip(predicted) {
        confusion[t][p] += 1;
    }
    let correct: usize = (0..c).map(|i| confusion[i][i]).sum();
    let per_class_accuracy = confusion
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let total: usize = row.iter().sum();
            (total > 0).then(|| row[i] as f64 / total as f64)
        })
        .collect();
    let roc = (0..c)
        .map(|class| {
            let margins: Vec<f64> = scores
                .row_iter()
                .map(|row| {
                    let other = row
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != class)
                        .map(|(_, &v)| v)
                        .fold(f64::NEG_INFINITY, f64::max);
                    row[class] - other
                })
                .collect();
            let positive: Vec<bool> = truth.iter().map(|&t| t == class).collect();
            roc_curve(&margins, &positive)
        })
        .collect();
    Ok(MetricsReport {
        accuracy: correct as f64 / n as f64,
        per_class_accuracy,
        confusion,
        roc,
    })
}

/// ROC over every distinct score threshold, AUC by the trapezoidal rule.
pub fn roc_curve(scores: &[f64], positive: &[bool]) -> RocCurve {
    let pos = positive.iter().filter(|&&p| p).count();
    let neg = positive.len() - pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let rate = |k: usize, total: usize| if total == 0 { 0.0 } else { k as f64 / total as f64 };
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((rate(fp, neg), rate(tp, pos)));
    }
    if points.last() != Some(&(1.0, 1.0)) && pos > 0 && neg > 0 {
        points.push((1.0, 1.0));
    }
    let auc = (pos > 0 && neg > 0).then(|| {
        points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
            .sum()
    });
    RocCurve { points, auc }
}

/// Parses a `label,predicted,score_0,…` table as written by an experiment run.
pub fn read_scores_csv(path: &Path) -> Result<(Vec<usize>, Vec<usize>, Matrix)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let header = reader.headers().map_err(|e| Error::format(path, e.to_string()))?.clone();
    if header.len() < 4 || &header[0] != "label" || &header[1] != "predicted" {
        return Err(Error::format(path, "expected header 'label,predicted,score_0,score_1,...'"));
    }
    let c = header.len() - 2;
    let mut truth = Vec::new();
    let mut pred = Vec::new();
    let mut scores = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
        let bad = |what: &str| Error::format(path, format!("row {}: bad {what}", i + 2));
        truth.push(rec[0].parse::<usize>().map_err(|_| bad("label"))?);
        pred.push(rec[1].parse::<usize>().map_err(|_| bad("prediction"))?);
        for j in 0..c {
            let v: f64 = rec[2 + j].parse().map_err(|_| bad("score"))?;
            scores.push(v);
        }
    }
    let n = truth.len();
    let scores = Matrix::new(n, c, scores).map_err(|_| Error::format(path, "non-finite score"))?;
    Ok((truth, pred, scores))
}

pub fn scores_csv(truth: &[usize], predicted: &[usize], scores: &Matrix) -> String {
    let mut s = String::from("label,predicted");
    for j in 0..scores.cols() {
        let _ = write!(s, ",score_{j}");
    }
    s.push('\n');
    for ((t, p), row) in truth.iter().zip(predicted).zip(scores.row_iter()) {
        let _ = write!(s, "{t},{p}");
        for v in row {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}
