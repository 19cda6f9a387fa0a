//! Segmentation scoring: confusion matrix, overall accuracy, and unweighted
//! per-class precision/recall means, with table and CSV reporting.

use std::path::Path;

use crate::dataset::{ClassLabel, LabelMap, CLASS_COUNT};
use crate::error::{Error, Result};

/// 6x6 pixel-count matrix; entry (g, p) counts pixels whose ground truth is
/// class g and prediction class p. Ground-truth ignore pixels are excluded
/// and tallied separately.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: [[u64; CLASS_COUNT]; CLASS_COUNT],
    ignored: u64,
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt][pred]
    }

    pub fn add(&mut self, gt: usize, pred: usize, count: u64) {
        self.counts[gt][pred] += count;
    }

    /// Pixels skipped because their ground truth carried the ignore label.
    pub fn ignored(&self) -> u64 {
        self.ignored
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..CLASS_COUNT).map(|c| self.counts[c][c]).sum()
    }

    pub fn row_sum(&self, gt: usize) -> u64 {
        self.counts[gt].iter().sum()
    }

    pub fn col_sum(&self, pred: usize) -> u64 {
        (0..CLASS_COUNT).map(|g| self.counts[g][pred]).sum()
    }

    /// Merge counts from another matrix (e.g. per-image matrices computed in
    /// parallel).
    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for g in 0..CLASS_COUNT {
            for p in 0..CLASS_COUNT {
                self.counts[g][p] += other.counts[g][p];
            }
        }
        self.ignored += other.ignored;
    }
}

/// Tally predictions against ground truth. Ground-truth ignore pixels are
/// skipped; a prediction carrying the ignore label on a scored pixel is an
/// error, since the classifier vocabulary has no such class.
pub fn confusion_matrix(pred: &LabelMap, gt: &LabelMap) -> Result<ConfusionMatrix> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::dims(
            (gt.width(), gt.height()),
            (pred.width(), pred.height()),
            "prediction vs ground truth",
        ));
    }
    let mut cm = ConfusionMatrix::new();
    for v in 0..gt.height() {
        for u in 0..gt.width() {
            let Some(g) = gt.get(u, v).class_index() else {
                cm.ignored += 1;
                continue;
            };
            let Some(p) = pred.get(u, v).class_index() else {
                return Err(Error::InvalidParams(format!(
                    "prediction carries ignore label at ({u}, {v})"
                )));
            };
            cm.counts[g][p] += 1;
        }
    }
    Ok(cm)
}

/// Correctly labelled pixels divided by all labelled pixels.
pub fn overall_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::UndefinedMetric("no scored pixels".into()));
    }
    Ok(cm.trace() as f64 / total as f64)
}

/// Unweighted means of per-class precision and recall.
///
/// A class with an empty prediction column has no precision and one with an
/// empty ground-truth row has no recall; such classes are excluded from the
/// corresponding mean (not scored as zero) and reported via the counts in
/// [`MetricsReport`].
pub fn mean_avg_precision_recall(cm: &ConfusionMatrix) -> Result<(f64, f64)> {
    let report = MetricsReport::from_confusion("".into(), cm)?;
    Ok((report.mean_avg_precision, report.mean_avg_recall))
}

/// Scores of one dataset variant, ready for tabulation.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// Variant tag, e.g. "RGBH (SGBM)".
    pub variant: String,
    pub overall_accuracy: f64,
    pub per_class_precision: [Option<f64>; CLASS_COUNT],
    pub per_class_recall: [Option<f64>; CLASS_COUNT],
    pub mean_avg_precision: f64,
    pub mean_avg_recall: f64,
    /// Classes excluded from the precision / recall means.
    pub undefined_precision_classes: usize,
    pub undefined_recall_classes: usize,
}

impl MetricsReport {
    pub fn from_confusion(variant: String, cm: &ConfusionMatrix) -> Result<Self> {
        let overall = overall_accuracy(cm)?;
        let mut precision = [None; CLASS_COUNT];
        let mut recall = [None; CLASS_COUNT];
        for c in 0..CLASS_COUNT {
            let col = cm.col_sum(c);
            if col > 0 {
                precision[c] = Some(cm.get(c, c) as f64 / col as f64);
            }
            let row = cm.row_sum(c);
            if row > 0 {
                recall[c] = Some(cm.get(c, c) as f64 / row as f64);
            }
        }
        let mean = |vals: &[Option<f64>; CLASS_COUNT]| -> Option<f64> {
            let defined: Vec<f64> = vals.iter().flatten().copied().collect();
            (!defined.is_empty())
                .then(|| defined.iter().sum::<f64>() / defined.len() as f64)
        };
        let (Some(map), Some(mar)) = (mean(&precision), mean(&recall)) else {
            return Err(Error::UndefinedMetric(
                "no class has a defined precision or recall".into(),
            ));
        };
        Ok(Self {
            variant,
            overall_accuracy: overall,
            undefined_precision_classes: precision.iter().filter(|p| p.is_none()).count(),
            undefined_recall_classes: recall.iter().filter(|r| r.is_none()).count(),
            per_class_precision: precision,
            per_class_recall: recall,
            mean_avg_precision: map,
            mean_avg_recall: mar,
        })
    }
}

const CSV_HEADER: &str = "variant,overall_accuracy,mean_avg_precision,mean_avg_recall,\
undefined_precision_classes,undefined_recall_classes,\
p_sky,p_water,p_dirt,p_grass,p_bush,p_tree,r_sky,r_water,r_dirt,r_grass,r_bush,r_tree";

/// One report per line; undefined per-class entries stay empty.
pub fn write_metrics_csv(reports: &[MetricsReport], path: &Path) -> Result<()> {
    let mut text = String::from(CSV_HEADER);
    text.push('\n');
    for r in reports {
        let fmt_opt = |o: Option<f64>| o.map(|v| format!("{v:.6}")).unwrap_or_default();
        let mut fields = vec![
            r.variant.clone(),
            format!("{:.6}", r.overall_accuracy),
            format!("{:.6}", r.mean_avg_precision),
            format!("{:.6}", r.mean_avg_recall),
            r.undefined_precision_classes.to_string(),
            r.undefined_recall_classes.to_string(),
        ];
        fields.extend(r.per_class_precision.iter().map(|&p| fmt_opt(p)));
        fields.extend(r.per_class_recall.iter().map(|&p| fmt_opt(p)));
        text.push_str(&fields.join(","));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io_at(path, e))?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsReport>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        _ => return Err(Error::format(path, "missing or unexpected header")),
    }
    let mut reports = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 18 {
            return Err(Error::format(path, format!("line {}: want 18 fields", ln + 2)));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::format(path, format!("bad number '{s}'")))
        };
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() { Ok(None) } else { num(s).map(Some) }
        };
        let mut precision = [None; CLASS_COUNT];
        let mut recall = [None; CLASS_COUNT];
        for c in 0..CLASS_COUNT {
            precision[c] = opt(fields[6 + c])?;
            recall[c] = opt(fields[12 + c])?;
        }
        reports.push(MetricsReport {
            variant: fields[0].to_string(),
            overall_accuracy: num(fields[1])?,
            mean_avg_precision: num(fields[2])?,
            mean_avg_recall: num(fields[3])?,
            undefined_precision_classes: fields[4]
                .parse()
                .map_err(|_| Error::format(path, "bad count"))?,
            undefined_recall_classes: fields[5]
                .parse()
                .map_err(|_| Error::format(path, "bad count"))?,
            per_class_precision: precision,
            per_class_recall: recall,
        })
    }
    Ok(reports)
}

/// Aligned text table with one row per variant and the three headline
/// metrics; the best value in each column is marked with `*` (ties share
/// the mark).
pub fn format_report(reports: &[MetricsReport]) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let columns: [(&str, fn(&MetricsReport) -> f64); 3] = [
        ("Overall Accuracy", |r| r.overall_accuracy),
        ("Mean Average Precision", |r| r.mean_avg_precision),
        ("Mean Average Recall", |r| r.mean_avg_recall),
    ];
    let mut best = [f64::NEG_INFINITY; 3];
    for r in reports {
        for (i, (_, f)) in columns.iter().enumerate() {
            best[i] = best[i].max(f(r));
        }
    }
    let name_width =
        reports.iter().map(|r| r.variant.len()).max().unwrap().max("Input format".len());
    let mut out = String::new();
    out.push_str(&format!("{:<name_width$}", "Input format"));
    for (title, _) in &columns {
        out.push_str(&format!("  {title:>22}"));
    }
    out.push('\n');
    for r in reports {
        out.push_str(&format!("{:<name_width$}", r.variant));
        for (i, (_, f)) in columns.iter().enumerate() {
            let v = f(r);
            let cell =
                if v == best[i] { format!("*{v:.4}") } else { format!("{v:.4}") };
            out.push_str(&format!("  {cell:>22}"));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Score one prediction/ground-truth pair as a single-variant report.
pub fn score_pair(pred: &LabelMap, gt: &LabelMap, variant: &str) -> Result<MetricsReport> {
    let cm = confusion_matrix(pred, gt)?;
    MetricsReport::from_confusion(variant.to_string(), &cm)
}
