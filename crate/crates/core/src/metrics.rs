//! Evaluation metrics: per-label Dice overlap, binary confusion counts,
//! recall/specificity, Cohen's kappa, and grouped mean/std aggregation.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::tensor::{LabelMap, Result, TensorError};

/// Binary confusion counts; positive = diseased.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix2 {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fneg: u64,
}

impl ConfusionMatrix2 {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fneg
    }

    /// Recall, `tp / (tp + fn)`; `None` without positives in truth.
    pub fn tpr(&self) -> Option<f64> {
        let denom = self.tp + self.fneg;
        (denom > 0).then(|| self.tp as f64 / denom as f64)
    }

    /// Specificity, `tn / (tn + fp)`; `None` without negatives in truth.
    pub fn tnr(&self) -> Option<f64> {
        let denom = self.tn + self.fp;
        (denom > 0).then(|| self.tn as f64 / denom as f64)
    }
}

/// Dice overlap of label `k`: `2 |pred=k AND truth=k| / (|pred=k| + |truth=k|)`,
/// with 1 when both masks are empty.
pub fn dice(pred: &LabelMap, truth: &LabelMap, label: u8) -> Result<f64> {
    if pred.height() != truth.height() || pred.width() != truth.width() {
        return Err(TensorError::ShapeMismatch {
            context: "dice",
            expected: format!("{}x{}", truth.height(), truth.width()),
            got: format!("{}x{}", pred.height(), pred.width()),
        });
    }
    let mut inter = 0u64;
    let mut pa = 0u64;
    let mut ta = 0u64;
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        let pm = p == label;
        let tm = t == label;
        inter += u64::from(pm && tm);
        pa += u64::from(pm);
        ta += u64::from(tm);
    }
    if pa + ta == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (pa + ta) as f64)
}

/// Count the four confusion cells of binary predictions.
pub fn confusion(predictions: &[u8], truths: &[u8]) -> Result<ConfusionMatrix2> {
    if predictions.len() != truths.len() || predictions.is_empty() {
        return Err(TensorError::Usage(format!(
            "confusion: {} predictions vs {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    let mut cm = ConfusionMatrix2::default();
    for (&p, &t) in predictions.iter().zip(truths) {
        match (t, p) {
            (1, 1) => cm.tp += 1,
            (0, 1) => cm.fp += 1,
            (0, 0) => cm.tn += 1,
            (1, 0) => cm.fneg += 1,
            _ => return Err(TensorError::Usage("confusion: labels must be 0 or 1".into())),
        }
    }
    Ok(cm)
}

/// Cohen's kappa, `(p_o - p_e) / (1 - p_e)`. The degenerate chance
/// agreement `p_e = 1` maps to 1 for perfect observed agreement and 0
/// otherwise.
pub fn cohens_kappa(cm: &ConfusionMatrix2) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(TensorError::Usage("cohens_kappa: empty confusion matrix".into()));
    }
    let total = total as f64;
    let p_o = (cm.tp + cm.tn) as f64 / total;
    let p_e = ((cm.tp + cm.fp) as f64 * (cm.tp + cm.fneg) as f64
        + (cm.fneg + cm.tn) as f64 * (cm.fp + cm.tn) as f64)
        / (total * total);
    if (1.0 - p_e).abs() < 1e-15 {
        return Ok(if (p_o - 1.0).abs() < 1e-15 { 1.0 } else { 0.0 });
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// One evaluation row of the unbalanced sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub disease: String,
    pub mode: String,
    pub n_pos_train: usize,
    pub repetition: usize,
    pub tpr: f64,
    pub tnr: f64,
    pub kappa: f64,
}

/// Mean and sample (n-1) standard deviation; a single value has std 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    assert!(!values.is_empty(), "mean_std of empty slice");
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregated statistics of one `(disease, mode, n_pos_train)` group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats {
    pub disease: String,
    pub mode: String,
    pub n_pos_train: usize,
    pub count: usize,
    pub tpr: (f64, f64),
    pub tnr: (f64, f64),
    pub kappa: (f64, f64),
}

/// Group records by `(disease, mode, n_pos_train)` and report mean +/- std
/// per metric, sorted by key.
pub fn aggregate(records: &[MetricsRecord]) -> Result<Vec<GroupStats>> {
    if records.is_empty() {
        return Err(TensorError::Usage("aggregate: no records".into()));
    }
    let mut groups: BTreeMap<(String, String, usize), Vec<&MetricsRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.disease.clone(), r.mode.clone(), r.n_pos_train))
            .or_default()
            .push(r);
    }
    Ok(groups
        .into_iter()
        .map(|((disease, mode, n_pos_train), rs)| {
            let col = |f: fn(&MetricsRecord) -> f64| -> Vec<f64> { rs.iter().map(|r| f(r)).collect() };
            GroupStats {
                disease,
                mode,
                n_pos_train,
                count: rs.len(),
                tpr: mean_std(&col(|r| r.tpr)),
                tnr: mean_std(&col(|r| r.tnr)),
                kappa: mean_std(&col(|r| r.kappa)),
            }
        })
        .collect())
}

// ---------------------------------------------------------------------------
// CSV formats
// ---------------------------------------------------------------------------

pub const SWEEP_CSV_HEADER: &str = "disease,mode,n_pos_train,repetition,tpr,tnr,kappa";

pub fn write_sweep_csv<W: Write>(w: &mut W, records: &[MetricsRecord]) -> Result<()> {
    writeln!(w, "{SWEEP_CSV_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{:.6},{:.6},{:.6}",
            r.disease, r.mode, r.n_pos_train, r.repetition, r.tpr, r.tnr, r.kappa
        )?;
    }
    Ok(())
}

pub fn read_sweep_csv<R: Read>(r: &mut R) -> Result<Vec<MetricsRecord>> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != SWEEP_CSV_HEADER {
                return Err(TensorError::Format(format!("unexpected sweep.csv header: {line}")));
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(TensorError::Format(format!("sweep.csv line {i}: {} fields", fields.len())));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| TensorError::Format(format!("sweep.csv line {i}: bad number {s}")))
        };
        records.push(MetricsRecord {
            disease: fields[0].to_string(),
            mode: fields[1].to_string(),
            n_pos_train: fields[2]
                .parse()
                .map_err(|_| TensorError::Format(format!("sweep.csv line {i}: bad n_pos {}", fields[2])))?,
            repetition: fields[3]
                .parse()
                .map_err(|_| TensorError::Format(format!("sweep.csv line {i}: bad repetition {}", fields[3])))?,
            tpr: num(fields[4])?,
            tnr: num(fields[5])?,
            kappa: num(fields[6])?,
        });
    }
    Ok(records)
}

/// Dice table CSV: `fold,n,label,dice`.
pub fn write_dice_csv<W: Write>(w: &mut W, rows: &[(usize, usize, String, f64)]) -> Result<()> {
    writeln!(w, "fold,n,label,dice")?;
    for (fold, n, label, d) in rows {
        writeln!(w, "{fold},{n},{label},{d:.6}")?;
    }
    Ok(())
}

pub fn save_sweep_csv(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, records)?;
    std::fs::write(path, buf)?;
    Ok(())
}
