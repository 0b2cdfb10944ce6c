//! Classification performance, group fairness gaps and the FATE trade-off score.
//!
//! Fairness gaps are one-vs-rest per class and summed over classes:
//!
//! ```text
//! EOpp1 = Σ_c |TPR_c,0 − TPR_c,1|
//! EOpp0 = Σ_c |TNR_c,0 − TNR_c,1|
//! EOdd  = Σ_c |TPR_c,0 − TPR_c,1| + |FPR_c,0 − FPR_c,1|
//! ```
//!
//! FATE compares an enhanced model `e` against a baseline `b`:
//! `(ACC_e − ACC_b)/ACC_b − λ (FC_e − FC_b)/FC_b`. Positive is favorable.
//!
//! Prediction dump CSV schema: `id,y,yhat,a,q_0,...,q_{U-1}`.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::losses::PROB_TOL;
use crate::model::{argmax, Network};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: u64,
    pub y: usize,
    pub yhat: usize,
    pub attr: u8,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionDump {
    num_classes: usize,
    rows: Vec<Prediction>,
}

impl PredictionDump {
    pub fn new(num_classes: usize, rows: Vec<Prediction>) -> Result<Self> {
        for r in &rows {
            if r.y >= num_classes || r.yhat >= num_classes || r.q.len() != num_classes {
                return Err(Error::InvalidInput(format!(
                    "prediction {} inconsistent with {num_classes} classes",
                    r.id
                )));
            }
            if r.attr > 1 {
                return Err(Error::InvalidInput(format!(
                    "prediction {} has attr {}",
                    r.id, r.attr
                )));
            }
            let sum: f64 = r.q.iter().sum();
            if (sum - 1.0).abs() > PROB_TOL || r.q.iter().any(|&p| !(p >= 0.0)) {
                return Err(Error::InvalidInput(format!(
                    "prediction {} probabilities are not normalized (sum {sum})",
                    r.id
                )));
            }
        }
        Ok(Self { num_classes, rows })
    }

    /// Predictions of `net` on `samples`, with `yhat = argmax q`.
    pub fn from_network(net: &Network, samples: &[Sample]) -> Result<Self> {
        let x = crate::data::features_tensor(samples)?;
        let q = net.predict_proba(&x)?;
        let rows = samples
            .iter()
            .enumerate()
            .map(|(i, s)| Prediction {
                id: s.id,
                y: s.label,
                yhat: argmax(q.row(i)),
                attr: s.attr,
                q: q.row(i).to_vec(),
            })
            .collect();
        Self::new(net.num_classes(), rows)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn rows(&self) -> &[Prediction] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["id".to_string(), "y".into(), "yhat".into(), "a".into()];
        header.extend((0..self.num_classes).map(|c| format!("q_{c}")));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.id.to_string(),
                r.y.to_string(),
                r.yhat.to_string(),
                r.attr.to_string(),
            ];
            rec.extend(r.q.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let display = path.display().to_string();
        let bad = |line: usize, message: String| Error::Parse {
            path: display.clone(),
            line,
            message,
        };
        let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
        let header = reader.headers()?.clone();
        let fixed = ["id", "y", "yhat", "a"];
        if header.len() < 6 || header.iter().take(4).ne(fixed.iter().copied()) {
            return Err(bad(1, "header must be id,y,yhat,a,q_0,...".into()));
        }
        let num_classes = header.len() - 4;
        for (c, name) in header.iter().skip(4).enumerate() {
            if name != format!("q_{c}") {
                return Err(bad(1, format!("expected column q_{c}, found {name}")));
            }
        }
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            if rec.len() != header.len() {
                return Err(bad(
                    line,
                    format!("expected {} fields, found {}", header.len(), rec.len()),
                ));
            }
            let int = |k: usize| {
                rec[k]
                    .trim()
                    .parse::<u64>()
                    .map_err(|e| bad(line, format!("{}: {e}", fixed[k])))
            };
            let q = rec
                .iter()
                .skip(4)
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| bad(line, format!("q: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(Prediction {
                id: int(0)?,
                y: int(1)? as usize,
                yhat: int(2)? as usize,
                attr: int(3)? as u8,
                q,
            });
        }
        Self::new(num_classes, rows)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Performance {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fairness {
    pub eopp0: f64,
    pub eopp1: f64,
    pub eodd: f64,
    /// Classes left out because a group lacked positives or negatives.
    pub skipped_classes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub eopp0: f64,
    pub eopp1: f64,
    pub eodd: f64,
    pub num_samples: usize,
    pub skipped_classes: Vec<usize>,
}

impl MetricsReport {
    pub fn criterion(&self, c: Criterion) -> f64 {
        match c {
            Criterion::EOpp0 => self.eopp0,
            Criterion::EOpp1 => self.eopp1,
            Criterion::EOdd => self.eodd,
        }
    }
}

/// Accuracy plus macro precision, recall and F1.
///
/// A class that is never predicted has precision 0. A class absent from the
/// true labels is left out of the recall and F1 means.
pub fn performance(dump: &PredictionDump) -> Result<Performance> {
    if dump.is_empty() {
        return Err(Error::InvalidInput("empty prediction dump".into()));
    }
    let u = dump.num_classes;
    let mut tp = vec![0usize; u];
    let mut predicted = vec![0usize; u];
    let mut actual = vec![0usize; u];
    for r in &dump.rows {
        predicted[r.yhat] += 1;
        actual[r.y] += 1;
        if r.y == r.yhat {
            tp[r.y] += 1;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision: Vec<f64> = (0..u).map(|c| ratio(tp[c], predicted[c])).collect();
    let present: Vec<usize> = (0..u).filter(|&c| actual[c] > 0).collect();
    let recall = |c: usize| ratio(tp[c], actual[c]);
    let f1 = |c: usize| {
        let (p, r) = (precision[c], recall(c));
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    };
    let mean = |v: &mut dyn Iterator<Item = f64>, n: usize| v.sum::<f64>() / n as f64;
    Ok(Performance {
        accuracy: ratio(tp.iter().sum(), dump.len()),
        precision: mean(&mut precision.iter().copied(), u),
        recall: mean(&mut present.iter().map(|&c| recall(c)), present.len()),
        f1: mean(&mut present.iter().map(|&c| f1(c)), present.len()),
    })
}

/// One-vs-rest TPR/TNR per group for class `c`, or `None` if undefined.
fn class_rates(dump: &PredictionDump, c: usize) -> Option<[(f64, f64); 2]> {
    let mut counts = [[0usize; 4]; 2]; // pos, tp, neg, tn
    for r in &dump.rows {
        let g = &mut counts[r.attr as usize];
        if r.y == c {
            g[0] += 1;
            g[1] += (r.yhat == c) as usize;
        } else {
            g[2] += 1;
            g[3] += (r.yhat != c) as usize;
        }
    }
    if counts.iter().any(|g| g[0] == 0 || g[2] == 0) {
        return None;
    }
    let rates = |g: [usize; 4]| (g[1] as f64 / g[0] as f64, g[3] as f64 / g[2] as f64);
    Some([rates(counts[0]), rates(counts[1])])
}

pub fn fairness(dump: &PredictionDump) -> Result<Fairness> {
    for a in [0u8, 1] {
        if !dump.rows.iter().any(|r| r.attr == a) {
            return Err(Error::InvalidInput(format!(
                "sensitive group {a} missing from prediction dump"
            )));
        }
    }
    let mut out = Fairness {
        eopp0: 0.0,
        eopp1: 0.0,
        eodd: 0.0,
        skipped_classes: Vec::new(),
    };
    for c in 0..dump.num_classes {
        let Some([(tpr0, tnr0), (tpr1, tnr1)]) = class_rates(dump, c) else {
            log::warn!(
                "class {c} lacks positives or negatives in a group; skipped in fairness gaps"
            );
            out.skipped_classes.push(c);
            continue;
        };
        let tpr_gap = (tpr0 - tpr1).abs();
        let tnr_gap = (tnr0 - tnr1).abs();
        let fpr_gap = ((1.0 - tnr0) - (1.0 - tnr1)).abs();
        out.eopp1 += tpr_gap;
        out.eopp0 += tnr_gap;
        out.eodd += tpr_gap + fpr_gap;
    }
    Ok(out)
}

pub fn evaluate(dump: &PredictionDump) -> Result<MetricsReport> {
    let p = performance(dump)?;
    let f = fairness(dump)?;
    Ok(MetricsReport {
        accuracy: p.accuracy,
        precision: p.precision,
        recall: p.recall,
        f1: p.f1,
        eopp0: f.eopp0,
        eopp1: f.eopp1,
        eodd: f.eodd,
        num_samples: dump.len(),
        skipped_classes: f.skipped_classes,
    })
}

/// Accuracy restricted to one sensitive group; `None` when the group is absent.
pub fn group_accuracy(dump: &PredictionDump, attr: u8) -> Option<f64> {
    let rows: Vec<_> = dump.rows.iter().filter(|r| r.attr == attr).collect();
    if rows.is_empty() {
        return None;
    }
    Some(rows.iter().filter(|r| r.y == r.yhat).count() as f64 / rows.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Criterion {
    EOpp0,
    EOpp1,
    EOdd,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::EOpp0, Criterion::EOpp1, Criterion::EOdd];
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::EOpp0 => "EOpp0",
            Criterion::EOpp1 => "EOpp1",
            Criterion::EOdd => "EOdd",
        })
    }
}

pub const DEFAULT_FATE_LAMBDA: f64 = 1.0;

pub fn fate(acc_e: f64, fc_e: f64, acc_b: f64, fc_b: f64, lambda: f64) -> Result<f64> {
    if !(acc_b > 0.0) {
        return Err(Error::InvalidInput(format!(
            "baseline accuracy must be positive, got {acc_b}"
        )));
    }
    if !(fc_b > 0.0) {
        return Err(Error::InvalidInput(format!(
            "baseline fairness criterion must be positive, got {fc_b}; relative change undefined"
        )));
    }
    Ok((acc_e - acc_b) / acc_b - lambda * (fc_e - fc_b) / fc_b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FateEntry {
    pub criterion: Criterion,
    pub acc_e: f64,
    pub acc_b: f64,
    pub fc_e: f64,
    pub fc_b: f64,
    pub lambda: f64,
    pub fate: f64,
}

impl FateEntry {
    pub fn new(
        criterion: Criterion,
        acc_e: f64,
        fc_e: f64,
        acc_b: f64,
        fc_b: f64,
        lambda: f64,
    ) -> Result<Self> {
        Ok(Self {
            criterion,
            acc_e,
            acc_b,
            fc_e,
            fc_b,
            lambda,
            fate: fate(acc_e, fc_e, acc_b, fc_b, lambda)?,
        })
    }

    pub fn recompute(&self) -> Result<f64> {
        fate(self.acc_e, self.fc_e, self.acc_b, self.fc_b, self.lambda)
    }

    /// Score ×100, as printed in result tables.
    pub fn scaled(&self) -> f64 {
        self.fate * 100.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FateReport {
    pub lambda: f64,
    pub entries: Vec<FateEntry>,
}

impl FateReport {
    pub fn compare(
        enhanced: &MetricsReport,
        baseline: &MetricsReport,
        lambda: f64,
    ) -> Result<Self> {
        let entries = Criterion::ALL
            .iter()
            .map(|&c| {
                FateEntry::new(
                    c,
                    enhanced.accuracy,
                    enhanced.criterion(c),
                    baseline.accuracy,
                    baseline.criterion(c),
                    lambda,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { lambda, entries })
    }

    pub fn get(&self, c: Criterion) -> Option<&FateEntry> {
        self.entries.iter().find(|e| e.criterion == c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(y: usize, yhat: usize, attr: u8) -> Prediction {
        let mut q = vec![0.0; 2];
        q[yhat] = 1.0;
        Prediction {
            id: 0,
            y,
            yhat,
            attr,
            q,
        }
    }

    /// Rows with the given counts of (y, yhat) pairs in one group.
    fn confusion(attr: u8, tp: usize, fn_: usize, fp: usize, tn: usize) -> Vec<Prediction> {
        let mut rows = Vec::new();
        rows.extend((0..tp).map(|_| pred(1, 1, attr)));
        rows.extend((0..fn_).map(|_| pred(1, 0, attr)));
        rows.extend((0..fp).map(|_| pred(0, 1, attr)));
        rows.extend((0..tn).map(|_| pred(0, 0, attr)));
        rows
    }

    #[test]
    fn perfect_predictions() {
        let mut rows = confusion(0, 5, 0, 0, 5);
        rows.extend(confusion(1, 3, 0, 0, 4));
        let p = performance(&PredictionDump::new(2, rows).unwrap()).unwrap();
        assert_eq!(
            p,
            Performance {
                accuracy: 1.0,
                precision: 1.0,
                recall: 1.0,
                f1: 1.0
            }
        );
    }

    #[test]
    fn hand_confusion_table() {
        let dump = PredictionDump::new(2, confusion(0, 3, 1, 1, 3)).unwrap();
        let p = performance(&dump).unwrap();
        for v in [p.accuracy, p.precision, p.recall, p.f1] {
            assert!((v - 0.75).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_predictor_on_balanced_set() {
        let dump = PredictionDump::new(2, confusion(0, 5, 0, 5, 0)).unwrap();
        let p = performance(&dump).unwrap();
        assert_eq!(p.accuracy, 0.5);
        assert_eq!(p.precision, 0.25);
        assert_eq!(p.recall, 0.5);
    }

    #[test]
    fn absent_class_excluded_from_recall() {
        let mut rows = vec![pred(0, 0, 0), pred(0, 1, 0)];
        for r in &mut rows {
            r.q = vec![0.0; 3];
            r.q[r.yhat] = 1.0;
        }
        let p = performance(&PredictionDump::new(3, rows).unwrap()).unwrap();
        assert_eq!(p.recall, 0.5);
        assert!((p.precision - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_dump_rejected() {
        assert!(performance(&PredictionDump::new(2, vec![]).unwrap()).is_err());
    }

    #[test]
    fn constructed_gaps() {
        // group 0: TPR 0.9, TNR 0.8; group 1: TPR 0.7, TNR 0.9
        let mut rows = confusion(0, 9, 1, 2, 8);
        rows.extend(confusion(1, 7, 3, 1, 9));
        let dump = PredictionDump::new(2, rows.clone()).unwrap();
        let f = fairness(&dump).unwrap();
        assert!((f.eopp1 - 0.3).abs() < 1e-12);
        assert!((f.eopp0 - 0.3).abs() < 1e-12);
        assert!((f.eodd - 0.6).abs() < 1e-12);

        for r in &mut rows {
            r.attr = 1 - r.attr;
        }
        let swapped = fairness(&PredictionDump::new(2, rows).unwrap()).unwrap();
        assert!((swapped.eopp1 - f.eopp1).abs() < 1e-15);
        assert!((swapped.eodd - f.eodd).abs() < 1e-15);
    }

    #[test]
    fn identical_rates_give_zero_gaps() {
        let mut rows = confusion(0, 6, 2, 1, 3);
        rows.extend(confusion(1, 12, 4, 2, 6));
        let f = fairness(&PredictionDump::new(2, rows).unwrap()).unwrap();
        assert_eq!((f.eopp0, f.eopp1, f.eodd), (0.0, 0.0, 0.0));
    }

    #[test]
    fn missing_group_rejected_and_degenerate_class_skipped() {
        assert!(fairness(&PredictionDump::new(2, confusion(0, 3, 1, 1, 3)).unwrap()).is_err());
        // group 1 has no class-1 positives
        let mut rows = confusion(0, 3, 1, 1, 3);
        rows.extend(confusion(1, 0, 0, 1, 3));
        let f = fairness(&PredictionDump::new(2, rows).unwrap()).unwrap();
        assert_eq!(f.skipped_classes, vec![0, 1]);
        assert_eq!(f.eodd, 0.0);
    }

    #[test]
    fn fate_values() {
        assert_eq!(fate(0.8, 0.1, 0.8, 0.1, 1.0).unwrap(), 0.0);
        let e0 = fate(84.72, 0.48, 87.53, 1.00, 1.0).unwrap();
        assert!((e0 * 100.0 - 48.79).abs() < 0.005);
        let e0 = fate(83.16, 0.61, 87.53, 1.00, 1.0).unwrap();
        assert!((e0 * 100.0 - 34.01).abs() < 0.005);
        assert!(fate(0.9, 0.1, 0.9, 0.0, 1.0).is_err());
        assert!(fate(0.9, 0.1, 0.0, 0.1, 1.0).is_err());
    }

    #[test]
    fn dump_csv_round_trip() {
        let mut rows = confusion(0, 2, 1, 1, 2);
        rows.extend(confusion(1, 1, 1, 1, 1));
        for (i, r) in rows.iter_mut().enumerate() {
            r.id = i as u64;
            r.q = vec![0.3 + 0.01 * i as f64, 0.7 - 0.01 * i as f64];
            r.yhat = argmax(&r.q);
        }
        let dump = PredictionDump::new(2, rows).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pred.csv");
        dump.write_csv(&path).unwrap();
        assert_eq!(PredictionDump::read_csv(&path).unwrap(), dump);
        assert!(matches!(
            PredictionDump::read_csv(&dir.path().join("missing.csv")),
            Err(Error::MissingFile(_))
        ));
    }
}
