//! Confusion matrices, summary metrics, ROC / PR curves and error bars.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::ingest::Label;
use crate::{Error, Result};

pub const CI95_Z: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub positive_class: Label,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(truth: &[Label], predicted: &[Label], positive: Label) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: predicted.len(),
        });
    }
    let mut cm = ConfusionMatrix {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_: 0,
        positive_class: positive,
    };
    for (&t, &p) in truth.iter().zip(predicted) {
        match (t == positive, p == positive) {
            (true, true) => cm.tp += 1,
            (false, true) => cm.fp += 1,
            (false, false) => cm.tn += 1,
            (true, false) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

/// Undefined ratios (0/0) are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(Metrics {
        accuracy: (cm.tp + cm.tn) as f64 / total as f64,
        precision: ratio(cm.tp, cm.tp + cm.fp),
        sensitivity: ratio(cm.tp, cm.tp + cm.fn_),
        specificity: ratio(cm.tn, cm.tn + cm.fp),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Starts at (0, 0) with threshold +inf; `x` = FPR, `y` = TPR.
    pub points: Vec<CurvePoint>,
    pub auc: f64,
    /// Exact trapezoid area as `auc_num / auc_den` with
    /// `auc_den = 2 * positives * negatives`.
    pub auc_num: u128,
    pub auc_den: u128,
}

/// (threshold, cumulative positives, cumulative negatives) after each group
/// of tied scores, sweeping thresholds downward.
fn sweep(scores: &[f64], positive: &[bool]) -> Result<Vec<(f64, u64, u64)>> {
    if scores.len() != positive.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            found: positive.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if positive[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        out.push((s, tp, fp));
    }
    Ok(out)
}

fn positives(labels: &[Label], positive: Label) -> Vec<bool> {
    labels.iter().map(|&l| l == positive).collect()
}

/// Higher scores mean "more positive".
pub fn roc_curve(scores: &[f64], labels: &[Label], positive: Label) -> Result<RocCurve> {
    let pos = positives(labels, positive);
    let p = pos.iter().filter(|&&b| b).count() as u64;
    let n = pos.len() as u64 - p;
    if p == 0 || n == 0 {
        return Err(Error::SingleClass);
    }
    let steps = sweep(scores, &pos)?;
    let mut points = vec![CurvePoint {
        threshold: f64::INFINITY,
        x: 0.0,
        y: 0.0,
    }];
    let mut num: u128 = 0;
    let (mut prev_tp, mut prev_fp) = (0u64, 0u64);
    for &(s, tp, fp) in &steps {
        num += (fp - prev_fp) as u128 * (tp + prev_tp) as u128;
        points.push(CurvePoint {
            threshold: s,
            x: fp as f64 / n as f64,
            y: tp as f64 / p as f64,
        });
        prev_tp = tp;
        prev_fp = fp;
    }
    let den = 2 * p as u128 * n as u128;
    Ok(RocCurve {
        points,
        auc: num as f64 / den as f64,
        auc_num: num,
        auc_den: den,
    })
}

/// Precision at each distinct threshold; `x` = recall, `y` = precision.
pub fn pr_curve(scores: &[f64], labels: &[Label], positive: Label) -> Result<Vec<CurvePoint>> {
    let pos = positives(labels, positive);
    let p = pos.iter().filter(|&&b| b).count() as u64;
    if p == 0 {
        return Err(Error::SingleClass);
    }
    Ok(sweep(scores, &pos)?
        .into_iter()
        .map(|(s, tp, fp)| CurvePoint {
            threshold: s,
            x: tp as f64 / p as f64,
            y: tp as f64 / (tp + fp) as f64,
        })
        .collect())
}

pub fn write_curve_csv<W: Write>(points: &[CurvePoint], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["threshold", "x", "y"])?;
    for p in points {
        out.write_record([
            format!("{:?}", p.threshold),
            format!("{:?}", p.x),
            format!("{:?}", p.y),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<curve writer>", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBar {
    pub mean: f64,
    pub standard_error: f64,
    pub n: usize,
    pub ci95: (f64, f64),
}

pub fn error_bar(values: &[f64]) -> Result<ErrorBar> {
    if values.len() < 2 {
        return Err(Error::invalid("error bar needs at least two values"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("error bar input".into()));
    }
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let se = (var / m).sqrt();
    Ok(ErrorBar {
        mean,
        standard_error: se,
        n: values.len(),
        ci95: (mean - CI95_Z * se, mean + CI95_Z * se),
    })
}

/// Disjoint 95% intervals.
pub fn significant(a: &ErrorBar, b: &ErrorBar) -> bool {
    a.ci95.1 < b.ci95.0 || b.ci95.1 < a.ci95.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use Label::{Gesture as G, NoGesture as N};

    fn labels_for(tp: usize, fn_: usize, tn: usize, fp: usize) -> (Vec<Label>, Vec<Label>) {
        let mut t = Vec::new();
        let mut p = Vec::new();
        for (n, tl, pl) in [(tp, G, G), (fn_, G, N), (tn, N, N), (fp, N, G)] {
            t.extend(std::iter::repeat_n(tl, n));
            p.extend(std::iter::repeat_n(pl, n));
        }
        (t, p)
    }

    #[test]
    fn counts_and_metrics() {
        let (t, p) = labels_for(90, 10, 80, 20);
        let cm = confusion(&t, &p, G).unwrap();
        assert_eq!((cm.tp, cm.fn_, cm.tn, cm.fp), (90, 10, 80, 20));
        let m = metrics(&cm).unwrap();
        assert_eq!(m.accuracy, 0.85);
        assert_eq!(m.precision, Some(90.0 / 110.0));
        assert!((m.precision.unwrap() - 0.81818).abs() < 5e-6);
        assert_eq!(m.sensitivity, Some(0.9));
        assert_eq!(m.specificity, Some(0.8));
    }

    #[test]
    fn undefined_ratios_are_none() {
        let (t, p) = labels_for(0, 5, 5, 0);
        let m = metrics(&confusion(&t, &p, G).unwrap()).unwrap();
        assert_eq!(m.sensitivity, Some(0.0));
        assert_eq!(m.precision, None);
        let (t, p) = labels_for(7, 0, 0, 0);
        let m = metrics(&confusion(&t, &p, G).unwrap()).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.specificity, None);
        assert!(confusion(&t, &p[1..], G).is_err());
        assert!(metrics(&confusion(&[], &[], G).unwrap()).is_err());
    }

    #[test]
    fn constant_positive_predictor() {
        let t = vec![G, N, N, G];
        let cm = confusion(&t, &[G; 4], G).unwrap();
        assert_eq!((cm.fn_, cm.tn), (0, 0));
    }

    #[test]
    fn perfect_separation() {
        let roc = roc_curve(&[0.9, 0.8, 0.2, 0.1], &[G, G, N, N], G).unwrap();
        assert_eq!(roc.auc, 1.0);
        assert_eq!(roc.points.last().map(|p| (p.x, p.y)), Some((1.0, 1.0)));
    }

    #[test]
    fn ties_are_one_step() {
        let roc = roc_curve(&[0.5, 0.5, 0.5, 0.5], &[G, N, G, N], G).unwrap();
        assert_eq!(roc.points.len(), 2);
        assert_eq!(roc.auc, 0.5);
    }

    #[test]
    fn random_scores_give_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20_000;
        let s: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let l: Vec<Label> = (0..n)
            .map(|_| if rng.random_bool(0.5) { G } else { N })
            .collect();
        let auc = roc_curve(&s, &l, G).unwrap().auc;
        assert!((auc - 0.5).abs() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn pr_curve_steps() {
        let pr = pr_curve(&[0.9, 0.8, 0.7], &[G, N, G], G).unwrap();
        assert_eq!(
            pr.iter().map(|p| (p.x, p.y)).collect::<Vec<_>>(),
            vec![(0.5, 1.0), (0.5, 0.5), (1.0, 2.0 / 3.0)]
        );
    }

    #[test]
    fn single_class_roc_is_an_error() {
        assert!(matches!(
            roc_curve(&[1.0, 2.0], &[G, G], G),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn error_bars() {
        let e = error_bar(&[80.0, 82.0, 84.0]).unwrap();
        assert_eq!(e.mean, 82.0);
        assert!((e.standard_error - 1.1547).abs() < 1e-4);
        assert!(e.ci95.0 <= e.mean && e.mean <= e.ci95.1);
        assert!(error_bar(&[1.0]).is_err());
        let a = ErrorBar {
            mean: 82.0,
            standard_error: 1.0,
            n: 3,
            ci95: (80.0, 84.0),
        };
        let b = ErrorBar {
            mean: 87.0,
            standard_error: 1.0,
            n: 3,
            ci95: (85.0, 89.0),
        };
        assert!(significant(&a, &b) && significant(&b, &a));
        let c = error_bar(&[1.0, 2.0, 4.0]).unwrap();
        assert!(!significant(&c, &c.clone()));
    }

    #[test]
    fn curve_csv_header() {
        let mut buf = Vec::new();
        write_curve_csv(
            &[CurvePoint {
                threshold: 1.0,
                x: 0.0,
                y: 0.5,
            }],
            &mut buf,
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "threshold,x,y\n1.0,0.0,0.5\n"
        );
    }
}
