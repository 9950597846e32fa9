//! ROC curves, AUC and accuracy. Fake is the positive class.

use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Points ordered by descending threshold, from `(+∞, 0, 0)` to
/// `(−∞, 1, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

fn class_counts(scores: &[f64], labels: &[Label]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::invalid(format!("score {s} is not a number")));
    }
    let pos = labels.iter().filter(|&&l| l == Label::Fake).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid(
            "ROC analysis needs both real and fake samples",
        ));
    }
    Ok((pos, neg))
}

/// One point per distinct score, a sample counting as fake when its score
/// is at or above the threshold. The lowest threshold classifies
/// everything as fake and is reported as `−∞`.
pub fn roc_curve(scores: &[f64], labels: &[Label]) -> Result<RocCurve> {
    let (pos, neg) = class_counts(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let t = scores[order[k]];
        while k < order.len() && scores[order[k]] == t {
            match labels[order[k]] {
                Label::Fake => tp += 1,
                Label::Real => fp += 1,
            }
            k += 1;
        }
        points.push(RocPoint {
            threshold: t,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    points.last_mut().expect("non-empty").threshold = f64::NEG_INFINITY;
    Ok(RocCurve { points })
}

impl RocCurve {
    /// Trapezoidal area.
    pub fn area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
            .sum()
    }

    /// `threshold,fpr,tpr` with `inf` / `-inf` sentinels.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,fpr,tpr\n");
        for p in &self.points {
            let t = if p.threshold == f64::INFINITY {
                "inf".to_string()
            } else if p.threshold == f64::NEG_INFINITY {
                "-inf".to_string()
            } else {
                p.threshold.to_string()
            };
            out.push_str(&format!("{t},{},{}\n", p.fpr, p.tpr));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("threshold,fpr,tpr") {
            return Err(Error::invalid(
                "ROC CSV must start with `threshold,fpr,tpr`",
            ));
        }
        let mut points = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let fields: Vec<&str> = line.trim().split(',').collect();
            let parse = |s: &str| -> Result<f64> {
                s.parse()
                    .map_err(|_| Error::invalid(format!("ROC CSV row {}: bad number `{s}`", i + 2)))
            };
            if fields.len() != 3 {
                return Err(Error::invalid(format!(
                    "ROC CSV row {}: expected 3 fields",
                    i + 2
                )));
            }
            points.push(RocPoint {
                threshold: parse(fields[0])?,
                fpr: parse(fields[1])?,
                tpr: parse(fields[2])?,
            });
        }
        Ok(Self { points })
    }
}

/// Probability that a random fake outscores a random real sample, ties
/// counted one half (Mann–Whitney U via midranks).
pub fn auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    let (pos, neg) = class_counts(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut k = 0;
    while k < order.len() {
        let mut end = k;
        while end + 1 < order.len() && scores[order[end + 1]] == scores[order[k]] {
            end += 1;
        }
        // ranks k+1 ..= end+1 share their mean
        let mid = (k + end + 2) as f64 / 2.0;
        rank_sum += mid
            * order[k..=end]
                .iter()
                .filter(|&&i| labels[i] == Label::Fake)
                .count() as f64;
        k = end + 1;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Fraction of samples whose thresholded score (fake when `≥ threshold`)
/// matches the label.
pub fn accuracy(scores: &[f64], labels: &[Label], threshold: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::invalid("accuracy of an empty prediction set"));
    }
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let correct = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &l)| (s >= threshold) == (l == Label::Fake))
        .count();
    Ok(correct as f64 / scores.len() as f64)
}

/// One train-domain → test-domain evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub train_domain: String,
    pub test_domain: String,
    pub auc: f64,
    pub accuracy: f64,
    pub n_real: usize,
    pub n_fake: usize,
    pub feature_source: String,
    pub checkpoint_hash: String,
    pub config_hash: String,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Fake, Real};

    fn xy(c: &RocCurve) -> Vec<(f64, f64)> {
        c.points.iter().map(|p| (p.fpr, p.tpr)).collect()
    }

    #[test]
    fn hand_example() {
        let s = [0.9, 0.8, 0.4, 0.3];
        let l = [Fake, Real, Fake, Real];
        let c = roc_curve(&s, &l).unwrap();
        assert_eq!(
            xy(&c),
            vec![(0.0, 0.0), (0.0, 0.5), (0.5, 0.5), (0.5, 1.0), (1.0, 1.0)]
        );
        assert_eq!(auc(&s, &l).unwrap(), 0.75);
        assert_eq!(c.area(), 0.75);
        assert_eq!(c.points[0].threshold, f64::INFINITY);
        assert_eq!(c.points[4].threshold, f64::NEG_INFINITY);
    }

    #[test]
    fn separated_and_constant_scores() {
        let l = [Real, Real, Fake, Fake];
        let c = roc_curve(&[0.1, 0.2, 0.8, 0.9], &l).unwrap();
        assert!(xy(&c).contains(&(0.0, 1.0)));
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &l).unwrap(), 1.0);
        let flat = roc_curve(&[0.5; 4], &l).unwrap();
        assert_eq!(xy(&flat), vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(auc(&[0.5; 4], &l).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(auc(&[0.1, 0.2], &[Fake, Fake]).is_err());
        assert!(roc_curve(&[0.1, 0.2], &[Real, Real]).is_err());
    }

    #[test]
    fn accuracy_examples() {
        let l = [Real, Fake, Fake];
        assert_eq!(accuracy(&[0.1, 0.9, 0.7], &l, 0.5).unwrap(), 1.0);
        let flipped = [Fake, Real, Real];
        let s = [0.1, 0.9, 0.3];
        let (a, b) = (
            accuracy(&s, &l, 0.5).unwrap(),
            accuracy(&s, &flipped, 0.5).unwrap(),
        );
        assert!((a - 2.0 / 3.0).abs() < 1e-12 && (a + b - 1.0).abs() < 1e-12);
        assert!(accuracy(&[], &[], 0.5).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let c = roc_curve(&[0.9, 0.8, 0.4, 0.3], &[Fake, Real, Fake, Real]).unwrap();
        let csv = c.to_csv();
        assert!(csv.starts_with("threshold,fpr,tpr\ninf,0,0\n"));
        assert!(csv.ends_with("-inf,1,1\n"));
        assert_eq!(RocCurve::from_csv(&csv).unwrap(), c);
    }
}
