//! IOB span decoding and exact-match micro precision/recall/F1.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{Span, WordLabel};
use crate::error::{Error, Result};

/// Spans from IOB tags. `B` always opens a span; `I` extends the open span or
/// opens one if none is open; `O` closes.
pub fn decode_spans(tags: &[WordLabel]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<usize> = None;
    for (i, tag) in tags.iter().enumerate() {
        match tag {
            WordLabel::B => {
                if let Some(s) = open.take() {
                    spans.push(Span::new(s, i - 1));
                }
                open = Some(i);
            }
            WordLabel::I => {
                open.get_or_insert(i);
            }
            WordLabel::O => {
                if let Some(s) = open.take() {
                    spans.push(Span::new(s, i - 1));
                }
            }
        }
    }
    if let Some(s) = open {
        spans.push(Span::new(s, tags.len() - 1));
    }
    spans
}

/// Pooled span counts and the scores derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub true_positives: usize,
    pub predicted: usize,
    pub gold: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl EvalReport {
    pub fn from_counts(true_positives: usize, predicted: usize, gold: usize) -> Self {
        let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        let precision = ratio(true_positives, predicted);
        let recall = ratio(true_positives, gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        EvalReport {
            true_positives,
            predicted,
            gold,
            precision,
            recall,
            f1,
        }
    }
}

/// Span lists for one example, keyed by example id.
pub type ExampleSpans = (String, Vec<Span>);

/// Exact-span micro F1. `predictions` and `gold` must list the same ids in
/// the same order.
pub fn micro_f1(predictions: &[ExampleSpans], gold: &[ExampleSpans]) -> Result<EvalReport> {
    if predictions.len() != gold.len() {
        return Err(Error::Misaligned(format!(
            "{} predictions for {} gold examples",
            predictions.len(),
            gold.len()
        )));
    }
    let (mut tp, mut n_pred, mut n_gold) = (0, 0, 0);
    for ((pid, pred), (gid, gold)) in predictions.iter().zip(gold) {
        if pid != gid {
            return Err(Error::Misaligned(format!("prediction {pid:?} paired with gold {gid:?}")));
        }
        let gold_set: HashSet<&Span> = gold.iter().collect();
        let pred_set: HashSet<&Span> = pred.iter().collect();
        tp += pred_set.iter().filter(|s| gold_set.contains(*s)).count();
        n_pred += pred_set.len();
        n_gold += gold_set.len();
    }
    Ok(EvalReport::from_counts(tp, n_pred, n_gold))
}

pub fn average_runs(f1s: &[f64]) -> f64 {
    if f1s.is_empty() {
        return 0.0;
    }
    f1s.iter().sum::<f64>() / f1s.len() as f64
}

/// Per-run reports of one configuration plus their mean F1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub runs: Vec<EvalReport>,
    pub mean_f1: f64,
}

impl AggregateReport {
    pub fn new(runs: Vec<EvalReport>) -> Self {
        let mean_f1 = average_runs(&runs.iter().map(|r| r.f1).collect::<Vec<_>>());
        AggregateReport { runs, mean_f1 }
    }
}

impl fmt::Display for AggregateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<6} {:>6} {:>6} {:>6} {:>8} {:>8} {:>8}",
            "run", "tp", "pred", "gold", "P", "R", "F1"
        )?;
        for (i, r) in self.runs.iter().enumerate() {
            writeln!(
                f,
                "{:<6} {:>6} {:>6} {:>6} {:>8} {:>8} {:>8}",
                i + 1,
                r.true_positives,
                r.predicted,
                r.gold,
                percent(r.precision),
                percent(r.recall),
                percent(r.f1)
            )?;
        }
        write!(f, "{:<6} {:>47}", "mean", percent(self.mean_f1))
    }
}

/// Fraction rendered as a percentage with two decimals.
pub fn percent(fraction: f64) -> String {
    format!("{:.2}", fraction * 100.0)
}

/// Mean F1 per configuration and deltas against the first row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub runs: Vec<f64>,
    pub mean_f1: f64,
    /// Mean F1 minus the first row's mean F1.
    pub delta: f64,
}

impl AblationTable {
    pub fn mean(&self, name: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.name == name).map(|r| r.mean_f1)
    }

    /// `mean(a) - mean(b)` for every ordered pair of rows.
    pub fn pairwise_deltas(&self) -> BTreeMap<(String, String), f64> {
        let mut out = BTreeMap::new();
        for a in &self.rows {
            for b in &self.rows {
                if a.name != b.name {
                    out.insert((a.name.clone(), b.name.clone()), a.mean_f1 - b.mean_f1);
                }
            }
        }
        out
    }
}

pub fn ablation_report(runs: &[(String, Vec<EvalReport>)]) -> AblationTable {
    let base = runs
        .first()
        .map(|(_, r)| average_runs(&r.iter().map(|e| e.f1).collect::<Vec<_>>()))
        .unwrap_or(0.0);
    let rows = runs
        .iter()
        .map(|(name, reports)| {
            let f1s: Vec<f64> = reports.iter().map(|r| r.f1).collect();
            let mean_f1 = average_runs(&f1s);
            AblationRow {
                name: name.clone(),
                runs: f1s,
                mean_f1,
                delta: mean_f1 - base,
            }
        })
        .collect();
    AblationTable { rows }
}

impl fmt::Display for AblationTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let runs = self.rows.iter().map(|r| r.runs.len()).max().unwrap_or(0);
        write!(f, "{:<12}", "model")?;
        for i in 0..runs {
            write!(f, " {:>8}", format!("run{}", i + 1))?;
        }
        writeln!(f, " {:>8} {:>8}", "avg", "delta")?;
        for row in &self.rows {
            write!(f, "{:<12}", row.name)?;
            for i in 0..runs {
                let cell = row.runs.get(i).map_or_else(|| "-".to_string(), |v| percent(*v));
                write!(f, " {:>8}", cell)?;
            }
            writeln!(f, " {:>8} {:>+8.2}", percent(row.mean_f1), row.delta * 100.0)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use WordLabel::*;

    fn s(a: usize, b: usize) -> Span {
        Span::new(a, b)
    }

    #[test]
    fn decodes_basic_patterns() {
        assert_eq!(decode_spans(&[O, B, I, O]), [s(1, 2)]);
        assert_eq!(decode_spans(&[B, B, O]), [s(0, 0), s(1, 1)]);
        assert_eq!(decode_spans(&[O, I, I]), [s(1, 2)]);
        assert_eq!(decode_spans(&[I, O, I, B, I]), [s(0, 0), s(2, 2), s(3, 4)]);
        assert!(decode_spans(&[]).is_empty());
    }

    fn ex(id: &str, spans: &[Span]) -> ExampleSpans {
        (id.to_string(), spans.to_vec())
    }

    #[test]
    fn perfect_predictions() {
        let gold = vec![ex("a", &[s(0, 1)]), ex("b", &[s(2, 2), s(4, 5)])];
        let r = micro_f1(&gold, &gold).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn partial_overlap_is_not_a_match() {
        let r = micro_f1(&[ex("a", &[s(1, 1)])], &[ex("a", &[s(1, 2)])]).unwrap();
        assert_eq!(r.true_positives, 0);
        assert_eq!(r.f1, 0.0);
    }

    #[test]
    fn hand_counted_two_examples() {
        let pred = vec![ex("a", &[s(2, 2)]), ex("b", &[s(0, 1), s(3, 3)])];
        let gold = vec![ex("a", &[s(2, 2)]), ex("b", &[s(0, 1)])];
        let r = micro_f1(&pred, &gold).unwrap();
        assert_eq!((r.true_positives, r.predicted, r.gold), (2, 3, 2));
        assert!((r.precision - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.recall, 1.0);
        assert!((r.f1 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn misaligned_ids_error() {
        assert!(micro_f1(&[ex("a", &[])], &[ex("b", &[])]).is_err());
        assert!(micro_f1(&[ex("a", &[])], &[]).is_err());
    }

    #[test]
    fn empty_everything_scores_zero() {
        let r = micro_f1(&[ex("a", &[])], &[ex("a", &[])]).unwrap();
        assert_eq!(r.f1, 0.0);
    }

    #[test]
    fn averages() {
        assert_eq!(average_runs(&[1.0, 1.0, 1.0]), 1.0);
        assert!((average_runs(&[0.8, 0.9]) - 0.85).abs() < 1e-12);
        let mean = average_runs(&[82.59, 88.60, 82.37, 91.25]);
        assert!((mean - 86.2025).abs() < 1e-9);
        assert_eq!(format!("{mean:.2}"), "86.20");
    }

    #[test]
    fn ablation_deltas() {
        let rep = |f1: f64| EvalReport {
            f1,
            ..EvalReport::from_counts(0, 0, 0)
        };
        let table = ablation_report(&[
            ("S".into(), vec![rep(0.8), rep(0.9)]),
            ("SA".into(), vec![rep(0.9), rep(0.9)]),
        ]);
        assert!((table.rows[1].delta - 0.05).abs() < 1e-12);
        assert!((table.pairwise_deltas()[&("SA".into(), "S".into())] - 0.05).abs() < 1e-12);
        let text = table.to_string();
        assert!(text.contains("85.00"));
        assert!(text.contains("+5.00"));
    }

    #[test]
    fn aggregate_table_columns_line_up() {
        let t = AggregateReport::new(vec![
            EvalReport::from_counts(2, 3, 2),
            EvalReport::from_counts(1, 1, 4),
        ])
        .to_string();
        let widths: Vec<usize> = t.lines().map(|l| l.chars().count()).collect();
        assert!(widths.iter().all(|&w| w == widths[0]), "{t}");
        assert!(t.ends_with("60.00"));
    }
}
