use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Arrival-order record of (predicted cluster id, true label) pairs.
/// Ids are the stable historical ids, so a cluster removed mid-stream keeps
/// its identity here and is never conflated with a later one.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AssignmentLog {
    pairs: Vec<(u64, i64)>,
}

impl AssignmentLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: Vec<(u64, i64)>) -> Self {
        Self { pairs }
    }

    pub fn push(&mut self, predicted: u64, truth: i64) {
        self.pairs.push((predicted, truth));
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(u64, i64)] {
        &self.pairs
    }
}

fn contingency(
    log: &AssignmentLog,
) -> (
    BTreeMap<(u64, i64), u64>,
    BTreeMap<u64, u64>,
    BTreeMap<i64, u64>,
) {
    let mut cells: BTreeMap<(u64, i64), u64> = BTreeMap::new();
    let mut pred_counts: BTreeMap<u64, u64> = BTreeMap::new();
    let mut true_counts: BTreeMap<i64, u64> = BTreeMap::new();
    for &(p, t) in log.pairs() {
        *cells.entry((p, t)).or_default() += 1;
        *pred_counts.entry(p).or_default() += 1;
        *true_counts.entry(t).or_default() += 1;
    }
    (cells, pred_counts, true_counts)
}

/// Percent of samples covered by each predicted cluster's majority label.
pub fn purity(log: &AssignmentLog) -> Result<f64> {
    if log.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (cells, _, _) = contingency(log);
    let mut majority: BTreeMap<u64, u64> = BTreeMap::new();
    for (&(p, _), &count) in &cells {
        let best = majority.entry(p).or_default();
        if count > *best {
            *best = count;
        }
    }
    let hits: u64 = majority.values().sum();
    Ok((100.0 * hits as f64 / log.len() as f64).clamp(0.0, 100.0))
}

/// Normalized mutual information `2I/(H_pred + H_true)` in percent, with
/// natural-log entropies. The degenerate case of two zero entropies
/// (single cluster and single class) reports 0.
pub fn nmi(log: &AssignmentLog) -> Result<f64> {
    if log.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (cells, pred_counts, true_counts) = contingency(log);
    let n = log.len() as f64;
    let h_pred = entropy(pred_counts.values(), n);
    let h_true = entropy(true_counts.values(), n);
    if h_pred + h_true == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (&(p, t), &count) in &cells {
        let joint = count as f64 / n;
        let ratio = n * count as f64 / (pred_counts[&p] as f64 * true_counts[&t] as f64);
        mi += joint * ratio.ln();
    }
    Ok((200.0 * mi / (h_pred + h_true)).clamp(0.0, 100.0))
}

fn entropy<'a>(counts: impl Iterator<Item = &'a u64>, n: f64) -> f64 {
    counts.fold(0.0, |acc, &c| {
        let p = c as f64 / n;
        acc - p * p.ln()
    })
}

/// Independent brute-force recomputation of both metrics for tests: direct
/// set-intersection counting, quadratic scans, no shared code with the main
/// implementations. Only intended for small logs.
pub mod oracle {
    use crate::error::{Error, Result};
    use crate::metrics::AssignmentLog;

    pub fn purity_and_nmi(log: &AssignmentLog) -> Result<(f64, f64)> {
        if log.is_empty() {
            return Err(Error::EmptyInput);
        }
        if log.len() > 10_000 {
            return Err(Error::InvalidInput(
                "oracle is restricted to logs of at most 10000 pairs".into(),
            ));
        }
        let pairs = log.pairs();
        let n = pairs.len() as f64;

        let mut clusters: Vec<u64> = Vec::new();
        for &(p, _) in pairs {
            if !clusters.contains(&p) {
                clusters.push(p);
            }
        }
        let mut labels: Vec<i64> = Vec::new();
        for &(_, t) in pairs {
            if !labels.contains(&t) {
                labels.push(t);
            }
        }

        let inter = |k: u64, r: i64| pairs.iter().filter(|&&(p, t)| p == k && t == r).count();
        let in_cluster = |k: u64| pairs.iter().filter(|&&(p, _)| p == k).count();
        let in_class = |r: i64| pairs.iter().filter(|&&(_, t)| t == r).count();

        let mut hits = 0usize;
        for &k in &clusters {
            let mut best = 0usize;
            for &r in &labels {
                best = best.max(inter(k, r));
            }
            hits += best;
        }
        let purity = (100.0 * hits as f64 / n).clamp(0.0, 100.0);

        let mut h_pred = 0.0;
        for &k in &clusters {
            let p = in_cluster(k) as f64 / n;
            h_pred -= p * p.ln();
        }
        let mut h_true = 0.0;
        for &r in &labels {
            let p = in_class(r) as f64 / n;
            h_true -= p * p.ln();
        }
        let nmi = if h_pred + h_true == 0.0 {
            0.0
        } else {
            let mut mi = 0.0;
            for &k in &clusters {
                for &r in &labels {
                    let c = inter(k, r);
                    if c == 0 {
                        continue;
                    }
                    let joint = c as f64 / n;
                    mi += joint
                        * ((n * c as f64) / (in_cluster(k) as f64 * in_class(r) as f64)).ln();
                }
            }
            (200.0 * mi / (h_pred + h_true)).clamp(0.0, 100.0)
        };
        Ok((purity, nmi))
    }
}

/// End-of-run summary. The quality metrics are absent when the stream
/// carried no labels; reconstruction means are taken over a window of
/// `recon_window` steps at each end of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub nmi_percent: Option<f64>,
    pub purity_percent: Option<f64>,
    pub final_cluster_count: usize,
    pub final_neuron_count: usize,
    pub mean_recon_error_first_k: f64,
    pub mean_recon_error_last_k: f64,
    pub recon_window: usize,
}

/// Folds a finished run into a report. The window is half the stream,
/// capped at 1000 steps.
pub fn build_report(
    log: &AssignmentLog,
    recon_errors: &[f64],
    final_cluster_count: usize,
    final_neuron_count: usize,
) -> Result<MetricsReport> {
    if recon_errors.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = recon_errors.len();
    let window = (n / 2).clamp(1, 1000);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let (nmi_percent, purity_percent) = if log.is_empty() {
        (None, None)
    } else {
        (Some(nmi(log)?), Some(purity(log)?))
    };
    Ok(MetricsReport {
        nmi_percent,
        purity_percent,
        final_cluster_count,
        final_neuron_count,
        mean_recon_error_first_k: mean(&recon_errors[..window]),
        mean_recon_error_last_k: mean(&recon_errors[n - window..]),
        recon_window: window,
    })
}
