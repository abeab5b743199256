//! Structure-fairness metrics: accuracy spread across centrality bins (STD)
//! and correlation between centrality and true-class probability (PCC).
//!
//! Both metrics are reported ×100.

use serde::{Deserialize, Serialize};

use crate::centrality::{CentralityKind, CentralityVector};
use crate::error::{Error, Result};
use crate::graph::LabeledDataset;
use crate::models::{FusionKind, ModelKind, Prediction};

pub const DEFAULT_NUM_BINS: usize = 10;
pub const DEFAULT_MIN_COUNT: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub correct: usize,
    /// Fraction correct; `None` for an empty bin.
    pub accuracy: Option<f64>,
    /// Whether the bin has enough nodes to enter the STD.
    pub retained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinTable {
    /// `bins.len() + 1` boundaries. Bins are `[lo, hi)` except the last, which
    /// is closed.
    pub edges: Vec<f64>,
    pub bins: Vec<Bin>,
    pub min_count: usize,
    /// Bin index per node, `None` outside the test mask.
    #[serde(skip)]
    pub assignment: Vec<Option<usize>>,
}

impl BinTable {
    pub fn retained(&self) -> impl Iterator<Item = &Bin> {
        self.bins.iter().filter(|b| b.retained)
    }

    /// Fills per-bin accuracy from per-node correctness.
    pub fn with_correctness(mut self, correct: &[bool]) -> Result<Self> {
        if correct.len() != self.assignment.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} correctness flags for {} nodes",
                correct.len(),
                self.assignment.len()
            )));
        }
        for b in &mut self.bins {
            b.correct = 0;
        }
        for (node, slot) in self.assignment.iter().enumerate() {
            if let Some(b) = slot {
                if correct[node] {
                    self.bins[*b].correct += 1;
                }
            }
        }
        for b in &mut self.bins {
            b.accuracy = (b.count > 0).then(|| b.correct as f64 / b.count as f64);
        }
        Ok(self)
    }
}

fn bin_index(score: f64, edges: &[f64]) -> usize {
    let last = edges.len() - 2;
    // First interior edge strictly above the score; the top edge is inclusive.
    (1..=last).find(|&b| score < edges[b]).map_or(last, |b| b - 1)
}

/// Equal-width bins over the test-node score range.
///
/// Boundaries are `min + (max − min)·b / num_bins`; a score equal to an
/// interior boundary falls in the upper bin. Constant scores give a single
/// bin holding every test node.
pub fn bin_by_centrality(
    cv: &CentralityVector,
    test_mask: &[bool],
    num_bins: usize,
    min_count: usize,
) -> Result<BinTable> {
    if num_bins < 2 {
        return Err(Error::invalid(format!("need at least 2 bins, got {num_bins}")));
    }
    if test_mask.len() != cv.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} mask entries for {} scores",
            test_mask.len(),
            cv.len()
        )));
    }
    let test: Vec<usize> = (0..cv.len()).filter(|&i| test_mask[i]).collect();
    if test.is_empty() {
        return Err(Error::invalid("no test nodes to bin"));
    }
    let (lo, hi) = test.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
        (lo.min(cv.scores[i]), hi.max(cv.scores[i]))
    });
    let edges: Vec<f64> = if hi > lo {
        (0..=num_bins)
            .map(|b| if b == num_bins { hi } else { lo + (hi - lo) * b as f64 / num_bins as f64 })
            .collect()
    } else {
        vec![lo, hi]
    };
    let mut counts = vec![0usize; edges.len() - 1];
    let mut assignment = vec![None; cv.len()];
    for &i in &test {
        let b = bin_index(cv.scores[i], &edges);
        counts[b] += 1;
        assignment[i] = Some(b);
    }
    let bins: Vec<Bin> = counts
        .iter()
        .enumerate()
        .map(|(b, &count)| Bin {
            lower: edges[b],
            upper: edges[b + 1],
            count,
            correct: 0,
            accuracy: None,
            retained: count > 0 && count >= min_count,
        })
        .collect();
    if !bins.iter().any(|b| b.retained) {
        return Err(Error::UndefinedMetric(format!(
            "every bin holds fewer than {min_count} test nodes"
        )));
    }
    Ok(BinTable {
        edges,
        bins,
        min_count,
        assignment,
    })
}

/// Population standard deviation of retained per-bin accuracies, ×100.
pub fn std_metric(table: &BinTable) -> Result<f64> {
    let accs: Vec<f64> = table.retained().filter_map(|b| b.accuracy).collect();
    if accs.len() < 2 {
        return Err(Error::UndefinedMetric(format!(
            "accuracy spread needs 2 retained bins, have {}",
            accs.len()
        )));
    }
    Ok(population_std(&accs) * 100.0)
}

/// Exactly 0 when all values are equal.
pub fn population_std(values: &[f64]) -> f64 {
    if values.iter().all(|&v| v == values[0]) {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Pearson correlation ×100. Undefined when either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {} samples", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedMetric("correlation needs 2 samples".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedMetric("correlation with a constant variable".into()));
    }
    // sqrt(fl(v·v)) == v in binary floating point, so identical inputs give
    // exactly 100.
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0) * 100.0)
}

/// PCC between centrality and per-node true-class probability over the
/// test mask.
pub fn pcc_metric(cv: &CentralityVector, prob: &[f64], test_mask: &[bool]) -> Result<f64> {
    if prob.len() != cv.len() || test_mask.len() != cv.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores, {} probabilities, {} mask entries",
            cv.len(),
            prob.len(),
            test_mask.len()
        )));
    }
    let (s, p): (Vec<f64>, Vec<f64>) = (0..cv.len())
        .filter(|&i| test_mask[i])
        .map(|i| (cv.scores[i], prob[i]))
        .unzip();
    pearson(&s, &p)
}

/// Relative reduction `(baseline − ours) / baseline` in percent, on
/// magnitudes. `None` when the baseline is zero.
pub fn improvement_pct(baseline: f64, ours: f64) -> Option<f64> {
    let b = baseline.abs();
    (b > 0.0).then(|| (b - ours.abs()) / b * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub dataset: String,
    pub model: ModelKind,
    pub centrality: CentralityKind,
    /// Whether scores were min-max normalized before binning and thresholding.
    pub normalized: bool,
    pub num_bins: usize,
    pub min_count: usize,
    pub line: f64,
    pub hop: usize,
    pub fusion: FusionKind,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub std_pct: Option<f64>,
    pub pcc_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub config: ReportConfig,
    pub test_nodes: usize,
    pub accuracy_pct: f64,
    /// `None` when fewer than two bins are retained.
    pub std_metric: Option<f64>,
    /// `None` when scores or probabilities are constant on the test set.
    pub pcc_metric: Option<f64>,
    /// Correlation with 0/1 correctness instead of probability.
    pub pcc_binary: Option<f64>,
    pub bins: BinTable,
    pub improvement: Option<Improvement>,
}

pub const CSV_HEADER: [&str; 10] = [
    "dataset",
    "model",
    "fusion",
    "hop",
    "line",
    "seed",
    "acc",
    "std",
    "pcc",
    "pcc_binary",
];

fn optional(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

impl FairnessReport {
    /// Fields matching [`CSV_HEADER`]. Undefined metrics are written `NA`.
    pub fn csv_record(&self) -> Vec<String> {
        let c = &self.config;
        vec![
            c.dataset.clone(),
            c.model.to_string(),
            c.fusion.to_string(),
            c.hop.to_string(),
            c.line.to_string(),
            c.seed.to_string(),
            self.accuracy_pct.to_string(),
            optional(self.std_metric),
            optional(self.pcc_metric),
            optional(self.pcc_binary),
        ]
    }

    pub fn compare_to(&mut self, baseline: &FairnessReport) {
        let pair = |b: Option<f64>, o: Option<f64>| b.zip(o).and_then(|(b, o)| improvement_pct(b, o));
        self.improvement = Some(Improvement {
            std_pct: pair(baseline.std_metric, self.std_metric),
            pcc_pct: pair(baseline.pcc_metric, self.pcc_metric),
        });
    }
}

fn defined(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Accuracy, STD, PCC and bin table on the test mask. With a baseline, also
/// the relative improvement of both fairness metrics.
pub fn build_report(
    dataset: &LabeledDataset,
    cv: &CentralityVector,
    prediction: &Prediction,
    config: ReportConfig,
    baseline: Option<&FairnessReport>,
) -> Result<FairnessReport> {
    let n = dataset.num_nodes();
    if cv.len() != n || prediction.labels.len() != n || prediction.probs.rows() != n {
        return Err(Error::ShapeMismatch(format!(
            "{n} nodes, {} scores, {} predictions",
            cv.len(),
            prediction.labels.len()
        )));
    }
    if dataset.num_classes > prediction.probs.cols() {
        return Err(Error::ShapeMismatch(format!(
            "{} classes, {} probability columns",
            dataset.num_classes,
            prediction.probs.cols()
        )));
    }
    let mask = &dataset.test_mask;
    let test_nodes = mask.iter().filter(|&&m| m).count();
    if test_nodes == 0 {
        return Err(Error::invalid("report over an empty test mask"));
    }
    let correct: Vec<bool> = (0..n).map(|i| prediction.labels[i] == dataset.labels[i]).collect();
    let hits = (0..n).filter(|&i| mask[i] && correct[i]).count();
    let true_prob: Vec<f64> = (0..n).map(|i| prediction.probs[(i, dataset.labels[i])]).collect();
    let binary: Vec<f64> = correct.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect();

    let bins = bin_by_centrality(cv, mask, config.num_bins, config.min_count)?.with_correctness(&correct)?;
    let mut report = FairnessReport {
        test_nodes,
        accuracy_pct: hits as f64 / test_nodes as f64 * 100.0,
        std_metric: defined(std_metric(&bins))?,
        pcc_metric: defined(pcc_metric(cv, &true_prob, mask))?,
        pcc_binary: defined(pcc_metric(cv, &binary, mask))?,
        bins,
        config,
        improvement: None,
    };
    if let Some(b) = baseline {
        report.compare_to(b);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::nn::DenseMatrix;

    fn cv(scores: Vec<f64>) -> CentralityVector {
        CentralityVector {
            kind: CentralityKind::Closeness,
            scores,
            normalized: false,
        }
    }

    #[test]
    fn grid_binning_puts_top_two_in_last_bin() {
        let scores: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let table = bin_by_centrality(&cv(scores), &[true; 11], 10, 1).unwrap();
        let counts: Vec<usize> = table.bins.iter().map(|b| b.count).collect();
        assert_eq!(counts, vec![1, 1, 1, 1, 1, 1, 1, 1, 1, 2]);
        assert_eq!(table.edges.len(), 11);
        assert!(table.edges.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn constant_scores_make_one_bin() {
        let table = bin_by_centrality(&cv(vec![0.3; 6]), &[true; 6], 10, 1).unwrap();
        assert_eq!(table.bins.len(), 1);
        assert_eq!(table.bins[0].count, 6);
        let table = table.with_correctness(&[true; 6]).unwrap();
        assert!(matches!(std_metric(&table), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn binning_rejects_bad_input() {
        assert!(bin_by_centrality(&cv(vec![0.0, 1.0]), &[true, true], 1, 1).is_err());
        assert!(bin_by_centrality(&cv(vec![0.0, 1.0]), &[true], 2, 1).is_err());
        assert!(bin_by_centrality(&cv(vec![0.0, 1.0]), &[false, false], 2, 1).is_err());
        // Two nodes, min_count 5: nothing retained.
        assert!(matches!(
            bin_by_centrality(&cv(vec![0.0, 1.0]), &[true, true], 2, 5),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn test_mask_limits_range_and_assignment() {
        let table = bin_by_centrality(&cv(vec![-5.0, 0.0, 1.0, 9.0]), &[false, true, true, false], 2, 1).unwrap();
        assert_eq!(table.edges, vec![0.0, 0.5, 1.0]);
        assert_eq!(table.assignment, vec![None, Some(0), Some(1), None]);
    }

    #[test]
    fn std_examples() {
        let mk = |accs: &[(usize, usize)]| BinTable {
            edges: (0..=accs.len()).map(|i| i as f64).collect(),
            bins: accs
                .iter()
                .map(|&(count, correct)| Bin {
                    lower: 0.0,
                    upper: 1.0,
                    count,
                    correct,
                    accuracy: (count > 0).then(|| correct as f64 / count as f64),
                    retained: count >= 5,
                })
                .collect(),
            min_count: 5,
            assignment: Vec::new(),
        };
        assert_eq!(std_metric(&mk(&[(10, 8), (5, 4), (20, 16)])).unwrap(), 0.0);
        assert!((std_metric(&mk(&[(10, 2), (10, 8)])).unwrap() - 30.0).abs() < 1e-12);
        // An underpopulated bin is ignored.
        assert!((std_metric(&mk(&[(10, 2), (3, 0), (10, 8)])).unwrap() - 30.0).abs() < 1e-12);
        assert!(std_metric(&mk(&[(10, 2), (3, 0)])).is_err());
    }

    #[test]
    fn pearson_examples() {
        let s: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        assert_eq!(pearson(&s, &s).unwrap(), 100.0);
        let inv: Vec<f64> = s.iter().map(|v| 1.0 - v).collect();
        assert!((pearson(&s, &inv).unwrap() + 100.0).abs() < 1e-12);
        assert!(matches!(pearson(&s, &[0.5; 20]), Err(Error::UndefinedMetric(_))));
        assert!(pearson(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn improvements_from_reference_rows() {
        let std = improvement_pct(13.15, 10.53).unwrap();
        let pcc = improvement_pct(10.47, 0.76).unwrap();
        assert_eq!(format!("{std:.1}"), "19.9");
        assert_eq!(format!("{pcc:.1}"), "92.7");
        assert_eq!(improvement_pct(0.0, 1.0), None);
    }

    fn tiny_dataset() -> LabeledDataset {
        let g = Graph::from_edges(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]).unwrap();
        let mut ds = LabeledDataset::new(g, vec![0, 1, 0, 1, 0, 1]).unwrap();
        ds.train_mask = vec![false; 6];
        ds.test_mask = vec![true; 6];
        ds
    }

    fn config() -> ReportConfig {
        ReportConfig {
            dataset: "tiny".into(),
            model: ModelKind::Gcn,
            centrality: CentralityKind::Closeness,
            normalized: true,
            num_bins: 2,
            min_count: 1,
            line: 0.5,
            hop: 1,
            fusion: FusionKind::Max,
            seed: 0,
        }
    }

    #[test]
    fn perfect_predictor_report() {
        let ds = tiny_dataset();
        let mut probs = DenseMatrix::zeros(6, 2);
        for i in 0..6 {
            probs[(i, ds.labels[i])] = 1.0;
        }
        let pred = Prediction {
            probs,
            labels: ds.labels.clone(),
        };
        let scores = cv(vec![0.1, 0.3, 0.5, 0.5, 0.3, 0.1]);
        let r = build_report(&ds, &scores, &pred, config(), None).unwrap();
        assert_eq!(r.accuracy_pct, 100.0);
        assert_eq!(r.std_metric, Some(0.0));
        assert_eq!(r.pcc_metric, None);
        assert_eq!(r.pcc_binary, None);
        assert_eq!(r.csv_record()[8], "NA");
        let again = build_report(&ds, &scores, &pred, config(), None).unwrap();
        assert_eq!(serde_json::to_string(&r).unwrap(), serde_json::to_string(&again).unwrap());
    }

    #[test]
    fn report_with_baseline() {
        let ds = tiny_dataset();
        let probs = DenseMatrix::from_rows(&[
            vec![0.9, 0.1],
            vec![0.6, 0.4],
            vec![0.3, 0.7],
            vec![0.2, 0.8],
            vec![0.5, 0.5],
            vec![0.1, 0.9],
        ])
        .unwrap();
        let pred = Prediction {
            probs,
            labels: vec![0, 0, 1, 1, 0, 1],
        };
        let scores = cv(vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]);
        let base = build_report(&ds, &scores, &pred, config(), None).unwrap();
        let r = build_report(&ds, &scores, &pred, config(), Some(&base)).unwrap();
        let imp = r.improvement.unwrap();
        assert_eq!(imp.std_pct, Some(0.0));
        assert_eq!(imp.pcc_pct, Some(0.0));
        assert!((r.accuracy_pct - 400.0 / 6.0).abs() < 1e-12);
        assert_eq!(r.test_nodes, 6);
    }

    #[test]
    fn report_shape_mismatch() {
        let ds = tiny_dataset();
        let pred = Prediction {
            probs: DenseMatrix::zeros(5, 2),
            labels: vec![0; 5],
        };
        let err = build_report(&ds, &cv(vec![0.0; 6]), &pred, config(), None).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)));
    }
}
