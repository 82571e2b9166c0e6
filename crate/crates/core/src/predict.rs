//! Early-history classification: refit truncated histories, assign them to the
//! reference clusters, and score the assignments against full-history labels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{feature_vector, median, ClusterAssignment, Label, Transform};
use crate::error::{domain, Result};
use crate::fit::{fit_mle, FitOptions, FitResult};
use crate::simulate::CitationHistory;

/// Default evaluation grid: 1..=30 years.
pub fn default_train_grid() -> Vec<f64> {
    (1..=30).map(f64::from).collect()
}

/// Only papers at least this old are evaluated.
pub const DEFAULT_MIN_AGE: f64 = 30.0;

/// Keeps the events observed within the first `train_years` years.
pub fn truncate(history: &CitationHistory, train_years: f64) -> Result<CitationHistory> {
    if !(train_years > 0.0) {
        return Err(domain(format!("training time must be > 0, got {train_years}")));
    }
    let cut = history.events.partition_point(|&t| t <= train_years);
    Ok(CitationHistory {
        events: history.events[..cut].to_vec(),
        ..history.clone()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centroid {
    pub assignment: ClusterAssignment,
    pub coords: [f64; 3],
    pub size: usize,
}

/// Per-cluster coordinate-wise medians in feature space; noise excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub transform: Transform,
    pub centroids: Vec<Centroid>,
}

impl Reference {
    pub fn from_clustering(
        fits: &[FitResult],
        assignments: &[ClusterAssignment],
        transform: Transform,
    ) -> Result<Self> {
        if fits.len() != assignments.len() {
            return Err(domain("fits and assignments are not aligned"));
        }
        let mut groups: Vec<(ClusterAssignment, Vec<[f64; 3]>)> = Vec::new();
        for (fit, a) in fits.iter().zip(assignments) {
            if a.label == Label::Noise {
                continue;
            }
            let v = feature_vector(fit, transform)?.coords;
            match groups.iter_mut().find(|(k, _)| k == a) {
                Some((_, pts)) => pts.push(v),
                None => groups.push((*a, vec![v])),
            }
        }
        groups.sort_by_key(|(k, _)| k.raw_id);
        let centroids = groups
            .into_iter()
            .map(|(assignment, pts)| {
                let coords = [0, 1, 2].map(|k| median(&mut pts.iter().map(|p| p[k]).collect::<Vec<_>>()));
                Centroid {
                    assignment,
                    coords,
                    size: pts.len(),
                }
            })
            .collect();
        Ok(Self { transform, centroids })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub assignment: ClusterAssignment,
    /// The truncated fit did not converge; its best-seen parameters were used.
    pub flagged: bool,
}

/// Nearest centroid in feature space; exact ties go to the larger cluster,
/// then to the smaller raw id.
pub fn classify_truncated(fit: &FitResult, reference: &Reference) -> Result<Classification> {
    let v = feature_vector(fit, reference.transform)?;
    let best = reference
        .centroids
        .iter()
        .map(|c| {
            let d: f64 = c.coords.iter().zip(&v.coords).map(|(x, y)| (x - y) * (x - y)).sum();
            (d, c)
        })
        .min_by(|(d1, c1), (d2, c2)| {
            d1.total_cmp(d2)
                .then(c2.size.cmp(&c1.size))
                .then(c1.assignment.raw_id.cmp(&c2.assignment.raw_id))
        })
        .ok_or_else(|| domain("reference has no clusters"))?;
    Ok(Classification {
        assignment: best.1.assignment,
        flagged: !fit.converged,
    })
}

/// Settings shared by the multiclass and binary evaluations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub train_grid: Vec<f64>,
    pub min_age: f64,
    /// Calendar date used to compute paper ages.
    pub corpus_end: f64,
    pub transform: Transform,
    pub positive: Label,
    pub fit: FitOptions,
}

impl EvalConfig {
    pub fn new(corpus_end: f64) -> Self {
        Self {
            train_grid: default_train_grid(),
            min_age: DEFAULT_MIN_AGE,
            corpus_end,
            transform: Transform::default(),
            positive: Label::FastHi,
            fit: FitOptions::default(),
        }
    }
}

/// Confusion counts for a binary predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BinaryConfusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl BinaryConfusion {
    pub fn from_pairs(predicted: &[bool], actual: &[bool]) -> Self {
        let mut c = Self::default();
        for (&p, &a) in predicted.iter().zip(actual) {
            match (p, a) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn success(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Scores per training time. `precision`/`recall` are present for binary
/// curves; `None` entries mark undefined ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionCurve {
    pub training_years: Vec<f64>,
    pub success_rate: Vec<f64>,
    pub precision: Option<Vec<Option<f64>>>,
    pub recall: Option<Vec<Option<f64>>>,
    pub n_evaluated: Vec<usize>,
    pub confusion: Option<Vec<BinaryConfusion>>,
}

impl PredictionCurve {
    fn empty(binary: bool) -> Self {
        Self {
            training_years: vec![],
            success_rate: vec![],
            precision: binary.then(Vec::new),
            recall: binary.then(Vec::new),
            n_evaluated: vec![],
            confusion: binary.then(Vec::new),
        }
    }
}

/// Truncated-history predictions for every eligible paper at every grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPredictions {
    /// Indices (into the corpus) of the evaluated papers.
    pub eligible: Vec<usize>,
    /// Full-history labels of the eligible papers.
    pub truth: Vec<Label>,
    pub train_years: Vec<f64>,
    /// `predictions[g][k]`: prediction for `eligible[k]` at `train_years[g]`.
    pub predictions: Vec<Vec<Classification>>,
}

/// Papers old enough and with a non-noise full-history label.
pub fn eligible_papers(
    histories: &[CitationHistory],
    assignments: &[ClusterAssignment],
    corpus_end: f64,
    min_age: f64,
) -> Vec<usize> {
    histories
        .iter()
        .zip(assignments)
        .enumerate()
        .filter(|(_, (h, a))| corpus_end - h.published_at >= min_age && a.label != Label::Noise)
        .map(|(i, _)| i)
        .collect()
}

/// Refits every eligible paper's truncated history at every grid point.
///
/// The refit window is the training time, capped at the paper's full window.
pub fn predict_grid(
    histories: &[CitationHistory],
    full_fits: &[FitResult],
    assignments: &[ClusterAssignment],
    config: &EvalConfig,
) -> Result<GridPredictions> {
    if histories.len() != full_fits.len() || histories.len() != assignments.len() {
        return Err(domain("corpus, fits, and assignments must be aligned"));
    }
    if config.train_grid.iter().any(|&t| !(t > 0.0)) {
        return Err(domain("training times must be positive"));
    }
    let eligible = eligible_papers(histories, assignments, config.corpus_end, config.min_age);
    let truth: Vec<Label> = eligible.iter().map(|&i| assignments[i].label).collect();
    if eligible.is_empty() {
        log::warn!("no classifiable papers at least {} years old", config.min_age);
        return Ok(GridPredictions {
            eligible,
            truth,
            train_years: vec![],
            predictions: vec![],
        });
    }
    let reference = Reference::from_clustering(full_fits, assignments, config.transform)?;
    let jobs: Vec<(usize, usize)> = (0..config.train_grid.len())
        .flat_map(|g| eligible.iter().map(move |&i| (g, i)))
        .collect();
    let flat: Vec<Classification> = jobs
        .par_iter()
        .map(|&(g, i)| {
            let window = config.train_grid[g].min(full_fits[i].window_t);
            let truncated = truncate(&histories[i], window)?;
            let fit = fit_mle(&truncated, window, &config.fit)?;
            classify_truncated(&fit, &reference)
        })
        .collect::<Result<_>>()?;
    let predictions = flat.chunks(eligible.len()).map(<[_]>::to_vec).collect();
    Ok(GridPredictions {
        eligible,
        truth,
        train_years: config.train_grid.clone(),
        predictions,
    })
}

impl GridPredictions {
    /// Fraction of exact label matches per grid point.
    pub fn multiclass_curve(&self) -> PredictionCurve {
        if self.eligible.is_empty() {
            return PredictionCurve::empty(false);
        }
        let success_rate = self
            .predictions
            .iter()
            .map(|row| {
                let hits = row
                    .iter()
                    .zip(&self.truth)
                    .filter(|(p, t)| p.assignment.label == **t)
                    .count();
                hits as f64 / row.len() as f64
            })
            .collect();
        PredictionCurve {
            training_years: self.train_years.clone(),
            success_rate,
            precision: None,
            recall: None,
            n_evaluated: vec![self.eligible.len(); self.train_years.len()],
            confusion: None,
        }
    }

    /// `positive` versus everything else, per grid point.
    pub fn binary_curve(&self, positive: Label) -> PredictionCurve {
        if self.eligible.is_empty() {
            return PredictionCurve::empty(true);
        }
        let actual: Vec<bool> = self.truth.iter().map(|&t| t == positive).collect();
        let confusion: Vec<BinaryConfusion> = self
            .predictions
            .iter()
            .map(|row| {
                let predicted: Vec<bool> = row.iter().map(|p| p.assignment.label == positive).collect();
                BinaryConfusion::from_pairs(&predicted, &actual)
            })
            .collect();
        PredictionCurve {
            training_years: self.train_years.clone(),
            success_rate: confusion.iter().map(|c| c.success().unwrap_or(0.0)).collect(),
            precision: Some(confusion.iter().map(BinaryConfusion::precision).collect()),
            recall: Some(confusion.iter().map(BinaryConfusion::recall).collect()),
            n_evaluated: confusion.iter().map(BinaryConfusion::total).collect(),
            confusion: Some(confusion),
        }
    }
}

/// Three-way success rate of truncated-history classification.
pub fn evaluate_multiclass(
    histories: &[CitationHistory],
    full_fits: &[FitResult],
    assignments: &[ClusterAssignment],
    config: &EvalConfig,
) -> Result<PredictionCurve> {
    Ok(predict_grid(histories, full_fits, assignments, config)?.multiclass_curve())
}

/// Success, precision, and recall for `config.positive` versus the rest.
pub fn evaluate_binary(
    histories: &[CitationHistory],
    full_fits: &[FitResult],
    assignments: &[ClusterAssignment],
    config: &EvalConfig,
) -> Result<PredictionCurve> {
    Ok(predict_grid(histories, full_fits, assignments, config)?.binary_curve(config.positive))
}

/// Success of guessing uniformly among `classes`.
pub fn random_guess_success(truth: &[Label], classes: &[Label], seed: u64) -> Option<f64> {
    if truth.is_empty() || classes.is_empty() {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hits = truth
        .iter()
        .filter(|&&t| classes[rng.random_range(0..classes.len())] == t)
        .count();
    Some(hits as f64 / truth.len() as f64)
}
