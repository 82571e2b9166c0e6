//! Exact sampling of citation histories and synthetic corpora.
//!
//! Sampling uses the time change `s = 1 − e^{-rt}`: in the `s` clock the
//! process is a homogeneous linear birth process with rate `a·n + b`, so the
//! waiting times are plain exponentials and no rejection step is needed.

use rand::distr::{Distribution, Open01};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::model::{ModelParams, Window};

/// One paper's citation record, with event times in years since publication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitationHistory {
    pub paper_id: String,
    pub journal: String,
    /// Calendar year of publication (decimal).
    pub published_at: f64,
    /// Strictly increasing, strictly positive event times.
    pub events: Vec<f64>,
}

impl CitationHistory {
    pub fn new(
        paper_id: impl Into<String>,
        journal: impl Into<String>,
        published_at: f64,
        events: Vec<f64>,
    ) -> Result<Self> {
        let h = Self {
            paper_id: paper_id.into(),
            journal: journal.into(),
            published_at,
            events,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.published_at.is_finite() {
            return Err(domain(format!("paper {}: non-finite publication date", self.paper_id)));
        }
        let mut last = 0.0;
        for &t in &self.events {
            if !t.is_finite() || t <= last {
                return Err(domain(format!(
                    "paper {}: event times must be finite, positive and strictly increasing (saw {t} after {last})",
                    self.paper_id
                )));
            }
            last = t;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// A history plus its optional generator ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paper {
    pub history: CitationHistory,
    pub group: Option<String>,
}

/// One homogeneous block of a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    /// Ground-truth label written alongside each generated history.
    pub name: String,
    pub params: ModelParams,
    pub count: usize,
    pub journal: String,
    /// Publication years are drawn uniformly from this closed range.
    pub published: (f64, f64),
}

/// Recipe for a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub groups: Vec<GroupSpec>,
    /// Maximum observation length per paper, years.
    pub horizon: f64,
    /// Calendar date at which observation stops for every paper.
    pub corpus_end: f64,
    pub seed: u64,
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) {
            return Err(domain(format!("horizon must be > 0, got {}", self.horizon)));
        }
        if !self.corpus_end.is_finite() {
            return Err(domain("corpus end must be finite"));
        }
        for g in &self.groups {
            g.params.validate()?;
            if g.count == 0 {
                return Err(domain(format!("group {} has no papers", g.name)));
            }
            let (lo, hi) = g.published;
            if !(lo.is_finite() && hi.is_finite() && lo <= hi && hi < self.corpus_end) {
                return Err(domain(format!(
                    "group {}: publication range must lie before the corpus end",
                    g.name
                )));
            }
        }
        Ok(())
    }

    pub fn total_papers(&self) -> usize {
        self.groups.iter().map(|g| g.count).sum()
    }
}

/// Independent RNG stream `index` under `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws event times over `[0, horizon]` exactly from the process.
pub fn sample_events<R: Rng + ?Sized>(params: &ModelParams, horizon: Window, rng: &mut R) -> Vec<f64> {
    let s_max = match horizon {
        Window::Infinite => 1.0,
        Window::Finite(h) => -(-params.r * h).exp_m1(),
    };
    let mut events = Vec::new();
    let mut s = 0.0;
    let mut last = 0.0;
    loop {
        let rate = params.a * events.len() as f64 + params.b;
        let u: f64 = Open01.sample(rng);
        s += -u.ln() / rate;
        if s >= s_max {
            break;
        }
        let mut t = -(-s).ln_1p() / params.r;
        if t <= last {
            // two draws closer than float resolution in t
            t = last.next_up();
        }
        events.push(t);
        last = t;
    }
    events
}

/// Samples one citation history observed for `horizon` years.
pub fn sample_history(params: &ModelParams, horizon: Window, seed: u64) -> CitationHistory {
    let mut rng = stream_rng(seed, 0);
    CitationHistory {
        paper_id: format!("sim-{seed}"),
        journal: String::new(),
        published_at: 0.0,
        events: sample_events(params, horizon, &mut rng),
    }
}

/// Builds a synthetic corpus; paper `i` uses RNG stream `i` so the result is
/// independent of thread count.
pub fn sample_corpus(spec: &CorpusSpec) -> Result<Vec<Paper>> {
    spec.validate()?;
    let jobs: Vec<(usize, &GroupSpec)> = spec
        .groups
        .iter()
        .flat_map(|g| std::iter::repeat_n(g, g.count))
        .enumerate()
        .collect();
    let papers = jobs
        .par_iter()
        .map(|&(index, group)| {
            let mut rng = stream_rng(spec.seed, index as u64);
            let (lo, hi) = group.published;
            let published_at = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            let observed = (spec.corpus_end - published_at).min(spec.horizon);
            let events = sample_events(&group.params, Window::Finite(observed), &mut rng);
            Paper {
                history: CitationHistory {
                    paper_id: format!("P{index:06}"),
                    journal: group.journal.clone(),
                    published_at,
                    events,
                },
                group: Some(group.name.clone()),
            }
        })
        .collect();
    Ok(papers)
}
