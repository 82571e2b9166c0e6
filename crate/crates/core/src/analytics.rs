//! Journal enrichment with one-sided Fisher exact tests, and the distribution
//! of fitted decay rates by paper age.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::cluster::{median, ClusterAssignment, Label};
use crate::error::{domain, Result};
use crate::fit::FitResult;

/// 2×2 table: rows in/out of the journal, columns in/out of the cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable2x2 {
    /// In journal, in cluster.
    pub k11: u64,
    /// In journal, not in cluster.
    pub k12: u64,
    /// Outside journal, in cluster.
    pub k21: u64,
    /// Outside journal, not in cluster.
    pub k22: u64,
}

impl ContingencyTable2x2 {
    pub fn total(&self) -> u64 {
        self.k11 + self.k12 + self.k21 + self.k22
    }

    fn margins(&self) -> (u64, u64, u64) {
        (self.k11 + self.k12, self.k11 + self.k21, self.total())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Upper tail: at least `k11` shared members.
    Enrichment,
    /// Lower tail: at most `k11` shared members.
    Depletion,
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// One-sided Fisher exact test in log space.
///
/// Degenerate margins (an empty row or column) give `p = 1`.
pub fn fisher_exact_one_sided(table: &ContingencyTable2x2, direction: Direction) -> f64 {
    fisher_ln_p(table, direction).exp().min(1.0)
}

/// Natural log of [`fisher_exact_one_sided`].
pub fn fisher_ln_p(table: &ContingencyTable2x2, direction: Direction) -> f64 {
    let (row, col, n) = table.margins();
    if row == 0 || col == 0 || row == n || col == n {
        return 0.0;
    }
    let lo = (row + col).saturating_sub(n);
    let hi = row.min(col);
    let norm = ln_choose(n, row);
    let term = |x: u64| ln_choose(col, x) + ln_choose(n - col, row - x) - norm;
    let range: Vec<u64> = match direction {
        Direction::Enrichment => (table.k11..=hi).collect(),
        Direction::Depletion => (lo..=table.k11).collect(),
    };
    let logs: Vec<f64> = range.into_iter().map(term).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logs.iter().map(|l| (l - max).exp()).sum();
    (max + sum.ln()).min(0.0)
}

/// One cell of the journal × category enrichment table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichmentCell {
    pub category: String,
    pub journal: String,
    pub n_cj: u64,
    pub n_j: u64,
    pub n_c: u64,
    pub n_total: u64,
    /// Fraction of the journal's papers in the category; `None` for an empty journal.
    pub f_cj: Option<f64>,
    pub f_c_whole: f64,
    pub enrichment: Option<f64>,
    pub log_enrichment: Option<f64>,
    pub direction: Option<Direction>,
    pub p_value: Option<f64>,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichmentReport {
    pub categories: Vec<String>,
    pub journals: Vec<String>,
    /// Corrected significance level `0.01 / (categories × journals)`.
    pub threshold: f64,
    /// Row-major: journals outer, categories inner.
    pub cells: Vec<EnrichmentCell>,
}

impl EnrichmentReport {
    pub fn cell(&self, journal: &str, category: &str) -> Option<&EnrichmentCell> {
        self.cells
            .iter()
            .find(|c| c.journal == journal && c.category == category)
    }
}

/// Enrichment of every category in every journal observed in the data.
pub fn enrichment(assignments: &[ClusterAssignment], journals: &[String]) -> Result<EnrichmentReport> {
    let mut order: Vec<String> = journals.to_vec();
    order.sort();
    order.dedup();
    enrichment_for_journals(assignments, journals, &order)
}

/// Like [`enrichment`] with an explicit journal order; listed journals with
/// no papers get undefined entries.
pub fn enrichment_for_journals(
    assignments: &[ClusterAssignment],
    journals: &[String],
    journal_order: &[String],
) -> Result<EnrichmentReport> {
    if assignments.len() != journals.len() {
        return Err(domain("assignments and journal tags are not aligned"));
    }
    let categories: Vec<String> = if assignments.iter().any(|a| a.label == Label::Unnamed) {
        let mut c: Vec<String> = assignments.iter().map(ClusterAssignment::category).collect();
        c.sort();
        c.dedup();
        c
    } else {
        Label::NAMED.iter().map(|l| l.as_str().to_string()).collect()
    };
    let paper_category: Vec<String> = assignments.iter().map(ClusterAssignment::category).collect();
    let n_total = assignments.len() as u64;
    let threshold = 0.01 / (categories.len() * journal_order.len()).max(1) as f64;

    let mut cells = Vec::with_capacity(categories.len() * journal_order.len());
    for journal in journal_order {
        let n_j = journals.iter().filter(|j| *j == journal).count() as u64;
        for category in &categories {
            let n_c = paper_category.iter().filter(|c| *c == category).count() as u64;
            let n_cj = paper_category
                .iter()
                .zip(journals)
                .filter(|(c, j)| *c == category && *j == journal)
                .count() as u64;
            let f_c_whole = if n_total > 0 {
                n_c as f64 / n_total as f64
            } else {
                f64::NAN
            };
            let f_cj = (n_j > 0).then(|| n_cj as f64 / n_j as f64);
            let enrichment = f_cj.filter(|_| n_c > 0).map(|f| f / f_c_whole);
            let direction = enrichment.map(|e| {
                if e < 1.0 {
                    Direction::Depletion
                } else {
                    Direction::Enrichment
                }
            });
            let p_value = direction.map(|d| {
                let table = ContingencyTable2x2 {
                    k11: n_cj,
                    k12: n_j - n_cj,
                    k21: n_c - n_cj,
                    k22: n_total + n_cj - n_j - n_c,
                };
                fisher_exact_one_sided(&table, d)
            });
            cells.push(EnrichmentCell {
                category: category.clone(),
                journal: journal.clone(),
                n_cj,
                n_j,
                n_c,
                n_total,
                f_cj,
                f_c_whole,
                enrichment,
                log_enrichment: enrichment.map(f64::ln),
                direction,
                p_value,
                significant: p_value.is_some_and(|p| p < threshold),
            });
        }
    }
    Ok(EnrichmentReport {
        categories,
        journals: journal_order.to_vec(),
        threshold,
        cells,
    })
}

/// Age interval `[lo, hi)`, or `[lo, hi]` when `closed` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgeBin {
    pub lo: f64,
    pub hi: f64,
    pub closed: bool,
}

impl AgeBin {
    pub fn contains(&self, age: f64) -> bool {
        age >= self.lo && (age < self.hi || (self.closed && age == self.hi))
    }

    pub fn label(&self) -> String {
        format!("[{},{}{}", self.lo, self.hi, if self.closed { "]" } else { ")" })
    }
}

/// 0–10, 10–20 and 30–100 years; ages in [20, 30) are not binned.
pub fn default_age_bins() -> Vec<AgeBin> {
    vec![
        AgeBin {
            lo: 0.0,
            hi: 10.0,
            closed: false,
        },
        AgeBin {
            lo: 10.0,
            hi: 20.0,
            closed: false,
        },
        AgeBin {
            lo: 30.0,
            hi: 100.0,
            closed: true,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeHistogram {
    pub bin: AgeBin,
    /// One count per interval between consecutive shared edges.
    pub counts: Vec<usize>,
    pub median_r: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RDistribution {
    /// Shared histogram edges in log10 r.
    pub edges_log10: Vec<f64>,
    pub histograms: Vec<AgeHistogram>,
}

/// Histograms of fitted `r` per age bin, on shared log10 edges.
pub fn r_distribution_by_age(
    fits: &[FitResult],
    published: &[f64],
    corpus_end: f64,
    bins: &[AgeBin],
    n_intervals: usize,
) -> Result<RDistribution> {
    if fits.len() != published.len() {
        return Err(domain("fits and publication dates are not aligned"));
    }
    if n_intervals == 0 {
        return Err(domain("need at least one histogram interval"));
    }
    let members: Vec<Vec<f64>> = bins
        .iter()
        .map(|bin| {
            fits.iter()
                .zip(published)
                .filter(|(_, &p)| bin.contains(corpus_end - p))
                .map(|(f, _)| f.params.r.log10())
                .filter(|x| x.is_finite())
                .collect()
        })
        .collect();
    let all = members.iter().flatten().copied();
    let (mut lo, mut hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x), h.max(x)));
    if !lo.is_finite() {
        (lo, hi) = (-1.0, 0.0);
    } else if lo == hi {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let width = (hi - lo) / n_intervals as f64;
    let edges_log10: Vec<f64> = (0..=n_intervals).map(|i| lo + width * i as f64).collect();
    let histograms = bins
        .iter()
        .zip(members)
        .map(|(bin, xs)| {
            let mut counts = vec![0; n_intervals];
            for &x in &xs {
                let k = (((x - lo) / width) as usize).min(n_intervals - 1);
                counts[k] += 1;
            }
            let mut rs: Vec<f64> = xs.iter().map(|x| 10f64.powf(*x)).collect();
            AgeHistogram {
                bin: *bin,
                counts,
                median_r: (!rs.is_empty()).then(|| median(&mut rs)),
                n: xs.len(),
            }
        })
        .collect();
    Ok(RDistribution {
        edges_log10,
        histograms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;

    fn table(k11: u64, k12: u64, k21: u64, k22: u64) -> ContingencyTable2x2 {
        ContingencyTable2x2 { k11, k12, k21, k22 }
    }

    #[test]
    fn perfect_split_table() {
        let p = fisher_exact_one_sided(&table(5, 0, 0, 5), Direction::Enrichment);
        assert!((p - 1.0 / 252.0).abs() < 1e-15);
        let d = fisher_exact_one_sided(&table(0, 5, 5, 0), Direction::Depletion);
        assert!((d - 1.0 / 252.0).abs() < 1e-15);
    }

    #[test]
    fn independence_shaped_table_is_not_significant() {
        for t in [table(10, 10, 10, 10), table(4, 6, 8, 12), table(30, 20, 15, 10)] {
            assert!(fisher_exact_one_sided(&t, Direction::Enrichment) >= 0.5);
            assert!(fisher_exact_one_sided(&t, Direction::Depletion) >= 0.5);
        }
    }

    #[test]
    fn degenerate_margins() {
        assert_eq!(fisher_exact_one_sided(&table(0, 0, 3, 4), Direction::Enrichment), 1.0);
        assert_eq!(fisher_exact_one_sided(&table(0, 5, 0, 4), Direction::Depletion), 1.0);
        assert_eq!(fisher_exact_one_sided(&table(0, 0, 0, 0), Direction::Depletion), 1.0);
    }

    fn asg(label: Label) -> ClusterAssignment {
        ClusterAssignment { raw_id: 0, label }
    }

    #[test]
    fn single_journal_has_unit_enrichment() {
        let labels: Vec<_> = [
            Label::FastHi,
            Label::FastFlat,
            Label::FastFlat,
            Label::Noise,
            Label::SlowLate,
        ]
        .into_iter()
        .map(asg)
        .collect();
        let journals = vec!["PR".to_string(); labels.len()];
        let rep = enrichment(&labels, &journals).unwrap();
        assert_eq!(rep.cells.len(), 4);
        for c in &rep.cells {
            assert_eq!(c.enrichment, Some(1.0));
            assert_eq!(c.p_value, Some(1.0));
        }
        assert_eq!(rep.threshold, 0.01 / 4.0);
    }

    #[test]
    fn empty_journal_and_category_are_undefined() {
        let labels = vec![asg(Label::FastHi), asg(Label::FastFlat)];
        let journals = vec!["A".to_string(), "B".to_string()];
        let order = vec!["A".to_string(), "B".to_string(), "C".to_string()];
        let rep = enrichment_for_journals(&labels, &journals, &order).unwrap();
        let c = rep.cell("C", "fast-hi").unwrap();
        assert_eq!((c.f_cj, c.enrichment, c.p_value), (None, None, None));
        let sl = rep.cell("A", "slow-late").unwrap();
        assert_eq!(sl.enrichment, None);
        assert_eq!(rep.cell("A", "fast-hi").unwrap().enrichment, Some(2.0));
        assert_eq!(
            rep.cell("B", "fast-hi").unwrap().log_enrichment,
            Some(f64::NEG_INFINITY)
        );
    }

    #[test]
    fn unnamed_clusters_become_categories() {
        let labels = vec![
            ClusterAssignment {
                raw_id: 0,
                label: Label::Unnamed,
            },
            ClusterAssignment {
                raw_id: 1,
                label: Label::Unnamed,
            },
            ClusterAssignment::noise(),
        ];
        let journals = vec!["A".to_string(); 3];
        let rep = enrichment(&labels, &journals).unwrap();
        assert_eq!(rep.categories, vec!["cluster-0", "cluster-1", "noise"]);
    }

    fn fit_r(r: f64) -> FitResult {
        let params = ModelParams::new(1.0, 1.0, r).unwrap();
        FitResult {
            params,
            log_likelihood: 0.0,
            converged: true,
            iterations: 0,
            window_t: 1.0,
            initial_guess: params,
            n_events: 0,
        }
    }

    #[test]
    fn age_bins_are_exclusive_and_skip_the_gap() {
        let bins = default_age_bins();
        for age in [0.0, 5.0, 9.999, 10.0, 19.9, 20.0, 25.0, 29.99, 30.0, 99.0, 100.0, 100.1] {
            let hits = bins.iter().filter(|b| b.contains(age)).count();
            let expect = usize::from(age < 20.0 || (30.0..=100.0).contains(&age));
            assert_eq!(hits, expect, "age {age}");
        }
        let fits: Vec<_> = [0.1, 0.2, 0.05, 0.3].into_iter().map(fit_r).collect();
        let published = [2015.0, 2005.0, 1950.0, 1995.0];
        let d = r_distribution_by_age(&fits, &published, 2020.0, &bins, 5).unwrap();
        let ns: Vec<usize> = d.histograms.iter().map(|h| h.n).collect();
        assert_eq!(ns, vec![1, 1, 1]);
        assert_eq!(d.edges_log10.len(), 6);
        assert_eq!(d.histograms[2].median_r.map(|r| (r * 1e6).round() / 1e6), Some(0.05));
        assert!(d.histograms.iter().all(|h| h.counts.iter().sum::<usize>() == h.n));
    }

    #[test]
    fn empty_bin_gives_empty_histogram() {
        let d = r_distribution_by_age(&[fit_r(0.1)], &[2015.0], 2020.0, &default_age_bins(), 4).unwrap();
        assert_eq!(d.histograms[1].n, 0);
        assert_eq!(d.histograms[1].median_r, None);
        assert!(d.histograms[1].counts.iter().all(|&c| c == 0));
    }
}
