//! DBSCAN over fitted parameter triples and the semantic naming of the
//! resulting clusters.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::fit::FitResult;
use crate::model::{initial_velocity, A_POISSON_THRESHOLD};

/// Paper's default neighbourhood radius (log10 units).
pub const DEFAULT_EPS: f64 = 0.5;
/// Paper's default core-point threshold.
pub const DEFAULT_MIN_PTS: usize = 50;

/// Raw id given to noise points.
pub const NOISE: i64 = -1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    #[default]
    Log10,
    Identity,
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transform::Log10 => "log10",
            Transform::Identity => "identity",
        })
    }
}

impl FromStr for Transform {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log10" => Ok(Transform::Log10),
            "identity" => Ok(Transform::Identity),
            other => Err(domain(format!("unknown transform {other:?}"))),
        }
    }
}

/// Clustering coordinates of one fit: `(a, b, r)` under `transform`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub coords: [f64; 3],
    pub transform: Transform,
}

impl FeatureVector {
    pub fn distance(&self, other: &FeatureVector) -> f64 {
        squared_distance(&self.coords, &other.coords).sqrt()
    }
}

fn squared_distance(p: &[f64; 3], q: &[f64; 3]) -> f64 {
    p.iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn feature_vector(fit: &FitResult, transform: Transform) -> Result<FeatureVector> {
    let p = fit.params;
    let raw = [p.a, p.b, p.r];
    if raw.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(Error::InvalidParams(format!("cannot embed parameters {p:?}")));
    }
    let coords = match transform {
        Transform::Log10 => raw.map(f64::log10),
        Transform::Identity => raw,
    };
    Ok(FeatureVector { coords, transform })
}

/// Neighbourhood queries: every index within `eps` (inclusive) of a point,
/// the point itself included, in ascending order.
pub trait NeighborIndex: Sync {
    fn neighbors(&self, i: usize) -> Vec<usize>;
    fn count_neighbors(&self, i: usize) -> usize {
        self.neighbors(i).len()
    }
}

/// Brute-force scan over all points.
pub struct LinearScan<'a> {
    points: &'a [[f64; 3]],
    eps2: f64,
}

impl<'a> LinearScan<'a> {
    pub fn new(points: &'a [[f64; 3]], eps: f64) -> Self {
        Self {
            points,
            eps2: eps * eps,
        }
    }
}

impl NeighborIndex for LinearScan<'_> {
    fn neighbors(&self, i: usize) -> Vec<usize> {
        let p = &self.points[i];
        (0..self.points.len())
            .filter(|&j| squared_distance(p, &self.points[j]) <= self.eps2)
            .collect()
    }
}

/// Uniform grid with cell edge `eps`; a query inspects the 27 surrounding cells.
pub struct GridIndex<'a> {
    points: &'a [[f64; 3]],
    eps: f64,
    eps2: f64,
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl<'a> GridIndex<'a> {
    pub fn new(points: &'a [[f64; 3]], eps: f64) -> Self {
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::cell(p, eps)).or_default().push(i);
        }
        Self {
            points,
            eps,
            eps2: eps * eps,
            cells,
        }
    }

    fn cell(p: &[f64; 3], eps: f64) -> [i64; 3] {
        p.map(|x| (x / eps).floor() as i64)
    }
}

impl NeighborIndex for GridIndex<'_> {
    fn neighbors(&self, i: usize) -> Vec<usize> {
        let p = &self.points[i];
        let c = Self::cell(p, self.eps);
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        out.extend(
                            bucket
                                .iter()
                                .copied()
                                .filter(|&j| squared_distance(p, &self.points[j]) <= self.eps2),
                        );
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Grid cells are only usable when coordinates divided by `eps` fit an i64.
fn grid_is_safe(points: &[[f64; 3]], eps: f64) -> bool {
    points.iter().flatten().all(|x| (x / eps).abs() < 1e15)
}

/// DBSCAN with Euclidean distance and self-inclusive neighbourhood counts.
///
/// Clusters are numbered in order of their lowest-index core point. A border
/// point reachable from several clusters joins the one with the smallest id.
pub fn dbscan(points: &[FeatureVector], eps: f64, min_pts: usize) -> Result<Vec<i64>> {
    let coords: Vec<[f64; 3]> = points.iter().map(|p| p.coords).collect();
    dbscan_coords(&coords, eps, min_pts)
}

pub fn dbscan_coords(points: &[[f64; 3]], eps: f64, min_pts: usize) -> Result<Vec<i64>> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(domain(format!("eps must be positive, got {eps}")));
    }
    if min_pts == 0 {
        return Err(domain("min_pts must be at least 1"));
    }
    if points.iter().flatten().any(|x| !x.is_finite()) {
        return Err(domain("non-finite feature coordinate"));
    }
    if grid_is_safe(points, eps) {
        Ok(dbscan_with(&GridIndex::new(points, eps), points.len(), min_pts))
    } else {
        Ok(dbscan_with(&LinearScan::new(points, eps), points.len(), min_pts))
    }
}

/// DBSCAN against an arbitrary neighbourhood index.
pub fn dbscan_with<I: NeighborIndex>(index: &I, n: usize, min_pts: usize) -> Vec<i64> {
    let core: Vec<bool> = (0..n)
        .into_par_iter()
        .map(|i| index.count_neighbors(i) >= min_pts)
        .collect();
    let mut labels = vec![NOISE; n];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for seed in 0..n {
        if !core[seed] || labels[seed] != NOISE {
            continue;
        }
        labels[seed] = next;
        queue.push_back(seed);
        while let Some(p) = queue.pop_front() {
            for q in index.neighbors(p) {
                if labels[q] == NOISE {
                    labels[q] = next;
                    if core[q] {
                        queue.push_back(q);
                    }
                }
            }
        }
        next += 1;
    }
    labels
}

/// Semantic cluster names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    FastHi,
    SlowLate,
    FastFlat,
    Noise,
    /// Clustering did not produce the three expected groups.
    Unnamed,
}

impl Label {
    pub const NAMED: [Label; 4] = [Label::FastHi, Label::SlowLate, Label::FastFlat, Label::Noise];

    pub fn as_str(&self) -> &'static str {
        match self {
            Label::FastHi => "fast-hi",
            Label::SlowLate => "slow-late",
            Label::FastFlat => "fast-flat",
            Label::Noise => "noise",
            Label::Unnamed => "unnamed",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast-hi" => Ok(Label::FastHi),
            "slow-late" => Ok(Label::SlowLate),
            "fast-flat" => Ok(Label::FastFlat),
            "noise" => Ok(Label::Noise),
            "unnamed" => Ok(Label::Unnamed),
            other => Err(domain(format!("unknown cluster label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub raw_id: i64,
    pub label: Label,
}

impl ClusterAssignment {
    pub fn noise() -> Self {
        Self {
            raw_id: NOISE,
            label: Label::Noise,
        }
    }

    /// Category name: the label, or `cluster-<id>` for unnamed clusters.
    pub fn category(&self) -> String {
        match self.label {
            Label::Unnamed => format!("cluster-{}", self.raw_id),
            l => l.as_str().to_string(),
        }
    }
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Names raw DBSCAN clusters from per-cluster medians.
///
/// With exactly three clusters: the one whose median `a` is below the Poisson
/// threshold (the smallest, if several) is `fast-flat`; of the other two, the
/// larger median `v(0) = b·r` is `fast-hi` and the smaller is `slow-late`.
/// Any other outcome keeps the raw ids under [`Label::Unnamed`].
pub fn label_clusters(ids: &[i64], fits: &[FitResult]) -> Result<Vec<ClusterAssignment>> {
    if ids.len() != fits.len() {
        return Err(domain(format!("{} cluster ids for {} fits", ids.len(), fits.len())));
    }
    let mut members: Vec<(i64, Vec<usize>)> = Vec::new();
    for (i, &id) in ids.iter().enumerate() {
        if id == NOISE {
            continue;
        }
        match members.iter_mut().find(|(k, _)| *k == id) {
            Some((_, v)) => v.push(i),
            None => members.push((id, vec![i])),
        }
    }
    members.sort_by_key(|(k, _)| *k);

    let names = name_clusters(&members, fits);
    if names.is_none() && !members.is_empty() {
        log::warn!(
            "expected 3 clusters with one at the a bound, found {}; labels left unnamed",
            members.len()
        );
    }
    Ok(ids
        .iter()
        .map(|&id| {
            if id == NOISE {
                return ClusterAssignment::noise();
            }
            let label = names
                .as_ref()
                .and_then(|n| n.iter().find(|(k, _)| *k == id).map(|(_, l)| *l))
                .unwrap_or(Label::Unnamed);
            ClusterAssignment { raw_id: id, label }
        })
        .collect())
}

fn name_clusters(members: &[(i64, Vec<usize>)], fits: &[FitResult]) -> Option<Vec<(i64, Label)>> {
    if members.len() != 3 {
        return None;
    }
    let stats: Vec<(i64, f64, f64)> = members
        .iter()
        .map(|(id, idx)| {
            let mut a: Vec<f64> = idx.iter().map(|&i| fits[i].params.a).collect();
            let mut v: Vec<f64> = idx.iter().map(|&i| initial_velocity(&fits[i].params)).collect();
            (*id, median(&mut a), median(&mut v))
        })
        .collect();
    let flat = stats
        .iter()
        .filter(|s| s.1 < A_POISSON_THRESHOLD)
        .min_by(|x, y| x.1.total_cmp(&y.1))?;
    let mut rest: Vec<_> = stats.iter().filter(|s| s.0 != flat.0).collect();
    rest.sort_by(|x, y| y.2.total_cmp(&x.2));
    Some(vec![
        (flat.0, Label::FastFlat),
        (rest[0].0, Label::FastHi),
        (rest[1].0, Label::SlowLate),
    ])
}

/// Physical coordinates of a fit: `(v(0) = b·r, a·r, 1/r)`.
pub fn derived_coordinates(fit: &FitResult) -> (f64, f64, f64) {
    let p = fit.params;
    (initial_velocity(&p), p.a * p.r, 1.0 / p.r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelParams, A_LOWER_BOUND};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fit(a: f64, b: f64, r: f64) -> FitResult {
        let params = ModelParams::new(a, b, r).unwrap();
        FitResult {
            params,
            log_likelihood: -1.0,
            converged: true,
            iterations: 1,
            window_t: 10.0,
            initial_guess: params,
            n_events: 5,
        }
    }

    #[test]
    fn feature_transforms() {
        let f = fit(A_LOWER_BOUND, 100.0, 0.01);
        let v = feature_vector(&f, Transform::Log10).unwrap();
        assert_eq!(v.coords, [-8.0, 2.0, -2.0]);
        let id = feature_vector(&f, Transform::Identity).unwrap();
        assert_eq!(id.coords, [A_LOWER_BOUND, 100.0, 0.01]);
        let g = fit(0.5, 3.0, 0.2);
        let (lg, ig) = (
            feature_vector(&g, Transform::Log10).unwrap(),
            feature_vector(&g, Transform::Identity).unwrap(),
        );
        for k in 0..3 {
            assert_eq!((v.coords[k] < lg.coords[k]), (id.coords[k] < ig.coords[k]));
        }
        let mut bad = fit(0.5, 3.0, 0.2);
        bad.params.b = f64::NAN;
        assert!(feature_vector(&bad, Transform::Log10).is_err());
    }

    #[test]
    fn empty_and_invalid_inputs() {
        assert!(dbscan_coords(&[], 0.5, 3).unwrap().is_empty());
        assert!(dbscan_coords(&[[0.0; 3]], 0.0, 3).is_err());
        assert!(dbscan_coords(&[[0.0; 3]], 0.5, 0).is_err());
    }

    #[test]
    fn sparse_points_are_noise() {
        let pts: Vec<[f64; 3]> = (0..50).map(|i| [i as f64 * 10.0, 0.0, 0.0]).collect();
        assert!(dbscan_coords(&pts, 1.0, 2).unwrap().iter().all(|&l| l == NOISE));
    }

    #[test]
    fn grid_and_linear_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<[f64; 3]> = (0..400)
            .map(|_| {
                [
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-1.0..1.0),
                ]
            })
            .collect();
        let grid = GridIndex::new(&pts, 0.4);
        let lin = LinearScan::new(&pts, 0.4);
        for i in 0..pts.len() {
            assert_eq!(grid.neighbors(i), lin.neighbors(i));
        }
        assert_eq!(dbscan_with(&grid, pts.len(), 5), dbscan_with(&lin, pts.len(), 5));
    }

    #[test]
    fn border_point_goes_to_first_cluster() {
        // two dense rows bridged by a single border point at the origin
        let mut pts = vec![];
        for i in 0..5 {
            pts.push([-1.0 - 0.1 * i as f64, 0.0, 0.0]);
        }
        for i in 0..5 {
            pts.push([1.0 + 0.1 * i as f64, 0.0, 0.0]);
        }
        pts.push([0.0, 0.0, 0.0]);
        let labels = dbscan_coords(&pts, 1.0, 4).unwrap();
        assert_eq!(labels[0], 0);
        assert_eq!(labels[5], 1);
        assert_eq!(labels[10], 0);
    }

    #[test]
    fn naming_three_clusters() {
        let mut fits = vec![];
        let mut ids = vec![];
        for _ in 0..5 {
            fits.push(fit(2.0, 5.0, 0.05));
            ids.push(0);
            fits.push(fit(A_LOWER_BOUND, 10.0, 0.5));
            ids.push(1);
            fits.push(fit(5.0, 0.1, 0.02));
            ids.push(2);
        }
        fits.push(fit(1.0, 1.0, 1.0));
        ids.push(NOISE);
        let labels = label_clusters(&ids, &fits).unwrap();
        assert_eq!(labels[0].label, Label::FastHi);
        assert_eq!(labels[1].label, Label::FastFlat);
        assert_eq!(labels[2].label, Label::SlowLate);
        assert_eq!(labels.last().unwrap().label, Label::Noise);

        let doubled_ids: Vec<i64> = ids.iter().chain(&ids).copied().collect();
        let doubled_fits: Vec<FitResult> = fits.iter().chain(&fits).cloned().collect();
        let relabeled = label_clusters(&doubled_ids, &doubled_fits).unwrap();
        assert_eq!(&relabeled[..labels.len()], &labels[..]);
    }

    #[test]
    fn unnamed_fallbacks() {
        let fits = vec![fit(1.0, 1.0, 1.0), fit(2.0, 1.0, 1.0)];
        let two = label_clusters(&[0, 1], &fits).unwrap();
        assert!(two.iter().all(|a| a.label == Label::Unnamed));
        assert_eq!(two[1].category(), "cluster-1");
        let all_noise = label_clusters(&[NOISE, NOISE], &fits).unwrap();
        assert!(all_noise.iter().all(|a| a.label == Label::Noise));
        assert!(label_clusters(&[0], &fits).is_err());
    }

    #[test]
    fn derived_coordinate_values() {
        let (v0, ar, inv_r) = derived_coordinates(&fit(1.0, 2.0, 0.05));
        assert!((v0 - 0.1).abs() < 1e-15);
        assert!((ar - 0.05).abs() < 1e-15);
        assert!((inv_r - 20.0).abs() < 1e-12);
        let dt = crate::model::doubling_time(0.05).unwrap();
        assert!((inv_r - dt / std::f64::consts::LN_2).abs() < 1e-12);
        let (_, ar, _) = derived_coordinates(&fit(A_LOWER_BOUND, 2.0, 0.3));
        assert!(ar <= 1e-8 * 0.3);
    }

    #[test]
    fn label_round_trip() {
        for l in [
            Label::FastHi,
            Label::SlowLate,
            Label::FastFlat,
            Label::Noise,
            Label::Unnamed,
        ] {
            assert_eq!(l.as_str().parse::<Label>().unwrap(), l);
        }
        assert!("hot".parse::<Label>().is_err());
    }
}
