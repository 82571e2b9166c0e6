use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use citebirth::analytics::{default_age_bins, enrichment, r_distribution_by_age};
use citebirth::artifacts::{self, ClusterRecord, FitRecord, Header};
use citebirth::cluster::{
    dbscan, derived_coordinates, feature_vector, label_clusters, Label, DEFAULT_EPS, DEFAULT_MIN_PTS,
};
use citebirth::fit::fit_corpus;
use citebirth::ingest::{self, filter_corpus, LoadedCorpus};
use citebirth::predict::{default_train_grid, predict_grid, EvalConfig, DEFAULT_MIN_AGE};
use citebirth::simulate::sample_corpus;
use citebirth::{CitationHistory, CorpusFormat, CorpusSpec, PrepublicationPolicy, Transform, WindowPolicy};
use serde_json::{json, Value};

use crate::config::{self, pick, FileConfig};
use crate::{
    AgedistArgs, CliError, ClusterArgs, CorpusArgs, EnrichArgs, FitArgs, PredictArgs, ReportArgs, SimulateArgs,
};

type Result<T> = std::result::Result<T, CliError>;

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))
}

/// Writes the finished buffer to `path`, or stdout when no path is given.
fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    let res = match path {
        Some(p) => std::fs::write(p, bytes),
        None => std::io::stdout().lock().write_all(bytes),
    };
    res.map_err(|e| CliError::runtime(format!("cannot write output: {e}")))
}

fn parse_flag<T: std::str::FromStr>(flag: Option<&str>, name: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    flag.map(|s| s.parse::<T>().map_err(|e| CliError::usage(format!("--{name}: {e}"))))
        .transpose()
}

fn corpus_format(flag: Option<&str>, file: &FileConfig, path: Option<&Path>) -> Result<CorpusFormat> {
    if let Some(f) = parse_flag(flag, "format")? {
        return Ok(f);
    }
    if let Some(f) = file.format {
        return Ok(f);
    }
    let is_csv = path.and_then(Path::extension).is_some_and(|e| e == "csv");
    Ok(if is_csv { CorpusFormat::Csv } else { CorpusFormat::Jsonl })
}

/// A corpus file plus the configuration its producer recorded, if any.
struct Corpus {
    loaded: LoadedCorpus,
    producer: Option<Value>,
}

fn load_corpus(path: &Path, args: &CorpusArgs, file: &FileConfig) -> Result<Corpus> {
    let format = corpus_format(args.format.as_deref(), file, Some(path))?;
    let text = read_text(path)?;
    let (loaded, producer) = match format {
        CorpusFormat::Jsonl => {
            let c = ingest::read_jsonl(text.as_bytes())?;
            let producer = c.meta.as_ref().and_then(|m| m.get("config")).cloned();
            (c, producer)
        }
        CorpusFormat::Csv => (ingest::read_csv(text.as_bytes())?, artifacts::read_config(&text)),
    };
    for e in &loaded.errors {
        log::warn!("{}:{}: skipped malformed row: {}", path.display(), e.line, e.message);
    }
    Ok(Corpus { loaded, producer })
}

fn prepublication(args: &CorpusArgs, file: &FileConfig) -> PrepublicationPolicy {
    if args.keep_prepublished {
        PrepublicationPolicy::DropEvents
    } else {
        file.prepublication.unwrap_or_default()
    }
}

fn upstream_f64(sources: &[Option<&Value>], key: &str) -> Option<f64> {
    sources
        .iter()
        .flatten()
        .find_map(|v| v.get(key).and_then(Value::as_f64))
}

fn resolve_corpus_end(flag: Option<f64>, file: &FileConfig, upstream: &[Option<&Value>]) -> Result<f64> {
    flag.or(file.corpus_end)
        .or_else(|| upstream_f64(upstream, "corpus_end"))
        .ok_or_else(|| CliError::usage("corpus end unknown: pass --corpus-end"))
}

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("configuration serializes")
}

pub fn simulate(args: SimulateArgs, file: &FileConfig) -> Result<()> {
    let spec = CorpusSpec {
        groups: file.groups.clone().unwrap_or_else(config::default_groups),
        horizon: pick(args.horizon, file.horizon, config::DEFAULT_HORIZON),
        corpus_end: pick(args.corpus_end, file.corpus_end, config::DEFAULT_CORPUS_END),
        seed: pick(args.seed, file.seed, config::DEFAULT_SEED),
    };
    let format = corpus_format(args.format.as_deref(), file, args.output.as_deref())?;
    let papers = sample_corpus(&spec).map_err(|e| CliError::usage(e.to_string()))?;
    let cfg = json!({
        "seed": spec.seed,
        "corpus_end": spec.corpus_end,
        "horizon": spec.horizon,
        "groups": to_json(&spec.groups),
    });
    let mut buf = Vec::new();
    match format {
        CorpusFormat::Jsonl => {
            let meta = json!({
                "tool": "citebirth",
                "version": citebirth::VERSION,
                "command": "simulate",
                "config": cfg,
            });
            ingest::write_jsonl(&mut buf, &papers, Some(&meta))?;
        }
        CorpusFormat::Csv => {
            Header::new("simulate", cfg).write(&mut buf)?;
            ingest::write_csv(&mut buf, &papers)?;
        }
    }
    emit(args.output.as_deref(), &buf)
}

fn filtered_histories(
    corpus: Corpus,
    policy: PrepublicationPolicy,
) -> (Vec<CitationHistory>, ingest::FilterReport, Option<Value>) {
    let (kept, report) = filter_corpus(corpus.loaded.papers, policy);
    let histories = kept.into_iter().map(|p| p.paper.history).collect();
    (histories, report, corpus.producer)
}

pub fn fit(args: FitArgs, file: &FileConfig) -> Result<()> {
    let corpus = load_corpus(&args.input, &args.corpus, file)?;
    let policy = prepublication(&args.corpus, file);
    let (histories, report, producer) = filtered_histories(corpus, policy);
    let corpus_end = resolve_corpus_end(args.corpus.corpus_end, file, &[producer.as_ref()])?;
    let horizon = args
        .corpus
        .horizon
        .or(file.horizon)
        .or_else(|| upstream_f64(&[producer.as_ref()], "horizon"));
    if let Some(path) = &args.exclusions {
        let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::runtime(e.to_string()))?;
        emit(Some(path), format!("{text}\n").as_bytes())?;
    }
    if histories.is_empty() {
        return Err(CliError::usage(format!(
            "no papers to fit in {}: {} read, all excluded or none present",
            args.input.display(),
            report.input
        )));
    }
    let options = file.fit.unwrap_or_default();
    let policy_w = WindowPolicy { corpus_end, horizon };
    let mut records = Vec::with_capacity(histories.len());
    for (h, res) in histories.iter().zip(fit_corpus(&histories, policy_w, &options)) {
        match res {
            Ok(fit) => records.push(FitRecord {
                paper_id: h.paper_id.clone(),
                journal: h.journal.clone(),
                fit,
            }),
            Err(e) => log::warn!("skipping paper {}: {e}", h.paper_id),
        }
    }
    if records.is_empty() {
        return Err(CliError::runtime("every fit failed"));
    }
    let cfg = json!({
        "corpus_end": corpus_end,
        "horizon": horizon,
        "prepublication": to_json(&policy),
        "fit": to_json(&options),
    });
    let mut buf = Vec::new();
    artifacts::write_fits(&mut buf, &Header::new("fit", cfg), &records)?;
    emit(args.output.as_deref(), &buf)
}

fn read_fit_file(path: &Path) -> Result<(Vec<FitRecord>, Option<Value>)> {
    let text = read_text(path)?;
    let config = artifacts::read_config(&text);
    Ok((artifacts::read_fits(text.as_bytes())?, config))
}

fn read_cluster_file(path: &Path) -> Result<(Vec<ClusterRecord>, Option<Value>)> {
    let text = read_text(path)?;
    let config = artifacts::read_config(&text);
    Ok((artifacts::read_clusters(text.as_bytes())?, config))
}

pub fn cluster(args: ClusterArgs, file: &FileConfig) -> Result<()> {
    let (records, _) = read_fit_file(&args.input)?;
    let eps = pick(args.eps, file.eps, DEFAULT_EPS);
    let min_pts = pick(args.min_pts, file.min_pts, DEFAULT_MIN_PTS);
    let transform = pick(
        parse_flag(args.transform.as_deref(), "transform")?,
        file.transform,
        Transform::default(),
    );
    let fits: Vec<_> = records.iter().map(|r| r.fit.clone()).collect();
    let features = fits
        .iter()
        .map(|f| feature_vector(f, transform))
        .collect::<citebirth::Result<Vec<_>>>()?;
    let ids = dbscan(&features, eps, min_pts).map_err(|e| CliError::usage(e.to_string()))?;
    let assignments = label_clusters(&ids, &fits)?;
    let out: Vec<ClusterRecord> = records
        .iter()
        .zip(&assignments)
        .map(|(rec, &assignment)| {
            let (v0, ar, inv_r) = derived_coordinates(&rec.fit);
            ClusterRecord {
                paper_id: rec.paper_id.clone(),
                assignment,
                v0,
                ar,
                inv_r,
            }
        })
        .collect();
    let cfg = json!({ "eps": eps, "min_pts": min_pts, "transform": to_json(&transform) });
    let mut buf = Vec::new();
    artifacts::write_clusters(&mut buf, &Header::new("cluster", cfg), &out)?;
    emit(args.output.as_deref(), &buf)
}

/// Cluster labels in fit-table order.
fn join_clusters(fits: &[FitRecord], clusters: &[ClusterRecord]) -> Result<Vec<citebirth::ClusterAssignment>> {
    let by_id: HashMap<&str, &ClusterRecord> = clusters.iter().map(|c| (c.paper_id.as_str(), c)).collect();
    fits.iter()
        .map(|f| {
            by_id
                .get(f.paper_id.as_str())
                .map(|c| c.assignment)
                .ok_or_else(|| CliError::usage(format!("paper {} has a fit but no cluster label", f.paper_id)))
        })
        .collect()
}

/// Corpus histories in fit-table order.
fn join_histories(fits: &[FitRecord], histories: Vec<CitationHistory>) -> Result<Vec<CitationHistory>> {
    let mut by_id: HashMap<String, CitationHistory> = histories.into_iter().map(|h| (h.paper_id.clone(), h)).collect();
    fits.iter()
        .map(|f| {
            by_id
                .remove(&f.paper_id)
                .ok_or_else(|| CliError::usage(format!("paper {} has a fit but is not in the corpus", f.paper_id)))
        })
        .collect()
}

pub fn predict(args: PredictArgs, file: &FileConfig) -> Result<()> {
    let corpus = load_corpus(&args.input, &args.corpus, file)?;
    let (histories, _, producer) = filtered_histories(corpus, prepublication(&args.corpus, file));
    let (fits, fit_cfg) = read_fit_file(&args.fits)?;
    let (clusters, cluster_cfg) = read_cluster_file(&args.clusters)?;
    let assignments = join_clusters(&fits, &clusters)?;
    let histories = join_histories(&fits, histories)?;
    let corpus_end = resolve_corpus_end(args.corpus.corpus_end, file, &[producer.as_ref(), fit_cfg.as_ref()])?;
    let transform = cluster_cfg
        .as_ref()
        .and_then(|c| c.get("transform"))
        .and_then(|t| serde_json::from_value(t.clone()).ok())
        .or(file.transform)
        .unwrap_or_default();
    let train_grid = match args.train_grid.as_deref() {
        Some(s) => config::parse_grid(s).map_err(|e| CliError::usage(format!("--train-grid: {e}")))?,
        None => file.train_grid.clone().unwrap_or_else(default_train_grid),
    };
    let positive: Option<Label> = parse_flag(args.positive.as_deref(), "positive")?.or(file.positive);
    let config = EvalConfig {
        train_grid,
        min_age: pick(args.min_age, file.min_age, DEFAULT_MIN_AGE),
        corpus_end,
        transform,
        positive: positive.unwrap_or(Label::FastHi),
        fit: file.fit.unwrap_or_default(),
    };
    let fit_results: Vec<_> = fits.iter().map(|f| f.fit.clone()).collect();
    let grid =
        predict_grid(&histories, &fit_results, &assignments, &config).map_err(|e| CliError::usage(e.to_string()))?;
    let curve = match positive {
        Some(p) => grid.binary_curve(p),
        None => grid.multiclass_curve(),
    };
    let cfg = json!({
        "task": if positive.is_some() { "binary" } else { "multiclass" },
        "positive": positive.map(|p| p.as_str()),
        "train_grid": config.train_grid,
        "min_age": config.min_age,
        "corpus_end": corpus_end,
        "transform": to_json(&transform),
        "fit": to_json(&config.fit),
    });
    let mut buf = Vec::new();
    artifacts::write_curve(&mut buf, &Header::new("predict", cfg), &curve)?;
    emit(args.output.as_deref(), &buf)
}

pub fn enrich(args: EnrichArgs, _file: &FileConfig) -> Result<()> {
    let (fits, _) = read_fit_file(&args.fits)?;
    let (clusters, _) = read_cluster_file(&args.clusters)?;
    let assignments = join_clusters(&fits, &clusters)?;
    let journals: Vec<String> = fits.iter().map(|f| f.journal.clone()).collect();
    let report = enrichment(&assignments, &journals)?;
    let header = Header::new("enrich", json!({ "threshold": report.threshold }));
    let mut buf = Vec::new();
    artifacts::write_enrichment_table(&mut buf, &header, &report)?;
    emit(args.output.as_deref(), &buf)?;
    if let Some(path) = &args.log_output {
        let mut buf = Vec::new();
        artifacts::write_log_enrichment(&mut buf, &header, &report)?;
        emit(Some(path), &buf)?;
    }
    Ok(())
}

pub fn agedist(args: AgedistArgs, file: &FileConfig) -> Result<()> {
    let corpus = load_corpus(&args.input, &args.corpus, file)?;
    let (histories, _, producer) = filtered_histories(corpus, prepublication(&args.corpus, file));
    let (fits, fit_cfg) = read_fit_file(&args.fits)?;
    let histories = join_histories(&fits, histories)?;
    let corpus_end = resolve_corpus_end(args.corpus.corpus_end, file, &[producer.as_ref(), fit_cfg.as_ref()])?;
    let bins = file.age_bins.clone().unwrap_or_else(default_age_bins);
    let intervals = pick(args.intervals, file.r_intervals, config::DEFAULT_R_INTERVALS);
    let published: Vec<f64> = histories.iter().map(|h| h.published_at).collect();
    let fit_results: Vec<_> = fits.iter().map(|f| f.fit.clone()).collect();
    let dist = r_distribution_by_age(&fit_results, &published, corpus_end, &bins, intervals)
        .map_err(|e| CliError::usage(e.to_string()))?;
    let cfg = json!({ "corpus_end": corpus_end, "age_bins": to_json(&bins), "intervals": intervals });
    let mut buf = Vec::new();
    artifacts::write_agedist(&mut buf, &Header::new("agedist", cfg), &dist)?;
    emit(args.output.as_deref(), &buf)
}

fn read_curve(path: &Path) -> Result<Vec<(f64, f64, usize)>> {
    let text = read_text(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let bad = || CliError::usage(format!("{}: malformed curve row", path.display()));
        let t = rec.get(0).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let s = rec.get(1).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let n = rec.get(4).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        rows.push((t, s, n));
    }
    Ok(rows)
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

pub fn report(args: ReportArgs, _file: &FileConfig) -> Result<()> {
    let (fits, fit_cfg) = read_fit_file(&args.fits)?;
    let (clusters, cluster_cfg) = read_cluster_file(&args.clusters)?;
    let assignments = join_clusters(&fits, &clusters)?;

    let mut per_journal: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    let mut per_category: BTreeMap<String, usize> = BTreeMap::new();
    let mut params: BTreeMap<String, [Vec<f64>; 3]> = BTreeMap::new();
    for (f, a) in fits.iter().zip(&assignments) {
        let c = a.category();
        *per_journal
            .entry(f.journal.clone())
            .or_default()
            .entry(c.clone())
            .or_default() += 1;
        *per_category.entry(c.clone()).or_default() += 1;
        let p = params.entry(c).or_default();
        p[0].push(f.fit.params.a);
        p[1].push(f.fit.params.b);
        p[2].push(f.fit.params.r);
    }
    let medians: BTreeMap<String, Value> = params
        .into_iter()
        .map(|(c, [a, b, r])| (c, json!({ "a": median(a), "b": median(b), "r": median(r) })))
        .collect();
    let converged = fits.iter().filter(|f| f.fit.converged).count();
    let curve = match &args.curve {
        Some(p) => Some(
            read_curve(p)?
                .into_iter()
                .map(|(t, s, n)| json!({ "train_years": t, "success": s, "n": n }))
                .collect::<Vec<_>>(),
        ),
        None => None,
    };
    let summary = json!({
        "tool": "citebirth",
        "version": citebirth::VERSION,
        "command": "report",
        "upstream": { "fit": fit_cfg, "cluster": cluster_cfg },
        "papers": fits.len(),
        "converged": converged,
        "clusters": per_category,
        "journals": per_journal,
        "median_params": medians,
        "prediction": curve,
    });
    let text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::runtime(e.to_string()))?;
    emit(args.output.as_deref(), format!("{text}\n").as_bytes())
}
