//! Corpus files and the corpus filtering rules.
//!
//! Two layouts are read:
//!
//! * JSONL, one paper per line:
//!   `{"id": .., "journal": .., "published": .., "citations": [..]}` with
//!   optional `"time_base"` (`"calendar"`, the default, or
//!   `"since_publication"`) and `"group"` fields. A line holding a single
//!   `"_meta"` key carries run metadata and is not a paper.
//! * CSV long format with header `paper_id,journal,published,citation_date`
//!   (optional `group` column), one row per citation. A paper without
//!   citations has one row with an empty `citation_date`. Lines starting with
//!   `#` are comments.
//!
//! Dates are decimal years or ISO calendar dates (`YYYY`, `YYYY-MM`,
//! `YYYY-MM-DD`).

use std::collections::HashMap;
use std::io::{BufRead, Write};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulate::{CitationHistory, Paper};

/// Offset added per repeated timestamp, years.
pub const TIE_STEP: f64 = 1e-9;

/// Fraction of malformed rows above which loading fails outright.
pub const MAX_MALFORMED_FRACTION: f64 = 0.10;

/// Paper's citation threshold: keep papers with more than this many citations.
pub const MIN_CITATIONS_EXCLUSIVE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    #[default]
    Jsonl,
    Csv,
}

impl std::str::FromStr for CorpusFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "csv" => Ok(CorpusFormat::Csv),
            other => Err(Error::Domain(format!("unknown corpus format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TimeBase {
    #[default]
    Calendar,
    SincePublication,
}

/// A date as written in a corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DateValue {
    Year(f64),
    Text(String),
}

impl DateValue {
    pub fn to_decimal_year(&self) -> std::result::Result<f64, String> {
        match self {
            DateValue::Year(y) if y.is_finite() => Ok(*y),
            DateValue::Year(y) => Err(format!("non-finite date {y}")),
            DateValue::Text(s) => parse_date(s),
        }
    }
}

/// Parses a decimal year or an ISO date into a decimal year.
pub fn parse_date(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    if let Ok(y) = s.parse::<f64>() {
        return if y.is_finite() {
            Ok(y)
        } else {
            Err(format!("non-finite date {s:?}"))
        };
    }
    let padded = match s.len() {
        7 => format!("{s}-01"),
        _ => s.to_string(),
    };
    let d = NaiveDate::parse_from_str(&padded, "%Y-%m-%d").map_err(|e| format!("bad date {s:?}: {e}"))?;
    let year_len = if d.leap_year() { 366.0 } else { 365.0 };
    Ok(d.year() as f64 + f64::from(d.ordinal0()) / year_len)
}

/// One paper as stored in a JSONL corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub journal: String,
    pub published: DateValue,
    #[serde(default)]
    pub citations: Vec<DateValue>,
    #[serde(default, skip_serializing_if = "is_calendar")]
    pub time_base: TimeBase,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

fn is_calendar(t: &TimeBase) -> bool {
    *t == TimeBase::Calendar
}

/// A loaded paper, with any pre-publication citation times kept aside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestedPaper {
    pub paper: Paper,
    /// Negative times (years since publication), sorted.
    pub prepublication: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadedCorpus {
    pub papers: Vec<IngestedPaper>,
    pub errors: Vec<RowError>,
    pub warnings: Vec<String>,
    /// Contents of a JSONL `_meta` line, if present.
    pub meta: Option<serde_json::Value>,
}

impl LoadedCorpus {
    pub fn histories(&self) -> Vec<CitationHistory> {
        self.papers.iter().map(|p| p.paper.history.clone()).collect()
    }
}

/// Sorts relative times, splits off negatives, and separates exact ties.
///
/// Run member `k` of a tied run moves by `k·TIE_STEP`; publication itself
/// occupies `t = 0`, so events at zero start from `k = 1`.
fn normalize_times(mut times: Vec<f64>) -> (Vec<f64>, Vec<f64>, usize) {
    times.sort_by(f64::total_cmp);
    let split = times.partition_point(|&t| t < 0.0);
    let events = times.split_off(split);
    let pre = times;
    let mut out: Vec<f64> = Vec::with_capacity(events.len());
    let mut perturbed = 0;
    let mut i = 0;
    while i < events.len() {
        let v = events[i];
        let run = events[i..].iter().take_while(|&&x| x == v).count();
        let first_k = usize::from(v == 0.0);
        for j in 0..run {
            let k = first_k + j;
            let mut t = v + k as f64 * TIE_STEP;
            if k > 0 {
                perturbed += 1;
            }
            if let Some(&last) = out.last() {
                if t <= last {
                    t = last.next_up();
                }
            }
            out.push(t);
        }
        i += run;
    }
    (out, pre, perturbed)
}

fn build_paper(
    id: String,
    journal: String,
    published: f64,
    rel_times: Vec<f64>,
    group: Option<String>,
    warnings: &mut Vec<String>,
) -> IngestedPaper {
    let (events, prepublication, perturbed) = normalize_times(rel_times);
    if perturbed > 0 {
        let msg = format!("paper {id}: separated {perturbed} tied citation timestamps");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    IngestedPaper {
        paper: Paper {
            history: CitationHistory {
                paper_id: id,
                journal,
                published_at: published,
                events,
            },
            group,
        },
        prepublication,
    }
}

fn record_to_paper(rec: CorpusRecord, warnings: &mut Vec<String>) -> std::result::Result<IngestedPaper, String> {
    if rec.id.is_empty() {
        return Err("empty paper id".into());
    }
    let published = rec.published.to_decimal_year()?;
    let rel = rec
        .citations
        .iter()
        .map(|c| {
            let v = c.to_decimal_year()?;
            Ok(match rec.time_base {
                TimeBase::Calendar => v - published,
                TimeBase::SincePublication => v,
            })
        })
        .collect::<std::result::Result<Vec<f64>, String>>()?;
    Ok(build_paper(rec.id, rec.journal, published, rel, rec.group, warnings))
}

fn check_malformed(errors: &[RowError], rows: usize) -> Result<()> {
    if rows > 0 && errors.len() as f64 > MAX_MALFORMED_FRACTION * rows as f64 {
        let first = &errors[0];
        return Err(Error::TooManyMalformed {
            malformed: errors.len(),
            total: rows,
            first_line: first.line,
            first_message: first.message.clone(),
        });
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(reader: R) -> Result<LoadedCorpus> {
    let mut corpus = LoadedCorpus::default();
    let mut rows = 0;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        if let Ok(serde_json::Value::Object(map)) = serde_json::from_str::<serde_json::Value>(&line) {
            if map.len() == 1 && map.contains_key("_meta") {
                corpus.meta = map.get("_meta").cloned();
                continue;
            }
        }
        rows += 1;
        let parsed = serde_json::from_str::<CorpusRecord>(&line)
            .map_err(|e| e.to_string())
            .and_then(|rec| record_to_paper(rec, &mut corpus.warnings));
        match parsed {
            Ok(p) => corpus.papers.push(p),
            Err(message) => corpus.errors.push(RowError { line: line_no, message }),
        }
    }
    check_malformed(&corpus.errors, rows)?;
    Ok(corpus)
}

pub fn read_csv<R: std::io::Read>(reader: R) -> Result<LoadedCorpus> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(c_id), Some(c_journal), Some(c_pub), Some(c_cite)) =
        (col("paper_id"), col("journal"), col("published"), col("citation_date"))
    else {
        return Err(Error::Parse {
            line: 1,
            message: "CSV header must contain paper_id, journal, published, citation_date".into(),
        });
    };
    let c_group = col("group");

    struct Acc {
        journal: String,
        published: f64,
        group: Option<String>,
        rel: Vec<f64>,
    }
    let mut order: Vec<String> = Vec::new();
    let mut acc: HashMap<String, Acc> = HashMap::new();
    let mut corpus = LoadedCorpus::default();
    let mut rows = 0;
    for rec in rdr.records() {
        rows += 1;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                corpus.errors.push(RowError {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let parsed = (|| -> std::result::Result<(), String> {
            let field = |i: usize| rec.get(i).ok_or_else(|| format!("missing column {i}"));
            let id = field(c_id)?.to_string();
            if id.is_empty() {
                return Err("empty paper id".into());
            }
            let journal = field(c_journal)?.to_string();
            let published = parse_date(field(c_pub)?)?;
            let group = c_group
                .and_then(|g| rec.get(g))
                .filter(|g| !g.is_empty())
                .map(str::to_string);
            let cite = field(c_cite)?;
            let rel = if cite.is_empty() {
                None
            } else {
                Some(parse_date(cite)? - published)
            };
            let entry = acc.entry(id.clone()).or_insert_with(|| {
                order.push(id.clone());
                Acc {
                    journal: journal.clone(),
                    published,
                    group: group.clone(),
                    rel: vec![],
                }
            });
            if entry.journal != journal || entry.published != published {
                return Err(format!(
                    "paper {id}: journal or publication date differs from earlier rows"
                ));
            }
            entry.rel.extend(rel);
            Ok(())
        })();
        if let Err(message) = parsed {
            corpus.errors.push(RowError { line, message });
        }
    }
    check_malformed(&corpus.errors, rows)?;
    for id in order {
        let a = acc.remove(&id).expect("accumulated paper");
        let p = build_paper(id, a.journal, a.published, a.rel, a.group, &mut corpus.warnings);
        corpus.papers.push(p);
    }
    Ok(corpus)
}

/// Loads a corpus file in the given format.
pub fn load_corpus(path: &std::path::Path, format: CorpusFormat) -> Result<LoadedCorpus> {
    let file = std::fs::File::open(path)?;
    match format {
        CorpusFormat::Jsonl => read_jsonl(std::io::BufReader::new(file)),
        CorpusFormat::Csv => read_csv(file),
    }
}

/// Writes papers as JSONL with times relative to publication, so reading the
/// file back reproduces every value exactly.
pub fn write_jsonl<W: Write>(mut out: W, papers: &[Paper], meta: Option<&serde_json::Value>) -> Result<()> {
    if let Some(m) = meta {
        serde_json::to_writer(&mut out, &serde_json::json!({ "_meta": m }))?;
        out.write_all(b"\n")?;
    }
    for p in papers {
        let h = &p.history;
        let rec = CorpusRecord {
            id: h.paper_id.clone(),
            journal: h.journal.clone(),
            published: DateValue::Year(h.published_at),
            citations: h.events.iter().map(|&t| DateValue::Year(t)).collect(),
            time_base: TimeBase::SincePublication,
            group: p.group.clone(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Writes the CSV long format with calendar (decimal-year) citation dates.
pub fn write_csv<W: Write>(out: W, papers: &[Paper]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["paper_id", "journal", "published", "citation_date", "group"])?;
    for p in papers {
        let h = &p.history;
        let published = h.published_at.to_string();
        let group = p.group.clone().unwrap_or_default();
        if h.events.is_empty() {
            w.write_record([h.paper_id.as_str(), &h.journal, &published, "", &group])?;
        }
        for &t in &h.events {
            let date = (h.published_at + t).to_string();
            w.write_record([h.paper_id.as_str(), &h.journal, &published, &date, &group])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// What to do with citations dated before publication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PrepublicationPolicy {
    /// Exclude the whole paper.
    #[default]
    DropPaper,
    /// Keep the paper, discard the offending citations.
    DropEvents,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ExclusionReason {
    CitedBeforePublication { events: usize },
    TooFewCitations { count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub paper_id: String,
    pub reason: ExclusionReason,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FilterReport {
    pub input: usize,
    pub kept: usize,
    pub excluded: Vec<Exclusion>,
}

/// Keeps papers with more than [`MIN_CITATIONS_EXCLUSIVE`] citations and
/// applies the pre-publication policy.
pub fn filter_corpus(papers: Vec<IngestedPaper>, policy: PrepublicationPolicy) -> (Vec<IngestedPaper>, FilterReport) {
    let mut report = FilterReport {
        input: papers.len(),
        ..FilterReport::default()
    };
    let mut kept = Vec::with_capacity(papers.len());
    for mut p in papers {
        let id = p.paper.history.paper_id.clone();
        if !p.prepublication.is_empty() {
            match policy {
                PrepublicationPolicy::DropPaper => {
                    report.excluded.push(Exclusion {
                        paper_id: id,
                        reason: ExclusionReason::CitedBeforePublication {
                            events: p.prepublication.len(),
                        },
                    });
                    continue;
                }
                PrepublicationPolicy::DropEvents => p.prepublication.clear(),
            }
        }
        let count = p.paper.history.len();
        if count <= MIN_CITATIONS_EXCLUSIVE {
            report.excluded.push(Exclusion {
                paper_id: id,
                reason: ExclusionReason::TooFewCitations { count },
            });
            continue;
        }
        kept.push(p);
    }
    report.kept = kept.len();
    (kept, report)
}
