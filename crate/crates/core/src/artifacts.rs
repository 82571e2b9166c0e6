//! CSV artifacts passed between pipeline stages.
//!
//! Every file starts with `#` lines naming the tool version, the producing
//! command and its configuration as JSON. Floats are written in shortest
//! round-trip form, so reading a file back reproduces the values exactly.

use std::io::{Read, Write};

use crate::analytics::{EnrichmentReport, RDistribution};
use crate::cluster::{ClusterAssignment, Label};
use crate::error::{Error, Result};
use crate::fit::FitResult;
use crate::model::ModelParams;
use crate::predict::PredictionCurve;

pub const FIT_COLUMNS: [&str; 9] = [
    "paper_id",
    "journal",
    "a",
    "b",
    "r",
    "logL",
    "converged",
    "n_events",
    "window_T",
];
pub const CLUSTER_COLUMNS: [&str; 6] = ["paper_id", "raw_id", "label", "v0", "ar", "inv_r"];
pub const CURVE_COLUMNS: [&str; 5] = ["train_years", "success", "precision", "recall", "n"];

/// Provenance written at the top of each artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub command: String,
    pub config: serde_json::Value,
}

impl Header {
    pub fn new(command: impl Into<String>, config: serde_json::Value) -> Self {
        Self {
            command: command.into(),
            config,
        }
    }

    pub fn write<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "# citebirth {}", crate::VERSION)?;
        writeln!(out, "# command: {}", self.command)?;
        writeln!(out, "# config: {}", serde_json::to_string(&self.config)?)?;
        Ok(())
    }
}

/// Reads the `# config:` line of an artifact, if any.
pub fn read_config(text: &str) -> Option<serde_json::Value> {
    text.lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.strip_prefix("# config: "))
        .and_then(|j| serde_json::from_str(j).ok())
}

/// Shortest round-trip text, in exponent form for very small or large magnitudes.
pub fn fmt_f64(v: f64) -> String {
    let m = v.abs();
    if m != 0.0 && m.is_finite() && !(1e-4..1e16).contains(&m) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn writer<W: Write>(mut out: W, header: &Header, columns: &[&str]) -> Result<csv::Writer<W>> {
    header.write(&mut out)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(columns)?;
    Ok(w)
}

fn reader<R: Read>(input: R, columns: &[&str]) -> Result<csv::Reader<R>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let headers = rdr.headers()?;
    if headers.iter().ne(columns.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected columns {}", columns.join(",")),
        });
    }
    Ok(rdr)
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let line = rec.position().map_or(0, |p| p.line() as usize);
    let raw = rec.get(i).ok_or_else(|| Error::Parse {
        line,
        message: format!("missing {name}"),
    })?;
    raw.parse().map_err(|e: T::Err| Error::Parse {
        line,
        message: format!("bad {name} {raw:?}: {e}"),
    })
}

/// One row of the fit table.
#[derive(Debug, Clone, PartialEq)]
pub struct FitRecord {
    pub paper_id: String,
    pub journal: String,
    pub fit: FitResult,
}

pub fn write_fits<W: Write>(out: W, header: &Header, records: &[FitRecord]) -> Result<()> {
    let mut w = writer(out, header, &FIT_COLUMNS)?;
    for rec in records {
        let f = &rec.fit;
        w.write_record([
            rec.paper_id.clone(),
            rec.journal.clone(),
            fmt_f64(f.params.a),
            fmt_f64(f.params.b),
            fmt_f64(f.params.r),
            fmt_f64(f.log_likelihood),
            f.converged.to_string(),
            f.n_events.to_string(),
            fmt_f64(f.window_t),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a fit table. Iteration counts and starting points are not stored,
/// so they come back as zero and the fitted values respectively.
pub fn read_fits<R: Read>(input: R) -> Result<Vec<FitRecord>> {
    let mut rdr = reader(input, &FIT_COLUMNS)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let params = ModelParams {
            a: parse_field(&rec, 2, "a")?,
            b: parse_field(&rec, 3, "b")?,
            r: parse_field(&rec, 4, "r")?,
        };
        out.push(FitRecord {
            paper_id: rec[0].to_string(),
            journal: rec[1].to_string(),
            fit: FitResult {
                params,
                log_likelihood: parse_field(&rec, 5, "logL")?,
                converged: parse_field(&rec, 6, "converged")?,
                iterations: 0,
                window_t: parse_field(&rec, 8, "window_T")?,
                initial_guess: params,
                n_events: parse_field(&rec, 7, "n_events")?,
            },
        });
    }
    Ok(out)
}

/// One row of the cluster table.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterRecord {
    pub paper_id: String,
    pub assignment: ClusterAssignment,
    pub v0: f64,
    pub ar: f64,
    pub inv_r: f64,
}

pub fn write_clusters<W: Write>(out: W, header: &Header, records: &[ClusterRecord]) -> Result<()> {
    let mut w = writer(out, header, &CLUSTER_COLUMNS)?;
    for rec in records {
        w.write_record([
            rec.paper_id.clone(),
            rec.assignment.raw_id.to_string(),
            rec.assignment.label.as_str().to_string(),
            fmt_f64(rec.v0),
            fmt_f64(rec.ar),
            fmt_f64(rec.inv_r),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_clusters<R: Read>(input: R) -> Result<Vec<ClusterRecord>> {
    let mut rdr = reader(input, &CLUSTER_COLUMNS)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let label: Label = parse_field(&rec, 2, "label")?;
        out.push(ClusterRecord {
            paper_id: rec[0].to_string(),
            assignment: ClusterAssignment {
                raw_id: parse_field(&rec, 1, "raw_id")?,
                label,
            },
            v0: parse_field(&rec, 3, "v0")?,
            ar: parse_field(&rec, 4, "ar")?,
            inv_r: parse_field(&rec, 5, "inv_r")?,
        });
    }
    Ok(out)
}

/// Writes a prediction curve; precision and recall are blank for the
/// multiclass task and for undefined points.
pub fn write_curve<W: Write>(out: W, header: &Header, curve: &PredictionCurve) -> Result<()> {
    let mut w = writer(out, header, &CURVE_COLUMNS)?;
    for (i, &t) in curve.training_years.iter().enumerate() {
        let pick = |v: &Option<Vec<Option<f64>>>| fmt_opt(v.as_ref().and_then(|v| v[i]));
        w.write_record([
            fmt_f64(t),
            fmt_f64(curve.success_rate[i]),
            pick(&curve.precision),
            pick(&curve.recall),
            curve.n_evaluated[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Journal rows with the paper count and one-sided p-value per category.
pub fn write_enrichment_table<W: Write>(out: W, header: &Header, report: &EnrichmentReport) -> Result<()> {
    let mut columns = vec!["journal".to_string(), "whole".to_string()];
    for c in &report.categories {
        columns.push(c.clone());
        columns.push(format!("{c}_p"));
    }
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut w = writer(out, header, &cols)?;
    for j in &report.journals {
        let mut row = vec![j.clone()];
        let mut whole = None;
        for c in &report.categories {
            let cell = report.cell(j, c).expect("every journal has every category");
            whole.get_or_insert(cell.n_j);
            row.push(cell.n_cj.to_string());
            row.push(fmt_opt(cell.p_value));
        }
        row.insert(1, whole.unwrap_or(0).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format enrichment: one row per (journal, category).
pub fn write_log_enrichment<W: Write>(out: W, header: &Header, report: &EnrichmentReport) -> Result<()> {
    let columns = [
        "journal",
        "category",
        "n_cj",
        "n_j",
        "f_cj",
        "f_c_whole",
        "E",
        "logE",
        "p_value",
        "significant",
    ];
    let mut w = writer(out, header, &columns)?;
    for c in &report.cells {
        w.write_record([
            c.journal.clone(),
            c.category.clone(),
            c.n_cj.to_string(),
            c.n_j.to_string(),
            fmt_opt(c.f_cj),
            fmt_f64(c.f_c_whole),
            fmt_opt(c.enrichment),
            fmt_opt(c.log_enrichment),
            fmt_opt(c.p_value),
            c.significant.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Histogram rows of `log10 r` per age bin, with the bin's size and median r.
pub fn write_agedist<W: Write>(out: W, header: &Header, dist: &RDistribution) -> Result<()> {
    let columns = ["age_bin", "n", "median_r", "log10_r_lo", "log10_r_hi", "count"];
    let mut w = writer(out, header, &columns)?;
    for h in &dist.histograms {
        for (k, &count) in h.counts.iter().enumerate() {
            w.write_record([
                h.bin.label(),
                h.n.to_string(),
                fmt_opt(h.median_r),
                fmt_f64(dist.edges_log10[k]),
                fmt_f64(dist.edges_log10[k + 1]),
                count.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> Header {
        Header::new("test", serde_json::json!({"seed": 7, "eps": 0.5}))
    }

    #[test]
    fn fit_table_round_trips() {
        let params = ModelParams::new(0.1 + 0.2, 1.0 / 3.0, std::f64::consts::LN_2 / 13.0).unwrap();
        let rec = FitRecord {
            paper_id: "P1".into(),
            journal: "PR, B".into(),
            fit: FitResult {
                params,
                log_likelihood: -123.456789012345,
                converged: true,
                iterations: 0,
                window_t: 37.25,
                initial_guess: params,
                n_events: 42,
            },
        };
        let mut buf = Vec::new();
        write_fits(&mut buf, &header(), std::slice::from_ref(&rec)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# citebirth "));
        assert_eq!(read_config(&text).unwrap()["seed"], 7);
        assert_eq!(read_fits(text.as_bytes()).unwrap(), vec![rec]);
    }

    #[test]
    fn cluster_table_round_trips() {
        let recs = vec![
            ClusterRecord {
                paper_id: "a".into(),
                assignment: ClusterAssignment {
                    raw_id: 0,
                    label: Label::FastHi,
                },
                v0: 1.5,
                ar: 0.1,
                inv_r: 20.0,
            },
            ClusterRecord {
                paper_id: "b".into(),
                assignment: ClusterAssignment::noise(),
                v0: 1e-300,
                ar: 0.0,
                inv_r: 1e10,
            },
        ];
        let mut buf = Vec::new();
        write_clusters(&mut buf, &header(), &recs).unwrap();
        assert_eq!(read_clusters(buf.as_slice()).unwrap(), recs);
        assert!(String::from_utf8(buf).unwrap().contains(",1e-300,"));
    }

    #[test]
    fn float_text_round_trips() {
        for v in [
            0.0,
            -0.0,
            1.0,
            0.1,
            1e-4,
            9.99e-5,
            1e-300,
            5e-324,
            1e16,
            123456.789,
            f64::MAX,
            -2.5e-9,
        ] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits(), "{v}");
        }
        assert_eq!(fmt_f64(1e-8), "1e-8");
    }

    #[test]
    fn wrong_columns_are_rejected() {
        assert!(read_fits("paper_id,raw_id\n".as_bytes()).is_err());
        assert!(read_clusters("# x\npaper_id,journal,a,b,r,logL,converged,n_events,window_T\n".as_bytes()).is_err());
    }

    #[test]
    fn curve_blanks_missing_values() {
        let curve = PredictionCurve {
            training_years: vec![1.0, 2.0],
            success_rate: vec![0.5, 1.0],
            precision: Some(vec![None, Some(0.25)]),
            recall: Some(vec![Some(0.0), Some(1.0)]),
            n_evaluated: vec![4, 4],
            confusion: None,
        };
        let mut buf = Vec::new();
        write_curve(&mut buf, &header(), &curve).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(
            body,
            ["train_years,success,precision,recall,n", "1,0.5,,0,4", "2,1,0.25,1,4"]
        );
    }
}
