//! CSV and JSON-lines output. Floats are written in shortest round-trip form
//! so identical runs give identical bytes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Serialize;

use crate::harness::ReportTable;
use crate::metric::MetricEval;
use crate::potential::RobinJet;
use crate::Result;

pub const TABLE_HEADER: [&str; 6] = ["t", "value_re", "value_im", "predicted_re", "predicted_im", "gap"];
pub const JET_HEADER: [&str; 5] = ["multi_index_A", "multi_index_B", "re", "im", "err_est"];
pub const SUMMARY_HEADER: [&str; 10] =
    ["id", "limit_re", "limit_im", "predicted_re", "predicted_im", "gap", "order", "spread", "tolerance", "pass"];

/// Shortest round-trip form, with an exponent for very small or large values.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

fn f(x: f64) -> String {
    num(x)
}

fn opt(x: Option<f64>) -> String {
    x.map(f).unwrap_or_default()
}

fn index(v: &[u8]) -> String {
    v.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(";")
}

/// Writes a header and rows with the `csv` crate.
pub fn write_csv<S: AsRef<str>>(path: &Path, header: &[S], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header.iter().map(|h| h.as_ref()))?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn jet_rows(jet: &RobinJet) -> Vec<Vec<String>> {
    jet.entries().into_iter().map(|(idx, v, e)| vec![index(&idx.a), index(&idx.b), f(v.re), f(v.im), f(e)]).collect()
}

pub fn point_header(prefix: &str, n: usize) -> Vec<String> {
    let mut h: Vec<String> = (1..=n).map(|k| format!("{prefix}_re{k}")).collect();
    h.extend((1..=n).map(|k| format!("{prefix}_im{k}")));
    h
}

fn point_cells(z: &[Complex64]) -> Vec<String> {
    z.iter().map(|x| f(x.re)).chain(z.iter().map(|x| f(x.im))).collect()
}

pub fn metric_header(n: usize) -> Vec<String> {
    let mut h = point_header("z", n);
    for a in 1..=n {
        for b in 1..=n {
            h.push(format!("g{a}{b}_re"));
            h.push(format!("g{a}{b}_im"));
        }
    }
    h.push("det_g".into());
    h
}

pub fn metric_row(me: &MetricEval) -> Vec<String> {
    let mut r = point_cells(&me.z);
    for row in &me.g {
        for x in row {
            r.push(f(x.re));
            r.push(f(x.im));
        }
    }
    r.push(f(me.det_g));
    r
}

pub fn curvature_header(n: usize) -> Vec<String> {
    let mut h = point_header("z", n);
    h.extend(point_header("v", n));
    h.push("r".into());
    h
}

pub fn curvature_row(z: &[Complex64], v: &[Complex64], r: f64) -> Vec<String> {
    let mut row = point_cells(z);
    row.extend(point_cells(v));
    row.push(f(r));
    row
}

pub fn table_rows(t: &ReportTable) -> Vec<Vec<String>> {
    t.rows
        .iter()
        .map(|r| vec![f(r.t), f(r.value.re), f(r.value.im), f(r.predicted.re), f(r.predicted.im), f(r.gap)])
        .collect()
}

pub fn summary_row(t: &ReportTable) -> Vec<String> {
    let lim = t.extrapolated();
    vec![
        t.id.clone(),
        opt(lim.map(|l| l.re)),
        opt(lim.map(|l| l.im)),
        f(t.predicted.re),
        f(t.predicted.im),
        f(t.gap),
        opt(t.limit.and_then(|l| l.order)),
        f(t.spread),
        opt(t.tolerance),
        t.pass.map(|p| p.to_string()).unwrap_or_default(),
    ]
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Report,
}

/// One JSON line per experiment.
#[derive(Clone, Debug, Serialize)]
pub struct SummaryLine {
    pub id: String,
    pub kind: String,
    pub status: Status,
    pub values: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

pub fn write_jsonl(path: &Path, lines: &[SummaryLine]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for l in lines {
        serde_json::to_writer(&mut w, l).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Matplotlib script that plots every table CSV as value against `t`.
pub fn plot_script(tables: &[PathBuf]) -> String {
    let names: Vec<String> = tables.iter().filter_map(|p| p.file_name()).map(|n| format!("    \"{}\",", n.to_string_lossy())).collect();
    format!(
        "# generated; plots value and prediction against t for each table\n\
import csv, os, sys\n\
import matplotlib.pyplot as plt\n\
\n\
TABLES = [\n{}\n]\n\
\n\
here = os.path.dirname(os.path.abspath(sys.argv[0]))\n\
for name in TABLES:\n\
    with open(os.path.join(here, name)) as fh:\n\
        rows = list(csv.DictReader(fh))\n\
    t = [float(r[\"t\"]) for r in rows]\n\
    plt.figure()\n\
    plt.semilogx(t, [float(r[\"value_re\"]) for r in rows], \"o-\", label=\"value\")\n\
    plt.semilogx(t, [float(r[\"predicted_re\"]) for r in rows], \"--\", label=\"predicted\")\n\
    plt.xlabel(\"t\")\n\
    plt.title(name)\n\
    plt.legend()\n\
    plt.savefig(os.path.join(here, name.replace(\".csv\", \".png\")))\n",
        names.join("\n")
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::ball_robin_jet;
    use crate::domain::c;

    #[test]
    fn jet_csv_has_header_and_rows() {
        let dir = std::env::temp_dir().join(format!("rf_report_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let jet = ball_robin_jet(&[c(0.0, 0.0), c(0.0, 0.0)], 1.0, &[c(0.1, 0.0), c(0.0, 0.2)], 2).unwrap();
        let path = dir.join("jet.csv");
        write_csv(&path, &JET_HEADER, &jet_rows(&jet)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("multi_index_A,multi_index_B,re,im,err_est"));
        assert_eq!(lines.count(), 15);
        assert!(text.contains("0;0,0;0,"));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn headers_match_row_widths() {
        let me = crate::metric::metric_at(&ball_robin_jet(&[c(0.0, 0.0); 2], 1.0, &[c(0.3, 0.0), c(0.0, 0.0)], 2).unwrap()).unwrap();
        assert_eq!(metric_header(2).len(), metric_row(&me).len());
        assert_eq!(curvature_header(2).len(), curvature_row(&me.z, &me.z, 0.0).len());
        assert!(plot_script(&[PathBuf::from("a/b.csv")]).contains("\"b.csv\""));
    }
}
