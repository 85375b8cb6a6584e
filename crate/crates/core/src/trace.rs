//! Trace files: comma-separated text, one row per sample.
//!
//! Column order is fixed: `t`, `I_1..I_n`, `V_1..V_n`, `u_1..u_n`,
//! `eps_l_1..eps_l_n`, `eps_h_1..eps_h_n`, `mode_1..mode_n`. Numbers are
//! written with 17 significant digits so that a re-read reproduces every
//! `f64` exactly. `mode` is `1` for the strict controller and `0` for the
//! slack-relaxed one.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::sim::Trace;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("malformed trace: {0}")]
    Malformed(String),
}

/// The columns stored in a trace file.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub current: Vec<f64>,
    pub voltage: Vec<f64>,
    pub duty: Vec<f64>,
    pub eps_l: Vec<f64>,
    pub eps_h: Vec<f64>,
    pub strict: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceTable {
    pub nodes: usize,
    pub rows: Vec<TraceRow>,
}

impl From<&Trace> for TraceTable {
    fn from(trace: &Trace) -> Self {
        TraceTable {
            nodes: trace.node_count(),
            rows: trace
                .records
                .iter()
                .map(|r| TraceRow {
                    t: r.t,
                    current: r.current.clone(),
                    voltage: r.voltage.clone(),
                    duty: r.duty.clone(),
                    eps_l: r.eps_l.clone(),
                    eps_h: r.eps_h.clone(),
                    strict: r.strict.clone(),
                })
                .collect(),
        }
    }
}

const GROUPS: [&str; 6] = ["I", "V", "u", "eps_l", "eps_h", "mode"];

pub fn header(n: usize) -> Vec<String> {
    std::iter::once("t".to_string())
        .chain(
            GROUPS
                .iter()
                .flat_map(|g| (1..=n).map(move |i| format!("{g}_{i}"))),
        )
        .collect()
}

fn number(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_trace<W: Write>(out: W, table: &TraceTable) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(table.nodes))?;
    for row in &table.rows {
        let mut fields = vec![number(row.t)];
        for group in [&row.current, &row.voltage, &row.duty, &row.eps_l, &row.eps_h] {
            fields.extend(group.iter().map(|&x| number(x)));
        }
        fields.extend(row.strict.iter().map(|&s| if s { "1" } else { "0" }.to_string()));
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_file(path: &Path, table: &TraceTable) -> Result<(), TraceError> {
    write_trace(File::create(path)?, table)
}

pub fn read_trace<R: Read>(input: R) -> Result<TraceTable, TraceError> {
    let mut r = csv::Reader::from_reader(input);
    let head: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if head.len() < 7 || (head.len() - 1) % GROUPS.len() != 0 {
        return Err(TraceError::Malformed(format!(
            "unexpected column count {}",
            head.len()
        )));
    }
    let n = (head.len() - 1) / GROUPS.len();
    if head != header(n) {
        return Err(TraceError::Malformed("unexpected column names".into()));
    }

    let mut rows = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record?;
        let parse = |j: usize| -> Result<f64, TraceError> {
            record[j].trim().parse::<f64>().map_err(|e| {
                TraceError::Malformed(format!("row {}, column {}: {e}", line + 1, head[j]))
            })
        };
        let group = |g: usize| -> Result<Vec<f64>, TraceError> {
            (0..n).map(|i| parse(1 + g * n + i)).collect()
        };
        let strict = (0..n)
            .map(|i| match record[1 + 5 * n + i].trim() {
                "1" => Ok(true),
                "0" => Ok(false),
                other => Err(TraceError::Malformed(format!(
                    "row {}, column mode_{}: expected 0 or 1, got {other:?}",
                    line + 1,
                    i + 1
                ))),
            })
            .collect::<Result<_, _>>()?;
        rows.push(TraceRow {
            t: parse(0)?,
            current: group(0)?,
            voltage: group(1)?,
            duty: group(2)?,
            eps_l: group(3)?,
            eps_h: group(4)?,
            strict,
        });
    }
    Ok(TraceTable { nodes: n, rows })
}

pub fn read_trace_file(path: &Path) -> Result<TraceTable, TraceError> {
    read_trace(File::open(path)?)
}
