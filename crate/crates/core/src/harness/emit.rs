use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use super::run::ExperimentRecord;
use crate::error::{Error, Result};

/// Summary CSV columns, in order.
pub const COLUMNS: [&str; 21] = [
    "scheme",
    "n",
    "edge_count",
    "k",
    "L",
    "C0",
    "q_max",
    "q_prime_max",
    "kappa",
    "m",
    "m1",
    "m2",
    "epsilon",
    "gamma",
    "trials",
    "seed",
    "distortion_max",
    "load_delivered",
    "clip_count",
    "norm_violations",
    "wall_ms",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    JsonLines,
}

/// One summary row. Optional fields are empty when they do not apply to
/// the scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scheme: String,
    pub n: usize,
    pub edge_count: usize,
    pub k: usize,
    #[serde(rename = "L")]
    pub packet_length: u32,
    #[serde(rename = "C0")]
    pub capacity: f64,
    pub q_max: f64,
    pub q_prime_max: Option<f64>,
    pub kappa: Option<f64>,
    pub m: f64,
    pub m1: Option<usize>,
    pub m2: Option<usize>,
    pub epsilon: Option<f64>,
    pub gamma: Option<f64>,
    pub trials: usize,
    pub seed: u64,
    pub distortion_max: f64,
    pub load_delivered: f64,
    pub clip_count: usize,
    pub norm_violations: usize,
    pub wall_ms: u64,
}

impl From<&ExperimentRecord> for SummaryRow {
    fn from(r: &ExperimentRecord) -> Self {
        Self {
            scheme: r.config.scheme.to_string(),
            n: r.config.network.nodes,
            edge_count: r.config.network.edges,
            k: r.config.source.sparsity,
            packet_length: r.packet_length,
            capacity: r.config.network.capacity,
            q_max: r.config.source.q_max,
            q_prime_max: r.q_prime_max,
            kappa: r.kappa,
            m: r.m,
            m1: r.m1,
            m2: r.m2,
            epsilon: r.epsilon,
            gamma: r.gamma,
            trials: r.config.trials,
            seed: r.config.seed,
            distortion_max: r.distortion_max,
            load_delivered: r.load_delivered,
            clip_count: r.clip_count,
            norm_violations: r.norm_violations,
            wall_ms: r.wall_ms,
        }
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt<T>(value: Option<T>, f: impl Fn(T) -> String) -> String {
    value.map(f).unwrap_or_default()
}

impl SummaryRow {
    fn fields(&self) -> [String; 21] {
        [
            self.scheme.clone(),
            self.n.to_string(),
            self.edge_count.to_string(),
            self.k.to_string(),
            self.packet_length.to_string(),
            format_float(self.capacity),
            format_float(self.q_max),
            opt(self.q_prime_max, format_float),
            opt(self.kappa, format_float),
            format_float(self.m),
            opt(self.m1, |v| v.to_string()),
            opt(self.m2, |v| v.to_string()),
            opt(self.epsilon, format_float),
            opt(self.gamma, format_float),
            self.trials.to_string(),
            self.seed.to_string(),
            format_float(self.distortion_max),
            format_float(self.load_delivered),
            self.clip_count.to_string(),
            self.norm_violations.to_string(),
            self.wall_ms.to_string(),
        ]
    }
}

pub fn write_csv<W: Write>(records: &[ExperimentRecord], mut writer: W) -> Result<()> {
    writeln!(writer, "{}", COLUMNS.join(","))?;
    for record in records {
        writeln!(writer, "{}", SummaryRow::from(record).fields().join(","))?;
    }
    writer.flush()?;
    Ok(())
}

pub fn to_csv_string(records: &[ExperimentRecord]) -> String {
    let mut out = Vec::new();
    write_csv(records, &mut out).expect("writing to memory cannot fail");
    String::from_utf8(out).expect("summary CSV is ASCII")
}

/// Parse a summary CSV, checking the header against [`COLUMNS`].
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<SummaryRow>> {
    let mut csv = csv::Reader::from_reader(reader);
    let header: Vec<String> = csv.headers()?.iter().map(str::to_owned).collect();
    if header != COLUMNS {
        return Err(Error::parse(
            1,
            format!("unexpected summary columns: {}", header.join(",")),
        ));
    }
    csv.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_jsonl<W: Write>(records: &[ExperimentRecord], mut writer: W) -> Result<()> {
    for record in records {
        serde_json::to_writer(&mut writer, record)?;
        writeln!(writer)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<ExperimentRecord>> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))?);
    }
    Ok(records)
}

pub fn emit<W: Write>(records: &[ExperimentRecord], format: Format, writer: W) -> Result<()> {
    match format {
        Format::Csv => write_csv(records, writer),
        Format::JsonLines => write_jsonl(records, writer),
    }
}
