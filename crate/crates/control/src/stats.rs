//! `stats`: offline summary of a capture file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Duration;

use clap::Args;
use serde::Serialize;
use stgen_core::analytics::{
    bucket_distribution, compute_delay_stats, deltas_by_stream, read_ndjson, type_totals,
    CaptureRecord, DelayStats, DistributionBucket, ImportError, TypeTotals,
};
use stgen_core::sensor::SensorType;
use thiserror::Error;

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    /// Capture NDJSON file written by the core
    #[arg(long)]
    pub input: PathBuf,
    /// Plain-text tables (the default)
    #[arg(long, conflicts_with = "json")]
    pub table: bool,
    /// One JSON document instead of tables
    #[arg(long)]
    pub json: bool,
    /// Also bucket packets per type over windows of this width, e.g. 10s or 1m
    #[arg(long, value_parser = humantime::parse_duration)]
    pub bucket: Option<Duration>,
}

#[derive(Debug, Error)]
pub enum StatsCmdError {
    #[error("cannot open {path}: {source}")]
    Open {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ImportError },
    #[error("bucket width must be positive")]
    ZeroBucket,
}

#[derive(Debug, Serialize)]
pub struct StatsReport {
    pub records: usize,
    /// Inter-arrival delay per sensor stream, in seconds.
    pub streams: BTreeMap<String, DelayStats>,
    pub types: BTreeMap<SensorType, TypeTotals>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub buckets: Option<Vec<DistributionBucket>>,
}

pub fn summarize(records: &[CaptureRecord], bucket: Option<Duration>) -> StatsReport {
    StatsReport {
        records: records.len(),
        streams: deltas_by_stream(records)
            .into_iter()
            .filter_map(|(id, d)| Some((id, compute_delay_stats(&d).ok()?)))
            .collect(),
        types: type_totals(records),
        buckets: bucket.map(|w| bucket_distribution(records, w)),
    }
}

pub fn render_text(r: &StatsReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} records\n", r.records);
    let _ = writeln!(
        out,
        "{:<14} {:>7} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "Stream", "Count", "Mean (s)", "Max (s)", "Min (s)", "Variance", "P95 (s)"
    );
    for (id, s) in &r.streams {
        let _ = writeln!(
            out,
            "{id:<14} {:>7} {:>12.6} {:>12.6} {:>12.6} {:>12.3e} {:>12.6}",
            s.count, s.mean, s.max, s.min, s.variance, s.p95
        );
    }
    let _ = writeln!(out, "\n{:<10} {:>9} {:>12}", "Type", "Packets", "Bytes");
    for (t, v) in &r.types {
        let _ = writeln!(out, "{:<10} {:>9} {:>12}", t.as_str(), v.packets, v.bytes);
    }
    if let Some(buckets) = &r.buckets {
        let _ = writeln!(
            out,
            "\n{:<15} {:<10} {:>9} {:>12}",
            "Bucket (ms)", "Type", "Packets", "Bytes"
        );
        for b in buckets {
            for (t, v) in &b.per_type {
                let _ = writeln!(
                    out,
                    "{:<15} {:<10} {:>9} {:>12}",
                    b.bucket_start,
                    t.as_str(),
                    v.packets,
                    v.bytes
                );
            }
        }
    }
    out
}

pub fn run(args: &StatsArgs) -> Result<String, StatsCmdError> {
    if args.bucket.is_some_and(|b| b.is_zero()) {
        return Err(StatsCmdError::ZeroBucket);
    }
    let file = std::fs::File::open(&args.input).map_err(|source| StatsCmdError::Open {
        path: args.input.clone(),
        source,
    })?;
    let records: Vec<CaptureRecord> =
        read_ndjson(std::io::BufReader::new(file)).map_err(|source| StatsCmdError::Parse {
            path: args.input.clone(),
            source,
        })?;
    let report = summarize(&records, args.bucket);
    Ok(if args.json {
        serde_json::to_string_pretty(&report).expect("report serializes") + "\n"
    } else {
        render_text(&report)
    })
}
