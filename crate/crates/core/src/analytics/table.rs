use std::fmt::Write as _;

use super::DelayStats;
use crate::impairment::{Bandwidth, ImpairmentConfig};

/// One client run: its label, the path conditions it saw, and its delays.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub client: String,
    pub impairment: ImpairmentConfig,
    pub stats: DelayStats,
}

const HEADERS: [&str; 6] = [
    "Client",
    "(Bandwidth, Loss)",
    "Mean Delay (s)",
    "Max Delay (s)",
    "Min Delay (s)",
    "Variance Delay (s)",
];

pub fn bandwidth_label(b: Bandwidth) -> String {
    match b {
        Bandwidth::Unbounded => "Unbounded".to_owned(),
        Bandwidth::Bps(bps) if bps % 1_000_000 == 0 => format!("{} Mbit/s", bps / 1_000_000),
        Bandwidth::Bps(bps) if bps % 1_000 == 0 => format!("{} kbit/s", bps / 1_000),
        Bandwidth::Bps(bps) => format!("{bps} bit/s"),
    }
}

fn loss_label(p: f64) -> String {
    let pct = p * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("{}%", pct.round() as i64)
    } else {
        format!("{pct:.2}%")
    }
}

fn num(v: f64) -> String {
    // Trim to significant digits without switching to exponent form.
    let s = format!("{v:.9}");
    let s = s.trim_end_matches('0');
    s.strip_suffix('.').map_or(s.to_owned(), |t| t.to_owned())
}

/// Renders delay statistics with one row per client run.
pub fn render_table(rows: &[TableRow]) -> String {
    let cells: Vec<[String; 6]> = rows
        .iter()
        .map(|r| {
            [
                r.client.clone(),
                format!(
                    "({}, {})",
                    bandwidth_label(r.impairment.bandwidth),
                    loss_label(r.impairment.loss_prob)
                ),
                num(r.stats.mean),
                num(r.stats.max),
                num(r.stats.min),
                num(r.stats.variance),
            ]
        })
        .collect();
    let mut widths = HEADERS.map(str::len);
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cols: &[&str]| {
        let mut first = true;
        for (c, w) in cols.iter().zip(widths) {
            if !first {
                out.push_str(" | ");
            }
            first = false;
            let _ = write!(out, "{c:<w$}");
        }
        let trimmed = out.trim_end().len();
        out.truncate(trimmed);
        out.push('\n');
    };
    line(&mut out, &HEADERS);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    let rule: Vec<&str> = rule.iter().map(String::as_str).collect();
    line(&mut out, &rule);
    for row in &cells {
        let cols: Vec<&str> = row.iter().map(String::as_str).collect();
        line(&mut out, &cols);
    }
    out
}
