use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{compute_delay_stats, CaptureRecord, DelayStats};
use crate::sensor::SensorType;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeTotals {
    pub packets: u64,
    pub bytes: u64,
}

/// Per-type packet and byte totals for one aligned time window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionBucket {
    /// Window start, ms since epoch; always a multiple of `width_ms`.
    pub bucket_start: i64,
    pub width_ms: u64,
    pub per_type: BTreeMap<SensorType, TypeTotals>,
}

impl DistributionBucket {
    pub fn total_packets(&self) -> u64 {
        self.per_type.values().map(|t| t.packets).sum()
    }
}

fn window_start(ts: i64, width_ms: i64) -> i64 {
    ts.div_euclid(width_ms) * width_ms
}

/// Groups records into epoch-aligned windows. Only windows holding at least
/// one record are returned, in time order.
///
/// # Panics
///
/// If `width` is under one millisecond.
pub fn bucket_distribution(records: &[CaptureRecord], width: Duration) -> Vec<DistributionBucket> {
    let width_ms = width.as_millis() as i64;
    assert!(width_ms > 0, "bucket width must be at least 1 ms");
    let mut buckets: BTreeMap<i64, BTreeMap<SensorType, TypeTotals>> = BTreeMap::new();
    for r in records {
        let totals = buckets
            .entry(window_start(r.ts, width_ms))
            .or_default()
            .entry(r.sensor_type)
            .or_default();
        totals.packets += 1;
        totals.bytes += r.bytes_on_wire as u64;
    }
    buckets
        .into_iter()
        .map(|(bucket_start, per_type)| DistributionBucket {
            bucket_start,
            width_ms: width_ms as u64,
            per_type,
        })
        .collect()
}

/// Whole-run totals per type.
pub fn type_totals(records: &[CaptureRecord]) -> BTreeMap<SensorType, TypeTotals> {
    let mut out: BTreeMap<SensorType, TypeTotals> = BTreeMap::new();
    for r in records {
        let t = out.entry(r.sensor_type).or_default();
        t.packets += 1;
        t.bytes += r.bytes_on_wire as u64;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub window_start: i64,
    pub width_ms: u64,
    pub stats: DelayStats,
}

/// Delay statistics over tumbling windows, for plotting spread over time.
/// Windows without any delta are skipped.
pub fn windowed_delay_stats(records: &[CaptureRecord], width: Duration) -> Vec<WindowStats> {
    let width_ms = (width.as_millis() as i64).max(1);
    let mut windows: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for r in records {
        if let Some(d) = r.frame_time_delta {
            windows
                .entry(window_start(r.ts, width_ms))
                .or_default()
                .push(d);
        }
    }
    windows
        .into_iter()
        .filter_map(|(start, deltas)| {
            compute_delay_stats(&deltas).ok().map(|stats| WindowStats {
                window_start: start,
                width_ms: width_ms as u64,
                stats,
            })
        })
        .collect()
}

/// Default tumbling window for [`windowed_delay_stats`].
pub const DEFAULT_STATS_WINDOW: Duration = Duration::from_secs(10);
