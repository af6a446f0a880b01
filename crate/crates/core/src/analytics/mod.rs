//! Offline and streaming analysis of capture records and archives.

mod buckets;
mod geo;
mod ndjson;
mod record;
mod stats;
mod table;

pub use buckets::{
    bucket_distribution, type_totals, windowed_delay_stats, DistributionBucket, TypeTotals,
    WindowStats, DEFAULT_STATS_WINDOW,
};
pub use geo::{gps_cells, GeoCell};
pub use ndjson::{export_ndjson, read_ndjson, ExportError, ImportError, NdjsonReader};
pub use record::{CaptureRecord, CAPTURE_FIELDS};
pub use stats::{compute_delay_stats, nearest_rank, DelayStats, StatsError};
pub use table::{bandwidth_label, render_table, TableRow};

use std::collections::BTreeMap;

/// Frame-time deltas grouped by sensor id.
pub fn deltas_by_stream(records: &[CaptureRecord]) -> BTreeMap<String, Vec<f64>> {
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in records {
        if let Some(d) = r.frame_time_delta {
            out.entry(r.sensor_id.clone()).or_default().push(d);
        }
    }
    out
}
