use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::node::ArchiveRecord;
use crate::sensor::SensorType;

/// Packet count for one lat/lon grid cell, identified by its south-west
/// corner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoCell {
    pub lat: f64,
    pub lon: f64,
    pub packets: u64,
}

/// Counts gps packets per grid cell of `resolution` degrees, for heatmaps
/// rendered elsewhere.
pub fn gps_cells(records: &[ArchiveRecord], resolution: f64) -> Vec<GeoCell> {
    let res = if resolution > 0.0 { resolution } else { 0.001 };
    let mut cells: BTreeMap<(i64, i64), u64> = BTreeMap::new();
    for r in records.iter().filter(|r| r.sensor_type == SensorType::Gps) {
        let lat = r.payload.get("lat").and_then(|v| v.as_f64());
        let lon = r.payload.get("lon").and_then(|v| v.as_f64());
        if let (Some(lat), Some(lon)) = (lat, lon) {
            let key = ((lat / res).floor() as i64, (lon / res).floor() as i64);
            *cells.entry(key).or_default() += 1;
        }
    }
    cells
        .into_iter()
        .map(|((la, lo), packets)| GeoCell {
            lat: la as f64 * res,
            lon: lo as f64 * res,
            packets,
        })
        .collect()
}
