use serde::{Deserialize, Serialize};

use crate::sensor::SensorType;

/// One observed packet on the sensor port, as emitted to the capture stream.
///
/// Field names are stable; they are what downstream JSON-lines pipelines
/// index on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureRecord {
    /// Receive time, milliseconds since the Unix epoch.
    pub ts: i64,
    pub sensor_id: String,
    pub sensor_type: SensorType,
    pub seq: u64,
    pub bytes_on_wire: usize,
    /// Seconds since the previous packet of the same sensor; absent on the
    /// first packet of a stream.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_time_delta: Option<f64>,
}

/// Names of every field a capture line may carry, in emission order.
pub const CAPTURE_FIELDS: [&str; 6] = [
    "ts",
    "sensor_id",
    "sensor_type",
    "seq",
    "bytes_on_wire",
    "frame_time_delta",
];
