use std::collections::HashMap;

use parking_lot::Mutex;

use crate::analytics::CaptureRecord;
use crate::wire::DataPacket;

/// Builds the capture line for one received packet. Times are epoch seconds;
/// the delta is clamped at zero so clock steps never yield negative values.
pub fn emit_capture_record(
    packet: &DataPacket,
    bytes_on_wire: usize,
    received_at: f64,
    prev_received_at: Option<f64>,
) -> CaptureRecord {
    CaptureRecord {
        ts: (received_at * 1000.0).floor() as i64,
        sensor_id: packet.sensor_id.clone(),
        sensor_type: packet.sensor_type,
        seq: packet.seq,
        bytes_on_wire,
        frame_time_delta: prev_received_at.map(|p| (received_at - p).max(0.0)),
    }
}

/// Last arrival time per stream.
#[derive(Debug, Default)]
pub struct StreamClock {
    last: Mutex<HashMap<String, f64>>,
}

impl StreamClock {
    /// Stores `now` for `sensor_id` and returns the previous arrival.
    pub fn observe(&self, sensor_id: &str, now: f64) -> Option<f64> {
        let mut last = self.last.lock();
        match last.get_mut(sensor_id) {
            Some(t) => Some(std::mem::replace(t, now)),
            None => {
                last.insert(sensor_id.to_owned(), now);
                None
            }
        }
    }
}
