//! Type-specific reading generators.
//!
//! Every generator is a seeded random walk (or toggle, or blob) so that a
//! given `(seed, sensor type)` always yields the same sequence of readings.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SensorType;
use crate::wire::{DataPacket, Document, Value};

pub const TEMP_RANGE: (f64, f64) = (-10.0, 45.0);
pub const TEMP_MAX_STEP: f64 = 0.5;
pub const HUMIDITY_RANGE: (f64, f64) = (0.0, 100.0);
pub const HUMIDITY_MAX_STEP: f64 = 1.0;
pub const GPS_MAX_STEP: f64 = 0.0005;
pub const DEFAULT_CAMERA_BYTES: usize = 4096;
/// Largest camera blob that still fits a packet under the datagram limit.
pub const MAX_CAMERA_BYTES: usize = 59_000;
pub const CAMERA_WIDTH: i32 = 64;
pub const DEFAULT_TOGGLE_PROB: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub camera_bytes: usize,
    pub switch_toggle_prob: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            camera_bytes: DEFAULT_CAMERA_BYTES,
            switch_toggle_prob: DEFAULT_TOGGLE_PROB,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reading {
    Temp(f64),
    Humidity(f64),
    Gps { lat: f64, lon: f64 },
    Camera,
    Switch(bool),
}

#[derive(Debug, Clone)]
pub struct Generator {
    sensor_id: String,
    sensor_type: SensorType,
    config: GeneratorConfig,
    rng: ChaCha8Rng,
    last: Reading,
    seq: u64,
}

impl Generator {
    /// Starting value is drawn from the seed.
    pub fn new(sensor_id: impl Into<String>, sensor_type: SensorType, seed: u64) -> Self {
        Self::with_config(sensor_id, sensor_type, seed, GeneratorConfig::default())
    }

    pub fn with_config(
        sensor_id: impl Into<String>,
        sensor_type: SensorType,
        seed: u64,
        mut config: GeneratorConfig,
    ) -> Self {
        config.camera_bytes = config.camera_bytes.min(MAX_CAMERA_BYTES);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = match sensor_type {
            SensorType::Temp => Reading::Temp(rng.gen_range(15.0..30.0)),
            SensorType::Humidity => Reading::Humidity(rng.gen_range(30.0..70.0)),
            SensorType::Gps => Reading::Gps {
                lat: rng.gen_range(-60.0..60.0),
                lon: rng.gen_range(-179.0..179.0),
            },
            SensorType::Camera => Reading::Camera,
            SensorType::Switch => Reading::Switch(rng.gen()),
        };
        Self {
            sensor_id: sensor_id.into(),
            sensor_type,
            config,
            rng,
            last,
            seq: 0,
        }
    }

    /// Overrides the current value, e.g. to start a walk from a known point.
    pub fn with_start(mut self, start: Reading) -> Self {
        self.last = start;
        self
    }

    pub fn sensor_id(&self) -> &str {
        &self.sensor_id
    }

    pub fn sensor_type(&self) -> SensorType {
        self.sensor_type
    }

    pub fn last(&self) -> Reading {
        self.last
    }

    /// Sequence number the next packet will carry.
    pub fn seq(&self) -> u64 {
        self.seq
    }

    /// Advances the walk and returns the new reading as a payload document.
    pub fn next_payload(&mut self) -> Document {
        let rng = &mut self.rng;
        self.last = match self.last {
            Reading::Temp(v) => {
                let step = rng.gen_range(-TEMP_MAX_STEP..=TEMP_MAX_STEP);
                Reading::Temp((v + step).clamp(TEMP_RANGE.0, TEMP_RANGE.1))
            }
            Reading::Humidity(v) => {
                let step = rng.gen_range(-HUMIDITY_MAX_STEP..=HUMIDITY_MAX_STEP);
                Reading::Humidity((v + step).clamp(HUMIDITY_RANGE.0, HUMIDITY_RANGE.1))
            }
            Reading::Gps { lat, lon } => {
                let dlat = rng.gen_range(-GPS_MAX_STEP..=GPS_MAX_STEP);
                let dlon = rng.gen_range(-GPS_MAX_STEP..=GPS_MAX_STEP);
                Reading::Gps {
                    lat: (lat + dlat).clamp(-90.0, 90.0),
                    lon: wrap_longitude(lon + dlon),
                }
            }
            Reading::Camera => Reading::Camera,
            Reading::Switch(on) => {
                let toggle = rng.gen_bool(self.config.switch_toggle_prob.clamp(0.0, 1.0));
                Reading::Switch(on ^ toggle)
            }
        };
        match self.last {
            Reading::Temp(v) => Document::new()
                .with("value", Value::Double(v))
                .with("unit", Value::String("C".into())),
            Reading::Humidity(v) => Document::new()
                .with("value", Value::Double(v))
                .with("unit", Value::String("%".into())),
            Reading::Gps { lat, lon } => Document::new()
                .with("lat", Value::Double(lat))
                .with("lon", Value::Double(lon)),
            Reading::Camera => {
                let mut data = vec![0u8; self.config.camera_bytes];
                self.rng.fill_bytes(&mut data);
                let height = (data.len() as i32 + CAMERA_WIDTH - 1) / CAMERA_WIDTH;
                Document::new()
                    .with("width", Value::Int32(CAMERA_WIDTH))
                    .with("height", Value::Int32(height))
                    .with("data", Value::Binary(data))
            }
            Reading::Switch(on) => Document::new().with("on", Value::Boolean(on)),
        }
    }

    /// Produces the next data packet and advances the sequence number.
    pub fn next_packet(&mut self, sent_at_ms: i64) -> DataPacket {
        let payload = self.next_payload();
        let packet = DataPacket {
            sensor_id: self.sensor_id.clone(),
            sensor_type: self.sensor_type,
            seq: self.seq,
            sent_at_ms,
            payload,
        };
        self.seq += 1;
        packet
    }
}

fn wrap_longitude(lon: f64) -> f64 {
    if lon >= 180.0 {
        lon - 360.0
    } else if lon < -180.0 {
        lon + 360.0
    } else {
        lon
    }
}
