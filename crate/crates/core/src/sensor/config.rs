use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorType {
    Temp,
    Humidity,
    Gps,
    Camera,
    Switch,
}

impl SensorType {
    pub const ALL: [SensorType; 5] = [
        SensorType::Temp,
        SensorType::Humidity,
        SensorType::Gps,
        SensorType::Camera,
        SensorType::Switch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SensorType::Temp => "temp",
            SensorType::Humidity => "humidity",
            SensorType::Gps => "gps",
            SensorType::Camera => "camera",
            SensorType::Switch => "switch",
        }
    }

    /// Sensor id for the `index`-th sensor of this type, 1-based.
    pub fn sensor_id(self, index: usize) -> String {
        format!("{}_{index}", self.as_str())
    }
}

impl fmt::Display for SensorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown sensor type {0:?} (expected temp, humidity, gps, camera or switch)")]
pub struct UnknownSensorType(pub String);

impl FromStr for SensorType {
    type Err = UnknownSensorType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SensorType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| UnknownSensorType(s.to_owned()))
    }
}

/// Percentage of a sensor type's base rate, 1..=100.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct RatePercent(u8);

impl RatePercent {
    pub const FULL: RatePercent = RatePercent(100);

    pub fn new(p: u32) -> Result<Self, RateError> {
        match p {
            1..=100 => Ok(RatePercent(p as u8)),
            _ => Err(RateError::OutOfRange(p)),
        }
    }

    pub fn get(self) -> u32 {
        self.0 as u32
    }
}

impl TryFrom<u32> for RatePercent {
    type Error = RateError;

    fn try_from(p: u32) -> Result<Self, Self::Error> {
        Self::new(p)
    }
}

impl From<RatePercent> for u32 {
    fn from(p: RatePercent) -> Self {
        p.get()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RateError {
    #[error("rate_percent out of range: {0} (expected 1..=100)")]
    OutOfRange(u32),
    #[error("base interval must be positive")]
    ZeroInterval,
}

/// Adjusted send interval for a sensor running at `percent` of its base
/// rate: `base * 100 / percent`.
pub fn adjusted_interval(base: Duration, percent: u32) -> Result<Duration, RateError> {
    if base.is_zero() {
        return Err(RateError::ZeroInterval);
    }
    let percent = RatePercent::new(percent)?;
    let nanos = base.as_nanos() * 100 / percent.get() as u128;
    Ok(Duration::from_nanos(nanos.min(u64::MAX as u128) as u64))
}

/// One `type:count[:rate]` token from a fleet command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub sensor_type: SensorType,
    pub count: usize,
    pub rate_percent: RatePercent,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpecError {
    #[error("invalid sensor spec {token:?}: expected type:count[:rate]")]
    Shape { token: String },
    #[error("invalid sensor spec {token:?}: {source}")]
    Type {
        token: String,
        source: UnknownSensorType,
    },
    #[error("invalid sensor spec {token:?}: count must be a positive integer")]
    Count { token: String },
    #[error("invalid sensor spec {token:?}: rate_percent out of range (expected 1..=100)")]
    Rate { token: String },
}

impl FromStr for SensorSpec {
    type Err = SpecError;

    fn from_str(token: &str) -> Result<Self, Self::Err> {
        let fields: Vec<&str> = token.split(':').collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(SpecError::Shape {
                token: token.to_owned(),
            });
        }
        let sensor_type = fields[0].parse().map_err(|source| SpecError::Type {
            token: token.to_owned(),
            source,
        })?;
        let count = fields[1]
            .parse::<usize>()
            .ok()
            .filter(|&c| c >= 1)
            .ok_or_else(|| SpecError::Count {
                token: token.to_owned(),
            })?;
        let rate_percent = match fields.get(2) {
            None => RatePercent::FULL,
            Some(raw) => raw
                .parse::<u32>()
                .ok()
                .and_then(|p| RatePercent::new(p).ok())
                .ok_or_else(|| SpecError::Rate {
                    token: token.to_owned(),
                })?,
        };
        Ok(SensorSpec {
            sensor_type,
            count,
            rate_percent,
        })
    }
}

impl fmt::Display for SensorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}",
            self.sensor_type,
            self.count,
            self.rate_percent.get()
        )
    }
}

pub fn parse_sensor_spec(token: &str) -> Result<SensorSpec, SpecError> {
    token.parse()
}

/// Default send interval for each sensor type before rate scaling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseIntervals {
    #[serde(with = "ms")]
    pub temp: Duration,
    #[serde(with = "ms")]
    pub humidity: Duration,
    #[serde(with = "ms")]
    pub gps: Duration,
    #[serde(with = "ms")]
    pub camera: Duration,
    #[serde(with = "ms")]
    pub switch: Duration,
}

impl Default for BaseIntervals {
    fn default() -> Self {
        Self {
            temp: Duration::from_secs(1),
            humidity: Duration::from_secs(1),
            gps: Duration::from_millis(500),
            camera: Duration::from_secs(2),
            switch: Duration::from_secs(5),
        }
    }
}

impl BaseIntervals {
    pub fn get(&self, t: SensorType) -> Duration {
        match t {
            SensorType::Temp => self.temp,
            SensorType::Humidity => self.humidity,
            SensorType::Gps => self.gps,
            SensorType::Camera => self.camera,
            SensorType::Switch => self.switch,
        }
    }

    pub fn set(&mut self, t: SensorType, d: Duration) {
        match t {
            SensorType::Temp => self.temp = d,
            SensorType::Humidity => self.humidity = d,
            SensorType::Gps => self.gps = d,
            SensorType::Camera => self.camera = d,
            SensorType::Switch => self.switch = d,
        }
    }

    /// Every type at the same base interval.
    pub fn uniform(d: Duration) -> Self {
        Self {
            temp: d,
            humidity: d,
            gps: d,
            camera: d,
            switch: d,
        }
    }
}

mod ms {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}
