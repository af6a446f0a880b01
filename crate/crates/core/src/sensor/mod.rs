//! Virtual sensors: fleet configuration, reading generators and the timed
//! send loops that publish to the core.

mod config;
mod fleet;
mod generator;
mod runner;

pub use config::{
    adjusted_interval, parse_sensor_spec, BaseIntervals, RateError, RatePercent, SensorSpec,
    SensorType, SpecError, UnknownSensorType,
};
pub use fleet::{
    launch_fleet, plan_fleet, Fleet, FleetConfig, FleetError, FleetReport, SensorPlan,
};
pub use generator::{
    Generator, GeneratorConfig, Reading, CAMERA_WIDTH, DEFAULT_CAMERA_BYTES, DEFAULT_TOGGLE_PROB,
    GPS_MAX_STEP, HUMIDITY_MAX_STEP, HUMIDITY_RANGE, MAX_CAMERA_BYTES, TEMP_MAX_STEP, TEMP_RANGE,
};
pub use runner::{run_sensor, Schedule, Sensor, SensorError, SensorReport, JITTER_FRACTION};

pub(crate) mod secs_f64 {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Duration::try_from_secs_f64(f64::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}
