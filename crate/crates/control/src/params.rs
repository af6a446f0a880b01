//! Parameter objects shared by the CLI and the REST API.
//!
//! Each role has one struct that clap parses from argv and serde parses from
//! a JSON body, and one `plan` method that validates it into the config the
//! core library runs. Both front ends therefore reject the same inputs with
//! the same message.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use clap::Args;
use serde::{Deserialize, Serialize};
use stgen_core::client::ClientConfig;
use stgen_core::impairment::{Bandwidth, ImpairmentConfig, ImpairmentError};
use stgen_core::node::{CaptureTarget, CoreConfig};
use stgen_core::resolve_addr;
use stgen_core::sensor::{
    parse_sensor_spec, BaseIntervals, FleetConfig, GeneratorConfig, SpecError,
};
use thiserror::Error;

pub const DEFAULT_HOST: &str = "127.0.0.1";
pub const DEFAULT_SENSOR_PORT: u16 = 5004;
pub const DEFAULT_CLIENT_PORT: u16 = 5005;
pub const DEFAULT_FLEET_SIM_TIME: f64 = 60.0;

#[derive(Debug, Error)]
pub enum ParamError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Impairment(#[from] ImpairmentError),
    #[error("sim_time must be a positive number of seconds, got {0}")]
    SimTime(f64),
    #[error("at least one sensor spec is required")]
    NoSpecs,
    #[error("cannot resolve {host}:{port}: {source}")]
    Resolve {
        host: String,
        port: u16,
        source: std::io::Error,
    },
    #[error(
        "invalid capture target {0:?}: expected none, archive, tcp://host:port or a file path"
    )]
    Capture(String),
    #[error("sensor_id must not be empty")]
    SensorId,
    #[error("unknown role {0:?}: expected core, fleet or client")]
    Role(String),
    #[error("invalid params: {0}")]
    Body(String),
}

fn default_host() -> String {
    DEFAULT_HOST.to_owned()
}

fn default_sensor_port() -> u16 {
    DEFAULT_SENSOR_PORT
}

fn default_client_port() -> u16 {
    DEFAULT_CLIENT_PORT
}

fn default_fleet_sim_time() -> f64 {
    DEFAULT_FLEET_SIM_TIME
}

fn default_archive_dir() -> PathBuf {
    PathBuf::from("archive")
}

fn sim_time(secs: f64) -> Result<Duration, ParamError> {
    if secs.is_finite() && secs > 0.0 {
        Ok(Duration::from_secs_f64(secs))
    } else {
        Err(ParamError::SimTime(secs))
    }
}

fn resolve(host: &str, port: u16) -> Result<SocketAddr, ParamError> {
    resolve_addr(host, port).map_err(|source| ParamError::Resolve {
        host: host.to_owned(),
        port,
        source,
    })
}

/// Link impairment flags, shared by the core and launcher.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
pub struct ImpairmentArgs {
    /// Link bandwidth in bits per second, or "unbounded"
    #[arg(long, value_name = "BITS_PER_SEC")]
    pub bw: Option<String>,
    /// Packet loss probability in [0, 1]
    #[arg(long, value_name = "PROB")]
    pub loss: Option<f64>,
    /// Fixed one-way latency in milliseconds
    #[arg(long, value_name = "MS")]
    pub latency: Option<u64>,
    /// Seed for loss decisions and generated readings
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ImpairmentArgs {
    pub fn config(&self) -> Result<ImpairmentConfig, ParamError> {
        let cfg = ImpairmentConfig {
            bandwidth: match &self.bw {
                Some(b) => b.parse()?,
                None => Bandwidth::Unbounded,
            },
            loss_prob: self.loss.unwrap_or(0.0),
            base_latency: Duration::from_millis(self.latency.unwrap_or(0)),
            rng_seed: self.seed.unwrap_or(0),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `server <host> <sensor_port> <client_port> <sim_time_s>`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct CoreParams {
    /// Address to bind both ports on
    #[serde(default = "default_host")]
    pub host: String,
    /// UDP port sensors send to
    #[serde(default = "default_sensor_port")]
    pub sensor_port: u16,
    /// UDP port clients subscribe on
    #[serde(default = "default_client_port")]
    pub client_port: u16,
    /// Run time in seconds
    #[arg(value_name = "SIM_TIME_S")]
    pub sim_time: f64,
    /// Directory for archive, capture and sink files
    #[arg(long, default_value = "archive")]
    #[serde(default = "default_archive_dir")]
    pub archive_dir: PathBuf,
    /// Capture stream target: none, archive, tcp://host:port or a file path
    #[arg(long)]
    #[serde(default)]
    pub capture: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub impairment: ImpairmentArgs,
}

impl CoreParams {
    pub fn plan(&self) -> Result<CoreConfig, ParamError> {
        let mut cfg = CoreConfig::new(
            resolve(&self.host, self.sensor_port)?,
            resolve(&self.host, self.client_port)?,
            &self.archive_dir,
        );
        cfg.sim_time = Some(sim_time(self.sim_time)?);
        cfg.capture = parse_capture(self.capture.as_deref())?;
        cfg.impairment = self.impairment.config()?;
        Ok(cfg)
    }
}

fn parse_capture(raw: Option<&str>) -> Result<CaptureTarget, ParamError> {
    let Some(raw) = raw else {
        return Ok(CaptureTarget::Archive);
    };
    match raw {
        "" => Err(ParamError::Capture(raw.to_owned())),
        "none" => Ok(CaptureTarget::None),
        "archive" => Ok(CaptureTarget::Archive),
        _ => match raw.strip_prefix("tcp://") {
            Some(addr) => {
                let (host, port) = addr
                    .rsplit_once(':')
                    .and_then(|(h, p)| Some((h, p.parse::<u16>().ok()?)))
                    .ok_or_else(|| ParamError::Capture(raw.to_owned()))?;
                Ok(CaptureTarget::Tcp(resolve(host, port)?))
            }
            None => Ok(CaptureTarget::File(PathBuf::from(raw))),
        },
    }
}

/// `launcher <core_host> <core_sensor_port> <sim_time_s> <spec>...`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct FleetParams {
    /// Host running the core
    #[serde(default = "default_host")]
    pub core_host: String,
    /// Core sensor port
    #[serde(default = "default_sensor_port")]
    pub core_port: u16,
    /// Run time in seconds
    #[arg(value_name = "SIM_TIME_S")]
    #[serde(default = "default_fleet_sim_time")]
    pub sim_time: f64,
    /// Sensor specs as type:count[:rate_percent], e.g. temp:30:1 gps:10
    #[arg(value_name = "SPEC", required = true, num_args = 1..)]
    pub specs: Vec<String>,
    /// Add up to 10% random jitter to each send interval
    #[arg(long)]
    #[serde(default)]
    pub jitter: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub impairment: ImpairmentArgs,
}

impl FleetParams {
    pub fn plan(&self) -> Result<FleetConfig, ParamError> {
        if self.specs.is_empty() {
            return Err(ParamError::NoSpecs);
        }
        let specs = self
            .specs
            .iter()
            .map(|s| parse_sensor_spec(s))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FleetConfig {
            specs,
            core_addr: resolve(&self.core_host, self.core_port)?,
            sim_time: sim_time(self.sim_time)?,
            base_intervals: BaseIntervals::default(),
            generator: GeneratorConfig::default(),
            seed: self.impairment.seed.unwrap_or(0),
            jitter: self.jitter,
            impairment: self.impairment.config()?,
        })
    }

    /// Total number of sensors the specs describe, without validating rates.
    pub fn sensor_count(&self) -> usize {
        self.specs
            .iter()
            .filter_map(|s| parse_sensor_spec(s).ok())
            .map(|s| s.count)
            .sum()
    }
}

/// `client -l<log_dir> -s<core_host> -r<sensor_id> -p<client_port> [-t<secs>]`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct ClientParams {
    /// Directory for the received-packet log
    #[arg(short = 'l', long = "log-dir")]
    pub log_dir: PathBuf,
    /// Host running the core
    #[arg(short = 's', long = "server", default_value = DEFAULT_HOST)]
    #[serde(default = "default_host")]
    pub core_host: String,
    /// Sensor to subscribe to, e.g. temp_1
    #[arg(short = 'r', long = "sensor")]
    pub sensor_id: String,
    /// Core client port
    #[arg(short = 'p', long = "port", default_value_t = DEFAULT_CLIENT_PORT)]
    #[serde(default = "default_client_port")]
    pub client_port: u16,
    /// Stop after this many seconds; otherwise stop when the core goes silent
    #[arg(short = 't', long = "time")]
    #[serde(default)]
    pub sim_time: Option<f64>,
}

impl ClientParams {
    pub fn plan(&self) -> Result<ClientConfig, ParamError> {
        if self.sensor_id.trim().is_empty() {
            return Err(ParamError::SensorId);
        }
        let mut cfg = ClientConfig::new(
            &self.log_dir,
            resolve(&self.core_host, self.client_port)?,
            &self.sensor_id,
        );
        cfg.sim_time = self.sim_time.map(sim_time).transpose()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Core,
    Fleet,
    Client,
}

impl Role {
    pub fn parse(s: &str) -> Result<Role, ParamError> {
        match s {
            "core" | "server" => Ok(Role::Core),
            "fleet" | "launcher" => Ok(Role::Fleet),
            "client" => Ok(Role::Client),
            _ => Err(ParamError::Role(s.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunParams {
    Core(CoreParams),
    Fleet(FleetParams),
    Client(ClientParams),
}

#[derive(Debug, Clone)]
pub enum RunPlan {
    Core(CoreConfig),
    Fleet(FleetConfig),
    Client(ClientConfig),
}

impl RunParams {
    /// Accepts `{"role": .., "params": {..}}` or the flat form with the
    /// parameters next to `role`.
    pub fn from_json(body: serde_json::Value) -> Result<RunParams, ParamError> {
        let serde_json::Value::Object(mut obj) = body else {
            return Err(ParamError::Body(
                "request body must be a JSON object".into(),
            ));
        };
        let role = match obj.remove("role") {
            Some(serde_json::Value::String(r)) => Role::parse(&r)?,
            Some(other) => return Err(ParamError::Role(other.to_string())),
            None => return Err(ParamError::Body("missing field `role`".into())),
        };
        let params = match obj.remove("params") {
            Some(p) if obj.is_empty() => p,
            Some(_) => {
                return Err(ParamError::Body(
                    "give parameters either inside `params` or next to `role`, not both".into(),
                ))
            }
            None => serde_json::Value::Object(obj),
        };
        let body = |e: serde_json::Error| ParamError::Body(e.to_string());
        Ok(match role {
            Role::Core => RunParams::Core(serde_json::from_value(params).map_err(body)?),
            Role::Fleet => RunParams::Fleet(serde_json::from_value(params).map_err(body)?),
            Role::Client => RunParams::Client(serde_json::from_value(params).map_err(body)?),
        })
    }

    pub fn role(&self) -> Role {
        match self {
            RunParams::Core(_) => Role::Core,
            RunParams::Fleet(_) => Role::Fleet,
            RunParams::Client(_) => Role::Client,
        }
    }

    pub fn plan(&self) -> Result<RunPlan, ParamError> {
        Ok(match self {
            RunParams::Core(p) => RunPlan::Core(p.plan()?),
            RunParams::Fleet(p) => RunPlan::Fleet(p.plan()?),
            RunParams::Client(p) => RunPlan::Client(p.plan()?),
        })
    }

    /// Sockets the run will hold open, for admission control.
    pub fn socket_cost(&self) -> usize {
        match self {
            RunParams::Core(_) => 2,
            RunParams::Fleet(p) => p.sensor_count(),
            RunParams::Client(_) => 1,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let v = match self {
            RunParams::Core(p) => serde_json::to_value(p),
            RunParams::Fleet(p) => serde_json::to_value(p),
            RunParams::Client(p) => serde_json::to_value(p),
        };
        v.expect("params serialize")
    }
}
