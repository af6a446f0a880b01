//! Subscriber that pulls one sensor's stream from the core and archives it.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::net::UdpSocket;
use tokio::time::Instant;

use crate::analytics::{compute_delay_stats, DelayStats};
use crate::clock::{now_secs, Shutdown};
use crate::sensor::SensorType;
use crate::wire::{to_json_value, Packet};

pub const SUBSCRIBE_RETRY: Duration = Duration::from_secs(2);
/// Resubscribe period once the stream is flowing, well under the core's
/// registry TTL.
pub const HEARTBEAT: Duration = Duration::from_secs(20);
pub const DEFAULT_SILENCE_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientConfig {
    pub log_dir: PathBuf,
    /// The core's client port.
    pub core_addr: SocketAddr,
    pub sensor_id: String,
    /// `None` runs until the core has been silent for `silence_timeout`.
    #[serde(default, with = "opt_secs")]
    pub sim_time: Option<Duration>,
    #[serde(default = "default_silence", with = "crate::sensor::secs_f64")]
    pub silence_timeout: Duration,
}

fn default_silence() -> Duration {
    DEFAULT_SILENCE_TIMEOUT
}

impl ClientConfig {
    pub fn new(
        log_dir: impl Into<PathBuf>,
        core_addr: SocketAddr,
        sensor_id: impl Into<String>,
    ) -> Self {
        Self {
            log_dir: log_dir.into(),
            core_addr,
            sensor_id: sensor_id.into(),
            sim_time: None,
            silence_timeout: DEFAULT_SILENCE_TIMEOUT,
        }
    }

    pub fn log_path(&self) -> PathBuf {
        self.log_dir.join(format!("{}.ndjson", self.sensor_id))
    }
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("log directory {path} is not writable: {source}")]
    LogDir {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot bind client socket: {0}")]
    Bind(std::io::Error),
    #[error("writing {path} failed: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("sim_time must be positive")]
    ZeroSimTime,
}

/// One line of the client log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRecord {
    /// Client receive time, ms since epoch.
    pub received_at: i64,
    pub sensor_id: String,
    pub sensor_type: SensorType,
    pub seq: u64,
    pub sent_at: i64,
    /// Seconds from the sensor's send timestamp to arrival here.
    pub transit_delay: f64,
    pub payload: serde_json::Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClientReport {
    pub sensor_id: String,
    pub packets_received: u64,
    pub acks: u64,
    pub subscribes_sent: u64,
    /// From the first subscribe to the first data packet.
    #[serde(with = "opt_secs")]
    pub first_data_latency: Option<Duration>,
    /// Sensor-to-client delay per packet.
    pub transit: Option<DelayStats>,
    /// Gaps between consecutive arrivals.
    pub interarrival: Option<DelayStats>,
    pub log_path: PathBuf,
    #[serde(with = "crate::sensor::secs_f64")]
    pub runtime: Duration,
}

/// Subscribes, then archives every data packet for the run.
pub async fn subscribe_and_receive(
    cfg: &ClientConfig,
    mut shutdown: Shutdown,
) -> Result<ClientReport, ClientError> {
    if cfg.sim_time == Some(Duration::ZERO) {
        return Err(ClientError::ZeroSimTime);
    }
    let log_path = cfg.log_path();
    let dir_err = |source| ClientError::LogDir {
        path: cfg.log_dir.display().to_string(),
        source,
    };
    fs::create_dir_all(&cfg.log_dir).map_err(dir_err)?;
    let mut log = BufWriter::new(File::create(&log_path).map_err(dir_err)?);
    let write_err = |source| ClientError::Write {
        path: log_path.display().to_string(),
        source,
    };

    let local: SocketAddr = if cfg.core_addr.is_ipv4() {
        ([0, 0, 0, 0], 0).into()
    } else {
        (std::net::Ipv6Addr::UNSPECIFIED, 0).into()
    };
    let socket = UdpSocket::bind(local).await.map_err(ClientError::Bind)?;
    let subscribe = Packet::Subscribe {
        sensor_id: cfg.sensor_id.clone(),
    }
    .encode()
    .expect("subscribe packet is small");

    let start = Instant::now();
    let deadline = cfg.sim_time.map(|s| start + s);
    let mut report = ClientReport {
        sensor_id: cfg.sensor_id.clone(),
        packets_received: 0,
        acks: 0,
        subscribes_sent: 0,
        first_data_latency: None,
        transit: None,
        interarrival: None,
        log_path: log_path.clone(),
        runtime: Duration::ZERO,
    };
    let mut transit = Vec::new();
    let mut gaps = Vec::new();
    let mut last_arrival: Option<f64> = None;
    let mut confirmed = false;
    let mut last_heard = start;
    let mut next_subscribe = start;
    let mut buf = vec![0u8; 65_536];

    loop {
        if Instant::now() >= next_subscribe {
            if let Err(e) = socket.send_to(&subscribe, cfg.core_addr).await {
                tracing::debug!(error = %e, "subscribe send failed");
            }
            report.subscribes_sent += 1;
            next_subscribe = Instant::now()
                + if confirmed {
                    HEARTBEAT
                } else {
                    SUBSCRIBE_RETRY
                };
        }
        let stop_at = deadline.unwrap_or(last_heard + cfg.silence_timeout);
        let wake = next_subscribe.min(stop_at);
        let received = tokio::select! {
            r = socket.recv_from(&mut buf) => Some(r),
            _ = tokio::time::sleep_until(wake) => None,
            _ = shutdown.wait() => break,
        };
        let now = Instant::now();
        match received {
            Some(Ok((n, from))) if from.port() == cfg.core_addr.port() => {
                match Packet::decode(&buf[..n]) {
                    Ok(Packet::Ack { .. }) => {
                        report.acks += 1;
                        if !confirmed {
                            confirmed = true;
                            next_subscribe = now + HEARTBEAT;
                        }
                        last_heard = now;
                    }
                    Ok(Packet::Data(d)) if d.sensor_id == cfg.sensor_id => {
                        let arrived = now_secs();
                        if report.first_data_latency.is_none() {
                            report.first_data_latency = Some(now - start);
                            if !confirmed {
                                confirmed = true;
                                next_subscribe = now + HEARTBEAT;
                            }
                        }
                        last_heard = now;
                        let delay = (arrived - d.sent_at_ms as f64 / 1000.0).max(0.0);
                        transit.push(delay);
                        if let Some(prev) = last_arrival.replace(arrived) {
                            gaps.push((arrived - prev).max(0.0));
                        }
                        let record = ClientRecord {
                            received_at: (arrived * 1000.0).floor() as i64,
                            sensor_id: d.sensor_id,
                            sensor_type: d.sensor_type,
                            seq: d.seq,
                            sent_at: d.sent_at_ms,
                            transit_delay: delay,
                            payload: to_json_value(&d.payload),
                        };
                        serde_json::to_writer(&mut log, &record)
                            .map_err(std::io::Error::from)
                            .map_err(write_err)?;
                        log.write_all(b"\n").map_err(write_err)?;
                        report.packets_received += 1;
                    }
                    _ => tracing::debug!(%from, "ignored datagram"),
                }
            }
            Some(Ok((_, from))) => tracing::debug!(%from, "datagram from unexpected peer"),
            Some(Err(e)) => tracing::debug!(error = %e, "receive error"),
            None => {}
        }
        let now = Instant::now();
        if deadline.is_some_and(|d| now >= d) {
            break;
        }
        if deadline.is_none() && now >= last_heard + cfg.silence_timeout {
            tracing::info!(sensor = %cfg.sensor_id, "core silent, stopping");
            break;
        }
    }
    log.flush().map_err(write_err)?;
    report.runtime = start.elapsed();
    report.transit = compute_delay_stats(&transit).ok();
    report.interarrival = compute_delay_stats(&gaps).ok();
    if report.packets_received == 0 {
        tracing::warn!(sensor = %cfg.sensor_id, core = %cfg.core_addr, "no data received");
    }
    Ok(report)
}

mod opt_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Option<Duration>, s: S) -> Result<S::Ok, S::Error> {
        match d {
            Some(d) => s.serialize_some(&d.as_secs_f64()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Duration>, D::Error> {
        Option::<f64>::deserialize(d)?
            .map(|v| Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom))
            .transpose()
    }
}
