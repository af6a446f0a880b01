use std::net::{IpAddr, Ipv4Addr, Ipv6Addr, SocketAddr};
use std::sync::Arc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;
use tokio::net::UdpSocket;
use tokio::time::Instant;

use super::Generator;
use crate::clock::{now_ms, Shutdown};
use crate::impairment::{DeliveryScheduler, ImpairedLink, ImpairmentConfig, SendOutcome};
use crate::wire::Packet;

/// Jitter, when enabled, moves each send by up to this fraction of the
/// interval in either direction.
pub const JITTER_FRACTION: f64 = 0.1;

#[derive(Debug, Error)]
pub enum SensorError {
    #[error("sensor {sensor_id} could not bind a UDP socket: {source}")]
    Bind {
        sensor_id: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct SensorReport {
    pub sensor_id: String,
    pub packets_sent: u64,
    pub send_failures: u64,
    /// Packets the sensor emitted that the impairment layer discarded.
    pub impaired_drops: u64,
    #[serde(with = "secs")]
    pub runtime: Duration,
}

#[derive(Debug, Clone, Copy)]
pub struct Schedule {
    pub interval: Duration,
    pub sim_time: Duration,
    /// Seed for per-send jitter; `None` sends on the fixed grid.
    pub jitter_seed: Option<u64>,
}

/// A sensor with its socket bound and ready to start its timed loop.
pub struct Sensor {
    generator: Generator,
    link: ImpairedLink,
    schedule: Schedule,
}

fn unspecified_for(addr: SocketAddr) -> SocketAddr {
    let ip = match addr.ip() {
        IpAddr::V4(v4) if v4.is_loopback() => IpAddr::V4(Ipv4Addr::LOCALHOST),
        IpAddr::V4(_) => IpAddr::V4(Ipv4Addr::UNSPECIFIED),
        IpAddr::V6(v6) if v6.is_loopback() => IpAddr::V6(Ipv6Addr::LOCALHOST),
        IpAddr::V6(_) => IpAddr::V6(Ipv6Addr::UNSPECIFIED),
    };
    SocketAddr::new(ip, 0)
}

impl Sensor {
    pub async fn bind(
        generator: Generator,
        core_addr: SocketAddr,
        schedule: Schedule,
        impairment: ImpairmentConfig,
        scheduler: Option<&DeliveryScheduler>,
    ) -> Result<Self, SensorError> {
        let socket = UdpSocket::bind(unspecified_for(core_addr))
            .await
            .map_err(|source| SensorError::Bind {
                sensor_id: generator.sensor_id().to_owned(),
                source,
            })?;
        let link = ImpairedLink::new(Arc::new(socket), core_addr, impairment, scheduler);
        Ok(Self {
            generator,
            link,
            schedule,
        })
    }

    pub fn sensor_id(&self) -> &str {
        self.generator.sensor_id()
    }

    /// Sends one packet every interval from t = 0 while t < sim_time, then
    /// idles until t = sim_time so total runtime does not depend on the rate.
    pub async fn run(mut self, mut shutdown: Shutdown) -> SensorReport {
        let Schedule {
            interval,
            sim_time,
            jitter_seed,
        } = self.schedule;
        let mut jitter = jitter_seed.map(ChaCha8Rng::seed_from_u64);
        let start = Instant::now();
        let end = start + sim_time;
        let mut report = SensorReport {
            sensor_id: self.generator.sensor_id().to_owned(),
            packets_sent: 0,
            send_failures: 0,
            impaired_drops: 0,
            runtime: Duration::ZERO,
        };
        let mut k: u32 = 0;
        while let Some(offset) = interval.checked_mul(k) {
            if offset >= sim_time {
                break;
            }
            let mut due = start + offset;
            if let Some(rng) = jitter.as_mut() {
                let shift = interval.mul_f64(rng.gen_range(0.0..=JITTER_FRACTION));
                due = if rng.gen() {
                    due + shift
                } else {
                    due.checked_sub(shift).unwrap_or(due).max(start)
                };
                due = due.min(end);
            }
            tokio::select! {
                _ = tokio::time::sleep_until(due) => {}
                _ = shutdown.wait() => break,
            }
            let packet = Packet::Data(self.generator.next_packet(now_ms()));
            match packet.encode() {
                Ok(bytes) => match self.link.send(&bytes).await {
                    Ok(SendOutcome::Dropped) => {
                        report.packets_sent += 1;
                        report.impaired_drops += 1;
                    }
                    Ok(_) => report.packets_sent += 1,
                    Err(e) => {
                        report.send_failures += 1;
                        tracing::debug!(sensor = %report.sensor_id, error = %e, "send failed");
                    }
                },
                Err(e) => {
                    report.send_failures += 1;
                    tracing::warn!(sensor = %report.sensor_id, error = %e, "packet encode failed");
                }
            }
            k += 1;
        }
        if !shutdown.is_triggered() {
            tokio::select! {
                _ = tokio::time::sleep_until(end) => {}
                _ = shutdown.wait() => {}
            }
        }
        report.runtime = start.elapsed();
        report
    }
}

/// Binds and runs one sensor for the whole schedule.
pub async fn run_sensor(
    generator: Generator,
    core_addr: SocketAddr,
    schedule: Schedule,
) -> Result<SensorReport, SensorError> {
    let sensor = Sensor::bind(
        generator,
        core_addr,
        schedule,
        ImpairmentConfig::default(),
        None,
    )
    .await?;
    Ok(sensor.run(Shutdown::never()).await)
}

mod secs {
    use std::time::Duration;

    use serde::Serializer;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }
}
