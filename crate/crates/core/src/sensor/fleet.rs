use std::net::SocketAddr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::mpsc;
use tokio::task::JoinSet;
use tokio::time::Instant;
use tracing::Instrument;

use super::{
    adjusted_interval, BaseIntervals, Generator, GeneratorConfig, Schedule, Sensor, SensorError,
    SensorReport, SensorSpec, SensorType,
};
use crate::clock::Shutdown;
use crate::impairment::{DeliveryScheduler, ImpairmentConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetConfig {
    pub specs: Vec<SensorSpec>,
    pub core_addr: SocketAddr,
    #[serde(with = "super::secs_f64")]
    pub sim_time: Duration,
    #[serde(default)]
    pub base_intervals: BaseIntervals,
    #[serde(default)]
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub jitter: bool,
    /// Applied independently to each sensor-to-core link.
    #[serde(default)]
    pub impairment: ImpairmentConfig,
}

/// One sensor the fleet will run: id, type and its adjusted interval.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensorPlan {
    pub sensor_id: String,
    pub sensor_type: SensorType,
    pub interval: Duration,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum FleetError {
    #[error("fleet needs at least one sensor")]
    Empty,
    #[error(transparent)]
    Rate(#[from] super::RateError),
    #[error("{source}; started before failure: {started:?}")]
    PartialStart {
        started: Vec<String>,
        #[source]
        source: SensorError,
    },
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct FleetReport {
    pub node_count: usize,
    /// From the first spawn until every sensor has bound its socket.
    #[serde(with = "super::secs_f64")]
    pub startup_duration: Duration,
    pub ids: Vec<String>,
}

// splitmix64 finalizer: spreads a fleet seed over per-sensor streams.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Expands specs into concrete sensors. Repeated types continue numbering,
/// so `temp:2 temp:3` yields `temp_1..temp_5`.
pub fn plan_fleet(
    specs: &[SensorSpec],
    base: &BaseIntervals,
    seed: u64,
) -> Result<Vec<SensorPlan>, super::RateError> {
    let mut next_index = [0usize; SensorType::ALL.len()];
    let mut plans = Vec::with_capacity(specs.iter().map(|s| s.count).sum());
    for spec in specs {
        let interval = adjusted_interval(base.get(spec.sensor_type), spec.rate_percent.get())?;
        let slot = SensorType::ALL
            .iter()
            .position(|t| *t == spec.sensor_type)
            .expect("all types listed");
        for _ in 0..spec.count {
            next_index[slot] += 1;
            let index = next_index[slot];
            plans.push(SensorPlan {
                sensor_id: spec.sensor_type.sensor_id(index),
                sensor_type: spec.sensor_type,
                interval,
                seed: mix(seed ^ mix(((slot as u64) << 32) | index as u64)),
            });
        }
    }
    Ok(plans)
}

/// A running fleet. Reports arrive as each sensor finishes.
pub struct Fleet {
    pub report: FleetReport,
    tasks: JoinSet<SensorReport>,
    // Kept alive until the fleet is joined so delayed packets still flow.
    _scheduler: Option<DeliveryScheduler>,
}

impl Fleet {
    pub async fn join(mut self) -> Vec<SensorReport> {
        let mut reports = Vec::with_capacity(self.report.node_count);
        while let Some(res) = self.tasks.join_next().await {
            match res {
                Ok(r) => reports.push(r),
                Err(e) => tracing::warn!(error = %e, "sensor task ended abnormally"),
            }
        }
        reports.sort_by(|a, b| a.sensor_id.cmp(&b.sensor_id));
        reports
    }

    pub fn abort(&mut self) {
        self.tasks.abort_all();
    }
}

/// Spawns one timed loop per sensor and waits until all are ready.
pub async fn launch_fleet(cfg: &FleetConfig, shutdown: Shutdown) -> Result<Fleet, FleetError> {
    let plans = plan_fleet(&cfg.specs, &cfg.base_intervals, cfg.seed)?;
    if plans.is_empty() {
        return Err(FleetError::Empty);
    }
    let scheduler = (!cfg.impairment.is_transparent()).then(DeliveryScheduler::spawn);
    let (ready_tx, mut ready_rx) =
        mpsc::channel::<Result<String, SensorError>>(plans.len().min(4096));
    let mut tasks = JoinSet::new();
    let start = Instant::now();
    for plan in plans.iter().cloned() {
        let ready = ready_tx.clone();
        let generator = Generator::with_config(
            plan.sensor_id.clone(),
            plan.sensor_type,
            plan.seed,
            cfg.generator,
        );
        let schedule = Schedule {
            interval: plan.interval,
            sim_time: cfg.sim_time,
            jitter_seed: cfg.jitter.then(|| mix(plan.seed)),
        };
        let core_addr = cfg.core_addr;
        let mut impairment = cfg.impairment;
        impairment.rng_seed = mix(impairment.rng_seed ^ plan.seed);
        let scheduler = scheduler.clone();
        let shutdown = shutdown.clone();
        tasks.spawn(
            async move {
                match Sensor::bind(
                    generator,
                    core_addr,
                    schedule,
                    impairment,
                    scheduler.as_ref(),
                )
                .await
                {
                    Ok(sensor) => {
                        let _ = ready.send(Ok(plan.sensor_id)).await;
                        drop(ready);
                        sensor.run(shutdown).await
                    }
                    Err(e) => {
                        let _ = ready.send(Err(e)).await;
                        SensorReport {
                            sensor_id: plan.sensor_id,
                            packets_sent: 0,
                            send_failures: 0,
                            impaired_drops: 0,
                            runtime: Duration::ZERO,
                        }
                    }
                }
            }
            .in_current_span(),
        );
    }
    drop(ready_tx);

    let mut started = Vec::with_capacity(plans.len());
    let mut first_error = None;
    let mut reported = 0;
    while reported < plans.len() {
        let Some(msg) = ready_rx.recv().await else {
            break;
        };
        reported += 1;
        match msg {
            Ok(id) => started.push(id),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    let startup_duration = start.elapsed();
    if let Some(source) = first_error {
        tasks.abort_all();
        started.sort();
        return Err(FleetError::PartialStart { started, source });
    }
    tracing::info!(
        nodes = plans.len(),
        startup_ms = startup_duration.as_secs_f64() * 1000.0,
        "fleet started"
    );
    Ok(Fleet {
        report: FleetReport {
            node_count: plans.len(),
            startup_duration,
            ids: plans.into_iter().map(|p| p.sensor_id).collect(),
        },
        tasks,
        _scheduler: scheduler,
    })
}
