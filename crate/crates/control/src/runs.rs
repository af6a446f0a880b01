//! Managed runs: execution of a validated plan and the shared run table.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::RwLock;
use serde::Serialize;
use stgen_core::client::{subscribe_and_receive, ClientError, ClientReport};
use stgen_core::clock::{now_ms, Shutdown, ShutdownTrigger};
use stgen_core::node::{CoreError, CoreNode, CoreReport};
use stgen_core::sensor::{launch_fleet, FleetError, SensorReport};
use thiserror::Error;
use tracing::Instrument;

use futures::FutureExt;

use crate::logbuf::{LogBuffer, LogRouter, DEFAULT_LOG_CAPACITY, RUN_SPAN};
use crate::params::{ParamError, Role, RunParams, RunPlan};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Fleet(#[from] FleetError),
    #[error(transparent)]
    Client(#[from] ClientError),
}

#[derive(Debug, Clone, Serialize)]
pub struct FleetSummary {
    pub node_count: usize,
    pub startup_ms: f64,
    pub packets_sent: u64,
    pub sensors: Vec<SensorReport>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "lowercase", tag = "role")]
pub enum RunSummary {
    Core(CoreReport),
    Fleet(FleetSummary),
    Client(ClientReport),
}

/// Runs a plan to completion. `on_running` fires once the run's sockets are
/// bound. Both the CLI and the REST service go through here.
pub async fn execute(
    plan: RunPlan,
    shutdown: Shutdown,
    on_running: impl FnOnce(),
) -> Result<RunSummary, RunError> {
    match plan {
        RunPlan::Core(cfg) => {
            let node = CoreNode::start(cfg).await?;
            on_running();
            Ok(RunSummary::Core(node.run_until(shutdown).await))
        }
        RunPlan::Fleet(cfg) => {
            let fleet = launch_fleet(&cfg, shutdown).await?;
            on_running();
            let node_count = fleet.report.node_count;
            let startup_ms = fleet.report.startup_duration.as_secs_f64() * 1e3;
            let sensors = fleet.join().await;
            let packets_sent = sensors.iter().map(|s| s.packets_sent).sum();
            tracing::info!(nodes = node_count, packets_sent, "fleet finished");
            Ok(RunSummary::Fleet(FleetSummary {
                node_count,
                startup_ms,
                packets_sent,
                sensors,
            }))
        }
        RunPlan::Client(cfg) => {
            on_running();
            let report = subscribe_and_receive(&cfg, shutdown).await?;
            tracing::info!(
                sensor = %report.sensor_id,
                received = report.packets_received,
                "client finished"
            );
            Ok(RunSummary::Client(report))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RunState {
    Starting,
    Running,
    Finished,
    Failed,
}

impl RunState {
    pub fn is_terminal(self) -> bool {
        matches!(self, RunState::Finished | RunState::Failed)
    }

    fn can_move_to(self, next: RunState) -> bool {
        matches!(
            (self, next),
            (RunState::Starting, RunState::Running)
                | (RunState::Starting, RunState::Failed)
                | (RunState::Running, RunState::Finished)
                | (RunState::Running, RunState::Failed)
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunHandle {
    pub run_id: String,
    pub role: Role,
    pub params: serde_json::Value,
    pub state: RunState,
    pub started_at: i64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<i64>,
    /// Sequence number of the next log line.
    pub log_cursor: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<serde_json::Value>,
}

struct RunEntry {
    handle: RunHandle,
    logs: Arc<LogBuffer>,
    stop: ShutdownTrigger,
    sockets: usize,
}

impl RunEntry {
    fn view(&self) -> RunHandle {
        RunHandle {
            log_cursor: self.logs.cursor(),
            ..self.handle.clone()
        }
    }
}

/// Admission limits. A request that would exceed either is refused with
/// [`StartError::Unavailable`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Limits {
    pub max_active_runs: usize,
    /// Sockets held by active runs, bounded by the descriptor limit.
    pub max_active_sockets: usize,
}

impl Limits {
    /// Leaves headroom below the soft descriptor limit for the HTTP side.
    pub fn from_rlimit() -> Self {
        let mut lim = libc::rlimit {
            rlim_cur: 0,
            rlim_max: 0,
        };
        let soft = if unsafe { libc::getrlimit(libc::RLIMIT_NOFILE, &mut lim) } == 0 {
            lim.rlim_cur as usize
        } else {
            1024
        };
        Limits {
            max_active_runs: 64,
            max_active_sockets: soft.saturating_sub(256).max(16),
        }
    }
}

#[derive(Debug, Error)]
pub enum StartError {
    #[error(transparent)]
    Invalid(#[from] ParamError),
    #[error("{0}")]
    Unavailable(String),
}

static NEXT_RUN: AtomicU64 = AtomicU64::new(1);

pub struct RunTable {
    runs: RwLock<BTreeMap<String, RunEntry>>,
    limits: Limits,
    router: LogRouter,
    log_capacity: usize,
}

impl RunTable {
    pub fn new(limits: Limits, router: LogRouter) -> Arc<Self> {
        Arc::new(Self {
            runs: RwLock::new(BTreeMap::new()),
            limits,
            router,
            log_capacity: DEFAULT_LOG_CAPACITY,
        })
    }

    pub fn limits(&self) -> Limits {
        self.limits
    }

    /// Validates, admits and spawns a run on the current runtime.
    pub fn start(self: &Arc<Self>, params: RunParams) -> Result<RunHandle, StartError> {
        let plan = params.plan()?;
        let sockets = params.socket_cost();
        let run_id = format!("run-{}", NEXT_RUN.fetch_add(1, Ordering::Relaxed));
        let logs = Arc::new(LogBuffer::new(self.log_capacity));
        let (stop, shutdown) = Shutdown::new();
        let handle = RunHandle {
            run_id: run_id.clone(),
            role: params.role(),
            params: params.to_json(),
            state: RunState::Starting,
            started_at: now_ms(),
            finished_at: None,
            log_cursor: 0,
            error: None,
            summary: None,
        };
        {
            let mut runs = self.runs.write();
            let active: Vec<&RunEntry> = runs
                .values()
                .filter(|e| !e.handle.state.is_terminal())
                .collect();
            if active.len() >= self.limits.max_active_runs {
                return Err(StartError::Unavailable(format!(
                    "too many active runs (limit {})",
                    self.limits.max_active_runs
                )));
            }
            let held: usize = active.iter().map(|e| e.sockets).sum();
            if held + sockets > self.limits.max_active_sockets {
                return Err(StartError::Unavailable(format!(
                    "run needs {sockets} sockets but only {} of {} are free",
                    self.limits.max_active_sockets.saturating_sub(held),
                    self.limits.max_active_sockets
                )));
            }
            runs.insert(
                run_id.clone(),
                RunEntry {
                    handle: handle.clone(),
                    logs: logs.clone(),
                    stop,
                    sockets,
                },
            );
        }

        self.router.register(&run_id, logs.clone());
        let span = tracing::info_span!(RUN_SPAN, run_id = %run_id, role = ?handle.role);
        let table = Arc::clone(self);
        tokio::spawn(
            async move {
                tracing::info!(params = %handle.params, "run starting");
                let running = {
                    let table = table.clone();
                    let id = run_id.clone();
                    move || table.transition(&id, RunState::Running, None, None)
                };
                let outcome = std::panic::AssertUnwindSafe(execute(plan, shutdown, running))
                    .catch_unwind()
                    .await;
                match outcome {
                    Ok(Ok(summary)) => {
                        tracing::info!("run finished");
                        let summary = serde_json::to_value(&summary).ok();
                        table.transition(&run_id, RunState::Finished, None, summary);
                    }
                    Ok(Err(e)) => {
                        tracing::error!(error = %e, "run failed");
                        table.transition(&run_id, RunState::Failed, Some(e.to_string()), None);
                    }
                    Err(_) => {
                        tracing::error!("run panicked");
                        table.transition(
                            &run_id,
                            RunState::Failed,
                            Some("run panicked".into()),
                            None,
                        );
                    }
                }
                table.router.remove(&run_id);
                logs.close();
            }
            .instrument(span),
        );
        Ok(self.get(&handle.run_id).expect("just inserted"))
    }

    fn transition(
        &self,
        run_id: &str,
        next: RunState,
        error: Option<String>,
        summary: Option<serde_json::Value>,
    ) {
        let mut runs = self.runs.write();
        let Some(entry) = runs.get_mut(run_id) else {
            return;
        };
        let h = &mut entry.handle;
        if !h.state.can_move_to(next) {
            tracing::warn!(run_id, from = ?h.state, to = ?next, "ignored state change");
            return;
        }
        h.state = next;
        if next.is_terminal() {
            h.finished_at = Some(now_ms());
            h.error = error;
            h.summary = summary;
        }
    }

    pub fn get(&self, run_id: &str) -> Option<RunHandle> {
        self.runs.read().get(run_id).map(RunEntry::view)
    }

    pub fn list(&self) -> Vec<RunHandle> {
        self.runs.read().values().map(RunEntry::view).collect()
    }

    pub fn logs(&self, run_id: &str) -> Option<Arc<LogBuffer>> {
        self.runs.read().get(run_id).map(|e| e.logs.clone())
    }

    /// Asks a run to stop early; it reaches a terminal state on its own.
    pub fn stop(&self, run_id: &str) -> Option<RunHandle> {
        let runs = self.runs.read();
        let entry = runs.get(run_id)?;
        entry.stop.trigger();
        Some(entry.view())
    }

    pub fn counts(&self) -> BTreeMap<RunState, usize> {
        let mut out = BTreeMap::new();
        for e in self.runs.read().values() {
            *out.entry(e.handle.state).or_default() += 1;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_machine_only_moves_forward() {
        use RunState::*;
        assert!(Starting.can_move_to(Running));
        assert!(Running.can_move_to(Finished));
        assert!(Starting.can_move_to(Failed));
        for s in [Starting, Running, Finished, Failed] {
            assert!(!s.can_move_to(Starting));
            assert!(!Finished.can_move_to(s));
            assert!(!Failed.can_move_to(s));
        }
    }

    #[test]
    fn limits_leave_headroom() {
        let l = Limits::from_rlimit();
        assert!(l.max_active_sockets >= 16);
    }
}
