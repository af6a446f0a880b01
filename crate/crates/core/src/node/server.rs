use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use socket2::{Domain, Protocol, Socket, Type};
use thiserror::Error;
use tokio::net::UdpSocket;
use tokio::task::JoinHandle;
use tokio::time::Instant;
use tracing::Instrument;

use super::archive::{ArchiveRecord, LineWriter};
use super::capture::{emit_capture_record, StreamClock};
use super::registry::{NodeRegistry, NodeRegistryEntry};
use super::sink::{run_flusher, DocumentSink, FileSink, SinkConfig, SinkHandle};
use crate::clock::{now_ms, now_secs, Shutdown, ShutdownTrigger};
use crate::impairment::{DeliveryScheduler, FanoutShaper, ImpairmentConfig, SendOutcome};
use crate::wire::{Packet, MAX_PACKET_LEN};

pub const DEFAULT_TTL: Duration = Duration::from_secs(60);
const RECV_BUFFER_BYTES: usize = 8 << 20;

/// Where capture lines go.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "target")]
pub enum CaptureTarget {
    None,
    /// A file inside the archive directory.
    #[default]
    Archive,
    File(PathBuf),
    Tcp(SocketAddr),
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreConfig {
    pub sensor_addr: SocketAddr,
    pub client_addr: SocketAddr,
    /// `None` runs until stopped.
    #[serde(default, with = "opt_secs")]
    pub sim_time: Option<Duration>,
    pub archive_dir: PathBuf,
    #[serde(default)]
    pub capture: CaptureTarget,
    #[serde(default)]
    pub sink: SinkConfig,
    #[serde(default = "default_ttl", with = "crate::sensor::secs_f64")]
    pub ttl: Duration,
    /// Applied to every core-to-client link.
    #[serde(default)]
    pub impairment: ImpairmentConfig,
}

fn default_ttl() -> Duration {
    DEFAULT_TTL
}

impl CoreConfig {
    pub fn new(
        sensor_addr: SocketAddr,
        client_addr: SocketAddr,
        archive_dir: impl Into<PathBuf>,
    ) -> Self {
        Self {
            sensor_addr,
            client_addr,
            sim_time: None,
            archive_dir: archive_dir.into(),
            capture: CaptureTarget::default(),
            sink: SinkConfig::default(),
            ttl: DEFAULT_TTL,
            impairment: ImpairmentConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("cannot bind {role} port {addr}: {source}")]
    Bind {
        role: &'static str,
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("cannot open {what} at {path}: {source}")]
    Output {
        what: &'static str,
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Impairment(#[from] crate::impairment::ImpairmentError),
}

/// Outcome of feeding one datagram to the sensor-port handler.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ingest {
    Accepted { targets: Vec<SocketAddr> },
    Malformed,
}

#[derive(Debug, Default)]
struct Counters {
    ingested: AtomicU64,
    malformed: AtomicU64,
    relayed: AtomicU64,
    relay_dropped: AtomicU64,
    relay_failures: AtomicU64,
    client_requests: AtomicU64,
    client_malformed: AtomicU64,
}

/// Everything both receive loops share. The handlers are synchronous and
/// total on arbitrary input so they can be driven directly by tests.
pub struct CoreState {
    registry: RwLock<NodeRegistry>,
    streams: StreamClock,
    archive: LineWriter,
    capture: Option<LineWriter>,
    sink: SinkHandle,
    counters: Counters,
}

impl CoreState {
    pub fn new(archive: LineWriter, capture: Option<LineWriter>, sink: SinkHandle) -> Self {
        Self {
            registry: RwLock::new(NodeRegistry::new()),
            streams: StreamClock::default(),
            archive,
            capture,
            sink,
            counters: Counters::default(),
        }
    }

    /// `now` is epoch seconds.
    pub fn handle_sensor_datagram(&self, bytes: &[u8], source: SocketAddr, now: f64) -> Ingest {
        let packet = match Packet::decode(bytes) {
            Ok(Packet::Data(p)) => p,
            Ok(other) => {
                tracing::debug!(%source, kind = ?other.kind(), "non-data packet on sensor port");
                self.counters.malformed.fetch_add(1, Ordering::Relaxed);
                return Ingest::Malformed;
            }
            Err(e) => {
                tracing::trace!(%source, error = %e, "malformed datagram");
                self.counters.malformed.fetch_add(1, Ordering::Relaxed);
                return Ingest::Malformed;
            }
        };
        let now_ms = (now * 1000.0).floor() as i64;
        let targets = self
            .registry
            .write()
            .record_sensor(&packet.sensor_id, source, now_ms);
        let record = ArchiveRecord::from_packet(&packet, now_ms, source);
        self.archive.append(&record);
        self.sink.push(record);
        let prev = self.streams.observe(&packet.sensor_id, now);
        if let Some(capture) = &self.capture {
            capture.append(&emit_capture_record(&packet, bytes.len(), now, prev));
        }
        self.counters.ingested.fetch_add(1, Ordering::Relaxed);
        Ingest::Accepted { targets }
    }

    /// Returns the ack to send back, or `None` if the request was dropped.
    pub fn handle_client_request(
        &self,
        bytes: &[u8],
        source: SocketAddr,
        now_ms: i64,
    ) -> Option<Vec<u8>> {
        match Packet::decode(bytes) {
            Ok(Packet::Subscribe { sensor_id }) => {
                let added = self.registry.write().subscribe(source, &sensor_id, now_ms);
                if added {
                    tracing::info!(client = %source, sensor = %sensor_id, "subscribed");
                }
                self.counters
                    .client_requests
                    .fetch_add(1, Ordering::Relaxed);
                Packet::Ack { sensor_id }.encode().ok()
            }
            _ => {
                self.counters
                    .client_malformed
                    .fetch_add(1, Ordering::Relaxed);
                None
            }
        }
    }

    pub fn expire_stale(&self, now_ms: i64, ttl: Duration) -> Vec<String> {
        self.registry.write().expire_stale(now_ms, ttl)
    }

    pub fn registry_snapshot(&self) -> Vec<NodeRegistryEntry> {
        self.registry.read().snapshot()
    }

    pub fn registry_len(&self) -> usize {
        self.registry.read().len()
    }

    pub fn malformed(&self) -> u64 {
        self.counters.malformed.load(Ordering::Relaxed)
    }

    pub fn ingested(&self) -> u64 {
        self.counters.ingested.load(Ordering::Relaxed)
    }

    pub fn sink(&self) -> &SinkHandle {
        &self.sink
    }

    /// Blocks until archive and capture lines queued so far are written.
    pub fn sync_outputs(&self) {
        self.archive.sync();
        if let Some(c) = &self.capture {
            c.sync();
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CoreReport {
    pub packets_ingested: u64,
    pub malformed: u64,
    pub relayed: u64,
    pub relay_dropped: u64,
    pub relay_failures: u64,
    pub client_requests: u64,
    pub client_malformed: u64,
    pub sink_written: u64,
    pub sink_dropped: u64,
    pub archive_path: Option<PathBuf>,
    pub sink_path: Option<PathBuf>,
    pub capture_path: Option<PathBuf>,
    #[serde(with = "crate::sensor::secs_f64")]
    pub runtime: Duration,
    pub registry: Vec<NodeRegistryEntry>,
}

/// A running core node.
pub struct CoreNode {
    state: Arc<CoreState>,
    sensor_addr: SocketAddr,
    client_addr: SocketAddr,
    trigger: ShutdownTrigger,
    task: JoinHandle<CoreReport>,
}

fn bind_udp(addr: SocketAddr, role: &'static str) -> Result<UdpSocket, CoreError> {
    let err = |source| CoreError::Bind { role, addr, source };
    let socket =
        Socket::new(Domain::for_address(addr), Type::DGRAM, Some(Protocol::UDP)).map_err(err)?;
    // Best effort: the kernel may clamp this.
    let _ = socket.set_recv_buffer_size(RECV_BUFFER_BYTES);
    socket.set_nonblocking(true).map_err(err)?;
    socket.bind(&addr.into()).map_err(err)?;
    UdpSocket::from_std(socket.into()).map_err(err)
}

fn output_path(dir: &Path, kind: &str, start_ms: i64, port: u16) -> PathBuf {
    dir.join(format!("{kind}-{start_ms}-{port}.ndjson"))
}

impl CoreNode {
    /// Binds both ports and starts serving with the default file sink.
    pub async fn start(cfg: CoreConfig) -> Result<Self, CoreError> {
        Self::start_with_sink(cfg, None).await
    }

    /// Like [`CoreNode::start`] but with a caller-supplied document sink.
    pub async fn start_with_sink(
        cfg: CoreConfig,
        sink: Option<Box<dyn DocumentSink>>,
    ) -> Result<Self, CoreError> {
        cfg.impairment.validate()?;
        let sensor_socket = bind_udp(cfg.sensor_addr, "sensor")?;
        let client_socket = Arc::new(bind_udp(cfg.client_addr, "client")?);
        let sensor_addr = sensor_socket
            .local_addr()
            .map_err(|source| CoreError::Bind {
                role: "sensor",
                addr: cfg.sensor_addr,
                source,
            })?;
        let client_addr = client_socket
            .local_addr()
            .map_err(|source| CoreError::Bind {
                role: "client",
                addr: cfg.client_addr,
                source,
            })?;

        let start_ms = now_ms();
        let port = sensor_addr.port();
        let out_err = |what, path: &Path| {
            let path = path.display().to_string();
            move |source| CoreError::Output { what, path, source }
        };
        let archive_path = output_path(&cfg.archive_dir, "archive", start_ms, port);
        let archive =
            LineWriter::create(&archive_path).map_err(out_err("archive", &archive_path))?;
        let capture = match &cfg.capture {
            CaptureTarget::None => None,
            CaptureTarget::Archive => {
                let p = output_path(&cfg.archive_dir, "capture", start_ms, port);
                Some(LineWriter::create(&p).map_err(out_err("capture file", &p))?)
            }
            CaptureTarget::File(p) => {
                Some(LineWriter::create(p).map_err(out_err("capture file", p))?)
            }
            CaptureTarget::Tcp(addr) => {
                let addr = *addr;
                let path = format!("tcp://{addr}");
                let w = tokio::task::spawn_blocking(move || LineWriter::connect_tcp(addr))
                    .await
                    .expect("connect task")
                    .map_err(|source| CoreError::Output {
                        what: "capture stream",
                        path,
                        source,
                    })?;
                Some(w)
            }
        };
        let capture_path = capture.as_ref().and_then(|c| c.path().map(Path::to_owned));
        let (sink, sink_path): (Box<dyn DocumentSink>, _) = match sink {
            Some(s) => (s, None),
            None => {
                let p = output_path(&cfg.archive_dir, "sink", start_ms, port);
                let s = FileSink::create(&p).map_err(out_err("document sink", &p))?;
                (Box::new(s), Some(p))
            }
        };

        let sink_handle = SinkHandle::new(&cfg.sink);
        let state = Arc::new(CoreState::new(archive, capture, sink_handle.clone()));
        let (trigger, shutdown) = Shutdown::new();
        let shaper = Arc::new(FanoutShaper::new(
            cfg.impairment,
            (!cfg.impairment.is_transparent()).then(DeliveryScheduler::spawn),
        ));

        tracing::info!(%sensor_addr, %client_addr, archive = %archive_path.display(), "core listening");

        let (stop_loops, loops_shutdown) = Shutdown::new();
        let sensor_loop = tokio::spawn(
            sensor_loop(
                state.clone(),
                sensor_socket,
                client_socket.clone(),
                shaper.clone(),
                loops_shutdown.clone(),
            )
            .in_current_span(),
        );
        let client_loop = tokio::spawn(
            client_loop(state.clone(), client_socket, shaper, loops_shutdown.clone())
                .in_current_span(),
        );
        let expiry = tokio::spawn(
            expiry_loop(state.clone(), cfg.ttl, loops_shutdown.clone()).in_current_span(),
        );
        let flusher = tokio::spawn(
            run_flusher(sink_handle, sink, cfg.sink, loops_shutdown).in_current_span(),
        );

        let sim_time = cfg.sim_time;
        let task_state = state.clone();
        let task = tokio::spawn(
            async move {
                let started = Instant::now();
                let mut shutdown = shutdown;
                match sim_time {
                    Some(s) => tokio::select! {
                        _ = tokio::time::sleep(s) => {}
                        _ = shutdown.wait() => {}
                    },
                    None => shutdown.wait().await,
                }
                stop_loops.trigger();
                let relay = sensor_loop.await.unwrap_or_default();
                let _ = client_loop.await;
                let _ = expiry.await;
                let _ = flusher.await;
                let state = task_state;
                let sync_state = state.clone();
                let _ = tokio::task::spawn_blocking(move || sync_state.sync_outputs()).await;
                let c = &state.counters;
                let report = CoreReport {
                    packets_ingested: c.ingested.load(Ordering::Relaxed),
                    malformed: c.malformed.load(Ordering::Relaxed),
                    relayed: relay.relayed,
                    relay_dropped: relay.dropped,
                    relay_failures: relay.failures,
                    client_requests: c.client_requests.load(Ordering::Relaxed),
                    client_malformed: c.client_malformed.load(Ordering::Relaxed),
                    sink_written: state.sink.written(),
                    sink_dropped: state.sink.dropped(),
                    archive_path: Some(archive_path),
                    sink_path,
                    capture_path,
                    runtime: started.elapsed(),
                    registry: state.registry_snapshot(),
                };
                tracing::info!(
                    ingested = report.packets_ingested,
                    malformed = report.malformed,
                    relayed = report.relayed,
                    "core stopped"
                );
                report
            }
            .in_current_span(),
        );

        Ok(Self {
            state,
            sensor_addr,
            client_addr,
            trigger,
            task,
        })
    }

    pub fn sensor_addr(&self) -> SocketAddr {
        self.sensor_addr
    }

    pub fn client_addr(&self) -> SocketAddr {
        self.client_addr
    }

    pub fn state(&self) -> &Arc<CoreState> {
        &self.state
    }

    /// Stops early; [`CoreNode::wait`] then returns promptly.
    pub fn stop(&self) {
        self.trigger.trigger();
    }

    pub async fn wait(self) -> CoreReport {
        let Self { task, trigger, .. } = self;
        let report = task.await.expect("core task panicked");
        drop(trigger);
        report
    }

    /// Runs until the sim time elapses or `shutdown` fires.
    pub async fn run_until(self, mut shutdown: Shutdown) -> CoreReport {
        let Self {
            mut task, trigger, ..
        } = self;
        tokio::select! {
            r = &mut task => return r.expect("core task panicked"),
            _ = shutdown.wait() => trigger.trigger(),
        }
        task.await.expect("core task panicked")
    }

    /// Stops and waits.
    pub async fn shutdown(self) -> CoreReport {
        self.stop();
        self.wait().await
    }
}

#[derive(Debug, Default)]
struct RelayTotals {
    relayed: u64,
    dropped: u64,
    failures: u64,
}

async fn sensor_loop(
    state: Arc<CoreState>,
    socket: UdpSocket,
    out: Arc<UdpSocket>,
    shaper: Arc<FanoutShaper>,
    mut shutdown: Shutdown,
) -> RelayTotals {
    let mut totals = RelayTotals::default();
    // One byte of headroom so oversized datagrams are detected, not truncated.
    let mut buf = vec![0u8; MAX_PACKET_LEN.max(65_507) + 1];
    loop {
        let (n, source) = tokio::select! {
            r = socket.recv_from(&mut buf) => match r {
                Ok(v) => v,
                Err(e) => {
                    tracing::debug!(error = %e, "sensor port receive error");
                    continue;
                }
            },
            _ = shutdown.wait() => break,
        };
        let bytes = &buf[..n];
        if let Ingest::Accepted { targets } =
            state.handle_sensor_datagram(bytes, source, now_secs())
        {
            for dest in targets {
                match shaper.send(&out, dest, bytes).await {
                    Ok(SendOutcome::Dropped) => totals.dropped += 1,
                    Ok(_) => totals.relayed += 1,
                    Err(e) => {
                        totals.failures += 1;
                        tracing::debug!(%dest, error = %e, "relay failed");
                    }
                }
            }
        }
    }
    state
        .counters
        .relayed
        .store(totals.relayed, Ordering::Relaxed);
    state
        .counters
        .relay_dropped
        .store(totals.dropped, Ordering::Relaxed);
    state
        .counters
        .relay_failures
        .store(totals.failures, Ordering::Relaxed);
    totals
}

async fn client_loop(
    state: Arc<CoreState>,
    socket: Arc<UdpSocket>,
    shaper: Arc<FanoutShaper>,
    mut shutdown: Shutdown,
) {
    let mut buf = vec![0u8; 65_536];
    loop {
        let (n, source) = tokio::select! {
            r = socket.recv_from(&mut buf) => match r {
                Ok(v) => v,
                Err(e) => {
                    tracing::debug!(error = %e, "client port receive error");
                    continue;
                }
            },
            _ = shutdown.wait() => break,
        };
        if let Some(ack) = state.handle_client_request(&buf[..n], source, now_ms()) {
            if let Err(e) = shaper.send(&socket, source, &ack).await {
                tracing::debug!(client = %source, error = %e, "ack failed");
            }
        }
    }
}

async fn expiry_loop(state: Arc<CoreState>, ttl: Duration, mut shutdown: Shutdown) {
    let period = (ttl / 4).clamp(Duration::from_millis(100), Duration::from_secs(15));
    let mut tick = tokio::time::interval(period);
    tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        tokio::select! {
            _ = tick.tick() => {}
            _ = shutdown.wait() => break,
        }
        let removed = state.expire_stale(now_ms(), ttl);
        if !removed.is_empty() {
            tracing::info!(count = removed.len(), ids = ?removed, "expired idle nodes");
        }
    }
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor::{Generator, SensorType};

    fn state(dir: &Path) -> CoreState {
        let archive = LineWriter::create(&dir.join("archive.ndjson")).unwrap();
        let capture = LineWriter::create(&dir.join("capture.ndjson")).unwrap();
        CoreState::new(
            archive,
            Some(capture),
            SinkHandle::new(&SinkConfig::default()),
        )
    }

    fn addr(port: u16) -> SocketAddr {
        SocketAddr::from(([127, 0, 0, 1], port))
    }

    #[test]
    fn garbage_counts_as_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let s = state(dir.path());
        let junk: Vec<u8> = (0..64u8).map(|b| b.wrapping_mul(37)).collect();
        assert_eq!(
            s.handle_sensor_datagram(&junk, addr(4000), 1.0),
            Ingest::Malformed
        );
        assert_eq!(s.malformed(), 1);
        assert_eq!(s.registry_len(), 0);
    }

    #[test]
    fn data_fans_out_to_subscribers() {
        let dir = tempfile::tempdir().unwrap();
        let s = state(dir.path());
        let ack = s.handle_client_request(
            &Packet::Subscribe {
                sensor_id: "temp_1".into(),
            }
            .encode()
            .unwrap(),
            addr(7001),
            0,
        );
        assert!(matches!(
            Packet::decode(&ack.unwrap()),
            Ok(Packet::Ack { .. })
        ));
        s.handle_client_request(
            &Packet::Subscribe {
                sensor_id: "temp_1".into(),
            }
            .encode()
            .unwrap(),
            addr(7002),
            0,
        );
        let bytes = Packet::Data(Generator::new("temp_1", SensorType::Temp, 1).next_packet(5))
            .encode()
            .unwrap();
        match s.handle_sensor_datagram(&bytes, addr(4000), 2.0) {
            Ingest::Accepted { targets } => assert_eq!(targets.len(), 2),
            other => panic!("{other:?}"),
        }
        assert_eq!(s.sink().pending(), 1);
    }

    #[test]
    fn subscribe_for_unknown_sensor_is_acked() {
        let dir = tempfile::tempdir().unwrap();
        let s = state(dir.path());
        let req = Packet::Subscribe {
            sensor_id: "temp_999".into(),
        }
        .encode()
        .unwrap();
        assert!(s.handle_client_request(&req, addr(7001), 0).is_some());
        assert!(s.handle_client_request(&req, addr(7001), 1).is_some());
        let reg = s.registry_snapshot();
        assert_eq!(reg.len(), 1);
        assert_eq!(reg[0].subscriptions.len(), 1);
    }

    #[test]
    fn data_on_client_port_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let s = state(dir.path());
        let bytes = Packet::Data(Generator::new("temp_1", SensorType::Temp, 1).next_packet(5))
            .encode()
            .unwrap();
        assert!(s.handle_client_request(&bytes, addr(7001), 0).is_none());
        assert_eq!(s.registry_len(), 0);
    }
}
