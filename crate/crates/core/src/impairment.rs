//! In-process network impairment for the send path.
//!
//! Each directed link owns a [`LinkState`]: the virtual time at which the
//! link finishes serializing its last accepted packet, plus a seeded RNG for
//! loss decisions. A packet is either dropped or assigned a delivery time of
//! `max(now, link_free) + serialization + base_latency`, which keeps delivery
//! FIFO along a link. Delayed packets are handed to a [`DeliveryScheduler`]
//! that sends them in timestamp order.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::net::SocketAddr;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::net::UdpSocket;
use tokio::sync::mpsc;
use tokio::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(into = "String", try_from = "String")]
pub enum Bandwidth {
    #[default]
    Unbounded,
    /// Bits per second; always > 0.
    Bps(u64),
}

impl Bandwidth {
    /// Time needed to clock `bytes` onto the link.
    pub fn serialization_delay(self, bytes: usize) -> Duration {
        match self {
            Bandwidth::Unbounded => Duration::ZERO,
            Bandwidth::Bps(bps) => {
                let nanos = (bytes as u128 * 8 * 1_000_000_000) / bps as u128;
                Duration::from_nanos(nanos.min(u64::MAX as u128) as u64)
            }
        }
    }
}

impl fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bandwidth::Unbounded => f.write_str("unbounded"),
            Bandwidth::Bps(b) => write!(f, "{b}"),
        }
    }
}

impl FromStr for Bandwidth {
    type Err = ImpairmentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("unbounded") {
            return Ok(Bandwidth::Unbounded);
        }
        match s.parse::<u64>() {
            Ok(0) => Err(ImpairmentError::ZeroBandwidth),
            Ok(b) => Ok(Bandwidth::Bps(b)),
            Err(_) => Err(ImpairmentError::BadBandwidth(s.to_owned())),
        }
    }
}

impl From<Bandwidth> for String {
    fn from(b: Bandwidth) -> Self {
        b.to_string()
    }
}

impl TryFrom<String> for Bandwidth {
    type Error = ImpairmentError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImpairmentError {
    #[error("bandwidth must be a positive number of bits per second or \"unbounded\", got {0:?}")]
    BadBandwidth(String),
    #[error("bandwidth must be greater than zero")]
    ZeroBandwidth,
    #[error("loss probability {0} is outside [0, 1]")]
    LossOutOfRange(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImpairmentConfig {
    pub bandwidth: Bandwidth,
    pub loss_prob: f64,
    #[serde(with = "millis")]
    pub base_latency: Duration,
    pub rng_seed: u64,
}

impl Default for ImpairmentConfig {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::Unbounded,
            loss_prob: 0.0,
            base_latency: Duration::ZERO,
            rng_seed: 0,
        }
    }
}

impl ImpairmentConfig {
    pub fn validate(&self) -> Result<(), ImpairmentError> {
        if !(0.0..=1.0).contains(&self.loss_prob) {
            return Err(ImpairmentError::LossOutOfRange(self.loss_prob));
        }
        if self.bandwidth == Bandwidth::Bps(0) {
            return Err(ImpairmentError::ZeroBandwidth);
        }
        Ok(())
    }

    /// True when applying this config can never drop or delay a packet.
    pub fn is_transparent(&self) -> bool {
        self.bandwidth == Bandwidth::Unbounded
            && self.loss_prob == 0.0
            && self.base_latency.is_zero()
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64() * 1000.0)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let ms = f64::deserialize(d)?;
        Duration::try_from_secs_f64(ms / 1000.0).map_err(serde::de::Error::custom)
    }
}

/// Per-link mutable state: when the link is next free, and the loss RNG.
#[derive(Debug, Clone)]
pub struct LinkState {
    free_at: Duration,
    rng: ChaCha8Rng,
}

impl LinkState {
    pub fn new(seed: u64) -> Self {
        Self {
            free_at: Duration::ZERO,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn free_at(&self) -> Duration {
        self.free_at
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Drop,
    /// Delivery time on the same virtual clock as `now`.
    DeliverAt(Duration),
}

/// Decides the fate of one packet of `packet_size` bytes offered at `now`.
pub fn apply(
    packet_size: usize,
    cfg: &ImpairmentConfig,
    now: Duration,
    link: &mut LinkState,
) -> Decision {
    // Draw on every packet so the loss sequence depends only on the seed and
    // the packet count, not on the configured probability.
    let draw: f64 = link.rng.gen();
    if draw < cfg.loss_prob {
        return Decision::Drop;
    }
    let serialization = cfg.bandwidth.serialization_delay(packet_size);
    link.free_at = link.free_at.max(now) + serialization;
    Decision::DeliverAt(link.free_at + cfg.base_latency)
}

struct Scheduled {
    at: Instant,
    order: u64,
    socket: Arc<UdpSocket>,
    dest: SocketAddr,
    bytes: Vec<u8>,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.order) == (other.at, other.order)
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.at, self.order).cmp(&(other.at, other.order))
    }
}

/// Sends delayed datagrams in delivery-time order, ties broken by
/// submission order. One scheduler task serves any number of links.
#[derive(Clone)]
pub struct DeliveryScheduler {
    origin: Instant,
    tx: mpsc::UnboundedSender<Scheduled>,
    order: Arc<AtomicU64>,
}

impl DeliveryScheduler {
    /// Spawns the scheduler task on the current runtime. The task exits once
    /// every handle is dropped and the queue has drained.
    pub fn spawn() -> Self {
        let (tx, rx) = mpsc::unbounded_channel();
        tokio::spawn(run_scheduler(rx));
        Self {
            origin: Instant::now(),
            tx,
            order: Arc::default(),
        }
    }

    /// Current time on the scheduler's virtual clock.
    pub fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn instant(&self, at: Duration) -> Instant {
        self.origin + at
    }

    fn schedule(&self, at: Instant, socket: &Arc<UdpSocket>, dest: SocketAddr, bytes: &[u8]) {
        let item = Scheduled {
            at,
            order: self.order.fetch_add(1, AtomicOrdering::Relaxed),
            socket: Arc::clone(socket),
            dest,
            bytes: bytes.to_vec(),
        };
        // The receiver only closes once all senders are gone.
        let _ = self.tx.send(item);
    }
}

async fn run_scheduler(mut rx: mpsc::UnboundedReceiver<Scheduled>) {
    let mut queue: BinaryHeap<Reverse<Scheduled>> = BinaryHeap::new();
    let mut open = true;
    while open || !queue.is_empty() {
        let next_at = queue.peek().map(|Reverse(s)| s.at);
        tokio::select! {
            msg = rx.recv(), if open => match msg {
                Some(item) => queue.push(Reverse(item)),
                None => open = false,
            },
            _ = sleep_until_opt(next_at) => {
                let now = Instant::now();
                while queue.peek().is_some_and(|Reverse(s)| s.at <= now) {
                    let Reverse(item) = queue.pop().expect("peeked");
                    if let Err(e) = item.socket.send_to(&item.bytes, item.dest).await {
                        tracing::debug!(dest = %item.dest, error = %e, "delayed send failed");
                    }
                }
            }
        }
    }
}

async fn sleep_until_opt(at: Option<Instant>) {
    match at {
        Some(at) => tokio::time::sleep_until(at).await,
        None => std::future::pending().await,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SendOutcome {
    Sent,
    Scheduled,
    Dropped,
}

/// A directed link from a socket to one destination, optionally impaired.
pub struct ImpairedLink {
    socket: Arc<UdpSocket>,
    dest: SocketAddr,
    shaping: Option<Shaping>,
}

struct Shaping {
    cfg: ImpairmentConfig,
    state: LinkState,
    scheduler: DeliveryScheduler,
}

impl ImpairedLink {
    pub fn direct(socket: Arc<UdpSocket>, dest: SocketAddr) -> Self {
        Self {
            socket,
            dest,
            shaping: None,
        }
    }

    /// Builds an impaired link. Transparent configs skip the scheduler.
    pub fn new(
        socket: Arc<UdpSocket>,
        dest: SocketAddr,
        cfg: ImpairmentConfig,
        scheduler: Option<&DeliveryScheduler>,
    ) -> Self {
        let shaping = match scheduler {
            Some(s) if !cfg.is_transparent() => Some(Shaping {
                cfg,
                state: LinkState::new(cfg.rng_seed),
                scheduler: s.clone(),
            }),
            _ => None,
        };
        Self {
            socket,
            dest,
            shaping,
        }
    }

    pub fn dest(&self) -> SocketAddr {
        self.dest
    }

    pub async fn send(&mut self, bytes: &[u8]) -> std::io::Result<SendOutcome> {
        let Some(shaping) = self.shaping.as_mut() else {
            self.socket.send_to(bytes, self.dest).await?;
            return Ok(SendOutcome::Sent);
        };
        match shaping.decide(bytes.len()) {
            None => Ok(SendOutcome::Dropped),
            Some(None) => {
                self.socket.send_to(bytes, self.dest).await?;
                Ok(SendOutcome::Sent)
            }
            Some(Some(at)) => {
                shaping
                    .scheduler
                    .schedule(at, &self.socket, self.dest, bytes);
                Ok(SendOutcome::Scheduled)
            }
        }
    }
}

impl Shaping {
    /// `None` to drop, `Some(None)` to send now, `Some(Some(t))` to delay.
    fn decide(&mut self, size: usize) -> Option<Option<Instant>> {
        let now = self.scheduler.now();
        match apply(size, &self.cfg, now, &mut self.state) {
            Decision::Drop => None,
            Decision::DeliverAt(at) if at <= now => Some(None),
            Decision::DeliverAt(at) => Some(Some(self.scheduler.instant(at))),
        }
    }
}

/// Impairment for datagrams fanned out from one socket to many peers, one
/// [`LinkState`] per destination.
pub struct FanoutShaper {
    cfg: ImpairmentConfig,
    scheduler: Option<DeliveryScheduler>,
    links: Mutex<HashMap<SocketAddr, LinkState>>,
}

impl FanoutShaper {
    pub fn new(cfg: ImpairmentConfig, scheduler: Option<DeliveryScheduler>) -> Self {
        Self {
            cfg,
            scheduler: scheduler.filter(|_| !cfg.is_transparent()),
            links: Default::default(),
        }
    }

    pub async fn send(
        &self,
        socket: &Arc<UdpSocket>,
        dest: SocketAddr,
        bytes: &[u8],
    ) -> std::io::Result<SendOutcome> {
        let Some(scheduler) = &self.scheduler else {
            socket.send_to(bytes, dest).await?;
            return Ok(SendOutcome::Sent);
        };
        let now = scheduler.now();
        let decision = {
            let mut links = self.links.lock();
            let seed = self.cfg.rng_seed ^ addr_seed(dest);
            let state = links.entry(dest).or_insert_with(|| LinkState::new(seed));
            apply(bytes.len(), &self.cfg, now, state)
        };
        match decision {
            Decision::Drop => Ok(SendOutcome::Dropped),
            Decision::DeliverAt(at) if at <= now => {
                socket.send_to(bytes, dest).await?;
                Ok(SendOutcome::Sent)
            }
            Decision::DeliverAt(at) => {
                scheduler.schedule(scheduler.instant(at), socket, dest, bytes);
                Ok(SendOutcome::Scheduled)
            }
        }
    }
}

// Stable per-destination seed derivation so two clients on one core see
// independent loss sequences.
fn addr_seed(addr: SocketAddr) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in addr.to_string().bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
