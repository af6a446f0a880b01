//! The second archive copy: an in-memory buffer periodically drained into a
//! pluggable document store.

use std::collections::VecDeque;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Notify;

use super::ArchiveRecord;
use crate::clock::Shutdown;

pub const DEFAULT_FLUSH_INTERVAL: Duration = Duration::from_secs(5);
pub const DEFAULT_FLUSH_THRESHOLD: usize = 10_000;
pub const DEFAULT_BUFFER_CAPACITY: usize = 100_000;
const MIN_BACKOFF: Duration = Duration::from_millis(250);
const MAX_BACKOFF: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
pub enum SinkError {
    #[error("document sink unavailable: {0}")]
    Unavailable(String),
    #[error("document sink I/O failed: {0}")]
    Io(#[from] io::Error),
}

/// Destination for batches of archive records. Implementations must be
/// idempotent enough to tolerate a batch being retried after a failure.
pub trait DocumentSink: Send {
    fn write_batch(&mut self, records: &[ArchiveRecord]) -> Result<(), SinkError>;
}

/// Default sink: one NDJSON file.
pub struct FileSink {
    path: PathBuf,
    out: BufWriter<std::fs::File>,
}

impl FileSink {
    pub fn create(path: &Path) -> io::Result<Self> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)?;
        Ok(Self {
            path: path.to_owned(),
            out: BufWriter::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl DocumentSink for FileSink {
    fn write_batch(&mut self, records: &[ArchiveRecord]) -> Result<(), SinkError> {
        for r in records {
            serde_json::to_writer(&mut self.out, r).map_err(io::Error::from)?;
            self.out.write_all(b"\n")?;
        }
        self.out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinkConfig {
    #[serde(with = "crate::sensor::secs_f64")]
    pub flush_interval: Duration,
    pub flush_threshold: usize,
    pub capacity: usize,
}

impl Default for SinkConfig {
    fn default() -> Self {
        Self {
            flush_interval: DEFAULT_FLUSH_INTERVAL,
            flush_threshold: DEFAULT_FLUSH_THRESHOLD,
            capacity: DEFAULT_BUFFER_CAPACITY,
        }
    }
}

/// Bounded FIFO of records awaiting the sink. Overflow drops the oldest.
#[derive(Debug)]
pub struct SinkBuffer {
    queue: VecDeque<ArchiveRecord>,
    capacity: usize,
    dropped: u64,
    written: u64,
}

impl SinkBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            queue: VecDeque::new(),
            capacity: capacity.max(1),
            dropped: 0,
            written: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn written(&self) -> u64 {
        self.written
    }

    pub fn push(&mut self, record: ArchiveRecord) {
        self.queue.push_back(record);
        self.trim();
    }

    fn trim(&mut self) {
        let excess = self.queue.len().saturating_sub(self.capacity);
        if excess > 0 {
            self.queue.drain(..excess);
            self.dropped += excess as u64;
            tracing::warn!(
                dropped = excess,
                total_dropped = self.dropped,
                "sink buffer overflow"
            );
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FlushReport {
    pub records_written: usize,
}

/// Moves everything buffered into `sink`. On failure the batch is put back in
/// front of anything that arrived meanwhile, so nothing is lost short of
/// buffer overflow.
pub fn flush_to_document_sink(
    buffer: &Mutex<SinkBuffer>,
    sink: &mut dyn DocumentSink,
) -> Result<FlushReport, SinkError> {
    let batch: Vec<ArchiveRecord> = buffer.lock().queue.drain(..).collect();
    if batch.is_empty() {
        return Ok(FlushReport { records_written: 0 });
    }
    match sink.write_batch(&batch) {
        Ok(()) => {
            buffer.lock().written += batch.len() as u64;
            Ok(FlushReport {
                records_written: batch.len(),
            })
        }
        Err(e) => {
            let mut buf = buffer.lock();
            let newer = std::mem::take(&mut buf.queue);
            buf.queue = batch.into();
            buf.queue.extend(newer);
            buf.trim();
            Err(e)
        }
    }
}

/// Shared handle the receive path pushes into.
#[derive(Clone)]
pub struct SinkHandle {
    buffer: Arc<Mutex<SinkBuffer>>,
    wake: Arc<Notify>,
    threshold: usize,
}

impl SinkHandle {
    pub fn new(cfg: &SinkConfig) -> Self {
        Self {
            buffer: Arc::new(Mutex::new(SinkBuffer::new(cfg.capacity))),
            wake: Arc::new(Notify::new()),
            threshold: cfg.flush_threshold.max(1),
        }
    }

    pub fn push(&self, record: ArchiveRecord) {
        let len = {
            let mut b = self.buffer.lock();
            b.push(record);
            b.len()
        };
        if len >= self.threshold {
            self.wake.notify_one();
        }
    }

    pub fn buffer(&self) -> &Arc<Mutex<SinkBuffer>> {
        &self.buffer
    }

    pub fn dropped(&self) -> u64 {
        self.buffer.lock().dropped()
    }

    pub fn written(&self) -> u64 {
        self.buffer.lock().written()
    }

    pub fn pending(&self) -> usize {
        self.buffer.lock().len()
    }
}

/// Drains the buffer every `flush_interval`, or early when the threshold is
/// hit, retrying with exponential backoff while the sink fails. One last
/// attempt is made on shutdown. Returns the sink for inspection.
pub async fn run_flusher(
    handle: SinkHandle,
    sink: Box<dyn DocumentSink>,
    cfg: SinkConfig,
    mut shutdown: Shutdown,
) -> Box<dyn DocumentSink> {
    let sink = Arc::new(Mutex::new(sink));
    let mut backoff: Option<Duration> = None;
    loop {
        let wait = backoff.unwrap_or(cfg.flush_interval);
        let stop = tokio::select! {
            _ = tokio::time::sleep(wait) => false,
            _ = handle.wake.notified(), if backoff.is_none() => false,
            _ = shutdown.wait() => true,
        };
        let result = flush_blocking(&handle, &sink).await;
        match result {
            Ok(report) => {
                if backoff.take().is_some() {
                    tracing::info!(records = report.records_written, "document sink recovered");
                }
            }
            Err(e) => {
                let next = backoff.map_or(MIN_BACKOFF, |b| (b * 2).min(MAX_BACKOFF));
                tracing::warn!(error = %e, retry_in_ms = next.as_millis() as u64, "sink flush failed");
                backoff = Some(next);
            }
        }
        if stop {
            break;
        }
    }
    Arc::try_unwrap(sink)
        .ok()
        .expect("flusher holds the only sink reference")
        .into_inner()
}

async fn flush_blocking(
    handle: &SinkHandle,
    sink: &Arc<Mutex<Box<dyn DocumentSink>>>,
) -> Result<FlushReport, SinkError> {
    let buffer = handle.buffer.clone();
    let sink = sink.clone();
    tokio::task::spawn_blocking(move || flush_to_document_sink(&buffer, sink.lock().as_mut()))
        .await
        .unwrap_or_else(|e| Err(SinkError::Unavailable(format!("flush task failed: {e}"))))
}
