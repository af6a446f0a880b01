use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::net::{SocketAddr, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::sensor::SensorType;
use crate::wire::{to_json_value, DataPacket};

/// One ingested sensor packet as stored in the local archive and sent to the
/// document sink.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveRecord {
    /// Core receive time, ms since epoch.
    pub received_at: i64,
    pub sensor_id: String,
    pub sensor_type: SensorType,
    pub seq: u64,
    /// Sensor send time, ms since epoch.
    pub sent_at: i64,
    pub source_addr: SocketAddr,
    /// The reading in canonical JSON form.
    pub payload: serde_json::Value,
}

impl ArchiveRecord {
    pub fn from_packet(packet: &DataPacket, received_at: i64, source_addr: SocketAddr) -> Self {
        Self {
            received_at,
            sensor_id: packet.sensor_id.clone(),
            sensor_type: packet.sensor_type,
            seq: packet.seq,
            sent_at: packet.sent_at_ms,
            source_addr,
            payload: to_json_value(&packet.payload),
        }
    }
}

enum Msg {
    Line(Vec<u8>),
    Barrier(mpsc::Sender<()>),
}

/// Append-only NDJSON writer backed by its own thread, so appends never
/// block the receive path. Lines from all callers are serialized in
/// submission order.
pub struct LineWriter {
    tx: Option<mpsc::Sender<Msg>>,
    thread: Option<JoinHandle<io::Result<()>>>,
    submitted: Arc<AtomicU64>,
    path: Option<PathBuf>,
}

const IDLE_FLUSH: Duration = Duration::from_millis(200);

impl LineWriter {
    pub fn create(path: &Path) -> io::Result<Self> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let mut w = Self::spawn(Box::new(file), path.display().to_string());
        w.path = Some(path.to_owned());
        Ok(w)
    }

    pub fn connect_tcp(addr: SocketAddr) -> io::Result<Self> {
        let stream = TcpStream::connect_timeout(&addr, Duration::from_secs(5))?;
        stream.set_nodelay(true)?;
        Ok(Self::spawn(Box::new(stream), format!("tcp://{addr}")))
    }

    pub fn from_writer(out: Box<dyn Write + Send>) -> Self {
        Self::spawn(out, "writer".into())
    }

    fn spawn(out: Box<dyn Write + Send>, label: String) -> Self {
        let (tx, rx) = mpsc::channel::<Msg>();
        let thread = std::thread::Builder::new()
            .name("ndjson-writer".into())
            .spawn(move || {
                let mut out = BufWriter::with_capacity(64 * 1024, out);
                let mut dirty = false;
                loop {
                    match rx.recv_timeout(IDLE_FLUSH) {
                        Ok(Msg::Line(line)) => {
                            if let Err(e) = out.write_all(&line) {
                                tracing::warn!(target_file = %label, error = %e, "append failed");
                                return Err(e);
                            }
                            dirty = true;
                        }
                        Ok(Msg::Barrier(ack)) => {
                            out.flush()?;
                            dirty = false;
                            let _ = ack.send(());
                        }
                        Err(mpsc::RecvTimeoutError::Timeout) => {
                            if dirty {
                                out.flush()?;
                                dirty = false;
                            }
                        }
                        Err(mpsc::RecvTimeoutError::Disconnected) => break,
                    }
                }
                out.flush()
            })
            .expect("spawn writer thread");
        Self {
            tx: Some(tx),
            thread: Some(thread),
            submitted: Arc::default(),
            path: None,
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Queues one record as a JSON line.
    pub fn append<T: Serialize>(&self, record: &T) {
        let mut line = match serde_json::to_vec(record) {
            Ok(l) => l,
            Err(e) => {
                tracing::warn!(error = %e, "record not serializable");
                return;
            }
        };
        line.push(b'\n');
        if let Some(tx) = &self.tx {
            if tx.send(Msg::Line(line)).is_ok() {
                self.submitted.fetch_add(1, Ordering::Relaxed);
            }
        }
    }

    pub fn lines_submitted(&self) -> u64 {
        self.submitted.load(Ordering::Relaxed)
    }

    /// Blocks until every line queued so far has reached the output.
    pub fn sync(&self) {
        let (ack_tx, ack_rx) = mpsc::channel();
        if let Some(tx) = &self.tx {
            if tx.send(Msg::Barrier(ack_tx)).is_ok() {
                let _ = ack_rx.recv();
            }
        }
    }

    pub fn close(mut self) -> io::Result<()> {
        self.shutdown()
    }

    fn shutdown(&mut self) -> io::Result<()> {
        self.tx.take();
        match self.thread.take() {
            Some(t) => t
                .join()
                .unwrap_or_else(|_| Err(io::Error::other("writer thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for LineWriter {
    fn drop(&mut self) {
        let _ = self.shutdown();
    }
}

/// Opens `path` for reading archive or capture lines.
pub fn open_ndjson(path: &Path) -> io::Result<io::BufReader<File>> {
    File::open(path).map(io::BufReader::new)
}
