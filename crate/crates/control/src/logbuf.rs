//! Per-run log capture.
//!
//! Every run executes inside a `run` span carrying its id. [`RunLogLayer`]
//! copies events emitted anywhere under that span into the run's
//! [`LogBuffer`], a bounded line buffer that drops its oldest lines when
//! full. Readers hold a cursor and learn how many lines they missed.

use std::collections::{HashMap, VecDeque};
use std::fmt::{self, Write as _};
use std::sync::{Arc, OnceLock};
use std::time::SystemTime;

use parking_lot::{Mutex, RwLock};
use tokio::sync::watch;
use tracing::field::{Field, Visit};
use tracing::span::{Attributes, Id};
use tracing::{Event, Subscriber};
use tracing_subscriber::layer::Context;
use tracing_subscriber::registry::LookupSpan;
use tracing_subscriber::Layer;

pub const DEFAULT_LOG_CAPACITY: usize = 10_000;
pub const RUN_SPAN: &str = "run";

#[derive(Debug)]
struct Lines {
    lines: VecDeque<String>,
    /// Sequence number of `lines[0]`.
    first: u64,
    closed: bool,
}

#[derive(Debug)]
pub struct LogBuffer {
    capacity: usize,
    inner: Mutex<Lines>,
    tick: watch::Sender<u64>,
}

/// Result of one read at a cursor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogChunk {
    pub lines: Vec<String>,
    /// Lines between the cursor and the oldest retained line.
    pub missed: u64,
    pub next: u64,
    pub closed: bool,
}

impl LogBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self {
            capacity,
            inner: Mutex::new(Lines {
                lines: VecDeque::new(),
                first: 0,
                closed: false,
            }),
            tick: watch::Sender::new(0),
        }
    }

    pub fn push(&self, line: String) {
        let next = {
            let mut g = self.inner.lock();
            if g.closed {
                return;
            }
            g.lines.push_back(line);
            if g.lines.len() > self.capacity {
                g.lines.pop_front();
                g.first += 1;
            }
            g.first + g.lines.len() as u64
        };
        self.tick.send_replace(next);
    }

    /// Marks the end of the stream; later pushes are ignored.
    pub fn close(&self) {
        self.inner.lock().closed = true;
        self.tick.send_modify(|_| {});
    }

    /// Sequence number the next pushed line will get.
    pub fn cursor(&self) -> u64 {
        let g = self.inner.lock();
        g.first + g.lines.len() as u64
    }

    pub fn is_closed(&self) -> bool {
        self.inner.lock().closed
    }

    pub fn read_from(&self, cursor: u64) -> LogChunk {
        let g = self.inner.lock();
        let start = cursor.max(g.first);
        let skip = (start - g.first) as usize;
        LogChunk {
            lines: g.lines.iter().skip(skip).cloned().collect(),
            missed: g.first.saturating_sub(cursor),
            next: g.first + g.lines.len() as u64,
            closed: g.closed,
        }
    }

    pub fn subscribe(&self) -> watch::Receiver<u64> {
        self.tick.subscribe()
    }
}

/// Text stream of a buffer from `cursor` on, ending once the buffer is
/// closed and drained. Missed lines appear as a single gap marker.
pub fn stream_lines(
    buffer: Arc<LogBuffer>,
    cursor: u64,
) -> impl futures::Stream<Item = Result<bytes::Bytes, std::convert::Infallible>> {
    let rx = buffer.subscribe();
    futures::stream::unfold(
        (buffer, rx, cursor),
        |(buffer, mut rx, cursor)| async move {
            loop {
                rx.borrow_and_update();
                let chunk = buffer.read_from(cursor);
                if chunk.missed > 0 || !chunk.lines.is_empty() {
                    let mut text = String::new();
                    if chunk.missed > 0 {
                        let _ = writeln!(text, "[{} lines dropped]", chunk.missed);
                    }
                    for l in &chunk.lines {
                        text.push_str(l);
                        text.push('\n');
                    }
                    return Some((Ok(bytes::Bytes::from(text)), (buffer, rx, chunk.next)));
                }
                if chunk.closed {
                    return None;
                }
                if rx.changed().await.is_err() {
                    return None;
                }
            }
        },
    )
}

/// Maps run ids to their buffers while the run span is being created.
#[derive(Debug, Clone, Default)]
pub struct LogRouter(Arc<RwLock<HashMap<String, Arc<LogBuffer>>>>);

impl LogRouter {
    /// The router used by [`install_tracing`].
    pub fn global() -> &'static LogRouter {
        static ROUTER: OnceLock<LogRouter> = OnceLock::new();
        ROUTER.get_or_init(LogRouter::default)
    }

    pub fn register(&self, run_id: &str, buffer: Arc<LogBuffer>) {
        self.0.write().insert(run_id.to_owned(), buffer);
    }

    pub fn remove(&self, run_id: &str) {
        self.0.write().remove(run_id);
    }

    fn get(&self, run_id: &str) -> Option<Arc<LogBuffer>> {
        self.0.read().get(run_id).cloned()
    }
}

struct RunLog(Arc<LogBuffer>);

#[derive(Default)]
struct RunIdVisitor(Option<String>);

impl Visit for RunIdVisitor {
    fn record_str(&mut self, field: &Field, value: &str) {
        if field.name() == "run_id" {
            self.0 = Some(value.to_owned());
        }
    }

    fn record_debug(&mut self, field: &Field, value: &dyn fmt::Debug) {
        if field.name() == "run_id" {
            self.0 = Some(format!("{value:?}").trim_matches('"').to_owned());
        }
    }
}

#[derive(Default)]
struct LineVisitor {
    message: String,
    fields: String,
}

impl Visit for LineVisitor {
    fn record_debug(&mut self, field: &Field, value: &dyn fmt::Debug) {
        if field.name() == "message" {
            let _ = write!(self.message, "{value:?}");
        } else {
            let _ = write!(self.fields, " {}={value:?}", field.name());
        }
    }

    fn record_str(&mut self, field: &Field, value: &str) {
        if field.name() == "message" {
            self.message.push_str(value);
        } else {
            let _ = write!(self.fields, " {}={value}", field.name());
        }
    }
}

pub struct RunLogLayer {
    router: LogRouter,
}

impl RunLogLayer {
    pub fn new(router: LogRouter) -> Self {
        Self { router }
    }
}

impl<S> Layer<S> for RunLogLayer
where
    S: Subscriber + for<'a> LookupSpan<'a>,
{
    fn on_new_span(&self, attrs: &Attributes<'_>, id: &Id, ctx: Context<'_, S>) {
        if attrs.metadata().name() != RUN_SPAN {
            return;
        }
        let mut v = RunIdVisitor::default();
        attrs.record(&mut v);
        let buffer = v.0.and_then(|run_id| self.router.get(&run_id));
        if let (Some(buffer), Some(span)) = (buffer, ctx.span(id)) {
            span.extensions_mut().insert(RunLog(buffer));
        }
    }

    fn on_event(&self, event: &Event<'_>, ctx: Context<'_, S>) {
        let Some(scope) = ctx.event_scope(event) else {
            return;
        };
        let Some(buffer) = scope
            .from_root()
            .find_map(|span| span.extensions().get::<RunLog>().map(|l| l.0.clone()))
        else {
            return;
        };
        let mut v = LineVisitor::default();
        event.record(&mut v);
        let meta = event.metadata();
        buffer.push(format!(
            "{} {:>5} {}: {}{}",
            humantime::format_rfc3339_millis(SystemTime::now()),
            meta.level(),
            meta.target(),
            v.message,
            v.fields
        ));
    }
}

/// Installs the process-wide subscriber: formatted output on stderr
/// filtered by `RUST_LOG` (default info), plus run log capture at info.
/// Later calls are no-ops.
pub fn install_tracing() {
    use tracing_subscriber::filter::{EnvFilter, LevelFilter};
    use tracing_subscriber::prelude::*;

    static ONCE: OnceLock<()> = OnceLock::new();
    ONCE.get_or_init(|| {
        let stderr = tracing_subscriber::fmt::layer()
            .with_writer(std::io::stderr)
            .with_filter(
                EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")),
            );
        let capture = RunLogLayer::new(LogRouter::global().clone()).with_filter(LevelFilter::INFO);
        let _ = tracing_subscriber::registry()
            .with(stderr)
            .with(capture)
            .try_init();
    });
}
