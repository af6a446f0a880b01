//! The sink node: registry, dual archiving, relay to subscribers and
//! capture emission.

mod archive;
mod capture;
mod registry;
mod server;
mod sink;

pub use archive::{open_ndjson, ArchiveRecord, LineWriter};
pub use capture::{emit_capture_record, StreamClock};
pub use registry::{client_node_id, NodeKind, NodeRegistry, NodeRegistryEntry};
pub use server::{
    CaptureTarget, CoreConfig, CoreError, CoreNode, CoreReport, CoreState, Ingest, DEFAULT_TTL,
};
pub use sink::{
    flush_to_document_sink, run_flusher, DocumentSink, FileSink, FlushReport, SinkBuffer,
    SinkConfig, SinkError, SinkHandle, DEFAULT_BUFFER_CAPACITY, DEFAULT_FLUSH_INTERVAL,
    DEFAULT_FLUSH_THRESHOLD,
};
