//! Packet schemas carried one per UDP datagram.
//!
//! Each datagram holds a single top-level document with reserved fields:
//!
//! | field | type      | meaning                                   |
//! |-------|-----------|-------------------------------------------|
//! | `k`   | int32     | message kind: 0 data, 1 subscribe, 2 ack  |
//! | `id`  | string    | sensor id                                 |
//! | `st`  | string    | sensor type (data only)                   |
//! | `q`   | int64     | sequence number (data only)               |
//! | `ts`  | datetime  | send time, ms since epoch (data only)     |
//! | `p`   | document  | type-specific reading (data only)         |
//!
//! Unknown fields are ignored on decode so the protocol can grow.

use thiserror::Error;

use super::document::{
    decode_document, encode_document, DecodeError, Document, EncodeError, Value,
};
use crate::sensor::SensorType;

/// Largest encoded packet accepted on either side of the wire.
pub const MAX_PACKET_LEN: usize = 60_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MsgKind {
    Data = 0,
    Subscribe = 1,
    Ack = 2,
}

impl MsgKind {
    fn from_i32(v: i32) -> Option<Self> {
        match v {
            0 => Some(MsgKind::Data),
            1 => Some(MsgKind::Subscribe),
            2 => Some(MsgKind::Ack),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataPacket {
    pub sensor_id: String,
    pub sensor_type: SensorType,
    pub seq: u64,
    pub sent_at_ms: i64,
    pub payload: Document,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Packet {
    Data(DataPacket),
    Subscribe { sensor_id: String },
    Ack { sensor_id: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PacketError {
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("packet field `{0}` is missing or has the wrong type")]
    Field(&'static str),
    #[error("unknown message kind {0}")]
    UnknownKind(i32),
    #[error("unknown sensor type {0:?}")]
    UnknownSensorType(String),
    #[error("encoded packet is {0} bytes, above the {MAX_PACKET_LEN} byte datagram limit")]
    TooLarge(usize),
    #[error("datagram of {0} bytes exceeds the {MAX_PACKET_LEN} byte limit")]
    Oversized(usize),
}

impl Packet {
    pub fn kind(&self) -> MsgKind {
        match self {
            Packet::Data(_) => MsgKind::Data,
            Packet::Subscribe { .. } => MsgKind::Subscribe,
            Packet::Ack { .. } => MsgKind::Ack,
        }
    }

    pub fn sensor_id(&self) -> &str {
        match self {
            Packet::Data(d) => &d.sensor_id,
            Packet::Subscribe { sensor_id } | Packet::Ack { sensor_id } => sensor_id,
        }
    }

    pub fn to_document(&self) -> Document {
        let doc = Document::new()
            .with("k", Value::Int32(self.kind() as i32))
            .with("id", Value::String(self.sensor_id().to_owned()));
        match self {
            Packet::Data(d) => doc
                .with("st", Value::String(d.sensor_type.as_str().to_owned()))
                .with("q", Value::Int64(d.seq as i64))
                .with("ts", Value::DateTime(d.sent_at_ms))
                .with("p", Value::Document(d.payload.clone())),
            _ => doc,
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>, PacketError> {
        let bytes = encode_document(&self.to_document())?;
        if bytes.len() > MAX_PACKET_LEN {
            return Err(PacketError::TooLarge(bytes.len()));
        }
        Ok(bytes)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, PacketError> {
        if bytes.len() > MAX_PACKET_LEN {
            return Err(PacketError::Oversized(bytes.len()));
        }
        let doc = decode_document(bytes)?;
        Self::from_document(&doc)
    }

    pub fn from_document(doc: &Document) -> Result<Self, PacketError> {
        let kind = match doc.get("k") {
            Some(Value::Int32(k)) => MsgKind::from_i32(*k).ok_or(PacketError::UnknownKind(*k))?,
            _ => return Err(PacketError::Field("k")),
        };
        let sensor_id = doc
            .get("id")
            .and_then(Value::as_str)
            .filter(|s| !s.is_empty())
            .ok_or(PacketError::Field("id"))?
            .to_owned();
        Ok(match kind {
            MsgKind::Subscribe => Packet::Subscribe { sensor_id },
            MsgKind::Ack => Packet::Ack { sensor_id },
            MsgKind::Data => {
                let st = doc
                    .get("st")
                    .and_then(Value::as_str)
                    .ok_or(PacketError::Field("st"))?;
                let sensor_type = st
                    .parse::<SensorType>()
                    .map_err(|_| PacketError::UnknownSensorType(st.to_owned()))?;
                let seq = match doc.get("q") {
                    // Stored as the same 64 bits; values past i64::MAX read
                    // as negative in other BSON tools.
                    Some(Value::Int64(q)) => *q as u64,
                    _ => return Err(PacketError::Field("q")),
                };
                let sent_at_ms = match doc.get("ts") {
                    Some(Value::DateTime(ts)) => *ts,
                    _ => return Err(PacketError::Field("ts")),
                };
                let payload = doc
                    .get("p")
                    .and_then(Value::as_document)
                    .ok_or(PacketError::Field("p"))?
                    .clone();
                Packet::Data(DataPacket {
                    sensor_id,
                    sensor_type,
                    seq,
                    sent_at_ms,
                    payload,
                })
            }
        })
    }
}
