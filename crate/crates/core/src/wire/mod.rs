//! Binary document codec and the packet schemas built on it.

mod document;
mod json;
mod packet;

pub use document::{
    decode_document, encode_document, DecodeError, Document, EncodeError, Value, MAX_DEPTH,
    MIN_DOCUMENT_LEN,
};
pub use json::{canonical_json, json_size_ratio, to_json_value, SizeRatioError};
pub use packet::{DataPacket, MsgKind, Packet, PacketError, MAX_PACKET_LEN};
