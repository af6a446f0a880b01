//! Ordered binary documents in a strict subset of the BSON layout.
//!
//! Every document is `int32 total_len | element* | 0x00`, all integers
//! little-endian. An element is `tag | cstring name | value`. Only the tags
//! listed in [`Value`] are understood; anything else is rejected by the
//! decoder rather than skipped.

use thiserror::Error;

/// Maximum nesting depth accepted by both the encoder and the decoder.
pub const MAX_DEPTH: usize = 32;

/// Smallest well-formed document: length prefix plus terminator.
pub const MIN_DOCUMENT_LEN: usize = 5;

const TAG_DOUBLE: u8 = 0x01;
const TAG_STRING: u8 = 0x02;
const TAG_DOCUMENT: u8 = 0x03;
const TAG_BINARY: u8 = 0x05;
const TAG_BOOLEAN: u8 = 0x08;
const TAG_DATETIME: u8 = 0x09;
const TAG_INT32: u8 = 0x10;
const TAG_INT64: u8 = 0x12;

const BINARY_SUBTYPE_GENERIC: u8 = 0x00;

#[derive(Debug, Clone)]
pub enum Value {
    Double(f64),
    String(String),
    Document(Document),
    Binary(Vec<u8>),
    Boolean(bool),
    /// Milliseconds since the Unix epoch.
    DateTime(i64),
    Int32(i32),
    Int64(i64),
}

impl Value {
    fn tag(&self) -> u8 {
        match self {
            Value::Double(_) => TAG_DOUBLE,
            Value::String(_) => TAG_STRING,
            Value::Document(_) => TAG_DOCUMENT,
            Value::Binary(_) => TAG_BINARY,
            Value::Boolean(_) => TAG_BOOLEAN,
            Value::DateTime(_) => TAG_DATETIME,
            Value::Int32(_) => TAG_INT32,
            Value::Int64(_) => TAG_INT64,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Double(v) => Some(v),
            Value::Int32(v) => Some(v as f64),
            Value::Int64(v) => Some(v as f64),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match *self {
            Value::Int32(v) => Some(v as i64),
            Value::Int64(v) | Value::DateTime(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::String(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match *self {
            Value::Boolean(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_document(&self) -> Option<&Document> {
        match self {
            Value::Document(d) => Some(d),
            _ => None,
        }
    }
}

// Doubles compare by bit pattern so that round-trip identity holds for NaN.
impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Double(a), Value::Double(b)) => a.to_bits() == b.to_bits(),
            (Value::String(a), Value::String(b)) => a == b,
            (Value::Document(a), Value::Document(b)) => a == b,
            (Value::Binary(a), Value::Binary(b)) => a == b,
            (Value::Boolean(a), Value::Boolean(b)) => a == b,
            (Value::DateTime(a), Value::DateTime(b)) => a == b,
            (Value::Int32(a), Value::Int32(b)) => a == b,
            (Value::Int64(a), Value::Int64(b)) => a == b,
            _ => false,
        }
    }
}

/// An ordered list of named values. Duplicate names are allowed, as on the
/// wire; [`Document::get`] returns the first match.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Document {
    elements: Vec<(String, Value)>,
}

impl Document {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an element, returning `self` for chaining.
    pub fn with(mut self, name: impl Into<String>, value: Value) -> Self {
        self.push(name, value);
        self
    }

    pub fn push(&mut self, name: impl Into<String>, value: Value) {
        self.elements.push((name.into(), value));
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.elements
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v)
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.elements.iter().map(|(n, v)| (n.as_str(), v))
    }

    pub fn encode(&self) -> Result<Vec<u8>, EncodeError> {
        encode_document(self)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        decode_document(bytes)
    }
}

impl FromIterator<(String, Value)> for Document {
    fn from_iter<T: IntoIterator<Item = (String, Value)>>(iter: T) -> Self {
        Self {
            elements: iter.into_iter().collect(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error("element name {0:?} is empty or contains a NUL byte")]
    InvalidName(String),
    #[error("string value for {0:?} contains a NUL byte")]
    NulInString(String),
    #[error("document nesting exceeds {MAX_DEPTH} levels")]
    DepthExceeded,
    #[error("encoded document exceeds the int32 length prefix")]
    TooLarge,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("input of {0} bytes is shorter than the length prefix requires")]
    Truncated(usize),
    #[error("length prefix {declared} does not match {actual} available bytes")]
    LengthMismatch { declared: i64, actual: usize },
    #[error("document is missing its 0x00 terminator")]
    MissingTerminator,
    #[error("unknown element tag 0x{tag:02x} at offset {offset}")]
    UnknownTag { tag: u8, offset: usize },
    #[error("element name at offset {0} runs past the end of the document")]
    NameOverrun(usize),
    #[error("element name at offset {0} is empty")]
    EmptyName(usize),
    #[error("value at offset {0} runs past the end of the document")]
    ValueOverrun(usize),
    #[error("invalid UTF-8 at offset {0}")]
    InvalidUtf8(usize),
    #[error("string at offset {0} is not NUL-terminated")]
    UnterminatedString(usize),
    #[error("boolean byte 0x{0:02x} is neither 0 nor 1")]
    InvalidBoolean(u8),
    #[error("binary subtype 0x{0:02x} is not supported")]
    UnsupportedBinarySubtype(u8),
    #[error("document nesting exceeds {MAX_DEPTH} levels")]
    DepthExceeded,
}

pub fn encode_document(doc: &Document) -> Result<Vec<u8>, EncodeError> {
    let mut out = Vec::with_capacity(64);
    write_document(doc, &mut out, 1)?;
    Ok(out)
}

fn write_document(doc: &Document, out: &mut Vec<u8>, depth: usize) -> Result<(), EncodeError> {
    if depth > MAX_DEPTH {
        return Err(EncodeError::DepthExceeded);
    }
    let start = out.len();
    out.extend_from_slice(&[0; 4]);
    for (name, value) in &doc.elements {
        if name.is_empty() || name.as_bytes().contains(&0) {
            return Err(EncodeError::InvalidName(name.clone()));
        }
        out.push(value.tag());
        out.extend_from_slice(name.as_bytes());
        out.push(0);
        match value {
            Value::Double(v) => out.extend_from_slice(&v.to_le_bytes()),
            Value::String(s) => {
                if s.as_bytes().contains(&0) {
                    return Err(EncodeError::NulInString(name.clone()));
                }
                let len = i32::try_from(s.len() + 1).map_err(|_| EncodeError::TooLarge)?;
                out.extend_from_slice(&len.to_le_bytes());
                out.extend_from_slice(s.as_bytes());
                out.push(0);
            }
            Value::Document(d) => write_document(d, out, depth + 1)?,
            Value::Binary(b) => {
                let len = i32::try_from(b.len()).map_err(|_| EncodeError::TooLarge)?;
                out.extend_from_slice(&len.to_le_bytes());
                out.push(BINARY_SUBTYPE_GENERIC);
                out.extend_from_slice(b);
            }
            Value::Boolean(b) => out.push(u8::from(*b)),
            Value::DateTime(ms) => out.extend_from_slice(&ms.to_le_bytes()),
            Value::Int32(v) => out.extend_from_slice(&v.to_le_bytes()),
            Value::Int64(v) => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    out.push(0);
    let len = i32::try_from(out.len() - start).map_err(|_| EncodeError::TooLarge)?;
    out[start..start + 4].copy_from_slice(&len.to_le_bytes());
    Ok(())
}

/// Decodes a complete top-level document. The input must contain exactly one
/// document with no trailing bytes.
pub fn decode_document(bytes: &[u8]) -> Result<Document, DecodeError> {
    if bytes.len() < MIN_DOCUMENT_LEN {
        return Err(DecodeError::Truncated(bytes.len()));
    }
    let declared = read_i32(bytes, 0).ok_or(DecodeError::Truncated(bytes.len()))?;
    if declared < MIN_DOCUMENT_LEN as i32 || declared as usize != bytes.len() {
        return Err(DecodeError::LengthMismatch {
            declared: declared as i64,
            actual: bytes.len(),
        });
    }
    let mut reader = Reader { buf: bytes, pos: 0 };
    reader.document(1, bytes.len())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn read_i32(buf: &[u8], at: usize) -> Option<i32> {
    let raw = buf.get(at..at.checked_add(4)?)?;
    Some(i32::from_le_bytes(raw.try_into().ok()?))
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, end: usize) -> Result<&'a [u8], DecodeError> {
        let stop = self
            .pos
            .checked_add(n)
            .filter(|&s| s <= end)
            .ok_or(DecodeError::ValueOverrun(self.pos))?;
        let slice = &self.buf[self.pos..stop];
        self.pos = stop;
        Ok(slice)
    }

    fn fixed<const N: usize>(&mut self, end: usize) -> Result<[u8; N], DecodeError> {
        let slice = self.take(N, end)?;
        Ok(slice.try_into().expect("slice length checked"))
    }

    /// Reads a document starting at `self.pos`. Its length prefix must fit
    /// before `limit`, the end of the enclosing element area.
    fn document(&mut self, depth: usize, limit: usize) -> Result<Document, DecodeError> {
        if depth > MAX_DEPTH {
            return Err(DecodeError::DepthExceeded);
        }
        let start = self.pos;
        let declared =
            read_i32(&self.buf[..limit], start).ok_or(DecodeError::ValueOverrun(start))?;
        let remaining = limit - start;
        if declared < MIN_DOCUMENT_LEN as i32 || declared as usize > remaining {
            return Err(DecodeError::LengthMismatch {
                declared: declared as i64,
                actual: remaining,
            });
        }
        let end = start + declared as usize;
        if self.buf[end - 1] != 0 {
            return Err(DecodeError::MissingTerminator);
        }
        self.pos = start + 4;
        let mut doc = Document::new();
        // The final byte is the terminator, so elements live in [pos, end - 1).
        while self.pos < end - 1 {
            let tag_offset = self.pos;
            let tag = self.buf[self.pos];
            self.pos += 1;
            let name = self.cstring(end - 1)?;
            let value = match tag {
                TAG_DOUBLE => Value::Double(f64::from_le_bytes(self.fixed(end - 1)?)),
                TAG_STRING => Value::String(self.string(end - 1)?),
                TAG_DOCUMENT => Value::Document(self.document(depth + 1, end - 1)?),
                TAG_BINARY => {
                    let len = i32::from_le_bytes(self.fixed(end - 1)?);
                    if len < 0 {
                        return Err(DecodeError::ValueOverrun(self.pos - 4));
                    }
                    let [subtype] = self.fixed::<1>(end - 1)?;
                    if subtype != BINARY_SUBTYPE_GENERIC {
                        return Err(DecodeError::UnsupportedBinarySubtype(subtype));
                    }
                    Value::Binary(self.take(len as usize, end - 1)?.to_vec())
                }
                TAG_BOOLEAN => match self.fixed::<1>(end - 1)? {
                    [0] => Value::Boolean(false),
                    [1] => Value::Boolean(true),
                    [other] => return Err(DecodeError::InvalidBoolean(other)),
                },
                TAG_DATETIME => Value::DateTime(i64::from_le_bytes(self.fixed(end - 1)?)),
                TAG_INT32 => Value::Int32(i32::from_le_bytes(self.fixed(end - 1)?)),
                TAG_INT64 => Value::Int64(i64::from_le_bytes(self.fixed(end - 1)?)),
                _ => {
                    return Err(DecodeError::UnknownTag {
                        tag,
                        offset: tag_offset,
                    })
                }
            };
            doc.push(name, value);
        }
        if self.pos != end - 1 {
            return Err(DecodeError::LengthMismatch {
                declared: declared as i64,
                actual: self.pos + 1 - start,
            });
        }
        self.pos = end;
        Ok(doc)
    }

    fn cstring(&mut self, end: usize) -> Result<String, DecodeError> {
        let start = self.pos;
        let nul = self.buf[start..end]
            .iter()
            .position(|&b| b == 0)
            .ok_or(DecodeError::NameOverrun(start))?;
        if nul == 0 {
            return Err(DecodeError::EmptyName(start));
        }
        let name = std::str::from_utf8(&self.buf[start..start + nul])
            .map_err(|_| DecodeError::InvalidUtf8(start))?
            .to_owned();
        self.pos = start + nul + 1;
        Ok(name)
    }

    fn string(&mut self, end: usize) -> Result<String, DecodeError> {
        let at = self.pos;
        let len = i32::from_le_bytes(self.fixed(end)?);
        if len < 1 {
            return Err(DecodeError::ValueOverrun(at));
        }
        let raw = self.take(len as usize, end)?;
        let (text, nul) = raw.split_at(raw.len() - 1);
        if nul != [0] || text.contains(&0) {
            return Err(DecodeError::UnterminatedString(at));
        }
        std::str::from_utf8(text)
            .map(str::to_owned)
            .map_err(|_| DecodeError::InvalidUtf8(at + 4))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_five_bytes() {
        assert_eq!(
            encode_document(&Document::new()).unwrap(),
            [0x05, 0, 0, 0, 0]
        );
    }

    #[test]
    fn single_int32_golden_bytes() {
        let doc = Document::new().with("a", Value::Int32(1));
        assert_eq!(
            encode_document(&doc).unwrap(),
            [0x0C, 0, 0, 0, 0x10, 0x61, 0, 0x01, 0, 0, 0, 0]
        );
    }

    #[test]
    fn double_round_trip() {
        let doc = Document::new().with("t", Value::Double(25.5));
        assert_eq!(
            decode_document(&encode_document(&doc).unwrap()).unwrap(),
            doc
        );
    }

    #[test]
    fn nul_in_name_rejected() {
        let doc = Document::new().with("a\0b", Value::Int32(1));
        assert!(matches!(
            encode_document(&doc),
            Err(EncodeError::InvalidName(_))
        ));
        let doc = Document::new().with("", Value::Int32(1));
        assert!(matches!(
            encode_document(&doc),
            Err(EncodeError::InvalidName(_))
        ));
    }

    fn nested(depth: usize) -> Document {
        let mut doc = Document::new().with("leaf", Value::Boolean(true));
        for _ in 1..depth {
            doc = Document::new().with("d", Value::Document(doc));
        }
        doc
    }

    #[test]
    fn depth_limit_applies_to_both_directions() {
        let ok = nested(MAX_DEPTH);
        let bytes = encode_document(&ok).unwrap();
        assert_eq!(decode_document(&bytes).unwrap(), ok);

        assert_eq!(
            encode_document(&nested(MAX_DEPTH + 1)),
            Err(EncodeError::DepthExceeded)
        );

        // Hand-build 33 levels of empty nesting to exercise the decoder path.
        let mut bytes = vec![0x05, 0, 0, 0, 0];
        for _ in 0..MAX_DEPTH {
            let mut outer = Vec::new();
            let len = (4 + 1 + 2 + bytes.len() + 1) as i32;
            outer.extend_from_slice(&len.to_le_bytes());
            outer.extend_from_slice(&[TAG_DOCUMENT, b'd', 0]);
            outer.extend_from_slice(&bytes);
            outer.push(0);
            bytes = outer;
        }
        assert_eq!(decode_document(&bytes), Err(DecodeError::DepthExceeded));
    }

    #[test]
    fn short_input_is_truncated() {
        assert_eq!(
            decode_document(&[0, 0, 0, 0]),
            Err(DecodeError::Truncated(4))
        );
        assert_eq!(decode_document(&[]), Err(DecodeError::Truncated(0)));
    }

    #[test]
    fn length_prefix_mismatch() {
        let mut bytes = encode_document(&Document::new().with("a", Value::Int32(1))).unwrap();
        bytes.push(0);
        assert!(matches!(
            decode_document(&bytes),
            Err(DecodeError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn unknown_tag_rejected() {
        // {"a": <tag 0x07 objectid>}: not part of the supported subset.
        let mut bytes = vec![0, 0, 0, 0, 0x07, b'a', 0];
        bytes.extend_from_slice(&[0; 12]);
        bytes.push(0);
        let len = bytes.len() as i32;
        bytes[..4].copy_from_slice(&len.to_le_bytes());
        assert_eq!(
            decode_document(&bytes),
            Err(DecodeError::UnknownTag {
                tag: 0x07,
                offset: 4
            })
        );
    }

    #[test]
    fn name_overrun_rejected() {
        // Name bytes run up to the terminator without their own NUL.
        let bytes = [0x08, 0, 0, 0, 0x10, b'a', b'b', 0];
        assert_eq!(decode_document(&bytes), Err(DecodeError::NameOverrun(5)));
    }

    #[test]
    fn string_length_overrun_rejected() {
        let doc = Document::new().with("s", Value::String("hello".into()));
        let mut bytes = encode_document(&doc).unwrap();
        bytes[7..11].copy_from_slice(&1000i32.to_le_bytes());
        assert!(matches!(
            decode_document(&bytes),
            Err(DecodeError::ValueOverrun(_))
        ));
    }

    #[test]
    fn bad_boolean_rejected() {
        let mut bytes = encode_document(&Document::new().with("b", Value::Boolean(true))).unwrap();
        bytes[7] = 2;
        assert_eq!(decode_document(&bytes), Err(DecodeError::InvalidBoolean(2)));
    }

    #[test]
    fn binary_and_datetime_layout() {
        let doc = Document::new()
            .with("d", Value::Binary(vec![0xAA, 0xBB]))
            .with("t", Value::DateTime(1_700_000_000_000));
        let bytes = encode_document(&doc).unwrap();
        assert_eq!(&bytes[4..7], &[TAG_BINARY, b'd', 0]);
        assert_eq!(&bytes[7..11], &2i32.to_le_bytes());
        assert_eq!(bytes[11], BINARY_SUBTYPE_GENERIC);
        assert_eq!(&bytes[12..14], &[0xAA, 0xBB]);
        assert_eq!(bytes[14], TAG_DATETIME);
        assert_eq!(decode_document(&bytes).unwrap(), doc);
    }

    #[test]
    fn nan_round_trips_bitwise() {
        let doc = Document::new().with("x", Value::Double(f64::NAN));
        assert_eq!(
            decode_document(&encode_document(&doc).unwrap()).unwrap(),
            doc
        );
    }
}
