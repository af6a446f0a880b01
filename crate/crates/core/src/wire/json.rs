//! Canonical JSON text form of a [`Document`], used for archives and for
//! comparing encoded sizes against the binary format.
//!
//! Canonical means: UTF-8, no insignificant whitespace, keys in document
//! order, binary values as standard base64 strings, datetimes as integer
//! milliseconds. Non-finite doubles have no JSON form and become `null`.

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde_json::{Map, Number, Value as Json};
use thiserror::Error;

use super::document::{encode_document, Document, EncodeError, Value};

pub fn to_json_value(doc: &Document) -> Json {
    let mut map = Map::with_capacity(doc.len());
    for (name, value) in doc.iter() {
        map.insert(name.to_owned(), value_to_json(value));
    }
    Json::Object(map)
}

fn value_to_json(value: &Value) -> Json {
    match value {
        Value::Double(v) => Number::from_f64(*v).map_or(Json::Null, Json::Number),
        Value::String(s) => Json::String(s.clone()),
        Value::Document(d) => to_json_value(d),
        Value::Binary(b) => Json::String(BASE64.encode(b)),
        Value::Boolean(b) => Json::Bool(*b),
        Value::DateTime(ms) | Value::Int64(ms) => Json::from(*ms),
        Value::Int32(v) => Json::from(*v),
    }
}

pub fn canonical_json(doc: &Document) -> String {
    // Serializing a `serde_json::Value` cannot fail.
    serde_json::to_string(&to_json_value(doc)).expect("json value serializes")
}

#[derive(Debug, Error)]
pub enum SizeRatioError {
    #[error("size ratio needs at least one document")]
    EmptyCorpus,
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

/// Total binary-encoded bytes divided by total canonical-JSON bytes.
pub fn json_size_ratio<'a, I>(docs: I) -> Result<f64, SizeRatioError>
where
    I: IntoIterator<Item = &'a Document>,
{
    let mut binary = 0usize;
    let mut text = 0usize;
    let mut seen = 0usize;
    for doc in docs {
        binary += encode_document(doc)?.len();
        text += canonical_json(doc).len();
        seen += 1;
    }
    if seen == 0 {
        return Err(SizeRatioError::EmptyCorpus);
    }
    Ok(binary as f64 / text as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_ratio() {
        let doc = Document::new();
        assert_eq!(canonical_json(&doc), "{}");
        assert_eq!(json_size_ratio([&doc]).unwrap(), 2.5);
    }

    #[test]
    fn tiny_document_is_larger_in_binary() {
        let doc = Document::new().with("a", Value::Int32(1));
        assert_eq!(canonical_json(&doc), r#"{"a":1}"#);
        // 12 binary bytes against 7 JSON bytes.
        assert_eq!(json_size_ratio([&doc]).unwrap(), 12.0 / 7.0);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(
            json_size_ratio(std::iter::empty()),
            Err(SizeRatioError::EmptyCorpus)
        ));
    }

    #[test]
    fn canonical_forms() {
        let doc = Document::new()
            .with("b", Value::Binary(vec![0, 1, 2]))
            .with("t", Value::DateTime(1_700_000_000_123))
            .with("x", Value::Double(25.5))
            .with("n", Value::Double(f64::NAN))
            .with("s", Value::String("q\"".into()))
            .with(
                "o",
                Value::Document(Document::new().with("k", Value::Boolean(false))),
            );
        assert_eq!(
            canonical_json(&doc),
            r#"{"b":"AAEC","t":1700000000123,"x":25.5,"n":null,"s":"q\"","o":{"k":false}}"#
        );
    }
}
