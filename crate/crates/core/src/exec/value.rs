use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::hash::{DecodeError, Decoder, Encoder};

/// Opaque contract argument / return value.
///
/// JSON form: `null`, integers, strings, `{"hex": "..."}` for raw bytes, and
/// arrays for lists.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Default)]
pub enum Value {
    #[default]
    Unit,
    Int(i64),
    Str(String),
    Bytes(Vec<u8>),
    List(Vec<Value>),
}

const TAG_UNIT: u8 = 0;
const TAG_INT: u8 = 1;
const TAG_STR: u8 = 2;
const TAG_BYTES: u8 = 3;
const TAG_LIST: u8 = 4;

impl Value {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_u64(&self) -> Option<u64> {
        self.as_int().and_then(|i| u64::try_from(i).ok())
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Value]> {
        match self {
            Value::List(l) => Some(l),
            _ => None,
        }
    }

    /// Byte form used when a value addresses a storage key.
    pub fn key_bytes(&self) -> Option<Vec<u8>> {
        match self {
            Value::Str(s) => Some(s.as_bytes().to_vec()),
            Value::Bytes(b) => Some(b.clone()),
            Value::Int(i) => Some(i.to_be_bytes().to_vec()),
            _ => None,
        }
    }

    pub fn is_unit(&self) -> bool {
        matches!(self, Value::Unit)
    }

    pub fn encode(&self, enc: &mut Encoder) {
        match self {
            Value::Unit => {
                enc.u8(TAG_UNIT);
            }
            Value::Int(i) => {
                enc.u8(TAG_INT).u64(*i as u64);
            }
            Value::Str(s) => {
                enc.u8(TAG_STR).str(s);
            }
            Value::Bytes(b) => {
                enc.u8(TAG_BYTES).field(b);
            }
            Value::List(items) => {
                enc.u8(TAG_LIST).u64(items.len() as u64);
                for v in items {
                    v.encode(enc);
                }
            }
        }
    }

    pub fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(match dec.u8()? {
            TAG_UNIT => Value::Unit,
            TAG_INT => Value::Int(dec.u64()? as i64),
            TAG_STR => Value::Str(dec.string()?),
            TAG_BYTES => Value::Bytes(dec.field()?.to_vec()),
            TAG_LIST => {
                let n = dec.u64()? as usize;
                let mut items = Vec::with_capacity(n.min(1 << 16));
                for _ in 0..n {
                    items.push(Value::decode(dec)?);
                }
                Value::List(items)
            }
            t => return Err(DecodeError::UnknownTag(t)),
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Unit => serde_json::Value::Null,
            Value::Int(i) => serde_json::Value::from(*i),
            Value::Str(s) => serde_json::Value::from(s.clone()),
            Value::Bytes(b) => serde_json::json!({ "hex": hex::encode(b) }),
            Value::List(items) => {
                serde_json::Value::Array(items.iter().map(Value::to_json).collect())
            }
        }
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self, String> {
        use serde_json::Value as J;
        match v {
            J::Null => Ok(Value::Unit),
            J::Bool(b) => Ok(Value::Int(*b as i64)),
            J::Number(n) => n
                .as_i64()
                .map(Value::Int)
                .ok_or_else(|| format!("number {n} is not a 64-bit integer")),
            J::String(s) => Ok(Value::Str(s.clone())),
            J::Array(items) => items
                .iter()
                .map(Value::from_json)
                .collect::<Result<_, _>>()
                .map(Value::List),
            J::Object(map) => match map.get("hex").and_then(J::as_str) {
                Some(h) if map.len() == 1 => {
                    hex::decode(h).map(Value::Bytes).map_err(|e| e.to_string())
                }
                _ => Err("objects must have the form {\"hex\": \"..\"}".into()),
            },
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<i32> for Value {
    fn from(v: i32) -> Self {
        Value::Int(v as i64)
    }
}

impl From<u64> for Value {
    fn from(v: u64) -> Self {
        Value::Int(v as i64)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Str(v.to_string())
    }
}

impl From<Vec<u8>> for Value {
    fn from(v: Vec<u8>) -> Self {
        Value::Bytes(v)
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = serde_json::Value::deserialize(d)?;
        Value::from_json(&j).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_forms() {
        let v = Value::List(vec![
            Value::Unit,
            Value::Int(-3),
            Value::Str("a".into()),
            Value::Bytes(vec![0xab]),
        ]);
        let j = serde_json::to_string(&v).unwrap();
        assert_eq!(j, r#"[null,-3,"a",{"hex":"ab"}]"#);
        assert_eq!(serde_json::from_str::<Value>(&j).unwrap(), v);
    }

    #[test]
    fn binary_round_trip_nested() {
        let v = Value::List(vec![Value::List(vec![Value::Int(i64::MIN)]), Value::Unit]);
        let mut enc = Encoder::new();
        v.encode(&mut enc);
        let bytes = enc.finish();
        assert_eq!(Value::decode(&mut Decoder::new(&bytes)).unwrap(), v);
    }
}
