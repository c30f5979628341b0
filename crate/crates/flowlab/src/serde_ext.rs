//! JSON encodings for non-finite reals: `"inf"`, `"-inf"`, and `null` for NaN.

use serde::de::Error;
use serde::{Deserialize, Deserializer, Serializer};
use serde_json::Value;

fn encode(v: f64) -> Value {
    if v.is_finite() {
        serde_json::json!(v)
    } else if v.is_nan() {
        Value::Null
    } else if v > 0.0 {
        Value::String("inf".into())
    } else {
        Value::String("-inf".into())
    }
}

fn decode<E: Error>(v: Value) -> Result<f64, E> {
    match v {
        Value::Null => Ok(f64::NAN),
        Value::Number(n) => n.as_f64().ok_or_else(|| E::custom("bad number")),
        Value::String(s) if s == "inf" => Ok(f64::INFINITY),
        Value::String(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
        other => Err(E::custom(format!("expected real, got {other}"))),
    }
}

pub mod ext {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_some(&encode(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        decode(Value::deserialize(d)?)
    }
}

/// `None` is an infinite time.
pub mod inf_opt {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_some(&encode(v.unwrap_or(f64::INFINITY)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        let v = decode(Value::deserialize(d)?)?;
        Ok(if v == f64::INFINITY { None } else { Some(v) })
    }
}

#[cfg(test)]
mod tests {
    use serde::{Deserialize, Serialize};

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct W {
        #[serde(with = "super::ext")]
        a: f64,
        #[serde(with = "super::inf_opt")]
        b: Option<f64>,
    }

    #[test]
    fn round_trip() {
        let w = W { a: f64::NEG_INFINITY, b: None };
        let s = serde_json::to_string(&w).unwrap();
        assert_eq!(s, r#"{"a":"-inf","b":"inf"}"#);
        assert_eq!(serde_json::from_str::<W>(&s).unwrap(), w);
        let w = W { a: 1.5, b: Some(0.25) };
        assert_eq!(serde_json::from_str::<W>(&serde_json::to_string(&w).unwrap()).unwrap(), w);
    }
}
