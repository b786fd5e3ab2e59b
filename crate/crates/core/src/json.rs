//! Shared JSON shapes.

use serde::{Deserialize, Serialize};

use crate::C64;

/// A complex number written either as a bare real or as `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum JsonComplex {
    Real(f64),
    Pair([f64; 2]),
}

impl From<JsonComplex> for C64 {
    fn from(v: JsonComplex) -> Self {
        match v {
            JsonComplex::Real(r) => C64::new(r, 0.0),
            JsonComplex::Pair([re, im]) => C64::new(re, im),
        }
    }
}

impl From<C64> for JsonComplex {
    fn from(z: C64) -> Self {
        JsonComplex::Pair([z.re, z.im])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_shapes_parse() {
        let a: JsonComplex = serde_json::from_str("0.5").unwrap();
        let b: JsonComplex = serde_json::from_str("[0.5, -1]").unwrap();
        assert_eq!(C64::from(a), C64::new(0.5, 0.0));
        assert_eq!(C64::from(b), C64::new(0.5, -1.0));
        assert!(serde_json::from_str::<JsonComplex>("\"x\"").is_err());
    }
}
