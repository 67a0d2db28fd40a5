//! Verification records: the uniform output of every bound, identity and oracle check.
//!
//! Records serialize to JSON (non-finite floats as the strings `"inf"`, `"-inf"`,
//! `"nan"` so that every record round-trips) and to fixed-column CSV with
//! 17 significant digits.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

/// Outcome of a check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

impl Status {
    /// `Pass` if the condition holds, `Fail` otherwise.
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }
    /// Lower-case label.
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Inconclusive => "inconclusive",
        }
    }
}

/// Serde helpers mapping non-finite floats to strings.
pub mod float {
    use serde::{de, Deserialize, Deserializer, Serializer};

    /// Serialize one float.
    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    /// Deserialize one float.
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "nan" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(de::Error::custom(format!("invalid float string '{other}'"))),
            },
        }
    }

    /// Same mapping for maps of floats.
    pub mod map {
        use serde::ser::SerializeMap;
        use serde::{Deserialize, Deserializer, Serializer};
        use std::collections::BTreeMap;

        #[derive(serde::Serialize, Deserialize)]
        struct W(#[serde(with = "super")] f64);

        pub fn serialize<S: Serializer>(m: &BTreeMap<String, f64>, s: S) -> Result<S::Ok, S::Error> {
            let mut out = s.serialize_map(Some(m.len()))?;
            for (k, v) in m {
                out.serialize_entry(k, &W(*v))?;
            }
            out.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, f64>, D::Error> {
            let m: BTreeMap<String, W> = BTreeMap::deserialize(d)?;
            Ok(m.into_iter().map(|(k, w)| (k, w.0)).collect())
        }
    }
}

/// One bound / identity check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationRecord {
    /// Check name, e.g. `completeness` or `hk10-upper`.
    pub name: String,
    /// Manifold label.
    pub manifold: String,
    /// Numeric inputs (sorted by key).
    #[serde(with = "float::map")]
    pub inputs: BTreeMap<String, f64>,
    #[serde(with = "float")]
    pub lhs: f64,
    #[serde(with = "float")]
    pub rhs: f64,
    #[serde(with = "float")]
    pub ratio: f64,
    /// Fitted constants (bound constants, slopes, …).
    #[serde(with = "float::map")]
    pub fitted: BTreeMap<String, f64>,
    pub status: Status,
    /// Error estimate (MC standard error or quadrature estimate).
    #[serde(with = "float")]
    pub error: f64,
    pub seed: Option<u64>,
    /// Free-form explanation of the criterion applied.
    pub note: String,
}

impl VerificationRecord {
    /// Empty record with the given name and manifold label.
    pub fn new(name: impl Into<String>, manifold: impl Into<String>) -> Self {
        VerificationRecord {
            name: name.into(),
            manifold: manifold.into(),
            inputs: BTreeMap::new(),
            lhs: f64::NAN,
            rhs: f64::NAN,
            ratio: f64::NAN,
            fitted: BTreeMap::new(),
            status: Status::Inconclusive,
            error: 0.0,
            seed: None,
            note: String::new(),
        }
    }
    /// Builder: add an input value.
    pub fn input(mut self, k: &str, v: f64) -> Self {
        self.inputs.insert(k.to_string(), v);
        self
    }
    /// Builder: add a fitted constant.
    pub fn fit(mut self, k: &str, v: f64) -> Self {
        self.fitted.insert(k.to_string(), v);
        self
    }
    /// Builder: set lhs, rhs and ratio = lhs/rhs.
    pub fn sides(mut self, lhs: f64, rhs: f64) -> Self {
        self.lhs = lhs;
        self.rhs = rhs;
        self.ratio = lhs / rhs;
        self
    }
    /// Builder: set status.
    pub fn status(mut self, s: Status) -> Self {
        self.status = s;
        self
    }
    /// Builder: set error estimate.
    pub fn error(mut self, e: f64) -> Self {
        self.error = e;
        self
    }
    /// Builder: set seed.
    pub fn seed(mut self, s: u64) -> Self {
        self.seed = Some(s);
        self
    }
    /// Builder: set note.
    pub fn note(mut self, n: impl Into<String>) -> Self {
        self.note = n.into();
        self
    }
    /// Whether the record passed.
    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    /// SHA-256 of the canonical JSON of name, manifold and inputs.
    pub fn inputs_digest(&self) -> String {
        let canon = serde_json::json!({
            "name": self.name,
            "manifold": self.manifold,
            "inputs": self.inputs.iter().map(|(k, v)| (k.clone(), fmt17(*v))).collect::<BTreeMap<_, _>>(),
        });
        hex(&Sha256::digest(canon.to_string().as_bytes()))
    }

    /// Fixed CSV header matching [`csv_row`](Self::csv_row).
    pub fn csv_header() -> &'static str {
        "name,manifold,inputs,lhs,rhs,ratio,fitted,status,error,seed,inputs_digest"
    }

    /// One CSV row; floats with 17 significant digits, maps as `k=v;k=v`.
    pub fn csv_row(&self) -> String {
        let map = |m: &BTreeMap<String, f64>| m.iter().map(|(k, v)| format!("{k}={}", fmt17(*v))).collect::<Vec<_>>().join(";");
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            csv_escape(&self.name),
            csv_escape(&self.manifold),
            map(&self.inputs),
            fmt17(self.lhs),
            fmt17(self.rhs),
            fmt17(self.ratio),
            map(&self.fitted),
            self.status.as_str(),
            fmt17(self.error),
            self.seed.map(|s| s.to_string()).unwrap_or_default(),
            self.inputs_digest()
        )
    }
}

/// Float with 17 significant digits (exact round-trip), or `inf`/`-inf`/`nan`.
pub fn fmt17(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

/// Parse the output of [`fmt17`].
pub fn parse17(s: &str) -> Option<f64> {
    match s {
        "nan" => Some(f64::NAN),
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => s.parse().ok(),
    }
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Lower-case hexadecimal encoding.
pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// One row of a certification sweep: manifold, bound, t, d, lhs, rhs, ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub manifold: String,
    pub bound: String,
    #[serde(with = "float")]
    pub t: f64,
    #[serde(with = "float")]
    pub d: f64,
    #[serde(with = "float")]
    pub lhs: f64,
    #[serde(with = "float")]
    pub rhs: f64,
    #[serde(with = "float")]
    pub ratio: f64,
}

impl GridRow {
    /// CSV header.
    pub fn csv_header() -> &'static str {
        "manifold,bound,t,d,lhs,rhs,ratio"
    }
    /// CSV row with 17 significant digits.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            csv_escape(&self.manifold),
            self.bound,
            fmt17(self.t),
            fmt17(self.d),
            fmt17(self.lhs),
            fmt17(self.rhs),
            fmt17(self.ratio)
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_roundtrip_with_non_finite_values() {
        let r = VerificationRecord::new("x", "R4")
            .input("t", 0.5)
            .sides(1.0, 0.0)
            .fit("c", f64::NAN)
            .status(Status::Pass)
            .seed(7);
        let s = serde_json::to_string(&r).unwrap();
        let back: VerificationRecord = serde_json::from_str(&s).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), s);
        assert!(back.ratio.is_infinite() && back.fitted["c"].is_nan());
    }

    #[test]
    fn fmt17_roundtrips_exactly() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(parse17(&fmt17(v)).unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn digest_depends_on_inputs_only() {
        let a = VerificationRecord::new("n", "m").input("t", 1.0);
        let mut b = a.clone();
        b.lhs = 3.0;
        assert_eq!(a.inputs_digest(), b.inputs_digest());
        assert_ne!(a.inputs_digest(), a.clone().input("d", 0.0).inputs_digest());
    }
}
