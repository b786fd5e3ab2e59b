//! Report rows and their JSON/CSV encodings.

use std::io::{Read, Write};

use modtrace_core::C64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{CliError, CliResult};

/// Fixed CSV header.
pub const CSV_HEADER: [&str; 10] = [
    "identity_name",
    "lhs_re",
    "lhs_im",
    "rhs_re",
    "rhs_im",
    "abs_err",
    "rel_err",
    "tol",
    "pass",
    "wall_time_ms",
];

/// One checked identity `lhs = rhs`, or one residual that must vanish
/// (`rhs = 0`, `lhs` the residual).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub identity_name: String,
    #[serde(default)]
    pub params: serde_json::Value,
    #[serde(with = "complex")]
    pub lhs: C64,
    #[serde(with = "complex")]
    pub rhs: C64,
    #[serde(with = "real")]
    pub abs_err: f64,
    #[serde(with = "real")]
    pub rel_err: f64,
    pub tol: f64,
    pub pass: bool,
    pub wall_time_ms: f64,
    /// Error text for rows whose computation failed, or a remark.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ReportRow {
    /// `pass ⇔ rel_err ≤ tol`, or `abs_err ≤ tol` when `rhs = 0`.
    pub fn identity(
        name: impl Into<String>,
        params: serde_json::Value,
        lhs: C64,
        rhs: C64,
        tol: f64,
    ) -> Self {
        let abs_err = (lhs - rhs).norm();
        let rel_err = if rhs.norm() > 0.0 {
            abs_err / rhs.norm()
        } else {
            abs_err
        };
        let pass = if rhs.norm() > 0.0 {
            rel_err <= tol
        } else {
            abs_err <= tol
        };
        Self {
            identity_name: name.into(),
            params,
            lhs,
            rhs,
            abs_err,
            rel_err,
            tol,
            pass,
            wall_time_ms: 0.0,
            note: None,
        }
    }

    /// A nonnegative residual (an error measure or an inequality violation)
    /// checked against `tol`.
    pub fn residual(
        name: impl Into<String>,
        params: serde_json::Value,
        residual: f64,
        tol: f64,
    ) -> Self {
        Self::identity(
            name,
            params,
            C64::new(residual, 0.0),
            C64::new(0.0, 0.0),
            tol,
        )
    }

    /// A computation that raised an error; never passes.
    pub fn failed(
        name: impl Into<String>,
        params: serde_json::Value,
        tol: f64,
        error: impl std::fmt::Display,
    ) -> Self {
        let nan = C64::new(f64::NAN, f64::NAN);
        Self {
            identity_name: name.into(),
            params,
            lhs: nan,
            rhs: nan,
            abs_err: f64::NAN,
            rel_err: f64::NAN,
            tol,
            pass: false,
            wall_time_ms: 0.0,
            note: Some(error.to_string()),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn with_time(mut self, ms: f64) -> Self {
        self.wall_time_ms = ms;
        self
    }
}

/// Non-finite floats are written as JSON `null` and read back as NaN.
mod real {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// `[re, im]`, each part as in [`real`].
mod complex {
    use super::*;

    #[derive(Serialize, Deserialize)]
    struct Part(#[serde(with = "super::real")] f64);

    pub fn serialize<S: Serializer>(z: &C64, s: S) -> Result<S::Ok, S::Error> {
        [Part(z.re), Part(z.im)].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<C64, D::Error> {
        let [re, im] = <[Part; 2]>::deserialize(d)?;
        Ok(C64::new(re.0, im.0))
    }
}

pub fn to_json(rows: &[ReportRow]) -> String {
    serde_json::to_string_pretty(rows).expect("rows serialize")
}

pub fn from_json(text: &str) -> serde_json::Result<Vec<ReportRow>> {
    serde_json::from_str(text)
}

/// CSV with [`CSV_HEADER`]; `params` and `note` are not part of the format.
pub fn write_csv<W: Write>(rows: &[ReportRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.identity_name.clone(),
            r.lhs.re.to_string(),
            r.lhs.im.to_string(),
            r.rhs.re.to_string(),
            r.rhs.im.to_string(),
            r.abs_err.to_string(),
            r.rel_err.to_string(),
            r.tol.to_string(),
            r.pass.to_string(),
            r.wall_time_ms.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv(rows: &[ReportRow]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("in-memory write");
    String::from_utf8(buf).expect("utf-8")
}

/// Inverse of [`write_csv`]; `params` reads back as null.
pub fn read_csv<R: Read>(input: R) -> CliResult<Vec<ReportRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(|e| CliError::config("csv header", e))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(CliError::config(
            "csv header",
            format!("expected {}", CSV_HEADER.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::config(format!("csv row {}", i + 1), e))?;
        let num = |k: usize| -> CliResult<f64> {
            rec[k]
                .parse()
                .map_err(|e| CliError::config(format!("csv row {}.{}", i + 1, CSV_HEADER[k]), e))
        };
        rows.push(ReportRow {
            identity_name: rec[0].to_string(),
            params: serde_json::Value::Null,
            lhs: C64::new(num(1)?, num(2)?),
            rhs: C64::new(num(3)?, num(4)?),
            abs_err: num(5)?,
            rel_err: num(6)?,
            tol: num(7)?,
            pass: rec[8]
                .parse()
                .map_err(|e| CliError::config(format!("csv row {}.pass", i + 1), e))?,
            wall_time_ms: num(9)?,
            note: None,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn rows() -> Vec<ReportRow> {
        vec![
            ReportRow::identity(
                "a",
                json!({"mu": 1}),
                C64::new(0.1, 1e-17),
                C64::new(0.1 + 1e-12, 0.0),
                1e-5,
            )
            .with_time(1.25),
            ReportRow::residual("b", json!(null), 3.0e-11, 1e-10),
            ReportRow::failed("c", json!(null), 1e-5, "DivergentTrace"),
        ]
    }

    #[test]
    fn pass_rule() {
        let r = rows();
        assert!(r[0].pass && r[1].pass && !r[2].pass);
        let zero = ReportRow::identity(
            "z",
            json!(null),
            C64::new(2e-6, 0.0),
            C64::new(0.0, 0.0),
            1e-6,
        );
        assert_eq!(zero.rel_err, zero.abs_err);
        assert!(!zero.pass);
    }

    #[test]
    fn single_row_json_is_an_array() {
        let text = to_json(&rows()[..1]);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v.as_array().unwrap().len(), 1);
        assert_eq!(v[0]["lhs"], json!([0.1, 1e-17]));
    }

    #[test]
    fn json_round_trip_keeps_nan() {
        let back = from_json(&to_json(&rows())).unwrap();
        assert_eq!(back[..2], rows()[..2]);
        assert!(back[2].abs_err.is_nan() && back[2].lhs.re.is_nan());
        assert_eq!(back[2].note.as_deref(), Some("DivergentTrace"));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let text = to_csv(&rows());
        assert!(text.starts_with(&CSV_HEADER.join(",")));
        let back = read_csv(text.as_bytes()).unwrap();
        for (a, b) in back.iter().zip(rows()) {
            assert_eq!(a.identity_name, b.identity_name);
            for (x, y) in [
                (a.lhs.re, b.lhs.re),
                (a.lhs.im, b.lhs.im),
                (a.rhs.re, b.rhs.re),
                (a.abs_err, b.abs_err),
                (a.rel_err, b.rel_err),
                (a.tol, b.tol),
                (a.wall_time_ms, b.wall_time_ms),
            ] {
                assert!(x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()));
            }
            assert_eq!(a.pass, b.pass);
        }
    }

    #[test]
    fn csv_rejects_wrong_header() {
        assert!(read_csv("a,b\n1,2\n".as_bytes()).is_err());
    }
}
