//! Fixed conversion table from the human-facing unit labels used in
//! scenario files to strict SI.
//!
//! Every factor is an integer multiplier or an exact power-of-ten divisor,
//! so a conversion is a single correctly rounded floating-point operation
//! and agrees with the SI literal to within one ulp.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UnitError {
    #[error("unknown unit label `{0}`")]
    Unknown(String),
    #[error("non-finite value {value} for unit `{unit}`")]
    NonFinite { value: f64, unit: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Factor {
    Mul(f64),
    Div(f64),
}

/// Unit labels accepted by [`si_convert`], with their SI factor.
const TABLE: &[(&str, Factor)] = &[
    // length
    ("m", Factor::Mul(1.0)),
    ("mm", Factor::Div(1e3)),
    ("um", Factor::Div(1e6)),
    ("µm", Factor::Div(1e6)),
    // velocity
    ("m/s", Factor::Mul(1.0)),
    ("cm/s", Factor::Div(1e2)),
    // time
    ("s", Factor::Mul(1.0)),
    ("us", Factor::Div(1e6)),
    ("µs", Factor::Div(1e6)),
    ("min", Factor::Mul(60.0)),
    ("h", Factor::Mul(3600.0)),
    ("day", Factor::Mul(86400.0)),
    // energy / power
    ("J", Factor::Mul(1.0)),
    ("fJ", Factor::Div(1e15)),
    ("pJ", Factor::Div(1e12)),
    ("W", Factor::Mul(1.0)),
    ("fW", Factor::Div(1e15)),
    // charge / capacitance / voltage
    ("C", Factor::Mul(1.0)),
    ("pC", Factor::Div(1e12)),
    ("F", Factor::Mul(1.0)),
    ("pF", Factor::Div(1e12)),
    ("V", Factor::Mul(1.0)),
    // volume
    ("m3", Factor::Mul(1.0)),
    ("m^3", Factor::Mul(1.0)),
    ("L", Factor::Div(1e3)),
    ("ml", Factor::Div(1e6)),
    // frequency
    ("Hz", Factor::Mul(1.0)),
    // dimensionless counts and fractions
    ("", Factor::Mul(1.0)),
    ("1", Factor::Mul(1.0)),
    ("bit", Factor::Mul(1.0)),
    ("bits", Factor::Mul(1.0)),
    ("frames/s", Factor::Mul(1.0)),
    ("frames/min", Factor::Div(60.0)),
    ("frames/h", Factor::Div(3600.0)),
];

/// Converts `value` expressed in `unit` to SI.
pub fn si_convert(value: f64, unit: &str) -> Result<f64, UnitError> {
    if !value.is_finite() {
        return Err(UnitError::NonFinite {
            value,
            unit: unit.to_string(),
        });
    }
    let factor = TABLE
        .iter()
        .find(|(label, _)| *label == unit)
        .map(|(_, f)| *f)
        .ok_or_else(|| UnitError::Unknown(unit.to_string()))?;
    Ok(match factor {
        Factor::Mul(m) => value * m,
        Factor::Div(d) => value / d,
    })
}

/// Inverse of [`si_convert`]: expresses an SI value in `unit`.
pub fn from_si(value: f64, unit: &str) -> Result<f64, UnitError> {
    let factor = TABLE
        .iter()
        .find(|(label, _)| *label == unit)
        .map(|(_, f)| *f)
        .ok_or_else(|| UnitError::Unknown(unit.to_string()))?;
    Ok(match factor {
        Factor::Mul(m) => value / m,
        Factor::Div(d) => value * d,
    })
}

/// All accepted unit labels.
pub fn labels() -> impl Iterator<Item = &'static str> {
    TABLE.iter().map(|(l, _)| *l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn paper_quantities() {
        assert_eq!(si_convert(6.0, "mm").unwrap(), 0.006);
        assert_eq!(si_convert(5.0, "L").unwrap(), 0.005);
        assert_eq!(si_convert(64.0, "µs").unwrap(), 6.4e-5);
        assert_eq!(si_convert(64.0, "us").unwrap(), 6.4e-5);
        assert_eq!(si_convert(10.9, "cm/s").unwrap(), 0.109);
        // 0.1 is not representable; one rounding step away from the literal.
        let e_p = si_convert(0.1, "fJ").unwrap();
        assert!((e_p - 1e-16).abs() <= f64::EPSILON * 1e-16);
        assert_eq!(si_convert(2.4, "fW").unwrap(), 2.4e-15);
        assert_eq!(si_convert(6.0, "pC").unwrap(), 6e-12);
        assert_eq!(si_convert(10.0, "pF").unwrap(), 1e-11);
        assert_eq!(si_convert(15.0, "min").unwrap(), 900.0);
        assert_eq!(si_convert(1.0, "h").unwrap(), 3600.0);
    }

    #[test]
    fn unknown_label_is_rejected() {
        assert_eq!(
            si_convert(1.0, "furlong"),
            Err(UnitError::Unknown("furlong".into()))
        );
        assert!(si_convert(f64::NAN, "mm").is_err());
    }

    proptest! {
        // Exactness: the result is the correctly rounded decimal rescaling.
        #[test]
        fn integer_millimetres_are_exact(k in 0i64..1_000_000) {
            let si = si_convert(k as f64, "mm").unwrap();
            let expected: f64 = format!("{k}e-3").parse().unwrap();
            prop_assert_eq!(si, expected);
        }

        #[test]
        fn round_trip(v in -1e6f64..1e6, idx in 0usize..TABLE.len()) {
            let unit = TABLE[idx].0;
            let back = from_si(si_convert(v, unit).unwrap(), unit).unwrap();
            prop_assert!((back - v).abs() <= 4.0 * f64::EPSILON * v.abs());
        }
    }
}
