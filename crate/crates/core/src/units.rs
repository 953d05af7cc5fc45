//! Fixed-point time and ratio values.
//!
//! Every duration in the crate is stored as an integer number of
//! deciseconds so plans, traces and reports serialize byte-identically.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub};
use std::str::FromStr;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

/// A non-negative duration (or timestamp offset) in deciseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Seconds(u64);

impl Seconds {
    pub const ZERO: Seconds = Seconds(0);

    pub const fn from_deci(deci: u64) -> Self {
        Seconds(deci)
    }

    pub const fn whole(secs: u64) -> Self {
        Seconds(secs * 10)
    }

    pub const fn deci(self) -> u64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 10.0
    }

    /// Converts decimal seconds, rejecting negative values and values with
    /// more than one fractional digit.
    pub fn from_secs_f64(secs: f64) -> Result<Self, DurationError> {
        if !secs.is_finite() {
            return Err(DurationError::NotFinite);
        }
        if secs < 0.0 {
            return Err(DurationError::Negative(secs));
        }
        let scaled = secs * 10.0;
        let rounded = scaled.round();
        if (scaled - rounded).abs() > 1e-6 {
            return Err(DurationError::TooPrecise(secs));
        }
        Ok(Seconds(rounded as u64))
    }

    /// Rounds an arbitrary non-negative number of seconds to the nearest
    /// decisecond (half away from zero).
    pub fn round_from_f64(secs: f64) -> Self {
        Seconds((secs.max(0.0) * 10.0).round() as u64)
    }

    /// `self * num / den`, rounded half up to the nearest decisecond.
    pub fn scale(self, num: u64, den: u64) -> Self {
        assert!(den > 0, "scale denominator must be positive");
        let n = self.0 as u128 * num as u128;
        let d = den as u128;
        Seconds(((2 * n + d) / (2 * d)) as u64)
    }

    pub fn saturating_sub(self, other: Seconds) -> Seconds {
        Seconds(self.0.saturating_sub(other.0))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DurationError {
    #[error("duration must be finite")]
    NotFinite,
    #[error("duration {0} is negative")]
    Negative(f64),
    #[error("duration {0} has more than one fractional digit")]
    TooPrecise(f64),
    #[error("cannot parse duration {0:?}")]
    Syntax(String),
}

impl fmt::Display for Seconds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let whole = self.0 / 10;
        let frac = self.0 % 10;
        if frac == 0 {
            write!(f, "{whole}")
        } else {
            write!(f, "{whole}.{frac}")
        }
    }
}

impl FromStr for Seconds {
    type Err = DurationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let s = s.strip_suffix('s').unwrap_or(s);
        let value: f64 = s
            .parse()
            .map_err(|_| DurationError::Syntax(s.to_string()))?;
        Seconds::from_secs_f64(value)
    }
}

impl Add for Seconds {
    type Output = Seconds;
    fn add(self, rhs: Seconds) -> Seconds {
        Seconds(self.0 + rhs.0)
    }
}

impl AddAssign for Seconds {
    fn add_assign(&mut self, rhs: Seconds) {
        self.0 += rhs.0;
    }
}

impl Sub for Seconds {
    type Output = Seconds;
    fn sub(self, rhs: Seconds) -> Seconds {
        Seconds(self.0 - rhs.0)
    }
}

impl Sum for Seconds {
    fn sum<I: Iterator<Item = Seconds>>(iter: I) -> Seconds {
        iter.fold(Seconds::ZERO, Add::add)
    }
}

impl<'a> Sum<&'a Seconds> for Seconds {
    fn sum<I: Iterator<Item = &'a Seconds>>(iter: I) -> Seconds {
        iter.copied().sum()
    }
}

impl Serialize for Seconds {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.0 % 10 == 0 {
            serializer.serialize_u64(self.0 / 10)
        } else {
            serializer.serialize_f64(self.as_f64())
        }
    }
}

impl<'de> Deserialize<'de> for Seconds {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct SecondsVisitor;

        impl Visitor<'_> for SecondsVisitor {
            type Value = Seconds;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a non-negative number of seconds with at most one fractional digit")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Seconds, E> {
                v.checked_mul(10)
                    .map(Seconds)
                    .ok_or_else(|| E::custom("duration overflows"))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Seconds, E> {
                if v < 0 {
                    return Err(E::custom(DurationError::Negative(v as f64)));
                }
                self.visit_u64(v as u64)
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Seconds, E> {
                Seconds::from_secs_f64(v).map_err(E::custom)
            }
        }

        deserializer.deserialize_any(SecondsVisitor)
    }
}

/// A non-negative ratio stored in hundredths (e.g. a speedup of 5.92).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Ratio(u64);

impl Ratio {
    pub const ONE: Ratio = Ratio(100);

    pub const fn from_hundredths(h: u64) -> Self {
        Ratio(h)
    }

    pub const fn hundredths(self) -> u64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }

    /// `num / den` rounded half up to two decimals; `None` when `den` is zero.
    pub fn of(num: Seconds, den: Seconds) -> Option<Self> {
        if den.deci() == 0 {
            return None;
        }
        let n = num.deci() as u128 * 100;
        let d = den.deci() as u128;
        Some(Ratio(((2 * n + d) / (2 * d)) as u64))
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

impl FromStr for Ratio {
    type Err = DurationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v: f64 = s
            .trim()
            .parse()
            .map_err(|_| DurationError::Syntax(s.to_string()))?;
        if !v.is_finite() || v < 0.0 {
            return Err(DurationError::Syntax(s.to_string()));
        }
        Ok(Ratio((v * 100.0).round() as u64))
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(deserializer)?;
        if !v.is_finite() || v < 0.0 {
            return Err(de::Error::custom("ratio must be a non-negative number"));
        }
        Ok(Ratio((v * 100.0).round() as u64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_drops_zero_fraction() {
        assert_eq!(Seconds::whole(13892).to_string(), "13892");
        assert_eq!(Seconds::from_deci(655).to_string(), "65.5");
        assert_eq!(Seconds::ZERO.to_string(), "0");
    }

    #[test]
    fn parse_rejects_extra_precision() {
        assert_eq!("65.5".parse::<Seconds>(), Ok(Seconds::from_deci(655)));
        assert_eq!("3169.6s".parse::<Seconds>(), Ok(Seconds::from_deci(31696)));
        assert!(matches!(
            "1744.08".parse::<Seconds>(),
            Err(DurationError::TooPrecise(_))
        ));
        assert!(matches!(
            "-1".parse::<Seconds>(),
            Err(DurationError::Negative(_))
        ));
    }

    #[test]
    fn scale_rounds_half_up() {
        // 172 * 13892 / 1370 = 1744.08...
        assert_eq!(
            Seconds::whole(13892).scale(172, 1370),
            Seconds::from_deci(17441)
        );
        assert_eq!(Seconds::from_deci(5).scale(1, 2), Seconds::from_deci(3));
    }

    #[test]
    fn ratio_rounding() {
        let r = Ratio::of(Seconds::whole(18754), Seconds::from_deci(31696)).unwrap();
        assert_eq!(r.to_string(), "5.92");
        assert_eq!(
            Ratio::of(Seconds::whole(7), Seconds::whole(7)),
            Some(Ratio::ONE)
        );
        assert_eq!(Ratio::of(Seconds::whole(1), Seconds::ZERO), None);
    }
}
