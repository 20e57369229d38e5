//! Integer-microsecond time base with millisecond JSON encoding.
//!
//! All instants and durations are `i64` microseconds internally; JSON
//! documents carry milliseconds as plain numbers (integral when exact).

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub type TimeUs = i64;

pub const US_PER_MS: TimeUs = 1_000;

/// Whole milliseconds to microseconds.
pub const fn ms(v: i64) -> TimeUs {
    v * US_PER_MS
}

pub fn us_from_ms_f64(ms: f64) -> TimeUs {
    (ms * US_PER_MS as f64).round() as TimeUs
}

pub fn us_to_ms_f64(us: TimeUs) -> f64 {
    us as f64 / US_PER_MS as f64
}

/// Millisecond JSON number for a microsecond value: integral when the value
/// is a whole number of milliseconds, fractional otherwise.
pub fn ms_number(us: TimeUs) -> serde_json::Number {
    if us % US_PER_MS == 0 {
        serde_json::Number::from(us / US_PER_MS)
    } else {
        serde_json::Number::from_f64(us_to_ms_f64(us)).expect("finite time value")
    }
}

fn number_to_us<'de, D: Deserializer<'de>>(n: serde_json::Number) -> Result<TimeUs, D::Error> {
    if let Some(i) = n.as_i64() {
        i.checked_mul(US_PER_MS)
            .ok_or_else(|| serde::de::Error::custom("millisecond value out of range"))
    } else if let Some(f) = n.as_f64() {
        Ok(us_from_ms_f64(f))
    } else {
        Err(serde::de::Error::custom("unsupported number"))
    }
}

/// Field adapter: a single duration/instant serialized as milliseconds.
pub mod serde_ms {
    use super::*;

    pub fn serialize<S: Serializer>(us: &TimeUs, s: S) -> Result<S::Ok, S::Error> {
        ms_number(*us).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<TimeUs, D::Error> {
        let n = serde_json::Number::deserialize(d)?;
        number_to_us::<D>(n)
    }
}

/// Field adapter: a vector of durations serialized as milliseconds.
pub mod serde_ms_vec {
    use super::*;

    pub fn serialize<S: Serializer>(us: &[TimeUs], s: S) -> Result<S::Ok, S::Error> {
        let nums: Vec<serde_json::Number> = us.iter().map(|&u| ms_number(u)).collect();
        nums.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<TimeUs>, D::Error> {
        let nums = Vec::<serde_json::Number>::deserialize(d)?;
        nums.into_iter().map(number_to_us::<D>).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ms_round_trip_is_exact() {
        for us in [0, 1, 999, 1000, 10_000, 333, 123_456_789] {
            let n = ms_number(us);
            let back = if let Some(i) = n.as_i64() {
                i * US_PER_MS
            } else {
                us_from_ms_f64(n.as_f64().unwrap())
            };
            assert_eq!(back, us);
        }
    }

    #[test]
    fn whole_ms_serializes_as_integer() {
        assert_eq!(ms_number(10_000).to_string(), "10");
        assert_eq!(ms_number(10_500).to_string(), "10.5");
    }
}
