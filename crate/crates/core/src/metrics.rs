//! The 13 per-90 metrics and the position taxonomy shared by every module.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Sub};
use std::str::FromStr;

use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

pub const METRIC_COUNT: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Shots,
    Xg,
    Xa,
    Crosses,
    TotalPasses,
    ShortPasses,
    LongPasses,
    AttThirdPasses,
    PenAreaEntries,
    TakeOns,
    DefOwnThird,
    DefMidThird,
    DefAttThird,
}

impl Metric {
    pub const ALL: [Metric; METRIC_COUNT] = [
        Metric::Shots,
        Metric::Xg,
        Metric::Xa,
        Metric::Crosses,
        Metric::TotalPasses,
        Metric::ShortPasses,
        Metric::LongPasses,
        Metric::AttThirdPasses,
        Metric::PenAreaEntries,
        Metric::TakeOns,
        Metric::DefOwnThird,
        Metric::DefMidThird,
        Metric::DefAttThird,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Shots => "shots",
            Metric::Xg => "xg",
            Metric::Xa => "xa",
            Metric::Crosses => "crosses",
            Metric::TotalPasses => "total_passes",
            Metric::ShortPasses => "short_passes",
            Metric::LongPasses => "long_passes",
            Metric::AttThirdPasses => "att_third_passes",
            Metric::PenAreaEntries => "pen_area_entries",
            Metric::TakeOns => "take_ons",
            Metric::DefOwnThird => "def_own_third",
            Metric::DefMidThird => "def_mid_third",
            Metric::DefAttThird => "def_att_third",
        }
    }

    /// Defensive-action counts, which fall as a team gets relatively stronger.
    pub fn is_defensive(self) -> bool {
        matches!(self, Metric::DefOwnThird | Metric::DefMidThird | Metric::DefAttThird)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownMetric(s.to_string()))
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(de::Error::custom)
    }
}

/// One value per metric in the fixed [`Metric::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricVector(pub [f64; METRIC_COUNT]);

impl MetricVector {
    pub const ZERO: MetricVector = MetricVector([0.0; METRIC_COUNT]);

    pub fn splat(v: f64) -> Self {
        MetricVector([v; METRIC_COUNT])
    }

    pub fn from_fn(f: impl FnMut(usize) -> f64) -> Self {
        MetricVector(std::array::from_fn(f))
    }

    pub fn from_metrics(mut f: impl FnMut(Metric) -> f64) -> Self {
        MetricVector(std::array::from_fn(|i| f(Metric::ALL[i])))
    }

    pub fn get(&self, m: Metric) -> f64 {
        self.0[m.index()]
    }

    pub fn set(&mut self, m: Metric, v: f64) {
        self.0[m.index()] = v;
    }

    pub fn iter(&self) -> impl Iterator<Item = (Metric, f64)> + '_ {
        Metric::ALL.iter().map(move |&m| (m, self.0[m.index()]))
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        MetricVector(self.0.map(&mut f))
    }

    pub fn zip_with(&self, other: &Self, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        MetricVector::from_fn(|i| f(self.0[i], other.0[i]))
    }

    pub fn scale(&self, k: f64) -> Self {
        self.map(|v| v * k)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn clamp_non_negative(&self) -> Self {
        self.map(|v| v.max(0.0))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Index<Metric> for MetricVector {
    type Output = f64;

    fn index(&self, m: Metric) -> &f64 {
        &self.0[m.index()]
    }
}

impl IndexMut<Metric> for MetricVector {
    fn index_mut(&mut self, m: Metric) -> &mut f64 {
        &mut self.0[m.index()]
    }
}

impl Add for MetricVector {
    type Output = MetricVector;

    fn add(self, rhs: Self) -> Self {
        self.zip_with(&rhs, |a, b| a + b)
    }
}

impl AddAssign for MetricVector {
    fn add_assign(&mut self, rhs: Self) {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a += b;
        }
    }
}

impl Sub for MetricVector {
    type Output = MetricVector;

    fn sub(self, rhs: Self) -> Self {
        self.zip_with(&rhs, |a, b| a - b)
    }
}

impl Mul<f64> for MetricVector {
    type Output = MetricVector;

    fn mul(self, k: f64) -> Self {
        self.scale(k)
    }
}

impl Serialize for MetricVector {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(METRIC_COUNT))?;
        for (m, v) in self.iter() {
            map.serialize_entry(m.name(), &v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for MetricVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;

        impl<'de> Visitor<'de> for V {
            type Value = MetricVector;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object with all 13 metric fields")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<MetricVector, A::Error> {
                let mut out = [None; METRIC_COUNT];
                while let Some(key) = map.next_key::<String>()? {
                    let m: Metric = key.parse().map_err(de::Error::custom)?;
                    if out[m.index()].replace(map.next_value::<f64>()?).is_some() {
                        return Err(de::Error::custom(format!("duplicate metric `{m}`")));
                    }
                }
                let mut v = MetricVector::ZERO;
                for m in Metric::ALL {
                    v[m] = out[m.index()]
                        .ok_or_else(|| de::Error::custom(format!("missing metric `{m}`")))?;
                }
                Ok(v)
            }
        }

        d.deserialize_map(V)
    }
}

pub const POSITION_COUNT: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Position {
    GK,
    CB,
    FB,
    CM,
    W,
    ST,
}

impl Position {
    pub const ALL: [Position; POSITION_COUNT] =
        [Position::GK, Position::CB, Position::FB, Position::CM, Position::W, Position::ST];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Position::GK => "GK",
            Position::CB => "CB",
            Position::FB => "FB",
            Position::CM => "CM",
            Position::W => "W",
            Position::ST => "ST",
        }
    }

    pub fn one_hot(self) -> [f64; POSITION_COUNT] {
        let mut v = [0.0; POSITION_COUNT];
        v[self.index()] = 1.0;
        v
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Position {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Position::ALL
            .iter()
            .copied()
            .find(|p| p.label() == s)
            .ok_or_else(|| Error::UnknownPosition(s.to_string()))
    }
}

impl Serialize for Position {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for Position {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for m in Metric::ALL {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
        }
        for p in Position::ALL {
            assert_eq!(p.label().parse::<Position>().unwrap(), p);
        }
        assert!(matches!("LW".parse::<Position>(), Err(Error::UnknownPosition(_))));
    }

    #[test]
    fn vector_json_uses_metric_names_in_order() {
        let v = MetricVector::from_fn(|i| i as f64);
        let s = serde_json::to_string(&v).unwrap();
        assert!(s.starts_with(r#"{"shots":0.0,"xg":1.0,"xa":2.0"#));
        let back: MetricVector = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn missing_metric_is_rejected() {
        let err = serde_json::from_str::<MetricVector>(r#"{"shots":1.0}"#).unwrap_err();
        assert!(err.to_string().contains("missing metric"));
    }
}
