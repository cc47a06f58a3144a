use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// One of the eleven letter grades, ordered from highest to lowest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Letter {
    APlus,
    A,
    AMinus,
    BPlus,
    B,
    BMinus,
    CPlus,
    C,
    CMinus,
    D,
    F,
}

impl Letter {
    pub const ALL: [Letter; 11] = [
        Letter::APlus,
        Letter::A,
        Letter::AMinus,
        Letter::BPlus,
        Letter::B,
        Letter::BMinus,
        Letter::CPlus,
        Letter::C,
        Letter::CMinus,
        Letter::D,
        Letter::F,
    ];

    pub fn value(self) -> f64 {
        match self {
            Letter::APlus | Letter::A => 4.0,
            Letter::AMinus => 3.67,
            Letter::BPlus => 3.33,
            Letter::B => 3.0,
            Letter::BMinus => 2.67,
            Letter::CPlus => 2.33,
            Letter::C => 2.0,
            Letter::CMinus => 1.67,
            Letter::D => 1.0,
            Letter::F => 0.0,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Letter::APlus => "A+",
            Letter::A => "A",
            Letter::AMinus => "A-",
            Letter::BPlus => "B+",
            Letter::B => "B",
            Letter::BMinus => "B-",
            Letter::CPlus => "C+",
            Letter::C => "C",
            Letter::CMinus => "C-",
            Letter::D => "D",
            Letter::F => "F",
        }
    }

    /// Position in the letter order; one tick is a difference of one.
    pub fn index(self) -> usize {
        self as usize
    }

    /// Closest letter to `v` after clamping into [0, 4]. Ties go to the
    /// higher value, and 4.0 maps to `A`.
    pub fn nearest(v: f64) -> Letter {
        let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 4.0) };
        let mut best = Letter::A;
        let mut best_dist = f64::INFINITY;
        // A+ is skipped: it shares 4.0 with A.
        for letter in &Letter::ALL[1..] {
            let dist = (letter.value() - v).abs();
            // Letters are visited from high to low, so strict `<` keeps the
            // higher letter on ties.
            if dist < best_dist - 1e-12 {
                best = *letter;
                best_dist = dist;
            }
        }
        best
    }

    /// Number of ticks between two letters.
    pub fn ticks(self, other: Letter) -> usize {
        self.index().abs_diff(other.index())
    }
}

pub fn letter_to_value(symbol: &str) -> Result<f64> {
    symbol.parse::<Letter>().map(Letter::value)
}

pub fn value_to_nearest_letter(v: f64) -> Letter {
    Letter::nearest(v)
}

impl FromStr for Letter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Letter::ALL
            .iter()
            .copied()
            .find(|l| l.symbol() == s)
            .ok_or_else(|| Error::Validation(format!("unknown letter grade '{s}'")))
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl Serialize for Letter {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.symbol())
    }
}

impl<'de> Deserialize<'de> for Letter {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
