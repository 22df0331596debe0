//! The TV_p switching cost of piecewise-constant controls.
//!
//! For admissible controls the variational definition reduces to the sum of
//! p-norms of consecutive level differences, so that is all we evaluate.
//! Sums run left to right.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::control::{AdmissibleSet, ControlGrid, FullRepresentation, MinimalRepresentation};

#[derive(Debug, Error)]
#[error("invalid p-norm exponent {0:?}: expected a real >= 1 or \"inf\"")]
pub struct PNormError(String);

/// Exponent `p ∈ [1, ∞]` of a vector p-norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PNorm {
    Finite(f64),
    Infinity,
}

impl PNorm {
    pub const ONE: PNorm = PNorm::Finite(1.0);
    pub const TWO: PNorm = PNorm::Finite(2.0);

    pub fn finite(p: f64) -> Result<Self, PNormError> {
        if p.is_finite() && p >= 1.0 {
            Ok(PNorm::Finite(p))
        } else if p == f64::INFINITY {
            Ok(PNorm::Infinity)
        } else {
            Err(PNormError(p.to_string()))
        }
    }

    /// `p` as a float (`f64::INFINITY` for the max norm).
    pub fn exponent(self) -> f64 {
        match self {
            PNorm::Finite(p) => p,
            PNorm::Infinity => f64::INFINITY,
        }
    }

    /// `‖x‖_p`.
    pub fn norm(self, x: &[f64]) -> f64 {
        match self {
            PNorm::Infinity => x.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
            PNorm::Finite(1.0) => x.iter().map(|v| v.abs()).sum(),
            PNorm::Finite(2.0) => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
            PNorm::Finite(p) => x.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p),
        }
    }

    /// `‖a − b‖_p` for integer vectors.
    pub fn distance(self, a: &[i64], b: &[i64]) -> f64 {
        let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y) as f64).collect();
        self.norm(&diff)
    }
}

impl fmt::Display for PNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PNorm::Finite(p) => write!(f, "{p}"),
            PNorm::Infinity => f.write_str("inf"),
        }
    }
}

impl FromStr for PNorm {
    type Err = PNormError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => Ok(PNorm::Infinity),
            other => other
                .parse::<f64>()
                .map_err(|_| PNormError(s.to_string()))
                .and_then(PNorm::finite),
        }
    }
}

impl Serialize for PNorm {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PNorm {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(p) => PNorm::finite(p),
            Raw::Text(s) => s.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

/// `‖x‖_p`; free-function form of [`PNorm::norm`].
pub fn pnorm(x: &[f64], p: PNorm) -> f64 {
    p.norm(x)
}

/// The `d × d` table `‖ν_a − ν_b‖_p`, row-major.
pub fn switch_costs(alphabet: &AdmissibleSet, p: PNorm) -> Vec<f64> {
    let d = alphabet.len();
    let mut costs = vec![0.0; d * d];
    for a in 0..d {
        for b in 0..d {
            costs[a * d + b] = p.distance(alphabet.value(a), alphabet.value(b));
        }
    }
    costs
}

/// TV_p of a level sequence: `Σ ‖a_{i+1} − a_i‖_p` (equal neighbours add 0).
pub fn tv_levels(alphabet: &AdmissibleSet, levels: &[usize], p: PNorm) -> f64 {
    levels
        .windows(2)
        .filter(|w| w[0] != w[1])
        .map(|w| p.distance(alphabet.value(w[1]), alphabet.value(w[0])))
        .sum()
}

/// TV_p of a grid control.
pub fn tv_grid(u: &ControlGrid, p: PNorm) -> f64 {
    tv_levels(u.alphabet(), u.indices(), p)
}

pub fn tv_minimal(m: &MinimalRepresentation, p: PNorm) -> f64 {
    tv_levels(m.alphabet(), m.levels(), p)
}

pub fn tv_full(f: &FullRepresentation, p: PNorm) -> f64 {
    tv_levels(f.alphabet(), f.levels(), p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn pnorm_examples() {
        let x = [2.0, -2.0];
        assert_eq!(pnorm(&x, PNorm::TWO), 2.0 * 2f64.sqrt());
        assert_eq!(pnorm(&x, PNorm::Infinity), 2.0);
        let four = pnorm(&x, PNorm::Finite(4.0));
        assert!((four - 2.0 * 2f64.powf(0.25)).abs() <= 4.0 * f64::EPSILON);
        assert_eq!(pnorm(&x, PNorm::ONE), 4.0);
        assert_eq!(pnorm(&[], PNorm::Infinity), 0.0);
    }

    #[test]
    fn parse_and_display() {
        assert_eq!("inf".parse::<PNorm>().unwrap(), PNorm::Infinity);
        assert_eq!("2".parse::<PNorm>().unwrap(), PNorm::TWO);
        assert_eq!("1.5".parse::<PNorm>().unwrap(), PNorm::Finite(1.5));
        assert!("0.5".parse::<PNorm>().is_err());
        assert!("abc".parse::<PNorm>().is_err());
        assert_eq!(PNorm::Infinity.to_string(), "inf");
        let json: PNorm = serde_json::from_str("4").unwrap();
        assert_eq!(json, PNorm::Finite(4.0));
        let json: PNorm = serde_json::from_str("\"inf\"").unwrap();
        assert_eq!(json, PNorm::Infinity);
    }

    #[test]
    fn constant_control_has_zero_variation() {
        let v = Arc::new(AdmissibleSet::lattice_box(0, 2, 2));
        let u = ControlGrid::constant(v, 1.0, 10, 5).unwrap();
        for p in [PNorm::ONE, PNorm::TWO, PNorm::Finite(4.0), PNorm::Infinity] {
            assert_eq!(tv_grid(&u, p), 0.0);
        }
    }

    #[test]
    fn switch_cost_table_is_symmetric_with_zero_diagonal() {
        let v = AdmissibleSet::lattice_box(0, 2, 2);
        let d = v.len();
        let c = switch_costs(&v, PNorm::Finite(3.0));
        for a in 0..d {
            assert_eq!(c[a * d + a], 0.0);
            for b in 0..d {
                assert_eq!(c[a * d + b], c[b * d + a]);
            }
        }
    }
}
