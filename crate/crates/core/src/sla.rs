//! PDR classification thresholds and the SLA cap on abnormal receivers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Classification thresholds and the SLA parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    /// PDR below which a receiver is abnormal.
    pub low: f64,
    /// PDR below which a normal-enough receiver is still mid-PDR.
    pub high: f64,
    /// Fraction of receivers that must stay at or above `low`.
    pub population: f64,
    /// Count margin used by the increase rule and the estimator cap.
    pub epsilon: u32,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            low: 0.85,
            high: 0.97,
            population: 0.95,
            epsilon: 2,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.low > 0.0 && self.low < self.high && self.high <= 1.0) {
            return Err(Error::config(
                "thresholds",
                format!("need 0 < low < high <= 1, got low={} high={}", self.low, self.high),
            ));
        }
        if !(self.population > 0.0 && self.population <= 1.0) {
            return Err(Error::config(
                "thresholds.population",
                format!("need 0 < population <= 1, got {}", self.population),
            ));
        }
        Ok(())
    }

    pub fn classify(&self, pdr: f64) -> Result<NodeClass> {
        classify(pdr, self)
    }

    pub fn a_max(&self, nodes: usize) -> u32 {
        a_max(nodes, self.population)
    }
}

/// Receiver class. Ordered worst to best.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeClass {
    Abnormal,
    MidPdr,
    Normal,
}

/// Classifies a PDR. A PDR exactly at `low` is mid-PDR and exactly at `high`
/// is normal.
pub fn classify(pdr: f64, th: &Thresholds) -> Result<NodeClass> {
    if !(0.0..=1.0).contains(&pdr) {
        return Err(Error::InputDomain {
            what: "pdr",
            value: pdr,
            domain: "[0, 1]",
        });
    }
    Ok(if pdr < th.low {
        NodeClass::Abnormal
    } else if pdr < th.high {
        NodeClass::MidPdr
    } else {
        NodeClass::Normal
    })
}

/// `ceil(n * (1 - population))`, the number of abnormal receivers the SLA
/// tolerates.
pub fn a_max(nodes: usize, population: f64) -> u32 {
    let raw = nodes as f64 * (1.0 - population);
    // 160 * (1 - 0.95) evaluates to 8.000000000000007 in binary floating point.
    (raw - 1e-9).ceil().max(0.0) as u32
}

/// Counts abnormal and mid-PDR entries.
pub fn count_classes<'a>(pdrs: impl IntoIterator<Item = &'a f64>, th: &Thresholds) -> (u32, u32) {
    let mut abnormal = 0;
    let mut mid = 0;
    for &p in pdrs {
        if p < th.low {
            abnormal += 1;
        } else if p < th.high {
            mid += 1;
        }
    }
    (abnormal, mid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn classify_examples() {
        let th = Thresholds::default();
        assert_eq!(classify(1.0, &th).unwrap(), NodeClass::Normal);
        assert_eq!(classify(0.5, &th).unwrap(), NodeClass::Abnormal);
        assert_eq!(classify(0.9, &th).unwrap(), NodeClass::MidPdr);
    }

    #[test]
    fn classify_boundaries() {
        let th = Thresholds::default();
        assert_eq!(classify(0.85, &th).unwrap(), NodeClass::MidPdr);
        assert_eq!(classify(0.97, &th).unwrap(), NodeClass::Normal);
        assert_eq!(classify(0.0, &th).unwrap(), NodeClass::Abnormal);
    }

    #[test]
    fn classify_rejects_out_of_range() {
        let th = Thresholds::default();
        assert!(matches!(classify(1.01, &th), Err(Error::InputDomain { .. })));
        assert!(classify(-0.1, &th).is_err());
        assert!(classify(f64::NAN, &th).is_err());
    }

    #[test]
    fn a_max_examples() {
        assert_eq!(a_max(160, 0.95), 8);
        assert_eq!(a_max(100, 1.0), 0);
        assert_eq!(a_max(162, 0.95), 9);
        assert_eq!(a_max(155, 0.95), 8);
    }

    #[test]
    fn thresholds_validation() {
        assert!(Thresholds::default().validate().is_ok());
        let bad = Thresholds {
            low: 0.98,
            ..Thresholds::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn classify_is_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let th = Thresholds::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(classify(lo, &th).unwrap() <= classify(hi, &th).unwrap());
        }

        #[test]
        fn a_max_monotone(n in 1usize..1000, x1 in 0.01f64..=1.0, x2 in 0.01f64..=1.0) {
            let (lo, hi) = if x1 <= x2 { (x1, x2) } else { (x2, x1) };
            prop_assert!(a_max(n, hi) <= a_max(n, lo));
            prop_assert!(a_max(n, lo) <= a_max(n + 1, lo));
        }
    }
}
