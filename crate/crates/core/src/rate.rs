//! The 802.11a multicast rate ladder.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rates of the 802.11a ladder in Mbps, lowest first.
pub const LADDER_MBPS: [u32; 8] = [6, 9, 12, 18, 24, 36, 48, 54];

/// A rate on the ladder. Ordering follows the ladder index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rate(u8);

impl Rate {
    pub const COUNT: usize = LADDER_MBPS.len();
    pub const LOWEST: Rate = Rate(0);
    pub const HIGHEST: Rate = Rate((LADDER_MBPS.len() - 1) as u8);

    pub fn from_index(index: usize) -> Option<Rate> {
        (index < Self::COUNT).then_some(Rate(index as u8))
    }

    pub fn from_mbps(mbps: u32) -> Result<Rate> {
        LADDER_MBPS
            .iter()
            .position(|&m| m == mbps)
            .map(|i| Rate(i as u8))
            .ok_or(Error::InputDomain {
                what: "rate (Mbps)",
                value: mbps as f64,
                domain: "one of 6, 9, 12, 18, 24, 36, 48, 54",
            })
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn mbps(self) -> u32 {
        LADDER_MBPS[self.index()]
    }

    pub fn bps(self) -> f64 {
        self.mbps() as f64 * 1e6
    }

    pub fn next_lower(self) -> Option<Rate> {
        self.0.checked_sub(1).map(Rate)
    }

    pub fn next_higher(self) -> Option<Rate> {
        Rate::from_index(self.index() + 1)
    }

    pub fn is_lowest(self) -> bool {
        self == Rate::LOWEST
    }

    pub fn is_highest(self) -> bool {
        self == Rate::HIGHEST
    }

    pub fn all() -> impl DoubleEndedIterator<Item = Rate> + ExactSizeIterator {
        (0..Self::COUNT).map(|i| Rate(i as u8))
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.mbps())
    }
}

impl Serialize for Rate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u32(self.mbps())
    }
}

impl<'de> Deserialize<'de> for Rate {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let mbps = u32::deserialize(d)?;
        Rate::from_mbps(mbps).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladder_is_strictly_increasing() {
        let rates: Vec<u32> = Rate::all().map(Rate::mbps).collect();
        assert_eq!(rates, LADDER_MBPS);
        assert!(rates.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn neighbours_move_one_step() {
        let r = Rate::from_mbps(24).unwrap();
        assert_eq!(r.next_higher().unwrap().mbps(), 36);
        assert_eq!(r.next_lower().unwrap().mbps(), 18);
        assert_eq!(Rate::LOWEST.next_lower(), None);
        assert_eq!(Rate::HIGHEST.next_higher(), None);
        for r in Rate::all().skip(1).take(Rate::COUNT - 2) {
            assert_eq!(r.next_lower().unwrap().next_higher(), Some(r));
            assert_eq!(r.next_higher().unwrap().next_lower(), Some(r));
        }
    }

    #[test]
    fn rejects_off_ladder_rates() {
        assert!(Rate::from_mbps(11).is_err());
        assert_eq!(Rate::from_mbps(54).unwrap(), Rate::HIGHEST);
    }
}
