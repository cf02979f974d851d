//! The discrete ladder of quotable decimal odds.
//!
//! Odds are decimal (total return per unit stake, so fair odds for
//! probability p are 1/p) and live on a banded ladder from 1.01 to 1000:
//! step 0.01 up to 2, 0.02 up to 3, 0.05 up to 4, 0.1 up to 6, 0.2 up to 10,
//! 0.5 up to 20, 1 up to 30, 2 up to 50, 5 up to 100, then 10 up to 1000.
//! Ticks are stored as hundredths of a unit so every ladder value is exact.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;

/// (inclusive end in centi-odds, step in centi-odds) per band; bands start
/// one step above the previous end, the first at 101.
const BANDS: [(i64, i64); 10] = [
    (200, 1),
    (300, 2),
    (400, 5),
    (600, 10),
    (1000, 20),
    (2000, 50),
    (3000, 100),
    (5000, 200),
    (10_000, 500),
    (100_000, 1000),
];

pub const TICK_COUNT: usize = 350;

/// Smallest and largest quotable odds.
pub const MIN_ODDS: f64 = 1.01;
pub const MAX_ODDS: f64 = 1000.0;

const fn build_table() -> [i64; TICK_COUNT] {
    let mut table = [0i64; TICK_COUNT];
    let mut n = 0;
    let mut centi = 101;
    let mut band = 0;
    while band < BANDS.len() {
        let (end, step) = BANDS[band];
        while centi <= end {
            table[n] = centi;
            n += 1;
            centi += step;
        }
        // Next band starts one of its own steps above this band's end.
        if band + 1 < BANDS.len() {
            centi = end + BANDS[band + 1].1;
        }
        band += 1;
    }
    assert!(n == TICK_COUNT);
    table
}

static TABLE: [i64; TICK_COUNT] = build_table();

/// One rung of the odds ladder. Ordered by odds value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OddsTick(u16);

impl OddsTick {
    pub const MIN: OddsTick = OddsTick(0);
    pub const MAX: OddsTick = OddsTick((TICK_COUNT - 1) as u16);

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// Odds in hundredths of a unit; exact.
    pub fn centi(self) -> i64 {
        TABLE[self.0 as usize]
    }

    pub fn value(self) -> f64 {
        self.centi() as f64 / 100.0
    }

    /// The tick `delta` rungs away, saturating at the ladder ends.
    pub fn offset(self, delta: i64) -> OddsTick {
        let idx = (self.0 as i64 + delta).clamp(0, (TICK_COUNT - 1) as i64);
        OddsTick(idx as u16)
    }

    /// Exact lookup: `value` must sit on the ladder (within float fuzz).
    pub fn from_value(value: f64) -> Option<OddsTick> {
        let tick = snap_up(value);
        (close(tick.value(), value)).then_some(tick)
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(1.0)
}

/// Smallest tick at or above `odds` (clamped to the ladder ends).
pub fn snap_up(odds: f64) -> OddsTick {
    let target = odds - 1e-9 * odds.abs().max(1.0);
    let i = TABLE.partition_point(|&c| (c as f64 / 100.0) < target);
    OddsTick(i.min(TICK_COUNT - 1) as u16)
}

/// Largest tick at or below `odds` (clamped to the ladder ends).
pub fn snap_down(odds: f64) -> OddsTick {
    let target = odds + 1e-9 * odds.abs().max(1.0);
    let i = TABLE.partition_point(|&c| (c as f64 / 100.0) <= target);
    OddsTick(i.saturating_sub(1) as u16)
}

impl fmt::Display for OddsTick {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = self.centi();
        if c % 100 == 0 {
            write!(f, "{}", c / 100)
        } else if c % 10 == 0 {
            write!(f, "{}.{}", c / 100, (c % 100) / 10)
        } else {
            write!(f, "{}.{:02}", c / 100, c % 100)
        }
    }
}

impl Serialize for OddsTick {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.value())
    }
}

impl<'de> Deserialize<'de> for OddsTick {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(deserializer)?;
        OddsTick::from_value(v).ok_or_else(|| D::Error::custom(format!("{v} is not a ladder odds value")))
    }
}
