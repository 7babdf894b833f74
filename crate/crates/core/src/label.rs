//! Class taxonomy and the wafer grid addressing scheme.
//!
//! Chips sit at integer grid coordinates `(i, j)`. Streets sit at
//! half-integer coordinates with exactly one fractional component: the
//! street at `(i + ½, j)` separates chips `(i, j)` and `(i + 1, j)` and runs
//! vertically; the street at `(i, j + ½)` separates `(i, j)` and `(i, j + 1)`
//! and runs horizontally.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Defect severity, ordered `Flawless < Anomaly < Faulty`.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum Label {
    Flawless = 0,
    Anomaly = 1,
    Faulty = 2,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Flawless, Label::Anomaly, Label::Faulty];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Label::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::parse("label", format!("class index {i} not in 0..=2")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Flawless => "flawless",
            Label::Anomaly => "anomaly",
            Label::Faulty => "faulty",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Whether a chip cell lies fully within the wafer disc.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChipPosition {
    Inside = 0,
    Outside = 1,
}

impl ChipPosition {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(ChipPosition::Inside),
            1 => Ok(ChipPosition::Outside),
            _ => Err(Error::parse("chip position", format!("index {i}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ChipPosition::Inside => "inside",
            ChipPosition::Outside => "outside",
        }
    }
}

impl FromStr for ChipPosition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inside" => Ok(ChipPosition::Inside),
            "outside" => Ok(ChipPosition::Outside),
            _ => Err(Error::parse("chip position", s)),
        }
    }
}

/// Integer grid coordinate of a chip.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChipIndex {
    pub x: i32,
    pub y: i32,
}

impl ChipIndex {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    /// The four streets bordering this chip: right, left, bottom, top.
    pub fn adjacent_streets(self) -> [StreetIndex; 4] {
        let (x2, y2) = (2 * self.x, 2 * self.y);
        [
            StreetIndex { x2: x2 + 1, y2 },
            StreetIndex { x2: x2 - 1, y2 },
            StreetIndex { x2, y2: y2 + 1 },
            StreetIndex { x2, y2: y2 - 1 },
        ]
    }
}

impl fmt::Display for ChipIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// Lane direction of a street.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Orientation {
    Horizontal,
    Vertical,
}

/// Half-integer street coordinate, stored doubled so it stays exact.
///
/// Exactly one of `x2`, `y2` is odd.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StreetIndex {
    x2: i32,
    y2: i32,
}

impl StreetIndex {
    /// Builds from doubled coordinates; fails unless exactly one is odd.
    pub fn from_doubled(x2: i32, y2: i32) -> Result<Self> {
        if (x2.rem_euclid(2) == 1) == (y2.rem_euclid(2) == 1) {
            return Err(Error::parse(
                "street index",
                format!("({}, {}) needs exactly one half-integer component", x2 as f64 / 2.0, y2 as f64 / 2.0),
            ));
        }
        Ok(Self { x2, y2 })
    }

    /// Street between chip `(i, j)` and `(i + 1, j)`.
    pub const fn right_of(chip: ChipIndex) -> Self {
        Self {
            x2: 2 * chip.x + 1,
            y2: 2 * chip.y,
        }
    }

    /// Street between chip `(i, j)` and `(i, j + 1)`.
    pub const fn below(chip: ChipIndex) -> Self {
        Self {
            x2: 2 * chip.x,
            y2: 2 * chip.y + 1,
        }
    }

    pub fn from_f64(x: f64, y: f64) -> Result<Self> {
        let (x2, y2) = (x * 2.0, y * 2.0);
        if x2.fract() != 0.0 || y2.fract() != 0.0 {
            return Err(Error::parse("street index", format!("({x}, {y})")));
        }
        Self::from_doubled(x2 as i32, y2 as i32)
    }

    pub fn doubled(self) -> (i32, i32) {
        (self.x2, self.y2)
    }

    pub fn x(self) -> f64 {
        self.x2 as f64 / 2.0
    }

    pub fn y(self) -> f64 {
        self.y2 as f64 / 2.0
    }

    /// Vertical lane when x is half-integer, horizontal when y is.
    pub fn orientation(self) -> Orientation {
        if self.x2.rem_euclid(2) == 1 {
            Orientation::Vertical
        } else {
            Orientation::Horizontal
        }
    }

    /// The two chips this street separates.
    pub fn chips(self) -> [ChipIndex; 2] {
        match self.orientation() {
            Orientation::Vertical => {
                let left = (self.x2 - 1).div_euclid(2);
                let y = self.y2 / 2;
                [ChipIndex::new(left, y), ChipIndex::new(left + 1, y)]
            }
            Orientation::Horizontal => {
                let top = (self.y2 - 1).div_euclid(2);
                let x = self.x2 / 2;
                [ChipIndex::new(x, top), ChipIndex::new(x, top + 1)]
            }
        }
    }
}

/// Formats a doubled coordinate as an integer or `n.5`.
pub(crate) fn fmt_half(v2: i32) -> String {
    if v2.rem_euclid(2) == 0 {
        format!("{}", v2 / 2)
    } else if v2 < 0 {
        format!("-{}.5", (-v2) / 2)
    } else {
        format!("{}.5", v2 / 2)
    }
}

impl fmt::Display for StreetIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", fmt_half(self.x2), fmt_half(self.y2))
    }
}
