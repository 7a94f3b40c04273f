use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{LoeError, Result};

/// Ordered item triple `⟨i, j, k⟩` asking whether `j` is farther from the
/// head `i` than `k` is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triplet {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

impl Triplet {
    pub fn new(i: usize, j: usize, k: usize) -> Result<Self> {
        if i == j || i == k || j == k {
            return Err(LoeError::InvalidTriplet { i, j, k });
        }
        Ok(Self { i, j, k })
    }

    pub fn is_canonical(&self) -> bool {
        self.j < self.k
    }

    /// Canonical form (`j < k`) and whether the tail was swapped to get there.
    pub fn canonical(self) -> (Self, bool) {
        if self.j < self.k {
            (self, false)
        } else {
            (
                Self {
                    i: self.i,
                    j: self.k,
                    k: self.j,
                },
                true,
            )
        }
    }

    pub fn check_range(&self, n_items: usize) -> Result<()> {
        for index in [self.i, self.j, self.k] {
            if index >= n_items {
                return Err(LoeError::IndexOutOfRange { index, n_items });
            }
        }
        Ok(())
    }
}

impl fmt::Display for Triplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "⟨{}, {}, {}⟩", self.i, self.j, self.k)
    }
}

/// Oracle answer. `Farther` (+1) means `D_ij > D_ik`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Farther,
    Closer,
}

impl Label {
    pub fn from_sign(v: i64) -> Result<Self> {
        match v {
            1 => Ok(Label::Farther),
            -1 => Ok(Label::Closer),
            other => Err(LoeError::InvalidParameter(format!(
                "label must be +1 or -1, got {other}"
            ))),
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Label::Farther => 1.0,
            Label::Closer => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Farther => Label::Closer,
            Label::Closer => Label::Farther,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comparison {
    pub triplet: Triplet,
    pub label: Label,
}

impl Comparison {
    pub fn new(triplet: Triplet, label: Label) -> Self {
        Self { triplet, label }
    }

    /// Same comparison with `j < k`; the label flips when the tail is swapped.
    pub fn canonical(self) -> Self {
        let (triplet, swapped) = self.triplet.canonical();
        let label = if swapped { self.label.flipped() } else { self.label };
        Self { triplet, label }
    }
}
