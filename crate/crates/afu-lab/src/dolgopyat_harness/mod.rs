//! Verification pipeline: constant ledger, UNI, the cancellation layout and χ,
//! cone iteration, Lasota–Yorke and L² tests, and the contraction scan.
//!
//! Everything hangs off a [`Setup`], which owns the iterated map, the spectral
//! family and the ledger. Experiments borrow it immutably.

mod appendix;
mod cancellation;
mod contraction;
mod ledger;
mod uni;

pub use appendix::*;
pub use cancellation::*;
pub use contraction::*;
pub use ledger::*;
pub use uni::*;

use crate::interval_map::Caps;
use serde::{Deserialize, Serialize};

/// η₀ = (√7 − 1)/2.
pub fn eta0() -> f64 {
    (7f64.sqrt() - 1.0) / 2.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    /// Ulam grid for the spectral family and the long operator runs.
    pub grid: usize,
    /// Ulam grid for the C₉ estimate.
    pub c9_grid: usize,
    pub caps: Caps,
    /// Largest k tried by the ledger search.
    pub k_cap: usize,
    /// Fail instead of degrading when the atom-size condition cannot be met.
    pub strict_k: bool,
    pub eps_start: f64,
    pub eps_levels: u32,
    /// n₀ for the experiments; `None` picks the smallest n with 4ρ₀^{-n} ≤ η₀/2.
    pub n0_work: Option<usize>,
    /// The ledger n₀ is searched among k, 2k, ..., n0_mult_cap·k.
    pub n0_mult_cap: usize,
    /// Leaf budget for exhaustive branch enumeration.
    pub enum_budget: usize,
    pub uni_words: usize,
    pub uni_grid: usize,
    pub c9_points: usize,
    pub eta1_samples: usize,
    pub ly_family: usize,
    pub seed: u64,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            grid: 4096,
            c9_grid: 2048,
            caps: Caps::default(),
            k_cap: 128,
            strict_k: false,
            eps_start: 0.5,
            eps_levels: 12,
            n0_work: None,
            n0_mult_cap: 8,
            enum_budget: 1 << 21,
            uni_words: 64,
            uni_grid: 65,
            c9_points: 129,
            eta1_samples: 200,
            ly_family: 24,
            seed: 7,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Holds,
    Fails,
    /// Evaluated, but on inputs outside the regime where the number is trustworthy.
    Unverified,
}

/// One inequality `lhs < rhs` (or ≤) with its measured sides.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    pub fn lt(name: &str, lhs: f64, rhs: f64) -> Check {
        Check::from_bool(name, lhs, rhs, lhs < rhs)
    }

    pub fn le(name: &str, lhs: f64, rhs: f64) -> Check {
        Check::from_bool(name, lhs, rhs, lhs <= rhs)
    }

    fn from_bool(name: &str, lhs: f64, rhs: f64, ok: bool) -> Check {
        let status = if ok { Status::Holds } else { Status::Fails };
        Check { name: name.to_string(), lhs, rhs, status, note: None }
    }

    pub fn holds(&self) -> bool {
        self.status == Status::Holds
    }

    pub fn unverified(mut self, note: &str) -> Check {
        self.status = Status::Unverified;
        self.note = Some(note.to_string());
        self
    }

    pub fn with_note(mut self, note: &str) -> Check {
        self.note = Some(note.to_string());
        self
    }
}
