//! Per-cycle power accounting over the 3x3 grid of receiver and transmitter
//! power levels.
//!
//! Each ONU burns a wattage determined jointly by what its receiver and its
//! transmitter are doing during the cycle; the nine joint levels are laid out
//! receiver-major (receiver awake rows first), which is also the column order
//! used for occupancy reporting.

use crate::error::{Error, Result};
use alloc::format;

/// Receiver power level during one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RxKind {
    Awake,
    Listen,
    Sleep,
}

/// Transmitter power level during one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TxKind {
    Awake,
    Listen,
    Sleep,
}

impl RxKind {
    pub const ALL: [RxKind; 3] = [RxKind::Awake, RxKind::Listen, RxKind::Sleep];

    pub fn index(self) -> usize {
        match self {
            RxKind::Awake => 0,
            RxKind::Listen => 1,
            RxKind::Sleep => 2,
        }
    }
}

impl TxKind {
    pub const ALL: [TxKind; 3] = [TxKind::Awake, TxKind::Listen, TxKind::Sleep];

    pub fn index(self) -> usize {
        match self {
            TxKind::Awake => 0,
            TxKind::Listen => 1,
            TxKind::Sleep => 2,
        }
    }
}

/// Index of a joint (rx, tx) level in receiver-major order:
/// (awake,awake), (awake,listen), (awake,sleep), (listen,awake), ...
pub fn joint_index(rx: RxKind, tx: TxKind) -> usize {
    rx.index() * 3 + tx.index()
}

/// Joint power-draw table in watts, indexed `watts[rx][tx]` with rows and
/// columns ordered awake, listen, sleep.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerProfile {
    pub watts: [[f64; 3]; 3],
}

impl Default for PowerProfile {
    fn default() -> Self {
        PowerProfile {
            watts: [
                [3.85, 1.9, 1.7],  // receiver awake
                [2.8, 1.55, 1.0],  // receiver listening
                [2.5, 0.95, 0.75], // receiver sleeping
            ],
        }
    }
}

impl PowerProfile {
    /// Wattage of one joint level.
    pub fn power_of(&self, rx: RxKind, tx: TxKind) -> f64 {
        self.watts[rx.index()][tx.index()]
    }

    /// Full-power reference level (both components awake).
    pub fn full_power(&self) -> f64 {
        self.watts[0][0]
    }

    /// All entries must be positive, and power must not increase when either
    /// component steps awake -> listen -> sleep with the other held fixed.
    pub fn validate(&self) -> Result<()> {
        for (r, row) in self.watts.iter().enumerate() {
            for (t, &w) in row.iter().enumerate() {
                if !(w > 0.0) || !w.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "power level [{r}][{t}] must be positive and finite, got {w}"
                    )));
                }
            }
        }
        for r in 0..3 {
            for t in 0..2 {
                if self.watts[r][t] < self.watts[r][t + 1] {
                    return Err(Error::InvalidArgument(format!(
                        "power must not increase as the transmitter deepens: [{r}][{t}] < [{r}][{}]",
                        t + 1
                    )));
                }
            }
        }
        for t in 0..3 {
            for r in 0..2 {
                if self.watts[r][t] < self.watts[r + 1][t] {
                    return Err(Error::InvalidArgument(format!(
                        "power must not increase as the receiver deepens: [{r}][{t}] < [{}][{t}]",
                        r + 1
                    )));
                }
            }
        }
        Ok(())
    }
}
