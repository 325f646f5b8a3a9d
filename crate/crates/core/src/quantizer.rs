//! Regular scalar quantizers on the unit interval for a fixed set of thresholds.
//!
//! A [`ThresholdSet`] with `K - 1` interior thresholds `a_1 <= ... <= a_{K-1}`
//! partitions `[0, 1)` into `K` half-open cells `[a_{k-1}, a_k)`, with the
//! implicit endpoints `a_0 = 0` and `a_K = 1`. Cells are numbered `1..=K`.
//! For a uniform source the conditional distortion and index entropy have
//! exact expressions in terms of the cell lengths.

use serde::Serialize;

use crate::error::{Error, Result};

/// Sorted thresholds defining a `K`-cell partition of `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdSet {
    interior: Vec<f64>,
}

/// One cell `[left, right)` of a partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cell {
    pub index: usize,
    pub left: f64,
    pub right: f64,
}

impl Cell {
    pub fn length(&self) -> f64 {
        self.right - self.left
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.left + self.right)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.left <= x && x < self.right
    }
}

pub(crate) fn check_unit(x: f64) -> Result<()> {
    if (0.0..1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::OutOfUnitInterval { value: x })
    }
}

impl ThresholdSet {
    /// Builds a threshold set from interior thresholds in any order.
    pub fn new(mut interior: Vec<f64>) -> Result<Self> {
        for &a in &interior {
            if !a.is_finite() {
                return Err(Error::NonFinite(a));
            }
            check_unit(a)?;
        }
        interior.sort_by(f64::total_cmp);
        Ok(Self { interior })
    }

    /// Sorts draws already known to lie in `[0, 1)`.
    pub(crate) fn from_unit_draws(mut interior: Vec<f64>) -> Self {
        debug_assert!(interior.iter().all(|a| (0.0..1.0).contains(a)));
        interior.sort_by(f64::total_cmp);
        Self { interior }
    }

    /// The single-cell quantizer (`K = 1`).
    pub fn trivial() -> Self {
        Self {
            interior: Vec::new(),
        }
    }

    /// Evenly spaced thresholds `k / K`, the optimal `K`-level quantizer for a
    /// uniform source.
    pub fn evenly_spaced(cells: usize) -> Result<Self> {
        if cells == 0 {
            return Err(crate::error::invalid("K", "must be at least 1"));
        }
        let k = cells as f64;
        Ok(Self {
            interior: (1..cells).map(|i| i as f64 / k).collect(),
        })
    }

    /// Sorted interior thresholds `a_1..a_{K-1}`.
    pub fn interior(&self) -> &[f64] {
        &self.interior
    }

    /// Number of cells `K`.
    pub fn cells(&self) -> usize {
        self.interior.len() + 1
    }

    /// Threshold `a_k` for `k` in `0..=K`, including the implicit endpoints.
    pub fn threshold(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else if k == self.cells() {
            1.0
        } else {
            self.interior[k - 1]
        }
    }

    /// Cell `k` (1-based).
    pub fn cell(&self, k: usize) -> Result<Cell> {
        if k == 0 || k > self.cells() {
            return Err(Error::CellIndex {
                index: k,
                cells: self.cells(),
            });
        }
        Ok(Cell {
            index: k,
            left: self.threshold(k - 1),
            right: self.threshold(k),
        })
    }

    pub fn iter_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (1..=self.cells()).map(move |k| Cell {
            index: k,
            left: self.threshold(k - 1),
            right: self.threshold(k),
        })
    }

    /// Cell lengths `a_k - a_{k-1}` for `k = 1..=K`.
    pub fn spacings(&self) -> Vec<f64> {
        self.iter_cells().map(|c| c.length()).collect()
    }

    /// Lossy encoder: the `k` with `a_{k-1} <= x < a_k`. A point on a
    /// threshold belongs to the cell on its right.
    pub fn encode(&self, x: f64) -> Result<usize> {
        check_unit(x)?;
        Ok(self.interior.partition_point(|&a| a <= x) + 1)
    }

    /// Midpoint reproduction decoder.
    pub fn decode(&self, k: usize) -> Result<f64> {
        self.cell(k).map(|c| c.midpoint())
    }

    /// The cell containing `x`.
    pub fn cell_of(&self, x: f64) -> Result<Cell> {
        let k = self.encode(x)?;
        self.cell(k)
    }

    /// Exact mean-squared error of encode-then-decode for `X ~ U[0, 1)`:
    /// `sum_k (a_k - a_{k-1})^3 / 12`.
    pub fn conditional_mse(&self) -> f64 {
        self.iter_cells()
            .map(|c| {
                let len = c.length();
                len * len * len
            })
            .sum::<f64>()
            / 12.0
    }

    /// Exact entropy in bits of the encoder output for `X ~ U[0, 1)`.
    /// Zero-length cells contribute nothing.
    pub fn conditional_entropy(&self) -> f64 {
        self.iter_cells()
            .map(|c| {
                let len = c.length();
                if len > 0.0 {
                    -len * len.log2()
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// Self-information `-log2 P(index)` in bits of the index of `x` under a
    /// uniform source, i.e. `-log2` of the length of the cell containing `x`.
    pub fn self_information(&self, x: f64) -> Result<f64> {
        Ok(-self.cell_of(x)?.length().log2())
    }
}
