//! Observational data model shared by all estimators.
//!
//! A [`Sample`] holds four parallel columns: a real outcome `y`, a binary
//! treatment `d`, and two binary instruments `z` and `w`. Validation is eager
//! and total: a `Sample` can only be constructed through [`Sample::new`], so
//! every downstream operation may assume the invariants without re-checking.
//! The struct is immutable after construction and safe to share across
//! threads.

use thiserror::Error;

use crate::kahan::KahanSum;

/// Validation failures for raw column data.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SampleError {
    #[error("column lengths differ: y={y}, d={d}, z={z}, w={w}")]
    LengthMismatch { y: usize, d: usize, z: usize, w: usize },
    #[error("column {column} has non-binary value {value} at row {row} (1-based)")]
    NonBinary {
        column: &'static str,
        row: usize,
        value: u8,
    },
    #[error("outcome y is not finite at row {row} (1-based)")]
    NonFinite { row: usize },
    #[error("sample contains no observations")]
    Empty,
}

/// Immutable columnar dataset of (Y, D, Z, W) observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    y: Vec<f64>,
    d: Vec<u8>,
    z: Vec<u8>,
    w: Vec<u8>,
}

impl Sample {
    /// Validates raw columns and constructs the sample.
    ///
    /// Requires equal lengths, at least one observation, strictly {0,1}
    /// coding for `d`/`z`/`w`, and finite `y` values. Truthy values other
    /// than literal 0/1 are rejected rather than coerced.
    pub fn new(y: Vec<f64>, d: Vec<u8>, z: Vec<u8>, w: Vec<u8>) -> Result<Self, SampleError> {
        if y.len() != d.len() || y.len() != z.len() || y.len() != w.len() {
            return Err(SampleError::LengthMismatch {
                y: y.len(),
                d: d.len(),
                z: z.len(),
                w: w.len(),
            });
        }
        if y.is_empty() {
            return Err(SampleError::Empty);
        }
        for (column, values) in [("d", &d), ("z", &z), ("w", &w)] {
            if let Some((i, &value)) = values.iter().enumerate().find(|(_, &v)| v > 1) {
                return Err(SampleError::NonBinary {
                    column,
                    row: i + 1,
                    value,
                });
            }
        }
        if let Some((i, _)) = y.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(SampleError::NonFinite { row: i + 1 });
        }
        Ok(Self { y, d, z, w })
    }

    /// Builds a sample from `(y, d, z, w)` rows.
    pub fn from_rows<I>(rows: I) -> Result<Self, SampleError>
    where
        I: IntoIterator<Item = (f64, u8, u8, u8)>,
    {
        let mut y = Vec::new();
        let mut d = Vec::new();
        let mut z = Vec::new();
        let mut w = Vec::new();
        for (yi, di, zi, wi) in rows {
            y.push(yi);
            d.push(di);
            z.push(zi);
            w.push(wi);
        }
        Self::new(y, d, z, w)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn d(&self) -> &[u8] {
        &self.d
    }

    pub fn z(&self) -> &[u8] {
        &self.z
    }

    pub fn w(&self) -> &[u8] {
        &self.w
    }

    /// Rows with `w == value`, preserving order. Used by the subsample
    /// equivalence between the conditional Wald ratio and its product-moment
    /// form.
    pub fn restrict_w(&self, value: u8) -> Result<Self, SampleError> {
        let keep: Vec<usize> = (0..self.n()).filter(|&i| self.w[i] == value).collect();
        Self::new(
            keep.iter().map(|&i| self.y[i]).collect(),
            keep.iter().map(|&i| self.d[i]).collect(),
            keep.iter().map(|&i| self.z[i]).collect(),
            keep.iter().map(|&i| self.w[i]).collect(),
        )
    }
}

/// Exact contingency counts per (z, w) cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellCounts {
    /// Observations in each cell, indexed `count[z][w]`.
    pub count: [[usize; 2]; 2],
    /// Treated observations in each cell.
    pub treated_count: [[usize; 2]; 2],
}

/// Tallies the (z, w) contingency table and treated counts within each cell.
///
/// Pure integer bookkeeping: the same sample always yields identical counts,
/// `sum(count) == n`, and `sum(treated_count) == sum(d)`.
pub fn cell_counts(sample: &Sample) -> CellCounts {
    let mut count = [[0usize; 2]; 2];
    let mut treated_count = [[0usize; 2]; 2];
    for i in 0..sample.n() {
        let z = sample.z[i] as usize;
        let w = sample.w[i] as usize;
        count[z][w] += 1;
        treated_count[z][w] += sample.d[i] as usize;
    }
    CellCounts {
        count,
        treated_count,
    }
}

/// Single-pass per-cell moment sums, the shared backbone of every estimator.
///
/// `sum_y` and `sum_yd` are Kahan-compensated; counts and treated counts are
/// exact integers.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CellMoments {
    pub n: usize,
    pub count: [[usize; 2]; 2],
    pub sum_d: [[u64; 2]; 2],
    pub sum_y: [[f64; 2]; 2],
    pub sum_yd: [[f64; 2]; 2],
}

impl CellMoments {
    pub fn from_sample(sample: &Sample) -> Self {
        let mut count = [[0usize; 2]; 2];
        let mut sum_d = [[0u64; 2]; 2];
        let mut y_acc = [[KahanSum::new(); 2]; 2];
        let mut yd_acc = [[KahanSum::new(); 2]; 2];
        for i in 0..sample.n() {
            let z = sample.z[i] as usize;
            let w = sample.w[i] as usize;
            count[z][w] += 1;
            sum_d[z][w] += sample.d[i] as u64;
            y_acc[z][w].add(sample.y[i]);
            if sample.d[i] == 1 {
                yd_acc[z][w].add(sample.y[i]);
            }
        }
        let collect = |acc: [[KahanSum; 2]; 2]| {
            [
                [acc[0][0].value(), acc[0][1].value()],
                [acc[1][0].value(), acc[1][1].value()],
            ]
        };
        Self {
            n: sample.n(),
            count,
            sum_d,
            sum_y: collect(y_acc),
            sum_yd: collect(yd_acc),
        }
    }

    /// Count of observations with Z = z across both w cells.
    pub fn count_z(&self, z: usize) -> usize {
        self.count[z][0] + self.count[z][1]
    }

    /// Sample mean of Z.
    pub fn z_bar(&self) -> f64 {
        self.count_z(1) as f64 / self.n as f64
    }
}
