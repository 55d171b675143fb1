//! Maps between surfaces from aligned spectral bases.

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::io::{format_pairs, read_pairs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMethod {
    /// Nearest target row in spectral-coefficient space.
    SpectralNearest,
    /// Read from a file (e.g. ground truth).
    Given,
}

/// For each source vertex, a target vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Correspondence {
    pub index_map: Vec<usize>,
    pub method: MatchMethod,
    /// Euclidean distance between matched rows, when computed spectrally.
    pub distances: Option<Vec<f64>>,
}

impl Correspondence {
    pub fn identity(n: usize) -> Self {
        Self {
            index_map: (0..n).collect(),
            method: MatchMethod::Given,
            distances: None,
        }
    }

    pub fn len(&self) -> usize {
        self.index_map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_map.is_empty()
    }

    /// From "source target" pairs covering every source vertex exactly once.
    /// Target indices are checked against `target_len`.
    pub fn from_pairs(pairs: &[(usize, usize)], target_len: usize) -> Result<Self> {
        let n = pairs.len();
        let mut map = vec![usize::MAX; n];
        for &(s, t) in pairs {
            if s >= n {
                return Err(Error::IndexOutOfRange { index: s, len: n });
            }
            if t >= target_len {
                return Err(Error::IndexOutOfRange { index: t, len: target_len });
            }
            if map[s] != usize::MAX {
                return Err(Error::dims(format!("source vertex {s} is listed twice")));
            }
            map[s] = t;
        }
        Ok(Self {
            index_map: map,
            method: MatchMethod::Given,
            distances: None,
        })
    }

    pub fn read(path: impl AsRef<Path>, target_len: usize) -> Result<Self> {
        Self::from_pairs(&read_pairs(path)?, target_len)
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.index_map.iter().copied().enumerate().collect()
    }

    /// "source target" lines in source order.
    pub fn to_text(&self) -> String {
        format_pairs(&self.pairs())
    }

    /// Fraction of source vertices mapped to the same index.
    pub fn identity_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let hits = self.index_map.iter().enumerate().filter(|(i, t)| i == *t).count();
        hits as f64 / self.len() as f64
    }
}

/// Match every row of `phi` (source basis) to the Euclidean-nearest row of
/// `psi` (target basis) by exhaustive search; ties go to the lowest index.
pub fn point_to_point(phi: &DMatrix<f64>, psi: &DMatrix<f64>) -> Result<Correspondence> {
    let k = phi.ncols();
    if psi.ncols() != k {
        return Err(Error::dims(format!("source basis has {k} columns, target {}", psi.ncols())));
    }
    if psi.nrows() == 0 || k == 0 {
        return Err(Error::dims("target basis is empty"));
    }
    // Row-major copies keep the inner loop contiguous.
    let rows = |m: &DMatrix<f64>| -> Vec<f64> { m.transpose().as_slice().to_vec() };
    let (src, tgt) = (rows(phi), rows(psi));
    let matches: Vec<(usize, f64)> = src
        .par_chunks(k)
        .map(|a| {
            let mut best = (0, f64::INFINITY);
            for (j, b) in tgt.chunks(k).enumerate() {
                let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                if d < best.1 {
                    best = (j, d);
                }
            }
            best
        })
        .collect();
    Ok(Correspondence {
        index_map: matches.iter().map(|m| m.0).collect(),
        method: MatchMethod::SpectralNearest,
        distances: Some(matches.iter().map(|m| m.1.sqrt()).collect()),
    })
}

/// Transfer source functions (columns of `h`) to the target: Ψ*(ΦᵀM₁h).
pub fn functional_map_apply(h: &DMatrix<f64>, phi: &DMatrix<f64>, m1: &[f64], psi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n1 = m1.len();
    if h.nrows() != n1 || phi.nrows() != n1 {
        return Err(Error::dims(format!(
            "source mass has {n1} entries, function {} rows, basis {} rows",
            h.nrows(),
            phi.nrows()
        )));
    }
    if psi.ncols() != phi.ncols() {
        return Err(Error::dims(format!(
            "source basis has {} columns, target {}",
            phi.ncols(),
            psi.ncols()
        )));
    }
    let mh = DMatrix::from_fn(n1, h.ncols(), |i, c| m1[i] * h[(i, c)]);
    Ok(psi * phi.tr_mul(&mh))
}
