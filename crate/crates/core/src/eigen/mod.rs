//! Smallest eigenpairs of S φ = λ B φ for a positive diagonal B.

mod lanczos;
mod stiefel;

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::SparseSymMatrix;

pub use lanczos::{solve_eigs, solve_weighted_eigs, EigOptions};
pub use stiefel::{eig_via_stiefel, trace_energy};

/// Which diagonal matrix the eigenvectors are normalized against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// The lumped mass M.
    Mass,
    /// diag(w²)·M for a conformal factor w.
    Conformal,
    /// Loaded from a file that does not record it.
    Unspecified,
}

/// First k eigenpairs, eigenvalues ascending, eigenvectors B-orthonormal.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigensystem {
    pub values: Vec<f64>,
    /// n×k, one eigenvector per column.
    pub vectors: DMatrix<f64>,
    pub weighting: Weighting,
}

/// How well an eigensystem satisfies its defining equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenDiagnostics {
    /// max |ΦᵀBΦ − I|.
    pub orthonormality: f64,
    /// max over columns of ‖Sφ − λBφ‖ / (1 + λ_max).
    pub relative_residual: f64,
}

impl Eigensystem {
    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn n(&self) -> usize {
        self.vectors.nrows()
    }

    /// The leading `k` pairs.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k > self.k() {
            return Err(Error::InvalidK { k, n: self.k() });
        }
        Ok(Self {
            values: self.values[..k].to_vec(),
            vectors: self.vectors.columns(0, k).into_owned(),
            weighting: self.weighting,
        })
    }

    pub fn diagnostics(&self, s: &SparseSymMatrix, b: &SparseSymMatrix) -> EigenDiagnostics {
        let bd = b.diagonal();
        let phi = &self.vectors;
        let mut bphi = phi.clone();
        for (i, mut row) in bphi.row_iter_mut().enumerate() {
            row *= bd[i];
        }
        let gram = phi.tr_mul(&bphi);
        let orthonormality = (gram - DMatrix::identity(self.k(), self.k())).amax();
        let sphi = s.mul_dense(phi);
        let lmax = self.values.iter().cloned().fold(0.0, f64::max);
        let mut worst = 0.0f64;
        for c in 0..self.k() {
            let r = sphi.column(c) - bphi.column(c) * self.values[c];
            worst = worst.max(r.norm());
        }
        EigenDiagnostics {
            orthonormality,
            relative_residual: worst / (1.0 + lmax),
        }
    }

    /// Binary layout: u64 n, u64 k, k eigenvalues, then Φ column-major; all
    /// little-endian, values as f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let (n, k) = (self.n(), self.k());
        let mut out = Vec::with_capacity(16 + 8 * k * (n + 1));
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&(k as u64).to_le_bytes());
        for v in self.values.iter().chain(self.vectors.as_slice()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: &str| Error::InvalidConfig(format!("malformed eigensystem data: {m}"));
        if bytes.len() < 16 {
            return Err(corrupt("missing header"));
        }
        let word = |i: usize| u64::from_le_bytes(bytes[8 * i..8 * i + 8].try_into().unwrap());
        let (n, k) = (word(0) as usize, word(1) as usize);
        let expected = k
            .checked_mul(n + 1)
            .and_then(|c| c.checked_mul(8))
            .and_then(|c| c.checked_add(16));
        if expected != Some(bytes.len()) {
            return Err(corrupt("length does not match header"));
        }
        let floats: Vec<f64> = bytes[16..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            values: floats[..k].to_vec(),
            vectors: DMatrix::from_column_slice(n, k, &floats[k..]),
            weighting: Weighting::Unspecified,
        })
    }

    pub fn write_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_binary(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// CSV with a header, one row of eigenvalues, then one row per vertex.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row");
        for c in 0..self.k() {
            let _ = write!(out, ",phi{c}");
        }
        out.push_str("\nlambda");
        for v in &self.values {
            let _ = write!(out, ",{v:.16e}");
        }
        out.push('\n');
        for (i, row) in self.vectors.row_iter().enumerate() {
            let _ = write!(out, "{i}");
            for v in row.iter() {
                let _ = write!(out, ",{v:.16e}");
            }
            out.push('\n');
        }
        out
    }
}

/// Flip each column so its first entry of (near-)maximal magnitude is
/// nonnegative.
pub fn normalize_signs(x: &mut DMatrix<f64>) {
    for mut col in x.column_iter_mut() {
        let peak = col.amax();
        if let Some(v) = col.iter().find(|v| v.abs() >= peak * (1.0 - 1e-8)) {
            if *v < 0.0 {
                col.neg_mut();
            }
        }
    }
}
