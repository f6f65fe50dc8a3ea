//! Eigendecomposition of the discrete operator, multiplicity clusters,
//! eigenprojections and spectral function calculus.
//!
//! For a symmetric operator the contour-integral (Riesz) projection onto an
//! isolated eigenvalue coincides with the orthogonal projection onto its
//! eigenspace, so `P_k a = sum_{j in cluster k} (v_j, a) v_j` with
//! eigenvectors orthonormal in the trapezoidal `L^2` inner product.

mod jacobi;

use std::io::Write;

use thiserror::Error;

pub use jacobi::{jacobi_eigen, JacobiOutput, JacobiStall, MAX_SWEEPS};

use crate::fmt::g17;
use crate::mesh::{OperatorMatrix, ScalarField};

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("Jacobi iteration did not converge after {sweeps} sweeps (worst off-diagonal {worst:e})")]
    NoConvergence { sweeps: usize, worst: f64 },
    #[error("cluster index {index} out of range ({count} clusters)")]
    InvalidCluster { index: usize, count: usize },
    #[error("field length {got} does not match decomposition size {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("spectral function overflow on cluster {cluster} (eigenvalue {eigenvalue}): |f|*|P_k a| = {magnitude:e}")]
    Overflow { cluster: usize, eigenvalue: f64, magnitude: f64 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Cap on `|f(lambda_k)| * |P_k a|` accepted by [`spectral_apply`].
pub const OVERFLOW_CAP: f64 = 1e300;

/// Group of (near-)equal eigenvalues treated as one eigenspace.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    /// Mean of the member eigenvalues.
    pub representative: f64,
    /// Indices into the ascending eigenvalue list.
    pub members: std::ops::Range<usize>,
}

impl Cluster {
    pub fn multiplicity(&self) -> usize {
        self.members.len()
    }
}

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    /// `L^2`-orthonormal eigenvectors, one per eigenvalue.
    vectors: Vec<Vec<f64>>,
    clusters: Vec<Cluster>,
    cluster_tol: f64,
    /// Trapezoidal quadrature weights of the grid.
    quadrature: Vec<f64>,
}

/// Full decomposition of the operator.
///
/// `cluster_tol` defaults to `1e-6 * max |lambda|`.
pub fn eigendecompose(
    op: &OperatorMatrix,
    cell_volume: f64,
    cluster_tol: Option<f64>,
) -> Result<SpectralDecomposition, SpectralError> {
    let n = op.dim();
    let out = jacobi_eigen(op.symmetric_dense(), n).map_err(|stall| {
        SpectralError::NoConvergence { sweeps: stall.sweeps, worst: stall.worst_off_diagonal }
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| out.values[i].total_cmp(&out.values[j]));

    let quadrature: Vec<f64> = op.weights().iter().map(|w| w * cell_volume).collect();
    let scale: Vec<f64> = quadrature.iter().map(|q| 1.0 / q.sqrt()).collect();
    let eigenvalues: Vec<f64> = order.iter().map(|&i| out.values[i]).collect();
    let vectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| {
            let row = &out.vectors[i * n..(i + 1) * n];
            let mut v: Vec<f64> = row.iter().zip(&scale).map(|(q, s)| q * s).collect();
            // deterministic sign: largest-magnitude entry positive
            let pivot = v
                .iter()
                .copied()
                .fold(0.0_f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if pivot < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();

    let max_abs = eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let cluster_tol = cluster_tol.unwrap_or(1e-6 * max_abs);
    let clusters = build_clusters(&eigenvalues, cluster_tol);
    Ok(SpectralDecomposition { eigenvalues, vectors, clusters, cluster_tol, quadrature })
}

/// Lowest eigenvalue of the operator (for the coercive shift).
///
/// Uses a tridiagonal QR eigenvalue solve rather than Jacobi since only the
/// values are needed.
pub fn lowest_eigenvalue(op: &OperatorMatrix) -> Result<f64, SpectralError> {
    const MAX_ITERATIONS: usize = 10_000;
    let n = op.dim();
    let m = nalgebra::DMatrix::from_row_slice(n, n, &op.symmetric_dense());
    let eig = nalgebra::SymmetricEigen::try_new(m, f64::EPSILON, MAX_ITERATIONS)
        .ok_or(SpectralError::NoConvergence { sweeps: MAX_ITERATIONS, worst: f64::NAN })?;
    Ok(eig.eigenvalues.iter().fold(f64::INFINITY, |a, b| a.min(*b)))
}

fn build_clusters(sorted: &[f64], tol: f64) -> Vec<Cluster> {
    let mut clusters = Vec::new();
    let mut start = 0;
    for j in 1..=sorted.len() {
        if j == sorted.len() || sorted[j] - sorted[start] > tol {
            let members = start..j;
            let representative =
                sorted[members.clone()].iter().sum::<f64>() / members.len() as f64;
            clusters.push(Cluster { representative, members });
            start = j;
        }
    }
    clusters
}

impl SpectralDecomposition {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvector(&self, j: usize) -> &[f64] {
        &self.vectors[j]
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn cluster_tol(&self) -> f64 {
        self.cluster_tol
    }

    pub fn quadrature(&self) -> &[f64] {
        &self.quadrature
    }

    /// Cluster representatives, ascending.
    pub fn cluster_values(&self) -> Vec<f64> {
        self.clusters.iter().map(|c| c.representative).collect()
    }

    /// Cluster index containing eigenvalue index `j`.
    pub fn cluster_of(&self, j: usize) -> usize {
        self.clusters
            .iter()
            .position(|c| c.members.contains(&j))
            .expect("every eigenvalue belongs to a cluster")
    }

    /// `(u, v)` in the trapezoidal `L^2` inner product.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.quadrature
            .iter()
            .zip(u.iter().zip(v))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).sqrt()
    }

    /// The same decomposition for the operator shifted by `+delta`.
    pub fn shifted(&self, delta: f64) -> SpectralDecomposition {
        let mut out = self.clone();
        out.eigenvalues.iter_mut().for_each(|l| *l += delta);
        out.clusters.iter_mut().for_each(|c| c.representative += delta);
        out
    }

    /// Expansion coefficients `(v_j, a)` for every eigenvector.
    pub fn coefficients(&self, a: &[f64]) -> Result<Vec<f64>, SpectralError> {
        self.check_len(a.len())?;
        Ok(self.vectors.iter().map(|v| self.inner(v, a)).collect())
    }

    /// Field `sum_j coeffs[j] v_j`.
    pub fn synthesize(&self, coeffs: &[f64]) -> ScalarField {
        let n = self.len();
        let mut out = vec![0.0; n];
        for (c, v) in coeffs.iter().zip(&self.vectors) {
            if *c == 0.0 {
                continue;
            }
            for (o, x) in out.iter_mut().zip(v) {
                *o += c * x;
            }
        }
        ScalarField::from_vec(out)
    }

    fn check_len(&self, got: usize) -> Result<(), SpectralError> {
        if got != self.len() {
            return Err(SpectralError::LengthMismatch { expected: self.len(), got });
        }
        Ok(())
    }

    fn check_cluster(&self, k: usize) -> Result<&Cluster, SpectralError> {
        self.clusters
            .get(k)
            .ok_or(SpectralError::InvalidCluster { index: k, count: self.clusters.len() })
    }

    /// Writes `index,eigenvalue,cluster` rows.
    pub fn write_eigenvalues_csv<W: Write>(&self, out: &mut W) -> Result<(), SpectralError> {
        writeln!(out, "index,eigenvalue,cluster")?;
        for (k, c) in self.clusters.iter().enumerate() {
            for j in c.members.clone() {
                writeln!(out, "{j},{},{k}", g17(self.eigenvalues[j]))?;
            }
        }
        Ok(())
    }

    /// Writes `cluster,representative,multiplicity,first,last` rows.
    pub fn write_clusters_csv<W: Write>(&self, out: &mut W) -> Result<(), SpectralError> {
        writeln!(out, "cluster,representative,multiplicity,first,last")?;
        for (k, c) in self.clusters.iter().enumerate() {
            writeln!(
                out,
                "{k},{},{},{},{}",
                g17(c.representative),
                c.multiplicity(),
                c.members.start,
                c.members.end - 1
            )?;
        }
        Ok(())
    }
}

/// `P_k a`: orthogonal projection onto the eigenspace of cluster `k`.
pub fn project(
    dec: &SpectralDecomposition,
    k: usize,
    a: &ScalarField,
) -> Result<ScalarField, SpectralError> {
    let cluster = dec.check_cluster(k)?.clone();
    dec.check_len(a.len())?;
    let mut coeffs = vec![0.0; dec.len()];
    for j in cluster.members {
        coeffs[j] = dec.inner(&dec.vectors[j], a.values());
    }
    Ok(dec.synthesize(&coeffs))
}

/// `f(A) a = sum_k f(lambda) P_k a`, evaluated eigenpair by eigenpair.
///
/// Fails with [`SpectralError::Overflow`] instead of producing non-finite
/// values when `|f(lambda)| |P_k a|` exceeds [`OVERFLOW_CAP`].
pub fn spectral_apply(
    dec: &SpectralDecomposition,
    f: impl Fn(f64) -> f64,
    a: &ScalarField,
) -> Result<ScalarField, SpectralError> {
    spectral_apply_masked(dec, f, a, None)
}

/// [`spectral_apply`] restricted to the clusters flagged in `retain`.
pub fn spectral_apply_masked(
    dec: &SpectralDecomposition,
    f: impl Fn(f64) -> f64,
    a: &ScalarField,
    retain: Option<&[bool]>,
) -> Result<ScalarField, SpectralError> {
    let coeffs = dec.coefficients(a.values())?;
    let mut scaled = vec![0.0; dec.len()];
    for (k, cluster) in dec.clusters.iter().enumerate() {
        if let Some(mask) = retain {
            if !mask[k] {
                continue;
            }
        }
        let norm = cluster.members.clone().map(|j| coeffs[j] * coeffs[j]).sum::<f64>().sqrt();
        for j in cluster.members.clone() {
            let fj = f(dec.eigenvalues[j]);
            let magnitude = fj.abs() * norm;
            if norm > 0.0 && !(magnitude <= OVERFLOW_CAP) {
                return Err(SpectralError::Overflow {
                    cluster: k,
                    eigenvalue: dec.eigenvalues[j],
                    magnitude,
                });
            }
            scaled[j] = fj * coeffs[j];
        }
    }
    Ok(dec.synthesize(&scaled))
}

/// `||P_k a||^2` for every cluster (discrete Parseval: they sum to `||a||^2`).
pub fn mode_norms(dec: &SpectralDecomposition, a: &ScalarField) -> Result<Vec<f64>, SpectralError> {
    let coeffs = dec.coefficients(a.values())?;
    Ok(dec
        .clusters
        .iter()
        .map(|c| c.members.clone().map(|j| coeffs[j] * coeffs[j]).sum())
        .collect())
}
