//! Forward solvers: the parabolic problem `u_t + A u = 0` (spectral and
//! Crank–Nicolson), the elliptic evolution `w = cosh(t sqrt(A)) a`, and
//! boundary traces on `gamma`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::fmt::g17;
use crate::mesh::{BoundaryMask, Grid, OperatorMatrix, ScalarField};
use crate::spectral::{spectral_apply_masked, SpectralDecomposition, SpectralError, OVERFLOW_CAP};

#[derive(Debug, Error)]
pub enum ForwardError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("time step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("sample times must be positive and strictly increasing")]
    BadTimes,
    #[error("Crank-Nicolson system matrix is not positive definite (dt = {dt})")]
    LinearSolve { dt: f64 },
    #[error("tau = {tau} exceeds the admissible bound {tau_max} for this initial value")]
    TauTooLarge { tau: f64, tau_max: f64 },
    #[error("{0}")]
    Mismatch(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Modes with `||P_k a|| <= RETAIN_TOL * ||a||` are treated as absent in the
/// elliptic evolution (they are round-off and `cosh` would amplify them).
pub const RETAIN_TOL: f64 = 1e-12;

fn check_times(times: &[f64], allow_zero: bool) -> Result<(), ForwardError> {
    let ok_first = times.first().is_none_or(|&t| if allow_zero { t >= 0.0 } else { t > 0.0 });
    if !ok_first || times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite())
    {
        return Err(ForwardError::BadTimes);
    }
    Ok(())
}

/// `count` logarithmically spaced times from `first` to `last` inclusive.
pub fn log_spaced_times(first: f64, last: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![last];
    }
    let (l0, l1) = (first.ln(), last.ln());
    (0..count)
        .map(|i| {
            if i == 0 {
                first
            } else if i + 1 == count {
                last
            } else {
                (l0 + (l1 - l0) * i as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}

/// `u(t) = sum_k e^{-lambda_k t} P_k a` at each requested time.
pub fn solve_parabolic_spectral(
    dec: &SpectralDecomposition,
    a: &ScalarField,
    times: &[f64],
) -> Result<Vec<ScalarField>, ForwardError> {
    check_times(times, false)?;
    let coeffs = dec.coefficients(a.values())?;
    Ok(times
        .iter()
        .map(|&t| {
            let scaled: Vec<f64> = coeffs
                .iter()
                .zip(dec.eigenvalues())
                .map(|(c, l)| c * (-t * l).exp())
                .collect();
            dec.synthesize(&scaled)
        })
        .collect())
}

/// Factorized Crank–Nicolson stepper for `W u_t + K u = 0`.
pub struct CrankNicolson {
    dt: f64,
    factor: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    explicit: DMatrix<f64>,
}

impl CrankNicolson {
    pub fn new(op: &OperatorMatrix, dt: f64) -> Result<Self, ForwardError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(ForwardError::BadStep(dt));
        }
        let n = op.dim();
        let mut implicit = DMatrix::zeros(n, n);
        let mut explicit = DMatrix::zeros(n, n);
        for i in 0..n {
            implicit[(i, i)] = op.weights()[i];
            explicit[(i, i)] = op.weights()[i];
            for (j, v) in op.row(i) {
                implicit[(i, j)] += 0.5 * dt * v;
                explicit[(i, j)] -= 0.5 * dt * v;
            }
        }
        let factor = implicit.cholesky().ok_or(ForwardError::LinearSolve { dt })?;
        Ok(CrankNicolson { dt, factor, explicit })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, u: &DVector<f64>) -> DVector<f64> {
        self.factor.solve(&(&self.explicit * u))
    }
}

/// Crank–Nicolson snapshots at `dt, 2 dt, ...` up to `t_end` (the step count is
/// `round(t_end / dt)`).
pub fn solve_parabolic_cn(
    op: &OperatorMatrix,
    a: &ScalarField,
    dt: f64,
    t_end: f64,
) -> Result<Vec<ScalarField>, ForwardError> {
    let stepper = CrankNicolson::new(op, dt)?;
    let steps = (t_end / dt).round() as usize;
    let mut u = DVector::from_column_slice(a.values());
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        u = stepper.step(&u);
        out.push(ScalarField::from_vec(u.as_slice().to_vec()));
    }
    Ok(out)
}

/// Snaps sample times to the nearest positive multiple of `dt`, dropping duplicates.
pub fn snap_times(times: &[f64], dt: f64) -> Vec<f64> {
    let mut steps: Vec<usize> =
        times.iter().map(|t| ((t / dt).round() as usize).max(1)).collect();
    steps.dedup();
    steps.into_iter().map(|k| k as f64 * dt).collect()
}

/// Crank–Nicolson snapshots at the given times, which must be multiples of
/// `dt` (see [`snap_times`]).
pub fn solve_parabolic_cn_at(
    op: &OperatorMatrix,
    a: &ScalarField,
    dt: f64,
    times: &[f64],
) -> Result<Vec<ScalarField>, ForwardError> {
    check_times(times, false)?;
    let stepper = CrankNicolson::new(op, dt)?;
    let mut u = DVector::from_column_slice(a.values());
    let mut done = 0usize;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let target = (t / dt).round() as usize;
        while done < target {
            u = stepper.step(&u);
            done += 1;
        }
        out.push(ScalarField::from_vec(u.as_slice().to_vec()));
    }
    Ok(out)
}

/// Snapshots of `w(t) = cosh(t sqrt(A)) a` on `[0, tau]`.
#[derive(Debug, Clone)]
pub struct EllipticEvolution {
    pub times: Vec<f64>,
    pub snapshots: Vec<ScalarField>,
    pub tau: f64,
    /// Per-cluster flag: mode present in `a`.
    pub retained: Vec<bool>,
}

impl EllipticEvolution {
    /// Even reflection to `(-tau, tau)`: times and snapshots for `-t_i`
    /// prepended in reverse order (a zero time appears once).
    pub fn even_extension(&self) -> (Vec<f64>, Vec<ScalarField>) {
        let mut times = Vec::new();
        let mut snaps = Vec::new();
        for (t, w) in self.times.iter().zip(&self.snapshots).rev() {
            if *t > 0.0 {
                times.push(-t);
                snaps.push(w.clone());
            }
        }
        times.extend_from_slice(&self.times);
        snaps.extend(self.snapshots.iter().cloned());
        (times, snaps)
    }
}

/// Clusters with `||P_k a|| > RETAIN_TOL * ||a||`.
pub fn retained_clusters(dec: &SpectralDecomposition, a: &ScalarField) -> Result<Vec<bool>, ForwardError> {
    let norms = crate::spectral::mode_norms(dec, a)?;
    let total: f64 = norms.iter().sum::<f64>().sqrt();
    Ok(norms.iter().map(|n| n.sqrt() > RETAIN_TOL * total && *n > 0.0).collect())
}

/// Largest `tau` with `cosh(tau sqrt(lambda_k)) ||P_k a|| <= 1e300` over the
/// retained modes (`f64::INFINITY` when `a = 0`).
pub fn max_admissible_tau(dec: &SpectralDecomposition, a: &ScalarField) -> Result<f64, ForwardError> {
    let norms = crate::spectral::mode_norms(dec, a)?;
    let retained = retained_clusters(dec, a)?;
    let mut tau_max = f64::INFINITY;
    for (k, c) in dec.clusters().iter().enumerate() {
        if !retained[k] {
            continue;
        }
        let top = dec.eigenvalues()[c.members.end - 1];
        if top <= 0.0 {
            continue;
        }
        let bound = (OVERFLOW_CAP / norms[k].sqrt()).acosh() / top.sqrt();
        tau_max = tau_max.min(bound);
    }
    Ok(tau_max)
}

/// `w(t) = cosh(t sqrt(A)) a` at `times` in `[0, tau]`.
pub fn solve_elliptic_evolution(
    dec: &SpectralDecomposition,
    a: &ScalarField,
    times: &[f64],
    tau: f64,
) -> Result<EllipticEvolution, ForwardError> {
    check_times(times, true)?;
    if times.last().is_some_and(|&t| t > tau) {
        return Err(ForwardError::Mismatch(format!("sample time beyond tau = {tau}")));
    }
    let tau_max = max_admissible_tau(dec, a)?;
    if tau > tau_max {
        return Err(ForwardError::TauTooLarge { tau, tau_max });
    }
    let retained = retained_clusters(dec, a)?;
    let snapshots = times
        .iter()
        .map(|&t| elliptic_at(dec, a, t, &retained))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EllipticEvolution { times: times.to_vec(), snapshots, tau, retained })
}

/// `cosh(t sqrt(A)) a` restricted to the retained clusters; `t` may be negative.
pub fn elliptic_at(
    dec: &SpectralDecomposition,
    a: &ScalarField,
    t: f64,
    retained: &[bool],
) -> Result<ScalarField, ForwardError> {
    Ok(spectral_apply_masked(dec, |l| (t * l.max(0.0).sqrt()).cosh(), a, Some(retained))?)
}

/// Measured Dirichlet data on `gamma` at each sample time.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSeries {
    pub times: Vec<f64>,
    /// `values[i][j]`: time `i`, `gamma` node `j`.
    pub values: Vec<Vec<f64>>,
    pub nodes: Vec<usize>,
    pub coords: Vec<[f64; 2]>,
    pub dim: usize,
}

impl TraceSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `max |self - other|` over all times and nodes.
    pub fn max_discrepancy(&self, other: &TraceSeries) -> Result<f64, ForwardError> {
        if self.nodes != other.nodes || self.times.len() != other.times.len() {
            return Err(ForwardError::Mismatch("trace series have different layouts".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max))
    }

    /// Per-time `max_j |self - other|`.
    pub fn discrepancy_by_time(&self, other: &TraceSeries) -> Result<Vec<f64>, ForwardError> {
        if self.nodes != other.nodes || self.times.len() != other.times.len() {
            return Err(ForwardError::Mismatch("trace series have different layouts".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
            .collect())
    }

    /// Header of node coordinates (`x` or `x;y`), then one row per time.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<(), ForwardError> {
        let mut header = String::from("time");
        for c in &self.coords {
            header.push(',');
            if self.dim == 2 {
                header.push_str(&format!("{};{}", g17(c[0]), g17(c[1])));
            } else {
                header.push_str(&g17(c[0]));
            }
        }
        writeln!(out, "{header}")?;
        for (t, row) in self.times.iter().zip(&self.values) {
            let mut line = g17(*t);
            for v in row {
                line.push(',');
                line.push_str(&g17(*v));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Restriction of each snapshot to the `gamma` nodes (no interpolation).
pub fn trace_on_gamma(
    grid: &Grid,
    snapshots: &[ScalarField],
    mask: &BoundaryMask,
    times: &[f64],
) -> Result<TraceSeries, ForwardError> {
    if snapshots.len() != times.len() {
        return Err(ForwardError::Mismatch(format!(
            "{} snapshots for {} times",
            snapshots.len(),
            times.len()
        )));
    }
    if let Some(bad) = mask.nodes().iter().find(|&&n| n >= grid.len() || !grid.is_boundary(n)) {
        return Err(ForwardError::Mismatch(format!("mask node {bad} is not a boundary node")));
    }
    if let Some(s) = snapshots.iter().find(|s| s.len() != grid.len()) {
        return Err(ForwardError::Mismatch(format!(
            "snapshot has {} values, grid has {} nodes",
            s.len(),
            grid.len()
        )));
    }
    let nodes = mask.nodes().to_vec();
    Ok(TraceSeries {
        times: times.to_vec(),
        values: snapshots
            .iter()
            .map(|s| nodes.iter().map(|&n| s.values()[n]).collect())
            .collect(),
        coords: nodes.iter().map(|&n| grid.coords(n)).collect(),
        nodes,
        dim: grid.dim(),
    })
}
