//! Spectral decay conditions on initial data and the per-mode bound that
//! transfers decay from one operator's projections to the other's.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::fmt::g17;
use crate::mesh::{BoundaryMask, Grid, ScalarField};
use crate::spectral::{project, SpectralDecomposition, SpectralError};

#[derive(Debug, Error)]
pub enum DecayError {
    #[error("{0} norms for {1} eigenvalues")]
    LengthMismatch(usize, usize),
    #[error("eigenvalues are not ascending at index {0}")]
    NotAscending(usize),
    #[error("theta = eta^{0} grows no faster than eta^(2/3)")]
    InadmissibleTheta(f64),
    #[error("invalid theta table: {0}")]
    BadTable(String),
    #[error("audit constants missing or invalid: {0}")]
    MissingConstants(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Modes with `|P_k a|^2` below this fraction of the largest are inactive.
pub const ACTIVE_FLOOR: f64 = 1e-24;

/// Growth exponent `theta(eta)`.
#[derive(Debug, Clone, PartialEq)]
pub enum ThetaSpec {
    /// `eta^p`.
    Power(f64),
    /// Piecewise linear through `(eta, theta)` pairs, extended linearly.
    Tabulated(Vec<(f64, f64)>),
}

impl ThetaSpec {
    pub fn eval(&self, eta: f64) -> f64 {
        match self {
            ThetaSpec::Power(p) => eta.powf(*p),
            ThetaSpec::Tabulated(t) => {
                let seg = t.windows(2).position(|w| eta <= w[1].0).unwrap_or(t.len() - 2);
                let (x0, y0) = t[seg];
                let (x1, y1) = t[seg + 1];
                y0 + (y1 - y0) * (eta - x0) / (x1 - x0)
            }
        }
    }

    /// Whether `theta(eta) / eta^(2/3)` grows without bound. For a table the
    /// proxy is a strictly increasing ratio over the upper half of the table.
    pub fn is_superlinear(&self) -> bool {
        match self {
            ThetaSpec::Power(p) => *p > 2.0 / 3.0,
            ThetaSpec::Tabulated(t) => {
                let ratios: Vec<f64> = t.iter().map(|(x, y)| y / x.powf(2.0 / 3.0)).collect();
                ratios[ratios.len() / 2..].windows(2).all(|w| w[1] > w[0])
            }
        }
    }

    fn validate(&self) -> Result<(), DecayError> {
        match self {
            ThetaSpec::Power(p) if *p <= 2.0 / 3.0 => Err(DecayError::InadmissibleTheta(*p)),
            ThetaSpec::Power(_) => Ok(()),
            ThetaSpec::Tabulated(t) => {
                if t.len() < 2 {
                    return Err(DecayError::BadTable("need at least two points".into()));
                }
                if t.windows(2).any(|w| w[1].0 <= w[0].0) || t[0].0 <= 0.0 {
                    return Err(DecayError::BadTable("abscissae must be positive and increasing".into()));
                }
                Ok(())
            }
        }
    }
}

/// Weight applied to `|P_k a|^2` in a decay sum.
#[derive(Debug, Clone, PartialEq)]
pub enum DecayWeight {
    /// `exp(theta(lambda))`.
    Theta(ThetaSpec),
    /// `exp(sigma lambda)`.
    Linear { sigma: f64 },
    /// `exp(sigma sqrt(lambda))`.
    SquareRoot { sigma: f64 },
}

impl DecayWeight {
    pub fn exponent(&self, lambda: f64) -> f64 {
        match self {
            DecayWeight::Theta(t) => t.eval(lambda),
            DecayWeight::Linear { sigma } => sigma * lambda,
            DecayWeight::SquareRoot { sigma } => sigma * lambda.sqrt(),
        }
    }

    pub fn name(&self) -> String {
        match self {
            DecayWeight::Theta(ThetaSpec::Power(p)) => format!("theta=eta^{}", g17(*p)),
            DecayWeight::Theta(ThetaSpec::Tabulated(_)) => "theta=table".into(),
            DecayWeight::Linear { sigma } => format!("exp(sigma*lambda),sigma={}", g17(*sigma)),
            DecayWeight::SquareRoot { sigma } => format!("exp(sigma*sqrt(lambda)),sigma={}", g17(*sigma)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    pub weight: DecayWeight,
    pub eigenvalues: Vec<f64>,
    pub norms: Vec<f64>,
    /// `ln(exp(w(lambda_k)) |P_k a|^2)`, `-inf` for vanishing modes.
    pub ln_terms: Vec<f64>,
    pub partial_sums: Vec<f64>,
    pub active: Vec<usize>,
    /// Slope of `ln term` against mode index over the upper half of the
    /// active modes; `None` with fewer than three such modes.
    pub trend_slope: Option<f64>,
    pub superlinear: bool,
    pub pass: bool,
}

impl DecayReport {
    pub fn total(&self) -> f64 {
        self.partial_sums.last().copied().unwrap_or(0.0)
    }

    /// One row per mode, then `summary` and `trend_slope` rows.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "row,eigenvalue,norm2,ln_weighted,partial_sum,status")?;
        for k in 0..self.norms.len() {
            let status = if self.active.binary_search(&k).is_ok() { "active" } else { "inactive" };
            writeln!(
                out,
                "{},{},{},{},{},{}",
                k,
                g17(self.eigenvalues[k]),
                g17(self.norms[k]),
                g17(self.ln_terms[k]),
                g17(self.partial_sums[k]),
                status
            )?;
        }
        writeln!(out, "summary,,,,{},{}", g17(self.total()), if self.pass { "pass" } else { "fail" })?;
        let slope = self.trend_slope.map(g17).unwrap_or_default();
        writeln!(out, "trend_slope,,,,{},{}", slope, self.weight.name())
    }
}

fn check_inputs(norms: &[f64], eigenvalues: &[f64]) -> Result<(), DecayError> {
    if norms.len() != eigenvalues.len() {
        return Err(DecayError::LengthMismatch(norms.len(), eigenvalues.len()));
    }
    if let Some(i) = eigenvalues.windows(2).position(|w| w[1] < w[0]) {
        return Err(DecayError::NotAscending(i + 1));
    }
    Ok(())
}

/// Indices with `norm > ACTIVE_FLOOR * max norm`.
pub fn active_modes(norms: &[f64]) -> Vec<usize> {
    let top = norms.iter().fold(0.0_f64, |m, v| m.max(*v));
    (0..norms.len()).filter(|&k| norms[k] > ACTIVE_FLOOR * top && top > 0.0).collect()
}

/// Least-squares slope of `ln_terms[k]` against `k` over the upper half of
/// `active`.
pub fn trend_slope(ln_terms: &[f64], active: &[usize]) -> Option<f64> {
    let upper = &active[active.len() / 2..];
    if upper.len() < 3 {
        return None;
    }
    let m = upper.len() as f64;
    let mx = upper.iter().map(|&k| k as f64).sum::<f64>() / m;
    let my = upper.iter().map(|&k| ln_terms[k]).sum::<f64>() / m;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &k in upper {
        let dx = k as f64 - mx;
        sxy += dx * (ln_terms[k] - my);
        sxx += dx * dx;
    }
    Some(sxy / sxx)
}

/// Evaluates `sum_k exp(w(lambda_k)) |P_k a|^2` with a decay-trend verdict.
///
/// A `Theta` weight with `theta = eta^p`, `p <= 2/3`, is rejected.
pub fn check_condition(norms: &[f64], eigenvalues: &[f64], weight: &DecayWeight) -> Result<DecayReport, DecayError> {
    check_inputs(norms, eigenvalues)?;
    let superlinear = match weight {
        DecayWeight::Theta(t) => {
            t.validate()?;
            t.is_superlinear()
        }
        _ => true,
    };
    let ln_terms: Vec<f64> = norms
        .iter()
        .zip(eigenvalues)
        .map(|(n, l)| if *n > 0.0 { weight.exponent(*l) + n.ln() } else { f64::NEG_INFINITY })
        .collect();
    let mut acc = 0.0;
    let partial_sums: Vec<f64> = ln_terms
        .iter()
        .map(|t| {
            acc += t.exp();
            acc
        })
        .collect();
    let active = active_modes(norms);
    let slope = trend_slope(&ln_terms, &active);
    let pass = superlinear && acc.is_finite() && slope.is_none_or(|s| s < 0.0);
    Ok(DecayReport {
        weight: weight.clone(),
        eigenvalues: eigenvalues.to_vec(),
        norms: norms.to_vec(),
        ln_terms,
        partial_sums,
        active,
        trend_slope: slope,
        superlinear,
        pass,
    })
}

/// `a = sum_j c_j v_j` with `c_j = exp(-(theta(lambda_j) + lambda_j^(2/3)) / 2) u_j`,
/// `u_j` uniform in `[0.5, 1]` from `seed`. Returns `a` and the coefficients.
pub fn construct_initial_data(
    dec: &SpectralDecomposition,
    theta: &ThetaSpec,
    seed: u64,
) -> Result<(ScalarField, Vec<f64>), DecayError> {
    theta.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs: Vec<f64> = dec
        .eigenvalues()
        .iter()
        .map(|&l| {
            let u: f64 = rng.gen_range(0.5..=1.0);
            (-(theta.eval(l) + l.powf(2.0 / 3.0)) / 2.0).exp() * u
        })
        .collect();
    Ok((dec.synthesize(&coeffs), coeffs))
}

/// `|g|_{H^1(gamma)}^2`: node values plus tangential differences along
/// `gamma`, trapezoidal weights. In 1D `gamma` is a point.
pub fn h1_gamma_norm2(grid: &Grid, gamma: &BoundaryMask, g: &[f64]) -> f64 {
    let nodes = gamma.nodes();
    if grid.dim() == 1 {
        return nodes.iter().map(|&n| g[n] * g[n]).sum();
    }
    let mut total = 0.0;
    for &n in nodes {
        let face = grid.face(n).expect("gamma lies on the boundary");
        let t_axis = 1 - face.axis;
        let h = grid.spacing()[t_axis];
        let idx = grid.multi_index(n)[t_axis];
        let end = idx == 0 || idx + 1 == grid.counts()[t_axis];
        let w = if end { 0.5 * h } else { h };
        let fwd = grid.step(n, t_axis, true).filter(|q| gamma.contains(*q));
        let back = grid.step(n, t_axis, false).filter(|q| gamma.contains(*q));
        let dt = match (back, fwd) {
            (Some(a), Some(b)) => (g[b] - g[a]) / (2.0 * h),
            (None, Some(b)) => (g[b] - g[n]) / h,
            (Some(a), None) => (g[n] - g[a]) / h,
            (None, None) => 0.0,
        };
        total += w * (g[n] * g[n] + dt * dt);
    }
    total
}

/// Trace constant: `max_k |P_k a|_{H^1(gamma)} / ((lambda_k + 1) |P_k a|)`
/// over the modes of `a` that are active.
pub fn trace_constant(
    grid: &Grid,
    dec: &SpectralDecomposition,
    a: &ScalarField,
    gamma: &BoundaryMask,
) -> Result<f64, DecayError> {
    let norms = crate::spectral::mode_norms(dec, a)?;
    let mut best = 0.0_f64;
    for k in active_modes(&norms) {
        let p = project(dec, k, a)?;
        let tr = h1_gamma_norm2(grid, gamma, p.values()).sqrt();
        let lambda = dec.clusters()[k].representative;
        best = best.max(tr / ((lambda + 1.0) * norms[k].sqrt()));
    }
    Ok(best)
}

/// Constants of the boundary-observation Carleman audit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditConstants {
    /// Start of the flat part of the ratio curve.
    pub s0: f64,
    /// Largest ratio over `[s0, 4 s0]`.
    pub ratio: f64,
    /// `max psi` over the positive part of the boundary.
    pub psi_max: f64,
}

/// One matched mode `lambda_k = mu_k` with `|P_k a|^2` and `|Q_k a|^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedMode {
    pub eigenvalue: f64,
    pub p_norm2: f64,
    pub q_norm2: f64,
}

/// Pairs clusters of the two decompositions whose eigenvalues agree to
/// `rel_tol`. Unpaired second-operator clusters with a nonzero projection are
/// returned separately.
pub fn match_spectra(
    p_values: &[f64],
    p_norms: &[f64],
    q_values: &[f64],
    q_norms: &[f64],
    rel_tol: f64,
) -> (Vec<MatchedMode>, Vec<usize>) {
    let mut used = vec![false; q_values.len()];
    let mut pairs = Vec::new();
    for (k, &l) in p_values.iter().enumerate() {
        let hit = (0..q_values.len())
            .filter(|&j| !used[j] && (q_values[j] - l).abs() <= rel_tol * l.abs())
            .min_by(|&i, &j| (q_values[i] - l).abs().total_cmp(&(q_values[j] - l).abs()));
        if let Some(j) = hit {
            used[j] = true;
            pairs.push(MatchedMode { eigenvalue: l, p_norm2: p_norms[k], q_norm2: q_norms[j] });
        }
    }
    let top = q_norms.iter().fold(0.0_f64, |m, v| m.max(*v));
    let unmatched = (0..q_values.len()).filter(|&j| !used[j] && q_norms[j] > ACTIVE_FLOOR * top).collect();
    (pairs, unmatched)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImplicationRow {
    pub eigenvalue: f64,
    pub p_norm2: f64,
    pub q_norm2: f64,
    /// `s* lambda^(2/3)`.
    pub s_k: f64,
    /// `ln(C lambda^2 exp(C1 lambda^(2/3)) |P_k a|^2)`.
    pub ln_bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImplicationReport {
    pub rows: Vec<ImplicationRow>,
    pub audit: AuditConstants,
    pub trace_constant: f64,
    pub s_star: f64,
    /// Per-mode constant `C`.
    pub c: f64,
    /// `2 s* max psi`.
    pub c1: f64,
    /// Envelope constant with `eta^2 e^{C1 eta^(2/3) + sigma1 eta^(1/2)} <= C2 e^{C2 eta^(2/3)}`.
    pub c2: f64,
    pub sigma1: f64,
    /// `ln sum exp(sigma1 sqrt(lambda)) |Q_k a|^2`.
    pub ln_q_sum: f64,
    /// `ln sum C lambda^2 exp(C1 lambda^(2/3) + sigma1 sqrt(lambda)) |P_k a|^2`.
    pub ln_bound_sum: f64,
    /// `ln C2 sum exp(C2 lambda^(2/3)) |P_k a|^2`.
    pub ln_envelope_sum: f64,
    /// Decay trend of the weighted `Q` terms.
    pub trend_slope: Option<f64>,
    /// First row from which `C2 lambda^(2/3) <= theta(lambda)` holds on.
    pub tail_start: Option<usize>,
    pub pass: bool,
}

impl ImplicationReport {
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "row,eigenvalue,p_norm2,q_norm2,s_k,ln_bound,holds")?;
        for (k, r) in self.rows.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                k,
                g17(r.eigenvalue),
                g17(r.p_norm2),
                g17(r.q_norm2),
                g17(r.s_k),
                g17(r.ln_bound),
                r.holds
            )?;
        }
        writeln!(out, "summary,,,,{},{},{}", g17(self.s_star), g17(self.ln_bound_sum), self.pass)
    }
}

fn ln_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let top = v.iter().fold(f64::NEG_INFINITY, |m, x| m.max(*x));
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + v.iter().map(|x| (x - top).exp()).sum::<f64>().ln()
}

/// Smallest `C2 >= 1` (to 0.1 %) satisfying the envelope on a log-spaced
/// grid up to `eta_max`.
pub fn envelope_constant(c1: f64, sigma1: f64, eta_max: f64) -> f64 {
    let grid: Vec<f64> = (0..=400).map(|i| 1e-3 * (eta_max.max(1.0) / 1e-3).powf(i as f64 / 400.0)).collect();
    let fits = |c2: f64| {
        grid.iter().all(|&e| {
            2.0 * e.ln() + c1 * e.powf(2.0 / 3.0) + sigma1 * e.sqrt() <= c2.ln() + c2 * e.powf(2.0 / 3.0)
        })
    };
    let mut hi = c1.max(1.0);
    while !fits(hi) {
        hi *= 2.0;
    }
    let mut lo = 1.0;
    if fits(lo) {
        return lo;
    }
    while hi - lo > 1e-3 * hi {
        let mid = 0.5 * (lo + hi);
        if fits(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Evaluates the per-mode bound `|Q_k a|^2 <= C lambda^2 exp(C1 lambda^(2/3)) |P_k a|^2`
/// with constants from the boundary audit, then the weighted sums.
///
/// `s* = max(s0, (2 ratio)^(1/3))`, `C = 4 C_tr^2 ratio s*^3 / (s*^3 - ratio)`,
/// `C1 = 2 s* max psi`.
pub fn verify_implication(
    modes: &[MatchedMode],
    audit: AuditConstants,
    trace_constant: f64,
    sigma1: f64,
    theta: Option<&ThetaSpec>,
) -> Result<ImplicationReport, DecayError> {
    if !(audit.s0 > 0.0 && audit.ratio.is_finite() && audit.ratio > 0.0 && audit.psi_max > 0.0) {
        return Err(DecayError::MissingConstants(format!("{audit:?}")));
    }
    if !(trace_constant.is_finite() && trace_constant >= 0.0) {
        return Err(DecayError::MissingConstants(format!("trace constant {trace_constant}")));
    }
    let s_star = audit.s0.max((2.0 * audit.ratio).cbrt());
    let s3 = s_star.powi(3);
    let c = 4.0 * trace_constant * trace_constant * audit.ratio * s3 / (s3 - audit.ratio);
    let c1 = 2.0 * s_star * audit.psi_max;
    let rows: Vec<ImplicationRow> = modes
        .iter()
        .map(|m| {
            let l = m.eigenvalue;
            let ln_bound = c.ln() + 2.0 * l.ln() + c1 * l.powf(2.0 / 3.0) + m.p_norm2.ln();
            let holds = m.q_norm2 == 0.0 || m.q_norm2.ln() <= ln_bound + 1e-12;
            ImplicationRow { eigenvalue: l, p_norm2: m.p_norm2, q_norm2: m.q_norm2, s_k: s_star * l.powf(2.0 / 3.0), ln_bound, holds }
        })
        .collect();
    let eta_max = modes.iter().map(|m| m.eigenvalue).fold(1.0, f64::max);
    let c2 = envelope_constant(c1, sigma1, eta_max);
    let ln_q: Vec<f64> = modes
        .iter()
        .map(|m| if m.q_norm2 > 0.0 { sigma1 * m.eigenvalue.sqrt() + m.q_norm2.ln() } else { f64::NEG_INFINITY })
        .collect();
    let ln_q_sum = ln_sum_exp(ln_q.iter().copied());
    let ln_bound_sum = ln_sum_exp(rows.iter().map(|r| r.ln_bound + sigma1 * r.eigenvalue.sqrt()));
    let ln_envelope_sum =
        c2.ln() + ln_sum_exp(modes.iter().map(|m| c2 * m.eigenvalue.powf(2.0 / 3.0) + m.p_norm2.ln()));
    let q_norms: Vec<f64> = modes.iter().map(|m| m.q_norm2).collect();
    let slope = trend_slope(&ln_q, &active_modes(&q_norms));
    let tail_start = theta.and_then(|t| {
        let ok: Vec<bool> = modes.iter().map(|m| c2 * m.eigenvalue.powf(2.0 / 3.0) <= t.eval(m.eigenvalue)).collect();
        (0..ok.len()).find(|&k| ok[k..].iter().all(|b| *b))
    });
    let pass = rows.iter().all(|r| r.holds)
        && ln_q_sum <= ln_bound_sum + 1e-12
        && ln_bound_sum <= ln_envelope_sum + 1e-9
        && slope.is_none_or(|s| s < 0.0);
    Ok(ImplicationReport {
        rows,
        audit,
        trace_constant,
        s_star,
        c,
        c1,
        c2,
        sigma1,
        ln_q_sum,
        ln_bound_sum,
        ln_envelope_sum,
        trend_slope: slope,
        tail_start,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spectrum(n: usize) -> Vec<f64> {
        (1..=n).map(|k| 1.0 + (k * k) as f64).collect()
    }

    #[test]
    fn superlinear_theta_passes() {
        let l = spectrum(60);
        let norms: Vec<f64> = l.iter().map(|x| (-x.powf(0.9)).exp()).collect();
        let r = check_condition(&norms, &l, &DecayWeight::Theta(ThetaSpec::Power(0.7))).unwrap();
        assert!(r.pass);
        assert!(r.trend_slope.unwrap() < 0.0);
        assert!(r.partial_sums.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn critical_exponent_rejected() {
        let l = spectrum(5);
        let err = check_condition(&[1.0; 5], &l, &DecayWeight::Theta(ThetaSpec::Power(2.0 / 3.0)));
        assert!(matches!(err, Err(DecayError::InadmissibleTheta(_))));
    }

    #[test]
    fn finite_combination_passes() {
        let l = spectrum(40);
        let mut norms = vec![0.0; 40];
        norms[0] = 1.0;
        norms[3] = 0.5;
        let r = check_condition(&norms, &l, &DecayWeight::Theta(ThetaSpec::Power(1.5))).unwrap();
        assert!(r.pass);
        assert_eq!(r.active, vec![0, 3]);
    }

    #[test]
    fn growing_terms_fail() {
        let l = spectrum(30);
        let norms: Vec<f64> = l.iter().map(|x| (-0.5 * x.powf(0.7)).exp()).collect();
        let r = check_condition(&norms, &l, &DecayWeight::Theta(ThetaSpec::Power(0.7))).unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn table_interpolation_and_proxy() {
        let t = ThetaSpec::Tabulated(vec![(1.0, 1.0), (10.0, 10.0), (100.0, 100.0)]);
        assert_eq!(t.eval(5.5), 5.5);
        assert_eq!(t.eval(200.0), 200.0);
        assert!(t.is_superlinear());
        let flat = ThetaSpec::Tabulated(vec![(1.0, 1.0), (8.0, 4.0), (27.0, 9.0)]);
        assert!(!flat.is_superlinear());
    }

    #[test]
    fn envelope_holds_on_the_grid() {
        let c2 = envelope_constant(3.0, 1.0, 1e4);
        for e in [0.01, 1.0, 10.0, 1e3, 1e4] {
            let lhs = 2.0 * f64::ln(e) + 3.0 * f64::powf(e, 2.0 / 3.0) + f64::sqrt(e);
            assert!(lhs <= c2.ln() + c2 * f64::powf(e, 2.0 / 3.0) + 1e-9);
        }
        assert!(c2 >= 3.0);
    }

    #[test]
    fn identical_projections_satisfy_the_bound() {
        let modes: Vec<MatchedMode> = spectrum(20)
            .into_iter()
            .map(|l| {
                let n = (-l.powf(0.8)).exp();
                MatchedMode { eigenvalue: l, p_norm2: n, q_norm2: n }
            })
            .collect();
        let audit = AuditConstants { s0: 1.0, ratio: 2.0, psi_max: 0.5 };
        let r = verify_implication(&modes, audit, 1.0, 1.0, Some(&ThetaSpec::Power(0.8))).unwrap();
        assert!(r.rows.iter().all(|row| row.holds));
        assert_eq!(r.s_star, 4f64.cbrt());
        assert!((r.c1 - r.s_star).abs() < 1e-15);
        assert!(r.pass);
    }

    #[test]
    fn missing_constants_rejected() {
        let audit = AuditConstants { s0: 1.0, ratio: f64::NAN, psi_max: 0.5 };
        assert!(verify_implication(&[], audit, 1.0, 1.0, None).is_err());
    }
}
