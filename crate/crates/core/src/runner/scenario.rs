//! Scenario construction and the five experiments.

use log::{info, warn};

use crate::carleman::{
    audit_boundary_carleman, audit_elliptic_carleman, audit_parabolic_carleman, build_rho_psi, build_weight_d,
    default_s_list, AuditReport, BoundaryAuditInput, BoundaryWeight, CutoffProfile, EllipticAuditInput,
    EllipticWeight, ParabolicAuditInput, ParabolicWeight, TimeProfile,
};
use crate::decay::{
    check_condition, construct_initial_data, match_spectra, trace_constant, verify_implication, AuditConstants,
    DecayReport, DecayWeight, ImplicationReport, ThetaSpec,
};
use crate::forward::{log_spaced_times, snap_times, solve_parabolic_cn_at, solve_parabolic_spectral, trace_on_gamma, TraceSeries};
use crate::mesh::{
    assemble_operator, build_boundary_mask, build_grid, positivity_threshold, shift_for_lowest, BoundaryMask,
    DiffusionField, Grid, OperatorMatrix, ScalarField,
};
use crate::modes::{compare_mode_series, separate_modes, CorollaryVerdict, ModeSeries, SeparationOptions};
use crate::region::{carve_omega_y, gamma_positive, reachable_omega, support_region, OmegaY, RegionKind, RegionMask};
use crate::spectral::{eigendecompose, lowest_eigenvalue, mode_norms, SpectralDecomposition};

use super::config::{AuditKind, Config, FieldSpec, InitialSpec};
use super::RunnerError;

/// Grid, coefficients, operators with a shared coercive shift, and `gamma`.
#[derive(Debug, Clone)]
pub struct Setup {
    pub grid: Grid,
    pub c1: ScalarField,
    pub c2: ScalarField,
    pub shift: f64,
    pub op1: OperatorMatrix,
    pub op2: OperatorMatrix,
    pub gamma: BoundaryMask,
}

impl Setup {
    pub fn build(cfg: &Config) -> Result<Self, RunnerError> {
        let grid = build_grid(cfg.dim, &cfg.extents, &cfg.counts)?;
        let diffusion = DiffusionField::constant(&grid, cfg.diffusion)?;
        let field = |spec: &FieldSpec| ScalarField::from_fn(&grid, |x| spec.eval(x));
        let c1 = field(&cfg.c1);
        let c2 = field(&cfg.c2);
        let raw1 = assemble_operator(&grid, &diffusion, &c1, 0.0)?;
        let raw2 = assemble_operator(&grid, &diffusion, &c2, 0.0)?;
        let shift = shift_for_lowest(lowest_eigenvalue(&raw1)?).max(shift_for_lowest(lowest_eigenvalue(&raw2)?));
        let op1 = raw1.with_shift(shift);
        let op2 = raw2.with_shift(shift);
        let gamma = build_boundary_mask(&grid, &cfg.gamma)?;
        Ok(Setup { grid, c1, c2, shift, op1, op2, gamma })
    }

    pub fn cell_volume(&self) -> f64 {
        self.grid.spacing().iter().product()
    }

    pub fn decompose(&self, op: &OperatorMatrix) -> Result<SpectralDecomposition, RunnerError> {
        Ok(eigendecompose(op, self.cell_volume(), None)?)
    }

    pub fn coefficients_equal(&self) -> bool {
        self.c1 == self.c2
    }

    /// Nearest grid node to a point.
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let mut idx = [0usize; 2];
        for d in 0..self.grid.dim() {
            let h = self.grid.spacing()[d];
            idx[d] = ((x[d] / h).round().max(0.0) as usize).min(self.grid.counts()[d] - 1);
        }
        self.grid.node(idx)
    }

    pub fn centre_node(&self) -> usize {
        let c: Vec<f64> = self.grid.extents().iter().map(|e| e / 2.0).collect();
        self.nearest_node(&c)
    }
}

/// Initial value; generated kinds need the first operator's decomposition.
pub fn initial_data(cfg: &Config, setup: &Setup, dec: Option<&SpectralDecomposition>) -> Result<ScalarField, RunnerError> {
    let need = || dec.ok_or_else(|| RunnerError::Config("initial data needs a decomposition".into()));
    match &cfg.initial {
        InitialSpec::Field(f) => Ok(ScalarField::from_fn(&setup.grid, |x| f.eval(x))),
        InitialSpec::Theta(p) => Ok(construct_initial_data(need()?, &ThetaSpec::Power(*p), cfg.seed)?.0),
        InitialSpec::Eigen { modes, weights } => {
            let dec = need()?;
            let mut coeffs = vec![0.0; dec.len()];
            for (&k, &w) in modes.iter().zip(weights) {
                let cluster = dec
                    .clusters()
                    .get(k)
                    .ok_or_else(|| RunnerError::Config(format!("initial.modes: no cluster {k}")))?;
                coeffs[cluster.members.start] = w;
            }
            Ok(dec.synthesize(&coeffs))
        }
    }
}

/// `Omega_0`, `Gamma` and `omega` for an initial value.
#[derive(Debug, Clone)]
pub struct Regions {
    pub threshold: f64,
    pub support: RegionMask,
    pub gamma_pos: RegionMask,
    pub omega: RegionMask,
}

pub fn regions(cfg: &Config, setup: &Setup, a: &ScalarField) -> Result<Regions, RunnerError> {
    let threshold = cfg.threshold.unwrap_or_else(|| positivity_threshold(a));
    let support = support_region(a, &setup.grid, threshold);
    let gamma_pos = gamma_positive(a, &setup.gamma, threshold)?;
    let omega = reachable_omega(&support, &gamma_pos, &setup.grid);
    Ok(Regions { threshold, support, gamma_pos, omega })
}

fn sample_times(cfg: &Config) -> Vec<f64> {
    snap_times(&log_spaced_times(cfg.first_sample, cfg.t_end, cfg.samples), cfg.dt)
}

/// How a uniqueness run relates to the theorem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    /// `c1 = c2`; the traces must agree.
    Baseline,
    /// `c1 = c2` but the traces differ beyond tolerance: a pipeline fault.
    BaselineDrift,
    /// `c1 != c2` on `omega` and the traces differ.
    Detected,
    /// `c1 != c2` only off `omega`; the theorem makes no claim.
    Silent,
    /// `c1 != c2` on `omega` yet the traces agree.
    Violation,
}

impl Classification {
    pub fn name(&self) -> &'static str {
        match self {
            Classification::Baseline => "baseline",
            Classification::BaselineDrift => "baseline_drift",
            Classification::Detected => "detected",
            Classification::Silent => "theorem_silent",
            Classification::Violation => "violation",
        }
    }
}

#[derive(Debug, Clone)]
pub struct UniquenessReport {
    pub times: Vec<f64>,
    pub discrepancy_by_time: Vec<f64>,
    pub max_discrepancy: f64,
    pub regions: Regions,
    pub f_norm_omega: f64,
    pub f_norm_off: f64,
    pub classification: Classification,
    pub trace_u: TraceSeries,
    pub trace_v: TraceSeries,
}

impl UniquenessReport {
    pub fn pass(&self) -> bool {
        !matches!(self.classification, Classification::Violation | Classification::BaselineDrift)
    }
}

/// Solves both problems with Crank–Nicolson and compares the traces on `gamma`.
pub fn run_uniqueness_experiment(cfg: &Config, setup: &Setup) -> Result<UniquenessReport, RunnerError> {
    let dec = match cfg.initial {
        InitialSpec::Field(_) => None,
        _ => Some(setup.decompose(&setup.op1)?),
    };
    let a = initial_data(cfg, setup, dec.as_ref())?;
    let regions = regions(cfg, setup, &a)?;
    let times = sample_times(cfg);
    info!("uniqueness: {} sample times, dt {}", times.len(), cfg.dt);
    let u = solve_parabolic_cn_at(&setup.op1, &a, cfg.dt, &times)?;
    let v = solve_parabolic_cn_at(&setup.op2, &a, cfg.dt, &times)?;
    let trace_u = trace_on_gamma(&setup.grid, &u, &setup.gamma, &times)?;
    let trace_v = trace_on_gamma(&setup.grid, &v, &setup.gamma, &times)?;
    let discrepancy_by_time = trace_u.discrepancy_by_time(&trace_v)?;
    let max_discrepancy = discrepancy_by_time.iter().fold(0.0_f64, |m, v| m.max(*v));

    let quad = setup.grid.quadrature_weights();
    let (mut on, mut off) = (0.0, 0.0);
    for n in 0..setup.grid.len() {
        let f = setup.c2.values()[n] - setup.c1.values()[n];
        if regions.omega.contains(n) {
            on += quad[n] * f * f;
        } else {
            off += quad[n] * f * f;
        }
    }
    let (f_norm_omega, f_norm_off) = (on.sqrt(), off.sqrt());
    let differs = max_discrepancy > cfg.trace_tol;
    let classification = if f_norm_omega > cfg.f_tol {
        if differs {
            Classification::Detected
        } else {
            Classification::Violation
        }
    } else if f_norm_off > cfg.f_tol {
        Classification::Silent
    } else if differs {
        Classification::BaselineDrift
    } else {
        Classification::Baseline
    };
    if classification == Classification::Violation {
        warn!("{}: traces agree although c1 != c2 on omega", cfg.name);
    }
    Ok(UniquenessReport {
        times,
        discrepancy_by_time,
        max_discrepancy,
        regions,
        f_norm_omega,
        f_norm_off,
        classification,
        trace_u,
        trace_v,
    })
}

#[derive(Debug, Clone)]
pub struct CorollaryReport {
    pub modes_u: ModeSeries,
    pub modes_v: ModeSeries,
    pub verdict: CorollaryVerdict,
    /// Largest relative distance from a recovered rate to its operator's spectrum.
    pub rate_error_u: f64,
    pub rate_error_v: f64,
    pub expect_full_match: bool,
    pub spectrum_u: Vec<f64>,
    pub spectrum_v: Vec<f64>,
}

/// Rate agreement with the eigensolver required of every recovered mode.
pub const RATE_CHECK_TOL: f64 = 1e-3;

impl CorollaryReport {
    pub fn pass(&self) -> bool {
        let rates_ok = self.rate_error_u <= RATE_CHECK_TOL && self.rate_error_v <= RATE_CHECK_TOL;
        rates_ok && (!self.expect_full_match || self.verdict.full_match)
    }
}

fn rate_error(series: &ModeSeries, spectrum: &[f64]) -> f64 {
    series
        .rates()
        .iter()
        .map(|r| spectrum.iter().map(|l| (r - l).abs() / l.abs()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

/// Traces from the spectral solver (first operator) and Crank–Nicolson
/// (second operator), separated into modes and compared.
pub fn run_corollary_experiment(cfg: &Config, setup: &Setup) -> Result<CorollaryReport, RunnerError> {
    let dec1 = setup.decompose(&setup.op1)?;
    let dec2 = if setup.coefficients_equal() { dec1.clone() } else { setup.decompose(&setup.op2)? };
    let a = initial_data(cfg, setup, Some(&dec1))?;
    let times = sample_times(cfg);
    let u = solve_parabolic_spectral(&dec1, &a, &times)?;
    let v = solve_parabolic_cn_at(&setup.op2, &a, cfg.dt, &times)?;
    let trace_u = trace_on_gamma(&setup.grid, &u, &setup.gamma, &times)?;
    let trace_v = trace_on_gamma(&setup.grid, &v, &setup.gamma, &times)?;
    let opts = SeparationOptions { max_modes: cfg.max_modes, ..SeparationOptions::default() };
    let spectrum_u = dec1.cluster_values();
    let spectrum_v = dec2.cluster_values();
    let mut modes_u = separate_modes(&trace_u, &opts)?;
    let mut modes_v = separate_modes(&trace_v, &opts)?;
    modes_u.assign_indices(&spectrum_u);
    modes_v.assign_indices(&spectrum_v);
    let verdict = compare_mode_series(&modes_u, &modes_v, cfg.rate_tol, cfg.mode_trace_tol);
    Ok(CorollaryReport {
        rate_error_u: rate_error(&modes_u, &spectrum_u),
        rate_error_v: rate_error(&modes_v, &spectrum_v),
        modes_u,
        modes_v,
        verdict,
        expect_full_match: setup.coefficients_equal(),
        spectrum_u,
        spectrum_v,
    })
}

/// Everything an audit campaign produces.
#[derive(Debug, Clone)]
pub struct AuditBundle {
    pub reports: Vec<AuditReport>,
    /// Constants of the boundary audit, when it ran and stabilized.
    pub boundary_constants: Option<AuditConstants>,
    pub tube: Option<OmegaY>,
    pub elliptic_weight: Option<EllipticWeight>,
    pub boundary_weight: Option<BoundaryWeight>,
}

/// `R(4 s0) <= 1.1 R(s0)` for a report.
pub fn stabilizes(report: &AuditReport) -> bool {
    let Some(s0) = report.s0 else { return false };
    match (report.ratio_at(s0), report.ratio_at(4.0 * s0)) {
        (Some(r0), Some(r4)) => r4 <= 1.1 * r0,
        _ => false,
    }
}

impl AuditBundle {
    pub fn pass(&self) -> bool {
        self.reports.iter().all(|r| stabilizes(r) && r.flagged.iter().all(|f| !f.1.contains("vanishes")))
    }
}

/// Runs the configured audits. The initial value fixes `Gamma`, `omega`
/// and the tube for the elliptic audit.
pub fn run_audit_campaign(cfg: &Config, setup: &Setup) -> Result<AuditBundle, RunnerError> {
    let mut bundle =
        AuditBundle { reports: Vec::new(), boundary_constants: None, tube: None, elliptic_weight: None, boundary_weight: None };
    if cfg.audit_samples == 0 || cfg.audits.is_empty() {
        return Ok(bundle);
    }
    let s_list = cfg.s_list.clone().unwrap_or_else(default_s_list);
    let dec = setup.decompose(&setup.op1)?;
    let a = initial_data(cfg, setup, Some(&dec))?;
    let regions = regions(cfg, setup, &a)?;
    let gamma_nodes = regions.gamma_pos.nodes();
    let bw = build_rho_psi(&setup.grid, &setup.gamma, cfg.lambda)?;
    for (i, kind) in cfg.audits.iter().enumerate() {
        let seed = cfg.seed.wrapping_add(i as u64);
        match kind {
            AuditKind::Elliptic => {
                let y = match &cfg.audit_y {
                    Some(c) => setup.nearest_node(c),
                    None => setup.centre_node(),
                };
                let tube = carve_omega_y(&regions.omega, &regions.gamma_pos, &setup.grid, y, &a, regions.threshold)?;
                let (d, kappa) = build_weight_d(&tube, &setup.grid)?;
                let d_max = d.values().iter().fold(0.0_f64, |m, v| m.max(*v));
                let cutoff = CutoffProfile::new(d_max, d.values()[y], cfg.tau)?;
                let weight = EllipticWeight { d, lambda: cfg.lambda, beta: cutoff.beta, kappa };
                let diffusion = DiffusionField::constant(&setup.grid, cfg.diffusion)?;
                let mut ops = Vec::new();
                for &scale in &cfg.c_scales {
                    let c = setup.c1.scaled(scale);
                    let op = assemble_operator(&setup.grid, &diffusion, &c, setup.shift)?;
                    if !ops.contains(&op) {
                        ops.push(op);
                    }
                }
                let input = EllipticAuditInput {
                    grid: &setup.grid,
                    operators: ops.iter().collect(),
                    tube: &tube,
                    weight: &weight,
                    tau: cfg.tau,
                    time_points: cfg.audit_time_points,
                    samples: cfg.audit_samples,
                    seed,
                };
                bundle.reports.push(audit_elliptic_carleman(&input, &s_list)?);
                bundle.tube = Some(tube);
                bundle.elliptic_weight = Some(weight);
            }
            AuditKind::Boundary => {
                let input = BoundaryAuditInput {
                    grid: &setup.grid,
                    operator: &setup.op2,
                    decomposition: &if setup.coefficients_equal() { dec.clone() } else { setup.decompose(&setup.op2)? },
                    weight: &bw,
                    gamma: &setup.gamma,
                    samples: cfg.audit_samples,
                    eigenvectors: cfg.audit_eigenvectors,
                    extra: Vec::new(),
                    seed,
                };
                let report = audit_boundary_carleman(&input, &s_list)?;
                if let (Some(s0), Some(ratio)) = (report.s0, report.constant) {
                    bundle.boundary_constants = Some(AuditConstants { s0, ratio, psi_max: bw.psi_max_on(&gamma_nodes) });
                }
                bundle.reports.push(report);
            }
            AuditKind::Parabolic => {
                let weight = ParabolicWeight { boundary: bw.clone(), profile: TimeProfile { t_end: cfg.t_end } };
                let input = ParabolicAuditInput {
                    grid: &setup.grid,
                    operator: &setup.op2,
                    decomposition: &dec,
                    weight: &weight,
                    gamma: &setup.gamma,
                    time_points: cfg.audit_time_points,
                    samples: cfg.audit_samples,
                    seed,
                };
                bundle.reports.push(audit_parabolic_carleman(&input, &s_list)?);
            }
        }
    }
    bundle.boundary_weight = Some(bw);
    Ok(bundle)
}

#[derive(Debug, Clone)]
pub struct OmegaReport {
    pub regions: Regions,
    /// Comparison with the expected mask, when one is configured.
    pub matches_expected: Option<bool>,
    pub expected: Option<RegionMask>,
    /// Tube at `omega.y`, or why it could not be carved.
    pub tube: Option<Result<OmegaY, String>>,
}

impl OmegaReport {
    pub fn pass(&self) -> bool {
        self.matches_expected != Some(false)
    }
}

pub fn run_omega(cfg: &Config, setup: &Setup) -> Result<OmegaReport, RunnerError> {
    let dec = match cfg.initial {
        InitialSpec::Field(_) => None,
        _ => Some(setup.decompose(&setup.op1)?),
    };
    let a = initial_data(cfg, setup, dec.as_ref())?;
    let regions = regions(cfg, setup, &a)?;
    let expected = match &cfg.omega_expected {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| RunnerError::io(path, e))?;
            Some(RegionMask::from_ascii(RegionKind::Omega, &setup.grid, &text)?)
        }
        None => None,
    };
    let matches_expected = expected.as_ref().map(|e| e.as_slice() == regions.omega.as_slice());
    let tube = cfg.omega_y.as_ref().map(|y| {
        let node = setup.nearest_node(y);
        carve_omega_y(&regions.omega, &regions.gamma_pos, &setup.grid, node, &a, regions.threshold)
            .map_err(|e| e.to_string())
    });
    Ok(OmegaReport { regions, matches_expected, expected, tube })
}

#[derive(Debug, Clone)]
pub struct DecayOutcome {
    pub conditions: Vec<DecayReport>,
    pub implication: ImplicationReport,
    pub boundary_audit: AuditReport,
    /// Second-operator clusters with a nonzero projection but no partner.
    pub unmatched: Vec<usize>,
}

impl DecayOutcome {
    pub fn pass(&self) -> bool {
        self.conditions[0].pass && self.implication.pass && self.unmatched.is_empty()
    }
}

/// Checks the decay conditions for the initial value and evaluates the
/// per-mode bound with constants from a boundary audit.
pub fn run_decay(cfg: &Config, setup: &Setup) -> Result<DecayOutcome, RunnerError> {
    let dec1 = setup.decompose(&setup.op1)?;
    let dec2 = if setup.coefficients_equal() { dec1.clone() } else { setup.decompose(&setup.op2)? };
    let a = initial_data(cfg, setup, Some(&dec1))?;
    let regions = regions(cfg, setup, &a)?;
    let p_norms = mode_norms(&dec1, &a)?;
    let q_norms = mode_norms(&dec2, &a)?;
    let values1 = dec1.cluster_values();
    let theta = ThetaSpec::Power(cfg.theta_power);
    let conditions = vec![
        check_condition(&p_norms, &values1, &DecayWeight::Theta(theta.clone()))?,
        check_condition(&p_norms, &values1, &DecayWeight::Linear { sigma: cfg.sigma })?,
        check_condition(&p_norms, &values1, &DecayWeight::SquareRoot { sigma: cfg.sigma1 })?,
    ];
    let bw = build_rho_psi(&setup.grid, &setup.gamma, cfg.lambda)?;
    let input = BoundaryAuditInput {
        grid: &setup.grid,
        operator: &setup.op2,
        decomposition: &dec2,
        weight: &bw,
        gamma: &setup.gamma,
        samples: cfg.audit_samples.max(1),
        eigenvectors: cfg.audit_eigenvectors,
        extra: Vec::new(),
        seed: cfg.seed,
    };
    let s_list = cfg.s_list.clone().unwrap_or_else(default_s_list);
    let boundary_audit = audit_boundary_carleman(&input, &s_list)?;
    let (Some(s0), Some(ratio)) = (boundary_audit.s0, boundary_audit.constant) else {
        return Err(RunnerError::Criterion("boundary audit did not stabilize; no constants".into()));
    };
    let audit = AuditConstants { s0, ratio, psi_max: bw.psi_max_on(&regions.gamma_pos.nodes()) };
    let c_trace = trace_constant(&setup.grid, &dec1, &a, &setup.gamma)?;
    let (modes, unmatched) = match_spectra(&values1, &p_norms, &dec2.cluster_values(), &q_norms, 1e-9);
    let implication = verify_implication(&modes, audit, c_trace, cfg.sigma1, Some(&theta))?;
    Ok(DecayOutcome { conditions, implication, boundary_audit, unmatched })
}
