//! Worked examples for the audits, the decay machinery and the runner.

use std::path::Path;

use niplab::carleman::{
    audit_boundary_carleman, audit_parabolic_carleman, build_rho_psi, BoundaryAuditInput, ParabolicAuditInput,
    ParabolicWeight, TimeProfile,
};
use niplab::decay::{check_condition, construct_initial_data, verify_implication, AuditConstants, MatchedMode, DecayWeight, ThetaSpec};
use niplab::mesh::{
    assemble_operator, build_boundary_mask, build_grid, coercive_shift, BoundaryMask, DiffusionField, Face,
    FaceSelection, Grid, OperatorMatrix, ScalarField,
};
use niplab::runner::{run_audit_campaign, run_corollary_experiment, Config, Setup};
use niplab::spectral::{eigendecompose, mode_norms, SpectralDecomposition};

struct Interval {
    grid: Grid,
    op: OperatorMatrix,
    dec: SpectralDecomposition,
    gamma: BoundaryMask,
}

fn interval(n: usize) -> Interval {
    let grid = build_grid(1, &[1.0], &[n]).unwrap();
    let diffusion = DiffusionField::constant(&grid, 1.0).unwrap();
    let c = ScalarField::from_fn(&grid, |x| 0.5 * x[0]);
    let raw = assemble_operator(&grid, &diffusion, &c, 0.0).unwrap();
    let op = raw.with_shift(coercive_shift(&raw).unwrap());
    let dec = eigendecompose(&op, grid.spacing()[0], None).unwrap();
    let gamma = build_boundary_mask(&grid, &[FaceSelection::whole(Face::RIGHT)]).unwrap();
    Interval { grid, op, dec, gamma }
}

fn config(text: &str) -> (Config, Setup) {
    let cfg = Config::parse(text, None, Path::new(".")).unwrap();
    let setup = Setup::build(&cfg).unwrap();
    (cfg, setup)
}

/// Boundary-audit ratio evaluated directly, with `|A g|^2` replaced by
/// `lambda^2 |g|^2` for an eigenvector.
fn eigen_ratio(iv: &Interval, psi: &[f64], v: &[f64], lambda: f64, s: f64) -> f64 {
    let h = iv.grid.spacing()[0];
    let n = v.len();
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for i in 0..n {
        let q = if i == 0 || i == n - 1 { 0.5 * h } else { h };
        let grad = if i == 0 || i == n - 1 { 0.0 } else { (v[i + 1] - v[i - 1]) / (2.0 * h) };
        let e = (2.0 * s * psi[i]).exp();
        lhs += q * e * (s * grad * grad + s.powi(3) * v[i] * v[i]);
        rhs += q * e * lambda * lambda * v[i] * v[i];
    }
    let end = n - 1;
    rhs += s.powi(3) * v[end] * v[end] * (2.0 * s * psi[end]).exp();
    lhs / rhs
}

#[test]
fn boundary_audit_eigenvectors_match_closed_form() {
    let iv = interval(60);
    let weight = build_rho_psi(&iv.grid, &iv.gamma, 2.0).unwrap();
    let s_list = [0.5, 2.0, 8.0];
    let input = BoundaryAuditInput {
        grid: &iv.grid,
        operator: &iv.op,
        decomposition: &iv.dec,
        weight: &weight,
        gamma: &iv.gamma,
        samples: 0,
        eigenvectors: 4,
        extra: vec![],
        seed: 3,
    };
    let report = audit_boundary_carleman(&input, &s_list).unwrap();
    assert_eq!(report.eigen_records.len(), 4);
    for rec in &report.eigen_records {
        let v = iv.dec.eigenvector(iv.dec.clusters()[rec.index].members.start);
        for (j, &s) in s_list.iter().enumerate() {
            let expected = eigen_ratio(&iv, weight.psi.values(), v, rec.eigenvalue, s);
            let got = rec.ratios[j];
            assert!((got - expected).abs() <= 1e-8 * expected, "mode {} s {s}: {got} vs {expected}", rec.index);
        }
    }
}

#[test]
fn boundary_audit_skips_zero_and_ignores_scale() {
    let iv = interval(40);
    let weight = build_rho_psi(&iv.grid, &iv.gamma, 2.0).unwrap();
    let g = ScalarField::from_fn(&iv.grid, |x| (3.0 * x[0]).cos() + x[0] * x[0]);
    let input = BoundaryAuditInput {
        grid: &iv.grid,
        operator: &iv.op,
        decomposition: &iv.dec,
        weight: &weight,
        gamma: &iv.gamma,
        samples: 0,
        eigenvectors: 0,
        extra: vec![g.clone(), g.scaled(-7.5), ScalarField::zeros(&iv.grid)],
        seed: 0,
    };
    let report = audit_boundary_carleman(&input, &[1.0, 4.0, 16.0]).unwrap();
    assert_eq!(report.skipped, vec![2]);
    for (a, b) in report.ratios[0].iter().zip(&report.ratios[1]) {
        assert!((a - b).abs() <= 1e-12 * a);
    }
}

#[test]
fn parabolic_audit_static_sample_is_finite() {
    let iv = interval(40);
    let weight = ParabolicWeight { boundary: build_rho_psi(&iv.grid, &iv.gamma, 2.0).unwrap(), profile: TimeProfile { t_end: 1.0 } };
    let input = ParabolicAuditInput {
        grid: &iv.grid,
        operator: &iv.op,
        decomposition: &iv.dec,
        weight: &weight,
        gamma: &iv.gamma,
        time_points: 21,
        samples: 5,
        seed: 9,
    };
    let s_list = [0.25, 1.0, 4.0];
    let report = audit_parabolic_carleman(&input, &s_list).unwrap();
    assert!(report.ratios[0].iter().all(|r| r.is_finite() && *r > 0.0));
    let again = audit_parabolic_carleman(&input, &s_list).unwrap();
    assert_eq!(report.ratios, again.ratios);
}

#[test]
fn constructed_data_is_reproducible_and_decays() {
    let iv = interval(50);
    let theta = ThetaSpec::Power(0.7);
    let (a, coeffs) = construct_initial_data(&iv.dec, &theta, 17).unwrap();
    let (b, _) = construct_initial_data(&iv.dec, &theta, 17).unwrap();
    assert_eq!(a, b);
    let norms = mode_norms(&iv.dec, &a).unwrap();
    for (n, c) in norms.iter().zip(&coeffs) {
        assert!((n - c * c).abs() <= 1e-10);
    }
    let report = check_condition(&norms, &iv.dec.cluster_values(), &DecayWeight::Theta(theta)).unwrap();
    assert!(report.pass);
}

#[test]
fn single_mode_implication_has_one_row() {
    let iv = interval(30);
    let mut coeffs = vec![0.0; iv.dec.len()];
    coeffs[2] = 1.0;
    let a = iv.dec.synthesize(&coeffs);
    let norms = mode_norms(&iv.dec, &a).unwrap();
    let values = iv.dec.cluster_values();
    let modes: Vec<MatchedMode> = norms
        .iter()
        .zip(&values)
        .filter(|(n, _)| **n > 1e-20)
        .map(|(n, l)| MatchedMode { eigenvalue: *l, p_norm2: *n, q_norm2: *n })
        .collect();
    assert_eq!(modes.len(), 1);
    let report = verify_implication(&modes, AuditConstants { s0: 1.0, ratio: 2.0, psi_max: 0.5 }, 1.0, 1.0, None).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert!(report.rows[0].holds);
    assert!(report.rows[0].ln_bound >= report.rows[0].q_norm2.ln());
}

#[test]
fn zero_audit_samples_give_an_empty_bundle() {
    let (cfg, setup) = config("run.seed = 1\ngrid.counts = 30\ninitial.field = const:1\naudit.samples = 0\n");
    let bundle = run_audit_campaign(&cfg, &setup).unwrap();
    assert!(bundle.reports.is_empty());
}

#[test]
fn single_eigenvector_gives_one_mode_each_side() {
    let (cfg, setup) = config(
        "run.seed = 2\ngrid.extents = 3.141592653589793\ngrid.counts = 60\ninitial.kind = eigen\n\
         initial.modes = 1\ninitial.weights = 1\ntime.t_end = 4\ntime.first = 0.05\ntime.dt = 1e-3\n",
    );
    let r = run_corollary_experiment(&cfg, &setup).unwrap();
    assert_eq!(r.modes_u.len(), 1);
    assert_eq!(r.modes_v.len(), 1);
    assert!(r.verdict.full_match);
}

#[test]
fn shifted_coefficient_leaves_no_matches() {
    let cfg = Config::from_file(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/scenarios/corollary_shifted.cfg"), None)
        .unwrap();
    let setup = Setup::build(&cfg).unwrap();
    let r = run_corollary_experiment(&cfg, &setup).unwrap();
    assert!(!r.modes_u.is_empty());
    assert!(r.verdict.matched.is_empty());
    assert!(r.pass());
}
