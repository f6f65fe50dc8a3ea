//! Property tests for invariants that hold across the whole pipeline.

use std::collections::VecDeque;
use std::path::Path;

use niplab::carleman::{CutoffProfile, EllipticWeight};
use niplab::decay::{check_condition, DecayWeight, ThetaSpec};
use niplab::forward::{log_spaced_times, solve_parabolic_cn_at, TraceSeries};
use niplab::mesh::{
    assemble_operator, build_boundary_mask, build_grid, coercive_shift, DiffusionField, FaceSelection, Face, Grid,
    OperatorMatrix, ScalarField,
};
use niplab::modes::{separate_modes, SeparationOptions};
use niplab::region::{carve_omega_y, gamma_positive, reachable_omega, RegionKind, RegionMask};
use niplab::runner::Config;
use niplab::spectral::{eigendecompose, project, spectral_apply, SpectralDecomposition};
use proptest::prelude::*;

fn line(n: usize) -> Grid {
    build_grid(1, &[1.0], &[n]).unwrap()
}

fn operator(grid: &Grid, diffusion: &[f64], c: &[f64], coercive: bool) -> OperatorMatrix {
    let d = DiffusionField::new(grid, diffusion.to_vec(), 0.1).unwrap();
    let op = assemble_operator(grid, &d, &ScalarField::from_vec(c.to_vec()), 0.0).unwrap();
    if coercive {
        let m = coercive_shift(&op).unwrap();
        op.with_shift(m)
    } else {
        op
    }
}

fn decompose(grid: &Grid, op: &OperatorMatrix) -> SpectralDecomposition {
    eigendecompose(op, grid.spacing().iter().product(), None).unwrap()
}

fn field(values: &[f64]) -> ScalarField {
    ScalarField::from_vec(values.to_vec())
}

const N: usize = 16;

fn coefficients() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (prop::collection::vec(0.5..2.0_f64, N), prop::collection::vec(-3.0..3.0_f64, N))
}

fn vector() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0_f64, N)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn operator_is_self_adjoint((a, c) in coefficients(), x in vector(), y in vector()) {
        let g = line(N);
        let op = operator(&g, &a, &c, false);
        for i in 0..N {
            for j in 0..N {
                prop_assert_eq!(op.entry(i, j).to_bits(), op.entry(j, i).to_bits());
            }
        }
        let lhs = g.inner(&op.apply(&x), &y);
        let rhs = g.inner(&x, &op.apply(&y));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn quadratic_form_is_non_negative_without_potential((a, _c) in coefficients(), x in vector()) {
        let g = line(N);
        let op = operator(&g, &a, &[0.0; N], false);
        prop_assert!(g.inner(&op.apply(&x), &x) >= -1e-12);
    }

    #[test]
    fn eigenpairs_and_projections((a, c) in coefficients(), x in vector()) {
        let g = line(N);
        let op = operator(&g, &a, &c, true);
        let dec = decompose(&g, &op);
        prop_assert!(dec.eigenvalues().iter().all(|l| *l > 1.0));
        for j in 0..dec.len() {
            let v = dec.eigenvector(j);
            let l = dec.eigenvalues()[j];
            let r: Vec<f64> = op.apply(v).iter().zip(v).map(|(av, vi)| av - l * vi).collect();
            prop_assert!(g.norm(&r) <= 1e-8 * l.max(1.0));
        }
        let x = field(&x);
        let k = dec.clusters().len() / 2;
        let p = project(&dec, k, &x).unwrap();
        let pp = project(&dec, k, &p).unwrap();
        prop_assert!(pp.sub(&p).max_abs() <= 1e-10 * (1.0 + x.max_abs()));
        let other = project(&dec, k + 1, &p).unwrap();
        prop_assert!(other.max_abs() <= 1e-10 * (1.0 + x.max_abs()));
    }

    #[test]
    fn heat_semigroup_and_cosh_identity((a, c) in coefficients(), x in vector(), t1 in 0.0..0.05_f64, t2 in 0.0..0.05_f64) {
        let g = line(N);
        let dec = decompose(&g, &operator(&g, &a, &c, true));
        let x = field(&x);
        let twice = spectral_apply(&dec, |l| (-t2 * l).exp(), &spectral_apply(&dec, |l| (-t1 * l).exp(), &x).unwrap()).unwrap();
        let once = spectral_apply(&dec, |l| (-(t1 + t2) * l).exp(), &x).unwrap();
        prop_assert!(twice.sub(&once).max_abs() <= 1e-9 * (1.0 + x.max_abs()));

        let t = t1;
        let cosh = spectral_apply(&dec, |l| (t * l.sqrt()).cosh(), &x).unwrap();
        let down = spectral_apply(&dec, |l| (-t * l.sqrt()).exp(), &x).unwrap();
        let up = spectral_apply(&dec, |l| (t * l.sqrt()).exp(), &x).unwrap();
        let mean: Vec<f64> = down.values().iter().zip(up.values()).map(|(p, q)| 0.5 * (p + q)).collect();
        prop_assert!(cosh.sub(&field(&mean)).max_abs() <= 1e-12 * (1.0 + cosh.max_abs()));
    }

    #[test]
    fn energy_decays((a, c) in coefficients(), x in vector()) {
        let g = line(N);
        let op = operator(&g, &a, &c, true);
        let snaps = solve_parabolic_cn_at(&op, &field(&x), 1e-3, &[0.01, 0.02, 0.05, 0.1]).unwrap();
        let norms: Vec<f64> = snaps.iter().map(|s| g.norm(s.values())).collect();
        prop_assert!(norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        prop_assert!(norms[0] <= g.norm(&x) * (1.0 + 1e-12));
    }

    #[test]
    fn separation_is_scale_equivariant(scale in prop_oneof![-50.0..-0.02_f64, 0.02..50.0_f64]) {
        let times = log_spaced_times(0.05, 2.0, 40);
        let rates = [2.0, 5.0, 11.0];
        let traces = [[1.0, 0.5], [0.3, -0.8], [-0.7, 0.4]];
        let synth = |k: f64| TraceSeries {
            values: times
                .iter()
                .map(|t| (0..2).map(|j| k * (0..3).map(|m| traces[m][j] * (-rates[m] * t).exp()).sum::<f64>()).collect())
                .collect(),
            times: times.clone(),
            nodes: vec![0, 1],
            coords: vec![[0.0; 2]; 2],
            dim: 1,
        };
        let opts = SeparationOptions::default();
        let base = separate_modes(&synth(1.0), &opts).unwrap();
        let scaled = separate_modes(&synth(scale), &opts).unwrap();
        prop_assert_eq!(base.len(), scaled.len());
        for (e, f) in base.entries.iter().zip(&scaled.entries) {
            prop_assert!((e.rate - f.rate).abs() <= 1e-9 * e.rate);
            for (p, q) in e.trace.iter().zip(&f.trace) {
                prop_assert!((scale * p - q).abs() <= 1e-8 * scale.abs());
            }
        }
    }
}

const SIDE: usize = 9;

fn square() -> Grid {
    build_grid(2, &[1.0, 1.0], &[SIDE, SIDE]).unwrap()
}

/// Left face as `Gamma`, everything else from `support`.
fn support_mask(g: &Grid, support: &[bool]) -> (RegionMask, RegionMask, ScalarField) {
    let gamma = build_boundary_mask(g, &[FaceSelection::whole(Face::LEFT)]).unwrap();
    let mut values = vec![0.0; g.len()];
    for n in 0..g.len() {
        if support[n] || gamma.contains(n) {
            values[n] = 1.0;
        }
    }
    let a = field(&values);
    let omega0 = RegionMask::new(RegionKind::Support, values.iter().map(|v| *v > 0.5).collect());
    let gamma_pos = gamma_positive(&a, &gamma, 0.5).unwrap();
    (omega0, gamma_pos, a)
}

/// Whether every node of `targets` is reachable from the first one through `mask`.
fn connected_within(g: &Grid, targets: &RegionMask, mask: &RegionMask) -> bool {
    let nodes = targets.nodes();
    let Some(&start) = nodes.first() else { return true };
    let mut seen = vec![false; g.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(p) = queue.pop_front() {
        for q in g.neighbors(p) {
            if mask.contains(q) && !seen[q] {
                seen[q] = true;
                queue.push_back(q);
            }
        }
    }
    nodes.iter().all(|&n| seen[n])
}

fn mask_strategy() -> impl Strategy<Value = Vec<bool>> {
    prop::collection::vec(prop::bool::weighted(0.7), SIDE * SIDE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn omega_is_monotone_idempotent_and_connected(small in mask_strategy(), extra in mask_strategy()) {
        let g = square();
        let large: Vec<bool> = small.iter().zip(&extra).map(|(p, q)| *p || *q).collect();
        let (s0, gamma, _) = support_mask(&g, &small);
        let (l0, _, _) = support_mask(&g, &large);
        let omega_small = reachable_omega(&s0, &gamma, &g);
        let omega_large = reachable_omega(&l0, &gamma, &g);
        prop_assert!(omega_small.is_subset_of(&omega_large));
        prop_assert!(omega_small.is_subset_of(&s0));
        let again = reachable_omega(&omega_small, &gamma, &g);
        prop_assert_eq!(again.as_slice(), omega_small.as_slice());
        // distinct pieces of omega meet only through Gamma on the boundary
        let through: Vec<bool> = (0..g.len()).map(|n| omega_small.contains(n) || gamma.contains(n)).collect();
        prop_assert!(connected_within(&g, &omega_small, &RegionMask::new(RegionKind::Custom, through)));
    }

    #[test]
    fn tubes_stay_inside_omega(support in mask_strategy(), pick in any::<prop::sample::Index>()) {
        let g = square();
        let (omega0, gamma, a) = support_mask(&g, &support);
        let omega = reachable_omega(&omega0, &gamma, &g);
        let nodes = omega.nodes();
        prop_assume!(!nodes.is_empty());
        let y = nodes[pick.index(nodes.len())];
        let tube = carve_omega_y(&omega, &gamma, &g, y, &a, 0.5).unwrap();
        prop_assert!(tube.mask.contains(y));
        prop_assert!(tube.mask.is_subset_of(&omega));
    }

    #[test]
    fn elliptic_weight_is_even_and_decreasing(d in 0.0..3.0_f64, beta in 0.1..5.0_f64, t in 0.01..1.0_f64, dt in 0.01..1.0_f64) {
        let g = line(3);
        let w = EllipticWeight { d: ScalarField::constant(&g, d), lambda: 2.0, beta, kappa: 1.0 };
        prop_assert_eq!(w.alpha(1, t), w.alpha(1, -t));
        prop_assert!((w.alpha(1, 0.0) - (2.0 * d).exp()).abs() <= 1e-12 * (2.0 * d).exp());
        prop_assert!(w.alpha(1, t + dt) < w.alpha(1, t));
    }

    #[test]
    fn cutoff_is_one_at_y_and_zero_at_the_time_ends(d_max in 0.5..3.0_f64, frac in 0.2..1.0_f64, tau in 0.2..2.0_f64, d in 0.0..3.0_f64) {
        let d_y = frac * d_max;
        let c = CutoffProfile::new(d_max, d_y, tau).unwrap();
        prop_assert_eq!(c.chi(d_y, 0.0), 1.0);
        prop_assert_eq!(c.chi(d.min(d_max), tau), 0.0);
        prop_assert_eq!(c.chi(d.min(d_max), -tau), 0.0);
        prop_assert!(c.localization_gap(2.0) > 0.0);
    }

    #[test]
    fn decay_condition_is_monotone_in_theta(
        norms in prop::collection::vec(1e-30..1.0_f64, 12),
        p in 0.7..1.2_f64,
        q in 0.0..0.3_f64,
    ) {
        let eigenvalues: Vec<f64> = (0..12).map(|k| 1.0 + (k * k) as f64).collect();
        // shrink the norms geometrically so the heavier weight can still pass
        let norms: Vec<f64> = norms.iter().zip(&eigenvalues).map(|(n, l)| n * (-2.0 * l).exp()).collect();
        let light = check_condition(&norms, &eigenvalues, &DecayWeight::Theta(ThetaSpec::Power(p))).unwrap();
        let heavy = check_condition(&norms, &eigenvalues, &DecayWeight::Theta(ThetaSpec::Power(p + q))).unwrap();
        prop_assert!(light.total() <= heavy.total() * (1.0 + 1e-12));
        prop_assert!(light.partial_sums.windows(2).all(|w| w[1] >= w[0]));
        if heavy.pass {
            prop_assert!(light.pass);
        }
    }

    #[test]
    fn linear_weight_dominates_square_root(
        norms in prop::collection::vec(0.0..1.0_f64, 10),
        sigma in 0.1..1.0_f64,
        ratio in 0.0..1.0_f64,
    ) {
        let eigenvalues: Vec<f64> = (0..10).map(|k| 1.0 + 3.0 * k as f64).collect();
        // sigma1 sqrt(lambda) <= sigma lambda on the whole spectrum since lambda >= 1
        let sigma1 = ratio * sigma;
        let lin = check_condition(&norms, &eigenvalues, &DecayWeight::Linear { sigma }).unwrap();
        let sqrt = check_condition(&norms, &eigenvalues, &DecayWeight::SquareRoot { sigma: sigma1 }).unwrap();
        prop_assert!(sqrt.total() <= lin.total() * (1.0 + 1e-12));
    }

    #[test]
    fn config_digest_ignores_line_order(seed in any::<u64>(), order in Just((0..5).collect::<Vec<usize>>()).prop_shuffle()) {
        let lines = [
            format!("run.seed = {seed}"),
            "grid.counts = 20".to_string(),
            "initial.field = gauss:1,0.3,20".to_string(),
            "time.t_end = 0.5".to_string(),
            "c1.field = const:0.25".to_string(),
        ];
        let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
        let shuffled: String = order.iter().map(|&i| format!("{}\n", lines[i])).collect();
        let a = Config::parse(&text, None, Path::new(".")).unwrap();
        let b = Config::parse(&shuffled, None, Path::new(".")).unwrap();
        prop_assert_eq!(a.digest(), b.digest());
        let c = Config::parse(&text, Some(seed.wrapping_add(1)), Path::new(".")).unwrap();
        prop_assert_ne!(a.digest(), c.digest());
    }
}
