//! End-to-end acceptance checks. Prints one verdict line per criterion and
//! exits non-zero if any criterion fails.

use std::path::{Path, PathBuf};
use std::process::{Command as Process, ExitCode};
use std::time::Instant;

use niplab::forward::{elliptic_at, log_spaced_times, retained_clusters, solve_parabolic_cn_at, solve_parabolic_spectral, TraceSeries};
use niplab::mesh::{assemble_operator, build_grid, coercive_shift, DiffusionField, Grid, OperatorMatrix, ScalarField};
use niplab::modes::{compare_mode_series, separate_modes, SeparationOptions};
use niplab::runner::{
    run_audit_campaign, run_corollary_experiment, run_decay, run_omega, run_uniqueness_experiment, stabilizes,
    Classification, Config, Setup,
};
use niplab::spectral::{eigendecompose, spectral_apply, SpectralDecomposition};
use sha2::{Digest, Sha256};

type Verdict = Result<String, String>;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/scenarios").join(name)
}

fn load(name: &str) -> Result<(Config, Setup), String> {
    let cfg = Config::from_file(&scenario(name), None).map_err(|e| e.to_string())?;
    let setup = Setup::build(&cfg).map_err(|e| e.to_string())?;
    Ok((cfg, setup))
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Neumann Laplacian on `[0, length]` with `n` nodes, shifted to be coercive.
fn laplacian(length: f64, n: usize, coercive: bool) -> (Grid, OperatorMatrix, SpectralDecomposition) {
    let grid = build_grid(1, &[length], &[n]).unwrap();
    let diffusion = DiffusionField::constant(&grid, 1.0).unwrap();
    let mut op = assemble_operator(&grid, &diffusion, &ScalarField::zeros(&grid), 0.0).unwrap();
    if coercive {
        op = op.with_shift(coercive_shift(&op).unwrap());
    }
    let dec = eigendecompose(&op, grid.spacing()[0], None).unwrap();
    (grid, op, dec)
}

fn eigensolver_exactness() -> Verdict {
    let start = Instant::now();
    let n = 200;
    let (_, _, dec) = laplacian(std::f64::consts::PI, n, false);
    let h = std::f64::consts::PI / (n - 1) as f64;
    let mut worst_rel = 0.0_f64;
    let mut worst_zero = 0.0_f64;
    for (k, l) in dec.eigenvalues().iter().enumerate() {
        let exact = 2.0 / (h * h) * (1.0 - (k as f64 * std::f64::consts::PI / (n - 1) as f64).cos());
        if k == 0 {
            worst_zero = worst_zero.max(l.abs());
        } else {
            worst_rel = worst_rel.max((l - exact).abs() / exact);
        }
    }
    let mut gram = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            let g = dec.inner(dec.eigenvector(i), dec.eigenvector(j));
            let target = if i == j { 1.0 } else { 0.0 };
            gram = gram.max((g - target).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst_rel <= 1e-10 && worst_zero <= 1e-10 && gram <= 1e-10 && secs < 30.0,
        format!("max rel eigenvalue error {worst_rel:.2e}, |lambda_0| {worst_zero:.2e}, gram {gram:.2e}, {secs:.1} s"),
    )
}

fn solver_cross_validation() -> Verdict {
    let (grid, op, dec) = laplacian(1.0, 100, true);
    let a = ScalarField::from_fn(&grid, |x| (-20.0 * (x[0] - 0.3).powi(2)).exp());
    let t_end = 0.1;
    let exact = solve_parabolic_spectral(&dec, &a, &[t_end]).unwrap().remove(0);
    let diff = |dt: f64| {
        let cn = solve_parabolic_cn_at(&op, &a, dt, &[t_end]).unwrap().remove(0);
        grid.norm(cn.sub(&exact).values())
    };
    let coarse = diff(1e-4);
    let fine = diff(5e-5);
    let ratio = coarse / fine;
    check(
        coarse < 1e-6 && (3.5..=4.5).contains(&ratio),
        format!("L2 difference {coarse:.3e} at dt=1e-4, halving ratio {ratio:.3}"),
    )
}

fn elliptic_transmutation() -> Verdict {
    let (grid, _, dec) = laplacian(2.0 * std::f64::consts::PI, 100, true);
    let mut coeffs = vec![0.0; dec.len()];
    coeffs[..10].iter_mut().for_each(|c| *c = 1.0);
    let a = dec.synthesize(&coeffs);
    let retained = retained_clusters(&dec, &a).unwrap();
    let delta = 1e-3;
    let mut worst = 0.0_f64;
    for t in [0.25, 0.5, 1.0, 1.5] {
        let w = |s: f64| elliptic_at(&dec, &a, s, &retained).unwrap();
        let (wm, w0, wp) = (w(t - delta), w(t), w(t + delta));
        let aw = spectral_apply(&dec, |l| l, &w0).unwrap();
        let residual: Vec<f64> = (0..grid.len())
            .map(|i| (wp.values()[i] - 2.0 * w0.values()[i] + wm.values()[i]) / (delta * delta) - aw.values()[i])
            .collect();
        worst = worst.max(grid.norm(&residual) / grid.norm(w0.values()));
    }
    check(worst <= 1e-4, format!("max relative residual {worst:.3e} over t in {{0.25, 0.5, 1, 1.5}}"))
}

fn mode_separation() -> Verdict {
    let times = log_spaced_times(0.05, 2.0, 40);
    let rates = [2.0, 5.0, 11.0];
    let traces = [vec![1.0, 0.5, -0.2], vec![0.3, -0.8, 0.6], vec![-0.7, 0.4, 0.9]];
    let values = times
        .iter()
        .map(|t| (0..3).map(|j| (0..3).map(|k| traces[k][j] * (-rates[k] * t).exp()).sum()).collect())
        .collect();
    let series = TraceSeries { times, values, nodes: vec![0, 1, 2], coords: vec![[0.0; 2]; 3], dim: 1 };
    let out = separate_modes(&series, &SeparationOptions::default()).map_err(|e| e.to_string())?;
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (mut rate_err, mut trace_err) = (0.0_f64, 0.0_f64);
    for (e, (l, b)) in out.entries.iter().zip(rates.iter().zip(&traces)) {
        rate_err = rate_err.max((e.rate - l).abs() / l);
        let d: Vec<f64> = e.trace.iter().zip(b).map(|(x, y)| x - y).collect();
        trace_err = trace_err.max(norm(&d) / norm(b));
    }
    let synthetic = out.len() == 3 && rate_err <= 1e-3 && trace_err <= 1e-3;

    let (cfg, setup) = load("corollary_equal.cfg")?;
    let r = run_corollary_experiment(&cfg, &setup).map_err(|e| e.to_string())?;
    let strict = compare_mode_series(&r.modes_u, &r.modes_v, 1e-4, 1e-4);
    check(
        synthetic && strict.full_match && !r.modes_u.is_empty(),
        format!(
            "synthetic: {} modes, rate err {rate_err:.2e}, trace err {trace_err:.2e}; end to end: {} of {} modes matched",
            out.len(),
            strict.matched.len(),
            r.modes_u.len()
        ),
    )
}

fn omega_fixtures() -> Verdict {
    let mut notes = Vec::new();
    let mut ok = true;
    for name in ["omega_example_i", "omega_example_i_point", "omega_example_ii", "omega_example_iii"] {
        let (cfg, setup) = load(&format!("{name}.cfg"))?;
        let r = run_omega(&cfg, &setup).map_err(|e| e.to_string())?;
        let matches = r.matches_expected == Some(true);
        ok &= matches;
        notes.push(format!("{name} {}", if matches { "exact" } else { "MISMATCH" }));
        if name == "omega_example_iii" {
            // the inner block must stay out of omega and refuse a tube
            let nodes = setup.grid.len();
            let inside = (0..nodes)
                .filter(|&n| {
                    let x = setup.grid.coords(n);
                    (0.42..=0.58).contains(&x[0]) && (0.42..=0.58).contains(&x[1])
                })
                .any(|n| r.regions.omega.contains(n));
            let refused = matches!(r.tube, Some(Err(_)));
            ok &= !inside && refused;
            notes.push(format!("inner block excluded {}, tube refused {refused}", !inside));
        }
    }
    check(ok, notes.join(", "))
}

fn carleman_audits() -> Verdict {
    let start = Instant::now();
    let (cfg, setup) = load("audit_1d.cfg")?;
    let b = run_audit_campaign(&cfg, &setup).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let mut ok = b.reports.len() == 3 && secs < 300.0;
    let mut notes = Vec::new();
    for r in &b.reports {
        let s0 = r.s0.unwrap_or(f64::NAN);
        let ratios: Vec<f64> = [1.0, 2.0, 4.0].iter().map(|m| r.ratio_at(m * s0).unwrap_or(f64::NAN)).collect();
        ok &= r.ratios.len() >= 100 && stabilizes(r);
        notes.push(format!(
            "{} ({} samples) s0={s0} R={:.3}/{:.3}/{:.3}",
            r.lemma.name(),
            r.ratios.len(),
            ratios[0],
            ratios[1],
            ratios[2]
        ));
    }
    notes.push(format!("{secs:.1} s"));
    check(ok, notes.join("; "))
}

fn uniqueness_contrapositive() -> Verdict {
    let dir = scenario("");
    let mut names: Vec<String> = std::fs::read_dir(&dir)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok()?.file_name().into_string().ok())
        .filter(|n| n.starts_with("uniqueness_") && n.ends_with(".cfg"))
        .collect();
    names.sort();
    let (mut bump, mut baseline, mut violations) = (f64::NAN, f64::NAN, 0);
    for name in &names {
        let (cfg, setup) = load(name)?;
        let r = run_uniqueness_experiment(&cfg, &setup).map_err(|e| e.to_string())?;
        if matches!(r.classification, Classification::Violation | Classification::BaselineDrift) {
            violations += 1;
        }
        match name.as_str() {
            "uniqueness_bump_1d.cfg" => bump = r.max_discrepancy,
            "uniqueness_baseline_1d.cfg" => baseline = r.max_discrepancy,
            _ => {}
        }
    }
    check(
        bump > 1e-6 && baseline < 1e-9 && violations == 0,
        format!("bump {bump:.3e}, baseline {baseline:.3e}, {violations} violations over {} scenarios", names.len()),
    )
}

fn decay_implication() -> Verdict {
    let (cfg, setup) = load("decay_theta.cfg")?;
    let r = run_decay(&cfg, &setup).map_err(|e| e.to_string())?;
    let imp = &r.implication;
    let held = imp.rows.iter().filter(|row| row.holds).count();
    let slope = imp.trend_slope.unwrap_or(f64::NAN);
    check(
        held == imp.rows.len() && !imp.rows.is_empty() && slope < 0.0,
        format!("bound holds for {held} of {} modes, trend slope {slope:.3}", imp.rows.len()),
    )
}

fn hash_dir(dir: &Path) -> Result<Vec<(String, String)>, String> {
    let manifest = std::fs::read_to_string(dir.join("manifest.txt")).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for line in manifest.lines() {
        let (hash, file) = line.split_once("  ").ok_or_else(|| format!("bad manifest line {line}"))?;
        let bytes = std::fs::read(dir.join(file)).map_err(|e| e.to_string())?;
        if hex::encode(Sha256::digest(&bytes)) != hash {
            return Err(format!("{file} does not match its manifest hash"));
        }
        out.push((file.to_string(), hash.to_string()));
    }
    Ok(out)
}

fn determinism() -> Verdict {
    let runs = [
        ("uniqueness", "uniqueness_bump_1d.cfg"),
        ("corollary", "corollary_equal.cfg"),
        ("audit", "audit_1d.cfg"),
        ("omega", "omega_example_iii.cfg"),
        ("decay", "decay_theta.cfg"),
    ];
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = 0;
    for (cmd, cfg) in runs {
        let mut hashes = Vec::new();
        for rep in 0..2 {
            let out = tmp.path().join(format!("{cmd}_{rep}"));
            let status = Process::new(env!("CARGO_BIN_EXE_niplab"))
                .args([cmd, "--config"])
                .arg(scenario(cfg))
                .arg("--out")
                .arg(&out)
                .output()
                .map_err(|e| e.to_string())?;
            if !status.status.success() {
                return Err(format!("{cmd} exited with {}", status.status));
            }
            hashes.push(hash_dir(&out)?);
        }
        if hashes[0] != hashes[1] {
            return Err(format!("{cmd}: outputs differ between runs"));
        }
        files += hashes[0].len();
    }
    Ok(format!("5 subcommands run twice, {files} files byte-identical"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("eigensolver exactness", eigensolver_exactness),
        ("solver cross-validation", solver_cross_validation),
        ("elliptic transmutation", elliptic_transmutation),
        ("mode separation", mode_separation),
        ("omega fixtures", omega_fixtures),
        ("carleman audits", carleman_audits),
        ("uniqueness contrapositive", uniqueness_contrapositive),
        ("decay implication", decay_implication),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
