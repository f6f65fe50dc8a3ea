//! Scenario engine behind the `niplab` command line.

mod config;
mod output;
mod scenario;

use std::path::Path;

use thiserror::Error;

use crate::fmt::g17;

pub use config::{AuditKind, Config, FieldSpec, FieldTerm, InitialSpec};
pub use output::{emit_outputs, ManifestEntry, OutputSet, PlotSpec};
pub use scenario::{
    initial_data, regions, run_audit_campaign, run_corollary_experiment, run_decay, run_omega,
    run_uniqueness_experiment, stabilizes, AuditBundle, Classification, CorollaryReport, DecayOutcome, OmegaReport,
    Regions, Setup, UniquenessReport, RATE_CHECK_TOL,
};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("report: {0}")]
    Report(String),
    #[error("{0}")]
    Criterion(String),
    #[error(transparent)]
    Mesh(#[from] crate::mesh::MeshError),
    #[error(transparent)]
    Spectral(#[from] crate::spectral::SpectralError),
    #[error(transparent)]
    Forward(#[from] crate::forward::ForwardError),
    #[error(transparent)]
    Modes(#[from] crate::modes::ModeError),
    #[error(transparent)]
    Region(#[from] crate::region::RegionError),
    #[error(transparent)]
    Carleman(#[from] crate::carleman::CarlemanError),
    #[error(transparent)]
    Decay(#[from] crate::decay::DecayError),
}

impl RunnerError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        RunnerError::Io { path: path.display().to_string(), source }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Uniqueness,
    Corollary,
    Audit,
    Omega,
    Decay,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Uniqueness => "uniqueness",
            Command::Corollary => "corollary",
            Command::Audit => "audit",
            Command::Omega => "omega",
            Command::Decay => "decay",
        }
    }
}

/// Result of one command: the criterion verdict and the files written.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub pass: bool,
    pub manifest: Vec<ManifestEntry>,
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "fail"
    }
}

fn uniqueness_outputs(r: &UniquenessReport, setup: &Setup, set: &mut OutputSet) -> Result<(), RunnerError> {
    set.note("classification", r.classification.name());
    set.note("max_discrepancy", g17(r.max_discrepancy));
    set.note("f_norm_omega", g17(r.f_norm_omega));
    set.note("f_norm_off_omega", g17(r.f_norm_off));
    set.note("omega_nodes", r.regions.omega.count());
    set.note("threshold", g17(r.regions.threshold));
    let mut csv = String::from("time,discrepancy\n");
    for (t, d) in r.times.iter().zip(&r.discrepancy_by_time) {
        csv.push_str(&format!("{},{}\n", g17(*t), g17(*d)));
    }
    set.add("discrepancy.csv", csv.into_bytes());
    set.plot("discrepancy.csv", "max |u - v| on gamma", 1, 2, true);
    set.add_with("trace_u.csv", |w| r.trace_u.write_csv(w))?;
    set.add_with("trace_v.csv", |w| r.trace_v.write_csv(w))?;
    set.add_with("omega.csv", |w| r.regions.omega.write_csv(&setup.grid, w))?;
    Ok(())
}

fn corollary_outputs(r: &CorollaryReport, set: &mut OutputSet) -> Result<(), RunnerError> {
    set.note("modes_u", r.modes_u.len());
    set.note("modes_v", r.modes_v.len());
    set.note("matched", r.verdict.matched.len());
    set.note("full_match", r.verdict.full_match);
    set.note("expect_full_match", r.expect_full_match);
    set.note("rate_error_u", g17(r.rate_error_u));
    set.note("rate_error_v", g17(r.rate_error_v));
    for (i, w) in r.modes_u.warnings.iter().chain(&r.modes_v.warnings).enumerate() {
        set.note(&format!("warning_{i}"), w.replace(',', ";"));
    }
    set.add_with("modes_u.csv", |w| r.modes_u.write_csv(w))?;
    set.add_with("modes_v.csv", |w| r.modes_v.write_csv(w))?;
    let mut csv = String::from("mode_u,mode_v,rate_u,rate_v,rate_difference,trace_difference\n");
    for &(i, j, dr, dt) in &r.verdict.matched {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            i,
            j,
            g17(r.modes_u.entries[i].rate),
            g17(r.modes_v.entries[j].rate),
            g17(dr),
            g17(dt)
        ));
    }
    set.add("matches.csv", csv.into_bytes());
    Ok(())
}

fn audit_outputs(b: &AuditBundle, setup: &Setup, set: &mut OutputSet) -> Result<(), RunnerError> {
    for r in &b.reports {
        let name = r.lemma.name();
        set.note(&format!("{name}_s0"), r.s0.map(g17).unwrap_or_else(|| "none".into()));
        set.note(&format!("{name}_constant"), r.constant.map(g17).unwrap_or_else(|| "none".into()));
        set.note(&format!("{name}_stable"), stabilizes(r));
        set.note(&format!("{name}_samples"), r.ratios.len());
        set.note(&format!("{name}_skipped"), r.skipped.len());
        set.note(&format!("{name}_flagged"), r.flagged.len());
        let file = format!("audit_{name}.csv");
        set.add_with(&file, |w| r.write_csv(w))?;
        set.plot(&file, &format!("{name} audit: max ratio against s"), 1, 2, true);
        if !r.eigen_records.is_empty() {
            let mut csv = String::from("index,eigenvalue,sample");
            for s in &r.s_list {
                csv.push_str(&format!(",ratio_s{}", g17(*s)));
            }
            csv.push('\n');
            for e in &r.eigen_records {
                csv.push_str(&format!("{},{},{}", e.index, g17(e.eigenvalue), e.sample));
                for v in &e.ratios {
                    csv.push_str(&format!(",{}", g17(*v)));
                }
                csv.push('\n');
            }
            set.add(&format!("audit_{name}_eigen.csv"), csv.into_bytes());
        }
        if !r.flagged.is_empty() {
            let mut csv = String::from("sample,reason\n");
            for (id, why) in &r.flagged {
                csv.push_str(&format!("{id},{}\n", why.replace(',', ";")));
            }
            set.add(&format!("audit_{name}_flagged.csv"), csv.into_bytes());
        }
    }
    if let Some(c) = &b.boundary_constants {
        set.note("boundary_psi_max_gamma", g17(c.psi_max));
    }
    let mut fields = Vec::new();
    let d;
    if let Some(w) = &b.elliptic_weight {
        d = w.d.clone();
        fields.push(("d", &d));
    }
    if let Some(w) = &b.boundary_weight {
        fields.push(("rho", &w.rho));
        fields.push(("psi", &w.psi));
    }
    if !fields.is_empty() {
        set.add_with("weights.csv", |w| crate::mesh::write_fields_csv(w, &setup.grid, &fields))?;
    }
    Ok(())
}

fn omega_outputs(r: &OmegaReport, setup: &Setup, set: &mut OutputSet) -> Result<(), RunnerError> {
    set.note("threshold", g17(r.regions.threshold));
    set.note("support_nodes", r.regions.support.count());
    set.note("gamma_nodes", r.regions.gamma_pos.count());
    set.note("omega_nodes", r.regions.omega.count());
    if let Some(m) = r.matches_expected {
        set.note("matches_expected", m);
    }
    match &r.tube {
        Some(Ok(t)) => set.note("omega_y_nodes", t.mask.count()),
        Some(Err(e)) => set.note("omega_y_error", e.replace(',', ";")),
        None => {}
    }
    set.add_with("omega.csv", |w| r.regions.omega.write_csv(&setup.grid, w))?;
    set.add_with("support.csv", |w| r.regions.support.write_csv(&setup.grid, w))?;
    set.add_with("gamma.csv", |w| r.regions.gamma_pos.write_csv(&setup.grid, w))?;
    if setup.grid.dim() == 2 {
        set.add("omega.txt", r.regions.omega.to_ascii(&setup.grid).into_bytes());
    }
    Ok(())
}

fn decay_outputs(r: &DecayOutcome, set: &mut OutputSet) -> Result<(), RunnerError> {
    let labels = ["theta", "linear", "square_root"];
    for (label, c) in labels.iter().zip(&r.conditions) {
        set.note(&format!("{label}_condition"), verdict(c.pass));
        set.add_with(&format!("decay_{label}.csv"), |w| c.write_csv(w))?;
    }
    let imp = &r.implication;
    set.note("s0", g17(imp.audit.s0));
    set.note("audit_ratio", g17(imp.audit.ratio));
    set.note("psi_max_gamma", g17(imp.audit.psi_max));
    set.note("trace_constant", g17(imp.trace_constant));
    set.note("s_star", g17(imp.s_star));
    set.note("C", g17(imp.c));
    set.note("C1", g17(imp.c1));
    set.note("C2", g17(imp.c2));
    set.note("trend_slope", imp.trend_slope.map(g17).unwrap_or_else(|| "none".into()));
    set.note("tail_start", imp.tail_start.map(|k| k.to_string()).unwrap_or_else(|| "none".into()));
    set.note("ln_q_sum", g17(imp.ln_q_sum));
    set.note("ln_bound_sum", g17(imp.ln_bound_sum));
    set.note("ln_envelope_sum", g17(imp.ln_envelope_sum));
    set.note("unmatched_modes", r.unmatched.len());
    set.note("implication", verdict(imp.pass));
    set.add_with("implication.csv", |w| imp.write_csv(w))?;
    set.add_with("audit_boundary.csv", |w| r.boundary_audit.write_csv(w))?;
    set.plot("implication.csv", "|Q_k a|^2 against eigenvalue", 2, 4, true);
    Ok(())
}

/// Runs one command for a scenario and writes its outputs to `out`.
pub fn run_command(cmd: Command, cfg: &Config, out: &Path) -> Result<RunOutcome, RunnerError> {
    let setup = Setup::build(cfg)?;
    let mut set = OutputSet::default();
    set.note("command", cmd.name());
    set.note("scenario", &cfg.name);
    set.note("seed", cfg.seed);
    set.note("digest", cfg.digest());
    set.note("shift", g17(setup.shift));
    let pass = match cmd {
        Command::Uniqueness => {
            let r = run_uniqueness_experiment(cfg, &setup)?;
            uniqueness_outputs(&r, &setup, &mut set)?;
            r.pass()
        }
        Command::Corollary => {
            let r = run_corollary_experiment(cfg, &setup)?;
            corollary_outputs(&r, &mut set)?;
            r.pass()
        }
        Command::Audit => {
            let b = run_audit_campaign(cfg, &setup)?;
            audit_outputs(&b, &setup, &mut set)?;
            b.pass()
        }
        Command::Omega => {
            let r = run_omega(cfg, &setup)?;
            omega_outputs(&r, &setup, &mut set)?;
            r.pass()
        }
        Command::Decay => {
            let r = run_decay(cfg, &setup)?;
            decay_outputs(&r, &mut set)?;
            r.pass()
        }
    };
    set.note("verdict", verdict(pass));
    let manifest = emit_outputs(&set, out)?;
    Ok(RunOutcome { pass, manifest })
}
