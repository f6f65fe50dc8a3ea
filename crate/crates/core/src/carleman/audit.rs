//! Sampled audits of the three Carleman inequalities.
//!
//! Every audit reduces a sample to weighted sums of the form
//! `sum_p sum_k s^{k} c_{p,k} exp(2 s alpha_p)` and evaluates them in log
//! space, so the huge dynamic range of the weights never overflows.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fmt::g17;
use crate::mesh::{BoundaryMask, Grid, OperatorMatrix, ScalarField};
use crate::region::OmegaY;
use crate::spectral::{spectral_apply, SpectralDecomposition};

use super::weights::{smoothstep5, BoundaryWeight, EllipticWeight, ParabolicWeight};
use super::CarlemanError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lemma {
    /// Local elliptic estimate on the tube times `(-tau, tau)`.
    Elliptic,
    /// Global elliptic estimate with boundary observation on `gamma`.
    Boundary,
    /// Global parabolic estimate with boundary observation on `gamma`.
    Parabolic,
}

impl Lemma {
    pub fn name(&self) -> &'static str {
        match self {
            Lemma::Elliptic => "elliptic",
            Lemma::Boundary => "boundary",
            Lemma::Parabolic => "parabolic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditRow {
    pub s: f64,
    pub max_ratio: f64,
    pub argmax_sample: usize,
    /// `;`-separated flags (`growing`, `rhs_zero`), empty when clean.
    pub flags: String,
}

/// Ratios recorded for one eigenvector sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenRecord {
    pub index: usize,
    pub eigenvalue: f64,
    pub sample: usize,
    pub ratios: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub lemma: Lemma,
    pub s_list: Vec<f64>,
    pub rows: Vec<AuditRow>,
    /// `ratios[sample][j]` at `s_list[j]`; NaN for skipped samples.
    pub ratios: Vec<Vec<f64>>,
    /// Samples with both sides zero.
    pub skipped: Vec<usize>,
    /// Samples flagged for inspection, with the reason.
    pub flagged: Vec<(usize, String)>,
    pub eigen_records: Vec<EigenRecord>,
    /// Smallest scanned `s` after which the ratio curve stays flat.
    pub s0: Option<f64>,
    /// Largest ratio over `[s0, 4 s0]`.
    pub constant: Option<f64>,
}

impl AuditReport {
    pub fn evaluated(&self) -> usize {
        self.ratios.len() - self.skipped.len()
    }

    /// Max ratio at the scanned value closest to `s`.
    pub fn ratio_at(&self, s: f64) -> Option<f64> {
        self.rows
            .iter()
            .min_by(|a, b| (a.s / s).ln().abs().total_cmp(&(b.s / s).ln().abs()))
            .map(|r| r.max_ratio)
    }

    /// Columns `s,max_ratio,argmax_sample_id,flags`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "s,max_ratio,argmax_sample_id,flags")?;
        for r in &self.rows {
            writeln!(out, "{},{},{},{}", g17(r.s), g17(r.max_ratio), r.argmax_sample, r.flags)?;
        }
        Ok(())
    }
}

/// `2^-3, 2^-2, ..., 2^6`.
pub fn default_s_list() -> Vec<f64> {
    (-3..=6).map(|k| 2f64.powi(k)).collect()
}

fn index_of(s_list: &[f64], s: f64) -> Option<usize> {
    s_list.iter().position(|&v| (v / s - 1.0).abs() < 1e-9)
}

/// Index of the smallest `s` with `R(2s) <= 1.1 R(s)` and `R(4s) <= 1.1 R(s)`.
pub fn find_s0(s_list: &[f64], ratios: &[f64]) -> Option<usize> {
    (0..s_list.len()).find(|&i| {
        let (Some(j), Some(k)) = (index_of(s_list, 2.0 * s_list[i]), index_of(s_list, 4.0 * s_list[i])) else {
            return false;
        };
        ratios[i].is_finite() && ratios[j] <= 1.1 * ratios[i] && ratios[k] <= 1.1 * ratios[i]
    })
}

/// `sum_p sum_k s^{powers[k]} coef[p][k] exp(2 s alpha_p)`.
struct WeightedForm {
    powers: Vec<i32>,
    alpha: Vec<f64>,
    /// `ln coef`, row-major (point, power); `-inf` for zero coefficients.
    ln_coef: Vec<f64>,
}

impl WeightedForm {
    fn new(powers: &[i32]) -> Self {
        WeightedForm { powers: powers.to_vec(), alpha: Vec::new(), ln_coef: Vec::new() }
    }

    fn push(&mut self, alpha: f64, coefs: &[f64]) {
        debug_assert_eq!(coefs.len(), self.powers.len());
        self.alpha.push(alpha);
        self.ln_coef.extend(coefs.iter().map(|c| c.ln()));
    }

    fn ln_value(&self, s: f64) -> f64 {
        let k = self.powers.len();
        let ln_s: Vec<f64> = self.powers.iter().map(|&p| p as f64 * s.ln()).collect();
        let exponent = |p: usize, j: usize| ln_s[j] + self.ln_coef[p * k + j] + 2.0 * s * self.alpha[p];
        let mut top = f64::NEG_INFINITY;
        for p in 0..self.alpha.len() {
            for j in 0..k {
                top = top.max(exponent(p, j));
            }
        }
        if top == f64::NEG_INFINITY {
            return top;
        }
        let mut sum = 0.0;
        for p in 0..self.alpha.len() {
            for j in 0..k {
                sum += (exponent(p, j) - top).exp();
            }
        }
        top + sum.ln()
    }
}

enum Outcome {
    Ratio(f64),
    Zero,
    RhsZero,
}

fn ratio(lhs: &WeightedForm, rhs: &WeightedForm, s: f64) -> Outcome {
    let l = lhs.ln_value(s);
    let r = rhs.ln_value(s);
    match (l == f64::NEG_INFINITY, r == f64::NEG_INFINITY) {
        (true, true) => Outcome::Zero,
        (false, true) => Outcome::RhsZero,
        _ => Outcome::Ratio((l - r).exp()),
    }
}

/// Evaluates all samples over the `s` list and assembles the report.
fn assemble(lemma: Lemma, s_list: &[f64], samples: &[(WeightedForm, WeightedForm)]) -> AuditReport {
    let mut ratios = Vec::with_capacity(samples.len());
    let mut skipped = Vec::new();
    let mut flagged = Vec::new();
    let mut rhs_zero_at = vec![false; s_list.len()];
    for (id, (lhs, rhs)) in samples.iter().enumerate() {
        let mut row = Vec::with_capacity(s_list.len());
        let mut zero = true;
        for (j, &s) in s_list.iter().enumerate() {
            match ratio(lhs, rhs, s) {
                Outcome::Ratio(r) => {
                    zero = false;
                    row.push(r);
                }
                Outcome::Zero => row.push(f64::NAN),
                Outcome::RhsZero => {
                    zero = false;
                    rhs_zero_at[j] = true;
                    row.push(f64::INFINITY);
                }
            }
        }
        if zero {
            skipped.push(id);
        } else if row.iter().any(|r| r.is_infinite()) {
            flagged.push((id, "right-hand side vanishes with nonzero left-hand side".to_string()));
        }
        ratios.push(row);
    }

    let mut rows: Vec<AuditRow> = Vec::with_capacity(s_list.len());
    for (j, &s) in s_list.iter().enumerate() {
        let (argmax, max_ratio) = ratios
            .iter()
            .enumerate()
            .filter(|(_, r)| r[j].is_finite())
            .map(|(i, r)| (i, r[j]))
            .fold((0, f64::NAN), |(bi, bv), (i, v)| if bv.is_nan() || v > bv { (i, v) } else { (bi, bv) });
        let mut flags = Vec::new();
        if let Some(prev) = rows.last() {
            if max_ratio > 1.1 * prev.max_ratio {
                flags.push("growing");
            }
        }
        if rhs_zero_at[j] {
            flags.push("rhs_zero");
        }
        rows.push(AuditRow { s, max_ratio, argmax_sample: argmax, flags: flags.join(";") });
    }
    let maxima: Vec<f64> = rows.iter().map(|r| r.max_ratio).collect();
    let s0_index = find_s0(s_list, &maxima);
    let constant = s0_index.map(|i| {
        let s0 = s_list[i];
        s_list
            .iter()
            .zip(&maxima)
            .filter(|(s, _)| **s >= s0 * (1.0 - 1e-9) && **s <= 4.0 * s0 * (1.0 + 1e-9))
            .map(|(_, r)| *r)
            .fold(f64::NEG_INFINITY, f64::max)
    });
    AuditReport {
        lemma,
        s_list: s_list.to_vec(),
        rows,
        ratios,
        skipped,
        flagged,
        eigen_records: Vec::new(),
        s0: s0_index.map(|i| s_list[i]),
        constant,
    }
}

/// Gradient with the mirror closure: zero normal component on the boundary.
fn neumann_gradient(grid: &Grid, f: &[f64], n: usize) -> [f64; 2] {
    let mut g = [0.0; 2];
    for (axis, gv) in g.iter_mut().enumerate().take(grid.dim()) {
        if let (Some(a), Some(b)) = (grid.step(n, axis, false), grid.step(n, axis, true)) {
            *gv = (f[b] - f[a]) / (2.0 * grid.spacing()[axis]);
        }
    }
    g
}

/// Quadrature weight of a `gamma` node for surface integrals (1 in 1D).
fn surface_weight(grid: &Grid, n: usize) -> f64 {
    if grid.dim() == 1 {
        return 1.0;
    }
    let face = grid.face(n).expect("gamma node lies on a face");
    let t_axis = 1 - face.axis;
    let idx = grid.multi_index(n)[t_axis];
    let end = idx == 0 || idx + 1 == grid.counts()[t_axis];
    grid.spacing()[t_axis] * if end { 0.5 } else { 1.0 }
}

/// Random Neumann-compatible smooth field `exp(-eps A) r` with `r` uniform
/// in `[-1, 1]` and `eps` drawn relative to the domain size.
fn smoothed_random(
    grid: &Grid,
    dec: &SpectralDecomposition,
    rng: &mut ChaCha8Rng,
) -> Result<ScalarField, CarlemanError> {
    let ext = grid.extents().iter().fold(0.0_f64, |m, v| m.max(*v));
    let eps = rng.gen_range(0.001..0.05) * ext * ext;
    let r = ScalarField::from_vec((0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect());
    Ok(spectral_apply(dec, |l| (-eps * l).exp(), &r)?)
}

/// Inputs of the local elliptic audit.
pub struct EllipticAuditInput<'a> {
    pub grid: &'a Grid,
    /// Operators sharing one reported constant (e.g. built from `c` and `2c`).
    pub operators: Vec<&'a OperatorMatrix>,
    pub tube: &'a OmegaY,
    pub weight: &'a EllipticWeight,
    pub tau: f64,
    pub time_points: usize,
    pub samples: usize,
    pub seed: u64,
}

/// Space cutoff: zero within 2 cells of the tube complement, then a
/// smoothstep ramp.
fn tube_cutoff(grid: &Grid, tube: &OmegaY) -> Vec<f64> {
    let n = grid.len();
    let mut dist = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::new();
    for p in 0..n {
        if !tube.mask.contains(p) {
            dist[p] = 0;
            queue.push_back(p);
        }
    }
    // the grid edge counts as complement one cell further out
    for p in tube.mask.nodes() {
        if grid.is_boundary(p) && dist[p] == usize::MAX {
            dist[p] = 1;
            queue.push_back(p);
        }
    }
    while let Some(p) = queue.pop_front() {
        for q in grid.neighbors(p) {
            if dist[q] == usize::MAX {
                dist[q] = dist[p] + 1;
                queue.push_back(q);
            }
        }
    }
    let deepest = tube.mask.nodes().iter().map(|&p| dist[p]).max().unwrap_or(0);
    let ramp = (deepest.saturating_sub(2)).clamp(1, 6) as f64;
    (0..n)
        .map(|p| if dist[p] <= 2 || dist[p] == usize::MAX { 0.0 } else { smoothstep5((dist[p] - 2) as f64 / ramp) })
        .collect()
}

fn time_cutoff(points: usize) -> Vec<f64> {
    let half = (points - 1) / 2;
    let ramp = (half.saturating_sub(2)).clamp(1, (points / 4).max(1)) as f64;
    (0..points)
        .map(|j| {
            let k = j.min(points - 1 - j);
            if k <= 2 { 0.0 } else { smoothstep5((k - 2) as f64 / ramp) }
        })
        .collect()
}

/// Audits the local elliptic estimate on the tube times `(-tau, tau)`:
/// `(1/s) sum |d_i d_j w|^2 + s |w_t|^2 + s |grad w|^2 + s^3 |w|^2` against
/// `|w_tt - A w|^2`, both weighted by `exp(2 s alpha)`.
pub fn audit_elliptic_carleman(input: &EllipticAuditInput, s_list: &[f64]) -> Result<AuditReport, CarlemanError> {
    let grid = input.grid;
    let nt = input.time_points.max(7);
    let dt = 2.0 * input.tau / (nt - 1) as f64;
    let times: Vec<f64> = (0..nt).map(|j| -input.tau + j as f64 * dt).collect();
    let nodes = input.tube.mask.nodes();
    if nodes.is_empty() {
        return Err(CarlemanError::Setup("empty tube".into()));
    }
    let cx = tube_cutoff(grid, input.tube);
    let ct = time_cutoff(nt);
    let cell: f64 = grid.spacing().iter().product();
    let h = grid.spacing();

    // normalized coordinates over the tube's bounding box
    let lo: Vec<f64> = (0..grid.dim())
        .map(|d| nodes.iter().map(|&p| grid.coords(p)[d]).fold(f64::INFINITY, f64::min))
        .collect();
    let hi: Vec<f64> = (0..grid.dim())
        .map(|d| nodes.iter().map(|&p| grid.coords(p)[d]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let unit = |p: usize, d: usize| {
        let span = (hi[d] - lo[d]).max(f64::MIN_POSITIVE);
        (grid.coords(p)[d] - lo[d]) / span
    };

    let mut rng = ChaCha8Rng::seed_from_u64(input.seed);
    let modes = 4usize;
    let ny = if grid.dim() == 2 { modes } else { 1 };
    let mut forms = Vec::new();
    for _ in 0..input.samples {
        let coef: Vec<f64> = (0..modes * ny * modes)
            .map(|k| {
                let (p, q, m) = (k % modes, (k / modes) % ny, k / (modes * ny));
                rng.gen_range(-1.0..1.0) / (1.0 + (p + q + m) as f64).powi(2)
            })
            .collect();
        let w: Vec<Vec<f64>> = (0..nt)
            .map(|j| {
                let zeta = j as f64 / (nt - 1) as f64;
                (0..grid.len())
                    .map(|p| {
                        if cx[p] == 0.0 || ct[j] == 0.0 {
                            return 0.0;
                        }
                        let mut r = 0.0;
                        for (k, c) in coef.iter().enumerate() {
                            let (a, b, m) = (k % modes, (k / modes) % ny, k / (modes * ny));
                            let mut term = c * (std::f64::consts::PI * a as f64 * unit(p, 0)).cos();
                            if grid.dim() == 2 {
                                term *= (std::f64::consts::PI * b as f64 * unit(p, 1)).cos();
                            }
                            r += term * (std::f64::consts::PI * m as f64 * zeta).cos();
                        }
                        r * cx[p] * ct[j]
                    })
                    .collect()
            })
            .collect();
        for op in &input.operators {
            forms.push(elliptic_forms(grid, op, &nodes, &w, &times, dt, cell, h, input.weight));
        }
    }
    // order sample ids as (sample, operator)
    Ok(assemble(Lemma::Elliptic, s_list, &forms))
}

#[allow(clippy::too_many_arguments)]
fn elliptic_forms(
    grid: &Grid,
    op: &OperatorMatrix,
    nodes: &[usize],
    w: &[Vec<f64>],
    times: &[f64],
    dt: f64,
    cell: f64,
    h: &[f64],
    weight: &EllipticWeight,
) -> (WeightedForm, WeightedForm) {
    let nt = times.len();
    let aw: Vec<Vec<f64>> = w.iter().map(|slice| op.apply(slice)).collect();
    let mut lhs = WeightedForm::new(&[-1, 1, 3]);
    let mut rhs = WeightedForm::new(&[0]);
    // w vanishes near the grid edge, so a missing neighbor reads as zero
    let at = |f: &[f64], q: Option<usize>| q.map_or(0.0, |q| f[q]);
    let dx = |f: &[f64], p: Option<usize>, axis: usize| match p {
        Some(p) => (at(f, grid.step(p, axis, true)) - at(f, grid.step(p, axis, false))) / (2.0 * h[axis]),
        None => 0.0,
    };
    for j in 1..nt - 1 {
        let (prev, cur, next) = (&w[j - 1], &w[j], &w[j + 1]);
        let q = cell * dt;
        for &p in nodes {
            let u = cur[p];
            let ut = (next[p] - prev[p]) / (2.0 * dt);
            let utt = (next[p] - 2.0 * u + prev[p]) / (dt * dt);
            let mut second = utt * utt;
            let mut grad2 = 0.0;
            for axis in 0..grid.dim() {
                let a = at(cur, grid.step(p, axis, false));
                let b = at(cur, grid.step(p, axis, true));
                let ux = (b - a) / (2.0 * h[axis]);
                grad2 += ux * ux;
                let uxx = (b - 2.0 * u + a) / (h[axis] * h[axis]);
                second += uxx * uxx;
                let utx = (dx(next, Some(p), axis) - dx(prev, Some(p), axis)) / (2.0 * dt);
                second += 2.0 * utx * utx;
            }
            if grid.dim() == 2 {
                let uxy = (dx(cur, grid.step(p, 1, true), 0) - dx(cur, grid.step(p, 1, false), 0)) / (2.0 * h[1]);
                second += 2.0 * uxy * uxy;
            }
            let alpha = weight.alpha(p, times[j]);
            lhs.push(alpha, &[second * q, (ut * ut + grad2) * q, u * u * q]);
            let res = utt - aw[j][p];
            rhs.push(alpha, &[res * res * q]);
        }
    }
    (lhs, rhs)
}

/// Inputs of the boundary-observation elliptic audit.
pub struct BoundaryAuditInput<'a> {
    pub grid: &'a Grid,
    pub operator: &'a OperatorMatrix,
    pub decomposition: &'a SpectralDecomposition,
    pub weight: &'a BoundaryWeight,
    pub gamma: &'a BoundaryMask,
    pub samples: usize,
    /// Number of lowest eigenvectors appended as samples.
    pub eigenvectors: usize,
    /// Additional caller-supplied samples, appended last.
    pub extra: Vec<ScalarField>,
    pub seed: u64,
}

fn boundary_forms(input: &BoundaryAuditInput, g: &ScalarField, quad: &[f64]) -> (WeightedForm, WeightedForm) {
    let grid = input.grid;
    let f = g.values();
    let ag = input.operator.apply(f);
    let psi = input.weight.psi.values();
    let mut lhs = WeightedForm::new(&[1, 3]);
    let mut rhs = WeightedForm::new(&[0, 3]);
    for n in 0..grid.len() {
        let gr = neumann_gradient(grid, f, n);
        let grad2 = gr[0] * gr[0] + gr[1] * gr[1];
        lhs.push(psi[n], &[grad2 * quad[n], f[n] * f[n] * quad[n]]);
        rhs.push(psi[n], &[ag[n] * ag[n] * quad[n], 0.0]);
    }
    for &n in input.gamma.nodes() {
        let gr = neumann_gradient(grid, f, n);
        let sw = surface_weight(grid, n);
        rhs.push(psi[n], &[0.0, (f[n] * f[n] + gr[0] * gr[0] + gr[1] * gr[1]) * sw]);
    }
    (lhs, rhs)
}

/// Audits `s^3 int |g|^2 e^{2 s psi} + s int |grad g|^2 e^{2 s psi}` against
/// `int |A g|^2 e^{2 s psi} + s^3 int_gamma (|g|^2 + |grad g|^2) e^{2 s psi}`.
///
/// Samples whose ratio exceeds ten times the median at some `s` are flagged.
pub fn audit_boundary_carleman(input: &BoundaryAuditInput, s_list: &[f64]) -> Result<AuditReport, CarlemanError> {
    let grid = input.grid;
    let quad = grid.quadrature_weights();
    let mut rng = ChaCha8Rng::seed_from_u64(input.seed);
    let mut forms = Vec::new();
    for _ in 0..input.samples {
        let g = smoothed_random(grid, input.decomposition, &mut rng)?;
        forms.push(boundary_forms(input, &g, &quad));
    }
    let dec = input.decomposition;
    let mut eigen = Vec::new();
    for k in 0..input.eigenvectors.min(dec.clusters().len()) {
        let j = dec.clusters()[k].members.start;
        let v = ScalarField::from_vec(dec.eigenvector(j).to_vec());
        eigen.push((k, dec.clusters()[k].representative, forms.len()));
        forms.push(boundary_forms(input, &v, &quad));
    }
    for g in &input.extra {
        forms.push(boundary_forms(input, g, &quad));
    }
    let mut report = assemble(Lemma::Boundary, s_list, &forms);
    for (j, _) in s_list.iter().enumerate() {
        let mut col: Vec<f64> = report.ratios.iter().map(|r| r[j]).filter(|v| v.is_finite()).collect();
        if col.is_empty() {
            continue;
        }
        col.sort_by(f64::total_cmp);
        let median = col[col.len() / 2];
        for (id, r) in report.ratios.iter().enumerate() {
            if r[j].is_finite() && r[j] > 10.0 * median && !report.flagged.iter().any(|f| f.0 == id) {
                report.flagged.push((id, format!("ratio {} exceeds ten times the median at s = {}", g17(r[j]), g17(s_list[j]))));
            }
        }
    }
    report.flagged.sort_by_key(|f| f.0);
    report.eigen_records = eigen
        .into_iter()
        .map(|(index, eigenvalue, sample)| EigenRecord { index, eigenvalue, sample, ratios: report.ratios[sample].clone() })
        .collect();
    Ok(report)
}

/// Inputs of the parabolic audit.
pub struct ParabolicAuditInput<'a> {
    pub grid: &'a Grid,
    pub operator: &'a OperatorMatrix,
    pub decomposition: &'a SpectralDecomposition,
    pub weight: &'a ParabolicWeight,
    pub gamma: &'a BoundaryMask,
    pub time_points: usize,
    pub samples: usize,
    pub seed: u64,
}

/// Audits `int (s phi |grad U|^2 + s^3 phi^3 |U|^2) e^{2 s alpha}` against
/// `int |U_t - A U|^2 e^{2 s alpha} + int_gamma (|U_t|^2 + s phi |grad U|^2 + s^3 phi^3 |U|^2) e^{2 s alpha}`
/// on `[T/20, 19T/20]`. Sample 0 is static in time.
pub fn audit_parabolic_carleman(input: &ParabolicAuditInput, s_list: &[f64]) -> Result<AuditReport, CarlemanError> {
    let grid = input.grid;
    let t_end = input.weight.profile.t_end;
    let nt = input.time_points.max(3);
    let (t0, t1) = (t_end / 20.0, 19.0 * t_end / 20.0);
    let dt = (t1 - t0) / (nt - 1) as f64;
    let quad = grid.quadrature_weights();
    let mut rng = ChaCha8Rng::seed_from_u64(input.seed);
    let components = 3;
    let harmonics = 4;
    let mut forms = Vec::new();
    for sample in 0..input.samples {
        let count = if sample == 0 { 1 } else { components };
        let mut parts = Vec::with_capacity(count);
        for _ in 0..count {
            let g = smoothed_random(grid, input.decomposition, &mut rng)?;
            let coef: Vec<f64> = if sample == 0 {
                let mut c = vec![0.0; harmonics];
                c[0] = 1.0;
                c
            } else {
                (0..harmonics).map(|j| rng.gen_range(-1.0..1.0) / (1.0 + j as f64)).collect()
            };
            let ag = input.operator.apply(g.values());
            let grads: Vec<[f64; 2]> = (0..grid.len()).map(|n| neumann_gradient(grid, g.values(), n)).collect();
            parts.push((g, ag, grads, coef));
        }
        let mut lhs = WeightedForm::new(&[1, 3]);
        let mut rhs = WeightedForm::new(&[0, 1, 3]);
        for i in 0..nt {
            let t = t0 + i as f64 * dt;
            let tw = if i == 0 || i + 1 == nt { 0.5 * dt } else { dt };
            let (mut p, mut dp) = (vec![0.0; count], vec![0.0; count]);
            for (m, part) in parts.iter().enumerate() {
                for (j, c) in part.3.iter().enumerate() {
                    let k = std::f64::consts::PI * j as f64 / t_end;
                    p[m] += c * (k * t).cos();
                    dp[m] -= c * k * (k * t).sin();
                }
            }
            for n in 0..grid.len() {
                let (mut u, mut ut, mut au) = (0.0, 0.0, 0.0);
                let mut gr = [0.0; 2];
                for (m, part) in parts.iter().enumerate() {
                    u += part.0.values()[n] * p[m];
                    ut += part.0.values()[n] * dp[m];
                    au += part.1[n] * p[m];
                    gr[0] += part.2[n][0] * p[m];
                    gr[1] += part.2[n][1] * p[m];
                }
                let phi = input.weight.phi(n, t);
                let alpha = input.weight.alpha(n, t);
                let grad2 = gr[0] * gr[0] + gr[1] * gr[1];
                let q = quad[n] * tw;
                lhs.push(alpha, &[phi * grad2 * q, phi.powi(3) * u * u * q]);
                let res = ut - au;
                rhs.push(alpha, &[res * res * q, 0.0, 0.0]);
                if input.gamma.contains(n) {
                    let sw = surface_weight(grid, n) * tw;
                    rhs.push(alpha, &[ut * ut * sw, phi * grad2 * sw, phi.powi(3) * u * u * sw]);
                }
            }
        }
        forms.push((lhs, rhs));
    }
    Ok(assemble(Lemma::Parabolic, s_list, &forms))
}
