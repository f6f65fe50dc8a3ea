//! Recovery of decay rates and boundary traces from a sum of decaying
//! exponentials `g(t) = sum_k e^{-lambda_k t} b_k` observed on `gamma`.
//!
//! Rates are peeled off one at a time from successively earlier time windows
//! and then refined jointly by Levenberg–Marquardt.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::fmt::g17;
use crate::forward::TraceSeries;

#[derive(Debug, Error)]
pub enum ModeError {
    #[error("trace norm grows from {first:e} to {last:e}; input is not a decaying signal")]
    NotDecaying { first: f64, last: f64 },
    #[error("need at least {need} sample times, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("max_modes must be at least 1")]
    NoModes,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeEntry {
    pub rate: f64,
    /// Boundary trace `b_k` on the `gamma` nodes.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeSeries {
    /// Sorted by ascending rate.
    pub entries: Vec<ModeEntry>,
    /// Frobenius norm of the fit residual over all samples.
    pub residual_norm: f64,
    /// Recovered index set; `0..len` until mapped onto a spectrum with
    /// [`ModeSeries::assign_indices`].
    pub active_indices: Vec<usize>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationOptions {
    pub max_modes: usize,
    /// Stop once the residual drops below `tol * ||g||`.
    pub tol: f64,
    /// Traces with norm below `deflation * ||g(t_first)||` are discarded.
    pub deflation: f64,
    /// Rates closer than this are merged.
    pub rate_merge_tol: f64,
    /// Fraction of the samples in each peeling window.
    pub window_fraction: f64,
    pub max_iterations: usize,
}

impl Default for SeparationOptions {
    fn default() -> Self {
        SeparationOptions {
            max_modes: 3,
            tol: 1e-10,
            deflation: 1e-8,
            rate_merge_tol: 1e-6,
            window_fraction: 0.25,
            max_iterations: 200,
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn frobenius(rows: &[Vec<f64>]) -> f64 {
    rows.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

impl ModeSeries {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn rates(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.rate).collect()
    }

    /// Maps each rate onto the index of the nearest value in `spectrum`
    /// (ascending cluster representatives).
    pub fn assign_indices(&mut self, spectrum: &[f64]) {
        self.active_indices = self
            .entries
            .iter()
            .map(|e| {
                spectrum
                    .iter()
                    .enumerate()
                    .min_by(|a, b| (a.1 - e.rate).abs().total_cmp(&(b.1 - e.rate).abs()))
                    .map(|(i, _)| i)
                    .unwrap_or(0)
            })
            .collect();
    }

    /// Model value `sum_k e^{-rate_k t} b_k`.
    pub fn evaluate(&self, t: f64, nodes: usize) -> Vec<f64> {
        let mut out = vec![0.0; nodes];
        for e in &self.entries {
            let f = (-e.rate * t).exp();
            for (o, b) in out.iter_mut().zip(&e.trace) {
                *o += f * b;
            }
        }
        out
    }

    /// One row per mode: `mode,rate,residual,b0,b1,...`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<(), ModeError> {
        let width = self.entries.first().map_or(0, |e| e.trace.len());
        let mut header = String::from("mode,rate,residual");
        for j in 0..width {
            header.push_str(&format!(",b{j}"));
        }
        writeln!(out, "{header}")?;
        for (k, e) in self.entries.iter().enumerate() {
            let mut line = format!("{},{},{}", self.active_indices[k], g17(e.rate), g17(self.residual_norm));
            for b in &e.trace {
                line.push(',');
                line.push_str(&g17(*b));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

fn empty_series() -> ModeSeries {
    ModeSeries { entries: Vec::new(), residual_norm: 0.0, active_indices: Vec::new(), warnings: Vec::new() }
}

/// Least-squares slope of `ln |y|` against `t` over the leading run of
/// samples sharing the sign of the first one.
fn log_slope(t: &[f64], y: &[f64]) -> Option<f64> {
    let sign = y.first()?.signum();
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .take_while(|(_, v)| v.signum() == sign && **v != 0.0)
        .map(|(t, v)| (*t, v.abs().ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Peels exponentials from the trace and refines them jointly.
pub fn separate_modes(trace: &TraceSeries, opts: &SeparationOptions) -> Result<ModeSeries, ModeError> {
    if opts.max_modes == 0 {
        return Err(ModeError::NoModes);
    }
    let times = &trace.times;
    let samples = times.len();
    if samples < 4 {
        return Err(ModeError::TooFewSamples { need: 4, got: samples });
    }
    let g = &trace.values;
    let total = frobenius(g);
    if total == 0.0 {
        return Ok(empty_series());
    }
    let first = norm(&g[0]);
    let last = norm(&g[samples - 1]);
    if last > first {
        return Err(ModeError::NotDecaying { first, last });
    }
    let floor = opts.deflation * first;
    let width = ((samples as f64 * opts.window_fraction).ceil() as usize).max(2);

    let mut residual: Vec<Vec<f64>> = g.clone();
    let mut entries: Vec<ModeEntry> = Vec::new();
    let mut earliest = samples;
    for window in 0..opts.max_modes {
        if frobenius(&residual) < opts.tol * total {
            break;
        }
        let end = match samples.checked_sub(window * width) {
            Some(e) if e >= 2 => e,
            _ => break,
        };
        let start = end.saturating_sub(width);
        let win = start..end;
        // dominant node over the window
        let node = (0..trace.nodes.len())
            .max_by(|&a, &b| {
                let sa: f64 = win.clone().map(|i| residual[i][a].abs()).sum();
                let sb: f64 = win.clone().map(|i| residual[i][b].abs()).sum();
                sa.total_cmp(&sb)
            })
            .unwrap_or(0);
        let ys: Vec<f64> = win.clone().map(|i| residual[i][node]).collect();
        let Some(slope) = log_slope(&times[win.clone()], &ys) else {
            break;
        };
        let rate = -slope;
        if !(rate > 0.0 && rate.is_finite()) {
            break;
        }
        let mut b = vec![0.0; trace.nodes.len()];
        for i in win.clone() {
            let f = (rate * times[i]).exp();
            for (bj, r) in b.iter_mut().zip(&residual[i]) {
                *bj += f * r / win.len() as f64;
            }
        }
        if norm(&b) < floor {
            break;
        }
        for (i, row) in residual.iter_mut().enumerate() {
            let f = (-rate * times[i]).exp();
            for (r, bj) in row.iter_mut().zip(&b) {
                *r -= f * bj;
            }
        }
        entries.push(ModeEntry { rate, trace: b });
        earliest = start;
    }
    if entries.is_empty() {
        let mut s = empty_series();
        s.residual_norm = total;
        return Ok(s);
    }

    refine(times, g, earliest, &mut entries, opts.max_iterations);

    entries.sort_by(|a, b| a.rate.total_cmp(&b.rate));
    let mut warnings = Vec::new();
    let mut merged: Vec<ModeEntry> = Vec::new();
    for e in entries {
        match merged.last_mut() {
            Some(prev) if (e.rate - prev.rate).abs() <= opts.rate_merge_tol => {
                warnings.push(format!(
                    "rates {} and {} collide within {}; merged",
                    g17(prev.rate),
                    g17(e.rate),
                    g17(opts.rate_merge_tol)
                ));
                prev.rate = 0.5 * (prev.rate + e.rate);
                for (p, b) in prev.trace.iter_mut().zip(&e.trace) {
                    *p += b;
                }
            }
            _ => merged.push(e),
        }
    }
    merged.retain(|e| norm(&e.trace) >= floor && e.rate.is_finite());

    let mut series = ModeSeries {
        active_indices: (0..merged.len()).collect(),
        entries: merged,
        residual_norm: 0.0,
        warnings,
    };
    let m = trace.nodes.len();
    series.residual_norm = times
        .iter()
        .zip(g)
        .map(|(&t, row)| {
            let model = series.evaluate(t, m);
            row.iter().zip(&model).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        })
        .sum::<f64>()
        .sqrt();
    Ok(series)
}

/// Joint Levenberg–Marquardt fit of all rates and traces on samples
/// `from..`, each time row weighted by `1 / ||g(t_i)||`.
fn refine(times: &[f64], g: &[Vec<f64>], from: usize, entries: &mut [ModeEntry], max_iter: usize) {
    let k = entries.len();
    let m = entries[0].trace.len();
    let rows: Vec<usize> = (from..times.len()).filter(|&i| norm(&g[i]) > 0.0).collect();
    if rows.len() < 2 {
        return;
    }
    let weights: Vec<f64> = rows.iter().map(|&i| 1.0 / norm(&g[i])).collect();
    let nparams = k * (m + 1);

    let pack = |entries: &[ModeEntry]| -> Vec<f64> {
        let mut p: Vec<f64> = entries.iter().map(|e| e.rate).collect();
        for e in entries {
            p.extend_from_slice(&e.trace);
        }
        p
    };
    let residual = |p: &[f64]| -> Vec<f64> {
        let mut r = Vec::with_capacity(rows.len() * m);
        for (&i, w) in rows.iter().zip(&weights) {
            for j in 0..m {
                let mut model = 0.0;
                for q in 0..k {
                    model += (-p[q] * times[i]).exp() * p[k + q * m + j];
                }
                r.push(w * (model - g[i][j]));
            }
        }
        r
    };
    let cost = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>();

    let mut p = pack(entries);
    let mut r = residual(&p);
    let mut c = cost(&r);
    let mut mu = 1e-3;
    for _ in 0..max_iter {
        let mut jac = DMatrix::<f64>::zeros(r.len(), nparams);
        for (row_i, (&i, w)) in rows.iter().zip(&weights).enumerate() {
            let t = times[i];
            for q in 0..k {
                let e = (-p[q] * t).exp();
                for j in 0..m {
                    let row = row_i * m + j;
                    jac[(row, q)] = -w * t * e * p[k + q * m + j];
                    jac[(row, k + q * m + j)] = w * e;
                }
            }
        }
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let grad = &jt * DVector::from_column_slice(&r);
        let mut improved = false;
        for _ in 0..30 {
            let mut lhs = jtj.clone();
            for d in 0..nparams {
                lhs[(d, d)] += mu * jtj[(d, d)].max(1e-300);
            }
            let Some(step) = lhs.cholesky().map(|ch| ch.solve(&(-&grad))) else {
                mu *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            if trial[..k].iter().any(|l| !(l.is_finite() && *l > 0.0)) {
                mu *= 10.0;
                continue;
            }
            let rt = residual(&trial);
            let ct = cost(&rt);
            if ct < c {
                let rel = (c - ct) / c.max(f64::MIN_POSITIVE);
                p = trial;
                r = rt;
                c = ct;
                mu = (mu / 10.0).max(1e-12);
                improved = rel > 1e-14;
                break;
            }
            mu *= 10.0;
        }
        if !improved || c == 0.0 {
            break;
        }
    }
    for (q, e) in entries.iter_mut().enumerate() {
        e.rate = p[q];
        e.trace.copy_from_slice(&p[k + q * m..k + (q + 1) * m]);
    }
}

/// Outcome of matching two recovered series.
#[derive(Debug, Clone, PartialEq)]
pub struct CorollaryVerdict {
    /// `(index in u, index in v, |rate difference|, relative trace difference)`.
    pub matched: Vec<(usize, usize, f64, f64)>,
    pub unmatched_u: Vec<usize>,
    pub unmatched_v: Vec<usize>,
    pub full_match: bool,
}

/// Pairs entries whose rates agree within `rate_tol` (absolute) and whose
/// traces agree within `trace_tol` relative to the larger trace norm.
pub fn compare_mode_series(
    u: &ModeSeries,
    v: &ModeSeries,
    rate_tol: f64,
    trace_tol: f64,
) -> CorollaryVerdict {
    let mut used = vec![false; v.len()];
    let mut matched = Vec::new();
    let mut unmatched_u = Vec::new();
    for (i, eu) in u.entries.iter().enumerate() {
        let best = v
            .entries
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, ev)| (j, (eu.rate - ev.rate).abs()))
            .filter(|(_, d)| *d <= rate_tol)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        let Some((j, rate_diff)) = best else {
            unmatched_u.push(i);
            continue;
        };
        let ev = &v.entries[j];
        let diff: Vec<f64> = eu.trace.iter().zip(&ev.trace).map(|(a, b)| a - b).collect();
        let scale = norm(&eu.trace).max(norm(&ev.trace));
        let rel = if scale > 0.0 { norm(&diff) / scale } else { 0.0 };
        if eu.trace.len() == ev.trace.len() && rel <= trace_tol {
            used[j] = true;
            matched.push((i, j, rate_diff, rel));
        } else {
            unmatched_u.push(i);
        }
    }
    let unmatched_v: Vec<usize> = (0..v.len()).filter(|j| !used[*j]).collect();
    let full_match = unmatched_u.is_empty() && unmatched_v.is_empty();
    CorollaryVerdict { matched, unmatched_u, unmatched_v, full_match }
}
