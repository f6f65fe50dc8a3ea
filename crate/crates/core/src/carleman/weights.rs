//! Weight functions for the three Carleman estimates and the space-time
//! cutoff used in the localization argument.

use std::collections::VecDeque;

use crate::mesh::{BoundaryMask, Face, Grid, ScalarField, Side};
use crate::region::OmegaY;

use super::CarlemanError;

/// Quintic smoothstep on `[0, 1]`, clamped outside; two continuous derivatives.
pub fn smoothstep5(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * x * (x * (6.0 * x - 15.0) + 10.0)
}

/// Derivative of [`smoothstep5`].
pub fn smoothstep5_prime(x: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return 0.0;
    }
    30.0 * x * x * (x - 1.0) * (x - 1.0)
}

/// Interior-local weight `alpha(x, t) = exp(lambda (d(x) - beta t^2))` on a tube.
#[derive(Debug, Clone)]
pub struct EllipticWeight {
    /// `d`, zero outside the tube closure.
    pub d: ScalarField,
    pub lambda: f64,
    pub beta: f64,
    /// Transverse penalty used when `d` was built.
    pub kappa: f64,
}

impl EllipticWeight {
    pub fn alpha(&self, node: usize, t: f64) -> f64 {
        (self.lambda * (self.d.values()[node] - self.beta * t * t)).exp()
    }

    /// Largest value of `d` on the tube closure.
    pub fn d_max(&self) -> f64 {
        self.d.values().iter().fold(0.0_f64, |m, v| m.max(*v))
    }
}

/// Penalties tried in turn by [`build_weight_d`].
pub const KAPPA_SCHEDULE: [f64; 4] = [0.5, 1.0, 1.5, 2.0];

fn chebyshev(grid: &Grid, p: usize, q: usize) -> usize {
    let a = grid.multi_index(p);
    let b = grid.multi_index(q);
    (0..grid.dim()).map(|d| a[d].abs_diff(b[d])).max().unwrap_or(0)
}

/// Builds `d` on the tube: an arclength coordinate decreasing from the
/// `Gamma` end, damped by a transverse penalty, and set to zero on the part
/// of the tube boundary away from `Gamma`.
///
/// Each penalty in [`KAPPA_SCHEDULE`] is tried until [`verify_weight_d`] passes.
pub fn build_weight_d(tube: &OmegaY, grid: &Grid) -> Result<(ScalarField, f64), CarlemanError> {
    let nodes = tube.mask.nodes();
    let layer = tube.boundary_layer(grid);
    // BFS distance inside the tube from the nodes touching the contact patch
    let mut dist = vec![usize::MAX; grid.len()];
    let mut queue = VecDeque::new();
    for &n in &nodes {
        if grid.neighbors(n).any(|q| tube.contact.binary_search(&q).is_ok()) {
            dist[n] = 0;
            queue.push_back(n);
        }
    }
    while let Some(p) = queue.pop_front() {
        for q in grid.neighbors(p) {
            if tube.mask.contains(q) && dist[q] == usize::MAX {
                dist[q] = dist[p] + 1;
                queue.push_back(q);
            }
        }
    }
    let d_span = nodes.iter().map(|&n| dist[n]).filter(|&x| x != usize::MAX).max().unwrap_or(0) as f64 + 1.0;
    let transverse = |n: usize| {
        tube.path.iter().map(|&p| chebyshev(grid, n, p)).min().unwrap_or(0) as f64
    };

    let mut last_err = None;
    for &kappa in &KAPPA_SCHEDULE {
        let mut d = vec![0.0; grid.len()];
        let damp = |n: usize| 1.0 - kappa * (transverse(n) / 3.0).powi(2);
        for &n in &nodes {
            if layer.binary_search(&n).is_ok() || dist[n] == usize::MAX {
                continue;
            }
            d[n] = (1.0 - dist[n] as f64 / d_span) * damp(n);
        }
        for &c in &tube.contact {
            d[c] = (1.0 + 1.0 / d_span) * damp(c);
        }
        let field = ScalarField::from_vec(d);
        match verify_weight_d(tube, grid, &field) {
            Ok(()) => return Ok((field, kappa)),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("schedule is not empty"))
}

/// Discrete gradient magnitude: the largest slope to any closure neighbor in
/// the 3x3 (or 1x3) stencil.
fn stencil_slope(grid: &Grid, closure: &[usize], d: &ScalarField, n: usize) -> f64 {
    let idx = grid.multi_index(n);
    let h = grid.spacing();
    let mut best = 0.0_f64;
    let span_y: isize = if grid.dim() == 2 { 1 } else { 0 };
    for dj in -span_y..=span_y {
        for di in -1isize..=1 {
            if di == 0 && dj == 0 {
                continue;
            }
            let i = idx[0] as isize + di;
            let j = idx[1] as isize + dj;
            if i < 0 || j < 0 || i >= grid.counts()[0] as isize {
                continue;
            }
            if grid.dim() == 2 && j >= grid.counts()[1] as isize {
                continue;
            }
            let q = grid.node([i as usize, j as usize]);
            if closure.binary_search(&q).is_err() {
                continue;
            }
            let mut dist2 = (di as f64 * h[0]).powi(2);
            if grid.dim() == 2 {
                dist2 += (dj as f64 * h[1]).powi(2);
            }
            best = best.max((d.values()[n] - d.values()[q]).abs() / dist2.sqrt());
        }
    }
    best
}

/// Checks `d > 0` inside the tube, `d = 0` on the boundary layer away from
/// `Gamma`, and a non-vanishing discrete gradient on the tube closure.
pub fn verify_weight_d(tube: &OmegaY, grid: &Grid, d: &ScalarField) -> Result<(), CarlemanError> {
    let layer = tube.boundary_layer(grid);
    let closure = tube.closure();
    let mut violations = Vec::new();
    for n in tube.mask.nodes() {
        let v = d.values()[n];
        if layer.binary_search(&n).is_ok() {
            if v != 0.0 {
                violations.push((n, "nonzero on the boundary away from Gamma"));
            }
        } else if !(v > 0.0) {
            violations.push((n, "not positive inside the tube"));
        }
    }
    for &n in &closure {
        if !(stencil_slope(grid, &closure, d, n) > 0.0) {
            violations.push((n, "vanishing gradient"));
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(CarlemanError::WeightViolation {
            weight: "d",
            nodes: violations.iter().map(|v| v.0).collect(),
            reason: violations[0].1.to_string(),
        })
    }
}

/// Boundary weight pair `rho` and `psi = exp(lambda (rho - 2 max rho))`.
#[derive(Debug, Clone)]
pub struct BoundaryWeight {
    pub rho: ScalarField,
    pub psi: ScalarField,
    pub lambda: f64,
}

impl BoundaryWeight {
    pub fn rho_max(&self) -> f64 {
        self.rho.values().iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v))
    }

    /// `max psi` over the given nodes.
    pub fn psi_max_on(&self, nodes: &[usize]) -> f64 {
        nodes.iter().map(|&n| self.psi.values()[n]).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Bump strength pushing `rho` down along the observed face outside `gamma`.
const FACE_BUMP: f64 = 1.0;
/// Tangential tilt removing critical points when `gamma` is a partial face.
const TANGENTIAL_TILT: f64 = 0.05;

/// Builds `rho = 0.1 + xi` (`xi` the normalized coordinate increasing toward
/// the face of `gamma`), corrected near that face when `gamma` covers only
/// part of it, and verifies positivity, a non-vanishing gradient and a
/// non-positive outward derivative on the unobserved boundary.
pub fn build_rho_psi(grid: &Grid, gamma: &BoundaryMask, lambda: f64) -> Result<BoundaryWeight, CarlemanError> {
    let face = single_face(grid, gamma)?;
    let axis = face.axis;
    let len = grid.extents()[axis];
    let normal = |n: usize| {
        let x = grid.coords(n)[axis] / len;
        match face.side {
            Side::High => x,
            Side::Low => 1.0 - x,
        }
    };
    let rho: Vec<f64> = if grid.dim() == 1 || gamma.len() == grid.face_nodes(face).len() {
        (0..grid.len()).map(|n| 0.1 + normal(n)).collect()
    } else {
        let t_axis = 1 - axis;
        let t_count = grid.counts()[t_axis];
        let scale = (t_count - 1) as f64;
        let tang: Vec<usize> = gamma.nodes().iter().map(|&n| grid.multi_index(n)[t_axis]).collect();
        let lo = *tang.iter().min().unwrap() as f64 / scale;
        let hi = *tang.iter().max().unwrap() as f64 / scale;
        let centre = 0.5 * (lo + hi);
        let width = 1.0 / (1.5 * scale);
        let q = |eta: f64| {
            let gap = if eta < lo { lo - eta } else if eta > hi { eta - hi } else { 0.0 };
            (-(gap / width).powi(2)).exp()
        };
        (0..grid.len())
            .map(|n| {
                let xi = normal(n);
                let eta = grid.multi_index(n)[t_axis] as f64 / scale;
                0.2 + xi - TANGENTIAL_TILT * (eta - centre).powi(2) - FACE_BUMP * xi.powi(4) * (1.0 - q(eta))
            })
            .collect()
    };
    let rho = ScalarField::from_vec(rho);
    verify_rho(grid, gamma, &rho)?;
    let rho_max = rho.values().iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let psi = ScalarField::from_vec(rho.values().iter().map(|r| (lambda * (r - 2.0 * rho_max)).exp()).collect());
    Ok(BoundaryWeight { rho, psi, lambda })
}

fn single_face(grid: &Grid, gamma: &BoundaryMask) -> Result<Face, CarlemanError> {
    let mut faces = gamma.nodes().iter().filter_map(|&n| grid.face(n));
    let first = faces.next().ok_or(CarlemanError::Setup("gamma is empty".into()))?;
    if faces.any(|f| f != first) {
        return Err(CarlemanError::Setup("gamma must lie on a single face".into()));
    }
    Ok(first)
}

/// Discrete gradient of a nodal field: central differences inside, one-sided
/// differences on the boundary.
pub fn nodal_gradient(grid: &Grid, f: &[f64], n: usize) -> [f64; 2] {
    let mut g = [0.0; 2];
    for (axis, gv) in g.iter_mut().enumerate().take(grid.dim()) {
        let h = grid.spacing()[axis];
        *gv = match (grid.step(n, axis, false), grid.step(n, axis, true)) {
            (Some(a), Some(b)) => (f[b] - f[a]) / (2.0 * h),
            (None, Some(b)) => (f[b] - f[n]) / h,
            (Some(a), None) => (f[n] - f[a]) / h,
            (None, None) => 0.0,
        };
    }
    g
}

/// Outward one-sided derivatives of `f` at boundary node `n`, one per
/// boundary axis of the node.
pub fn outward_derivatives(grid: &Grid, f: &[f64], n: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for axis in 0..grid.dim() {
        let h = grid.spacing()[axis];
        match (grid.step(n, axis, false), grid.step(n, axis, true)) {
            (None, Some(inner)) => out.push((f[n] - f[inner]) / h),
            (Some(inner), None) => out.push((f[n] - f[inner]) / h),
            _ => {}
        }
    }
    out
}

/// Positivity, non-vanishing gradient, and non-positive outward derivative
/// off `gamma`.
pub fn verify_rho(grid: &Grid, gamma: &BoundaryMask, rho: &ScalarField) -> Result<(), CarlemanError> {
    let f = rho.values();
    let scale = f.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
    let mut bad = Vec::new();
    let mut reason = "";
    for n in 0..grid.len() {
        if !grid.is_boundary(n) && !(f[n] > 0.0) {
            bad.push(n);
            reason = "rho not positive";
            continue;
        }
        let g = nodal_gradient(grid, f, n);
        if !(g[0].hypot(g[1]) > 0.0) {
            bad.push(n);
            reason = "vanishing gradient";
            continue;
        }
        if grid.is_boundary(n) && !gamma.contains(n) {
            if outward_derivatives(grid, f, n).iter().any(|&v| v > 1e-12 * scale) {
                bad.push(n);
                reason = "positive outward derivative off gamma";
            }
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(CarlemanError::WeightViolation { weight: "rho", nodes: bad, reason: reason.into() })
    }
}

/// Time profile: 0 at both ends, 1 on the middle half, smooth monotone ramps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeProfile {
    pub t_end: f64,
}

impl TimeProfile {
    pub fn value(&self, t: f64) -> f64 {
        let q = self.t_end / 4.0;
        if t <= q {
            smoothstep5(t / q)
        } else if t >= 3.0 * q {
            smoothstep5((self.t_end - t) / q)
        } else {
            1.0
        }
    }
}

/// Global parabolic weights `phi = e^{lambda rho} / l(t)` and
/// `alpha = (e^{lambda rho} - e^{2 lambda max rho}) / l(t)`.
#[derive(Debug, Clone)]
pub struct ParabolicWeight {
    pub boundary: BoundaryWeight,
    pub profile: TimeProfile,
}

impl ParabolicWeight {
    pub fn phi(&self, node: usize, t: f64) -> f64 {
        (self.boundary.lambda * self.boundary.rho.values()[node]).exp() / self.profile.value(t)
    }

    pub fn alpha(&self, node: usize, t: f64) -> f64 {
        let l = self.boundary.lambda;
        ((l * self.boundary.rho.values()[node]).exp() - (2.0 * l * self.boundary.rho_max()).exp())
            / self.profile.value(t)
    }
}

/// Localization cutoff in the level-set variable `d(x) - beta t^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffProfile {
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub beta: f64,
    pub tau: f64,
}

impl CutoffProfile {
    /// `beta = (max d + 0.1) / tau^2`, `delta_i = (0.3, 0.6, 0.8) d(y)`.
    pub fn new(d_max: f64, d_y: f64, tau: f64) -> Result<Self, CarlemanError> {
        let p = CutoffProfile {
            delta1: 0.3 * d_y,
            delta2: 0.6 * d_y,
            delta3: 0.8 * d_y,
            beta: (d_max + 0.1) / (tau * tau),
            tau,
        };
        p.check(d_max, d_y)?;
        Ok(p)
    }

    /// `max d - beta tau^2 < 0 < delta1 < delta2 < delta3` and `d(y) > delta2`.
    pub fn check(&self, d_max: f64, d_y: f64) -> Result<(), CarlemanError> {
        let ok = d_max - self.beta * self.tau * self.tau < 0.0
            && 0.0 < self.delta1
            && self.delta1 < self.delta2
            && self.delta2 < self.delta3
            && d_y > self.delta2;
        if ok {
            Ok(())
        } else {
            Err(CarlemanError::Setup(format!(
                "cutoff ordering violated (d max {d_max}, d(y) {d_y}, {self:?})"
            )))
        }
    }

    pub fn chi(&self, d: f64, t: f64) -> f64 {
        smoothstep5((d - self.beta * t * t - self.delta1) / (self.delta2 - self.delta1))
    }

    /// `e^{lambda delta3} - e^{lambda delta2}`, positive whenever `delta3 > delta2`.
    pub fn localization_gap(&self, lambda: f64) -> f64 {
        (lambda * self.delta3).exp() - (lambda * self.delta2).exp()
    }
}

/// `int_{-tau}^{tau} exp(2 s (alpha(x,t) - alpha(x,0))) dt` for a node with
/// weight value `d`, by the trapezoidal rule on `samples` points.
pub fn time_factor(d: f64, lambda: f64, beta: f64, tau: f64, s: f64, samples: usize) -> f64 {
    let k = samples.max(2) - 1;
    let dt = 2.0 * tau / k as f64;
    let amp = (lambda * d).exp();
    (0..=k)
        .map(|i| {
            let t = -tau + i as f64 * dt;
            let w = if i == 0 || i == k { 0.5 } else { 1.0 };
            w * (2.0 * s * amp * ((-lambda * beta * t * t).exp() - 1.0)).exp()
        })
        .sum::<f64>()
        * dt
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_boundary_mask, build_grid, FaceSelection};
    use crate::region::{carve_omega_y, gamma_positive, reachable_omega, support_region};

    fn tube_1d(n: usize, y: usize) -> (Grid, OmegaY) {
        let g = build_grid(1, &[1.0], &[n]).unwrap();
        let a = ScalarField::constant(&g, 1.0);
        let gamma = build_boundary_mask(&g, &[FaceSelection::whole(Face::LEFT)]).unwrap();
        let gp = gamma_positive(&a, &gamma, 0.0).unwrap();
        let w = reachable_omega(&support_region(&a, &g, 0.0), &gp, &g);
        let t = carve_omega_y(&w, &gp, &g, y, &a, 0.0).unwrap();
        (g, t)
    }

    #[test]
    fn smoothstep_ends() {
        assert_eq!(smoothstep5(0.0), 0.0);
        assert_eq!(smoothstep5(1.0), 1.0);
        assert_eq!(smoothstep5(0.5), 0.5);
        assert_eq!(smoothstep5_prime(0.0), 0.0);
        assert_eq!(smoothstep5_prime(1.0), 0.0);
    }

    #[test]
    fn linear_weight_decreasing_from_gamma_passes() {
        let (g, tube) = tube_1d(21, 10);
        // d = 1 - x/L on the tube, zero at its far end
        let far = *tube.mask.nodes().last().unwrap();
        let len = g.coords(far)[0];
        let d = ScalarField::from_fn(&g, |x| if x[0] <= len + 1e-12 { 1.0 - x[0] / len } else { 0.0 });
        assert!(verify_weight_d(&tube, &g, &d).is_ok());
        let built = build_weight_d(&tube, &g).unwrap().0;
        assert!(verify_weight_d(&tube, &g, &built).is_ok());
        assert_eq!(built.values()[far], 0.0);
    }

    #[test]
    fn weight_increasing_toward_the_far_end_fails() {
        let (g, tube) = tube_1d(21, 10);
        let d = ScalarField::from_fn(&g, |x| x[0]);
        assert!(verify_weight_d(&tube, &g, &d).is_err());
    }

    #[test]
    fn constant_weight_fails() {
        let (g, tube) = tube_1d(21, 10);
        let d = ScalarField::constant(&g, 1.0);
        match verify_weight_d(&tube, &g, &d) {
            Err(CarlemanError::WeightViolation { nodes, .. }) => assert!(!nodes.is_empty()),
            other => panic!("expected a violation, got {other:?}"),
        }
    }

    #[test]
    fn straight_tube_in_2d() {
        let g = build_grid(2, &[1.0, 1.0], &[15, 15]).unwrap();
        let a = ScalarField::constant(&g, 1.0);
        let gamma = build_boundary_mask(&g, &[FaceSelection::whole(Face::BOTTOM)]).unwrap();
        let gp = gamma_positive(&a, &gamma, 0.0).unwrap();
        let w = reachable_omega(&support_region(&a, &g, 0.0), &gp, &g);
        let y = g.node([7, 8]);
        let tube = carve_omega_y(&w, &gp, &g, y, &a, 0.0).unwrap();
        let (d, _) = build_weight_d(&tube, &g).unwrap();
        assert!(d.values()[y] > 0.0);
        // linear along the axis on the centre column
        let col: Vec<f64> = (1..=8).map(|j| d.values()[g.node([7, j])]).collect();
        let steps: Vec<f64> = col.windows(2).map(|w| w[0] - w[1]).collect();
        assert!(steps.iter().all(|s| (s - steps[0]).abs() < 1e-12 && *s > 0.0));
    }

    #[test]
    fn rho_on_an_interval() {
        let g = build_grid(1, &[1.0], &[11]).unwrap();
        let gamma = build_boundary_mask(&g, &[FaceSelection::whole(Face::RIGHT)]).unwrap();
        let w = build_rho_psi(&g, &gamma, 2.0).unwrap();
        for n in 0..g.len() {
            assert!((w.rho.values()[n] - (g.coords(n)[0] + 0.1)).abs() < 1e-15);
            let p = w.psi.values()[n];
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn rho_normal_derivatives_on_a_square() {
        let g = build_grid(2, &[1.0, 1.0], &[9, 9]).unwrap();
        let gamma = build_boundary_mask(&g, &[FaceSelection::whole(Face::RIGHT)]).unwrap();
        let w = build_rho_psi(&g, &gamma, 2.0).unwrap();
        let f = w.rho.values();
        for n in g.face_nodes(Face::LEFT) {
            assert!(outward_derivatives(&g, f, n).iter().any(|v| (v + 1.0).abs() < 1e-12));
        }
        for face in [Face::BOTTOM, Face::TOP] {
            for n in g.face_nodes(face) {
                assert!(outward_derivatives(&g, f, n).iter().all(|v| v.abs() < 1e-12));
            }
        }
    }

    #[test]
    fn rho_for_a_partial_face() {
        let g = build_grid(2, &[1.0, 1.0], &[17, 17]).unwrap();
        let gamma = build_boundary_mask(&g, &[FaceSelection { face: Face::BOTTOM, range: Some((5, 10)) }]).unwrap();
        assert!(build_rho_psi(&g, &gamma, 2.0).is_ok());
        // the plain affine profile violates the sign condition off gamma
        let plain = ScalarField::from_fn(&g, |x| 1.1 - x[1]);
        assert!(verify_rho(&g, &gamma, &plain).is_err());
    }

    #[test]
    fn time_profile_shape() {
        let p = TimeProfile { t_end: 2.0 };
        assert_eq!(p.value(0.0), 0.0);
        assert_eq!(p.value(2.0), 0.0);
        assert_eq!(p.value(1.0), 1.0);
        assert_eq!(p.value(0.5), 1.0);
        let ramp: Vec<f64> = (0..=50).map(|i| p.value(0.5 * i as f64 / 50.0)).collect();
        assert!(ramp.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn cutoff_ordering_and_time_factor() {
        let c = CutoffProfile::new(1.2, 0.9, 0.5).unwrap();
        assert_eq!(c.chi(0.9, 0.0), 1.0);
        assert_eq!(c.chi(1.2, 0.5), 0.0);
        assert!(c.localization_gap(2.0) > 0.0);
        let f: Vec<f64> = [1.0, 2.0, 4.0, 8.0, 16.0]
            .iter()
            .map(|&s| time_factor(0.9, 2.0, c.beta, 0.5, s, 2001))
            .collect();
        assert!(f.windows(2).all(|w| w[1] < w[0]));
        // at large s only small |t| contributes: a Gaussian of rate 2 s e^{lambda d} lambda beta
        let rate = 2.0 * 16.0 * (2.0f64 * 0.9).exp() * 2.0 * c.beta;
        let gauss = (std::f64::consts::PI / rate).sqrt();
        assert!((f[4] / gauss - 1.0).abs() < 0.05);
    }
}
