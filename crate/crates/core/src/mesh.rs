//! Tensor-product grids, nodal fields, boundary masks and the discrete
//! Neumann operator `A - c + M` assembled with a mirror (ghost node) closure.
//!
//! Nodes are numbered with the first axis fastest: `index = i + nx * j`.
//!
//! The operator is stored in *stiffness form* `K = W (L - c + M)` where `L`
//! is the mirror-closed finite difference operator and `W` holds the
//! normalized trapezoidal weights (1 in the interior, 1/2 per boundary axis).
//! `K` is exactly symmetric; the operator action is `W^{-1} K x`, which is
//! self-adjoint in the trapezoidal inner product.

use std::collections::VecDeque;
use std::io::Write;

use thiserror::Error;

use crate::fmt::g17;

/// Errors raised while building grids, fields and operators.
#[derive(Debug, Error)]
pub enum MeshError {
    #[error("grid dimension must be 1 or 2, got {0}")]
    BadDimension(usize),
    #[error("axis {axis}: need at least 3 nodes, got {count}")]
    TooFewNodes { axis: usize, count: usize },
    #[error("axis {axis}: extent must be positive and finite, got {extent}")]
    BadExtent { axis: usize, extent: f64 },
    #[error("field has {got} values but the grid has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
    #[error("diffusion coefficient {value} at node {node} is below the ellipticity floor {floor}")]
    Ellipticity { node: usize, value: f64, floor: f64 },
    #[error("ellipticity floor must be positive, got {0}")]
    BadFloor(f64),
    #[error("boundary selection is empty")]
    EmptySelection,
    #[error("boundary selection is not face-connected ({components} components)")]
    Disconnected { components: usize },
    #[error("face {0:?} does not exist on this grid")]
    NoSuchFace(Face),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Low (`index 0`) or high (`index n-1`) end of an axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Low,
    High,
}

/// A boundary face: the axis of its outward normal and which end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Face {
    pub axis: usize,
    pub side: Side,
}

impl Face {
    pub const LEFT: Face = Face { axis: 0, side: Side::Low };
    pub const RIGHT: Face = Face { axis: 0, side: Side::High };
    pub const BOTTOM: Face = Face { axis: 1, side: Side::Low };
    pub const TOP: Face = Face { axis: 1, side: Side::High };

    /// Sign of the outward normal along `self.axis`.
    pub fn normal_sign(&self) -> f64 {
        match self.side {
            Side::Low => -1.0,
            Side::High => 1.0,
        }
    }

    pub fn parse(name: &str) -> Option<Face> {
        match name.trim() {
            "left" => Some(Face::LEFT),
            "right" => Some(Face::RIGHT),
            "bottom" => Some(Face::BOTTOM),
            "top" => Some(Face::TOP),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match (self.axis, self.side) {
            (0, Side::Low) => "left",
            (0, Side::High) => "right",
            (1, Side::Low) => "bottom",
            _ => "top",
        }
    }
}

/// Rectangular tensor-product grid on `[0, L_0] x [0, L_1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    extents: Vec<f64>,
    counts: Vec<usize>,
    spacing: Vec<f64>,
    /// Face label per node; `None` for interior nodes. Corners take the
    /// label of the lowest axis on which they lie at the boundary.
    faces: Vec<Option<Face>>,
}

/// Builds a grid with `counts[d]` nodes along an axis of length `extents[d]`.
pub fn build_grid(dim: usize, extents: &[f64], counts: &[usize]) -> Result<Grid, MeshError> {
    if dim != 1 && dim != 2 {
        return Err(MeshError::BadDimension(dim));
    }
    if extents.len() != dim || counts.len() != dim {
        return Err(MeshError::BadDimension(extents.len().max(counts.len())));
    }
    for axis in 0..dim {
        if counts[axis] < 3 {
            return Err(MeshError::TooFewNodes { axis, count: counts[axis] });
        }
        if !(extents[axis] > 0.0 && extents[axis].is_finite()) {
            return Err(MeshError::BadExtent { axis, extent: extents[axis] });
        }
    }
    let spacing: Vec<f64> = (0..dim)
        .map(|d| extents[d] / (counts[d] - 1) as f64)
        .collect();
    let total: usize = counts.iter().product();
    let mut grid = Grid {
        dim,
        extents: extents.to_vec(),
        counts: counts.to_vec(),
        spacing,
        faces: vec![None; total],
    };
    for node in 0..total {
        let idx = grid.multi_index(node);
        grid.faces[node] = (0..dim).find_map(|axis| {
            if idx[axis] == 0 {
                Some(Face { axis, side: Side::Low })
            } else if idx[axis] == counts[axis] - 1 {
                Some(Face { axis, side: Side::High })
            } else {
                None
            }
        });
    }
    Ok(grid)
}

impl Grid {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    /// Per-axis indices of a node (unused axes are 0).
    pub fn multi_index(&self, node: usize) -> [usize; 2] {
        let nx = self.counts[0];
        if self.dim == 1 {
            [node, 0]
        } else {
            [node % nx, node / nx]
        }
    }

    pub fn node(&self, idx: [usize; 2]) -> usize {
        if self.dim == 1 {
            idx[0]
        } else {
            idx[0] + self.counts[0] * idx[1]
        }
    }

    /// Physical coordinates (unused axes are 0).
    pub fn coords(&self, node: usize) -> [f64; 2] {
        let idx = self.multi_index(node);
        let mut x = [0.0; 2];
        for d in 0..self.dim {
            x[d] = idx[d] as f64 * self.spacing[d];
        }
        x
    }

    pub fn face(&self, node: usize) -> Option<Face> {
        self.faces[node]
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.faces[node].is_some()
    }

    /// Boundary nodes in ascending index order.
    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&n| self.is_boundary(n)).collect()
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&n| !self.is_boundary(n)).collect()
    }

    /// Neighbour of `node` one step along `axis` (`+1` or `-1`), if inside the grid.
    pub fn step(&self, node: usize, axis: usize, forward: bool) -> Option<usize> {
        let mut idx = self.multi_index(node);
        if forward {
            if idx[axis] + 1 >= self.counts[axis] {
                return None;
            }
            idx[axis] += 1;
        } else {
            if idx[axis] == 0 {
                return None;
            }
            idx[axis] -= 1;
        }
        Some(self.node(idx))
    }

    /// Face-adjacent neighbours.
    pub fn neighbors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.dim).flat_map(move |axis| {
            [false, true]
                .into_iter()
                .filter_map(move |fwd| self.step(node, axis, fwd))
        })
    }

    /// Normalized trapezoidal weight: product of 1 (interior) or 1/2 (end) per axis.
    pub fn unit_weight(&self, node: usize) -> f64 {
        let idx = self.multi_index(node);
        (0..self.dim)
            .map(|d| axis_weight(idx[d], self.counts[d]))
            .product()
    }

    /// Trapezoidal quadrature weights for `L^2(Omega)`.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        let cell: f64 = self.spacing.iter().product();
        (0..self.len()).map(|n| cell * self.unit_weight(n)).collect()
    }

    /// Weighted inner product `(u, v)_{L^2}`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        let cell: f64 = self.spacing.iter().product();
        u.iter()
            .zip(v)
            .enumerate()
            .map(|(n, (a, b))| self.unit_weight(n) * a * b)
            .sum::<f64>()
            * cell
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).sqrt()
    }

    /// Nodes on a given face, in ascending index order.
    pub fn face_nodes(&self, face: Face) -> Vec<usize> {
        (0..self.len())
            .filter(|&n| self.faces[n] == Some(face))
            .collect()
    }

    /// Coordinate of a node along the face's tangential axis (0 in 1D).
    pub fn tangential_index(&self, node: usize, face: Face) -> usize {
        if self.dim == 1 {
            0
        } else {
            self.multi_index(node)[1 - face.axis]
        }
    }

    fn check_len(&self, got: usize) -> Result<(), MeshError> {
        if got != self.len() {
            return Err(MeshError::LengthMismatch { expected: self.len(), got });
        }
        Ok(())
    }
}

fn axis_weight(i: usize, n: usize) -> f64 {
    if i == 0 || i + 1 == n {
        0.5
    } else {
        1.0
    }
}

/// One real value per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField(Vec<f64>);

impl ScalarField {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self, MeshError> {
        grid.check_len(values.len())?;
        Ok(ScalarField(values))
    }

    /// Wraps raw values without a grid check.
    pub fn from_vec(values: Vec<f64>) -> Self {
        ScalarField(values)
    }

    pub fn zeros(grid: &Grid) -> Self {
        ScalarField(vec![0.0; grid.len()])
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        ScalarField(vec![value; grid.len()])
    }

    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        ScalarField((0..grid.len()).map(|n| f(grid.coords(n))).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// `self - other`, node by node.
    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        ScalarField(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scaled(&self, k: f64) -> ScalarField {
        ScalarField(self.0.iter().map(|v| k * v).collect())
    }
}

/// Isotropic diffusion `a(x) I` with an ellipticity floor.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionField {
    values: Vec<f64>,
    floor: f64,
}

impl DiffusionField {
    pub fn new(grid: &Grid, values: Vec<f64>, floor: f64) -> Result<Self, MeshError> {
        grid.check_len(values.len())?;
        let field = DiffusionField { values, floor };
        field.check()?;
        Ok(field)
    }

    pub fn constant(grid: &Grid, value: f64) -> Result<Self, MeshError> {
        DiffusionField::new(grid, vec![value; grid.len()], value.min(1.0) * 0.5)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    fn check(&self) -> Result<(), MeshError> {
        if !(self.floor > 0.0) {
            return Err(MeshError::BadFloor(self.floor));
        }
        for (node, &value) in self.values.iter().enumerate() {
            if !(value >= self.floor) {
                return Err(MeshError::Ellipticity { node, value, floor: self.floor });
            }
        }
        Ok(())
    }
}

/// Global positivity threshold: `1e-12 * max |a|`.
pub fn positivity_threshold(a: &ScalarField) -> f64 {
    1e-12 * a.max_abs()
}

/// The observed boundary patch `gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMask {
    nodes: Vec<usize>,
}

impl BoundaryMask {
    /// Boundary nodes of `gamma`, ascending.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, node: usize) -> bool {
        self.nodes.binary_search(&node).is_ok()
    }

    /// `Gamma = {x in gamma : |a(x)| > threshold}`.
    pub fn positive_part(&self, a: &ScalarField, threshold: f64) -> Vec<usize> {
        self.nodes
            .iter()
            .copied()
            .filter(|&n| a.values()[n].abs() > threshold)
            .collect()
    }
}

/// Portion of one face: nodes whose tangential index lies in `range` (all if `None`).
#[derive(Debug, Clone, PartialEq)]
pub struct FaceSelection {
    pub face: Face,
    pub range: Option<(usize, usize)>,
}

impl FaceSelection {
    pub fn whole(face: Face) -> Self {
        FaceSelection { face, range: None }
    }
}

/// Selects `gamma` as a face-connected set of boundary nodes.
pub fn build_boundary_mask(
    grid: &Grid,
    selections: &[FaceSelection],
) -> Result<BoundaryMask, MeshError> {
    let mut nodes = Vec::new();
    for sel in selections {
        if sel.face.axis >= grid.dim() {
            return Err(MeshError::NoSuchFace(sel.face));
        }
        for n in grid.face_nodes(sel.face) {
            let t = grid.tangential_index(n, sel.face);
            let keep = match sel.range {
                None => true,
                Some((lo, hi)) => t >= lo && t <= hi,
            };
            if keep {
                nodes.push(n);
            }
        }
    }
    nodes.sort_unstable();
    nodes.dedup();
    if nodes.is_empty() {
        return Err(MeshError::EmptySelection);
    }
    let components = count_components(grid, &nodes);
    if components != 1 {
        return Err(MeshError::Disconnected { components });
    }
    Ok(BoundaryMask { nodes })
}

/// Number of face-connected components of a node set.
pub(crate) fn count_components(grid: &Grid, nodes: &[usize]) -> usize {
    let mut member = vec![false; grid.len()];
    for &n in nodes {
        member[n] = true;
    }
    let mut seen = vec![false; grid.len()];
    let mut components = 0;
    for &start in nodes {
        if seen[start] {
            continue;
        }
        components += 1;
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(n) = queue.pop_front() {
            for m in grid.neighbors(n) {
                if member[m] && !seen[m] {
                    seen[m] = true;
                    queue.push_back(m);
                }
            }
        }
    }
    components
}

/// Sparse symmetric stiffness matrix `K = W (L - c + M)`, CSR with sorted columns.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    /// Normalized trapezoidal weights (diagonal of `W`).
    weights: Vec<f64>,
    shift: f64,
}

/// Assembles `A - c + M` with the mirror Neumann closure.
///
/// Edge coupling along axis `d` between nodes `p` and `q` is
/// `w_perp * (a_p + a_q) / 2 / h_d^2`, where `w_perp` is the trapezoid factor
/// of the remaining axes; it enters `K` once per edge so `K` is symmetric
/// bit for bit.
pub fn assemble_operator(
    grid: &Grid,
    diffusion: &DiffusionField,
    c: &ScalarField,
    shift: f64,
) -> Result<OperatorMatrix, MeshError> {
    grid.check_len(diffusion.values().len())?;
    grid.check_len(c.len())?;
    diffusion.check()?;

    let n = grid.len();
    let a = diffusion.values();
    let mut diag = vec![0.0; n];
    // off-diagonal entries per row as (col, value)
    let mut off: Vec<Vec<(usize, f64)>> = vec![Vec::with_capacity(2 * grid.dim()); n];

    for p in 0..n {
        let idx = grid.multi_index(p);
        for axis in 0..grid.dim() {
            let Some(q) = grid.step(p, axis, true) else {
                continue;
            };
            let w_perp: f64 = (0..grid.dim())
                .filter(|&d| d != axis)
                .map(|d| axis_weight(idx[d], grid.counts()[d]))
                .product();
            let h = grid.spacing()[axis];
            let e = w_perp * 0.5 * (a[p] + a[q]) / (h * h);
            off[p].push((q, -e));
            off[q].push((p, -e));
            diag[p] += e;
            diag[q] += e;
        }
    }

    let weights: Vec<f64> = (0..n).map(|p| grid.unit_weight(p)).collect();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    row_ptr.push(0);
    for p in 0..n {
        let mut row = std::mem::take(&mut off[p]);
        row.push((p, diag[p] + weights[p] * (shift - c.values()[p])));
        row.sort_by_key(|&(col, _)| col);
        for (col, v) in row {
            cols.push(col);
            vals.push(v);
        }
        row_ptr.push(cols.len());
    }
    Ok(OperatorMatrix { row_ptr, cols, vals, weights, shift })
}

impl OperatorMatrix {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Stiffness entry `K_ij` (0 outside the pattern).
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(k) => self.vals[self.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    /// Column indices and values of row `i` of `K`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    /// `K x`.
    pub fn apply_stiffness(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// Operator action `W^{-1} K x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.apply_stiffness(x);
        for (yi, w) in y.iter_mut().zip(&self.weights) {
            *yi /= w;
        }
        y
    }

    /// Same operator with the shift replaced by `shift`.
    pub fn with_shift(&self, shift: f64) -> OperatorMatrix {
        let mut out = self.clone();
        let delta = shift - self.shift;
        for i in 0..self.dim() {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.cols[k] == i {
                    out.vals[k] += self.weights[i] * delta;
                }
            }
        }
        out.shift = shift;
        out
    }

    /// Dense symmetric `W^{-1/2} K W^{-1/2}`, row-major. Its eigenvalues are
    /// those of the operator.
    pub fn symmetric_dense(&self) -> Vec<f64> {
        let n = self.dim();
        let mut s = vec![0.0; n * n];
        let inv_sqrt: Vec<f64> = self.weights.iter().map(|w| 1.0 / w.sqrt()).collect();
        for i in 0..n {
            for (j, v) in self.row(i) {
                s[i * n + j] = v * inv_sqrt[i] * inv_sqrt[j];
            }
        }
        // enforce exact symmetry of the scaled copy as well
        for i in 0..n {
            for j in 0..i {
                s[j * n + i] = s[i * n + j];
            }
        }
        s
    }
}

/// Smallest `M >= 0` (to 1e-6) with every eigenvalue of the shifted operator above 1.
pub fn coercive_shift(op: &OperatorMatrix) -> Result<f64, crate::spectral::SpectralError> {
    let base = op.with_shift(0.0);
    let lowest = crate::spectral::lowest_eigenvalue(&base)?;
    Ok(shift_for_lowest(lowest))
}

/// The coercive shift given the lowest eigenvalue of the unshifted operator.
pub fn shift_for_lowest(lowest: f64) -> f64 {
    if lowest > 1.0 {
        0.0
    } else {
        1.0 - lowest + 1e-6
    }
}

/// Writes node coordinates followed by one column per field.
///
/// Columns: `node,x` (1D) or `node,x,y` (2D), then the field names in order.
pub fn write_fields_csv<W: Write>(
    out: &mut W,
    grid: &Grid,
    fields: &[(&str, &ScalarField)],
) -> Result<(), MeshError> {
    for (_, f) in fields {
        grid.check_len(f.len())?;
    }
    let mut header = String::from("node,x");
    if grid.dim() == 2 {
        header.push_str(",y");
    }
    for (name, _) in fields {
        header.push(',');
        header.push_str(name);
    }
    writeln!(out, "{header}")?;
    for n in 0..grid.len() {
        let x = grid.coords(n);
        let mut line = format!("{n},{}", g17(x[0]));
        if grid.dim() == 2 {
            line.push(',');
            line.push_str(&g17(x[1]));
        }
        for (_, f) in fields {
            line.push(',');
            line.push_str(&g17(f.values()[n]));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}
