//! Support region of the initial value, its positive boundary part, the
//! reachable subdomain `omega` and thin tubes `omega_y` around grid paths.
//!
//! Connectivity is face adjacency throughout.

use std::collections::VecDeque;
use std::io::Write;

use thiserror::Error;

use crate::fmt::g17;
use crate::mesh::{BoundaryMask, Grid, ScalarField};

#[derive(Debug, Error)]
pub enum RegionError {
    #[error("the initial value vanishes on every gamma node (threshold {threshold:e})")]
    EmptyGamma { threshold: f64 },
    #[error("node {0} is not in omega")]
    NotInOmega(usize),
    #[error("no grid path from node {0} to a node adjacent to Gamma")]
    NoPath(usize),
    #[error("omega_y check failed: {0}")]
    Check(String),
    #[error("mask has {got} entries but the grid has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionKind {
    Support,
    Gamma,
    Omega,
    OmegaY,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    pub kind: RegionKind,
    mask: Vec<bool>,
}

impl RegionMask {
    pub fn new(kind: RegionKind, mask: Vec<bool>) -> Self {
        RegionMask { kind, mask }
    }

    pub fn from_nodes(kind: RegionKind, len: usize, nodes: &[usize]) -> Self {
        let mut mask = vec![false; len];
        for &n in nodes {
            mask[n] = true;
        }
        RegionMask { kind, mask }
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|b| **b).count()
    }

    pub fn contains(&self, node: usize) -> bool {
        self.mask.get(node).copied().unwrap_or(false)
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.mask
    }

    pub fn nodes(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&i| self.mask[i]).collect()
    }

    pub fn is_subset_of(&self, other: &RegionMask) -> bool {
        self.mask.iter().zip(&other.mask).all(|(a, b)| !a || *b)
    }

    /// `#` for members, `.` otherwise; one line per grid row, top row first.
    pub fn to_ascii(&self, grid: &Grid) -> String {
        let nx = grid.counts()[0];
        let ny = if grid.dim() == 2 { grid.counts()[1] } else { 1 };
        let mut s = String::with_capacity((nx + 1) * ny);
        for j in (0..ny).rev() {
            for i in 0..nx {
                s.push(if self.mask[i + nx * j] { '#' } else { '.' });
            }
            s.push('\n');
        }
        s
    }

    /// Parses the output of [`RegionMask::to_ascii`].
    pub fn from_ascii(kind: RegionKind, grid: &Grid, text: &str) -> Result<Self, RegionError> {
        let rows: Vec<&str> = text.lines().map(str::trim_end).filter(|l| !l.is_empty()).collect();
        let nx = grid.counts()[0];
        let mut mask = vec![false; grid.len()];
        let ny = rows.len();
        if ny * nx != grid.len() || rows.iter().any(|r| r.chars().count() != nx) {
            return Err(RegionError::LengthMismatch { expected: grid.len(), got: rows.iter().map(|r| r.len()).sum() });
        }
        for (r, row) in rows.iter().enumerate() {
            let j = ny - 1 - r;
            for (i, ch) in row.chars().enumerate() {
                mask[i + nx * j] = ch == '#';
            }
        }
        Ok(RegionMask { kind, mask })
    }

    /// `node,x[,y]` rows for every member.
    pub fn write_csv<W: Write>(&self, grid: &Grid, out: &mut W) -> Result<(), RegionError> {
        writeln!(out, "{}", if grid.dim() == 2 { "node,x,y" } else { "node,x" })?;
        for n in self.nodes() {
            let c = grid.coords(n);
            if grid.dim() == 2 {
                writeln!(out, "{n},{},{}", g17(c[0]), g17(c[1]))?;
            } else {
                writeln!(out, "{n},{}", g17(c[0]))?;
            }
        }
        Ok(())
    }
}

/// Interior nodes with `|a| > threshold`.
pub fn support_region(a: &ScalarField, grid: &Grid, threshold: f64) -> RegionMask {
    let mask = (0..grid.len())
        .map(|n| !grid.is_boundary(n) && a.values()[n].abs() > threshold)
        .collect();
    RegionMask::new(RegionKind::Support, mask)
}

/// `Gamma = {x in gamma : |a(x)| > threshold}`; empty is an error.
pub fn gamma_positive(
    a: &ScalarField,
    gamma: &BoundaryMask,
    threshold: f64,
) -> Result<RegionMask, RegionError> {
    let nodes = gamma.positive_part(a, threshold);
    if nodes.is_empty() {
        return Err(RegionError::EmptyGamma { threshold });
    }
    Ok(RegionMask::from_nodes(RegionKind::Gamma, a.len(), &nodes))
}

/// Interior members of `within` that are face-adjacent to a `Gamma` node.
fn gamma_adjacent(grid: &Grid, within: &RegionMask, gamma_pos: &RegionMask) -> Vec<usize> {
    (0..grid.len())
        .filter(|&n| within.contains(n) && !grid.is_boundary(n))
        .filter(|&n| grid.neighbors(n).any(|q| gamma_pos.contains(q)))
        .collect()
}

/// Flood fill through `omega0` seeded at the interior nodes adjacent to `Gamma`.
pub fn reachable_omega(omega0: &RegionMask, gamma_pos: &RegionMask, grid: &Grid) -> RegionMask {
    let mut mask = vec![false; grid.len()];
    let mut queue: VecDeque<usize> = VecDeque::new();
    for n in gamma_adjacent(grid, omega0, gamma_pos) {
        mask[n] = true;
        queue.push_back(n);
    }
    while let Some(p) = queue.pop_front() {
        for q in grid.neighbors(p) {
            if !mask[q] && omega0.contains(q) && !grid.is_boundary(q) {
                mask[q] = true;
                queue.push_back(q);
            }
        }
    }
    RegionMask::new(RegionKind::Omega, mask)
}

/// Tube around a shortest grid path from `y` to `Gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaY {
    /// Interior nodes of the tube (a subset of `omega`).
    pub mask: RegionMask,
    /// `Gamma` nodes face-adjacent to the tube: the contact patch.
    pub contact: Vec<usize>,
    /// Path from `y` (first) to a node adjacent to `Gamma` (last).
    pub path: Vec<usize>,
    pub y: usize,
}

impl OmegaY {
    /// Tube nodes with a face neighbor outside the tube and outside the
    /// contact patch: the discrete `boundary of omega_y minus Gamma`.
    pub fn boundary_layer(&self, grid: &Grid) -> Vec<usize> {
        self.mask
            .nodes()
            .into_iter()
            .filter(|&n| {
                grid.neighbors(n).any(|q| !self.mask.contains(q) && self.contact.binary_search(&q).is_err())
            })
            .collect()
    }

    /// Tube plus contact patch.
    pub fn closure(&self) -> Vec<usize> {
        let mut all = self.mask.nodes();
        all.extend_from_slice(&self.contact);
        all.sort_unstable();
        all
    }
}

/// Half-width of the tube in grid cells (max-norm in index space).
pub const TUBE_HALF_WIDTH: usize = 2;

/// Carves `omega_y`: shortest path (breadth first, inside `omega`) from `y`
/// to a node adjacent to `Gamma`, widened to a tube and intersected with `omega`.
///
/// Verifies: `y` in the tube, tube inside `omega`, non-empty contact with
/// `Gamma`, and `|a| > threshold` on the tube and its contact patch.
pub fn carve_omega_y(
    omega: &RegionMask,
    gamma_pos: &RegionMask,
    grid: &Grid,
    y: usize,
    a: &ScalarField,
    threshold: f64,
) -> Result<OmegaY, RegionError> {
    if !omega.contains(y) {
        return Err(RegionError::NotInOmega(y));
    }
    let targets = gamma_adjacent(grid, omega, gamma_pos);
    let mut parent = vec![usize::MAX; grid.len()];
    parent[y] = y;
    let mut queue = VecDeque::from([y]);
    let mut end = None;
    while let Some(p) = queue.pop_front() {
        if targets.binary_search(&p).is_ok() {
            end = Some(p);
            break;
        }
        for q in grid.neighbors(p) {
            if parent[q] == usize::MAX && omega.contains(q) {
                parent[q] = p;
                queue.push_back(q);
            }
        }
    }
    let end = end.ok_or(RegionError::NoPath(y))?;
    let mut path = vec![end];
    while *path.last().unwrap() != y {
        let p = parent[*path.last().unwrap()];
        path.push(p);
    }
    path.reverse();

    let w = TUBE_HALF_WIDTH as isize;
    let mut mask = vec![false; grid.len()];
    for &p in &path {
        let idx = grid.multi_index(p);
        let span_y = if grid.dim() == 2 { w } else { 0 };
        for dj in -span_y..=span_y {
            for di in -w..=w {
                let i = idx[0] as isize + di;
                let j = idx[1] as isize + dj;
                if i < 0 || j < 0 || i >= grid.counts()[0] as isize {
                    continue;
                }
                if grid.dim() == 2 && j >= grid.counts()[1] as isize {
                    continue;
                }
                let q = grid.node([i as usize, j as usize]);
                if omega.contains(q) {
                    mask[q] = true;
                }
            }
        }
    }
    let mask = RegionMask::new(RegionKind::OmegaY, mask);
    let mut contact: Vec<usize> = mask
        .nodes()
        .into_iter()
        .flat_map(|n| grid.neighbors(n).collect::<Vec<_>>())
        .filter(|&q| gamma_pos.contains(q))
        .collect();
    contact.sort_unstable();
    contact.dedup();

    let out = OmegaY { mask, contact, path, y };
    if !out.mask.contains(y) {
        return Err(RegionError::Check("y is not in the tube".into()));
    }
    if !out.mask.is_subset_of(omega) {
        return Err(RegionError::Check("tube leaves omega".into()));
    }
    if out.contact.is_empty() {
        return Err(RegionError::Check("tube does not touch Gamma".into()));
    }
    if let Some(bad) = out.closure().into_iter().find(|&n| a.values()[n].abs() <= threshold) {
        return Err(RegionError::Check(format!("|a| vanishes at node {bad} of the tube closure")));
    }
    Ok(out)
}
