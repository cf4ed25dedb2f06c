//! Regular D2Q5 lattice over a rectangular plate with circular holes.
//!
//! Nodes sit at `(i·Δh, j·Δh)` with the origin at the lower-left corner of
//! the plate. Every material node is classified as [`NodeClass::Interior`],
//! [`NodeClass::Boundary`] or [`NodeClass::SecondRow`]; nodes inside a hole
//! are [`NodeClass::Outside`] and never take part in any sweep.
//!
//! Boundary nodes carry a [`BoundaryCell`]: the `Δh × Δh` square centered on
//! the node, clipped against the plate. Inside a cell, a hole boundary is
//! replaced by the chord joining the two points where the circle crosses the
//! cell outline.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Vec2;

/// Geometric tolerance in units of Δh.
pub const GEOMETRY_TOL: f64 = 1e-10;

/// Boundary cells smaller than this fraction of Δh² are dropped from the lattice.
pub const SLIVER_FRACTION: f64 = 1e-3;

/// D2Q5 link directions, indexed like the lattice velocities: rest, +x, +y, -x, -y.
pub const LINKS: [[i64; 2]; 5] = [[0, 0], [1, 0], [0, 1], [-1, 0], [0, -1]];

/// Index of the link pointing the other way (`OPPOSITE[α]`).
pub const OPPOSITE: [usize; 5] = [0, 3, 4, 1, 2];

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("plate dimensions must be positive and finite, got {width} x {height}")]
    BadRectangle { width: f64, height: f64 },
    #[error("lattice spacing must be positive and finite, got {0}")]
    BadSpacing(f64),
    #[error("{side} = {length} is not a multiple of the lattice spacing {spacing}")]
    NonConforming {
        side: &'static str,
        length: f64,
        spacing: f64,
    },
    #[error("hole {index} must have a positive diameter and lie strictly inside the plate")]
    HoleOutsidePlate { index: usize },
    #[error("holes {first} and {second} intersect")]
    HolesIntersect { first: usize, second: usize },
    #[error("hole {index} is too small to be resolved by the lattice (no node falls inside it)")]
    UnresolvedHole { index: usize },
    #[error("no material node survives classification")]
    NoMaterial,
    #[error("node {0} lies outside the material")]
    NotMaterial(usize),
    #[error("clipped cell at node {node} has volume {volume:.3e}, below the sliver limit")]
    DegenerateCell { node: usize, volume: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hole {
    pub center: Vec2,
    pub diameter: f64,
}

impl Hole {
    pub fn radius(&self) -> f64 {
        0.5 * self.diameter
    }

    fn distance(&self, p: Vec2) -> f64 {
        (p[0] - self.center[0]).hypot(p[1] - self.center[1])
    }
}

/// Rectangular plate `[0, width] × [0, height]` with circular holes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub width: f64,
    pub height: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub holes: Vec<Hole>,
}

impl Geometry {
    pub fn rectangle(width: f64, height: f64) -> Self {
        Self {
            width,
            height,
            holes: Vec::new(),
        }
    }

    pub fn with_hole(mut self, center: Vec2, diameter: f64) -> Self {
        self.holes.push(Hole { center, diameter });
        self
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let (w, h) = (self.width, self.height);
        if !(w.is_finite() && h.is_finite() && w > 0.0 && h > 0.0) {
            return Err(GeometryError::BadRectangle {
                width: w,
                height: h,
            });
        }
        for (index, hole) in self.holes.iter().enumerate() {
            let r = hole.radius();
            let [cx, cy] = hole.center;
            let inside = r > 0.0
                && r.is_finite()
                && cx - r > 0.0
                && cx + r < w
                && cy - r > 0.0
                && cy + r < h;
            if !inside {
                return Err(GeometryError::HoleOutsidePlate { index });
            }
        }
        for (i, a) in self.holes.iter().enumerate() {
            for (j, b) in self.holes.iter().enumerate().skip(i + 1) {
                if a.distance(b.center) <= a.radius() + b.radius() {
                    return Err(GeometryError::HolesIntersect {
                        first: i,
                        second: j,
                    });
                }
            }
        }
        Ok(())
    }

    /// Material area of the exact geometry.
    pub fn area(&self) -> f64 {
        let holes: f64 = self
            .holes
            .iter()
            .map(|h| std::f64::consts::PI * h.radius() * h.radius())
            .sum();
        self.width * self.height - holes
    }

    fn hole_containing(&self, p: Vec2) -> Option<usize> {
        self.holes.iter().position(|h| h.distance(p) < h.radius())
    }
}

/// Part of the plate boundary a surface segment belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryId {
    Left,
    Right,
    Bottom,
    Top,
    Hole(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeClass {
    Interior,
    Boundary,
    SecondRow,
    Outside,
}

impl NodeClass {
    pub fn is_material(self) -> bool {
        self != NodeClass::Outside
    }
}

/// Finite-difference weights for one first derivative at one node.
///
/// Unused slots carry a zero weight and point at the node itself, so
/// evaluation never reads an Outside node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub nodes: [usize; 3],
    pub weights: [f64; 3],
}

impl Stencil {
    fn zero(k: usize) -> Self {
        Self {
            nodes: [k; 3],
            weights: [0.0; 3],
        }
    }

    #[inline]
    pub fn apply(&self, values: &[f64]) -> f64 {
        self.weights[0] * values[self.nodes[0]]
            + self.weights[1] * values[self.nodes[1]]
            + self.weights[2] * values[self.nodes[2]]
    }

    #[inline]
    pub fn apply_vec(&self, values: &[Vec2]) -> Vec2 {
        let mut out = [0.0; 2];
        for s in 0..3 {
            let v = values[self.nodes[s]];
            out[0] += self.weights[s] * v[0];
            out[1] += self.weights[s] * v[1];
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StencilOrder {
    /// Central or one-sided three-point stencil.
    Second,
    /// Two-point fallback near thin features.
    First,
    /// No material neighbor along the axis; derivative taken as zero.
    Missing,
}

#[derive(Debug, Clone)]
pub struct Lattice {
    nx: usize,
    ny: usize,
    spacing: f64,
    periodic: bool,
    class: Vec<NodeClass>,
    neighbors: Vec<[Option<usize>; 4]>,
    stencils: Vec<[Stencil; 2]>,
    stencil_order: Vec<[StencilOrder; 2]>,
}

impl Lattice {
    /// Builds and classifies the lattice for `geometry`.
    pub fn build(geometry: &Geometry, spacing: f64) -> Result<Self, GeometryError> {
        geometry.validate()?;
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(GeometryError::BadSpacing(spacing));
        }
        let nx = conforming_count("width", geometry.width, spacing)?;
        let ny = conforming_count("height", geometry.height, spacing)?;
        let n = nx * ny;
        let tol = GEOMETRY_TOL * spacing;

        let mut lattice = Self {
            nx,
            ny,
            spacing,
            periodic: false,
            class: vec![NodeClass::Interior; n],
            neighbors: vec![[None; 4]; n],
            stencils: Vec::new(),
            stencil_order: Vec::new(),
        };
        for (index, hole) in geometry.holes.iter().enumerate() {
            let mut any = false;
            for k in 0..n {
                let p = lattice.position(k);
                if hole.distance(p) < hole.radius() - tol {
                    lattice.class[k] = NodeClass::Outside;
                    any = true;
                }
            }
            if !any {
                return Err(GeometryError::UnresolvedHole { index });
            }
        }

        // Classification and sliver removal feed back into each other.
        loop {
            lattice.link_neighbors();
            let mut changed = false;
            for k in 0..n {
                if !lattice.class[k].is_material() {
                    continue;
                }
                let touches = lattice.on_perimeter(k)
                    || geometry
                        .holes
                        .iter()
                        .any(|h| square_crosses_circle(lattice.position(k), spacing, h, tol))
                    || lattice.neighbors[k].iter().any(Option::is_none);
                lattice.class[k] = if touches {
                    NodeClass::Boundary
                } else {
                    NodeClass::Interior
                };
            }
            for k in 0..n {
                if lattice.class[k] != NodeClass::Boundary {
                    continue;
                }
                let polygon = clipped_polygon(&lattice, geometry, k);
                if polygon.area() < SLIVER_FRACTION * spacing * spacing {
                    log::debug!("dropping sliver cell at node {k}");
                    lattice.class[k] = NodeClass::Outside;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        if lattice.class.iter().all(|c| !c.is_material()) {
            return Err(GeometryError::NoMaterial);
        }
        for k in 0..n {
            if lattice.class[k] == NodeClass::Interior
                && lattice.neighbors[k]
                    .iter()
                    .flatten()
                    .any(|&r| lattice.class[r] == NodeClass::Boundary)
            {
                lattice.class[k] = NodeClass::SecondRow;
            }
        }
        lattice.build_stencils();
        Ok(lattice)
    }

    /// Doubly periodic lattice with every node Interior. Used to exercise
    /// the wave solver without boundaries.
    pub fn periodic(nx: usize, ny: usize, spacing: f64) -> Self {
        let n = nx * ny;
        let mut lattice = Self {
            nx,
            ny,
            spacing,
            periodic: true,
            class: vec![NodeClass::Interior; n],
            neighbors: vec![[None; 4]; n],
            stencils: Vec::new(),
            stencil_order: Vec::new(),
        };
        lattice.link_neighbors();
        lattice.build_stencils();
        lattice
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn coords(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    pub fn position(&self, k: usize) -> Vec2 {
        let (i, j) = self.coords(k);
        [i as f64 * self.spacing, j as f64 * self.spacing]
    }

    #[inline]
    pub fn class(&self, k: usize) -> NodeClass {
        self.class[k]
    }

    pub fn classes(&self) -> &[NodeClass] {
        &self.class
    }

    #[inline]
    pub fn is_material(&self, k: usize) -> bool {
        self.class[k].is_material()
    }

    /// Material neighbor of `k` along lattice link `alpha` (1..=4).
    #[inline]
    pub fn neighbor(&self, k: usize, alpha: usize) -> Option<usize> {
        debug_assert!((1..5).contains(&alpha));
        self.neighbors[k][alpha - 1]
    }

    pub fn neighbors(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.neighbors[k].iter().flatten().copied()
    }

    /// First-derivative stencil at `k` along `axis` (0 = x, 1 = y).
    #[inline]
    pub fn stencil(&self, k: usize, axis: usize) -> &Stencil {
        &self.stencils[k][axis]
    }

    pub fn stencil_order(&self, k: usize, axis: usize) -> StencilOrder {
        self.stencil_order[k][axis]
    }

    pub fn count(&self, class: NodeClass) -> usize {
        self.class.iter().filter(|&&c| c == class).count()
    }

    pub fn nodes_of(&self, class: NodeClass) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.class[k] == class).collect()
    }

    pub fn material_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.is_material(k)).collect()
    }

    /// Material node closest to `p`.
    pub fn nearest_material(&self, p: Vec2) -> Option<usize> {
        (0..self.len())
            .filter(|&k| self.is_material(k))
            .min_by(|&a, &b| {
                let da = dist2(self.position(a), p);
                let db = dist2(self.position(b), p);
                da.total_cmp(&db)
            })
    }

    pub fn summary(&self) -> String {
        format!(
            "{} x {} nodes, spacing {:.6e}: {} interior, {} second-row, {} boundary, {} outside",
            self.nx,
            self.ny,
            self.spacing,
            self.count(NodeClass::Interior),
            self.count(NodeClass::SecondRow),
            self.count(NodeClass::Boundary),
            self.count(NodeClass::Outside),
        )
    }

    fn on_perimeter(&self, k: usize) -> bool {
        let (i, j) = self.coords(k);
        !self.periodic && (i == 0 || j == 0 || i + 1 == self.nx || j + 1 == self.ny)
    }

    fn raw_neighbor(&self, k: usize, alpha: usize) -> Option<usize> {
        let (i, j) = self.coords(k);
        let [di, dj] = LINKS[alpha];
        let (nx, ny) = (self.nx as i64, self.ny as i64);
        let (mut ni, mut nj) = (i as i64 + di, j as i64 + dj);
        if self.periodic {
            ni = ni.rem_euclid(nx);
            nj = nj.rem_euclid(ny);
        } else if ni < 0 || nj < 0 || ni >= nx || nj >= ny {
            return None;
        }
        Some(nj as usize * self.nx + ni as usize)
    }

    fn link_neighbors(&mut self) {
        for k in 0..self.len() {
            for alpha in 1..5 {
                self.neighbors[k][alpha - 1] = self
                    .raw_neighbor(k, alpha)
                    .filter(|&r| self.class[r].is_material());
            }
        }
    }

    fn build_stencils(&mut self) {
        let n = self.len();
        let h = self.spacing;
        self.stencils = vec![[Stencil::zero(0); 2]; n];
        self.stencil_order = vec![[StencilOrder::Missing; 2]; n];
        for k in 0..n {
            for axis in 0..2 {
                let (plus, minus) = if axis == 0 { (1, 3) } else { (2, 4) };
                let fwd = self.neighbors[k][plus - 1];
                let bwd = self.neighbors[k][minus - 1];
                let fwd2 = fwd.and_then(|r| self.neighbors[r][plus - 1]);
                let bwd2 = bwd.and_then(|r| self.neighbors[r][minus - 1]);
                let (stencil, order) = match (bwd, fwd, bwd2, fwd2) {
                    (Some(b), Some(f), _, _) => (
                        Stencil {
                            nodes: [b, f, k],
                            weights: [-0.5 / h, 0.5 / h, 0.0],
                        },
                        StencilOrder::Second,
                    ),
                    (_, Some(f), _, Some(ff)) => (
                        Stencil {
                            nodes: [k, f, ff],
                            weights: [-1.5 / h, 2.0 / h, -0.5 / h],
                        },
                        StencilOrder::Second,
                    ),
                    (Some(b), _, Some(bb), _) => (
                        Stencil {
                            nodes: [k, b, bb],
                            weights: [1.5 / h, -2.0 / h, 0.5 / h],
                        },
                        StencilOrder::Second,
                    ),
                    (_, Some(f), _, _) => (
                        Stencil {
                            nodes: [k, f, k],
                            weights: [-1.0 / h, 1.0 / h, 0.0],
                        },
                        StencilOrder::First,
                    ),
                    (Some(b), _, _, _) => (
                        Stencil {
                            nodes: [k, b, k],
                            weights: [1.0 / h, -1.0 / h, 0.0],
                        },
                        StencilOrder::First,
                    ),
                    _ => (Stencil::zero(k), StencilOrder::Missing),
                };
                if self.class[k].is_material() && order != StencilOrder::Second {
                    log::debug!("node {k}: reduced-order derivative along axis {axis}");
                }
                self.stencils[k][axis] = stencil;
                self.stencil_order[k][axis] = order;
            }
        }
    }
}

fn conforming_count(side: &'static str, length: f64, spacing: f64) -> Result<usize, GeometryError> {
    let cells = length / spacing;
    let rounded = cells.round();
    if rounded < 1.0 || (cells - rounded).abs() > 1e-9 * cells.max(1.0) {
        return Err(GeometryError::NonConforming {
            side,
            length,
            spacing,
        });
    }
    Ok(rounded as usize + 1)
}

fn dist2(a: Vec2, b: Vec2) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Whether the circle of `hole` crosses the `h × h` square centered at `p`.
fn square_crosses_circle(p: Vec2, h: f64, hole: &Hole, tol: f64) -> bool {
    let half = 0.5 * h;
    let [cx, cy] = hole.center;
    let dx = (cx - p[0]).abs();
    let dy = (cy - p[1]).abs();
    let near = (dx - half).max(0.0).hypot((dy - half).max(0.0));
    let far = (dx + half).hypot(dy + half);
    let r = hole.radius();
    near < r - tol && far > r + tol
}

// ---------------------------------------------------------------------------
// Cell clipping
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
enum EdgeLabel {
    /// Side of the original square facing lattice link `alpha`.
    Side(usize),
    /// Piece of the plate boundary.
    Surface(BoundaryId),
}

/// Counter-clockwise polygon; `labels[i]` describes the edge from vertex `i` to `i + 1`.
#[derive(Debug, Clone)]
struct Polygon {
    vertices: Vec<Vec2>,
    labels: Vec<EdgeLabel>,
}

impl Polygon {
    fn square(center: Vec2, h: f64) -> Self {
        let half = 0.5 * h;
        let [x, y] = center;
        Self {
            vertices: vec![
                [x - half, y - half],
                [x + half, y - half],
                [x + half, y + half],
                [x - half, y + half],
            ],
            labels: vec![
                EdgeLabel::Side(4),
                EdgeLabel::Side(1),
                EdgeLabel::Side(2),
                EdgeLabel::Side(3),
            ],
        }
    }

    fn area(&self) -> f64 {
        let n = self.vertices.len();
        if n < 3 {
            return 0.0;
        }
        let mut twice = 0.0;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            twice += a[0] * b[1] - b[0] * a[1];
        }
        0.5 * twice
    }

    /// Keeps the part where `(p - origin)·normal >= 0`; the new edge along the
    /// clip line gets `label`.
    fn clip(&mut self, origin: Vec2, normal: Vec2, label: EdgeLabel) {
        let n = self.vertices.len();
        if n == 0 {
            return;
        }
        let side = |p: Vec2| (p[0] - origin[0]) * normal[0] + (p[1] - origin[1]) * normal[1];
        let mut vertices = Vec::with_capacity(n + 2);
        let mut labels = Vec::with_capacity(n + 2);
        for i in 0..n {
            let cur = self.vertices[i];
            let next = self.vertices[(i + 1) % n];
            let (sc, sn) = (side(cur), side(next));
            let cur_in = sc >= 0.0;
            let next_in = sn >= 0.0;
            let crossing = || {
                let t = sc / (sc - sn);
                [cur[0] + t * (next[0] - cur[0]), cur[1] + t * (next[1] - cur[1])]
            };
            match (cur_in, next_in) {
                (true, true) => {
                    vertices.push(cur);
                    labels.push(self.labels[i]);
                }
                (true, false) => {
                    vertices.push(cur);
                    labels.push(self.labels[i]);
                    vertices.push(crossing());
                    labels.push(label);
                }
                (false, true) => {
                    vertices.push(crossing());
                    labels.push(self.labels[i]);
                }
                (false, false) => {}
            }
        }
        self.vertices = vertices;
        self.labels = labels;
    }

    fn contains(&self, p: Vec2) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= 0.0
        })
    }

    /// Angles (around the hole center) where the circle crosses the polygon outline.
    fn circle_crossings(&self, hole: &Hole, tol: f64) -> Vec<f64> {
        let [cx, cy] = hole.center;
        let r = hole.radius();
        let n = self.vertices.len();
        let mut angles: Vec<f64> = Vec::new();
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let d = [b[0] - a[0], b[1] - a[1]];
            let f = [a[0] - cx, a[1] - cy];
            let qa = d[0] * d[0] + d[1] * d[1];
            let qb = 2.0 * (f[0] * d[0] + f[1] * d[1]);
            let qc = f[0] * f[0] + f[1] * f[1] - r * r;
            let disc = qb * qb - 4.0 * qa * qc;
            if qa <= 0.0 || disc < 0.0 {
                continue;
            }
            let sq = disc.sqrt();
            for t in [(-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)] {
                if (0.0..=1.0).contains(&t) {
                    let p = [a[0] + t * d[0], a[1] + t * d[1]];
                    let theta = (p[1] - cy).atan2(p[0] - cx);
                    let duplicate = angles.iter().any(|&q| {
                        let dq = (q - theta).abs();
                        dq.min(std::f64::consts::TAU - dq) * r < tol
                    });
                    if !duplicate {
                        angles.push(theta);
                    }
                }
            }
        }
        angles.sort_by(f64::total_cmp);
        angles
    }
}

/// Square cell around `k` clipped against the plate outline and chord-approximated holes.
fn clipped_polygon(lattice: &Lattice, geometry: &Geometry, k: usize) -> Polygon {
    let h = lattice.spacing;
    let tol = GEOMETRY_TOL * h;
    let center = lattice.position(k);
    let mut poly = Polygon::square(center, h);

    let (w, ht) = (geometry.width, geometry.height);
    poly.clip([0.0, 0.0], [1.0, 0.0], EdgeLabel::Surface(BoundaryId::Left));
    poly.clip([w, 0.0], [-1.0, 0.0], EdgeLabel::Surface(BoundaryId::Right));
    poly.clip([0.0, 0.0], [0.0, 1.0], EdgeLabel::Surface(BoundaryId::Bottom));
    poly.clip([0.0, ht], [0.0, -1.0], EdgeLabel::Surface(BoundaryId::Top));

    for (index, hole) in geometry.holes.iter().enumerate() {
        if !square_crosses_circle(center, h, hole, tol) {
            continue;
        }
        let crossings = poly.circle_crossings(hole, tol);
        if crossings.len() < 2 {
            continue;
        }
        let [cx, cy] = hole.center;
        let r = hole.radius();
        let at = |theta: f64| [cx + r * theta.cos(), cy + r * theta.sin()];
        let m = crossings.len();
        let mut chords = Vec::new();
        for i in 0..m {
            let t0 = crossings[i];
            let t1 = if i + 1 < m {
                crossings[i + 1]
            } else {
                crossings[0] + std::f64::consts::TAU
            };
            if poly.contains(at(0.5 * (t0 + t1))) {
                chords.push((at(t0), at(t1)));
            }
        }
        if chords.len() > 1 {
            log::info!(
                "hole {index} splits the cell of node {k} into {} pieces; keeping the node's piece",
                chords.len()
            );
        }
        for (p0, p1) in chords {
            // Keep the side of the chord away from the hole center.
            let d = [p1[0] - p0[0], p1[1] - p0[1]];
            let mut normal = [-d[1], d[0]];
            let towards_center = (cx - p0[0]) * normal[0] + (cy - p0[1]) * normal[1];
            if towards_center > 0.0 {
                normal = [-normal[0], -normal[1]];
            }
            poly.clip(p0, normal, EdgeLabel::Surface(BoundaryId::Hole(index)));
        }
    }
    poly
}

#[derive(Debug, Clone, PartialEq)]
pub struct InternalSegment {
    pub neighbor: usize,
    pub length: f64,
    pub normal: Vec2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalSegment {
    pub boundary: BoundaryId,
    pub length: f64,
    pub normal: Vec2,
    pub midpoint: Vec2,
}

/// Control volume around a boundary node for the discrete momentum balance.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCell {
    pub node: usize,
    pub volume: f64,
    pub internal: Vec<InternalSegment>,
    pub external: Vec<ExternalSegment>,
}

impl BoundaryCell {
    /// `Σ l·n` over the closed cell outline; zero up to roundoff.
    pub fn closure_residual(&self) -> Vec2 {
        let mut sum = [0.0; 2];
        for s in &self.internal {
            sum[0] += s.length * s.normal[0];
            sum[1] += s.length * s.normal[1];
        }
        for s in &self.external {
            sum[0] += s.length * s.normal[0];
            sum[1] += s.length * s.normal[1];
        }
        sum
    }

    pub fn touches(&self, boundary: BoundaryId) -> bool {
        self.external.iter().any(|s| s.boundary == boundary)
    }
}

/// Clips the node's square cell against the geometry.
///
/// Any material node is accepted; nodes away from the boundary return the
/// full square with no external segments. A square side facing a node that
/// is not part of the lattice becomes an external segment of the nearest
/// hole.
pub fn compute_boundary_cell(
    lattice: &Lattice,
    geometry: &Geometry,
    node: usize,
) -> Result<BoundaryCell, GeometryError> {
    if node >= lattice.len() || !lattice.is_material(node) {
        return Err(GeometryError::NotMaterial(node));
    }
    let h = lattice.spacing;
    let poly = clipped_polygon(lattice, geometry, node);
    let volume = poly.area();
    if volume < SLIVER_FRACTION * h * h {
        return Err(GeometryError::DegenerateCell { node, volume });
    }

    let mut cell = BoundaryCell {
        node,
        volume,
        internal: Vec::new(),
        external: Vec::new(),
    };
    let n = poly.vertices.len();
    for i in 0..n {
        let a = poly.vertices[i];
        let b = poly.vertices[(i + 1) % n];
        let length = (b[0] - a[0]).hypot(b[1] - a[1]);
        if length <= GEOMETRY_TOL * h {
            continue;
        }
        let normal = [(b[1] - a[1]) / length, -(b[0] - a[0]) / length];
        let midpoint = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        let boundary = match poly.labels[i] {
            EdgeLabel::Side(alpha) => match lattice.neighbor(node, alpha) {
                Some(neighbor) => {
                    cell.internal.push(InternalSegment {
                        neighbor,
                        length,
                        normal,
                    });
                    continue;
                }
                None => {
                    let [di, dj] = LINKS[alpha];
                    let p = lattice.position(node);
                    let beyond = [p[0] + di as f64 * h, p[1] + dj as f64 * h];
                    let hole = geometry.hole_containing(beyond).unwrap_or_else(|| {
                        nearest_hole(geometry, beyond)
                    });
                    BoundaryId::Hole(hole)
                }
            },
            EdgeLabel::Surface(id) => id,
        };
        cell.external.push(ExternalSegment {
            boundary,
            length,
            normal,
            midpoint,
        });
    }
    Ok(cell)
}

fn nearest_hole(geometry: &Geometry, p: Vec2) -> usize {
    geometry
        .holes
        .iter()
        .enumerate()
        .min_by(|a, b| {
            let da = a.1.distance(p) - a.1.radius();
            let db = b.1.distance(p) - b.1.radius();
            da.total_cmp(&db)
        })
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Cells for every Boundary node, in node order.
pub fn boundary_cells(lattice: &Lattice, geometry: &Geometry) -> Result<Vec<BoundaryCell>, GeometryError> {
    lattice
        .nodes_of(NodeClass::Boundary)
        .into_iter()
        .map(|k| compute_boundary_cell(lattice, geometry, k))
        .collect()
}
