//! Triangular meshes over planar coordinates, piecewise-linear basis
//! projection and finite-element matrices.
//!
//! Mesh construction triangulates the data locations together with a convex
//! outer boundary pushed out by `extension`, then refines by inserting
//! circumcenters until every triangle meets the edge-length bound of its
//! zone (finer inside the convex hull of the data, coarser in the
//! extension) and a minimum-angle criterion.

mod fem;

pub use fem::FemMatrices;

use std::fmt::Write as _;

use spade::{DelaunayTriangulation, Point2, Triangulation};

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    locator: Locator,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshParams {
    /// Width of the margin added around the convex hull of the data.
    pub extension: f64,
    /// Longest allowed edge for triangles inside the data hull.
    pub max_edge_inner: f64,
    /// Longest allowed edge in the extension.
    pub max_edge_outer: f64,
    /// Data locations closer than this to an earlier one are not used as
    /// vertices. Zero keeps every distinct location.
    pub cutoff: f64,
}

impl MeshParams {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("extension", self.extension),
            ("max_edge_inner", self.max_edge_inner),
            ("max_edge_outer", self.max_edge_outer),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameters(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !(self.cutoff >= 0.0) {
            return Err(Error::InvalidParameters(format!(
                "cutoff must be non-negative, got {}",
                self.cutoff
            )));
        }
        Ok(())
    }
}

const MAX_REFINE_ROUNDS: usize = 60;
const MAX_VERTICES: usize = 250_000;
/// Radius-to-shortest-edge ratio above which a triangle counts as poorly
/// shaped (about a 21° minimum angle).
const QUALITY_RATIO: f64 = 1.4;

/// Builds a refined mesh around `locations`.
pub fn build_mesh(locations: &[Point], params: &MeshParams) -> Result<Mesh> {
    params.validate()?;
    if locations.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::InvalidParameters("non-finite location".into()));
    }
    let hull = convex_hull(locations);
    if hull.len() < 3 || polygon_area(&hull) <= 1e-12 * diameter(&hull).powi(2) {
        return Err(Error::CollinearInput);
    }

    let mut tri: DelaunayTriangulation<Point2<f64>> = DelaunayTriangulation::new();
    let min_sep = params.cutoff.max(1e-9 * diameter(&hull));
    for p in locations {
        let q = Point2::new(p[0], p[1]);
        if let Some(nn) = tri.nearest_neighbor(q) {
            if dist(pos(nn.position()), *p) < min_sep {
                continue;
            }
        }
        insert(&mut tri, *p)?;
    }

    let outer = outer_boundary(&hull, params.extension, params.max_edge_outer);
    for p in &outer {
        insert(&mut tri, *p)?;
    }
    let outer_hull = convex_hull(&outer);

    let size = |c: Point| {
        if inside_convex(&hull, c, 0.0) {
            params.max_edge_inner
        } else {
            params.max_edge_outer
        }
    };

    for _ in 0..MAX_REFINE_ROUNDS {
        let mut candidates = Vec::new();
        for face in tri.inner_faces() {
            let [a, b, c] = face.positions().map(pos);
            let lens = [dist(b, c), dist(c, a), dist(a, b)];
            let longest = lens.iter().cloned().fold(0.0, f64::max);
            let shortest = lens.iter().cloned().fold(f64::INFINITY, f64::min);
            let centroid = [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0];
            let h = size(centroid);
            let Some((cc, r)) = circumcircle(a, b, c) else {
                continue;
            };
            let too_long = longest > h;
            let bad_shape = r / shortest > QUALITY_RATIO && shortest > 0.25 * h;
            if !too_long && !bad_shape {
                continue;
            }
            let target = if inside_convex(&outer_hull, cc, -1e-3 * h) {
                cc
            } else {
                // Split the longest edge instead, unless it lies on the
                // boundary, in which case fall back to the centroid.
                let (p, q) = match lens
                    .iter()
                    .enumerate()
                    .max_by(|x, y| x.1.total_cmp(y.1))
                    .map(|x| x.0)
                {
                    Some(0) => (b, c),
                    Some(1) => (c, a),
                    _ => (a, b),
                };
                let mid = [(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0];
                if inside_convex(&outer_hull, mid, -1e-3 * h) {
                    mid
                } else {
                    centroid
                }
            };
            candidates.push((longest, target, h));
        }
        if candidates.is_empty() {
            break;
        }
        // Largest triangles first, so later candidates that crowd them are
        // deferred to the next round.
        candidates.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1[0].total_cmp(&y.1[0])));
        let mut inserted = 0;
        for (_, p, h) in candidates {
            let nn = tri
                .nearest_neighbor(Point2::new(p[0], p[1]))
                .map(|v| dist(pos(v.position()), p))
                .unwrap_or(f64::INFINITY);
            if nn < 0.3 * h {
                continue;
            }
            insert(&mut tri, p)?;
            inserted += 1;
        }
        if inserted == 0 || tri.num_vertices() > MAX_VERTICES {
            break;
        }
    }

    let vertices: Vec<Point> = tri.vertices().map(|v| pos(v.position())).collect();
    let triangles: Vec<[usize; 3]> = tri
        .inner_faces()
        .map(|f| f.vertices().map(|v| v.fix().index()))
        .collect();
    Mesh::from_parts(vertices, triangles)
}

fn insert(tri: &mut DelaunayTriangulation<Point2<f64>>, p: Point) -> Result<()> {
    tri.insert(Point2::new(p[0], p[1]))
        .map(|_| ())
        .map_err(|e| Error::InvalidParameters(format!("cannot insert ({}, {}): {e:?}", p[0], p[1])))
}

fn pos(p: Point2<f64>) -> Point {
    [p.x, p.y]
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Convex hull in counter-clockwise order without collinear points.
fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        / 2.0
}

fn diameter(points: &[Point]) -> f64 {
    let mut d: f64 = 0.0;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            d = d.max(dist(*a, *b));
        }
    }
    d
}

/// Whether `p` lies in the CCW convex polygon, allowing `slack` outside.
fn inside_convex(poly: &[Point], p: Point, slack: f64) -> bool {
    let n = poly.len();
    (0..n).all(|i| {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        cross(a, b, p) >= -slack * dist(a, b)
    })
}

fn circumcircle(a: Point, b: Point, c: Point) -> Option<(Point, f64)> {
    let (bx, by) = (b[0] - a[0], b[1] - a[1]);
    let (cx, cy) = (c[0] - a[0], c[1] - a[1]);
    let d = 2.0 * (bx * cy - by * cx);
    if d.abs() < 1e-300 {
        return None;
    }
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;
    let ux = (cy * b2 - by * c2) / d;
    let uy = (bx * c2 - cx * b2) / d;
    Some(([a[0] + ux, a[1] + uy], ux.hypot(uy)))
}

/// Boundary of `hull ⊕ disk(extension)`, sampled with spacing at most
/// `spacing`. Straight stretches are bowed slightly outwards so that no
/// three boundary points are collinear; collinear points on the hull of a
/// Delaunay triangulation produce needle triangles under rounding.
fn outer_boundary(hull: &[Point], extension: f64, spacing: f64) -> Vec<Point> {
    let n = hull.len();
    let mut pts = Vec::new();
    for i in 0..n {
        let prev = hull[(i + n - 1) % n];
        let cur = hull[i];
        let next = hull[(i + 1) % n];
        let normal = |a: Point, b: Point| {
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            let l = dx.hypot(dy);
            [dy / l, -dx / l]
        };
        let n_in = normal(prev, cur);
        let n_out = normal(cur, next);
        let a0 = n_in[1].atan2(n_in[0]);
        let mut a1 = n_out[1].atan2(n_out[0]);
        while a1 < a0 {
            a1 += std::f64::consts::TAU;
        }
        let steps = (((a1 - a0) * extension / spacing).ceil() as usize).max(1);
        for s in 0..=steps {
            let a = a0 + (a1 - a0) * s as f64 / steps as f64;
            pts.push([cur[0] + extension * a.cos(), cur[1] + extension * a.sin()]);
        }
        // Straight stretch from the end of this arc to the start of the next.
        let from = [cur[0] + extension * n_out[0], cur[1] + extension * n_out[1]];
        let to = [next[0] + extension * n_out[0], next[1] + extension * n_out[1]];
        let len = dist(from, to);
        let pieces = (len / spacing).ceil() as usize;
        let bulge = 0.02 * len.min(extension);
        for s in 1..pieces {
            let t = s as f64 / pieces as f64;
            let off = 4.0 * bulge * t * (1.0 - t);
            pts.push([
                from[0] + t * (to[0] - from[0]) + off * n_out[0],
                from[1] + t * (to[1] - from[1]) + off * n_out[1],
            ]);
        }
    }
    let mut out = convex_hull(&pts);
    // Drop points that are nearly coincident after the hull pass.
    let tol = 1e-6 * spacing;
    out.dedup_by(|a, b| dist(*a, *b) < tol);
    out
}

impl Mesh {
    /// Delaunay triangulation of the given points, without refinement.
    pub fn from_points(points: &[Point]) -> Result<Self> {
        let hull = convex_hull(points);
        if hull.len() < 3 {
            return Err(Error::CollinearInput);
        }
        let mut tri: DelaunayTriangulation<Point2<f64>> = DelaunayTriangulation::new();
        for p in points {
            insert(&mut tri, *p)?;
        }
        if tri.num_vertices() != points.len() {
            return Err(Error::InvalidParameters("duplicate points".into()));
        }
        let vertices: Vec<Point> = tri.vertices().map(|v| pos(v.position())).collect();
        let triangles = tri
            .inner_faces()
            .map(|f| f.vertices().map(|v| v.fix().index()))
            .collect();
        Self::from_parts(vertices, triangles)
    }

    /// Validates and normalises an explicit triangulation: triangles are
    /// oriented counter-clockwise, rotated to start at their smallest
    /// index and sorted.
    pub fn from_parts(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.is_empty() || triangles.is_empty() {
            return Err(Error::InvalidParameters("mesh needs vertices and triangles".into()));
        }
        let mut tris = Vec::with_capacity(triangles.len());
        for (t, &[i, j, k]) in triangles.iter().enumerate() {
            for v in [i, j, k] {
                if v >= vertices.len() {
                    return Err(Error::IndexOutOfRange {
                        index: v,
                        dim: vertices.len(),
                    });
                }
            }
            let area = cross(vertices[i], vertices[j], vertices[k]);
            let scale = dist(vertices[i], vertices[j])
                .max(dist(vertices[j], vertices[k]))
                .max(dist(vertices[k], vertices[i]));
            if !(area.abs() > 1e-12 * scale * scale) {
                return Err(Error::DegenerateTriangle(t));
            }
            let mut tri = if area > 0.0 { [i, j, k] } else { [i, k, j] };
            let first = (0..3).min_by_key(|&a| tri[a]).unwrap();
            tri.rotate_left(first);
            tris.push(tri);
        }
        tris.sort_unstable();
        let locator = Locator::new(&vertices, &tris);
        Ok(Self {
            vertices,
            triangles: tris,
            locator,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [i, j, k] = self.triangles[t];
        cross(self.vertices[i], self.vertices[j], self.vertices[k]) / 2.0
    }

    pub fn area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.triangle_area(t)).sum()
    }

    /// Longest edge of triangle `t`.
    pub fn longest_edge(&self, t: usize) -> f64 {
        let [i, j, k] = self.triangles[t].map(|v| self.vertices[v]);
        dist(i, j).max(dist(j, k)).max(dist(k, i))
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.triangles[t].map(|v| self.vertices[v]);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Containing triangle and barycentric weights of `p`, if any.
    pub fn locate(&self, p: Point) -> Option<(usize, [f64; 3])> {
        let mut best: Option<(usize, [f64; 3])> = None;
        for &t in self.locator.candidates(p) {
            let w = self.barycentric(t, p);
            let worst = w.iter().cloned().fold(f64::INFINITY, f64::min);
            if worst >= -1e-12 && best.map_or(true, |(_, bw)| worst > bw.iter().cloned().fold(f64::INFINITY, f64::min)) {
                best = Some((t, w));
            }
        }
        best
    }

    fn barycentric(&self, t: usize, p: Point) -> [f64; 3] {
        let [a, b, c] = self.triangles[t].map(|v| self.vertices[v]);
        let area = cross(a, b, c);
        [cross(p, b, c) / area, cross(a, p, c) / area, cross(a, b, p) / area]
    }

    /// Piecewise-linear basis weights of each location.
    pub fn projector(&self, locations: &[Point]) -> Result<Projector> {
        let mut triplets = Vec::with_capacity(3 * locations.len());
        for (row, &p) in locations.iter().enumerate() {
            let (t, mut w) = self
                .locate(p)
                .ok_or(Error::PointOutsideMesh { x: p[0], y: p[1] })?;
            for wi in w.iter_mut() {
                if *wi < 1e-14 {
                    *wi = 0.0;
                }
            }
            let s: f64 = w.iter().sum();
            for (a, &v) in self.triangles[t].iter().enumerate() {
                if w[a] > 0.0 {
                    triplets.push((row, v, w[a] / s));
                }
            }
        }
        Ok(Projector {
            matrix: SparseMatrix::from_triplets(locations.len(), self.n_vertices(), triplets)?,
        })
    }

    /// Lumped mass and stiffness matrices of the piecewise-linear basis.
    pub fn fem_matrices(&self) -> Result<FemMatrices> {
        fem::assemble(self)
    }

    /// Plain-text form: `G T`, then `x y` per vertex, then `i j k` per
    /// triangle.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {}", self.n_vertices(), self.n_triangles());
        for v in &self.vertices {
            let _ = writeln!(s, "{:.16e} {:.16e}", v[0], v[1]);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::InvalidParameters(format!("mesh text: {m}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty"))?;
        let counts: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad("bad header")))
            .collect::<Result<_>>()?;
        let [g, t] = counts[..] else {
            return Err(bad("header must be `G T`"));
        };
        let mut vertices = Vec::with_capacity(g);
        for _ in 0..g {
            let l = lines.next().ok_or_else(|| bad("missing vertex line"))?;
            let v: Vec<f64> = l
                .split_whitespace()
                .map(|x| x.parse().map_err(|_| bad("bad coordinate")))
                .collect::<Result<_>>()?;
            let [x, y] = v[..] else {
                return Err(bad("vertex line must be `x y`"));
            };
            vertices.push([x, y]);
        }
        let mut triangles = Vec::with_capacity(t);
        for _ in 0..t {
            let l = lines.next().ok_or_else(|| bad("missing triangle line"))?;
            let v: Vec<usize> = l
                .split_whitespace()
                .map(|x| x.parse().map_err(|_| bad("bad index")))
                .collect::<Result<_>>()?;
            let [i, j, k] = v[..] else {
                return Err(bad("triangle line must be `i j k`"));
            };
            triangles.push([i, j, k]);
        }
        Self::from_parts(vertices, triangles)
    }
}

/// Sparse `n_locations × G` matrix of basis-function values.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    pub matrix: SparseMatrix,
}

impl Projector {
    /// Interpolates vertex values at the projected locations.
    pub fn apply(&self, vertex_values: &[f64]) -> Result<Vec<f64>> {
        self.matrix.matvec(vertex_values)
    }
}

/// Uniform bucket grid over triangle bounding boxes.
#[derive(Debug, Clone, PartialEq)]
struct Locator {
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl Locator {
    fn new(vertices: &[Point], triangles: &[[usize; 3]]) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for v in vertices {
            for a in 0..2 {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-300);
        let per_side = ((triangles.len() as f64).sqrt().ceil() as usize).clamp(1, 1024);
        let cell = span / per_side as f64 * (1.0 + 1e-9);
        let nx = (((hi[0] - lo[0]) / cell).floor() as usize + 1).max(1);
        let ny = (((hi[1] - lo[1]) / cell).floor() as usize + 1).max(1);
        let mut buckets = vec![Vec::new(); nx * ny];
        let idx = |x: f64, o: f64, n: usize| (((x - o) / cell).floor().max(0.0) as usize).min(n - 1);
        for (t, tri) in triangles.iter().enumerate() {
            let ps = tri.map(|v| vertices[v]);
            let (x0, x1) = (ps.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min), ps.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max));
            let (y0, y1) = (ps.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min), ps.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max));
            for bx in idx(x0, lo[0], nx)..=idx(x1, lo[0], nx) {
                for by in idx(y0, lo[1], ny)..=idx(y1, lo[1], ny) {
                    buckets[bx * ny + by].push(t);
                }
            }
        }
        Self {
            origin: lo,
            cell,
            nx,
            ny,
            buckets,
        }
    }

    fn candidates(&self, p: Point) -> &[usize] {
        let fx = (p[0] - self.origin[0]) / self.cell;
        let fy = (p[1] - self.origin[1]) / self.cell;
        // Allow points a hair outside the bounding box onto the edge bucket.
        let eps = 1e-9;
        if !(fx >= -eps && fy >= -eps && fx < self.nx as f64 + eps && fy < self.ny as f64 + eps) {
            return &[];
        }
        let bx = (fx.max(0.0) as usize).min(self.nx - 1);
        let by = (fy.max(0.0) as usize).min(self.ny - 1);
        &self.buckets[bx * self.ny + by]
    }
}
