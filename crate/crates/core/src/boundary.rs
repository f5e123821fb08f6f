//! Trusted-interior detection for scans with spiky edges.
//!
//! The edge of the scanned surface is traced, the edge points are folded
//! through a circle inversion about their centroid, a concave hull is taken
//! in folded space and its vertices are mapped back. Because the inversion
//! swaps near and far, the hull of the folded points becomes the innermost
//! envelope of the edge as seen from the centroid: a polygon lying inside the
//! scan. Cells outside that polygon, or within a margin of its edge, are then
//! masked.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;

use geo::concave_hull::ConcaveHullOptions;
use geo::{ConcaveHull, ConvexHull, MultiPoint, Point};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::surface::SurfaceMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum BoundaryError {
    #[error("surface has no present cells")]
    EmptySurface,
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
}

/// A grid cell as `(row, col)`.
pub type Cell = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    /// Column coordinate, pixels.
    pub x: f64,
    /// Row coordinate, pixels.
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_cell((row, col): Cell) -> Self {
        Self::new(col as f64, row as f64)
    }
}

/// Closed polygon in pixel coordinates (cell centers at integers).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPolygon {
    pub vertices: Vec<Point2>,
    pub fold_center: Point2,
    /// Radius `c` of the fold circle, pixels.
    pub fold_radius: f64,
}

const NEIGHBORS: [(isize, isize); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];

/// Present cells with at least one missing or out-of-grid 8-neighbor.
pub fn trace_boundary(surface: &SurfaceMatrix) -> Result<Vec<Cell>, BoundaryError> {
    if surface.present_count() == 0 {
        return Err(BoundaryError::EmptySurface);
    }
    Ok(surface
        .present()
        .filter(|&(i, j, _)| {
            NEIGHBORS
                .iter()
                .any(|&(di, dj)| surface.get_signed(i as isize + di, j as isize + dj).is_none())
        })
        .map(|(i, j, _)| (i, j))
        .collect())
}

/// Boundary cells that touch the outside of the scan: the grid border or a
/// missing region 4-connected to it. Rims of interior dropouts are excluded.
pub fn outer_boundary(surface: &SurfaceMatrix) -> Result<Vec<Cell>, BoundaryError> {
    let all = trace_boundary(surface)?;
    let (h, w) = (surface.rows(), surface.cols());
    let mut exterior = vec![false; h * w];
    let mut queue = VecDeque::new();
    for i in 0..h {
        for j in 0..w {
            let edge = i == 0 || j == 0 || i + 1 == h || j + 1 == w;
            if edge && !surface.is_present(i, j) {
                exterior[i * w + j] = true;
                queue.push_back((i, j));
            }
        }
    }
    while let Some((i, j)) = queue.pop_front() {
        for (di, dj) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
            let (ni, nj) = (i as isize + di, j as isize + dj);
            if ni < 0 || nj < 0 || ni as usize >= h || nj as usize >= w {
                continue;
            }
            let (ni, nj) = (ni as usize, nj as usize);
            if !exterior[ni * w + nj] && !surface.is_present(ni, nj) {
                exterior[ni * w + nj] = true;
                queue.push_back((ni, nj));
            }
        }
    }
    Ok(all
        .into_iter()
        .filter(|&(i, j)| {
            NEIGHBORS.iter().any(|&(di, dj)| {
                let (ni, nj) = (i as isize + di, j as isize + dj);
                ni < 0 || nj < 0 || ni as usize >= h || nj as usize >= w || exterior[ni as usize * w + nj as usize]
            })
        })
        .collect())
}

/// Circle inversion `ρ ↦ c²/ρ` about `center`. It is its own inverse.
pub fn fold(p: Point2, center: Point2, radius: f64) -> Point2 {
    let (dx, dy) = (p.x - center.x, p.y - center.y);
    let rho2 = dx * dx + dy * dy;
    let k = radius * radius / rho2;
    Point2::new(center.x + dx * k, center.y + dy * k)
}

fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Concave hull of `points` via fold, hull, unfold.
///
/// `concavity` and `length_threshold` are passed to the concave hull of the
/// folded points; the fold radius is `fold_radius_scale` times the largest
/// distance from the centroid.
pub fn concave_hull(
    points: &[Point2],
    concavity: f64,
    length_threshold: f64,
    fold_radius_scale: f64,
) -> Result<BoundaryPolygon, BoundaryError> {
    if points.len() < 3 {
        return Err(BoundaryError::DegenerateGeometry(format!("{} points", points.len())));
    }
    let n = points.len() as f64;
    let center = Point2::new(
        points.iter().map(|p| p.x).sum::<f64>() / n,
        points.iter().map(|p| p.y).sum::<f64>() / n,
    );
    let far = points
        .iter()
        .max_by(|a, b| {
            let da = (a.x - center.x).hypot(a.y - center.y);
            let db = (b.x - center.x).hypot(b.y - center.y);
            da.total_cmp(&db)
        })
        .copied()
        .unwrap();
    let max_dist = (far.x - center.x).hypot(far.y - center.y);
    if max_dist == 0.0 || points.iter().all(|p| cross(points[0], far, *p).abs() < 1e-9 * max_dist * max_dist) {
        return Err(BoundaryError::DegenerateGeometry("points are collinear".into()));
    }
    let radius = fold_radius_scale * max_dist;

    // Points at the fold center have no image; they cannot be hull vertices
    // of the unfolded envelope anyway.
    let mut originals: HashMap<(u64, u64), Point2> = HashMap::with_capacity(points.len());
    let mut folded = Vec::with_capacity(points.len());
    for p in points {
        if (p.x - center.x).hypot(p.y - center.y) < 1e-9 * max_dist {
            continue;
        }
        let f = fold(*p, center, radius);
        originals.insert((f.x.to_bits(), f.y.to_bits()), *p);
        folded.push(Point::new(f.x, f.y));
    }
    let cloud = MultiPoint::new(folded);
    let unfold = |ring: &geo::LineString<f64>| -> Vec<Point2> {
        let mut v: Vec<Point2> = ring
            .coords()
            .map(|c| {
                originals
                    .get(&(c.x.to_bits(), c.y.to_bits()))
                    .copied()
                    .unwrap_or_else(|| fold(Point2::new(c.x, c.y), center, radius))
            })
            .collect();
        if v.len() > 1 && v.first() == v.last() {
            v.pop();
        }
        v
    };
    let hull = cloud.concave_hull_with_options(ConcaveHullOptions {
        concavity,
        length_threshold,
    });
    let mut vertices = unfold(hull.exterior());
    if vertices.len() < 3 || !is_simple(&vertices) {
        // The unfolded concave hull can only self-intersect when the folded
        // hull is not star-shaped about the center; the convex hull always is.
        log::debug!("unfolded concave hull is not simple; using the folded convex hull");
        vertices = unfold(cloud.convex_hull().exterior());
    }
    if vertices.len() < 3 {
        return Err(BoundaryError::DegenerateGeometry("hull has fewer than 3 vertices".into()));
    }
    Ok(BoundaryPolygon {
        vertices,
        fold_center: center,
        fold_radius: radius,
    })
}

fn segments_intersect(p1: Point2, p2: Point2, q1: Point2, q2: Point2) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |a: Point2, b: Point2, p: Point2, d: f64| {
        d == 0.0 && p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
    };
    on(q1, q2, p1, d1) || on(q1, q2, p2, d2) || on(p1, p2, q1, d3) || on(p1, p2, q2, d4)
}

/// No two non-adjacent edges touch and no vertex repeats.
pub fn is_simple(vertices: &[Point2]) -> bool {
    let n = vertices.len();
    if n < 3 {
        return false;
    }
    for a in 0..n {
        let (p1, p2) = (vertices[a], vertices[(a + 1) % n]);
        if p1 == p2 {
            return false;
        }
        for b in a + 1..n {
            if b == a + 1 || (a == 0 && b == n - 1) {
                continue;
            }
            if segments_intersect(p1, p2, vertices[b], vertices[(b + 1) % n]) {
                return false;
            }
        }
    }
    true
}

impl BoundaryPolygon {
    /// Polygon from explicit vertices, folded about their centroid.
    pub fn from_vertices(vertices: Vec<Point2>) -> Result<Self, BoundaryError> {
        if vertices.len() < 3 {
            return Err(BoundaryError::DegenerateGeometry(format!("{} vertices", vertices.len())));
        }
        let n = vertices.len() as f64;
        let center = Point2::new(
            vertices.iter().map(|p| p.x).sum::<f64>() / n,
            vertices.iter().map(|p| p.y).sum::<f64>() / n,
        );
        let radius = vertices
            .iter()
            .map(|p| (p.x - center.x).hypot(p.y - center.y))
            .fold(0.0, f64::max);
        Ok(Self {
            vertices,
            fold_center: center,
            fold_radius: radius,
        })
    }

    /// Rectangle whose edges run along the outer cell edges of an `h × w` grid.
    pub fn full_grid(rows: usize, cols: usize) -> Self {
        let (x1, y1) = (cols as f64 - 0.5, rows as f64 - 0.5);
        Self::from_vertices(vec![
            Point2::new(-0.5, -0.5),
            Point2::new(x1, -0.5),
            Point2::new(x1, y1),
            Point2::new(-0.5, y1),
        ])
        .expect("four vertices")
    }

    fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |k| (self.vertices[k], self.vertices[(k + 1) % n]))
    }

    /// Even-odd point-in-polygon test.
    pub fn contains(&self, p: Point2) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Shoelace area.
    pub fn area(&self) -> f64 {
        0.5 * self.edges().map(|(a, b)| a.x * b.y - b.x * a.y).sum::<f64>().abs()
    }

    /// Smallest Euclidean distance from `p` to the polygon outline.
    pub fn distance_to_edge(&self, p: Point2) -> f64 {
        self.edges()
            .map(|(a, b)| {
                let (dx, dy) = (b.x - a.x, b.y - a.y);
                let len2 = dx * dx + dy * dy;
                let t = if len2 == 0.0 {
                    0.0
                } else {
                    (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0)
                };
                (a.x + t * dx - p.x).hypot(a.y + t * dy - p.y)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Cells strictly inside the polygon and farther than `margin` (Chebyshev)
    /// from its outline.
    pub fn interior_region(&self, rows: usize, cols: usize, margin: usize) -> Region {
        let mut inside = vec![false; rows * cols];
        let mut xs = Vec::new();
        for i in 0..rows {
            let y = i as f64;
            xs.clear();
            for (a, b) in self.edges() {
                if (a.y > y) != (b.y > y) {
                    xs.push(a.x + (y - a.y) / (b.y - a.y) * (b.x - a.x));
                }
            }
            xs.sort_by(f64::total_cmp);
            for pair in xs.chunks_exact(2) {
                let lo = pair[0].ceil().max(0.0);
                let hi = pair[1].min(cols as f64 - 1.0);
                if lo > hi {
                    continue;
                }
                for j in lo as usize..=hi.floor() as usize {
                    // strict: x in (x0, x1)
                    if (j as f64) > pair[0] && (j as f64) < pair[1] {
                        inside[i * cols + j] = true;
                    }
                }
            }
        }
        let m = margin as f64;
        let eps = 1e-9;
        for (a, b) in self.edges() {
            let row_lo = (a.y.min(b.y) - m - eps).ceil().max(0.0);
            let row_hi = (a.y.max(b.y) + m + eps).floor().min(rows as f64 - 1.0);
            if row_lo > row_hi {
                continue;
            }
            for i in row_lo as usize..=row_hi as usize {
                let y = i as f64;
                let dy = b.y - a.y;
                let (t0, t1) = if dy.abs() < 1e-15 {
                    if (a.y - y).abs() > m + eps {
                        continue;
                    }
                    (0.0, 1.0)
                } else {
                    let ta = (y - m - eps - a.y) / dy;
                    let tb = (y + m + eps - a.y) / dy;
                    (ta.min(tb).max(0.0), ta.max(tb).min(1.0))
                };
                if t0 > t1 {
                    continue;
                }
                let xa = a.x + t0 * (b.x - a.x);
                let xb = a.x + t1 * (b.x - a.x);
                let lo = (xa.min(xb) - m - eps).ceil().max(0.0);
                let hi = (xa.max(xb) + m + eps).floor().min(cols as f64 - 1.0);
                if lo > hi {
                    continue;
                }
                for j in lo as usize..=hi as usize {
                    inside[i * cols + j] = false;
                }
            }
        }
        Region { rows, cols, cells: inside }
    }

    /// Vertex list as CSV with header `x,y`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y\n");
        for v in &self.vertices {
            let _ = writeln!(out, "{},{}", v.x, v.y);
        }
        out
    }
}

/// Boolean cell mask over a grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    rows: usize,
    cols: usize,
    cells: Vec<bool>,
}

impl Region {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let cells = (0..rows * cols).map(|k| f(k / cols, k % cols)).collect();
        Self { rows, cols, cells }
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            cells: vec![true; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.cells[row * self.cols + col] = value;
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    /// Binary PGM (P5) rendering, 255 inside.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.cols, self.rows).into_bytes();
        out.extend(self.cells.iter().map(|&c| if c { 255u8 } else { 0 }));
        out
    }
}

/// Masks every cell outside `poly` or within `margin_px` (Chebyshev) of its
/// outline. Present cells elsewhere are unchanged.
pub fn erode_to_interior(surface: &SurfaceMatrix, poly: &BoundaryPolygon, margin_px: usize) -> SurfaceMatrix {
    let region = poly.interior_region(surface.rows(), surface.cols(), margin_px);
    restrict_to(surface, &region)
}

/// Copy of `surface` with cells outside `region` set missing.
pub fn restrict_to(surface: &SurfaceMatrix, region: &Region) -> SurfaceMatrix {
    surface.map_present(|i, j, z| region.contains(i, j).then_some(z))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(h: usize, w: usize) -> SurfaceMatrix {
        SurfaceMatrix::from_fn(h, w, 1.0, 1.0, |i, j| Some((i * w + j) as f64)).unwrap()
    }

    fn disk(h: usize, w: usize, r: f64) -> SurfaceMatrix {
        let (ci, cj) = ((h - 1) as f64 / 2.0, (w - 1) as f64 / 2.0);
        SurfaceMatrix::from_fn(h, w, 1.0, 1.0, |i, j| {
            ((i as f64 - ci).hypot(j as f64 - cj) <= r).then_some(1.0)
        })
        .unwrap()
    }

    #[test]
    fn dense_grid_boundary_is_its_border() {
        let b = trace_boundary(&dense(3, 3)).unwrap();
        assert_eq!(b.len(), 8);
        assert!(!b.contains(&(1, 1)));
    }

    #[test]
    fn hole_makes_every_remaining_cell_boundary() {
        let mut s = dense(3, 3);
        s.set(1, 1, None);
        assert_eq!(trace_boundary(&s).unwrap().len(), 8);
        // the hole rim is not part of the outer boundary, but here all 8 cells
        // also touch the grid border
        assert_eq!(outer_boundary(&s).unwrap().len(), 8);
    }

    #[test]
    fn empty_surface_errors() {
        let s = SurfaceMatrix::missing(4, 4, 1.0, 1.0).unwrap();
        assert_eq!(trace_boundary(&s), Err(BoundaryError::EmptySurface));
    }

    #[test]
    fn dome_boundary_is_the_rim() {
        let s = disk(41, 41, 15.0);
        let got = trace_boundary(&s).unwrap();
        // brute force over all cells, by definition
        let mut expected = Vec::new();
        for i in 0..41 {
            for j in 0..41 {
                if !s.is_present(i, j) {
                    continue;
                }
                let mut rim = false;
                for di in -1..=1 {
                    for dj in -1..=1 {
                        rim |= s.get_signed(i as isize + di, j as isize + dj).is_none();
                    }
                }
                if rim {
                    expected.push((i, j));
                }
            }
        }
        assert_eq!(got, expected);
        for &(i, j) in &got {
            let r = (i as f64 - 20.0).hypot(j as f64 - 20.0);
            assert!(r > 13.5 && r <= 15.0, "{i},{j} r={r}");
        }
    }

    #[test]
    fn outer_boundary_skips_interior_holes() {
        let mut s = disk(41, 41, 15.0);
        for i in 18..=22 {
            for j in 18..=22 {
                s.set(i, j, None);
            }
        }
        let all = trace_boundary(&s).unwrap();
        let outer = outer_boundary(&s).unwrap();
        assert!(all.len() > outer.len());
        assert!(outer.iter().all(|&(i, j)| (i as f64 - 20.0).hypot(j as f64 - 20.0) > 13.5));
    }

    #[test]
    fn fold_is_an_involution() {
        let c = Point2::new(3.0, -2.0);
        for p in [Point2::new(10.0, 4.0), Point2::new(-1.5, 0.25), Point2::new(3.0, 7.0)] {
            let back = fold(fold(p, c, 12.0), c, 12.0);
            assert!((back.x - p.x).abs() < 1e-12 && (back.y - p.y).abs() < 1e-12);
        }
        // points on the circle are fixed
        let on = Point2::new(3.0 + 12.0, -2.0);
        assert_eq!(fold(on, c, 12.0), on);
    }

    fn as_set(v: &[Point2]) -> Vec<(i64, i64)> {
        let mut s: Vec<_> = v.iter().map(|p| (p.x.round() as i64, p.y.round() as i64)).collect();
        s.sort();
        s
    }

    #[test]
    fn square_corners_are_a_fixed_point() {
        let pts = [
            Point2::new(0.0, 0.0),
            Point2::new(10.0, 0.0),
            Point2::new(10.0, 10.0),
            Point2::new(0.0, 10.0),
        ];
        let poly = concave_hull(&pts, 2.0, 0.0, 1.05).unwrap();
        assert_eq!(as_set(&poly.vertices), as_set(&pts));
        assert!((poly.area() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn triangle_in_triangle_out() {
        let pts = [Point2::new(0.0, 0.0), Point2::new(8.0, 1.0), Point2::new(3.0, 6.0)];
        let poly = concave_hull(&pts, 2.0, 0.0, 1.05).unwrap();
        assert_eq!(as_set(&poly.vertices), as_set(&pts));
    }

    #[test]
    fn degenerate_inputs() {
        let line: Vec<_> = (0..5).map(|k| Point2::new(k as f64, 2.0 * k as f64)).collect();
        assert!(matches!(concave_hull(&line, 2.0, 0.0, 1.05), Err(BoundaryError::DegenerateGeometry(_))));
        assert!(matches!(
            concave_hull(&line[..2], 2.0, 0.0, 1.05),
            Err(BoundaryError::DegenerateGeometry(_))
        ));
    }

    fn convex_hull_area(points: &[Point2]) -> f64 {
        // Andrew's monotone chain
        let mut p: Vec<Point2> = points.to_vec();
        p.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        let mut hull: Vec<Point2> = Vec::new();
        for pass in 0..2 {
            let start = hull.len();
            let iter: Box<dyn Iterator<Item = &Point2>> = if pass == 0 {
                Box::new(p.iter())
            } else {
                Box::new(p.iter().rev())
            };
            for &q in iter {
                while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                    hull.pop();
                }
                hull.push(q);
            }
            hull.pop();
        }
        BoundaryPolygon::from_vertices(hull).unwrap().area()
    }

    /// Disk with a 90° wedge cut out, boundary cells only.
    fn pacman() -> (SurfaceMatrix, Vec<Point2>) {
        let s = SurfaceMatrix::from_fn(81, 81, 1.0, 1.0, |i, j| {
            let (dx, dy) = (j as f64 - 40.0, i as f64 - 40.0);
            let inside = dx.hypot(dy) <= 35.0;
            let mouth = dx > 0.0 && dy.abs() < dx;
            (inside && !mouth).then_some(0.0)
        })
        .unwrap();
        let pts = outer_boundary(&s).unwrap().into_iter().map(Point2::from_cell).collect();
        (s, pts)
    }

    #[test]
    fn c_shape_hull_follows_the_concavity() {
        let (_, pts) = pacman();
        let poly = concave_hull(&pts, 2.0, 0.0, 1.05).unwrap();
        assert!(is_simple(&poly.vertices));
        let convex = convex_hull_area(&pts);
        let area = poly.area();
        assert!(area < 0.9 * convex, "hull area {area} vs convex {convex}");
        // three quarters of a radius-35 disk
        let expected = 0.75 * std::f64::consts::PI * 35.0 * 35.0;
        assert!((area - expected).abs() < 0.1 * expected, "{area} vs {expected}");
        let near = pts
            .iter()
            .filter(|p| poly.contains(**p) || poly.distance_to_edge(**p) <= 1.5)
            .count();
        assert!(near as f64 >= 0.95 * pts.len() as f64, "{near}/{}", pts.len());
    }

    #[test]
    fn hull_of_dome_rim_lies_inside_the_scan() {
        let s = disk(61, 81, 27.0);
        let pts: Vec<_> = outer_boundary(&s).unwrap().into_iter().map(Point2::from_cell).collect();
        let poly = concave_hull(&pts, 2.0, 0.0, 1.05).unwrap();
        assert!(is_simple(&poly.vertices));
        for v in &poly.vertices {
            assert!(v.x >= -0.5 && v.x <= 80.5 && v.y >= -0.5 && v.y <= 60.5);
        }
        let region = poly.interior_region(61, 81, 0);
        for i in 0..61 {
            for j in 0..81 {
                if region.contains(i, j) {
                    assert!(s.is_present(i, j), "{i},{j} inside polygon but outside the scan");
                }
            }
        }
        assert!(region.count() as f64 > 0.9 * s.present_count() as f64);
    }

    #[test]
    fn full_rectangle_with_zero_margin_is_identity() {
        let s = dense(10, 10);
        assert_eq!(erode_to_interior(&s, &BoundaryPolygon::full_grid(10, 10), 0), s);
    }

    #[test]
    fn margin_two_keeps_inner_six_by_six() {
        let s = dense(10, 10);
        let out = erode_to_interior(&s, &BoundaryPolygon::full_grid(10, 10), 2);
        for i in 0..10 {
            for j in 0..10 {
                let keep = (2..8).contains(&i) && (2..8).contains(&j);
                assert_eq!(out.is_present(i, j), keep, "{i},{j}");
                if keep {
                    assert_eq!(out.get(i, j), s.get(i, j));
                }
            }
        }
    }

    fn winding_number(poly: &BoundaryPolygon, p: Point2) -> i32 {
        let mut wn = 0;
        for (a, b) in poly.edges() {
            if a.y <= p.y {
                if b.y > p.y && cross(a, b, p) > 0.0 {
                    wn += 1;
                }
            } else if b.y <= p.y && cross(a, b, p) < 0.0 {
                wn -= 1;
            }
        }
        wn
    }

    #[test]
    fn point_in_polygon_agrees_with_winding_number() {
        use rand::{Rng, SeedableRng};
        let (_, pts) = pacman();
        let polys = [
            concave_hull(&pts, 2.0, 0.0, 1.05).unwrap(),
            BoundaryPolygon::from_vertices(vec![
                Point2::new(0.0, 0.0),
                Point2::new(20.0, 0.0),
                Point2::new(20.0, 20.0),
                Point2::new(10.0, 5.0),
                Point2::new(0.0, 20.0),
            ])
            .unwrap(),
        ];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for poly in &polys {
            for _ in 0..10_000 {
                let p = Point2::new(rng.gen_range(-5.0..85.0), rng.gen_range(-5.0..85.0));
                if poly.distance_to_edge(p) < 1e-9 {
                    continue;
                }
                assert_eq!(poly.contains(p), winding_number(poly, p) != 0, "{p:?}");
            }
        }
    }

    #[test]
    fn erosion_matches_brute_force_chebyshev_distance() {
        let (s, pts) = pacman();
        let poly = concave_hull(&pts, 2.0, 0.0, 1.05).unwrap();
        for margin in [0usize, 1, 3, 6] {
            let region = poly.interior_region(s.rows(), s.cols(), margin);
            for i in 0..s.rows() {
                for j in 0..s.cols() {
                    let c = Point2::new(j as f64, i as f64);
                    // Chebyshev distance to a segment: smallest r whose square
                    // around c touches it; probe along the segment densely
                    let cheb = poly
                        .edges()
                        .map(|(a, b)| {
                            (0..=400)
                                .map(|k| {
                                    let t = k as f64 / 400.0;
                                    let q = Point2::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
                                    (q.x - c.x).abs().max((q.y - c.y).abs())
                                })
                                .fold(f64::INFINITY, f64::min)
                        })
                        .fold(f64::INFINITY, f64::min);
                    if (cheb - margin as f64).abs() < 0.05 {
                        continue; // within the probe resolution
                    }
                    let expected = poly.contains(c) && cheb > margin as f64;
                    assert_eq!(region.contains(i, j), expected, "margin {margin} cell {i},{j} cheb {cheb}");
                }
            }
        }
    }

    #[test]
    fn erosion_is_monotone_and_idempotent() {
        let (s, pts) = pacman();
        let poly = concave_hull(&pts, 2.0, 0.0, 1.05).unwrap();
        let mut prev = erode_to_interior(&s, &poly, 0);
        for m in 1..8 {
            let cur = erode_to_interior(&s, &poly, m);
            for k in 0..cur.len() {
                assert!(!(cur.cells()[k].is_some() && prev.cells()[k].is_none()));
            }
            assert_eq!(erode_to_interior(&cur, &poly, m), cur);
            prev = cur;
        }
    }

    #[test]
    fn pgm_header() {
        let r = Region::full(2, 3);
        let pgm = r.to_pgm();
        assert!(pgm.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(pgm.len(), 11 + 6);
    }
}
