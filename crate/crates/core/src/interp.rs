//! Scattered-data interpolation on the electrode plane.
//!
//! Pipeline: Delaunay triangulation of the projected electrodes, per-vertex
//! gradient estimation by weighted least squares, then a piecewise-cubic
//! C1 surface on the Clough-Tocher split of each triangle. Evaluation
//! outside the electrode convex hull returns `None`; the imaging layer
//! turns that into the zero mask.
//!
//! The cubic element: each triangle is split at its centroid into three
//! mini-triangles, each carrying a cubic Bezier patch. Corner values and
//! gradients fix the corner-adjacent control points; requiring the
//! derivative normal to each outer edge to vary linearly along it fixes
//! the mini-patch interior points; C1 continuity across the internal
//! edges fixes the rest. With exact corner values and gradients the
//! surface reproduces quadratic fields exactly, which the tests exploit
//! as an oracle.

use crate::error::{Error, Result};

/// Triangulation of a planar point set.
#[derive(Debug, Clone)]
pub struct Triangulation {
    pub points: Vec<[f64; 2]>,
    /// Vertex index triples, counter-clockwise.
    pub triangles: Vec<[usize; 3]>,
}

fn orient2d(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Strictly-inside-circumcircle predicate for a CCW triangle (a, b, c).
fn in_circumcircle(a: [f64; 2], b: [f64; 2], c: [f64; 2], p: [f64; 2]) -> bool {
    let (ax, ay) = (a[0] - p[0], a[1] - p[1]);
    let (bx, by) = (b[0] - p[0], b[1] - p[1]);
    let (cx, cy) = (c[0] - p[0], c[1] - p[1]);
    let det = (ax * ax + ay * ay) * (bx * cy - cx * by)
        - (bx * bx + by * by) * (ax * cy - cx * ay)
        + (cx * cx + cy * cy) * (ax * by - bx * ay);
    det > 0.0
}

impl Triangulation {
    /// Incremental Bowyer-Watson construction.
    ///
    /// Predicates run on a deterministically micro-jittered copy of the
    /// points (1e-7 of the bounding-box span) so exactly cocircular
    /// configurations, which a symmetric montage produces in abundance,
    /// cannot build an inconsistent cavity. The jitter is keyed to the
    /// point coordinates, not the insertion index, so reordering the
    /// input produces the same triangulation up to relabeling. It is far
    /// below the pixel scale, so which diagonal a cocircular quad
    /// receives has no visible effect on the interpolant.
    pub fn delaunay(points: &[[f64; 2]]) -> Result<Self> {
        let n = points.len();
        if n < 3 {
            return Err(Error::config("triangulation needs at least 3 points"));
        }
        let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in points {
            min_x = min_x.min(p[0]);
            max_x = max_x.max(p[0]);
            min_y = min_y.min(p[1]);
            max_y = max_y.max(p[1]);
        }
        let span = (max_x - min_x).max(max_y - min_y);
        if span <= 0.0 {
            return Err(Error::config("triangulation points are coincident"));
        }
        if Self::collinear(points, span) {
            return Err(Error::config("triangulation points are collinear"));
        }

        let mut work: Vec<[f64; 2]> = points
            .iter()
            .map(|p| {
                let mut h = p[0].to_bits() ^ p[1].to_bits().rotate_left(32);
                h = h.wrapping_mul(0x9E3779B97F4A7C15);
                h ^= h >> 29;
                h = h.wrapping_mul(0xBF58476D1CE4E5B9);
                let jx = ((h >> 16) & 0xFFFF) as f64 / 65535.0 - 0.5;
                let jy = ((h >> 32) & 0xFFFF) as f64 / 65535.0 - 0.5;
                [p[0] + jx * 1e-7 * span, p[1] + jy * 1e-7 * span]
            })
            .collect();
        // Super-triangle comfortably enclosing everything.
        let cx = (min_x + max_x) / 2.0;
        let cy = (min_y + max_y) / 2.0;
        work.push([cx - 30.0 * span, cy - 10.0 * span]);
        work.push([cx + 30.0 * span, cy - 10.0 * span]);
        work.push([cx, cy + 30.0 * span]);

        let mut tris: Vec<[usize; 3]> = vec![[n, n + 1, n + 2]];
        for v in 0..n {
            let p = work[v];
            let mut bad = Vec::new();
            for (ti, t) in tris.iter().enumerate() {
                if in_circumcircle(work[t[0]], work[t[1]], work[t[2]], p) {
                    bad.push(ti);
                }
            }
            // Cavity boundary: undirected edges used by exactly one bad triangle.
            let mut edges: Vec<(usize, usize, usize, usize)> = Vec::new();
            for &ti in &bad {
                let t = tris[ti];
                for k in 0..3 {
                    let (a, b) = (t[k], t[(k + 1) % 3]);
                    let key = (a.min(b), a.max(b));
                    if let Some(pos) = edges.iter().position(|e| (e.0, e.1) == key) {
                        edges.remove(pos);
                    } else {
                        edges.push((key.0, key.1, a, b));
                    }
                }
            }
            for &ti in bad.iter().rev() {
                tris.swap_remove(ti);
            }
            for &(_, _, a, b) in &edges {
                let tri = if orient2d(work[a], work[b], p) > 0.0 {
                    [a, b, v]
                } else {
                    [b, a, v]
                };
                tris.push(tri);
            }
        }
        tris.retain(|t| t.iter().all(|&i| i < n));
        tris.sort();
        if tris.is_empty() {
            return Err(Error::config("triangulation produced no triangles"));
        }
        Ok(Triangulation {
            points: points.to_vec(),
            triangles: tris,
        })
    }

    fn collinear(points: &[[f64; 2]], span: f64) -> bool {
        let a = points[0];
        let b = points
            .iter()
            .max_by(|p, q| {
                let dp = (p[0] - a[0]).powi(2) + (p[1] - a[1]).powi(2);
                let dq = (q[0] - a[0]).powi(2) + (q[1] - a[1]).powi(2);
                dp.total_cmp(&dq)
            })
            .copied()
            .unwrap();
        points
            .iter()
            .all(|&p| orient2d(a, b, p).abs() < 1e-9 * span * span)
    }

    /// Two-ring neighborhoods: direct neighbors plus their neighbors.
    /// Hull corners see their direct neighbors clustered in one direction,
    /// which makes a least-squares gradient fit ill-conditioned; the
    /// second ring restores angular coverage.
    pub fn neighbors_two_ring(&self) -> Vec<Vec<usize>> {
        let one = self.neighbors();
        let mut two = Vec::with_capacity(one.len());
        for (i, ring) in one.iter().enumerate() {
            let mut ext: Vec<usize> = ring.clone();
            for &j in ring {
                ext.extend(one[j].iter().copied());
            }
            ext.sort_unstable();
            ext.dedup();
            ext.retain(|&v| v != i);
            two.push(ext);
        }
        two
    }

    /// Adjacency lists (vertices sharing a triangle), sorted, deduplicated.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.points.len()];
        for t in &self.triangles {
            for k in 0..3 {
                adj[t[k]].push(t[(k + 1) % 3]);
                adj[t[k]].push(t[(k + 2) % 3]);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

}

/// Barycentric coordinates of `p` in triangle (a, b, c).
fn barycentric(a: [f64; 2], b: [f64; 2], c: [f64; 2], p: [f64; 2]) -> [f64; 3] {
    let total = orient2d(a, b, c);
    let l0 = orient2d(p, b, c) / total;
    let l1 = orient2d(a, p, c) / total;
    [l0, l1, 1.0 - l0 - l1]
}

/// Solves a small symmetric positive-definite-ish system in place by
/// Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    for col in (0..n).rev() {
        for k in col + 1..n {
            b[col] -= a[col][k] * b[k];
        }
        b[col] /= a[col][col];
    }
    Some(b)
}

/// Per-vertex gradient by weighted least squares over the two-ring
/// Delaunay neighborhood. Vertices with at least five neighbors get a
/// full quadratic fit (exact for quadratic fields); sparser vertices fall
/// back to a linear fit (exact for linear fields). A small ridge keeps
/// the normal equations solvable for near-degenerate neighborhoods.
/// Minimum-bending-energy gradients were tried and rejected: their
/// per-edge optimum runs 1.5 times the secant slope, which overshoots
/// spikes and drags nearest-pixel values off their electrode.
pub fn estimate_gradients(tri: &Triangulation, values: &[f64]) -> Result<Vec<[f64; 2]>> {
    if values.len() != tri.points.len() {
        return Err(Error::input(format!(
            "{} values for {} vertices",
            values.len(),
            tri.points.len()
        )));
    }
    let adj = tri.neighbors_two_ring();
    let mut grads = vec![[0.0; 2]; values.len()];
    for (i, nbrs) in adj.iter().enumerate() {
        let quadratic = nbrs.len() >= 5;
        let dim = if quadratic { 5 } else { 2 };
        let mut ata = vec![vec![0.0; dim]; dim];
        let mut atb = vec![0.0; dim];
        for &j in nbrs {
            let dx = tri.points[j][0] - tri.points[i][0];
            let dy = tri.points[j][1] - tri.points[i][1];
            let df = values[j] - values[i];
            let w = 1.0 / (dx * dx + dy * dy).max(1e-12);
            let row: Vec<f64> = if quadratic {
                vec![dx, dy, 0.5 * dx * dx, dx * dy, 0.5 * dy * dy]
            } else {
                vec![dx, dy]
            };
            for r in 0..dim {
                for c in 0..dim {
                    ata[r][c] += w * row[r] * row[c];
                }
                atb[r] += w * row[r] * df;
            }
        }
        let scale = (0..dim).map(|k| ata[k][k]).sum::<f64>() / dim as f64;
        for (k, row) in ata.iter_mut().enumerate() {
            row[k] += 1e-10 * scale.max(1e-12);
        }
        let sol = solve_dense(ata, atb)
            .ok_or_else(|| Error::config(format!("gradient fit singular at vertex {i}")))?;
        grads[i] = [sol[0], sol[1]];
    }
    Ok(grads)
}

/// Bezier control coefficients of one macro-triangle, all three
/// mini-patches included.
#[derive(Debug, Clone, Copy)]
struct Patch {
    f: [f64; 3],
    /// p[i][0] = point adjacent to corner i toward corner i+1;
    /// p[i][1] = toward corner i+2.
    p: [[f64; 2]; 3],
    /// Corner-toward-centroid ring.
    a: [f64; 3],
    /// Interior point of the mini-patch opposite corner k.
    s: [f64; 3],
    /// Internal-edge point adjacent to the centroid on edge corner i - centroid.
    r: [f64; 3],
    fc: f64,
}

/// C1 cubic interpolant over a triangulation with fixed values and
/// gradients.
#[derive(Debug, Clone)]
pub struct CloughTocher {
    tri: Triangulation,
    patches: Vec<Patch>,
}

impl CloughTocher {
    pub fn new(tri: &Triangulation, values: &[f64], grads: &[[f64; 2]]) -> Result<Self> {
        if values.len() != tri.points.len() || grads.len() != tri.points.len() {
            return Err(Error::input("values/gradients length mismatch"));
        }
        let mut patches = Vec::with_capacity(tri.triangles.len());
        for t in &tri.triangles {
            patches.push(build_patch(tri, *t, values, grads));
        }
        Ok(CloughTocher {
            tri: tri.clone(),
            patches,
        })
    }

    /// Value at `q`, or `None` outside the convex hull.
    pub fn eval(&self, q: [f64; 2]) -> Option<f64> {
        self.eval_within(q, 1e-9)
    }

    /// Value at `q`, accepting points up to `margin` length units outside
    /// the hull. An outside point is clamped to the nearest point of its
    /// nearest triangle before evaluation, so boundary values extend
    /// outward without polynomial extrapolation: a grid pixel that sits a
    /// rounding error outside the hull next to a boundary electrode
    /// receives (nearly) that electrode's value.
    pub fn eval_within(&self, q: [f64; 2], margin: f64) -> Option<f64> {
        let (ti, mut lambda, worst) = self.locate(q, margin)?;
        if worst < 0.0 {
            let t = self.tri.triangles[ti];
            let verts = [
                self.tri.points[t[0]],
                self.tri.points[t[1]],
                self.tri.points[t[2]],
            ];
            let clamped = project_to_triangle(verts, q);
            lambda = barycentric(verts[0], verts[1], verts[2], clamped);
            for l in &mut lambda {
                *l = l.clamp(0.0, 1.0);
            }
        }
        Some(eval_patch(&self.patches[ti], lambda))
    }

    fn locate(&self, q: [f64; 2], margin: f64) -> Option<(usize, [f64; 3], f64)> {
        // Score per triangle: the smallest barycentric coordinate times the
        // matching vertex-to-edge height (a signed interior margin) when the
        // point is inside, otherwise minus the Euclidean distance to the
        // triangle. Edge-line distances alone would overstate closeness in
        // the corner regions of obtuse triangles.
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for (ti, t) in self.tri.triangles.iter().enumerate() {
            let a = self.tri.points[t[0]];
            let b = self.tri.points[t[1]];
            let c = self.tri.points[t[2]];
            let l = barycentric(a, b, c, q);
            let score = if l.iter().all(|&lk| lk >= 0.0) {
                let area2 = orient2d(a, b, c).abs();
                let len = |p: [f64; 2], r: [f64; 2]| (r[0] - p[0]).hypot(r[1] - p[1]);
                let heights = [area2 / len(b, c), area2 / len(a, c), area2 / len(a, b)];
                (0..3).map(|k| l[k] * heights[k]).fold(f64::INFINITY, f64::min)
            } else {
                let near = project_to_triangle([a, b, c], q);
                -(near[0] - q[0]).hypot(near[1] - q[1])
            };
            if best.as_ref().map_or(true, |bst| score > bst.2) {
                best = Some((ti, l, score));
            }
        }
        let (ti, l, score) = best?;
        (score >= -margin).then_some((ti, l, score))
    }
}

fn build_patch(tri: &Triangulation, t: [usize; 3], values: &[f64], grads: &[[f64; 2]]) -> Patch {
    let v = t.map(|i| tri.points[i]);
    let f = t.map(|i| values[i]);
    let g = t.map(|i| grads[i]);
    let centroid = [
        (v[0][0] + v[1][0] + v[2][0]) / 3.0,
        (v[0][1] + v[1][1] + v[2][1]) / 3.0,
    ];

    // Corner-adjacent edge points: value plus a third of the directional
    // derivative along the edge.
    let mut p = [[0.0; 2]; 3];
    for i in 0..3 {
        for (slot, j) in [(0, (i + 1) % 3), (1, (i + 2) % 3)] {
            let e = [v[j][0] - v[i][0], v[j][1] - v[i][1]];
            p[i][slot] = f[i] + (g[i][0] * e[0] + g[i][1] * e[1]) / 3.0;
        }
    }
    // Ring points toward the centroid.
    let mut a = [0.0; 3];
    for i in 0..3 {
        a[i] = (f[i] + p[i][0] + p[i][1]) / 3.0;
    }
    // Mini-patch interior points: derivative normal to each outer edge
    // varies linearly along it. The middle Bernstein coefficient of the
    // cross-edge derivative must equal the mean of the end coefficients.
    let mut s = [0.0; 3];
    for k in 0..3 {
        let i = (k + 1) % 3;
        let j = (k + 2) % 3;
        let e = [v[j][0] - v[i][0], v[j][1] - v[i][1]];
        let normal = [-e[1], e[0]];
        let delta = directional_bary(v[i], v[j], centroid, normal);
        // j follows i cyclically, so the edge points are p[i][0] and p[j][1].
        let p_ij = p[i][0];
        let p_ji = p[j][1];
        let start = delta[0] * f[i] + delta[1] * p_ij + delta[2] * a[i];
        let end = delta[0] * p_ji + delta[1] * f[j] + delta[2] * a[j];
        s[k] = (0.5 * (start + end) - delta[0] * p_ij - delta[1] * p_ji) / delta[2];
    }
    // C1 across internal edges, then the shared centroid value.
    let mut r = [0.0; 3];
    for i in 0..3 {
        r[i] = (a[i] + s[(i + 1) % 3] + s[(i + 2) % 3]) / 3.0;
    }
    let fc = (r[0] + r[1] + r[2]) / 3.0;
    Patch { f, p, a, s, r, fc }
}

/// Barycentric direction coordinates of vector `d` with respect to
/// triangle (a, b, c): the unique (du, dv, dw) with du+dv+dw = 0 and
/// du*a + dv*b + dw*c = d.
fn directional_bary(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> [f64; 3] {
    let l = barycentric(a, b, c, [c[0] + d[0], c[1] + d[1]]);
    [l[0], l[1], l[2] - 1.0]
}

/// Nearest point of a triangle to `q`: the best of the three edge-segment
/// projections (exact for points outside the triangle).
fn project_to_triangle(verts: [[f64; 2]; 3], q: [f64; 2]) -> [f64; 2] {
    let mut best = verts[0];
    let mut best_d = f64::INFINITY;
    for i in 0..3 {
        let a = verts[i];
        let b = verts[(i + 1) % 3];
        let ab = [b[0] - a[0], b[1] - a[1]];
        let t = ((q[0] - a[0]) * ab[0] + (q[1] - a[1]) * ab[1])
            / (ab[0] * ab[0] + ab[1] * ab[1]).max(1e-300);
        let t = t.clamp(0.0, 1.0);
        let p = [a[0] + t * ab[0], a[1] + t * ab[1]];
        let d = (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
        if d < best_d {
            best_d = d;
            best = p;
        }
    }
    best
}

fn eval_patch(patch: &Patch, lambda: [f64; 3]) -> f64 {
    // Mini-patch opposite the smallest barycentric coordinate contains
    // the point.
    let k = (0..3)
        .min_by(|&x, &y| lambda[x].total_cmp(&lambda[y]))
        .unwrap();
    let i = (k + 1) % 3;
    let j = (k + 2) % 3;
    // Mini barycentric coordinates in (corner i, corner j, centroid).
    let u = lambda[i] - lambda[k];
    let v = lambda[j] - lambda[k];
    let w = 3.0 * lambda[k];

    let p_ij = patch.p[i][0];
    let p_ji = patch.p[j][1];
    let (b300, b030, b003) = (patch.f[i], patch.f[j], patch.fc);
    let (b210, b120) = (p_ij, p_ji);
    let (b201, b021) = (patch.a[i], patch.a[j]);
    let (b102, b012) = (patch.r[i], patch.r[j]);
    let b111 = patch.s[k];

    b300 * u * u * u
        + b030 * v * v * v
        + b003 * w * w * w
        + 3.0 * b210 * u * u * v
        + 3.0 * b120 * u * v * v
        + 3.0 * b201 * u * u * w
        + 3.0 * b021 * v * v * w
        + 3.0 * b102 * u * w * w
        + 3.0 * b012 * v * w * w
        + 6.0 * b111 * u * v * w
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn scattered(seed: u64, n: usize) -> Vec<[f64; 2]> {
        let mut r = crate::rng::seeded(seed);
        (0..n)
            .map(|_| [r.gen_range(0.0..10.0), r.gen_range(0.0..10.0)])
            .collect()
    }

    fn grid_queries(points: &[[f64; 2]], m: usize) -> Vec<[f64; 2]> {
        // Queries strictly inside the point cloud's bounding box core.
        let xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
        let ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
        let lo_x = xs.iter().copied().fold(f64::INFINITY, f64::min) + 2.0;
        let hi_x = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max) - 2.0;
        let lo_y = ys.iter().copied().fold(f64::INFINITY, f64::min) + 2.0;
        let hi_y = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max) - 2.0;
        let mut out = Vec::new();
        for i in 0..m {
            for j in 0..m {
                out.push([
                    lo_x + (hi_x - lo_x) * i as f64 / (m - 1) as f64,
                    lo_y + (hi_y - lo_y) * j as f64 / (m - 1) as f64,
                ]);
            }
        }
        out
    }

    #[test]
    fn delaunay_rejects_degenerate_inputs() {
        assert!(Triangulation::delaunay(&[[0.0, 0.0], [1.0, 1.0]]).is_err());
        let line: Vec<[f64; 2]> = (0..8).map(|i| [i as f64, 2.0 * i as f64]).collect();
        assert!(Triangulation::delaunay(&line).is_err());
        let stacked = vec![[1.0, 1.0]; 5];
        assert!(Triangulation::delaunay(&stacked).is_err());
    }

    #[test]
    fn delaunay_covers_and_orients() {
        let pts = scattered(11, 40);
        let tri = Triangulation::delaunay(&pts).unwrap();
        for t in &tri.triangles {
            assert!(orient2d(pts[t[0]], pts[t[1]], pts[t[2]]) > 0.0, "CW triangle");
        }
        // Euler check for a triangulated convex region: every vertex used.
        let mut used = vec![false; pts.len()];
        for t in &tri.triangles {
            for &v in t {
                used[v] = true;
            }
        }
        assert!(used.iter().all(|&u| u));
    }

    #[test]
    fn delaunay_empty_circumcircle_up_to_jitter() {
        let pts = scattered(5, 25);
        let tri = Triangulation::delaunay(&pts).unwrap();
        for t in &tri.triangles {
            for (vi, p) in pts.iter().enumerate() {
                if t.contains(&vi) {
                    continue;
                }
                // Require a clear margin before calling it a violation, so
                // the deterministic construction jitter is absorbed.
                let a = pts[t[0]];
                let b = pts[t[1]];
                let c = pts[t[2]];
                let (ax, ay) = (a[0] - p[0], a[1] - p[1]);
                let (bx, by) = (b[0] - p[0], b[1] - p[1]);
                let (cx, cy) = (c[0] - p[0], c[1] - p[1]);
                let det = (ax * ax + ay * ay) * (bx * cy - cx * by)
                    - (bx * bx + by * by) * (ax * cy - cx * ay)
                    + (cx * cx + cy * cy) * (ax * by - bx * ay);
                assert!(det <= 1e-4, "point {vi} inside circumcircle of {t:?}");
            }
        }
    }

    #[test]
    fn montage_triangulates_despite_cocircular_rings() {
        let m = crate::montage::MontageGeometry::standard_32().unwrap();
        let pts: Vec<[f64; 2]> = (0..m.n_electrodes())
            .map(|i| [m.positions_2d[[i, 1]], m.positions_2d[[i, 0]]])
            .collect();
        let tri = Triangulation::delaunay(&pts).unwrap();
        assert!(tri.triangles.len() >= 32);
    }

    #[test]
    fn constant_field_reproduced_exactly() {
        let pts = scattered(3, 30);
        let tri = Triangulation::delaunay(&pts).unwrap();
        let values = vec![4.5; pts.len()];
        let grads = estimate_gradients(&tri, &values).unwrap();
        let ct = CloughTocher::new(&tri, &values, &grads).unwrap();
        for q in grid_queries(&pts, 12) {
            if let Some(v) = ct.eval(q) {
                assert!((v - 4.5).abs() < 1e-9, "constant drifted to {v} at {q:?}");
            }
        }
    }

    #[test]
    fn linear_field_reproduced_with_estimated_gradients() {
        let f = |p: [f64; 2]| 0.7 * p[0] - 1.3 * p[1] + 2.0;
        let pts = scattered(17, 30);
        let tri = Triangulation::delaunay(&pts).unwrap();
        let values: Vec<f64> = pts.iter().map(|&p| f(p)).collect();
        let grads = estimate_gradients(&tri, &values).unwrap();
        for g in &grads {
            assert!((g[0] - 0.7).abs() < 1e-6, "gradient x {}", g[0]);
            assert!((g[1] + 1.3).abs() < 1e-6, "gradient y {}", g[1]);
        }
        let ct = CloughTocher::new(&tri, &values, &grads).unwrap();
        for q in grid_queries(&pts, 12) {
            if let Some(v) = ct.eval(q) {
                assert!((v - f(q)).abs() < 1e-6, "linear field broke at {q:?}");
            }
        }
    }

    #[test]
    fn quadratic_field_reproduced_with_exact_gradients() {
        let f = |p: [f64; 2]| 0.5 * p[0] * p[0] - 0.8 * p[0] * p[1] + 0.3 * p[1] * p[1]
            + 2.0 * p[0] - p[1] + 1.0;
        let df = |p: [f64; 2]| [p[0] - 0.8 * p[1] + 2.0, -0.8 * p[0] + 0.6 * p[1] - 1.0];
        let pts = scattered(23, 26);
        let tri = Triangulation::delaunay(&pts).unwrap();
        let values: Vec<f64> = pts.iter().map(|&p| f(p)).collect();
        let grads: Vec<[f64; 2]> = pts.iter().map(|&p| df(p)).collect();
        let ct = CloughTocher::new(&tri, &values, &grads).unwrap();
        for q in grid_queries(&pts, 15) {
            if let Some(v) = ct.eval(q) {
                let expect = f(q);
                assert!(
                    (v - expect).abs() < 1e-9 * expect.abs().max(1.0),
                    "quadratic broke at {q:?}: {v} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn evaluation_outside_hull_is_none() {
        let pts = scattered(9, 20);
        let tri = Triangulation::delaunay(&pts).unwrap();
        let values = vec![1.0; pts.len()];
        let grads = estimate_gradients(&tri, &values).unwrap();
        let ct = CloughTocher::new(&tri, &values, &grads).unwrap();
        assert!(ct.eval([-100.0, -100.0]).is_none());
        assert!(ct.eval([1e6, 0.0]).is_none());
    }

    #[test]
    fn surface_is_continuous_across_edges() {
        // Sample along a dense line crossing many triangle boundaries and
        // bound the jump between adjacent samples.
        let pts = scattered(31, 24);
        let tri = Triangulation::delaunay(&pts).unwrap();
        let mut r = crate::rng::seeded(99);
        let values: Vec<f64> = (0..pts.len()).map(|_| r.gen_range(-1.0..1.0)).collect();
        let grads = estimate_gradients(&tri, &values).unwrap();
        let ct = CloughTocher::new(&tri, &values, &grads).unwrap();
        let mut prev: Option<f64> = None;
        let steps = 4000;
        for k in 0..=steps {
            let t = k as f64 / steps as f64;
            let q = [2.0 + 6.0 * t, 2.5 + 5.0 * t];
            match (prev, ct.eval(q)) {
                (Some(a), Some(b)) => {
                    assert!((a - b).abs() < 2e-2, "jump {} at {q:?}", (a - b).abs());
                    prev = Some(b);
                }
                (_, cur) => prev = cur,
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn interpolation_is_linear_in_values(seed in 0u64..500, scale in 0.1f64..3.0) {
            let pts = scattered(seed, 16);
            let tri = Triangulation::delaunay(&pts).unwrap();
            let mut r = crate::rng::seeded(seed ^ 0xABCD);
            let v1: Vec<f64> = (0..16).map(|_| r.gen_range(-1.0..1.0)).collect();
            let v2: Vec<f64> = (0..16).map(|_| r.gen_range(-1.0..1.0)).collect();
            let mix: Vec<f64> = v1.iter().zip(&v2).map(|(a, b)| scale * a + b).collect();
            let build = |vals: &[f64]| {
                let g = estimate_gradients(&tri, vals).unwrap();
                CloughTocher::new(&tri, vals, &g).unwrap()
            };
            let (c1, c2, cm) = (build(&v1), build(&v2), build(&mix));
            for q in grid_queries(&pts, 6) {
                if let (Some(a), Some(b), Some(m)) = (c1.eval(q), c2.eval(q), cm.eval(q)) {
                    let expect = scale * a + b;
                    prop_assert!((m - expect).abs() < 1e-9 * expect.abs().max(1.0));
                }
            }
        }
    }
}
