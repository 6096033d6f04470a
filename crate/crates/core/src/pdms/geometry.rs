//! 2-D oriented boxes, separating-axis overlap and polygon helpers.

use serde::{Deserialize, Serialize};

/// Rectangle centred at `center`, rotated by `heading`, with half length
/// along the heading and half width across it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center: [f64; 2],
    pub heading: f64,
    pub half_extents: [f64; 2],
}

impl OrientedBox {
    fn axes(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.heading.sin_cos();
        [[c, s], [-s, c]]
    }

    /// Projection radius onto unit axis `u`.
    fn radius(&self, u: [f64; 2]) -> f64 {
        let [a0, a1] = self.axes();
        self.half_extents[0] * dot(a0, u).abs() + self.half_extents[1] * dot(a1, u).abs()
    }

    pub fn corners(&self) -> [[f64; 2]; 4] {
        let [a0, a1] = self.axes();
        let [hl, hw] = self.half_extents;
        let c = self.center;
        let at = |sl: f64, sw: f64| [c[0] + sl * hl * a0[0] + sw * hw * a1[0], c[1] + sl * hl * a0[1] + sw * hw * a1[1]];
        [at(1.0, 1.0), at(-1.0, 1.0), at(-1.0, -1.0), at(1.0, -1.0)]
    }
}

pub(crate) fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Static overlap test. Touching boxes count as overlapping.
pub fn boxes_overlap(a: &OrientedBox, b: &OrientedBox) -> bool {
    let d = [b.center[0] - a.center[0], b.center[1] - a.center[1]];
    a.axes().into_iter().chain(b.axes()).all(|u| dot(d, u).abs() <= a.radius(u) + b.radius(u))
}

/// Times `t` in `[t_lo, t_hi]` at which `a` moved by `va * t` and `b` moved
/// by `vb * t` overlap. Orientations are fixed, so the relative motion is a
/// translation and every separating-axis constraint is a linear inequality
/// in `t`; the result is one closed interval or `None`.
pub fn overlap_interval(
    a: &OrientedBox,
    va: [f64; 2],
    b: &OrientedBox,
    vb: [f64; 2],
    t_lo: f64,
    t_hi: f64,
) -> Option<(f64, f64)> {
    let d0 = [b.center[0] - a.center[0], b.center[1] - a.center[1]];
    let dv = [vb[0] - va[0], vb[1] - va[1]];
    let (mut lo, mut hi) = (t_lo, t_hi);
    for u in a.axes().into_iter().chain(b.axes()) {
        let r = a.radius(u) + b.radius(u);
        let (p0, p1) = (dot(d0, u), dot(dv, u));
        if p1 == 0.0 {
            if p0.abs() > r {
                return None;
            }
            continue;
        }
        // |p0 + p1 t| <= r
        let (e0, e1) = ((-r - p0) / p1, (r - p0) / p1);
        lo = lo.max(e0.min(e1));
        hi = hi.min(e0.max(e1));
        if lo > hi {
            return None;
        }
    }
    Some((lo, hi))
}

fn on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    let scale = (b[0] - a[0]).abs() + (b[1] - a[1]).abs();
    cross.abs() <= 1e-12 * scale.max(1.0)
        && p[0] >= a[0].min(b[0]) - 1e-12
        && p[0] <= a[0].max(b[0]) + 1e-12
        && p[1] >= a[1].min(b[1]) - 1e-12
        && p[1] <= a[1].max(b[1]) + 1e-12
}

/// Crossing-number containment; points on the boundary are inside.
pub fn point_in_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if on_segment(p, a, b) {
            return true;
        }
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn segments_intersect(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let (d1, d2) = (orient(q1, q2, p1), orient(q1, q2, p2));
    let (d3, d4) = (orient(p1, p2, q1), orient(p1, p2, q2));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    on_segment(p1, q1, q2) || on_segment(p2, q1, q2) || on_segment(q1, p1, p2) || on_segment(q2, p1, p2)
}

/// At least three vertices, non-zero area and no two non-adjacent edges touching.
pub fn polygon_is_simple(poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let area2: f64 = (0..n).map(|i| orient([0.0, 0.0], poly[i], poly[(i + 1) % n])).sum();
    if area2.abs() <= f64::EPSILON {
        return false;
    }
    for i in 0..n {
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if !adjacent && segments_intersect(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

/// Arc length of the closest point on `line` to `p`.
pub fn project_arc_length(p: [f64; 2], line: &[[f64; 2]]) -> f64 {
    let (mut best_d2, mut best_s, mut s0) = (f64::INFINITY, 0.0, 0.0);
    for seg in line.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let ab = [b[0] - a[0], b[1] - a[1]];
        let len2 = dot(ab, ab);
        let len = len2.sqrt();
        let u = if len2 > 0.0 { (dot([p[0] - a[0], p[1] - a[1]], ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
        let q = [a[0] + u * ab[0] - p[0], a[1] + u * ab[1] - p[1]];
        let d2 = dot(q, q);
        if d2 < best_d2 {
            best_d2 = d2;
            best_s = s0 + u * len;
        }
        s0 += len;
    }
    best_s
}
