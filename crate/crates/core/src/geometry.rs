//! Small planar polygon toolbox: areas, containment, overlap tests,
//! ear clipping and half-plane clipping.

use nalgebra::{Point2, Vector2};

pub type Point = Point2<f64>;

/// Signed shoelace area, positive for counterclockwise vertex order.
pub fn signed_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        twice += p.x * q.y - q.x * p.y;
    }
    0.5 * twice
}

pub fn triangle_area(a: &Point, b: &Point, c: &Point) -> f64 {
    0.5 * cross(&(b - a), &(c - a))
}

#[inline]
pub fn cross(u: &Vector2<f64>, v: &Vector2<f64>) -> f64 {
    u.x * v.y - u.y * v.x
}

/// Distance from `p` to the closed segment `[a, b]`, together with the
/// segment parameter of the closest point.
pub fn segment_distance(p: &Point, a: &Point, b: &Point) -> (f64, f64) {
    let d = b - a;
    let len2 = d.norm_squared();
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((p - a).dot(&d) / len2).clamp(0.0, 1.0)
    };
    let q = a + d * t;
    ((p - q).norm(), t)
}

pub fn boundary_distance(p: &Point, poly: &[Point]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| segment_distance(p, &poly[i], &poly[(i + 1) % n]).0)
        .fold(f64::INFINITY, f64::min)
}

/// Even-odd containment test for the open polygon. Points on the boundary
/// may fall either way; combine with [`boundary_distance`] when that matters.
pub fn contains(poly: &[Point], p: &Point) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (pi, pj) = (poly[i], poly[j]);
        if (pi.y > p.y) != (pj.y > p.y) {
            let x = pj.x + (p.y - pj.y) * (pi.x - pj.x) / (pi.y - pj.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Closed containment with tolerance `tol`.
pub fn contains_closed(poly: &[Point], p: &Point, tol: f64) -> bool {
    contains(poly, p) || boundary_distance(p, poly) <= tol
}

/// Whether the interiors of two convex polygons overlap by more than `tol`
/// (separating axis test). Polygons touching along an edge do not overlap.
pub fn convex_interiors_overlap(a: &[Point], b: &[Point], tol: f64) -> bool {
    for poly in [a, b] {
        let n = poly.len();
        for i in 0..n {
            let e = poly[(i + 1) % n] - poly[i];
            let len = e.norm();
            if len == 0.0 {
                continue;
            }
            let axis = Vector2::new(-e.y, e.x) / len;
            let (amin, amax) = project(a, &axis);
            let (bmin, bmax) = project(b, &axis);
            if amax <= bmin + tol || bmax <= amin + tol {
                return false;
            }
        }
    }
    true
}

fn project(poly: &[Point], axis: &Vector2<f64>) -> (f64, f64) {
    poly.iter()
        .map(|p| p.coords.dot(axis))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        })
}

pub fn is_convex(poly: &[Point]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let s = signed_area(poly).signum();
    (0..n).all(|i| {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let c = poly[(i + 2) % n];
        cross(&(b - a), &(c - b)) * s >= -1e-14 * (b - a).norm() * (c - b).norm()
    })
}

/// Triangulates a simple counterclockwise polygon by ear clipping.
/// Returns index triples into `poly`, or `None` when no ear can be found
/// (self-intersecting or clockwise input).
pub fn ear_clip(poly: &[Point]) -> Option<Vec<[usize; 3]>> {
    let n = poly.len();
    if n < 3 {
        return None;
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut tris = Vec::with_capacity(n - 2);
    while idx.len() > 3 {
        let m = idx.len();
        // Among valid ears, clip the one with the largest smallest angle.
        let mut best: Option<(f64, usize)> = None;
        for k in 0..m {
            let (i0, i1, i2) = (idx[(k + m - 1) % m], idx[k], idx[(k + 1) % m]);
            let (a, b, c) = (poly[i0], poly[i1], poly[i2]);
            let area = triangle_area(&a, &b, &c);
            if area <= 1e-12 * (b - a).norm() * (c - b).norm() {
                continue;
            }
            let blocked = idx.iter().any(|&q| {
                q != i0 && q != i1 && q != i2 && in_closed_triangle(&poly[q], &a, &b, &c)
            });
            if blocked {
                continue;
            }
            let quality = min_angle(&a, &b, &c);
            if best.is_none_or(|(bq, _)| quality > bq) {
                best = Some((quality, k));
            }
        }
        let (_, k) = best?;
        tris.push([idx[(k + m - 1) % m], idx[k], idx[(k + 1) % m]]);
        idx.remove(k);
    }
    let (a, b, c) = (poly[idx[0]], poly[idx[1]], poly[idx[2]]);
    if triangle_area(&a, &b, &c) <= 0.0 {
        return None;
    }
    tris.push([idx[0], idx[1], idx[2]]);
    Some(tris)
}

fn min_angle(a: &Point, b: &Point, c: &Point) -> f64 {
    let ang = |p: &Point, q: &Point, r: &Point| {
        let (u, v) = (q - p, r - p);
        cross(&u, &v).abs().atan2(u.dot(&v))
    };
    ang(a, b, c).min(ang(b, c, a)).min(ang(c, a, b))
}

fn in_closed_triangle(p: &Point, a: &Point, b: &Point, c: &Point) -> bool {
    let d1 = cross(&(b - a), &(p - a));
    let d2 = cross(&(c - b), &(p - b));
    let d3 = cross(&(a - c), &(p - c));
    d1 >= 0.0 && d2 >= 0.0 && d3 >= 0.0
}

/// Clips a convex polygon to the half-plane `{x : n·x <= c}`.
pub fn clip_half_plane(poly: &[Point], normal: &Vector2<f64>, c: f64) -> Vec<Point> {
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        let fp = normal.dot(&p.coords) - c;
        let fq = normal.dot(&q.coords) - c;
        if fp <= 0.0 {
            out.push(p);
        }
        if (fp < 0.0 && fq > 0.0) || (fp > 0.0 && fq < 0.0) {
            let t = fp / (fp - fq);
            out.push(p + (q - p) * t);
        }
    }
    out
}

/// Shortest distance from `p` to a polygon's closed region (zero inside).
pub fn region_distance(poly: &[Point], p: &Point) -> f64 {
    if contains(poly, p) {
        0.0
    } else {
        boundary_distance(p, poly)
    }
}
