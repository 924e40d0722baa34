//! Quadrature rules: composite Simpson on uniform samples, Gauss–Legendre
//! panels on intervals, and fixed/adaptive rules on triangles.

use crate::error::{Error, Result};
use crate::geometry::Point;

/// Composite Simpson rule on uniformly spaced samples. An odd number of
/// intervals closes with a Simpson 3/8 panel on the last three.
pub fn simpson_uniform(values: &[f64], step: f64) -> f64 {
    let n = values.len();
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * step * (values[0] + values[1]),
        3 => step / 3.0 * (values[0] + 4.0 * values[1] + values[2]),
        _ => {
            let intervals = n - 1;
            let (simpson_end, tail) = if intervals.is_multiple_of(2) {
                (n - 1, 0.0)
            } else {
                let k = n - 4;
                let tail = 3.0 * step / 8.0
                    * (values[k] + 3.0 * values[k + 1] + 3.0 * values[k + 2] + values[k + 3]);
                (k, tail)
            };
            let mut acc = values[0] + values[simpson_end];
            for (i, v) in values.iter().enumerate().take(simpson_end).skip(1) {
                acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
            }
            step / 3.0 * acc + tail
        }
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, computed by Newton
/// iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for k in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * k + 1) as f64 * z * p1 - k as f64 * p2) / (k + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite Gauss–Legendre rule with `panels` equal panels of `order` nodes.
pub fn integrate_interval<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    panels: usize,
    order: usize,
) -> f64 {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        for (xi, wi) in x.iter().zip(&w) {
            acc += wi * f(mid + 0.5 * h * xi);
        }
    }
    0.5 * h * acc
}

/// Barycentric points and weights (summing to one) of a triangle rule.
pub struct TriangleRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    /// Three interior points, exact for quadratics.
    pub fn degree2() -> Self {
        let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
        TriangleRule {
            points: vec![[a, b, b], [b, a, b], [b, b, a]],
            weights: vec![1.0 / 3.0; 3],
        }
    }

    /// Seven-point rule exact for quintics.
    pub fn degree5() -> Self {
        let r15 = 15f64.sqrt();
        let (a1, b1) = ((9.0 - 2.0 * r15) / 21.0, (6.0 + r15) / 21.0);
        let (a2, b2) = ((9.0 + 2.0 * r15) / 21.0, (6.0 - r15) / 21.0);
        let (w1, w2) = ((155.0 + r15) / 1200.0, (155.0 - r15) / 1200.0);
        let third = 1.0 / 3.0;
        TriangleRule {
            points: vec![
                [third, third, third],
                [a1, b1, b1],
                [b1, a1, b1],
                [b1, b1, a1],
                [a2, b2, b2],
                [b2, a2, b2],
                [b2, b2, a2],
            ],
            weights: vec![9.0 / 40.0, w1, w1, w1, w2, w2, w2],
        }
    }

    /// Applies the rule to `f` on triangle `(a, b, c)`; `f` receives the
    /// physical point and its barycentric coordinates.
    pub fn apply<const K: usize, F>(&self, tri: &[Point; 3], f: &F) -> [f64; K]
    where
        F: Fn(&Point, &[f64; 3]) -> [f64; K],
    {
        let area = crate::geometry::triangle_area(&tri[0], &tri[1], &tri[2]).abs();
        let mut acc = [0.0; K];
        for (bc, w) in self.points.iter().zip(&self.weights) {
            let p = Point::from(
                tri[0].coords * bc[0] + tri[1].coords * bc[1] + tri[2].coords * bc[2],
            );
            let v = f(&p, bc);
            for k in 0..K {
                acc[k] += w * v[k];
            }
        }
        acc.map(|v| v * area)
    }
}

/// Adaptive integration over a triangle by recursive four-way subdivision
/// with the degree-5 rule, until parent and children agree to `abs_tol`
/// in every component. `f` receives barycentric coordinates relative to the
/// original triangle so it can evaluate basis functions there.
pub fn adaptive_triangle<const K: usize, F>(
    tri: &[Point; 3],
    f: &F,
    abs_tol: f64,
    max_depth: usize,
) -> Result<[f64; K]>
where
    F: Fn(&Point, &[f64; 3]) -> [f64; K],
{
    let rule = TriangleRule::degree5();
    let root = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let coarse = sub_apply(&rule, tri, &root, f);
    recurse(&rule, tri, &root, f, coarse, abs_tol, max_depth)
}

type Bary = [[f64; 3]; 3];

fn sub_apply<const K: usize, F>(rule: &TriangleRule, tri: &[Point; 3], sub: &Bary, f: &F) -> [f64; K]
where
    F: Fn(&Point, &[f64; 3]) -> [f64; K],
{
    let to_point = |b: &[f64; 3]| {
        Point::from(tri[0].coords * b[0] + tri[1].coords * b[1] + tri[2].coords * b[2])
    };
    let verts = [to_point(&sub[0]), to_point(&sub[1]), to_point(&sub[2])];
    let area = crate::geometry::triangle_area(&verts[0], &verts[1], &verts[2]).abs();
    let mut acc = [0.0; K];
    for (bc, w) in rule.points.iter().zip(&rule.weights) {
        let mut outer = [0.0; 3];
        for (d, o) in outer.iter_mut().enumerate() {
            *o = bc[0] * sub[0][d] + bc[1] * sub[1][d] + bc[2] * sub[2][d];
        }
        let v = f(&to_point(&outer), &outer);
        for k in 0..K {
            acc[k] += w * v[k];
        }
    }
    acc.map(|v| v * area)
}

fn split(sub: &Bary) -> [Bary; 4] {
    let mid = |a: &[f64; 3], b: &[f64; 3]| [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2])];
    let (a, b, c) = (sub[0], sub[1], sub[2]);
    let (ab, bc, ca) = (mid(&a, &b), mid(&b, &c), mid(&c, &a));
    [[a, ab, ca], [ab, b, bc], [ca, bc, c], [bc, ca, ab]]
}

fn recurse<const K: usize, F>(
    rule: &TriangleRule,
    tri: &[Point; 3],
    sub: &Bary,
    f: &F,
    coarse: [f64; K],
    abs_tol: f64,
    depth_left: usize,
) -> Result<[f64; K]>
where
    F: Fn(&Point, &[f64; 3]) -> [f64; K],
{
    let children = split(sub);
    let parts: Vec<[f64; K]> = children.iter().map(|c| sub_apply(rule, tri, c, f)).collect();
    let mut fine = [0.0; K];
    for p in &parts {
        for k in 0..K {
            fine[k] += p[k];
        }
    }
    let err = (0..K).map(|k| (fine[k] - coarse[k]).abs()).fold(0.0, f64::max);
    if err <= abs_tol {
        return Ok(fine);
    }
    if depth_left == 0 {
        return Err(Error::Numerics(format!(
            "adaptive triangle quadrature did not converge: error {err:.3e} > tolerance {abs_tol:.3e}"
        )));
    }
    let mut total = [0.0; K];
    for (child, part) in children.iter().zip(parts) {
        let v = recurse(rule, tri, child, f, part, abs_tol / 4.0, depth_left - 1)?;
        for k in 0..K {
            total[k] += v[k];
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_exact_for_cubics_any_parity() {
        for n in [5usize, 6, 9, 10, 1024] {
            let h = 1.0 / (n - 1) as f64;
            let v: Vec<f64> = (0..n).map(|i| (i as f64 * h).powi(3)).collect();
            assert!((simpson_uniform(&v, h) - 0.25).abs() < 1e-14, "n = {n}");
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let v = integrate_interval(|x| x.powi(9) + x * x, 0.0, 2.0, 1, 5);
        assert!((v - (1024.0 / 10.0 + 8.0 / 3.0)).abs() < 1e-11);
    }

    #[test]
    fn degree5_rule_is_exact_for_quintics() {
        let tri = [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)];
        let rule = TriangleRule::degree5();
        let v = rule.apply(&tri, &|p: &Point, _: &[f64; 3]| [p.x.powi(5), p.x * p.x * p.y * p.y]);
        // ∫ x^5 = 5!/7! = 1/42 ; ∫ x²y² = 2!2!/6! = 1/180
        assert!((v[0] - 1.0 / 42.0).abs() < 1e-15);
        assert!((v[1] - 1.0 / 180.0).abs() < 1e-15);
    }

    #[test]
    fn adaptive_handles_kinked_integrand() {
        let tri = [Point::new(-1.0, -1.0), Point::new(1.0, -1.0), Point::new(-1.0, 1.0)];
        // ∫ |x| over the triangle: split at x = 0.
        let v = adaptive_triangle(&tri, &|p: &Point, _: &[f64; 3]| [p.x.abs()], 1e-10, 20).unwrap();
        // For x in [-1, 1] the vertical extent is from -1 to -x, length 1 - x.
        let exact = integrate_interval(|x| x.abs() * (1.0 - x), -1.0, 0.0, 1, 4)
            + integrate_interval(|x| x.abs() * (1.0 - x), 0.0, 1.0, 1, 4);
        assert!((v[0] - exact).abs() < 1e-9);
    }
}
