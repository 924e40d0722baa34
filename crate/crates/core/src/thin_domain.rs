//! The thin domain `Ω_ε = J_ε ∪ D_{1,ε} ∪ … ∪ D_{N,ε}` around a star graph,
//! its measure `dx / (ω ε)`, the projection onto the graph, and the squeezed
//! potential `V_ε(x) = V(x/ε) / ε` with its coupling constant `C_V`.
//!
//! Tubes are `D_{j,ε} = { R_j y : εl ≤ y_1 < l_j, |y_2| < ε }`. The junction
//! polygon `J` is given at the reference scale `ε₀` and shrunk homothetically
//! to `J_ε = (ε/ε₀) J`.

use std::f64::consts::TAU;

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::geometry::{self, Point};
use crate::quadrature::integrate_interval;
use crate::star_graph::{GraphPoint, MetricStarGraph};
use crate::OMEGA;

const GEOM_TOL: f64 = 1e-12;

/// How the junction polygon is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum JunctionShape {
    /// Tube mouths joined by straight chords in angular order.
    Auto,
    /// Explicit polygon at the reference scale `ε₀`.
    Polygon(Vec<Point>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThinDomainSpec {
    graph: MetricStarGraph,
    eps: f64,
    eps0: f64,
    l: f64,
    a: f64,
    junction: Vec<Point>,
}

impl ThinDomainSpec {
    /// Builds and validates `Ω_ε`. The diagnostic constant `a` defaults to
    /// `2l`, or to the midpoint of `(l, min l_j / ε₀)` when `2l` falls outside.
    pub fn new(graph: &MetricStarGraph, eps: f64, eps0: f64, l: f64, junction: JunctionShape) -> Result<Self> {
        if graph.n_edges() < 2 {
            return Err(Error::Geometry(
                "a thin domain needs a junction with at least two tubes".into(),
            ));
        }
        if !(eps0 > 0.0) || !(eps > 0.0 && eps <= eps0) {
            return Err(Error::Domain(format!("need 0 < eps <= eps0, got eps = {eps}, eps0 = {eps0}")));
        }
        if !(l > 0.0) {
            return Err(Error::Domain(format!("junction extent l must be positive, got {l}")));
        }
        if !(eps0 * l < graph.min_length()) {
            return Err(Error::Domain(format!(
                "eps0 * l = {} must be below the shortest edge {}",
                eps0 * l,
                graph.min_length()
            )));
        }
        let junction = match junction {
            JunctionShape::Auto => auto_junction(graph, eps0, l),
            JunctionShape::Polygon(mut p) => {
                if geometry::signed_area(&p) < 0.0 {
                    p.reverse();
                }
                p
            }
        };
        let a_max = graph.min_length() / eps0;
        let a = if 2.0 * l < a_max { 2.0 * l } else { 0.5 * (l + a_max) };
        let spec = ThinDomainSpec {
            graph: graph.clone(),
            eps,
            eps0,
            l,
            a,
            junction,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_a(mut self, a: f64) -> Result<Self> {
        let a_max = self.graph.min_length() / self.eps0;
        if !(a > self.l && a < a_max) {
            return Err(Error::Domain(format!(
                "diagnostic constant a = {a} must lie in (l, min l_j / eps0) = ({}, {a_max})",
                self.l
            )));
        }
        self.a = a;
        Ok(self)
    }

    /// Same geometry at a different `ε`.
    pub fn at_eps(&self, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps <= self.eps0) {
            return Err(Error::Domain(format!("need 0 < eps <= eps0 = {}, got {eps}", self.eps0)));
        }
        Ok(ThinDomainSpec { eps, ..self.clone() })
    }

    fn validate(&self) -> Result<()> {
        let j = &self.junction;
        if j.len() < 3 || geometry::signed_area(j) <= 0.0 {
            return Err(Error::Geometry("junction polygon is degenerate".into()));
        }
        let scale = self.eps0 * (self.l + 1.0);
        let tol = GEOM_TOL * scale.max(1.0);
        // Each tube mouth must be an edge of the junction polygon.
        let n = j.len();
        for e in 0..self.graph.n_edges() {
            let (lo, hi) = self.mouth_corners(e, self.eps0);
            let found = (0..n).any(|i| (j[i] - lo).norm() <= tol && (j[(i + 1) % n] - hi).norm() <= tol);
            if !found {
                return Err(Error::Geometry(format!(
                    "junction polygon does not contain the mouth of tube {e} as a boundary edge"
                )));
            }
        }
        let origin = Point::origin();
        if !geometry::contains(j, &origin) || geometry::boundary_distance(&origin, j) <= tol {
            return Err(Error::Geometry("the junction point O must lie inside the junction polygon".into()));
        }
        let tris = geometry::ear_clip(j)
            .ok_or_else(|| Error::Geometry("junction polygon is not simple".into()))?;
        let tubes: Vec<Vec<Point>> = (0..self.graph.n_edges())
            .map(|e| self.tube_polygon(e, self.eps0).to_vec())
            .collect();
        for (a, ta) in tubes.iter().enumerate() {
            for (b, tb) in tubes.iter().enumerate().skip(a + 1) {
                if geometry::convex_interiors_overlap(ta, tb, tol) {
                    return Err(Error::Geometry(format!("tubes {a} and {b} overlap")));
                }
            }
            for t in &tris {
                let tri = [j[t[0]], j[t[1]], j[t[2]]];
                if geometry::convex_interiors_overlap(&tri, ta, tol) {
                    return Err(Error::Geometry(format!("junction polygon overlaps tube {a}")));
                }
            }
        }
        let a_max = self.graph.min_length() / self.eps0;
        if !(self.a > self.l && self.a < a_max) {
            return Err(Error::Domain(format!(
                "no admissible diagnostic constant in (l, min l_j / eps0) = ({}, {a_max})",
                self.l
            )));
        }
        Ok(())
    }

    pub fn graph(&self) -> &MetricStarGraph {
        &self.graph
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn eps0(&self) -> f64 {
        self.eps0
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    /// `1 / (ω ε^{n-1})` with `n = 2`.
    pub fn measure_weight(&self) -> f64 {
        1.0 / (OMEGA * self.eps)
    }

    /// Junction polygon at the reference scale `ε₀`.
    pub fn reference_junction(&self) -> &[Point] {
        &self.junction
    }

    /// `J_ε = (ε/ε₀) J`.
    pub fn junction_polygon(&self) -> Vec<Point> {
        let c = self.eps / self.eps0;
        self.junction.iter().map(|p| Point::from(p.coords * c)).collect()
    }

    /// `ε₀^{-1} J`, the region carrying the unscaled potential.
    pub fn potential_region(&self) -> Vec<Point> {
        self.junction.iter().map(|p| Point::from(p.coords / self.eps0)).collect()
    }

    /// Mouth endpoints `R_j(εl, -ε)` and `R_j(εl, ε)`.
    pub fn mouth_corners(&self, j: usize, eps: f64) -> (Point, Point) {
        (
            self.graph.from_local(j, eps * self.l, -eps),
            self.graph.from_local(j, eps * self.l, eps),
        )
    }

    /// Counterclockwise corners of the closed tube `D_{j,ε}`.
    pub fn tube_polygon(&self, j: usize, eps: f64) -> [Point; 4] {
        let lj = self.graph.length(j);
        let el = eps * self.l;
        [
            self.graph.from_local(j, el, -eps),
            self.graph.from_local(j, lj, -eps),
            self.graph.from_local(j, lj, eps),
            self.graph.from_local(j, el, eps),
        ]
    }

    pub fn junction_area(&self) -> f64 {
        (self.eps / self.eps0).powi(2) * geometry::signed_area(&self.junction)
    }

    /// `|D_{j,ε}| = (l_j - εl) ω ε`.
    pub fn tube_area(&self, j: usize) -> f64 {
        (self.graph.length(j) - self.eps * self.l) * OMEGA * self.eps
    }

    pub fn area(&self) -> f64 {
        self.junction_area() + (0..self.graph.n_edges()).map(|j| self.tube_area(j)).sum::<f64>()
    }

    /// Boundary of `Ω_ε` as one counterclockwise polygon.
    pub fn outline(&self) -> Vec<Point> {
        let jp = self.junction_polygon();
        let n = jp.len();
        let tol = GEOM_TOL * self.eps0.max(1.0);
        let mut out = Vec::new();
        for i in 0..n {
            out.push(jp[i]);
            // Replace each mouth edge by the detour around its tube.
            for e in 0..self.graph.n_edges() {
                let (lo, hi) = self.mouth_corners(e, self.eps);
                if (jp[i] - lo).norm() <= tol && (jp[(i + 1) % n] - hi).norm() <= tol {
                    let t = self.tube_polygon(e, self.eps);
                    out.push(t[1]);
                    out.push(t[2]);
                }
            }
        }
        out
    }

    /// Tube index containing `x` (closed, with tolerance), if any.
    pub fn tube_of(&self, x: &Point, tol: f64) -> Option<usize> {
        (0..self.graph.n_edges()).find(|&j| {
            let y = self.graph.to_local(j, x);
            y.x >= self.eps * self.l - tol && y.x <= self.graph.length(j) + tol && y.y.abs() <= self.eps + tol
        })
    }

    pub fn in_junction(&self, x: &Point, tol: f64) -> bool {
        geometry::contains_closed(&self.junction_polygon(), x, tol)
    }

    pub fn contains(&self, x: &Point, tol: f64) -> bool {
        self.tube_of(x, tol).is_some() || self.in_junction(x, tol)
    }
}

fn auto_junction(graph: &MetricStarGraph, eps0: f64, l: f64) -> Vec<Point> {
    let mut order: Vec<usize> = (0..graph.n_edges()).collect();
    order.sort_by(|&a, &b| {
        graph.angles()[a]
            .rem_euclid(TAU)
            .total_cmp(&graph.angles()[b].rem_euclid(TAU))
    });
    order
        .into_iter()
        .flat_map(|j| [graph.from_local(j, eps0 * l, -eps0), graph.from_local(j, eps0 * l, eps0)])
        .collect()
}

/// The graph projection `f_ε`: the first tube coordinate on each tube, and
/// on the junction the nearest point of the star segments
/// `{R_j(t, 0) : 0 ≤ t ≤ εl}` (ties go to the smallest edge index).
pub fn project_f_eps(x: &Point, spec: &ThinDomainSpec) -> Result<GraphPoint> {
    let tol = GEOM_TOL * spec.graph.total_length().max(1.0);
    let el = spec.eps * spec.l;
    if let Some(j) = spec.tube_of(x, tol) {
        let y = spec.graph.to_local(j, x);
        if y.x >= el {
            return Ok(GraphPoint::on_edge(j, y.x.min(spec.graph.length(j))));
        }
    }
    if !spec.in_junction(x, tol) {
        if let Some(j) = spec.tube_of(x, tol) {
            let y = spec.graph.to_local(j, x);
            return Ok(GraphPoint::on_edge(j, y.x.clamp(el, spec.graph.length(j))));
        }
        return Err(Error::Domain(format!("point ({}, {}) lies outside the thin domain", x.x, x.y)));
    }
    let mut best: Option<(f64, usize, f64)> = None;
    for j in 0..spec.graph.n_edges() {
        let y = spec.graph.to_local(j, x);
        let t = y.x.clamp(0.0, el);
        let d = (x - spec.graph.from_local(j, t, 0.0)).norm();
        if best.is_none_or(|(bd, _, _)| d < bd) {
            best = Some((d, j, t));
        }
    }
    let (_, j, t) = best.expect("at least one edge");
    Ok(GraphPoint::on_edge(j, t))
}

/// Nonnegative profile of the unscaled potential `V`, centred at the origin.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialSpec {
    Zero,
    /// `v0 cos²(π|z| / (2ρ))` for `|z| ≤ ρ`, zero outside (C¹).
    CosineBump { v0: f64, rho: f64 },
    /// Product `v0 g(z_1) g(z_2)` with `g = 1` on `[-b, b]` and cosine
    /// ramps of width `ramp` down to zero outside.
    SmoothedBox { v0: f64, half_width: f64, ramp: f64 },
}

impl PotentialSpec {
    pub fn value(&self, z: &Point) -> f64 {
        match *self {
            PotentialSpec::Zero => 0.0,
            PotentialSpec::CosineBump { v0, rho } => {
                let r = z.coords.norm();
                if r >= rho {
                    0.0
                } else {
                    v0 * (std::f64::consts::FRAC_PI_2 * r / rho).cos().powi(2)
                }
            }
            PotentialSpec::SmoothedBox { v0, half_width, ramp } => {
                let g = |t: f64| {
                    let t = t.abs();
                    if t <= half_width {
                        1.0
                    } else if t >= half_width + ramp {
                        0.0
                    } else {
                        (std::f64::consts::FRAC_PI_2 * (t - half_width) / ramp).cos().powi(2)
                    }
                };
                v0 * g(z.x) * g(z.y)
            }
        }
    }

    /// Radius of a disc centred at the origin containing the support.
    pub fn support_radius(&self) -> f64 {
        match *self {
            PotentialSpec::Zero => 0.0,
            PotentialSpec::CosineBump { rho, .. } => rho,
            PotentialSpec::SmoothedBox { half_width, ramp, .. } => (half_width + ramp) * std::f64::consts::SQRT_2,
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            PotentialSpec::Zero => true,
            PotentialSpec::CosineBump { v0, .. } | PotentialSpec::SmoothedBox { v0, .. } => v0 == 0.0,
        }
    }

    /// Checks `V ≥ 0` and that the support disc lies inside `ε₀^{-1} J`.
    pub fn validate(&self, spec: &ThinDomainSpec) -> Result<()> {
        match *self {
            PotentialSpec::Zero => return Ok(()),
            PotentialSpec::CosineBump { v0, rho } => {
                if !(v0 >= 0.0) || !(rho > 0.0) {
                    return Err(Error::Domain(format!("cosine bump needs v0 >= 0 and rho > 0 (v0 = {v0}, rho = {rho})")));
                }
            }
            PotentialSpec::SmoothedBox { v0, half_width, ramp } => {
                if !(v0 >= 0.0) || !(half_width > 0.0) || !(ramp >= 0.0) {
                    return Err(Error::Domain("smoothed box needs v0 >= 0, half_width > 0, ramp >= 0".into()));
                }
            }
        }
        let region = spec.potential_region();
        let origin = Point::origin();
        let r = self.support_radius();
        if !geometry::contains(&region, &origin) || geometry::boundary_distance(&origin, &region) < r {
            return Err(Error::Domain(format!(
                "potential support (radius {r}) is not contained in the rescaled junction"
            )));
        }
        Ok(())
    }

    pub fn with_v0(&self, v0_new: f64) -> PotentialSpec {
        match *self {
            PotentialSpec::Zero => PotentialSpec::Zero,
            PotentialSpec::CosineBump { rho, .. } => PotentialSpec::CosineBump { v0: v0_new, rho },
            PotentialSpec::SmoothedBox { half_width, ramp, .. } => PotentialSpec::SmoothedBox {
                v0: v0_new,
                half_width,
                ramp,
            },
        }
    }
}

/// `V_ε(x) = V(x/ε) / ε`.
pub fn potential_v_eps(x: &Point, spec: &ThinDomainSpec, v: &PotentialSpec) -> f64 {
    v.value(&Point::from(x.coords / spec.eps)) / spec.eps
}

/// `C_V = (1/ω) ∫_{ε₀^{-1}J} V dz` to relative 1e-10.
///
/// The support lies inside `ε₀^{-1}J`, so the integral runs over the support
/// only, split along the profile's kinks and refined by panel doubling.
pub fn compute_c_v(v: &PotentialSpec, spec: &ThinDomainSpec) -> Result<f64> {
    if v.is_zero() {
        return Ok(0.0);
    }
    v.validate(spec)?;
    let total = match *v {
        PotentialSpec::Zero => 0.0,
        PotentialSpec::CosineBump { rho, .. } => doubling(|panels| {
            // Angular trapezoid (spectral for periodic integrands), radial Gauss.
            let m = 8 * panels;
            let dt = TAU / m as f64;
            (0..m)
                .map(|i| {
                    let (s, c) = (i as f64 * dt).sin_cos();
                    integrate_interval(|r| r * v.value(&Point::new(r * c, r * s)), 0.0, rho, panels, 8)
                })
                .sum::<f64>()
                * dt
        })?,
        PotentialSpec::SmoothedBox { half_width, ramp, .. } => {
            let edges = [-(half_width + ramp), -half_width, half_width, half_width + ramp];
            doubling(|panels| {
                let mut acc = 0.0;
                for bx in edges.windows(2) {
                    for by in edges.windows(2) {
                        acc += integrate_interval(
                            |x| integrate_interval(|y| v.value(&Point::new(x, y)), by[0], by[1], panels, 8),
                            bx[0],
                            bx[1],
                            panels,
                            8,
                        );
                    }
                }
                acc
            })?
        }
    };
    Ok(total / OMEGA)
}

fn doubling<F: Fn(usize) -> f64>(estimate: F) -> Result<f64> {
    let mut panels = 2;
    let mut prev = estimate(panels);
    while panels < 1 << 12 {
        panels *= 2;
        let next = estimate(panels);
        if (next - prev).abs() <= 1e-12 * next.abs().max(f64::MIN_POSITIVE) {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Numerics("coupling-constant quadrature did not converge".into()))
}

/// Rescales the amplitude of `shape` so that its coupling constant equals
/// `target`. `C_V` is linear in the amplitude, so one quadrature suffices.
pub fn solve_amplitude(shape: &PotentialSpec, target: f64, spec: &ThinDomainSpec) -> Result<PotentialSpec> {
    if !(target >= 0.0) {
        return Err(Error::Domain(format!("target C_V must be nonnegative, got {target}")));
    }
    let unit = shape.with_v0(1.0);
    let c1 = compute_c_v(&unit, spec)?;
    if !(c1 > 0.0) {
        return Err(Error::Numerics("unit-amplitude potential has zero coupling constant".into()));
    }
    Ok(shape.with_v0(target / c1))
}

/// `μ_ε(Ω_ε) = (|J_ε| + Σ_j |D_{j,ε}|) / (ω ε)`.
pub fn measure_total(spec: &ThinDomainSpec) -> f64 {
    spec.area() * spec.measure_weight()
}

/// Unit normal to edge `j` (the transversal direction of tube `j`).
pub fn transversal_direction(graph: &MetricStarGraph, j: usize) -> Vector2<f64> {
    graph.rotation(j).column(1).into_owned()
}
