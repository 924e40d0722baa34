//! Executable surrogates of the thin-domain to graph convergence statements:
//! pullback and pushforward between `Ω_ε` and the graph, the recovery
//! sequence, compactness diagnostics, the measure condition of the graph
//! approximation, and a convergence sweep over `ε` with slope fits and
//! Richardson extrapolation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem2d::{self, eval_phi_eps, p1_gradients, DiscreteField, FemSystem};
use crate::geometry::{self, Point};
use crate::graph_spectra::{secular_eigenvalues, GraphEigenpair, SecularSolveConfig};
use crate::mesh2d::{triangulate, Mesh2D, Region};
use crate::quadrature::{integrate_interval, TriangleRule};
use crate::star_graph::{l2_inner, GraphFunction, GraphPoint, MetricStarGraph, DEFAULT_SAMPLES};
use crate::thin_domain::{compute_c_v, project_f_eps, JunctionShape, PotentialSpec, ThinDomainSpec};

/// `Φ_ε ψ = ψ ∘ f_ε` at the nodes (real part).
pub fn pullback(psi: &GraphFunction, spec: &ThinDomainSpec, mesh: &Mesh2D) -> Result<DiscreteField> {
    require_continuous(psi)?;
    let values = mesh
        .nodes
        .iter()
        .map(|x| project_f_eps(x, spec).map(|p| psi.eval(p).re))
        .collect::<Result<Vec<_>>>()?;
    DiscreteField::new(mesh, values)
}

fn require_continuous(psi: &GraphFunction) -> Result<()> {
    let scale = (0..psi.n_edges())
        .flat_map(|j| psi.edge_values(j).iter().map(|z| z.norm()))
        .fold(psi.vertex_value().norm(), f64::max);
    if psi.junction_gap() > 1e-8 * scale.max(1.0) {
        return Err(Error::Domain(format!(
            "graph function is discontinuous at the junction (gap {:.3e})",
            psi.junction_gap()
        )));
    }
    Ok(())
}

/// Where a mesh node sits relative to the graph.
#[derive(Debug, Clone, Copy, PartialEq)]
enum NodeSite {
    Junction,
    Tube { edge: usize, s: f64 },
}

fn node_sites(spec: &ThinDomainSpec, mesh: &Mesh2D) -> Result<Vec<NodeSite>> {
    let mut sites = vec![NodeSite::Junction; mesh.n_nodes()];
    if mesh.tubes.len() == spec.graph().n_edges() {
        for g in &mesh.tubes {
            for c in 1..=g.columns {
                for &n in g.column(c) {
                    sites[n] = NodeSite::Tube { edge: g.edge, s: g.s[c] };
                }
            }
        }
        return Ok(sites);
    }
    let el = spec.eps() * spec.l();
    for (site, x) in sites.iter_mut().zip(&mesh.nodes) {
        if let GraphPoint::Edge { edge, s } = project_f_eps(x, spec)? {
            if s > el {
                *site = NodeSite::Tube { edge, s };
            }
        }
    }
    Ok(sites)
}

/// The recovery field: `ψ_j(γ_ε(s))` on tube `j` with
/// `γ_ε(s) = l_j (s − εl) / (l_j − εl)`, and `ψ(O)` on the closed junction.
pub fn recovery_sequence(psi: &GraphFunction, spec: &ThinDomainSpec, mesh: &Mesh2D) -> Result<DiscreteField> {
    require_continuous(psi)?;
    let el = spec.eps() * spec.l();
    let values = node_sites(spec, mesh)?
        .into_iter()
        .map(|site| match site {
            NodeSite::Junction => psi.vertex_value().re,
            NodeSite::Tube { edge, s } => {
                let lj = spec.graph().length(edge);
                psi.eval_edge(edge, lj * (s - el) / (lj - el)).re
            }
        })
        .collect();
    DiscreteField::new(mesh, values)
}

/// `Σ_j l_j / (l_j − εl) ∫ |ψ_j'|²`, the kinetic energy of the recovery field.
pub fn recovery_kinetic_target(psi: &GraphFunction, spec: &ThinDomainSpec) -> f64 {
    let el = spec.eps() * spec.l();
    (0..psi.n_edges())
        .map(|j| {
            let lj = spec.graph().length(j);
            let d = crate::star_graph::derivative(psi.edge_values(j), psi.step(j));
            let sq: Vec<f64> = d.iter().map(|z| z.norm_sqr()).collect();
            lj / (lj - el) * crate::quadrature::simpson_uniform(&sq, psi.step(j))
        })
        .sum()
}

/// Cross-sectional averages `(1/2ε) ∫ u(R_j(s, t)) dt` at every grid column
/// of every tube (exact for P1: columns are element edges).
fn column_averages(u: &DiscreteField, mesh: &Mesh2D) -> Vec<Vec<f64>> {
    mesh.tubes
        .iter()
        .map(|g| {
            (0..=g.columns)
                .map(|c| {
                    let col = g.column(c);
                    let inner: f64 = col[1..g.layers].iter().map(|&n| u.values[n]).sum();
                    (inner + 0.5 * (u.values[col[0]] + u.values[col[g.layers]])) / g.layers as f64
                })
                .collect()
        })
        .collect()
}

fn require_tubes(spec: &ThinDomainSpec, mesh: &Mesh2D) -> Result<()> {
    if mesh.tubes.len() != spec.graph().n_edges() {
        return Err(Error::Mesh("mesh carries no structured tube layout".into()));
    }
    Ok(())
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let k = match xs.binary_search_by(|v| v.total_cmp(&x)) {
        Ok(k) => return ys[k],
        Err(k) => k.clamp(1, xs.len() - 1),
    };
    let t = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
    ys[k - 1] * (1.0 - t) + ys[k] * t
}

/// Graph function of cross-sectional averages on `(εl, l_j]`, equal to the
/// junction mean `ξ_ε` on `[0, εl]` and at `O`.
pub fn pushforward(u: &DiscreteField, spec: &ThinDomainSpec, mesh: &Mesh2D, samples: usize) -> Result<GraphFunction> {
    require_tubes(spec, mesh)?;
    let xi = junction_mean(u, spec, mesh, spec.a())?;
    let el = spec.eps() * spec.l();
    let avgs = column_averages(u, mesh);
    let edges = mesh
        .tubes
        .iter()
        .zip(&avgs)
        .map(|(g, a)| {
            let lj = spec.graph().length(g.edge);
            (0..samples)
                .map(|k| {
                    let s = if k + 1 == samples { lj } else { lj * k as f64 / (samples - 1) as f64 };
                    Complex64::new(if s <= el { xi } else { interpolate(&g.s, a, s) }, 0.0)
                })
                .collect()
        })
        .collect();
    GraphFunction::from_samples(spec.graph().lengths().to_vec(), edges, Complex64::new(xi, 0.0))
}

/// `Σ_j ∫_{εl}^{l_j} |g_j'|²` of the pushforward, exact for its piecewise
/// linear profile.
pub fn pushforward_kinetic(u: &DiscreteField, spec: &ThinDomainSpec, mesh: &Mesh2D) -> Result<f64> {
    require_tubes(spec, mesh)?;
    Ok(mesh
        .tubes
        .iter()
        .zip(column_averages(u, mesh))
        .map(|(g, a)| (0..g.columns).map(|c| (a[c + 1] - a[c]).powi(2) / (g.s[c + 1] - g.s[c])).sum::<f64>())
        .sum())
}

/// Trace of the pushforward on edge `j` at arclength `s ≥ εl`.
pub fn pushforward_trace(u: &DiscreteField, spec: &ThinDomainSpec, mesh: &Mesh2D, j: usize, s: f64) -> Result<f64> {
    require_tubes(spec, mesh)?;
    let g = &mesh.tubes[j];
    if !(s >= g.s[0] && s <= g.s[g.columns]) {
        return Err(Error::Domain(format!("trace position {s} lies outside tube {j}")));
    }
    let avgs = column_averages(u, mesh);
    Ok(interpolate(&g.s, &avgs[j], s))
}

struct JunctionIntegrals {
    area: f64,
    mean_integral: f64,
    gradient_energy: f64,
}

/// Integrals over `J_ε^a = J_ε ∪ {x ∈ D_{j,ε} : π₁ R_j⁻¹ x < εa}` by exact
/// clipping of the tube elements.
fn junction_integrals(u: &DiscreteField, spec: &ThinDomainSpec, mesh: &Mesh2D, a: f64) -> Result<JunctionIntegrals> {
    let a_max = spec.graph().min_length() / spec.eps0();
    if !(a > spec.l() && a < a_max) {
        return Err(Error::Domain(format!(
            "junction-region constant a = {a} must lie in (l, min l_j / eps0) = ({}, {a_max})",
            spec.l()
        )));
    }
    let cut = spec.eps() * a;
    let mut out = JunctionIntegrals { area: 0.0, mean_integral: 0.0, gradient_energy: 0.0 };
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let pts = mesh.triangle(t);
        let poly = match mesh.regions[t] {
            Region::Junction => pts.to_vec(),
            Region::Tube(j) => geometry::clip_half_plane(&pts, &spec.graph().direction(j), cut),
        };
        if poly.len() < 3 {
            continue;
        }
        let g = p1_gradients(&pts);
        let vals = [u.values[tri[0]], u.values[tri[1]], u.values[tri[2]]];
        let grad = [
            vals[0] * g[0][0] + vals[1] * g[1][0] + vals[2] * g[2][0],
            vals[0] * g[0][1] + vals[1] * g[1][1] + vals[2] * g[2][1],
        ];
        let eval = |p: &Point| vals[0] + grad[0] * (p.x - pts[0].x) + grad[1] * (p.y - pts[0].y);
        for k in 1..poly.len() - 1 {
            let area = geometry::triangle_area(&poly[0], &poly[k], &poly[k + 1]);
            let centroid = Point::from((poly[0].coords + poly[k].coords + poly[k + 1].coords) / 3.0);
            out.area += area;
            out.mean_integral += area * eval(&centroid);
            out.gradient_energy += area * (grad[0] * grad[0] + grad[1] * grad[1]);
        }
    }
    if !(out.area > 0.0) {
        return Err(Error::Domain("junction region is empty".into()));
    }
    Ok(out)
}

/// `ξ_ε`, the mean of `u` over `J_ε^a`.
pub fn junction_mean(u: &DiscreteField, spec: &ThinDomainSpec, mesh: &Mesh2D, a: f64) -> Result<f64> {
    let j = junction_integrals(u, spec, mesh, a)?;
    Ok(j.mean_integral / j.area)
}

/// `∫_{J_ε^a} |∇u|² dx` (the rescaling factor is 1 in two dimensions).
pub fn junction_energy(u: &DiscreteField, spec: &ThinDomainSpec, mesh: &Mesh2D, a: f64) -> Result<f64> {
    Ok(junction_integrals(u, spec, mesh, a)?.gradient_energy)
}

/// `(l_j ε / (l_j − εl)) ∫_{D_{j,ε}} |∇_⊥ u|² dx`: the transversal energy
/// after mapping tube `j` to its fixed reference tube.
pub fn transversal_energy(u: &DiscreteField, spec: &ThinDomainSpec, mesh: &Mesh2D, j: usize) -> Result<f64> {
    if j >= spec.graph().n_edges() {
        return Err(Error::Domain(format!("no tube {j}")));
    }
    let normal = crate::thin_domain::transversal_direction(spec.graph(), j);
    let mut acc = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if mesh.regions[t] != Region::Tube(j) {
            continue;
        }
        let pts = mesh.triangle(t);
        let g = p1_gradients(&pts);
        let gx: f64 = (0..3).map(|k| u.values[tri[k]] * g[k][0]).sum();
        let gy: f64 = (0..3).map(|k| u.values[tri[k]] * g[k][1]).sum();
        let perp = gx * normal.x + gy * normal.y;
        acc += geometry::triangle_area(&pts[0], &pts[1], &pts[2]) * perp * perp;
    }
    let lj = spec.graph().length(j);
    let eps = spec.eps();
    Ok(lj * eps / (lj - eps * spec.l()) * acc)
}

/// Test functions for the measure condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GhTest {
    One,
    Arclength,
    Cosine,
}

impl GhTest {
    pub const ALL: [GhTest; 3] = [GhTest::One, GhTest::Arclength, GhTest::Cosine];

    pub fn eval(self, graph: &MetricStarGraph, p: GraphPoint) -> f64 {
        match (self, p) {
            (GhTest::One, _) => 1.0,
            (GhTest::Arclength, p) => p.s(),
            (GhTest::Cosine, GraphPoint::Vertex) => 1.0,
            (GhTest::Cosine, GraphPoint::Edge { edge, s }) => (std::f64::consts::PI * s / graph.length(edge)).cos(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GhTest::One => "one",
            GhTest::Arclength => "arclength",
            GhTest::Cosine => "cosine",
        }
    }
}

/// `|∫_{Ω_ε} ψ∘f_ε dμ_ε − ∫_G ψ ds|` by quadrature independent of any mesh:
/// tensor Gauss rules on the tubes and subdivided degree-5 rules on `J_ε`.
pub fn gh_measure_error(spec: &ThinDomainSpec, test: GhTest) -> Result<f64> {
    let graph = spec.graph();
    let (eps, el, w) = (spec.eps(), spec.eps() * spec.l(), spec.measure_weight());
    let mut domain = 0.0;
    for j in 0..graph.n_edges() {
        let lj = graph.length(j);
        let panels = (64.0 * lj).ceil() as usize;
        domain += w * integrate_interval(
            |s| {
                integrate_interval(
                    |t| test.eval(graph, project_or_edge(spec, j, s, t)),
                    -eps,
                    eps,
                    1,
                    4,
                )
            },
            el,
            lj,
            panels,
            8,
        );
    }
    let jp = spec.junction_polygon();
    let tris = geometry::ear_clip(&jp).ok_or_else(|| Error::Geometry("junction polygon is not simple".into()))?;
    let rule = TriangleRule::degree5();
    let target = eps / 16.0;
    let mut pieces: Vec<[Point; 3]> = tris.iter().map(|t| [jp[t[0]], jp[t[1]], jp[t[2]]]).collect();
    while pieces.iter().map(max_edge).fold(0.0, f64::max) > target {
        pieces = pieces.iter().flat_map(split4).collect();
    }
    let failure = std::cell::RefCell::new(None);
    let mut junction = 0.0;
    for tri in &pieces {
        let v = rule.apply(tri, &|x: &Point, _: &[f64; 3]| match project_f_eps(x, spec) {
            Ok(p) => [test.eval(graph, p)],
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                [0.0]
            }
        });
        junction += v[0];
    }
    domain += w * junction;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let on_graph: f64 = (0..graph.n_edges())
        .map(|j| {
            let lj = graph.length(j);
            integrate_interval(|s| test.eval(graph, GraphPoint::on_edge(j, s)), 0.0, lj, (64.0 * lj).ceil() as usize, 8)
        })
        .sum();
    Ok((domain - on_graph).abs())
}

fn project_or_edge(spec: &ThinDomainSpec, j: usize, s: f64, t: f64) -> GraphPoint {
    project_f_eps(&spec.graph().from_local(j, s, t), spec).unwrap_or(GraphPoint::on_edge(j, s))
}

fn max_edge(t: &[Point; 3]) -> f64 {
    (t[1] - t[0]).norm().max((t[2] - t[1]).norm()).max((t[0] - t[2]).norm())
}

fn split4(t: &[Point; 3]) -> [[Point; 3]; 4] {
    let m = |a: &Point, b: &Point| Point::from((a.coords + b.coords) * 0.5);
    let (ab, bc, ca) = (m(&t[0], &t[1]), m(&t[1], &t[2]), m(&t[2], &t[0]));
    [[t[0], ab, ca], [ab, t[1], bc], [ca, bc, t[2]], [bc, ca, ab]]
}

/// `v(ε) ≈ v₀ + c ε^p` fitted exactly through the last three points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Extrapolation {
    pub limit: f64,
    pub rate: Option<f64>,
    /// False when the last differences are not of one sign and shrinking;
    /// `limit` is then the last value.
    pub reliable: bool,
}

pub fn richardson_extrapolate(values: &[f64], eps: &[f64]) -> Result<Extrapolation> {
    if values.len() != eps.len() || values.len() < 3 {
        return Err(Error::Domain("extrapolation needs at least three (eps, value) pairs".into()));
    }
    if eps.windows(2).any(|w| !(w[1] < w[0])) || eps.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::Domain("eps values must be positive and strictly decreasing".into()));
    }
    let n = values.len();
    let (v1, v2, v3) = (values[n - 3], values[n - 2], values[n - 1]);
    let (e1, e2, e3) = (eps[n - 3], eps[n - 2], eps[n - 1]);
    let fallback = Extrapolation { limit: v3, rate: None, reliable: false };
    let (d1, d2) = (v1 - v2, v2 - v3);
    if d1 == 0.0 || d2 == 0.0 || d1.signum() != d2.signum() {
        return Ok(fallback);
    }
    let q = d1 / d2;
    let ratio = |p: f64| (e1.powf(p) - e2.powf(p)) / (e2.powf(p) - e3.powf(p));
    let (mut lo, mut hi) = (1e-6, 50.0);
    if !(q > ratio(lo) && q < ratio(hi)) {
        return Ok(fallback);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ratio(mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let p = 0.5 * (lo + hi);
    let c = d1 / (e1.powf(p) - e2.powf(p));
    Ok(Extrapolation { limit: v3 - c * e3.powf(p), rate: Some(p), reliable: true })
}

/// Least-squares slope of `ln y` against `ln ε` over the last three points;
/// `None` if any of them is not positive and finite.
pub fn loglog_slope(eps: &[f64], values: &[f64]) -> Option<f64> {
    let n = values.len().min(eps.len());
    if n < 3 {
        return None;
    }
    let pts: Vec<(f64, f64)> = (n - 3..n).map(|i| (eps[i], values[i])).collect();
    if pts.iter().any(|&(e, v)| !(e > 0.0 && v > 0.0 && v.is_finite())) {
        return None;
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 3.0, ys.iter().sum::<f64>() / 3.0);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Graph function used for the recovery-sequence identities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryTest {
    /// `ψ_j(s) = 1 − s / l_j`.
    Linear,
    /// `ψ_j(s) = cos(π s / l_j)`.
    Cosine,
}

impl RecoveryTest {
    pub fn function(self, graph: &MetricStarGraph, samples: usize) -> GraphFunction {
        match self {
            RecoveryTest::Linear => GraphFunction::from_fn(graph, samples, |j, s| 1.0 - s / graph.length(j)),
            RecoveryTest::Cosine => {
                GraphFunction::from_fn(graph, samples, |j, s| (std::f64::consts::PI * s / graph.length(j)).cos())
            }
        }
    }
}

/// Input of a convergence sweep.
#[derive(Debug, Clone)]
pub struct ConvergenceConfig {
    pub graph: MetricStarGraph,
    pub eps0: f64,
    pub l: f64,
    pub a: Option<f64>,
    pub junction: JunctionShape,
    pub potential: PotentialSpec,
    /// Strictly decreasing.
    pub eps: Vec<f64>,
    /// Mesh size `h = h_factor · ε`.
    pub h_factor: f64,
    pub layers: Option<usize>,
    pub modes: usize,
    pub tol: f64,
    pub recovery_test: RecoveryTest,
    pub heat_time: f64,
    pub heat_modes: usize,
    pub threads: usize,
}

impl ConvergenceConfig {
    pub fn new(graph: MetricStarGraph, eps: Vec<f64>) -> Self {
        ConvergenceConfig {
            graph,
            eps0: 0.25,
            l: 1.0,
            a: None,
            junction: JunctionShape::Auto,
            potential: PotentialSpec::Zero,
            eps,
            h_factor: 0.25,
            layers: None,
            modes: 6,
            tol: 1e-8,
            recovery_test: RecoveryTest::Linear,
            heat_time: 0.5,
            heat_modes: 5,
            threads: 1,
        }
    }

    pub fn spec_at(&self, eps: f64) -> Result<ThinDomainSpec> {
        let spec = ThinDomainSpec::new(&self.graph, eps, self.eps0, self.l, self.junction.clone())?;
        match self.a {
            Some(a) => spec.with_a(a),
            None => Ok(spec),
        }
    }

    /// Checks every precondition of the sweep before any computation.
    pub fn validate(&self) -> Result<()> {
        if self.eps.len() < 3 {
            return Err(Error::Domain("a convergence sweep needs at least three eps values".into()));
        }
        if self.eps.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Domain("eps values must be strictly decreasing".into()));
        }
        if !(self.h_factor > 0.0 && self.h_factor <= 1.0) {
            return Err(Error::Domain(format!("h factor must lie in (0, 1], got {}", self.h_factor)));
        }
        if self.modes == 0 || self.heat_modes > self.modes {
            return Err(Error::Domain("need modes >= 1 and heat-trace modes <= modes".into()));
        }
        if !(self.tol > 0.0) || self.threads == 0 {
            return Err(Error::Domain("tolerance and thread count must be positive".into()));
        }
        for &e in &self.eps {
            self.spec_at(e)?;
        }
        self.potential.validate(&self.spec_at(self.eps[0])?)
    }
}

/// A block of graph eigenvalues of one multiplicity, indexed from `start`
/// in the ascending list with repetitions.
#[derive(Debug, Clone, Serialize)]
pub struct Cluster {
    pub start: usize,
    pub size: usize,
    pub lambda: f64,
}

/// Diagnostics of one eigen-cluster, aggregated so that they do not depend
/// on the basis chosen inside a degenerate eigenspace.
#[derive(Debug, Clone, Serialize)]
pub struct ClusterDiagnostics {
    pub cluster: usize,
    /// Sum over the cluster and over tubes.
    pub transversal_energy: f64,
    /// Sum over the cluster.
    pub junction_energy: f64,
    /// Root-sum-square of `ξ_ε` over the cluster.
    pub junction_mean: f64,
    /// Per edge, root-sum-square of `ξ_ε − g_j(2εl)` over the cluster.
    pub junction_continuity: Vec<f64>,
    /// Root-sum-square distance of the pushforwards from the graph eigenspace.
    pub pushforward_error: f64,
    /// Smallest `φ^K_ε(u) − Σ_j ∫|g_j'|²` over the cluster.
    pub liminf_slack: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RecoveryDiagnostics {
    pub phi_k: f64,
    pub phi_k_target: f64,
    pub phi_v: f64,
    pub phi_v_target: f64,
    /// `‖u^ε − Φ_ε ψ‖_{L²(dμ_ε)}`.
    pub strong_l2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub h: f64,
    pub n_dofs: usize,
    pub error: Option<String>,
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
    pub eigenvalue_errors: Vec<f64>,
    pub clusters: Vec<ClusterDiagnostics>,
    pub recovery: Option<RecoveryDiagnostics>,
    pub gh_errors: Vec<f64>,
    pub heat_trace: f64,
}

impl ConvergenceRow {
    fn failed(eps: f64, h: f64, e: &Error) -> Self {
        ConvergenceRow {
            eps,
            h,
            n_dofs: 0,
            error: Some(e.to_string()),
            eigenvalues: vec![],
            residuals: vec![],
            eigenvalue_errors: vec![],
            clusters: vec![],
            recovery: None,
            gh_errors: vec![],
            heat_trace: f64::NAN,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub c_v: f64,
    pub graph_eigenvalues: Vec<f64>,
    pub clusters: Vec<Cluster>,
    pub gh_tests: Vec<GhTest>,
    pub rows: Vec<ConvergenceRow>,
    /// Log-log slopes over the last three successful rows, per
    /// `diagnostic[index]` series.
    pub slopes: BTreeMap<String, Option<f64>>,
    pub extrapolated_eigenvalues: Vec<Extrapolation>,
    pub extrapolated_heat_trace: Option<Extrapolation>,
    pub notes: Vec<String>,
}

struct GraphSide {
    c_v: f64,
    pairs: Vec<GraphEigenpair>,
    lambdas: Vec<f64>,
    clusters: Vec<Cluster>,
    samples: usize,
}

fn graph_side(cfg: &ConvergenceConfig, c_v: f64) -> Result<GraphSide> {
    let graph = &cfg.graph;
    let scfg = SecularSolveConfig::for_count(cfg.modes + graph.n_edges(), graph);
    let pairs = secular_eigenvalues(graph, c_v, &scfg)?;
    let mut clusters = Vec::new();
    let mut lambdas = Vec::new();
    let mut used = Vec::new();
    for p in &pairs {
        if lambdas.len() >= cfg.modes {
            break;
        }
        clusters.push(Cluster { start: lambdas.len(), size: p.multiplicity, lambda: p.lambda });
        lambdas.extend(std::iter::repeat_n(p.lambda, p.multiplicity));
        used.push(p.clone());
    }
    if lambdas.len() < cfg.modes {
        return Err(Error::Numerics("graph spectrum search returned too few eigenvalues".into()));
    }
    Ok(GraphSide { c_v, pairs: used, lambdas, clusters, samples: scfg.samples })
}

fn heat_trace(thin: &[f64], graph: &[f64], t: f64, m: usize) -> f64 {
    thin.iter()
        .zip(graph)
        .take(m)
        .map(|(a, b)| ((-t * a).exp() - (-t * b).exp()).abs())
        .sum()
}

fn run_row(cfg: &ConvergenceConfig, side: &GraphSide, eps: f64) -> Result<ConvergenceRow> {
    let spec = cfg.spec_at(eps)?;
    let h = cfg.h_factor * eps;
    let mesh = triangulate(&spec, h, cfg.layers)?;
    let sys: FemSystem = fem2d::assemble(&mesh, &spec, &cfg.potential)?;
    let n_solve = side.lambdas.len();
    let eig = fem2d::solve_gevp(&sys, n_solve, cfg.tol)?;
    let errors: Vec<f64> = eig.eigenvalues.iter().zip(&side.lambdas).map(|(a, b)| (a - b).abs()).collect();

    let fields: Vec<DiscreteField> = eig.eigenvectors.iter().map(|v| DiscreteField { values: v.clone() }).collect();
    let n_edges = cfg.graph.n_edges();
    let el = eps * spec.l();
    let mut clusters = Vec::with_capacity(side.clusters.len());
    for (ci, (cl, pair)) in side.clusters.iter().zip(&side.pairs).enumerate() {
        let mut d = ClusterDiagnostics {
            cluster: ci,
            transversal_energy: 0.0,
            junction_energy: 0.0,
            junction_mean: 0.0,
            junction_continuity: vec![0.0; n_edges],
            pushforward_error: 0.0,
            liminf_slack: f64::INFINITY,
        };
        for u in &fields[cl.start..cl.start + cl.size] {
            for j in 0..n_edges {
                d.transversal_energy += transversal_energy(u, &spec, &mesh, j)?;
            }
            let ji = junction_integrals(u, &spec, &mesh, spec.a())?;
            d.junction_energy += ji.gradient_energy;
            let xi = ji.mean_integral / ji.area;
            d.junction_mean += xi * xi;
            for j in 0..n_edges {
                let trace = pushforward_trace(u, &spec, &mesh, j, 2.0 * el)?;
                d.junction_continuity[j] += (xi - trace).powi(2);
            }
            let g = pushforward(u, &spec, &mesh, side.samples)?;
            let mut residual = g.clone();
            for psi in &pair.eigenfunctions {
                let c = l2_inner(&g, psi, &cfg.graph)?.re;
                residual = residual.axpy(-c, &psi.resample(side.samples));
            }
            d.pushforward_error += l2_inner(&residual, &residual, &cfg.graph)?.re;
            let phi_k = sys.k.quadratic(&u.values);
            d.liminf_slack = d.liminf_slack.min(phi_k - pushforward_kinetic(u, &spec, &mesh)?);
        }
        d.junction_mean = d.junction_mean.sqrt();
        d.pushforward_error = d.pushforward_error.max(0.0).sqrt();
        d.junction_continuity.iter_mut().for_each(|v| *v = v.sqrt());
        clusters.push(d);
    }

    let psi = cfg.recovery_test.function(&cfg.graph, DEFAULT_SAMPLES);
    let rec = recovery_sequence(&psi, &spec, &mesh)?;
    let pulled = pullback(&psi, &spec, &mesh)?;
    let phi = eval_phi_eps(&rec, &sys)?;
    let diff: Vec<f64> = rec.values.iter().zip(&pulled.values).map(|(a, b)| a - b).collect();
    let recovery = RecoveryDiagnostics {
        phi_k: phi.phi_k,
        phi_k_target: recovery_kinetic_target(&psi, &spec),
        phi_v: phi.phi_v,
        phi_v_target: side.c_v * psi.vertex_value().norm_sqr(),
        strong_l2: sys.m.quadratic(&diff).max(0.0).sqrt(),
    };
    let gh_errors = GhTest::ALL.iter().map(|&t| gh_measure_error(&spec, t)).collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceRow {
        eps,
        h,
        n_dofs: mesh.n_nodes(),
        error: None,
        heat_trace: heat_trace(&eig.eigenvalues, &side.lambdas, cfg.heat_time, cfg.heat_modes),
        eigenvalues: eig.eigenvalues,
        residuals: eig.residuals,
        eigenvalue_errors: errors,
        clusters,
        recovery: Some(recovery),
        gh_errors,
    })
}

/// Sweeps `ε`, computing thin spectra and diagnostics per row (rows run
/// concurrently on `cfg.threads` threads; a failing row is recorded, not
/// propagated), then fits slopes and extrapolates to `ε = 0`.
pub fn run_convergence(cfg: &ConvergenceConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let c_v = compute_c_v(&cfg.potential, &cfg.spec_at(cfg.eps[0])?)?;
    let side = graph_side(cfg, c_v)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut rows: Vec<ConvergenceRow> = pool.install(|| {
        cfg.eps
            .par_iter()
            .map(|&e| run_row(cfg, &side, e).unwrap_or_else(|err| ConvergenceRow::failed(e, cfg.h_factor * e, &err)))
            .collect()
    });
    rows.sort_by(|a, b| b.eps.total_cmp(&a.eps));

    let mut report = ConvergenceReport {
        c_v,
        graph_eigenvalues: side.lambdas.clone(),
        clusters: side.clusters.clone(),
        gh_tests: GhTest::ALL.to_vec(),
        rows,
        slopes: BTreeMap::new(),
        extrapolated_eigenvalues: vec![],
        extrapolated_heat_trace: None,
        notes: vec![
            "slope thresholds are engineering choices; the convergence theory states no rates".into(),
            "slopes and extrapolations use the last three successful rows".into(),
        ],
    };
    let series = report.series();
    let ok: Vec<&ConvergenceRow> = report.rows.iter().filter(|r| r.is_ok()).collect();
    let eps_ok: Vec<f64> = ok.iter().map(|r| r.eps).collect();
    for ((name, idx), values) in &series {
        if values.len() == eps_ok.len() {
            report.slopes.insert(format!("{name}[{idx}]"), loglog_slope(&eps_ok, values));
        }
    }
    if eps_ok.len() >= 3 {
        report.extrapolated_eigenvalues = (0..cfg.modes)
            .map(|m| {
                let vals: Vec<f64> = ok.iter().map(|r| r.eigenvalues[m]).collect();
                richardson_extrapolate(&vals, &eps_ok)
            })
            .collect::<Result<_>>()?;
        let heat: Vec<f64> = ok.iter().map(|r| r.heat_trace).collect();
        report.extrapolated_heat_trace = Some(richardson_extrapolate(&heat, &eps_ok)?);
    }
    Ok(report)
}

impl ConvergenceReport {
    /// Every scalar diagnostic of a row as `(name, index, value)`.
    fn row_entries(&self, row: &ConvergenceRow) -> Vec<(String, usize, f64)> {
        let mut out = Vec::new();
        if let Some(e) = &row.error {
            let _ = e;
            out.push(("failed".to_string(), 0, f64::NAN));
            return out;
        }
        let n = self.graph_eigenvalues.len();
        for m in 0..n {
            out.push(("lambda".into(), m, row.eigenvalues[m]));
            out.push(("lambda_error".into(), m, row.eigenvalue_errors[m]));
            out.push(("residual".into(), m, row.residuals[m]));
        }
        for c in &row.clusters {
            out.push(("transversal_energy".into(), c.cluster, c.transversal_energy));
            out.push(("junction_energy".into(), c.cluster, c.junction_energy));
            out.push(("junction_mean".into(), c.cluster, c.junction_mean));
            for (j, v) in c.junction_continuity.iter().enumerate() {
                out.push((format!("junction_continuity_edge{j}"), c.cluster, *v));
            }
            out.push(("pushforward_error".into(), c.cluster, c.pushforward_error));
            out.push(("liminf_slack".into(), c.cluster, c.liminf_slack));
        }
        if let Some(r) = &row.recovery {
            out.push(("recovery_phi_k".into(), 0, r.phi_k));
            out.push(("recovery_phi_k_target".into(), 0, r.phi_k_target));
            out.push(("recovery_phi_k_error".into(), 0, (r.phi_k - r.phi_k_target).abs()));
            out.push(("recovery_phi_v".into(), 0, r.phi_v));
            out.push(("recovery_phi_v_target".into(), 0, r.phi_v_target));
            out.push(("recovery_phi_v_error".into(), 0, (r.phi_v - r.phi_v_target).abs()));
            out.push(("recovery_strong_l2".into(), 0, r.strong_l2));
        }
        for (i, v) in row.gh_errors.iter().enumerate() {
            out.push(("gh_error".into(), i, *v));
        }
        out.push(("heat_trace".into(), 0, row.heat_trace));
        out
    }

    /// Values per `(diagnostic, index)` over the successful rows, in row order.
    pub fn series(&self) -> BTreeMap<(String, usize), Vec<f64>> {
        let mut map: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
        for row in self.rows.iter().filter(|r| r.is_ok()) {
            for (name, idx, v) in self.row_entries(row) {
                map.entry((name, idx)).or_default().push(v);
            }
        }
        map
    }

    pub fn series_of(&self, name: &str, index: usize) -> Vec<f64> {
        self.series().remove(&(name.to_string(), index)).unwrap_or_default()
    }

    pub fn eps_ok(&self) -> Vec<f64> {
        self.rows.iter().filter(|r| r.is_ok()).map(|r| r.eps).collect()
    }

    /// `eps,h,diagnostic,index,value`, one line per row and diagnostic.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("eps,h,diagnostic,index,value\n");
        for row in &self.rows {
            for (name, idx, v) in self.row_entries(row) {
                let _ = writeln!(s, "{:e},{:e},{},{},{:e}", row.eps, row.h, name, idx, v);
            }
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(format!("report serialization: {e}")))
    }

    /// One two-column `eps value` file per `(diagnostic, index)` series.
    pub fn plot_data(&self) -> Vec<(String, String)> {
        let eps = self.eps_ok();
        self.series()
            .into_iter()
            .map(|((name, idx), values)| {
                let mut body = String::from("# eps value\n");
                for (e, v) in eps.iter().zip(&values) {
                    let _ = writeln!(body, "{e:e} {v:e}");
                }
                (format!("{name}_{idx}.dat"), body)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thin_domain::measure_total;
    use std::f64::consts::PI;

    fn straight(eps: f64) -> ThinDomainSpec {
        let g = MetricStarGraph::new(&[1.0, 1.0], &[0.0, PI]).unwrap();
        ThinDomainSpec::new(&g, eps, 0.25, 1.0, JunctionShape::Auto).unwrap()
    }

    fn star3(eps: f64) -> ThinDomainSpec {
        let g = MetricStarGraph::symmetric(3, 1.0).unwrap();
        ThinDomainSpec::new(&g, eps, 0.25, 1.0, JunctionShape::Auto).unwrap()
    }

    #[test]
    fn richardson_examples() {
        let r = richardson_extrapolate(&[1.2, 1.1, 1.05], &[0.4, 0.2, 0.1]).unwrap();
        assert!((r.limit - 1.0).abs() < 1e-10 && (r.rate.unwrap() - 1.0).abs() < 1e-10 && r.reliable);
        let c = richardson_extrapolate(&[3.0, 3.0, 3.0], &[0.4, 0.2, 0.1]).unwrap();
        assert_eq!((c.limit, c.rate, c.reliable), (3.0, None, false));
        let eps = [0.3, 0.17, 0.08];
        let vals: Vec<f64> = eps.iter().map(|e: &f64| 2.5 - 0.7 * e.powi(2)).collect();
        let q = richardson_extrapolate(&vals, &eps).unwrap();
        assert!((q.rate.unwrap() - 2.0).abs() < 0.05 && (q.limit - 2.5).abs() < 1e-9);
        let bad = richardson_extrapolate(&[1.0, 1.2, 1.1], &[0.4, 0.2, 0.1]).unwrap();
        assert!(!bad.reliable && bad.limit == 1.1);
        assert!(richardson_extrapolate(&[1.0, 2.0], &[0.2, 0.1]).is_err());
    }

    #[test]
    fn slope_fit() {
        let eps = [0.2, 0.1, 0.05, 0.025];
        let v: Vec<f64> = eps.iter().map(|e: &f64| 3.0 * e.powf(1.7)).collect();
        assert!((loglog_slope(&eps, &v).unwrap() - 1.7).abs() < 1e-12);
        assert!(loglog_slope(&eps, &[1.0, 0.0, 1.0, 1.0]).is_none());
    }

    #[test]
    fn pullback_and_pushforward_of_simple_functions() {
        let spec = straight(0.1);
        let mesh = triangulate(&spec, 0.025, None).unwrap();
        let g = spec.graph().clone();
        let one = GraphFunction::constant(&g, 257, 1.0);
        let u1 = pullback(&one, &spec, &mesh).unwrap();
        assert!(u1.values.iter().all(|&v| v == 1.0));
        let back = pushforward(&u1, &spec, &mesh, 257).unwrap();
        assert!((back.vertex_value().re - 1.0).abs() < 1e-12);
        assert!((0..2).all(|j| back.edge_values(j).iter().all(|z| (z.re - 1.0).abs() < 1e-12)));

        let lin = GraphFunction::from_fn(&g, 1025, |_, s| s);
        let u = pullback(&lin, &spec, &mesh).unwrap();
        for (x, v) in mesh.nodes.iter().zip(&u.values) {
            if x.x.abs() >= 0.1 - 1e-12 {
                assert!((v - x.x.abs()).abs() < 1e-12);
            }
        }
        let pf = pushforward(&u, &spec, &mesh, 1025).unwrap();
        for j in 0..2 {
            for (s, z) in pf.grid(j).iter().zip(pf.edge_values(j)) {
                if *s > 0.1 {
                    assert!((z.re - s).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn pullback_norm_tends_to_graph_norm() {
        let g = MetricStarGraph::symmetric(3, 1.0).unwrap();
        let psi = GraphFunction::from_fn(&g, 1025, |j, s| (1.0 + j as f64) * s + 1.0);
        let graph_norm2 = l2_inner(&psi, &psi, &g).unwrap().re;
        let eps = [0.2, 0.1, 0.05, 0.025];
        let errs: Vec<f64> = eps
            .iter()
            .map(|&e| {
                let spec = star3(e);
                let mesh = triangulate(&spec, e / 4.0, None).unwrap();
                let sys = fem2d::assemble(&mesh, &spec, &PotentialSpec::Zero).unwrap();
                let u = pullback(&psi, &spec, &mesh).unwrap();
                (sys.m.quadratic(&u.values) - graph_norm2).abs()
            })
            .collect();
        assert!(loglog_slope(&eps, &errs).unwrap() >= 0.9, "{errs:?}");
    }

    #[test]
    fn junction_mean_and_energies() {
        let spec = star3(0.1);
        let mesh = triangulate(&spec, 0.025, None).unwrap();
        let c = DiscreteField::constant(&mesh, 2.5);
        assert!((junction_mean(&c, &spec, &mesh, spec.a()).unwrap() - 2.5).abs() < 1e-12);
        assert!(junction_energy(&c, &spec, &mesh, spec.a()).unwrap() < 1e-20);
        assert!(transversal_energy(&c, &spec, &mesh, 1).unwrap() < 1e-20);
        assert!(junction_mean(&c, &spec, &mesh, 0.5).is_err());
        // Region area: |J_ε| + N (a − l) ε · 2ε.
        let ji = junction_integrals(&c, &spec, &mesh, spec.a()).unwrap();
        let expected = spec.junction_area() + 3.0 * (spec.a() - spec.l()) * 0.1 * 0.2;
        assert!((ji.area - expected).abs() < 1e-12);
    }

    #[test]
    fn transversal_energy_of_linear_field() {
        // u = x·e_⊥ on tube 0 has |∇_⊥ u| = 1, so the value is 2 l_j ε².
        let spec = star3(0.1);
        let mesh = triangulate(&spec, 0.025, None).unwrap();
        let n = crate::thin_domain::transversal_direction(spec.graph(), 0);
        let u = DiscreteField::from_fn(&mesh, |x| x.coords.dot(&n));
        let v = transversal_energy(&u, &spec, &mesh, 0).unwrap();
        assert!((v - 2.0 * 1.0 * 0.01).abs() < 1e-10, "{v}");
    }

    #[test]
    fn recovery_identities() {
        // ψ_j = 1 − s on two unit edges, ε = 0.1: φ^K = 2 / 0.9.
        let spec = straight(0.1);
        let h = 0.025;
        let mesh = triangulate(&spec, h, None).unwrap();
        let psi = RecoveryTest::Linear.function(spec.graph(), DEFAULT_SAMPLES);
        let target = recovery_kinetic_target(&psi, &spec);
        assert!((target - 2.0 / 0.9).abs() < 1e-10);
        let v = PotentialSpec::CosineBump { v0: 1.0, rho: 0.5 };
        let sys = fem2d::assemble(&mesh, &spec, &v).unwrap();
        let u = recovery_sequence(&psi, &spec, &mesh).unwrap();
        let phi = eval_phi_eps(&u, &sys).unwrap();
        assert!((phi.phi_k - target).abs() <= 10.0 * h * h);
        let c_v = compute_c_v(&v, &spec).unwrap();
        assert!((phi.phi_v - c_v).abs() < 1e-6);
        let constant = GraphFunction::constant(spec.graph(), 65, 4.0);
        let uc = recovery_sequence(&constant, &spec, &mesh).unwrap();
        assert!(uc.values.iter().all(|&x| x == 4.0));
        let broken = GraphFunction::constant(spec.graph(), 65, 1.0).with_vertex(Complex64::new(2.0, 0.0));
        assert!(matches!(recovery_sequence(&broken, &spec, &mesh), Err(Error::Domain(_))));
    }

    #[test]
    fn liminf_inequality_for_arbitrary_fields() {
        use rand::{Rng, SeedableRng};
        let spec = star3(0.1);
        let mesh = triangulate(&spec, 0.025, None).unwrap();
        let sys = fem2d::assemble(&mesh, &spec, &PotentialSpec::Zero).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let u = DiscreteField { values: (0..mesh.n_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect() };
            let lhs = pushforward_kinetic(&u, &spec, &mesh).unwrap();
            assert!(lhs <= sys.k.quadratic(&u.values) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn gh_measure_errors_decay() {
        let eps = [0.2, 0.1, 0.05, 0.025];
        for test in GhTest::ALL {
            let errs: Vec<f64> = eps.iter().map(|&e| gh_measure_error(&star3(e), test).unwrap()).collect();
            assert!(loglog_slope(&eps, &errs).unwrap() >= 0.9, "{test:?}: {errs:?}");
        }
        // For ψ ≡ 1 the error is |μ_ε(Ω_ε) − Σ l_j| exactly.
        let spec = star3(0.1);
        let direct = (measure_total(&spec) - 3.0).abs();
        let gh = gh_measure_error(&spec, GhTest::One).unwrap();
        assert!((gh - direct).abs() < 1e-12, "{gh} vs {direct}");
    }
}
