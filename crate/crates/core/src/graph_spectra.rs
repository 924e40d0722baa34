//! Spectrum of the star-graph operator `-ψ''` with Neumann ends and the
//! delta coupling `Σ_j ψ_j'(0+) = C_V ψ(O)` at the junction.
//!
//! Every eigenfunction has the form `ψ_j(s) = A_j cos(k(l_j - s))`, which
//! already satisfies the Neumann condition at `s = l_j`. Two families occur:
//!
//! * junction value nonzero: `A_j = ψ(O) / cos(k l_j)` and `k` solves
//!   `F(k) = Σ_j k tan(k l_j) - C_V = 0`. `F` increases strictly between
//!   consecutive poles of the tangents, so each such interval holds exactly
//!   one root;
//! * junction value zero: `cos(k l_j) = 0` on a set `S` of at least two
//!   edges at once, giving an eigenspace of dimension `|S| - 1`.
//!
//! [`graph_fem_eigenvalues`] discretizes the quadratic form directly and
//! serves as an independent check of the vertex condition.

use std::f64::consts::PI;

use crate::eigen::{solve_gevp, EigenOptions};
use crate::error::{Error, Result};
use crate::sparse::{Ordering, SparseSymMatrix};
use crate::star_graph::{GraphFunction, MetricStarGraph, DEFAULT_SAMPLES};

#[derive(Debug, Clone, PartialEq)]
pub struct SecularSolveConfig {
    pub max_eigenvalues: usize,
    /// Search bound on `k = √λ`.
    pub k_max: f64,
    pub bracket_tol: f64,
    /// Poles closer than this are treated as one, and brackets stay this
    /// far from every pole.
    pub pole_guard: f64,
    pub samples: usize,
}

impl SecularSolveConfig {
    /// Configuration whose `k_max` is large enough to contain `count`
    /// eigenvalues of `graph` (counted with multiplicity).
    pub fn for_count(count: usize, graph: &MetricStarGraph) -> Self {
        let n = graph.n_edges() as f64;
        SecularSolveConfig {
            max_eigenvalues: count,
            k_max: PI * (count as f64 + n + 2.0) / graph.min_length(),
            bracket_tol: 1e-12,
            pole_guard: 1e-9,
            samples: DEFAULT_SAMPLES,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.k_max > 0.0) || !(self.bracket_tol > 0.0) || !(self.pole_guard > 0.0) {
            return Err(Error::Domain(
                "secular solver needs k_max > 0 and positive tolerances".into(),
            ));
        }
        if self.samples < 3 {
            return Err(Error::Domain("eigenfunctions need at least 3 samples per edge".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Nonzero junction value, root of the secular function.
    Secular,
    /// Junction value zero, simultaneous zeros of `cos(k l_j)`.
    VanishingJunction,
}

/// Closed-form eigenfunction `ψ_j(s) = amplitudes[j] cos(k (l_j - s))`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticMode {
    pub k: f64,
    pub amplitudes: Vec<f64>,
    pub vertex: f64,
}

impl AnalyticMode {
    pub fn value(&self, graph: &MetricStarGraph, j: usize, s: f64) -> f64 {
        self.amplitudes[j] * (self.k * (graph.length(j) - s)).cos()
    }

    /// Derivative along edge `j`.
    pub fn derivative(&self, graph: &MetricStarGraph, j: usize, s: f64) -> f64 {
        self.amplitudes[j] * self.k * (self.k * (graph.length(j) - s)).sin()
    }

    /// `Σ_j ψ_j'(0) - C_V ψ(O)`.
    pub fn kirchhoff_residual(&self, graph: &MetricStarGraph, c_v: f64) -> f64 {
        (0..graph.n_edges())
            .map(|j| self.derivative(graph, j, 0.0))
            .sum::<f64>()
            - c_v * self.vertex
    }

    /// `max_j |ψ_j(0) - ψ(O)|`.
    pub fn continuity_residual(&self, graph: &MetricStarGraph) -> f64 {
        (0..graph.n_edges())
            .map(|j| (self.value(graph, j, 0.0) - self.vertex).abs())
            .fold(0.0, f64::max)
    }

    pub fn sample(&self, graph: &MetricStarGraph, samples: usize) -> GraphFunction {
        GraphFunction::from_fn(graph, samples, |j, s| self.value(graph, j, s))
            .with_vertex(self.vertex.into())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphEigenpair {
    pub lambda: f64,
    pub k: f64,
    pub multiplicity: usize,
    pub branch: Branch,
    /// L²(G)-orthonormal basis of the eigenspace, in closed form.
    pub modes: Vec<AnalyticMode>,
    /// The same basis sampled on the edges.
    pub eigenfunctions: Vec<GraphFunction>,
}

impl GraphEigenpair {
    /// Worst vertex-condition residual over the eigenspace basis.
    pub fn vertex_residual(&self, graph: &MetricStarGraph, c_v: f64) -> f64 {
        self.modes
            .iter()
            .map(|m| m.kirchhoff_residual(graph, c_v).abs().max(m.continuity_residual(graph)))
            .fold(0.0, f64::max)
    }
}

/// `F(k) = Σ_j k tan(k l_j) - C_V`.
pub fn secular_function(graph: &MetricStarGraph, c_v: f64, k: f64) -> f64 {
    graph.lengths().iter().map(|l| k * (k * l).tan()).sum::<f64>() - c_v
}

struct Pole {
    k: f64,
    edges: Vec<usize>,
}

fn poles(graph: &MetricStarGraph, k_max: f64, guard: f64) -> Vec<Pole> {
    let mut raw: Vec<(f64, usize)> = Vec::new();
    for (j, &l) in graph.lengths().iter().enumerate() {
        let mut m = 0usize;
        loop {
            let k = (m as f64 + 0.5) * PI / l;
            if k > k_max {
                break;
            }
            raw.push((k, j));
            m += 1;
        }
    }
    raw.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut merged: Vec<Pole> = Vec::new();
    for (k, j) in raw {
        match merged.last_mut() {
            Some(p) if k - p.k <= guard => p.edges.push(j),
            _ => merged.push(Pole { k, edges: vec![j] }),
        }
    }
    merged
}

fn bisect(graph: &MetricStarGraph, c_v: f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let fa = secular_function(graph, c_v, a);
    let fb = secular_function(graph, c_v, b);
    if !(fa < 0.0 && fb > 0.0) {
        return Err(Error::Solver(format!(
            "no sign change of the secular function on [{lo}, {hi}]: F = ({fa:.3e}, {fb:.3e})"
        )));
    }
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if secular_function(graph, c_v, mid) < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

fn secular_mode(graph: &MetricStarGraph, k: f64) -> AnalyticMode {
    if k == 0.0 {
        let c = 1.0 / graph.total_length().sqrt();
        return AnalyticMode {
            k,
            amplitudes: vec![c; graph.n_edges()],
            vertex: c,
        };
    }
    let amps: Vec<f64> = graph.lengths().iter().map(|l| 1.0 / (k * l).cos()).collect();
    let norm2: f64 = amps
        .iter()
        .zip(graph.lengths())
        .map(|(a, l)| a * a * (l / 2.0 + (2.0 * k * l).sin() / (4.0 * k)))
        .sum();
    let c = 1.0 / norm2.sqrt();
    AnalyticMode {
        k,
        amplitudes: amps.iter().map(|a| a * c).collect(),
        vertex: c,
    }
}

/// Orthonormal basis of `{A : Σ_{j∈S} A_j sin(k l_j) = 0}` under the
/// weight `l_j / 2` (the edge norm of `cos(k(l_j - s))` when `cos(k l_j) = 0`).
fn vanishing_modes(graph: &MetricStarGraph, k: f64, edges: &[usize]) -> Vec<AnalyticMode> {
    let n = graph.n_edges();
    let sign: Vec<f64> = edges.iter().map(|&j| (k * graph.length(j)).sin()).collect();
    let weight = |a: &[f64], b: &[f64]| -> f64 {
        (0..n).map(|j| a[j] * b[j] * graph.length(j) / 2.0).sum()
    };
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for t in 1..edges.len() {
        let mut v = vec![0.0; n];
        v[edges[0]] = 1.0 / sign[0];
        v[edges[t]] = -1.0 / sign[t];
        for b in &basis {
            let c = weight(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let nrm = weight(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= nrm);
        basis.push(v);
    }
    basis
        .into_iter()
        .map(|amplitudes| AnalyticMode {
            k,
            amplitudes,
            vertex: 0.0,
        })
        .collect()
}

/// Ascending eigenvalues `λ = k²` with multiplicities and orthonormal
/// eigenfunctions, up to `cfg.max_eigenvalues` (counted with multiplicity)
/// or `cfg.k_max`, whichever comes first.
pub fn secular_eigenvalues(
    graph: &MetricStarGraph,
    c_v: f64,
    cfg: &SecularSolveConfig,
) -> Result<Vec<GraphEigenpair>> {
    if !(c_v >= 0.0) {
        return Err(Error::Domain(format!(
            "C_V = {c_v} is negative; the form would not be bounded below by zero"
        )));
    }
    cfg.validate()?;
    let poles = poles(graph, cfg.k_max, cfg.pole_guard);
    let mut found: Vec<(f64, Branch, Vec<AnalyticMode>)> = Vec::new();

    if c_v == 0.0 {
        found.push((0.0, Branch::Secular, vec![secular_mode(graph, 0.0)]));
    }
    // Brackets between consecutive poles; the first one starts at k = 0.
    let mut lo_edge = 0.0;
    for (i, pole) in poles.iter().enumerate() {
        let first = i == 0;
        if !(first && c_v == 0.0) {
            let lo = if first { 0.0 } else { lo_edge + cfg.pole_guard };
            let hi = pole.k - cfg.pole_guard;
            if hi > lo {
                let k = bisect(graph, c_v, lo, hi, cfg.bracket_tol)?;
                found.push((k, Branch::Secular, vec![secular_mode(graph, k)]));
            }
        }
        if pole.edges.len() >= 2 {
            found.push((
                pole.k,
                Branch::VanishingJunction,
                vanishing_modes(graph, pole.k, &pole.edges),
            ));
        }
        lo_edge = pole.k;
    }
    // Tail interval past the last pole, if its root lies below k_max.
    let lo = if poles.is_empty() { 0.0 } else { lo_edge + cfg.pole_guard };
    if (c_v > 0.0 || !poles.is_empty()) && secular_function(graph, c_v, cfg.k_max) > 0.0 && cfg.k_max > lo {
        let k = bisect(graph, c_v, lo, cfg.k_max, cfg.bracket_tol)?;
        found.push((k, Branch::Secular, vec![secular_mode(graph, k)]));
    }

    found.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut pairs: Vec<GraphEigenpair> = Vec::new();
    for (k, branch, modes) in found {
        if let Some(last) = pairs.last_mut() {
            if k - last.k <= cfg.pole_guard {
                last.modes.extend(modes);
                last.multiplicity = last.modes.len();
                continue;
            }
        }
        pairs.push(GraphEigenpair {
            lambda: k * k,
            k,
            multiplicity: modes.len(),
            branch,
            modes,
            eigenfunctions: Vec::new(),
        });
    }
    let mut total = 0;
    let mut out = Vec::new();
    for mut p in pairs {
        if total >= cfg.max_eigenvalues {
            break;
        }
        total += p.multiplicity;
        p.eigenfunctions = p.modes.iter().map(|m| m.sample(graph, cfg.samples)).collect();
        out.push(p);
    }
    Ok(out)
}

/// Eigenvalues repeated according to multiplicity.
pub fn expand_multiplicities(pairs: &[GraphEigenpair]) -> Vec<f64> {
    pairs
        .iter()
        .flat_map(|p| std::iter::repeat_n(p.lambda, p.multiplicity))
        .collect()
}

/// Orthonormal eigenfunctions for the eigenvalue `k²`, where `k` must match
/// a root to within ten times `cfg.bracket_tol` (relative to `max(1, k)`).
pub fn graph_eigenfunction(
    graph: &MetricStarGraph,
    c_v: f64,
    k: f64,
    cfg: &SecularSolveConfig,
) -> Result<Vec<GraphFunction>> {
    let search = SecularSolveConfig {
        max_eigenvalues: usize::MAX,
        k_max: k * 1.01 + 1.0,
        ..cfg.clone()
    };
    let pairs = secular_eigenvalues(graph, c_v, &search)?;
    let tol = 10.0 * cfg.bracket_tol * k.max(1.0);
    pairs
        .into_iter()
        .find(|p| (p.k - k).abs() <= tol)
        .map(|p| p.eigenfunctions)
        .ok_or_else(|| Error::Domain(format!("k = {k} is not an eigenvalue root (tolerance {tol:.1e})")))
}

/// P1 stiffness and mass for the graph form with `elements[j]` equal
/// elements on edge `j`. The junction is the last degree of freedom, so the
/// matrices have arrow shape and factor without fill in natural order.
pub fn graph_fem_matrices(
    graph: &MetricStarGraph,
    c_v: f64,
    elements: &[usize],
) -> (SparseSymMatrix, SparseSymMatrix) {
    let n_int: usize = elements.iter().sum();
    let n = n_int + 1;
    let junction = n - 1;
    let mut offsets = Vec::with_capacity(elements.len());
    let mut acc = 0;
    for &e in elements {
        offsets.push(acc);
        acc += e;
    }
    // Node i (1..=nel) of edge j sits at s = i h_j; node 0 is the junction.
    let dof = |j: usize, i: usize| if i == 0 { junction } else { offsets[j] + i - 1 };
    let mut pairs = Vec::with_capacity(n_int);
    for (j, &nel) in elements.iter().enumerate() {
        for i in 0..nel {
            pairs.push((dof(j, i), dof(j, i + 1)));
        }
    }
    let mut k = SparseSymMatrix::with_pattern(n, pairs.clone());
    let mut m = SparseSymMatrix::with_pattern(n, pairs);
    for (j, &nel) in elements.iter().enumerate() {
        let h = graph.length(j) / nel as f64;
        for i in 0..nel {
            let (a, b) = (dof(j, i), dof(j, i + 1));
            k.add(a, a, 1.0 / h);
            k.add(b, b, 1.0 / h);
            k.add(a, b, -1.0 / h);
            m.add(a, a, h / 3.0);
            m.add(b, b, h / 3.0);
            m.add(a, b, h / 6.0);
        }
    }
    k.add(junction, junction, c_v);
    (k, m)
}

fn fem_elements(graph: &MetricStarGraph, h: f64) -> Result<Vec<usize>> {
    if !(h > 0.0) || !(h < graph.min_length() / 4.0) {
        return Err(Error::Domain(format!(
            "graph mesh size h = {h} must satisfy 0 < h < min l_j / 4 = {}",
            graph.min_length() / 4.0
        )));
    }
    Ok(graph.lengths().iter().map(|l| (l / h).ceil() as usize).collect())
}

/// The `count` smallest eigenvalues of the P1 discretization on a mesh of
/// size at most `h`.
pub fn graph_fem_eigenvalues(graph: &MetricStarGraph, c_v: f64, h: f64, count: usize) -> Result<Vec<f64>> {
    let elements = fem_elements(graph, h)?;
    graph_fem_on_elements(graph, c_v, &elements, count)
}

fn graph_fem_on_elements(graph: &MetricStarGraph, c_v: f64, elements: &[usize], count: usize) -> Result<Vec<f64>> {
    let (k, m) = graph_fem_matrices(graph, c_v, elements);
    let opts = EigenOptions::new(count)
        .with_ordering(Ordering::Natural)
        .with_block(graph.n_edges().max(4))
        .with_tol(1e-6);
    Ok(solve_gevp(&k, &m, &opts)?.eigenvalues)
}

/// Graph FEM eigenvalues at mesh sizes `h` and `h/2` (exactly halved per
/// edge), combined by second-order Richardson extrapolation.
pub fn graph_fem_extrapolated(graph: &MetricStarGraph, c_v: f64, h: f64, count: usize) -> Result<Vec<f64>> {
    let coarse_el = fem_elements(graph, h)?;
    let fine_el: Vec<usize> = coarse_el.iter().map(|e| 2 * e).collect();
    let coarse = graph_fem_on_elements(graph, c_v, &coarse_el, count)?;
    let fine = graph_fem_on_elements(graph, c_v, &fine_el, count)?;
    Ok(coarse.iter().zip(&fine).map(|(c, f)| (4.0 * f - c) / 3.0).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::star_graph::l2_inner;

    fn star3() -> MetricStarGraph {
        MetricStarGraph::symmetric(3, 1.0).unwrap()
    }

    #[test]
    fn equal_three_star_kirchhoff_spectrum() {
        let g = star3();
        let pairs = secular_eigenvalues(&g, 0.0, &SecularSolveConfig::for_count(8, &g)).unwrap();
        let want = [(0.0, 1), (PI / 2.0, 2), (PI, 1), (1.5 * PI, 2), (2.0 * PI, 1)];
        for ((k, mult), p) in want.iter().zip(&pairs) {
            assert!((p.lambda - k * k).abs() < 1e-10, "{} vs {}", p.lambda, k * k);
            assert_eq!(p.multiplicity, *mult);
        }
    }

    #[test]
    fn straight_star_is_an_interval() {
        let g = MetricStarGraph::new(&[1.0, 1.0], &[0.0, PI]).unwrap();
        let vals = expand_multiplicities(&secular_eigenvalues(&g, 0.0, &SecularSolveConfig::for_count(6, &g)).unwrap());
        for (m, v) in vals.iter().take(6).enumerate() {
            assert!((v - (m as f64 * PI / 2.0).powi(2)).abs() < 1e-10);
        }
    }

    #[test]
    fn single_edge_delta_transcendental() {
        let g = MetricStarGraph::new(&[1.0], &[0.0]).unwrap();
        let pairs = secular_eigenvalues(&g, 1.0, &SecularSolveConfig::for_count(3, &g)).unwrap();
        let k = pairs[0].k;
        assert!((k * k.tan() - 1.0).abs() < 1e-10);
        assert!((k - 0.86033).abs() < 1e-4);
        // Independent bracket on (0, π/2) by plain bisection.
        let (mut a, mut b) = (0.0f64, PI / 2.0 - 1e-9);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m * m.tan() < 1.0 { a = m } else { b = m }
        }
        assert!((k - a).abs() < 1e-11);
    }

    #[test]
    fn eigenfunctions_are_orthonormal_and_satisfy_vertex_condition() {
        let g = MetricStarGraph::new(&[1.0, 1.3, 0.7, 1.0], &[0.0, 1.0, 2.5, 4.0]).unwrap();
        for c_v in [0.0, 2.5] {
            let pairs = secular_eigenvalues(&g, c_v, &SecularSolveConfig::for_count(10, &g)).unwrap();
            let fns: Vec<&GraphFunction> = pairs.iter().flat_map(|p| p.eigenfunctions.iter()).collect();
            for p in &pairs {
                assert!(p.vertex_residual(&g, c_v) < 1e-8, "λ = {}", p.lambda);
            }
            for (a, fa) in fns.iter().enumerate() {
                for (b, fb) in fns.iter().enumerate() {
                    let ip = l2_inner(fa, fb, &g).unwrap().re;
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((ip - want).abs() < 1e-8, "({a},{b}) = {ip}");
                }
            }
        }
    }

    #[test]
    fn eigenfunction_ode_residual_by_finite_differences() {
        let g = star3();
        let pairs = secular_eigenvalues(&g, 1.5, &SecularSolveConfig::for_count(5, &g)).unwrap();
        for p in &pairs {
            for f in &p.eigenfunctions {
                for j in 0..3 {
                    let h = f.step(j);
                    let v = f.edge_values(j);
                    for i in 1..v.len() - 1 {
                        let lap = (v[i + 1] - 2.0 * v[i] + v[i - 1]).re / (h * h);
                        assert!((lap + p.lambda * v[i].re).abs() < 1e-3 * (1.0 + p.lambda));
                    }
                }
            }
        }
    }

    #[test]
    fn eigenfunction_lookup() {
        let g2 = MetricStarGraph::new(&[1.0, 1.0], &[0.0, PI]).unwrap();
        let cfg = SecularSolveConfig::for_count(4, &g2);
        let odd = graph_eigenfunction(&g2, 0.0, PI / 2.0, &cfg).unwrap();
        assert_eq!(odd.len(), 1);
        let f = &odd[0];
        assert!(f.vertex_value().norm() < 1e-14);
        // Odd mode: edge values are negatives of each other.
        for (a, b) in f.edge_values(0).iter().zip(f.edge_values(1)) {
            assert!((a + b).norm() < 1e-12);
        }
        let constant = graph_eigenfunction(&g2, 0.0, 0.0, &cfg).unwrap();
        assert!((constant[0].vertex_value().re - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!(matches!(graph_eigenfunction(&g2, 0.0, 1.0, &cfg), Err(Error::Domain(_))));

        let g1 = MetricStarGraph::new(&[1.0], &[0.0]).unwrap();
        let cfg1 = SecularSolveConfig::for_count(2, &g1);
        let k = secular_eigenvalues(&g1, 1.0, &cfg1).unwrap()[0].k;
        let psi = &graph_eigenfunction(&g1, 1.0, k, &cfg1).unwrap()[0];
        // ψ(s) = A cos(k(1 - s)) with ψ'(0) = C_V ψ(0).
        let a = psi.vertex_value().re / k.cos();
        for (s, v) in psi.grid(0).iter().zip(psi.edge_values(0)) {
            assert!((v.re - a * (k * (1.0 - s)).cos()).abs() < 1e-8);
        }
        assert!((a * k * k.sin() - psi.vertex_value().re).abs() < 1e-8);
    }

    #[test]
    fn graph_fem_examples() {
        let g2 = MetricStarGraph::new(&[1.0, 1.0], &[0.0, PI]).unwrap();
        let v = graph_fem_eigenvalues(&g2, 0.0, 1e-3, 3).unwrap();
        assert!(v[0].abs() < 1e-8);
        assert!((v[1] / (PI / 2.0).powi(2) - 1.0).abs() < 1e-4);
        assert!((v[2] / (PI * PI) - 1.0).abs() < 1e-4);

        let g1 = MetricStarGraph::new(&[1.0], &[0.0]).unwrap();
        let dir = graph_fem_eigenvalues(&g1, 1e6, 1e-3, 1).unwrap()[0];
        assert!((dir / (PI / 2.0).powi(2) - 1.0).abs() < 1e-2);
        let sec = secular_eigenvalues(&g1, 1e6, &SecularSolveConfig::for_count(1, &g1)).unwrap()[0].lambda;
        assert!((dir / sec - 1.0).abs() < 1e-4);

        let g3 = star3();
        let v3 = graph_fem_eigenvalues(&g3, 0.0, 1e-3, 3).unwrap();
        let q = (PI / 2.0).powi(2);
        assert!((v3[1] / q - 1.0).abs() < 1e-4 && (v3[2] / q - 1.0).abs() < 1e-4);

        assert!(matches!(graph_fem_eigenvalues(&g3, 0.0, 0.3, 3), Err(Error::Domain(_))));
    }

    #[test]
    fn weyl_count() {
        let g = MetricStarGraph::new(&[0.6, 1.7, 1.1], &[0.0, 2.0, 4.0]).unwrap();
        let big_k = 60.0;
        let cfg = SecularSolveConfig {
            max_eigenvalues: usize::MAX,
            k_max: big_k,
            ..SecularSolveConfig::for_count(1, &g)
        };
        for c_v in [0.0, 3.0] {
            let count = expand_multiplicities(&secular_eigenvalues(&g, c_v, &cfg).unwrap())
                .into_iter()
                .filter(|l| *l <= big_k * big_k)
                .count() as f64;
            let weyl = g.total_length() * big_k / PI;
            assert!((count - weyl).abs() <= (g.n_edges() + 2) as f64, "{count} vs {weyl}");
        }
    }

    #[test]
    fn eigenvalues_grow_with_coupling() {
        let g = MetricStarGraph::new(&[0.8, 1.2, 1.5], &[0.0, 2.0, 4.0]).unwrap();
        let spec = |c: f64| {
            expand_multiplicities(&secular_eigenvalues(&g, c, &SecularSolveConfig::for_count(10, &g)).unwrap())
        };
        let (a, b, c) = (spec(0.0), spec(1.0), spec(5.0));
        for i in 0..10 {
            assert!(a[i] <= b[i] + 1e-12 && b[i] <= c[i] + 1e-12, "index {i}");
        }
    }

    #[test]
    fn negative_coupling_rejected() {
        let g = star3();
        assert!(secular_eigenvalues(&g, -1.0, &SecularSolveConfig::for_count(3, &g)).is_err());
    }
}
