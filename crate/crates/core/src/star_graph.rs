//! The metric star graph, sampled functions on it, and the limit energy
//! `Σ_j ∫|ψ_j'|² ds + C_V |ψ(O)|²`.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use nalgebra::{Matrix2, Rotation2, Vector2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::quadrature::simpson_uniform;

/// Default number of samples per edge for graph functions.
pub const DEFAULT_SAMPLES: usize = 1024;

/// One central vertex `O` with `N` straight edges leaving it.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricStarGraph {
    lengths: Vec<f64>,
    angles: Vec<f64>,
    rotations: Vec<Matrix2<f64>>,
}

impl MetricStarGraph {
    /// Builds the star from edge lengths and edge direction angles (radians).
    pub fn new(lengths: &[f64], angles: &[f64]) -> Result<Self> {
        if lengths.is_empty() {
            return Err(Error::Domain("a star graph needs at least one edge".into()));
        }
        if lengths.len() != angles.len() {
            return Err(Error::Domain(format!(
                "{} lengths but {} angles",
                lengths.len(),
                angles.len()
            )));
        }
        if let Some((j, l)) = lengths.iter().enumerate().find(|(_, l)| !(**l > 0.0) || !l.is_finite()) {
            return Err(Error::Domain(format!("edge {j} has nonpositive length {l}")));
        }
        let wrapped: Vec<f64> = angles.iter().map(|a| a.rem_euclid(TAU)).collect();
        for i in 0..wrapped.len() {
            for j in i + 1..wrapped.len() {
                let d = (wrapped[i] - wrapped[j]).abs();
                if d.min(TAU - d) < 1e-12 {
                    return Err(Error::Geometry(format!(
                        "edges {i} and {j} share the direction angle {}",
                        angles[i]
                    )));
                }
            }
        }
        let rotations = angles.iter().map(|&a| *Rotation2::new(a).matrix()).collect();
        Ok(MetricStarGraph {
            lengths: lengths.to_vec(),
            angles: angles.to_vec(),
            rotations,
        })
    }

    /// Star with `n` edges of common length at equally spaced angles.
    pub fn symmetric(n: usize, length: f64) -> Result<Self> {
        let angles: Vec<f64> = (0..n).map(|j| TAU * j as f64 / n as f64).collect();
        Self::new(&vec![length; n], &angles)
    }

    pub fn n_edges(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn length(&self, j: usize) -> f64 {
        self.lengths[j]
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn rotation(&self, j: usize) -> &Matrix2<f64> {
        &self.rotations[j]
    }

    pub fn total_length(&self) -> f64 {
        self.lengths.iter().sum()
    }

    pub fn min_length(&self) -> f64 {
        self.lengths.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Unit vector along edge `j`.
    pub fn direction(&self, j: usize) -> Vector2<f64> {
        self.rotations[j].column(0).into_owned()
    }

    /// Coordinates `y = R_j^{-1} x` in the frame of edge `j`.
    pub fn to_local(&self, j: usize, x: &Point) -> Vector2<f64> {
        self.rotations[j].transpose() * x.coords
    }

    /// The point `R_j y`.
    pub fn from_local(&self, j: usize, y1: f64, y2: f64) -> Point {
        Point::from(self.rotations[j] * Vector2::new(y1, y2))
    }
}

/// A point of the graph: the junction or an arclength position on an edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GraphPoint {
    Vertex,
    Edge { edge: usize, s: f64 },
}

impl GraphPoint {
    /// Edge position, mapping `s = 0` onto the vertex.
    pub fn on_edge(edge: usize, s: f64) -> Self {
        if s == 0.0 {
            GraphPoint::Vertex
        } else {
            GraphPoint::Edge { edge, s }
        }
    }

    pub fn s(&self) -> f64 {
        match self {
            GraphPoint::Vertex => 0.0,
            GraphPoint::Edge { s, .. } => *s,
        }
    }
}

/// A function on the graph stored as uniform per-edge samples on `[0, l_j]`
/// plus a separate value at the junction.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphFunction {
    lengths: Vec<f64>,
    edges: Vec<Vec<Complex64>>,
    vertex: Complex64,
}

impl GraphFunction {
    /// Samples a real-valued function `f(edge, s)` on `samples` uniform
    /// points per edge. The junction value is taken from edge 0 at `s = 0`.
    pub fn from_fn<F: Fn(usize, f64) -> f64>(graph: &MetricStarGraph, samples: usize, f: F) -> Self {
        let edges: Vec<Vec<Complex64>> = (0..graph.n_edges())
            .map(|j| {
                let l = graph.length(j);
                let h = l / (samples - 1) as f64;
                (0..samples)
                    .map(|k| {
                        let s = if k + 1 == samples { l } else { k as f64 * h };
                        Complex64::new(f(j, s), 0.0)
                    })
                    .collect()
            })
            .collect();
        let vertex = edges[0][0];
        GraphFunction {
            lengths: graph.lengths().to_vec(),
            edges,
            vertex,
        }
    }

    /// Builds a function from explicit per-edge samples and junction value.
    pub fn from_samples(lengths: Vec<f64>, edges: Vec<Vec<Complex64>>, vertex: Complex64) -> Result<Self> {
        if lengths.len() != edges.len() {
            return Err(Error::Domain("one sample vector per edge required".into()));
        }
        if let Some(j) = edges.iter().position(|e| e.len() < 2) {
            return Err(Error::Domain(format!("edge {j} needs at least two samples")));
        }
        Ok(GraphFunction { lengths, edges, vertex })
    }

    pub fn constant(graph: &MetricStarGraph, samples: usize, c: f64) -> Self {
        Self::from_fn(graph, samples, |_, _| c)
    }

    pub fn with_vertex(mut self, value: Complex64) -> Self {
        self.vertex = value;
        self
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn edge_values(&self, j: usize) -> &[Complex64] {
        &self.edges[j]
    }

    pub fn vertex_value(&self) -> Complex64 {
        self.vertex
    }

    pub fn step(&self, j: usize) -> f64 {
        self.lengths[j] / (self.edges[j].len() - 1) as f64
    }

    pub fn grid(&self, j: usize) -> Vec<f64> {
        let n = self.edges[j].len();
        let h = self.step(j);
        (0..n)
            .map(|k| if k + 1 == n { self.lengths[j] } else { k as f64 * h })
            .collect()
    }

    /// Largest mismatch `|ψ_j(0) - ψ(O)|` over the edges.
    pub fn junction_gap(&self) -> f64 {
        self.edges
            .iter()
            .map(|e| (e[0] - self.vertex).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_continuous(&self, tol: f64) -> bool {
        self.junction_gap() <= tol
    }

    /// Linear interpolation of the samples.
    pub fn eval(&self, p: GraphPoint) -> Complex64 {
        match p {
            GraphPoint::Vertex => self.vertex,
            GraphPoint::Edge { edge, s } => self.eval_edge(edge, s),
        }
    }

    pub fn eval_edge(&self, j: usize, s: f64) -> Complex64 {
        let e = &self.edges[j];
        let h = self.step(j);
        let t = (s / h).clamp(0.0, (e.len() - 1) as f64);
        let k = (t.floor() as usize).min(e.len() - 2);
        let frac = t - k as f64;
        e[k] * (1.0 - frac) + e[k + 1] * frac
    }

    /// Resamples onto `samples` uniform points per edge (linear interpolation).
    pub fn resample(&self, samples: usize) -> GraphFunction {
        let edges = (0..self.n_edges())
            .map(|j| {
                let l = self.lengths[j];
                let h = l / (samples - 1) as f64;
                (0..samples)
                    .map(|k| self.eval_edge(j, if k + 1 == samples { l } else { k as f64 * h }))
                    .collect()
            })
            .collect();
        GraphFunction {
            lengths: self.lengths.clone(),
            edges,
            vertex: self.vertex,
        }
    }

    pub fn scale(&self, c: f64) -> GraphFunction {
        GraphFunction {
            lengths: self.lengths.clone(),
            edges: self.edges.iter().map(|e| e.iter().map(|v| v * c).collect()).collect(),
            vertex: self.vertex * c,
        }
    }

    /// `self + c * other` on matching grids.
    pub fn axpy(&self, c: f64, other: &GraphFunction) -> GraphFunction {
        GraphFunction {
            lengths: self.lengths.clone(),
            edges: self
                .edges
                .iter()
                .zip(&other.edges)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y * c).collect())
                .collect(),
            vertex: self.vertex + other.vertex * c,
        }
    }

    /// CSV with columns `edge,s,value_re,value_im`; the junction value is
    /// the row with `edge = -1, s = 0`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("edge,s,value_re,value_im\n");
        let _ = writeln!(out, "-1,0,{},{}", self.vertex.re, self.vertex.im);
        for j in 0..self.n_edges() {
            for (s, v) in self.grid(j).iter().zip(&self.edges[j]) {
                let _ = writeln!(out, "{j},{s},{},{}", v.re, v.im);
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "edge,s,value_re,value_im" => {}
            _ => return Err(Error::Domain("missing graph function CSV header".into())),
        }
        let mut vertex = None;
        let mut edges: Vec<Vec<(f64, Complex64)>> = Vec::new();
        for (no, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            let bad = || Error::Domain(format!("malformed CSV line {}: {line}", no + 2));
            if cols.len() != 4 {
                return Err(bad());
            }
            let edge: i64 = cols[0].trim().parse().map_err(|_| bad())?;
            let s: f64 = cols[1].trim().parse().map_err(|_| bad())?;
            let re: f64 = cols[2].trim().parse().map_err(|_| bad())?;
            let im: f64 = cols[3].trim().parse().map_err(|_| bad())?;
            let v = Complex64::new(re, im);
            if edge < 0 {
                vertex = Some(v);
            } else {
                let e = edge as usize;
                if edges.len() <= e {
                    edges.resize_with(e + 1, Vec::new);
                }
                edges[e].push((s, v));
            }
        }
        let vertex = vertex.ok_or_else(|| Error::Domain("no junction row (edge = -1)".into()))?;
        let mut lengths = Vec::with_capacity(edges.len());
        let mut values = Vec::with_capacity(edges.len());
        for (j, e) in edges.iter().enumerate() {
            if e.len() < 2 || e[0].0 != 0.0 || e.windows(2).any(|w| w[1].0 <= w[0].0) {
                return Err(Error::Domain(format!(
                    "edge {j} grid must be sorted and start at s = 0"
                )));
            }
            lengths.push(e.last().map(|p| p.0).unwrap_or(0.0));
            values.push(e.iter().map(|p| p.1).collect());
        }
        GraphFunction::from_samples(lengths, values, vertex)
    }
}

/// Strength of the junction delta coupling, plus the tolerance used to
/// decide whether a sampled function is continuous at the junction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitFormParams {
    pub c_v: f64,
    pub tol_cont: f64,
}

impl LimitFormParams {
    pub fn new(c_v: f64) -> Result<Self> {
        if !(c_v >= 0.0) {
            return Err(Error::Domain(format!("C_V must be nonnegative, got {c_v}")));
        }
        Ok(LimitFormParams { c_v, tol_cont: 1e-10 })
    }

    pub fn with_tolerance(mut self, tol_cont: f64) -> Self {
        self.tol_cont = tol_cont;
        self
    }
}

fn check_same_graph(f: &GraphFunction, graph: &MetricStarGraph) -> Result<()> {
    if f.n_edges() != graph.n_edges() {
        return Err(Error::Domain(format!(
            "function has {} edges, graph has {}",
            f.n_edges(),
            graph.n_edges()
        )));
    }
    for (j, (a, b)) in f.lengths().iter().zip(graph.lengths()).enumerate() {
        if (a - b).abs() > 1e-12 * b.max(1.0) {
            return Err(Error::Domain(format!(
                "edge {j} has length {a} in the function but {b} in the graph"
            )));
        }
    }
    Ok(())
}

/// `Σ_j ∫_0^{l_j} f_j conj(g_j) ds` by composite Simpson. `g` is resampled
/// onto `f`'s grid when the sample counts differ.
pub fn l2_inner(f: &GraphFunction, g: &GraphFunction, graph: &MetricStarGraph) -> Result<Complex64> {
    check_same_graph(f, graph)?;
    check_same_graph(g, graph)?;
    let mut total = Complex64::new(0.0, 0.0);
    for j in 0..graph.n_edges() {
        let fj = f.edge_values(j);
        let resampled;
        let gj = if g.edge_values(j).len() == fj.len() {
            g.edge_values(j)
        } else {
            resampled = (0..fj.len())
                .map(|k| g.eval_edge(j, f.grid(j)[k]))
                .collect::<Vec<_>>();
            &resampled[..]
        };
        let prod: Vec<Complex64> = fj.iter().zip(gj).map(|(a, b)| a * b.conj()).collect();
        let re: Vec<f64> = prod.iter().map(|c| c.re).collect();
        let im: Vec<f64> = prod.iter().map(|c| c.im).collect();
        let h = f.step(j);
        total += Complex64::new(simpson_uniform(&re, h), simpson_uniform(&im, h));
    }
    Ok(total)
}

pub fn l2_norm(f: &GraphFunction, graph: &MetricStarGraph) -> Result<f64> {
    Ok(l2_inner(f, f, graph)?.re.max(0.0).sqrt())
}

/// Second-order finite-difference derivative on a uniform grid.
pub fn derivative(values: &[Complex64], h: f64) -> Vec<Complex64> {
    let n = values.len();
    if n == 2 {
        let d = (values[1] - values[0]) / h;
        return vec![d, d];
    }
    let mut d = vec![Complex64::new(0.0, 0.0); n];
    d[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h);
    d[n - 1] = (3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * h);
    for k in 1..n - 1 {
        d[k] = (values[k + 1] - values[k - 1]) / (2.0 * h);
    }
    d
}

/// Kinetic part `Σ_j ∫|ψ_j'|²` (no continuity check).
pub fn kinetic_energy(psi: &GraphFunction) -> f64 {
    (0..psi.n_edges())
        .map(|j| {
            let h = psi.step(j);
            let d2: Vec<f64> = derivative(psi.edge_values(j), h).iter().map(|c| c.norm_sqr()).collect();
            simpson_uniform(&d2, h)
        })
        .sum()
}

/// The limit energy. Returns `f64::INFINITY` when `ψ` is not continuous at
/// the junction, since then it lies outside the form domain.
pub fn phi_limit(psi: &GraphFunction, params: &LimitFormParams, graph: &MetricStarGraph) -> Result<f64> {
    check_same_graph(psi, graph)?;
    if !psi.is_continuous(params.tol_cont) {
        return Ok(f64::INFINITY);
    }
    Ok(kinetic_energy(psi) + params.c_v * psi.vertex_value().norm_sqr())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn straight_star_rotation() {
        let g = MetricStarGraph::new(&[1.0, 1.0], &[0.0, PI]).unwrap();
        let r = g.rotation(1);
        assert!((r[(0, 0)] + 1.0).abs() < 1e-15 && r[(1, 0)].abs() < 1e-15);
        for j in 0..2 {
            let r = g.rotation(j);
            assert!((r.determinant() - 1.0).abs() < 1e-12);
            assert!((r.transpose() * r - Matrix2::identity()).norm() < 1e-12);
        }
    }

    #[test]
    fn single_edge_star_is_allowed() {
        let g = MetricStarGraph::new(&[1.0], &[0.0]).unwrap();
        assert_eq!(*g.rotation(0), Matrix2::identity());
    }

    #[test]
    fn build_errors() {
        assert!(matches!(MetricStarGraph::new(&[1.0, 1.0], &[0.0, TAU]), Err(Error::Geometry(_))));
        assert!(matches!(MetricStarGraph::new(&[1.0, 0.0], &[0.0, 1.0]), Err(Error::Domain(_))));
        assert!(matches!(MetricStarGraph::new(&[], &[]), Err(Error::Domain(_))));
    }

    #[test]
    fn inner_product_examples() {
        let g2 = MetricStarGraph::new(&[1.0, 1.0], &[0.0, PI]).unwrap();
        let one = GraphFunction::constant(&g2, DEFAULT_SAMPLES, 1.0);
        assert!((l2_inner(&one, &one, &g2).unwrap().re - 2.0).abs() < 1e-14);

        let f = GraphFunction::from_fn(&g2, DEFAULT_SAMPLES, |j, s| if j == 0 { s } else { 0.0 });
        assert!((l2_inner(&f, &f, &g2).unwrap().re - 1.0 / 3.0).abs() < 1e-14);

        let g1 = MetricStarGraph::new(&[1.0], &[0.0]).unwrap();
        let c = GraphFunction::from_fn(&g1, DEFAULT_SAMPLES, |_, s| (PI * s).cos());
        let s = GraphFunction::from_fn(&g1, DEFAULT_SAMPLES, |_, s| (PI * s).sin());
        assert!(l2_inner(&c, &s, &g1).unwrap().norm() < 1e-12);
    }

    #[test]
    fn inner_product_rejects_other_graph() {
        let g2 = MetricStarGraph::new(&[1.0, 1.0], &[0.0, PI]).unwrap();
        let g3 = MetricStarGraph::symmetric(3, 1.0).unwrap();
        let f = GraphFunction::constant(&g2, 16, 1.0);
        assert!(matches!(l2_inner(&f, &f, &g3), Err(Error::Domain(_))));
    }

    #[test]
    fn phi_examples() {
        let g3 = MetricStarGraph::symmetric(3, 1.0).unwrap();
        let one = GraphFunction::constant(&g3, DEFAULT_SAMPLES, 1.0);
        let p1 = LimitFormParams::new(1.0).unwrap();
        assert!((phi_limit(&one, &p1, &g3).unwrap() - 1.0).abs() < 1e-12);

        let g2 = MetricStarGraph::new(&[1.0, 1.0], &[0.0, PI]).unwrap();
        let lin = GraphFunction::from_fn(&g2, DEFAULT_SAMPLES, |j, s| 1.0 - s / g2.length(j));
        let p0 = LimitFormParams::new(0.0).unwrap();
        assert!((phi_limit(&lin, &p0, &g2).unwrap() - 2.0).abs() < 1e-12);

        // ∫_0^1 (π/2)² sin²(πs/2) ds = π²/8 on each of three edges, plus C_V·1.
        let cosf = GraphFunction::from_fn(&g3, DEFAULT_SAMPLES, |_, s| (PI * s / 2.0).cos());
        let p2 = LimitFormParams::new(2.0).unwrap();
        let expect = 3.0 * PI * PI / 8.0 + 2.0;
        assert!((phi_limit(&cosf, &p2, &g3).unwrap() - expect).abs() < 1e-5);
    }

    #[test]
    fn discontinuous_function_has_infinite_energy() {
        let g2 = MetricStarGraph::new(&[1.0, 1.0], &[0.0, PI]).unwrap();
        let jump = GraphFunction::from_fn(&g2, 64, |j, _| j as f64);
        let p = LimitFormParams::new(0.0).unwrap();
        assert_eq!(phi_limit(&jump, &p, &g2).unwrap(), f64::INFINITY);
    }

    #[test]
    fn csv_round_trip() {
        let g3 = MetricStarGraph::symmetric(3, 1.5).unwrap();
        let f = GraphFunction::from_fn(&g3, 33, |j, s| (j as f64 + 1.0) * s.sin() + 0.1);
        let back = GraphFunction::from_csv(&f.to_csv()).unwrap();
        assert_eq!(back, f);
    }
}
