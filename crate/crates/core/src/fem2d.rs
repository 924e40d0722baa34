//! P1 finite elements for `φ_ε(u) = ∫|∇u|² dμ_ε + ∫ V_ε |u|² dμ_ε`.
//!
//! All three matrices carry the measure weight `1 / (ω ε)`. The potential
//! matrix is integrated adaptively on the elements that meet `supp V_ε`, so
//! the kink of the profile at the support boundary does not limit accuracy.

use rayon::prelude::*;

use crate::eigen::{self, EigenOptions, EigenResult};
use crate::error::{Error, Result};
use crate::geometry::{self, Point};
use crate::mesh2d::Mesh2D;
use crate::quadrature::adaptive_triangle;
use crate::sparse::SparseSymMatrix;
use crate::thin_domain::{potential_v_eps, PotentialSpec, ThinDomainSpec};

/// Stiffness `K`, potential `P` and mass `M`, all weighted by `dμ_ε`.
#[derive(Debug, Clone)]
pub struct FemSystem {
    pub k: SparseSymMatrix,
    pub p: SparseSymMatrix,
    pub m: SparseSymMatrix,
}

impl FemSystem {
    /// `K + P`.
    pub fn operator(&self) -> SparseSymMatrix {
        SparseSymMatrix::combine(&[(1.0, &self.k), (1.0, &self.p)]).expect("shared pattern")
    }

    pub fn dim(&self) -> usize {
        self.m.dim()
    }
}

/// Nodal values of a P1 function.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteField {
    pub values: Vec<f64>,
}

impl DiscreteField {
    pub fn new(mesh: &Mesh2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_nodes() {
            return Err(Error::Domain(format!(
                "field has {} values for {} nodes",
                values.len(),
                mesh.n_nodes()
            )));
        }
        Ok(DiscreteField { values })
    }

    pub fn from_fn(mesh: &Mesh2D, f: impl Fn(&Point) -> f64) -> Self {
        DiscreteField { values: mesh.nodes.iter().map(f).collect() }
    }

    pub fn constant(mesh: &Mesh2D, c: f64) -> Self {
        DiscreteField { values: vec![c; mesh.n_nodes()] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiEps {
    pub phi_k: f64,
    pub phi_v: f64,
    pub norm2: f64,
}

impl PhiEps {
    pub fn total(&self) -> f64 {
        self.phi_k + self.phi_v
    }
}

/// Gradients of the three barycentric basis functions.
pub fn p1_gradients(tri: &[Point; 3]) -> [[f64; 2]; 3] {
    let area2 = 2.0 * geometry::triangle_area(&tri[0], &tri[1], &tri[2]);
    let mut g = [[0.0; 2]; 3];
    for a in 0..3 {
        let (p, q) = (tri[(a + 1) % 3], tri[(a + 2) % 3]);
        g[a] = [(p.y - q.y) / area2, (q.x - p.x) / area2];
    }
    g
}

struct ElementBlock {
    k: [[f64; 3]; 3],
    p: [[f64; 3]; 3],
    m: [[f64; 3]; 3],
}

fn element(mesh: &Mesh2D, t: usize, spec: &ThinDomainSpec, v: &PotentialSpec, w: f64, support: f64) -> Result<ElementBlock> {
    let tri = mesh.triangle(t);
    let area = geometry::triangle_area(&tri[0], &tri[1], &tri[2]);
    let g = p1_gradients(&tri);
    let mut k = [[0.0; 3]; 3];
    let mut m = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            k[a][b] = w * area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
            m[a][b] = w * area / 12.0 * if a == b { 2.0 } else { 1.0 };
        }
    }
    let mut p = [[0.0; 3]; 3];
    let origin = Point::origin();
    let touches = support > 0.0
        && (geometry::contains_closed(&tri, &origin, 0.0) || geometry::boundary_distance(&origin, &tri) < support);
    if touches {
        // |V_ε| ≤ v_max / ε; absolute tolerance relative to that bound.
        let v_max = match *v {
            PotentialSpec::Zero => 0.0,
            PotentialSpec::CosineBump { v0, .. } | PotentialSpec::SmoothedBox { v0, .. } => v0,
        };
        let tol = 1e-11 * w * v_max / spec.eps() * area;
        let f = |x: &Point, bc: &[f64; 3]| {
            let val = w * potential_v_eps(x, spec, v);
            [
                val * bc[0] * bc[0],
                val * bc[1] * bc[1],
                val * bc[2] * bc[2],
                val * bc[0] * bc[1],
                val * bc[1] * bc[2],
                val * bc[2] * bc[0],
            ]
        };
        let r = adaptive_triangle(&tri, &f, tol, 18)?;
        p = [[r[0], r[3], r[5]], [r[3], r[1], r[4]], [r[5], r[4], r[2]]];
    }
    Ok(ElementBlock { k, p, m })
}

/// Assembles `K`, `P`, `M`. Element blocks are computed in parallel and
/// scattered in element order, so the result does not depend on threading.
pub fn assemble(mesh: &Mesh2D, spec: &ThinDomainSpec, v: &PotentialSpec) -> Result<FemSystem> {
    mesh.validate()?;
    v.validate(spec)?;
    let n = mesh.n_nodes();
    let pairs = mesh
        .triangles
        .iter()
        .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])]);
    let pattern = SparseSymMatrix::with_pattern(n, pairs);
    let (mut k, mut p, mut m) = (pattern.clone(), pattern.clone(), pattern);
    let w = spec.measure_weight();
    let support = if v.is_zero() { 0.0 } else { spec.eps() * v.support_radius() };
    let blocks: Vec<ElementBlock> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| element(mesh, t, spec, v, w, support))
        .collect::<Result<_>>()?;
    for (tri, blk) in mesh.triangles.iter().zip(&blocks) {
        for a in 0..3 {
            for b in 0..=a {
                let (i, j) = (tri[a], tri[b]);
                // Off-diagonal element pairs hit one stored slot once per (a, b), b < a.
                k.add(i, j, blk.k[a][b]);
                m.add(i, j, blk.m[a][b]);
                if blk.p[a][b] != 0.0 {
                    p.add(i, j, blk.p[a][b]);
                }
            }
        }
    }
    Ok(FemSystem { k, p, m })
}

/// `(uᵀKu, uᵀPu, uᵀMu)`.
pub fn eval_phi_eps(u: &DiscreteField, sys: &FemSystem) -> Result<PhiEps> {
    if u.values.len() != sys.dim() {
        return Err(Error::Domain("field length does not match the system".into()));
    }
    Ok(PhiEps {
        phi_k: sys.k.quadratic(&u.values),
        phi_v: sys.p.quadratic(&u.values),
        norm2: sys.m.quadratic(&u.values),
    })
}

/// The `count` smallest eigenpairs of `(K + P) v = λ M v` by shift-invert
/// Lanczos at `σ = -1`.
pub fn solve_gevp(sys: &FemSystem, count: usize, tol: f64) -> Result<EigenResult> {
    eigen::solve_gevp(&sys.operator(), &sys.m, &EigenOptions::new(count).with_tol(tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh2d::{triangulate, Region};
    use crate::star_graph::MetricStarGraph;
    use crate::thin_domain::{compute_c_v, measure_total, JunctionShape};
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
    fn constants_and_mass() {
        let spec = star3(0.1);
        let mesh = triangulate(&spec, 0.025, None).unwrap();
        let sys = assemble(&mesh, &spec, &PotentialSpec::Zero).unwrap();
        let one = DiscreteField::constant(&mesh, 1.0);
        let phi = eval_phi_eps(&one, &sys).unwrap();
        assert!(phi.phi_k.abs() < 1e-10);
        assert_eq!(phi.phi_v, 0.0);
        assert!((phi.norm2 - measure_total(&spec)).abs() < 1e-10);
        assert!(sys.p.lower_entries().all(|(_, _, v)| v == 0.0));
        let zero = DiscreteField::constant(&mesh, 0.0);
        assert_eq!(eval_phi_eps(&zero, &sys).unwrap(), PhiEps { phi_k: 0.0, phi_v: 0.0, norm2: 0.0 });
    }

    #[test]
    fn linear_field_on_tube_is_exact() {
        // Restrict to tube 0 of the straight domain: u = x₁ has unit gradient.
        let spec = straight(0.1);
        let full = triangulate(&spec, 0.05, None).unwrap();
        let keep: Vec<usize> = (0..full.n_triangles()).filter(|&t| full.regions[t] == Region::Tube(0)).collect();
        let tube = Mesh2D {
            triangles: keep.iter().map(|&t| full.triangles[t]).collect(),
            regions: keep.iter().map(|&t| full.regions[t]).collect(),
            boundary: vec![],
            ..full.clone()
        };
        let w = spec.measure_weight();
        let u: Vec<f64> = tube.nodes.iter().map(|p| p.x).collect();
        let mut energy = 0.0;
        for t in 0..tube.n_triangles() {
            let tri = tube.triangle(t);
            let g = p1_gradients(&tri);
            let [a, b, c] = tube.triangles[t];
            let grad = [
                u[a] * g[0][0] + u[b] * g[1][0] + u[c] * g[2][0],
                u[a] * g[0][1] + u[b] * g[1][1] + u[c] * g[2][1],
            ];
            energy += w * tube.triangle_area(t) * (grad[0].powi(2) + grad[1].powi(2));
        }
        assert!((energy - spec.tube_area(0) * w).abs() < 1e-12);
        // Same through the assembled system on the full mesh.
        let sys = assemble(&full, &spec, &PotentialSpec::Zero).unwrap();
        let field = DiscreteField::from_fn(&full, |p| p.x);
        let phi = eval_phi_eps(&field, &sys).unwrap();
        assert!((phi.phi_k - spec.area() * w).abs() < 1e-10);
    }

    #[test]
    fn potential_mass_matches_coupling() {
        let spec = star3(0.1);
        let mesh = triangulate(&spec, 0.025, None).unwrap();
        let v = PotentialSpec::CosineBump { v0: 2.0, rho: 0.5 };
        let sys = assemble(&mesh, &spec, &v).unwrap();
        let c = 1.7;
        let phi = eval_phi_eps(&DiscreteField::constant(&mesh, c), &sys).unwrap();
        let c_v = compute_c_v(&v, &spec).unwrap();
        assert!((phi.phi_v - c_v * c * c).abs() < 1e-8, "{} vs {}", phi.phi_v, c_v * c * c);
    }

    #[test]
    fn neumann_rectangle_spectrum() {
        let spec = straight(0.1);
        let h = 0.025;
        let mesh = triangulate(&spec, h, None).unwrap();
        let sys = assemble(&mesh, &spec, &PotentialSpec::Zero).unwrap();
        let res = solve_gevp(&sys, 4, 1e-8).unwrap();
        for (m, lam) in res.eigenvalues.iter().enumerate() {
            let exact = (m as f64 * PI / 2.0).powi(2);
            // P1 eigenvalue error is about λ² h² / 12, below 10 h² for λ < 11.
            let bound = if exact < 11.0 { 10.0 * h * h } else { exact * exact * h * h / 12.0 * 1.5 };
            assert!(*lam >= exact - 1e-9 && lam - exact <= bound, "mode {m}: {lam} vs {exact}");
        }
        let v0 = &res.eigenvectors[0];
        let mean = v0.iter().sum::<f64>() / v0.len() as f64;
        assert!(v0.iter().all(|x| (x - mean).abs() < 1e-6 * mean.abs()));
        for i in 0..4 {
            for j in 0..4 {
                let ip = sys.m.bilinear(&res.eigenvectors[i], &res.eigenvectors[j]);
                assert!((ip - if i == j { 1.0 } else { 0.0 }).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn galerkin_monotonicity() {
        let spec = star3(0.2);
        let v = PotentialSpec::CosineBump { v0: 1.0, rho: 0.5 };
        let coarse = triangulate(&spec, 0.1, None).unwrap();
        let fine = coarse.refine_uniform();
        let lc = solve_gevp(&assemble(&coarse, &spec, &v).unwrap(), 5, 1e-9).unwrap();
        let lf = solve_gevp(&assemble(&fine, &spec, &v).unwrap(), 5, 1e-9).unwrap();
        for (a, b) in lc.eigenvalues.iter().zip(&lf.eigenvalues) {
            assert!(b <= &(a + 1e-8), "{b} > {a}");
        }
    }

    #[test]
    fn weight_scaling_leaves_spectrum() {
        let spec = star3(0.1);
        let mesh = triangulate(&spec, 0.05, None).unwrap();
        let v = PotentialSpec::CosineBump { v0: 1.0, rho: 0.5 };
        let sys = assemble(&mesh, &spec, &v).unwrap();
        let mut scaled = sys.clone();
        for mat in [&mut scaled.k, &mut scaled.p, &mut scaled.m] {
            mat.scale(7.3);
        }
        let a = solve_gevp(&sys, 4, 1e-10).unwrap();
        let b = solve_gevp(&scaled, 4, 1e-10).unwrap();
        for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{x} vs {y}");
        }
    }

    #[test]
    fn rayleigh_quotients_bound_first_eigenvalue() {
        use rand::{Rng, SeedableRng};
        let spec = star3(0.1);
        let mesh = triangulate(&spec, 0.05, None).unwrap();
        let v = PotentialSpec::CosineBump { v0: 3.0, rho: 0.5 };
        let sys = assemble(&mesh, &spec, &v).unwrap();
        let lam1 = solve_gevp(&sys, 1, 1e-10).unwrap().eigenvalues[0];
        let a = sys.operator();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let x: Vec<f64> = (0..sys.dim()).map(|_| rng.gen_range(-1.0..1.0) + 2.0).collect();
            assert!(a.quadratic(&x) / sys.m.quadratic(&x) >= lam1 - 1e-10);
        }
    }

    #[test]
    fn parallel_assembly_is_deterministic() {
        let spec = star3(0.1);
        let mesh = triangulate(&spec, 0.025, None).unwrap();
        let v = PotentialSpec::CosineBump { v0: 1.0, rho: 0.5 };
        let par = assemble(&mesh, &spec, &v).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let seq = pool.install(|| assemble(&mesh, &spec, &v).unwrap());
        assert_eq!(par.k, seq.k);
        assert_eq!(par.p, seq.p);
        assert_eq!(par.m, seq.m);
    }
}
