//! Smallest eigenpairs of the pencil `A v = λ M v` (A symmetric positive
//! semidefinite, M symmetric positive definite) by block shift-invert
//! Lanczos with full M-reorthogonalization.
//!
//! The Krylov space is built for `Op = (A - σM)^{-1} M`, which is
//! self-adjoint in the M inner product; its largest Ritz values `θ` map back
//! to `λ = σ + 1/θ`. A block start resolves eigenvalues of multiplicity up to
//! the block size.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sparse::{LdlFactor, Ordering, SparseSymMatrix};

/// Below this dimension the pencil is solved densely.
const DENSE_LIMIT: usize = 240;

#[derive(Debug, Clone)]
pub struct EigenOptions {
    pub count: usize,
    pub tol: f64,
    pub shift: f64,
    pub block: usize,
    /// Upper bound on the Krylov basis size; `None` picks one from `count`.
    pub max_basis: Option<usize>,
    pub seed: u64,
    pub ordering: Ordering,
}

impl EigenOptions {
    pub fn new(count: usize) -> Self {
        EigenOptions {
            count,
            tol: 1e-8,
            shift: -1.0,
            block: 4,
            max_basis: None,
            seed: 0x5eed,
            ordering: Ordering::ReverseCuthillMcKee,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_ordering(mut self, ordering: Ordering) -> Self {
        self.ordering = ordering;
        self
    }

    pub fn with_block(mut self, block: usize) -> Self {
        self.block = block.max(1);
        self
    }
}

/// Eigenpairs in ascending order with M-orthonormal eigenvectors.
///
/// `residuals[i]` is `‖A v - λ M v‖_{M^{-1}}` for the M-normalized `v`, which
/// carries the units of an eigenvalue and is invariant under a joint scaling
/// of `A` and `M`.
#[derive(Debug, Clone)]
pub struct EigenResult {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], c: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(a, b)| *a += c * b);
}

pub fn solve_gevp(a: &SparseSymMatrix, m: &SparseSymMatrix, opts: &EigenOptions) -> Result<EigenResult> {
    let n = a.dim();
    if m.dim() != n {
        return Err(Error::Domain("stiffness and mass dimensions differ".into()));
    }
    if opts.count == 0 {
        return Ok(EigenResult {
            eigenvalues: vec![],
            eigenvectors: vec![],
            residuals: vec![],
        });
    }
    if opts.count > n {
        return Err(Error::Domain(format!("requested {} eigenpairs of a {n}-dimensional pencil", opts.count)));
    }
    let mass = LdlFactor::new(m, opts.ordering)
        .map_err(|e| Error::Solver(format!("mass matrix factorization failed: {e}")))?;
    if mass.negative_pivots() > 0 {
        return Err(Error::Solver("mass matrix is not positive definite".into()));
    }
    let (values, vectors) = if n <= DENSE_LIMIT {
        dense_pencil(a, m, opts.count)?
    } else {
        lanczos(a, m, &mass, opts)?
    };
    let residuals = values
        .iter()
        .zip(&vectors)
        .map(|(&lam, v)| residual_norm(a, m, &mass, lam, v))
        .collect::<Vec<_>>();
    if let Some((i, r)) = residuals.iter().enumerate().find(|(_, r)| !(**r <= opts.tol)) {
        return Err(Error::Solver(format!(
            "eigenpair {i} did not converge: residual {r:.3e} > {:.1e}; residuals {residuals:?}",
            opts.tol
        )));
    }
    Ok(EigenResult {
        eigenvalues: values,
        eigenvectors: vectors,
        residuals,
    })
}

fn residual_norm(a: &SparseSymMatrix, m: &SparseSymMatrix, mass: &LdlFactor, lam: f64, v: &[f64]) -> f64 {
    let mut r = a.matvec(v);
    let mv = m.matvec(v);
    axpy(&mut r, -lam, &mv);
    let z = mass.solve(&r);
    dot(&r, &z).max(0.0).sqrt() / dot(v, &mv).sqrt()
}

fn dense_pencil(a: &SparseSymMatrix, m: &SparseSymMatrix, count: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = a.dim();
    let to_dense = |s: &SparseSymMatrix| {
        let mut d = DMatrix::<f64>::zeros(n, n);
        for (i, j, v) in s.lower_entries() {
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
        d
    };
    let ad = to_dense(a);
    let md = to_dense(m);
    let chol = md
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Solver("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Solver("singular mass Cholesky factor".into()))?;
    let c = &linv * ad * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut values = Vec::with_capacity(count);
    let mut vectors = Vec::with_capacity(count);
    for &k in order.iter().take(count) {
        values.push(eig.eigenvalues[k]);
        let y = eig.eigenvectors.column(k).into_owned();
        let x = linv.transpose() * y;
        vectors.push(x.iter().copied().collect());
    }
    Ok((values, vectors))
}

struct Basis<'a> {
    m: &'a SparseSymMatrix,
    q: Vec<Vec<f64>>,
    mq: Vec<Vec<f64>>,
    opq: Vec<Vec<f64>>,
}

impl Basis<'_> {
    /// M-orthogonalizes `v` against the basis (twice) and normalizes it.
    /// Returns `None` when `v` is numerically inside the current span.
    fn orthonormalize(&self, mut v: Vec<f64>) -> Option<(Vec<f64>, Vec<f64>)> {
        let mv0 = self.m.matvec(&v);
        let norm0 = dot(&v, &mv0).max(0.0).sqrt();
        if norm0 == 0.0 {
            return None;
        }
        for _ in 0..2 {
            for (q, mq) in self.q.iter().zip(&self.mq) {
                let c = dot(mq, &v);
                axpy(&mut v, -c, q);
            }
        }
        let mv = self.m.matvec(&v);
        let norm = dot(&v, &mv).max(0.0).sqrt();
        if norm < 1e-10 * norm0 {
            return None;
        }
        let inv = 1.0 / norm;
        Some((v.iter().map(|x| x * inv).collect(), mv.iter().map(|x| x * inv).collect()))
    }
}

fn lanczos(
    a: &SparseSymMatrix,
    m: &SparseSymMatrix,
    mass: &LdlFactor,
    opts: &EigenOptions,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = a.dim();
    let shifted = SparseSymMatrix::combine(&[(1.0, a), (-opts.shift, m)])?;
    let factor = LdlFactor::new(&shifted, opts.ordering)?;
    if factor.negative_pivots() > 0 {
        return Err(Error::Solver(format!(
            "shift {} is not below the spectrum: A - σM has {} negative pivots",
            opts.shift,
            factor.negative_pivots()
        )));
    }
    let apply_op = |q: &[f64]| factor.solve(&m.matvec(q));
    let block = opts.block.max(1);
    let max_basis = opts
        .max_basis
        .unwrap_or_else(|| (opts.count * 8).max(opts.count + 20 * block).max(80))
        .min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let random_vec = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect() };

    let mut basis = Basis {
        m,
        q: Vec::new(),
        mq: Vec::new(),
        opq: Vec::new(),
    };
    let mut pending: Vec<Vec<f64>> = (0..block).map(|_| apply_op(&random_vec(&mut rng))).collect();
    let mut last_residuals: Vec<f64> = Vec::new();
    loop {
        let mut added = 0;
        for v in pending.drain(..) {
            if basis.q.len() >= max_basis {
                break;
            }
            if let Some((q, mq)) = basis.orthonormalize(v) {
                let opq = apply_op(&q);
                basis.q.push(q);
                basis.mq.push(mq);
                basis.opq.push(opq);
                added += 1;
            }
        }
        // Deflated block: restart the missing directions from random vectors.
        let mut attempts = 0;
        while added < block && basis.q.len() < max_basis && attempts < 4 * block {
            attempts += 1;
            if let Some((q, mq)) = basis.orthonormalize(apply_op(&random_vec(&mut rng))) {
                let opq = apply_op(&q);
                basis.q.push(q);
                basis.mq.push(mq);
                basis.opq.push(opq);
                added += 1;
            }
        }
        let dim = basis.q.len();
        if dim >= opts.count + block || dim == max_basis {
            let (values, vectors) = ritz(&basis, opts.count.min(dim), opts.shift);
            last_residuals = values
                .iter()
                .zip(&vectors)
                .map(|(&lam, v)| residual_norm(a, m, mass, lam, v))
                .collect();
            let converged = values.len() == opts.count && last_residuals.iter().all(|r| *r <= 0.1 * opts.tol);
            if converged || dim == max_basis || added == 0 {
                if values.len() == opts.count && last_residuals.iter().all(|r| *r <= opts.tol) {
                    return Ok((values, vectors));
                }
                return Err(Error::Solver(format!(
                    "Lanczos stopped at basis size {dim} without convergence; residuals {last_residuals:?}"
                )));
            }
        }
        let start = dim - added;
        pending = basis.opq[start..dim].to_vec();
        if pending.is_empty() {
            return Err(Error::Solver(format!(
                "Krylov space exhausted at dimension {dim}; residuals {last_residuals:?}"
            )));
        }
    }
}

fn ritz(basis: &Basis, count: usize, shift: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let k = basis.q.len();
    let mut t = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        for j in 0..=i {
            let v = 0.5 * (dot(&basis.mq[i], &basis.opq[j]) + dot(&basis.mq[j], &basis.opq[i]));
            t[(i, j)] = v;
            t[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..k).collect();
    // Largest θ first, i.e. smallest λ = σ + 1/θ.
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let n = basis.q[0].len();
    let mut values = Vec::with_capacity(count);
    let mut vectors = Vec::with_capacity(count);
    for &c in order.iter().take(count) {
        let theta = eig.eigenvalues[c];
        values.push(shift + 1.0 / theta);
        let mut x = vec![0.0; n];
        for (i, q) in basis.q.iter().enumerate() {
            axpy(&mut x, eig.eigenvectors[(i, c)], q);
        }
        vectors.push(x);
    }
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// P1 stiffness and mass on a uniform 1-D grid of `[0, len]` (Neumann).
    fn interval(nel: usize, len: f64) -> (SparseSymMatrix, SparseSymMatrix) {
        let h = len / nel as f64;
        let pairs: Vec<(usize, usize)> = (0..nel).map(|e| (e, e + 1)).collect();
        let mut k = SparseSymMatrix::with_pattern(nel + 1, pairs.clone());
        let mut m = SparseSymMatrix::with_pattern(nel + 1, pairs);
        for e in 0..nel {
            k.add(e, e, 1.0 / h);
            k.add(e + 1, e + 1, 1.0 / h);
            k.add(e, e + 1, -1.0 / h);
            m.add(e, e, h / 3.0);
            m.add(e + 1, e + 1, h / 3.0);
            m.add(e, e + 1, h / 6.0);
        }
        (k, m)
    }

    #[test]
    fn interval_spectrum_lanczos_matches_dense() {
        let (k, m) = interval(2000, 2.0);
        let res = solve_gevp(&k, &m, &EigenOptions::new(6)).unwrap();
        for (i, lam) in res.eigenvalues.iter().enumerate() {
            let exact = (i as f64 * PI / 2.0).powi(2);
            assert!((lam - exact).abs() <= 1e-5 * exact.max(1.0), "mode {i}: {lam} vs {exact}");
        }
        // M-orthonormality.
        for i in 0..6 {
            for j in 0..6 {
                let g = m.bilinear(&res.eigenvectors[i], &res.eigenvectors[j]);
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((g - target).abs() < 1e-8);
            }
        }
        let (k2, m2) = interval(100, 2.0);
        let dense = solve_gevp(&k2, &m2, &EigenOptions::new(4)).unwrap();
        let (k3, m3) = interval(300, 2.0);
        let lz = solve_gevp(&k3, &m3, &EigenOptions::new(4)).unwrap();
        for i in 1..4 {
            // Both are P1 approximations from above of (iπ/2)².
            let exact = (i as f64 * PI / 2.0).powi(2);
            assert!(dense.eigenvalues[i] > lz.eigenvalues[i] && lz.eigenvalues[i] > exact);
        }
    }

    #[test]
    fn repeated_eigenvalues_are_resolved() {
        // Two disconnected identical intervals: every eigenvalue is double.
        let (k1, m1) = interval(400, 1.0);
        let n1 = k1.dim();
        let mut pairs = Vec::new();
        for (i, j, _) in k1.lower_entries() {
            pairs.push((i, j));
            pairs.push((i + n1, j + n1));
        }
        let mut k = SparseSymMatrix::with_pattern(2 * n1, pairs.clone());
        let mut m = SparseSymMatrix::with_pattern(2 * n1, pairs);
        for (i, j, v) in k1.lower_entries() {
            k.add(i, j, v);
            k.add(i + n1, j + n1, v);
        }
        for (i, j, v) in m1.lower_entries() {
            m.add(i, j, v);
            m.add(i + n1, j + n1, v);
        }
        let res = solve_gevp(&k, &m, &EigenOptions::new(6)).unwrap();
        for p in 0..3 {
            let a = res.eigenvalues[2 * p];
            let b = res.eigenvalues[2 * p + 1];
            assert!((a - b).abs() < 1e-8 * a.max(1.0), "{a} vs {b}");
            let exact = (p as f64 * PI).powi(2);
            assert!((a - exact).abs() < 1e-3 * exact.max(1.0));
        }
    }
}
