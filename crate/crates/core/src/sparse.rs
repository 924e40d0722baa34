//! Symmetric sparse matrices in compressed-row form (lower triangle) and a
//! profile (skyline) LDLᵀ factorization with reverse Cuthill–McKee ordering.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Symmetric matrix storing the lower triangle, diagonal included, row by
/// row with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymMatrix {
    /// Zero matrix with the lower-triangular pattern given by `pairs`
    /// (either orientation; the diagonal is always included).
    pub fn with_pattern(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut rows: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for (a, b) in pairs {
            let (i, j) = if a >= b { (a, b) } else { (b, a) };
            rows[i].push(j);
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_unstable();
            r.dedup();
            col_idx.extend(r);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        SparseSymMatrix {
            n,
            row_ptr,
            col_idx,
            values: vec![0.0; nnz],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let cols = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        cols.binary_search(&j).ok().map(|k| self.row_ptr[i] + k)
    }

    /// Adds `v` to entry `(i, j)` (and implicitly `(j, i)`).
    ///
    /// Panics if the entry is outside the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self
            .slot(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) is not in the sparsity pattern"));
        self.values[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.values[self.row_ptr[i + 1] - 1]).collect()
    }

    /// Iterates the stored lower-triangle entries `(i, j, v)` with `j <= i`.
    pub fn lower_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (i, self.col_idx[k], self.values[k]))
        })
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                let a = self.values[k];
                acc += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
            y[i] += acc;
        }
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.matvec(y);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }

    pub fn quadratic(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    pub fn scale(&mut self, c: f64) {
        self.values.iter_mut().for_each(|v| *v *= c);
    }

    /// `Σ c_k A_k` for matrices sharing one pattern.
    pub fn combine(terms: &[(f64, &SparseSymMatrix)]) -> Result<SparseSymMatrix> {
        let first = terms
            .first()
            .ok_or_else(|| Error::Domain("empty linear combination".into()))?
            .1;
        let mut out = first.clone();
        out.values.iter_mut().for_each(|v| *v = 0.0);
        for (c, m) in terms {
            if m.row_ptr != first.row_ptr || m.col_idx != first.col_idx {
                return Err(Error::Domain("matrices do not share a sparsity pattern".into()));
            }
            for (o, v) in out.values.iter_mut().zip(&m.values) {
                *o += c * v;
            }
        }
        Ok(out)
    }

    /// Adjacency lists of the off-diagonal pattern.
    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                if j != i {
                    adj[i].push(j);
                    adj[j].push(i);
                }
            }
        }
        adj
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ordering {
    /// Keep the given numbering.
    Natural,
    /// Reverse Cuthill–McKee bandwidth reduction.
    ReverseCuthillMcKee,
}

/// Reverse Cuthill–McKee permutation: `perm[new] = old`.
pub fn reverse_cuthill_mckee(m: &SparseSymMatrix) -> Vec<usize> {
    let adj = m.adjacency();
    let n = m.dim();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        // Start each component from a pseudo-peripheral node.
        let seed = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i))
            .expect("unvisited node");
        let start = pseudo_peripheral(&adj, &degree, seed, &visited);
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            nbrs.sort_unstable_by_key(|&w| (degree[w], w));
            nbrs.dedup();
            for w in nbrs {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn pseudo_peripheral(adj: &[Vec<usize>], degree: &[usize], seed: usize, blocked: &[bool]) -> usize {
    let mut current = seed;
    let mut ecc = 0;
    for _ in 0..8 {
        let levels = bfs_levels(adj, current, blocked);
        let max_level = levels.iter().filter_map(|l| *l).max().unwrap_or(0);
        if max_level <= ecc && ecc > 0 {
            break;
        }
        ecc = max_level;
        current = (0..adj.len())
            .filter(|&i| levels[i] == Some(max_level))
            .min_by_key(|&i| (degree[i], i))
            .unwrap_or(current);
    }
    current
}

fn bfs_levels(adj: &[Vec<usize>], start: usize, blocked: &[bool]) -> Vec<Option<usize>> {
    let mut level = vec![None; adj.len()];
    level[start] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        let lv = level[v].unwrap();
        for &w in &adj[v] {
            if level[w].is_none() && !blocked[w] {
                level[w] = Some(lv + 1);
                queue.push_back(w);
            }
        }
    }
    level
}

/// Profile factorization `Pᵀ A P = L D Lᵀ` with unit lower triangular `L`
/// stored row-wise from each row's first nonzero column.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    perm: Vec<usize>,
    first: Vec<usize>,
    row_start: Vec<usize>,
    lower: Vec<f64>,
    diag: Vec<f64>,
}

impl LdlFactor {
    pub fn new(a: &SparseSymMatrix, ordering: Ordering) -> Result<Self> {
        let n = a.dim();
        let perm = match ordering {
            Ordering::Natural => (0..n).collect(),
            Ordering::ReverseCuthillMcKee => reverse_cuthill_mckee(a),
        };
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        // Profile of the permuted matrix.
        let mut first: Vec<usize> = (0..n).collect();
        for (i, j, _) in a.lower_entries() {
            let (pi, pj) = (inv[i], inv[j]);
            let (r, c) = if pi >= pj { (pi, pj) } else { (pj, pi) };
            first[r] = first[r].min(c);
        }
        let mut row_start = Vec::with_capacity(n + 1);
        row_start.push(0);
        for i in 0..n {
            row_start.push(row_start[i] + (i - first[i]));
        }
        let mut lower = vec![0.0; row_start[n]];
        let mut diag = vec![0.0; n];
        for (i, j, v) in a.lower_entries() {
            let (pi, pj) = (inv[i], inv[j]);
            let (r, c) = if pi >= pj { (pi, pj) } else { (pj, pi) };
            if r == c {
                diag[r] += v;
            } else {
                lower[row_start[r] + c - first[r]] += v;
            }
        }
        let scale = diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        for i in 0..n {
            let fi = first[i];
            let ri = row_start[i];
            // Overwrite row i with u_k = L_ik D_k, then divide.
            for j in fi..i {
                let fj = first[j];
                let rj = row_start[j];
                let k0 = fi.max(fj);
                let mut s = lower[ri + j - fi];
                for k in k0..j {
                    s -= lower[ri + k - fi] * lower[rj + k - fj];
                }
                lower[ri + j - fi] = s;
            }
            let mut d = diag[i];
            for k in fi..i {
                let u = lower[ri + k - fi];
                let l = u / diag[k];
                d -= u * l;
                lower[ri + k - fi] = l;
            }
            if !(d.abs() > 1e-14 * scale) {
                return Err(Error::Solver(format!(
                    "zero pivot {d:.3e} at row {} during LDLᵀ factorization",
                    perm[i]
                )));
            }
            diag[i] = d;
        }
        Ok(LdlFactor {
            perm,
            first,
            row_start,
            lower,
            diag,
        })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Number of stored off-diagonal profile entries.
    pub fn profile_size(&self) -> usize {
        self.lower.len()
    }

    /// Count of negative pivots, i.e. the number of negative eigenvalues.
    pub fn negative_pivots(&self) -> usize {
        self.diag.iter().filter(|d| **d < 0.0).count()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut z: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let ri = self.row_start[i];
            let mut s = z[i];
            for k in fi..i {
                s -= self.lower[ri + k - fi] * z[k];
            }
            z[i] = s;
        }
        for i in 0..n {
            z[i] /= self.diag[i];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let ri = self.row_start[i];
            let zi = z[i];
            for k in fi..i {
                z[k] -= self.lower[ri + k - fi] * zi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = z[new];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn laplacian_2d(nx: usize, ny: usize) -> SparseSymMatrix {
        let id = |i: usize, j: usize| i * ny + j;
        let mut pairs = Vec::new();
        for i in 0..nx {
            for j in 0..ny {
                if i + 1 < nx {
                    pairs.push((id(i, j), id(i + 1, j)));
                }
                if j + 1 < ny {
                    pairs.push((id(i, j), id(i, j + 1)));
                }
            }
        }
        let mut m = SparseSymMatrix::with_pattern(nx * ny, pairs.clone());
        for (a, b) in pairs {
            m.add(a, b, -1.0);
            m.add(a, a, 1.0);
            m.add(b, b, 1.0);
        }
        for i in 0..nx * ny {
            m.add(i, i, 0.5);
        }
        m
    }

    #[test]
    fn matvec_matches_dense() {
        let m = laplacian_2d(3, 4);
        let x: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let y = m.matvec(&x);
        for i in 0..12 {
            let dense: f64 = (0..12).map(|j| m.get(i, j) * x[j]).sum();
            assert!((dense - y[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn ldlt_solves_both_orderings() {
        let m = laplacian_2d(20, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b: Vec<f64> = (0..m.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for ord in [Ordering::Natural, Ordering::ReverseCuthillMcKee] {
            let f = LdlFactor::new(&m, ord).unwrap();
            let x = f.solve(&b);
            let r = m.matvec(&x);
            let err = r.iter().zip(&b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-12, "{ord:?}: residual {err}");
            assert_eq!(f.negative_pivots(), 0);
        }
    }

    #[test]
    fn rcm_shrinks_profile_of_scrambled_grid() {
        let m = laplacian_2d(30, 5);
        // Scramble numbering: interleave from both ends.
        let n = m.dim();
        let scramble: Vec<usize> = (0..n).map(|k| if k % 2 == 0 { k / 2 } else { n - 1 - k / 2 }).collect();
        let mut pairs = Vec::new();
        for (i, j, _) in m.lower_entries() {
            pairs.push((scramble[i], scramble[j]));
        }
        let mut s = SparseSymMatrix::with_pattern(n, pairs);
        for (i, j, v) in m.lower_entries() {
            s.add(scramble[i], scramble[j], v);
        }
        let nat = LdlFactor::new(&s, Ordering::Natural).unwrap();
        let rcm = LdlFactor::new(&s, Ordering::ReverseCuthillMcKee).unwrap();
        assert!(rcm.profile_size() * 5 < nat.profile_size());
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let mut m = SparseSymMatrix::with_pattern(2, [(0, 1)]);
        m.add(0, 0, 1.0);
        m.add(1, 1, 1.0);
        m.add(0, 1, 1.0);
        assert!(matches!(LdlFactor::new(&m, Ordering::Natural), Err(Error::Solver(_))));
    }
}
