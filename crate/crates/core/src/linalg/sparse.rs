//! Sparse linear least squares through the normal equations.
//!
//! Rows are accumulated one at a time; variables may be pinned to fixed
//! values (one value per right-hand side) to remove gauge freedoms. The
//! normal matrix is reordered by reverse Cuthill-McKee and factored with an
//! envelope (profile) Cholesky, which is cheap for mesh-shaped graphs.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Pivot floor, relative to the diagonal entry, below which the system is
/// reported as rank deficient.
const PIVOT_TOL: f64 = 1e-13;

#[derive(Clone, Debug)]
pub struct LeastSquares {
    n_vars: usize,
    n_rhs: usize,
    fixed: Vec<Option<Vec<f64>>>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    rhs: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct LsqSolution {
    /// `x[r][v]`: value of variable `v` for right-hand side `r`.
    pub x: Vec<Vec<f64>>,
    /// Residual norm `|A x - b|` per right-hand side.
    pub residual: Vec<f64>,
}

impl LeastSquares {
    pub fn new(n_vars: usize, n_rhs: usize) -> Self {
        LeastSquares {
            n_vars,
            n_rhs,
            fixed: vec![None; n_vars],
            row_ptr: vec![0],
            cols: Vec::new(),
            vals: Vec::new(),
            rhs: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn n_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    /// Pins variable `var` to `values[r]` for each right-hand side `r`.
    pub fn fix(&mut self, var: usize, values: &[f64]) {
        assert_eq!(values.len(), self.n_rhs);
        self.fixed[var] = Some(values.to_vec());
    }

    /// Appends the equation `Σ coef * x[col] = rhs[r]`.
    pub fn add_row(&mut self, coeffs: &[(usize, f64)], rhs: &[f64]) {
        assert_eq!(rhs.len(), self.n_rhs);
        for &(c, v) in coeffs {
            assert!(c < self.n_vars, "column {c} out of range");
            if v != 0.0 {
                self.cols.push(c);
                self.vals.push(v);
            }
        }
        self.rhs.extend_from_slice(rhs);
        self.row_ptr.push(self.cols.len());
    }

    fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    pub fn solve(&self) -> Result<LsqSolution> {
        let mut free_index = vec![usize::MAX; self.n_vars];
        let mut n_free = 0;
        for (v, f) in self.fixed.iter().enumerate() {
            if f.is_none() {
                free_index[v] = n_free;
                n_free += 1;
            }
        }

        // Normal equations on free variables, lower triangle as adjacency lists.
        let mut lists: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_free];
        let mut b = vec![vec![0.0; n_free]; self.n_rhs];
        let mut eff = vec![0.0; self.n_rhs];
        for r in 0..self.n_rows() {
            let (cols, vals) = self.row(r);
            eff.copy_from_slice(&self.rhs[r * self.n_rhs..(r + 1) * self.n_rhs]);
            for (&c, &v) in cols.iter().zip(vals) {
                if let Some(fv) = &self.fixed[c] {
                    for (e, x) in eff.iter_mut().zip(fv) {
                        *e -= v * x;
                    }
                }
            }
            for (&ci, &vi) in cols.iter().zip(vals) {
                let i = free_index[ci];
                if i == usize::MAX {
                    continue;
                }
                for (k, e) in eff.iter().enumerate() {
                    b[k][i] += vi * e;
                }
                for (&cj, &vj) in cols.iter().zip(vals) {
                    let j = free_index[cj];
                    if j != usize::MAX && j <= i {
                        lists[i].push((j, vi * vj));
                    }
                }
            }
        }
        let normal = SymmetricCsr::from_lists(lists);

        let xs_free = if n_free == 0 {
            vec![Vec::new(); self.n_rhs]
        } else {
            let perm = reverse_cuthill_mckee(&normal);
            let chol = EnvelopeCholesky::factor(&normal, &perm)?;
            b.iter().map(|rhs| chol.solve(rhs)).collect()
        };

        let x: Vec<Vec<f64>> = (0..self.n_rhs)
            .map(|k| {
                (0..self.n_vars)
                    .map(|v| match &self.fixed[v] {
                        Some(fv) => fv[k],
                        None => xs_free[k][free_index[v]],
                    })
                    .collect()
            })
            .collect();
        let residual = x.iter().enumerate().map(|(k, xk)| self.residual_norm(xk, k)).collect();
        Ok(LsqSolution { x, residual })
    }

    /// `|A x - b_k|` for a full-length variable vector.
    pub fn residual_norm(&self, x: &[f64], k: usize) -> f64 {
        (0..self.n_rows())
            .map(|r| {
                let (cols, vals) = self.row(r);
                let ax: f64 = cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum();
                let d = ax - self.rhs[r * self.n_rhs + k];
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Symmetric matrix stored as full adjacency rows (both triangles), merged.
struct SymmetricCsr {
    rows: Vec<Vec<(usize, f64)>>,
}

impl SymmetricCsr {
    fn from_lists(lower: Vec<Vec<(usize, f64)>>) -> Self {
        let n = lower.len();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, mut l) in lower.into_iter().enumerate() {
            l.sort_unstable_by_key(|&(j, _)| j);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(l.len());
            for (j, v) in l {
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += v,
                    _ => merged.push((j, v)),
                }
            }
            for &(j, v) in &merged {
                rows[i].push((j, v));
                if j != i {
                    rows[j].push((i, v));
                }
            }
        }
        for r in &mut rows {
            r.sort_unstable_by_key(|&(j, _)| j);
        }
        SymmetricCsr { rows }
    }

    fn n(&self) -> usize {
        self.rows.len()
    }
}

/// Reverse Cuthill-McKee ordering; `perm[new] = old`.
fn reverse_cuthill_mckee(m: &SymmetricCsr) -> Vec<usize> {
    let n = m.n();
    let degree: Vec<usize> = m.rows.iter().map(|r| r.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree[v], v));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = peripheral_node(m, seed, &degree);
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = m.rows[v]
                .iter()
                .map(|&(j, _)| j)
                .filter(|&j| !visited[j])
                .collect();
            nbrs.sort_by_key(|&j| (degree[j], j));
            for j in nbrs {
                visited[j] = true;
                queue.push_back(j);
            }
        }
    }
    order.reverse();
    order
}

/// A node of (near) maximal eccentricity in the component of `seed`, found by
/// repeated breadth-first sweeps.
fn peripheral_node(m: &SymmetricCsr, seed: usize, degree: &[usize]) -> usize {
    let mut node = seed;
    let mut ecc = 0;
    for _ in 0..8 {
        let levels = bfs_levels(m, node);
        let max_level = *levels.iter().filter_map(|l| l.as_ref()).max().unwrap_or(&0);
        if max_level <= ecc && node != seed {
            break;
        }
        ecc = max_level;
        let candidate = (0..m.n())
            .filter(|&v| levels[v] == Some(max_level))
            .min_by_key(|&v| (degree[v], v))
            .unwrap_or(node);
        if candidate == node {
            break;
        }
        node = candidate;
    }
    node
}

fn bfs_levels(m: &SymmetricCsr, start: usize) -> Vec<Option<usize>> {
    let mut level = vec![None; m.n()];
    level[start] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        let lv = level[v].unwrap();
        for &(j, _) in &m.rows[v] {
            if level[j].is_none() {
                level[j] = Some(lv + 1);
                queue.push_back(j);
            }
        }
    }
    level
}

/// Lower-triangular Cholesky factor stored row by row over each row's envelope.
struct EnvelopeCholesky {
    perm: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    fn factor(m: &SymmetricCsr, perm: &[usize]) -> Result<Self> {
        let n = m.n();
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first = vec![0; n];
        for (i, &old) in perm.iter().enumerate() {
            first[i] = m.rows[old].iter().map(|&(j, _)| inv[j]).min().unwrap_or(i).min(i);
        }
        let mut start = Vec::with_capacity(n + 1);
        let mut total = 0;
        for i in 0..n {
            start.push(total);
            total += i - first[i] + 1;
        }
        start.push(total);
        let mut data = vec![0.0; total];
        for (i, &old) in perm.iter().enumerate() {
            for &(j, v) in &m.rows[old] {
                let jn = inv[j];
                if jn <= i {
                    data[start[i] + jn - first[i]] = v;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let row_i = &data[start[i] + k0 - fi..start[i] + j - fi];
                let row_j = &data[start[j] + k0 - fj..start[j] + j - fj];
                let dot: f64 = row_i.iter().zip(row_j).map(|(a, b)| a * b).sum();
                let ljj = data[start[j] + j - fj];
                let idx = start[i] + j - fi;
                data[idx] = (data[idx] - dot) / ljj;
            }
            let diag_idx = start[i] + i - fi;
            let a_ii = data[diag_idx];
            let sq: f64 = data[start[i]..diag_idx].iter().map(|a| a * a).sum();
            let d = a_ii - sq;
            if !(d > PIVOT_TOL * a_ii.abs()) || !d.is_finite() {
                return Err(Error::Solver(format!(
                    "normal equations are rank deficient (pivot {d:e} at variable {})",
                    perm[i]
                )));
            }
            data[diag_idx] = d.sqrt();
        }
        Ok(EnvelopeCholesky {
            perm: perm.to_vec(),
            first,
            start,
            data,
        })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.perm.len();
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        // L y = b
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let dot: f64 = row[..i - fi].iter().zip(&y[fi..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - dot) / row[i - fi];
        }
        // L^T x = y
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            y[i] /= row[i - fi];
            let yi = y[i];
            for (k, a) in row[..i - fi].iter().enumerate() {
                y[fi + k] -= a * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Dense oracle: minimum of |A x - b| through nalgebra's SVD solve.
    fn dense_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
        a.clone().svd(true, true).solve(b, 1e-14).unwrap()
    }

    #[test]
    fn matches_dense_oracle_on_random_sparse_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (n, rows) = (40, 120);
        let mut lsq = LeastSquares::new(n, 2);
        let mut a = DMatrix::zeros(rows, n);
        let mut b0 = DVector::zeros(rows);
        let mut b1 = DVector::zeros(rows);
        for r in 0..rows {
            let mut coeffs = Vec::new();
            for _ in 0..4 {
                let c = rng.random_range(0..n);
                let v: f64 = rng.random_range(-1.0..1.0);
                coeffs.push((c, v));
                a[(r, c)] += v;
            }
            let rhs = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            b0[r] = rhs[0];
            b1[r] = rhs[1];
            lsq.add_row(&coeffs, &rhs);
        }
        let sol = lsq.solve().unwrap();
        for (k, b) in [b0, b1].iter().enumerate() {
            let oracle = dense_solve(&a, b);
            for v in 0..n {
                assert!((sol.x[k][v] - oracle[v]).abs() < 1e-9, "var {v}");
            }
            let res = (&a * &oracle - b).norm();
            assert!((sol.residual[k] - res).abs() < 1e-10);
        }
    }

    #[test]
    fn fixed_variables_move_to_rhs() {
        // x0 - x1 = 1, x1 - x2 = 1, x2 - x0 = -2.5 with x0 pinned at 3.
        let mut lsq = LeastSquares::new(3, 1);
        lsq.fix(0, &[3.0]);
        lsq.add_row(&[(0, 1.0), (1, -1.0)], &[1.0]);
        lsq.add_row(&[(1, 1.0), (2, -1.0)], &[1.0]);
        lsq.add_row(&[(2, 1.0), (0, -1.0)], &[-2.5]);
        let sol = lsq.solve().unwrap();
        // Dense oracle on the two free variables.
        let a = DMatrix::from_row_slice(3, 2, &[-1.0, 0.0, 1.0, -1.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![1.0 - 3.0, 1.0, -2.5 + 3.0]);
        let oracle = dense_solve(&a, &b);
        assert_eq!(sol.x[0][0], 3.0);
        assert!((sol.x[0][1] - oracle[0]).abs() < 1e-12);
        assert!((sol.x[0][2] - oracle[1]).abs() < 1e-12);
    }

    #[test]
    fn disconnected_gauge_is_rank_deficient() {
        let mut lsq = LeastSquares::new(4, 1);
        lsq.fix(0, &[0.0]);
        lsq.add_row(&[(0, 1.0), (1, -1.0)], &[1.0]);
        lsq.add_row(&[(2, 1.0), (3, -1.0)], &[1.0]);
        assert!(matches!(lsq.solve(), Err(Error::Solver(_))));
    }

    #[test]
    fn rcm_is_a_permutation() {
        let lists = (0..10)
            .map(|i| {
                let mut l = vec![(i, 2.0)];
                if i > 0 {
                    l.push((i - 1, -1.0));
                }
                if i > 4 {
                    l.push((i - 5, 0.5));
                }
                l
            })
            .collect();
        let m = SymmetricCsr::from_lists(lists);
        let mut p = reverse_cuthill_mckee(&m);
        p.sort();
        assert_eq!(p, (0..10).collect::<Vec<_>>());
    }
}
