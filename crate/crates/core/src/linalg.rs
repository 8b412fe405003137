//! Sparse symmetric linear algebra: CSR storage, reverse Cuthill-McKee
//! ordering, envelope (skyline) Cholesky with iterative refinement, and a
//! cyclic Jacobi eigensolver for small dense symmetric matrices.
//!
//! Everything here is deterministic: no pivoting heuristics depend on
//! hash-map iteration order and no parallelism reorders reductions.

use crate::error::{Error, Result};

/// Symmetric sparse matrix stored as full CSR (both triangles).
#[derive(Debug, Clone)]
pub struct SparseSym {
    pub n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseSym {
    /// Build from (row, col, value) triplets; duplicates are summed.
    /// The caller is expected to provide a structurally symmetric set.
    pub fn from_triplets(n: usize, mut trip: Vec<(u32, u32, f64)>) -> SparseSym {
        trip.sort_unstable_by_key(|&(r, c, _)| ((r as u64) << 32) | c as u64);
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx: Vec<u32> = Vec::new();
        let mut vals: Vec<f64> = Vec::new();
        let mut last: Option<(u32, u32)> = None;
        for (r, c, v) in trip {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                vals.push(v);
                row_ptr[r as usize + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseSym { n, row_ptr, col_idx, vals }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[a..b], &self.vals[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&(j as u32)) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut s = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                s += v * x[*c as usize];
            }
            out[i] = s;
        }
    }

    /// Residual b - A x with compensated (double-double) accumulation, so
    /// that iterative refinement is not limited by the f64 rounding of the
    /// residual itself on ill-conditioned operators.
    pub fn residual_compensated(&self, x: &[f64], b: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut hi = b[i];
            let mut lo = 0.0f64;
            for (c, v) in cols.iter().zip(vals) {
                // two-product via fma, then two-sum accumulate
                let p = -(v * x[*c as usize]);
                let e = (-*v).mul_add(x[*c as usize], -p);
                let s = hi + p;
                let bb = s - hi;
                let err = (hi - (s - bb)) + (p - bb);
                hi = s;
                lo += err + e;
            }
            out[i] = hi + lo;
        }
    }

    /// Max row 1-norm.
    pub fn inf_norm(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum())
            .fold(0.0f64, f64::max)
    }

    /// Maximum relative asymmetry |a_ij - a_ji| / max|a|, for sanity checks.
    pub fn asymmetry(&self) -> f64 {
        let amax = self.vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if amax == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(*c as usize, i)).abs());
            }
        }
        worst / amax
    }
}

/// Reverse Cuthill-McKee ordering of the sparsity graph.
/// Returns `perm` with `perm[new] = old`.
fn rcm_order(a: &SparseSym) -> Vec<usize> {
    let n = a.n;
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).0.len()).collect();
    let mut visited = vec![false; n];
    let mut order: Vec<usize> = Vec::with_capacity(n);
    let mut component: Vec<usize> = Vec::new();

    while order.len() < n {
        // lowest-degree unvisited node, then push the BFS level structure
        // out once to approximate a peripheral start
        let mut start = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i))
            .unwrap();
        for _ in 0..2 {
            component.clear();
            component.push(start);
            let mut seen = vec![false; n];
            seen[start] = true;
            let mut head = 0;
            let mut last_level_start = 0;
            while head < component.len() {
                let level_end = component.len();
                last_level_start = head;
                while head < level_end {
                    let u = component[head];
                    head += 1;
                    for &c in a.row(u).0 {
                        let c = c as usize;
                        if !seen[c] && !visited[c] {
                            seen[c] = true;
                            component.push(c);
                        }
                    }
                }
            }
            start = *component[last_level_start..]
                .iter()
                .min_by_key(|&&i| (degree[i], i))
                .unwrap();
        }

        let mut queue = std::collections::VecDeque::new();
        visited[start] = true;
        queue.push_back(start);
        let mut nbrs: Vec<usize> = Vec::new();
        while let Some(u) = queue.pop_front() {
            order.push(u);
            nbrs.clear();
            nbrs.extend(a.row(u).0.iter().map(|&c| c as usize).filter(|&c| !visited[c]));
            nbrs.sort_unstable_by_key(|&c| (degree[c], c));
            for &c in &nbrs {
                visited[c] = true;
                queue.push_back(c);
            }
        }
    }
    order.reverse();
    order
}

/// Row-oriented in-place envelope factorization; Err carries the offending
/// pivot value.
fn factor_envelope(
    base: &[f64],
    first: &[usize],
    row_start: &[usize],
    n: usize,
    shift: f64,
) -> std::result::Result<Vec<f64>, f64> {
    let mut env = base.to_vec();
    for i in 0..n {
        env[row_start[i] + (i - first[i])] += shift;
    }
    for i in 0..n {
        let fi = first[i];
        for j in fi..i {
            let fj = first[j];
            let lo = fi.max(fj);
            let mut s = env[row_start[i] + (j - fi)];
            if lo < j {
                let ri = row_start[i] + (lo - fi);
                let rj = row_start[j] + (lo - fj);
                let len = j - lo;
                let (ai, aj) = (&env[ri..ri + len], &env[rj..rj + len]);
                let mut acc = 0.0;
                for k in 0..len {
                    acc += ai[k] * aj[k];
                }
                s -= acc;
            }
            env[row_start[i] + (j - fi)] = s / env[row_start[j] + (j - fj)];
        }
        let mut d = env[row_start[i] + (i - fi)];
        for k in fi..i {
            let l = env[row_start[i] + (k - fi)];
            d -= l * l;
        }
        if !(d > 1e-15) || !d.is_finite() {
            return Err(d);
        }
        env[row_start[i] + (i - fi)] = d.sqrt();
    }
    Ok(env)
}

/// Envelope (skyline) Cholesky factorization of a permuted SPD matrix.
#[derive(Debug)]
pub struct SpdFactor {
    n: usize,
    /// perm[new] = old
    perm: Vec<usize>,
    first: Vec<usize>,
    row_start: Vec<usize>,
    env: Vec<f64>,
    /// diagonal equilibration: the factored matrix is D^-1 A D^-1 with
    /// D = diag(sqrt(a_ii)), which removes the (potentially astronomical)
    /// scale spread between mass-dominated and derivative-dominated rows
    scale: Vec<f64>,
    /// matrix kept for refinement residuals
    mat: SparseSym,
}

impl SpdFactor {
    /// Factor an SPD matrix. Fails with `SingularOperator` on a nonpositive
    /// pivot (matrix not positive definite to working precision).
    pub fn new(a: SparseSym) -> Result<SpdFactor> {
        let n = a.n;
        let mut scale = vec![0.0f64; n];
        for i in 0..n {
            let d = a.get(i, i);
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::SingularOperator(format!(
                    "nonpositive diagonal {d:.3e} at {i}"
                )));
            }
            scale[i] = d.sqrt();
        }
        let perm = rcm_order(&a);
        let mut inv_perm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv_perm[old] = new;
        }

        // envelope: first[i] = min column of permuted row i (including i)
        let mut first: Vec<usize> = (0..n).collect();
        for new_i in 0..n {
            for &c in a.row(perm[new_i]).0 {
                let new_j = inv_perm[c as usize];
                if new_j < first[new_i] {
                    first[new_i] = new_j;
                }
            }
        }
        // column version of the envelope must also cover row entries below
        // the diagonal; symmetry of A makes first[] alone sufficient.
        let mut row_start = vec![0usize; n + 1];
        for i in 0..n {
            row_start[i + 1] = row_start[i] + (i - first[i] + 1);
        }
        let mut base = vec![0.0f64; row_start[n]];
        for new_i in 0..n {
            let old_i = perm[new_i];
            let (cols, vals) = a.row(old_i);
            for (c, v) in cols.iter().zip(vals) {
                let new_j = inv_perm[*c as usize];
                if new_j <= new_i {
                    base[row_start[new_i] + (new_j - first[new_i])] =
                        v / (scale[old_i] * scale[*c as usize]);
                }
            }
        }

        // factor the equilibrated matrix (unit diagonal); a Gram matrix that
        // is PD in exact arithmetic can be numerically semidefinite, in
        // which case a diagonal shift restores factorability and iterative
        // refinement against the unshifted matrix absorbs the perturbation
        let mut shift = 0.0f64;
        let env = loop {
            match factor_envelope(&base, &first, &row_start, n, shift) {
                Ok(env) => break env,
                Err(pivot) => {
                    if shift >= 1e-4 {
                        return Err(Error::SingularOperator(format!(
                            "pivot {pivot:.3e} with shift {shift:.1e} on {n} columns"
                        )));
                    }
                    shift = if shift == 0.0 { 1e-12 } else { shift * 16.0 };
                }
            }
        };

        Ok(SpdFactor { n, perm, first, row_start, env, scale, mat: a })
    }

    fn raw_solve(&self, b: &[f64], x: &mut [f64]) {
        let n = self.n;
        // A x = b  <=>  (D^-1 A D^-1) (D x) = D^-1 b
        let mut y = vec![0.0f64; n];
        for i in 0..n {
            let old = self.perm[i];
            y[i] = b[old] / self.scale[old];
        }
        // forward: L y' = y
        for i in 0..n {
            let fi = self.first[i];
            let base = self.row_start[i];
            let mut s = y[i];
            for k in fi..i {
                s -= self.env[base + (k - fi)] * y[k];
            }
            y[i] = s / self.env[base + (i - fi)];
        }
        // backward: L^T x' = y'
        for i in (0..n).rev() {
            let fi = self.first[i];
            let base = self.row_start[i];
            let xi = y[i] / self.env[base + (i - fi)];
            y[i] = xi;
            for k in fi..i {
                y[k] -= self.env[base + (k - fi)] * xi;
            }
        }
        for i in 0..n {
            let old = self.perm[i];
            x[old] = y[i] / self.scale[old];
        }
    }

    /// Solve A x = b with iterative refinement (compensated residuals).
    /// Returns (x, backward error, refinement passes). The backward error
    /// ||b - Ax|| / (||A|| ||x|| + ||b||) is the scale-free relative
    /// residual: f64 storage of x caps the naive ||r||/||b|| at
    /// eps ||A|| ||x|| / ||b|| no matter how well the system is solved.
    pub fn solve(&self, b: &[f64]) -> (Vec<f64>, f64, usize) {
        let n = self.n;
        let bnorm = norm2(b).max(f64::MIN_POSITIVE);
        let anorm = self.mat.inf_norm();
        let mut x = vec![0.0f64; n];
        self.raw_solve(b, &mut x);
        let mut r = vec![0.0f64; n];
        let mut dx = vec![0.0f64; n];
        let mut passes = 0;
        let mut eta;
        loop {
            self.mat.residual_compensated(&x, b, &mut r);
            eta = norm2(&r) / (anorm * norm2(&x) + bnorm);
            if eta <= 1e-15 || passes >= 6 {
                break;
            }
            self.raw_solve(&r, &mut dx);
            for i in 0..n {
                x[i] += dx[i];
            }
            passes += 1;
        }
        (x, eta, passes)
    }

    pub fn matrix(&self) -> &SparseSym {
        &self.mat
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Eigenvalues of a dense symmetric matrix (row-major, n x n) by cyclic
/// Jacobi rotations. Returns them sorted ascending.
pub fn sym_eigenvalues(a_in: &[f64], n: usize) -> Vec<f64> {
    assert_eq!(a_in.len(), n * n);
    let mut a = a_in.to_vec();
    // symmetrize defensively; callers pass matrices symmetric to roundoff
    for i in 0..n {
        for j in 0..i {
            let m = 0.5 * (a[i * n + j] + a[j * n + i]);
            a[i * n + j] = m;
            a[j * n + i] = m;
        }
    }
    let scale = (0..n * n).map(|k| a[k].abs()).fold(0.0f64, f64::max);
    if scale == 0.0 {
        return vec![0.0; n];
    }
    for _sweep in 0..64 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off = off.max(a[i * n + j].abs());
            }
        }
        if off <= 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
    eig
}

/// Cholesky solve for a small dense SPD system (row-major), used for the
/// kernel interpolation systems K alpha = y.
pub fn dense_spd_solve(a_in: &[f64], n: usize, b: &[f64]) -> Result<Vec<f64>> {
    let mut l = a_in.to_vec();
    for j in 0..n {
        for k in 0..j {
            let ljk = l[j * n + k];
            for i in j..n {
                l[i * n + j] -= l[i * n + k] * ljk;
            }
        }
        let d = l[j * n + j];
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::SingularOperator(format!(
                "dense factorization pivot {d:.3e} at {j}"
            )));
        }
        let inv = 1.0 / d.sqrt();
        for i in j..n {
            l[i * n + j] *= inv;
        }
    }
    let mut x = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            x[i] -= l[i * n + k] * x[k];
        }
        x[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            x[i] -= l[k * n + i] * x[k];
        }
        x[i] /= l[i * n + i];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn laplacian_1d(n: usize) -> SparseSym {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i as u32, i as u32, 2.0 + 0.1 * (i as f64 + 1.0)));
            if i + 1 < n {
                t.push((i as u32, (i + 1) as u32, -1.0));
                t.push(((i + 1) as u32, i as u32, -1.0));
            }
        }
        SparseSym::from_triplets(n, t)
    }

    #[test]
    fn skyline_solves_spd_system_to_tiny_residual() {
        let a = laplacian_1d(200);
        let f = SpdFactor::new(a.clone()).unwrap();
        let mut rng = Rng::seed_from(3);
        let b: Vec<f64> = (0..200).map(|_| rng.normal()).collect();
        let (x, rel, _) = f.solve(&b);
        let mut ax = vec![0.0; 200];
        a.matvec(&x, &mut ax);
        let r: Vec<f64> = ax.iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(norm2(&r) / norm2(&b) < 1e-12);
        assert!(rel < 1e-12);
    }

    #[test]
    fn factor_rejects_indefinite() {
        let t = vec![(0u32, 0u32, 1.0), (1, 1, -1.0)];
        let a = SparseSym::from_triplets(2, t);
        assert!(matches!(SpdFactor::new(a), Err(Error::SingularOperator(_))));
    }

    #[test]
    fn jacobi_eigenvalues_match_known_spectrum() {
        // diag(1, 4, 9) rotated by a Givens rotation keeps eigenvalues
        let (c, s) = (0.8, 0.6);
        // A = R diag R^T with rotation in the (0,1) plane
        let d = [1.0, 4.0, 9.0];
        let a = [
            c * c * d[0] + s * s * d[1],
            c * s * (d[1] - d[0]),
            0.0,
            c * s * (d[1] - d[0]),
            s * s * d[0] + c * c * d[1],
            0.0,
            0.0,
            0.0,
            d[2],
        ];
        let e = sym_eigenvalues(&a, 3);
        assert!((e[0] - 1.0).abs() < 1e-12);
        assert!((e[1] - 4.0).abs() < 1e-12);
        assert!((e[2] - 9.0).abs() < 1e-12);
    }

    #[test]
    fn dense_solve_roundtrip() {
        let a = [4.0, 1.0, 1.0, 3.0];
        let x = dense_spd_solve(&a, 2, &[1.0, 2.0]).unwrap();
        assert!((4.0 * x[0] + x[1] - 1.0).abs() < 1e-13);
        assert!((x[0] + 3.0 * x[1] - 2.0).abs() < 1e-13);
    }
}
