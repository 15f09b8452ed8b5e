//! Symmetric eigensolvers.
//!
//! Small and medium matrices go through Householder tridiagonalization
//! followed by implicit QL iterations with shifts. Above
//! [`DENSE_EIGEN_LIMIT`] the smallest eigenpairs are found with Lanczos and
//! full reorthogonalization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{dot, LaplacianMatrix, Matrix};
use crate::error::{Error, Result};

pub const DENSE_EIGEN_LIMIT: usize = 2048;
pub const LANCZOS_MAX_ITER: usize = 1000;

const RESIDUAL_TOL: f64 = 1e-5;
const QL_MAX_SWEEPS: usize = 60;

/// Eigenvalues in ascending order with matching eigenvector columns.
#[derive(Debug, Clone)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    /// `N x m`, column `k` is the eigenvector for `values[k]`.
    pub vectors: Matrix,
}

impl Eigenpairs {
    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.vectors.column(k)
    }

    /// Largest `|A v - lambda v| / |v|` over all returned pairs.
    pub fn max_residual(&self, a: &Matrix) -> f64 {
        (0..self.values.len())
            .map(|k| {
                let v = self.vector(k);
                let av = a.mul_vec(&v);
                let r: f64 = av
                    .iter()
                    .zip(&v)
                    .map(|(x, y)| (x - self.values[k] * y).powi(2))
                    .sum();
                r.sqrt() / super::norm(&v)
            })
            .fold(0.0, f64::max)
    }
}

/// The `m` eigenpairs of `l` with the smallest eigenvalues.
pub fn smallest_eigvecs(l: &LaplacianMatrix, m: usize) -> Result<Eigenpairs> {
    let n = l.size();
    if m == 0 || m > n {
        return Err(Error::Config(format!(
            "requested {m} eigenvectors of a {n}x{n} matrix"
        )));
    }
    if n <= DENSE_EIGEN_LIMIT {
        let full = dense_symmetric_eigen(l.matrix())?;
        let mut vectors = Matrix::zeros(n, m);
        for i in 0..n {
            vectors
                .row_mut(i)
                .copy_from_slice(&full.vectors.row(i)[..m]);
        }
        Ok(Eigenpairs {
            values: full.values[..m].to_vec(),
            vectors,
        })
    } else {
        lanczos_smallest(l.matrix(), m, LANCZOS_MAX_ITER)
    }
}

/// Full eigendecomposition of a symmetric matrix, eigenvalues ascending.
pub fn dense_symmetric_eigen(a: &Matrix) -> Result<Eigenpairs> {
    assert!(a.is_square(), "eigendecomposition of a non-square matrix");
    let n = a.rows();
    if n == 0 {
        return Ok(Eigenpairs {
            values: Vec::new(),
            vectors: Matrix::zeros(0, 0),
        });
    }
    // column-major working copy: v[j * n + k] holds row k, column j
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            v[j * n + i] = a[(i, j)];
        }
    }
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(n, &mut v, &mut d, &mut e);
    tridiagonal_ql(n, &mut v, &mut d, &mut e)?;
    Ok(sorted_pairs(n, n, &v, &d))
}

fn sorted_pairs(rows: usize, k: usize, v: &[f64], d: &[f64]) -> Eigenpairs {
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| d[x].total_cmp(&d[y]).then(x.cmp(&y)));
    let mut vectors = Matrix::zeros(rows, k);
    for (col, &src) in order.iter().enumerate() {
        for r in 0..rows {
            vectors[(r, col)] = v[src * rows + r];
        }
    }
    Eigenpairs {
        values: order.iter().map(|&i| d[i]).collect(),
        vectors,
    }
}

/// Householder reduction to tridiagonal form. On return `d` holds the
/// diagonal, `e[1..]` the subdiagonal and `v` the accumulated orthogonal
/// transform.
fn tridiagonalize(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    let at = |r: usize, c: usize| c * n + r;
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }
    for i in (1..n).rev() {
        let scale: f64 = d[..i].iter().map(|x| x.abs()).sum();
        let mut h = 0.0;
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
                v[at(j, i)] = 0.0;
            }
        } else {
            for x in d[..i].iter_mut() {
                *x /= scale;
                h += *x * *x;
            }
            let f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            e[..i].fill(0.0);

            for j in 0..i {
                let f = d[j];
                v[at(j, i)] = f;
                let mut g = e[j] + v[at(j, j)] * f;
                for k in j + 1..i {
                    g += v[at(k, j)] * d[k];
                    e[k] += v[at(k, j)] * f;
                }
                e[j] = g;
            }
            let mut f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let f = d[j];
                let g = e[j];
                for k in j..i {
                    v[at(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }

    for i in 0..n - 1 {
        v[at(n - 1, i)] = v[at(i, i)];
        v[at(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[at(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[at(k, i + 1)] * v[at(k, j)];
                }
                for k in 0..=i {
                    v[at(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[at(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
        v[at(n - 1, j)] = 0.0;
    }
    v[at(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

/// Implicit QL with Wilkinson-style shifts on a symmetric tridiagonal matrix
/// (`d` diagonal, `e[1..]` subdiagonal). `v` has `n` columns of length
/// `rows` and receives the rotations; pass the identity to get the
/// eigenvectors of the tridiagonal matrix itself.
fn tridiagonal_ql_rows(
    n: usize,
    rows: usize,
    v: &mut [f64],
    d: &mut [f64],
    e: &mut [f64],
) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                if sweeps > QL_MAX_SWEEPS {
                    return Err(Error::Convergence {
                        iterations: sweeps,
                        residual: e[l].abs(),
                    });
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let h = g - d[l];
                for x in d[l + 2..n].iter_mut() {
                    *x -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    let h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);

                    let (lo, hi) = v.split_at_mut((i + 1) * rows);
                    let col_i = &mut lo[i * rows..];
                    let col_next = &mut hi[..rows];
                    for (a, b) in col_i.iter_mut().zip(col_next.iter_mut()) {
                        let h = *b;
                        *b = s * *a + c * h;
                        *a = c * *a - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

fn tridiagonal_ql(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    tridiagonal_ql_rows(n, n, v, d, e)
}

/// Eigen-decomposition of the `k x k` tridiagonal matrix with diagonal
/// `alpha` and off-diagonal `beta` (`beta.len() == k - 1`).
fn tridiagonal_eigen(alpha: &[f64], beta: &[f64]) -> Result<Eigenpairs> {
    let k = alpha.len();
    let mut d = alpha.to_vec();
    let mut e = vec![0.0; k];
    e[1..].copy_from_slice(beta);
    let mut v = vec![0.0; k * k];
    for i in 0..k {
        v[i * k + i] = 1.0;
    }
    tridiagonal_ql_rows(k, k, &mut v, &mut d, &mut e)?;
    Ok(sorted_pairs(k, k, &v, &d))
}

fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    // two passes of classical Gram-Schmidt keep the basis orthogonal to
    // working precision
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, w);
            for (x, y) in w.iter_mut().zip(q) {
                *x -= c * y;
            }
        }
    }
}

/// Smallest `m` eigenpairs of a symmetric matrix by Lanczos iteration with
/// full reorthogonalization, stopping once the Ritz residual bound of every
/// wanted pair drops below tolerance or after `max_iter` steps.
///
/// A breakdown (invariant subspace) restarts from a fresh random direction
/// orthogonal to the current basis, so repeated eigenvalues are recovered
/// with their multiplicity.
pub fn lanczos_smallest(a: &Matrix, m: usize, max_iter: usize) -> Result<Eigenpairs> {
    assert!(a.is_square(), "Lanczos on a non-square matrix");
    let n = a.rows();
    if m == 0 || m > n {
        return Err(Error::Config(format!(
            "requested {m} eigenvectors of a {n}x{n} matrix"
        )));
    }
    let scale = a
        .as_slice()
        .iter()
        .fold(0.0f64, |acc, x| acc.max(x.abs()))
        .max(1.0);
    let breakdown = 1e-12 * scale;
    let mut rng = ChaCha8Rng::seed_from_u64(0x1a2c_2050);

    let random_start = |rng: &mut ChaCha8Rng, basis: &[Vec<f64>]| -> Option<Vec<f64>> {
        for _ in 0..8 {
            let mut q: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            orthogonalize(&mut q, basis);
            let len = super::norm(&q);
            if len > 1e-8 {
                q.iter_mut().for_each(|x| *x /= len);
                return Some(q);
            }
        }
        None
    };

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut q = random_start(&mut rng, &basis).expect("nonempty space");
    let steps = max_iter.min(n);
    let mut last_residual = f64::INFINITY;

    for step in 0..steps {
        let mut w = a.mul_vec(&q);
        let a_j = dot(&q, &w);
        basis.push(q);
        alpha.push(a_j);
        orthogonalize(&mut w, &basis);
        let b_j = super::norm(&w);

        let k = alpha.len();
        let check = k >= m && (k.is_multiple_of(5) || b_j < breakdown || step + 1 == steps);
        if check {
            let ritz = tridiagonal_eigen(&alpha, &beta)?;
            last_residual = (0..m)
                .map(|i| (b_j * ritz.vectors[(k - 1, i)]).abs())
                .fold(0.0, f64::max);
            if last_residual <= 1e-10 * scale || k == n {
                let pairs = ritz_pairs(&basis, &ritz, m);
                let residual = pairs.max_residual(a);
                if residual <= RESIDUAL_TOL {
                    return Ok(pairs);
                }
                last_residual = residual;
            }
        }

        if b_j < breakdown {
            match random_start(&mut rng, &basis) {
                Some(fresh) => {
                    beta.push(0.0);
                    q = fresh;
                }
                None => break,
            }
        } else {
            beta.push(b_j);
            q = w.into_iter().map(|x| x / b_j).collect();
        }
    }

    if alpha.len() >= m {
        let ritz = tridiagonal_eigen(&alpha, &beta[..alpha.len() - 1])?;
        let pairs = ritz_pairs(&basis, &ritz, m);
        let residual = pairs.max_residual(a);
        if residual <= RESIDUAL_TOL {
            return Ok(pairs);
        }
        last_residual = residual;
    }
    Err(Error::Convergence {
        iterations: alpha.len(),
        residual: last_residual,
    })
}

fn ritz_pairs(basis: &[Vec<f64>], ritz: &Eigenpairs, m: usize) -> Eigenpairs {
    let n = basis[0].len();
    let mut vectors = Matrix::zeros(n, m);
    for col in 0..m {
        for (j, q) in basis.iter().enumerate() {
            let s = ritz.vectors[(j, col)];
            if s == 0.0 {
                continue;
            }
            for r in 0..n {
                vectors[(r, col)] += s * q[r];
            }
        }
    }
    Eigenpairs {
        values: ritz.values[..m].to_vec(),
        vectors,
    }
}
