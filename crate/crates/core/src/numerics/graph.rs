use super::{norm, Matrix};
use crate::error::{Error, Result};

/// Cosine affinity between patch features, negatives clamped to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix(Matrix);

impl AffinityMatrix {
    pub fn size(&self) -> usize {
        self.0.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    /// True when every pair of nodes has affinity 1 within `tol`, i.e. all
    /// features point in the same direction.
    pub fn is_complete_uniform(&self, tol: f64) -> bool {
        self.0.as_slice().iter().all(|&w| w >= 1.0 - tol)
    }
}

/// Symmetric normalized graph Laplacian `D^-1/2 (D - W) D^-1/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianMatrix(Matrix);

impl LaplacianMatrix {
    pub fn size(&self) -> usize {
        self.0.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    /// Wraps an arbitrary symmetric matrix, e.g. for exercising the
    /// eigensolver directly.
    pub fn from_symmetric(m: Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Shape(format!(
                "Laplacian must be square, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        let asym = m.asymmetry();
        if asym > 1e-6 {
            return Err(Error::Value(format!(
                "Laplacian is not symmetric (max deviation {asym:e})"
            )));
        }
        Ok(Self(m))
    }
}

/// `W[i,j] = max(cos(row_i, row_j), 0)` for an `N x d` feature matrix.
pub fn affinity_matrix(features: &Matrix) -> Result<AffinityMatrix> {
    let n = features.rows();
    if n < 2 {
        return Err(Error::EmptyInput(format!(
            "affinity graph needs at least 2 nodes, got {n}"
        )));
    }
    let mut units = Matrix::zeros(n, features.cols());
    for (i, row) in features.iter_rows().enumerate() {
        let len = norm(row);
        if len == 0.0 {
            return Err(Error::DegenerateVector(format!(
                "feature row {i} has zero norm"
            )));
        }
        for (dst, &x) in units.row_mut(i).iter_mut().zip(row) {
            *dst = x / len;
        }
    }
    let mut w = Matrix::zeros(n, n);
    for i in 0..n {
        w[(i, i)] = 1.0;
        let ui = units.row(i);
        for j in i + 1..n {
            let s = super::dot(ui, units.row(j)).clamp(0.0, 1.0);
            w[(i, j)] = s;
            w[(j, i)] = s;
        }
    }
    Ok(AffinityMatrix(w))
}

pub fn normalized_laplacian(w: &AffinityMatrix) -> Result<LaplacianMatrix> {
    let n = w.size();
    let wm = w.matrix();
    let inv_sqrt_deg = wm
        .iter_rows()
        .enumerate()
        .map(|(i, row)| {
            let deg: f64 = row.iter().sum();
            if deg > 0.0 {
                Ok(1.0 / deg.sqrt())
            } else {
                Err(Error::IsolatedNode(i))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        // D_ii / D_ii - W_ii / D_ii
        l[(i, i)] = 1.0 - wm[(i, i)] * inv_sqrt_deg[i] * inv_sqrt_deg[i];
        for j in i + 1..n {
            let v = -wm[(i, j)] * inv_sqrt_deg[i] * inv_sqrt_deg[j];
            l[(i, j)] = v;
            l[(j, i)] = v;
        }
    }
    Ok(LaplacianMatrix(l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_close(a: &Matrix, b: &[&[f64]], tol: f64) {
        for (i, row) in b.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert!(
                    (a[(i, j)] - v).abs() <= tol,
                    "({i},{j}): {} vs {v}",
                    a[(i, j)]
                );
            }
        }
    }

    #[test]
    fn orthogonal_pair() {
        let w = affinity_matrix(&Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]])).unwrap();
        assert_close(w.matrix(), &[&[1.0, 0.0], &[0.0, 1.0]], 0.0);
        let l = normalized_laplacian(&w).unwrap();
        assert_close(l.matrix(), &[&[0.0, 0.0], &[0.0, 0.0]], 1e-15);
    }

    #[test]
    fn opposite_pair_clamped() {
        let w = affinity_matrix(&Matrix::from_rows(&[[1.0, 0.0], [-1.0, 0.0]])).unwrap();
        assert_eq!(w.matrix()[(0, 1)], 0.0);
        assert_eq!(w.matrix()[(1, 0)], 0.0);
    }

    #[test]
    fn complete_pair_laplacian() {
        let w = affinity_matrix(&Matrix::from_rows(&[[1.0, 1.0], [2.0, 2.0]])).unwrap();
        let l = normalized_laplacian(&w).unwrap();
        assert_close(l.matrix(), &[&[0.5, -0.5], &[-0.5, 0.5]], 1e-12);
    }

    #[test]
    fn zero_row_reports_index() {
        let err =
            affinity_matrix(&Matrix::from_rows(&[[1.0, 0.0], [0.0, 0.0], [1.0, 1.0]])).unwrap_err();
        match err {
            Error::DegenerateVector(msg) => assert!(msg.contains("row 1"), "{msg}"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn isolated_node_detected() {
        let m = Matrix::from_rows(&[[0.0, 0.0], [0.0, 1.0]]);
        let err = normalized_laplacian(&AffinityMatrix(m)).unwrap_err();
        assert!(matches!(err, Error::IsolatedNode(0)));
    }

    #[test]
    fn random_affinity_matches_pairwise_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let w = affinity_matrix(&Matrix::from_rows(&rows)).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let mut uv = 0.0;
                let mut uu = 0.0;
                let mut vv = 0.0;
                #[allow(clippy::needless_range_loop)]
                for k in 0..4 {
                    uv += rows[i][k] * rows[j][k];
                    uu += rows[i][k] * rows[i][k];
                    vv += rows[j][k] * rows[j][k];
                }
                let expected = (uv / (uu.sqrt() * vv.sqrt())).max(0.0);
                assert!((w.matrix()[(i, j)] - expected).abs() < 1e-6);
            }
        }
        assert_eq!(w.matrix().asymmetry(), 0.0);
    }
}
