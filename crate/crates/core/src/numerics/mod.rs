//! Numerical kernels shared by the clustering and retrieval stages.

mod eigen;
mod graph;
mod histogram;
mod kmeans;
mod matrix;

pub use eigen::{
    dense_symmetric_eigen, lanczos_smallest, smallest_eigvecs, Eigenpairs, DENSE_EIGEN_LIMIT,
    LANCZOS_MAX_ITER,
};
pub use graph::{affinity_matrix, normalized_laplacian, AffinityMatrix, LaplacianMatrix};
pub use histogram::{histogram_peak, Histogram};
pub use kmeans::{kmeans, KMeansResult, KMEANS_MAX_ITER};
pub use matrix::Matrix;

use crate::error::{Error, Result};

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn norm<T: Copy + Into<f64>>(v: &[T]) -> f64 {
    v.iter()
        .map(|&x| {
            let x: f64 = x.into();
            x * x
        })
        .sum::<f64>()
        .sqrt()
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine<A, B>(u: &[A], v: &[B]) -> Result<f64>
where
    A: Copy + Into<f64>,
    B: Copy + Into<f64>,
{
    if u.len() != v.len() {
        return Err(Error::Shape(format!(
            "cosine of vectors with lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    let nu = norm(u);
    let nv = norm(v);
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::DegenerateVector(
            "cosine similarity of a zero-norm vector".into(),
        ));
    }
    let uv: f64 = u.iter().zip(v).map(|(&a, &b)| a.into() * b.into()).sum();
    Ok((uv / (nu * nv)).clamp(-1.0, 1.0))
}

/// Returns `v / |v|` in `f64`, or `None` for a zero vector.
pub fn unit<T: Copy + Into<f64>>(v: &[T]) -> Option<Vec<f64>> {
    let n = norm(v);
    (n > 0.0).then(|| v.iter().map(|&x| x.into() / n).collect())
}
