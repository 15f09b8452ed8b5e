//! Per-image coarse foreground/background split.
//!
//! Patch features are clustered into two groups, either spectrally (cosine
//! affinity graph, normalized Laplacian, k-means on the smallest
//! eigenvectors) or by k-means on the raw features. The group touching the
//! image border less often becomes the foreground.

use crate::error::{Error, Result};
use crate::numerics::{affinity_matrix, kmeans, normalized_laplacian, smallest_eigvecs, Matrix};
use crate::tensor_store::{BinaryMask, FeatureMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClusterMethod {
    #[default]
    Spectral,
    KMeansDirect,
}

impl std::str::FromStr for ClusterMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectral" => Ok(ClusterMethod::Spectral),
            "kmeans" | "kmeans_direct" => Ok(ClusterMethod::KMeansDirect),
            other => Err(Error::Config(format!(
                "unknown clustering method {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoarseMaskParams {
    pub method: ClusterMethod,
    /// Number of Laplacian eigenvectors fed to k-means.
    pub eig_count: usize,
    pub kmeans_seed: u64,
    /// Width of the border frame, in patches.
    pub border_width: usize,
    /// Drop the eigenvector of the smallest eigenvalue before clustering.
    pub skip_first_eigvec: bool,
    /// Scale each eigenvector row to unit length before clustering.
    pub normalize_rows: bool,
}

impl Default for CoarseMaskParams {
    fn default() -> Self {
        Self {
            method: ClusterMethod::Spectral,
            eig_count: 2,
            kmeans_seed: 0,
            border_width: 1,
            skip_first_eigvec: false,
            normalize_rows: false,
        }
    }
}

impl CoarseMaskParams {
    /// Checks the parameters against an `h x w` grid.
    ///
    /// Grids with a side of at most 2 are all border, so any positive border
    /// width is accepted there.
    pub fn validate(&self, h: usize, w: usize) -> Result<()> {
        if self.eig_count == 0 {
            return Err(Error::Config("eig_count must be at least 1".into()));
        }
        if self.border_width == 0 {
            return Err(Error::Config("border_width must be at least 1".into()));
        }
        let side = h.min(w);
        if side > 2 && 2 * self.border_width >= side {
            return Err(Error::Config(format!(
                "border_width {} must be below half the shorter side of a {h}x{w} grid",
                self.border_width
            )));
        }
        Ok(())
    }
}

/// Cluster index per cell, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelGrid {
    pub rows: usize,
    pub cols: usize,
    pub labels: Vec<usize>,
}

impl LabelGrid {
    pub fn get(&self, i: usize, j: usize) -> usize {
        self.labels[i * self.cols + j]
    }
}

fn flatten(fm: &FeatureMap) -> Matrix {
    Matrix::from_vec(
        fm.num_cells(),
        fm.d(),
        fm.data().iter().map(|&x| f64::from(x)).collect(),
    )
}

fn spectral_labels(fm: &FeatureMap, p: &CoarseMaskParams) -> Result<Vec<usize>> {
    let n = fm.num_cells();
    let w = affinity_matrix(&flatten(fm))?;
    if w.is_complete_uniform(1e-9) {
        // every feature points the same way: there is nothing to split
        return Ok(vec![0; n]);
    }
    let skip = usize::from(p.skip_first_eigvec);
    let wanted = p.eig_count + skip;
    if wanted > n {
        return Err(Error::Config(format!(
            "{wanted} eigenvectors requested for a graph of {n} nodes"
        )));
    }
    let l = normalized_laplacian(&w)?;
    let pairs = smallest_eigvecs(&l, wanted)?;
    let mut embedding = Matrix::zeros(n, p.eig_count);
    for i in 0..n {
        let row = embedding.row_mut(i);
        row.copy_from_slice(&pairs.vectors.row(i)[skip..]);
        if p.normalize_rows {
            let len = crate::numerics::norm(row);
            if len > 0.0 {
                row.iter_mut().for_each(|x| *x /= len);
            }
        }
    }
    Ok(kmeans(&embedding, 2, p.kmeans_seed)?.labels)
}

/// Splits the cells of `fm` into two clusters.
pub fn cluster_two(fm: &FeatureMap, p: &CoarseMaskParams) -> Result<LabelGrid> {
    let run = || -> Result<LabelGrid> {
        if p.eig_count == 0 {
            return Err(Error::Config("eig_count must be at least 1".into()));
        }
        if fm.num_cells() < 2 {
            return Err(Error::EmptyInput(
                "clustering needs at least 2 cells".into(),
            ));
        }
        let labels = match p.method {
            ClusterMethod::Spectral => spectral_labels(fm, p)?,
            ClusterMethod::KMeansDirect => kmeans(&flatten(fm), 2, p.kmeans_seed)?.labels,
        };
        Ok(LabelGrid {
            rows: fm.h(),
            cols: fm.w(),
            labels,
        })
    };
    run().map_err(|e| e.for_image(fm.image_id()))
}

fn is_border(i: usize, j: usize, rows: usize, cols: usize, width: usize) -> bool {
    i < width || j < width || i + width >= rows || j + width >= cols
}

/// Border prior: the cluster with the strictly smaller share of its cells on
/// the border frame is foreground. Equal shares fall back to the cluster
/// holding the center cell; a single cluster yields an all-background mask.
pub fn assign_foreground(labels: &LabelGrid, border_width: usize) -> Result<BinaryMask> {
    let (rows, cols) = (labels.rows, labels.cols);
    let mut ids: Vec<usize> = Vec::with_capacity(2);
    for &l in &labels.labels {
        if !ids.contains(&l) {
            if ids.len() == 2 {
                return Err(Error::Value("label grid has more than two clusters".into()));
            }
            ids.push(l);
        }
    }
    if ids.len() < 2 {
        return Ok(BinaryMask::zeros(rows, cols));
    }

    let mut total = [0u64; 2];
    let mut border = [0u64; 2];
    for i in 0..rows {
        for j in 0..cols {
            let slot = usize::from(labels.get(i, j) == ids[1]);
            total[slot] += 1;
            if is_border(i, j, rows, cols, border_width) {
                border[slot] += 1;
            }
        }
    }
    // compare border[0]/total[0] with border[1]/total[1] exactly
    let lhs = border[0] * total[1];
    let rhs = border[1] * total[0];
    let fg = match lhs.cmp(&rhs) {
        std::cmp::Ordering::Less => ids[0],
        std::cmp::Ordering::Greater => ids[1],
        std::cmp::Ordering::Equal => labels.get(rows / 2, cols / 2),
    };
    Ok(BinaryMask::from_fn(rows, cols, |i, j| {
        labels.get(i, j) == fg
    }))
}

/// Coarse foreground mask of one feature map, at patch resolution.
pub fn coarse_mask(fm: &FeatureMap, p: &CoarseMaskParams) -> Result<BinaryMask> {
    p.validate(fm.h(), fm.w())
        .map_err(|e| e.for_image(fm.image_id()))?;
    let labels = cluster_two(fm, p)?;
    assign_foreground(&labels, p.border_width).map_err(|e| e.for_image(fm.image_id()))
}
