//! Multi-view KNN retrieval.
//!
//! Every patch feature is labeled by a majority vote over its top-K most
//! cosine-similar prototypes from the foreground and background libraries.
//! The same retrieval runs on flipped and rotated views of the map; each
//! view's label grid is mapped back to the normal orientation and the views
//! are fused by a per-cell majority vote.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{dot, norm};
use crate::tensor_store::{BinaryMask, Category, FeatureMap, PrototypeLibrary};

pub const DEFAULT_TOP_K: usize = 512;

/// Unit-normalized prototypes of both libraries, foreground first.
#[derive(Debug, Clone)]
pub struct RetrievalIndex {
    d: usize,
    unit_prototypes: Vec<f64>,
    categories: Vec<Category>,
}

impl RetrievalIndex {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn prototype(&self, idx: usize) -> &[f64] {
        &self.unit_prototypes[idx * self.d..(idx + 1) * self.d]
    }
}

pub fn build_index(fg_lib: &PrototypeLibrary, bg_lib: &PrototypeLibrary) -> Result<RetrievalIndex> {
    if fg_lib.d() != bg_lib.d() {
        return Err(Error::Config(format!(
            "foreground library has dimension {}, background {}",
            fg_lib.d(),
            bg_lib.d()
        )));
    }
    let n = fg_lib.len() + bg_lib.len();
    if n == 0 {
        return Err(Error::EmptyLibrary(
            "both prototype libraries are empty".into(),
        ));
    }
    let d = fg_lib.d();
    let mut unit_prototypes = Vec::with_capacity(n * d);
    let mut categories = Vec::with_capacity(n);
    for (lib, category) in [
        (fg_lib, Category::Foreground),
        (bg_lib, Category::Background),
    ] {
        for (i, proto) in lib.prototypes().enumerate() {
            let len = norm(proto);
            if len == 0.0 {
                return Err(Error::DegenerateVector(format!(
                    "{category:?} prototype {i} has zero norm"
                )));
            }
            unit_prototypes.extend(proto.iter().map(|&x| f64::from(x) / len));
            categories.push(category);
        }
    }
    Ok(RetrievalIndex {
        d,
        unit_prototypes,
        categories,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vote {
    pub foreground: bool,
    pub fg_votes: usize,
    pub bg_votes: usize,
}

/// Indices of the `k` prototypes most similar to `query`, best first.
/// Equal similarities rank the lower index first.
pub fn top_k(query: &[f64], idx: &RetrievalIndex, k: usize) -> Result<Vec<usize>> {
    if query.len() != idx.d {
        return Err(Error::Shape(format!(
            "query has dimension {}, index {}",
            query.len(),
            idx.d
        )));
    }
    let len = norm(query);
    if len == 0.0 {
        return Err(Error::DegenerateVector("zero-norm query feature".into()));
    }
    let unit: Vec<f64> = query.iter().map(|x| x / len).collect();
    let sims: Vec<f64> = idx
        .unit_prototypes
        .chunks_exact(idx.d)
        .map(|p| dot(p, &unit))
        .collect();
    let rank = |a: &usize, b: &usize| -> Ordering { sims[*b].total_cmp(&sims[*a]).then(a.cmp(b)) };
    let k = k.min(idx.len());
    let mut order: Vec<usize> = (0..idx.len()).collect();
    if k == 0 {
        return Ok(Vec::new());
    }
    if k < order.len() {
        order.select_nth_unstable_by(k - 1, rank);
        order.truncate(k);
    }
    order.sort_unstable_by(rank);
    Ok(order)
}

/// Unweighted vote over the top-`k` retrieved prototypes.
pub fn knn_vote<T: Copy + Into<f64>>(
    feature: &[T],
    idx: &RetrievalIndex,
    k: usize,
    fg_tie_break: bool,
) -> Result<Vote> {
    if k == 0 {
        return Err(Error::Config("top_k must be at least 1".into()));
    }
    let query: Vec<f64> = feature.iter().map(|&x| x.into()).collect();
    let hits = top_k(&query, idx, k)?;
    let fg_votes = hits
        .iter()
        .filter(|&&i| idx.categories[i] == Category::Foreground)
        .count();
    let bg_votes = hits.len() - fg_votes;
    let foreground = fg_votes > bg_votes || (fg_votes == bg_votes && fg_tie_break);
    Ok(Vote {
        foreground,
        fg_votes,
        bg_votes,
    })
}

/// Spatial view of the patch grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum View {
    Identity,
    HFlip,
    VFlip,
    /// Quarter turn clockwise: cell `(i, j)` moves to `(j, h - 1 - i)`.
    Rot90,
    Rot180,
    Rot270,
}

impl View {
    pub const ALL: [View; 6] = [
        View::Identity,
        View::HFlip,
        View::VFlip,
        View::Rot90,
        View::Rot180,
        View::Rot270,
    ];

    pub fn inverse(self) -> View {
        match self {
            View::Rot90 => View::Rot270,
            View::Rot270 => View::Rot90,
            other => other,
        }
    }

    pub fn swaps_dims(self) -> bool {
        matches!(self, View::Rot90 | View::Rot270)
    }

    /// Grid size after the transform.
    pub fn output_dims(self, h: usize, w: usize) -> (usize, usize) {
        if self.swaps_dims() {
            (w, h)
        } else {
            (h, w)
        }
    }

    /// Where cell `(i, j)` of an `h x w` grid lands.
    pub fn map_cell(self, i: usize, j: usize, h: usize, w: usize) -> (usize, usize) {
        match self {
            View::Identity => (i, j),
            View::HFlip => (i, w - 1 - j),
            View::VFlip => (h - 1 - i, j),
            View::Rot90 => (j, h - 1 - i),
            View::Rot180 => (h - 1 - i, w - 1 - j),
            View::Rot270 => (w - 1 - j, i),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            View::Identity => "identity",
            View::HFlip => "hflip",
            View::VFlip => "vflip",
            View::Rot90 => "rot90",
            View::Rot180 => "rot180",
            View::Rot270 => "rot270",
        }
    }
}

impl std::str::FromStr for View {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        View::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown view {s:?}")))
    }
}

impl std::fmt::Display for View {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Moves `stride`-sized cells of an `h x w` grid according to `view`.
fn transform_cells<T: Copy + Default>(
    data: &[T],
    h: usize,
    w: usize,
    stride: usize,
    view: View,
) -> Vec<T> {
    let (_, nw) = view.output_dims(h, w);
    let mut out = vec![T::default(); data.len()];
    for i in 0..h {
        for j in 0..w {
            let (ni, nj) = view.map_cell(i, j, h, w);
            let src = (i * w + j) * stride;
            let dst = (ni * nw + nj) * stride;
            out[dst..dst + stride].copy_from_slice(&data[src..src + stride]);
        }
    }
    out
}

/// Feature vectors move with their cell; channels are untouched.
pub fn transform_fm(fm: &FeatureMap, view: View) -> FeatureMap {
    let (h, w) = view.output_dims(fm.h(), fm.w());
    let (orig_h, orig_w) = view.output_dims(fm.orig_h(), fm.orig_w());
    let data = transform_cells(fm.data(), fm.h(), fm.w(), fm.d(), view);
    FeatureMap::new(fm.image_id(), h, w, fm.d(), orig_h, orig_w, data)
        .expect("a permutation of a valid map is valid")
}

pub fn transform_mask(m: &BinaryMask, view: View) -> BinaryMask {
    let (rows, cols) = view.output_dims(m.rows(), m.cols());
    let bits = transform_cells(m.bits(), m.rows(), m.cols(), 1, view);
    BinaryMask::new(rows, cols, bits).expect("a permutation of a valid mask is valid")
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalParams {
    pub top_k: usize,
    pub views: Vec<View>,
    /// Foreground wins tied votes, both per feature and across views.
    pub fg_tie_break: bool,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        Self {
            top_k: DEFAULT_TOP_K,
            views: View::ALL.to_vec(),
            fg_tie_break: true,
        }
    }
}

impl RetrievalParams {
    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        if !self.views.contains(&View::Identity) {
            return Err(Error::Config("views must include identity".into()));
        }
        for (i, v) in self.views.iter().enumerate() {
            if self.views[..i].contains(v) {
                return Err(Error::Config(format!("view {v} listed twice")));
            }
        }
        Ok(())
    }
}

/// Labels every cell of a map that is already in `view` orientation and maps
/// the result back to the normal orientation.
pub fn retrieve_view_mask(
    view_fm: &FeatureMap,
    view: View,
    idx: &RetrievalIndex,
    p: &RetrievalParams,
) -> Result<BinaryMask> {
    if view_fm.d() != idx.d() {
        return Err(Error::Shape(format!(
            "feature map {} has dimension {}, index {}",
            view_fm.image_id(),
            view_fm.d(),
            idx.d()
        )));
    }
    let bits = view_fm
        .data()
        .par_chunks_exact(view_fm.d())
        .map(|f| knn_vote(f, idx, p.top_k, p.fg_tie_break).map(|v| u8::from(v.foreground)))
        .collect::<Result<Vec<u8>>>()
        .map_err(|e| e.for_image(view_fm.image_id()))?;
    let labels = BinaryMask::new(view_fm.h(), view_fm.w(), bits)?;
    Ok(transform_mask(&labels, view.inverse()))
}

/// KNN pseudo-mask of `fm` seen through `view`, in normal orientation.
pub fn retrieve_mask(
    fm: &FeatureMap,
    idx: &RetrievalIndex,
    p: &RetrievalParams,
    view: View,
) -> Result<BinaryMask> {
    retrieve_view_mask(&transform_fm(fm, view), view, idx, p)
}

/// Supplies the feature map of an image as seen from a given view.
///
/// A plain [`FeatureMap`] answers by permuting its grid. Sources backed by a
/// feature extractor can instead return features computed on the transformed
/// image, whose artifacts land at different cells.
pub trait ViewSource {
    fn view_map(&self, view: View) -> Result<FeatureMap>;
}

impl ViewSource for FeatureMap {
    fn view_map(&self, view: View) -> Result<FeatureMap> {
        Ok(transform_fm(self, view))
    }
}

/// Per-cell majority over masks; ties go to foreground iff `fg_tie_break`.
pub fn fuse_masks(masks: &[BinaryMask], fg_tie_break: bool) -> Result<BinaryMask> {
    let first = masks
        .first()
        .ok_or_else(|| Error::EmptyInput("no masks to fuse".into()))?;
    let (rows, cols) = (first.rows(), first.cols());
    if let Some(bad) = masks.iter().find(|m| (m.rows(), m.cols()) != (rows, cols)) {
        return Err(Error::Shape(format!(
            "cannot fuse a {}x{} mask with {rows}x{cols}",
            bad.rows(),
            bad.cols()
        )));
    }
    let total = masks.len();
    let bits = (0..rows * cols)
        .map(|c| {
            let fg = masks.iter().filter(|m| m.bits()[c] == 1).count();
            u8::from(2 * fg > total || (2 * fg == total && fg_tie_break))
        })
        .collect();
    BinaryMask::new(rows, cols, bits)
}

/// Multi-view pseudo-mask drawn from an arbitrary [`ViewSource`].
pub fn mvkr_mask_from<S: ViewSource + ?Sized>(
    source: &S,
    idx: &RetrievalIndex,
    p: &RetrievalParams,
) -> Result<BinaryMask> {
    p.validate()?;
    let masks = p
        .views
        .iter()
        .map(|&view| retrieve_view_mask(&source.view_map(view)?, view, idx, p))
        .collect::<Result<Vec<_>>>()?;
    fuse_masks(&masks, p.fg_tie_break)
}

pub fn mvkr_mask(fm: &FeatureMap, idx: &RetrievalIndex, p: &RetrievalParams) -> Result<BinaryMask> {
    mvkr_mask_from(fm, idx, p)
}

/// Nearest-neighbor upscaling: output `(y, x)` copies input
/// `(y * h / H, x * w / W)`.
pub fn upsample_mask(m: &BinaryMask, out_rows: usize, out_cols: usize) -> Result<BinaryMask> {
    if out_rows < m.rows() || out_cols < m.cols() {
        return Err(Error::Config(format!(
            "cannot upsample {}x{} to smaller {out_rows}x{out_cols}",
            m.rows(),
            m.cols()
        )));
    }
    Ok(BinaryMask::from_fn(out_rows, out_cols, |y, x| {
        m.get(y * m.rows() / out_rows, x * m.cols() / out_cols)
    }))
}
