//! Synthetic camouflage datasets and a baseline-vs-pipeline harness.
//!
//! Each image shares a confounder direction between its foreground and
//! background cells, so the two look alike inside one image, while the
//! dataset-level foreground and background anchors stay far apart.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;

use crate::coarse_mask::{coarse_mask, CoarseMaskParams};
use crate::error::{Error, Result};
use crate::evalkit::{EvalReport, ImageScores};
use crate::manifest::{DatasetManifest, ManifestEntry};
use crate::mvkr::{
    build_index, mvkr_mask_from, transform_fm, upsample_mask, RetrievalParams, View, ViewSource,
};
use crate::numerics::dot;
use crate::prototype_miner::{build_libraries, mine_with_mask, LibraryBuildReport};
use crate::tensor_store::{write_fmap, write_mask, BinaryMask, FeatureMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FgShape {
    #[default]
    CenteredRect,
    RandomBlob,
}

impl std::str::FromStr for FgShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "centered_rect" => Ok(FgShape::CenteredRect),
            "random_blob" => Ok(FgShape::RandomBlob),
            other => Err(Error::Config(format!("unknown foreground shape {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub num_images: usize,
    pub h: usize,
    pub w: usize,
    pub d: usize,
    /// Cosine between an image's foreground and background directions.
    pub intra_sim: f64,
    /// Cosine between the dataset-level foreground and background anchors.
    pub dataset_sep: f64,
    pub noise_sigma: f64,
    pub fg_shape: FgShape,
    /// Per-cell probability of an artifact, drawn per view-frame position.
    pub artifact_rate: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_images: 100,
            h: 16,
            w: 16,
            d: 32,
            intra_sim: 0.9,
            dataset_sep: 0.1,
            noise_sigma: 0.05,
            fg_shape: FgShape::CenteredRect,
            artifact_rate: 0.0,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.d < 3 {
            return fail(format!(
                "feature dimension {} leaves no room for a confounder",
                self.d
            ));
        }
        if self.num_images == 0 || self.h < 2 || self.w < 2 {
            return fail("need at least one image of at least 2x2 cells".into());
        }
        if !(0.0..1.0).contains(&self.intra_sim) {
            return fail(format!("intra_sim {} outside [0, 1)", self.intra_sim));
        }
        if !(0.0..=1.0).contains(&self.dataset_sep) {
            return fail(format!("dataset_sep {} outside [0, 1]", self.dataset_sep));
        }
        if self.intra_sim <= self.dataset_sep {
            return fail("intra_sim must exceed dataset_sep".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return fail(format!(
                "noise_sigma {} must be finite and non-negative",
                self.noise_sigma
            ));
        }
        if !(0.0..1.0).contains(&self.artifact_rate) {
            return fail(format!(
                "artifact_rate {} outside [0, 1)",
                self.artifact_rate
            ));
        }
        Ok(())
    }

    fn image_id(&self, index: usize) -> String {
        let width = self.num_images.saturating_sub(1).to_string().len().max(4);
        format!("img{index:0width$}")
    }
}

/// One generated image: clean features, ground truth, and the recipe for
/// its view-dependent artifacts.
#[derive(Debug, Clone)]
pub struct SynthImage {
    pub index: usize,
    pub gt: BinaryMask,
    clean: FeatureMap,
    artifact_rate: f64,
    seed: u64,
}

impl SynthImage {
    pub fn image_id(&self) -> &str {
        self.clean.image_id()
    }

    /// The map as written to disk: identity view with its artifacts.
    pub fn feature_map(&self) -> FeatureMap {
        self.with_artifacts(self.clean.clone())
    }

    /// Artifacts depend only on (seed, image, grid position in the viewed
    /// frame), so a view transform relocates them relative to the content.
    fn with_artifacts(&self, view_fm: FeatureMap) -> FeatureMap {
        if self.artifact_rate == 0.0 {
            return view_fm;
        }
        let (h, w, d) = (view_fm.h(), view_fm.w(), view_fm.d());
        let (id, oh, ow) = (
            view_fm.image_id().to_string(),
            view_fm.orig_h(),
            view_fm.orig_w(),
        );
        let mut data = view_fm.into_data();
        for i in 0..h {
            for j in 0..w {
                let mut rng = artifact_rng(self.seed, self.index, i, j);
                if rng.random_bool(self.artifact_rate) {
                    let v = random_unit(&mut rng, d);
                    let cell = &mut data[(i * w + j) * d..(i * w + j + 1) * d];
                    for (dst, x) in cell.iter_mut().zip(v) {
                        *dst = x as f32;
                    }
                }
            }
        }
        FeatureMap::new(id, h, w, d, oh, ow, data).expect("artifact vectors are finite")
    }
}

impl ViewSource for SynthImage {
    fn view_map(&self, view: View) -> Result<FeatureMap> {
        Ok(self.with_artifacts(transform_fm(&self.clean, view)))
    }
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub spec: SynthSpec,
    pub fg_anchor: Vec<f64>,
    pub bg_anchor: Vec<f64>,
    pub images: Vec<SynthImage>,
}

fn artifact_rng(seed: u64, image: usize, i: usize, j: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(image as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(i as u64).to_le_bytes());
    key[24..].copy_from_slice(&(j as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn image_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = dot(&v, &v).sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Random unit vector orthogonal to the orthonormal `basis`.
fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize, basis: &[Vec<f64>]) -> Vec<f64> {
    loop {
        let mut v = random_unit(rng, d);
        for b in basis {
            let p = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let n = dot(&v, &v).sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Number of foreground cells, within 10-40% of the grid.
fn target_cells(rng: &mut ChaCha8Rng, cells: usize) -> (usize, usize, usize) {
    let lo = ((cells as f64 * 0.1).ceil() as usize).max(1);
    let hi = ((cells as f64 * 0.4).floor() as usize).max(lo);
    (rng.random_range(lo..=hi), lo, hi)
}

fn centered_rect(rng: &mut ChaCha8Rng, h: usize, w: usize) -> BinaryMask {
    let (target, lo, hi) = target_cells(rng, h * w);
    let mut best: Option<((usize, f64), usize, usize)> = None;
    for rh in 1..=h {
        let rw = ((target as f64 / rh as f64).round() as usize).clamp(1, w);
        let area = rh * rw;
        if area < lo || area > hi {
            continue;
        }
        let score = (
            area.abs_diff(target),
            (rh as f64 / h as f64 - rw as f64 / w as f64).abs(),
        );
        if best.is_none_or(|(s, _, _)| score.0 < s.0 || (score.0 == s.0 && score.1 < s.1)) {
            best = Some((score, rh, rw));
        }
    }
    let (_, rh, rw) = best.unwrap_or(((0, 0.0), 1, 1));
    let (top, left) = ((h - rh) / 2, (w - rw) / 2);
    BinaryMask::from_fn(h, w, |i, j| {
        (top..top + rh).contains(&i) && (left..left + rw).contains(&j)
    })
}

/// Connected blob grown from a random interior seed by random frontier picks.
fn random_blob(rng: &mut ChaCha8Rng, h: usize, w: usize) -> BinaryMask {
    let (target, _, _) = target_cells(rng, h * w);
    let mut mask = BinaryMask::zeros(h, w);
    let (ci, cj) = (
        rng.random_range(h / 4..=(3 * h) / 4),
        rng.random_range(w / 4..=(3 * w) / 4),
    );
    let (ci, cj) = (ci.min(h - 1), cj.min(w - 1));
    mask.set(ci, cj, true);
    let mut frontier = vec![(ci, cj)];
    let mut count = 1;
    while count < target && !frontier.is_empty() {
        let k = rng.random_range(0..frontier.len());
        let (i, j) = frontier[k];
        let mut open = Vec::new();
        for (di, dj) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
            let (ni, nj) = (i as i64 + di, j as i64 + dj);
            if ni >= 0
                && nj >= 0
                && (ni as usize) < h
                && (nj as usize) < w
                && !mask.get(ni as usize, nj as usize)
            {
                open.push((ni as usize, nj as usize));
            }
        }
        if open.is_empty() {
            frontier.swap_remove(k);
            continue;
        }
        let (ni, nj) = open[rng.random_range(0..open.len())];
        mask.set(ni, nj, true);
        frontier.push((ni, nj));
        count += 1;
    }
    mask
}

pub fn generate(spec: &SynthSpec) -> Result<SynthDataset> {
    spec.validate()?;
    let d = spec.d;
    let mut anchor_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let fg_anchor = random_unit(&mut anchor_rng, d);
    let e = random_orthogonal(&mut anchor_rng, d, std::slice::from_ref(&fg_anchor));
    let sep = spec.dataset_sep;
    let bg_anchor: Vec<f64> = fg_anchor
        .iter()
        .zip(&e)
        .map(|(f, e)| sep * f + (1.0 - sep * sep).sqrt() * e)
        .collect();
    let plane = [fg_anchor.clone(), e];
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let (s, a) = (
        spec.intra_sim,
        (1.0 - spec.intra_sim * spec.intra_sim).sqrt(),
    );

    let images = (0..spec.num_images)
        .into_par_iter()
        .map(|index| {
            let mut rng = image_rng(spec.seed, index);
            let confounder = random_orthogonal(&mut rng, d, &plane);
            let gt = match spec.fg_shape {
                FgShape::CenteredRect => centered_rect(&mut rng, spec.h, spec.w),
                FgShape::RandomBlob => random_blob(&mut rng, spec.h, spec.w),
            };
            let fg_dir: Vec<f64> = fg_anchor
                .iter()
                .zip(&confounder)
                .map(|(u, c)| a * u + s * c)
                .collect();
            let bg_dir: Vec<f64> = bg_anchor
                .iter()
                .zip(&confounder)
                .map(|(u, c)| a * u + s * c)
                .collect();
            let mut data = Vec::with_capacity(spec.h * spec.w * d);
            for &bit in gt.bits() {
                let dir = if bit == 1 { &fg_dir } else { &bg_dir };
                data.extend(dir.iter().map(|&x| (x + noise.sample(&mut rng)) as f32));
            }
            let clean = FeatureMap::new(
                spec.image_id(index),
                spec.h,
                spec.w,
                d,
                spec.h,
                spec.w,
                data,
            )?;
            Ok(SynthImage {
                index,
                gt,
                clean,
                artifact_rate: spec.artifact_rate,
                seed: spec.seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthDataset {
        spec: spec.clone(),
        fg_anchor,
        bg_anchor,
        images,
    })
}

impl SynthDataset {
    /// Writes `fmaps/<id>.fmap`, `gt/<id>.pgm` and `manifest.tsv` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<DatasetManifest> {
        let (fmap_dir, gt_dir) = (dir.join("fmaps"), dir.join("gt"));
        for d in [&fmap_dir, &gt_dir] {
            fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        let mut manifest = DatasetManifest::default();
        for img in &self.images {
            let id = img.image_id();
            let fmap_path = fmap_dir.join(format!("{id}.fmap"));
            let gt_path = gt_dir.join(format!("{id}.pgm"));
            write_fmap(&fmap_path, &img.feature_map())?;
            write_mask(&gt_path, &img.gt)?;
            manifest.entries.push(ManifestEntry {
                image_id: id.to_string(),
                fmap_path,
                gt_path: Some(gt_path),
            });
        }
        manifest.write(&dir.join("manifest.tsv"))?;
        Ok(manifest)
    }
}

/// Masks and scores of the coarse-only baseline and the full pipeline.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub coarse_masks: Vec<BinaryMask>,
    pub full_masks: Vec<BinaryMask>,
    pub baseline: EvalReport,
    pub full: EvalReport,
    pub build: LibraryBuildReport,
}

impl Comparison {
    pub fn baseline_iou(&self) -> f64 {
        self.baseline.mean_iou
    }

    pub fn full_iou(&self) -> f64 {
        self.full.mean_iou
    }

    pub fn gap(&self) -> f64 {
        self.full_iou() - self.baseline_iou()
    }

    /// Writes `coarse/<id>.pgm` and `masks/<id>.pgm` under `dir`.
    pub fn write_masks(&self, dataset: &SynthDataset, dir: &Path) -> Result<()> {
        for (sub, masks) in [("coarse", &self.coarse_masks), ("masks", &self.full_masks)] {
            let d = dir.join(sub);
            fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
            for (img, m) in dataset.images.iter().zip(masks) {
                write_mask(d.join(format!("{}.pgm", img.image_id())), m)?;
            }
        }
        Ok(())
    }
}

/// Runs the coarse baseline and the full mine, filter, index and multi-view
/// retrieval pipeline on every image, scoring both against ground truth.
pub fn compare(
    dataset: &SynthDataset,
    coarse: &CoarseMaskParams,
    retrieval: &RetrievalParams,
    bins: usize,
) -> Result<Comparison> {
    retrieval.validate()?;
    let identity: Vec<FeatureMap> = dataset.images.iter().map(SynthImage::feature_map).collect();
    let coarse_masks = identity
        .par_iter()
        .map(|fm| coarse_mask(fm, coarse))
        .collect::<Result<Vec<_>>>()?;
    let mined = identity
        .par_iter()
        .zip(&coarse_masks)
        .map(|(fm, m)| mine_with_mask(fm, m))
        .collect::<Result<Vec<_>>>()?;
    let build = build_libraries(&mined, bins)?;
    let index = build_index(&build.fg_lib, &build.bg_lib)?;
    let full_masks = dataset
        .images
        .par_iter()
        .map(|img| {
            let m = mvkr_mask_from(img, &index, retrieval)?;
            upsample_mask(&m, img.clean.orig_h(), img.clean.orig_w())
        })
        .collect::<Result<Vec<_>>>()?;
    let score = |masks: &[BinaryMask]| {
        let scores = dataset
            .images
            .iter()
            .zip(masks)
            .map(|(img, m)| ImageScores::compute(img.image_id(), m, &img.gt))
            .collect::<Result<Vec<_>>>()?;
        EvalReport::from_scores(scores)
    };
    Ok(Comparison {
        baseline: score(&coarse_masks)?,
        full: score(&full_masks)?,
        coarse_masks,
        full_masks,
        build: build.report,
    })
}
