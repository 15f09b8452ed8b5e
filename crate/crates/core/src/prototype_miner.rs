//! Prototype mining over a dataset of feature maps.
//!
//! For each image the coarse mask pools a global foreground and background
//! feature. The foreground prototype is the foreground patch least similar to
//! the global background feature, and vice versa. Images whose two global
//! features are too alike (coarse split probably wrong) are dropped with an
//! adaptive threshold at the peak of the similarity histogram.

use std::fmt::Write as _;
use std::path::Path;

use crate::coarse_mask::{coarse_mask, CoarseMaskParams};
use crate::error::{Error, Result};
use crate::numerics::{cosine, histogram_peak};
use crate::tensor_store::{BinaryMask, Category, FeatureMap, PrototypeLibrary};

pub const DEFAULT_BINS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct ImageProtoRecord {
    pub image_id: String,
    pub fg_global: Vec<f64>,
    pub bg_global: Vec<f64>,
    pub fg_proto: Vec<f32>,
    pub bg_proto: Vec<f32>,
    /// Cosine between `fg_global` and `bg_global`.
    pub global_sim: f64,
}

/// Result of mining one image.
#[derive(Debug, Clone, PartialEq)]
pub enum Mined {
    Record(ImageProtoRecord),
    /// The coarse mask left one side empty; the image contributes nothing.
    Degenerate {
        image_id: String,
        reason: String,
    },
}

impl Mined {
    pub fn image_id(&self) -> &str {
        match self {
            Mined::Record(r) => &r.image_id,
            Mined::Degenerate { image_id, .. } => image_id,
        }
    }

    pub fn record(&self) -> Option<&ImageProtoRecord> {
        match self {
            Mined::Record(r) => Some(r),
            Mined::Degenerate { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportLine {
    pub image_id: String,
    /// `None` for degenerate images.
    pub global_sim: Option<f64>,
    pub kept: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LibraryBuildReport {
    pub total_images: usize,
    pub kept_images: usize,
    pub threshold: f64,
    pub kept_ids: Vec<String>,
    pub skipped_degenerate: Vec<String>,
    pub lines: Vec<ReportLine>,
}

impl LibraryBuildReport {
    /// Tab-separated text: a `threshold` header, then one
    /// `id<TAB>sim<TAB>kept|skipped` line per image.
    pub fn to_text(&self) -> String {
        let mut out = format!("threshold\t{}\n", self.threshold);
        for line in &self.lines {
            let sim = line
                .global_sim
                .map_or_else(|| "-".to_string(), |s| s.to_string());
            let status = if line.kept { "kept" } else { "skipped" };
            let _ = writeln!(out, "{}\t{sim}\t{status}", line.image_id);
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct LibraryBuild {
    pub fg_lib: PrototypeLibrary,
    pub bg_lib: PrototypeLibrary,
    pub report: LibraryBuildReport,
}

fn check_dims(fm: &FeatureMap, mask: &BinaryMask) -> Result<()> {
    if (mask.rows(), mask.cols()) != (fm.h(), fm.w()) {
        return Err(Error::Shape(format!(
            "mask is {}x{} but feature map {} is {}x{}",
            mask.rows(),
            mask.cols(),
            fm.image_id(),
            fm.h(),
            fm.w()
        )));
    }
    let ones = mask.count_ones();
    let reason = if ones == 0 {
        "empty foreground"
    } else if ones == mask.bits().len() {
        "empty background"
    } else {
        return Ok(());
    };
    Err(Error::DegenerateMask {
        image_id: fm.image_id().to_string(),
        reason: reason.into(),
    })
}

/// Mask-averaged pooling: per-channel means of the foreground and of the
/// background cells.
pub fn global_features(fm: &FeatureMap, mask: &BinaryMask) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dims(fm, mask)?;
    let d = fm.d();
    let mut sums = [vec![0.0f64; d], vec![0.0f64; d]];
    let mut counts = [0usize; 2];
    for (cell, feature) in fm.features().enumerate() {
        let side = usize::from(mask.bits()[cell] == 0);
        counts[side] += 1;
        for (acc, &x) in sums[side].iter_mut().zip(feature) {
            *acc += f64::from(x);
        }
    }
    let [fg, bg] = sums;
    let mean = |v: Vec<f64>, n: usize| v.into_iter().map(|x| x / n as f64).collect();
    Ok((mean(fg, counts[0]), mean(bg, counts[1])))
}

/// Borrowed foreground and background feature sets.
pub type FeatureSets<'a> = (Vec<&'a [f32]>, Vec<&'a [f32]>);

/// Foreground and background feature sets in row-major cell order.
pub fn split_sets<'a>(fm: &'a FeatureMap, mask: &BinaryMask) -> Result<FeatureSets<'a>> {
    check_dims(fm, mask)?;
    let (fg, bg): (Vec<_>, Vec<_>) = fm
        .features()
        .zip(mask.bits())
        .partition(|(_, &bit)| bit == 1);
    Ok((
        fg.into_iter().map(|(f, _)| f).collect(),
        bg.into_iter().map(|(f, _)| f).collect(),
    ))
}

/// Index of the candidate with the lowest cosine to `reference`; zero-norm
/// candidates are skipped and ties keep the earliest index.
pub fn least_similar(candidates: &[&[f32]], reference: &[f64]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (idx, cand) in candidates.iter().enumerate() {
        let sim = match cosine(cand, reference) {
            Ok(s) => s,
            Err(Error::DegenerateVector(_)) if crate::numerics::norm(cand) == 0.0 => continue,
            Err(e) => return Err(e),
        };
        if best.is_none_or(|(_, b)| sim < b) {
            best = Some((idx, sim));
        }
    }
    best.map(|(idx, _)| idx)
        .ok_or_else(|| Error::DegenerateVector("every prototype candidate has zero norm".into()))
}

/// Cross-category selection: the foreground prototype is the foreground
/// feature least similar to the global background feature; the background
/// prototype is the background feature least similar to the global
/// foreground feature.
pub fn cross_category_prototypes(
    fg_set: &[&[f32]],
    bg_set: &[&[f32]],
    fg_global: &[f64],
    bg_global: &[f64],
) -> Result<(Vec<f32>, Vec<f32>)> {
    if fg_set.is_empty() || bg_set.is_empty() {
        return Err(Error::EmptyInput("prototype candidate set is empty".into()));
    }
    for (g, name) in [(fg_global, "foreground"), (bg_global, "background")] {
        if crate::numerics::norm(g) == 0.0 {
            return Err(Error::DegenerateVector(format!(
                "global {name} feature has zero norm"
            )));
        }
    }
    let fg = least_similar(fg_set, bg_global)?;
    let bg = least_similar(bg_set, fg_global)?;
    Ok((fg_set[fg].to_vec(), bg_set[bg].to_vec()))
}

/// Runs the whole per-image mining chain, starting from the coarse mask.
pub fn mine_image(fm: &FeatureMap, p: &CoarseMaskParams) -> Result<Mined> {
    let mask = coarse_mask(fm, p)?;
    mine_with_mask(fm, &mask)
}

/// Mining with a precomputed coarse mask.
pub fn mine_with_mask(fm: &FeatureMap, mask: &BinaryMask) -> Result<Mined> {
    let image_id = fm.image_id().to_string();
    let pooled = global_features(fm, mask).and_then(|(fg_global, bg_global)| {
        let (fg_set, bg_set) = split_sets(fm, mask)?;
        let (fg_proto, bg_proto) =
            cross_category_prototypes(&fg_set, &bg_set, &fg_global, &bg_global)?;
        let global_sim = cosine(&fg_global, &bg_global)?;
        Ok(ImageProtoRecord {
            image_id: image_id.clone(),
            fg_global,
            bg_global,
            fg_proto,
            bg_proto,
            global_sim,
        })
    });
    match pooled {
        Ok(record) => Ok(Mined::Record(record)),
        Err(Error::DegenerateMask { image_id, reason }) => {
            Ok(Mined::Degenerate { image_id, reason })
        }
        Err(e) => Err(e.for_image(&image_id)),
    }
}

/// Records strictly below `threshold`, in input order.
pub fn filter_kept<'a>(
    records: impl IntoIterator<Item = &'a ImageProtoRecord>,
    threshold: f64,
) -> Vec<&'a ImageProtoRecord> {
    records
        .into_iter()
        .filter(|r| r.global_sim < threshold)
        .collect()
}

/// Assembles index-aligned foreground and background libraries from the
/// records whose global similarity falls below the histogram-peak threshold.
pub fn build_libraries(mined: &[Mined], bins: usize) -> Result<LibraryBuild> {
    let records: Vec<&ImageProtoRecord> = mined.iter().filter_map(Mined::record).collect();
    let Some(first) = records.first() else {
        return Err(Error::EmptyLibrary(format!(
            "all {} images had degenerate coarse masks",
            mined.len()
        )));
    };
    let d = first.fg_proto.len();
    if let Some(bad) = records
        .iter()
        .find(|r| r.fg_proto.len() != d || r.bg_proto.len() != d)
    {
        return Err(Error::Shape(format!(
            "image {} has prototype dimension {}, expected {d}",
            bad.image_id,
            bad.fg_proto.len()
        )));
    }

    let sims: Vec<f64> = records.iter().map(|r| r.global_sim).collect();
    let threshold = histogram_peak(&sims, bins)?;
    let kept = filter_kept(records.iter().copied(), threshold);
    if kept.is_empty() {
        return Err(Error::EmptyLibrary(format!(
            "no image has global similarity below the threshold {threshold}"
        )));
    }

    let mut fg_lib = PrototypeLibrary::empty(Category::Foreground, d);
    let mut bg_lib = PrototypeLibrary::empty(Category::Background, d);
    for r in &kept {
        fg_lib
            .push(r.fg_proto.clone(), r.image_id.clone())
            .map_err(|e| e.for_image(&r.image_id))?;
        bg_lib
            .push(r.bg_proto.clone(), r.image_id.clone())
            .map_err(|e| e.for_image(&r.image_id))?;
    }

    let lines = mined
        .iter()
        .map(|m| match m {
            Mined::Record(r) => ReportLine {
                image_id: r.image_id.clone(),
                global_sim: Some(r.global_sim),
                kept: r.global_sim < threshold,
            },
            Mined::Degenerate { image_id, .. } => ReportLine {
                image_id: image_id.clone(),
                global_sim: None,
                kept: false,
            },
        })
        .collect();
    let report = LibraryBuildReport {
        total_images: mined.len(),
        kept_images: kept.len(),
        threshold,
        kept_ids: kept.iter().map(|r| r.image_id.clone()).collect(),
        skipped_degenerate: mined
            .iter()
            .filter(|m| m.record().is_none())
            .map(|m| m.image_id().to_string())
            .collect(),
        lines,
    };
    Ok(LibraryBuild {
        fg_lib,
        bg_lib,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_map(rng: &mut ChaCha8Rng, h: usize, w: usize, d: usize) -> FeatureMap {
        let data = (0..h * w * d)
            .map(|_| rng.random_range(-1.0f32..1.0))
            .collect();
        FeatureMap::new("rand", h, w, d, h, w, data).unwrap()
    }

    fn record(id: &str, sim: f64) -> Mined {
        Mined::Record(ImageProtoRecord {
            image_id: id.into(),
            fg_global: vec![1.0, 0.0],
            bg_global: vec![sim, (1.0 - sim * sim).sqrt()],
            fg_proto: vec![1.0, 0.5],
            bg_proto: vec![0.5, 1.0],
            global_sim: sim,
        })
    }

    #[test]
    fn pooling_all_but_one_foreground() {
        let data: Vec<f32> = (0..6).map(|v| v as f32).collect();
        let fm = FeatureMap::new("p", 2, 3, 1, 2, 3, data).unwrap();
        let mask = BinaryMask::new(2, 3, vec![1, 1, 1, 1, 1, 0]).unwrap();
        let (fg, bg) = global_features(&fm, &mask).unwrap();
        assert_eq!(fg, vec![2.0]);
        assert_eq!(bg, vec![5.0]);
    }

    #[test]
    fn pooling_singletons() {
        let fm = FeatureMap::new("s", 1, 2, 2, 1, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mask = BinaryMask::new(1, 2, vec![1, 0]).unwrap();
        let (fg, bg) = global_features(&fm, &mask).unwrap();
        assert_eq!(fg, vec![1.0, 2.0]);
        assert_eq!(bg, vec![3.0, 4.0]);
    }

    #[test]
    fn pooling_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fm = random_map(&mut rng, 3, 3, 4);
        let mask = BinaryMask::from_fn(3, 3, |i, j| (i * 3 + j) % 3 == 1);
        let (fg, bg) = global_features(&fm, &mask).unwrap();
        for c in 0..4 {
            let (mut fs, mut fnum, mut bs, mut bnum) = (0.0, 0.0, 0.0, 0.0);
            for i in 0..3 {
                for j in 0..3 {
                    let x = f64::from(fm.feature(i, j)[c]);
                    if mask.get(i, j) {
                        fs += x;
                        fnum += 1.0;
                    } else {
                        bs += x;
                        bnum += 1.0;
                    }
                }
            }
            assert!((fg[c] - fs / fnum).abs() < 1e-6);
            assert!((bg[c] - bs / bnum).abs() < 1e-6);
        }
    }

    #[test]
    fn degenerate_masks() {
        let fm = FeatureMap::new("z", 1, 2, 1, 1, 2, vec![1.0, 2.0]).unwrap();
        for bits in [vec![0, 0], vec![1, 1]] {
            let mask = BinaryMask::new(1, 2, bits).unwrap();
            let err = global_features(&fm, &mask).unwrap_err();
            match err {
                Error::DegenerateMask { image_id, .. } => assert_eq!(image_id, "z"),
                other => panic!("unexpected {other}"),
            }
        }
        let wrong = BinaryMask::zeros(2, 1);
        assert!(matches!(global_features(&fm, &wrong), Err(Error::Shape(_))));
    }

    #[test]
    fn split_counts_and_order() {
        let data: Vec<f32> = (0..12).map(|v| v as f32 + 1.0).collect();
        let fm = FeatureMap::new("o", 2, 3, 2, 2, 3, data).unwrap();
        let mask = BinaryMask::new(2, 3, vec![1, 0, 1, 0, 0, 1]).unwrap();
        let (fg, bg) = split_sets(&fm, &mask).unwrap();
        assert_eq!((fg.len(), bg.len()), (3, 3));

        let mask = BinaryMask::new(2, 3, vec![1, 0, 0, 0, 0, 1]).unwrap();
        let (fg, _) = split_sets(&fm, &mask).unwrap();
        assert_eq!(fg, vec![fm.feature(0, 0), fm.feature(1, 2)]);
    }

    #[test]
    fn split_is_partition_for_every_mask() {
        let data: Vec<f32> = (0..6).map(|v| v as f32).collect();
        let fm = FeatureMap::new("q", 2, 3, 1, 2, 3, data).unwrap();
        for bits in 1u32..63 {
            let mask = BinaryMask::from_fn(2, 3, |i, j| (bits >> (i * 3 + j)) & 1 == 1);
            let (fg, bg) = split_sets(&fm, &mask).unwrap();
            let mut all: Vec<f32> = fg.iter().chain(&bg).map(|f| f[0]).collect();
            all.sort_by(f32::total_cmp);
            assert_eq!(all, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        }
    }

    #[test]
    fn cross_category_analytic() {
        let s = std::f32::consts::FRAC_1_SQRT_2;
        let diag = [s, s];
        let fg_set: Vec<&[f32]> = vec![&[1.0, 0.0], &[0.0, 1.0], &diag];
        let bg_set: Vec<&[f32]> = vec![&[0.0, 1.0]];
        let (pf, pb) =
            cross_category_prototypes(&fg_set, &bg_set, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(pf, vec![1.0, 0.0]);
        assert_eq!(pb, vec![0.0, 1.0]);
    }

    #[test]
    fn cross_category_skips_zero_candidates() {
        let (zero, one, x) = ([0.0f32, 0.0], [1.0f32, 1.0], [1.0f32, 0.0]);
        let fg_set: Vec<&[f32]> = vec![&zero, &one];
        assert_eq!(least_similar(&fg_set, &[1.0, 0.0]).unwrap(), 1);
        let zeros: Vec<&[f32]> = vec![&zero];
        assert!(matches!(
            least_similar(&zeros, &[1.0, 0.0]),
            Err(Error::DegenerateVector(_))
        ));
        let ok: Vec<&[f32]> = vec![&x];
        assert!(matches!(
            cross_category_prototypes(&ok, &ok, &[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::DegenerateVector(_))
        ));
    }

    #[test]
    fn cross_category_random_matches_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let fg: Vec<Vec<f32>> = (0..20)
                .map(|_| (0..8).map(|_| rng.random_range(-1.0f32..1.0)).collect())
                .collect();
            let bg: Vec<Vec<f32>> = (0..20)
                .map(|_| (0..8).map(|_| rng.random_range(-1.0f32..1.0)).collect())
                .collect();
            let fg_g: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let bg_g: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let fg_refs: Vec<&[f32]> = fg.iter().map(Vec::as_slice).collect();
            let bg_refs: Vec<&[f32]> = bg.iter().map(Vec::as_slice).collect();
            let (pf, pb) = cross_category_prototypes(&fg_refs, &bg_refs, &fg_g, &bg_g).unwrap();

            let scan = |set: &[Vec<f32>], r: &[f64]| {
                let mut best = (0, f64::INFINITY);
                for (i, s) in set.iter().enumerate() {
                    let (mut sr, mut ss, mut rr) = (0.0, 0.0, 0.0);
                    for k in 0..8 {
                        let x = f64::from(s[k]);
                        sr += x * r[k];
                        ss += x * x;
                        rr += r[k] * r[k];
                    }
                    let c = sr / (ss.sqrt() * rr.sqrt());
                    if c < best.1 {
                        best = (i, c);
                    }
                }
                set[best.0].clone()
            };
            assert_eq!(pf, scan(&fg, &bg_g));
            assert_eq!(pb, scan(&bg, &fg_g));
        }
    }

    fn two_block_2x4() -> FeatureMap {
        let mut data = Vec::new();
        for _ in 0..2 {
            for j in 0..4 {
                data.extend_from_slice(if j < 2 {
                    &[1.0, 0.0, 0.0]
                } else {
                    &[0.0, 1.0, 0.0]
                });
            }
        }
        FeatureMap::new("blocks", 2, 4, 3, 28, 56, data).unwrap()
    }

    #[test]
    fn mine_two_block_map() {
        let fm = two_block_2x4();
        let Mined::Record(r) = mine_image(&fm, &CoarseMaskParams::default()).unwrap() else {
            panic!("expected a record");
        };
        assert!(r.global_sim.abs() < 1e-9);
        // every cell is on the border, so the tie-break picks the cluster at (1, 2)
        assert_eq!(r.fg_proto, vec![0.0, 1.0, 0.0]);
        assert_eq!(r.bg_proto, vec![1.0, 0.0, 0.0]);
        let recomputed = cosine(&r.fg_global, &r.bg_global).unwrap();
        assert!((recomputed - r.global_sim).abs() < 1e-6);
    }

    #[test]
    fn mine_constant_map_is_degenerate() {
        let fm = FeatureMap::new("flat", 3, 3, 2, 3, 3, [1.0, 2.0].repeat(9)).unwrap();
        let mined = mine_image(&fm, &CoarseMaskParams::default()).unwrap();
        assert!(matches!(mined, Mined::Degenerate { ref image_id, .. } if image_id == "flat"));
    }

    #[test]
    fn mined_record_internally_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fm = random_map(&mut rng, 6, 6, 5);
        if let Mined::Record(r) = mine_image(&fm, &CoarseMaskParams::default()).unwrap() {
            let recomputed = cosine(&r.fg_global, &r.bg_global).unwrap();
            assert!((recomputed - r.global_sim).abs() < 1e-6);
            assert!(fm.features().any(|f| f == r.fg_proto.as_slice()));
            assert!(fm.features().any(|f| f == r.bg_proto.as_slice()));
        }
    }

    fn planted() -> Vec<Mined> {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut mined = Vec::new();
        for i in 0..100 {
            let center = if i % 10 == 3 { 0.2 } else { 0.8 };
            mined.push(record(
                &format!("img{i:03}"),
                center + rng.random_range(-0.01..0.01),
            ));
        }
        mined
    }

    #[test]
    fn planted_threshold_keeps_low_similarity() {
        let mined = planted();
        let build = build_libraries(&mined, DEFAULT_BINS).unwrap();
        let thr = build.report.threshold;
        assert!((0.78..=0.82).contains(&thr), "{thr}");
        for m in &mined {
            let r = m.record().unwrap();
            let kept = build.report.kept_ids.contains(&r.image_id);
            assert_eq!(kept, r.global_sim < thr);
            if r.global_sim < 0.5 {
                assert!(kept);
            }
        }
        assert_eq!(build.fg_lib.len(), build.report.kept_images);
        assert_eq!(build.bg_lib.len(), build.report.kept_images);
        assert_eq!(build.fg_lib.source_ids(), build.bg_lib.source_ids());
        assert_eq!(build.fg_lib.category(), Category::Foreground);
        assert_eq!(build.bg_lib.category(), Category::Background);
    }

    #[test]
    fn single_record_is_empty_library() {
        let err = build_libraries(&[record("only", 0.4)], DEFAULT_BINS).unwrap_err();
        assert!(matches!(err, Error::EmptyLibrary(_)));
    }

    #[test]
    fn degenerate_only_is_empty_library() {
        let mined = vec![Mined::Degenerate {
            image_id: "x".into(),
            reason: "empty foreground".into(),
        }];
        assert!(matches!(
            build_libraries(&mined, 10),
            Err(Error::EmptyLibrary(_))
        ));
    }

    #[test]
    fn report_text_layout() {
        let mut mined = vec![record("a", 0.1), record("b", 0.9), record("c", 0.95)];
        mined.insert(
            1,
            Mined::Degenerate {
                image_id: "flat".into(),
                reason: "empty foreground".into(),
            },
        );
        let build = build_libraries(&mined, 2).unwrap();
        assert_eq!(build.report.skipped_degenerate, vec!["flat".to_string()]);
        assert_eq!(build.report.total_images, 4);
        let text = build.report.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[0].starts_with("threshold\t"));
        assert_eq!(lines[1], "a\t0.1\tkept");
        assert_eq!(lines[2], "flat\t-\tskipped");
        assert!(lines[3].ends_with("\tskipped"));
    }

    proptest! {
        #[test]
        fn lower_threshold_never_adds(
            sims in prop::collection::vec(-1.0f64..1.0, 1..60),
            t1 in -1.0f64..1.0, t2 in -1.0f64..1.0,
        ) {
            let records: Vec<ImageProtoRecord> = sims
                .iter()
                .enumerate()
                .map(|(i, &s)| match record(&i.to_string(), s) { Mined::Record(r) => r, _ => unreachable!() })
                .collect();
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let low: Vec<&str> = filter_kept(&records, lo).iter().map(|r| r.image_id.as_str()).collect();
            let high: Vec<&str> = filter_kept(&records, hi).iter().map(|r| r.image_id.as_str()).collect();
            prop_assert!(low.iter().all(|id| high.contains(id)));
        }

        #[test]
        fn prototypes_are_argmin_and_bit_exact(
            seed in any::<u64>(),
            bits in prop::collection::vec(any::<bool>(), 20),
        ) {
            prop_assume!(bits.iter().any(|&b| b) && bits.iter().any(|&b| !b));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let fm = random_map(&mut rng, 4, 5, 6);
            let mask = BinaryMask::from_fn(4, 5, |i, j| bits[i * 5 + j]);
            let Mined::Record(r) = mine_with_mask(&fm, &mask).unwrap() else { unreachable!() };
            let (fg_set, bg_set) = split_sets(&fm, &mask).unwrap();
            let best = cosine(&r.fg_proto, &r.bg_global).unwrap();
            for s in &fg_set {
                prop_assert!(best <= cosine(s, &r.bg_global).unwrap());
            }
            prop_assert!(fg_set.contains(&r.fg_proto.as_slice()));
            prop_assert!(bg_set.contains(&r.bg_proto.as_slice()));
        }
    }
}
