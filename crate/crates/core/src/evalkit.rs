//! Mask-quality metrics and dataset-level aggregation.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::manifest::DatasetManifest;
use crate::tensor_store::{read_mask, BinaryMask};

pub const DEFAULT_BETA_SQ: f64 = 0.3;

fn check_dims(pred: &BinaryMask, gt: &BinaryMask) -> Result<()> {
    if (pred.rows(), pred.cols()) != (gt.rows(), gt.cols()) {
        return Err(Error::Shape(format!(
            "prediction is {}x{}, ground truth {}x{}",
            pred.rows(),
            pred.cols(),
            gt.rows(),
            gt.cols()
        )));
    }
    Ok(())
}

/// (true positives, predicted positives, actual positives)
fn counts(pred: &BinaryMask, gt: &BinaryMask) -> (usize, usize, usize) {
    let mut tp = 0;
    for (p, g) in pred.bits().iter().zip(gt.bits()) {
        tp += usize::from(*p == 1 && *g == 1);
    }
    (tp, pred.count_ones(), gt.count_ones())
}

pub fn mae(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    check_dims(pred, gt)?;
    let diff = pred
        .bits()
        .iter()
        .zip(gt.bits())
        .filter(|(p, g)| p != g)
        .count();
    Ok(diff as f64 / pred.bits().len() as f64)
}

/// Intersection over union; two empty masks score 1.
pub fn iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    check_dims(pred, gt)?;
    let (tp, np, ng) = counts(pred, gt);
    let union = np + ng - tp;
    Ok(if union == 0 {
        1.0
    } else {
        tp as f64 / union as f64
    })
}

/// Plain F-measure over foreground bits; two empty masks score 1.
pub fn f_measure(pred: &BinaryMask, gt: &BinaryMask, beta_sq: f64) -> Result<f64> {
    check_dims(pred, gt)?;
    let (tp, np, ng) = counts(pred, gt);
    if np == 0 && ng == 0 {
        return Ok(1.0);
    }
    let precision = if np == 0 { 0.0 } else { tp as f64 / np as f64 };
    let recall = if ng == 0 { 0.0 } else { tp as f64 / ng as f64 };
    Ok(f_from_pr(precision, recall, beta_sq))
}

pub fn f_from_pr(precision: f64, recall: f64, beta_sq: f64) -> f64 {
    let denom = beta_sq * precision + recall;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + beta_sq) * precision * recall / denom
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageScores {
    pub image_id: String,
    pub mae: f64,
    pub iou: f64,
    pub f_measure: f64,
}

impl ImageScores {
    pub fn compute(
        image_id: impl Into<String>,
        pred: &BinaryMask,
        gt: &BinaryMask,
    ) -> Result<Self> {
        let image_id = image_id.into();
        let wrap = |e: Error| e.for_image(&image_id);
        Ok(Self {
            mae: mae(pred, gt).map_err(wrap)?,
            iou: iou(pred, gt).map_err(wrap)?,
            f_measure: f_measure(pred, gt, DEFAULT_BETA_SQ).map_err(wrap)?,
            image_id,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_image: Vec<ImageScores>,
    pub mean_mae: f64,
    pub mean_iou: f64,
    pub mean_f: f64,
}

const HEADER: &str = "id\tmae\tiou\tf_measure";

impl EvalReport {
    pub fn from_scores(per_image: Vec<ImageScores>) -> Result<Self> {
        if per_image.is_empty() {
            return Err(Error::EmptyInput("no images to evaluate".into()));
        }
        let n = per_image.len() as f64;
        let mean = |f: fn(&ImageScores) -> f64| per_image.iter().map(f).sum::<f64>() / n;
        Ok(Self {
            mean_mae: mean(|s| s.mae),
            mean_iou: mean(|s| s.iou),
            mean_f: mean(|s| s.f_measure),
            per_image,
        })
    }

    pub fn get(&self, image_id: &str) -> Option<&ImageScores> {
        self.per_image.iter().find(|s| s.image_id == image_id)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("{HEADER}\n");
        for s in &self.per_image {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                s.image_id, s.mae, s.iou, s.f_measure
            ));
        }
        out.push_str(&format!(
            "MEAN\t{}\t{}\t{}\n",
            self.mean_mae, self.mean_iou, self.mean_f
        ));
        out
    }

    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(HEADER) {
            return Err(Error::Format("evaluation report lacks its header".into()));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Format(format!("bad number {s:?} in evaluation report")))
        };
        let mut per_image = Vec::new();
        let mut means = None;
        for line in lines {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(Error::Format(format!("bad report row {line:?}")));
            }
            let (a, b, c) = (parse(f[1])?, parse(f[2])?, parse(f[3])?);
            if f[0] == "MEAN" {
                means = Some((a, b, c));
            } else {
                per_image.push(ImageScores {
                    image_id: f[0].to_string(),
                    mae: a,
                    iou: b,
                    f_measure: c,
                });
            }
        }
        let (mean_mae, mean_iou, mean_f) =
            means.ok_or_else(|| Error::Format("evaluation report lacks a MEAN row".into()))?;
        Ok(Self {
            per_image,
            mean_mae,
            mean_iou,
            mean_f,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse_tsv(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Scores `<pred_dir>/<id>.pgm` against `<gt_dir>/<id>.pgm` for every
/// manifest id, in manifest order.
pub fn evaluate_dataset(
    manifest: &DatasetManifest,
    pred_dir: &Path,
    gt_dir: &Path,
) -> Result<EvalReport> {
    let scores = manifest
        .ids()
        .map(|id| {
            let file = format!("{id}.pgm");
            let pred = read_mask(pred_dir.join(&file)).map_err(|e| e.for_image(id))?;
            let gt = read_mask(gt_dir.join(&file)).map_err(|e| e.for_image(id))?;
            ImageScores::compute(id, &pred, &gt)
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_scores(scores)
}
