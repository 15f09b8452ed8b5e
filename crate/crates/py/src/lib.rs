//! Python bindings: feature maps, masks, prototype libraries, the per-stage
//! operations and the whole directory pipeline.

use std::path::PathBuf;

use pyo3::exceptions::{PyFileNotFoundError, PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use protoseg::cli::{cmd_pipeline, PipelineConfig};
use protoseg::coarse_mask::{ClusterMethod, CoarseMaskParams};
use protoseg::evalkit;
use protoseg::mvkr::{self, RetrievalParams, View};
use protoseg::prototype_miner::{self, Mined};
use protoseg::synth_bench::{self, FgShape, SynthSpec};
use protoseg::tensor_store::{self, BinaryMask, Category, FeatureMap, PrototypeLibrary};
use protoseg::Error;

fn to_py(err: Error) -> PyErr {
    let msg = err.to_string();
    match err.root() {
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
            PyFileNotFoundError::new_err(msg)
        }
        Error::Io { .. } => PyOSError::new_err(msg),
        Error::Convergence { .. } => PyRuntimeError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

#[pyclass(name = "FeatureMap", module = "protoseg", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyFeatureMap(FeatureMap);

#[pymethods]
impl PyFeatureMap {
    #[new]
    #[pyo3(signature = (image_id, h, w, d, data, orig_h=None, orig_w=None))]
    fn new(
        image_id: String,
        h: usize,
        w: usize,
        d: usize,
        data: Vec<f32>,
        orig_h: Option<usize>,
        orig_w: Option<usize>,
    ) -> PyResult<Self> {
        FeatureMap::new(
            image_id,
            h,
            w,
            d,
            orig_h.unwrap_or(h),
            orig_w.unwrap_or(w),
            data,
        )
        .map(Self)
        .map_err(to_py)
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        tensor_store::read_fmap(path).map(Self).map_err(to_py)
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        tensor_store::write_fmap(path, &self.0).map_err(to_py)
    }

    #[getter]
    fn image_id(&self) -> &str {
        self.0.image_id()
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        (self.0.h(), self.0.w(), self.0.d())
    }

    #[getter]
    fn orig_size(&self) -> (usize, usize) {
        (self.0.orig_h(), self.0.orig_w())
    }

    fn feature(&self, i: usize, j: usize) -> PyResult<Vec<f32>> {
        if i >= self.0.h() || j >= self.0.w() {
            return Err(PyValueError::new_err(format!(
                "cell ({i}, {j}) out of range"
            )));
        }
        Ok(self.0.feature(i, j).to_vec())
    }

    fn data(&self) -> Vec<f32> {
        self.0.data().to_vec()
    }

    fn transform(&self, view: &str) -> PyResult<Self> {
        Ok(Self(mvkr::transform_fm(&self.0, parse_view(view)?)))
    }

    fn __repr__(&self) -> String {
        format!(
            "FeatureMap({:?}, h={}, w={}, d={})",
            self.0.image_id(),
            self.0.h(),
            self.0.w(),
            self.0.d()
        )
    }
}

#[pyclass(
    name = "BinaryMask",
    module = "protoseg",
    frozen,
    skip_from_py_object,
    eq
)]
#[derive(Clone, PartialEq)]
struct PyBinaryMask(BinaryMask);

#[pymethods]
impl PyBinaryMask {
    #[new]
    fn new(rows: usize, cols: usize, bits: Vec<u8>) -> PyResult<Self> {
        BinaryMask::new(rows, cols, bits).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        tensor_store::read_mask(path).map(Self).map_err(to_py)
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        tensor_store::write_mask(path, &self.0).map_err(to_py)
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.0.rows(), self.0.cols())
    }

    fn get(&self, i: usize, j: usize) -> PyResult<bool> {
        if i >= self.0.rows() || j >= self.0.cols() {
            return Err(PyValueError::new_err(format!(
                "cell ({i}, {j}) out of range"
            )));
        }
        Ok(self.0.get(i, j))
    }

    fn bits(&self) -> Vec<u8> {
        self.0.bits().to_vec()
    }

    fn count_ones(&self) -> usize {
        self.0.count_ones()
    }

    fn foreground_fraction(&self) -> f64 {
        self.0.foreground_fraction()
    }

    fn complement(&self) -> Self {
        Self(self.0.complement())
    }

    fn transform(&self, view: &str) -> PyResult<Self> {
        Ok(Self(mvkr::transform_mask(&self.0, parse_view(view)?)))
    }

    fn upsample(&self, rows: usize, cols: usize) -> PyResult<Self> {
        mvkr::upsample_mask(&self.0, rows, cols)
            .map(Self)
            .map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "BinaryMask({}x{}, fg={})",
            self.0.rows(),
            self.0.cols(),
            self.0.count_ones()
        )
    }
}

#[pyclass(
    name = "PrototypeLibrary",
    module = "protoseg",
    frozen,
    skip_from_py_object
)]
#[derive(Clone)]
struct PyPrototypeLibrary(PrototypeLibrary);

#[pymethods]
impl PyPrototypeLibrary {
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        tensor_store::read_plib(path).map(Self).map_err(to_py)
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        tensor_store::write_plib(path, &self.0).map_err(to_py)
    }

    #[getter]
    fn category(&self) -> &'static str {
        match self.0.category() {
            Category::Foreground => "foreground",
            Category::Background => "background",
        }
    }

    #[getter]
    fn d(&self) -> usize {
        self.0.d()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn prototype(&self, idx: usize) -> PyResult<Vec<f32>> {
        if idx >= self.0.len() {
            return Err(PyValueError::new_err(format!(
                "prototype {idx} out of range"
            )));
        }
        Ok(self.0.prototype(idx).to_vec())
    }

    fn source_ids(&self) -> Vec<String> {
        self.0.source_ids().to_vec()
    }
}

fn parse_view(s: &str) -> PyResult<View> {
    s.parse().map_err(to_py)
}

fn retrieval_params(
    top_k: usize,
    views: Option<Vec<String>>,
    fg_tie_break: bool,
) -> PyResult<RetrievalParams> {
    let views = match views {
        Some(v) => v
            .iter()
            .map(|s| parse_view(s))
            .collect::<PyResult<Vec<_>>>()?,
        None => View::ALL.to_vec(),
    };
    Ok(RetrievalParams {
        top_k,
        views,
        fg_tie_break,
    })
}

fn coarse_params(method: &str, eig_count: usize, seed: u64) -> PyResult<CoarseMaskParams> {
    Ok(CoarseMaskParams {
        method: method.parse::<ClusterMethod>().map_err(to_py)?,
        eig_count,
        kmeans_seed: seed,
        ..Default::default()
    })
}

/// Coarse foreground/background split of one feature map.
#[pyfunction]
#[pyo3(signature = (fm, method="spectral", eig_count=2, seed=0))]
fn coarse_mask(
    fm: &PyFeatureMap,
    method: &str,
    eig_count: usize,
    seed: u64,
) -> PyResult<PyBinaryMask> {
    let p = coarse_params(method, eig_count, seed)?;
    protoseg::coarse_mask::coarse_mask(&fm.0, &p)
        .map(PyBinaryMask)
        .map_err(to_py)
}

/// Mines one image; returns `None` when the mask leaves a side empty.
#[pyfunction]
fn mine(py: Python<'_>, fm: &PyFeatureMap, mask: &PyBinaryMask) -> PyResult<Option<Py<PyAny>>> {
    match prototype_miner::mine_with_mask(&fm.0, &mask.0).map_err(to_py)? {
        Mined::Degenerate { .. } => Ok(None),
        Mined::Record(r) => {
            let dict = pyo3::types::PyDict::new(py);
            dict.set_item("image_id", r.image_id)?;
            dict.set_item("fg_proto", r.fg_proto)?;
            dict.set_item("bg_proto", r.bg_proto)?;
            dict.set_item("global_sim", r.global_sim)?;
            Ok(Some(dict.into_any().unbind()))
        }
    }
}

/// Builds both libraries from per-image maps and coarse masks.
/// Returns `(fg_lib, bg_lib, threshold, kept_ids)`.
#[pyfunction]
#[pyo3(signature = (fmaps, masks, bins=50))]
fn build_libraries(
    fmaps: Vec<PyRef<'_, PyFeatureMap>>,
    masks: Vec<PyRef<'_, PyBinaryMask>>,
    bins: usize,
) -> PyResult<(PyPrototypeLibrary, PyPrototypeLibrary, f64, Vec<String>)> {
    if fmaps.len() != masks.len() {
        return Err(PyValueError::new_err("fmaps and masks differ in length"));
    }
    let mined = fmaps
        .iter()
        .zip(&masks)
        .map(|(f, m)| prototype_miner::mine_with_mask(&f.0, &m.0))
        .collect::<Result<Vec<_>, _>>()
        .map_err(to_py)?;
    let b = prototype_miner::build_libraries(&mined, bins).map_err(to_py)?;
    Ok((
        PyPrototypeLibrary(b.fg_lib),
        PyPrototypeLibrary(b.bg_lib),
        b.report.threshold,
        b.report.kept_ids,
    ))
}

/// Returns `(is_foreground, fg_votes, bg_votes)`.
#[pyfunction]
#[pyo3(signature = (feature, fg_lib, bg_lib, top_k=512, fg_tie_break=true))]
fn knn_vote(
    feature: Vec<f64>,
    fg_lib: &PyPrototypeLibrary,
    bg_lib: &PyPrototypeLibrary,
    top_k: usize,
    fg_tie_break: bool,
) -> PyResult<(bool, usize, usize)> {
    let index = mvkr::build_index(&fg_lib.0, &bg_lib.0).map_err(to_py)?;
    let v = mvkr::knn_vote(&feature, &index, top_k, fg_tie_break).map_err(to_py)?;
    Ok((v.foreground, v.fg_votes, v.bg_votes))
}

/// Multi-view KNN pseudo-mask at grid resolution.
#[pyfunction]
#[pyo3(signature = (fm, fg_lib, bg_lib, top_k=512, views=None, fg_tie_break=true))]
fn mvkr_mask(
    py: Python<'_>,
    fm: &PyFeatureMap,
    fg_lib: &PyPrototypeLibrary,
    bg_lib: &PyPrototypeLibrary,
    top_k: usize,
    views: Option<Vec<String>>,
    fg_tie_break: bool,
) -> PyResult<PyBinaryMask> {
    let p = retrieval_params(top_k, views, fg_tie_break)?;
    let index = mvkr::build_index(&fg_lib.0, &bg_lib.0).map_err(to_py)?;
    py.detach(|| mvkr::mvkr_mask(&fm.0, &index, &p))
        .map(PyBinaryMask)
        .map_err(to_py)
}

#[pyfunction]
fn mae(pred: &PyBinaryMask, gt: &PyBinaryMask) -> PyResult<f64> {
    evalkit::mae(&pred.0, &gt.0).map_err(to_py)
}

#[pyfunction]
fn iou(pred: &PyBinaryMask, gt: &PyBinaryMask) -> PyResult<f64> {
    evalkit::iou(&pred.0, &gt.0).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (pred, gt, beta_sq=0.3))]
fn f_measure(pred: &PyBinaryMask, gt: &PyBinaryMask, beta_sq: f64) -> PyResult<f64> {
    evalkit::f_measure(&pred.0, &gt.0, beta_sq).map_err(to_py)
}

/// Writes a synthetic dataset under `out_dir`; returns the image ids.
#[pyfunction]
#[pyo3(signature = (
    out_dir, num_images=100, h=16, w=16, d=32, intra_sim=0.9, dataset_sep=0.1,
    noise_sigma=0.05, fg_shape="centered_rect", artifact_rate=0.0, seed=7
))]
#[allow(clippy::too_many_arguments)]
fn synth(
    py: Python<'_>,
    out_dir: PathBuf,
    num_images: usize,
    h: usize,
    w: usize,
    d: usize,
    intra_sim: f64,
    dataset_sep: f64,
    noise_sigma: f64,
    fg_shape: &str,
    artifact_rate: f64,
    seed: u64,
) -> PyResult<Vec<String>> {
    let spec = SynthSpec {
        num_images,
        h,
        w,
        d,
        intra_sim,
        dataset_sep,
        noise_sigma,
        fg_shape: fg_shape.parse::<FgShape>().map_err(to_py)?,
        artifact_rate,
        seed,
    };
    let manifest = py
        .detach(|| synth_bench::generate(&spec).and_then(|ds| ds.write(&out_dir)))
        .map_err(to_py)?;
    Ok(manifest.ids().map(str::to_string).collect())
}

/// Runs the directory pipeline; returns `(mean_mae, mean_iou, mean_f)` when
/// ground truth is given.
#[pyfunction]
#[pyo3(signature = (
    fmap_dir, out_dir, gt_dir=None, top_k=512, views=None, bins=50,
    method="spectral", eig_count=2, seed=0, workers=1, fg_tie_break=true
))]
#[allow(clippy::too_many_arguments)]
fn run_pipeline(
    py: Python<'_>,
    fmap_dir: PathBuf,
    out_dir: PathBuf,
    gt_dir: Option<PathBuf>,
    top_k: usize,
    views: Option<Vec<String>>,
    bins: usize,
    method: &str,
    eig_count: usize,
    seed: u64,
    workers: usize,
    fg_tie_break: bool,
) -> PyResult<Option<(f64, f64, f64)>> {
    let mut cfg = PipelineConfig::new(fmap_dir, out_dir);
    cfg.gt_dir = gt_dir;
    cfg.coarse = coarse_params(method, eig_count, seed)?;
    cfg.retrieval = retrieval_params(top_k, views, fg_tie_break)?;
    cfg.bins = bins;
    cfg.workers = workers.max(1);
    let report = py.detach(|| cmd_pipeline(&cfg)).map_err(to_py)?;
    Ok(report.map(|r| (r.mean_mae, r.mean_iou, r.mean_f)))
}

#[pymodule]
#[pyo3(name = "protoseg")]
fn protoseg_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFeatureMap>()?;
    m.add_class::<PyBinaryMask>()?;
    m.add_class::<PyPrototypeLibrary>()?;
    m.add_function(wrap_pyfunction!(coarse_mask, m)?)?;
    m.add_function(wrap_pyfunction!(mine, m)?)?;
    m.add_function(wrap_pyfunction!(build_libraries, m)?)?;
    m.add_function(wrap_pyfunction!(knn_vote, m)?)?;
    m.add_function(wrap_pyfunction!(mvkr_mask, m)?)?;
    m.add_function(wrap_pyfunction!(mae, m)?)?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(f_measure, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add(
        "VIEWS",
        View::ALL.iter().map(|v| v.name()).collect::<Vec<_>>(),
    )?;
    Ok(())
}
