//! Image lists tying ids to feature-map and ground-truth files.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image_id: String,
    pub fmap_path: PathBuf,
    pub gt_path: Option<PathBuf>,
}

/// Ordered list of images; the order fixes every downstream iteration.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.image_id.as_str())
    }

    /// Every `*.fmap` file in `fmap_dir`, sorted by file name, with the file
    /// stem as id. Ground truth is looked up as `<gt_dir>/<id>.pgm`.
    pub fn from_dirs(fmap_dir: &Path, gt_dir: Option<&Path>) -> Result<Self> {
        let listing = fs::read_dir(fmap_dir).map_err(|e| Error::io(fmap_dir, e))?;
        let mut paths = Vec::new();
        for entry in listing {
            let path = entry.map_err(|e| Error::io(fmap_dir, e))?.path();
            if path.is_file() && path.extension().is_some_and(|x| x == "fmap") {
                paths.push(path);
            }
        }
        paths.sort();
        let entries = paths
            .into_iter()
            .map(|fmap_path| {
                let image_id = fmap_path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                let gt_path = gt_dir.map(|g| g.join(format!("{image_id}.pgm")));
                ManifestEntry {
                    image_id,
                    fmap_path,
                    gt_path,
                }
            })
            .collect();
        Ok(Self { entries })
    }

    /// One `id<TAB>fmap_path[<TAB>gt_path]` line per image.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&e.image_id);
            out.push('\t');
            out.push_str(&e.fmap_path.to_string_lossy());
            if let Some(gt) = &e.gt_path {
                out.push('\t');
                out.push_str(&gt.to_string_lossy());
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if !(2..=3).contains(&fields.len()) || fields[0].is_empty() {
                return Err(Error::Format(format!("manifest line {}: {line:?}", n + 1)));
            }
            entries.push(ManifestEntry {
                image_id: fields[0].to_string(),
                fmap_path: PathBuf::from(fields[1]),
                gt_path: fields.get(2).map(PathBuf::from),
            });
        }
        Ok(Self { entries })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}
