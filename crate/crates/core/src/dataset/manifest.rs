use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DatasetError, SequenceRecord};
use crate::io::write_atomic;
use crate::motion::MotionFile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub split: Split,
}

/// List of labeled motion files with their split. Relative paths resolve
/// against the manifest's own directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub fps: f64,
    pub entries: Vec<ManifestEntry>,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl CorpusManifest {
    pub fn new(fps: f64, entries: Vec<ManifestEntry>, base_dir: impl Into<PathBuf>) -> Self {
        CorpusManifest { fps, entries, base_dir: base_dir.into() }
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let bytes =
            std::fs::read(path).map_err(|e| DatasetError::Manifest(format!("{}: {e}", path.display())))?;
        let mut m: CorpusManifest = serde_json::from_slice(&bytes)
            .map_err(|e| DatasetError::Manifest(format!("{}: {e}", path.display())))?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if !(m.fps > 0.0) {
            return Err(DatasetError::Manifest(format!("fps must be positive, got {}", m.fps)));
        }
        for e in &m.entries {
            let p = m.resolve(&e.path);
            if !p.is_file() {
                return Err(DatasetError::Manifest(format!("entry {} does not exist", p.display())));
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        let bytes = serde_json::to_vec_pretty(self).expect("manifest serializes");
        write_atomic(path, &bytes).map_err(|e| DatasetError::Manifest(e.to_string()))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Load every record of one split, resampled to the manifest fps.
    pub fn load_split(&self, split: Split) -> Result<Vec<SequenceRecord>, DatasetError> {
        self.entries
            .iter()
            .filter(|e| e.split == split)
            .map(|e| {
                let path = self.resolve(&e.path);
                let (motion, labels) = MotionFile::read(&path)?.into_motion()?;
                let labels = labels.ok_or_else(|| {
                    DatasetError::InvalidRecord(format!("{} has no labels", path.display()))
                })?;
                SequenceRecord::from_labels(motion, &labels)?.resample(self.fps)
            })
            .collect()
    }
}
