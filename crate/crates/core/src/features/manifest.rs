use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Modality;
use crate::error::{read_json, write_json, Error, Result};

/// Per-video record in `manifest.json`. Relative paths are resolved against
/// the manifest's directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub video_id: String,
    /// Source video (Y4M file or PNG frame directory).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompts: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fragments: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub captions: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub features: BTreeMap<Modality, PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fused: Option<PathBuf>,
    /// Slow and fast pathway widths inside each `slowfast` vector.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temporal_split: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mos: Option<f64>,
    /// Scores for individual quality dimensions, e.g. `"blur"`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub mos_dims: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub videos: Vec<ManifestEntry>,
    #[serde(skip)]
    root: PathBuf,
}

impl DatasetManifest {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DatasetManifest {
            videos: Vec::new(),
            root: root.into(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut m: DatasetManifest = read_json(path)?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut ids: Vec<&str> = m.videos.iter().map(|v| v.video_id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!(
                "{}: duplicate video id {:?}",
                path.display(),
                w[0]
            )));
        }
        Ok(m)
    }

    /// Loads `path` if it exists, otherwise starts an empty manifest rooted
    /// at its directory.
    pub fn load_or_new(path: &Path) -> Result<Self> {
        if path.exists() {
            Self::load(path)
        } else {
            Ok(Self::new(
                path.parent().map(Path::to_path_buf).unwrap_or_default(),
            ))
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Expresses `p` relative to the manifest root when it lies beneath it.
    pub fn relativize(&self, p: &Path) -> PathBuf {
        p.strip_prefix(&self.root)
            .map(Path::to_path_buf)
            .unwrap_or_else(|_| p.to_path_buf())
    }

    pub fn get(&self, video_id: &str) -> Option<&ManifestEntry> {
        self.videos.iter().find(|v| v.video_id == video_id)
    }

    /// Returns the entry for `video_id`, appending an empty one if needed.
    pub fn entry_mut(&mut self, video_id: &str) -> &mut ManifestEntry {
        match self.videos.iter().position(|v| v.video_id == video_id) {
            Some(i) => &mut self.videos[i],
            None => {
                self.videos.push(ManifestEntry {
                    video_id: video_id.to_string(),
                    ..Default::default()
                });
                self.videos.last_mut().unwrap()
            }
        }
    }
}
