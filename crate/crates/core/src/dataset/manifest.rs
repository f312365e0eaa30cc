use std::collections::BTreeMap;
use std::fs;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sensing::Fov;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::invalid(format!("unknown split '{s}' (train|val|test)"))),
        }
    }
}

/// Contiguous train/validation/test ranges over `[0, n)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

impl SplitSpec {
    pub fn range(&self, split: Split) -> Range<usize> {
        match split {
            Split::Train => self.train.clone(),
            Split::Val => self.val.clone(),
            Split::Test => self.test.clone(),
        }
    }

    pub fn split_of(&self, index: usize) -> Option<Split> {
        [Split::Train, Split::Val, Split::Test]
            .into_iter()
            .find(|s| self.range(*s).contains(&index))
    }

    pub fn total(&self) -> usize {
        self.test.end
    }

    /// Ranges must be non-overlapping, ordered and cover `[0, n)`.
    pub fn validate(&self, n: usize) -> Result<()> {
        let ok = self.train.start == 0
            && self.train.end == self.val.start
            && self.val.end == self.test.start
            && self.test.end == n
            && self.train.start <= self.train.end
            && self.val.start <= self.val.end
            && self.test.start <= self.test.end;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("split {self:?} does not partition [0, {n})")))
        }
    }
}

/// Floor/floor/remainder 70/15/15 partition of `[0, n)`.
pub fn make_split(n: usize) -> Result<SplitSpec> {
    if n < 3 {
        return Err(Error::invalid(format!("split needs at least 3 samples, got {n}")));
    }
    let a = n * 70 / 100;
    let b = n * 85 / 100;
    Ok(SplitSpec {
        train: 0..a,
        val: a..b,
        test: b..n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodebookInfo {
    pub num_elements: usize,
    pub num_beams: usize,
}

/// Shape, dtype name and relative file of one stored array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayEntry {
    pub shape: Vec<usize>,
    pub dtype: String,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub num_samples: usize,
    pub codebook: CodebookInfo,
    pub noise_var: f64,
    /// Keyed by modality name (`mmwave`, `camera`, `lidar`, `radar`, `gps`).
    pub modalities: BTreeMap<String, ArrayEntry>,
    /// Oracle beam per sample, `[N]`.
    pub labels: ArrayEntry,
    /// Per-sample presence flags in canonical modality order, `[N, 5]`.
    /// Absent means every stored modality is present for every sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub presence: Option<ArrayEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bev_fov: Option<Fov>,
    pub split: SplitSpec,
}

impl Manifest {
    pub fn read(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingArtifact(path.clone())
            } else {
                Error::io(&path, e)
            }
        })?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| Error::format(&path, format!("{}: {}", e.path(), e.inner())))
    }

    pub fn write(&self, root: &Path) -> Result<()> {
        let path = root.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::format(&path, e.to_string()))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}
