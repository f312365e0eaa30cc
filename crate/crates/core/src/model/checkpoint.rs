use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FusionModel, ModelConfig, ParamStore};
use crate::dataset::BmtArray;
use crate::error::{Error, Result};
use crate::modality::ModalitySet;
use crate::sensing::GpsStats;
use crate::tensor::Tensor;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    model: ModelConfig,
    modalities: ModalitySet,
    gps_stats: Option<GpsStats>,
    epoch: usize,
    val_top1: f64,
    params: Vec<ParamEntry>,
}

/// A trained model with everything needed to reproduce its inputs.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: FusionModel<f32>,
    /// Modalities the model was trained on.
    pub modalities: ModalitySet,
    /// Training-split GPS statistics, when GPS was trained on.
    pub gps_stats: Option<GpsStats>,
    /// Epoch (1-based) of the selected weights.
    pub epoch: usize,
    pub val_top1: f64,
}

impl Checkpoint {
    pub fn save(&self, dir: &Path) -> Result<()> {
        let pdir = dir.join("params");
        fs::create_dir_all(&pdir).map_err(|e| Error::io(&pdir, e))?;
        let mut params = Vec::new();
        for (name, t) in self.model.params().iter() {
            let file = format!("params/{name}.bmt");
            BmtArray::f32(t.dims().to_vec(), t.data().to_vec())?.write(&dir.join(&file))?;
            params.push(ParamEntry {
                name: name.to_string(),
                shape: t.dims().to_vec(),
                file,
            });
        }
        let header = Header {
            model: self.model.config().clone(),
            modalities: self.modalities,
            gps_stats: self.gps_stats.clone(),
            epoch: self.epoch,
            val_top1: self.val_top1,
            params,
        };
        let path = dir.join(CHECKPOINT_FILE);
        let mut text = serde_json::to_string_pretty(&header).map_err(|e| Error::format(&path, e.to_string()))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(CHECKPOINT_FILE);
        let text = fs::read_to_string(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingArtifact(path.clone())
            } else {
                Error::io(&path, e)
            }
        })?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let header: Header = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::format(&path, format!("{}: {}", e.path(), e.inner())))?;
        let mut store = ParamStore::default();
        for entry in &header.params {
            let fpath = dir.join(&entry.file);
            let array = BmtArray::read(&fpath)?;
            if array.dims != entry.shape {
                return Err(Error::format(
                    &fpath,
                    format!("shape {:?} != {:?}", array.dims, entry.shape),
                ));
            }
            let data = array
                .into_f32()
                .ok_or_else(|| Error::format(&fpath, "parameters must be f32"))?;
            store.insert(&entry.name, Tensor::new(entry.shape.clone(), data)?)?;
        }
        let model = FusionModel::from_parts(header.model, store).map_err(|e| Error::format(&path, e.to_string()))?;
        Ok(Self {
            model,
            modalities: header.modalities,
            gps_stats: header.gps_stats,
            epoch: header.epoch,
            val_top1: header.val_top1,
        })
    }
}
