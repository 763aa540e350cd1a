//! On-disk model: the ensemble plus everything needed to reproduce its inputs
//! (normalization statistics, split, loss and target).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::basis::BasisModule;
use crate::dataset::{Dataset, NormStats, SplitSpec, Task};
use crate::ensemble::ConvexEnsemble;
use crate::error::{Error, Result};
use crate::loss::LossKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub variant: String,
    pub task: Task,
    pub loss: LossKind,
    #[serde(rename = "B")]
    pub bound: f64,
    pub target: String,
    pub features: Vec<String>,
    pub split: SplitSpec,
    pub norm_stats: NormStats,
    pub weights: Vec<f64>,
    pub atoms: Vec<BasisModule>,
}

impl ModelFile {
    pub fn ensemble(&self) -> Result<ConvexEnsemble> {
        ConvexEnsemble::from_parts(self.atoms.clone(), self.weights.clone())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ModelFile> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::MissingFile {
            path: path.to_path_buf(),
            source,
        })?;
        let model: ModelFile = serde_json::from_str(&text)?;
        model.ensemble()?;
        Ok(model)
    }

    /// Raw outputs (`n x m`) for a dataset in original units: features are
    /// normalized with the stored statistics, regression outputs mapped back.
    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        Error::check_dim(self.features.len(), data.n_features())?;
        let normalized = self.norm_stats.apply(data)?;
        let mut out = self.ensemble()?.predict_rows(normalized.features())?;
        if self.task == Task::Regression {
            if let Some(s) = self.norm_stats.target_stats(&self.target) {
                out.iter_mut().for_each(|v| *v = s.invert(*v));
            }
        }
        Ok(out)
    }
}
