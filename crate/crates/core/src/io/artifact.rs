//! Self-describing, versioned model document.
//!
//! Everything a trained model needs to predict again lives in one JSON text
//! file: the construction config, the sparse adjacency as (row, col, value)
//! triplets, the dense matrices, the final reservoir state, and the training
//! manifest. JSON float serialization round-trips f64 exactly, so a
//! saved/loaded model reproduces closed-loop outputs bit for bit.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::reservoir::{Reservoir, ReservoirConfig, ReservoirState};
use crate::sparse::CsrMatrix;
use crate::training::{TrainedModel, TrainingManifest};

pub const FORMAT_VERSION: u32 = 1;

/// Row-major dense matrix payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixData {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixData {
    fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                data.push(m[(r, c)]);
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::ModelFormat(format!(
                "matrix payload {}x{} has {} entries",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(DMatrix::from_fn(self.rows, self.cols, |r, c| {
            self.data[r * self.cols + c]
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub config: ReservoirConfig,
    /// Sparse adjacency as (row, col, value) triplets.
    pub a_triplets: Vec<(usize, usize, f64)>,
    pub w_in: MatrixData,
    pub b: Vec<f64>,
    pub w_out: MatrixData,
    pub final_state: Vec<f64>,
    pub manifest: TrainingManifest,
    /// Echo of the experiment that produced the model, when trained through
    /// the orchestrator; lets `predict` run from the document alone.
    #[serde(default)]
    pub experiment: Option<ExperimentConfig>,
}

impl ModelArtifact {
    pub fn from_model(model: &TrainedModel) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            config: model.reservoir.config.clone(),
            a_triplets: model.reservoir.a.triplets(),
            w_in: MatrixData::from_matrix(&model.reservoir.w_in),
            b: model.reservoir.b.iter().copied().collect(),
            w_out: MatrixData::from_matrix(&model.w_out),
            final_state: model.final_state.r.iter().copied().collect(),
            manifest: model.manifest.clone(),
            experiment: None,
        }
    }

    pub fn into_model(self) -> Result<TrainedModel> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported format version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        let d_r = self.config.d_r;
        let a = CsrMatrix::from_triplets(d_r, &self.a_triplets)
            .map_err(|e| Error::ModelFormat(format!("adjacency triplets: {e}")))?;
        let w_in = self.w_in.to_matrix()?;
        let w_out = self.w_out.to_matrix()?;
        if w_in.nrows() != d_r || w_in.ncols() != self.config.d_in {
            return Err(Error::ModelFormat("W_in shape mismatch".into()));
        }
        if w_out.nrows() != self.config.d_out || w_out.ncols() != d_r {
            return Err(Error::ModelFormat("W_out shape mismatch".into()));
        }
        if self.b.len() != d_r || self.final_state.len() != d_r {
            return Err(Error::ModelFormat("vector length mismatch".into()));
        }
        Ok(TrainedModel {
            reservoir: Reservoir {
                a,
                w_in,
                b: DVector::from_vec(self.b),
                config: self.config,
            },
            w_out,
            final_state: ReservoirState {
                r: DVector::from_vec(self.final_state),
            },
            manifest: self.manifest,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::ModelFormat(e.to_string()))?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::ModelFormat(e.to_string()))
    }
}

/// Convenience: save a trained model directly.
pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    ModelArtifact::from_model(model).save(path)
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    ModelArtifact::load(path)?.into_model()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prediction::closed_loop;
    use crate::reservoir::Reservoir;
    use crate::training::{train, Corpus, TrajectorySegment};

    fn small_model() -> TrainedModel {
        let cfg = ReservoirConfig {
            d_r: 25,
            density: 0.4,
            spectral_radius: 0.9,
            leak: 0.55,
            input_scale: 1.1,
            ridge: 1e-7,
            d_in: 3,
            d_out: 3,
            dt: 0.2,
            seed: 0,
        };
        let res = Reservoir::build(&cfg, 13).unwrap();
        let states = DMatrix::from_fn(3, 300, |i, j| ((i + 1) as f64 * j as f64 * 0.07).sin());
        let corpus =
            Corpus::new(vec![TrajectorySegment::new(0.8, states, 0.2).unwrap()]).unwrap();
        train(res, &corpus, 40).unwrap()
    }

    #[test]
    fn round_trip_reproduces_closed_loop_exactly() {
        let model = small_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();

        assert_eq!(loaded.reservoir, model.reservoir);
        assert_eq!(loaded.w_out, model.w_out);
        assert_eq!(loaded.manifest, model.manifest);

        let u0 = DVector::from_element(3, 0.1);
        let a = closed_loop(&model, 0.8, &u0, &model.final_state, 1000).unwrap();
        let b = closed_loop(&loaded, 0.8, &u0, &loaded.final_state, 1000).unwrap();
        let max_dev = (&a.outputs - &b.outputs).amax();
        assert!(max_dev <= 1e-12, "round-trip deviation {max_dev}");
        assert_eq!(a.outputs, b.outputs);
    }

    #[test]
    fn version_mismatch_rejected() {
        let model = small_model();
        let mut art = ModelArtifact::from_model(&model);
        art.format_version = 99;
        assert!(matches!(art.into_model(), Err(Error::ModelFormat(_))));
    }

    #[test]
    fn corrupted_payload_rejected() {
        let model = small_model();
        let mut art = ModelArtifact::from_model(&model);
        art.b.pop();
        assert!(art.into_model().is_err());
    }
}
