//! Effective pipeline configuration: defaults, then `--config`, then flags.

use std::path::Path;

use serde::{Deserialize, Serialize};
use stomaforge::pseudo::ThresholdPolicy;
use stomaforge::stitcher::DEFAULT_DEDUP_IOU;
use stomaforge::tiler::{EmptyPatchPolicy, DEFAULT_PATCH, DEFAULT_STRIDE};

use crate::error::{input, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub patch: u32,
    pub stride: u32,
    pub thresholds: ThresholdPolicy,
    pub empty_patch: EmptyPatchPolicy,
    pub dedup_iou: f64,
    /// Strict category names and file-name grammar.
    pub strict: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            patch: DEFAULT_PATCH,
            stride: DEFAULT_STRIDE,
            thresholds: ThresholdPolicy::default(),
            empty_patch: EmptyPatchPolicy::DropEmpty,
            dedup_iou: DEFAULT_DEDUP_IOU,
            strict: false,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| input(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| input(format!("{}: {e}", path.display())))
    }
}
