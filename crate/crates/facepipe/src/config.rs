//! Run configuration shared by the CLI subcommands.

use std::path::{Path, PathBuf};

use facepipe_core::appearance::DEFAULT_PRUNE_RADIUS;
use facepipe_core::blend::{DEFAULT_ERODE_WIDTH, DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE};
use facepipe_core::render::RENDERER_NAMES;
use facepipe_core::Smoothing;
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothingConfig {
    pub min_weight: f64,
    pub motion_scale: f64,
    pub window: usize,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        let d = Smoothing::default();
        SmoothingConfig {
            min_weight: d.min_weight,
            motion_scale: d.motion_scale,
            window: d.window,
        }
    }
}

impl SmoothingConfig {
    pub fn params(&self) -> Smoothing {
        Smoothing {
            min_weight: self.min_weight,
            motion_scale: self.motion_scale,
            window: self.window,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub source: PathBuf,
    pub target: Option<PathBuf>,
    pub output: PathBuf,
    pub renderer: String,
    /// Reenactment steps per view; more than one needs `transformer`.
    pub iterations: usize,
    pub transformer: Option<PathBuf>,
    pub prune_radius: f64,
    /// Drop views whose Laplacian variance falls below this.
    pub blur_threshold: Option<f64>,
    pub smoothing: SmoothingConfig,
    pub blend_tolerance: f64,
    pub blend_max_iterations: usize,
    pub erode_width: f64,
    /// Side of the square face crop the renderer and blender work on.
    pub crop_size: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            source: PathBuf::new(),
            target: None,
            output: PathBuf::from("out"),
            renderer: "warp".into(),
            iterations: 1,
            transformer: None,
            prune_radius: DEFAULT_PRUNE_RADIUS,
            blur_threshold: None,
            smoothing: SmoothingConfig::default(),
            blend_tolerance: DEFAULT_TOLERANCE,
            blend_max_iterations: DEFAULT_MAX_ITERATIONS,
            erode_width: DEFAULT_ERODE_WIDTH,
            crop_size: 256,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if self.iterations > 1 && self.transformer.is_none() {
            return bad("more than one iteration needs a landmark transformer checkpoint".into());
        }
        if !RENDERER_NAMES.contains(&self.renderer.as_str()) {
            return bad(format!(
                "unknown renderer {:?}; expected one of {RENDERER_NAMES:?}",
                self.renderer
            ));
        }
        if !(self.prune_radius >= 0.0 && self.prune_radius.is_finite()) {
            return bad("prune radius must be finite and non-negative".into());
        }
        if !(self.blend_tolerance > 0.0) {
            return bad("blend tolerance must be positive".into());
        }
        if self.blend_max_iterations == 0 {
            return bad("blend iteration cap must be positive".into());
        }
        if !(self.erode_width >= 0.0 && self.erode_width.is_finite()) {
            return bad("erode width must be finite and non-negative".into());
        }
        if self.crop_size < 8 {
            return bad("crop size must be at least 8".into());
        }
        self.smoothing
            .params()
            .validate()
            .map_err(|e| PipelineError::config(e.to_string()))?;
        for input in std::iter::once(&self.source).chain(&self.target) {
            if *input == self.output {
                return bad(format!(
                    "output directory {} would overwrite an input",
                    self.output.display()
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> PipelineConfig {
        PipelineConfig {
            source: "src".into(),
            target: Some("tgt".into()),
            ..Default::default()
        }
    }

    #[test]
    fn defaults_validate() {
        cfg().validate().unwrap();
    }

    #[test]
    fn invalid_settings_are_config_errors() {
        let cases = [
            PipelineConfig { iterations: 0, ..cfg() },
            PipelineConfig { iterations: 3, ..cfg() },
            PipelineConfig {
                renderer: "gan".into(),
                ..cfg()
            },
            PipelineConfig {
                output: "tgt".into(),
                ..cfg()
            },
            PipelineConfig {
                blend_tolerance: 0.0,
                ..cfg()
            },
            PipelineConfig {
                smoothing: SmoothingConfig {
                    window: 4,
                    ..Default::default()
                },
                ..cfg()
            },
        ];
        for c in cases {
            assert_eq!(c.validate().unwrap_err().exit_code(), 2, "{c:?}");
        }
    }

    #[test]
    fn json_fills_defaults_and_rejects_unknown_keys() {
        let c: PipelineConfig = serde_json::from_str(r#"{"source": "a", "erode_width": 3}"#).unwrap();
        assert_eq!(c.erode_width, 3.0);
        assert_eq!(c.crop_size, 256);
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"sauce": "a"}"#).is_err());
    }
}
