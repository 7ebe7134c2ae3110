//! Effective configuration: flags over `--config` JSON over manifest over defaults.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use sograb::pipeline::PipelineConfig;
use sograb::pointcloud::SegmentationParams;
use sograb::IcpParams;

use crate::CliError;

/// Contents of a `--config` file. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub alpha: Option<f64>,
    pub voxel_size: Option<f64>,
    pub segmentation: Option<SegmentationParams>,
    pub max_iterations: Option<usize>,
    pub convergence_tol: Option<f64>,
    pub max_correspondence_dist: Option<f64>,
    pub pca_fallback: Option<bool>,
    pub pca_fallback_rmse: Option<f64>,
    pub out_dir: Option<PathBuf>,
    pub parallel: Option<usize>,
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct IcpArgs {
    /// ICP iteration cap [default: 50]
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Stop when the RMSE changes by less than this, in m [default: 1e-6]
    #[arg(long)]
    pub convergence_tol: Option<f64>,
    /// Pairs farther apart are ignored, in m [default: 10 voxels, or 0.01]
    #[arg(long)]
    pub max_correspondence_dist: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON file with default values for any of these flags
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// DCD sensitivity in 1/m [default: 100]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Voxel edge for downsampling, in m
    #[arg(long)]
    pub voxel_size: Option<f64>,
    /// Keep only bright, low-chroma points before alignment
    #[arg(long)]
    pub segment: bool,
    /// Minimum mean RGB value kept by segmentation [default: 128]
    #[arg(long, requires = "segment")]
    pub min_brightness: Option<u8>,
    /// Largest channel spread kept by segmentation [default: 40]
    #[arg(long, requires = "segment")]
    pub max_chroma_spread: Option<u8>,
    /// Fall back to PCA alignment when ICP ends above the RMSE threshold
    #[arg(long)]
    pub pca_fallback: bool,
    /// RMSE threshold for the PCA fallback, in m [default: 0.005]
    #[arg(long)]
    pub pca_fallback_rmse: Option<f64>,
    #[command(flatten)]
    pub icp: IcpArgs,
}

impl ConfigArgs {
    pub fn file(&self) -> Result<CliConfig, CliError> {
        self.config.as_deref().map_or(Ok(CliConfig::default()), CliConfig::load)
    }

    /// Resolves the pipeline configuration. `manifest_alpha` sits between
    /// the config file and the built-in default.
    pub fn resolve(&self, file: &CliConfig, manifest_alpha: Option<f64>) -> Result<PipelineConfig, CliError> {
        let mut c = PipelineConfig::default();
        if let Some(a) = manifest_alpha {
            c.alpha = a;
        }
        c.alpha = self.alpha.or(file.alpha).unwrap_or(c.alpha);
        c.voxel_size = self.voxel_size.or(file.voxel_size);
        c.segmentation = if self.segment {
            let mut s = file.segmentation.unwrap_or_default();
            if let Some(b) = self.min_brightness {
                s.min_brightness = b;
            }
            if let Some(b) = self.max_chroma_spread {
                s.max_chroma_spread = b;
            }
            Some(s)
        } else {
            file.segmentation
        };
        c.max_iterations = self.icp.max_iterations.or(file.max_iterations).unwrap_or(c.max_iterations);
        c.convergence_tol = self.icp.convergence_tol.or(file.convergence_tol).unwrap_or(c.convergence_tol);
        c.max_correspondence_dist = self.icp.max_correspondence_dist.or(file.max_correspondence_dist);
        c.pca_fallback = self.pca_fallback || file.pca_fallback.unwrap_or(false);
        c.pca_fallback_rmse = self.pca_fallback_rmse.or(file.pca_fallback_rmse).unwrap_or(c.pca_fallback_rmse);
        c.validate()?;
        Ok(c)
    }
}

impl IcpArgs {
    pub fn resolve(&self) -> Result<IcpParams, CliError> {
        let d = IcpParams::default();
        let p = IcpParams {
            max_iterations: self.max_iterations.unwrap_or(d.max_iterations),
            convergence_tol: self.convergence_tol.unwrap_or(d.convergence_tol),
            max_correspondence_dist: self.max_correspondence_dist.unwrap_or(d.max_correspondence_dist),
        };
        p.validate()?;
        Ok(p)
    }
}
