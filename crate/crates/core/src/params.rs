//! Tunables for every pipeline stage, loadable from one JSON file.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParamsError {
    #[error("invalid parameter {name}: {reason}")]
    Invalid { name: &'static str, reason: String },
    #[error("cannot read parameter file: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse parameter file: {0}")]
    Json(#[from] serde_json::Error),
}

/// Statistic used to collapse a column of the processed surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SignalStatistic {
    #[default]
    Median,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineParams {
    /// Concave hull concavity (lower is more concave).
    pub concavity: f64,
    /// Hull edges shorter than this (pixels) are not refined further.
    pub length_threshold: f64,
    /// Fold circle radius as a multiple of the largest boundary-point distance.
    pub fold_radius_scale: f64,
    /// Cells within this Chebyshev distance of the hull edge are dropped.
    pub margin_px: usize,
    /// Cells whose 3×3 window holds more missing cells than this are dropped.
    pub despike_max_missing: u8,
    /// Tail fraction of lag-1 differences forming each gradient mask.
    pub diff_quantile: f64,
    /// Block size used to coarsen gradient masks before the Hough vote.
    pub downsample: usize,
    /// Angle grid size over [0, π).
    pub theta_bins: usize,
    pub loess_span: f64,
    /// Largest rotation accepted as a correction, degrees.
    pub max_correction_deg: f64,
    /// Row shift search half-width, pixels.
    pub delta: usize,
    /// Number of base-signal/shift passes.
    pub shift_passes: usize,
    /// Minimum present cells for a column to contribute a signal sample.
    pub min_rows: usize,
    pub signal_statistic: SignalStatistic,
    /// Minimum CCF overlap as a fraction of the shorter signal.
    pub min_overlap_frac: f64,
    /// Treat same-tool/different-site pairs as negatives in the ROC.
    pub roc_include_site_mismatch: bool,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            concavity: 2.0,
            length_threshold: 0.0,
            fold_radius_scale: 1.05,
            margin_px: 16,
            despike_max_missing: 0,
            diff_quantile: 0.05,
            downsample: 8,
            theta_bins: 720,
            loess_span: 0.2,
            max_correction_deg: 45.0,
            delta: 50,
            shift_passes: 1,
            min_rows: 10,
            signal_statistic: SignalStatistic::Median,
            min_overlap_frac: 0.75,
            roc_include_site_mismatch: true,
        }
    }
}

fn invalid(name: &'static str, reason: impl Into<String>) -> ParamsError {
    ParamsError::Invalid {
        name,
        reason: reason.into(),
    }
}

impl PipelineParams {
    pub fn from_json(text: &str) -> Result<Self, ParamsError> {
        let p: Self = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ParamsError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        let positive = [
            ("concavity", self.concavity),
            ("fold_radius_scale", self.fold_radius_scale),
            ("loess_span", self.loess_span),
            ("max_correction_deg", self.max_correction_deg),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be positive and finite, got {v}")));
            }
        }
        if !(self.length_threshold >= 0.0 && self.length_threshold.is_finite()) {
            return Err(invalid("length_threshold", "must be non-negative"));
        }
        if self.fold_radius_scale <= 1.0 {
            return Err(invalid("fold_radius_scale", "must exceed 1 so every point lies inside the fold circle"));
        }
        if !(self.diff_quantile > 0.0 && self.diff_quantile < 0.5) {
            return Err(invalid("diff_quantile", "must lie in (0, 0.5)"));
        }
        if self.loess_span > 1.0 {
            return Err(invalid("loess_span", "must not exceed 1"));
        }
        if self.max_correction_deg > 90.0 {
            return Err(invalid("max_correction_deg", "must not exceed 90"));
        }
        if !(self.min_overlap_frac > 0.0 && self.min_overlap_frac <= 1.0) {
            return Err(invalid("min_overlap_frac", "must lie in (0, 1]"));
        }
        if self.despike_max_missing > 8 {
            return Err(invalid("despike_max_missing", "a 3x3 window has at most 9 cells"));
        }
        for (name, v) in [
            ("downsample", self.downsample),
            ("theta_bins", self.theta_bins),
            ("delta", self.delta),
            ("shift_passes", self.shift_passes),
            ("min_rows", self.min_rows),
        ] {
            if v == 0 {
                return Err(invalid(name, "must be at least 1"));
            }
        }
        if self.theta_bins < 8 {
            return Err(invalid("theta_bins", "need at least 8 angles"));
        }
        if self.shift_passes > 3 {
            return Err(invalid("shift_passes", "at most 3 passes"));
        }
        Ok(())
    }
}
