//! The seven processing stages, run in order on one scan.
//!
//! 1. boundary: concave hull of the scanned footprint, eroded by a margin
//! 2. despike: drop cells next to missing data
//! 3. detrend: subtract the least-squares quadratic surface
//! 4. impute: fill the interior by neighborhood averaging
//! 5. orient: rotate so the striations are vertical
//! 6. dewarp: per-row horizontal shifts
//! 7. signal: column statistic of the result

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boundary::{concave_hull, outer_boundary, restrict_to, BoundaryError, BoundaryPolygon, Point2, Region};
use crate::despike::{drop_spikes_with, DespikeReport};
use crate::detrend::{fit_trend, remove_trend, DetrendError, TrendFit};
use crate::dewarp::{dewarp, DewarpError, ShiftProfile};
use crate::impute::{impute_surface, prune_unseeded, ImputeError, ImputeReport};
use crate::orient::{difference_masks, hough_angle_density, rotate_surface, AngleDensity, GradientMask, OrientError};
use crate::params::PipelineParams;
use crate::signal::{extract_signal, Signal, SignalError};
use crate::surface::SurfaceMatrix;
use crate::x3p::{write_x3p, X3pError, X3pMeta};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("boundary stage: {0}")]
    Boundary(#[from] BoundaryError),
    #[error("detrend stage: {0}")]
    Detrend(#[from] DetrendError),
    #[error("impute stage: {0}")]
    Impute(#[from] ImputeError),
    #[error("orient stage: {0}")]
    Orient(#[from] OrientError),
    #[error("dewarp stage: {0}")]
    Dewarp(#[from] DewarpError),
    #[error("signal stage: {0}")]
    Signal(#[from] SignalError),
}

impl PipelineError {
    pub fn stage(&self) -> &'static str {
        match self {
            PipelineError::Boundary(_) => "boundary",
            PipelineError::Detrend(_) => "detrend",
            PipelineError::Impute(_) => "impute",
            PipelineError::Orient(_) => "orient",
            PipelineError::Dewarp(_) => "dewarp",
            PipelineError::Signal(_) => "signal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySummary {
    pub hull_vertices: usize,
    pub boundary_points: usize,
    pub interior_cells: usize,
    /// Present cells removed by the hull and the erosion margin.
    pub cells_masked: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputeSummary {
    #[serde(flatten)]
    pub report: ImputeReport,
    /// Interior cells dropped because their pocket held no observation.
    pub unseeded_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientSummary {
    pub theta_hat_deg: f64,
    pub correction_deg: f64,
    pub modes_deg: Vec<f64>,
    pub peak_ratio: f64,
    pub low_confidence: bool,
    pub mask_points: usize,
    pub rotated_rows: usize,
    pub rotated_cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSummary {
    pub mean_abs_shift: f64,
    pub max_abs_shift: f64,
    pub unaligned_rows: usize,
}

impl ShiftSummary {
    fn of(p: &ShiftProfile) -> Self {
        let s: Vec<f64> = p.shifts.iter().flatten().map(|v| v.abs()).collect();
        Self {
            mean_abs_shift: if s.is_empty() { 0.0 } else { s.iter().sum::<f64>() / s.len() as f64 },
            max_abs_shift: s.iter().cloned().fold(0.0, f64::max),
            unaligned_rows: p.unaligned_rows(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSummary {
    pub len: usize,
    pub present: usize,
    pub pitch_um: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub input: Option<String>,
    pub input_sha256: Option<String>,
    pub params: PipelineParams,
    pub rows: usize,
    pub cols: usize,
    pub present_cells: usize,
    pub boundary: BoundarySummary,
    pub despike: DespikeReport,
    pub trend: TrendFit,
    pub impute: ImputeSummary,
    pub orient: OrientSummary,
    pub dewarp: Vec<ShiftSummary>,
    pub signal: SignalSummary,
}

/// Intermediate results of every stage.
#[derive(Debug, Clone)]
pub struct Stages {
    pub polygon: BoundaryPolygon,
    pub region: Region,
    pub masked: SurfaceMatrix,
    pub despiked: SurfaceMatrix,
    pub detrended: SurfaceMatrix,
    pub imputed: SurfaceMatrix,
    pub mask: GradientMask,
    pub density: AngleDensity,
    pub rotated: SurfaceMatrix,
    pub shifts: Vec<ShiftProfile>,
    pub dewarped: SurfaceMatrix,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub signal: Signal,
    pub report: RunReport,
    pub stages: Stages,
}

pub fn run_pipeline(surface: &SurfaceMatrix, params: &PipelineParams) -> Result<PipelineOutput, PipelineError> {
    let (h, w) = (surface.rows(), surface.cols());

    let points: Vec<Point2> = outer_boundary(surface)?.into_iter().map(Point2::from_cell).collect();
    let polygon = concave_hull(&points, params.concavity, params.length_threshold, params.fold_radius_scale)?;
    let region = polygon.interior_region(h, w, params.margin_px);
    let masked = restrict_to(surface, &region);
    let boundary = BoundarySummary {
        hull_vertices: polygon.vertices.len(),
        boundary_points: points.len(),
        interior_cells: region.count(),
        cells_masked: surface.present_count() - masked.present_count(),
    };
    log::debug!("boundary: {} hull vertices, {} cells masked", boundary.hull_vertices, boundary.cells_masked);

    let (despiked, despike) = drop_spikes_with(&masked, params.despike_max_missing);
    log::debug!("despike: dropped {} cells", despike.cells_dropped);

    let trend = fit_trend(&despiked)?;
    let detrended = remove_trend(&despiked, &trend);

    let (fill_region, unseeded_cells) = prune_unseeded(&detrended, &region);
    let (imputed, impute_report) = impute_surface(&detrended, &fill_region)?;
    log::debug!("impute: {} sweeps", impute_report.sweeps);

    let mask = difference_masks(&imputed, params.diff_quantile);
    let density = hough_angle_density(&mask, params.downsample, params.theta_bins, params.loess_span)?;
    if density.low_confidence {
        log::warn!("orientation estimate has low confidence (peak ratio {:.2})", density.peak_ratio);
    }
    let rotated = rotate_surface(&imputed, density.theta_hat, params.max_correction_deg)?;

    let (dewarped, shifts) = dewarp(
        &rotated,
        params.delta,
        params.shift_passes,
        params.min_rows,
        params.signal_statistic,
    )?;

    let signal = extract_signal(&dewarped, params.min_rows, params.signal_statistic)?;

    let report = RunReport {
        input: None,
        input_sha256: None,
        params: params.clone(),
        rows: h,
        cols: w,
        present_cells: surface.present_count(),
        boundary,
        despike,
        trend,
        impute: ImputeSummary {
            report: impute_report,
            unseeded_cells,
        },
        orient: OrientSummary {
            theta_hat_deg: density.theta_hat.to_degrees(),
            correction_deg: density.tilt().to_degrees(),
            modes_deg: density.modes.iter().map(|m| m.to_degrees()).collect(),
            peak_ratio: density.peak_ratio,
            low_confidence: density.low_confidence,
            mask_points: mask.point_count(),
            rotated_rows: rotated.rows(),
            rotated_cols: rotated.cols(),
        },
        dewarp: shifts.iter().map(ShiftSummary::of).collect(),
        signal: SignalSummary {
            len: signal.len(),
            present: signal.present_count(),
            pitch_um: signal.pitch,
        },
    };
    Ok(PipelineOutput {
        signal,
        report,
        stages: Stages {
            polygon,
            region,
            masked,
            despiked,
            detrended,
            imputed,
            mask,
            density,
            rotated,
            shifts,
            dewarped,
        },
    })
}

#[derive(Debug, Error)]
pub enum DumpError {
    #[error(transparent)]
    X3p(#[from] X3pError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Writes each intermediate surface and the per-stage side files into `dir`.
pub fn write_stage_dumps(dir: &Path, out: &PipelineOutput) -> Result<(), DumpError> {
    fs::create_dir_all(dir)?;
    let st = &out.stages;
    for (name, s) in [
        ("01_boundary.x3p", &st.masked),
        ("02_despike.x3p", &st.despiked),
        ("03_detrend.x3p", &st.detrended),
        ("04_impute.x3p", &st.imputed),
        ("05_orient.x3p", &st.rotated),
        ("06_dewarp.x3p", &st.dewarped),
    ] {
        write_x3p(s, &X3pMeta::for_surface(s), dir.join(name))?;
    }
    out.signal.save(&dir.join("07_signal.csv"))?;
    fs::write(dir.join("polygon.csv"), st.polygon.to_csv())?;
    fs::write(dir.join("interior_mask.pgm"), st.region.to_pgm())?;
    fs::write(dir.join("decline_mask.pgm"), st.mask.decline.to_pgm())?;
    fs::write(dir.join("incline_mask.pgm"), st.mask.incline.to_pgm())?;
    fs::write(dir.join("angle_density.csv"), st.density.to_csv())?;
    fs::write(dir.join("trend.json"), serde_json::to_string_pretty(&out.report.trend)?)?;
    for (k, p) in st.shifts.iter().enumerate() {
        let name = if st.shifts.len() == 1 { "shifts.csv".to_string() } else { format!("shifts_pass{}.csv", k + 1) };
        p.write_csv(fs::File::create(dir.join(name))?)?;
    }
    Ok(())
}
