//! Removal of unreliable measurements next to dropouts.
//!
//! Heights bordering a missing cell are noisy, so every cell with a missing
//! cell in its 3×3 window is dropped. The standard deviation of each window
//! summarized by its missing count is reported as a diagnostic.

use serde::{Deserialize, Serialize};

use crate::stats::{quantile_sorted, sample_sd};
use crate::surface::SurfaceMatrix;

/// Missing cells in the 3×3 window around every cell, self included;
/// out-of-grid positions count as missing. Row-major, values 0..=9.
pub fn missing_neighbor_counts(surface: &SurfaceMatrix) -> Vec<u8> {
    let (h, w) = (surface.rows() as isize, surface.cols() as isize);
    let mut out = Vec::with_capacity(surface.len());
    for i in 0..h {
        for j in 0..w {
            let mut n = 0u8;
            for di in -1..=1 {
                for dj in -1..=1 {
                    if surface.get_signed(i + di, j + dj).is_none() {
                        n += 1;
                    }
                }
            }
            out.push(n);
        }
    }
    out
}

/// Sample sd (n−1) of the present values in each 3×3 window; `None` with
/// fewer than two values.
pub fn local_sd(surface: &SurfaceMatrix) -> Vec<Option<f64>> {
    let (h, w) = (surface.rows() as isize, surface.cols() as isize);
    let mut window = Vec::with_capacity(9);
    let mut out = Vec::with_capacity(surface.len());
    for i in 0..h {
        for j in 0..w {
            window.clear();
            for di in -1..=1 {
                for dj in -1..=1 {
                    if let Some(z) = surface.get_signed(i + di, j + dj) {
                        window.push(z);
                    }
                }
            }
            out.push(sample_sd(&window));
        }
    }
    out
}

/// Five-number summary of local sd over cells with a given missing count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdSummary {
    pub missing_count: u8,
    pub cells: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DespikeReport {
    pub cells_dropped: usize,
    /// Dropped cells over present cells before despiking.
    pub fraction: f64,
    pub sd_by_count: Vec<SdSummary>,
}

impl DespikeReport {
    pub fn median_sd(&self, missing_count: u8) -> Option<f64> {
        self.sd_by_count
            .iter()
            .find(|s| s.missing_count == missing_count)
            .map(|s| s.median)
    }
}

/// Boxplot summaries of `local_sd` grouped by `missing_neighbor_counts`,
/// over every cell whose window sd is defined.
pub fn sd_by_missing_count(surface: &SurfaceMatrix) -> Vec<SdSummary> {
    let counts = missing_neighbor_counts(surface);
    let sds = local_sd(surface);
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); 10];
    for (c, sd) in counts.iter().zip(&sds) {
        if let Some(sd) = sd {
            groups[*c as usize].push(*sd);
        }
    }
    groups
        .into_iter()
        .enumerate()
        .filter(|(_, g)| !g.is_empty())
        .map(|(c, mut g)| {
            g.sort_by(f64::total_cmp);
            let q = |p| quantile_sorted(&g, p).unwrap();
            SdSummary {
                missing_count: c as u8,
                cells: g.len(),
                min: q(0.0),
                q1: q(0.25),
                median: q(0.5),
                q3: q(0.75),
                max: q(1.0),
            }
        })
        .collect()
}

/// Drops every cell with any missing cell in its 3×3 window.
pub fn drop_spikes(surface: &SurfaceMatrix) -> (SurfaceMatrix, DespikeReport) {
    drop_spikes_with(surface, 0)
}

/// Drops cells whose window holds more than `max_missing` missing cells.
pub fn drop_spikes_with(surface: &SurfaceMatrix, max_missing: u8) -> (SurfaceMatrix, DespikeReport) {
    let counts = missing_neighbor_counts(surface);
    let cols = surface.cols();
    let out = surface.map_present(|i, j, z| (counts[i * cols + j] <= max_missing).then_some(z));
    let before = surface.present_count();
    let dropped = before - out.present_count();
    let report = DespikeReport {
        cells_dropped: dropped,
        fraction: if before == 0 { 0.0 } else { dropped as f64 / before as f64 },
        sd_by_count: sd_by_missing_count(surface),
    };
    (out, report)
}
