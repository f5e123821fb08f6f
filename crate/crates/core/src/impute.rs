//! Interior gap filling by repeated 3×3 neighborhood averaging.
//!
//! Each sweep fills every missing cell that has at least one present
//! 8-neighbor with the mean of those neighbors, reading only the state left by
//! the previous sweep. Filling is confined to a region; cells outside it are
//! cleared, so nothing is extrapolated.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boundary::{BoundaryPolygon, Region};
use crate::surface::SurfaceMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum ImputeError {
    #[error("no observed value in a connected part of the region ({cells} cells starting at row {row}, col {col})")]
    NoSupport { cells: usize, row: usize, col: usize },
    #[error("region is {region_rows}x{region_cols} but the surface is {rows}x{cols}")]
    ShapeMismatch {
        region_rows: usize,
        region_cols: usize,
        rows: usize,
        cols: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputeReport {
    pub sweeps: usize,
    pub cells_filled: usize,
}

const NEIGHBORS: [(isize, isize); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];

/// 8-connected components of `region` as lists of cells.
fn components(region: &Region) -> Vec<Vec<(usize, usize)>> {
    let (h, w) = (region.rows(), region.cols());
    let mut seen = vec![false; h * w];
    let mut out = Vec::new();
    for start in 0..h * w {
        if seen[start] || !region.cells()[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = Vec::new();
        let mut queue = VecDeque::from([(start / w, start % w)]);
        while let Some((i, j)) = queue.pop_front() {
            comp.push((i, j));
            for (di, dj) in NEIGHBORS {
                let (ni, nj) = (i as isize + di, j as isize + dj);
                if ni < 0 || nj < 0 || ni as usize >= h || nj as usize >= w {
                    continue;
                }
                let k = ni as usize * w + nj as usize;
                if !seen[k] && region.cells()[k] {
                    seen[k] = true;
                    queue.push_back((ni as usize, nj as usize));
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Removes connected parts of `region` that contain no present cell of
/// `surface`. Returns the pruned region and the number of cells removed.
pub fn prune_unseeded(surface: &SurfaceMatrix, region: &Region) -> (Region, usize) {
    let mut out = region.clone();
    let mut removed = 0;
    for comp in components(region) {
        if !comp.iter().any(|&(i, j)| surface.is_present(i, j)) {
            removed += comp.len();
            for (i, j) in comp {
                out.set(i, j, false);
            }
        }
    }
    (out, removed)
}

/// Fills every cell of `region`; cells outside it become missing.
pub fn impute_surface(surface: &SurfaceMatrix, region: &Region) -> Result<(SurfaceMatrix, ImputeReport), ImputeError> {
    if (region.rows(), region.cols()) != (surface.rows(), surface.cols()) {
        return Err(ImputeError::ShapeMismatch {
            region_rows: region.rows(),
            region_cols: region.cols(),
            rows: surface.rows(),
            cols: surface.cols(),
        });
    }
    let mut current = surface.map_present(|i, j, z| region.contains(i, j).then_some(z));
    for comp in components(region) {
        if !comp.iter().any(|&(i, j)| current.is_present(i, j)) {
            let (row, col) = comp[0];
            return Err(ImputeError::NoSupport {
                cells: comp.len(),
                row,
                col,
            });
        }
    }
    let w = surface.cols();
    let mut pending: Vec<usize> = (0..surface.len())
        .filter(|&k| region.cells()[k] && current.cells()[k].is_none())
        .collect();
    let cells_filled = pending.len();
    let mut sweeps = 0;
    while !pending.is_empty() {
        let fills: Vec<Option<f64>> = pending
            .par_iter()
            .map(|&k| {
                let (i, j) = ((k / w) as isize, (k % w) as isize);
                let mut sum = 0.0;
                let mut n = 0usize;
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for (di, dj) in NEIGHBORS {
                    if let Some(z) = current.get_signed(i + di, j + dj) {
                        sum += z;
                        n += 1;
                        lo = lo.min(z);
                        hi = hi.max(z);
                    }
                }
                // rounding can push the mean of equal values past them
                (n > 0).then(|| (sum / n as f64).clamp(lo, hi))
            })
            .collect();
        // every component is seeded, so each sweep fills a nonempty frontier
        debug_assert!(fills.iter().any(Option::is_some));
        let mut still = Vec::with_capacity(pending.len());
        for (&k, v) in pending.iter().zip(&fills) {
            match v {
                Some(z) => current.set(k / w, k % w, Some(*z)),
                None => still.push(k),
            }
        }
        pending = still;
        sweeps += 1;
    }
    Ok((current, ImputeReport { sweeps, cells_filled }))
}

/// [`impute_surface`] over the cells strictly inside `poly`.
pub fn impute_in_polygon(
    surface: &SurfaceMatrix,
    poly: &BoundaryPolygon,
) -> Result<(SurfaceMatrix, ImputeReport), ImputeError> {
    impute_surface(surface, &poly.interior_region(surface.rows(), surface.cols(), 0))
}
