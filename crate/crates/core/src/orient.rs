//! Striation angle estimation and rotation.
//!
//! Steep declines and inclines of the horizontal lag-1 difference mark the
//! walls of striation valleys. Both masks vote in a Hough accumulator over
//! `(r, θ)`, each angle column is scored by how strongly its votes concentrate
//! on few radii, and the score is smoothed over angle with LOESS. The argmax
//! is the striation direction; the surface is then rotated so it is vertical.
//!
//! Angle convention: `r = row·cos θ + col·sin θ`, so a vertical line (constant
//! column) has `θ = 90°`, and a line tilted by `α` from vertical, running
//! toward increasing columns as rows increase, has `θ = 90° + α`.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boundary::Region;
use crate::loess::loess_circular;
use crate::stats::quantile_sorted;
use crate::surface::SurfaceMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum OrientError {
    #[error("difference masks are empty")]
    EmptyMask,
    #[error("rotation of {degrees:.2}° exceeds the {limit:.1}° limit")]
    AngleOutOfRange { degrees: f64, limit: f64 },
}

/// Masks over the `h × (w−1)` grid of lag-1 differences
/// `DF[i][j] = F[i][j+1] − F[i][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMask {
    pub rows: usize,
    pub cols: usize,
    pub decline: Region,
    pub incline: Region,
    /// Positions where the difference is defined.
    pub support: Region,
    pub threshold_lo: Option<f64>,
    pub threshold_hi: Option<f64>,
}

impl GradientMask {
    pub fn point_count(&self) -> usize {
        self.decline.count() + self.incline.count()
    }
}

/// Decline: `DF` below its `q` quantile; incline: above its `1 − q` quantile.
/// Quantiles are type 7; ties at a cutoff are excluded.
pub fn difference_masks(surface: &SurfaceMatrix, q: f64) -> GradientMask {
    let h = surface.rows();
    let wd = surface.cols().saturating_sub(1);
    let mut df = vec![None; h * wd];
    for i in 0..h {
        for j in 0..wd {
            if let (Some(a), Some(b)) = (surface.get(i, j), surface.get(i, j + 1)) {
                df[i * wd + j] = Some(b - a);
            }
        }
    }
    let mut sorted: Vec<f64> = df.iter().flatten().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let lo = quantile_sorted(&sorted, q);
    let hi = quantile_sorted(&sorted, 1.0 - q);
    let grid = |pred: &dyn Fn(f64) -> bool| Region::from_fn(h, wd.max(1), |i, j| {
        j < wd && df[i * wd + j].is_some_and(pred)
    });
    let (decline, incline, support) = match (lo, hi) {
        (Some(lo), Some(hi)) => (grid(&|d| d < lo), grid(&|d| d > hi), grid(&|_| true)),
        _ => {
            let empty = Region::from_fn(h, wd.max(1), |_, _| false);
            (empty.clone(), empty.clone(), empty)
        }
    };
    GradientMask {
        rows: h,
        cols: wd,
        decline,
        incline,
        support,
        threshold_lo: lo,
        threshold_hi: hi,
    }
}

/// Smoothed distribution of line directions over `[0, π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleDensity {
    pub thetas: Vec<f64>,
    /// Normalized per-angle scores before smoothing.
    pub raw: Vec<f64>,
    /// LOESS-smoothed scores, normalized to sum to 1.
    pub weights: Vec<f64>,
    pub theta_hat: f64,
    /// Up to two highest local maxima of `weights`, as angles.
    pub modes: Vec<f64>,
    pub loess_span: f64,
    /// Peak of `weights` over its mean.
    pub peak_ratio: f64,
    pub low_confidence: bool,
}

/// Below this peak-to-mean ratio the angle estimate is flagged.
pub const LOW_CONFIDENCE_RATIO: f64 = 1.5;

/// Hough accumulator `votes[θ][r]` of the pooled masks, and `support[θ][r]`
/// of every position where a difference is defined.
pub struct HoughAccumulator {
    pub thetas: Vec<f64>,
    pub votes: Vec<Vec<f64>>,
    pub support: Vec<Vec<f64>>,
}

/// Support cells aggregated over `ds × ds` blocks anchored at `origin`:
/// `(row, col, count)` at the block centroid, relative to `origin`.
fn support_blocks(region: &Region, ds: usize, origin: (usize, usize)) -> Vec<(f64, f64, f64)> {
    let bw = region.cols().div_ceil(ds);
    let bh = region.rows().div_ceil(ds);
    let mut acc = vec![(0.0, 0.0, 0.0); bh * bw];
    for i in 0..region.rows() {
        for j in 0..region.cols() {
            if region.contains(i, j) {
                let b = &mut acc[((i - origin.0) / ds) * bw + (j - origin.1) / ds];
                b.0 += (i - origin.0) as f64;
                b.1 += (j - origin.1) as f64;
                b.2 += 1.0;
            }
        }
    }
    acc.into_iter()
        .filter(|b| b.2 > 0.0)
        .map(|(si, sj, n)| (si / n, sj / n, n))
        .collect()
}

fn bounding_origin(region: &Region) -> Option<(usize, usize)> {
    let mut origin: Option<(usize, usize)> = None;
    for i in 0..region.rows() {
        for j in 0..region.cols() {
            if region.contains(i, j) {
                let o = origin.get_or_insert((i, j));
                o.0 = o.0.min(i);
                o.1 = o.1.min(j);
            }
        }
    }
    origin
}

/// Linear vote split between the two radius bins around `r`.
#[inline]
fn vote(acc: &mut [f64], r: f64, weight: f64) {
    let b = r.floor();
    let f = r - b;
    let b = b as usize;
    acc[b] += (1.0 - f) * weight;
    if f > 0.0 {
        acc[b + 1] += f * weight;
    }
}

/// Hough votes over `n_theta` angles in `[0, π)`. Radii are measured in units
/// of `downsample` pixels from the corner of the support's bounding box and
/// each vote is split linearly between the two nearest unit bins. The support
/// accumulator is built from `downsample`-sized blocks.
pub fn hough_accumulate(mask: &GradientMask, downsample: usize, n_theta: usize) -> HoughAccumulator {
    let ds = downsample.max(1);
    let thetas: Vec<f64> = (0..n_theta).map(|k| k as f64 * PI / n_theta as f64).collect();
    let Some(origin) = bounding_origin(&mask.support) else {
        return HoughAccumulator {
            votes: vec![Vec::new(); n_theta],
            support: vec![Vec::new(); n_theta],
            thetas,
        };
    };
    let mut points = Vec::with_capacity(mask.point_count());
    for region in [&mask.decline, &mask.incline] {
        for i in 0..region.rows() {
            for j in 0..region.cols() {
                if region.contains(i, j) {
                    points.push(((i - origin.0) as f64 / ds as f64, (j - origin.1) as f64 / ds as f64));
                }
            }
        }
    }
    let blocks: Vec<(f64, f64, f64)> = support_blocks(&mask.support, ds, origin)
        .into_iter()
        .map(|(i, j, n)| (i / ds as f64, j / ds as f64, n))
        .collect();
    let extent_i = (mask.rows - origin.0) as f64 / ds as f64;
    let extent_j = (mask.cols - origin.1) as f64 / ds as f64;
    let results: Vec<(Vec<f64>, Vec<f64>)> = thetas
        .par_iter()
        .map(|&theta| {
            let (s, c) = theta.sin_cos();
            // radius range over the bounding box corners
            let corners = [0.0, extent_i * c, extent_j * s, extent_i * c + extent_j * s];
            let rmin = corners.iter().copied().fold(f64::INFINITY, f64::min);
            let rmax = corners.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let nbins = (rmax - rmin).ceil() as usize + 2;
            let mut a = vec![0.0; nbins];
            let mut sp = vec![0.0; nbins];
            for &(i, j) in &points {
                vote(&mut a, i * c + j * s - rmin, 1.0);
            }
            for &(i, j, n) in &blocks {
                vote(&mut sp, i * c + j * s - rmin, n);
            }
            (a, sp)
        })
        .collect();
    let (votes, support) = results.into_iter().unzip();
    HoughAccumulator { thetas, votes, support }
}

/// Per-angle concentration score: `Σ_r (A − p·S)²`, where `S` counts the
/// difference support and `p` is the overall mask fraction. Subtracting the
/// expected vote `p·S` removes the contribution of the scan outline, so
/// structureless masks score the same at every angle.
fn concentration(acc: &HoughAccumulator) -> Vec<f64> {
    let total_a: f64 = acc.votes.first().map_or(0.0, |v| v.iter().sum());
    let total_s: f64 = acc.support.first().map_or(0.0, |v| v.iter().sum());
    let p = if total_s > 0.0 { total_a / total_s } else { 0.0 };
    acc.votes
        .iter()
        .zip(&acc.support)
        .map(|(a, s)| a.iter().zip(s).map(|(a, s)| (a - p * s).powi(2)).sum())
        .collect()
}

fn local_maxima(v: &[f64]) -> Vec<usize> {
    let n = v.len();
    let mut idx: Vec<usize> = (0..n)
        .filter(|&k| {
            let (prev, next) = (v[(k + n - 1) % n], v[(k + 1) % n]);
            v[k] > prev && v[k] >= next
        })
        .collect();
    idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    idx
}

pub fn hough_angle_density(
    mask: &GradientMask,
    downsample: usize,
    n_theta: usize,
    loess_span: f64,
) -> Result<AngleDensity, OrientError> {
    if mask.point_count() == 0 || n_theta == 0 {
        return Err(OrientError::EmptyMask);
    }
    let acc = hough_accumulate(mask, downsample, n_theta);
    let mut raw = concentration(&acc);
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        raw = vec![1.0 / n_theta as f64; n_theta];
    } else {
        raw.iter_mut().for_each(|v| *v /= total);
    }
    let mut weights: Vec<f64> = loess_circular(&raw, loess_span).into_iter().map(|v| v.max(0.0)).collect();
    let sum: f64 = weights.iter().sum();
    if sum > 0.0 {
        weights.iter_mut().for_each(|v| *v /= sum);
    } else {
        weights = vec![1.0 / n_theta as f64; n_theta];
    }
    let best = (0..n_theta)
        .max_by(|&a, &b| weights[a].total_cmp(&weights[b]).then(b.cmp(&a)))
        .unwrap();
    let peak_ratio = weights[best] * n_theta as f64;
    let modes = local_maxima(&weights).into_iter().take(2).map(|k| acc.thetas[k]).collect();
    Ok(AngleDensity {
        theta_hat: acc.thetas[best],
        thetas: acc.thetas,
        raw,
        weights,
        modes,
        loess_span,
        peak_ratio,
        low_confidence: peak_ratio < LOW_CONFIDENCE_RATIO,
    })
}

impl AngleDensity {
    /// Tilt of the striations from vertical, radians.
    pub fn tilt(&self) -> f64 {
        self.theta_hat - FRAC_PI_2
    }

    /// CSV with header `theta_deg,raw_weight,smoothed_weight`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta_deg,raw_weight,smoothed_weight\n");
        for k in 0..self.thetas.len() {
            out.push_str(&format!("{},{},{}\n", self.thetas[k].to_degrees(), self.raw[k], self.weights[k]));
        }
        out
    }
}

fn snap(v: f64) -> f64 {
    if v.abs() < 1e-12 {
        0.0
    } else if (v.abs() - 1.0).abs() < 1e-12 {
        v.signum()
    } else {
        v
    }
}

/// Output length along one axis: exact when the rotated extent is an
/// integer, otherwise the next length with the parity of the input, so the
/// grid centers of input and output differ by whole cells.
fn rotated_extent(len_a: usize, len_b: usize, c: f64, s: f64) -> usize {
    let e = len_a as f64 * c.abs() + len_b as f64 * s.abs();
    let r = e.round();
    if (e - r).abs() < 1e-9 {
        return r as usize;
    }
    let n = e.ceil() as usize;
    if n % 2 == len_a % 2 {
        n
    } else {
        n + 1
    }
}

/// Rotates the surface about its center so that lines tilted by `tilt`
/// radians from vertical become vertical. Bilinear interpolation; any output
/// cell whose interpolation touches a missing or out-of-grid cell is missing.
/// The output grid is the bounding box of the rotated extent.
pub fn rotate_by(surface: &SurfaceMatrix, tilt: f64) -> SurfaceMatrix {
    if tilt == 0.0 {
        return surface.clone();
    }
    let (c, s) = (snap(tilt.cos()), snap(tilt.sin()));
    let (h, w) = (surface.rows() as f64, surface.cols() as f64);
    let out_w = rotated_extent(surface.cols(), surface.rows(), c, s).max(1);
    let out_h = rotated_extent(surface.rows(), surface.cols(), c, s).max(1);
    let (cx, cy) = ((w - 1.0) / 2.0, (h - 1.0) / 2.0);
    let (ocx, ocy) = ((out_w as f64 - 1.0) / 2.0, (out_h as f64 - 1.0) / 2.0);
    let mut out = surface.blank_with_dims(out_h, out_w);
    for oi in 0..out_h {
        for oj in 0..out_w {
            let (dx, dy) = (oj as f64 - ocx, oi as f64 - ocy);
            // output direction (0, 1) maps to input direction (sin, cos)
            let x = cx + c * dx + s * dy;
            let y = cy - s * dx + c * dy;
            out.set(oi, oj, bilinear(surface, x, y));
        }
    }
    out
}

/// Bilinear sample; corners with zero weight are not consulted.
pub fn bilinear(surface: &SurfaceMatrix, x: f64, y: f64) -> Option<f64> {
    const EPS: f64 = 1e-9;
    let split = |v: f64| -> (isize, f64) {
        let f = v.floor();
        let t = v - f;
        if t < EPS {
            (f as isize, 0.0)
        } else if t > 1.0 - EPS {
            (f as isize + 1, 0.0)
        } else {
            (f as isize, t)
        }
    };
    let (j0, tx) = split(x);
    let (i0, ty) = split(y);
    let mut acc = 0.0;
    for (di, wy) in [(0, 1.0 - ty), (1, ty)] {
        if wy == 0.0 {
            continue;
        }
        for (dj, wx) in [(0, 1.0 - tx), (1, tx)] {
            if wx == 0.0 {
                continue;
            }
            acc += wy * wx * surface.get_signed(i0 + di, j0 + dj)?;
        }
    }
    Some(acc)
}

/// Rotates so the direction `theta_hat` becomes vertical.
pub fn rotate_surface(surface: &SurfaceMatrix, theta_hat: f64, max_correction_deg: f64) -> Result<SurfaceMatrix, OrientError> {
    let tilt = theta_hat - FRAC_PI_2;
    if tilt.to_degrees().abs() > max_correction_deg {
        return Err(OrientError::AngleOutOfRange {
            degrees: tilt.to_degrees(),
            limit: max_correction_deg,
        });
    }
    Ok(rotate_by(surface, tilt))
}
