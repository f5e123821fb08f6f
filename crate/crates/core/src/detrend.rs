//! Quadratic trend removal.
//!
//! The surface is regressed on `(1, x, x², y, y², xy)` over its present cells
//! and replaced by the residuals. Pixel coordinates are mapped onto [−1, 1]
//! over the support before fitting, and the least-squares problem is solved
//! with a streaming Givens QR so the normal equations are never formed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::surface::SurfaceMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum DetrendError {
    #[error("trend model is rank deficient: {0}")]
    RankDeficient(String),
}

const P: usize = 6;

/// Affine map from pixel indices to the fitting coordinates:
/// `x = (col − x_center) / x_scale`, `y = (row − y_center) / y_scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub x_center: f64,
    pub x_scale: f64,
    pub y_center: f64,
    pub y_scale: f64,
}

/// Least-squares fit; `beta` multiplies `(1, x, x², y, y², xy)` in the
/// normalized coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendFit {
    pub beta: [f64; P],
    pub rss: f64,
    pub n: usize,
    pub normalization: Normalization,
}

fn basis(x: f64, y: f64) -> [f64; P] {
    [1.0, x, x * x, y, y * y, x * y]
}

impl TrendFit {
    /// Trend value at a grid cell.
    pub fn fitted(&self, row: usize, col: usize) -> f64 {
        let nz = &self.normalization;
        let x = (col as f64 - nz.x_center) / nz.x_scale;
        let y = (row as f64 - nz.y_center) / nz.y_scale;
        basis(x, y).iter().zip(&self.beta).map(|(p, b)| p * b).sum()
    }
}

/// Upper-triangular factor of a growing least-squares problem.
struct GivensQr {
    r: [[f64; P]; P],
    qty: [f64; P],
    rss: f64,
}

impl GivensQr {
    fn new() -> Self {
        Self {
            r: [[0.0; P]; P],
            qty: [0.0; P],
            rss: 0.0,
        }
    }

    #[allow(clippy::needless_range_loop)]
    fn push(&mut self, mut row: [f64; P], mut z: f64) {
        for k in 0..P {
            if row[k] == 0.0 {
                continue;
            }
            let (a, b) = (self.r[k][k], row[k]);
            let h = a.hypot(b);
            let (c, s) = (a / h, b / h);
            for m in k..P {
                let (rk, xm) = (self.r[k][m], row[m]);
                self.r[k][m] = c * rk + s * xm;
                row[m] = -s * rk + c * xm;
            }
            let (qk, zz) = (self.qty[k], z);
            self.qty[k] = c * qk + s * zz;
            z = -s * qk + c * zz;
        }
        self.rss += z * z;
    }

    fn solve(&self) -> Result<[f64; P], DetrendError> {
        let scale = (0..P).map(|k| self.r[k][k].abs()).fold(0.0, f64::max);
        let mut beta = [0.0; P];
        for k in (0..P).rev() {
            let d = self.r[k][k];
            if !(d.abs() > 1e-10 * scale) {
                return Err(DetrendError::RankDeficient(format!("pivot {k} is {d:e}")));
            }
            let s: f64 = (k + 1..P).map(|m| self.r[k][m] * beta[m]).sum();
            beta[k] = (self.qty[k] - s) / d;
        }
        Ok(beta)
    }
}

pub fn fit_trend(surface: &SurfaceMatrix) -> Result<TrendFit, DetrendError> {
    let mut cols = vec![false; surface.cols()];
    let mut rows = vec![false; surface.rows()];
    let mut n = 0;
    for (i, j, _) in surface.present() {
        rows[i] = true;
        cols[j] = true;
        n += 1;
    }
    let distinct = |v: &[bool]| v.iter().filter(|&&b| b).count();
    if n < P || distinct(&cols) < 3 || distinct(&rows) < 3 {
        return Err(DetrendError::RankDeficient(format!(
            "{n} cells over {} columns and {} rows; need 6 cells, 3 columns and 3 rows",
            distinct(&cols),
            distinct(&rows)
        )));
    }
    let span = |v: &[bool]| {
        let lo = v.iter().position(|&b| b).unwrap() as f64;
        let hi = v.iter().rposition(|&b| b).unwrap() as f64;
        ((lo + hi) / 2.0, (hi - lo) / 2.0)
    };
    let (x_center, x_scale) = span(&cols);
    let (y_center, y_scale) = span(&rows);
    let normalization = Normalization {
        x_center,
        x_scale,
        y_center,
        y_scale,
    };
    let mut qr = GivensQr::new();
    for (i, j, z) in surface.present() {
        let x = (j as f64 - x_center) / x_scale;
        let y = (i as f64 - y_center) / y_scale;
        qr.push(basis(x, y), z);
    }
    Ok(TrendFit {
        beta: qr.solve()?,
        rss: qr.rss,
        n,
        normalization,
    })
}

/// Residual surface `F − fitted`; the missing pattern is unchanged.
pub fn remove_trend(surface: &SurfaceMatrix, fit: &TrendFit) -> SurfaceMatrix {
    surface.map_present(|i, j, z| Some(z - fit.fitted(i, j)))
}
