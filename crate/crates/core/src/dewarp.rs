//! Per-row horizontal alignment against a reference profile.
//!
//! Each row is slid against the base signal over integer lags in `[-δ, δ]`.
//! The lag with the smallest mean squared difference is refined to sub-pixel
//! precision with a parabola through its neighbors. The row is then resampled
//! so that `row'[j] = row[j + s]`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::SignalStatistic;
use crate::signal::{extract_signal, Signal, SignalError};
use crate::surface::SurfaceMatrix;

#[derive(Debug, Error)]
pub enum DewarpError {
    #[error("base signal has {base} samples but the surface has {cols} columns")]
    BaseLengthMismatch { base: usize, cols: usize },
    #[error("shift profile has {profile} rows but the surface has {rows}")]
    ProfileLengthMismatch { profile: usize, rows: usize },
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// Fewest overlapping samples for a lag to count.
pub fn min_overlap(cols: usize) -> usize {
    30.max((0.1 * cols as f64).ceil() as usize)
}

/// Mean squared difference `base[j] - row[j + k]` over positions where both
/// are present, with the number of such positions.
pub fn row_mse(row: &[Option<f64>], base: &[Option<f64>], k: isize) -> (Option<f64>, usize) {
    let w = row.len() as isize;
    let lo = 0.max(-k);
    let hi = w.min(w - k);
    let (mut sum, mut n) = (0.0, 0usize);
    for j in lo..hi.max(lo) {
        if let (Some(b), Some(r)) = (base[j as usize], row[(j + k) as usize]) {
            sum += (b - r) * (b - r);
            n += 1;
        }
    }
    ((n > 0).then(|| sum / n as f64), n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftProfile {
    /// Sub-pixel shift per row; `None` when no lag had enough overlap.
    pub shifts: Vec<Option<f64>>,
    pub delta: usize,
    pub n_at_min: Vec<usize>,
    pub mse_at_min: Vec<Option<f64>>,
}

impl ShiftProfile {
    pub fn unaligned_rows(&self) -> usize {
        self.shifts.iter().filter(|s| s.is_none()).count()
    }

    /// CSV with header `row,shift,n_at_min,mse_at_min`, `NA` for missing.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let na = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |z| z.to_string());
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["row", "shift", "n_at_min", "mse_at_min"])?;
        for i in 0..self.shifts.len() {
            out.write_record([
                i.to_string(),
                na(self.shifts[i]),
                self.n_at_min[i].to_string(),
                na(self.mse_at_min[i]),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Abscissa of the vertex of the parabola through `(-1, a)`, `(0, b)`,
/// `(1, c)`; `None` unless it opens upward.
pub fn parabola_vertex(a: f64, b: f64, c: f64) -> Option<f64> {
    let denom = a - 2.0 * b + c;
    (denom > 0.0).then(|| (a - c) / (2.0 * denom))
}

/// `(k, MSE, n)` for every integer lag in `[-δ, δ]` of one row.
pub fn mse_curve(surface: &SurfaceMatrix, base: &Signal, row: usize, delta: usize) -> Vec<(isize, Option<f64>, usize)> {
    let d = delta as isize;
    (-d..=d)
        .map(|k| {
            let (m, n) = row_mse(surface.row(row), &base.values, k);
            (k, m, n)
        })
        .collect()
}

/// Best shift of one row: `(shift, n, mse)` at the integer minimum.
fn best_shift(row: &[Option<f64>], base: &[Option<f64>], delta: usize, need: usize) -> Option<(f64, usize, f64)> {
    let d = delta as isize;
    let curve: Vec<Option<(f64, usize)>> = (-d..=d)
        .map(|k| match row_mse(row, base, k) {
            (Some(m), n) if n >= need => Some((m, n)),
            _ => None,
        })
        .collect();
    let mut best: Option<(usize, f64, usize)> = None;
    for (idx, c) in curve.iter().enumerate() {
        let Some((m, n)) = *c else { continue };
        let k = idx as isize - d;
        let better = match best {
            None => true,
            Some((bi, bm, _)) => m < bm || (m == bm && k.abs() < (bi as isize - d).abs()),
        };
        if better {
            best = Some((idx, m, n));
        }
    }
    let (idx, b, n) = best?;
    let k = idx as isize - d;
    let mut shift = k as f64;
    // a zero minimum is an exact match; a vertex elsewhere would imply a negative MSE
    if b > 0.0 && idx > 0 && idx + 1 < curve.len() {
        if let (Some((a, _)), Some((c, _))) = (curve[idx - 1], curve[idx + 1]) {
            if let Some(v) = parabola_vertex(a, b, c) {
                shift += v;
            }
        }
    }
    Some((shift.clamp(-d as f64, d as f64), n, b))
}

/// Shift of every row against `base`.
pub fn compute_shifts(surface: &SurfaceMatrix, base: &Signal, delta: usize) -> Result<ShiftProfile, DewarpError> {
    if base.len() != surface.cols() {
        return Err(DewarpError::BaseLengthMismatch {
            base: base.len(),
            cols: surface.cols(),
        });
    }
    let need = min_overlap(surface.cols());
    let per_row: Vec<Option<(f64, usize, f64)>> = (0..surface.rows())
        .into_par_iter()
        .map(|i| best_shift(surface.row(i), &base.values, delta, need))
        .collect();
    Ok(ShiftProfile {
        shifts: per_row.iter().map(|r| r.map(|t| t.0)).collect(),
        delta,
        n_at_min: per_row.iter().map(|r| r.map_or(0, |t| t.1)).collect(),
        mse_at_min: per_row.iter().map(|r| r.map(|t| t.2)).collect(),
    })
}

/// Linear interpolation of `row` at fractional index `t`; missing if a
/// contributing sample is missing or outside the row.
fn sample_row(row: &[Option<f64>], t: f64) -> Option<f64> {
    const EPS: f64 = 1e-9;
    let at = |k: f64| -> Option<f64> {
        if k < 0.0 || k >= row.len() as f64 {
            None
        } else {
            row[k as usize]
        }
    };
    let f = t.floor();
    let frac = t - f;
    if frac < EPS {
        at(f)
    } else if frac > 1.0 - EPS {
        at(f + 1.0)
    } else {
        Some((1.0 - frac) * at(f)? + frac * at(f + 1.0)?)
    }
}

/// Resamples each row at `j + s`; rows without a shift are left as they are.
pub fn apply_shifts(surface: &SurfaceMatrix, profile: &ShiftProfile) -> Result<SurfaceMatrix, DewarpError> {
    if profile.shifts.len() != surface.rows() {
        return Err(DewarpError::ProfileLengthMismatch {
            profile: profile.shifts.len(),
            rows: surface.rows(),
        });
    }
    let w = surface.cols();
    let rows: Vec<Vec<Option<f64>>> = (0..surface.rows())
        .into_par_iter()
        .map(|i| {
            let row = surface.row(i);
            match profile.shifts[i] {
                None => row.to_vec(),
                Some(s) => (0..w).map(|j| sample_row(row, j as f64 + s)).collect(),
            }
        })
        .collect();
    let mut out = surface.blank_like();
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            out.set(i, j, v);
        }
    }
    Ok(out)
}

/// `passes` rounds of: base from the current surface, shifts, resample.
pub fn dewarp(
    surface: &SurfaceMatrix,
    delta: usize,
    passes: usize,
    min_rows: usize,
    statistic: SignalStatistic,
) -> Result<(SurfaceMatrix, Vec<ShiftProfile>), DewarpError> {
    let mut current = surface.clone();
    let mut profiles = Vec::with_capacity(passes);
    for _ in 0..passes {
        let base = extract_signal(&current, min_rows, statistic)?;
        let profile = compute_shifts(&current, &base, delta)?;
        current = apply_shifts(&current, &profile)?;
        profiles.push(profile);
    }
    Ok((current, profiles))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(seed)
    }

    /// Smooth random profile with features a few pixels wide.
    fn profile(w: usize, seed: u64) -> Vec<f64> {
        let mut r = rng(seed);
        let raw: Vec<f64> = (0..w + 8).map(|_| r.gen_range(-1.0..1.0)).collect();
        (0..w).map(|j| raw[j..j + 8].iter().sum::<f64>() / 8.0).collect()
    }

    fn base_of(v: &[f64]) -> Signal {
        Signal::new(0.0, 1.0, v.iter().map(|&z| Some(z)).collect(), "base")
    }

    #[test]
    fn mse_matches_brute_force() {
        let mut r = rng(1);
        let w = 60;
        let row: Vec<Option<f64>> = (0..w).map(|_| r.gen_bool(0.8).then(|| r.gen_range(-2.0..2.0))).collect();
        let base: Vec<Option<f64>> = (0..w).map(|_| r.gen_bool(0.8).then(|| r.gen_range(-2.0..2.0))).collect();
        for k in -20isize..=20 {
            let mut diffs = Vec::new();
            for j in 0..w as isize {
                let t = j + k;
                if t < 0 || t >= w as isize {
                    continue;
                }
                if let (Some(b), Some(x)) = (base[j as usize], row[t as usize]) {
                    diffs.push((b - x) * (b - x));
                }
            }
            let (m, n) = row_mse(&row, &base, k);
            assert_eq!(n, diffs.len());
            assert_eq!(m, (!diffs.is_empty()).then(|| diffs.iter().sum::<f64>() / diffs.len() as f64));
        }
    }

    #[test]
    fn displaced_row_gets_the_negative_displacement() {
        let w = 200;
        let f0 = profile(w + 20, 2);
        let base = base_of(&f0[..w]);
        for d in [-7isize, -3, 0, 3, 10] {
            // row[j] = base[j + d]
            let row: Vec<Option<f64>> = (0..w as isize)
                .map(|j| {
                    let t = j + d;
                    (t >= 0 && t < w as isize).then(|| f0[t as usize])
                })
                .collect();
            let s = SurfaceMatrix::from_rows(vec![row], 1.0, 1.0).unwrap();
            let p = compute_shifts(&s, &base, 50).unwrap();
            assert_eq!(p.shifts[0], Some(-d as f64), "d {d}");
            assert_eq!(p.mse_at_min[0], Some(0.0));
        }
    }

    #[test]
    fn half_pixel_displacement_is_refined() {
        let w = 200;
        let f0 = profile(w + 20, 6);
        let base = base_of(&f0[..w]);
        // row[j] = base(j + 2.5) by linear interpolation
        let row: Vec<Option<f64>> = (0..w).map(|j| (j + 3 < f0.len()).then(|| 0.5 * (f0[j + 2] + f0[j + 3]))).collect();
        let s = SurfaceMatrix::from_rows(vec![row], 1.0, 1.0).unwrap();
        let p = compute_shifts(&s, &base, 50).unwrap();
        assert!((p.shifts[0].unwrap() + 2.5).abs() <= 0.1, "{:?}", p.shifts[0]);
    }

    #[test]
    fn vertex_matches_exact_three_point_interpolation() {
        use num_rational::BigRational;
        use num_traits::{FromPrimitive, Zero};
        let mut r = rng(7);
        for _ in 0..200 {
            let b: f64 = r.gen_range(0.0..2.0);
            let a = b + r.gen_range(0.0..3.0);
            let c = b + r.gen_range(0.0..3.0);
            let q = |x: f64| BigRational::from_f64(x).unwrap();
            let (qa, qb, qc) = (q(a), q(b), q(c));
            // p(x) = b + (c - a)/2 x + (a - 2b + c)/2 x²; vertex where p'(x) = 0
            let two = q(2.0);
            let lin = (&qc - &qa) / &two;
            let quad = (&qa - &two * &qb + &qc) / &two;
            if quad.is_zero() {
                continue;
            }
            let exact = -lin / (&two * quad);
            let got = parabola_vertex(a, b, c).unwrap();
            let exact = num_traits::ToPrimitive::to_f64(&exact).unwrap();
            assert!((got - exact).abs() <= 1e-12 * exact.abs().max(1.0));
            assert!(got.abs() <= 0.5 + 1e-12);
        }
        assert_eq!(parabola_vertex(1.0, 1.0, 1.0), None);
    }

    #[test]
    fn mse_curve_minimum_sits_at_the_displacement() {
        let f0 = profile(120, 8);
        let row: Vec<Option<f64>> = (0..100).map(|j| Some(f0[j + 4])).collect();
        let s = SurfaceMatrix::from_rows(vec![row], 1.0, 1.0).unwrap();
        let curve = mse_curve(&s, &base_of(&f0[..100]), 0, 10);
        assert_eq!(curve.len(), 21);
        let min = curve.iter().filter(|c| c.1.is_some()).min_by(|x, y| x.1.unwrap().total_cmp(&y.1.unwrap())).unwrap();
        assert_eq!(min.0, -4);
    }

    #[test]
    fn integer_shifts_resample_exactly() {
        let row: Vec<Option<f64>> = (0..40).map(|j| Some(j as f64 * 0.25)).collect();
        let s = SurfaceMatrix::from_rows(vec![row.clone(), row.clone()], 1.0, 1.0).unwrap();
        let p = ShiftProfile {
            shifts: vec![Some(3.0), None],
            delta: 5,
            n_at_min: vec![40, 0],
            mse_at_min: vec![Some(0.0), None],
        };
        let out = apply_shifts(&s, &p).unwrap();
        for j in 0..37 {
            assert_eq!(out.get(0, j), row[j + 3]);
        }
        assert!((37..40).all(|j| !out.is_present(0, j)));
        assert_eq!(out.row(1), &row[..]);
    }

    #[test]
    fn fractional_shift_interpolates_linearly() {
        let row: Vec<Option<f64>> = (0..40).map(|j| Some((j * j) as f64)).collect();
        let s = SurfaceMatrix::from_rows(vec![row], 1.0, 1.0).unwrap();
        let p = ShiftProfile {
            shifts: vec![Some(-0.25)],
            delta: 5,
            n_at_min: vec![40],
            mse_at_min: vec![Some(0.0)],
        };
        let out = apply_shifts(&s, &p).unwrap();
        assert!(!out.is_present(0, 0));
        assert_eq!(out.get(0, 5), Some(0.25 * 16.0 + 0.75 * 25.0));
    }

    fn warped_surface(h: usize, w: usize, seed: u64) -> (SurfaceMatrix, Vec<f64>) {
        let f0 = profile(w + 40, seed);
        let mut r = rng(seed + 1);
        let disp: Vec<f64> = (0..h)
            .map(|i| {
                let t = i as f64 / h as f64 - 0.5;
                12.0 * t * t - 3.0 + r.gen_range(-0.3..0.3)
            })
            .collect();
        let s = SurfaceMatrix::from_fn(h, w, 1.0, 1.0, |i, j| {
            // row i sees the profile displaced by disp[i]
            let t = j as f64 + 20.0 + disp[i];
            let k = t.floor() as usize;
            let f = t - k as f64;
            Some((1.0 - f) * f0[k] + f * f0[k + 1] + r.gen_range(-0.01..0.01))
        })
        .unwrap();
        (s, disp)
    }

    fn mean_column_variance(s: &SurfaceMatrix) -> f64 {
        let mut total = 0.0;
        let mut cols = 0;
        for j in 0..s.cols() {
            let v: Vec<f64> = (0..s.rows()).filter_map(|i| s.get(i, j)).collect();
            if v.len() >= 10 {
                let m = v.iter().sum::<f64>() / v.len() as f64;
                total += v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
                cols += 1;
            }
        }
        total / cols as f64
    }

    #[test]
    fn dewarping_reduces_column_variance_and_is_self_consistent() {
        let (s, _) = warped_surface(80, 300, 3);
        let (out, profiles) = dewarp(&s, 50, 1, 10, SignalStatistic::Median).unwrap();
        assert!(mean_column_variance(&out) < 0.5 * mean_column_variance(&s));
        assert_eq!(profiles[0].unaligned_rows(), 0);
        let base = extract_signal(&out, 10, SignalStatistic::Median).unwrap();
        let again = compute_shifts(&out, &base, 50).unwrap();
        for s in again.shifts.iter().flatten() {
            assert!(s.abs() <= 0.25, "residual shift {s}");
        }
    }

    #[test]
    fn recovered_shifts_track_the_displacement() {
        let (s, disp) = warped_surface(60, 300, 4);
        let base = extract_signal(&s, 10, SignalStatistic::Median).unwrap();
        let p = compute_shifts(&s, &base, 50).unwrap();
        // shifts are relative to the base, so compare after removing the mean
        let est: Vec<f64> = p.shifts.iter().map(|v| -v.unwrap()).collect();
        let me = est.iter().sum::<f64>() / est.len() as f64;
        let md = disp.iter().sum::<f64>() / disp.len() as f64;
        for (e, d) in est.iter().zip(&disp) {
            assert!(((e - me) - (d - md)).abs() < 0.5, "{e} vs {d}");
        }
    }

    #[test]
    fn sparse_rows_are_left_unshifted() {
        let f0 = profile(100, 5);
        let mut rows = vec![f0.iter().map(|&z| Some(z)).collect::<Vec<_>>(); 3];
        rows[1] = (0..100).map(|j| (j < 20).then_some(f0[j])).collect();
        let s = SurfaceMatrix::from_rows(rows, 1.0, 1.0).unwrap();
        let p = compute_shifts(&s, &base_of(&f0), 10).unwrap();
        assert_eq!(p.shifts[1], None);
        assert_eq!(p.shifts[0], Some(0.0));
        assert!(matches!(
            compute_shifts(&s, &base_of(&f0[..50]), 10),
            Err(DewarpError::BaseLengthMismatch { base: 50, cols: 100 })
        ));
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("row,shift,n_at_min,mse_at_min\n0,0,100,0\n1,NA,0,NA\n"));
    }
}
