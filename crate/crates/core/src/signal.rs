//! Representative signals, their comparison, and error-rate summaries.
//!
//! A processed scan is collapsed column by column into one profile. Two
//! profiles are compared by the largest Pearson correlation over all relative
//! lags with enough overlap. Batches of pairwise scores are summarized by an
//! ROC curve with same-source pairs as the positive class.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::{pair_category, parse_label, PairCategory};
use crate::params::SignalStatistic;
use crate::stats::{mean, median_in_place};
use crate::surface::SurfaceMatrix;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("no column has at least {min_rows} values")]
    EmptySurface { min_rows: usize },
    #[error("overlap of {best} samples is below the required {required}")]
    InsufficientOverlap { best: usize, required: usize },
    #[error("every admissible lag has a constant overlap window")]
    ZeroVariance,
    #[error("ROC needs both classes: {positives} positives, {negatives} negatives")]
    DegenerateClasses { positives: usize, negatives: usize },
    #[error("malformed signal: {0}")]
    Malformed(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Profile sampled at `x0 + j·pitch` µm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    pub x0: f64,
    pub pitch: f64,
    pub values: Vec<Option<f64>>,
    /// Scan label or file stem.
    pub source: String,
}

impl Signal {
    pub fn new(x0: f64, pitch: f64, values: Vec<Option<f64>>, source: impl Into<String>) -> Self {
        Self {
            x0,
            pitch,
            values: values.into_iter().map(|v| v.filter(|z| z.is_finite())).collect(),
            source: source.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x0 + j as f64 * self.pitch
    }

    pub fn present_count(&self) -> usize {
        self.values.iter().flatten().count()
    }

    /// Linear interpolation at fractional index `t`; missing if a needed
    /// neighbor is missing or out of range.
    pub fn sample(&self, t: f64) -> Option<f64> {
        const EPS: f64 = 1e-9;
        let f = t.floor();
        let frac = t - f;
        let at = |k: f64| -> Option<f64> {
            if k < 0.0 || k >= self.len() as f64 {
                None
            } else {
                self.values[k as usize]
            }
        };
        if frac < EPS {
            at(f)
        } else if frac > 1.0 - EPS {
            at(f + 1.0)
        } else {
            Some((1.0 - frac) * at(f)? + frac * at(f + 1.0)?)
        }
    }

    /// Resampled onto pitch `pitch` over the same span.
    pub fn resample(&self, pitch: f64) -> Signal {
        let span = (self.len().saturating_sub(1)) as f64 * self.pitch;
        let n = (span / pitch + 1e-9).floor() as usize + 1;
        let values = (0..n).map(|k| self.sample(k as f64 * pitch / self.pitch)).collect();
        Signal::new(self.x0, pitch, values, self.source.clone())
    }

    /// CSV with header `x_um,value_um`, `NA` for missing.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), SignalError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x_um", "value_um"])?;
        for (j, v) in self.values.iter().enumerate() {
            let value = v.map_or_else(|| "NA".to_string(), |z| z.to_string());
            out.write_record([self.x(j).to_string(), value])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, source: impl Into<String>) -> Result<Signal, SignalError> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["x_um", "value_um"] {
            return Err(SignalError::Malformed(format!("expected header x_um,value_um, got {headers:?}")));
        }
        let mut xs = Vec::new();
        let mut values = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| SignalError::Malformed(format!("row {}: bad {what}", k + 1));
            let x: f64 = rec[0].trim().parse().map_err(|_| bad("x_um"))?;
            let v = match rec[1].trim() {
                "NA" => None,
                t => Some(t.parse::<f64>().map_err(|_| bad("value_um"))?),
            };
            xs.push(x);
            values.push(v);
        }
        if xs.is_empty() {
            return Err(SignalError::Malformed("no samples".into()));
        }
        let pitch = if xs.len() > 1 { (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64 } else { 1.0 };
        if !(pitch > 0.0) {
            return Err(SignalError::Malformed("x_um must increase".into()));
        }
        for (k, x) in xs.iter().enumerate() {
            if (x - (xs[0] + k as f64 * pitch)).abs() > 1e-6 * pitch.max(1.0) {
                return Err(SignalError::Malformed(format!("row {}: x_um is not on a constant pitch", k + 1)));
            }
        }
        Ok(Signal::new(xs[0], pitch, values, source))
    }

    pub fn load(path: &Path) -> Result<Signal, SignalError> {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Signal::read_csv(std::fs::File::open(path)?, stem)
    }

    pub fn save(&self, path: &Path) -> Result<(), SignalError> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Column statistic of the surface; columns with fewer than `min_rows`
/// values are missing.
pub fn extract_signal(
    surface: &SurfaceMatrix,
    min_rows: usize,
    statistic: SignalStatistic,
) -> Result<Signal, SignalError> {
    let mut column = Vec::with_capacity(surface.rows());
    let values: Vec<Option<f64>> = (0..surface.cols())
        .map(|j| {
            column.clear();
            column.extend((0..surface.rows()).filter_map(|i| surface.get(i, j)));
            if column.len() < min_rows.max(1) {
                return None;
            }
            match statistic {
                SignalStatistic::Median => median_in_place(&mut column),
                SignalStatistic::Mean => mean(&column),
            }
        })
        .collect();
    if values.iter().all(Option::is_none) {
        return Err(SignalError::EmptySurface { min_rows });
    }
    Ok(Signal::new(surface.origin().0, surface.res_x(), values, ""))
}

/// Pearson correlation of `a[j]` with `b[j + lag]` over pairwise-present
/// samples. Returns `(r, n)`; `r` is `None` for a constant window.
pub fn correlation_at_lag(a: &[Option<f64>], b: &[Option<f64>], lag: isize) -> (Option<f64>, usize) {
    let lo = 0.max(-lag) as usize;
    let hi = (a.len() as isize).min(b.len() as isize - lag).max(0) as usize;
    let pairs = || {
        (lo..hi.max(lo)).filter_map(move |j| match (a[j], b[(j as isize + lag) as usize]) {
            (Some(x), Some(y)) => Some((x, y)),
            _ => None,
        })
    };
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for (x, y) in pairs() {
        sx += x;
        sy += y;
        n += 1;
    }
    if n < 2 {
        return (None, n);
    }
    let (mx, my) = (sx / n as f64, sy / n as f64);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in pairs() {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return (None, n);
    }
    (Some(sxy / (sxx * syy).sqrt()), n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcfMax {
    pub ccf_max: f64,
    /// Lag in samples: `a[j]` aligns with `b[j + lag]`.
    pub lag: isize,
    pub lag_um: f64,
    pub overlap: usize,
}

/// Largest correlation over lags whose pairwise overlap is at least
/// `min_overlap_frac` times the smaller number of present samples.
pub fn ccf_max(a: &Signal, b: &Signal, min_overlap_frac: f64) -> Result<CcfMax, SignalError> {
    let resampled;
    let b = if ((b.pitch - a.pitch) / a.pitch).abs() > 1e-9 {
        resampled = b.resample(a.pitch);
        &resampled
    } else {
        b
    };
    let required = ((min_overlap_frac * a.present_count().min(b.present_count()) as f64).ceil() as usize).max(2);
    let (na, nb) = (a.len() as isize, b.len() as isize);
    let mut best: Option<CcfMax> = None;
    let mut best_overlap = 0;
    let mut any_admissible = false;
    for lag in -(na - 1)..nb {
        // overlap can only shrink below the index overlap
        let index_overlap = (na.min(nb - lag) - 0.max(-lag)).max(0) as usize;
        if index_overlap < required {
            continue;
        }
        let (r, n) = correlation_at_lag(&a.values, &b.values, lag);
        best_overlap = best_overlap.max(n);
        if n < required {
            continue;
        }
        any_admissible = true;
        let Some(r) = r else { continue };
        let better = match &best {
            None => true,
            Some(cur) => r > cur.ccf_max || (r == cur.ccf_max && lag.abs() < cur.lag.abs()),
        };
        if better {
            best = Some(CcfMax {
                ccf_max: r,
                lag,
                lag_um: lag as f64 * a.pitch,
                overlap: n,
            });
        }
    }
    match best {
        Some(b) => Ok(b),
        None if any_admissible => Err(SignalError::ZeroVariance),
        None => Err(SignalError::InsufficientOverlap {
            best: best_overlap,
            required,
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub a: String,
    pub b: String,
    pub category: PairCategory,
    pub ccf_max: f64,
    pub lag_um: f64,
    pub overlap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFailure {
    pub a: String,
    pub b: String,
    pub category: PairCategory,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BatchOutput {
    pub results: Vec<ComparisonResult>,
    pub failures: Vec<PairFailure>,
}

/// Category of two sources named by scan label; `Unknown` unless both parse.
pub fn category_of(a: &str, b: &str) -> PairCategory {
    match (parse_label(a), parse_label(b)) {
        (Ok(x), Ok(y)) => pair_category(&x, &y).unwrap_or(PairCategory::Unknown),
        _ => PairCategory::Unknown,
    }
}

/// Scores every unordered pair. Pairs are keyed by source name with `a < b`
/// and the output is sorted by key regardless of input order or scheduling.
pub fn batch_compare(signals: &[Signal], min_overlap_frac: f64) -> BatchOutput {
    let mut order: Vec<&Signal> = signals.iter().collect();
    order.sort_by(|x, y| x.source.cmp(&y.source));
    let pairs: Vec<(usize, usize)> = (0..order.len())
        .flat_map(|i| (i + 1..order.len()).map(move |j| (i, j)))
        .collect();
    let outcomes: Vec<Result<ComparisonResult, PairFailure>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (order[i], order[j]);
            let category = category_of(&a.source, &b.source);
            match ccf_max(a, b, min_overlap_frac) {
                Ok(c) => Ok(ComparisonResult {
                    a: a.source.clone(),
                    b: b.source.clone(),
                    category,
                    ccf_max: c.ccf_max,
                    lag_um: c.lag_um,
                    overlap: c.overlap,
                }),
                Err(e) => Err(PairFailure {
                    a: a.source.clone(),
                    b: b.source.clone(),
                    category,
                    error: e.to_string(),
                }),
            }
        })
        .collect();
    let mut out = BatchOutput::default();
    for o in outcomes {
        match o {
            Ok(r) => out.results.push(r),
            Err(f) => out.failures.push(f),
        }
    }
    out
}

pub fn write_results_csv<W: Write>(results: &[ComparisonResult], w: W) -> Result<(), SignalError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["a", "b", "category", "ccf_max", "lag_um", "overlap"])?;
    for r in results {
        out.write_record([
            r.a.clone(),
            r.b.clone(),
            r.category.to_string(),
            r.ccf_max.to_string(),
            r.lag_um.to_string(),
            r.overlap.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_results_csv<R: Read>(r: R) -> Result<Vec<ComparisonResult>, SignalError> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["a", "b", "category", "ccf_max", "lag_um", "overlap"] {
        return Err(SignalError::Malformed(format!("unexpected results header {headers:?}")));
    }
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| SignalError::Malformed(format!("row {}: bad {what}", k + 1));
        out.push(ComparisonResult {
            a: rec[0].to_string(),
            b: rec[1].to_string(),
            category: rec[2].parse().map_err(|_| bad("category"))?,
            ccf_max: rec[3].parse().map_err(|_| bad("ccf_max"))?,
            lag_um: rec[4].parse().map_err(|_| bad("lag_um"))?,
            overlap: rec[5].parse().map_err(|_| bad("overlap"))?,
        });
    }
    Ok(out)
}

/// ROC over thresholds. The first threshold is `+∞` (nothing predicted
/// positive); the rest are the distinct scores in decreasing order, a pair
/// being predicted positive when its score is at least the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocSummary {
    pub thresholds: Vec<f64>,
    pub fpr: Vec<f64>,
    pub fnr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub auc: f64,
    pub positives: usize,
    pub negatives: usize,
}

impl RocSummary {
    /// `(fpr, fnr)` when predicting positive at `score ≥ threshold`.
    pub fn rates_at(&self, threshold: f64) -> (f64, f64) {
        // thresholds decrease; take the last one that is still >= threshold
        let k = self.thresholds.iter().rposition(|&t| t >= threshold).unwrap_or(0);
        (self.fpr[k], self.fnr[k])
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), SignalError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["threshold", "fpr", "fnr", "tpr"])?;
        for k in 0..self.thresholds.len() {
            out.write_record([
                self.thresholds[k].to_string(),
                self.fpr[k].to_string(),
                self.fnr[k].to_string(),
                self.tpr[k].to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Positive class: same-source. Negative class: different-tool, plus
/// same-tool/different-site when `include_site_mismatch`. Unknown pairs are
/// ignored.
pub fn roc(results: &[ComparisonResult], include_site_mismatch: bool) -> Result<RocSummary, SignalError> {
    let mut scored: Vec<(f64, bool)> = results
        .iter()
        .filter_map(|r| match r.category {
            PairCategory::SameSource => Some((r.ccf_max, true)),
            PairCategory::DifferentTool => Some((r.ccf_max, false)),
            PairCategory::SameToolDifferentSite if include_site_mismatch => Some((r.ccf_max, false)),
            _ => None,
        })
        .collect();
    let positives = scored.iter().filter(|s| s.1).count();
    let negatives = scored.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(SignalError::DegenerateClasses { positives, negatives });
    }
    scored.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut thresholds = vec![f64::INFINITY];
    let (mut fpr, mut tpr) = (vec![0.0], vec![0.0]);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < scored.len() {
        let t = scored[k].0;
        while k < scored.len() && scored[k].0 == t {
            if scored[k].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        thresholds.push(t);
        tpr.push(tp as f64 / positives as f64);
        fpr.push(fp as f64 / negatives as f64);
    }
    let auc = (1..fpr.len()).map(|k| (fpr[k] - fpr[k - 1]) * (tpr[k] + tpr[k - 1]) / 2.0).sum();
    let fnr = tpr.iter().map(|t| 1.0 - t).collect();
    Ok(RocSummary {
        thresholds,
        fpr,
        fnr,
        tpr,
        auc,
        positives,
        negatives,
    })
}
