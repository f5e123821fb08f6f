//! Synthetic wire-cut scans with known ground truth.
//!
//! A scan is built as: one signature replicated down the rows, a per-row
//! horizontal warp, a rotation of the striations, a quadratic dome trend,
//! Gaussian noise, a dome-shaped footprint, elliptical dropout blobs, and
//! spikes on cells bordering missing data.
//!
//! Randomness comes from ChaCha8 keyed by the seed, with one stream per
//! ingredient, so the output is identical on every platform and the
//! signature can be shared between scans while everything else is redrawn.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::surface::SurfaceMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum SignatureSpec {
    /// Sum of 20–60 random Gaussian valleys per scan width.
    #[default]
    Random,
    /// Samples at integer positions, linearly interpolated between them.
    Provided { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub h: usize,
    pub w: usize,
    pub pitch_um: f64,
    pub signature: SignatureSpec,
    /// Striation angle from vertical, degrees; positive leans right going down.
    pub angle_deg: f64,
    /// Largest per-row warp shift, pixels.
    pub warp_px: f64,
    /// `c0 + c1·x + c2·y + c3·x² + c4·x·y + c5·y²` in µm, with `x`, `y` the
    /// column and row offsets from the center divided by the width and height.
    pub trend: [f64; 6],
    pub noise_sd: f64,
    /// Fraction of the footprint removed by dropout blobs.
    pub dropout_frac: f64,
    /// Spikes on cells next to missing data are uniform in `±spike_amplitude` µm.
    pub spike_amplitude: f64,
    /// Largest lateral offset of the signature window, pixels.
    pub offset_px: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            h: 600,
            w: 400,
            pitch_um: 0.645,
            signature: SignatureSpec::Random,
            angle_deg: 0.0,
            warp_px: 3.0,
            trend: [0.0, 2.0, -1.0, -30.0, 1.5, -8.0],
            noise_sd: 0.05,
            dropout_frac: 0.05,
            spike_amplitude: 2.0,
            offset_px: 10.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.h < 8 || self.w < 8 {
            return bad(format!("grid {}x{} is smaller than 8x8", self.h, self.w));
        }
        if !(self.pitch_um > 0.0 && self.pitch_um.is_finite()) {
            return bad(format!("pitch_um must be positive, got {}", self.pitch_um));
        }
        if !(self.angle_deg.abs() <= 45.0) {
            return bad(format!("angle_deg must lie in [-45, 45], got {}", self.angle_deg));
        }
        if !(0.0..0.5).contains(&self.dropout_frac) {
            return bad(format!("dropout_frac must lie in [0, 0.5), got {}", self.dropout_frac));
        }
        for (name, v) in [
            ("warp_px", self.warp_px),
            ("noise_sd", self.noise_sd),
            ("spike_amplitude", self.spike_amplitude),
            ("offset_px", self.offset_px),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if self.trend.iter().any(|c| !c.is_finite()) {
            return bad("trend coefficients must be finite".into());
        }
        if let SignatureSpec::Provided { values } = &self.signature {
            if values.len() < 2 || values.iter().any(|v| !v.is_finite()) {
                return bad("provided signature needs at least two finite samples".into());
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        let spec: SynthSpec = serde_json::from_str(text).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// One valley of a random signature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Valley {
    pub center: f64,
    pub depth: f64,
    /// Full width at half depth, pixels.
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Profile {
    Valleys(Vec<Valley>),
    Samples(Vec<f64>),
}

impl Profile {
    /// Height at continuous position `u`.
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Profile::Valleys(vs) => {
                let mut z = 0.0;
                for v in vs {
                    let sigma = v.width / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
                    let t = (u - v.center) / sigma;
                    if t.abs() < 12.0 {
                        z -= v.depth * (-0.5 * t * t).exp();
                    }
                }
                z
            }
            Profile::Samples(s) => {
                let last = (s.len() - 1) as f64;
                let t = u.clamp(0.0, last);
                let k = (t.floor() as usize).min(s.len() - 2);
                let f = t - k as f64;
                if f == 0.0 {
                    s[k]
                } else {
                    (1.0 - f) * s[k] + f * s[k + 1]
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub profile: Profile,
    /// The signature as seen by an undistorted row of this scan, one value per column.
    pub signature: Vec<f64>,
    pub angle_deg: f64,
    /// Horizontal displacement of each row before rotation, pixels.
    pub warp: Vec<f64>,
    pub offset_px: f64,
    pub trend: [f64; 6],
    pub footprint_cells: usize,
    pub dropout_cells: usize,
    pub spiked_cells: usize,
}

const STREAM_SIGNATURE: u64 = 1;
const STREAM_WARP: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_DROPOUT: u64 = 4;
const STREAM_SPIKES: u64 = 5;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

fn random_valleys(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<Valley> {
    let (h, w) = (spec.h as f64, spec.w as f64);
    let a = spec.angle_deg.to_radians();
    // positions a rotated, warped and offset row can reach
    let pad = 0.5 * h * a.sin().abs() + 0.5 * w * (1.0 - a.cos()) + spec.warp_px + spec.offset_px + 60.0;
    let span = w + 2.0 * pad;
    let per_width: usize = rng.gen_range(20..=60);
    let k = (per_width as f64 * span / w).round() as usize;
    (0..k)
        .map(|_| Valley {
            center: rng.gen_range(-pad..w + pad),
            depth: rng.gen_range(0.5..5.0),
            width: rng.gen_range(3.0..40.0),
        })
        .collect()
}

fn profile_for(spec: &SynthSpec) -> Profile {
    match &spec.signature {
        SignatureSpec::Random => Profile::Valleys(random_valleys(spec, &mut stream(spec.seed, STREAM_SIGNATURE))),
        SignatureSpec::Provided { values } => Profile::Samples(values.clone()),
    }
}

/// Dome footprint: flat base, rounded top.
fn in_footprint(i: usize, j: usize, h: usize, w: usize) -> bool {
    let (h, w) = (h as f64, w as f64);
    let x = (j as f64 + 0.5 - w / 2.0) / (0.46 * w);
    let y = i as f64 + 0.5;
    x.abs() <= 1.0 && y <= 0.97 * h && y >= 0.03 * h + 0.3 * h * x * x
}

/// A generated surface with the ground truth that produced it.
pub type Scan = (SurfaceMatrix, GroundTruth);

pub fn generate(spec: &SynthSpec) -> Result<Scan, SynthError> {
    spec.validate()?;
    generate_with_profile(spec, profile_for(spec))
}

fn generate_with_profile(spec: &SynthSpec, profile: Profile) -> Result<Scan, SynthError> {
    let (h, w) = (spec.h, spec.w);
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);

    let mut warp_rng = stream(spec.seed, STREAM_WARP);
    let c2: f64 = warp_rng.gen_range(0.5..1.0) * if warp_rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let c1: f64 = warp_rng.gen_range(-0.5..0.5);
    let offset = if spec.offset_px > 0.0 {
        warp_rng.gen_range(-spec.offset_px..=spec.offset_px)
    } else {
        0.0
    };
    let shape = |t: f64| c2 * t * t + c1 * t;
    let peak = [-1.0, 1.0, -c1 / (2.0 * c2)]
        .iter()
        .filter(|t| t.abs() <= 1.0)
        .map(|&t| shape(t).abs())
        .fold(0.0, f64::max);
    let warp_at = |v: f64| {
        if spec.warp_px == 0.0 || peak == 0.0 {
            0.0
        } else {
            spec.warp_px * shape((v - cy) / cy) / peak
        }
    };

    let a = spec.angle_deg.to_radians();
    let (sa, ca) = (a.sin(), a.cos());
    let t = spec.trend;
    let normal = Normal::new(0.0, spec.noise_sd).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    let mut noise_rng = stream(spec.seed, STREAM_NOISE);
    let mut cells = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            let (dx, dy) = (j as f64 - cx, i as f64 - cy);
            // coordinates in the unrotated frame: u across, v along the striations
            let u = cx + dx * ca - dy * sa;
            let v = cy + dx * sa + dy * ca;
            let z = profile.eval(u - warp_at(v) + offset);
            let (x, y) = (dx / w as f64, dy / h as f64);
            let trend = t[0] + t[1] * x + t[2] * y + t[3] * x * x + t[4] * x * y + t[5] * y * y;
            let noise = if spec.noise_sd > 0.0 { normal.sample(&mut noise_rng) } else { 0.0 };
            cells.push(Some(z + trend + noise));
        }
    }
    let mut surface = SurfaceMatrix::from_vec(h, w, cells, spec.pitch_um, spec.pitch_um)
        .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;

    let mut footprint_cells = 0;
    for i in 0..h {
        for j in 0..w {
            if in_footprint(i, j, h, w) {
                footprint_cells += 1;
            } else {
                surface.set(i, j, None);
            }
        }
    }

    let target = (spec.dropout_frac * footprint_cells as f64).round() as usize;
    let mut dropout_cells = 0;
    let mut drop_rng = stream(spec.seed, STREAM_DROPOUT);
    let max_axis = 2.0 + 0.05 * h.min(w) as f64;
    let mut attempts = 0;
    while dropout_cells < target && attempts < 10_000 {
        attempts += 1;
        let (ei, ej) = (drop_rng.gen_range(0..h), drop_rng.gen_range(0..w));
        let ra: f64 = drop_rng.gen_range(1.5..max_axis);
        let rb: f64 = drop_rng.gen_range(1.5..max_axis);
        let phi: f64 = drop_rng.gen_range(0.0..std::f64::consts::PI);
        if !in_footprint(ei, ej, h, w) {
            continue;
        }
        let (sp, cp) = phi.sin_cos();
        let reach = ra.max(rb).ceil() as usize;
        for i in ei.saturating_sub(reach)..(ei + reach + 1).min(h) {
            for j in ej.saturating_sub(reach)..(ej + reach + 1).min(w) {
                let (dy, dx) = (i as f64 - ei as f64, j as f64 - ej as f64);
                let (p, q) = (dx * cp + dy * sp, -dx * sp + dy * cp);
                if (p / ra).powi(2) + (q / rb).powi(2) <= 1.0 && surface.is_present(i, j) {
                    surface.set(i, j, None);
                    dropout_cells += 1;
                }
            }
        }
    }

    let mut spiked_cells = 0;
    if spec.spike_amplitude > 0.0 {
        let mut spike_rng = stream(spec.seed, STREAM_SPIKES);
        let before = surface.clone();
        for i in 0..h {
            for j in 0..w {
                if !before.is_present(i, j) {
                    continue;
                }
                let borders_gap = (-1isize..=1)
                    .flat_map(|di| (-1isize..=1).map(move |dj| (di, dj)))
                    .any(|(di, dj)| before.get_signed(i as isize + di, j as isize + dj).is_none());
                if borders_gap && spike_rng.gen_bool(0.5) {
                    let z = before.get(i, j).unwrap();
                    surface.set(i, j, Some(z + spike_rng.gen_range(-spec.spike_amplitude..=spec.spike_amplitude)));
                    spiked_cells += 1;
                }
            }
        }
    }

    let signature = (0..w).map(|j| profile.eval(j as f64 + offset)).collect();
    let truth = GroundTruth {
        seed: spec.seed,
        profile,
        signature,
        angle_deg: spec.angle_deg,
        warp: (0..h).map(|i| warp_at(i as f64)).collect(),
        offset_px: offset,
        trend: spec.trend,
        footprint_cells,
        dropout_cells,
        spiked_cells,
    };
    Ok((surface, truth))
}

/// Seed of the second scan of a pair.
fn partner_seed(seed: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0xD1B5_4A32_D192_ED03)
}

/// Two scans. With `same_source` both carry the signature of `spec`; every
/// other random ingredient is drawn independently for the second scan.
pub fn make_pair(
    spec: &SynthSpec,
    same_source: bool,
) -> Result<(Scan, Scan), SynthError> {
    let first = generate(spec)?;
    let other = SynthSpec {
        seed: partner_seed(spec.seed),
        ..spec.clone()
    };
    let second = if same_source {
        generate_with_profile(&other, first.1.profile.clone())?
    } else {
        generate(&other)?
    };
    Ok((first, second))
}
