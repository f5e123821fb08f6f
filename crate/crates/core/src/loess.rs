//! Local linear regression with tricube weights on a regular periodic grid.

/// Smooths `values`, sampled on a uniform circular grid, by fitting a weighted
/// line around each point over the nearest `span · n` samples (wrapping at the
/// ends) and evaluating it at that point.
pub fn loess_circular(values: &[f64], span: f64) -> Vec<f64> {
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    let q = ((span * n as f64).floor() as usize).clamp(1, n);
    // symmetric window of q samples; the bandwidth sits one step past its edge
    // so every sample in the window has positive weight
    let half = (q - 1) / 2;
    let bandwidth = (half + 1) as f64;
    let weights: Vec<f64> = (0..=half)
        .map(|m| {
            let u = m as f64 / bandwidth;
            (1.0 - u * u * u).powi(3)
        })
        .collect();
    (0..n)
        .map(|k| {
            let (mut sw, mut swx, mut swxx, mut swy, mut swxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for off in -(half as isize)..=half as isize {
                let w = weights[off.unsigned_abs()];
                let x = off as f64;
                let y = values[(k as isize + off).rem_euclid(n as isize) as usize];
                sw += w;
                swx += w * x;
                swxx += w * x * x;
                swy += w * y;
                swxy += w * x * y;
            }
            let det = sw * swxx - swx * swx;
            if det.abs() < 1e-12 * sw * sw {
                swy / sw
            } else {
                // intercept of the weighted line at offset 0
                (swxx * swy - swx * swxy) / det
            }
        })
        .collect()
}
