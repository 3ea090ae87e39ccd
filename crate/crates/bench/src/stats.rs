/// Two-sided 95 % normal quantile.
pub const Z95: f64 = 1.96;

/// Wilson score interval for `k` successes out of `n`.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// SNR at which a decreasing SER curve crosses `target`, by linear
/// interpolation of `log10(SER)` between the bracketing grid points.
///
/// A zero SER is replaced by `floor` so the logarithm stays finite; pass
/// half a symbol error over the sample size. Returns `None` if the curve
/// never crosses.
pub fn crossing_snr(points: &[(f64, f64)], target: f64, floor: f64) -> Option<f64> {
    let lg = |s: f64| s.max(floor).log10();
    let t = target.log10();
    points.windows(2).find_map(|w| {
        let ((x0, s0), (x1, s1)) = (w[0], w[1]);
        let (l0, l1) = (lg(s0), lg(s1));
        (l0 >= t && l1 < t).then(|| x0 + (x1 - x0) * (l0 - t) / (l0 - l1))
    })
}
