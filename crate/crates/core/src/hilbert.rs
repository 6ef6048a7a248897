//! Hilbert projective metric on the nonnegative cone.

/// `log(max(uᵢ/wᵢ) / min(uᵢ/wᵢ))` over the common support.
///
/// Returns infinity when the supports differ, when either vector has a
/// negative entry, or when there is no common positive node. Nodes where
/// both vectors vanish are ignored.
pub fn hilbert_metric(u: &[f64], w: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), w.len());
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for (&a, &b) in u.iter().zip(w) {
        if a < 0.0 || b < 0.0 || a.is_nan() || b.is_nan() {
            return f64::INFINITY;
        }
        match (a > 0.0, b > 0.0) {
            (false, false) => continue,
            (true, true) => {
                let r = a / b;
                lo = lo.min(r);
                hi = hi.max(r);
            }
            _ => return f64::INFINITY,
        }
    }
    if hi == 0.0 {
        return f64::INFINITY;
    }
    (hi / lo).ln().max(0.0)
}

/// Oscillation `max(uᵢ/wᵢ)/min(uᵢ/wᵢ) - 1 = exp(d(u, w)) - 1`, computed
/// directly to keep full relative precision for small values.
pub fn ratio_oscillation(u: &[f64], w: &[f64]) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (&a, &b) in u.iter().zip(w) {
        let r = a / b;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    if lo > 0.0 && hi.is_finite() {
        (hi - lo) / lo
    } else {
        f64::INFINITY
    }
}
