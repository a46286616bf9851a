use crate::error::{Error, Result};

/// Evaluates a polynomial given with the leading coefficient first.
pub fn poly_eval(coeffs: &[f64], z: f64) -> f64 {
    coeffs.iter().fold(0.0, |acc, &c| acc * z + c)
}

fn derivative(coeffs: &[f64]) -> Vec<f64> {
    let deg = coeffs.len() - 1;
    coeffs[..deg]
        .iter()
        .enumerate()
        .map(|(k, &c)| c * (deg - k) as f64)
        .collect()
}

/// All real roots of a low-degree polynomial, ascending.
///
/// `coeffs` lists the coefficients leading term first, so `[1, 0, -1]` is
/// `z² - 1`. The leading coefficient must be nonzero.
///
/// Roots are isolated between consecutive critical points (the real roots of
/// the derivative, found recursively); on each monotone piece a sign change is
/// refined by bisection followed by a Newton polish. Critical points where the
/// polynomial touches zero are reported as (multiple) roots.
pub fn real_poly_roots(coeffs: &[f64]) -> Result<Vec<f64>> {
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("polynomial coefficient"));
    }
    if coeffs.len() < 2 {
        return Err(Error::InvalidArgument("polynomial must have degree >= 1".into()));
    }
    let lead = coeffs[0];
    if lead == 0.0 {
        return Err(Error::InvalidArgument("leading coefficient must be nonzero".into()));
    }
    Ok(roots_inner(coeffs))
}

fn roots_inner(coeffs: &[f64]) -> Vec<f64> {
    let lead = coeffs[0];
    if coeffs.len() == 2 {
        return vec![-coeffs[1] / lead];
    }

    let scale = 1.0 + coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let touch_tol = 1e-12 * scale;
    // Cauchy bound on root magnitude
    let bound = 1.0 + coeffs[1..].iter().fold(0.0f64, |m, c| m.max((c / lead).abs()));

    let mut breaks = vec![-bound];
    for c in roots_inner(&derivative(coeffs)) {
        if c > -bound && c < bound {
            breaks.push(c);
        }
    }
    breaks.push(bound);
    breaks.sort_by(|a, b| a.total_cmp(b));

    let mut roots = Vec::new();
    for &c in &breaks[1..breaks.len() - 1] {
        if poly_eval(coeffs, c).abs() <= touch_tol {
            roots.push(c);
        }
    }
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let (plo, phi) = (poly_eval(coeffs, lo), poly_eval(coeffs, hi));
        if plo * phi < 0.0 {
            roots.push(refine(coeffs, lo, hi, plo));
        }
    }

    roots.sort_by(|a, b| a.total_cmp(b));
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
    roots
}

fn refine(coeffs: &[f64], mut lo: f64, mut hi: f64, plo: f64) -> f64 {
    let lo_negative = plo < 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let pm = poly_eval(coeffs, mid);
        if pm == 0.0 {
            return mid;
        }
        if (pm < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut z = 0.5 * (lo + hi);
    let d = derivative(coeffs);
    for _ in 0..3 {
        let (p, dp) = (poly_eval(coeffs, z), poly_eval(&d, z));
        if dp == 0.0 {
            break;
        }
        let next = z - p / dp;
        if next.is_finite() && poly_eval(coeffs, next).abs() < p.abs() {
            z = next;
        } else {
            break;
        }
    }
    z
}
