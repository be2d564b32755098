//! One-dimensional quadrature: adaptive Simpson with error control, composite
//! Gauss–Legendre as an independent cross-check, and geometric endpoint
//! splitting for integrands with a logarithmic singularity at the right
//! endpoint.

use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuadError {
    #[error(
        "quadrature error estimate {estimate:e} above tolerance {tol:e} after max subdivisions"
    )]
    ToleranceNotMet { estimate: f64, tol: f64 },
    #[error("non-finite integrand value at x = {x}")]
    NonFinite { x: f64 },
}

/// A quadrature value with its accumulated error estimate.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

const MAX_DEPTH: u32 = 48;

fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
    (fa + 4.0 * fm + fb) * h / 6.0
}

fn adaptive_step<F>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<Estimate, QuadError>
where
    F: Fn(f64) -> f64,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    if !flm.is_finite() {
        return Err(QuadError::NonFinite { x: lm });
    }
    if !frm.is_finite() {
        return Err(QuadError::NonFinite { x: rm });
    }
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let delta = left + right - whole;
    if depth >= MAX_DEPTH {
        return Ok(Estimate {
            value: left + right + delta / 15.0,
            error: delta.abs() / 15.0,
        });
    }
    if delta.abs() <= 15.0 * tol {
        return Ok(Estimate {
            value: left + right + delta / 15.0,
            error: delta.abs() / 15.0,
        });
    }
    let l = adaptive_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1)?;
    let r = adaptive_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1)?;
    Ok(Estimate {
        value: l.value + r.value,
        error: l.error + r.error,
    })
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64) -> Result<Estimate, QuadError>
where
    F: Fn(f64) -> f64,
{
    if a == b {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
        });
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    for (v, x) in [(fa, a), (fm, m), (fb, b)] {
        if !v.is_finite() {
            return Err(QuadError::NonFinite { x });
        }
    }
    let whole = simpson(fa, fm, fb, b - a);
    let est = adaptive_step(&f, a, b, fa, fm, fb, whole, tol, 0)?;
    if est.error > tol.max(1e-14 * est.value.abs()) * 64.0 {
        return Err(QuadError::ToleranceNotMet {
            estimate: est.error,
            tol,
        });
    }
    Ok(est)
}

/// Adaptive Simpson for an integrand over `[a, b)` whose only non-smooth
/// behaviour is an integrable logarithmic singularity at `b`. The interval is
/// split geometrically toward `b`: segments `[b - w_k, b - w_{k+1}]` with
/// `w_{k+1} = w_k / 2`, stopping once the tail bound falls below `tol`.
pub fn adaptive_simpson_log_endpoint<F>(
    f: F,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<Estimate, QuadError>
where
    F: Fn(f64) -> f64,
{
    let span = b - a;
    let mut value = 0.0;
    let mut error = 0.0;
    // Smooth head covers [a, b - span/2].
    let mut lo = a;
    let mut w = span * 0.5;
    loop {
        let hi = b - 0.5 * w;
        let seg = adaptive_simpson(&f, lo, hi, tol * 0.25)?;
        value += seg.value;
        error += seg.error;
        lo = hi;
        w *= 0.5;
        // |∫ g·log| over remaining width w is O(w log(1/w)); stop when negligible.
        let sample = f(b - 0.5 * w).abs();
        if w * (sample + 1.0) < tol || w < 1e-300 {
            // Close the last sliver with the midpoint value (integrable singularity).
            value += w * f(b - 0.5 * w);
            error += w * (sample + 1.0);
            break;
        }
    }
    Ok(Estimate { value, error })
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, computed by Newton
/// iteration on the Legendre polynomial.
fn gl_nodes(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Initial guess (Abramowitz–Stegun style).
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            // Evaluate P_n(x) and P_n'(x) via the three-term recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let mut p0 = 1.0;
        let mut p1 = x;
        for k in 2..=n {
            let kf = k as f64;
            let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((-x, w));
    }
    out
}

const GL_ORDER: usize = 24;

fn gl24() -> &'static [(f64, f64)] {
    static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    NODES.get_or_init(|| gl_nodes(GL_ORDER))
}

/// Composite Gauss–Legendre quadrature with `panels` equal panels.
pub fn gauss_legendre<F>(f: F, a: f64, b: f64, panels: usize) -> f64
where
    F: Fn(f64) -> f64,
{
    let nodes = gl24();
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        let mut acc = 0.0;
        for &(t, w) in nodes {
            acc += w * f(mid + 0.5 * h * t);
        }
        total += acc * 0.5 * h;
    }
    total
}

/// Composite Gauss–Legendre with geometric panels toward a logarithmic
/// singularity at `b`.
pub fn gauss_legendre_log_endpoint<F>(f: F, a: f64, b: f64, tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    let span = b - a;
    let mut value = gauss_legendre(&f, a, b - 0.5 * span, 8);
    let mut w = span * 0.5;
    loop {
        let seg = gauss_legendre(&f, b - w, b - 0.5 * w, 2);
        value += seg;
        w *= 0.5;
        let sample = f(b - 0.5 * w).abs();
        if w * (sample + 1.0) < tol || w < 1e-300 {
            value += w * f(b - 0.5 * w);
            break;
        }
    }
    value
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_polynomial_is_tight() {
        let est = adaptive_simpson(|x| x * x * x - x + 2.0, 0.0, 2.0, 1e-12).unwrap();
        assert!((est.value - (4.0 - 2.0 + 4.0)).abs() < 1e-12);
    }

    #[test]
    fn simpson_smooth_transcendental() {
        // int_0^1 (1+x)^(2+x) dx, cross-checked against multiprecision quadrature.
        let reference = 3.311382077606795;
        let est = adaptive_simpson(|x| (1.0 + x).powf(2.0 + x), 0.0, 1.0, 1e-12).unwrap();
        assert!((est.value - reference).abs() < 1e-11, "{}", est.value);
        let gl = gauss_legendre(|x| (1.0 + x).powf(2.0 + x), 0.0, 1.0, 8);
        assert!((gl - reference).abs() < 1e-13);
    }

    #[test]
    fn log_endpoint_exact_value() {
        // int_0^1 ln(1-x) dx = -1
        let est = adaptive_simpson_log_endpoint(|x| (1.0 - x).ln(), 0.0, 1.0, 1e-11).unwrap();
        assert!((est.value + 1.0).abs() < 1e-10, "{}", est.value);
        let gl = gauss_legendre_log_endpoint(|x| (1.0 - x).ln(), 0.0, 1.0, 1e-11);
        assert!((gl + 1.0).abs() < 1e-10);
    }

    #[test]
    fn log_endpoint_with_weight() {
        // int_0^1 x ln(1-x) dx = -3/4
        let est = adaptive_simpson_log_endpoint(|x| x * (1.0 - x).ln(), 0.0, 1.0, 1e-11).unwrap();
        assert!((est.value + 0.75).abs() < 1e-10);
    }

    #[test]
    fn rejects_nonfinite() {
        assert!(matches!(
            adaptive_simpson(|x| 1.0 / x, 0.0, 1.0, 1e-10),
            Err(QuadError::NonFinite { .. })
        ));
    }

    #[test]
    fn gl_nodes_integrate_high_degree_exactly() {
        // 24-point GL is exact through degree 47.
        let val = gauss_legendre(|x| x.powi(40), -1.0, 1.0, 1);
        assert!((val - 2.0 / 41.0).abs() < 1e-14);
    }
}
