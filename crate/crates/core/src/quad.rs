//! Adaptive quadrature on finite intervals.
//!
//! Adaptive Simpson with the usual Richardson error estimate. All integrands
//! in this crate are smooth after the substitutions applied by their callers
//! (the Marchenko–Pastur edge singularities are removed in
//! [`crate::spectral::mp_integral`]), so this converges quickly.

use crate::error::{Error, Result};

/// Integrate `f` over `[a, b]` to absolute tolerance `tol`.
///
/// The interval is first split into fixed panels so that narrow features
/// cannot hide between the probe points of a single coarse Simpson rule
/// (densities with well-separated modes would otherwise look like zero).
/// Returns a numerical error if the integrand is non-finite anywhere the
/// rule samples it, or if the recursion cannot reach the tolerance.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    const PANELS: usize = 16;
    let width = (b - a) / PANELS as f64;
    let panel_tol = tol / PANELS as f64;
    let mut total = 0.0;
    for k in 0..PANELS {
        let pa = a + width * k as f64;
        let pb = if k == PANELS - 1 { b } else { pa + width };
        let fa = eval(&f, pa)?;
        let fb = eval(&f, pb)?;
        let m = 0.5 * (pa + pb);
        let fm = eval(&f, m)?;
        let whole = simpson(pa, pb, fa, fm, fb);
        total += recurse(&f, pa, pb, fa, fm, fb, whole, panel_tol, MAX_DEPTH)?;
    }
    Ok(total)
}

const MAX_DEPTH: u32 = 60;

fn eval<F: Fn(f64) -> f64>(f: &F, x: f64) -> Result<f64> {
    let y = f(x);
    if y.is_finite() {
        Ok(y)
    } else {
        Err(Error::Numerical(format!(
            "integrand non-finite at x = {x}: {y}"
        )))
    }
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = eval(f, lm)?;
    let frm = eval(f, rm)?;
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol || b - a < 1e-14 * (a.abs() + b.abs() + 1.0) {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::Numerical(format!(
            "adaptive quadrature failed to reach tolerance {tol} on [{a}, {b}]"
        )));
    }
    let half = 0.5 * tol;
    Ok(recurse(f, a, m, fa, flm, fm, left, half, depth - 1)?
        + recurse(f, m, b, fm, frm, fb, right, half, depth - 1)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = adaptive_simpson(|x| 3.0 * x * x, 0.0, 2.0, 1e-12).unwrap();
        assert!((v - 8.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_mass() {
        let v = adaptive_simpson(
            |x| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            -10.0,
            10.0,
            1e-12,
        )
        .unwrap();
        assert!((v - 1.0).abs() < 1e-11, "got {v}");
    }

    #[test]
    fn oscillatory_integral() {
        // ∫_0^π sin x dx = 2
        let v = adaptive_simpson(f64::sin, 0.0, std::f64::consts::PI, 1e-12).unwrap();
        assert!((v - 2.0).abs() < 1e-11);
    }

    #[test]
    fn non_finite_integrand_is_an_error() {
        let r = adaptive_simpson(|x| 1.0 / x, -1.0, 1.0, 1e-10);
        assert!(matches!(r, Err(Error::Numerical(_))));
    }
}
