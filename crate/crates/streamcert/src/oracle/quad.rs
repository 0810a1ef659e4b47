//! Numerical-integration oracles.
//!
//! Everything here is computed by adaptive quadrature over raw densities and
//! deliberately shares no code with the closed-form special functions in
//! [`crate::smoothing::special`]; agreement between the two routes is what
//! the verification suite checks.

use crate::error::{Error, Result};
use crate::smoothing::{SmoothingKind, SmoothingSpec};
use crate::vecops;

const MAX_DEPTH: u32 = 60;

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

fn adaptive_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth >= MAX_DEPTH || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        adaptive_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1)
            + adaptive_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1)
    }
}

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    adaptive_step(&f, a, b, fa, fm, fb, whole, tol, 0)
}

/// Gauss error function by direct quadrature of `(2/sqrt(pi)) exp(-t^2)`.
pub fn erf_by_quadrature(x: f64) -> f64 {
    // erf is odd and saturates to within 1e-17 of +-1 past |x| = 6.
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs().min(6.0);
    let two_over_sqrt_pi = 2.0 / std::f64::consts::PI.sqrt();
    sign * two_over_sqrt_pi * integrate(|t| (-t * t).exp(), 0.0, x, 1e-12)
}

/// Standard normal CDF by quadrature of the density from the origin.
pub fn std_normal_cdf_by_quadrature(x: f64) -> f64 {
    let clamped = x.clamp(-9.0, 9.0);
    let inv_sqrt_2pi = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    0.5 + integrate(|t| inv_sqrt_2pi * (-0.5 * t * t).exp(), 0.0, clamped, 1e-12)
}

fn normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Total variation between two univariate normals with common `sigma` whose
/// means are `distance` apart, by adaptive quadrature of `|p - q| / 2`.
///
/// The integrand has a kink where the densities cross (the midpoint), so the
/// integral is split there and each smooth half is integrated separately.
pub fn univariate_normal_tv(sigma: f64, distance: f64) -> Result<f64> {
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(Error::domain(format!("sigma must be positive, got {sigma}")));
    }
    if distance < 0.0 || !distance.is_finite() {
        return Err(Error::domain(format!(
            "distance must be nonnegative, got {distance}"
        )));
    }
    if distance == 0.0 {
        return Ok(0.0);
    }
    let f = |x: f64| (normal_pdf(x, 0.0, sigma) - normal_pdf(x, distance, sigma)).abs();
    let mid = 0.5 * distance;
    let lo = (-9.0 * sigma).min(mid - 9.0 * sigma);
    let hi = (distance + 9.0 * sigma).max(mid + 9.0 * sigma);
    let tv = 0.5 * (integrate(f, lo, mid, 1e-10) + integrate(f, mid, hi, 1e-10));
    Ok(tv.clamp(0.0, 1.0))
}

/// Exact total variation between two axis-aligned uniform boxes of width `b`
/// per coordinate centered at points separated by `shift` in each coordinate.
///
/// The densities are products, so the overlap mass factorises into per-axis
/// overlap fractions; TV is one minus the common mass.
pub fn uniform_box_tv(b: f64, shift: &[f64]) -> Result<f64> {
    if b <= 0.0 || !b.is_finite() {
        return Err(Error::domain(format!("box width must be positive, got {b}")));
    }
    let mut overlap = 1.0;
    for &s in shift {
        overlap *= (1.0 - s.abs() / b).max(0.0);
    }
    Ok(1.0 - overlap)
}

/// Exact total variation between two rows of a discrete smoothing kernel.
pub fn discrete_tv(row_a: &[f64], row_b: &[f64]) -> f64 {
    debug_assert_eq!(row_a.len(), row_b.len());
    0.5 * row_a
        .iter()
        .zip(row_b)
        .map(|(p, q)| (p - q).abs())
        .sum::<f64>()
}

/// Total variation between the smoothing distributions of `spec` centered at
/// `x` and `x_prime`, computed without using the closed-form `psi`.
///
/// The Gaussian case reduces to one dimension by isotropy: only the
/// center-to-center distance matters, so the multivariate TV equals the
/// univariate TV at the same separation.
pub fn numeric_tv(spec: &SmoothingSpec, x: &[f64], x_prime: &[f64]) -> Result<f64> {
    if x.len() != x_prime.len() {
        return Err(Error::domain(format!(
            "dimension mismatch: {} vs {}",
            x.len(),
            x_prime.len()
        )));
    }
    match spec.kind() {
        SmoothingKind::GaussianIso { sigma } => {
            univariate_normal_tv(*sigma, vecops::l2_distance(x, x_prime))
        }
        SmoothingKind::UniformBox { b } => {
            let shift: Vec<f64> = x.iter().zip(x_prime).map(|(a, c)| a - c).collect();
            uniform_box_tv(*b, &shift)
        }
        SmoothingKind::Empirical { .. } => Err(Error::Unsupported(
            "numeric TV is not defined for an empirical envelope spec".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly_enough() {
        let v = integrate(|x| x * x, 0.0, 3.0, 1e-12);
        assert!((v - 9.0).abs() < 1e-10);
        let v = integrate(|x| x.sin(), 0.0, std::f64::consts::PI, 1e-12);
        assert!((v - 2.0).abs() < 1e-10);
    }

    #[test]
    fn erf_quadrature_reference_points() {
        // Reference values from the standard tables.
        assert!(erf_by_quadrature(0.0).abs() < 1e-15);
        assert!((erf_by_quadrature(1.0) - 0.8427007929497149).abs() < 1e-9);
        assert!((erf_by_quadrature(-1.0) + 0.8427007929497149).abs() < 1e-9);
        assert!((erf_by_quadrature(2.0) - 0.9953222650189527).abs() < 1e-9);
    }

    #[test]
    fn normal_cdf_quadrature_reference_points() {
        assert!((std_normal_cdf_by_quadrature(0.0) - 0.5).abs() < 1e-15);
        assert!((std_normal_cdf_by_quadrature(1.0) - 0.8413447460685429).abs() < 1e-9);
        assert!((std_normal_cdf_by_quadrature(-1.0) - 0.15865525393145707).abs() < 1e-9);
    }

    #[test]
    fn normal_tv_zero_distance_is_zero() {
        assert_eq!(univariate_normal_tv(1.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn normal_tv_at_two_sqrt_two_is_erf_of_one() {
        let tv = univariate_normal_tv(1.0, 2.0 * std::f64::consts::SQRT_2).unwrap();
        assert!((tv - 0.842701).abs() < 1e-4, "tv {tv}");
    }

    #[test]
    fn normal_tv_closed_form_cross_check() {
        // TV of N(0, s^2) and N(d, s^2) equals Phi(d/2s) - Phi(-d/2s); check
        // the quadrature against the CDF quadrature (two independent integrals).
        for (sigma, d) in [(1.0, 1.0), (0.5, 2.0), (2.0, 3.0)] {
            let tv = univariate_normal_tv(sigma, d).unwrap();
            let h = d / (2.0 * sigma);
            let expect = std_normal_cdf_by_quadrature(h) - std_normal_cdf_by_quadrature(-h);
            assert!(
                (tv - expect).abs() < 1e-8,
                "sigma={sigma} d={d}: tv={tv} expect={expect}"
            );
        }
    }

    #[test]
    fn uniform_tv_one_dimensional_shift() {
        assert!((uniform_box_tv(2.0, &[1.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!((uniform_box_tv(2.0, &[2.5]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(uniform_box_tv(2.0, &[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn discrete_tv_disjoint_rows() {
        assert_eq!(discrete_tv(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
        assert_eq!(discrete_tv(&[0.5, 0.5], &[0.5, 0.5]), 0.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(univariate_normal_tv(-1.0, 1.0).is_err());
        assert!(univariate_normal_tv(1.0, -0.5).is_err());
        assert!(uniform_box_tv(0.0, &[1.0]).is_err());
    }
}
