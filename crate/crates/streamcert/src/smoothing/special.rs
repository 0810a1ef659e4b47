//! Gauss error function, standard normal CDF and its inverse.
//!
//! `erf` is the classic FreeBSD/SunPro rational approximation (the same one
//! behind most libm implementations), accurate to about one ulp — far inside
//! the 1e-7 absolute tolerance this crate promises. Accuracy is not assumed:
//! the oracle module re-derives all three functions by adaptive quadrature
//! and the test suites compare the two routes.

use crate::error::{Error, Result};

const ERX: f64 = 8.45062911510467529297e-01;

// Coefficients for approximation to erf on [0, 0.84375].
const EFX: f64 = 1.28379167095512586316e-01;
const EFX8: f64 = 1.02703333676410069053e+00;
const PP0: f64 = 1.28379167095512558561e-01;
const PP1: f64 = -3.25042107247001499370e-01;
const PP2: f64 = -2.84817495755985104766e-02;
const PP3: f64 = -5.77027029648944159157e-03;
const PP4: f64 = -2.37630166566501626084e-05;
const QQ1: f64 = 3.97917223959155352819e-01;
const QQ2: f64 = 6.50222499887672944485e-02;
const QQ3: f64 = 5.08130628187576562776e-03;
const QQ4: f64 = 1.32494738004321644526e-04;
const QQ5: f64 = -3.96022827877536812320e-06;

// Coefficients for approximation to erf on [0.84375, 1.25].
const PA0: f64 = -2.36211856075265944077e-03;
const PA1: f64 = 4.14856118683748331666e-01;
const PA2: f64 = -3.72207876035701323847e-01;
const PA3: f64 = 3.18346619901161753674e-01;
const PA4: f64 = -1.10894694282396677476e-01;
const PA5: f64 = 3.54783043256182359371e-02;
const PA6: f64 = -2.16637559486879084300e-03;
const QA1: f64 = 1.06420880400844228286e-01;
const QA2: f64 = 5.40397917702171048937e-01;
const QA3: f64 = 7.18286544141962662868e-02;
const QA4: f64 = 1.26171219808761642112e-01;
const QA5: f64 = 1.36370839120290507362e-02;
const QA6: f64 = 1.19844998467991074170e-02;

// Coefficients for approximation to erfc on [1.25, 1/0.35].
const RA0: f64 = -9.86494403484714822705e-03;
const RA1: f64 = -6.93858572707181764372e-01;
const RA2: f64 = -1.05586262253232909814e+01;
const RA3: f64 = -6.23753324503260060396e+01;
const RA4: f64 = -1.62396669462573470355e+02;
const RA5: f64 = -1.84605092906711035994e+02;
const RA6: f64 = -8.12874355063065934246e+01;
const RA7: f64 = -9.81432934416914548592e+00;
const SA1: f64 = 1.96512716674392571292e+01;
const SA2: f64 = 1.37657754143519042600e+02;
const SA3: f64 = 4.34565877475229228821e+02;
const SA4: f64 = 6.45387271733267880336e+02;
const SA5: f64 = 4.29008140027567833386e+02;
const SA6: f64 = 1.08635005541779435134e+02;
const SA7: f64 = 6.57024977031928170135e+00;
const SA8: f64 = -6.04244152148580987438e-02;

// Coefficients for approximation to erfc on [1/0.35, 6].
const RB0: f64 = -9.86494292470009928597e-03;
const RB1: f64 = -7.99283237680523006574e-01;
const RB2: f64 = -1.77579549177547519889e+01;
const RB3: f64 = -1.60636384855821916062e+02;
const RB4: f64 = -6.37566443368389627722e+02;
const RB5: f64 = -1.02509513161107724954e+03;
const RB6: f64 = -4.83519191608651397019e+02;
const SB1: f64 = 3.03380607434824582924e+01;
const SB2: f64 = 3.25792512996573918826e+02;
const SB3: f64 = 1.53672958608443695994e+03;
const SB4: f64 = 3.19985821950859553908e+03;
const SB5: f64 = 2.55305040643316442583e+03;
const SB6: f64 = 4.74528541206955367215e+02;
const SB7: f64 = -2.24409524465858183362e+01;

const VERY_TINY: f64 = 2.848094538889218e-306;
const SMALL: f64 = 3.725290298461914e-09; // 2^-28

fn erf_unchecked(x: f64) -> f64 {
    let sign = x < 0.0;
    let x = x.abs();
    let value = if x < 0.84375 {
        if x < SMALL {
            if x < VERY_TINY {
                0.125 * (8.0 * x + EFX8 * x)
            } else {
                x + EFX * x
            }
        } else {
            let z = x * x;
            let r = PP0 + z * (PP1 + z * (PP2 + z * (PP3 + z * PP4)));
            let s = 1.0 + z * (QQ1 + z * (QQ2 + z * (QQ3 + z * (QQ4 + z * QQ5))));
            x + x * (r / s)
        }
    } else if x < 1.25 {
        let s = x - 1.0;
        let p = PA0 + s * (PA1 + s * (PA2 + s * (PA3 + s * (PA4 + s * (PA5 + s * PA6)))));
        let q = 1.0 + s * (QA1 + s * (QA2 + s * (QA3 + s * (QA4 + s * (QA5 + s * QA6)))));
        ERX + p / q
    } else if x >= 6.0 {
        1.0
    } else {
        let s = 1.0 / (x * x);
        let (r, q) = if x < 1.0 / 0.35 {
            (
                RA0 + s * (RA1 + s * (RA2 + s * (RA3 + s * (RA4 + s * (RA5 + s * (RA6 + s * RA7)))))),
                1.0 + s
                    * (SA1
                        + s * (SA2
                            + s * (SA3 + s * (SA4 + s * (SA5 + s * (SA6 + s * (SA7 + s * SA8))))))),
            )
        } else {
            (
                RB0 + s * (RB1 + s * (RB2 + s * (RB3 + s * (RB4 + s * (RB5 + s * RB6))))),
                1.0 + s
                    * (SB1 + s * (SB2 + s * (SB3 + s * (SB4 + s * (SB5 + s * (SB6 + s * SB7)))))),
            )
        };
        // Split x into a pseudo-single-precision head for the exp argument.
        let z = f64::from_bits(x.to_bits() & 0xffff_ffff_0000_0000);
        let erfc = (-z * z - 0.5625).exp() * ((z - x) * (z + x) + r / q).exp() / x;
        1.0 - erfc
    };
    if sign {
        -value
    } else {
        value
    }
}

/// Gauss error function; odd, with values in `[-1, 1]`.
pub fn erf_approx(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::domain(format!("erf requires a finite input, got {x}")));
    }
    Ok(erf_unchecked(x))
}

pub(crate) fn std_normal_cdf_unchecked(x: f64) -> f64 {
    0.5 * (1.0 + erf_unchecked(x / std::f64::consts::SQRT_2))
}

/// Standard normal CDF, `Phi(x) = (1 + erf(x / sqrt(2))) / 2`.
pub fn std_normal_cdf(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::domain(format!("Phi requires a finite input, got {x}")));
    }
    Ok(std_normal_cdf_unchecked(x))
}

/// Standard normal quantile `Phi^{-1}(p)` for `p` strictly inside `(0, 1)`.
///
/// Computed by bisection on the CDF; the bracket `[-10, 10]` covers every
/// representable `p` away from the endpoints and the loop runs past the point
/// where the midpoint stops moving in f64.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!(
            "quantile requires p in the open interval (0, 1), got {p}"
        )));
    }
    let mut lo = -10.0_f64;
    let mut hi = 10.0_f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if std_normal_cdf_unchecked(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::quad;

    #[test]
    fn erf_of_zero_is_zero() {
        assert_eq!(erf_approx(0.0).unwrap(), 0.0);
    }

    #[test]
    fn erf_of_one_matches_integration_oracle() {
        // Frozen from the quadrature oracle: erf(1) = 0.8427007929497149.
        let v = erf_approx(1.0).unwrap();
        assert!((v - 0.8427008).abs() < 1e-6);
        assert!((v - quad::erf_by_quadrature(1.0)).abs() < 1e-9);
    }

    #[test]
    fn erf_is_odd() {
        for x in [0.3, 1.7] {
            assert_eq!(erf_approx(-x).unwrap(), -erf_approx(x).unwrap());
        }
    }

    #[test]
    fn erf_rejects_non_finite() {
        assert!(erf_approx(f64::NAN).is_err());
        assert!(erf_approx(f64::INFINITY).is_err());
    }

    #[test]
    fn erf_tracks_quadrature_over_a_grid() {
        for i in 0..=120 {
            let x = -6.0 + 0.1 * i as f64;
            let a = erf_approx(x).unwrap();
            let b = quad::erf_by_quadrature(x);
            assert!((a - b).abs() < 1e-9, "x={x}: {a} vs {b}");
            assert!((-1.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn cdf_reference_points() {
        assert_eq!(std_normal_cdf(0.0).unwrap(), 0.5);
        // Frozen from the quadrature oracle: Phi(1) = 0.8413447460685429.
        assert!((std_normal_cdf(1.0).unwrap() - 0.8413447).abs() < 1e-6);
        assert!(
            (std_normal_cdf(1.0).unwrap() - quad::std_normal_cdf_by_quadrature(1.0)).abs() < 1e-9
        );
    }

    #[test]
    fn cdf_symmetry_sums_to_one() {
        for x in [0.2, 0.9, 2.4, 4.0] {
            let s = std_normal_cdf(x).unwrap() + std_normal_cdf(-x).unwrap();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn quantile_reference_points() {
        assert!(std_normal_quantile(0.5).unwrap().abs() < 1e-9);
        // Frozen from bisection on the CDF quadrature oracle.
        assert!((std_normal_quantile(0.9).unwrap() - 1.281552).abs() < 1e-5);
    }

    #[test]
    fn quantile_round_trips_through_cdf() {
        for p in [0.01, 0.2, 0.5, 0.77, 0.999] {
            let x = std_normal_quantile(p).unwrap();
            assert!((std_normal_cdf(x).unwrap() - p).abs() < 1e-6);
        }
        for x in [-2.0, 0.7] {
            let p = std_normal_cdf(x).unwrap();
            assert!((std_normal_quantile(p).unwrap() - x).abs() < 1e-5);
        }
    }

    #[test]
    fn quantile_rejects_degenerate_probabilities() {
        for p in [0.0, 1.0, -0.1, 1.1, f64::NAN] {
            assert!(std_normal_quantile(p).is_err(), "p={p}");
        }
    }
}
