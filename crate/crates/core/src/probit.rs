//! Standard normal functions behind the probit link.
//!
//! The lower tail is evaluated through `erfc` and a scaled complementary
//! error function, so the truncated-Gaussian corrections [`v_correction`] and
//! [`w_correction`] stay accurate when the argument is far below zero.

use core::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use crate::error::Error;

/// `1 / sqrt(2π)`
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
/// `sqrt(2 / π)`
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

/// Above this argument the scaled complementary error function switches from
/// `exp(x²)·erfc(x)` to its continued fraction.
const ERFCX_CF_THRESHOLD: f64 = 5.0;

/// Standard normal density.
#[inline]
pub fn phi_pdf(t: f64) -> f64 {
    INV_SQRT_2PI * libm::exp(-0.5 * t * t)
}

/// Standard normal cumulative distribution function.
///
/// Both tails are computed from `erfc` directly, never as `1 - Φ(-t)`, so the
/// relative error stays near machine precision until the result underflows
/// (around `t = -38.5`).
#[inline]
pub fn phi_cdf(t: f64) -> f64 {
    0.5 * libm::erfc(-t * FRAC_1_SQRT_2)
}

/// Inverse of [`phi_cdf`].
///
/// Acklam's rational approximation followed by two Halley steps against
/// [`phi_cdf`]. The upper half is mapped onto the lower tail, where the
/// refinement is well conditioned.
pub fn phi_inv(p: f64) -> Result<f64, Error> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::ProbabilityDomain(p));
    }
    if p > 0.5 {
        // 1 - p is exact for p in (0.5, 1).
        return Ok(-lower_inv(1.0 - p));
    }
    Ok(lower_inv(p))
}

fn lower_inv(p: f64) -> f64 {
    let mut x = acklam(p);
    for _ in 0..2 {
        let e = phi_cdf(x) - p;
        let u = e / phi_pdf(x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] =
        [7.784_695_709_041_462e-3, 3.224_671_290_700_398e-1, 2.445_134_137_142_996, 3.754_408_661_907_416];
    const P_LOW: f64 = 0.024_25;

    if p < P_LOW {
        let q = libm::sqrt(-2.0 * libm::log(p));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Scaled complementary error function `exp(x²)·erfc(x)` for `x >= 0`.
fn erfcx_nonneg(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < ERFCX_CF_THRESHOLD {
        return libm::exp(x * x) * libm::erfc(x);
    }
    // erfc(x) = exp(-x²)/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    // evaluated with the modified Lentz algorithm.
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for n in 1..500 {
        let a = 0.5 * n as f64;
        d = x + a * d;
        if d == 0.0 {
            d = TINY;
        }
        c = x + a / c;
        if c == 0.0 {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / (libm::sqrt(PI) * f)
}

/// `v(t) = φ(t) / Φ(t)`, the mean shift of a Gaussian truncated below at `-t`.
///
/// For negative `t` the common `exp(-t²/2)` factor is cancelled analytically,
/// leaving `sqrt(2/π) / erfcx(-t/√2)`, which never divides by an underflowed
/// cdf.
pub fn v_correction(t: f64) -> f64 {
    if t >= 0.0 {
        phi_pdf(t) / phi_cdf(t)
    } else {
        SQRT_2_OVER_PI / erfcx_nonneg(-t / SQRT_2)
    }
}

/// `w(t) = v(t)·(v(t) + t)`, the variance shrink factor of the same truncation.
pub fn w_correction(t: f64) -> f64 {
    let v = v_correction(t);
    v * (v + t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn pdf_values() {
        assert!((phi_pdf(0.0) - 0.398_942_280_401_432_7).abs() < 1e-16);
        assert!(rel(phi_pdf(1.0), 0.241_970_724_519_143_35) < 1e-15);
        assert_eq!(phi_pdf(-1.0), phi_pdf(1.0));
    }

    #[test]
    fn cdf_values() {
        assert_eq!(phi_cdf(0.0), 0.5);
        assert!((phi_cdf(1.281_551_565_544_600_4) - 0.9).abs() < 1e-15);
        // 50-digit reference values
        assert!(rel(phi_cdf(-10.0), 7.619_853_024_160_526e-24) < 1e-12);
        assert!(rel(phi_cdf(-20.0), 2.753_624_118_606_233_7e-89) < 1e-12);
        assert!(rel(phi_cdf(-30.0), 4.906_713_927_148_187e-198) < 1e-12);
        assert!(rel(phi_cdf(-5.0), 2.866_515_718_791_939e-7) < 1e-12);
    }

    #[test]
    fn inverse_values() {
        assert_eq!(phi_inv(0.5).unwrap(), 0.0);
        assert!((phi_inv(0.9).unwrap() - 1.281_551_565_544_600_4).abs() < 1e-14);
        assert!((phi_inv(0.1).unwrap() + 1.281_551_565_544_600_4).abs() < 1e-14);
        assert!(rel(phi_inv(1e-6).unwrap(), -4.753_424_308_822_899) < 1e-13);
    }

    #[test]
    fn inverse_rejects_closed_endpoints() {
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(phi_inv(p), Err(Error::ProbabilityDomain(_))), "{p}");
        }
    }

    #[test]
    fn corrections_at_reference_points() {
        assert!((v_correction(0.0) - 0.797_884_560_802_865_4).abs() < 1e-15);
        assert!((w_correction(0.0) - 0.636_619_772_367_581_3).abs() < 1e-15);
        let cases = [
            (-30.0, 30.033_259_667_433_677, 0.998_896_228_488_109_9),
            (-20.0, 20.049_753_068_527_85, 0.997_536_738_384_947_8),
            (-10.0, 10.098_093_233_962_512, 0.990_554_622_174_343_7),
            (-8.0, 8.121_368_112_236_113, 0.985_675_116_556_659_1),
            (2.0, 0.055_247_862_678_989_96, 0.113_548_051_688_576_45),
            (5.0, 1.486_719_940_904_905_7e-6, 7.433_601_914_860_711e-6),
        ];
        for (t, v, w) in cases {
            assert!(rel(v_correction(t), v) < 1e-10, "v({t}) = {}", v_correction(t));
            assert!(rel(w_correction(t), w) < 1e-8, "w({t}) = {}", w_correction(t));
        }
    }

    #[test]
    fn erfcx_branches_agree_at_threshold() {
        let x = ERFCX_CF_THRESHOLD;
        let direct = libm::exp(x * x) * libm::erfc(x);
        assert!(rel(erfcx_nonneg(x), direct) < 1e-13);
        assert!(rel(erfcx_nonneg(x - 1e-9), direct) < 1e-8);
    }
}
