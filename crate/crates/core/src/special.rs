//! Special functions used by the distribution models.
//!
//! erf and erfc come from libm; the scaled erfcx switches to a Lentz
//! continued fraction for large arguments. Log-gamma via Lanczos;
//! regularized incomplete gamma via series / continued fraction.

use std::f64::consts::{PI, SQRT_2};

const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Where erfcx switches to the continued fraction.
const ERF_SPLIT: f64 = 2.5;

/// exp(x^2) * erfc(x) for x >= ERF_SPLIT, continued fraction.
fn erfcx_cf(x: f64) -> f64 {
    // erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    let mut n = 1.0;
    loop {
        let a = n / 2.0;
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        n += 1.0;
        if (delta - 1.0).abs() < EPS || n > 5000.0 {
            break;
        }
    }
    1.0 / (f * PI.sqrt())
}

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Scaled complementary error function, exp(x^2) erfc(x), for x >= 0.
pub fn erfcx(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < ERF_SPLIT {
        (x * x).exp() * libm::erfc(x)
    } else {
        erfcx_cf(x)
    }
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal upper tail, 1 - Phi(x).
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// ln(1 - Phi(x)), accurate far into the upper tail.
pub fn ln_norm_sf(x: f64) -> f64 {
    if x == f64::INFINITY {
        f64::NEG_INFINITY
    } else if x > 5.0 {
        (0.5 * erfcx(x / SQRT_2)).ln() - 0.5 * x * x
    } else {
        norm_sf(x).ln()
    }
}

/// ln Phi(x).
pub fn ln_norm_cdf(x: f64) -> f64 {
    ln_norm_sf(-x)
}

pub fn norm_ln_pdf(x: f64) -> f64 {
    -LN_SQRT_2PI - 0.5 * x * x
}

/// Inverse of the standard normal CDF.
///
/// Rational initial approximation followed by Halley refinement against
/// `norm_cdf`.
pub fn norm_ppf(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        // Refine on the smaller tail for precision.
        return -norm_ppf_tail(1.0 - p);
    }
    norm_ppf_tail(p)
}

fn norm_ppf_tail(p: f64) -> f64 {
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
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let mut x = if p < 0.02425 {
        let r = (-2.0 * p.ln()).sqrt();
        (((((C[0] * r + C[1]) * r + C[2]) * r + C[3]) * r + C[4]) * r + C[5])
            / ((((D[0] * r + D[1]) * r + D[2]) * r + D[3]) * r + 1.0)
    } else {
        let r0 = p - 0.5;
        let r = r0 * r0;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * r0
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    for _ in 0..2 {
        let e = norm_cdf(x) - p;
        let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

/// Natural log of the gamma function for x > 0 (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection.
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    LN_SQRT_2PI + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized lower incomplete gamma P(a, x).
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_cf(a, x)
    }
}

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_series(a, x)
    } else {
        gamma_cf(a, x)
    }
}

fn gamma_prefactor(a: f64, x: f64) -> f64 {
    (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..100_000 {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * gamma_prefactor(a, x)
}

fn gamma_cf(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..100_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    gamma_prefactor(a, x) * h
}

/// Inverse of P(a, .) in its second argument.
pub fn gamma_p_inv(a: f64, p: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let gln = ln_gamma(a);
    let a1 = a - 1.0;
    let (lna1, afac) = if a > 1.0 {
        let lna1 = a1.ln();
        (lna1, (a1 * (lna1 - 1.0) - gln).exp())
    } else {
        (0.0, 0.0)
    };
    let mut x = if a > 1.0 {
        let pp = if p < 0.5 { p } else { 1.0 - p };
        let t = (-2.0 * pp.ln()).sqrt();
        let mut z = (2.30753 + t * 0.27061) / (1.0 + t * (0.99229 + t * 0.04481)) - t;
        if p < 0.5 {
            z = -z;
        }
        (a * (1.0 - 1.0 / (9.0 * a) - z / (3.0 * a.sqrt())).powi(3)).max(1e-3)
    } else {
        let t = 1.0 - a * (0.253 + a * 0.12);
        if p < t {
            (p / t).powf(1.0 / a)
        } else {
            1.0 - (1.0 - (p - t) / (1.0 - t)).ln()
        }
    };
    for _ in 0..64 {
        if x <= 0.0 {
            return 0.0;
        }
        let err = gamma_p(a, x) - p;
        let t = if a > 1.0 {
            afac * (-(x - a1) + a1 * (x.ln() - lna1)).exp()
        } else {
            (-x + a1 * x.ln() - gln).exp()
        };
        if t == 0.0 {
            break;
        }
        let u = err / t;
        let step = u / (1.0 - 0.5 * (u * (a1 / x - 1.0)).min(1.0));
        x -= step;
        if x <= 0.0 {
            x = 0.5 * (x + step);
        }
        if step.abs() < 1e-14 * x {
            break;
        }
    }
    x
}

/// Digamma function for x > 0.
pub fn digamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 12.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + x.ln()
        - 0.5 * inv
        - inv2
            * (1.0 / 12.0
                - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 / 132.0))))
}

/// Trigamma function for x > 0.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 12.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + inv
        + 0.5 * inv2
        + inv * inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 / 30.0)))
}

/// ln(exp(a) - exp(b)) for a >= b.
pub fn ln_diff_exp(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    a + (-(b - a).exp()).ln_1p()
}

/// ln(Phi(hi) - Phi(lo)) for lo < hi, stable in both tails.
pub fn ln_norm_interval(lo: f64, hi: f64) -> f64 {
    if lo >= 0.0 {
        // Both in the upper half: use survival functions.
        ln_diff_exp(ln_norm_sf(lo), ln_norm_sf(hi))
    } else if hi <= 0.0 {
        ln_diff_exp(ln_norm_cdf(hi), ln_norm_cdf(lo))
    } else {
        (1.0 - norm_sf(hi) - norm_cdf(lo)).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erf_known_values() {
        assert_eq!(erf(0.0), 0.0);
        assert!((erf(1.0) - 0.842_700_792_949_714_9).abs() < 1e-15);
        assert!((erf(-0.5) + 0.520_499_877_813_046_5).abs() < 1e-15);
        assert!((erfc(3.0) - 2.209_049_699_858_544e-5).abs() < 1e-18);
        assert!((erfc(2.5) - 4.069_520_174_449_59e-4).abs() < 1e-16);
    }

    #[test]
    fn erf_grid_matches_mpmath() {
        // (x, erf(x), erfc(x)) at 40-digit working precision.
        let table: [(f64, f64, f64); 33] = [
        (-6.0, -9.9999999999999997848e-1, 1.9999999999999999785),
        (-5.63, -9.999999999999983075e-1, 1.9999999999999983075),
        (-5.26, -9.9999999999989836779e-1, 1.9999999999998983678),
        (-4.89, -9.9999999999533798166e-1, 1.9999999999953379817),
        (-4.52, -9.9999999983653262661e-1, 1.9999999998365326266),
        (-4.15, -9.9999999561532295225e-1, 1.9999999956153229522),
        (-3.78, -9.9999990994527646477e-1, 1.9999999099452764648),
        (-3.41, -9.9999858207393454077e-1, 1.9999985820739345408),
        (-3.04, -9.9998285914034605192e-1, 1.9999828591403460519),
        (-2.67, -9.9984060116883243622e-1, 1.9998406011688324362),
        (-2.3, -9.9885682340264334752e-1, 1.9988568234026433475),
        (-1.93, -9.9365565017049637381e-1, 1.9936556501704963738),
        (-1.56, -9.7262812202660020531e-1, 1.9726281220266002053),
        (-1.19, -9.076082859716850232e-1, 1.9076082859716850232),
        (-0.82, -7.5381075087496247902e-1, 1.753810750874962479),
        (-0.45, -4.7548171978692368555e-1, 1.4754817197869236856),
        (-0.08, -9.0078125841018162591e-2, 1.0900781258410181626),
        (0.29, 3.1828349586095224161e-1, 0.68171650413904775839),
        (0.66, 6.4937668796295424544e-1, 0.35062331203704575456),
        (1.03, 8.5478421145414839202e-1, 0.14521578854585160798),
        (1.4, 9.522851197626487964e-1, 0.0477148802373512036),
        (1.77, 9.8769094222432234131e-1, 0.012309057775677658689),
        (2.14, 9.975252926710696968e-1, 0.0024747073289303032039),
        (2.51, 9.9961429451827572022e-1, 0.00038570548172427977972),
        (2.88, 9.9995357562815894519e-1, 0.000046424371841054805289),
        (3.25, 9.9999569722053632488e-1, 4.3027794636751218305e-6),
        (3.62, 9.9999969357703446664e-1, 3.0642296553335871829e-7),
        (3.99, 9.9999998326078863548e-1, 1.6739211364520814057e-8),
        (4.36, 9.9999999929948135121e-1, 7.0051864879378806852e-10),
        (4.73, 9.9999999997756523356e-1, 2.2434766444008822664e-11),
        (5.1, 9.9999999999945061798e-1, 5.4938202175553198746e-13),
        (5.47, 9.9999999999998972032e-1, 1.0279675150414772162e-14),
        (5.84, 9.9999999999999985311e-1, 1.4688906460171278916e-16),
        ];
        for (x, e, ec) in table {
            assert!((erf(x) - e).abs() < 1e-15, "erf {x}: {} vs {e}", erf(x));
            assert!((erfc(x) - ec).abs() <= 4e-15 * ec, "erfc {x}: {} vs {ec}", erfc(x));
        }
    }

    #[test]
    fn erf_matches_high_precision() {
        // 30-digit reference values.
        let cases = [
            (2.6, 0.999_763_965_583_470_650_9, 2.360_344_165_293_490_878e-4),
            (2.712, 0.999_874_612_950_462_139_5, 1.253_870_495_378_605_459e-4),
            (4.0, 0.999_999_984_582_742_099_7, 1.541_725_790_028_001_885e-8),
        ];
        for (x, e, c) in cases {
            assert!((erf(x) - e).abs() < 2e-16, "erf {x}");
            assert!((erfc(x) - c).abs() < 1e-15 * c, "erfc {x}");
        }
    }

    #[test]
    fn ln_norm_sf_far_tail() {
        // Asymptotic: ln Q(x) ~ -x^2/2 - ln(x sqrt(2 pi))
        let x = 40.0_f64;
        let approx = -0.5 * x * x - (x * (2.0 * PI).sqrt()).ln() + (1.0 - 1.0 / (x * x)).ln();
        assert!((ln_norm_sf(x) - approx).abs() < 1e-5);
        assert!((ln_norm_sf(1.0) - norm_sf(1.0).ln()).abs() < 1e-14);
        assert!(ln_norm_cdf(-40.0).is_finite());
    }

    #[test]
    fn norm_ppf_roundtrip() {
        for &p in &[1e-12, 1e-6, 0.001, 0.02425, 0.1, 0.3, 0.5, 0.7, 0.975, 0.999_999] {
            let x = norm_ppf(p);
            assert!((norm_cdf(x) - p).abs() < 1e-15_f64.max(p * 1e-13), "p = {p}");
        }
        assert!((norm_ppf(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
    }

    #[test]
    fn ln_gamma_matches_statrs() {
        for &x in &[0.1, 0.5, 1.0, 1.5, 2.0, 3.7, 10.0, 171.0, 1e4] {
            let r = statrs::function::gamma::ln_gamma(x);
            assert!((ln_gamma(x) - r).abs() < 1e-12 * r.abs().max(1.0), "x = {x}");
        }
        assert!(ln_gamma(1.0).abs() < 1e-15);
        assert!((ln_gamma(5.0) - 24.0_f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn incomplete_gamma_matches_statrs() {
        for &a in &[0.3, 1.0, 2.0, 5.5, 40.0, 300.0] {
            for &x in &[1e-3, 0.1, 0.9, 2.0, 6.0, 35.0, 320.0] {
                let r = statrs::function::gamma::gamma_lr(a, x);
                assert!((gamma_p(a, x) - r).abs() < 1e-12, "a = {a}, x = {x}");
                assert!((gamma_p(a, x) + gamma_q(a, x) - 1.0).abs() < 1e-14);
            }
        }
        // P(1, x) = 1 - exp(-x)
        assert!((gamma_p(1.0, 0.7) - (1.0 - (-0.7_f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn gamma_p_inv_roundtrip() {
        for &a in &[0.2, 0.9, 1.0, 2.0, 7.5, 120.0] {
            for &p in &[1e-8, 0.01, 0.3, 0.5, 0.9, 0.999_99] {
                let x = gamma_p_inv(a, p);
                assert!((gamma_p(a, x) - p).abs() < 1e-12, "a = {a}, p = {p}");
            }
        }
    }

    #[test]
    fn polygamma_values() {
        let euler = 0.577_215_664_901_532_9;
        assert!((digamma(1.0) + euler).abs() < 1e-14);
        assert!((digamma(0.5) + euler + 2.0 * 2.0_f64.ln()).abs() < 1e-13);
        assert!((trigamma(1.0) - PI * PI / 6.0).abs() < 1e-13);
        assert!((trigamma(2.0) - (PI * PI / 6.0 - 1.0)).abs() < 1e-13);
    }

    #[test]
    fn norm_interval_tails() {
        let v = ln_norm_interval(-1.0, 1.0).exp();
        assert!((v - 0.682_689_492_137_085_9).abs() < 1e-15);
        let far = ln_norm_interval(30.0, f64::INFINITY);
        assert!((far - ln_norm_sf(30.0)).abs() < 1e-12);
        let neg = ln_norm_interval(f64::NEG_INFINITY, -30.0);
        assert!((neg - ln_norm_sf(30.0)).abs() < 1e-12);
    }
}
