//! Laplace-domain fundamental solution of the 2D wave equation.
//!
//! For `Re s > 0` the kernel `(i/4) H_0^(1)(i s r)` coincides with
//! `K_0(s r) / (2π)`, so everything here is built on the modified Bessel
//! function of the second kind evaluated in the right half-plane.
//!
//! `K_0` uses three regimes:
//! - `|z| <= 3`: ascending series with the logarithmic term,
//! - `3 < |z| < 20`: Steed's continued fraction (Temme's CF2),
//! - `|z| >= 20`: the Hankel asymptotic expansion, truncated once the
//!   terms fall below machine precision.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const SERIES_RADIUS: f64 = 3.0;
const ASYMPTOTIC_RADIUS: f64 = 20.0;
/// `exp(-z)` underflows beyond this real part.
const UNDERFLOW_REAL_PART: f64 = 740.0;

/// A Laplace-domain frequency with positive real part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceFrequency(Complex64);

impl LaplaceFrequency {
    pub fn new(s: Complex64) -> Result<Self> {
        if !(s.re > 0.0) || !s.im.is_finite() || !s.re.is_finite() {
            return Err(Error::OutsideHalfPlane {
                value: format!("{s}"),
            });
        }
        Ok(Self(s))
    }

    pub fn real(s: f64) -> Result<Self> {
        Self::new(Complex64::new(s, 0.0))
    }

    pub fn value(self) -> Complex64 {
        self.0
    }

    pub fn conj(self) -> Self {
        Self(self.0.conj())
    }
}

/// Modified Bessel function `K_0(z)` for `Re z > 0`.
///
/// Arguments whose real part is so large that `exp(-z)` underflows return
/// zero.
pub fn bessel_k0(z: Complex64) -> Result<Complex64> {
    if !(z.re > 0.0) || !z.im.is_finite() {
        return Err(Error::OutsideHalfPlane {
            value: format!("{z}"),
        });
    }
    Ok(k0(z))
}

/// `K_0(s r) / (2π)`, the 2D Laplace-domain Green's function at distance `r`.
pub fn green2d(s: LaplaceFrequency, r: f64) -> Result<Complex64> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::arg("r", format!("distance must be positive, got {r}")));
    }
    Ok(k0(s.0 * r) / (2.0 * PI))
}

/// Unchecked `K_0`; callers guarantee `Re z > 0`.
#[inline]
pub(crate) fn k0(z: Complex64) -> Complex64 {
    if z.re > UNDERFLOW_REAL_PART {
        return Complex64::new(0.0, 0.0);
    }
    let modulus_sq = z.norm_sqr();
    if modulus_sq <= SERIES_RADIUS * SERIES_RADIUS {
        k0_series(z)
    } else if modulus_sq < ASYMPTOTIC_RADIUS * ASYMPTOTIC_RADIUS {
        k0_continued_fraction(z)
    } else {
        k0_asymptotic(z)
    }
}

/// `K_0(z) = -(ln(z/2) + γ) I_0(z) + Σ_{k≥1} (z²/4)^k / (k!)² H_k`.
fn k0_series(z: Complex64) -> Complex64 {
    let quarter_sq = z * z * 0.25;
    let mut term = Complex64::new(1.0, 0.0);
    let mut i0 = term;
    let mut tail = Complex64::new(0.0, 0.0);
    let mut harmonic = 0.0;
    for k in 1..60 {
        let kf = k as f64;
        term = term * quarter_sq / (kf * kf);
        harmonic += 1.0 / kf;
        i0 += term;
        tail += term * harmonic;
        if term.norm_sqr() * harmonic * harmonic < 1e-34 * tail.norm_sqr().max(i0.norm_sqr()) {
            break;
        }
    }
    -((z * 0.5).ln() + EULER_GAMMA) * i0 + tail
}

/// Steed's algorithm for Temme's second continued fraction, order zero.
fn k0_continued_fraction(z: Complex64) -> Complex64 {
    let one = Complex64::new(1.0, 0.0);
    let mut b = (one + z) * 2.0;
    let mut d = one / b;
    let mut h = d;
    let mut delh = d;
    let mut q1 = Complex64::new(0.0, 0.0);
    let mut q2 = one;
    let a1 = 0.25;
    let mut q = Complex64::new(a1, 0.0);
    let mut c = a1;
    let mut a = -a1;
    let mut s = one + q * delh;
    for i in 1..2000 {
        let fi = i as f64;
        a -= 2.0 * fi;
        c = -a * c / (fi + 1.0);
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += qnew * c;
        b += 2.0;
        d = one / (b + d * a);
        delh = (b * d - one) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if dels.norm_sqr() < 1e-34 * s.norm_sqr() {
            break;
        }
    }
    (FRAC_PI_2 / z).sqrt() * (-z).exp() / s
}

/// `K_0(z) ~ sqrt(π/(2z)) e^{-z} Σ_k (-1)^k ((2k-1)!!)² / (k! (8z)^k)`.
fn k0_asymptotic(z: Complex64) -> Complex64 {
    let inv8z = 1.0 / (8.0 * z);
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = term;
    for k in 0..60 {
        let kf = k as f64;
        let odd = 2.0 * kf + 1.0;
        term = -term * inv8z * (odd * odd / (kf + 1.0));
        sum += term;
        if term.norm_sqr() < 1e-34 * sum.norm_sqr() {
            break;
        }
    }
    (FRAC_PI_2 / z).sqrt() * (-z).exp() * sum
}
