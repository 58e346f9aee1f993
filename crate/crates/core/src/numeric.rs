//! Small numeric kernels shared across modules: double-double accumulation,
//! compensated summation, exact unit roots and tie-to-even rounding.

use num_complex::Complex64;
use std::f64::consts::TAU;

/// Unevaluated sum `hi + lo` carrying roughly 106 bits of significand.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    /// `1 - p` represented exactly.
    pub fn one_minus(p: f64) -> Dd {
        let (hi, lo) = two_sum(1.0, -p);
        Dd { hi, lo }
    }

    pub fn from_f64(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    #[inline]
    pub fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (hi, lo) = quick_two_sum(s, e + self.lo + o.lo);
        Dd { hi, lo }
    }

    #[inline]
    pub fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        let (hi, lo) = quick_two_sum(p, e + self.hi * o.lo + self.lo * o.hi);
        Dd { hi, lo }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// `e(num/den) = exp(2πi·num/den)` with the fraction reduced exactly in integer
/// arithmetic, so the trig argument always lies in `[-π, π]`.
pub fn unit_root(num: i128, den: u64) -> Complex64 {
    assert!(den > 0, "unit_root needs a positive denominator");
    let d = den as i128;
    let mut r = num.rem_euclid(d);
    if 2 * r > d {
        r -= d;
    }
    if r == 0 {
        return Complex64::new(1.0, 0.0);
    }
    if 2 * r == d || 2 * r == -d {
        return Complex64::new(-1.0, 0.0);
    }
    if 4 * r == d {
        return Complex64::new(0.0, 1.0);
    }
    if 4 * r == -d {
        return Complex64::new(0.0, -1.0);
    }
    let theta = TAU * (r as f64) / (den as f64);
    Complex64::new(theta.cos(), theta.sin())
}

/// `e(x)` for a real `x`, reducing `x mod 1` before the trig calls.
pub fn unit_root_real(x: f64) -> Complex64 {
    let mut r = x - x.round();
    if r == -0.5 {
        r = 0.5;
    }
    let theta = TAU * r;
    Complex64::new(theta.cos(), theta.sin())
}

/// Nearest integer, ties to even.
pub fn round_half_even(x: f64) -> f64 {
    x.round_ties_even()
}

/// Halton radical inverse of `index` in `base`.
pub(crate) fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while index > 0 {
        r += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    r
}

pub(crate) const PRIMES: [u64; 24] =
    [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89];

pub(crate) fn prime(i: usize) -> u64 {
    if i < PRIMES.len() {
        return PRIMES[i];
    }
    let mut c = PRIMES[PRIMES.len() - 1];
    let mut found = PRIMES.len() - 1;
    while found < i {
        c += 2;
        if (3..).step_by(2).take_while(|d| d * d <= c).all(|d| c % d != 0) {
            found += 1;
        }
    }
    c
}
