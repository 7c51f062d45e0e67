//! Outward-rounded dyadic interval arithmetic.
//!
//! An [`Interval`] is a pair of big-integer mantissas sharing one binary
//! exponent, `[lo * 2^exp, hi * 2^exp]`. Every operation rounds the lower
//! endpoint down and the upper endpoint up, so the result always encloses
//! the exact value of the operation applied to any points of the operands.
//! Mantissas are kept to roughly `precision` significant bits.

use std::cmp::Ordering;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Interval {
    lo: BigInt,
    hi: BigInt,
    exp: i64,
}

fn floor_shr(x: &BigInt, s: u64) -> BigInt {
    // num-bigint rounds right shifts of negative values toward -inf
    x >> s
}

fn ceil_shr(x: &BigInt, s: u64) -> BigInt {
    -((-x) >> s)
}

fn bit_len(x: &BigInt) -> u64 {
    x.magnitude().bits()
}

impl Interval {
    /// The degenerate interval `[n, n]`.
    pub fn from_integer(n: BigInt) -> Self {
        Interval {
            lo: n.clone(),
            hi: n,
            exp: 0,
        }
    }

    /// `[lo * 2^exp, hi * 2^exp]`; panics if `lo > hi`.
    pub fn from_dyadic(lo: BigInt, hi: BigInt, exp: i64) -> Self {
        assert!(lo <= hi, "interval endpoints out of order");
        Interval { lo, hi, exp }
    }

    /// Encloses a rational number with dyadic endpoints of about `precision`
    /// bits below the binary point of its magnitude.
    pub fn from_rational(x: &BigRational, precision: u32) -> Self {
        if x.denom().is_one() {
            return Interval::from_integer(x.numer().clone());
        }
        let scale = precision as i64 + bit_len(x.denom()) as i64;
        let scaled = x.numer() << scale as u64;
        let (q, r) = scaled.div_mod_floor(x.denom());
        let hi = if r.is_zero() { q.clone() } else { &q + 1 };
        Interval {
            lo: q,
            hi,
            exp: -scale,
        }
    }

    pub fn zero() -> Self {
        Interval::from_integer(BigInt::zero())
    }

    pub fn one() -> Self {
        Interval::from_integer(BigInt::one())
    }

    pub fn exponent(&self) -> i64 {
        self.exp
    }

    pub fn lower_mantissa(&self) -> &BigInt {
        &self.lo
    }

    pub fn upper_mantissa(&self) -> &BigInt {
        &self.hi
    }

    pub fn lower(&self) -> BigRational {
        dyadic_to_rational(&self.lo, self.exp)
    }

    pub fn upper(&self) -> BigRational {
        dyadic_to_rational(&self.hi, self.exp)
    }

    /// Width `hi - lo` as an exact rational.
    pub fn width(&self) -> BigRational {
        dyadic_to_rational(&(&self.hi - &self.lo), self.exp)
    }

    /// Midpoint approximation, for diagnostics only.
    pub fn to_f64(&self) -> f64 {
        let mid = (&self.lo + &self.hi) / 2;
        rational_to_f64(&dyadic_to_rational(&mid, self.exp))
    }

    pub fn contains_zero(&self) -> bool {
        self.lo.sign() != Sign::Plus && self.hi.sign() != Sign::Minus
    }

    pub fn is_positive(&self) -> bool {
        self.lo.is_positive()
    }

    pub fn contains_rational(&self, x: &BigRational) -> bool {
        &self.lower() <= x && x <= &self.upper()
    }

    /// True when every point of `self` is strictly below every point of `other`.
    pub fn strictly_below(&self, other: &Interval) -> bool {
        cmp_dyadic(&self.hi, self.exp, &other.lo, other.exp) == Ordering::Less
    }

    pub fn is_disjoint(&self, other: &Interval) -> bool {
        self.strictly_below(other) || other.strictly_below(self)
    }

    /// Drops low-order bits so that neither mantissa exceeds `precision` bits.
    pub fn rounded(mut self, precision: u32) -> Self {
        let len = bit_len(&self.lo).max(bit_len(&self.hi));
        let keep = precision.max(8) as u64;
        if len > keep {
            let s = len - keep;
            self.lo = floor_shr(&self.lo, s);
            self.hi = ceil_shr(&self.hi, s);
            self.exp += s as i64;
        }
        self
    }

    fn aligned(&self, other: &Interval) -> (BigInt, BigInt, BigInt, BigInt, i64) {
        let e = self.exp.min(other.exp);
        let sa = (self.exp - e) as u64;
        let sb = (other.exp - e) as u64;
        (
            &self.lo << sa,
            &self.hi << sa,
            &other.lo << sb,
            &other.hi << sb,
            e,
        )
    }

    pub fn add(&self, other: &Interval, precision: u32) -> Interval {
        let (alo, ahi, blo, bhi, e) = self.aligned(other);
        Interval {
            lo: alo + blo,
            hi: ahi + bhi,
            exp: e,
        }
        .rounded(precision)
    }

    pub fn sub(&self, other: &Interval, precision: u32) -> Interval {
        let (alo, ahi, blo, bhi, e) = self.aligned(other);
        Interval {
            lo: alo - bhi,
            hi: ahi - blo,
            exp: e,
        }
        .rounded(precision)
    }

    pub fn mul(&self, other: &Interval, precision: u32) -> Interval {
        let products = [
            &self.lo * &other.lo,
            &self.lo * &other.hi,
            &self.hi * &other.lo,
            &self.hi * &other.hi,
        ];
        let lo = products.iter().min().unwrap().clone();
        let hi = products.iter().max().unwrap().clone();
        Interval {
            lo,
            hi,
            exp: self.exp + other.exp,
        }
        .rounded(precision)
    }

    pub fn scale(&self, k: u64, precision: u32) -> Interval {
        Interval {
            lo: &self.lo * k,
            hi: &self.hi * k,
            exp: self.exp,
        }
        .rounded(precision)
    }

    pub fn abs(&self) -> Interval {
        if !self.lo.is_negative() {
            self.clone()
        } else if !self.hi.is_positive() {
            Interval {
                lo: -&self.hi,
                hi: -&self.lo,
                exp: self.exp,
            }
        } else {
            Interval {
                lo: BigInt::zero(),
                hi: self.hi.clone().max(-&self.lo),
                exp: self.exp,
            }
        }
    }

    /// `1 / self`, or `None` if the interval contains zero.
    pub fn recip(&self, precision: u32) -> Option<Interval> {
        if self.contains_zero() {
            return None;
        }
        // 1/[lo,hi] = [1/hi, 1/lo] with the mantissas divided into 2^k
        let k = precision as u64 + bit_len(&self.lo).max(bit_len(&self.hi)) + 2;
        let num = BigInt::one() << k;
        let lo = num.div_floor(&self.hi);
        let hi = div_ceil(&num, &self.lo);
        Some(
            Interval {
                lo,
                hi,
                exp: -(k as i64) - self.exp,
            }
            .rounded(precision),
        )
    }

    pub fn powi(&self, e: i64, precision: u32) -> Option<Interval> {
        let base = if e < 0 {
            self.recip(precision + 8)?
        } else {
            self.clone()
        };
        let mut n = e.unsigned_abs();
        let mut acc = Interval::one();
        let mut sq = base;
        while n > 0 {
            if n & 1 == 1 {
                acc = acc.mul(&sq, precision + 8);
            }
            n >>= 1;
            if n > 0 {
                sq = sq.mul(&sq, precision + 8);
            }
        }
        Some(acc.rounded(precision))
    }
}

fn div_ceil(a: &BigInt, b: &BigInt) -> BigInt {
    let (q, r) = a.div_mod_floor(b);
    if r.is_zero() {
        q
    } else {
        q + 1
    }
}

fn cmp_dyadic(a: &BigInt, ea: i64, b: &BigInt, eb: i64) -> Ordering {
    let e = ea.min(eb);
    let a = a << (ea - e) as u64;
    let b = b << (eb - e) as u64;
    a.cmp(&b)
}

pub(crate) fn dyadic_to_rational(m: &BigInt, exp: i64) -> BigRational {
    if exp >= 0 || m.is_zero() {
        BigRational::from_integer(m << exp.max(0) as u64)
    } else {
        // reduce by the common power of two instead of a gcd
        let tz = m.trailing_zeros().unwrap_or(0).min((-exp) as u64);
        BigRational::new_raw(m >> tz, BigInt::one() << ((-exp) as u64 - tz))
    }
}

/// Lossy conversion that survives numerators and denominators far beyond
/// the `f64` range.
pub fn rational_to_f64(x: &BigRational) -> f64 {
    if x.is_zero() {
        return 0.0;
    }
    let (n, d) = (x.numer(), x.denom());
    let shift = bit_len(n) as i64 - bit_len(d) as i64 - 60;
    let q = if shift >= 0 {
        n / (d << shift as u64)
    } else {
        (n << (-shift) as u64) / d
    };
    let mant: f64 = q.to_string().parse().unwrap_or(f64::NAN);
    mant * 2f64.powi(shift as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn from_rational_encloses() {
        let x = rat(1, 3);
        let iv = Interval::from_rational(&x, 64);
        assert!(iv.contains_rational(&x));
        assert!(iv.width() < rat(1, 1 << 40));
    }

    #[test]
    fn mul_and_recip_enclose_exact_values() {
        let a = Interval::from_rational(&rat(7, 5), 100);
        let b = Interval::from_rational(&rat(-3, 11), 100);
        assert!(a.mul(&b, 100).contains_rational(&rat(-21, 55)));
        let r = a.recip(100).unwrap();
        assert!(r.contains_rational(&rat(5, 7)));
        assert!(Interval::zero().recip(64).is_none());
    }

    #[test]
    fn powi_negative_exponent() {
        let a = Interval::from_integer(BigInt::from(3));
        let p = a.powi(-4, 80).unwrap();
        assert!(p.contains_rational(&rat(1, 81)));
        assert!(p.width() < rat(1, 1 << 60));
    }

    #[test]
    fn rounding_is_outward() {
        let iv = Interval::from_dyadic(BigInt::from(-1023), BigInt::from(1023), 0).rounded(8);
        assert!(iv.lower() <= rat(-1023, 1));
        assert!(iv.upper() >= rat(1023, 1));
    }

    #[test]
    fn ordering_predicates() {
        let a = Interval::from_rational(&rat(1, 3), 64);
        let b = Interval::from_rational(&rat(1, 2), 64);
        assert!(a.strictly_below(&b));
        assert!(a.is_disjoint(&b));
        assert!(!a.is_disjoint(&a));
        assert!(b.abs().is_positive());
        assert!(Interval::from_integer(BigInt::from(-2)).abs().is_positive());
    }

    #[test]
    fn f64_conversion_of_huge_rationals() {
        let big = BigRational::from_integer(BigInt::from(10).pow(400));
        let small = big.recip();
        let v = rational_to_f64(&(big.clone() * &small * rat(3, 2)));
        assert!((v - 1.5).abs() < 1e-12);
    }
}
