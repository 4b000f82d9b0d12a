//! Exact arithmetic helpers shared by the symbolic and oracle layers.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::Error;

/// Arbitrary precision rational used for every exact quantity in the crate.
pub type Rational = BigRational;

pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

/// Parses `3`, `-1/2` or a finite decimal such as `0.25` into an exact rational.
pub fn parse_rational(text: &str) -> Result<Rational, Error> {
    let s = text.trim();
    let bad = || Error::Parse(format!("not a rational number: {text:?}"));
    if s.is_empty() {
        return Err(bad());
    }
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(Rational::new(n, d));
    }
    if let Some((whole, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let negative = whole.starts_with('-');
        let digits = format!("{}{}", whole.trim_start_matches(['-', '+']), frac);
        let mut value: BigInt = digits.parse().map_err(|_| bad())?;
        if negative {
            value = -value;
        }
        let den = num_traits::pow(BigInt::from(10), frac.len());
        return Ok(Rational::new(value, den));
    }
    let n: BigInt = s.parse().map_err(|_| bad())?;
    Ok(Rational::from_integer(n))
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Renders `p/q`, or `p` for integers.
pub fn fmt_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn factorial(n: u64) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, v| acc * BigInt::from(v))
}

pub fn binomial(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

/// `n (n-1) ... (n-m+1)`, zero when `m > n`.
pub fn falling_factorial(n: u64, m: u64) -> BigInt {
    if m > n {
        return BigInt::zero();
    }
    (0..m).fold(BigInt::one(), |acc, i| acc * BigInt::from(n - i))
}

/// Exact element `rational + root * sqrt(n)` of the quadratic field over `n`.
///
/// Finite-N moments of bounded diagonal entries pick up half-integer powers of
/// `N`; keeping the two components apart keeps every oracle value exact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Surd {
    pub rational: Rational,
    pub root: Rational,
    pub n: u64,
}

impl Surd {
    pub fn zero(n: u64) -> Self {
        Self { rational: Rational::zero(), root: Rational::zero(), n }
    }

    pub fn one(n: u64) -> Self {
        Self::from_rational(Rational::one(), n)
    }

    pub fn from_rational(r: Rational, n: u64) -> Self {
        Self { rational: r, root: Rational::zero(), n }
    }

    /// `c * n^(e/2)` for an integer half-exponent `e`.
    pub fn scaled_power(c: Rational, half_exponent: i64, n: u64) -> Self {
        let nn = Rational::from_integer(BigInt::from(n));
        let whole = Integer::div_floor(&half_exponent, &2);
        let odd = Integer::mod_floor(&half_exponent, &2) == 1;
        let base = if whole >= 0 {
            num_traits::pow(nn, whole as usize)
        } else {
            num_traits::pow(nn, (-whole) as usize).recip()
        };
        let value = c * base;
        if odd {
            Self { rational: Rational::zero(), root: value, n }
        } else {
            Self { rational: value, root: Rational::zero(), n }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.rational.is_zero() && self.root.is_zero()
    }

    /// The value as a rational, when the `sqrt(n)` component vanishes.
    pub fn as_rational(&self) -> Option<&Rational> {
        self.root.is_zero().then_some(&self.rational)
    }

    pub fn to_f64(&self) -> f64 {
        to_f64(&self.rational) + to_f64(&self.root) * (self.n as f64).sqrt()
    }

    fn check(&self, other: &Self) {
        debug_assert_eq!(self.n, other.n, "surds over different fields");
    }
}

impl fmt::Display for Surd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.root.is_zero() {
            return write!(f, "{}", fmt_rational(&self.rational));
        }
        let sign = if self.root.is_negative() { '-' } else { '+' };
        write!(
            f,
            "{} {} {}*sqrt({})",
            fmt_rational(&self.rational),
            sign,
            fmt_rational(&self.root.abs()),
            self.n
        )
    }
}

impl Add for Surd {
    type Output = Surd;
    fn add(self, rhs: Surd) -> Surd {
        self.check(&rhs);
        Surd { rational: self.rational + rhs.rational, root: self.root + rhs.root, n: self.n }
    }
}

impl<'a> Add<&'a Surd> for &'a Surd {
    type Output = Surd;
    fn add(self, rhs: &'a Surd) -> Surd {
        self.check(rhs);
        Surd { rational: &self.rational + &rhs.rational, root: &self.root + &rhs.root, n: self.n }
    }
}

impl AddAssign<&Surd> for Surd {
    fn add_assign(&mut self, rhs: &Surd) {
        self.check(rhs);
        self.rational += &rhs.rational;
        self.root += &rhs.root;
    }
}

impl Sub for Surd {
    type Output = Surd;
    fn sub(self, rhs: Surd) -> Surd {
        self + (-rhs)
    }
}

impl Neg for Surd {
    type Output = Surd;
    fn neg(self) -> Surd {
        Surd { rational: -self.rational, root: -self.root, n: self.n }
    }
}

impl<'a> Mul<&'a Surd> for &'a Surd {
    type Output = Surd;
    fn mul(self, rhs: &'a Surd) -> Surd {
        self.check(rhs);
        let nn = Rational::from_integer(BigInt::from(self.n));
        Surd {
            rational: &self.rational * &rhs.rational + &self.root * &rhs.root * nn,
            root: &self.rational * &rhs.root + &self.root * &rhs.rational,
            n: self.n,
        }
    }
}

impl Mul<&Rational> for Surd {
    type Output = Surd;
    fn mul(self, rhs: &Rational) -> Surd {
        Surd { rational: self.rational * rhs, root: self.root * rhs, n: self.n }
    }
}
