//! Exact scalar arithmetic: Gaussian rationals for kernel values and
//! rational combinations of square roots for ℓ² data.
//!
//! Algebraic identity checks in this crate are bit-exact, so kernel entries
//! are `Gaussian` (rational real and imaginary parts) and witness values are
//! `Radical` (sums `Σ c_i √r_i` with square-free integer radicands). Both
//! carry their own parsing/printing for the JSON document formats.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{BigUint, Complex, One, Signed, ToPrimitive, Zero};

use crate::error::{Result, UrsError};

pub type Ratio = BigRational;
pub type C64 = Complex<f64>;

pub fn ratio(n: i64, d: i64) -> Ratio {
    Ratio::new(BigInt::from(n), BigInt::from(d))
}

pub fn ratio_int(n: i64) -> Ratio {
    Ratio::from(BigInt::from(n))
}

/// Parses "p/q", "p", or a plain decimal float into an exact rational.
pub fn parse_ratio(s: &str) -> Result<Ratio> {
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p
            .trim()
            .parse()
            .map_err(|_| UrsError::Invalid(format!("bad rational {s:?}")))?;
        let q: BigInt = q
            .trim()
            .parse()
            .map_err(|_| UrsError::Invalid(format!("bad rational {s:?}")))?;
        if q.is_zero() {
            return Err(UrsError::Invalid(format!("zero denominator in {s:?}")));
        }
        return Ok(Ratio::new(p, q));
    }
    if let Ok(p) = s.parse::<BigInt>() {
        return Ok(Ratio::from(p));
    }
    let f: f64 = s
        .parse()
        .map_err(|_| UrsError::Invalid(format!("bad rational {s:?}")))?;
    Ratio::from_float(f).ok_or_else(|| UrsError::Invalid(format!("non-finite value {s:?}")))
}

pub fn ratio_to_string(r: &Ratio) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn ratio_to_f64(r: &Ratio) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Serde adapter rendering rationals as "p/q" strings.
pub mod ratio_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    use super::{parse_ratio, ratio_to_string, Ratio};

    pub fn serialize<S: Serializer>(r: &Ratio, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&ratio_to_string(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Ratio, D::Error> {
        let s = String::deserialize(d)?;
        parse_ratio(&s).map_err(serde::de::Error::custom)
    }
}

/// Deterministic splitmix64 stream for reproducible test data.
#[derive(Clone, Copy, Debug)]
pub(crate) struct SplitMix(pub u64);

impl SplitMix {
    pub fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }
}

// ---------------------------------------------------------------------------
// Gaussian rationals
// ---------------------------------------------------------------------------

/// A complex number with rational real and imaginary parts.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Gaussian {
    pub re: Ratio,
    pub im: Ratio,
}

impl Gaussian {
    pub fn zero() -> Self {
        Gaussian::default()
    }

    pub fn one() -> Self {
        Gaussian { re: Ratio::one(), im: Ratio::zero() }
    }

    pub fn from_int(n: i64) -> Self {
        Gaussian { re: ratio_int(n), im: Ratio::zero() }
    }

    pub fn new(re: Ratio, im: Ratio) -> Self {
        Gaussian { re, im }
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn conj(&self) -> Self {
        Gaussian { re: self.re.clone(), im: -self.im.clone() }
    }

    pub fn add(&self, other: &Self) -> Self {
        Gaussian { re: &self.re + &other.re, im: &self.im + &other.im }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Gaussian { re: &self.re - &other.re, im: &self.im - &other.im }
    }

    pub fn mul(&self, other: &Self) -> Self {
        Gaussian {
            re: &self.re * &other.re - &self.im * &other.im,
            im: &self.re * &other.im + &self.im * &other.re,
        }
    }

    pub fn scale(&self, s: &Ratio) -> Self {
        Gaussian { re: &self.re * s, im: &self.im * s }
    }

    /// |z|² as an exact rational.
    pub fn abs_sq(&self) -> Ratio {
        &self.re * &self.re + &self.im * &self.im
    }

    pub fn abs_f64(&self) -> f64 {
        self.to_c64().norm()
    }

    pub fn to_c64(&self) -> C64 {
        Complex::new(ratio_to_f64(&self.re), ratio_to_f64(&self.im))
    }
}

impl fmt::Debug for Gaussian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.im.is_zero() {
            write!(f, "{}", ratio_to_string(&self.re))
        } else {
            write!(f, "{}+{}i", ratio_to_string(&self.re), ratio_to_string(&self.im))
        }
    }
}

// ---------------------------------------------------------------------------
// Radical sums
// ---------------------------------------------------------------------------

/// Splits n ≥ 0 into (s, m) with n = s²·m and m square-free.
fn square_free_split(n: &BigUint) -> (BigUint, BigUint) {
    let one = BigUint::one();
    if n.is_zero() || n.is_one() {
        return (one, n.clone());
    }
    let mut rest = n.clone();
    let mut square = BigUint::one();
    let mut free = BigUint::one();
    let mut d = BigUint::from(2u32);
    while &d * &d <= rest {
        let mut count = 0u32;
        while (&rest % &d).is_zero() {
            rest /= &d;
            count += 1;
        }
        if count > 0 {
            square *= d.pow(count / 2);
            if count % 2 == 1 {
                free *= &d;
            }
        }
        d += 1u32;
    }
    // rest is now 1 or a prime
    if !rest.is_one() {
        free *= rest;
    }
    (square, free)
}

/// An exact real number of the form Σ cᵢ·√rᵢ with rᵢ distinct square-free
/// positive integers (r = 1 carries the rational part) and cᵢ rational.
///
/// Closed under ring operations. Comparisons against rationals are exact when
/// at most one irrational radicand is present; otherwise they fall back to f64.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct Radical {
    terms: BTreeMap<BigUint, Ratio>,
}

impl Radical {
    pub fn zero() -> Self {
        Radical::default()
    }

    pub fn one() -> Self {
        Radical::from_ratio(Ratio::one())
    }

    pub fn from_ratio(r: Ratio) -> Self {
        let mut terms = BTreeMap::new();
        if !r.is_zero() {
            terms.insert(BigUint::one(), r);
        }
        Radical { terms }
    }

    pub fn from_int(n: i64) -> Self {
        Radical::from_ratio(ratio_int(n))
    }

    /// √(p/q) for p/q ≥ 0, in canonical form (√(p/q) = √(pq)/q).
    pub fn sqrt_ratio(r: &Ratio) -> Result<Self> {
        if r.is_negative() {
            return Err(UrsError::Invalid("square root of a negative rational".into()));
        }
        if r.is_zero() {
            return Ok(Radical::zero());
        }
        let p = r.numer().magnitude().clone();
        let q = r.denom().magnitude().clone();
        let (s, m) = square_free_split(&(&p * &q));
        let coeff = Ratio::new(BigInt::from(s), BigInt::from(q));
        let mut terms = BTreeMap::new();
        terms.insert(m, coeff);
        Ok(Radical { terms })
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Some(r) when the value is rational.
    pub fn as_ratio(&self) -> Option<Ratio> {
        match self.terms.len() {
            0 => Some(Ratio::zero()),
            1 => {
                let (rad, c) = self.terms.iter().next().unwrap();
                rad.is_one().then(|| c.clone())
            }
            _ => None,
        }
    }

    fn insert_term(terms: &mut BTreeMap<BigUint, Ratio>, rad: BigUint, coeff: Ratio) {
        if coeff.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match terms.entry(rad) {
            Entry::Vacant(e) => {
                e.insert(coeff);
            }
            Entry::Occupied(mut e) => {
                let sum = e.get() + &coeff;
                if sum.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = sum;
                }
            }
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        for (rad, c) in &other.terms {
            Self::insert_term(&mut terms, rad.clone(), c.clone());
        }
        Radical { terms }
    }

    pub fn neg(&self) -> Self {
        Radical { terms: self.terms.iter().map(|(r, c)| (r.clone(), -c.clone())).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut terms = BTreeMap::new();
        for (r, a) in &self.terms {
            for (s, b) in &other.terms {
                // both square-free: r·s = gcd²·(r/gcd)(s/gcd) with the cofactors
                // coprime and square-free
                let g = num::integer::gcd(r.clone(), s.clone());
                let rad = (r / &g) * (s / &g);
                let coeff = a * b * Ratio::from(BigInt::from(g));
                Self::insert_term(&mut terms, rad, coeff);
            }
        }
        Radical { terms }
    }

    pub fn scale(&self, s: &Ratio) -> Self {
        if s.is_zero() {
            return Radical::zero();
        }
        Radical { terms: self.terms.iter().map(|(r, c)| (r.clone(), c * s)).collect() }
    }

    /// Squared value, always defined.
    pub fn square(&self) -> Self {
        self.mul(self)
    }

    /// Divide by a single-term radical (c·√r). Errors on multi-term divisors.
    pub fn div_single(&self, divisor: &Self) -> Result<Self> {
        if divisor.is_zero() {
            return Err(UrsError::Invalid("division by zero".into()));
        }
        if divisor.terms.len() != 1 {
            return Err(UrsError::IrrationalNorm);
        }
        let (rad, coeff) = divisor.terms.iter().next().unwrap();
        // 1/(c√r) = √r/(c·r)
        let mut inv_terms = BTreeMap::new();
        let denom = coeff * Ratio::from(BigInt::from(rad.clone()));
        inv_terms.insert(rad.clone(), denom.recip());
        let inv = Radical { terms: inv_terms };
        Ok(self.mul(&inv))
    }

    pub fn to_f64(&self) -> f64 {
        self.terms
            .iter()
            .map(|(r, c)| ratio_to_f64(c) * r.to_f64().unwrap_or(f64::NAN).sqrt())
            .sum()
    }

    /// Exact comparison against a rational when at most one irrational
    /// radicand is present; None when the sign cannot be decided exactly.
    pub fn cmp_ratio_exact(&self, q: &Ratio) -> Option<Ordering> {
        let mut rational = -q.clone();
        let mut radical: Option<(&BigUint, &Ratio)> = None;
        for (r, c) in &self.terms {
            if r.is_one() {
                rational += c;
            } else if radical.is_none() {
                radical = Some((r, c));
            } else {
                return None;
            }
        }
        // deciding sign of rational + c·√r
        match radical {
            None => Some(rational.cmp(&Ratio::zero())),
            Some((r, c)) => {
                // compare c·√r against t = -rational
                let t = -rational;
                let c_pos = c.is_positive();
                let t_sign = t.cmp(&Ratio::zero());
                match (c_pos, t_sign) {
                    (true, Ordering::Less) | (true, Ordering::Equal) => Some(Ordering::Greater),
                    (false, Ordering::Greater) | (false, Ordering::Equal) => Some(Ordering::Less),
                    (true, Ordering::Greater) => {
                        let lhs = c * c * Ratio::from(BigInt::from(r.clone()));
                        let rhs = &t * &t;
                        Some(lhs.cmp(&rhs))
                    }
                    (false, Ordering::Less) => {
                        let lhs = c * c * Ratio::from(BigInt::from(r.clone()));
                        let rhs = &t * &t;
                        Some(rhs.cmp(&lhs))
                    }
                }
            }
        }
    }

    /// Comparison against a rational, exact when possible, f64 otherwise.
    pub fn cmp_ratio(&self, q: &Ratio) -> Ordering {
        self.cmp_ratio_exact(q).unwrap_or_else(|| {
            self.to_f64().partial_cmp(&ratio_to_f64(q)).unwrap_or(Ordering::Equal)
        })
    }

    pub fn le_ratio(&self, q: &Ratio) -> bool {
        self.cmp_ratio(q) != Ordering::Greater
    }

    /// |x| assuming the sign is exactly decidable (falls back to f64 sign).
    pub fn abs(&self) -> Self {
        if self.cmp_ratio(&Ratio::zero()) == Ordering::Less {
            self.neg()
        } else {
            self.clone()
        }
    }
}

impl fmt::Debug for Radical {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", radical_to_string(self))
    }
}

/// Canonical text form: "0", "p/q", "c*sqrt(m)", or "+"-joined terms.
pub fn radical_to_string(x: &Radical) -> String {
    if x.is_zero() {
        return "0".into();
    }
    let parts: Vec<String> = x
        .terms
        .iter()
        .map(|(r, c)| {
            if r.is_one() {
                ratio_to_string(c)
            } else if c.is_one() {
                format!("sqrt({r})")
            } else {
                format!("{}*sqrt({})", ratio_to_string(c), r)
            }
        })
        .collect();
    parts.join(" + ")
}

/// Accepts "p/q", decimal floats, "sqrt(p/q)", "c*sqrt(p/q)", and sums of
/// those joined by " + ".
pub fn parse_radical(s: &str) -> Result<Radical> {
    let mut acc = Radical::zero();
    for part in s.split(" + ") {
        let part = part.trim();
        let term = if let Some(rest) = part.strip_prefix("sqrt(") {
            let inner = rest
                .strip_suffix(')')
                .ok_or_else(|| UrsError::Invalid(format!("bad radical {part:?}")))?;
            Radical::sqrt_ratio(&parse_ratio(inner)?)?
        } else if let Some((c, rad)) = part.split_once("*sqrt(") {
            let inner = rad
                .strip_suffix(')')
                .ok_or_else(|| UrsError::Invalid(format!("bad radical {part:?}")))?;
            Radical::sqrt_ratio(&parse_ratio(inner)?)?.scale(&parse_ratio(c)?)
        } else {
            Radical::from_ratio(parse_ratio(part)?)
        };
        acc = acc.add(&term);
    }
    Ok(acc)
}
