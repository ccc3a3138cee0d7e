//! Exact scalar layer: arbitrary-precision rationals, p-adic valuations and
//! absolute values, and the height functions everything downstream builds on.
//!
//! Conventions: the normalized absolute value is |x|_p = p^(-v_p(x)) with
//! |0|_p = 0, so the product formula |x| * prod_p |x|_p = 1 holds exactly for
//! nonzero x. Heights of tuples are max{1, |w_1|, ..., |w_N|} at each place.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::{Error, Result};

/// Exact rational scalar. Always reduced, denominator positive, zero is 0/1;
/// the backing type maintains those invariants through every operation.
pub type Rational = num_rational::BigRational;

/// p-adic valuation of a rational number; `Infinite` is v_p(0).
///
/// The derived order puts `Finite(a) < Finite(b)` for a < b and everything
/// below `Infinite`, which is exactly the order valuations want.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Valuation {
    Finite(i64),
    Infinite,
}

impl Valuation {
    pub fn finite(self) -> Option<i64> {
        match self {
            Valuation::Finite(v) => Some(v),
            Valuation::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        self == Valuation::Infinite
    }
}

/// Place at which a height is measured. `Finite` is the product over all
/// finite places; `Global` multiplies that with the real place.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Place {
    Real,
    Prime(u64),
    Finite,
    Global,
}

/// Deterministic trial-division primality test; sufficient for the word-sized
/// primes this crate works at.
pub fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    if p % 2 == 0 {
        return p == 2;
    }
    if p % 3 == 0 {
        return p == 3;
    }
    let mut c = 5u64;
    while c.checked_mul(c).is_some_and(|sq| sq <= p) {
        if p % c == 0 || p % (c + 2) == 0 {
            return false;
        }
        c += 6;
    }
    true
}

pub(crate) fn ensure_prime(p: u64) -> Result<()> {
    if is_prime(p) {
        Ok(())
    } else {
        Err(Error::NotPrime(p))
    }
}

pub(crate) fn uint_valuation(n: &BigUint, p: u64) -> Valuation {
    if n.is_zero() {
        return Valuation::Infinite;
    }
    let pb = BigUint::from(p);
    let mut n = n.clone();
    let mut v = 0i64;
    loop {
        let (q, r) = n.div_rem(&pb);
        if r.is_zero() {
            v += 1;
            n = q;
        } else {
            return Valuation::Finite(v);
        }
    }
}

/// v_p(x) for exact rational x; requires p prime.
pub fn valuation(x: &Rational, p: u64) -> Result<Valuation> {
    ensure_prime(p)?;
    Ok(valuation_unchecked(x, p))
}

pub(crate) fn valuation_unchecked(x: &Rational, p: u64) -> Valuation {
    if x.is_zero() {
        return Valuation::Infinite;
    }
    let vn = uint_valuation(x.numer().magnitude(), p);
    let vd = uint_valuation(x.denom().magnitude(), p);
    match (vn, vd) {
        (Valuation::Finite(a), Valuation::Finite(b)) => Valuation::Finite(a - b),
        _ => unreachable!("nonzero rational has finite valuations"),
    }
}

/// Exact integer power p^e as a rational (e may be negative).
pub fn pow_p(p: u64, e: i64) -> Rational {
    let mag = BigInt::from(p).pow(e.unsigned_abs() as u32);
    if e >= 0 {
        Rational::from_integer(mag)
    } else {
        Rational::new(BigInt::one(), mag)
    }
}

/// Normalized absolute value |x|_p = p^(-v_p(x)), exact; |0|_p = 0.
pub fn abs_p(x: &Rational, p: u64) -> Result<Rational> {
    ensure_prime(p)?;
    Ok(match valuation_unchecked(x, p) {
        Valuation::Infinite => Rational::zero(),
        Valuation::Finite(v) => pow_p(p, -v),
    })
}

/// Height of a tuple at one place: max{1, |w_1|, ..., |w_N|}, where at the
/// `Finite` place the per-prime heights are multiplied over every prime
/// dividing some denominator, and `Global` is `Real * Finite`.
pub fn height_tuple(w: &[Rational], place: Place) -> Result<Rational> {
    match place {
        Place::Real => {
            let mut h = Rational::one();
            for x in w {
                let a = x.abs();
                if a > h {
                    h = a;
                }
            }
            Ok(h)
        }
        Place::Prime(p) => {
            ensure_prime(p)?;
            let mut e = 0i64;
            for x in w {
                if let Valuation::Finite(v) = valuation_unchecked(x, p) {
                    e = e.max(-v);
                }
            }
            Ok(pow_p(p, e))
        }
        Place::Finite => {
            // The finite height of a tuple is the product of the per-prime
            // heights, computed by factoring the lcm of the denominators.
            let l = denominator_lcm(w.iter());
            let mut h = Rational::one();
            for (q, k) in factor(l.magnitude()) {
                let qk = BigInt::from(q).pow(k);
                h *= Rational::from_integer(qk);
            }
            debug_assert_eq!(h, Rational::from_integer(l.clone()));
            Ok(h)
        }
        Place::Global => {
            let r = height_tuple(w, Place::Real)?;
            let f = height_tuple(w, Place::Finite)?;
            Ok(r * f)
        }
    }
}

/// lcm of the denominators of a family of rationals (1 for an empty family).
pub fn denominator_lcm<'a, I: IntoIterator<Item = &'a Rational>>(xs: I) -> BigInt {
    let mut l = BigInt::one();
    for x in xs {
        l = l.lcm(x.denom());
    }
    l
}

/// Real and finite heights of a nonzero rational point of the multiplicative
/// group: H_R(t) = max{|t|, |1/t|} and H_f(t) = |n*m| for t = n/m reduced.
pub fn gm_heights(t: &Rational) -> Result<(Rational, BigInt)> {
    if t.is_zero() {
        return Err(Error::ZeroInput("gm_heights"));
    }
    let a = t.abs();
    let inv = a.recip();
    let h_r = if a >= inv { a } else { inv };
    let h_f = (t.numer() * t.denom()).abs();
    Ok((h_r, h_f))
}

/// Number of distinct prime factors; omega(1) = 0. Requires n >= 1.
pub fn omega(n: &BigUint) -> usize {
    assert!(!n.is_zero(), "omega needs a positive integer");
    factor(n).len()
}

/// Prime factorization by trial division (returns (prime, multiplicity) in
/// increasing order). Fine at the word-size scale this crate deals in.
pub fn factor(n: &BigUint) -> Vec<(u64, u32)> {
    assert!(!n.is_zero(), "factor needs a positive integer");
    let mut out = Vec::new();
    if let Some(mut m) = to_u64(n) {
        let mut push = |q: u64, k: u32| {
            if k > 0 {
                out.push((q, k));
            }
        };
        for q in [2u64, 3] {
            let mut k = 0;
            while m % q == 0 {
                m /= q;
                k += 1;
            }
            push(q, k);
        }
        let mut c = 5u64;
        while c.checked_mul(c).is_some_and(|sq| sq <= m) {
            for q in [c, c + 2] {
                let mut k = 0;
                while m % q == 0 {
                    m /= q;
                    k += 1;
                }
                push(q, k);
            }
            c += 6;
        }
        if m > 1 {
            push(m, 1);
        }
        return out;
    }
    // Big inputs: strip word-sized primes, then insist the cofactor is 1.
    // Nothing in this crate produces composites past that scale.
    let mut m = n.clone();
    let mut c = 2u64;
    loop {
        let cb = BigUint::from(c);
        if (&cb * &cb) > m {
            break;
        }
        let mut k = 0u32;
        loop {
            let (q, r) = m.div_rem(&cb);
            if r.is_zero() {
                m = q;
                k += 1;
            } else {
                break;
            }
        }
        if k > 0 {
            out.push((c, k));
        }
        c = if c == 2 { 3 } else { c + 2 };
    }
    if !m.is_one() {
        let q = to_u64(&m).expect("cofactor beyond factoring range");
        out.push((q, 1));
    }
    out
}

fn to_u64(n: &BigUint) -> Option<u64> {
    let digits = n.to_u64_digits();
    match digits.len() {
        0 => Some(0),
        1 => Some(digits[0]),
        _ => None,
    }
}

/// Convenience constructor used throughout the tests.
pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// Integer as a rational.
pub fn rint(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valuation_matches_hand_values() {
        assert_eq!(valuation(&rint(50), 5).unwrap(), Valuation::Finite(2));
        assert_eq!(valuation(&rat(8, 9), 3).unwrap(), Valuation::Finite(-2));
        assert_eq!(valuation(&rint(0), 7).unwrap(), Valuation::Infinite);
        assert!(matches!(valuation(&rint(1), 6), Err(Error::NotPrime(6))));
        assert!(matches!(valuation(&rint(1), 1), Err(Error::NotPrime(1))));
    }

    #[test]
    fn abs_p_matches_hand_values() {
        assert_eq!(abs_p(&rint(50), 5).unwrap(), rat(1, 25));
        assert_eq!(abs_p(&rat(1, 3), 3).unwrap(), rint(3));
        assert_eq!(abs_p(&rint(7), 5).unwrap(), rint(1));
        assert_eq!(abs_p(&rint(0), 3).unwrap(), rint(0));
    }

    #[test]
    fn height_tuple_places() {
        let w = [rat(3, 2), rat(2, 3)];
        assert_eq!(height_tuple(&w, Place::Finite).unwrap(), rint(6));
        assert_eq!(height_tuple(&w, Place::Prime(2)).unwrap(), rint(2));
        assert_eq!(height_tuple(&w, Place::Prime(3)).unwrap(), rint(3));
        assert_eq!(height_tuple(&w, Place::Prime(5)).unwrap(), rint(1));
        assert_eq!(height_tuple(&w, Place::Real).unwrap(), rat(3, 2));

        let ones = [rint(1), rint(1)];
        assert_eq!(height_tuple(&ones, Place::Global).unwrap(), rint(1));

        let single = [rat(3, 2)];
        assert_eq!(height_tuple(&single, Place::Real).unwrap(), rat(3, 2));
        assert_eq!(height_tuple(&single, Place::Finite).unwrap(), rint(2));
        assert_eq!(height_tuple(&single, Place::Global).unwrap(), rint(3));
    }

    #[test]
    fn gm_heights_hand_values() {
        let (hr, hf) = gm_heights(&rat(3, 2)).unwrap();
        assert_eq!(hr, rat(3, 2));
        assert_eq!(hf, BigInt::from(6));

        let (hr, hf) = gm_heights(&rint(1)).unwrap();
        assert_eq!(hr, rint(1));
        assert_eq!(hf, BigInt::from(1));

        let (hr, hf) = gm_heights(&rint(-7)).unwrap();
        assert_eq!(hr, rint(7));
        assert_eq!(hf, BigInt::from(7));

        assert!(gm_heights(&rint(0)).is_err());
    }

    #[test]
    fn omega_hand_values() {
        assert_eq!(omega(&BigUint::from(1u32)), 0);
        assert_eq!(omega(&BigUint::from(12u32)), 2);
        assert_eq!(omega(&BigUint::from(30u32)), 3);
    }

    #[test]
    fn factor_reassembles() {
        for n in [1u64, 2, 12, 30, 97, 1024, 600851475143] {
            let f = factor(&BigUint::from(n));
            let back: BigUint = f
                .iter()
                .map(|(q, k)| BigUint::from(*q).pow(*k))
                .product();
            assert_eq!(back, BigUint::from(n));
        }
    }

    #[test]
    fn product_formula_spot_checks() {
        for x in [rat(50, 27), rat(-8, 9), rat(1, 1), rat(360, 7)] {
            let mut prod = x.abs();
            let mut primes: Vec<u64> = factor(x.numer().magnitude())
                .into_iter()
                .chain(factor(x.denom().magnitude()))
                .map(|(q, _)| q)
                .collect();
            primes.sort_unstable();
            primes.dedup();
            for p in primes {
                prod *= abs_p(&x, p).unwrap();
            }
            assert_eq!(prod, rint(1), "product formula fails for {x}");
        }
    }
}
