//! p-adic matrix arithmetic at capped absolute precision: ultrametric norms,
//! characteristic-polynomial convergence criteria, and the exp/log series
//! with proven truncation horizons.
//!
//! Exact rational matrices go in; `PadicMatrix` residues come out. Series are
//! summed with exact rational scalars and reduced once at the end, so the
//! only error is the dropped tail, which the horizon forces strictly below
//! the requested precision.

use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Zero};

use crate::exactnum::{
    ensure_prime, pow_p, uint_valuation, valuation_unchecked, Rational, Valuation,
};
use crate::matrix::RatMatrix;
use crate::{Error, Result};

/// Monic characteristic polynomial det(T·I − Z); the leading coefficient is
/// implicit, `coeff(i)` multiplies T^i.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharPoly {
    dim: usize,
    coeffs: Vec<Rational>,
}

/// Exact characteristic polynomial by Faddeev–LeVerrier:
/// M_1 = I, c_{d−k} = −tr(Z·M_k)/k, M_{k+1} = Z·M_k + c_{d−k}·I.
pub fn char_poly(z: &RatMatrix) -> Result<CharPoly> {
    if !z.is_square() {
        return Err(Error::Dimension("char_poly of a non-square matrix".into()));
    }
    let d = z.rows();
    let mut m = RatMatrix::identity(d);
    let mut coeffs = vec![Rational::zero(); d];
    for k in 1..=d {
        let zm = z.mul(&m)?;
        let c = -(zm.trace()? / Rational::from_integer(BigInt::from(k)));
        coeffs[d - k] = c.clone();
        if k < d {
            m = zm;
            for i in 0..d {
                let v = m.get(i, i) + &c;
                m.set(i, i, v);
            }
        }
    }
    Ok(CharPoly { dim: d, coeffs })
}

impl CharPoly {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coeff(&self, i: usize) -> &Rational {
        &self.coeffs[i]
    }

    /// True iff the polynomial is exactly T^d, i.e. the matrix is nilpotent.
    pub fn is_t_power(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }

    /// Least v_p over the non-leading coefficients: the largest k with
    /// χ ∈ T^d + p^k·Z_p[T]. Infinite when χ = T^d.
    pub fn shift(&self, p: u64) -> Result<Valuation> {
        ensure_prime(p)?;
        Ok(self.shift_unchecked(p))
    }

    fn shift_unchecked(&self, p: u64) -> Valuation {
        self.coeffs
            .iter()
            .map(|c| valuation_unchecked(c, p))
            .min()
            .unwrap_or(Valuation::Infinite)
    }

    pub fn eval(&self, t: &Rational) -> Rational {
        let mut acc = Rational::one();
        for c in self.coeffs.iter().rev() {
            acc = acc * t + c;
        }
        acc
    }
}

/// Least valuation over the entries; Infinite for the zero matrix.
pub fn min_valuation(m: &RatMatrix, p: u64) -> Result<Valuation> {
    ensure_prime(p)?;
    Ok(min_valuation_unchecked(m, p))
}

fn min_valuation_unchecked(m: &RatMatrix, p: u64) -> Valuation {
    m.entries()
        .map(|x| valuation_unchecked(x, p))
        .min()
        .unwrap_or(Valuation::Infinite)
}

/// Ultrametric norm ‖M‖ = max |entry|_p of an exact rational matrix.
pub fn norm_exact(m: &RatMatrix, p: u64) -> Result<Rational> {
    ensure_prime(p)?;
    Ok(norm_exact_unchecked(m, p))
}

fn norm_exact_unchecked(m: &RatMatrix, p: u64) -> Rational {
    match min_valuation_unchecked(m, p) {
        Valuation::Infinite => Rational::zero(),
        Valuation::Finite(v) => pow_p(p, -v),
    }
}

/// H_p(M) = max(1, ‖M‖) of an exact rational matrix.
pub fn local_height_exact(m: &RatMatrix, p: u64) -> Result<Rational> {
    ensure_prime(p)?;
    let n = norm_exact_unchecked(m, p);
    Ok(if n < Rational::one() { Rational::one() } else { n })
}

/// Exponent h with H_p(M) = p^h, i.e. max(0, −min valuation).
pub(crate) fn height_exponent(m: &RatMatrix, p: u64) -> i64 {
    match min_valuation_unchecked(m, p) {
        Valuation::Infinite => 0,
        Valuation::Finite(v) => (-v).max(0),
    }
}

fn shift_at_least(v: Valuation, k: i64) -> bool {
    match v {
        Valuation::Infinite => true,
        Valuation::Finite(s) => s >= k,
    }
}

/// χ_Z ∈ T^d + p^k·Z_p[T]: every non-leading coefficient has v_p ≥ k.
pub fn log_criterion(z: &RatMatrix, p: u64, k: i64) -> Result<bool> {
    ensure_prime(p)?;
    let chi = char_poly(z)?;
    Ok(shift_at_least(chi.shift_unchecked(p), k))
}

/// Sufficient convergence criterion for exp: some k ≥ 1 has
/// χ_X ∈ T^d + p^k·Z_p[T] together with d < k(p−1). Nilpotent X always
/// passes; its series terminates.
pub fn exp_converges(x: &RatMatrix, p: u64) -> Result<bool> {
    ensure_prime(p)?;
    let chi = char_poly(x)?;
    Ok(exp_shift(&chi, p, x.rows()).is_ok())
}

/// The shift the exp horizon may use, or the divergence diagnostic. A larger
/// k only strengthens d < k(p−1), so the best candidate is the full shift.
fn exp_shift(chi: &CharPoly, p: u64, d: usize) -> Result<Valuation> {
    match chi.shift_unchecked(p) {
        Valuation::Infinite => Ok(Valuation::Infinite),
        Valuation::Finite(k) => {
            if k >= 1 && (d as i64) < k.saturating_mul(p as i64 - 1) {
                Ok(Valuation::Finite(k))
            } else {
                Err(Error::ExpDiverges { k })
            }
        }
    }
}

/// Necessity direction of the log criterion: any accepted Y satisfies
/// χ_Y ∈ T^d + p·Z_p[T].
pub fn check_log_chi_necessity(y: &RatMatrix, p: u64) -> Result<bool> {
    log_criterion(y, p, 1)
}

fn mod_inverse(a: &BigInt, modulus: &BigInt) -> Option<BigInt> {
    let g = a.extended_gcd(modulus);
    if g.gcd.is_one() {
        Some(g.x.mod_floor(modulus))
    } else {
        None
    }
}

/// Canonical residue of a p-integral rational mod p^cap: the unique
/// r ∈ [0, p^cap) with v_p(x − r) ≥ cap. The reduced denominator is prime
/// to p, hence invertible mod p^cap.
pub(crate) fn residue_mod_p_pow(x: &Rational, p: u64, cap: u32) -> BigUint {
    let modulus = BigInt::from(BigUint::from(p).pow(cap));
    let num = x.numer().mod_floor(&modulus);
    let den = x.denom().mod_floor(&modulus);
    let inv = mod_inverse(&den, &modulus).expect("denominator prime to p");
    (num * inv)
        .mod_floor(&modulus)
        .to_biguint()
        .expect("mod_floor is nonnegative")
}

/// Canonical representative of an arbitrary rational mod p^cap: 0 when
/// v_p(x) ≥ cap, else p^v·u with u the canonical unit residue mod p^(cap−v).
pub(crate) fn canonical_residue(x: &Rational, p: u64, cap: i64) -> Rational {
    let v = match valuation_unchecked(x, p) {
        Valuation::Infinite => return Rational::zero(),
        Valuation::Finite(v) => v,
    };
    if v >= cap {
        return Rational::zero();
    }
    let unit = x * pow_p(p, -v);
    let width = u32::try_from(cap - v).expect("residue width fits u32");
    let r = residue_mod_p_pow(&unit, p, width);
    Rational::from_integer(BigInt::from(r)) * pow_p(p, v)
}

/// Square matrix over Q_p at capped absolute precision N. Entry values are
/// residue·p^(−s) with canonical residues in [0, p^(N+s)), so every entry is
/// known modulo p^N and has valuation ≥ −s.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PadicMatrix {
    p: u64,
    dim: usize,
    shift: u32,
    precision: u32,
    entries: Vec<BigUint>,
}

impl PadicMatrix {
    /// Reduce an exact rational matrix, inferring the least shift that
    /// represents every entry.
    pub fn from_exact(m: &RatMatrix, p: u64, precision: u32) -> Result<Self> {
        ensure_prime(p)?;
        let shift = match min_valuation_unchecked(m, p) {
            Valuation::Infinite => 0,
            Valuation::Finite(v) => u32::try_from((-v).max(0)).expect("shift fits u32"),
        };
        Self::from_exact_with_shift(m, p, shift, precision)
    }

    pub fn from_exact_with_shift(
        m: &RatMatrix,
        p: u64,
        shift: u32,
        precision: u32,
    ) -> Result<Self> {
        ensure_prime(p)?;
        if precision == 0 {
            return Err(Error::Precision(precision));
        }
        if !m.is_square() {
            return Err(Error::Dimension(format!(
                "p-adic matrix must be square, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        let cap = precision
            .checked_add(shift)
            .ok_or(Error::Precision(precision))?;
        let scale = pow_p(p, shift as i64);
        let mut entries = Vec::with_capacity(m.rows() * m.cols());
        for x in m.entries() {
            if let Valuation::Finite(v) = valuation_unchecked(x, p) {
                if v < -(shift as i64) {
                    return Err(Error::Shift {
                        shift,
                        valuation: v,
                    });
                }
            }
            entries.push(residue_mod_p_pow(&(x * &scale), p, cap));
        }
        Ok(PadicMatrix {
            p,
            dim: m.rows(),
            shift,
            precision,
            entries,
        })
    }

    pub fn prime(&self) -> u64 {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shift(&self) -> u32 {
        self.shift
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    /// Canonical rational representative of entry (i, j).
    pub fn entry_value(&self, i: usize, j: usize) -> Rational {
        Rational::from_integer(BigInt::from(self.entries[i * self.dim + j].clone()))
            * pow_p(self.p, -(self.shift as i64))
    }

    /// Matrix of canonical representatives.
    pub fn to_exact(&self) -> RatMatrix {
        RatMatrix::from_fn(self.dim, self.dim, |i, j| self.entry_value(i, j))
    }

    /// Max |entry|_p over the representation. Entries indistinguishable from
    /// 0 at this precision contribute 0; when the matrix was reduced from
    /// exact input this equals the exact norm whenever that norm exceeds
    /// p^(−precision).
    pub fn norm(&self) -> Rational {
        let mut least: Option<i64> = None;
        for r in &self.entries {
            if let Valuation::Finite(v) = uint_valuation(r, self.p) {
                let v = v - self.shift as i64;
                least = Some(least.map_or(v, |b| b.min(v)));
            }
        }
        match least {
            None => Rational::zero(),
            Some(v) => pow_p(self.p, -v),
        }
    }

    pub fn local_height(&self) -> Rational {
        let n = self.norm();
        if n < Rational::one() {
            Rational::one()
        } else {
            n
        }
    }

    /// Entrywise congruence with an exact matrix modulo p^e, e ≤ precision.
    pub fn congruent_to_exact(&self, m: &RatMatrix, e: u32) -> Result<bool> {
        if e > self.precision {
            return Err(Error::Precision(e));
        }
        if m.rows() != self.dim || m.cols() != self.dim {
            return Err(Error::Dimension(format!(
                "congruence of {}x{} with {}x{}",
                self.dim,
                self.dim,
                m.rows(),
                m.cols()
            )));
        }
        for i in 0..self.dim {
            for j in 0..self.dim {
                let diff = self.entry_value(i, j) - m.get(i, j);
                if !shift_at_least(valuation_unchecked(&diff, self.p), e as i64) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Entrywise congruence modulo p^e, e within both precisions.
    pub fn congruent(&self, other: &PadicMatrix, e: u32) -> Result<bool> {
        if self.p != other.p {
            return Err(Error::Experiment(format!(
                "congruence across primes {} and {}",
                self.p, other.p
            )));
        }
        if e > self.precision.min(other.precision) {
            return Err(Error::Precision(e));
        }
        self.congruent_to_exact(&other.to_exact(), e)
    }
}

/// Text form: a `p d s N` header line, then the canonical rational entries.
/// Parsing with the same header reproduces the residues bit for bit.
impl fmt::Display for PadicMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} {} {} {}", self.p, self.dim, self.shift, self.precision)?;
        write!(f, "{}", self.to_exact().body_string())
    }
}

impl FromStr for PadicMatrix {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty p-adic matrix text".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::Parse(format!(
                "header must be `p d s N`, got {header:?}"
            )));
        }
        let bad = |what: &str| Error::Parse(format!("bad {what} in header {header:?}"));
        let p: u64 = fields[0].parse().map_err(|_| bad("prime"))?;
        let d: usize = fields[1].parse().map_err(|_| bad("dimension"))?;
        let shift: u32 = fields[2].parse().map_err(|_| bad("shift"))?;
        let precision: u32 = fields[3].parse().map_err(|_| bad("precision"))?;
        let body: Vec<&str> = lines.collect();
        let m = RatMatrix::parse_body(&body.join("\n"), d, d)?;
        PadicMatrix::from_exact_with_shift(&m, p, shift, precision)
    }
}

/// ‖Z‖: max |entry|_p.
pub fn matrix_norm(z: &PadicMatrix) -> Rational {
    z.norm()
}

/// H_p(Z) = max(1, ‖Z‖); note H_p(Z) = H_p(1+Z).
pub fn local_height(z: &PadicMatrix) -> Rational {
    z.local_height()
}

/// First index n₀ with every exp term X^n/n! of valuation > target for
/// n ≥ n₀, from v(X^n) ≥ k⌊n/d⌋ − (d−1)h and v(n!) ≤ (n−1)/(p−1). The
/// envelope k(n−d+1)/d − (n−1)/(p−1) − (d−1)h is increasing because
/// d < k(p−1), so the minimal solution is found by one exact division.
fn exp_horizon(k: Valuation, d: usize, h: i64, target: i64, p: u64) -> u64 {
    let k = match k {
        // χ = T^d: X^d = 0 and the series terminates.
        Valuation::Infinite => return d as u64,
        Valuation::Finite(k) => k as i128,
    };
    let (d, pm1, t, h) = (d as i128, (p - 1) as i128, target as i128, h as i128);
    let a = k * pm1 - d;
    debug_assert!(a > 0, "horizon requires d < k(p-1)");
    let b = d * pm1 * (t + (d - 1) * h) + k * pm1 * (d - 1) - d;
    let n0 = b.div_euclid(a) + 1;
    u64::try_from(n0.max(1)).expect("horizon fits u64")
}

/// First index n₀ (a multiple of d) with every log term Y^n/n of valuation
/// > target for n ≥ n₀: on the block ⌊n/d⌋ = m, v(Y^n/n) ≥ km − (d−1)h −
/// v_p(n) and v_p(n) ≤ ilog_p(d(m+1)); the block bound km − ilog_p(d(m+1))
/// is non-decreasing in m since (m+2)/(m+1) ≤ 2 ≤ p.
fn log_horizon(k: Valuation, d: usize, h: i64, target: i64, p: u64) -> u64 {
    let k = match k {
        // Y^d = 0: only the first d−1 terms are nonzero.
        Valuation::Infinite => return d as u64,
        Valuation::Finite(k) => k,
    };
    debug_assert!(k >= 1);
    let thresh = i128::from(target) + (d as i128 - 1) * i128::from(h);
    let mut m: u64 = 0;
    loop {
        let lim = d as u64 * (m + 1);
        if i128::from(k) * i128::from(m) - i128::from(lim.ilog(p)) > thresh {
            return m * d as u64;
        }
        m += 1;
    }
}

/// Exp series terms X^n/n! for n below the horizon; every omitted term has
/// valuation > target. Rejects inputs failing the convergence criterion.
pub(crate) fn exp_terms(x: &RatMatrix, p: u64, target: i64) -> Result<Vec<RatMatrix>> {
    ensure_prime(p)?;
    if !x.is_square() {
        return Err(Error::Dimension("exp of a non-square matrix".into()));
    }
    let d = x.rows();
    let chi = char_poly(x)?;
    let k = exp_shift(&chi, p, d)?;
    let h = height_exponent(x, p);
    let horizon = exp_horizon(k, d, h, target, p);
    let mut terms = Vec::with_capacity(horizon as usize);
    let mut term = RatMatrix::identity(d);
    terms.push(term.clone());
    for n in 1..horizon {
        let inv_n = Rational::from_integer(BigInt::from(n)).recip();
        term = term.mul(x)?.scale(&inv_n);
        terms.push(term.clone());
    }
    Ok(terms)
}

fn sum_matrices(terms: &[RatMatrix], d: usize) -> RatMatrix {
    let mut s = RatMatrix::zero(d, d);
    for t in terms {
        s = s.add(t).expect("uniform shape");
    }
    s
}

/// exp(X) = Σ X^n/n!, correct modulo p^precision in every entry.
pub fn exp_matrix(x: &RatMatrix, p: u64, precision: u32) -> Result<PadicMatrix> {
    if precision == 0 {
        return Err(Error::Precision(precision));
    }
    let terms = exp_terms(x, p, precision as i64)?;
    let s = sum_matrices(&terms, x.rows());
    PadicMatrix::from_exact(&s, p, precision)
}

/// Partial sum of log(1+Y) with tail valuation > target.
fn log_partial(y: &RatMatrix, p: u64, k: Valuation, target: i64) -> Result<RatMatrix> {
    let d = y.rows();
    let h = height_exponent(y, p);
    let horizon = log_horizon(k, d, h, target, p);
    let mut acc = RatMatrix::zero(d, d);
    let mut pow = RatMatrix::identity(d);
    for n in 1..horizon {
        pow = pow.mul(y)?;
        let sign = if n % 2 == 1 { 1 } else { -1 };
        let c = Rational::new(BigInt::from(sign), BigInt::from(n));
        acc = acc.add(&pow.scale(&c))?;
    }
    Ok(acc)
}

/// log(1+Y) = Σ (−1)^(n−1) Y^n/n, correct modulo p^precision, for Y with
/// χ_Y ∈ T^d + p·Z_p[T]. Asserts the output norm bounds d·H_p(Y)^(d−1) and,
/// for p > d, H_p(Y)^(d−1): both are ≥ 1 while the dropped tail is below
/// p^(−precision), so the partial sum decides each bound exactly.
pub fn log_matrix(y: &RatMatrix, p: u64, precision: u32) -> Result<PadicMatrix> {
    ensure_prime(p)?;
    if precision == 0 {
        return Err(Error::Precision(precision));
    }
    if !y.is_square() {
        return Err(Error::Dimension("log of a non-square matrix".into()));
    }
    let d = y.rows();
    let chi = char_poly(y)?;
    let k = chi.shift_unchecked(p);
    if !shift_at_least(k, 1) {
        let Valuation::Finite(k) = k else { unreachable!() };
        return Err(Error::LogCriterion { k });
    }
    let partial = log_partial(y, p, k, precision as i64)?;

    let h = height_exponent(y, p);
    let measured = norm_exact_unchecked(&partial, p);
    let h_pow = pow_p(p, h * (d as i64 - 1));
    let general = &h_pow * Rational::from_integer(BigInt::from(d));
    if measured > general {
        return Err(Error::NormBound {
            which: "d*H^(d-1)",
            measured,
            bound: general,
        });
    }
    if p > d as u64 && measured > h_pow {
        return Err(Error::NormBound {
            which: "H^(d-1) for p > d",
            measured,
            bound: h_pow,
        });
    }
    PadicMatrix::from_exact(&partial, p, precision)
}

/// Extra exp precision that absorbs the perturbation of the log limit when
/// the exp tail is dropped: replacing Y by Y + Δ with ‖Δ‖ ≤ p^(−t) moves
/// log(1+Y) by at most p^(−t)·H^(2(d−1))·p^(2+log2 d), via the power bound
/// on each (Y')^j·Δ·Y^(n−1−j) and |1/n|_p ≤ n ≤ d(⌊(n−1)/d⌋+1).
fn roundtrip_margin(d: usize, h: i64) -> i64 {
    2 * (d as i64 - 1) * h + i64::from((4 * d as u64).ilog2()) + 4
}

/// Whether log(exp(X)) ≡ X mod p^precision. The exp partial sum is carried
/// at precision + margin so that feeding the truncated sum (rather than the
/// limit) into the log series cannot disturb the first `precision` digits.
pub fn log_exp_roundtrip(x: &RatMatrix, p: u64, precision: u32) -> Result<bool> {
    ensure_prime(p)?;
    if precision == 0 {
        return Err(Error::Precision(precision));
    }
    if !x.is_square() {
        return Err(Error::Dimension("roundtrip of a non-square matrix".into()));
    }
    let d = x.rows();
    let target = precision as i64;

    // H_p(Y) feeds the margin and is only known once Y is summed; the tail
    // below p^(−target−margin) < 1 cannot change H_p(Y), so the loop settles
    // after recomputing the margin at the true height once.
    let mut margin = roundtrip_margin(d, 0);
    let y = loop {
        let terms = exp_terms(x, p, target + margin)?;
        let s = sum_matrices(&terms, d);
        let y = s.sub(&RatMatrix::identity(d))?;
        let need = roundtrip_margin(d, height_exponent(&y, p));
        if need <= margin {
            break y;
        }
        margin = need;
    };
    // The exact sum carries factorial-sized denominators that would balloon
    // through the log power loop. Replacing each entry by its canonical
    // residue perturbs Y by less than p^(−target−margin), the same size the
    // margin absorbs for the dropped tail (heights only shrink, and the
    // χ-shift certificate is re-derived from the reduced matrix below), so
    // the first `target` digits of the log are unchanged.
    let y = y.map(|e| canonical_residue(e, p, target + margin));

    let chi = char_poly(&y)?;
    let k = chi.shift_unchecked(p);
    if !shift_at_least(k, 1) {
        let Valuation::Finite(k) = k else { unreachable!() };
        return Err(Error::LogCriterion { k });
    }
    let l = log_partial(&y, p, k, target)?;
    let diff = l.sub(x)?;
    Ok(shift_at_least(min_valuation_unchecked(&diff, p), target))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactnum::{rat, rint};

    fn nil_upper(a: Rational) -> RatMatrix {
        RatMatrix::from_rows(vec![vec![rint(0), a], vec![rint(0), rint(0)]]).unwrap()
    }

    #[test]
    fn norm_and_height_examples() {
        let z = PadicMatrix::from_exact(&nil_upper(rat(1, 125)), 5, 4).unwrap();
        assert_eq!(matrix_norm(&z), rint(125));
        assert_eq!(local_height(&z), rint(125));

        let id = PadicMatrix::from_exact(&RatMatrix::identity(3), 7, 4).unwrap();
        assert_eq!(matrix_norm(&id), rint(1));

        let m = RatMatrix::from_rows(vec![
            vec![rint(5), rat(1, 5)],
            vec![rint(25), rint(0)],
        ])
        .unwrap();
        assert_eq!(norm_exact(&m, 5).unwrap(), rint(5));
        let z = PadicMatrix::from_exact(&m, 5, 6).unwrap();
        assert_eq!(matrix_norm(&z), rint(5));

        let zero = PadicMatrix::from_exact(&RatMatrix::zero(2, 2), 5, 4).unwrap();
        assert_eq!(matrix_norm(&zero), rint(0));
        assert_eq!(local_height(&zero), rint(1));

        let five_id = PadicMatrix::from_exact(&RatMatrix::identity(2).scale(&rint(5)), 5, 4).unwrap();
        assert_eq!(matrix_norm(&five_id), rat(1, 5));
        assert_eq!(local_height(&five_id), rint(1));
    }

    #[test]
    fn height_invariant_under_unit_translation() {
        for m in [
            nil_upper(rat(1, 125)),
            RatMatrix::identity(2).scale(&rint(5)),
            RatMatrix::zero(2, 2),
        ] {
            let shifted = m.add(&RatMatrix::identity(2)).unwrap();
            assert_eq!(
                local_height_exact(&m, 5).unwrap(),
                local_height_exact(&shifted, 5).unwrap()
            );
        }
    }

    #[test]
    fn char_poly_hand_values() {
        let chi = char_poly(&RatMatrix::identity(2)).unwrap();
        assert_eq!(chi.coeff(0), &rint(1));
        assert_eq!(chi.coeff(1), &rint(-2));
        assert!(!chi.is_t_power());

        let chi = char_poly(&nil_upper(rint(1))).unwrap();
        assert!(chi.is_t_power());
        assert_eq!(chi.shift(5).unwrap(), Valuation::Infinite);

        let chi = char_poly(&RatMatrix::from_i64_rows(&[&[2, 1], &[1, 1]])).unwrap();
        assert_eq!(chi.coeff(0), &rint(1));
        assert_eq!(chi.coeff(1), &rint(-3));
        assert_eq!(chi.eval(&rint(2)), rint(-1));
    }

    #[test]
    fn log_criterion_examples() {
        assert!(log_criterion(&nil_upper(rint(1)), 3, 7).unwrap());
        let five = RatMatrix::from_i64_rows(&[&[5]]);
        assert!(log_criterion(&five, 5, 1).unwrap());
        assert!(!log_criterion(&RatMatrix::identity(2), 5, 1).unwrap());
    }

    #[test]
    fn exp_convergence_criterion_examples() {
        assert!(exp_converges(&nil_upper(rat(1, 125)), 5).unwrap());
        // v_2(2) = 1 and d = 1 is not < k(p−1) = 1.
        assert!(!exp_converges(&RatMatrix::from_i64_rows(&[&[2]]), 2).unwrap());
        // v_3(9) = 2 gives 1 < 4.
        assert!(exp_converges(&RatMatrix::from_i64_rows(&[&[9]]), 3).unwrap());

        match exp_matrix(&RatMatrix::from_i64_rows(&[&[2]]), 2, 4) {
            Err(Error::ExpDiverges { k: 1 }) => {}
            other => panic!("expected divergence diagnostic, got {other:?}"),
        }
    }

    #[test]
    fn exp_of_nilpotent_terminates_exactly() {
        let x = nil_upper(rat(1, 125));
        let e = exp_matrix(&x, 5, 4).unwrap();
        let expected = x.add(&RatMatrix::identity(2)).unwrap();
        assert_eq!(e.to_exact(), expected);
        assert_eq!(e.shift(), 3);

        let zero = exp_matrix(&RatMatrix::zero(2, 2), 5, 4).unwrap();
        assert_eq!(zero.to_exact(), RatMatrix::identity(2));
    }

    /// Independent scalar oracle: sum the series naively far past the
    /// horizon with exact rationals, then reduce.
    fn scalar_exp_residue(a: &Rational, p: u64, cap: u32) -> BigUint {
        let mut sum = Rational::zero();
        let mut term = Rational::one();
        for n in 1..=80u32 {
            sum += &term;
            term = term * a / Rational::from_integer(BigInt::from(n));
        }
        residue_mod_p_pow(&sum, p, cap)
    }

    fn scalar_log_residue(a: &Rational, p: u64, cap: u32) -> BigUint {
        let mut sum = Rational::zero();
        let mut pow = Rational::one();
        for n in 1..=200u32 {
            pow *= a;
            let sign = if n % 2 == 1 { 1 } else { -1 };
            sum += &pow * Rational::new(BigInt::from(sign), BigInt::from(n));
        }
        residue_mod_p_pow(&sum, p, cap)
    }

    #[test]
    fn exp_scalar_matches_series_oracle() {
        let e = exp_matrix(&RatMatrix::from_i64_rows(&[&[5]]), 5, 4).unwrap();
        assert_eq!(e.shift(), 0);
        let expected = scalar_exp_residue(&rint(5), 5, 4);
        assert_eq!(e.entry_value(0, 0), Rational::from_integer(BigInt::from(expected)));

        let e = exp_matrix(&RatMatrix::from_i64_rows(&[&[9]]), 3, 6).unwrap();
        let expected = scalar_exp_residue(&rint(9), 3, 6);
        assert_eq!(e.entry_value(0, 0), Rational::from_integer(BigInt::from(expected)));
    }

    #[test]
    fn log_scalar_matches_series_oracle() {
        let l = log_matrix(&RatMatrix::from_i64_rows(&[&[5]]), 5, 4).unwrap();
        let expected = scalar_log_residue(&rint(5), 5, 4);
        assert_eq!(l.entry_value(0, 0), Rational::from_integer(BigInt::from(expected)));
    }

    #[test]
    fn log_of_nilpotent_is_exact_and_attains_norm_bound() {
        let y = nil_upper(rat(1, 125));
        let l = log_matrix(&y, 5, 4).unwrap();
        assert_eq!(l.to_exact(), y);
        // ‖log(1+Y)‖ = 125 = H_p(Y)^(d−1): the p > d bound holds with equality.
        assert_eq!(matrix_norm(&l), rint(125));
        assert_eq!(local_height_exact(&y, 5).unwrap(), rint(125));

        let zero = log_matrix(&RatMatrix::zero(2, 2), 5, 4).unwrap();
        assert_eq!(zero.to_exact(), RatMatrix::zero(2, 2));
    }

    #[test]
    fn log_rejects_failing_criterion() {
        match log_matrix(&RatMatrix::identity(2), 5, 4) {
            Err(Error::LogCriterion { k: 0 }) => {}
            other => panic!("expected criterion diagnostic, got {other:?}"),
        }
    }

    #[test]
    fn log_chi_necessity_examples() {
        assert!(check_log_chi_necessity(&nil_upper(rat(1, 5)), 5).unwrap());
        let three_i = RatMatrix::identity(2).scale(&rint(3));
        assert!(check_log_chi_necessity(&three_i, 3).unwrap());
        assert!(!check_log_chi_necessity(&RatMatrix::identity(2), 5).unwrap());
    }

    #[test]
    fn roundtrip_hand_cases() {
        assert!(log_exp_roundtrip(&nil_upper(rat(1, 25)), 5, 4).unwrap());
        assert!(log_exp_roundtrip(&RatMatrix::from_i64_rows(&[&[5]]), 5, 6).unwrap());
        // Commuting scalar + nilpotent part.
        let x = RatMatrix::from_i64_rows(&[&[25, 25], &[0, 25]]);
        assert!(log_exp_roundtrip(&x, 5, 4).unwrap());
    }

    #[test]
    fn roundtrip_with_unbounded_entries() {
        // ‖X‖ > 1 but χ_X = T² − 5T − 5 still passes the criterion: the
        // margin loop has to work at height exponent h > 0.
        let x = RatMatrix::from_rows(vec![
            vec![rint(5), rat(1, 5)],
            vec![rint(25), rint(0)],
        ])
        .unwrap();
        assert!(exp_converges(&x, 5).unwrap());
        assert!(log_exp_roundtrip(&x, 5, 4).unwrap());

        // χ = T² − 2pT with a p^(−2) entry.
        let x = RatMatrix::from_rows(vec![
            vec![rint(5), rat(1, 25)],
            vec![rint(625), rint(5)],
        ])
        .unwrap();
        assert_eq!(char_poly(&x).unwrap().coeff(0), &rint(0));
        assert!(log_exp_roundtrip(&x, 5, 5).unwrap());
    }

    #[test]
    fn padic_text_roundtrip() {
        let m = RatMatrix::from_rows(vec![
            vec![rat(1, 125), rint(2)],
            vec![rint(-3), rat(4, 5)],
        ])
        .unwrap();
        let z = PadicMatrix::from_exact(&m, 5, 4).unwrap();
        assert_eq!(z.shift(), 3);
        let text = z.to_string();
        let back: PadicMatrix = text.parse().unwrap();
        assert_eq!(back, z);
        assert_eq!(back.to_string(), text);

        // Negative entries land on canonical nonnegative representatives.
        let neg = PadicMatrix::from_exact(&RatMatrix::from_i64_rows(&[&[-1]]), 5, 2).unwrap();
        assert_eq!(neg.entry_value(0, 0), rint(24));
    }

    #[test]
    fn congruence_checks() {
        let x = RatMatrix::from_i64_rows(&[&[5]]);
        let e = exp_matrix(&x, 5, 4).unwrap();
        assert!(e.congruent_to_exact(&e.to_exact(), 4).unwrap());
        let e6 = exp_matrix(&x, 5, 6).unwrap();
        assert!(e.congruent(&e6, 4).unwrap());
        assert!(e.congruent_to_exact(&RatMatrix::identity(1), 1).unwrap());
        assert!(!e.congruent_to_exact(&RatMatrix::identity(1), 2).unwrap());
        assert!(e.congruent_to_exact(&RatMatrix::identity(1), 5).is_err());
    }

    #[test]
    fn canonical_residue_handles_negative_valuation() {
        // x = −1/5: unit part −1 mod 5^3 is 124, so the residue is 124/5.
        let r = canonical_residue(&rat(-1, 5), 5, 2);
        assert_eq!(r, rat(124, 5));
        assert_eq!(canonical_residue(&rint(50), 5, 2), Rational::zero());
        assert_eq!(canonical_residue(&rat(7, 3), 5, 1), rint(4));
    }
}
