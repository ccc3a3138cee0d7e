//! Orbit indices of lattice classes under p-adic matrix groups.
//!
//! A full-rank Z_p-lattice in Q_p^d is keyed by its Hermite basis, so orbit
//! enumeration is breadth-first search over exact rational matrices. The
//! bound experiments compare measured indices against lower bounds expressed
//! through the local height of the conjugated inclusion.

use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Zero};

use crate::exactnum::{
    abs_p, ensure_prime, factor, omega, pow_p, valuation_unchecked, Rational, Valuation,
};
use crate::lattice_heights::{
    conjugate_representation, hom_height_f, hom_height_p, standard_gl_basis,
};
use crate::matrix::RatMatrix;
use crate::padic::{canonical_residue, char_poly, exp_terms};
use crate::{Error, Result};

/// Class of a full-rank Z_p-lattice in Q_p^d, keyed by its Hermite basis.
///
/// The basis is upper triangular with diagonal entries exact powers of p;
/// above the pivot of row i the entries are canonical digit expansions mod
/// p^{a_i}. Two column spans over Z_p agree iff the forms agree, so derived
/// equality and hashing identify classes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LatticeClass {
    p: u64,
    hnf: RatMatrix,
}

impl LatticeClass {
    /// The standard lattice Z_p^d.
    pub fn standard(p: u64, d: usize) -> Result<Self> {
        ensure_prime(p)?;
        if d == 0 {
            return Err(Error::Dimension("lattice in dimension zero".into()));
        }
        Ok(LatticeClass {
            p,
            hnf: RatMatrix::identity(d),
        })
    }

    /// Class of the span over Z_p of the columns of `basis`.
    pub fn from_basis(p: u64, basis: &RatMatrix) -> Result<Self> {
        ensure_prime(p)?;
        if !basis.is_square() {
            return Err(Error::Dimension(format!(
                "lattice basis must be square, got {}x{}",
                basis.rows(),
                basis.cols()
            )));
        }
        Ok(LatticeClass {
            p,
            hnf: hermite_basis(basis, p)?,
        })
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.hnf.rows()
    }

    pub fn hermite(&self) -> &RatMatrix {
        &self.hnf
    }

    /// g·L for invertible g.
    pub fn apply(&self, g: &RatMatrix) -> Result<LatticeClass> {
        Ok(LatticeClass {
            p: self.p,
            hnf: hermite_basis(&g.mul(&self.hnf)?, self.p)?,
        })
    }

    /// Least entry valuation of the Hermite basis; −v bounds the p-power
    /// denominators appearing in the class.
    pub fn min_valuation(&self) -> i64 {
        self.hnf
            .entries()
            .filter_map(|x| match valuation_unchecked(x, self.p) {
                Valuation::Finite(v) => Some(v),
                Valuation::Infinite => None,
            })
            .min()
            .expect("Hermite diagonal is nonzero")
    }
}

/// Column Hermite form over Z_p, processed bottom row up: swap a least
/// valuation pivot into place, scale the column so the pivot is an exact
/// power of p (prime-to-p factors are units), clear the row to its left,
/// and reduce it to canonical digits on the right. The form is the unique
/// such basis of the span, so lattice equality is matrix equality.
fn hermite_basis(basis: &RatMatrix, p: u64) -> Result<RatMatrix> {
    let d = basis.rows();
    let mut b = basis.clone();
    for i in (0..d).rev() {
        let mut pivot: Option<(usize, i64)> = None;
        for j in 0..=i {
            if let Valuation::Finite(v) = valuation_unchecked(b.get(i, j), p) {
                if pivot.map_or(true, |(_, pv)| v < pv) {
                    pivot = Some((j, v));
                }
            }
        }
        let (j_star, a) = pivot.ok_or(Error::Singular)?;
        b.swap_cols(j_star, i);
        let p_a = pow_p(p, a);
        let unit = &p_a / b.get(i, i);
        // Active columns are supported on rows 0..=i: lower rows were
        // cleared while processing them.
        for r in 0..=i {
            let x = b.get(r, i) * &unit;
            b.set(r, i, x);
        }
        for j in 0..d {
            if j == i {
                continue;
            }
            // Left of the pivot the quotient is p-integral by minimality;
            // right of it we subtract the non-canonical part.
            let shift = if j < i {
                b.get(i, j) / &p_a
            } else {
                (b.get(i, j) - canonical_residue(b.get(i, j), p, a)) / &p_a
            };
            if shift.is_zero() {
                continue;
            }
            for r in 0..=i {
                let x = b.get(r, j) - &(&shift * b.get(r, i));
                b.set(r, j, x);
            }
        }
    }
    Ok(b)
}

/// Measured orbit size: exact when the walk closed, a lower bound when it
/// stopped at the cap or left the certified denominator range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Index {
    Exact(u64),
    AtLeast(u64),
}

impl Index {
    pub fn value(&self) -> u64 {
        match self {
            Index::Exact(n) | Index::AtLeast(n) => *n,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Index::Exact(_))
    }
}

impl fmt::Display for Index {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Index::Exact(n) => write!(f, "{n}"),
            Index::AtLeast(n) => write!(f, ">={n}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OrbitReport {
    pub index: Index,
    /// Distinct classes visited, or exponents examined in the cyclic case;
    /// equals the index value whenever the index is exact.
    pub witness_count: u64,
    pub generator_count: usize,
    /// Unit truncation level of a torus experiment, None elsewhere.
    pub precision_used: Option<u32>,
    /// Set when a class acquired denominators past what the level certifies.
    pub level_exceeded: Option<u32>,
}

#[derive(Debug, Clone, Copy)]
pub struct OrbitOptions {
    pub cap: u64,
    /// Abort once a class has an entry of valuation below −(level − 2).
    pub level: Option<u32>,
}

/// Orbit of the standard lattice under the group generated by `generators`
/// (inverses are adjoined), together with the classes visited. The walk
/// stops with AtLeast(cap) as soon as cap classes are known.
pub fn lattice_orbit_classes(
    generators: &[RatMatrix],
    p: u64,
    opts: OrbitOptions,
) -> Result<(OrbitReport, Vec<LatticeClass>)> {
    ensure_prime(p)?;
    if generators.is_empty() {
        return Err(Error::Experiment("orbit needs at least one generator".into()));
    }
    if opts.cap == 0 {
        return Err(Error::Experiment("orbit cap must be positive".into()));
    }
    let d = generators[0].rows();
    let mut step = Vec::with_capacity(2 * generators.len());
    for g in generators {
        if g.rows() != d || g.cols() != d {
            return Err(Error::Dimension(format!(
                "orbit generators must all be {d}x{d}, got {}x{}",
                g.rows(),
                g.cols()
            )));
        }
        step.push(g.clone());
        step.push(g.inverse()?);
    }
    let report = |index, witness_count, level_exceeded| OrbitReport {
        index,
        witness_count,
        generator_count: generators.len(),
        precision_used: opts.level,
        level_exceeded,
    };

    let start = LatticeClass::standard(p, d)?;
    let mut seen: HashSet<LatticeClass> = HashSet::new();
    let mut order: Vec<LatticeClass> = Vec::new();
    let mut queue: VecDeque<LatticeClass> = VecDeque::new();
    seen.insert(start.clone());
    order.push(start.clone());
    queue.push_back(start);
    while let Some(class) = queue.pop_front() {
        for g in &step {
            let next = class.apply(g)?;
            if let Some(level) = opts.level {
                if next.min_valuation() < -(i64::from(level) - 2) {
                    let n = order.len() as u64;
                    return Ok((report(Index::AtLeast(n), n, Some(level)), order));
                }
            }
            if seen.contains(&next) {
                continue;
            }
            if order.len() as u64 == opts.cap {
                return Ok((report(Index::AtLeast(opts.cap), opts.cap, None), order));
            }
            seen.insert(next.clone());
            order.push(next.clone());
            queue.push_back(next);
        }
    }
    let n = order.len() as u64;
    Ok((report(Index::Exact(n), n, None), order))
}

/// Index of the orbit of Z_p^d under the generated group, capped.
pub fn lattice_orbit_index(generators: &[RatMatrix], p: u64, cap: u64) -> Result<OrbitReport> {
    Ok(lattice_orbit_classes(generators, p, OrbitOptions { cap, level: None })?.0)
}

/// Smallest i in [1, cap] with exp(iX) in GL_d(Z_p).
///
/// The exp series of X is truncated once the tail valuation clears zero;
/// replacing X by iX multiplies term n by i^n, which never lowers a
/// valuation, so the partial sum decides p-integrality of exp(iX) exactly.
/// Once integral, the determinant of the partial sum agrees with the limit
/// mod p and decides invertibility.
pub fn cyclic_exp_index(x: &RatMatrix, p: u64, cap: u64) -> Result<OrbitReport> {
    ensure_prime(p)?;
    if cap == 0 {
        return Err(Error::Experiment("cyclic cap must be positive".into()));
    }
    let terms = exp_terms(x, p, 0)?;
    let d = x.rows();
    let report = |index, witness_count| OrbitReport {
        index,
        witness_count,
        generator_count: 1,
        precision_used: None,
        level_exceeded: None,
    };
    for i in 1..=cap {
        let mut sum = RatMatrix::zero(d, d);
        let mut power = Rational::one();
        let step = Rational::from_integer(BigInt::from(i));
        for t in &terms {
            sum = sum.add(&t.scale(&power))?;
            power *= &step;
        }
        if !is_p_integral(&sum, p) {
            continue;
        }
        let det = sum.det()?;
        if valuation_unchecked(&det, p) == Valuation::Finite(0) {
            return Ok(report(Index::Exact(i), i));
        }
    }
    Ok(report(Index::AtLeast(cap), cap))
}

fn is_p_integral(m: &RatMatrix, p: u64) -> bool {
    m.entries().all(|x| match valuation_unchecked(x, p) {
        Valuation::Finite(v) => v >= 0,
        Valuation::Infinite => true,
    })
}

/// exp of a nilpotent matrix: the series stops at the dimension, so the
/// value is exact and rational.
pub fn exp_nilpotent(x: &RatMatrix) -> Result<RatMatrix> {
    if !char_poly(x)?.is_t_power() {
        return Err(Error::NotNilpotent);
    }
    let d = x.rows();
    let mut sum = RatMatrix::identity(d);
    let mut term = RatMatrix::identity(d);
    for n in 1..d {
        term = term
            .mul(x)?
            .scale(&Rational::new(BigInt::one(), BigInt::from(n)));
        sum = sum.add(&term)?;
    }
    Ok(sum)
}

/// lcm(1, …, d), the denominator scale of the exp and log series in
/// dimension d.
pub fn lcm_up_to(d: usize) -> BigInt {
    (1..=d as u64).fold(BigInt::one(), |acc, n| acc.lcm(&BigInt::from(n)))
}

/// Integer generators of the image of Z_p^× in (Z/p^level)^×: a primitive
/// root mod p together with 1+p for odd p, and {−1, 5} for p = 2. The
/// integers are genuine p-adic units, so diagonal matrices built from them
/// lie in the torus itself rather than approximating it.
pub fn unit_group_generators(p: u64, level: u32) -> Vec<BigInt> {
    if p == 2 {
        return match level {
            0 | 1 => Vec::new(),
            2 => vec![BigInt::from(-1)],
            _ => vec![BigInt::from(-1), BigInt::from(5)],
        };
    }
    // The same pair generates (Z/p^n)^× for every n ≥ 1.
    let _ = level;
    vec![BigInt::from(primitive_root(p)), BigInt::from(p + 1)]
}

/// Least primitive root mod an odd prime.
fn primitive_root(p: u64) -> u64 {
    let phi = p - 1;
    let prime_factors: Vec<u64> = factor(&BigUint::from(phi)).into_iter().map(|(q, _)| q).collect();
    (2..p)
        .find(|&g| prime_factors.iter().all(|&q| pow_mod(g, phi / q, p) != 1))
        .expect("every odd prime has a primitive root")
}

fn pow_mod(base: u64, mut e: u64, m: u64) -> u64 {
    let m = u128::from(m);
    let mut b = u128::from(base) % m;
    let mut acc = 1u128;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * b % m;
        }
        b = b * b % m;
        e >>= 1;
    }
    acc as u64
}

/// Which bounded family generates the acting group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalBoundCase {
    /// exp(2p·Y) for Y spanning the conjugated nilpotent line.
    Exp2p,
    /// exp(Y) for Y spanning the conjugated nilpotent line.
    Nilpotent,
    /// The conjugated diagonal torus with unit entries.
    Torus,
}

impl LocalBoundCase {
    pub fn tag(&self) -> &'static str {
        match self {
            LocalBoundCase::Exp2p => "exp2p",
            LocalBoundCase::Nilpotent => "nilpotent",
            LocalBoundCase::Torus => "torus",
        }
    }
}

/// The subalgebra whose conjugate drives each case: the nilpotent line
/// span(E_12) for the exp families, the full diagonal for the torus.
fn case_basis(case: LocalBoundCase, d: usize) -> Vec<RatMatrix> {
    match case {
        LocalBoundCase::Exp2p | LocalBoundCase::Nilpotent => {
            let mut e = RatMatrix::zero(d, d);
            e.set(0, 1, Rational::one());
            vec![e]
        }
        LocalBoundCase::Torus => (0..d)
            .map(|i| {
                let mut e = RatMatrix::zero(d, d);
                e.set(i, i, Rational::one());
                e
            })
            .collect(),
    }
}

#[derive(Debug, Clone)]
pub struct LocalBoundExperiment {
    pub case: LocalBoundCase,
    pub p: u64,
    pub dim: usize,
    pub conjugator: RatMatrix,
    pub cap: u64,
    /// Torus unit level; defaults to the height exponent of dφ plus 2.
    pub level: Option<u32>,
    /// Assumed torus constant c_2. When absent the experiment records the
    /// smallest admissible value instead of judging against a given one.
    pub c2: Option<Rational>,
}

#[derive(Debug, Clone)]
pub struct BoundReport {
    pub case: LocalBoundCase,
    pub p: u64,
    /// H_p(dφ).
    pub height: BigInt,
    /// The asserted lower bound on the orbit index.
    pub bound: Rational,
    pub orbit: OrbitReport,
    /// index / bound, when the index is exact.
    pub slack: Option<Rational>,
    /// Torus only: least c_2 for which the measured index meets p/c_2.
    pub c2_required: Option<Rational>,
    pub pass: bool,
    /// The walk hit its cap before the bound was decided.
    pub inconclusive: bool,
}

/// Runs one local bound experiment: builds dφ for the case subalgebra,
/// measures the orbit index of the standard lattice under the case group,
/// and compares against the bound the case asserts.
pub fn verify_local_bound(exp: &LocalBoundExperiment) -> Result<BoundReport> {
    ensure_prime(exp.p)?;
    let d = exp.dim;
    if d < 2 {
        return Err(Error::Dimension("bound experiments need dim ≥ 2".into()));
    }
    if exp.conjugator.rows() != d || exp.conjugator.cols() != d {
        return Err(Error::Dimension(format!(
            "conjugator is {}x{}, experiment dimension {d}",
            exp.conjugator.rows(),
            exp.conjugator.cols()
        )));
    }
    let g = &exp.conjugator;
    let g_inv = g.inverse()?;
    let conj = |b: &RatMatrix| -> Result<RatMatrix> { g.mul(b)?.mul(&g_inv) };

    let basis_m = case_basis(exp.case, d);
    let dphi = conjugate_representation(g, &basis_m, &standard_gl_basis(d))?;
    let height = hom_height_p(&dphi, exp.p)?;

    let (generators, level) = match exp.case {
        LocalBoundCase::Exp2p | LocalBoundCase::Nilpotent => {
            let scale = match exp.case {
                LocalBoundCase::Exp2p => {
                    Rational::from_integer(BigInt::from(2u32) * BigInt::from(exp.p))
                }
                _ => Rational::one(),
            };
            let mut gens = Vec::with_capacity(basis_m.len());
            for b in &basis_m {
                gens.push(exp_nilpotent(&conj(b)?.scale(&scale))?);
            }
            (gens, None)
        }
        LocalBoundCase::Torus => {
            let k = p_power_exponent(&height, exp.p);
            let level = exp.level.unwrap_or(k + 2);
            let units = unit_group_generators(exp.p, level);
            let mut gens = Vec::new();
            for slot in 0..d {
                for u in &units {
                    let mut t = RatMatrix::identity(d);
                    t.set(slot, slot, Rational::from_integer(u.clone()));
                    gens.push(conj(&t)?);
                }
            }
            if gens.is_empty() {
                // (Z/2)^× is trivial: the group is generated by the identity.
                gens.push(RatMatrix::identity(d));
            }
            (gens, Some(level))
        }
    };

    let (orbit, _) = lattice_orbit_classes(&generators, exp.p, OrbitOptions { cap: exp.cap, level })?;

    let index_rat = Rational::from_integer(BigInt::from(orbit.index.value()));
    let d_star = lcm_up_to(d);
    let h_rat = Rational::from_integer(height.clone());
    let (bound, c2_required) = match exp.case {
        LocalBoundCase::Exp2p => {
            let c = BigInt::from(2u32) * BigInt::from(exp.p) * &d_star;
            (abs_p(&Rational::from_integer(c), exp.p)? * &h_rat, None)
        }
        LocalBoundCase::Nilpotent => (
            abs_p(&Rational::from_integer(d_star.clone()), exp.p)? * &h_rat,
            None,
        ),
        LocalBoundCase::Torus => {
            let p_rat = Rational::from_integer(BigInt::from(exp.p));
            let required = &p_rat / &index_rat;
            let c2 = exp.c2.clone().unwrap_or_else(|| required.clone());
            (p_rat / c2, Some(required))
        }
    };

    let cleared = index_rat >= bound;
    let slack = if orbit.index.is_exact() {
        Some(&index_rat / &bound)
    } else {
        None
    };
    Ok(BoundReport {
        case: exp.case,
        p: exp.p,
        height,
        bound,
        slack,
        c2_required,
        pass: cleared,
        inconclusive: !cleared && !orbit.index.is_exact(),
        orbit,
    })
}

/// Exponent e with h = p^e; h must be a power of p.
fn p_power_exponent(h: &BigInt, p: u64) -> u32 {
    let p = BigInt::from(p);
    let mut h = h.clone();
    let mut e = 0u32;
    while h > BigInt::one() {
        let (q, r) = h.div_rem(&p);
        debug_assert!(r.is_zero(), "height is a power of p");
        h = q;
        e += 1;
    }
    e
}

/// Coset oracle for the torus orbit: the lattice reached from t depends
/// only on t mod 1 + p^k M_d(Z_p), so enumerating integer unit tuples mod
/// p^k covers the orbit exactly. Independent of the search in
/// `lattice_orbit_classes`.
pub fn torus_orbit_by_enumeration(
    p: u64,
    conjugator: &RatMatrix,
    k: u32,
    cap: u64,
) -> Result<u64> {
    ensure_prime(p)?;
    let d = conjugator.rows();
    let g_inv = conjugator.inverse()?;
    let pk = p
        .checked_pow(k)
        .ok_or_else(|| Error::Experiment("oracle modulus overflows u64".into()))?;
    let units: Vec<u64> = (1..pk.max(2)).filter(|u| u % p != 0).collect();
    let mut tuple = vec![0usize; d];
    let mut seen: HashSet<LatticeClass> = HashSet::new();
    loop {
        let mut t = RatMatrix::zero(d, d);
        for (slot, &ui) in tuple.iter().enumerate() {
            t.set(slot, slot, Rational::from_integer(BigInt::from(units[ui])));
        }
        let image = conjugator.mul(&t)?.mul(&g_inv)?;
        seen.insert(LatticeClass::from_basis(p, &image)?);
        if seen.len() as u64 > cap {
            return Err(Error::Experiment("oracle exceeded its cap".into()));
        }
        let mut slot = 0;
        loop {
            if slot == d {
                return Ok(seen.len() as u64);
            }
            tuple[slot] += 1;
            if tuple[slot] < units.len() {
                break;
            }
            tuple[slot] = 0;
            slot += 1;
        }
    }
}

#[derive(Debug, Clone)]
pub struct GlobalBoundExperiment {
    pub case: LocalBoundCase,
    pub dim: usize,
    pub conjugator: RatMatrix,
    /// Must cover every prime dividing H_f(dφ).
    pub primes: Vec<u64>,
    pub cap: u64,
    /// Constant c in ∏_p index_p ≥ H_f/c^ω; defaults to 2·lcm(1..dim).
    pub c: Option<Rational>,
}

#[derive(Debug, Clone)]
pub struct GlobalBoundReport {
    pub h_f: BigInt,
    pub omega: usize,
    pub per_prime: Vec<(u64, Index)>,
    /// Product of the measured indices; a lower bound on the true product
    /// when any factor is AtLeast.
    pub product: BigInt,
    pub c_used: Rational,
    /// H_f / c^ω.
    pub bound: Rational,
    /// Least integer c with product·c^ω ≥ H_f.
    pub c_min: BigInt,
    pub pass: bool,
    pub inconclusive: bool,
}

/// Product of per-prime orbit indices against the finite height of dφ.
pub fn verify_global_bound(exp: &GlobalBoundExperiment) -> Result<GlobalBoundReport> {
    if exp.primes.is_empty() {
        return Err(Error::Experiment("global bound needs at least one prime".into()));
    }
    for (i, p) in exp.primes.iter().enumerate() {
        ensure_prime(*p)?;
        if exp.primes[..i].contains(p) {
            return Err(Error::Experiment(format!("repeated prime {p}")));
        }
    }
    let basis_m = case_basis(exp.case, exp.dim);
    let dphi = conjugate_representation(&exp.conjugator, &basis_m, &standard_gl_basis(exp.dim))?;
    let h_f = hom_height_f(&dphi);
    let h_f_uint = h_f.to_biguint().expect("finite height is positive");
    for (q, _) in factor(&h_f_uint) {
        if !exp.primes.contains(&q) {
            return Err(Error::Experiment(format!(
                "finite height {h_f} involves prime {q} outside the experiment set"
            )));
        }
    }
    let w = omega(&h_f_uint);

    let mut per_prime = Vec::with_capacity(exp.primes.len());
    let mut product = BigInt::one();
    let mut all_exact = true;
    for &p in &exp.primes {
        let local = LocalBoundExperiment {
            case: exp.case,
            p,
            dim: exp.dim,
            conjugator: exp.conjugator.clone(),
            cap: exp.cap,
            level: None,
            c2: None,
        };
        let report = verify_local_bound(&local)?;
        all_exact &= report.orbit.index.is_exact();
        product *= BigInt::from(report.orbit.index.value());
        per_prime.push((p, report.orbit.index));
    }

    let c_used = exp
        .c
        .clone()
        .unwrap_or_else(|| Rational::from_integer(BigInt::from(2) * lcm_up_to(exp.dim)));
    let c_pow = (0..w).fold(Rational::one(), |acc, _| acc * &c_used);
    let bound = Rational::from_integer(h_f.clone()) / c_pow;
    let cleared = Rational::from_integer(product.clone()) >= bound;

    let mut c_min = BigInt::one();
    loop {
        let c_pow = (0..w).fold(BigInt::one(), |acc, _| acc * &c_min);
        if &product * c_pow >= h_f {
            break;
        }
        c_min += 1;
    }

    Ok(GlobalBoundReport {
        h_f,
        omega: w,
        per_prime,
        product,
        c_used,
        bound,
        c_min,
        pass: cleared,
        inconclusive: !cleared && !all_exact,
    })
}

/// |GL(n, Z/3)| = 3^(n(n−1)/2)·∏_{i=1..n}(3^i − 1).
pub fn minkowski_constant(n: u32) -> BigUint {
    let three = BigUint::from(3u32);
    let mut c = three.pow(n * (n.saturating_sub(1)) / 2);
    for i in 1..=n {
        c *= three.pow(i) - BigUint::one();
    }
    c
}

/// Brute-force |GL(n, Z/3)| for n ≤ 3: determinants of all 3^(n²) matrices.
pub fn count_invertible_mod3(n: u32) -> Result<u64> {
    if n == 0 || n > 3 {
        return Err(Error::Experiment(
            "brute-force unit count supports 1 ≤ n ≤ 3".into(),
        ));
    }
    let n = n as usize;
    let cells = n * n;
    let total = 3u64.pow(cells as u32);
    let mut m = vec![0i64; cells];
    let mut count = 0u64;
    for code in 0..total {
        let mut c = code;
        for e in m.iter_mut() {
            *e = (c % 3) as i64;
            c /= 3;
        }
        if small_det(&m, n).rem_euclid(3) != 0 {
            count += 1;
        }
    }
    Ok(count)
}

#[derive(Debug, Clone)]
pub struct TorsionReport {
    pub n: usize,
    pub modulus: i64,
    pub entry_bound: i64,
    /// Box members congruent to I that survive the trace and det filters.
    pub candidates: u64,
    /// Nontrivial torsion witnesses (matrix row-major, order).
    pub witnesses: Vec<(Vec<i64>, u32)>,
    pub torsion_free: bool,
}

/// Scans integer matrices ≡ I mod `modulus` inside an entry box for
/// nontrivial torsion of order 2..6. Finite-order elements have root-of-unity
/// eigenvalues, so |trace| ≤ n and det = ±1 filter candidates first. With
/// modulus 3 the scan must come up empty; with modulus 2 it finds −I.
pub fn minkowski_torsion_check_in_box(
    n: usize,
    modulus: i64,
    entry_bound: i64,
) -> Result<TorsionReport> {
    if n == 0 || n > 3 {
        return Err(Error::Experiment("torsion scan supports 1 ≤ n ≤ 3".into()));
    }
    if modulus < 2 || entry_bound < 1 {
        return Err(Error::Experiment(
            "torsion scan needs modulus ≥ 2 and a positive entry box".into(),
        ));
    }
    let cells = n * n;
    let mut values: Vec<Vec<i64>> = Vec::with_capacity(cells);
    for i in 0..n {
        for j in 0..n {
            let target = i64::from(i == j);
            values.push(
                (-entry_bound..=entry_bound)
                    .filter(|v| (v - target).rem_euclid(modulus) == 0)
                    .collect(),
            );
        }
    }
    let mut idx = vec![0usize; cells];
    let mut m = vec![0i64; cells];
    let mut candidates = 0u64;
    let mut witnesses: Vec<(Vec<i64>, u32)> = Vec::new();
    'outer: loop {
        for (c, &i) in idx.iter().enumerate() {
            m[c] = values[c][i];
        }
        let trace: i64 = (0..n).map(|i| m[i * n + i]).sum();
        if trace.abs() <= n as i64 {
            let det = small_det(&m, n);
            if det == 1 || det == -1 {
                candidates += 1;
                if !small_is_identity(&m, n) {
                    if let Some(order) = (2..=6u32).find(|&e| small_pow_is_identity(&m, n, e)) {
                        witnesses.push((m.clone(), order));
                    }
                }
            }
        }
        let mut c = 0;
        loop {
            if c == cells {
                break 'outer;
            }
            idx[c] += 1;
            if idx[c] < values[c].len() {
                break;
            }
            idx[c] = 0;
            c += 1;
        }
    }
    let torsion_free = witnesses.is_empty();
    Ok(TorsionReport {
        n,
        modulus,
        entry_bound,
        candidates,
        witnesses,
        torsion_free,
    })
}

/// The congruence check at the canonical modulus 3: true iff the box holds
/// no nontrivial torsion congruent to the identity.
pub fn minkowski_torsion_check(n: usize) -> Result<bool> {
    Ok(minkowski_torsion_check_in_box(n, 3, 9)?.torsion_free)
}

fn small_det(m: &[i64], n: usize) -> i64 {
    match n {
        1 => m[0],
        2 => m[0] * m[3] - m[1] * m[2],
        3 => {
            m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
                + m[2] * (m[3] * m[7] - m[4] * m[6])
        }
        _ => unreachable!("small determinants are 1x1 to 3x3"),
    }
}

fn small_is_identity(m: &[i64], n: usize) -> bool {
    m.iter()
        .enumerate()
        .all(|(c, &v)| v == i64::from(c / n == c % n))
}

fn small_mul(a: &[i64], b: &[i64], n: usize) -> Vec<i64> {
    let mut out = vec![0i64; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

fn small_pow_is_identity(m: &[i64], n: usize, e: u32) -> bool {
    let mut acc = m.to_vec();
    for _ in 1..e {
        acc = small_mul(&acc, m, n);
    }
    small_is_identity(&acc, n)
}

/// Declarative description of one orbit experiment.
///
/// Text form: a header line of key=value fields (case, p, d, cap, and for
/// torus experiments optionally level and c2), then a matrix block of d rows
/// introduced by `matrix:` or `conjugator:`. The cyclic case reads the block
/// as the series argument X; the bound cases read it as the conjugator.
#[derive(Debug, Clone)]
pub enum ExperimentDescriptor {
    Cyclic { p: u64, matrix: RatMatrix, cap: u64 },
    Local(LocalBoundExperiment),
}

#[derive(Debug, Clone)]
pub enum DescriptorReport {
    Orbit(OrbitReport),
    Bound(BoundReport),
}

impl ExperimentDescriptor {
    pub fn run(&self) -> Result<DescriptorReport> {
        match self {
            ExperimentDescriptor::Cyclic { p, matrix, cap } => {
                Ok(DescriptorReport::Orbit(cyclic_exp_index(matrix, *p, *cap)?))
            }
            ExperimentDescriptor::Local(exp) => {
                Ok(DescriptorReport::Bound(verify_local_bound(exp)?))
            }
        }
    }
}

impl fmt::Display for ExperimentDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExperimentDescriptor::Cyclic { p, matrix, cap } => {
                writeln!(f, "case=cyclic p={p} d={} cap={cap}", matrix.rows())?;
                writeln!(f, "matrix:")?;
                write!(f, "{}", matrix.body_string())
            }
            ExperimentDescriptor::Local(exp) => {
                write!(f, "case={} p={} d={} cap={}", exp.case.tag(), exp.p, exp.dim, exp.cap)?;
                if let Some(level) = exp.level {
                    write!(f, " level={level}")?;
                }
                if let Some(c2) = &exp.c2 {
                    write!(f, " c2={c2}")?;
                }
                writeln!(f)?;
                writeln!(f, "conjugator:")?;
                write!(f, "{}", exp.conjugator.body_string())
            }
        }
    }
}

impl FromStr for ExperimentDescriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty experiment descriptor".into()))?;
        let mut case = None;
        let mut p = None;
        let mut d = None;
        let mut cap = None;
        let mut level = None;
        let mut c2 = None;
        for field in header.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got {field:?}")))?;
            let bad = |what: &str| Error::Parse(format!("bad {what} value {value:?}"));
            match key {
                "case" => case = Some(value.to_string()),
                "p" => p = Some(value.parse::<u64>().map_err(|_| bad("prime"))?),
                "d" => d = Some(value.parse::<usize>().map_err(|_| bad("dimension"))?),
                "cap" => cap = Some(value.parse::<u64>().map_err(|_| bad("cap"))?),
                "level" => level = Some(value.parse::<u32>().map_err(|_| bad("level"))?),
                "c2" => c2 = Some(value.parse::<Rational>().map_err(|_| bad("c2"))?),
                _ => return Err(Error::Parse(format!("unknown descriptor key {key:?}"))),
            }
        }
        let missing = |what: &str| Error::Parse(format!("descriptor is missing {what}"));
        let case = case.ok_or_else(|| missing("case"))?;
        let p = p.ok_or_else(|| missing("p"))?;
        let d = d.ok_or_else(|| missing("d"))?;
        let cap = cap.ok_or_else(|| missing("cap"))?;

        let label = lines
            .next()
            .ok_or_else(|| missing("a matrix block"))?;
        if label != "matrix:" && label != "conjugator:" {
            return Err(Error::Parse(format!(
                "expected `matrix:` or `conjugator:`, got {label:?}"
            )));
        }
        let body: Vec<&str> = lines.collect();
        let matrix = RatMatrix::parse_body(&body.join("\n"), d, d)?;

        let case = match case.as_str() {
            "cyclic" => {
                if level.is_some() || c2.is_some() {
                    return Err(Error::Parse(
                        "level and c2 apply only to torus experiments".into(),
                    ));
                }
                ExperimentDescriptor::Cyclic { p, matrix, cap }
            }
            tag => {
                let case = match tag {
                    "exp2p" => LocalBoundCase::Exp2p,
                    "nilpotent" => LocalBoundCase::Nilpotent,
                    "torus" => LocalBoundCase::Torus,
                    _ => return Err(Error::Parse(format!("unknown case tag {tag:?}"))),
                };
                if case != LocalBoundCase::Torus && (level.is_some() || c2.is_some()) {
                    return Err(Error::Parse(
                        "level and c2 apply only to torus experiments".into(),
                    ));
                }
                ExperimentDescriptor::Local(LocalBoundExperiment {
                    case,
                    p,
                    dim: d,
                    conjugator: matrix,
                    cap,
                    level,
                    c2,
                })
            }
        };
        Ok(case)
    }
}
