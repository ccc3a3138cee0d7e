//! Heights of homomorphisms between based lattices: per-prime heights H_p,
//! the finite height H_f as an lcm of denominators, composition with
//! integral automorphisms, and the matrix of a conjugation map expressed in
//! explicit lattice bases.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{One, Signed};
use rand::Rng;

use crate::exactnum::{denominator_lcm, ensure_prime, valuation_unchecked, Rational, Valuation};
use crate::matrix::RatMatrix;
use crate::{Error, Result};

/// A homomorphism between based lattices, as its exact rational matrix in
/// the fixed bases (columns index the source basis).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeHom {
    matrix: RatMatrix,
}

impl LatticeHom {
    pub fn new(matrix: RatMatrix) -> Self {
        LatticeHom { matrix }
    }

    pub fn matrix(&self) -> &RatMatrix {
        &self.matrix
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.cols()
    }

    /// k∘Φ∘u on raw matrices; the typed entry point is
    /// `compose_with_automorphisms`.
    pub fn composed_with(&self, k: &RatMatrix, u: &RatMatrix) -> Result<LatticeHom> {
        Ok(LatticeHom::new(k.mul(&self.matrix)?.mul(u)?))
    }
}

/// Text form: a `rows cols` header line, then the rational entries.
impl fmt::Display for LatticeHom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} {}", self.rows(), self.cols())?;
        write!(f, "{}", self.matrix.body_string())
    }
}

impl FromStr for LatticeHom {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty lattice hom text".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::Parse(format!(
                "header must be `rows cols`, got {header:?}"
            )));
        }
        let bad = |what: &str| Error::Parse(format!("bad {what} in header {header:?}"));
        let rows: usize = fields[0].parse().map_err(|_| bad("row count"))?;
        let cols: usize = fields[1].parse().map_err(|_| bad("column count"))?;
        let body: Vec<&str> = lines.collect();
        Ok(LatticeHom::new(RatMatrix::parse_body(
            &body.join("\n"),
            rows,
            cols,
        )?))
    }
}

/// An automorphism of a based lattice: integral matrix with det = ±1, so
/// the inverse is integral as well.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegralAutomorphism {
    matrix: RatMatrix,
    inverse: RatMatrix,
}

impl IntegralAutomorphism {
    pub fn new(matrix: RatMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Dimension(
                "automorphism matrix must be square".into(),
            ));
        }
        if !matrix.is_integral() {
            return Err(Error::NotIntegral);
        }
        let det = matrix.det()?;
        if det != Rational::one() && det != -Rational::one() {
            return Err(Error::NotUnimodular(det));
        }
        let inverse = matrix.inverse()?;
        debug_assert!(inverse.is_integral());
        Ok(IntegralAutomorphism { matrix, inverse })
    }

    pub fn matrix(&self) -> &RatMatrix {
        &self.matrix
    }

    pub fn inverse(&self) -> &RatMatrix {
        &self.inverse
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }
}

/// H_p(Φ) = p^max(0, −min v_p(entry)): the least power of p pushing the
/// image of the source lattice into the target lattice, 1 when Φ is already
/// p-integral.
pub fn hom_height_p(phi: &LatticeHom, p: u64) -> Result<BigInt> {
    ensure_prime(p)?;
    let mut worst: i64 = 0;
    for x in phi.matrix.entries() {
        if let Valuation::Finite(v) = valuation_unchecked(x, p) {
            worst = worst.min(v);
        }
    }
    let e = u32::try_from(-worst).expect("height exponent fits u32");
    Ok(BigInt::from(p).pow(e))
}

/// H_f(Φ): the least n ≥ 1 with n·Φ integral, i.e. the lcm of the entry
/// denominators. Equals ∏_p hom_height_p(Φ).
pub fn hom_height_f(phi: &LatticeHom) -> BigInt {
    denominator_lcm(phi.matrix.entries()).abs()
}

/// k∘Φ∘u for integral automorphisms k of the target and u of the source.
/// Finite heights are invariant under this composition; the property suite
/// asserts that, not this operation.
pub fn compose_with_automorphisms(
    phi: &LatticeHom,
    k: &IntegralAutomorphism,
    u: &IntegralAutomorphism,
) -> Result<LatticeHom> {
    if k.dim() != phi.rows() || u.dim() != phi.cols() {
        return Err(Error::Dimension(format!(
            "compose: {}x{} hom with k of dim {}, u of dim {}",
            phi.rows(),
            phi.cols(),
            k.dim(),
            u.dim()
        )));
    }
    phi.composed_with(k.matrix(), u.matrix())
}

/// The standard basis E_11, E_12, …, E_dd of gl(d, Z), row-major, matching
/// the vectorization order of `RatMatrix`.
pub fn standard_gl_basis(d: usize) -> Vec<RatMatrix> {
    let mut basis = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            let mut e = RatMatrix::zero(d, d);
            e.set(i, j, Rational::one());
            basis.push(e);
        }
    }
    basis
}

/// Matrix of X ↦ g·X·g^(−1) restricted to span(basis_m), written in the two
/// given bases: column j holds the basis_g coordinates of g·basis_m[j]·g^(−1).
pub fn conjugate_representation(
    g: &RatMatrix,
    basis_m: &[RatMatrix],
    basis_g: &[RatMatrix],
) -> Result<LatticeHom> {
    if basis_m.is_empty() || basis_g.is_empty() {
        return Err(Error::Experiment("empty lattice basis".into()));
    }
    let d = g.rows();
    let g_inv = g.inverse()?;

    let stack = |mats: &[RatMatrix]| -> Result<RatMatrix> {
        let mut m = RatMatrix::zero(d * d, mats.len());
        for (j, b) in mats.iter().enumerate() {
            if b.rows() != d || b.cols() != d {
                return Err(Error::Dimension(format!(
                    "basis element is {}x{}, ambient is {d}x{d}",
                    b.rows(),
                    b.cols()
                )));
            }
            let col = b.vectorize();
            for i in 0..d * d {
                m.set(i, j, col.get(i, 0).clone());
            }
        }
        Ok(m)
    };

    let source = stack(basis_m)?;
    if source.rank() < basis_m.len() {
        return Err(Error::Experiment(
            "source basis is linearly dependent".into(),
        ));
    }
    let images: Vec<RatMatrix> = basis_m
        .iter()
        .map(|b| g.mul(b)?.mul(&g_inv))
        .collect::<Result<_>>()?;
    let image_stack = stack(&images)?;
    let target = stack(basis_g)?;
    let coords = target.solve(&image_stack)?.ok_or_else(|| {
        Error::Experiment("conjugated image lies outside the span of the target basis".into())
    })?;
    // solve() zeroes free variables; with an independent target basis the
    // coordinates are unique, but verify the factorization to be safe.
    if target.mul(&coords)? != image_stack {
        return Err(Error::Experiment(
            "target basis does not span the conjugated image".into(),
        ));
    }
    Ok(LatticeHom::new(coords))
}

/// Seeded random hom: numerators in [−num_bound, num_bound], denominators
/// drawn from the given list (use 1 for integral entries).
pub fn sample_hom<R: Rng>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    num_bound: i64,
    denominators: &[u64],
) -> LatticeHom {
    let m = RatMatrix::from_fn(rows, cols, |_, _| {
        let n = rng.gen_range(-num_bound..=num_bound);
        let d = denominators[rng.gen_range(0..denominators.len())];
        Rational::new(BigInt::from(n), BigInt::from(d))
    });
    LatticeHom::new(m)
}

/// Random unimodular integer matrix: a product of elementary shears, row
/// swaps, and sign flips, so det = ±1 by construction.
pub fn sample_unimodular<R: Rng>(rng: &mut R, n: usize, steps: usize) -> IntegralAutomorphism {
    let mut m = RatMatrix::identity(n);
    for _ in 0..steps {
        match rng.gen_range(0..4u8) {
            0 | 1 => {
                if n < 2 {
                    continue;
                }
                let i = rng.gen_range(0..n);
                let mut j = rng.gen_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                let c = rng.gen_range(-3i64..=3);
                let mut shear = RatMatrix::identity(n);
                shear.set(i, j, Rational::from_integer(BigInt::from(c)));
                m = shear.mul(&m).expect("square");
            }
            2 => {
                if n < 2 {
                    continue;
                }
                let i = rng.gen_range(0..n);
                let mut j = rng.gen_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                let mut perm = RatMatrix::identity(n);
                perm.set(i, i, Rational::from_integer(BigInt::from(0)));
                perm.set(j, j, Rational::from_integer(BigInt::from(0)));
                perm.set(i, j, Rational::one());
                perm.set(j, i, Rational::one());
                m = perm.mul(&m).expect("square");
            }
            _ => {
                let i = rng.gen_range(0..n);
                let mut flip = RatMatrix::identity(n);
                flip.set(i, i, -Rational::one());
                m = flip.mul(&m).expect("square");
            }
        }
    }
    IntegralAutomorphism::new(m).expect("product of unimodular factors")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactnum::{rat, rint};

    #[test]
    fn per_prime_height_examples() {
        let phi = LatticeHom::new(RatMatrix::identity(3));
        assert_eq!(hom_height_p(&phi, 2).unwrap(), BigInt::from(1));

        let phi = LatticeHom::new(RatMatrix::from_rows(vec![vec![rat(1, 12)]]).unwrap());
        assert_eq!(hom_height_p(&phi, 2).unwrap(), BigInt::from(4));
        assert_eq!(hom_height_p(&phi, 3).unwrap(), BigInt::from(3));
        assert_eq!(hom_height_p(&phi, 5).unwrap(), BigInt::from(1));
    }

    #[test]
    fn finite_height_examples() {
        let phi = LatticeHom::new(RatMatrix::from_i64_rows(&[&[3, -7], &[0, 2]]));
        assert_eq!(hom_height_f(&phi), BigInt::from(1));

        let phi = LatticeHom::new(
            RatMatrix::from_rows(vec![vec![rat(1, 12), rat(1, 10)]]).unwrap(),
        );
        assert_eq!(hom_height_f(&phi), BigInt::from(60));
        // H_f = ∏ H_p over the supporting primes.
        let product = hom_height_p(&phi, 2).unwrap()
            * hom_height_p(&phi, 3).unwrap()
            * hom_height_p(&phi, 5).unwrap();
        assert_eq!(product, BigInt::from(60));

        let phi = LatticeHom::new(RatMatrix::from_rows(vec![vec![rat(1, 343)]]).unwrap());
        assert_eq!(hom_height_f(&phi), BigInt::from(343));
    }

    #[test]
    fn compose_preserves_finite_height() {
        let phi = LatticeHom::new(RatMatrix::from_rows(vec![vec![rat(1, 5)]]).unwrap());
        let k = IntegralAutomorphism::new(RatMatrix::from_i64_rows(&[&[-1]])).unwrap();
        let u = IntegralAutomorphism::new(RatMatrix::from_i64_rows(&[&[1]])).unwrap();
        let composed = compose_with_automorphisms(&phi, &k, &u).unwrap();
        assert_eq!(composed.matrix(), &RatMatrix::from_rows(vec![vec![rat(-1, 5)]]).unwrap());
        assert_eq!(hom_height_f(&composed), BigInt::from(5));

        let phi = LatticeHom::new(
            RatMatrix::from_rows(vec![
                vec![rat(1, 2), rint(3), rat(5, 9)],
                vec![rint(0), rat(-1, 9), rint(4)],
                vec![rat(7, 2), rint(1), rint(0)],
            ])
            .unwrap(),
        );
        assert_eq!(hom_height_f(&phi), BigInt::from(18));
        let k = IntegralAutomorphism::new(RatMatrix::from_i64_rows(&[
            &[1, 2, 0],
            &[0, 1, 0],
            &[3, 0, 1],
        ]))
        .unwrap();
        let u = IntegralAutomorphism::new(RatMatrix::from_i64_rows(&[
            &[0, 1, 0],
            &[-1, 0, 0],
            &[5, -2, -1],
        ]))
        .unwrap();
        let composed = compose_with_automorphisms(&phi, &k, &u).unwrap();
        assert_eq!(hom_height_f(&composed), BigInt::from(18));
    }

    #[test]
    fn automorphism_constructor_rejects_bad_input() {
        assert!(matches!(
            IntegralAutomorphism::new(RatMatrix::from_rows(vec![vec![rat(1, 2)]]).unwrap()),
            Err(Error::NotIntegral)
        ));
        assert!(matches!(
            IntegralAutomorphism::new(RatMatrix::from_i64_rows(&[&[2]])),
            Err(Error::NotUnimodular(_))
        ));
    }

    #[test]
    fn identity_conjugation_is_inclusion() {
        let basis_g = standard_gl_basis(2);
        let basis_m = vec![basis_g[1].clone()]; // E_12
        let phi = conjugate_representation(&RatMatrix::identity(2), &basis_m, &basis_g).unwrap();
        let expected = RatMatrix::from_rows(vec![
            vec![rint(0)],
            vec![rint(1)],
            vec![rint(0)],
            vec![rint(0)],
        ])
        .unwrap();
        assert_eq!(phi.matrix(), &expected);
    }

    #[test]
    fn diagonal_conjugation_scales_e12() {
        // g = diag(p^m, 1) with m = −3, p = 5 sends E_12 to p^m·E_12.
        let g = RatMatrix::from_rows(vec![
            vec![rat(1, 125), rint(0)],
            vec![rint(0), rint(1)],
        ])
        .unwrap();
        let basis_g = standard_gl_basis(2);
        let basis_m = vec![basis_g[1].clone()];
        let phi = conjugate_representation(&g, &basis_m, &basis_g).unwrap();
        assert_eq!(phi.matrix().get(1, 0), &rat(1, 125));
        assert_eq!(hom_height_p(&phi, 5).unwrap(), BigInt::from(125));
    }

    #[test]
    fn torus_conjugation_by_unipotent() {
        // g = [[1, 1/p],[0,1]] sends E_11 − E_22 to E_11 − E_22 − (2/p)E_12.
        let p = 5;
        let g = RatMatrix::from_rows(vec![
            vec![rint(1), rat(1, p)],
            vec![rint(0), rint(1)],
        ])
        .unwrap();
        let basis_g = standard_gl_basis(2);
        let h = basis_g[0].sub(&basis_g[3]).unwrap();
        let phi = conjugate_representation(&g, &[h], &basis_g).unwrap();
        assert_eq!(phi.matrix().get(0, 0), &rint(1));
        assert_eq!(phi.matrix().get(1, 0), &rat(-2, p));
        assert_eq!(phi.matrix().get(3, 0), &rint(-1));
        assert_eq!(hom_height_p(&phi, p as u64).unwrap(), BigInt::from(p));
    }

    #[test]
    fn conjugation_by_g_then_g_inverse_restores_inclusion() {
        let g = RatMatrix::from_i64_rows(&[&[2, 1], &[1, 1]]);
        let basis_g = standard_gl_basis(2);
        let basis_m = vec![basis_g[1].clone()];
        let forward = conjugate_representation(&g, &basis_m, &basis_g).unwrap();
        let backward =
            conjugate_representation(&g.inverse().unwrap(), &basis_g, &basis_g).unwrap();
        let roundtrip = backward.matrix().mul(forward.matrix()).unwrap();
        let inclusion = conjugate_representation(&RatMatrix::identity(2), &basis_m, &basis_g)
            .unwrap();
        assert_eq!(&roundtrip, inclusion.matrix());
    }

    #[test]
    fn hom_text_roundtrip() {
        let phi = LatticeHom::new(
            RatMatrix::from_rows(vec![
                vec![rat(1, 12), rint(-3)],
                vec![rint(0), rat(7, 10)],
            ])
            .unwrap(),
        );
        let text = phi.to_string();
        let back: LatticeHom = text.parse().unwrap();
        assert_eq!(back, phi);
        assert_eq!(back.to_string(), text);
    }

    #[test]
    fn samplers_produce_valid_objects() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let u = sample_unimodular(&mut rng, 3, 12);
            let det = u.matrix().det().unwrap();
            assert!(det == Rational::one() || det == -Rational::one());
            assert!(u.matrix().mul(u.inverse()).unwrap().is_identity());
        }
        let phi = sample_hom(&mut rng, 4, 2, 9, &[1, 2, 9]);
        assert_eq!(phi.rows(), 4);
        assert_eq!(phi.cols(), 2);
    }
}
