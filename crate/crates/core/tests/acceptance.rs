//! End-to-end acceptance checks. Each test verifies one headline property at
//! its stated tolerance and budget and prints a single PASS line with the
//! measured figures (visible under --nocapture).

use std::time::Instant;

use heightlab::exactnum::{gm_heights, pow_p, rat, rint};
use heightlab::lattice_heights::{
    compose_with_automorphisms, hom_height_f, sample_hom, sample_unimodular,
};
use heightlab::orbit_index::{
    count_invertible_mod3, cyclic_exp_index, lcm_up_to, minkowski_constant,
    minkowski_torsion_check, minkowski_torsion_check_in_box, verify_global_bound,
    verify_local_bound, GlobalBoundExperiment, Index, LocalBoundCase, LocalBoundExperiment,
};
use heightlab::padic::{check_log_chi_necessity, local_height_exact, log_exp_roundtrip, log_matrix};
use heightlab::siegel::{
    check_siegel_claim, fit_domination, p_map, sample_points, SamplerConfig, SiegelParams,
};
use heightlab::{RatMatrix, Rational};
use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PRIMES: [u64; 5] = [2, 3, 5, 7, 13];

/// D·(p^k·M)·D^(−1) with M integral and D a p-power diagonal: the
/// characteristic shift is at least k while entries may carry p-power
/// denominators.
fn shifted_sample(rng: &mut ChaCha8Rng, p: u64, d: usize, k: i64) -> RatMatrix {
    let m: Vec<i64> = (0..d * d).map(|_| rng.gen_range(-9..=9)).collect();
    let a: Vec<i64> = (0..d).map(|_| rng.gen_range(-2..=2)).collect();
    RatMatrix::from_fn(d, d, |i, j| rint(m[i * d + j]) * pow_p(p, k + a[i] - a[j]))
}

fn diag2(top: Rational, bottom: Rational) -> RatMatrix {
    RatMatrix::from_rows(vec![
        vec![top, Rational::zero()],
        vec![Rational::zero(), bottom],
    ])
    .expect("rectangular rows")
}

fn upper_nilpotent(p: u64, k: i64) -> RatMatrix {
    RatMatrix::from_rows(vec![
        vec![Rational::zero(), pow_p(p, -k)],
        vec![Rational::zero(), Rational::zero()],
    ])
    .expect("rectangular rows")
}

use num_traits::Zero;

#[test]
fn a01_exp_log_roundtrip_is_exact_to_precision_8() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut count = 0u64;
    for p in PRIMES {
        for d in 1..=3usize {
            let k = d as i64 / (p as i64 - 1) + 1;
            for _ in 0..34 {
                let x = shifted_sample(&mut rng, p, d, k);
                assert!(
                    log_exp_roundtrip(&x, p, 8).unwrap(),
                    "roundtrip drifted at p={p}, d={d}, X={x}"
                );
                count += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(count >= 500, "only {count} matrices tested");
    assert!(
        elapsed.as_secs_f64() < 60.0,
        "roundtrip took {elapsed:?}, budget 60s"
    );
    println!(
        "PASS exp/log roundtrip: {count} matrices over p in {PRIMES:?}, d in 1..=3, \
         log(exp(X)) = X mod p^8, 0 failures, {:.2}s",
        elapsed.as_secs_f64()
    );
}

#[test]
fn a02_log_norms_stay_under_their_envelopes() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut count = 0u64;
    for p in PRIMES {
        for d in 1..=3usize {
            for k in 1..=3i64 {
                for _ in 0..12 {
                    let y = shifted_sample(&mut rng, p, d, k);
                    let l = log_matrix(&y, p, 8).unwrap();
                    let h = local_height_exact(&y, p).unwrap();
                    let mut envelope = Rational::one();
                    for _ in 1..d {
                        envelope *= h.clone();
                    }
                    assert!(
                        l.norm() <= rint(d as i64) * envelope.clone(),
                        "general envelope failed at p={p}, Y={y}"
                    );
                    if p > d as u64 {
                        assert!(
                            l.norm() <= envelope,
                            "sharp envelope failed at p={p}, Y={y}"
                        );
                    }
                    count += 1;
                }
            }
        }
    }
    // The family attaining the sharp envelope with equality.
    for p in PRIMES {
        for k in 1..=4i64 {
            let y = upper_nilpotent(p, k);
            let l = log_matrix(&y, p, 8).unwrap();
            let h = local_height_exact(&y, p).unwrap();
            assert_eq!(l.norm(), h, "equality family drifted at p={p}, k={k}");
            count += 1;
        }
    }
    assert!(count >= 500, "only {count} matrices tested");
    println!(
        "PASS log norm bounds: {count} matrices, |log(1+Y)| <= d*H^(d-1) everywhere, \
         <= H^(d-1) for p > d, equality attained on the nilpotent family"
    );
}

#[test]
fn a03_accepted_logs_have_shifted_characteristic_polynomials() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut count = 0u64;
    for p in PRIMES {
        for d in 1..=3usize {
            for k in 1..=3i64 {
                for _ in 0..12 {
                    let y = shifted_sample(&mut rng, p, d, k);
                    assert!(
                        check_log_chi_necessity(&y, p).unwrap(),
                        "necessity failed at p={p}, Y={y}"
                    );
                    count += 1;
                }
            }
        }
    }
    for p in PRIMES {
        for k in 1..=4i64 {
            assert!(check_log_chi_necessity(&upper_nilpotent(p, k), p).unwrap());
            count += 1;
        }
    }
    println!(
        "PASS characteristic shift necessity: all {count} accepted matrices have \
         every non-leading coefficient divisible by p, 0 exceptions"
    );
}

#[test]
fn a04_cyclic_exponential_indices_match_their_heights() {
    let start = Instant::now();
    let mut checked = 0u64;
    for p in [2u64, 3, 5, 7] {
        for k in 1..=6u32 {
            let x = upper_nilpotent(p, k as i64);
            let expected = p.pow(k);
            let rep = cyclic_exp_index(&x, p, expected + 10).unwrap();
            assert_eq!(
                rep.index,
                Index::Exact(expected),
                "cyclic index drifted at p={p}, k={k}"
            );
            assert!(2 * rep.index.value() >= expected, "halved bound failed");
            if p > 2 {
                assert!(rep.index.value() >= expected, "sharp bound failed");
            }
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 10.0,
        "cyclic indices took {elapsed:?}, budget 10s"
    );
    println!(
        "PASS cyclic exponential indices: {checked} (p, k) pairs with index = p^k exactly, \
         >= p^k/2 for all p and >= p^k for p > 2, {:.2}s",
        elapsed.as_secs_f64()
    );
}

#[test]
fn a05_unipotent_orbit_indices_attain_the_local_bound() {
    let start = Instant::now();
    let mut checked = 0u64;
    for p in [3u64, 5, 7] {
        for m in -6i64..=-1 {
            let expected = p.pow(m.unsigned_abs() as u32);
            let exp = LocalBoundExperiment {
                case: LocalBoundCase::Nilpotent,
                p,
                dim: 2,
                conjugator: diag2(pow_p(p, m), Rational::one()),
                cap: expected + 10,
                level: None,
                c2: None,
            };
            let rep = verify_local_bound(&exp).unwrap();
            assert!(rep.pass && !rep.inconclusive, "bound failed at p={p}, m={m}");
            assert_eq!(
                rep.orbit.index,
                Index::Exact(expected),
                "orbit index drifted at p={p}, m={m}"
            );
            assert_eq!(rep.height, BigInt::from(expected));
            assert_eq!(
                rep.slack,
                Some(Rational::one()),
                "bound not attained with equality at p={p}, m={m}"
            );
            checked += 1;
        }
    }
    println!(
        "PASS unipotent local bounds: {checked} conjugators diag(p^m, 1), orbit index = \
         H_p exactly with slack 1, {:.2}s",
        start.elapsed().as_secs_f64()
    );
}

#[test]
fn a06_global_product_recovers_the_finite_height() {
    let c_ceiling = BigInt::from(2) * lcm_up_to(2);
    let mut checked = 0u64;
    for a in 0..=3u32 {
        for b in 0..=3u32 {
            if a == 0 && b == 0 {
                continue;
            }
            let den = 2i64.pow(a) * 3i64.pow(b);
            let exp = GlobalBoundExperiment {
                case: LocalBoundCase::Nilpotent,
                dim: 2,
                conjugator: diag2(rat(1, den), Rational::one()),
                primes: vec![2, 3],
                cap: 500,
                c: None,
            };
            let rep = verify_global_bound(&exp).unwrap();
            assert!(rep.pass && !rep.inconclusive, "global bound failed at {den}");
            assert_eq!(rep.h_f, BigInt::from(den), "height drifted at {den}");
            assert_eq!(
                rep.product, rep.h_f,
                "index product missed the finite height at {den}"
            );
            assert!(
                rep.c_min <= c_ceiling,
                "measured constant {} above 2*lcm(1..2) = {c_ceiling}",
                rep.c_min
            );
            checked += 1;
        }
    }
    println!(
        "PASS global bounds: {checked} conjugators with denominators on {{2, 3}}, \
         per-prime index product = H_f exactly, measured c <= {c_ceiling}"
    );
}

#[test]
fn a07_minkowski_constants_and_torsion_scans_agree() {
    let small = Instant::now();
    for (n, expected) in [(1u32, 2u64), (2, 48)] {
        assert_eq!(minkowski_constant(n), BigUint::from(expected));
        assert_eq!(count_invertible_mod3(n).unwrap(), expected);
    }
    assert!(minkowski_torsion_check(1).unwrap(), "mod-3 scan found torsion at n=1");
    assert!(minkowski_torsion_check(2).unwrap(), "mod-3 scan found torsion at n=2");

    let mod2 = minkowski_torsion_check_in_box(2, 2, 3).unwrap();
    assert!(!mod2.torsion_free, "the mod-2 kernel scan missed its torsion");
    assert!(
        mod2.witnesses.iter().any(|(m, order)| *order == 2 && m == &vec![-1, 0, 0, -1]),
        "-I of order 2 missing from the mod-2 witnesses"
    );
    let small_elapsed = small.elapsed();
    assert!(
        small_elapsed.as_secs_f64() < 5.0,
        "n <= 2 checks took {small_elapsed:?}, budget 5s"
    );

    let big = Instant::now();
    assert_eq!(minkowski_constant(3), BigUint::from(11232u32));
    assert_eq!(count_invertible_mod3(3).unwrap(), 11232);
    let big_elapsed = big.elapsed();
    assert!(
        big_elapsed.as_secs_f64() < 600.0,
        "n = 3 enumeration took {big_elapsed:?}, budget 10min"
    );
    println!(
        "PASS invertible counts mod 3: 2, 48, 11232 by enumeration; mod-3 boxes torsion \
         free for n <= 2, mod-2 box flags -I; {:.2}s + {:.2}s",
        small_elapsed.as_secs_f64(),
        big_elapsed.as_secs_f64()
    );
}

#[test]
fn a08_real_height_is_dominated_by_finite_height() {
    let start = Instant::now();
    let mut checked = 0u64;
    for den in 1..=1000i64 {
        for num in 1..=1000i64 {
            if num.gcd(&den) != 1 {
                continue;
            }
            for t in [rat(num, den), rat(-num, den)] {
                let (h_r, h_f) = gm_heights(&t).unwrap();
                assert!(
                    h_r <= Rational::from_integer(h_f),
                    "real height exceeded finite height at {t}"
                );
                checked += 1;
            }
        }
    }
    println!(
        "PASS multiplicative-group heights: H_R <= H_f on all {checked} reduced fractions \
         with |num|, den <= 1000, 0 violations, {:.2}s",
        start.elapsed().as_secs_f64()
    );
}

#[test]
fn a09_finite_height_is_invariant_under_unimodular_composition() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut compositions = 0u64;
    for _ in 0..200 {
        let rows = rng.gen_range(1..=3);
        let cols = rng.gen_range(1..=3);
        let phi = sample_hom(&mut rng, rows, cols, 99, &[1, 2, 3, 4, 5, 6, 8, 9, 12]);
        let h_f = hom_height_f(&phi);
        for _ in 0..50 {
            let k = sample_unimodular(&mut rng, rows, 10);
            let u = sample_unimodular(&mut rng, cols, 10);
            let psi = compose_with_automorphisms(&phi, &k, &u).unwrap();
            assert_eq!(
                hom_height_f(&psi),
                h_f,
                "finite height moved under composition of {phi}"
            );
            compositions += 1;
        }
    }
    println!(
        "PASS height invariance: 200 maps x 50 unimodular pairs, {compositions} exact \
         equalities of H_f, {:.2}s",
        start.elapsed().as_secs_f64()
    );
}

#[test]
fn a10_siegel_norm_claim_and_height_domination_hold() {
    let start = Instant::now();
    let params = SiegelParams::classical();
    let cfg = SamplerConfig {
        params: params.clone(),
        torus_ceiling: 500,
        farey_den: 48,
        target: 10_000,
        seed: 11,
    };
    let points = sample_points(&cfg).unwrap();
    assert!(points.len() >= 10_000, "sampler produced {}", points.len());

    let (c_measured, claim_ok) = check_siegel_claim(&points, &params).unwrap();
    assert!(claim_ok, "a sample violated positivity");
    assert!(
        c_measured.is_one(),
        "uniform constant drifted from 1: {c_measured}"
    );

    // Strict decrease along the torus ray.
    let mut previous: Option<Rational> = None;
    for t in 1..=30i64 {
        let ray = diag2(rint(t), rat(1, t));
        let value = p_map(&ray).unwrap();
        assert!(value > Rational::zero());
        if let Some(prev) = previous {
            assert!(value < prev, "norm map failed to decrease at t={t}");
        }
        previous = Some(value);
    }

    let (fit, rows) = fit_domination(&points, &rint(4)).unwrap();
    assert_eq!(rows.len(), points.len());
    for row in &rows {
        assert!(row.p > Rational::zero(), "norm map vanished at a sample");
    }
    assert_eq!(fit.violations, 0, "domination fit left violations");
    assert!(fit.b <= 2.0, "fitted exponent {} above 2", fit.b);

    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 120.0,
        "Siegel suite took {elapsed:?}, budget 120s"
    );
    println!(
        "PASS Siegel claims: {} certified points, norm map positive, uniform C = 1, \
         strictly decreasing on the torus ray, domination fit a = {:.3}, b = {}, c = {}, \
         0 violations, {:.2}s",
        points.len(),
        fit.a,
        fit.b,
        fit.c,
        elapsed.as_secs_f64()
    );
}
