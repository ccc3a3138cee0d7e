//! Batch experiment runner: every verification suite behind one binary with
//! reproducible seeds and machine-readable reports.
//!
//! Exit status triage: 0 when every assertion passed, 2 when nothing failed
//! but some result was inconclusive because a cap was hit, 1 on bad input or
//! a falsified assertion. Reports are JSON with an embedded schema version;
//! the sha256 of the body excludes the timestamp, so identical config and
//! seed give an identical hashed body.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::Parser;
use heightlab::exactnum::{gm_heights, is_prime, pow_p, rat, rint};
use heightlab::lattice_heights::{
    compose_with_automorphisms, hom_height_f, sample_hom, sample_unimodular,
};
use heightlab::orbit_index::{
    count_invertible_mod3, cyclic_exp_index, minkowski_constant, minkowski_torsion_check,
    minkowski_torsion_check_in_box, verify_global_bound, verify_local_bound,
    GlobalBoundExperiment, Index, LocalBoundCase, LocalBoundExperiment,
};
use heightlab::padic::log_exp_roundtrip;
use heightlab::siegel::{
    check_siegel_claim, fit_domination, p_map, sample_points, SamplerConfig, SiegelParams,
};
use heightlab::{RatMatrix, Rational};
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

const SCHEMA_VERSION: &str = "1.0";

const SUITES: [&str; 9] = [
    "exp-log",
    "cyclic-index",
    "local-bound",
    "global-bound",
    "minkowski",
    "gm-heights",
    "invariance",
    "siegel-claim",
    "siegel-compare",
];

#[derive(Parser, Debug)]
#[command(name = "heightlab", version, about = "Exact-arithmetic experiment suites")]
struct Cli {
    /// Suite to run: exp-log, cyclic-index, local-bound, global-bound,
    /// minkowski, gm-heights, invariance, siegel-claim, siegel-compare.
    #[arg(long)]
    suite: Option<String>,
    /// RNG seed for sampled suites.
    #[arg(long)]
    seed: Option<u64>,
    /// Orbit walk cap, enumeration box, or coefficient cap, per suite.
    #[arg(long)]
    cap: Option<u64>,
    /// Sample count or family size, per suite.
    #[arg(long)]
    samples: Option<u64>,
    /// Prime for single-prime suites.
    #[arg(long)]
    p: Option<u64>,
    /// Matrix dimension where a suite supports one.
    #[arg(long)]
    d: Option<usize>,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// json (default) or csv (scatter suite only).
    #[arg(long)]
    format: Option<String>,
    /// JSON file supplying any of the above plus suite extras; explicit
    /// flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Deserialize, Default, Debug)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    suite: Option<String>,
    seed: Option<u64>,
    cap: Option<u64>,
    samples: Option<u64>,
    p: Option<u64>,
    d: Option<usize>,
    out: Option<PathBuf>,
    format: Option<String>,
    /// local-bound: nilpotent (default), exp2p, or torus.
    case: Option<String>,
    /// local-bound torus: assumed constant c2, written as a rational.
    c2: Option<String>,
    /// local-bound torus: unit truncation level.
    level: Option<u32>,
    /// invariance: unimodular pairs per hom.
    pairs: Option<u64>,
    /// Siegel sampler grid sizes.
    torus_ceiling: Option<u64>,
    farey_den: Option<u64>,
}

struct Resolved {
    suite: String,
    seed: u64,
    cap: Option<u64>,
    samples: Option<u64>,
    p: Option<u64>,
    d: Option<usize>,
    out: Option<PathBuf>,
    csv: bool,
    case: Option<String>,
    c2: Option<String>,
    level: Option<u32>,
    pairs: Option<u64>,
    torus_ceiling: Option<u64>,
    farey_den: Option<u64>,
}

struct Outcome {
    anchor: &'static str,
    body: Value,
    /// Scatter rows; replaces the JSON report when csv output is chosen.
    csv: Option<String>,
    pass: bool,
    inconclusive: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let ok = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            return ExitCode::from(if ok { 0 } else { 1 });
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    let file: FileConfig = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
            serde_json::from_str(&text)
                .map_err(|e| format!("malformed config {}: {e}", path.display()))?
        }
        None => FileConfig::default(),
    };

    let suite = cli
        .suite
        .or(file.suite)
        .ok_or("missing --suite (or a suite entry in the config file)")?;
    if !SUITES.contains(&suite.as_str()) {
        return Err(format!("unknown suite {suite}; expected one of {SUITES:?}"));
    }
    let format = cli.format.or(file.format).unwrap_or_else(|| "json".into());
    let csv = match format.as_str() {
        "json" => false,
        "csv" => {
            if suite != "siegel-compare" {
                return Err("csv output is only for the siegel-compare scatter".into());
            }
            true
        }
        other => return Err(format!("unknown format {other}; expected json or csv")),
    };
    if let Some(p) = cli.p.or(file.p) {
        if !is_prime(p) {
            return Err(format!("--p {p} is not prime"));
        }
    }

    let r = Resolved {
        suite,
        seed: cli.seed.or(file.seed).unwrap_or(1),
        cap: cli.cap.or(file.cap),
        samples: cli.samples.or(file.samples),
        p: cli.p.or(file.p),
        d: cli.d.or(file.d),
        out: cli.out.or(file.out),
        csv,
        case: file.case,
        c2: file.c2,
        level: file.level,
        pairs: file.pairs,
        torus_ceiling: file.torus_ceiling,
        farey_den: file.farey_den,
    };

    let outcome = match r.suite.as_str() {
        "exp-log" => suite_exp_log(&r)?,
        "cyclic-index" => suite_cyclic_index(&r)?,
        "local-bound" => suite_local_bound(&r)?,
        "global-bound" => suite_global_bound(&r)?,
        "minkowski" => suite_minkowski(&r)?,
        "gm-heights" => suite_gm_heights(&r)?,
        "invariance" => suite_invariance(&r)?,
        "siegel-claim" => suite_siegel_claim(&r)?,
        "siegel-compare" => suite_siegel_compare(&r)?,
        _ => unreachable!("suite validated above"),
    };

    let mut rendered = if r.csv {
        outcome.csv.clone().expect("scatter suite fills csv")
    } else {
        render_report(&r, &outcome)?
    };
    if !rendered.ends_with('\n') {
        rendered.push('\n');
    }
    match &r.out {
        Some(path) => fs::write(path, rendered.as_bytes())
            .map_err(|e| format!("cannot write {}: {e}", path.display()))?,
        None => print!("{rendered}"),
    }

    Ok(ExitCode::from(if !outcome.pass {
        1
    } else if outcome.inconclusive {
        2
    } else {
        0
    }))
}

/// JSON envelope around the suite body. Keys serialize sorted, so the bytes
/// are reproducible; the timestamp sits outside the hashed body.
fn render_report(r: &Resolved, outcome: &Outcome) -> Result<String, String> {
    let body_text = serde_json::to_string(&outcome.body).map_err(|e| e.to_string())?;
    let digest = Sha256::digest(body_text.as_bytes());
    let body_sha256: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    let now = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_err(|e| e.to_string())?
        .as_secs();
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "suite": r.suite,
        "anchor": outcome.anchor,
        "seed": r.seed,
        "params": {
            "cap": r.cap,
            "d": r.d,
            "p": r.p,
            "samples": r.samples,
            "seed": r.seed,
        },
        "body": outcome.body,
        "pass": outcome.pass,
        "inconclusive": outcome.inconclusive,
        "body_sha256": body_sha256,
        "generated_at_unix": now,
    });
    serde_json::to_string_pretty(&report).map_err(|e| e.to_string())
}

fn rational_str(x: &Rational) -> String {
    x.to_string()
}

/// D·(p^k·M)·D^(−1) with M integral and D a p-power diagonal: the
/// characteristic shift is at least k while entries may carry denominators.
fn shifted_sample(rng: &mut ChaCha8Rng, p: u64, d: usize, k: i64) -> RatMatrix {
    let m: Vec<i64> = (0..d * d).map(|_| rng.gen_range(-9..=9)).collect();
    let a: Vec<i64> = (0..d).map(|_| rng.gen_range(-2..=2)).collect();
    RatMatrix::from_fn(d, d, |i, j| rint(m[i * d + j]) * pow_p(p, k + a[i] - a[j]))
}

fn upper_nilpotent(p: u64, k: i64) -> RatMatrix {
    RatMatrix::from_fn(2, 2, |i, j| {
        if (i, j) == (0, 1) {
            pow_p(p, -k)
        } else {
            Rational::from_integer(BigInt::from(0))
        }
    })
}

fn checked_p_pow(p: u64, k: u32) -> Result<u64, String> {
    p.checked_pow(k)
        .ok_or_else(|| format!("{p}^{k} overflows the orbit cap"))
}

fn suite_exp_log(r: &Resolved) -> Result<Outcome, String> {
    let total = r.samples.unwrap_or(100);
    if total == 0 {
        return Err("exp-log needs at least one sample".into());
    }
    let primes: Vec<u64> = match r.p {
        Some(p) => vec![p],
        None => vec![2, 3, 5, 7, 13],
    };
    let dims: Vec<usize> = match r.d {
        Some(d) if (1..=4).contains(&d) => vec![d],
        Some(d) => return Err(format!("--d {d} out of the supported range 1..=4")),
        None => vec![1, 2, 3],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(r.seed);
    let mut digest = Sha256::new();
    let mut failures = 0u64;
    let mut run = 0u64;
    'outer: loop {
        for &p in &primes {
            for &d in &dims {
                if run == total {
                    break 'outer;
                }
                let k = d as i64 / (p as i64 - 1) + 1;
                let x = shifted_sample(&mut rng, p, d, k);
                digest.update(x.to_string().as_bytes());
                if !log_exp_roundtrip(&x, p, 8).map_err(|e| e.to_string())? {
                    failures += 1;
                }
                run += 1;
            }
        }
    }
    let sample_digest: String = digest.finalize().iter().map(|b| format!("{b:02x}")).collect();
    Ok(Outcome {
        anchor: "p-adic-exp-log-roundtrip",
        body: json!({
            "dims": dims,
            "failures": failures,
            "precision": 8,
            "primes": primes,
            "sample_digest": sample_digest,
            "samples": run,
        }),
        csv: None,
        pass: failures == 0,
        inconclusive: false,
    })
}

fn suite_cyclic_index(r: &Resolved) -> Result<Outcome, String> {
    let p = r.p.unwrap_or(5);
    let k_max = u32::try_from(r.samples.unwrap_or(3)).map_err(|_| "family size too large")?;
    if k_max == 0 {
        return Err("cyclic-index needs at least one family member".into());
    }
    let cap = match r.cap {
        Some(c) => c,
        None => checked_p_pow(p, k_max)?.saturating_add(10),
    };
    let mut rows = Vec::new();
    let mut pass = true;
    let mut inconclusive = false;
    for k in 1..=k_max {
        let expected = checked_p_pow(p, k)?;
        let rep = cyclic_exp_index(&upper_nilpotent(p, k as i64), p, cap)
            .map_err(|e| e.to_string())?;
        let exact = rep.index.is_exact();
        if exact {
            pass &= rep.index == Index::Exact(expected);
        } else {
            inconclusive = true;
        }
        rows.push(json!({
            "expected": expected,
            "index_exact": exact,
            "index_value": rep.index.value(),
            "k": k,
        }));
    }
    Ok(Outcome {
        anchor: "cyclic-exponential-orbit-index",
        body: json!({"cap": cap, "p": p, "rows": rows}),
        csv: None,
        pass,
        inconclusive,
    })
}

fn parse_case(name: Option<&str>) -> Result<LocalBoundCase, String> {
    match name.unwrap_or("nilpotent") {
        "nilpotent" => Ok(LocalBoundCase::Nilpotent),
        "exp2p" => Ok(LocalBoundCase::Exp2p),
        "torus" => Ok(LocalBoundCase::Torus),
        other => Err(format!("unknown case {other}; expected nilpotent, exp2p, or torus")),
    }
}

fn suite_local_bound(r: &Resolved) -> Result<Outcome, String> {
    let p = r.p.unwrap_or(5);
    let dim = r.d.unwrap_or(2);
    let depth = u32::try_from(r.samples.unwrap_or(3)).map_err(|_| "family size too large")?;
    if depth == 0 {
        return Err("local-bound needs at least one conjugator".into());
    }
    let case = parse_case(r.case.as_deref())?;
    let c2 = match &r.c2 {
        Some(text) => Some(
            text.parse::<Rational>()
                .map_err(|e| format!("malformed c2 {text}: {e}"))?,
        ),
        None => None,
    };
    let cap = match r.cap {
        Some(c) => c,
        None => checked_p_pow(p, depth)?.saturating_add(10),
    };
    let mut rows = Vec::new();
    let mut pass = true;
    let mut inconclusive = false;
    for m in 1..=depth {
        // The torus acts trivially on a diagonal conjugator, so that case
        // takes the unipotent one.
        let conjugator = match case {
            LocalBoundCase::Torus => RatMatrix::from_fn(dim, dim, |i, j| {
                if i == j {
                    rint(1)
                } else if (i, j) == (0, 1) {
                    pow_p(p, -(m as i64))
                } else {
                    rint(0)
                }
            }),
            _ => RatMatrix::from_fn(dim, dim, |i, j| {
                if i != j {
                    rint(0)
                } else if i == 0 {
                    pow_p(p, -(m as i64))
                } else {
                    rint(1)
                }
            }),
        };
        let exp = LocalBoundExperiment {
            case,
            p,
            dim,
            conjugator,
            cap,
            level: r.level,
            c2: c2.clone(),
        };
        let rep = verify_local_bound(&exp).map_err(|e| e.to_string())?;
        pass &= rep.pass || rep.inconclusive;
        inconclusive |= rep.inconclusive;
        rows.push(json!({
            "bound": rational_str(&rep.bound),
            "c2_required": rep.c2_required.as_ref().map(rational_str),
            "height": rep.height.to_string(),
            "inconclusive": rep.inconclusive,
            "index_exact": rep.orbit.index.is_exact(),
            "index_value": rep.orbit.index.value(),
            "m": -(m as i64),
            "pass": rep.pass,
            "slack": rep.slack.as_ref().map(rational_str),
        }));
    }
    Ok(Outcome {
        anchor: "local-orbit-index-lower-bound",
        body: json!({
            "cap": cap,
            "case": case.tag(),
            "dim": dim,
            "p": p,
            "rows": rows,
        }),
        csv: None,
        pass,
        inconclusive,
    })
}

fn suite_global_bound(r: &Resolved) -> Result<Outcome, String> {
    let dim = r.d.unwrap_or(2);
    let box_side = u32::try_from(r.samples.unwrap_or(3)).map_err(|_| "box too large")?;
    if box_side == 0 {
        return Err("global-bound needs a positive exponent box".into());
    }
    let cap = r.cap.unwrap_or(500);
    let mut rows = Vec::new();
    let mut pass = true;
    let mut inconclusive = false;
    for a in 0..=box_side {
        for b in 0..=box_side {
            if a == 0 && b == 0 {
                continue;
            }
            let den = 2i64
                .checked_pow(a)
                .and_then(|x| x.checked_mul(3i64.checked_pow(b)?))
                .ok_or("denominator 2^a*3^b overflows")?;
            let conjugator = RatMatrix::from_fn(dim, dim, |i, j| {
                if i != j {
                    rint(0)
                } else if i == 0 {
                    rat(1, den)
                } else {
                    rint(1)
                }
            });
            let exp = GlobalBoundExperiment {
                case: LocalBoundCase::Nilpotent,
                dim,
                conjugator,
                primes: vec![2, 3],
                cap,
                c: None,
            };
            let rep = verify_global_bound(&exp).map_err(|e| e.to_string())?;
            pass &= rep.pass || rep.inconclusive;
            inconclusive |= rep.inconclusive;
            rows.push(json!({
                "c_min": rep.c_min.to_string(),
                "c_used": rational_str(&rep.c_used),
                "denominator": den,
                "h_f": rep.h_f.to_string(),
                "inconclusive": rep.inconclusive,
                "omega": rep.omega,
                "pass": rep.pass,
                "product": rep.product.to_string(),
            }));
        }
    }
    Ok(Outcome {
        anchor: "global-index-product-bound",
        body: json!({"cap": cap, "dim": dim, "primes": [2, 3], "rows": rows}),
        csv: None,
        pass,
        inconclusive,
    })
}

fn suite_minkowski(r: &Resolved) -> Result<Outcome, String> {
    let n_max = r.samples.unwrap_or(3);
    if !(1..=3).contains(&n_max) {
        return Err("minkowski enumeration supports sizes 1..=3".into());
    }
    let mut constants = Vec::new();
    let mut enumeration_match = true;
    for n in 1..=n_max as u32 {
        let formula = minkowski_constant(n);
        let counted = count_invertible_mod3(n).map_err(|e| e.to_string())?;
        enumeration_match &= formula.to_u64() == Some(counted);
        constants.push(counted);
    }
    let mut torsion_free = true;
    for n in 1..=(n_max as usize).min(2) {
        torsion_free &= minkowski_torsion_check(n).map_err(|e| e.to_string())?;
    }
    let mod2 = minkowski_torsion_check_in_box(2, 2, 3).map_err(|e| e.to_string())?;
    let mod2_flags_minus_identity = mod2
        .witnesses
        .iter()
        .any(|(m, order)| *order == 2 && m == &vec![-1, 0, 0, -1]);
    let pass = enumeration_match && torsion_free && mod2_flags_minus_identity;
    Ok(Outcome {
        anchor: "invertible-counts-mod-3-and-torsion",
        body: json!({
            "C": constants,
            "enumeration_match": enumeration_match,
            "mod2_flags_minus_identity": mod2_flags_minus_identity,
            "torsion_free": torsion_free,
        }),
        csv: None,
        pass,
        inconclusive: false,
    })
}

fn suite_gm_heights(r: &Resolved) -> Result<Outcome, String> {
    let bound = i64::try_from(r.cap.unwrap_or(1000)).map_err(|_| "box too large")?;
    if bound < 1 {
        return Err("gm-heights needs a positive box".into());
    }
    let mut checked = 0u64;
    let mut violations = 0u64;
    for den in 1..=bound {
        for num in 1..=bound {
            if num.gcd(&den) != 1 {
                continue;
            }
            for t in [rat(num, den), rat(-num, den)] {
                let (h_r, h_f) = gm_heights(&t).map_err(|e| e.to_string())?;
                if h_r > Rational::from_integer(h_f) {
                    violations += 1;
                }
                checked += 1;
            }
        }
    }
    Ok(Outcome {
        anchor: "multiplicative-group-height-comparison",
        body: json!({"bound": bound, "checked": checked, "violations": violations}),
        csv: None,
        pass: violations == 0,
        inconclusive: false,
    })
}

fn suite_invariance(r: &Resolved) -> Result<Outcome, String> {
    let homs = r.samples.unwrap_or(200);
    let pairs = r.pairs.unwrap_or(50);
    if homs == 0 || pairs == 0 {
        return Err("invariance needs positive sample counts".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(r.seed);
    let mut mismatches = 0u64;
    let mut compositions = 0u64;
    for _ in 0..homs {
        let rows = rng.gen_range(1..=3);
        let cols = rng.gen_range(1..=3);
        let phi = sample_hom(&mut rng, rows, cols, 99, &[1, 2, 3, 4, 5, 6, 8, 9, 12]);
        let h_f = hom_height_f(&phi);
        for _ in 0..pairs {
            let k = sample_unimodular(&mut rng, rows, 10);
            let u = sample_unimodular(&mut rng, cols, 10);
            let psi = compose_with_automorphisms(&phi, &k, &u).map_err(|e| e.to_string())?;
            if hom_height_f(&psi) != h_f {
                mismatches += 1;
            }
            compositions += 1;
        }
    }
    Ok(Outcome {
        anchor: "finite-height-unimodular-invariance",
        body: json!({
            "compositions": compositions,
            "homs": homs,
            "mismatches": mismatches,
            "pairs": pairs,
        }),
        csv: None,
        pass: mismatches == 0,
        inconclusive: false,
    })
}

fn sampler_config(r: &Resolved) -> Result<SamplerConfig, String> {
    let target = usize::try_from(r.samples.unwrap_or(10_000)).map_err(|_| "target too large")?;
    if target == 0 {
        return Err("the sampler needs a positive target".into());
    }
    Ok(SamplerConfig {
        params: SiegelParams::classical(),
        torus_ceiling: r.torus_ceiling.unwrap_or(500),
        farey_den: r.farey_den.unwrap_or(48),
        target,
        seed: r.seed,
    })
}

fn suite_siegel_claim(r: &Resolved) -> Result<Outcome, String> {
    let cfg = sampler_config(r)?;
    let points = sample_points(&cfg).map_err(|e| e.to_string())?;
    let (c_uniform, positive) =
        check_siegel_claim(&points, &cfg.params).map_err(|e| e.to_string())?;
    let mut ray_decreasing = true;
    let mut previous: Option<Rational> = None;
    for t in 1..=30i64 {
        let ray = RatMatrix::from_fn(2, 2, |i, j| {
            if i != j {
                rint(0)
            } else if i == 0 {
                rint(t)
            } else {
                rat(1, t)
            }
        });
        let value = p_map(&ray).map_err(|e| e.to_string())?;
        if let Some(prev) = &previous {
            ray_decreasing &= value < *prev;
        }
        previous = Some(value);
    }
    let pass = positive && ray_decreasing;
    Ok(Outcome {
        anchor: "siegel-strip-norm-bound",
        body: json!({
            "c_uniform": rational_str(&c_uniform),
            "positive_everywhere": positive,
            "samples": points.len(),
            "torus_ray_strictly_decreasing": ray_decreasing,
        }),
        csv: None,
        pass,
        inconclusive: false,
    })
}

fn suite_siegel_compare(r: &Resolved) -> Result<Outcome, String> {
    let cfg = sampler_config(r)?;
    let points = sample_points(&cfg).map_err(|e| e.to_string())?;
    let a_cap = Rational::from_integer(BigInt::from(r.cap.unwrap_or(4)));
    let (fit, rows) = fit_domination(&points, &a_cap).map_err(|e| e.to_string())?;
    let mut csv = String::from("x,y,HR_num,HR_den,Hf,p_map_num,p_map_den\n");
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.x,
            row.y,
            row.h_r.numer(),
            row.h_r.denom(),
            row.h_f,
            row.p.numer(),
            row.p.denom()
        ));
    }
    Ok(Outcome {
        anchor: "height-domination-fit",
        body: json!({
            "a": fit.a,
            "b": fit.b,
            "c": fit.c,
            "n_samples": fit.n_samples,
            "seed": r.seed,
            "violations": fit.violations,
        }),
        csv: Some(csv),
        pass: fit.violations == 0,
        inconclusive: false,
    })
}
