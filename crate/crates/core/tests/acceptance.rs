//! Acceptance suite for the numerical core: criteria 1 to 11, one line each.
//! Criterion 12 (byte-identical CLI outputs) lives in the cli crate.

mod common;

use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use lyapscope_core::curve::{admissible_family, AdmissibleFamily, ParamCurve};
use lyapscope_core::diagnostics::{
    hausdorff_dim, main_identity_check, pressure, unstable_dim, MeasureReport, SequenceReport,
    ENTROPY_TOL, EXPONENT_TOL,
};
use lyapscope_core::dynamics::{
    asymptotic_dilation, cocycle_sum, inverse_dilation, lift_dilation, lifted_orbit, refined_lift_grid,
};
use lyapscope_core::entropy::{
    bowen_cover, entropy_rate, katok_cover, ratio_rates, word_cloud, CoverEntry, CoverTable,
    OnTorus, OrbitCloud,
};
use lyapscope_core::lyapunov::{beta_from_mass, defect_limit, top_exponent, GOLDEN_ANGLE};
use lyapscope_core::neutral::{decompose, neutral_blocks, residual_bounds, zero_mean_residual, NeutralParams};
use lyapscope_core::shift_lab::{
    example1_block_length, example1_word, limit_decomposition, Rational, TransitionGraph, Variant,
    WeightedAlphabet,
};
use lyapscope_core::{MassSplit, Point2, SurfaceMap};
use num_traits::ToPrimitive;
use rand::Rng;

use common::*;

type Outcome = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cocycle_identity() -> Outcome {
    let mut rng = rng(1);
    let zoo = zoo();
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let (map, base) = &zoo[case % zoo.len()];
        let p = random_proj(map, *base, &mut rng);
        let n = rng.random_range(1..=100);
        let got = cocycle_sum(map, &p, n).map_err(|e| e.to_string())?;
        let want = log_growth_by_product(map, p.base, p.theta, n);
        worst = worst.max((got - want).abs());
    }
    check(worst <= 1e-9, format!("max |cocycle - oracle| = {worst:.2e} over 100 cases"))
}

fn cat_exponents() -> Outcome {
    let target = GOLDEN2.ln();
    let mut rng = rng(2);
    let mut worst_plus: f64 = 0.0;
    let mut worst_sum: f64 = 0.0;
    for _ in 0..10 {
        let x = Point2::new(rng.random(), rng.random());
        let e = top_exponent(&SurfaceMap::cat(), x, GOLDEN_ANGLE, 200).map_err(|e| e.to_string())?;
        worst_plus = worst_plus.max((e.lambda_plus - target).abs());
        worst_sum = worst_sum.max((e.lambda_plus + e.lambda_minus).abs());
    }
    check(
        worst_plus <= 1e-6 && worst_sum <= 1e-9,
        format!("|lambda+ - log phi^2| <= {worst_plus:.2e}, |lambda+ + lambda-| <= {worst_sum:.2e}"),
    )
}

/// Limit weights of m0 and m1 on the letters -2, 1, 2.
type Weights = [(i64, Rational); 3];

fn example1_targets(variant: Variant) -> (Weights, Weights) {
    let r = |n, d| Rational::new(n, d);
    match variant {
        Variant::P => (
            [(-2, r(1, 3)), (1, r(0, 1)), (2, r(1, 3))],
            [(-2, r(0, 1)), (1, r(1, 3)), (2, r(0, 1))],
        ),
        Variant::Q => (
            [(-2, r(1, 3)), (1, r(1, 3)), (2, r(1, 6))],
            [(-2, r(0, 1)), (1, r(0, 1)), (2, r(1, 6))],
        ),
    }
}

fn example1_exactness() -> Outcome {
    let mut worst_gap: f64 = 0.0;
    let mut cases = 0;
    for variant in [Variant::P, Variant::Q] {
        let (t0, t1) = example1_targets(variant);
        for k in [10usize, 50, 120] {
            for alpha in [Rational::new(1, 5), Rational::new(1, 20)] {
                let d = limit_decomposition(variant, k, alpha, 5).map_err(|e| e.to_string())?;
                let want = example1_block_length(k, alpha, variant).map_err(|e| e.to_string())?;
                if d.block_lengths.is_empty() || d.block_lengths.iter().any(|&l| l != want) {
                    return Err(format!(
                        "{} k={k} alpha={alpha}: blocks {:?}, closed form {want}",
                        variant.as_str(),
                        d.block_lengths
                    ));
                }
                let tol = 3.0 * (alpha.to_f64().unwrap() + 1.0 / k as f64);
                for ((s, w0), (_, w1)) in t0.iter().zip(&t1) {
                    let g0 = (d.m0_weight(*s) - w0).to_f64().unwrap().abs();
                    let g1 = (d.m1_weight(*s) - w1).to_f64().unwrap().abs();
                    let gap = g0.max(g1);
                    if gap > tol {
                        return Err(format!(
                            "{} k={k} alpha={alpha}: symbol {s} off by {gap:.4} > {tol:.4}",
                            variant.as_str()
                        ));
                    }
                    worst_gap = worst_gap.max(gap / tol);
                }
                cases += 1;
            }
        }
    }
    Ok(format!("{cases} cases exact; worst marginal gap {:.2} of allowance", worst_gap))
}

fn residual_window() -> Outcome {
    let mut count = 0;
    let mut failures = Vec::new();
    let mut record = |label: String, lo: f64, hi: f64, value: f64| {
        count += 1;
        if !(lo <= value && value <= hi) {
            failures.push(format!("{label}: {value:.4} outside [{lo:.4}, {hi:.4}]"));
        }
    };

    // symbolic: the periodic words over three periods, and the limit decompositions
    let alphabet = WeightedAlphabet::self_payoff(&[-2, 1, 2]);
    for variant in [Variant::P, Variant::Q] {
        for k in [10usize, 50, 120] {
            for alpha in [Rational::new(1, 5), Rational::new(1, 20), Rational::new(1, 100)] {
                let word = example1_word(k, variant).map_err(|e| e.to_string())?;
                let seq = word.repeat(3);
                let phis = alphabet.payoffs(&seq).map_err(|e| e.to_string())?;
                for l in [1usize, 5, 10] {
                    let params = NeutralParams::new(alpha, l).map_err(|e| e.to_string())?;
                    let d = decompose(&seq, &phis, &params).map_err(|e| e.to_string())?;
                    let r = zero_mean_residual(&d, &phis).map_err(|e| e.to_string())?;
                    let (lo, hi) = residual_bounds(&phis, &params);
                    record(format!("{} k={k} a={alpha} L={l}", variant.as_str()), lo, hi, r.to_f64().unwrap());
                }
                let d = limit_decomposition(variant, k, alpha, 5).map_err(|e| e.to_string())?;
                let period = &phis[..word.period()];
                let (lo, hi) = residual_bounds(period, &NeutralParams::new(alpha, 5).unwrap());
                record(format!("{} k={k} a={alpha} limit", variant.as_str()), lo, hi, d.residual.to_f64().unwrap());
            }
        }
    }

    // smooth: the cocycle along lifted orbits
    let mut rng = rng(4);
    for (map, base) in zoo() {
        let p = random_proj(&map, base, &mut rng);
        let (points, phis) = lifted_orbit(&map, &p, 4000).map_err(|e| e.to_string())?;
        let points = &points[..phis.len()];
        for alpha in [0.1, 0.3, 0.7] {
            for l in [1usize, 3, 10] {
                let params = NeutralParams::new(alpha, l).map_err(|e| e.to_string())?;
                let d = decompose(points, &phis, &params).map_err(|e| e.to_string())?;
                let r = zero_mean_residual(&d, &phis).map_err(|e| e.to_string())?;
                let (lo, hi) = residual_bounds(&phis, &params);
                record(format!("{} a={alpha} L={l}", map.label()), lo, hi, r);
            }
        }
    }
    if failures.is_empty() {
        Ok(format!("{count} decompositions inside the window"))
    } else {
        Err(format!("{} of {count} outside: {}", failures.len(), failures.join("; ")))
    }
}

fn neutral_oracle() -> Outcome {
    let mut rng = rng(5);
    let mut checked = 0;
    for case in 0..500 {
        let n = rng.random_range(1..=200);
        let drift: f64 = rng.random_range(-0.5..0.8);
        let seq: Vec<f64> = (0..n).map(|_| drift + rng.random_range(-1.0..1.0)).collect();
        for alpha in [0.1, 0.3, 0.7] {
            for l in [1usize, 3, 10] {
                let fast = neutral_blocks(&seq, &NeutralParams::new(alpha, l).unwrap());
                let slow = neutral_blocks_by_enumeration(&seq, alpha, l);
                if fast != slow {
                    return Err(format!("case {case} (n={n}, alpha={alpha}, L={l}) differs"));
                }
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} (sequence, alpha, L) cells match the enumeration"))
}

fn symbolic_entropy() -> Outcome {
    let full = TransitionGraph::full(3);
    let mut worst_full: f64 = 0.0;
    for n in 1..=8 {
        let words: Vec<Vec<i64>> = full
            .words(n)
            .into_iter()
            .map(|w| w.into_iter().map(|s| s as i64).collect())
            .collect();
        let cloud = word_cloud(&words).map_err(|e| e.to_string())?;
        let b = bowen_cover(&cloud, n, 0.5).map_err(|e| e.to_string())?;
        if b.cover != 3usize.pow(n as u32) || b.packing != b.cover {
            return Err(format!("n={n}: cover {} packing {}", b.cover, b.packing));
        }
        worst_full = worst_full.max(((b.cover as f64).ln() / n as f64 - 3f64.ln()).abs());
    }
    let golden = TransitionGraph::golden_mean();
    let mut table = CoverTable::default();
    for n in 1..=20 {
        let c = golden.word_count(n) as usize;
        table.push(CoverEntry { n, eps: 0.5, eps_hat: None, gamma: None, cover: c, packing: c });
    }
    let rate = entropy_rate(&table, 0.5).map_err(|e| e.to_string())?;
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let gap = (rate - phi.ln()).abs();
    check(
        worst_full <= 1e-12 && gap <= 1e-3,
        format!("3-shift counts 3^n (rate error {worst_full:.1e}); golden-mean rate {rate:.6} (gap {gap:.1e})"),
    )
}

const KATOK_EPS: f64 = 0.1;

/// Built once; criterion 8 reads its lower rate.
fn cat_katok_table() -> Result<CoverTable, String> {
    static TABLE: OnceLock<Result<CoverTable, String>> = OnceLock::new();
    TABLE.get_or_init(build_katok_table).clone()
}

fn build_katok_table() -> Result<CoverTable, String> {
    let cat = SurfaceMap::cat();
    let n_points = 10_000;
    let traj: Vec<OnTorus> = cat
        .orbit(Point2::new(0.1234, 0.5678), n_points + 12)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(OnTorus)
        .collect();
    let cloud: OrbitCloud<OnTorus> = OrbitCloud::from_trajectory(&traj, n_points, 12).map_err(|e| e.to_string())?;
    let mut table = CoverTable::default();
    for n in 8..=12 {
        let b = katok_cover(&cloud, n, KATOK_EPS, 0.9).map_err(|e| e.to_string())?;
        table.push(CoverEntry {
            n,
            eps: KATOK_EPS,
            eps_hat: None,
            gamma: Some(0.9),
            cover: b.cover,
            packing: b.packing,
        });
    }
    Ok(table)
}

/// Smallest per-`n` lower rate over the Katok table; shared with criterion 8.
fn katok_lower_rate(table: &CoverTable) -> f64 {
    ratio_rates(table, KATOK_EPS).iter().map(|r| r.1).fold(f64::INFINITY, f64::min)
}

fn cat_katok() -> Outcome {
    let table = cat_katok_table()?;
    let h = cat_entropy();
    let (lo, hi) = (0.5 * h, 1.3 * h);
    let rows = ratio_rates(&table, KATOK_EPS);
    let mut detail = Vec::new();
    let mut ok = true;
    for (n, lower, upper) in &rows {
        ok &= *lower <= hi && *upper >= lo && lower <= upper;
        detail.push(format!("n={n} [{lower:.3}, {upper:.3}]"));
    }
    check(ok, format!("band [{lo:.3}, {hi:.3}]: {}", detail.join(" ")))
}

fn unstable_segment(len: f64) -> ParamCurve {
    let a = ((5f64.sqrt() - 1.0) / 2.0).atan();
    let x = Point2::new(0.3, 0.4);
    ParamCurve::segment(x, Point2::new(x.u + len * a.cos(), x.v + len * a.sin()))
}

fn family(map: &SurfaceMap, n: usize) -> Result<AdmissibleFamily, String> {
    admissible_family(&unstable_segment(0.09), map, 1, 0.1, 0.1, n).map_err(|e| e.to_string())
}

fn curve_growth() -> Outcome {
    let h = cat_entropy();
    let cat = family(&SurfaceMap::cat(), 16)?;
    let rates: Vec<(usize, f64)> = cat.rates().into_iter().filter(|r| r.0 >= 8).collect();
    let in_band = rates.iter().all(|r| (0.8 * h..=1.2 * h).contains(&r.1));
    let min_rate = rates.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let h_lower = katok_lower_rate(&cat_katok_table()?);
    let mut flat: f64 = 0.0;
    for map in [SurfaceMap::identity(), SurfaceMap::rotation(0.618, 0.25)] {
        let f = family(&map, 16)?;
        flat = flat.max(f.rates().iter().map(|r| r.1).fold(0.0, f64::max));
    }
    check(
        in_band && h_lower <= min_rate + 0.1 && flat <= 0.05,
        format!(
            "cat rates n=8..16 in [{:.3}, {:.3}] (band [{:.3}, {:.3}]), h_lower {h_lower:.3}; isometries {flat:.3}",
            min_rate,
            rates.iter().map(|r| r.1).fold(0.0, f64::max),
            0.8 * h,
            1.2 * h
        ),
    )
}

fn lift_dilation_bound() -> Outcome {
    let mut maps = vec![SurfaceMap::cat()];
    let mut rng = rng(9);
    for _ in 0..3 {
        maps.push(SurfaceMap::perturbed_torus(
            [2, 1, 1, 1],
            rng.random_range(-0.05..0.05),
            rng.random_range(-0.05..0.05),
        ));
    }
    // (a_2n - a_n) / n with a_n = log sup |D^n|: the bounded offset in a_n
    // cancels. 2n stays at 16 because following the most contracted line
    // for more steps loses it to rounding (condition number ~ e^(2 lambda n)).
    let n = 8;
    let increment = |d: &dyn Fn(usize) -> lyapscope_core::Result<f64>| -> Result<f64, String> {
        let (short, long) = (d(n).map_err(|e| e.to_string())?, d(2 * n).map_err(|e| e.to_string())?);
        Ok(2.0 * long - short)
    };
    let mut detail = Vec::new();
    let mut ok = true;
    for map in &maps {
        let base = map.domain().grid(16);
        let lf = increment(&|k| asymptotic_dilation(map, k, &base))?;
        let linv = increment(&|k| inverse_dilation(map, k, &base))?;
        let lhat = increment(&|k| lift_dilation(map, k, &refined_lift_grid(map, k, &base, 8)?))?;
        ok &= lhat <= lf + linv + 0.05;
        detail.push(format!("{}: {lhat:.3} vs {:.3}", map.label(), lf + linv));
    }
    check(ok, format!("lift vs lambda(f) + lambda(f^-1), slack 0.05: {}", detail.join("; ")))
}

fn identity_suite() -> Outcome {
    let mut rng = rng(10);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let lp: f64 = rng.random_range(0.01..5.0);
        let lm: f64 = -rng.random_range(0.01..5.0);
        let a = MassSplit::new(rng.random_range(0.0..=1.0)).map_err(|e| e.to_string())?;
        let beta = beta_from_mass(lp, lm, a).map_err(|e| e.to_string())?;
        let defect = defect_limit(lp, lm, a);
        worst = worst.max((beta * lp - defect).abs());
        worst = worst.max((beta * lp - (lp - a.get() * (lp - lm))).abs());
    }
    let mut missed = 0;
    let mut accepted = 0;
    for _ in 0..1000 {
        let mu1 = MeasureReport::new(rng.random_range(0.1..1.0), rng.random_range(0.5..2.0), -rng.random_range(0.5..2.0));
        let beta: f64 = rng.random_range(0.0..=1.0);
        let lim = MeasureReport::new(beta * mu1.h, beta * mu1.lambda_plus, mu1.lambda_minus);
        let clean = SequenceReport::new(vec![lim; 12], mu1, beta).map_err(|e| e.to_string())?;
        if main_identity_check(&clean, &mu1, 2.0, (1.0, 1.0)) == (true, true) {
            accepted += 1;
        }
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let bad_exp = MeasureReport::new(lim.h, lim.lambda_plus + sign * 10.0 * EXPONENT_TOL, lim.lambda_minus);
        let s = SequenceReport::new(vec![bad_exp; 12], mu1, beta).map_err(|e| e.to_string())?;
        if main_identity_check(&s, &mu1, 2.0, (1.0, 1.0)).0 {
            missed += 1;
        }
        // with dilations (1, 1) and r = 2 the entropy slack is 2 + tol
        let bad_h = MeasureReport::new(lim.h + 2.0 + 10.0 * ENTROPY_TOL, lim.lambda_plus, lim.lambda_minus);
        let s = SequenceReport::new(vec![bad_h; 12], mu1, beta).map_err(|e| e.to_string())?;
        if main_identity_check(&s, &mu1, 2.0, (1.0, 1.0)).1 {
            missed += 1;
        }
    }
    check(
        worst <= 1e-12 && missed == 0 && accepted == 1000,
        format!("identity error {worst:.1e} over 10^4 triples; {accepted}/1000 clean accepted, {missed} injected violations missed"),
    )
}

fn dimension_formulas() -> Outcome {
    let h = cat_entropy();
    let r = MeasureReport::new(h, h, -h);
    let hd = hausdorff_dim(&r).map_err(|e| e.to_string())?;
    let du = unstable_dim(&r).map_err(|e| e.to_string())?;
    let pu = pressure(&r).map_err(|e| e.to_string())?;
    let mut rng = rng(11);
    let mut exact = true;
    for _ in 0..10_000 {
        let lp: f64 = rng.random_range(0.01..5.0);
        let r = MeasureReport::new(rng.random_range(0.0..=lp), lp, -rng.random_range(0.01..5.0));
        let split = unstable_dim(&r).unwrap() + r.h / r.lambda_minus.abs();
        exact &= hausdorff_dim(&r).unwrap() == split;
    }
    check(
        hd == 2.0 && du == 1.0 && pu == 0.0 && exact,
        format!("HD={hd}, unstable dim={du}, pressure={pu}; split identity exact: {exact}"),
    )
}

fn main() -> ExitCode {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria = [
        Criterion { id: 1, name: "cocycle identity", budget: Duration::from_secs(1), run: cocycle_identity },
        Criterion { id: 2, name: "cat-map exponents", budget: Duration::from_secs(1), run: cat_exponents },
        Criterion { id: 3, name: "example 1 exactness", budget: Duration::from_secs(5), run: example1_exactness },
        Criterion { id: 4, name: "neutral residual window", budget: Duration::from_secs(10), run: residual_window },
        Criterion { id: 5, name: "neutral-block oracle", budget: Duration::from_secs(30), run: neutral_oracle },
        Criterion { id: 6, name: "symbolic entropy", budget: Duration::from_secs(5), run: symbolic_entropy },
        Criterion { id: 7, name: "cat-map katok bracket", budget: Duration::from_secs(60), run: cat_katok },
        Criterion { id: 8, name: "curve growth vs entropy", budget: Duration::from_secs(60), run: curve_growth },
        Criterion { id: 9, name: "lift dilation", budget: Duration::from_secs(30), run: lift_dilation_bound },
        Criterion { id: 10, name: "identities and negative controls", budget: Duration::from_secs(1), run: identity_suite },
        Criterion { id: 11, name: "dimension formulas", budget: Duration::from_secs(1), run: dimension_formulas },
    ];
    let mut failed = 0;
    for c in criteria.iter().filter(|c| filter.as_deref().is_none_or(|f| c.name.contains(f))) {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let (mut pass, detail) = match outcome {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        let slow = elapsed > c.budget;
        pass &= !slow;
        failed += usize::from(!pass);
        println!(
            "criterion {:>2} {} {:<34} {:>8.2}s / {:>3}s{}  {}",
            c.id,
            if pass { "PASS" } else { "FAIL" },
            c.name,
            elapsed.as_secs_f64(),
            c.budget.as_secs(),
            if slow { " (over budget)" } else { "" },
            detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
