use std::time::Instant;

use anyhow::Result;
use lyapscope_core::curve::{admissible_family, ParamCurve};
use lyapscope_core::diagnostics::{
    discontinuity_ratio, hausdorff_dim, main_identity_check, pressure, sequence_limit, srb_flag, unstable_dim,
    variant_bound, variant_bound_check, MeasureReport, SequenceReport, ENTROPY_TOL, EXPONENT_TOL, RUELLE_SLACK,
};
use lyapscope_core::dynamics::{asymptotic_dilation, inverse_dilation, lifted_orbit};
use lyapscope_core::entropy::{bowen_cover, katok_cover, OnPlane, OnTorus, OrbitCloud, Site};
use lyapscope_core::lyapunov::{top_exponent, GOLDEN_ANGLE};
use lyapscope_core::neutral::{decompose, residual_bounds, zero_mean_residual, NeutralParams};
use lyapscope_core::shift_lab::{example1_block_length, limit_decomposition, Rational};
use lyapscope_core::{Domain, Point2, ProjPoint, SurfaceMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::output::{fmt_f64, RunOutput, Table};

/// Orbit length for exponents inside the identity sweep.
const SWEEP_EXPONENT_ORBIT: usize = 4000;
/// Steps discarded before a plane-map start is used, so it sits near the attractor.
const PLANE_SETTLE: usize = 300;
const DEFAULT_GAMMA: f64 = 0.9;

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    match cfg.kind() {
        ExperimentKind::Exponents => exponents(cfg),
        ExperimentKind::Entropy => entropy(cfg),
        ExperimentKind::Neutral => neutral(cfg),
        ExperimentKind::ShiftExample1 => shift_example1(cfg),
        ExperimentKind::CurveGrowth => curve_growth(cfg),
        ExperimentKind::SweepIdentityCheck => sweep_identity_check(cfg),
    }
}

struct Stages {
    out: RunOutput,
    clock: Instant,
}

impl Stages {
    fn new() -> Self {
        Self {
            out: RunOutput::default(),
            clock: Instant::now(),
        }
    }

    fn lap(&mut self, name: &str) {
        self.out.stages.push((name.to_string(), self.clock.elapsed().as_secs_f64()));
        self.clock = Instant::now();
    }
}

fn rng(cfg: &ExperimentConfig) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cfg.rng_seed)
}

fn random_starts(map: &SurfaceMap, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Point2>> {
    (0..count)
        .map(|_| match map.domain() {
            Domain::Torus => Ok(Point2::new(rng.random(), rng.random())),
            Domain::Plane(_) => {
                let x = Point2::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
                Ok(map.orbit(x, PLANE_SETTLE)?[PLANE_SETTLE])
            }
        })
        .collect()
}

fn opt_f64(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn exponents(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let mut st = Stages::new();
    let map = cfg.surface_map()?;
    let starts = random_starts(&map, cfg.grid.samples, &mut rng(cfg))?;
    let cells: Vec<(usize, usize)> = cfg
        .grid
        .n
        .iter()
        .flat_map(|&n| (0..starts.len()).map(move |i| (n, i)))
        .collect();
    let estimates = cells
        .par_iter()
        .map(|&(n, i)| top_exponent(&map, starts[i], GOLDEN_ANGLE, n))
        .collect::<Result<Vec<_>, _>>()?;
    st.lap("exponents");

    let mut table = Table::new(
        "exponents",
        &["map", "n", "sample", "x_u", "x_v", "lambda_plus", "lambda_minus", "sum", "convergence_proxy"],
    );
    for (&(n, i), e) in cells.iter().zip(&estimates) {
        table.push(vec![
            map.label(),
            n.to_string(),
            i.to_string(),
            fmt_f64(starts[i].u),
            fmt_f64(starts[i].v),
            fmt_f64(e.lambda_plus),
            fmt_f64(e.lambda_minus),
            fmt_f64(e.lambda_plus + e.lambda_minus),
            fmt_f64(e.convergence_proxy),
        ]);
    }
    let per_n: Vec<_> = cfg
        .grid
        .n
        .iter()
        .map(|&n| {
            let picked: Vec<_> = cells.iter().zip(&estimates).filter(|(c, _)| c.0 == n).map(|(_, e)| e).collect();
            let m = picked.len() as f64;
            json!({
                "n": n,
                "mean_lambda_plus": picked.iter().map(|e| e.lambda_plus).sum::<f64>() / m,
                "mean_lambda_minus": picked.iter().map(|e| e.lambda_minus).sum::<f64>() / m,
            })
        })
        .collect();
    st.out.tables.push(table);
    st.out.json.push(("summary".into(), json!({ "map": map.label(), "per_n": per_n })));
    Ok(st.out)
}

#[derive(Serialize)]
struct CoverRow {
    n: usize,
    eps: f64,
    cover: usize,
    packing: usize,
}

fn cover_rows<A: Site>(cloud: &OrbitCloud<A>, ns: &[usize], eps: &[f64], gamma: Option<f64>) -> Result<Vec<CoverRow>> {
    let mut rows = Vec::new();
    for &e in eps {
        for &n in ns {
            let b = match gamma {
                Some(g) => katok_cover(cloud, n, e, g)?,
                None => bowen_cover(cloud, n, e)?,
            };
            rows.push(CoverRow {
                n,
                eps: e,
                cover: b.cover,
                packing: b.packing,
            });
        }
    }
    Ok(rows)
}

/// Katok windows along one orbit when `gamma` is set, independent starts otherwise.
fn cloud_rows(map: &SurfaceMap, cfg: &ExperimentConfig, ns: &[usize], eps: &[f64], gamma: Option<f64>, rng: &mut ChaCha8Rng) -> Result<Vec<CoverRow>> {
    let n_max = *ns.iter().max().expect("validated nonempty");
    let samples = cfg.grid.samples;
    let orbits: Vec<Vec<Point2>> = if gamma.is_some() {
        let x = random_starts(map, 1, rng)?[0];
        let traj = map.orbit(x, samples + n_max)?;
        (0..samples).map(|j| traj[j..j + n_max].to_vec()).collect()
    } else {
        random_starts(map, samples, rng)?
            .par_iter()
            .map(|&x| map.orbit(x, n_max - 1))
            .collect::<Result<_, _>>()?
    };
    match map.domain() {
        Domain::Torus => {
            let cloud = OrbitCloud::uniform(orbits.into_iter().map(|o| o.into_iter().map(OnTorus).collect()).collect())?;
            cover_rows(&cloud, ns, eps, gamma)
        }
        Domain::Plane(_) => {
            let cloud = OrbitCloud::uniform(orbits.into_iter().map(|o| o.into_iter().map(OnPlane).collect()).collect())?;
            cover_rows(&cloud, ns, eps, gamma)
        }
    }
}

fn ratio(count: usize, n: usize) -> f64 {
    (count.max(1) as f64).ln() / n as f64
}

fn entropy(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let mut st = Stages::new();
    let map = cfg.surface_map()?;
    let rows = cloud_rows(&map, cfg, &cfg.grid.n, &cfg.grid.eps, cfg.grid.gamma, &mut rng(cfg))?;
    st.lap("covers");
    let mut table = Table::new("entropy", &["map", "n", "eps", "gamma", "cover", "packing", "rate_lower", "rate_upper"]);
    for r in &rows {
        table.push(vec![
            map.label(),
            r.n.to_string(),
            fmt_f64(r.eps),
            opt_f64(cfg.grid.gamma),
            r.cover.to_string(),
            r.packing.to_string(),
            fmt_f64(ratio(r.packing, r.n)),
            fmt_f64(ratio(r.cover, r.n)),
        ]);
    }
    let per_eps: Vec<_> = cfg
        .grid
        .eps
        .iter()
        .map(|&e| {
            let at: Vec<&CoverRow> = rows.iter().filter(|r| r.eps == e).collect();
            let last = at.iter().max_by_key(|r| r.n).expect("nonempty grid");
            json!({
                "eps": e,
                "n": last.n,
                "rate_lower": ratio(last.packing, last.n),
                "rate_upper": ratio(last.cover, last.n),
            })
        })
        .collect();
    st.out.tables.push(table);
    st.out.json.push(("summary".into(), json!({ "map": map.label(), "gamma": cfg.grid.gamma, "brackets": per_eps })));
    Ok(st.out)
}

fn neutral(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let mut st = Stages::new();
    let map = cfg.surface_map()?;
    let x = random_starts(&map, 1, &mut rng(cfg))?[0];
    let mut table = Table::new(
        "neutral",
        &["map", "n", "alpha", "min_len", "blocks", "covered", "beta", "residual", "window_lower", "window_upper", "in_window"],
    );
    let mut blocks = Table::new("blocks", &["n", "alpha", "min_len", "start", "end"]);
    for &n in &cfg.grid.n {
        let (_, phis) = lifted_orbit(&map, &ProjPoint::new(x, GOLDEN_ANGLE), n)?;
        let steps: Vec<usize> = (0..n).collect();
        for a in &cfg.grid.alpha {
            let alpha = a.float()?;
            for &l in &cfg.grid.min_len {
                let params = NeutralParams::new(alpha, l)?;
                let d = decompose(&steps, &phis, &params)?;
                let r = zero_mean_residual(&d, &phis)?;
                let (lo, hi) = residual_bounds(&phis, &params);
                table.push(vec![
                    map.label(),
                    n.to_string(),
                    fmt_f64(alpha),
                    l.to_string(),
                    d.blocks.blocks.len().to_string(),
                    d.blocks.covered().to_string(),
                    fmt_f64(d.beta),
                    fmt_f64(r),
                    fmt_f64(lo),
                    fmt_f64(hi),
                    (lo <= r && r <= hi).to_string(),
                ]);
                for b in &d.blocks.blocks {
                    blocks.push(vec![n.to_string(), fmt_f64(alpha), l.to_string(), b.start.to_string(), b.end.to_string()]);
                }
            }
        }
    }
    st.lap("decompositions");
    st.out.tables.push(table);
    st.out.tables.push(blocks);
    Ok(st.out)
}

fn shift_example1(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let mut st = Stages::new();
    let g = &cfg.grid;
    let min_lens = if g.min_len.is_empty() { vec![5] } else { g.min_len.clone() };
    let mut table = Table::new(
        "decomposition",
        &[
            "variant", "k", "alpha", "min_len", "block_length", "closed_form", "blocks_match", "beta", "m0_neg2",
            "m0_pos1", "m0_pos2", "m1_neg2", "m1_pos1", "m1_pos2", "residual",
        ],
    );
    let show = |r: Rational| r.to_string();
    for &variant in &g.variant {
        for &k in &g.k {
            for a in &g.alpha {
                let alpha = a.rational()?;
                for &l in &min_lens {
                    let d = limit_decomposition(variant, k, alpha, l)?;
                    let closed = example1_block_length(k, alpha, variant)?;
                    let matches = !d.block_lengths.is_empty() && d.block_lengths.iter().all(|&b| b == closed);
                    let observed = d.block_lengths.first().map(|b| b.to_string()).unwrap_or_default();
                    table.push(vec![
                        variant.as_str().to_string(),
                        k.to_string(),
                        show(alpha),
                        l.to_string(),
                        observed,
                        closed.to_string(),
                        matches.to_string(),
                        show(d.beta),
                        show(d.m0_weight(-2)),
                        show(d.m0_weight(1)),
                        show(d.m0_weight(2)),
                        show(d.m1_weight(-2)),
                        show(d.m1_weight(1)),
                        show(d.m1_weight(2)),
                        show(d.residual),
                    ]);
                }
            }
        }
    }
    st.lap("decompositions");
    st.out.tables.push(table);
    Ok(st.out)
}

fn curve_growth(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let mut st = Stages::new();
    let map = cfg.surface_map()?;
    let c = cfg.curve.clone().unwrap_or_default();
    let start = Point2::new(c.start[0], c.start[1]);
    let end = Point2::new(start.u + c.length * c.angle.cos(), start.v + c.length * c.angle.sin());
    let curve = ParamCurve::segment(start, end);
    let horizon = *cfg.grid.n.iter().max().expect("validated nonempty");
    let mut table = Table::new("curve_growth", &["map", "eps", "eps_hat", "block", "t", "count", "rate"]);
    let mut summary = Vec::new();
    for &eps in &cfg.grid.eps {
        let eps_hat = cfg.grid.eps_hat.unwrap_or(eps);
        let fam = admissible_family(&curve, &map, cfg.grid.block, eps, eps_hat, horizon)?;
        for (&t, &count) in fam.admissible_times.iter().zip(&fam.counts_per_step) {
            let rate = if t > 0 { Some((count as f64).ln() / t as f64) } else { None };
            table.push(vec![
                map.label(),
                fmt_f64(eps),
                fmt_f64(eps_hat),
                cfg.grid.block.to_string(),
                t.to_string(),
                count.to_string(),
                opt_f64(rate),
            ]);
        }
        let in_grid: Vec<f64> = fam.rates().into_iter().filter(|r| cfg.grid.n.contains(&r.0)).map(|r| r.1).collect();
        summary.push(json!({
            "eps": eps,
            "eps_hat": eps_hat,
            "pieces": fam.len(),
            "min_rate": in_grid.iter().copied().reduce(f64::min),
            "max_rate": in_grid.iter().copied().reduce(f64::max),
        }));
        st.lap(&format!("family eps={eps}"));
    }
    st.out.tables.push(table);
    st.out.json.push(("summary".into(), json!({ "map": map.label(), "families": summary })));
    Ok(st.out)
}

/// Everything measured for one map of the sweep.
#[derive(Clone, Debug, Serialize)]
struct MemberMeasurement {
    report: MeasureReport,
    h_lower: f64,
    h_upper: f64,
    beta: f64,
    /// `int phi dm1 / beta`, the top exponent of the non-neutral part.
    m1_exponent: Option<f64>,
}

fn measure_member(map: &SurfaceMap, cfg: &ExperimentConfig, seed: u64) -> Result<MemberMeasurement> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_starts(map, 1, &mut rng)?[0];
    let e = top_exponent(map, x, GOLDEN_ANGLE, SWEEP_EXPONENT_ORBIT)?;
    let gamma = cfg.grid.gamma.unwrap_or(DEFAULT_GAMMA);
    let eps = cfg.grid.eps[0];
    let rows = cloud_rows(map, cfg, &cfg.grid.n, &[eps], Some(gamma), &mut rng)?;
    let last = rows.iter().max_by_key(|r| r.n).expect("nonempty grid");
    let (h_lower, h_upper) = (ratio(last.packing, last.n), ratio(last.cover, last.n));

    let (_, phis) = lifted_orbit(map, &ProjPoint::new(x, GOLDEN_ANGLE), SWEEP_EXPONENT_ORBIT)?;
    let steps: Vec<usize> = (0..phis.len()).collect();
    let params = NeutralParams::new(cfg.grid.alpha[0].float()?, cfg.grid.min_len[0])?;
    let d = decompose(&steps, &phis, &params)?;
    let m1_exponent = (d.beta > 0.0).then(|| d.m1.integrate(|&j| phis[j]) / d.beta);
    Ok(MemberMeasurement {
        report: MeasureReport::new(0.5 * (h_lower + h_upper), e.lambda_plus, e.lambda_minus),
        h_lower,
        h_upper,
        beta: d.beta,
        m1_exponent,
    })
}

/// `(a_2n - a_n) / n` for a subadditive `a_n = n d(n)`.
fn dilation_increment(d: impl Fn(usize) -> lyapscope_core::Result<f64>) -> Result<f64> {
    const N: usize = 8;
    Ok(2.0 * d(2 * N)? - d(N)?)
}

fn sweep_identity_check(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let mut st = Stages::new();
    let family = cfg.family_limit()?;
    let ks = &cfg.family.as_ref().expect("validated").k;
    let sweep = cfg.sweep.clone().unwrap_or_default();
    let members: Vec<MemberMeasurement> = ks
        .par_iter()
        .enumerate()
        .map(|(i, &k)| measure_member(&family.member(k)?, cfg, cfg.rng_seed.wrapping_add(i as u64 + 1)))
        .collect::<Result<_>>()?;
    let limit = measure_member(&family.limit, cfg, cfg.rng_seed)?;
    st.lap("members");

    let grid = family.limit.domain().grid(16);
    let dil_f = dilation_increment(|n| asymptotic_dilation(&family.limit, n, &grid))?;
    let dil_inv = dilation_increment(|n| inverse_dilation(&family.limit, n, &grid))?;
    st.lap("dilations");

    let member_reports: Vec<MeasureReport> = members.iter().map(|m| m.report).collect();
    let window = sequence_limit(&member_reports).window;
    let tail = &members[members.len() - window..];
    let beta = sweep.beta.unwrap_or(tail.iter().map(|m| m.beta).sum::<f64>() / window as f64);
    let m1_exponents: Vec<f64> = tail.iter().filter_map(|m| m.m1_exponent).collect();
    let mu1 = MeasureReport::new(
        limit.report.h,
        if m1_exponents.is_empty() {
            limit.report.lambda_plus
        } else {
            m1_exponents.iter().sum::<f64>() / m1_exponents.len() as f64
        },
        limit.report.lambda_minus,
    );
    let seq = SequenceReport::new(member_reports.clone(), limit.report, beta)?;
    let (exponent_identity, entropy_inequality) = main_identity_check(&seq, &mu1, sweep.r_smooth, (dil_f, dil_inv));
    let variant = variant_bound_check(&seq, &limit.report).ok();
    let bound = variant_bound(&seq, &limit.report).ok();
    let ruelle_all = members.iter().chain([&limit]).all(|m| m.h_upper <= m.report.lambda_plus + RUELLE_SLACK);

    let mut table = Table::new(
        "members",
        &[
            "k", "map", "h_lower", "h_upper", "h", "lambda_plus", "lambda_minus", "beta", "hausdorff_dim", "unstable_dim",
            "pressure", "srb", "ruelle_gate",
        ],
    );
    let labels: Vec<(String, String)> = ks
        .iter()
        .map(|&k| Ok((k.to_string(), family.member(k)?.label())))
        .chain([Ok(("limit".to_string(), family.limit.label()))])
        .collect::<Result<_>>()?;
    for ((k, label), m) in labels.into_iter().zip(members.iter().chain([&limit])) {
        let r = &m.report;
        table.push(vec![
            k,
            label,
            fmt_f64(m.h_lower),
            fmt_f64(m.h_upper),
            fmt_f64(r.h),
            fmt_f64(r.lambda_plus),
            fmt_f64(r.lambda_minus),
            fmt_f64(m.beta),
            opt_f64(hausdorff_dim(r).ok()),
            opt_f64(unstable_dim(r).ok()),
            opt_f64(pressure(r).ok()),
            srb_flag(r, EXPONENT_TOL).map(|b| b.to_string()).unwrap_or_default(),
            (m.h_upper <= r.lambda_plus + RUELLE_SLACK).to_string(),
        ]);
    }
    st.out.tables.push(table);
    let lim = seq.member_limit();
    st.out.json.push((
        "verdict".into(),
        json!({
            "beta": beta,
            "beta_source": if sweep.beta.is_some() { "config" } else { "neutral-blocks" },
            "limit": limit.report,
            "member_limit": lim,
            "mu1": mu1,
            "r_smooth": sweep.r_smooth,
            "dilations": { "forward": dil_f, "inverse": dil_inv },
            "exponent_identity": exponent_identity,
            "entropy_inequality": entropy_inequality,
            "variant_bound": bound,
            "variant_bound_holds": variant,
            "discontinuity_ratio": discontinuity_ratio(&seq).ok(),
            "ruelle_gate": ruelle_all,
            "tolerances": { "exponent": EXPONENT_TOL, "entropy": ENTROPY_TOL, "ruelle": RUELLE_SLACK },
        }),
    ));
    st.lap("verdict");
    Ok(st.out)
}
