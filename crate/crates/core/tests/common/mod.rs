//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use std::f64::consts::TAU;

use lyapscope_core::dynamics::Vec2;
use lyapscope_core::neutral::{Block, BlockSet, Scalar};
use lyapscope_core::{Point2, ProjPoint, SurfaceMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GOLDEN2: f64 = 2.618_033_988_749_895; // (3 + sqrt 5) / 2

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cat_entropy() -> f64 {
    GOLDEN2.ln()
}

/// Jacobians written out by hand, one formula per map kind.
pub fn jacobian_by_hand(kind: &str, params: &[f64], p: Point2) -> [[f64; 2]; 2] {
    let mul = |a: [[f64; 2]; 2], b: [[f64; 2]; 2]| {
        let mut c = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        c
    };
    // u += d1 sin(2 pi v), then v += d2 sin(2 pi u)
    let shears = |d1: f64, d2: f64| {
        let u1 = p.u + d1 * (TAU * p.v).sin();
        let s1 = [[1.0, d1 * TAU * (TAU * p.v).cos()], [0.0, 1.0]];
        let s2 = [[1.0, 0.0], [d2 * TAU * (TAU * u1).cos(), 1.0]];
        (mul(s2, s1), Point2::new(u1, p.v + d2 * (TAU * u1).sin()))
    };
    match kind {
        "identity" | "rotation" => [[1.0, 0.0], [0.0, 1.0]],
        "torus-linear" => [[params[0], params[1]], [params[2], params[3]]],
        "perturbed-torus" => {
            let (s, _) = shears(params[4], params[5]);
            mul([[params[0], params[1]], [params[2], params[3]]], s)
        }
        "henon-like" => {
            let (a, b) = (params[0], params[1]);
            let (s, q) = if params.len() == 4 {
                shears(params[2], params[3])
            } else {
                ([[1.0, 0.0], [0.0, 1.0]], p)
            };
            mul([[-2.0 * a * q.u, 1.0], [b, 0.0]], s)
        }
        other => panic!("no hand Jacobian for {other}"),
    }
}

/// `log |Df^n_x v|` from the full matrix product, with `v` the unit vector at angle `theta`.
pub fn log_growth_by_product(map: &SurfaceMap, x: Point2, theta: f64, n: usize) -> f64 {
    let orbit = map.orbit(x, n).expect("orbit stays in the domain");
    let kind = map.kind().as_str();
    let mut m = [[1.0, 0.0], [0.0, 1.0]];
    for p in &orbit[..n] {
        let j = jacobian_by_hand(kind, map.params(), *p);
        let mut next = [[0.0; 2]; 2];
        for i in 0..2 {
            for k in 0..2 {
                next[i][k] = j[i][0] * m[0][k] + j[i][1] * m[1][k];
            }
        }
        m = next;
    }
    let (s, c) = theta.sin_cos();
    let w: Vec2 = [m[0][0] * c + m[0][1] * s, m[1][0] * c + m[1][1] * s];
    w[0].hypot(w[1]).ln()
}

/// Maps with a start point each; the Henon start lies on its attractor.
pub fn zoo() -> Vec<(SurfaceMap, Point2)> {
    let henon = SurfaceMap::henon(1.4, 0.3);
    let on_attractor = henon.orbit(Point2::new(0.1, 0.1), 500).unwrap()[500];
    vec![
        (SurfaceMap::cat(), Point2::new(0.123, 0.456)),
        (SurfaceMap::torus_linear([3, 2, 1, 1]), Point2::new(0.31, 0.72)),
        (SurfaceMap::perturbed_torus([2, 1, 1, 1], 0.03, -0.02), Point2::new(0.2, 0.9)),
        (henon, on_attractor),
        (SurfaceMap::rotation(0.618, 0.25), Point2::new(0.5, 0.5)),
        (SurfaceMap::identity(), Point2::new(0.7, 0.1)),
    ]
}

pub fn random_start(map: &SurfaceMap, base: Point2, rng: &mut impl Rng) -> Point2 {
    if map.kind().as_str() == "henon-like" {
        let k = rng.random_range(0..200);
        map.orbit(base, k).unwrap()[k]
    } else {
        Point2::new(rng.random(), rng.random())
    }
}

pub fn random_proj(map: &SurfaceMap, base: Point2, rng: &mut impl Rng) -> ProjPoint {
    ProjPoint::new(random_start(map, base, rng), rng.random_range(0.0..std::f64::consts::PI))
}

/// Every interval of length >= L whose partial sums stay below `alpha` times
/// the elapsed time, unioned into maximal runs. Cubic time.
pub fn neutral_blocks_by_enumeration<S: Scalar>(seq: &[S], alpha: S, min_len: usize) -> BlockSet {
    let n = seq.len();
    let mut covered = vec![false; n];
    for a in 0..n {
        for b in a + min_len.max(1)..=n {
            let mut sum = S::zero();
            let mut ok = true;
            for (m, &x) in seq[a..b].iter().enumerate() {
                sum = sum + x;
                if sum > alpha * S::from_usize(m + 1) {
                    ok = false;
                    break;
                }
            }
            if ok {
                covered[a..b].iter_mut().for_each(|c| *c = true);
            }
        }
    }
    let mut blocks = Vec::new();
    let mut j = 0;
    while j < n {
        if covered[j] {
            let start = j;
            while j < n && covered[j] {
                j += 1;
            }
            blocks.push(Block { start, end: j });
        } else {
            j += 1;
        }
    }
    BlockSet { blocks }
}
