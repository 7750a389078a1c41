mod common;

use common::*;
use lyapscope_core::dynamics::{lift_jacobian, lift_step, lifted_orbit, normalize_angle};
use lyapscope_core::{cocycle_sum, Point2, ProjPoint, SurfaceMap};
use proptest::prelude::*;
use rand::Rng;

const H: f64 = 1e-6;

fn central_jacobian(map: &SurfaceMap, p: Point2) -> [[f64; 2]; 2] {
    let f = |q: Point2| map.jet_unwrapped(q).value;
    let du = (f(Point2::new(p.u + H, p.v)), f(Point2::new(p.u - H, p.v)));
    let dv = (f(Point2::new(p.u, p.v + H)), f(Point2::new(p.u, p.v - H)));
    [
        [(du.0.u - du.1.u) / (2.0 * H), (dv.0.u - dv.1.u) / (2.0 * H)],
        [(du.0.v - du.1.v) / (2.0 * H), (dv.0.v - dv.1.v) / (2.0 * H)],
    ]
}

#[test]
fn jacobians_match_finite_differences_and_hand_formulas() {
    let mut rng = rng(21);
    for (map, base) in zoo() {
        for _ in 0..20 {
            let p = random_start(&map, base, &mut rng);
            let j = map.jacobian(p);
            let got = [[j.a, j.b], [j.c, j.d]];
            let fd = central_jacobian(&map, p);
            let hand = jacobian_by_hand(map.kind().as_str(), map.params(), p);
            for i in 0..2 {
                for k in 0..2 {
                    assert!((got[i][k] - fd[i][k]).abs() < 1e-6, "{} fd", map.label());
                    assert!((got[i][k] - hand[i][k]).abs() < 1e-12, "{} hand", map.label());
                }
            }
        }
    }
}

#[test]
fn hessians_match_finite_differences() {
    let mut rng = rng(22);
    let maps = [
        SurfaceMap::henon(1.4, 0.3),
        SurfaceMap::perturbed_torus([2, 1, 1, 1], 0.04, 0.03),
        SurfaceMap::from_spec(lyapscope_core::MapSpec {
            kind: lyapscope_core::MapKind::HenonLike,
            params: vec![1.2, 0.3, 0.02, -0.01],
            domain: None,
        })
        .unwrap(),
    ];
    for map in maps {
        for _ in 0..20 {
            let p = Point2::new(rng.random_range(-0.8..0.8), rng.random_range(-0.4..0.4));
            let hess = map.hessian(p);
            for (axis, (du, dv)) in [(1.0, 0.0), (0.0, 1.0)].into_iter().enumerate() {
                let plus = map.jacobian(Point2::new(p.u + H * du, p.v + H * dv));
                let minus = map.jacobian(Point2::new(p.u - H * du, p.v - H * dv));
                let fd = [
                    [(plus.a - minus.a) / (2.0 * H), (plus.b - minus.b) / (2.0 * H)],
                    [(plus.c - minus.c) / (2.0 * H), (plus.d - minus.d) / (2.0 * H)],
                ];
                for i in 0..2 {
                    for k in 0..2 {
                        assert!((hess[i][k][axis] - fd[i][k]).abs() < 1e-5, "{}", map.label());
                    }
                }
            }
        }
    }
}

#[test]
fn henon_jets_follow_the_chain_rule() {
    let map = SurfaceMap::henon(1.4, 0.3);
    let p = Point2::new(0.3, 0.1);
    let q = map.jet_unwrapped(p);
    let two = map.jet_unwrapped(q.value).compose(&q);
    let direct = map.jacobian(q.value).mul(&map.jacobian(p));
    for (a, b) in [(two.jacobian.a, direct.a), (two.jacobian.b, direct.b), (two.jacobian.c, direct.c), (two.jacobian.d, direct.d)] {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn lift_jacobian_matches_finite_differences() {
    let mut rng = rng(23);
    for (map, base) in zoo() {
        for _ in 0..10 {
            let p = random_proj(&map, base, &mut rng);
            let j = lift_jacobian(&map, &p).unwrap();
            let step = |q: ProjPoint| {
                let (r, _) = lift_step(&map, &q).unwrap();
                (map.jet_unwrapped(q.base).value, r.theta)
            };
            let (_, th0) = step(p);
            for axis in 0..3 {
                let mut e = [0.0; 3];
                e[axis] = H;
                let shift = |s: f64| ProjPoint::new(Point2::new(p.base.u + s * e[0], p.base.v + s * e[1]), p.theta + s * e[2]);
                let (bp, tp) = step(shift(1.0));
                let (bm, tm) = step(shift(-1.0));
                let dtheta = {
                    let d = normalize_angle(tp - th0 + std::f64::consts::FRAC_PI_2) - std::f64::consts::FRAC_PI_2
                        - (normalize_angle(tm - th0 + std::f64::consts::FRAC_PI_2) - std::f64::consts::FRAC_PI_2);
                    d / (2.0 * H)
                };
                let col = [(bp.u - bm.u) / (2.0 * H), (bp.v - bm.v) / (2.0 * H), dtheta];
                for row in 0..3 {
                    assert!((j[(row, axis)] - col[row]).abs() < 1e-4, "{} ({row},{axis})", map.label());
                }
            }
        }
    }
}

#[test]
fn cat_inverse_jacobian_roundtrip() {
    let cat = SurfaceMap::cat();
    let p = Point2::new(0.2, 0.7);
    for _ in 0..3 {
        let q = cat.apply(p).unwrap();
        let back = cat.apply_inverse(q).unwrap();
        assert!(back.torus_dist(&p) < 1e-12);
        let jf = cat.jacobian(p);
        let jinv = cat.inverse_jacobian(q).unwrap();
        let prod = jinv.mul(&jf);
        assert!((prod.a - 1.0).abs() < 1e-12 && prod.b.abs() < 1e-12 && prod.c.abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn cocycle_is_additive(seed in any::<u64>(), n in 1usize..40, m in 1usize..40) {
        let mut rng = rng(seed);
        let zoo = zoo();
        let (map, base) = &zoo[rng.random_range(0..zoo.len())];
        let p = random_proj(map, *base, &mut rng);
        let (pts, _) = lifted_orbit(map, &p, n + 1).unwrap();
        let whole = cocycle_sum(map, &p, n + m).unwrap();
        let split = cocycle_sum(map, &p, n).unwrap() + cocycle_sum(map, &pts[n], m).unwrap();
        prop_assert!((whole - split).abs() < 1e-9);
    }

    #[test]
    fn inverse_undoes_the_map(seed in any::<u64>()) {
        let mut rng = rng(seed);
        for (map, base) in zoo() {
            let p = random_start(&map, base, &mut rng);
            let q = map.apply(p).unwrap();
            let back = map.apply_inverse(q).unwrap();
            prop_assert!(map.domain().dist(&back, &p) < 1e-9, "{}", map.label());
        }
    }
}
