//! Iterated curves cut into pieces of bounded size.
//!
//! Curves are cubic polynomials on `[0, 1]`. Images under a map are not
//! polynomial, so each image piece is refit as the least-squares cubic
//! through 8 equispaced points and accepted only if the fit stays within
//! `eps / 10` of the true image at the midpoints between nodes. Pieces that
//! are too large or fit badly are bisected.

use std::sync::LazyLock;

use nalgebra::{DMatrix, SMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    fiber_dist, lift_grid, lift_step, lift_sup_norm, normalize_angle, Point2, ProjPoint,
    SurfaceMap, Vec2,
};
use crate::error::{Error, Result};

pub const MAX_DEPTH: usize = 40;
const FIT_NODES: usize = 8;
const SIZE_SAMPLES: usize = 9;

fn poly(c: &[f64; 4], t: f64) -> f64 {
    ((c[3] * t + c[2]) * t + c[1]) * t + c[0]
}

fn poly_d1(c: &[f64; 4], t: f64) -> f64 {
    (3.0 * c[3] * t + 2.0 * c[2]) * t + c[1]
}

fn poly_d2(c: &[f64; 4], t: f64) -> f64 {
    6.0 * c[3] * t + 2.0 * c[2]
}

/// Coefficients of `t -> p(a + b t)`.
fn taylor_shift(c: &[f64; 4], a: f64, b: f64) -> [f64; 4] {
    let d0 = poly(c, a);
    let d1 = poly_d1(c, a);
    let d2 = poly_d2(c, a) / 2.0;
    let d3 = c[3];
    [d0, d1 * b, d2 * b * b, d3 * b * b * b]
}

/// Planar cubic `sigma(t) = (u(t), v(t))`, `t in [0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamCurve {
    pub u: [f64; 4],
    pub v: [f64; 4],
}

impl ParamCurve {
    pub fn new(u: [f64; 4], v: [f64; 4]) -> Self {
        Self { u, v }
    }

    pub fn segment(a: Point2, b: Point2) -> Self {
        Self::new([a.u, b.u - a.u, 0.0, 0.0], [a.v, b.v - a.v, 0.0, 0.0])
    }

    pub fn eval(&self, t: f64) -> Point2 {
        Point2::new(poly(&self.u, t), poly(&self.v, t))
    }

    pub fn d1(&self, t: f64) -> Vec2 {
        [poly_d1(&self.u, t), poly_d1(&self.v, t)]
    }

    pub fn d2(&self, t: f64) -> Vec2 {
        [poly_d2(&self.u, t), poly_d2(&self.v, t)]
    }

    /// Angle of the tangent line.
    pub fn theta(&self, t: f64) -> f64 {
        let d = self.d1(t);
        normalize_angle(d[1].atan2(d[0]))
    }

    /// `theta' = (sigma' x sigma'') / |sigma'|^2`.
    pub fn theta_rate(&self, t: f64) -> f64 {
        let a = self.d1(t);
        let b = self.d2(t);
        (a[0] * b[1] - a[1] * b[0]) / (a[0] * a[0] + a[1] * a[1])
    }

    /// Canonical lift `(sigma(t), tangent line at t)`.
    pub fn lift(&self, t: f64) -> ProjPoint {
        ProjPoint::new(self.eval(t), self.theta(t))
    }

    /// Exact coefficients of `sigma o psi`.
    pub fn reparam(&self, psi: &Reparam) -> ParamCurve {
        ParamCurve {
            u: taylor_shift(&self.u, psi.offset, psi.scale),
            v: taylor_shift(&self.v, psi.offset, psi.scale),
        }
    }

    /// Least-squares cubic through points at `t = j / 7`, `j = 0..8`.
    pub fn fit(points: &[Point2; FIT_NODES]) -> ParamCurve {
        let pinv = &*FIT_PINV;
        let mut u = [0.0; 4];
        let mut v = [0.0; 4];
        for k in 0..4 {
            for (j, p) in points.iter().enumerate() {
                u[k] += pinv[(k, j)] * p.u;
                v[k] += pinv[(k, j)] * p.v;
            }
        }
        ParamCurve { u, v }
    }

    /// Polyline length through `segments + 1` equispaced points.
    pub fn polyline_length(&self, segments: usize) -> f64 {
        polyline(|t| self.eval(t), segments)
    }
}

fn polyline(f: impl Fn(f64) -> Point2, segments: usize) -> f64 {
    let mut prev = f(0.0);
    let mut total = 0.0;
    for i in 1..=segments {
        let p = f(i as f64 / segments as f64);
        total += prev.plane_dist(&p);
        prev = p;
    }
    total
}

fn fit_nodes() -> [f64; FIT_NODES] {
    std::array::from_fn(|j| j as f64 / (FIT_NODES - 1) as f64)
}

static FIT_PINV: LazyLock<SMatrix<f64, 4, FIT_NODES>> = LazyLock::new(|| {
    let nodes = fit_nodes();
    let vander = DMatrix::from_fn(FIT_NODES, 4, |j, k| nodes[j].powi(k as i32));
    let pinv = (vander.transpose() * &vander)
        .try_inverse()
        .expect("Vandermonde normal matrix is invertible")
        * vander.transpose();
    SMatrix::from_fn(|k, j| pinv[(k, j)])
});

/// Affine reparametrization `t -> offset + scale t` of `[0, 1]` into itself.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reparam {
    pub offset: f64,
    pub scale: f64,
}

impl Reparam {
    pub const IDENTITY: Reparam = Reparam {
        offset: 0.0,
        scale: 1.0,
    };

    pub fn new(offset: f64, scale: f64) -> Result<Self> {
        let end = offset + scale;
        let inside = |x: f64| (0.0..=1.0).contains(&x);
        if scale == 0.0 || scale.abs() > 1.0 || !inside(offset) || !inside(end) {
            return Err(Error::InvalidParameter(format!(
                "reparametrization {offset} + {scale} t does not map [0, 1] into itself"
            )));
        }
        Ok(Self { offset, scale })
    }

    pub fn apply(&self, t: f64) -> f64 {
        self.offset + self.scale * t
    }

    /// `self o inner`.
    pub fn compose(&self, inner: &Reparam) -> Reparam {
        Reparam {
            offset: self.offset + self.scale * inner.offset,
            scale: self.scale * inner.scale,
        }
    }

    pub fn halves(&self) -> (Reparam, Reparam) {
        let half = self.scale / 2.0;
        (
            Reparam {
                offset: self.offset,
                scale: half,
            },
            Reparam {
                offset: self.offset + half,
                scale: half,
            },
        )
    }

    /// Image interval `[lo, hi]`.
    pub fn interval(&self) -> (f64, f64) {
        let end = self.apply(1.0);
        (self.offset.min(end), self.offset.max(end))
    }
}

/// `size_base`: sup of `|sigma'|` and `|sigma''|`. `size_lift`: sup of
/// `|sigma_hat'| = sqrt(|sigma'|^2 + theta'^2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrSize {
    pub size_base: f64,
    pub size_lift: f64,
}

impl CrSize {
    pub fn below(&self, eps: f64, eps_hat: f64) -> bool {
        self.size_base < eps && self.size_lift < eps_hat
    }
}

/// Max of `f` over `[0, 1]`: samples, then golden-section refinement around
/// every sampled local maximum.
fn sup_on_unit(f: impl Fn(f64) -> f64, n: usize) -> f64 {
    let ts: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let vals: Vec<f64> = ts.iter().map(|&t| f(t)).collect();
    let mut best = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    for i in 0..n {
        let left = if i > 0 { vals[i - 1] } else { f64::NEG_INFINITY };
        let right = if i + 1 < n { vals[i + 1] } else { f64::NEG_INFINITY };
        if vals[i] < left || vals[i] < right {
            continue;
        }
        let mut a = ts[i.saturating_sub(1)];
        let mut b = ts[(i + 1).min(n - 1)];
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let (mut fc, mut fd) = (f(c), f(d));
        for _ in 0..24 {
            if fc > fd {
                b = d;
                d = c;
                fd = fc;
                c = b - INV_PHI * (b - a);
                fc = f(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + INV_PHI * (b - a);
                fd = f(d);
            }
        }
        best = best.max(fc).max(fd);
    }
    best
}

pub fn cr_size(curve: &ParamCurve, n_samples: usize) -> Result<CrSize> {
    let n = n_samples.max(2);
    for i in 0..n {
        let d = curve.d1(i as f64 / (n - 1) as f64);
        let speed = d[0].hypot(d[1]);
        if speed < 1e-12 {
            return Err(Error::IrregularCurve(speed));
        }
    }
    let speed = sup_on_unit(
        |t| {
            let d = curve.d1(t);
            d[0].hypot(d[1])
        },
        n,
    );
    // sigma'' is affine in t, so its norm peaks at an endpoint
    let accel = [0.0, 1.0]
        .iter()
        .map(|&t| {
            let d = curve.d2(t);
            d[0].hypot(d[1])
        })
        .fold(0.0, f64::max);
    let lift = sup_on_unit(
        |t| {
            let d = curve.d1(t);
            (d[0] * d[0] + d[1] * d[1] + curve.theta_rate(t).powi(2)).sqrt()
        },
        n,
    );
    Ok(CrSize {
        size_base: speed.max(accel),
        size_lift: lift,
    })
}

/// `g^steps o sigma o psi` sampled through the map on the universal cover.
struct Image<'a> {
    curve: &'a ParamCurve,
    map: &'a SurfaceMap,
    steps: usize,
}

impl Image<'_> {
    fn point(&self, s: f64) -> Point2 {
        let mut p = self.curve.eval(s);
        for _ in 0..self.steps {
            p = self.map.apply_cover(p);
        }
        p
    }

    /// Refit of the image piece, or `None` when the fit is off by `eps / 10` or more.
    fn refit(&self, psi: &Reparam, eps: f64) -> Option<ParamCurve> {
        if self.steps == 0 {
            return Some(self.curve.reparam(psi));
        }
        let nodes = fit_nodes();
        let pts: [Point2; FIT_NODES] = std::array::from_fn(|j| self.point(psi.apply(nodes[j])));
        let fitted = ParamCurve::fit(&pts);
        let tol = eps / 10.0;
        for j in 0..FIT_NODES - 1 {
            let s = (nodes[j] + nodes[j + 1]) / 2.0;
            if fitted.eval(s).plane_dist(&self.point(psi.apply(s))) >= tol {
                return None;
            }
        }
        Some(fitted)
    }

    fn accepts(&self, psi: &Reparam, eps: f64, eps_hat: f64) -> Result<bool> {
        match self.refit(psi, eps) {
            None => Ok(false),
            Some(c) => Ok(cr_size(&c, SIZE_SAMPLES)?.below(eps, eps_hat)),
        }
    }

    /// Dyadic pieces of `psi`, in parameter order, each accepted at size `(eps, eps_hat)`.
    fn subdivide(&self, psi: Reparam, eps: f64, eps_hat: f64) -> Result<Vec<Reparam>> {
        let mut out = Vec::new();
        let mut stack = vec![(psi, 0usize)];
        while let Some((p, depth)) = stack.pop() {
            if self.accepts(&p, eps, eps_hat)? {
                out.push(p);
            } else if depth >= MAX_DEPTH {
                return Err(Error::SubdivisionLimit(MAX_DEPTH));
            } else {
                let (l, r) = p.halves();
                stack.push((r, depth + 1));
                stack.push((l, depth + 1));
            }
        }
        Ok(out)
    }
}

/// Pieces `psi` with `g o sigma o psi` of size below `(eps, eps_hat)`.
pub fn subdivide_to_size(
    curve: &ParamCurve,
    map: &SurfaceMap,
    eps: f64,
    eps_hat: f64,
) -> Result<Vec<Reparam>> {
    check_scales(eps, eps_hat)?;
    Image {
        curve,
        map,
        steps: 1,
    }
    .subdivide(Reparam::IDENTITY, eps, eps_hat)
}

fn check_scales(eps: f64, eps_hat: f64) -> Result<()> {
    if eps > 0.0 && eps_hat > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter("eps and eps_hat must be positive".into()))
    }
}

/// Reparametrizations of one curve, all admissible at the same times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleFamily {
    pub curve: ParamCurve,
    pub reparams: Vec<Reparam>,
    /// `0, N, 2N, ..., n`.
    pub admissible_times: Vec<usize>,
    /// Family size after each admissible time.
    pub counts_per_step: Vec<usize>,
    pub block: usize,
    pub eps: f64,
    pub eps_hat: f64,
}

impl AdmissibleFamily {
    pub fn len(&self) -> usize {
        self.reparams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reparams.is_empty()
    }

    /// `(t, ln |R_t| / t)` for each admissible `t > 0`.
    pub fn rates(&self) -> Vec<(usize, f64)> {
        self.admissible_times
            .iter()
            .zip(&self.counts_per_step)
            .filter(|(&t, _)| t > 0)
            .map(|(&t, &c)| (t, (c as f64).ln() / t as f64))
            .collect()
    }

    pub fn horizon(&self) -> usize {
        self.admissible_times.last().copied().unwrap_or(0)
    }

    /// True when the member intervals tile `[0, 1]` without gaps.
    pub fn covers_unit_interval(&self) -> bool {
        let mut iv: Vec<(f64, f64)> = self.reparams.iter().map(Reparam::interval).collect();
        iv.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut reach = 0.0;
        for (lo, hi) in iv {
            if lo > reach {
                return false;
            }
            reach = f64::max(reach, hi);
        }
        reach >= 1.0
    }
}

/// Refines the family at every `N`-th step (and at `n`) so that each member's
/// image has size below `(eps, eps_hat)` at all admissible times.
pub fn admissible_family(
    curve: &ParamCurve,
    map: &SurfaceMap,
    block: usize,
    eps: f64,
    eps_hat: f64,
    n: usize,
) -> Result<AdmissibleFamily> {
    check_scales(eps, eps_hat)?;
    if block == 0 {
        return Err(Error::InvalidParameter("block length N must be >= 1".into()));
    }
    let mut times: Vec<usize> = (0..=n).step_by(block).collect();
    if times.last() != Some(&n) {
        times.push(n);
    }
    let mut reparams = Image {
        curve,
        map,
        steps: 0,
    }
    .subdivide(Reparam::IDENTITY, eps, eps_hat)?;
    let mut counts = vec![reparams.len()];
    for &t in &times[1..] {
        let image = Image {
            curve,
            map,
            steps: t,
        };
        let pieces: Vec<Vec<Reparam>> = reparams
            .par_iter()
            .map(|p| image.subdivide(*p, eps, eps_hat))
            .collect::<Result<_>>()?;
        reparams = pieces.concat();
        counts.push(reparams.len());
    }
    Ok(AdmissibleFamily {
        curve: *curve,
        reparams,
        admissible_times: times,
        counts_per_step: counts,
        block,
        eps,
        eps_hat,
    })
}

/// A fibered Bowen cover of the lifted curve: each member contributes the
/// lifted images of a `rho`-dense parameter net.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyCover {
    pub count: usize,
    pub bound: f64,
    pub rho: f64,
    pub net_size: usize,
    /// Grid estimate of `sup |D f_hat|`, floored at 1.
    pub lift_norm: f64,
}

impl FamilyCover {
    pub fn within_bound(&self) -> bool {
        self.count as f64 <= self.bound
    }

    fn net_point(&self, s: f64) -> f64 {
        let i = ((s * self.net_size as f64).floor() as usize).min(self.net_size - 1);
        (i as f64 + 0.5) / self.net_size as f64
    }
}

/// Grid used to estimate `sup |D f_hat|`.
pub fn lift_norm_estimate(map: &SurfaceMap) -> Result<f64> {
    lift_sup_norm(map, &lift_grid(&map.domain().grid(24), 24))
}

/// `rho = min(eps, eps_hat) / (eps_hat* L^N)` with `eps_hat*` the family's
/// lift-size bound; the count is `|R| ceil(1 / rho)` against the bound
/// `2 eps_hat* L^N / min(eps, eps_hat) |R|`.
pub fn cover_from_family(
    family: &AdmissibleFamily,
    map: &SurfaceMap,
    n: usize,
    eps: f64,
    eps_hat: f64,
) -> Result<FamilyCover> {
    check_scales(eps, eps_hat)?;
    if n > family.horizon() {
        return Err(Error::InvalidParameter(format!(
            "family is admissible up to {}, not {n}",
            family.horizon()
        )));
    }
    let lift_norm = lift_norm_estimate(map)?;
    let growth = lift_norm.powi(family.block as i32);
    let rho = eps.min(eps_hat) / (family.eps_hat * growth);
    let net_size = (1.0 / rho).ceil().max(1.0) as usize;
    Ok(FamilyCover {
        count: family.len() * net_size,
        bound: 2.0 / rho * family.len() as f64,
        rho,
        net_size,
        lift_norm,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverCheck {
    pub checked: usize,
    pub failures: usize,
}

/// Checks, for `samples` parameters per member, that the lifted orbit stays
/// in the fibered `(n, eps, eps_hat)`-ball of the nearest net point's orbit.
pub fn verify_family_cover(
    family: &AdmissibleFamily,
    cover: &FamilyCover,
    map: &SurfaceMap,
    n: usize,
    eps: f64,
    eps_hat: f64,
    samples: usize,
) -> Result<CoverCheck> {
    let domain = *map.domain();
    let lifted = |t: f64| {
        let p = family.curve.lift(t);
        ProjPoint::new(domain.normalize(p.base), p.theta)
    };
    let failures: Vec<usize> = family
        .reparams
        .par_iter()
        .map(|psi| -> Result<usize> {
            let mut bad = 0;
            for i in 0..samples {
                let s = (i as f64 + 0.5) / samples as f64;
                let c = cover.net_point(s);
                let mut a = lifted(psi.apply(s));
                let mut b = lifted(psi.apply(c));
                for k in 0..n {
                    let base = domain.dist(&a.base, &b.base);
                    let fiber = fiber_dist(a.theta, b.theta);
                    if !(base < eps && base.hypot(fiber) < eps_hat) {
                        bad += 1;
                        break;
                    }
                    if k + 1 < n {
                        a = lift_step(map, &a)?.0;
                        b = lift_step(map, &b)?.0;
                    }
                }
            }
            Ok(bad)
        })
        .collect::<Result<_>>()?;
    Ok(CoverCheck {
        checked: family.len() * samples,
        failures: failures.iter().sum(),
    })
}

/// Length control along the family: at every admissible `t > 0`,
/// `Length(g^t sigma psi) < e^(eta t / 10) |Dg^t_x|_E| Length(sigma psi)`
/// with `(x, E)` the lifted midpoint of the piece.
pub fn length_control_check(family: &AdmissibleFamily, map: &SurfaceMap, eta: f64) -> Result<bool> {
    const SEGMENTS: usize = 32;
    let domain = *map.domain();
    let times: Vec<usize> = family.admissible_times.iter().copied().filter(|&t| t > 0).collect();
    let verdicts: Vec<bool> = family
        .reparams
        .par_iter()
        .map(|psi| -> Result<bool> {
            let initial = polyline(|s| family.curve.eval(psi.apply(s)), SEGMENTS);
            let mid = family.curve.lift(psi.apply(0.5));
            let mut p = ProjPoint::new(domain.normalize(mid.base), mid.theta);
            let mut log_stretch = 0.0;
            let mut done = 0;
            for &t in &times {
                while done < t {
                    let (next, phi) = lift_step(map, &p)?;
                    p = next;
                    log_stretch += phi;
                    done += 1;
                }
                let image = Image {
                    curve: &family.curve,
                    map,
                    steps: t,
                };
                let length = polyline(|s| image.point(psi.apply(s)), SEGMENTS);
                if length >= (eta * t as f64 / 10.0 + log_stretch).exp() * initial {
                    return Ok(false);
                }
            }
            Ok(true)
        })
        .collect::<Result<_>>()?;
    Ok(verdicts.into_iter().all(|v| v))
}

/// `h <= min(last-half rates) + 0.1`.
pub fn entropy_reparam_bound(family_rates: &[f64], h_estimate: f64) -> bool {
    let tail = &family_rates[family_rates.len() / 2..];
    match tail.iter().copied().reduce(f64::min) {
        Some(m) => h_estimate <= m + 0.1,
        None => false,
    }
}
