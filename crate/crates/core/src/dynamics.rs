//! Surface maps, their analytic jets, and the canonical lift to the
//! projective tangent bundle.
//!
//! A map is stored as a kind plus a flat parameter list (the config form) and
//! evaluated through [`Jet`]s: value, Jacobian and second-derivative tensor,
//! composed with the chain rule. Every non-trivial kind is a base map
//! precomposed with a pair of periodic shears, which is how perturbed
//! families are built.
//!
//! The projective fiber over a point is the circle of undirected lines,
//! coordinatized by an angle in `[0, pi)` with the wraparound metric.

use std::f64::consts::{PI, TAU};
use std::fmt;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = [f64; 2];

/// `hessian[i][j][k]` is the second partial of component `i` in directions `j`, `k`.
pub type Hessian = [[[f64; 2]; 2]; 2];

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub u: f64,
    pub v: f64,
}

impl Point2 {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn as_vec(self) -> Vec2 {
        [self.u, self.v]
    }

    /// Reduce both coordinates into `[0, 1)`.
    pub fn wrap(self) -> Self {
        Self::new(unit_wrap(self.u), unit_wrap(self.v))
    }

    /// Flat-torus distance: minimum over integer translates.
    pub fn torus_dist(&self, other: &Self) -> f64 {
        let du = circle_delta(self.u - other.u);
        let dv = circle_delta(self.v - other.v);
        du.hypot(dv)
    }

    pub fn plane_dist(&self, other: &Self) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }

    fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }
}

fn unit_wrap(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Signed representative of `x` modulo 1 in `[-1/2, 1/2]`, returned as a magnitude.
fn circle_delta(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    r.min(1.0 - r)
}

/// Row-major 2x2 matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2::new(1.0, 0.0, 0.0, 1.0);

    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { a, b, c, d }
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn mul(&self, o: &Mat2) -> Mat2 {
        Mat2::new(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )
    }

    pub fn apply(&self, w: Vec2) -> Vec2 {
        [self.a * w[0] + self.b * w[1], self.c * w[0] + self.d * w[1]]
    }

    pub fn scale(&self, s: f64) -> Mat2 {
        Mat2::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }

    pub fn inverse(&self) -> Option<Mat2> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        Some(Mat2::new(self.d / det, -self.b / det, -self.c / det, self.a / det))
    }

    pub fn max_abs(&self) -> f64 {
        self.a.abs().max(self.b.abs()).max(self.c.abs()).max(self.d.abs())
    }

    /// Largest singular value, in closed form.
    pub fn op_norm(&self) -> f64 {
        let s = self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d;
        let det = self.det();
        let disc = (s * s - 4.0 * det * det).max(0.0);
        ((s + disc.sqrt()) / 2.0).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl Rect {
    pub fn contains(&self, p: &Point2) -> bool {
        p.u >= self.u_min && p.u <= self.u_max && p.v >= self.v_min && p.v <= self.v_max
    }

    pub fn diameter(&self) -> f64 {
        (self.u_max - self.u_min).hypot(self.v_max - self.v_min)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    /// The flat torus `R^2 / Z^2`.
    Torus,
    /// A trapping rectangle in the plane; leaving it is an orbit escape.
    Plane(Rect),
}

impl Domain {
    pub fn contains(&self, p: &Point2) -> bool {
        match self {
            Domain::Torus => p.is_finite(),
            Domain::Plane(r) => r.contains(p),
        }
    }

    pub fn dist(&self, a: &Point2, b: &Point2) -> f64 {
        match self {
            Domain::Torus => a.torus_dist(b),
            Domain::Plane(_) => a.plane_dist(b),
        }
    }

    pub fn normalize(&self, p: Point2) -> Point2 {
        match self {
            Domain::Torus => p.wrap(),
            Domain::Plane(_) => p,
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            Domain::Torus => std::f64::consts::FRAC_1_SQRT_2,
            Domain::Plane(r) => r.diameter(),
        }
    }

    /// `m x m` grid of cell centers covering the domain.
    pub fn grid(&self, m: usize) -> Vec<Point2> {
        let (u0, u1, v0, v1) = match self {
            Domain::Torus => (0.0, 1.0, 0.0, 1.0),
            Domain::Plane(r) => (r.u_min, r.u_max, r.v_min, r.v_max),
        };
        let mut out = Vec::with_capacity(m * m);
        for i in 0..m {
            for j in 0..m {
                let s = (i as f64 + 0.5) / m as f64;
                let t = (j as f64 + 0.5) / m as f64;
                out.push(Point2::new(u0 + s * (u1 - u0), v0 + t * (v1 - v0)));
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapKind {
    TorusLinear,
    PerturbedTorus,
    HenonLike,
    Rotation,
    Identity,
}

impl MapKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MapKind::TorusLinear => "torus-linear",
            MapKind::PerturbedTorus => "perturbed-torus",
            MapKind::HenonLike => "henon-like",
            MapKind::Rotation => "rotation",
            MapKind::Identity => "identity",
        }
    }
}

/// Config form of a [`SurfaceMap`]: kind, flat parameter list, optional domain.
///
/// Parameter layouts:
/// - `torus-linear`: `[a, b, c, d]`, an integer matrix with determinant +-1
/// - `perturbed-torus`: `[a, b, c, d, d1, d2]`, the linear map after the shears
///   `(u, v) -> (u + d1 sin 2 pi v, v)` then `(u, v) -> (u, v + d2 sin 2 pi u)`
/// - `henon-like`: `[a, b]` or `[a, b, d1, d2]`, `(u, v) -> (1 - a u^2 + v, b u)`
///   after the same shears
/// - `rotation`: `[a, b]`, translation by `(a, b)`
/// - `identity`: `[]`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    pub kind: MapKind,
    #[serde(default)]
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Base {
    Identity,
    Translate(Vec2),
    Linear { m: Mat2, inv: Mat2 },
    Henon { a: f64, b: f64 },
}

/// A surface diffeomorphism with analytic first and second derivatives and
/// an exact inverse.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MapSpec", into = "MapSpec")]
pub struct SurfaceMap {
    kind: MapKind,
    params: Vec<f64>,
    domain: Domain,
    base: Base,
    shear: Vec2,
}

pub const DEFAULT_HENON_REGION: Rect = Rect {
    u_min: -2.5,
    u_max: 2.5,
    v_min: -2.5,
    v_max: 2.5,
};

impl TryFrom<MapSpec> for SurfaceMap {
    type Error = Error;

    fn try_from(spec: MapSpec) -> Result<Self> {
        SurfaceMap::from_spec(spec)
    }
}

impl From<SurfaceMap> for MapSpec {
    fn from(map: SurfaceMap) -> Self {
        map.spec()
    }
}

fn integer_matrix(p: &[f64]) -> Result<Mat2> {
    if p.iter().any(|x| x.fract() != 0.0 || !x.is_finite()) {
        return Err(Error::InvalidParameter(
            "torus matrix entries must be integers".into(),
        ));
    }
    let m = Mat2::new(p[0], p[1], p[2], p[3]);
    if m.det().abs() != 1.0 {
        return Err(Error::InvalidParameter(format!(
            "torus matrix must have determinant +-1, got {}",
            m.det()
        )));
    }
    Ok(m)
}

impl SurfaceMap {
    pub fn from_spec(spec: MapSpec) -> Result<Self> {
        let MapSpec {
            kind,
            params,
            domain,
        } = spec;
        if params.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("non-finite parameter".into()));
        }
        let arity = |ok: &[usize]| -> Result<()> {
            if ok.contains(&params.len()) {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!(
                    "{} expects {:?} parameters, got {}",
                    kind.as_str(),
                    ok,
                    params.len()
                )))
            }
        };
        let want_torus = |d: Option<Domain>| -> Result<Domain> {
            match d {
                None | Some(Domain::Torus) => Ok(Domain::Torus),
                Some(_) => Err(Error::InvalidParameter(format!(
                    "{} is only defined on the torus",
                    kind.as_str()
                ))),
            }
        };
        let (base, shear, domain) = match kind {
            MapKind::Identity => {
                arity(&[0])?;
                (Base::Identity, [0.0; 2], domain.unwrap_or(Domain::Torus))
            }
            MapKind::Rotation => {
                arity(&[2])?;
                (
                    Base::Translate([params[0], params[1]]),
                    [0.0; 2],
                    domain.unwrap_or(Domain::Torus),
                )
            }
            MapKind::TorusLinear => {
                arity(&[4])?;
                let m = integer_matrix(&params)?;
                let inv = m.inverse().expect("unimodular");
                (Base::Linear { m, inv }, [0.0; 2], want_torus(domain)?)
            }
            MapKind::PerturbedTorus => {
                arity(&[6])?;
                let m = integer_matrix(&params[..4])?;
                let inv = m.inverse().expect("unimodular");
                (
                    Base::Linear { m, inv },
                    [params[4], params[5]],
                    want_torus(domain)?,
                )
            }
            MapKind::HenonLike => {
                arity(&[2, 4])?;
                let (a, b) = (params[0], params[1]);
                if b == 0.0 {
                    return Err(Error::InvalidParameter(
                        "henon-like map needs b != 0 to be invertible".into(),
                    ));
                }
                let shear = if params.len() == 4 {
                    [params[2], params[3]]
                } else {
                    [0.0; 2]
                };
                let domain = match domain {
                    None => Domain::Plane(DEFAULT_HENON_REGION),
                    Some(d @ Domain::Plane(_)) => d,
                    Some(Domain::Torus) => {
                        return Err(Error::InvalidParameter(
                            "henon-like map needs a plane-region domain".into(),
                        ))
                    }
                };
                (Base::Henon { a, b }, shear, domain)
            }
        };
        Ok(Self {
            kind,
            params,
            domain,
            base,
            shear,
        })
    }

    pub fn spec(&self) -> MapSpec {
        MapSpec {
            kind: self.kind,
            params: self.params.clone(),
            domain: Some(self.domain),
        }
    }

    pub fn identity() -> Self {
        Self::build(MapKind::Identity, vec![])
    }

    /// Arnold's cat map `[[2, 1], [1, 1]]`.
    pub fn cat() -> Self {
        Self::torus_linear([2, 1, 1, 1])
    }

    pub fn torus_linear(m: [i64; 4]) -> Self {
        Self::build(MapKind::TorusLinear, m.iter().map(|&x| x as f64).collect())
    }

    pub fn perturbed_torus(m: [i64; 4], d1: f64, d2: f64) -> Self {
        let mut p: Vec<f64> = m.iter().map(|&x| x as f64).collect();
        p.extend([d1, d2]);
        Self::build(MapKind::PerturbedTorus, p)
    }

    pub fn rotation(a: f64, b: f64) -> Self {
        Self::build(MapKind::Rotation, vec![a, b])
    }

    pub fn henon(a: f64, b: f64) -> Self {
        Self::build(MapKind::HenonLike, vec![a, b])
    }

    fn build(kind: MapKind, params: Vec<f64>) -> Self {
        Self::from_spec(MapSpec {
            kind,
            params,
            domain: None,
        })
        .expect("built-in map parameters are valid")
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Short identifier used in CSV rows, e.g. `torus-linear[2,1,1,1]`.
    pub fn label(&self) -> String {
        let ps: Vec<String> = self.params.iter().map(|p| format!("{p}")).collect();
        format!("{}[{}]", self.kind.as_str(), ps.join(","))
    }

    /// True when `|det Df| = 1` everywhere.
    pub fn is_area_preserving(&self) -> bool {
        match self.base {
            Base::Henon { b, .. } => b.abs() == 1.0,
            _ => true,
        }
    }

    fn base_jet(&self, p: Point2) -> Jet {
        match self.base {
            Base::Identity => Jet::linear(p, Mat2::IDENTITY),
            Base::Translate([a, b]) => Jet::linear(Point2::new(p.u + a, p.v + b), Mat2::IDENTITY),
            Base::Linear { m, .. } => {
                let [u, v] = m.apply(p.as_vec());
                Jet::linear(Point2::new(u, v), m)
            }
            Base::Henon { a, b } => {
                let mut hessian = [[[0.0; 2]; 2]; 2];
                hessian[0][0][0] = -2.0 * a;
                Jet {
                    value: Point2::new(1.0 - a * p.u * p.u + p.v, b * p.u),
                    jacobian: Mat2::new(-2.0 * a * p.u, 1.0, b, 0.0),
                    hessian,
                }
            }
        }
    }

    /// Full jet on the universal cover (torus coordinates are not reduced).
    pub fn jet_unwrapped(&self, p: Point2) -> Jet {
        let [d1, d2] = self.shear;
        if d1 == 0.0 && d2 == 0.0 {
            return self.base_jet(p);
        }
        let s1 = shear_u(p, d1);
        let s2 = shear_v(s1.value, d2);
        let inner = s2.compose(&s1);
        self.base_jet(inner.value).compose(&inner)
    }

    /// Jet at `p` with the value normalized to the domain.
    pub fn jet(&self, p: Point2) -> Result<Jet> {
        let mut jet = self.jet_unwrapped(self.check_input(p)?);
        jet.value = self.check_output(jet.value)?;
        Ok(jet)
    }

    fn check_input(&self, p: Point2) -> Result<Point2> {
        if !self.domain.contains(&p) {
            return Err(Error::OutsideDomain(p));
        }
        Ok(self.domain.normalize(p))
    }

    fn check_output(&self, p: Point2) -> Result<Point2> {
        if !self.domain.contains(&p) {
            return Err(Error::OrbitEscape { step: 1, point: p });
        }
        Ok(self.domain.normalize(p))
    }

    pub fn apply(&self, p: Point2) -> Result<Point2> {
        let p = self.check_input(p)?;
        self.check_output(self.jet_unwrapped(p).value)
    }

    /// Evaluation on the universal cover without domain checks; used to push
    /// curves forward without wrapping them around the torus.
    pub fn apply_cover(&self, p: Point2) -> Point2 {
        let [d1, d2] = self.shear;
        let mut q = p;
        if d1 != 0.0 || d2 != 0.0 {
            q.u += d1 * (TAU * q.v).sin();
            q.v += d2 * (TAU * q.u).sin();
        }
        match self.base {
            Base::Identity => q,
            Base::Translate([a, b]) => Point2::new(q.u + a, q.v + b),
            Base::Linear { m, .. } => Point2::new(m.a * q.u + m.b * q.v, m.c * q.u + m.d * q.v),
            Base::Henon { a, b } => Point2::new(1.0 - a * q.u * q.u + q.v, b * q.u),
        }
    }

    pub fn jacobian(&self, p: Point2) -> Mat2 {
        self.jet_unwrapped(p).jacobian
    }

    pub fn hessian(&self, p: Point2) -> Hessian {
        self.jet_unwrapped(p).hessian
    }

    pub fn apply_inverse(&self, q: Point2) -> Result<Point2> {
        if !self.domain.contains(&q) {
            return Err(Error::OutsideDomain(q));
        }
        let q = self.domain.normalize(q);
        let p = match self.base {
            Base::Identity => q,
            Base::Translate([a, b]) => Point2::new(q.u - a, q.v - b),
            Base::Linear { inv, .. } => {
                let [u, v] = inv.apply(q.as_vec());
                Point2::new(u, v)
            }
            Base::Henon { a, b } => {
                let u = q.v / b;
                Point2::new(u, q.u - 1.0 + a * u * u)
            }
        };
        let [d1, d2] = self.shear;
        let p = Point2::new(p.u, p.v - d2 * (TAU * p.u).sin());
        let p = Point2::new(p.u - d1 * (TAU * p.v).sin(), p.v);
        if !self.domain.contains(&p) {
            return Err(Error::OrbitEscape { step: 1, point: p });
        }
        Ok(self.domain.normalize(p))
    }

    /// Jacobian of the inverse map at `q`, i.e. `(Df at f^-1(q))^-1`.
    pub fn inverse_jacobian(&self, q: Point2) -> Result<Mat2> {
        let p = self.apply_inverse(q)?;
        self.jacobian(p)
            .inverse()
            .ok_or(Error::SingularJacobian(p))
    }

    /// Points `x0, f(x0), ..., f^n(x0)`.
    pub fn orbit(&self, x0: Point2, n: usize) -> Result<Vec<Point2>> {
        let mut out = Vec::with_capacity(n + 1);
        let mut x = self.check_input(x0)?;
        out.push(x);
        for step in 1..=n {
            x = self.apply(x).map_err(|e| with_step(e, step))?;
            out.push(x);
        }
        Ok(out)
    }
}

pub(crate) fn with_step(e: Error, step: usize) -> Error {
    match e {
        Error::OrbitEscape { point, .. } => Error::OrbitEscape { step, point },
        Error::OutsideDomain(point) => Error::OrbitEscape { step, point },
        other => other,
    }
}

impl fmt::Display for SurfaceMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Value, Jacobian and second derivatives of a map at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub value: Point2,
    pub jacobian: Mat2,
    pub hessian: Hessian,
}

impl Jet {
    fn linear(value: Point2, jacobian: Mat2) -> Self {
        Self {
            value,
            jacobian,
            hessian: [[[0.0; 2]; 2]; 2],
        }
    }

    /// Chain rule: `self` is the outer jet evaluated at `inner.value`.
    pub fn compose(&self, inner: &Jet) -> Jet {
        let jo = mat_rows(&self.jacobian);
        let ji = mat_rows(&inner.jacobian);
        let mut hessian = [[[0.0; 2]; 2]; 2];
        for (i, hi) in hessian.iter_mut().enumerate() {
            for (j, hij) in hi.iter_mut().enumerate() {
                for (k, h) in hij.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for p in 0..2 {
                        for q in 0..2 {
                            acc += self.hessian[i][p][q] * ji[p][j] * ji[q][k];
                        }
                        acc += jo[i][p] * inner.hessian[p][j][k];
                    }
                    *h = acc;
                }
            }
        }
        Jet {
            value: self.value,
            jacobian: self.jacobian.mul(&inner.jacobian),
            hessian,
        }
    }
}

fn mat_rows(m: &Mat2) -> [[f64; 2]; 2] {
    [[m.a, m.b], [m.c, m.d]]
}

fn shear_u(p: Point2, d: f64) -> Jet {
    let (s, c) = (TAU * p.v).sin_cos();
    let mut hessian = [[[0.0; 2]; 2]; 2];
    hessian[0][1][1] = -TAU * TAU * d * s;
    Jet {
        value: Point2::new(p.u + d * s, p.v),
        jacobian: Mat2::new(1.0, TAU * d * c, 0.0, 1.0),
        hessian,
    }
}

fn shear_v(p: Point2, d: f64) -> Jet {
    let (s, c) = (TAU * p.u).sin_cos();
    let mut hessian = [[[0.0; 2]; 2]; 2];
    hessian[1][0][0] = -TAU * TAU * d * s;
    Jet {
        value: Point2::new(p.u, p.v + d * s),
        jacobian: Mat2::new(1.0, 0.0, TAU * d * c, 1.0),
        hessian,
    }
}

/// Limit map plus members whose shear amplitudes approach the limit's as `1/k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapFamily {
    pub limit: SurfaceMap,
    pub bump: Vec2,
}

impl MapFamily {
    pub fn new(limit: SurfaceMap, bump: Vec2) -> Result<Self> {
        match limit.kind {
            MapKind::TorusLinear | MapKind::PerturbedTorus | MapKind::HenonLike => {
                Ok(Self { limit, bump })
            }
            k => Err(Error::InvalidParameter(format!(
                "no perturbed family for {} maps",
                k.as_str()
            ))),
        }
    }

    pub fn member(&self, k: usize) -> Result<SurfaceMap> {
        if k == 0 {
            return Err(Error::InvalidParameter("family members start at k = 1".into()));
        }
        let s = 1.0 / k as f64;
        let [d1, d2] = self.limit.shear;
        let (e1, e2) = (d1 + s * self.bump[0], d2 + s * self.bump[1]);
        let p = &self.limit.params;
        let (kind, params) = match self.limit.kind {
            MapKind::TorusLinear | MapKind::PerturbedTorus => {
                (MapKind::PerturbedTorus, vec![p[0], p[1], p[2], p[3], e1, e2])
            }
            MapKind::HenonLike => (MapKind::HenonLike, vec![p[0], p[1], e1, e2]),
            _ => unreachable!("checked in MapFamily::new"),
        };
        SurfaceMap::from_spec(MapSpec {
            kind,
            params,
            domain: Some(self.limit.domain),
        })
    }
}

/// Reduce an angle to `[0, pi)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(PI);
    if r >= PI {
        0.0
    } else {
        r
    }
}

/// Distance between two lines given by their angles: `min(|d|, pi - |d|)`.
pub fn fiber_dist(a: f64, b: f64) -> f64 {
    let r = (a - b).rem_euclid(PI);
    r.min(PI - r)
}

/// A point `(x, E)` of the projective bundle; `E` is the line at angle `theta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjPoint {
    pub base: Point2,
    pub theta: f64,
}

impl ProjPoint {
    pub fn new(base: Point2, theta: f64) -> Self {
        Self {
            base,
            theta: normalize_angle(theta),
        }
    }

    pub fn direction(&self) -> Vec2 {
        let (s, c) = self.theta.sin_cos();
        [c, s]
    }

    /// Bundle metric `sqrt(d_M^2 + d_fiber^2)`.
    pub fn dist(&self, other: &Self, domain: &Domain) -> f64 {
        domain
            .dist(&self.base, &other.base)
            .hypot(fiber_dist(self.theta, other.theta))
    }
}

fn push_line(j: &Mat2, p: &ProjPoint) -> Result<(f64, f64)> {
    let w = j.apply(p.direction());
    let norm = w[0].hypot(w[1]);
    if j.det() == 0.0 || norm == 0.0 || !norm.is_finite() {
        return Err(Error::SingularJacobian(p.base));
    }
    Ok((w[1].atan2(w[0]), norm.ln()))
}

/// One step of the canonical lift, returning `(f^(p), phi(p))` with
/// `phi(x, E) = log |Df_x v|` for a unit `v` spanning `E`.
pub fn lift_step(map: &SurfaceMap, p: &ProjPoint) -> Result<(ProjPoint, f64)> {
    let (theta, phi) = push_line(&map.jacobian(p.base), p)?;
    let base = map.apply(p.base)?;
    Ok((ProjPoint::new(base, theta), phi))
}

/// One step of the lift of `f^-1`, returning its point and `phi_{f^-1}`.
pub fn inverse_lift_step(map: &SurfaceMap, p: &ProjPoint) -> Result<(ProjPoint, f64)> {
    let (theta, phi) = push_line(&map.inverse_jacobian(p.base)?, p)?;
    let base = map.apply_inverse(p.base)?;
    Ok((ProjPoint::new(base, theta), phi))
}

/// Birkhoff sum `sum_{k<n} phi(f^^k p)`, equal to `log |Df^n_x|_E|`.
pub fn cocycle_sum(map: &SurfaceMap, p: &ProjPoint, n: usize) -> Result<f64> {
    let mut q = *p;
    let mut acc = 0.0;
    for step in 0..n {
        let (next, phi) = lift_step(map, &q).map_err(|e| with_step(e, step + 1))?;
        acc += phi;
        q = next;
    }
    Ok(acc)
}

/// Lifted orbit `p, f^(p), ..., f^^(n-1)(p)` together with `phi` at each of them.
pub fn lifted_orbit(map: &SurfaceMap, p: &ProjPoint, n: usize) -> Result<(Vec<ProjPoint>, Vec<f64>)> {
    let mut pts = Vec::with_capacity(n);
    let mut phis = Vec::with_capacity(n);
    let mut q = *p;
    for step in 0..n {
        let (next, phi) = lift_step(map, &q).map_err(|e| with_step(e, step + 1))?;
        pts.push(q);
        phis.push(phi);
        q = next;
    }
    Ok((pts, phis))
}

/// Derivative of the lift in the chart `(u, v, theta)`.
///
/// The base block is `Df`. The fiber row is the derivative of the angle of
/// `Df_x v`: with `w = Df_x v`, the angle moves by `(w x dw) / |w|^2`, where
/// `dw = D^2f_x(e_j) v` along base directions and `Df_x v_perp` along the fiber.
pub fn lift_jacobian(map: &SurfaceMap, p: &ProjPoint) -> Result<Matrix3<f64>> {
    let jet = map.jet_unwrapped(p.base);
    let j = jet.jacobian;
    if j.det() == 0.0 {
        return Err(Error::SingularJacobian(p.base));
    }
    let v = p.direction();
    let w = j.apply(v);
    let q = w[0] * w[0] + w[1] * w[1];
    let cross = |dw: Vec2| (w[0] * dw[1] - w[1] * dw[0]) / q;
    let h = &jet.hessian;
    let along = |jdir: usize| -> Vec2 {
        [
            h[0][jdir][0] * v[0] + h[0][jdir][1] * v[1],
            h[1][jdir][0] * v[0] + h[1][jdir][1] * v[1],
        ]
    };
    let d_theta_du = cross(along(0));
    let d_theta_dv = cross(along(1));
    let d_theta_dtheta = j.det() / q;
    Ok(Matrix3::new(
        j.a, j.b, 0.0, //
        j.c, j.d, 0.0, //
        d_theta_du, d_theta_dv, d_theta_dtheta,
    ))
}

/// `Df^n_x` as `(m, log_scale, log |det|)` with `Df^n_x = e^log_scale m`,
/// rescaled as it goes so long products do not overflow.
fn jacobian_power(map: &SurfaceMap, x: Point2, n: usize) -> Result<(Mat2, f64, f64)> {
    let mut m = Mat2::IDENTITY;
    let mut log_scale = 0.0;
    let mut log_det = 0.0;
    let mut p = x;
    for step in 0..n {
        let j = map.jacobian(p);
        let det = j.det();
        if det == 0.0 {
            return Err(Error::SingularJacobian(p));
        }
        log_det += det.abs().ln();
        m = j.mul(&m);
        let s = m.max_abs();
        if s > 1e100 {
            m = m.scale(1.0 / s);
            log_scale += s.ln();
        }
        p = map.apply(p).map_err(|e| with_step(e, step + 1))?;
    }
    Ok((m, log_scale, log_det))
}

/// `log` of the largest and smallest singular values of `Df^n_x`.
pub fn log_singular_values(map: &SurfaceMap, x: Point2, n: usize) -> Result<(f64, f64)> {
    let (m, log_scale, log_det) = jacobian_power(map, x, n)?;
    let log_max = m.op_norm().ln() + log_scale;
    Ok((log_max, log_det - log_max))
}

/// Angle of the line most contracted by `Df^n_x`, where the fiber
/// derivative of the lift is largest.
pub fn most_contracted_line(map: &SurfaceMap, x: Point2, n: usize) -> Result<f64> {
    let (m, _, _) = jacobian_power(map, x, n)?;
    let p = m.a * m.a + m.c * m.c;
    let q = m.a * m.b + m.c * m.d;
    let r = m.b * m.b + m.d * m.d;
    Ok(normalize_angle(0.5 * (2.0 * q).atan2(p - r) + PI / 2.0))
}

/// Grid estimate of `(1/n) log sup |Df^n|`. Refining the grid never lowers it.
pub fn asymptotic_dilation(map: &SurfaceMap, n: usize, grid: &[Point2]) -> Result<f64> {
    if n == 0 || grid.is_empty() {
        return Err(Error::InvalidParameter("need n >= 1 and a nonempty grid".into()));
    }
    let mut best = f64::NEG_INFINITY;
    for &x in grid {
        let (log_max, _) = log_singular_values(map, x, n)?;
        best = best.max(log_max);
    }
    Ok(best / n as f64)
}

/// Dilation of `f^-1`: `sup_y |Df^-n_y| = sup_x 1 / s_min(Df^n_x)` over the same grid.
pub fn inverse_dilation(map: &SurfaceMap, n: usize, grid: &[Point2]) -> Result<f64> {
    if n == 0 || grid.is_empty() {
        return Err(Error::InvalidParameter("need n >= 1 and a nonempty grid".into()));
    }
    let mut best = f64::NEG_INFINITY;
    for &x in grid {
        let (_, log_min) = log_singular_values(map, x, n)?;
        best = best.max(-log_min);
    }
    Ok(best / n as f64)
}

/// Grid estimate of the dilation of the lift, `(1/n) log sup |Df^^n|`, from
/// products of [`lift_jacobian`] along lifted orbits.
///
/// The sup sits on lines near the most contracted direction, which the
/// forward iteration can follow only while `e^(2 lambda n)` stays well below
/// `1 / f64::EPSILON`; past that the estimate drops.
pub fn lift_dilation(map: &SurfaceMap, n: usize, grid: &[ProjPoint]) -> Result<f64> {
    if n == 0 || grid.is_empty() {
        return Err(Error::InvalidParameter("need n >= 1 and a nonempty grid".into()));
    }
    let mut best = f64::NEG_INFINITY;
    for p0 in grid {
        let mut m = Matrix3::<f64>::identity();
        let mut log_scale = 0.0;
        let mut p = *p0;
        for step in 0..n {
            m = lift_jacobian(map, &p)? * m;
            let s = m.amax();
            if s > 1e100 {
                m /= s;
                log_scale += s.ln();
            }
            p = lift_step(map, &p).map_err(|e| with_step(e, step + 1))?.0;
        }
        let top = m.singular_values().max();
        best = best.max(top.ln() + log_scale);
    }
    Ok(best / n as f64)
}

/// [`lift_grid`] plus, at each base point, the line most contracted by `Df^n`.
pub fn refined_lift_grid(map: &SurfaceMap, n: usize, base: &[Point2], n_theta: usize) -> Result<Vec<ProjPoint>> {
    let mut out = lift_grid(base, n_theta);
    for &x in base {
        out.push(ProjPoint::new(x, most_contracted_line(map, x, n)?));
    }
    Ok(out)
}

/// Product of a base grid with `n_theta` equally spaced fiber angles.
pub fn lift_grid(base: &[Point2], n_theta: usize) -> Vec<ProjPoint> {
    let mut out = Vec::with_capacity(base.len() * n_theta);
    for &x in base {
        for i in 0..n_theta {
            out.push(ProjPoint::new(x, PI * i as f64 / n_theta as f64));
        }
    }
    out
}

/// Sup of the operator norm of the lift Jacobian over a grid, floored at 1.
pub fn lift_sup_norm(map: &SurfaceMap, grid: &[ProjPoint]) -> Result<f64> {
    let mut best: f64 = 1.0;
    for p in grid {
        best = best.max(lift_jacobian(map, p)?.singular_values().max());
    }
    Ok(best)
}
