//! Strongly convex, Lipschitz-smooth test objectives.
//!
//! Every non-composite objective has its unique minimum at the origin with
//! value zero. A composite wraps such a base as `g(f(x - x_opt))` for a
//! strictly increasing `g`, which the comparison-based ES cannot distinguish
//! from the base up to translation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Strictly increasing scalar transforms applied on top of a base objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    Identity,
    /// `y -> a*y + b` with `a > 0`.
    AffinePos {
        a: f64,
        b: f64,
    },
    /// `y -> y^3 + y`.
    CubeShift,
    /// `y -> exp(y) - 1`.
    ExpMinusOne,
}

impl Transform {
    pub fn apply(&self, y: f64) -> f64 {
        match *self {
            Transform::Identity => y,
            Transform::AffinePos { a, b } => a * y + b,
            Transform::CubeShift => y * y * y + y,
            Transform::ExpMinusOne => y.exp_m1(),
        }
    }

    /// All four variants, with a representative affine map.
    pub fn all() -> [Transform; 4] {
        [
            Transform::Identity,
            Transform::AffinePos { a: 2.0, b: 3.0 },
            Transform::CubeShift,
            Transform::ExpMinusOne,
        ]
    }

    fn validate(&self) -> Result<()> {
        if let Transform::AffinePos { a, b } = *self {
            if !(a > 0.0 && a.is_finite() && b.is_finite()) {
                return Err(Error::invalid(format!(
                    "affine transform needs a > 0 and finite b, got a={a}, b={b}"
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transform::Identity => write!(f, "identity"),
            Transform::AffinePos { a, b } => write!(f, "affine:{a}:{b}"),
            Transform::CubeShift => write!(f, "cube_shift"),
            Transform::ExpMinusOne => write!(f, "exp_minus_one"),
        }
    }
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = match s {
            "identity" => Transform::Identity,
            "cube_shift" => Transform::CubeShift,
            "exp_minus_one" => Transform::ExpMinusOne,
            other => {
                let parts: Vec<&str> = other.split(':').collect();
                match parts.as_slice() {
                    ["affine", a, b] => {
                        let a = a
                            .parse()
                            .map_err(|_| Error::invalid(format!("bad affine slope in '{s}'")))?;
                        let b = b
                            .parse()
                            .map_err(|_| Error::invalid(format!("bad affine offset in '{s}'")))?;
                        Transform::AffinePos { a, b }
                    }
                    _ => return Err(Error::invalid(format!("unknown transform '{s}'"))),
                }
            }
        };
        t.validate()?;
        Ok(t)
    }
}

/// Diagonal Hessian families used in the rate experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HessianFamily {
    /// `diag(1, 10^k, ..., 10^k)`
    H1,
    /// `diag(10^{k*i/(d-1)})`, `i = 0..d-1`
    H2,
    /// `diag(1, ..., 1, 10^k)`
    H3,
}

impl fmt::Display for HessianFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            HessianFamily::H1 => "h1",
            HessianFamily::H2 => "h2",
            HessianFamily::H3 => "h3",
        };
        f.write_str(s)
    }
}

impl FromStr for HessianFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "h1" => Ok(HessianFamily::H1),
            "h2" => Ok(HessianFamily::H2),
            "h3" => Ok(HessianFamily::H3),
            _ => Err(Error::invalid(format!("unknown hessian family '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveKind {
    /// `f(x) = 1/2 sum h_i x_i^2`
    QuadraticDiag { diag: Vec<f64> },
    /// `f(x) = 1/2 sum b_i x_i^2 + (M/w^2) sum (1 - cos(w x_i))`
    QuadraticPerturbed {
        base: Vec<f64>,
        amplitude: f64,
        frequency: f64,
    },
    /// `h(x) = g(f(x - x_opt))`
    Composite {
        base: Box<ObjectiveSpec>,
        transform: Transform,
        x_opt: Vec<f64>,
    },
}

/// A test objective together with its curvature constants.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSpec {
    dim: usize,
    kind: ObjectiveKind,
    l: f64,
    u: f64,
    trace_hessian: Option<f64>,
}

impl ObjectiveSpec {
    /// Diagonal quadratic `1/2 x^T diag(h) x`.
    pub fn quadratic_diag(diag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::invalid("quadratic needs at least one dimension"));
        }
        if diag.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(Error::invalid(
                "hessian diagonal entries must be positive and finite",
            ));
        }
        let l = diag.iter().copied().fold(f64::INFINITY, f64::min);
        let u = diag.iter().copied().fold(0.0, f64::max);
        let trace = diag.iter().sum();
        Ok(Self {
            dim: diag.len(),
            kind: ObjectiveKind::QuadraticDiag { diag },
            l,
            u,
            trace_hessian: Some(trace),
        })
    }

    /// Sphere `1/2 ||x||^2`.
    pub fn sphere(dim: usize) -> Result<Self> {
        Self::quadratic_diag(vec![1.0; dim])
    }

    /// Quadratic plus a bounded-curvature cosine ripple. The ripple's Hessian
    /// is `diag(M cos(w x_i))`, so the spectrum stays inside
    /// `[min b - M, max b + M]`.
    pub fn perturbed(base: Vec<f64>, amplitude: f64, frequency: f64) -> Result<Self> {
        if base.is_empty() {
            return Err(Error::invalid(
                "perturbed objective needs at least one dimension",
            ));
        }
        if base.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(Error::invalid(
                "base diagonal entries must be positive and finite",
            ));
        }
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err(Error::invalid("perturbation amplitude must be >= 0"));
        }
        if !(frequency > 0.0 && frequency.is_finite()) {
            return Err(Error::invalid("perturbation frequency must be > 0"));
        }
        let bmin = base.iter().copied().fold(f64::INFINITY, f64::min);
        let bmax = base.iter().copied().fold(0.0, f64::max);
        if amplitude >= bmin {
            return Err(Error::invalid(format!(
                "amplitude {amplitude} must be below the smallest base curvature {bmin}"
            )));
        }
        Ok(Self {
            dim: base.len(),
            l: bmin - amplitude,
            u: bmax + amplitude,
            trace_hessian: None,
            kind: ObjectiveKind::QuadraticPerturbed {
                base,
                amplitude,
                frequency,
            },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &ObjectiveKind {
        &self.kind
    }

    /// Strong convexity modulus.
    pub fn l(&self) -> f64 {
        self.l
    }

    /// Lipschitz-smoothness modulus.
    pub fn u(&self) -> f64 {
        self.u
    }

    /// `Tr(H)` for quadratic kinds (including composites of quadratics).
    pub fn trace_hessian(&self) -> Option<f64> {
        self.trace_hessian
    }

    /// Hessian diagonal when the canonical objective is quadratic.
    pub fn quadratic_diag_entries(&self) -> Option<&[f64]> {
        match &self.base().kind {
            ObjectiveKind::QuadraticDiag { diag } => Some(diag),
            _ => None,
        }
    }

    pub fn is_quadratic(&self) -> bool {
        self.quadratic_diag_entries().is_some()
    }

    pub fn is_composite(&self) -> bool {
        matches!(self.kind, ObjectiveKind::Composite { .. })
    }

    /// The canonical (untransformed, unshifted) objective.
    pub fn base(&self) -> &ObjectiveSpec {
        match &self.kind {
            ObjectiveKind::Composite { base, .. } => base,
            _ => self,
        }
    }

    /// Location of the unique minimiser.
    pub fn optimum(&self) -> Vec<f64> {
        match &self.kind {
            ObjectiveKind::Composite { x_opt, .. } => x_opt.clone(),
            _ => vec![0.0; self.dim],
        }
    }

    /// Objective value, checking the input length.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        Ok(self.value(x))
    }

    /// Objective value without the length check (hot path).
    pub fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        match &self.kind {
            ObjectiveKind::Composite {
                base,
                transform,
                x_opt,
            } => transform.apply(base.raw_value(x, Some(x_opt))),
            _ => self.raw_value(x, None),
        }
    }

    /// Value of the canonical objective at the corresponding point, i.e.
    /// `f(x - x_opt)` for a composite and `f(x)` otherwise.
    pub fn canonical_value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            ObjectiveKind::Composite { base, x_opt, .. } => base.raw_value(x, Some(x_opt)),
            _ => self.raw_value(x, None),
        }
    }

    /// Distance to the optimum.
    pub fn dist_to_opt(&self, x: &[f64]) -> f64 {
        match &self.kind {
            ObjectiveKind::Composite { x_opt, .. } => x
                .iter()
                .zip(x_opt)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
            _ => norm(x),
        }
    }

    fn raw_value(&self, x: &[f64], offset: Option<&[f64]>) -> f64 {
        let at = |i: usize| match offset {
            Some(o) => x[i] - o[i],
            None => x[i],
        };
        match &self.kind {
            ObjectiveKind::QuadraticDiag { diag } => {
                0.5 * diag
                    .iter()
                    .enumerate()
                    .map(|(i, h)| {
                        let xi = at(i);
                        h * xi * xi
                    })
                    .sum::<f64>()
            }
            ObjectiveKind::QuadraticPerturbed {
                base,
                amplitude,
                frequency,
            } => {
                let scale = amplitude / (frequency * frequency);
                let mut quad = 0.0;
                let mut ripple = 0.0;
                for (i, b) in base.iter().enumerate() {
                    let xi = at(i);
                    quad += b * xi * xi;
                    // 1 - cos(y) = 2 sin^2(y/2), free of cancellation near 0
                    let s = (0.5 * frequency * xi).sin();
                    ripple += 2.0 * s * s;
                }
                0.5 * quad + scale * ripple
            }
            ObjectiveKind::Composite { .. } => unreachable!("composites are never nested"),
        }
    }

    /// Exact gradient of a non-composite objective.
    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        match &self.kind {
            ObjectiveKind::QuadraticDiag { diag } => {
                Ok(diag.iter().zip(x).map(|(h, xi)| h * xi).collect())
            }
            ObjectiveKind::QuadraticPerturbed {
                base,
                amplitude,
                frequency,
            } => Ok(base
                .iter()
                .zip(x)
                .map(|(b, xi)| b * xi + amplitude / frequency * (frequency * xi).sin())
                .collect()),
            ObjectiveKind::Composite { .. } => Err(Error::unsupported(
                "gradient of a composite objective (the transform need not be differentiable)",
            )),
        }
    }

    /// Gradient of the canonical objective at the point corresponding to `x`.
    pub fn canonical_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.kind {
            ObjectiveKind::Composite { base, x_opt, .. } => {
                check_dim(self.dim, x.len())?;
                let shifted: Vec<f64> = x.iter().zip(x_opt).map(|(a, b)| a - b).collect();
                base.grad(&shifted)
            }
            _ => self.grad(x),
        }
    }

    /// `Tr(H^2)` for quadratic kinds.
    pub fn trace_hessian_sq(&self) -> Option<f64> {
        self.quadratic_diag_entries()
            .map(|d| d.iter().map(|h| h * h).sum())
    }
}

/// Build `H1`, `H2` or `H3` with condition number `10^kappa`.
pub fn hessian_family(family: HessianFamily, dim: usize, kappa: u32) -> Result<ObjectiveSpec> {
    if dim == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    ObjectiveSpec::quadratic_diag(family_diag(family, dim, kappa))
}

fn family_diag(family: HessianFamily, dim: usize, kappa: u32) -> Vec<f64> {
    if dim == 1 {
        return vec![1.0];
    }
    let top = 10f64.powi(kappa as i32);
    match family {
        HessianFamily::H1 => {
            let mut d = vec![top; dim];
            d[0] = 1.0;
            d
        }
        HessianFamily::H2 => {
            let denom = (dim - 1) as u64;
            (0..dim as u64)
                .map(|i| {
                    let num = kappa as u64 * i;
                    if num.is_multiple_of(denom) {
                        10f64.powi((num / denom) as i32)
                    } else {
                        10f64.powf(num as f64 / denom as f64)
                    }
                })
                .collect()
        }
        HessianFamily::H3 => {
            let mut d = vec![1.0; dim];
            d[dim - 1] = top;
            d
        }
    }
}

/// Wrap a non-composite `base` as `g(base(x - x_opt))`.
pub fn make_composite(
    base: ObjectiveSpec,
    transform: Transform,
    x_opt: Vec<f64>,
) -> Result<ObjectiveSpec> {
    if base.is_composite() {
        return Err(Error::invalid("composites cannot be nested"));
    }
    check_dim(base.dim, x_opt.len())?;
    if x_opt.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("x_opt must be finite"));
    }
    transform.validate()?;
    Ok(ObjectiveSpec {
        dim: base.dim,
        l: base.l,
        u: base.u,
        trace_hessian: base.trace_hessian,
        kind: ObjectiveKind::Composite {
            base: Box::new(base),
            transform,
            x_opt,
        },
    })
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Perturbation parameters in the JSON descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbConfig {
    #[serde(rename = "M")]
    pub amplitude: f64,
    pub omega: f64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        Self {
            amplitude: 0.5,
            omega: 1.0,
        }
    }
}

/// JSON descriptor of an objective.
///
/// `kind` is one of `h1`, `h2`, `h3`, `perturbed` or `composite`. A
/// `perturbed` objective ripples the `base` family (default `h1`); a
/// `composite` wraps the `base` family (or a perturbed one when `perturb` is
/// given) with `transform` and `x_opt`. A non-composite kind that carries a
/// `transform` or `x_opt` is promoted to a composite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub kind: String,
    pub dim: usize,
    #[serde(default)]
    pub kappa: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_opt: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturb: Option<PerturbConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<String>,
}

impl ObjectiveConfig {
    pub fn family(kind: HessianFamily, dim: usize, kappa: u32) -> Self {
        Self {
            kind: kind.to_string(),
            dim,
            kappa,
            transform: None,
            x_opt: None,
            perturb: None,
            base: None,
        }
    }

    pub fn build(&self) -> Result<ObjectiveSpec> {
        if self.dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        let base_family =
            || -> Result<HessianFamily> { self.base.as_deref().unwrap_or("h1").parse() };
        let perturbed = |family: HessianFamily| -> Result<ObjectiveSpec> {
            let p = self.perturb.unwrap_or_default();
            ObjectiveSpec::perturbed(
                family_diag(family, self.dim, self.kappa),
                p.amplitude,
                p.omega,
            )
        };
        let base = match self.kind.as_str() {
            "h1" | "h2" | "h3" => hessian_family(self.kind.parse()?, self.dim, self.kappa)?,
            "perturbed" => perturbed(base_family()?)?,
            "composite" => {
                if self.perturb.is_some() {
                    perturbed(base_family()?)?
                } else {
                    hessian_family(base_family()?, self.dim, self.kappa)?
                }
            }
            other => return Err(Error::invalid(format!("unknown objective kind '{other}'"))),
        };
        if self.kind == "composite" || self.transform.is_some() || self.x_opt.is_some() {
            let transform = match &self.transform {
                Some(s) => s.parse()?,
                None => Transform::Identity,
            };
            let x_opt = self.x_opt.clone().unwrap_or_else(|| vec![0.0; self.dim]);
            make_composite(base, transform, x_opt)
        } else {
            Ok(base)
        }
    }

    /// Short label such as `h1` or `perturbed`.
    pub fn label(&self) -> String {
        match (&self.kind[..], &self.base) {
            ("perturbed" | "composite", Some(b)) => format!("{}({b})", self.kind),
            _ => self.kind.clone(),
        }
    }
}
