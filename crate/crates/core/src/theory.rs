//! Numeric bound machinery: step-size thresholds, feasible target-probability
//! intervals, the potential function and the upper rate bound.
//!
//! All quantities are functions of a handful of objective-level statistics
//! ([`TheoryInputs`]): the supremum of the relative variance `V_std` of the
//! curvature remainder, the infimum `kappa_inf` of the half-split ratio, the
//! supremum `E_Q` of its mean, and the modulus `L`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::engine::{EsParams, EsState};
use crate::error::{Error, Result};
use crate::normal::{self, SQRT_2_OVER_PI};
use crate::objectives::{norm, ObjectiveSpec};

/// Interior inset applied to open optimisation domains.
const INSET: f64 = 1e-12;
const EPS_GRID: usize = 400;
const GOLDEN_TOL: f64 = 1e-9;
/// `b_low` values beyond this are treated as divergent.
const B_LOW_CAP: f64 = 1e6;
const BISECT_ITERS: usize = 100;

/// Objective-level statistics that drive every constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryInputs {
    pub dim: usize,
    pub l: f64,
    pub u: f64,
    pub v_std_sup: f64,
    pub kappa_inf: f64,
    pub e_q: f64,
}

impl TheoryInputs {
    /// Exact statistics of a quadratic: `Q = z^T H z` for every state, so
    /// `E_Q = Tr(H)`, `V_std = 2 Tr(H^2) / Tr(H)^2` and `kappa = 2`.
    pub fn quadratic(spec: &ObjectiveSpec) -> Result<Self> {
        let (tr, tr2) = match (spec.trace_hessian(), spec.trace_hessian_sq()) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::unsupported(
                    "exact statistics need a quadratic objective",
                ))
            }
        };
        Ok(Self {
            dim: spec.dim(),
            l: spec.l(),
            u: spec.u(),
            v_std_sup: 2.0 * tr2 / (tr * tr),
            kappa_inf: 2.0,
            e_q: tr,
        })
    }

    /// Large-dimension surrogate of the sphere: `V_std -> 0`, `kappa -> 2`,
    /// `E_Q = d`, `L = U = 1`.
    pub fn sphere_limit(dim: usize) -> Self {
        Self {
            dim,
            l: 1.0,
            u: 1.0,
            v_std_sup: 0.0,
            kappa_inf: 2.0,
            e_q: dim as f64,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0
            || !(self.l > 0.0 && self.u >= self.l && self.e_q > 0.0)
            || !(self.v_std_sup >= 0.0 && self.v_std_sup.is_finite())
            || !(self.kappa_inf >= 1.0 && self.kappa_inf.is_finite())
        {
            return Err(Error::invalid(format!(
                "inconsistent theory inputs {self:?}"
            )));
        }
        Ok(())
    }
}

/// Right-hand side of the relative-variance condition,
/// `1/4 min{Phi(k/(2 sqrt(2 pi))) - 1/2, 1 - Phi(3k/(2 sqrt(2 pi)))}`.
pub fn assumption2_rhs(kappa_inf: f64) -> f64 {
    let a = kappa_inf * 0.5 * normal::FRAC_1_SQRT_2PI;
    0.25 * (normal::cdf(a) - 0.5).min(1.0 - normal::cdf(3.0 * a))
}

/// Located optimum of an epsilon-optimisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsOptimum {
    pub value: f64,
    pub eps: f64,
}

/// `2 Phi^{-1}(1 - (q + v/eps^2)) / (1 + eps)`; `-inf` outside its domain.
pub fn b_high_objective(q: f64, v_std: f64, eps: f64) -> f64 {
    let p = q + v_std / (eps * eps);
    if !(p > 0.0 && p < 1.0) || !(eps > 0.0) {
        return f64::NEG_INFINITY;
    }
    -2.0 * normal::quantile_unchecked(p) / (1.0 + eps)
}

/// `2 Phi^{-1}(1 - (q - v/eps^2)) / (1 - eps)`; `+inf` outside its domain.
pub fn b_low_objective(q: f64, v_std: f64, eps: f64) -> f64 {
    let p = q - v_std / (eps * eps);
    if !(p > 0.0 && p < 1.0) || !(eps > 0.0 && eps < 1.0) {
        return f64::INFINITY;
    }
    -2.0 * normal::quantile_unchecked(p) / (1.0 - eps)
}

fn check_q(q: f64, v_std: f64) -> Result<()> {
    if !(q > 0.0 && q < 0.5) {
        return Err(Error::invalid(format!("q must lie in (0, 1/2), got {q}")));
    }
    if !(v_std >= 0.0 && v_std.is_finite()) {
        return Err(Error::invalid(format!(
            "v_std must be finite and >= 0, got {v_std}"
        )));
    }
    Ok(())
}

/// Maximise `f` on `[a, b]` by golden-section search.
fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INVPHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INVPHI * (b - a);
    let mut d = a + INVPHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol * (1.0 + a.abs().max(b.abs())) {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INVPHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INVPHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    [(x, fx), (c, fc), (d, fd)].into_iter().fold(
        (x, fx),
        |best, cand| if cand.1 > best.1 { cand } else { best },
    )
}

/// Grid scan on `[lo, hi]` followed by golden-section refinement around the
/// best grid point.
fn grid_then_golden(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let n = EPS_GRID;
    let h = (hi - lo) / (n - 1) as f64;
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..n {
        let v = f(lo + h * i as f64);
        if v > best.1 {
            best = (i, v);
        }
    }
    let a = lo + h * best.0.saturating_sub(1) as f64;
    let b = (lo + h * (best.0 + 1) as f64).min(hi);
    let grid_best = (lo + h * best.0 as f64, best.1);
    let refined = golden_max(&f, a, b, GOLDEN_TOL);
    if refined.1 >= grid_best.1 {
        refined
    } else {
        grid_best
    }
}

/// Largest normalised step size guaranteeing success probability above `q`.
pub fn b_high(q: f64, v_std: f64) -> Result<f64> {
    b_high_opt(q, v_std).map(|o| o.value)
}

pub fn b_high_opt(q: f64, v_std: f64) -> Result<EpsOptimum> {
    check_q(q, v_std)?;
    if v_std == 0.0 {
        return Ok(EpsOptimum {
            value: 2.0 * normal::upper_quantile(q)?,
            eps: 0.0,
        });
    }
    let eps0 = (2.0 * v_std / (1.0 - 2.0 * q)).sqrt();
    let lo = (eps0 * (1.0 + INSET)).ln();
    let hi = lo.max(0.0) + (1e3f64).ln();
    let (x, value) = grid_then_golden(|t| b_high_objective(q, v_std, t.exp()), lo, hi);
    if !(value > 0.0 && value.is_finite()) {
        return Err(Error::unsupported(format!(
            "b_high({q}, {v_std}) degenerate: optimum {value}"
        )));
    }
    Ok(EpsOptimum {
        value,
        eps: x.exp(),
    })
}

/// Smallest normalised step size guaranteeing success probability below `q`.
pub fn b_low(q: f64, v_std: f64) -> Result<f64> {
    b_low_opt(q, v_std).map(|o| o.value)
}

pub fn b_low_opt(q: f64, v_std: f64) -> Result<EpsOptimum> {
    check_q(q, v_std)?;
    if v_std >= q {
        return Err(Error::unsupported(format!(
            "b_low needs v_std < q, got v_std={v_std}, q={q}"
        )));
    }
    if v_std == 0.0 {
        return Ok(EpsOptimum {
            value: 2.0 * normal::upper_quantile(q)?,
            eps: 0.0,
        });
    }
    let eps0 = (v_std / q).sqrt();
    let lo = (eps0 * (1.0 + INSET)).ln();
    let hi = (1.0 - INSET).ln();
    let (x, neg) = grid_then_golden(|t| -b_low_objective(q, v_std, t.exp()), lo, hi);
    let value = -neg;
    if !(value.is_finite() && value <= B_LOW_CAP) {
        return Err(Error::unsupported(format!(
            "b_low({q}, {v_std}) diverges (value {value})"
        )));
    }
    Ok(EpsOptimum {
        value,
        eps: x.exp(),
    })
}

fn b_low_or_inf(q: f64, v_std: f64) -> f64 {
    b_low(q, v_std).unwrap_or(f64::INFINITY)
}

/// Open interval `(lower, 1/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QInterval {
    pub lower: f64,
    pub upper: f64,
}

impl QInterval {
    pub fn contains(&self, q: f64) -> bool {
        q > self.lower && q < self.upper
    }
}

/// Bisection for the boundary of a predicate that holds on `(a, x*]` and
/// fails on `(x*, b)`.
fn bisect_boundary(holds: impl Fn(f64) -> bool, mut a: f64, mut b: f64) -> f64 {
    for _ in 0..BISECT_ITERS {
        let mid = 0.5 * (a + b);
        if holds(mid) {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Admissible range for the lower target probability `q_low`.
pub fn feasible_q_interval(v_std_sup: f64, kappa_inf: f64) -> Result<QInterval> {
    if !(0.0..0.5).contains(&v_std_sup) {
        return Err(Error::unsupported(format!(
            "v_std_sup must lie in [0, 1/2), got {v_std_sup}"
        )));
    }
    if !(kappa_inf >= 1.0) {
        return Err(Error::invalid(format!(
            "kappa_inf must be >= 1, got {kappa_inf}"
        )));
    }
    let threshold = kappa_inf * SQRT_2_OVER_PI;
    let crossing = if v_std_sup == 0.0 {
        normal::cdf(-0.5 * threshold)
    } else {
        let top = 0.5 * (1.0 - INSET);
        if b_low_or_inf(top, v_std_sup) >= threshold {
            return Err(Error::unsupported(format!(
                "no admissible q_low: b_low stays above kappa_inf*sqrt(2/pi) = {threshold} \
                 on ({v_std_sup}, 1/2)"
            )));
        }
        bisect_boundary(|q| b_low_or_inf(q, v_std_sup) >= threshold, v_std_sup, top)
    };
    let lower = v_std_sup.max(crossing);
    if lower >= 0.5 {
        return Err(Error::unsupported("admissible q_low interval is empty"));
    }
    Ok(QInterval { lower, upper: 0.5 })
}

/// Admissible range for the upper target probability `q_high` given `q_low`.
pub fn feasible_q_high_interval(
    q_low: f64,
    v_std_sup: f64,
    params: &EsParams,
) -> Result<QInterval> {
    let ratio = params.log_ratio().exp();
    let target = b_low(q_low, v_std_sup)?;
    let holds = |q: f64| match b_high(q, v_std_sup) {
        Ok(b) => ratio * b >= target,
        Err(_) => false,
    };
    let top = 0.5 * (1.0 - INSET);
    let lower = if v_std_sup == 0.0 {
        normal::cdf(normal::quantile(q_low)? / ratio)
    } else if holds(top) {
        0.5
    } else if !holds(INSET) {
        0.0
    } else {
        bisect_boundary(holds, INSET, top)
    };
    if lower >= top {
        return Err(Error::unsupported(format!(
            "admissible q_high interval is empty for q_low={q_low} \
             (alpha_up/alpha_down = {ratio} too large)"
        )));
    }
    Ok(QInterval { lower, upper: 0.5 })
}

/// Guaranteed success probability for reasonable step sizes:
/// `inf{q : b_high(q) < b_low(q_low)}`.
pub fn q_floor(q_low: f64, v_std_sup: f64) -> Result<f64> {
    let target = b_low(q_low, v_std_sup)?;
    if v_std_sup == 0.0 {
        return Ok(q_low);
    }
    let above = |q: f64| match b_high(q, v_std_sup) {
        Ok(b) => b >= target,
        Err(_) => true,
    };
    let tiny = 1e-15;
    if !above(tiny) {
        return Err(Error::unsupported(format!(
            "q_floor({q_low}, {v_std_sup}) is not bounded away from 0"
        )));
    }
    Ok(bisect_boundary(above, tiny, q_low))
}

/// Constants of the potential function and the associated rate bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub dim: usize,
    pub l: f64,
    pub alpha_up: f64,
    pub alpha_down: f64,
    pub p_target: f64,
    pub log_ratio: f64,
    pub v_std_sup: f64,
    pub q_low: f64,
    pub q_high: f64,
    pub b_high: f64,
    pub b_low: f64,
    pub kappa_inf: f64,
    pub e_q: f64,
    pub q_floor: f64,
    pub s: f64,
    pub ell: f64,
    pub w: f64,
    pub v: f64,
    /// Rate bound attained at this particular `(q_low, q_high)`.
    pub b_upper: f64,
}

impl TheoryConstants {
    /// `w / (L / E_Q)`.
    pub fn w_scaled(&self) -> f64 {
        self.w * self.e_q / self.l
    }
}

struct RowQuantities {
    b_low: f64,
    q_floor: f64,
    q_high_lower: f64,
}

fn row_quantities(q_low: f64, inputs: &TheoryInputs, params: &EsParams) -> Result<RowQuantities> {
    Ok(RowQuantities {
        b_low: b_low(q_low, inputs.v_std_sup)?,
        q_floor: q_floor(q_low, inputs.v_std_sup)?,
        q_high_lower: feasible_q_high_interval(q_low, inputs.v_std_sup, params)?.lower,
    })
}

fn assemble(
    inputs: &TheoryInputs,
    params: &EsParams,
    q_low: f64,
    q_high: f64,
    row: &RowQuantities,
    b_high_val: f64,
) -> TheoryConstants {
    let k = inputs.kappa_inf;
    let w =
        inputs.l / inputs.e_q * (b_high_val / k) * (SQRT_2_OVER_PI * k - row.b_low) * row.q_floor;
    let log_ratio = params.log_ratio();
    let v = (w / (4.0 * log_ratio)).min(1.0);
    let p_target = params.p_target();
    let b_upper = 0.5 * (0.25 * w).min(log_ratio) * (p_target - q_low).min(q_high - p_target);
    TheoryConstants {
        dim: inputs.dim,
        l: inputs.l,
        alpha_up: params.alpha_up(),
        alpha_down: params.alpha_down(),
        p_target,
        log_ratio,
        v_std_sup: inputs.v_std_sup,
        q_low,
        q_high,
        b_high: b_high_val,
        b_low: row.b_low,
        kappa_inf: k,
        e_q: inputs.e_q,
        q_floor: row.q_floor,
        s: std::f64::consts::SQRT_2 * params.alpha_up() * b_high_val,
        ell: std::f64::consts::SQRT_2 * params.alpha_down() * row.b_low,
        w,
        v,
        b_upper,
    }
}

/// Build and validate the potential-function constants for a chosen pair
/// `q_low < p_target < q_high`.
pub fn build_constants(
    inputs: &TheoryInputs,
    params: &EsParams,
    q_low: f64,
    q_high: f64,
) -> Result<TheoryConstants> {
    inputs.validate()?;
    let p_target = params.p_target();
    if !(q_low < p_target) {
        return Err(Error::unsupported(format!(
            "q_low < p_target violated ({q_low} >= {p_target})"
        )));
    }
    if !(p_target < q_high) {
        return Err(Error::unsupported(format!(
            "p_target < q_high violated ({p_target} >= {q_high})"
        )));
    }
    let iq = feasible_q_interval(inputs.v_std_sup, inputs.kappa_inf)?;
    if !iq.contains(q_low) {
        return Err(Error::unsupported(format!(
            "q_low = {q_low} outside the admissible interval ({}, 1/2)",
            iq.lower
        )));
    }
    let row = row_quantities(q_low, inputs, params)?;
    if !(q_high > row.q_high_lower && q_high < 0.5) {
        return Err(Error::unsupported(format!(
            "q_high = {q_high} outside the admissible interval ({}, 1/2)",
            row.q_high_lower
        )));
    }
    let c = assemble(
        inputs,
        params,
        q_low,
        q_high,
        &row,
        b_high(q_high, inputs.v_std_sup)?,
    );
    if !(c.w > 0.0) {
        return Err(Error::unsupported(format!("w = {} is not positive", c.w)));
    }
    if !(c.s < c.ell) {
        return Err(Error::unsupported(format!(
            "s < ell violated ({} >= {})",
            c.s, c.ell
        )));
    }
    if !(c.v > 0.0 && c.v <= 1.0) {
        return Err(Error::unsupported(format!("v = {} outside (0, 1]", c.v)));
    }
    Ok(c)
}

fn log_plus(log_x: f64) -> f64 {
    if log_x >= 0.0 {
        log_x
    } else {
        0.0
    }
}

/// Potential `log f(m) + v log+(s sqrt(L f)/(sigma E_Q)) + v log+(sigma E_Q/(ell sqrt(L f)))`,
/// evaluated in the log domain.
pub fn potential_value(state: &EsState, spec: &ObjectiveSpec, c: &TheoryConstants) -> Result<f64> {
    let f = spec.canonical_value(&state.m);
    if !(f > 0.0) {
        return Err(Error::invalid("potential is undefined at the optimum"));
    }
    let log_f = f.ln();
    let half_log_lf = 0.5 * (c.l.ln() + log_f);
    let log_eq = c.e_q.ln();
    let small = c.s.ln() + half_log_lf - state.log_sigma - log_eq;
    let large = state.log_sigma + log_eq - c.ell.ln() - half_log_lf;
    Ok(log_f + c.v * log_plus(small) + c.v * log_plus(large))
}

/// Step-size regime of a state relative to the potential's thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Step size too small; progress comes from growing sigma.
    Small,
    /// Step size too large; progress comes from shrinking sigma.
    Large,
    /// Adapted step size; progress comes from moving m.
    Reasonable,
}

/// Classify `state`. `expected_q` is `E[Q]` at this state.
pub fn classify_regime(
    state: &EsState,
    spec: &ObjectiveSpec,
    c: &TheoryConstants,
    expected_q: f64,
) -> Result<Regime> {
    let f = spec.canonical_value(&state.m);
    let gnorm = norm(&spec.canonical_grad(&state.m)?);
    let sigma = state.sigma();
    let small = c.s * (c.l * f).sqrt() / (c.alpha_up * c.e_q);
    let large = c.ell * gnorm / (std::f64::consts::SQRT_2 * c.alpha_down * expected_q);
    Ok(if sigma < small {
        Regime::Small
    } else if sigma > large {
        Regime::Large
    } else {
        Regime::Reasonable
    })
}

/// Guaranteed upper bound of the expected potential change in `regime`.
pub fn regime_drift_bound(c: &TheoryConstants, regime: Regime) -> f64 {
    let scale = (0.25 * c.w).min(c.log_ratio);
    match regime {
        Regime::Small => scale * (c.p_target - c.q_high),
        Regime::Large => scale * (c.q_low - c.p_target),
        Regime::Reasonable => -0.25 * c.w,
    }
}

/// Sigma thresholds `(small, large)` between regimes for `state`'s `m`.
pub fn regime_thresholds(
    m: &[f64],
    spec: &ObjectiveSpec,
    c: &TheoryConstants,
    expected_q: f64,
) -> Result<(f64, f64)> {
    let f = spec.canonical_value(m);
    let gnorm = norm(&spec.canonical_grad(m)?);
    Ok((
        c.s * (c.l * f).sqrt() / (c.alpha_up * c.e_q),
        c.ell * gnorm / (std::f64::consts::SQRT_2 * c.alpha_down * expected_q),
    ))
}

/// Grid resolution for the rate-bound supremum.
#[derive(Debug, Clone, Copy)]
pub struct BUpperOptions {
    pub grid: usize,
    pub refine_rounds: usize,
}

impl Default for BUpperOptions {
    fn default() -> Self {
        Self {
            grid: 64,
            refine_rounds: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BUpperResult {
    pub value: f64,
    pub constants: TheoryConstants,
    /// `(q_low, q_high, objective)` for every feasible grid point.
    pub trace: Vec<(f64, f64, f64)>,
}

impl BUpperResult {
    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "q_low,q_high,objective")?;
        for (a, b, o) in &self.trace {
            writeln!(w, "{a},{b},{o}")?;
        }
        Ok(())
    }
}

/// Supremum over admissible `(q_low, q_high)` of
/// `1/2 min{w/4, log(alpha_up/alpha_down)} min{p_target - q_low, q_high - p_target}`.
pub fn b_upper(
    inputs: &TheoryInputs,
    params: &EsParams,
    opts: BUpperOptions,
) -> Result<BUpperResult> {
    inputs.validate()?;
    let pt = params.p_target();
    let iq = feasible_q_interval(inputs.v_std_sup, inputs.kappa_inf)?;
    if !(pt > iq.lower && pt < 0.5) {
        return Err(Error::unsupported(format!(
            "p_target = {pt} is outside the admissible interval ({}, 1/2); \
             the bound does not cover this step-size rule",
            iq.lower
        )));
    }
    let g = opts.grid.max(2);
    let ql_at = |i: usize| iq.lower + (pt - iq.lower) * i as f64 / (g + 1) as f64;

    let eval_row = |ql: f64| row_quantities(ql, inputs, params).ok();
    let objective = |ql: f64, qh: f64, row: &RowQuantities| -> Option<TheoryConstants> {
        if !(ql > iq.lower && ql < pt && qh > pt && qh > row.q_high_lower && qh < 0.5) {
            return None;
        }
        let bh = b_high(qh, inputs.v_std_sup).ok()?;
        let c = assemble(inputs, params, ql, qh, row, bh);
        (c.w > 0.0 && c.s < c.ell).then_some(c)
    };

    let mut trace = Vec::new();
    let mut best: Option<(TheoryConstants, usize, usize)> = None;
    for i in 1..=g {
        let ql = ql_at(i);
        let Some(row) = eval_row(ql) else { continue };
        let qh_lo = pt.max(row.q_high_lower);
        for j in 1..=g {
            let qh = qh_lo + (0.5 - qh_lo) * j as f64 / (g + 1) as f64;
            if let Some(c) = objective(ql, qh, &row) {
                trace.push((ql, qh, c.b_upper));
                if best.is_none_or(|b| c.b_upper > b.0.b_upper) {
                    best = Some((c, i, j));
                }
            }
        }
    }
    let (mut best, bi, _) = best.ok_or_else(|| {
        Error::unsupported("no admissible (q_low, q_high) pair satisfies q_low < p_target < q_high")
    })?;

    // Alternating golden-section refinement around the best grid cell.
    let ql_span = (ql_at(bi.saturating_sub(1).max(1)), ql_at((bi + 1).min(g)));
    for _ in 0..opts.refine_rounds {
        let qh = best.q_high;
        let f_ql = |ql: f64| {
            eval_row(ql)
                .and_then(|row| objective(ql, qh, &row))
                .map_or(f64::NEG_INFINITY, |c| c.b_upper)
        };
        let (ql, val) = golden_max(f_ql, ql_span.0, ql_span.1, GOLDEN_TOL);
        if val > best.b_upper {
            if let Some(c) = eval_row(ql).and_then(|row| objective(ql, qh, &row)) {
                best = c;
            }
        }
        let ql = best.q_low;
        let Some(row) = eval_row(ql) else { break };
        let qh_lo = pt.max(row.q_high_lower);
        let f_qh = |qh: f64| objective(ql, qh, &row).map_or(f64::NEG_INFINITY, |c| c.b_upper);
        let (qh, val) = golden_max(f_qh, qh_lo, 0.5, GOLDEN_TOL);
        if val > best.b_upper {
            if let Some(c) = objective(ql, qh, &row) {
                best = c;
            }
        }
    }

    Ok(BUpperResult {
        value: best.b_upper,
        constants: best,
        trace,
    })
}
