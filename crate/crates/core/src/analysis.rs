//! Monte Carlo estimators of per-state quantities and inequality checks.

use serde::{Deserialize, Serialize};

use crate::engine::{EsParams, EsState};
use crate::error::{check_dim, Error, Result};
use crate::normal::{self, FRAC_1_SQRT_2PI};
use crate::objectives::{dot, norm, ObjectiveSpec};
use crate::rng::{fill_normal, stream_rng};
use crate::stats::{monte_carlo, EstimateWithError, Merge, Moments};
use crate::theory::{self, Regime, TheoryConstants};

/// Minimum Monte Carlo sample size accepted by the estimators.
pub const MIN_SAMPLES: usize = 1000;
/// Relative step below which the Taylor remainder is not trusted.
const CANCELLATION_TOL: f64 = 1e-6;
/// Slack, in standard errors, granted to every inequality verdict.
pub const SLACK_SE: f64 = 3.0;

fn check_n(n: usize) -> Result<()> {
    if n < MIN_SAMPLES {
        return Err(Error::invalid(format!(
            "need at least {MIN_SAMPLES} samples, got {n}"
        )));
    }
    Ok(())
}

/// Precomputed quantities at a fixed state.
struct Probe<'a> {
    spec: &'a ObjectiveSpec,
    m: &'a [f64],
    sigma: f64,
    fm: f64,
    grad: Vec<f64>,
    gnorm: f64,
    dist: f64,
}

impl<'a> Probe<'a> {
    fn new(spec: &'a ObjectiveSpec, state: &'a EsState) -> Result<Self> {
        if spec.is_composite() {
            return Err(Error::unsupported(
                "per-state analysis needs a non-composite objective",
            ));
        }
        check_dim(spec.dim(), state.m.len())?;
        let dist = spec.dist_to_opt(&state.m);
        if dist == 0.0 {
            return Err(Error::invalid("state sits at the optimum"));
        }
        let grad = spec.grad(&state.m)?;
        let gnorm = norm(&grad);
        Ok(Self {
            spec,
            m: &state.m,
            sigma: state.sigma(),
            fm: spec.value(&state.m),
            grad,
            gnorm,
            dist,
        })
    }

    /// Writes the candidate into `x` and returns its value.
    fn candidate(&self, z: &[f64], x: &mut [f64]) -> f64 {
        for ((xi, mi), zi) in x.iter_mut().zip(self.m).zip(z) {
            *xi = mi + self.sigma * zi;
        }
        self.spec.value(x)
    }

    fn q(&self, z: &[f64], fx: f64) -> Result<f64> {
        if self.sigma * norm(z) / self.dist < CANCELLATION_TOL {
            return match self.spec.quadratic_diag_entries() {
                Some(h) => Ok(h.iter().zip(z).map(|(h, z)| h * z * z).sum()),
                None => Err(Error::unsupported(format!(
                    "step {:e} too small relative to the distance {:e} to certify the \
                     remainder of a non-quadratic objective",
                    self.sigma * norm(z),
                    self.dist
                ))),
            };
        }
        let s = self.sigma;
        Ok(2.0 / (s * s) * (fx - self.fm - s * dot(&self.grad, z)))
    }

    fn z_e(&self, z: &[f64]) -> f64 {
        dot(z, &self.grad) / self.gnorm
    }
}

/// Scaled second-order remainder
/// `(2/sigma^2) (f(m + sigma z) - f(m) - sigma <grad f(m), z>)`.
pub fn sample_q(spec: &ObjectiveSpec, state: &EsState, z: &[f64]) -> Result<f64> {
    check_dim(spec.dim(), z.len())?;
    let p = Probe::new(spec, state)?;
    let mut x = vec![0.0; z.len()];
    let fx = p.candidate(z, &mut x);
    p.q(z, fx)
}

/// Moment summary of the remainder at one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QStats {
    pub mean_q: f64,
    pub var_q: f64,
    pub v_std: f64,
    pub half_mean_q: f64,
    pub kappa: f64,
    pub n: usize,
    pub se_mean: f64,
    pub se_var: f64,
    pub se_half: f64,
    /// Standard error of `half_mean_q - mean_q / 2` (paired).
    pub se_half_dev: f64,
}

impl QStats {
    /// Standard error of `v_std` by the delta method (ignoring covariance).
    pub fn se_v_std(&self) -> f64 {
        let m2 = self.mean_q * self.mean_q;
        ((self.se_var / m2).powi(2)
            + (2.0 * self.var_q * self.se_mean / (m2 * self.mean_q)).powi(2))
        .sqrt()
    }

    /// Standard error of `kappa` by the delta method (ignoring covariance).
    pub fn se_kappa(&self) -> f64 {
        let h = self.half_mean_q;
        ((self.se_mean / h).powi(2) + (self.mean_q * self.se_half / (h * h)).powi(2)).sqrt()
    }
}

/// Exact mean and variance of `Q = z^T H z` for a quadratic.
pub fn quadratic_q_exact(spec: &ObjectiveSpec) -> Result<(f64, f64)> {
    match (spec.trace_hessian(), spec.trace_hessian_sq()) {
        (Some(t), Some(t2)) => Ok((t, 2.0 * t2)),
        _ => Err(Error::unsupported(
            "exact remainder law needs a quadratic objective",
        )),
    }
}

/// Per-sample accumulators shared by the estimators below.
mod slot {
    pub const Q: usize = 0;
    pub const Q_HALF: usize = 1;
    pub const Q_HALF_DEV: usize = 2;
    pub const SUCCESS: usize = 3;
    pub const REL_PROGRESS: usize = 4;
    pub const LOG_PROGRESS: usize = 5;
    pub const EXP_ABS_LOG: usize = 6;
    pub const COUNT: usize = 7;
}

struct Acc {
    moments: [Moments; slot::COUNT],
    error: Option<String>,
}

impl Merge for Acc {
    fn merge_from(&mut self, other: &Self) {
        self.moments.merge_from(&other.moments);
        if self.error.is_none() {
            self.error.clone_from(&other.error);
        }
    }
}

/// One pass over `n` common mutation vectors collecting every per-state
/// statistic.
fn sweep(
    spec: &ObjectiveSpec,
    state: &EsState,
    n: usize,
    seed: u64,
) -> Result<[Moments; slot::COUNT]> {
    check_n(n)?;
    let p = Probe::new(spec, state)?;
    let d = spec.dim();
    let acc = monte_carlo(
        n,
        d,
        seed,
        || Acc {
            moments: [Moments::default(); slot::COUNT],
            error: None,
        },
        |acc, z| {
            if acc.error.is_some() {
                return;
            }
            let mut x = vec![0.0; d];
            let fx = p.candidate(z, &mut x);
            let q = match p.q(z, fx) {
                Ok(q) => q,
                Err(e) => {
                    acc.error = Some(e.to_string());
                    return;
                }
            };
            let half = if p.z_e(z) <= 0.0 { 1.0 } else { 0.0 };
            let success = fx <= p.fm;
            let (rel, logp) = if success {
                ((fx - p.fm) / p.fm, (fx / p.fm).ln())
            } else {
                (0.0, 0.0)
            };
            let m = &mut acc.moments;
            m[slot::Q].push(q);
            m[slot::Q_HALF].push(q * half);
            m[slot::Q_HALF_DEV].push(q * (half - 0.5));
            m[slot::SUCCESS].push(if success { 1.0 } else { 0.0 });
            m[slot::REL_PROGRESS].push(rel);
            m[slot::LOG_PROGRESS].push(logp);
            m[slot::EXP_ABS_LOG].push(logp.abs().exp());
        },
    );
    match acc.error {
        Some(e) => Err(Error::Unsupported(e)),
        None => Ok(acc.moments),
    }
}

fn q_stats_from(m: &[Moments; slot::COUNT]) -> QStats {
    let q = &m[slot::Q];
    let h = &m[slot::Q_HALF];
    let mean_q = q.mean();
    let var_q = q.variance();
    QStats {
        mean_q,
        var_q,
        v_std: var_q / (mean_q * mean_q),
        half_mean_q: h.mean(),
        kappa: mean_q / h.mean(),
        n: q.count(),
        se_mean: q.se_mean(),
        se_var: q.se_variance(),
        se_half: h.se_mean(),
        se_half_dev: m[slot::Q_HALF_DEV].se_mean(),
    }
}

fn binomial(m: &Moments) -> EstimateWithError {
    let p = m.mean();
    let n = m.count();
    EstimateWithError::new(p, (p * (1.0 - p) / n as f64).sqrt(), n)
}

/// Sample moments of the remainder over `n` standard-normal mutations.
pub fn estimate_q_stats(
    spec: &ObjectiveSpec,
    state: &EsState,
    n: usize,
    seed: u64,
) -> Result<QStats> {
    sweep(spec, state, n, seed).map(|m| q_stats_from(&m))
}

/// Fraction of mutations no worse than the parent, with binomial stderr.
pub fn estimate_success_prob(
    spec: &ObjectiveSpec,
    state: &EsState,
    n: usize,
    seed: u64,
) -> Result<EstimateWithError> {
    check_n(n)?;
    check_dim(spec.dim(), state.m.len())?;
    let d = spec.dim();
    let sigma = state.sigma();
    let fm = spec.value(&state.m);
    let acc = monte_carlo(n, d, seed, Moments::default, |acc, z| {
        let x: Vec<f64> = state.m.iter().zip(z).map(|(m, z)| m + sigma * z).collect();
        acc.push(if spec.value(&x) <= fm { 1.0 } else { 0.0 });
    });
    Ok(binomial(&acc))
}

/// Mean one-step log-progress `log(f(m')/f(m)) 1{success}`.
pub fn estimate_log_progress(
    spec: &ObjectiveSpec,
    state: &EsState,
    n: usize,
    seed: u64,
) -> Result<EstimateWithError> {
    check_n(n)?;
    check_dim(spec.dim(), state.m.len())?;
    let d = spec.dim();
    let sigma = state.sigma();
    let fm = spec.canonical_value(&state.m);
    let acc = monte_carlo(n, d, seed, Moments::default, |acc, z| {
        let x: Vec<f64> = state.m.iter().zip(z).map(|(m, z)| m + sigma * z).collect();
        let fx = spec.canonical_value(&x);
        acc.push(if fx <= fm { (fx / fm).ln() } else { 0.0 });
    });
    Ok(acc.mean_estimate())
}

/// Normalised step size `sigma E[Q] / ||grad f(m)||`.
pub fn normalized_sigma(spec: &ObjectiveSpec, state: &EsState, mean_q: f64) -> Result<f64> {
    let g = norm(&spec.canonical_grad(&state.m)?);
    Ok(state.sigma() * mean_q / g)
}

/// Step size achieving a given normalised step size at `m`.
pub fn sigma_for_normalized(
    spec: &ObjectiveSpec,
    m: &[f64],
    sigma_bar: f64,
    mean_q: f64,
) -> Result<f64> {
    let g = norm(&spec.canonical_grad(m)?);
    Ok(sigma_bar * g / mean_q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// One inequality `lhs <= rhs`, judged with [`SLACK_SE`] standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub state_id: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub stderr: f64,
    pub verdict: Verdict,
}

impl Check {
    pub fn le(name: impl Into<String>, state_id: usize, lhs: f64, rhs: f64, stderr: f64) -> Self {
        let verdict = if !(lhs.is_finite() && rhs.is_finite() && stderr.is_finite()) {
            Verdict::Inconclusive
        } else if lhs <= rhs + SLACK_SE * stderr {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        Self {
            name: name.into(),
            state_id,
            lhs,
            rhs,
            stderr,
            verdict,
        }
    }

    fn not_applicable(name: impl Into<String>, state_id: usize) -> Self {
        Self {
            name: name.into(),
            state_id,
            lhs: f64::NAN,
            rhs: f64::NAN,
            stderr: f64::NAN,
            verdict: Verdict::Inconclusive,
        }
    }
}

/// JSON-serialisable collection of checks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn failures(&self) -> usize {
        self.checks
            .iter()
            .filter(|c| c.verdict == Verdict::Fail)
            .count()
    }

    pub fn count(&self, v: Verdict) -> usize {
        self.checks.iter().filter(|c| c.verdict == v).count()
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.verdict == Verdict::Pass)
    }

    pub fn extend(&mut self, other: Report) {
        self.checks.extend(other.checks);
    }
}

/// Epsilons at which the success-probability sandwich is checked.
pub const SANDWICH_EPS: [f64; 3] = [0.1, 0.3, 0.5];

/// Check the remainder, log-progress and success-probability inequalities at
/// every state. Each state uses its own seed derived from `seed`.
pub fn check_lemma_suite(
    spec: &ObjectiveSpec,
    states: &[EsState],
    n: usize,
    seed: u64,
) -> Result<Report> {
    let d = spec.dim() as f64;
    let (l, u) = (spec.l(), spec.u());
    let mut report = Report::default();
    for (id, state) in states.iter().enumerate() {
        let m = sweep(spec, state, n, crate::rng::derive_seed(seed, 0, id as u64))?;
        let qs = q_stats_from(&m);
        let p = Probe::new(spec, state)?;
        let c = &mut report.checks;

        c.push(Check::le(
            "remainder_mean_lower",
            id,
            d * l,
            qs.mean_q,
            qs.se_mean,
        ));
        c.push(Check::le(
            "remainder_mean_upper",
            id,
            qs.mean_q,
            d * u,
            qs.se_mean,
        ));
        c.push(Check::le(
            "remainder_variance",
            id,
            qs.var_q,
            4.0 * d * u * u,
            qs.se_var,
        ));
        let factor = (2.0 / d).sqrt() * (u / l);
        c.push(Check::le(
            "remainder_half_split",
            id,
            (qs.half_mean_q - qs.mean_q / 2.0).abs(),
            factor * qs.mean_q,
            qs.se_half_dev + factor * qs.se_mean,
        ));

        // Relative progress versus its linearised bound.
        let succ = binomial(&m[slot::SUCCESS]);
        let rel = m[slot::REL_PROGRESS].mean_estimate();
        let s = p.sigma;
        let coef = s * p.gnorm / p.fm;
        let inner = s * qs.half_mean_q / (2.0 * p.gnorm) - FRAC_1_SQRT_2PI;
        let rhs = coef * inner * succ.value;
        let se_rhs = coef
            * ((inner * succ.stderr).powi(2)
                + (s * qs.se_half / (2.0 * p.gnorm) * succ.value).powi(2))
            .sqrt();
        c.push(Check::le(
            "log_progress_upper",
            id,
            rel.value,
            rhs,
            rel.stderr + se_rhs,
        ));

        if spec.dim() > 3 {
            let e = m[slot::EXP_ABS_LOG].mean_estimate();
            c.push(Check::le(
                "log_progress_moment",
                id,
                e.value,
                (u / l) * (1.0 + 1.0 / (d - 3.0)),
                e.stderr,
            ));
        } else {
            c.push(Check::not_applicable("log_progress_moment", id));
        }

        let sigma_bar = s * qs.mean_q / p.gnorm;
        let se_sb = s * qs.se_mean / p.gnorm;
        for eps in SANDWICH_EPS {
            let vterm = qs.v_std / (eps * eps);
            let se_v = qs.se_v_std() / (eps * eps);
            let lower = normal::cdf(-0.5 * sigma_bar * (1.0 + eps)) - vterm;
            let upper = normal::cdf(-0.5 * sigma_bar * (1.0 - eps)) + vterm;
            let se_lo =
                se_v + normal::pdf(0.5 * sigma_bar * (1.0 + eps)) * 0.5 * (1.0 + eps) * se_sb;
            let se_up =
                se_v + normal::pdf(0.5 * sigma_bar * (1.0 - eps)) * 0.5 * (1.0 - eps) * se_sb;
            c.push(Check::le(
                format!("success_lower_eps{eps}"),
                id,
                lower,
                succ.value,
                succ.stderr + se_lo,
            ));
            c.push(Check::le(
                format!("success_upper_eps{eps}"),
                id,
                succ.value,
                upper,
                succ.stderr + se_up,
            ));
        }
    }
    Ok(report)
}

/// Outcome of the relative-variance condition check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assumption2Report {
    pub holds: bool,
    pub margin: f64,
    pub v_std_sup: f64,
    pub kappa_inf: f64,
    pub rhs: f64,
    /// Diagnostics such as an estimated `kappa` below 1.
    pub flags: Vec<String>,
    pub states: Vec<QStats>,
}

/// Compare the sampled supremum of `V_std` against the threshold implied by
/// the sampled infimum of `kappa`.
pub fn check_assumption2(
    spec: &ObjectiveSpec,
    states: &[EsState],
    n: usize,
    seed: u64,
) -> Result<Assumption2Report> {
    if states.is_empty() {
        return Err(Error::invalid("no states to check"));
    }
    let mut stats = Vec::with_capacity(states.len());
    let mut flags = Vec::new();
    for (id, state) in states.iter().enumerate() {
        let qs = estimate_q_stats(spec, state, n, crate::rng::derive_seed(seed, 1, id as u64))?;
        if qs.kappa + SLACK_SE * qs.se_kappa() < 1.0 {
            flags.push(format!(
                "state {id}: kappa estimate {} below 1 beyond its error band",
                qs.kappa
            ));
        }
        stats.push(qs);
    }
    let v_std_sup = stats
        .iter()
        .map(|s| s.v_std)
        .fold(f64::NEG_INFINITY, f64::max);
    let kappa_inf = stats.iter().map(|s| s.kappa).fold(f64::INFINITY, f64::min);
    let rhs = theory::assumption2_rhs(kappa_inf);
    let margin = rhs - v_std_sup;
    Ok(Assumption2Report {
        holds: margin > 0.0,
        margin,
        v_std_sup,
        kappa_inf,
        rhs,
        flags,
        states: stats,
    })
}

/// States covering the search space: distances log-spaced over
/// `[1e-3, 1e3] sqrt(d)`, random directions, and normalised step sizes
/// cycling through 0.1, 1 and 10 (with `E[Q]` approximated by `d U`).
pub fn sample_states(spec: &ObjectiveSpec, count: usize, seed: u64) -> Result<Vec<EsState>> {
    if count == 0 {
        return Err(Error::invalid("need at least one state"));
    }
    let d = spec.dim();
    let x_opt = spec.optimum();
    let mut rng = stream_rng(seed, crate::rng::STREAM_INIT);
    let mut z = vec![0.0; d];
    let mut states = Vec::with_capacity(count);
    for k in 0..count {
        let frac = if count == 1 {
            0.5
        } else {
            k as f64 / (count - 1) as f64
        };
        let r = 10f64.powf(-3.0 + 6.0 * frac) * (d as f64).sqrt();
        loop {
            fill_normal(&mut rng, &mut z);
            if norm(&z) > 0.0 {
                break;
            }
        }
        let zn = norm(&z);
        let m: Vec<f64> = z
            .iter()
            .zip(&x_opt)
            .map(|(zi, o)| o + r * zi / zn)
            .collect();
        let sigma_bar = [0.1, 1.0, 10.0][k % 3];
        let sigma = sigma_for_normalized(spec, &m, sigma_bar, d as f64 * spec.u())?;
        states.push(EsState::new(m, sigma)?);
    }
    Ok(states)
}

/// Mean one-step potential change at a state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftEstimate {
    pub estimate: EstimateWithError,
    pub regime: Regime,
    /// Guaranteed upper bound of the drift in this regime.
    pub bound: f64,
    pub expected_q: f64,
}

/// `E[Q]` at a state: exact on quadratics, estimated otherwise.
pub fn expected_q(spec: &ObjectiveSpec, state: &EsState, n: usize, seed: u64) -> Result<f64> {
    match quadratic_q_exact(spec) {
        Ok((mean, _)) => Ok(mean),
        Err(_) => estimate_q_stats(spec, state, n, seed).map(|q| q.mean_q),
    }
}

/// Estimate `E[V(theta') - V(theta)]` over `n` one-step transitions.
pub fn estimate_drift(
    spec: &ObjectiveSpec,
    state: &EsState,
    params: &EsParams,
    constants: &TheoryConstants,
    n: usize,
    seed: u64,
) -> Result<DriftEstimate> {
    check_n(n)?;
    let probe = Probe::new(spec, state)?;
    let eq = expected_q(spec, state, n, seed ^ 0x5eed)?;
    let regime = theory::classify_regime(state, spec, constants, eq)?;
    let v0 = theory::potential_value(state, spec, constants)?;
    let d = spec.dim();
    let acc = monte_carlo(n, d, seed, Moments::default, |acc, z| {
        let mut x = vec![0.0; d];
        let fx = probe.candidate(z, &mut x);
        let next = if fx <= probe.fm {
            EsState {
                m: x,
                log_sigma: state.log_sigma + params.log_up(),
            }
        } else {
            EsState {
                m: state.m.clone(),
                log_sigma: state.log_sigma + params.log_down(),
            }
        };
        let v1 = theory::potential_value(&next, spec, constants).unwrap_or(f64::NEG_INFINITY);
        acc.push(v1 - v0);
    });
    Ok(DriftEstimate {
        estimate: acc.mean_estimate(),
        regime,
        bound: theory::regime_drift_bound(constants, regime),
        expected_q: eq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::step;
    use crate::objectives::{hessian_family, HessianFamily};
    use crate::theory::{build_constants, TheoryInputs};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn state(m: Vec<f64>, sigma: f64) -> EsState {
        EsState::new(m, sigma).unwrap()
    }

    #[test]
    fn sample_q_examples() {
        let s = ObjectiveSpec::sphere(4).unwrap();
        let st = state(vec![1.0, -2.0, 0.5, 3.0], 0.3);
        let q = sample_q(&s, &st, &[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!((q - 4.0).abs() < 1e-12);
        assert_eq!(sample_q(&s, &st, &[0.0; 4]).unwrap(), 0.0);
        let c = crate::objectives::make_composite(
            s.clone(),
            crate::objectives::Transform::CubeShift,
            vec![0.0; 4],
        )
        .unwrap();
        assert!(sample_q(&c, &st, &[1.0; 4]).is_err());
    }

    #[test]
    fn quadratic_q_is_state_free() {
        let s = ObjectiveSpec::quadratic_diag(vec![1.0, 10.0, 10.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = [0.7, -1.2, 0.4];
        let exact: f64 = [1.0, 10.0, 10.0]
            .iter()
            .zip(&z)
            .map(|(h, z)| h * z * z)
            .sum();
        for _ in 0..100 {
            let m: Vec<f64> = (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let sigma = 10f64.powf(rng.gen_range(-1.0..1.0));
            let q = sample_q(&s, &state(m, sigma), &z).unwrap();
            assert!((q - exact).abs() <= 1e-9 * exact, "{q} vs {exact}");
        }
        // Cancellation guard falls back to the closed form.
        let q = sample_q(&s, &state(vec![1.0, 1.0, 1.0], 1e-12), &z).unwrap();
        assert!((q - exact).abs() <= 1e-12 * exact);
    }

    #[test]
    fn cancellation_rejected_for_non_quadratic() {
        let s = ObjectiveSpec::perturbed(vec![1.0; 3], 0.5, 1.0).unwrap();
        assert!(sample_q(&s, &state(vec![1.0; 3], 1e-12), &[1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn q_pathwise_bounds_on_perturbed() {
        let s = ObjectiveSpec::perturbed(vec![1.0, 3.0, 5.0, 2.0], 0.5, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..2000 {
            let m: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let z: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let st = state(m, 10f64.powf(rng.gen_range(-2.0..1.0)));
            let q = sample_q(&s, &st, &z).unwrap();
            let z2: f64 = z.iter().map(|v| v * v).sum();
            let tol = 1e-7 * (1.0 + s.u() * z2);
            assert!(s.l() * z2 - tol <= q && q <= s.u() * z2 + tol);
        }
    }

    #[test]
    fn exact_q_examples() {
        let s = ObjectiveSpec::quadratic_diag(vec![1.0, 10.0, 10.0]).unwrap();
        assert_eq!(quadratic_q_exact(&s).unwrap(), (21.0, 402.0));
        assert_eq!(
            quadratic_q_exact(&ObjectiveSpec::sphere(7).unwrap()).unwrap(),
            (7.0, 14.0)
        );
        let c = ObjectiveSpec::quadratic_diag(vec![3.0]).unwrap();
        assert_eq!(quadratic_q_exact(&c).unwrap(), (3.0, 18.0));
        let p = ObjectiveSpec::perturbed(vec![1.0; 3], 0.5, 1.0).unwrap();
        assert!(quadratic_q_exact(&p).is_err());
    }

    #[test]
    fn q_stats_match_exact_law() {
        for spec in [
            ObjectiveSpec::sphere(10).unwrap(),
            hessian_family(HessianFamily::H1, 3, 1).unwrap(),
        ] {
            let st = state(vec![1.0; spec.dim()], 0.2);
            let qs = estimate_q_stats(&spec, &st, 1_000_000, 5).unwrap();
            let (mean, var) = quadratic_q_exact(&spec).unwrap();
            assert!((qs.mean_q - mean).abs() < 3.0 * qs.se_mean, "{qs:?}");
            assert!((qs.var_q - var).abs() < 3.0 * qs.se_var, "{qs:?}");
            assert!((qs.kappa - 2.0).abs() < 3.0 * qs.se_kappa(), "{qs:?}");
        }
    }

    #[test]
    fn q_stats_reject_small_n() {
        let s = ObjectiveSpec::sphere(3).unwrap();
        assert!(estimate_q_stats(&s, &state(vec![1.0; 3], 0.1), 999, 0).is_err());
    }

    #[test]
    fn success_probability_examples() {
        let d = 100;
        let s = ObjectiveSpec::sphere(d).unwrap();
        let m = vec![1.0; d];
        let mn = norm(&m);
        let tiny = estimate_success_prob(&s, &state(m.clone(), 1e-8 * mn), 100_000, 1).unwrap();
        assert!((tiny.value - 0.5).abs() < 3.0 * tiny.stderr + 1e-3);
        let huge = estimate_success_prob(&s, &state(m.clone(), 1e3 * mn), 10_000, 1).unwrap();
        assert_eq!(huge.value, 0.0);
        let sb = 2.0 * normal::quantile(0.75).unwrap();
        let sigma = sigma_for_normalized(&s, &m, sb, d as f64).unwrap();
        let p = estimate_success_prob(&s, &state(m, sigma), 200_000, 1).unwrap();
        // Sandwich width at v_std = 2/d, eps = 0.3 covers the deviation.
        assert!((p.value - 0.25).abs() < 0.02 + 3.0 * p.stderr, "{p:?}");
    }

    #[test]
    fn success_probability_decreases_in_sigma() {
        let s = ObjectiveSpec::sphere(10).unwrap();
        let m = vec![1.0; 10];
        let mut last: Option<EstimateWithError> = None;
        for k in 0..10 {
            let sigma = 10f64.powf(-2.0 + 0.3 * k as f64);
            let p = estimate_success_prob(&s, &state(m.clone(), sigma), 50_000, 2).unwrap();
            if let Some(prev) = last {
                assert!(p.value <= prev.value + 3.0 * (p.stderr + prev.stderr));
            }
            last = Some(p);
        }
    }

    #[test]
    fn log_progress_limits() {
        let s = ObjectiveSpec::sphere(10).unwrap();
        let m = vec![1.0; 10];
        let e = estimate_log_progress(&s, &state(m.clone(), 1e-9), 10_000, 3).unwrap();
        assert!(e.value <= 0.0 && e.value > -1e-8);
        let e = estimate_log_progress(&s, &state(m, 0.3), 10_000, 3).unwrap();
        assert!(e.value < 0.0);
    }

    #[test]
    fn lemma_suite_on_sphere() {
        let s = ObjectiveSpec::sphere(10).unwrap();
        let m = vec![0.5; 10];
        let states: Vec<_> = [0.1, 1.0, 10.0]
            .iter()
            .map(|&sb| state(m.clone(), sigma_for_normalized(&s, &m, sb, 10.0).unwrap()))
            .collect();
        let r = check_lemma_suite(&s, &states, 100_000, 4).unwrap();
        assert_eq!(r.checks.len(), 3 * 12);
        assert!(
            r.all_pass(),
            "{:#?}",
            r.checks
                .iter()
                .filter(|c| c.verdict != Verdict::Pass)
                .collect::<Vec<_>>()
        );
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"verdict\":\"pass\""));
    }

    #[test]
    fn check_verdicts() {
        assert_eq!(Check::le("a", 0, 1.0, 2.0, 0.0).verdict, Verdict::Pass);
        assert_eq!(Check::le("a", 0, 2.1, 2.0, 0.1).verdict, Verdict::Pass);
        assert_eq!(Check::le("a", 0, 2.5, 2.0, 0.1).verdict, Verdict::Fail);
        assert_eq!(
            Check::le("a", 0, 2.5, 2.0, f64::NAN).verdict,
            Verdict::Inconclusive
        );
    }

    #[test]
    fn assumption2_sphere_oracle() {
        for (d, expect) in [(1000usize, true), (2, false)] {
            let s = ObjectiveSpec::sphere(d).unwrap();
            let states = sample_states(&s, 4, 9).unwrap();
            let r = check_assumption2(&s, &states, 20_000, 9).unwrap();
            assert_eq!(r.holds, expect, "{r:?}");
            assert_eq!(2.0 / d as f64 <= theory::assumption2_rhs(2.0), expect);
            assert!(r.flags.is_empty());
        }
    }

    #[test]
    fn sampled_states_span_distances() {
        let s = ObjectiveSpec::sphere(16).unwrap();
        let st = sample_states(&s, 32, 1).unwrap();
        assert_eq!(st.len(), 32);
        let r0 = norm(&st[0].m);
        let r1 = norm(&st[31].m);
        assert!((r0 - 4e-3).abs() < 1e-12 && (r1 - 4e3).abs() < 1e-9);
    }

    fn drift_setup(d: usize) -> (ObjectiveSpec, EsParams, TheoryConstants) {
        let spec = ObjectiveSpec::sphere(d).unwrap();
        let params = EsParams::with_target(1.0 / d as f64, 0.3).unwrap();
        let c = build_constants(&TheoryInputs::sphere_limit(d), &params, 0.25, 0.45).unwrap();
        (spec, params, c)
    }

    #[test]
    fn potential_change_obeys_pathwise_bounds() {
        let (spec, params, c) = drift_setup(20);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let log_r = params.log_ratio();
        for _ in 0..2000 {
            let m: Vec<f64> = (0..20).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let sb = 10f64.powf(rng.gen_range(-2.0..2.0));
            let st = state(
                m.clone(),
                sigma_for_normalized(&spec, &m, sb, 20.0).unwrap(),
            );
            let z: Vec<f64> = (0..20)
                .map(|_| rng.sample(rand_distr::StandardNormal))
                .collect();
            let (next, _) = step(&st, &z, &spec, &params).unwrap();
            let dv = theory::potential_value(&next, &spec, &c).unwrap()
                - theory::potential_value(&st, &spec, &c).unwrap();
            let lf = (spec.value(&next.m) / spec.value(&m)).ln();
            assert!(dv <= (1.0 - c.v / 2.0) * lf + c.v * log_r + 1e-12);
            assert!(dv > (1.0 + c.v) * lf - 2.0 * c.v * log_r - 1e-12);
        }
    }

    #[test]
    fn drift_is_negative_in_each_regime() {
        let d = 30;
        let (spec, params, c) = drift_setup(d);
        let m = vec![1.0; d];
        for (sb, regime) in [
            (0.05, Regime::Small),
            (0.7, Regime::Reasonable),
            (6.0, Regime::Large),
        ] {
            let sigma = sigma_for_normalized(&spec, &m, sb, d as f64).unwrap();
            let st = state(m.clone(), sigma);
            let r = estimate_drift(&spec, &st, &params, &c, 20_000, 6).unwrap();
            assert_eq!(r.regime, regime);
            assert!(r.estimate.value + 3.0 * r.estimate.stderr < 0.0, "{r:?}");
            assert!(
                r.estimate.value <= r.bound + 3.0 * r.estimate.stderr,
                "{r:?}"
            );
        }
    }
}
