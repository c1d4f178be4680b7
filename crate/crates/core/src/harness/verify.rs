use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    check_assumption2, check_lemma_suite, estimate_drift, sample_states, sigma_for_normalized,
    Assumption2Report, Check, Report, Verdict,
};
use crate::engine::{init_default, step, AlphaRule, EsParams, EsState};
use crate::error::{Error, Result};
use crate::objectives::{
    hessian_family, make_composite, norm, HessianFamily, ObjectiveConfig, ObjectiveSpec, Transform,
};
use crate::rng::{derive_seed, fill_normal, stream_rng, STREAM_MUTATIONS};
use crate::theory::{build_constants, Regime, TheoryConstants, TheoryInputs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Invariance,
    Lemmas,
    Assumption2,
    Drift,
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Invariance => "invariance",
            Suite::Lemmas => "lemmas",
            Suite::Assumption2 => "assumption2",
            Suite::Drift => "drift",
        })
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "invariance" => Ok(Suite::Invariance),
            "lemmas" => Ok(Suite::Lemmas),
            "assumption2" => Ok(Suite::Assumption2),
            "drift" => Ok(Suite::Drift),
            _ => Err(Error::invalid(format!("unknown suite '{s}'"))),
        }
    }
}

/// Result of a verification suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: bool,
    pub checks: Vec<Check>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
}

impl SuiteReport {
    fn from_checks(suite: Suite, checks: Vec<Check>, details: serde_json::Value) -> Self {
        let passed = checks.iter().all(|c| c.verdict == Verdict::Pass);
        Self {
            suite,
            passed,
            checks,
            details,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.verdict != Verdict::Pass)
    }
}

pub fn run_suite(suite: Suite, n: usize, seed: u64) -> Result<SuiteReport> {
    match suite {
        Suite::Invariance => invariance_suite(20, 500, seed),
        Suite::Lemmas => lemma_suite(n, seed),
        Suite::Assumption2 => assumption2_suite(n, seed),
        Suite::Drift => drift_suite(n, seed),
    }
}

/// Objectives used by the invariance suite, all in dimension 10.
pub fn invariance_objectives() -> Result<Vec<(String, ObjectiveSpec)>> {
    Ok(vec![
        ("sphere".into(), ObjectiveSpec::sphere(10)?),
        ("h2_k2".into(), hessian_family(HessianFamily::H2, 10, 2)?),
        (
            "perturbed_h1_k1".into(),
            ObjectiveConfig {
                kind: "perturbed".into(),
                dim: 10,
                kappa: 1,
                transform: None,
                x_opt: None,
                perturb: None,
                base: None,
            }
            .build()?,
        ),
    ])
}

/// Count of steps at which two state sequences disagree. Success flags and
/// log step sizes must match exactly; search points must match exactly when
/// `offset` is `None` and up to `tol` after removing `offset` otherwise.
fn mismatches(
    a: &[(EsState, bool)],
    b: &[(EsState, bool)],
    offset: Option<&[f64]>,
    tol: f64,
) -> usize {
    a.iter()
        .zip(b)
        .filter(|((sa, fa), (sb, fb))| {
            if fa != fb || sa.log_sigma.to_bits() != sb.log_sigma.to_bits() {
                return true;
            }
            match offset {
                None => {
                    sa.m.iter()
                        .zip(&sb.m)
                        .any(|(x, y)| x.to_bits() != y.to_bits())
                }
                Some(o) => {
                    sa.m.iter()
                        .zip(&sb.m)
                        .zip(o)
                        .any(|((x, y), o)| ((y - o) - x).abs() > tol)
                }
            }
        })
        .count()
}

fn drive(
    spec: &ObjectiveSpec,
    params: &EsParams,
    init: &EsState,
    zs: &[Vec<f64>],
) -> Result<Vec<(EsState, bool)>> {
    let mut out = Vec::with_capacity(zs.len());
    let mut s = init.clone();
    for z in zs {
        let (next, ok) = step(&s, z, spec, params)?;
        out.push((next.clone(), ok));
        s = next;
    }
    Ok(out)
}

/// State sequences under every monotone transform and under translation,
/// compared step by step against the base objective with common mutations.
pub fn invariance_suite(seeds: usize, steps: usize, base_seed: u64) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    let mut overflowed = Vec::new();
    for (oi, (name, base)) in invariance_objectives()?.into_iter().enumerate() {
        let d = base.dim();
        let params = EsParams::from_rule(AlphaRule::Const, 1.0, d)?;
        for k in 0..seeds {
            let seed = derive_seed(base_seed, oi as u64, k as u64);
            let init = init_default(&base, seed)?;
            let mut rng = stream_rng(seed, STREAM_MUTATIONS);
            let zs: Vec<Vec<f64>> = (0..steps)
                .map(|_| {
                    let mut z = vec![0.0; d];
                    fill_normal(&mut rng, &mut z);
                    z
                })
                .collect();
            let reference = drive(&base, &params, &init, &zs)?;

            let mut shift = vec![0.0; d];
            fill_normal(&mut stream_rng(seed, 7), &mut shift);
            shift.iter_mut().for_each(|v| *v *= 5.0);
            let tol = 1e-10 * (1.0 + norm(&shift));
            let moved = EsState {
                m: init.m.iter().zip(&shift).map(|(m, o)| m + o).collect(),
                log_sigma: init.log_sigma,
            };

            let f0 = base.eval(&init.m)?;
            for t in Transform::all() {
                // A start whose transformed value overflows leaves ties at infinity.
                if !t.apply(f0).is_finite() {
                    overflowed.push(format!("{name}/{t}#{k}"));
                    continue;
                }
                let comp = make_composite(base.clone(), t, vec![0.0; d])?;
                let seq = drive(&comp, &params, &init, &zs)?;
                let bad = mismatches(&reference, &seq, None, 0.0);
                checks.push(Check::le(format!("{name}/{t}"), k, bad as f64, 0.0, 0.0));

                let comp = make_composite(base.clone(), t, shift.clone())?;
                let seq = drive(&comp, &params, &moved, &zs)?;
                let bad = mismatches(&reference, &seq, Some(&shift), tol);
                checks.push(Check::le(
                    format!("{name}/{t}/translated"),
                    k,
                    bad as f64,
                    0.0,
                    0.0,
                ));
            }
        }
    }
    let details = serde_json::json!({ "skipped_overflow": overflowed });
    Ok(SuiteReport::from_checks(Suite::Invariance, checks, details))
}

/// Normalised step sizes of the lemma suite, log-spaced over [0.1, 10].
pub const LEMMA_SIGMA_BARS: [f64; 5] = [
    0.1,
    0.316_227_766_016_837_94,
    1.0,
    3.162_277_660_168_379_5,
    10.0,
];

pub fn lemma_objectives() -> Result<Vec<(String, ObjectiveSpec)>> {
    Ok(vec![
        ("sphere_d10".into(), ObjectiveSpec::sphere(10)?),
        ("sphere_d100".into(), ObjectiveSpec::sphere(100)?),
        (
            "h1_d10_k1".into(),
            hessian_family(HessianFamily::H1, 10, 1)?,
        ),
    ])
}

pub fn lemma_suite(n: usize, seed: u64) -> Result<SuiteReport> {
    let mut all = Report::default();
    for (oi, (name, spec)) in lemma_objectives()?.into_iter().enumerate() {
        let m = init_default(&spec, derive_seed(seed, 100, oi as u64))?.m;
        let eq = spec.trace_hessian().unwrap_or(spec.dim() as f64 * spec.u());
        let states = LEMMA_SIGMA_BARS
            .iter()
            .map(|&sb| EsState::new(m.clone(), sigma_for_normalized(&spec, &m, sb, eq)?))
            .collect::<Result<Vec<_>>>()?;
        let mut r = check_lemma_suite(&spec, &states, n, derive_seed(seed, 101, oi as u64))?;
        for c in &mut r.checks {
            c.name = format!("{name}/{}", c.name);
        }
        all.extend(r);
    }
    Ok(SuiteReport::from_checks(
        Suite::Lemmas,
        all.checks,
        serde_json::Value::Null,
    ))
}

/// States per objective in the relative-variance suite.
pub const ASSUMPTION2_STATES: usize = 8;

/// Relative-variance check on the sphere in dimensions 1000 and 2, compared
/// with the closed form `V_std = 2/d`, `kappa = 2`.
pub fn assumption2_suite(n: usize, seed: u64) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    let mut details = serde_json::Map::new();
    for (i, d) in [1000usize, 2].into_iter().enumerate() {
        let spec = ObjectiveSpec::sphere(d)?;
        let states = sample_states(&spec, ASSUMPTION2_STATES, derive_seed(seed, 200, i as u64))?;
        let r: Assumption2Report =
            check_assumption2(&spec, &states, n, derive_seed(seed, 201, i as u64))?;
        let oracle = 2.0 / (d as f64) < crate::theory::assumption2_rhs(2.0);
        checks.push(Check::le(
            format!("sphere_d{d}/oracle_agreement"),
            i,
            if r.holds == oracle { 0.0 } else { 1.0 },
            0.0,
            0.0,
        ));
        checks.push(Check::le(
            format!("sphere_d{d}/no_flags"),
            i,
            r.flags.len() as f64,
            0.0,
            0.0,
        ));
        details.insert(format!("sphere_d{d}"), serde_json::to_value(&r)?);
    }
    Ok(SuiteReport::from_checks(
        Suite::Assumption2,
        checks,
        details.into(),
    ))
}

/// Dimension and target probability of the drift suite.
pub const DRIFT_DIM: usize = 100;
pub const DRIFT_P_TARGET: f64 = 0.3;
/// `(q_low, q_high)` of the large-dimension sphere constants.
pub const DRIFT_Q: (f64, f64) = (0.25, 0.45);
/// Normalised step sizes planted in the small, reasonable and large regimes.
pub const DRIFT_SIGMA_BARS: [(f64, Regime); 3] = [
    (0.1, Regime::Small),
    (0.7, Regime::Reasonable),
    (5.0, Regime::Large),
];

/// Step-size factors and potential constants of the drift suite.
pub fn drift_setup(d: usize) -> Result<(ObjectiveSpec, EsParams, TheoryConstants)> {
    let spec = ObjectiveSpec::sphere(d)?;
    let params = EsParams::with_target(1.0 / d as f64, DRIFT_P_TARGET)?;
    let c = build_constants(
        &TheoryInputs::sphere_limit(d),
        &params,
        DRIFT_Q.0,
        DRIFT_Q.1,
    )?;
    Ok((spec, params, c))
}

pub fn drift_suite(n: usize, seed: u64) -> Result<SuiteReport> {
    let (spec, params, c) = drift_setup(DRIFT_DIM)?;
    let strict = build_constants(
        &TheoryInputs::quadratic(&spec)?,
        &params,
        DRIFT_Q.0,
        DRIFT_Q.1,
    );
    let m = init_default(&spec, derive_seed(seed, 300, 0))?.m;
    let mut checks = Vec::new();
    let mut estimates = Vec::new();
    for (i, (sb, regime)) in DRIFT_SIGMA_BARS.into_iter().enumerate() {
        let sigma = sigma_for_normalized(&spec, &m, sb, DRIFT_DIM as f64)?;
        let st = EsState::new(m.clone(), sigma)?;
        let r = estimate_drift(&spec, &st, &params, &c, n, derive_seed(seed, 301, i as u64))?;
        let tag = format!("{regime:?}").to_lowercase();
        checks.push(Check::le(
            format!("{tag}/regime"),
            i,
            if r.regime == regime { 0.0 } else { 1.0 },
            0.0,
            0.0,
        ));
        checks.push(Check::le(
            format!("{tag}/negative_with_margin"),
            i,
            r.estimate.value + 3.0 * r.estimate.stderr,
            0.0,
            0.0,
        ));
        checks.push(Check::le(
            format!("{tag}/regime_bound"),
            i,
            r.estimate.value,
            r.bound,
            r.estimate.stderr,
        ));
        estimates.push(r);
    }
    let details = serde_json::json!({
        "constants": c,
        "estimates": estimates,
        "exact_dimension_constants": match strict {
            Ok(k) => serde_json::to_value(k)?,
            Err(e) => serde_json::Value::String(e.to_string()),
        },
    });
    Ok(SuiteReport::from_checks(Suite::Drift, checks, details))
}
