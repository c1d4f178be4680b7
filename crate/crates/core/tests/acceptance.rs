//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::process::ExitCode;
use std::time::Instant;

use es_rate::engine::AlphaRule;
use es_rate::engine::EsParams;
use es_rate::harness::experiment::run_experiment;
use es_rate::harness::verify::{assumption2_suite, drift_suite, invariance_suite, lemma_suite};
use es_rate::harness::{ExperimentConfig, ResultTable, SuiteReport};
use es_rate::normal;
use es_rate::rates::lower_rate_bound;
use es_rate::theory::{self, TheoryInputs};

const SEED: u64 = 20_240_601;
const DIMS: [usize; 3] = [10, 30, 100];

// Pinned tolerances.
const SPHERE_RATE_LO: f64 = 0.05;
const SPHERE_RATE_HI: f64 = 0.3;
const TRIAL_SLACK_SE: f64 = 2.0;
const SCALED_LO: f64 = 0.1;
const SCALED_HI: f64 = 2.0;
const ALPHA_RATIO_MAX: f64 = 2.0;
const LEMMA_N: usize = 1_000_000;
const CAP_TOL: f64 = 1e-6;
const ROUND_TRIP_TOL: f64 = 1e-12;
const W_TARGET: f64 = 0.00387;
const W_TOL: f64 = 1e-4;
const DRIFT_N: usize = 100_000;
const ASSUMPTION2_N: usize = 100_000;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn grid(objectives: &[&str], kappas: &[u32], rules: &[AlphaRule], trials: usize) -> ResultTable {
    let cfg = ExperimentConfig {
        objectives: objectives.iter().map(|s| s.to_string()).collect(),
        dims: DIMS.to_vec(),
        kappas: kappas.to_vec(),
        alpha_rules: rules.to_vec(),
        c: 1.0,
        trials,
        base_seed: SEED,
        budget: Default::default(),
        f_floor: es_rate::engine::DEFAULT_F_FLOOR,
        window_frac: 0.9,
        series: Default::default(),
        perturb: None,
        outputs: Default::default(),
    };
    run_experiment(&cfg).expect("experiment config is valid")
}

fn sphere_rate() -> Outcome {
    let t = grid(&["h1"], &[0], &[AlphaRule::Const], 10);
    let mut pass = true;
    let mut parts = Vec::new();
    for d in DIMS {
        let a = t.aggregate_for("h1", d, 0, AlphaRule::Const).unwrap();
        let ok = a.cr_hat >= SPHERE_RATE_LO / d as f64 && a.cr_hat <= SPHERE_RATE_HI / d as f64;
        pass &= ok;
        parts.push(format!("d={d} cr*d={:.4}", a.cr_hat * d as f64));
    }
    let bound_violations = t
        .trials()
        .filter(|r| !(r.cr_hat <= lower_rate_bound(r.d).unwrap() + TRIAL_SLACK_SE * r.stderr))
        .count();
    pass &= bound_violations == 0;
    parts.push(format!("trials above 1/d+2se: {bound_violations}"));
    Outcome {
        pass,
        detail: parts.join(", "),
    }
}

fn trace_scaling() -> Outcome {
    let t = grid(&["h1", "h3"], &[0, 2, 4], &[AlphaRule::Const], 10);
    let h2 = grid(&["h2"], &[0, 2, 3], &[AlphaRule::Const], 10);
    let mut bad = Vec::new();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for r in t.aggregates() {
        lo = lo.min(r.scaled_rate);
        hi = hi.max(r.scaled_rate);
        if !(r.scaled_rate >= SCALED_LO && r.scaled_rate <= SCALED_HI) {
            bad.push(format!(
                "{} d={} k={} -> {:.3}",
                r.objective, r.d, r.kappa, r.scaled_rate
            ));
        }
    }
    for r in h2.aggregates() {
        lo = lo.min(r.scaled_rate);
        if !(r.scaled_rate >= SCALED_LO) {
            bad.push(format!(
                "{} d={} k={} -> {:.3}",
                r.objective, r.d, r.kappa, r.scaled_rate
            ));
        }
    }
    Outcome {
        pass: bad.is_empty(),
        detail: format!(
            "scaled rates in [{lo:.3}, {hi:.3}] over {} cells; out of range: {bad:?}",
            t.aggregates().count() + h2.aggregates().count()
        ),
    }
}

fn alpha_insensitivity() -> Outcome {
    let cfg = ExperimentConfig::from_json(&format!(
        r#"{{"objectives":["h1"],"dims":[30],"kappas":[2],
             "alpha_rules":["const","sqrt","dim"],"trials":10,"base_seed":{SEED}}}"#
    ))
    .unwrap();
    let t = run_experiment(&cfg).unwrap();
    let rates: Vec<f64> = t.aggregates().map(|r| r.cr_hat).collect();
    let max = rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = rates.iter().cloned().fold(f64::INFINITY, f64::min);
    Outcome {
        pass: min > 0.0 && max / min < ALPHA_RATIO_MAX,
        detail: format!(
            "cr_hat const/sqrt/dim = {}, max/min = {:.3}",
            rates
                .iter()
                .map(|r| format!("{r:.3e}"))
                .collect::<Vec<_>>()
                .join("/"),
            max / min
        ),
    }
}

fn suite_outcome(r: SuiteReport) -> Outcome {
    let failing: Vec<String> = r
        .failures()
        .map(|c| {
            format!(
                "{}#{} lhs={:.4e} rhs={:.4e} se={:.2e}",
                c.name, c.state_id, c.lhs, c.rhs, c.stderr
            )
        })
        .collect();
    Outcome {
        pass: r.passed,
        detail: format!(
            "{} checks, {} not passing{}",
            r.checks.len(),
            failing.len(),
            if failing.is_empty() {
                String::new()
            } else {
                format!(": {failing:?}")
            }
        ),
    }
}

fn theory_constants() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;

    let mut cap_err = 0.0f64;
    for i in 1..100 {
        let q = i as f64 / 200.0;
        let cap = 2.0 * normal::quantile(1.0 - q).unwrap();
        cap_err = cap_err
            .max((theory::b_high(q, 0.0).unwrap() - cap).abs())
            .max((theory::b_low(q, 0.0).unwrap() - cap).abs());
    }
    pass &= cap_err <= CAP_TOL;
    parts.push(format!("max |b - 2 Phi^-1(1-q)| = {cap_err:.1e}"));

    let mut rt = 0.0f64;
    for i in 1..1000 {
        let p = i as f64 / 1000.0;
        rt = rt.max((normal::cdf(normal::quantile(p).unwrap()) - p).abs());
    }
    pass &= rt <= ROUND_TRIP_TOL;
    parts.push(format!("quantile round trip {rt:.1e}"));

    let d = 1000;
    let params = EsParams::with_target(1.0 / d as f64, 0.3).unwrap();
    match theory::build_constants(&TheoryInputs::sphere_limit(d), &params, 0.25, 0.45) {
        Ok(c) => {
            let ws = c.w_scaled();
            let ok_w = (ws - W_TARGET).abs() <= W_TOL;
            let ok_rest = c.w > 0.0 && c.s < c.ell && c.v > 0.0 && c.v <= 1.0;
            pass &= ok_w && ok_rest;
            parts.push(format!(
                "w/(L/E_Q) = {ws:.6} (target {W_TARGET} +- {W_TOL}: {}), w>0, s<ell, v in (0,1]: {}",
                if ok_w { "ok" } else { "off" },
                if ok_rest { "ok" } else { "violated" }
            ));
        }
        Err(e) => {
            pass = false;
            parts.push(format!("build_constants failed: {e}"));
        }
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("1 sphere rate", sphere_rate),
        ("2 trace scaling", trace_scaling),
        ("3 alpha insensitivity", alpha_insensitivity),
        ("4 invariance", || {
            suite_outcome(invariance_suite(20, 500, SEED).unwrap())
        }),
        ("5 lemma suite", || {
            suite_outcome(lemma_suite(LEMMA_N, SEED).unwrap())
        }),
        ("6 theory constants", theory_constants),
        ("7 drift negativity", || {
            suite_outcome(drift_suite(DRIFT_N, SEED).unwrap())
        }),
        ("8 assumption 2", || {
            suite_outcome(assumption2_suite(ASSUMPTION2_N, SEED).unwrap())
        }),
    ];
    let only: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.starts_with(o.as_str())) {
            continue;
        }
        let start = Instant::now();
        let o = f();
        let secs = start.elapsed().as_secs_f64();
        println!(
            "criterion {name}: {} ({secs:.1}s) {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("acceptance: {failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    }
}
