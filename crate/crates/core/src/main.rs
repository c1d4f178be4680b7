use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use es_rate::engine::{init_default, run, AlphaRule, EsParams, DEFAULT_F_FLOOR};
use es_rate::harness::{self, ExperimentConfig, Suite};
use es_rate::objectives::ObjectiveConfig;
use es_rate::theory::{self, BUpperOptions, TheoryInputs};
use es_rate::Result;

#[derive(Parser)]
#[command(
    name = "es-rate",
    version,
    about = "(1+1)-ES rate experiments and bound verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single trajectory and write it as CSV.
    Run(RunArgs),
    /// Run an experiment grid from a JSON config.
    Experiment(ExperimentArgs),
    /// Compute potential-function constants and print them as JSON.
    Bounds(BoundsArgs),
    /// Run a verification suite and print its JSON report.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct RunArgs {
    /// h1, h2, h3 or perturbed
    #[arg(long, default_value = "h1")]
    objective: String,
    #[arg(long)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    kappa: u32,
    #[arg(long, default_value = "const")]
    alpha_rule: AlphaRule,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Defaults to 10000 + 1000 d.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_F_FLOOR)]
    f_floor: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep every n-th row.
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// Output CSV; stdout when omitted. A `.meta.json` sidecar is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    dim: usize,
    #[arg(long = "L", default_value_t = 1.0)]
    l: f64,
    #[arg(long = "U", default_value_t = 1.0)]
    u: f64,
    #[arg(long, default_value_t = 0.0)]
    v_std: f64,
    #[arg(long, default_value_t = 2.0)]
    kappa_inf: f64,
    /// Supremum of E[Q]; defaults to d U.
    #[arg(long)]
    e_q: Option<f64>,
    #[arg(long, default_value = "dim")]
    alpha_rule: AlphaRule,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Choose alpha_down to hit this target success probability instead of
    /// alpha_up^(-1/4).
    #[arg(long)]
    p_target: Option<f64>,
    /// Omit both to maximise the rate bound over (q_low, q_high).
    #[arg(long, requires = "q_high")]
    q_low: Option<f64>,
    #[arg(long, requires = "q_low")]
    q_high: Option<f64>,
    /// Write the rate-bound search grid as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    suite: Suite,
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

enum Outcome {
    Ok,
    VerificationFailed,
}

fn cmd_run(a: RunArgs) -> Result<Outcome> {
    let spec = ObjectiveConfig {
        kind: a.objective,
        dim: a.dim,
        kappa: a.kappa,
        transform: None,
        x_opt: None,
        perturb: None,
        base: None,
    }
    .build()?;
    let params = EsParams::from_rule(a.alpha_rule, a.c, a.dim)?;
    let budget = a
        .budget
        .unwrap_or_else(|| harness::BudgetRule::default().budget(a.dim));
    let init = init_default(&spec, a.seed)?;
    let traj = run(&spec, &params, &init, budget, a.f_floor, a.seed)?;
    match a.out {
        Some(path) => {
            let meta = traj.write_csv(
                std::io::BufWriter::new(std::fs::File::create(&path)?),
                a.stride,
            )?;
            let mut side = path.into_os_string();
            side.push(".meta.json");
            std::fs::write(side, serde_json::to_string_pretty(&meta)?)?;
        }
        None => {
            traj.write_csv(std::io::stdout().lock(), a.stride)?;
        }
    }
    Ok(Outcome::Ok)
}

fn cmd_experiment(a: ExperimentArgs) -> Result<Outcome> {
    let cfg = ExperimentConfig::load(&a.config)?;
    std::fs::create_dir_all(&a.out_dir)?;
    let table = harness::run_experiment(&cfg)?;
    harness::emit_csv(&table, &a.out_dir.join(&cfg.outputs.csv))?;
    if let Some(plot) = &cfg.outputs.plot {
        if let Err(e) = harness::emit_plot(&table, &a.out_dir.join(plot), cfg.outputs.plot_y) {
            eprintln!("plot skipped: {e}");
        }
    }
    let mut out = std::io::stdout().lock();
    for r in table.aggregates() {
        writeln!(
            out,
            "{} d={} kappa={} {}: cr_hat={:.4e} (se {:.2e}) scaled={:.4}",
            r.objective, r.d, r.kappa, r.alpha_rule, r.cr_hat, r.stderr, r.scaled_rate
        )?;
    }
    Ok(Outcome::Ok)
}

fn cmd_bounds(a: BoundsArgs) -> Result<Outcome> {
    let inputs = TheoryInputs {
        dim: a.dim,
        l: a.l,
        u: a.u,
        v_std_sup: a.v_std,
        kappa_inf: a.kappa_inf,
        e_q: a.e_q.unwrap_or(a.dim as f64 * a.u),
    };
    let base = EsParams::from_rule(a.alpha_rule, a.c, a.dim)?;
    let params = match a.p_target {
        Some(p) => EsParams::with_target(base.log_up(), p)?,
        None => base,
    };
    let constants = match (a.q_low, a.q_high) {
        (Some(ql), Some(qh)) => theory::build_constants(&inputs, &params, ql, qh)?,
        _ => {
            let r = theory::b_upper(&inputs, &params, BUpperOptions::default())?;
            if let Some(path) = &a.trace {
                r.write_trace_csv(std::io::BufWriter::new(std::fs::File::create(path)?))?;
            }
            r.constants
        }
    };
    let mut json = serde_json::to_value(constants)?;
    json["w_over_l_per_e_q"] = constants.w_scaled().into();
    writeln!(
        std::io::stdout().lock(),
        "{}",
        serde_json::to_string_pretty(&json)?
    )?;
    Ok(Outcome::Ok)
}

fn cmd_verify(a: VerifyArgs) -> Result<Outcome> {
    let report = harness::run_suite(a.suite, a.n, a.seed)?;
    writeln!(
        std::io::stdout().lock(),
        "{}",
        serde_json::to_string_pretty(&report)?
    )?;
    Ok(if report.passed {
        Outcome::Ok
    } else {
        Outcome::VerificationFailed
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::VerificationFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
