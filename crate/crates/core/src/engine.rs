//! The (1+1)-ES with success-based step-size adaptation as an exact Markov
//! chain on `(m, log sigma)`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::objectives::{norm, ObjectiveSpec};
use crate::rng::{fill_normal, stream_rng, EsRng, STREAM_INIT, STREAM_MUTATIONS};

/// Default objective floor at which a run stops.
pub const DEFAULT_F_FLOOR: f64 = 1e-100;

/// Step-size change factors. The logarithms are the primary representation
/// so every update adds exactly `log_up` or `log_down` to `log sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EsParams {
    log_up: f64,
    log_down: f64,
}

impl EsParams {
    pub fn new(alpha_up: f64, alpha_down: f64) -> Result<Self> {
        if !(alpha_up > 1.0 && alpha_up.is_finite()) {
            return Err(Error::invalid(format!(
                "alpha_up must be > 1, got {alpha_up}"
            )));
        }
        if !(alpha_down > 0.0 && alpha_down < 1.0) {
            return Err(Error::invalid(format!(
                "alpha_down must lie in (0, 1), got {alpha_down}"
            )));
        }
        Self::from_logs(alpha_up.ln(), alpha_down.ln())
    }

    /// Build from `log alpha_up > 0` and `log alpha_down < 0`.
    pub fn from_logs(log_up: f64, log_down: f64) -> Result<Self> {
        if !(log_up > 0.0 && log_up.is_finite() && log_down < 0.0 && log_down.is_finite()) {
            return Err(Error::invalid(format!(
                "need log alpha_up > 0 and log alpha_down < 0, got {log_up}, {log_down}"
            )));
        }
        Ok(Self { log_up, log_down })
    }

    /// `alpha_up = exp(c)`, `exp(c/sqrt(d))` or `exp(c/d)` with
    /// `alpha_down = alpha_up^(-1/4)`.
    pub fn from_rule(rule: AlphaRule, c: f64, dim: usize) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::invalid(format!(
                "alpha constant c must be > 0, got {c}"
            )));
        }
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        let log_up = match rule {
            AlphaRule::Const => c,
            AlphaRule::Sqrt => c / (dim as f64).sqrt(),
            AlphaRule::Dim => c / dim as f64,
        };
        Self::from_logs(log_up, -0.25 * log_up)
    }

    /// Keep `alpha_up` and pick `alpha_down` so the target success
    /// probability equals `p_target`.
    pub fn with_target(log_up: f64, p_target: f64) -> Result<Self> {
        if !(p_target > 0.0 && p_target < 1.0) {
            return Err(Error::invalid(format!(
                "p_target must lie in (0, 1), got {p_target}"
            )));
        }
        Self::from_logs(log_up, -p_target * log_up / (1.0 - p_target))
    }

    pub fn alpha_up(&self) -> f64 {
        self.log_up.exp()
    }

    pub fn alpha_down(&self) -> f64 {
        self.log_down.exp()
    }

    pub fn log_up(&self) -> f64 {
        self.log_up
    }

    pub fn log_down(&self) -> f64 {
        self.log_down
    }

    /// `log(alpha_up / alpha_down)`.
    pub fn log_ratio(&self) -> f64 {
        self.log_up - self.log_down
    }

    /// Success probability at which `log sigma` has zero expected change.
    pub fn p_target(&self) -> f64 {
        -self.log_down / self.log_ratio()
    }
}

/// Dimension scaling of `log alpha_up`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaRule {
    Const,
    Sqrt,
    Dim,
}

impl fmt::Display for AlphaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlphaRule::Const => "const",
            AlphaRule::Sqrt => "sqrt",
            AlphaRule::Dim => "dim",
        })
    }
}

impl FromStr for AlphaRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "const" => Ok(AlphaRule::Const),
            "sqrt" => Ok(AlphaRule::Sqrt),
            "dim" => Ok(AlphaRule::Dim),
            _ => Err(Error::invalid(format!("unknown alpha rule '{s}'"))),
        }
    }
}

/// Chain state: search point and log step size.
#[derive(Debug, Clone, PartialEq)]
pub struct EsState {
    pub m: Vec<f64>,
    pub log_sigma: f64,
}

impl EsState {
    pub fn new(m: Vec<f64>, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!(
                "sigma must be positive and finite, got {sigma}"
            )));
        }
        Ok(Self {
            m,
            log_sigma: sigma.ln(),
        })
    }

    pub fn sigma(&self) -> f64 {
        self.log_sigma.exp()
    }
}

/// One transition of the chain driven by the mutation vector `z`.
///
/// Accepts on ties, so `z = 0` always counts as a success.
pub fn step(
    state: &EsState,
    z: &[f64],
    spec: &ObjectiveSpec,
    params: &EsParams,
) -> Result<(EsState, bool)> {
    check_dim(spec.dim(), state.m.len())?;
    check_dim(spec.dim(), z.len())?;
    let sigma = state.sigma();
    let x: Vec<f64> = state.m.iter().zip(z).map(|(m, z)| m + sigma * z).collect();
    if spec.value(&x) <= spec.value(&state.m) {
        Ok((
            EsState {
                m: x,
                log_sigma: state.log_sigma + params.log_up,
            },
            true,
        ))
    } else {
        Ok((
            EsState {
                m: state.m.clone(),
                log_sigma: state.log_sigma + params.log_down,
            },
            false,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Budget,
    FFloor,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Budget => "budget",
            StopReason::FFloor => "f_floor",
        })
    }
}

/// State summary at iteration `t`. `success` reports the outcome of the
/// transition into `t`; it is `false` for `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub t: usize,
    pub log_dist: f64,
    pub log_f: f64,
    pub log_sigma: f64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<Record>,
    pub t_final: usize,
    pub stop_reason: StopReason,
    pub seed: u64,
    pub final_state: EsState,
}

/// Sidecar metadata for an exported trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub seed: u64,
    pub t_final: usize,
    pub stop_reason: StopReason,
    pub stride: usize,
    pub rows: usize,
}

pub const TRAJECTORY_CSV_HEADER: &str = "t,log_dist,log_f,log_sigma,success";

impl Trajectory {
    /// Write the CSV export, keeping every `stride`-th row plus the last one.
    pub fn write_csv<W: Write>(&self, mut w: W, stride: usize) -> Result<TrajectoryMeta> {
        let stride = stride.max(1);
        writeln!(w, "{TRAJECTORY_CSV_HEADER}")?;
        let mut rows = 0;
        let last = self.records.len().saturating_sub(1);
        for (i, r) in self.records.iter().enumerate() {
            if i % stride == 0 || i == last {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    r.t,
                    r.log_dist,
                    r.log_f,
                    r.log_sigma,
                    u8::from(r.success)
                )?;
                rows += 1;
            }
        }
        Ok(TrajectoryMeta {
            seed: self.seed,
            t_final: self.t_final,
            stop_reason: self.stop_reason,
            stride,
            rows,
        })
    }

    pub fn to_csv_string(&self, stride: usize) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, stride)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv is ascii")
    }
}

/// Run the chain from `init` for at most `budget` transitions, drawing the
/// mutations from the stream determined by `seed`. Stops early once the
/// canonical objective value falls below `f_floor`.
pub fn run(
    spec: &ObjectiveSpec,
    params: &EsParams,
    init: &EsState,
    budget: usize,
    f_floor: f64,
    seed: u64,
) -> Result<Trajectory> {
    let mut rng = stream_rng(seed, STREAM_MUTATIONS);
    run_with_rng(spec, params, init, budget, f_floor, seed, &mut rng)
}

fn run_with_rng(
    spec: &ObjectiveSpec,
    params: &EsParams,
    init: &EsState,
    budget: usize,
    f_floor: f64,
    seed: u64,
    rng: &mut EsRng,
) -> Result<Trajectory> {
    let d = spec.dim();
    check_dim(d, init.m.len())?;
    if budget == 0 {
        return Err(Error::invalid("budget must be at least 1"));
    }
    if !(f_floor > 0.0) {
        return Err(Error::invalid("f_floor must be positive"));
    }
    if !init.log_sigma.is_finite() {
        return Err(Error::invalid("initial log sigma must be finite"));
    }
    if spec.dist_to_opt(&init.m) == 0.0 {
        return Err(Error::invalid("initial point coincides with the optimum"));
    }

    let composite = spec.is_composite();
    let mut m = init.m.clone();
    let mut log_sigma = init.log_sigma;
    let mut fm = spec.value(&m);
    let mut fm_canon = spec.canonical_value(&m);
    let mut z = vec![0.0; d];
    let mut x = vec![0.0; d];

    let mut records = Vec::with_capacity(budget.min(1 << 22) + 1);
    let record = |t, m: &[f64], f_canon: f64, log_sigma, success| Record {
        t,
        log_dist: spec.dist_to_opt(m).ln(),
        log_f: f_canon.ln(),
        log_sigma,
        success,
    };
    records.push(record(0, &m, fm_canon, log_sigma, false));

    let mut t = 0;
    let mut stop_reason = StopReason::Budget;
    if fm_canon < f_floor {
        stop_reason = StopReason::FFloor;
    }
    while stop_reason == StopReason::Budget && t < budget {
        fill_normal(rng, &mut z);
        let sigma = log_sigma.exp();
        for i in 0..d {
            x[i] = m[i] + sigma * z[i];
        }
        let fx = spec.value(&x);
        let success = fx <= fm;
        if success {
            std::mem::swap(&mut m, &mut x);
            fm = fx;
            fm_canon = if composite {
                spec.canonical_value(&m)
            } else {
                fx
            };
            log_sigma += params.log_up;
        } else {
            log_sigma += params.log_down;
        }
        t += 1;
        records.push(record(t, &m, fm_canon, log_sigma, success));
        if fm_canon < f_floor {
            stop_reason = StopReason::FFloor;
        }
    }

    Ok(Trajectory {
        records,
        t_final: t,
        stop_reason,
        seed,
        final_state: EsState { m, log_sigma },
    })
}

/// Initial step size rule: `||grad f(m0)|| / Tr(H)` on quadratics and
/// `||grad f(m0)|| / (d U)` otherwise.
pub fn init_from_point(spec: &ObjectiveSpec, m0: Vec<f64>) -> Result<EsState> {
    check_dim(spec.dim(), m0.len())?;
    let g = spec.canonical_grad(&m0)?;
    let gnorm = norm(&g);
    if gnorm == 0.0 {
        return Err(Error::invalid("initial point coincides with the optimum"));
    }
    let base = spec.base();
    let divisor = match base.trace_hessian() {
        Some(tr) => tr,
        None => base.dim() as f64 * base.u(),
    };
    EsState::new(m0, gnorm / divisor)
}

/// Draw `m0 ~ N(x_opt, I)` from the seed's initialisation stream and apply
/// the initial step-size rule.
pub fn init_default(spec: &ObjectiveSpec, seed: u64) -> Result<EsState> {
    let mut rng = stream_rng(seed, STREAM_INIT);
    let x_opt = spec.optimum();
    let mut z = vec![0.0; spec.dim()];
    loop {
        fill_normal(&mut rng, &mut z);
        if z.iter().any(|&v| v != 0.0) {
            break;
        }
    }
    let m0 = z.iter().zip(&x_opt).map(|(z, o)| z + o).collect();
    init_from_point(spec, m0)
}
