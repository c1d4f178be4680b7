//! Least-squares convergence-rate estimation from trajectories.

use serde::{Deserialize, Serialize};

use crate::engine::Trajectory;
use crate::error::{Error, Result};
use crate::objectives::ObjectiveSpec;

/// Fewest points a regression window may contain.
pub const MIN_WINDOW_POINTS: usize = 10;
/// Default start of the regression window as a fraction of `T`.
pub const DEFAULT_WINDOW_FRAC: f64 = 0.9;

/// Which log series is regressed against `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Series {
    /// `log ||m_t - x_opt||`.
    #[default]
    LogDist,
    /// `(1/2) log f(m_t)`, comparable with `LogDist` on quadratics.
    LogFHalf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub cr_hat: f64,
    pub stderr: f64,
    pub window: (usize, usize),
    pub series: Series,
    pub trials_aggregated: usize,
}

/// Sufficient statistics of a simple linear regression.
#[derive(Debug, Clone, Copy)]
struct Fit {
    n: usize,
    sxx: f64,
    sxy: f64,
    ss_res: f64,
}

impl Fit {
    fn new(ts: &[f64], ys: &[f64]) -> Self {
        let n = ts.len() as f64;
        let tm = ts.iter().sum::<f64>() / n;
        let ym = ys.iter().sum::<f64>() / n;
        let (mut sxx, mut sxy) = (0.0, 0.0);
        for (t, y) in ts.iter().zip(ys) {
            sxx += (t - tm) * (t - tm);
            sxy += (t - tm) * (y - ym);
        }
        let b = sxy / sxx;
        let ss_res = ts
            .iter()
            .zip(ys)
            .map(|(t, y)| (y - ym - b * (t - tm)).powi(2))
            .sum();
        Self {
            n: ts.len(),
            sxx,
            sxy,
            ss_res,
        }
    }

    fn slope(&self) -> f64 {
        self.sxy / self.sxx
    }

    fn slope_stderr(&self) -> f64 {
        (self.ss_res / (self.n as f64 - 2.0) / self.sxx).sqrt()
    }
}

/// Least-squares slope of `ys` against `ts` and its standard error.
pub fn ols_slope(ts: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if ts.len() != ys.len() || ts.len() < 3 {
        return Err(Error::invalid("regression needs at least 3 paired points"));
    }
    let f = Fit::new(ts, ys);
    Ok((f.slope(), f.slope_stderr()))
}

/// Regression window `[floor(frac T) + 1, T]`, widened to the last
/// [`MIN_WINDOW_POINTS`] iterations when a short run leaves fewer points.
pub fn window(t_final: usize, window_frac: f64) -> Result<(usize, usize)> {
    if !(window_frac > 0.0 && window_frac < 1.0) {
        return Err(Error::invalid(format!(
            "window fraction must lie in (0, 1), got {window_frac}"
        )));
    }
    let start = (window_frac * t_final as f64).floor() as usize + 1;
    if t_final + 1 >= start + MIN_WINDOW_POINTS {
        return Ok((start, t_final));
    }
    if t_final + 1 >= MIN_WINDOW_POINTS {
        return Ok((t_final + 1 - MIN_WINDOW_POINTS, t_final));
    }
    Err(Error::unsupported(format!(
        "trajectory of {t_final} iterations is too short for a {MIN_WINDOW_POINTS}-point window"
    )))
}

fn series_values(
    traj: &Trajectory,
    series: Series,
    (a, b): (usize, usize),
) -> Result<(Vec<f64>, Vec<f64>)> {
    let recs = &traj.records;
    if recs.len() != traj.t_final + 1 {
        return Err(Error::invalid(
            "trajectory records must cover every iteration",
        ));
    }
    let ts = (a..=b).map(|t| t as f64).collect();
    let ys: Vec<f64> = (a..=b)
        .map(|t| match series {
            Series::LogDist => recs[t].log_dist,
            Series::LogFHalf => 0.5 * recs[t].log_f,
        })
        .collect();
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::invalid(
            "trajectory reaches the optimum inside the window",
        ));
    }
    Ok((ts, ys))
}

fn fit_trajectory(
    traj: &Trajectory,
    window_frac: f64,
    series: Series,
) -> Result<(Fit, (usize, usize))> {
    let w = window(traj.t_final, window_frac)?;
    let (ts, ys) = series_values(traj, series, w)?;
    Ok((Fit::new(&ts, &ys), w))
}

/// Ordinary least squares of the chosen series against `t` over the window;
/// the rate is minus the slope.
pub fn estimate_cr(traj: &Trajectory, window_frac: f64, series: Series) -> Result<RateEstimate> {
    let (fit, window) = fit_trajectory(traj, window_frac, series)?;
    Ok(RateEstimate {
        cr_hat: -fit.slope(),
        stderr: fit.slope_stderr(),
        window,
        series,
        trials_aggregated: 1,
    })
}

/// Two-point rate `(log d_{t0} - log d_T) / (T - t0)` with `t0 = floor(frac T)`.
pub fn estimate_cr_two_point(
    traj: &Trajectory,
    window_frac: f64,
    series: Series,
) -> Result<RateEstimate> {
    let (a, b) = window(traj.t_final, window_frac)?;
    let t0 = a - 1;
    let (_, ys) = series_values(traj, series, (t0, b))?;
    Ok(RateEstimate {
        cr_hat: (ys[0] - ys[ys.len() - 1]) / (b - t0) as f64,
        stderr: f64::NAN,
        window: (t0, b),
        series,
        trials_aggregated: 1,
    })
}

/// Slope of the stacked regression with one intercept per trial.
pub fn estimate_cr_pooled(
    trajs: &[Trajectory],
    window_frac: f64,
    series: Series,
) -> Result<RateEstimate> {
    if trajs.is_empty() {
        return Err(Error::invalid("no trajectories to pool"));
    }
    let mut fits = Vec::with_capacity(trajs.len());
    let mut window = (usize::MAX, 0);
    for t in trajs {
        let (f, w) = fit_trajectory(t, window_frac, series)?;
        fits.push(f);
        window = (window.0.min(w.0), window.1.max(w.1));
    }
    let sxx: f64 = fits.iter().map(|f| f.sxx).sum();
    let sxy: f64 = fits.iter().map(|f| f.sxy).sum();
    let slope = sxy / sxx;
    // Residuals about the common slope, one intercept per trial.
    let ss_res: f64 = fits
        .iter()
        .map(|f| f.ss_res + (f.slope() - slope).powi(2) * f.sxx)
        .sum();
    let n: usize = fits.iter().map(|f| f.n).sum();
    let dof = (n - trajs.len() - 1) as f64;
    Ok(RateEstimate {
        cr_hat: -slope,
        stderr: (ss_res / dof / sxx).sqrt(),
        window,
        series,
        trials_aggregated: trajs.len(),
    })
}

/// Mean of per-trial rates with the standard error of the mean.
pub fn aggregate(estimates: &[RateEstimate]) -> Result<RateEstimate> {
    let (mean, stderr) = mean_stderr(&estimates.iter().map(|e| e.cr_hat).collect::<Vec<_>>())?;
    let window = estimates.iter().fold((usize::MAX, 0), |w, e| {
        (w.0.min(e.window.0), w.1.max(e.window.1))
    });
    Ok(RateEstimate {
        cr_hat: mean,
        stderr,
        window,
        series: estimates[0].series,
        trials_aggregated: estimates.len(),
    })
}

/// Sample mean and standard error of the mean (0 for a single value).
pub fn mean_stderr(xs: &[f64]) -> Result<(f64, f64)> {
    if xs.is_empty() {
        return Err(Error::invalid("nothing to aggregate"));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Largest rate any run can attain in dimension `d`.
pub fn lower_rate_bound(d: usize) -> Result<f64> {
    if d == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    Ok(1.0 / d as f64)
}

/// `cr_hat Tr(H) / L` on quadratics.
pub fn scaled_rate(cr_hat: f64, spec: &ObjectiveSpec) -> Result<f64> {
    let base = spec.base();
    match base.trace_hessian() {
        Some(tr) => Ok(cr_hat * tr / base.l()),
        None => Err(Error::unsupported(
            "trace scaling needs a quadratic objective; use scaled_rate_dim_u",
        )),
    }
}

/// `cr_hat d U / L`, defined for every objective.
pub fn scaled_rate_dim_u(cr_hat: f64, spec: &ObjectiveSpec) -> f64 {
    let base = spec.base();
    cr_hat * base.dim() as f64 * base.u() / base.l()
}
