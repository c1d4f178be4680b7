use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{AlphaRule, EsParams, DEFAULT_F_FLOOR};
use crate::error::{Error, Result};
use crate::objectives::{ObjectiveConfig, PerturbConfig};
use crate::rates::{Series, DEFAULT_WINDOW_FRAC};

/// Iteration budget `base + per_dim * d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetRule {
    pub base: usize,
    pub per_dim: usize,
}

impl Default for BudgetRule {
    fn default() -> Self {
        Self {
            base: 10_000,
            per_dim: 1000,
        }
    }
}

impl BudgetRule {
    pub fn budget(&self, dim: usize) -> usize {
        self.base + self.per_dim * dim
    }
}

/// Which column the plot shows on its y axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotY {
    #[default]
    ScaledRate,
    CrHat,
}

/// Output file names, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outputs {
    #[serde(default = "default_csv")]
    pub csv: String,
    #[serde(default)]
    pub plot: Option<String>,
    #[serde(default)]
    pub plot_y: PlotY,
}

fn default_csv() -> String {
    "results.csv".into()
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            csv: default_csv(),
            plot: Some("rates.svg".into()),
            plot_y: PlotY::ScaledRate,
        }
    }
}

fn default_c() -> f64 {
    1.0
}
fn default_trials() -> usize {
    10
}
fn default_f_floor() -> f64 {
    DEFAULT_F_FLOOR
}
fn default_window_frac() -> f64 {
    DEFAULT_WINDOW_FRAC
}
fn default_rules() -> Vec<AlphaRule> {
    vec![AlphaRule::Const]
}
fn default_kappas() -> Vec<u32> {
    vec![0]
}

/// Grid experiment: every combination of `objectives x dims x kappas x
/// alpha_rules` is run for `trials` seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Objective kinds: `h1`, `h2`, `h3` or `perturbed`.
    pub objectives: Vec<String>,
    pub dims: Vec<usize>,
    #[serde(default = "default_kappas")]
    pub kappas: Vec<u32>,
    #[serde(default = "default_rules")]
    pub alpha_rules: Vec<AlphaRule>,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub budget: BudgetRule,
    #[serde(default = "default_f_floor")]
    pub f_floor: f64,
    #[serde(default = "default_window_frac")]
    pub window_frac: f64,
    #[serde(default)]
    pub series: Series,
    /// Ripple parameters for `perturbed` objectives.
    #[serde(default)]
    pub perturb: Option<PerturbConfig>,
    #[serde(default)]
    pub outputs: Outputs,
}

/// One point of the experiment grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub objective: ObjectiveConfig,
    pub dim: usize,
    pub kappa: u32,
    pub alpha_rule: AlphaRule,
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.objectives.is_empty() || self.dims.is_empty() || self.kappas.is_empty() {
            return Err(Error::invalid("experiment grid is empty"));
        }
        if self.alpha_rules.is_empty() {
            return Err(Error::invalid("no alpha rule given"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if !(self.f_floor > 0.0) {
            return Err(Error::invalid("f_floor must be positive"));
        }
        if !(self.window_frac > 0.0 && self.window_frac < 1.0) {
            return Err(Error::invalid("window_frac must lie in (0, 1)"));
        }
        for cell in self.cells() {
            cell.objective.build()?;
            cell.params(self.c)?;
            if self.budget.budget(cell.dim) == 0 {
                return Err(Error::invalid("budget must be at least 1"));
            }
        }
        Ok(())
    }

    /// Grid cells in canonical order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for kind in &self.objectives {
            for &dim in &self.dims {
                for &kappa in &self.kappas {
                    for &alpha_rule in &self.alpha_rules {
                        let mut objective = ObjectiveConfig {
                            kind: kind.clone(),
                            dim,
                            kappa,
                            transform: None,
                            x_opt: None,
                            perturb: None,
                            base: None,
                        };
                        if kind == "perturbed" {
                            objective.perturb = self.perturb;
                        }
                        out.push(Cell {
                            index: out.len(),
                            objective,
                            dim,
                            kappa,
                            alpha_rule,
                        });
                    }
                }
            }
        }
        out
    }
}

impl Cell {
    pub fn params(&self, c: f64) -> Result<EsParams> {
        EsParams::from_rule(self.alpha_rule, c, self.dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_grid_order() {
        let cfg = ExperimentConfig::from_json(
            r#"{"objectives":["h1","h3"],"dims":[10,100],"kappas":[0,2]}"#,
        )
        .unwrap();
        assert_eq!(cfg.trials, 10);
        assert_eq!(cfg.budget.budget(10), 20_000);
        assert_eq!(cfg.f_floor, 1e-100);
        assert_eq!(cfg.window_frac, 0.9);
        let cells = cfg.cells();
        assert_eq!(cells.len(), 8);
        assert_eq!((cells[1].dim, cells[1].kappa), (10, 2));
        assert_eq!(cells[4].objective.kind, "h3");
        assert!(cells.iter().enumerate().all(|(i, c)| c.index == i));
    }

    #[test]
    fn rejects_bad_configs() {
        for bad in [
            r#"{"objectives":[],"dims":[10]}"#,
            r#"{"objectives":["h1"],"dims":[10],"trials":0}"#,
            r#"{"objectives":["h9"],"dims":[10]}"#,
            r#"{"objectives":["h1"],"dims":[0]}"#,
            r#"{"objectives":["h1"],"dims":[10],"c":-1}"#,
            r#"{"objectives":["h1"],"dims":[10],"window_frac":1.5}"#,
            r#"{"objectives":["h1"],"dims":[10],"bogus":1}"#,
        ] {
            assert!(ExperimentConfig::from_json(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn json_round_trip() {
        let cfg = ExperimentConfig::from_json(
            r#"{"objectives":["perturbed"],"dims":[5],"alpha_rules":["sqrt","dim"],
                "perturb":{"M":0.25,"omega":2.0},"outputs":{"csv":"a.csv","plot":null}}"#,
        )
        .unwrap();
        let back = ExperimentConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.cells()[0].objective.perturb.unwrap().amplitude, 0.25);
    }
}
