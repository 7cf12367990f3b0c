//! JSON scenario files.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use hysim_core::bargaining::{BargainingOptions, Pairing};
use hysim_core::externality::{LinearParams, PowerParams, ANALYTIC_TOL, TABLE_TOL};
use hysim_core::infovalue::{self, CountMode, InterferenceModel, Utility};
use hysim_core::market::SolveOptions;
use hysim_core::pricing::MscgOptions;
use hysim_core::{validate_model, ExternalityModel};

use crate::run;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub externality: ExternalityConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub bargaining: BargainingConfig,
    #[serde(default)]
    pub third_party: Option<ThirdPartyConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub mc: Option<McConfig>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyName {
    Power,
    Linear,
    Constant,
    Table,
    Montecarlo,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalityConfig {
    pub family: FamilyName,
    #[serde(default)]
    pub params: serde_json::Value,
    #[serde(rename = "R_L", default)]
    pub r_l: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PowerConfig {
    alpha1: f64,
    beta1: f64,
    gamma1: f64,
    alpha2: f64,
    beta2: f64,
    gamma2: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearConfig {
    alpha1: f64,
    beta1: f64,
    beta2: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantConfig {
    f: f64,
    g: f64,
}

/// Inline knots, or two-column CSV files (`x,value` with a header row)
/// resolved relative to the config file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableConfig {
    x: Option<Vec<f64>>,
    f: Option<Vec<f64>>,
    y: Option<Vec<f64>>,
    g: Option<Vec<f64>>,
    f_csv: Option<PathBuf>,
    g_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub param: String,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

impl SweepConfig {
    pub fn points(&self) -> Vec<f64> {
        let n = self.steps;
        (0..n)
            .map(|i| if i == n - 1 { self.to } else { self.from + (self.to - self.from) * i as f64 / (n - 1) as f64 })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BargainingMode {
    #[default]
    Nash,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingName {
    #[default]
    Own,
    Crossed,
}

impl From<PairingName> for Pairing {
    fn from(p: PairingName) -> Self {
        match p {
            PairingName::Own => Pairing::Own,
            PairingName::Crossed => Pairing::Crossed,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BargainingConfig {
    pub mode: BargainingMode,
    pub delta: Option<f64>,
    pub pairing: PairingName,
    pub grid_n: usize,
    pub tol: f64,
}

impl Default for BargainingConfig {
    fn default() -> Self {
        let d = BargainingOptions::default();
        BargainingConfig { mode: BargainingMode::Nash, delta: None, pairing: PairingName::Own, grid_n: d.grid_n, tol: d.tol }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThirdPartyConfig {
    pub delta_3p: f64,
}

/// `tol` and `max_iter` drive the pricing game; `damping` and `market_tol`
/// the user-choice solver; `grid_n` the assumption checks.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    pub grid_n: usize,
    pub market_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let m = MscgOptions::default();
        let s = SolveOptions::default();
        SolverConfig { tol: m.tol, max_iter: m.max_iter, damping: s.damping, grid_n: 201, market_tol: s.tol }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DistributionConfig {
    Point { value: f64 },
    Uniform { lo: f64, hi: f64 },
    Exponential { mean: f64 },
    Lognormal { mu: f64, sigma: f64 },
}

impl From<DistributionConfig> for infovalue::Distribution {
    fn from(d: DistributionConfig) -> Self {
        match d {
            DistributionConfig::Point { value } => infovalue::Distribution::Point(value),
            DistributionConfig::Uniform { lo, hi } => infovalue::Distribution::Uniform { lo, hi },
            DistributionConfig::Exponential { mean } => infovalue::Distribution::Exponential { mean },
            DistributionConfig::Lognormal { mu, sigma } => infovalue::Distribution::LogNormal { mu, sigma },
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum UtilityConfig {
    Log,
    Power { rho: f64 },
}

#[derive(Debug, Clone, Copy, Default, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CountsConfig {
    #[default]
    Rounded,
    Poisson,
}

fn default_grid() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.75, 1.0]
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    #[serde(rename = "N")]
    pub users: usize,
    #[serde(rename = "K")]
    pub channels: usize,
    #[serde(rename = "dist_L")]
    pub dist_l: DistributionConfig,
    #[serde(rename = "dist_W")]
    pub dist_w: DistributionConfig,
    #[serde(rename = "dist_I")]
    pub dist_i: DistributionConfig,
    #[serde(rename = "P")]
    pub power: f64,
    pub n0: f64,
    pub utility: UtilityConfig,
    pub samples: usize,
    #[serde(default)]
    pub counts: CountsConfig,
    #[serde(default = "default_grid")]
    pub x_grid: Vec<f64>,
    #[serde(default = "default_grid")]
    pub y_grid: Vec<f64>,
    #[serde(default)]
    pub ref_eta_l: f64,
}

impl McConfig {
    pub fn interference_model(&self, seed: u64) -> InterferenceModel {
        InterferenceModel {
            users: self.users,
            channels: self.channels,
            tv: self.dist_l.into(),
            cross: self.dist_w.into(),
            outside: self.dist_i.into(),
            power: self.power,
            noise: self.n0,
            utility: match self.utility {
                UtilityConfig::Log => Utility::Log,
                UtilityConfig::Power { rho } => Utility::Power { rho },
            },
            samples: self.samples,
            seed,
            counts: match self.counts {
                CountsConfig::Rounded => CountMode::Rounded,
                CountsConfig::Poisson => CountMode::Poisson,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
    pub format: Option<Format>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub r_l: Option<f64>,
}

/// A parsed, checked scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub dir: PathBuf,
    pub seed: u64,
}

pub fn load(path: &Path, overrides: &Overrides) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut scenario = parse(&text, path.parent().unwrap_or(Path::new(".")))
        .with_context(|| format!("invalid scenario {}", path.display()))?;
    scenario.apply(overrides)?;
    Ok(scenario)
}

pub fn parse(text: &str, dir: &Path) -> Result<Scenario> {
    let config: ScenarioConfig = serde_json::from_str(text)?;
    let seed = config.seed.unwrap_or(0);
    let scenario = Scenario { config, dir: dir.to_path_buf(), seed };
    scenario.check()?;
    Ok(scenario)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        bail!("{name} must be positive, got {v}");
    }
    Ok(())
}

impl Scenario {
    fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(tol) = o.tol {
            positive("--tol", tol)?;
            self.config.solver.tol = tol;
        }
        if let Some(r_l) = o.r_l {
            self.config.externality.r_l = Some(r_l);
            self.config.sweep = None;
        }
        self.check()
    }

    fn check(&self) -> Result<()> {
        let c = &self.config;
        if c.externality.r_l.is_none() && c.sweep.is_none() {
            bail!("missing field `externality.R_L` (or a `sweep` block over R_L)");
        }
        if let Some(s) = &c.sweep {
            if s.param != "R_L" {
                bail!("sweep.param must be \"R_L\", got {:?}", s.param);
            }
            if s.steps < 2 {
                bail!("sweep.steps must be at least 2, got {}", s.steps);
            }
            if !(s.from.is_finite() && s.to.is_finite() && s.from < s.to) {
                bail!("sweep needs from < to, got {} and {}", s.from, s.to);
            }
        }
        let b = &c.bargaining;
        if b.mode == BargainingMode::Fixed {
            match b.delta {
                Some(d) if (0.0..=1.0).contains(&d) => {}
                Some(d) => bail!("bargaining.delta must lie in [0, 1], got {d}"),
                None => bail!("missing field `bargaining.delta` (required when mode is \"fixed\")"),
            }
        }
        if b.grid_n < 11 {
            bail!("bargaining.grid_n must be at least 11, got {}", b.grid_n);
        }
        positive("bargaining.tol", b.tol)?;
        if let Some(t) = &c.third_party {
            if !(0.0..=1.0).contains(&t.delta_3p) {
                bail!("third_party.delta_3p must lie in [0, 1], got {}", t.delta_3p);
            }
        }
        let s = &c.solver;
        positive("solver.tol", s.tol)?;
        positive("solver.market_tol", s.market_tol)?;
        if !(s.damping > 0.0 && s.damping <= 1.0) {
            bail!("solver.damping must lie in (0, 1], got {}", s.damping);
        }
        if s.max_iter == 0 {
            bail!("solver.max_iter must be positive");
        }
        if s.grid_n < 3 {
            bail!("solver.grid_n must be at least 3, got {}", s.grid_n);
        }
        if c.externality.family == FamilyName::Montecarlo && c.mc.is_none() {
            bail!("missing field `mc` (required by the montecarlo family)");
        }
        Ok(())
    }

    /// R_L values to solve at, in increasing order.
    pub fn points(&self) -> Vec<f64> {
        match (&self.config.sweep, self.config.externality.r_l) {
            (Some(s), _) => s.points(),
            (None, Some(r)) => vec![r],
            (None, None) => unreachable!("checked at load"),
        }
    }

    /// The single R_L used by point subcommands.
    pub fn single_point(&self) -> Result<f64> {
        self.config
            .externality
            .r_l
            .ok_or_else(|| anyhow!("this command needs `externality.R_L` (or --r_l) rather than a sweep"))
    }

    pub fn mscg(&self) -> MscgOptions {
        MscgOptions { tol: self.config.solver.tol, max_iter: self.config.solver.max_iter, ..MscgOptions::default() }
    }

    pub fn market(&self) -> SolveOptions {
        SolveOptions {
            tol: self.config.solver.market_tol,
            damping: self.config.solver.damping,
            ..SolveOptions::default()
        }
    }

    pub fn bargaining(&self) -> BargainingOptions {
        let b = &self.config.bargaining;
        BargainingOptions { grid_n: b.grid_n, tol: b.tol, pairing: b.pairing.into(), mscg: self.mscg() }
    }

    pub fn interference_model(&self) -> Result<InterferenceModel> {
        let mc = self.config.mc.as_ref().ok_or_else(|| anyhow!("missing field `mc`"))?;
        Ok(mc.interference_model(self.seed))
    }

    /// Build the externality model at the first R_L point. Monte Carlo
    /// models are derived here, which can take a while.
    pub fn base_model(&self) -> Result<BaseModel> {
        let r_l = self.points()[0];
        let e = &self.config.externality;
        let params = || if e.params.is_null() { serde_json::json!({}) } else { e.params.clone() };
        let (model, shape_tol, derived) = match e.family {
            FamilyName::Power => {
                let p: PowerConfig = serde_json::from_value(params()).context("externality.params")?;
                let p = PowerParams {
                    alpha1: p.alpha1,
                    beta1: p.beta1,
                    gamma1: p.gamma1,
                    alpha2: p.alpha2,
                    beta2: p.beta2,
                    gamma2: p.gamma2,
                };
                (ExternalityModel::power(p, r_l)?, ANALYTIC_TOL, None)
            }
            FamilyName::Linear => {
                let p: LinearConfig = serde_json::from_value(params()).context("externality.params")?;
                let p = LinearParams { alpha1: p.alpha1, beta1: p.beta1, beta2: p.beta2 };
                (ExternalityModel::linear(p, r_l)?, ANALYTIC_TOL, None)
            }
            FamilyName::Constant => {
                let p: ConstantConfig = serde_json::from_value(params()).context("externality.params")?;
                (ExternalityModel::constant(p.f, p.g, r_l)?, ANALYTIC_TOL, None)
            }
            FamilyName::Table => {
                let t: TableConfig = serde_json::from_value(params()).context("externality.params")?;
                let (x, f) = self.table_column(t.x, t.f, t.f_csv, "x", "f")?;
                let (y, g) = self.table_column(t.y, t.g, t.g_csv, "y", "g")?;
                (ExternalityModel::table(x, f, y, g, r_l)?, TABLE_TOL, None)
            }
            FamilyName::Montecarlo => {
                let mc = self.config.mc.as_ref().expect("checked at load");
                let im = self.interference_model()?;
                let d = infovalue::derive_externality_with(&im, &mc.x_grid, &mc.y_grid, mc.ref_eta_l, r_l, &run::par_batches)?;
                (d.model.clone(), d.tolerance, Some(d))
            }
        };
        Ok(BaseModel { model, shape_tol, grid_n: self.config.solver.grid_n, derived })
    }

    fn table_column(
        &self,
        knots: Option<Vec<f64>>,
        values: Option<Vec<f64>>,
        csv: Option<PathBuf>,
        knot_name: &str,
        value_name: &str,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        match (knots, values, csv) {
            (Some(k), Some(v), None) => Ok((k, v)),
            (None, None, Some(path)) => read_two_columns(&self.dir.join(path)),
            _ => bail!(
                "table params need either `{knot_name}` and `{value_name}` arrays or `{value_name}_csv`, not both"
            ),
        }
    }
}

fn read_two_columns(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let (mut xs, mut vs) = (Vec::new(), Vec::new());
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != 2 {
            bail!("{}: row {} has {} columns, expected 2", path.display(), i + 2, record.len());
        }
        let num = |s: &str| s.trim().parse::<f64>().with_context(|| format!("{}: bad number {s:?}", path.display()));
        xs.push(num(&record[0])?);
        vs.push(num(&record[1])?);
    }
    Ok((xs, vs))
}

/// Externality model plus what is needed to re-check it at other R_L values.
#[derive(Debug, Clone)]
pub struct BaseModel {
    pub model: ExternalityModel,
    pub shape_tol: f64,
    pub grid_n: usize,
    pub derived: Option<infovalue::DerivedExternality>,
}

impl BaseModel {
    /// The model at leasing quality `r_l`, rejected unless every assumption holds.
    pub fn at(&self, r_l: f64) -> Result<ExternalityModel> {
        let model = self.model.with_leasing_quality(r_l)?;
        let report = validate_model(&model, self.grid_n, self.shape_tol);
        if let Some(bad) = report.checks.iter().find(|c| !c.passed) {
            bail!(
                "model at R_L = {r_l} fails \"{}\" (violation {:e} at {})",
                bad.assumption.as_str(),
                bad.worst,
                bad.at
            );
        }
        Ok(model)
    }
}
