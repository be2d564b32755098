//! The run configuration: a flat, sectioned key-value file (TOML grammar),
//! versioned by `schema_version`. Unknown keys are rejected. Expressions are
//! closed forms over the coordinates x1..x3 (see the expression grammar in
//! the core crate).

use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;
use wentzell_lab::constants::{BranchInputs, UnknownConstants};
use wentzell_lab::energy::CoefficientField;
use wentzell_lab::expr::Expression;
use wentzell_lab::flow::FlowConfig;
use wentzell_lab::grid::{Grid, GridSpec};
use wentzell_lab::varexp::{CarrierKind, ExponentField, PairFunction, VectorExponent};
use wentzell_lab::WentzellEnergy;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub grid: Option<GridSection>,
    pub exponents: Option<ExponentsSection>,
    pub coefficients: Option<CoefficientsSection>,
    pub initial: Option<InitialSection>,
    pub flow: Option<FlowSection>,
    #[serde(default)]
    pub output: OutputSection,
    pub constants: Option<ConstantsSection>,
    pub verify: Option<VerifySection>,
}

fn default_seed() -> u64 {
    0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dimension: usize,
    pub lengths: Vec<f64>,
    pub resolution: Vec<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentsSection {
    /// One expression per coordinate axis.
    pub p: Vec<String>,
    /// One expression per tangential slot.
    pub q: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsSection {
    pub alpha: String,
    pub beta: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub u0: String,
    pub v0: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    pub tau: f64,
    pub horizon: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_inner")]
    pub max_inner: usize,
    #[serde(default)]
    pub eps_reg: f64,
}

fn default_tolerance() -> f64 {
    1e-10
}

fn default_max_inner() -> usize {
    60
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Snapshot stride in steps; 0 disables snapshots.
    #[serde(default)]
    pub snapshot_stride: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSection {
    pub a: f64,
    pub p_check: f64,
    pub q_check: f64,
    pub p_tilde: f64,
    pub q_tilde: f64,
    pub d1: f64,
    pub d2: f64,
    #[serde(default = "default_c_omega")]
    pub c_omega: f64,
    /// Derive the branch values from the final difference of a flow run
    /// instead of using the configured ones.
    #[serde(default)]
    pub from_snapshot: bool,
    /// Normalize quadrature weights to total measure 1 when deriving
    /// branches.
    #[serde(default)]
    pub rescale_measure: bool,
    #[serde(default)]
    pub unknowns: UnknownsSection,
}

fn default_c_omega() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnknownsSection {
    pub c_star_p: f64,
    pub c_star_q: f64,
    pub c_eps_p: f64,
    pub c_eps_q: f64,
    pub kappa_p: f64,
    pub kappa_q: f64,
    pub g_p: f64,
    pub g_q: f64,
    pub c1: f64,
}

impl Default for UnknownsSection {
    fn default() -> Self {
        Self {
            c_star_p: 1.0,
            c_star_q: 1.0,
            c_eps_p: 1.0,
            c_eps_q: 1.0,
            kappa_p: 1.0,
            kappa_q: 1.0,
            g_p: 1.0,
            g_q: 1.0,
            c1: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    #[serde(default)]
    pub checks: Vec<String>,
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    pub horizon: Option<f64>,
    /// Expression for the norm exponent of the non-expansivity check,
    /// evaluated on both carriers.
    pub norm_exponent: Option<String>,
    #[serde(default = "default_dissipation_r")]
    pub dissipation_r: f64,
    pub tolerance_override: Option<f64>,
    /// Sample times of the decay fit; defaults to eight multiples of the
    /// flow horizon when absent.
    pub sample_times: Option<Vec<f64>>,
    pub scales: Option<Vec<f64>>,
}

fn default_pairs() -> usize {
    10
}

fn default_dissipation_r() -> f64 {
    2.0
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        if cfg.schema_version != SCHEMA_VERSION {
            bail!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            );
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn grid(&self) -> Result<Arc<Grid>> {
        let g = self
            .grid
            .as_ref()
            .ok_or_else(|| anyhow!("missing [grid] section"))?;
        let grid = Grid::build(&GridSpec {
            dimension: g.dimension,
            lengths: g.lengths.clone(),
            resolution: g.resolution.clone(),
        })?;
        Ok(Arc::new(grid))
    }

    pub fn energy(&self, grid: &Arc<Grid>) -> Result<WentzellEnergy> {
        let exps = self
            .exponents
            .as_ref()
            .ok_or_else(|| anyhow!("missing [exponents] section"))?;
        let dim = grid.domain.dim();
        if exps.p.len() != dim {
            bail!("[exponents].p needs {dim} entries, got {}", exps.p.len());
        }
        if exps.q.len() != dim - 1 {
            bail!(
                "[exponents].q needs {} entries, got {}",
                dim - 1,
                exps.q.len()
            );
        }
        let mut p = Vec::new();
        for src in &exps.p {
            let e = Expression::parse(src)?;
            p.push(ExponentField::new(
                grid.domain.eval_expression(&e),
                CarrierKind::Interior,
            )?);
        }
        let mut q = Vec::new();
        for src in &exps.q {
            let e = Expression::parse(src)?;
            q.push(ExponentField::new(
                grid.eval_boundary_expression(&e),
                CarrierKind::Boundary,
            )?);
        }
        let vexp = VectorExponent::new(p, q)?;
        let coeff = self
            .coefficients
            .as_ref()
            .ok_or_else(|| anyhow!("missing [coefficients] section"))?;
        let alpha = grid
            .domain
            .eval_expression(&Expression::parse(&coeff.alpha)?);
        let beta = grid.eval_boundary_expression(&Expression::parse(&coeff.beta)?);
        let coeff = CoefficientField::new(alpha, beta)?;
        let eps = self.flow.as_ref().map(|f| f.eps_reg).unwrap_or(0.0);
        Ok(WentzellEnergy::build(grid.clone(), vexp, coeff, eps)?)
    }

    pub fn flow_config(&self) -> Result<FlowConfig> {
        let f = self
            .flow
            .as_ref()
            .ok_or_else(|| anyhow!("missing [flow] section"))?;
        let cfg = FlowConfig {
            tau: f.tau,
            tolerance: f.tolerance,
            max_inner: f.max_inner,
            eps_reg: f.eps_reg,
        };
        cfg.validate()?;
        if !(f.horizon > 0.0) {
            bail!("[flow].horizon must be positive, got {}", f.horizon);
        }
        Ok(cfg)
    }

    pub fn horizon(&self) -> Result<f64> {
        Ok(self
            .flow
            .as_ref()
            .ok_or_else(|| anyhow!("missing [flow] section"))?
            .horizon)
    }

    pub fn initial_state(&self, grid: &Arc<Grid>) -> Result<PairFunction> {
        let init = self
            .initial
            .as_ref()
            .ok_or_else(|| anyhow!("missing [initial] section"))?;
        let e = Expression::parse(&init.u0)?;
        Ok(PairFunction::conforming(
            grid.domain.eval_expression(&e),
            &grid.atlas,
        ))
    }

    pub fn second_state(&self, grid: &Arc<Grid>) -> Result<Option<PairFunction>> {
        let init = self
            .initial
            .as_ref()
            .ok_or_else(|| anyhow!("missing [initial] section"))?;
        match &init.v0 {
            None => Ok(None),
            Some(src) => {
                let e = Expression::parse(src)?;
                Ok(Some(PairFunction::conforming(
                    grid.domain.eval_expression(&e),
                    &grid.atlas,
                )))
            }
        }
    }

    pub fn branch_inputs(&self) -> Result<BranchInputs> {
        let c = self
            .constants
            .as_ref()
            .ok_or_else(|| anyhow!("missing [constants] section"))?;
        let inputs = BranchInputs {
            a: c.a,
            p_check: c.p_check,
            q_check: c.q_check,
            p_tilde: c.p_tilde,
            q_tilde: c.q_tilde,
            d1: c.d1,
            d2: c.d2,
        };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn unknown_constants(&self) -> UnknownConstants {
        let u = self
            .constants
            .as_ref()
            .map(|c| c.unknowns.clone())
            .unwrap_or_default();
        UnknownConstants {
            c_star_p: u.c_star_p,
            c_star_q: u.c_star_q,
            c_eps_p: u.c_eps_p,
            c_eps_q: u.c_eps_q,
            kappa_p: u.kappa_p,
            kappa_q: u.kappa_q,
            g_p: u.g_p,
            g_q: u.g_q,
            c1: u.c1,
        }
    }
}
