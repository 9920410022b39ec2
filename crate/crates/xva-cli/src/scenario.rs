//! Scenario file schema: one file describes one complete experiment.
//!
//! TOML with strict validation: unknown keys are rejected and credit
//! parameters have no implicit defaults (a missing recovery or basis is an
//! error, not a zero), because silent defaults would corrupt cross-solver
//! comparisons. Solver blocks are optional plumbing with documented
//! defaults.

use serde::{Deserialize, Serialize};
use thiserror::Error;
use xva_core::hedge::ReplicationConfig;
use xva_core::instruments::{DealKind, DealSpec, Direction};
use xva_core::market_model::{
    CorrelationSet, MarketModel, ModelError, PartyCredit, PartyRole, RateCurves, UnderlyingSpec,
};
use xva_core::mc_pricer::{EstimatorMode, GridSpec, McConfig};
use xva_core::pde_pricer::PdeGrid;
use xva_core::term_structure::PiecewiseConstant;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario does not parse: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("scenario invalid: {0}")]
    Model(#[from] ModelError),
    #[error("scenario invalid: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub seed: u64,
    pub curves: CurvesSection,
    pub underlying: UnderlyingSection,
    pub parties: PartiesSection,
    pub correlations: CorrelationsSection,
    pub deal: DealSection,
    #[serde(default)]
    pub solvers: SolversSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvesSection {
    pub ois: PiecewiseConstant,
    pub asset_rate: PiecewiseConstant,
    pub dividend_yield: PiecewiseConstant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnderlyingSection {
    pub spot: f64,
    pub drift: PiecewiseConstant,
    pub vol: PiecewiseConstant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartiesSection {
    pub hedger: PartySection,
    pub investor: PartySection,
}

/// Credit description of one party; every field is mandatory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartySection {
    pub recovery: f64,
    pub spread0: f64,
    pub spread_drift: PiecewiseConstant,
    pub spread_vol: PiecewiseConstant,
    pub market_price_of_credit_risk: PiecewiseConstant,
    pub basis: PiecewiseConstant,
}

impl PartySection {
    fn to_credit(&self, role: PartyRole) -> PartyCredit {
        PartyCredit {
            role,
            recovery: self.recovery,
            spread0: self.spread0,
            spread_drift: self.spread_drift.clone(),
            spread_vol: self.spread_vol.clone(),
            credit_risk_premium: self.market_price_of_credit_risk.clone(),
            basis: self.basis.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationsSection {
    pub spot_investor: PiecewiseConstant,
    pub spot_hedger: PiecewiseConstant,
    pub hedger_investor: PiecewiseConstant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DealSection {
    pub kind: DealKind,
    pub notional: f64,
    pub maturity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strike: Option<f64>,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolversSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pde: Option<PdeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hedge: Option<HedgeSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    #[serde(default = "default_n_paths")]
    pub n_paths: usize,
    /// Uniform step size; mutually exclusive with `nodes`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<f64>>,
    #[serde(default = "default_picard_tol")]
    pub picard_tol: f64,
    #[serde(default = "default_picard_max_iter")]
    pub picard_max_iter: usize,
    #[serde(default = "default_estimator")]
    pub estimator: EstimatorMode,
    #[serde(default = "default_regression_degree")]
    pub regression_degree: usize,
    #[serde(default)]
    pub antithetic: bool,
}

fn default_n_paths() -> usize {
    100_000
}
fn default_picard_tol() -> f64 {
    1e-8
}
fn default_picard_max_iter() -> usize {
    50
}
fn default_estimator() -> EstimatorMode {
    EstimatorMode::Deterministic
}
fn default_regression_degree() -> usize {
    2
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            n_paths: default_n_paths(),
            step: None,
            nodes: None,
            picard_tol: default_picard_tol(),
            picard_max_iter: default_picard_max_iter(),
            estimator: default_estimator(),
            regression_degree: default_regression_degree(),
            antithetic: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeSection {
    #[serde(default = "default_pde_nodes")]
    pub n_space: usize,
    #[serde(default = "default_pde_nodes")]
    pub n_time: usize,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_domain_stddevs")]
    pub domain_stddevs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_max: Option<f64>,
}

fn default_pde_nodes() -> usize {
    200
}
fn default_theta() -> f64 {
    0.5
}
fn default_domain_stddevs() -> f64 {
    7.5
}

impl Default for PdeSection {
    fn default() -> Self {
        Self {
            n_space: default_pde_nodes(),
            n_time: default_pde_nodes(),
            theta: default_theta(),
            domain_stddevs: default_domain_stddevs(),
            s_min: None,
            s_max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HedgeSection {
    #[serde(default = "default_hedge_paths")]
    pub n_paths: usize,
    #[serde(default = "default_hedge_steps")]
    pub n_steps: usize,
    #[serde(default = "default_hedge_pde_space")]
    pub pde_space: usize,
}

fn default_hedge_paths() -> usize {
    4_000
}
fn default_hedge_steps() -> usize {
    100
}
fn default_hedge_pde_space() -> usize {
    1_600
}

impl Default for HedgeSection {
    fn default() -> Self {
        Self {
            n_paths: default_hedge_paths(),
            n_steps: default_hedge_steps(),
            pde_space: default_hedge_pde_space(),
        }
    }
}

impl ScenarioFile {
    pub fn load(path: &std::path::Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        let scenario: ScenarioFile = toml::from_str(&text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// Re-checks every model-level invariant by building the model, plus
    /// the deal contract.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.deal()
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        self.build_model()?;
        if let Some(mc) = &self.solvers.mc {
            if mc.step.is_some() && mc.nodes.is_some() {
                return Err(ScenarioError::Invalid(
                    "solvers.mc: give either `step` or `nodes`, not both".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn deal(&self) -> DealSpec {
        DealSpec {
            kind: self.deal.kind,
            notional: self.deal.notional,
            maturity: self.deal.maturity,
            strike: self.deal.strike,
            direction: self.deal.direction,
        }
    }

    pub fn build_model(&self) -> Result<MarketModel, ScenarioError> {
        Ok(MarketModel::new(
            RateCurves {
                ois: self.curves.ois.clone(),
                asset_rate: self.curves.asset_rate.clone(),
                dividend_yield: self.curves.dividend_yield.clone(),
            },
            self.parties.hedger.to_credit(PartyRole::Hedger),
            self.parties.investor.to_credit(PartyRole::Investor),
            UnderlyingSpec {
                spot: self.underlying.spot,
                drift: self.underlying.drift.clone(),
                vol: self.underlying.vol.clone(),
            },
            CorrelationSet {
                spot_investor: self.correlations.spot_investor.clone(),
                spot_hedger: self.correlations.spot_hedger.clone(),
                hedger_investor: self.correlations.hedger_investor.clone(),
            },
            self.deal.maturity,
        )?)
    }

    pub fn mc_config(&self, seed: u64) -> McConfig {
        let section = self.solvers.mc.clone().unwrap_or_default();
        let grid = match (&section.nodes, section.step) {
            (Some(nodes), _) => GridSpec::Nodes(nodes.clone()),
            (None, Some(step)) => GridSpec::Step(step),
            (None, None) => GridSpec::Step(0.01),
        };
        McConfig {
            n_paths: section.n_paths,
            grid,
            seed,
            picard_tol: section.picard_tol,
            picard_max_iter: section.picard_max_iter,
            mode: section.estimator,
            regression_degree: section.regression_degree,
            antithetic: section.antithetic,
        }
    }

    pub fn pde_grid(&self) -> PdeGrid {
        let section = self.solvers.pde.clone().unwrap_or_default();
        PdeGrid {
            n_space: section.n_space,
            n_time: section.n_time,
            theta: section.theta,
            domain_stddevs: section.domain_stddevs,
            s_min: section.s_min,
            s_max: section.s_max,
        }
    }

    pub fn replication_config(&self, seed: u64) -> ReplicationConfig {
        let section = self.solvers.hedge.clone().unwrap_or_default();
        ReplicationConfig {
            n_paths: section.n_paths,
            n_steps: section.n_steps,
            seed,
            pde_space: section.pde_space,
        }
    }
}
