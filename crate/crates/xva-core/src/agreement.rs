//! Two-counterparty analytics: whether a deal closes given both parties'
//! bond-CDS bases, and the basis sensitivity of the price.
//!
//! The funding term makes the valuation agent-specific through the
//! replicating party's basis. With all credit inputs shared, the price is a
//! function F of that basis alone: F(gamma_1) is the most the buying side
//! will pay and F(gamma_2) the least the selling side will accept, so the
//! deal closes iff F(gamma_2) <= F(gamma_1). Since F is decreasing in gamma
//! for a single-signed deal, this is the creditor-basis <= debtor-basis
//! rule.
//!
//! The sensitivity dV/dgamma is the survival-discounted integral of the
//! value profile, corrected for the profile's own dependence on the basis
//! (the recursion makes the naive integral a first-order answer only); the
//! correction is resolved by the same fixed-point iteration the pricer
//! uses. A finite-difference mode cross-checks it.

use crate::closed_form::{price_deposit_time_varying, ClosedFormError, DepositCurveParams};
use crate::instruments::{DealKind, DealSpec, InstrumentError};
use crate::market_model::{MarketModel, ModelError, PartyRole};
use crate::mc_pricer::{deterministic_value_curve, mc_price, McConfig, McError};
use crate::simulation::TimeGrid;
use crate::term_structure::PiecewiseConstant;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AgreementError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Instrument(#[from] InstrumentError),
    #[error(transparent)]
    ClosedForm(#[from] ClosedFormError),
    #[error(transparent)]
    Pricer(#[from] McError),
    #[error("agreement analytics: {0}")]
    Config(String),
}

/// Outcome of the two-sided pricing comparison.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AgreementResult {
    /// Counterparty 1 valuation F(gamma_1), the maximum it pays upfront.
    pub v1: f64,
    /// Counterparty 2 required amount F(gamma_2), the minimum it receives.
    pub v2_ask: f64,
    pub closes: bool,
    pub margin: f64,
}

/// Pricing route for the basis-parametrized valuation F.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgreementSolver {
    /// Deposit closed form; requires constant hazards.
    ClosedForm,
    /// Deterministic-mode backward induction on a uniform grid with the
    /// given number of steps; requires deterministic spreads.
    Deterministic { n_steps: usize },
    /// Full Monte Carlo with the given configuration.
    Mc(McConfig),
}

fn constant_hazards(model: &MarketModel, horizon: f64) -> bool {
    let det = |p: &crate::market_model::PartyCredit| {
        p.spread_drift.is_constant_eq(0.0, horizon) && p.spread_vol.is_constant_eq(0.0, horizon)
    };
    det(model.hedger()) && det(model.investor())
}

/// Deposit value at time `t` through the time-varying closed form, honoring
/// the deal direction by the odd symmetry of the pricing equation: for the
/// hedger-as-lender orientation the lender/borrower slots swap while the
/// basis keeps its sign. Requires constant hazards.
pub fn deposit_closed_form_value(
    deal: &DealSpec,
    model: &MarketModel,
    t: f64,
) -> Result<f64, AgreementError> {
    if deal.kind != DealKind::Deposit {
        return Err(AgreementError::Config(
            "closed-form route only prices deposits".into(),
        ));
    }
    if !constant_hazards(model, deal.maturity) {
        return Err(AgreementError::Config(
            "closed-form route requires constant hazards (zero spread drift and vol)".into(),
        ));
    }
    let units = deal.signed_notional();
    let lambda_h = model.hedger().spread0 / model.hedger().lgd();
    let lambda_i = model.investor().spread0 / model.investor().lgd();
    let params = if units > 0.0 {
        DepositCurveParams {
            notional: units,
            ois: model.curves().ois.clone(),
            lambda_investor: PiecewiseConstant::flat(lambda_i),
            lambda_hedger: PiecewiseConstant::flat(lambda_h),
            recovery_hedger: model.hedger().recovery,
            basis_hedger: model.hedger().basis.clone(),
        }
    } else {
        // Hedger lends: lender and borrower swap roles in the formula.
        DepositCurveParams {
            notional: -units,
            ois: model.curves().ois.clone(),
            lambda_investor: PiecewiseConstant::flat(lambda_h),
            lambda_hedger: PiecewiseConstant::flat(lambda_i),
            recovery_hedger: model.investor().recovery,
            basis_hedger: model.hedger().basis.clone(),
        }
    };
    let value = price_deposit_time_varying(&params, t, deal.maturity)?;
    Ok(if units > 0.0 { value } else { -value })
}

fn deposit_closed_form(deal: &DealSpec, model: &MarketModel) -> Result<f64, AgreementError> {
    deposit_closed_form_value(deal, model, 0.0)
}

/// The valuation F as a function of the hedger's basis, all other inputs
/// fixed.
fn value_at_basis(
    deal: &DealSpec,
    model: &MarketModel,
    basis: &PiecewiseConstant,
    solver: &AgreementSolver,
) -> Result<f64, AgreementError> {
    let model = model.with_hedger_basis(basis.clone());
    match solver {
        AgreementSolver::ClosedForm => deposit_closed_form(deal, &model),
        AgreementSolver::Deterministic { n_steps } => {
            let grid = TimeGrid::uniform(deal.maturity, (*n_steps).max(1))
                .map_err(AgreementError::Model)?;
            let curve = deterministic_value_curve(deal, &model, &grid, 1e-12, 200)?;
            Ok(curve[0])
        }
        AgreementSolver::Mc(cfg) => Ok(mc_price(deal, &model, cfg)?.v),
    }
}

/// Decides whether the deal closes between two counterparties that share
/// every credit input except the bond-CDS basis.
pub fn deal_closes(
    deal: &DealSpec,
    model: &MarketModel,
    gamma1: f64,
    gamma2: f64,
    solver: &AgreementSolver,
) -> Result<AgreementResult, AgreementError> {
    deal.validate()?;
    let v1 = value_at_basis(deal, model, &PiecewiseConstant::flat(gamma1), solver)?;
    let v2_ask = value_at_basis(deal, model, &PiecewiseConstant::flat(gamma2), solver)?;
    let margin = v1 - v2_ask;
    Ok(AgreementResult {
        v1,
        v2_ask,
        closes: margin >= 0.0,
        margin,
    })
}

/// Plot-ready sweep of F over a basis range, points evaluated in parallel.
pub fn basis_sweep(
    deal: &DealSpec,
    model: &MarketModel,
    from: f64,
    to: f64,
    steps: usize,
    solver: &AgreementSolver,
) -> Result<Vec<(f64, f64)>, AgreementError> {
    use rayon::prelude::*;
    if steps < 2 {
        return Err(AgreementError::Config(
            "sweep needs at least 2 points".into(),
        ));
    }
    (0..steps)
        .into_par_iter()
        .map(|k| {
            let gamma = from + (to - from) * k as f64 / (steps - 1) as f64;
            let value = value_at_basis(deal, model, &PiecewiseConstant::flat(gamma), solver)?;
            Ok((gamma, value))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivityMethod {
    /// Survival-discounted integral of the value profile with the
    /// basis-recursion correction, on a deterministic time grid.
    AnalyticIntegral,
    /// Central difference of the pricer at gamma +- 1e-5.
    FiniteDifference,
}

/// Value profile at the grid nodes, exact per node for constant-hazard
/// deposits and from backward induction otherwise.
fn value_profile(
    deal: &DealSpec,
    model: &MarketModel,
    grid: &TimeGrid,
) -> Result<Vec<f64>, AgreementError> {
    if deal.kind == DealKind::Deposit && constant_hazards(model, deal.maturity) {
        // Closed form per node: same parameters, shrinking horizon.
        grid.times()
            .iter()
            .map(|&t| deposit_closed_form_value(deal, model, t))
            .collect()
    } else {
        Ok(deterministic_value_curve(deal, model, grid, 1e-12, 200)?)
    }
}

/// Sensitivity of the value to a parallel shift of the hedger's basis.
pub fn dv_dgamma(
    deal: &DealSpec,
    model: &MarketModel,
    method: SensitivityMethod,
    n_steps: usize,
) -> Result<f64, AgreementError> {
    deal.validate()?;
    model.require_coverage(deal.maturity)?;
    match method {
        SensitivityMethod::FiniteDifference => {
            let h = 1e-5;
            let solver = if deal.kind == DealKind::Deposit && constant_hazards(model, deal.maturity)
            {
                AgreementSolver::ClosedForm
            } else {
                AgreementSolver::Deterministic { n_steps }
            };
            let up = value_at_basis(deal, model, &model.hedger().basis.shifted(h), &solver)?;
            let down = value_at_basis(deal, model, &model.hedger().basis.shifted(-h), &solver)?;
            Ok((up - down) / (2.0 * h))
        }
        SensitivityMethod::AnalyticIntegral => {
            let grid =
                TimeGrid::uniform(deal.maturity, n_steps.max(2)).map_err(AgreementError::Model)?;
            let value = value_profile(deal, model, &grid)?;
            let n = grid.n_nodes();
            let times = grid.times();
            let curves = model.curves();
            let lambda_i = model.investor().spread0 / model.investor().lgd();
            let lambda_h_const = model.hedger().spread0 / model.hedger().lgd();

            // Deterministic intensity paths; for non-constant drifts reuse
            // the Euler convention.
            let pi_i =
                crate::simulation::deterministic_spread_path(model, PartyRole::Investor, &grid);
            let pi_h =
                crate::simulation::deterministic_spread_path(model, PartyRole::Hedger, &grid);
            let _ = (lambda_i, lambda_h_const);

            let mut discount = Vec::with_capacity(n);
            let mut survival = Vec::with_capacity(n);
            let mut gamma = Vec::with_capacity(n);
            let mut cum = 0.0;
            for j in 0..n {
                discount.push(curves.ois_discount(0.0, times[j]));
                if j > 0 {
                    let dt = times[j] - times[j - 1];
                    let li = (pi_i[j - 1] + pi_i[j]) / (2.0 * model.investor().lgd());
                    let lh = (pi_h[j - 1] + pi_h[j]) / (2.0 * model.hedger().lgd());
                    cum += (li + lh) * dt;
                }
                survival.push((-cum).exp());
                gamma.push(model.hedger().basis.value(times[j]));
            }

            let suffix = |f: &[f64]| {
                let mut out = vec![0.0; n];
                for j in (0..n - 1).rev() {
                    let dt = times[j + 1] - times[j];
                    out[j] = out[j + 1] + 0.5 * (f[j] + f[j + 1]) * dt;
                }
                out
            };

            // First-order term: minus the survival-discounted value integral.
            let integrand: Vec<f64> = (0..n)
                .map(|j| discount[j] * survival[j] * value[j])
                .collect();
            let iv = suffix(&integrand);

            // Recursion correction: W = -IV - K[gamma W], same Volterra
            // iteration as the pricer.
            let mut w: Vec<f64> = (0..n)
                .map(|j| -iv[j] / (discount[j] * survival[j]))
                .collect();
            for _ in 0..200 {
                let g: Vec<f64> = (0..n)
                    .map(|j| discount[j] * survival[j] * gamma[j] * w[j])
                    .collect();
                let kw = suffix(&g);
                let mut max_change = 0.0_f64;
                let mut max_w = 0.0_f64;
                let mut next = vec![0.0; n];
                for j in 0..n {
                    next[j] = (-iv[j] - kw[j]) / (discount[j] * survival[j]);
                    max_change = max_change.max((next[j] - w[j]).abs());
                    max_w = max_w.max(next[j].abs());
                }
                w = next;
                if max_change <= 1e-13 * max_w.max(1.0) {
                    break;
                }
            }
            Ok(w[0])
        }
    }
}
