//! Replicating-portfolio analytics: hedge weights under the funding
//! constraint, and a discrete-time replication simulation verifying that
//! the hedged portfolio's stochastic P&L cancels.
//!
//! The portfolio holds a collateralized derivative on the underlying for
//! market risk (realized as a forward struck at the initial forward level),
//! short- and long-term CDS written on the investor (investor spread and
//! jump-to-default risk), the hedger's own short- and long-term bonds
//! (funding constraint and own spread risk), a cash collateral account, and
//! a short-term CDS written on the hedger herself. That last position is
//! not tradable but has a well-defined value through the funding benefit of
//! own-default protection; the simulation books it as a real instrument
//! paying its market spread and settling 1 - R_H on the hedger's default.
//!
//! Weight conventions, with V the deal value seen from the investor:
//!
//!   alpha = V_S / H_S                 beta  = -alpha H - xi CDS^I(t,T)
//!   xi    = V_piI / CDS^I_piI         omega = V_piH / B(t,T)_piH
//!   eps   = (xi dCDS^I - dV^I) / (1 - R_I)
//!   eta   = -V - dV^H / (1 - R_H)
//!   Omega = (V - omega B(t,T)) / B(t,t+dt)     [funding constraint]

use crate::instruments::{
    close_out_target, collateralized_value, DealSpec, DefaultingParty, InstrumentError,
};
use crate::market_model::{MarketModel, ModelError, PartyRole};
use crate::mc_pricer::{deterministic_value_curve, McError};
use crate::pde_pricer::{pde_price, PdeError, PdeGrid, PdeSolution};
use crate::simulation::{fold_paths, FactorMask, PathRecord, SimCoeffs, TimeGrid};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HedgeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Instrument(#[from] InstrumentError),
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error(transparent)]
    Pricer(#[from] McError),
    #[error("hedge instrument sensitivity vanishes: {instrument}")]
    VanishingSensitivity { instrument: &'static str },
    #[error("invalid replication configuration: {0}")]
    Config(String),
}

/// The seven portfolio coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HedgeWeights {
    /// Collateralized-derivative units.
    pub alpha: f64,
    /// Collateral units.
    pub beta: f64,
    /// Long-term investor-CDS units.
    pub xi: f64,
    /// Short-term investor-CDS units.
    pub epsilon: f64,
    /// Short-term own-bond units (derived from the funding constraint).
    pub short_bond: f64,
    /// Long-term own-bond units.
    pub long_bond: f64,
    /// Short-term self-CDS units (the valued-but-unhedged position).
    pub eta: f64,
}

/// State needed to solve for the weights at one rebalance date.
#[derive(Debug, Clone, Copy)]
pub struct HedgeInputs {
    /// Deal value V (investor perspective).
    pub value: f64,
    pub dv_ds: f64,
    pub dh_ds: f64,
    pub dv_dpi_investor: f64,
    pub dcds_dpi_investor: f64,
    pub dv_dpi_hedger: f64,
    pub dbond_dpi_hedger: f64,
    /// Jump of V on investor default, target - V.
    pub jump_v_investor: f64,
    /// Jump of V on hedger default.
    pub jump_v_hedger: f64,
    /// Jump of the long-term investor CDS on investor default.
    pub jump_cds_investor: f64,
    pub recovery_investor: f64,
    pub recovery_hedger: f64,
    /// Current prices of the hedge instruments.
    pub hedge_value: f64,
    pub cds_investor_value: f64,
    pub bond_short_price: f64,
    pub bond_long_price: f64,
}

/// Solves the stochastic-term cancellation for the portfolio weights.
///
/// A ratio with vanishing instrument sensitivity is an error when the deal
/// actually carries the exposure; with no exposure the weight is zero.
pub fn hedge_weights(inputs: &HedgeInputs) -> Result<HedgeWeights, HedgeError> {
    let ratio = |num: f64, den: f64, instrument: &'static str| -> Result<f64, HedgeError> {
        if den.abs() < 1e-14 {
            if num.abs() < 1e-14 {
                Ok(0.0)
            } else {
                Err(HedgeError::VanishingSensitivity { instrument })
            }
        } else {
            Ok(num / den)
        }
    };
    let alpha = ratio(inputs.dv_ds, inputs.dh_ds, "collateralized derivative")?;
    let xi = ratio(
        inputs.dv_dpi_investor,
        inputs.dcds_dpi_investor,
        "long-term investor CDS",
    )?;
    let long_bond = ratio(
        inputs.dv_dpi_hedger,
        inputs.dbond_dpi_hedger,
        "long-term own bond",
    )?;
    let lgd_i = 1.0 - inputs.recovery_investor;
    let lgd_h = 1.0 - inputs.recovery_hedger;
    let epsilon = (xi * inputs.jump_cds_investor - inputs.jump_v_investor) / lgd_i;
    let eta = -inputs.value - inputs.jump_v_hedger / lgd_h;
    if inputs.bond_short_price.abs() < 1e-14 {
        return Err(HedgeError::VanishingSensitivity {
            instrument: "short-term own bond",
        });
    }
    let short_bond = (inputs.value - long_bond * inputs.bond_long_price) / inputs.bond_short_price;
    let beta = -alpha * inputs.hedge_value - xi * inputs.cds_investor_value;
    Ok(HedgeWeights {
        alpha,
        beta,
        xi,
        epsilon,
        short_bond,
        long_bond,
        eta,
    })
}

/// Replication run configuration. The value surface for spot-dependent
/// deals comes from the PDE solver on a grid refined relative to the
/// simulation steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub pde_space: usize,
}

impl Default for ReplicationConfig {
    fn default() -> Self {
        Self {
            n_paths: 4_000,
            n_steps: 100,
            seed: 1,
            pde_space: 400,
        }
    }
}

/// Outcome of one hedged path.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PathOutcome {
    pub path: u64,
    /// Terminal hedging error sum(dPi - dV), per unit of notional.
    pub terminal_error: f64,
    pub default_party: Option<DefaultingParty>,
    pub default_time: Option<f64>,
    /// Jump-leg cancellation residual at the default event, if any.
    pub jump_residual: Option<f64>,
}

/// OLS of the step diffusion mismatch on the three Brownian increments.
///
/// The regressed quantity is the same-time spot-move P&L of the hedged
/// book, alpha [H(t, S') - H(t, S)] - [V(t, S') - V(t, S)], which is what
/// the weight construction cancels. The full step P&L additionally carries
/// the funding and premium accruals, whose revaluation at the moved spot
/// couples to the increment at order dt and vanishes only in the
/// continuous-rebalancing limit; those predictable carries are excluded
/// here so the test isolates the diffusion cancellation itself.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StepRegression {
    pub coefficients: [f64; 3],
    pub std_errors: [f64; 3],
    pub n_samples: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicationStats {
    pub outcomes: Vec<PathOutcome>,
    pub mean_error: f64,
    pub std_error: f64,
    pub n_defaults: usize,
    /// Largest jump-leg cancellation residual across default events,
    /// per unit of notional.
    pub max_jump_residual: f64,
    /// Largest funding-constraint residual across rebalances, relative.
    pub max_funding_residual: f64,
    pub regression: StepRegression,
    /// Mean realized portfolio drift per path against the (f - pi) V drift
    /// the replication equation implies, with the standard error of their
    /// per-path difference (jump legs versus their compensators add noise
    /// but no bias).
    pub mean_drift_realized: f64,
    pub mean_drift_theoretical: f64,
    pub se_drift_difference: f64,
}

enum ValueFn<'a> {
    Curve(&'a [f64]),
    Surface(&'a PdeSolution),
}

impl ValueFn<'_> {
    fn value(&self, node: usize, t: f64, s: f64) -> f64 {
        match self {
            ValueFn::Curve(v) => v[node],
            ValueFn::Surface(sol) => sol.value_at(t, s),
        }
    }

    fn delta(&self, t: f64, s: f64) -> f64 {
        match self {
            ValueFn::Curve(_) => 0.0,
            ValueFn::Surface(sol) => sol.delta_at(t, s),
        }
    }
}

/// Collateralized market-risk hedge: a forward on the underlying struck at
/// the initial forward level, so it starts worthless and carries no gamma.
/// Priced at the collateral rate like every exchange-facing instrument.
struct MarketHedge {
    strike: f64,
    maturity: f64,
}

impl MarketHedge {
    fn new(model: &MarketModel, maturity: f64) -> Self {
        let curves = model.curves();
        let carry = (curves.asset_rate.integral(0.0, maturity)
            - curves.dividend_yield.integral(0.0, maturity))
        .exp();
        Self {
            strike: model.underlying().spot * carry,
            maturity,
        }
    }

    fn value_and_delta(&self, model: &MarketModel, t: f64, s: f64) -> (f64, f64) {
        let curves = model.curves();
        let df_c = curves.ois_discount(t, self.maturity);
        let carry = (curves.asset_rate.integral(t, self.maturity)
            - curves.dividend_yield.integral(t, self.maturity))
        .exp();
        (df_c * (s * carry - self.strike), df_c * carry)
    }
}

const REGRESSION_GROUPS: usize = 16;

#[derive(Clone, Copy)]
struct OlsSums {
    // Cross products of (1, dW_S, dW_I, dW_H) and the response.
    xtx: [[f64; 4]; 4],
    xty: [f64; 4],
    n: f64,
}

impl Default for OlsSums {
    fn default() -> Self {
        Self {
            xtx: [[0.0; 4]; 4],
            xty: [0.0; 4],
            n: 0.0,
        }
    }
}

impl OlsSums {
    fn add(&mut self, dw: [f64; 3], y: f64) {
        let x = [1.0, dw[0], dw[1], dw[2]];
        for a in 0..4 {
            for b in 0..4 {
                self.xtx[a][b] += x[a] * x[b];
            }
            self.xty[a] += x[a] * y;
        }
        self.n += 1.0;
    }

    fn merge(&mut self, other: &OlsSums) {
        for a in 0..4 {
            for b in 0..4 {
                self.xtx[a][b] += other.xtx[a][b];
            }
            self.xty[a] += other.xty[a];
        }
        self.n += other.n;
    }

    fn coefficients(&self) -> Option<[f64; 4]> {
        let mut mat = vec![0.0; 16];
        for a in 0..4 {
            for b in 0..4 {
                mat[a * 4 + b] = self.xtx[a][b];
            }
        }
        let mut coef = self.xty.to_vec();
        crate::math::solve_spd_ridge(&mut mat, &mut coef, 4, 1e-12 * self.n.max(1.0)).ok()?;
        Some([coef[0], coef[1], coef[2], coef[3]])
    }
}

/// Regression sums split into path groups. The reported standard errors are
/// batch-means estimates (scatter of the per-group coefficients), which stay
/// honest when the step residuals are heavy tailed.
#[derive(Clone)]
struct RegressionSums {
    groups: Vec<OlsSums>,
}

impl Default for RegressionSums {
    fn default() -> Self {
        Self {
            groups: vec![OlsSums::default(); REGRESSION_GROUPS],
        }
    }
}

impl RegressionSums {
    fn add(&mut self, path: u64, dw: [f64; 3], y: f64) {
        self.groups[(path % REGRESSION_GROUPS as u64) as usize].add(dw, y);
    }

    fn merge(mut self, other: RegressionSums) -> Self {
        for (a, b) in self.groups.iter_mut().zip(&other.groups) {
            a.merge(b);
        }
        self
    }

    fn solve(&self) -> StepRegression {
        let mut pooled = OlsSums::default();
        for g in &self.groups {
            pooled.merge(g);
        }
        let point = pooled.coefficients().unwrap_or([0.0; 4]);

        let group_coefs: Vec<[f64; 4]> = self
            .groups
            .iter()
            .filter(|g| g.n >= 8.0)
            .filter_map(|g| g.coefficients())
            .collect();
        let k = group_coefs.len() as f64;
        let mut std_errors = [f64::INFINITY; 3];
        if k >= 2.0 {
            for slot in 0..3 {
                let mean = group_coefs.iter().map(|c| c[slot + 1]).sum::<f64>() / k;
                let var = group_coefs
                    .iter()
                    .map(|c| (c[slot + 1] - mean).powi(2))
                    .sum::<f64>()
                    / (k - 1.0);
                std_errors[slot] = (var / k).sqrt();
            }
        }
        StepRegression {
            coefficients: [point[1], point[2], point[3]],
            std_errors,
            n_samples: pooled.n as u64,
        }
    }
}

#[derive(Clone, Default)]
struct SimAccumulator {
    outcomes: Vec<PathOutcome>,
    err_sum: f64,
    err_sq: f64,
    n_defaults: usize,
    max_jump_residual: f64,
    max_funding_residual: f64,
    drift_real: f64,
    drift_theo: f64,
    drift_diff_sq: f64,
    regression: RegressionSums,
}

/// Simulates the hedged portfolio through time and reports the hedging
/// error statistics.
///
/// Deterministic-spread mode only: the deal's value function comes from the
/// deterministic backward induction (deposit) or the PDE surface (forward,
/// call). Weights rebalance at every grid node; on a default event the
/// positions are rebalanced at the default node before the jump legs fire,
/// so the cancellation enforced by the weight construction is exact there
/// and the remaining error reflects discrete rebalancing only.
pub fn replication_pnl(
    deal: &DealSpec,
    model: &MarketModel,
    cfg: &ReplicationConfig,
) -> Result<ReplicationStats, HedgeError> {
    deal.validate()?;
    model.require_coverage(deal.maturity)?;
    if cfg.n_paths == 0 || cfg.n_steps == 0 {
        return Err(HedgeError::Config(
            "n_paths and n_steps must be >= 1".into(),
        ));
    }
    let maturity = deal.maturity;
    if !model.hedger().spread_vol.is_constant_eq(0.0, maturity)
        || !model.investor().spread_vol.is_constant_eq(0.0, maturity)
    {
        return Err(HedgeError::Config(
            "replication simulation requires deterministic spreads".into(),
        ));
    }

    let grid = TimeGrid::uniform(maturity, cfg.n_steps).map_err(HedgeError::Model)?;

    // Value function for the deal.
    let curve_storage;
    let surface_storage;
    let value_fn = if deal.depends_on_spot() {
        // Align the PDE time grid with the simulation nodes. The surface
        // resolution bounds the greeks' interpolation bias, which is what
        // limits the diffusion cancellation diagnostics.
        let refine = (600 / cfg.n_steps).max(1);
        let pde_grid = PdeGrid {
            n_space: cfg.pde_space,
            n_time: cfg.n_steps * refine,
            ..PdeGrid::default()
        };
        surface_storage = pde_price(deal, model, &pde_grid)?;
        ValueFn::Surface(&surface_storage)
    } else {
        curve_storage = deterministic_value_curve(deal, model, &grid, 1e-12, 100)?;
        ValueFn::Curve(&curve_storage)
    };

    let coeffs = SimCoeffs::new(model, &grid, FactorMask::ALL)?;
    let hedge_instrument = MarketHedge::new(model, maturity);
    let times = grid.times().to_vec();
    let n_steps = cfg.n_steps;
    let curves = model.curves();
    let r_i = model.investor().recovery;
    let r_h = model.hedger().recovery;
    let lgd_i = model.investor().lgd();
    let lgd_h = model.hedger().lgd();
    let notional = deal.notional.abs();

    // Deterministic funding and premium rates per node.
    let pi_i = crate::simulation::deterministic_spread_path(model, PartyRole::Investor, &grid);
    let pi_h = crate::simulation::deterministic_spread_path(model, PartyRole::Hedger, &grid);
    let c_nodes: Vec<f64> = times.iter().map(|&t| curves.ois.value(t)).collect();
    let gamma_nodes: Vec<f64> = times
        .iter()
        .map(|&t| model.hedger().basis.value(t))
        .collect();
    let funding_rate: Vec<f64> = (0..=n_steps)
        .map(|j| c_nodes[j] + pi_h[j] + gamma_nodes[j])
        .collect();

    let vol_curve = &model.underlying().vol;

    let stats = fold_paths(
        model,
        &coeffs,
        cfg.n_paths as u64,
        cfg.seed,
        false,
        SimAccumulator::default,
        |acc: &mut SimAccumulator, rec: &PathRecord<'_>| {
            let tau_i = rec.default_investor.unwrap_or(usize::MAX);
            let tau_h = rec.default_hedger.unwrap_or(usize::MAX);
            // Simultaneous grid defaults: the hedger event is processed.
            let (end, default_party) = if tau_h <= tau_i && tau_h <= n_steps {
                (tau_h, Some(DefaultingParty::Hedger))
            } else if tau_i < tau_h && tau_i <= n_steps {
                (tau_i, Some(DefaultingParty::Investor))
            } else {
                (n_steps, None)
            };

            let mut hedge_error = 0.0;
            let mut jump_residual = None;
            let mut path_drift_real = 0.0;
            let mut path_drift_theo = 0.0;

            for j in 0..end {
                let t = times[j];
                let t_next = times[j + 1];
                let dt = t_next - t;
                let s = rec.spot[j];
                let s_next = rec.spot[j + 1];

                let v = value_fn.value(j, t, s);
                let v_next = value_fn.value(j + 1, t_next, s_next);

                let co = collateralized_value(deal, curves, vol_curve, s, t)
                    .expect("t <= maturity on the grid");
                let target_i = close_out_target(&co, DefaultingParty::Investor, r_i, r_h);
                let target_h = close_out_target(&co, DefaultingParty::Hedger, r_i, r_h);

                // Rebalance at the left node.
                let dv_ds = value_fn.delta(t, s);
                let (h_value, dh_ds) = hedge_instrument.value_and_delta(model, t, s);
                let alpha = if dh_ds.abs() > 1e-14 {
                    dv_ds / dh_ds
                } else {
                    0.0
                };
                let epsilon = -(target_i - v) / lgd_i;
                let eta = -v - (target_h - v) / lgd_h;
                let bond_short = (-funding_rate[j] * dt).exp();
                let omega_short = v / bond_short;
                let beta = -alpha * h_value;
                // Funding constraint residual (long bond weight is zero in
                // the deterministic-spread reduction).
                let funding_residual = (v - omega_short * bond_short).abs() / v.abs().max(1e-12);
                acc.max_funding_residual = acc.max_funding_residual.max(funding_residual);

                // Gains over the step, per position.
                let co_next = collateralized_value(deal, curves, vol_curve, s_next, t_next)
                    .expect("t <= maturity on the grid");
                let (h_next, _) = hedge_instrument.value_and_delta(model, t_next, s_next);
                let market = alpha * (h_next - h_value);
                let collateral = beta * c_nodes[j] * dt;
                let cds_i_premium = epsilon * pi_i[j] * dt;
                let self_cds_premium = eta * pi_h[j] * dt;
                let bond_gain = omega_short * bond_short * ((funding_rate[j] * dt).exp_m1());
                let mut step_pnl =
                    market + collateral + cds_i_premium + self_cds_premium + bond_gain;

                let mut dv = v_next - v;

                // Default at the right node: rebalance there, then settle
                // the jump legs with the fresh positions.
                if j + 1 == end {
                    if let Some(party) = default_party {
                        let v_pre = v_next;
                        let co_def = co_next;
                        let target_i_def =
                            close_out_target(&co_def, DefaultingParty::Investor, r_i, r_h);
                        let target_h_def =
                            close_out_target(&co_def, DefaultingParty::Hedger, r_i, r_h);
                        let eps_def = -(target_i_def - v_pre) / lgd_i;
                        let eta_def = -v_pre - (target_h_def - v_pre) / lgd_h;
                        let dt_def = if j + 1 < n_steps {
                            times[j + 2] - times[j + 1]
                        } else {
                            dt
                        };
                        let bond_short_def = (-funding_rate[j + 1] * dt_def).exp();
                        let omega_def = v_pre / bond_short_def;

                        let (legs, dv_jump) = match party {
                            DefaultingParty::Investor => (-eps_def * lgd_i, target_i_def - v_pre),
                            DefaultingParty::Hedger => (
                                omega_def * (r_h - 1.0) * bond_short_def - eta_def * lgd_h,
                                target_h_def - v_pre,
                            ),
                        };
                        let residual = (legs - dv_jump) / notional;
                        jump_residual = Some(residual);
                        acc.max_jump_residual = acc.max_jump_residual.max(residual.abs());
                        step_pnl += legs;
                        dv += dv_jump;
                    }
                }

                hedge_error += step_pnl - dv;

                // Diagnostics. Diffusion cancellation: loading of the
                // same-time spot-move mismatch on the Brownian increments.
                let sqrt_dt = dt.sqrt();
                let dw = [
                    rec.increments[3 * j] * sqrt_dt,
                    rec.increments[3 * j + 1] * sqrt_dt,
                    rec.increments[3 * j + 2] * sqrt_dt,
                ];
                let (h_moved, _) = hedge_instrument.value_and_delta(model, t, s_next);
                let v_moved = value_fn.value(j, t, s_next);
                let diffusion_mismatch = alpha * (h_moved - h_value) - (v_moved - v);
                acc.regression
                    .add(rec.index, dw, diffusion_mismatch / notional);

                // Realized portfolio drift versus (f - pi_H) V per step.
                path_drift_real += step_pnl;
                path_drift_theo += (funding_rate[j] - pi_h[j]) * v * dt;
            }
            acc.drift_real += path_drift_real;
            acc.drift_theo += path_drift_theo;
            acc.drift_diff_sq += (path_drift_real - path_drift_theo).powi(2);

            acc.outcomes.push(PathOutcome {
                path: rec.index,
                terminal_error: hedge_error / notional,
                default_party,
                default_time: default_party.map(|_| times[end]),
                jump_residual,
            });
            if default_party.is_some() {
                acc.n_defaults += 1;
            }
            acc.err_sum += hedge_error / notional;
            acc.err_sq += (hedge_error / notional) * (hedge_error / notional);
        },
        |mut a, b| {
            a.outcomes.extend(b.outcomes);
            a.err_sum += b.err_sum;
            a.err_sq += b.err_sq;
            a.n_defaults += b.n_defaults;
            a.max_jump_residual = a.max_jump_residual.max(b.max_jump_residual);
            a.max_funding_residual = a.max_funding_residual.max(b.max_funding_residual);
            a.drift_real += b.drift_real;
            a.drift_theo += b.drift_theo;
            a.drift_diff_sq += b.drift_diff_sq;
            a.regression = a.regression.merge(b.regression);
            a
        },
    );

    let n = cfg.n_paths as f64;
    let mean = stats.err_sum / n;
    let var = (stats.err_sq / n - mean * mean).max(0.0);
    let regression = stats.regression.solve();
    let drift_diff_mean = (stats.drift_real - stats.drift_theo) / n;
    let drift_diff_var = (stats.drift_diff_sq / n - drift_diff_mean * drift_diff_mean).max(0.0);
    Ok(ReplicationStats {
        outcomes: stats.outcomes,
        mean_error: mean,
        std_error: var.sqrt(),
        n_defaults: stats.n_defaults,
        max_jump_residual: stats.max_jump_residual,
        max_funding_residual: stats.max_funding_residual,
        regression,
        mean_drift_realized: stats.drift_real / n,
        mean_drift_theoretical: stats.drift_theo / n,
        se_drift_difference: (drift_diff_var / n).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instruments::Direction;
    use crate::market_model::{CorrelationSet, PartyCredit, RateCurves, UnderlyingSpec};
    use crate::term_structure::PiecewiseConstant;
    use approx::assert_relative_eq;

    fn party(role: PartyRole, recovery: f64, spread0: f64, basis: f64) -> PartyCredit {
        PartyCredit {
            role,
            recovery,
            spread0,
            spread_drift: PiecewiseConstant::flat(0.0),
            spread_vol: PiecewiseConstant::flat(0.0),
            credit_risk_premium: PiecewiseConstant::flat(0.0),
            basis: PiecewiseConstant::flat(basis),
        }
    }

    fn det_model(lambda_i: f64, lambda_h: f64, gamma: f64, sigma: f64) -> MarketModel {
        MarketModel::new(
            RateCurves {
                ois: PiecewiseConstant::flat(0.01),
                asset_rate: PiecewiseConstant::flat(0.01),
                dividend_yield: PiecewiseConstant::flat(0.0),
            },
            party(PartyRole::Hedger, 0.4, lambda_h * 0.6, gamma),
            party(PartyRole::Investor, 0.4, lambda_i * 0.6, 0.0),
            UnderlyingSpec {
                spot: 100.0,
                drift: PiecewiseConstant::flat(0.0),
                vol: PiecewiseConstant::flat(sigma),
            },
            CorrelationSet::zero(),
            10.0,
        )
        .unwrap()
    }

    fn base_inputs() -> HedgeInputs {
        HedgeInputs {
            value: 90.0,
            dv_ds: 0.0,
            dh_ds: 1.0,
            dv_dpi_investor: 0.0,
            dcds_dpi_investor: 1.0,
            dv_dpi_hedger: 0.0,
            dbond_dpi_hedger: -1.0,
            jump_v_investor: 0.0,
            jump_v_hedger: 0.0,
            jump_cds_investor: 0.0,
            recovery_investor: 0.4,
            recovery_hedger: 0.4,
            hedge_value: 0.0,
            cds_investor_value: 0.0,
            bond_short_price: 1.0,
            bond_long_price: 0.9,
        }
    }

    #[test]
    fn epsilon_vanishes_without_investor_jump_exposure() {
        let w = hedge_weights(&base_inputs()).unwrap();
        assert_eq!(w.epsilon, 0.0);
    }

    #[test]
    fn eta_on_liability_side_equals_minus_value() {
        // V = V^C < 0: the hedger's default leaves the value unchanged, so
        // eta = -V.
        let inputs = HedgeInputs {
            value: -50.0,
            jump_v_hedger: 0.0,
            ..base_inputs()
        };
        let w = hedge_weights(&inputs).unwrap();
        assert_relative_eq!(w.eta, 50.0, epsilon = 1e-12);
    }

    #[test]
    fn eta_matches_symbolic_substitution() {
        // V = V^C >= 0, R_H = 0.4: eta = R_H (V - V^C) / (1 - R_H), zero at
        // V = V^C; with V = 90, V^C = 100 the jump is -50 and eta = -20/3.
        let at_close_out = HedgeInputs {
            value: 100.0,
            jump_v_hedger: 0.4 * 100.0 - 100.0,
            ..base_inputs()
        };
        let w = hedge_weights(&at_close_out).unwrap();
        assert_relative_eq!(w.eta, 0.0, epsilon = 1e-12);

        let inputs = HedgeInputs {
            value: 90.0,
            jump_v_hedger: 0.4 * 100.0 - 90.0,
            ..base_inputs()
        };
        let w = hedge_weights(&inputs).unwrap();
        assert_relative_eq!(w.eta, -90.0 + 50.0 / 0.6, epsilon = 1e-12);
        assert_relative_eq!(w.eta, -6.666666666666671, epsilon = 1e-9);
    }

    #[test]
    fn funding_constraint_defines_short_bond() {
        let inputs = HedgeInputs {
            value: 80.0,
            dv_dpi_hedger: -450.0,
            dbond_dpi_hedger: -4.5,
            bond_short_price: 0.999,
            bond_long_price: 0.9,
            ..base_inputs()
        };
        let w = hedge_weights(&inputs).unwrap();
        assert_relative_eq!(w.long_bond, 100.0, epsilon = 1e-12);
        let replicated = w.short_bond * 0.999 + w.long_bond * 0.9;
        assert_relative_eq!(replicated, 80.0, max_relative = 1e-12);
    }

    #[test]
    fn vanishing_sensitivity_is_an_error_only_with_exposure() {
        let mut inputs = base_inputs();
        inputs.dv_ds = 1.0;
        inputs.dh_ds = 0.0;
        assert!(matches!(
            hedge_weights(&inputs),
            Err(HedgeError::VanishingSensitivity {
                instrument: "collateralized derivative"
            })
        ));
        inputs.dv_ds = 0.0;
        let w = hedge_weights(&inputs).unwrap();
        assert_eq!(w.alpha, 0.0);
    }

    #[test]
    fn collateral_identity() {
        let inputs = HedgeInputs {
            dv_ds: 2.0,
            dh_ds: 0.5,
            dv_dpi_investor: -30.0,
            dcds_dpi_investor: 4.0,
            hedge_value: 25.0,
            cds_investor_value: 1.5,
            ..base_inputs()
        };
        let w = hedge_weights(&inputs).unwrap();
        assert_relative_eq!(w.alpha, 4.0, epsilon = 1e-12);
        assert_relative_eq!(w.xi, -7.5, epsilon = 1e-12);
        assert_relative_eq!(w.beta, -w.alpha * 25.0 - w.xi * 1.5, epsilon = 1e-12);
    }

    #[test]
    fn deposit_replication_cancels_jumps_exactly() {
        let model = det_model(0.02, 0.05, 0.004, 0.2);
        let deal = DealSpec::deposit(100.0, 5.0, Direction::Long);
        let cfg = ReplicationConfig {
            n_paths: 2_000,
            n_steps: 100,
            seed: 9,
            ..ReplicationConfig::default()
        };
        let stats = replication_pnl(&deal, &model, &cfg).unwrap();
        assert!(stats.n_defaults > 100, "defaults {}", stats.n_defaults);
        assert!(
            stats.max_jump_residual <= 1e-10,
            "max jump residual {}",
            stats.max_jump_residual
        );
        assert!(stats.max_funding_residual <= 1e-12);
        // Hedging error is pure drift discretization for the deposit.
        assert!(stats.std_error < 1e-3, "std {}", stats.std_error);
    }

    #[test]
    fn deposit_drift_matches_funding_spread_times_value() {
        // gamma != 0: the mean portfolio drift per step must match
        // (f - pi_H) V within discretization error.
        let model = det_model(0.01, 0.03, 0.006, 0.2);
        let deal = DealSpec::deposit(100.0, 5.0, Direction::Long);
        let cfg = ReplicationConfig {
            n_paths: 4_000,
            n_steps: 200,
            seed: 21,
            ..ReplicationConfig::default()
        };
        let stats = replication_pnl(&deal, &model, &cfg).unwrap();
        // Jump legs versus their compensators are noisy but unbiased, so
        // the comparison carries the per-path difference's standard error
        // plus an O(dt) discretization allowance.
        let diff = (stats.mean_drift_realized - stats.mean_drift_theoretical).abs();
        let tol =
            3.0 * stats.se_drift_difference + 0.01 * stats.mean_drift_theoretical.abs().max(1e-6);
        assert!(
            diff <= tol,
            "drift realized {} vs theoretical {} (tol {tol})",
            stats.mean_drift_realized,
            stats.mean_drift_theoretical
        );
    }

    #[test]
    fn call_replication_diffusion_cancellation() {
        let model = det_model(0.02, 0.03, 0.004, 0.2);
        let deal = DealSpec::european_call(1.0, 1.0, 100.0, Direction::Long);
        let cfg = ReplicationConfig {
            n_paths: 2_000,
            n_steps: 50,
            seed: 33,
            pde_space: 1600,
        };
        let stats = replication_pnl(&deal, &model, &cfg).unwrap();
        assert!(stats.max_jump_residual <= 1e-10);
        for k in 0..3 {
            let coef = stats.regression.coefficients[k];
            let se = stats.regression.std_errors[k];
            assert!(
                coef.abs() <= 3.0 * se + 1e-10,
                "dW loading {k}: {coef} vs se {se}"
            );
        }
    }

    #[test]
    fn call_hedging_error_shrinks_with_sqrt_dt() {
        let model = det_model(0.01, 0.02, 0.002, 0.2);
        let deal = DealSpec::european_call(1.0, 1.0, 100.0, Direction::Long);
        let mut stds = Vec::new();
        for steps in [50, 100, 200] {
            let cfg = ReplicationConfig {
                n_paths: 2_000,
                n_steps: steps,
                seed: 55,
                pde_space: 1600,
            };
            let stats = replication_pnl(&deal, &model, &cfg).unwrap();
            stds.push(stats.std_error);
        }
        let sqrt2 = 2.0_f64.sqrt();
        for w in stds.windows(2) {
            let ratio = w[0] / w[1];
            assert!(
                ratio > sqrt2 / 1.5 && ratio < sqrt2 * 1.5,
                "ratio {ratio}, stds {stds:?}"
            );
        }
    }

    #[test]
    fn rejects_stochastic_spread_models() {
        let base = det_model(0.01, 0.02, 0.0, 0.2);
        let model = MarketModel::new(
            base.curves().clone(),
            PartyCredit {
                spread_vol: PiecewiseConstant::flat(0.002),
                ..base.hedger().clone()
            },
            base.investor().clone(),
            base.underlying().clone(),
            base.correlations().clone(),
            10.0,
        )
        .unwrap();
        let deal = DealSpec::deposit(100.0, 5.0, Direction::Long);
        assert!(matches!(
            replication_pnl(&deal, &model, &ReplicationConfig::default()),
            Err(HedgeError::Config(_))
        ));
    }
}
