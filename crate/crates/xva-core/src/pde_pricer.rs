//! Finite-difference solver for the pricing PDE in the deterministic-spread
//! reduction.
//!
//! With zero spread volatilities the spreads become known functions of time
//! and the PDE collapses to one spatial dimension in the underlying:
//!
//!   V_t + (r - q) S V_S + sigma^2 S^2 V_SS / 2
//!       + lambda_I (target_I - V) + lambda_H (target_H - V) = (c + gamma) V
//!
//! where target_k is the riskless close-out level the value jumps to on a
//! default of party k, evaluated from the analytic collateralized value.
//! The jump terms therefore split into a reaction part, absorbed into the
//! implicit operator together with the funding rate c + gamma (the scheme
//! stays stable for arbitrarily large intensities), and an explicit source
//! lambda_I target_I + lambda_H target_H known in closed form at every grid
//! point.
//!
//! Discretization: log-spaced spot grid, theta time stepping (theta = 1/2 is
//! Crank-Nicolson), far-field linearity V_SS = 0 at both spot boundaries.
//! Kinked payoffs get the strike centered between nodes and a Rannacher
//! start-off (implicit half-steps) to restore smooth second-order
//! convergence.

use crate::instruments::{
    close_out_target, CloseOutValues, DealKind, DealSpec, DefaultingParty, InstrumentError,
};
use crate::market_model::{MarketModel, ModelError, PartyRole};
use crate::simulation::{deterministic_spread_path, TimeGrid};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PdeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Instrument(#[from] InstrumentError),
    #[error("PDE reduction requires zero spread volatilities (found nonzero {0} spread vol)")]
    StochasticSpreads(&'static str),
    #[error("grid too coarse: n_space = {0}, need at least 3")]
    GridTooCoarse(usize),
    #[error("invalid PDE configuration: {0}")]
    Config(String),
}

/// Spatial and temporal discretization parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeGrid {
    pub n_space: usize,
    pub n_time: usize,
    /// Implicit weight of the theta scheme; 0.5 is Crank-Nicolson.
    pub theta: f64,
    /// Half-width of the log-spot domain in terminal standard deviations.
    pub domain_stddevs: f64,
    /// Optional explicit spot bounds overriding the automatic domain.
    pub s_min: Option<f64>,
    pub s_max: Option<f64>,
}

impl Default for PdeGrid {
    fn default() -> Self {
        Self {
            n_space: 200,
            n_time: 200,
            theta: 0.5,
            domain_stddevs: 7.5,
            s_min: None,
            s_max: None,
        }
    }
}

/// Backward-solved value surface V(t, S) on the full time-space grid.
#[derive(Debug, Clone)]
pub struct PdeSolution {
    times: Vec<f64>,
    x_nodes: Vec<f64>,
    /// Row-major values, one row of length n_space per time node.
    values: Vec<f64>,
    spot0: f64,
}

impl PdeSolution {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn spot_nodes(&self) -> Vec<f64> {
        self.x_nodes.iter().map(|&x| x.exp()).collect()
    }

    fn n_space(&self) -> usize {
        self.x_nodes.len()
    }

    fn row(&self, m: usize) -> &[f64] {
        let n = self.n_space();
        &self.values[m * n..(m + 1) * n]
    }

    fn time_bracket(&self, t: f64) -> (usize, usize, f64) {
        let times = &self.times;
        if t <= times[0] {
            return (0, 0, 0.0);
        }
        if t >= *times.last().unwrap() {
            let last = times.len() - 1;
            return (last, last, 0.0);
        }
        let hi = times.partition_point(|&u| u < t).max(1);
        let lo = hi - 1;
        let w = (t - times[lo]) / (times[hi] - times[lo]);
        (lo, hi, w)
    }

    /// Catmull-Rom cubic coefficients on one time row at log-spot x.
    fn cubic_at(&self, row: &[f64], x: f64) -> (f64, f64, f64, f64, f64) {
        let xs = &self.x_nodes;
        let n = xs.len();
        let dx = xs[1] - xs[0];
        let pos = ((x - xs[0]) / dx).clamp(0.0, (n - 1) as f64);
        let i = (pos.floor() as usize).clamp(1, n - 3);
        let t = pos - i as f64;
        let (a, b, c, d) = (row[i - 1], row[i], row[i + 1], row[i + 2]);
        let c0 = b;
        let c1 = 0.5 * (c - a);
        let c2 = a - 2.5 * b + 2.0 * c - 0.5 * d;
        let c3 = 0.5 * (d - a) + 1.5 * (b - c);
        (c0, c1, c2, c3, t)
    }

    /// Four-point Lagrange interpolation in log-spot on one time row.
    fn interp_row(&self, row: &[f64], x: f64) -> f64 {
        let (c0, c1, c2, c3, t) = self.cubic_at(row, x);
        c0 + t * (c1 + t * (c2 + t * c3))
    }

    /// Exact d/dx of the interpolant on one time row.
    fn interp_row_slope(&self, row: &[f64], x: f64) -> f64 {
        let dx = self.x_nodes[1] - self.x_nodes[0];
        let (_, c1, c2, c3, t) = self.cubic_at(row, x);
        (c1 + t * (2.0 * c2 + 3.0 * t * c3)) / dx
    }

    /// Interpolated value at (t, S): cubic in log-spot, linear in time.
    pub fn value_at(&self, t: f64, spot: f64) -> f64 {
        let x = spot.ln();
        let (lo, hi, w) = self.time_bracket(t);
        let v_lo = self.interp_row(self.row(lo), x);
        if lo == hi {
            return v_lo;
        }
        let v_hi = self.interp_row(self.row(hi), x);
        v_lo + w * (v_hi - v_lo)
    }

    /// Interpolated dV/dS at (t, S): exact derivative of the log-spot
    /// interpolant, so deltas are consistent with `value_at` revaluations.
    pub fn delta_at(&self, t: f64, spot: f64) -> f64 {
        let x = spot.ln();
        let (lo, hi, w) = self.time_bracket(t);
        let g_lo = self.interp_row_slope(self.row(lo), x);
        let g = if lo == hi {
            g_lo
        } else {
            g_lo + w * (self.interp_row_slope(self.row(hi), x) - g_lo)
        };
        g / spot
    }

    /// Value at the model spot and t = 0.
    pub fn value0(&self) -> f64 {
        self.value_at(0.0, self.spot0)
    }
}

struct Tridiagonal {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl Tridiagonal {
    fn solve(&self, rhs: &mut [f64], scratch: &mut [f64]) {
        let n = rhs.len();
        scratch[0] = self.upper[0] / self.diag[0];
        rhs[0] /= self.diag[0];
        for i in 1..n {
            let denom = self.diag[i] - self.lower[i] * scratch[i - 1];
            scratch[i] = self.upper[i] / denom;
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) / denom;
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= scratch[i] * rhs[i + 1];
        }
    }
}

/// Per-time-node coefficients of the spatial operator and the jump source.
struct LevelCoeffs {
    /// Convection in log-spot, r - q - sigma^2 / 2.
    a: f64,
    /// Diffusion sigma^2 / 2.
    b: f64,
    /// Reaction c + gamma + lambda_I + lambda_H.
    rho: f64,
    lambda_i: f64,
    lambda_h: f64,
    /// Boundary convection r - q (the V_SS = 0 condition collapses the
    /// diffusion term into the convection there).
    a_boundary: f64,
}

/// Solves the deterministic-spread PDE for the deal and returns the full
/// value surface. Requires both spread volatilities to vanish on [0, T].
pub fn pde_price(
    deal: &DealSpec,
    model: &MarketModel,
    grid: &PdeGrid,
) -> Result<PdeSolution, PdeError> {
    deal.validate()?;
    model.require_coverage(deal.maturity)?;
    if grid.n_space < 3 {
        return Err(PdeError::GridTooCoarse(grid.n_space));
    }
    if grid.n_time == 0 {
        return Err(PdeError::Config("n_time must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&grid.theta) {
        return Err(PdeError::Config(format!(
            "theta must lie in [0, 1], got {}",
            grid.theta
        )));
    }
    let maturity = deal.maturity;
    if !model.hedger().spread_vol.is_constant_eq(0.0, maturity) {
        return Err(PdeError::StochasticSpreads("hedger"));
    }
    if !model.investor().spread_vol.is_constant_eq(0.0, maturity) {
        return Err(PdeError::StochasticSpreads("investor"));
    }

    let curves = model.curves();
    let underlying = model.underlying();
    let spot0 = underlying.spot;
    let x0 = spot0.ln();

    // Automatic domain: terminal-stddev half width plus the carry span,
    // never collapsing for zero vol.
    let total_sd = underlying
        .vol
        .integral_of_square(0.0, maturity)
        .max(0.0)
        .sqrt();
    let carry_span =
        curves.asset_rate.integral(0.0, maturity) - curves.dividend_yield.integral(0.0, maturity);
    let half_width = (grid.domain_stddevs * total_sd).max(0.5) + carry_span.abs();
    let mut x_min = grid.s_min.map_or(x0 - half_width, f64::ln);
    let mut x_max = grid.s_max.map_or(x0 + half_width, f64::ln);
    if let Some(k) = deal.strike {
        let xk = k.ln();
        let pad = (x_max - x_min) / grid.n_space as f64 * 2.0;
        x_min = x_min.min(xk - pad);
        x_max = x_max.max(xk + pad);
    }
    if !(x_min < x0 && x0 < x_max) {
        return Err(PdeError::Config(
            "spot domain does not contain the initial spot".into(),
        ));
    }

    let n = grid.n_space;
    let mut dx = (x_max - x_min) / (n - 1) as f64;
    if deal.kind == DealKind::EuropeanCall {
        // Center the payoff kink between two nodes; sampling errors from
        // the kink then cancel at second order.
        let xk = deal.strike.unwrap().ln();
        let frac = (xk - x_min) / dx;
        let shift = (frac - frac.floor() - 0.5) * dx;
        x_min += shift;
        x_max += shift;
        dx = (x_max - x_min) / (n - 1) as f64;
    }
    let x_nodes: Vec<f64> = (0..n).map(|i| x_min + i as f64 * dx).collect();
    let s_nodes: Vec<f64> = x_nodes.iter().map(|&x| x.exp()).collect();

    let time_grid = TimeGrid::uniform(maturity, grid.n_time)
        .map_err(|_| PdeError::Config("invalid time grid".into()))?;
    let times = time_grid.times().to_vec();
    let dt = maturity / grid.n_time as f64;

    // Deterministic spread paths on the PDE time grid share the Euler
    // flooring convention with the simulation engine.
    let pi_i = deterministic_spread_path(model, PartyRole::Investor, &time_grid);
    let pi_h = deterministic_spread_path(model, PartyRole::Hedger, &time_grid);

    let levels: Vec<LevelCoeffs> = (0..=grid.n_time)
        .map(|m| {
            let t = times[m];
            let sigma = underlying.vol.value(t);
            let conv = curves.asset_rate.value(t) - curves.dividend_yield.value(t);
            let lambda_i = pi_i[m] / model.investor().lgd();
            let lambda_h = pi_h[m] / model.hedger().lgd();
            let gamma = model.hedger().basis.value(t);
            LevelCoeffs {
                a: conv - 0.5 * sigma * sigma,
                b: 0.5 * sigma * sigma,
                rho: curves.ois.value(t) + gamma + lambda_i + lambda_h,
                lambda_i,
                lambda_h,
                a_boundary: conv,
            }
        })
        .collect();

    // Jump source lambda_I target_I + lambda_H target_H from the analytic
    // collateralized value, per time level and spot node.
    let r_i = model.investor().recovery;
    let r_h = model.hedger().recovery;
    let source_row = |m: usize| -> Vec<f64> {
        let t = times[m];
        let df_c = curves.ois_discount(t, maturity);
        let carry = (curves.asset_rate.integral(t, maturity)
            - curves.dividend_yield.integral(t, maturity))
        .exp();
        let sd = underlying
            .vol
            .integral_of_square(t, maturity)
            .max(0.0)
            .sqrt();
        let units = deal.signed_notional();
        s_nodes
            .iter()
            .map(|&s| {
                let vc = match deal.kind {
                    DealKind::Deposit => units * df_c,
                    DealKind::Forward => units * df_c * (s * carry - deal.strike.unwrap()),
                    DealKind::EuropeanCall => {
                        units
                            * df_c
                            * crate::math::black_call_undiscounted(
                                s * carry,
                                deal.strike.unwrap(),
                                sd,
                            )
                    }
                };
                let co = CloseOutValues::from_value(vc);
                levels[m].lambda_i * close_out_target(&co, DefaultingParty::Investor, r_i, r_h)
                    + levels[m].lambda_h * close_out_target(&co, DefaultingParty::Hedger, r_i, r_h)
            })
            .collect()
    };

    // Explicit-side application of (rho I - L) at a time level.
    let apply = |level: &LevelCoeffs, v: &[f64], out: &mut [f64]| {
        let inv_dx = 1.0 / dx;
        let inv_dx2 = inv_dx * inv_dx;
        out[0] = level.rho * v[0] - level.a_boundary * (v[1] - v[0]) * inv_dx;
        for i in 1..n - 1 {
            let vx = (v[i + 1] - v[i - 1]) * 0.5 * inv_dx;
            let vxx = (v[i + 1] - 2.0 * v[i] + v[i - 1]) * inv_dx2;
            out[i] = level.rho * v[i] - level.a * vx - level.b * vxx;
        }
        out[n - 1] = level.rho * v[n - 1] - level.a_boundary * (v[n - 1] - v[n - 2]) * inv_dx;
    };

    // Implicit-side tridiagonal I + w (rho I - L) at a time level.
    let build_matrix = |level: &LevelCoeffs, w: f64| -> Tridiagonal {
        let inv_dx = 1.0 / dx;
        let inv_dx2 = inv_dx * inv_dx;
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        diag[0] = 1.0 + w * (level.rho + level.a_boundary * inv_dx);
        upper[0] = -w * level.a_boundary * inv_dx;
        for i in 1..n - 1 {
            let conv = 0.5 * level.a * inv_dx;
            let diff = level.b * inv_dx2;
            lower[i] = -w * (diff - conv);
            diag[i] = 1.0 + w * (level.rho + 2.0 * diff);
            upper[i] = -w * (diff + conv);
        }
        lower[n - 1] = w * level.a_boundary * inv_dx;
        diag[n - 1] = 1.0 + w * (level.rho - level.a_boundary * inv_dx);
        Tridiagonal { lower, diag, upper }
    };

    let mut values = vec![0.0; (grid.n_time + 1) * n];
    // Terminal condition.
    for (i, &s) in s_nodes.iter().enumerate() {
        values[grid.n_time * n + i] = deal.payoff(s);
    }

    // Rannacher start-off for kinked payoffs at theta = 1/2: the first two
    // backward steps run as implicit half-steps, damping the oscillatory
    // modes the kink excites under Crank-Nicolson.
    let rannacher_steps = if deal.kind == DealKind::EuropeanCall && grid.theta == 0.5 {
        2
    } else {
        0
    };

    let mut explicit = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut sources: Vec<Vec<f64>> = Vec::with_capacity(grid.n_time + 1);
    for m in 0..=grid.n_time {
        sources.push(source_row(m));
    }

    for step in 0..grid.n_time {
        let m_new = grid.n_time - 1 - step;
        let m_old = m_new + 1;
        let (head, tail) = values.split_at_mut(m_old * n);
        let v_new = &mut head[m_new * n..];
        let v_old = &tail[..n];

        if step < rannacher_steps {
            let mut current = v_old.to_vec();
            for _half in 0..2 {
                let matrix = build_matrix(&levels[m_new], 0.5 * dt);
                let mut rhs: Vec<f64> = (0..n)
                    .map(|i| current[i] + 0.5 * dt * sources[m_new][i])
                    .collect();
                matrix.solve(&mut rhs, &mut scratch);
                current = rhs;
            }
            v_new.copy_from_slice(&current);
        } else {
            let theta = grid.theta;
            apply(&levels[m_old], v_old, &mut explicit);
            let mut rhs: Vec<f64> = (0..n)
                .map(|i| {
                    v_old[i] - (1.0 - theta) * dt * explicit[i]
                        + dt * (theta * sources[m_new][i] + (1.0 - theta) * sources[m_old][i])
                })
                .collect();
            let matrix = build_matrix(&levels[m_new], theta * dt);
            matrix.solve(&mut rhs, &mut scratch);
            v_new.copy_from_slice(&rhs);
        }
    }

    Ok(PdeSolution {
        times,
        x_nodes,
        values,
        spot0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::{price_deposit_const, DepositParams};
    use crate::instruments::{collateralized_value, Direction};
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

    fn model(lambda_i: f64, lambda_h: f64, gamma: f64, sigma: f64, c: f64, r: f64) -> MarketModel {
        MarketModel::new(
            RateCurves {
                ois: PiecewiseConstant::flat(c),
                asset_rate: PiecewiseConstant::flat(r),
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

    #[test]
    fn deposit_matches_closed_form() {
        let m = model(0.01, 0.03, 0.005, 0.2, 0.02, 0.02);
        let deal = DealSpec::deposit(100.0, 5.0, Direction::Long);
        let solution = pde_price(&deal, &m, &PdeGrid::default()).unwrap();
        let cf = price_deposit_const(&DepositParams {
            notional: 100.0,
            ois: 0.02,
            lambda_investor: 0.01,
            lambda_hedger: 0.03,
            recovery_hedger: 0.4,
            basis_hedger: 0.005,
            horizon: 5.0,
        });
        assert_relative_eq!(solution.value0(), cf, max_relative = 1e-6);
    }

    #[test]
    fn deposit_convergence_is_second_order() {
        let m = model(0.01, 0.03, 0.005, 0.2, 0.02, 0.02);
        let deal = DealSpec::deposit(100.0, 5.0, Direction::Long);
        let cf = price_deposit_const(&DepositParams {
            notional: 100.0,
            ois: 0.02,
            lambda_investor: 0.01,
            lambda_hedger: 0.03,
            recovery_hedger: 0.4,
            basis_hedger: 0.005,
            horizon: 5.0,
        });
        let mut errors = Vec::new();
        for steps in [50, 100, 200] {
            let grid = PdeGrid {
                n_space: steps,
                n_time: steps,
                ..PdeGrid::default()
            };
            let v = pde_price(&deal, &m, &grid).unwrap().value0();
            errors.push((v - cf).abs());
        }
        let order1 = (errors[0] / errors[1]).log2();
        let order2 = (errors[1] / errors[2]).log2();
        assert!(
            order1 >= 1.8 && order2 >= 1.8,
            "orders {order1:.2}, {order2:.2}, errors {errors:?}"
        );
    }

    #[test]
    fn riskless_call_matches_black_value() {
        let m = model(0.0, 0.0, 0.0, 0.2, 0.0, 0.0);
        let deal = DealSpec::european_call(1.0, 1.0, 100.0, Direction::Long);
        let solution = pde_price(&deal, &m, &PdeGrid::default()).unwrap();
        let analytic = collateralized_value(&deal, m.curves(), &m.underlying().vol, 100.0, 0.0)
            .unwrap()
            .value;
        assert_relative_eq!(solution.value0(), analytic, max_relative = 1e-4);
    }

    #[test]
    fn discount_consistency_without_credit() {
        // lambda = 0, gamma = 0: the scheme must reproduce pure
        // collateral-rate discounting for the deposit.
        let m = model(0.0, 0.0, 0.0, 0.2, 0.03, 0.03);
        let deal = DealSpec::deposit(100.0, 2.0, Direction::Long);
        let solution = pde_price(&deal, &m, &PdeGrid::default()).unwrap();
        assert_relative_eq!(
            solution.value0(),
            100.0 * (-0.06_f64).exp(),
            max_relative = 1e-7
        );
    }

    #[test]
    fn zero_vol_forward_is_exact_to_discretization() {
        // Pure convection: the scheme degenerates to transport plus
        // discounting. The payoff is linear in S but exponential in
        // log-spot, so a second-order truncation error remains; it must
        // vanish at order ~2 under refinement.
        let m = model(0.0, 0.0, 0.0, 0.0, 0.01, 0.03);
        let k = 100.0 * (0.03_f64 * 2.0).exp();
        let deal = DealSpec::forward(1.0, 2.0, k, Direction::Long);
        let mut errors = Vec::new();
        for steps in [100, 200, 400] {
            let grid = PdeGrid {
                n_space: steps,
                n_time: steps,
                ..PdeGrid::default()
            };
            // At-the-forward strike: exact value is 0.
            errors.push(pde_price(&deal, &m, &grid).unwrap().value0().abs());
        }
        assert!(errors[2] < 1e-4, "errors {errors:?}");
        assert!(errors[2] < errors[0] / 8.0, "errors {errors:?}");

        let deal_itm = DealSpec::forward(1.0, 2.0, 90.0, Direction::Long);
        let solution = pde_price(
            &deal_itm,
            &m,
            &PdeGrid {
                n_space: 400,
                n_time: 400,
                ..PdeGrid::default()
            },
        )
        .unwrap();
        let analytic = collateralized_value(&deal_itm, m.curves(), &m.underlying().vol, 100.0, 0.0)
            .unwrap()
            .value;
        assert_relative_eq!(solution.value0(), analytic, max_relative = 1e-5);
    }

    #[test]
    fn risky_call_matches_deterministic_profile() {
        // Cross-check against the deterministic-mode backward induction,
        // which is exact for deterministic spreads up to grid error.
        let m = model(0.02, 0.03, 0.004, 0.2, 0.01, 0.01);
        let deal = DealSpec::european_call(1.0, 2.0, 100.0, Direction::Long);
        let grid = PdeGrid {
            n_space: 300,
            n_time: 300,
            ..PdeGrid::default()
        };
        let solution = pde_price(&deal, &m, &grid).unwrap();
        let tg = TimeGrid::uniform(2.0, 400).unwrap();
        let curve = crate::mc_pricer::deterministic_value_curve(&deal, &m, &tg, 1e-10, 50).unwrap();
        assert_relative_eq!(solution.value0(), curve[0], max_relative = 2e-3);
    }

    #[test]
    fn rejects_stochastic_spreads_and_coarse_grids() {
        let m = model(0.01, 0.02, 0.0, 0.2, 0.02, 0.02);
        let deal = DealSpec::deposit(100.0, 5.0, Direction::Long);
        assert!(matches!(
            pde_price(
                &deal,
                &m,
                &PdeGrid {
                    n_space: 2,
                    ..PdeGrid::default()
                }
            ),
            Err(PdeError::GridTooCoarse(2))
        ));

        let risky = MarketModel::new(
            m.curves().clone(),
            PartyCredit {
                spread_vol: PiecewiseConstant::flat(0.004),
                ..m.hedger().clone()
            },
            m.investor().clone(),
            m.underlying().clone(),
            m.correlations().clone(),
            10.0,
        )
        .unwrap();
        assert!(matches!(
            pde_price(&deal, &risky, &PdeGrid::default()),
            Err(PdeError::StochasticSpreads("hedger"))
        ));
    }

    #[test]
    fn surface_interpolation_is_smooth() {
        let m = model(0.0, 0.0, 0.0, 0.2, 0.0, 0.0);
        let deal = DealSpec::european_call(1.0, 1.0, 100.0, Direction::Long);
        let solution = pde_price(&deal, &m, &PdeGrid::default()).unwrap();
        // ATM call delta under zero rates is about 0.54.
        let delta = solution.delta_at(0.0, 100.0);
        assert!((delta - 0.54).abs() < 0.01, "delta {delta}");
        assert!(solution.value_at(0.5, 110.0) > solution.value_at(0.5, 95.0));
    }
}
