//! Monte Carlo solver for the recursive pricing equation.
//!
//! The value decomposes into four expectation terms: the collateralized
//! value, a funding term weighting the survival-discounted future value by
//! the hedger's bond-CDS basis, and survival-contingent credit terms that
//! accrue (1-R_I)(V^C)^- when the investor defaults first and
//! -(1-R_H)(V^C)^+ when the hedger defaults first.
//!
//! The funding term is self-referential: the integrand contains the value
//! process itself. It is resolved by Picard iteration on the value profile,
//! which converges geometrically whenever the basis-weighted horizon is
//! small. Two estimators for the profile are available:
//!
//! - deterministic: one value per grid node, computed by backward induction
//!   with analytic survival weights and analytic expectations of the
//!   close-out parts. Exact (up to grid error) when spreads are
//!   deterministic, since defaults are then independent of the underlying.
//! - regression: cross-sectional least squares per node on polynomial basis
//!   functions of (S, pi_I, pi_H), for stochastic-spread models.
//!
//! Collateralized value, CVA and DVA are always estimated directly on the
//! paths, using the analytic close-out value at the default node.

use crate::instruments::{
    close_out_target, expected_close_out_parts, CloseOutValues, DealSpec, DefaultingParty,
    InstrumentError,
};
use crate::market_model::{MarketModel, ModelError, PartyRole};
use crate::simulation::{
    deterministic_spread_path, fold_paths, FactorMask, PathRecord, SimCoeffs, TimeGrid,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum McError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Instrument(#[from] InstrumentError),
    #[error("invalid Monte Carlo configuration: {0}")]
    Config(String),
    #[error(
        "Picard iteration did not converge after {iterations} iterations \
         (last two relative changes {previous_change:.3e}, {last_change:.3e})"
    )]
    PicardNonConvergence {
        iterations: usize,
        previous_change: f64,
        last_change: f64,
    },
    #[error("regression failed at node {node}: {reason}")]
    Regression { node: usize, reason: String },
}

/// Time discretization for a Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSpec {
    /// Uniform grid with the given maximum step size.
    Step(f64),
    /// Explicit node list starting at 0 and ending at the deal maturity.
    Nodes(Vec<f64>),
}

impl GridSpec {
    fn build(&self, maturity: f64) -> Result<TimeGrid, McError> {
        match self {
            GridSpec::Step(dt) => TimeGrid::with_step(maturity, *dt)
                .map_err(|_| McError::Config(format!("invalid grid step {dt}"))),
            GridSpec::Nodes(nodes) => {
                let grid = TimeGrid::from_times(nodes.clone())
                    .map_err(|_| McError::Config("invalid grid nodes".into()))?;
                if (grid.horizon() - maturity).abs() > 1e-12 {
                    return Err(McError::Config(format!(
                        "grid ends at {} but deal matures at {maturity}",
                        grid.horizon()
                    )));
                }
                Ok(grid)
            }
        }
    }
}

/// How the value profile inside the funding integrand is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMode {
    /// V_s is a deterministic function of time (one scalar per node).
    Deterministic,
    /// V_s is fitted per node by least squares on basis functions of
    /// (S, pi_I, pi_H).
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_paths: usize,
    pub grid: GridSpec,
    pub seed: u64,
    /// Relative tolerance on successive value-profile iterates.
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub mode: EstimatorMode,
    /// Total polynomial degree of the regression basis.
    pub regression_degree: usize,
    pub antithetic: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_paths: 100_000,
            grid: GridSpec::Step(0.01),
            seed: 1,
            picard_tol: 1e-8,
            picard_max_iter: 50,
            mode: EstimatorMode::Deterministic,
            regression_degree: 2,
            antithetic: false,
        }
    }
}

impl McConfig {
    fn validate(&self) -> Result<(), McError> {
        if self.n_paths == 0 {
            return Err(McError::Config("n_paths must be >= 1".into()));
        }
        if self.picard_tol.is_nan() || self.picard_tol <= 0.0 {
            return Err(McError::Config("picard_tol must be > 0".into()));
        }
        if self.picard_max_iter == 0 {
            return Err(McError::Config("picard_max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

/// Value of the deal with its decomposition and solver diagnostics.
///
/// The decomposition identity v = v_c + fva + cva + dva holds by
/// construction of the estimators and is asserted on every run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValuationBreakdown {
    pub v: f64,
    pub v_c: f64,
    pub fva: f64,
    pub cva: f64,
    pub dva: f64,
    pub se_v: f64,
    pub se_v_c: f64,
    pub se_fva: f64,
    pub se_cva: f64,
    pub se_dva: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Value-profile estimate at time 0 from the converged fixed point.
    pub picard_value: f64,
    /// Relative change of the value profile per Picard iteration.
    pub picard_deltas: Vec<f64>,
    pub n_paths: usize,
}

/// Per-node deterministic quantities shared by both estimator modes.
struct NodeTables {
    times: Vec<f64>,
    /// OIS discount factor from 0 to each node.
    discount: Vec<f64>,
    /// Joint survival exp(-Lambda_I - Lambda_H) under the deterministic
    /// intensity paths (exact when spreads are deterministic).
    survival: Vec<f64>,
    lambda_i: Vec<f64>,
    lambda_h: Vec<f64>,
    gamma: Vec<f64>,
    /// Unconditional expectations of the close-out parts at each node.
    e_pos: Vec<f64>,
    e_neg: Vec<f64>,
}

impl NodeTables {
    fn build(deal: &DealSpec, model: &MarketModel, grid: &TimeGrid) -> Result<Self, McError> {
        let n = grid.n_nodes();
        let times = grid.times().to_vec();
        let curves = model.curves();
        let vol = &model.underlying().vol;
        let spot0 = model.underlying().spot;

        let pi_i = deterministic_spread_path(model, PartyRole::Investor, grid);
        let pi_h = deterministic_spread_path(model, PartyRole::Hedger, grid);
        let lambda_i: Vec<f64> = pi_i.iter().map(|&x| x / model.investor().lgd()).collect();
        let lambda_h: Vec<f64> = pi_h.iter().map(|&x| x / model.hedger().lgd()).collect();

        let mut discount = Vec::with_capacity(n);
        let mut survival = Vec::with_capacity(n);
        let mut gamma = Vec::with_capacity(n);
        let mut e_pos = Vec::with_capacity(n);
        let mut e_neg = Vec::with_capacity(n);
        let mut cum = 0.0;
        for j in 0..n {
            let t = times[j];
            discount.push(curves.ois_discount(0.0, t));
            if j > 0 {
                let dt = times[j] - times[j - 1];
                cum += 0.5 * (lambda_i[j - 1] + lambda_i[j] + lambda_h[j - 1] + lambda_h[j]) * dt;
            }
            survival.push((-cum).exp());
            gamma.push(model.hedger().basis.value(t));
            let (p, m) = expected_close_out_parts(deal, curves, vol, spot0, t)?;
            e_pos.push(p);
            e_neg.push(m);
        }
        Ok(Self {
            times,
            discount,
            survival,
            lambda_i,
            lambda_h,
            gamma,
            e_pos,
            e_neg,
        })
    }

    fn n_nodes(&self) -> usize {
        self.times.len()
    }

    /// Suffix trapezoid sums of a node function: out[j] = sum over intervals
    /// i >= j of (f[i] + f[i+1]) / 2 * dt_i.
    fn suffix_trapezoid(&self, f: &[f64]) -> Vec<f64> {
        let n = self.n_nodes();
        let mut out = vec![0.0; n];
        for j in (0..n - 1).rev() {
            let dt = self.times[j + 1] - self.times[j];
            out[j] = out[j + 1] + 0.5 * (f[j] + f[j + 1]) * dt;
        }
        out
    }
}

/// Deterministic value profile from backward induction, plus convergence
/// diagnostics. `value[j]` approximates E[V(t_j, .) | alive at t_j].
struct DeterministicProfile {
    value: Vec<f64>,
    iterations: usize,
    converged: bool,
    deltas: Vec<f64>,
}

fn deterministic_profile(
    tables: &NodeTables,
    lgd_i: f64,
    lgd_h: f64,
    tol: f64,
    max_iter: usize,
) -> Result<DeterministicProfile, McError> {
    let n = tables.n_nodes();

    // Credit accrual integrands, discounted and survival-weighted from 0;
    // profiles conditional on being alive at a node divide by the node's
    // own discount and survival.
    let cva_integrand: Vec<f64> = (0..n)
        .map(|j| tables.discount[j] * tables.survival[j] * tables.lambda_i[j] * tables.e_neg[j])
        .collect();
    let dva_integrand: Vec<f64> = (0..n)
        .map(|j| tables.discount[j] * tables.survival[j] * tables.lambda_h[j] * tables.e_pos[j])
        .collect();
    let cva_suffix = tables.suffix_trapezoid(&cva_integrand);
    let dva_suffix = tables.suffix_trapezoid(&dva_integrand);

    let base: Vec<f64> = (0..n)
        .map(|j| {
            let scale = 1.0 / (tables.discount[j] * tables.survival[j]);
            tables.e_pos[j] - tables.e_neg[j]
                + scale * (lgd_i * cva_suffix[j] - lgd_h * dva_suffix[j])
        })
        .collect();

    let mut value = base.clone();
    let mut deltas = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut g = vec![0.0; n];
    for _ in 0..max_iter {
        iterations += 1;
        for j in 0..n {
            g[j] = tables.discount[j] * tables.survival[j] * tables.gamma[j] * value[j];
        }
        let fva_suffix = tables.suffix_trapezoid(&g);
        let mut max_change = 0.0_f64;
        let mut max_value = 0.0_f64;
        let mut next = vec![0.0; n];
        for j in 0..n {
            let scale = 1.0 / (tables.discount[j] * tables.survival[j]);
            next[j] = base[j] - scale * fva_suffix[j];
            max_change = max_change.max((next[j] - value[j]).abs());
            max_value = max_value.max(next[j].abs());
        }
        value = next;
        let delta = max_change / max_value.max(1e-300);
        deltas.push(delta);
        if delta <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        let last = *deltas.last().unwrap();
        let prev = if deltas.len() >= 2 {
            deltas[deltas.len() - 2]
        } else {
            last
        };
        return Err(McError::PicardNonConvergence {
            iterations,
            previous_change: prev,
            last_change: last,
        });
    }
    Ok(DeterministicProfile {
        value,
        iterations,
        converged,
        deltas,
    })
}

/// Per-node evaluator of the collateralized value at a simulated state,
/// with node-level discount and carry factors precomputed.
struct CloseOutEvaluator<'a> {
    deal: &'a DealSpec,
    /// OIS discount from the node to maturity.
    df_c: Vec<f64>,
    /// Carry factor exp(int_t^T (r - q)).
    carry: Vec<f64>,
    /// Remaining integrated vol sqrt(int_t^T sigma^2), for the option.
    stddev: Vec<f64>,
}

impl<'a> CloseOutEvaluator<'a> {
    fn new(deal: &'a DealSpec, model: &MarketModel, grid: &TimeGrid) -> Self {
        let curves = model.curves();
        let vol = &model.underlying().vol;
        let maturity = deal.maturity;
        let times = grid.times();
        let df_c = times
            .iter()
            .map(|&t| curves.ois_discount(t, maturity))
            .collect();
        let carry = times
            .iter()
            .map(|&t| {
                (curves.asset_rate.integral(t, maturity)
                    - curves.dividend_yield.integral(t, maturity))
                .exp()
            })
            .collect();
        let stddev = times
            .iter()
            .map(|&t| vol.integral_of_square(t, maturity).max(0.0).sqrt())
            .collect();
        Self {
            deal,
            df_c,
            carry,
            stddev,
        }
    }

    fn at(&self, node: usize, spot: f64) -> CloseOutValues {
        use crate::instruments::DealKind;
        let units = self.deal.signed_notional();
        let value = match self.deal.kind {
            DealKind::Deposit => units * self.df_c[node],
            DealKind::Forward => {
                units * self.df_c[node] * (spot * self.carry[node] - self.deal.strike.unwrap())
            }
            DealKind::EuropeanCall => {
                units
                    * self.df_c[node]
                    * crate::math::black_call_undiscounted(
                        spot * self.carry[node],
                        self.deal.strike.unwrap(),
                        self.stddev[node],
                    )
            }
        };
        CloseOutValues::from_value(value)
    }
}

/// Which party, if either, defaults strictly first and strictly before
/// maturity. Simultaneous grid defaults settle at the riskless close-out
/// with no credit accrual.
fn first_default(
    tau_i: Option<usize>,
    tau_h: Option<usize>,
    last_node: usize,
) -> Option<(DefaultingParty, usize)> {
    match (tau_i, tau_h) {
        (Some(i), Some(h)) if i < h && i < last_node => Some((DefaultingParty::Investor, i)),
        (Some(i), Some(h)) if h < i && h < last_node => Some((DefaultingParty::Hedger, h)),
        (Some(i), None) if i < last_node => Some((DefaultingParty::Investor, i)),
        (None, Some(h)) if h < last_node => Some((DefaultingParty::Hedger, h)),
        _ => None,
    }
}

#[derive(Clone, Default)]
struct ComponentSums {
    n: f64,
    pv: f64,
    pv2: f64,
    cva: f64,
    cva2: f64,
    dva: f64,
    dva2: f64,
    fva: f64,
    fva2: f64,
    total2: f64,
}

impl ComponentSums {
    fn add(&mut self, pv: f64, cva: f64, dva: f64, fva: f64) {
        self.n += 1.0;
        self.pv += pv;
        self.pv2 += pv * pv;
        self.cva += cva;
        self.cva2 += cva * cva;
        self.dva += dva;
        self.dva2 += dva * dva;
        self.fva += fva;
        self.fva2 += fva * fva;
        let tot = pv + cva + dva + fva;
        self.total2 += tot * tot;
    }

    fn merge(mut self, other: ComponentSums) -> ComponentSums {
        self.n += other.n;
        self.pv += other.pv;
        self.pv2 += other.pv2;
        self.cva += other.cva;
        self.cva2 += other.cva2;
        self.dva += other.dva;
        self.dva2 += other.dva2;
        self.fva += other.fva;
        self.fva2 += other.fva2;
        self.total2 += other.total2;
        self
    }

    fn mean_se(sum: f64, sum_sq: f64, n: f64) -> (f64, f64) {
        let mean = sum / n;
        let var = (sum_sq / n - mean * mean).max(0.0);
        (mean, (var / n).sqrt())
    }
}

/// Prices the deal by Monte Carlo, returning the full decomposition.
pub fn mc_price(
    deal: &DealSpec,
    model: &MarketModel,
    cfg: &McConfig,
) -> Result<ValuationBreakdown, McError> {
    deal.validate()?;
    cfg.validate()?;
    model.require_coverage(deal.maturity)?;
    let grid = cfg.grid.build(deal.maturity)?;

    match cfg.mode {
        EstimatorMode::Deterministic => mc_price_deterministic(deal, model, cfg, &grid),
        EstimatorMode::Regression => mc_price_regression(deal, model, cfg, &grid),
    }
}

fn assemble(
    sums: ComponentSums,
    iterations: usize,
    converged: bool,
    picard_value: f64,
    deltas: Vec<f64>,
    n_paths: usize,
) -> ValuationBreakdown {
    let n = sums.n;
    let (v_c, se_v_c) = ComponentSums::mean_se(sums.pv, sums.pv2, n);
    let (cva, se_cva) = ComponentSums::mean_se(sums.cva, sums.cva2, n);
    let (dva, se_dva) = ComponentSums::mean_se(sums.dva, sums.dva2, n);
    let (fva, se_fva) = ComponentSums::mean_se(sums.fva, sums.fva2, n);
    let total_sum = sums.pv + sums.cva + sums.dva + sums.fva;
    let (v, se_v) = ComponentSums::mean_se(total_sum, sums.total2, n);

    let breakdown = ValuationBreakdown {
        v,
        v_c,
        fva,
        cva,
        dva,
        se_v,
        se_v_c,
        se_fva,
        se_cva,
        se_dva,
        iterations,
        converged,
        picard_value,
        picard_deltas: deltas,
        n_paths,
    };
    // Decomposition identity: the total is the sum of the component
    // estimators by construction, up to floating point reassociation.
    let tol = 1e-10 * (1.0 + breakdown.v.abs());
    assert!(
        (breakdown.v - (breakdown.v_c + breakdown.fva + breakdown.cva + breakdown.dva)).abs()
            <= tol,
        "decomposition identity violated"
    );
    breakdown
}

fn mc_price_deterministic(
    deal: &DealSpec,
    model: &MarketModel,
    cfg: &McConfig,
    grid: &TimeGrid,
) -> Result<ValuationBreakdown, McError> {
    let tables = NodeTables::build(deal, model, grid)?;
    let profile = deterministic_profile(
        &tables,
        model.investor().lgd(),
        model.hedger().lgd(),
        cfg.picard_tol,
        cfg.picard_max_iter,
    )?;

    let n = grid.n_nodes();
    let last = n - 1;
    // Prefix sums of the funding accrual: a path alive up to node k pays
    // -prefix[k], with the survival indicator at the left node and
    // trapezoid weights on the discount-gamma-value product.
    let mut fva_prefix = vec![0.0; n + 1];
    for j in 0..last {
        let g0 = tables.discount[j] * tables.gamma[j] * profile.value[j];
        let g1 = tables.discount[j + 1] * tables.gamma[j + 1] * profile.value[j + 1];
        fva_prefix[j + 1] =
            fva_prefix[j] + 0.5 * (g0 + g1) * (tables.times[j + 1] - tables.times[j]);
    }
    fva_prefix[n] = fva_prefix[last];

    let evaluator = CloseOutEvaluator::new(deal, model, grid);
    let mask = FactorMask::for_model(model, deal.depends_on_spot(), deal.maturity);
    let coeffs = SimCoeffs::new(model, grid, mask)?;
    let lgd_i = model.investor().lgd();
    let lgd_h = model.hedger().lgd();

    let sums = fold_paths(
        model,
        &coeffs,
        cfg.n_paths as u64,
        cfg.seed,
        cfg.antithetic,
        ComponentSums::default,
        |acc: &mut ComponentSums, rec: &PathRecord<'_>| {
            let pv = tables.discount[last] * deal.payoff(rec.spot[last]);
            let stop = rec
                .default_investor
                .unwrap_or(usize::MAX)
                .min(rec.default_hedger.unwrap_or(usize::MAX))
                .min(last);
            let fva = -fva_prefix[stop];
            let mut cva = 0.0;
            let mut dva = 0.0;
            if let Some((party, node)) =
                first_default(rec.default_investor, rec.default_hedger, last)
            {
                let co = evaluator.at(node, rec.spot[node]);
                match party {
                    DefaultingParty::Investor => {
                        cva = tables.discount[node] * lgd_i * co.negative_part;
                    }
                    DefaultingParty::Hedger => {
                        dva = -tables.discount[node] * lgd_h * co.positive_part;
                    }
                }
            }
            acc.add(pv, cva, dva, fva);
        },
        ComponentSums::merge,
    );

    Ok(assemble(
        sums,
        profile.iterations,
        profile.converged,
        profile.value[0],
        profile.deltas,
        cfg.n_paths,
    ))
}

/// Monomial exponents of total degree <= degree in three variables.
fn basis_exponents(degree: usize) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for total in 0..=degree {
        for a in 0..=total {
            for b in 0..=(total - a) {
                out.push((a, b, total - a - b));
            }
        }
    }
    out
}

fn mc_price_regression(
    deal: &DealSpec,
    model: &MarketModel,
    cfg: &McConfig,
    grid: &TimeGrid,
) -> Result<ValuationBreakdown, McError> {
    let n_nodes = grid.n_nodes();
    let n_paths = cfg.n_paths;
    let state_len = n_paths
        .checked_mul(n_nodes)
        .filter(|&len| len <= 200_000_000)
        .ok_or_else(|| {
            McError::Config("regression mode state too large; reduce paths or coarsen grid".into())
        })?;
    let last = n_nodes - 1;

    let tables = NodeTables::build(deal, model, grid)?;
    let evaluator = CloseOutEvaluator::new(deal, model, grid);
    let lgd_i = model.investor().lgd();
    let lgd_h = model.hedger().lgd();
    let r_i = model.investor().recovery;
    let r_h = model.hedger().recovery;

    let paths = crate::simulation::simulate_paths(model, grid, n_paths, cfg.seed)?;

    // Terminal or close-out cash flow discounted to 0, and the node at
    // which each path's deal ends.
    let mut resp0 = vec![0.0; n_paths];
    let mut stop = vec![last; n_paths];
    for p in 0..n_paths {
        let tau_i = paths.default_index(PartyRole::Investor, p);
        let tau_h = paths.default_index(PartyRole::Hedger, p);
        let k = tau_i.unwrap_or(usize::MAX).min(tau_h.unwrap_or(usize::MAX));
        if k < last {
            let co = evaluator.at(k, paths.spot(p)[k]);
            let target = match first_default(tau_i, tau_h, last) {
                Some((party, _)) => close_out_target(&co, party, r_i, r_h),
                // Simultaneous grid defaults settle at the riskless close-out.
                None => co.value,
            };
            resp0[p] = tables.discount[k] * target;
            stop[p] = k;
        } else {
            resp0[p] = tables.discount[last] * deal.payoff(paths.spot(p)[last]);
        }
    }

    let exponents = basis_exponents(cfg.regression_degree);
    let n_basis = exponents.len();

    // Value estimate per (node, path), refined by Picard sweeps; the
    // starting profile carries collateralized values only.
    let mut v_hat = vec![0.0; state_len];
    for j in 0..n_nodes {
        let init = tables.e_pos[j] - tables.e_neg[j];
        v_hat[j * n_paths..(j + 1) * n_paths]
            .iter_mut()
            .for_each(|x| *x = init);
    }

    let gamma_d: Vec<f64> = (0..n_nodes)
        .map(|j| tables.discount[j] * tables.gamma[j])
        .collect();

    let mut deltas = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut v_next = vec![0.0; state_len];
    let mut design = vec![0.0; n_basis * n_basis];
    let mut rhs = vec![0.0; n_basis];
    let mut features = vec![0.0; n_basis];
    let mut suffix_fva = vec![0.0; n_paths];

    while iterations < cfg.picard_max_iter {
        iterations += 1;
        suffix_fva.iter_mut().for_each(|x| *x = 0.0);
        let mut max_change = 0.0_f64;
        let mut max_value = 0.0_f64;

        for j in (0..n_nodes).rev() {
            // Funding accrual from node j to the path's end, using the
            // previous iterate in the integrand (left-node survival,
            // trapezoid weights).
            if j < last {
                let dt = tables.times[j + 1] - tables.times[j];
                for p in 0..n_paths {
                    if stop[p] > j {
                        let g0 = gamma_d[j] * v_hat[j * n_paths + p];
                        let g1 = gamma_d[j + 1] * v_hat[(j + 1) * n_paths + p];
                        suffix_fva[p] += 0.5 * (g0 + g1) * dt;
                    }
                }
            }

            // Cross-sectional regression on paths still alive at node j
            // (every path is alive at node 0).
            let alive: Vec<usize> = (0..n_paths).filter(|&p| stop[p] >= j.max(1)).collect();
            if alive.is_empty() {
                v_next[j * n_paths..(j + 1) * n_paths]
                    .iter_mut()
                    .for_each(|x| *x = 0.0);
                continue;
            }

            // Standardize the three state columns over the alive set;
            // degenerate columns drop out of the basis.
            let mut mean = [0.0_f64; 3];
            let mut m2 = [0.0_f64; 3];
            for &p in &alive {
                let x = [
                    paths.spot(p)[j],
                    paths.spread(PartyRole::Investor, p)[j],
                    paths.spread(PartyRole::Hedger, p)[j],
                ];
                for k in 0..3 {
                    mean[k] += x[k];
                    m2[k] += x[k] * x[k];
                }
            }
            let count = alive.len() as f64;
            let mut scale = [0.0_f64; 3];
            for k in 0..3 {
                mean[k] /= count;
                let sd = (m2[k] / count - mean[k] * mean[k]).max(0.0).sqrt();
                scale[k] = if sd > 1e-12 { 1.0 / sd } else { 0.0 };
            }
            let standardized = |p: usize| {
                [
                    (paths.spot(p)[j] - mean[0]) * scale[0],
                    (paths.spread(PartyRole::Investor, p)[j] - mean[1]) * scale[1],
                    (paths.spread(PartyRole::Hedger, p)[j] - mean[2]) * scale[2],
                ]
            };

            design.iter_mut().for_each(|x| *x = 0.0);
            rhs.iter_mut().for_each(|x| *x = 0.0);
            for &p in &alive {
                let z = standardized(p);
                for (b, &(ea, eb, ec)) in exponents.iter().enumerate() {
                    features[b] =
                        z[0].powi(ea as i32) * z[1].powi(eb as i32) * z[2].powi(ec as i32);
                }
                let y = (resp0[p] - suffix_fva[p]) / tables.discount[j];
                for a in 0..n_basis {
                    for b in a..n_basis {
                        design[a * n_basis + b] += features[a] * features[b];
                    }
                    rhs[a] += features[a] * y;
                }
            }
            for a in 0..n_basis {
                for b in 0..a {
                    design[a * n_basis + b] = design[b * n_basis + a];
                }
            }
            // Ridge damping keeps rank-deficient cross sections solvable.
            let mut coef = rhs.clone();
            let mut mat = design.clone();
            if crate::math::solve_spd_ridge(&mut mat, &mut coef, n_basis, 1e-10 * count).is_err() {
                let mut mat = design.clone();
                coef = rhs.clone();
                crate::math::solve_spd_ridge(&mut mat, &mut coef, n_basis, 1e-4 * count).map_err(
                    |_| McError::Regression {
                        node: j,
                        reason: "normal equations not positive definite".into(),
                    },
                )?;
            }

            for p in 0..n_paths {
                let z = standardized(p);
                let mut fit = 0.0;
                for (b, &(ea, eb, ec)) in exponents.iter().enumerate() {
                    fit += coef[b]
                        * z[0].powi(ea as i32)
                        * z[1].powi(eb as i32)
                        * z[2].powi(ec as i32);
                }
                v_next[j * n_paths + p] = fit;
                max_change = max_change.max((fit - v_hat[j * n_paths + p]).abs());
                max_value = max_value.max(fit.abs());
            }
        }

        std::mem::swap(&mut v_hat, &mut v_next);
        let delta = max_change / max_value.max(1e-300);
        deltas.push(delta);
        if delta <= cfg.picard_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        let last_d = *deltas.last().unwrap();
        let prev = if deltas.len() >= 2 {
            deltas[deltas.len() - 2]
        } else {
            last_d
        };
        return Err(McError::PicardNonConvergence {
            iterations,
            previous_change: prev,
            last_change: last_d,
        });
    }

    // Final component estimators on the same paths with the converged
    // profile in the funding integrand.
    let mut sums = ComponentSums::default();
    for p in 0..n_paths {
        let tau_i = paths.default_index(PartyRole::Investor, p);
        let tau_h = paths.default_index(PartyRole::Hedger, p);
        let pv = tables.discount[last] * deal.payoff(paths.spot(p)[last]);
        let mut fva = 0.0;
        for j in 0..stop[p] {
            let dt = tables.times[j + 1] - tables.times[j];
            let g0 = gamma_d[j] * v_hat[j * n_paths + p];
            let g1 = gamma_d[j + 1] * v_hat[(j + 1) * n_paths + p];
            fva -= 0.5 * (g0 + g1) * dt;
        }
        let mut cva = 0.0;
        let mut dva = 0.0;
        if let Some((party, node)) = first_default(tau_i, tau_h, last) {
            let co = evaluator.at(node, paths.spot(p)[node]);
            match party {
                DefaultingParty::Investor => {
                    cva = tables.discount[node] * lgd_i * co.negative_part;
                }
                DefaultingParty::Hedger => {
                    dva = -tables.discount[node] * lgd_h * co.positive_part;
                }
            }
        }
        sums.add(pv, cva, dva, fva);
    }

    // The time-0 cross section is degenerate, so the node-0 fit is a mean.
    let picard_value = v_hat[..n_paths].iter().sum::<f64>() / n_paths as f64;
    Ok(assemble(
        sums,
        iterations,
        converged,
        picard_value,
        deltas,
        n_paths,
    ))
}

/// Deterministic value profile of a deal on a grid: E[V(t_j, .)] per node.
///
/// Exact profile (up to grid error) when both spread volatilities are zero.
/// Exposed for the agreement analytics and cross-solver checks.
pub fn deterministic_value_curve(
    deal: &DealSpec,
    model: &MarketModel,
    grid: &TimeGrid,
    picard_tol: f64,
    picard_max_iter: usize,
) -> Result<Vec<f64>, McError> {
    deal.validate()?;
    model.require_coverage(deal.maturity)?;
    let tables = NodeTables::build(deal, model, grid)?;
    let profile = deterministic_profile(
        &tables,
        model.investor().lgd(),
        model.hedger().lgd(),
        picard_tol,
        picard_max_iter,
    )?;
    Ok(profile.value)
}

/// Analytic time-0 decomposition from the deterministic backward induction;
/// no paths involved. Valid alongside [`deterministic_value_curve`] when
/// spreads are deterministic.
#[derive(Debug, Clone, Copy)]
pub struct DeterministicComponents {
    pub v: f64,
    pub v_c: f64,
    pub fva: f64,
    pub cva: f64,
    pub dva: f64,
    pub iterations: usize,
}

pub fn deterministic_components(
    deal: &DealSpec,
    model: &MarketModel,
    grid: &TimeGrid,
    picard_tol: f64,
    picard_max_iter: usize,
) -> Result<DeterministicComponents, McError> {
    deal.validate()?;
    model.require_coverage(deal.maturity)?;
    let tables = NodeTables::build(deal, model, grid)?;
    let lgd_i = model.investor().lgd();
    let lgd_h = model.hedger().lgd();
    let profile = deterministic_profile(&tables, lgd_i, lgd_h, picard_tol, picard_max_iter)?;

    let n = tables.n_nodes();
    let weighted = |f: &dyn Fn(usize) -> f64| -> Vec<f64> {
        (0..n)
            .map(|j| tables.discount[j] * tables.survival[j] * f(j))
            .collect()
    };
    let cva =
        lgd_i * tables.suffix_trapezoid(&weighted(&|j| tables.lambda_i[j] * tables.e_neg[j]))[0];
    let dva =
        -lgd_h * tables.suffix_trapezoid(&weighted(&|j| tables.lambda_h[j] * tables.e_pos[j]))[0];
    let fva = -tables.suffix_trapezoid(&weighted(&|j| tables.gamma[j] * profile.value[j]))[0];
    // Adding zero normalizes the negative zeros the negations above can
    // produce on degenerate inputs.
    Ok(DeterministicComponents {
        v: profile.value[0] + 0.0,
        v_c: tables.e_pos[0] - tables.e_neg[0],
        fva: fva + 0.0,
        cva: cva + 0.0,
        dva: dva + 0.0,
        iterations: profile.iterations,
    })
}

/// Monte Carlo check of the default-intensity identity
/// E[int 1_{tau > s} lambda_s f(s) ds] = E[int f(s) dN_s].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub se_lhs: f64,
    pub se_rhs: f64,
    /// Combined standard error of the difference (independence bound).
    pub se: f64,
}

pub fn intensity_identity_check(
    model: &MarketModel,
    role: PartyRole,
    f: impl Fn(f64) -> f64 + Sync,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<IdentityCheck, McError> {
    let mask = FactorMask::for_model(model, false, grid.horizon());
    let coeffs = SimCoeffs::new(model, grid, mask)?;
    let n = grid.n_nodes();
    let f_nodes: Vec<f64> = grid.times().iter().map(|&t| f(t)).collect();

    #[derive(Clone, Default)]
    struct Acc {
        n: f64,
        lhs: f64,
        lhs2: f64,
        rhs: f64,
        rhs2: f64,
    }

    let acc = fold_paths(
        model,
        &coeffs,
        n_paths as u64,
        seed,
        false,
        Acc::default,
        |acc: &mut Acc, rec: &PathRecord<'_>| {
            let (tau, lambda) = match role {
                PartyRole::Investor => (rec.default_investor, rec.lambda_investor),
                PartyRole::Hedger => (rec.default_hedger, rec.lambda_hedger),
            };
            let cut = tau.unwrap_or(usize::MAX);
            let mut lhs = 0.0;
            for j in 0..n - 1 {
                if j >= cut {
                    break;
                }
                let h0 = lambda[j] * f_nodes[j];
                let h1 = if j + 1 < cut {
                    lambda[j + 1] * f_nodes[j + 1]
                } else {
                    0.0
                };
                lhs += 0.5 * (h0 + h1) * coeffs.dt[j];
            }
            let rhs = tau.map_or(0.0, |k| f_nodes[k]);
            acc.n += 1.0;
            acc.lhs += lhs;
            acc.lhs2 += lhs * lhs;
            acc.rhs += rhs;
            acc.rhs2 += rhs * rhs;
        },
        |mut a, b| {
            a.n += b.n;
            a.lhs += b.lhs;
            a.lhs2 += b.lhs2;
            a.rhs += b.rhs;
            a.rhs2 += b.rhs2;
            a
        },
    );

    let (lhs, se_lhs) = ComponentSums::mean_se(acc.lhs, acc.lhs2, acc.n);
    let (rhs, se_rhs) = ComponentSums::mean_se(acc.rhs, acc.rhs2, acc.n);
    Ok(IdentityCheck {
        lhs,
        rhs,
        se_lhs,
        se_rhs,
        se: (se_lhs * se_lhs + se_rhs * se_rhs).sqrt(),
    })
}
