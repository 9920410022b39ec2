//! Correlated path simulation and default-time sampling under the pricing
//! measure.
//!
//! Each path owns an independent random stream keyed by (seed, path index),
//! with a fixed draw layout: two exponential default thresholds first, then
//! one normal per active diffusion factor per grid step, in factor order
//! (spot, investor spread, hedger spread). Batches of paths can therefore be
//! generated in any order, in parallel, and merged deterministically.
//!
//! Euler stepping with left-node coefficients: log-Euler for the spot,
//! arithmetic Euler with flooring at zero for the spreads. Defaults are
//! sampled doubly stochastically: a unit-exponential threshold per party,
//! crossed by the trapezoid-accumulated intensity integral.

use crate::market_model::{MarketModel, ModelError, PartyRole};
use crate::math::{cholesky3, inv_norm_cdf};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;

/// Paths per work unit in batch-parallel folds. Fixed so that floating point
/// reduction order, and hence every reported statistic, is independent of
/// thread scheduling.
pub(crate) const BATCH_SIZE: u64 = 4096;

/// Strictly increasing simulation times starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn from_times(times: Vec<f64>) -> Result<Self, ModelError> {
        if times.len() < 2 || times[0] != 0.0 || times.iter().any(|t| t.is_nan()) {
            return Err(ModelError::NonPositiveHorizon(
                times.last().copied().unwrap_or(0.0),
            ));
        }
        for i in 1..times.len() {
            if times[i] <= times[i - 1] {
                return Err(ModelError::NonPositiveHorizon(times[i]));
            }
        }
        Ok(Self { times })
    }

    /// Uniform grid with `n_steps` steps on [0, horizon].
    pub fn uniform(horizon: f64, n_steps: usize) -> Result<Self, ModelError> {
        if horizon.is_nan() || horizon <= 0.0 || n_steps == 0 {
            return Err(ModelError::NonPositiveHorizon(horizon));
        }
        let times = (0..=n_steps)
            .map(|i| horizon * i as f64 / n_steps as f64)
            .collect();
        Ok(Self { times })
    }

    /// Uniform grid with step at most `dt` covering [0, horizon].
    pub fn with_step(horizon: f64, dt: f64) -> Result<Self, ModelError> {
        if dt.is_nan() || dt <= 0.0 {
            return Err(ModelError::NonPositiveHorizon(dt));
        }
        let n = (horizon / dt).ceil().max(1.0) as usize;
        Self::uniform(horizon, n)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_nodes(&self) -> usize {
        self.times.len()
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn dt(&self, step: usize) -> f64 {
        self.times[step + 1] - self.times[step]
    }
}

/// Deterministic spread path under the Q-drift with the same Euler flooring
/// as the stochastic scheme. Exact when the spread volatility is zero.
pub fn deterministic_spread_path(
    model: &MarketModel,
    role: PartyRole,
    grid: &TimeGrid,
) -> Vec<f64> {
    let q = model.q_dynamics();
    let mut pi = Vec::with_capacity(grid.n_nodes());
    pi.push(model.party(role).spread0);
    for j in 0..grid.n_steps() {
        let t = grid.times()[j];
        let next = pi[j] + q.spread_drift(role, t) * grid.dt(j);
        pi.push(next.max(0.0));
    }
    pi
}

/// Q-intensities lambda = pi / (1 - R) along a spread path.
pub fn intensity_path(model: &MarketModel, role: PartyRole, spreads: &[f64]) -> Vec<f64> {
    let lgd = model.party(role).lgd();
    spreads.iter().map(|&pi| pi / lgd).collect()
}

/// Trapezoid-accumulated intensity integral at each grid node.
pub fn trapezoid_compensator(grid: &TimeGrid, lambda: &[f64]) -> Vec<f64> {
    let mut comp = Vec::with_capacity(grid.n_nodes());
    comp.push(0.0);
    for j in 0..grid.n_steps() {
        comp.push(comp[j] + 0.5 * (lambda[j] + lambda[j + 1]) * grid.dt(j));
    }
    comp
}

/// First grid node at which the compensator reaches the threshold, if any.
pub fn default_index_from_compensator(compensator: &[f64], threshold: f64) -> Option<usize> {
    compensator.iter().position(|&c| c >= threshold)
}

pub(crate) fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    // Expand the scalar seed into a 256-bit key (SplitMix64), one stream per
    // path index.
    let mut key = [0u8; 32];
    let mut state = seed ^ 0x9e37_79b9_7f4a_7c15;
    for chunk in key.chunks_exact_mut(8) {
        state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
        chunk.copy_from_slice(&z.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(path);
    rng
}

/// Uniform draw in the open interval (0, 1).
pub(crate) fn uniform_open01(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0) + (0.5 / 9007199254740992.0)
}

/// Which diffusion factors are actually simulated. Inactive factors follow
/// their deterministic drift path and consume no random draws, which keeps
/// degenerate models (zero vol) bit-consistent with the deterministic
/// solvers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct FactorMask {
    pub spot: bool,
    pub investor: bool,
    pub hedger: bool,
}

impl FactorMask {
    pub(crate) const ALL: FactorMask = FactorMask {
        spot: true,
        investor: true,
        hedger: true,
    };

    /// Spot active only when the payoff depends on it; spreads active only
    /// when their volatility is not identically zero.
    pub(crate) fn for_model(model: &MarketModel, needs_spot: bool, horizon: f64) -> Self {
        let nonzero =
            |c: &crate::term_structure::PiecewiseConstant| !c.is_constant_eq(0.0, horizon);
        FactorMask {
            spot: needs_spot,
            investor: nonzero(&model.investor().spread_vol),
            hedger: nonzero(&model.hedger().spread_vol),
        }
    }

    fn active_indices(&self) -> Vec<usize> {
        let mut idx = Vec::new();
        if self.spot {
            idx.push(0);
        }
        if self.investor {
            idx.push(1);
        }
        if self.hedger {
            idx.push(2);
        }
        idx
    }
}

/// Per-step coefficient tables shared by every path of a run.
pub(crate) struct SimCoeffs {
    pub n_nodes: usize,
    pub dt: Vec<f64>,
    /// Log drift of the spot over each step, (r - q - sigma^2 / 2) dt.
    pub spot_log_drift: Vec<f64>,
    /// Spot diffusion scale per step, sigma sqrt(dt).
    pub spot_vol: Vec<f64>,
    pub inv_drift: Vec<f64>,
    pub inv_vol: Vec<f64>,
    pub hdg_drift: Vec<f64>,
    pub hdg_vol: Vec<f64>,
    /// Lower Cholesky factor of the active-factor correlation submatrix per
    /// step, padded to 3x3 in active order.
    pub chol: Vec<[[f64; 3]; 3]>,
    pub active: Vec<usize>,
    pub mask: FactorMask,
    pub lgd_inv: f64,
    pub lgd_hdg: f64,
    /// Deterministic fallback paths for inactive factors.
    pub det_spot: Vec<f64>,
    pub det_inv: Vec<f64>,
    pub det_hdg: Vec<f64>,
}

impl SimCoeffs {
    pub(crate) fn new(
        model: &MarketModel,
        grid: &TimeGrid,
        mask: FactorMask,
    ) -> Result<Self, ModelError> {
        model.require_coverage(grid.horizon())?;
        let q = model.q_dynamics();
        let n_steps = grid.n_steps();
        let active = mask.active_indices();

        let mut dt = Vec::with_capacity(n_steps);
        let mut spot_log_drift = Vec::with_capacity(n_steps);
        let mut spot_vol = Vec::with_capacity(n_steps);
        let mut inv_drift = Vec::with_capacity(n_steps);
        let mut inv_vol = Vec::with_capacity(n_steps);
        let mut hdg_drift = Vec::with_capacity(n_steps);
        let mut hdg_vol = Vec::with_capacity(n_steps);
        let mut chol = Vec::with_capacity(n_steps);

        for j in 0..n_steps {
            let t = grid.times()[j];
            let h = grid.dt(j);
            let sig_s = model.underlying().vol.value(t);
            let sig_i = model.investor().spread_vol.value(t);
            let sig_h = model.hedger().spread_vol.value(t);
            dt.push(h);
            spot_log_drift.push((q.spot_drift_rate(t) - 0.5 * sig_s * sig_s) * h);
            spot_vol.push(sig_s * h.sqrt());
            inv_drift.push(q.spread_drift(PartyRole::Investor, t) * h);
            inv_vol.push(sig_i * h.sqrt());
            hdg_drift.push(q.spread_drift(PartyRole::Hedger, t) * h);
            hdg_vol.push(sig_h * h.sqrt());
            chol.push(reduced_cholesky(model, t, &active)?);
        }

        let spot0 = model.underlying().spot;
        let det_spot = if mask.spot {
            Vec::new()
        } else {
            // Deterministic forward path of the spot (zero-vol reduction).
            let mut s = Vec::with_capacity(grid.n_nodes());
            s.push(spot0);
            for j in 0..n_steps {
                s.push(s[j] * spot_log_drift[j].exp());
            }
            s
        };
        let det_inv = if mask.investor {
            Vec::new()
        } else {
            deterministic_spread_path(model, PartyRole::Investor, grid)
        };
        let det_hdg = if mask.hedger {
            Vec::new()
        } else {
            deterministic_spread_path(model, PartyRole::Hedger, grid)
        };

        Ok(Self {
            n_nodes: grid.n_nodes(),
            dt,
            spot_log_drift,
            spot_vol,
            inv_drift,
            inv_vol,
            hdg_drift,
            hdg_vol,
            chol,
            active,
            mask,
            lgd_inv: model.investor().lgd(),
            lgd_hdg: model.hedger().lgd(),
            det_spot,
            det_inv,
            det_hdg,
        })
    }
}

/// Cholesky factor of the correlation submatrix restricted to the active
/// factors (full factor order: spot, investor, hedger).
fn reduced_cholesky(
    model: &MarketModel,
    t: f64,
    active: &[usize],
) -> Result<[[f64; 3]; 3], ModelError> {
    let c = model.correlations();
    let full = [
        [1.0, c.spot_investor.value(t), c.spot_hedger.value(t)],
        [c.spot_investor.value(t), 1.0, c.hedger_investor.value(t)],
        [c.spot_hedger.value(t), c.hedger_investor.value(t), 1.0],
    ];
    let mut l = [[0.0; 3]; 3];
    match active.len() {
        0 => {}
        1 => l[0][0] = 1.0,
        2 => {
            let rho = full[active[0]][active[1]];
            let sub = cholesky3(rho, 0.0, 0.0).ok_or(ModelError::NonPsdCorrelation { time: t })?;
            l[0][0] = sub[0][0];
            l[1][0] = sub[1][0];
            l[1][1] = sub[1][1];
        }
        _ => {
            l = cholesky3(full[0][1], full[0][2], full[1][2])
                .ok_or(ModelError::NonPsdCorrelation { time: t })?;
        }
    }
    Ok(l)
}

/// One simulated path, borrowed from thread-local buffers during a fold.
pub(crate) struct PathRecord<'a> {
    pub index: u64,
    pub spot: &'a [f64],
    pub spread_investor: &'a [f64],
    pub spread_hedger: &'a [f64],
    pub lambda_investor: &'a [f64],
    pub lambda_hedger: &'a [f64],
    /// Correlated standard-normal increments per step, laid out as
    /// [step * 3 + factor] in full factor order (spot, investor, hedger);
    /// zero for inactive factors.
    pub increments: &'a [f64],
    /// First grid node at which each party is in default, if any.
    pub default_investor: Option<usize>,
    pub default_hedger: Option<usize>,
}

struct PathBuffers {
    spot: Vec<f64>,
    pi_i: Vec<f64>,
    pi_h: Vec<f64>,
    lam_i: Vec<f64>,
    lam_h: Vec<f64>,
    dw: Vec<f64>,
}

impl PathBuffers {
    fn new(coeffs: &SimCoeffs) -> Self {
        let n = coeffs.n_nodes;
        PathBuffers {
            spot: vec![0.0; n],
            pi_i: vec![0.0; n],
            pi_h: vec![0.0; n],
            lam_i: vec![0.0; n],
            lam_h: vec![0.0; n],
            dw: vec![0.0; 3 * (n - 1)],
        }
    }
}

fn generate_into<'a>(
    model: &MarketModel,
    coeffs: &'a SimCoeffs,
    seed: u64,
    path: u64,
    antithetic: bool,
    buf: &'a mut PathBuffers,
) -> PathRecord<'a> {
    let (stream, mirror) = if antithetic {
        (path / 2, path % 2 == 1)
    } else {
        (path, false)
    };
    let mut rng = path_rng(seed, stream);
    let flip = |u: f64| if mirror { 1.0 - u } else { u };
    let e_i = -flip(uniform_open01(&mut rng)).ln();
    let e_h = -flip(uniform_open01(&mut rng)).ln();

    let n = coeffs.n_nodes;
    let mask = coeffs.mask;

    if mask.spot {
        buf.spot[0] = model.underlying().spot;
    }
    if mask.investor {
        buf.pi_i[0] = model.investor().spread0;
    }
    if mask.hedger {
        buf.pi_h[0] = model.hedger().spread0;
    }

    let det_or = |active: bool, det: &'a [f64], own: &'a [f64]| if active { own } else { det };

    // Intensity bookkeeping works on whichever array is live.
    {
        let pi_i0 = if mask.investor {
            buf.pi_i[0]
        } else {
            coeffs.det_inv[0]
        };
        let pi_h0 = if mask.hedger {
            buf.pi_h[0]
        } else {
            coeffs.det_hdg[0]
        };
        buf.lam_i[0] = pi_i0 / coeffs.lgd_inv;
        buf.lam_h[0] = pi_h0 / coeffs.lgd_hdg;
    }

    let mut comp_i = 0.0;
    let mut comp_h = 0.0;
    let mut tau_i = None;
    let mut tau_h = None;

    let n_active = coeffs.active.len();
    for j in 0..n - 1 {
        let mut z = [0.0_f64; 3];
        for slot in z.iter_mut().take(n_active) {
            let u = flip(uniform_open01(&mut rng));
            *slot = inv_norm_cdf(u);
        }
        let l = &coeffs.chol[j];
        let mut w = [0.0_f64; 3];
        for (i, wi) in w.iter_mut().enumerate().take(n_active) {
            *wi = (0..=i).map(|k| l[i][k] * z[k]).sum();
        }
        // Scatter correlated increments back to full factor order.
        let mut dw = [0.0_f64; 3];
        for (slot, &factor) in coeffs.active.iter().enumerate() {
            dw[factor] = w[slot];
        }
        buf.dw[3 * j..3 * j + 3].copy_from_slice(&dw);

        if mask.spot {
            buf.spot[j + 1] =
                buf.spot[j] * (coeffs.spot_log_drift[j] + coeffs.spot_vol[j] * dw[0]).exp();
        }
        let pi_i_next = if mask.investor {
            let v = (buf.pi_i[j] + coeffs.inv_drift[j] + coeffs.inv_vol[j] * dw[1]).max(0.0);
            buf.pi_i[j + 1] = v;
            v
        } else {
            coeffs.det_inv[j + 1]
        };
        let pi_h_next = if mask.hedger {
            let v = (buf.pi_h[j] + coeffs.hdg_drift[j] + coeffs.hdg_vol[j] * dw[2]).max(0.0);
            buf.pi_h[j + 1] = v;
            v
        } else {
            coeffs.det_hdg[j + 1]
        };

        buf.lam_i[j + 1] = pi_i_next / coeffs.lgd_inv;
        buf.lam_h[j + 1] = pi_h_next / coeffs.lgd_hdg;
        comp_i += 0.5 * (buf.lam_i[j] + buf.lam_i[j + 1]) * coeffs.dt[j];
        comp_h += 0.5 * (buf.lam_h[j] + buf.lam_h[j + 1]) * coeffs.dt[j];
        if tau_i.is_none() && comp_i >= e_i {
            tau_i = Some(j + 1);
        }
        if tau_h.is_none() && comp_h >= e_h {
            tau_h = Some(j + 1);
        }
    }

    PathRecord {
        index: path,
        spot: det_or(mask.spot, &coeffs.det_spot, &buf.spot),
        spread_investor: det_or(mask.investor, &coeffs.det_inv, &buf.pi_i),
        spread_hedger: det_or(mask.hedger, &coeffs.det_hdg, &buf.pi_h),
        lambda_investor: &buf.lam_i,
        lambda_hedger: &buf.lam_h,
        increments: &buf.dw,
        default_investor: tau_i,
        default_hedger: tau_h,
    }
}

/// Batch-parallel fold over simulated paths with a deterministic merge
/// order. The accumulator sees paths in index order within each fixed-size
/// batch and batches are merged in index order, so results do not depend on
/// the number of worker threads.
#[allow(clippy::too_many_arguments)]
pub(crate) fn fold_paths<A, I, V, M>(
    model: &MarketModel,
    coeffs: &SimCoeffs,
    n_paths: u64,
    seed: u64,
    antithetic: bool,
    init: I,
    visit: V,
    merge: M,
) -> A
where
    A: Send,
    I: Fn() -> A + Sync,
    V: Fn(&mut A, &PathRecord<'_>) + Sync,
    M: Fn(A, A) -> A,
{
    let n_batches = n_paths.div_ceil(BATCH_SIZE);
    let partials: Vec<A> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut acc = init();
            let mut buf = PathBuffers::new(coeffs);
            let start = b * BATCH_SIZE;
            let end = ((b + 1) * BATCH_SIZE).min(n_paths);
            for p in start..end {
                let record = generate_into(model, coeffs, seed, p, antithetic, &mut buf);
                visit(&mut acc, &record);
            }
            acc
        })
        .collect();
    partials.into_iter().reduce(merge).unwrap_or_else(init)
}

/// Materialized simulation output: per-path, per-node state plus default
/// times. Row-major layout, one row per path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
    spot: Vec<f64>,
    spread_investor: Vec<f64>,
    spread_hedger: Vec<f64>,
    default_investor: Vec<Option<u32>>,
    default_hedger: Vec<Option<u32>>,
}

impl PathSet {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn spot(&self, path: usize) -> &[f64] {
        let n = self.grid.n_nodes();
        &self.spot[path * n..(path + 1) * n]
    }

    pub fn spread(&self, role: PartyRole, path: usize) -> &[f64] {
        let n = self.grid.n_nodes();
        let data = match role {
            PartyRole::Investor => &self.spread_investor,
            PartyRole::Hedger => &self.spread_hedger,
        };
        &data[path * n..(path + 1) * n]
    }

    pub fn default_index(&self, role: PartyRole, path: usize) -> Option<usize> {
        let data = match role {
            PartyRole::Investor => &self.default_investor,
            PartyRole::Hedger => &self.default_hedger,
        };
        data[path].map(|i| i as usize)
    }

    /// Default time on the grid, or +infinity when the party survives.
    pub fn default_time(&self, role: PartyRole, path: usize) -> f64 {
        self.default_index(role, path)
            .map_or(f64::INFINITY, |i| self.grid.times()[i])
    }
}

/// Simulates the full three-factor model on the grid, materializing
/// n_paths x n_nodes values per factor (three doubles per path-node).
///
/// Identical (seed, path index, grid) reproduce bit-identical paths, and
/// the result does not depend on how path batches were scheduled. The
/// pricers stream paths instead of calling this, so large runs stay flat
/// in memory.
pub fn simulate_paths(
    model: &MarketModel,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathSet, ModelError> {
    if n_paths == 0 {
        return Err(ModelError::NonPositiveHorizon(0.0));
    }
    let coeffs = SimCoeffs::new(model, grid, FactorMask::ALL)?;
    let n = grid.n_nodes();

    struct Chunk {
        start: usize,
        spot: Vec<f64>,
        pi_i: Vec<f64>,
        pi_h: Vec<f64>,
        tau_i: Vec<Option<u32>>,
        tau_h: Vec<Option<u32>>,
    }

    let init = || Chunk {
        start: usize::MAX,
        spot: Vec::new(),
        pi_i: Vec::new(),
        pi_h: Vec::new(),
        tau_i: Vec::new(),
        tau_h: Vec::new(),
    };
    let chunks: Vec<Chunk> = {
        let visit = |acc: &mut Chunk, rec: &PathRecord<'_>| {
            if acc.start == usize::MAX {
                acc.start = rec.index as usize;
            }
            acc.spot.extend_from_slice(rec.spot);
            acc.pi_i.extend_from_slice(rec.spread_investor);
            acc.pi_h.extend_from_slice(rec.spread_hedger);
            acc.tau_i.push(rec.default_investor.map(|i| i as u32));
            acc.tau_h.push(rec.default_hedger.map(|i| i as u32));
        };
        let n_batches = (n_paths as u64).div_ceil(BATCH_SIZE);
        (0..n_batches)
            .into_par_iter()
            .map(|b| {
                let mut acc = init();
                let mut buf = PathBuffers::new(&coeffs);
                let start = b * BATCH_SIZE;
                let end = ((b + 1) * BATCH_SIZE).min(n_paths as u64);
                for p in start..end {
                    let record = generate_into(model, &coeffs, seed, p, false, &mut buf);
                    visit(&mut acc, &record);
                }
                acc
            })
            .collect()
    };

    let mut spot = Vec::with_capacity(n_paths * n);
    let mut pi_i = Vec::with_capacity(n_paths * n);
    let mut pi_h = Vec::with_capacity(n_paths * n);
    let mut tau_i = Vec::with_capacity(n_paths);
    let mut tau_h = Vec::with_capacity(n_paths);
    let mut expected = 0usize;
    for chunk in chunks {
        debug_assert_eq!(chunk.start, expected);
        expected += chunk.tau_i.len();
        spot.extend(chunk.spot);
        pi_i.extend(chunk.pi_i);
        pi_h.extend(chunk.pi_h);
        tau_i.extend(chunk.tau_i);
        tau_h.extend(chunk.tau_h);
    }

    Ok(PathSet {
        grid: grid.clone(),
        n_paths,
        seed,
        spot,
        spread_investor: pi_i,
        spread_hedger: pi_h,
        default_investor: tau_i,
        default_hedger: tau_h,
    })
}
