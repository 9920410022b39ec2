//! Market model: joint dynamics of the underlying and both parties' short
//! term CDS spreads, deterministic rate curves, correlations and the
//! real-to-risk-neutral measure transform.
//!
//! Under the pricing measure the underlying carries geometric drift r - q,
//! each spread follows an arithmetic diffusion with drift mu - M sigma, and
//! defaults arrive with intensity lambda = pi / (1 - R) driven by the
//! simulated spread level.

use crate::math::cholesky3;
use crate::term_structure::PiecewiseConstant;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("correlation matrix is not positive semi-definite at t = {time}")]
    NonPsdCorrelation { time: f64 },
    #[error("correlation {field} = {value} at t = {time} is outside [-1, 1]")]
    CorrelationOutOfRange {
        field: &'static str,
        value: f64,
        time: f64,
    },
    #[error("{party:?} recovery must lie in [0, 1), got {value}")]
    InvalidRecovery { party: PartyRole, value: f64 },
    #[error("{party:?} initial spread must be >= 0, got {value}")]
    NegativeInitialSpread { party: PartyRole, value: f64 },
    #[error("{field} is negative ({value}) at t = {time}")]
    NegativeVol {
        field: &'static str,
        value: f64,
        time: f64,
    },
    #[error("spot must be > 0, got {0}")]
    NonPositiveSpot(f64),
    #[error("model horizon must be > 0, got {0}")]
    NonPositiveHorizon(f64),
    #[error("{field} covers up to t = {covered} but t = {required} is required")]
    CoverageGap {
        field: &'static str,
        covered: f64,
        required: f64,
    },
}

/// Deterministic rate curves: collateral (OIS) rate c, asset repo/financing
/// rate r and dividend yield q, all annualized continuous rates.
#[derive(Debug, Clone, PartialEq)]
pub struct RateCurves {
    pub ois: PiecewiseConstant,
    pub asset_rate: PiecewiseConstant,
    pub dividend_yield: PiecewiseConstant,
}

impl RateCurves {
    /// Collateral-rate discount factor exp(-int_a^b c).
    pub fn ois_discount(&self, a: f64, b: f64) -> f64 {
        (-self.ois.integral(a, b)).exp()
    }
}

/// Which side of the deal a credit description belongs to. The hedger is the
/// party performing the replication; the deal value is signed as seen by the
/// investor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartyRole {
    Hedger,
    Investor,
}

/// One party's credit and funding description.
///
/// `basis` is the bond-CDS basis gamma: the short-term funding spread over
/// OIS minus the short-term CDS spread. The funding spread itself is derived,
/// never stored: f_bar(t) = gamma(t) + pi_t.
#[derive(Debug, Clone, PartialEq)]
pub struct PartyCredit {
    pub role: PartyRole,
    /// Recovery fraction R in [0, 1).
    pub recovery: f64,
    /// Initial short-term CDS spread pi(0) >= 0, annualized.
    pub spread0: f64,
    /// Real-measure spread drift mu(t), annualized.
    pub spread_drift: PiecewiseConstant,
    /// Spread volatility sigma(t) >= 0, annualized.
    pub spread_vol: PiecewiseConstant,
    /// Market price of credit risk M(t), dimensionless.
    pub credit_risk_premium: PiecewiseConstant,
    /// Bond-CDS basis gamma(t), annualized; may be negative.
    pub basis: PiecewiseConstant,
}

impl PartyCredit {
    /// Loss given default 1 - R.
    pub fn lgd(&self) -> f64 {
        1.0 - self.recovery
    }

    /// Short-term funding spread over OIS at spread level `pi`:
    /// f_bar(t) = gamma(t) + pi.
    pub fn funding_spread(&self, t: f64, pi: f64) -> f64 {
        self.basis.value(t) + pi
    }

    fn validate(&self, horizon: f64) -> Result<(), ModelError> {
        if !(0.0..1.0).contains(&self.recovery) {
            return Err(ModelError::InvalidRecovery {
                party: self.role,
                value: self.recovery,
            });
        }
        if self.spread0 < 0.0 {
            return Err(ModelError::NegativeInitialSpread {
                party: self.role,
                value: self.spread0,
            });
        }
        check_nonnegative(
            &self.spread_vol,
            horizon,
            match self.role {
                PartyRole::Hedger => "hedger spread_vol",
                PartyRole::Investor => "investor spread_vol",
            },
        )
    }
}

/// The deal's underlying asset: spot, real-measure drift and volatility.
#[derive(Debug, Clone, PartialEq)]
pub struct UnderlyingSpec {
    pub spot: f64,
    pub drift: PiecewiseConstant,
    pub vol: PiecewiseConstant,
}

/// Pairwise instantaneous correlations between the three diffusion drivers.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSet {
    pub spot_investor: PiecewiseConstant,
    pub spot_hedger: PiecewiseConstant,
    pub hedger_investor: PiecewiseConstant,
}

impl CorrelationSet {
    pub fn zero() -> Self {
        Self {
            spot_investor: PiecewiseConstant::flat(0.0),
            spot_hedger: PiecewiseConstant::flat(0.0),
            hedger_investor: PiecewiseConstant::flat(0.0),
        }
    }

    /// Lower Cholesky factor of the correlation matrix at time t, in driver
    /// order (spot, investor spread, hedger spread).
    pub fn cholesky_at(&self, t: f64) -> Option<[[f64; 3]; 3]> {
        cholesky3(
            self.spot_investor.value(t),
            self.spot_hedger.value(t),
            self.hedger_investor.value(t),
        )
    }
}

fn check_nonnegative(
    curve: &PiecewiseConstant,
    horizon: f64,
    field: &'static str,
) -> Result<(), ModelError> {
    for (&t, &v) in curve.breakpoints().iter().zip(curve.values()) {
        if t < horizon && v < 0.0 {
            return Err(ModelError::NegativeVol {
                field,
                value: v,
                time: t.max(0.0),
            });
        }
    }
    Ok(())
}

/// Validated, immutable market model. Safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketModel {
    curves: RateCurves,
    hedger: PartyCredit,
    investor: PartyCredit,
    underlying: UnderlyingSpec,
    correlations: CorrelationSet,
    horizon: f64,
}

impl MarketModel {
    /// Builds and validates a model covering [0, horizon].
    ///
    /// Rejects non-PSD correlation matrices (checked at t = 0 and at every
    /// correlation breakpoint; no repair is attempted), recoveries outside
    /// [0, 1), negative volatilities and non-positive spot.
    pub fn new(
        curves: RateCurves,
        hedger: PartyCredit,
        investor: PartyCredit,
        underlying: UnderlyingSpec,
        correlations: CorrelationSet,
        horizon: f64,
    ) -> Result<Self, ModelError> {
        if horizon.is_nan() || horizon <= 0.0 {
            return Err(ModelError::NonPositiveHorizon(horizon));
        }
        if underlying.spot.is_nan() || underlying.spot <= 0.0 {
            return Err(ModelError::NonPositiveSpot(underlying.spot));
        }
        check_nonnegative(&underlying.vol, horizon, "underlying vol")?;
        debug_assert_eq!(hedger.role, PartyRole::Hedger);
        debug_assert_eq!(investor.role, PartyRole::Investor);
        hedger.validate(horizon)?;
        investor.validate(horizon)?;

        let corr_fields: [(&PiecewiseConstant, &'static str); 3] = [
            (&correlations.spot_investor, "rho(spot, investor)"),
            (&correlations.spot_hedger, "rho(spot, hedger)"),
            (&correlations.hedger_investor, "rho(hedger, investor)"),
        ];
        let mut check_times = vec![0.0];
        for (curve, field) in corr_fields {
            for (&t, &v) in curve.breakpoints().iter().zip(curve.values()) {
                if t < horizon && !(-1.0..=1.0).contains(&v) {
                    return Err(ModelError::CorrelationOutOfRange {
                        field,
                        value: v,
                        time: t.max(0.0),
                    });
                }
                if t > 0.0 && t < horizon {
                    check_times.push(t);
                }
            }
        }
        check_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        check_times.dedup();
        for &t in &check_times {
            if correlations.cholesky_at(t).is_none() {
                return Err(ModelError::NonPsdCorrelation { time: t });
            }
        }

        Ok(Self {
            curves,
            hedger,
            investor,
            underlying,
            correlations,
            horizon,
        })
    }

    pub fn curves(&self) -> &RateCurves {
        &self.curves
    }

    pub fn underlying(&self) -> &UnderlyingSpec {
        &self.underlying
    }

    pub fn correlations(&self) -> &CorrelationSet {
        &self.correlations
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn party(&self, role: PartyRole) -> &PartyCredit {
        match role {
            PartyRole::Hedger => &self.hedger,
            PartyRole::Investor => &self.investor,
        }
    }

    pub fn hedger(&self) -> &PartyCredit {
        &self.hedger
    }

    pub fn investor(&self) -> &PartyCredit {
        &self.investor
    }

    /// Fails with `CoverageGap` when a pricer needs times beyond the horizon.
    pub fn require_coverage(&self, required: f64) -> Result<(), ModelError> {
        if required > self.horizon + 1e-12 {
            return Err(ModelError::CoverageGap {
                field: "model horizon",
                covered: self.horizon,
                required,
            });
        }
        Ok(())
    }

    /// Copy of the model with the hedger's bond-CDS basis replaced. Used by
    /// the agreement analytics to evaluate the price as a function of the
    /// basis with everything else held fixed.
    pub fn with_hedger_basis(&self, basis: PiecewiseConstant) -> Self {
        let mut model = self.clone();
        model.hedger.basis = basis;
        model
    }

    /// Copy of the model with the two parties' credit descriptions swapped
    /// (role tags preserved). Mirror view for odd-symmetry checks.
    pub fn with_swapped_parties(&self) -> Self {
        let mut model = self.clone();
        std::mem::swap(&mut model.hedger, &mut model.investor);
        model.hedger.role = PartyRole::Hedger;
        model.investor.role = PartyRole::Investor;
        model
    }

    /// Risk-neutral drifts and default intensities implied by the model.
    pub fn q_dynamics(&self) -> QDynamics<'_> {
        QDynamics { model: self }
    }
}

/// Risk-neutral dynamics view of a model.
///
/// The measure change leaves volatilities and correlations untouched; the
/// spot picks up geometric drift r - q and each spread's drift is shifted by
/// the market price of credit risk, mu - M sigma. Default intensities are
/// the spread over loss-given-default.
#[derive(Debug, Clone, Copy)]
pub struct QDynamics<'a> {
    model: &'a MarketModel,
}

impl QDynamics<'_> {
    /// Geometric drift rate of the spot under Q: r(t) - q(t).
    pub fn spot_drift_rate(&self, t: f64) -> f64 {
        self.model.curves.asset_rate.value(t) - self.model.curves.dividend_yield.value(t)
    }

    /// Arithmetic drift of the given party's spread under Q:
    /// mu(t) - M(t) sigma(t).
    pub fn spread_drift(&self, role: PartyRole, t: f64) -> f64 {
        let p = self.model.party(role);
        p.spread_drift.value(t) - p.credit_risk_premium.value(t) * p.spread_vol.value(t)
    }

    /// Q-measure default intensity at spread level `pi`: pi / (1 - R).
    pub fn intensity(&self, role: PartyRole, pi: f64) -> f64 {
        pi / self.model.party(role).lgd()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn flat_party(role: PartyRole, recovery: f64, spread0: f64) -> PartyCredit {
        PartyCredit {
            role,
            recovery,
            spread0,
            spread_drift: PiecewiseConstant::flat(0.0),
            spread_vol: PiecewiseConstant::flat(0.0),
            credit_risk_premium: PiecewiseConstant::flat(0.0),
            basis: PiecewiseConstant::flat(0.0),
        }
    }

    pub(crate) fn flat_model(corr: f64) -> Result<MarketModel, ModelError> {
        MarketModel::new(
            RateCurves {
                ois: PiecewiseConstant::flat(0.02),
                asset_rate: PiecewiseConstant::flat(0.02),
                dividend_yield: PiecewiseConstant::flat(0.0),
            },
            flat_party(PartyRole::Hedger, 0.4, 0.018),
            flat_party(PartyRole::Investor, 0.4, 0.006),
            UnderlyingSpec {
                spot: 100.0,
                drift: PiecewiseConstant::flat(0.05),
                vol: PiecewiseConstant::flat(0.2),
            },
            CorrelationSet {
                spot_investor: PiecewiseConstant::flat(corr),
                spot_hedger: PiecewiseConstant::flat(corr),
                hedger_investor: PiecewiseConstant::flat(corr),
            },
            5.0,
        )
    }

    #[test]
    fn accepts_zero_correlation_constant_curves() {
        assert!(flat_model(0.0).is_ok());
    }

    #[test]
    fn rejects_indefinite_correlation() {
        // Equicorrelation -0.99 has smallest eigenvalue 1 + 2 rho = -0.98.
        let err = flat_model(-0.99).unwrap_err();
        assert_eq!(err, ModelError::NonPsdCorrelation { time: 0.0 });
    }

    #[test]
    fn rejects_unit_recovery() {
        let mut hedger = flat_party(PartyRole::Hedger, 1.0, 0.018);
        hedger.recovery = 1.0;
        let err = MarketModel::new(
            RateCurves {
                ois: PiecewiseConstant::flat(0.02),
                asset_rate: PiecewiseConstant::flat(0.02),
                dividend_yield: PiecewiseConstant::flat(0.0),
            },
            hedger,
            flat_party(PartyRole::Investor, 0.4, 0.006),
            UnderlyingSpec {
                spot: 100.0,
                drift: PiecewiseConstant::flat(0.0),
                vol: PiecewiseConstant::flat(0.2),
            },
            CorrelationSet::zero(),
            5.0,
        )
        .unwrap_err();
        assert_eq!(
            err,
            ModelError::InvalidRecovery {
                party: PartyRole::Hedger,
                value: 1.0
            }
        );
    }

    #[test]
    fn rejects_negative_vol_and_spot() {
        let mut model = flat_model(0.0).unwrap();
        model.underlying.vol = PiecewiseConstant::flat(-0.1);
        let rebuilt = MarketModel::new(
            model.curves.clone(),
            model.hedger.clone(),
            model.investor.clone(),
            model.underlying.clone(),
            model.correlations.clone(),
            5.0,
        );
        assert!(matches!(rebuilt, Err(ModelError::NegativeVol { .. })));

        let mut model = flat_model(0.0).unwrap();
        model.underlying.spot = 0.0;
        let rebuilt = MarketModel::new(
            model.curves.clone(),
            model.hedger.clone(),
            model.investor.clone(),
            model.underlying.clone(),
            model.correlations.clone(),
            5.0,
        );
        assert!(matches!(rebuilt, Err(ModelError::NonPositiveSpot(_))));
    }

    #[test]
    fn coverage_gap_reported() {
        let model = flat_model(0.0).unwrap();
        assert!(model.require_coverage(4.9).is_ok());
        assert!(matches!(
            model.require_coverage(5.1),
            Err(ModelError::CoverageGap { .. })
        ));
    }

    #[test]
    fn q_dynamics_values() {
        let model = flat_model(0.0).unwrap();
        let q = model.q_dynamics();
        // r = q of the carry sense: asset_rate 0.02 minus dividend 0.
        assert_relative_eq!(q.spot_drift_rate(1.0), 0.02, epsilon = 1e-15);
        // Zero risk premium: Q-drift equals real drift.
        assert_relative_eq!(q.spread_drift(PartyRole::Hedger, 0.5), 0.0, epsilon = 1e-15);
        // lambda = pi / (1 - R): 0.012 / 0.6 = 0.02.
        assert_relative_eq!(q.intensity(PartyRole::Hedger, 0.012), 0.02, epsilon = 1e-15);
    }

    #[test]
    fn q_drift_shifts_by_risk_premium() {
        let mut model = flat_model(0.0).unwrap();
        model.hedger.spread_drift = PiecewiseConstant::flat(0.001);
        model.hedger.spread_vol = PiecewiseConstant::flat(0.004);
        model.hedger.credit_risk_premium = PiecewiseConstant::flat(0.5);
        let model = MarketModel::new(
            model.curves.clone(),
            model.hedger.clone(),
            model.investor.clone(),
            model.underlying.clone(),
            model.correlations.clone(),
            5.0,
        )
        .unwrap();
        let q = model.q_dynamics();
        assert_relative_eq!(
            q.spread_drift(PartyRole::Hedger, 0.0),
            0.001 - 0.5 * 0.004,
            epsilon = 1e-15
        );
    }

    #[test]
    fn martingale_spot_under_zero_carry() {
        let mut model = flat_model(0.0).unwrap();
        model.curves.dividend_yield = PiecewiseConstant::flat(0.02);
        let model = MarketModel::new(
            model.curves.clone(),
            model.hedger.clone(),
            model.investor.clone(),
            model.underlying.clone(),
            model.correlations.clone(),
            5.0,
        )
        .unwrap();
        assert_relative_eq!(
            model.q_dynamics().spot_drift_rate(0.3),
            0.0,
            epsilon = 1e-15
        );
    }
}
