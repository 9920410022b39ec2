//! Deal definitions, their perfectly collateralized values and the riskless
//! close-out jump rules.
//!
//! The collateralized value V^C discounts at the collateral rate c with the
//! underlying carrying r - q, and is closed-form for the three supported
//! payoffs:
//!
//! - deposit:  V^C(t) = dir N exp(-int_t^T c)
//! - forward:  V^C(t, S) = dir N exp(-int_t^T c) (S exp(int_t^T (r - q)) - K)
//! - call:     V^C(t, S) = dir N exp(-int_t^T c) Black(S exp(int_t^T (r-q)), K, var_t^T)
//!
//! Close-out is riskless: on a default the deal settles against V^C, with
//! the surviving party recovering only a fraction of what the defaulted
//! party owed.

use crate::market_model::RateCurves;
use crate::math::{black_call_undiscounted, black_put_undiscounted};
use crate::term_structure::PiecewiseConstant;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum InstrumentError {
    #[error("valuation time {t} is after maturity {maturity}")]
    AfterMaturity { t: f64, maturity: f64 },
    #[error("invalid deal: {0}")]
    InvalidDeal(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DealKind {
    Deposit,
    Forward,
    EuropeanCall,
}

/// Sign of the deal as seen by the investor. `Long` means the payoff accrues
/// to the investor (for the deposit: the investor is the lender).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Long,
    Short,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Long => 1.0,
            Direction::Short => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Direction::Long => Direction::Short,
            Direction::Short => Direction::Long,
        }
    }
}

/// The trade being valued.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DealSpec {
    pub kind: DealKind,
    pub notional: f64,
    /// Maturity in years.
    pub maturity: f64,
    /// Strike, required for forward and european_call.
    pub strike: Option<f64>,
    pub direction: Direction,
}

impl DealSpec {
    pub fn deposit(notional: f64, maturity: f64, direction: Direction) -> Self {
        Self {
            kind: DealKind::Deposit,
            notional,
            maturity,
            strike: None,
            direction,
        }
    }

    pub fn forward(notional: f64, maturity: f64, strike: f64, direction: Direction) -> Self {
        Self {
            kind: DealKind::Forward,
            notional,
            maturity,
            strike: Some(strike),
            direction,
        }
    }

    pub fn european_call(notional: f64, maturity: f64, strike: f64, direction: Direction) -> Self {
        Self {
            kind: DealKind::EuropeanCall,
            notional,
            maturity,
            strike: Some(strike),
            direction,
        }
    }

    pub fn validate(&self) -> Result<(), InstrumentError> {
        if self.maturity.is_nan() || self.maturity <= 0.0 {
            return Err(InstrumentError::InvalidDeal(format!(
                "maturity must be > 0, got {}",
                self.maturity
            )));
        }
        if self.notional == 0.0 || !self.notional.is_finite() {
            return Err(InstrumentError::InvalidDeal(format!(
                "notional must be finite and nonzero, got {}",
                self.notional
            )));
        }
        match self.kind {
            DealKind::Deposit => {
                if self.strike.is_some() {
                    return Err(InstrumentError::InvalidDeal(
                        "deposit takes no strike".into(),
                    ));
                }
                Ok(())
            }
            DealKind::Forward | DealKind::EuropeanCall => match self.strike {
                Some(k) if k > 0.0 => Ok(()),
                Some(k) => Err(InstrumentError::InvalidDeal(format!(
                    "strike must be > 0, got {k}"
                ))),
                None => Err(InstrumentError::InvalidDeal(
                    "strike is required for this payoff".into(),
                )),
            },
        }
    }

    /// Signed units: direction times notional.
    pub fn signed_notional(&self) -> f64 {
        self.direction.sign() * self.notional
    }

    /// Whether the collateralized value depends on the underlying.
    pub fn depends_on_spot(&self) -> bool {
        !matches!(self.kind, DealKind::Deposit)
    }

    /// Terminal payoff as seen by the investor.
    pub fn payoff(&self, spot_at_maturity: f64) -> f64 {
        let units = self.signed_notional();
        match self.kind {
            DealKind::Deposit => units,
            DealKind::Forward => units * (spot_at_maturity - self.strike.unwrap()),
            DealKind::EuropeanCall => units * (spot_at_maturity - self.strike.unwrap()).max(0.0),
        }
    }

    /// Same deal seen from the other side.
    pub fn mirrored(&self) -> Self {
        let mut deal = self.clone();
        deal.direction = deal.direction.flipped();
        deal
    }
}

/// Collateralized value split into signed value and its absolute positive
/// and negative parts, as used by the close-out rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloseOutValues {
    pub value: f64,
    pub positive_part: f64,
    pub negative_part: f64,
}

impl CloseOutValues {
    pub fn from_value(value: f64) -> Self {
        Self {
            value,
            positive_part: value.max(0.0),
            negative_part: (-value).max(0.0),
        }
    }
}

/// Collateralized value of the deal at time t and the given spot level.
///
/// `vol` is the underlying volatility term structure; only the option payoff
/// uses it (through the remaining integrated variance).
pub fn collateralized_value(
    deal: &DealSpec,
    curves: &RateCurves,
    vol: &PiecewiseConstant,
    spot: f64,
    t: f64,
) -> Result<CloseOutValues, InstrumentError> {
    if t > deal.maturity {
        return Err(InstrumentError::AfterMaturity {
            t,
            maturity: deal.maturity,
        });
    }
    deal.validate()?;
    let maturity = deal.maturity;
    let df_c = curves.ois_discount(t, maturity);
    let units = deal.signed_notional();
    let value = match deal.kind {
        DealKind::Deposit => units * df_c,
        DealKind::Forward => {
            let carry = (curves.asset_rate.integral(t, maturity)
                - curves.dividend_yield.integral(t, maturity))
            .exp();
            units * df_c * (spot * carry - deal.strike.unwrap())
        }
        DealKind::EuropeanCall => {
            let carry = (curves.asset_rate.integral(t, maturity)
                - curves.dividend_yield.integral(t, maturity))
            .exp();
            let stddev = vol.integral_of_square(t, maturity).max(0.0).sqrt();
            units * df_c * black_call_undiscounted(spot * carry, deal.strike.unwrap(), stddev)
        }
    };
    Ok(CloseOutValues::from_value(value))
}

/// Unconditional expectations E[(V^C_t)^+] and E[(V^C_t)^-] over the time-t
/// spot distribution implied by (spot0, carry, vol) under the pricing
/// measure. Drives the deterministic-mode estimator, where credit accruals
/// weight these deterministic profiles.
pub fn expected_close_out_parts(
    deal: &DealSpec,
    curves: &RateCurves,
    vol: &PiecewiseConstant,
    spot0: f64,
    t: f64,
) -> Result<(f64, f64), InstrumentError> {
    if t > deal.maturity {
        return Err(InstrumentError::AfterMaturity {
            t,
            maturity: deal.maturity,
        });
    }
    let maturity = deal.maturity;
    let df_c = curves.ois_discount(t, maturity);
    let units = deal.signed_notional();
    let (pos, neg) = match deal.kind {
        DealKind::Deposit => {
            let v = units * df_c;
            (v.max(0.0), (-v).max(0.0))
        }
        DealKind::Forward => {
            // F_t = S_t exp(int_t^T (r - q)) is lognormal seen from 0 with
            // mean S_0 exp(int_0^T (r - q)) and log-variance int_0^t sigma^2.
            let forward0 = spot0
                * (curves.asset_rate.integral(0.0, maturity)
                    - curves.dividend_yield.integral(0.0, maturity))
                .exp();
            let sd = vol.integral_of_square(0.0, t).max(0.0).sqrt();
            let k = deal.strike.unwrap();
            let call = black_call_undiscounted(forward0, k, sd);
            let put = black_put_undiscounted(forward0, k, sd);
            if units >= 0.0 {
                (units * df_c * call, units * df_c * put)
            } else {
                (-units * df_c * put, -units * df_c * call)
            }
        }
        DealKind::EuropeanCall => {
            // Tower property: E[Black(F_t, K, var_t^T)] = Black(F_0, K, var_0^T).
            let forward0 = spot0
                * (curves.asset_rate.integral(0.0, maturity)
                    - curves.dividend_yield.integral(0.0, maturity))
                .exp();
            let sd = vol.integral_of_square(0.0, maturity).max(0.0).sqrt();
            let expected = black_call_undiscounted(forward0, deal.strike.unwrap(), sd);
            let v = units * df_c * expected;
            (v.max(0.0), (-v).max(0.0))
        }
    };
    Ok((pos, neg))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefaultingParty {
    Investor,
    Hedger,
}

/// Value the deal settles to when `party` defaults, under riskless close-out.
///
/// Investor default: the investor pays only R_I of what it owed, so the deal
/// jumps to R_I V^C when V^C < 0 and to V^C otherwise. Hedger default is the
/// mirror image.
pub fn close_out_target(
    close_out: &CloseOutValues,
    party: DefaultingParty,
    recovery_investor: f64,
    recovery_hedger: f64,
) -> f64 {
    let vc = close_out.value;
    match party {
        DefaultingParty::Investor => {
            if vc < 0.0 {
                recovery_investor * vc
            } else {
                vc
            }
        }
        DefaultingParty::Hedger => {
            if vc < 0.0 {
                vc
            } else {
                recovery_hedger * vc
            }
        }
    }
}

/// Jump in the deal value on default of `party`: settlement target minus the
/// pre-default value.
pub fn jump_value(
    close_out: &CloseOutValues,
    v: f64,
    party: DefaultingParty,
    recovery_investor: f64,
    recovery_hedger: f64,
) -> f64 {
    close_out_target(close_out, party, recovery_investor, recovery_hedger) - v
}
