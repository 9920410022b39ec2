//! Valuation engine for uncollateralized derivative transactions priced by
//! replication from the hedging party's perspective.
//!
//! The engine decomposes the value of a deal into its perfectly
//! collateralized equivalent, a survival-contingent CVA, a survival-contingent
//! DVA and a funding adjustment driven by the hedger's short-term bond-CDS
//! basis. Three mutually cross-checking solvers are provided:
//!
//! - [`closed_form`]: exact deposit prices under constant or piecewise
//!   deterministic parameters, plus the zero-recovery external benchmark.
//! - [`mc_pricer`]: Monte Carlo solution of the recursive pricing equation
//!   with a Picard fixed point for the self-referential funding term.
//! - [`pde_pricer`]: Crank-Nicolson finite differences for the
//!   deterministic-spread reduction in one spatial factor.
//!
//! [`hedge`] verifies the replication argument by simulating the full hedge
//! portfolio, and [`agreement`] answers whether two counterparties with
//! different bond-CDS bases can close a deal.

pub mod agreement;
pub mod closed_form;
pub mod hedge;
pub mod instruments;
pub mod market_model;
pub mod math;
pub mod mc_pricer;
pub mod pde_pricer;
pub mod simulation;
pub mod term_structure;

pub use instruments::{CloseOutValues, DealKind, DealSpec, DefaultingParty};
pub use market_model::{
    CorrelationSet, MarketModel, ModelError, PartyCredit, PartyRole, QDynamics, RateCurves,
    UnderlyingSpec,
};
pub use mc_pricer::{EstimatorMode, McConfig, ValuationBreakdown};
pub use simulation::{PathSet, TimeGrid};
pub use term_structure::PiecewiseConstant;
