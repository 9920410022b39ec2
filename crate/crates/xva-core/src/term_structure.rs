//! Piecewise-constant term structures for all time-dependent model inputs.
//!
//! Every deterministic parameter (rates, drifts, vols, correlations, bases,
//! hazards) is represented as a right-continuous step function with sorted
//! breakpoints. Step functions are closed under the segment-wise exponential
//! integrals required by the time-varying deposit formula, so curve
//! integrals are computed exactly rather than by quadrature.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CurveError {
    #[error("curve must have at least one breakpoint")]
    Empty,
    #[error("breakpoint times must be strictly increasing (t[{index}] = {time})")]
    UnsortedBreakpoints { index: usize, time: f64 },
    #[error("first breakpoint must be <= 0, got {0}")]
    LateFirstBreakpoint(f64),
    #[error("breakpoints and values have different lengths ({times} vs {values})")]
    LengthMismatch { times: usize, values: usize },
    #[error("curve value at index {index} is not finite")]
    NonFiniteValue { index: usize },
    #[error("curve only covers up to t = {covered}, needed {required}")]
    CoverageGap { covered: f64, required: f64 },
}

/// Right-continuous step function of time: `value(t) = values[i]` on
/// `[times[i], times[i+1])`.
///
/// The first breakpoint must be at or before 0 so the curve covers the whole
/// valuation horizon; the last segment extends to +infinity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CurveData", into = "CurveData")]
pub struct PiecewiseConstant {
    times: Vec<f64>,
    values: Vec<f64>,
}

/// Serialized form: parallel breakpoint/value lists.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CurveData {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<CurveData> for PiecewiseConstant {
    type Error = CurveError;
    fn try_from(data: CurveData) -> Result<Self, CurveError> {
        PiecewiseConstant::new(data.times, data.values)
    }
}

impl From<PiecewiseConstant> for CurveData {
    fn from(curve: PiecewiseConstant) -> Self {
        CurveData {
            times: curve.times,
            values: curve.values,
        }
    }
}

impl PiecewiseConstant {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self, CurveError> {
        if times.is_empty() {
            return Err(CurveError::Empty);
        }
        if times.len() != values.len() {
            return Err(CurveError::LengthMismatch {
                times: times.len(),
                values: values.len(),
            });
        }
        if times[0] > 0.0 {
            return Err(CurveError::LateFirstBreakpoint(times[0]));
        }
        for i in 1..times.len() {
            if times[i] <= times[i - 1] {
                return Err(CurveError::UnsortedBreakpoints {
                    index: i,
                    time: times[i],
                });
            }
        }
        for (index, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(CurveError::NonFiniteValue { index });
            }
        }
        Ok(Self { times, values })
    }

    /// Constant curve.
    pub fn flat(value: f64) -> Self {
        Self::new(vec![0.0], vec![value]).expect("flat curve is always valid")
    }

    /// Value at time t (right-continuous lookup).
    pub fn value(&self, t: f64) -> f64 {
        let idx = match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        };
        self.values[idx]
    }

    /// Exact integral of the step function over [a, b].
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b < a {
            return -self.integral(b, a);
        }
        let mut acc = 0.0;
        let mut left = a;
        for i in 0..self.times.len() {
            let seg_end = if i + 1 < self.times.len() {
                self.times[i + 1]
            } else {
                f64::INFINITY
            };
            if seg_end <= left {
                continue;
            }
            let right = seg_end.min(b);
            if right > left {
                acc += self.values[i] * (right - left);
                left = right;
            }
            if left >= b {
                break;
            }
        }
        acc
    }

    /// Exact integral of the squared step function over [a, b]. Total
    /// variance accumulator for volatility curves.
    pub fn integral_of_square(&self, a: f64, b: f64) -> f64 {
        if b < a {
            return -self.integral_of_square(b, a);
        }
        let mut acc = 0.0;
        let mut left = a;
        for i in 0..self.times.len() {
            let seg_end = if i + 1 < self.times.len() {
                self.times[i + 1]
            } else {
                f64::INFINITY
            };
            if seg_end <= left {
                continue;
            }
            let right = seg_end.min(b);
            if right > left {
                acc += self.values[i] * self.values[i] * (right - left);
                left = right;
            }
            if left >= b {
                break;
            }
        }
        acc
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// True if the curve is identically equal to `v` on [0, horizon].
    pub fn is_constant_eq(&self, v: f64, horizon: f64) -> bool {
        self.times
            .iter()
            .zip(&self.values)
            .all(|(&t, &val)| t >= horizon || val == v)
            && self.value(0.0) == v
    }

    /// Copy with every value shifted by a constant.
    pub fn shifted(&self, delta: f64) -> Self {
        Self {
            times: self.times.clone(),
            values: self.values.iter().map(|v| v + delta).collect(),
        }
    }

    /// Smallest and largest value attained on [0, horizon].
    pub fn range_on(&self, horizon: f64) -> (f64, f64) {
        let mut lo = self.value(0.0);
        let mut hi = lo;
        for (&t, &v) in self.times.iter().zip(&self.values) {
            if t > 0.0 && t < horizon {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }
}

/// Sorted union of all interior breakpoints of `curves` restricted to
/// (a, b), with a and b prepended/appended. Segment boundaries for exact
/// multi-curve integration.
pub fn merged_breakpoints(curves: &[&PiecewiseConstant], a: f64, b: f64) -> Vec<f64> {
    let mut pts = vec![a];
    for curve in curves {
        for &t in curve.breakpoints() {
            if t > a && t < b {
                pts.push(t);
            }
        }
    }
    pts.push(b);
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.dedup_by(|x, y| (*x - *y).abs() < 1e-14);
    pts
}
