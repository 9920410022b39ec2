//! Shared numerical primitives: Gaussian distribution functions, undiscounted
//! Black formulas and small dense linear algebra used by the solvers.

use statrs::function::erf;

/// Standard normal cumulative distribution function.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Inverse of the standard normal CDF.
///
/// Maps u in (0, 1) to the quantile z with P(Z <= z) = u. Used to turn
/// counter-based uniforms into Gaussian increments with a fixed draw layout.
pub fn inv_norm_cdf(u: f64) -> f64 {
    debug_assert!(u > 0.0 && u < 1.0);
    -std::f64::consts::SQRT_2 * erf::erfc_inv(2.0 * u)
}

/// Undiscounted Black call value E[(F_T - K)^+] for a lognormal forward with
/// the given total standard deviation over the averaging period.
pub fn black_call_undiscounted(forward: f64, strike: f64, total_stddev: f64) -> f64 {
    if total_stddev <= 0.0 {
        return (forward - strike).max(0.0);
    }
    if forward <= 0.0 {
        return 0.0;
    }
    if strike <= 0.0 {
        return forward - strike;
    }
    let d1 = ((forward / strike).ln() + 0.5 * total_stddev * total_stddev) / total_stddev;
    let d2 = d1 - total_stddev;
    forward * norm_cdf(d1) - strike * norm_cdf(d2)
}

/// Undiscounted Black put value E[(K - F_T)^+], via put-call parity.
pub fn black_put_undiscounted(forward: f64, strike: f64, total_stddev: f64) -> f64 {
    black_call_undiscounted(forward, strike, total_stddev) - forward + strike
}

/// Evaluates (1 - e^{-a t}) / a, the time-integral of e^{-a s} over [0, t].
///
/// The ratio has a removable singularity at a = 0; below a threshold of
/// 1e-10 on |a| the series expansion t (1 - a t / 2 + (a t)^2 / 6) is used,
/// which is exact to double precision in that regime.
pub fn exp_decay_integral(a: f64, t: f64) -> f64 {
    if a.abs() < 1e-10 {
        let at = a * t;
        t * (1.0 - 0.5 * at + at * at / 6.0)
    } else {
        -(-a * t).exp_m1() / a
    }
}

/// Lower-triangular Cholesky factor of a 3x3 correlation matrix with unit
/// diagonal and off-diagonals (rho_01, rho_02, rho_12).
///
/// Returns `None` when the matrix is not positive semi-definite within a
/// small numerical tolerance. Degenerate (singular but PSD) inputs such as
/// |rho| = 1 are accepted with the corresponding pivot clamped to zero.
pub fn cholesky3(rho_01: f64, rho_02: f64, rho_12: f64) -> Option<[[f64; 3]; 3]> {
    const TOL: f64 = 1e-12;
    for r in [rho_01, rho_02, rho_12] {
        if !(-1.0..=1.0).contains(&r) {
            return None;
        }
    }
    let l11 = 1.0;
    let l21 = rho_01;
    let l31 = rho_02;
    let d2 = 1.0 - l21 * l21;
    if d2 < -TOL {
        return None;
    }
    let l22 = d2.max(0.0).sqrt();
    let l32 = if l22 > TOL {
        (rho_12 - l21 * l31) / l22
    } else {
        // Second factor is a deterministic copy of the first: the third row
        // is only consistent if rho_12 matches rho_01 * rho_02 exactly.
        if (rho_12 - l21 * l31).abs() > 1e-9 {
            return None;
        }
        0.0
    };
    let d3 = 1.0 - l31 * l31 - l32 * l32;
    if d3 < -TOL {
        return None;
    }
    let l33 = d3.max(0.0).sqrt();
    Some([[l11, 0.0, 0.0], [l21, l22, 0.0], [l31, l32, l33]])
}

/// The damped normal-equation matrix was not positive definite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NotPositiveDefinite;

/// Solves the symmetric positive semi-definite system (A + ridge I) x = b in
/// place via Cholesky factorization. A is given as a dense row-major matrix.
///
/// Used for the regression normal equations; the ridge term keeps the solve
/// well-posed when the design matrix is rank deficient.
pub fn solve_spd_ridge(
    a: &mut [f64],
    b: &mut [f64],
    n: usize,
    ridge: f64,
) -> Result<(), NotPositiveDefinite> {
    assert_eq!(a.len(), n * n);
    assert_eq!(b.len(), n);
    for i in 0..n {
        a[i * n + i] += ridge;
    }
    // In-place Cholesky, lower triangle.
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d <= 0.0 {
            return Err(NotPositiveDefinite);
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    // Forward then backward substitution.
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    Ok(())
}
