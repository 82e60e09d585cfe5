//! Error-covariance recursion for the two-user linear feedback scheme.
//!
//! The transmit vector evolves as `X(k+1) = A X(k) - A K Y'(k)` with
//! `A = diag(a1, a2)`, `H = [1 1]`, `Y' = H X + Z` and the innovation gain
//! `K = Q Hᵀ / (H Q Hᵀ + σ²)`. Its covariance obeys
//! `Q(k+1) = A [Q - Q Hᵀ (H Q Hᵀ + σ²)⁻¹ H Q] A`, whose positive fixed point
//! gives the per-user powers (diagonal) and the input correlation.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::regions;

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Symmetric 2×2 covariance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Covariance2 {
    pub q11: f64,
    pub q22: f64,
    pub q12: f64,
}

impl Covariance2 {
    pub fn new(q11: f64, q22: f64, q12: f64) -> Self {
        Self { q11, q22, q12 }
    }

    pub fn diag(q11: f64, q22: f64) -> Self {
        Self::new(q11, q22, 0.0)
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn scaled(self, c: f64) -> Self {
        Self::new(self.q11 * c, self.q22 * c, self.q12 * c)
    }

    /// Signed correlation coefficient, 0 when either variance vanishes.
    pub fn correlation(&self) -> f64 {
        let d = (self.q11 * self.q22).sqrt();
        if d > 0.0 {
            self.q12 / d
        } else {
            0.0
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.q11 - other.q11)
            .abs()
            .max((self.q22 - other.q22).abs())
            .max((self.q12 - other.q12).abs())
    }

    pub fn is_valid(&self) -> bool {
        let slack = 1e-12 * (1.0 + self.q11.abs() * self.q22.abs());
        self.q11.is_finite()
            && self.q22.is_finite()
            && self.q12.is_finite()
            && self.q11 >= 0.0
            && self.q22 >= 0.0
            && self.q12 * self.q12 <= self.q11 * self.q22 + slack
    }

    /// `H Q Hᵀ` with `H = [1 1]`.
    fn output_variance(&self) -> f64 {
        self.q11 + self.q22 + 2.0 * self.q12
    }
}

fn check_noise(sigma_z2: f64) -> Result<()> {
    if sigma_z2 > 0.0 && sigma_z2.is_finite() {
        Ok(())
    } else {
        Err(invalid("sigma_z2", format!("noise variance must be positive, got {sigma_z2}")))
    }
}

/// One iterate of the covariance recursion.
pub fn riccati_step(q: Covariance2, a1: f64, a2: f64, sigma_z2: f64) -> Result<Covariance2> {
    check_noise(sigma_z2)?;
    Ok(step_unchecked(&q, a1, a2, sigma_z2))
}

fn step_unchecked(q: &Covariance2, a1: f64, a2: f64, sigma_z2: f64) -> Covariance2 {
    let s = q.output_variance() + sigma_z2;
    // Q Hᵀ
    let v1 = q.q11 + q.q12;
    let v2 = q.q12 + q.q22;
    let m11 = q.q11 - v1 * v1 / s;
    let m22 = q.q22 - v2 * v2 / s;
    let m12 = q.q12 - v1 * v2 / s;
    Covariance2::new(a1 * a1 * m11, a2 * a2 * m22, a1 * a2 * m12)
}

/// Innovation gain `Q Hᵀ / (H Q Hᵀ + σ²)`.
pub fn optimal_gain(q: &Covariance2, sigma_z2: f64) -> Result<[f64; 2]> {
    check_noise(sigma_z2)?;
    let s = q.output_variance() + sigma_z2;
    Ok([(q.q11 + q.q12) / s, (q.q12 + q.q22) / s])
}

/// Fixed point reached from `σ²·I`, plus the number of iterations used.
#[derive(Clone, Copy, Debug)]
pub struct FixedPoint {
    pub q: Covariance2,
    pub iterations: usize,
    pub residual: f64,
}

pub fn riccati_fixed_point(
    a1: f64,
    a2: f64,
    sigma_z2: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Covariance2> {
    solve_fixed_point(a1, a2, sigma_z2, tol, max_iter).map(|fp| fp.q)
}

pub fn solve_fixed_point(
    a1: f64,
    a2: f64,
    sigma_z2: f64,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPoint> {
    check_noise(sigma_z2)?;
    if !(a1.abs() > 1.0 && a2.abs() > 1.0) {
        return Err(invalid("a", format!("need |a1| > 1 and |a2| > 1, got ({a1}, {a2})")));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(invalid("tol", "tolerance must be positive"));
    }
    let mut q = Covariance2::diag(sigma_z2, sigma_z2);
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let next = step_unchecked(&q, a1, a2, sigma_z2);
        if !next.is_valid() {
            return Err(Error::NonConvergence {
                iterations: it,
                residual,
            });
        }
        residual = next.max_abs_diff(&q);
        q = next;
        if residual < tol {
            // residual of the returned point itself
            let check = step_unchecked(&q, a1, a2, sigma_z2).max_abs_diff(&q);
            if check < tol {
                return Ok(FixedPoint {
                    q,
                    iterations: it,
                    residual: check,
                });
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual,
    })
}

/// `Q(k)` for `k = 0..=steps` starting at `q0`, for diagnostics.
pub fn riccati_trajectory(
    q0: Covariance2,
    a1: f64,
    a2: f64,
    sigma_z2: f64,
    steps: usize,
) -> Result<Vec<Covariance2>> {
    check_noise(sigma_z2)?;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(q0);
    let mut q = q0;
    for _ in 0..steps {
        q = step_unchecked(&q, a1, a2, sigma_z2);
        out.push(q);
    }
    Ok(out)
}

/// Closed-form steady state: per-user powers and correlation magnitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SteadyState {
    pub p1: f64,
    pub p2: f64,
    pub rho_abs: f64,
}

pub fn steady_state_closed_form(a1: f64, a2: f64, sigma_z2: f64) -> Result<SteadyState> {
    check_noise(sigma_z2)?;
    if !(a1.abs() > 1.0 && a2.abs() > 1.0) {
        return Err(invalid("a", format!("need |a1| > 1 and |a2| > 1, got ({a1}, {a2})")));
    }
    let (x, y) = (a1.abs(), a2.abs());
    let common = (x * y + 1.0).powi(2) / (x + y).powi(2) * sigma_z2;
    Ok(SteadyState {
        p1: (a1 * a1 - 1.0) * common,
        p2: (a2 * a2 - 1.0) * common,
        rho_abs: ((a1 * a1 - 1.0) * (a2 * a2 - 1.0) / (x * y + 1.0).powi(2)).sqrt(),
    })
}

/// Scheme constants for the two-user linear feedback code.
///
/// `l1, l2` are the innovation gains `K` and `big_l = (a1 l1, a2 l2)` is the
/// gain applied in the transmit-vector recursion. A user with zero power
/// has `l = 0` and is silent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GainSet {
    pub a1: f64,
    pub a2: f64,
    pub l1: f64,
    pub l2: f64,
    pub big_l: [f64; 2],
    pub q_ss: Covariance2,
    /// Signed correlation of the stationary inputs.
    pub rho: f64,
    pub sigma_z2: f64,
}

impl GainSet {
    /// Gains for scale factors `(a1, a2)`; both must exceed 1 in magnitude.
    pub fn from_scales(a1: f64, a2: f64, sigma_z2: f64) -> Result<Self> {
        let q = riccati_fixed_point(a1, a2, sigma_z2, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
        let k = optimal_gain(&q, sigma_z2)?;
        Ok(Self {
            a1,
            a2,
            l1: k[0],
            l2: k[1],
            big_l: [a1 * k[0], a2 * k[1]],
            q_ss: q,
            rho: q.correlation(),
            sigma_z2,
        })
    }

    /// Gains for target rates `a_i = (-1)^{i-1} 2^{r_i}`.
    pub fn from_rates(r1: f64, r2: f64, sigma_z2: f64) -> Result<Self> {
        if r1 == 0.0 || r2 == 0.0 {
            return Err(invalid("rate", "both rates must be positive for a two-user gain set"));
        }
        let (a1, a2) = regions::rates_to_gains(r1, r2)?;
        Self::from_scales(a1, a2, sigma_z2)
    }

    /// Gains for the sum-capacity operating point of powers `(p1, p2)`.
    ///
    /// If one power is zero the other user runs the scalar scheme alone.
    pub fn from_powers(p1: f64, p2: f64, sigma_z2: f64) -> Result<Self> {
        check_noise(sigma_z2)?;
        for (name, p) in [("p1", p1), ("p2", p2)] {
            if !(p >= 0.0 && p.is_finite()) {
                return Err(invalid(name, format!("power must be non-negative, got {p}")));
            }
        }
        match (p1 > 0.0, p2 > 0.0) {
            (true, true) => {
                let (rates, _) = regions::sum_capacity_point(p1, p2, sigma_z2)?;
                for (name, r) in [("p1", rates.r1), ("p2", rates.r2)] {
                    if r <= 0.0 {
                        return Err(invalid(name, "power too small to support a positive rate"));
                    }
                }
                Self::from_rates(rates.r1, rates.r2, sigma_z2)
            }
            (true, false) => Ok(Self::single_user(0, (1.0 + p1 / sigma_z2).sqrt(), sigma_z2)),
            (false, true) => Ok(Self::single_user(1, -(1.0 + p2 / sigma_z2).sqrt(), sigma_z2)),
            (false, false) => Err(invalid("p1", "at least one user needs positive power")),
        }
    }

    /// Scalar scheme for `user` (0 or 1); the other user is silent.
    ///
    /// The scalar recursion `q = a² q σ² / (q + σ²)` has fixed point
    /// `(a² - 1) σ²` and gain `(a² - 1) / a²`.
    pub fn single_user(user: usize, a: f64, sigma_z2: f64) -> Self {
        let q = (a * a - 1.0) * sigma_z2;
        let l = q / (q + sigma_z2);
        let (a1, a2, l1, l2, q_ss) = if user == 0 {
            (a, -1.0, l, 0.0, Covariance2::diag(q, 0.0))
        } else {
            (1.0, a, 0.0, l, Covariance2::diag(0.0, q))
        };
        Self {
            a1,
            a2,
            l1,
            l2,
            big_l: [a1 * l1, a2 * l2],
            q_ss,
            rho: 0.0,
            sigma_z2,
        }
    }

    pub fn a(&self) -> [f64; 2] {
        [self.a1, self.a2]
    }

    pub fn l(&self) -> [f64; 2] {
        [self.l1, self.l2]
    }

    pub fn powers(&self) -> [f64; 2] {
        [self.q_ss.q11, self.q_ss.q22]
    }

    /// Rate supported by user `i`'s scale factor, `log2 |a_i|`.
    pub fn supported_rates(&self) -> [f64; 2] {
        [self.a1.abs().log2(), self.a2.abs().log2()]
    }
}
