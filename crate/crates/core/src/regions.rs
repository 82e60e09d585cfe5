//! Rate regions of the two-user Gaussian MAC with feedback.
//!
//! None of these functions take the interference variance: the region is
//! the same with and without known additive interference.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::exec::{map_indexed, Exec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RatePair {
    pub r1: f64,
    pub r2: f64,
}

impl RatePair {
    pub fn new(r1: f64, r2: f64) -> Self {
        Self { r1, r2 }
    }

    pub fn sum(&self) -> f64 {
        self.r1 + self.r2
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::new(self.r1 * c, self.r2 * c)
    }
}

/// One ρ-slice of the union: the three bounds at correlation `rho`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundaryPoint {
    pub rho: f64,
    pub r1: f64,
    pub r2: f64,
    pub rsum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionBoundary {
    pub points: Vec<BoundaryPoint>,
}

impl RegionBoundary {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("rho,r1,r2,rsum\n");
        for p in &self.points {
            let _ = writeln!(s, "{},{},{},{}", p.rho, p.r1, p.r2, p.rsum);
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Splitter {
    User1,
    User2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HybridPoint {
    pub alpha: f64,
    pub splitter: Splitter,
    pub rho_star: f64,
    pub r1: f64,
    pub r2: f64,
}

pub fn hybrid_csv(points: &[HybridPoint]) -> String {
    let mut s = String::from("alpha,rho,r1,r2\n");
    for p in points {
        let _ = writeln!(s, "{},{},{},{}", p.alpha, p.rho_star, p.r1, p.r2);
    }
    s
}

fn half_log2(x: f64) -> f64 {
    0.5 * x.log2()
}

fn check_inputs(p1: f64, p2: f64, sigma2: f64) -> Result<()> {
    for (name, p) in [("p1", p1), ("p2", p2)] {
        if !(p >= 0.0 && p.is_finite()) {
            return Err(invalid(name, format!("power must be non-negative, got {p}")));
        }
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(invalid("sigma_z2", format!("noise variance must be positive, got {sigma2}")));
    }
    Ok(())
}

/// Product form of the tightness condition:
/// `(1 + P1(1-ρ²)/σ²)(1 + P2(1-ρ²)/σ²)`.
pub fn tightness_product(p1: f64, p2: f64, sigma2: f64, rho: f64) -> f64 {
    let c = 1.0 - rho * rho;
    (1.0 + p1 * c / sigma2) * (1.0 + p2 * c / sigma2)
}

/// Sum form: `1 + (P1 + P2 + 2ρ√(P1 P2))/σ²`.
pub fn tightness_sum(p1: f64, p2: f64, sigma2: f64, rho: f64) -> f64 {
    1.0 + (p1 + p2 + 2.0 * rho * (p1 * p2).sqrt()) / sigma2
}

/// `product - sum`, expanded so the constant terms cancel exactly.
///
/// Every term is non-increasing in ρ on `[0, 1]` and the first is strictly
/// decreasing when both powers are positive, so the root is unique.
fn tightness_gap(p1: f64, p2: f64, sigma2: f64, rho: f64) -> f64 {
    let c = 1.0 - rho * rho;
    p1 * p2 * c * c / (sigma2 * sigma2)
        - (p1 + p2) * rho * rho / sigma2
        - 2.0 * rho * (p1 * p2).sqrt() / sigma2
}

/// Correlation at which the two individual bounds and the sum bound are
/// simultaneously tight. Returns 0 when either power is zero.
pub fn solve_rho(p1: f64, p2: f64, sigma2: f64) -> Result<f64> {
    check_inputs(p1, p2, sigma2)?;
    if p1 == 0.0 || p2 == 0.0 {
        return Ok(0.0);
    }
    // gap(0) = P1 P2/σ⁴ > 0, gap(1) = -(P1 + P2 + 2√(P1P2))/σ² < 0
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if tightness_gap(p1, p2, sigma2, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (glo, ghi) = (
        tightness_gap(p1, p2, sigma2, lo).abs(),
        tightness_gap(p1, p2, sigma2, hi).abs(),
    );
    Ok(if glo <= ghi { lo } else { hi })
}

/// Sum-capacity point of the feedback MAC and the correlation achieving it.
pub fn sum_capacity_point(p1: f64, p2: f64, sigma2: f64) -> Result<(RatePair, f64)> {
    let rho = solve_rho(p1, p2, sigma2)?;
    let c = 1.0 - rho * rho;
    Ok((
        RatePair::new(
            half_log2(1.0 + p1 * c / sigma2),
            half_log2(1.0 + p2 * c / sigma2),
        ),
        rho,
    ))
}

/// Scale factors `a1 = 2^{r1}`, `a2 = -2^{r2}`.
pub fn rates_to_gains(r1: f64, r2: f64) -> Result<(f64, f64)> {
    for (name, r) in [("r1", r1), ("r2", r2)] {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(invalid(name, format!("rate must be non-negative, got {r}")));
        }
    }
    Ok((r1.exp2(), -r2.exp2()))
}

/// Bounds at a single correlation value.
pub fn bounds_at(p1: f64, p2: f64, sigma2: f64, rho: f64) -> BoundaryPoint {
    let c = 1.0 - rho * rho;
    BoundaryPoint {
        rho,
        r1: half_log2(1.0 + c * p1 / sigma2),
        r2: half_log2(1.0 + c * p2 / sigma2),
        rsum: half_log2(tightness_sum(p1, p2, sigma2, rho)),
    }
}

pub fn region_sweep(p1: f64, p2: f64, sigma2: f64, grid_size: usize) -> Result<RegionBoundary> {
    region_sweep_with(Exec::default(), p1, p2, sigma2, grid_size)
}

pub fn region_sweep_with(
    exec: Exec,
    p1: f64,
    p2: f64,
    sigma2: f64,
    grid_size: usize,
) -> Result<RegionBoundary> {
    check_inputs(p1, p2, sigma2)?;
    if grid_size < 2 {
        return Err(invalid("grid_size", "need at least two grid points"));
    }
    let last = (grid_size - 1) as f64;
    let points = map_indexed(exec, grid_size, |i| {
        bounds_at(p1, p2, sigma2, i as f64 / last)
    });
    Ok(RegionBoundary { points })
}

/// Rates when `splitter` dirty-paper codes a fraction `alpha` of its power
/// and feedback-codes the rest.
pub fn hybrid_point(
    p1: f64,
    p2: f64,
    sigma2: f64,
    alpha: f64,
    splitter: Splitter,
) -> Result<HybridPoint> {
    check_inputs(p1, p2, sigma2)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid("alpha", format!("must lie in [0, 1], got {alpha}")));
    }
    // Work in (split user, other user) coordinates and swap back at the end.
    let (ps, po) = match splitter {
        Splitter::User1 => (p1, p2),
        Splitter::User2 => (p2, p1),
    };
    let abar = 1.0 - alpha;
    let sigma_eff = sigma2 + alpha * ps;
    let rho = solve_rho(abar * ps, po, sigma_eff)?;
    let split_rate = half_log2(1.0 + (1.0 - abar * rho * rho) * ps / sigma2);
    let other_rate = half_log2(
        (sigma2 + ps + po + 2.0 * rho * (abar * ps * po).sqrt())
            / (sigma2 + (1.0 - abar * rho * rho) * ps),
    );
    let (r1, r2) = match splitter {
        Splitter::User1 => (split_rate, other_rate),
        Splitter::User2 => (other_rate, split_rate),
    };
    Ok(HybridPoint {
        alpha,
        splitter,
        rho_star: rho,
        r1,
        r2,
    })
}

pub fn hybrid_sweep(
    exec: Exec,
    p1: f64,
    p2: f64,
    sigma2: f64,
    grid_size: usize,
    splitter: Splitter,
) -> Result<Vec<HybridPoint>> {
    if grid_size < 2 {
        return Err(invalid("grid_size", "need at least two grid points"));
    }
    let last = (grid_size - 1) as f64;
    map_indexed(exec, grid_size, |i| {
        hybrid_point(p1, p2, sigma2, i as f64 / last, splitter)
    })
    .into_iter()
    .collect()
}

/// Largest `min` over the three constraint slacks at correlation `rho`.
fn margin(rates: &RatePair, p1: f64, p2: f64, sigma2: f64, rho: f64) -> f64 {
    let b = bounds_at(p1, p2, sigma2, rho);
    (b.r1 - rates.r1)
        .min(b.r2 - rates.r2)
        .min(b.rsum - rates.sum())
}

/// Best constraint slack over all ρ ∈ [0, 1]; the pair is in the region iff
/// this is non-negative.
///
/// The individual bounds fall with ρ and the sum bound rises, so the slack is
/// unimodal: a coarse grid locates the peak and golden-section search
/// refines it.
pub fn region_margin(rates: &RatePair, p1: f64, p2: f64, sigma2: f64) -> f64 {
    const GRID: usize = 200;
    let f = |rho: f64| margin(rates, p1, p2, sigma2, rho);
    let mut best_i = 0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..=GRID {
        let v = f(i as f64 / GRID as f64);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let mut lo = (best_i.saturating_sub(1)) as f64 / GRID as f64;
    let mut hi = ((best_i + 1).min(GRID)) as f64 / GRID as f64;
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..100 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        }
    }
    best.max(f1).max(f2)
}

pub fn point_in_region(rates: &RatePair, p1: f64, p2: f64, sigma2: f64) -> bool {
    point_in_region_tol(rates, p1, p2, sigma2, 1e-12)
}

pub fn point_in_region_tol(rates: &RatePair, p1: f64, p2: f64, sigma2: f64, slack: f64) -> bool {
    if rates.r1 < -slack || rates.r2 < -slack {
        return false;
    }
    region_margin(rates, p1, p2, sigma2) >= -slack
}
