//! Multistart coordinate ascent over policy tables.
//!
//! Each restart draws every conditional row from a flat Dirichlet, then
//! cycles through the rows moving probability mass between entries in steps
//! of 1/4, 1/8, ..., 1/64 while the objective improves. Restart `k` scores a
//! pentagon by its support in direction `(w, 1 - w)` with `w` taken from
//! [`WEIGHT_CYCLE`], so a batch of restarts traces several faces of the
//! region. Restarts are independent and reduced in index order.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::channel::FiniteChannel;
use super::policy::{Cards, Evaluator, InnerPolicy, OuterPolicy, RateTriple};
use crate::error::{invalid, Result};
use crate::exec::{map_indexed, Exec};

pub const WEIGHT_CYCLE: [f64; 5] = [0.5, 0.25, 0.75, 0.0, 1.0];
pub const STEPS: [f64; 5] = [0.25, 0.125, 0.0625, 0.03125, 0.015625];
const MAX_PASSES: usize = 64;
/// Rows up to this length try every ordered pair of entries; longer rows
/// move mass between one entry and the rest of the row.
const PAIR_LIMIT: usize = 16;
const IMPROVE: f64 = 1e-12;

fn objective(t: &RateTriple, w: f64) -> f64 {
    t.support(w, 1.0 - w)
}

/// Coordinate ascent in place; returns the final triple.
fn refine(
    params: &mut [f64],
    rows: &[(usize, usize)],
    w: f64,
    mut eval: impl FnMut(&[f64]) -> RateTriple,
) -> RateTriple {
    let mut best_t = eval(params);
    let mut best = objective(&best_t, w);
    let mut saved = Vec::new();
    let mut try_move = |params: &mut [f64], saved: &[f64], off: usize, best: &mut f64, best_t: &mut RateTriple| {
        let t = eval(params);
        let v = objective(&t, w);
        if v > *best + IMPROVE {
            *best = v;
            *best_t = t;
            true
        } else {
            params[off..off + saved.len()].copy_from_slice(saved);
            false
        }
    };
    for &h in &STEPS {
        for _ in 0..MAX_PASSES {
            let mut improved = false;
            for &(off, len) in rows {
                if len < 2 {
                    continue;
                }
                if len <= PAIR_LIMIT {
                    for i in 0..len {
                        for j in 0..len {
                            if i == j || params[off + j] <= 0.0 {
                                continue;
                            }
                            saved.clear();
                            saved.extend_from_slice(&params[off..off + len]);
                            let d = h.min(params[off + j]);
                            params[off + j] -= d;
                            params[off + i] += d;
                            improved |= try_move(params, &saved, off, &mut best, &mut best_t);
                        }
                    }
                } else {
                    for i in 0..len {
                        for into in [true, false] {
                            saved.clear();
                            saved.extend_from_slice(&params[off..off + len]);
                            if !shift(&mut params[off..off + len], i, h, into) {
                                continue;
                            }
                            improved |= try_move(params, &saved, off, &mut best, &mut best_t);
                        }
                    }
                }
            }
            if !improved {
                break;
            }
        }
    }
    best_t
}

/// Moves up to `h` into (or out of) entry `i`, taking it from (or giving
/// it to) the other entries in proportion to their mass.
fn shift(row: &mut [f64], i: usize, h: f64, into: bool) -> bool {
    let rest = 1.0 - row[i];
    if into {
        if rest <= 0.0 {
            return false;
        }
        let d = h.min(rest);
        let scale = (rest - d) / rest;
        for (k, v) in row.iter_mut().enumerate() {
            if k != i {
                *v *= scale;
            }
        }
        row[i] += d;
    } else {
        if row[i] <= 0.0 || rest <= 0.0 {
            return false;
        }
        let d = h.min(row[i]);
        let scale = (rest + d) / rest;
        for (k, v) in row.iter_mut().enumerate() {
            if k != i {
                *v *= scale;
            }
        }
        row[i] -= d;
    }
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    Inner,
    Outer,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Pentagon {
    pub policy_id: usize,
    pub raw: RateTriple,
    pub clamped: RateTriple,
}

/// Union of rate pentagons, one per evaluated policy.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DmRegion {
    pub kind: BoundKind,
    pub pentagons: Vec<Pentagon>,
    /// Index of the best pentagon by (effective sum, r1, r2).
    pub best: usize,
}

impl DmRegion {
    fn from_triples(kind: BoundKind, triples: &[RateTriple]) -> Self {
        let pentagons: Vec<Pentagon> = triples
            .iter()
            .enumerate()
            .map(|(policy_id, t)| Pentagon {
                policy_id,
                raw: *t,
                clamped: t.clamped(),
            })
            .collect();
        let key = |p: &Pentagon| (p.raw.effective_sum(), p.clamped.r1_max, p.clamped.r2_max);
        let mut best = 0;
        for (i, p) in pentagons.iter().enumerate().skip(1) {
            let (a, b) = (key(p), key(&pentagons[best]));
            if a.0 > b.0 || (a.0 == b.0 && (a.1 > b.1 || (a.1 == b.1 && a.2 > b.2))) {
                best = i;
            }
        }
        Self { kind, pentagons, best }
    }

    pub fn best(&self) -> &Pentagon {
        &self.pentagons[self.best]
    }

    pub fn max_sum_rate(&self) -> f64 {
        self.best().raw.effective_sum()
    }

    pub fn support(&self, l1: f64, l2: f64) -> f64 {
        self.pentagons
            .iter()
            .map(|p| p.raw.support(l1, l2))
            .fold(0.0, f64::max)
    }

    pub fn contains_point(&self, r1: f64, r2: f64, slack: f64) -> bool {
        self.pentagons.iter().any(|p| p.raw.contains(r1, r2, slack))
    }

    /// `policy_id,r1,r2,rsum` with negative bounds clamped to zero.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("policy_id,r1,r2,rsum\n");
        for p in &self.pentagons {
            let c = p.clamped;
            let _ = writeln!(s, "{},{},{},{}", p.policy_id, c.r1_max, c.r2_max, c.rsum_max);
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct InnerSearch {
    pub region: DmRegion,
    pub policies: Vec<InnerPolicy>,
}

impl InnerSearch {
    pub fn best_policy(&self) -> &InnerPolicy {
        &self.policies[self.region.best]
    }
}

#[derive(Clone, Debug)]
pub struct OuterSearch {
    pub region: DmRegion,
    pub policies: Vec<OuterPolicy>,
}

fn check_budget(budget: usize) -> Result<()> {
    if budget == 0 {
        return Err(invalid("budget", "need at least one restart"));
    }
    Ok(())
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

pub fn maximize_inner(ch: &FiniteChannel, cards: Cards, budget: usize, seed: u64) -> Result<InnerSearch> {
    maximize_inner_with(Exec::default(), ch, cards, budget, seed)
}

/// `budget` restarts; deterministic in `(channel, cards, budget, seed)`.
pub fn maximize_inner_with(
    exec: Exec,
    ch: &FiniteChannel,
    cards: Cards,
    budget: usize,
    seed: u64,
) -> Result<InnerSearch> {
    check_budget(budget)?;
    let runs = map_indexed(exec, budget, |k| {
        let mut policy = InnerPolicy::random(ch, cards, &mut restart_rng(seed, k));
        let rows = policy.rows();
        let mut ev = Evaluator::inner(ch, cards);
        let mut probe = policy.clone();
        let t = refine(policy.params_mut(), &rows, WEIGHT_CYCLE[k % WEIGHT_CYCLE.len()], |x| {
            probe.params_mut().copy_from_slice(x);
            ev.inner_triple(&probe)
        });
        (policy, t)
    });
    let (policies, triples): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    Ok(InnerSearch {
        region: DmRegion::from_triples(BoundKind::Inner, &triples),
        policies,
    })
}

pub fn maximize_outer(ch: &FiniteChannel, cards: Cards, budget: usize, seed: u64) -> Result<OuterSearch> {
    maximize_outer_from(Exec::default(), ch, cards, budget, seed, &[])
}

/// Outer search seeded with `warm` policies. The region lists each warm
/// policy as given, then each warm policy after refinement, then `budget`
/// random restarts. `cards.u` is ignored.
pub fn maximize_outer_from(
    exec: Exec,
    ch: &FiniteChannel,
    cards: Cards,
    budget: usize,
    seed: u64,
    warm: &[OuterPolicy],
) -> Result<OuterSearch> {
    check_budget(budget)?;
    if let Some(p) = warm.iter().find(|p| (p.v1, p.v2) != (cards.v1, cards.v2)) {
        return Err(invalid(
            "warm",
            format!(
                "warm-start cardinalities ({}, {}) differ from ({}, {})",
                p.v1, p.v2, cards.v1, cards.v2
            ),
        ));
    }
    let nw = warm.len();
    let runs = map_indexed(exec, 2 * nw + budget, |k| {
        let mut ev = Evaluator::outer(ch, cards.v1, cards.v2);
        if k < nw {
            let p = warm[k].clone();
            let t = ev.outer_triple(&p);
            return (p, t);
        }
        let (mut policy, w) = if k < 2 * nw {
            (warm[k - nw].clone(), WEIGHT_CYCLE[(k - nw) % WEIGHT_CYCLE.len()])
        } else {
            let r = k - 2 * nw;
            (
                OuterPolicy::random(ch, cards.v1, cards.v2, &mut restart_rng(seed, r)),
                WEIGHT_CYCLE[r % WEIGHT_CYCLE.len()],
            )
        };
        let rows = policy.rows();
        let mut probe = policy.clone();
        let t = refine(policy.params_mut(), &rows, w, |x| {
            probe.params_mut().copy_from_slice(x);
            ev.outer_triple(&probe)
        });
        (policy, t)
    });
    let (policies, triples): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    Ok(OuterSearch {
        region: DmRegion::from_triples(BoundKind::Outer, &triples),
        policies,
    })
}

/// Inner search followed by an outer search warm-started from every inner
/// policy's induced `P(v1,v2,x1,x2|s)`.
pub fn maximize_both(
    exec: Exec,
    ch: &FiniteChannel,
    cards: Cards,
    budget: usize,
    seed: u64,
) -> Result<(InnerSearch, OuterSearch)> {
    let inner = maximize_inner_with(exec, ch, cards, budget, seed)?;
    let warm: Vec<OuterPolicy> = inner.policies.iter().map(InnerPolicy::induced_outer).collect();
    let outer = maximize_outer_from(exec, ch, cards, budget, seed, &warm)?;
    Ok((inner, outer))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Containment {
    /// `h_inner(λ) ≤ h_outer(λ) + slack` on every direction checked.
    pub holds: bool,
    /// Largest `h_inner(λ) - h_outer(λ)` over the direction grid.
    pub worst_support_gap: f64,
    /// Boundary samples of inner pentagons outside every single outer
    /// pentagon. Such points may still lie in the convex hull.
    pub uncovered_points: usize,
}

/// Checks `inner ⊆ conv(outer)` through support functions on a one-degree
/// grid of directions, and counts inner boundary samples that no single
/// outer pentagon covers.
pub fn containment(inner: &DmRegion, outer: &DmRegion, slack: f64) -> Containment {
    const FACE_SAMPLES: usize = 16;
    let mut uncovered = 0;
    for p in &inner.pentagons {
        let c = p.clamped;
        let a = c.r1_max.min(c.rsum_max);
        let b = c.r2_max.min(c.rsum_max);
        let sum = c.rsum_max.min(c.r1_max + c.r2_max);
        let (start, end) = ((a, sum - a), (sum - b, b));
        let mut pts = vec![(a, 0.0), (0.0, b)];
        for k in 0..=FACE_SAMPLES {
            let t = k as f64 / FACE_SAMPLES as f64;
            pts.push((start.0 + t * (end.0 - start.0), start.1 + t * (end.1 - start.1)));
        }
        uncovered += pts
            .iter()
            .filter(|&&(x, y)| !outer.contains_point(x, y, slack))
            .count();
    }
    let mut worst = f64::NEG_INFINITY;
    for k in 0..=90 {
        let th = (k as f64).to_radians();
        let (l1, l2) = (th.cos(), th.sin());
        worst = worst.max(inner.support(l1, l2) - outer.support(l1, l2));
    }
    Containment {
        holds: worst <= slack,
        worst_support_gap: worst,
        uncovered_points: uncovered,
    }
}
