//! Input policies, the induced joints and the three-sided rate bounds.

use rand::Rng;
use rand_distr::Exp1;
use serde::Serialize;

use super::channel::FiniteChannel;
use super::info::{entropy_bits, IndexMap, Joint, Var, NVARS};
use crate::error::{invalid, Error, Result};

const ROW_TOL: f64 = 1e-9;

/// Auxiliary alphabet sizes `(|U|, |V1|, |V2|)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Cards {
    pub u: usize,
    pub v1: usize,
    pub v2: usize,
}

impl Cards {
    pub fn new(u: usize, v1: usize, v2: usize) -> Result<Self> {
        for (name, v) in [("card-u", u), ("card-v1", v1), ("card-v2", v2)] {
            if v == 0 {
                return Err(invalid(name, "cardinality must be at least 1"));
            }
            if v > 64 {
                return Err(invalid(name, format!("cardinality {v} is above the supported 64")));
            }
        }
        Ok(Self { u, v1, v2 })
    }

    /// `|U| = |S| + 1`, `|V_i| = |X_i|·|S| + 1`.
    pub fn default_for(ch: &FiniteChannel) -> Self {
        Self {
            u: ch.ns + 1,
            v1: ch.nx1 * ch.ns + 1,
            v2: ch.nx2 * ch.ns + 1,
        }
    }
}

/// Right-hand sides of a three-sided rate bound, in bits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct RateTriple {
    pub r1_max: f64,
    pub r2_max: f64,
    pub rsum_max: f64,
}

impl RateTriple {
    pub fn clamped(&self) -> Self {
        Self {
            r1_max: self.r1_max.max(0.0),
            r2_max: self.r2_max.max(0.0),
            rsum_max: self.rsum_max.max(0.0),
        }
    }

    /// Largest `R1 + R2` in the clamped pentagon.
    pub fn effective_sum(&self) -> f64 {
        let c = self.clamped();
        c.rsum_max.min(c.r1_max + c.r2_max)
    }

    /// `max λ1 R1 + λ2 R2` over the clamped pentagon, for `λ ≥ 0`.
    pub fn support(&self, l1: f64, l2: f64) -> f64 {
        let c = self.clamped();
        if l1 >= l2 {
            let r1 = c.r1_max.min(c.rsum_max);
            let r2 = c.r2_max.min(c.rsum_max - r1);
            l1 * r1 + l2 * r2
        } else {
            let r2 = c.r2_max.min(c.rsum_max);
            let r1 = c.r1_max.min(c.rsum_max - r2);
            l1 * r1 + l2 * r2
        }
    }

    pub fn contains(&self, r1: f64, r2: f64, slack: f64) -> bool {
        let c = self.clamped();
        r1 <= c.r1_max + slack && r2 <= c.r2_max + slack && r1 + r2 <= c.rsum_max + slack
    }
}

fn dirichlet_row<R: Rng>(rng: &mut R, row: &mut [f64]) {
    for v in row.iter_mut() {
        *v = rng.sample::<f64, _>(Exp1);
    }
    let total: f64 = row.iter().sum();
    for v in row.iter_mut() {
        *v /= total;
    }
}

fn check_row(row: &[f64], path: impl Fn() -> String) -> Result<()> {
    let mut total = 0.0;
    for &v in row {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::Validation {
                path: path(),
                reason: format!("entry {v} is not a probability"),
            });
        }
        total += v;
    }
    if (total - 1.0).abs() > ROW_TOL {
        return Err(Error::Validation {
            path: path(),
            reason: format!("row sums to {total}, expected 1"),
        });
    }
    Ok(())
}

/// `P(u|s) P(v1,x1|u,s) P(v2,x2|u,s)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InnerPolicy {
    pub ns: usize,
    pub nx1: usize,
    pub nx2: usize,
    pub cards: Cards,
    /// `P(u|s)` rows, then `P(v1,x1|u,s)` rows indexed `s·|U| + u`, then
    /// the same for `(v2, x2)`.
    params: Vec<f64>,
}

impl InnerPolicy {
    fn offsets(&self) -> (usize, usize) {
        let o1 = self.ns * self.cards.u;
        (o1, o1 + self.ns * self.cards.u * self.cards.v1 * self.nx1)
    }

    fn blank(ch: &FiniteChannel, cards: Cards) -> Self {
        let len = ch.ns * cards.u * (1 + cards.v1 * ch.nx1 + cards.v2 * ch.nx2);
        Self {
            ns: ch.ns,
            nx1: ch.nx1,
            nx2: ch.nx2,
            cards,
            params: vec![0.0; len],
        }
    }

    pub fn from_fns(
        ch: &FiniteChannel,
        cards: Cards,
        p_u: impl Fn(usize, usize) -> f64,
        p1: impl Fn(usize, usize, usize, usize) -> f64,
        p2: impl Fn(usize, usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut p = Self::blank(ch, cards);
        let (o1, o2) = p.offsets();
        let (cu, cv1, cv2) = (cards.u, cards.v1, cards.v2);
        for s in 0..ch.ns {
            for u in 0..cu {
                p.params[s * cu + u] = p_u(s, u);
                let r = s * cu + u;
                for v in 0..cv1 {
                    for x in 0..ch.nx1 {
                        p.params[o1 + r * cv1 * ch.nx1 + v * ch.nx1 + x] = p1(s, u, v, x);
                    }
                }
                for v in 0..cv2 {
                    for x in 0..ch.nx2 {
                        p.params[o2 + r * cv2 * ch.nx2 + v * ch.nx2 + x] = p2(s, u, v, x);
                    }
                }
            }
        }
        p.validate()?;
        Ok(p)
    }

    pub fn uniform(ch: &FiniteChannel, cards: Cards) -> Self {
        let (cu, cv1, cv2) = (cards.u as f64, cards.v1 as f64, cards.v2 as f64);
        let (n1, n2) = (ch.nx1 as f64, ch.nx2 as f64);
        Self::from_fns(
            ch,
            cards,
            |_, _| 1.0 / cu,
            |_, _, _, _| 1.0 / (cv1 * n1),
            |_, _, _, _| 1.0 / (cv2 * n2),
        )
        .expect("uniform policy is valid")
    }

    /// Every row drawn from a flat Dirichlet.
    pub fn random<R: Rng>(ch: &FiniteChannel, cards: Cards, rng: &mut R) -> Self {
        let mut p = Self::blank(ch, cards);
        for (off, len) in p.rows() {
            dirichlet_row(rng, &mut p.params[off..off + len]);
        }
        p
    }

    /// `(offset, length)` of every conditional row in the parameter vector.
    pub fn rows(&self) -> Vec<(usize, usize)> {
        let (o1, o2) = self.offsets();
        let (cu, ns) = (self.cards.u, self.ns);
        let l1 = self.cards.v1 * self.nx1;
        let l2 = self.cards.v2 * self.nx2;
        let mut rows: Vec<(usize, usize)> = (0..ns).map(|s| (s * cu, cu)).collect();
        rows.extend((0..ns * cu).map(|r| (o1 + r * l1, l1)));
        rows.extend((0..ns * cu).map(|r| (o2 + r * l2, l2)));
        rows
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn validate(&self) -> Result<()> {
        let (o1, o2) = self.offsets();
        let cu = self.cards.u;
        for (off, len) in self.rows() {
            let row = &self.params[off..off + len];
            if off < o1 {
                check_row(row, || format!("p_u[{}]", off / cu))?;
            } else if off < o2 {
                let r = (off - o1) / len;
                check_row(row, || format!("p_v1x1[{}][{}]", r / cu, r % cu))?;
            } else {
                let r = (off - o2) / len;
                check_row(row, || format!("p_v2x2[{}][{}]", r / cu, r % cu))?;
            }
        }
        Ok(())
    }

    #[inline]
    pub fn p_u(&self, s: usize, u: usize) -> f64 {
        self.params[s * self.cards.u + u]
    }

    #[inline]
    pub fn p1(&self, s: usize, u: usize, v: usize, x: usize) -> f64 {
        let (o1, _) = self.offsets();
        let len = self.cards.v1 * self.nx1;
        self.params[o1 + (s * self.cards.u + u) * len + v * self.nx1 + x]
    }

    #[inline]
    pub fn p2(&self, s: usize, u: usize, v: usize, x: usize) -> f64 {
        let (_, o2) = self.offsets();
        let len = self.cards.v2 * self.nx2;
        self.params[o2 + (s * self.cards.u + u) * len + v * self.nx2 + x]
    }

    /// `P(v1,v2,x1,x2|s)` with `U` summed out.
    pub fn induced_outer(&self) -> OuterPolicy {
        let (cv1, cv2) = (self.cards.v1, self.cards.v2);
        let mut out = OuterPolicy {
            ns: self.ns,
            nx1: self.nx1,
            nx2: self.nx2,
            v1: cv1,
            v2: cv2,
            params: vec![0.0; self.ns * cv1 * cv2 * self.nx1 * self.nx2],
        };
        for s in 0..self.ns {
            for u in 0..self.cards.u {
                let pu = self.p_u(s, u);
                for v1 in 0..cv1 {
                    for v2 in 0..cv2 {
                        for x1 in 0..self.nx1 {
                            for x2 in 0..self.nx2 {
                                let i = out.index(s, v1, v2, x1, x2);
                                out.params[i] += pu * self.p1(s, u, v1, x1) * self.p2(s, u, v2, x2);
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// `P(v1,v2,x1,x2|s)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OuterPolicy {
    pub ns: usize,
    pub nx1: usize,
    pub nx2: usize,
    pub v1: usize,
    pub v2: usize,
    params: Vec<f64>,
}

impl OuterPolicy {
    fn row_len(&self) -> usize {
        self.v1 * self.v2 * self.nx1 * self.nx2
    }

    #[inline]
    fn index(&self, s: usize, v1: usize, v2: usize, x1: usize, x2: usize) -> usize {
        s * self.row_len() + ((v1 * self.v2 + v2) * self.nx1 + x1) * self.nx2 + x2
    }

    fn blank(ch: &FiniteChannel, v1: usize, v2: usize) -> Self {
        Self {
            ns: ch.ns,
            nx1: ch.nx1,
            nx2: ch.nx2,
            v1,
            v2,
            params: vec![0.0; ch.ns * v1 * v2 * ch.nx1 * ch.nx2],
        }
    }

    pub fn from_fn(
        ch: &FiniteChannel,
        v1: usize,
        v2: usize,
        f: impl Fn(usize, usize, usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut p = Self::blank(ch, v1, v2);
        for s in 0..ch.ns {
            for a in 0..v1 {
                for b in 0..v2 {
                    for x1 in 0..ch.nx1 {
                        for x2 in 0..ch.nx2 {
                            let i = p.index(s, a, b, x1, x2);
                            p.params[i] = f(s, a, b, x1, x2);
                        }
                    }
                }
            }
        }
        p.validate()?;
        Ok(p)
    }

    pub fn random<R: Rng>(ch: &FiniteChannel, v1: usize, v2: usize, rng: &mut R) -> Self {
        let mut p = Self::blank(ch, v1, v2);
        for (off, len) in p.rows() {
            dirichlet_row(rng, &mut p.params[off..off + len]);
        }
        p
    }

    pub fn rows(&self) -> Vec<(usize, usize)> {
        let len = self.row_len();
        (0..self.ns).map(|s| (s * len, len)).collect()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn validate(&self) -> Result<()> {
        for (s, (off, len)) in self.rows().into_iter().enumerate() {
            check_row(&self.params[off..off + len], || format!("p_v1v2x1x2[{s}]"))?;
        }
        Ok(())
    }

    #[inline]
    pub fn p(&self, s: usize, v1: usize, v2: usize, x1: usize, x2: usize) -> f64 {
        self.params[self.index(s, v1, v2, x1, x2)]
    }
}

#[derive(Clone, Copy, Debug)]
pub enum PolicyRef<'a> {
    Inner(&'a InnerPolicy),
    Outer(&'a OuterPolicy),
}

impl<'a> From<&'a InnerPolicy> for PolicyRef<'a> {
    fn from(p: &'a InnerPolicy) -> Self {
        PolicyRef::Inner(p)
    }
}

impl<'a> From<&'a OuterPolicy> for PolicyRef<'a> {
    fn from(p: &'a OuterPolicy) -> Self {
        PolicyRef::Outer(p)
    }
}

fn check_fit(ch: &FiniteChannel, ns: usize, nx1: usize, nx2: usize) -> Result<()> {
    if (ns, nx1, nx2) != (ch.ns, ch.nx1, ch.nx2) {
        return Err(Error::InvalidArgument(format!(
            "policy alphabets (s={ns}, x1={nx1}, x2={nx2}) do not match the channel (s={}, x1={}, x2={})",
            ch.ns, ch.nx1, ch.nx2
        )));
    }
    Ok(())
}

fn inner_dims(ch: &FiniteChannel, c: Cards) -> [usize; NVARS] {
    [ch.ns, c.u, c.v1, c.v2, ch.nx1, ch.nx2, ch.ny]
}

fn outer_dims(ch: &FiniteChannel, v1: usize, v2: usize) -> [usize; NVARS] {
    [ch.ns, 1, v1, v2, ch.nx1, ch.nx2, ch.ny]
}

fn fill_inner(ch: &FiniteChannel, p: &InnerPolicy, out: &mut [f64]) {
    let c = p.cards;
    let ny = ch.ny;
    let mut i = 0;
    for s in 0..ch.ns {
        let ps = ch.p_s()[s];
        for u in 0..c.u {
            let pu = ps * p.p_u(s, u);
            for v1 in 0..c.v1 {
                for v2 in 0..c.v2 {
                    for x1 in 0..ch.nx1 {
                        let a = pu * p.p1(s, u, v1, x1);
                        for x2 in 0..ch.nx2 {
                            let b = a * p.p2(s, u, v2, x2);
                            for (o, w) in out[i..i + ny].iter_mut().zip(ch.row(s, x1, x2)) {
                                *o = b * w;
                            }
                            i += ny;
                        }
                    }
                }
            }
        }
    }
}

fn fill_outer(ch: &FiniteChannel, p: &OuterPolicy, out: &mut [f64]) {
    let ny = ch.ny;
    let mut i = 0;
    for s in 0..ch.ns {
        let ps = ch.p_s()[s];
        for v1 in 0..p.v1 {
            for v2 in 0..p.v2 {
                for x1 in 0..ch.nx1 {
                    for x2 in 0..ch.nx2 {
                        let b = ps * p.p(s, v1, v2, x1, x2);
                        for (o, w) in out[i..i + ny].iter_mut().zip(ch.row(s, x1, x2)) {
                            *o = b * w;
                        }
                        i += ny;
                    }
                }
            }
        }
    }
}

/// Joint over `(S, U, V1, V2, X1, X2, Y)`; outer policies get `|U| = 1`.
pub fn build_joint<'a>(ch: &FiniteChannel, policy: impl Into<PolicyRef<'a>>) -> Result<Joint> {
    match policy.into() {
        PolicyRef::Inner(p) => {
            check_fit(ch, p.ns, p.nx1, p.nx2)?;
            p.validate()?;
            let dims = inner_dims(ch, p.cards);
            let mut buf = vec![0.0; dims.iter().product()];
            fill_inner(ch, p, &mut buf);
            Joint::new(dims, buf)
        }
        PolicyRef::Outer(p) => {
            check_fit(ch, p.ns, p.nx1, p.nx2)?;
            p.validate()?;
            let dims = outer_dims(ch, p.v1, p.v2);
            let mut buf = vec![0.0; dims.iter().product()];
            fill_outer(ch, p, &mut buf);
            Joint::new(dims, buf)
        }
    }
}

const fn m(vars: &[Var]) -> u8 {
    let mut out = 0;
    let mut i = 0;
    while i < vars.len() {
        out |= 1 << vars[i] as u8;
        i += 1;
    }
    out
}

use Var::*;
const MS: u8 = m(&[S]);
const MY: u8 = m(&[Y]);
const MU: u8 = m(&[U]);
const MV1: u8 = m(&[V1]);
const MV2: u8 = m(&[V2]);
const MX1: u8 = m(&[X1]);
const MX2: u8 = m(&[X2]);

/// Reusable scratch for evaluating many policies on one channel and one
/// set of alphabet sizes.
pub struct Evaluator<'a> {
    ch: &'a FiniteChannel,
    dims: [usize; NVARS],
    joint: Vec<f64>,
    scratch: Vec<f64>,
    maps: Vec<Option<IndexMap>>,
    memo: [f64; 128],
    fresh: [bool; 128],
}

impl<'a> Evaluator<'a> {
    fn new(ch: &'a FiniteChannel, dims: [usize; NVARS]) -> Self {
        let size = dims.iter().product();
        Self {
            ch,
            dims,
            joint: vec![0.0; size],
            scratch: vec![0.0; size],
            maps: vec![None; 128],
            memo: [0.0; 128],
            fresh: [false; 128],
        }
    }

    pub fn inner(ch: &'a FiniteChannel, cards: Cards) -> Self {
        Self::new(ch, inner_dims(ch, cards))
    }

    pub fn outer(ch: &'a FiniteChannel, v1: usize, v2: usize) -> Self {
        Self::new(ch, outer_dims(ch, v1, v2))
    }

    fn h(&mut self, mask: u8) -> f64 {
        if mask == 0 {
            return 0.0;
        }
        let k = mask as usize;
        if !self.fresh[k] {
            let map = self.maps[k].get_or_insert_with(|| IndexMap::new(&self.dims, mask));
            map.accumulate(&self.joint, &mut self.scratch);
            self.memo[k] = entropy_bits(&self.scratch[..map.size]);
            self.fresh[k] = true;
        }
        self.memo[k]
    }

    fn mi(&mut self, a: u8, b: u8, c: u8) -> f64 {
        (self.h(a | c) + self.h(b | c) - self.h(a | b | c) - self.h(c)).max(0.0)
    }

    fn load_inner(&mut self, p: &InnerPolicy) {
        debug_assert_eq!(inner_dims(self.ch, p.cards), self.dims);
        fill_inner(self.ch, p, &mut self.joint);
        self.fresh = [false; 128];
    }

    fn load_outer(&mut self, p: &OuterPolicy) {
        debug_assert_eq!(outer_dims(self.ch, p.v1, p.v2), self.dims);
        fill_outer(self.ch, p, &mut self.joint);
        self.fresh = [false; 128];
    }

    fn sum_bound(&mut self) -> f64 {
        let v = MV1 | MV2;
        self.mi(v, MY, 0) - self.mi(v, MS, 0)
    }

    pub fn inner_triple(&mut self, p: &InnerPolicy) -> RateTriple {
        self.load_inner(p);
        RateTriple {
            r1_max: self.mi(MX1, MY, MX2 | MU | MS),
            r2_max: self.mi(MX2, MY, MX1 | MU | MS),
            rsum_max: self.sum_bound(),
        }
    }

    pub fn outer_triple(&mut self, p: &OuterPolicy) -> RateTriple {
        self.load_outer(p);
        RateTriple {
            r1_max: self.mi(MV1, MY, MV2) - self.mi(MV1, MS, MV2),
            r2_max: self.mi(MV2, MY, MV1) - self.mi(MV2, MS, MV1),
            rsum_max: self.sum_bound(),
        }
    }

    pub fn inner_diagnostic(&mut self, p: &InnerPolicy) -> InnerDiagnostic {
        self.load_inner(p);
        let v = MV1 | MV2;
        InnerDiagnostic {
            i_u_y: self.mi(MU, MY, 0),
            sum_given_u: self.mi(v, MY, MU) - self.mi(v, MS, 0),
        }
    }
}

/// The common-message split of the sum bound: `I(U;Y)` and
/// `I(V1,V2;Y|U) - I(V1,V2;S)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InnerDiagnostic {
    pub i_u_y: f64,
    pub sum_given_u: f64,
}

/// `I(X1;Y|X2,U,S)`, `I(X2;Y|X1,U,S)`, `I(V1,V2;Y) - I(V1,V2;S)`.
pub fn inner_rate_triple(ch: &FiniteChannel, p: &InnerPolicy) -> RateTriple {
    Evaluator::inner(ch, p.cards).inner_triple(p)
}

/// `I(V1;Y|V2) - I(V1;S|V2)`, `I(V2;Y|V1) - I(V2;S|V1)`,
/// `I(V1,V2;Y) - I(V1,V2;S)`.
pub fn outer_rate_triple(ch: &FiniteChannel, p: &OuterPolicy) -> RateTriple {
    Evaluator::outer(ch, p.v1, p.v2).outer_triple(p)
}

pub fn inner_diagnostic(ch: &FiniteChannel, p: &InnerPolicy) -> InnerDiagnostic {
    Evaluator::inner(ch, p.cards).inner_diagnostic(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dm::channel::{builtin_channel, BuiltinKind};
    use crate::dm::info::mutual_information;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn adder() -> FiniteChannel {
        builtin_channel(BuiltinKind::Adder, 0.5).unwrap()
    }

    fn cards(u: usize, v1: usize, v2: usize) -> Cards {
        Cards::new(u, v1, v2).unwrap()
    }

    /// V1 uniform, X1 = V1 ⊕ S; V2 uniform, X2 = V2.
    fn cancelling(ch: &FiniteChannel) -> InnerPolicy {
        InnerPolicy::from_fns(
            ch,
            cards(1, 2, 2),
            |_, _| 1.0,
            |s, _, v, x| if x == v ^ s { 0.5 } else { 0.0 },
            |_, _, v, x| if x == v { 0.5 } else { 0.0 },
        )
        .unwrap()
    }

    fn noise_channel(ns: usize) -> FiniteChannel {
        let ps = vec![1.0 / ns as f64; ns];
        FiniteChannel::new(2, 2, ns, 2, vec![0.5; ns * 8], ps).unwrap()
    }

    #[test]
    fn uniform_adder_output_is_fair() {
        let ch = adder();
        let j = build_joint(&ch, &InnerPolicy::uniform(&ch, cards(1, 2, 2))).unwrap();
        let py = j.marginal(&[Y]);
        assert!((py[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn joint_sums_and_state_marginal() {
        let ch = builtin_channel(BuiltinKind::Erasure, 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let p = InnerPolicy::random(&ch, cards(3, 4, 2), &mut rng);
            let j = build_joint(&ch, &p).unwrap();
            assert!((j.total() - 1.0).abs() < 1e-10);
            let s = j.marginal(&[S]);
            assert!((s[0] - 0.7).abs() < 1e-12 && (s[1] - 0.3).abs() < 1e-12);
            assert!(j.p.iter().all(|&v| v >= 0.0));
            let o = build_joint(&ch, &p.induced_outer()).unwrap();
            assert!((o.total() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn deterministic_channel_support() {
        // Y = X1, both inputs pinned by a point-mass policy.
        let mut w = vec![0.0; 8];
        for x1 in 0..2 {
            for x2 in 0..2 {
                w[(x1 * 2 + x2) * 2 + x1] = 1.0;
            }
        }
        let ch = FiniteChannel::new(2, 2, 1, 2, w, vec![1.0]).unwrap();
        let p = InnerPolicy::from_fns(
            &ch,
            cards(1, 1, 1),
            |_, _| 1.0,
            |_, _, _, x| (x == 1) as u8 as f64,
            |_, _, _, x| (x == 0) as u8 as f64,
        )
        .unwrap();
        let j = build_joint(&ch, &p).unwrap();
        let nz: Vec<usize> = (0..j.p.len()).filter(|&i| j.p[i] > 0.0).collect();
        // (x1, x2, y) = (1, 0, 1) in row-major order
        assert_eq!(nz, vec![5]);
    }

    #[test]
    fn malformed_policy_names_slice() {
        let ch = adder();
        let err = InnerPolicy::from_fns(
            &ch,
            cards(2, 2, 2),
            |_, _| 0.5,
            |s, u, _, _| if s == 1 && u == 0 { 0.3 } else { 0.25 },
            |_, _, _, _| 0.25,
        )
        .unwrap_err();
        match err {
            Error::Validation { path, .. } => assert_eq!(path, "p_v1x1[1][0]"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cancelling_policy_hits_one_bit() {
        let ch = adder();
        let t = inner_rate_triple(&ch, &cancelling(&ch));
        for v in [t.r1_max, t.r2_max, t.rsum_max] {
            assert!((v - 1.0).abs() < 1e-12, "{t:?}");
        }
    }

    #[test]
    fn outer_cancelling_policy() {
        let ch = adder();
        // V1 = X1 ⊕ S, V2 = X2, inputs uniform and independent of S.
        let p = OuterPolicy::from_fn(&ch, 2, 2, |s, v1, v2, x1, x2| {
            if v1 == x1 ^ s && v2 == x2 {
                0.25
            } else {
                0.0
            }
        })
        .unwrap();
        let t = outer_rate_triple(&ch, &p);
        assert!((t.rsum_max - 1.0).abs() < 1e-12, "{t:?}");
    }

    #[test]
    fn degenerate_outer_is_zero() {
        let ch = adder();
        let p = OuterPolicy::from_fn(&ch, 1, 1, |_, _, _, _, _| 0.25).unwrap();
        let t = outer_rate_triple(&ch, &p);
        assert_eq!(t.clamped(), RateTriple::default());
        assert!(t.r1_max.abs() < 1e-12 && t.rsum_max.abs() < 1e-12);
    }

    #[test]
    fn no_flow_gives_zero_bounds() {
        let ch = noise_channel(2);
        let p = InnerPolicy::from_fns(
            &ch,
            cards(1, 2, 2),
            |_, _| 1.0,
            |s, _, v, _| if v == s { 0.5 } else { 0.0 },
            |s, _, v, _| if v == 1 - s { 0.5 } else { 0.0 },
        )
        .unwrap();
        let t = inner_rate_triple(&ch, &p);
        assert!(t.r1_max.abs() < 1e-12 && t.r2_max.abs() < 1e-12);
        assert!(t.clamped().rsum_max == 0.0);
    }

    #[test]
    fn sum_bound_goes_negative() {
        // V1 = V2 = S on a channel that ignores its inputs: -H(S).
        let ch = noise_channel(4);
        let p = InnerPolicy::from_fns(
            &ch,
            cards(1, 4, 4),
            |_, _| 1.0,
            |s, _, v, _| if v == s { 0.5 } else { 0.0 },
            |s, _, v, _| if v == s { 0.5 } else { 0.0 },
        )
        .unwrap();
        let t = inner_rate_triple(&ch, &p);
        assert!((t.rsum_max + 2.0).abs() < 1e-12, "{t:?}");
        assert_eq!(t.clamped().rsum_max, 0.0);
    }

    #[test]
    fn fast_path_matches_generic_measures() {
        let ch = builtin_channel(BuiltinKind::Erasure, 0.4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let p = InnerPolicy::random(&ch, cards(2, 3, 2), &mut rng);
            let j = build_joint(&ch, &p).unwrap();
            let t = inner_rate_triple(&ch, &p);
            let r1 = mutual_information(&j, &[X1], &[Y], &[X2, U, S]).unwrap();
            let sum = mutual_information(&j, &[V1, V2], &[Y], &[]).unwrap()
                - mutual_information(&j, &[V1, V2], &[S], &[]).unwrap();
            assert!((t.r1_max - r1).abs() < 1e-12 && (t.rsum_max - sum).abs() < 1e-12);

            let o = p.induced_outer();
            let jo = build_joint(&ch, &o).unwrap();
            let to = outer_rate_triple(&ch, &o);
            let r2 = mutual_information(&jo, &[V2], &[Y], &[V1]).unwrap()
                - mutual_information(&jo, &[V2], &[S], &[V1]).unwrap();
            assert!((to.r2_max - r2).abs() < 1e-12);
            assert!((to.rsum_max - t.rsum_max).abs() < 1e-12);
        }
    }

    #[test]
    fn chain_rule_and_data_processing() {
        let ch = builtin_channel(BuiltinKind::Erasure, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let p = InnerPolicy::random(&ch, cards(3, 2, 3), &mut rng);
            let j = build_joint(&ch, &p).unwrap();
            let whole = mutual_information(&j, &[V1, V2], &[Y], &[]).unwrap();
            let parts = mutual_information(&j, &[V1], &[Y], &[]).unwrap()
                + mutual_information(&j, &[V2], &[Y], &[V1]).unwrap();
            assert!((whole - parts).abs() < 1e-10);
            let iu = mutual_information(&j, &[U], &[Y], &[]).unwrap();
            let ix = mutual_information(&j, &[X1, X2, S], &[Y], &[]).unwrap();
            assert!(iu <= ix + 1e-12);
        }
    }

    #[test]
    fn pentagon_support() {
        let t = RateTriple {
            r1_max: 0.8,
            r2_max: 0.6,
            rsum_max: 1.0,
        };
        assert!((t.support(1.0, 0.0) - 0.8).abs() < 1e-15);
        assert!((t.support(0.0, 1.0) - 0.6).abs() < 1e-15);
        assert!((t.support(0.5, 0.5) - 0.5).abs() < 1e-15);
        assert!((t.support(0.75, 0.25) - (0.75 * 0.8 + 0.25 * 0.2)).abs() < 1e-15);
        assert_eq!(t.effective_sum(), 1.0);
        assert!(t.contains(0.8, 0.2, 0.0) && !t.contains(0.8, 0.3, 1e-9));
    }

    #[test]
    fn diagnostic_is_finite() {
        let ch = adder();
        let d = inner_diagnostic(&ch, &cancelling(&ch));
        assert!(d.i_u_y.abs() < 1e-12);
        assert!((d.sum_given_u - 1.0).abs() < 1e-12);
    }
}
