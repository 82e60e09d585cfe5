//! Joint tables over `(S, U, V1, V2, X1, X2, Y)` and information measures.

use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    S = 0,
    U = 1,
    V1 = 2,
    V2 = 3,
    X1 = 4,
    X2 = 5,
    Y = 6,
}

pub const NVARS: usize = 7;

impl Var {
    pub const ALL: [Var; NVARS] = [Var::S, Var::U, Var::V1, Var::V2, Var::X1, Var::X2, Var::Y];

    #[inline]
    pub fn bit(self) -> u8 {
        1 << self as u8
    }
}

pub fn mask(vars: &[Var]) -> u8 {
    vars.iter().fold(0, |m, v| m | v.bit())
}

/// Row-major joint pmf; the last variable (`Y`) varies fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Joint {
    pub dims: [usize; NVARS],
    pub p: Vec<f64>,
}

impl Joint {
    pub fn new(dims: [usize; NVARS], p: Vec<f64>) -> Result<Self> {
        let size: usize = dims.iter().product();
        if p.len() != size {
            return Err(Error::LengthMismatch {
                name: "joint",
                expected: size,
                actual: p.len(),
            });
        }
        let j = Self { dims, p };
        j.check()?;
        Ok(j)
    }

    pub fn check(&self) -> Result<()> {
        if let Some(i) = self.p.iter().position(|&v| !(v >= -1e-15 && v.is_finite())) {
            return Err(Error::Validation {
                path: format!("joint[{i}]"),
                reason: format!("entry {} is not a probability", self.p[i]),
            });
        }
        let total = self.total();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::Validation {
                path: "joint".into(),
                reason: format!("sums to {total}"),
            });
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.p.iter().sum()
    }

    pub fn marginal(&self, vars: &[Var]) -> Vec<f64> {
        let map = IndexMap::new(&self.dims, mask(vars));
        let mut out = vec![0.0; map.size];
        map.accumulate(&self.p, &mut out);
        out
    }

    pub fn entropy(&self, vars: &[Var]) -> f64 {
        entropy_bits(&self.marginal(vars))
    }
}

pub fn entropy_bits(p: &[f64]) -> f64 {
    let mut h = 0.0;
    for &v in p {
        if v > 0.0 {
            h -= v * v.log2();
        }
    }
    h
}

/// `I(A; B | C)` in bits, clamped at zero.
pub fn mutual_information(joint: &Joint, a: &[Var], b: &[Var], c: &[Var]) -> Result<f64> {
    let (ma, mb, mc) = (mask(a), mask(b), mask(c));
    if ma & mb != 0 || ma & mc != 0 || mb & mc != 0 {
        return Err(Error::InvalidArgument(
            "variable sets passed to mutual_information must be disjoint".into(),
        ));
    }
    let h = |m: u8| {
        if m == 0 {
            0.0
        } else {
            let map = IndexMap::new(&joint.dims, m);
            let mut out = vec![0.0; map.size];
            map.accumulate(&joint.p, &mut out);
            entropy_bits(&out)
        }
    };
    let i = h(ma | mc) + h(mb | mc) - h(ma | mb | mc) - h(mc);
    Ok(i.max(0.0))
}

/// Precomputed flat-index map from a full table onto one marginal.
#[derive(Clone, Debug)]
pub struct IndexMap {
    pub mask: u8,
    pub size: usize,
    map: Vec<u32>,
}

impl IndexMap {
    pub fn new(dims: &[usize; NVARS], mask: u8) -> Self {
        let total: usize = dims.iter().product();
        let mut stride = [0usize; NVARS];
        let mut size = 1;
        for v in (0..NVARS).rev() {
            if mask & (1 << v) != 0 {
                stride[v] = size;
                size *= dims[v];
            }
        }
        let mut map = Vec::with_capacity(total);
        let mut coord = [0usize; NVARS];
        let mut idx = 0usize;
        for _ in 0..total {
            map.push(idx as u32);
            for v in (0..NVARS).rev() {
                coord[v] += 1;
                idx += stride[v];
                if coord[v] < dims[v] {
                    break;
                }
                idx -= stride[v] * coord[v];
                coord[v] = 0;
            }
        }
        Self { mask, size, map }
    }

    #[inline]
    pub fn accumulate(&self, p: &[f64], out: &mut [f64]) {
        out[..self.size].fill(0.0);
        for (&m, &v) in self.map.iter().zip(p) {
            out[m as usize] += v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Var::*;

    /// Joint over (X1, Y) only; other variables have one symbol.
    fn pair(p: [[f64; 2]; 2]) -> Joint {
        let mut dims = [1; NVARS];
        dims[X1 as usize] = 2;
        dims[Y as usize] = 2;
        Joint::new(dims, vec![p[0][0], p[0][1], p[1][0], p[1][1]]).unwrap()
    }

    #[test]
    fn independent_is_zero() {
        let j = pair([[0.3 * 0.6, 0.3 * 0.4], [0.7 * 0.6, 0.7 * 0.4]]);
        assert!(mutual_information(&j, &[X1], &[Y], &[]).unwrap() < 1e-15);
    }

    #[test]
    fn identity_is_one_bit() {
        let j = pair([[0.5, 0.0], [0.0, 0.5]]);
        assert!((mutual_information(&j, &[X1], &[Y], &[]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn binary_symmetric_coupling() {
        let e = 0.11;
        let j = pair([[0.5 * (1.0 - e), 0.5 * e], [0.5 * e, 0.5 * (1.0 - e)]]);
        let h2 = -(e * e.log2() + (1.0 - e) * (1.0 - e).log2());
        let i = mutual_information(&j, &[X1], &[Y], &[]).unwrap();
        assert!((i - (1.0 - h2)).abs() < 1e-12);
        assert!((i - 0.5001).abs() < 1e-3);
    }

    #[test]
    fn overlapping_sets_rejected() {
        let j = pair([[0.25; 2]; 2]);
        assert!(matches!(
            mutual_information(&j, &[X1], &[X1, Y], &[]),
            Err(Error::InvalidArgument(_))
        ));
        assert!(mutual_information(&j, &[X1], &[Y], &[X1]).is_err());
    }

    #[test]
    fn marginal_ordering_is_row_major() {
        let mut dims = [1; NVARS];
        dims[S as usize] = 2;
        dims[V1 as usize] = 3;
        dims[Y as usize] = 2;
        let p: Vec<f64> = (1..=12).map(|v| v as f64 / 78.0).collect();
        let j = Joint::new(dims, p.clone()).unwrap();
        let m = j.marginal(&[S, Y]);
        let expect = [
            (p[0] + p[2] + p[4]),
            (p[1] + p[3] + p[5]),
            (p[6] + p[8] + p[10]),
            (p[7] + p[9] + p[11]),
        ];
        for (a, b) in m.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(j.marginal(&[Y, S]), m);
    }

    #[test]
    fn bad_joint_is_rejected() {
        let mut dims = [1; NVARS];
        dims[Y as usize] = 2;
        assert!(Joint::new(dims, vec![0.5, 0.6]).is_err());
        assert!(Joint::new(dims, vec![0.5]).is_err());
    }
}
