use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use serde_json::Value;

use crate::error::{invalid, Error, Result};

const ROW_TOL: f64 = 1e-12;

/// Two-user MAC with a random state: `W(y | x1, x2, s)` and `P(s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteChannel {
    pub nx1: usize,
    pub nx2: usize,
    pub ns: usize,
    pub ny: usize,
    /// Flat table indexed `[s][x1][x2][y]`.
    w: Vec<f64>,
    p_s: Vec<f64>,
}

fn vfail(path: String, reason: impl Into<String>) -> Error {
    Error::Validation {
        path,
        reason: reason.into(),
    }
}

impl FiniteChannel {
    pub fn new(nx1: usize, nx2: usize, ns: usize, ny: usize, w: Vec<f64>, p_s: Vec<f64>) -> Result<Self> {
        for (name, v) in [("x1", nx1), ("x2", nx2), ("s", ns), ("y", ny)] {
            if v == 0 {
                return Err(vfail(name.into(), "alphabet size must be positive"));
            }
        }
        if w.len() != ns * nx1 * nx2 * ny {
            return Err(vfail(
                "w".into(),
                format!("expected {} entries, got {}", ns * nx1 * nx2 * ny, w.len()),
            ));
        }
        if p_s.len() != ns {
            return Err(vfail("p_s".into(), format!("expected {ns} entries, got {}", p_s.len())));
        }
        let ch = Self {
            nx1,
            nx2,
            ns,
            ny,
            w,
            p_s,
        };
        ch.validate()?;
        Ok(ch)
    }

    fn validate(&self) -> Result<()> {
        for s in 0..self.ns {
            for x1 in 0..self.nx1 {
                for x2 in 0..self.nx2 {
                    let mut total = 0.0;
                    for y in 0..self.ny {
                        let v = self.w(s, x1, x2, y);
                        if !(v >= 0.0 && v.is_finite()) {
                            return Err(vfail(
                                format!("w[{s}][{x1}][{x2}][{y}]"),
                                format!("probability must be finite and non-negative, got {v}"),
                            ));
                        }
                        total += v;
                    }
                    if (total - 1.0).abs() > ROW_TOL {
                        return Err(vfail(
                            format!("w[{s}][{x1}][{x2}]"),
                            format!("row sums to {total}, expected 1"),
                        ));
                    }
                }
            }
        }
        let mut total = 0.0;
        for (s, &v) in self.p_s.iter().enumerate() {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(vfail(format!("p_s[{s}]"), format!("probability must be finite and non-negative, got {v}")));
            }
            total += v;
        }
        if (total - 1.0).abs() > ROW_TOL {
            return Err(vfail("p_s".into(), format!("sums to {total}, expected 1")));
        }
        Ok(())
    }

    #[inline]
    pub fn w(&self, s: usize, x1: usize, x2: usize, y: usize) -> f64 {
        self.w[((s * self.nx1 + x1) * self.nx2 + x2) * self.ny + y]
    }

    /// `W(· | x1, x2, s)` as a slice over `y`.
    #[inline]
    pub fn row(&self, s: usize, x1: usize, x2: usize) -> &[f64] {
        let at = ((s * self.nx1 + x1) * self.nx2 + x2) * self.ny;
        &self.w[at..at + self.ny]
    }

    pub fn p_s(&self) -> &[f64] {
        &self.p_s
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text)?;
        Self::from_json_value(&v)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn from_json_value(v: &Value) -> Result<Self> {
        let obj = v
            .as_object()
            .ok_or_else(|| vfail("$".into(), "expected a JSON object"))?;
        let size = |key: &str| -> Result<usize> {
            obj.get(key)
                .and_then(Value::as_u64)
                .filter(|&n| n > 0)
                .map(|n| n as usize)
                .ok_or_else(|| vfail(key.into(), "expected a positive integer"))
        };
        let (nx1, nx2, ns, ny) = (size("x1")?, size("x2")?, size("s")?, size("y")?);

        fn array<'a>(v: Option<&'a Value>, path: &str, len: usize) -> Result<&'a Vec<Value>> {
            let arr = v
                .and_then(Value::as_array)
                .ok_or_else(|| vfail(path.into(), "expected an array"))?;
            if arr.len() != len {
                return Err(vfail(path.into(), format!("expected {len} entries, got {}", arr.len())));
            }
            Ok(arr)
        }
        fn number(v: &Value, path: String) -> Result<f64> {
            v.as_f64().ok_or_else(|| vfail(path, "expected a number"))
        }

        let mut w = Vec::with_capacity(ns * nx1 * nx2 * ny);
        let ws = array(obj.get("w"), "w", ns)?;
        for (s, a) in ws.iter().enumerate() {
            let a = array(Some(a), &format!("w[{s}]"), nx1)?;
            for (x1, b) in a.iter().enumerate() {
                let b = array(Some(b), &format!("w[{s}][{x1}]"), nx2)?;
                for (x2, c) in b.iter().enumerate() {
                    let c = array(Some(c), &format!("w[{s}][{x1}][{x2}]"), ny)?;
                    for (y, e) in c.iter().enumerate() {
                        w.push(number(e, format!("w[{s}][{x1}][{x2}][{y}]"))?);
                    }
                }
            }
        }
        let p_s = array(obj.get("p_s"), "p_s", ns)?
            .iter()
            .enumerate()
            .map(|(s, e)| number(e, format!("p_s[{s}]")))
            .collect::<Result<Vec<_>>>()?;
        Self::new(nx1, nx2, ns, ny, w, p_s)
    }

    /// True when the output law does not depend on either input.
    pub fn ignores_inputs(&self) -> bool {
        (0..self.ns).all(|s| {
            let base = self.row(s, 0, 0);
            (0..self.nx1).all(|x1| (0..self.nx2).all(|x2| self.row(s, x1, x2) == base))
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BuiltinKind {
    /// `Y = X1 ⊕ X2 ⊕ S` over binary alphabets.
    Adder,
    /// `Y = (X1 + X2 + S) mod 3` with binary inputs and state.
    Erasure,
}

impl FromStr for BuiltinKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adder" => Ok(Self::Adder),
            "erasure" => Ok(Self::Erasure),
            other => Err(Error::InvalidArgument(format!("unknown built-in channel `{other}`"))),
        }
    }
}

/// Deterministic built-in channel with `P(S = 1) = q`.
pub fn builtin_channel(kind: BuiltinKind, q: f64) -> Result<FiniteChannel> {
    if !(0.0..=1.0).contains(&q) {
        return Err(invalid("q", format!("must lie in [0, 1], got {q}")));
    }
    let ny = match kind {
        BuiltinKind::Adder => 2,
        BuiltinKind::Erasure => 3,
    };
    let mut w = vec![0.0; 2 * 2 * 2 * ny];
    for s in 0..2 {
        for x1 in 0..2 {
            for x2 in 0..2 {
                w[((s * 2 + x1) * 2 + x2) * ny + (x1 + x2 + s) % ny] = 1.0;
            }
        }
    }
    FiniteChannel::new(2, 2, 2, ny, w, vec![1.0 - q, q])
}

/// Two values of one input that both fit a context.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Ambiguity {
    pub s: usize,
    /// The other user's input.
    pub other: usize,
    pub y: usize,
    pub candidates: [usize; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct GammaWitness {
    pub x1: Ambiguity,
    pub x2: Ambiguity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct GammaCheck {
    pub class_gamma: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<GammaWitness>,
}

fn ambiguity_x1(ch: &FiniteChannel) -> Option<Ambiguity> {
    for s in 0..ch.ns {
        for x2 in 0..ch.nx2 {
            for y in 0..ch.ny {
                let mut hits = (0..ch.nx1).filter(|&x1| ch.w(s, x1, x2, y) > 0.0);
                if let (Some(a), Some(b)) = (hits.next(), hits.next()) {
                    return Some(Ambiguity {
                        s,
                        other: x2,
                        y,
                        candidates: [a, b],
                    });
                }
            }
        }
    }
    None
}

fn ambiguity_x2(ch: &FiniteChannel) -> Option<Ambiguity> {
    for s in 0..ch.ns {
        for x1 in 0..ch.nx1 {
            for y in 0..ch.ny {
                let mut hits = (0..ch.nx2).filter(|&x2| ch.w(s, x1, x2, y) > 0.0);
                if let (Some(a), Some(b)) = (hits.next(), hits.next()) {
                    return Some(Ambiguity {
                        s,
                        other: x1,
                        y,
                        candidates: [a, b],
                    });
                }
            }
        }
    }
    None
}

/// Structural test: one input is pinned down by `(s, other input, y)`
/// wherever the channel has support.
pub fn class_gamma_check(ch: &FiniteChannel) -> GammaCheck {
    match (ambiguity_x1(ch), ambiguity_x2(ch)) {
        (Some(x1), Some(x2)) => GammaCheck {
            class_gamma: false,
            witness: Some(GammaWitness { x1, x2 }),
        },
        _ => GammaCheck {
            class_gamma: true,
            witness: None,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise_channel() -> FiniteChannel {
        FiniteChannel::new(2, 2, 1, 2, vec![0.5; 8], vec![1.0]).unwrap()
    }

    #[test]
    fn builtins_are_class_gamma() {
        for kind in [BuiltinKind::Adder, BuiltinKind::Erasure] {
            for q in [0.0, 0.3, 0.5, 1.0] {
                let ch = builtin_channel(kind, q).unwrap();
                assert_eq!(class_gamma_check(&ch), GammaCheck { class_gamma: true, witness: None });
            }
        }
    }

    #[test]
    fn adder_without_state_is_xor() {
        let ch = builtin_channel(BuiltinKind::Adder, 0.0).unwrap();
        assert_eq!(ch.p_s(), &[1.0, 0.0]);
        for x1 in 0..2 {
            for x2 in 0..2 {
                assert_eq!(ch.w(0, x1, x2, x1 ^ x2), 1.0);
            }
        }
    }

    #[test]
    fn erasure_rows_are_deterministic() {
        let ch = builtin_channel(BuiltinKind::Erasure, 0.7).unwrap();
        assert_eq!(ch.ny, 3);
        for s in 0..2 {
            for x1 in 0..2 {
                for x2 in 0..2 {
                    let row = ch.row(s, x1, x2);
                    assert_eq!(row.iter().filter(|&&v| v == 1.0).count(), 1);
                    assert_eq!(row.iter().sum::<f64>(), 1.0);
                }
            }
        }
    }

    #[test]
    fn pure_noise_fails_with_witness() {
        let g = class_gamma_check(&noise_channel());
        assert!(!g.class_gamma);
        let w = g.witness.unwrap();
        assert_eq!(w.x1.candidates, [0, 1]);
        assert_eq!(w.x2.candidates, [0, 1]);
    }

    #[test]
    fn q_out_of_range() {
        assert!(builtin_channel(BuiltinKind::Adder, 1.5).is_err());
        assert!(builtin_channel(BuiltinKind::Adder, -0.1).is_err());
    }

    #[test]
    fn json_round_trip_and_paths() {
        let good = r#"{"x1":2,"x2":2,"s":1,"y":2,
            "w":[[[[1,0],[0,1]],[[0,1],[1,0]]]],"p_s":[1]}"#;
        let ch = FiniteChannel::from_json_str(good).unwrap();
        assert_eq!(ch.w(0, 1, 0, 1), 1.0);

        let bad_row = good.replace("[[0,1],[1,0]]]]", "[[0,1],[0.5,0]]]]");
        match FiniteChannel::from_json_str(&bad_row) {
            Err(Error::Validation { path, .. }) => assert_eq!(path, "w[0][1][1]"),
            other => panic!("{other:?}"),
        }
        let bad_entry = good.replace("[[1,0],[0,1]]", "[[1,0],[-1,2]]");
        match FiniteChannel::from_json_str(&bad_entry) {
            Err(Error::Validation { path, .. }) => assert_eq!(path, "w[0][0][1][0]"),
            other => panic!("{other:?}"),
        }
        let bad_shape = good.replace("\"s\":1", "\"s\":2");
        match FiniteChannel::from_json_str(&bad_shape) {
            Err(Error::Validation { path, .. }) => assert_eq!(path, "w"),
            other => panic!("{other:?}"),
        }
        let bad_ps = good.replace("\"p_s\":[1]", "\"p_s\":[0.9]");
        match FiniteChannel::from_json_str(&bad_ps) {
            Err(Error::Validation { path, .. }) => assert_eq!(path, "p_s"),
            other => panic!("{other:?}"),
        }
    }
}
