//! Linear feedback code for the Gaussian MAC with interference known
//! non-causally at both transmitters.
//!
//! Slot convention (1-based `k`, sequences stored 0-based):
//!
//! * `k = 1`: user 1 sends `c1·θ1(2) - S(1)`, user 2 is silent.
//! * `k = 2`: user 2 sends `c2·θ2(2) - S(2)`, user 1 is silent.
//! * `k ≥ 3`: user `i` sends `a_i^{k-2} ε_i(k-1)`.
//!
//! `θ_i(p)` is the precancelling schedule, `c_i` the initialization scale and
//! `ε_i(k) = θ̂_i(k) - θ_i(k)` the receiver's error relative to the schedule.
//! The receiver decodes as if there were no interference; the schedule makes
//! the final error `θ̂_i(n) - θ_i⁰` independent of the state sequence.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::riccati::GainSet;

/// Largest supported `n·r_i`; the message grid must stay exact in `f64`.
pub const MAX_MESSAGE_BITS: f64 = 52.0;

/// First slot included in the steady-state power and correlation moments.
pub const STEADY_FROM: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GaussianMacConfig {
    pub p1: f64,
    pub p2: f64,
    pub sigma_s2: f64,
    /// Channel noise variance. Zero is allowed for noiseless runs; gains are
    /// always designed for a positive variance.
    pub sigma_z2: f64,
    pub n: usize,
    pub r1: f64,
    pub r2: f64,
}

impl GaussianMacConfig {
    pub fn new(
        p1: f64,
        p2: f64,
        sigma_s2: f64,
        sigma_z2: f64,
        n: usize,
        r1: f64,
        r2: f64,
    ) -> Result<Self> {
        let cfg = Self {
            p1,
            p2,
            sigma_s2,
            sigma_z2,
            n,
            r1,
            r2,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |name, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(name, format!("must be finite and non-negative, got {v}")))
            }
        };
        nonneg("p1", self.p1)?;
        nonneg("p2", self.p2)?;
        nonneg("sigma_s2", self.sigma_s2)?;
        nonneg("sigma_z2", self.sigma_z2)?;
        nonneg("r1", self.r1)?;
        nonneg("r2", self.r2)?;
        if self.n < 3 {
            return Err(invalid("n", format!("block length must be at least 3, got {}", self.n)));
        }
        for (name, r) in [("r1", self.r1), ("r2", self.r2)] {
            if self.n as f64 * r > MAX_MESSAGE_BITS {
                return Err(invalid(
                    name,
                    format!(
                        "n·r = {} bits exceeds the {MAX_MESSAGE_BITS}-bit message grid",
                        self.n as f64 * r
                    ),
                ));
            }
        }
        Ok(())
    }

    /// `M_i = round(2^{n r_i})`, at least 1.
    pub fn message_counts(&self) -> [u64; 2] {
        let count = |r: f64| ((self.n as f64 * r).exp2().round() as u64).max(1);
        [count(self.r1), count(self.r2)]
    }

    /// Gains for the sum-capacity point of this configuration's powers.
    pub fn gains(&self) -> Result<GainSet> {
        let design_noise = if self.sigma_z2 > 0.0 { self.sigma_z2 } else { 1.0 };
        GainSet::from_powers(self.p1, self.p2, design_noise)
    }
}

/// `θ⁰ = (m + 1/2) / M`.
pub fn map_message(m: u64, count: u64) -> Result<f64> {
    if m >= count {
        return Err(Error::InvalidMessage { m, count });
    }
    Ok((m as f64 + 0.5) / count as f64)
}

/// Nearest grid point, clamped to `[0, M)`.
pub fn decode_message(theta_hat: f64, count: u64) -> u64 {
    let idx = (theta_hat * count as f64 - 0.5).round();
    idx.max(0.0).min((count.max(1) - 1) as f64) as u64
}

/// `θ(p) = θ⁰ + Σ_{j=p+1}^{n} l S(j) / a^{j-2}` for `p = 2..=n`.
///
/// Returned vector has length `n - 1`, entry `p - 2` holding `θ(p)`.
/// Built back to front so that `θ(p-1) = θ(p) + l S(p)/a^{p-2}` holds
/// term by term and `θ(n) = θ⁰` exactly.
pub fn precancel_schedule(state_seq: &[f64], l: f64, a: f64, theta0: f64) -> Vec<f64> {
    let n = state_seq.len();
    if n < 2 {
        return Vec::new();
    }
    let mut out = vec![0.0; n - 1];
    let mut acc = theta0;
    out[n - 2] = acc;
    for p in (3..=n).rev() {
        acc += l * state_seq[p - 1] / a.powi(p as i32 - 2);
        out[p - 3] = acc;
    }
    out
}

/// Which internal recursion a transmitter runs. Both emit the same inputs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Recursion {
    /// `X_i(k+1) = a_i X_i(k) - a_i l_i Y'(k)`; stays bounded for any `n`.
    #[default]
    TransmitSpace,
    /// Tracks `ε_i` and emits `a_i^{k-2} ε_i(k-1)`; limited to `n ≲ 60`.
    ErrorSpace,
}

/// Constants both ends agree on before the block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scheme {
    pub a: [f64; 2],
    pub l: [f64; 2],
    pub init_scale: [f64; 2],
    pub active: [bool; 2],
}

impl Scheme {
    /// With `calibrated`, the initialization scale is chosen so that
    /// `E[X_i(3)²]` equals the stationary power `Q_ii`.
    pub fn new(gains: &GainSet, calibrated: bool) -> Self {
        let powers = gains.powers();
        let a = gains.a();
        let mut init_scale = [1.0; 2];
        let active = [powers[0] > 0.0, powers[1] > 0.0];
        if calibrated {
            for i in 0..2 {
                if active[i] {
                    init_scale[i] = a[i].abs() * (gains.sigma_z2 / powers[i]).sqrt();
                }
            }
        }
        Self {
            a,
            l: gains.l(),
            init_scale,
            active,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TransmitterState {
    user: usize,
    theta0: f64,
    precancel: Vec<f64>,
    state: Vec<f64>,
    a: f64,
    l: f64,
    init_scale: f64,
    active: bool,
    mode: Recursion,
    /// Next slot to transmit.
    k: usize,
    eps: f64,
    x: f64,
}

impl TransmitterState {
    /// `user` is 0 or 1; `state_seq` is the full block `S(1..=n)`.
    pub fn new(
        user: usize,
        theta0: f64,
        scheme: &Scheme,
        state_seq: &[f64],
        mode: Recursion,
    ) -> Result<Self> {
        if user > 1 {
            return Err(invalid("user", format!("must be 0 or 1, got {user}")));
        }
        if state_seq.len() < 3 {
            return Err(invalid("n", "block length must be at least 3"));
        }
        let (a, l) = (scheme.a[user], scheme.l[user]);
        Ok(Self {
            user,
            theta0,
            precancel: precancel_schedule(state_seq, l, a, theta0),
            state: state_seq.to_vec(),
            a,
            l,
            init_scale: scheme.init_scale[user],
            active: scheme.active[user],
            mode,
            k: 1,
            eps: 0.0,
            x: 0.0,
        })
    }

    pub fn user(&self) -> usize {
        self.user
    }

    pub fn theta0(&self) -> f64 {
        self.theta0
    }

    /// `θ(p)` for `p = 2..=n`.
    pub fn precancel(&self) -> &[f64] {
        &self.precancel
    }

    /// `ε(k-1)` as of the last emitted slot `k ≥ 3`.
    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Slot that the next call will transmit in.
    pub fn next_slot(&self) -> usize {
        self.k
    }

    fn n(&self) -> usize {
        self.state.len()
    }

    /// Input for slot 1 or 2. `y_prev` is `Y(1)` at slot 2 and `None` at slot 1.
    pub fn encode_init(&mut self, y_prev: Option<f64>) -> Result<f64> {
        let k = self.k;
        match (k, y_prev) {
            (1, None) => {}
            (2, Some(y1)) => {
                if self.user == 0 {
                    // θ̂1 stays at Y(1)/c1 through slot 2
                    self.eps = y1 / self.init_scale - self.precancel[0];
                }
            }
            (1 | 2, _) => {
                return Err(Error::ProtocolOrder(format!(
                    "slot {k} expects {} feedback sample",
                    if k == 1 { "no" } else { "one" }
                )))
            }
            _ => {
                return Err(Error::ProtocolOrder(format!(
                    "initialization covers slots 1 and 2, transmitter is at slot {k}"
                )))
            }
        }
        self.k += 1;
        if self.active && k == self.user + 1 {
            Ok(self.init_scale * self.precancel[0] - self.state[k - 1])
        } else {
            Ok(0.0)
        }
    }

    /// Input for slot `k ≥ 3`, given feedback `Y(k-1)`.
    pub fn encode_step(&mut self, y_prev: f64) -> Result<f64> {
        let k = self.k;
        if k < 3 {
            return Err(Error::ProtocolOrder(format!(
                "recursion starts at slot 3, initialization is at slot {k}"
            )));
        }
        if k > self.n() {
            return Err(Error::ProtocolOrder(format!("block of length {} is complete", self.n())));
        }
        self.k += 1;
        if k == 3 {
            if self.user == 1 {
                self.eps = y_prev / self.init_scale - self.precancel[0];
            }
            self.x = self.a * self.eps;
        } else {
            // Y'(k-1) = Y(k-1) - S(k-1)
            let innovation = y_prev - self.state[k - 2];
            match self.mode {
                Recursion::TransmitSpace => {
                    self.x = self.a * self.x - self.a * self.l * innovation;
                    self.eps = self.x / self.a.powi(k as i32 - 2);
                }
                Recursion::ErrorSpace => {
                    self.eps -= self.l * innovation / self.a.powi(k as i32 - 3);
                    self.x = self.a.powi(k as i32 - 2) * self.eps;
                }
            }
        }
        Ok(if self.active { self.x } else { 0.0 })
    }

    /// Dispatches to [`encode_init`](Self::encode_init) or
    /// [`encode_step`](Self::encode_step) by slot.
    pub fn encode(&mut self, y_prev: Option<f64>) -> Result<f64> {
        if self.k <= 2 {
            self.encode_init(y_prev)
        } else {
            let y = y_prev.ok_or_else(|| {
                Error::ProtocolOrder(format!("slot {} needs feedback", self.k))
            })?;
            self.encode_step(y)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReceiverState {
    pub theta_hat: [f64; 2],
    /// Last slot processed.
    pub k: usize,
    a: [f64; 2],
    l: [f64; 2],
    init_scale: [f64; 2],
}

impl ReceiverState {
    pub fn new(scheme: &Scheme) -> Self {
        Self {
            theta_hat: [0.0; 2],
            k: 0,
            a: scheme.a,
            l: scheme.l,
            init_scale: scheme.init_scale,
        }
    }

    /// Processes the output of the next slot.
    pub fn observe(&mut self, y: f64) {
        self.k += 1;
        match self.k {
            1 => self.theta_hat[0] = y / self.init_scale[0],
            2 => self.theta_hat[1] = y / self.init_scale[1],
            k => self.receiver_update(y, k),
        }
    }

    /// `θ̂_i(k) = θ̂_i(k-1) - a_i^{-(k-2)} l_i Y(k)` for `k ≥ 3`.
    pub fn receiver_update(&mut self, y: f64, k: usize) {
        debug_assert!(k >= 3);
        for i in 0..2 {
            self.theta_hat[i] -= self.l[i] * y * self.a[i].powi(-(k as i32 - 2));
        }
    }
}

/// Sums over slots `k ≥ STEADY_FROM`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct SteadyMoments {
    pub count: usize,
    pub sum_x1sq: f64,
    pub sum_x2sq: f64,
    pub sum_x1x2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub k: usize,
    pub x1: f64,
    pub x2: f64,
    pub s: f64,
    pub z: f64,
    pub y: f64,
    pub theta_hat_1: f64,
    pub theta_hat_2: f64,
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut s = String::from("k,x1,x2,s,z,y,theta_hat_1,theta_hat_2\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.k, r.x1, r.x2, r.s, r.z, r.y, r.theta_hat_1, r.theta_hat_2
        );
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockResult {
    pub decoded_m1: u64,
    pub decoded_m2: u64,
    pub final_err_1: f64,
    pub final_err_2: f64,
    pub power_used_1: f64,
    pub power_used_2: f64,
    pub steady: SteadyMoments,
    pub x_trace: Option<Vec<TraceRow>>,
}

impl BlockResult {
    pub fn final_err(&self) -> [f64; 2] {
        [self.final_err_1, self.final_err_2]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockOptions {
    pub calibrated_init: bool,
    pub recursion: Recursion,
    pub trace: bool,
}

impl Default for BlockOptions {
    fn default() -> Self {
        Self {
            calibrated_init: true,
            recursion: Recursion::TransmitSpace,
            trace: false,
        }
    }
}

pub fn run_block(
    config: &GaussianMacConfig,
    gains: &GainSet,
    m1: u64,
    m2: u64,
    state_seq: &[f64],
    noise_seq: &[f64],
) -> Result<BlockResult> {
    run_block_with(config, gains, m1, m2, state_seq, noise_seq, &BlockOptions::default())
}

pub fn run_block_with(
    config: &GaussianMacConfig,
    gains: &GainSet,
    m1: u64,
    m2: u64,
    state_seq: &[f64],
    noise_seq: &[f64],
    opts: &BlockOptions,
) -> Result<BlockResult> {
    config.validate()?;
    let n = config.n;
    for (name, seq) in [("state_seq", state_seq), ("noise_seq", noise_seq)] {
        if seq.len() != n {
            return Err(Error::LengthMismatch {
                name,
                expected: n,
                actual: seq.len(),
            });
        }
    }
    let counts = config.message_counts();
    let theta0 = [map_message(m1, counts[0])?, map_message(m2, counts[1])?];
    let scheme = Scheme::new(gains, opts.calibrated_init);
    let mut tx = [
        TransmitterState::new(0, theta0[0], &scheme, state_seq, opts.recursion)?,
        TransmitterState::new(1, theta0[1], &scheme, state_seq, opts.recursion)?,
    ];
    let mut rx = ReceiverState::new(&scheme);

    let mut energy = [0.0; 2];
    let mut steady = SteadyMoments::default();
    let mut trace = opts.trace.then(|| Vec::with_capacity(n));
    let mut y_prev = None;
    for k in 1..=n {
        let x1 = tx[0].encode(y_prev)?;
        let x2 = tx[1].encode(y_prev)?;
        let (s, z) = (state_seq[k - 1], noise_seq[k - 1]);
        let y = x1 + x2 + s + z;
        rx.observe(y);
        energy[0] += x1 * x1;
        energy[1] += x2 * x2;
        if k >= STEADY_FROM {
            steady.count += 1;
            steady.sum_x1sq += x1 * x1;
            steady.sum_x2sq += x2 * x2;
            steady.sum_x1x2 += x1 * x2;
        }
        if let Some(t) = trace.as_mut() {
            t.push(TraceRow {
                k,
                x1,
                x2,
                s,
                z,
                y,
                theta_hat_1: rx.theta_hat[0],
                theta_hat_2: rx.theta_hat[1],
            });
        }
        y_prev = Some(y);
    }

    Ok(BlockResult {
        decoded_m1: decode_message(rx.theta_hat[0], counts[0]),
        decoded_m2: decode_message(rx.theta_hat[1], counts[1]),
        final_err_1: rx.theta_hat[0] - theta0[0],
        final_err_2: rx.theta_hat[1] - theta0[1],
        power_used_1: energy[0] / n as f64,
        power_used_2: energy[1] / n as f64,
        steady,
        x_trace: trace,
    })
}
