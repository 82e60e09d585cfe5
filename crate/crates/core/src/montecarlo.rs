//! Seeded Monte Carlo harness over the feedback code.
//!
//! Every trial draws its messages, state and noise from its own ChaCha
//! stream selected by `(seed, trial, role)`, so a trial can be replayed in
//! isolation and the thread layout never changes the numbers.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::codec::{run_block_with, BlockOptions, BlockResult, GaussianMacConfig, Recursion};
use crate::error::{invalid, Result};
use crate::exec::{map_indexed, Exec};
use crate::riccati::GainSet;

pub const MAX_TRIALS: usize = 10_000_000;
pub const MAX_DECAY_N: usize = 60;
/// Normal quantile for a two-sided 95% interval.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StateKind {
    #[default]
    Gaussian,
    /// Uniform with the same variance as the Gaussian option.
    Uniform,
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Role {
    Messages = 0,
    State = 1,
    Noise = 2,
    StateAlt = 3,
}

fn stream(seed: u64, trial: usize, role: Role) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((trial as u64) << 2) | role as u64);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig {
    pub base: GaussianMacConfig,
    pub trials: usize,
    pub seed: u64,
    pub state_kind: StateKind,
    pub calibrated_init: bool,
    pub recursion: Recursion,
    pub exec: Exec,
}

impl SimConfig {
    pub fn new(base: GaussianMacConfig, trials: usize, seed: u64) -> Self {
        Self {
            base,
            trials,
            seed,
            state_kind: StateKind::Gaussian,
            calibrated_init: true,
            recursion: Recursion::TransmitSpace,
            exec: Exec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.trials == 0 || self.trials > MAX_TRIALS {
            return Err(invalid(
                "trials",
                format!("must be in 1..={MAX_TRIALS}, got {}", self.trials),
            ));
        }
        Ok(())
    }

    fn options(&self) -> BlockOptions {
        BlockOptions {
            calibrated_init: self.calibrated_init,
            recursion: self.recursion,
            trace: false,
        }
    }

    fn draw_state(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = self.base.n;
        let var = self.base.sigma_s2;
        match self.state_kind {
            StateKind::Zero => vec![0.0; n],
            StateKind::Gaussian => gaussian_seq(rng, n, var),
            StateKind::Uniform => {
                let half = (3.0 * var).sqrt();
                (0..n).map(|_| half * (2.0 * rng.random::<f64>() - 1.0)).collect()
            }
        }
    }

    fn draw_messages(&self, trial: usize) -> (u64, u64) {
        let counts = self.base.message_counts();
        let mut rng = stream(self.seed, trial, Role::Messages);
        (rng.random_range(0..counts[0]), rng.random_range(0..counts[1]))
    }
}

fn gaussian_seq(rng: &mut ChaCha8Rng, n: usize, var: f64) -> Vec<f64> {
    let sd = var.sqrt();
    (0..n).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Outcome of one block, enough to rebuild every statistic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub wrong: [bool; 2],
    pub final_err: [f64; 2],
    pub steady_count: usize,
    pub sum_x1sq: f64,
    pub sum_x2sq: f64,
    pub sum_x1x2: f64,
    pub power_used: [f64; 2],
}

impl TrialRecord {
    fn from_block(trial: usize, m: (u64, u64), r: &BlockResult) -> Self {
        Self {
            trial,
            wrong: [r.decoded_m1 != m.0, r.decoded_m2 != m.1],
            final_err: r.final_err(),
            steady_count: r.steady.count,
            sum_x1sq: r.steady.sum_x1sq,
            sum_x2sq: r.steady.sum_x2sq,
            sum_x1x2: r.steady.sum_x1x2,
            power_used: [r.power_used_1, r.power_used_2],
        }
    }
}

/// Wilson score interval for `k` successes in `n` draws.
pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = Z95 * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    let lo = if k == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialStats {
    pub trials: usize,
    pub seed: u64,
    pub errors: [usize; 2],
    pub err_rate: [f64; 2],
    pub ci: [(f64, f64); 2],
    pub ci_halfwidth: [f64; 2],
    pub avg_power: [f64; 2],
    /// Signed input correlation over the steady window.
    pub rho_hat: f64,
    pub eps_var: [f64; 2],
    pub eps_mean: [f64; 2],
}

impl TrialStats {
    /// Reduction is done in trial order whatever order the records come in.
    pub fn from_records(seed: u64, records: &[TrialRecord]) -> Self {
        let mut recs = records.to_vec();
        recs.sort_by_key(|r| r.trial);
        let n = recs.len();
        let nf = n.max(1) as f64;

        let mut errors = [0usize; 2];
        let mut eps_sum = [0.0; 2];
        let (mut count, mut s11, mut s22, mut s12) = (0usize, 0.0, 0.0, 0.0);
        let mut whole = [0.0; 2];
        for r in &recs {
            for i in 0..2 {
                errors[i] += r.wrong[i] as usize;
                eps_sum[i] += r.final_err[i];
                whole[i] += r.power_used[i];
            }
            count += r.steady_count;
            s11 += r.sum_x1sq;
            s22 += r.sum_x2sq;
            s12 += r.sum_x1x2;
        }
        let eps_mean = eps_sum.map(|s| s / nf);
        let mut eps_var = [0.0; 2];
        if n > 1 {
            for i in 0..2 {
                let ss: f64 = recs
                    .iter()
                    .map(|r| (r.final_err[i] - eps_mean[i]).powi(2))
                    .sum();
                eps_var[i] = ss / (n - 1) as f64;
            }
        }
        let avg_power = if count > 0 {
            [s11 / count as f64, s22 / count as f64]
        } else {
            whole.map(|w| w / nf)
        };
        let rho_hat = if s11 > 0.0 && s22 > 0.0 {
            s12 / (s11 * s22).sqrt()
        } else {
            0.0
        };
        let ci = errors.map(|k| wilson_interval(k, n));
        Self {
            trials: n,
            seed,
            errors,
            err_rate: errors.map(|k| k as f64 / nf),
            ci,
            ci_halfwidth: ci.map(|(lo, hi)| (hi - lo) / 2.0),
            avg_power,
            rho_hat,
            eps_var,
            eps_mean,
        }
    }

    pub fn report(&self) -> StatsReport {
        StatsReport {
            err1: self.err_rate[0],
            err2: self.err_rate[1],
            ci1: self.ci_halfwidth[0],
            ci2: self.ci_halfwidth[1],
            avg_power_1: self.avg_power[0],
            avg_power_2: self.avg_power[1],
            rho_hat: self.rho_hat,
            eps_var_1: self.eps_var[0],
            eps_var_2: self.eps_var[1],
            trials: self.trials,
            seed: self.seed,
        }
    }
}

/// JSON view with a fixed key order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StatsReport {
    pub err1: f64,
    pub err2: f64,
    pub ci1: f64,
    pub ci2: f64,
    pub avg_power_1: f64,
    pub avg_power_2: f64,
    pub rho_hat: f64,
    pub eps_var_1: f64,
    pub eps_var_2: f64,
    pub trials: usize,
    pub seed: u64,
}

/// Runs a single trial exactly as [`run_trials`] would.
pub fn run_trial(sim: &SimConfig, gains: &GainSet, trial: usize) -> Result<TrialRecord> {
    let m = sim.draw_messages(trial);
    let state = sim.draw_state(&mut stream(sim.seed, trial, Role::State));
    let noise = gaussian_seq(&mut stream(sim.seed, trial, Role::Noise), sim.base.n, sim.base.sigma_z2);
    let r = run_block_with(&sim.base, gains, m.0, m.1, &state, &noise, &sim.options())?;
    Ok(TrialRecord::from_block(trial, m, &r))
}

pub fn run_records(sim: &SimConfig, gains: &GainSet) -> Result<Vec<TrialRecord>> {
    sim.validate()?;
    map_indexed(sim.exec, sim.trials, |t| run_trial(sim, gains, t))
        .into_iter()
        .collect()
}

pub fn run_trials(sim: &SimConfig, gains: &GainSet) -> Result<TrialStats> {
    Ok(TrialStats::from_records(sim.seed, &run_records(sim, gains)?))
}

/// Paired blocks sharing messages and noise but not state; returns the
/// largest change in final estimation error over pairs and users.
pub fn state_invariance_check(sim: &SimConfig, gains: &GainSet) -> Result<f64> {
    sim.validate()?;
    if sim.state_kind == StateKind::Zero {
        return Err(invalid("state_kind", "invariance check needs a random state"));
    }
    let opts = sim.options();
    let deltas = map_indexed(sim.exec, sim.trials, |t| -> Result<f64> {
        let m = sim.draw_messages(t);
        let noise = gaussian_seq(&mut stream(sim.seed, t, Role::Noise), sim.base.n, sim.base.sigma_z2);
        let s_a = sim.draw_state(&mut stream(sim.seed, t, Role::State));
        let s_b = sim.draw_state(&mut stream(sim.seed, t, Role::StateAlt));
        let a = run_block_with(&sim.base, gains, m.0, m.1, &s_a, &noise, &opts)?;
        let b = run_block_with(&sim.base, gains, m.0, m.1, &s_b, &noise, &opts)?;
        Ok((a.final_err_1 - b.final_err_1)
            .abs()
            .max((a.final_err_2 - b.final_err_2).abs()))
    });
    let mut worst = 0.0_f64;
    for d in deltas {
        worst = worst.max(d?);
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayRow {
    pub n: usize,
    pub user: usize,
    pub eps_var_measured: f64,
    pub eps_var_predicted: f64,
    pub pe_measured: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayReport {
    pub rows: Vec<DecayRow>,
    /// Least-squares slope of `ln Var` against `n`, per user.
    pub slope: [f64; 2],
    pub slope_predicted: [f64; 2],
}

impl DecayReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,user,eps_var_measured,eps_var_predicted,pe_measured\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.n, r.user, r.eps_var_measured, r.eps_var_predicted, r.pe_measured
            );
        }
        s
    }

    pub fn row(&self, n: usize, user: usize) -> Option<&DecayRow> {
        self.rows.iter().find(|r| r.n == n && r.user == user)
    }
}

fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Measured against predicted `Var(ε̃_i(n)) = Q_ii a_i^{-2(n-1)}` for each
/// block length. Users with zero power are skipped.
pub fn decay_probe(sim: &SimConfig, gains: &GainSet, n_list: &[usize]) -> Result<DecayReport> {
    if n_list.len() < 2 {
        return Err(invalid("n", "decay probe needs at least two block lengths"));
    }
    if let Some(&bad) = n_list.iter().find(|&&n| !(5..=MAX_DECAY_N).contains(&n)) {
        return Err(invalid("n", format!("block lengths must lie in 5..={MAX_DECAY_N}, got {bad}")));
    }
    let a = gains.a();
    let q = gains.powers();
    let active: Vec<usize> = (0..2).filter(|&i| q[i] > 0.0).collect();
    let mut rows = Vec::new();
    for &n in n_list {
        let mut s = *sim;
        s.base.n = n;
        let stats = run_trials(&s, gains)?;
        for &i in &active {
            rows.push(DecayRow {
                n,
                user: i + 1,
                eps_var_measured: stats.eps_var[i],
                eps_var_predicted: q[i] * a[i].abs().powi(-2 * (n as i32 - 1)),
                pe_measured: stats.err_rate[i],
            });
        }
    }
    let mut slope = [0.0; 2];
    let mut slope_predicted = [0.0; 2];
    for &i in &active {
        let (xs, ys): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter(|r| r.user == i + 1)
            .map(|r| (r.n as f64, r.eps_var_measured.ln()))
            .unzip();
        slope[i] = ls_slope(&xs, &ys);
        slope_predicted[i] = -2.0 * a[i].abs().ln();
    }
    Ok(DecayReport {
        rows,
        slope,
        slope_predicted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: f64 = 75.0 / 16.0;

    fn sim(n: usize, r: f64, var_s: f64, var_z: f64, trials: usize) -> SimConfig {
        SimConfig::new(GaussianMacConfig::new(P, P, var_s, var_z, n, r, r).unwrap(), trials, 7)
    }

    #[test]
    fn wilson_examples() {
        let (lo, hi) = wilson_interval(0, 100);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.036_994).abs() < 1e-5, "{hi}");
        let (lo, hi) = wilson_interval(50, 100);
        assert!((lo - 0.403_832).abs() < 1e-5 && (hi - 0.596_168).abs() < 1e-5);
    }

    #[test]
    fn noiseless_runs_are_error_free() {
        let s = sim(20, 0.9, 4.0, 0.0, 500);
        let g = GainSet::from_powers(P, P, 1.0).unwrap();
        let st = run_trials(&s, &g).unwrap();
        assert_eq!(st.errors, [0, 0]);
        assert!(st.eps_var[0] < 1e-24 && st.eps_var[1] < 1e-24);
    }

    #[test]
    fn reproducible_and_thread_independent() {
        let mut s = sim(25, 0.6, 4.0, 1.0, 300);
        let g = s.base.gains().unwrap();
        let a = run_trials(&s, &g).unwrap();
        let b = run_trials(&s, &g).unwrap();
        s.exec = Exec::Sequential;
        let c = run_trials(&s, &g).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn reduction_ignores_record_order() {
        let s = sim(20, 0.5, 4.0, 1.0, 200);
        let g = s.base.gains().unwrap();
        let recs = run_records(&s, &g).unwrap();
        let mut shuffled = recs.clone();
        shuffled.reverse();
        shuffled.swap(3, 150);
        assert_eq!(
            TrialStats::from_records(7, &recs),
            TrialStats::from_records(7, &shuffled)
        );
    }

    #[test]
    fn trial_replays_in_isolation() {
        let s = sim(20, 0.5, 4.0, 1.0, 50);
        let g = s.base.gains().unwrap();
        let recs = run_records(&s, &g).unwrap();
        assert_eq!(run_trial(&s, &g, 37).unwrap(), recs[37]);
    }

    #[test]
    fn invariance_examples() {
        let s = sim(30, 0.5, 10.0, 1.0, 100);
        let g = s.base.gains().unwrap();
        assert!(state_invariance_check(&s, &g).unwrap() < 1e-9);
        let quiet = sim(30, 0.5, 0.0, 1.0, 20);
        assert_eq!(state_invariance_check(&quiet, &g).unwrap(), 0.0);
        let mut zero = s;
        zero.state_kind = StateKind::Zero;
        assert!(state_invariance_check(&zero, &g).is_err());
    }

    #[test]
    fn uniform_state_has_requested_variance() {
        let mut s = sim(10, 0.5, 9.0, 1.0, 1);
        s.state_kind = StateKind::Uniform;
        let mut rng = stream(1, 0, Role::State);
        let mut acc = 0.0;
        let reps = 20_000;
        for _ in 0..reps {
            acc += s.draw_state(&mut rng).iter().map(|x| x * x).sum::<f64>();
        }
        let v = acc / (reps * 10) as f64;
        assert!((v / 9.0 - 1.0).abs() < 0.02, "{v}");
    }

    #[test]
    fn error_recursion_contracts_at_reference_point() {
        let c = GaussianMacConfig::new(P, P, 4.0, 1.0, 5, 0.1, 0.1).unwrap();
        let g = GainSet::from_scales(2.0, -2.0, 1.0).unwrap();
        let s = SimConfig::new(c, 4000, 3);
        let rep = decay_probe(&s, &g, &[5, 8, 11]).unwrap();
        for i in 0..2 {
            assert!(rep.slope[i] < 0.0);
            assert!((rep.slope[i] / rep.slope_predicted[i] - 1.0).abs() < 0.1);
        }
    }

    #[test]
    fn decay_probe_rejects_out_of_range_lengths() {
        let s = sim(10, 0.1, 4.0, 1.0, 10);
        let g = s.base.gains().unwrap();
        assert!(decay_probe(&s, &g, &[4, 10]).is_err());
        assert!(decay_probe(&s, &g, &[10, 61]).is_err());
        assert!(decay_probe(&s, &g, &[10]).is_err());
    }

    #[test]
    fn report_key_order() {
        let s = sim(12, 0.3, 1.0, 1.0, 10);
        let g = s.base.gains().unwrap();
        let json = serde_json::to_string(&run_trials(&s, &g).unwrap().report()).unwrap();
        let keys = [
            "err1", "err2", "ci1", "ci2", "avg_power_1", "avg_power_2", "rho_hat", "eps_var_1",
            "eps_var_2", "trials", "seed",
        ];
        let mut at = 0;
        for k in keys {
            let pos = json[at..].find(&format!("\"{k}\"")).unwrap();
            at += pos;
        }
    }
}
