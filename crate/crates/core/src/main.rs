use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use macfb::codec::GaussianMacConfig;
use macfb::dm::search::{maximize_both, maximize_inner_with};
use macfb::dm::{
    builtin_channel, class_gamma_check, containment, inner_diagnostic, BuiltinKind, Cards,
    FiniteChannel,
};
use macfb::exec::{with_threads, Exec};
use macfb::montecarlo::{decay_probe, run_trials, state_invariance_check, SimConfig};
use macfb::regions::{hybrid_csv, hybrid_point, hybrid_sweep, region_sweep_with, Splitter};
use macfb::riccati::GainSet;
use macfb::Error;

/// Feedback coding and rate regions for multiple-access channels whose
/// state is known to both transmitters.
///
/// Output goes to stdout (or --out FILE); diagnostics go to stderr. Exit
/// codes: 0 success, 2 invalid flag, 3 numerical non-convergence, 1 other.
#[derive(Parser, Debug)]
#[command(name = "macfb", version)]
struct Cli {
    /// Write output to FILE instead of stdout.
    #[arg(long, global = true, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores). Output does not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Stationary gains at the sum-capacity point of (p1, p2).
    ///
    /// JSON keys: p1, p2, noise, a1, a2, rho, l1, l2, big_l1, big_l2,
    /// q11, q22, q12, r1, r2, rsum.
    #[command(allow_negative_numbers = true)]
    Gains(PowerArgs),
    /// Region boundary swept over rho in [0, 1].
    ///
    /// CSV columns: rho,r1,r2,rsum (one row per grid point).
    #[command(allow_negative_numbers = true)]
    Region(RegionArgs),
    /// Dirty-paper / feedback power split by one user.
    ///
    /// CSV columns: alpha,rho,r1,r2. With --alpha a single row, otherwise
    /// --grid rows over alpha in [0, 1].
    #[command(allow_negative_numbers = true)]
    Hybrid(HybridArgs),
    /// Monte Carlo run of the feedback code.
    ///
    /// JSON keys: err1, err2, ci1, ci2, avg_power_1, avg_power_2, rho_hat,
    /// eps_var_1, eps_var_2, trials, seed. err is a rate, ci a Wilson 95%
    /// half-width, rho_hat the signed input correlation over slots k >= 10.
    #[command(allow_negative_numbers = true)]
    Simulate(SimArgs),
    /// Paired blocks with independent state draws.
    ///
    /// JSON keys: max_abs_delta, trials, seed.
    #[command(allow_negative_numbers = true)]
    Invariance(SimArgs),
    /// Final-error variance against block length.
    ///
    /// CSV columns: n,user,eps_var_measured,eps_var_predicted,pe_measured.
    /// Fitted slopes go to stderr.
    #[command(allow_negative_numbers = true)]
    Decay(DecayArgs),
    /// Search the inner bound of a finite MAC with state.
    ///
    /// CSV columns: policy_id,r1,r2,rsum (one pentagon per restart, negative
    /// bounds clamped to 0). Best pentagon and diagnostics go to stderr.
    #[command(allow_negative_numbers = true)]
    DmInner(DmArgs),
    /// Search the outer bound, warm-started from the inner search.
    ///
    /// CSV columns: policy_id,r1,r2,rsum. The result is a lower estimate of
    /// the outer region.
    #[command(allow_negative_numbers = true)]
    DmOuter(DmArgs),
    /// Structural class-Gamma test.
    ///
    /// JSON keys: class_gamma, and witness when false.
    #[command(allow_negative_numbers = true)]
    DmGamma(ChannelArgs),
}

#[derive(Args, Debug, Clone)]
struct PowerArgs {
    #[arg(long, default_value_t = 75.0 / 16.0)]
    p1: f64,
    #[arg(long, default_value_t = 75.0 / 16.0)]
    p2: f64,
    /// Noise variance.
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
}

#[derive(Args, Debug)]
struct RegionArgs {
    #[command(flatten)]
    power: PowerArgs,
    #[arg(long, default_value_t = 101)]
    grid: usize,
}

#[derive(Args, Debug)]
struct HybridArgs {
    #[command(flatten)]
    power: PowerArgs,
    #[arg(long, default_value_t = 101)]
    grid: usize,
    #[arg(long)]
    alpha: Option<f64>,
    /// User that splits its power (1 or 2).
    #[arg(long, default_value_t = 1)]
    splitter: u8,
}

#[derive(Args, Debug, Clone)]
struct SimCommon {
    #[command(flatten)]
    power: PowerArgs,
    /// State variance.
    #[arg(long, default_value_t = 4.0)]
    state_var: f64,
    #[arg(long, default_value_t = 0.5)]
    r1: f64,
    #[arg(long, default_value_t = 0.5)]
    r2: f64,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args, Debug)]
struct SimArgs {
    #[command(flatten)]
    common: SimCommon,
    /// Block length.
    #[arg(long, default_value_t = 20)]
    n: usize,
}

#[derive(Args, Debug)]
struct DecayArgs {
    #[command(flatten)]
    common: SimCommon,
    /// Comma-separated block lengths.
    #[arg(long, value_delimiter = ',', default_value = "10,15,20")]
    n: Vec<usize>,
}

#[derive(Args, Debug)]
struct ChannelArgs {
    /// adder, erasure, or a channel JSON file.
    #[arg(long, default_value = "adder")]
    channel: String,
    /// State bias P(S = 1) for the built-in channels.
    #[arg(long, default_value_t = 0.5)]
    q: f64,
}

#[derive(Args, Debug)]
struct DmArgs {
    #[command(flatten)]
    channel: ChannelArgs,
    /// Defaults to |S| + 1.
    #[arg(long)]
    card_u: Option<usize>,
    /// Defaults to |X1|·|S| + 1.
    #[arg(long)]
    card_v1: Option<usize>,
    /// Defaults to |X2|·|S| + 1.
    #[arg(long)]
    card_v2: Option<usize>,
    /// Number of random restarts.
    #[arg(long, default_value_t = 50)]
    budget: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

enum CliError {
    Flag(String, String),
    NonConvergence(String),
    Other(String),
}

impl CliError {
    fn flag(flag: &str, msg: impl Into<String>) -> Self {
        CliError::Flag(flag.to_string(), msg.into())
    }
}

fn flag_name(param: &str) -> &str {
    match param {
        "sigma_z2" => "--noise",
        "sigma_s2" => "--state-var",
        "grid_size" => "--grid",
        "rate" => "--r1/--r2",
        "p1" => "--p1",
        "p2" => "--p2",
        "r1" => "--r1",
        "r2" => "--r2",
        "n" => "--n",
        "trials" => "--trials",
        "alpha" => "--alpha",
        "q" => "--q",
        "budget" => "--budget",
        "card-u" => "--card-u",
        "card-v1" => "--card-v1",
        "card-v2" => "--card-v2",
        other => other,
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { name, reason } => CliError::flag(flag_name(name), reason),
            Error::NonConvergence { .. } => CliError::NonConvergence(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn json_line<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string(v).expect("plain structs serialize");
    s.push('\n');
    s
}

fn check_power(p: &PowerArgs) -> CliResult<()> {
    for (flag, v) in [("--p1", p.p1), ("--p2", p.p2)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(CliError::flag(flag, format!("power must be finite and >= 0, got {v}")));
        }
    }
    if !(p.noise > 0.0 && p.noise.is_finite()) {
        return Err(CliError::flag("--noise", format!("variance must be > 0, got {}", p.noise)));
    }
    Ok(())
}

fn check_grid(grid: usize) -> CliResult<()> {
    if grid < 2 {
        return Err(CliError::flag("--grid", format!("need at least 2 points, got {grid}")));
    }
    Ok(())
}

fn sim_config(c: &SimCommon, n: usize, exec: Exec) -> CliResult<SimConfig> {
    check_power(&c.power)?;
    if !(c.state_var >= 0.0 && c.state_var.is_finite()) {
        return Err(CliError::flag("--state-var", format!("variance must be >= 0, got {}", c.state_var)));
    }
    if c.trials == 0 {
        return Err(CliError::flag("--trials", "need at least one trial"));
    }
    let base = GaussianMacConfig::new(c.power.p1, c.power.p2, c.state_var, c.power.noise, n, c.r1, c.r2)?;
    let mut sim = SimConfig::new(base, c.trials, c.seed);
    sim.exec = exec;
    sim.validate()?;
    Ok(sim)
}

fn load_channel(args: &ChannelArgs) -> CliResult<FiniteChannel> {
    if !(0.0..=1.0).contains(&args.q) {
        return Err(CliError::flag("--q", format!("must lie in [0, 1], got {}", args.q)));
    }
    match args.channel.as_str() {
        "adder" => Ok(builtin_channel(BuiltinKind::Adder, args.q)?),
        "erasure" => Ok(builtin_channel(BuiltinKind::Erasure, args.q)?),
        path => FiniteChannel::from_json_file(path).map_err(|e| CliError::flag("--channel", e.to_string())),
    }
}

fn dm_cards(args: &DmArgs, ch: &FiniteChannel) -> CliResult<Cards> {
    let d = Cards::default_for(ch);
    Ok(Cards::new(
        args.card_u.unwrap_or(d.u),
        args.card_v1.unwrap_or(d.v1),
        args.card_v2.unwrap_or(d.v2),
    )?)
}

#[derive(Serialize)]
struct GainsReport {
    p1: f64,
    p2: f64,
    noise: f64,
    a1: f64,
    a2: f64,
    rho: f64,
    l1: f64,
    l2: f64,
    big_l1: f64,
    big_l2: f64,
    q11: f64,
    q22: f64,
    q12: f64,
    r1: f64,
    r2: f64,
    rsum: f64,
}

#[derive(Serialize)]
struct InvarianceReport {
    max_abs_delta: f64,
    trials: usize,
    seed: u64,
}

fn run(cmd: &Command, exec: Exec) -> CliResult<String> {
    match cmd {
        Command::Gains(p) => {
            check_power(p)?;
            let g = GainSet::from_powers(p.p1, p.p2, p.noise)?;
            let rates = g.supported_rates();
            Ok(json_line(&GainsReport {
                p1: p.p1,
                p2: p.p2,
                noise: p.noise,
                a1: g.a1,
                a2: g.a2,
                rho: g.rho,
                l1: g.l1,
                l2: g.l2,
                big_l1: g.big_l[0],
                big_l2: g.big_l[1],
                q11: g.q_ss.q11,
                q22: g.q_ss.q22,
                q12: g.q_ss.q12,
                r1: rates[0],
                r2: rates[1],
                rsum: rates[0] + rates[1],
            }))
        }
        Command::Region(a) => {
            check_power(&a.power)?;
            check_grid(a.grid)?;
            let p = &a.power;
            Ok(region_sweep_with(exec, p.p1, p.p2, p.noise, a.grid)?.to_csv())
        }
        Command::Hybrid(a) => {
            check_power(&a.power)?;
            let splitter = match a.splitter {
                1 => Splitter::User1,
                2 => Splitter::User2,
                other => return Err(CliError::flag("--splitter", format!("must be 1 or 2, got {other}"))),
            };
            let p = &a.power;
            let points = match a.alpha {
                Some(alpha) => {
                    if !(0.0..=1.0).contains(&alpha) {
                        return Err(CliError::flag("--alpha", format!("must lie in [0, 1], got {alpha}")));
                    }
                    vec![hybrid_point(p.p1, p.p2, p.noise, alpha, splitter)?]
                }
                None => {
                    check_grid(a.grid)?;
                    hybrid_sweep(exec, p.p1, p.p2, p.noise, a.grid, splitter)?
                }
            };
            Ok(hybrid_csv(&points))
        }
        Command::Simulate(a) => {
            let sim = sim_config(&a.common, a.n, exec)?;
            let gains = sim.base.gains()?;
            Ok(json_line(&run_trials(&sim, &gains)?.report()))
        }
        Command::Invariance(a) => {
            let sim = sim_config(&a.common, a.n, exec)?;
            if sim.base.sigma_s2 == 0.0 {
                eprintln!("note: --state-var 0 makes both blocks of every pair identical");
            }
            let gains = sim.base.gains()?;
            Ok(json_line(&InvarianceReport {
                max_abs_delta: state_invariance_check(&sim, &gains)?,
                trials: sim.trials,
                seed: sim.seed,
            }))
        }
        Command::Decay(a) => {
            let first = *a.n.first().ok_or_else(|| CliError::flag("--n", "need block lengths"))?;
            let sim = sim_config(&a.common, first.max(3), exec)?;
            let gains = sim.base.gains()?;
            let report = decay_probe(&sim, &gains, &a.n)?;
            for i in 0..2 {
                if gains.powers()[i] > 0.0 {
                    eprintln!(
                        "user {}: fitted slope {} (predicted {})",
                        i + 1,
                        report.slope[i],
                        report.slope_predicted[i]
                    );
                }
            }
            Ok(report.to_csv())
        }
        Command::DmInner(a) => {
            let ch = load_channel(&a.channel)?;
            let cards = dm_cards(a, &ch)?;
            let search = maximize_inner_with(exec, &ch, cards, a.budget, a.seed)?;
            let best = search.region.best();
            let diag = inner_diagnostic(&ch, search.best_policy());
            eprintln!(
                "best policy {}: r1 {} r2 {} rsum {} (unclamped {}); I(U;Y) {}, I(V1,V2;Y|U) - I(V1,V2;S) {}",
                best.policy_id,
                best.clamped.r1_max,
                best.clamped.r2_max,
                best.clamped.rsum_max,
                best.raw.rsum_max,
                diag.i_u_y,
                diag.sum_given_u
            );
            Ok(search.region.to_csv())
        }
        Command::DmOuter(a) => {
            let ch = load_channel(&a.channel)?;
            let cards = dm_cards(a, &ch)?;
            let (inner, outer) = maximize_both(exec, &ch, cards, a.budget, a.seed)?;
            let c = containment(&inner.region, &outer.region, 1e-6);
            eprintln!("note: search-based lower estimate of the outer region");
            eprintln!(
                "best outer sum rate {}; inner contained: {} (worst support gap {})",
                outer.region.max_sum_rate(),
                c.holds,
                c.worst_support_gap
            );
            Ok(outer.region.to_csv())
        }
        Command::DmGamma(a) => {
            let ch = load_channel(a)?;
            Ok(json_line(&class_gamma_check(&ch)))
        }
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> CliResult<()> {
    let res = match out {
        Some(path) => std::fs::write(path, text),
        None => std::io::stdout().lock().write_all(text.as_bytes()),
    };
    res.map_err(|e| match out {
        Some(p) => CliError::flag("--out", format!("cannot write {}: {e}", p.display())),
        None => CliError::Other(e.to_string()),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let result = with_threads(cli.threads, || run(&cli.command, Exec::Parallel))
        .and_then(|text| emit(&cli.out, &text));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Flag(flag, msg)) => {
            eprintln!("error: invalid value for {flag}: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::NonConvergence(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(CliError::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
