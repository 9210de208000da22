//! The `robbins` command. Results go to stdout as JSON, a one-line summary
//! to stderr. Exit codes: 0 success, 2 bad arguments, 3 refused as too
//! large, 1 anything else.

use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};
use robbins_core::cloud_search::{winner_rule_search, CloudPolicy, CloudSpace, PerturbationScales, SearchConfig};
use robbins_core::exact_dp::{optimal_value_with, secretary_rule, truncated_value};
use robbins_core::memoryless::{optimize_c, optimize_free};
use robbins_core::namur::{new_session, DistributionBasket, Objective, TableSet};
use robbins_core::poisson_ode::{
    h_from_simulation, ode_solve, simulate_threshold_play, value_w, ContinuousThreshold, HGrid, HModel, HTable,
    OdeProblem, Penalty, QuadratureSpec, WFormula,
};
use robbins_core::{correlation_check, Decision, Error as CoreError, Loss, MEMORYLESS_U};
use serde::Serialize;

use crate::config::ServiceConfig;
use crate::error::ServiceError;

/// Monte Carlo work beyond this many uniforms is refused.
const MAX_DRAWS: f64 = 2e10;

#[derive(Debug, Parser)]
#[command(name = "robbins", version, about = "Expected-rank selection laboratory and game host")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Formula {
    Thinned,
    Printed,
}

/// Gap model for the ODE: `zero`, `const:KAPPA` or `table:PATH`.
#[derive(Debug, Clone)]
enum HSpec {
    Zero,
    Const(f64),
    Table(PathBuf),
}

impl FromStr for HSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            None if s == "zero" => Ok(HSpec::Zero),
            Some(("const", k)) => k.parse().map(HSpec::Const).map_err(|e| format!("bad constant {k:?}: {e}")),
            Some(("table", p)) if !p.is_empty() => Ok(HSpec::Table(p.into())),
            _ => Err(format!("expected zero, const:KAPPA or table:PATH, got {s:?}")),
        }
    }
}

/// `exact-rank:R` or `top-percent:Q`.
fn parse_objective(s: &str) -> Result<Objective, String> {
    let (kind, v) = s.split_once(':').ok_or_else(|| format!("expected KIND:VALUE, got {s:?}"))?;
    let v: u32 = v.parse().map_err(|e| format!("bad value {v:?}: {e}"))?;
    let o = match kind {
        "exact-rank" => Objective::ExactRank { rank: v },
        "top-percent" => Objective::TopPercent { q: v },
        _ => return Err(format!("unknown objective kind {kind:?}")),
    };
    o.validate().map_err(|e| e.to_string())?;
    Ok(o)
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Full-history optimal value for small n.
    Exact {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// Optimal cutoff and success probability of the best-choice problem.
    Secretary {
        #[arg(long)]
        n: usize,
    },
    /// Optimal value under the loss min(j, rank).
    Truncate {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        j: usize,
    },
    /// Optimize the memoryless threshold family, or all thresholds with --free.
    MlOpt {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        free: bool,
        #[arg(long, default_value_t = 1.2)]
        lo: f64,
        #[arg(long, default_value_t = 4.0)]
        hi: f64,
    },
    /// Randomized winner's-rule search over cloud override policies.
    CloudSearch {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        batch: u64,
        #[arg(long, default_value_t = 50)]
        rounds: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1.9469)]
        c: f64,
        /// Judge each round by a single game.
        #[arg(long)]
        single_run: bool,
    },
    /// Solve the value ODE of the Poisson embedding.
    Ode {
        #[arg(long, default_value = "zero")]
        h: HSpec,
        #[arg(long, default_value_t = 1000.0)]
        tmax: f64,
        #[arg(long, default_value_t = 1e-8)]
        rtol: f64,
        #[arg(long, default_value_t = 1e-10)]
        atol: f64,
        /// Print every accepted step instead of about 200 evenly spaced ones.
        #[arg(long)]
        full_trajectory: bool,
    },
    /// Simulate the gap table h(t, x) for `ode --h table:PATH`.
    HTable {
        #[arg(long, default_value_t = 20_000)]
        reps: u64,
        #[arg(long, default_value_t = 11)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Value of continuous threshold play with horizon t.
    PoissonW {
        #[arg(long)]
        c: f64,
        #[arg(long)]
        t: f64,
        #[arg(long, value_enum, default_value_t = Formula::Thinned)]
        formula: Formula,
        /// Also simulate with this many replications.
        #[arg(long)]
        mc: Option<u64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Monte Carlo correlation of X_k and its final rank.
    Correlate {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1_000_000)]
        reps: u64,
        /// Defaults to k = n.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Play the timed selection game in the terminal.
    Play {
        #[arg(long, default_value_t = 30)]
        m: u32,
        #[arg(long)]
        seed: Option<u64>,
        /// exact-rank:R or top-percent:Q
        #[arg(long, value_parser = parse_objective)]
        objective: Option<Objective>,
        /// Let the machine make every decision.
        #[arg(long)]
        machine: bool,
    },
    /// Run the HTTP game host.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        bind: Option<std::net::SocketAddr>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

fn exit_code(e: &ServiceError) -> u8 {
    match e {
        ServiceError::Core(CoreError::InvalidArgument(_)) | ServiceError::Config(_) => 2,
        ServiceError::Core(CoreError::ResourceBound(_)) => 3,
        _ => 1,
    }
}

fn emit<T: Serialize>(value: &T, summary: String) -> Result<(), ServiceError> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    eprintln!("{summary}");
    Ok(())
}

fn refuse_draws(draws: f64) -> Result<(), ServiceError> {
    if draws > MAX_DRAWS {
        return Err(CoreError::ResourceBound(format!("{draws:.2e} draws exceeds the cap of {MAX_DRAWS:.0e}")).into());
    }
    Ok(())
}

pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(command: Command) -> Result<(), ServiceError> {
    match command {
        Command::Exact { n, tol } => {
            let v = optimal_value_with(n, Loss::Rank, tol)?;
            let summary = format!("v_{n} = {:.8} (error bound {:.1e})", v.value, v.quadrature_error_bound);
            emit(&v, summary)
        }
        Command::Secretary { n } => {
            let r = secretary_rule(n)?;
            let summary = format!("n = {n}: cutoff {}, success {:.6}", r.cutoff, r.success_prob);
            emit(&r, summary)
        }
        Command::Truncate { n, j } => {
            let t = truncated_value(n, j)?;
            let summary = format!("v_{n}({j}) = {:.8}", t.value);
            emit(&t, summary)
        }
        Command::MlOpt { n, free, lo, hi } => {
            if free {
                let o = optimize_free(n)?;
                let summary = format!("free optimum at n = {n}: {:.8} ({} sweeps)", o.value, o.sweeps);
                emit(&o, summary)
            } else {
                let o = optimize_c(n, (lo, hi))?;
                let summary = format!("n = {n}: c* = {:.6}, value {:.8}", o.c_star, o.value);
                emit(&o, summary)
            }
        }
        Command::CloudSearch { n, batch, rounds, seed, c, single_run } => {
            refuse_draws(n as f64 * batch as f64 * rounds as f64)?;
            let cfg = SearchConfig {
                batch,
                rounds,
                scales: PerturbationScales::default(),
                seed,
                single_run,
                baseline_u: MEMORYLESS_U,
            };
            let start = CloudPolicy::baseline(c);
            start.validate()?;
            let state = winner_rule_search(&CloudSpace { n }, start, &cfg, |r| {
                if (r.round + 1) % 10 == 0 {
                    eprintln!("round {}: {:.4} ± {:.4} ({:?})", r.round + 1, r.mean, r.se, r.kept_or_perturbed);
                }
            })?;
            let summary = format!("best batch mean {:.4} over {rounds} rounds", state.best_value);
            emit(&state, summary)
        }
        Command::Ode { h, tmax, rtol, atol, full_trajectory } => {
            let model = match h {
                HSpec::Zero => HModel::Zero,
                HSpec::Const(k) => HModel::Constant(k),
                HSpec::Table(p) => HModel::Table(HTable::from_json(&std::fs::read_to_string(&p)?)?),
            };
            let mut sol = ode_solve(&OdeProblem::new(model, tmax).with_tolerances(rtol, atol))?;
            if !full_trajectory && sol.trajectory.len() > 200 {
                let step = sol.trajectory.len().div_ceil(200);
                let last = *sol.trajectory.last().unwrap();
                sol.trajectory = sol.trajectory.iter().copied().step_by(step).collect();
                if sol.trajectory.last() != Some(&last) {
                    sol.trajectory.push(last);
                }
            }
            let summary = format!("limit {:.6} (estimate {:.1e}, {} steps)", sol.limit, sol.error_estimate, sol.steps);
            emit(&sol, summary)
        }
        Command::HTable { reps, seed, out } => {
            let grid = HGrid::default();
            refuse_draws(reps as f64 * grid.grid_t.len() as f64 * 1000.0)?;
            let table = h_from_simulation(&grid, reps, seed)?;
            std::fs::write(&out, table.to_json())?;
            let summary = format!("wrote {} × {} table to {}", table.grid_t.len(), table.grid_x.len(), out.display());
            emit(&serde_json::json!({ "path": out, "rows": table.grid_t.len(), "cols": table.grid_x.len() }), summary)
        }
        Command::PoissonW { c, t, formula, mc, seed } => {
            let ct = ContinuousThreshold::new(c, t)?;
            let spec = QuadratureSpec {
                formula: match formula {
                    Formula::Thinned => WFormula::Thinned,
                    Formula::Printed => WFormula::AsPrinted,
                },
                ..QuadratureSpec::default()
            };
            let w = value_w(&ct, &Penalty::RandomPick, &spec)?;
            let sim = match mc {
                Some(reps) => {
                    refuse_draws(reps as f64 * t * 2.0)?;
                    Some(simulate_threshold_play(&ct, &Penalty::RandomPick, reps, seed)?)
                }
                None => None,
            };
            let mut summary = format!("W({t}) at c = {c}: {:.8}", w.value);
            if let Some(s) = &sim {
                summary += &format!(", simulated {:.5} ± {:.5}", s.mean, s.se);
            }
            emit(&serde_json::json!({ "c": c, "t": t, "value": w.value, "error": w.error, "mc": sim }), summary)
        }
        Command::Correlate { n, reps, k, seed } => {
            refuse_draws(n as f64 * reps as f64)?;
            let est = correlation_check(n, reps, k.unwrap_or(n), seed)?;
            let summary = format!("corr = {:.5} ± {:.5}, theory {:.5}", est.estimate, est.std_error, est.theory);
            emit(&est, summary)
        }
        Command::Play { m, seed, objective, machine } => play(m, seed, objective, machine),
        Command::Serve { config, bind, data_dir } => {
            let mut cfg = match config {
                Some(p) => ServiceConfig::load(&p)?,
                None => ServiceConfig::default(),
            };
            if let Some(b) = bind {
                cfg.bind = b;
            }
            if let Some(d) = data_dir {
                cfg.data_dir = d;
            }
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(crate::app::serve(cfg))
        }
    }
}

fn play(m: u32, seed: Option<u64>, objective: Option<Objective>, machine: bool) -> Result<(), ServiceError> {
    let seed = seed.unwrap_or_else(|| {
        std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_nanos() as u64).unwrap_or(0)
    });
    let tables = TableSet::shipped();
    let goal = objective.unwrap_or(Objective::ExactRank { rank: 1 });
    let mut s = new_session(m, &DistributionBasket::default(), seed)?.with_objective(objective, false)?;
    let stdin = std::io::stdin();
    let mut lines = stdin.lock().lines();
    eprintln!("M = {m}; arrivals come in [0, 1]; answer a to accept, anything else to pass");
    while s.is_open() {
        s.advance()?;
        if !s.pending() {
            break;
        }
        let j = s.revealed().len();
        let a = s.revealed()[j - 1];
        let d = if machine {
            s.machine_decide(goal, tables)?
        } else {
            eprint!("#{j} at t = {:.3}: relative rank {} > ", a.t, a.rel_rank);
            std::io::stderr().flush()?;
            match lines.next().transpose()? {
                Some(l) if l.trim().eq_ignore_ascii_case("a") => Decision::Accept,
                _ => Decision::Pass,
            }
        };
        if machine {
            eprintln!("#{j} at t = {:.3}: relative rank {} -> {d:?}", a.t, a.rel_rank);
        }
        s.decide(d)?;
    }
    let shadow = s.machine_shadow(goal, tables)?;
    s.set_machine(shadow.clone());
    let out = s.outcome().expect("closed");
    let summary = format!(
        "N = {}, final rank {}{}; the machine ({}) got rank {}",
        out.n,
        out.final_rank,
        if out.forced { " (forced)" } else { "" },
        goal.label(),
        shadow.final_rank
    );
    emit(&s.record(), summary)
}
