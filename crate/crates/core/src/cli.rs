//! The `cmpg` command-line tool.
//!
//! Game documents are read from a path or from standard input (`-`); results
//! go to standard output, and `--output` additionally writes a
//! [`RunRecord`]. Exit codes: 0 success, 1 domain error, 2 usage error.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::classify::classify;
use crate::error::{Error, Result};
use crate::etr::{self, EtrSentence};
use crate::format::{parse_game, parse_strategy, serialize_game, serialize_strategy, strategy_value};
use crate::game::{compute_stats, Game};
use crate::generators::{self, SkewSymmetryWitness, SqrtEntry};
use crate::rational::{format_rational, parse_real_exact, to_f64};
use crate::record::{quantity, RunRecord, Unit};
use crate::solvers::{self, SolverConfig};

#[derive(Parser, Debug)]
#[command(name = "cmpg", version, about = "Solve and analyse concurrent mean-payoff games")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalOpts {
    /// Write a machine-readable run record to this file (`-` for stdout).
    #[arg(long, global = true, value_name = "FILE")]
    pub output: Option<PathBuf>,
    /// Worker threads; defaults to the machine's parallelism.
    #[arg(long, global = true, env = "CMPG_THREADS")]
    pub threads: Option<usize>,
    /// Node budget of each q-rounded branch-and-bound search.
    #[arg(long, global = true, env = "CMPG_NODE_BUDGET", default_value_t = crate::matrix::DEFAULT_NODE_BUDGET)]
    pub node_budget: u64,
    /// Relative tolerance of matrix-game comparisons.
    #[arg(long, global = true, default_value_t = 1e-9)]
    pub lp_tol: f64,
    /// Accepted residual of the best-response equations.
    #[arg(long, global = true, default_value_t = 1e-8)]
    pub residual_tol: f64,
    /// Cap on strategy-iteration rounds.
    #[arg(long, global = true, default_value_t = 1_000_000)]
    pub si_cap: u64,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse and validate a game; print its parameters.
    Validate {
        game: String,
        /// Also verify a skew-symmetry witness.
        #[arg(long, value_name = "FILE")]
        witness: Option<PathBuf>,
    },
    /// Ergodic components and the ergodic / sure / almost-sure verdict.
    Classify { game: String },
    /// Approximate the value by value iteration or strategy iteration.
    Solve(SolveArgs),
    /// Mean payoff of a fixed stationary profile.
    Eval {
        #[arg(long, value_name = "FILE")]
        s1: PathBuf,
        #[arg(long, value_name = "FILE")]
        s2: PathBuf,
        /// Start state; defaults to the first state.
        #[arg(long)]
        state: Option<String>,
        game: String,
    },
    /// Generate a game family.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Turn a simple stochastic game into an ergodic game whose value
    /// approximates the SSG value of STATE.
    ReduceSsg {
        /// Terminal leak exponent; defaults to 9n.
        #[arg(long)]
        alpha: Option<u32>,
        /// Restart exponent; defaults to 7n.
        #[arg(long)]
        beta: Option<u32>,
        ssg: String,
        state: String,
    },
    /// Write the ETR sentence for the value as SMT-LIB 2.
    ExportEtr {
        /// Threshold: emit "value at STATE ≤ LAMBDA" instead of the
        /// single-component fixpoint sentence.
        #[arg(long)]
        lambda: Option<String>,
        /// Anchor state (without --lambda) or queried state (with it).
        #[arg(long)]
        state: Option<String>,
        game: String,
    },
    /// Substitute an assignment into an exported sentence.
    CheckEtr {
        sentence: PathBuf,
        assignment: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Vi,
    Si,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    /// Target accuracy in reward units.
    #[arg(long)]
    pub epsilon: Option<String>,
    /// Value iteration: number of steps (overrides the bound from epsilon).
    #[arg(long)]
    pub steps: Option<u64>,
    /// Strategy iteration: rounding grid (overrides the bound from epsilon).
    #[arg(long)]
    pub q: Option<u64>,
    /// Strategy iteration: state whose potential is pinned to 0.
    #[arg(long)]
    pub anchor: Option<String>,
    /// Include per-step / per-round traces in the record.
    #[arg(long)]
    pub trace: bool,
    /// Strategy iteration: write the final strategy document here.
    #[arg(long, value_name = "FILE")]
    pub strategy_out: Option<PathBuf>,
    pub game: String,
}

#[derive(Subcommand, Debug)]
pub enum GenCommand {
    /// Two-state ergodic game of value √B.
    Sqrt { b: u64 },
    /// Start state leading uniformly into √N_i games; value is the mean.
    Sqrtsum {
        #[arg(value_delimiter = ',', required = true)]
        nums: Vec<u64>,
        #[arg(long, value_enum, default_value_t = Entry::U)]
        entry: Entry,
    },
    /// Skew-symmetric game where good strategies need high patience.
    LowerBound {
        #[arg(long)]
        k: u32,
        #[arg(long)]
        eta: String,
        /// Where to write the skew-symmetry witness; defaults to
        /// `lower-bound-kK.witness.json` in the working directory.
        #[arg(long, value_name = "FILE")]
        witness: Option<PathBuf>,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Entry {
    U,
    W,
}

fn read_text(path: &str) -> Result<String> {
    let io = |source| Error::Io { path: path.to_string(), source };
    if path == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s).map_err(io)?;
        Ok(s)
    } else {
        std::fs::read_to_string(path).map_err(io)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let io = |source| Error::Io { path: path.display().to_string(), source };
    if path.as_os_str() == "-" {
        std::io::stdout().write_all(text.as_bytes()).map_err(io)
    } else {
        std::fs::write(path, text).map_err(io)
    }
}

fn load_game(path: &str, rec: &mut RunRecord) -> Result<Game> {
    let t = Instant::now();
    let g = parse_game(&read_text(path)?)?;
    rec.set_game(&g);
    rec.time("parse", t);
    Ok(g)
}

fn state_or_first(g: &Game, name: Option<&str>) -> Result<usize> {
    name.map_or(Ok(0), |s| g.state_index(s))
}

fn names(g: &Game, states: &[usize]) -> Vec<String> {
    states.iter().map(|&s| g.state_name(s).to_string()).collect()
}

fn config(global: &GlobalOpts) -> SolverConfig {
    SolverConfig {
        lp_tol: global.lp_tol,
        residual_tol: global.residual_tol,
        si_cap: global.si_cap,
        node_budget: global.node_budget,
        pi_cap: None,
    }
}

/// Runs one command, writing human-readable output to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write, rec: &mut RunRecord) -> Result<()> {
    let stdout_err = |source| Error::Io { path: "<stdout>".into(), source };
    macro_rules! say {
        ($($t:tt)*) => { writeln!(out, $($t)*).map_err(stdout_err)? };
    }
    match &cli.command {
        Command::Validate { game, witness } => {
            let g = load_game(game, rec)?;
            let st = compute_stats(&g);
            say!(
                "valid: {} states, m = {}, r = {}, delta_min = {}, W = {}",
                st.n,
                st.m,
                st.r,
                format_rational(&st.delta_min),
                format_rational(g.reward_scale())
            );
            rec.result("valid", true);
            if let Some(path) = witness {
                let w = SkewSymmetryWitness::from_json(&g, &read_text(&path.to_string_lossy())?)?;
                match generators::check_skew_symmetric(&g, &w)? {
                    generators::SkewCheck::Holds => {
                        say!("skew-symmetric: yes");
                        rec.result("skew_symmetric", json!({ "holds": true }));
                    }
                    generators::SkewCheck::Violated { condition, detail } => {
                        say!("skew-symmetric: no (condition {condition} fails at {detail})");
                        rec.result("skew_symmetric", json!({ "holds": false, "condition": condition, "at": detail }));
                    }
                }
            }
        }
        Command::Classify { game } => {
            let g = load_game(game, rec)?;
            let t = Instant::now();
            let c = classify(&g);
            rec.time("classify", t);
            let comps: Vec<Vec<String>> = c.components.iter().map(|k| names(&g, k)).collect();
            let doc = json!({
                "verdict": c.verdict,
                "components": comps,
                "rejected": c.rejected.iter().map(|k| names(&g, k)).collect::<Vec<_>>(),
                "sure_test": c.sure_test(),
                "almost_sure_test": c.almost_sure_test(),
                "cycle_outside_components": c.cycle.as_ref().map(|x| names(&g, x)),
                "trap_outside_components": c.trap.as_ref().map(|x| names(&g, x)),
            });
            say!("verdict: {:?}", c.verdict);
            for (k, comp) in comps.iter().enumerate() {
                say!("component {k}: {}", comp.join(" "));
            }
            if let Some(cy) = &c.cycle {
                say!("cycle avoiding the components: {}", names(&g, cy).join(" -> "));
            }
            if let Some(tr) = &c.trap {
                say!("states the players can confine the play to: {}", names(&g, tr).join(" "));
            }
            say!("{}", serde_json::to_string(&doc).expect("classification serializes"));
            for (k, v) in doc.as_object().expect("object") {
                rec.result(k, v.clone());
            }
        }
        Command::Solve(args) => solve(cli, args, out, rec)?,
        Command::Eval { s1, s2, state, game } => {
            let g = load_game(game, rec)?;
            let sigma1 = parse_strategy(&g, &read_text(&s1.to_string_lossy())?)?;
            let sigma2 = parse_strategy(&g, &read_text(&s2.to_string_lossy())?)?;
            let s = state_or_first(&g, state.as_deref())?;
            rec.param("state", g.state_name(s));
            let t = Instant::now();
            let v = solvers::evaluate_profile(&g, &sigma1, &sigma2, s)?;
            rec.time("evaluate", t);
            say!("mean payoff from {}: {v}", g.state_name(s));
            rec.result("value", quantity(v, Unit::Reward))
                .result("value_normalized", quantity(v / g.reward_scale_f64(), Unit::Normalized));
        }
        Command::Gen(cmd) => {
            let g = match cmd {
                GenCommand::Sqrt { b } => {
                    rec.param("family", "sqrt").param("b", *b);
                    generators::gen_sqrt_game(*b)?
                }
                GenCommand::Sqrtsum { nums, entry } => {
                    rec.param("family", "sqrtsum").param("nums", nums.clone());
                    let e = if *entry == Entry::U { SqrtEntry::U } else { SqrtEntry::W };
                    generators::gen_sqrt_sum(nums, e)?
                }
                GenCommand::LowerBound { k, eta, witness } => {
                    let eta_r = parse_real_exact(eta)?;
                    rec.param("family", "lower-bound").param("k", *k).param("eta", format_rational(&eta_r));
                    let (g, w) = generators::gen_lower_bound(*k, &eta_r)?;
                    let path = witness.clone().unwrap_or_else(|| PathBuf::from(format!("lower-bound-k{k}.witness.json")));
                    write_text(&path, &w.to_json(&g))?;
                    rec.result("witness", path.display().to_string());
                    g
                }
            };
            rec.set_game(&g);
            out.write_all(serialize_game(&g).as_bytes()).map_err(stdout_err)?;
        }
        Command::ReduceSsg { alpha, beta, ssg, state } => {
            let g = load_game(ssg, rec)?;
            let info = generators::validate_ssg(&g)?;
            let n = info.nonterminals.len() as u32;
            let (a, b) = (alpha.unwrap_or(9 * n), beta.unwrap_or(7 * n));
            let s = g.state_index(state)?;
            rec.param("state", state.as_str()).param("alpha", a).param("beta", b).param("nonterminals", n);
            let red = generators::reduce_ssg(&g, s, a, b)?;
            if a == 9 * n && b == 7 * n {
                let r = 2f64.powi(-(7 * n as i32) + 1);
                rec.result("value_interval_radius", quantity(r, Unit::Reward));
            }
            rec.result("reduced_game", crate::record::game_summary(&red));
            out.write_all(serialize_game(&red).as_bytes()).map_err(stdout_err)?;
        }
        Command::ExportEtr { lambda, state, game } => {
            let g = load_game(game, rec)?;
            let s = state_or_first(&g, state.as_deref())?;
            let sentence = match lambda {
                Some(l) => {
                    let l = parse_real_exact(l)?;
                    rec.param("lambda", format_rational(&l));
                    etr::emit_etr_full(&g, &l, s)?
                }
                None => etr::emit_etr_component(&g, s)?,
            };
            rec.param("state", g.state_name(s));
            rec.result("variables", sentence.variables.len()).result("constraints", sentence.constraints.len());
            out.write_all(sentence.to_smtlib()?.as_bytes()).map_err(stdout_err)?;
        }
        Command::CheckEtr { sentence, assignment, tol } => {
            let s = EtrSentence::from_smtlib(&read_text(&sentence.to_string_lossy())?)?;
            let a = etr::parse_assignment(&read_text(&assignment.to_string_lossy())?)?;
            rec.param("tol", *tol);
            let report = etr::check_assignment(&s, &a, *tol)?;
            match &report.first_violation {
                None => say!("satisfied (largest excess {:e})", report.max_excess),
                Some(v) => say!("violated: constraint {} `{}` fails by {:e}", v.index, v.label, v.excess),
            }
            rec.result("satisfied", report.satisfied)
                .result("max_excess", report.max_excess)
                .result("first_violation", report.first_violation.as_ref().map(|v| json!({"index": v.index, "label": v.label, "excess": v.excess})));
        }
    }
    Ok(())
}

fn solve(cli: &Cli, args: &SolveArgs, out: &mut dyn Write, rec: &mut RunRecord) -> Result<()> {
    let stdout_err = |source| Error::Io { path: "<stdout>".into(), source };
    let g = load_game(&args.game, rec)?;
    let eps = args.epsilon.as_deref().map(parse_real_exact).transpose()?;
    if let Some(e) = &eps {
        rec.param("epsilon", format_rational(e));
    }
    let w = g.reward_scale_f64();
    match args.method {
        Method::Vi => {
            rec.param("method", "vi");
            let steps = match (args.steps, &eps) {
                (Some(t), _) => t,
                (None, Some(e)) => solvers::vi_steps_for_epsilon(&compute_stats(&g), g.reward_scale(), e)?,
                (None, None) => return Err(Error::InvalidArgument("value iteration needs --epsilon or --steps".into())),
            };
            // The bracket contains the value only for ergodic games, so only
            // then may a narrow bracket end the run early.
            let ergodic = classify(&g).is_ergodic();
            let width = eps.as_ref().map(to_f64).filter(|_| ergodic && args.steps.is_none());
            rec.param("steps_bound", steps).param("ergodic", ergodic);
            let t = Instant::now();
            let r = solvers::value_iteration_until(&g, steps, args.trace, |_, lo, hi| width.is_none_or(|e| hi - lo > e))?;
            rec.time("value_iteration", t);
            say_vi(out, &g, &r, ergodic).map_err(stdout_err)?;
            rec.result("steps", r.steps)
                .result("bracket", json!([quantity(r.bracket.0, Unit::Reward), quantity(r.bracket.1, Unit::Reward)]))
                .result("midpoint", quantity(r.midpoint(), Unit::Reward))
                .result("width", quantity(r.width(), Unit::Reward))
                .result(
                    "values",
                    (0..g.num_states())
                        .map(|s| (g.state_name(s).to_string(), quantity(r.values[s], Unit::Reward)))
                        .collect::<serde_json::Map<_, _>>(),
                );
            if let Some(tr) = &r.trace {
                rec.result("trace", tr.iter().map(|(a, b)| json!([a, b])).collect::<Vec<_>>())
                    .result("trace_unit", json!(Unit::Reward));
            }
        }
        Method::Si => {
            rec.param("method", "si");
            let anchor = state_or_first(&g, args.anchor.as_deref())?;
            rec.param("anchor", g.state_name(anchor));
            if let Some(q) = args.q {
                rec.param("q", q);
            }
            let eps = match (&eps, args.q) {
                (Some(e), _) => e.clone(),
                (None, Some(_)) => crate::rational::int(1),
                (None, None) => return Err(Error::InvalidArgument("strategy iteration needs --epsilon or --q".into())),
            };
            let t = Instant::now();
            let r = solvers::var_hoffman_karp(&g, &eps, anchor, args.q, &config(&cli.global))?;
            rec.time("strategy_iteration", t);
            writeln!(out, "gain: {} (q = {}, {} rounds)", r.gain, r.q, r.iterations).map_err(stdout_err)?;
            writeln!(out, "guarantee: within {:e} of the value", r.epsilon_actual).map_err(stdout_err)?;
            out.write_all(serialize_strategy(&g, &r.strategy).as_bytes()).map_err(stdout_err)?;
            if let Some(path) = &args.strategy_out {
                write_text(path, &serialize_strategy(&g, &r.strategy))?;
            }
            rec.result("gain", quantity(r.gain, Unit::Reward))
                .result("gain_normalized", quantity(r.gain / w, Unit::Normalized))
                .result("q", r.q)
                .result("iterations", r.iterations)
                .result("epsilon_bound", quantity(r.epsilon_actual, Unit::Reward))
                .result("strategy", strategy_value(&g, &r.strategy))
                .result(
                    "potentials",
                    (0..g.num_states())
                        .map(|s| (g.state_name(s).to_string(), quantity(r.potentials.potentials[s], Unit::Reward)))
                        .collect::<serde_json::Map<_, _>>(),
                );
            if args.trace {
                rec.result("gain_trace", r.gain_trace.iter().map(|x| json!(x)).collect::<Vec<Value>>())
                    .result("trace_unit", json!(Unit::Reward));
            }
        }
    }
    Ok(())
}

fn say_vi(out: &mut dyn Write, g: &Game, r: &solvers::ValueIterationResult, ergodic: bool) -> std::io::Result<()> {
    writeln!(out, "steps: {}", r.steps)?;
    if ergodic {
        writeln!(out, "value in [{}, {}] (width {:e})", r.bracket.0, r.bracket.1, r.width())?;
    } else {
        writeln!(out, "not ergodic: per-state values after {} steps", r.steps)?;
    }
    for s in 0..g.num_states() {
        writeln!(out, "  {}: {}", g.state_name(s), r.values[s])?;
    }
    Ok(())
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn main_with(argv: impl IntoIterator<Item = std::ffi::OsString>) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already configured: {e}");
        }
    }
    let name = match &cli.command {
        Command::Validate { .. } => "validate",
        Command::Classify { .. } => "classify",
        Command::Solve(_) => "solve",
        Command::Eval { .. } => "eval",
        Command::Gen(_) => "gen",
        Command::ReduceSsg { .. } => "reduce-ssg",
        Command::ExportEtr { .. } => "export-etr",
        Command::CheckEtr { .. } => "check-etr",
    };
    let mut rec = RunRecord::new(name);
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    let outcome = run(&cli, &mut lock, &mut rec);
    drop(lock);
    let code = match &outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            rec.result("error", e.to_string());
            1
        }
    };
    if let Some(path) = &cli.global.output {
        if let Err(e) = write_text(path, &rec.to_json()) {
            eprintln!("error: {e}");
            return 1;
        }
    }
    code
}

pub fn main() -> ! {
    std::process::exit(main_with(std::env::args_os()))
}
