//! Batch front end: loads an action document, runs the requested analysis,
//! and emits JSON reports (or DOT for balls).
//!
//! Exit codes: 0 = PASS, 1 = FAIL, 2 = UNDECIDED (exploration too small to
//! decide; never conflated with FAIL), 3 = usage or input error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use urskit_core::ball::{LevelSystemDoc, WindowSpec};
use urskit_core::dot::ball_to_dot;
use urskit_core::kernel::{self, KernelDoc, LocalKernel};
use urskit_core::propa::{self, PropAWitness, ScheduleItem, WitnessDoc};
use urskit_core::repr;
use urskit_core::{
    ball_type, base_independence_check, classify, isotropy_scan, quotient_checks,
    urs_repetitivity, ActionConfig, ActionOracle, Classification, ClassifyParams, Outcome,
    SaturationPolicy, UrsError, Word,
};

#[derive(Parser)]
#[command(name = "urskit", version, about = "Schreier graph and groupoid toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Action description document (JSON)
    #[arg(long)]
    action: PathBuf,
    /// Exploration radius around the base vertex
    #[arg(long)]
    radius: Option<usize>,
    /// Highest level to classify
    #[arg(long)]
    nmax: Option<usize>,
    /// Vertex budget for exploration
    #[arg(long, default_value_t = 5_000_000)]
    budget: usize,
    /// Certified recurrence bound D: explore radius D + n instead of the
    /// doubling heuristic (the caller owns the soundness of D)
    #[arg(long)]
    certified_bound: Option<usize>,
    /// Output file (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Extract the ball around a vertex, as JSON or DOT
    Ball {
        #[command(flatten)]
        common: CommonArgs,
        /// Vertex, as a word in the generators applied to the base
        #[arg(long, default_value = "e")]
        vertex: String,
        /// Output format
        #[arg(long, default_value = "json")]
        format: String,
    },
    /// Classify ball types into level sets E_n and emit the level system
    Classes {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Recurrence distances D(n) for every class and sampled window center
    Urscheck {
        #[command(flatten)]
        common: CommonArgs,
        /// Cap on the number of window centers
        #[arg(long)]
        max_centers: Option<usize>,
        /// Radius of the center-sampling window
        #[arg(long)]
        center_radius: Option<usize>,
    },
    /// Scan for isotropy candidates (non-genericity evidence)
    Isotropy {
        #[command(flatten)]
        common: CommonArgs,
        /// Longest word to scan
        #[arg(long, default_value_t = 2)]
        maxlen: usize,
    },
    /// Finite-scale checks of the transformation-groupoid quotient map
    Quotient {
        #[command(flatten)]
        common: CommonArgs,
        /// Word budget for the checks
        #[arg(long, default_value_t = 3)]
        maxlen: usize,
    },
    /// Compare the canonical level classes of two bases of one action
    Basecheck {
        #[command(flatten)]
        common: CommonArgs,
        /// Second action document (same generators, different base)
        #[arg(long)]
        other: PathBuf,
    },
    /// Kernel identity checks; emits the width-reduced kernel document
    Kernel {
        #[command(flatten)]
        common: CommonArgs,
        /// Kernel document (JSON)
        #[arg(long)]
        kernel: Option<PathBuf>,
        /// Built-in kernel: delta, adjacency
        #[arg(long)]
        builtin: Option<String>,
    },
    /// Certified operator norm bounds for a kernel
    Norm {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        kernel: Option<PathBuf>,
        #[arg(long)]
        builtin: Option<String>,
        /// Power iteration tolerance
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Power iteration cap
        #[arg(long, default_value_t = 100_000)]
        max_iter: usize,
    },
    /// Local property A: check a witness, construct one, or run the bridges
    Propa {
        #[command(flatten)]
        common: CommonArgs,
        #[command(subcommand)]
        cmd: PropaCmd,
    },
    /// Run the identity suites on an action
    Selftest {
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Subcommand, Clone)]
enum PropaCmd {
    /// Check a witness document (or a constructed ball indicator)
    Check {
        #[arg(long)]
        witness: Option<PathBuf>,
        /// Witness index n
        #[arg(long)]
        n: usize,
        /// Indicator ball radius k (when no witness file is given)
        #[arg(long)]
        k: Option<usize>,
        /// Numeric tolerance on the norm and bound comparisons
        #[arg(long, default_value_t = 0.0)]
        tol: f64,
    },
    /// Construct the ball-indicator witness and emit its document
    Construct {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
    },
    /// Witness → functions → witness roundtrip, amenability check, and the
    /// ε-schedule inequalities
    Bridge {
        #[arg(long)]
        witness: Option<PathBuf>,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 0.0)]
        tol: f64,
    },
}

fn read_action(path: &Path) -> Result<(ActionConfig, ActionOracle)> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read action document {}", path.display()))?;
    let config: ActionConfig =
        serde_json::from_str(&text).with_context(|| "malformed action document")?;
    let oracle = urskit_core::load_action(&config)?;
    Ok((config, oracle))
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, content)
            .with_context(|| format!("cannot write {}", path.display())),
        None => {
            println!("{content}");
            Ok(())
        }
    }
}

fn classify_params(common: &CommonArgs, default_nmax: usize) -> ClassifyParams {
    let n_max = common.nmax.unwrap_or(default_nmax);
    let radius = common.radius.unwrap_or_else(|| (20 * n_max.max(1)).max(8));
    ClassifyParams {
        n_max,
        radius,
        budget: common.budget,
        saturation: match common.certified_bound {
            Some(d) => SaturationPolicy::CertifiedBound(d),
            None => SaturationPolicy::Doubling,
        },
    }
}

fn load_kernel(
    ls: &urskit_core::LevelSystem,
    kernel: &Option<PathBuf>,
    builtin: &Option<String>,
) -> Result<LocalKernel> {
    match (kernel, builtin) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)?;
            let doc: KernelDoc = serde_json::from_str(&text)?;
            Ok(LocalKernel::from_doc(ls, &doc)?)
        }
        (None, Some(name)) => match name.as_str() {
            "delta" => Ok(LocalKernel::delta(ls)),
            "adjacency" => Ok(LocalKernel::adjacency(ls)?),
            other => bail!("unknown builtin kernel {other:?} (delta, adjacency)"),
        },
        _ => bail!("pass exactly one of --kernel or --builtin"),
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Ball { common, vertex, format } => {
            let (_, oracle) = read_action(&common.action)?;
            let radius = common.radius.unwrap_or(2);
            let word = Word::parse(oracle.generators(), &vertex)?;
            let v = oracle.apply_word(&word, oracle.base());
            let ball = ball_type(&oracle, &v, radius);
            match format.as_str() {
                "dot" => emit(&common.out, &ball_to_dot(&ball.ty, oracle.generators(), "ball"))?,
                "json" => {
                    let doc = json!({
                        "root": v.display(oracle.generators()),
                        "radius": radius,
                        "vertices": ball.ty.vertex_count(),
                        "ball": ball.ty,
                        "realized_by": ball
                            .vertices
                            .iter()
                            .map(|u| u.display(oracle.generators()))
                            .collect::<Vec<_>>(),
                    });
                    emit(&common.out, &serde_json::to_string_pretty(&doc)?)?;
                }
                other => bail!("unknown format {other:?} (json, dot)"),
            }
            Ok(Outcome::Pass)
        }
        Command::Classes { common } => {
            let (_, oracle) = read_action(&common.action)?;
            let params = classify_params(&common, 4);
            let cls = classify(&oracle, &params)?;
            let doc: LevelSystemDoc = cls.ls.to_doc(oracle.generators());
            emit(&common.out, &serde_json::to_string_pretty(&doc)?)?;
            let all_saturated = cls.ls.levels.iter().all(|l| l.saturated);
            Ok(if all_saturated { Outcome::Pass } else { Outcome::Undecided })
        }
        Command::Urscheck { common, max_centers, center_radius } => {
            let (_, oracle) = read_action(&common.action)?;
            let params = classify_params(&common, 3);
            let cls = classify(&oracle, &params)?;
            let window = WindowSpec { max_centers, center_radius };
            let report = urs_repetitivity(&cls, &oracle, params.n_max, &window)?;
            let outcome = report.outcome;
            emit(&common.out, &serde_json::to_string_pretty(&report)?)?;
            Ok(outcome)
        }
        Command::Isotropy { common, maxlen } => {
            let (_, oracle) = read_action(&common.action)?;
            let params = classify_params(&common, 4);
            let cls = classify(&oracle, &params)?;
            let report = isotropy_scan(&cls, &oracle, maxlen, params.n_max)?;
            emit(&common.out, &serde_json::to_string_pretty(&report)?)?;
            Ok(Outcome::Pass)
        }
        Command::Quotient { common, maxlen } => {
            let (_, oracle) = read_action(&common.action)?;
            let level = common.nmax.unwrap_or(3);
            let mut params = classify_params(&common, level.max(maxlen));
            params.n_max = level.max(maxlen);
            let cls = classify(&oracle, &params)?;
            let report = quotient_checks(&cls.ls, oracle.generators(), level, maxlen)?;
            let outcome = report.outcome;
            emit(&common.out, &serde_json::to_string_pretty(&report)?)?;
            Ok(outcome)
        }
        Command::Basecheck { common, other } => {
            let (_, oracle_a) = read_action(&common.action)?;
            let (_, oracle_b) = read_action(&other)?;
            let level = common.nmax.unwrap_or(3);
            let params = classify_params(&common, level);
            let report = base_independence_check(&oracle_a, &oracle_b, level, &params)?;
            let outcome = Outcome::from_bool(report.equal);
            emit(&common.out, &serde_json::to_string_pretty(&report)?)?;
            Ok(outcome)
        }
        Command::Kernel { common, kernel, builtin } => {
            let (_, oracle) = read_action(&common.action)?;
            // the identity suite needs levels to four times the width
            let width = match (&kernel, &builtin) {
                (Some(path), None) => {
                    let text = std::fs::read_to_string(path)?;
                    let doc: KernelDoc = serde_json::from_str(&text)?;
                    doc.width
                }
                (None, Some(name)) if name == "delta" => 0,
                _ => 1,
            };
            let needed = (4 * width).max(2);
            let mut params = classify_params(&common, needed);
            params.n_max = params.n_max.max(needed);
            params.radius = params.radius.max(20 * params.n_max);
            let cls = classify(&oracle, &params)?;
            let ls = &cls.ls;
            let k = load_kernel(ls, &kernel, &builtin)?;
            let reduced = kernel::reduce_width(ls, &k)?;
            let star = kernel::adjoint(ls, &k)?;
            let star_star = kernel::reduce_width(ls, &kernel::adjoint(ls, &star)?)?;
            let involutive = kernel::kernels_equal(ls, &star_star, &k)?;
            let f = kernel::to_groupoid_function(ls, &k, k.width)?;
            let roundtrip = kernel::kernels_equal(ls, &kernel::from_groupoid_function(&f), &k)?;
            let square = kernel::convolve(ls, &k, &k)?;
            let star_route = kernel::adjoint(ls, &square)?;
            let star_product = kernel::convolve(ls, &star, &star)?;
            let products_star = kernel::kernels_equal(ls, &star_route, &star_product)?;
            let unit = kernel::kernels_equal(
                ls,
                &kernel::convolve(ls, &LocalKernel::delta(ls), &k)?,
                &k,
            )?;
            let ok = involutive && roundtrip && products_star && unit;
            let doc = json!({
                "kernel": reduced.to_doc(),
                "width_reduced": reduced.width,
                "checks": {
                    "star_involution": involutive,
                    "dictionary_roundtrip": roundtrip,
                    "product_star": products_star,
                    "delta_unit": unit,
                },
                "outcome": if ok { Outcome::Pass } else { Outcome::Fail },
            });
            emit(&common.out, &serde_json::to_string_pretty(&doc)?)?;
            Ok(Outcome::from_bool(ok))
        }
        Command::Norm { common, kernel, builtin, tol, max_iter } => {
            if !(tol > 0.0 && tol < 1.0) {
                bail!("tolerance must lie in (0, 1)");
            }
            let (_, oracle) = read_action(&common.action)?;
            let probe = ClassifyParams {
                n_max: 2,
                radius: 40,
                budget: common.budget,
                saturation: match common.certified_bound {
                    Some(d) => SaturationPolicy::CertifiedBound(d),
                    None => SaturationPolicy::Doubling,
                },
            };
            let cls = classify(&oracle, &probe)?;
            let k = load_kernel(&cls.ls, &kernel, &builtin)?;
            let radius = common.radius.unwrap_or(10 * k.width.max(1));
            let est = repr::norm_estimate(&cls.ls, &oracle, &k, radius, tol, max_iter)?;
            emit(&common.out, &serde_json::to_string_pretty(&est)?)?;
            Ok(Outcome::Pass)
        }
        Command::Propa { common, cmd } => run_propa(&common, &cmd),
        Command::Selftest { common } => {
            let (_, oracle) = read_action(&common.action)?;
            let params = classify_params(&common, 6);
            let cls = classify(&oracle, &params)?;
            let ls = &cls.ls;
            let mut checks = Vec::new();
            // connecting maps commute with restriction
            let mut e_ok = true;
            for n in 1..=params.n_max {
                for (id, ty) in ls.levels[n].classes.iter().enumerate() {
                    let down = &ls.levels[n - 1].classes[ls.levels[n].e_map[id]];
                    if &urskit_core::restrict_type(ty) != down {
                        e_ok = false;
                    }
                }
            }
            checks.push(("connecting_maps", e_ok));
            // witnesses realize their classes
            let mut w_ok = true;
            for level in &ls.levels {
                for (id, w) in level.witnesses.iter().enumerate() {
                    if ball_type(&oracle, w, level.n).ty != level.classes[id] {
                        w_ok = false;
                    }
                }
            }
            checks.push(("witnesses", w_ok));
            // quotient checks at a small scale
            let q = quotient_checks(ls, oracle.generators(), params.n_max.min(3), 2)?;
            checks.push(("quotient", q.outcome == Outcome::Pass));
            // dictionary identities on random kernels
            let mut dict_ok = true;
            for seed in 0..4u64 {
                let k = LocalKernel::random(ls, 1, seed, true)?;
                let l = LocalKernel::random(ls, 1, seed + 9, true)?;
                let prod = kernel::convolve(ls, &l, &k)?;
                let via_fn = kernel::fn_convolve(
                    ls,
                    &kernel::to_groupoid_function(ls, &l, 1)?,
                    &kernel::to_groupoid_function(ls, &k, 1)?,
                )?;
                if kernel::to_groupoid_function(ls, &prod, 2)?.entries != via_fn.entries {
                    dict_ok = false;
                }
                let lhs = kernel::adjoint(ls, &prod)?;
                let rhs =
                    kernel::convolve(ls, &kernel::adjoint(ls, &k)?, &kernel::adjoint(ls, &l)?)?;
                if !kernel::kernels_equal(ls, &lhs, &rhs)? {
                    dict_ok = false;
                }
            }
            checks.push(("dictionary", dict_ok));
            // truncation is multiplicative on the interior
            let k = LocalKernel::random(ls, 1, 17, true)?;
            let l = LocalKernel::random(ls, 1, 18, true)?;
            let radius = 5.min(params.radius);
            let op = repr::truncate(ls, &oracle, &k, radius)?
                .product(&repr::truncate(ls, &oracle, &l, radius)?);
            let direct = repr::truncate(ls, &oracle, &kernel::convolve(ls, &k, &l)?, radius)?;
            checks.push(("representation", op.agrees_on_interior(&direct, 2)));

            let ok = checks.iter().all(|(_, b)| *b);
            let doc = json!({
                "checks": checks
                    .iter()
                    .map(|(n, b)| json!({"name": n, "passed": b}))
                    .collect::<Vec<_>>(),
                "outcome": if ok { Outcome::Pass } else { Outcome::Fail },
            });
            emit(&common.out, &serde_json::to_string_pretty(&doc)?)?;
            Ok(Outcome::from_bool(ok))
        }
    }
}

fn run_propa(common: &CommonArgs, cmd: &PropaCmd) -> Result<Outcome> {
    let (_, oracle) = read_action(&common.action)?;
    let tol_ratio = |tol: f64| -> Result<urskit_core::Ratio> {
        if !(0.0..1.0).contains(&tol) {
            bail!("tolerance must lie in [0, 1)");
        }
        urskit_core::Ratio::from_float(tol).ok_or_else(|| anyhow!("non-finite tolerance"))
    };
    match cmd {
        PropaCmd::Construct { n, k } => {
            let params = classify_params(common, k + n);
            let cls = classify(&oracle, &params)?;
            let witness = propa::ball_indicator_witness(&cls.ls, *n, *k)?;
            emit(&common.out, &serde_json::to_string_pretty(&witness.to_doc())?)?;
            Ok(Outcome::Pass)
        }
        PropaCmd::Check { witness, n, k, tol } => {
            let (cls, w) = load_witness(common, &oracle, witness, *n, *k)?;
            let report = propa::check_witness(&cls.ls, &w, *n, &tol_ratio(*tol)?)?;
            let outcome = report.outcome;
            emit(&common.out, &serde_json::to_string_pretty(&report)?)?;
            Ok(outcome)
        }
        PropaCmd::Bridge { witness, n, k, tol } => {
            let (cls, w) = load_witness(common, &oracle, witness, *n, *k)?;
            let ls = &cls.ls;
            let check = propa::check_witness(ls, &w, *n, &tol_ratio(*tol)?)?;
            let entry = propa::witness_to_functions(ls, &w);
            let amen = propa::amenability_check(ls, &entry, *n)?;
            let (back, _normalized, norm_check) = propa::functions_to_witness(ls, &entry)?;
            let roundtrip = back.values == w.values;
            let vanish = entry.vanish_radius.unwrap_or(entry.locality);
            let sup =
                entry.table.values().map(|v| v.to_f64().abs()).fold(0.0f64, f64::max);
            let sup_ratio = urskit_core::Ratio::from_float(sup.max(1.0))
                .ok_or_else(|| anyhow!("non-finite sup"))?;
            let eps = propa::derive_epsilon(oracle.generators().len(), vanish, &sup_ratio, *n);
            let schedule = propa::epsilon_schedule_check(
                oracle.generators().len(),
                &[ScheduleItem { n: *n, vanish_radius: vanish, sup_f: sup_ratio, epsilon: eps }],
            );
            let sched_ok = schedule[0].first_holds && schedule[0].second_holds;
            let ok = check.outcome == Outcome::Pass
                && amen.outcome == Outcome::Pass
                && roundtrip
                && norm_check.holds
                && sched_ok;
            let doc = json!({
                "witness_check": check,
                "amenability": amen,
                "roundtrip_identity": roundtrip,
                "normalization": norm_check,
                "schedule": schedule,
                "outcome": if ok { Outcome::Pass } else { Outcome::Fail },
            });
            emit(&common.out, &serde_json::to_string_pretty(&doc)?)?;
            Ok(Outcome::from_bool(ok))
        }
    }
}

fn load_witness(
    common: &CommonArgs,
    oracle: &ActionOracle,
    witness: &Option<PathBuf>,
    n: usize,
    k: Option<usize>,
) -> Result<(Classification, PropAWitness)> {
    match witness {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let doc: WitnessDoc = serde_json::from_str(&text)?;
            let params = classify_params(common, doc.locality + n);
            let cls = classify(oracle, &params)?;
            let w = PropAWitness::from_doc(&cls.ls, &doc)?;
            Ok((cls, w))
        }
        None => {
            let k = k.ok_or_else(|| anyhow!("pass --witness or --k"))?;
            let params = classify_params(common, k + n);
            let cls = classify(oracle, &params)?;
            let w = propa::ball_indicator_witness(&cls.ls, n, k)?;
            Ok((cls, w))
        }
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("URSKIT_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
        }
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // keep exit code 2 reserved for UNDECIDED
            let is_error = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if is_error { 3 } else { 0 });
        }
    };
    match run(cli) {
        Ok(outcome) => ExitCode::from(outcome.exit_code() as u8),
        Err(e) => {
            // saturation shortfalls are UNDECIDED, not failures
            if let Some(UrsError::Unsaturated { level }) = e.downcast_ref::<UrsError>() {
                eprintln!("UNDECIDED: level {level} not saturated; raise --radius");
                return ExitCode::from(2);
            }
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
