//! `cnf`: solve relay-selection instances, enumerate frontiers, check core
//! stability and run Monte Carlo sweeps.
//!
//! Exit codes: 0 success, 1 malformed input, 2 infeasible instance,
//! 3 deviation found (core check) or reference mismatch (paper-example).

use std::fs;
use std::io::{self as stdio, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use cnf_core::game::{self, CoreVerdict, EconParams, PlayerSet};
use cnf_core::io::{self, format_sig, Instance, InstanceFile, ResultFile, SweepFile};
use cnf_core::{build_family, engine, fixture, oracle, sim, Error};

#[derive(Parser)]
#[command(name = "cnf", version, about = "Compute-and-forward relay selection and coalition analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and print the result file.
    Solve {
        instance: PathBuf,
        #[command(flatten)]
        opts: InstanceOpts,
        /// Economic parameters as `Z,b`.
        #[arg(long)]
        econ: Option<String>,
        /// Include the exhaustive Pareto frontier.
        #[arg(long)]
        emit_frontier: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in reference instance and compare with published values.
    PaperExample {
        /// Nudge one channel gain (negative control).
        #[arg(long, hide = true)]
        perturb: bool,
    },
    /// Enumerate the Pareto frontier of an instance.
    Frontier {
        instance: PathBuf,
        #[command(flatten)]
        opts: InstanceOpts,
        #[command(flatten)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check whether the star partition is in the core.
    CoreCheck {
        instance: PathBuf,
        #[command(flatten)]
        opts: InstanceOpts,
        /// Check a deliberately weak partition instead of the star partition.
        #[arg(long, hide = true)]
        adversarial: bool,
    },
    /// Run a Monte Carlo sweep from a config file.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        /// Replace the config's SNR list with a single point.
        #[arg(long)]
        snr_db: Option<f64>,
        /// Directory receiving sweep.json and sweep.csv.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        format: Format,
    },
}

#[derive(Args)]
struct InstanceOpts {
    /// `span`, `relayspan`, `minrate` or `cap:K`.
    #[arg(long)]
    policy: Option<String>,
    /// Minimum rate: one value for all sources or a comma-separated list.
    #[arg(long)]
    vmin: Option<String>,
    /// Override the instance power with an SNR in dB.
    #[arg(long)]
    snr_db: Option<f64>,
}

#[derive(Args)]
#[group(multiple = false)]
struct Format {
    #[arg(long)]
    json: bool,
    #[arg(long)]
    csv: bool,
}

enum Failure {
    Input(String),
    Infeasible(String),
    Mismatch,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Infeasible(_) | Error::RankDeficient => Failure::Infeasible(e.to_string()),
            other => Failure::Input(other.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn emit(text: &str, out: Option<&Path>) -> Outcome {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Input(format!("{}: {e}", p.display()))),
        None => {
            let mut stdout = stdio::stdout().lock();
            match writeln!(stdout, "{text}") {
                Err(e) if e.kind() != stdio::ErrorKind::BrokenPipe => {
                    Err(Failure::Input(format!("stdout: {e}")))
                }
                _ => Ok(()),
            }
        }
    }
}

fn load(path: &Path, opts: &InstanceOpts) -> Result<Instance, Failure> {
    let file = InstanceFile::from_json(&read(path)?)?;
    let mut inst = file.resolve()?;
    let l = inst.channel.num_sources();
    if let Some(s) = opts.snr_db {
        inst.channel = inst.channel.with_power(sim::power_from_db(s))?;
    }
    if let Some(v) = &opts.vmin {
        inst.req = io::parse_vmin(v, l)?;
    }
    if let Some(p) = &opts.policy {
        inst.policy = io::parse_policy(p, &inst.req)?;
    }
    Ok(inst)
}

fn parse_econ(text: &str) -> Result<EconParams, Failure> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let [z, b] = parts.as_slice() else {
        return Err(Failure::Input("econ: expected `Z,b`".into()));
    };
    let num = |s: &str| s.parse::<f64>().map_err(|e| Failure::Input(format!("econ: {e}")));
    Ok(EconParams::new(num(z)?, num(b)?)?)
}

fn solve(instance: &Path, opts: &InstanceOpts, econ: Option<&str>, emit_frontier: bool, out: Option<&Path>) -> Outcome {
    let started = Instant::now();
    let mut inst = load(instance, opts)?;
    if let Some(e) = econ {
        inst.econ = parse_econ(e)?;
    }
    let family = build_family(&inst.channel, &inst.policy)?;
    let result = match engine::run(&family, &inst.req) {
        Ok(r) => r,
        Err(Error::Infeasible(reason)) => {
            let report = serde_json::json!({
                "status": "infeasible",
                "reason": reason,
                "candidate_set_sizes": family.set_sizes(),
                "V": inst.req.floors(),
            });
            println!("{}", serde_json::to_string_pretty(&report).expect("json"));
            return Err(Failure::Infeasible(reason));
        }
        Err(e) => return Err(e.into()),
    };
    let partition = game::star_partition(&result, PlayerSet::new(inst.channel.num_relays()), &inst.econ);
    let frontier = if emit_frontier {
        let sols = oracle::enumerate_solutions(&family.filter_requirements(&inst.req))?;
        Some(oracle::pareto_frontier(&sols))
    } else {
        None
    };
    let file = ResultFile::new(&result, &partition, frontier.as_deref(), started.elapsed().as_secs_f64());
    emit(&file.to_json(), out)
}

fn paper_example(perturb: bool) -> Outcome {
    let ch = if perturb {
        fixture::perturbed_channel()
    } else {
        fixture::channel()
    };
    let report = fixture::report(&ch)?;
    for line in &report.lines {
        println!("{line}");
    }
    if report.passed() {
        println!("all rate values match");
        Ok(())
    } else {
        println!("reference mismatch");
        Err(Failure::Mismatch)
    }
}

fn frontier(instance: &Path, opts: &InstanceOpts, format: &Format, out: Option<&Path>) -> Outcome {
    let inst = load(instance, opts)?;
    let family = build_family(&inst.channel, &inst.policy)?.filter_requirements(&inst.req);
    let sols = oracle::enumerate_solutions(&family)?;
    let front = oracle::pareto_frontier(&sols);
    if front.is_empty() {
        return Err(Failure::Infeasible("no full-rank selection".into()));
    }
    let text = if format.csv {
        let mut s = String::from("min_rate,sum_rate,representatives\n");
        for p in &front {
            s += &format!("{},{},{}\n", format_sig(p.min_rate), format_sig(p.sum_rate), p.representatives.len());
        }
        s.trim_end().to_string()
    } else {
        let points: Vec<_> = front
            .iter()
            .map(|p| {
                serde_json::json!({
                    "min_rate": io::round_sig(p.min_rate),
                    "sum_rate": io::round_sig(p.sum_rate),
                    "representatives": p.representatives.iter().map(io::SelectionRecord::from).collect::<Vec<_>>(),
                })
            })
            .collect();
        let doc = serde_json::json!({
            "total_combinations": sols.total_combinations,
            "full_rank_count": sols.full_rank_count,
            "frontier": points,
        });
        serde_json::to_string_pretty(&doc).expect("json")
    };
    emit(&text, out)
}

fn core_check(instance: &Path, opts: &InstanceOpts, adversarial: bool) -> Outcome {
    let inst = load(instance, opts)?;
    let players = PlayerSet::new(inst.channel.num_relays());
    if players.len() > game::MAX_CORE_PLAYERS {
        return Err(Error::TooLarge {
            players: players.len(),
            limit: game::MAX_CORE_PLAYERS,
        }
        .into());
    }
    let family = build_family(&inst.channel, &inst.policy)?;
    let partition = if adversarial {
        game::weakest_partition(players, &family, &inst.req, &inst.econ)?
            .ok_or_else(|| Failure::Input("every feasible coalition ties with the best one".into()))?
    } else {
        let result = engine::run(&family, &inst.req)?;
        game::star_partition(&result, players, &inst.econ)
    };
    println!("partition:");
    for b in &partition.blocks {
        let pay: Vec<String> = b.payoffs.iter().map(|(p, x)| format!("{p}={}", format_sig(*x))).collect();
        println!("  {} v={} [{}]", b.coalition, format_sig(b.value), pay.join(", "));
    }
    let report = game::verify_core(&partition, &family, &inst.req, &inst.econ)?;
    println!("coalitions checked: {}", report.coalitions_checked);
    match &report.strict_deviation {
        Some(d) => println!("strict deviation (every member gains): {}", d.coalition),
        None => println!("strict deviation (every member gains): none"),
    }
    match &report.verdict {
        CoreVerdict::InCore => {
            println!("InCore");
            Ok(())
        }
        CoreVerdict::Deviation(d) => {
            println!("Deviation {} v={}", d.coalition, format_sig(d.value));
            for (p, new, old) in &d.payoffs {
                println!("  {p}: {} (currently {})", format_sig(*new), format_sig(*old));
            }
            Err(Failure::Mismatch)
        }
    }
}

fn sweep(
    config: &Path,
    seed: Option<u64>,
    trials: Option<usize>,
    snr_db: Option<f64>,
    out: Option<&Path>,
    format: &Format,
) -> Outcome {
    let mut file = SweepFile::from_json(&read(config)?)?;
    if let Some(s) = seed {
        file.seed = s;
    }
    if let Some(t) = trials {
        file.trials = t;
    }
    if let Some(s) = snr_db {
        file.snr_db_list = vec![s];
    }
    let cfg = file.to_config()?;
    let result = sim::run_sweep(&cfg)?;
    let json = serde_json::to_string_pretty(&result).expect("json");
    let csv = sim::csv_string(&result);
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Failure::Input(format!("{}: {e}", dir.display())))?;
        for (name, text) in [("sweep.json", &json), ("sweep.csv", &csv)] {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?;
        }
    }
    if format.json {
        println!("{json}");
    } else if format.csv {
        print!("{csv}");
    } else {
        println!(
            "{:>3} {:>7} {:>10} {:>10} {:>8} {:>8} {:>8}",
            "M", "snr_db", "sum", "baseline", "min", "relay", "outage"
        );
        for p in &result.points {
            println!(
                "{:>3} {:>7.2} {:>10.4} {:>10.4} {:>8.4} {:>8.4} {:>8.4}",
                p.num_relays,
                p.snr_db,
                p.avg_sum_proposed,
                p.avg_sum_baseline,
                p.avg_min,
                p.avg_relay_profit,
                p.outage_frac
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match &cli.command {
        Command::Solve {
            instance,
            opts,
            econ,
            emit_frontier,
            out,
        } => solve(instance, opts, econ.as_deref(), *emit_frontier, out.as_deref()),
        Command::PaperExample { perturb } => paper_example(*perturb),
        Command::Frontier {
            instance,
            opts,
            format,
            out,
        } => frontier(instance, opts, format, out.as_deref()),
        Command::CoreCheck {
            instance,
            opts,
            adversarial,
        } => core_check(instance, opts, *adversarial),
        Command::Sweep {
            config,
            seed,
            trials,
            snr_db,
            out,
            format,
        } => sweep(config, *seed, *trials, *snr_db, out.as_deref(), format),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Infeasible(msg)) => {
            eprintln!("infeasible: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Mismatch) => ExitCode::from(3),
    }
}
