//! `crakit` command-line front end.
//!
//! Exit codes: 0 success, 1 infeasible design or failed verification or
//! unsafe simulation, 2 usage, I/O or parse errors.

mod svg;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crakit::certify::{AlphaFunction, CertifyConfig, Policy};
use crakit::design::{self, DesignError, SafetyDesign, SweepConfig};
use crakit::hybrid::{availability, Architecture, CraProfile};
use crakit::sim::{self, Adversary, Scenario};
use crakit::system::CpsSystem;
use crakit::{acc, Exec};

#[derive(Debug, Parser)]
#[command(name = "crakit", version, about = "Safety design for cyber-resilient control architectures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the bundled adaptive cruise control system.
    Acc {
        /// Restrict both speeds to be nonnegative.
        #[arg(long)]
        forward_only: bool,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Search level sets, timings and a recovery policy.
    Design {
        #[command(flatten)]
        target: Target,
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a given recovery policy, searching level sets and timings.
    Verify {
        #[command(flatten)]
        target: Target,
        #[command(flatten)]
        sweep: SweepArgs,
        /// Policy file: `{"version": 1, "policy": {...}}`.
        #[arg(long)]
        policy: PathBuf,
        /// Write the resulting design here when verification succeeds.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate attack cycles for a design.
    Simulate {
        #[arg(long)]
        design: PathBuf,
        #[arg(long, default_value_t = 2)]
        cycles: usize,
        /// `worst`, or a file with one comma-separated input per line.
        #[arg(long, default_value = "worst")]
        adversary: String,
        /// Initial state, comma separated (defaults to the case-study start).
        #[arg(long, value_parser = parse_vector)]
        initial: Option<Vector>,
        /// Epochs per cycle (defaults to the segment total).
        #[arg(long)]
        cycle_epochs: Option<u32>,
        #[arg(long)]
        csv: PathBuf,
        /// Event log, one `t,label` line per transition.
        #[arg(long)]
        events: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Design and simulate every architecture and tabulate the results.
    Compare {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Pin timings to the case-study exposures and hold `c_1` at zero.
        #[arg(long)]
        case_study: bool,
        #[arg(long, default_value_t = 2)]
        cycles: usize,
        #[arg(long, value_parser = parse_vector)]
        initial: Option<Vector>,
    },
}

#[derive(Debug, Args)]
struct Target {
    #[arg(long)]
    system: PathBuf,
    /// bftpp, yolo, dual, proactive, reactive or simplex.
    #[arg(long)]
    cra: Architecture,
    /// Pin a timing parameter, e.g. `N_4=5`.
    #[arg(long = "epochs", value_parser = parse_pin)]
    pins: Vec<(String, u32)>,
    /// Sweep range of a timing parameter, e.g. `N_3=1..40`.
    #[arg(long = "range", value_parser = parse_range)]
    ranges: Vec<(String, u32, u32)>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Largest level constants, comma separated.
    #[arg(long, value_parser = parse_vector)]
    c_max: Option<Vector>,
    /// Level grid steps, comma separated.
    #[arg(long, value_parser = parse_vector)]
    c_step: Option<Vector>,
    /// Total degree of the policy template.
    #[arg(long, default_value_t = 0)]
    degree: u32,
    /// Gain of the linear class-K function.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Bound tolerance of the certifier.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyFile {
    version: u32,
    policy: Policy,
}

#[derive(Debug)]
enum Failure {
    /// Exit 1.
    Negative(String),
    /// Exit 2.
    Usage(String),
}

type Outcome = Result<(), Failure>;

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn parse_pin(s: &str) -> Result<(String, u32), String> {
    let (k, v) = s.split_once('=').ok_or("expected N_j=value")?;
    let v = v.trim().parse().map_err(|e| format!("{v}: {e}"))?;
    Ok((k.trim().to_string(), v))
}

fn parse_range(s: &str) -> Result<(String, u32, u32), String> {
    let (k, v) = s.split_once('=').ok_or("expected N_j=lo..hi")?;
    let (lo, hi) = v.split_once("..").ok_or("expected lo..hi")?;
    let lo = lo.trim().parse().map_err(|e| format!("{lo}: {e}"))?;
    let hi = hi.trim().parse().map_err(|e| format!("{hi}: {e}"))?;
    Ok((k.trim().to_string(), lo, hi))
}

/// Clap treats a bare `Vec` as a repeated argument; the alias keeps a
/// comma-separated vector a single value.
type Vector = Vec<f64>;

fn parse_vector(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t}: {e}")))
        .collect()
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Outcome {
    fs::write(path, text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn load_system(path: &Path) -> Result<CpsSystem, Failure> {
    CpsSystem::from_json(&read(path)?).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn profile(system: &CpsSystem, target: &Target) -> Result<CraProfile, Failure> {
    CraProfile::new(target.cra, system.epoch_seconds(), &target.pins, &target.ranges).map_err(usage)
}

fn sweep_config(args: &SweepArgs) -> Result<SweepConfig, Failure> {
    let certify = CertifyConfig {
        tol: args.tol,
        ..CertifyConfig::default()
    };
    let mut cfg = SweepConfig {
        c_max: args.c_max.clone(),
        c_step: args.c_step.clone(),
        alpha: AlphaFunction::new(args.alpha).map_err(usage)?,
        ..SweepConfig::default()
    }
    .with_certify(certify);
    cfg.synth.degree = args.degree;
    Ok(cfg)
}

fn design_failure(e: DesignError) -> Failure {
    match e {
        DesignError::Infeasible { .. } | DesignError::BudgetExhausted { .. } => Failure::Negative(e.to_string()),
        DesignError::Certify(crakit::certify::CertifyError::PolicyShape { .. })
        | DesignError::Certify(crakit::certify::CertifyError::PolicyNotPolynomial)
        | DesignError::Config(_)
        | DesignError::Parse(_)
        | DesignError::System(_) => Failure::Usage(e.to_string()),
        _ => Failure::Negative(e.to_string()),
    }
}

fn summary(d: &SafetyDesign) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "architecture: {}", d.profile.architecture.title());
    let _ = writeln!(s, "level set: {:?}", d.level_set);
    let _ = writeln!(s, "epochs: {:?}", d.epochs);
    let _ = writeln!(s, "rates: {:?}", d.rates);
    let _ = writeln!(s, "policy: {}", serde_json::to_string(&d.policy).unwrap_or_default());
    let _ = writeln!(s, "level sets evaluated: {}", d.grid_points);
    let _ = write!(s, "minimum margin: {:e}", d.report.min_margin());
    s
}

fn cmd_acc(forward_only: bool, out: Option<PathBuf>) -> Outcome {
    let sys = if forward_only { acc::forward_system() } else { acc::system() };
    let text = sys.to_json();
    match out {
        Some(p) => write(&p, &text),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn finish_design(d: &SafetyDesign, out: Option<&Path>) -> Outcome {
    println!("{}", summary(d));
    if let Some(p) = out {
        write(p, &d.to_json())?;
    }
    if !d.report.holds() {
        let names: Vec<&str> = d.report.failures().map(|c| c.name.as_str()).collect();
        return Err(Failure::Negative(format!("re-verification failed: {}", names.join(", "))));
    }
    Ok(())
}

fn cmd_design(target: Target, sweep: SweepArgs, out: PathBuf) -> Outcome {
    let system = load_system(&target.system)?;
    let profile = profile(&system, &target)?;
    let cfg = sweep_config(&sweep)?;
    let d = design::design_parameters(&system, &profile, &cfg).map_err(design_failure)?;
    finish_design(&d, Some(&out))
}

fn cmd_verify(target: Target, sweep: SweepArgs, policy: PathBuf, out: Option<PathBuf>) -> Outcome {
    let system = load_system(&target.system)?;
    let profile = profile(&system, &target)?;
    let file: PolicyFile =
        serde_json::from_str(&read(&policy)?).map_err(|e| Failure::Usage(format!("{}: {e}", policy.display())))?;
    if file.version != 1 {
        return Err(Failure::Usage(format!("unsupported policy version {}", file.version)));
    }
    let p = file.policy.conform(&system).map_err(usage)?;
    let cfg = sweep_config(&sweep)?;
    let d = design::verify_existing_policy(&system, &profile, &p, &cfg).map_err(design_failure)?;
    finish_design(&d, out.as_deref())
}

fn default_initial(system: &CpsSystem, c: &[f64]) -> Result<Vec<f64>, Failure> {
    let names: Vec<&str> = system.variables().iter().map(String::as_str).collect();
    if names == ["v_l", "v_f", "D"] {
        Ok(acc::initial_state(c))
    } else {
        Err(Failure::Usage("--initial is required for this system".into()))
    }
}

fn load_adversary(spec: &str, m: usize) -> Result<Adversary, Failure> {
    if spec == "worst" {
        return Ok(Adversary::WorstCaseVertex);
    }
    let text = read(Path::new(spec))?;
    let inputs = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let u = parse_vector(l).map_err(|e| Failure::Usage(format!("{spec}:{}: {e}", i + 1)))?;
            if u.len() != m {
                return Err(Failure::Usage(format!("{spec}:{}: expected {m} inputs", i + 1)));
            }
            Ok(u)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Adversary::Sequence { inputs })
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    design_path: PathBuf,
    cycles: usize,
    adversary: String,
    initial: Option<Vector>,
    cycle_epochs: Option<u32>,
    csv: PathBuf,
    events: Option<PathBuf>,
    svg_path: Option<PathBuf>,
) -> Outcome {
    let (d, system) =
        SafetyDesign::from_json(&read(&design_path)?).map_err(|e| Failure::Usage(format!("{}: {e}", design_path.display())))?;
    let x0 = match initial {
        Some(x) => x,
        None => default_initial(&system, &d.level_set)?,
    };
    let mut scenario = Scenario::from_design(&d, x0, cycles);
    scenario.adversary = load_adversary(&adversary, system.input_dim())?;
    scenario.cycle_epochs = cycle_epochs;
    let tr = sim::simulate(&system, &scenario).map_err(usage)?;
    write(&csv, &tr.to_csv(&system))?;
    if let Some(p) = events {
        write(&p, &tr.events_csv())?;
    }
    if let Some(p) = svg_path {
        write(&p, &svg::render(&tr, &system, d.level_set[0], d.profile.epoch_seconds))?;
    }
    println!("samples: {}", tr.samples.len());
    println!("max impact: {:.6}", tr.max_impact());
    println!("min h: {:.6}", tr.min_h());
    let slack = system.level_set_slack(tr.final_state(), &d.level_set);
    println!("final level-set slack: {slack:.6}");
    if tr.crossed {
        return Err(Failure::Negative("safety region crossed".into()));
    }
    Ok(())
}

struct Row {
    arch: Architecture,
    result: Result<(SafetyDesign, f64), String>,
}

fn compare_row(
    system: &CpsSystem,
    arch: Architecture,
    case_study: bool,
    cycles: usize,
    initial: Option<&[f64]>,
) -> Result<(SafetyDesign, f64), String> {
    let certify = CertifyConfig {
        exec: Exec::Sequential,
        ..CertifyConfig::default()
    };
    let (profile, cfg) = if case_study {
        let mut p = acc::case_study_profile(arch);
        p.epoch_seconds = system.epoch_seconds();
        (p, acc::case_study_sweep(system, &certify).map_err(|e| e.to_string())?)
    } else {
        (
            CraProfile::preset(arch, system.epoch_seconds()),
            SweepConfig::default().with_certify(certify),
        )
    };
    let cfg = cfg.with_exec(Exec::Sequential);
    let d = design::design_parameters(system, &profile, &cfg).map_err(|e| e.to_string())?;
    let x0 = match initial {
        Some(x) => x.to_vec(),
        None => default_initial(system, &d.level_set).map_err(|e| match e {
            Failure::Negative(m) | Failure::Usage(m) => m,
        })?,
    };
    let tr = sim::simulate(system, &Scenario::from_design(&d, x0, cycles)).map_err(|e| e.to_string())?;
    if tr.crossed {
        return Err("safety region crossed".into());
    }
    Ok((d, tr.max_impact()))
}

fn percent(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

fn compare_table(rows: &[Row]) -> String {
    let mut s = String::from(
        "| Architecture | Availability (nominal) | Design freedom | Epochs | Level set | Maximum impact |\n\
         |---|---|---|---|---|---|\n",
    );
    for r in rows {
        let _ = match &r.result {
            Ok((d, impact)) => {
                let (on, nominal) = availability(&d.profile, &d.epochs);
                writeln!(
                    s,
                    "| {} | {} ({}) | {} | {:?} | {:?} | {:.4} |",
                    r.arch.title(),
                    percent(on),
                    percent(nominal),
                    r.arch.design_freedom(),
                    d.epochs,
                    d.level_set.iter().map(|c| (c * 1e4).round() / 1e4).collect::<Vec<_>>(),
                    impact
                )
            }
            Err(e) => writeln!(s, "| {} | - | {} | - | - | {} |", r.arch.title(), r.arch.design_freedom(), e),
        };
    }
    s
}

fn cmd_compare(system: PathBuf, out: PathBuf, case_study: bool, cycles: usize, initial: Option<Vector>) -> Outcome {
    let sys = load_system(&system)?;
    if case_study && sys.relative_degree() != 2 {
        return Err(Failure::Usage("--case-study needs a system of relative degree two".into()));
    }
    let results = Exec::default().map(&Architecture::ALL, |&arch| {
        compare_row(&sys, arch, case_study, cycles, initial.as_deref())
    });
    let rows: Vec<Row> = Architecture::ALL
        .iter()
        .zip(results)
        .map(|(&arch, result)| Row { arch, result })
        .collect();
    let table = compare_table(&rows);
    print!("{table}");
    write(&out, &table)
}

fn configure_threads() -> Outcome {
    let Ok(v) = std::env::var("CRAKIT_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Failure::Usage(format!("CRAKIT_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(usage)
}

fn run(cli: Cli) -> Outcome {
    configure_threads()?;
    match cli.command {
        Command::Acc { forward_only, out } => cmd_acc(forward_only, out),
        Command::Design { target, sweep, out } => cmd_design(target, sweep, out),
        Command::Verify {
            target,
            sweep,
            policy,
            out,
        } => cmd_verify(target, sweep, policy, out),
        Command::Simulate {
            design,
            cycles,
            adversary,
            initial,
            cycle_epochs,
            csv,
            events,
            svg,
        } => cmd_simulate(design, cycles, adversary, initial, cycle_epochs, csv, events, svg),
        Command::Compare {
            system,
            out,
            case_study,
            cycles,
            initial,
        } => cmd_compare(system, out, case_study, cycles, initial),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Negative(m)) => {
            eprintln!("crakit: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("crakit: {m}");
            ExitCode::from(2)
        }
    }
}
