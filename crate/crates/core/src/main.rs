use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use firedispatch::costs::{build_cost_table, build_cost_table_in_mode, write_cost_csv};
use firedispatch::experiment::{run_experiment, write_report, ExperimentSpec, Method};
use firedispatch::heuristics::{osi_policy, osia_policy_with, write_osia_diagnostics, OsiaConfig};
use firedispatch::mdp::{
    closest_first_policy, evaluate_policy, flar, policy_iteration, write_evaluation_csv,
    StateSpace,
};
use firedispatch::seeds;
use firedispatch::sim::{simulate_replications, write_sim_csv};
use firedispatch::validate::validate_instance;
use firedispatch::{generate_grid_graph, generate_instance, Error, Instance, Policy};

const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;

#[derive(Parser)]
#[command(name = "firedispatch", version, about = "Two-truck dispatching with Erlang travel times")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct Tuning {
    /// OSIA horizon T (default 10/μ)
    #[arg(long = "osia-T")]
    osia_t: Option<f64>,
    /// OSIA relative tolerance
    #[arg(long = "osia-eps")]
    osia_eps: Option<f64>,
    /// Largest state space for exact methods
    #[arg(long = "state-cap")]
    state_cap: Option<usize>,
}

impl Tuning {
    fn osia(&self, inst: Option<&Instance>) -> OsiaConfig {
        let mut cfg = inst.map_or_else(OsiaConfig::default, OsiaConfig::for_instance);
        if let Some(t) = self.osia_t {
            cfg.horizon = t;
        }
        if let Some(e) = self.osia_eps {
            cfg.epsilon = e;
        }
        cfg
    }

    fn cap(&self) -> usize {
        self.state_cap
            .unwrap_or(firedispatch::experiment::DEFAULT_STATE_CAP)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random instance file
    Gen {
        /// Grid side length
        #[arg(long, short = 'd', default_value_t = 6)]
        d: usize,
        /// Number of single-truck stations
        #[arg(long = "stations", short = 'I', default_value_t = 4)]
        stations: usize,
        #[arg(long, default_value_t = 0.1)]
        rho: f64,
        #[arg(long, default_value_t = 0.6)]
        gamma: f64,
        /// Fraction of lattice edges to remove (default: uniform on [0.4, 1) from the seed)
        #[arg(long)]
        sparseness: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        correlated: bool,
        /// Output file (default: stdout)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump the cost table of an instance in both correlation modes
    Cost {
        instance: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute and evaluate a policy
    Solve {
        instance: PathBuf,
        #[arg(long, default_value = "opt")]
        method: Method,
        /// Use correlated travel times regardless of the instance flag
        #[arg(long)]
        correlated: bool,
        /// Directory for policy.csv and evaluation.csv
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Simulate a policy and report the empirical fraction of late arrivals
    Simulate {
        instance: PathBuf,
        #[arg(long, default_value = "cf")]
        method: Method,
        #[arg(long, default_value_t = 1_000_000)]
        incidents: u64,
        #[arg(long, default_value_t = 1)]
        replications: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        correlated: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Run a batch experiment described by a JSON spec
    Experiment {
        spec: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (overrides the spec)
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Check invariants and oracles on an instance
    Validate {
        instance: PathBuf,
        #[arg(long)]
        correlated: bool,
        #[command(flatten)]
        tuning: Tuning,
    },
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn load(path: &Path, correlated: bool) -> Result<Instance, Error> {
    let inst = Instance::load(path)?;
    Ok(if correlated { inst.with_correlated(true) } else { inst })
}

fn check_cap(inst: &Instance, cap: usize, method: Method) -> Result<(), Error> {
    let states = StateSpace::size_of(inst.capacities());
    if matches!(method, Method::Opt | Method::Osi) && states > cap {
        return Err(Error::InvalidArgument(format!(
            "{method} needs {states} states, above the cap of {cap}"
        )));
    }
    Ok(())
}

/// Builds the policy for `method`; returns OSIA diagnostics when relevant.
fn policy_for(
    inst: &Instance,
    method: Method,
    tuning: &Tuning,
) -> Result<(Policy, usize, Option<Vec<firedispatch::heuristics::OsiaEstimate>>), Error> {
    check_cap(inst, tuning.cap(), method)?;
    let costs = build_cost_table(inst);
    let cf = closest_first_policy(inst);
    Ok(match method {
        Method::Cf => (cf, 0, None),
        Method::Opt => {
            let out = policy_iteration(inst, &costs, &cf)?;
            (out.policy, out.iterations, None)
        }
        Method::Osi => {
            let cf_eval = evaluate_policy(inst, &costs, &cf)?;
            (osi_policy(inst, &costs, &cf_eval)?, 1, None)
        }
        Method::Osia => {
            let (p, est) = osia_policy_with(inst, &costs, &tuning.osia(Some(inst)))?;
            (p, 1, Some(est))
        }
    })
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Gen {
            d,
            stations,
            rho,
            gamma,
            sparseness,
            seed,
            correlated,
            out,
        } => {
            let s = sparseness.unwrap_or_else(|| {
                0.4 + 0.6 * seeds::unit_interval(seeds::split(seed, seeds::STREAM_SPARSENESS))
            });
            let graph = generate_grid_graph(d, s, seeds::split(seed, seeds::STREAM_GRAPH))?;
            let inst = generate_instance(
                &graph,
                stations,
                rho,
                gamma,
                correlated,
                seeds::split(seed, seeds::STREAM_INSTANCE),
            )?;
            output(out.as_deref())?.write_all(inst.to_json().as_bytes())?;
        }
        Command::Cost { instance, out } => {
            let inst = Instance::load(&instance)?;
            let uc = build_cost_table_in_mode(&inst, false);
            let co = build_cost_table_in_mode(&inst, true);
            write_cost_csv(output(out.as_deref())?, &uc, &co)?;
        }
        Command::Solve {
            instance,
            method,
            correlated,
            out,
            tuning,
        } => {
            let inst = load(&instance, correlated)?;
            let (policy, iterations, diagnostics) = policy_for(&inst, method, &tuning)?;
            let costs = build_cost_table(&inst);
            let eval = evaluate_policy(&inst, &costs, &policy)?;
            let fl = flar(&eval, &inst)?;
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                policy.write_csv(File::create(dir.join("policy.csv"))?)?;
                write_evaluation_csv(File::create(dir.join("evaluation.csv"))?, &eval, fl, iterations)?;
                if let Some(est) = diagnostics {
                    write_osia_diagnostics(File::create(dir.join("osia_diagnostics.csv"))?, &est)?;
                }
            }
            write_evaluation_csv(io::stdout().lock(), &eval, fl, iterations)?;
        }
        Command::Simulate {
            instance,
            method,
            incidents,
            replications,
            seed,
            correlated,
            out,
            tuning,
        } => {
            let inst = load(&instance, correlated)?;
            let (policy, _, _) = policy_for(&inst, method, &tuning)?;
            let results = simulate_replications(&inst, &policy, incidents, seed, replications.max(1))?;
            write_sim_csv(output(out.as_deref())?, &results)?;
        }
        Command::Experiment {
            spec,
            seed,
            out,
            tuning,
        } => {
            let mut spec = ExperimentSpec::load(&spec)?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            if let Some(t) = tuning.osia_t {
                spec.osia.horizon = t;
            }
            if let Some(e) = tuning.osia_eps {
                spec.osia.epsilon = e;
            }
            if let Some(c) = tuning.state_cap {
                spec.state_cap = c;
            }
            let dir = out
                .or_else(|| spec.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("."));
            let report = run_experiment(&spec)?;
            write_report(&dir, &report)?;
            eprintln!(
                "wrote {} rows to {}",
                report.rows.len(),
                dir.join("rows.csv").display()
            );
        }
        Command::Validate {
            instance,
            correlated,
            tuning,
        } => {
            let inst = load(&instance, correlated)?;
            let report = validate_instance(&inst, &tuning.osia(Some(&inst)), tuning.cap());
            print!("{report}");
            if !report.passed() {
                return Ok(EXIT_VALIDATION);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::InvalidInstance { .. } | Error::MalformedGraph(_) | Error::Json(_) => {
                    EXIT_VALIDATION
                }
                _ => EXIT_USAGE,
            };
            ExitCode::from(code)
        }
    }
}
