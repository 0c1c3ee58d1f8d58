//! Command-line front end.
//!
//! Exit status: 0 on success, 2 on configuration errors, 1 otherwise.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use noma_forge::beamforming::{optimize_beams, zf_init_all};
use noma_forge::channel::NetworkInstance;
use noma_forge::harness::{self, ExperimentConfig};
use noma_forge::search::{exhaustive_search, greedy_correlation, local_search};
use noma_forge::sic::{rate_report, validate, Scheme, SearchStrategy, SicMatrix};
use noma_forge::{Error, Result};

#[derive(Parser)]
#[command(name = "noma-forge", version, about = "Cluster-free NOMA beamforming experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` override, may be repeated
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    /// Correlation value or comma-separated grid
    #[arg(long)]
    corr: Option<String>,
    /// Comma-separated scheme names
    #[arg(long)]
    schemes: Option<String>,
    #[arg(long)]
    cells: Option<String>,
    /// Users per cell
    #[arg(long)]
    users: Option<String>,
    /// Antennas per BS
    #[arg(long)]
    antennas: Option<String>,
    #[arg(long)]
    rounds: Option<String>,
    #[arg(long = "gnn-depth")]
    gnn_depth: Option<String>,
    /// Embedding size, or comma-separated per-layer sizes
    #[arg(long = "gnn-embed")]
    gnn_embed: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut overrides = Vec::new();
        for s in &self.set {
            let (k, v) = s.split_once('=').ok_or_else(|| Error::Config {
                field: s.clone(),
                message: "expected KEY=VALUE".into(),
            })?;
            overrides.push((k.trim().to_string(), v.trim().to_string()));
        }
        let flags = [
            ("seed", &self.seed),
            ("trials", &self.trials),
            ("corr", &self.corr),
            ("schemes", &self.schemes),
            ("cells", &self.cells),
            ("users", &self.users),
            ("antennas", &self.antennas),
            ("rounds", &self.rounds),
            ("gnn_depth", &self.gnn_depth),
            ("gnn_embed", &self.gnn_embed),
            ("out", &self.out),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                overrides.push((k.to_string(), v.clone()));
            }
        }
        ExperimentConfig::from_sources(self.config.as_deref(), &overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate one channel instance (first value of the correlation grid)
    Gen(ConfigArgs),
    /// Build a scheme on an instance and report its rates
    Eval {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value = "cluster_free")]
        scheme: String,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Optimize beams for a fixed SIC matrix (all-zero when omitted)
    Opt {
        #[arg(long)]
        instance: PathBuf,
        /// JSON file holding a 0/1 matrix
        #[arg(long)]
        sic: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Search a SIC matrix: greedy, local or exhaustive
    Search {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value = "local")]
        strategy: String,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Monte-Carlo sweep over the correlation grid
    Sweep(ConfigArgs),
    /// Overhead versus sum rate of the coordination patterns
    Overhead(ConfigArgs),
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn load_instance(path: &Path) -> Result<NetworkInstance> {
    let inst: NetworkInstance = read_json(path)?;
    inst.validate()?;
    Ok(inst)
}

/// Writes JSON to `out` when given, else to stdout.
fn emit(value: &impl Serialize, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct EvalOutput {
    scheme: String,
    sum_rate: f64,
    iterations: usize,
    achievable_rate: Vec<f64>,
    sic: SicMatrix,
}

#[derive(Serialize)]
struct SearchOutput {
    strategy: String,
    sic: SicMatrix,
    sum_rate: f64,
    candidates_evaluated: usize,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(args) => {
            let cfg = args.load()?;
            let inst = harness::make_instance(&cfg, cfg.corr_grid[0], cfg.base_seed)?;
            emit(&inst, cfg.out.as_deref())
        }
        Command::Eval { instance, scheme, cfg } => {
            let cfg = cfg.load()?;
            let inst = load_instance(&instance)?;
            let scheme: Scheme = scheme.parse().map_err(|m| Error::Config {
                field: "scheme".into(),
                message: m,
            })?;
            let r = harness::evaluate_scheme(&inst, scheme, &cfg)?;
            let report = rate_report(&inst, &r.sic, &r.beams)?;
            emit(
                &EvalOutput {
                    scheme: scheme.to_string(),
                    sum_rate: report.sum_rate,
                    iterations: r.iterations,
                    achievable_rate: report.achievable_rate,
                    sic: r.sic,
                },
                cfg.out.as_deref(),
            )
        }
        Command::Opt { instance, sic, cfg } => {
            let cfg = cfg.load()?;
            let inst = load_instance(&instance)?;
            let sic = match sic {
                Some(p) => read_json(&p)?,
                None => SicMatrix::zeros(inst.num_users()),
            };
            validate(&sic, &inst)?;
            let (beams, trace) = optimize_beams(&inst, &sic, &zf_init_all(&inst), &cfg.optimizer)?;
            #[derive(Serialize)]
            struct OptOutput<'a> {
                sum_rate: f64,
                initial_sum_rate: f64,
                iterations: usize,
                converged: bool,
                beams: &'a noma_forge::sic::BeamformingSolution,
            }
            emit(
                &OptOutput {
                    sum_rate: trace.best_sum_rate,
                    initial_sum_rate: trace.initial_sum_rate,
                    iterations: trace.iterations,
                    converged: trace.converged,
                    beams: &beams,
                },
                cfg.out.as_deref(),
            )
        }
        Command::Search { instance, strategy, cfg } => {
            let cfg = cfg.load()?;
            let inst = load_instance(&instance)?;
            let strategy = match strategy.as_str() {
                "greedy" => SearchStrategy::Greedy,
                "local" => SearchStrategy::GreedyLocal,
                "exhaustive" => SearchStrategy::Exhaustive,
                other => {
                    return Err(Error::Config {
                        field: "strategy".into(),
                        message: format!("unknown strategy `{other}`"),
                    })
                }
            };
            let out = match strategy {
                SearchStrategy::Greedy => {
                    let sic = greedy_correlation(&inst, &cfg.search);
                    let sum_rate = noma_forge::search::evaluate_candidate(&inst, &sic, &cfg.search.inner_opt)?.1;
                    SearchOutput {
                        strategy: "greedy".into(),
                        sic,
                        sum_rate,
                        candidates_evaluated: 1,
                    }
                }
                SearchStrategy::GreedyLocal => {
                    let d0 = greedy_correlation(&inst, &cfg.search);
                    let o = local_search(&inst, &d0, &cfg.search)?;
                    SearchOutput {
                        strategy: "local".into(),
                        sic: o.sic,
                        sum_rate: o.sum_rate,
                        candidates_evaluated: o.candidates_evaluated,
                    }
                }
                SearchStrategy::Exhaustive => {
                    let o = exhaustive_search(&inst, &cfg.search)?;
                    SearchOutput {
                        strategy: "exhaustive".into(),
                        sic: o.sic,
                        sum_rate: o.sum_rate,
                        candidates_evaluated: o.candidates_evaluated,
                    }
                }
            };
            emit(&out, cfg.out.as_deref())
        }
        Command::Sweep(args) => {
            let out = harness::run_sweep(&args.load()?)?;
            eprintln!("wrote {} rows to {}", out.rows.len(), out.csv.display());
            Ok(())
        }
        Command::Overhead(args) => {
            let out = harness::run_overhead(&args.load()?)?;
            eprintln!("wrote {} rows to {}", out.rows.len(), out.csv.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
