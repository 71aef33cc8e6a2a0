//! `coe`: benchmark-driven expert routing from recorded scores to a live gateway.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use coe_core::evaluator::scenario_run_with_params;
use coe_core::labeler::Level;
use coe_core::router::{FeaturizerSpec, TrainConfig};
use coe_core::{
    build_labels, compute_leaderboard, diversity_report, emit_report, load_leaderboard, load_matrix, oracle_bounds,
    read_dataset, replay, save_leaderboard, save_matrix, save_params, synthetic, train, write_dataset, Policy,
    ReportFormat,
};
use coe_gateway::{MockExpert, MockExpertConfig, RouterSource, ServeConfig};

#[derive(Parser)]
#[command(name = "coe", version, about = "Route queries to the expert models that benchmark best on them")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-subject and overall mean score of every model.
    Leaderboard {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Derive a router training set from a correctness matrix.
    Labels {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long, default_value = "query")]
        level: Level,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a router on a labeled dataset.
    Train(TrainArgs),
    /// Replay a routing policy over recorded scores.
    Eval(EvalArgs),
    /// Label and train on one matrix, evaluate on another.
    Scenario {
        #[arg(long)]
        train_matrix: PathBuf,
        #[arg(long)]
        test_matrix: PathBuf,
        #[arg(long)]
        level: Level,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Structured)]
        format: Format,
        /// Also write the trained router here.
        #[arg(long)]
        params_out: Option<PathBuf>,
    },
    /// Print the query, subject and single-model upper bounds.
    Oracle {
        #[arg(long)]
        matrix: PathBuf,
    },
    /// Per-model win share and dominance, as JSON on stdout.
    Diversity {
        #[arg(long)]
        matrix: PathBuf,
    },
    /// Run the routing gateway.
    Serve(ServeArgs),
    /// Run a stand-in expert that echoes its prompt.
    MockExpert {
        #[arg(long)]
        name: String,
        #[arg(long, default_value = "127.0.0.1:0")]
        addr: String,
        /// Answer every generation request with HTTP 500.
        #[arg(long)]
        fail: bool,
        /// Fixed reply instead of the echo.
        #[arg(long)]
        output: Option<String>,
        #[arg(long, default_value_t = 0)]
        delay_ms: u64,
    },
    /// Write a synthetic correctness matrix.
    Synth {
        #[arg(long, value_enum)]
        kind: SynthKind,
        #[arg(long, default_value_t = 100)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// For `drift`: where to write the shifted test matrix.
        #[arg(long)]
        test_out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = FeaturizerSpec::default().dimension)]
    dim: usize,
    #[arg(long, default_value_t = FeaturizerSpec::default().seed)]
    hash_seed: u64,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    lr: f64,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    batch_size: usize,
    #[arg(long, default_value_t = TrainConfig::default().l2_penalty)]
    l2: f64,
    #[arg(long, default_value_t = TrainConfig::default().seed)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(group(ArgGroup::new("policy_source").required(true).args(["router", "subject_router", "policy"])))]
struct EvalArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    router: Option<PathBuf>,
    #[arg(long, requires = "leaderboard")]
    subject_router: Option<PathBuf>,
    #[arg(long, requires = "subject_router")]
    leaderboard: Option<PathBuf>,
    /// fixed:<model>, best-single, query-oracle or subject-oracle.
    #[arg(long)]
    policy: Option<PolicyArg>,
    #[arg(long)]
    report: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Structured)]
    format: Format,
}

#[derive(Args)]
#[command(group(ArgGroup::new("router_source").required(true).args(["router", "subject_router"])))]
struct ServeArgs {
    #[arg(long)]
    router: Option<PathBuf>,
    #[arg(long, requires = "leaderboard")]
    subject_router: Option<PathBuf>,
    #[arg(long, requires = "subject_router")]
    leaderboard: Option<PathBuf>,
    #[arg(long)]
    experts: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: String,
    #[arg(long, default_value_t = 5000)]
    health_ttl_ms: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Structured,
    Table,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Structured => ReportFormat::Structured,
            Format::Table => ReportFormat::Table,
        }
    }
}

#[derive(Clone)]
enum PolicyArg {
    Fixed(String),
    BestSingle,
    QueryOracle,
    SubjectOracle,
}

impl std::str::FromStr for PolicyArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "best-single" => Ok(PolicyArg::BestSingle),
            "query-oracle" => Ok(PolicyArg::QueryOracle),
            "subject-oracle" => Ok(PolicyArg::SubjectOracle),
            _ => match s.strip_prefix("fixed:") {
                Some(name) if !name.is_empty() => Ok(PolicyArg::Fixed(name.to_string())),
                _ => Err("expected fixed:<model>, best-single, query-oracle or subject-oracle".into()),
            },
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    /// Disjoint per-class vocabularies, one winning model per class.
    Keywords,
    /// Train/test pair whose vocabulary shifts between the two.
    Drift,
}

fn eval(args: EvalArgs) -> Result<()> {
    let m = load_matrix(&args.matrix)?;
    let report = if let Some(path) = &args.router {
        let params = coe_core::load_params(path)?;
        replay(&m, Policy::Router(&params))?
    } else if let (Some(sr), Some(lb)) = (&args.subject_router, &args.leaderboard) {
        let subject_params = coe_core::load_params(sr)?;
        let leaderboard = load_leaderboard(lb)?;
        replay(
            &m,
            Policy::TwoStage {
                subject_params: &subject_params,
                leaderboard: &leaderboard,
            },
        )?
    } else {
        let policy = match args.policy.as_ref().context("no policy given")? {
            PolicyArg::Fixed(name) => Policy::Fixed(name),
            PolicyArg::BestSingle => Policy::BestSingle,
            PolicyArg::QueryOracle => Policy::QueryOracle,
            PolicyArg::SubjectOracle => Policy::SubjectOracle,
        };
        replay(&m, policy)?
    };
    emit_report(&report, &args.report, args.format.into())?;
    eprintln!("{}: accuracy {:.4} on {} queries", report.policy, report.accuracy, m.len());
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    let router = match (args.router, args.subject_router, args.leaderboard) {
        (Some(params), None, _) => RouterSource::Direct { params },
        (None, Some(subject_params), Some(leaderboard)) => RouterSource::TwoStage {
            subject_params,
            leaderboard,
        },
        _ => bail!("give either --router, or --subject-router with --leaderboard"),
    };
    let mut config = ServeConfig::new(args.addr, args.experts, router);
    config.health_ttl = Duration::from_millis(args.health_ttl_ms);
    runtime()?.block_on(coe_gateway::serve(config))?;
    Ok(())
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting async runtime")
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Leaderboard { matrix, out } => {
            let m = load_matrix(&matrix)?;
            save_leaderboard(&compute_leaderboard(&m), &out)?;
            eprintln!("leaderboard for {} models over {} subjects", m.num_models(), m.subjects().len());
        }
        Command::Labels { matrix, level, out } => {
            let m = load_matrix(&matrix)?;
            let d = build_labels(&m, level);
            write_dataset(&d, &out)?;
            eprintln!("{} {}-level examples", d.examples.len(), level);
        }
        Command::Train(a) => {
            let d = read_dataset(&a.dataset)?.restrict_to_model_set();
            let cfg = TrainConfig {
                epochs: a.epochs,
                learning_rate: a.lr,
                batch_size: a.batch_size,
                seed: a.seed,
                l2_penalty: a.l2,
            };
            let params = train(&d, FeaturizerSpec::new(a.dim, a.hash_seed), &cfg)?;
            save_params(&params, &a.out)?;
            eprintln!(
                "trained on {} examples, labels {:?}, final loss {:.6}",
                d.examples.len(),
                params.labels,
                params.meta.final_loss
            );
        }
        Command::Eval(a) => eval(a)?,
        Command::Scenario {
            train_matrix,
            test_matrix,
            level,
            report,
            format,
            params_out,
        } => {
            let train = load_matrix(&train_matrix)?;
            let test = load_matrix(&test_matrix)?;
            let (r, params) =
                scenario_run_with_params(&train, &test, level, FeaturizerSpec::default(), &TrainConfig::default())?;
            emit_report(&r, &report, format.into())?;
            if let Some(path) = params_out {
                save_params(&params, path)?;
            }
            eprintln!("{}: accuracy {:.4}", r.policy, r.accuracy);
        }
        Command::Oracle { matrix } => {
            let b = oracle_bounds(&load_matrix(&matrix)?);
            println!(
                "query {:.4} / subject {:.4} / single {:.4}",
                b.query_oracle_acc, b.subject_oracle_acc, b.best_single_acc
            );
        }
        Command::Diversity { matrix } => {
            let r = diversity_report(&load_matrix(&matrix)?);
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
        Command::Serve(a) => serve(a)?,
        Command::MockExpert {
            name,
            addr,
            fail,
            output,
            delay_ms,
        } => {
            let config = MockExpertConfig {
                output,
                fail,
                delay: Duration::from_millis(delay_ms),
                ..MockExpertConfig::named(name)
            };
            runtime()?.block_on(async {
                let mock = MockExpert::spawn(config, &addr)
                    .await
                    .with_context(|| format!("binding {addr}"))?;
                // stdout carries the bound address so scripts can pick up port 0
                println!("{}", mock.url());
                eprintln!("mock expert {} listening on {}", mock.name(), mock.addr());
                mock.run_until_ctrl_c().await;
                anyhow::Ok(())
            })?;
        }
        Command::Synth {
            kind,
            size,
            seed,
            out,
            test_out,
        } => match kind {
            SynthKind::Keywords => save_matrix(&synthetic::keyword_corpus(4, size, seed), &out)?,
            SynthKind::Drift => {
                let Some(test_out) = test_out else {
                    bail!("--kind drift needs --test-out");
                };
                let (train, test) = synthetic::drift_pair(size, seed);
                save_matrix(&train, &out)?;
                save_matrix(&test, &test_out)?;
            }
        },
    }
    Ok(())
}

/// The cause chain on one line, skipping causes already spelled out by
/// the message above them.
fn one_line(e: &anyhow::Error) -> String {
    let mut line = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !line.contains(&msg) {
            if !line.is_empty() {
                line.push_str(": ");
            }
            line.push_str(&msg);
        }
    }
    line
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::FAILURE
        }
    }
}
