//! Single-binary front end for the demand-response engine.
//!
//! Subcommands: `gen-users` writes a validated scenario file, `simulate`
//! runs the lower layer once at fixed prices, `optimize` runs the swarm over
//! the price box and reports the best schedule. Offline by default: the rule
//! policy needs no network and LLM paths replay recorded fixtures.
//!
//! Exit codes: 0 success, 2 usage or validation failure, 3 external-service
//! failure in strict mode.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use evdr_core::agents::{DecisionPolicy, LlmPolicy, LlmPolicyConfig, RulePolicy};
use evdr_core::domain::{
    load_scenario, save_scenario, subseed, validate_scenario, FixedLoadProfile, PolicyKind,
    PriceBounds, PriceSchedule, ScenarioConfig, TimeGrid, WholesaleSchedule,
};
use evdr_core::gateway::{FixtureMode, GatewayConfig, LlmGateway};
use evdr_core::optimizer::{grid_search, pso_optimize, SwarmConfig};
use evdr_core::profilegen::{generate_llm_users, generate_synthetic_users, PersonaPromptConfig};
use evdr_core::simulation::{make_objective, result_document, write_demand_csv};

const DEFAULT_PRICE_BOUNDS: (f64, f64) = (0.09, 0.22);
const DEFAULT_WHOLESALE: f64 = 0.07;
const DEFAULT_FIXED_LOAD_KW: f64 = 120.0;
const DEFAULT_TEMPERATURE_C: f64 = 18.0;

#[derive(Parser)]
#[command(name = "evdr", version, about = "EV demand-response simulation and price optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a user population and write a validated scenario file.
    GenUsers(GenUsersArgs),
    /// Run every agent once against a fixed price schedule.
    Simulate(SimulateArgs),
    /// Optimize the retail price schedule for aggregator profit.
    Optimize(OptimizeArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyArg {
    Rule,
    Llm,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FixturesArg {
    Off,
    Record,
    Replay,
}

impl From<FixturesArg> for FixtureMode {
    fn from(value: FixturesArg) -> Self {
        match value {
            FixturesArg::Off => FixtureMode::Off,
            FixturesArg::Record => FixtureMode::Record,
            FixturesArg::Replay => FixtureMode::Replay,
        }
    }
}

#[derive(Args)]
struct GatewayArgs {
    /// Fixture handling for LLM calls.
    #[arg(long, value_enum, default_value = "replay")]
    fixtures: FixturesArg,
    /// Directory holding recorded fixtures.
    #[arg(long, default_value = "fixtures")]
    fixtures_dir: PathBuf,
}

impl GatewayArgs {
    fn build(&self) -> LlmGateway {
        LlmGateway::new(GatewayConfig::from_env(
            self.fixtures.into(),
            Some(self.fixtures_dir.clone()),
        ))
    }
}

fn env_model() -> String {
    std::env::var("LLM_MODEL").unwrap_or_else(|_| "gpt-4o-mini".into())
}

#[derive(Args)]
struct GenUsersArgs {
    /// Number of users to generate.
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Master seed; the population stream is derived from it.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output scenario file.
    #[arg(long)]
    out: PathBuf,
    /// Generate personas through the LLM gateway instead of synthetically.
    #[arg(long)]
    llm: bool,
    /// Fail (exit 3) instead of degrading to synthetic users when the
    /// gateway is unreachable.
    #[arg(long)]
    strict: bool,
    /// Decision policy recorded in the scenario.
    #[arg(long, value_enum, default_value = "rule")]
    policy: PolicyArg,
    #[command(flatten)]
    gateway: GatewayArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario file produced by gen-users.
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated retail prices (one per slot), or a single flat
    /// price. Defaults to a flat schedule at the lower bound.
    #[arg(long)]
    prices: Option<String>,
    /// Override the scenario's decision policy.
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
    /// Output directory for demand.csv and decisions.json.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for per-user decisions (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    gateway: GatewayArgs,
}

#[derive(Args)]
struct OptimizeArgs {
    /// Scenario file produced by gen-users.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 100)]
    iterations: usize,
    #[arg(long, default_value_t = 30)]
    swarm_size: usize,
    /// Master seed for the swarm stream; defaults to the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the scenario's decision policy.
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
    /// Output directory for the schedule, history, demand, and report files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Also run an exhaustive oracle and report the gap.
    #[arg(long, value_enum)]
    oracle: Option<OracleArg>,
    /// Lattice points per dimension for the grid oracle.
    #[arg(long, default_value_t = 11)]
    steps: usize,
    #[command(flatten)]
    gateway: GatewayArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OracleArg {
    Grid,
}

/// An error carried to the process boundary with its exit code.
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn service(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }

    fn io(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::GenUsers(args) => cmd_gen_users(args),
        Command::Simulate(args) => run_with_jobs(args.jobs, || cmd_simulate(&args)),
        Command::Optimize(args) => run_with_jobs(args.jobs, || cmd_optimize(&args)),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}

/// Runs `body` inside a rayon pool of the requested size so every parallel
/// stage (decisions, swarm evaluations) honors --jobs.
fn run_with_jobs<T>(jobs: Option<usize>, body: impl FnOnce() -> T + Send) -> T
where
    T: Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .expect("rayon pool construction cannot fail with these settings");
    pool.install(body)
}

fn cmd_gen_users(args: GenUsersArgs) -> Result<(), CliError> {
    let grid = TimeGrid::default_dr_window();
    let bounds = PriceBounds::new(DEFAULT_PRICE_BOUNDS.0, DEFAULT_PRICE_BOUNDS.1);
    let population_seed = subseed(args.seed, "population");

    let users = if args.llm {
        let gateway = args.gateway.build();
        let persona_cfg =
            PersonaPromptConfig { model: env_model(), ..PersonaPromptConfig::default() };
        let (users, report) =
            generate_llm_users(args.n, &grid, &bounds, population_seed, &gateway, &persona_cfg);
        if let Some(reason) = &report.gateway_error {
            if args.strict {
                return Err(CliError::service(format!("persona generation failed: {reason}")));
            }
            eprintln!("warning: gateway unavailable ({reason}); generated synthetic users instead");
        }
        if report.repaired > 0 || report.dropped > 0 || report.synthetic_fill > 0 {
            eprintln!(
                "personas: {} accepted, {} repaired, {} dropped, {} synthetic fill",
                report.accepted, report.repaired, report.dropped, report.synthetic_fill
            );
        }
        users
    } else {
        generate_synthetic_users(args.n, &grid, &bounds, population_seed)
    };

    let scenario = ScenarioConfig {
        grid,
        price_bounds: bounds,
        wholesale: WholesaleSchedule::flat(DEFAULT_WHOLESALE, grid.slot_count),
        fixed_load: FixedLoadProfile::flat(DEFAULT_FIXED_LOAD_KW, grid.slot_count),
        users,
        temperature_c: DEFAULT_TEMPERATURE_C,
        seed: args.seed,
        policy_kind: match args.policy {
            PolicyArg::Rule => PolicyKind::Rule,
            PolicyArg::Llm => PolicyKind::Llm,
        },
    };
    let scenario = validate_scenario(scenario)
        .map_err(|e| CliError::usage(format!("generated scenario failed validation:\n{e}")))?;
    save_scenario(&args.out, &scenario)
        .map_err(|e| CliError::io(format!("cannot write scenario: {e}")))?;
    println!("wrote {} users to {}", scenario.user_count(), args.out.display());
    Ok(())
}

fn load(config: &Path) -> Result<ScenarioConfig, CliError> {
    load_scenario(config).map_err(|e| CliError::usage(e.to_string()))
}

fn parse_prices(spec: Option<&str>, scenario: &ScenarioConfig) -> Result<PriceSchedule, CliError> {
    let bounds = scenario.price_bounds;
    let h = scenario.grid.slot_count;
    let schedule = match spec {
        None => PriceSchedule::flat(bounds.min, h, bounds),
        Some(text) => {
            let values: Result<Vec<f64>, _> =
                text.split(',').map(|part| part.trim().parse::<f64>()).collect();
            let values =
                values.map_err(|e| CliError::usage(format!("malformed --prices: {e}")))?;
            if values.len() == 1 {
                PriceSchedule::flat(values[0], h, bounds)
            } else {
                PriceSchedule::new(values, bounds)
            }
        }
    };
    schedule
        .check_against(&scenario.grid)
        .map_err(|e| CliError::usage(format!("invalid --prices:\n{e}")))?;
    Ok(schedule)
}

fn build_policy(
    choice: Option<PolicyArg>,
    scenario: &ScenarioConfig,
    gateway_args: &GatewayArgs,
) -> Arc<dyn DecisionPolicy> {
    let kind = match choice {
        Some(PolicyArg::Rule) => PolicyKind::Rule,
        Some(PolicyArg::Llm) => PolicyKind::Llm,
        None => scenario.policy_kind,
    };
    match kind {
        PolicyKind::Rule => Arc::new(RulePolicy::default()),
        PolicyKind::Llm => {
            let gateway = Arc::new(gateway_args.build());
            let cfg = LlmPolicyConfig { model: env_model(), ..LlmPolicyConfig::default() };
            Arc::new(LlmPolicy::new(gateway, cfg))
        }
    }
}

fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text =
        serde_json::to_string_pretty(value).expect("JSON document serialization is total");
    text.push('\n');
    write_text(path, &text)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let scenario = load(&args.config)?;
    let schedule = parse_prices(args.prices.as_deref(), &scenario)?;
    let policy = build_policy(args.policy, &scenario, &args.gateway);
    let result = evdr_core::simulation::simulate_demand(&schedule, &scenario, policy.as_ref());

    ensure_out_dir(&args.out)?;
    let mut csv = Vec::new();
    write_demand_csv(&mut csv, &schedule, &scenario, &result.demand)
        .expect("writing to a Vec cannot fail");
    write_text(&args.out.join("demand.csv"), &String::from_utf8(csv).expect("CSV is UTF-8"))?;
    write_json(&args.out.join("decisions.json"), &result_document(&schedule, &scenario, &result))?;

    println!(
        "profit ${:.2} (revenue ${:.2}, wholesale cost ${:.2}), {} users, {} fallbacks",
        result.profit,
        result.revenue,
        result.wholesale_cost,
        scenario.user_count(),
        result.fallback_count
    );
    println!("wrote {}", args.out.join("demand.csv").display());
    println!("wrote {}", args.out.join("decisions.json").display());
    Ok(())
}

fn cmd_optimize(args: &OptimizeArgs) -> Result<(), CliError> {
    let scenario = load(&args.config)?;
    let bounds = scenario.price_bounds;
    let h = scenario.grid.slot_count;
    let master_seed = args.seed.unwrap_or(scenario.seed);
    let policy = build_policy(args.policy, &scenario, &args.gateway);
    let objective = make_objective(scenario.clone(), policy);

    let swarm = SwarmConfig {
        swarm_size: args.swarm_size,
        iterations: args.iterations,
        seed: subseed(master_seed, "swarm"),
        ..SwarmConfig::default()
    };
    let run = pso_optimize(|s| objective.value(s), &bounds, h, &swarm)
        .map_err(|e| CliError::usage(e.to_string()))?;
    let pso_evaluations = objective.evaluations();

    let oracle = match args.oracle {
        Some(OracleArg::Grid) => {
            let result = grid_search(|s| objective.value(s), &bounds, h, args.steps)
                .map_err(|e| CliError::usage(e.to_string()))?;
            Some(result)
        }
        None => None,
    };

    ensure_out_dir(&args.out)?;
    write_json(
        &args.out.join("best_schedule.json"),
        &serde_json::json!({
            "prices": run.best_schedule.prices,
            "price_bounds": { "min": bounds.min, "max": bounds.max },
            "profit": run.best_profit,
        }),
    )?;

    let mut history_csv = String::from("iteration,best_profit,mean_profit\n");
    for (i, (best, mean)) in run.history.iter().zip(&run.mean_history).enumerate() {
        history_csv.push_str(&format!("{},{},{}\n", i + 1, best, mean));
    }
    write_text(&args.out.join("history.csv"), &history_csv)?;

    let final_result = objective.simulate(&run.best_schedule);
    let mut csv = Vec::new();
    write_demand_csv(&mut csv, &run.best_schedule, objective.scenario(), &final_result.demand)
        .expect("writing to a Vec cannot fail");
    write_text(&args.out.join("demand.csv"), &String::from_utf8(csv).expect("CSV is UTF-8"))?;

    let oracle_json = oracle.as_ref().map(|g| {
        serde_json::json!({
            "method": "grid",
            "steps_per_dim": args.steps,
            "best_profit": g.best_profit,
            "best_prices": g.best_schedule.prices,
            "evaluations": g.evaluations,
            "pso_minus_oracle": run.best_profit - g.best_profit,
        })
    });
    write_json(
        &args.out.join("report.json"),
        &serde_json::json!({
            "best_profit": run.best_profit,
            "iterations": args.iterations,
            "swarm_size": args.swarm_size,
            "seed": master_seed,
            "evaluations": pso_evaluations,
            "bound_violations": run.bound_violations,
            "fallback_count": final_result.fallback_count,
            "oracle": oracle_json,
        }),
    )?;

    println!(
        "best profit ${:.2} after {} iterations ({} evaluations)",
        run.best_profit, args.iterations, pso_evaluations
    );
    if let Some(g) = &oracle {
        println!(
            "grid oracle ${:.2} over {} points; pso - oracle = ${:+.4}",
            g.best_profit,
            g.evaluations,
            run.best_profit - g.best_profit
        );
    }
    for name in ["best_schedule.json", "history.csv", "demand.csv", "report.json"] {
        println!("wrote {}", args.out.join(name).display());
    }
    Ok(())
}
