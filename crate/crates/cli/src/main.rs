//! `geocache` command line driver.
//!
//! Output files go to `$GEOCACHE_OUT` (default: the current directory). `$GEOCACHE_THREADS`
//! sets the worker pool size used for policy runs and sweep points.

use std::fs;
use std::io::Read as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use geocache_core::assignment::{optimal_offline, ClearingOptions, PriceRule, SolveOptions};
use geocache_core::experiment::{run_experiment, sweep, sweep_csv, Scenario, SweepParam};
use geocache_core::io::{read_tau, write_placement, write_trace};
use geocache_core::partition::enumerate_partitions;
use geocache_core::sim::{generate_placement, generate_trace};
use geocache_core::{Error, PolicyKind};

#[derive(Parser)]
#[command(name = "geocache", version, about = "Chunk-level caching for geo-distributed erasure-coded storage")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random chunk placement for a scenario.
    GenPlacement {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Output path, `-` for stdout [default: $GEOCACHE_OUT/placement.txt].
        #[arg(short, long)]
        output: Option<String>,
    },
    /// Write a request trace for a scenario.
    GenTrace {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Output path, `-` for stdout [default: $GEOCACHE_OUT/trace.txt].
        #[arg(short, long)]
        output: Option<String>,
    },
    /// Run policies on one scenario; prints the summary and writes the per-request log.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Per-request CSV path, `-` to skip [default: $GEOCACHE_OUT/requests.csv].
        #[arg(long)]
        log: Option<String>,
        /// Add the decision wall time column to the per-request CSV (not reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Run one scenario per parameter value; prints a CSV table.
    Sweep {
        /// One of C, K, M, tail-index, failure.
        parameter: String,
        /// Values, comma separated. Failure values are `none` or `node:server`.
        #[arg(value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Output path, `-` for stdout only [default: $GEOCACHE_OUT/sweep.csv].
        #[arg(short, long)]
        output: Option<String>,
    },
    /// Solve a valuation matrix (one row tau_0..tau_K per item) for capacity C.
    Solve {
        /// Valuation file, `-` for stdin.
        input: String,
        #[arg(short = 'C', long)]
        capacity: usize,
        #[arg(long, value_enum, default_value_t = RuleArg::MinimalRaise)]
        price_rule: RuleArg,
        /// Price increment of the marginal-bid rule.
        #[arg(long, default_value_t = 1.0)]
        bid_unit: f64,
        /// Round budget per partition.
        #[arg(long)]
        max_rounds: Option<usize>,
        /// Refuse when the partition count bound exceeds this.
        #[arg(long)]
        partition_limit: Option<u128>,
    },
    /// List the cache partitions for capacity C and code width K.
    Partitions {
        #[arg(short = 'C', long)]
        capacity: usize,
        #[arg(short = 'K', long)]
        k: usize,
        /// Number of items [default: unbounded].
        #[arg(short = 'M', long)]
        items: Option<usize>,
        /// Print only the number of partitions.
        #[arg(long)]
        count: bool,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario TOML file; defaults apply to anything it leaves out.
    #[arg(short, long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Cache capacity in chunks (system.capacity).
    #[arg(short = 'C', long)]
    capacity: Option<usize>,
    /// Data chunks per item (system.k_data).
    #[arg(short = 'K', long)]
    k: Option<usize>,
    /// Number of items (system.n_items).
    #[arg(short = 'M', long)]
    items: Option<usize>,
    /// Zipf exponent (workload.tail_index).
    #[arg(long)]
    tail_index: Option<f64>,
    /// Trace length (workload.n_requests).
    #[arg(long)]
    requests: Option<usize>,
    /// Latency preset (latency.profile).
    #[arg(long)]
    profile: Option<String>,
    /// Failed server as `node:server` (failure.server).
    #[arg(long)]
    failed_server: Option<String>,
    /// Any scenario key, e.g. `--set policy.decay_ratio=0.9`. Applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    /// Policies to run, comma separated [default: policy.policies].
    #[arg(long, value_delimiter = ',')]
    policies: Vec<PolicyKind>,
    /// Run the offline optimum even above policy.optimal_partition_limit.
    #[arg(long)]
    allow_large: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    MinimalRaise,
    MarginalBid,
}

/// Failure with an exit code: 2 for bad input or configuration, 1 otherwise.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config { .. } | Error::Parse { .. } | Error::Domain(_) => 2,
            _ => 1,
        };
        let mut message = e.to_string();
        if matches!(e, Error::TooLarge { .. }) {
            message.push_str("; pass --allow-large or raise policy.optimal_partition_limit");
        }
        Failure { code, message }
    }
}

fn config_error(key: &str, reason: impl Into<String>) -> Failure {
    Failure::from(Error::Config {
        key: key.into(),
        reason: reason.into(),
    })
}

fn io_error(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: 1,
        message: format!("{}: {e}", path.display()),
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn toml_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_key(table: &mut toml::Table, key: &str, value: toml::Value) -> CliResult<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts.pop().filter(|l| !l.is_empty()).ok_or_else(|| config_error(key, "empty key"))?;
    let mut t = table;
    for p in parts {
        t = t
            .entry(p)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| config_error(key, format!("`{p}` is not a section")))?;
    }
    t.insert(leaf.to_string(), value);
    Ok(())
}

impl ScenarioArgs {
    fn load(&self) -> CliResult<Scenario> {
        let text = match &self.scenario {
            Some(path) => fs::read_to_string(path).map_err(|e| io_error(path, e))?,
            None => String::new(),
        };
        let base = Scenario::from_toml(&text)?;
        let mut table: toml::Table =
            toml::from_str(&base.to_toml()).map_err(|e| config_error("scenario", e.to_string()))?;
        let mut sets: Vec<(String, toml::Value)> = Vec::new();
        let mut flag = |key: &str, v: Option<toml::Value>| {
            if let Some(v) = v {
                sets.push((key.to_string(), v));
            }
        };
        let int = |x: Option<usize>| x.map(|x| toml::Value::Integer(x as i64));
        flag("seed", self.seed.map(|x| toml::Value::Integer(x as i64)));
        flag("system.capacity", int(self.capacity));
        flag("system.k_data", int(self.k));
        flag("system.n_items", int(self.items));
        flag("workload.n_requests", int(self.requests));
        flag("latency.profile", self.profile.clone().map(toml::Value::String));
        if let Some(s) = self.tail_index {
            flag("workload.popularity", Some(toml::Value::String("zipf".into())));
            flag("workload.tail_index", Some(toml::Value::Float(s)));
        }
        if let Some(f) = &self.failed_server {
            let loc = SweepParam::Failure.apply(&base, f)?.failure.server;
            flag(
                "failure.server",
                loc.map(|[n, s]| toml::Value::Array(vec![toml::Value::Integer(n as i64), toml::Value::Integer(s as i64)])),
            );
        }
        for raw in &self.sets {
            let (key, value) = raw
                .split_once('=')
                .ok_or_else(|| config_error(raw, "expected KEY=VALUE"))?;
            sets.push((key.trim().to_string(), toml_value(value.trim())));
        }
        if sets.is_empty() {
            return Ok(base);
        }
        for (key, value) in sets {
            set_key(&mut table, &key, value)?;
        }
        let text = toml::to_string(&table).map_err(|e| config_error("scenario", e.to_string()))?;
        Ok(Scenario::from_toml(&text)?)
    }
}

fn out_dir() -> CliResult<PathBuf> {
    let dir = std::env::var_os("GEOCACHE_OUT").map_or_else(|| PathBuf::from("."), PathBuf::from);
    fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    Ok(dir)
}

/// Writes `text` to `output` (`-` is stdout) or to `default_name` in the output directory.
fn emit(output: Option<&str>, default_name: &str, text: &str) -> CliResult<()> {
    let path = match output {
        Some("-") => {
            print!("{text}");
            return Ok(());
        }
        Some(p) => PathBuf::from(p),
        None => out_dir()?.join(default_name),
    };
    fs::write(&path, text).map_err(|e| io_error(&path, e))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn policies(run: &RunArgs, scenario: &Scenario) -> Vec<PolicyKind> {
    if run.policies.is_empty() {
        scenario.policy.policies.clone()
    } else {
        run.policies.clone()
    }
}

fn read_input(input: &str) -> CliResult<String> {
    if input == "-" {
        let mut s = String::new();
        std::io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| io_error(Path::new("<stdin>"), e))?;
        return Ok(s);
    }
    fs::read_to_string(input).map_err(|e| io_error(Path::new(input), e))
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenPlacement { scenario, output } => {
            let s = scenario.load()?;
            let p = generate_placement(&s.system, s.seeds().placement)?;
            emit(output.as_deref(), "placement.txt", &write_placement(&p))
        }
        Command::GenTrace { scenario, output } => {
            let s = scenario.load()?;
            let t = generate_trace(&s.workload_spec(), s.system.n_items)?;
            emit(output.as_deref(), "trace.txt", &write_trace(&t))
        }
        Command::Run {
            scenario,
            run,
            log,
            timing,
        } => {
            let s = scenario.load()?;
            let e = run_experiment(&s, &policies(&run, &s), run.allow_large)?;
            let summary = e.report().to_csv();
            if log.as_deref() != Some("-") {
                emit(log.as_deref(), "requests.csv", &e.to_csv(timing))?;
                emit(None, "summary.csv", &summary)?;
            }
            print!("{summary}");
            Ok(())
        }
        Command::Sweep {
            parameter,
            values,
            scenario,
            run,
            output,
        } => {
            let param: SweepParam = parameter.parse()?;
            let s = scenario.load()?;
            let rows = sweep(&s, param, &values, &policies(&run, &s), run.allow_large)?;
            let csv = sweep_csv(&parameter, &rows);
            if output.as_deref() != Some("-") {
                emit(output.as_deref(), "sweep.csv", &csv)?;
            }
            print!("{csv}");
            Ok(())
        }
        Command::Solve {
            input,
            capacity,
            price_rule,
            bid_unit,
            max_rounds,
            partition_limit,
        } => {
            let v = read_tau(&read_input(&input)?)?;
            let opts = SolveOptions {
                clearing: ClearingOptions {
                    rule: match price_rule {
                        RuleArg::MinimalRaise => PriceRule::MinimalRaise,
                        RuleArg::MarginalBid => PriceRule::MarginalBid { unit: bid_unit },
                    },
                    max_rounds,
                },
                partition_limit,
            };
            let sol = optimal_offline(&v, capacity, &opts)?;
            println!("theta {}", sol.assignment.objective);
            println!("epsilon {}", join(&sol.assignment.epsilon));
            match &sol.partition {
                Some(p) => println!("partition {}", join(p.counts())),
                None => println!("partition none"),
            }
            println!("partitions_examined {}", sol.partitions_examined);
            Ok(())
        }
        Command::Partitions { capacity, k, items, count } => {
            if k == 0 {
                return Err(config_error("K", "must be at least 1"));
            }
            let parts = enumerate_partitions(capacity, k, items.unwrap_or(capacity.max(1)));
            if count {
                println!("{}", parts.count());
                return Ok(());
            }
            let header: Vec<String> = (1..=k).map(|i| format!("x{i}")).collect();
            println!("# {}", header.join(" "));
            for p in parts {
                println!("{}", join(p.counts()));
            }
            Ok(())
        }
    }
}

fn init_threads() -> CliResult<()> {
    let Some(raw) = std::env::var_os("GEOCACHE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .to_str()
        .and_then(|s| s.trim().parse().ok())
        .filter(|&n| n > 0)
        .ok_or_else(|| config_error("GEOCACHE_THREADS", "must be a positive integer"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| config_error("GEOCACHE_THREADS", e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_threads().and_then(|()| execute(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
