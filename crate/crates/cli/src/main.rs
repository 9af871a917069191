//! `laplace`: generate data, explain predictions, benchmark explanations,
//! and query the graph oracles.

mod config;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use laplace_core::bn::oracle::{dsep_blanket, exhaustive_posterior, random_network};
use laplace_core::bn::{forward_sample, mpe_class, posterior};
use laplace_core::dataset::{discretize, load_csv, split, Schema};
use laplace_core::eval::{run_benchmark, BenchmarkConfig};
use laplace_core::explain::{explain, export, ExplainConfig, ExportFormat};
use laplace_core::mb::MbConfig;
use laplace_core::models::{
    Classifier, ClassifierKind, ExternalModel, ForestConfig, LinearConfig, ModelAdapter,
    TrainConfig,
};
use laplace_core::perturb::PerturbationConfig;
use laplace_core::stats::ChiSquareTest;
use laplace_core::{BayesianNetwork, Dataset, Error, Result, State};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(
    name = "laplace",
    version,
    about = "Probabilistic causal explanations for tabular classifiers"
)]
#[command(after_help = config::keys_help())]
struct Cli {
    /// Flat `key = value` config file; flags override it.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "LAPLACE_THREADS")]
    threads: Option<usize>,
    /// More logging (-v info, -vv debug).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Forward-sample a network into a CSV.
    Generate {
        /// `alarm` or a network JSON file.
        #[arg(long, default_value = "alarm")]
        network: String,
        /// Rows to sample.
        #[arg(long, short, default_value_t = 10_000)]
        n: usize,
        /// Output CSV; stdout when omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Explain one test instance; writes explanation.json and explanation.dot.
    Explain(RunFlags),
    /// Repeated explanations with local accuracy and consistency; writes report.json and report.md.
    Benchmark(RunFlags),
    /// Ground-truth queries against a known network.
    #[command(subcommand)]
    Oracle(OracleCommand),
}

#[derive(Subcommand, Debug)]
enum OracleCommand {
    /// Markov blanket read off the graph.
    Mb {
        #[arg(long, default_value = "alarm")]
        network: String,
        #[arg(long)]
        target: String,
    },
    /// Posterior by exhaustive enumeration, checked against exact inference.
    Posterior {
        #[arg(long)]
        network: String,
        #[arg(long)]
        target: String,
        /// Comma-separated `name=state` pairs.
        #[arg(long, default_value = "")]
        evidence: String,
    },
    /// Random binary network as JSON.
    RandomDag {
        #[arg(long, default_value_t = 8)]
        nodes: usize,
        #[arg(long, default_value_t = 3)]
        max_parents: usize,
        #[arg(long, default_value_t = 0.3)]
        edge_prob: f64,
        /// CPT entries are drawn from [low, high].
        #[arg(long, default_value_t = 0.1)]
        low: f64,
        #[arg(long, default_value_t = 0.9)]
        high: f64,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

macro_rules! run_flags {
    ($($field:ident),* $(,)?) => {
        /// Run settings; each flag overrides the config key of the same name.
        #[derive(Args, Debug, Default)]
        struct RunFlags {
            $(
                #[arg(long, value_name = "VALUE", help = config::flag_help(stringify!($field)))]
                $field: Option<String>,
            )*
        }

        impl RunFlags {
            fn pairs(&self) -> Vec<(&'static str, &Option<String>)> {
                vec![$((stringify!($field), &self.$field)),*]
            }
        }
    };
}

run_flags!(
    data,
    train,
    test,
    network,
    rows,
    target,
    samples,
    rho,
    alpha,
    max_cond,
    max_parents,
    smoothing,
    rows_per_cell,
    bins,
    split,
    repetitions,
    sensitive,
    model,
    model_command,
    trees,
    max_depth,
    nb_smoothing,
    l2,
    epochs,
    instance,
    out,
);

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 1,
        Error::Model(_) => 3,
        _ => 2,
    }
}

fn load_config(cli: &Cli, flags: Option<&RunFlags>) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        cfg.apply_text(&text)?;
    }
    if let Some(flags) = flags {
        for (key, value) in flags.pairs() {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    Ok(cfg)
}

/// Training and test splits, discretized with bins learned on training data,
/// plus the raw test split when any column was numeric.
struct Prepared {
    train: Dataset,
    test: Dataset,
    raw_test: Option<Dataset>,
}

fn schema_of(data: &Dataset) -> Schema {
    data.variables()
        .iter()
        .map(|v| (v.name().to_string(), v.kind()))
        .collect()
}

fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let (raw_train, raw_test) = match (&cfg.train, &cfg.test, &cfg.data, &cfg.network) {
        (Some(train), Some(test), _, _) => {
            let train = load_csv(train, None)?;
            let test = load_csv(test, Some(&schema_of(&train)))?;
            (train, test)
        }
        (Some(_), None, _, _) | (None, Some(_), _, _) => {
            return Err(Error::Config(
                "`train` and `test` must be given together".into(),
            ))
        }
        (None, None, Some(data), _) => split(&load_csv(data, None)?, cfg.split, cfg.seed)?,
        (None, None, None, Some(network)) => {
            let net = BayesianNetwork::by_name_or_path(network)?;
            split(
                &forward_sample(&net, cfg.rows, cfg.seed)?,
                cfg.split,
                cfg.seed,
            )?
        }
        _ => {
            return Err(Error::Config(
                "no data: give `data`, `train` + `test`, or `network`".into(),
            ))
        }
    };
    let (train, spec) = discretize(&raw_train, cfg.bins)?;
    let test = spec.apply(&raw_test)?.conform_to(train.variables())?;
    let raw_test = (!spec.edges.is_empty()).then_some(raw_test);
    Ok(Prepared {
        train,
        test,
        raw_test,
    })
}

fn train_config(cfg: &RunConfig) -> TrainConfig {
    TrainConfig {
        nb_smoothing: cfg.nb_smoothing,
        forest: ForestConfig {
            trees: cfg.trees,
            max_depth: cfg.max_depth,
            seed: cfg.seed,
            ..Default::default()
        },
        linear: LinearConfig {
            l2: cfg.l2,
            epochs: cfg.epochs,
            seed: cfg.seed,
            ..Default::default()
        },
    }
}

enum Model {
    BuiltIn(Classifier),
    External(ExternalModel),
}

impl Model {
    fn adapter(&self) -> &dyn ModelAdapter {
        match self {
            Model::BuiltIn(c) => c,
            Model::External(e) => e,
        }
    }
}

fn build_model(cfg: &RunConfig, train: &Dataset, target: &str) -> Result<Model> {
    let t = train.require(target)?;
    match cfg.model.to_ascii_lowercase().as_str() {
        "external" => {
            let command: Vec<String> = cfg
                .model_command
                .as_deref()
                .ok_or_else(|| Error::Config("`model = external` needs `model_command`".into()))?
                .split_whitespace()
                .map(String::from)
                .collect();
            let features = train
                .names()
                .into_iter()
                .filter(|n| *n != train.variable(t).name())
                .map(String::from)
                .collect();
            let labels = train.variable(t).states().to_vec();
            Ok(Model::External(ExternalModel::new(
                command, labels, features,
            )?))
        }
        name => match ClassifierKind::parse(name) {
            Ok(kind) => Ok(Model::BuiltIn(Classifier::train(
                kind,
                train,
                t,
                &train_config(cfg),
            )?)),
            Err(_) if Path::new(&cfg.model).is_file() => {
                let text = std::fs::read_to_string(&cfg.model)
                    .map_err(|e| Error::Model(format!("cannot read model {}: {e}", cfg.model)))?;
                let c = Classifier::from_json(&text)
                    .map_err(|e| Error::Model(format!("bad model file {}: {e}", cfg.model)))?;
                Ok(Model::BuiltIn(c))
            }
            Err(e) => Err(e),
        },
    }
}

fn explain_config(cfg: &RunConfig) -> ExplainConfig {
    ExplainConfig {
        perturbation: PerturbationConfig {
            sample_count: cfg.samples,
            resample_probability: cfg.rho,
            seed: cfg.seed,
        },
        blanket: MbConfig {
            test: ChiSquareTest {
                alpha: cfg.alpha,
                rows_per_cell: cfg.rows_per_cell,
            },
            max_cond: cfg.max_cond,
        },
        max_parents: cfg.max_parents,
        smoothing: cfg.smoothing,
        sensitive: cfg.sensitive.clone(),
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes)
        .map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))
}

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    std::fs::create_dir_all(&cfg.out)
        .map_err(|e| Error::Data(format!("cannot create {}: {e}", cfg.out.display())))?;
    Ok(&cfg.out)
}

fn cmd_explain(cfg: &RunConfig) -> Result<()> {
    let target = cfg.target()?;
    let data = prepare(cfg)?;
    let model = build_model(cfg, &data.train, target)?;
    if cfg.instance >= data.test.n_rows() {
        return Err(Error::Data(format!(
            "instance {} out of range: test split has {} rows",
            cfg.instance,
            data.test.n_rows()
        )));
    }
    let row = data.test.row(cfg.instance);
    let mut expl = explain(
        model.adapter(),
        row,
        &data.train,
        target,
        &explain_config(cfg),
    )?;
    if let Some(raw) = &data.raw_test {
        let t = raw.require(target)?;
        let original: BTreeMap<String, String> = raw
            .variables()
            .iter()
            .enumerate()
            .filter(|(c, _)| *c != t)
            .map(|(c, v)| {
                (
                    v.name().to_string(),
                    v.state_label(raw.get(cfg.instance, c)).to_string(),
                )
            })
            .collect();
        expl.instance.original = Some(original);
    }
    let dir = out_dir(cfg)?;
    write(
        &dir.join("explanation.json"),
        &export(&expl, ExportFormat::Json),
    )?;
    write(
        &dir.join("explanation.dot"),
        &export(&expl, ExportFormat::Dot),
    )?;
    write(&dir.join("config.txt"), cfg.to_text().as_bytes())?;
    if let Model::BuiltIn(c) = &model {
        write(&dir.join("model.json"), c.to_json().as_bytes())?;
    }
    summary(&expl)
}

fn summary(expl: &laplace_core::Explanation) -> Result<()> {
    let mut out = std::io::stdout().lock();
    let p: Vec<String> = expl
        .classes
        .iter()
        .zip(&expl.posterior)
        .map(|(c, p)| format!("{c}={p:.4}"))
        .collect();
    let _ = writeln!(out, "target     {}", expl.target);
    let _ = writeln!(out, "parents/children {}", expl.blanket.pc.join(", "));
    let _ = writeln!(out, "spouses    {}", expl.blanket.spouses.join(", "));
    let _ = writeln!(out, "posterior  {}", p.join(" "));
    let _ = writeln!(
        out,
        "predicted  {}  explained {}",
        expl.predicted_class, expl.explained_class
    );
    if !expl.flagged_sensitive.is_empty() {
        let _ = writeln!(out, "sensitive  {}", expl.flagged_sensitive.join(", "));
    }
    Ok(())
}

fn cmd_benchmark(cfg: &RunConfig) -> Result<()> {
    let target = cfg.target()?;
    let data = prepare(cfg)?;
    let model = build_model(cfg, &data.train, target)?;
    let bench = BenchmarkConfig {
        repetitions: cfg.repetitions,
        seed: cfg.seed,
        explain: explain_config(cfg),
        classifiers: ClassifierKind::ALL.to_vec(),
        train: train_config(cfg),
    };
    let report = run_benchmark(&data.train, &data.test, target, model.adapter(), &bench)?;
    let dir = out_dir(cfg)?;
    write(&dir.join("report.json"), report.to_json().as_bytes())?;
    let md = report.to_markdown();
    write(&dir.join("report.md"), md.as_bytes())?;
    write(&dir.join("config.txt"), cfg.to_text().as_bytes())?;
    print!("{md}");
    Ok(())
}

fn cmd_generate(network: &str, n: usize, seed: u64, out: Option<&Path>) -> Result<()> {
    let net = BayesianNetwork::by_name_or_path(network)?;
    let data = forward_sample(&net, n, seed)?;
    match out {
        Some(path) => data.write_csv(path),
        None => data.write_csv_to(std::io::stdout().lock()),
    }
}

fn parse_evidence(net: &BayesianNetwork, text: &str) -> Result<Vec<Option<State>>> {
    let mut ev = vec![None; net.n_nodes()];
    for pair in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, state) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("evidence `{pair}` is not `name=state`")))?;
        let v = net.require(name.trim())?;
        let s = net.variable(v).state_index(state.trim()).ok_or_else(|| {
            Error::Data(format!(
                "`{}` has no state `{}`",
                net.variable(v).name(),
                state.trim()
            ))
        })?;
        ev[v] = Some(s);
    }
    Ok(ev)
}

fn json_string(s: &str) -> String {
    format!("{s:?}")
}

fn json_list<'a>(items: impl IntoIterator<Item = &'a str>) -> String {
    let parts: Vec<String> = items.into_iter().map(json_string).collect();
    format!("[{}]", parts.join(", "))
}

fn cmd_oracle(cmd: &OracleCommand, seed: u64) -> Result<()> {
    match cmd {
        OracleCommand::Mb { network, target } => {
            let net = BayesianNetwork::by_name_or_path(network)?;
            let t = net.require(target)?;
            let dag = net.dag();
            let name = |v: &usize| net.variable(*v).name();
            let mb = dsep_blanket(dag, t);
            let parents: Vec<&str> = dag.parents(t).iter().map(name).collect();
            let children: Vec<&str> = dag.children(t).iter().map(name).collect();
            let spouses: Vec<&str> = mb
                .iter()
                .filter(|v| !dag.parents(t).contains(v) && !dag.children(t).contains(v))
                .map(name)
                .collect();
            println!(
                "{{\"target\": {}, \"blanket\": {}, \"parents\": {}, \"children\": {}, \"spouses\": {}}}",
                json_string(net.variable(t).name()),
                json_list(mb.iter().map(name)),
                json_list(parents),
                json_list(children),
                json_list(spouses)
            );
        }
        OracleCommand::Posterior {
            network,
            target,
            evidence,
        } => {
            let net = BayesianNetwork::by_name_or_path(network)?;
            let t = net.require(target)?;
            let ev = parse_evidence(&net, evidence)?;
            let exact = exhaustive_posterior(&net, t, &ev)?;
            let fast = posterior(&net, t, &ev)?;
            let diff = exact
                .iter()
                .zip(&fast)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let mpe = mpe_class(&net, t, &ev)?;
            let nums = |v: &[f64]| {
                v.iter()
                    .map(|p| format!("{p:e}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            };
            println!(
                "{{\"target\": {}, \"states\": {}, \"exhaustive\": [{}], \"inference\": [{}], \"max_abs_diff\": {diff:e}, \"mpe\": {}}}",
                json_string(net.variable(t).name()),
                json_list(net.variable(t).states().iter().map(String::as_str)),
                nums(&exact),
                nums(&fast),
                json_string(net.variable(t).state_label(mpe))
            );
        }
        OracleCommand::RandomDag {
            nodes,
            max_parents,
            edge_prob,
            low,
            high,
            out,
        } => {
            if !(0.0 <= *low && low <= high && *high <= 1.0) || !(0.0..=1.0).contains(edge_prob) {
                return Err(Error::Config(
                    "need 0 <= low <= high <= 1 and edge_prob in [0, 1]".into(),
                ));
            }
            let net = random_network(*nodes, *max_parents, *edge_prob, (*low, *high), seed);
            let mut text = net.to_json();
            text.push('\n');
            match out {
                Some(path) => write(path, text.as_bytes())?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let flags = match &cli.command {
        Command::Explain(f) | Command::Benchmark(f) => Some(f),
        _ => None,
    };
    let cfg = load_config(cli, flags)?;
    if let Some(n) = cfg.threads {
        if n == 0 {
            return Err(Error::Config("threads must be >= 1".into()));
        }
        // only fails if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match &cli.command {
        Command::Generate { network, n, out } => {
            cmd_generate(network, *n, cfg.seed, out.as_deref())
        }
        Command::Explain(_) => cmd_explain(&cfg),
        Command::Benchmark(_) => cmd_benchmark(&cfg),
        Command::Oracle(cmd) => cmd_oracle(cmd, cfg.seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match std::panic::catch_unwind(|| run(&cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(_) => {
            eprintln!("error: internal failure");
            ExitCode::from(4)
        }
    }
}
