use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use treevar::discriminator::{certify, CertifyOptions, Route};
use treevar::experiments::{self, ExperimentConfig, ExperimentName};
use treevar::pattern_dist::{exact_distribution_with_budget, read_sites, simulate_sites, write_sites, DEFAULT_BUDGET};
use treevar::random_trees::{default_labels, random_tree, TreeKind};
use treevar::rng::derive_seed;
use treevar::vardist::{empirical_gap, empirical_gap_from_sites, vardist_exact, vardist_mc, vardist_mc_symmetrized, Method};
use treevar::{parse_newick, write_newick, Error, Family, Mechanism64, Scale, Tree};

#[derive(Parser)]
#[command(name = "treevar", version, about = "Variational distance between Markov models on phylogenetic trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw random binary trees and print them as Newick.
    Gen(GenArgs),
    /// Simulate sites on a tree, or print its exact pattern distribution.
    Simulate(SimulateArgs),
    /// Variational distance between two models, or between sites and a model.
    Vardist(VardistArgs),
    /// Lower-bound certificate for the distance between two models, as JSON.
    Certify(CertifyArgs),
    /// Run a named experiment and write TSV rows and a JSON summary.
    Experiment(ExperimentArgs),
    /// Run the postcondition audit suites.
    Audit(AuditArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Number of leaves, labelled t1..tn.
    #[arg(long, short, conflicts_with = "labels")]
    n: Option<usize>,
    /// Comma-separated leaf labels.
    #[arg(long, value_delimiter = ',')]
    labels: Option<Vec<String>>,
    #[arg(long, default_value = "uniform")]
    dist: TreeKind,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value = "cfn")]
    family: Family,
    /// How Newick branch values are read when no constant is given: p or t.
    #[arg(long, default_value = "p")]
    scale: Scale,
}

#[derive(Args)]
struct SimulateArgs {
    /// Newick string or path to a Newick file.
    #[arg(long)]
    tree: String,
    #[command(flatten)]
    model: ModelArgs,
    /// Same change probability on every edge instead of branch values.
    #[arg(long)]
    p: Option<f64>,
    /// Number of sites.
    #[arg(long, short)]
    k: Option<usize>,
    /// Print the exact pattern distribution as TSV instead of sites.
    #[arg(long)]
    exact: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u64,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PairArgs {
    #[arg(long)]
    t1: String,
    #[arg(long)]
    t2: Option<String>,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    p1: Option<f64>,
    #[arg(long)]
    p2: Option<f64>,
}

#[derive(Args)]
struct VardistArgs {
    #[command(flatten)]
    pair: PairArgs,
    /// auto, exact, mc or gap.
    #[arg(long, default_value = "auto")]
    method: String,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    /// Average both one-sided Monte Carlo estimators.
    #[arg(long)]
    symmetric: bool,
    /// Sites to simulate for the gap method.
    #[arg(long, short)]
    k: Option<usize>,
    /// Site file for the gap method, as written by `simulate`.
    #[arg(long, conflicts_with = "k")]
    sites: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u64,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CertifyArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long)]
    h: Option<usize>,
    #[arg(long, default_value = "greedy")]
    route: Route,
    #[arg(long)]
    g: Option<f64>,
    #[arg(long)]
    q_chop: Option<usize>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// separation, empirical-gap or lemma-audit.
    name: ExperimentName,
    /// key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key, as key=value. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: u64,
    /// Writes PREFIX.tsv and PREFIX.json; otherwise the summary goes to stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: u64,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

fn read_tree(arg: &str) -> anyhow::Result<Tree> {
    let text = if arg.trim_start().starts_with('(') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).with_context(|| format!("reading tree file {arg}"))?
    };
    Ok(parse_newick(&text)?)
}

fn mechanism(tree: &Tree, model: &ModelArgs, p: Option<f64>) -> anyhow::Result<Mechanism64> {
    Ok(match p {
        Some(p) => Mechanism64::constant(tree, model.family, p)?,
        None => Mechanism64::from_annotations(tree, model.family, model.scale)?,
    })
}

fn need_seed(seed: Option<u64>, what: &str) -> anyhow::Result<u64> {
    seed.ok_or_else(|| anyhow!(Error::InvalidParameter(format!("{what} is randomized and requires --seed"))))
}

fn emit(text: &str, output: Option<&Path>) -> anyhow::Result<()> {
    match output {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn gen(args: GenArgs) -> anyhow::Result<()> {
    let labels = match (args.labels, args.n) {
        (Some(l), _) => l,
        (None, Some(n)) => default_labels(n),
        (None, None) => return Err(Error::InvalidParameter("give --n or --labels".into()).into()),
    };
    let mut out = String::new();
    for i in 0..args.count {
        let seed = if args.count == 1 { args.seed } else { derive_seed(args.seed, &[i as u64]) };
        out.push_str(&write_newick(&random_tree(args.dist, &labels, seed)?));
        out.push('\n');
    }
    emit(&out, None)
}

fn simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let tree = read_tree(&args.tree)?;
    let mech = mechanism(&tree, &args.model, args.p)?;
    let text = if args.exact {
        exact_distribution_with_budget(&tree, &mech, args.budget)?.to_tsv()
    } else {
        let seed = need_seed(args.seed, "simulate")?;
        let k = args.k.ok_or_else(|| Error::InvalidParameter("give --k or --exact".into()))?;
        let labels = tree.leaf_labels().join(",");
        format!("# leaves={labels}\n{}", write_sites(&simulate_sites(&tree, &mech, k, seed)?))
    };
    emit(&text, args.output.as_deref())
}

fn second(pair: &PairArgs) -> anyhow::Result<(Tree, Mechanism64)> {
    let arg = pair.t2.as_deref().ok_or_else(|| Error::InvalidParameter("--t2 is required".into()))?;
    let t2 = read_tree(arg)?;
    let m2 = mechanism(&t2, &pair.model, pair.p2)?;
    Ok((t2, m2))
}

fn vardist(args: VardistArgs) -> anyhow::Result<()> {
    let t1 = read_tree(&args.pair.t1)?;
    let m1 = mechanism(&t1, &args.pair.model, args.pair.p1)?;
    let method = match args.method.as_str() {
        "auto" => {
            let states = (m1.family().states() as f64).powi(t1.n_leaves() as i32);
            if states <= args.budget as f64 { Method::Exact } else { Method::Mc }
        }
        other => other.parse()?,
    };
    let estimate = match method {
        Method::EmpiricalGap => match (&args.sites, args.k) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let sites = read_sites(&text, t1.n_leaves(), m1.family().states())?;
                empirical_gap_from_sites(&t1, &m1, &sites)?
            }
            (None, Some(k)) => empirical_gap(&t1, &m1, k, need_seed(args.seed, "the gap method")?)?,
            (None, None) => return Err(Error::InvalidParameter("the gap method needs --k or --sites".into()).into()),
        },
        Method::Exact => {
            let (t2, m2) = second(&args.pair)?;
            let d1 = exact_distribution_with_budget(&t1, &m1, args.budget)?;
            let d2 = exact_distribution_with_budget(&t2, &m2, args.budget)?;
            vardist_exact(&d1, &d2)?
        }
        Method::Mc => {
            let (t2, m2) = second(&args.pair)?;
            let seed = need_seed(args.seed, "the mc method")?;
            if args.symmetric {
                vardist_mc_symmetrized(&t1, &m1, &t2, &m2, args.samples, seed)?
            } else {
                vardist_mc(&t1, &m1, &t2, &m2, args.samples, seed)?
            }
        }
    };
    println!("{}", serde_json::to_string_pretty(&estimate)?);
    Ok(())
}

fn certify_cmd(args: CertifyArgs) -> anyhow::Result<()> {
    let t1 = read_tree(&args.pair.t1)?;
    let m1 = mechanism(&t1, &args.pair.model, args.pair.p1)?;
    let (t2, m2) = second(&args.pair)?;
    let options = CertifyOptions { h: args.h, route: args.route, g: args.g, q_chop: args.q_chop };
    let cert = certify(&t1, &m1, &t2, &m2, &options)?;
    println!("{}", serde_json::to_string_pretty(&cert)?);
    Ok(())
}

fn load_config(name: ExperimentName, file: Option<&Path>, overrides: &[String], seed: u64) -> anyhow::Result<ExperimentConfig> {
    let mut config = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ExperimentConfig::parse(name, &text)?
        }
        None => ExperimentConfig::new(name),
    };
    let pairs = overrides
        .iter()
        .map(|kv| {
            kv.split_once('=').ok_or_else(|| Error::InvalidParameter(format!("override `{kv}` is not key=value")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    config.apply_overrides(&pairs)?;
    config.seed = seed;
    config.validate()?;
    Ok(config)
}

fn finish(report: &experiments::ExperimentReport, output: Option<&Path>) -> anyhow::Result<()> {
    match output.or(report.config.output.as_deref()) {
        Some(prefix) => report.write(prefix)?,
        None => print!("{}", report.summary_json()),
    }
    Ok(())
}

fn experiment(args: ExperimentArgs) -> anyhow::Result<()> {
    let config = load_config(args.name, args.config.as_deref(), &args.overrides, args.seed)?;
    let report = experiments::run(&config)?;
    finish(&report, args.output.as_deref())
}

fn audit(args: AuditArgs) -> anyhow::Result<()> {
    let config = load_config(ExperimentName::LemmaAudit, args.config.as_deref(), &args.overrides, args.seed)?;
    let report = experiments::exp_lemma_audit(&config)?;
    finish(&report, args.output.as_deref())?;
    let failed: Vec<String> = report
        .rows
        .iter()
        .filter(|r| r.values[1] > 0.0)
        .map(|r| format!("{} (n={})", r.case, r.n))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Invariant(format!("audit failures in {}", failed.join(", "))).into())
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Invariant(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Simulate(a) => simulate(a),
        Command::Vardist(a) => vardist(a),
        Command::Certify(a) => certify_cmd(a),
        Command::Experiment(a) => experiment(a),
        Command::Audit(a) => audit(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
