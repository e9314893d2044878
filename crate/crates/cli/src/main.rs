use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bridgewatch::checkpoint::{Checkpoint, CheckpointError};
use bridgewatch::han::{predict, HanError, Pooling};
use bridgewatch::ingest::{link_cross_chain, parse_pairs, parse_records, BridgeConfig, IngestError};
use bridgewatch::metapath::{FreqMode, MetaPathError, MetaPathFile};
use bridgewatch::pipeline::{
    evaluate, labels_of, mine_paths, render_table, repeated_runs_with, split_dataset, train,
    write_run_logs, Ablation, DetectionReport, PipelineError, RunConfig, RunLog,
};
use bridgewatch::synthgen::{gen_corpus, write_corpus, CorpusSpec, SynthError};
use bridgewatch::xbhg::{build_graphs, load_graph, load_graph_dir, save_graph, FeatureConfig, GraphError, XbhgGraph};
use bridgewatch::Model;
use clap::{Args, Parser, Subcommand};

/// Cross-chain bridge attack detection from heterogeneous behavior graphs.
#[derive(Debug, Parser)]
#[command(name = "bridgewatch", version, arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labeled synthetic corpus (records, pairs, bridge config).
    GenCorpus(GenCorpusArgs),
    /// Link records into behaviors and write one graph file per behavior.
    BuildGraphs(BuildGraphsArgs),
    /// Mine differential meta-paths from labeled graphs.
    Mine(MineArgs),
    /// Train a model on the training split of a graph directory.
    Train(TrainArgs),
    /// Evaluate over repeated seeded runs and write a report.
    Evaluate(EvaluateArgs),
    /// Classify a single graph.
    Detect(DetectArgs),
    /// Render one or more reports as a table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct GenCorpusArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 400)]
    n_normal: usize,
    /// Behaviors per attack class.
    #[arg(long, default_value_t = 60)]
    n_attack: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    /// Share of normal behaviors taking attack-like benign routes.
    #[arg(long, default_value_t = 0.25)]
    decoy: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BuildGraphsArgs {
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    bridge_config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Width of the hashed text embedding.
    #[arg(long, default_value_t = 64)]
    text_dim: usize,
    /// JSON table of precomputed text embeddings; unseen text falls back to hashing.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Also emit unpaired records as unlabeled single-chain graphs.
    #[arg(long)]
    single_sided: bool,
}

#[derive(Debug, Args)]
struct MineArgs {
    #[arg(long)]
    graphs: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    theta: f64,
    #[arg(long, default_value_t = 2)]
    lmin: usize,
    #[arg(long, default_value_t = 4)]
    lmax: usize,
    #[arg(long, default_value = "indicator")]
    mode: FreqMode,
    /// Mine only on the training part of the stratified split with this seed.
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long, default_value_t = 0.8)]
    split_ratio: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    graphs: PathBuf,
    /// Selected meta-paths; not needed for the no_dme ablation.
    #[arg(long)]
    metapaths: Option<PathBuf>,
    /// JSON run configuration; flags given here take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    ablation: Option<Ablation>,
    #[arg(long)]
    pooling: Option<Pooling>,
    #[arg(long)]
    epochs: Option<usize>,
    /// JSON lines file receiving the per-epoch losses.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    graphs: PathBuf,
    #[arg(long, default_value_t = 5)]
    runs: usize,
    #[arg(long)]
    report: PathBuf,
    /// JSON lines file receiving per-run losses and confusion matrices.
    #[arg(long)]
    logs: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    graph: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Report files; each becomes one table section.
    #[arg(long = "in", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Runtime(m) => m,
        }
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {
        $(impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::Data(e.to_string())
            }
        })*
    };
}

data_error!(IngestError, GraphError, MetaPathError, CheckpointError, SynthError, std::io::Error);

impl From<HanError> for Failure {
    fn from(e: HanError) -> Self {
        match e {
            HanError::NonFiniteGradient(_) => Failure::Runtime(e.to_string()),
            HanError::Hyper(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Diverged { .. } => Failure::Runtime(e.to_string()),
            PipelineError::Config(_) => Failure::Usage(e.to_string()),
            PipelineError::Model(inner) => inner.into(),
            _ => Failure::Data(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::GenCorpus(a) => gen_corpus_cmd(a),
        Command::BuildGraphs(a) => build_graphs_cmd(a),
        Command::Mine(a) => mine_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Detect(a) => detect_cmd(a),
        Command::Report(a) => report_cmd(a),
    }
}

fn require_file(path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Data(format!("{} is not a readable file", path.display())))
    }
}

fn require_dir(path: &Path) -> Result<(), Failure> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Failure::Data(format!("{} is not a directory", path.display())))
    }
}

fn gen_corpus_cmd(a: GenCorpusArgs) -> Result<(), Failure> {
    let spec = CorpusSpec {
        seed: a.seed,
        n_normal: a.n_normal,
        n_per_attack_class: a.n_attack,
        noise: a.noise,
        decoy: a.decoy,
        ..CorpusSpec::default()
    };
    spec.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let corpus = gen_corpus(&spec)?;
    write_corpus(&corpus, &a.out)?;
    println!(
        "wrote {} behaviors ({} records) to {}",
        corpus.pairs.len(),
        corpus.records.len(),
        a.out.display()
    );
    Ok(())
}

fn build_graphs_cmd(a: BuildGraphsArgs) -> Result<(), Failure> {
    if a.text_dim == 0 {
        return Err(Failure::Usage("--text-dim must be positive".into()));
    }
    for p in [&a.records, &a.pairs, &a.bridge_config] {
        require_file(p)?;
    }
    let features = FeatureConfig {
        text_dim: a.text_dim,
        use_external_embeddings: a.embeddings.is_some(),
        external_path: a.embeddings.as_ref().map(|p| p.display().to_string()),
        ..FeatureConfig::default()
    };
    let embedder = features.embedder()?;
    let parsed = parse_records(&a.records)?;
    for e in &parsed.errors {
        log::warn!("records line {}: {}", e.line, e.message);
    }
    let pairs = parse_pairs(&a.pairs)?;
    let config = BridgeConfig::load(&a.bridge_config)?;
    let linked = link_cross_chain(&parsed.records, &pairs, a.single_sided)?;
    let (graphs, warnings) = build_graphs(&linked.behaviors, &config, embedder.as_ref())?;
    std::fs::create_dir_all(&a.out)?;
    for (i, g) in graphs.iter().enumerate() {
        save_graph(g, a.out.join(format!("{i:06}.json")))?;
    }
    println!(
        "wrote {} graphs to {} ({} malformed record lines, {} link warnings, {} build warnings)",
        graphs.len(),
        a.out.display(),
        parsed.errors.len(),
        linked.warnings.len(),
        warnings.len()
    );
    Ok(())
}

fn load_graphs(dir: &Path) -> Result<Vec<XbhgGraph>, Failure> {
    require_dir(dir)?;
    let graphs = load_graph_dir(dir)?;
    if graphs.is_empty() {
        return Err(Failure::Data(format!("no graph files in {}", dir.display())));
    }
    Ok(graphs)
}

fn mine_cmd(a: MineArgs) -> Result<(), Failure> {
    let config = RunConfig {
        theta: a.theta,
        lmin: a.lmin,
        lmax: a.lmax,
        freq_mode: a.mode,
        split_ratio: a.split_ratio,
        ..RunConfig::default()
    };
    config.validate()?;
    let graphs = load_graphs(&a.graphs)?;
    let pool: Vec<&XbhgGraph> = match a.split_seed {
        Some(seed) => {
            let split = split_dataset(&labels_of(&graphs)?, a.split_ratio, seed)?;
            split.train.iter().map(|&i| &graphs[i]).collect()
        }
        None => graphs.iter().collect(),
    };
    let selection = mine_paths(&config, &pool)?;
    let file = MetaPathFile::new(&selection, a.mode, a.lmin, a.lmax);
    file.save(&a.out)?;
    println!(
        "selected {} meta-paths{} from {} graphs",
        file.selected.len(),
        if selection.fallback { " (fallback: none exceeded theta)" } else { "" },
        pool.len()
    );
    Ok(())
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            require_file(p)?;
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))
        }
    }
}

fn train_cmd(a: TrainArgs) -> Result<(), Failure> {
    let mut config = load_config(a.config.as_deref())?;
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(x) = a.ablation {
        config.ablation = x;
    }
    if let Some(p) = a.pooling {
        config.pooling = p;
    }
    if let Some(e) = a.epochs {
        config.epochs = e;
    }
    config.validate()?;
    if a.metapaths.is_none() && config.ablation != Ablation::NoDme {
        return Err(Failure::Usage("--metapaths is required unless --ablation no_dme".into()));
    }
    let graphs = load_graphs(&a.graphs)?;
    let split = split_dataset(&labels_of(&graphs)?, config.split_ratio, config.seed)?;
    let train_set: Vec<&XbhgGraph> = split.train.iter().map(|&i| &graphs[i]).collect();
    let paths = match (&a.metapaths, config.ablation) {
        (_, Ablation::NoDme) => mine_paths(&config, &train_set)?.paths(),
        (Some(p), _) => {
            require_file(p)?;
            MetaPathFile::load(p)?.paths()
        }
        (None, _) => unreachable!("checked above"),
    };
    let outcome = train(&config, &train_set, paths)?;
    Checkpoint::from_model(&outcome.model, Some(config.clone())).save(&a.out)?;
    if let Some(log_path) = &a.log {
        let log = RunLog {
            run: 0,
            seed: config.seed,
            losses: outcome.loss_log.clone(),
            confusion: None,
            error: None,
        };
        write_run_logs(log_path, &[log])?;
    }
    println!(
        "trained on {} graphs with {} meta-paths; final loss {:.6}; checkpoint {}",
        train_set.len(),
        outcome.model.paths.len(),
        outcome.loss_log.last().copied().unwrap_or(f64::NAN),
        a.out.display()
    );
    Ok(())
}

fn load_model(path: &Path) -> Result<(Model, Option<RunConfig>), Failure> {
    require_file(path)?;
    let ck = Checkpoint::load(path)?;
    let model = ck.to_model::<f64>()?;
    Ok((model, ck.run_config))
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<(), Failure> {
    if a.runs == 0 {
        return Err(Failure::Usage("--runs must be at least 1".into()));
    }
    let (model, run_config) = load_model(&a.model)?;
    let config = run_config.unwrap_or_default();
    let graphs = load_graphs(&a.graphs)?;
    // Run 0 scores the checkpoint itself on the held-out part of its own split;
    // later runs retrain on fresh splits with the same meta-paths.
    let split = split_dataset(&labels_of(&graphs)?, config.split_ratio, config.seed)?;
    let test: Vec<&XbhgGraph> = split.test.iter().map(|&i| &graphs[i]).collect();
    let first = evaluate(&model, &test)?;
    let mut summaries = vec![bridgewatch::pipeline::RunSummary::new(0, config.seed, model.paths.len(), first)];
    let mut logs = vec![RunLog {
        run: 0,
        seed: config.seed,
        losses: Vec::new(),
        confusion: Some(summaries[0].metrics.confusion),
        error: None,
    }];
    let mut failed = std::collections::BTreeMap::new();
    if a.runs > 1 {
        let (rest, rest_logs) = repeated_runs_with(&config, &graphs, a.runs, Some(&model.paths))?;
        summaries.extend(rest.runs.into_iter().filter(|r| r.run > 0));
        logs.extend(rest_logs.into_iter().filter(|l| l.run > 0));
        failed.extend(rest.failed_runs.into_iter().filter(|(r, _)| *r > 0));
    }
    let report = DetectionReport::aggregate(config, a.runs, summaries, failed);
    report.save(&a.report)?;
    if let Some(p) = &a.logs {
        write_run_logs(p, &logs)?;
    }
    print!("{}", render_table(&[(section_title(&report), &report)]));
    if report.runs_completed == 0 {
        return Err(Failure::Runtime("no run completed".into()));
    }
    Ok(())
}

fn detect_cmd(a: DetectArgs) -> Result<(), Failure> {
    let (model, _) = load_model(&a.model)?;
    require_file(&a.graph)?;
    let graph = load_graph(&a.graph)?;
    let prepared = model.prepare(&graph)?;
    let probs = model.predict_probs(&prepared)?;
    let label = predict(&probs);
    let shown: Vec<String> = bridgewatch::Label::ALL
        .iter()
        .zip(&probs)
        .map(|(l, p)| format!("{l}={p:.4}"))
        .collect();
    println!("{label}");
    println!("{}", shown.join(" "));
    Ok(())
}

fn section_title(r: &DetectionReport) -> String {
    let c = &r.config;
    match c.ablation {
        Ablation::None => format!("pooling {}", c.pooling),
        Ablation::NoDme => format!("pooling {}, without differential mining", c.pooling),
        Ablation::NoHam => format!("pooling {}, without hierarchical attention", c.pooling),
    }
}

fn report_cmd(a: ReportArgs) -> Result<(), Failure> {
    let mut reports = Vec::with_capacity(a.inputs.len());
    for p in &a.inputs {
        require_file(p)?;
        let text = std::fs::read_to_string(p)?;
        let r = DetectionReport::from_json(&text).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?;
        reports.push(r);
    }
    let sections: Vec<(String, &DetectionReport)> = reports.iter().map(|r| (section_title(r), r)).collect();
    print!("{}", render_table(&sections));
    Ok(())
}
