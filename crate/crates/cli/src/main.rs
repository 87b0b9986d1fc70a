use std::fs;
use std::io::Read as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use modsynth::harness::{
    evaluate, generate_dataset, load_dataset, run_ablation, run_program, AblationGrid, DatasetSpec, TagMatcher,
    TaskInstance, TaskKind,
};
use modsynth::llm::{CacheRecord, Gateway, GatewayTextBackend, LlmConfig, LlmMode};
use modsynth::reference::seed_library;
use modsynth::registry::Library;
use modsynth::synthesis::{learn, SynthesisConfig};
use modsynth::tools::{HttpBackend, SharedBackend, SyntheticBackend};

#[derive(Parser)]
#[command(name = "modsynth", version, about = "Learn, evaluate and run visual reasoning modules")]
struct Cli {
    /// How model calls are served.
    #[arg(long, global = true, env = "LLM_MODE", default_value = "replay")]
    mode: String,
    /// Completion cache file.
    #[arg(long, global = true, env = "MODSYNTH_CACHE", default_value = "llm_cache.jsonl")]
    cache: PathBuf,
    /// Directory for JSON and text reports.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grow a library from training examples.
    Learn(LearnArgs),
    /// Score a library on a dataset, or run an ablation grid.
    Eval(EvalArgs),
    /// Execute one program on one instance.
    Run(RunArgs),
    /// Inspect or create libraries.
    #[command(subcommand)]
    Library(LibraryCommand),
    /// Inspect or clear the completion cache.
    #[command(subcommand)]
    Cache(CacheCommand),
}

#[derive(Args)]
struct DataArgs {
    #[arg(long, value_parser = parse_task)]
    task: Option<TaskKind>,
    /// JSONL dataset; generated from --task and --seed when absent.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Instances to generate.
    #[arg(long)]
    n: Option<usize>,
    /// Query forms to generate, comma separated.
    #[arg(long, value_delimiter = ',')]
    forms: Vec<String>,
}

#[derive(Args)]
struct LearnArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Starting library; builtins only when absent.
    #[arg(long)]
    library: Option<PathBuf>,
    /// Where to write the grown library.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite --library instead of writing a new directory.
    #[arg(long)]
    in_place: bool,
    #[arg(long, default_value_t = 0.8)]
    eta: f64,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 3)]
    repairs: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    library: Option<PathBuf>,
    /// Grid file; evaluates every variant and training size in it.
    #[arg(long)]
    ablation: Option<PathBuf>,
    /// Write every instance's execution trace as JSON lines.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value_t = 0.8)]
    eta: f64,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 3)]
    repairs: usize,
}

#[derive(Args)]
struct RunArgs {
    /// Program file, or `-` for stdin.
    #[arg(long)]
    program: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Instance position in the dataset.
    #[arg(long, default_value_t = 0)]
    index: usize,
    #[arg(long)]
    library: Option<PathBuf>,
    /// Write the step records as JSON lines.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Subcommand)]
enum LibraryCommand {
    /// List the modules of a library.
    List {
        #[arg(long)]
        library: PathBuf,
    },
    /// Print one module's source and metadata.
    Show {
        #[arg(long)]
        library: PathBuf,
        name: String,
    },
    /// Write a fresh library.
    Init {
        #[arg(long)]
        out: PathBuf,
        /// Include the shipped reference modules.
        #[arg(long)]
        reference: bool,
    },
}

#[derive(Subcommand)]
enum CacheCommand {
    Stats,
    Clear,
}

fn parse_task(s: &str) -> Result<TaskKind, String> {
    s.parse().map_err(|e: modsynth::harness::HarnessError| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Learn(a) => cmd_learn(cli, a),
        Command::Eval(a) => cmd_eval(cli, a),
        Command::Run(a) => cmd_run(a),
        Command::Library(c) => cmd_library(c),
        Command::Cache(c) => cmd_cache(cli, c),
    }
}

fn mode(cli: &Cli) -> Result<LlmMode> {
    Ok(cli.mode.parse()?)
}

fn gateway(cli: &Cli, model: Option<&str>) -> Result<Arc<Gateway>> {
    let mut cfg = LlmConfig::from_env()?;
    cfg.mode = mode(cli)?;
    if let Some(m) = model.filter(|m| !m.is_empty()) {
        cfg.model_id = m.to_string();
    }
    Ok(Arc::new(Gateway::from_config(&cfg, Some(&cli.cache))?))
}

/// Tool service from `TOOL_API_URL`, or the scene-graph backend.
fn tools(gw: &Arc<Gateway>) -> Result<SharedBackend> {
    let inner: SharedBackend = match std::env::var("TOOL_API_URL") {
        Ok(u) if !u.trim().is_empty() => Arc::new(HttpBackend::from_env()?),
        _ => Arc::new(SyntheticBackend),
    };
    Ok(Arc::new(GatewayTextBackend::new(inner, gw.clone())))
}

fn load_library(dir: Option<&Path>) -> Result<Library> {
    match dir {
        Some(d) => Library::load(d).with_context(|| format!("loading library {}", d.display())),
        None => Ok(Library::with_builtins()),
    }
}

fn instances(d: &DataArgs, default_n: impl Fn(TaskKind) -> usize) -> Result<Vec<TaskInstance>> {
    if let Some(path) = &d.dataset {
        let data = load_dataset(path)?;
        return Ok(match d.task {
            Some(t) => data.into_iter().filter(|i| i.task == t).collect(),
            None => data,
        });
    }
    let task = d.task.context("--task or --dataset is required")?;
    let forms: Vec<&str> = d.forms.iter().map(String::as_str).collect();
    let spec = DatasetSpec::new(task, d.seed, d.n.unwrap_or_else(|| default_n(task))).with_forms(&forms);
    Ok(generate_dataset(&spec)?)
}

fn write_report(cli: &Cli, name: &str, contents: &str) -> Result<()> {
    if let Some(dir) = &cli.report {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn synthesis_config(cli: &Cli, eta: f64, k: usize, repairs: usize) -> Result<SynthesisConfig> {
    // replayed runs stamp records with 0 so their output is reproducible
    let timestamp = match mode(cli)? {
        LlmMode::Replay => 0,
        _ => SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    };
    Ok(SynthesisConfig {
        eta,
        k,
        repairs,
        timestamp,
        ..SynthesisConfig::default()
    })
}

fn is_nonempty_dir(p: &Path) -> bool {
    fs::read_dir(p).map(|mut d| d.next().is_some()).unwrap_or(false)
}

fn cmd_learn(cli: &Cli, a: &LearnArgs) -> Result<ExitCode> {
    let out = if a.in_place {
        a.library.clone().context("--in-place needs --library")?
    } else {
        let out = a.out.clone().context("--out is required unless --in-place is given")?;
        if is_nonempty_dir(&out) {
            bail!("{} already exists; pass --in-place to update a library", out.display());
        }
        out
    };
    let examples = instances(&a.data, |t| t.default_train_size())?;
    let base = load_library(a.library.as_deref())?;
    let gw = gateway(cli, None)?;
    let backend = tools(&gw)?;
    let cfg = synthesis_config(cli, a.eta, a.k, a.repairs)?;
    let task = a.data.task.map(|t| t.to_string()).unwrap_or_else(|| "mixed".into());
    let (lib, report) = learn(&examples, &base, &gw, &backend, &cfg, &task).map_err(|e| anyhow::anyhow!("{e}"))?;
    write_report(cli, "synthesis.json", &(serde_json::to_string_pretty(&report)? + "\n"))?;

    println!("examples {} feasible {} proposed {}", report.examples, report.feasible, report.proposed.len());
    for p in &report.proposals {
        let status = match (&p.skipped, p.accepted) {
            (Some(why), _) => format!("skipped ({why})"),
            (None, true) => "accepted".into(),
            (None, false) => "rejected".into(),
        };
        let rate = p.pass_rate.map(|r| format!("{r:.2}")).unwrap_or_else(|| "-".into());
        println!("{:<20} {:<28} pass {rate} cases {} rounds {}", p.name, status, p.cases, p.rounds);
    }
    if report.nothing_accepted() {
        eprintln!("no proposed module passed its tests; library left unchanged");
        return Ok(ExitCode::from(1));
    }
    lib.save(&out).with_context(|| format!("writing library {}", out.display()))?;
    println!("library written to {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(cli: &Cli, a: &EvalArgs) -> Result<ExitCode> {
    if let Some(grid_path) = &a.ablation {
        let text = fs::read_to_string(grid_path).with_context(|| format!("reading {}", grid_path.display()))?;
        let grid = AblationGrid::from_json(&text)?;
        let base = load_library(a.library.as_deref())?;
        let factory = |model: &str| {
            let gw = gateway(cli, Some(model)).map_err(|e| modsynth::llm::GatewayError::Config(format!("{e:#}")))?;
            let be = tools(&gw).map_err(|e| modsynth::llm::GatewayError::Config(format!("{e:#}")))?;
            Ok((gw, be))
        };
        let cfg = synthesis_config(cli, a.eta, a.k, a.repairs)?;
        let table = run_ablation(&grid, &base, &factory, &cfg)?;
        let rendered = table.render();
        print!("{rendered}");
        write_report(cli, "ablation.json", &(serde_json::to_string_pretty(&table)? + "\n"))?;
        write_report(cli, "ablation.txt", &rendered)?;
        return Ok(ExitCode::SUCCESS);
    }
    let data = instances(&a.data, |_| 50)?;
    let lib = load_library(a.library.as_deref())?;
    let gw = gateway(cli, None)?;
    let backend = tools(&gw)?;
    let report = evaluate(&data, &lib, &gw, &backend, &TagMatcher::default());
    let table = report.to_table();
    print!("{table}");
    write_report(cli, "report.json", &report.to_json())?;
    write_report(cli, "report.txt", &table)?;
    if let Some(path) = &a.trace {
        let mut out = String::new();
        for o in &report.outcomes {
            for t in &o.trace {
                out.push_str(&serde_json::to_string(&serde_json::json!({ "id": o.id, "step": t }))?);
                out.push('\n');
            }
        }
        fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_run(a: &RunArgs) -> Result<ExitCode> {
    let source = if a.program.as_os_str() == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        s
    } else {
        fs::read_to_string(&a.program).with_context(|| format!("reading {}", a.program.display()))?
    };
    let data = instances(&a.data, |_| a.index + 1)?;
    let inst = data
        .get(a.index)
        .with_context(|| format!("index {} is out of range ({} instances)", a.index, data.len()))?;
    let lib = load_library(a.library.as_deref())?;
    let backend: SharedBackend = Arc::new(SyntheticBackend);
    let res = match run_program(inst, &source, &lib, &backend) {
        Ok(r) => r,
        Err(diagnostics) => {
            eprintln!("{diagnostics}");
            return Ok(ExitCode::from(2));
        }
    };
    if let Some(path) = &a.trace {
        let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        res.write_trace(std::io::BufWriter::new(f))?;
    }
    if let Some(e) = &res.error {
        eprintln!("{e}");
        return Ok(ExitCode::from(1));
    }
    println!("{}", res.final_value.answer_text());
    Ok(ExitCode::SUCCESS)
}

fn cmd_library(c: &LibraryCommand) -> Result<ExitCode> {
    match c {
        LibraryCommand::List { library } => {
            let lib = load_library(Some(library))?;
            for r in lib.records() {
                println!(
                    "{:<20} {:<10} {:<12} pass {:.2} v{}",
                    r.name(),
                    format!("{:?}", r.kind).to_lowercase(),
                    r.origin_task,
                    r.pass_rate,
                    r.version
                );
            }
        }
        LibraryCommand::Show { library, name } => {
            let lib = load_library(Some(library))?;
            let r = lib.lookup(name)?;
            println!("{}", r.source);
            println!("origin {} pass {:.2} eta {:.2} tests {}", r.origin_task, r.pass_rate, r.eta_at_acceptance, r.test_case_ids.join(","));
        }
        LibraryCommand::Init { out, reference } => {
            if is_nonempty_dir(out) {
                bail!("{} already exists", out.display());
            }
            let lib = if *reference { seed_library() } else { Library::with_builtins() };
            lib.save(out)?;
            println!("{} modules written to {}", lib.len(), out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_cache(cli: &Cli, c: &CacheCommand) -> Result<ExitCode> {
    match c {
        CacheCommand::Stats => {
            if !cli.cache.exists() {
                println!("{}: no cache", cli.cache.display());
                return Ok(ExitCode::SUCCESS);
            }
            let text = fs::read_to_string(&cli.cache)?;
            let mut models = std::collections::BTreeMap::<String, usize>::new();
            for (i, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
                let rec: CacheRecord =
                    serde_json::from_str(line).with_context(|| format!("{}:{}", cli.cache.display(), i + 1))?;
                *models.entry(rec.request.model_id).or_default() += 1;
            }
            println!("{}: {} records", cli.cache.display(), models.values().sum::<usize>());
            for (m, n) in models {
                println!("  {m}: {n}");
            }
        }
        CacheCommand::Clear => {
            if cli.cache.exists() {
                fs::remove_file(&cli.cache)?;
            }
            println!("{} cleared", cli.cache.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}
