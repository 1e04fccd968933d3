use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use retarget::advisor::{Advisor, HeuristicAdvisor, RemoteAdvisor, RemoteConfig};
use retarget::depgraph::build_graph;
use retarget::harness::{
    default_workers, export_matrix, load_corpus, load_datasets, run_matrix, Condition,
    ExportFormat, MatrixCell,
};
use retarget::linter::{lint_with, LintOptions, OVERPLOT_POINTS};
use retarget::mapper::{extract_roles, plan_mapping, Flag, MappingPlan};
use retarget::profiler::Dataset;
use retarget::rewriter::{retarget, retarget_with_plan};
use retarget::spec::{parse_spec, serialize_spec, ChartSpec};

#[derive(Parser)]
#[command(name = "retarget", version, about = "Adapt chart specifications to new datasets")]
struct Cli {
    /// Advisor consulted at each stage.
    #[arg(long, value_enum, global = true, default_value_t = AdvisorChoice::None)]
    advisor: AdvisorChoice,
    /// Append advisor requests and replies to this JSONL file.
    #[arg(long, global = true)]
    transcript: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AdvisorChoice {
    /// Deterministic heuristics only.
    None,
    /// Heuristic advisor (same results as `none`, exercised through the advisor path).
    Heuristic,
    /// Chat-completions endpoint from RETARGET_LLM_URL / RETARGET_LLM_KEY.
    Remote,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GraphFormat {
    Json,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Print the dependency graph of a spec.
    Deps {
        spec: PathBuf,
        #[arg(long, value_enum, default_value_t = GraphFormat::Json)]
        format: GraphFormat,
    },
    /// Print the profile of a CSV or JSON table.
    Profile { data: PathBuf },
    /// Write an editable mapping plan.
    Plan {
        spec: PathBuf,
        data: PathBuf,
        /// force-aggregate[=op], force-filter=<col>, drop-encoding=<channel>,
        /// facet-by=<col>, keep-domains
        #[arg(long = "flag")]
        flags: Vec<String>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Retarget a spec, writing it with a `.log.json` edit log beside it.
    Apply {
        spec: PathBuf,
        data: PathBuf,
        /// Plan file from `retarget plan`, possibly hand-edited.
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Flags for the generated plan; ignored with --plan.
        #[arg(long = "flag")]
        flags: Vec<String>,
        /// Defaults to `<spec>.<data>.json` in the current directory.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Lint a spec against a dataset. Exit code 0 clean, 1 minor or major, 2 fatal.
    Lint {
        spec: PathBuf,
        data: PathBuf,
        #[arg(long, default_value_t = OVERPLOT_POINTS)]
        overplot_threshold: usize,
        /// Data the spec was originally written for; enables stale-title checks.
        #[arg(long)]
        source_data: Option<PathBuf>,
    },
    /// Run the chart × dataset × condition matrix.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        datasets: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "baseline,pipeline")]
        conditions: Vec<Condition>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn read_spec(path: &Path) -> Result<ChartSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_spec(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_data(path: &Path) -> Result<Dataset> {
    Dataset::load(path).with_context(|| format!("loading {}", path.display()))
}

fn parse_flags(flags: &[String]) -> Result<Vec<Flag>> {
    flags
        .iter()
        .map(|f| f.parse::<Flag>().with_context(|| format!("bad flag {f:?}")))
        .collect()
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn pretty(value: &impl serde::Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn make_advisor(choice: AdvisorChoice, transcript: Option<PathBuf>) -> Result<Option<Box<dyn Advisor>>> {
    Ok(match choice {
        AdvisorChoice::None => None,
        AdvisorChoice::Heuristic => Some(Box::new(HeuristicAdvisor)),
        AdvisorChoice::Remote => {
            let Some(mut cfg) = RemoteConfig::from_env() else {
                bail!("--advisor remote needs RETARGET_LLM_URL");
            };
            cfg.transcript = transcript;
            Some(Box::new(RemoteAdvisor::new(cfg).context("opening transcript")?))
        }
    })
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn log_path(out: &Path) -> PathBuf {
    out.with_file_name(format!("{}.log.json", stem(out)))
}

fn cell_dir(out: &Path, cell: &MatrixCell) -> PathBuf {
    out.join("cells")
        .join(format!("{}__{}__{}", cell.chart, cell.dataset, cell.condition.as_str()))
}

fn run(cli: Cli) -> Result<i32> {
    let advisor = make_advisor(cli.advisor, cli.transcript)?;
    let advisor = advisor.as_deref();
    match cli.command {
        Command::Deps { spec, format } => {
            let graph = build_graph(&read_spec(&spec)?)?;
            match format {
                GraphFormat::Json => print!("{}", pretty(&graph.to_json())?),
                GraphFormat::Text => print!("{}", graph.to_text()),
            }
        }
        Command::Profile { data } => print!("{}", pretty(&read_data(&data)?.profile)?),
        Command::Plan { spec, data, flags, out } => {
            let spec = read_spec(&spec)?;
            let data = read_data(&data)?;
            let roles = extract_roles(&spec, &retarget::depgraph::build_graph_lenient(&spec));
            let plan = plan_mapping(&roles, &data.profile, &parse_flags(&flags)?, advisor)?;
            let text = pretty(&plan)?;
            match out {
                Some(p) => write(&p, text)?,
                None => print!("{text}"),
            }
        }
        Command::Apply { spec: spec_path, data: data_path, plan, flags, out } => {
            let spec = read_spec(&spec_path)?;
            let data = read_data(&data_path)?;
            let result = match plan {
                Some(p) => {
                    let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    let plan: MappingPlan =
                        serde_json::from_str(&text).with_context(|| format!("parsing plan {}", p.display()))?;
                    retarget_with_plan(&spec, &data, plan)?
                }
                None => retarget(&spec, &data, &parse_flags(&flags)?, advisor)?,
            };
            let out = out.unwrap_or_else(|| {
                PathBuf::from(format!("{}.{}.json", stem(&spec_path), stem(&data_path)))
            });
            write(&out, serialize_spec(&result.spec))?;
            write(&log_path(&out), pretty(&result.log)?)?;
            for note in &result.fallbacks {
                eprintln!("note: {note}");
            }
            eprintln!("wrote {} ({} edits)", out.display(), result.log.len());
        }
        Command::Lint { spec, data, overplot_threshold, source_data } => {
            let spec = read_spec(&spec)?;
            let data = read_data(&data)?;
            let mut options = LintOptions::default().with_overplot_threshold(overplot_threshold);
            if let Some(src) = source_data {
                options.previous_columns = read_data(&src)?.profile.column_names();
            }
            let report = lint_with(&spec, &data.profile, &data.table, &options);
            print!("{}", pretty(&report)?);
            return Ok(report.exit_code());
        }
        Command::Eval { corpus, datasets, conditions, out, workers } => {
            let charts = load_corpus(&corpus)?;
            let tables = load_datasets(&datasets)?;
            let workers = workers.unwrap_or_else(|| default_workers(advisor));
            let matrix = run_matrix(&charts, &tables, &conditions, advisor, workers)?;
            write(&out.join("matrix.csv"), export_matrix(&matrix, ExportFormat::Csv))?;
            write(&out.join("matrix.json"), export_matrix(&matrix, ExportFormat::Json))?;
            for cell in &matrix.cells {
                let dir = cell_dir(&out, cell);
                if let Some(text) = &cell.artifacts.spec_text {
                    write(&dir.join("spec.json"), text)?;
                }
                if let Some(plan) = &cell.artifacts.plan {
                    write(&dir.join("plan.json"), pretty(plan)?)?;
                }
                if let Some(log) = &cell.artifacts.log {
                    write(&dir.join("log.json"), pretty(log)?)?;
                }
                if let Some(report) = &cell.report {
                    write(&dir.join("report.json"), pretty(report)?)?;
                }
                log::info!("{} {} {}: {:?} in {:?}", cell.chart, cell.dataset, cell.condition.as_str(), cell.outcome, cell.wall);
            }
            for (condition, n) in &matrix.normalized {
                eprintln!(
                    "{}: {} executed, {} rendered, semantic/rendered {}, pragmatic/rendered {}",
                    condition.as_str(),
                    n.executed,
                    n.rendered,
                    n.semantic_per_rendered.map_or("-".into(), |v| format!("{v:.2}")),
                    n.pragmatic_per_rendered.map_or("-".into(), |v| format!("{v:.2}")),
                );
            }
        }
    }
    Ok(0)
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(3);
        }
    }
}
