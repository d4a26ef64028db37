use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use patentforge::claims::{all_features, parse_claims, Claim};
use patentforge::dataset::{build_corpus, stats_path, CorpusConfig, DatasetConfig};
use patentforge::drawings::{ingest_drawing_text, ComponentPair, DrawingIngest, DrawingPage};
use patentforge::enrichment::{build_tuple, clean_specification, render_specification, GeneratedSpecification};
use patentforge::generation::{generate_project, BackendRegistry, GenerationOptions, RemoteBackend, MOCK_BACKEND_ID};
use patentforge::mapper::{parse_gold, precision_at_k, suggest_mappings, MappingSet, SuggestConfig};
use patentforge::service::ServiceConfig;
use patentforge::similarity::score_texts;

#[derive(Parser)]
#[command(name = "patentforge", version, about = "Patent drafting pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Claim text parsing.
    Claims {
        #[command(subcommand)]
        command: ClaimsCommand,
    },
    /// Drawing text ingestion.
    Drawings {
        #[command(subcommand)]
        command: DrawingsCommand,
    },
    /// Similarity of one feature text and one component name.
    Score {
        #[arg(long)]
        feature: String,
        #[arg(long)]
        component: String,
    },
    /// Feature-to-component suggestions and evaluation.
    Map {
        #[command(subcommand)]
        command: MapCommand,
    },
    /// Training tuple corpus construction.
    Dataset {
        #[command(subcommand)]
        command: DatasetCommand,
    },
    /// Whole pipeline on local files.
    Pipeline {
        #[command(subcommand)]
        command: PipelineCommand,
    },
    /// Strip markup from generated text.
    Clean { file: PathBuf },
    /// Start the HTTP API.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ClaimsCommand {
    Parse {
        file: PathBuf,
        /// Emit the parsed claims as JSON.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand)]
enum DrawingsCommand {
    /// `path` is a JSON array of pages or a directory of `.txt` page exports.
    Ingest {
        path: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct ProjectFiles {
    #[arg(long)]
    claims: PathBuf,
    #[arg(long)]
    drawings: PathBuf,
    #[arg(long, default_value_t = patentforge::mapper::DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long, default_value_t = patentforge::mapper::DEFAULT_TOP_K)]
    k: usize,
}

#[derive(Subcommand)]
enum MapCommand {
    Suggest {
        #[command(flatten)]
        files: ProjectFiles,
    },
    /// precision@k of the suggestions against a gold file (`{"1-0": ["1:104"]}`).
    Eval {
        #[command(flatten)]
        files: ProjectFiles,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long = "at", default_values_t = [5usize, 3])]
        at: Vec<usize>,
    },
}

#[derive(Subcommand)]
enum DatasetCommand {
    Build {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = patentforge::dataset::DEFAULT_MAX_TOKENS)]
        max_tokens: usize,
        /// CPC prefix filter; pass an empty string to keep every document.
        #[arg(long, default_value = patentforge::dataset::DEFAULT_CPC_PREFIX)]
        cpc: String,
        #[arg(long, default_value_t = patentforge::mapper::DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value_t = patentforge::dataset::DEFAULT_ALIGN_THRESHOLD)]
        align_threshold: f64,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
        #[arg(long)]
        fail_fast: bool,
    },
}

#[derive(Subcommand)]
enum PipelineCommand {
    /// Parse, map, generate and clean; prints the specification.
    Run {
        #[command(flatten)]
        files: ProjectFiles,
        /// Use these links instead of the suggestions.
        #[arg(long)]
        gold: Option<PathBuf>,
        /// Generate unmapped features too.
        #[arg(long)]
        allow_unmapped: bool,
        /// Remote backend endpoint; the mock backend is used when absent.
        #[arg(long)]
        backend_url: Option<String>,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
        #[arg(long, default_value_t = 600.0)]
        deadline_seconds: f64,
        #[arg(long)]
        numbered: bool,
        #[arg(long)]
        json: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

type CliResult<T> = Result<T, String>;

/// `println!` that exits quietly when stdout is closed (e.g. piped into `head`).
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write;
        if let Err(e) = writeln!(std::io::stdout().lock(), $($arg)*) {
            if e.kind() == std::io::ErrorKind::BrokenPipe {
                std::process::exit(0);
            }
            panic!("writing to stdout: {e}");
        }
    }};
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn print_json<T: serde::Serialize>(value: &T) {
    out!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn load_claims(path: &Path) -> CliResult<Vec<Claim>> {
    parse_claims(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_pages(path: &Path) -> CliResult<Vec<DrawingPage>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| format!("{}: {e}", path.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        files.sort();
        files
            .iter()
            .map(|f| {
                let label = f.file_stem().and_then(|s| s.to_str()).unwrap_or("page");
                Ok(DrawingPage::new(label, &read(f)?))
            })
            .collect()
    } else {
        serde_json::from_str(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))
    }
}

fn load_drawings(path: &Path) -> CliResult<DrawingIngest> {
    let ingest = ingest_drawing_text(&load_pages(path)?).map_err(|e| format!("{}: {e}", path.display()))?;
    for w in &ingest.warnings {
        eprintln!("warning: {w}");
    }
    Ok(ingest)
}

fn suggest(files: &ProjectFiles) -> CliResult<(Vec<Claim>, DrawingIngest, MappingSet)> {
    let claims = load_claims(&files.claims)?;
    let drawings = load_drawings(&files.drawings)?;
    let components: Vec<ComponentPair> = drawings.figures.iter().flat_map(|f| f.components.clone()).collect();
    let config = SuggestConfig {
        threshold: files.threshold,
        k: files.k,
    };
    let set = suggest_mappings(&all_features(&claims), &components, config).map_err(|e| e.to_string())?;
    Ok((claims, drawings, set))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Claims {
            command: ClaimsCommand::Parse { file, json },
        } => {
            let claims = load_claims(&file)?;
            if json {
                print_json(&claims);
            } else {
                for c in &claims {
                    let dep = c.depends_on.map(|d| format!(" (depends on {d})")).unwrap_or_default();
                    out!("claim {}{dep}: {}", c.number, c.preamble);
                    for f in &c.features {
                        out!("  [{}] {}", f.id(), f.text);
                    }
                }
            }
        }
        Command::Drawings {
            command: DrawingsCommand::Ingest { path, json },
        } => {
            let ingest = load_drawings(&path)?;
            if json {
                print_json(&ingest);
            } else {
                for f in &ingest.figures {
                    out!("FIG. {} ({})", f.figure_number, f.source_label);
                    for c in &f.components {
                        out!("  {} {}", c.name, c.number);
                    }
                }
            }
        }
        Command::Score { feature, component } => print_json(&score_texts(&feature, &component)),
        Command::Map {
            command: MapCommand::Suggest { files },
        } => print_json(&suggest(&files)?.2),
        Command::Map {
            command: MapCommand::Eval { files, gold, at },
        } => {
            let (_, _, set) = suggest(&files)?;
            let gold = parse_gold(&read(&gold)?).map_err(|e| e.to_string())?;
            let mut out = serde_json::Map::new();
            for k in at {
                let p = precision_at_k(&set, &gold, k).map_err(|e| e.to_string())?;
                out.insert(format!("precision_at_{k}"), json!(p));
            }
            print_json(&out);
        }
        Command::Dataset {
            command:
                DatasetCommand::Build {
                    input,
                    out,
                    max_tokens,
                    cpc,
                    threshold,
                    align_threshold,
                    parallelism,
                    fail_fast,
                },
        } => {
            let config = CorpusConfig {
                dataset: DatasetConfig {
                    max_tokens,
                    threshold,
                    align_threshold,
                    ..Default::default()
                },
                cpc_prefix: Some(cpc).filter(|c| !c.trim().is_empty()),
                parallelism,
                fail_fast,
            };
            let stats = build_corpus(&input, &out, &config).map_err(|e| e.to_string())?;
            eprintln!(
                "{} documents ({} accepted, {} filtered, {} rejected), {} tuples, {} features dropped; stats in {}",
                stats.documents_seen,
                stats.documents_accepted,
                stats.documents_filtered,
                stats.documents_rejected,
                stats.tuples_emitted,
                stats.features_dropped,
                stats_path(&out).display()
            );
        }
        Command::Pipeline {
            command:
                PipelineCommand::Run {
                    files,
                    gold,
                    allow_unmapped,
                    backend_url,
                    parallelism,
                    deadline_seconds,
                    numbered,
                    json,
                    out,
                },
        } => {
            let (claims, drawings, suggested) = suggest(&files)?;
            let links = match gold {
                Some(g) => {
                    let gold = parse_gold(&read(&g)?).map_err(|e| e.to_string())?;
                    gold.into_iter()
                        .map(|g| (g.feature_id, g.component_refs.into_iter().collect()))
                        .collect()
                }
                None => suggested.by_feature(),
            };
            let mut tuples = Vec::new();
            for feature in all_features(&claims) {
                let mapped: Vec<ComponentPair> = links
                    .get(&feature.id())
                    .into_iter()
                    .flatten()
                    .filter_map(|r| drawings.figures.iter().flat_map(|f| f.components.iter()).find(|c| c.reference() == *r))
                    .cloned()
                    .collect();
                if mapped.is_empty() && !allow_unmapped {
                    continue;
                }
                tuples.push(build_tuple(&feature, &mapped, &drawings.figures, false).map_err(|e| e.to_string())?);
            }
            let mut registry = BackendRegistry::with_mock();
            let backend_id = match backend_url {
                Some(url) => {
                    registry.register(Arc::new(RemoteBackend::new("remote", &url).map_err(|e| e.to_string())?));
                    "remote"
                }
                None => MOCK_BACKEND_ID,
            };
            let options = GenerationOptions {
                parallelism: parallelism.max(1),
                deadline: Duration::try_from_secs_f64(deadline_seconds).map_err(|e| e.to_string())?,
                ..Default::default()
            };
            let generated = generate_project(&tuples, backend_id, &registry, options).map_err(|e| e.to_string())?;
            for r in generated.results.iter().filter(|r| !r.is_ok()) {
                eprintln!("warning: feature {} failed: {}", r.feature_id, r.diagnostic.as_deref().unwrap_or("?"));
            }
            let specs: Vec<GeneratedSpecification> = generated
                .results
                .iter()
                .filter(|r| r.is_ok())
                .map(|r| GeneratedSpecification::from_raw(r.feature_id, &r.raw_output))
                .collect();
            let text = if json {
                serde_json::to_string_pretty(&json!({
                    "results": generated.results,
                    "summary": generated.summary,
                    "specification": specs,
                }))
                .expect("serializable")
            } else {
                render_specification(&specs, numbered)
            };
            match out {
                Some(path) => fs::write(&path, text + "\n").map_err(|e| format!("{}: {e}", path.display()))?,
                None => out!("{text}"),
            }
        }
        Command::Clean { file } => {
            let cleaned = clean_specification(&read(&file)?);
            for w in &cleaned.warnings {
                eprintln!("warning: stripped unknown token {}", w.token);
            }
            out!("{}", cleaned.cleaned);
        }
        Command::Serve { port, config, data_dir } => {
            let mut config = ServiceConfig::load(config.as_deref()).map_err(|e| e.to_string())?;
            if let Some(dir) = data_dir {
                config.data_dir = dir;
            }
            let addr = port.map(|p| std::net::SocketAddr::from(([127, 0, 0, 1], p)));
            let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
            runtime
                .block_on(patentforge::service::http::serve(&config, addr))
                .map_err(|e| e.to_string())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
