use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use covenant::interface::{serve, Engine, EngineConfig, EngineError, EvalRequest};

#[derive(Parser)]
#[command(name = "covenant", version, about = "Contract question answering with cited reports")]
struct Cli {
    /// TOML config file; defaults to $COVENANT_CONFIG, then built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, chunk and index a plain-text or markdown contract.
    Ingest { file: PathBuf },
    /// Interrogate an ingested document and print the report.
    Ask {
        doc_id: String,
        question: String,
        #[arg(long = "d-max")]
        d_max: Option<usize>,
        /// Print the full JSON result instead of markdown.
        #[arg(long)]
        json: bool,
    },
    /// Score retrieval on a benchmark corpus.
    Eval {
        corpus: PathBuf,
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
        /// Output directory for metrics files; defaults to the corpus.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_parser = ["pipeline", "oracle"])]
        retriever: Option<String>,
    },
    /// Run the HTTP service.
    Serve,
    /// Dump a document's chunks as JSON lines.
    Chunks { doc_id: String },
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable output")
}

fn run(cli: Cli) -> Result<(), EngineError> {
    let config = EngineConfig::load(cli.config.as_deref())?;
    let engine = Engine::new(config)?;
    match cli.command {
        Command::Ingest { file } => {
            let text = std::fs::read_to_string(&file).map_err(|e| EngineError::BadRequest(format!("{}: {e}", file.display())))?;
            let name = file.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "document.txt".into());
            println!("{}", to_json(&engine.ingest(&name, &text)?));
        }
        Command::Ask { doc_id, question, d_max, json } => {
            let out = engine.ask(&doc_id, &question, d_max)?;
            if json {
                println!("{}", to_json(&out));
            } else {
                println!("{}", out.markdown);
            }
        }
        Command::Eval { corpus, k, out, retriever } => {
            let report = engine.eval(&EvalRequest { corpus, k, out, retriever })?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", to_json(&report));
        }
        Command::Serve => {
            let rt = tokio::runtime::Runtime::new().map_err(|e| EngineError::Storage(format!("runtime: {e}")))?;
            rt.block_on(serve(Arc::new(engine)))?;
        }
        Command::Chunks { doc_id } => print!("{}", engine.chunks(&doc_id)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
