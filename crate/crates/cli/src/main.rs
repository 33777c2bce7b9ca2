//! `tutorbot`: serve the assistant, replay scenarios, generate corpora, export
//! training data and train the learned units.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tutorbot_core::catalog::search;
use tutorbot_core::dialogue_state::{audit, enumerate_transitions};
use tutorbot_core::record::{read_dialogues, write_export, Artifact, ExportFilter};
use tutorbot_core::{DesignConfig, Engine, EngineConfig, Outcome};
use tutorbot_eval::{generate_corpus, load, run_all, to_toml, Phrasings};
use tutorbot_learn::{
    build_dataset, build_from_export, evaluate, train_nap, train_ner, BuildOptions, Gazetteer, LabeledDataset,
    NapModel, NapSetting, NerModel, TrainConfig,
};
use tutorbot_service::{Service, ServiceConfig};

#[derive(Parser)]
#[command(name = "tutorbot", version, about = "Slot-filling tutoring assistant")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Replay scenario files against the engine; exits 1 unless all pass.
    Run {
        /// A scenario file or a directory of them.
        path: PathBuf,
        /// Print the machine-readable report instead of the summary.
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Generate a corpus: scenarios plus the export files of the dialogues.
    Generate {
        #[arg(short, long, default_value_t = 300)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        phrasings: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Search the catalog and show the ranked matches.
    Query {
        text: String,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Print the state-to-action table of a rule design.
    ExportTransitions {
        /// current, legacy or chapter_only
        #[arg(long, default_value = "current")]
        design: String,
        #[arg(long)]
        json: bool,
    },
    /// Export the stored sessions of a service storage directory.
    Export {
        #[arg(long)]
        storage: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = OutcomeArg::Handover)]
        outcome: OutcomeArg,
        /// Inclusive start date, YYYY-MM-DD.
        #[arg(long)]
        since: Option<String>,
        #[arg(long)]
        until: Option<String>,
        /// Comma-separated artifacts; all five when omitted.
        #[arg(long, value_delimiter = ',')]
        formats: Vec<String>,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Build the labeled dataset from an export directory or a dialogues file.
    BuildDataset {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        lowercase: bool,
        #[arg(long)]
        keep_punctuation: bool,
    },
    /// Train the next-action and tagging models on a dataset.
    Train {
        #[arg(short, long)]
        dataset: PathBuf,
        /// Directory receiving nap_default.json, nap_extended.json and ner.json.
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = TrainConfig::default().epochs)]
        epochs: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Score trained models on a dataset split.
    Evaluate {
        #[arg(short, long)]
        dataset: PathBuf,
        #[arg(short, long)]
        models: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OutcomeArg {
    Handover,
    Abandoned,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Eval,
    Test,
}

#[derive(Args, Default)]
struct EngineArgs {
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[arg(long)]
    templates: Option<PathBuf>,
    #[arg(long)]
    locale: Option<String>,
}

impl EngineArgs {
    fn engine(&self) -> Result<Engine> {
        let cfg = EngineConfig {
            catalog: self.catalog.clone(),
            templates: self.templates.clone(),
            locale: self.locale.clone(),
            ..Default::default()
        };
        Engine::from_config(&cfg).context("loading the engine data")
    }
}

#[derive(Args)]
struct ServeArgs {
    /// TOML file; `TUTORBOT_*` variables and these flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    host: Option<String>,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    storage: Option<PathBuf>,
    #[arg(long)]
    token: Option<String>,
    #[command(flatten)]
    engine: EngineArgs,
}

fn service_config(a: &ServeArgs) -> Result<ServiceConfig> {
    let mut c = match &a.config {
        Some(p) => ServiceConfig::load(p)?,
        None => ServiceConfig::default(),
    };
    c.apply_env(|k| std::env::var(k).ok())?;
    if let Some(v) = &a.host {
        c.host = v.clone();
    }
    if let Some(v) = a.port {
        c.port = v;
    }
    if let Some(v) = &a.storage {
        c.storage = v.clone();
    }
    if let Some(v) = &a.token {
        c.token = Some(v.clone());
    }
    if let Some(v) = &a.engine.catalog {
        c.catalog = Some(v.clone());
    }
    if let Some(v) = &a.engine.templates {
        c.templates = Some(v.clone());
    }
    if let Some(v) = &a.engine.locale {
        c.locale = Some(v.clone());
    }
    Ok(c)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string(value)?).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn artifacts(names: &[String]) -> Result<Vec<Artifact>> {
    if names.is_empty() {
        return Ok(Artifact::ALL.to_vec());
    }
    names.iter().map(|n| Artifact::parse(n).with_context(|| format!("unknown artifact {n}"))).collect()
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Serve(args) => {
            tracing_subscriber::fmt()
                .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
                .init();
            let cfg = service_config(&args)?;
            tokio::runtime::Runtime::new()?.block_on(tutorbot_service::serve(&cfg))?;
        }
        Command::Run { path, json, engine } => {
            let scenarios = load(&path)?;
            let report = run_all(&scenarios, &engine.engine()?);
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.summary());
            }
            if !report.all_passed() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Generate { n, seed, phrasings, out, engine } => {
            let phrasings = match phrasings {
                Some(p) => Phrasings::load(&p)?,
                None => Phrasings::bundled(),
            };
            let corpus = generate_corpus(n, seed, &phrasings, &engine.engine()?);
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("scenarios.toml"), to_toml(&corpus.scenarios))?;
            write_export(&out, &corpus.records, &ExportFilter::all(), &Artifact::ALL)?;
            println!("{} dialogues, {:.2} user turns on average, written to {}", n, corpus.mean_turns(), out.display());
        }
        Command::Query { text, engine } => {
            let engine = engine.engine()?;
            let index = engine.nlu().index();
            let hits = search(index, &index.normalize(&text), engine.nlu().params());
            for h in hits {
                let title = index.get(&h.entry_id).map_or("", |e| e.title.as_str());
                let terms: Vec<String> =
                    h.matched_terms.iter().map(|m| format!("{}~{}({})", m.query_term, m.index_term, m.distance)).collect();
                println!("{:.3}\t{}\t{}\t{}", h.score, h.entry_id, title, terms.join(" "));
            }
        }
        Command::ExportTransitions { design, json } => {
            let d = DesignConfig::by_name(&design).with_context(|| format!("unknown design {design}"))?;
            let table = enumerate_transitions(&d).map_err(anyhow::Error::msg)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&table)?);
            } else {
                print!("{}", table.to_tsv());
                let a = audit(&d).map_err(anyhow::Error::msg)?;
                eprintln!("{} valid states, {} rows {:?}", a.valid_states, a.rows, a.rows_by_rule);
            }
        }
        Command::Export { storage, out, outcome, since, until, formats, engine } => {
            let service = Service::open(Arc::new(engine.engine()?), &storage)?;
            let outcome = match outcome {
                OutcomeArg::Handover => Some(Outcome::Handover),
                OutcomeArg::Abandoned => Some(Outcome::Abandoned),
                OutcomeArg::All => None,
            };
            let records = tokio::runtime::Runtime::new()?.block_on(service.snapshot());
            let filter = ExportFilter { outcome, since, until };
            for p in write_export(&out, &records, &filter, &artifacts(&formats)?)? {
                println!("{}", p.display());
            }
        }
        Command::BuildDataset { input, out, seed, lowercase, keep_punctuation } => {
            let opts = BuildOptions { seed, lowercase, keep_punctuation, ..Default::default() };
            let ds = if input.is_dir() {
                build_from_export(&input, &opts)?
            } else {
                build_dataset(&read_dialogues(&input)?, &opts)?
            };
            write_json(&out, &ds)?;
            let [tr, ev, te] = ds.sizes();
            println!("dialogues/utterances: train {}/{} eval {}/{} test {}/{}", tr.0, tr.1, ev.0, ev.1, te.0, te.1);
        }
        Command::Train { dataset, out, epochs, seed } => {
            let ds: LabeledDataset = read_json(&dataset)?;
            let cfg = TrainConfig { epochs, seed, ..Default::default() };
            std::fs::create_dir_all(&out)?;
            for setting in [NapSetting::Default, NapSetting::Extended] {
                let m = train_nap(&ds, setting, &cfg)?;
                write_json(&out.join(format!("nap_{}.json", setting.as_str())), &m)?;
            }
            let gaz = Gazetteer::from_index(Engine::bundled().nlu().index());
            write_json(&out.join("ner.json"), &train_ner(&ds, gaz, &cfg)?)?;
            println!("models written to {}", out.display());
        }
        Command::Evaluate { dataset, models, split } => {
            let ds: LabeledDataset = read_json(&dataset)?;
            let dialogues = match split {
                SplitArg::Train => &ds.train,
                SplitArg::Eval => &ds.eval,
                SplitArg::Test => &ds.test,
            };
            if dialogues.is_empty() {
                bail!("the split has no dialogues");
            }
            let ner: NerModel = read_json(&models.join("ner.json"))?;
            let mut report = serde_json::Map::new();
            for setting in [NapSetting::Default, NapSetting::Extended] {
                let nap: NapModel = read_json(&models.join(format!("nap_{}.json", setting.as_str())))?;
                report.insert(setting.as_str().into(), serde_json::to_value(evaluate(dialogues, &nap, &ner))?);
            }
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}
