//! `trialmatch` command-line tool.

use std::fs;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use triage::{ServerConfig, StoreConfig};
use trialmatch::evaluation::{
    dnf_prf, enrollment_recall, entity_prf, feedback_prf, read_jsonl, verdicts_from_records, Averaging,
    ComparisonReport, EnrollmentPair, EntityOptions, FeedbackEvent, GoldTrial,
};
use trialmatch::extraction::{llm_direct_match, patient_bundle, run_batch, write_batch, Extractor, JobStatus, Lexicon};
use trialmatch::ingest::{ingest_path, IngestFilter, TrialDoc, DEFAULT_MAX_LINES};
use trialmatch::llm::{CompletionConfig, HttpTransport, LlmClient, RateLimiter};
use trialmatch::logic::StructuredTrial;
use trialmatch::matcher::{load_patients, DiseaseStateTable, MatchOptions, MatchRecord, Matcher, PatientRecord};
use trialmatch::ontology::Ontology;

#[derive(Parser)]
#[command(name = "trialmatch", version, about = "Structure trial eligibility criteria and match patients")]
struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OntologyArgs {
    /// Histology hierarchy (JSON list of {code, label, parent, synonyms}).
    #[arg(long)]
    oncotree: Option<PathBuf>,
    /// Pathway groups (JSON object of pathway name to genes).
    #[arg(long)]
    pathways: Option<PathBuf>,
}

impl OntologyArgs {
    fn load(&self) -> Result<Ontology> {
        Ok(Ontology::load(self.oncotree.as_deref(), self.pathways.as_deref())?)
    }
}

#[derive(Args)]
struct LlmArgs {
    /// Answer from a recorded transcript; no network access.
    #[arg(long, conflicts_with = "record")]
    replay: Option<PathBuf>,
    /// Append every live exchange to this transcript.
    #[arg(long)]
    record: Option<PathBuf>,
    /// Context window of the model, in tokens.
    #[arg(long)]
    context_tokens: Option<usize>,
    /// Maximum requests per second to the live endpoint.
    #[arg(long)]
    rate_limit: Option<f64>,
}

impl LlmArgs {
    fn client(&self) -> Result<LlmClient> {
        let mut config = CompletionConfig::from_env();
        if let Some(n) = self.context_tokens {
            config.context_token_limit = n;
        }
        if let Some(path) = &self.replay {
            return LlmClient::replay(config, path).with_context(|| format!("loading transcript {}", path.display()));
        }
        let mut client = LlmClient::new(config, Arc::new(HttpTransport::from_env()?))?;
        if let Some(rate) = self.rate_limit {
            client = client.with_rate_limit(RateLimiter::new(rate, 1));
        }
        if let Some(path) = &self.record {
            client = client.with_recorder(path)?;
        }
        Ok(client)
    }
}

#[derive(Args)]
struct MatchFlags {
    /// Treat uninterpretable inclusion atoms as satisfied.
    #[arg(long)]
    lenient: bool,
    /// Do not evaluate exclusion atoms.
    #[arg(long)]
    ignore_exclusions: bool,
    /// Disease-state term table (JSON).
    #[arg(long)]
    disease_states: Option<PathBuf>,
}

impl MatchFlags {
    fn options(&self) -> Result<MatchOptions> {
        let disease_states = match &self.disease_states {
            Some(p) => DiseaseStateTable::load(p)?,
            None => DiseaseStateTable::default(),
        };
        Ok(MatchOptions {
            lenient: self.lenient,
            ignore_exclusions: self.ignore_exclusions,
            disease_states,
        })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Llm,
    Baseline,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Regime {
    Entities,
    Dnf,
    Enrollment,
    Feedback,
}

#[derive(Subcommand)]
enum Command {
    /// Parse registry XML into a TrialDoc JSONL file.
    Ingest {
        /// XML file or directory of XML files.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MAX_LINES)]
        max_lines: usize,
        /// Filter settings (JSON); defaults to oncology treatment trials.
        #[arg(long, conflicts_with = "no_filter")]
        filter_config: Option<PathBuf>,
        /// Keep every parsed trial.
        #[arg(long)]
        no_filter: bool,
    },
    /// Turn trial criteria into structured clause sets.
    Structure {
        /// TrialDoc JSONL.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        backend: BackendArg,
        /// Few-shot demonstrations for the llm backend: 0 or 3.
        #[arg(long, default_value_t = 3)]
        shots: usize,
        #[arg(long, default_value_t = 4)]
        parallelism: usize,
        #[command(flatten)]
        llm: LlmArgs,
        #[command(flatten)]
        ontology: OntologyArgs,
    },
    /// Ask the model directly whether one patient fits one trial.
    DirectMatch {
        /// PatientRecord JSON.
        #[arg(long)]
        patient: PathBuf,
        #[arg(long)]
        trial: String,
        /// TrialDoc JSONL holding the trial.
        #[arg(long, default_value = "trials.jsonl")]
        trials: PathBuf,
        #[command(flatten)]
        llm: LlmArgs,
    },
    /// Match every patient against every structured trial.
    Match {
        #[arg(long)]
        patients: PathBuf,
        /// StructuredTrial JSONL.
        #[arg(long)]
        trials: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flags: MatchFlags,
        #[command(flatten)]
        ontology: OntologyArgs,
    },
    /// Score predictions against a reference.
    Eval {
        #[arg(value_enum)]
        regime: Regime,
        /// Gold trials (entities, dnf), enrollment pairs, or feedback events.
        #[arg(long)]
        gold: PathBuf,
        /// Structured trials (entities, dnf) or match results (enrollment, feedback).
        #[arg(long)]
        pred: PathBuf,
        /// Compare entities by ontology code instead of text.
        #[arg(long)]
        normalized: bool,
        /// Average per trial instead of pooling counts.
        #[arg(long)]
        macro_average: bool,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        ontology: OntologyArgs,
    },
    /// Run the triage HTTP service over a data directory.
    Serve {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Require this bearer token on every request.
        #[arg(long, env = "TRIALMATCH_TRIAGE_TOKEN", hide_env_values = true)]
        token: Option<String>,
        /// Browser origin allowed by CORS; any origin when unset.
        #[arg(long)]
        cors_origin: Option<String>,
        #[command(flatten)]
        flags: MatchFlags,
    },
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item)?;
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(&buf)?;
    f.sync_all()?;
    Ok(())
}

fn ingest(input: &Path, out: &Path, max_lines: usize, filter_config: Option<&Path>, no_filter: bool) -> Result<()> {
    let filter = match filter_config {
        Some(p) => Some(IngestFilter::load(p)?),
        None if no_filter => None,
        None => Some(IngestFilter::default()),
    };
    let report = ingest_path(input, filter.as_ref(), max_lines)?;
    write_jsonl(out, &report.kept)?;
    for (path, err) in &report.failed {
        eprintln!("failed: {}: {err}", path.display());
    }
    eprintln!(
        "kept {}, filtered out {}, failed {}",
        report.kept.len(),
        report.filtered_out.len(),
        report.failed.len()
    );
    Ok(())
}

fn structure(
    input: &Path,
    out: &Path,
    backend: BackendArg,
    shots: usize,
    parallelism: usize,
    llm: &LlmArgs,
    ontology: &OntologyArgs,
) -> Result<()> {
    let trials: Vec<TrialDoc> = read_jsonl(input)?;
    let batch = match backend {
        BackendArg::Baseline => {
            let lexicon = Lexicon::from_hierarchy(&ontology.load()?.histology)?;
            run_batch(trials, &Extractor::Baseline(&lexicon), parallelism)?
        }
        BackendArg::Llm => {
            let client = llm.client()?;
            run_batch(trials, &Extractor::Llm { client: &client, shots }, parallelism)?
        }
    };
    write_batch(&batch, out)?;
    for job in batch.jobs.iter().filter(|j| j.status == JobStatus::Failed) {
        eprintln!("failed: {}: {}", job.trial.nct_id, job.failure_reason.as_deref().unwrap_or(""));
    }
    eprintln!("structured {} of {} trials", batch.structured.len(), batch.jobs.len());
    Ok(())
}

fn direct_match(patient: &Path, nct_id: &str, trials: &Path, llm: &LlmArgs) -> Result<()> {
    let text = fs::read_to_string(patient).with_context(|| format!("reading {}", patient.display()))?;
    let record: PatientRecord = serde_json::from_str(&text).with_context(|| format!("parsing {}", patient.display()))?;
    let docs: Vec<TrialDoc> = read_jsonl(trials)?;
    let Some(trial) = docs.iter().find(|d| d.nct_id == nct_id) else {
        bail!("trial {nct_id} not found in {}", trials.display());
    };
    let result = llm_direct_match(&patient_bundle(&record), trial, &llm.client()?)?;
    println!("{}", serde_json::to_string_pretty(&result)?);
    Ok(())
}

fn run_match(patients: &Path, trials: &Path, out: &Path, flags: &MatchFlags, ontology: &OntologyArgs) -> Result<()> {
    let ont = ontology.load()?;
    let patients = load_patients(patients)?;
    for p in &patients {
        if let Err(e) = p.validate(&ont) {
            log::warn!("{e}");
        }
    }
    let trials: Vec<StructuredTrial> = read_jsonl(trials)?;
    let records = Matcher::new(&ont, flags.options()?).match_all(&patients, &trials);
    write_jsonl(out, &records)?;
    let eligible = records.iter().filter(|r| r.eligible).count();
    eprintln!("{eligible} eligible of {} patient/trial pairs", records.len());
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput<T: Serialize> {
    regime: Regime,
    gold: String,
    pred: String,
    averaging: Averaging,
    normalized: bool,
    result: T,
    report: ComparisonReport,
}

struct EvalContext<'a> {
    regime: Regime,
    gold: &'a Path,
    pred: &'a Path,
    averaging: Averaging,
    normalized: bool,
    out: &'a Path,
}

impl EvalContext<'_> {
    /// Prints the table and writes the full result as JSON.
    fn emit<T: Serialize>(&self, result: T, report: ComparisonReport) -> Result<()> {
        print!("{}", report.to_table()?);
        let output = EvalOutput {
            regime: self.regime,
            gold: self.gold.display().to_string(),
            pred: self.pred.display().to_string(),
            averaging: self.averaging,
            normalized: self.normalized,
            result,
            report,
        };
        let mut json = serde_json::to_string_pretty(&output)?;
        json.push('\n');
        fs::write(self.out, json).with_context(|| format!("writing {}", self.out.display()))
    }

    fn system(&self) -> String {
        self.pred
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "prediction".into())
    }
}

fn eval(cx: &EvalContext<'_>, ontology: &OntologyArgs) -> Result<()> {
    let system = cx.system();
    match cx.regime {
        Regime::Entities => {
            let ont = if cx.normalized { Some(ontology.load()?) } else { None };
            let gold: Vec<GoldTrial> = read_jsonl(cx.gold)?;
            let pred: Vec<StructuredTrial> = read_jsonl(cx.pred)?;
            let opts = EntityOptions {
                normalizer: ont.as_ref(),
                averaging: cx.averaging,
            };
            let scores = entity_prf(&gold, &pred, opts)?;
            let mut report = ComparisonReport::entities();
            report.push_entities(&system, &scores)?;
            cx.emit(scores, report)
        }
        Regime::Dnf => {
            let gold: Vec<GoldTrial> = read_jsonl(cx.gold)?;
            let pred: Vec<StructuredTrial> = read_jsonl(cx.pred)?;
            let scores = dnf_prf(&gold, &pred, cx.averaging)?;
            let mut report = ComparisonReport::dnf();
            report.push_dnf(&system, &scores)?;
            cx.emit(scores, report)
        }
        Regime::Enrollment => {
            let pairs: Vec<EnrollmentPair> = read_jsonl(cx.gold)?;
            let records: Vec<MatchRecord> = read_jsonl(cx.pred)?;
            let recall = enrollment_recall(&pairs, &verdicts_from_records(&records));
            let mut report = ComparisonReport::enrollment();
            report.push_recall(&system, &recall)?;
            cx.emit(recall, report)
        }
        Regime::Feedback => {
            let events: Vec<FeedbackEvent> = read_jsonl(cx.gold)?;
            let records: Vec<MatchRecord> = read_jsonl(cx.pred)?;
            let fb = feedback_prf(&events, &verdicts_from_records(&records));
            let mut report = ComparisonReport::feedback();
            report.push(system, vec![fb.metrics])?;
            cx.emit(fb, report)
        }
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match cli.command {
        Command::Ingest { input, out, max_lines, filter_config, no_filter } => {
            ingest(&input, &out, max_lines, filter_config.as_deref(), no_filter)
        }
        Command::Structure { input, out, backend, shots, parallelism, llm, ontology } => {
            structure(&input, &out, backend, shots, parallelism, &llm, &ontology)
        }
        Command::DirectMatch { patient, trial, trials, llm } => direct_match(&patient, &trial, &trials, &llm),
        Command::Match { patients, trials, out, flags, ontology } => run_match(&patients, &trials, &out, &flags, &ontology),
        Command::Eval { regime, gold, pred, normalized, macro_average, out, ontology } => {
            if normalized && !matches!(regime, Regime::Entities) {
                log::warn!("--normalized only affects entity scoring");
            }
            let cx = EvalContext {
                regime,
                gold: &gold,
                pred: &pred,
                averaging: if macro_average { Averaging::Macro } else { Averaging::Micro },
                normalized,
                out: &out,
            };
            eval(&cx, &ontology)
        }
        Command::Serve { data, port, host, token, cors_origin, flags } => {
            let config = ServerConfig {
                store: StoreConfig { data_dir: data, options: flags.options()? },
                bearer_token: token,
                cors_origin,
            };
            let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            runtime.block_on(triage::serve(config, SocketAddr::new(host, port)))?;
            Ok(())
        }
    }
}
