//! Turning trial documents into structured eligibility clauses, with an LLM
//! backend or an offline dictionary baseline.

mod baseline;
mod direct;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::TrialDoc;
use crate::llm::{assemble_messages, Demonstration, LlmClient, LlmError, PromptBundle};
use crate::logic::{parse_extractor_json, LogicError, StructuredTrial};

pub use baseline::{baseline_extract, Lexicon};
pub use direct::{
    build_direct_match_messages, llm_direct_match, parse_verdict, patient_bundle, DirectMatch, Verdict,
};

#[derive(Error, Debug)]
pub enum ExtractionError {
    #[error("no valid clause could be extracted for {0}")]
    EmptyExtraction(String),

    #[error("lexicon missing or empty")]
    LexiconMissing,

    #[error("invalid lexicon pattern {pattern:?}: {message}")]
    InvalidPattern { pattern: String, message: String },

    #[error("shots must be 0 or 3, got {0}")]
    InvalidShots(usize),

    #[error(transparent)]
    Llm(#[from] LlmError),

    #[error(transparent)]
    Logic(#[from] LogicError),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type ExtractionResult<T> = Result<T, ExtractionError>;

pub const STRUCTURING_SYSTEM: &str = include_str!("../../data/prompts/structuring_system.txt");
pub const STRUCTURING_INSTRUCTIONS: &str = include_str!("../../data/prompts/structuring_instructions.txt");

const DEMONSTRATION_FILES: [&str; 3] = [
    include_str!("../../data/demonstrations/01_dcc3116.json"),
    include_str!("../../data/demonstrations/02_egfr_nsclc.json"),
    include_str!("../../data/demonstrations/03_msi_crc.json"),
];

/// The bundled few-shot demonstrations, in order.
pub fn demonstrations() -> Vec<Demonstration> {
    DEMONSTRATION_FILES
        .iter()
        .map(|s| serde_json::from_str(s).expect("bundled demonstration is valid JSON"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Llm,
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Pending,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionJob {
    pub trial: TrialDoc,
    pub shots: usize,
    pub backend: Backend,
    pub status: JobStatus,
    pub failure_reason: Option<String>,
}

impl ExtractionJob {
    pub fn new(trial: TrialDoc, backend: Backend, shots: usize) -> ExtractionResult<Self> {
        check_shots(shots)?;
        Ok(Self {
            trial,
            shots,
            backend,
            status: JobStatus::Pending,
            failure_reason: None,
        })
    }

    pub fn record(&self) -> JobRecord {
        JobRecord {
            nct_id: self.trial.nct_id.clone(),
            backend: self.backend,
            shots: self.shots,
            status: self.status,
            failure_reason: self.failure_reason.clone(),
        }
    }
}

/// Per-trial provenance written next to the structured output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobRecord {
    pub nct_id: String,
    pub backend: Backend,
    pub shots: usize,
    pub status: JobStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_reason: Option<String>,
}

fn check_shots(shots: usize) -> ExtractionResult<()> {
    if shots == 0 || shots == 3 {
        Ok(())
    } else {
        Err(ExtractionError::InvalidShots(shots))
    }
}

/// XML-like rendering of the fields the model sees: titles, summary,
/// conditions, arm groups and the criteria block.
pub fn serialize_trial_input(trial: &TrialDoc) -> String {
    let mut out = String::new();
    let mut tag = |name: &str, value: &str| {
        if !value.trim().is_empty() {
            out.push_str(&format!("<{name}>{}</{name}>\n", value.trim()));
        }
    };
    tag("brief_title", &trial.brief_title);
    tag("official_title", &trial.official_title);
    tag("brief_summary", &trial.brief_summary);
    for c in &trial.conditions {
        tag("condition", c);
    }
    for arm in &trial.arm_groups {
        out.push_str("<arm_group>\n");
        for (name, value) in [
            ("arm_group_label", &arm.label),
            ("arm_group_type", &arm.group_type),
            ("description", &arm.description),
        ] {
            if !value.trim().is_empty() {
                out.push_str(&format!("<{name}>{}</{name}>\n", value.trim()));
            }
        }
        out.push_str("</arm_group>\n");
    }
    out.push_str("<criteria>\n");
    out.push_str(trial.criteria_text.trim_end());
    out.push_str("\n</criteria>");
    out
}

/// Prompt bundle for structuring one trial; `shots` is 0 or 3.
pub fn build_trial_prompt(trial: &TrialDoc, shots: usize) -> ExtractionResult<PromptBundle> {
    check_shots(shots)?;
    Ok(PromptBundle {
        system_message: STRUCTURING_SYSTEM.to_string(),
        instructions: STRUCTURING_INSTRUCTIONS.to_string(),
        demonstrations: if shots == 3 { demonstrations() } else { Vec::new() },
        user_input: serialize_trial_input(trial),
    })
}

/// Which backend to run and what it needs.
#[derive(Debug, Clone, Copy)]
pub enum Extractor<'a> {
    Llm { client: &'a LlmClient, shots: usize },
    Baseline(&'a Lexicon),
}

impl Extractor<'_> {
    pub fn backend(&self) -> Backend {
        match self {
            Extractor::Llm { .. } => Backend::Llm,
            Extractor::Baseline(_) => Backend::Baseline,
        }
    }

    pub fn shots(&self) -> usize {
        match self {
            Extractor::Llm { shots, .. } => *shots,
            Extractor::Baseline(_) => 0,
        }
    }
}

/// Structures one trial with the chosen backend.
pub fn extract_structured(trial: &TrialDoc, extractor: &Extractor<'_>) -> ExtractionResult<StructuredTrial> {
    if trial.criteria_text.trim().is_empty() {
        return Err(ExtractionError::EmptyExtraction(trial.nct_id.clone()));
    }
    match extractor {
        Extractor::Baseline(lexicon) => baseline_extract(trial, lexicon),
        Extractor::Llm { client, shots } => {
            let bundle = build_trial_prompt(trial, *shots)?;
            let messages = assemble_messages(&bundle)?;
            let completion = client.complete(&messages)?;
            let parsed = parse_extractor_json(&completion.text)?;
            let structured = StructuredTrial::from_clauses(&trial.nct_id, parsed.clauses);
            if structured.clauses.is_empty() {
                return Err(ExtractionError::EmptyExtraction(trial.nct_id.clone()));
            }
            Ok(structured)
        }
    }
}

/// Structured trials (successful jobs only) and one job per input trial,
/// both sorted by NCT ID.
#[derive(Debug, Clone, Default)]
pub struct BatchOutput {
    pub structured: Vec<StructuredTrial>,
    pub jobs: Vec<ExtractionJob>,
}

/// Runs every trial through `extractor` on up to `parallelism` threads.
/// A failing trial marks its job failed and the batch carries on.
pub fn run_batch(trials: Vec<TrialDoc>, extractor: &Extractor<'_>, parallelism: usize) -> ExtractionResult<BatchOutput> {
    check_shots(extractor.shots())?;
    let n = trials.len();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(ExtractionJob, Option<StructuredTrial>)>> = Mutex::new(Vec::with_capacity(n));
    let workers = parallelism.clamp(1, n.max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(trial) = trials.get(i) else {
                    break;
                };
                let mut job = ExtractionJob {
                    trial: trial.clone(),
                    shots: extractor.shots(),
                    backend: extractor.backend(),
                    status: JobStatus::Pending,
                    failure_reason: None,
                };
                let out = match extract_structured(trial, extractor) {
                    Ok(s) => {
                        job.status = JobStatus::Done;
                        Some(s)
                    }
                    Err(e) => {
                        log::warn!("{}: {e}", trial.nct_id);
                        job.status = JobStatus::Failed;
                        job.failure_reason = Some(e.to_string());
                        None
                    }
                };
                results.lock().expect("results lock poisoned").push((job, out));
            });
        }
    });
    let mut results = results.into_inner().expect("results lock poisoned");
    results.sort_by(|a, b| a.0.trial.nct_id.cmp(&b.0.trial.nct_id));
    let mut batch = BatchOutput::default();
    for (job, out) in results {
        batch.jobs.push(job);
        batch.structured.extend(out);
    }
    Ok(batch)
}

/// Sidecar path for job provenance: `structured.jsonl` → `structured.jobs.jsonl`.
pub fn jobs_path(structured: &Path) -> PathBuf {
    let stem = structured
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "structured".into());
    structured.with_file_name(format!("{stem}.jobs.jsonl"))
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> ExtractionResult<()> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item)?;
        buf.push(b'\n');
    }
    let io = |source| ExtractionError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(&buf).map_err(io)?;
    f.sync_all().map_err(io)
}

/// Writes the structured trials and the job sidecar.
pub fn write_batch(batch: &BatchOutput, structured_path: &Path) -> ExtractionResult<()> {
    write_jsonl(structured_path, &batch.structured)?;
    let records: Vec<JobRecord> = batch.jobs.iter().map(ExtractionJob::record).collect();
    write_jsonl(&jobs_path(structured_path), &records)
}
