//! Data directory contents and the in-memory state behind the HTTP API.
//!
//! Inputs (patients, trial documents, structured trials and their job
//! sidecar) are treated as immutable files. They are fingerprinted on every
//! read and reparsed only when the fingerprint changes; candidate lists are
//! cached per patient against that fingerprint. Feedback goes to an
//! append-only JSONL log that is synced before an event is acknowledged.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, FixedOffset, SecondsFormat, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use trialmatch::evaluation::{compute_verdicts, dedup_feedback, feedback_prf, FeedbackEvent, Metrics};
use trialmatch::extraction::{jobs_path, Backend, JobRecord};
use trialmatch::ingest::TrialDoc;
use trialmatch::logic::{EligibilityClause, StructuredTrial};
use trialmatch::matcher::{ClauseTrace, MatchOptions, Matcher, PatientRecord};
use trialmatch::ontology::Ontology;

use crate::{TriageError, TriageResult};

/// Operator acknowledgment that the directory holds no protected data.
pub const PHI_GUARD_FILE: &str = "phi_guard";
pub const PATIENTS_FILE: &str = "patients.jsonl";
/// Raw trial documents, used for titles. Optional.
pub const TRIALS_FILE: &str = "trials.jsonl";
pub const STRUCTURED_FILE: &str = "structured.jsonl";
pub const FEEDBACK_FILE: &str = "feedback.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PatientSummary {
    pub patient_id: String,
    pub gender: String,
    pub birth_year: Option<i32>,
    pub tumor_site: String,
    pub histology: String,
    pub stage: String,
}

impl From<&PatientRecord> for PatientSummary {
    fn from(p: &PatientRecord) -> Self {
        Self {
            patient_id: p.patient_id.clone(),
            gender: p.gender.clone(),
            birth_year: p.birth_year(),
            tumor_site: p.tumor_site.clone(),
            histology: p.histology.clone(),
            stage: p.stage.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FeedbackLabel {
    pub selected: bool,
    pub timestamp: DateTime<FixedOffset>,
}

/// One ranked trial for a patient, with the matcher's clause traces and the
/// reviewer's current label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CandidateView {
    pub nct_id: String,
    pub brief_title: String,
    pub official_title: String,
    pub eligible: bool,
    pub score: usize,
    pub matched_clause_index: Option<usize>,
    pub matched_clause: Option<EligibilityClause>,
    pub clause_traces: Vec<ClauseTrace>,
    pub feedback: Option<FeedbackLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub backend: Backend,
    pub shots: usize,
    /// Modification time of the structured output file.
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StructuredView {
    pub nct_id: String,
    pub brief_title: String,
    pub clauses: Vec<EligibilityClause>,
    pub canonical_clauses: Vec<EligibilityClause>,
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackRequest {
    pub patient_id: String,
    pub nct_id: String,
    pub selected: bool,
}

/// Parsed input files plus the fingerprint they were parsed from.
#[derive(Debug, Default)]
struct Inputs {
    fingerprint: String,
    patients: BTreeMap<String, PatientRecord>,
    /// Sorted by NCT ID.
    trials: Vec<StructuredTrial>,
    docs: HashMap<String, TrialDoc>,
    jobs: HashMap<String, JobRecord>,
    structured_at: Option<String>,
}

impl Inputs {
    fn trial(&self, nct_id: &str) -> Option<&StructuredTrial> {
        self.trials
            .binary_search_by(|t| t.nct_id.as_str().cmp(nct_id))
            .ok()
            .map(|i| &self.trials[i])
    }

    fn titles(&self, nct_id: &str) -> (String, String) {
        self.docs
            .get(nct_id)
            .map(|d| (d.brief_title.clone(), d.official_title.clone()))
            .unwrap_or_default()
    }
}

/// Ranked candidates for one patient, valid for one input fingerprint.
#[derive(Debug)]
struct CachedCandidates {
    fingerprint: String,
    /// Views without feedback labels, in matcher order.
    views: Vec<CandidateView>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TriageError + '_ {
    move |source| TriageError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_jsonl<T: DeserializeOwned>(path: &Path, bytes: &[u8]) -> TriageResult<Vec<T>> {
    let text = std::str::from_utf8(bytes).map_err(|e| TriageError::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| TriageError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Contents of the input files; `None` for an absent optional file.
struct Snapshot {
    patients: Vec<u8>,
    structured: Vec<u8>,
    trials: Option<Vec<u8>>,
    jobs: Option<Vec<u8>>,
    structured_at: Option<String>,
}

impl Snapshot {
    fn read(dir: &Path) -> TriageResult<Self> {
        let required = |name: &str| {
            let path = dir.join(name);
            if !path.is_file() {
                return Err(TriageError::MissingInput(path));
            }
            fs::read(&path).map_err(io_err(&path))
        };
        let optional = |path: PathBuf| {
            if path.is_file() {
                fs::read(&path).map(Some).map_err(io_err(&path))
            } else {
                Ok(None)
            }
        };
        let structured_path = dir.join(STRUCTURED_FILE);
        let structured_at = fs::metadata(&structured_path)
            .and_then(|m| m.modified())
            .ok()
            .map(|t| DateTime::<Utc>::from(t).to_rfc3339_opts(SecondsFormat::Secs, true));
        Ok(Self {
            patients: required(PATIENTS_FILE)?,
            structured: required(STRUCTURED_FILE)?,
            trials: optional(dir.join(TRIALS_FILE))?,
            jobs: optional(jobs_path(&structured_path))?,
            structured_at,
        })
    }

    fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for part in [
            Some(&self.patients),
            Some(&self.structured),
            self.trials.as_ref(),
            self.jobs.as_ref(),
        ] {
            match part {
                Some(bytes) => {
                    h.update((bytes.len() as u64).to_le_bytes());
                    h.update(bytes);
                }
                None => h.update(u64::MAX.to_le_bytes()),
            }
        }
        h.update(self.structured_at.as_deref().unwrap_or("").as_bytes());
        hex::encode(h.finalize())
    }

    fn parse(self, dir: &Path, fingerprint: String) -> TriageResult<Inputs> {
        let patients: Vec<PatientRecord> = parse_jsonl(&dir.join(PATIENTS_FILE), &self.patients)?;
        let mut trials: Vec<StructuredTrial> = parse_jsonl(&dir.join(STRUCTURED_FILE), &self.structured)?;
        trials.sort_by(|a, b| a.nct_id.cmp(&b.nct_id));
        if let Some(w) = trials.windows(2).find(|w| w[0].nct_id == w[1].nct_id) {
            return Err(TriageError::DuplicateId(w[0].nct_id.clone(), STRUCTURED_FILE));
        }
        let docs: Vec<TrialDoc> = match &self.trials {
            Some(bytes) => parse_jsonl(&dir.join(TRIALS_FILE), bytes)?,
            None => Vec::new(),
        };
        let jobs: Vec<JobRecord> = match &self.jobs {
            Some(bytes) => parse_jsonl(&jobs_path(&dir.join(STRUCTURED_FILE)), bytes)?,
            None => Vec::new(),
        };
        let mut by_id = BTreeMap::new();
        for p in patients {
            let id = p.patient_id.clone();
            if by_id.insert(id.clone(), p).is_some() {
                return Err(TriageError::DuplicateId(id, PATIENTS_FILE));
            }
        }
        Ok(Inputs {
            fingerprint,
            patients: by_id,
            trials,
            docs: docs.into_iter().map(|d| (d.nct_id.clone(), d)).collect(),
            jobs: jobs.into_iter().map(|j| (j.nct_id.clone(), j)).collect(),
            structured_at: self.structured_at,
        })
    }
}

#[derive(Debug, Clone)]
pub struct StoreConfig {
    pub data_dir: PathBuf,
    pub options: MatchOptions,
}

impl StoreConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            options: MatchOptions::default(),
        }
    }
}

#[derive(Debug)]
pub struct TriageStore {
    config: StoreConfig,
    ontology: Ontology,
    inputs: RwLock<Arc<Inputs>>,
    candidates: RwLock<HashMap<String, Arc<CachedCandidates>>>,
    feedback: RwLock<Vec<FeedbackEvent>>,
    /// Single writer for the feedback log.
    writer: Mutex<File>,
}

impl TriageStore {
    /// Opens a data directory. Fails without the PHI guard marker or when a
    /// required input is missing or malformed.
    pub fn open(config: StoreConfig) -> TriageResult<Self> {
        Self::open_with_ontology(config, Ontology::bundled())
    }

    pub fn open_with_ontology(config: StoreConfig, ontology: Ontology) -> TriageResult<Self> {
        let dir = &config.data_dir;
        let guard = dir.join(PHI_GUARD_FILE);
        if !guard.is_file() {
            return Err(TriageError::PhiGuardMissing(guard));
        }
        let snapshot = Snapshot::read(dir)?;
        let fingerprint = snapshot.fingerprint();
        let inputs = snapshot.parse(dir, fingerprint)?;
        for p in inputs.patients.values() {
            if let Err(e) = p.validate(&ontology) {
                log::warn!("{e}");
            }
        }

        let log_path = dir.join(FEEDBACK_FILE);
        let feedback: Vec<FeedbackEvent> = match fs::read(&log_path) {
            Ok(bytes) => parse_jsonl(&log_path, &bytes)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io_err(&log_path)(e)),
        };
        let writer = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(io_err(&log_path))?;
        log::info!(
            "triage store: {} patients, {} structured trials, {} feedback events",
            inputs.patients.len(),
            inputs.trials.len(),
            feedback.len()
        );
        Ok(Self {
            config,
            ontology,
            inputs: RwLock::new(Arc::new(inputs)),
            candidates: RwLock::new(HashMap::new()),
            feedback: RwLock::new(feedback),
            writer: Mutex::new(writer),
        })
    }

    pub fn data_dir(&self) -> &Path {
        &self.config.data_dir
    }

    fn matcher(&self) -> Matcher<'_> {
        Matcher::new(&self.ontology, self.config.options.clone())
    }

    /// Current inputs, reparsed if any input file changed on disk.
    fn inputs(&self) -> TriageResult<Arc<Inputs>> {
        let dir = &self.config.data_dir;
        let snapshot = Snapshot::read(dir)?;
        let fingerprint = snapshot.fingerprint();
        {
            let current = self.inputs.read().expect("inputs lock poisoned");
            if current.fingerprint == fingerprint {
                return Ok(current.clone());
            }
        }
        log::info!("input files changed, reloading");
        let fresh = Arc::new(snapshot.parse(dir, fingerprint)?);
        *self.inputs.write().expect("inputs lock poisoned") = fresh.clone();
        self.candidates.write().expect("cache lock poisoned").clear();
        Ok(fresh)
    }

    pub fn patients(&self) -> TriageResult<Vec<PatientSummary>> {
        Ok(self.inputs()?.patients.values().map(PatientSummary::from).collect())
    }

    fn ranked(&self, inputs: &Inputs, patient_id: &str) -> TriageResult<Arc<CachedCandidates>> {
        if let Some(hit) = self.candidates.read().expect("cache lock poisoned").get(patient_id) {
            if hit.fingerprint == inputs.fingerprint {
                return Ok(hit.clone());
            }
        }
        let patient = inputs
            .patients
            .get(patient_id)
            .ok_or_else(|| TriageError::UnknownPatient(patient_id.to_string()))?;
        let matcher = self.matcher();
        let list = matcher.rank_candidates(patient, &inputs.trials);
        let views = list
            .entries
            .into_iter()
            .map(|entry| {
                let trial = inputs.trial(&entry.nct_id).expect("ranked trial is loaded");
                let m = matcher.match_trial(trial, patient);
                let (brief_title, official_title) = inputs.titles(&entry.nct_id);
                CandidateView {
                    matched_clause: entry.matched_clause_index.map(|i| trial.clauses[i].clone()),
                    nct_id: entry.nct_id,
                    brief_title,
                    official_title,
                    eligible: entry.eligible,
                    score: entry.score,
                    matched_clause_index: entry.matched_clause_index,
                    clause_traces: m.clause_traces,
                    feedback: None,
                }
            })
            .collect();
        let fresh = Arc::new(CachedCandidates {
            fingerprint: inputs.fingerprint.clone(),
            views,
        });
        self.candidates
            .write()
            .expect("cache lock poisoned")
            .insert(patient_id.to_string(), fresh.clone());
        Ok(fresh)
    }

    /// Ranked candidates joined with the latest feedback label per trial.
    pub fn candidates(&self, patient_id: &str) -> TriageResult<Vec<CandidateView>> {
        let inputs = self.inputs()?;
        let ranked = self.ranked(&inputs, patient_id)?;
        let labels: HashMap<String, FeedbackLabel> = {
            let log = self.feedback.read().expect("feedback lock poisoned");
            let mine: Vec<FeedbackEvent> = log.iter().filter(|e| e.patient_id == patient_id).cloned().collect();
            dedup_feedback(&mine)
                .into_iter()
                .map(|e| {
                    (
                        e.nct_id,
                        FeedbackLabel {
                            selected: e.selected,
                            timestamp: e.timestamp,
                        },
                    )
                })
                .collect()
        };
        Ok(ranked
            .views
            .iter()
            .map(|v| CandidateView {
                feedback: labels.get(&v.nct_id).cloned(),
                ..v.clone()
            })
            .collect())
    }

    pub fn structured(&self, nct_id: &str) -> TriageResult<StructuredView> {
        let inputs = self.inputs()?;
        let trial = inputs
            .trial(nct_id)
            .ok_or_else(|| TriageError::NotStructured(nct_id.to_string()))?;
        let provenance = inputs.jobs.get(nct_id).map(|j| Provenance {
            backend: j.backend,
            shots: j.shots,
            timestamp: inputs.structured_at.clone(),
        });
        Ok(StructuredView {
            nct_id: trial.nct_id.clone(),
            brief_title: inputs.titles(nct_id).0,
            clauses: trial.clauses.clone(),
            canonical_clauses: trial.clauses.iter().map(EligibilityClause::canonical_form).collect(),
            provenance,
        })
    }

    /// Appends a reviewer decision. The event is on disk before this returns.
    pub fn record_feedback(&self, req: FeedbackRequest) -> TriageResult<FeedbackEvent> {
        let inputs = self.inputs()?;
        if !inputs.patients.contains_key(&req.patient_id) {
            return Err(TriageError::UnknownPatient(req.patient_id));
        }
        if inputs.trial(&req.nct_id).is_none() {
            return Err(TriageError::UnknownTrial(req.nct_id));
        }
        let log_path = self.config.data_dir.join(FEEDBACK_FILE);
        let mut writer = self.writer.lock().expect("feedback writer poisoned");
        // Never stamp an event earlier than one already logged, so the
        // newest submission always wins even if the clock steps back.
        let now = Utc::now().fixed_offset();
        let floor = self
            .feedback
            .read()
            .expect("feedback lock poisoned")
            .iter()
            .map(|e| e.timestamp)
            .max();
        let event = FeedbackEvent {
            patient_id: req.patient_id,
            nct_id: req.nct_id,
            selected: req.selected,
            timestamp: floor.map_or(now, |f| f.max(now)),
        };
        let mut line = serde_json::to_vec(&event).expect("feedback event serializes");
        line.push(b'\n');
        writer.write_all(&line).map_err(io_err(&log_path))?;
        writer.sync_data().map_err(io_err(&log_path))?;
        self.feedback.write().expect("feedback lock poisoned").push(event.clone());
        Ok(event)
    }

    pub fn feedback_len(&self) -> usize {
        self.feedback.read().expect("feedback lock poisoned").len()
    }

    /// Feedback scored against the current matcher verdicts.
    pub fn feedback_metrics(&self) -> TriageResult<Metrics> {
        let inputs = self.inputs()?;
        let patients: Vec<PatientRecord> = inputs.patients.values().cloned().collect();
        let verdicts = compute_verdicts(&self.matcher(), &patients, &inputs.trials);
        let log = self.feedback.read().expect("feedback lock poisoned");
        Ok(feedback_prf(&log, &verdicts).metrics)
    }
}
