//! Python bindings. Records cross the boundary as plain dicts and lists
//! with the same field names as the JSONL files.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use trialmatch::evaluation::{
    self, verdicts_from_records, Averaging, EnrollmentPair, EntityOptions, FeedbackEvent, GoldTrial,
};
use trialmatch::extraction::{run_batch, BatchOutput, Extractor, JobRecord, Lexicon};
use trialmatch::ingest::{ingest_path, IngestFilter, TrialDoc};
use trialmatch::llm::{CompletionConfig, LlmClient};
use trialmatch::logic::{self, canonicalize, BoolExpr, EligibilityClause, StructuredTrial};
use trialmatch::matcher::{MatchOptions, MatchRecord, Matcher, PatientRecord};
use trialmatch::ontology::{parse_biomarker, Ontology};

pyo3::create_exception!(_trialmatch, TrialmatchError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    TrialmatchError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    PyModule::import(py, "json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = PyModule::import(obj.py(), "json")?
        .call_method1("dumps", (obj,))?
        .extract()?;
    serde_json::from_str(&text).map_err(err)
}

fn averaging(macro_average: bool) -> Averaging {
    if macro_average {
        Averaging::Macro
    } else {
        Averaging::Micro
    }
}

/// Histology hierarchy and biomarker pathway groups.
#[pyclass(name = "Ontology", module = "_trialmatch", frozen)]
struct PyOntology {
    inner: Arc<Ontology>,
}

#[pymethods]
impl PyOntology {
    /// The bundled hierarchy, or files in the documented JSON formats.
    #[new]
    #[pyo3(signature = (oncotree=None, pathways=None))]
    fn new(oncotree: Option<PathBuf>, pathways: Option<PathBuf>) -> PyResult<Self> {
        let inner = Ontology::load(oncotree.as_deref(), pathways.as_deref()).map_err(err)?;
        Ok(Self { inner: Arc::new(inner) })
    }

    fn subsumes_histology(&self, criterion: &str, patient: &str) -> PyResult<bool> {
        self.inner.histology.subsumes_histology(criterion, patient).map_err(err)
    }

    fn subsumes_biomarker(&self, criterion: &str, patient: &str) -> PyResult<bool> {
        let c = parse_biomarker(criterion).map_err(err)?;
        let p = parse_biomarker(patient).map_err(err)?;
        Ok(self.inner.subsumes_biomarker(&c, &p))
    }

    /// Concept codes whose label or synonym matches `text`.
    fn normalize_histology(&self, text: &str) -> Vec<String> {
        self.inner
            .histology
            .normalize_histology(text)
            .into_iter()
            .map(|c| c.code.clone())
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.histology.len()
    }
}

fn ontology_or_bundled(ontology: Option<&PyOntology>) -> Arc<Ontology> {
    ontology.map_or_else(|| Arc::new(Ontology::bundled()), |o| o.inner.clone())
}

#[pyclass(name = "Matcher", module = "_trialmatch", frozen)]
struct PyMatcher {
    ontology: Arc<Ontology>,
    options: MatchOptions,
}

impl PyMatcher {
    fn matcher(&self) -> Matcher<'_> {
        Matcher::new(&self.ontology, self.options.clone())
    }
}

#[pymethods]
impl PyMatcher {
    #[new]
    #[pyo3(signature = (ontology=None, lenient=false, ignore_exclusions=false))]
    fn new(ontology: Option<&Bound<'_, PyOntology>>, lenient: bool, ignore_exclusions: bool) -> Self {
        Self {
            ontology: ontology_or_bundled(ontology.map(|o| o.get())),
            options: MatchOptions {
                lenient,
                ignore_exclusions,
                ..MatchOptions::default()
            },
        }
    }

    /// First satisfied clause plus per-clause traces.
    fn match_trial<'py>(
        &self,
        py: Python<'py>,
        trial: &Bound<'py, PyAny>,
        patient: &Bound<'py, PyAny>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let trial: StructuredTrial = from_py(trial)?;
        let patient: PatientRecord = from_py(patient)?;
        to_py(py, &self.matcher().match_trial(&trial, &patient))
    }

    fn rank_candidates<'py>(
        &self,
        py: Python<'py>,
        patient: &Bound<'py, PyAny>,
        trials: &Bound<'py, PyAny>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let patient: PatientRecord = from_py(patient)?;
        let trials: Vec<StructuredTrial> = from_py(trials)?;
        to_py(py, &self.matcher().rank_candidates(&patient, &trials))
    }

    /// One record per patient/trial pair, as written by `trialmatch match`.
    fn match_all<'py>(
        &self,
        py: Python<'py>,
        patients: &Bound<'py, PyAny>,
        trials: &Bound<'py, PyAny>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let patients: Vec<PatientRecord> = from_py(patients)?;
        let trials: Vec<StructuredTrial> = from_py(trials)?;
        to_py(py, &self.matcher().match_all(&patients, &trials))
    }
}

/// Parses registry XML (file or directory) into trial dicts.
#[pyfunction]
#[pyo3(signature = (path, max_lines=40, filter=true))]
fn ingest(py: Python<'_>, path: PathBuf, max_lines: usize, filter: bool) -> PyResult<Bound<'_, PyAny>> {
    let f = IngestFilter::default();
    let report = ingest_path(&path, filter.then_some(&f), max_lines).map_err(err)?;
    to_py(py, &report.kept)
}

#[derive(Serialize)]
struct BatchView {
    structured: Vec<StructuredTrial>,
    jobs: Vec<JobRecord>,
}

impl From<BatchOutput> for BatchView {
    fn from(b: BatchOutput) -> Self {
        Self {
            jobs: b.jobs.iter().map(|j| j.record()).collect(),
            structured: b.structured,
        }
    }
}

/// Dictionary baseline. Returns `{"structured": [...], "jobs": [...]}`.
#[pyfunction]
#[pyo3(signature = (trials, ontology=None))]
fn structure_baseline<'py>(
    py: Python<'py>,
    trials: &Bound<'py, PyAny>,
    ontology: Option<&Bound<'py, PyOntology>>,
) -> PyResult<Bound<'py, PyAny>> {
    let trials: Vec<TrialDoc> = from_py(trials)?;
    let ont = ontology_or_bundled(ontology.map(|o| o.get()));
    let lexicon = Lexicon::from_hierarchy(&ont.histology).map_err(err)?;
    let batch = run_batch(trials, &Extractor::Baseline(&lexicon), 1).map_err(err)?;
    to_py(py, &BatchView::from(batch))
}

/// LLM structuring answered from a recorded transcript.
#[pyfunction]
#[pyo3(signature = (trials, transcript, shots=3))]
fn structure_replay<'py>(
    py: Python<'py>,
    trials: &Bound<'py, PyAny>,
    transcript: PathBuf,
    shots: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let trials: Vec<TrialDoc> = from_py(trials)?;
    let client = LlmClient::replay(CompletionConfig::default(), &transcript).map_err(err)?;
    let batch = run_batch(trials, &Extractor::Llm { client: &client, shots }, 1).map_err(err)?;
    to_py(py, &BatchView::from(batch))
}

/// Clauses from raw model output, tolerating prose and minor JSON damage.
#[pyfunction]
fn parse_extractor_output<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    let parsed = logic::parse_extractor_json(text).map_err(err)?;
    to_py(py, &parsed.clauses)
}

#[pyfunction]
fn canonicalize_clause<'py>(py: Python<'py>, clause: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let clause: EligibilityClause = from_py(clause)?;
    to_py(py, &canonicalize(&clause))
}

/// DNF of a tree such as `{"and": [{"atom": {...}}, {"or": [...]}]}`.
#[pyfunction]
fn to_dnf<'py>(py: Python<'py>, expr: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let expr: BoolExpr = from_py(expr)?;
    to_py(py, &logic::to_dnf(&expr).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (gold, pred, normalized=false, macro_average=false))]
fn entity_prf<'py>(
    py: Python<'py>,
    gold: &Bound<'py, PyAny>,
    pred: &Bound<'py, PyAny>,
    normalized: bool,
    macro_average: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let gold: Vec<GoldTrial> = from_py(gold)?;
    let pred: Vec<StructuredTrial> = from_py(pred)?;
    let ont = normalized.then(Ontology::bundled);
    let opts = EntityOptions {
        normalizer: ont.as_ref(),
        averaging: averaging(macro_average),
    };
    to_py(py, &evaluation::entity_prf(&gold, &pred, opts).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (gold, pred, macro_average=false))]
fn dnf_prf<'py>(
    py: Python<'py>,
    gold: &Bound<'py, PyAny>,
    pred: &Bound<'py, PyAny>,
    macro_average: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let gold: Vec<GoldTrial> = from_py(gold)?;
    let pred: Vec<StructuredTrial> = from_py(pred)?;
    to_py(py, &evaluation::dnf_prf(&gold, &pred, averaging(macro_average)).map_err(err)?)
}

/// `records` are match results as returned by `Matcher.match_all`.
#[pyfunction]
fn enrollment_recall<'py>(
    py: Python<'py>,
    pairs: &Bound<'py, PyAny>,
    records: &Bound<'py, PyAny>,
) -> PyResult<Bound<'py, PyAny>> {
    let pairs: Vec<EnrollmentPair> = from_py(pairs)?;
    let records: Vec<MatchRecord> = from_py(records)?;
    to_py(py, &evaluation::enrollment_recall(&pairs, &verdicts_from_records(&records)))
}

#[pyfunction]
fn feedback_prf<'py>(
    py: Python<'py>,
    events: &Bound<'py, PyAny>,
    records: &Bound<'py, PyAny>,
) -> PyResult<Bound<'py, PyAny>> {
    let events: Vec<FeedbackEvent> = from_py(events)?;
    let records: Vec<MatchRecord> = from_py(records)?;
    to_py(py, &evaluation::feedback_prf(&events, &verdicts_from_records(&records)))
}

#[pymodule]
fn _trialmatch(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("TrialmatchError", m.py().get_type::<TrialmatchError>())?;
    m.add_class::<PyOntology>()?;
    m.add_class::<PyMatcher>()?;
    m.add_function(wrap_pyfunction!(ingest, m)?)?;
    m.add_function(wrap_pyfunction!(structure_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(structure_replay, m)?)?;
    m.add_function(wrap_pyfunction!(parse_extractor_output, m)?)?;
    m.add_function(wrap_pyfunction!(canonicalize_clause, m)?)?;
    m.add_function(wrap_pyfunction!(to_dnf, m)?)?;
    m.add_function(wrap_pyfunction!(entity_prf, m)?)?;
    m.add_function(wrap_pyfunction!(dnf_prf, m)?)?;
    m.add_function(wrap_pyfunction!(enrollment_recall, m)?)?;
    m.add_function(wrap_pyfunction!(feedback_prf, m)?)?;
    Ok(())
}
