//! Full offline pipeline over the bundled corpus: ingest, structure with the
//! baseline and the replayed LLM, match, and score.

use std::path::Path;

use serde_json::json;
use trialmatch::evaluation::{
    compute_verdicts, dnf_prf, enrollment_recall, entity_prf, read_jsonl, Averaging, ComparisonReport,
    EnrollmentPair, EntityOptions, GoldTrial,
};
use trialmatch::extraction::{run_batch, write_batch, Extractor, Lexicon};
use trialmatch::llm::{CompletionConfig, LlmClient};
use trialmatch::logic::StructuredTrial;
use trialmatch::matcher::{load_patients, MatchOptions, Matcher};
use trialmatch::ontology::Ontology;

use super::{corpus_trials, fixtures, TRANSCRIPT};

pub struct PipelineOutput {
    pub text: String,
    pub json: String,
    pub baseline_strict_recall: f64,
    pub baseline_relaxed_recall: f64,
}

fn structure(extractor: &Extractor<'_>, out: &Path) -> Vec<StructuredTrial> {
    let batch = run_batch(corpus_trials(), extractor, 4).unwrap();
    write_batch(&batch, out).unwrap();
    read_jsonl(out).unwrap()
}

pub fn run_pipeline(workdir: &Path) -> PipelineOutput {
    let ont = Ontology::bundled();
    let lexicon = Lexicon::from_hierarchy(&ont.histology).unwrap();
    let client = LlmClient::replay(CompletionConfig::default(), &fixtures().join(TRANSCRIPT)).unwrap();

    let baseline = structure(&Extractor::Baseline(&lexicon), &workdir.join("baseline.jsonl"));
    let llm = structure(&Extractor::Llm { client: &client, shots: 3 }, &workdir.join("llm.jsonl"));
    let gold: Vec<GoldTrial> = read_jsonl(&fixtures().join("corpus/gold.jsonl")).unwrap();
    let systems = [("baseline", &baseline), ("llm-3shot", &llm)];

    let mut entities = ComparisonReport::entities();
    for (name, pred) in systems {
        for (suffix, normalizer) in [("", None), (" +norm", Some(&ont))] {
            let opts = EntityOptions { normalizer, averaging: Averaging::Micro };
            let scores = entity_prf(&gold, pred, opts).unwrap();
            entities.push_entities(&format!("{name}{suffix}"), &scores).unwrap();
        }
    }

    let mut dnf = ComparisonReport::dnf();
    for (name, pred) in systems {
        dnf.push_dnf(name, &dnf_prf(&gold, pred, Averaging::Micro).unwrap()).unwrap();
    }

    let patients = load_patients(&fixtures().join("corpus/patients.jsonl")).unwrap();
    let pairs: Vec<EnrollmentPair> = read_jsonl(&fixtures().join("corpus/enrollment.jsonl")).unwrap();
    let strict = MatchOptions::default();
    let relaxed = MatchOptions { lenient: true, ignore_exclusions: true, ..MatchOptions::default() };
    let mut enrollment = ComparisonReport::enrollment();
    let mut recalls = Vec::new();
    for (name, trials, opts) in [
        ("baseline strict", &baseline, &strict),
        ("baseline lenient+noexcl", &baseline, &relaxed),
        ("llm-3shot strict", &llm, &strict),
        ("llm-3shot lenient+noexcl", &llm, &relaxed),
        ("gold strict", &gold, &strict),
    ] {
        let verdicts = compute_verdicts(&Matcher::new(&ont, opts.clone()), &patients, trials);
        let r = enrollment_recall(&pairs, &verdicts);
        recalls.push(r.recall);
        enrollment.push_recall(name, &r).unwrap();
    }

    let matcher = Matcher::new(&ont, strict);
    let candidates: Vec<_> = patients.iter().map(|p| matcher.rank_candidates(p, &llm)).collect();

    let mut text = String::new();
    for report in [&entities, &dnf, &enrollment] {
        text.push_str(&report.to_table().unwrap());
        text.push('\n');
    }
    text.push_str("Candidates (llm-3shot, strict)\n");
    for list in &candidates {
        let eligible: Vec<String> = list
            .entries
            .iter()
            .filter(|e| e.eligible)
            .map(|e| format!("{}#{}", e.nct_id, e.matched_clause_index.unwrap()))
            .collect();
        text.push_str(&format!("{}: {}\n", list.patient_id, eligible.join(" ")));
    }

    let json = serde_json::to_string_pretty(&json!({
        "entities": entities,
        "dnf": dnf,
        "enrollment": enrollment,
        "candidates": candidates,
    }))
    .unwrap()
        + "\n";

    PipelineOutput { text, json, baseline_strict_recall: recalls[0], baseline_relaxed_recall: recalls[1] }
}
