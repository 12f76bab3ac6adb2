//! Scripted scenarios shared by the integration tests and the acceptance
//! runner. Every canned response is keyed on the exact rendered prompt.
#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use figqa::core::prompts::{PromptTemplate, QaMode};
use figqa::core::{
    Answer, CacheKey, CandidateContext, Dataset, FigurativenessScore, ModelSpec, Predicted,
    Prediction, QAInstance, RunRecord, Source, Split, Strategy, StrategyConfig,
};
use figqa::gateway::{Backend, Fixture, Gateway, ScriptedBackend};

/// (context, question, gold, literal rewrite)
const FIGURATIVE: [(&str, &str, Answer, &str); 10] = [
    (
        "The brisket melted like butter.",
        "Was the brisket tender?",
        Answer::Yes,
        "The brisket was very tender.",
    ),
    (
        "The waiter was as slow as a snail.",
        "Was the service fast?",
        Answer::No,
        "The waiter was very slow.",
    ),
    (
        "The dessert was heaven on a plate.",
        "Did the dessert taste good?",
        Answer::Yes,
        "The dessert was delicious.",
    ),
    (
        "The fries were as limp as wet noodles.",
        "Were the fries crispy?",
        Answer::No,
        "The fries were soggy.",
    ),
    (
        "The owner treated us like royalty.",
        "Was the owner welcoming?",
        Answer::Yes,
        "The owner was very welcoming.",
    ),
    (
        "The patio was an oven at noon.",
        "Was the patio comfortable at noon?",
        Answer::No,
        "The patio was very hot at noon.",
    ),
    (
        "The coffee kicked like a mule.",
        "Was the coffee strong?",
        Answer::Yes,
        "The coffee was very strong.",
    ),
    (
        "The bread was a brick.",
        "Was the bread soft?",
        Answer::No,
        "The bread was hard and dense.",
    ),
    (
        "The salsa was pure fire.",
        "Was the salsa spicy?",
        Answer::Yes,
        "The salsa was very spicy.",
    ),
    (
        "The wait felt like an eternity.",
        "Was the wait short?",
        Answer::No,
        "The wait was very long.",
    ),
];

const LITERAL: [(&str, &str, Answer); 10] = [
    ("The soup was served hot.", "Was the soup hot?", Answer::Yes),
    (
        "The tacos were overpriced.",
        "Were the tacos cheap?",
        Answer::No,
    ),
    (
        "Parking was easy to find.",
        "Was parking easy?",
        Answer::Yes,
    ),
    ("The table was sticky.", "Was the table clean?", Answer::No),
    (
        "The staff answered every question.",
        "Was the staff helpful?",
        Answer::Yes,
    ),
    (
        "The music was too loud to talk.",
        "Was it quiet?",
        Answer::No,
    ),
    (
        "The portions were large.",
        "Were the portions generous?",
        Answer::Yes,
    ),
    ("The steak arrived cold.", "Was the steak warm?", Answer::No),
    (
        "We were seated right away.",
        "Was seating quick?",
        Answer::Yes,
    ),
    (
        "The menu had no vegan options.",
        "Were there vegan options?",
        Answer::No,
    ),
];

fn flip(a: Answer) -> Answer {
    match a {
        Answer::Yes => Answer::No,
        Answer::No => Answer::Yes,
    }
}

fn reply(gold: Answer, correct: bool) -> &'static str {
    if correct { gold } else { flip(gold) }.label()
}

/// Correct figurative items per strategy: the first `k` of ten.
pub const FIG_CORRECT_DIRECT_ZERO: usize = 5;
pub const FIG_CORRECT_DIRECT_FEW: usize = 6;
pub const FIG_CORRECT_SIMPLIFY: usize = 9;
pub const FIG_CORRECT_COT: usize = 7;
/// Correct literal items for direct_zero; other strategies get all ten.
pub const LIT_CORRECT_DIRECT_ZERO: usize = 8;

pub struct Scenario {
    pub dataset: Dataset,
    pub fixture: Fixture,
}

/// Twenty Yelp instances, ten per split. Figurative ids are `fig-NN` and
/// literal ones `lit-NN`.
pub fn scenario() -> Scenario {
    let qa = PromptTemplate::qa();
    let simplify = PromptTemplate::simplify();
    let cot = PromptTemplate::cot();
    let mut fixture = Fixture::new();
    let mut instances = Vec::new();
    for (i, (context, question, gold, literal)) in FIGURATIVE.iter().enumerate() {
        instances.push(QAInstance {
            id: format!("fig-{i:02}"),
            source: Source::Yelp,
            split: Split::Figurative,
            context: context.to_string(),
            question: question.to_string(),
            gold_answer: *gold,
            manual_literal_context: Some(literal.to_string()),
            figurativeness: Some(FigurativenessScore::new(vec![4, 4, 3]).unwrap()),
        });
        let zero = qa.render_qa(context, question, QaMode::ZeroShot).unwrap();
        fixture.insert(&zero, reply(*gold, i < FIG_CORRECT_DIRECT_ZERO));
        let few = qa.render_qa(context, question, QaMode::FewShot).unwrap();
        fixture.insert(&few, reply(*gold, i < FIG_CORRECT_DIRECT_FEW));
        let s = simplify.render_simplify(context).unwrap();
        fixture.insert(&s, format!("Output: {literal}"));
        let on_literal = qa.render_qa(literal, question, QaMode::FewShot).unwrap();
        fixture.insert(&on_literal, reply(*gold, i < FIG_CORRECT_SIMPLIFY));
        let c = cot.render_cot(context, question).unwrap();
        fixture.insert(
            &c,
            format!(" {literal}\nAnswer: {}", reply(*gold, i < FIG_CORRECT_COT)),
        );
    }
    for (i, (context, question, gold)) in LITERAL.iter().enumerate() {
        instances.push(QAInstance {
            id: format!("lit-{i:02}"),
            source: Source::Yelp,
            split: Split::NonFigurative,
            context: context.to_string(),
            question: question.to_string(),
            gold_answer: *gold,
            manual_literal_context: None,
            figurativeness: Some(FigurativenessScore::new(vec![1, 2, 1]).unwrap()),
        });
        let zero = qa.render_qa(context, question, QaMode::ZeroShot).unwrap();
        fixture.insert(&zero, reply(*gold, i < LIT_CORRECT_DIRECT_ZERO));
        // the simplifier leaves literal text unchanged, so simplify_then_answer
        // asks the same few-shot prompt as direct_few
        let few = qa.render_qa(context, question, QaMode::FewShot).unwrap();
        fixture.insert(&few, reply(*gold, true));
        fixture.insert(
            &simplify.render_simplify(context).unwrap(),
            format!("Output: {context}"),
        );
        let c = cot.render_cot(context, question).unwrap();
        fixture.insert(&c, format!(" {context}\nAnswer: {}", reply(*gold, true)));
    }
    Scenario {
        dataset: Dataset::new(instances).unwrap(),
        fixture,
    }
}

pub const SCRIPTED_ENDPOINT: &str = "scripted:in-process";

pub fn strategy_config(strategy: Strategy, cache_dir: &str) -> StrategyConfig {
    let answerer = if strategy == Strategy::Cot {
        ModelSpec::cot_preset(SCRIPTED_ENDPOINT, "scripted")
    } else {
        ModelSpec::qa_preset(SCRIPTED_ENDPOINT, "scripted")
    };
    let cfg = StrategyConfig::new(strategy, answerer, cache_dir);
    if strategy == Strategy::SimplifyThenAnswer {
        cfg.with_simplifier(ModelSpec::simplify_preset(SCRIPTED_ENDPOINT, "scripted"))
    } else {
        cfg
    }
}

/// A strict scripted gateway, so any prompt outside the fixture fails.
pub fn gateway(
    fixture: &Fixture,
    jobs: usize,
    cache: Option<&Path>,
) -> (Gateway, Arc<ScriptedBackend>) {
    let backend = Arc::new(ScriptedBackend::strict(fixture.clone()));
    let gw = Gateway::new(backend.clone() as Arc<dyn Backend>).with_jobs(jobs);
    let gw = match cache {
        Some(dir) => gw.with_cache(dir),
        None => gw,
    };
    (gw, backend)
}

/// Ten candidates for the generation prompt; `bad-3` has no Answer line
/// and `bad-7` a non-question.
pub fn synthetic_candidates() -> (Vec<CandidateContext>, Fixture) {
    let template = PromptTemplate::synthetic();
    let mut fixture = Fixture::new();
    let mut out = Vec::new();
    for i in 0..10 {
        let text = format!("Review {i}: the noodles were as long as a river, number {i}.");
        let origin = if i == 3 || i == 7 {
            format!("bad-{i}")
        } else {
            format!("review-{i}")
        };
        let response = match i {
            3 => "Question: Were the noodles long?\nThe model forgot to answer.".to_string(),
            7 => " The noodles were long.\nAnswer: Yes".to_string(),
            // alternate continuation and fully labelled forms
            _ if i % 2 == 0 => format!(" Were noodles {i} long?\nAnswer: Yes"),
            _ => format!("Question: Were noodles {i} short?\nAnswer: No"),
        };
        fixture.insert(&template.render_synthetic(&text).unwrap(), response);
        out.push(CandidateContext {
            text,
            matched_patterns: vec!["as".to_string()],
            origin,
        });
    }
    (out, fixture)
}

/// Nine instances with hand-picked scores for the gain-curve test; `z-none`
/// carries no score and must be skipped.
///
/// Averages and bins (equal width over [1, 4], width 0.75):
///   [1, 1.75]    b-1 (1.0), b-2 (1.5)
///   (1.75, 2.5]  b-3 (2.0), b-4 (2.5)
///   (2.5, 3.25]  b-5 (3.0), b-6 (3.0)
///   (3.25, 4]    b-7 (3.5), b-8 (4.0)
pub fn bins_dataset() -> Dataset {
    let scores: [(&str, Vec<u8>); 8] = [
        ("b-1", vec![1, 1]),
        ("b-2", vec![1, 2]),
        ("b-3", vec![2, 2]),
        ("b-4", vec![2, 3]),
        ("b-5", vec![3, 3]),
        ("b-6", vec![2, 4]),
        ("b-7", vec![3, 4]),
        ("b-8", vec![4, 4]),
    ];
    let mut instances: Vec<QAInstance> = scores
        .into_iter()
        .map(|(id, s)| QAInstance {
            id: id.to_string(),
            source: Source::Amazon,
            split: Split::Figurative,
            context: format!("Context for {id}."),
            question: format!("Question for {id}?"),
            gold_answer: Answer::Yes,
            manual_literal_context: None,
            figurativeness: Some(FigurativenessScore::new(s).unwrap()),
        })
        .collect();
    instances.push(QAInstance {
        id: "z-none".into(),
        source: Source::Amazon,
        split: Split::NonFigurative,
        context: "Unscored context.".into(),
        question: "Unscored?".into(),
        gold_answer: Answer::Yes,
        manual_literal_context: None,
        figurativeness: None,
    });
    Dataset::new(instances).unwrap()
}

/// A run on [`bins_dataset`] that answers `yes` (correct) exactly on the
/// listed ids.
pub fn bins_run(dataset: &Dataset, strategy: Strategy, correct: &[&str]) -> RunRecord {
    let preds = dataset
        .instances()
        .iter()
        .map(|inst| Prediction {
            instance_id: inst.id.clone(),
            predicted: if correct.contains(&inst.id.as_str()) {
                Predicted::Yes
            } else {
                Predicted::No
            },
            intermediate_literal: None,
            raw_output: String::new(),
            prompt_digest: CacheKey(String::new()),
            error: None,
        })
        .collect();
    RunRecord::new(strategy_config(strategy, "cache"), dataset, preds).unwrap()
}
