//! Scores both units on a split, reports their typical confusions and checks that
//! dataset labels still match what the engine does.

use serde::Serialize;
use tutorbot_core::{Action, Engine};

use crate::dataset::{token_tags, tokenize, Dialogue, LabeledDataset, OTHER};
use crate::metrics::{accuracy, class_scores, confusions, dialogue_accuracy, macro_f1, ClassScore, ConfusionCell};
use crate::nap::NapModel;
use crate::ner::NerModel;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub dialogues: usize,
    pub utterances: usize,
    pub tokens: usize,
    pub nap_macro_f1: f64,
    pub nap_accuracy: f64,
    pub dialogue_accuracy: f64,
    pub ner_macro_f1: f64,
    pub ner_token_accuracy: f64,
}

/// Where the errors are.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConfusionReport {
    pub nap: Vec<ConfusionCell>,
    /// Turns where asking for the question number and asking for the subtopic were
    /// swapped, in either direction.
    pub nap_question_number_vs_subtopic: usize,
    pub ner: Vec<ConfusionCell>,
    pub ner_question_nr_vs_subtopic: usize,
    /// Predicted spans overlapping a gold span of the same label with other bounds.
    pub span_boundary_errors: usize,
    /// Predicted spans with the gold bounds but another label.
    pub span_label_errors: usize,
    pub missed_spans: usize,
    pub spurious_spans: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub metrics: Metrics,
    pub nap_classes: Vec<ClassScore>,
    pub ner_classes: Vec<ClassScore>,
    pub confusion: ConfusionReport,
}

/// Maximal runs of one non-`other` tag as (start, end, tag).
pub fn spans(tags: &[String]) -> Vec<(usize, usize, &str)> {
    let mut out: Vec<(usize, usize, &str)> = Vec::new();
    for (i, t) in tags.iter().enumerate() {
        if t == OTHER {
            continue;
        }
        match out.last_mut() {
            Some(last) if last.1 == i && last.2 == t => last.1 = i + 1,
            _ => out.push((i, i + 1, t)),
        }
    }
    out
}

fn span_errors(gold: &[String], pred: &[String], r: &mut ConfusionReport) {
    let (g, p) = (spans(gold), spans(pred));
    let overlaps = |a: &(usize, usize, &str), b: &(usize, usize, &str)| a.0 < b.1 && b.0 < a.1;
    for ps in &p {
        if g.contains(ps) {
            continue;
        }
        if g.iter().any(|gs| (gs.0, gs.1) == (ps.0, ps.1)) {
            r.span_label_errors += 1;
        } else if g.iter().any(|gs| gs.2 == ps.2 && overlaps(gs, ps)) {
            r.span_boundary_errors += 1;
        } else if !g.iter().any(|gs| overlaps(gs, ps)) {
            r.spurious_spans += 1;
        }
    }
    r.missed_spans += g.iter().filter(|gs| !p.iter().any(|ps| overlaps(gs, ps))).count();
}

fn swapped(cells: &[ConfusionCell], a: &str, b: &str) -> usize {
    cells
        .iter()
        .filter(|c| (c.gold == a && c.predicted == b) || (c.gold == b && c.predicted == a))
        .map(|c| c.count)
        .sum()
}

/// Scores the next-action and tagging models on a list of dialogues.
pub fn evaluate(dialogues: &[Dialogue], nap: &NapModel, ner: &NerModel) -> Evaluation {
    let mut gold_a = Vec::new();
    let mut pred_a = Vec::new();
    let mut per_dialogue = Vec::new();
    let mut gold_t: Vec<String> = Vec::new();
    let mut pred_t: Vec<String> = Vec::new();
    let mut report = ConfusionReport::default();
    for d in dialogues {
        let mut g = Vec::new();
        let mut p = Vec::new();
        for e in &d.examples {
            g.push(e.label);
            p.push(nap.predict(&e.tokens, e.prev_action));
            let tags = ner.predict(&e.tokens);
            span_errors(&e.tags, &tags, &mut report);
            gold_t.extend(e.tags.iter().cloned());
            pred_t.extend(tags);
        }
        gold_a.extend(g.iter().map(|a: &Action| a.as_str()));
        pred_a.extend(p.iter().map(|a: &Action| a.as_str()));
        per_dialogue.push((g, p));
    }
    report.nap = confusions(&gold_a, &pred_a);
    report.nap_question_number_vs_subtopic = swapped(&report.nap, "ask_question_number", "ask_subtopic");
    report.ner = confusions(&gold_t, &pred_t);
    report.ner_question_nr_vs_subtopic = swapped(&report.ner, "question_nr", "subtopic");
    Evaluation {
        metrics: Metrics {
            dialogues: dialogues.len(),
            utterances: gold_a.len(),
            tokens: gold_t.len(),
            nap_macro_f1: macro_f1(&gold_a, &pred_a),
            nap_accuracy: accuracy(&gold_a, &pred_a),
            dialogue_accuracy: dialogue_accuracy(&per_dialogue),
            ner_macro_f1: macro_f1(&gold_t, &pred_t),
            ner_token_accuracy: accuracy(&gold_t, &pred_t),
        },
        nap_classes: class_scores(&gold_a, &pred_a),
        ner_classes: class_scores(&gold_t, &pred_t),
        confusion: report,
    }
}

/// Replays every dialogue of a dataset through the engine and lists turns whose
/// stored action or token tags differ from what the engine produces now.
pub fn label_mismatches(ds: &LabeledDataset, engine: &Engine) -> Vec<String> {
    let mut out = Vec::new();
    for d in ds.all() {
        let mut session = engine.new_session(d.id.clone());
        for e in &d.examples {
            let at = format!("{} turn {}", d.id, e.turn_index);
            let turn = match engine.step(&mut session, &e.text) {
                Ok(t) => t,
                Err(err) => {
                    out.push(format!("{at}: {err}"));
                    break;
                }
            };
            if turn.act.action != e.label {
                out.push(format!("{at}: label {} but the engine chose {}", e.label.as_str(), turn.act.action.as_str()));
            }
            let tags = token_tags(&tokenize(&e.text, &ds.options), &turn.record.entities);
            if tags != e.tags {
                out.push(format!("{at}: tags {:?} but the engine gives {tags:?}", e.tags));
            }
        }
    }
    out
}
