//! Dataset building, training and evaluation on a generated corpus.

use std::sync::OnceLock;

use tutorbot_core::record::{write_export, Artifact, ExportFilter};
use tutorbot_core::{Action, DialogueRecord, Engine};
use tutorbot_eval::{generate_corpus, Phrasings};
use tutorbot_learn::dataset::{tokenize, DatasetError, MIN_DIALOGUES};
use tutorbot_learn::nap::features;
use tutorbot_learn::*;

struct Fixture {
    engine: Engine,
    records: Vec<DialogueRecord>,
    ds: LabeledDataset,
    default: NapModel,
    extended: NapModel,
    ner: NerModel,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let engine = Engine::bundled();
        let records = generate_corpus(300, 7, &Phrasings::bundled(), &engine).records;
        let ds = build_dataset(&records, &BuildOptions::default()).unwrap();
        let cfg = TrainConfig::default();
        let default = train_nap(&ds, NapSetting::Default, &cfg).unwrap();
        let extended = train_nap(&ds, NapSetting::Extended, &cfg).unwrap();
        let ner = train_ner(&ds, Gazetteer::from_index(engine.nlu().index()), &cfg).unwrap();
        Fixture { engine, records, ds, default, extended, ner }
    })
}

fn toks(text: &str) -> Vec<String> {
    tokenize(text, &BuildOptions::default()).into_iter().map(|t| t.text).collect()
}

#[test]
fn three_hundred_dialogues_split_200_50_50_by_dialogue() {
    let f = fixture();
    let ids = |v: &[Dialogue]| v.iter().map(|d| d.id.clone()).collect::<std::collections::BTreeSet<_>>();
    let (tr, ev, te) = (ids(&f.ds.train), ids(&f.ds.eval), ids(&f.ds.test));
    assert_eq!((tr.len(), ev.len(), te.len()), (200, 50, 50));
    assert!(tr.is_disjoint(&ev) && tr.is_disjoint(&te) && ev.is_disjoint(&te));
    let turns: usize = f.records.iter().map(|r| r.turns.len()).sum();
    assert_eq!(f.ds.sizes().iter().map(|s| s.1).sum::<usize>(), turns);
}

#[test]
fn split_depends_on_the_seed_only() {
    let f = fixture();
    let again = build_dataset(&f.records, &BuildOptions::default()).unwrap();
    assert_eq!(again, f.ds);
    let other = build_dataset(&f.records, &BuildOptions { seed: 8, ..Default::default() }).unwrap();
    assert_ne!(other.test, f.ds.test);
}

#[test]
fn too_few_dialogues_is_an_error() {
    let f = fixture();
    let few = &f.records[..MIN_DIALOGUES - 1];
    assert!(matches!(build_dataset(few, &BuildOptions::default()), Err(DatasetError::TooFew { found: 29 })));
    let ds = build_dataset(&f.records[..MIN_DIALOGUES], &BuildOptions::default()).unwrap();
    assert_eq!(ds.sizes().map(|s| s.0), [20, 5, 5]);
}

#[test]
fn previous_action_follows_the_dialogue() {
    let f = fixture();
    for d in f.ds.all() {
        assert_eq!(d.examples[0].prev_action, None);
        for w in d.examples.windows(2) {
            assert_eq!(w[1].prev_action, Some(w[0].label));
        }
        for e in &d.examples {
            assert_eq!(e.tokens.len(), e.tags.len());
        }
    }
}

#[test]
fn export_files_rebuild_the_same_dataset() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    write_export(dir.path(), &f.records, &ExportFilter::all(), &[Artifact::Triples, Artifact::Entities]).unwrap();
    let rebuilt = build_from_export(dir.path(), &BuildOptions::default()).unwrap();
    assert_eq!(rebuilt, f.ds);
}

#[test]
fn export_with_a_missing_entity_line_is_rejected() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    write_export(dir.path(), &f.records, &ExportFilter::all(), &[Artifact::Triples, Artifact::Entities]).unwrap();
    let path = dir.path().join(Artifact::Entities.file_name());
    let text = std::fs::read_to_string(&path).unwrap();
    let cut: Vec<&str> = text.lines().take(5).collect();
    std::fs::write(&path, cut.join("\n")).unwrap();
    assert!(matches!(build_from_export(dir.path(), &BuildOptions::default()), Err(DatasetError::Format { .. })));
}

#[test]
fn stored_labels_match_an_engine_replay() {
    let f = fixture();
    assert_eq!(label_mismatches(&f.ds, &f.engine), Vec::<String>::new());
    let mut broken = f.ds.clone();
    broken.test[0].examples[0].label = Action::OrgAck;
    broken.test[0].examples[0].tags[0] = "subtopic".into();
    assert!(!label_mismatches(&broken, &f.engine).is_empty());
}

#[test]
fn question_reference_is_tagged_by_part() {
    let tokens = toks("Exercise 5 (a)");
    assert_eq!(tokens, ["Exercise", "5", "a"]);
    let f = fixture();
    let (record, _) = f.engine.run_dialogue("x", &["I need help with Exercise 5 in Chapter 2"]);
    let ex = tutorbot_learn::dataset::token_tags(
        &tokenize(&record.turns[0].user_text, &BuildOptions::default()),
        &record.turns[0].entities,
    );
    let words = toks(&record.turns[0].user_text);
    let at = |w: &str| ex[words.iter().position(|x| x == w).unwrap()].as_str();
    assert_eq!(at("Exercise"), "exam_mode");
    assert_eq!(at("5"), "question_nr");
    assert_eq!(at("Chapter"), "topic");
    assert_eq!(at("2"), "topic");
}

#[test]
fn multi_word_titles_get_one_tag_per_token() {
    let f = fixture();
    let tags = f.ner.predict(&toks("I have difficulties with Integral Calculus"));
    assert_eq!(tags[4..], ["topic", "topic"]);
    let tags = f.ner.predict(&toks("Exercise 5 in Chapter 2"));
    assert_eq!(tags, ["exam_mode", "question_nr", "other", "topic", "topic"]);
}

#[test]
fn human_keyword_predicts_hand_over() {
    let f = fixture();
    for m in [&f.default, &f.extended] {
        assert_eq!(m.predict_text("human", None), Action::HumanHandover);
        assert_eq!(m.predict_text("human", Some(Action::AskTopic)), Action::HumanHandover);
    }
}

#[test]
fn empty_utterance_predicts_the_majority_class() {
    let f = fixture();
    let mut counts = std::collections::BTreeMap::new();
    for e in f.ds.train_examples() {
        *counts.entry(e.label).or_insert(0) += 1;
    }
    let majority = *counts.iter().max_by_key(|(_, n)| **n).unwrap().0;
    assert_eq!(f.default.majority, majority);
    assert_eq!(f.default.predict_text("", Some(Action::AskLevel)), majority);
    assert_eq!(f.extended.predict_text(" ?! ", None), majority);
}

#[test]
fn default_setting_ignores_the_previous_action() {
    let f = fixture();
    for e in f.ds.test.iter().flat_map(|d| &d.examples).take(60) {
        let a = f.default.predict(&e.tokens, None);
        for prev in Action::ALL {
            assert_eq!(f.default.predict(&e.tokens, Some(prev)), a);
        }
    }
}

#[test]
fn extended_setting_adds_exactly_one_feature() {
    let f = fixture();
    let tokens = toks("Chapter 2 please");
    let d = features(&tokens, Some(Action::AskTopic), NapSetting::Default, &f.default.vocab);
    let e = features(&tokens, Some(Action::AskTopic), NapSetting::Extended, &f.default.vocab);
    assert_eq!(e.len(), d.len() + 1);
    assert_eq!(e.last().unwrap(), "prev=ask_topic");
    let none = features(&tokens, None, NapSetting::Extended, &f.default.vocab);
    assert_eq!(none.last().unwrap(), "prev=none");
}

#[test]
fn training_is_deterministic_for_a_seed() {
    let f = fixture();
    let again = train_nap(&f.ds, NapSetting::Extended, &TrainConfig::default()).unwrap();
    assert_eq!(again, f.extended);
}

#[test]
fn models_survive_json() {
    let f = fixture();
    let nap: NapModel = serde_json::from_str(&serde_json::to_string(&f.extended).unwrap()).unwrap();
    let ner: NerModel = serde_json::from_str(&serde_json::to_string(&f.ner).unwrap()).unwrap();
    let a = evaluate(&f.ds.test, &f.extended, &f.ner);
    let b = evaluate(&f.ds.test, &nap, &ner);
    assert_eq!(a.metrics, b.metrics);
}

#[test]
fn previous_action_helps_on_held_out_dialogues() {
    let f = fixture();
    for split in [&f.ds.eval, &f.ds.test] {
        let d = evaluate(split, &f.default, &f.ner).metrics;
        let e = evaluate(split, &f.extended, &f.ner).metrics;
        assert!(e.nap_macro_f1 >= d.nap_macro_f1, "{} < {}", e.nap_macro_f1, d.nap_macro_f1);
        assert!(e.dialogue_accuracy >= d.dialogue_accuracy, "{} < {}", e.dialogue_accuracy, d.dialogue_accuracy);
    }
}

#[test]
fn test_split_scores_clear_the_floors() {
    let f = fixture();
    let m = evaluate(&f.ds.test, &f.extended, &f.ner).metrics;
    assert_eq!((m.dialogues, m.utterances), (50, f.ds.sizes()[2].1));
    assert!(m.nap_macro_f1 >= 0.60, "next action macro F1 {}", m.nap_macro_f1);
    assert!(m.ner_macro_f1 >= 0.80, "tagging macro F1 {}", m.ner_macro_f1);
}

#[test]
fn confusion_report_counts_add_up() {
    let f = fixture();
    let ev = evaluate(&f.ds.test, &f.default, &f.ner);
    let wrong = ((1.0 - ev.metrics.nap_accuracy) * ev.metrics.utterances as f64).round() as usize;
    assert_eq!(ev.confusion.nap.iter().map(|c| c.count).sum::<usize>(), wrong);
    let direct: usize = ev
        .confusion
        .nap
        .iter()
        .filter(|c| {
            let pair = [c.gold.as_str(), c.predicted.as_str()];
            pair == ["ask_question_number", "ask_subtopic"] || pair == ["ask_subtopic", "ask_question_number"]
        })
        .map(|c| c.count)
        .sum();
    assert_eq!(ev.confusion.nap_question_number_vs_subtopic, direct);
}

#[test]
fn span_errors_are_classified() {
    let t = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let gold = t(&["topic", "topic", "other", "question_nr"]);
    assert_eq!(evaluate::spans(&gold), [(0, 2, "topic"), (3, 4, "question_nr")]);
    let pred = t(&["topic", "other", "other", "subtopic"]);
    assert_eq!(evaluate::spans(&pred), [(0, 1, "topic"), (3, 4, "subtopic")]);
}

#[test]
fn casing_and_punctuation_flags_change_tokens() {
    let f = fixture();
    let lower = BuildOptions { lowercase: true, ..Default::default() };
    let punct = BuildOptions { keep_punctuation: true, ..Default::default() };
    let a = build_dataset(&f.records, &lower).unwrap();
    let b = build_dataset(&f.records, &punct).unwrap();
    assert!(a.all().flat_map(|d| &d.examples).all(|e| e.tokens.iter().all(|t| *t == t.to_lowercase())));
    let count = |ds: &LabeledDataset| ds.all().flat_map(|d| &d.examples).map(|e| e.tokens.len()).sum::<usize>();
    assert!(count(&b) > count(&f.ds));
    assert_eq!(label_mismatches(&b, &f.engine), Vec::<String>::new());
}
