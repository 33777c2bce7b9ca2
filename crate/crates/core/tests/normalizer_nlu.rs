//! Properties of preprocessing and extraction over generated utterances.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use proptest::prelude::*;
use tutorbot_core::catalog::{search, EntryKind};
use tutorbot_core::dictionary::Slot;
use tutorbot_core::nlu::ExtractContext;
use tutorbot_core::normalizer::{char_slice, normalize, roman_value};
use tutorbot_core::{CatalogIndex, Intent, Nlu, NormalizerConfig, SearchParams};

const VOCAB: &[&str] = &[
    "Hi", "I", "II", "iv", "XII", "chapter", "Kapitel", "second", "zweite", "exercise", "Übung", "training",
    "quiz", "final", "examination", "section", "4", "12", "1.2", "5a", "1.a", "(a)", "1(b)", "x", "X", "+", "=",
    "2x", "the", "and", "of", "in", "roots", "powers", "Linear", "Systems", "Equations", "Elementary", "Calculus",
    "Geometry", "human", "certificate", "explain", "rule", "7.2", "Bruchrechnung", "am", "working", "on", ",", "?",
    "Trigonometrie", "sec", "chap", "Logarithms", "Vectors", "Fractions",
];

fn utterance() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(VOCAB), 0..12).prop_map(|w| w.join(" "))
}

fn nlu() -> &'static Nlu {
    static NLU: OnceLock<Nlu> = OnceLock::new();
    NLU.get_or_init(Nlu::bundled)
}

fn cfg() -> NormalizerConfig {
    nlu().index().normalizer().clone()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn normalization_is_idempotent(t in utterance()) {
        let cfg = cfg();
        let once = normalize(&t, &cfg);
        let twice = normalize(&once.render(), &cfg);
        prop_assert_eq!(once.render(), twice.render());
    }

    #[test]
    fn free_text_idempotent(t in "[A-Za-zäöüÄÖÜß0-9 .,()+=x-]{0,40}") {
        let cfg = cfg();
        let once = normalize(&t, &cfg);
        prop_assert_eq!(once.render(), normalize(&once.render(), &cfg).render());
    }

    #[test]
    fn spans_point_back_into_the_original(t in utterance()) {
        let cfg = cfg();
        let n = normalize(&t, &cfg);
        for tok in &n.tokens {
            let slice = char_slice(&t, tok.start, tok.end);
            prop_assert_eq!(&slice, &tok.surface);
            if tok.contextual {
                // number words and numerals: the surface alone names the value
                let ordinal = cfg.ordinal_words.get(&slice.to_lowercase()).cloned();
                let roman = roman_value(&slice, cfg.roman_numeral_limit).map(|v| v.to_string());
                prop_assert!(ordinal.as_ref() == Some(&tok.normal) || roman.as_ref() == Some(&tok.normal));
            } else {
                let alone: Vec<String> = normalize(&slice, &cfg).normals().map(str::to_string).collect();
                prop_assert_eq!(alone, vec![tok.normal.clone()]);
            }
        }
    }

    #[test]
    fn bare_numerals_stay_numerals(n in 0u32..1000, pre in utterance()) {
        let cfg = cfg();
        let text = format!("{pre} {n}");
        let out = normalize(&text, &cfg);
        let last = out.tokens.last().unwrap();
        prop_assert_eq!(&last.normal, &n.to_string());
    }

    #[test]
    fn intent_is_total_and_deterministic(t in ".{0,60}") {
        let nlu = nlu();
        let n = nlu.normalize(&t);
        prop_assert_eq!(nlu.classify_intent(&n), nlu.classify_intent(&n));
    }

    #[test]
    fn fuzzy_spans_reach_their_entry(t in utterance()) {
        let nlu = nlu();
        let ex = nlu.extract(&t, &ExtractContext::default());
        for u in &ex.slot_updates {
            if !matches!(u.slot, Slot::Topic | Slot::Subtopic) || u.confidence == 1.0 {
                continue;
            }
            let id = u.value.canonical();
            let slice = char_slice(&t, u.start, u.end);
            let hits = search(nlu.index(), &nlu.normalize(&slice), nlu.params());
            prop_assert!(hits.iter().any(|h| h.entry_id == id), "{:?} -> {} via {:?}", slice, id, hits);
        }
    }

    #[test]
    fn level_only_from_an_explicit_cue(t in utterance()) {
        let nlu = nlu();
        let level_words: BTreeSet<String> = nlu
            .index()
            .of_kind(EntryKind::Level)
            .flat_map(|e| std::iter::once(e.title.clone()).chain(e.synonyms.clone()))
            .flat_map(|name| nlu.normalize(&name).normals().map(str::to_string).collect::<Vec<_>>())
            .collect();
        let ex = nlu.extract(&t, &ExtractContext::default());
        if let Some(u) = ex.update(Slot::ExamLevel) {
            let slice = char_slice(&t, u.start, u.end);
            let words: BTreeSet<String> = nlu.normalize(&slice).normals().map(str::to_string).collect();
            prop_assert!(!words.is_disjoint(&level_words), "{:?}", slice);
        }
    }
}

#[test]
fn single_word_titles_survive_stopword_removal() {
    let index = CatalogIndex::bundled();
    for e in index.entries() {
        for name in std::iter::once(&e.title).chain(&e.synonyms) {
            if name.split_whitespace().count() == 1 {
                assert!(!index.normalize(name).is_empty(), "{name}");
            }
        }
    }
}

#[test]
fn showcase_intents() {
    let nlu = nlu();
    let intent = |t: &str| nlu.extract(t, &ExtractContext::default()).intent;
    assert_eq!(intent("Hi, I have a question regarding the certificate issue."), Intent::Organizational);
    assert_eq!(intent("explain me the rule 7.2"), Intent::Contextual);
    assert_eq!(intent("Training 1 (a) in Chapter 1"), Intent::Mathematical);
    assert_eq!(intent("Hi"), Intent::Unknown);
}

#[test]
fn showcase_opening_slots() {
    let nlu = nlu();
    let text = "Hi, I have difficulties in Chapter I, Elementary Calculus, by solving Exercise 1 a";
    let ex = nlu.extract(text, &ExtractContext::default());
    let slots: Vec<(Slot, String)> = ex.slot_updates.iter().map(|u| (u.slot, u.value.canonical())).collect();
    assert_eq!(
        slots,
        vec![
            (Slot::Topic, "t01".to_string()),
            (Slot::ExamMode, "exercise".to_string()),
            (Slot::QuestionNumber, "1a".to_string()),
        ]
    );
    let qn = ex.update(Slot::QuestionNumber).unwrap();
    assert_eq!(char_slice(text, qn.start, qn.end), "1 a");
}

#[test]
fn misspelled_subtopic_answer() {
    let nlu = nlu();
    let ctx = ExtractContext { awaiting: Some(Slot::Subtopic), topic: Some("t01".into()), history: Vec::new() };
    for text in ["roots and powers", "roots and powrs", "rotos and pwoers"] {
        let ex = nlu.extract(text, &ctx);
        assert_eq!(ex.update(Slot::Subtopic).map(|u| u.value.canonical()), Some("t01.s02".to_string()), "{text}");
    }
}

#[test]
fn default_search_params_are_the_documented_ones() {
    let p = SearchParams::default();
    assert_eq!((p.min_should_match, p.max_edit_distance, p.prefix_length, p.relevance_threshold), (0.2, 2, 1, 1.5));
}

#[test]
fn level_word_before_a_title_is_not_a_level() {
    let ex = nlu().extract("Help with the chapter Complex Numbers", &ExtractContext::default());
    let slots: Vec<Slot> = ex.slot_updates.iter().map(|u| u.slot).collect();
    assert_eq!(slots, vec![Slot::Topic]);
    let ex = nlu().extract("Exercise 2 in Chapter 7 at chapter level", &ExtractContext::default());
    assert!(ex.slot_updates.iter().any(|u| u.slot == Slot::ExamLevel));
}

#[test]
fn question_anchor_is_not_searched_as_a_title_word() {
    let ctx = ExtractContext { awaiting: Some(Slot::QuestionNumber), ..Default::default() };
    let ex = nlu().extract("number 2", &ctx);
    let slots: Vec<Slot> = ex.slot_updates.iter().map(|u| u.slot).collect();
    assert_eq!(slots, vec![Slot::QuestionNumber]);
}
