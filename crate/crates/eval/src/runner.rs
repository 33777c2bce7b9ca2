//! Replays scenarios against the engine: send the scripted message, compare the
//! system's action and slot changes, continue on a match and stop at the first
//! mismatch.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use tutorbot_core::dialogue_state::Action;
use tutorbot_core::dictionary::{InformationDictionary, Provenance, Slot, SlotValue};
use tutorbot_core::policy::is_complete;
use tutorbot_core::{Engine, HandoverReason, Intent, Phase, SessionState};

use crate::scenario::{Scenario, Terminal};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Failure {
    /// Index of the failing turn; equal to the number of turns for terminal checks.
    pub turn: usize,
    pub what: String,
    pub expected: String,
    pub actual: String,
}

/// What a run exercised, used to check corpus coverage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Coverage {
    pub completeness_cases: BTreeSet<u8>,
    pub actions: BTreeSet<String>,
    pub corrected_letters: BTreeSet<char>,
    pub corrected_slots: BTreeSet<String>,
    pub human_phases: BTreeSet<String>,
    pub ground_truth_slots: BTreeSet<String>,
    pub handover_reasons: BTreeSet<String>,
    pub intents: BTreeSet<String>,
    /// Tags of passing scenarios with their counts.
    pub tags: BTreeMap<String, usize>,
}

impl Coverage {
    pub fn merge(&mut self, other: &Coverage) {
        self.completeness_cases.extend(&other.completeness_cases);
        self.actions.extend(other.actions.iter().cloned());
        self.corrected_letters.extend(&other.corrected_letters);
        self.corrected_slots.extend(other.corrected_slots.iter().cloned());
        self.human_phases.extend(other.human_phases.iter().cloned());
        self.ground_truth_slots.extend(other.ground_truth_slots.iter().cloned());
        self.handover_reasons.extend(other.handover_reasons.iter().cloned());
        self.intents.extend(other.intents.iter().cloned());
        for (t, n) in &other.tags {
            *self.tags.entry(t.clone()).or_default() += n;
        }
    }

    /// Required behaviours the corpus did not exercise; empty when complete.
    pub fn gaps(&self) -> Vec<String> {
        let mut gaps = Vec::new();
        let mut need = |ok: bool, what: String| {
            if !ok {
                gaps.push(what);
            }
        };
        for case in 1..=6u8 {
            need(self.completeness_cases.contains(&case), format!("completeness case {case}"));
        }
        for a in Action::ALL {
            need(self.actions.contains(a.as_str()), format!("action {}", a.as_str()));
        }
        for slot in Slot::VERIFIED {
            let name = slot.as_str();
            need(self.ground_truth_slots.contains(name), format!("three-strike fallback for {name}"));
            need(self.corrected_slots.contains(name), format!("verification correction of {name}"));
        }
        for phase in REQUIRED_HUMAN_PHASES {
            need(self.human_phases.contains(*phase), format!("human keyword in phase {phase}"));
        }
        for reason in ["completed", "human_requested", "unclassified_intent", "verification_failed"] {
            need(self.handover_reasons.contains(reason), format!("hand-over reason {reason}"));
        }
        need(self.tags.get("permalinks").copied().unwrap_or(0) > 0, "permalink scenarios".into());
        for d in 1..=3 {
            let tag = format!("distance{d}");
            need(self.tags.get(&tag).copied().unwrap_or(0) > 0, format!("misspellings at distance {d}"));
        }
        gaps
    }
}

/// Phases in which the human keyword must be exercised.
pub const REQUIRED_HUMAN_PHASES: &[&str] = &[
    "opening",
    "intent_menu",
    "awaiting_topic",
    "awaiting_exam_mode",
    "awaiting_exam_level",
    "awaiting_subtopic",
    "awaiting_question_number",
    "verifying",
    "choosing_letter",
    "correcting",
    "exact_question",
    "org_summary",
    "context_summary",
];

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioResult {
    pub id: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<Failure>,
    pub actions: Vec<String>,
    #[serde(skip)]
    pub coverage: Coverage,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub total: usize,
    pub passed: usize,
    pub failed: Vec<String>,
    pub results: Vec<ScenarioResult>,
    pub coverage: Coverage,
}

impl RunReport {
    pub fn all_passed(&self) -> bool {
        self.passed == self.total
    }

    /// One line per failure plus a count line.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for r in self.results.iter().filter(|r| !r.passed) {
            let f = r.failure.as_ref().expect("failed results carry a failure");
            out.push_str(&format!(
                "FAIL {} at turn {}: {} expected {} got {}\n",
                r.id, f.turn, f.what, f.expected, f.actual
            ));
        }
        out.push_str(&format!("{}/{} scenarios passed\n", self.passed, self.total));
        out
    }
}

/// Label of the dialogue phase a message arrives in.
pub fn phase_label(s: &SessionState) -> String {
    match (s.phase, s.intent) {
        (Phase::Collecting, None) => "opening".into(),
        (Phase::IntentMenu, _) => "intent_menu".into(),
        (Phase::Collecting, Some(_)) => match s.last_system_action.and_then(Action::awaited_slot) {
            Some(slot) => format!("awaiting_{}", slot.as_str()),
            None => "collecting".into(),
        },
        (Phase::Verifying, _) => "verifying".into(),
        (Phase::Correcting { letter: None }, _) => "choosing_letter".into(),
        (Phase::Correcting { letter: Some(_) }, _) => "correcting".into(),
        (Phase::AwaitingExactQuestion, i) => match i {
            Some(Intent::Organizational) => "org_summary".into(),
            Some(Intent::Contextual) => "context_summary".into(),
            _ => "exact_question".into(),
        },
        (Phase::HandedOver, _) => "handed_over".into(),
    }
}

fn value_string(v: &SlotValue) -> String {
    match v {
        SlotValue::Raw(t) => format!("raw:{t}"),
        v => v.canonical(),
    }
}

/// Slots whose value differs between two dictionaries.
pub fn slot_delta(before: &InformationDictionary, after: &InformationDictionary) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for slot in Slot::ALL {
        let (b, a) = (before.value(slot), after.value(slot));
        if b != a {
            out.insert(slot.as_str().to_string(), a.map(value_string).unwrap_or_else(|| "-".into()));
        }
    }
    out
}

fn dictionary_map(id: &InformationDictionary) -> BTreeMap<String, String> {
    id.filled().map(|(s, f)| (s.as_str().to_string(), value_string(&f.value))).collect()
}

fn compare_slots(expected: &BTreeMap<String, String>, actual: &BTreeMap<String, String>) -> bool {
    let exact = Slot::ExactQuestion.as_str();
    let keys: BTreeSet<&String> = expected.keys().chain(actual.keys().filter(|k| *k != exact)).collect();
    keys.into_iter().all(|k| expected.get(k) == actual.get(k))
}

fn show(m: &BTreeMap<String, String>) -> String {
    let parts: Vec<String> = m.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("{{{}}}", parts.join(", "))
}

/// Runs one scenario on a fresh session.
pub fn run_scenario(scenario: &Scenario, engine: &Engine) -> ScenarioResult {
    let mut session = engine.new_session(scenario.id.clone());
    let mut actions = Vec::new();
    let mut coverage = Coverage::default();
    let fail = |turn, what: &str, expected: String, actual: String| Failure { turn, what: what.into(), expected, actual };

    let mut failure = None;
    for (i, t) in scenario.turns.iter().enumerate() {
        let before = session.id.clone();
        let phase = phase_label(&session);
        let turn = match engine.step(&mut session, &t.user) {
            Ok(turn) => turn,
            Err(e) => {
                failure = Some(fail(i, "engine", t.expect.clone(), e.to_string()));
                break;
            }
        };
        let action = turn.act.action;
        actions.push(action.as_str().to_string());
        observe(&mut coverage, &session, &before, action, &phase);

        if action.as_str() != t.expect {
            failure = Some(fail(i, "action", t.expect.clone(), action.as_str().to_string()));
            break;
        }
        if let Some(expected) = &t.slots {
            let delta = slot_delta(&before, &session.id);
            if !compare_slots(expected, &delta) {
                failure = Some(fail(i, "slots", show(expected), show(&delta)));
                break;
            }
        }
    }
    if let Some(i) = session.intent {
        coverage.intents.insert(i.as_str().to_string());
    }
    if let Some(t) = &session.ticket {
        coverage.handover_reasons.insert(t.reason.as_str().to_string());
    }
    if failure.is_none() {
        if let Some(term) = &scenario.terminal {
            failure = check_terminal(term, &session, scenario.turns.len());
        }
    }
    if failure.is_none() {
        for t in &scenario.tags {
            *coverage.tags.entry(t.clone()).or_default() += 1;
        }
    }
    ScenarioResult { id: scenario.id.clone(), passed: failure.is_none(), failure, actions, coverage }
}

fn observe(c: &mut Coverage, s: &SessionState, before: &InformationDictionary, action: Action, phase: &str) {
    c.actions.insert(action.as_str().to_string());
    if action == Action::FinalRequest {
        if let Some(case) = is_complete(&s.id) {
            c.completeness_cases.insert(case);
        }
    }
    if let (Action::CorrectRequest, Phase::Correcting { letter: Some(l) }) = (action, s.phase) {
        c.corrected_letters.insert(l);
        if let Some((_, slot)) = s.letters.iter().find(|(x, _)| *x == l) {
            c.corrected_slots.insert(slot.as_str().to_string());
        }
    }
    if action == Action::HumanHandover
        && s.ticket.as_ref().is_some_and(|t| t.reason == HandoverReason::HumanRequested)
    {
        c.human_phases.insert(phase.to_string());
    }
    for (slot, fill) in s.id.filled() {
        if matches!(fill.provenance, Provenance::UserGroundTruth { .. }) && before.value(slot) != Some(&fill.value) {
            c.ground_truth_slots.insert(slot.as_str().to_string());
        }
    }
}

fn check_terminal(term: &Terminal, s: &SessionState, turns: usize) -> Option<Failure> {
    let fail = |what: &str, expected: String, actual: String| Some(Failure { turn: turns, what: what.into(), expected, actual });
    let outcome = if s.is_closed() { "handover" } else { "open" };
    if let Some(o) = &term.outcome {
        if o != outcome {
            return fail("outcome", o.clone(), outcome.into());
        }
    }
    if let Some(r) = &term.reason {
        let actual = s.ticket.as_ref().map(|t| t.reason.as_str()).unwrap_or("none");
        if r != actual {
            return fail("reason", r.clone(), actual.into());
        }
    }
    if let Some(expected) = &term.slots {
        let actual = dictionary_map(&s.id);
        if !compare_slots(expected, &actual) {
            return fail("final slots", show(expected), show(&actual));
        }
    }
    None
}

/// Runs every scenario; each gets its own session on the shared engine.
pub fn run_all(scenarios: &[Scenario], engine: &Engine) -> RunReport {
    let results: Vec<ScenarioResult> = scenarios.iter().map(|s| run_scenario(s, engine)).collect();
    let mut coverage = Coverage::default();
    for r in &results {
        coverage.merge(&r.coverage);
    }
    let failed: Vec<String> = results.iter().filter(|r| !r.passed).map(|r| r.id.clone()).collect();
    RunReport { total: results.len(), passed: results.len() - failed.len(), failed, results, coverage }
}
