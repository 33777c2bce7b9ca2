//! Template responses: one utterance per (action, locale), with placeholders filled
//! from the information dictionary.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::catalog::CatalogIndex;
use crate::dialogue_state::Action;
use crate::dictionary::{InformationDictionary, Slot, SlotValue};
use crate::error::ConfigError;
use crate::normalizer::to_roman;

const DEFAULT_TEMPLATES: &str = include_str!("../data/templates.toml");

/// Every placeholder a template may use.
pub const PLACEHOLDERS: [&str; 9] = [
    "topic",
    "subtopic",
    "exam_mode",
    "exam_level",
    "question_number",
    "exact_question",
    "verification_list",
    "verification_letters",
    "correction_letter",
];

/// Placeholders whose values are guaranteed to exist when `action` is chosen.
pub fn available_placeholders(action: Action) -> &'static [&'static str] {
    match action {
        Action::AskTopic => &[],
        Action::AskExamMode => &["topic"],
        Action::AskLevel | Action::AskSubtopic | Action::AskQuestionNumber => &["topic", "exam_mode"],
        Action::FinalRequest => &["verification_list", "verification_letters", "topic", "exam_mode", "question_number"],
        Action::VerifyRequest => &["verification_list", "verification_letters"],
        Action::CorrectRequest => &["correction_letter", "verification_list", "verification_letters"],
        Action::ExactQuestion
        | Action::HumanHandover
        | Action::UnknownIntentMenu
        | Action::OrgAck
        | Action::ContextAck => &[],
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub action: String,
    pub locale: String,
    pub text: String,
    #[serde(default)]
    pub placeholders: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct TemplateFile {
    #[serde(default)]
    labels: BTreeMap<String, BTreeMap<String, String>>,
    #[serde(default)]
    template: Vec<Template>,
}

/// One lettered line of the verification summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationItem {
    pub letter: char,
    pub slot: Slot,
    pub label: String,
    pub value: String,
    /// Value was typed by the student and not matched against the catalog.
    pub unverified: bool,
}

/// Values that depend on the dialogue rather than on the dictionary.
#[derive(Debug, Clone, Default)]
pub struct RenderExtras {
    pub correction_letter: Option<char>,
}

#[derive(Debug, Clone)]
pub struct TemplateStore {
    locale: String,
    templates: BTreeMap<(Action, String), Template>,
    labels: BTreeMap<String, BTreeMap<String, String>>,
}

fn placeholder_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([a-z_]+)\}").unwrap())
}

impl TemplateStore {
    pub fn from_toml_str(text: &str, locale: &str) -> Result<Self, ConfigError> {
        let file: TemplateFile =
            toml::from_str(text).map_err(|e| ConfigError::Parse { what: "templates", message: e.to_string() })?;
        let mut templates = BTreeMap::new();
        let mut locales = BTreeSet::new();
        for t in file.template {
            let action = Action::parse(&t.action)
                .ok_or_else(|| ConfigError::Invalid(format!("template for unknown action {:?}", t.action)))?;
            let used: BTreeSet<String> =
                placeholder_regex().captures_iter(&t.text).map(|c| c[1].to_string()).collect();
            let declared: BTreeSet<String> = t.placeholders.iter().cloned().collect();
            for p in used.union(&declared) {
                if !PLACEHOLDERS.contains(&p.as_str()) {
                    return Err(ConfigError::UnknownPlaceholder { action: t.action, locale: t.locale, placeholder: p.clone() });
                }
                if !available_placeholders(action).contains(&p.as_str()) {
                    return Err(ConfigError::UnavailablePlaceholder {
                        action: t.action,
                        locale: t.locale,
                        placeholder: p.clone(),
                    });
                }
            }
            if used != declared {
                return Err(ConfigError::Invalid(format!(
                    "template for {} ({}) declares {:?} but uses {:?}",
                    t.action, t.locale, declared, used
                )));
            }
            locales.insert(t.locale.clone());
            let key = (action, t.locale.clone());
            if templates.contains_key(&key) {
                return Err(ConfigError::Invalid(format!("more than one template for {} ({})", t.action, t.locale)));
            }
            templates.insert(key, t);
        }
        for loc in &locales {
            for action in Action::ALL {
                if !templates.contains_key(&(action, loc.clone())) {
                    return Err(ConfigError::MissingTemplate { action: action.to_string(), locale: loc.clone() });
                }
            }
        }
        if !locales.contains(locale) {
            return Err(ConfigError::MissingTemplate { action: "any".into(), locale: locale.into() });
        }
        Ok(TemplateStore { locale: locale.to_string(), templates, labels: file.labels })
    }

    pub fn load(path: &Path, locale: &str) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::io(path, e))?;
        Self::from_toml_str(&text, locale)
    }

    /// Bundled templates in the given locale ("en" or "de").
    pub fn bundled(locale: &str) -> Result<Self, ConfigError> {
        Self::from_toml_str(DEFAULT_TEMPLATES, locale)
    }

    pub fn locale(&self) -> &str {
        &self.locale
    }

    pub fn template(&self, action: Action) -> &Template {
        &self.templates[&(action, self.locale.clone())]
    }

    fn label(&self, key: &str) -> String {
        self.labels
            .get(&self.locale)
            .and_then(|m| m.get(key))
            .cloned()
            .unwrap_or_else(|| key.replace('_', " "))
    }

    /// Display text of one slot value.
    pub fn display_value(&self, slot: Slot, value: &SlotValue, index: &CatalogIndex) -> String {
        match value {
            SlotValue::Entry(id) => match index.get(id) {
                Some(e) if slot == Slot::Topic => match e.number.as_deref().and_then(|n| n.parse::<u32>().ok()) {
                    Some(n) => format!("{} {}", to_roman(n), e.title),
                    None => e.title.clone(),
                },
                Some(e) => e.title.clone(),
                None => id.clone(),
            },
            SlotValue::Mode(m) => self.label(m.as_str()),
            SlotValue::Level(l) => self.label(l.as_str()),
            SlotValue::Text(t) => t.clone(),
            SlotValue::Raw(t) => format!("{} ({})", t.trim(), self.label("unverified")),
        }
    }

    /// Filled slots in summary order, lettered a), b), ...
    pub fn verification_items(&self, id: &InformationDictionary, index: &CatalogIndex) -> Vec<VerificationItem> {
        Slot::VERIFIED
            .iter()
            .filter_map(|s| id.get(*s).map(|f| (*s, f)))
            .enumerate()
            .map(|(i, (slot, fill))| VerificationItem {
                letter: (b'a' + i as u8) as char,
                slot,
                label: self.label(slot.as_str()),
                value: self.display_value(slot, &fill.value, index),
                unverified: fill.value.is_raw(),
            })
            .collect()
    }

    /// Renders the action's template. Pure in its inputs.
    pub fn render(&self, action: Action, id: &InformationDictionary, index: &CatalogIndex, extras: &RenderExtras) -> String {
        let t = self.template(action);
        let items = self.verification_items(id, index);
        placeholder_regex()
            .replace_all(&t.text, |caps: &regex::Captures| {
                let name = &caps[1];
                match name {
                    "verification_list" => {
                        let n = items.len();
                        items
                            .iter()
                            .enumerate()
                            .map(|(i, it)| {
                                let end = if i + 1 == n { "." } else { "," };
                                format!("{}) {}: {}{end}", it.letter, it.label, it.value)
                            })
                            .collect::<Vec<_>>()
                            .join("\n")
                    }
                    "verification_letters" => {
                        items.iter().map(|it| it.letter.to_string()).collect::<Vec<_>>().join(", ")
                    }
                    "correction_letter" => extras.correction_letter.map(String::from).unwrap_or_default(),
                    other => Slot::parse(other)
                        .and_then(|slot| id.value(slot).map(|v| self.display_value(slot, v, index)))
                        .unwrap_or_default(),
                }
            })
            .into_owned()
    }
}
