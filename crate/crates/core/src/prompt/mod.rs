//! Prompt sets, LLM gateways and the prompt-side defenses.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

mod defense;
mod gateway;
pub mod mock;

pub use defense::{
    chain_of_confirmation, desc_cot_filter, filter_tags, CocError, parse_extracted_packages, parse_yes_no, single_prompt_defense, CocMetrics,
    CocOutcome, CocStep, DescCotOutcome, Disagreement, TagRecord,
};
pub use gateway::{
    run_batch, GatewayError, GatewayReply, GatewaySettings, LlmGateway, MockGateway, OpenAiGateway, RecordStore, ReplayGateway, RunManifest,
};

pub const TEMPLATES_TOML: &str = include_str!("../../data/templates.toml");
pub const TERMS_TOML: &str = include_str!("../../data/terms.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuestionKind {
    #[default]
    Coding,
    Ci,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    #[serde(default)]
    pub tag: String,
    pub title: String,
    #[serde(default)]
    pub body: String,
    #[serde(default)]
    pub answer_count: u32,
    #[serde(default)]
    pub kind: QuestionKind,
}

impl Question {
    pub fn new(id: impl Into<String>, title: impl Into<String>) -> Self {
        Self { id: id.into(), tag: String::new(), title: title.into(), body: String::new(), answer_count: 0, kind: QuestionKind::Coding }
    }

    /// Text substituted for `{question}`: the title, plus the body when present.
    pub fn text(&self) -> String {
        if self.body.trim().is_empty() {
            self.title.clone()
        } else {
            format!("{}\n\n{}", self.title, self.body)
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("reading corpus: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("corpus csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("question {0}: empty text")]
    Empty(String),
}

/// Loads a question corpus. `.csv` files need a header row with at least
/// `id,title`; everything else is read as a JSON array.
pub fn load_corpus(path: &Path) -> Result<Vec<Question>, CorpusError> {
    let text = std::fs::read_to_string(path)?;
    let questions: Vec<Question> = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        csv::Reader::from_reader(text.as_bytes()).deserialize().collect::<Result<_, _>>()?
    } else if text.trim().is_empty() {
        Vec::new()
    } else {
        serde_json::from_str(&text)?
    };
    if let Some(q) = questions.iter().find(|q| q.title.trim().is_empty()) {
        return Err(CorpusError::Empty(q.id.clone()));
    }
    Ok(questions)
}

/// The `k` questions with the most answers (stable on ties).
pub fn top_k(mut questions: Vec<Question>, k: usize) -> Vec<Question> {
    questions.sort_by_key(|q| std::cmp::Reverse(q.answer_count));
    questions.truncate(k);
    questions
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SetLabel {
    Q1,
    Q2,
    Q3,
    Q4,
    CI,
    DescCoT1,
    DescCoT2,
    DescCoT3,
    CoC1,
    CoC2,
    CoC3,
    SP1,
    SP2,
}

impl SetLabel {
    pub const CODING: [SetLabel; 4] = [SetLabel::Q1, SetLabel::Q2, SetLabel::Q3, SetLabel::Q4];

    pub fn as_str(self) -> &'static str {
        match self {
            SetLabel::Q1 => "Q1",
            SetLabel::Q2 => "Q2",
            SetLabel::Q3 => "Q3",
            SetLabel::Q4 => "Q4",
            SetLabel::CI => "CI",
            SetLabel::DescCoT1 => "DescCoT1",
            SetLabel::DescCoT2 => "DescCoT2",
            SetLabel::DescCoT3 => "DescCoT3",
            SetLabel::CoC1 => "CoC1",
            SetLabel::CoC2 => "CoC2",
            SetLabel::CoC3 => "CoC3",
            SetLabel::SP1 => "SP1",
            SetLabel::SP2 => "SP2",
        }
    }
}

impl fmt::Display for SetLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SetLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            SetLabel::Q1,
            SetLabel::Q2,
            SetLabel::Q3,
            SetLabel::Q4,
            SetLabel::CI,
            SetLabel::DescCoT1,
            SetLabel::DescCoT2,
            SetLabel::DescCoT3,
            SetLabel::CoC1,
            SetLabel::CoC2,
            SetLabel::CoC3,
            SetLabel::SP1,
            SetLabel::SP2,
        ]
        .into_iter()
        .find(|l| l.as_str().eq_ignore_ascii_case(s.trim()))
        .ok_or_else(|| format!("unknown prompt set '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Language {
    Nodejs,
    Python,
    PHP,
    Ruby,
    Perl,
}

impl Language {
    pub const ALL: [Language; 5] = [Language::Nodejs, Language::Python, Language::PHP, Language::Ruby, Language::Perl];

    pub fn as_str(self) -> &'static str {
        match self {
            Language::Nodejs => "Nodejs",
            Language::Python => "Python",
            Language::PHP => "PHP",
            Language::Ruby => "Ruby",
            Language::Perl => "Perl",
        }
    }

    /// Registry label used to group metrics by ecosystem.
    pub fn ecosystem(self) -> &'static str {
        match self {
            Language::Nodejs => "npm",
            Language::Python => "pypi",
            Language::PHP => "packagist",
            Language::Ruby => "rubygems",
            Language::Perl => "cpan",
        }
    }
}

/// A prompt and, once run, its response. Records without `model` are
/// prompts that have not been submitted yet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub question_id: String,
    pub set_label: SetLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language_variant: Option<Language>,
    pub prompt_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settings: Option<GatewaySettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requested_at: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completed_at: Option<DateTime<Utc>>,
}

impl PromptRecord {
    pub fn prompt(question_id: &str, set_label: SetLabel, language_variant: Option<Language>, prompt_text: String) -> Self {
        Self {
            question_id: question_id.to_owned(),
            set_label,
            language_variant,
            prompt_text,
            model: None,
            settings: None,
            response: None,
            error: None,
            requested_at: None,
            completed_at: None,
        }
    }

    /// Stable identifier, also used as the scan response id.
    pub fn record_id(&self) -> String {
        match self.language_variant {
            Some(l) => format!("{}/{}/{}", self.question_id, self.set_label, l.as_str()),
            None => format!("{}/{}", self.question_id, self.set_label),
        }
    }

    /// Labels attached to components found in this record's response.
    pub fn labels(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("question".into(), self.question_id.clone());
        m.insert("prompt_set".into(), self.set_label.to_string());
        if let Some(model) = &self.model {
            m.insert("model".into(), model.clone());
        }
        if let Some(l) = self.language_variant {
            m.insert("language".into(), l.as_str().into());
            m.insert("ecosystem".into(), l.ecosystem().into());
        }
        m
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct Templates {
    pub sets: BTreeMap<String, String>,
    pub defense: BTreeMap<String, String>,
    pub desc_cot: BTreeMap<String, String>,
    pub coc: BTreeMap<String, String>,
}

impl Templates {
    pub fn bundled() -> &'static Templates {
        static T: OnceLock<Templates> = OnceLock::new();
        T.get_or_init(|| toml::from_str(TEMPLATES_TOML).expect("bundled templates parse"))
    }

    pub fn set(&self, label: SetLabel) -> &str {
        &self.sets[label.as_str()]
    }

    /// Hash of the bundled template file, recorded in run manifests.
    pub fn hash() -> String {
        hex::encode(Sha256::digest(TEMPLATES_TOML.as_bytes()))
    }
}

/// Single-pass `{name}` substitution; substituted values are not rescanned.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let hit = after.find('}').and_then(|close| vars.iter().find(|(k, _)| *k == &after[..close]).map(|(_, v)| (close, *v)));
        match hit {
            Some((close, v)) => {
                out.push_str(v);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

#[derive(Debug, Clone, Deserialize)]
pub struct TermCatalog {
    pub languages: LanguageTerms,
    pub ci: CiTerms,
}

#[derive(Debug, Clone, Deserialize)]
pub struct LanguageTerms {
    pub targets: Vec<String>,
    pub replace: Vec<String>,
    #[serde(default)]
    pub replace_exact: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct CiTerms {
    pub target: String,
    pub replace: Vec<String>,
}

impl TermCatalog {
    pub fn bundled() -> &'static TermCatalog {
        static T: OnceLock<TermCatalog> = OnceLock::new();
        T.get_or_init(|| toml::from_str(TERMS_TOML).expect("bundled term catalog parses"))
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Replaces whole-word occurrences of any term. Longer terms win. When the
/// matched text starts lowercase, so does the replacement.
fn replace_terms(text: &str, terms: &[(&str, bool)], replacement: &str) -> String {
    let mut terms: Vec<(&str, bool)> = terms.to_vec();
    terms.sort_by_key(|(t, _)| std::cmp::Reverse(t.len()));
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    'scan: while i < text.len() {
        let before_ok = text[..i].chars().next_back().is_none_or(|c| !is_word_char(c));
        if before_ok {
            for (term, exact) in &terms {
                let Some(candidate) = text.get(i..i + term.len()) else { continue };
                let matched = if *exact { candidate == *term } else { candidate.eq_ignore_ascii_case(term) };
                // `+` and `#` after a term would make it a different language (C vs C#).
                let after_ok = text[i + term.len()..].chars().next().is_none_or(|c| !is_word_char(c) && c != '+' && c != '#');
                if matched && after_ok {
                    if candidate.starts_with(|c: char| c.is_lowercase()) {
                        let mut chars = replacement.chars();
                        if let Some(first) = chars.next() {
                            out.extend(first.to_lowercase());
                            out.push_str(chars.as_str());
                        }
                    } else {
                        out.push_str(replacement);
                    }
                    i += term.len();
                    continue 'scan;
                }
            }
        }
        let c = text[i..].chars().next().expect("in bounds");
        out.push(c);
        i += c.len_utf8();
    }
    out
}

fn with_text(q: &Question, f: impl Fn(&str) -> String) -> Question {
    Question { title: f(&q.title), body: f(&q.body), ..q.clone() }
}

/// Rewrites a question into the variants the prompt sets are built from.
/// Coding questions yield one variant per target language (in
/// [`Language::ALL`] order); CI questions yield one variant with other CI
/// services renamed.
pub fn transform_question(q: &Question) -> Vec<(Option<Language>, Question)> {
    transform_with(q, q.kind, TermCatalog::bundled())
}

pub fn transform_with(q: &Question, kind: QuestionKind, catalog: &TermCatalog) -> Vec<(Option<Language>, Question)> {
    match kind {
        QuestionKind::Coding => {
            let terms: Vec<(&str, bool)> = catalog
                .languages
                .replace
                .iter()
                .map(|t| (t.as_str(), false))
                .chain(catalog.languages.replace_exact.iter().map(|t| (t.as_str(), true)))
                .collect();
            Language::ALL.iter().map(|l| (Some(*l), with_text(q, |t| replace_terms(t, &terms, l.as_str())))).collect()
        }
        QuestionKind::Ci => {
            let terms: Vec<(&str, bool)> = catalog.ci.replace.iter().map(|t| (t.as_str(), false)).collect();
            vec![(None, with_text(q, |t| replace_terms(t, &terms, &catalog.ci.target)))]
        }
    }
}

/// Prompts (not yet run) for the selected sets. Coding sets are built from
/// the five language variants, the CI set from the CI-normalized question.
/// Defense and chain labels are not accepted here.
pub fn generate_prompt_sets(q: &Question, sets: &[SetLabel]) -> Vec<PromptRecord> {
    let t = Templates::bundled();
    let mut out = Vec::new();
    let coding: Vec<SetLabel> = SetLabel::CODING.into_iter().filter(|s| sets.contains(s)).collect();
    if !coding.is_empty() {
        for (lang, variant) in transform_with(q, QuestionKind::Coding, TermCatalog::bundled()) {
            let text = variant.text();
            for s in &coding {
                out.push(PromptRecord::prompt(&q.id, *s, lang, render(t.set(*s), &[("question", &text)])));
            }
        }
    }
    if sets.contains(&SetLabel::CI) {
        for (_, variant) in transform_with(q, QuestionKind::Ci, TermCatalog::bundled()) {
            out.push(PromptRecord::prompt(&q.id, SetLabel::CI, None, render(t.set(SetLabel::CI), &[("question", &variant.text())])));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_is_single_pass() {
        assert_eq!(render("a {x} b {y}", &[("x", "{y}"), ("y", "2")]), "a {y} b 2");
        assert_eq!(render("{unknown} {x", &[("x", "1")]), "{unknown} {x");
    }

    #[test]
    fn java_becomes_five_languages() {
        let v = transform_question(&Question::new("1", "How to parse JSON in Java"));
        let titles: Vec<&str> = v.iter().map(|(_, q)| q.title.as_str()).collect();
        assert_eq!(
            titles,
            ["How to parse JSON in Nodejs", "How to parse JSON in Python", "How to parse JSON in PHP", "How to parse JSON in Ruby", "How to parse JSON in Perl"]
        );
    }

    #[test]
    fn target_language_is_rewritten_too() {
        let v = transform_question(&Question::new("1", "Parse JSON in python, not JavaScript"));
        assert_eq!(v[0].1.title, "Parse JSON in nodejs, not Nodejs");
        assert_eq!(v[1].1.title, "Parse JSON in python, not Python");
    }

    #[test]
    fn jenkins_becomes_github_actions() {
        let mut q = Question::new("2", "How to set environment variables in Jenkins?");
        q.kind = QuestionKind::Ci;
        let v = transform_question(&q);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].1.title, "How to set environment variables in GitHub Actions?");
    }

    #[test]
    fn word_boundaries_and_case() {
        let terms = [("Java", false), ("C", false), ("C#", false), ("Go", true)];
        assert_eq!(replace_terms("JavaScript and java, C# or C", &terms, "Ruby"), "JavaScript and ruby, Ruby or Ruby");
        assert_eq!(replace_terms("go to Go", &terms, "Perl"), "go to Perl");
        assert_eq!(replace_terms("café Java", &terms, "PHP"), "café PHP");
    }

    #[test]
    fn untouched_question_still_has_five_variants() {
        let q = Question::new("3", "Read a CSV file");
        let v = transform_question(&q);
        assert_eq!(v.len(), 5);
        assert!(v.iter().all(|(_, x)| x.title == "Read a CSV file"));
    }

    #[test]
    fn prompt_set_counts() {
        let q = Question::new("4", "How to parse JSON in Java");
        let all = [SetLabel::Q1, SetLabel::Q2, SetLabel::Q3, SetLabel::Q4, SetLabel::CI];
        assert_eq!(generate_prompt_sets(&q, &all).len(), 21);
        assert_eq!(generate_prompt_sets(&q, &[SetLabel::CI]).len(), 1);
        let q1 = generate_prompt_sets(&q, &[SetLabel::Q1]);
        assert_eq!(q1[0].prompt_text, "How to parse JSON in Nodejs");
    }

    #[test]
    fn set_templates() {
        let q = Question::new("5", "Send an email");
        let p = generate_prompt_sets(&q, &[SetLabel::Q4, SetLabel::CI]);
        assert!(p.iter().find(|r| r.set_label == SetLabel::Q4).unwrap().prompt_text.contains("five packages"));
        let ci = p.iter().find(|r| r.set_label == SetLabel::CI).unwrap();
        assert_eq!(
            ci.prompt_text,
            "please give me a complete GitHub Actions configuration file to solve or realize the following problem or task, Send an email"
        );
    }

    #[test]
    fn csv_and_json_corpora() {
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("q.csv");
        std::fs::write(&csv_path, "id,tag,title,body,answer_count\n1,json,Parse JSON in Java,,12\n2,ci,Cache deps in Jenkins,,30\n").unwrap();
        let qs = load_corpus(&csv_path).unwrap();
        assert_eq!(qs.len(), 2);
        assert_eq!(top_k(qs, 1)[0].id, "2");
        let json_path = dir.path().join("q.json");
        std::fs::write(&json_path, r#"[{"id":"a","title":"t","kind":"ci"}]"#).unwrap();
        assert_eq!(load_corpus(&json_path).unwrap()[0].kind, QuestionKind::Ci);
        std::fs::write(&json_path, "").unwrap();
        assert!(load_corpus(&json_path).unwrap().is_empty());
    }
}
