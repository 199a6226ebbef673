//! A deterministic mock world: a fake LLM whose answers are pure functions
//! of the prompt, and a registry that defines which packages exist.
//!
//! Baseline answers install five packages, two of them invented. When asked
//! to confirm a package the fake model rejects invented names, except one in
//! four which it wrongly confirms. When regenerating code it brings in a real
//! replacement for half of the rejected names.

use std::collections::BTreeSet;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use sha2::{Digest, Sha256};

use super::gateway::{GatewayError, MockGateway};
use super::{SetLabel, Templates};
use crate::extract::{Extractor, Registry};
use crate::probe::{DenyTransport, FixedClock, HttpRequest, HttpResponse, ProbeConfig, Prober, Transport, TransportError};

const NPM: &[&str] = &["express", "lodash", "axios", "moment", "chalk", "commander", "dotenv", "uuid", "yargs", "debug", "cors", "body-parser"];
const PYPI: &[&str] = &["requests", "flask", "numpy", "pandas", "click", "pyyaml", "pillow", "sqlalchemy", "jinja2", "pytest"];
const PACKAGIST: &[&str] = &[
    "monolog/monolog",
    "guzzlehttp/guzzle",
    "symfony/console",
    "laravel/framework",
    "phpunit/phpunit",
    "vlucas/phpdotenv",
    "nesbot/carbon",
    "league/csv",
];
const RUBYGEMS: &[&str] = &["rails", "sinatra", "nokogiri", "rspec", "puma", "devise", "sidekiq", "httparty"];
const CPAN: &[&str] = &["Mojolicious", "Moose", "DBI", "Dancer2", "JSON::XS", "Try::Tiny", "Plack", "Catalyst::Runtime"];

const ADJECTIVES: &[&str] = &["fast", "smart", "easy", "simple", "quick", "auto", "super", "micro"];
const NOUNS: &[&str] = &["parser", "helper", "toolkit", "client", "bridge", "mapper", "loader", "runner"];

fn digest(parts: &[&str]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0]);
    }
    h.finalize().into()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorldPackage {
    pub name: String,
    pub registry: Registry,
    pub real: bool,
}

#[derive(Debug, Clone)]
pub struct MockWorld {
    /// A wrongly confirmed invented name is one in `fooled_one_in`.
    pub fooled_one_in: u8,
    /// A rejected name gets a real replacement one in `substitute_one_in`.
    pub substitute_one_in: u8,
}

impl Default for MockWorld {
    fn default() -> Self {
        Self { fooled_one_in: 4, substitute_one_in: 2 }
    }
}

fn pool(r: Registry) -> &'static [&'static str] {
    match r {
        Registry::Npm => NPM,
        Registry::PyPI => PYPI,
        Registry::Packagist => PACKAGIST,
        Registry::RubyGems => RUBYGEMS,
        Registry::Cpan => CPAN,
    }
}

fn install_command(r: Registry) -> &'static str {
    match r {
        Registry::Npm => "npm install",
        Registry::PyPI => "pip install",
        Registry::Packagist => "composer require",
        Registry::RubyGems => "gem install",
        Registry::Cpan => "cpanm",
    }
}

fn invented_name(r: Registry, seed: &[u8]) -> String {
    let adj = ADJECTIVES[seed[0] as usize % ADJECTIVES.len()];
    let noun = NOUNS[seed[1] as usize % NOUNS.len()];
    let tag = hex::encode(&seed[2..4]);
    match r {
        Registry::Packagist => format!("{adj}{tag}/{noun}"),
        Registry::Cpan => {
            let cap = |s: &str| s[..1].to_uppercase() + &s[1..];
            format!("{}::{}{tag}", cap(adj), cap(noun))
        }
        _ => format!("{adj}-{noun}-{tag}"),
    }
}

fn strip_between<'a>(s: &'a str, prefix: &str, suffix: &str) -> Option<&'a str> {
    s.strip_prefix(prefix)?.strip_suffix(suffix)
}

impl MockWorld {
    pub fn exists(&self, registry: Registry, name: &str) -> bool {
        pool(registry).contains(&name)
    }

    /// Registry the answer to a question uses: named by the question's
    /// language when it has one.
    pub fn registry_for(&self, question: &str) -> Registry {
        let lower = question.to_lowercase();
        for (word, r) in [("nodejs", Registry::Npm), ("python", Registry::PyPI), ("php", Registry::Packagist), ("ruby", Registry::RubyGems), ("perl", Registry::Cpan)] {
            if lower.split(|c: char| !c.is_alphanumeric()).any(|w| w == word) {
                return r;
            }
        }
        Registry::ALL[digest(&["registry", question])[0] as usize % Registry::ALL.len()]
    }

    /// The five packages of the baseline answer: three real, two invented.
    pub fn baseline_packages(&self, question: &str) -> Vec<WorldPackage> {
        let registry = self.registry_for(question);
        let seed = digest(&["baseline", question]);
        let pool = pool(registry);
        let mut real: Vec<&str> = Vec::new();
        let mut k = 0;
        while real.len() < 3 {
            let pick = pool[(seed[k % 32] as usize + k) % pool.len()];
            if !real.contains(&pick) {
                real.push(pick);
            }
            k += 1;
        }
        let invented = [invented_name(registry, &digest(&["invented-a", question])), invented_name(registry, &digest(&["invented-b", question]))];
        let mut out: Vec<WorldPackage> = real.iter().map(|n| WorldPackage { name: (*n).to_owned(), registry, real: true }).collect();
        // Invented names land at seed-chosen positions.
        for (i, name) in invented.into_iter().enumerate() {
            let at = seed[20 + i] as usize % (out.len() + 1);
            out.insert(at, WorldPackage { name, registry, real: false });
        }
        out
    }

    fn fooled(&self, name: &str) -> bool {
        digest(&["fooled", name])[0].is_multiple_of(self.fooled_one_in.max(1))
    }

    fn substituted(&self, name: &str) -> bool {
        digest(&["substitute", name])[0].is_multiple_of(self.substitute_one_in.max(1))
    }

    fn code_answer(registry: Registry, names: &[&str]) -> String {
        let install = if names.is_empty() { String::new() } else { format!("```bash\n{} {}\n```\n\n", install_command(registry), names.join(" ")) };
        format!("Here is one way to do it.\n\n{install}```\n// solution code\n```\n")
    }

    /// Recovers the question from a coding-set or defense prompt.
    fn question_of(prompt: &str) -> String {
        let t = Templates::bundled();
        let mut text = prompt;
        for suffix in t.defense.values() {
            if let Some(s) = text.strip_suffix(suffix.as_str()) {
                text = s;
            }
        }
        for label in [SetLabel::Q2, SetLabel::Q3, SetLabel::Q4] {
            let prefix = t.set(label).split("{question}").next().unwrap_or("");
            if let Some(q) = text.strip_prefix(prefix) {
                return q.to_owned();
            }
        }
        text.to_owned()
    }

    pub fn respond(&self, prompt: &str) -> Result<String, GatewayError> {
        let t = Templates::bundled();
        let coc = |k: &str| t.coc[k].clone();

        let extract_suffix = coc("extract").replace("{baseline_code}", "");
        if let Some(code) = prompt.strip_suffix(&extract_suffix) {
            let pkgs = Extractor::default().extract_all(code).packages;
            if pkgs.is_empty() {
                return Ok("No, there are no packages installed in the content above.".into());
            }
            let mut seen = BTreeSet::new();
            let lines: Vec<String> =
                pkgs.iter().filter(|p| seen.insert((p.registry, p.name.clone()))).map(|p| format!("- {} ({})", p.name, p.registry.display_name())).collect();
            return Ok(format!("Yes, the following packages are installed:\n{}", lines.join("\n")));
        }

        let confirm = coc("confirm");
        let (c_pre, c_rest) = confirm.split_once("{package_name}").expect("template has package_name");
        let (c_mid, c_post) = c_rest.split_once("{registry}").expect("template has registry");
        if let Some(inner) = strip_between(prompt, c_pre, c_post) {
            let (name, registry) = inner.split_once(c_mid).ok_or_else(|| GatewayError::Other("malformed confirmation prompt".into()))?;
            let registry: Registry = registry.parse().map_err(GatewayError::Other)?;
            let yes = self.exists(registry, name) || self.fooled(name);
            return Ok(if yes { "Yes.".into() } else { "No.".into() });
        }

        let regen = coc("regenerate");
        let (r_pre, r_rest) = regen.split_once("{packages}").expect("template has packages");
        let (r_mid, r_post) = r_rest.split_once("{original_question}").expect("template has original_question");
        if let Some(inner) = strip_between(prompt, r_pre, r_post) {
            let (list, question) = inner.split_once(r_mid).ok_or_else(|| GatewayError::Other("malformed regeneration prompt".into()))?;
            let confirmed: Vec<&str> = list.split(", ").filter(|s| !s.is_empty()).collect();
            let baseline = self.baseline_packages(question);
            let registry = self.registry_for(question);
            let mut names: Vec<String> = confirmed.iter().map(|s| (*s).to_owned()).collect();
            let mut used: BTreeSet<String> = baseline.iter().map(|p| p.name.clone()).chain(names.iter().cloned()).collect();
            for rejected in baseline.iter().filter(|p| !confirmed.contains(&p.name.as_str())) {
                if !self.substituted(&rejected.name) {
                    continue;
                }
                if let Some(alt) = pool(registry).iter().find(|n| !used.contains(**n)) {
                    used.insert((*alt).to_owned());
                    names.push((*alt).to_owned());
                }
            }
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            return Ok(Self::code_answer(registry, &refs));
        }

        if prompt.starts_with("Give me an answer of yes or no") {
            let d = digest(&["desc-cot", prompt]);
            let third = prompt.contains("programming language itself");
            return Ok(match (third, d[0].is_multiple_of(3)) {
                (false, _) => "Yes.".into(),
                (true, true) => "Yes.".into(),
                (true, false) => "No.".into(),
            });
        }

        if prompt.starts_with(t.set(SetLabel::CI).split("{question}").next().unwrap_or("\u{0}")) {
            return Ok("```yaml\nname: ci\non: [push]\njobs:\n  build:\n    runs-on: ubuntu-latest\n    steps:\n      - uses: actions/checkout@v4\n      - run: echo build\n```\n".into());
        }

        let question = Self::question_of(prompt);
        let pkgs = self.baseline_packages(&question);
        let names: Vec<&str> = pkgs.iter().map(|p| p.name.as_str()).collect();
        Ok(Self::code_answer(self.registry_for(&question), &names))
    }

    pub fn gateway(self: &Arc<Self>, model: &str) -> MockGateway {
        let world = Arc::clone(self);
        MockGateway::new(model, move |p| world.respond(p))
    }

    /// A prober whose registry is this world: pool names exist, nothing else does.
    pub fn prober(self: &Arc<Self>) -> Prober {
        let at: DateTime<Utc> = MockGateway::EPOCH.parse().expect("valid epoch");
        let config = ProbeConfig::default();
        let index = Prober::new(Arc::new(DenyTransport::default()), config.clone(), Arc::new(FixedClock(at)));
        let real: BTreeSet<String> =
            Registry::ALL.iter().flat_map(|r| pool(*r).iter().map(|n| index.package_url(*r, n)).collect::<Vec<_>>()).collect();
        Prober::new(Arc::new(MockRegistry { real, at }), config, Arc::new(FixedClock(at)))
    }
}

struct MockRegistry {
    real: BTreeSet<String>,
    at: DateTime<Utc>,
}

impl Transport for MockRegistry {
    fn send(&self, req: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let found = self.real.contains(&req.url);
        Ok(HttpResponse {
            status: if found { 200 } else { 404 },
            headers: Default::default(),
            body: if found { r#"{"dist-tags":{"latest":"1.0.0"},"versions":{"1.0.0":{}}}"#.into() } else { String::new() },
            observed_at: self.at,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::Extractor;
    use crate::probe::ProbeStatus;
    use crate::extract::{PackageRef, Span};

    #[test]
    fn baseline_has_three_real_two_invented_and_extracts() {
        let w = Arc::new(MockWorld::default());
        for q in ["Parse JSON in Nodejs", "Parse JSON in Python", "Parse JSON in PHP", "Parse JSON in Ruby", "Parse JSON in Perl"] {
            let pkgs = w.baseline_packages(q);
            assert_eq!(pkgs.len(), 5);
            assert_eq!(pkgs.iter().filter(|p| p.real).count(), 3);
            let answer = w.respond(q).unwrap();
            let got: Vec<String> = Extractor::default().extract_all(&answer).packages.into_iter().map(|p| p.name).collect();
            let want: Vec<String> = pkgs.iter().map(|p| p.name.clone()).collect();
            assert_eq!(got, want, "{q}");
        }
    }

    #[test]
    fn registry_is_the_world() {
        let w = Arc::new(MockWorld::default());
        let p = w.prober();
        for pkg in w.baseline_packages("Parse JSON in Perl") {
            let o = p.probe_package(&PackageRef::new(pkg.registry, pkg.name.clone(), None, Span::new(0, 0))).unwrap();
            assert_eq!(o.status == ProbeStatus::Exists, pkg.real, "{}", pkg.name);
        }
    }

    #[test]
    fn coc_halves_the_rate_and_keeps_most_packages() {
        let w = Arc::new(MockWorld::default());
        let gw = w.gateway("mock");
        let prober = w.prober();
        let (mut base, mut base_h, mut fin, mut fin_h, mut disagreements) = (0, 0, 0, 0, 0);
        for i in 0..60 {
            let lang = ["Nodejs", "Python", "PHP", "Ruby", "Perl"][i % 5];
            let q = crate::prompt::Question::new(format!("q{i}"), format!("Task {i} in {lang}"));
            let out = crate::prompt::chain_of_confirmation(&q, None, &gw, Some(&prober)).unwrap();
            assert!(out.confirmed.iter().all(|c| parse_has(&out.steps[1].response, &c.0)));
            base += out.metrics.baseline_packages;
            base_h += out.metrics.baseline_hallucinated.unwrap();
            fin += out.metrics.final_packages;
            fin_h += out.metrics.final_hallucinated.unwrap();
            disagreements += out.disagreements.len();
        }
        let (r0, r1) = (base_h as f64 / base as f64, fin_h as f64 / fin as f64);
        assert_eq!(base, 300);
        assert!((r0 - 0.4).abs() < 1e-12);
        assert!(r1 <= r0 / 2.0, "{r1} vs {r0}");
        assert!(fin as f64 >= 0.75 * base as f64, "{fin} vs {base}");
        assert_eq!(disagreements, fin_h);
    }

    fn parse_has(step1: &str, name: &str) -> bool {
        crate::prompt::parse_extracted_packages(step1).iter().any(|(n, _)| n == name)
    }
}
