//! Install-command grammar.
//!
//! Recognized commands: `npm install|i|add`, `yarn add`, `pnpm add`,
//! `pip|pip3 install`, `python[3] -m pip install`, `composer [global] require`,
//! `gem install`, `cpan`, `cpanm`. The command may appear anywhere in a
//! segment (after `sudo`, `RUN`, `$`, `!`, ...). Arguments end at the segment
//! boundary or after a token carrying sentence punctuation.

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::shell::{segments, Token};
use super::{CodeBlock, Diagnostic, DiagnosticKind, Span};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Registry {
    #[serde(rename = "npm")]
    Npm,
    #[serde(rename = "pypi")]
    PyPI,
    #[serde(rename = "packagist")]
    Packagist,
    #[serde(rename = "rubygems")]
    RubyGems,
    #[serde(rename = "cpan")]
    Cpan,
}

impl Registry {
    pub const ALL: [Registry; 5] = [Registry::Npm, Registry::PyPI, Registry::Packagist, Registry::RubyGems, Registry::Cpan];

    pub fn as_str(self) -> &'static str {
        match self {
            Registry::Npm => "npm",
            Registry::PyPI => "pypi",
            Registry::Packagist => "packagist",
            Registry::RubyGems => "rubygems",
            Registry::Cpan => "cpan",
        }
    }

    /// Human-facing registry name, as used in prompts.
    pub fn display_name(self) -> &'static str {
        match self {
            Registry::Npm => "npm",
            Registry::PyPI => "PyPI",
            Registry::Packagist => "Packagist",
            Registry::RubyGems => "RubyGems",
            Registry::Cpan => "CPAN",
        }
    }

    /// Whether the registry exposes a deprecation/abandonment mark we probe.
    pub fn has_deprecation_mark(self) -> bool {
        matches!(self, Registry::Npm | Registry::Packagist | Registry::Cpan)
    }
}

impl fmt::Display for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Registry {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "npm" | "node" | "nodejs" | "yarn" | "pnpm" => Ok(Registry::Npm),
            "pypi" | "pip" | "python" => Ok(Registry::PyPI),
            "packagist" | "composer" | "php" => Ok(Registry::Packagist),
            "rubygems" | "gem" | "gems" | "ruby" => Ok(Registry::RubyGems),
            "cpan" | "metacpan" | "cpanm" | "perl" => Ok(Registry::Cpan),
            other => Err(format!("unknown registry '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PackageRef {
    pub registry: Registry,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    /// Packagist only: whether the name has the `vendor/package` shape.
    /// Always `true` for other registries.
    pub complete: bool,
    pub origin: Span,
}

impl PackageRef {
    pub fn new(registry: Registry, name: impl Into<String>, version: Option<String>, origin: Span) -> Self {
        let name = name.into();
        let complete = registry != Registry::Packagist || packagist_complete(&name);
        Self { registry, name, version, complete, origin }
    }

    /// `(registry, name, version)` deduplication key.
    pub fn dedup_key(&self) -> String {
        match &self.version {
            Some(v) => format!("pkg:{}/{}@{}", self.registry, self.name, v),
            None => format!("pkg:{}/{}", self.registry, self.name),
        }
    }
}

/// `vendor/package`: exactly one `/` separating two non-empty segments.
pub fn packagist_complete(name: &str) -> bool {
    let mut parts = name.split('/');
    matches!((parts.next(), parts.next(), parts.next()), (Some(v), Some(p), None) if !v.is_empty() && !p.is_empty())
}

static NPM_NAME: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(@[A-Za-z0-9][A-Za-z0-9._~-]*/)?[A-Za-z0-9_][A-Za-z0-9._~-]*$").unwrap());
static NPM_SPEC: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[A-Za-z0-9.^~<>=*+ _-]+$").unwrap());
static PYPI_REQ: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^([A-Za-z0-9](?:[A-Za-z0-9._-]*[A-Za-z0-9])?)(\[[A-Za-z0-9._, -]*\])?\s*(?:(===|==|~=|!=|>=|<=|>|<)\s*([A-Za-z0-9.*+!_,<>=~ -]+))?$").unwrap()
});
static PACKAGIST_NAME: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^[A-Za-z0-9](?:[A-Za-z0-9_.-]*[A-Za-z0-9])?(?:/[A-Za-z0-9](?:[A-Za-z0-9_.-]*[A-Za-z0-9])?)?$").unwrap()
});
static CONSTRAINT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?:[\^~<>=!*]|v?\d|dev-|@)[A-Za-z0-9.^~<>=!*|,@ +_-]*$").unwrap());
static GEM_NAME: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[A-Za-z0-9][A-Za-z0-9_.-]*$").unwrap());
static GEM_VERSION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[~<>=! ]*[0-9][A-Za-z0-9.]*$").unwrap());
static CPAN_NAME: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?:[A-Za-z_][A-Za-z0-9_]*(?:::[A-Za-z0-9_]+)*|[A-Za-z][A-Za-z0-9_]*(?:-[A-Za-z0-9_]+)+)$").unwrap()
});
static CPAN_VERSION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[<>=! ]*v?[0-9][0-9._]*$").unwrap());

#[derive(Clone, Copy)]
enum Tool {
    Npm,
    Pip,
    Composer,
    Gem,
    Cpan,
}

impl Tool {
    fn registry(self) -> Registry {
        match self {
            Tool::Npm => Registry::Npm,
            Tool::Pip => Registry::PyPI,
            Tool::Composer => Registry::Packagist,
            Tool::Gem => Registry::RubyGems,
            Tool::Cpan => Registry::Cpan,
        }
    }

    /// Flags whose value is the following token.
    fn flag_takes_value(self, flag: &str) -> bool {
        let list: &[&str] = match self {
            Tool::Npm => &["--registry", "--prefix", "--tag", "--cache", "--userconfig", "-w", "--workspace", "--omit", "--install-strategy"],
            Tool::Pip => &[
                "-r", "--requirement", "-c", "--constraint", "-e", "--editable", "-i", "--index-url", "--extra-index-url",
                "-f", "--find-links", "-t", "--target", "--prefix", "--root", "--platform", "--python-version",
                "--implementation", "--abi", "--src", "--upgrade-strategy", "--progress-bar", "--log", "--proxy",
                "--retries", "--timeout", "--cert", "--client-cert", "--cache-dir", "--trusted-host", "--only-binary",
                "--no-binary",
            ],
            Tool::Composer => &["-d", "--working-dir"],
            Tool::Gem => &["-s", "--source", "-i", "--install-dir", "-n", "--bindir", "--platform"],
            Tool::Cpan => &["-l", "--local-lib", "-L", "--local-lib-contained", "--mirror", "-j"],
        };
        list.contains(&flag)
    }
}

fn program_name(tok: &str) -> &str {
    let tok = tok.trim_start_matches(['!', '$', '%']);
    tok.rsplit('/').next().unwrap_or(tok)
}

/// Locates an install command in a segment. Returns the tool and the index
/// of the first argument token.
fn find_command(seg: &[Token]) -> Option<(Tool, usize)> {
    let word = |i: usize| seg.get(i).map(|t| t.text.as_str());
    for (i, tok) in seg.iter().enumerate() {
        let prog = program_name(&tok.text);
        let found = match prog {
            "npm" => match word(i + 1) {
                Some("install" | "i" | "add" | "isntall" | "in") => Some((Tool::Npm, i + 2)),
                _ => None,
            },
            "yarn" | "pnpm" => match (word(i + 1), word(i + 2)) {
                (Some("add"), _) => Some((Tool::Npm, i + 2)),
                (Some("global"), Some("add")) => Some((Tool::Npm, i + 3)),
                _ => None,
            },
            "pip" | "pip3" => match word(i + 1) {
                Some("install") => Some((Tool::Pip, i + 2)),
                _ => None,
            },
            "python" | "python3" | "py" => match (word(i + 1), word(i + 2), word(i + 3)) {
                (Some("-m"), Some("pip" | "pip3"), Some("install")) => Some((Tool::Pip, i + 4)),
                _ => None,
            },
            "composer" => match (word(i + 1), word(i + 2)) {
                (Some("require"), _) => Some((Tool::Composer, i + 2)),
                (Some("global"), Some("require")) => Some((Tool::Composer, i + 3)),
                _ => None,
            },
            "gem" => match word(i + 1) {
                Some("install") => Some((Tool::Gem, i + 2)),
                _ => None,
            },
            "cpan" | "cpanm" => {
                if word(i + 1) == Some("install") {
                    Some((Tool::Cpan, i + 2))
                } else {
                    Some((Tool::Cpan, i + 1))
                }
            }
            _ => None,
        };
        if found.is_some() {
            return found;
        }
    }
    None
}

struct Ctx<'a> {
    block: &'a CodeBlock,
    refs: Vec<PackageRef>,
    diags: &'a mut Vec<Diagnostic>,
}

impl Ctx<'_> {
    fn abs(&self, span: Span) -> Span {
        span.shift(self.block.span.start)
    }

    fn push(&mut self, registry: Registry, tok: &Token, name_range: (usize, usize), version: Option<String>) {
        let origin = self.abs(tok.sub_span(name_range.0, name_range.1));
        let name = &tok.text[name_range.0..name_range.1];
        self.refs.push(PackageRef::new(registry, name, version, origin));
    }

    fn reject(&mut self, tool: Tool, tok: &Token) {
        let span = self.abs(tok.span());
        self.diags.push(Diagnostic::new(
            DiagnosticKind::UnparseableToken,
            format!("skipped {} argument '{}'", tool.registry(), tok.text),
            Some(span),
        ));
    }
}

/// Strips trailing sentence punctuation; reports whether the argument list
/// ends here.
fn trim_sentence_end(text: &str) -> (usize, bool) {
    let trimmed = text.trim_end_matches(['.', ',', ':', '!', '?']);
    let ends = trimmed.len() != text.len();
    (trimmed.len(), ends)
}

fn is_location(arg: &str) -> bool {
    arg.contains("://")
        || arg.starts_with("git+")
        || arg.starts_with("github:")
        || arg.starts_with("file:")
        || arg.starts_with('.')
        || arg.starts_with('/')
        || arg.starts_with('~')
        || [".whl", ".tar.gz", ".tgz", ".zip", ".txt", ".gem"].iter().any(|s| arg.ends_with(s))
}

fn parse_args(ctx: &mut Ctx<'_>, tool: Tool, args: &[Token]) {
    let mut i = 0;
    while i < args.len() {
        let tok = &args[i];
        i += 1;
        let (len, last) = trim_sentence_end(&tok.text);
        let arg = &tok.text[..len];
        if arg.is_empty() {
            if last {
                break;
            }
            continue;
        }
        if arg.starts_with('-') {
            if matches!(tool, Tool::Gem) && matches!(arg, "-v" | "--version") {
                if let Some(next) = args.get(i) {
                    i += 1;
                    if let Some(prev) = ctx.refs.last_mut() {
                        prev.version = Some(next.text.trim().to_owned());
                    }
                }
            } else if !arg.contains('=') && tool.flag_takes_value(arg) {
                i += 1;
            }
            if last {
                break;
            }
            continue;
        }
        match tool {
            Tool::Npm => npm_arg(ctx, tok, len),
            Tool::Pip => pip_arg(ctx, tok, len),
            Tool::Composer => {
                let version = args.get(i).filter(|n| !n.text.contains('/') && CONSTRAINT.is_match(&n.text));
                let consumed = composer_arg(ctx, tok, len, version.map(|t| t.text.clone()));
                if consumed && version.is_some() {
                    i += 1;
                }
            }
            Tool::Gem => gem_arg(ctx, tok, len),
            Tool::Cpan => cpan_arg(ctx, tok, len),
        }
        if last {
            break;
        }
    }
}

fn npm_arg(ctx: &mut Ctx<'_>, tok: &Token, len: usize) {
    let arg = &tok.text[..len];
    if is_location(arg) {
        ctx.reject(Tool::Npm, tok);
        return;
    }
    let split = arg[1..].rfind('@').map(|p| p + 1);
    let (name_end, version) = match split {
        Some(p) => (p, Some(&arg[p + 1..])),
        None => (len, None),
    };
    let name = &arg[..name_end];
    let version_ok = version.is_none_or(|v| !v.is_empty() && NPM_SPEC.is_match(v));
    // `user/repo` without a scope is a GitHub shorthand, not a registry name.
    if !NPM_NAME.is_match(name) || !version_ok || (name.contains('/') && !name.starts_with('@')) {
        ctx.reject(Tool::Npm, tok);
        return;
    }
    ctx.push(Registry::Npm, tok, (0, name_end), version.map(str::to_owned));
}

fn pip_arg(ctx: &mut Ctx<'_>, tok: &Token, len: usize) {
    let arg = &tok.text[..len];
    if is_location(arg) {
        ctx.reject(Tool::Pip, tok);
        return;
    }
    // Environment markers are not part of the requirement.
    let req = arg.split(';').next().unwrap_or(arg).trim_end();
    let Some(caps) = PYPI_REQ.captures(req) else {
        ctx.reject(Tool::Pip, tok);
        return;
    };
    let name = caps.get(1).expect("name group");
    let version = match (caps.get(3), caps.get(4)) {
        (Some(op), Some(v)) if matches!(op.as_str(), "==" | "===") => Some(v.as_str().trim().to_owned()),
        (Some(op), Some(v)) => Some(format!("{}{}", op.as_str(), v.as_str().trim())),
        _ => None,
    };
    ctx.push(Registry::PyPI, tok, (name.start(), name.end()), version);
}

/// Returns whether the following token was taken as this package's
/// constraint.
fn composer_arg(ctx: &mut Ctx<'_>, tok: &Token, len: usize, next_constraint: Option<String>) -> bool {
    let arg = &tok.text[..len];
    let (name_end, inline) = match arg.find([':', '=']) {
        Some(p) => (p, Some(arg[p + 1..].to_owned())),
        None => (len, None),
    };
    let name = &arg[..name_end];
    if !PACKAGIST_NAME.is_match(name) || inline.as_deref().is_some_and(|v| v.is_empty() || !CONSTRAINT.is_match(v)) {
        ctx.reject(Tool::Composer, tok);
        return false;
    }
    let take_next = inline.is_none() && next_constraint.is_some();
    let version = inline.or(if take_next { next_constraint } else { None });
    ctx.push(Registry::Packagist, tok, (0, name_end), version);
    take_next
}

fn gem_arg(ctx: &mut Ctx<'_>, tok: &Token, len: usize) {
    let arg = &tok.text[..len];
    if is_location(arg) {
        ctx.reject(Tool::Gem, tok);
        return;
    }
    let (name_end, version) = match arg.find(':') {
        Some(p) => (p, Some(&arg[p + 1..])),
        None => (len, None),
    };
    let name = &arg[..name_end];
    if !GEM_NAME.is_match(name) || version.is_some_and(|v| !GEM_VERSION.is_match(v)) {
        ctx.reject(Tool::Gem, tok);
        return;
    }
    ctx.push(Registry::RubyGems, tok, (0, name_end), version.map(str::to_owned));
}

fn cpan_arg(ctx: &mut Ctx<'_>, tok: &Token, len: usize) {
    let arg = &tok.text[..len];
    if is_location(arg) {
        ctx.reject(Tool::Cpan, tok);
        return;
    }
    let (name_end, version) = match arg.find(['@', '~']) {
        Some(p) => (p, Some(&arg[p + 1..])),
        None => (len, None),
    };
    let name = &arg[..name_end];
    if !CPAN_NAME.is_match(name) || version.is_some_and(|v| !CPAN_VERSION.is_match(v)) {
        ctx.reject(Tool::Cpan, tok);
        return;
    }
    ctx.push(Registry::Cpan, tok, (0, name_end), version.map(str::to_owned));
}

/// Recovers package references from install commands in a code block.
/// Unparseable arguments are skipped and reported in `diags`.
pub fn extract_package_refs(block: &CodeBlock, diags: &mut Vec<Diagnostic>) -> Vec<PackageRef> {
    let mut ctx = Ctx { block, refs: Vec::new(), diags };
    for seg in segments(&block.text) {
        if let Some((tool, first)) = find_command(&seg) {
            parse_args(&mut ctx, tool, &seg[first.min(seg.len())..]);
        }
    }
    ctx.refs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn refs(src: &str) -> Vec<(Registry, String, Option<String>)> {
        let block = CodeBlock::standalone(src);
        extract_package_refs(&block, &mut Vec::new())
            .into_iter()
            .map(|r| (r.registry, r.name, r.version))
            .collect()
    }

    fn one(reg: Registry, name: &str, v: Option<&str>) -> (Registry, String, Option<String>) {
        (reg, name.to_owned(), v.map(str::to_owned))
    }

    #[test]
    fn pip_quoted_pin() {
        assert_eq!(refs(r#"pip install "package-name==1.4""#), vec![one(Registry::PyPI, "package-name", Some("1.4"))]);
    }

    #[test]
    fn npm_plain() {
        assert_eq!(refs("npm install package-name"), vec![one(Registry::Npm, "package-name", None)]);
    }

    #[test]
    fn composer_incomplete_name() {
        let block = CodeBlock::standalone("composer require monolog");
        let r = extract_package_refs(&block, &mut Vec::new());
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].name, "monolog");
        assert!(!r[0].complete);
        let block = CodeBlock::standalone("composer require monolog/monolog:^2.0 guzzlehttp/guzzle \"^7.0\"");
        let r = extract_package_refs(&block, &mut Vec::new());
        assert!(r.iter().all(|p| p.complete));
        assert_eq!(r[0].version.as_deref(), Some("^2.0"));
        assert_eq!(r[1].version.as_deref(), Some("^7.0"));
    }

    #[test]
    fn flags_and_multiple_names() {
        assert_eq!(
            refs("npm i -g --save-dev @types/node typescript@5.4.2"),
            vec![one(Registry::Npm, "@types/node", None), one(Registry::Npm, "typescript", Some("5.4.2"))]
        );
        assert_eq!(
            refs("pip3 install -U -r requirements.txt requests flask>=2.0"),
            vec![one(Registry::PyPI, "requests", None), one(Registry::PyPI, "flask", Some(">=2.0"))]
        );
    }

    #[test]
    fn other_ecosystems() {
        assert_eq!(refs("gem install rails -v 7.1.0"), vec![one(Registry::RubyGems, "rails", Some("7.1.0"))]);
        assert_eq!(refs("cpan JSON::XS"), vec![one(Registry::Cpan, "JSON::XS", None)]);
        assert_eq!(
            refs("cpanm Mojolicious@9.35 DBI"),
            vec![one(Registry::Cpan, "Mojolicious", Some("9.35")), one(Registry::Cpan, "DBI", None)]
        );
        assert_eq!(refs("python -m pip install numpy"), vec![one(Registry::PyPI, "numpy", None)]);
        assert_eq!(refs("yarn add left-pad"), vec![one(Registry::Npm, "left-pad", None)]);
    }

    #[test]
    fn comments_and_chains() {
        let src = "# pip install requests\nimport requests  # then npm install nothing-here\nRUN apt-get update && pip install django";
        assert_eq!(
            refs(src),
            vec![
                one(Registry::PyPI, "requests", None),
                one(Registry::Npm, "nothing-here", None),
                one(Registry::PyPI, "django", None)
            ]
        );
    }

    #[test]
    fn prose_terminates_arguments() {
        assert_eq!(refs("Run npm install express. Then start it"), vec![one(Registry::Npm, "express", None)]);
    }

    #[test]
    fn unparseable_tokens_are_counted() {
        let block = CodeBlock::standalone("npm install <package-name> ./local user/repo");
        let mut diags = Vec::new();
        assert!(extract_package_refs(&block, &mut diags).is_empty());
        assert_eq!(diags.len(), 3);
        assert!(diags.iter().all(|d| d.kind == DiagnosticKind::UnparseableToken));
    }

    #[test]
    fn origin_spans_cover_names() {
        let src = "x\n  pip install \"package-name==1.4\" numpy[extra]";
        let block = CodeBlock::standalone(src);
        for r in extract_package_refs(&block, &mut Vec::new()) {
            assert_eq!(r.origin.slice(src), r.name);
        }
    }

    #[test]
    fn packagist_completeness_rule() {
        assert!(packagist_complete("vendor/pkg"));
        assert!(!packagist_complete("pkg"));
        assert!(!packagist_complete("a/b/c"));
        assert!(!packagist_complete("/pkg"));
        assert!(!packagist_complete("vendor/"));
    }

    #[test]
    fn registry_parsing() {
        assert_eq!("PyPI".parse::<Registry>(), Ok(Registry::PyPI));
        assert_eq!("composer".parse::<Registry>(), Ok(Registry::Packagist));
        assert!("cargo".parse::<Registry>().is_err());
    }
}
