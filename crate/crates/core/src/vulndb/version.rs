//! Dotted versions as the retire.js data uses them.
//!
//! Segments are split on `.` and `-`. A missing segment counts as `0`,
//! numeric segments compare numerically, other segments lexicographically,
//! and a numeric segment ranks above a non-numeric one, so `3.0.0` is above
//! `3.0.0-beta1`.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed version '{0}'")]
pub struct VersionError(pub String);

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Version {
    text: String,
}

fn is_wildcard(seg: &str) -> bool {
    matches!(seg, "x" | "X" | "*")
}

impl Version {
    /// Accepts non-empty alphanumeric segments whose first segment starts
    /// with a digit. Wildcard segments (`x`, `X`, `*`) are only allowed after
    /// the first `-`, so `1.2.x` is rejected while `1.0.0-*` is not.
    pub fn parse(s: &str) -> Result<Self, VersionError> {
        let err = || VersionError(s.to_owned());
        if !s.as_bytes().first().is_some_and(u8::is_ascii_digit) {
            return Err(err());
        }
        let (release, pre) = match s.split_once('-') {
            Some((r, p)) => (r, Some(p)),
            None => (s, None),
        };
        let alnum = |seg: &str| !seg.is_empty() && seg.bytes().all(|b| b.is_ascii_alphanumeric());
        if !release.split('.').all(alnum) || release.split('.').any(is_wildcard) {
            return Err(err());
        }
        if let Some(pre) = pre {
            if !pre.split(['.', '-']).all(|seg| alnum(seg) || is_wildcard(seg)) {
                return Err(err());
            }
        }
        Ok(Self { text: s.to_owned() })
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    fn segments(&self) -> impl Iterator<Item = &str> {
        self.text.split(['.', '-'])
    }
}

enum Seg<'a> {
    Num(&'a str),
    Text(&'a str),
}

fn comparable(seg: Option<&str>) -> Seg<'_> {
    match seg {
        None => Seg::Num(""),
        Some(s) if s.bytes().all(|b| b.is_ascii_digit()) => Seg::Num(s.trim_start_matches('0')),
        Some(s) => Seg::Text(s),
    }
}

fn cmp_numeric(a: &str, b: &str) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| a.cmp(b))
}

pub fn compare(a: &Version, b: &Version) -> Ordering {
    let (mut x, mut y) = (a.segments(), b.segments());
    loop {
        let (p, q) = (x.next(), y.next());
        if p.is_none() && q.is_none() {
            return Ordering::Equal;
        }
        let ord = match (comparable(p), comparable(q)) {
            (Seg::Num(m), Seg::Num(n)) => cmp_numeric(m, n),
            (Seg::Text(m), Seg::Text(n)) => m.cmp(n),
            (Seg::Num(_), Seg::Text(_)) => Ordering::Greater,
            (Seg::Text(_), Seg::Num(_)) => Ordering::Less,
        };
        if ord != Ordering::Equal {
            return ord;
        }
    }
}

impl PartialEq for Version {
    fn eq(&self, other: &Self) -> bool {
        compare(self, other) == Ordering::Equal
    }
}

impl Eq for Version {}

impl PartialOrd for Version {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Version {
    fn cmp(&self, other: &Self) -> Ordering {
        compare(self, other)
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl TryFrom<String> for Version {
    type Error = VersionError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Version::parse(&s)
    }
}

impl From<Version> for String {
    fn from(v: Version) -> Self {
        v.text
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(s: &str) -> Version {
        Version::parse(s).unwrap()
    }

    #[test]
    fn ordering_rules() {
        assert!(v("0.21.1") < v("0.21.2"));
        assert!(v("1.10.0") > v("1.9.9"));
        assert_eq!(v("1.0"), v("1.0.0"));
        assert!(v("3.0.0-beta1") < v("3.0.0"));
        assert!(v("1.9.0b1") < v("1.9.0"));
        assert!(v("3.0.0-beta1") < v("3.0.0-rc1"));
        assert_eq!(v("01.2"), v("1.2"));
    }

    #[test]
    fn well_formedness() {
        for ok in ["1", "1.2.3", "3.0.0-beta1", "1.9.0b1", "3.0.RC3", "1.0.0-*", "2.0.0-x"] {
            assert!(Version::parse(ok).is_ok(), "{ok}");
        }
        for bad in ["1.2.x", "", "v1.2", "1..2", "1.2.", "x", "1.2 3", "1.*"] {
            assert!(Version::parse(bad).is_err(), "{bad}");
        }
    }

    fn version_strategy() -> impl Strategy<Value = Version> {
        (prop::collection::vec(0u32..20, 1..4), prop::option::of(prop::sample::select(vec!["alpha", "beta1", "rc2"])))
            .prop_map(|(nums, pre)| {
                let mut s = nums.iter().map(u32::to_string).collect::<Vec<_>>().join(".");
                if let Some(p) = pre {
                    s.push('-');
                    s.push_str(p);
                }
                v(&s)
            })
    }

    proptest! {
        #[test]
        fn total_order(a in version_strategy(), b in version_strategy(), c in version_strategy()) {
            prop_assert_eq!(compare(&a, &b), compare(&b, &a).reverse());
            if a <= b && b <= c {
                prop_assert!(a <= c);
            }
        }
    }
}
