//! Amazon user identifiers: grammar, classification and cross-artifact
//! correlation.
//!
//! Six identifier formats are in use. Each one is described by a single
//! entry in [`GRAMMARS`]; validation, classification, scanning and the
//! fixture generators all read from that table.

mod graph;

pub use graph::{build_graph, Edge, IdObservation, IdentityGraph, Provenance};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum UserIdKind {
    CustomerId,
    DirectedId,
    CommsId,
    ContactId,
    PersonId,
    PersonIdV2,
}

impl UserIdKind {
    pub const ALL: [UserIdKind; 6] = [
        UserIdKind::CustomerId,
        UserIdKind::DirectedId,
        UserIdKind::CommsId,
        UserIdKind::ContactId,
        UserIdKind::PersonId,
        UserIdKind::PersonIdV2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UserIdKind::CustomerId => "customerId",
            UserIdKind::DirectedId => "directedId",
            UserIdKind::CommsId => "commsId",
            UserIdKind::ContactId => "contactId",
            UserIdKind::PersonId => "personId",
            UserIdKind::PersonIdV2 => "personIdV2",
        }
    }

    pub fn grammar(self) -> &'static Grammar {
        GRAMMARS
            .iter()
            .find(|g| g.kind == self)
            .expect("every kind has a grammar entry")
    }
}

impl fmt::Display for UserIdKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for UserIdKind {
    type Err = IdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        UserIdKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| IdError::UnknownKind(s.to_string()))
    }
}

/// Shape of the part that follows a grammar's literal prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Body {
    /// Uppercase alphanumerics (`[A-Z0-9]`) with one of the listed lengths.
    Alnum(&'static [usize]),
    /// A complete directedId.
    DirectedId,
    /// Version-4 UUID in its hyphenated text form, hex digits in either case.
    Uuid4,
}

#[derive(Debug, Clone, Copy)]
pub struct Grammar {
    pub kind: UserIdKind,
    pub prefix: &'static str,
    pub body: Body,
}

/// The one place the identifier alphabet and lengths are pinned.
pub const GRAMMARS: [Grammar; 6] = [
    Grammar {
        kind: UserIdKind::CustomerId,
        prefix: "",
        body: Body::Alnum(&[14]),
    },
    Grammar {
        kind: UserIdKind::DirectedId,
        prefix: "amzn1.account.",
        body: Body::Alnum(&[28]),
    },
    Grammar {
        kind: UserIdKind::CommsId,
        prefix: "amzn1.comms.id.person.amzn1~",
        body: Body::DirectedId,
    },
    Grammar {
        kind: UserIdKind::ContactId,
        prefix: "",
        body: Body::Uuid4,
    },
    Grammar {
        kind: UserIdKind::PersonId,
        prefix: "amzn1.actor.person.did.",
        body: Body::Alnum(&[72]),
    },
    Grammar {
        kind: UserIdKind::PersonIdV2,
        prefix: "amzn1.actor.person.oid.",
        body: Body::Alnum(&[13, 14]),
    },
];

pub fn is_id_char(c: u8) -> bool {
    c.is_ascii_uppercase() || c.is_ascii_digit()
}

fn is_uuid4(s: &str) -> bool {
    let b = s.as_bytes();
    if b.len() != 36 {
        return false;
    }
    for (i, &c) in b.iter().enumerate() {
        let ok = match i {
            8 | 13 | 18 | 23 => c == b'-',
            14 => c == b'4',
            19 => matches!(c.to_ascii_lowercase(), b'8' | b'9' | b'a' | b'b'),
            _ => c.is_ascii_hexdigit(),
        };
        if !ok {
            return false;
        }
    }
    true
}

impl Grammar {
    pub fn matches(&self, text: &str) -> bool {
        let Some(rest) = text.strip_prefix(self.prefix) else {
            return false;
        };
        match self.body {
            Body::Alnum(lengths) => {
                lengths.contains(&rest.len()) && rest.bytes().all(is_id_char)
            }
            Body::DirectedId => UserIdKind::DirectedId.grammar().matches(rest),
            Body::Uuid4 => is_uuid4(rest),
        }
    }

    /// Total text length(s) accepted by this grammar.
    pub fn lengths(&self) -> Vec<usize> {
        match self.body {
            Body::Alnum(l) => l.iter().map(|n| n + self.prefix.len()).collect(),
            Body::DirectedId => UserIdKind::DirectedId
                .grammar()
                .lengths()
                .into_iter()
                .map(|n| n + self.prefix.len())
                .collect(),
            Body::Uuid4 => vec![36],
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IdError {
    #[error("{text:?} matches no identifier grammar{}", hint.as_ref().map(|h| format!(" (closest: {h})")).unwrap_or_default())]
    NoMatch { text: String, hint: Option<String> },
    #[error("expected a {expected}, got a {actual}")]
    WrongKind {
        expected: UserIdKind,
        actual: UserIdKind,
    },
    #[error("{text:?} is not a valid {kind}")]
    Invalid { kind: UserIdKind, text: String },
    #[error("unknown identifier kind {0:?}")]
    UnknownKind(String),
}

/// A grammar-valid identifier. Construction always goes through validation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawUserId", into = "RawUserId")]
pub struct UserId {
    kind: UserIdKind,
    text: String,
}

#[derive(Serialize, Deserialize)]
struct RawUserId {
    kind: UserIdKind,
    text: String,
}

impl TryFrom<RawUserId> for UserId {
    type Error = IdError;

    fn try_from(raw: RawUserId) -> Result<Self, Self::Error> {
        UserId::new(raw.kind, raw.text)
    }
}

impl From<UserId> for RawUserId {
    fn from(id: UserId) -> Self {
        RawUserId {
            kind: id.kind,
            text: id.text,
        }
    }
}

impl UserId {
    pub fn new(kind: UserIdKind, text: impl Into<String>) -> Result<Self, IdError> {
        let text = text.into();
        if kind.grammar().matches(&text) {
            Ok(UserId { kind, text })
        } else {
            Err(IdError::Invalid { kind, text })
        }
    }

    pub fn kind(&self) -> UserIdKind {
        self.kind
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    /// The directedId embedded in a commsId.
    pub fn embedded_directed_id(&self) -> Option<UserId> {
        if self.kind != UserIdKind::CommsId {
            return None;
        }
        let rest = &self.text[UserIdKind::CommsId.grammar().prefix.len()..];
        Some(UserId {
            kind: UserIdKind::DirectedId,
            text: rest.to_string(),
        })
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl FromStr for UserId {
    type Err = IdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        classify(s)
    }
}

/// Classify `text` by structure alone.
///
/// The grammars are pairwise disjoint, so at most one kind can match.
pub fn classify(text: &str) -> Result<UserId, IdError> {
    let mut hits = GRAMMARS.iter().filter(|g| g.matches(text));
    match (hits.next(), hits.next()) {
        (Some(g), None) => Ok(UserId {
            kind: g.kind,
            text: text.to_string(),
        }),
        (Some(a), Some(b)) => unreachable!("grammars overlap: {} and {}", a.kind, b.kind),
        (None, _) => Err(IdError::NoMatch {
            text: text.to_string(),
            hint: closest_hint(text),
        }),
    }
}

fn closest_hint(text: &str) -> Option<String> {
    if text.is_empty() {
        return None;
    }
    let common = |p: &str| {
        p.bytes()
            .zip(text.bytes())
            .take_while(|(a, b)| a == b)
            .count()
    };
    let best = GRAMMARS
        .iter()
        .filter(|g| !g.prefix.is_empty())
        .max_by_key(|g| (common(g.prefix), g.prefix.len()))?;
    let shared = common(best.prefix);
    if shared >= "amzn1.".len() {
        let detail = if shared == best.prefix.len() {
            format!(
                "{} body after {:?} is malformed, expected total length {:?}",
                best.kind,
                best.prefix,
                best.lengths()
            )
        } else {
            format!("{} prefix {:?}", best.kind, best.prefix)
        };
        return Some(detail);
    }
    let alnum = text.bytes().all(|c| c.is_ascii_alphanumeric());
    if alnum {
        return Some(format!(
            "customerId expects exactly 14 characters from [A-Z0-9], got {}",
            text.len()
        ));
    }
    if text.contains('-') {
        return Some("contactId expects a version-4 UUID".to_string());
    }
    None
}

/// `amzn1.comms.id.person.amzn1~{directedId}`
pub fn derive_comms_id(directed: &UserId) -> Result<UserId, IdError> {
    if directed.kind != UserIdKind::DirectedId {
        return Err(IdError::WrongKind {
            expected: UserIdKind::DirectedId,
            actual: directed.kind,
        });
    }
    UserId::new(
        UserIdKind::CommsId,
        format!("{}{}", UserIdKind::CommsId.grammar().prefix, directed.text),
    )
}

/// Find every grammar-valid identifier embedded in free text.
///
/// Candidates are maximal runs of `[A-Za-z0-9.~-]`; prefixed kinds are
/// additionally searched for inside longer runs (e.g. a personId inside a
/// dotted preference key). customerIds are only reported when the token mixes
/// letters and digits. Results are in order of first appearance, deduplicated.
pub fn find_ids(text: &str) -> Vec<UserId> {
    let mut out: Vec<UserId> = Vec::new();
    let mut push = |id: UserId| {
        if !out.contains(&id) {
            out.push(id);
        }
    };
    let is_tok = |c: char| c.is_ascii_alphanumeric() || matches!(c, '.' | '~' | '-');
    for token in text.split(|c: char| !is_tok(c)).filter(|t| !t.is_empty()) {
        let token = token.trim_matches('.');
        if let Ok(id) = classify(token) {
            // bare 14-character words and numbers are too common in free text
            let mixed = token.bytes().any(|c| c.is_ascii_digit())
                && token.bytes().any(|c| c.is_ascii_uppercase());
            if id.kind() != UserIdKind::CustomerId || mixed {
                push(id);
            }
            continue;
        }
        for start in token.match_indices("amzn1.").map(|(i, _)| i) {
            // skip the inner amzn1. of a commsId; the outer match covers it
            if token[..start].ends_with("amzn1~") {
                continue;
            }
            let tail = &token[start..];
            for g in GRAMMARS.iter().filter(|g| !g.prefix.is_empty()) {
                if !tail.starts_with(g.prefix) {
                    continue;
                }
                for len in g.lengths().into_iter().rev() {
                    if tail.len() >= len && tail.is_char_boundary(len) {
                        let cand = &tail[..len];
                        let boundary_ok = tail[len..]
                            .bytes()
                            .next()
                            .map_or(true, |c| !is_id_char(c));
                        if boundary_ok && g.matches(cand) {
                            push(UserId {
                                kind: g.kind,
                                text: cand.to_string(),
                            });
                            break;
                        }
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn directed(c: char) -> String {
        format!("amzn1.account.{}", c.to_string().repeat(28))
    }

    #[test]
    fn classifies_directed_id() {
        let id = classify(&directed('A')).unwrap();
        assert_eq!(id.kind(), UserIdKind::DirectedId);
    }

    #[test]
    fn empty_string_has_no_match() {
        assert!(matches!(classify(""), Err(IdError::NoMatch { hint: None, .. })));
    }

    #[test]
    fn comms_id_embeds_directed_id() {
        let text = format!("amzn1.comms.id.person.amzn1~{}", directed('B'));
        let id = classify(&text).unwrap();
        assert_eq!(id.kind(), UserIdKind::CommsId);
        assert_eq!(id.embedded_directed_id().unwrap().as_str(), directed('B'));
    }

    #[test]
    fn derive_comms_id_rejects_other_kinds() {
        let person = UserId::new(
            UserIdKind::PersonId,
            format!("amzn1.actor.person.did.{}", "Z".repeat(72)),
        )
        .unwrap();
        assert!(matches!(
            derive_comms_id(&person),
            Err(IdError::WrongKind { .. })
        ));
        let d = classify(&directed('Q')).unwrap();
        let c = derive_comms_id(&d).unwrap();
        assert!(c.as_str().contains("amzn1~amzn1.account."));
        assert_eq!(c.embedded_directed_id().unwrap(), d);
    }

    #[test]
    fn person_id_v2_accepts_13_and_14() {
        for n in [13, 14] {
            let t = format!("amzn1.actor.person.oid.{}", "7".repeat(n));
            assert_eq!(classify(&t).unwrap().kind(), UserIdKind::PersonIdV2);
        }
        for n in [12, 15] {
            let t = format!("amzn1.actor.person.oid.{}", "7".repeat(n));
            assert!(classify(&t).is_err());
        }
    }

    #[test]
    fn contact_id_is_case_insensitive_uuid4() {
        assert_eq!(
            classify("3f2b8c1e-9d4a-4b7e-a1c2-0d9e8f7a6b5c").unwrap().kind(),
            UserIdKind::ContactId
        );
        assert!(classify("3F2B8C1E-9D4A-4B7E-A1C2-0D9E8F7A6B5C").is_ok());
        // version nibble must be 4
        assert!(classify("3f2b8c1e-9d4a-1b7e-a1c2-0d9e8f7a6b5c").is_err());
    }

    #[test]
    fn lowercase_body_is_rejected() {
        let t = format!("amzn1.account.{}", "a".repeat(28));
        let err = classify(&t).unwrap_err();
        match err {
            IdError::NoMatch { hint: Some(h), .. } => assert!(h.contains("directedId")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn find_ids_in_preference_key() {
        let pid = format!("amzn1.actor.person.did.{}", "P".repeat(72));
        let key = format!("com.amazon.alexa.identity.profile.{pid}.enrolled");
        let found = find_ids(&key);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].as_str(), pid);
    }

    #[test]
    fn find_ids_comms_not_split() {
        let text = format!("user amzn1.comms.id.person.amzn1~{} said", directed('C'));
        let found = find_ids(&text);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].kind(), UserIdKind::CommsId);
    }

    #[test]
    fn serde_rejects_invalid() {
        let bad = r#"{"kind":"directedId","text":"amzn1.account.short"}"#;
        assert!(serde_json::from_str::<UserId>(bad).is_err());
    }
}
