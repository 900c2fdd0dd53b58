mod support;

use proptest::prelude::*;
use rand::SeedableRng;
use regex::Regex;

use echoshow::ids::{classify, derive_comms_id, find_ids, UserId, UserIdKind, GRAMMARS};
use echoshow::synth::gen_id;
use support::id_oracle;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn generated_ids_are_accepted((kind, text) in support::any_user_id()) {
        prop_assert_eq!(id_oracle::kinds(&text), vec![kind]);
        let id = classify(&text).unwrap();
        prop_assert_eq!(id.kind(), kind);
        prop_assert_eq!(UserId::new(kind, text.clone()).unwrap().to_string(), text.clone());
        for other in UserIdKind::ALL.into_iter().filter(|k| *k != kind) {
            prop_assert!(UserId::new(other, text.clone()).is_err());
        }
    }

    #[test]
    fn length_mutations_are_rejected((kind, text) in support::any_user_id(), grow in any::<bool>(), n in 1usize..20) {
        let at = id_oracle::body_start(kind);
        let mut s = text.clone();
        if grow {
            let filler = if kind == UserIdKind::ContactId { "a" } else { "Q" };
            s.push_str(&filler.repeat(n));
        } else {
            s.truncate(text.len().saturating_sub(n).max(at));
        }
        prop_assume!(s != text);
        let grammar = kind.grammar();
        prop_assume!(!grammar.lengths().contains(&s.len()));
        prop_assert!(UserId::new(kind, s.clone()).is_err());
        prop_assert!(!id_oracle::kinds(&s).contains(&kind));
        prop_assert_eq!(classify(&s).ok().map(|i| i.kind()), id_oracle::kinds(&s).first().copied());
    }

    #[test]
    fn alphabet_mutations_are_rejected((kind, text) in support::any_user_id(), pos in any::<prop::sample::Index>(),
                                       bad in prop::sample::select(vec!['a', 'z', 'g', '_', '.', ' ', '~', '-', 'é'])) {
        let at = id_oracle::body_start(kind);
        let mut chars: Vec<char> = text.chars().collect();
        let i = at + pos.index(chars.len() - at);
        let original = chars[i];
        // lowercase hex and hyphens are part of the UUID alphabet
        prop_assume!(!(kind == UserIdKind::ContactId && (bad.is_ascii_hexdigit() || bad == '-')));
        prop_assume!(original != bad);
        chars[i] = bad;
        let s: String = chars.into_iter().collect();
        prop_assert!(UserId::new(kind, s.clone()).is_err(), "{} accepted", s);
        prop_assert!(id_oracle::kinds(&s).is_empty());
        prop_assert!(classify(&s).is_err());
    }
}

#[test]
fn library_generator_output_is_grammar_valid() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        for kind in UserIdKind::ALL {
            let id = gen_id(kind, &mut rng);
            assert_eq!(id_oracle::kinds(id.as_str()), vec![kind], "{id}");
        }
    }
}

/// The grammars are told apart by their literal prefixes: no prefix extends
/// another, and the prefix-free formats cannot contain the `.` every
/// prefixed format starts with.
#[test]
fn classification_is_disjoint_over_every_prefix() {
    let prefixed: Vec<_> = GRAMMARS.iter().filter(|g| !g.prefix.is_empty()).collect();
    for a in &prefixed {
        for b in &prefixed {
            if a.kind != b.kind {
                assert!(!b.prefix.starts_with(a.prefix), "{} prefix extends {}", b.kind, a.kind);
            }
        }
        assert!(a.prefix.contains('.'));
    }

    let samples: Vec<(UserIdKind, String)> = {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        UserIdKind::ALL.into_iter().flat_map(|k| (0..16).map(move |_| k)).map(|k| (k, gen_id(k, &mut rng).to_string())).collect()
    };
    for (kind, text) in &samples {
        // every split point between prefix and body, on every grammar
        for g in GRAMMARS.iter() {
            assert_eq!(g.matches(text), g.kind == *kind, "{} vs {text}", g.kind);
            for cut in 0..g.prefix.len() {
                let spliced = format!("{}{}", &g.prefix[..cut], &text[id_oracle::body_start(*kind).min(text.len())..]);
                let lib = classify(&spliced).ok().map(|i| i.kind());
                let oracle = id_oracle::kinds(&spliced);
                assert!(oracle.len() <= 1, "oracle overlap on {spliced}");
                assert_eq!(lib, oracle.first().copied(), "{spliced}");
            }
        }
    }
}

#[test]
fn comms_derivation_round_trips() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(100);
    let comms_re = Regex::new(id_oracle::PATTERNS[2].1).unwrap();
    for _ in 0..100 {
        let directed = gen_id(UserIdKind::DirectedId, &mut rng);
        let comms = derive_comms_id(&directed).unwrap();
        assert_eq!(comms.as_str(), format!("amzn1.comms.id.person.amzn1~{directed}"));
        assert!(comms_re.is_match(comms.as_str()));
        assert_eq!(comms.embedded_directed_id().as_ref(), Some(&directed));
        assert_eq!(classify(comms.as_str()).unwrap(), comms);
    }
    let customer = gen_id(UserIdKind::CustomerId, &mut rng);
    assert!(derive_comms_id(&customer).is_err());
}

#[test]
fn ids_are_found_in_free_text() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let person = gen_id(UserIdKind::PersonId, &mut rng);
    let directed = gen_id(UserIdKind::DirectedId, &mut rng);
    let text = format!(r#"{{"key":"profile.{person}.enrolled","owner":"{directed}","n":"12345678901234"}}"#);
    let found = find_ids(&text);
    assert_eq!(found, vec![person, directed]);
}
