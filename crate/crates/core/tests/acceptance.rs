//! The acceptance suite: every criterion runs, in order, and reports one
//! line. The test fails if any criterion does.

mod support;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};

use echoshow::artifacts::{lex_line, EventSource, LogCategory};
use echoshow::clock::HOUR_MS;
use echoshow::cloud::{
    sweep, AcquireOptions, AcquisitionLog, EndpointConfig, HttpTransport, Outcome, Session, TOKEN_EXCHANGE_ID,
};
use echoshow::ids::{classify, derive_comms_id, UserId, UserIdKind, GRAMMARS};
use echoshow::image::{carve_ext4, CarveOptions, EmmcImage};
use echoshow::mock::{MockCloud, MockOptions, MockServer};
use echoshow::report::{cmd_acquire, cmd_carve, AcquireArgs, CarveArgs, CredentialSource, ExitClass};
use echoshow::synth::{cloud_fixtures, gen_id, small_ext4_fixture, write_image, Household};
use echoshow::vault::{decrypt_value, EncryptionSecret, VaultError};
use support::aes_oracle::cbc_encrypt;
use support::{brute_force_ext4, coverage, id_oracle, run_pipeline, timed};

/// Hand transcription of the device layout: name, offset, size.
const LAYOUT: [(&str, u64, u64); 15] = [
    ("bootloader", 0x0, 0x400000),
    ("reserved", 0x2400000, 0x800000),
    ("nvcfg", 0x2d00000, 0x400000),
    ("tee", 0x3200000, 0x800000),
    ("boot", 0x3b00000, 0x1800000),
    ("recovery", 0x5400000, 0x1800000),
    ("logo", 0x6d00000, 0x400000),
    ("misc", 0x7200000, 0x100000),
    ("cri_data", 0x7400000, 0x200000),
    ("vendor", 0x7700000, 0x12c00000),
    ("odm", 0x1a400000, 0x800000),
    ("system", 0x1ad00000, 0xc2000000),
    ("product", 0xdce00000, 0xc00000),
    ("cache", 0xddb00000, 0x20000000),
    ("data", 0xfdc00000, 0x2ad800000),
];

type Verdict = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn manifest_entries() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fx = write_image(&dir.path().join("emmc.bin"), 1).map_err(|e| e.to_string())?;
    let out = dir.path().join("carve");
    let (result, secs) = timed(|| {
        cmd_carve(&CarveArgs {
            image: fx.path.clone(),
            out: out.clone(),
            table: None,
            extract: true,
            alignment: 512,
        })
    });
    let manifest = result.map_err(|e| e.to_string())?;
    let text = std::fs::read_to_string(out.join("manifest.json")).map_err(|e| e.to_string())?;
    let written: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let rows: Vec<(String, u64, u64)> = written["partitions"]
        .as_array()
        .ok_or("manifest has no partitions")?
        .iter()
        .map(|p| {
            (
                p["name"].as_str().unwrap_or("").to_string(),
                p["offset"].as_u64().unwrap_or(u64::MAX),
                p["size"].as_u64().unwrap_or(u64::MAX),
            )
        })
        .collect();
    let want: Vec<(String, u64, u64)> = LAYOUT.iter().map(|&(n, o, s)| (n.to_string(), o, s)).collect();
    ensure(rows == want, || format!("manifest rows differ: {rows:?}"))?;
    for p in &manifest.partitions {
        let r = p.receipt.as_ref().ok_or_else(|| format!("{} not extracted", p.entry.name))?;
        ensure(r.bytes_written == p.entry.size, || format!("{} short", p.entry.name))?;
    }
    ensure(secs < 10.0, || format!("15 entries exact, but extraction took {secs:.2} s (limit 10 s)"))?;
    Ok(format!("15/15 entries exact in {secs:.2} s"))
}

fn carve_equals_brute_force() -> Verdict {
    let mut total = 0;
    for (seed, mib) in [(11u64, 1usize), (12, 7), (13, 16), (14, 40), (15, 64)] {
        let fx = small_ext4_fixture(seed, mib << 20);
        let brute = brute_force_ext4(&fx.bytes);
        let image = EmmcImage::from_bytes(fx.bytes).map_err(|e| e.to_string())?;
        let found: Vec<u64> = carve_ext4(&image, (0, image.total_size()), CarveOptions::default())
            .map_err(|e| e.to_string())?
            .iter()
            .map(|r| r.start)
            .collect();
        ensure(found == brute, || format!("seed {seed}: carve {found:?} vs scan {brute:?}"))?;
        total += found.len();
    }
    Ok(format!("5 fixtures up to 64 MiB, {total} filesystems, identical offsets"))
}

fn vault_round_trip() -> Verdict {
    let strategy = (
        prop_oneof![Just(16usize), Just(24), Just(32)].prop_flat_map(|n| prop::collection::vec(any::<u8>(), n)),
        any::<[u8; 16]>(),
        prop::collection::vec(any::<u8>(), 0..=4096),
    );
    let mut runner = TestRunner::new(Config { cases: 200, ..Config::default() });
    runner
        .run(&strategy, |(key, iv, pt)| {
            let blob = cbc_encrypt(&key, iv, &pt);
            let secret = EncryptionSecret::from_bytes(key).unwrap();
            prop_assert_eq!(decrypt_value(&blob, &secret).ok(), Some(pt));
            Ok(())
        })
        .map_err(|e| e.to_string())?;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1000);
    let mut rejected = 0;
    for i in 0..1000 {
        let key: Vec<u8> = (0..[16, 24, 32][i % 3]).map(|_| rng.gen()).collect();
        let pt: Vec<u8> = (0..rng.gen_range(0..=4096)).map(|_| rng.gen()).collect();
        let mut blob = cbc_encrypt(&key, rng.gen(), &pt);
        let at = blob.len() - 1 - rng.gen_range(0..16);
        blob[at] ^= rng.gen_range(1..=255u8);
        let secret = EncryptionSecret::from_bytes(key).unwrap();
        if matches!(decrypt_value(&blob, &secret), Err(VaultError::Padding)) {
            rejected += 1;
        }
    }
    ensure(rejected >= 990, || format!("only {rejected}/1000 corrupted blobs rejected"))?;
    Ok(format!("200/200 oracle ciphertexts decrypted, {rejected}/1000 corruptions rejected"))
}

fn events_and_motion() -> Verdict {
    let counts = support::golden::check();
    let mut runner = TestRunner::new(Config { cases: 256, ..Config::default() });
    runner
        .run(&(0.0f64..=1.0, "[A-Z0-9]{72}"), |(q, body)| {
            let pid = format!("amzn1.actor.person.did.{body}");
            let line = format!("MOTION person=true quality={q} personId={pid}");
            let e = lex_line(&line, LogCategory::Main, 0, EventSource { file: "f".into(), line: 1 }).unwrap();
            let m = e.motion.unwrap();
            prop_assert_eq!(m.face_quality.map(f64::to_bits), Some(q.to_bits()));
            prop_assert_eq!(m.person_id.map(|p| p.to_string()), Some(pid));
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("golden counts {counts:?}; 256 MOTION lines lossless"))
}

fn id_grammar() -> Verdict {
    let mut runner = TestRunner::new(Config { cases: 512, ..Config::default() });
    runner
        .run(&support::any_user_id(), |(kind, text)| {
            prop_assert_eq!(classify(&text).map(|i| i.kind()).ok(), Some(kind));
            Ok(())
        })
        .map_err(|e| format!("generated id rejected: {e}"))?;

    let bad_chars = ['a', 'g', '_', '.', ' ', '~', '!'];
    runner
        .run(&(support::any_user_id(), any::<prop::sample::Index>(), 0..bad_chars.len(), any::<bool>(), 1usize..9), |((kind, text), pos, c, grow, n)| {
            let start = id_oracle::body_start(kind);
            let mut length_mut = text.clone();
            if grow {
                length_mut.push_str(&"7".repeat(n));
            } else {
                length_mut.truncate((text.len() - n.min(text.len() - start)).max(start));
            }
            if !kind.grammar().lengths().contains(&length_mut.len()) {
                prop_assert!(UserId::new(kind, length_mut).is_err());
            }
            let mut chars: Vec<char> = text.chars().collect();
            let i = start + pos.index(chars.len() - start);
            let uuid_char = kind == UserIdKind::ContactId && (bad_chars[c].is_ascii_hexdigit());
            if !uuid_char && chars[i] != bad_chars[c] {
                chars[i] = bad_chars[c];
                let s: String = chars.into_iter().collect();
                prop_assert!(UserId::new(kind, s.clone()).is_err() && classify(&s).is_err());
            }
            Ok(())
        })
        .map_err(|e| format!("mutation accepted: {e}"))?;

    // disjointness over every prefix cut of every grammar
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(55);
    let mut checked = 0;
    for kind in UserIdKind::ALL {
        for _ in 0..8 {
            let text = gen_id(kind, &mut rng).to_string();
            for g in GRAMMARS.iter() {
                for cut in 0..=g.prefix.len() {
                    let spliced = format!("{}{}", &g.prefix[..cut], &text[id_oracle::body_start(kind)..]);
                    let oracle = id_oracle::kinds(&spliced);
                    ensure(oracle.len() <= 1, || format!("oracle overlap on {spliced}"))?;
                    let lib = classify(&spliced).ok().map(|i| i.kind());
                    ensure(lib == oracle.first().copied(), || format!("{spliced}: {lib:?} vs {oracle:?}"))?;
                    checked += 1;
                }
            }
        }
    }

    for _ in 0..100 {
        let directed = gen_id(UserIdKind::DirectedId, &mut rng);
        let comms = derive_comms_id(&directed).map_err(|e| e.to_string())?;
        ensure(comms.embedded_directed_id().as_ref() == Some(&directed), || format!("{comms} lost {directed}"))?;
        ensure(comms.as_str() == format!("amzn1.comms.id.person.amzn1~{directed}"), || comms.to_string())?;
    }
    Ok(format!("512 generated, 512 mutated, {checked} prefix splices disjoint, 100 comms round trips"))
}

fn mock_lifecycle() -> Verdict {
    const SEED: u64 = 31;
    let (fixtures, expect) = cloud_fixtures(SEED);
    let options = MockOptions { refresh_tokens: vec![expect.refresh_token.clone()], ..MockOptions::default() };
    let mock = Arc::new(
        MockCloud::new(EndpointConfig::builtin().clone(), fixtures, expect.start_ms, options).map_err(|e| e.to_string())?,
    );
    let server = MockServer::start(mock.clone(), "127.0.0.1:0").map_err(|e| e.to_string())?;
    let transport = HttpTransport::new(Some(&server.url()), false).map_err(|e| e.to_string())?;
    let clock = mock.clock();
    let session = Session::new(
        EndpointConfig::builtin().clone(),
        Arc::new(transport),
        clock.clone(),
        &expect.refresh_token,
        AcquisitionLog::in_memory(),
    );
    let opts = AcquireOptions {
        only: None,
        start_ms: 0,
        end_ms: expect.start_ms,
        seeds: BTreeMap::from([(
            "directedId".to_string(),
            vec![Household::generate(SEED).owner.directed_id.to_string()],
        )]),
    };
    let server_counts = || {
        let c = mock.exchange_counts();
        (c.get("access_token").copied().unwrap_or(0), c.get("auth_cookies").copied().unwrap_or(0))
    };

    let (report, secs) = timed(|| sweep(&session, &opts));
    ensure(report.fatal.is_none(), || format!("sweep aborted: {:?}", report.fatal))?;
    for ep in &EndpointConfig::builtin().endpoints {
        let ok = report.statuses.iter().any(|s| s.endpoint_id == ep.id && matches!(s.outcome, Outcome::Ok { .. }));
        ensure(ok, || format!("{} never answered", ep.id))?;
    }
    ensure(secs < 30.0, || format!("full sweep took {secs:.1} s"))?;
    let base = server_counts();
    ensure(base == (1, 1), || format!("initial exchanges {base:?}"))?;

    clock.advance(HOUR_MS);
    sweep(&session, &opts);
    let after_hour = server_counts();
    let client = session.exchange_counts();
    ensure(after_hour == (2, 1), || format!("+1 h exchanges {after_hour:?}"))?;
    ensure((client.access_token, client.cookies) == (2, 1), || format!("client counted {client:?}"))?;

    clock.advance(23 * HOUR_MS);
    sweep(&session, &opts);
    let after_day = server_counts();
    ensure(after_day.1 == 2, || format!("+24 h cookie exchanges {}", after_day.1))?;

    let cross = mock.cross_form_count();
    let multi = mock
        .journal()
        .iter()
        .filter(|j| j.endpoint_id.as_deref().is_some_and(|id| id != TOKEN_EXCHANGE_ID))
        .filter(|j| j.forms.len() != 1)
        .count();
    ensure(cross == 0 && multi == 0, || format!("{cross} cross-form, {multi} not single-form requests"))?;

    mock.revoke(&expect.refresh_token);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let err = cmd_acquire(&AcquireArgs {
        credentials: CredentialSource::RefreshToken(expect.refresh_token.clone()),
        base_url: Some(server.url()),
        live: false,
        only: Vec::new(),
        from_ms: Some(0),
        to_ms: Some(expect.start_ms),
        out: dir.path().join("acq"),
        marketplace: None,
        config: None,
    })
    .err()
    .ok_or("acquisition with a revoked token succeeded")?;
    ensure(err.class == ExitClass::Auth, || format!("revoked token gave {:?}", err.class))?;

    Ok(format!(
        "0 cross-form; +1 h {base:?}->{after_hour:?}; +24 h cookies {}->{}; revoked -> exit {}; sweep {secs:.2} s",
        base.1,
        after_day.1,
        err.class.code()
    ))
}

fn deterministic_timeline() -> Verdict {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = run_pipeline(a.path(), 7);
    let second = run_pipeline(b.path(), 7);
    ensure(!first.is_empty(), || "empty timeline".into())?;
    ensure(first == second, || "timelines differ".into())?;
    let n = first.iter().filter(|&&c| c == b'\n').count();
    Ok(format!("{n} events, {} bytes, byte-identical", first.len()))
}

fn catalog_coverage() -> Verdict {
    let cov = coverage::check();
    ensure(cov.problems.is_empty(), || cov.problems.join("; "))?;
    ensure(cov.local_matched.len() >= 30, || format!("{} local descriptors", cov.local_matched.len()))?;
    ensure(cov.remote_matched.len() >= 25, || format!("{} endpoint descriptors", cov.remote_matched.len()))?;
    ensure(cov.deprecated_rows.len() == 3, || format!("deprecated rows {:?}", cov.deprecated_rows))?;
    Ok(format!(
        "{} local, {} endpoint descriptors match; deprecated rows {:?} absent",
        cov.local_matched.len(),
        cov.remote_matched.len(),
        cov.deprecated_rows
    ))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("partition manifest", manifest_entries),
        ("ext4 carving", carve_equals_brute_force),
        ("credential decryption", vault_round_trip),
        ("device events", events_and_motion),
        ("identifier grammar", id_grammar),
        ("mock cloud lifecycle", mock_lifecycle),
        ("timeline determinism", deterministic_timeline),
        ("catalog coverage", catalog_coverage),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.into_iter().enumerate() {
        let verdict = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match verdict {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(why) => {
                println!("criterion {} {name}: FAIL ({why})", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
