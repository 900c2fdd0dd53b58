//! Oracles and harness shared by the integration tests. The oracles here do
//! not call into the library's implementations.

#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use echoshow::mock::{MockCloud, MockOptions, MockServer};
use echoshow::cloud::EndpointConfig;
use echoshow::report::{
    cmd_acquire, cmd_extract, cmd_timeline, AcquireArgs, CredentialSource, ExtractArgs, TimelineArgs,
};
use echoshow::synth::{cloud_fixtures, write_device_tree};

/// FIPS-197 AES, written from the standard: S-box from the GF(2^8) inverse
/// and the affine map, no lookup tables copied in.
pub mod aes_oracle {
    fn xtime(b: u8) -> u8 {
        (b << 1) ^ if b & 0x80 != 0 { 0x1b } else { 0 }
    }

    fn gmul(mut a: u8, mut b: u8) -> u8 {
        let mut p = 0;
        while b != 0 {
            if b & 1 != 0 {
                p ^= a;
            }
            a = xtime(a);
            b >>= 1;
        }
        p
    }

    fn inverse(a: u8) -> u8 {
        // a^254 = a^-1 in GF(2^8); maps 0 to 0
        let mut r = 1u8;
        for _ in 0..254 {
            r = gmul(r, a);
        }
        if a == 0 {
            0
        } else {
            r
        }
    }

    fn sbox(a: u8) -> u8 {
        let b = inverse(a);
        b ^ b.rotate_left(1) ^ b.rotate_left(2) ^ b.rotate_left(3) ^ b.rotate_left(4) ^ 0x63
    }

    pub struct Aes {
        round_keys: Vec<[u8; 16]>,
        sbox: [u8; 256],
        inv_sbox: [u8; 256],
    }

    impl Aes {
        pub fn new(key: &[u8]) -> Aes {
            assert!(matches!(key.len(), 16 | 24 | 32));
            let mut s = [0u8; 256];
            let mut inv = [0u8; 256];
            for i in 0..256 {
                s[i] = sbox(i as u8);
                inv[s[i] as usize] = i as u8;
            }
            let nk = key.len() / 4;
            let nr = nk + 6;
            let mut w: Vec<[u8; 4]> = key.chunks(4).map(|c| [c[0], c[1], c[2], c[3]]).collect();
            let mut rcon = 1u8;
            for i in nk..4 * (nr + 1) {
                let mut t = w[i - 1];
                if i % nk == 0 {
                    t = [s[t[1] as usize] ^ rcon, s[t[2] as usize], s[t[3] as usize], s[t[0] as usize]];
                    rcon = xtime(rcon);
                } else if nk > 6 && i % nk == 4 {
                    t = t.map(|b| s[b as usize]);
                }
                let prev = w[i - nk];
                w.push([prev[0] ^ t[0], prev[1] ^ t[1], prev[2] ^ t[2], prev[3] ^ t[3]]);
            }
            let round_keys = w
                .chunks(4)
                .map(|c| {
                    let mut k = [0u8; 16];
                    for (j, word) in c.iter().enumerate() {
                        k[4 * j..4 * j + 4].copy_from_slice(word);
                    }
                    k
                })
                .collect();
            Aes { round_keys, sbox: s, inv_sbox: inv }
        }

        fn add(state: &mut [u8; 16], k: &[u8; 16]) {
            state.iter_mut().zip(k).for_each(|(a, b)| *a ^= b);
        }

        fn shift_rows(st: &mut [u8; 16], inverse: bool) {
            let old = *st;
            for c in 0..4 {
                for r in 0..4 {
                    let src = if inverse { (c + 4 - r) % 4 } else { (c + r) % 4 };
                    st[4 * c + r] = old[4 * src + r];
                }
            }
        }

        fn mix_columns(st: &mut [u8; 16], m: [u8; 4]) {
            for c in 0..4 {
                let col = [st[4 * c], st[4 * c + 1], st[4 * c + 2], st[4 * c + 3]];
                for r in 0..4 {
                    st[4 * c + r] = gmul(col[0], m[(4 - r) % 4])
                        ^ gmul(col[1], m[(5 - r) % 4])
                        ^ gmul(col[2], m[(6 - r) % 4])
                        ^ gmul(col[3], m[(7 - r) % 4]);
                }
            }
        }

        pub fn encrypt_block(&self, block: &[u8; 16]) -> [u8; 16] {
            let nr = self.round_keys.len() - 1;
            let mut st = *block;
            Self::add(&mut st, &self.round_keys[0]);
            for round in 1..=nr {
                st = st.map(|b| self.sbox[b as usize]);
                Self::shift_rows(&mut st, false);
                if round != nr {
                    Self::mix_columns(&mut st, [2, 3, 1, 1]);
                }
                Self::add(&mut st, &self.round_keys[round]);
            }
            st
        }

        pub fn decrypt_block(&self, block: &[u8; 16]) -> [u8; 16] {
            let nr = self.round_keys.len() - 1;
            let mut st = *block;
            Self::add(&mut st, &self.round_keys[nr]);
            for round in (0..nr).rev() {
                Self::shift_rows(&mut st, true);
                st = st.map(|b| self.inv_sbox[b as usize]);
                Self::add(&mut st, &self.round_keys[round]);
                if round != 0 {
                    Self::mix_columns(&mut st, [14, 11, 13, 9]);
                }
            }
            st
        }
    }

    /// `iv || AES-CBC(pkcs7(plaintext))`.
    pub fn cbc_encrypt(key: &[u8], iv: [u8; 16], plaintext: &[u8]) -> Vec<u8> {
        let aes = Aes::new(key);
        let pad = 16 - plaintext.len() % 16;
        let mut data = plaintext.to_vec();
        data.extend(std::iter::repeat(pad as u8).take(pad));
        let mut out = iv.to_vec();
        let mut prev = iv;
        for chunk in data.chunks(16) {
            let mut b = [0u8; 16];
            for i in 0..16 {
                b[i] = chunk[i] ^ prev[i];
            }
            prev = aes.encrypt_block(&b);
            out.extend_from_slice(&prev);
        }
        out
    }

    /// Inverse of [`cbc_encrypt`]; `None` on bad length or padding.
    pub fn cbc_decrypt(key: &[u8], blob: &[u8]) -> Option<Vec<u8>> {
        if blob.len() < 32 || blob.len() % 16 != 0 {
            return None;
        }
        let aes = Aes::new(key);
        let mut prev: [u8; 16] = blob[..16].try_into().unwrap();
        let mut out = Vec::new();
        for chunk in blob[16..].chunks(16) {
            let c: [u8; 16] = chunk.try_into().unwrap();
            let p = aes.decrypt_block(&c);
            out.extend(p.iter().zip(prev).map(|(a, b)| a ^ b));
            prev = c;
        }
        let pad = *out.last()? as usize;
        if pad == 0 || pad > 16 || !out[out.len() - pad..].iter().all(|&b| b as usize == pad) {
            return None;
        }
        out.truncate(out.len() - pad);
        Some(out)
    }
}

/// Every 512-aligned offset whose superblock slot carries the ext4 magic
/// and block group 0, found by reading every candidate byte-wise.
pub fn brute_force_ext4(bytes: &[u8]) -> Vec<u64> {
    let mut out = Vec::new();
    let mut start = 0usize;
    while start + 2048 <= bytes.len() {
        let sb = start + 1024;
        let magic = bytes[sb + 0x38] as u16 | (bytes[sb + 0x39] as u16) << 8;
        let group = bytes[sb + 0x5a] as u16 | (bytes[sb + 0x5b] as u16) << 8;
        if magic == 0xEF53 && group == 0 {
            out.push(start as u64);
        }
        start += 512;
    }
    out
}

/// Runs synthetic extraction, acquisition against a loopback mock and
/// timeline merge under `dir`; returns the timeline bytes.
pub fn run_pipeline(dir: &Path, seed: u64) -> Vec<u8> {
    let tree = write_device_tree(&dir.join("tree"), seed).expect("device tree");
    let extract_out = dir.join("extract");
    cmd_extract(&ExtractArgs { root: tree.root.clone(), out: extract_out.clone(), reveal: false }).expect("extract");

    let (fixtures, expect) = cloud_fixtures(seed);
    let options = MockOptions { refresh_tokens: vec![expect.refresh_token.clone()], ..MockOptions::default() };
    let mock = MockCloud::new(EndpointConfig::builtin().clone(), fixtures, expect.start_ms, options).expect("mock");
    let server = MockServer::start(Arc::new(mock), "127.0.0.1:0").expect("server");
    let acq_out = dir.join("acquire");
    let acquired = cmd_acquire(&AcquireArgs {
        credentials: CredentialSource::TokenDb {
            path: tree.root.join("data/com.amazon.imp/databases/map_data_storage_v2.db"),
            v1: false,
        },
        base_url: Some(server.url()),
        live: false,
        only: Vec::new(),
        from_ms: Some(0),
        to_ms: Some(expect.start_ms),
        out: acq_out.clone(),
        marketplace: None,
        config: None,
    });
    drop(server);
    acquired.expect("acquire");

    let out = dir.join("timeline.jsonl");
    cmd_timeline(&TimelineArgs {
        inputs: vec![
            extract_out.join("records.jsonl"),
            extract_out.join("events.jsonl"),
            acq_out.join("records.jsonl"),
        ],
        out: out.clone(),
        csv: None,
        tz: None,
    })
    .expect("timeline");
    std::fs::read(out).expect("timeline bytes")
}

/// Wall-clock seconds of `f`.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = std::time::Instant::now();
    let v = f();
    (v, t.elapsed().as_secs_f64())
}

/// Row-by-row comparison of the bundled catalogs against
/// `tests/data/coverage_manifest.json`.
pub mod coverage {
    use std::collections::BTreeSet;

    use echoshow::artifacts::{catalog, Source};
    use echoshow::cloud::{EndpointConfig, ParamLocation};
    use serde_json::Value;

    pub const MANIFEST: &str = include_str!("../data/coverage_manifest.json");

    #[derive(Debug, Default)]
    pub struct Coverage {
        pub local_matched: Vec<String>,
        pub remote_matched: Vec<String>,
        pub deprecated_rows: Vec<u64>,
        pub problems: Vec<String>,
    }

    fn expand(text: &str, abbreviations: &serde_json::Map<String, Value>) -> String {
        abbreviations
            .iter()
            .fold(text.to_string(), |t, (k, v)| t.replace(k.as_str(), v.as_str().unwrap_or_default()))
    }

    /// Manifest path → catalog glob: relative, directories recurse, an
    /// identifier placeholder matches one path component.
    fn local_glob(path: &str) -> String {
        let mut g = path.trim_start_matches('/').replace("{directedId}", "*");
        if g.ends_with('/') {
            g.push_str("**");
        }
        g
    }

    /// Placeholder names are not compared, only their positions.
    fn shape(path: &str) -> String {
        let mut out = String::new();
        let mut depth = 0;
        for c in path.chars() {
            match c {
                '{' => {
                    depth += 1;
                    out.push_str("{}");
                }
                '}' => depth -= 1,
                _ if depth > 0 => {}
                _ => out.push(c),
            }
        }
        out
    }

    fn source_of(label: &str) -> Option<Source> {
        match label {
            "Echo" => Some(Source::Echo),
            "Alexa app" => Some(Source::AlexaApp),
            "Photos app" => Some(Source::PhotosApp),
            _ => None,
        }
    }

    pub fn check() -> Coverage {
        let m: Value = serde_json::from_str(MANIFEST).expect("manifest parses");
        let abbr = m["abbreviations"].as_object().expect("abbreviations");
        let mut cov = Coverage::default();
        let cat = catalog();

        let mut seen_local = BTreeSet::new();
        for row in m["local"].as_array().expect("local rows") {
            let n = row["row"].as_u64().unwrap_or(0);
            let Some(id) = row["id"].as_str() else {
                if cat.iter().any(|d| d.path_glob == local_glob(&expand(row["path"].as_str().unwrap_or(""), abbr))) {
                    cov.problems.push(format!("row {n}: not-found artifact has a descriptor"));
                }
                continue;
            };
            let Some(d) = cat.iter().find(|d| d.id == id) else {
                cov.problems.push(format!("row {n}: no descriptor {id}"));
                continue;
            };
            let want = local_glob(&expand(row["path"].as_str().unwrap_or(""), abbr));
            if d.path_glob != want {
                cov.problems.push(format!("row {n}: {id} glob {:?} != {want:?}", d.path_glob));
                continue;
            }
            if Some(d.source) != source_of(row["source"].as_str().unwrap_or("")) {
                cov.problems.push(format!("row {n}: {id} source {:?}", d.source));
                continue;
            }
            seen_local.insert(id);
            cov.local_matched.push(id.to_string());
        }
        for d in cat.iter().filter(|d| !seen_local.contains(d.id)) {
            cov.problems.push(format!("descriptor {} has no manifest row", d.id));
        }

        let cfg = EndpointConfig::builtin();
        let mut seen_remote = BTreeSet::new();
        for row in m["remote"].as_array().expect("remote rows") {
            let n = row["row"].as_u64().unwrap_or(0);
            let location = expand(row["location"].as_str().unwrap_or(""), abbr);
            let (host, rest) = location.split_once('/').map(|(h, r)| (h, format!("/{r}"))).unwrap_or((&location, "/".into()));
            let (path, query) = rest.split_once('?').map(|(p, q)| (p.to_string(), q.to_string())).unwrap_or((rest.clone(), String::new()));
            // "/(...)" marks an optional trailing segment
            let path = match path.find("/(") {
                Some(i) => path[..i].to_string(),
                None => path,
            };
            if row["status"] == "deprecated" {
                cov.deprecated_rows.push(n);
                if cfg.endpoints.iter().any(|e| e.host == host && e.path == path) {
                    cov.problems.push(format!("row {n}: deprecated route {host}{path} still in catalog"));
                }
                if !cfg.deprecated.iter().any(|d| d.host == host && d.path == path) {
                    cov.problems.push(format!("row {n}: {host}{path} not recorded as retired"));
                }
                continue;
            }
            let Some(id) = row["id"].as_str() else {
                cov.problems.push(format!("row {n}: no id"));
                continue;
            };
            let Some(e) = cfg.endpoint(id) else {
                cov.problems.push(format!("row {n}: no endpoint {id}"));
                continue;
            };
            if e.host != host || shape(&e.path) != shape(&path) {
                cov.problems.push(format!("row {n}: {id} is {}{} not {host}{path}", e.host, e.path));
                continue;
            }
            let mut ok = true;
            for (k, v) in url::form_urlencoded::parse(query.as_bytes()) {
                let declared = e.params.iter().any(|p| p.name == k && p.location == ParamLocation::Query);
                let fixed = e.fixed_query.get(k.as_ref());
                let placeholder = v.starts_with('{');
                if !(declared && placeholder) && fixed.map(String::as_str) != Some(v.as_ref()) {
                    cov.problems.push(format!("row {n}: {id} query {k}={v}"));
                    ok = false;
                }
            }
            if ok {
                seen_remote.insert(id);
                cov.remote_matched.push(id.to_string());
            }
        }
        for e in cfg.endpoints.iter().filter(|e| !seen_remote.contains(e.id.as_str())) {
            cov.problems.push(format!("endpoint {} has no manifest row", e.id));
        }
        cov
    }
}

/// Independent statement of each identifier format; never derived from the
/// library's grammar table.
pub mod id_oracle {
    use echoshow::ids::UserIdKind;
    use regex::Regex;

    pub const PATTERNS: [(UserIdKind, &str); 6] = [
        (UserIdKind::CustomerId, r"^[A-Z0-9]{14}$"),
        (UserIdKind::DirectedId, r"^amzn1\.account\.[A-Z0-9]{28}$"),
        (UserIdKind::CommsId, r"^amzn1\.comms\.id\.person\.amzn1~amzn1\.account\.[A-Z0-9]{28}$"),
        (
            UserIdKind::ContactId,
            r"^[0-9a-fA-F]{8}-[0-9a-fA-F]{4}-4[0-9a-fA-F]{3}-[89abAB][0-9a-fA-F]{3}-[0-9a-fA-F]{12}$",
        ),
        (UserIdKind::PersonId, r"^amzn1\.actor\.person\.did\.[A-Z0-9]{72}$"),
        (UserIdKind::PersonIdV2, r"^amzn1\.actor\.person\.oid\.[A-Z0-9]{13,14}$"),
    ];

    /// Generator regexes for proptest: the patterns without anchors.
    pub fn generator(kind: UserIdKind) -> String {
        let p = PATTERNS.iter().find(|(k, _)| *k == kind).unwrap().1;
        p.trim_start_matches('^').trim_end_matches('$').to_string()
    }

    pub fn kinds(text: &str) -> Vec<UserIdKind> {
        PATTERNS
            .iter()
            .filter(|(_, re)| Regex::new(re).unwrap().is_match(text))
            .map(|(k, _)| *k)
            .collect()
    }

    /// Offset of the variable body, past every literal prefix.
    pub fn body_start(kind: UserIdKind) -> usize {
        match kind {
            UserIdKind::CustomerId | UserIdKind::ContactId => 0,
            UserIdKind::DirectedId => "amzn1.account.".len(),
            UserIdKind::CommsId => "amzn1.comms.id.person.amzn1~amzn1.account.".len(),
            UserIdKind::PersonId => "amzn1.actor.person.did.".len(),
            UserIdKind::PersonIdV2 => "amzn1.actor.person.oid.".len(),
        }
    }
}

/// The hand-written DropBox corpus under `tests/data/golden_logs` and its
/// expectations in `tests/data/golden_events.json`.
pub mod golden {
    use std::collections::BTreeMap;
    use std::io::Write;
    use std::path::Path;

    use echoshow::artifacts::{archive_name, extract_events, read_dropbox_logs, EventKind, LogCategory};
    use serde_json::Value;

    const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data");

    fn zip_text(path: &Path, member: &str, text: &str) {
        let mut z = zip::ZipWriter::new(std::fs::File::create(path).unwrap());
        z.start_file(member, zip::write::SimpleFileOptions::default()).unwrap();
        z.write_all(text.as_bytes()).unwrap();
        z.finish().unwrap();
    }

    /// Lex the corpus and assert every expectation; returns the counts.
    pub fn check() -> BTreeMap<String, usize> {
        let golden: Value =
            serde_json::from_str(&std::fs::read_to_string(format!("{DATA}/golden_events.json")).unwrap()).unwrap();
        let archive_ms = golden["archive_ms"].as_i64().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let mut file_of = BTreeMap::new();
        for (cat, member) in [(LogCategory::System, "system.txt"), (LogCategory::Main, "main.txt")] {
            let name = archive_name(cat, archive_ms);
            let text = std::fs::read_to_string(format!("{DATA}/golden_logs/{member}")).unwrap();
            zip_text(&dir.path().join(&name), member, &text);
            file_of.insert(member, name);
        }
        // a non-trigger category holding trigger words must contribute nothing
        zip_text(
            &dir.path().join(archive_name(LogCategory::Kernel, archive_ms)),
            "k.txt",
            "WAKE_WORD MOTION BUTTON_EVENT\n",
        );

        let read = read_dropbox_logs(dir.path()).unwrap();
        assert!(read.errors.is_empty() && read.skipped.is_empty());
        let events = extract_events(&read.entries);

        let mut counts = BTreeMap::new();
        for e in &events {
            *counts.entry(e.kind.token().to_string()).or_insert(0usize) += 1;
        }
        let want_counts: BTreeMap<String, usize> = serde_json::from_value(golden["counts"].clone()).unwrap();
        assert_eq!(counts, want_counts);

        let mut got: Vec<(String, usize, String, i64)> = events
            .iter()
            .map(|e| {
                let member = file_of.iter().find(|(_, n)| e.source.file.ends_with(n.as_str())).unwrap().0;
                (member.to_string(), e.source.line, e.kind.token().to_string(), e.timestamp)
            })
            .collect();
        let mut want: Vec<(String, usize, String, i64)> = serde_json::from_value(golden["events"].clone()).unwrap();
        got.sort();
        want.sort();
        assert_eq!(got, want);

        for m in golden["motions"].as_array().unwrap() {
            let line = m["line"].as_u64().unwrap() as usize;
            let e = events.iter().find(|e| e.kind == EventKind::Motion && e.source.line == line).unwrap();
            let motion = e.motion.as_ref().unwrap();
            assert_eq!(motion.is_person, m["is_person"].as_bool());
            assert_eq!(motion.enrolled, m["enrolled"].as_bool().unwrap());
            match m["quality"].as_str() {
                Some(q) => {
                    assert_eq!(motion.face_quality, Some(q.parse::<f64>().unwrap()));
                    assert_eq!(e.fields["quality"], q);
                }
                None => assert_eq!(motion.face_quality, None),
            }
            assert_eq!(motion.person_id.as_ref().map(|p| p.as_str()), m["person_id"].as_str());
        }
        counts
    }
}

/// `(kind, text)` drawn from the oracle generators of every kind.
pub fn any_user_id() -> impl proptest::strategy::Strategy<Value = (echoshow::ids::UserIdKind, String)> {
    use proptest::prelude::*;
    prop::sample::select(echoshow::ids::UserIdKind::ALL.to_vec()).prop_flat_map(|k| {
        proptest::string::string_regex(&id_oracle::generator(k))
            .expect("oracle pattern is a valid generator")
            .prop_map(move |s| (k, s))
    })
}
