use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, UNIX_EPOCH};

use chrono::{TimeZone, Utc};
use rand::Rng;
use rusqlite::types::Value as Sql;
use rusqlite::Connection;

use super::{alnum, rng, Household, BASE_MS};
use crate::artifacts::{archive_name, EventKind, LogCategory};
use crate::ids::UserId;
use crate::vault::{decrypt_value, encrypt_value, EncryptionSecret};

#[derive(Debug, Clone, PartialEq)]
pub struct MotionSpec {
    pub timestamp: i64,
    pub is_person: bool,
    pub face_quality: Option<f64>,
    pub person_id: Option<UserId>,
}

/// Scripted DropBox archives with the event counts they must yield.
#[derive(Debug, Clone, PartialEq)]
pub struct EventScript {
    pub archives: Vec<(LogCategory, i64, Vec<String>)>,
    pub expected: BTreeMap<EventKind, usize>,
    /// MOTION events in timestamp order.
    pub motions: Vec<MotionSpec>,
}

fn stamp(ms: i64, style: usize) -> String {
    let t = Utc.timestamp_millis_opt(ms).single().expect("in range");
    match style % 3 {
        0 => t.format("%Y-%m-%d %H:%M:%S%.3f").to_string(),
        1 => t.format("%m-%d %H:%M:%S%.3f").to_string(),
        _ => ms.to_string(),
    }
}

const SYSTEM_NOISE: [&str; 5] = [
    "I ActivityManager: Start proc 2211:com.amazon.knight.calendar",
    "D AudioService: WAKE_WORD_ENGINE ready model=en-US",
    "I SensorService: MOTION sensor calibrated offset=3",
    "W PowerManager: screen timeout 30000",
    "I InputDispatcher: key BUTTON_EVENTS_DISABLED during setup",
];
const MAIN_NOISE: [&str; 3] = [
    "I VisualId: pipeline warm start",
    "D Launcher: BUTTON_EVENT received by overlay",
    "I Camera2: frame rate 15",
];

impl EventScript {
    pub fn generate(seed: u64, household: &Household) -> Self {
        let mut r = rng(seed ^ 0x5eed_e7e7);
        let mut expected = BTreeMap::new();
        let plan: Vec<(EventKind, usize)> = EventKind::ALL
            .into_iter()
            .map(|k| {
                let n = match k {
                    EventKind::Motion => r.gen_range(6..=9),
                    EventKind::PrivacyModeOn | EventKind::PrivacyModeOff => 2,
                    _ => r.gen_range(1..=8),
                };
                expected.insert(k, n);
                (k, n)
            })
            .collect();
        // interleave kinds over the day
        let mut items: Vec<EventKind> = plan.iter().flat_map(|&(k, n)| std::iter::repeat_n(k, n)).collect();
        for i in (1..items.len()).rev() {
            items.swap(i, r.gen_range(0..=i));
        }
        let mut t = BASE_MS - 6 * 3_600_000;
        let mut system: Vec<(i64, String)> = Vec::new();
        let mut main: Vec<(i64, String)> = Vec::new();
        let mut motions = Vec::new();
        let people = [&household.owner, &household.member];
        for (i, kind) in items.into_iter().enumerate() {
            t += r.gen_range(20_000..900_000);
            let ts = stamp(t, i);
            match kind {
                EventKind::Motion => {
                    let is_person = r.gen_bool(0.8);
                    let face_quality = is_person.then(|| r.gen_range(0..=100) as f64 / 100.0);
                    let person_id = (is_person && r.gen_bool(0.6)).then(|| people[r.gen_range(0..2)].person_id.clone());
                    let mut line = format!("{ts} I VisualId: MOTION person={is_person}");
                    if let Some(q) = face_quality {
                        line.push_str(&format!(" quality={q}"));
                    }
                    if let Some(p) = &person_id {
                        line.push_str(&format!(" personId={p}"));
                    }
                    motions.push(MotionSpec {
                        timestamp: t,
                        is_person,
                        face_quality,
                        person_id,
                    });
                    main.push((t, line));
                }
                k => {
                    let detail = match k {
                        EventKind::WakeWord => " engine=pryon confidence=0.91".to_string(),
                        EventKind::Button => format!(" button={}", ["volume_up", "volume_down", "mute"][r.gen_range(0..3)]),
                        EventKind::Touch => format!(" x={} y={}", r.gen_range(0..1920), r.gen_range(0..1080)),
                        _ => String::new(),
                    };
                    system.push((t, format!("{ts} I AlexaEvents: {}{detail}", k.token())));
                }
            }
            if r.gen_bool(0.3) {
                let noise = SYSTEM_NOISE[r.gen_range(0..SYSTEM_NOISE.len())];
                system.push((t + 1, format!("{} {noise}", stamp(t + 1, 0))));
            }
            if r.gen_bool(0.2) {
                let noise = MAIN_NOISE[r.gen_range(0..MAIN_NOISE.len())];
                main.push((t + 2, format!("{} {noise}", stamp(t + 2, 0))));
            }
        }
        let mut archives = Vec::new();
        for (cat, lines) in [(LogCategory::System, system), (LogCategory::Main, main)] {
            // split into three archives per category
            let per = lines.len().div_ceil(3).max(1);
            for chunk in lines.chunks(per) {
                let at = chunk.last().map(|l| l.0).unwrap_or(t) + 5_000;
                archives.push((cat, at, chunk.iter().map(|l| l.1.clone()).collect()));
            }
        }
        // categories that never yield events, one of them mentioning tokens
        archives.push((
            LogCategory::Crash,
            t + 60_000,
            vec![format!("{} E AndroidRuntime: FATAL in MOTION handler, WAKE_WORD pending", stamp(t, 0))],
        ));
        archives.push((
            LogCategory::Events,
            t + 61_000,
            vec![format!("{} am_proc_start TOUCH_EVENT", stamp(t, 0))],
        ));
        EventScript {
            archives,
            expected,
            motions,
        }
    }
}

/// What [`write_device_tree`] wrote and what extraction must find.
#[derive(Debug, Clone)]
pub struct TreeManifest {
    pub root: PathBuf,
    /// Records expected per artifact id.
    pub expected_records: BTreeMap<String, usize>,
    /// Matched files expected per artifact id.
    pub expected_files: BTreeMap<String, usize>,
    pub unclaimed: Vec<String>,
    pub events: EventScript,
    pub wifi: Vec<(String, String)>,
    /// Plaintext values in the Echo v2 store, by token name.
    pub echo_tokens: BTreeMap<String, String>,
    /// Plaintext refresh token of the v1 photos store.
    pub photos_refresh_token: String,
}

struct Writer {
    root: PathBuf,
    records: BTreeMap<String, usize>,
    files: BTreeMap<String, usize>,
}

impl Writer {
    fn path(&self, rel: &str) -> io::Result<PathBuf> {
        let p = self.root.join(rel);
        fs::create_dir_all(p.parent().expect("relative path has a parent"))?;
        Ok(p)
    }

    fn claim(&mut self, id: &str, records: usize) {
        *self.files.entry(id.to_string()).or_default() += 1;
        *self.records.entry(id.to_string()).or_default() += records;
    }

    fn file(&mut self, id: &str, rel: &str, bytes: &[u8]) -> io::Result<()> {
        fs::write(self.path(rel)?, bytes)?;
        self.claim(id, 1);
        Ok(())
    }

    fn prefs(&mut self, id: &str, rel: &str, entries: &[(&str, PrefValue)]) -> io::Result<()> {
        let mut x = String::from("<?xml version='1.0' encoding='utf-8' standalone='yes' ?>\n<map>\n");
        for (k, v) in entries {
            let k = xml_escape(k);
            match v {
                PrefValue::Str(s) => x.push_str(&format!("    <string name=\"{k}\">{}</string>\n", xml_escape(s))),
                PrefValue::Long(n) => x.push_str(&format!("    <long name=\"{k}\" value=\"{n}\" />\n")),
                PrefValue::Int(n) => x.push_str(&format!("    <int name=\"{k}\" value=\"{n}\" />\n")),
                PrefValue::Bool(b) => x.push_str(&format!("    <boolean name=\"{k}\" value=\"{b}\" />\n")),
            }
        }
        x.push_str("</map>\n");
        fs::write(self.path(rel)?, x)?;
        self.claim(id, entries.len());
        Ok(())
    }

    /// A database with `tables` (DDL, rows); every row becomes one record.
    fn sqlite(&mut self, id: &str, rel: &str, tables: &[(&str, Vec<Vec<Sql>>)]) -> io::Result<()> {
        let path = self.path(rel)?;
        let n = write_sqlite(&path, tables).map_err(io::Error::other)?;
        self.claim(id, n);
        Ok(())
    }
}

enum PrefValue {
    Str(String),
    Long(i64),
    Int(i64),
    Bool(bool),
}

fn s(v: impl Into<String>) -> PrefValue {
    PrefValue::Str(v.into())
}

fn t(v: impl ToString) -> Sql {
    Sql::Text(v.to_string())
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn write_sqlite(path: &Path, tables: &[(&str, Vec<Vec<Sql>>)]) -> rusqlite::Result<usize> {
    let _ = fs::remove_file(path);
    let conn = Connection::open(path)?;
    let mut n = 0;
    for (ddl, rows) in tables {
        conn.execute_batch(ddl)?;
        let table = ddl
            .split_whitespace()
            .nth(2)
            .expect("DDL reads CREATE TABLE name(...)")
            .split('(')
            .next()
            .unwrap();
        for row in rows {
            let marks = vec!["?"; row.len()].join(",");
            conn.execute(
                &format!("INSERT INTO {table} VALUES ({marks})"),
                rusqlite::params_from_iter(row.iter()),
            )?;
            n += 1;
        }
    }
    Ok(n)
}

fn zip_bytes(member: &str, lines: &[String]) -> io::Result<Vec<u8>> {
    let mut w = zip::ZipWriter::new(io::Cursor::new(Vec::new()));
    let opts = zip::write::SimpleFileOptions::default()
        .compression_method(zip::CompressionMethod::Deflated)
        .last_modified_time(zip::DateTime::default());
    w.start_file(member, opts).map_err(io::Error::other)?;
    for l in lines {
        writeln!(w, "{l}")?;
    }
    Ok(w.finish().map_err(io::Error::other)?.into_inner())
}

/// Encrypt under `secret` with an IV drawn from `r`.
fn seal(plain: &str, secret: &EncryptionSecret, r: &mut impl Rng) -> Vec<u8> {
    encrypt_value(plain.as_bytes(), secret, r.gen())
}

/// A value sealed under `other` that `secret` cannot unpad.
fn sealed_elsewhere(plain: &str, secret: &EncryptionSecret, other: &EncryptionSecret, r: &mut impl Rng) -> Vec<u8> {
    loop {
        let blob = seal(plain, other, r);
        if decrypt_value(&blob, secret).is_err() {
            return blob;
        }
    }
}

fn b64(bytes: &[u8]) -> Sql {
    use base64::Engine;
    Sql::Text(base64::engine::general_purpose::STANDARD.encode(bytes))
}

const TOKEN_PREFIX: &str = "com.amazon.dcp.sso.token";

fn wifi_xml(nets: &[(String, String)]) -> String {
    let mut x = String::from(
        "<?xml version='1.0' encoding='utf-8' standalone='yes' ?>\n<WifiConfigStoreData>\n<int name=\"Version\" value=\"3\" />\n<NetworkList>\n",
    );
    for (ssid, psk) in nets {
        let (key_suffix, psk_el, mgmt) = if psk.is_empty() {
            ("NONE", "<null name=\"PreSharedKey\" />".to_string(), "01")
        } else {
            ("WPA_PSK", format!("<string name=\"PreSharedKey\">&quot;{}&quot;</string>", xml_escape(psk)), "02")
        };
        let ssid = xml_escape(ssid);
        x.push_str(&format!(
            "<Network>\n<WifiConfiguration>\n<string name=\"ConfigKey\">&quot;{ssid}&quot;{key_suffix}</string>\n<string name=\"SSID\">&quot;{ssid}&quot;</string>\n{psk_el}\n<byte-array name=\"AllowedKeyMgmt\" num=\"1\">{mgmt}</byte-array>\n</WifiConfiguration>\n</Network>\n"
        ));
    }
    x.push_str("</NetworkList>\n</WifiConfigStoreData>\n");
    x
}

/// Write a data-partition tree with one or more files for every catalog
/// entry, plus files no entry claims. Modification times are fixed.
pub fn write_device_tree(root: &Path, seed: u64) -> io::Result<TreeManifest> {
    let hh = Household::generate(seed);
    let (o, m) = (&hh.owner, &hh.member);
    let mut r = rng(seed ^ 0x7ee);
    let mut w = Writer {
        root: root.to_path_buf(),
        records: BTreeMap::new(),
        files: BTreeMap::new(),
    };
    let ms = |h: i64| BASE_MS + h * 3_600_000;

    let wifi = vec![
        (format!("Home-{}", alnum(&mut r, 4)), format!("pw-{}", alnum(&mut r, 12).to_lowercase())),
        ("Guest".to_string(), String::new()),
    ];
    fs::write(w.path("misc/wifi/WifiConfigStore.xml")?, wifi_xml(&wifi))?;
    w.claim("wifi-config", wifi.len());
    fs::write(w.path("misc/wifi/softap.conf")?, b"ssid=EchoSetup\n")?;

    for i in 0..2 {
        w.file("aria-image-cache", &format!("data/com.amazon.aria/cache/image_manager_disk_cache/{:08x}.0", r.gen::<u32>()), &[0xff, 0xd8, i])?;
    }
    w.file("system-snapshots", "system_ce/0/snapshots/42.jpg", b"\xff\xd8snapshot")?;
    w.file("system-snapshots", "system_ce/0/snapshots/42_reduced.jpg", b"\xff\xd8small")?;
    w.file("browser-textures", "data/com.amazon.cloud9/app_textures/tab_0.png", b"\x89PNGtex")?;
    w.sqlite(
        "prime-video-history",
        "data/com.amazon.avod/files/databases/dbplaybackhistory",
        &[(
            "CREATE TABLE playback_history(title_id TEXT, title TEXT, position_ms INTEGER, watched_at INTEGER)",
            vec![
                vec![t("B0TITLE01"), t("The Long Night"), Sql::Integer(1_800_000), Sql::Integer(ms(-20))],
                vec![t("B0TITLE02"), t("Kitchen Stories"), Sql::Integer(600_000), Sql::Integer(ms(-3))],
            ],
        )],
    )?;
    w.prefs(
        "voice-activity-prefs",
        "data/amazon.speech.sim/shared_prefs/user_activity_prefs.xml",
        &[("last_voice_interaction", PrefValue::Long(ms(-1))), ("interaction_count", PrefValue::Int(57))],
    )?;
    w.sqlite(
        "known-devices-registry",
        "data/com.amazon.alexahybridremoteskill/files/customerHomeRegistry.db",
        &[(
            "CREATE TABLE endpoints(endpoint_id TEXT, friendly_name TEXT, category TEXT)",
            vec![
                vec![t("ep-1"), t("Hallway Camera"), t("CAMERA")],
                vec![t("ep-2"), t("Kitchen Plug"), t("SMARTPLUG")],
                vec![t("ep-3"), t("Living Room Lamp"), t("LIGHT")],
            ],
        )],
    )?;
    w.prefs(
        "known-devices-smarthome",
        "data/com.amazon.gloria.smarthome/shared_prefs/SmartHomeEntityCache.xml",
        &[
            ("entity.ep-1", s(r#"{"name":"Hallway Camera","type":"CAMERA"}"#)),
            ("entity.ep-2", s(r#"{"name":"Kitchen Plug","type":"SMARTPLUG"}"#)),
        ],
    )?;
    w.file("wifi-camera-cache", "data/com.amazon.cardinal/cache/snapshot_ep-1.jpg", b"\xff\xd8cam")?;

    // Echo credential store (AES-256 secret)
    let echo_secret = EncryptionSecret::from_bytes(r.gen::<[u8; 32]>().to_vec()).expect("32-byte key");
    let foreign = EncryptionSecret::from_bytes(r.gen::<[u8; 32]>().to_vec()).expect("32-byte key");
    let mut echo_tokens = BTreeMap::new();
    let access = format!("Atza|{}", alnum(&mut r, 40));
    let cookie = alnum(&mut r, 24);
    let private = alnum(&mut r, 32);
    echo_tokens.insert("refresh_token".to_string(), hh.refresh_token.clone());
    echo_tokens.insert("access_token".to_string(), access.clone());
    echo_tokens.insert("session-id".to_string(), cookie.clone());
    let did = |p: &super::Persona| t(p.directed_id.as_str());
    let echo_rows = vec![
        vec![did(o), t(format!("{TOKEN_PREFIX}.oauth.amazon.refresh_token")), b64(&seal(&hh.refresh_token, &echo_secret, &mut r))],
        vec![did(o), t(format!("{TOKEN_PREFIX}.oauth.amazon.access_token")), b64(&seal(&access, &echo_secret, &mut r))],
        vec![did(o), t(format!("{TOKEN_PREFIX}.device.adptoken")), b64(&sealed_elsewhere("adp-token-body", &echo_secret, &foreign, &mut r))],
        vec![did(o), t(format!("{TOKEN_PREFIX}.cookies.session-id")), Sql::Blob(seal(&cookie, &echo_secret, &mut r))],
        vec![did(o), t(format!("{TOKEN_PREFIX}.device.privatekey")), b64(&seal(&private, &echo_secret, &mut r))],
        vec![did(o), t("com.amazon.dcp.sso.property.account.acctId"), t(o.customer_id.as_str())],
        vec![did(o), t(format!("com.amazon.identity.person.{}.name", o.person_id)), t(&o.name)],
        vec![did(m), t(format!("com.amazon.identity.person.{}.name", m.person_id)), t(&m.name)],
        vec![t("amzn1.account.TRUNCATED"), t(format!("com.amazon.identity.person.{}.stale", m.person_id)), Sql::Null],
    ];
    let echo_store = "data/com.amazon.imp/databases/map_data_storage_v2.db";
    write_sqlite(
        &w.path(echo_store)?,
        &[
            (
                "CREATE TABLE encryption_data(encryption_data_key TEXT, encryption_data_value TEXT)",
                vec![vec![t(crate::vault::SECRET_KEY), t(echo_secret.to_base64())]],
            ),
            (
                "CREATE TABLE account_data(account_data_directed_id TEXT, account_data_key TEXT, account_data_value)",
                echo_rows,
            ),
        ],
    )
    .map_err(io::Error::other)?;
    // five token rows and two valid person links
    w.claim("token-store", 5 + 2);

    w.sqlite(
        "alta-identity",
        "securedStorageLocation/com.amazon.alta.h2clientservice/databases/alta.h2clientservice.db",
        &[(
            "CREATE TABLE users(customer_id TEXT, directed_id TEXT, given_name TEXT, is_primary INTEGER)",
            vec![
                vec![t(o.customer_id.as_str()), did(o), t(&o.name), Sql::Integer(1)],
                vec![t(m.customer_id.as_str()), did(m), t(&m.name), Sql::Integer(0)],
            ],
        )],
    )?;

    let script = EventScript::generate(seed, &hh);
    for (cat, at, lines) in &script.archives {
        let name = archive_name(*cat, *at);
        let member = name.trim_end_matches(".zip");
        fs::write(w.path(&format!("system/dropbox/{name}"))?, zip_bytes(member, lines)?)?;
        w.claim("dropbox-logs", 0);
    }
    let logd_name = archive_name(LogCategory::Kernel, BASE_MS);
    fs::write(
        w.path(&format!("logd/{logd_name}"))?,
        zip_bytes(logd_name.trim_end_matches(".zip"), &["<6>[    1.000000] init: second stage".into()])?,
    )?;
    w.claim("logd-logs", 0);

    let webview = "data/com.amazon.cloud9/app_amazon_webview/amazon_webview";
    w.sqlite(
        "browser-data",
        &format!("{webview}/History"),
        &[(
            "CREATE TABLE urls(id INTEGER, url TEXT, title TEXT, last_visit_time INTEGER)",
            vec![
                vec![Sql::Integer(1), t("https://www.example.org/recipes"), t("Recipes"), Sql::Integer(ms(-5))],
                vec![Sql::Integer(2), t("https://news.example.com/"), t("News"), Sql::Integer(ms(-2))],
            ],
        )],
    )?;
    w.sqlite(
        "browser-data",
        &format!("{webview}/Cookies"),
        &[(
            "CREATE TABLE cookies(host_key TEXT, name TEXT, value TEXT, creation_utc INTEGER)",
            vec![vec![t(".example.org"), t("sid"), t("abc123"), Sql::Integer(ms(-5))]],
        )],
    )?;
    w.file("browser-data", &format!("{webview}/Preferences"), br#"{"profile":{"name":"Default"}}"#)?;

    w.prefs(
        "photobooth-prefs",
        "data/com.amazon.zordon/shared_prefs/photobooth.xml",
        &[("lastPictureTaken", PrefValue::Long(ms(-4)))],
    )?;
    w.sqlite(
        "photo-metadata",
        "data/com.amazon.zordon/databases/a1b2c3.mixtape.db",
        &[(
            "CREATE TABLE media(node_id TEXT, name TEXT, content_type TEXT, created INTEGER, width INTEGER, height INTEGER)",
            vec![
                vec![t("node-1"), t("IMG_0001.jpg"), t("image/jpeg"), Sql::Integer(ms(-30)), Sql::Integer(4032), Sql::Integer(3024)],
                vec![t("node-2"), t("VID_0002.mp4"), t("video/mp4"), Sql::Integer(ms(-29)), Sql::Integer(1920), Sql::Integer(1080)],
            ],
        )],
    )?;
    for (i, p) in [o, m].iter().enumerate() {
        w.file(
            "visual-id-album",
            &format!("data/com.amazon.edgecvs/files/album/{}/face_{i}.enc", &p.person_id.as_str()[23..35]),
            &r.gen::<[u8; 32]>(),
        )?;
    }
    w.sqlite(
        "notification-log",
        "system/notification_log.db",
        &[(
            "CREATE TABLE log(_id INTEGER, pkg TEXT, event_type INTEGER, event_time_ms INTEGER, title TEXT)",
            vec![
                vec![Sql::Integer(1), t("com.amazon.knight.calendar"), Sql::Integer(1), Sql::Integer(ms(-2)), t("Dentist")],
                vec![Sql::Integer(2), t("com.amazon.dee.app"), Sql::Integer(1), Sql::Integer(ms(-1)), t("Drop In")],
            ],
        )],
    )?;
    w.prefs(
        "calendar-prefs",
        "data/com.amazon.knight.calendar/shared_prefs/com.amazon.knight.calendar_preferences.xml",
        &[("last_boot_time", PrefValue::Long(ms(-48)))],
    )?;
    write_sqlite(
        &w.path("data/com.amazon.alexa.identity/databases/recognition")?,
        &[(
            "CREATE TABLE FaceEnrolledProfilesRecognition(personId TEXT, lastRecognizedTimeMillis INTEGER)",
            vec![
                vec![t(o.person_id.as_str()), Sql::Integer(ms(-48) + 17_000)],
                vec![t(m.person_id.as_str()), Sql::Integer(ms(-48) + 17_000)],
                vec![t("amzn1.actor.person.did.SHORT"), Sql::Null],
            ],
        )],
    )
    .map_err(io::Error::other)?;
    w.claim("visual-id-recognition", 2);

    // Alexa companion app
    let app = "data/com.amazon.dee.app";
    w.prefs(
        "alexa-service-identity",
        &format!("{app}/shared_prefs/service.identity.xml"),
        &[
            ("customerId", s(o.customer_id.as_str())),
            ("directedId", s(o.directed_id.as_str())),
            ("commsId", s(o.comms_id.as_str())),
            ("personId", s(o.person_id.as_str())),
            ("fullName", s(&o.name)),
        ],
    )?;
    w.prefs(
        "alexa-shared-prefs",
        &format!("{app}/shared_prefs/SHARED_PREFS.xml"),
        &[("lastAppStart", PrefValue::Long(ms(-2))), ("directedId", s(o.directed_id.as_str())), ("commsId", s(o.comms_id.as_str()))],
    )?;
    w.prefs(
        "alexa-shared-prefs-identity",
        &format!("{app}/shared_prefs/SHARED_PREFS_IDENTITY.xml"),
        &[("identity.directedId", s(o.directed_id.as_str())), ("identity.commsId", s(o.comms_id.as_str())), ("onboarded", PrefValue::Bool(true))],
    )?;
    w.prefs(
        "alexa-mobilytics",
        &format!("{app}/shared_prefs/mobilytics.session-storage.xml"),
        &[("session.start", PrefValue::Long(ms(-2))), ("session.end", PrefValue::Long(ms(-2) + 240_000))],
    )?;
    w.sqlite(
        "alexa-webview-cookies",
        &format!("{app}/app_webview/Cookies"),
        &[(
            "CREATE TABLE cookies(host_key TEXT, name TEXT, value TEXT, expires_utc INTEGER)",
            vec![
                vec![t(".amazon.de"), t("session-id"), t(alnum(&mut r, 16)), Sql::Integer(ms(22))],
                vec![t(".amazon.de"), t("ubid-acbde"), t(alnum(&mut r, 16)), Sql::Integer(ms(8760))],
            ],
        )],
    )?;
    w.file("alexa-webview-appcache", &format!("{app}/app_webview/Application Cache/Cache/data_0"), b"appcache")?;
    w.file("alexa-webview-cache", &format!("{app}/cache/org.chromium.android_webview/f_000001"), b"chromium")?;

    let app_secret = EncryptionSecret::from_bytes(r.gen::<[u8; 16]>().to_vec()).expect("16-byte key");
    let app_refresh = format!("Atnr|{}", alnum(&mut r, 48));
    write_sqlite(
        &w.path(&format!("{app}/databases/map_data_storage_v2.db"))?,
        &[
            (
                "CREATE TABLE encryption_data(encryption_data_key TEXT, encryption_data_value TEXT)",
                vec![vec![t(crate::vault::SECRET_KEY), t(app_secret.to_base64())]],
            ),
            (
                "CREATE TABLE account_data(account_data_directed_id TEXT, account_data_key TEXT, account_data_value)",
                vec![
                    vec![did(o), t(format!("{TOKEN_PREFIX}.oauth.amazon.refresh_token")), b64(&seal(&app_refresh, &app_secret, &mut r))],
                    vec![did(o), t(format!("{TOKEN_PREFIX}.oauth.amazon.access_token")), b64(&seal("Atza|app", &app_secret, &mut r))],
                    vec![did(o), t(format!("com.amazon.identity.person.{}.name", o.person_id)), t(&o.name)],
                ],
            ),
        ],
    )
    .map_err(io::Error::other)?;
    w.claim("alexa-token-store", 2 + 1);

    w.sqlite(
        "alexa-datastore",
        &format!("{app}/databases/DataStore.db"),
        &[(
            "CREATE TABLE list_items(customer_id TEXT, list_type TEXT, value TEXT, created INTEGER)",
            vec![
                vec![t(o.customer_id.as_str()), t("SHOPPING"), t("oat milk"), Sql::Integer(ms(-26))],
                vec![t(o.customer_id.as_str()), t("TODO"), t("call plumber"), Sql::Integer(ms(-25))],
            ],
        )],
    )?;
    w.sqlite(
        "alexa-comms-identity",
        &format!("{app}/databases/comms-core-identity-database"),
        &[(
            "CREATE TABLE identity(directed_id TEXT, comms_id TEXT, person_id_v2 TEXT, name TEXT)",
            vec![
                vec![did(o), t(o.comms_id.as_str()), t(o.person_id_v2.as_str()), t(&o.name)],
                vec![did(m), t(m.comms_id.as_str()), t(m.person_id_v2.as_str()), t(&m.name)],
            ],
        )],
    )?;
    w.sqlite(
        "alexa-comms-db",
        &format!("{app}/databases/comms.db"),
        &[
            (
                "CREATE TABLE conversations(conversation_id TEXT, participant TEXT)",
                vec![vec![t("conv-1"), t(m.comms_id.as_str())]],
            ),
            (
                "CREATE TABLE messages(conversation_id TEXT, sender TEXT, text TEXT, time INTEGER)",
                vec![
                    vec![t("conv-1"), t(o.comms_id.as_str()), t("on my way"), Sql::Integer(ms(-7))],
                    vec![t("conv-1"), t(m.comms_id.as_str()), t("ok"), Sql::Integer(ms(-7) + 30_000)],
                ],
            ),
        ],
    )?;

    // Photos app
    let photos = "data/com.amazon.clouddrive.photos";
    w.file("photos-image-cache", &format!("{photos}/cache/image_manager_disk_cache/thumb.0"), b"\xff\xd8thumb")?;
    let photos_refresh = format!("Atnr|{}", alnum(&mut r, 48));
    write_sqlite(
        &w.path(&format!("{photos}/databases/map_data_storage.db"))?,
        &[(
            "CREATE TABLE tokens(token_directed_id TEXT, token_key TEXT, token_value TEXT)",
            vec![
                vec![did(o), t(format!("{TOKEN_PREFIX}.oauth.amazon.refresh_token")), t(&photos_refresh)],
                vec![did(o), t(format!("{TOKEN_PREFIX}.oauth.amazon.access_token")), t("Atza|photos")],
            ],
        )],
    )
    .map_err(io::Error::other)?;
    w.claim("photos-token-store", 2);
    w.sqlite(
        "photos-discovery",
        &format!("{photos}/databases/discovery_database_1"),
        &[(
            "CREATE TABLE uploads(node_id TEXT, local_path TEXT, uploaded_at INTEGER)",
            vec![vec![t("node-1"), t("/sdcard/DCIM/IMG_0001.jpg"), Sql::Integer(ms(-30))]],
        )],
    )?;
    w.sqlite(
        "photos-metadata-cache",
        &format!("{photos}/databases/metadata_cache_database_1"),
        &[(
            "CREATE TABLE metadata(node_id TEXT, owner_customer_id TEXT, exif_make TEXT, exif_datetime TEXT)",
            vec![
                vec![t("node-1"), t(o.customer_id.as_str()), t("Google"), t("2023:08:03 10:12:01")],
                vec![t("node-2"), t(o.customer_id.as_str()), t("Google"), t("2023:08:03 10:13:44")],
            ],
        )],
    )?;

    let unclaimed = vec!["data/com.example.unrelated/notes.txt".to_string(), "misc/wifi/softap.conf".to_string()];
    fs::write(w.path(&unclaimed[0])?, b"not evidence\n")?;

    fix_mtimes(root)?;
    Ok(TreeManifest {
        root: root.to_path_buf(),
        expected_records: w.records,
        expected_files: w.files,
        unclaimed,
        events: script,
        wifi,
        echo_tokens,
        photos_refresh_token: photos_refresh,
    })
}

fn fix_mtimes(root: &Path) -> io::Result<()> {
    let when = UNIX_EPOCH + Duration::from_millis(BASE_MS as u64);
    for e in walkdir::WalkDir::new(root) {
        let e = e.map_err(io::Error::other)?;
        if e.file_type().is_file() {
            fs::File::options().write(true).open(e.path())?.set_modified(when)?;
        }
    }
    Ok(())
}
