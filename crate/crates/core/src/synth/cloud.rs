use std::collections::BTreeMap;

use rand::Rng;
use serde_json::{json, Value};

use super::{alnum, gen_id, rng, Household, BASE_MS};
use crate::cloud::sha256_hex;
use crate::ids::UserIdKind;
use crate::mock::{Fixture, FixtureSet};

const HOUR: i64 = 3_600_000;

/// Facts about [`cloud_fixtures`] output that tests check against.
#[derive(Debug, Clone)]
pub struct CloudExpectations {
    pub refresh_token: String,
    /// Voice-history window covering exactly `voice_in_window` records.
    pub window: (i64, i64),
    pub voice_in_window: usize,
    pub voice_total: usize,
    /// Utterances that have audio.
    pub audio: Vec<String>,
    /// Photo id → sha256 of its content.
    pub photo_hashes: BTreeMap<String, String>,
    /// Initial mock clock.
    pub start_ms: i64,
}

fn doc(v: Value) -> Fixture {
    Fixture::Document(v)
}

/// A fixture for every bundled endpoint, populated from the household of
/// `seed`. Response shapes are reconstructions.
pub fn cloud_fixtures(seed: u64) -> (FixtureSet, CloudExpectations) {
    let hh = Household::generate(seed);
    let (o, m) = (&hh.owner, &hh.member);
    let mut r = rng(seed ^ 0xc10d);
    let mut set = FixtureSet::default();
    let serial = format!("G0{}", alnum(&mut r, 14));
    let device_account = format!("A{}", alnum(&mut r, 13));

    set.insert("user-profile", doc(json!({ "user_id": o.directed_id.as_str(), "name": o.name, "email": "alex@example.invalid" })));
    set.insert("users-me", doc(json!({ "id": o.customer_id.as_str(), "fullName": o.name, "marketPlaceDomainName": "amazon.de" })));
    set.insert(
        "persons-in-household",
        doc(json!({ "persons": [
            { "personIdV2": o.person_id_v2.as_str(), "name": o.name, "role": "ADULT" },
            { "personIdV2": m.person_id_v2.as_str(), "name": m.name, "role": "ADULT" }
        ]})),
    );
    set.insert("landing-content", doc(json!({ "greeting": "Good afternoon", "cards": [] })));
    set.insert("wake-word", doc(json!({ "wakeWords": [{ "deviceSerialNumber": serial, "wakeWord": "ALEXA", "active": true }] })));
    set.insert(
        "device-preferences",
        doc(json!({ "devicePreferences": [{ "deviceSerialNumber": serial, "timeZoneId": "Europe/Berlin", "locale": "de-DE" }] })),
    );
    set.insert(
        "devices",
        doc(json!({ "devices": [{ "deviceAccountId": device_account, "accountName": "Echo Show 15",
                                  "deviceType": "A2LWARUGJLBYEW", "serialNumber": serial, "online": true }] })),
    );
    set.insert(
        "bluetooth",
        doc(json!({ "bluetoothStates": [{ "deviceSerialNumber": serial, "pairedDeviceList": [{ "friendlyName": "Pixel 7", "address": "5C:CB:99:00:11:22" }] }] })),
    );
    set.insert("named-lists", doc(json!({ "lists": [{ "listId": "list-shop", "type": "SHOP" }, { "listId": "list-todo", "type": "TODO" }] })));
    set.insert(
        "named-list-items",
        Fixture::Keyed(BTreeMap::from([
            ("list-shop".to_string(), json!({ "list": [{ "value": "oat milk", "completed": false }] })),
            ("list-todo".to_string(), json!({ "list": [{ "value": "call plumber", "completed": true }] })),
        ])),
    );
    set.insert(
        "live-view-setting",
        Fixture::Keyed(BTreeMap::from([(device_account.clone(), json!({ "liveViewEnabled": true, "dropInEnabled": false }))])),
    );
    set.insert("device-personalization", doc(json!({ "devices": [{ "serialNumber": serial, "photoFrameAlbum": "Family" }] })));
    set.insert("device-wifi-details", doc(json!({ "essid": "Home", "securityMethod": "WPA_PSK", "macAddress": "F0:81:73:AA:BB:CC" })));
    set.insert(
        "household",
        doc(json!({ "accounts": [
            { "directedId": o.directed_id.as_str(), "role": "ADULT", "fullName": o.name },
            { "directedId": m.directed_id.as_str(), "role": "ADULT", "fullName": m.name }
        ]})),
    );
    set.insert(
        "phoenix",
        doc(json!({ "networkDetail": { "endpoints": [{ "friendlyName": "Echo Show 15", "applianceId": format!("AAA_SonarCloudService_{serial}") }] } })),
    );
    set.insert("home-feed", doc(json!({ "cards": [{ "cardType": "WEATHER", "title": "Berlin 24°" }] })));

    let voice_times = [BASE_MS - 48 * HOUR, BASE_MS - 5 * HOUR, BASE_MS - 3 * HOUR, BASE_MS - HOUR];
    let transcripts = ["set a timer for ten minutes", "what's the weather", "show me the hallway camera", "play jazz"];
    let mut voice = Vec::new();
    let mut utterances = Vec::new();
    for (i, (ts, text)) in voice_times.iter().zip(transcripts).enumerate() {
        let uid = format!("utt-{}", alnum(&mut r, 20).to_lowercase());
        let mut rec = json!({
            "utteranceId": uid,
            "timestamp": ts,
            "deviceName": "Echo Show 15",
            "transcript": text,
            "intent": (["SetTimer", "GetWeather", "ShowCamera", "PlayMusic"][i]),
            "resourceIds": [format!("res-{i}")],
        });
        if i == 2 {
            rec["personIdV2"] = json!(o.person_id_v2.as_str());
        }
        voice.push(rec);
        utterances.push(uid);
    }
    set.insert("voice-history", Fixture::Items(voice));
    // audio for the two most recent in-window requests; the earliest has none
    let audio: Vec<String> = utterances[2..].to_vec();
    set.insert(
        "voice-audio",
        Fixture::KeyedBinary(
            audio
                .iter()
                .map(|u| (u.clone(), format!("ID3\x03fake-mp3-{u}").into_bytes()))
                .collect(),
        ),
    );

    set.insert("calendar-accounts", doc(json!({ "accounts": [{ "calendarAccountId": "cal-1", "provider": "GOOGLE" }] })));
    set.insert(
        "calendar-events",
        Fixture::Items(vec![
            json!({ "eventId": "ev-1", "title": "Dentist", "startTime": BASE_MS + 20 * HOUR }),
            json!({ "eventId": "ev-2", "title": "Team call", "startTime": BASE_MS - 2 * HOUR }),
        ]),
    );
    set.insert(
        "comms-accounts",
        doc(json!([{ "commsId": o.comms_id.as_str(), "directedId": o.directed_id.as_str(), "homegroupId": "hg-1", "signedInUser": true }])),
    );
    let contacts: Vec<Value> = (0..3)
        .map(|i| {
            json!({ "contactId": gen_id(UserIdKind::ContactId, &mut r).to_string(), "name": (["Mum", "Dr. Who", "Pizza"][i]),
                    "number": format!("+49301234{i:03}") })
        })
        .collect();
    set.insert("comms-contacts", Fixture::Items(contacts));
    let conv = format!("amzn1.comms.messaging.id.conversationV2~{}", gen_id(UserIdKind::ContactId, &mut r));
    set.insert("comms-conversations", doc(json!({ "conversations": [{ "conversationId": conv, "participants": [o.comms_id.as_str(), m.comms_id.as_str()] }] })));
    set.insert(
        "comms-messages",
        Fixture::Keyed(BTreeMap::from([(
            conv.clone(),
            json!({ "messages": [
                { "messageId": 1, "sender": m.comms_id.as_str(), "text": "running late", "time": BASE_MS - 7 * HOUR },
                { "messageId": 2, "sender": o.comms_id.as_str(), "text": "no worries", "time": BASE_MS - 7 * HOUR + 45_000 }
            ]}),
        )])),
    );
    set.insert(
        "comms-recent",
        doc(json!({ "recentCommunications": [{ "type": "DROP_IN", "time": BASE_MS - 9 * HOUR, "peer": m.comms_id.as_str() }] })),
    );
    set.insert("comms-homegroup-devices", doc(json!({ "devices": [{ "deviceSerialNumber": serial, "name": "Echo Show 15" }] })));
    set.insert(
        "enabled-skills",
        Fixture::Binary(b"<html><body><ul><li>Sleep Sounds</li><li>Ring</li></ul></body></html>".to_vec()),
    );

    let mut photo_hashes = BTreeMap::new();
    let mut photos = Vec::new();
    let mut blobs = BTreeMap::new();
    for i in 0..2 {
        let id = alnum(&mut r, 22);
        let mut content = b"\xff\xd8\xff\xe0JFIF".to_vec();
        content.extend((0..256).map(|_| r.gen::<u8>()));
        photo_hashes.insert(id.clone(), sha256_hex(&content));
        photos.push(json!({ "id": id, "ownerId": o.customer_id.as_str(), "name": format!("IMG_000{}.jpg", i + 1),
                            "createdDate": BASE_MS - (30 - i as i64) * HOUR, "kind": "FILE" }));
        blobs.insert(id, content);
    }
    set.insert("drive-search", Fixture::Items(photos));
    set.insert("drive-download", Fixture::KeyedBinary(blobs));
    set.insert(
        "graphql-nexus",
        doc(json!({ "data": { "endpoints": { "items": [{ "friendlyName": "Echo Show 15",
            "legacyAppliance": { "applianceId": format!("AAA_SonarCloudService_{serial}"), "deviceType": "A2LWARUGJLBYEW" } }] } } })),
    );

    let exp = CloudExpectations {
        refresh_token: hh.refresh_token.clone(),
        window: (BASE_MS - 24 * HOUR, BASE_MS + HOUR),
        voice_in_window: 3,
        voice_total: 4,
        audio,
        photo_hashes,
        start_ms: BASE_MS + 2 * HOUR,
    };
    (set, exp)
}
