mod support;

use std::collections::BTreeMap;
use std::sync::Arc;

use echoshow::clock::{ManualClock, HOUR_MS};
use echoshow::cloud::{
    replay, sweep, AcquireOptions, AcquisitionLog, CloudError, EndpointConfig, HttpRequest, HttpTransport, Outcome,
    Session, SweepReport, Transport, TOKEN_EXCHANGE_ID,
};
use echoshow::mock::{MockCloud, MockOptions, MockServer, CONTROL_PREFIX};
use echoshow::report::{cmd_acquire, AcquireArgs, CredentialSource, ExitClass};
use echoshow::synth::{cloud_fixtures, CloudExpectations, Household};
use support::timed;

const SEED: u64 = 21;

fn mock(seed: u64) -> (Arc<MockCloud>, CloudExpectations) {
    let (fixtures, expect) = cloud_fixtures(seed);
    let options = MockOptions { refresh_tokens: vec![expect.refresh_token.clone()], ..MockOptions::default() };
    let m = MockCloud::new(EndpointConfig::builtin().clone(), fixtures, expect.start_ms, options).unwrap();
    (Arc::new(m), expect)
}

fn options(seed: u64, end_ms: i64) -> AcquireOptions {
    let owner = Household::generate(seed).owner;
    AcquireOptions {
        only: None,
        start_ms: 0,
        end_ms,
        seeds: BTreeMap::from([("directedId".to_string(), vec![owner.directed_id.to_string()])]),
    }
}

fn in_process(m: &Arc<MockCloud>, token: &str) -> Session {
    let clock: Arc<ManualClock> = m.clock();
    Session::new(EndpointConfig::builtin().clone(), m.clone(), clock, token, AcquisitionLog::in_memory())
}

/// Server-side count by requested token type, next to the client's own.
fn exchanges(m: &MockCloud, s: &Session) -> ((u32, u32), (u32, u32)) {
    let server = m.exchange_counts();
    let get = |k: &str| server.get(k).copied().unwrap_or(0);
    let client = s.exchange_counts();
    ((get("access_token"), get("auth_cookies")), (client.access_token, client.cookies))
}

fn every_endpoint_answered(report: &SweepReport) {
    assert!(report.fatal.is_none(), "{:?}", report.fatal);
    for ep in &EndpointConfig::builtin().endpoints {
        let answered = report
            .statuses
            .iter()
            .any(|s| s.endpoint_id == ep.id && matches!(s.outcome, Outcome::Ok { .. }));
        assert!(answered, "{} never answered: {:?}", ep.id, report.statuses.iter().filter(|s| s.endpoint_id == ep.id).collect::<Vec<_>>());
    }
    assert!(!report.statuses.iter().any(|s| matches!(s.outcome, Outcome::Skipped { .. })));
}

#[test]
fn token_lifecycle_follows_lifetimes_exactly() {
    let (m, expect) = mock(SEED);
    let s = in_process(&m, &expect.refresh_token);
    let clock = m.clock();
    let opts = options(SEED, expect.start_ms);

    every_endpoint_answered(&sweep(&s, &opts));
    assert_eq!(exchanges(&m, &s), ((1, 1), (1, 1)));

    clock.advance(HOUR_MS - 1);
    sweep(&s, &opts);
    assert_eq!(exchanges(&m, &s), ((1, 1), (1, 1)), "renewed before expiry");

    clock.advance(1);
    every_endpoint_answered(&sweep(&s, &opts));
    assert_eq!(exchanges(&m, &s), ((2, 1), (2, 1)), "+1 h: exactly one access token exchange");

    clock.advance(23 * HOUR_MS - 1);
    sweep(&s, &opts);
    assert_eq!(exchanges(&m, &s), ((3, 1), (3, 1)));

    clock.advance(1);
    every_endpoint_answered(&sweep(&s, &opts));
    assert_eq!(exchanges(&m, &s), ((3, 2), (3, 2)), "+24 h: cookies renewed");

    assert_eq!(m.cross_form_count(), 0);
    let journal = m.journal();
    assert!(journal.iter().all(|j| j.status != 401), "a credential was refused");
    let requests = journal.iter().filter(|j| j.endpoint_id.as_deref().is_some_and(|id| id != TOKEN_EXCHANGE_ID));
    assert!(requests.clone().count() > 0);
    assert!(requests.into_iter().all(|j| j.forms.len() == 1 && j.expected == j.forms.first().copied()));
}

#[test]
fn cross_form_counter_sees_a_mixed_request() {
    // negative control: the counter the sweep is judged by does fire
    let (m, _) = mock(SEED);
    let ep = EndpointConfig::builtin()
        .endpoints
        .iter()
        .find(|e| e.slots().is_empty() && e.method == "GET")
        .unwrap();
    let mut req = HttpRequest::get(&ep.host, &ep.path);
    req.headers.push(("Authorization".into(), "Bearer x".into()));
    req.headers.push(("Cookie".into(), "session-token=y".into()));
    let resp = m.send(&req).unwrap();
    assert_eq!(resp.status, 401);
    assert_eq!(m.cross_form_count(), 1);
}

#[test]
fn revoked_refresh_token_is_an_auth_failure() {
    let (m, expect) = mock(SEED);
    let s = in_process(&m, &expect.refresh_token);
    let opts = options(SEED, expect.start_ms);
    every_endpoint_answered(&sweep(&s, &opts));

    // cached credentials are still unexpired when the grant is withdrawn
    m.revoke(&expect.refresh_token);
    let report = sweep(&s, &opts);
    let fatal = report.fatal.as_deref().expect("sweep stops");
    assert!(fatal.starts_with("refresh token rejected"), "{fatal}");
    let failed: Vec<_> = report.failed().collect();
    assert_eq!(failed.len(), 1);
    assert!(report.statuses.iter().skip(1).all(|s| matches!(s.outcome, Outcome::Skipped { .. })));

    // the same condition through the command gives the auth exit class
    let (m, expect) = mock(SEED);
    m.revoke(&expect.refresh_token);
    let server = MockServer::start(m.clone(), "127.0.0.1:0").unwrap();
    let dir = tempfile::tempdir().unwrap();
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
    .unwrap_err();
    assert_eq!(err.class, ExitClass::Auth);
    assert_eq!(err.class.code(), 6);
    let status: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("acq/status.json")).unwrap()).unwrap();
    assert!(status["fatal"].as_str().unwrap().contains("invalid_grant"));
}

#[test]
fn http_sweep_is_fast_and_replays_from_the_log() {
    let (m, expect) = mock(SEED);
    let server = MockServer::start(m.clone(), "127.0.0.1:0").unwrap();
    let transport = HttpTransport::new(Some(&server.url()), false).unwrap();
    let log_dir = tempfile::tempdir().unwrap();
    let s = Session::new(
        EndpointConfig::builtin().clone(),
        Arc::new(transport),
        m.clock(),
        &expect.refresh_token,
        AcquisitionLog::open(log_dir.path()).unwrap(),
    );
    let (report, secs) = timed(|| sweep(&s, &options(SEED, expect.start_ms)));
    assert!(secs < 30.0, "sweep took {secs:.1}s");
    every_endpoint_answered(&report);
    assert_eq!(m.cross_form_count(), 0);

    // the in-process transport sees the same answers
    let (m2, _) = mock(SEED);
    let s2 = in_process(&m2, &expect.refresh_token);
    let direct = sweep(&s2, &options(SEED, expect.start_ms));
    assert_eq!(direct.records, report.records);
    assert_eq!(direct.statuses, report.statuses);

    drop(s);
    let reloaded = AcquisitionLog::load(log_dir.path()).unwrap();
    let (replayed, problems) = replay(&reloaded, EndpointConfig::builtin());
    assert!(problems.is_empty(), "{problems:?}");
    assert_eq!(replayed, report.records);

    let log_text = std::fs::read_to_string(log_dir.path().join(echoshow::cloud::LOG_FILE)).unwrap();
    assert!(!log_text.contains(&expect.refresh_token));
    assert!(!log_text.contains("mock-access-"), "credential archived");
}

#[test]
fn voice_history_window_is_honoured() {
    let (m, expect) = mock(SEED);
    let s = in_process(&m, &expect.refresh_token);
    let mut opts = options(SEED, expect.window.1);
    opts.start_ms = expect.window.0;
    let report = sweep(&s, &opts);
    let (voice, bad) = report.voice_records();
    assert!(bad.is_empty());
    assert_eq!(voice.len(), expect.voice_in_window);
    assert!(voice.iter().all(|v| (expect.window.0..=expect.window.1).contains(&v.timestamp)));
}

#[test]
fn retired_routes_answer_gone_and_are_never_requested() {
    let (m, expect) = mock(SEED);
    let cfg = EndpointConfig::builtin();
    assert_eq!(cfg.deprecated.len(), 3);
    for d in &cfg.deprecated {
        assert!(!cfg.endpoints.iter().any(|e| e.host == d.host && e.path == d.path));
        let mut req = HttpRequest::get(&d.host, &d.path);
        req.headers.push(("Cookie".into(), "session-token=x".into()));
        assert_eq!(m.send(&req).unwrap().status, 410);
    }
    let s = in_process(&m, &expect.refresh_token);
    sweep(&s, &options(SEED, expect.start_ms));
    let retired: Vec<_> = m
        .journal()
        .into_iter()
        .filter(|j| !j.path.starts_with(CONTROL_PREFIX) && j.status == 410)
        .collect();
    assert_eq!(retired.len(), 3, "only the probes above");
}

#[test]
fn non_loopback_targets_are_refused_without_live() {
    for base in [Some("http://203.0.113.7:8080"), Some("https://alexa.amazon.com"), None] {
        assert!(matches!(HttpTransport::new(base, false), Err(CloudError::Safety(_))), "{base:?}");
    }
    let dir = tempfile::tempdir().unwrap();
    let err = cmd_acquire(&AcquireArgs {
        credentials: CredentialSource::RefreshToken("Atnr|x".into()),
        base_url: None,
        live: false,
        only: Vec::new(),
        from_ms: None,
        to_ms: None,
        out: dir.path().join("acq"),
        marketplace: None,
        config: None,
    })
    .unwrap_err();
    assert_eq!(err.class, ExitClass::Refused);
    assert!(!dir.path().join("acq").exists(), "nothing written before the safety gate");
}
