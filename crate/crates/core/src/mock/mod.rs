//! An offline stand-in for the vendor cloud.
//!
//! It routes requests by logical host and path, issues credentials from
//! configured refresh tokens with real expiry against its own clock, and
//! rejects any request whose credential form does not match what the host
//! expects. The host→form table here is written independently of
//! [`crate::cloud::auth_for_host`] so each side checks the other.

mod fixtures;
mod server;

pub use fixtures::{Fixture, FixtureSet};
pub use server::MockServer;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::clock::{Clock, ManualClock};
use crate::cloud::{
    AuthMethod, CloudError, EndpointConfig, EndpointDescriptor, HttpRequest, HttpResponse, ResponseClass, Transport,
};

pub const CONTROL_PREFIX: &str = "/__mock/";
pub const SESSION_COOKIE: &str = "session-token";
pub const CSRF_FAILURE_BODY: &str = "csrf check failed";

#[derive(Debug, Error)]
pub enum MockError {
    #[error("fixtures missing for endpoint(s): {}", .0.join(", "))]
    MissingFixtures(Vec<String>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct MockOptions {
    pub refresh_tokens: Vec<String>,
    /// Reject csrf-protected endpoints lacking a matching header.
    pub csrf_enforced: bool,
    /// Include the csrf cookie in issued jars.
    pub issue_csrf_cookie: bool,
}

impl Default for MockOptions {
    fn default() -> Self {
        MockOptions {
            refresh_tokens: Vec::new(),
            csrf_enforced: true,
            issue_csrf_cookie: true,
        }
    }
}

/// The credential form each host accepts.
fn expected_form(host: &str) -> Option<AuthMethod> {
    const BEARER: [&str; 2] = ["api.amazon.com", "api.amazonalexa.com"];
    const AMZ: [&str; 3] = [
        "cdws.eu-west-1.amazonaws.com",
        "drive.amazonaws.com",
        "content-eu.drive.amazonaws.com",
    ];
    const COOKIE_PREFIXES: [&str; 3] = ["alexa", "skills-store", "www"];
    let host = host.split(':').next()?.to_ascii_lowercase();
    if BEARER.contains(&host.as_str()) {
        return Some(AuthMethod::BearerAuthorizationHeader);
    }
    if AMZ.contains(&host.as_str()) {
        return Some(AuthMethod::AmzAccessTokenHeader);
    }
    if host == "alexa-comms-mobile-service.amazon.com" {
        return Some(AuthMethod::SessionCookies);
    }
    let labels: Vec<&str> = host.split('.').collect();
    let tld_ok = match &labels[2.min(labels.len())..] {
        [cc] => (2..=3).contains(&cc.len()),
        [second, cc] => matches!(*second, "co" | "com") && cc.len() == 2,
        _ => false,
    };
    if labels.len() >= 3 && COOKIE_PREFIXES.contains(&labels[0]) && labels[1] == "amazon" && tld_ok {
        return Some(AuthMethod::SessionCookies);
    }
    None
}

fn cookies_of(req: &HttpRequest) -> BTreeMap<String, String> {
    req.header("Cookie")
        .map(|c| {
            c.split(';')
                .filter_map(|p| p.trim().split_once('='))
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .collect()
        })
        .unwrap_or_default()
}

/// Credential forms present on a request.
pub fn forms_carried(req: &HttpRequest) -> BTreeSet<AuthMethod> {
    let mut s = BTreeSet::new();
    if req.header("Authorization").is_some() {
        s.insert(AuthMethod::BearerAuthorizationHeader);
    }
    if req.header("X-Amz-Access-Token").is_some() {
        s.insert(AuthMethod::AmzAccessTokenHeader);
    }
    if req.header("Cookie").is_some() {
        s.insert(AuthMethod::SessionCookies);
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub seq: u64,
    pub at_ms: i64,
    pub method: String,
    pub host: String,
    pub path: String,
    pub forms: BTreeSet<AuthMethod>,
    pub expected: Option<AuthMethod>,
    pub endpoint_id: Option<String>,
    pub status: u16,
    /// Why the request was refused, when it was.
    pub reason: Option<String>,
}

impl JournalEntry {
    /// A credential of a form the host does not accept was sent.
    pub fn cross_form(&self) -> bool {
        self.expected.is_some_and(|e| self.forms.iter().any(|f| *f != e))
    }
}

#[derive(Debug, Clone)]
struct Grant {
    refresh_token: String,
    expires_at: i64,
    csrf: Option<String>,
}

#[derive(Debug, Default)]
struct State {
    revoked: BTreeSet<String>,
    access: BTreeMap<String, Grant>,
    sessions: BTreeMap<String, Grant>,
    counter: u64,
    exchanges: BTreeMap<String, u32>,
    journal: Vec<JournalEntry>,
}

pub struct MockCloud {
    config: EndpointConfig,
    fixtures: FixtureSet,
    clock: Arc<ManualClock>,
    options: MockOptions,
    state: Mutex<State>,
}

struct Reply {
    resp: HttpResponse,
    endpoint: Option<String>,
    reason: Option<String>,
}

fn reply(resp: HttpResponse) -> Reply {
    Reply {
        resp,
        endpoint: None,
        reason: None,
    }
}

fn refuse(status: u16, reason: &str) -> Reply {
    Reply {
        resp: HttpResponse::json(status, &json!({ "error": reason })),
        endpoint: None,
        reason: Some(reason.to_string()),
    }
}

/// Match `path` against a `{slot}` template, returning decoded slot values.
fn match_template(template: &str, path: &str) -> Option<BTreeMap<String, String>> {
    let t: Vec<&str> = template.split('/').collect();
    let p: Vec<&str> = path.split('/').collect();
    if t.len() != p.len() {
        return None;
    }
    let mut out = BTreeMap::new();
    for (ts, ps) in t.iter().zip(&p) {
        if let Some(name) = ts.strip_prefix('{').and_then(|s| s.strip_suffix('}')) {
            if ps.is_empty() {
                return None;
            }
            let decoded: String = url::form_urlencoded::parse(format!("v={ps}").as_bytes())
                .next()
                .map(|(_, v)| v.into_owned())
                .unwrap_or_default();
            out.insert(name.to_string(), decoded);
        } else if ts != ps {
            return None;
        }
    }
    Some(out)
}

fn host_eq(a: &str, b: &str) -> bool {
    a.split(':').next().unwrap_or("").eq_ignore_ascii_case(b)
}

impl MockCloud {
    pub fn new(
        config: EndpointConfig,
        fixtures: FixtureSet,
        start_ms: i64,
        options: MockOptions,
    ) -> Result<Self, MockError> {
        let missing = fixtures.missing(&config);
        if !missing.is_empty() {
            return Err(MockError::MissingFixtures(missing));
        }
        Ok(MockCloud {
            config,
            fixtures,
            clock: Arc::new(ManualClock::new(start_ms)),
            options,
            state: Mutex::new(State::default()),
        })
    }

    pub fn clock(&self) -> Arc<ManualClock> {
        Arc::clone(&self.clock)
    }

    fn state(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn revoke(&self, refresh_token: &str) {
        self.state().revoked.insert(refresh_token.to_string());
    }

    pub fn journal(&self) -> Vec<JournalEntry> {
        self.state().journal.clone()
    }

    pub fn cross_form_count(&self) -> usize {
        self.state().journal.iter().filter(|j| j.cross_form()).count()
    }

    /// Successful exchanges by requested token type.
    pub fn exchange_counts(&self) -> BTreeMap<String, u32> {
        self.state().exchanges.clone()
    }

    pub fn handle(&self, req: &HttpRequest) -> HttpResponse {
        let now = self.clock.now_ms();
        let r = if req.path().starts_with(CONTROL_PREFIX) {
            self.control(req)
        } else {
            self.route(req, now)
        };
        let forms = forms_carried(req);
        let mut st = self.state();
        let seq = st.journal.len() as u64;
        st.journal.push(JournalEntry {
            seq,
            at_ms: now,
            method: req.method.clone(),
            host: req.host.clone(),
            path: req.path().to_string(),
            forms,
            expected: expected_form(&req.host),
            endpoint_id: r.endpoint,
            status: r.resp.status,
            reason: r.reason,
        });
        r.resp
    }

    fn control(&self, req: &HttpRequest) -> Reply {
        let q: BTreeMap<String, String> = req.query().into_iter().collect();
        match &req.path()[CONTROL_PREFIX.len()..] {
            "health" => reply(HttpResponse::json(200, &json!({ "ok": true, "now_ms": self.clock.now_ms() }))),
            "clock/advance" => match q.get("ms").and_then(|v| v.parse::<i64>().ok()) {
                Some(ms) => reply(HttpResponse::json(200, &json!({ "now_ms": self.clock.advance(ms) }))),
                None => refuse(400, "ms required"),
            },
            "revoke" => match q.get("token") {
                Some(t) => {
                    self.revoke(t);
                    reply(HttpResponse::json(200, &json!({ "revoked": true })))
                }
                None => refuse(400, "token required"),
            },
            "journal" => reply(HttpResponse::json(200, &serde_json::to_value(self.journal()).unwrap_or(Value::Null))),
            _ => refuse(404, "unknown control endpoint"),
        }
    }

    fn exchange(&self, req: &HttpRequest, now: i64) -> Reply {
        let te = &self.config.token_exchange;
        let form: BTreeMap<String, String> = url::form_urlencoded::parse(&req.body).into_owned().collect();
        let (Some(source), Some(kind)) = (form.get(&te.source_token_field), form.get(&te.type_field)) else {
            return refuse(400, "invalid_request");
        };
        let mut st = self.state();
        if !self.options.refresh_tokens.contains(source) || st.revoked.contains(source) {
            return refuse(400, "invalid_grant");
        }
        st.counter += 1;
        let n = st.counter;
        let body = if *kind == te.access_token_type {
            let token = format!("Atza|mock-access-{n:06}");
            st.access.insert(token.clone(), Grant {
                refresh_token: source.clone(),
                expires_at: now + self.config.lifetimes_ms.access_token,
                csrf: None,
            });
            json!({ "access_token": token, "token_type": "bearer",
                    "expires_in": self.config.lifetimes_ms.access_token / 1000 })
        } else if *kind == te.cookies_type {
            let session = format!("mock-session-{n:06}");
            let csrf = self.options.issue_csrf_cookie.then(|| format!("mock-csrf-{n:06}"));
            let mut jar = vec![
                json!({ "name": "session-id", "value": format!("mock-sid-{n:06}") }),
                json!({ "name": SESSION_COOKIE, "value": session }),
            ];
            if let Some(c) = &csrf {
                jar.push(json!({ "name": self.config.csrf.cookie, "value": c }));
            }
            st.sessions.insert(session, Grant {
                refresh_token: source.clone(),
                expires_at: now + self.config.lifetimes_ms.cookies,
                csrf,
            });
            json!({ "cookies": jar, "expires_in": self.config.lifetimes_ms.cookies / 1000 })
        } else {
            return refuse(400, "unsupported_token_type");
        };
        *st.exchanges.entry(kind.clone()).or_default() += 1;
        Reply {
            resp: HttpResponse::json(200, &body),
            endpoint: Some(crate::cloud::TOKEN_EXCHANGE_ID.into()),
            reason: None,
        }
    }

    /// The valid grant behind the request's single credential, if any.
    fn authenticate(&self, req: &HttpRequest, form: AuthMethod, now: i64) -> Result<Grant, &'static str> {
        let st = self.state();
        let grant = match form {
            AuthMethod::BearerAuthorizationHeader => req
                .header("Authorization")
                .and_then(|h| h.strip_prefix("Bearer "))
                .and_then(|t| st.access.get(t)),
            AuthMethod::AmzAccessTokenHeader => req.header("X-Amz-Access-Token").and_then(|t| st.access.get(t)),
            AuthMethod::SessionCookies => cookies_of(req).get(SESSION_COOKIE).and_then(|s| st.sessions.get(s)),
        };
        match grant {
            None => Err("unknown credential"),
            Some(g) if now >= g.expires_at => Err("expired credential"),
            Some(g) if st.revoked.contains(&g.refresh_token) => Err("revoked credential"),
            Some(g) => Ok(g.clone()),
        }
    }

    fn route(&self, req: &HttpRequest, now: i64) -> Reply {
        let te = &self.config.token_exchange;
        if host_eq(&req.host, &te.host) && req.path() == te.path {
            if req.method != "POST" {
                return refuse(405, "method not allowed");
            }
            return self.exchange(req, now);
        }
        if self.config.deprecated.iter().any(|d| host_eq(&req.host, &d.host) && req.path() == d.path) {
            return refuse(410, "endpoint retired");
        }
        let Some((ep, slots)) = self.config.endpoints.iter().find_map(|e| {
            if !host_eq(&req.host, &e.host) || !e.method.eq_ignore_ascii_case(&req.method) {
                return None;
            }
            match_template(&e.path, req.path()).map(|s| (e, s))
        }) else {
            return refuse(404, "no such route");
        };
        let mut r = self.serve_endpoint(ep, slots, req, now);
        r.endpoint = Some(ep.id.clone());
        r
    }

    fn serve_endpoint(
        &self,
        ep: &EndpointDescriptor,
        slots: BTreeMap<String, String>,
        req: &HttpRequest,
        now: i64,
    ) -> Reply {
        let Some(expected) = expected_form(&req.host) else {
            return refuse(421, "host not served");
        };
        let carried = forms_carried(req);
        if carried.iter().any(|f| *f != expected) {
            return refuse(401, "credential form not accepted by this host");
        }
        if !carried.contains(&expected) {
            return refuse(401, "missing credential");
        }
        let grant = match self.authenticate(req, expected, now) {
            Ok(g) => g,
            Err(reason) => return refuse(401, reason),
        };
        if ep.csrf && self.options.csrf_enforced {
            let sent = req.header(&self.config.csrf.header);
            if sent.is_none() || sent != grant.csrf.as_deref() {
                return Reply {
                    resp: HttpResponse::text(403, CSRF_FAILURE_BODY),
                    endpoint: None,
                    reason: Some("csrf".into()),
                };
            }
        }
        let mut args = slots;
        args.extend(req.query());
        self.fixture_response(ep, &args)
    }

    fn fixture_response(&self, ep: &EndpointDescriptor, args: &BTreeMap<String, String>) -> Reply {
        let key = || {
            ep.fixture_key
                .clone()
                .or_else(|| ep.slots().first().map(|s| s.to_string()))
                .and_then(|k| args.get(&k).cloned())
        };
        let fixture = self.fixtures.get(&ep.id).expect("fixtures checked at construction");
        let resp = match fixture {
            Fixture::Document(v) => HttpResponse::json(200, v),
            Fixture::Keyed(m) => match key().and_then(|k| m.get(&k)) {
                Some(v) => HttpResponse::json(200, v),
                None => return refuse(404, "not found"),
            },
            Fixture::Binary(b) => HttpResponse::binary(200, content_type(ep), b.clone()),
            Fixture::KeyedBinary(m) => match key().and_then(|k| m.get(&k)) {
                Some(b) => HttpResponse::binary(200, content_type(ep), b.clone()),
                None => return refuse(404, "not found"),
            },
            Fixture::Items(items) => match self.page(ep, items, args) {
                Ok(v) => HttpResponse::json(200, &v),
                Err(reason) => return refuse(400, reason),
            },
        };
        reply(resp)
    }

    fn page(&self, ep: &EndpointDescriptor, items: &[Value], args: &BTreeMap<String, String>) -> Result<Value, &'static str> {
        let selected: Vec<&Value> = match &ep.window {
            Some(w) => {
                let bound = |k: &str| args.get(k).map(|v| v.parse::<i64>().map_err(|_| "bad window bound")).transpose();
                let (lo, hi) = (bound(&w.start)?.unwrap_or(i64::MIN), bound(&w.end)?.unwrap_or(i64::MAX));
                items
                    .iter()
                    .filter(|i| i.get(&w.field).and_then(Value::as_i64).is_some_and(|t| lo <= t && t < hi))
                    .collect()
            }
            None => items.iter().collect(),
        };
        let pointer = ep.items.as_deref().unwrap_or("");
        if pointer.is_empty() {
            return Ok(Value::Array(selected.into_iter().cloned().collect()));
        }
        let (start, end, next) = match &ep.pagination {
            Some(pg) => {
                let start = match args.get(&pg.cursor_param) {
                    None => 0,
                    Some(c) => c.strip_prefix('c').and_then(|n| n.parse().ok()).ok_or("bad cursor")?,
                };
                let end = (start + self.config.page_size.max(1)).min(selected.len());
                (start.min(end), end, (end < selected.len()).then(|| format!("c{end}")))
            }
            None => (0, selected.len(), None),
        };
        let mut doc = Value::Object(Default::default());
        set_pointer(&mut doc, pointer, Value::Array(selected[start..end].iter().map(|v| (*v).clone()).collect()));
        if let (Some(pg), Some(n)) = (&ep.pagination, next) {
            set_pointer(&mut doc, &pg.cursor_field, Value::String(n));
        }
        Ok(doc)
    }
}

fn content_type(ep: &EndpointDescriptor) -> &'static str {
    match (ep.response, ep.id.as_str()) {
        (ResponseClass::Binary, "voice-audio") => "audio/mpeg",
        (ResponseClass::Binary, "enabled-skills") => "text/html",
        _ => "application/octet-stream",
    }
}

fn set_pointer(doc: &mut Value, pointer: &str, v: Value) {
    let mut cur = doc;
    let parts: Vec<&str> = pointer.trim_start_matches('/').split('/').collect();
    for (i, p) in parts.iter().enumerate() {
        let obj = cur.as_object_mut().expect("pointer walks objects");
        if i + 1 == parts.len() {
            obj.insert(p.to_string(), v);
            return;
        }
        cur = obj.entry(p.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
}

impl Transport for MockCloud {
    fn send(&self, req: &HttpRequest) -> Result<HttpResponse, CloudError> {
        Ok(self.handle(req))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn own_host_table() {
        assert_eq!(expected_form("api.amazon.com"), Some(AuthMethod::BearerAuthorizationHeader));
        assert_eq!(expected_form("content-eu.drive.amazonaws.com"), Some(AuthMethod::AmzAccessTokenHeader));
        assert_eq!(expected_form("skills-store.amazon.co.uk"), Some(AuthMethod::SessionCookies));
        assert_eq!(expected_form("example.com"), None);
        assert_eq!(expected_form("www.amazon.example.com"), None);
    }

    #[test]
    fn template_matching() {
        let m = match_template("/users/{commsId}/conversations", "/users/a%7Eb/conversations").unwrap();
        assert_eq!(m["commsId"], "a~b");
        assert!(match_template("/users/{commsId}", "/users/").is_none());
        assert!(match_template("/a/{x}", "/b/1").is_none());
    }
}
