use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex, MutexGuard};

use serde_json::{Map, Value};

use super::acqlog::{sha256_hex, AcquisitionLog};
use super::auth::{AuthState, ExchangeCounts};
use super::{
    auth_for_host, CloudError, EndpointConfig, EndpointDescriptor, HttpRequest, ParamLocation, ResponseClass,
    Transport,
};
use crate::artifacts::Record;
use crate::clock::Clock;

/// Endpoint id recorded in the log for refresh-token exchanges.
pub const TOKEN_EXCHANGE_ID: &str = "token-exchange";

const MAX_PAGES: usize = 10_000;

/// One archived response.
#[derive(Debug, Clone)]
pub struct Page {
    pub seq: u64,
    pub status: u16,
    pub content_type: String,
    pub body: Vec<u8>,
}

impl Page {
    pub fn json(&self) -> Result<Value, serde_json::Error> {
        serde_json::from_slice(&self.body)
    }
}

/// A refresh token bound to a transport, a clock and an acquisition log.
/// Shareable across threads; credential exchange is single-flight.
pub struct Session {
    config: EndpointConfig,
    transport: Arc<dyn Transport>,
    clock: Arc<dyn Clock>,
    auth: Mutex<AuthState>,
    log: Mutex<AcquisitionLog>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

fn encode_component(s: &str) -> String {
    url::form_urlencoded::byte_serialize(s.as_bytes()).collect()
}

impl Session {
    pub fn new(
        config: EndpointConfig,
        transport: Arc<dyn Transport>,
        clock: Arc<dyn Clock>,
        refresh_token: &str,
        log: AcquisitionLog,
    ) -> Self {
        Session {
            config,
            transport,
            clock,
            auth: Mutex::new(AuthState::new(refresh_token)),
            log: Mutex::new(log),
        }
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    pub fn now_ms(&self) -> i64 {
        self.clock.now_ms()
    }

    pub fn exchange_counts(&self) -> ExchangeCounts {
        let a = lock(&self.auth);
        ExchangeCounts {
            access_token: a.access_exchanges,
            cookies: a.cookie_exchanges,
        }
    }

    pub fn with_log<R>(&self, f: impl FnOnce(&AcquisitionLog) -> R) -> R {
        f(&lock(&self.log))
    }

    pub fn into_log(self) -> AcquisitionLog {
        self.log.into_inner().unwrap_or_else(|p| p.into_inner())
    }

    /// Build the request for `ep` without credentials.
    pub fn build_request(
        &self,
        ep: &EndpointDescriptor,
        args: &BTreeMap<String, String>,
        cursor: Option<&str>,
    ) -> Result<HttpRequest, CloudError> {
        let missing: Vec<String> = ep
            .required_params()
            .filter(|p| args.get(&p.name).is_none_or(|v| v.is_empty()))
            .map(|p| p.name.clone())
            .collect();
        if !missing.is_empty() {
            return Err(CloudError::Precondition {
                endpoint: ep.id.clone(),
                missing,
            });
        }
        let mut path = ep.path.clone();
        for p in ep.params.iter().filter(|p| p.location == ParamLocation::Path) {
            if let Some(v) = args.get(&p.name) {
                path = path.replace(&format!("{{{}}}", p.name), &encode_component(v));
            }
        }
        let mut q = url::form_urlencoded::Serializer::new(String::new());
        for (k, v) in &ep.fixed_query {
            q.append_pair(k, v);
        }
        for p in ep.params.iter().filter(|p| p.location == ParamLocation::Query) {
            if let Some(v) = args.get(&p.name) {
                q.append_pair(&p.name, v);
            }
        }
        if let (Some(pg), Some(c)) = (&ep.pagination, cursor) {
            q.append_pair(&pg.cursor_param, c);
        }
        let query = q.finish();
        if !query.is_empty() {
            path = format!("{path}?{query}");
        }
        let mut req = HttpRequest::get(&ep.host, &path);
        req.method = ep.method.clone();
        if let Some(body) = &ep.body {
            req.body = serde_json::to_vec(body).expect("json value serializes");
            req.headers.push(("Content-Type".into(), "application/json".into()));
        }
        Ok(req)
    }

    /// One request: attach the credential the host requires, send, archive
    /// the response, then classify it.
    pub fn fetch(
        &self,
        ep: &EndpointDescriptor,
        args: &BTreeMap<String, String>,
        cursor: Option<&str>,
    ) -> Result<Page, CloudError> {
        let method = auth_for_host(&ep.host)?;
        if method != ep.auth {
            return Err(CloudError::Config(format!(
                "{}: declared {:?} but host routes to {method:?}",
                ep.id, ep.auth
            )));
        }
        // A cached credential the server refuses is dropped and exchanged
        // afresh once, so a revoked refresh token surfaces as such.
        let mut retried = false;
        let (seq, resp) = loop {
            let mut req = self.build_request(ep, args, cursor)?;
            let (credential, exchanged) = {
                let mut auth = lock(&self.auth);
                let mut trace = Vec::new();
                let now = self.clock.now_ms();
                let result = auth.ensure_credentials(&self.config, self.transport.as_ref(), method, now, &mut trace);
                let exchanged = !trace.is_empty();
                let mut log = lock(&self.log);
                for t in trace {
                    log.append(now, TOKEN_EXCHANGE_ID, &t.request, &BTreeMap::new(), t.status, "", &[], true)?;
                }
                (result?, exchanged)
            };
            req.headers.extend(credential.headers(ep.csrf.then_some(&self.config.csrf)));
            let resp = self.transport.send(&req)?;
            let now = self.clock.now_ms();
            let mut logged_args = args.clone();
            if let Some(c) = cursor {
                logged_args.insert("_cursor".into(), c.to_string());
            }
            // The archived request never carries credential headers.
            let archived = HttpRequest {
                headers: Vec::new(),
                ..req
            };
            let seq = lock(&self.log).append(
                now,
                &ep.id,
                &archived,
                &logged_args,
                resp.status,
                &resp.content_type,
                &resp.body,
                false,
            )?;
            if resp.status == 401 && !exchanged && !retried {
                retried = true;
                lock(&self.auth).invalidate(method);
                continue;
            }
            break (seq, resp);
        };

        if resp.status == 403 && resp.body.trim_ascii() == b"csrf check failed" {
            return Err(CloudError::Csrf { endpoint: ep.id.clone() });
        }
        if resp.status >= 400 {
            return Err(CloudError::Http {
                endpoint: ep.id.clone(),
                status: resp.status,
                body: String::from_utf8_lossy(&resp.body).chars().take(512).collect(),
            });
        }
        let page = Page {
            seq,
            status: resp.status,
            content_type: resp.content_type,
            body: resp.body,
        };
        if ep.response != ResponseClass::Binary {
            page.json().map_err(|e| CloudError::Parse {
                endpoint: ep.id.clone(),
                message: e.to_string(),
            })?;
        }
        Ok(page)
    }

    /// Every page of a listing. A missing or null cursor ends it; a repeated
    /// cursor is an error rather than a loop.
    pub fn fetch_all(&self, ep: &EndpointDescriptor, args: &BTreeMap<String, String>) -> Result<Vec<Page>, CloudError> {
        let mut pages = Vec::new();
        let mut cursor: Option<String> = None;
        let mut seen = BTreeSet::new();
        loop {
            let page = self.fetch(ep, args, cursor.as_deref())?;
            let next = match &ep.pagination {
                Some(pg) => next_cursor(&page.json().unwrap_or(Value::Null), &pg.cursor_field),
                None => None,
            };
            pages.push(page);
            match next {
                None => return Ok(pages),
                Some(c) if !seen.insert(c.clone()) || pages.len() >= MAX_PAGES => {
                    return Err(CloudError::Parse {
                        endpoint: ep.id.clone(),
                        message: format!("pagination does not terminate (cursor {c:?})"),
                    })
                }
                Some(c) => cursor = Some(c),
            }
        }
    }
}

fn next_cursor(doc: &Value, pointer: &str) -> Option<String> {
    match doc.pointer(pointer)? {
        Value::String(s) if !s.is_empty() => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Items of a JSON document according to the endpoint's item pointer.
pub(crate) fn items_of(ep: &EndpointDescriptor, doc: &Value) -> Vec<Value> {
    match &ep.items {
        Some(ptr) => match doc.pointer(ptr) {
            Some(Value::Array(a)) => a.clone(),
            Some(Value::Null) | None => Vec::new(),
            Some(other) => vec![other.clone()],
        },
        None => vec![doc.clone()],
    }
}

/// Records derived from one archived response. Live acquisition and replay
/// both go through here, so they agree by construction.
pub fn response_records(
    ep: &EndpointDescriptor,
    seq: u64,
    content_type: &str,
    body: &[u8],
) -> Result<Vec<Record>, CloudError> {
    let source = format!("acq:{seq}");
    if ep.response == ResponseClass::Binary {
        let mut f = Map::new();
        f.insert("sha256".into(), Value::String(sha256_hex(body)));
        f.insert("size".into(), Value::from(body.len() as u64));
        f.insert("content_type".into(), Value::String(content_type.to_string()));
        return Ok(vec![Record::new(&ep.id, &source, "blob".into(), f)]);
    }
    let doc: Value = serde_json::from_slice(body).map_err(|e| CloudError::Parse {
        endpoint: ep.id.clone(),
        message: e.to_string(),
    })?;
    let items = items_of(ep, &doc);
    let locator = |i: usize| if ep.items.is_some() { format!("item={i}") } else { "document".into() };
    Ok(items
        .into_iter()
        .enumerate()
        .map(|(i, item)| {
            let fields = match item {
                Value::Object(m) => m,
                other => {
                    let mut m = Map::new();
                    m.insert("value".into(), other);
                    m
                }
            };
            Record::new(&ep.id, &source, locator(i), fields)
        })
        .collect())
}
