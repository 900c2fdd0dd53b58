use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::CloudError;

pub const ENDPOINTS_JSON: &str = include_str!("endpoints.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthMethod {
    /// `Authorization: Bearer <access token>`
    BearerAuthorizationHeader,
    /// `X-Amz-Access-Token: <access token>`
    AmzAccessTokenHeader,
    /// Session cookie jar.
    SessionCookies,
}

/// Credential form required by `host`. Unknown hosts are an error, never a
/// guess.
pub fn auth_for_host(host: &str) -> Result<AuthMethod, CloudError> {
    let h = host.trim().trim_end_matches('.').to_ascii_lowercase();
    let h = h.split(':').next().unwrap_or("");
    let routing = || CloudError::Routing(host.to_string());
    if h.is_empty() {
        return Err(routing());
    }
    match h {
        "api.amazon.com" | "api.amazonalexa.com" => return Ok(AuthMethod::BearerAuthorizationHeader),
        "alexa-comms-mobile-service.amazon.com" => return Ok(AuthMethod::SessionCookies),
        "cdws.eu-west-1.amazonaws.com" | "drive.amazonaws.com" => return Ok(AuthMethod::AmzAccessTokenHeader),
        _ => {}
    }
    // regional content hosts of the drive service
    if h.ends_with(".drive.amazonaws.com") {
        return Ok(AuthMethod::AmzAccessTokenHeader);
    }
    for sub in ["alexa.amazon.", "skills-store.amazon.", "www.amazon."] {
        if let Some(tld) = h.strip_prefix(sub) {
            if is_marketplace_tld(tld) {
                return Ok(AuthMethod::SessionCookies);
            }
        }
    }
    Err(routing())
}

/// `com`, `de`, `co.uk`, `com.au`, ...
fn is_marketplace_tld(tld: &str) -> bool {
    let labels: Vec<&str> = tld.split('.').collect();
    let alpha = |s: &str, n: std::ops::RangeInclusive<usize>| n.contains(&s.len()) && s.bytes().all(|b| b.is_ascii_lowercase());
    match labels.as_slice() {
        [one] => alpha(one, 2..=3),
        ["co" | "com", cc] => alpha(cc, 2..=2),
        _ => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseClass {
    #[default]
    Json,
    Binary,
    #[serde(rename = "graphql")]
    GraphQl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamLocation {
    Path,
    Query,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    /// Semantic type: an ID kind, `timestamp_ms`, `utteranceId` or `opaque`.
    #[serde(rename = "type")]
    pub semantic: String,
    #[serde(rename = "in")]
    pub location: ParamLocation,
    #[serde(default = "yes")]
    pub required: bool,
}

fn yes() -> bool {
    true
}

fn get() -> String {
    "GET".into()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pagination {
    pub cursor_param: String,
    /// JSON pointer to the next cursor; absent or null ends the listing.
    pub cursor_field: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: String,
    pub end: String,
    /// Item field compared against `[start, end)`.
    pub field: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineHint {
    pub source: String,
    pub kind: String,
    pub time_field: String,
    pub summary_field: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointDescriptor {
    pub id: String,
    pub host: String,
    #[serde(default = "get")]
    pub method: String,
    /// Path with `{param}` slots.
    pub path: String,
    pub auth: AuthMethod,
    #[serde(default)]
    pub params: Vec<ParamSpec>,
    #[serde(default)]
    pub fixed_query: BTreeMap<String, String>,
    #[serde(default)]
    pub response: ResponseClass,
    /// JSON pointer to the item array ("" = the document itself).
    #[serde(default)]
    pub items: Option<String>,
    #[serde(default)]
    pub pagination: Option<Pagination>,
    #[serde(default)]
    pub window: Option<Window>,
    /// Parameter name → item field whose values feed later requests.
    #[serde(default)]
    pub yields: BTreeMap<String, String>,
    #[serde(default)]
    pub timeline: Option<TimelineHint>,
    /// Request body for POST endpoints.
    #[serde(default)]
    pub body: Option<Value>,
    /// Parameter that selects among keyed fixtures in the mock.
    #[serde(default)]
    pub fixture_key: Option<String>,
    #[serde(default)]
    pub csrf: bool,
}

impl EndpointDescriptor {
    pub fn slots(&self) -> Vec<&str> {
        let mut out = Vec::new();
        let mut rest = self.path.as_str();
        while let Some(open) = rest.find('{') {
            let Some(close) = rest[open..].find('}') else { break };
            out.push(&rest[open + 1..open + close]);
            rest = &rest[open + close + 1..];
        }
        out
    }

    pub fn required_params(&self) -> impl Iterator<Item = &ParamSpec> {
        self.params.iter().filter(|p| p.required)
    }

    /// `{host}{path}` as written in the catalog.
    pub fn display_url(&self) -> String {
        format!("{}{}", self.host, self.path)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenExchange {
    pub host: String,
    pub path: String,
    pub source_token_field: String,
    pub type_field: String,
    pub access_token_type: String,
    pub cookies_type: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lifetimes {
    pub access_token: i64,
    pub cookies: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsrfConfig {
    pub cookie: String,
    pub header: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeprecatedRoute {
    pub host: String,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub version: u32,
    pub marketplace: String,
    pub token_exchange: TokenExchange,
    pub lifetimes_ms: Lifetimes,
    pub csrf: CsrfConfig,
    pub page_size: usize,
    pub deprecated: Vec<DeprecatedRoute>,
    pub endpoints: Vec<EndpointDescriptor>,
}

impl EndpointConfig {
    pub fn parse(text: &str) -> Result<Self, CloudError> {
        let cfg: EndpointConfig =
            serde_json::from_str(text).map_err(|e| CloudError::Config(format!("endpoint catalog: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn builtin() -> &'static EndpointConfig {
        static CFG: OnceLock<EndpointConfig> = OnceLock::new();
        CFG.get_or_init(|| EndpointConfig::parse(ENDPOINTS_JSON).expect("bundled endpoint catalog is valid"))
    }

    pub fn endpoint(&self, id: &str) -> Option<&EndpointDescriptor> {
        self.endpoints.iter().find(|e| e.id == id)
    }

    /// Unique ids, every path slot declared as a path param, and the declared
    /// auth agreeing with the host routing.
    pub fn validate(&self) -> Result<(), CloudError> {
        let bad = |m: String| Err(CloudError::Config(m));
        let mut ids = BTreeSet::new();
        for e in &self.endpoints {
            if !ids.insert(e.id.as_str()) {
                return bad(format!("duplicate endpoint id {}", e.id));
            }
            for s in e.slots() {
                if !e.params.iter().any(|p| p.name == s && p.location == ParamLocation::Path) {
                    return bad(format!("{}: slot {{{s}}} has no path param", e.id));
                }
            }
            for p in e.params.iter().filter(|p| p.location == ParamLocation::Path) {
                if !e.slots().contains(&p.name.as_str()) {
                    return bad(format!("{}: path param {} has no slot", e.id, p.name));
                }
            }
            match auth_for_host(&e.host) {
                Ok(a) if a == e.auth => {}
                Ok(a) => return bad(format!("{}: declared {:?} but host routes to {a:?}", e.id, e.auth)),
                Err(err) => return bad(format!("{}: {err}", e.id)),
            }
        }
        Ok(())
    }

    /// Copy with cookie-host marketplaces rewritten (`amazon.de` → `amazon.{tld}`).
    pub fn with_marketplace(&self, tld: &str) -> Result<EndpointConfig, CloudError> {
        if !is_marketplace_tld(tld) {
            return Err(CloudError::Config(format!("invalid marketplace {tld:?}")));
        }
        let mut cfg = self.clone();
        let from = format!(".amazon.{}", self.marketplace);
        for e in &mut cfg.endpoints {
            if e.auth == AuthMethod::SessionCookies && e.host.ends_with(&from) {
                let stem = &e.host[..e.host.len() - from.len()];
                e.host = format!("{stem}.amazon.{tld}");
            }
        }
        cfg.marketplace = tld.to_string();
        cfg.validate()?;
        Ok(cfg)
    }
}

/// The bundled catalog's endpoints.
pub fn endpoint_catalog() -> &'static [EndpointDescriptor] {
    &EndpointConfig::builtin().endpoints
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn routing_table() {
        use AuthMethod::*;
        assert_eq!(auth_for_host("api.amazon.com").unwrap(), BearerAuthorizationHeader);
        assert_eq!(auth_for_host("api.amazonalexa.com").unwrap(), BearerAuthorizationHeader);
        assert_eq!(auth_for_host("drive.amazonaws.com").unwrap(), AmzAccessTokenHeader);
        assert_eq!(auth_for_host("alexa.amazon.co.uk").unwrap(), SessionCookies);
        assert_eq!(auth_for_host("WWW.Amazon.DE").unwrap(), SessionCookies);
        for h in ["example.org", "", "api.amazon.de", "amazon.de", "evil-alexa.amazon.de.example", "alexa.amazon.d3"] {
            assert!(matches!(auth_for_host(h), Err(CloudError::Routing(_))), "{h}");
        }
    }

    #[test]
    fn bundled_catalog() {
        let cfg = EndpointConfig::builtin();
        assert_eq!(cfg.endpoints.len(), 30);
        let audio = cfg.endpoint("voice-audio").unwrap();
        assert_eq!(audio.host, "www.amazon.de");
        assert_eq!(audio.params[0].name, "uid");
        assert!(cfg.endpoints.iter().all(|e| e.path != "/api/wifi/configs"));
    }

    #[test]
    fn marketplace_rewrite() {
        let com = EndpointConfig::builtin().with_marketplace("com").unwrap();
        assert_eq!(com.endpoint("users-me").unwrap().host, "alexa.amazon.com");
        assert_eq!(com.endpoint("user-profile").unwrap().host, "api.amazon.com");
        assert!(EndpointConfig::builtin().with_marketplace("x.y.z").is_err());
    }
}
