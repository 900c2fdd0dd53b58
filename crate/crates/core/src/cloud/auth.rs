use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{AuthMethod, CloudError, CsrfConfig, EndpointConfig, HttpRequest, Transport};

#[derive(Clone, PartialEq, Eq)]
pub struct Issued<T> {
    pub value: T,
    pub issued_at: i64,
    pub expires_at: i64,
}

impl<T> Issued<T> {
    pub fn valid_at(&self, now: i64) -> bool {
        now < self.expires_at
    }
}

pub type CookieJar = Vec<(String, String)>;

/// Credentials derived from one refresh token.
pub struct AuthState {
    refresh_token: String,
    pub access_token: Option<Issued<String>>,
    pub cookies: Option<Issued<CookieJar>>,
    /// Successful exchanges so far, by kind.
    pub access_exchanges: u32,
    pub cookie_exchanges: u32,
}

impl std::fmt::Debug for AuthState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AuthState")
            .field("access_expires_at", &self.access_token.as_ref().map(|t| t.expires_at))
            .field("cookies_expire_at", &self.cookies.as_ref().map(|t| t.expires_at))
            .field("access_exchanges", &self.access_exchanges)
            .field("cookie_exchanges", &self.cookie_exchanges)
            .finish_non_exhaustive()
    }
}

/// A credential ready to attach to exactly one request form.
#[derive(Clone, PartialEq, Eq)]
pub enum Credential {
    Bearer(String),
    AmzToken(String),
    Cookies(CookieJar),
}

impl std::fmt::Debug for Credential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self {
            Credential::Bearer(_) => "Bearer",
            Credential::AmzToken(_) => "AmzToken",
            Credential::Cookies(_) => "Cookies",
        };
        write!(f, "Credential::{kind}(<redacted>)")
    }
}

impl Credential {
    pub fn method(&self) -> AuthMethod {
        match self {
            Credential::Bearer(_) => AuthMethod::BearerAuthorizationHeader,
            Credential::AmzToken(_) => AuthMethod::AmzAccessTokenHeader,
            Credential::Cookies(_) => AuthMethod::SessionCookies,
        }
    }

    /// Headers carrying this credential. With `csrf`, a cookie of that name
    /// is echoed into its header.
    pub fn headers(&self, csrf: Option<&CsrfConfig>) -> Vec<(String, String)> {
        match self {
            Credential::Bearer(t) => vec![("Authorization".into(), format!("Bearer {t}"))],
            Credential::AmzToken(t) => vec![("X-Amz-Access-Token".into(), t.clone())],
            Credential::Cookies(jar) => {
                let cookie = jar.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join("; ");
                let mut h = vec![("Cookie".to_string(), cookie)];
                if let Some(c) = csrf {
                    if let Some((_, v)) = jar.iter().find(|(k, _)| *k == c.cookie) {
                        h.push((c.header.clone(), v.clone()));
                    }
                }
                h
            }
        }
    }
}

/// Outcome of one token-endpoint call, for the acquisition log.
pub struct ExchangeTrace {
    pub request: HttpRequest,
    pub status: u16,
    pub body_len: usize,
}

impl AuthState {
    pub fn new(refresh_token: impl Into<String>) -> Self {
        AuthState {
            refresh_token: refresh_token.into(),
            access_token: None,
            cookies: None,
            access_exchanges: 0,
            cookie_exchanges: 0,
        }
    }

    /// Forget the cached credential `method` uses, e.g. after the server
    /// stopped accepting it.
    pub fn invalidate(&mut self, method: AuthMethod) {
        match method {
            AuthMethod::BearerAuthorizationHeader | AuthMethod::AmzAccessTokenHeader => self.access_token = None,
            AuthMethod::SessionCookies => self.cookies = None,
        }
    }

    fn exchange(
        &self,
        cfg: &EndpointConfig,
        transport: &dyn Transport,
        want_cookies: bool,
        trace: &mut Vec<ExchangeTrace>,
    ) -> Result<Value, CloudError> {
        let te = &cfg.token_exchange;
        let kind = if want_cookies { &te.cookies_type } else { &te.access_token_type };
        let body = url::form_urlencoded::Serializer::new(String::new())
            .append_pair(&te.source_token_field, &self.refresh_token)
            .append_pair(&te.type_field, kind)
            .finish();
        let req = HttpRequest {
            method: "POST".into(),
            host: te.host.clone(),
            path_and_query: te.path.clone(),
            headers: vec![("Content-Type".into(), "application/x-www-form-urlencoded".into())],
            body: body.into_bytes(),
        };
        let resp = transport.send(&req)?;
        trace.push(ExchangeTrace {
            request: HttpRequest {
                body: Vec::new(),
                ..req
            },
            status: resp.status,
            body_len: resp.body.len(),
        });
        if resp.status != 200 {
            return Err(CloudError::RefreshRejected {
                status: resp.status,
                body: String::from_utf8_lossy(&resp.body).chars().take(512).collect(),
            });
        }
        serde_json::from_slice(&resp.body).map_err(|e| CloudError::Parse {
            endpoint: "token-exchange".into(),
            message: e.to_string(),
        })
    }

    /// An unexpired credential for `method`, exchanging the refresh token
    /// only when none is cached.
    pub fn ensure_credentials(
        &mut self,
        cfg: &EndpointConfig,
        transport: &dyn Transport,
        method: AuthMethod,
        now: i64,
        trace: &mut Vec<ExchangeTrace>,
    ) -> Result<Credential, CloudError> {
        let expiry = |lifetime: i64, v: &Value| {
            let declared = v.get("expires_in").and_then(Value::as_i64).map(|s| s * 1000);
            now + declared.map_or(lifetime, |d| d.min(lifetime))
        };
        match method {
            AuthMethod::BearerAuthorizationHeader | AuthMethod::AmzAccessTokenHeader => {
                if !self.access_token.as_ref().is_some_and(|t| t.valid_at(now)) {
                    let v = self.exchange(cfg, transport, false, trace)?;
                    let token = v
                        .get("access_token")
                        .and_then(Value::as_str)
                        .ok_or_else(|| CloudError::Parse {
                            endpoint: "token-exchange".into(),
                            message: "no access_token in response".into(),
                        })?
                        .to_string();
                    self.access_token = Some(Issued {
                        value: token,
                        issued_at: now,
                        expires_at: expiry(cfg.lifetimes_ms.access_token, &v),
                    });
                    self.access_exchanges += 1;
                }
                let t = self.access_token.as_ref().unwrap().value.clone();
                Ok(if method == AuthMethod::BearerAuthorizationHeader {
                    Credential::Bearer(t)
                } else {
                    Credential::AmzToken(t)
                })
            }
            AuthMethod::SessionCookies => {
                if !self.cookies.as_ref().is_some_and(|c| c.valid_at(now)) {
                    let v = self.exchange(cfg, transport, true, trace)?;
                    let jar: CookieJar = v
                        .get("cookies")
                        .and_then(Value::as_array)
                        .ok_or_else(|| CloudError::Parse {
                            endpoint: "token-exchange".into(),
                            message: "no cookies in response".into(),
                        })?
                        .iter()
                        .filter_map(|c| Some((c.get("name")?.as_str()?.to_string(), c.get("value")?.as_str()?.to_string())))
                        .collect();
                    self.cookies = Some(Issued {
                        value: jar,
                        issued_at: now,
                        expires_at: expiry(cfg.lifetimes_ms.cookies, &v),
                    });
                    self.cookie_exchanges += 1;
                }
                Ok(Credential::Cookies(self.cookies.as_ref().unwrap().value.clone()))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExchangeCounts {
    pub access_token: u32,
    pub cookies: u32,
}
