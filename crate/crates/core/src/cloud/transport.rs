use std::io::Read;
use std::net::IpAddr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use url::Url;

use super::CloudError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpRequest {
    pub method: String,
    /// Logical vendor host; sent as the `Host` header.
    pub host: String,
    pub path_and_query: String,
    pub headers: Vec<(String, String)>,
    #[serde(default)]
    pub body: Vec<u8>,
}

impl HttpRequest {
    pub fn get(host: &str, path_and_query: &str) -> Self {
        HttpRequest {
            method: "GET".into(),
            host: host.into(),
            path_and_query: path_and_query.into(),
            headers: Vec::new(),
            body: Vec::new(),
        }
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn path(&self) -> &str {
        self.path_and_query.split('?').next().unwrap_or("")
    }

    pub fn query(&self) -> Vec<(String, String)> {
        match self.path_and_query.split_once('?') {
            Some((_, q)) => url::form_urlencoded::parse(q.as_bytes()).into_owned().collect(),
            None => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpResponse {
    pub status: u16,
    pub content_type: String,
    pub body: Vec<u8>,
}

impl HttpResponse {
    pub fn json(status: u16, v: &serde_json::Value) -> Self {
        HttpResponse {
            status,
            content_type: "application/json".into(),
            body: serde_json::to_vec(v).expect("json value serializes"),
        }
    }

    pub fn text(status: u16, s: &str) -> Self {
        HttpResponse {
            status,
            content_type: "text/plain".into(),
            body: s.as_bytes().to_vec(),
        }
    }

    pub fn binary(status: u16, content_type: &str, body: Vec<u8>) -> Self {
        HttpResponse {
            status,
            content_type: content_type.into(),
            body,
        }
    }
}

/// Sends one request. Implementations must be shareable across threads.
pub trait Transport: Send + Sync {
    fn send(&self, req: &HttpRequest) -> Result<HttpResponse, CloudError>;
}

impl<T: Transport + ?Sized> Transport for std::sync::Arc<T> {
    fn send(&self, req: &HttpRequest) -> Result<HttpResponse, CloudError> {
        (**self).send(req)
    }
}

/// Real HTTP. With a base URL every request goes there, carrying the vendor
/// host in `Host`; without one, `https://{host}` is used, which requires
/// `live`.
pub struct HttpTransport {
    base: Option<Url>,
    agent: ureq::Agent,
}

fn is_loopback(url: &Url) -> bool {
    match url.host() {
        Some(url::Host::Domain(d)) => d.eq_ignore_ascii_case("localhost"),
        Some(url::Host::Ipv4(ip)) => IpAddr::V4(ip).is_loopback(),
        Some(url::Host::Ipv6(ip)) => IpAddr::V6(ip).is_loopback(),
        None => false,
    }
}

impl HttpTransport {
    pub fn new(base: Option<&str>, live: bool) -> Result<Self, CloudError> {
        let base = base
            .map(|b| Url::parse(b).map_err(|e| CloudError::Config(format!("base url {b:?}: {e}"))))
            .transpose()?;
        match &base {
            Some(u) if !is_loopback(u) && !live => {
                return Err(CloudError::Safety(format!(
                    "{u} is not a loopback address; pass --live to contact it"
                )))
            }
            None if !live => {
                return Err(CloudError::Safety(
                    "no base URL override; pass --live to contact vendor hosts".into(),
                ))
            }
            _ => {}
        }
        let agent = ureq::AgentBuilder::new()
            .timeout_connect(Duration::from_secs(10))
            .timeout(Duration::from_secs(60))
            .redirects(0)
            .build();
        Ok(HttpTransport { base, agent })
    }

    fn url_for(&self, req: &HttpRequest) -> Result<Url, CloudError> {
        let text = match &self.base {
            Some(b) => format!("{}{}", b.as_str().trim_end_matches('/'), req.path_and_query),
            None => format!("https://{}{}", req.host, req.path_and_query),
        };
        Url::parse(&text).map_err(|e| CloudError::Transport(format!("{text}: {e}")))
    }
}

impl Transport for HttpTransport {
    fn send(&self, req: &HttpRequest) -> Result<HttpResponse, CloudError> {
        let url = self.url_for(req)?;
        let mut r = self.agent.request_url(&req.method, &url);
        if self.base.is_some() {
            r = r.set("Host", &req.host);
        }
        for (k, v) in &req.headers {
            r = r.set(k, v);
        }
        let result = if req.body.is_empty() && req.method == "GET" {
            r.call()
        } else {
            r.send_bytes(&req.body)
        };
        let resp = match result {
            Ok(resp) => resp,
            Err(ureq::Error::Status(_, resp)) => resp,
            Err(e) => return Err(CloudError::Transport(e.to_string())),
        };
        let status = resp.status();
        let content_type = resp.content_type().to_string();
        let mut body = Vec::new();
        resp.into_reader()
            .take(512 << 20)
            .read_to_end(&mut body)
            .map_err(|e| CloudError::Transport(e.to_string()))?;
        Ok(HttpResponse {
            status,
            content_type,
            body,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refuses_non_loopback_without_live() {
        assert!(matches!(HttpTransport::new(Some("http://10.0.0.1:80"), false), Err(CloudError::Safety(_))));
        assert!(matches!(HttpTransport::new(None, false), Err(CloudError::Safety(_))));
        assert!(HttpTransport::new(Some("http://127.0.0.1:9"), false).is_ok());
        assert!(HttpTransport::new(Some("http://[::1]:9"), false).is_ok());
        assert!(HttpTransport::new(Some("http://localhost:9"), false).is_ok());
    }
}
