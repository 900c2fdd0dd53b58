//! Android XML stores: `WifiConfigStore.xml` and `shared_prefs/*.xml`.

use std::collections::BTreeMap;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ArtifactError;

fn attr(e: &BytesStart<'_>, name: &str) -> Result<Option<String>, ArtifactError> {
    for a in e.attributes() {
        let a = a.map_err(|e| ArtifactError::Xml(e.to_string()))?;
        if a.key.as_ref() == name.as_bytes() {
            let v = a.unescape_value().map_err(|e| ArtifactError::Xml(e.to_string()))?;
            return Ok(Some(v.into_owned()));
        }
    }
    Ok(None)
}

/// Walk every event, tracking depth so that truncated documents are errors.
fn walk(text: &str, mut on: impl FnMut(XmlEvent<'_>) -> Result<(), ArtifactError>) -> Result<(), ArtifactError> {
    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(true);
    let mut depth = 0usize;
    let mut seen_root = false;
    loop {
        match reader.read_event() {
            Ok(Event::Start(e)) => {
                depth += 1;
                seen_root = true;
                on(XmlEvent::Start(&e))?;
            }
            Ok(Event::Empty(e)) => {
                seen_root = true;
                on(XmlEvent::Start(&e))?;
                on(XmlEvent::End(e.name().as_ref()))?;
            }
            Ok(Event::End(e)) => {
                depth = depth.saturating_sub(1);
                on(XmlEvent::End(e.name().as_ref()))?;
            }
            Ok(Event::Text(t)) => {
                let s = t.unescape().map_err(|e| ArtifactError::Xml(e.to_string()))?;
                on(XmlEvent::Text(&s))?;
            }
            Ok(Event::CData(t)) => on(XmlEvent::Text(&String::from_utf8_lossy(&t)))?,
            Ok(Event::Eof) => break,
            Ok(_) => {}
            Err(e) => {
                return Err(ArtifactError::Xml(format!(
                    "at byte {}: {e}",
                    reader.buffer_position()
                )))
            }
        }
    }
    if depth != 0 {
        return Err(ArtifactError::Xml("document ends inside an element".into()));
    }
    if !seen_root {
        return Err(ArtifactError::Xml("no root element".into()));
    }
    Ok(())
}

enum XmlEvent<'a> {
    Start(&'a BytesStart<'a>),
    End(&'a [u8]),
    Text(&'a str),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WifiCredential {
    pub ssid: String,
    pub psk_or_key: String,
    pub security: String,
}

fn unquote(s: &str) -> String {
    s.strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .unwrap_or(s)
        .to_string()
}

#[derive(Default)]
struct NetworkDraft {
    ssid: Option<String>,
    config_key: Option<String>,
    psk: Option<String>,
    wep_keys: Vec<String>,
    key_mgmt: Option<String>,
}

impl NetworkDraft {
    /// Security from the ConfigKey suffix, then the key-management bitset,
    /// then whichever secret is present.
    fn security(&self, ssid: &str) -> String {
        if let Some(ck) = &self.config_key {
            let quoted = format!("\"{ssid}\"");
            if let Some(rest) = ck.strip_prefix(&quoted) {
                if !rest.is_empty() {
                    return rest.to_string();
                }
            }
        }
        if let Some(bits) = self.key_mgmt.as_deref().and_then(|h| hex::decode(h.trim()).ok()) {
            let bit = |n: usize| bits.get(n / 8).is_some_and(|b| b & (1 << (n % 8)) != 0);
            for (n, name) in [(8, "SAE"), (2, "WPA_EAP"), (3, "IEEE8021X"), (1, "WPA_PSK")] {
                if bit(n) {
                    return name.to_string();
                }
            }
            if bit(0) && self.wep_keys.is_empty() && self.psk.is_none() {
                return "NONE".to_string();
            }
        }
        if self.psk.is_some() {
            "WPA_PSK".into()
        } else if !self.wep_keys.is_empty() {
            "WEP".into()
        } else {
            "NONE".into()
        }
    }

    fn finish(self) -> Option<WifiCredential> {
        let ssid = unquote(self.ssid.as_deref()?);
        if ssid.is_empty() {
            return None;
        }
        let security = self.security(&ssid);
        let key = self
            .psk
            .as_deref()
            .map(unquote)
            .or_else(|| self.wep_keys.first().map(|k| unquote(k)))
            .unwrap_or_default();
        Some(WifiCredential {
            ssid,
            psk_or_key: key,
            security,
        })
    }
}

/// One credential per `<WifiConfiguration>` block with a non-empty SSID.
pub fn parse_wifi_config(text: &str) -> Result<Vec<WifiCredential>, ArtifactError> {
    let mut out = Vec::new();
    let mut draft: Option<NetworkDraft> = None;
    let mut field: Option<String> = None;
    let mut in_wep = false;
    walk(text, |ev| {
        match ev {
            XmlEvent::Start(e) => match e.name().as_ref() {
                b"WifiConfiguration" => draft = Some(NetworkDraft::default()),
                b"string" | b"byte-array" if draft.is_some() => field = attr(e, "name")?,
                b"string-array" if draft.is_some() => in_wep = attr(e, "name")?.as_deref() == Some("WEPKeys"),
                b"item" if in_wep => {
                    if let (Some(d), Some(v)) = (draft.as_mut(), attr(e, "value")?) {
                        if !v.is_empty() {
                            d.wep_keys.push(v);
                        }
                    }
                }
                _ => {}
            },
            XmlEvent::Text(t) => {
                if let (Some(d), Some(f)) = (draft.as_mut(), field.as_deref()) {
                    let slot = match f {
                        "SSID" => &mut d.ssid,
                        "ConfigKey" => &mut d.config_key,
                        "PreSharedKey" => &mut d.psk,
                        "AllowedKeyMgmt" => &mut d.key_mgmt,
                        _ => return Ok(()),
                    };
                    *slot = Some(t.to_string());
                }
            }
            XmlEvent::End(name) => match name {
                b"WifiConfiguration" => {
                    if let Some(c) = draft.take().and_then(NetworkDraft::finish) {
                        out.push(c);
                    }
                }
                b"string" | b"byte-array" => field = None,
                b"string-array" => in_wep = false,
                _ => {}
            },
        }
        Ok(())
    })?;
    Ok(out)
}

/// One `shared_prefs` entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefEntry {
    pub key: String,
    /// Element name: string, long, int, float, boolean or set.
    #[serde(rename = "type")]
    pub kind: String,
    pub value: Value,
}

/// Parse an Android `<map>` preferences file, in document order.
pub fn parse_shared_prefs(text: &str) -> Result<Vec<PrefEntry>, ArtifactError> {
    let mut out = Vec::new();
    let mut current: Option<(String, String, Option<String>)> = None;
    let mut set: Option<(String, Vec<Value>)> = None;
    let mut in_set_string = false;
    let mut saw_map = false;
    walk(text, |ev| {
        match ev {
            XmlEvent::Start(e) => {
                let tag = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                match tag.as_str() {
                    "map" => saw_map = true,
                    "set" => set = Some((attr(e, "name")?.unwrap_or_default(), Vec::new())),
                    "string" if set.is_some() => in_set_string = true,
                    "string" | "long" | "int" | "float" | "boolean" => {
                        let name = attr(e, "name")?
                            .ok_or_else(|| ArtifactError::Xml(format!("<{tag}> without name")))?;
                        current = Some((name, tag, attr(e, "value")?));
                    }
                    _ => {}
                }
            }
            XmlEvent::Text(t) => {
                if in_set_string {
                    if let Some((_, items)) = set.as_mut() {
                        items.push(Value::String(t.to_string()));
                    }
                } else if let Some((_, _, v)) = current.as_mut() {
                    *v = Some(t.to_string());
                }
            }
            XmlEvent::End(name) => match name {
                b"set" => {
                    if let Some((key, items)) = set.take() {
                        out.push(PrefEntry {
                            key,
                            kind: "set".into(),
                            value: Value::Array(items),
                        });
                    }
                }
                b"string" if in_set_string => in_set_string = false,
                _ => {
                    if let Some((key, kind, raw)) = current.take() {
                        let raw = raw.unwrap_or_default();
                        let value = match kind.as_str() {
                            "long" | "int" => raw.parse::<i64>().map(Value::from).unwrap_or(Value::String(raw)),
                            "float" => raw
                                .parse::<f64>()
                                .ok()
                                .and_then(|f| serde_json::Number::from_f64(f).map(Value::Number))
                                .unwrap_or(Value::String(raw)),
                            "boolean" => raw.parse::<bool>().map(Value::Bool).unwrap_or(Value::String(raw)),
                            _ => Value::String(raw),
                        };
                        out.push(PrefEntry { key, kind, value });
                    }
                }
            },
        }
        Ok(())
    })?;
    if !saw_map {
        return Err(ArtifactError::Schema("shared_prefs file has no <map> root".into()));
    }
    Ok(out)
}

/// Flatten prefs into a key → value map; later duplicates win.
pub fn prefs_map(entries: &[PrefEntry]) -> BTreeMap<String, Value> {
    entries.iter().map(|e| (e.key.clone(), e.value.clone())).collect()
}
