//! MAP token stores.
//!
//! V2 (`map_data_storage_v2.db`, encrypted):
//! - `encryption_data(encryption_data_key, encryption_data_value)` with a row
//!   whose key is `key_encryption_secret`; a column of that name is also
//!   accepted.
//! - `account_data(account_data_directed_id, account_data_key,
//!   account_data_value)`. Token rows have `.token.` in the key; the token
//!   name is the last dot-separated segment.
//!
//! V1 (`map_data_storage.db`, plaintext):
//! - `tokens(token_directed_id, token_key, token_value)`.
//!
//! Columns are selected by name, so extra columns and reordering are fine.

use std::collections::BTreeSet;
use std::path::Path;

use rusqlite::Connection;
use serde::{Deserialize, Serialize};

use super::{cipher, EncryptionSecret, VaultError};
use crate::db;
use crate::ids::{find_ids, UserId, UserIdKind};

pub const SECRET_KEY: &str = "key_encryption_secret";
pub const ACQUISITION_TOKEN: &str = "refresh_token";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StoreVersion {
    #[serde(rename = "V1_plain")]
    V1Plain,
    #[serde(rename = "V2_encrypted")]
    V2Encrypted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenClass {
    Refresh,
    Access,
    /// Audience believed to be the Audible API; unconfirmed.
    Adp,
    Cookie,
    /// `privatekey` / `encrypt.key`: purpose unknown, never decrypted.
    OutOfScope,
    Other,
}

impl TokenClass {
    fn of(key: &str, name: &str) -> TokenClass {
        match name {
            "refresh_token" => TokenClass::Refresh,
            "access_token" => TokenClass::Access,
            "adptoken" => TokenClass::Adp,
            "privatekey" | "encrypt.key" => TokenClass::OutOfScope,
            _ if key.contains(".cookie") => TokenClass::Cookie,
            _ => TokenClass::Other,
        }
    }

    pub fn note(self) -> Option<&'static str> {
        match self {
            TokenClass::Adp => Some("conjectural: audience believed to be the Audible API"),
            TokenClass::OutOfScope => Some("purpose uninvestigated; not decrypted"),
            _ => None,
        }
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct TokenRecord {
    pub name: String,
    /// Full `account_data_key` / `token_key`.
    pub key: String,
    pub directed_id: Option<String>,
    pub class: TokenClass,
    pub ciphertext: Option<Vec<u8>>,
    pub plaintext: Option<String>,
    pub store_version: StoreVersion,
    pub error: Option<String>,
    /// Set on `refresh_token` records: the credential cloud acquisition starts from.
    pub acquisition_credential: bool,
}

impl std::fmt::Debug for TokenRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TokenRecord")
            .field("name", &self.name)
            .field("key", &self.key)
            .field("directed_id", &self.directed_id)
            .field("class", &self.class)
            .field("ciphertext_len", &self.ciphertext.as_ref().map(Vec::len))
            .field("plaintext", &self.plaintext.as_ref().map(|_| "<redacted>"))
            .field("store_version", &self.store_version)
            .field("error", &self.error)
            .finish()
    }
}

fn token_name(key: &str) -> String {
    if key.ends_with("encrypt.key") {
        return "encrypt.key".to_string();
    }
    key.rsplit('.').next().unwrap_or(key).to_string()
}

fn is_token_key(key: &str) -> bool {
    key.contains(".token.")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountRow {
    pub directed_id: Option<String>,
    pub key: String,
    /// Raw cell bytes (text or blob).
    #[serde(skip)]
    pub value: Option<Vec<u8>>,
}

#[derive(Debug, Clone)]
pub struct StoreV2 {
    pub secret: EncryptionSecret,
    pub tokens: Vec<TokenRecord>,
    pub account_rows: Vec<AccountRow>,
}

fn require_tables(conn: &Connection, tables: &[&str]) -> Result<(), VaultError> {
    for t in tables {
        if !db::has_table(conn, t)? {
            return Err(VaultError::Schema(format!("missing table {t}")));
        }
    }
    Ok(())
}

fn require_columns(conn: &Connection, table: &str, cols: &[&str]) -> Result<(), VaultError> {
    let have = db::columns(conn, table)?;
    for c in cols {
        if !have.iter().any(|h| h == c) {
            return Err(VaultError::Schema(format!("table {table} lacks column {c}")));
        }
    }
    Ok(())
}

fn read_secret(conn: &Connection) -> Result<EncryptionSecret, VaultError> {
    let cols = db::columns(conn, "encryption_data")?;
    if cols.iter().any(|c| c == SECRET_KEY) {
        let v: Option<String> = conn
            .query_row(
                &format!("SELECT {} FROM encryption_data LIMIT 1", db::quote_ident(SECRET_KEY)),
                [],
                |r| r.get(0),
            )
            .ok()
            .flatten();
        let v = v.ok_or_else(|| VaultError::Secret(format!("{SECRET_KEY} column is empty")))?;
        return EncryptionSecret::from_base64(&v);
    }
    // key/value layout: find the cell equal to the secret's name, take the
    // `*value*` column of that row, else the column after it
    let value_col = cols.iter().position(|c| c.contains("value"));
    let mut stmt = conn.prepare("SELECT * FROM encryption_data")?;
    let mut rows = stmt.query([])?;
    while let Some(row) = rows.next()? {
        for i in 0..cols.len() {
            let is_name = matches!(row.get_ref(i)?, rusqlite::types::ValueRef::Text(t) if t == SECRET_KEY.as_bytes());
            if !is_name {
                continue;
            }
            let vi = value_col.filter(|&v| v != i).unwrap_or(i + 1);
            if vi >= cols.len() {
                break;
            }
            let bytes = db::cell_bytes(row.get_ref(vi)?)
                .ok_or_else(|| VaultError::Secret(format!("{SECRET_KEY} value is NULL")))?;
            return EncryptionSecret::from_base64(&String::from_utf8_lossy(&bytes));
        }
    }
    Err(VaultError::Secret(format!("no {SECRET_KEY} in encryption_data")))
}

/// Load an encrypted (v2) store. Tokens are surfaced still encrypted.
pub fn load_store_v2(path: &Path) -> Result<StoreV2, VaultError> {
    let conn = db::open_readonly(path)?;
    require_tables(&conn, &["encryption_data", "account_data"])?;
    require_columns(
        &conn,
        "account_data",
        &["account_data_directed_id", "account_data_key", "account_data_value"],
    )?;
    let secret = read_secret(&conn)?;

    let mut stmt = conn.prepare(
        "SELECT account_data_directed_id, account_data_key, account_data_value FROM account_data ORDER BY rowid",
    )?;
    let mut account_rows = Vec::new();
    let mut rows = stmt.query([])?;
    while let Some(r) = rows.next()? {
        account_rows.push(AccountRow {
            directed_id: r.get::<_, Option<String>>(0)?,
            key: r.get::<_, Option<String>>(1)?.unwrap_or_default(),
            value: db::cell_bytes(r.get_ref(2)?),
        });
    }

    let tokens = account_rows
        .iter()
        .filter(|row| is_token_key(&row.key))
        .map(|row| {
            let name = token_name(&row.key);
            let class = TokenClass::of(&row.key, &name);
            TokenRecord {
                acquisition_credential: name == ACQUISITION_TOKEN,
                ciphertext: row.value.as_deref().map(cipher::unwrap_blob),
                error: row.value.is_none().then(|| "value is NULL".to_string()),
                name,
                key: row.key.clone(),
                directed_id: row.directed_id.clone(),
                class,
                plaintext: None,
                store_version: StoreVersion::V2Encrypted,
            }
        })
        .collect();
    Ok(StoreV2 {
        secret,
        tokens,
        account_rows,
    })
}

/// Decrypt every token with the store secret. Failures stay on the record.
pub fn recover_tokens(store: &StoreV2) -> Vec<TokenRecord> {
    store
        .tokens
        .iter()
        .map(|t| {
            let mut t = t.clone();
            if t.class == TokenClass::OutOfScope {
                t.error = Some("not attempted: out of scope".into());
                return t;
            }
            let Some(ct) = &t.ciphertext else {
                return t;
            };
            match cipher::decrypt_value(ct, &store.secret) {
                Ok(p) => match String::from_utf8(p) {
                    Ok(s) => {
                        t.plaintext = Some(s);
                        t.error = None;
                    }
                    Err(_) => t.error = Some("decrypted value is not UTF-8".into()),
                },
                Err(e) => t.error = Some(e.to_string()),
            }
            t
        })
        .collect()
}

/// Load a plaintext (v1) store.
pub fn load_store_v1(path: &Path) -> Result<Vec<TokenRecord>, VaultError> {
    let conn = db::open_readonly(path)?;
    require_tables(&conn, &["tokens"])?;
    require_columns(&conn, "tokens", &["token_directed_id", "token_key", "token_value"])?;
    let mut stmt = conn.prepare("SELECT token_directed_id, token_key, token_value FROM tokens ORDER BY rowid")?;
    let mut rows = stmt.query([])?;
    let mut out = Vec::new();
    while let Some(r) = rows.next()? {
        let key = r.get::<_, Option<String>>(1)?.unwrap_or_default();
        let value = db::cell_bytes(r.get_ref(2)?).map(|b| String::from_utf8_lossy(&b).into_owned());
        let name = token_name(&key);
        out.push(TokenRecord {
            class: TokenClass::of(&key, &name),
            acquisition_credential: name == ACQUISITION_TOKEN,
            error: value.is_none().then(|| "value is NULL".to_string()),
            name,
            key,
            directed_id: r.get(0)?,
            ciphertext: None,
            plaintext: value,
            store_version: StoreVersion::V1Plain,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AccountLink {
    pub person_id: UserId,
    pub directed_id: UserId,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkReport {
    pub links: Vec<AccountLink>,
    pub notices: Vec<String>,
}

/// Pair each personId embedded in an `account_data_key` with the row's
/// directedId.
pub fn link_accounts(rows: &[AccountRow]) -> LinkReport {
    let mut links = BTreeSet::new();
    let mut notices = Vec::new();
    for row in rows {
        let persons: Vec<UserId> = find_ids(&row.key)
            .into_iter()
            .filter(|id| id.kind() == UserIdKind::PersonId)
            .collect();
        if persons.is_empty() {
            continue;
        }
        let raw = row.directed_id.as_deref().unwrap_or("");
        let directed = match UserId::new(UserIdKind::DirectedId, raw) {
            Ok(d) => d,
            Err(e) => {
                notices.push(format!("skipped row {:?}: {e}", row.key));
                continue;
            }
        };
        for p in persons {
            links.insert(AccountLink {
                person_id: p,
                directed_id: directed.clone(),
            });
        }
    }
    LinkReport {
        links: links.into_iter().collect(),
        notices,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_names() {
        assert_eq!(token_name("com.amazon.dcp.sso.token.oauth.amazon.refresh_token"), "refresh_token");
        assert_eq!(token_name("com.amazon.dcp.sso.token.device.encrypt.key"), "encrypt.key");
        assert_eq!(TokenClass::of("x.token.device.adptoken", "adptoken"), TokenClass::Adp);
        assert!(TokenClass::Adp.note().unwrap().starts_with("conjectural"));
    }

    #[test]
    fn no_rows_no_links() {
        assert_eq!(link_accounts(&[]), LinkReport::default());
    }
}
