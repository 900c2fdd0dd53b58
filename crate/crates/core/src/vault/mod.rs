//! Token-store loading and credential decryption.

mod cipher;
mod store;

pub use cipher::{decrypt_value, encrypt_value, unwrap_blob, EncryptionSecret, BLOCK, IV_LEN};
pub use store::{
    link_accounts, load_store_v1, load_store_v2, recover_tokens, AccountLink, AccountRow, LinkReport, StoreV2,
    StoreVersion, TokenClass, TokenRecord, ACQUISITION_TOKEN, SECRET_KEY,
};

#[derive(Debug, thiserror::Error)]
pub enum VaultError {
    #[error("schema: {0}")]
    Schema(String),
    #[error("secret: {0}")]
    Secret(String),
    #[error("ciphertext of {0} bytes is not IV + a positive multiple of 16")]
    Length(usize),
    #[error("padding check failed (wrong key or corrupt blob)")]
    Padding,
    #[error("sqlite: {0}")]
    Sqlite(#[from] rusqlite::Error),
}
