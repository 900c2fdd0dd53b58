//! AES-CBC with PKCS#7 padding over `IV || ciphertext` blobs.
//!
//! PKCS#5 and PKCS#7 are the same scheme for 16-byte blocks.

use aes::cipher::generic_array::GenericArray;
use aes::cipher::{BlockDecrypt, BlockEncrypt, KeyInit};
use aes::{Aes128, Aes192, Aes256};
use base64::Engine;

use super::VaultError;

pub const BLOCK: usize = 16;
pub const IV_LEN: usize = 16;

/// AES key decoded from the token store.
#[derive(Clone, PartialEq, Eq)]
pub struct EncryptionSecret {
    raw_key: Vec<u8>,
}

impl std::fmt::Debug for EncryptionSecret {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "EncryptionSecret(<{} bytes>)", self.raw_key.len())
    }
}

impl EncryptionSecret {
    pub fn from_bytes(raw_key: Vec<u8>) -> Result<Self, VaultError> {
        match raw_key.len() {
            16 | 24 | 32 => Ok(EncryptionSecret { raw_key }),
            n => Err(VaultError::Secret(format!(
                "decoded key is {n} bytes, AES needs 16, 24 or 32"
            ))),
        }
    }

    pub fn from_base64(text: &str) -> Result<Self, VaultError> {
        let raw = base64::engine::general_purpose::STANDARD
            .decode(text.trim())
            .map_err(|e| VaultError::Secret(format!("key_encryption_secret is not base64: {e}")))?;
        Self::from_bytes(raw)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.raw_key
    }

    pub fn to_base64(&self) -> String {
        base64::engine::general_purpose::STANDARD.encode(&self.raw_key)
    }

    fn cipher(&self) -> Cipher {
        match self.raw_key.len() {
            16 => Cipher::A128(Aes128::new_from_slice(&self.raw_key).unwrap()),
            24 => Cipher::A192(Aes192::new_from_slice(&self.raw_key).unwrap()),
            _ => Cipher::A256(Aes256::new_from_slice(&self.raw_key).unwrap()),
        }
    }
}

enum Cipher {
    A128(Aes128),
    A192(Aes192),
    A256(Aes256),
}

impl Cipher {
    fn decrypt(&self, block: &mut [u8]) {
        let b = GenericArray::from_mut_slice(block);
        match self {
            Cipher::A128(c) => c.decrypt_block(b),
            Cipher::A192(c) => c.decrypt_block(b),
            Cipher::A256(c) => c.decrypt_block(b),
        }
    }

    fn encrypt(&self, block: &mut [u8]) {
        let b = GenericArray::from_mut_slice(block);
        match self {
            Cipher::A128(c) => c.encrypt_block(b),
            Cipher::A192(c) => c.encrypt_block(b),
            Cipher::A256(c) => c.encrypt_block(b),
        }
    }
}

/// Decrypt a stored blob: the first 16 bytes are the IV, the rest is
/// CBC ciphertext whose padding is validated and stripped.
pub fn decrypt_value(blob: &[u8], secret: &EncryptionSecret) -> Result<Vec<u8>, VaultError> {
    if blob.len() < IV_LEN + BLOCK || (blob.len() - IV_LEN) % BLOCK != 0 {
        return Err(VaultError::Length(blob.len()));
    }
    let cipher = secret.cipher();
    let (iv, body) = blob.split_at(IV_LEN);
    let mut out = body.to_vec();
    let mut prev: [u8; BLOCK] = iv.try_into().unwrap();
    for chunk in out.chunks_exact_mut(BLOCK) {
        let saved: [u8; BLOCK] = (&*chunk).try_into().unwrap();
        cipher.decrypt(chunk);
        for (p, c) in chunk.iter_mut().zip(prev) {
            *p ^= c;
        }
        prev = saved;
    }
    let pad = *out.last().unwrap() as usize;
    if pad == 0 || pad > BLOCK || !out[out.len() - pad..].iter().all(|&b| b as usize == pad) {
        return Err(VaultError::Padding);
    }
    out.truncate(out.len() - pad);
    Ok(out)
}

/// Inverse of [`decrypt_value`]; returns `IV || ciphertext`.
pub fn encrypt_value(plaintext: &[u8], secret: &EncryptionSecret, iv: [u8; IV_LEN]) -> Vec<u8> {
    let cipher = secret.cipher();
    let pad = BLOCK - plaintext.len() % BLOCK;
    let mut body = plaintext.to_vec();
    body.extend(std::iter::repeat(pad as u8).take(pad));
    let mut prev = iv;
    for chunk in body.chunks_exact_mut(BLOCK) {
        for (p, c) in chunk.iter_mut().zip(prev) {
            *p ^= c;
        }
        cipher.encrypt(chunk);
        prev = (&*chunk).try_into().unwrap();
    }
    let mut blob = iv.to_vec();
    blob.extend(body);
    blob
}

/// Stored values may be raw bytes or base64 text of them. Base64 wins when
/// the text decodes to a plausible blob length.
pub fn unwrap_blob(stored: &[u8]) -> Vec<u8> {
    let trimmed = stored.trim_ascii();
    let looks_b64 = !trimmed.is_empty()
        && trimmed
            .iter()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, b'+' | b'/' | b'='));
    if looks_b64 {
        if let Ok(raw) = base64::engine::general_purpose::STANDARD.decode(trimmed) {
            if raw.len() >= IV_LEN + BLOCK && (raw.len() - IV_LEN) % BLOCK == 0 {
                return raw;
            }
        }
    }
    stored.to_vec()
}
