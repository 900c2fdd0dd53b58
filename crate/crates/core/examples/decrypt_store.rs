//! Recover the tokens of a synthetic device's credential store. Secrets stay
//! redacted unless `--reveal` is passed.
//!
//! ```bash
//! cargo run --example decrypt_store -- --reveal
//! ```

use echoshow::report::{cmd_decrypt, DecryptArgs};
use echoshow::synth::write_device_tree;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reveal = std::env::args().any(|a| a == "--reveal");
    let dir = tempfile_dir()?;
    let tree = write_device_tree(&dir, 3)?;
    let db = tree.root.join("data/com.amazon.imp/databases/map_data_storage_v2.db");

    let m = cmd_decrypt(&DecryptArgs { db, v1: false, reveal, out: None })?;
    println!("store {:?}, AES-{}", m.store_version, m.key_bits.unwrap_or(0));
    for t in &m.tokens {
        let value = t.value.as_deref().unwrap_or("<redacted>");
        let mark = if t.acquisition_credential { "*" } else { " " };
        println!("{mark} {:<40} {:?} {}", t.key, t.class, value);
    }
    for l in &m.links {
        println!("link {} -> {}", l.person_id, l.directed_id);
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

fn tempfile_dir() -> std::io::Result<std::path::PathBuf> {
    let dir = std::env::temp_dir().join(format!("echoshow-decrypt-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}
