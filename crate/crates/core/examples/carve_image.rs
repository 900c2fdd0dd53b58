//! Build the sparse 16 GiB synthetic eMMC image, split it along the built-in
//! partition table and list what the ext4 scan finds in unmapped space.
//!
//! ```bash
//! cargo run --release --example carve_image -- /tmp/carve
//! ```

use std::path::PathBuf;

use echoshow::report::{cmd_carve, CarveArgs};
use echoshow::synth::write_image;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "carve-demo".into()));
    std::fs::create_dir_all(&dir)?;
    let fx = write_image(&dir.join("emmc.bin"), 1)?;

    // no --extract: the table and the carve, without copying 16 GiB
    let manifest = cmd_carve(&CarveArgs {
        image: fx.path.clone(),
        out: dir.join("out"),
        table: None,
        extract: false,
        alignment: 512,
    })?;

    println!("{:<12} {:>12} {:>12}  filesystem", "name", "offset", "size");
    for p in &manifest.partitions {
        let fs = p.filesystem.as_ref().map_or("-".to_string(), |r| format!("{:?}", r.filesystem_kind));
        println!("{:<12} {:>#12x} {:>#12x}  {fs}", p.entry.name, p.entry.offset, p.entry.size);
    }
    println!("\nunmapped ranges: {}", manifest.unmapped.len());
    for r in &manifest.carved {
        println!(
            "carved {:?} at {:#x}, {} bytes, label {:?}",
            r.filesystem_kind, r.start, r.length, r.volume_label
        );
    }
    Ok(())
}
