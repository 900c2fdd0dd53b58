//! Write a complete synthetic case to a directory: a device file tree, cloud
//! fixtures for `echoshow mock-serve --fixtures`, the refresh token those
//! fixtures accept, and a kernel log describing the partition table.
//!
//! ```bash
//! cargo run --example synth_case -- /tmp/case 7
//! echoshow extract /tmp/case/tree -o /tmp/case/extract
//! ```

use std::path::PathBuf;

use echoshow::image::builtin_partition_table;
use echoshow::synth::{cloud_fixtures, kernel_log_text, write_device_tree};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "synthetic-case".into()));
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);

    let tree = write_device_tree(&dir.join("tree"), seed)?;
    let (fixtures, expect) = cloud_fixtures(seed);
    fixtures.save(&dir.join("fixtures"))?;
    std::fs::write(dir.join("refresh_token.txt"), &expect.refresh_token)?;
    std::fs::write(dir.join("last_kmsg"), kernel_log_text(&builtin_partition_table()))?;

    println!("device tree   {}", tree.root.display());
    println!("  artifacts   {}", tree.expected_files.len());
    println!("  events      {}", tree.events.expected.values().sum::<usize>());
    println!("fixtures      {}", dir.join("fixtures").display());
    println!("kernel log    {}", dir.join("last_kmsg").display());
    Ok(())
}
