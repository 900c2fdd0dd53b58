//! The whole workflow on one synthetic case: extract the device tree,
//! decrypt its token store and acquire from a loopback mock cloud with the
//! recovered refresh token, then merge everything into one timeline.
//!
//! ```bash
//! cargo run --example case_timeline -- /tmp/case +05:30
//! ```

use std::path::PathBuf;
use std::sync::Arc;

use echoshow::cloud::EndpointConfig;
use echoshow::mock::{MockCloud, MockOptions, MockServer};
use echoshow::report::{
    cmd_acquire, cmd_extract, cmd_timeline, AcquireArgs, CredentialSource, ExtractArgs, TimelineArgs,
};
use echoshow::synth::{cloud_fixtures, write_device_tree};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "case-demo".into()));
    let tz = args.next();
    let seed = 13;

    let tree = write_device_tree(&dir.join("tree"), seed)?;
    let extracted = dir.join("extract");
    let summary = cmd_extract(&ExtractArgs { root: tree.root.clone(), out: extracted.clone(), reveal: false })?;
    println!("extracted {} records, {} event kinds", summary.records, summary.events.len());

    let (fixtures, expect) = cloud_fixtures(seed);
    let options = MockOptions { refresh_tokens: vec![expect.refresh_token.clone()], ..MockOptions::default() };
    let mock = MockCloud::new(EndpointConfig::builtin().clone(), fixtures, expect.start_ms, options)?;
    let server = MockServer::start(Arc::new(mock), "127.0.0.1:0")?;
    let acquired = dir.join("acquire");
    let acq = cmd_acquire(&AcquireArgs {
        credentials: CredentialSource::TokenDb {
            path: tree.root.join("data/com.amazon.imp/databases/map_data_storage_v2.db"),
            v1: false,
        },
        base_url: Some(server.url()),
        live: false,
        only: Vec::new(),
        from_ms: Some(0),
        to_ms: Some(expect.start_ms),
        out: acquired.clone(),
        marketplace: None,
        config: None,
    })?;
    println!("acquired {} records from {} requests", acq.records, acq.statuses.len());

    let events = cmd_timeline(&TimelineArgs {
        inputs: vec![
            extracted.join("records.jsonl"),
            extracted.join("events.jsonl"),
            acquired.join("records.jsonl"),
        ],
        out: dir.join("timeline.jsonl"),
        csv: Some(dir.join("timeline.csv")),
        tz,
    })?;
    for e in events.iter().take(12) {
        println!("{} {:?} {:<18} {}", e.timestamp, e.source, e.kind, e.summary);
    }
    println!("... {} events in {}", events.len(), dir.join("timeline.csv").display());
    Ok(())
}
