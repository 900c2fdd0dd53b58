//! Drive the in-process mock cloud through a day of simulated time and show
//! when the client goes back to the token endpoint.

use std::collections::BTreeMap;
use std::sync::Arc;

use echoshow::clock::HOUR_MS;
use echoshow::cloud::{sweep, AcquireOptions, AcquisitionLog, EndpointConfig, Session};
use echoshow::mock::{MockCloud, MockOptions};
use echoshow::synth::{cloud_fixtures, Household};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = 4;
    let (fixtures, expect) = cloud_fixtures(seed);
    let options = MockOptions { refresh_tokens: vec![expect.refresh_token.clone()], ..MockOptions::default() };
    let mock = Arc::new(MockCloud::new(EndpointConfig::builtin().clone(), fixtures, expect.start_ms, options)?);
    let clock = mock.clock();
    let session = Session::new(
        EndpointConfig::builtin().clone(),
        mock.clone(),
        clock.clone(),
        &expect.refresh_token,
        AcquisitionLog::in_memory(),
    );
    let opts = AcquireOptions {
        only: None,
        start_ms: 0,
        end_ms: expect.start_ms,
        seeds: BTreeMap::from([("directedId".into(), vec![Household::generate(seed).owner.directed_id.to_string()])]),
    };

    println!("{:>8}  {:>6} {:>7}  {:>9}", "elapsed", "access", "cookies", "requests");
    let mut elapsed = 0;
    for step in [0, HOUR_MS - 1, 1, 23 * HOUR_MS - 1, 1] {
        clock.advance(step);
        elapsed += step;
        let report = sweep(&session, &opts);
        let c = session.exchange_counts();
        println!(
            "{:>7.3}h  {:>6} {:>7}  {:>9}",
            elapsed as f64 / HOUR_MS as f64,
            c.access_token,
            c.cookies,
            report.statuses.len()
        );
    }
    println!("requests carrying two credential forms: {}", mock.cross_form_count());

    mock.revoke(&expect.refresh_token);
    clock.advance(HOUR_MS);
    let report = sweep(&session, &opts);
    println!("after revocation: {}", report.fatal.as_deref().unwrap_or("no error"));
    Ok(())
}
