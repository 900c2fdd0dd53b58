use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use echoshow::report::{
    cmd_acquire, cmd_carve, cmd_decrypt, cmd_extract, cmd_mock_serve, cmd_timeline, AcquireArgs, CarveArgs, CmdError,
    CredentialSource, DecryptArgs, ExitClass, ExtractArgs, MockServeArgs, TimelineArgs,
};
use echoshow::cloud::Outcome;

#[derive(Parser)]
#[command(name = "echoshow", version, about = "Echo Show 15 image, artifact and cloud acquisition toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split an eMMC image into partitions and scan unmapped space for ext4.
    Carve {
        image: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Kernel log (last_kmsg) to recover the partition table from.
        #[arg(long)]
        table: Option<PathBuf>,
        /// Only probe and scan; do not write partition images.
        #[arg(long)]
        no_extract: bool,
        #[arg(long, default_value_t = 512)]
        alignment: u64,
    },
    /// Run the artifact catalog over a mounted or extracted data partition.
    Extract {
        root: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Emit credentials and Wi-Fi keys in clear.
        #[arg(long)]
        reveal: bool,
    },
    /// Recover tokens from a MAP token store.
    Decrypt {
        db: PathBuf,
        /// Plaintext v1 store (photos app).
        #[arg(long)]
        v1: bool,
        #[arg(long)]
        reveal: bool,
        /// Write the credential manifest here.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Query the cloud endpoint catalog with a recovered refresh token.
    Acquire {
        /// Token store holding the refresh token.
        #[arg(long, conflicts_with = "refresh_token_file", required_unless_present = "refresh_token_file")]
        token_db: Option<PathBuf>,
        #[arg(long, requires = "token_db")]
        v1: bool,
        /// File containing the refresh token.
        #[arg(long)]
        refresh_token_file: Option<PathBuf>,
        /// Send every request to this base URL (loopback unless --live).
        #[arg(long, env = "ECHOSHOW_BASE_URL")]
        base_url: Option<String>,
        /// Allow contacting non-loopback hosts.
        #[arg(long)]
        live: bool,
        /// Restrict to these endpoint ids.
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
        /// Window start: unix ms or RFC 3339.
        #[arg(long, value_parser = parse_instant)]
        from: Option<i64>,
        #[arg(long, value_parser = parse_instant)]
        to: Option<i64>,
        /// Marketplace top-level domain for cookie hosts, e.g. `de`.
        #[arg(long)]
        marketplace: Option<String>,
        /// Endpoint catalog overriding the bundled one.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Merge extraction and acquisition output into one timeline.
    Timeline {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
        /// Also write a CSV rendering.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Display zone for the CSV: UTC or ±HH:MM.
        #[arg(long)]
        tz: Option<String>,
    },
    /// Serve the mock cloud on a loopback address.
    MockServe {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Fixture directory; synthetic fixtures otherwise.
        #[arg(long)]
        fixtures: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long = "refresh-token")]
        refresh_tokens: Vec<String>,
        #[arg(long)]
        start_ms: Option<i64>,
        #[arg(long)]
        save_fixtures: Option<PathBuf>,
    },
}

fn parse_instant(s: &str) -> Result<i64, String> {
    if let Ok(ms) = s.parse::<i64>() {
        return Ok(ms);
    }
    chrono::DateTime::parse_from_rfc3339(s)
        .map(|t| t.timestamp_millis())
        .map_err(|e| format!("{s:?} is neither unix ms nor RFC 3339: {e}"))
}

fn run(cli: Cli) -> Result<(), CmdError> {
    match cli.command {
        Command::Carve {
            image,
            out,
            table,
            no_extract,
            alignment,
        } => {
            let m = cmd_carve(&CarveArgs {
                image,
                out: out.clone(),
                table,
                extract: !no_extract,
                alignment,
            })?;
            for p in &m.partitions {
                let fs = p.filesystem.as_ref().map_or("-", |_| "ext4");
                let sha = p.receipt.as_ref().map_or("-", |r| r.sha256.as_str());
                println!("{:<12} {:#012x} {:#012x} {:<5} {}", p.entry.name, p.entry.offset, p.entry.size, fs, sha);
            }
            for c in &m.carved {
                println!("carved ext4 at {:#x}, {} bytes", c.start, c.length);
            }
            println!("manifest: {}", out.join("manifest.json").display());
        }
        Command::Extract { root, out, reveal } => {
            let s = cmd_extract(&ExtractArgs { root, out, reveal })?;
            println!("{} artifacts, {} records, {} events", s.artifacts.len(), s.records, s.events.values().sum::<usize>());
            println!("{} unclaimed files, {} errors", s.unclaimed.len(), s.errors.len());
            for e in &s.errors {
                eprintln!("warning: {}: {}", e.path, e.message);
            }
        }
        Command::Decrypt { db, v1, reveal, out } => {
            let m = cmd_decrypt(&DecryptArgs { db, v1, reveal, out })?;
            for t in &m.tokens {
                let state = match (&t.value, &t.error) {
                    (Some(v), _) => v.clone(),
                    (None, Some(e)) => format!("[{e}]"),
                    (None, None) => "-".into(),
                };
                let class = serde_json::to_value(t.class).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
                println!("{:<16} {class:<12} {state}", t.name);
            }
        }
        Command::Acquire {
            token_db,
            v1,
            refresh_token_file,
            base_url,
            live,
            only,
            from,
            to,
            marketplace,
            config,
            out,
        } => {
            let credentials = match (token_db, refresh_token_file) {
                (Some(path), _) => CredentialSource::TokenDb { path, v1 },
                (None, Some(f)) => CredentialSource::RefreshToken(std::fs::read_to_string(f)?.trim().to_string()),
                (None, None) => unreachable!("clap requires one credential source"),
            };
            let result = cmd_acquire(&AcquireArgs {
                credentials,
                base_url,
                live,
                only,
                from_ms: from,
                to_ms: to,
                out: out.clone(),
                marketplace,
                config,
            });
            let swept = match &result {
                Ok(_) => true,
                Err(e) => matches!(e.class, ExitClass::Auth | ExitClass::Transport),
            };
            if let Some(status) = swept.then(|| std::fs::read_to_string(out.join("status.json")).ok()).flatten() {
                if let Ok(v) = serde_json::from_str::<serde_json::Value>(&status) {
                    print_statuses(&v);
                }
            }
            result?;
        }
        Command::Timeline { inputs, out, csv, tz } => {
            let events = cmd_timeline(&TimelineArgs { inputs, out, csv, tz })?;
            println!("{} timeline events", events.len());
        }
        Command::MockServe {
            addr,
            fixtures,
            seed,
            refresh_tokens,
            start_ms,
            save_fixtures,
        } => {
            let (server, tokens) = cmd_mock_serve(&MockServeArgs {
                fixtures,
                seed,
                addr,
                refresh_tokens,
                start_ms,
                save_fixtures,
            })?;
            println!("mock cloud listening on {}", server.url());
            println!("accepting {} refresh token(s)", tokens.len());
            server.wait();
        }
    }
    Ok(())
}

fn print_statuses(v: &serde_json::Value) {
    let Some(statuses) = v["statuses"].as_array() else {
        return;
    };
    for s in statuses {
        let Ok(outcome) = serde_json::from_value::<Outcome>(s.clone()) else {
            continue;
        };
        let id = s["endpoint_id"].as_str().unwrap_or("?");
        let line = match outcome {
            Outcome::Ok { pages, records } => format!("ok      {pages} page(s), {records} record(s)"),
            Outcome::Skipped { reason } => format!("skipped {reason}"),
            Outcome::Failed { status, message } => {
                format!("FAILED  {} {message}", status.map_or("-".into(), |c| c.to_string()))
            }
        };
        println!("{id:<26} {line}");
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let label = match e.class {
                ExitClass::NothingFound => "warning",
                _ => "error",
            };
            eprintln!("{label}: {e}");
            ExitCode::from(e.class.code() as u8)
        }
    }
}
