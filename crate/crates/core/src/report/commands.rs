use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use super::{write_json_atomic, write_jsonl_atomic, CmdError, ExitClass};
use crate::artifacts::{extract_tree, EnrolledProfile, ExtractOptions, PathError, REDACTED};
use crate::clock::{Clock, SystemClock};
use crate::cloud::{
    sweep, AcquireOptions, AcquisitionLog, EndpointConfig, EndpointStatus, ExchangeCounts, HttpTransport, Outcome,
    Session,
};
use crate::ids::IdentityGraph;
use crate::image::{
    builtin_partition_table, carve_ext4, extract_partition, out_of_bounds, parse_kernel_log_table, probe_ext4,
    unmapped_ranges, validate_table, CarveOptions, CarvedRegion, EmmcImage, ExtractionReceipt, LineError,
    PartitionEntry, Provenance, SparseFileSink,
};
use crate::mock::{FixtureSet, MockCloud, MockOptions, MockServer};
use crate::synth::cloud_fixtures;
use crate::vault::{self, AccountLink, StoreVersion, TokenClass, TokenRecord};

pub const CARVE_FORMAT: &str = "echoshow-carve/1";
const EXTRACT_FORMAT: &str = "echoshow-extract/1";
const CREDENTIALS_FORMAT: &str = "echoshow-credentials/1";
const ACQUIRE_FORMAT: &str = "echoshow-acquire/1";

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

#[derive(Debug, Clone)]
pub struct CarveArgs {
    pub image: PathBuf,
    pub out: PathBuf,
    /// Kernel log to take the partition table from instead of the built-in one.
    pub table: Option<PathBuf>,
    /// Write each partition to `<out>/<name>.img`.
    pub extract: bool,
    pub alignment: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PartitionReport {
    #[serde(flatten)]
    pub entry: PartitionEntry,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub receipt: Option<ExtractionReceipt>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filesystem: Option<CarvedRegion>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CarveManifest {
    pub format: &'static str,
    pub image: String,
    pub image_size: u64,
    pub table_source: Provenance,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub table_errors: Vec<LineError>,
    pub partitions: Vec<PartitionReport>,
    pub unmapped: Vec<(u64, u64)>,
    pub carved: Vec<CarvedRegion>,
}

/// Split an image along its partition table, probe each partition for ext4
/// and scan unmapped space for hidden filesystems. Writes `manifest.json`.
pub fn cmd_carve(args: &CarveArgs) -> Result<CarveManifest, CmdError> {
    let image = EmmcImage::open(&args.image)?;
    let (table, table_source, table_errors) = match &args.table {
        None => (builtin_partition_table(), Provenance::BuiltinTable, Vec::new()),
        Some(p) => {
            let parsed = parse_kernel_log_table(&fs::read_to_string(p)?);
            if parsed.entries.is_empty() {
                return Err(CmdError::new(
                    ExitClass::Schema,
                    format!("{}: no partition lines recognized", p.display()),
                ));
            }
            (parsed.entries, Provenance::KernelLog, parsed.errors)
        }
    };
    validate_table(&table)?;
    if let Some(e) = out_of_bounds(&image, &table).first() {
        return Err(CmdError::new(
            ExitClass::Schema,
            format!(
                "partition {} ({:#x}+{:#x}) exceeds image size {:#x}",
                e.name,
                e.offset,
                e.size,
                image.total_size()
            ),
        ));
    }
    fs::create_dir_all(&args.out)?;

    let mut partitions = Vec::with_capacity(table.len());
    for entry in &table {
        let mut report = PartitionReport {
            entry: entry.clone(),
            output: None,
            receipt: None,
            filesystem: probe_ext4(&image, entry.offset, entry.size)?,
        };
        if args.extract {
            let name = format!("{}.img", entry.name);
            let tmp = args.out.join(format!(".{name}.tmp"));
            let mut sink = SparseFileSink::new(File::create(&tmp)?);
            let receipt = extract_partition(&image, entry, &mut sink)?;
            sink.finish()?.sync_all()?;
            fs::rename(&tmp, args.out.join(&name))?;
            report.output = Some(name);
            report.receipt = Some(receipt);
        }
        partitions.push(report);
    }

    let unmapped = unmapped_ranges(&image, &table)?;
    let mut carved = Vec::new();
    for &range in &unmapped {
        carved.extend(carve_ext4(&image, range, CarveOptions { alignment: args.alignment })?);
    }

    let manifest = CarveManifest {
        format: CARVE_FORMAT,
        image: file_name(&args.image),
        image_size: image.total_size(),
        table_source,
        table_errors,
        partitions,
        unmapped,
        carved,
    };
    write_json_atomic(&args.out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

#[derive(Debug, Clone)]
pub struct ExtractArgs {
    pub root: PathBuf,
    pub out: PathBuf,
    pub reveal: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtractSummary {
    pub format: &'static str,
    /// Files matched per catalog entry.
    pub artifacts: BTreeMap<String, usize>,
    pub records: usize,
    pub events: BTreeMap<String, usize>,
    pub wifi_networks: usize,
    pub profiles: Vec<EnrolledProfile>,
    pub links: Vec<AccountLink>,
    pub graph: IdentityGraph,
    pub unclaimed: Vec<String>,
    pub errors: Vec<PathError>,
    pub notices: Vec<String>,
}

/// Run the artifact catalog over a partition tree. Writes `records.jsonl`,
/// `events.jsonl` and `extraction.json`, even when nothing matched.
pub fn cmd_extract(args: &ExtractArgs) -> Result<ExtractSummary, CmdError> {
    if !args.root.is_dir() {
        return Err(CmdError::new(
            ExitClass::Io,
            format!("{} is not a directory", args.root.display()),
        ));
    }
    let x = extract_tree(&args.root, ExtractOptions { reveal: args.reveal });
    let mut artifacts = BTreeMap::new();
    for m in &x.scan.matches {
        *artifacts.entry(m.artifact_id.to_string()).or_insert(0) += 1;
    }
    let mut events = BTreeMap::new();
    for e in &x.events {
        *events.entry(e.kind.token().to_string()).or_insert(0) += 1;
    }
    let mut errors = x.scan.errors.clone();
    errors.extend(x.errors.iter().cloned());
    let summary = ExtractSummary {
        format: EXTRACT_FORMAT,
        artifacts,
        records: x.records.len(),
        events,
        wifi_networks: x.wifi.len(),
        profiles: x.profiles.clone(),
        links: x.links.clone(),
        graph: x.graph.clone(),
        unclaimed: x.scan.unclaimed.clone(),
        errors,
        notices: x.notices.clone(),
    };
    write_jsonl_atomic(&args.out.join("records.jsonl"), &x.records)?;
    write_jsonl_atomic(&args.out.join("events.jsonl"), &x.events)?;
    write_json_atomic(&args.out.join("extraction.json"), &summary)?;
    if x.scan.matches.is_empty() {
        return Err(CmdError::new(
            ExitClass::NothingFound,
            format!("no catalog artifact found under {}", args.root.display()),
        ));
    }
    Ok(summary)
}

#[derive(Debug, Clone)]
pub struct DecryptArgs {
    pub db: PathBuf,
    /// Plaintext store of the photos app.
    pub v1: bool,
    pub reveal: bool,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TokenEntry {
    pub name: String,
    pub key: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directed_id: Option<String>,
    pub class: TokenClass,
    pub decrypted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<&'static str>,
    pub acquisition_credential: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CredentialsManifest {
    pub format: &'static str,
    pub store_version: StoreVersion,
    /// AES key size of an encrypted store.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub key_bits: Option<usize>,
    pub revealed: bool,
    pub tokens: Vec<TokenEntry>,
    pub links: Vec<AccountLink>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notices: Vec<String>,
}

impl CredentialsManifest {
    pub fn refresh_token(&self) -> Option<&TokenEntry> {
        self.tokens.iter().find(|t| t.acquisition_credential)
    }
}

struct LoadedStore {
    version: StoreVersion,
    key_bits: Option<usize>,
    tokens: Vec<TokenRecord>,
    links: Vec<AccountLink>,
    notices: Vec<String>,
}

fn load_store(db: &Path, v1: bool) -> Result<LoadedStore, CmdError> {
    if !db.is_file() {
        return Err(CmdError::new(ExitClass::Io, format!("{}: no such file", db.display())));
    }
    if v1 {
        return Ok(LoadedStore {
            version: StoreVersion::V1Plain,
            key_bits: None,
            tokens: vault::load_store_v1(db)?,
            links: Vec::new(),
            notices: Vec::new(),
        });
    }
    let store = vault::load_store_v2(db)?;
    let report = vault::link_accounts(&store.account_rows);
    Ok(LoadedStore {
        version: StoreVersion::V2Encrypted,
        key_bits: Some(store.secret.as_bytes().len() * 8),
        tokens: vault::recover_tokens(&store),
        links: report.links,
        notices: report.notices,
    })
}

/// The refresh token and its account from a token store.
pub(crate) fn acquisition_credential(db: &Path, v1: bool) -> Result<(String, Option<String>), CmdError> {
    let store = load_store(db, v1)?;
    let t = store
        .tokens
        .into_iter()
        .find(|t| t.acquisition_credential)
        .ok_or_else(|| CmdError::new(ExitClass::Schema, format!("{}: no refresh_token row", db.display())))?;
    match t.plaintext {
        Some(p) => Ok((p, t.directed_id)),
        None => Err(CmdError::new(
            ExitClass::Crypto,
            format!("refresh_token: {}", t.error.unwrap_or_else(|| "not recovered".into())),
        )),
    }
}

/// Recover the tokens of a store. Values are redacted unless `reveal`.
///
/// Fails with the crypto class when the refresh token, or every in-scope
/// token, could not be decrypted; the manifest is written first.
pub fn cmd_decrypt(args: &DecryptArgs) -> Result<CredentialsManifest, CmdError> {
    let store = load_store(&args.db, args.v1)?;
    let tokens: Vec<TokenEntry> = store
        .tokens
        .iter()
        .map(|t| TokenEntry {
            name: t.name.clone(),
            key: t.key.clone(),
            directed_id: t.directed_id.clone(),
            class: t.class,
            decrypted: t.plaintext.is_some(),
            value: t
                .plaintext
                .as_ref()
                .map(|p| if args.reveal { p.clone() } else { REDACTED.to_string() }),
            error: t.error.clone(),
            note: t.class.note(),
            acquisition_credential: t.acquisition_credential,
        })
        .collect();
    let manifest = CredentialsManifest {
        format: CREDENTIALS_FORMAT,
        store_version: store.version,
        key_bits: store.key_bits,
        revealed: args.reveal,
        tokens,
        links: store.links,
        notices: store.notices,
    };
    if let Some(out) = &args.out {
        write_json_atomic(out, &manifest)?;
    }
    let in_scope: Vec<&TokenEntry> = manifest
        .tokens
        .iter()
        .filter(|t| t.class != TokenClass::OutOfScope)
        .collect();
    let refresh_failed = manifest.refresh_token().is_some_and(|t| !t.decrypted);
    let none_decrypted = !in_scope.is_empty() && in_scope.iter().all(|t| !t.decrypted);
    if refresh_failed || none_decrypted {
        let why = manifest
            .refresh_token()
            .and_then(|t| t.error.clone())
            .or_else(|| in_scope.first().and_then(|t| t.error.clone()))
            .unwrap_or_else(|| "no token decrypted".into());
        return Err(CmdError::new(ExitClass::Crypto, why));
    }
    Ok(manifest)
}

#[derive(Debug, Clone)]
pub enum CredentialSource {
    TokenDb { path: PathBuf, v1: bool },
    RefreshToken(String),
}

#[derive(Debug, Clone)]
pub struct AcquireArgs {
    pub credentials: CredentialSource,
    /// Send every request here; must be loopback unless `live`.
    pub base_url: Option<String>,
    pub live: bool,
    pub only: Vec<String>,
    pub from_ms: Option<i64>,
    pub to_ms: Option<i64>,
    pub out: PathBuf,
    pub marketplace: Option<String>,
    pub config: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct AcquireSummary {
    pub format: &'static str,
    pub window: (i64, i64),
    pub statuses: Vec<EndpointStatus>,
    /// Selected endpoints without a single successful call.
    pub unanswered: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fatal: Option<String>,
    pub exchanges: ExchangeCounts,
    pub records: usize,
}

/// Sweep the endpoint catalog with credentials derived from a refresh
/// token. Everything received lands in `<out>/acquisition.jsonl` and
/// `<out>/blobs/`; parsed records in `records.jsonl`, statuses in
/// `status.json`.
pub fn cmd_acquire(args: &AcquireArgs) -> Result<AcquireSummary, CmdError> {
    // the safety gate comes before any credential is touched
    let transport = HttpTransport::new(args.base_url.as_deref(), args.live)?;
    let mut config = match &args.config {
        Some(p) => EndpointConfig::parse(&fs::read_to_string(p)?)?,
        None => EndpointConfig::builtin().clone(),
    };
    if let Some(tld) = &args.marketplace {
        config = config.with_marketplace(tld)?;
    }
    let unknown: Vec<&String> = args.only.iter().filter(|id| config.endpoint(id).is_none()).collect();
    if !unknown.is_empty() {
        return Err(CmdError::new(ExitClass::Usage, format!("unknown endpoint ids: {unknown:?}")));
    }
    let (refresh, directed) = match &args.credentials {
        CredentialSource::TokenDb { path, v1 } => acquisition_credential(path, *v1)?,
        CredentialSource::RefreshToken(t) => (t.clone(), None),
    };

    let clock: Arc<dyn Clock> = Arc::new(SystemClock);
    let window = (args.from_ms.unwrap_or(0), args.to_ms.unwrap_or_else(|| clock.now_ms()));
    if window.0 > window.1 {
        return Err(CmdError::new(ExitClass::Usage, "--from is after --to"));
    }
    let log = AcquisitionLog::open(&args.out)?;
    let session = Session::new(config, Arc::new(transport), clock, &refresh, log);
    let mut seeds = BTreeMap::new();
    if let Some(d) = directed {
        seeds.insert("directedId".to_string(), vec![d]);
    }
    let opts = AcquireOptions {
        only: (!args.only.is_empty()).then(|| args.only.iter().cloned().collect()),
        start_ms: window.0,
        end_ms: window.1,
        seeds,
    };
    let report = sweep(&session, &opts);

    let mut answered = BTreeSet::new();
    let mut attempted = Vec::new();
    for s in &report.statuses {
        if !attempted.contains(&s.endpoint_id) {
            attempted.push(s.endpoint_id.clone());
        }
        match s.outcome {
            Outcome::Ok { .. } | Outcome::Skipped { .. } => {
                answered.insert(s.endpoint_id.clone());
            }
            Outcome::Failed { .. } => {}
        }
    }
    let unanswered: Vec<String> = attempted.into_iter().filter(|id| !answered.contains(id)).collect();

    let summary = AcquireSummary {
        format: ACQUIRE_FORMAT,
        window,
        statuses: report.statuses.clone(),
        unanswered,
        fatal: report.fatal.clone(),
        exchanges: report.exchanges,
        records: report.records.len(),
    };
    write_jsonl_atomic(&args.out.join("records.jsonl"), &report.records)?;
    write_json_atomic(&args.out.join("status.json"), &summary)?;
    if let Some(f) = &summary.fatal {
        return Err(CmdError::new(ExitClass::Auth, f.clone()));
    }
    if !summary.unanswered.is_empty() {
        return Err(CmdError::new(
            ExitClass::Transport,
            format!("no successful response from: {}", summary.unanswered.join(", ")),
        ));
    }
    Ok(summary)
}

#[derive(Debug, Clone)]
pub struct MockServeArgs {
    /// Fixture directory; synthetic fixtures from `seed` when absent.
    pub fixtures: Option<PathBuf>,
    pub seed: u64,
    pub addr: String,
    /// Accepted refresh tokens in addition to the synthetic one.
    pub refresh_tokens: Vec<String>,
    pub start_ms: Option<i64>,
    /// Also write the fixtures in use here.
    pub save_fixtures: Option<PathBuf>,
}

/// Start the mock cloud on `addr`. Returns the server and the refresh
/// tokens it accepts.
pub fn cmd_mock_serve(args: &MockServeArgs) -> Result<(MockServer, Vec<String>), CmdError> {
    let mut tokens = args.refresh_tokens.clone();
    let (fixtures, start) = match &args.fixtures {
        Some(dir) => (FixtureSet::load(dir)?, None),
        None => {
            let (set, exp) = cloud_fixtures(args.seed);
            tokens.push(exp.refresh_token);
            (set, Some(exp.start_ms))
        }
    };
    if tokens.is_empty() {
        return Err(CmdError::new(ExitClass::Usage, "no refresh token would be accepted"));
    }
    if let Some(dir) = &args.save_fixtures {
        fixtures.save(dir)?;
    }
    let start_ms = args.start_ms.or(start).unwrap_or_else(|| SystemClock.now_ms());
    let options = MockOptions {
        refresh_tokens: tokens.clone(),
        ..MockOptions::default()
    };
    let mock = MockCloud::new(EndpointConfig::builtin().clone(), fixtures, start_ms, options)
        .map_err(|e| CmdError::new(ExitClass::Schema, e.to_string()))?;
    let server = MockServer::start(Arc::new(mock), &args.addr)?;
    Ok((server, tokens))
}
