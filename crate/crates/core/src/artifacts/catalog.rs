use serde::Serialize;

use crate::ids::UserIdKind::{self, *};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Source {
    Echo,
    AlexaApp,
    PhotosApp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ParserKind {
    WifiConfig,
    DropboxLogs,
    TokenStoreV2,
    TokenStoreV1,
    Recognition,
    Sqlite,
    SharedPrefs,
    FileListing,
    /// Sniffed per file: SQLite, XML prefs, else listing.
    Auto,
}

impl ParserKind {
    pub const ALL: [ParserKind; 9] = [
        ParserKind::WifiConfig,
        ParserKind::DropboxLogs,
        ParserKind::TokenStoreV2,
        ParserKind::TokenStoreV1,
        ParserKind::Recognition,
        ParserKind::Sqlite,
        ParserKind::SharedPrefs,
        ParserKind::FileListing,
        ParserKind::Auto,
    ];
}

/// One local artifact location, relative to the root of the `data` partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ArtifactDescriptor {
    pub id: &'static str,
    pub source: Source,
    pub description: &'static str,
    pub path_glob: &'static str,
    pub parser: ParserKind,
    pub yields_ids: &'static [UserIdKind],
    /// Logs and caches, rotated away within days.
    pub volatile: bool,
}

impl ArtifactDescriptor {
    /// Glob text before the first metacharacter.
    pub fn literal_prefix(&self) -> &'static str {
        let end = self
            .path_glob
            .find(['*', '?', '[', '{'])
            .unwrap_or(self.path_glob.len());
        &self.path_glob[..end]
    }
}

const fn d(
    id: &'static str,
    source: Source,
    description: &'static str,
    path_glob: &'static str,
    parser: ParserKind,
    yields_ids: &'static [UserIdKind],
    volatile: bool,
) -> ArtifactDescriptor {
    ArtifactDescriptor {
        id,
        source,
        description,
        path_glob,
        parser,
        yields_ids,
        volatile,
    }
}

use ParserKind as P;
use Source::{AlexaApp as A, Echo as E, PhotosApp as Ph};

const ALEXA: &str = "data/com.amazon.dee.app/";
const PHOTOS: &str = "data/com.amazon.clouddrive.photos/";

macro_rules! alexa {
    ($rest:literal) => {
        concat!("data/com.amazon.dee.app/", $rest)
    };
}
macro_rules! photos {
    ($rest:literal) => {
        concat!("data/com.amazon.clouddrive.photos/", $rest)
    };
}

static CATALOG: [ArtifactDescriptor; 35] = [
    d("wifi-config", E, "Wi-Fi credentials", "misc/wifi/WifiConfigStore.xml", P::WifiConfig, &[], false),
    d("aria-image-cache", E, "Cached images of searches", "data/com.amazon.aria/cache/image_manager_disk_cache/**", P::FileListing, &[], true),
    d("system-snapshots", E, "Random screenshots", "system_ce/0/snapshots/**", P::FileListing, &[], false),
    d("browser-textures", E, "Random browser screenshots", "data/com.amazon.cloud9/app_textures/**", P::FileListing, &[], false),
    d("prime-video-history", E, "Prime Video watch history", "data/com.amazon.avod/files/databases/dbplaybackhistory", P::Sqlite, &[], false),
    d("voice-activity-prefs", E, "Last interaction by voice", "data/amazon.speech.sim/shared_prefs/user_activity_prefs.xml", P::SharedPrefs, &[], false),
    d("known-devices-registry", E, "Known devices", "data/com.amazon.alexahybridremoteskill/files/customerHomeRegistry.db", P::Sqlite, &[], false),
    d("known-devices-smarthome", E, "Known devices", "data/com.amazon.gloria.smarthome/shared_prefs/SmartHomeEntityCache.xml", P::SharedPrefs, &[], false),
    d("wifi-camera-cache", E, "Picture of connected Wi-Fi camera", "data/com.amazon.cardinal/cache/**", P::FileListing, &[], true),
    d("token-store", E, "Encrypted API credentials", "data/com.amazon.imp/databases/map_data_storage_v2.db", P::TokenStoreV2, &[DirectedId, PersonId, PersonIdV2], false),
    d("alta-identity", E, "User data and internal IDs", "securedStorageLocation/com.amazon.alta.h2clientservice/databases/alta.h2clientservice.db", P::Sqlite, &[], false),
    d("dropbox-logs", E, "Log files", "system/dropbox/**", P::DropboxLogs, &[PersonId], true),
    d("logd-logs", E, "Log files", "logd/**", P::DropboxLogs, &[PersonId], true),
    d("browser-data", E, "Browser history, cookies, login data", "data/com.amazon.cloud9/app_amazon_webview/amazon_webview/*", P::Auto, &[], false),
    d("photobooth-prefs", E, "Timestamp of last picture", "data/com.amazon.zordon/shared_prefs/photobooth.xml", P::SharedPrefs, &[], false),
    d("photo-metadata", E, "Photo and video metadata", "data/com.amazon.zordon/databases/*.mixtape.db", P::Sqlite, &[], false),
    d("visual-id-album", E, "Encrypted Visual ID photos", "data/com.amazon.edgecvs/files/album/*/**", P::FileListing, &[], false),
    d("notification-log", E, "Event log", "system/notification_log.db", P::Sqlite, &[], false),
    d("calendar-prefs", E, "Timestamp of last boot", "data/com.amazon.knight.calendar/shared_prefs/com.amazon.knight.calendar_preferences.xml", P::SharedPrefs, &[], false),
    d("visual-id-recognition", E, "Local user IDs with Visual ID", "data/com.amazon.alexa.identity/databases/recognition", P::Recognition, &[PersonId], false),
    d("alexa-service-identity", A, "User data and internal IDs", alexa!("shared_prefs/service.identity.xml"), P::SharedPrefs, &[CustomerId, DirectedId, CommsId, PersonId], false),
    d("alexa-shared-prefs", A, "Timestamp of last app start", alexa!("shared_prefs/SHARED_PREFS.xml"), P::SharedPrefs, &[DirectedId, CommsId], false),
    d("alexa-shared-prefs-identity", A, "User data and internal IDs", alexa!("shared_prefs/SHARED_PREFS_IDENTITY.xml"), P::SharedPrefs, &[DirectedId, CommsId], false),
    d("alexa-mobilytics", A, "Timestamps of last session", alexa!("shared_prefs/mobilytics.session-storage.xml"), P::SharedPrefs, &[], false),
    d("alexa-webview-cookies", A, "Session cookies", alexa!("app_webview/Cookies"), P::Sqlite, &[], false),
    d("alexa-webview-appcache", A, "Cached files of webviews", alexa!("app_webview/Application Cache/Cache/**"), P::FileListing, &[], true),
    d("alexa-webview-cache", A, "Cached files of webviews", alexa!("cache/org.chromium.android_webview/**"), P::FileListing, &[], true),
    d("alexa-token-store", A, "Encrypted API credentials", alexa!("databases/map_data_storage_v2.db"), P::TokenStoreV2, &[DirectedId, PersonId, PersonIdV2], false),
    d("alexa-datastore", A, "Shopping and to-do lists", alexa!("databases/DataStore.db"), P::Sqlite, &[CustomerId], false),
    d("alexa-comms-identity", A, "User data and internal IDs", alexa!("databases/comms-core-identity-database"), P::Sqlite, &[DirectedId, CommsId, PersonIdV2], false),
    d("alexa-comms-db", A, "Conversations", alexa!("databases/comms.db"), P::Sqlite, &[], false),
    d("photos-image-cache", Ph, "Cached pictures", photos!("cache/image_manager_disk_cache/**"), P::FileListing, &[], true),
    d("photos-token-store", Ph, "API credentials (unencrypted)", photos!("databases/map_data_storage.db"), P::TokenStoreV1, &[DirectedId], false),
    d("photos-discovery", Ph, "Metadata of uploaded pictures", photos!("databases/discovery_database_*"), P::Sqlite, &[], false),
    d("photos-metadata-cache", Ph, "Metadata (also EXIF) of pictures", photos!("databases/metadata_cache_database_*"), P::Sqlite, &[CustomerId], false),
];

/// Every non-deprecated on-device artifact location.
pub fn catalog() -> &'static [ArtifactDescriptor] {
    &CATALOG
}

pub fn descriptor(id: &str) -> Option<&'static ArtifactDescriptor> {
    CATALOG.iter().find(|d| d.id == id)
}

/// App data roots, relative to the `data` partition.
pub const APP_ROOTS: [(Source, &str); 2] = [(Source::AlexaApp, ALEXA), (Source::PhotosApp, PHOTOS)];

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn ids_unique_and_globs_valid() {
        let ids: BTreeSet<_> = catalog().iter().map(|d| d.id).collect();
        assert_eq!(ids.len(), catalog().len());
        for d in catalog() {
            globset::Glob::new(d.path_glob).unwrap();
            assert!(!d.path_glob.starts_with('/'));
        }
    }

    #[test]
    fn deprecated_store_excluded() {
        assert!(catalog().iter().all(|d| !d.path_glob.contains("RKStorage")));
    }

    #[test]
    fn literal_prefixes() {
        assert_eq!(descriptor("photo-metadata").unwrap().literal_prefix(), "data/com.amazon.zordon/databases/");
        assert_eq!(descriptor("wifi-config").unwrap().literal_prefix(), "misc/wifi/WifiConfigStore.xml");
    }
}
