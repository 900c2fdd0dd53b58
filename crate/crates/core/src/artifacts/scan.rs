use std::path::{Path, PathBuf};

use globset::{GlobBuilder, GlobMatcher};
use serde::Serialize;
use walkdir::WalkDir;

use super::ArtifactDescriptor;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ArtifactMatch {
    pub artifact_id: &'static str,
    /// `/`-separated, relative to the scan root.
    pub relative_path: String,
    #[serde(skip)]
    pub path: PathBuf,
    /// Other descriptors whose glob also matched, in catalog order.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub cross_references: Vec<&'static str>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PathError {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ScanResult {
    pub matches: Vec<ArtifactMatch>,
    /// Regular files no descriptor claims, for manual triage.
    pub unclaimed: Vec<String>,
    pub errors: Vec<PathError>,
}

impl ScanResult {
    pub fn matches_for<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a ArtifactMatch> + 'a {
        self.matches.iter().filter(move |m| m.artifact_id == id)
    }
}

/// Compiled catalog globs (`*` does not cross `/`, `**` does).
pub struct Matcher<'a> {
    entries: Vec<(&'a ArtifactDescriptor, GlobMatcher)>,
}

impl<'a> Matcher<'a> {
    pub fn new(catalog: &'a [ArtifactDescriptor]) -> Self {
        let entries = catalog
            .iter()
            .map(|d| {
                let glob = GlobBuilder::new(d.path_glob)
                    .literal_separator(true)
                    .build()
                    .unwrap_or_else(|e| panic!("catalog glob {:?}: {e}", d.path_glob));
                (d, glob.compile_matcher())
            })
            .collect();
        Matcher { entries }
    }

    /// Claiming descriptor plus cross-references. The longest literal
    /// prefix wins; ties go to catalog order.
    pub fn classify(&self, rel: &str) -> Option<(&'a ArtifactDescriptor, Vec<&'a ArtifactDescriptor>)> {
        let hits: Vec<&'a ArtifactDescriptor> = self
            .entries
            .iter()
            .filter(|(_, g)| g.is_match(rel))
            .map(|(d, _)| *d)
            .collect();
        let winner = *hits
            .iter()
            .enumerate()
            .max_by_key(|(i, d)| (d.literal_prefix().len(), std::cmp::Reverse(*i)))?
            .1;
        let others = hits.into_iter().filter(|d| d.id != winner.id).collect();
        Some((winner, others))
    }
}

/// Pair every regular file under `root` with the descriptor that claims it.
/// Output is sorted by relative path.
pub fn scan_tree(root: &Path, catalog: &[ArtifactDescriptor]) -> ScanResult {
    let matcher = Matcher::new(catalog);
    let mut out = ScanResult::default();
    let walker = WalkDir::new(root).follow_links(false).sort_by_file_name();
    for entry in walker {
        let entry = match entry {
            Ok(e) => e,
            Err(e) => {
                let path = e
                    .path()
                    .map(|p| rel_path(root, p))
                    .unwrap_or_else(|| "<unknown>".into());
                out.errors.push(PathError {
                    path,
                    message: e.to_string(),
                });
                continue;
            }
        };
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = rel_path(root, entry.path());
        match matcher.classify(&rel) {
            Some((d, others)) => out.matches.push(ArtifactMatch {
                artifact_id: d.id,
                relative_path: rel,
                path: entry.path().to_path_buf(),
                cross_references: others.into_iter().map(|o| o.id).collect(),
            }),
            None => out.unclaimed.push(rel),
        }
    }
    out
}

pub fn rel_path(root: &Path, p: &Path) -> String {
    let rel = p.strip_prefix(root).unwrap_or(p);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artifacts::catalog;

    #[test]
    fn empty_dir() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(scan_tree(dir.path(), catalog()), ScanResult::default());
    }

    #[test]
    fn star_does_not_cross_directories() {
        let m = Matcher::new(catalog());
        assert_eq!(
            m.classify("data/com.amazon.zordon/databases/x.mixtape.db").unwrap().0.id,
            "photo-metadata"
        );
        assert!(m.classify("data/com.amazon.zordon/databases/sub/x.mixtape.db").is_none());
        assert!(m.classify("data/com.amazon.edgecvs/files/album/loose.jpg").is_none());
        assert_eq!(
            m.classify("data/com.amazon.edgecvs/files/album/p1/a.jpg").unwrap().0.id,
            "visual-id-album"
        );
    }

    #[test]
    fn longer_literal_prefix_claims() {
        use crate::artifacts::{ArtifactDescriptor, ParserKind, Source};
        let cat = [
            ArtifactDescriptor {
                id: "broad",
                source: Source::Echo,
                description: "",
                path_glob: "system/**",
                parser: ParserKind::FileListing,
                yields_ids: &[],
                volatile: false,
            },
            ArtifactDescriptor {
                id: "narrow",
                source: Source::Echo,
                description: "",
                path_glob: "system/notification_log.db",
                parser: ParserKind::Sqlite,
                yields_ids: &[],
                volatile: false,
            },
        ];
        let m = Matcher::new(&cat);
        let (w, others) = m.classify("system/notification_log.db").unwrap();
        assert_eq!(w.id, "narrow");
        assert_eq!(others.len(), 1);
        assert_eq!(m.classify("system/other").unwrap().0.id, "broad");
    }
}
