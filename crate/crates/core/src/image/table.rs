use std::collections::BTreeSet;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{EmmcImage, ImageError};

/// Partitions the bootloader exposes through `fastboot getvar`.
pub const FASTBOOT_LISTED: [&str; 5] = ["boot", "system", "vendor", "odm", "data"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    BuiltinTable,
    KernelLog,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionEntry {
    pub name: String,
    pub offset: u64,
    pub size: u64,
    pub listed_in_fastboot: bool,
    pub provenance: Provenance,
}

impl PartitionEntry {
    pub fn new(name: &str, offset: u64, size: u64, provenance: Provenance) -> Self {
        PartitionEntry {
            name: name.to_string(),
            offset,
            size,
            listed_in_fastboot: FASTBOOT_LISTED.contains(&name),
            provenance,
        }
    }

    pub fn end(&self) -> u64 {
        self.offset.saturating_add(self.size)
    }

    pub fn fits(&self, image: &EmmcImage) -> bool {
        self.offset
            .checked_add(self.size)
            .is_some_and(|end| end <= image.total_size())
    }

    /// Same name, offset, size and fastboot flag, regardless of where the
    /// entry came from.
    pub fn same_layout(&self, other: &PartitionEntry) -> bool {
        self.name == other.name
            && self.offset == other.offset
            && self.size == other.size
            && self.listed_in_fastboot == other.listed_in_fastboot
    }
}

const LAYOUT: [(&str, u64, u64); 15] = [
    ("bootloader", 0x0000_0000, 0x0_0040_0000),
    ("reserved", 0x0240_0000, 0x0_0080_0000),
    ("nvcfg", 0x02d0_0000, 0x0_0040_0000),
    ("tee", 0x0320_0000, 0x0_0080_0000),
    ("boot", 0x03b0_0000, 0x0_0180_0000),
    ("recovery", 0x0540_0000, 0x0_0180_0000),
    ("logo", 0x06d0_0000, 0x0_0040_0000),
    ("misc", 0x0720_0000, 0x0_0010_0000),
    ("cri_data", 0x0740_0000, 0x0_0020_0000),
    ("vendor", 0x0770_0000, 0x0_12c0_0000),
    ("odm", 0x1a40_0000, 0x0_0080_0000),
    ("system", 0x1ad0_0000, 0x0_c200_0000),
    ("product", 0xdce0_0000, 0x0_00c0_0000),
    ("cache", 0xddb0_0000, 0x0_2000_0000),
    ("data", 0xfdc0_0000, 0x2_ad80_0000),
];

/// The Echo Show 15 eMMC layout, in on-disk order.
pub fn builtin_partition_table() -> Vec<PartitionEntry> {
    LAYOUT
        .iter()
        .map(|&(name, offset, size)| PartitionEntry::new(name, offset, size, Provenance::BuiltinTable))
        .collect()
}

/// Unique names and no two entries sharing a byte.
pub fn validate_table(table: &[PartitionEntry]) -> Result<(), ImageError> {
    let mut names = BTreeSet::new();
    for e in table {
        if !names.insert(e.name.as_str()) {
            return Err(ImageError::DuplicateName(e.name.clone()));
        }
    }
    let mut sorted: Vec<&PartitionEntry> = table.iter().filter(|e| e.size > 0).collect();
    sorted.sort_by_key(|e| (e.offset, e.size));
    for pair in sorted.windows(2) {
        if pair[0].end() > pair[1].offset {
            return Err(ImageError::Overlap {
                a: pair[0].name.clone(),
                b: pair[1].name.clone(),
            });
        }
    }
    Ok(())
}

/// Entries that do not fit inside `image`.
pub fn out_of_bounds<'a>(image: &EmmcImage, table: &'a [PartitionEntry]) -> Vec<&'a PartitionEntry> {
    table.iter().filter(|e| !e.fits(image)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineError {
    pub line: usize,
    pub text: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelLogTable {
    pub entries: Vec<PartitionEntry>,
    pub errors: Vec<LineError>,
}

fn parse_number(tok: &str) -> Result<u64, String> {
    let parsed = match tok.strip_prefix("0x").or_else(|| tok.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => tok.parse::<u64>(),
    };
    parsed.map_err(|e| format!("bad number {tok:?}: {e}"))
}

/// Recover a partition table from a `last_kmsg`-style log.
///
/// Accepted line shape, after any kernel prefix: `name : offset size`, both
/// numbers hex (`0x`) or decimal. A line is a candidate when exactly two
/// fields follow the colon and at least one starts with a digit; candidates
/// whose numbers do not parse are reported in `errors`. Order in the log is
/// not assumed.
pub fn parse_kernel_log_table(text: &str) -> KernelLogTable {
    let re = Regex::new(r"([A-Za-z0-9_][A-Za-z0-9_\-]*)\s*:\s*(\S+)\s+(\S+)\s*$").expect("static regex");
    let mut out = KernelLogTable::default();
    let mut seen = BTreeSet::new();
    for (idx, line) in text.lines().enumerate() {
        let Some(caps) = re.captures(line) else {
            continue;
        };
        let (name, a, b) = (&caps[1], &caps[2], &caps[3]);
        let digitish = |s: &str| s.as_bytes().first().is_some_and(u8::is_ascii_digit);
        if !digitish(a) && !digitish(b) {
            continue;
        }
        let err = |reason: String| LineError {
            line: idx + 1,
            text: line.to_string(),
            reason,
        };
        match (parse_number(a), parse_number(b)) {
            (Ok(offset), Ok(size)) => {
                if !seen.insert(name.to_string()) {
                    out.errors.push(err(format!("duplicate partition {name}")));
                    continue;
                }
                out.entries
                    .push(PartitionEntry::new(name, offset, size, Provenance::KernelLog));
            }
            (Err(e), _) | (_, Err(e)) => out.errors.push(err(e)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_has_fifteen_entries() {
        let t = builtin_partition_table();
        assert_eq!(t.len(), 15);
        let data = t.iter().find(|e| e.name == "data").unwrap();
        assert_eq!((data.offset, data.size), (0xfdc00000, 0x2ad800000));
        let bl = &t[0];
        assert_eq!((bl.name.as_str(), bl.offset, bl.size), ("bootloader", 0, 0x400000));
        let listed: Vec<_> = t.iter().filter(|e| e.listed_in_fastboot).map(|e| e.name.as_str()).collect();
        assert_eq!(listed, ["boot", "vendor", "odm", "system", "data"]);
        validate_table(&t).unwrap();
    }

    #[test]
    fn empty_log_gives_empty_table() {
        assert_eq!(parse_kernel_log_table(""), KernelLogTable::default());
    }

    #[test]
    fn ignores_ordinary_log_lines() {
        let log = "[    0.1] init: starting service\n[    0.2] healthd: battery l=100 v=4\n";
        let t = parse_kernel_log_table(log);
        assert!(t.entries.is_empty());
        assert!(t.errors.is_empty());
    }

    #[test]
    fn mixed_radix_and_prefixes() {
        let log = "<6>[    1.0] part: misc : 0x07200000 1048576\nlogo: 114294784 0x400000\n";
        let t = parse_kernel_log_table(log);
        assert_eq!(t.entries.len(), 2);
        assert_eq!(t.entries[0].name, "misc");
        assert_eq!(t.entries[0].size, 0x100000);
        assert_eq!(t.entries[1].offset, 0x06d00000);
    }

    #[test]
    fn overlap_detected() {
        let t = vec![
            PartitionEntry::new("a", 0, 10, Provenance::KernelLog),
            PartitionEntry::new("b", 9, 10, Provenance::KernelLog),
        ];
        assert!(matches!(validate_table(&t), Err(ImageError::Overlap { .. })));
    }
}
