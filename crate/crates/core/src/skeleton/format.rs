//! `.skl` sequence files and tab-separated manifests.
//!
//! ```text
//! SKL 1
//! subject=<int> action=<int> age=<elderly|adult> bodies=<1|2> joints=<int> dims=<int> frames=<int>
//! <one line per frame: joints*dims*bodies space-separated reals>
//! ```

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::sequence::{AgeGroup, SequenceMeta, SkeletonSequence};

const MAGIC: &str = "SKL 1";

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Serialises a sequence. Reals use the shortest representation that
/// parses back to the same bits.
pub fn format_sequence(seq: &SkeletonSequence) -> String {
    let mut out = String::with_capacity(seq.coords().len() * 12 + 128);
    out.push_str(MAGIC);
    out.push('\n');
    let _ = writeln!(
        out,
        "subject={} action={} age={} bodies={} joints={} dims={} frames={}",
        seq.meta.subject,
        seq.meta.action,
        seq.meta.age,
        seq.bodies(),
        seq.joints(),
        seq.dims(),
        seq.frames()
    );
    for t in 0..seq.frames() {
        for (i, v) in seq.frame(t).iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub fn save_sequence(seq: &SkeletonSequence, path: &Path) -> Result<()> {
    fs::write(path, format_sequence(seq))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Parses `.skl` text; `path` is only used in error messages.
pub fn parse_sequence(text: &str, path: &Path) -> Result<SkeletonSequence> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, MAGIC)) => {}
        Some((n, other)) => return Err(parse_err(path, n, format!("bad magic {other:?}"))),
        None => return Err(parse_err(path, 1, "empty file")),
    }
    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 2, "missing header"))?;

    let keys = ["subject", "action", "age", "bodies", "joints", "dims", "frames"];
    let tokens: Vec<&str> = header.split(' ').collect();
    if tokens.len() != keys.len() {
        return Err(parse_err(path, hline, format!("expected {} header fields", keys.len())));
    }
    let mut values = Vec::with_capacity(keys.len());
    for (tok, key) in tokens.iter().zip(keys) {
        let v = tok
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix('='))
            .ok_or_else(|| parse_err(path, hline, format!("expected {key}=..., got {tok:?}")))?;
        values.push(v);
    }
    let int = |i: usize| -> Result<usize> {
        values[i]
            .parse()
            .map_err(|_| parse_err(path, hline, format!("{} is not an integer", keys[i])))
    };
    let subject = int(0)? as u32;
    let action = int(1)?;
    let age: AgeGroup = values[2].parse().map_err(|e: String| parse_err(path, hline, e))?;
    let bodies = int(3)?;
    let joints = int(4)?;
    let dims = int(5)?;
    let frames = int(6)?;
    if subject == 0 {
        return Err(parse_err(path, hline, "subject ids start at 1"));
    }
    if !(1..=2).contains(&bodies) || joints == 0 || dims == 0 || frames == 0 {
        return Err(parse_err(path, hline, "bodies must be 1 or 2; joints, dims, frames positive"));
    }

    let width = joints * dims * bodies;
    let mut coords = Vec::with_capacity(width * frames);
    let mut seen = 0;
    for (n, line) in lines {
        if seen == frames {
            if line.trim().is_empty() {
                continue;
            }
            return Err(parse_err(path, n, format!("more than {frames} frame lines")));
        }
        let before = coords.len();
        for tok in line.split_ascii_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(path, n, format!("non-numeric token {tok:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(path, n, format!("non-finite value {tok:?}")));
            }
            coords.push(v);
        }
        let got = coords.len() - before;
        if got != width {
            return Err(parse_err(path, n, format!("frame has {got} values, expected {width}")));
        }
        seen += 1;
    }
    if seen != frames {
        return Err(parse_err(
            path,
            hline,
            format!("header declares {frames} frames, file has {seen}"),
        ));
    }
    SkeletonSequence::new(
        SequenceMeta {
            subject,
            action,
            age,
        },
        joints,
        dims,
        bodies,
        coords,
    )
}

pub fn load_sequence(path: &Path) -> Result<SkeletonSequence> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_sequence(&text, path)
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub subject: u32,
    pub action: usize,
    pub age: AgeGroup,
    pub frames: usize,
}

/// Index of a corpus. Relative paths resolve against `root`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(root: PathBuf, entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(&e.path) {
                return Err(Error::config(format!("duplicate manifest path {}", e.path.display())));
            }
        }
        Ok(Self { root, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn subjects(&self) -> BTreeSet<u32> {
        self.entries.iter().map(|e| e.subject).collect()
    }

    pub fn classes(&self) -> BTreeSet<usize> {
        self.entries.iter().map(|e| e.action).collect()
    }

    /// Smallest class count that covers every label (`max + 1`).
    pub fn class_count(&self) -> usize {
        self.classes().last().map_or(0, |m| m + 1)
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.root.join(&entry.path)
        }
    }

    pub fn format(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                e.path.display(),
                e.subject,
                e.action,
                e.age,
                e.frames
            );
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.format()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn parse(text: &str, root: PathBuf, path: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 {
                return Err(parse_err(path, n, format!("expected 5 tab-separated fields, got {}", f.len())));
            }
            let num = |s: &str, what: &str| -> Result<usize> {
                s.parse().map_err(|_| parse_err(path, n, format!("{what} {s:?} is not an integer")))
            };
            entries.push(ManifestEntry {
                path: PathBuf::from(f[0]),
                subject: num(f[1], "subject")? as u32,
                action: num(f[2], "action")?,
                age: f[3].parse().map_err(|e: String| parse_err(path, n, e))?,
                frames: num(f[4], "frames")?,
            });
        }
        Self::new(root, entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, root, path)
    }
}
