use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};

use super::format::{load_sequence, save_sequence, DatasetManifest, ManifestEntry};
use super::sequence::SkeletonSequence;

/// A manifest together with its loaded sequences, index-aligned.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub manifest: DatasetManifest,
    pub sequences: Vec<SkeletonSequence>,
}

fn check_entry(entry: &ManifestEntry, seq: &SkeletonSequence, path: &Path) -> Result<()> {
    let m = &seq.meta;
    if m.subject != entry.subject
        || m.action != entry.action
        || m.age != entry.age
        || seq.frames() != entry.frames
    {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!(
                "header (subject {}, action {}, {}, {} frames) disagrees with manifest \
                 (subject {}, action {}, {}, {} frames)",
                m.subject,
                m.action,
                m.age,
                seq.frames(),
                entry.subject,
                entry.action,
                entry.age,
                entry.frames
            ),
        });
    }
    Ok(())
}

impl Corpus {
    /// Loads every sequence listed in the manifest at `path`.
    pub fn load(path: &Path) -> Result<Self> {
        let manifest = DatasetManifest::load(path)?;
        let sequences = manifest
            .entries
            .par_iter()
            .map(|e| {
                let p = manifest.resolve(e);
                let seq = load_sequence(&p)?;
                check_entry(e, &seq, &p)?;
                Ok(seq)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { manifest, sequences })
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Pairs of (entry, sequence) whose subject is in `subjects`.
    pub fn subset<'a>(
        &'a self,
        subjects: &'a std::collections::BTreeSet<u32>,
    ) -> impl Iterator<Item = (&'a ManifestEntry, &'a SkeletonSequence)> + 'a {
        self.manifest
            .entries
            .iter()
            .zip(&self.sequences)
            .filter(move |(e, _)| subjects.contains(&e.subject))
    }

    /// Writes every sequence plus `manifest.tsv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        for (entry, seq) in self.manifest.entries.iter().zip(&self.sequences) {
            save_sequence(seq, &dir.join(&entry.path))?;
        }
        let path = dir.join("manifest.tsv");
        self.manifest.save(&path)?;
        Ok(path)
    }
}
