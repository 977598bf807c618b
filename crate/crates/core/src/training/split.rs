use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::skeleton::{AgeGroup, DatasetManifest};

/// Train/test partition by subject id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    pub train: BTreeSet<u32>,
    pub test: BTreeSet<u32>,
    pub domain: Option<String>,
}

impl SplitSpec {
    pub fn new(train: BTreeSet<u32>, test: BTreeSet<u32>, domain: Option<String>) -> Result<Self> {
        if train.is_empty() || test.is_empty() {
            return Err(Error::InvalidSplit(format!(
                "empty side: {} train, {} test subjects",
                train.len(),
                test.len()
            )));
        }
        if let Some(id) = train.intersection(&test).next() {
            return Err(Error::InvalidSplit(format!("subject {id} on both sides")));
        }
        Ok(Self {
            train,
            test,
            domain,
        })
    }

    /// `cs`, `age:elderly`, `age:adult` or `age:mixed`.
    pub fn parse(name: &str, manifest: &DatasetManifest) -> Result<Self> {
        match name {
            "cs" => split_cross_subject(manifest),
            "age:elderly" => Ok(split_cross_age(manifest)?.elderly),
            "age:adult" => Ok(split_cross_age(manifest)?.adult),
            "age:mixed" => Ok(split_cross_age(manifest)?.mixed),
            other => Err(Error::InvalidSplit(format!(
                "unknown split {other:?}; expected cs, age:elderly, age:adult or age:mixed"
            ))),
        }
    }
}

/// Test subjects are the ids divisible by three.
pub fn split_cross_subject(manifest: &DatasetManifest) -> Result<SplitSpec> {
    let (test, train) = manifest.subjects().into_iter().partition(|id| id % 3 == 0);
    SplitSpec::new(train, test, Some("cs".into()))
}

/// The three cross-age training domains. `mixed` is tested on the union of
/// both age-specific test sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrossAgeSplits {
    pub elderly: SplitSpec,
    pub adult: SplitSpec,
    pub mixed: SplitSpec,
}

pub const ELDERLY_IDS: std::ops::RangeInclusive<u32> = 1..=50;
pub const ADULT_IDS: std::ops::RangeInclusive<u32> = 51..=100;

pub fn split_cross_age(manifest: &DatasetManifest) -> Result<CrossAgeSplits> {
    for e in &manifest.entries {
        let range = match e.age {
            AgeGroup::Elderly => ELDERLY_IDS,
            AgeGroup::Adult => ADULT_IDS,
        };
        if !range.contains(&e.subject) {
            return Err(Error::InvalidSplit(format!(
                "{} subject {} outside ids {}..={}",
                e.age,
                e.subject,
                range.start(),
                range.end()
            )));
        }
    }
    let ids = manifest.subjects();
    let side = |range: std::ops::RangeInclusive<u32>, tag: &str| {
        let (test, train) = ids
            .iter()
            .filter(|id| range.contains(id))
            .partition(|&&id| id % 3 == 0);
        SplitSpec::new(train, test, Some(tag.into()))
    };
    let elderly = side(ELDERLY_IDS, "age:elderly")?;
    let adult = side(ADULT_IDS, "age:adult")?;
    let mixed_train = ids.iter().copied().filter(|&id| id % 3 == 1 && id <= 97).collect();
    let both_tests = elderly.test.union(&adult.test).copied().collect();
    let mixed = SplitSpec::new(mixed_train, both_tests, Some("age:mixed".into()))?;
    Ok(CrossAgeSplits {
        elderly,
        adult,
        mixed,
    })
}
