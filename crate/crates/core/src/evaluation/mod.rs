//! Accuracy reports, the fixed-length sweep, the cross-age domain matrix and
//! two-modality late fusion.

use std::collections::{BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{build_model, fuse_scores_weighted, FsaModel, ModelConfig};
use crate::numerics::Tensor;
use crate::skeleton::{resample_evenly, Corpus, SkeletonSequence};
use crate::training::{is_length_failure, split_cross_age, train, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LengthMode {
    Native,
    /// Evenly spaced resampling to exactly this many frames.
    Fixed(usize),
}

impl fmt::Display for LengthMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LengthMode::Native => f.write_str("native"),
            LengthMode::Fixed(l) => write!(f, "{l}"),
        }
    }
}

impl std::str::FromStr for LengthMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "native" {
            return Ok(LengthMode::Native);
        }
        s.parse::<usize>()
            .ok()
            .filter(|&l| l > 0)
            .map(LengthMode::Fixed)
            .ok_or_else(|| Error::config(format!("length mode must be 'native' or a positive integer, got {s:?}")))
    }
}

impl LengthMode {
    pub fn apply(self, seq: &SkeletonSequence) -> Result<SkeletonSequence> {
        match self {
            LengthMode::Native => Ok(seq.clone()),
            LengthMode::Fixed(l) => resample_evenly(seq, l),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Fraction correct; NaN when every sample was excluded.
    pub accuracy: f64,
    /// NaN for classes without evaluated samples.
    pub per_class: Vec<f64>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub samples: usize,
    pub excluded: usize,
    pub mode: LengthMode,
}

impl EvalReport {
    /// Builds a report from `(label, prediction)` pairs, `None` marking an
    /// excluded sample.
    pub fn from_outcomes(
        n_classes: usize,
        mode: LengthMode,
        outcomes: impl IntoIterator<Item = Option<(usize, usize)>>,
    ) -> Result<Self> {
        let mut confusion = vec![vec![0usize; n_classes]; n_classes];
        let mut excluded = 0;
        for o in outcomes {
            match o {
                Some((label, pred)) => {
                    if label >= n_classes || pred >= n_classes {
                        return Err(Error::LabelOutOfRange {
                            label: label.max(pred),
                            classes: n_classes,
                        });
                    }
                    confusion[label][pred] += 1;
                }
                None => excluded += 1,
            }
        }
        let samples: usize = confusion.iter().flatten().sum();
        let trace: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
        let per_class = confusion
            .iter()
            .enumerate()
            .map(|(c, row)| {
                let n: usize = row.iter().sum();
                if n == 0 {
                    f64::NAN
                } else {
                    row[c] as f64 / n as f64
                }
            })
            .collect();
        let accuracy = if samples == 0 {
            f64::NAN
        } else {
            trace as f64 / samples as f64
        };
        Ok(Self {
            accuracy,
            per_class,
            confusion,
            samples,
            excluded,
            mode,
        })
    }

    pub fn trace(&self) -> usize {
        (0..self.confusion.len()).map(|c| self.confusion[c][c]).sum()
    }

    /// Tab-separated summary, per-class table and confusion matrix.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "mode\t{}", self.mode);
        let _ = writeln!(out, "samples\t{}", self.samples);
        let _ = writeln!(out, "excluded\t{}", self.excluded);
        let _ = writeln!(out, "accuracy\t{:.6}", self.accuracy);
        out.push_str("\nclass\taccuracy\tcount\n");
        for (c, (acc, row)) in self.per_class.iter().zip(&self.confusion).enumerate() {
            let _ = writeln!(out, "{c}\t{acc:.6}\t{}", row.iter().sum::<usize>());
        }
        out.push_str("\nconfusion");
        for c in 0..self.confusion.len() {
            let _ = write!(out, "\tpred_{c}");
        }
        out.push('\n');
        for (c, row) in self.confusion.iter().enumerate() {
            let _ = write!(out, "true_{c}");
            for v in row {
                let _ = write!(out, "\t{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Anything that maps a sequence to class logits.
pub trait Classifier: Sync {
    fn n_classes(&self) -> usize;
    fn logits(&self, seq: &SkeletonSequence) -> Result<Tensor>;
}

impl Classifier for FsaModel {
    fn n_classes(&self) -> usize {
        self.config.n_classes
    }

    fn logits(&self, seq: &SkeletonSequence) -> Result<Tensor> {
        self.predict(seq)
    }
}

/// `Ok(None)` for samples a length precondition rules out.
fn excluded_on_length<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(e) if is_length_failure(&e) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn evaluate_samples<C: Classifier>(
    classifier: &C,
    samples: &[(&SkeletonSequence, usize)],
    mode: LengthMode,
) -> Result<EvalReport> {
    let outcomes = samples
        .par_iter()
        .map(|&(seq, label)| {
            let logits = excluded_on_length(mode.apply(seq).and_then(|s| classifier.logits(&s)))?;
            Ok(logits.map(|l| (label, l.argmax())))
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_outcomes(classifier.n_classes(), mode, outcomes)
}

fn samples_for<'a>(corpus: &'a Corpus, subjects: &'a BTreeSet<u32>) -> Result<Vec<(&'a SkeletonSequence, usize)>> {
    let samples: Vec<_> = corpus.subset(subjects).map(|(e, s)| (s, e.action)).collect();
    if samples.is_empty() {
        return Err(Error::EmptyDataset("no test sequences for the given subjects".into()));
    }
    Ok(samples)
}

/// Evaluates on every sequence whose subject is in `subjects`.
pub fn evaluate<C: Classifier>(
    classifier: &C,
    corpus: &Corpus,
    subjects: &BTreeSet<u32>,
    mode: LengthMode,
) -> Result<EvalReport> {
    evaluate_samples(classifier, &samples_for(corpus, subjects)?, mode)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub mode: LengthMode,
    pub accuracy: f64,
    pub excluded: usize,
}

pub const DEFAULT_SWEEP: [usize; 6] = [16, 32, 48, 64, 96, 128];

/// Frozen-model accuracy at each length. Fixed lengths must be ascending.
pub fn length_sweep<C: Classifier>(
    classifier: &C,
    corpus: &Corpus,
    subjects: &BTreeSet<u32>,
    modes: &[LengthMode],
) -> Result<Vec<SweepRow>> {
    let fixed: Vec<usize> = modes
        .iter()
        .filter_map(|m| match m {
            LengthMode::Fixed(l) => Some(*l),
            LengthMode::Native => None,
        })
        .collect();
    if fixed.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("sweep lengths must be strictly ascending"));
    }
    let samples = samples_for(corpus, subjects)?;
    modes
        .iter()
        .map(|&mode| {
            let r = evaluate_samples(classifier, &samples, mode)?;
            Ok(SweepRow {
                mode,
                accuracy: r.accuracy,
                excluded: r.excluded,
            })
        })
        .collect()
}

pub fn format_sweep(rows: &[SweepRow]) -> String {
    let mut out = String::from("length\taccuracy\texcluded\n");
    for r in rows {
        let _ = writeln!(out, "{}\t{:.6}\t{}", r.mode, r.accuracy, r.excluded);
    }
    out
}

/// Rows are training domains, columns the elderly and adult test sets.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossDomainMatrix {
    pub rows: Vec<(String, [f64; 2])>,
}

impl CrossDomainMatrix {
    pub fn get(&self, domain: &str) -> Option<[f64; 2]> {
        self.rows.iter().find(|(d, _)| d == domain).map(|(_, r)| *r)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("train\telderly_test\tadult_test\n");
        for (d, [e, a]) in &self.rows {
            let _ = writeln!(out, "{d}\t{e:.6}\t{a:.6}");
        }
        out
    }
}

/// Trains one model per cross-age domain (each from the same initial
/// weights) and evaluates each on both age-specific test sets.
pub fn cross_domain_matrix(
    corpus: &Corpus,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    init_seed: u64,
    mut on_model: impl FnMut(&str, &FsaModel),
) -> Result<CrossDomainMatrix> {
    let splits = split_cross_age(&corpus.manifest)?;
    let init = build_model(model_cfg, &mut ChaCha8Rng::seed_from_u64(init_seed))?;
    let mut rows = Vec::new();
    for (name, split) in [
        ("elderly", &splits.elderly),
        ("adult", &splits.adult),
        ("mixed", &splits.mixed),
    ] {
        let model = train(&init, corpus, split, train_cfg)?.model;
        on_model(name, &model);
        let e = evaluate(&model, corpus, &splits.elderly.test, LengthMode::Native)?;
        let a = evaluate(&model, corpus, &splits.adult.test, LengthMode::Native)?;
        rows.push((name.to_string(), [e.accuracy, a.accuracy]));
    }
    Ok(CrossDomainMatrix { rows })
}

fn file_stem(p: &Path) -> Option<String> {
    p.file_stem().map(|s| s.to_string_lossy().into_owned())
}

/// Late fusion of two models over parallel views of the same samples.
/// Without `corpus_b`, both models read `corpus_a` (each model projects to
/// its own modality). Otherwise samples are paired by file stem and those
/// present in one modality only are excluded.
pub fn fusion_eval(
    model_a: &FsaModel,
    model_b: &FsaModel,
    corpus_a: &Corpus,
    corpus_b: Option<&Corpus>,
    subjects: &BTreeSet<u32>,
    mode: LengthMode,
    weight_a: f64,
) -> Result<EvalReport> {
    let n_classes = model_a.config.n_classes;
    if model_b.config.n_classes != n_classes {
        return Err(Error::config(format!(
            "models disagree on class count: {} vs {}",
            n_classes, model_b.config.n_classes
        )));
    }
    let by_stem: Option<HashMap<String, &SkeletonSequence>> = corpus_b.map(|c| {
        c.manifest
            .entries
            .iter()
            .zip(&c.sequences)
            .filter_map(|(e, s)| file_stem(&e.path).map(|k| (k, s)))
            .collect()
    });
    let pairs: Vec<(&SkeletonSequence, Option<&SkeletonSequence>, usize)> = corpus_a
        .subset(subjects)
        .map(|(e, s)| {
            let b = match &by_stem {
                None => Some(s),
                Some(map) => file_stem(&e.path).and_then(|k| map.get(&k).copied()),
            };
            (s, b, e.action)
        })
        .collect();
    if pairs.is_empty() {
        return Err(Error::EmptyDataset("no test sequences for the given subjects".into()));
    }
    let outcomes = pairs
        .par_iter()
        .map(|&(a, b, label)| {
            let Some(b) = b else { return Ok(None) };
            let la = excluded_on_length(mode.apply(a).and_then(|s| model_a.predict(&s)))?;
            let lb = excluded_on_length(mode.apply(b).and_then(|s| model_b.predict(&s)))?;
            match (la, lb) {
                (Some(la), Some(lb)) => Ok(Some((label, fuse_scores_weighted(&la, &lb, weight_a)?.argmax()))),
                _ => Ok(None),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_outcomes(n_classes, mode, outcomes)
}
