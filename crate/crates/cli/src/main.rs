mod args;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use fsacnn::diagnostics::{layer_grad_check, model_grad_check, LAYER_TOLERANCE, MODEL_TOLERANCE};
use fsacnn::evaluation::{
    cross_domain_matrix, evaluate, format_sweep, fusion_eval, length_sweep, LengthMode,
};
use fsacnn::model::{build_model, load_checkpoint, save_checkpoint, ModelConfig};
use fsacnn::skeleton::{dataset_stats, dataset_stats_by_age, synth_generate, Corpus, DatasetStats, SynthConfig};
use fsacnn::training::{format_history, train_with, SplitSpec, TrainConfig};
use fsacnn::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use args::*;

enum Failure {
    User(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonFinite(_)
            | Error::ShapeMismatch { .. }
            | Error::InvalidShape { .. }
            | Error::NonScalarRoot(_) => Failure::Internal(e.to_string()),
            _ => Failure::User(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::User(format!("{}: {e}", path.display()))
}

fn write_output(text: &str, out: Option<&Path>) -> Outcome {
    print!("{text}");
    if let Some(p) = out {
        fs::write(p, text).map_err(|e| io_err(p, e))?;
    }
    Ok(())
}

fn announce(what: &str, config: &impl serde::Serialize) {
    let json = serde_json::to_string(config).unwrap_or_else(|e| format!("<{e}>"));
    eprintln!("{what}: {json}");
}

fn classes_of(corpus: &Corpus, requested: Option<usize>) -> usize {
    requested.unwrap_or_else(|| corpus.manifest.classes().last().map_or(0, |c| c + 1))
}

fn synth(a: &SynthArgs) -> Outcome {
    let cfg = SynthConfig {
        reps: a.reps,
        ..SynthConfig::default()
    };
    announce("synth config", &cfg);
    eprintln!("seed: {}", a.seed);
    let corpus = synth_generate(a.subjects, a.classes, &cfg, &mut ChaCha8Rng::seed_from_u64(a.seed))?;
    let manifest = corpus.write(&a.out)?;
    println!("wrote {} sequences, manifest {}", corpus.len(), manifest.display());
    Ok(())
}

fn stats_row(out: &mut String, group: &str, s: &DatasetStats) {
    let _ = writeln!(
        out,
        "{group}\t{}\t{:.3}\t{:.3}\t{:.6}\t{:.6}",
        s.sequences, s.avg_frame_length, s.var_frame_length, s.avg_motion_diff, s.var_motion_diff
    );
}

fn stats(a: &StatsArgs) -> Outcome {
    eprintln!("excluded actions: {:?}, by age: {}", a.exclude, a.by_age);
    let corpus = Corpus::load(&a.manifest)?;
    let mut out = String::from(
        "group\tsequences\tavg_frame_length\tvar_frame_length\tavg_motion_diff\tvar_motion_diff\n",
    );
    if a.by_age {
        for (age, s) in dataset_stats_by_age(&corpus.sequences, &a.exclude)? {
            stats_row(&mut out, age.as_str(), &s);
        }
    } else {
        stats_row(&mut out, "all", &dataset_stats(&corpus.sequences, &a.exclude)?);
    }
    write_output(&out, None)
}

fn announce_training(model: &ModelConfig, train: &TrainConfig) {
    announce("model config", model);
    announce("train config", train);
    eprintln!("seed: {}", train.seed);
}

fn train(a: &TrainArgs) -> Outcome {
    let corpus = Corpus::load(&a.manifest)?;
    let split = SplitSpec::parse(&a.split, &corpus.manifest)?;
    let model_cfg = a.model.config(classes_of(&corpus, a.classes));
    let train_cfg = a.optim.config(a.eval_each_epoch);
    announce_training(&model_cfg, &train_cfg);
    let init = build_model(&model_cfg, &mut ChaCha8Rng::seed_from_u64(train_cfg.seed))?;
    eprintln!(
        "split {}: {} train / {} test subjects, {} parameters",
        a.split,
        split.train.len(),
        split.test.len(),
        init.param_count()
    );
    let outcome = train_with(&init, &corpus, &split, &train_cfg, |r| {
        let acc = r.test_acc.map_or_else(|| "-".into(), |v| format!("{v:.4}"));
        eprintln!(
            "epoch {} loss {:.4} test_acc {acc} skipped {} ({:.1}s)",
            r.epoch, r.train_loss, r.skipped, r.wall_seconds
        );
    })?;
    save_checkpoint(&outcome.model, &a.out)?;
    let history = a.history.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".history.tsv");
        PathBuf::from(p)
    });
    fs::write(&history, format_history(&outcome.history)).map_err(|e| io_err(&history, e))?;
    println!("checkpoint {}, history {}", a.out.display(), history.display());
    Ok(())
}

fn test_subjects(split: &str, corpus: &Corpus) -> Result<BTreeSet<u32>, Failure> {
    Ok(SplitSpec::parse(split, &corpus.manifest)?.test)
}

fn eval(a: &EvalArgs) -> Outcome {
    let model = load_checkpoint(&a.ckpt)?;
    announce("model config", &model.config);
    eprintln!("split: {}, length: {}", a.split, a.length);
    let corpus = Corpus::load(&a.manifest)?;
    let report = evaluate(&model, &corpus, &test_subjects(&a.split, &corpus)?, a.length)?;
    write_output(&report.to_tsv(), a.out.as_deref())
}

fn sweep(a: &SweepArgs) -> Outcome {
    let model = load_checkpoint(&a.ckpt)?;
    announce("model config", &model.config);
    let native = a.native.then_some(LengthMode::Native);
    let modes: Vec<LengthMode> = native
        .into_iter()
        .chain(a.lengths.iter().map(|&l| LengthMode::Fixed(l)))
        .collect();
    eprintln!("split: {}, lengths: {:?}", a.split, a.lengths);
    let corpus = Corpus::load(&a.manifest)?;
    let rows = length_sweep(&model, &corpus, &test_subjects(&a.split, &corpus)?, &modes)?;
    write_output(&format_sweep(&rows), a.out.as_deref())
}

fn crossage(a: &CrossAgeArgs) -> Outcome {
    let corpus = Corpus::load(&a.manifest)?;
    let model_cfg = a.model.config(classes_of(&corpus, a.classes));
    let train_cfg = a.optim.config(false);
    announce_training(&model_cfg, &train_cfg);
    if let Some(dir) = &a.out_dir {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let mut save_err = None;
    let matrix = cross_domain_matrix(&corpus, &model_cfg, &train_cfg, train_cfg.seed, |name, m| {
        eprintln!("trained {name} model");
        if let Some(dir) = &a.out_dir {
            if let Err(e) = save_checkpoint(m, &dir.join(format!("{name}.ckpt"))) {
                save_err.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = save_err {
        return Err(e.into());
    }
    write_output(&matrix.to_tsv(), None)
}

fn fuse(a: &FuseArgs) -> Outcome {
    let model_a = load_checkpoint(&a.ckpt_a)?;
    let model_b = load_checkpoint(&a.ckpt_b)?;
    announce("model A config", &model_a.config);
    announce("model B config", &model_b.config);
    eprintln!("split: {}, weight: {}, length: {}", a.split, a.weight, a.length);
    let corpus_a = Corpus::load(&a.manifest)?;
    let corpus_b = a.manifest_b.as_deref().map(Corpus::load).transpose()?;
    let subjects = test_subjects(&a.split, &corpus_a)?;
    let report = fusion_eval(&model_a, &model_b, &corpus_a, corpus_b.as_ref(), &subjects, a.length, a.weight)?;
    write_output(&report.to_tsv(), a.out.as_deref())
}

fn gradcheck(a: &GradcheckArgs) -> Outcome {
    let (check, tol): (fn(u64) -> fsacnn::Result<_>, f64) = match a.scope {
        Scope::Layer => (layer_grad_check, LAYER_TOLERANCE),
        Scope::Model => (model_grad_check, MODEL_TOLERANCE),
    };
    eprintln!("scope: {:?}, seeds: {}..{}, tolerance: {tol:e}", a.scope, a.seed, a.seed + a.seeds);
    let mut worst: f64 = 0.0;
    println!("seed\tmax_rel_error\telements");
    for seed in a.seed..a.seed + a.seeds {
        let r = check(seed)?;
        println!("{seed}\t{:.3e}\t{}", r.max_rel_error, r.elements_checked);
        worst = worst.max(r.max_rel_error);
    }
    if worst > tol {
        return Err(Failure::Internal(format!(
            "max relative error {worst:.3e} above tolerance {tol:e}"
        )));
    }
    println!("max\t{worst:.3e}");
    Ok(())
}

fn run(cli: &Cli) -> Outcome {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::User(format!("--threads: {e}")))?;
    }
    match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Stats(a) => stats(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
        Command::Crossage(a) => crossage(a),
        Command::Fuse(a) => fuse(a),
        Command::Gradcheck(a) => gradcheck(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::User(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(2)
        }
    }
}
