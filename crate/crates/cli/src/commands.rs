use std::fs::{self, File};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use fearec_core::check;
use fearec_core::checkpoint;
use fearec_core::data::{build_dataset, load_interactions, pad_truncate, synthetic_periodic, EvalSplit, Format, SequenceDataset};
use fearec_core::encoder::Encoder;
use fearec_core::eval::{evaluate as evaluate_split, export_attention, EvalReport};
use fearec_core::training::Trainer;
use fearec_core::Error;

use crate::config::RunConfig;
use crate::failure::Failure;

pub enum Source {
    Log { path: PathBuf, format: Format, min_count: usize },
    Synthetic { users: usize, items: usize, period: usize, max_len: usize, seed: u64 },
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::io(format!("writing {}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::io(format!("creating {}: {e}", dir.display())))
}

fn report_json(report: &EvalReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes") + "\n"
}

pub fn prepare(source: Source, out: &Path) -> Result<(), Failure> {
    let ds = match source {
        Source::Log { path, format, min_count } => {
            if !path.exists() {
                return Err(Failure::io(format!("{}: no such file", path.display())));
            }
            build_dataset(&load_interactions(&path, format)?, min_count)?
        }
        Source::Synthetic { users, items, period, max_len, seed } => synthetic_periodic(users, items, period, max_len, seed)?,
    };
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    ds.save(out)?;
    println!("{}", ds.stats());
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<(), Failure> {
    let seed = cfg.seed.ok_or_else(|| Failure::config("train needs a seed (--seed or `seed = ...`)"))?;
    let dataset = cfg.dataset.as_ref().ok_or_else(|| Failure::config("train needs a dataset (--dataset or `dataset = ...`)"))?;
    let out = cfg.out.as_ref().ok_or_else(|| Failure::config("train needs an output directory (--out or `out = ...`)"))?;
    let ds = SequenceDataset::load(dataset)?;
    let model = cfg.model_config(ds.num_items());
    model.validate()?;
    let tc = cfg.train_config();
    debug_assert_eq!(tc.seed, seed);

    create_dir(out)?;
    write_file(&out.join("config.toml"), cfg.to_toml())?;
    let log_path = out.join("train.log");
    let mut log = File::create(&log_path).map_err(|e| Failure::io(format!("creating {}: {e}", log_path.display())))?;

    let mut trainer = Trainer::new(model.clone(), tc, cfg.weights(), &ds)?;
    let mut best = f64::NEG_INFINITY;
    let mut since_best = 0;
    for _ in 0..cfg.epochs {
        let line = trainer.run_epoch()?;
        println!("{line}");
        writeln!(log, "{line}").map_err(|e| Failure::io(format!("writing {}: {e}", log_path.display())))?;
        let epoch = trainer.epochs_done();
        let report = evaluate_split(trainer.encoder(), trainer.params(), &ds, EvalSplit::Valid, cfg.exclude_seen)?;
        println!("epoch={epoch} valid {report}");
        write_file(&out.join(format!("eval_epoch{epoch}.json")), report_json(&report))?;
        if report.ndcg10 > best {
            best = report.ndcg10;
            since_best = 0;
            checkpoint::save(&out.join("best.ckpt"), &model, trainer.params())?;
        } else {
            since_best += 1;
            if cfg.patience > 0 && since_best >= cfg.patience {
                println!("stopping: no validation NDCG@10 improvement for {since_best} epochs");
                break;
            }
        }
    }
    checkpoint::save(&out.join("last.ckpt"), &model, trainer.params())?;
    Ok(())
}

fn load_pair(checkpoint_path: &Path, dataset: &Path) -> Result<(Encoder, fearec_core::encoder::ModelParams, SequenceDataset), Failure> {
    let (model, params) = checkpoint::load(checkpoint_path)?;
    let ds = SequenceDataset::load(dataset)?;
    if model.num_items != ds.num_items() {
        return Err(Error::Vocabulary(format!(
            "checkpoint has {} items, dataset has {}",
            model.num_items,
            ds.num_items()
        ))
        .into());
    }
    Ok((Encoder::new(model)?, params, ds))
}

pub fn evaluate(checkpoint_path: &Path, dataset: &Path, split: EvalSplit, exclude_seen: bool, out: Option<&Path>) -> Result<(), Failure> {
    let (encoder, params, ds) = load_pair(checkpoint_path, dataset)?;
    let report = evaluate_split(&encoder, &params, &ds, split, exclude_seen)?;
    let name = match split {
        EvalSplit::Valid => "eval_valid.json",
        EvalSplit::Test => "eval_test.json",
    };
    let path = match out {
        Some(p) => p.to_path_buf(),
        None => checkpoint_path.parent().unwrap_or(Path::new(".")).join(name),
    };
    write_file(&path, report_json(&report))?;
    println!("{report}");
    Ok(())
}

fn resolve_user(ds: &SequenceDataset, user: &str) -> Result<usize, Failure> {
    if let Some(u) = ds.users.iter().position(|name| name == user) {
        return Ok(u);
    }
    match user.parse::<usize>() {
        Ok(u) if u < ds.num_users() => Ok(u),
        _ => Err(Error::UnknownUser {
            user: user.to_string(),
            count: ds.num_users(),
        }
        .into()),
    }
}

pub fn inspect(checkpoint_path: &Path, dataset: &Path, user: &str, out: &Path) -> Result<(), Failure> {
    let (encoder, params, ds) = load_pair(checkpoint_path, dataset)?;
    let u = resolve_user(&ds, user)?;
    let (history, _) = ds.eval_example(u, EvalSplit::Test);
    let ids = pad_truncate(history, encoder.config().max_len);
    for path in export_attention(&encoder, &params, &ids, out)? {
        println!("{}", path.display());
    }
    Ok(())
}

pub fn check(seed: u64) -> Result<(), Failure> {
    let results = check::run_all(seed);
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed == 0 {
        println!("all {} suites passed", results.len());
        Ok(())
    } else {
        Err(Failure::Check(format!("{failed} of {} suites failed", results.len())))
    }
}
