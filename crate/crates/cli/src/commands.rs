use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use softtarget_core::analysis::{binarize, colabel_covariance, CoLabelMatrix};
use softtarget_core::checkpoint::Checkpoint;
use softtarget_core::experiment::{
    compare_runs, predict_all, write_report, DatasetSource, EpochRecord, Experiment,
    ExperimentConfig, SoftTargetSettings, TrainReport,
};

use crate::args::{AnalyzeArgs, CompareArgs, ConfigArgs, GridArgs, Overrides, Split, TrainArgs};
use crate::exit::UsageError;

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn base_config(source: &ConfigArgs) -> Result<Option<ExperimentConfig>> {
    let cfg = match (&source.config, &source.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => return Ok(None),
    };
    Ok(Some(cfg))
}

/// Applies data location and size overrides.
fn apply_source(cfg: &mut ExperimentConfig, source: &ConfigArgs) -> Result<()> {
    if let Some(dir) = &source.data_dir {
        cfg.set_data_dir(dir.clone());
    }
    match &mut cfg.dataset {
        DatasetSource::Idx {
            train_limit,
            test_limit,
            ..
        } => {
            if source.train_limit.is_some() {
                *train_limit = source.train_limit;
            }
            if source.test_limit.is_some() {
                *test_limit = source.test_limit;
            }
        }
        DatasetSource::Synth { .. } => {
            if source.train_limit.is_some() || source.test_limit.is_some() {
                return Err(usage(
                    "--train-limit/--test-limit only apply to IDX datasets",
                ));
            }
        }
    }
    Ok(())
}

fn apply_overrides(cfg: &mut ExperimentConfig, o: &Overrides) {
    if let Some(v) = &o.name {
        cfg.name = Some(v.clone());
    }
    if let Some(v) = o.arch {
        cfg.architecture = v;
    }
    if let Some(v) = o.dropout {
        cfg.dropout = v;
    }
    if o.no_softtarget {
        cfg.softtarget = None;
    }
    if o.beta.is_some() || o.gamma.is_some() || o.burn_in.is_some() || o.epochs_per_step.is_some() {
        let st = cfg
            .softtarget
            .get_or_insert_with(SoftTargetSettings::default);
        st.beta = o.beta.unwrap_or(st.beta);
        st.gamma = o.gamma.unwrap_or(st.gamma);
        st.burn_in = o.burn_in.unwrap_or(st.burn_in);
        st.epochs_per_step = o.epochs_per_step.unwrap_or(st.epochs_per_step);
    }
    if let Some(v) = o.rho {
        cfg.optimizer.rho = v;
    }
    if let Some(v) = o.eps {
        cfg.optimizer.eps = v;
    }
    if let Some(v) = o.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = o.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if let Some(v) = &o.checkpoint_epochs {
        cfg.checkpoint_epochs = v.clone();
    }
    if o.dump_soft_targets {
        cfg.dump_soft_targets = true;
    }
}

fn resolve(source: &ConfigArgs, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg =
        base_config(source)?.ok_or_else(|| usage("one of --config or --preset is required"))?;
    apply_source(&mut cfg, source)?;
    apply_overrides(&mut cfg, overrides);
    Ok(cfg)
}

fn load_data(
    cfg: &ExperimentConfig,
) -> Result<(
    softtarget_core::data::Dataset,
    softtarget_core::data::Dataset,
)> {
    let data = cfg
        .dataset
        .load()
        .with_context(|| format!("loading dataset {}", cfg.dataset.describe()))?;
    Ok(data)
}

fn print_epoch(total: usize) -> impl FnMut(&EpochRecord) {
    move |r| {
        eprintln!(
            "epoch {:>3}/{total} {:<10} train {:.4} (hard {:.4})  test {:.4}  acc {:.4}  {} ms",
            r.epoch,
            r.phase.to_string(),
            r.train_loss,
            r.train_loss_hard,
            r.test_loss,
            r.test_accuracy,
            r.wall_ms
        )
    }
}

pub fn train(args: TrainArgs) -> Result<()> {
    let mut cfg = resolve(&args.source, &args.overrides)?;
    let out = args
        .output_dir
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(cfg.name.as_deref().unwrap_or("run")));
    cfg.output_dir = Some(out.clone());
    if args.print_config {
        println!("{}", cfg.to_json());
        return Ok(());
    }
    cfg.validate()?;
    let (train, test) = load_data(&cfg)?;
    eprintln!(
        "{} | {} | {} | {} train / {} test | {} epochs",
        cfg.architecture,
        cfg.regime(),
        cfg.dataset.describe(),
        train.len(),
        test.len(),
        cfg.trained_epochs()
    );
    let mut exp = Experiment::new(cfg.clone(), &train, &test)?;
    if !args.quiet {
        exp = exp.on_epoch(print_epoch(cfg.trained_epochs()));
    }
    let outcome = exp.run()?;
    write_report(&out, &outcome.report)?;
    println!("min loss | last loss | max acc: {}", outcome.report.summary);
    println!("wrote {}", out.display());
    Ok(())
}

fn path_safe(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn grid(args: GridArgs) -> Result<()> {
    let mut base = resolve(&args.source, &args.overrides)?;
    base.output_dir = None;
    let settings = base.softtarget.unwrap_or_default();
    let seeds = args.seeds.clone().unwrap_or_else(|| vec![base.seed]);

    let mut cells = Vec::new();
    for arch in &args.archs {
        for regime in &args.regimes {
            for &seed in &seeds {
                let mut cfg = base.clone();
                cfg.architecture = *arch;
                regime.apply(&mut cfg, settings);
                cfg.seed = seed;
                let label = format!("{arch}-{regime}-seed{seed}");
                cfg.output_dir = Some(
                    args.output_dir
                        .join(arch.to_string())
                        .join(path_safe(&regime.to_string()))
                        .join(format!("seed{seed}")),
                );
                cfg.name = Some(label);
                cfg.validate()?;
                cells.push(cfg);
            }
        }
    }

    let (train, test) = load_data(&base)?;
    eprintln!(
        "{} runs on {} train / {} test samples",
        cells.len(),
        train.len(),
        test.len()
    );
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.unwrap_or(0))
        .build()
        .context("starting worker threads")?;
    let reports: Vec<TrainReport> = pool.install(|| {
        cells
            .par_iter()
            .map(|cfg| {
                let name = cfg.name.clone().unwrap_or_default();
                let outcome = Experiment::new(cfg.clone(), &train, &test)?
                    .run()
                    .with_context(|| format!("run {name}"))?;
                let dir = cfg
                    .output_dir
                    .as_deref()
                    .expect("grid cells have output dirs");
                write_report(dir, &outcome.report)?;
                eprintln!("done {name}: {}", outcome.report.summary);
                Ok(outcome.report)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    emit_table(
        &reports,
        Some(&args.output_dir.join("comparison.md")),
        Some(&args.output_dir.join("comparison.csv")),
    )
}

fn emit_table(reports: &[TrainReport], markdown: Option<&Path>, csv: Option<&Path>) -> Result<()> {
    let table = compare_runs(reports)?;
    let md = table.to_markdown();
    print!("{md}");
    if let Some(p) = markdown {
        fs::write(p, &md).map_err(|e| softtarget_core::Error::io(p, e))?;
    }
    if let Some(p) = csv {
        table.write_csv(p)?;
    }
    Ok(())
}

fn find_reports(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    for input in inputs {
        if input.is_dir() {
            for entry in walkdir::WalkDir::new(input) {
                let entry = entry.with_context(|| format!("scanning {}", input.display()))?;
                if entry.file_type().is_file() && entry.file_name() == "report.json" {
                    found.push(entry.into_path());
                }
            }
        } else {
            found.push(input.clone());
        }
    }
    found.sort();
    found.dedup();
    Ok(found)
}

pub fn compare(args: CompareArgs) -> Result<()> {
    let paths = find_reports(&args.inputs)?;
    if paths.is_empty() {
        return Err(usage("no report.json files found"));
    }
    let reports = paths
        .iter()
        .map(|p| TrainReport::load(p).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    emit_table(&reports, args.markdown.as_deref(), args.csv.as_deref())
}

/// Epoch number from a `checkpoint_<epoch>.<ext>` file name.
fn checkpoint_epoch(path: &Path) -> Option<u64> {
    path.file_stem()?
        .to_str()?
        .strip_prefix("checkpoint_")?
        .parse()
        .ok()
}

fn find_checkpoints(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut here: Vec<(u64, PathBuf)> = fs::read_dir(input)
                .map_err(|e| softtarget_core::Error::io(input, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter_map(|p| checkpoint_epoch(&p).map(|n| (n, p)))
                .collect();
            if here.is_empty() {
                return Err(usage(format!(
                    "no checkpoint_<epoch> files in {}",
                    input.display()
                )));
            }
            here.sort();
            found.extend(here.into_iter().map(|(_, p)| p));
        } else {
            found.push(input.clone());
        }
    }
    Ok(found)
}

pub fn analyze(args: AnalyzeArgs) -> Result<()> {
    let checkpoints = find_checkpoints(&args.inputs)?;
    let mut cfg = match base_config(&args.source)? {
        Some(cfg) => cfg,
        None => {
            let dir = checkpoints[0].parent().unwrap_or(Path::new("."));
            let report = dir.join("report.json");
            if !report.exists() {
                return Err(usage(format!(
                    "no report.json beside {}; pass --config or --preset",
                    checkpoints[0].display()
                )));
            }
            TrainReport::load(&report)
                .with_context(|| format!("reading {}", report.display()))?
                .config
        }
    };
    apply_source(&mut cfg, &args.source)?;
    let (train, test) = load_data(&cfg)?;
    let data = match args.split {
        Split::Train => train,
        Split::Test => test,
    };
    let data = match args.limit {
        Some(n) => data.head(n),
        None => data,
    };
    let names = data.class_labels();

    let results: Vec<(u64, CoLabelMatrix)> = checkpoints
        .par_iter()
        .map(|path| {
            let ck =
                Checkpoint::load(path).with_context(|| format!("reading {}", path.display()))?;
            let mut preds = predict_all(&ck.network, &data.x)?;
            if args.binarize {
                preds = binarize(&preds);
            }
            Ok((ck.epoch, colabel_covariance(&preds)?))
        })
        .collect::<Result<_>>()?;

    for (path, (epoch, m)) in checkpoints.iter().zip(&results) {
        let dir = match &args.output_dir {
            Some(d) => d.clone(),
            None => path.parent().unwrap_or(Path::new(".")).to_path_buf(),
        };
        fs::create_dir_all(&dir).map_err(|e| softtarget_core::Error::io(&dir, e))?;
        let grid = dir.join(format!("colabel_{epoch}.csv"));
        m.write_csv(&grid, &names)?;
        m.write_long_csv(&dir.join(format!("colabel_{epoch}_long.csv")), &names)?;
        match m.argmax_pair() {
            Some((a, b)) if !m.is_degenerate() => println!(
                "epoch {epoch}: highest co-label covariance {} / {} (raw {:.3e}) -> {}",
                names[a],
                names[b],
                m.raw().get(a, b),
                grid.display()
            ),
            _ => println!(
                "epoch {epoch}: degenerate (all covariances equal) -> {}",
                grid.display()
            ),
        }
    }
    Ok(())
}
