use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use tumorscope::classifiers::{fit_all, grid_csv, grid_table};
use tumorscope::cnn::{extract_features, random_search, train, Cnn, SearchSpace, TrainConfig, EPOCH_CSV_HEADER};
use tumorscope::dataset::{self, netpbm, synthesize, Dataset, DatasetManifest, ImageSet, Split};
use tumorscope::engine::{self, Tensor};
use tumorscope::features::FeatureMatrix;
use tumorscope::gradcam::{gradcam, overlay, Upsample};
use tumorscope::metrics::{evaluate, REPORT_CSV_HEADER};
use tumorscope::persistence::{self, Checkpoint};

use crate::config::{ConfigError, RunConfig};
use crate::plot::curves_svg;
use crate::{Cli, Command, Common};

/// Invalid invocation or input; exits with status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// 2 for usage and input errors, 1 for failures while running.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    use tumorscope::Error as E;
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<ConfigError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::MissingDirectory(_)
                | E::NoImages(_)
                | E::EmptyClass(_)
                | E::Parse { .. }
                | E::Decode { .. }
                | E::InvalidArgument(_)
                | E::Integrity(_)
                | E::UnsupportedVersion(_)
                | E::TooManyFailures { .. } => 2,
                E::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
                _ => 1,
            };
        }
    }
    1
}

fn resolve(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        cfg.apply_text(&text).with_context(|| format!("in {}", path.display()))?;
    }
    if let Some(root) = &common.data {
        cfg.data_root = Some(root.clone());
        cfg.synthetic = None;
    }
    if let Some(n) = common.synthetic {
        cfg.synthetic = Some(n);
    }
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    if common.deterministic {
        cfg.train.deterministic = true;
    }
    Ok(cfg)
}

fn out_dir(common: &Common) -> Result<PathBuf> {
    let out = common.out.clone().ok_or_else(|| usage("--out is required"))?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok(out)
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    if let Some(n) = cfg.synthetic {
        let images = synthesize(n, cfg.synthetic_size, cfg.synthetic_seed)?;
        return Ok(Dataset::from_synthetic(&images, cfg.target_size, cfg.split_fraction, cfg.split_seed)?);
    }
    let root = cfg
        .data_root
        .as_ref()
        .ok_or_else(|| usage("either --data or --synthetic is required"))?;
    let ds = Dataset::load(root, &cfg.layout, cfg.target_size, cfg.split_fraction, cfg.split_seed)?;
    if !ds.failures.is_empty() {
        eprintln!("warning: skipped {} undecodable files", ds.failures.len());
    }
    Ok(ds)
}

fn read_manifest(path: &Path) -> Result<Vec<dataset::ManifestEntry>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    DatasetManifest::parse_entries(&text).with_context(|| format!("in {}", path.display()))
}

fn load_model(path: &Path, cfg: &mut RunConfig) -> Result<Checkpoint> {
    let ck = persistence::load(path).with_context(|| format!("loading {}", path.display()))?;
    cfg.target_size = ck.model.spec().input_size;
    cfg.model = ck.model.spec().clone();
    Ok(ck)
}

/// Loads the dataset at the model's input size and applies `manifest`.
fn dataset_for_model(cfg: &RunConfig, manifest: Option<&Path>) -> Result<Dataset> {
    let mut ds = load_dataset(cfg)?;
    if let Some(path) = manifest {
        ds.apply_manifest(&read_manifest(path)?)?;
    }
    Ok(ds)
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = resolve(&cli.common)?;
    if cfg.train.deterministic {
        engine::set_parallel(false);
    }
    let common = &cli.common;
    match cli.command {
        Command::Train { epochs, batch_size, lr } => {
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(b) = batch_size {
                cfg.train.batch_size = b;
            }
            if let Some(lr) = lr {
                cfg.train.learning_rate = lr;
            }
            cmd_train(&cfg, &out_dir(common)?)
        }
        Command::Extract {
            model,
            manifest,
            eval_only,
        } => {
            let ck = load_model(&model, &mut cfg)?;
            cmd_extract(&cfg, &ck, manifest.as_deref(), eval_only, &out_dir(common)?)
        }
        Command::Classify { features, manifest } => cmd_classify(&cfg, &features, manifest.as_deref(), &out_dir(common)?),
        Command::Localize {
            model,
            images,
            class,
            alpha,
            nearest,
        } => {
            if let Some(a) = alpha {
                cfg.overlay_alpha = a;
            }
            if nearest {
                cfg.upsample = Upsample::Nearest;
            }
            if class.is_some_and(|c| c > 1) {
                return Err(usage("--class must be 0 or 1"));
            }
            let ck = load_model(&model, &mut cfg)?;
            cmd_localize(&cfg, &ck, &images, class, &out_dir(common)?)
        }
        Command::Evaluate { model, manifest } => {
            let ck = load_model(&model, &mut cfg)?;
            cmd_evaluate(&cfg, &ck, manifest.as_deref(), &out_dir(common)?)
        }
        Command::Search { trials, budget_epochs } => {
            if let Some(t) = trials {
                cfg.search_trials = t;
            }
            if let Some(b) = budget_epochs {
                cfg.search_epochs = b;
            }
            cmd_search(&cfg, &out_dir(common)?)
        }
        Command::Synth { size } => {
            if let Some(s) = size {
                cfg.synthetic_size = s;
            }
            cmd_synth(&cfg, &out_dir(common)?)
        }
    }
}

fn epochs_csv(logs: &[tumorscope::cnn::EpochLog]) -> String {
    let mut s = format!("{EPOCH_CSV_HEADER}\n");
    for l in logs {
        s.push_str(&l.csv_row());
        s.push('\n');
    }
    s
}

fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<()> {
    let ds = load_dataset(cfg)?;
    write(&out.join("config.echo"), cfg.to_text())?;
    write(&out.join("manifest.tsv"), ds.manifest.to_text())?;
    let (tr, va) = (ds.train()?, ds.val()?);
    println!("training on {} images, validating on {}", tr.len(), va.len());
    let mut spec = cfg.model.clone();
    spec.input_size = cfg.target_size;
    let model = Cnn::<f32>::new(spec, cfg.train.seed)?;
    let mut logs = Vec::new();
    let mut best_acc = f64::NEG_INFINITY;
    let outcome = train(model, &tr, &va, &cfg.train, |log, model| {
        logs.push(*log);
        best_acc = best_acc.max(log.val_acc);
        println!(
            "epoch {:>3}  train_loss {:.4}  train_acc {:.4}  val_loss {:.4}  val_acc {:.4}",
            log.epoch, log.train_loss, log.train_acc, log.val_loss, log.val_acc
        );
        let io = |e: std::io::Error| tumorscope::Error::Io {
            path: out.to_path_buf(),
            source: e,
        };
        fs::write(out.join("epochs.csv"), epochs_csv(&logs)).map_err(io)?;
        if log.epoch % cfg.train.checkpoint_interval == 0 {
            let ck = Checkpoint::new(model.clone(), cfg.train.seed, best_acc as f32);
            persistence::save(&ck, &out.join("last.tsck"))?;
        }
        Ok(())
    })?;
    let best_acc = outcome.best_val_accuracy();
    let ck = Checkpoint::new(outcome.best, cfg.train.seed, best_acc as f32);
    persistence::save(&ck, &out.join("model.tsck"))?;
    write(&out.join("epochs.csv"), epochs_csv(&outcome.logs))?;
    write(&out.join("curves.svg"), curves_svg(&outcome.logs))?;
    println!(
        "best val accuracy {:.4} at epoch {}; wrote {}",
        best_acc,
        outcome.best_epoch,
        out.join("model.tsck").display()
    );
    Ok(())
}

fn cmd_extract(cfg: &RunConfig, ck: &Checkpoint, manifest: Option<&Path>, eval_only: bool, out: &Path) -> Result<()> {
    let ds = dataset_for_model(cfg, manifest)?;
    write(&out.join("config.echo"), cfg.to_text())?;
    let set = ds.set(eval_only.then_some(Split::Val))?;
    let fm = extract_features(&ck.model, &set)?;
    let path = out.join("features.csv");
    fm.write(&path)?;
    println!("wrote {} rows of {} features to {}", fm.rows(), fm.dim(), path.display());
    Ok(())
}

fn feature_source(arg: &str) -> (String, PathBuf) {
    if let Some((name, path)) = arg.split_once('=') {
        return (name.to_string(), PathBuf::from(path));
    }
    let path = PathBuf::from(arg);
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("features").to_string();
    let name = if stem == "features" {
        path.parent()
            .and_then(|p| p.file_name())
            .and_then(|s| s.to_str())
            .map_or(stem, str::to_string)
    } else {
        stem
    };
    (name, path)
}

fn split_features(fm: &FeatureMatrix, cfg: &RunConfig, manifest: Option<&HashMap<String, Split>>) -> Result<(FeatureMatrix, FeatureMatrix)> {
    let splits: Vec<Split> = match manifest {
        Some(map) => fm
            .ids
            .iter()
            .map(|id| map.get(id).copied().ok_or_else(|| usage(format!("feature row {id} is not in the manifest"))))
            .collect::<Result<_>>()?,
        None => {
            let keys: Vec<(String, u8)> = fm.ids.iter().cloned().zip(fm.labels.iter().copied()).collect();
            dataset::split(&keys, cfg.split_fraction, cfg.split_seed)?
                .entries
                .into_iter()
                .map(|e| e.split)
                .collect()
        }
    };
    let pick = |s: Split| -> Vec<usize> { (0..fm.rows()).filter(|&i| splits[i] == s).collect() };
    Ok((fm.select(&pick(Split::Train)), fm.select(&pick(Split::Val))))
}

fn cmd_classify(cfg: &RunConfig, features: &[String], manifest: Option<&Path>, out: &Path) -> Result<()> {
    let map: Option<HashMap<String, Split>> = match manifest {
        Some(p) => Some(read_manifest(p)?.into_iter().map(|e| (e.id, e.split)).collect()),
        None => None,
    };
    write(&out.join("config.echo"), cfg.to_text())?;
    let mut grids = Vec::new();
    for arg in features {
        let (name, path) = feature_source(arg);
        let fm = FeatureMatrix::read(&path).with_context(|| format!("reading {}", path.display()))?;
        let (train, eval) = split_features(&fm, cfg, map.as_ref())?;
        if eval.rows() == 0 {
            bail!(usage(format!("{}: no rows in the evaluation split", path.display())));
        }
        log::info!("{name}: {} train rows, {} eval rows", train.rows(), eval.rows());
        grids.push((name, fit_all(&train, &eval, &cfg.classifiers)?));
    }
    let table = grid_table(&grids);
    write(&out.join("grid.csv"), grid_csv(&grids))?;
    write(&out.join("grid.txt"), &table)?;
    print!("{table}");
    Ok(())
}

struct LocalizeInput {
    name: String,
    pixels: Result<dataset::GrayImage>,
}

fn localize_inputs(cfg: &RunConfig, images: &[PathBuf]) -> Result<Vec<LocalizeInput>> {
    if !images.is_empty() {
        return Ok(images
            .iter()
            .map(|path| {
                let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("image").to_string();
                let pixels = fs::read(path)
                    .with_context(|| format!("reading {}", path.display()))
                    .and_then(|b| netpbm::decode(&b).map_err(|m| anyhow::anyhow!("{}: {m}", path.display())))
                    .and_then(|raw| Ok(dataset::preprocess(&raw, cfg.target_size)?));
                LocalizeInput { name, pixels }
            })
            .collect());
    }
    if cfg.synthetic.is_none() {
        return Err(usage("give image files or --synthetic N"));
    }
    let ds = load_dataset(cfg)?;
    Ok(ds
        .images
        .into_iter()
        .map(|img| LocalizeInput {
            name: img.id.replace('/', "_"),
            pixels: Ok(img.pixels),
        })
        .collect())
}

fn cmd_localize(cfg: &RunConfig, ck: &Checkpoint, images: &[PathBuf], class: Option<usize>, out: &Path) -> Result<()> {
    let inputs = localize_inputs(cfg, images)?;
    write(&out.join("config.echo"), cfg.to_text())?;
    let s = cfg.target_size;
    let mut failures = 0;
    for input in &inputs {
        let result = input.pixels.as_ref().map_err(|e| anyhow::anyhow!("{e:#}")).and_then(|px| {
            let x = Tensor::new(vec![1, 1, s, s], px.data.clone())?;
            let predicted = ck.model.predict(&x)?[0];
            let target = class.unwrap_or(predicted);
            let hm = gradcam(&ck.model, &input.name, &x, target, cfg.upsample)?;
            let rgb = overlay(&px.data, &hm, cfg.overlay_alpha)?;
            write(&out.join(format!("{}.heatmap.pgm", input.name)), hm.to_pgm())?;
            write(&out.join(format!("{}.overlay.ppm", input.name)), netpbm::encode_ppm(s, s, &netpbm::quantize(&rgb)))?;
            write(&out.join(format!("{}.txt", input.name)), format!("{}predicted={predicted}\n", hm.sidecar()))?;
            Ok((predicted, target, hm.degenerate))
        });
        match result {
            Ok((p, t, degenerate)) => {
                let flag = if degenerate { "  (all-zero map)" } else { "" };
                println!("{}: predicted {p}, target {t}{flag}", input.name);
            }
            Err(e) => {
                failures += 1;
                eprintln!("{}: {e:#}", input.name);
            }
        }
    }
    if failures == inputs.len() {
        bail!("all {failures} images failed");
    }
    Ok(())
}

fn cmd_evaluate(cfg: &RunConfig, ck: &Checkpoint, manifest: Option<&Path>, out: &Path) -> Result<()> {
    let ds = dataset_for_model(cfg, manifest)?;
    write(&out.join("config.echo"), cfg.to_text())?;
    let val: ImageSet = ds.val()?;
    let preds: Vec<u8> = ck.model.predict(&val.images)?.into_iter().map(|p| p as u8).collect();
    let labels: Vec<u8> = val.labels.iter().map(|&l| l as u8).collect();
    let report = evaluate(&preds, &labels)?;
    let csv = format!("{REPORT_CSV_HEADER}\n{}\n", report.csv_row("CNN", "head"));
    write(&out.join("metrics.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn cmd_search(cfg: &RunConfig, out: &Path) -> Result<()> {
    let ds = load_dataset(cfg)?;
    write(&out.join("config.echo"), cfg.to_text())?;
    let mut spec = cfg.model.clone();
    spec.input_size = cfg.target_size;
    let outcome = random_search(
        &SearchSpace::default(),
        &spec,
        &cfg.train,
        cfg.search_trials,
        cfg.search_epochs,
        cfg.train.seed,
        &ds.train()?,
        &ds.val()?,
    )?;
    let mut csv = String::from("trial,filters,kernels,dropout,learning_rate,batch_size,val_acc,val_loss,diverged\n");
    for t in &outcome.trials {
        let join = |f: fn(&tumorscope::cnn::ConvSpec) -> usize| {
            t.spec.convs.iter().map(|c| f(c).to_string()).collect::<Vec<_>>().join(" ")
        };
        csv.push_str(&format!(
            "{},{},{},{:.4},{:.6e},{},{:.6},{:.6},{}\n",
            t.index,
            join(|c| c.filters),
            join(|c| c.kernel),
            t.spec.dropout,
            t.config.learning_rate,
            t.config.batch_size,
            t.val_accuracy,
            t.val_loss,
            t.diverged
        ));
    }
    write(&out.join("search.csv"), csv)?;
    let best = outcome.best_trial();
    let mut best_cfg = cfg.clone();
    best_cfg.model = best.spec.clone();
    best_cfg.train = TrainConfig {
        epochs: cfg.train.epochs,
        ..best.config.clone()
    };
    write(&out.join("best.conf"), best_cfg.to_text())?;
    println!(
        "best trial {} with val accuracy {:.4}; configuration in {}",
        best.index,
        best.val_accuracy,
        out.join("best.conf").display()
    );
    Ok(())
}

fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<()> {
    let n = cfg.synthetic.unwrap_or(200);
    let images = synthesize(n, cfg.synthetic_size, cfg.synthetic_seed)?;
    dataset::write_synthetic(out, &images, &cfg.layout)?;
    let mut tsv = String::from("id\tlabel\tcx\tcy\tradius\tamplitude\n");
    for img in &images {
        match &img.blob {
            Some(b) => tsv.push_str(&format!("{}\t1\t{}\t{}\t{}\t{}\n", img.id, b.cx, b.cy, b.radius, b.amplitude)),
            None => tsv.push_str(&format!("{}\t0\t\t\t\t\n", img.id)),
        }
    }
    write(&out.join("blobs.tsv"), tsv)?;
    write(&out.join("config.echo"), cfg.to_text())?;
    println!("wrote {n} images per class at {0}x{0} to {1}", cfg.synthetic_size, out.display());
    Ok(())
}
