use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use smis::harness::checkpoint::Loaded;
use smis::harness::grid::{compose, mask_tile, save_grid, tiles};
use smis::harness::{edit_mask, evaluate, load_model, mix, morph, sweep, train, RegionSpec, RunConfig, Source};
use smis::metrics::{ExtractorConfig, MetricsConfig};
use smis::toydata::{self, load_mask, load_rgb, save_mask, LabelMap, Sample, NUM_CLASSES};
use smis::{Result, SmisError};

#[derive(Parser)]
#[command(name = "smis", version, about = "Semantically multi-modal image synthesis on toy scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a toy dataset with a manifest.
    GenData {
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = toydata::DEFAULT_SIZE)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a variant from a TOML config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Dotted `key=value` override, repeatable.
        #[arg(long = "set")]
        overrides: Vec<String>,
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop after this many epochs of the schedule.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Compute FID and diversity metrics of a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Run config whose model must match the checkpoint; supplies metric settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set")]
        overrides: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Resample one class's code k times on a mask.
    Sweep {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        class: usize,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Combine per-class styles of several sources on a target mask.
    Mix {
        #[arg(long)]
        checkpoint: PathBuf,
        /// `image.png:mask.png`, repeatable; indexed from 0.
        #[arg(long = "source", required = true)]
        sources: Vec<String>,
        /// `class=source`, repeatable; unassigned classes use source 0.
        #[arg(long = "assign")]
        assign: Vec<String>,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Interpolate between the styles of two scenes.
    Morph {
        #[arg(long)]
        checkpoint: PathBuf,
        /// `image.png:mask.png`
        #[arg(long)]
        from: String,
        /// `image.png:mask.png`
        #[arg(long)]
        to: String,
        /// Mask to decode on; defaults to the first scene's mask.
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        steps: usize,
        /// Interpolate sampled codes drawn with this seed instead of mean maps.
        #[arg(long)]
        sample_seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Relabel a region of a mask.
    EditMask {
        #[arg(long)]
        mask: PathBuf,
        /// `all`, `class:K` or `rect:X,Y,W,H`.
        #[arg(long)]
        region: String,
        #[arg(long = "class")]
        new_class: usize,
        #[arg(long, default_value_t = NUM_CLASSES)]
        classes: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print checkpoint metadata and record shapes.
    InspectCheckpoint {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn load_source(spec: &str, classes: usize) -> Result<Source> {
    let (img, mask) = spec
        .split_once(':')
        .ok_or_else(|| SmisError::invalid(format!("source `{spec}`: expected image.png:mask.png")))?;
    let (h, w, rgb) = load_rgb(Path::new(img))?;
    let mask = load_mask(Path::new(mask), classes)?;
    if (mask.height(), mask.width()) != (h, w) {
        return Err(SmisError::data(img, "image and mask sizes differ"));
    }
    let sample = Sample { rgb, mask };
    Ok(Source { image: sample.image(), mask: sample.mask })
}

fn parse_assignment(items: &[String], classes: usize) -> Result<Vec<usize>> {
    let mut out = vec![0; classes];
    for item in items {
        let bad = || SmisError::invalid(format!("assignment `{item}`: expected class=source"));
        let (c, s) = item.split_once('=').ok_or_else(bad)?;
        let c: usize = c.trim().parse().map_err(|_| bad())?;
        let s: usize = s.trim().parse().map_err(|_| bad())?;
        *out.get_mut(c).ok_or_else(|| SmisError::invalid(format!("class {c} out of range")))? = s;
    }
    Ok(out)
}

fn save_row(images: &smis_tensor::Tensor<f64>, lead: Option<&LabelMap>, out: &Path) -> Result<()> {
    let (n, _, h, w) = images.dims4()?;
    let mut all: Vec<Vec<f64>> = lead.map(mask_tile).into_iter().collect();
    let cols = n + all.len();
    all.extend(tiles(images)?);
    save_grid(&compose(&all, h, w, cols)?, out)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { count, seed, size, out } => {
            let manifest = toydata::generate(count, seed, size, &out)?;
            print_json(&json!({ "manifest": manifest, "count": count, "seed": seed, "size": size }))
        }
        Command::Train { config, overrides, resume, epochs } => {
            let cfg = RunConfig::load(&config, &overrides)?;
            let out = train(cfg, resume.as_deref(), epochs)?;
            print_json(&serde_json::to_value(&out)?)
        }
        Command::Eval { checkpoint, manifest, config, overrides, seed, out } => {
            let ckpt = Loaded::read(&checkpoint)?;
            let run_cfg = match &config {
                Some(p) => Some(RunConfig::load(p, &overrides)?),
                None => None,
            };
            let source = run_cfg.as_ref().or(ckpt.meta.run.as_ref());
            let mut metrics = source.map(|c| c.metrics.clone()).unwrap_or_else(MetricsConfig::default);
            let extractor = source.map(|c| c.extractor.clone()).unwrap_or_else(ExtractorConfig::default);
            if let Some(s) = seed {
                metrics.seed = s;
            }
            drop(ckpt);
            let report = evaluate(&checkpoint, &manifest, &metrics, &extractor, run_cfg.as_ref())?;
            let text = serde_json::to_string_pretty(&report)?;
            if let Some(p) = out {
                std::fs::write(&p, &text).map_err(|e| SmisError::io(&p, e))?;
            }
            println!("{text}");
            Ok(())
        }
        Command::Sweep { checkpoint, mask, class, k, seed, out } => {
            let model = load_model(&Loaded::read(&checkpoint)?)?;
            let mask = load_mask(&mask, model.classes())?;
            let s = sweep(model.as_ref(), &mask, class, k, seed)?;
            let (_, _, h, w) = s.class_row.dims4()?;
            let mut all = vec![mask_tile(&mask)];
            all.extend(tiles(&s.class_row)?);
            all.push(mask_tile(&mask));
            all.extend(tiles(&s.full_row)?);
            save_grid(&compose(&all, h, w, k + 1)?, &out)?;
            print_json(&json!({ "out": out, "class": class, "k": k, "seed": seed }))
        }
        Command::Mix { checkpoint, sources, assign, target, out } => {
            let model = load_model(&Loaded::read(&checkpoint)?)?;
            let classes = model.classes();
            let sources = sources.iter().map(|s| load_source(s, classes)).collect::<Result<Vec<_>>>()?;
            let assignment = parse_assignment(&assign, classes)?;
            let target = load_mask(&target, classes)?;
            let img = mix(model.as_ref(), &sources, &assignment, &target)?;
            save_grid(&toydata::image_from_tensor(&img)?, &out)?;
            print_json(&json!({ "out": out, "assignment": assignment }))
        }
        Command::Morph { checkpoint, from, to, target, steps, sample_seed, out } => {
            let model = load_model(&Loaded::read(&checkpoint)?)?;
            let classes = model.classes();
            let (a, b) = (load_source(&from, classes)?, load_source(&to, classes)?);
            let target = match target {
                Some(p) => load_mask(&p, classes)?,
                None => a.mask.clone(),
            };
            let seq = morph(model.as_ref(), &a, &b, &target, steps, sample_seed)?;
            save_row(&seq, None, &out)?;
            print_json(&json!({ "out": out, "steps": steps, "sampled": sample_seed.is_some() }))
        }
        Command::EditMask { mask, region, new_class, classes, out } => {
            let m = load_mask(&mask, classes)?;
            let region: RegionSpec = region.parse()?;
            let edited = edit_mask(&m, &region, new_class)?;
            save_mask(&edited, &out)?;
            let changed = m.ids().iter().zip(edited.ids()).filter(|(a, b)| a != b).count();
            print_json(&json!({ "out": out, "changed_pixels": changed }))
        }
        Command::InspectCheckpoint { checkpoint } => {
            let ckpt = Loaded::read(&checkpoint)?;
            let records: Vec<_> = ckpt
                .records
                .iter()
                .map(|r| json!({ "name": r.name, "dtype": format!("{:?}", r.data.dtype()), "shape": r.shape }))
                .collect();
            print_json(&json!({ "meta": ckpt.meta, "records": records }))
        }
    }
}

fn fail(kind: &str, message: &str) -> ExitCode {
    eprintln!("{}", json!({ "error": kind, "message": message }));
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            return fail("usage", msg.lines().next().unwrap_or("invalid arguments"));
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), &e.to_string()),
    }
}
