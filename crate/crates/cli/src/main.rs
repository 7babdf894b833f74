use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use shcnn::config::ExperimentConfig;
use shcnn::eval::{self, benchmark};
use shcnn::nn::checkpoint;
use shcnn::pipeline::{self, StageConfig, WaferVerdict};
use shcnn::synthwafer::{self, GroundTruth};
use shcnn::wafermap::{self, WaferMap};
use shcnn::{Error, GrayImage, Stage};

/// Stacked hybrid CNN wafer dicing inspection.
#[derive(Parser, Debug)]
#[command(name = "shcnn", version)]
struct Cli {
    /// Experiment config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `[run] output`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic wafers, patches and a manifest under <out>/data.
    Synth,
    /// Train the chip and street stages; checkpoints go to <out>/models.
    Train {
        /// Dataset written by `synth`; wafers are synthesized in memory otherwise.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run the street classification benchmark and write <out>/results.csv.
    Eval,
    /// Classify wafer images into <out>/verdicts.
    Infer {
        /// Directory holding chip.ckpt and street.ckpt.
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(required = true)]
        wafers: Vec<PathBuf>,
    },
    /// Render verdict CSVs as SVG wafer maps into <out>/maps.
    Report {
        #[arg(required = true)]
        verdicts: Vec<PathBuf>,
    },
}

impl Command {
    fn stage(&self) -> Stage {
        match self {
            Command::Synth => Stage::Synth,
            Command::Train { .. } => Stage::Train,
            Command::Eval => Stage::Eval,
            Command::Infer { .. } => Stage::Infer,
            Command::Report { .. } => Stage::Report,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let stage = cli.command.stage();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let e = e.in_stage(stage);
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> shcnn::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = cli.out {
        cfg.output_dir = out;
    }
    cfg.validate()?;
    let out = cfg.output_dir.clone();
    mkdir(&out)?;
    write(&out.join("config.ini"), &cfg.to_string())?;

    match cli.command {
        Command::Synth => synth(&cfg, &out),
        Command::Train { data } => train(&cfg, &out, data.as_deref()),
        Command::Eval => evaluate(&cfg, &out),
        Command::Infer { models, wafers } => {
            let models = models.unwrap_or_else(|| out.join("models"));
            infer(&cfg, &out, &models, &wafers)
        }
        Command::Report { verdicts } => report(&out, &verdicts),
    }
}

fn mkdir(p: &Path) -> shcnn::Result<()> {
    std::fs::create_dir_all(p).map_err(|e| io_error(p, e))
}

fn write(p: &Path, text: &str) -> shcnn::Result<()> {
    std::fs::write(p, text).map_err(|e| io_error(p, e))
}

fn io_error(p: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: p.display().to_string(),
        source,
    }
}

fn stem(p: &Path) -> String {
    p.file_stem().map_or_else(|| "wafer".into(), |s| s.to_string_lossy().into_owned())
}

fn synth(cfg: &ExperimentConfig, out: &Path) -> shcnn::Result<()> {
    let dir = out.join("data");
    let manifest = synthwafer::generate_dataset(
        &cfg.layout,
        &cfg.mix,
        &cfg.synth,
        cfg.synth_wafers,
        cfg.street_patch,
        cfg.seed,
        &dir,
    )?;
    eprintln!(
        "synth: {} wafers, {} patches -> {}",
        cfg.synth_wafers,
        manifest.entries.len(),
        dir.display()
    );
    Ok(())
}

type Wafer = (GrayImage, GroundTruth);

/// `(train, val)` wafers: the last `val_wafers` of a loaded dataset are held
/// out, or fresh wafers are drawn from the config seed.
fn training_wafers(cfg: &ExperimentConfig, data: Option<&Path>) -> shcnn::Result<(Vec<Wafer>, Vec<Wafer>)> {
    let mut all: Vec<Wafer> = match data {
        Some(dir) => synthwafer::load_dataset_wafers(dir, &cfg.layout)?
            .into_iter()
            .map(|(_, img, truth)| (img, truth))
            .collect(),
        None => (0..cfg.train_wafers + cfg.val_wafers)
            .map(|i| synthwafer::dataset_wafer(&cfg.layout, &cfg.mix, &cfg.synth, cfg.seed, i))
            .collect::<shcnn::Result<_>>()?,
    };
    let n_val = cfg.val_wafers.min(all.len().saturating_sub(1));
    let val = all.split_off(all.len() - n_val);
    Ok((all, val))
}

fn train(cfg: &ExperimentConfig, out: &Path, data: Option<&Path>) -> shcnn::Result<()> {
    let dir = out.join("models");
    mkdir(&dir)?;
    let (train, val) = training_wafers(cfg, data)?;

    let mut chip = StageConfig::new(cfg.chip_template(), cfg.train_level);
    let history = (|| {
        let tr = pipeline::chip_samples(&train, &cfg.layout)?;
        let va = pipeline::chip_samples(&val, &cfg.layout)?;
        pipeline::train_stage(&mut chip, &tr, &va, &cfg.chip_training())
    })()
    .map_err(|e| e.in_stage(Stage::Chip))?;
    write(&dir.join("chip_history.csv"), &history.to_csv())?;
    let model = chip.model.as_ref().expect("trained stage holds a model");
    checkpoint::save(model, dir.join("chip.ckpt"))?;
    eprintln!("train: chip stage best epoch {}", history.best_epoch);

    let tmpl = cfg.street_template();
    let mut street = StageConfig::new(tmpl.clone(), cfg.train_level);
    let history = (|| {
        let tr = pipeline::street_samples(&train, &cfg.layout, &tmpl)?;
        let va = pipeline::street_samples(&val, &cfg.layout, &tmpl)?;
        pipeline::train_stage(&mut street, &tr, &va, &cfg.street_training())
    })()
    .map_err(|e| e.in_stage(Stage::Street(1)))?;
    write(&dir.join("street_history.csv"), &history.to_csv())?;
    let model = street.model.as_ref().expect("trained stage holds a model");
    checkpoint::save(model, dir.join("street.ckpt"))?;
    eprintln!("train: street stage best epoch {}", history.best_epoch);
    Ok(())
}

fn evaluate(cfg: &ExperimentConfig, out: &Path) -> shcnn::Result<()> {
    let bench = benchmark::build_street_benchmark(&cfg.benchmark())?;
    eprintln!(
        "eval: {} street patches from {} wafers, classes {:?}",
        bench.len(),
        bench.wafers_used,
        bench.class_counts()
    );
    let rows = benchmark::run_benchmark(
        &bench,
        &cfg.methods,
        &cfg.aug_levels,
        &cfg.method_settings(),
        cfg.runs,
        cfg.seed,
    )?;
    let counts = bench.class_counts();
    let meta = [
        ("seed", cfg.seed.to_string()),
        ("runs", cfg.runs.to_string()),
        ("per_run", "split resampled and weights reinitialized with seed + run".to_string()),
        ("patches", bench.len().to_string()),
        ("class_counts", format!("{},{},{}", counts[0], counts[1], counts[2])),
        ("wafers", bench.wafers_used.to_string()),
    ];
    let csv = eval::results_csv(&rows, &meta);
    write(&out.join("results.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn infer(cfg: &ExperimentConfig, out: &Path, models: &Path, wafers: &[PathBuf]) -> shcnn::Result<()> {
    let mut chip = StageConfig::new(cfg.chip_template(), cfg.train_level);
    chip.model = Some(checkpoint::load(models.join("chip.ckpt")).map_err(|e| e.in_stage(Stage::Chip))?);
    let mut street = StageConfig::new(cfg.street_template(), cfg.train_level);
    street.model = Some(checkpoint::load(models.join("street.ckpt")).map_err(|e| e.in_stage(Stage::Street(1)))?);
    let stages = [chip, street];

    let dir = out.join("verdicts");
    mkdir(&dir)?;
    for path in wafers {
        let img = GrayImage::load_pgm(path)?;
        let verdict = pipeline::run_shcnn(&img, &cfg.layout, &stages)?;
        let name = stem(path);
        write(&dir.join(format!("{name}.csv")), &verdict.to_csv())?;
        write(&dir.join(format!("{name}.json")), &verdict.summary_json())?;
        eprintln!("infer: {} -> {}", path.display(), dir.join(format!("{name}.csv")).display());
    }
    Ok(())
}

fn report(out: &Path, verdicts: &[PathBuf]) -> shcnn::Result<()> {
    let dir = out.join("maps");
    mkdir(&dir)?;
    for path in verdicts {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        let (street_labels, chip_labels) = wafermap::read_verdict_csv(&text)?;
        let verdict = WaferVerdict {
            street_labels,
            chip_labels,
            chip_positions: Default::default(),
        };
        let svg = WaferMap::new(verdict).render_svg()?;
        let target = dir.join(format!("{}.svg", stem(path)));
        write(&target, &svg)?;
        eprintln!("report: {} -> {}", path.display(), target.display());
    }
    Ok(())
}
