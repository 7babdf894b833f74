//! Acceptance checks, one line per criterion. Run with
//! `cargo test -p shcnn-cli --test acceptance`; exits non-zero if any fails.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use shcnn::config::ExperimentConfig;
use shcnn::eval::benchmark::{self, Method};
use shcnn::localization::{self, Template};
use shcnn::pipeline::{self, StageConfig};
use shcnn::synthwafer::{self, ClassMix, SynthConfig};
use shcnn::{imgproc, AugmentationLevel};

type Outcome = Result<String, String>;

const BENCH_BUDGET: Duration = Duration::from_secs(15 * 60);
const GRAD_BUDGET: Duration = Duration::from_secs(10);
const MARGIN: f64 = 0.05;
const MAX_CENTER_ERROR: f64 = 2.0;
const CHIP_ACCURACY: f64 = 0.95;

fn method_ordering() -> Outcome {
    let cfg = ExperimentConfig::default();
    let start = Instant::now();
    let bench = benchmark::build_street_benchmark(&cfg.benchmark()).map_err(|e| e.to_string())?;
    if bench.len() < 600 {
        return Err(format!("only {} patches", bench.len()));
    }
    let rows = benchmark::run_benchmark(&bench, &Method::ALL, &[AugmentationLevel(0)], &cfg.method_settings(), 5, cfg.seed)
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let mean = |m: Method| rows.iter().find(|r| r.method == m.name()).map(|r| r.stats.mean).unwrap();
    let (sh, cnn) = (mean(Method::ShCnn), mean(Method::Cnn));
    let best_baseline = [Method::Rfc, Method::SvcLinear, Method::SvcRbf, Method::Mlp]
        .into_iter()
        .map(mean)
        .fold(f64::MIN, f64::max);
    let table: Vec<String> = rows.iter().map(|r| format!("{} {:.3}±{:.3}", r.method, r.stats.mean, r.stats.std)).collect();
    let detail = format!("{} patches, {:.0} s; {}", bench.len(), elapsed.as_secs_f64(), table.join(", "));
    if sh >= cnn + MARGIN && cnn >= best_baseline && elapsed < BENCH_BUDGET {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let worst = support::gradient_checks(2024);
    let elapsed = start.elapsed();
    let max = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    let detail = format!(
        "{} layers x {} instances, worst rel. err {max:.2e}, {:.1} s",
        worst.len(),
        support::FD_INSTANCES,
        elapsed.as_secs_f64()
    );
    match worst.iter().find(|w| w.1 >= support::FD_TOL) {
        None if elapsed < GRAD_BUDGET => Ok(detail),
        Some((layer, e)) => Err(format!("{layer}: {e:.2e}; {detail}")),
        None => Err(detail),
    }
}

fn image_oracles() -> Outcome {
    let mut g = support::Gen::new(3);
    for i in 0..100 {
        let img = support::random_gray(&mut g, 16);
        if imgproc::equalize_histogram(&img).into_pixels() != support::equalize_oracle(&img) {
            return Err(format!("equalize differs on image {i}"));
        }
        let bin = support::random_binary(&mut g, 16);
        let r = 1 + g.below(3);
        if imgproc::erode(&bin, r) != support::erode_oracle(&bin, r) {
            return Err(format!("erode (r={r}) differs on image {i}"));
        }
        if !support::borders_agree(&bin) {
            return Err(format!("follow_borders differs on image {i}"));
        }
    }
    Ok("100/100 images agree for equalize, erode and follow_borders".into())
}

fn mapping() -> Outcome {
    support::mapping_exhaustive().map(|n| format!("{n}/81 combinations"))
}

fn localization_accuracy() -> Outcome {
    let b = ExperimentConfig::default().benchmark();
    let tmpl = Template {
        threshold: b.threshold,
        se_radius: b.se_radius,
        ..Template::street(&b.layout, b.patch_size)
    };
    let mut chips = 0;
    let mut errors = Vec::new();
    'outer: for seed in 0u64.. {
        let (img, truth) = synthwafer::generate_wafer(&b.layout, &[], seed).map_err(|e| e.to_string())?;
        for c in truth.inside_chips() {
            if chips == 100 {
                break 'outer;
            }
            chips += 1;
            let rois = localization::locate_streets_on_wafer(&img, &b.layout, c, &tmpl).map_err(|e| format!("chip {c}: {e}"))?;
            errors.extend(rois.iter().map(|r| r.center.distance(b.layout.street_center(r.grid_index))));
        }
    }
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    let detail = format!("{chips} chips, {} streets, mean error {mean:.3} px", errors.len());
    if mean <= MAX_CENTER_ERROR {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn augmentation() -> Outcome {
    support::augmentation_laws(6)
        .map(|_| format!("{} draws for each level in {:?}", support::AUG_DRAWS, support::AUG_LEVELS))
}

fn protocol() -> Outcome {
    support::split_laws(1000)?;
    support::balance_laws(1000)?;
    support::run_stats_laws()?;
    Ok("1000 splits, 1000 balancings, 3 hand-computed run vectors".into())
}

fn run_cli(args: &[&str], out: &Path) -> Result<(), String> {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tiny.ini");
    let o = Command::new(env!("CARGO_BIN_EXE_shcnn"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr)))
    }
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    for k in 0..2 {
        let out = tmp.path().join(format!("run{k}"));
        let wafer = out.join("data/wafers/wafer_0000.pgm");
        let verdict = out.join("verdicts/wafer_0000.csv");
        run_cli(&["synth"], &out)?;
        run_cli(&["train"], &out)?;
        run_cli(&["infer", wafer.to_str().unwrap()], &out)?;
        run_cli(&["eval"], &out)?;
        run_cli(&["report", verdict.to_str().unwrap()], &out)?;
        let read = |p: &str| std::fs::read(out.join(p)).map_err(|e| format!("{p}: {e}"));
        runs.push([read("results.csv")?, read("maps/wafer_0000.svg")?, read("verdicts/wafer_0000.csv")?]);
    }
    for (k, name) in ["results.csv", "wafer map SVG", "verdict CSV"].iter().enumerate() {
        if runs[0][k] != runs[1][k] {
            return Err(format!("{name} differs between runs"));
        }
    }
    Ok(format!("results.csv ({} B) and SVG ({} B) identical", runs[0][0].len(), runs[0][1].len()))
}

fn chip_stage() -> Outcome {
    let cfg = ExperimentConfig::default();
    let (layout, mix, synth) = (&cfg.layout, &ClassMix::uniform(), &SynthConfig::default());
    let wafer = |i: usize| synthwafer::dataset_wafer(layout, mix, synth, cfg.seed, i).map_err(|e| e.to_string());
    let train: Vec<_> = (0..cfg.train_wafers).map(wafer).collect::<Result<_, _>>()?;
    let val: Vec<_> = (cfg.train_wafers..cfg.train_wafers + cfg.val_wafers).map(wafer).collect::<Result<_, _>>()?;
    let samples = |w| pipeline::chip_samples(w, layout).map_err(|e| e.to_string());
    let mut stage = StageConfig::new(cfg.chip_template(), AugmentationLevel::OFF);
    pipeline::train_stage(&mut stage, &samples(&train)?, &samples(&val)?, &cfg.chip_training()).map_err(|e| e.to_string())?;
    let (mut hits, mut total) = (0, 0);
    for i in 100..104 {
        let (img, _) = wafer(i)?;
        let got = pipeline::run_chip_stage(&img, layout, &stage).map_err(|e| e.to_string())?;
        for (c, p) in got {
            total += 1;
            hits += usize::from(p == localization::chip_position_truth(c, layout));
        }
    }
    let acc = hits as f64 / total as f64;
    let detail = format!("{hits}/{total} chips on 4 held-out wafers, accuracy {acc:.3}");
    if acc >= CHIP_ACCURACY {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("method ordering: SH-CNN >= CNN + 0.05, CNN >= baselines", method_ordering),
        ("gradient oracle: rel. err < 1e-4, < 10 s", gradients),
        ("image-processing oracles", image_oracles),
        ("mapping oracle: 81 combinations", mapping),
        ("localization: mean center error <= 2 px", localization_accuracy),
        ("augmentation count and range laws", augmentation),
        ("protocol laws: split, balance, run stats", protocol),
        ("end-to-end determinism", determinism),
        ("chip-position stage accuracy >= 0.95", chip_stage),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {}: {tag} {name} [{detail}]", i + 1);
    }
    println!("acceptance: {}/{} passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
