//! Experiment configuration: a flat `key = value` text format grouped into
//! `[section]`s. Lines starting with `#` or `;` are comments. Every key is
//! optional; unknown sections or keys are rejected so that a typo cannot
//! silently fall back to a default.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::augment::AugmentationLevel;
use crate::baselines::{ForestConfig, SvcConfig};
use crate::error::{Error, Result};
use crate::eval::benchmark::{BenchmarkConfig, Method, MethodSettings};
use crate::nn::{NetworkConfig, Optimizer, Padding, TrainConfig};
use crate::localization::Template;
use crate::pipeline::StageTraining;
use crate::synthwafer::{ClassMix, SynthConfig, WaferLayout};

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub layout: WaferLayout,
    pub synth: SynthConfig,
    pub mix: ClassMix,
    /// Wafers written by `synth`.
    pub synth_wafers: usize,
    pub street_patch: usize,
    pub bench_patches_per_class: usize,
    pub bench_max_wafers: usize,
    pub crop_jitter: f64,
    /// Fixed localization threshold; Otsu when `None`.
    pub threshold: Option<u8>,
    pub se_radius: usize,
    /// Levels compared by `eval`.
    pub aug_levels: Vec<AugmentationLevel>,
    /// Level used by `train`.
    pub train_level: AugmentationLevel,
    pub street: StageTraining,
    pub chip: StageTraining,
    pub train_wafers: usize,
    pub val_wafers: usize,
    pub forest: ForestConfig,
    pub svc: SvcConfig,
    pub svc_gamma: Option<f64>,
    pub mlp_hidden: usize,
    pub mlp_train: TrainConfig,
    pub methods: Vec<Method>,
    pub runs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let bench = BenchmarkConfig::default();
        let settings = MethodSettings::default();
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            layout: bench.layout.clone(),
            synth: SynthConfig::default(),
            mix: ClassMix::uniform(),
            synth_wafers: 4,
            street_patch: bench.patch_size,
            bench_patches_per_class: bench.patches_per_class,
            bench_max_wafers: bench.max_wafers,
            crop_jitter: bench.crop_jitter,
            threshold: bench.threshold,
            se_radius: bench.se_radius,
            aug_levels: vec![AugmentationLevel(0)],
            train_level: AugmentationLevel(0),
            street: StageTraining {
                network: settings.network.clone(),
                train: settings.cnn_train.clone(),
            },
            chip: StageTraining {
                network: NetworkConfig {
                    block_widths: [4, 8, 16],
                    dense1_units: 32,
                    n_classes: 2,
                    ..NetworkConfig::default()
                },
                train: TrainConfig {
                    epochs: 15,
                    patience: Some(5),
                    ..settings.cnn_train.clone()
                },
            },
            train_wafers: 4,
            val_wafers: 2,
            forest: settings.forest,
            svc: settings.svc,
            svc_gamma: settings.gamma,
            mlp_hidden: settings.mlp_hidden,
            mlp_train: settings.mlp_train,
            methods: Method::ALL.to_vec(),
            runs: 5,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.parse()
    }

    pub fn benchmark(&self) -> BenchmarkConfig {
        BenchmarkConfig {
            layout: self.layout.clone(),
            synth: self.synth.clone(),
            mix: self.mix,
            patches_per_class: self.bench_patches_per_class,
            max_wafers: self.bench_max_wafers,
            patch_size: self.street_patch,
            crop_jitter: self.crop_jitter,
            threshold: self.threshold,
            se_radius: self.se_radius,
            seed: self.seed,
        }
    }

    pub fn method_settings(&self) -> MethodSettings {
        MethodSettings {
            network: self.street.network.clone(),
            cnn_train: self.street.train.clone(),
            forest: self.forest.clone(),
            svc: self.svc.clone(),
            gamma: self.svc_gamma,
            mlp_hidden: self.mlp_hidden,
            mlp_train: self.mlp_train.clone(),
        }
    }

    /// Street-stage network with its input sized to the street patch.
    pub fn street_training(&self) -> StageTraining {
        let mut s = self.street.clone();
        s.network.input = (1, self.street_patch, self.street_patch);
        s.train.seed = self.seed;
        s
    }

    /// Chip-stage network with its input sized to one chip cell.
    pub fn chip_training(&self) -> StageTraining {
        let p = self.layout.chip_pitch_px;
        let mut s = self.chip.clone();
        s.network.input = (1, p, p);
        s.network.n_classes = 2;
        s.train.seed = self.seed;
        s
    }

    pub fn street_template(&self) -> Template {
        Template {
            threshold: self.threshold,
            se_radius: self.se_radius,
            ..Template::street(&self.layout, self.street_patch)
        }
    }

    pub fn chip_template(&self) -> Template {
        Template {
            threshold: self.threshold,
            se_radius: self.se_radius,
            ..Template::chip(&self.layout)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        self.street_template().validate(&self.layout)?;
        self.mix.validate(&self.synth.class_map)?;
        self.street_training().network.validate()?;
        self.chip_training().network.validate()?;
        self.street.train.validate()?;
        self.chip.train.validate()?;
        self.mlp_train.validate()?;
        if self.runs < 2 {
            return Err(Error::Config("eval.runs must be >= 2 for a standard deviation".into()));
        }
        if self.methods.is_empty() || self.aug_levels.is_empty() {
            return Err(Error::Config("eval needs at least one method and one level".into()));
        }
        if self.train_wafers == 0 {
            return Err(Error::Config("train.wafers must be >= 1".into()));
        }
        Ok(())
    }
}

/// Raw `section → key → (value, line)` table.
struct Table {
    entries: BTreeMap<(String, String), (String, usize)>,
}

impl Table {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut section: Option<String> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = n + 1;
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("line {lineno}: unterminated section header")))?;
                section = Some(name.trim().to_string());
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {lineno}: expected `key = value`")))?;
            let sec = section
                .clone()
                .ok_or_else(|| Error::Config(format!("line {lineno}: key outside any [section]")))?;
            let key = (sec, k.trim().to_string());
            if entries.contains_key(&key) {
                return Err(Error::Config(format!("line {lineno}: duplicate key {}.{}", key.0, key.1)));
            }
            entries.insert(key, (v.trim().to_string(), lineno));
        }
        Ok(Self { entries })
    }

    fn take<T: FromStr>(&mut self, section: &str, key: &str, into: &mut T) -> Result<()>
    where
        T::Err: fmt::Display,
    {
        if let Some((v, line)) = self.entries.remove(&(section.to_string(), key.to_string())) {
            *into = v
                .parse()
                .map_err(|e| Error::Config(format!("line {line}: {section}.{key} = `{v}`: {e}")))?;
        }
        Ok(())
    }

    fn take_with<T>(&mut self, section: &str, key: &str, into: &mut T, f: impl Fn(&str) -> Result<T, String>) -> Result<()> {
        if let Some((v, line)) = self.entries.remove(&(section.to_string(), key.to_string())) {
            *into = f(&v).map_err(|e| Error::Config(format!("line {line}: {section}.{key} = `{v}`: {e}")))?;
        }
        Ok(())
    }

    fn finish(self) -> Result<()> {
        match self.entries.into_iter().next() {
            Some(((s, k), (_, line))) => Err(Error::Config(format!("line {line}: unknown key {s}.{k}"))),
            None => Ok(()),
        }
    }
}

fn list<T: FromStr>(v: &str) -> Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    v.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|e| e.to_string()))
        .collect()
}

fn array<T: FromStr + Copy, const N: usize>(v: &str) -> Result<[T; N], String>
where
    T::Err: fmt::Display,
{
    let items: Vec<T> = list(v)?;
    items
        .try_into()
        .map_err(|items: Vec<T>| format!("expected {N} comma-separated values, got {}", items.len()))
}

fn pair(v: &str) -> Result<(f64, f64), String> {
    let [a, b] = array::<f64, 2>(v)?;
    if !(0.0 < a && a <= b && b <= 1.0) {
        return Err("need 0 < low <= high <= 1".into());
    }
    Ok((a, b))
}

fn optional<T: FromStr>(v: &str) -> Result<Option<T>, String>
where
    T::Err: fmt::Display,
{
    match v {
        "none" | "auto" => Ok(None),
        _ => v.parse().map(Some).map_err(|e: T::Err| e.to_string()),
    }
}

fn threshold(v: &str) -> Result<Option<u8>, String> {
    match v {
        "otsu" => Ok(None),
        _ => v.parse().map(Some).map_err(|e: std::num::ParseIntError| e.to_string()),
    }
}

fn padding(v: &str) -> Result<Padding, String> {
    match v {
        "same" => Ok(Padding::Same),
        "valid" => Ok(Padding::Valid),
        _ => Err("expected `same` or `valid`".into()),
    }
}

fn padding_name(p: Padding) -> &'static str {
    match p {
        Padding::Same => "same",
        Padding::Valid => "valid",
    }
}

fn levels(v: &str) -> Result<Vec<AugmentationLevel>, String> {
    Ok(list::<u32>(v)?.into_iter().map(AugmentationLevel).collect())
}

fn take_network(t: &mut Table, sec: &str, n: &mut NetworkConfig) -> Result<()> {
    t.take_with(sec, "block_widths", &mut n.block_widths, array)?;
    t.take_with(sec, "block_dropout", &mut n.block_dropout, array)?;
    t.take(sec, "dense1_units", &mut n.dense1_units)?;
    t.take(sec, "dense_dropout", &mut n.dense_dropout)?;
    t.take_with(sec, "padding", &mut n.padding, padding)
}

fn take_train(t: &mut Table, sec: &str, tc: &mut TrainConfig) -> Result<()> {
    let mut name = match tc.optimizer {
        Optimizer::Sgd { .. } => "sgd".to_string(),
        Optimizer::Adam { .. } => "adam".to_string(),
    };
    let mut lr = tc.optimizer.lr();
    t.take(sec, "optimizer", &mut name)?;
    t.take(sec, "lr", &mut lr)?;
    tc.optimizer = match name.as_str() {
        "sgd" => Optimizer::Sgd { lr },
        "adam" => Optimizer::adam(lr),
        other => return Err(Error::Config(format!("{sec}.optimizer `{other}`: expected sgd or adam"))),
    };
    t.take(sec, "batch_size", &mut tc.batch_size)?;
    t.take(sec, "epochs", &mut tc.epochs)?;
    t.take_with(sec, "patience", &mut tc.patience, optional)
}

impl FromStr for ExperimentConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut t = Table::parse(text)?;
        let mut c = ExperimentConfig::default();

        t.take("run", "seed", &mut c.seed)?;
        t.take("run", "output", &mut c.output_dir)?;

        let l = &mut c.layout;
        let (mut cx, mut cy, mut pitch, mut sw, mut radius) =
            (l.chips_x, l.chips_y, l.chip_pitch_px, l.street_width_px, l.wafer_radius_px);
        t.take("layout", "chips_x", &mut cx)?;
        t.take("layout", "chips_y", &mut cy)?;
        t.take("layout", "pitch", &mut pitch)?;
        t.take("layout", "street_width", &mut sw)?;
        t.take("layout", "radius", &mut radius)?;
        let mut fresh = WaferLayout::centered(cx, cy, pitch, sw, radius);
        fresh.cut_width_px = l.cut_width_px;
        fresh.noise_sigma = l.noise_sigma;
        t.take("layout", "cut_width", &mut fresh.cut_width_px)?;
        t.take("layout", "noise_sigma", &mut fresh.noise_sigma)?;
        t.take("layout", "cut_intensity", &mut fresh.cut_intensity)?;
        t.take("layout", "street_intensity", &mut fresh.street_intensity)?;
        t.take("layout", "chip_intensity", &mut fresh.chip_intensity)?;
        t.take("layout", "background_intensity", &mut fresh.background_intensity)?;
        c.layout = fresh;

        t.take_with("synth", "mix", &mut c.mix.0, array)?;
        t.take_with("synth", "hole_magnitude", &mut c.synth.hole_magnitude, pair)?;
        t.take_with("synth", "corner_magnitude", &mut c.synth.corner_magnitude, pair)?;
        t.take_with("synth", "cut_magnitude", &mut c.synth.cut_magnitude, pair)?;
        t.take("synth", "wafers", &mut c.synth_wafers)?;
        t.take("synth", "street_patch", &mut c.street_patch)?;

        t.take("benchmark", "patches_per_class", &mut c.bench_patches_per_class)?;
        t.take("benchmark", "max_wafers", &mut c.bench_max_wafers)?;
        t.take("benchmark", "crop_jitter", &mut c.crop_jitter)?;

        t.take_with("localization", "threshold", &mut c.threshold, threshold)?;
        t.take("localization", "se_radius", &mut c.se_radius)?;

        t.take_with("augment", "levels", &mut c.aug_levels, levels)?;
        let mut tl = c.train_level.0;
        t.take("augment", "train_level", &mut tl)?;
        c.train_level = AugmentationLevel(tl);

        take_network(&mut t, "network", &mut c.street.network)?;
        take_train(&mut t, "train", &mut c.street.train)?;
        t.take("train", "wafers", &mut c.train_wafers)?;
        t.take("train", "val_wafers", &mut c.val_wafers)?;
        take_network(&mut t, "chip", &mut c.chip.network)?;
        take_train(&mut t, "chip", &mut c.chip.train)?;

        t.take("baselines", "rfc_trees", &mut c.forest.n_trees)?;
        t.take("baselines", "rfc_bootstrap", &mut c.forest.bootstrap)?;
        t.take_with("baselines", "rfc_max_features", &mut c.forest.max_features, optional)?;
        t.take("baselines", "svc_c", &mut c.svc.c)?;
        t.take("baselines", "svc_tol", &mut c.svc.tol)?;
        t.take("baselines", "svc_max_iter", &mut c.svc.max_iter)?;
        t.take_with("baselines", "svc_gamma", &mut c.svc_gamma, optional)?;
        t.take("baselines", "mlp_hidden", &mut c.mlp_hidden)?;
        take_train(&mut t, "mlp", &mut c.mlp_train)?;

        t.take_with("eval", "methods", &mut c.methods, list)?;
        t.take("eval", "runs", &mut c.runs)?;
        t.finish()?;
        Ok(c)
    }
}

fn join<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn opt<T: fmt::Display>(v: &Option<T>, none: &str) -> String {
    v.as_ref().map_or_else(|| none.to_string(), |x| x.to_string())
}

fn write_network(s: &mut String, n: &NetworkConfig) {
    let _ = writeln!(s, "block_widths = {}", join(&n.block_widths));
    let _ = writeln!(s, "block_dropout = {}", join(&n.block_dropout));
    let _ = writeln!(s, "dense1_units = {}", n.dense1_units);
    let _ = writeln!(s, "dense_dropout = {}", n.dense_dropout);
    let _ = writeln!(s, "padding = {}", padding_name(n.padding));
}

fn write_train(s: &mut String, t: &TrainConfig) {
    let name = match t.optimizer {
        Optimizer::Sgd { .. } => "sgd",
        Optimizer::Adam { .. } => "adam",
    };
    let _ = writeln!(s, "optimizer = {name}");
    let _ = writeln!(s, "lr = {}", t.optimizer.lr());
    let _ = writeln!(s, "batch_size = {}", t.batch_size);
    let _ = writeln!(s, "epochs = {}", t.epochs);
    let _ = writeln!(s, "patience = {}", opt(&t.patience, "none"));
}

impl fmt::Display for ExperimentConfig {
    /// Every key with its current value; parses back to an equal config.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        let l = &self.layout;
        let _ = writeln!(s, "[run]\nseed = {}\noutput = {}\n", self.seed, self.output_dir.display());
        let _ = writeln!(
            s,
            "[layout]\nchips_x = {}\nchips_y = {}\npitch = {}\nstreet_width = {}\nradius = {}\ncut_width = {}\nnoise_sigma = {}\ncut_intensity = {}\nstreet_intensity = {}\nchip_intensity = {}\nbackground_intensity = {}\n",
            l.chips_x,
            l.chips_y,
            l.chip_pitch_px,
            l.street_width_px,
            l.wafer_radius_px,
            l.cut_width_px,
            l.noise_sigma,
            l.cut_intensity,
            l.street_intensity,
            l.chip_intensity,
            l.background_intensity
        );
        let sy = &self.synth;
        let _ = writeln!(
            s,
            "[synth]\nmix = {}\nhole_magnitude = {},{}\ncorner_magnitude = {},{}\ncut_magnitude = {},{}\nwafers = {}\nstreet_patch = {}\n",
            join(&self.mix.0),
            sy.hole_magnitude.0,
            sy.hole_magnitude.1,
            sy.corner_magnitude.0,
            sy.corner_magnitude.1,
            sy.cut_magnitude.0,
            sy.cut_magnitude.1,
            self.synth_wafers,
            self.street_patch
        );
        let _ = writeln!(
            s,
            "[benchmark]\npatches_per_class = {}\nmax_wafers = {}\ncrop_jitter = {}\n",
            self.bench_patches_per_class, self.bench_max_wafers, self.crop_jitter
        );
        let _ = writeln!(
            s,
            "[localization]\nthreshold = {}\nse_radius = {}\n",
            opt(&self.threshold, "otsu"),
            self.se_radius
        );
        let lv: Vec<u32> = self.aug_levels.iter().map(|l| l.0).collect();
        let _ = writeln!(s, "[augment]\nlevels = {}\ntrain_level = {}\n", join(&lv), self.train_level.0);
        s.push_str("[network]\n");
        write_network(&mut s, &self.street.network);
        s.push_str("\n[train]\n");
        write_train(&mut s, &self.street.train);
        let _ = writeln!(s, "wafers = {}\nval_wafers = {}\n", self.train_wafers, self.val_wafers);
        s.push_str("[chip]\n");
        write_network(&mut s, &self.chip.network);
        write_train(&mut s, &self.chip.train);
        let _ = writeln!(
            s,
            "\n[baselines]\nrfc_trees = {}\nrfc_bootstrap = {}\nrfc_max_features = {}\nsvc_c = {}\nsvc_tol = {}\nsvc_max_iter = {}\nsvc_gamma = {}\nmlp_hidden = {}\n",
            self.forest.n_trees,
            self.forest.bootstrap,
            opt(&self.forest.max_features, "auto"),
            self.svc.c,
            self.svc.tol,
            self.svc.max_iter,
            opt(&self.svc_gamma, "auto"),
            self.mlp_hidden
        );
        s.push_str("[mlp]\n");
        write_train(&mut s, &self.mlp_train);
        let _ = write!(s, "\n[eval]\nmethods = {}\nruns = {}\n", join(&self.methods), self.runs);
        f.write_str(&s)
    }
}
