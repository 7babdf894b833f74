//! Stacked inspection: chip-position stage, street stage(s), and the mapping
//! of street verdicts onto chips.
//!
//! A stage without a model is in training mode: its localized patches go
//! through augmentation into the training loop. A stage with a model is in
//! inference mode: patches go straight to the classifier.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::augment::AugmentationLevel;
use crate::error::{Error, Result, Stage};
use crate::eval::benchmark::{prepare_training, train_cnn};
use crate::image::GrayImage;
use crate::label::{ChipIndex, ChipPosition, Label, StreetIndex};
use crate::localization::{self, Template, TemplateLevel};
use crate::nn::{History, NetworkConfig, Sequential, Tensor, TrainConfig};
use crate::synthwafer::{GroundTruth, WaferLayout};

/// Worst adjacent street label for every chip in `chips`.
pub fn map_streets_to_chips(
    street_labels: &BTreeMap<StreetIndex, Label>,
    chips: impl IntoIterator<Item = ChipIndex>,
) -> Result<BTreeMap<ChipIndex, Label>> {
    let mut out = BTreeMap::new();
    for c in chips {
        let worst = c
            .adjacent_streets()
            .iter()
            .filter_map(|s| street_labels.get(s))
            .max()
            .copied()
            .ok_or_else(|| Error::MissingAdjacency(c.to_string()))?;
        out.insert(c, worst);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageMode {
    Train,
    Infer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageConfig {
    pub template: Template,
    pub augmentation: AugmentationLevel,
    pub model: Option<Sequential<f32>>,
}

impl StageConfig {
    pub fn new(template: Template, augmentation: AugmentationLevel) -> Self {
        Self {
            template,
            augmentation,
            model: None,
        }
    }

    pub fn mode(&self) -> StageMode {
        if self.model.is_some() {
            StageMode::Infer
        } else {
            StageMode::Train
        }
    }

    fn model(&self) -> Result<&Sequential<f32>> {
        self.model.as_ref().ok_or_else(|| {
            let what = match self.template.level {
                TemplateLevel::Chip => "chip-position classifier",
                TemplateLevel::Street => "street classifier",
            };
            Error::UntrainedModel(format!("{what} has not been trained or loaded"))
        })
    }
}

/// Network and optimizer settings for training one stage.
#[derive(Clone, Debug, PartialEq)]
pub struct StageTraining {
    pub network: NetworkConfig,
    pub train: TrainConfig,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct WaferVerdict {
    pub street_labels: BTreeMap<StreetIndex, Label>,
    pub chip_labels: BTreeMap<ChipIndex, Label>,
    pub chip_positions: BTreeMap<ChipIndex, ChipPosition>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
struct Counts {
    flawless: usize,
    anomaly: usize,
    faulty: usize,
}

impl Counts {
    fn of<'a>(labels: impl Iterator<Item = &'a Label>) -> Self {
        let mut c = [0usize; 3];
        for l in labels {
            c[l.index()] += 1;
        }
        Counts {
            flawless: c[0],
            anomaly: c[1],
            faulty: c[2],
        }
    }
}

#[derive(Serialize)]
struct Summary {
    inside_chips: usize,
    outside_chips: usize,
    streets: Counts,
    chips: Counts,
}

impl WaferVerdict {
    pub fn inside_chips(&self) -> impl Iterator<Item = ChipIndex> + '_ {
        self.chip_positions
            .iter()
            .filter(|(_, &p)| p == ChipPosition::Inside)
            .map(|(&c, _)| c)
    }

    pub fn from_truth(truth: &GroundTruth) -> Self {
        Self {
            street_labels: truth.street_labels.clone(),
            chip_labels: truth.chip_labels.clone(),
            chip_positions: truth.chip_positions.clone(),
        }
    }

    /// `kind,x,y,label` rows.
    pub fn to_csv(&self) -> String {
        crate::wafermap::verdict_csv(&self.street_labels, &self.chip_labels)
    }

    /// Per-class counts as a JSON object.
    pub fn summary_json(&self) -> String {
        let inside = self.inside_chips().count();
        let s = Summary {
            inside_chips: inside,
            outside_chips: self.chip_positions.len() - inside,
            streets: Counts::of(self.street_labels.values()),
            chips: Counts::of(self.chip_labels.values()),
        };
        serde_json::to_string_pretty(&s).expect("plain struct serializes")
    }
}

fn predict_label(model: &Sequential<f32>, patch: &GrayImage) -> Result<usize> {
    Ok(model.predict(&Tensor::from_gray(patch))?.0)
}

fn check_level(cfg: &StageConfig, level: TemplateLevel) -> Result<()> {
    if cfg.template.level != level {
        return Err(Error::Config(format!(
            "stage template is {:?}-level, expected {:?}",
            cfg.template.level, level
        )));
    }
    Ok(())
}

/// Classifies every chip cell as Inside or Outside with the chip model.
pub fn run_chip_stage(
    wafer: &GrayImage,
    layout: &WaferLayout,
    cfg: &StageConfig,
) -> Result<BTreeMap<ChipIndex, ChipPosition>> {
    check_level(cfg, TemplateLevel::Chip)?;
    cfg.template.validate(layout)?;
    let model = cfg.model()?;
    localization::segment_chips(wafer, layout)?
        .into_iter()
        .map(|(c, patch)| Ok((c, ChipPosition::from_index(predict_label(model, &patch)?)?)))
        .collect()
}

/// Street verdicts for the streets around `inside_chips`.
///
/// A street seen from two chips keeps the worse verdict. A chip whose
/// streets cannot be localized marks all four as Anomaly.
pub fn run_street_stage(
    wafer: &GrayImage,
    layout: &WaferLayout,
    inside_chips: &[ChipIndex],
    cfg: &StageConfig,
) -> Result<BTreeMap<StreetIndex, Label>> {
    check_level(cfg, TemplateLevel::Street)?;
    cfg.template.validate(layout)?;
    let model = cfg.model()?;
    let mut out: BTreeMap<StreetIndex, Label> = BTreeMap::new();
    let mut merge = |s: StreetIndex, l: Label| {
        let e = out.entry(s).or_insert(l);
        *e = (*e).max(l);
    };
    for &c in inside_chips {
        match localization::locate_streets_on_wafer(wafer, layout, c, &cfg.template) {
            Ok(rois) => {
                for roi in rois {
                    let l = Label::from_index(predict_label(model, &roi.canonical_patch())?)?;
                    merge(roi.grid_index, l);
                }
            }
            Err(Error::NoContour | Error::DegenerateContour) => {
                for s in c.adjacent_streets() {
                    merge(s, Label::Anomaly);
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Runs the stages in order: the first must be chip-level, the rest
/// street-level. Later street stages refine earlier ones by keeping the
/// worse verdict per street.
pub fn run_shcnn(wafer: &GrayImage, layout: &WaferLayout, stages: &[StageConfig]) -> Result<WaferVerdict> {
    let (chip_cfg, street_cfgs) = stages
        .split_first()
        .ok_or_else(|| Error::Config("no stages configured".into()))?;
    let chip_positions = run_chip_stage(wafer, layout, chip_cfg).map_err(|e| e.in_stage(Stage::Chip))?;
    let mut verdict = WaferVerdict {
        chip_positions,
        ..WaferVerdict::default()
    };
    if street_cfgs.is_empty() {
        return Ok(verdict);
    }
    let inside: Vec<ChipIndex> = verdict.inside_chips().collect();
    for (i, cfg) in street_cfgs.iter().enumerate() {
        let labels = run_street_stage(wafer, layout, &inside, cfg).map_err(|e| e.in_stage(Stage::Street(i + 1)))?;
        for (s, l) in labels {
            let e = verdict.street_labels.entry(s).or_insert(l);
            *e = (*e).max(l);
        }
    }
    verdict.chip_labels =
        map_streets_to_chips(&verdict.street_labels, inside).map_err(|e| e.in_stage(Stage::Mapping))?;
    Ok(verdict)
}

/// Chip patches labelled with their true position.
pub fn chip_samples(
    wafers: &[(GrayImage, GroundTruth)],
    layout: &WaferLayout,
) -> Result<Vec<(GrayImage, usize)>> {
    let mut out = Vec::new();
    for (img, truth) in wafers {
        for (c, patch) in localization::segment_chips(img, layout)? {
            let pos = truth
                .chip_positions
                .get(&c)
                .ok_or_else(|| Error::LayoutMismatch(format!("truth has no position for chip {c}")))?;
            out.push((patch, pos.index()));
        }
    }
    Ok(out)
}

/// Localized street ROIs (lanes vertical) around the truly Inside chips of
/// each wafer, labelled from truth. Chips that fail to localize are skipped.
pub fn street_samples(
    wafers: &[(GrayImage, GroundTruth)],
    layout: &WaferLayout,
    tmpl: &Template,
) -> Result<Vec<(GrayImage, usize)>> {
    let mut out = Vec::new();
    for (img, truth) in wafers {
        for c in truth.inside_chips() {
            let rois = match localization::locate_streets_on_wafer(img, layout, c, tmpl) {
                Ok(r) => r,
                Err(Error::NoContour | Error::DegenerateContour) => continue,
                Err(e) => return Err(e),
            };
            for roi in rois {
                if let Some(l) = truth.street_labels.get(&roi.grid_index) {
                    out.push((roi.canonical_patch(), l.index()));
                }
            }
        }
    }
    Ok(out)
}

/// Balances the training samples, augments them at the stage's level and
/// trains a fresh network; the model is stored in `cfg`.
pub fn train_stage(
    cfg: &mut StageConfig,
    train: &[(GrayImage, usize)],
    val: &[(GrayImage, usize)],
    spec: &StageTraining,
) -> Result<History> {
    let prepared = prepare_training(train, cfg.augmentation, spec.train.seed)?;
    let (model, history) = train_cnn(&prepared, val, &spec.network, &spec.train)?;
    cfg.model = Some(model);
    Ok(history)
}
