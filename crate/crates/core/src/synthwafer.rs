//! Deterministic synthetic wafer images with injected dicing defects and
//! exact ground truth.
//!
//! Coordinates: pixel index `k` has its center at `k`; the grid origin
//! `(ox, oy)` is the center pixel of chip cell `(0, 0)`, whose cell spans
//! pixels `ox - pitch/2 .. ox + pitch/2`. Geometric centers (streets, the
//! wafer disc) therefore sit half a pixel up-left of `origin`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::imgproc::PointF;
use crate::label::{ChipIndex, ChipPosition, Label, Orientation, StreetIndex};
use crate::localization;
use crate::pipeline::map_streets_to_chips;
use crate::rng::{self, tag};

/// Geometry and gray levels of a synthetic wafer.
#[derive(Clone, Debug, PartialEq)]
pub struct WaferLayout {
    pub image_width: usize,
    pub image_height: usize,
    /// Center pixel of chip cell `(0, 0)`; also the wafer disc center.
    pub origin: (i64, i64),
    pub wafer_radius_px: f64,
    pub chip_pitch_px: usize,
    pub street_width_px: usize,
    pub cut_width_px: usize,
    pub chips_x: usize,
    pub chips_y: usize,
    pub cut_intensity: u8,
    pub street_intensity: u8,
    pub chip_intensity: u8,
    pub background_intensity: u8,
    /// Standard deviation of additive Gaussian pixel noise, in gray levels.
    pub noise_sigma: f64,
}

impl Default for WaferLayout {
    /// 24×24 chips at a 64 px pitch.
    fn default() -> Self {
        Self::centered(24, 24, 64, 16, 11.0 * 64.0)
    }
}

impl WaferLayout {
    /// A layout whose image just holds the chip grid plus half a pitch of
    /// margin, with the disc centered on the image.
    pub fn centered(
        chips_x: usize,
        chips_y: usize,
        pitch: usize,
        street_width: usize,
        radius: f64,
    ) -> Self {
        let image_width = (chips_x + 1) * pitch;
        let image_height = (chips_y + 1) * pitch;
        // the first cell starts half a pitch in from the edge
        let ox = pitch + (chips_x / 2) * pitch;
        let oy = pitch + (chips_y / 2) * pitch;
        Self {
            image_width,
            image_height,
            origin: (ox as i64, oy as i64),
            wafer_radius_px: radius,
            chip_pitch_px: pitch,
            street_width_px: street_width,
            cut_width_px: 2,
            chips_x,
            chips_y,
            cut_intensity: 30,
            street_intensity: 90,
            chip_intensity: 180,
            background_intensity: 220,
            noise_sigma: 4.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidLayout(m));
        let p = self.chip_pitch_px;
        let sw = self.street_width_px;
        if p < 8 || p % 2 != 0 {
            return bad(format!("chip pitch {p} must be even and >= 8"));
        }
        if sw == 0 || sw % 2 != 0 || sw >= p {
            return bad(format!("street width {sw} must be even, positive and < pitch {p}"));
        }
        if self.cut_width_px == 0 || self.cut_width_px > sw {
            return bad(format!("cut width {} must be in 1..={sw}", self.cut_width_px));
        }
        if !(self.wafer_radius_px > p as f64) {
            return bad(format!(
                "wafer radius {} must exceed chip pitch {p}",
                self.wafer_radius_px
            ));
        }
        if self.chips_x == 0 || self.chips_y == 0 {
            return bad("chip grid must be non-empty".into());
        }
        let levels = [
            self.cut_intensity,
            self.street_intensity,
            self.chip_intensity,
            self.background_intensity,
        ];
        for i in 0..levels.len() {
            for j in i + 1..levels.len() {
                if levels[i] == levels[j] {
                    return bad(format!("gray levels must be pairwise distinct, got {levels:?}"));
                }
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise sigma {} must be >= 0", self.noise_sigma));
        }
        let (x0, y0, x1, y1) = self.grid_pixel_bounds();
        if x0 < 0 || y0 < 0 || x1 > self.image_width as i64 || y1 > self.image_height as i64 {
            return bad(format!(
                "chip grid [{x0},{x1})x[{y0},{y1}) exceeds {}x{} image",
                self.image_width, self.image_height
            ));
        }
        Ok(())
    }

    pub fn x_range(&self) -> std::ops::RangeInclusive<i32> {
        let lo = -((self.chips_x / 2) as i32);
        lo..=lo + self.chips_x as i32 - 1
    }

    pub fn y_range(&self) -> std::ops::RangeInclusive<i32> {
        let lo = -((self.chips_y / 2) as i32);
        lo..=lo + self.chips_y as i32 - 1
    }

    /// All chip indices, row-major.
    pub fn chips(&self) -> impl Iterator<Item = ChipIndex> + '_ {
        self.y_range()
            .flat_map(move |y| self.x_range().map(move |x| ChipIndex::new(x, y)))
    }

    pub fn contains_chip(&self, c: ChipIndex) -> bool {
        self.x_range().contains(&c.x) && self.y_range().contains(&c.y)
    }

    /// A street exists if it borders at least one chip of the grid.
    pub fn contains_street(&self, s: StreetIndex) -> bool {
        s.chips().iter().any(|&c| self.contains_chip(c))
    }

    /// Top-left pixel of a chip cell.
    pub fn cell_origin(&self, c: ChipIndex) -> (i64, i64) {
        let p = self.chip_pitch_px as i64;
        (
            self.origin.0 + c.x as i64 * p - p / 2,
            self.origin.1 + c.y as i64 * p - p / 2,
        )
    }

    /// Half-open pixel bounds `(x0, y0, x1, y1)` of the whole chip grid.
    pub fn grid_pixel_bounds(&self) -> (i64, i64, i64, i64) {
        let p = self.chip_pitch_px as i64;
        let first = self.cell_origin(ChipIndex::new(*self.x_range().start(), *self.y_range().start()));
        let last = self.cell_origin(ChipIndex::new(*self.x_range().end(), *self.y_range().end()));
        (first.0, first.1, last.0 + p, last.1 + p)
    }

    /// Geometric disc center.
    pub fn disc_center(&self) -> PointF {
        PointF::new(self.origin.0 as f64 - 0.5, self.origin.1 as f64 - 0.5)
    }

    /// Geometric center of a chip cell.
    pub fn chip_center(&self, c: ChipIndex) -> PointF {
        let p = self.chip_pitch_px as f64;
        let o = self.disc_center();
        PointF::new(o.x + c.x as f64 * p, o.y + c.y as f64 * p)
    }

    /// Cell corners in continuous coordinates.
    pub fn chip_corners(&self, c: ChipIndex) -> [PointF; 4] {
        let h = self.chip_pitch_px as f64 / 2.0;
        let m = self.chip_center(c);
        [
            PointF::new(m.x - h, m.y - h),
            PointF::new(m.x + h, m.y - h),
            PointF::new(m.x + h, m.y + h),
            PointF::new(m.x - h, m.y + h),
        ]
    }

    /// Center of a street segment (on its cut centerline).
    pub fn street_center(&self, s: StreetIndex) -> PointF {
        let p = self.chip_pitch_px as f64;
        let o = self.disc_center();
        PointF::new(o.x + s.x() * p, o.y + s.y() * p)
    }

    fn pixel_in_disc(&self, x: usize, y: usize) -> bool {
        let dx = x as f64 + 0.5 - self.origin.0 as f64;
        let dy = y as f64 + 0.5 - self.origin.1 as f64;
        dx.hypot(dy) < self.wafer_radius_px
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DefectKind {
    Hole,
    BrokenCorner,
    MisdirectedCut,
}

impl DefectKind {
    pub const ALL: [DefectKind; 3] = [
        DefectKind::Hole,
        DefectKind::BrokenCorner,
        DefectKind::MisdirectedCut,
    ];
}

/// Which severity class each defect subclass belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DefectClassMap {
    pub hole: Label,
    pub broken_corner: Label,
    pub misdirected_cut: Label,
}

impl Default for DefectClassMap {
    fn default() -> Self {
        Self {
            hole: Label::Anomaly,
            broken_corner: Label::Faulty,
            misdirected_cut: Label::Faulty,
        }
    }
}

impl DefectClassMap {
    pub fn class_of(&self, kind: DefectKind) -> Label {
        match kind {
            DefectKind::Hole => self.hole,
            DefectKind::BrokenCorner => self.broken_corner,
            DefectKind::MisdirectedCut => self.misdirected_cut,
        }
    }

    pub fn kinds_for(&self, label: Label) -> Vec<DefectKind> {
        DefectKind::ALL
            .into_iter()
            .filter(|&k| self.class_of(k) == label)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DefectSpec {
    pub kind: DefectKind,
    pub street: StreetIndex,
    /// Severity in `(0, 1]`.
    pub magnitude: f64,
    pub rng_seed: u64,
}

/// True labels of a generated wafer.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GroundTruth {
    pub street_labels: BTreeMap<StreetIndex, Label>,
    pub chip_labels: BTreeMap<ChipIndex, Label>,
    pub chip_positions: BTreeMap<ChipIndex, ChipPosition>,
}

impl GroundTruth {
    pub fn inside_chips(&self) -> impl Iterator<Item = ChipIndex> + '_ {
        self.chip_positions
            .iter()
            .filter(|(_, &p)| p == ChipPosition::Inside)
            .map(|(&c, _)| c)
    }
}

/// Generation settings beyond the layout.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub class_map: DefectClassMap,
    /// Magnitude range drawn for random defects, per kind.
    pub hole_magnitude: (f64, f64),
    pub corner_magnitude: (f64, f64),
    pub cut_magnitude: (f64, f64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            class_map: DefectClassMap::default(),
            hole_magnitude: (0.5, 1.0),
            corner_magnitude: (0.5, 1.0),
            cut_magnitude: (0.6, 1.0),
        }
    }
}

impl SynthConfig {
    fn magnitude_range(&self, kind: DefectKind) -> (f64, f64) {
        match kind {
            DefectKind::Hole => self.hole_magnitude,
            DefectKind::BrokenCorner => self.corner_magnitude,
            DefectKind::MisdirectedCut => self.cut_magnitude,
        }
    }
}

/// Streets bordering at least one Inside chip, ascending.
pub fn graded_streets(positions: &BTreeMap<ChipIndex, ChipPosition>) -> Vec<StreetIndex> {
    let mut streets: Vec<StreetIndex> = positions
        .iter()
        .filter(|(_, &p)| p == ChipPosition::Inside)
        .flat_map(|(c, _)| c.adjacent_streets())
        .collect();
    streets.sort();
    streets.dedup();
    streets
}

pub fn chip_positions(layout: &WaferLayout) -> BTreeMap<ChipIndex, ChipPosition> {
    layout
        .chips()
        .map(|c| (c, localization::chip_position_truth(c, layout)))
        .collect()
}

/// Renders a wafer and its ground truth using the default class mapping.
pub fn generate_wafer(
    layout: &WaferLayout,
    defects: &[DefectSpec],
    seed: u64,
) -> Result<(GrayImage, GroundTruth)> {
    generate_wafer_with(layout, defects, seed, &DefectClassMap::default())
}

pub fn generate_wafer_with(
    layout: &WaferLayout,
    defects: &[DefectSpec],
    seed: u64,
    class_map: &DefectClassMap,
) -> Result<(GrayImage, GroundTruth)> {
    layout.validate()?;
    for d in defects {
        if !layout.contains_street(d.street) {
            return Err(Error::DefectOutOfGrid(d.street.to_string()));
        }
        if !(d.magnitude > 0.0 && d.magnitude <= 1.0) {
            return Err(Error::InvalidLayout(format!(
                "defect magnitude {} not in (0, 1]",
                d.magnitude
            )));
        }
    }

    let mut canvas = Canvas::new(layout);
    canvas.draw_base();
    let misdirected: Vec<StreetIndex> = defects
        .iter()
        .filter(|d| d.kind == DefectKind::MisdirectedCut)
        .map(|d| d.street)
        .collect();
    canvas.draw_cuts(&misdirected);
    for d in defects {
        canvas.draw_defect(d);
    }
    let image = canvas.finish(seed);

    let chip_positions = chip_positions(layout);
    let mut street_labels: BTreeMap<StreetIndex, Label> = graded_streets(&chip_positions)
        .into_iter()
        .map(|s| (s, Label::Flawless))
        .collect();
    for d in defects {
        if let Some(l) = street_labels.get_mut(&d.street) {
            *l = (*l).max(class_map.class_of(d.kind));
        }
    }
    let inside: Vec<ChipIndex> = chip_positions
        .iter()
        .filter(|(_, &p)| p == ChipPosition::Inside)
        .map(|(&c, _)| c)
        .collect();
    let chip_labels = map_streets_to_chips(&street_labels, inside)?;
    Ok((
        image,
        GroundTruth {
            street_labels,
            chip_labels,
            chip_positions,
        },
    ))
}

/// Per-class probabilities for street labels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassMix(pub [f64; 3]);

impl ClassMix {
    pub fn uniform() -> Self {
        ClassMix([1.0 / 3.0; 3])
    }

    pub fn validate(&self, class_map: &DefectClassMap) -> Result<()> {
        if self.0.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(Error::BadMix(format!("negative or non-finite probability in {:?}", self.0)));
        }
        let total: f64 = self.0.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::BadMix(format!("probabilities sum to {total}, not 1")));
        }
        for l in [Label::Anomaly, Label::Faulty] {
            if self.0[l.index()] > 0.0 && class_map.kinds_for(l).is_empty() {
                return Err(Error::BadMix(format!("no defect kind produces class {l}")));
            }
        }
        Ok(())
    }

    fn sample(&self, r: &mut rng::Rng) -> Label {
        let u: f64 = r.random();
        let mut acc = 0.0;
        for l in Label::ALL {
            acc += self.0[l.index()];
            if u < acc {
                return l;
            }
        }
        // rounding slack: last class with positive mass
        *Label::ALL
            .iter()
            .rev()
            .find(|l| self.0[l.index()] > 0.0)
            .unwrap_or(&Label::Flawless)
    }
}

/// Draws one defect (or none) per graded street according to `mix`.
pub fn random_defects(
    layout: &WaferLayout,
    mix: &ClassMix,
    cfg: &SynthConfig,
    seed: u64,
) -> Result<Vec<DefectSpec>> {
    mix.validate(&cfg.class_map)?;
    let mut r = rng::stream(seed, &[tag::MIX]);
    let mut defects = Vec::new();
    for street in graded_streets(&chip_positions(layout)) {
        let label = mix.sample(&mut r);
        if label == Label::Flawless {
            continue;
        }
        let kinds = cfg.class_map.kinds_for(label);
        let kind = kinds[r.random_range(0..kinds.len())];
        let (lo, hi) = cfg.magnitude_range(kind);
        let magnitude = if hi > lo { r.random_range(lo..=hi) } else { hi };
        defects.push(DefectSpec {
            kind,
            street,
            magnitude,
            rng_seed: r.random(),
        });
    }
    Ok(defects)
}

/// One patch row of a dataset manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub path: String,
    pub kind: PatchKind,
    /// Doubled grid coordinates, so half-integers stay exact.
    pub x2: i32,
    pub y2: i32,
    pub label: Label,
    pub position: ChipPosition,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PatchKind {
    Chip,
    Street,
}

impl PatchKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PatchKind::Chip => "chip",
            PatchKind::Street => "street",
        }
    }
}

pub const MANIFEST_HEADER: &str = "path,kind,x,y,label,position";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(MANIFEST_HEADER);
        s.push('\n');
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                e.path,
                e.kind.as_str(),
                crate::label::fmt_half(e.x2),
                crate::label::fmt_half(e.y2),
                e.label.index(),
                e.position.name()
            );
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(MANIFEST_HEADER) {
            return Err(Error::parse("manifest", "missing header"));
        }
        let mut entries = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(Error::parse("manifest", format!("bad row {line:?}")));
            }
            let coord = |s: &str| -> Result<i32> {
                let v: f64 = s
                    .parse()
                    .map_err(|_| Error::parse("manifest", format!("bad coordinate {s:?}")))?;
                Ok((v * 2.0).round() as i32)
            };
            let kind = match f[1] {
                "chip" => PatchKind::Chip,
                "street" => PatchKind::Street,
                k => return Err(Error::parse("manifest", format!("bad kind {k:?}"))),
            };
            let label: usize = f[4]
                .parse()
                .map_err(|_| Error::parse("manifest", format!("bad label {:?}", f[4])))?;
            entries.push(ManifestEntry {
                path: f[0].to_string(),
                kind,
                x2: coord(f[2])?,
                y2: coord(f[3])?,
                label: Label::from_index(label)?,
                position: f[5].parse()?,
            });
        }
        Ok(Manifest { entries })
    }

    pub fn street_labels(&self) -> impl Iterator<Item = Label> + '_ {
        self.entries
            .iter()
            .filter(|e| e.kind == PatchKind::Street)
            .map(|e| e.label)
    }
}

/// Ground-truth street window: centered on the true street center, lanes
/// turned vertical.
pub fn street_patch_truth(
    wafer: &GrayImage,
    layout: &WaferLayout,
    s: StreetIndex,
    size: usize,
) -> GrayImage {
    let c = layout.street_center(s);
    let patch = wafer.crop_centered(c.x.round() as i64, c.y.round() as i64, size);
    match s.orientation() {
        Orientation::Vertical => patch,
        Orientation::Horizontal => patch.transpose(),
    }
}

/// Wafer `index` of the random sequence drawn from `seed`.
pub fn dataset_wafer(
    layout: &WaferLayout,
    mix: &ClassMix,
    cfg: &SynthConfig,
    seed: u64,
    index: usize,
) -> Result<(GrayImage, GroundTruth)> {
    let wafer_seed = rng::stream(seed, &[tag::WAFER, index as u64]).random::<u64>();
    let defects = random_defects(layout, mix, cfg, wafer_seed)?;
    generate_wafer_with(layout, &defects, wafer_seed, &cfg.class_map)
}

/// Generates `n_wafers` wafers under `dir`, writing every wafer image, its
/// truth, all chip patches and all graded street patches plus `manifest.csv`.
pub fn generate_dataset(
    layout: &WaferLayout,
    mix: &ClassMix,
    cfg: &SynthConfig,
    n_wafers: usize,
    street_patch_size: usize,
    seed: u64,
    dir: &Path,
) -> Result<Manifest> {
    mix.validate(&cfg.class_map)?;
    if n_wafers == 0 {
        return Err(Error::TooFew { need: 1, got: 0 });
    }
    layout.validate()?;
    let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(p, e));
    for sub in ["wafers", "chips", "streets"] {
        mkdir(&dir.join(sub))?;
    }
    let mut manifest = Manifest::default();
    for w in 0..n_wafers {
        let (img, truth) = dataset_wafer(layout, mix, cfg, seed, w)?;
        let stem = format!("wafer_{w:04}");
        img.save_pgm(dir.join("wafers").join(format!("{stem}.pgm")))?;
        write_text(
            &dir.join("wafers").join(format!("{stem}.truth.csv")),
            &crate::wafermap::verdict_csv(&truth.street_labels, &truth.chip_labels),
        )?;

        for (c, patch) in localization::segment_chips(&img, layout)? {
            let rel: PathBuf = ["chips", &format!("{stem}_c{}_{}.pgm", c.x, c.y)].iter().collect();
            patch.save_pgm(dir.join(&rel))?;
            let position = truth.chip_positions[&c];
            manifest.entries.push(ManifestEntry {
                path: rel.to_string_lossy().into_owned(),
                kind: PatchKind::Chip,
                x2: 2 * c.x,
                y2: 2 * c.y,
                // ungraded (outside) chips carry class 0
                label: truth.chip_labels.get(&c).copied().unwrap_or(Label::Flawless),
                position,
            });
        }
        for (&s, &label) in &truth.street_labels {
            let (x2, y2) = s.doubled();
            let rel: PathBuf = ["streets", &format!("{stem}_s{}_{}.pgm", x2, y2)].iter().collect();
            street_patch_truth(&img, layout, s, street_patch_size).save_pgm(dir.join(&rel))?;
            manifest.entries.push(ManifestEntry {
                path: rel.to_string_lossy().into_owned(),
                kind: PatchKind::Street,
                x2,
                y2,
                label,
                position: ChipPosition::Inside,
            });
        }
    }
    write_text(&dir.join("manifest.csv"), &manifest.to_csv())?;
    Ok(manifest)
}

/// Reads back the wafers written by [`generate_dataset`], sorted by file
/// name. Chip positions are recomputed from `layout`.
pub fn load_dataset_wafers(dir: &Path, layout: &WaferLayout) -> Result<Vec<(String, GrayImage, GroundTruth)>> {
    let wafers = dir.join("wafers");
    let mut stems: Vec<String> = std::fs::read_dir(&wafers)
        .map_err(|e| Error::io(&wafers, e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            name.strip_suffix(".pgm").map(str::to_string)
        })
        .collect();
    stems.sort();
    let positions = chip_positions(layout);
    let mut out = Vec::with_capacity(stems.len());
    for stem in stems {
        let img = GrayImage::load_pgm(wafers.join(format!("{stem}.pgm")))?;
        let truth_path = wafers.join(format!("{stem}.truth.csv"));
        let text = std::fs::read_to_string(&truth_path).map_err(|e| Error::io(&truth_path, e))?;
        let (street_labels, chip_labels) = crate::wafermap::read_verdict_csv(&text)?;
        let truth = GroundTruth {
            street_labels,
            chip_labels,
            chip_positions: positions.clone(),
        };
        out.push((stem, img, truth));
    }
    if out.is_empty() {
        return Err(Error::EmptyData);
    }
    Ok(out)
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Float raster used while drawing; quantized once at the end.
struct Canvas<'a> {
    layout: &'a WaferLayout,
    w: usize,
    h: usize,
    px: Vec<u8>,
    disc: Vec<bool>,
}

impl<'a> Canvas<'a> {
    fn new(layout: &'a WaferLayout) -> Self {
        let (w, h) = (layout.image_width, layout.image_height);
        let mut disc = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                disc.push(layout.pixel_in_disc(x, y));
            }
        }
        Self {
            layout,
            w,
            h,
            px: vec![layout.background_intensity; w * h],
            disc,
        }
    }

    /// Paints a wafer pixel; pixels off the disc stay background.
    fn paint(&mut self, x: i64, y: i64, v: u8) {
        if x < 0 || y < 0 || x >= self.w as i64 || y >= self.h as i64 {
            return;
        }
        let i = y as usize * self.w + x as usize;
        if self.disc[i] {
            self.px[i] = v;
        }
    }

    fn draw_base(&mut self) {
        let l = self.layout;
        for i in 0..self.px.len() {
            if self.disc[i] {
                self.px[i] = l.street_intensity;
            }
        }
        let p = l.chip_pitch_px as i64;
        let half_sw = l.street_width_px as i64 / 2;
        let chips: Vec<ChipIndex> = l.chips().collect();
        for c in chips {
            let (x0, y0) = l.cell_origin(c);
            for y in y0 + half_sw..y0 + p - half_sw {
                for x in x0 + half_sw..x0 + p - half_sw {
                    self.paint(x, y, l.chip_intensity);
                }
            }
        }
    }

    /// Straight cut along every street segment except the misdirected ones,
    /// whose body span is drawn by the defect instead.
    fn draw_cuts(&mut self, misdirected: &[StreetIndex]) {
        let l = self.layout;
        let mut streets: Vec<StreetIndex> = l
            .chips()
            .flat_map(|c| c.adjacent_streets())
            .collect();
        streets.sort();
        streets.dedup();
        let half_cut = l.cut_width_px as f64 / 2.0;
        let p = l.chip_pitch_px as f64;
        let body_half = (l.chip_pitch_px - l.street_width_px) as f64 / 2.0;
        for s in streets {
            let c = l.street_center(s);
            let skip_body = misdirected.contains(&s);
            for t in -(p / 2.0).round() as i64..(p / 2.0).round() as i64 {
                // t indexes pixels along the lane relative to the segment center
                let along = t as f64 + 0.5;
                if skip_body && along.abs() < body_half {
                    continue;
                }
                self.cut_cross_section(s.orientation(), c, along - 0.5, half_cut);
            }
        }
    }

    /// Paints the pixels of one cross-section of a straight cut.
    fn cut_cross_section(&mut self, o: Orientation, c: PointF, along: f64, half_cut: f64) {
        let v = self.layout.cut_intensity;
        let n = half_cut.ceil() as i64 + 1;
        for k in -n..=n {
            let off = (c.x.floor() as i64 + k) as f64;
            let across = match o {
                Orientation::Vertical => off - c.x,
                Orientation::Horizontal => (c.y.floor() as i64 + k) as f64 - c.y,
            };
            if across.abs() > half_cut {
                continue;
            }
            match o {
                Orientation::Vertical => {
                    let y = (c.y + along).round() as i64;
                    self.paint(c.x.floor() as i64 + k, y, v);
                }
                Orientation::Horizontal => {
                    let x = (c.x + along).round() as i64;
                    self.paint(x, c.y.floor() as i64 + k, v);
                }
            }
        }
    }

    fn draw_defect(&mut self, d: &DefectSpec) {
        let l = self.layout;
        let mut r = rng::stream(d.rng_seed, &[tag::DEFECT]);
        let center = l.street_center(d.street);
        let o = d.street.orientation();
        let sw = l.street_width_px as f64;
        let body_half = (l.chip_pitch_px - l.street_width_px) as f64 / 2.0;
        // (across, along) → image coordinates
        let to_xy = |across: f64, along: f64| match o {
            Orientation::Vertical => PointF::new(center.x + across, center.y + along),
            Orientation::Horizontal => PointF::new(center.x + along, center.y + across),
        };
        let v = l.cut_intensity;
        match d.kind {
            DefectKind::Hole => {
                let radius = d.magnitude * sw / 2.0;
                let along = r.random_range(-0.6..=0.6) * body_half;
                let m = to_xy(0.0, along);
                self.fill_where(m, radius + 1.0, |p| p.distance(m) <= radius, v);
            }
            DefectKind::BrokenCorner => {
                let leg = (d.magnitude * sw).max(2.0);
                let side = if r.random::<bool>() { 1.0 } else { -1.0 };
                let end = if r.random::<bool>() { 1.0 } else { -1.0 };
                // corner of the chip body on `side` of the street at lane end `end`
                let corner_across = side * sw / 2.0;
                let corner_along = end * body_half;
                let corner = to_xy(corner_across, corner_along);
                self.fill_where(corner, leg + 1.0, |p| {
                    let (across, along) = match o {
                        Orientation::Vertical => (p.x - center.x, p.y - center.y),
                        Orientation::Horizontal => (p.y - center.y, p.x - center.x),
                    };
                    let a = (across - corner_across) * side;
                    let b = (corner_along - along) * end;
                    a >= -0.5 && b >= -0.5 && a + b <= leg
                }, v);
            }
            DefectKind::MisdirectedCut => {
                let dev = d.magnitude * sw * if r.random::<bool>() { 1.0 } else { -1.0 };
                let peak = r.random_range(-0.4..=0.4) * body_half;
                let pts = [
                    to_xy(0.0, -body_half - 1.0),
                    to_xy(dev, peak),
                    to_xy(0.0, body_half + 1.0),
                ];
                let half_cut = l.cut_width_px as f64 / 2.0;
                let lo = to_xy(-dev.abs() - 2.0, -body_half - 2.0);
                let hi = to_xy(dev.abs() + 2.0, body_half + 2.0);
                let (x0, x1) = (lo.x.min(hi.x).floor() as i64, lo.x.max(hi.x).ceil() as i64);
                let (y0, y1) = (lo.y.min(hi.y).floor() as i64, lo.y.max(hi.y).ceil() as i64);
                for y in y0..=y1 {
                    for x in x0..=x1 {
                        let p = PointF::new(x as f64, y as f64);
                        let dist = seg_distance(p, pts[0], pts[1]).min(seg_distance(p, pts[1], pts[2]));
                        if dist <= half_cut {
                            self.paint(x, y, v);
                        }
                    }
                }
            }
        }
    }

    fn fill_where(&mut self, c: PointF, reach: f64, inside: impl Fn(PointF) -> bool, v: u8) {
        let (x0, x1) = ((c.x - reach).floor() as i64, (c.x + reach).ceil() as i64);
        let (y0, y1) = ((c.y - reach).floor() as i64, (c.y + reach).ceil() as i64);
        for y in y0..=y1 {
            for x in x0..=x1 {
                if inside(PointF::new(x as f64, y as f64)) {
                    self.paint(x, y, v);
                }
            }
        }
    }

    fn finish(self, seed: u64) -> GrayImage {
        let mut px = self.px;
        let sigma = self.layout.noise_sigma;
        if sigma > 0.0 {
            let normal = Normal::new(0.0, sigma).expect("sigma validated");
            let mut r = rng::stream(seed, &[tag::NOISE]);
            for p in px.iter_mut() {
                let v = *p as f64 + normal.sample(&mut r);
                *p = v.round().clamp(0.0, 255.0) as u8;
            }
        }
        GrayImage::new(self.w, self.h, px).expect("canvas shape")
    }
}

fn seg_distance(p: PointF, a: PointF, b: PointF) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0)
    };
    p.distance(PointF::new(a.x + t * dx, a.y + t * dy))
}
