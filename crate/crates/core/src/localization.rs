//! Chip segmentation, geometric chip-position truth and template-driven
//! street localization.

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::imgproc::{self, PointF};
use crate::label::{ChipIndex, ChipPosition, Orientation, StreetIndex};
use crate::synthwafer::WaferLayout;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TemplateLevel {
    Chip,
    Street,
}

/// The inspector-selected layout template that defines a region of interest.
#[derive(Clone, Debug, PartialEq)]
pub struct Template {
    pub chip_pitch_px: usize,
    pub street_width_px: usize,
    /// Side of the square ROI handed to the classifier.
    pub patch_size: usize,
    pub level: TemplateLevel,
    /// Erosion structuring-element radius.
    pub se_radius: usize,
    /// Fixed binarization threshold on the equalized patch. When `None`, Otsu
    /// picks a level on the raw patch and it is carried through the
    /// equalization mapping.
    pub threshold: Option<u8>,
}

impl Template {
    pub fn street(layout: &WaferLayout, patch_size: usize) -> Self {
        Self {
            chip_pitch_px: layout.chip_pitch_px,
            street_width_px: layout.street_width_px,
            patch_size,
            level: TemplateLevel::Street,
            se_radius: 1,
            threshold: None,
        }
    }

    pub fn chip(layout: &WaferLayout) -> Self {
        Self {
            chip_pitch_px: layout.chip_pitch_px,
            street_width_px: layout.street_width_px,
            patch_size: layout.chip_pitch_px,
            level: TemplateLevel::Chip,
            se_radius: 1,
            threshold: None,
        }
    }

    pub fn validate(&self, layout: &WaferLayout) -> Result<()> {
        if self.patch_size < 8 {
            return Err(Error::Config(format!("template patch size {} < 8", self.patch_size)));
        }
        if self.chip_pitch_px != layout.chip_pitch_px || self.street_width_px != layout.street_width_px {
            return Err(Error::LayoutMismatch(format!(
                "template pitch/street {}/{} vs layout {}/{}",
                self.chip_pitch_px, self.street_width_px, layout.chip_pitch_px, layout.street_width_px
            )));
        }
        Ok(())
    }
}

/// A located street region.
#[derive(Clone, Debug, PartialEq)]
pub struct StreetROI {
    /// Located center, in the coordinates of the image the ROI was cut from.
    pub center: PointF,
    pub orientation: Orientation,
    /// `patch_size²` window centered on `center`, edge-replicated.
    pub patch: GrayImage,
    pub grid_index: StreetIndex,
}

impl StreetROI {
    /// The patch with the lane turned vertical.
    pub fn canonical_patch(&self) -> GrayImage {
        match self.orientation {
            Orientation::Vertical => self.patch.clone(),
            Orientation::Horizontal => self.patch.transpose(),
        }
    }
}

/// Splits the chip grid into `pitch²` patches, one per cell, row-major.
pub fn segment_chips(wafer: &GrayImage, layout: &WaferLayout) -> Result<Vec<(ChipIndex, GrayImage)>> {
    let (x0, y0, x1, y1) = layout.grid_pixel_bounds();
    if x0 < 0 || y0 < 0 || x1 > wafer.width() as i64 || y1 > wafer.height() as i64 {
        return Err(Error::LayoutMismatch(format!(
            "grid [{x0},{x1})x[{y0},{y1}) extends beyond {}x{} image",
            wafer.width(),
            wafer.height()
        )));
    }
    let p = layout.chip_pitch_px;
    Ok(layout
        .chips()
        .map(|c| {
            let (cx, cy) = layout.cell_origin(c);
            (c, wafer.crop_replicate(cx, cy, p, p))
        })
        .collect())
}

/// `Inside` iff every cell corner lies strictly within the wafer radius.
pub fn chip_position_truth(c: ChipIndex, layout: &WaferLayout) -> ChipPosition {
    let o = layout.disc_center();
    let inside = layout
        .chip_corners(c)
        .iter()
        .all(|corner| corner.distance(o) < layout.wafer_radius_px);
    if inside {
        ChipPosition::Inside
    } else {
        ChipPosition::Outside
    }
}

/// Street centers around a chip patch as `[top, right, bottom, left]`, in
/// patch coordinates.
///
/// Chain: equalize → threshold → erode → follow borders → largest contour →
/// side centers, then each center moves outward onto the street centerline.
pub fn locate_street_centers(chip_patch: &GrayImage, tmpl: &Template) -> Result<[PointF; 4]> {
    if tmpl.level != TemplateLevel::Street {
        return Err(Error::Config("street localization needs a street-level template".into()));
    }
    let lut = imgproc::equalization_lut(chip_patch);
    let equalized = imgproc::equalize_histogram(chip_patch);
    // Equalization flattens the histogram, so Otsu on the equalized patch
    // tends to cut the noisy chip-body mode in half.
    let t = tmpl.threshold.unwrap_or_else(|| {
        let raw = imgproc::otsu_threshold(chip_patch);
        let lowest_above = chip_patch.pixels().iter().copied().filter(|&p| p >= raw).min();
        lowest_above.map_or(255, |v| lut[v as usize])
    });
    let binary = imgproc::threshold_binary(&equalized, Some(t));
    let ones = binary.count_ones();
    if ones == 0 || ones == binary.bits().len() {
        return Err(Error::NoContour);
    }
    let eroded = imgproc::erode(&binary, tmpl.se_radius);
    let contours = imgproc::follow_borders(&eroded);
    let body = imgproc::largest_contour(&contours).map_err(|_| Error::NoContour)?;
    let [top, right, bottom, left] = imgproc::side_centers(body)?;
    // border pixel → street centerline: half a street, the eroded rim, and
    // half a pixel from pixel center to pixel edge
    let shift = tmpl.street_width_px as f64 / 2.0 + tmpl.se_radius as f64 + 0.5;
    Ok([
        PointF::new(top.x, top.y - shift),
        PointF::new(right.x + shift, right.y),
        PointF::new(bottom.x, bottom.y + shift),
        PointF::new(left.x - shift, left.y),
    ])
}

fn side_streets(chip: ChipIndex) -> [(StreetIndex, Orientation); 4] {
    let up = ChipIndex::new(chip.x, chip.y - 1);
    let left = ChipIndex::new(chip.x - 1, chip.y);
    [
        (StreetIndex::below(up), Orientation::Horizontal),
        (StreetIndex::right_of(chip), Orientation::Vertical),
        (StreetIndex::below(chip), Orientation::Horizontal),
        (StreetIndex::right_of(left), Orientation::Vertical),
    ]
}

fn rois_from(
    source: &GrayImage,
    centers: [PointF; 4],
    chip: ChipIndex,
    size: usize,
    offset: (f64, f64),
) -> Vec<StreetROI> {
    centers
        .iter()
        .zip(side_streets(chip))
        .map(|(c, (grid_index, orientation))| {
            let center = PointF::new(c.x + offset.0, c.y + offset.1);
            StreetROI {
                center,
                orientation,
                patch: source.crop_centered(center.x.round() as i64, center.y.round() as i64, size),
                grid_index,
            }
        })
        .collect()
}

/// Four street ROIs cut from the chip patch itself, indexed as if the chip
/// were at grid `(0, 0)`.
pub fn locate_streets(chip_patch: &GrayImage, tmpl: &Template) -> Result<Vec<StreetROI>> {
    let centers = locate_street_centers(chip_patch, tmpl)?;
    Ok(rois_from(chip_patch, centers, ChipIndex::new(0, 0), tmpl.patch_size, (0.0, 0.0)))
}

/// Locates the streets of one chip and cuts the ROIs from the full wafer, so
/// that windows reaching past the chip cell see the real neighbourhood.
pub fn locate_streets_on_wafer(
    wafer: &GrayImage,
    layout: &WaferLayout,
    chip: ChipIndex,
    tmpl: &Template,
) -> Result<Vec<StreetROI>> {
    let p = layout.chip_pitch_px;
    let (cx, cy) = layout.cell_origin(chip);
    let chip_patch = wafer.crop_replicate(cx, cy, p, p);
    let centers = locate_street_centers(&chip_patch, tmpl)?;
    Ok(rois_from(wafer, centers, chip, tmpl.patch_size, (cx as f64, cy as f64)))
}
