//! Wafer-map rendering (SVG) and verdict CSV export.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::label::{fmt_half, ChipIndex, Label, Orientation, StreetIndex};
use crate::pipeline::WaferVerdict;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Palette {
    pub flawless: String,
    pub anomaly: String,
    pub faulty: String,
}

impl Default for Palette {
    fn default() -> Self {
        Self {
            flawless: "#2ca02c".into(),
            anomaly: "#ffd700".into(),
            faulty: "#d62728".into(),
        }
    }
}

impl Palette {
    pub fn color(&self, l: Label) -> &str {
        match l {
            Label::Flawless => &self.flawless,
            Label::Anomaly => &self.anomaly,
            Label::Faulty => &self.faulty,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WaferMap {
    pub verdict: WaferVerdict,
    pub palette: Palette,
    /// Pixels per grid unit.
    pub cell_px: usize,
}

impl WaferMap {
    pub fn new(verdict: WaferVerdict) -> Self {
        Self {
            verdict,
            palette: Palette::default(),
            cell_px: 24,
        }
    }

    /// Chips as filled squares at integer coordinates, streets as short
    /// strokes at half-integer coordinates: horizontal ticks where x is
    /// half-integer, vertical ticks where y is.
    pub fn render_svg(&self) -> Result<String> {
        let v = &self.verdict;
        if v.chip_labels.is_empty() && v.street_labels.is_empty() {
            return Err(Error::EmptyVerdict);
        }
        // bounds in doubled grid units
        let pts = v
            .chip_labels
            .keys()
            .map(|c| (2 * c.x, 2 * c.y))
            .chain(v.street_labels.keys().map(|s| s.doubled()));
        let (mut x0, mut y0, mut x1, mut y1) = (i32::MAX, i32::MAX, i32::MIN, i32::MIN);
        for (x, y) in pts {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        let cell = self.cell_px as f64;
        let half = cell / 2.0;
        let margin = cell;
        let px = |v2: i32, lo: i32| margin + (v2 - lo) as f64 * half;
        let width = 2.0 * margin + (x1 - x0) as f64 * half;
        let height = 2.0 * margin + (y1 - y0) as f64 * half;

        let mut s = String::new();
        let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.1}" height="{height:.1}" viewBox="0 0 {width:.1} {height:.1}">"#
        );
        let _ = writeln!(s, r#"<rect x="0" y="0" width="{width:.1}" height="{height:.1}" fill="none" stroke="none"/>"#);
        let side = 0.6 * cell;
        for (c, &l) in &v.chip_labels {
            let (cx, cy) = (px(2 * c.x, x0), px(2 * c.y, y0));
            let _ = writeln!(
                s,
                r#"<rect x="{:.1}" y="{:.1}" width="{side:.1}" height="{side:.1}" fill="{}"/>"#,
                cx - side / 2.0,
                cy - side / 2.0,
                self.palette.color(l)
            );
        }
        let tick = 0.35 * cell;
        let stroke_w = (0.12 * cell).max(1.0);
        for (st, &l) in &v.street_labels {
            let (x2, y2) = st.doubled();
            let (cx, cy) = (px(x2, x0), px(y2, y0));
            let (dx, dy) = match st.orientation() {
                Orientation::Vertical => (tick, 0.0),
                Orientation::Horizontal => (0.0, tick),
            };
            let _ = writeln!(
                s,
                r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{}" stroke-width="{stroke_w:.1}"/>"#,
                cx - dx,
                cy - dy,
                cx + dx,
                cy + dy,
                self.palette.color(l)
            );
        }
        s.push_str("</svg>\n");
        Ok(s)
    }

    pub fn export_csv(&self) -> String {
        self.verdict.to_csv()
    }
}

pub const CSV_HEADER: &str = "kind,x,y,label";

/// Chips first, then streets, each in ascending grid order.
pub fn verdict_csv(
    street_labels: &BTreeMap<StreetIndex, Label>,
    chip_labels: &BTreeMap<ChipIndex, Label>,
) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for (c, l) in chip_labels {
        let _ = writeln!(s, "chip,{},{},{}", c.x, c.y, l.index());
    }
    for (st, l) in street_labels {
        let (x2, y2) = st.doubled();
        let _ = writeln!(s, "street,{},{},{}", fmt_half(x2), fmt_half(y2), l.index());
    }
    s
}

/// Street and chip labels from `kind,x,y,label` text.
#[allow(clippy::type_complexity)]
pub fn read_verdict_csv(text: &str) -> Result<(BTreeMap<StreetIndex, Label>, BTreeMap<ChipIndex, Label>)> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CSV_HEADER) {
        return Err(Error::parse("verdict csv", format!("missing header `{CSV_HEADER}`")));
    }
    let mut streets = BTreeMap::new();
    let mut chips = BTreeMap::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |d: &str| Error::parse("verdict csv", format!("line {}: {d}", n + 2));
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let [kind, x, y, label] = f[..] else {
            return Err(bad("expected 4 fields"));
        };
        let num = |v: &str| v.parse::<f64>().map_err(|_| bad(&format!("bad number `{v}`")));
        let label = label
            .parse::<usize>()
            .map_err(|_| bad("bad label"))
            .and_then(Label::from_index)?;
        let (x, y) = (num(x)?, num(y)?);
        match kind {
            "chip" => {
                if x.fract() != 0.0 || y.fract() != 0.0 {
                    return Err(bad("chip coordinates must be integers"));
                }
                chips.insert(ChipIndex::new(x as i32, y as i32), label);
            }
            "street" => {
                streets.insert(StreetIndex::from_f64(x, y)?, label);
            }
            _ => return Err(bad(&format!("unknown kind `{kind}`"))),
        }
    }
    Ok((streets, chips))
}
