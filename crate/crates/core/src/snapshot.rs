//! Bird's-eye-view raster snapshots of a scored picture.

use std::path::Path;

use image::{Rgb, RgbImage};
use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{classify_picture, visible_to_any, BoxClass, EvalConfig, FrameOutcome};
use crate::scenario::{AgentKind, Scenario, EGO_ID};
use crate::sim::FrameRecord;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("frame {frame} is outside the run ({frames} frames)")]
    OutOfRange { frame: usize, frames: usize },
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Picture {
    EgoLocal,
    Cc,
}

impl Picture {
    pub fn label(&self) -> &'static str {
        match self {
            Picture::EgoLocal => "ego",
            Picture::Cc => "cc",
        }
    }
}

pub const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
pub const BLUE: Rgb<u8> = Rgb([40, 110, 255]);
pub const YELLOW: Rgb<u8> = Rgb([255, 220, 0]);
pub const RED: Rgb<u8> = Rgb([255, 30, 30]);
pub const GREEN: Rgb<u8> = Rgb([40, 200, 60]);
const BACKGROUND: Rgb<u8> = Rgb([24, 24, 28]);
const EGO_MARKER: Rgb<u8> = Rgb([0, 230, 230]);
const INFRA_MARKER: Rgb<u8> = Rgb([220, 0, 220]);

/// Legend swatches, in key order.
pub const LEGEND: [Rgb<u8>; 5] = [WHITE, BLUE, YELLOW, RED, GREEN];
pub const LEGEND_SWATCH: u32 = 12;
pub const LEGEND_ORIGIN: (u32, u32) = (6, 6);

pub fn class_color(c: BoxClass) -> Rgb<u8> {
    match c {
        BoxClass::TruePositiveTruth => WHITE,
        BoxClass::TruePositiveEstimate => BLUE,
        BoxClass::FalseNegative => YELLOW,
        BoxClass::FalsePositive => RED,
        BoxClass::Unevaluated => GREEN,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrawnBox {
    pub class: BoxClass,
    pub center: Vector2<f64>,
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub image: RgbImage,
    pub outcome: FrameOutcome,
    pub boxes: Vec<DrawnBox>,
}

struct Canvas {
    image: RgbImage,
    half_extent: f64,
}

impl Canvas {
    fn scale(&self) -> f64 {
        self.image.width() as f64 / (2.0 * self.half_extent)
    }

    fn to_px(&self, p: Vector2<f64>) -> Vector2<f64> {
        let s = self.scale();
        Vector2::new((p.x + self.half_extent) * s, (self.half_extent - p.y) * s)
    }

    /// Outline of an oriented rectangle, about two pixels thick.
    fn rect(&mut self, center: Vector2<f64>, length: f64, width: f64, yaw: f64, color: Rgb<u8>) {
        let s = self.scale();
        let c = self.to_px(center);
        let (hl, hw) = (length * s / 2.0, width * s / 2.0);
        let r = hl.hypot(hw).ceil() + 2.0;
        let (sin, cos) = yaw.sin_cos();
        let (w, h) = (self.image.width() as i64, self.image.height() as i64);
        for py in (c.y - r) as i64..=(c.y + r) as i64 {
            for px in (c.x - r) as i64..=(c.x + r) as i64 {
                if px < 0 || py < 0 || px >= w || py >= h {
                    continue;
                }
                let dx = px as f64 + 0.5 - c.x;
                let dy = -(py as f64 + 0.5 - c.y);
                let u = (dx * cos + dy * sin).abs();
                let v = (-dx * sin + dy * cos).abs();
                let inside = u <= hl + 1.0 && v <= hw + 1.0;
                let interior = u < hl - 1.0 && v < hw - 1.0;
                if inside && !interior {
                    self.image.put_pixel(px as u32, py as u32, color);
                }
            }
        }
    }

    fn marker(&mut self, at: Vector2<f64>, radius: i64, color: Rgb<u8>, round: bool) {
        let c = self.to_px(at);
        let (w, h) = (self.image.width() as i64, self.image.height() as i64);
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                if round && dx * dx + dy * dy > radius * radius {
                    continue;
                }
                let (px, py) = (c.x as i64 + dx, c.y as i64 + dy);
                if px >= 0 && py >= 0 && px < w && py < h {
                    self.image.put_pixel(px as u32, py as u32, color);
                }
            }
        }
    }

    fn legend(&mut self) {
        let (x0, y0) = LEGEND_ORIGIN;
        let pad = 3;
        let n = LEGEND.len() as u32;
        for y in y0 - pad..y0 + LEGEND_SWATCH + pad {
            for x in x0 - pad..x0 + n * (LEGEND_SWATCH + pad) {
                self.image.put_pixel(x, y, Rgb([0, 0, 0]));
            }
        }
        for (i, color) in LEGEND.iter().enumerate() {
            let left = x0 + i as u32 * (LEGEND_SWATCH + pad);
            for y in y0..y0 + LEGEND_SWATCH {
                for x in left..left + LEGEND_SWATCH {
                    self.image.put_pixel(x, y, *color);
                }
            }
        }
    }
}

/// Renders one frame of a run; `size` is the square image side in pixels.
pub fn render_snapshot(
    scenario: &Scenario,
    records: &[FrameRecord],
    frame: usize,
    picture: Picture,
    eval: &EvalConfig,
    size: u32,
) -> Result<Snapshot, SnapshotError> {
    let (Some(record), Some(truth)) = (records.get(frame), scenario.frames.get(frame)) else {
        return Err(SnapshotError::OutOfRange { frame, frames: records.len().min(scenario.frames.len()) });
    };
    let tracks = match picture {
        Picture::EgoLocal => &record.ego_local,
        Picture::Cc => &record.ego_cc,
    };
    let visible = visible_to_any(scenario, truth);
    let scored = classify_picture(tracks, truth, &visible, EGO_ID, eval);
    let mut canvas = Canvas {
        image: RgbImage::from_pixel(size.max(64), size.max(64), BACKGROUND),
        half_extent: scenario.config.map_extent + 15.0,
    };
    let mut boxes = Vec::new();
    for (o, class) in truth.objects.iter().zip(&scored.truth) {
        let s = &o.state;
        canvas.rect(s.position.xy(), s.extent.x, s.extent.y, s.yaw, class_color(*class));
        boxes.push(DrawnBox { class: *class, center: s.position.xy() });
    }
    for (t, class) in scored.propagated.iter().zip(&scored.estimates) {
        let v: Vector3<f64> = t.velocity();
        let yaw = if v.xy().norm() > 0.1 { v.y.atan2(v.x) } else { t.yaw };
        canvas.rect(t.position().xy(), t.extent.x, t.extent.y, yaw, class_color(*class));
        boxes.push(DrawnBox { class: *class, center: t.position().xy() });
    }
    for agent in &scenario.agents {
        if let Some(pose) = truth.agent_poses.get(&agent.id) {
            match agent.kind {
                AgentKind::Ego => canvas.marker(pose.position.xy(), 4, EGO_MARKER, true),
                AgentKind::Infrastructure => canvas.marker(pose.position.xy(), 4, INFRA_MARKER, false),
            }
        }
    }
    canvas.legend();
    Ok(Snapshot { image: canvas.image, outcome: scored.outcome, boxes })
}

pub fn export_snapshot(
    path: &Path,
    scenario: &Scenario,
    records: &[FrameRecord],
    frame: usize,
    picture: Picture,
    eval: &EvalConfig,
) -> Result<FrameOutcome, SnapshotError> {
    let snap = render_snapshot(scenario, records, frame, picture, eval, 800)?;
    snap.image.save(path)?;
    Ok(snap.outcome)
}
