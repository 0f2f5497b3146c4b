//! Crop geometry for the multi-segment variants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Extra pixels added to the half-size segments.
pub const OVERLAP: u32 = 50;
/// Minimum width and height for five overlapping segments.
pub const MIN_SIDE_MULTI: u32 = 120;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl Rect {
    pub fn contains(&self, px: u32, py: u32) -> bool {
        px >= self.x && px < self.x + self.width && py >= self.y && py < self.y + self.height
    }
}

/// Crop rectangles in source-pixel space. With five segments the order is
/// top-left, bottom-left, top-right, bottom-right, center.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentGeometry {
    pub width: u32,
    pub height: u32,
    pub rects: Vec<Rect>,
}

pub fn segment_rects(width: u32, height: u32, s: usize) -> Result<SegmentGeometry> {
    let rects = match s {
        1 => {
            if width == 0 || height == 0 {
                return Err(Error::InvalidParam("image has zero area".into()));
            }
            vec![Rect { x: 0, y: 0, width, height }]
        }
        5 => {
            if width < MIN_SIDE_MULTI || height < MIN_SIDE_MULTI {
                return Err(Error::InvalidParam(format!(
                    "image {width}x{height} too small for 5 segments (need >= {MIN_SIDE_MULTI} px per side)"
                )));
            }
            let w = width / 2 + OVERLAP;
            let h = height / 2 + OVERLAP;
            let right = width - w;
            let bottom = height - h;
            // W/2 x H/2 core, centered, grown by OVERLAP/2 on every side
            let cx = (width - width / 2) / 2 - OVERLAP / 2;
            let cy = (height - height / 2) / 2 - OVERLAP / 2;
            vec![
                Rect { x: 0, y: 0, width: w, height: h },
                Rect { x: 0, y: bottom, width: w, height: h },
                Rect { x: right, y: 0, width: w, height: h },
                Rect { x: right, y: bottom, width: w, height: h },
                Rect { x: cx, y: cy, width: w, height: h },
            ]
        }
        other => return Err(Error::InvalidParam(format!("segment count must be 1 or 5, got {other}"))),
    };
    Ok(SegmentGeometry { width, height, rects })
}
