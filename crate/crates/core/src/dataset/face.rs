use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, Rect};

/// Face bounding box in frame pixels. May extend past the frame; serialized
/// as `[x, y, w, h]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[i64; 4]", into = "[i64; 4]")]
pub struct BBox {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
}

impl From<[i64; 4]> for BBox {
    fn from([x, y, w, h]: [i64; 4]) -> Self {
        Self { x, y, w, h }
    }
}

impl From<BBox> for [i64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

/// The square region cut around `bbox`: side `max(w, h)`, centered on the
/// box, shifted back inside the frame when it overflows. A side larger than
/// the frame's short edge is clamped to it.
pub fn face_crop_rect(frame_w: usize, frame_h: usize, bbox: BBox) -> Result<Rect> {
    if bbox.w <= 0 || bbox.h <= 0 {
        return Err(Error::invalid(format!(
            "bounding box {:?} has zero area",
            <[i64; 4]>::from(bbox)
        )));
    }
    let (fw, fh) = (frame_w as i64, frame_h as i64);
    if bbox.x + bbox.w <= 0 || bbox.y + bbox.h <= 0 || bbox.x >= fw || bbox.y >= fh {
        return Err(Error::invalid(format!(
            "bounding box {:?} lies outside the {frame_w}×{frame_h} frame",
            <[i64; 4]>::from(bbox)
        )));
    }
    let side = bbox.w.max(bbox.h).min(fw.min(fh));
    let left = (bbox.x - (side - bbox.w).div_euclid(2)).clamp(0, fw - side);
    let top = (bbox.y - (side - bbox.h).div_euclid(2)).clamp(0, fh - side);
    Ok(Rect {
        x: left as usize,
        y: top as usize,
        w: side as usize,
        h: side as usize,
    })
}

pub fn preprocess_face_crop(frame: &Image, bbox: BBox, size: usize) -> Result<Image> {
    let rect = face_crop_rect(frame.width(), frame.height(), bbox)?;
    Ok(frame.resize_region(rect, size, size))
}
