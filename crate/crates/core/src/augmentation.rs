//! Stochastic view generation: random resized crop, horizontal flip, color
//! jitter and random grayscale, applied in that order with an independent
//! random stream per sample, view and transform.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, Rect};
use crate::rng::{self, SeededRng};

const ASPECT_MIN: f64 = 3.0 / 4.0;
const ASPECT_MAX: f64 = 4.0 / 3.0;
const CROP_ATTEMPTS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CropSettings {
    pub enabled: bool,
    /// Lower bound of the crop area as a fraction of the source area.
    pub area_min: f64,
    pub area_max: f64,
    /// Side of the square output, in pixels. Applies even when cropping is
    /// disabled (the whole image is resized instead).
    pub output_size: usize,
}

impl Default for CropSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            area_min: 0.5,
            area_max: 1.0,
            output_size: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlipSettings {
    pub enabled: bool,
    pub probability: f64,
}

impl Default for FlipSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            probability: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JitterSettings {
    pub enabled: bool,
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    /// Maximum hue rotation as a fraction of the full circle.
    pub hue: f64,
    pub probability: f64,
}

impl Default for JitterSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            brightness: 0.4,
            contrast: 0.4,
            saturation: 0.4,
            hue: 0.1,
            probability: 0.8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrayscaleSettings {
    pub enabled: bool,
    pub probability: f64,
}

impl Default for GrayscaleSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            probability: 0.2,
        }
    }
}

/// Which transforms run and how strongly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationPolicy {
    pub crop: CropSettings,
    pub flip: FlipSettings,
    pub jitter: JitterSettings,
    pub grayscale: GrayscaleSettings,
}

impl AugmentationPolicy {
    /// Cumulative ablation rows: 1 = crop, 2 = crop + flip,
    /// 3 = crop + flip + jitter + grayscale.
    pub fn ablation_row(row: usize) -> Result<Self> {
        let mut p = Self::default();
        match row {
            1 => {
                p.flip.enabled = false;
                p.jitter.enabled = false;
                p.grayscale.enabled = false;
            }
            2 => {
                p.jitter.enabled = false;
                p.grayscale.enabled = false;
            }
            3 => {}
            _ => {
                return Err(Error::invalid(format!(
                    "no augmentation ablation row {row}"
                )))
            }
        }
        Ok(p)
    }

    pub fn with_output_size(mut self, size: usize) -> Self {
        self.crop.output_size = size;
        self
    }

    /// Names of the enabled transforms, in application order.
    pub fn enabled(&self) -> Vec<&'static str> {
        [
            (self.crop.enabled, "crop"),
            (self.flip.enabled, "flip"),
            (self.jitter.enabled, "jitter"),
            (self.grayscale.enabled, "grayscale"),
        ]
        .into_iter()
        .filter_map(|(on, name)| on.then_some(name))
        .collect()
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        let key = |k: &str| format!("{prefix}.{k}");
        if self.enabled().is_empty() {
            return Err(Error::config(
                prefix,
                "at least one transform must be enabled",
            ));
        }
        for (name, p) in [
            ("flip.probability", self.flip.probability),
            ("jitter.probability", self.jitter.probability),
            ("grayscale.probability", self.grayscale.probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(
                    key(name),
                    format!("probability {p} outside [0, 1]"),
                ));
            }
        }
        let c = &self.crop;
        if !(c.area_min > 0.0 && c.area_min <= c.area_max && c.area_max <= 1.0) {
            return Err(Error::config(
                key("crop.area_min"),
                format!(
                    "area range [{}, {}] must satisfy 0 < min ≤ max ≤ 1",
                    c.area_min, c.area_max
                ),
            ));
        }
        if c.output_size < 2 {
            return Err(Error::config(
                key("crop.output_size"),
                "output size must be at least 2",
            ));
        }
        let j = &self.jitter;
        for (name, d) in [
            ("jitter.brightness", j.brightness),
            ("jitter.contrast", j.contrast),
            ("jitter.saturation", j.saturation),
        ] {
            if !(0.0..=1.0).contains(&d) {
                return Err(Error::config(
                    key(name),
                    format!("delta {d} outside [0, 1]"),
                ));
            }
        }
        if !(0.0..=0.5).contains(&j.hue) {
            return Err(Error::config(
                key("jitter.hue"),
                format!("hue delta {} outside [0, 0.5]", j.hue),
            ));
        }
        Ok(())
    }
}

/// Samples a crop with area uniform in `area_range`·(source area) and
/// log-uniform aspect ratio in [3/4, 4/3]. After ten rejected draws the
/// largest centered crop with an admissible aspect ratio is used.
pub fn sample_crop_rect(
    rng: &mut impl RngCore,
    width: usize,
    height: usize,
    area_range: (f64, f64),
) -> Rect {
    let area = (width * height) as f64;
    let (log_lo, log_hi) = (ASPECT_MIN.ln(), ASPECT_MAX.ln());
    for _ in 0..CROP_ATTEMPTS {
        let target = area * rng::uniform(rng, area_range.0, area_range.1);
        let aspect = rng::uniform(rng, log_lo, log_hi).exp();
        let w = (target * aspect).sqrt().round() as usize;
        let h = (target / aspect).sqrt().round() as usize;
        if w > 0 && h > 0 && w <= width && h <= height {
            let y = rng::index(rng, height - h + 1);
            let x = rng::index(rng, width - w + 1);
            return Rect { x, y, w, h };
        }
    }
    let ratio = width as f64 / height as f64;
    let (w, h) = if ratio < ASPECT_MIN {
        (
            width,
            ((width as f64 / ASPECT_MIN).round() as usize).min(height),
        )
    } else if ratio > ASPECT_MAX {
        (
            ((height as f64 * ASPECT_MAX).round() as usize).min(width),
            height,
        )
    } else {
        (width, height)
    };
    Rect {
        x: (width - w) / 2,
        y: (height - h) / 2,
        w,
        h,
    }
}

pub fn random_resized_crop(
    image: &Image,
    rng: &mut impl RngCore,
    area_range: (f64, f64),
    output_size: usize,
) -> Result<Image> {
    if image.width() < 2 || image.height() < 2 {
        return Err(Error::invalid(format!(
            "random_resized_crop: degenerate {}×{} image",
            image.width(),
            image.height()
        )));
    }
    let rect = sample_crop_rect(rng, image.width(), image.height(), area_range);
    Ok(image.resize_region(rect, output_size, output_size))
}

pub fn random_horizontal_flip(image: &Image, rng: &mut impl RngCore, p: f64) -> Image {
    if rng::bernoulli(rng, p) {
        image.flip_horizontal()
    } else {
        image.clone()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JitterStep {
    Brightness,
    Contrast,
    Saturation,
    Hue,
}

/// Concrete jitter factors for one application.
#[derive(Clone, Debug, PartialEq)]
pub struct JitterParams {
    pub brightness: f32,
    pub contrast: f32,
    pub saturation: f32,
    /// Hue rotation as a fraction of the circle.
    pub hue: f32,
    pub order: [JitterStep; 4],
}

impl JitterParams {
    pub fn identity() -> Self {
        Self {
            brightness: 1.0,
            contrast: 1.0,
            saturation: 1.0,
            hue: 0.0,
            order: [
                JitterStep::Brightness,
                JitterStep::Contrast,
                JitterStep::Saturation,
                JitterStep::Hue,
            ],
        }
    }

    pub fn sample(rng: &mut impl RngCore, settings: &JitterSettings) -> Self {
        let factor =
            |rng: &mut dyn RngCore, d: f64| rng::uniform(rng, (1.0 - d).max(0.0), 1.0 + d) as f32;
        let brightness = factor(rng, settings.brightness);
        let contrast = factor(rng, settings.contrast);
        let saturation = factor(rng, settings.saturation);
        let hue = rng::uniform(rng, -settings.hue, settings.hue) as f32;
        let mut order = Self::identity().order;
        rng::shuffle(rng, &mut order);
        Self {
            brightness,
            contrast,
            saturation,
            hue,
            order,
        }
    }
}

/// Applies jitter factors in `params.order`, clamping to `[0, 1]` after
/// every step. RGB input only.
pub fn apply_jitter(image: &Image, params: &JitterParams) -> Image {
    assert_eq!(image.channels(), 3, "color jitter needs an RGB image");
    let mut out = image.clone();
    for step in params.order {
        match step {
            JitterStep::Brightness => {
                if params.brightness != 1.0 {
                    out.data_mut()
                        .iter_mut()
                        .for_each(|v| *v *= params.brightness);
                }
            }
            JitterStep::Contrast => {
                if params.contrast != 1.0 {
                    let luma = out.luma();
                    let mean = luma.iter().sum::<f32>() / luma.len() as f32;
                    out.data_mut()
                        .iter_mut()
                        .for_each(|v| *v = mean + params.contrast * (*v - mean));
                }
            }
            JitterStep::Saturation => {
                if params.saturation != 1.0 {
                    let luma = out.luma();
                    let n = luma.len();
                    for (i, v) in out.data_mut().iter_mut().enumerate() {
                        let l = luma[i % n];
                        *v = l + params.saturation * (*v - l);
                    }
                }
            }
            JitterStep::Hue => {
                if params.hue != 0.0 {
                    rotate_hue(&mut out, params.hue);
                }
            }
        }
        out.clamp_unit();
    }
    out
}

pub fn color_jitter(image: &Image, rng: &mut impl RngCore, settings: &JitterSettings) -> Image {
    let apply = rng::bernoulli(rng, settings.probability);
    let params = JitterParams::sample(rng, settings);
    if apply {
        apply_jitter(image, &params)
    } else {
        image.clone()
    }
}

/// Luma replicated to three channels. RGB input only.
pub fn to_grayscale(image: &Image) -> Image {
    assert_eq!(image.channels(), 3, "grayscale needs an RGB image");
    let luma = image.luma();
    let mut data = Vec::with_capacity(luma.len() * 3);
    for _ in 0..3 {
        data.extend_from_slice(&luma);
    }
    Image::new(3, image.height(), image.width(), data).expect("same geometry")
}

pub fn random_grayscale(image: &Image, rng: &mut impl RngCore, p: f64) -> Image {
    if rng::bernoulli(rng, p) {
        to_grayscale(image)
    } else {
        image.clone()
    }
}

fn rotate_hue(image: &mut Image, shift: f32) {
    let n = image.width() * image.height();
    let data = image.data_mut();
    for i in 0..n {
        let (h, s, v) = rgb_to_hsv(data[i], data[n + i], data[2 * n + i]);
        let (r, g, b) = hsv_to_rgb((h + shift).rem_euclid(1.0), s, v);
        data[i] = r;
        data[n + i] = g;
        data[2 * n + i] = b;
    }
}

fn rgb_to_hsv(r: f32, g: f32, b: f32) -> (f32, f32, f32) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    if delta == 0.0 {
        return (0.0, s, max);
    }
    let h = if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    (h / 6.0, s, max)
}

fn hsv_to_rgb(h: f32, s: f32, v: f32) -> (f32, f32, f32) {
    let h6 = h * 6.0;
    let sector = h6.floor();
    let f = h6 - sector;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector as i32 % 6 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

/// One augmented view: crop → flip → jitter → grayscale, each drawing from
/// its own sub-stream of `(seed, sample_index, view_index)`.
pub fn make_view(
    image: &Image,
    policy: &AugmentationPolicy,
    seed: u64,
    sample_index: u64,
    view_index: u64,
) -> Result<Image> {
    let stream = SeededRng::new(seed).view_stream(sample_index, view_index);
    let size = policy.crop.output_size;
    let mut view = if policy.crop.enabled {
        random_resized_crop(
            image,
            &mut stream.transform("crop"),
            (policy.crop.area_min, policy.crop.area_max),
            size,
        )?
    } else {
        image.resize(size, size)
    };
    if policy.flip.enabled {
        view = random_horizontal_flip(
            &view,
            &mut stream.transform("flip"),
            policy.flip.probability,
        );
    }
    if policy.jitter.enabled {
        view = color_jitter(&view, &mut stream.transform("jitter"), &policy.jitter);
    }
    if policy.grayscale.enabled {
        view = random_grayscale(
            &view,
            &mut stream.transform("grayscale"),
            policy.grayscale.probability,
        );
    }
    Ok(view)
}

/// The positive pair `(x_i, x_j)` for one source image.
pub fn make_view_pair(
    image: &Image,
    policy: &AugmentationPolicy,
    seed: u64,
    sample_index: u64,
) -> Result<(Image, Image)> {
    Ok((
        make_view(image, policy, seed, sample_index, 0)?,
        make_view(image, policy, seed, sample_index, 1)?,
    ))
}
