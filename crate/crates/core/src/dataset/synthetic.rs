//! Procedural face-like images with a configurable forgery artifact.
//!
//! A scene is a smooth random background, an elliptical "face" with radial
//! shading and skin noise, and two dark eye dots. Fake samples carry an
//! artifact confined to an inner ellipse covering the central face. Each
//! scene draws from its own stream, so a real image and its fake
//! counterpart differ only inside the artifact region.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ImageSample, Label};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::{self, label_key};

/// Inner-ellipse axes as a fraction of the face axes.
const ARTIFACT_SCALE: f64 = 0.6;
const COLOR_SHIFT: [f32; 3] = [1.0, 0.4, -0.6];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    /// Tints the region by `strength·(1.0, 0.4, −0.6)`.
    ColorShift,
    /// Brightens the one-pixel ring on the region boundary by `strength`.
    BoundarySeam,
    /// Blends the region with its 3×3 box blur, weight `min(strength, 1)`.
    LowpassPatch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackgroundSpec {
    /// Peak amplitude of each sinusoid component.
    pub amplitude: f64,
    /// Maximum spatial frequency, in cycles per image.
    pub max_frequency: f64,
    pub components: usize,
}

impl Default for BackgroundSpec {
    fn default() -> Self {
        Self {
            amplitude: 0.12,
            max_frequency: 2.0,
            components: 2,
        }
    }
}

/// Face geometry as fractions of the image side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FaceSpec {
    pub axis_min: f64,
    pub axis_max: f64,
    pub center_jitter: f64,
}

impl Default for FaceSpec {
    fn default() -> Self {
        Self {
            axis_min: 0.24,
            axis_max: 0.32,
            center_jitter: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub name: String,
    pub artifact: ArtifactKind,
    pub strength: f64,
    #[serde(default = "default_size")]
    pub image_size: usize,
    pub n_real: usize,
    pub n_fake: usize,
    pub seed: u64,
    #[serde(default)]
    pub background: BackgroundSpec,
    #[serde(default)]
    pub face: FaceSpec,
}

fn default_size() -> usize {
    32
}

impl DomainSpec {
    pub fn new(
        name: &str,
        artifact: ArtifactKind,
        strength: f64,
        n_real: usize,
        n_fake: usize,
        seed: u64,
    ) -> Self {
        Self {
            name: name.to_string(),
            artifact,
            strength,
            image_size: default_size(),
            n_real,
            n_fake,
            seed,
            background: BackgroundSpec::default(),
            face: FaceSpec::default(),
        }
    }

    /// The reference domain: `synthA`, color shift 0.15, seed 42, 32 px,
    /// 600 images per class.
    pub fn reference() -> Self {
        Self::new("synthA", ArtifactKind::ColorShift, 0.15, 600, 600, 42)
    }

    pub fn len(&self) -> usize {
        self.n_real + self.n_fake
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        let key = |k: &str| format!("{prefix}.{k}");
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(Error::config(
                key("name"),
                format!("`{}` is not a valid domain name", self.name),
            ));
        }
        if !(self.strength > 0.0 && self.strength.is_finite()) {
            return Err(Error::config(
                key("strength"),
                "artifact strength must be positive",
            ));
        }
        if self.n_real == 0 || self.n_fake == 0 {
            return Err(Error::config(
                key("n_real"),
                "each class needs at least one sample",
            ));
        }
        if self.image_size < 8 {
            return Err(Error::config(
                key("image_size"),
                "image size must be at least 8",
            ));
        }
        let f = &self.face;
        if !(f.axis_min > 0.0 && f.axis_min <= f.axis_max && f.axis_max <= 0.45) {
            return Err(Error::config(
                key("face.axis_min"),
                "face axes must satisfy 0 < min ≤ max ≤ 0.45",
            ));
        }
        if !(0.0..=0.1).contains(&f.center_jitter) {
            return Err(Error::config(
                key("face.center_jitter"),
                "center jitter must be in [0, 0.1]",
            ));
        }
        if self.background.amplitude < 0.0 || self.background.max_frequency < 0.0 {
            return Err(Error::config(
                key("background"),
                "background parameters must be non-negative",
            ));
        }
        Ok(())
    }
}

struct Wave {
    amp: [f64; 3],
    fx: f64,
    fy: f64,
    phase: f64,
}

struct Scene {
    base: [f64; 3],
    waves: Vec<Wave>,
    cx: f64,
    cy: f64,
    ax: f64,
    ay: f64,
    skin: [f64; 3],
    noise: Vec<f32>,
    eye_r: f64,
}

impl Scene {
    fn draw(spec: &DomainSpec, index: usize) -> Self {
        let mut rng = rng::stream(spec.seed, &[label_key("scene"), index as u64]);
        let s = spec.image_size as f64;
        let base = [0; 3].map(|_| rng::uniform(&mut rng, 0.25, 0.75));
        let bg = &spec.background;
        let waves = (0..bg.components)
            .map(|_| Wave {
                amp: [0; 3].map(|_| bg.amplitude * rng::uniform(&mut rng, 0.5, 1.0)),
                fx: rng::uniform(&mut rng, -bg.max_frequency, bg.max_frequency),
                fy: rng::uniform(&mut rng, -bg.max_frequency, bg.max_frequency),
                phase: rng::uniform(&mut rng, 0.0, TAU),
            })
            .collect();
        let f = &spec.face;
        let cx = s / 2.0 + s * rng::uniform(&mut rng, -f.center_jitter, f.center_jitter);
        let cy = s / 2.0 + s * rng::uniform(&mut rng, -f.center_jitter, f.center_jitter);
        let ax = s * rng::uniform(&mut rng, f.axis_min, f.axis_max);
        let ay = (ax * rng::uniform(&mut rng, 1.1, 1.35)).min(0.48 * s);
        let skin = [0.82, 0.62, 0.5].map(|c| c + rng::uniform(&mut rng, -0.08, 0.08));
        let n = spec.image_size * spec.image_size;
        let noise = (0..n)
            .map(|_| rng::uniform(&mut rng, -0.03, 0.03) as f32)
            .collect();
        Self {
            base,
            waves,
            cx,
            cy,
            ax,
            ay,
            skin,
            noise,
            eye_r: (0.12 * ax).max(1.0),
        }
    }

    /// Squared normalized radius of pixel center `(x, y)` in an ellipse
    /// scaled by `k`.
    fn radius2(&self, x: usize, y: usize, k: f64) -> f64 {
        let dx = (x as f64 + 0.5 - self.cx) / (k * self.ax);
        let dy = (y as f64 + 0.5 - self.cy) / (k * self.ay);
        dx * dx + dy * dy
    }

    fn render(&self, size: usize) -> Image {
        let s = size as f64;
        let eyes = [
            (self.cx - 0.35 * self.ax, self.cy - 0.25 * self.ay),
            (self.cx + 0.35 * self.ax, self.cy - 0.25 * self.ay),
        ];
        let mut img = Image::filled(3, size, size, 0.0);
        for y in 0..size {
            for x in 0..size {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let r2 = self.radius2(x, y, 1.0);
                let in_eye = eyes.iter().any(|&(ex, ey)| {
                    (px - ex).powi(2) + (py - ey).powi(2) <= self.eye_r * self.eye_r
                });
                for c in 0..3 {
                    let v = if in_eye {
                        [0.1, 0.08, 0.08][c]
                    } else if r2 <= 1.0 {
                        self.skin[c] * (1.0 - 0.35 * r2) + self.noise[y * size + x] as f64
                    } else {
                        self.base[c]
                            + self
                                .waves
                                .iter()
                                .map(|w| {
                                    w.amp[c] * (TAU * (w.fx * px + w.fy * py) / s + w.phase).sin()
                                })
                                .sum::<f64>()
                    };
                    img.set(c, y, x, v as f32);
                }
            }
        }
        img.clamp_unit();
        img
    }

    fn region(&self, size: usize) -> Vec<bool> {
        (0..size * size)
            .map(|i| self.radius2(i % size, i / size, ARTIFACT_SCALE) <= 1.0)
            .collect()
    }
}

fn apply_artifact(img: &Image, region: &[bool], kind: ArtifactKind, strength: f64) -> Image {
    let (h, w) = (img.height(), img.width());
    let s = strength as f32;
    let mut out = img.clone();
    match kind {
        ArtifactKind::ColorShift => {
            for (i, _) in region.iter().enumerate().filter(|(_, &m)| m) {
                for (c, shift) in COLOR_SHIFT.iter().enumerate() {
                    let v = out.get(c, i / w, i % w);
                    out.set(c, i / w, i % w, v + s * shift);
                }
            }
        }
        ArtifactKind::BoundarySeam => {
            let inside = |y: isize, x: isize| {
                y >= 0
                    && x >= 0
                    && (y as usize) < h
                    && (x as usize) < w
                    && region[y as usize * w + x as usize]
            };
            for y in 0..h {
                for x in 0..w {
                    let (yi, xi) = (y as isize, x as isize);
                    let ring = region[y * w + x]
                        && !(inside(yi - 1, xi)
                            && inside(yi + 1, xi)
                            && inside(yi, xi - 1)
                            && inside(yi, xi + 1));
                    if ring {
                        for c in 0..3 {
                            out.set(c, y, x, img.get(c, y, x) + s);
                        }
                    }
                }
            }
        }
        ArtifactKind::LowpassPatch => {
            let weight = s.min(1.0);
            for y in 0..h {
                for x in 0..w {
                    if !region[y * w + x] {
                        continue;
                    }
                    for c in 0..3 {
                        let mut acc = 0.0;
                        for dy in -1isize..=1 {
                            for dx in -1isize..=1 {
                                let yy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                                let xx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                                acc += img.get(c, yy, xx);
                            }
                        }
                        let v = img.get(c, y, x);
                        out.set(c, y, x, (1.0 - weight) * v + weight * acc / 9.0);
                    }
                }
            }
        }
    }
    out
}

/// Artifact region of scene `index` as a row-major mask.
pub fn artifact_mask(spec: &DomainSpec, index: usize) -> Vec<bool> {
    Scene::draw(spec, index).region(spec.image_size)
}

/// The real rendering of scene `index` and its fake counterpart, both
/// quantized to 8 bits.
pub fn render_pair(spec: &DomainSpec, index: usize) -> (Image, Image) {
    let scene = Scene::draw(spec, index);
    let real = scene.render(spec.image_size);
    let mut fake = apply_artifact(
        &real,
        &scene.region(spec.image_size),
        spec.artifact,
        spec.strength,
    );
    let mut real = real;
    real.quantize();
    fake.quantize();
    (real, fake)
}

/// `n_real` real samples (scenes `0..n_real`) followed by `n_fake` fakes
/// (scenes `n_real..`). Output is independent of the rayon pool size.
pub fn generate_synthetic_domain(spec: &DomainSpec) -> Vec<ImageSample> {
    (0..spec.len())
        .into_par_iter()
        .map(|i| {
            let (real, fake) = render_pair(spec, i);
            let (image, label) = if i < spec.n_real {
                (real, Label::Real)
            } else {
                (fake, Label::Fake)
            };
            ImageSample {
                image,
                label,
                domain: spec.name.clone(),
                source_id: format!("{}-{i:06}", spec.name),
                bbox: None,
            }
        })
        .collect()
}

/// SHA-256 over the concatenated 8-bit pixel bytes, hex encoded.
pub fn dataset_checksum(samples: &[ImageSample]) -> String {
    let mut h = Sha256::new();
    for s in samples {
        h.update(s.image.to_bytes());
    }
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: ArtifactKind, strength: f64) -> DomainSpec {
        DomainSpec::new("t", kind, strength, 10, 10, 3)
    }

    #[test]
    fn counts_and_labels() {
        let s = generate_synthetic_domain(&small(ArtifactKind::ColorShift, 0.2));
        assert_eq!(s.len(), 20);
        assert_eq!(s.iter().filter(|x| x.label == Label::Real).count(), 10);
        assert!(s.iter().all(|x| x.image.width() == 32 && x.domain == "t"));
    }

    #[test]
    fn zero_strength_fake_equals_real() {
        for kind in [
            ArtifactKind::ColorShift,
            ArtifactKind::BoundarySeam,
            ArtifactKind::LowpassPatch,
        ] {
            let (r, f) = render_pair(&small(kind, 0.0), 4);
            assert_eq!(r, f);
        }
    }

    #[test]
    fn artifact_is_local() {
        for kind in [
            ArtifactKind::ColorShift,
            ArtifactKind::BoundarySeam,
            ArtifactKind::LowpassPatch,
        ] {
            let spec = small(kind, 0.3);
            for i in 0..5 {
                let (r, f) = render_pair(&spec, i);
                let mask = artifact_mask(&spec, i);
                let n = mask.len();
                let mut changed = 0;
                for (k, (a, b)) in r.data().iter().zip(f.data()).enumerate() {
                    if a != b {
                        assert!(mask[k % n], "{kind:?} pixel {k} changed outside region");
                        changed += 1;
                    }
                }
                assert!(changed > 0, "{kind:?} scene {i} unchanged");
            }
        }
    }

    #[test]
    fn pixels_are_quantized_and_in_range() {
        let (r, f) = render_pair(&small(ArtifactKind::ColorShift, 0.5), 0);
        for v in r.data().iter().chain(f.data()) {
            assert!((0.0..=1.0).contains(v));
            assert_eq!((v * 255.0).round() / 255.0, *v);
        }
    }

    #[test]
    fn validation() {
        assert!(small(ArtifactKind::ColorShift, 0.2).validate("d").is_ok());
        assert!(small(ArtifactKind::ColorShift, 0.0).validate("d").is_err());
        let mut s = small(ArtifactKind::ColorShift, 0.2);
        s.n_fake = 0;
        assert!(s.validate("d").is_err());
        s = small(ArtifactKind::ColorShift, 0.2);
        s.name = "a/b".into();
        assert!(s.validate("d").is_err());
    }
}
