//! Labelled face images: preprocessing, synthetic generation, splitting and
//! on-disk I/O.

mod face;
mod io;
mod split;
mod synthetic;

use serde::{Deserialize, Serialize};

use crate::image::Image;

pub use face::{face_crop_rect, preprocess_face_crop, BBox};
pub use io::{load_dataset, read_ppm, save_dataset, write_ppm, MANIFEST_FILE};
pub use split::{split, split_indices, SplitSpec};
pub use synthetic::{
    artifact_mask, dataset_checksum, generate_synthetic_domain, render_pair, ArtifactKind,
    BackgroundSpec, DomainSpec, FaceSpec,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    /// Class index used by the classifier; fake is the positive class.
    pub fn index(self) -> usize {
        match self {
            Label::Real => 0,
            Label::Fake => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Real => "real",
            Label::Fake => "fake",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageSample {
    pub image: Image,
    pub label: Label,
    pub domain: String,
    pub source_id: String,
    pub bbox: Option<BBox>,
}

/// Drops labels and metadata. The pretraining path only ever sees the
/// output of this function.
pub fn unlabeled(samples: &[ImageSample]) -> Vec<Image> {
    samples.iter().map(|s| s.image.clone()).collect()
}

pub fn labels(samples: &[ImageSample]) -> Vec<Label> {
    samples.iter().map(|s| s.label).collect()
}

/// Brings every sample to a square `size × size` model input: face-centered
/// crop when a bounding box is present, plain resize otherwise.
pub fn prepare_inputs(samples: &[ImageSample], size: usize) -> crate::Result<Vec<ImageSample>> {
    samples
        .iter()
        .map(|s| {
            let image = match s.bbox {
                Some(bbox) => preprocess_face_crop(&s.image, bbox, size)?,
                None => s.image.resize(size, size),
            };
            Ok(ImageSample {
                image,
                bbox: None,
                ..s.clone()
            })
        })
        .collect()
}
