use serde::{Deserialize, Serialize};

use super::{ImageSample, Label};
use crate::error::{Error, Result};
use crate::rng::{self, label_key};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_fraction: 0.15,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::config(
                format!("{prefix}.test_fraction"),
                format!("{} is not in (0, 1)", self.test_fraction),
            ));
        }
        Ok(())
    }
}

/// Stratified random partition: each class contributes
/// `round(n_class · test_fraction)` test items. Both index lists are
/// ascending.
pub fn split_indices(labels: &[Label], spec: &SplitSpec) -> (Vec<usize>, Vec<usize>) {
    let mut is_test = vec![false; labels.len()];
    for class in [Label::Real, Label::Fake] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let n_test = (members.len() as f64 * spec.test_fraction).round() as usize;
        rng::shuffle(
            &mut rng::stream(spec.seed, &[label_key("split"), class.index() as u64]),
            &mut members,
        );
        for &i in &members[..n_test] {
            is_test[i] = true;
        }
    }
    (0..labels.len()).partition(|&i| !is_test[i])
}

/// `(train, test)`.
pub fn split(samples: &[ImageSample], spec: &SplitSpec) -> (Vec<ImageSample>, Vec<ImageSample>) {
    let labels: Vec<Label> = samples.iter().map(|s| s.label).collect();
    let (train, test) = split_indices(&labels, spec);
    (
        train.into_iter().map(|i| samples[i].clone()).collect(),
        test.into_iter().map(|i| samples[i].clone()).collect(),
    )
}
