use proptest::prelude::*;
use ucl::augmentation::{
    apply_jitter, color_jitter, make_view, make_view_pair, random_grayscale,
    random_horizontal_flip, AugmentationPolicy, JitterParams, JitterSettings,
};
use ucl::image::Image;
use ucl::rng::SeededRng;

fn image_strategy() -> impl Strategy<Value = Image> {
    (4usize..=20, 4usize..=20).prop_flat_map(|(h, w)| {
        prop::collection::vec(0.0f32..=1.0, 3 * h * w)
            .prop_map(move |data| Image::new(3, h, w, data).unwrap())
    })
}

fn policy_strategy() -> impl Strategy<Value = AugmentationPolicy> {
    (any::<[bool; 4]>(), 4usize..=24, 0.1f64..=1.0).prop_map(|(on, size, area_min)| {
        let mut p = AugmentationPolicy::default().with_output_size(size);
        p.crop.enabled = on[0];
        p.crop.area_min = area_min;
        p.flip.enabled = on[1];
        p.jitter.enabled = on[2];
        p.grayscale.enabled = on[3];
        p
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pair_is_pure(image in image_strategy(), policy in policy_strategy(), seed in any::<u64>(), idx in any::<u64>()) {
        let a = make_view_pair(&image, &policy, seed, idx).unwrap();
        let b = make_view_pair(&image, &policy, seed, idx).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn views_stay_in_unit_range(image in image_strategy(), policy in policy_strategy(), seed in any::<u64>()) {
        let (a, b) = make_view_pair(&image, &policy, seed, 3).unwrap();
        for v in [&a, &b] {
            prop_assert_eq!((v.height(), v.width()), (policy.crop.output_size, policy.crop.output_size));
            prop_assert!(v.data().iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }

    #[test]
    fn disabled_transforms_are_identities(image in image_strategy(), seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed).view_stream(0, 0).transform("t");
        prop_assert_eq!(random_horizontal_flip(&image, &mut rng, 0.0), image.clone());
        prop_assert_eq!(random_grayscale(&image, &mut rng, 0.0), image.clone());
        let off = JitterSettings { probability: 0.0, ..JitterSettings::default() };
        prop_assert_eq!(color_jitter(&image, &mut rng, &off), image.clone());
        prop_assert_eq!(apply_jitter(&image, &JitterParams::identity()), image.clone());

        // with everything off and no resize the view is the input
        let mut policy = AugmentationPolicy::default().with_output_size(image.width());
        policy.crop.enabled = false;
        policy.flip.enabled = false;
        policy.jitter.enabled = false;
        policy.grayscale.enabled = false;
        if image.width() == image.height() {
            prop_assert_eq!(make_view(&image, &policy, seed, 0, 0).unwrap(), image.clone());
        }
    }

    #[test]
    fn disabling_one_transform_removes_only_that_transform(image in image_strategy(), seed in any::<u64>()) {
        // each transform draws from its own stream, so turning one off
        // leaves the draws of the others untouched
        let square = image.resize(12, 12);
        let full = AugmentationPolicy::default().with_output_size(12);
        let mut no_flip = full.clone();
        no_flip.flip.enabled = false;
        let mut crop_only = no_flip.clone();
        crop_only.jitter.enabled = false;
        crop_only.grayscale.enabled = false;
        let mut crop_flip = full.clone();
        crop_flip.jitter.enabled = false;
        crop_flip.grayscale.enabled = false;

        let c = make_view(&square, &crop_only, seed, 5, 1).unwrap();
        let cf = make_view(&square, &crop_flip, seed, 5, 1).unwrap();
        prop_assert!(cf == c || cf == c.flip_horizontal());
    }
}

#[test]
fn ablation_rows_map_to_policies() {
    let rows: Vec<Vec<&str>> = (1..=3)
        .map(|r| AugmentationPolicy::ablation_row(r).unwrap().enabled())
        .collect();
    assert_eq!(rows[0], ["crop"]);
    assert_eq!(rows[1], ["crop", "flip"]);
    assert_eq!(rows[2], ["crop", "flip", "jitter", "grayscale"]);
    assert!(AugmentationPolicy::ablation_row(0).is_err());
    assert!(AugmentationPolicy::ablation_row(4).is_err());
}

#[test]
fn full_area_crop_gives_near_identical_views() {
    let image = Image::from_fn(3, 16, 16, |c, y, x| {
        ((c * 7 + y * 3 + x) % 16) as f32 / 15.0
    });
    let mut policy = AugmentationPolicy::ablation_row(1)
        .unwrap()
        .with_output_size(16);
    policy.crop.area_min = 1.0;
    policy.crop.area_max = 1.0;
    let (a, b) = make_view_pair(&image, &policy, 3, 0).unwrap();
    let max = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f32::max);
    assert!(max < 1e-6, "{max}");
}
