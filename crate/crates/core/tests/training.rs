use autograd::{Graph, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ucl::augmentation::AugmentationPolicy;
use ucl::contrastive::Denominator;
use ucl::dataset::{generate_synthetic_domain, ArtifactKind, DomainSpec, Label};
use ucl::model::{Classifier, ClassifierConfig, EncoderConfig, ParamSet, ProjectionConfig};
use ucl::rng::{derive_seed, label_key};
use ucl::training::{pretrain, step_lr, train_probe, PretrainSpec, Sgd, SgdConfig};

fn tiny_spec(seed: u64) -> PretrainSpec {
    PretrainSpec {
        policy: AugmentationPolicy::default().with_output_size(16),
        encoder: EncoderConfig {
            input_size: 16,
            stem_channels: 4,
            widths: vec![8, 16],
            feature_dim: 16,
            ..EncoderConfig::desk()
        },
        projection: ProjectionConfig {
            hidden: 16,
            proj_dim: 8,
        },
        sgd: SgdConfig {
            lr: 0.05,
            step_size: 2,
            descending_rate: 0.5,
            batch_size: 6,
            epochs: 3,
            momentum: 0.9,
            weight_decay: 0.0,
        },
        tau: 0.5,
        denominator: Denominator::ExcludeSelf,
        seed,
    }
}

fn tiny_images() -> Vec<ucl::image::Image> {
    let mut spec = DomainSpec::new("t", ArtifactKind::ColorShift, 0.2, 9, 9, 3);
    spec.image_size = 16;
    generate_synthetic_domain(&spec)
        .into_iter()
        .map(|s| s.image)
        .collect()
}

#[test]
fn pretraining_is_thread_count_independent() {
    let images = tiny_images();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| pretrain(&images, &tiny_spec(4), |_| {}).unwrap())
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.encoder, b.encoder);
    assert_eq!(a.head, b.head);
    assert_eq!(a.report.without_timing(), b.report.without_timing());
}

#[test]
fn pretraining_ignores_labels() {
    // the pipeline entry point takes labelled samples; flipping every label
    // must not change a single bit of the result
    let mut config = ucl::config::RunConfig::desk();
    config.encoder = tiny_spec(0).encoder;
    config.augmentation = tiny_spec(0).policy;
    config.pretrain.projection = tiny_spec(0).projection;
    config.pretrain.sgd = tiny_spec(0).sgd;
    let mut spec = DomainSpec::new("t", ArtifactKind::ColorShift, 0.2, 6, 6, 3);
    spec.image_size = 16;
    let samples = generate_synthetic_domain(&spec);
    let mut flipped = samples.clone();
    for s in &mut flipped {
        s.label = if s.label == Label::Real {
            Label::Fake
        } else {
            Label::Real
        };
    }
    let (ea, ha, ra) = ucl::commands::run_pretrain(&config, &samples).unwrap();
    let (eb, hb, rb) = ucl::commands::run_pretrain(&config, &flipped).unwrap();
    assert_eq!((ea, ha), (eb, hb));
    assert_eq!(ra.without_timing(), rb.without_timing());
}

#[test]
fn schedule_matches_reference_values() {
    assert_eq!(step_lr(5e-4, 6, 0.5, 5), 5e-4);
    assert_eq!(step_lr(5e-4, 6, 0.5, 6), 2.5e-4);
    assert_eq!(step_lr(5e-4, 6, 0.5, 12), 1.25e-4);
    assert_eq!(step_lr(0.3, 400, 0.8, 399), 0.3);
    assert!((step_lr(0.3, 400, 0.8, 400) - 0.06).abs() < 1e-15);
}

proptest! {
    #[test]
    fn plain_sgd_step_is_minus_lr_times_gradient(
        w in prop::collection::vec(-3.0f32..3.0, 1..20),
        coef in -2.0f32..2.0,
        lr in 0.0f64..1.0,
    ) {
        // loss = coef·Σ w² so g = 2·coef·w
        let mut params = ParamSet::new();
        params.insert("w", Tensor::new(vec![w.len()], w.clone()).unwrap());
        let g = Graph::new();
        let bound = params.bind(&g, true);
        let wv = bound.get("w").unwrap();
        let loss = wv.mul(wv).unwrap().sum().mul_scalar(coef);
        let grads = g.backward(loss).unwrap();
        let grad = grads.get(bound.get("w").unwrap()).unwrap().data().to_vec();
        Sgd::new(0.0, 0.0).step(&mut params, &bound, &grads, lr).unwrap();
        for ((after, before), gi) in params.get("w").unwrap().data().iter().zip(&w).zip(&grad) {
            prop_assert_eq!(*after, before - lr as f32 * gi);
            prop_assert_eq!(*gi, 2.0 * coef * before);
        }
    }
}

fn blobs(n: usize, d: usize, seed: u64) -> (Tensor<f32>, Vec<Label>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let fake = i % 2 == 1;
        let center = if fake { 1.5 } else { -1.5 };
        for _ in 0..d {
            // sum of uniforms: roughly Gaussian with unit variance
            let noise: f32 = (0..12).map(|_| rng.random::<f32>()).sum::<f32>() - 6.0;
            data.push(center + 0.5 * noise);
        }
        labels.push(if fake { Label::Fake } else { Label::Real });
    }
    (Tensor::new(vec![n, d], data).unwrap(), labels)
}

fn probe_sgd(lr: f64, epochs: usize) -> SgdConfig {
    SgdConfig {
        lr,
        step_size: 400,
        descending_rate: 0.8,
        batch_size: 256,
        epochs,
        momentum: 0.0,
        weight_decay: 0.0,
    }
}

#[test]
fn probe_separates_blobs() {
    // one batch holds the whole set, as with the large paper-scale probe batch
    let (x, y) = blobs(400, 8, 0);
    let sgd = SgdConfig {
        batch_size: 400,
        ..probe_sgd(0.03, 200)
    };
    let probe = train_probe(&x, &y, &ClassifierConfig::desk(), &sgd, 0, |_| {}).unwrap();
    let losses = probe.report.losses();
    let non_increasing = losses.windows(2).filter(|w| w[1] <= w[0]).count();
    assert!(
        non_increasing as f64 >= 0.8 * (losses.len() - 1) as f64,
        "{non_increasing} of {} transitions non-increasing",
        losses.len() - 1
    );
    let acc = probe.report.train_accuracy.unwrap();
    assert!(acc >= 0.99, "train accuracy {acc}");
}

#[test]
fn zero_learning_rate_leaves_classifier_at_init() {
    let (x, y) = blobs(40, 4, 1);
    let probe = train_probe(
        &x,
        &y,
        &ClassifierConfig::desk(),
        &probe_sgd(0.0, 3),
        9,
        |_| {},
    )
    .unwrap();
    let init = Classifier::init(
        &ClassifierConfig::desk(),
        4,
        derive_seed(9, &[label_key("classifier")]),
    );
    assert_eq!(probe.classifier, init);
}

#[test]
fn probe_needs_both_classes() {
    let (x, _) = blobs(10, 4, 2);
    let y = vec![Label::Real; 10];
    let err = train_probe(
        &x,
        &y,
        &ClassifierConfig::desk(),
        &probe_sgd(0.03, 1),
        0,
        |_| {},
    )
    .unwrap_err();
    assert!(err.to_string().contains("fake"), "{err}");
}
