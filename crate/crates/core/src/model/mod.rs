//! Encoder, projection head and probe classifier.

mod encoder;
mod heads;
mod params;

pub use encoder::{images_to_tensor, BnState, Encoder, EncoderConfig};
pub use heads::{Classifier, ClassifierConfig, ProjectionConfig, ProjectionHead};
pub use params::{kaiming_uniform, Bound, ParamSet};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Image;
    use autograd::{Graph, Tensor};

    fn images(n: usize, size: usize) -> Vec<Image> {
        (0..n)
            .map(|k| {
                Image::from_fn(3, size, size, |c, y, x| {
                    ((k * 31 + c * 7 + y * 3 + x) % 17) as f32 / 16.0
                })
            })
            .collect()
    }

    fn random_tensor(shape: &[usize], seed: u64) -> Tensor<f32> {
        kaiming_uniform(shape, 3, seed, "test")
    }

    #[test]
    fn desk_encoder_shape() {
        let mut enc = Encoder::init(&EncoderConfig::desk(), 0);
        let g = Graph::new();
        let bound = enc.params.bind(&g, true);
        let x = g.constant(images_to_tensor(&images(40, 32)).unwrap());
        let f = enc.forward_train(&bound, x).unwrap();
        assert_eq!(f.shape(), vec![40, 128]);
        assert!(enc.is_calibrated());
    }

    #[test]
    fn encoder_rejects_bad_inputs() {
        let enc = Encoder::init(&EncoderConfig::desk(), 0);
        let g = Graph::new();
        let bound = enc.params.bind(&g, false);
        let wrong_size = g.constant(Tensor::zeros(&[1, 3, 16, 16]));
        assert!(enc.forward_eval(&bound, wrong_size).is_err());
        let wrong_channels = g.constant(Tensor::zeros(&[1, 1, 32, 32]));
        assert!(enc.forward_eval(&bound, wrong_channels).is_err());
    }

    #[test]
    fn zero_weights_give_beta_driven_constant_features() {
        let mut enc = Encoder::init(&EncoderConfig::desk(), 0);
        for (name, t) in enc.params.iter_mut() {
            let v = if name.ends_with(".beta") { 0.3 } else { 0.0 };
            t.data_mut().iter_mut().for_each(|x| *x = v);
        }
        let g = Graph::new();
        let bound = enc.params.bind(&g, false);
        let x = g.constant(images_to_tensor(&images(4, 32)).unwrap());
        let f = enc.forward_train(&bound, x).unwrap().value();
        assert!(
            f.data().iter().all(|&v| (v - 0.3).abs() < 1e-6),
            "{:?}",
            &f.data()[..4]
        );
    }

    #[test]
    fn identical_inputs_identical_rows_in_eval() {
        let mut enc = Encoder::init(&EncoderConfig::desk(), 1);
        let imgs = images(6, 32);
        {
            let g = Graph::new();
            let bound = enc.params.bind(&g, false);
            enc.forward_train(&bound, g.constant(images_to_tensor(&imgs).unwrap()))
                .unwrap();
        }
        let batch = vec![imgs[2].clone(), imgs[0].clone(), imgs[2].clone()];
        let f = enc.features(&batch).unwrap();
        assert_eq!(f.data()[..128], f.data()[256..]);
        assert_ne!(f.data()[..128], f.data()[128..256]);
        assert_eq!(f, enc.features(&batch).unwrap());
    }

    #[test]
    fn eval_requires_calibration() {
        let enc = Encoder::init(&EncoderConfig::desk(), 1);
        assert!(!enc.is_calibrated());
        assert!(enc.features(&images(1, 32)).is_err());
    }

    #[test]
    fn projection_paper_shapes() {
        let head = ProjectionHead::init(&ProjectionConfig::paper(), 2048, 0);
        assert_eq!(head.params.get("proj.w1").unwrap().shape(), &[2048, 2048]);
        let g = Graph::new();
        let bound = head.params.bind(&g, false);
        let f = g.constant(random_tensor(&[40, 2048], 5));
        let hidden = f.matmul(bound.get("proj.w1").unwrap()).unwrap();
        assert_eq!(hidden.shape(), vec![40, 2048]);
        let z = ProjectionHead::forward(&bound, f).unwrap();
        assert_eq!(z.shape(), vec![40, 64]);
    }

    #[test]
    fn projection_zero_and_structure() {
        let mut head = ProjectionHead::init(&ProjectionConfig::desk(), 128, 0);
        assert_eq!(head.params.len(), 4);
        let g = Graph::new();
        let bound = head.params.bind(&g, false);
        let f = g.constant(random_tensor(&[3, 128], 2));
        let before = g.len();
        ProjectionHead::forward(&bound, f).unwrap();
        // matmul, add, relu, matmul, add
        assert_eq!(g.len() - before, 5);

        head.params.zero();
        let z = head.project(&random_tensor(&[3, 128], 2)).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn projection_matches_naive_composition() {
        let mut head = ProjectionHead::init(
            &ProjectionConfig {
                hidden: 12,
                proj_dim: 5,
            },
            9,
            4,
        );
        head.params
            .get_mut("proj.b1")
            .unwrap()
            .data_mut()
            .iter_mut()
            .enumerate()
            .for_each(|(i, v)| *v = 0.05 * i as f32 - 0.3);
        head.params
            .get_mut("proj.b2")
            .unwrap()
            .data_mut()
            .iter_mut()
            .enumerate()
            .for_each(|(i, v)| *v = 0.1 * i as f32);
        let f = random_tensor(&[7, 9], 11);
        let z = head.project(&f).unwrap();
        let p = |n: &str| head.params.get(n).unwrap().data().to_vec();
        let (w1, b1, w2, b2) = (p("proj.w1"), p("proj.b1"), p("proj.w2"), p("proj.b2"));
        for r in 0..7 {
            let h: Vec<f64> = (0..12)
                .map(|j| {
                    let s: f64 = (0..9)
                        .map(|k| f.data()[r * 9 + k] as f64 * w1[k * 12 + j] as f64)
                        .sum::<f64>()
                        + b1[j] as f64;
                    s.max(0.0)
                })
                .collect();
            for o in 0..5 {
                let want: f64 =
                    (0..12).map(|j| h[j] * w2[j * 5 + o] as f64).sum::<f64>() + b2[o] as f64;
                assert!((z.data()[r * 5 + o] as f64 - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn classifier_distributions() {
        let clf = Classifier::init(&ClassifierConfig::desk(), 128, 3);
        let p = clf.predict(&random_tensor(&[10, 128], 8)).unwrap();
        assert_eq!(p.shape(), &[10, 2]);
        for row in p.data().chunks(2) {
            assert!(row.iter().all(|&v| v >= 0.0));
            assert!((row[0] + row[1] - 1.0).abs() < 1e-6);
        }
        let mut zero = clf.clone();
        zero.params.zero();
        let p = zero.predict(&random_tensor(&[3, 128], 8)).unwrap();
        assert!(p.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn classifier_paper_ladder_and_mismatch() {
        let clf = Classifier::init(&ClassifierConfig::paper(), 2048, 0);
        let shapes: Vec<Vec<usize>> = clf
            .params
            .iter()
            .filter(|(n, _)| n.ends_with(".w"))
            .map(|(_, t)| t.shape().to_vec())
            .collect();
        assert_eq!(
            shapes,
            vec![
                vec![2048, 2048],
                vec![2048, 4096],
                vec![4096, 2048],
                vec![2048, 256],
                vec![256, 2]
            ]
        );
        let small = Classifier::init(&ClassifierConfig::desk(), 128, 0);
        assert!(small.predict(&Tensor::zeros(&[2, 64])).is_err());
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let cfg = EncoderConfig::desk();
        assert_eq!(Encoder::init(&cfg, 5), Encoder::init(&cfg, 5));
        assert_ne!(Encoder::init(&cfg, 5).params, Encoder::init(&cfg, 6).params);
        let enc = Encoder::init(&cfg, 5);
        for (name, fan_in) in [
            ("stem.conv", 27usize),
            ("block0.dw", 9),
            ("block1.pw", 32),
            ("block2.pw", 64),
        ] {
            let bound = (6.0 / fan_in as f64).sqrt() as f32;
            let t = enc.params.get(name).unwrap();
            assert!(t.data().iter().all(|v| v.abs() <= bound), "{name}");
            assert!(t.data().iter().any(|v| v.abs() > 0.5 * bound), "{name}");
        }
        assert!(enc
            .params
            .get("stem.bn.gamma")
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 1.0));
        let clf = Classifier::init(&ClassifierConfig::desk(), 128, 5);
        assert!(clf
            .params
            .get("fc0.b")
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn config_validation() {
        assert!(EncoderConfig::desk().validate("encoder").is_ok());
        assert!(EncoderConfig::paper().validate("encoder").is_ok());
        let mut c = EncoderConfig::desk();
        c.feature_dim = 64;
        assert!(c.validate("encoder").is_err());
        let mut c = EncoderConfig::desk();
        c.input_size = 12;
        assert!(c.validate("encoder").is_err());
        assert!(ProjectionConfig {
            hidden: 8,
            proj_dim: 128
        }
        .validate("p", 128)
        .is_err());
        let mut k = ClassifierConfig::desk();
        k.negative_slope = 0.2;
        assert!(k.validate("c").is_err());
    }
}
