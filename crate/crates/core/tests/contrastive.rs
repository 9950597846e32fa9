use autograd::{Graph, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ucl::contrastive::{nt_xent_loss, pairwise_softmax, similarity_matrix, Denominator};

/// Direct evaluation of the loss: every cosine, every exponential, every
/// cross-entropy term written out, with no shared code.
fn brute_force(rows: &[Vec<f64>], tau: f64, include_self: bool) -> f64 {
    let n2 = rows.len();
    let cos = |a: &[f64], b: &[f64]| {
        let mut dot = 0.0;
        let mut na = 0.0;
        let mut nb = 0.0;
        for k in 0..a.len() {
            dot += a[k] * b[k];
            na += a[k] * a[k];
            nb += b[k] * b[k];
        }
        dot / (na.sqrt() * nb.sqrt()).max(1e-8)
    };
    let sigma = |i: usize, j: usize| {
        let num = (cos(&rows[i], &rows[j]) / tau).exp();
        let mut den = 0.0;
        for k in 0..n2 {
            if k != i || include_self {
                den += (cos(&rows[i], &rows[k]) / tau).exp();
            }
        }
        num / den
    };
    let mut total = 0.0;
    for k in 0..n2 / 2 {
        let (a, b) = (2 * k, 2 * k + 1);
        total += -sigma(a, b).ln() - sigma(b, a).ln();
    }
    total / (n2 / 2) as f64
}

fn loss_f64(rows: &[Vec<f64>], tau: f64, mode: Denominator) -> f64 {
    let g = Graph::<f64>::new();
    let z = g.constant(Tensor::new(vec![rows.len(), rows[0].len()], rows.concat()).unwrap());
    nt_xent_loss(z, tau, mode).unwrap().value().item().unwrap()
}

fn random_rows(rng: &mut ChaCha8Rng, n2: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n2)
        .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect()
}

#[test]
fn matches_brute_force_on_100_batches() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for batch in 0..100 {
        let n = rng.random_range(1..=8);
        let d = rng.random_range(2..=6);
        let tau = [0.1, 0.5, 1.0][batch % 3];
        let rows = random_rows(&mut rng, 2 * n, d);
        for (mode, include_self) in [
            (Denominator::ExcludeSelf, false),
            (Denominator::Literal, true),
        ] {
            let got = loss_f64(&rows, tau, mode);
            let want = brute_force(&rows, tau, include_self);
            assert!(
                (got - want).abs() < 1e-10,
                "batch {batch} {mode:?}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn matches_brute_force_in_f32() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let rows = random_rows(&mut rng, 8, 5);
    let g = Graph::<f32>::new();
    let flat: Vec<f32> = rows.concat().iter().map(|&v| v as f32).collect();
    let z = g.constant(Tensor::new(vec![8, 5], flat).unwrap());
    let got = nt_xent_loss(z, 0.5, Denominator::ExcludeSelf)
        .unwrap()
        .value()
        .item()
        .unwrap() as f64;
    // the oracle sees the same f32-rounded inputs
    let rounded: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().map(|&v| v as f32 as f64).collect())
        .collect();
    let want = brute_force(&rounded, 0.5, false);
    assert!((got - want).abs() < 1e-6, "{got} vs {want}");
}

#[test]
fn analytic_values() {
    let two = vec![vec![0.4, -1.0, 0.2], vec![-0.3, 0.8, 1.1]];
    assert!(loss_f64(&two, 0.5, Denominator::ExcludeSelf).abs() < 1e-6);
    let same = vec![vec![1.0, 2.0, 3.0]; 4];
    assert!((loss_f64(&same, 0.5, Denominator::ExcludeSelf) - 2.0 * 3f64.ln()).abs() < 1e-6);
}

fn batch_strategy() -> impl Strategy<Value = (Vec<Vec<f64>>, f64)> {
    (1usize..=6, 2usize..=6).prop_flat_map(|(n, d)| {
        (
            prop::collection::vec(prop::collection::vec(-3.0f64..3.0, d), 2 * n),
            prop::sample::select(vec![0.1, 0.5, 1.0]),
        )
    })
}

fn well_conditioned(rows: &[Vec<f64>]) -> bool {
    rows.iter()
        .all(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt() > 1e-3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn loss_is_non_negative((rows, tau) in batch_strategy()) {
        for mode in [Denominator::ExcludeSelf, Denominator::Literal] {
            prop_assert!(loss_f64(&rows, tau, mode) >= -1e-12);
        }
    }

    #[test]
    fn loss_is_mean_negative_log_positive_softmax((rows, tau) in batch_strategy()) {
        // so the loss is zero exactly when every positive softmax is one
        let g = Graph::<f64>::new();
        let z = g.constant(Tensor::new(vec![rows.len(), rows[0].len()], rows.concat()).unwrap());
        let sim = similarity_matrix(z).unwrap().value();
        let n = rows.len() / 2;
        let mut total = 0.0;
        for i in 0..rows.len() {
            total -= pairwise_softmax(&sim, i, i ^ 1, tau, Denominator::ExcludeSelf).unwrap().ln();
        }
        let loss = loss_f64(&rows, tau, Denominator::ExcludeSelf);
        prop_assert!((loss - total / n as f64).abs() < 1e-9);
    }

    #[test]
    fn pair_permutation_leaves_loss_unchanged((rows, tau) in batch_strategy(), seed in any::<u64>()) {
        let n = rows.len() / 2;
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let permuted: Vec<Vec<f64>> = order.iter().flat_map(|&k| [rows[2 * k].clone(), rows[2 * k + 1].clone()]).collect();
        let a = loss_f64(&rows, tau, Denominator::ExcludeSelf);
        let b = loss_f64(&permuted, tau, Denominator::ExcludeSelf);
        prop_assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn positive_rescaling_leaves_loss_unchanged((rows, tau) in batch_strategy(), alpha in 0.05f64..20.0) {
        prop_assume!(well_conditioned(&rows));
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v * alpha).collect()).collect();
        let a = loss_f64(&rows, tau, Denominator::ExcludeSelf);
        let b = loss_f64(&scaled, tau, Denominator::ExcludeSelf);
        prop_assert!((a - b).abs() < 1e-5);
    }

    #[test]
    fn softmax_rows_sum_to_one((rows, tau) in batch_strategy()) {
        let g = Graph::<f64>::new();
        let z = g.constant(Tensor::new(vec![rows.len(), rows[0].len()], rows.concat()).unwrap());
        let sim = similarity_matrix(z).unwrap().value();
        for i in 0..rows.len() {
            let s: f64 = (0..rows.len())
                .filter(|&j| j != i)
                .map(|j| pairwise_softmax(&sim, i, j, tau, Denominator::ExcludeSelf).unwrap())
                .sum();
            prop_assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn colder_temperature_lowers_loss_when_positives_dominate(
        centers in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 6), 2..=5),
        noise in prop::collection::vec(-0.05f64..0.05, 60),
    ) {
        let mut rows = Vec::new();
        for (k, c) in centers.iter().enumerate() {
            for v in 0..2 {
                rows.push(c.iter().enumerate().map(|(j, x)| x + noise[(k * 12 + v * 6 + j) % 60]).collect::<Vec<f64>>());
            }
        }
        prop_assume!(well_conditioned(&rows));
        let g = Graph::<f64>::new();
        let z = g.constant(Tensor::new(vec![rows.len(), 6], rows.concat()).unwrap());
        let sim = similarity_matrix(z).unwrap().value();
        let m = rows.len();
        let dominates = (0..m).all(|i| {
            let pos = sim.data()[i * m + (i ^ 1)];
            (0..m).filter(|&k| k != i && k != (i ^ 1)).all(|k| sim.data()[i * m + k] < pos)
        });
        prop_assume!(dominates);
        let l: Vec<f64> = [1.0, 0.5, 0.1].iter().map(|&t| loss_f64(&rows, t, Denominator::ExcludeSelf)).collect();
        prop_assert!(l[0] > l[1] && l[1] > l[2], "{l:?}");
    }
}
