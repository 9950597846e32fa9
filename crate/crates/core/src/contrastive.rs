//! Cosine similarity and the NT-Xent contrastive objective.
//!
//! Embedding batches are `[2N, d]` matrices in which rows `2k` and `2k+1`
//! are the two views of sample `k`.

use autograd::{Element, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound on the norm product in the cosine denominator.
pub const EPSILON: f64 = 1e-8;

/// Which terms enter the softmax denominator for anchor `i`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Denominator {
    /// All `k ≠ i`.
    #[default]
    ExcludeSelf,
    /// All `k`, including the anchor's similarity with itself.
    Literal,
}

/// Index of the other view of row `i`.
#[inline]
pub fn partner(i: usize) -> usize {
    i ^ 1
}

/// `a·b / max(‖a‖‖b‖, ε)`.
pub fn cosine_sim(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "cosine_sim: length mismatch");
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb).max(EPSILON)
}

fn check_batch(shape: &[usize]) -> Result<usize> {
    match *shape {
        [rows, _] if rows >= 2 && rows % 2 == 0 => Ok(rows),
        _ => Err(Error::invalid(format!(
            "embedding batch must be [2N, d] with 2N even and ≥ 2, got {shape:?}"
        ))),
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "temperature must be positive, got {tau}"
        )))
    }
}

/// All pairwise cosine similarities of the rows of `z`, `[2N, 2N]`.
pub fn similarity_matrix<'g, T: Element>(z: Var<'g, T>) -> Result<Var<'g, T>> {
    let shape = z.shape();
    if shape.len() != 2 {
        return Err(Error::invalid(format!(
            "similarity_matrix expects a matrix, got {shape:?}"
        )));
    }
    let dots = z.matmul(z.transpose()?)?;
    let sq = z.mul(z)?.sum_axis(1, true)?;
    // ‖zᵢ‖²‖zⱼ‖² clamped at ε², so the square root is max(‖zᵢ‖‖zⱼ‖, ε)
    let denom = sq
        .matmul(sq.transpose()?)?
        .clamp_min(T::from_f64_lossy(EPSILON * EPSILON))
        .sqrt()?;
    Ok(dots.div(denom)?)
}

/// Softmax probability of `j` for anchor `i` over a similarity matrix.
pub fn pairwise_softmax<T: Element>(
    sim: &Tensor<T>,
    i: usize,
    j: usize,
    tau: f64,
    mode: Denominator,
) -> Result<f64> {
    check_tau(tau)?;
    let n = match *sim.shape() {
        [r, c] if r == c => r,
        _ => {
            return Err(Error::invalid(format!(
                "similarity matrix must be square, got {:?}",
                sim.shape()
            )))
        }
    };
    if i >= n || j >= n || i == j {
        return Err(Error::invalid(format!(
            "pairwise_softmax needs distinct indices below {n}, got ({i}, {j})"
        )));
    }
    let row = &sim.data()[i * n..(i + 1) * n];
    let term = |k: usize| ((row[k].as_f64() - 1.0) / tau).exp();
    let total: f64 = (0..n)
        .filter(|&k| k != i || mode == Denominator::Literal)
        .map(term)
        .sum();
    Ok(term(j) / total)
}

/// Mean over the `N` positive pairs of `−log σ(i,j) − log σ(j,i)`.
pub fn nt_xent_loss<'g, T: Element>(
    z: Var<'g, T>,
    tau: f64,
    mode: Denominator,
) -> Result<Var<'g, T>> {
    check_tau(tau)?;
    let rows = check_batch(&z.shape())?;
    let g = z.graph();
    let sim = similarity_matrix(z)?;
    // similarities are at most 1, so shifting by 1/τ keeps exp ≤ 1
    let logits = sim
        .add_scalar(-T::one())
        .mul_scalar(T::from_f64_lossy(1.0 / tau));
    let mut weights = logits.exp();
    if mode == Denominator::ExcludeSelf {
        let mask = Tensor::from_f64(
            vec![rows, rows],
            &(0..rows * rows)
                .map(|k| if k / rows == k % rows { 0.0 } else { 1.0 })
                .collect::<Vec<_>>(),
        )?;
        weights = weights.mul(g.constant(mask))?;
    }
    let log_prob = logits.sub(weights.sum_axis(1, true)?.log()?)?;
    let positives = Tensor::from_f64(
        vec![rows, rows],
        &(0..rows * rows)
            .map(|k| {
                if k % rows == partner(k / rows) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect::<Vec<_>>(),
    )?;
    let picked = log_prob.mul(g.constant(positives))?.sum();
    Ok(picked.mul_scalar(T::from_f64_lossy(-2.0 / rows as f64)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use autograd::Graph;

    fn loss(rows: Vec<Vec<f64>>, tau: f64, mode: Denominator) -> f64 {
        let d = rows[0].len();
        let flat: Vec<f64> = rows.concat();
        let g = Graph::<f64>::new();
        let z = g.constant(Tensor::new(vec![rows.len(), d], flat).unwrap());
        nt_xent_loss(z, tau, mode).unwrap().value().item().unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_sim(&[3.0, -4.0], &[3.0, -4.0]) - 1.0).abs() < 1e-12);
        assert!((cosine_sim(&[1e-4, 0.0], &[1e-4, 0.0]) - 1.0).abs() < 1e-12);
        assert_eq!(cosine_sim(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert_eq!(cosine_sim(&[0.0, 0.0], &[0.5, 2.0]), 0.0);
        assert!((cosine_sim(&[1.0, 1.0], &[1.0, 0.0]) - 1.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn matrix_matches_scalar_cosine() {
        let rows = [
            vec![1.0, 2.0, -1.0],
            vec![0.0, 0.0, 0.0],
            vec![-3.0, 0.5, 0.2],
            vec![1.0, 1.0, 1.0],
        ];
        let g = Graph::<f64>::new();
        let z = g.constant(Tensor::new(vec![4, 3], rows.concat()).unwrap());
        let sim = similarity_matrix(z).unwrap().value();
        for i in 0..4 {
            for j in 0..4 {
                assert!((sim.data()[i * 4 + j] - cosine_sim(&rows[i], &rows[j])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_rows_give_zero_loss() {
        assert!(
            loss(
                vec![vec![0.3, -1.0], vec![2.0, 0.1]],
                0.5,
                Denominator::ExcludeSelf
            )
            .abs()
                < 1e-12
        );
        let g = Graph::<f64>::new();
        let sim = similarity_matrix(
            g.constant(Tensor::new(vec![2, 2], vec![0.3, -1.0, 2.0, 0.1]).unwrap()),
        )
        .unwrap()
        .value();
        assert!(
            (pairwise_softmax(&sim, 0, 1, 0.5, Denominator::ExcludeSelf).unwrap() - 1.0).abs()
                < 1e-12
        );
        assert!(
            loss(
                vec![vec![0.3, -1.0], vec![2.0, 0.1]],
                0.5,
                Denominator::Literal
            ) > 0.0
        );
    }

    #[test]
    fn identical_embeddings() {
        let same = vec![vec![0.2, 0.7, -0.1]; 4];
        let l = loss(same.clone(), 0.5, Denominator::ExcludeSelf);
        assert!((l - 2.0 * 3f64.ln()).abs() < 1e-6, "{l}");
        let sim = Tensor::<f64>::ones(&[4, 4]);
        for j in 1..4 {
            assert!(
                (pairwise_softmax(&sim, 0, j, 0.5, Denominator::ExcludeSelf).unwrap() - 1.0 / 3.0)
                    .abs()
                    < 1e-12
            );
        }
        let literal = loss(same, 0.5, Denominator::Literal);
        assert!((literal - 2.0 * 4f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn invalid_batches() {
        let g = Graph::<f64>::new();
        let odd = g.constant(Tensor::ones(&[3, 2]));
        assert!(nt_xent_loss(odd, 0.5, Denominator::ExcludeSelf).is_err());
        let ok = g.constant(Tensor::ones(&[2, 2]));
        assert!(nt_xent_loss(ok, 0.0, Denominator::ExcludeSelf).is_err());
        assert!(nt_xent_loss(ok, -1.0, Denominator::ExcludeSelf).is_err());
        let sim = Tensor::<f64>::ones(&[4, 4]);
        assert!(pairwise_softmax(&sim, 1, 1, 0.5, Denominator::ExcludeSelf).is_err());
    }

    #[test]
    fn small_temperature_stays_finite_in_f32() {
        let g = Graph::<f32>::new();
        let z = g
            .param(Tensor::new(vec![4, 2], vec![1.0, 0.0, 0.9, 0.1, 0.0, 1.0, -0.2, 1.0]).unwrap());
        let l = nt_xent_loss(z, 0.01, Denominator::ExcludeSelf).unwrap();
        assert!(l.value().item().unwrap().is_finite());
        let grads = g.backward(l).unwrap();
        assert!(grads.get(z).unwrap().data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn denominator_serde_names() {
        assert_eq!(
            serde_json::to_string(&Denominator::ExcludeSelf).unwrap(),
            "\"exclude_self\""
        );
        assert_eq!(
            serde_json::from_str::<Denominator>("\"literal\"").unwrap(),
            Denominator::Literal
        );
    }
}
