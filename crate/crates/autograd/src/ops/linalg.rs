use crate::error::{Result, TensorError};
use crate::graph::Var;
use crate::kernels;
use crate::ops::Op;
use crate::{Element, Tensor};

fn matrix_dims(
    op: &'static str,
    t: &Tensor<impl Element>,
    other: &[usize],
) -> Result<(usize, usize)> {
    match *t.shape() {
        [r, c] => Ok((r, c)),
        _ => Err(TensorError::ShapeMismatch {
            op,
            lhs: t.shape().to_vec(),
            rhs: other.to_vec(),
        }),
    }
}

pub(crate) fn transpose2<T: Element>(t: &Tensor<T>) -> Tensor<T> {
    let (r, c) = (t.shape()[0], t.shape()[1]);
    Tensor::from_parts(vec![c, r], kernels::transpose(r, c, t.data()))
}

pub(crate) fn matmul_backward<T: Element>(
    grad: &Tensor<T>,
    a: &Tensor<T>,
    b: &Tensor<T>,
    needs: &[bool],
) -> Vec<Option<Tensor<T>>> {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    // dA = dC·Bᵀ, dB = Aᵀ·dC
    let ga = needs[0].then(|| {
        let mut out = vec![T::zero(); m * k];
        kernels::gemm_nt(m, n, k, grad.data(), b.data(), &mut out);
        Tensor::from_parts(vec![m, k], out)
    });
    let gb = needs[1].then(|| {
        let mut out = vec![T::zero(); k * n];
        kernels::gemm_tn(k, m, n, a.data(), grad.data(), &mut out);
        Tensor::from_parts(vec![k, n], out)
    });
    vec![ga, gb]
}

impl<'g, T: Element> Var<'g, T> {
    /// `[m×k]·[k×n] → [m×n]`.
    pub fn matmul(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        self.graph.check_same(other.graph)?;
        let (a, b) = (self.value(), other.value());
        let (m, k) = matrix_dims("matmul", &a, b.shape())?;
        let (k2, n) = matrix_dims("matmul", &b, a.shape())?;
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let mut out = vec![T::zero(); m * n];
        kernels::gemm_nn(m, k, n, a.data(), b.data(), &mut out);
        Ok(self.graph.record(
            Tensor::from_parts(vec![m, n], out),
            &[self, other],
            Op::MatMul,
        ))
    }

    /// Swaps the two axes of a matrix.
    pub fn transpose(self) -> Result<Var<'g, T>> {
        let a = self.value();
        matrix_dims("transpose", &a, &[])?;
        Ok(self.graph.record(transpose2(&a), &[self], Op::Transpose))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'g, T>> {
        let out = self.value().reshape(shape)?;
        Ok(self.graph.record(out, &[self], Op::Reshape))
    }
}

#[cfg(test)]
mod tests {
    use crate::{Graph, Tensor, TensorError};

    #[test]
    fn identity_product_is_exact() {
        let g = Graph::<f64>::new();
        let a = Tensor::new(vec![2, 2], vec![1.5, -2.25, 3.0, 7.125]).unwrap();
        let i = g.constant(Tensor::eye(2));
        let av = g.constant(a.clone());
        assert_eq!(*i.matmul(av).unwrap().value(), a);
        assert_eq!(*av.matmul(i).unwrap().value(), a);
    }

    #[test]
    fn hand_product() {
        let g = Graph::<f64>::new();
        let a = g.constant(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = g.constant(Tensor::new(vec![2, 1], vec![5.0, 6.0]).unwrap());
        let c = a.matmul(b).unwrap();
        assert_eq!(c.shape(), vec![2, 1]);
        assert_eq!(c.value().data(), &[17.0, 39.0]);
    }

    #[test]
    fn large_shape_check() {
        let g = Graph::<f32>::new();
        let a = g.constant(Tensor::zeros(&[40, 2048]));
        let b = g.constant(Tensor::zeros(&[2048, 2048]));
        assert_eq!(a.matmul(b).unwrap().shape(), vec![40, 2048]);
    }

    #[test]
    fn inner_dimension_mismatch() {
        let g = Graph::<f64>::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        assert!(matches!(
            a.matmul(b),
            Err(TensorError::ShapeMismatch { op: "matmul", .. })
        ));
    }
}
