use crate::error::{Result, TensorError};
use crate::graph::Var;
use crate::ops::Op;
use crate::{Element, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryKind {
    fn name(self) -> &'static str {
        match self {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
            BinaryKind::Div => "div",
        }
    }

    #[inline]
    fn apply<T: Element>(self, a: T, b: T) -> T {
        match self {
            BinaryKind::Add => a + b,
            BinaryKind::Sub => a - b,
            BinaryKind::Mul => a * b,
            BinaryKind::Div => a / b,
        }
    }
}

/// Numpy-style broadcast of two shapes aligned at their trailing dimension.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() {
            1
        } else {
            a[i - (rank - a.len())]
        };
        let db = if i < rank - b.len() {
            1
        } else {
            b[i - (rank - b.len())]
        };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// How the flat indices of a broadcast output map onto one input.
enum IndexMap {
    Identity,
    Scalar,
    Table(Vec<usize>),
}

impl IndexMap {
    fn new(in_shape: &[usize], out_shape: &[usize]) -> Self {
        if in_shape == out_shape {
            return IndexMap::Identity;
        }
        if in_shape.iter().product::<usize>() == 1 {
            return IndexMap::Scalar;
        }
        let rank = out_shape.len();
        let offset = rank - in_shape.len();
        let mut strides = vec![0usize; rank];
        let mut s = 1;
        for i in (0..in_shape.len()).rev() {
            if in_shape[i] != 1 {
                strides[i + offset] = s;
            }
            s *= in_shape[i];
        }
        let numel: usize = out_shape.iter().product();
        let mut table = Vec::with_capacity(numel);
        let mut idx = vec![0usize; rank];
        let mut flat = 0usize;
        for _ in 0..numel {
            table.push(flat);
            for d in (0..rank).rev() {
                idx[d] += 1;
                flat += strides[d];
                if idx[d] < out_shape[d] {
                    break;
                }
                flat -= strides[d] * idx[d];
                idx[d] = 0;
            }
        }
        IndexMap::Table(table)
    }

    #[inline]
    fn get(&self, i: usize) -> usize {
        match self {
            IndexMap::Identity => i,
            IndexMap::Scalar => 0,
            IndexMap::Table(t) => t[i],
        }
    }
}

pub(crate) fn zip<T: Element>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    debug_assert_eq!(a.shape(), b.shape());
    Tensor::from_parts(
        a.shape().to_vec(),
        a.data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| f(x, y))
            .collect(),
    )
}

fn binary_forward<T: Element>(kind: BinaryKind, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let shape =
        broadcast_shape(a.shape(), b.shape()).ok_or_else(|| TensorError::ShapeMismatch {
            op: kind.name(),
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        })?;
    if kind == BinaryKind::Div {
        if let Some(index) = b.data().iter().position(|&x| x == T::zero()) {
            return Err(TensorError::Domain {
                op: "div",
                operand: 1,
                index,
                value: 0.0,
            });
        }
    }
    let ma = IndexMap::new(a.shape(), &shape);
    let mb = IndexMap::new(b.shape(), &shape);
    let numel: usize = shape.iter().product();
    let (ad, bd) = (a.data(), b.data());
    let data = (0..numel)
        .map(|i| kind.apply(ad[ma.get(i)], bd[mb.get(i)]))
        .collect();
    Ok(Tensor::from_parts(shape, data))
}

pub(crate) fn binary_backward<T: Element>(
    kind: BinaryKind,
    grad: &Tensor<T>,
    a: &Tensor<T>,
    b: &Tensor<T>,
    needs: &[bool],
) -> Vec<Option<Tensor<T>>> {
    let out_shape = grad.shape();
    let ma = IndexMap::new(a.shape(), out_shape);
    let mb = IndexMap::new(b.shape(), out_shape);
    let (ad, bd, gd) = (a.data(), b.data(), grad.data());
    let mut ga = needs[0].then(|| Tensor::zeros(a.shape()));
    let mut gb = needs[1].then(|| Tensor::zeros(b.shape()));
    for (i, &g) in gd.iter().enumerate() {
        let (ia, ib) = (ma.get(i), mb.get(i));
        let (da, db) = match kind {
            BinaryKind::Add => (g, g),
            BinaryKind::Sub => (g, -g),
            BinaryKind::Mul => (g * bd[ib], g * ad[ia]),
            BinaryKind::Div => {
                let inv = T::one() / bd[ib];
                (g * inv, -g * ad[ia] * inv * inv)
            }
        };
        if let Some(t) = ga.as_mut() {
            t.data_mut()[ia] += da;
        }
        if let Some(t) = gb.as_mut() {
            t.data_mut()[ib] += db;
        }
    }
    vec![ga, gb]
}

fn domain_check<T: Element>(
    op: &'static str,
    t: &Tensor<T>,
    valid: impl Fn(T) -> bool,
) -> Result<()> {
    match t.data().iter().position(|&x| !valid(x)) {
        Some(index) => Err(TensorError::Domain {
            op,
            operand: 0,
            index,
            value: t.data()[index].as_f64(),
        }),
        None => Ok(()),
    }
}

#[allow(clippy::should_implement_trait)]
impl<'g, T: Element> Var<'g, T> {
    fn binary(self, other: Var<'g, T>, kind: BinaryKind) -> Result<Var<'g, T>> {
        self.graph.check_same(other.graph)?;
        let out = binary_forward(kind, &self.value(), &other.value())?;
        Ok(self.graph.record(out, &[self, other], Op::Binary(kind)))
    }

    fn unary(self, op: Op<T>, f: impl Fn(T) -> T) -> Var<'g, T> {
        let out = self.value().map(f);
        self.graph.record(out, &[self], op)
    }

    /// Elementwise sum with broadcasting over trailing dimensions.
    pub fn add(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        self.binary(other, BinaryKind::Add)
    }

    pub fn sub(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        self.binary(other, BinaryKind::Sub)
    }

    pub fn mul(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        self.binary(other, BinaryKind::Mul)
    }

    /// Fails with a domain error naming operand 1 if any divisor is zero.
    pub fn div(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        self.binary(other, BinaryKind::Div)
    }

    pub fn neg(self) -> Var<'g, T> {
        self.unary(Op::Neg, |x| -x)
    }

    pub fn add_scalar(self, c: T) -> Var<'g, T> {
        self.unary(Op::AddScalar, |x| x + c)
    }

    pub fn mul_scalar(self, c: T) -> Var<'g, T> {
        self.unary(Op::MulScalar(c), |x| x * c)
    }

    pub fn exp(self) -> Var<'g, T> {
        self.unary(Op::Exp, |x| x.exp())
    }

    /// Natural log; non-positive inputs are a domain error.
    pub fn log(self) -> Result<Var<'g, T>> {
        domain_check("log", &self.value(), |x| x > T::zero())?;
        Ok(self.unary(Op::Log, |x| x.ln()))
    }

    pub fn sqrt(self) -> Result<Var<'g, T>> {
        domain_check("sqrt", &self.value(), |x| x >= T::zero())?;
        Ok(self.unary(Op::Sqrt, |x| x.sqrt()))
    }

    /// `x^p`. Negative bases need an integral exponent and zero bases a
    /// non-negative one.
    pub fn pow(self, p: T) -> Result<Var<'g, T>> {
        let integral = p == p.round();
        domain_check("pow", &self.value(), |x| {
            (x > T::zero()) || (x < T::zero() && integral) || (x == T::zero() && p >= T::zero())
        })?;
        Ok(self.unary(Op::Pow(p), |x| x.powf(p)))
    }

    /// `max(x, 0)` with subgradient 0 at the kink.
    pub fn relu(self) -> Var<'g, T> {
        self.unary(Op::Relu, |x| if x > T::zero() { x } else { T::zero() })
    }

    /// `x` for positive inputs, `slope·x` otherwise (derivative `slope` at 0).
    pub fn leaky_relu(self, slope: T) -> Var<'g, T> {
        self.unary(Op::LeakyRelu(slope), |x| {
            if x > T::zero() {
                x
            } else {
                x * slope
            }
        })
    }

    /// `max(x, c)`; the gradient flows only where `x > c`.
    pub fn clamp_min(self, c: T) -> Var<'g, T> {
        self.unary(Op::ClampMin(c), |x| if x > c { x } else { c })
    }
}
