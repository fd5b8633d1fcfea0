//! Dense row-major tensors in double precision.
//!
//! Every field and parameter in the crate is carried by [`Tensor`]. Complex
//! data uses a trailing axis of extent 2 holding (real, imaginary) pairs; see
//! [`ComplexView`]. Tensors are immutable after construction and all
//! operations are pure functions, so values can be shared freely across
//! threads.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
    Max,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::ShapeMismatch {
                left: shape.to_vec(),
                right: vec![data.len()],
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Tensor {
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..len {
            data.push(f(&idx));
            for ax in (0..shape.len()).rev() {
                idx[ax] += 1;
                if idx[ax] < shape[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn scalar(value: f64) -> Tensor {
        Tensor {
            shape: vec![],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Row-major linear index of a multi-index.
    pub fn linear_index(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        let mut lin = 0usize;
        for (ax, &i) in index.iter().enumerate() {
            debug_assert!(i < self.shape[ax]);
            lin = lin * self.shape[ax] + i;
        }
        lin
    }

    /// Multi-index of a row-major linear index.
    pub fn multi_index(&self, mut lin: usize) -> Vec<usize> {
        let mut idx = vec![0usize; self.shape.len()];
        for ax in (0..self.shape.len()).rev() {
            idx[ax] = lin % self.shape[ax];
            lin /= self.shape[ax];
        }
        idx
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.linear_index(index)]
    }

    /// All values finite (no NaN or infinity).
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn check_same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(())
    }

    pub fn elementwise(op: BinOp, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        a.check_same_shape(b)?;
        let data = a
            .data
            .iter()
            .zip(&b.data)
            .map(|(&x, &y)| match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
            })
            .collect();
        Ok(Tensor {
            shape: a.shape.clone(),
            data,
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        Tensor::elementwise(BinOp::Add, self, other)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        Tensor::elementwise(BinOp::Sub, self, other)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        Tensor::elementwise(BinOp::Mul, self, other)
    }

    /// Scalar broadcast of multiplication.
    pub fn scale(&self, factor: f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| x * factor).collect(),
        }
    }

    /// Reduce over the given axes (ascending element order, so the result is
    /// deterministic bit for bit). An empty axis list reduces over everything.
    pub fn reduce(&self, op: ReduceOp, axes: &[usize]) -> Result<Tensor> {
        for &ax in axes {
            if ax >= self.shape.len() {
                return Err(Error::InvalidArgument(format!(
                    "axis {ax} out of range for rank {}",
                    self.shape.len()
                )));
            }
        }
        let reduce_all = axes.is_empty();
        let reduced: Vec<bool> = (0..self.shape.len())
            .map(|ax| reduce_all || axes.contains(&ax))
            .collect();
        let out_shape: Vec<usize> = self
            .shape
            .iter()
            .zip(&reduced)
            .filter(|(_, r)| !**r)
            .map(|(&e, _)| e)
            .collect();
        let count: usize = self
            .shape
            .iter()
            .zip(&reduced)
            .filter(|(_, r)| **r)
            .map(|(&e, _)| e)
            .product();
        if count == 0 && op == ReduceOp::Max {
            return Err(Error::EmptyReduce);
        }

        let out_len: usize = out_shape.iter().product();
        let init = match op {
            ReduceOp::Sum | ReduceOp::Mean => 0.0,
            ReduceOp::Max => f64::NEG_INFINITY,
        };
        let mut out = vec![init; out_len.max(1)];

        let mut idx = vec![0usize; self.shape.len()];
        for &v in &self.data {
            let mut out_lin = 0usize;
            for (ax, &i) in idx.iter().enumerate() {
                if !reduced[ax] {
                    out_lin = out_lin * self.shape[ax] + i;
                }
            }
            match op {
                ReduceOp::Sum | ReduceOp::Mean => out[out_lin] += v,
                ReduceOp::Max => {
                    if v > out[out_lin] {
                        out[out_lin] = v
                    }
                }
            }
            for ax in (0..self.shape.len()).rev() {
                idx[ax] += 1;
                if idx[ax] < self.shape[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        if op == ReduceOp::Mean {
            let n = count.max(1) as f64;
            for v in &mut out {
                *v /= n;
            }
        }
        Ok(Tensor {
            shape: out_shape,
            data: out,
        })
    }

    /// Pointwise linear map over a channel-major field: for every grid point
    /// `p`, `out[c_out, p] = sum_cin weights[c_out, c_in] * field[c_in, p] +
    /// bias[c_out]`. `field` has shape `[c_in, d1, ..., dk]`.
    pub fn matmul_pointwise(weights: &Tensor, bias: &Tensor, field: &Tensor) -> Result<Tensor> {
        if weights.rank() != 2 || field.rank() < 1 {
            return Err(Error::InvalidArgument(
                "matmul_pointwise needs rank-2 weights and rank>=1 field".into(),
            ));
        }
        let c_out = weights.shape[0];
        let c_in = weights.shape[1];
        if bias.shape() != [c_out] {
            return Err(Error::ShapeMismatch {
                left: vec![c_out],
                right: bias.shape.clone(),
            });
        }
        if field.shape[0] != c_in {
            return Err(Error::ShapeMismatch {
                left: weights.shape.clone(),
                right: field.shape.clone(),
            });
        }
        let pixels: usize = field.shape[1..].iter().product();
        let mut out_shape = field.shape.clone();
        out_shape[0] = c_out;
        let mut out = vec![0.0; c_out * pixels];
        pointwise_linear(
            &weights.data,
            &bias.data,
            &field.data,
            c_out,
            c_in,
            pixels,
            &mut out,
        );
        Ok(Tensor {
            shape: out_shape,
            data: out,
        })
    }
}

/// Shared kernel for the pointwise linear map: `out[o*p] = b[o] + sum_i
/// w[o,i] v[i*p]`. The inner loop runs over grid points so it vectorizes;
/// accumulation order over `i` is fixed ascending.
pub(crate) fn pointwise_linear(
    weights: &[f64],
    bias: &[f64],
    field: &[f64],
    c_out: usize,
    c_in: usize,
    pixels: usize,
    out: &mut [f64],
) {
    for o in 0..c_out {
        let row = &mut out[o * pixels..(o + 1) * pixels];
        let b = bias[o];
        for v in row.iter_mut() {
            *v = b;
        }
        for i in 0..c_in {
            let w = weights[o * c_in + i];
            let src = &field[i * pixels..(i + 1) * pixels];
            for (dst, &s) in row.iter_mut().zip(src) {
                *dst = s.mul_add(w, *dst);
            }
        }
    }
}

/// A tensor whose trailing axis has extent 2, interpreted as interleaved
/// (real, imaginary) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexView(Tensor);

impl ComplexView {
    pub fn new(tensor: Tensor) -> Result<ComplexView> {
        match tensor.shape().last() {
            Some(2) => Ok(ComplexView(tensor)),
            _ => Err(Error::InvalidArgument(format!(
                "complex view needs a trailing axis of 2, got shape {:?}",
                tensor.shape()
            ))),
        }
    }

    pub fn zeros(logical_shape: &[usize]) -> ComplexView {
        let mut shape = logical_shape.to_vec();
        shape.push(2);
        ComplexView(Tensor::zeros(&shape))
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    /// Shape without the trailing re/im axis.
    pub fn logical_shape(&self) -> &[usize] {
        let s = self.0.shape();
        &s[..s.len() - 1]
    }

    pub fn num_elements(&self) -> usize {
        self.0.len() / 2
    }

    pub fn re(&self, lin: usize) -> f64 {
        self.0.data[2 * lin]
    }

    pub fn im(&self, lin: usize) -> f64 {
        self.0.data[2 * lin + 1]
    }

    pub fn data(&self) -> &[f64] {
        self.0.data()
    }

    pub fn from_pairs(logical_shape: &[usize], pairs: Vec<f64>) -> Result<ComplexView> {
        let mut shape = logical_shape.to_vec();
        shape.push(2);
        ComplexView::new(Tensor::from_vec(&shape, pairs)?)
    }

    /// Root-mean-square modulus over all elements.
    pub fn rms(&self) -> f64 {
        let n = self.num_elements().max(1) as f64;
        (self.0.data.iter().map(|v| v * v).sum::<f64>() / n).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elementwise_componentwise() {
        let a = Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::from_vec(&[2], vec![3.0, 4.0]).unwrap();
        assert_eq!(a.add(&b).unwrap().data(), &[4.0, 6.0]);
        let c = Tensor::from_vec(&[2], vec![2.0, 3.0]).unwrap();
        let d = Tensor::from_vec(&[2], vec![4.0, 5.0]).unwrap();
        assert_eq!(c.mul(&d).unwrap().data(), &[8.0, 15.0]);
        assert_eq!(a.scale(0.0).data(), &[0.0, 0.0]);
    }

    #[test]
    fn elementwise_shape_mismatch_names_both_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[3, 2]);
        let err = a.add(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[3, 2]"), "{msg}");
    }

    #[test]
    fn reduce_basics() {
        let t = Tensor::from_vec(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(t.reduce(ReduceOp::Sum, &[]).unwrap().data(), &[6.0]);
        let m = Tensor::from_vec(&[2], vec![2.0, 4.0]).unwrap();
        assert_eq!(m.reduce(ReduceOp::Mean, &[]).unwrap().data(), &[3.0]);
        let x = Tensor::from_vec(&[2], vec![-1.0, -5.0]).unwrap();
        assert_eq!(x.reduce(ReduceOp::Max, &[]).unwrap().data(), &[-1.0]);
    }

    #[test]
    fn reduce_axes() {
        // [[1,2],[3,4]] summed over axis 0 -> [4,6]; over axis 1 -> [3,7]
        let t = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.reduce(ReduceOp::Sum, &[0]).unwrap().data(), &[4.0, 6.0]);
        assert_eq!(t.reduce(ReduceOp::Sum, &[1]).unwrap().data(), &[3.0, 7.0]);
    }

    #[test]
    fn reduce_max_empty_errors() {
        let t = Tensor::zeros(&[0]);
        assert!(matches!(
            t.reduce(ReduceOp::Max, &[0]),
            Err(Error::EmptyReduce)
        ));
    }

    #[test]
    fn matmul_pointwise_identity_and_bias() {
        let field = Tensor::from_vec(&[2, 2, 2], (0..8).map(|v| v as f64).collect()).unwrap();
        let eye = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let zero_b = Tensor::zeros(&[2]);
        let out = Tensor::matmul_pointwise(&eye, &zero_b, &field).unwrap();
        assert_eq!(out, field);

        let zero_w = Tensor::zeros(&[2, 2]);
        let b = Tensor::from_vec(&[2], vec![7.0, -1.0]).unwrap();
        let out = Tensor::matmul_pointwise(&zero_w, &b, &field).unwrap();
        assert_eq!(out.data()[..4], [7.0; 4]);
        assert_eq!(out.data()[4..], [-1.0; 4]);
    }

    #[test]
    fn matmul_pointwise_hand_sum() {
        // weights [[1,1],[0,1]] on a constant 2-channel field (3,5) -> (8,5)
        let w = Tensor::from_vec(&[2, 2], vec![1.0, 1.0, 0.0, 1.0]).unwrap();
        let b = Tensor::zeros(&[2]);
        let field =
            Tensor::from_vec(&[2, 2, 2], vec![3.0, 3.0, 3.0, 3.0, 5.0, 5.0, 5.0, 5.0]).unwrap();
        let out = Tensor::matmul_pointwise(&w, &b, &field).unwrap();
        assert_eq!(out.data()[..4], [8.0; 4]);
        assert_eq!(out.data()[4..], [5.0; 4]);
    }

    #[test]
    fn matmul_pointwise_dimension_mismatch() {
        let w = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2]);
        let field = Tensor::zeros(&[2, 4]);
        assert!(Tensor::matmul_pointwise(&w, &b, &field).is_err());
    }

    #[test]
    fn linear_index_roundtrip_small_shapes() {
        // exhaustive over all shapes up to rank 4 with extents 1..=3
        let extents = [1usize, 2, 3];
        let mut shapes: Vec<Vec<usize>> = vec![vec![]];
        for _ in 0..4 {
            let mut next = shapes.clone();
            for s in &shapes {
                for &e in &extents {
                    let mut s2 = s.clone();
                    s2.push(e);
                    next.push(s2);
                }
            }
            shapes = next;
        }
        for shape in shapes.iter().filter(|s| !s.is_empty()) {
            let t = Tensor::zeros(shape);
            for lin in 0..t.len() {
                let idx = t.multi_index(lin);
                assert_eq!(t.linear_index(&idx), lin, "shape {shape:?}");
            }
        }
    }

    #[test]
    fn complex_view_trailing_axis() {
        assert!(ComplexView::new(Tensor::zeros(&[4, 4, 2])).is_ok());
        assert!(ComplexView::new(Tensor::zeros(&[4, 4, 3])).is_err());
        assert!(ComplexView::new(Tensor::zeros(&[4, 4])).is_err());
    }
}
