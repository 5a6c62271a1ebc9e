use serde::{Deserialize, Serialize};

use super::tensor::{matmul, matmul_a_bt, matmul_at_b, RealTensor};
use crate::error::{dim_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Relu,
    /// Exponential linear unit with α = 1.
    Elu,
    /// Row-wise softmax over the layer outputs.
    Softmax,
}

pub fn elu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        z.exp_m1()
    }
}

/// Numerically stable softmax of one row, written into `out`.
pub fn softmax_into(z: &[f64], out: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = (v - max).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; z.len()];
    softmax_into(z, &mut out);
    out
}

fn apply_activation(act: Activation, pre: &RealTensor) -> RealTensor {
    let mut out = pre.clone();
    match act {
        Activation::Linear => {}
        Activation::Relu => out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0)),
        Activation::Elu => out.data_mut().iter_mut().for_each(|v| *v = elu(*v)),
        Activation::Softmax => {
            for i in 0..pre.rows() {
                softmax_into(pre.row(i), out.row_mut(i));
            }
        }
    }
    out
}

/// Gradient w.r.t. pre-activations given the gradient w.r.t. outputs.
fn activation_backward(act: Activation, pre: &RealTensor, out: &RealTensor, upstream: &RealTensor) -> RealTensor {
    let mut dz = upstream.clone();
    match act {
        Activation::Linear => {}
        Activation::Relu => dz
            .data_mut()
            .iter_mut()
            .zip(pre.data())
            .for_each(|(d, &z)| {
                if z <= 0.0 {
                    *d = 0.0
                }
            }),
        Activation::Elu => dz
            .data_mut()
            .iter_mut()
            .zip(pre.data())
            .for_each(|(d, &z)| {
                if z <= 0.0 {
                    *d *= z.exp()
                }
            }),
        Activation::Softmax => {
            for i in 0..out.rows() {
                let p = out.row(i);
                let dot: f64 = p.iter().zip(upstream.row(i)).map(|(a, b)| a * b).sum();
                dz.row_mut(i)
                    .iter_mut()
                    .zip(p)
                    .for_each(|(d, &pk)| *d = pk * (*d - dot));
            }
        }
    }
    dz
}

/// Everything the backward pass of one dense layer needs.
#[derive(Debug, Clone)]
pub struct DenseCache {
    weight: RealTensor,
    input: RealTensor,
    pre: RealTensor,
    output: RealTensor,
    act: Activation,
}

impl DenseCache {
    pub fn output(&self) -> &RealTensor {
        &self.output
    }

    pub fn pre_activation(&self) -> &RealTensor {
        &self.pre
    }

    pub fn input(&self) -> &RealTensor {
        &self.input
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub weight: RealTensor,
    pub bias: RealTensor,
    pub input: RealTensor,
}

fn check_layer(op: &'static str, weight: &RealTensor, bias: &RealTensor) -> Result<(usize, usize)> {
    let (out, inp) = weight.dims2(op)?;
    if bias.shape() != [out] {
        return Err(dim_err(op, format!("bias [{out}]"), format!("{:?}", bias.shape())));
    }
    Ok((out, inp))
}

fn add_bias(pre: &mut RealTensor, bias: &RealTensor) {
    let b = bias.data();
    for i in 0..pre.rows() {
        pre.row_mut(i).iter_mut().zip(b).for_each(|(z, bk)| *z += bk);
    }
}

/// `output[i] = g(W · r[i] + b)` for every row `r[i]` of the batch.
pub fn dense_forward(
    weight: &RealTensor,
    bias: &RealTensor,
    input: &RealTensor,
    act: Activation,
) -> Result<(RealTensor, DenseCache)> {
    let (out, inp) = check_layer("dense_forward", weight, bias)?;
    let (batch, cols) = input.dims2("dense_forward")?;
    if cols != inp {
        return Err(dim_err("dense_forward", format!("input width {inp}"), cols));
    }
    input.ensure_finite("dense_forward input")?;

    let mut pre = RealTensor::zeros(&[batch, out]);
    matmul_a_bt(input.data(), weight.data(), batch, inp, out, pre.data_mut(), 0.0);
    add_bias(&mut pre, bias);
    let output = apply_activation(act, &pre);
    let cache = DenseCache {
        weight: weight.clone(),
        input: input.clone(),
        pre,
        output: output.clone(),
        act,
    };
    Ok((output, cache))
}

/// Exact gradients of a recorded [`dense_forward`] call, summed over the batch.
pub fn dense_backward(cache: &DenseCache, upstream: &RealTensor) -> Result<DenseGrads> {
    if !upstream.same_shape(&cache.output) {
        return Err(dim_err(
            "dense_backward",
            format!("{:?}", cache.output.shape()),
            format!("{:?}", upstream.shape()),
        ));
    }
    let (out, inp) = cache.weight.dims2("dense_backward")?;
    let batch = upstream.rows();
    let dz = activation_backward(cache.act, &cache.pre, &cache.output, upstream);

    let mut dw = RealTensor::zeros(&[out, inp]);
    matmul_at_b(dz.data(), cache.input.data(), out, batch, inp, dw.data_mut(), 0.0);
    let db = column_sums(&dz);
    let mut dx = RealTensor::zeros(&[batch, inp]);
    matmul(dz.data(), cache.weight.data(), batch, out, inp, dx.data_mut(), 0.0);
    Ok(DenseGrads {
        weight: dw,
        bias: db,
        input: dx,
    })
}

fn column_sums(t: &RealTensor) -> RealTensor {
    let cols = t.shape()[1];
    let mut sums = vec![0.0; cols];
    for i in 0..t.rows() {
        sums.iter_mut().zip(t.row(i)).for_each(|(s, v)| *s += v);
    }
    RealTensor::vector(sums)
}

/// Cache of an [`embedding_forward`] call.
#[derive(Debug, Clone)]
pub struct EmbeddingCache {
    ids: Vec<usize>,
    in_dim: usize,
    pre: RealTensor,
    output: RealTensor,
    act: Activation,
}

impl EmbeddingCache {
    pub fn output(&self) -> &RealTensor {
        &self.output
    }
}

/// A dense layer applied to one-hot inputs: `output[i] = g(W[:, ids[i]] + b)`.
///
/// Numerically identical to [`dense_forward`] on the one-hot encoding of
/// `ids`, without materializing it.
pub fn embedding_forward(
    weight: &RealTensor,
    bias: &RealTensor,
    ids: &[usize],
    act: Activation,
) -> Result<(RealTensor, EmbeddingCache)> {
    let (out, inp) = check_layer("embedding_forward", weight, bias)?;
    let mut pre = RealTensor::zeros(&[ids.len(), out]);
    let w = weight.data();
    for (i, &id) in ids.iter().enumerate() {
        if id >= inp {
            return Err(Error::InvalidMessage { id, m: inp });
        }
        let row = pre.row_mut(i);
        for (k, z) in row.iter_mut().enumerate() {
            *z = w[k * inp + id];
        }
    }
    add_bias(&mut pre, bias);
    let output = apply_activation(act, &pre);
    let cache = EmbeddingCache {
        ids: ids.to_vec(),
        in_dim: inp,
        pre,
        output: output.clone(),
        act,
    };
    Ok((output, cache))
}

/// `(dW, db)` for a recorded [`embedding_forward`] call.
pub fn embedding_backward(cache: &EmbeddingCache, upstream: &RealTensor) -> Result<(RealTensor, RealTensor)> {
    if !upstream.same_shape(&cache.output) {
        return Err(dim_err(
            "embedding_backward",
            format!("{:?}", cache.output.shape()),
            format!("{:?}", upstream.shape()),
        ));
    }
    let dz = activation_backward(cache.act, &cache.pre, &cache.output, upstream);
    let out = dz.shape()[1];
    let inp = cache.in_dim;
    let mut dw = RealTensor::zeros(&[out, inp]);
    let w = dw.data_mut();
    for (i, &id) in cache.ids.iter().enumerate() {
        for (k, d) in dz.row(i).iter().enumerate() {
            w[k * inp + id] += d;
        }
    }
    Ok((dw, column_sums(&dz)))
}

/// Gradient of the per-example cross-entropy `-log p[label]` w.r.t. the
/// pre-softmax logits: `probs - onehot(label)`, unscaled.
pub fn softmax_ce_backward(probs: &RealTensor, labels: &[usize]) -> Result<RealTensor> {
    let (batch, m) = probs.dims2("softmax_ce_backward")?;
    if labels.len() != batch {
        return Err(dim_err("softmax_ce_backward", batch, labels.len()));
    }
    let mut d = probs.clone();
    for (i, &label) in labels.iter().enumerate() {
        if label >= m {
            return Err(Error::InvalidMessage { id: label, m });
        }
        d.row_mut(i)[label] -= 1.0;
    }
    Ok(d)
}

/// Rows of the one-hot encoding of `ids` over `m` classes.
pub fn one_hot(ids: &[usize], m: usize) -> Result<RealTensor> {
    let mut t = RealTensor::zeros(&[ids.len(), m]);
    for (i, &id) in ids.iter().enumerate() {
        if id >= m {
            return Err(Error::InvalidMessage { id, m });
        }
        t.row_mut(i)[id] = 1.0;
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;

    #[test]
    fn identity_relu_clamps_negative() {
        let w = RealTensor::identity(2);
        let b = RealTensor::zeros(&[2]);
        let r = RealTensor::from_rows(&[vec![-1.0, 2.0]]).unwrap();
        let (out, _) = dense_forward(&w, &b, &r, Activation::Relu).unwrap();
        assert_eq!(out.data(), &[0.0, 2.0]);
    }

    #[test]
    fn scalar_linear_layer() {
        let w = RealTensor::from_rows(&[vec![2.0]]).unwrap();
        let b = RealTensor::vector(vec![1.0]);
        let r = RealTensor::from_rows(&[vec![3.0]]).unwrap();
        let (out, cache) = dense_forward(&w, &b, &r, Activation::Linear).unwrap();
        assert_eq!(out.data(), &[7.0]);

        let g = dense_backward(&cache, &RealTensor::from_rows(&[vec![1.0]]).unwrap()).unwrap();
        assert_eq!(g.weight.data(), &[3.0]);
        assert_eq!(g.bias.data(), &[1.0]);
        assert_eq!(g.input.data(), &[2.0]);

        let z = dense_backward(&cache, &RealTensor::zeros(&[1, 1])).unwrap();
        assert!(z.weight.max_abs() == 0.0 && z.bias.max_abs() == 0.0 && z.input.max_abs() == 0.0);
    }

    #[test]
    fn elu_at_minus_one() {
        assert_relative_eq!(elu(-1.0), -0.632_120_558_828_557_7, epsilon = 1e-15);
        assert_eq!(elu(0.0), 0.0);
        assert_eq!(elu(2.5), 2.5);
    }

    #[test]
    fn elu_slope_is_one_on_both_sides_of_zero() {
        let h = 1e-7;
        let left = (elu(0.0) - elu(-h)) / h;
        let right = (elu(h) - elu(0.0)) / h;
        assert_relative_eq!(left, 1.0, epsilon = 1e-6);
        assert_relative_eq!(right, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn shape_mismatch_and_non_finite_input_are_rejected() {
        let w = RealTensor::identity(2);
        let b = RealTensor::zeros(&[2]);
        let bad = RealTensor::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(
            dense_forward(&w, &b, &bad, Activation::Linear),
            Err(Error::Dimension { .. })
        ));
        let nan = RealTensor::from_rows(&[vec![f64::NAN, 0.0]]).unwrap();
        assert!(matches!(
            dense_forward(&w, &b, &nan, Activation::Linear),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn softmax_handles_large_logits() {
        let p = softmax(&[1000.0, 1000.0, -1000.0]);
        assert_relative_eq!(p[0], 0.5, epsilon = 1e-15);
        assert_eq!(p[2], 0.0);
    }

    #[test]
    fn ce_gradient_examples() {
        let p = RealTensor::from_rows(&[vec![0.75, 0.25]]).unwrap();
        assert_eq!(softmax_ce_backward(&p, &[1]).unwrap().data(), &[0.75, -0.75]);
        let onehot = RealTensor::from_rows(&[vec![0.0, 1.0, 0.0]]).unwrap();
        assert!(softmax_ce_backward(&onehot, &[1]).unwrap().max_abs() == 0.0);
        assert!(matches!(
            softmax_ce_backward(&p, &[2]),
            Err(Error::InvalidMessage { id: 2, m: 2 })
        ));
    }

    #[test]
    fn embedding_matches_dense_on_one_hot() {
        let w = RealTensor::new(vec![3, 4], (0..12).map(|v| v as f64 * 0.3 - 1.7).collect()).unwrap();
        let b = RealTensor::vector(vec![0.1, -0.2, 0.3]);
        let ids = [3, 0, 2, 2];
        let (emb, ecache) = embedding_forward(&w, &b, &ids, Activation::Elu).unwrap();
        let (dense, dcache) = dense_forward(&w, &b, &one_hot(&ids, 4).unwrap(), Activation::Elu).unwrap();
        assert_eq!(emb, dense);

        let up = RealTensor::new(vec![4, 3], (0..12).map(|v| (v as f64).sin()).collect()).unwrap();
        let (dw, db) = embedding_backward(&ecache, &up).unwrap();
        let g = dense_backward(&dcache, &up).unwrap();
        for (a, b) in dw.data().iter().zip(g.weight.data()) {
            assert_relative_eq!(a, b, epsilon = 1e-14);
        }
        assert_eq!(db, g.bias);
        assert!(embedding_forward(&w, &b, &[4], Activation::Elu).is_err());
    }
}
