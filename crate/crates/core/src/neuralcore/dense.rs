use super::gemm::gemm;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn dims(op: &'static str, input: &Tensor, weights: &Tensor) -> Result<(usize, usize, usize)> {
    let (b, d) = input.dims2(op)?;
    let (wd, u) = weights.dims2(op)?;
    if wd != d {
        return Err(Error::shape(op, format!("input width {d}, weight rows {wd}")));
    }
    Ok((b, d, u))
}

/// Affine map `input * weights + bias` for `B x D` input and `D x U` weights.
pub fn dense(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (b, d, u) = dims("dense", input, weights)?;
    if bias.len() != u {
        return Err(Error::shape("dense", format!("bias {} for {u} units", bias.len())));
    }
    let mut out = Tensor::zeros(&[b, u]);
    for row in 0..b {
        out.item_mut(row).copy_from_slice(bias.data());
    }
    gemm(
        b,
        d,
        u,
        1.0,
        input.data(),
        false,
        weights.data(),
        false,
        1.0,
        out.data_mut(),
    );
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

pub fn dense_grad(input: &Tensor, weights: &Tensor, upstream: &Tensor) -> Result<DenseGrads> {
    let (b, d, u) = dims("dense_grad", input, weights)?;
    if upstream.shape() != [b, u] {
        return Err(Error::shape(
            "dense_grad",
            format!("upstream {:?}, expected [{b}, {u}]", upstream.shape()),
        ));
    }
    let mut d_input = Tensor::zeros(&[b, d]);
    gemm(
        b,
        u,
        d,
        1.0,
        upstream.data(),
        false,
        weights.data(),
        true,
        0.0,
        d_input.data_mut(),
    );
    let mut d_weights = Tensor::zeros(&[d, u]);
    gemm(
        d,
        b,
        u,
        1.0,
        input.data(),
        true,
        upstream.data(),
        false,
        0.0,
        d_weights.data_mut(),
    );
    let mut d_bias = Tensor::zeros(&[u]);
    for row in 0..b {
        for (acc, g) in d_bias.data_mut().iter_mut().zip(upstream.item(row)) {
            *acc += g;
        }
    }
    Ok(DenseGrads {
        input: d_input,
        weights: d_weights,
        bias: d_bias,
    })
}
