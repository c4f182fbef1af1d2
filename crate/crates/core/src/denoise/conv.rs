//! Strided 1-D convolution and its transpose over `[batch, channels, length]`.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng as _;

use crate::autodiff::Function;
use crate::rng::Rng;
use crate::{Error, Result, Tensor};

/// Kernel geometry shared by a convolution and its transpose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ConvGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn conv_len(&self, len: usize) -> Result<usize> {
        let padded = len + 2 * self.padding;
        if len < self.kernel || self.stride == 0 {
            return Err(Error::InvalidArgument(alloc::format!(
                "input length {len} shorter than kernel {}",
                self.kernel
            )));
        }
        Ok((padded - self.kernel) / self.stride + 1)
    }

    pub fn transpose_len(&self, len: usize) -> Result<usize> {
        let full = (len.max(1) - 1) * self.stride + self.kernel;
        if len == 0 || full < 2 * self.padding + 1 {
            return Err(Error::InvalidArgument(alloc::format!(
                "input length {len} too short for transposed convolution"
            )));
        }
        Ok(full - 2 * self.padding)
    }
}

fn dims3(t: &Tensor, op: &'static str, other: &Tensor) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [a, b, c] => Ok((a, b, c)),
        _ => Err(Error::ShapeMismatch {
            op,
            lhs: t.shape().to_vec(),
            rhs: other.shape().to_vec(),
        }),
    }
}

/// Inputs `(x [B, Cin, L], weight [Cout, Cin, K], bias [Cout])`.
#[derive(Debug, Clone, Copy)]
pub struct Conv1dOp(pub ConvGeometry);

/// Inputs `(x [B, Cin, L], weight [Cin, Cout, K], bias [Cout])`.
#[derive(Debug, Clone, Copy)]
pub struct ConvTranspose1dOp(pub ConvGeometry);

struct Dims {
    batch: usize,
    cin: usize,
    cout: usize,
    len_in: usize,
    len_out: usize,
}

fn check(
    op: &'static str,
    inputs: &[&Tensor],
    geo: ConvGeometry,
    transposed: bool,
) -> Result<Dims> {
    let (x, w, b) = (inputs[0], inputs[1], inputs[2]);
    let (batch, cin, len_in) = dims3(x, op, w)?;
    let (w0, w1, k) = dims3(w, op, x)?;
    let (wcin, cout) = if transposed { (w0, w1) } else { (w1, w0) };
    if wcin != cin || k != geo.kernel || b.shape() != [cout] {
        return Err(Error::ShapeMismatch {
            op,
            lhs: x.shape().to_vec(),
            rhs: w.shape().to_vec(),
        });
    }
    let len_out = if transposed {
        geo.transpose_len(len_in)?
    } else {
        geo.conv_len(len_in)?
    };
    Ok(Dims {
        batch,
        cin,
        cout,
        len_in,
        len_out,
    })
}

/// Window indices `o < count` whose tap `k` lands inside a signal of
/// length `len`, i.e. `0 <= o·stride + k − padding < len`.
#[inline]
fn valid(k: usize, geo: &ConvGeometry, len: usize, count: usize) -> core::ops::Range<usize> {
    let s = geo.stride;
    let lo = geo.padding.saturating_sub(k).div_ceil(s);
    let hi = count.min((len + geo.padding).saturating_sub(k).div_ceil(s));
    lo.min(hi)..hi
}

impl Function for Conv1dOp {
    fn name(&self) -> &'static str {
        "conv1d"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let geo = self.0;
        let d = check("conv1d", inputs, geo, false)?;
        let (x, w, b) = (inputs[0].data(), inputs[1].data(), inputs[2].data());
        let (k, s) = (geo.kernel, geo.stride);
        let mut y = vec![0.0; d.batch * d.cout * d.len_out];
        for n in 0..d.batch {
            for co in 0..d.cout {
                let row = &mut y[(n * d.cout + co) * d.len_out..][..d.len_out];
                row.fill(b[co]);
                for ci in 0..d.cin {
                    let xr = &x[(n * d.cin + ci) * d.len_in..][..d.len_in];
                    let wr = &w[(co * d.cin + ci) * k..][..k];
                    for (kk, &wv) in wr.iter().enumerate() {
                        for o in valid(kk, &geo, d.len_in, d.len_out) {
                            row[o] += wv * xr[o * s + kk - geo.padding];
                        }
                    }
                }
            }
        }
        Tensor::new(vec![d.batch, d.cout, d.len_out], y)
    }

    fn backward(&self, inputs: &[&Tensor], _out: &Tensor, grad: &[f64], needs: &[bool]) -> Vec<Option<Vec<f64>>> {
        let geo = self.0;
        let d = check("conv1d", inputs, geo, false).expect("checked in forward");
        let (x, w) = (inputs[0].data(), inputs[1].data());
        let (k, s) = (geo.kernel, geo.stride);
        let mut gx = vec![0.0; x.len()];
        let mut gw = vec![0.0; w.len()];
        let mut gb = vec![0.0; d.cout];
        for n in 0..d.batch {
            for co in 0..d.cout {
                let gr = &grad[(n * d.cout + co) * d.len_out..][..d.len_out];
                gb[co] += gr.iter().sum::<f64>();
                for ci in 0..d.cin {
                    let base = (n * d.cin + ci) * d.len_in;
                    let xr = &x[base..base + d.len_in];
                    let gxr = &mut gx[base..base + d.len_in];
                    let wbase = (co * d.cin + ci) * k;
                    for kk in 0..k {
                        let wv = w[wbase + kk];
                        let mut acc = 0.0;
                        for o in valid(kk, &geo, d.len_in, d.len_out) {
                            let p = o * s + kk - geo.padding;
                            gxr[p] += gr[o] * wv;
                            acc += gr[o] * xr[p];
                        }
                        gw[wbase + kk] += acc;
                    }
                }
            }
        }
        vec![needs[0].then_some(gx), needs[1].then_some(gw), needs[2].then_some(gb)]
    }
}

impl Function for ConvTranspose1dOp {
    fn name(&self) -> &'static str {
        "conv_transpose1d"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let geo = self.0;
        let d = check("conv_transpose1d", inputs, geo, true)?;
        let (x, w, b) = (inputs[0].data(), inputs[1].data(), inputs[2].data());
        let (k, s) = (geo.kernel, geo.stride);
        let mut y = vec![0.0; d.batch * d.cout * d.len_out];
        for n in 0..d.batch {
            for co in 0..d.cout {
                let row = &mut y[(n * d.cout + co) * d.len_out..][..d.len_out];
                row.fill(b[co]);
                for ci in 0..d.cin {
                    let xr = &x[(n * d.cin + ci) * d.len_in..][..d.len_in];
                    let wr = &w[(ci * d.cout + co) * k..][..k];
                    for (kk, &wv) in wr.iter().enumerate() {
                        for i in valid(kk, &geo, d.len_out, d.len_in) {
                            row[i * s + kk - geo.padding] += xr[i] * wv;
                        }
                    }
                }
            }
        }
        Tensor::new(vec![d.batch, d.cout, d.len_out], y)
    }

    fn backward(&self, inputs: &[&Tensor], _out: &Tensor, grad: &[f64], needs: &[bool]) -> Vec<Option<Vec<f64>>> {
        let geo = self.0;
        let d = check("conv_transpose1d", inputs, geo, true).expect("checked in forward");
        let (x, w) = (inputs[0].data(), inputs[1].data());
        let (k, s) = (geo.kernel, geo.stride);
        let mut gx = vec![0.0; x.len()];
        let mut gw = vec![0.0; w.len()];
        let mut gb = vec![0.0; d.cout];
        for n in 0..d.batch {
            for co in 0..d.cout {
                let gr = &grad[(n * d.cout + co) * d.len_out..][..d.len_out];
                gb[co] += gr.iter().sum::<f64>();
                for ci in 0..d.cin {
                    let base = (n * d.cin + ci) * d.len_in;
                    let xr = &x[base..base + d.len_in];
                    let gxr = &mut gx[base..base + d.len_in];
                    let wbase = (ci * d.cout + co) * k;
                    for kk in 0..k {
                        let wv = w[wbase + kk];
                        let mut acc = 0.0;
                        for i in valid(kk, &geo, d.len_out, d.len_in) {
                            let g = gr[i * s + kk - geo.padding];
                            gxr[i] += g * wv;
                            acc += g * xr[i];
                        }
                        gw[wbase + kk] += acc;
                    }
                }
            }
        }
        vec![needs[0].then_some(gx), needs[1].then_some(gw), needs[2].then_some(gb)]
    }
}

/// Weights and bias of one (transposed) convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub weight: Tensor,
    pub bias: Tensor,
    pub transposed: bool,
}

impl ConvParams {
    /// Uniform `±1/√fan_in`, with `fan_in = weight.shape[1]·K` as for dense
    /// layers.
    pub fn init(cin: usize, cout: usize, kernel: usize, transposed: bool, rng: &mut Rng) -> Self {
        let shape = if transposed {
            vec![cin, cout, kernel]
        } else {
            vec![cout, cin, kernel]
        };
        let bound = 1.0 / ((shape[1] * kernel) as f64).sqrt();
        let n = cin * cout * kernel;
        let w = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
        let b = (0..cout).map(|_| rng.random_range(-bound..bound)).collect();
        Self {
            weight: Tensor::new(shape, w).expect("shape"),
            bias: Tensor::vector(b),
            transposed,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.bias.numel()
    }
}
