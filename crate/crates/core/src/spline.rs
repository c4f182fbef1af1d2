//! Uniform B-spline grids.
//!
//! A grid over `[lo, hi]` with `G` intervals and degree `κ` carries
//! `G + 2κ + 1` knots, extended by `κ` uniform steps past each end so every
//! point of the domain is covered by a full set of `κ + 1` basis functions.
//! There are `G + κ` basis functions in total.
//!
//! Evaluation uses the Cox–de Boor recursion restricted to the `κ + 1`
//! functions that are nonzero in the knot span containing `x`. Outside the
//! extended knot range every basis value is zero.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::autodiff::Function;
use crate::error::invalid;
use crate::{Result, Tensor};

/// Highest supported spline degree.
pub const MAX_ORDER: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotGrid {
    lo: f64,
    hi: f64,
    grid_size: usize,
    order: usize,
    knots: Vec<f64>,
}

/// Builds a uniform grid over `[lo, hi]` with `grid_size` intervals and
/// spline degree `order`.
pub fn make_knot_grid(lo: f64, hi: f64, grid_size: usize, order: usize) -> Result<KnotGrid> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(invalid!("knot grid needs finite lo < hi, got [{lo}, {hi}]"));
    }
    if grid_size < 1 {
        return Err(invalid!("knot grid needs at least one interval"));
    }
    if order > MAX_ORDER {
        return Err(invalid!("spline degree {order} exceeds {MAX_ORDER}"));
    }
    let h = (hi - lo) / grid_size as f64;
    let mut knots: Vec<f64> = (0..grid_size + 2 * order + 1)
        .map(|j| lo + (j as f64 - order as f64) * h)
        .collect();
    knots[order] = lo;
    knots[order + grid_size] = hi;
    Ok(KnotGrid {
        lo,
        hi,
        grid_size,
        order,
        knots,
    })
}

impl KnotGrid {
    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / self.grid_size as f64
    }

    pub fn num_basis(&self) -> usize {
        self.grid_size + self.order
    }

    /// Knot `j` of the grid continued uniformly for indices outside the
    /// stored range.
    fn knot(&self, j: isize) -> f64 {
        match usize::try_from(j).ok().and_then(|j| self.knots.get(j)) {
            Some(&t) => t,
            None => self.lo + (j as f64 - self.order as f64) * self.spacing(),
        }
    }

    /// Index `j` of the span `[t_j, t_{j+1})` containing `x`, or `None` when
    /// `x` lies outside the knot range. The right end of the domain is
    /// treated as belonging to the span on its left.
    fn span(&self, x: f64) -> Option<usize> {
        let last = self.knots.len() - 1;
        if !(x >= self.knots[0] && x <= self.knots[last]) {
            return None;
        }
        let h = self.spacing();
        let mut j = ((x - self.knots[0]) / h).floor() as isize;
        let hi_span = (self.grid_size + self.order) as isize;
        if x == self.hi {
            j = hi_span - 1;
        }
        // fix rounding at knot boundaries
        let mut j = j.clamp(0, last as isize - 1) as usize;
        while j > 0 && x < self.knots[j] {
            j -= 1;
        }
        while j + 1 < last && x >= self.knots[j + 1] {
            j += 1;
        }
        if x >= self.knots[last] && x != self.hi {
            return None;
        }
        Some(j)
    }

    /// Writes the nonzero basis values (and optionally their derivatives)
    /// at `x`. Returns the index of the first written basis function and
    /// the count; entries outside `[0, G + κ)` are dropped by the caller.
    fn local(&self, x: f64, vals: &mut [f64; MAX_ORDER + 1], ders: Option<&mut [f64; MAX_ORDER + 1]>) -> Option<isize> {
        let k = self.order;
        let j = self.span(x)? as isize;
        let mut left = [0.0; MAX_ORDER + 1];
        let mut right = [0.0; MAX_ORDER + 1];
        vals[0] = 1.0;
        let mut lower = [0.0; MAX_ORDER + 1];
        for p in 1..=k {
            if p == k {
                lower[..k].copy_from_slice(&vals[..k]);
            }
            left[p] = x - self.knot(j + 1 - p as isize);
            right[p] = self.knot(j + p as isize) - x;
            let mut saved = 0.0;
            for r in 0..p {
                let temp = vals[r] / (right[r + 1] + left[p - r]);
                vals[r] = saved + right[r + 1] * temp;
                saved = left[p - r] * temp;
            }
            vals[p] = saved;
        }
        if let Some(d) = ders {
            if k == 0 {
                d[0] = 0.0;
            } else {
                // B'_{i,k} = k/(t_{i+k}-t_i) B_{i,k-1} - k/(t_{i+k+1}-t_{i+1}) B_{i+1,k-1},
                // lower[r] holds B_{j-k+1+r, k-1}.
                let kf = k as f64;
                let first = j - k as isize;
                for r in 0..=k {
                    let i = first + r as isize;
                    let a = if r >= 1 { lower[r - 1] } else { 0.0 };
                    let b = if r < k { lower[r] } else { 0.0 };
                    let da = self.knot(i + k as isize) - self.knot(i);
                    let db = self.knot(i + k as isize + 1) - self.knot(i + 1);
                    d[r] = kf * a / da - kf * b / db;
                }
            }
        }
        Some(j - k as isize)
    }

    /// All `G + κ` basis values at `x`.
    pub fn basis(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.num_basis()];
        self.basis_into(x, &mut out, None);
        out
    }

    /// All `G + κ` basis derivatives `dB_i/dx` at `x`.
    pub fn basis_derivative(&self, x: f64) -> Vec<f64> {
        let mut vals = vec![0.0; self.num_basis()];
        let mut ders = vec![0.0; self.num_basis()];
        self.basis_into(x, &mut vals, Some(&mut ders));
        ders
    }

    /// Fills `out` (length `G + κ`) with the basis values at `x`, and
    /// `dout` with their derivatives when given.
    pub fn basis_into(&self, x: f64, out: &mut [f64], dout: Option<&mut [f64]>) {
        out.fill(0.0);
        let mut vals = [0.0; MAX_ORDER + 1];
        let mut ders = [0.0; MAX_ORDER + 1];
        let want_d = dout.is_some();
        let first = self.local(x, &mut vals, want_d.then_some(&mut ders));
        let nb = self.num_basis() as isize;
        if let Some(d) = dout {
            d.fill(0.0);
            if let Some(first) = first {
                for r in 0..=self.order {
                    let i = first + r as isize;
                    if (0..nb).contains(&i) {
                        d[i as usize] = ders[r];
                    }
                }
            }
        }
        if let Some(first) = first {
            for r in 0..=self.order {
                let i = first + r as isize;
                if (0..nb).contains(&i) {
                    out[i as usize] = vals[r];
                }
            }
        }
    }
}

/// `[B_1(x), …, B_{G+κ}(x)]` for the given grid.
pub fn bspline_basis(grid: &KnotGrid, x: f64) -> Vec<f64> {
    grid.basis(x)
}

/// Graph kernel: maps `x` of any shape to its basis expansion with a trailing
/// axis of length `G + κ`.
#[derive(Debug, Clone)]
pub struct BsplineBasisOp {
    pub grid: KnotGrid,
}

impl Function for BsplineBasisOp {
    fn name(&self) -> &'static str {
        "bspline_basis"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let x = inputs[0];
        let nb = self.grid.num_basis();
        let mut data = vec![0.0; x.numel() * nb];
        for (xv, out) in x.data().iter().zip(data.chunks_mut(nb)) {
            self.grid.basis_into(*xv, out, None);
        }
        let mut shape = x.shape().to_vec();
        shape.push(nb);
        Tensor::new(shape, data)
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &[f64], _needs: &[bool]) -> Vec<Option<Vec<f64>>> {
        let x = inputs[0];
        let nb = self.grid.num_basis();
        let mut vals = vec![0.0; nb];
        let mut ders = vec![0.0; nb];
        let gx = x
            .data()
            .iter()
            .zip(grad.chunks(nb))
            .map(|(xv, g)| {
                self.grid.basis_into(*xv, &mut vals, Some(&mut ders));
                g.iter().zip(&ders).map(|(a, b)| a * b).sum()
            })
            .collect();
        vec![Some(gx)]
    }
}
