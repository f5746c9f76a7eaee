//! 2-D discrete Fourier transforms over the last two axes.
//!
//! Convention: the forward transform is unnormalized,
//! `X[a,b] = Σ x[m,n] e^{-2πi(am/H + bn/W)}`, and the inverse carries the
//! full `1/(HW)` factor, so `ifft2(fft2(x)) = x`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{ComplexTensor, Tensor};
use crate::error::{Error, Result};

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cell| {
        let (planner, cache) = &mut *cell.borrow_mut();
        cache
            .entry((len, inverse))
            .or_insert_with(|| {
                if inverse {
                    planner.plan_fft_inverse(len)
                } else {
                    planner.plan_fft_forward(len)
                }
            })
            .clone()
    })
}

/// In-place transform of `planes` stacked `h × w` complex planes given as
/// split real/imaginary buffers. The inverse applies the `1/(hw)` scale.
pub(crate) fn transform_planes(
    re: &mut [f64],
    im: &mut [f64],
    h: usize,
    w: usize,
    inverse: bool,
) {
    let row_plan = plan(w, inverse);
    let col_plan = plan(h, inverse);
    let plane = h * w;
    let mut buf = vec![Complex64::new(0.0, 0.0); h.max(w)];
    let mut scratch =
        vec![Complex64::new(0.0, 0.0); row_plan.get_inplace_scratch_len().max(col_plan.get_inplace_scratch_len())];
    for p in 0..re.len() / plane {
        let (pr, pi) = (&mut re[p * plane..(p + 1) * plane], &mut im[p * plane..(p + 1) * plane]);
        for r in 0..h {
            let row = &mut buf[..w];
            for c in 0..w {
                row[c] = Complex64::new(pr[r * w + c], pi[r * w + c]);
            }
            row_plan.process_with_scratch(row, &mut scratch);
            for c in 0..w {
                pr[r * w + c] = row[c].re;
                pi[r * w + c] = row[c].im;
            }
        }
        for c in 0..w {
            let col = &mut buf[..h];
            for r in 0..h {
                col[r] = Complex64::new(pr[r * w + c], pi[r * w + c]);
            }
            col_plan.process_with_scratch(col, &mut scratch);
            for r in 0..h {
                pr[r * w + c] = col[r].re;
                pi[r * w + c] = col[r].im;
            }
        }
    }
    if inverse {
        let scale = 1.0 / plane as f64;
        re.iter_mut().chain(im.iter_mut()).for_each(|v| *v *= scale);
    }
}

fn check_input(shape: &[usize], op: &'static str) -> Result<(usize, usize)> {
    if shape.len() < 2 {
        return Err(Error::Rank {
            op,
            expected: 2,
            got: shape.to_vec(),
        });
    }
    let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    if h < 2 || w < 2 {
        return Err(Error::InvalidArgument(format!(
            "{op}: spatial size must be at least 2x2, got {h}x{w}"
        )));
    }
    Ok((h, w))
}

/// Forward transform of a real `... × H × W` tensor.
pub fn fft2(input: &Tensor) -> Result<ComplexTensor> {
    let (h, w) = check_input(input.shape(), "fft2")?;
    if !input.is_finite() {
        return Err(Error::NonFinite("fft2"));
    }
    let mut re = input.data().to_vec();
    let mut im = vec![0.0; re.len()];
    transform_planes(&mut re, &mut im, h, w, false);
    let shape = input.shape().to_vec();
    ComplexTensor::new(Tensor::new(shape.clone(), re)?, Tensor::new(shape, im)?)
}

/// Inverse transform, returning both parts.
pub fn ifft2(input: &ComplexTensor) -> Result<ComplexTensor> {
    let (h, w) = check_input(input.shape(), "ifft2")?;
    if !input.re.is_finite() || !input.im.is_finite() {
        return Err(Error::NonFinite("ifft2"));
    }
    let mut re = input.re.data().to_vec();
    let mut im = input.im.data().to_vec();
    transform_planes(&mut re, &mut im, h, w, true);
    let shape = input.shape().to_vec();
    ComplexTensor::new(Tensor::new(shape.clone(), re)?, Tensor::new(shape, im)?)
}

/// Inverse transform keeping the real part. Fails if the discarded imaginary
/// residue exceeds `1e-10` relative to the largest real magnitude (floored
/// at 1), i.e. if the input was not conjugate-symmetric.
pub fn ifft2_real(input: &ComplexTensor) -> Result<Tensor> {
    let out = ifft2(input)?;
    let scale = out.re.data().iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let residue = out.im.data().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if residue > 1e-10 * scale {
        return Err(Error::InvalidArgument(format!(
            "ifft2_real: imaginary residue {residue:e} exceeds tolerance; input is not conjugate-symmetric"
        )));
    }
    Ok(out.re)
}

/// Index of the bin holding wavenumber `-k` along an axis of length `n`.
#[inline]
pub(crate) fn mirror(k: usize, n: usize) -> usize {
    (n - k) % n
}
