//! Periodic 2-D cross-correlation kernels.
//!
//! `out[o,y,x] = b[o] + Σ_i Σ_{p,q} K[o,i,p,q] · in[i, (y+p-r) mod H, (x+q-r) mod W]`
//! with `r = k/2`. The input is wrapped into a halo-padded buffer once so the
//! inner loops run over contiguous rows.

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvDims {
    pub c_in: usize,
    pub c_out: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
}

impl ConvDims {
    pub fn check(input: &Tensor, kernel: &Tensor, bias: Option<&Tensor>) -> Result<Self> {
        const OP: &str = "conv2d_periodic";
        let (c_in, h, w) = input.dims3(OP)?;
        let &[c_out, kc_in, kh, kw] = kernel.shape() else {
            return Err(Error::Rank {
                op: OP,
                expected: 4,
                got: kernel.shape().to_vec(),
            });
        };
        if kc_in != c_in {
            return Err(Error::ShapeMismatch {
                op: OP,
                dim: "kernel input channels",
                expected: c_in,
                got: kc_in,
            });
        }
        if kh != kw {
            return Err(Error::ShapeMismatch {
                op: OP,
                dim: "kernel width",
                expected: kh,
                got: kw,
            });
        }
        if kh % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "{OP}: kernel size must be odd, got {kh}"
            )));
        }
        if h < kh {
            return Err(Error::ShapeMismatch {
                op: OP,
                dim: "input height (must be >= kernel size)",
                expected: kh,
                got: h,
            });
        }
        if w < kh {
            return Err(Error::ShapeMismatch {
                op: OP,
                dim: "input width (must be >= kernel size)",
                expected: kh,
                got: w,
            });
        }
        if let Some(b) = bias {
            if b.shape() != [c_out] {
                return Err(Error::ShapeMismatch {
                    op: OP,
                    dim: "bias length",
                    expected: c_out,
                    got: b.numel(),
                });
            }
        }
        Ok(ConvDims {
            c_in,
            c_out,
            h,
            w,
            k: kh,
        })
    }

    fn padded(&self) -> (usize, usize) {
        (self.h + self.k - 1, self.w + self.k - 1)
    }
}

fn wrap_pad(input: &[f64], d: ConvDims) -> Vec<f64> {
    let r = d.k / 2;
    let (ph, pw) = d.padded();
    let mut out = vec![0.0; d.c_in * ph * pw];
    for i in 0..d.c_in {
        for py in 0..ph {
            let sy = (py + d.h - r) % d.h;
            let src = &input[(i * d.h + sy) * d.w..(i * d.h + sy + 1) * d.w];
            let dst = &mut out[(i * ph + py) * pw..(i * ph + py + 1) * pw];
            for (px, v) in dst.iter_mut().enumerate() {
                *v = src[(px + d.w - r) % d.w];
            }
        }
    }
    out
}

pub(crate) fn forward(input: &[f64], kernel: &[f64], bias: Option<&[f64]>, d: ConvDims) -> Vec<f64> {
    let (ph, pw) = d.padded();
    let k = d.k;
    let padded = if k == 1 { input.to_vec() } else { wrap_pad(input, d) };
    let mut out = vec![0.0; d.c_out * d.h * d.w];
    for o in 0..d.c_out {
        let plane = &mut out[o * d.h * d.w..(o + 1) * d.h * d.w];
        if let Some(b) = bias {
            plane.iter_mut().for_each(|v| *v = b[o]);
        }
        for i in 0..d.c_in {
            for p in 0..k {
                for q in 0..k {
                    let kv = kernel[((o * d.c_in + i) * k + p) * k + q];
                    if kv == 0.0 {
                        continue;
                    }
                    for y in 0..d.h {
                        let src = &padded[(i * ph + y + p) * pw + q..][..d.w];
                        let dst = &mut plane[y * d.w..(y + 1) * d.w];
                        for (o_v, s) in dst.iter_mut().zip(src) {
                            *o_v += kv * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients with respect to (input, kernel, bias) given the output adjoint.
pub(crate) fn backward(
    input: &[f64],
    kernel: &[f64],
    grad_out: &[f64],
    d: ConvDims,
    want_input: bool,
    want_kernel: bool,
) -> (Option<Vec<f64>>, Option<Vec<f64>>, Vec<f64>) {
    let (ph, pw) = d.padded();
    let k = d.k;
    let r = k / 2;
    let hw = d.h * d.w;

    let grad_bias: Vec<f64> = (0..d.c_out)
        .map(|o| grad_out[o * hw..(o + 1) * hw].iter().sum())
        .collect();

    let grad_kernel = want_kernel.then(|| {
        let padded = if k == 1 { input.to_vec() } else { wrap_pad(input, d) };
        let mut gk = vec![0.0; d.c_out * d.c_in * k * k];
        for o in 0..d.c_out {
            let g = &grad_out[o * hw..(o + 1) * hw];
            for i in 0..d.c_in {
                for p in 0..k {
                    for q in 0..k {
                        let mut acc = 0.0;
                        for y in 0..d.h {
                            let src = &padded[(i * ph + y + p) * pw + q..][..d.w];
                            acc += g[y * d.w..(y + 1) * d.w]
                                .iter()
                                .zip(src)
                                .map(|(a, b)| a * b)
                                .sum::<f64>();
                        }
                        gk[((o * d.c_in + i) * k + p) * k + q] = acc;
                    }
                }
            }
        }
        gk
    });

    let grad_input = want_input.then(|| {
        // Scatter into a padded buffer, then fold the halo back periodically.
        let mut gp = vec![0.0; d.c_in * ph * pw];
        for o in 0..d.c_out {
            let g = &grad_out[o * hw..(o + 1) * hw];
            for i in 0..d.c_in {
                for p in 0..k {
                    for q in 0..k {
                        let kv = kernel[((o * d.c_in + i) * k + p) * k + q];
                        if kv == 0.0 {
                            continue;
                        }
                        for y in 0..d.h {
                            let dst = &mut gp[(i * ph + y + p) * pw + q..][..d.w];
                            for (a, b) in dst.iter_mut().zip(&g[y * d.w..(y + 1) * d.w]) {
                                *a += kv * b;
                            }
                        }
                    }
                }
            }
        }
        if k == 1 {
            return gp;
        }
        let mut gi = vec![0.0; d.c_in * hw];
        for i in 0..d.c_in {
            for py in 0..ph {
                let sy = (py + d.h - r) % d.h;
                for px in 0..pw {
                    let sx = (px + d.w - r) % d.w;
                    gi[(i * d.h + sy) * d.w + sx] += gp[(i * ph + py) * pw + px];
                }
            }
        }
        gi
    });

    (grad_input, grad_kernel, grad_bias)
}

/// Value-level periodic convolution (no tape).
pub fn conv2d_periodic(input: &Tensor, kernel: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let d = ConvDims::check(input, kernel, bias)?;
    let out = forward(input.data(), kernel.data(), bias.map(|b| b.data()), d);
    Tensor::new(vec![d.c_out, d.h, d.w], out)
}

/// Five-point Laplacian stencil scaled by `1/h²`, as a `3 × 3` kernel.
pub fn laplacian_stencil(h: f64) -> [f64; 9] {
    let s = 1.0 / (h * h);
    [0.0, s, 0.0, s, -4.0 * s, s, 0.0, s, 0.0]
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    /// Direct modular-index loop, independent of the padded implementation.
    fn reference(input: &Tensor, kernel: &Tensor, bias: &[f64]) -> Vec<f64> {
        let (c_in, h, w) = input.dims3("ref").unwrap();
        let (c_out, k) = (kernel.shape()[0], kernel.shape()[2]);
        let r = k as isize / 2;
        let mut out = vec![0.0; c_out * h * w];
        for o in 0..c_out {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = bias[o];
                    for i in 0..c_in {
                        for p in 0..k {
                            for q in 0..k {
                                let yy = (y as isize + p as isize - r).rem_euclid(h as isize) as usize;
                                let xx = (x as isize + q as isize - r).rem_euclid(w as isize) as usize;
                                acc += kernel.data()[((o * c_in + i) * k + p) * k + q]
                                    * input.data()[(i * h + yy) * w + xx];
                            }
                        }
                    }
                    out[(o * h + y) * w + x] = acc;
                }
            }
        }
        out
    }

    fn seq(shape: &[usize], f: impl Fn(usize) -> f64) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(f).collect()).unwrap()
    }

    #[test]
    fn identity_kernel_is_identity() {
        let x = seq(&[1, 5, 6], |i| (i as f64 * 0.37).sin());
        let mut k = Tensor::zeros(&[1, 1, 3, 3]);
        k.data_mut()[4] = 1.0;
        let y = conv2d_periodic(&x, &k, Some(&Tensor::zeros(&[1]))).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn zero_sum_kernel_annihilates_constants() {
        let x = Tensor::full(&[2, 7, 7], 5.0);
        let k = seq(&[3, 2, 3, 3], |i| if i % 9 == 4 { -8.0 } else { 1.0 });
        let y = conv2d_periodic(&x, &k, None).unwrap();
        assert!(y.data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn matches_modular_reference() {
        let x = seq(&[2, 6, 7], |i| ((i * 7919) % 13) as f64 - 6.0);
        let k = seq(&[3, 2, 5, 5], |i| ((i * 31) % 11) as f64 * 0.1 - 0.5);
        let b = [0.1, -0.2, 0.3];
        let y = conv2d_periodic(&x, &k, Some(&Tensor::new(vec![3], b.to_vec()).unwrap())).unwrap();
        let r = reference(&x, &k, &b);
        for (a, e) in y.data().iter().zip(&r) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn laplacian_of_sine_is_second_order_accurate() {
        let mut errs = Vec::new();
        for n in [32usize, 64] {
            let h = 1.0 / n as f64;
            let x = seq(&[1, n, n], |i| (2.0 * PI * (i % n) as f64 * h).sin());
            let k = Tensor::new(vec![1, 1, 3, 3], laplacian_stencil(h).to_vec()).unwrap();
            let y = conv2d_periodic(&x, &k, None).unwrap();
            let err = y
                .data()
                .iter()
                .zip(x.data())
                .map(|(l, u)| (l + (2.0 * PI).powi(2) * u).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        // (2π)^4 h²/12 bounds the truncation error.
        assert!(errs[1] < (2.0 * PI).powi(4) / (64.0f64.powi(2) * 12.0) * 1.01);
        assert!((errs[0] / errs[1] - 4.0).abs() < 0.05);
    }

    #[test]
    fn shape_errors_name_the_dimension() {
        let x = Tensor::zeros(&[2, 4, 4]);
        let err = conv2d_periodic(&x, &Tensor::zeros(&[1, 3, 3, 3]), None).unwrap_err();
        assert!(err.to_string().contains("kernel input channels"));
        let err = conv2d_periodic(&x, &Tensor::zeros(&[1, 2, 5, 5]), None).unwrap_err();
        assert!(err.to_string().contains("input height"));
        let err =
            conv2d_periodic(&x, &Tensor::zeros(&[1, 2, 3, 3]), Some(&Tensor::zeros(&[2]))).unwrap_err();
        assert!(err.to_string().contains("bias length"));
        assert!(conv2d_periodic(&x, &Tensor::zeros(&[1, 2, 2, 2]), None).is_err());
    }
}
