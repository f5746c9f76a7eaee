use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::tensor::{adam_step, AdamState};

fn small(variant: Variant) -> ModelConfig {
    let mut c = ModelConfig::new(6, 6, 0.1, 0.01);
    c.pi_channels = 3;
    c.modes = [3, 3];
    c.enc_width = 3;
    c.dec_width = 3;
    c.attn_hidden = 2;
    c.variant = variant;
    c.pyconv_init = vec![0.01, 0.02];
    c.seed = 11;
    c
}

fn random_field(c: usize, h: usize, w: usize, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Field::new(c, h, w, (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn random_spectrum(c: usize, h: usize, w: usize, seed: u64) -> ComplexTensor {
    ComplexTensor::new(random_tensor(&[c, h, w], seed), random_tensor(&[c, h, w], seed + 1)).unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Independent periodic cross-correlation with modular indexing.
fn naive_conv(u: &[f64], c_in: usize, h: usize, w: usize, kernel: &Tensor, bias: Option<&[f64]>) -> Vec<f64> {
    let ks = kernel.shape();
    let (c_out, k) = (ks[0], ks[2]);
    let r = (k / 2) as isize;
    let kd = kernel.data();
    let mut out = vec![0.0; c_out * h * w];
    for o in 0..c_out {
        for y in 0..h {
            for x in 0..w {
                let mut acc = bias.map_or(0.0, |b| b[o]);
                for i in 0..c_in {
                    for dy in -r..=r {
                        for dx in -r..=r {
                            let yy = (y as isize + dy).rem_euclid(h as isize) as usize;
                            let xx = (x as isize + dx).rem_euclid(w as isize) as usize;
                            let kidx = ((o * c_in + i) * k + (dy + r) as usize) * k + (dx + r) as usize;
                            acc += kd[kidx] * u[(i * h + yy) * w + xx];
                        }
                    }
                }
                out[(o * h + y) * w + x] = acc;
            }
        }
    }
    out
}

fn value(m: &PeSaNet, name: &str) -> Tensor {
    m.params().get(m.param_id(name).unwrap()).value.clone()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn naive_mlp(m: &PeSaNet, j: usize, x: &[f64]) -> Vec<f64> {
    let (w1, b1) = (value(m, &format!("attention.mlp{j}.w1")), value(m, &format!("attention.mlp{j}.b1")));
    let (w2, b2) = (value(m, &format!("attention.mlp{j}.w2")), value(m, &format!("attention.mlp{j}.b2")));
    let (hid, n) = (w1.shape()[0], w1.shape()[1]);
    let hidden: Vec<f64> = (0..hid)
        .map(|a| (b1.data()[a] + (0..n).map(|b| w1.data()[a * n + b] * x[b]).sum::<f64>()).max(0.0))
        .collect();
    (0..n)
        .map(|a| b2.data()[a] + (0..hid).map(|b| w2.data()[a * hid + b] * hidden[b]).sum::<f64>())
        .collect()
}

#[test]
fn zero_weights_give_identity_step() {
    for v in Variant::ALL {
        let mut m = PeSaNet::new(small(v)).unwrap();
        m.zero_trainable();
        let u = random_field(2, 6, 6, 1);
        assert_eq!(m.step(&u).unwrap(), u, "{}", v.name());
    }
}

#[test]
fn increment_scales_with_dt() {
    let u = random_field(2, 6, 6, 2);
    let a = PeSaNet::new(small(Variant::Full)).unwrap();
    let mut cfg = small(Variant::Full);
    cfg.dt *= 2.0;
    let b = PeSaNet::new(cfg).unwrap();
    let one: Vec<f64> = a.step(&u).unwrap().data().iter().zip(u.data()).map(|(n, o)| n - o).collect();
    let two: Vec<f64> = b.step(&u).unwrap().data().iter().zip(u.data()).map(|(n, o)| n - o).collect();
    let doubled: Vec<f64> = one.iter().map(|x| 2.0 * x).collect();
    assert!(max_diff(&two, &doubled) < 1e-12);
}

#[test]
fn linear_pi_block_gives_exponential_euler_factor() {
    let lambda = -3.0;
    let mut cfg = small(Variant::Full);
    cfg.pi_layers = 1;
    cfg.pi_channels = 2;
    let mut m = PeSaNet::new(cfg).unwrap();
    m.zero_trainable();
    let mut k = Tensor::zeros(&[2, 2, 3, 3]);
    k.data_mut()[4] = lambda;
    k.data_mut()[(2 + 1) * 9 + 4] = lambda;
    m.set_param("pi.kernel.0", k).unwrap();
    m.set_param("pi.proj", Tensor::new(vec![2, 2, 1, 1], vec![1.0, 0.0, 0.0, 1.0]).unwrap())
        .unwrap();
    let u = random_field(2, 6, 6, 3);
    let next = m.step(&u).unwrap();
    let expect: Vec<f64> = u.data().iter().map(|x| (1.0 + lambda * 0.01) * x).collect();
    assert!(max_diff(next.data(), &expect) < 1e-12);
}

#[test]
fn pi_block_is_homogeneous_of_degree_n_l() {
    for n_l in 1..=3 {
        let mut cfg = small(Variant::Full);
        cfg.pi_layers = n_l;
        let mut m = PeSaNet::new(cfg).unwrap();
        for l in 0..n_l {
            m.set_param(&format!("pi.bias.{l}"), Tensor::zeros(&[3])).unwrap();
        }
        let u = random_field(2, 6, 6, 4);
        let a = 1.7;
        let mut au = u.clone();
        au.data_mut().iter_mut().for_each(|x| *x *= a);
        let f = m.pi_block_forward(&u).unwrap();
        let fa = m.pi_block_forward(&au).unwrap();
        let expect: Vec<f64> = f.data().iter().map(|x| a.powi(n_l as i32) * x).collect();
        assert!(max_diff(fa.data(), &expect) < 1e-12, "N_l={n_l}");
    }
}

#[test]
fn pi_block_matches_scalar_oracle() {
    let mut cfg = small(Variant::Full);
    cfg.height = 3;
    cfg.width = 3;
    cfg.modes = [2, 2];
    let m = PeSaNet::new(cfg).unwrap();
    let u = random_field(2, 3, 3, 5);
    let b0 = value(&m, "pi.bias.0");
    let b1 = value(&m, "pi.bias.1");
    let p0 = naive_conv(u.data(), 2, 3, 3, &value(&m, "pi.kernel.0"), Some(b0.data()));
    let p1 = naive_conv(u.data(), 2, 3, 3, &value(&m, "pi.kernel.1"), Some(b1.data()));
    let prod: Vec<f64> = p0.iter().zip(&p1).map(|(a, b)| a * b).collect();
    let expect = naive_conv(&prod, 3, 3, 3, &value(&m, "pi.proj"), None);
    let got = m.pi_block_forward(&u).unwrap();
    assert!(max_diff(got.data(), &expect) < 1e-12);
}

#[test]
fn pyconv_with_known_coefficient_is_scaled_laplacian() {
    let mut cfg = small(Variant::Full);
    cfg.pyconv_init = vec![0.005, 0.005];
    cfg.pyconv_trainable = false;
    let m = PeSaNet::new(cfg).unwrap();
    let u = random_field(2, 6, 6, 6);
    let got = m.pyconv_forward(&u).unwrap();
    for c in 0..2 {
        let lap = crate::pde::laplacian(u.channel(c), 6, 6, 0.1);
        let expect: Vec<f64> = lap.iter().map(|x| 0.005 * x).collect();
        assert!(max_diff(got.channel(c), &expect) < 1e-12);
    }
}

#[test]
fn attention_matches_scalar_oracle() {
    let m = PeSaNet::new(small(Variant::Full)).unwrap();
    let z = random_spectrum(3, 6, 6, 7);
    let (att_re, att_im, processed) = m.spectral_attention(&z).unwrap();
    let pool = |t: &Tensor| -> (Vec<f64>, Vec<f64>) {
        t.data()
            .chunks(36)
            .map(|p| (p.iter().sum::<f64>() / 36.0, p.iter().cloned().fold(f64::NEG_INFINITY, f64::max)))
            .unzip()
    };
    let (avg_x, max_x) = pool(&z.re);
    let (avg_y, max_y) = pool(&z.im);
    let coef = |ja: usize, jm: usize, avg: &[f64], max: &[f64]| -> Vec<f64> {
        naive_mlp(&m, ja, avg)
            .iter()
            .zip(naive_mlp(&m, jm, max))
            .map(|(a, b)| sigmoid(a + b))
            .collect()
    };
    let a = coef(1, 2, &avg_x, &max_x);
    let b = coef(3, 4, &avg_y, &max_y);
    assert!(max_diff(att_re.data(), &a) < 1e-12);
    assert!(max_diff(att_im.data(), &b) < 1e-12);
    assert!(a.iter().chain(&b).all(|&s| s > 0.0 && s < 1.0));
    for c in 0..3 {
        for i in c * 36..(c + 1) * 36 {
            let (x, y) = (z.re.data()[i], z.im.data()[i]);
            assert!((processed.re.data()[i] - (x * a[c] - y * b[c])).abs() < 1e-12);
            assert!((processed.im.data()[i] - (x * b[c] + y * a[c])).abs() < 1e-12);
        }
    }
}

#[test]
fn attention_of_zero_spectrum_is_zero() {
    let m = PeSaNet::new(small(Variant::Full)).unwrap();
    let z = ComplexTensor::new(Tensor::zeros(&[3, 6, 6]), Tensor::zeros(&[3, 6, 6])).unwrap();
    let (_, _, p) = m.spectral_attention(&z).unwrap();
    assert!(p.re.data().iter().chain(p.im.data()).all(|&v| v == 0.0));
}

fn zero_attention(m: &mut PeSaNet) {
    let names: Vec<String> = m
        .params()
        .iter()
        .filter(|(_, p)| p.name.starts_with("attention."))
        .map(|(_, p)| p.name.clone())
        .collect();
    for n in names {
        let shape = value(m, &n).shape().to_vec();
        m.set_param(&n, Tensor::zeros(&shape)).unwrap();
    }
}

#[test]
fn half_coefficients_rotate_one_plus_i_to_i() {
    let mut m = PeSaNet::new(small(Variant::Full)).unwrap();
    zero_attention(&mut m);
    let z = ComplexTensor::new(Tensor::full(&[3, 6, 6], 1.0), Tensor::full(&[3, 6, 6], 1.0)).unwrap();
    let (a, b, p) = m.spectral_attention(&z).unwrap();
    assert!(a.data().iter().chain(b.data()).all(|&s| s == 0.5));
    assert!(p.re.data().iter().all(|&v| v.abs() < 1e-15));
    assert!(p.im.data().iter().all(|&v| (v - 1.0).abs() < 1e-15));
}

/// `(a(k) + conj(a(-k))) / 2` with `a` the per-bin mix of `factor · z` on retained bins.
fn operator_oracle(m: &PeSaNet, z: &ComplexTensor, factor: (f64, f64)) -> ComplexTensor {
    let (rows, cols) = m.retained_modes();
    let (rows, cols) = (rows.to_vec(), cols.to_vec());
    let mix = value(m, "spectral.mix");
    let s = mix.shape().to_vec();
    let (nr, nc, co, ci) = (s[1], s[2], s[3], s[4]);
    let half = nr * nc * co * ci;
    let (h, w) = (z.shape()[1], z.shape()[2]);
    let mut ar = vec![0.0; co * h * w];
    let mut ai = vec![0.0; co * h * w];
    for (ri, &r) in rows.iter().enumerate() {
        for (cj, &c) in cols.iter().enumerate() {
            for o in 0..co {
                for i in 0..ci {
                    let zi = (i * h + r) * w + c;
                    let (x, y) = (z.re.data()[zi], z.im.data()[zi]);
                    let (gx, gy) = (factor.0 * x - factor.1 * y, factor.0 * y + factor.1 * x);
                    let wi = ((ri * nc + cj) * co + o) * ci + i;
                    let (wr, wim) = (mix.data()[wi], mix.data()[half + wi]);
                    ar[(o * h + r) * w + c] += wr * gx - wim * gy;
                    ai[(o * h + r) * w + c] += wr * gy + wim * gx;
                }
            }
        }
    }
    let mut re = vec![0.0; co * h * w];
    let mut im = vec![0.0; co * h * w];
    for o in 0..co {
        for r in 0..h {
            for c in 0..w {
                let k = (o * h + r) * w + c;
                let mk = (o * h + (h - r) % h) * w + (w - c) % w;
                re[k] = 0.5 * (ar[k] + ar[mk]);
                im[k] = 0.5 * (ai[k] - ai[mk]);
            }
        }
    }
    ComplexTensor::new(Tensor::new(vec![co, h, w], re).unwrap(), Tensor::new(vec![co, h, w], im).unwrap()).unwrap()
}

#[test]
fn frequency_operator_with_zeroed_attention_matches_oracle() {
    let mut m = PeSaNet::new(small(Variant::Full)).unwrap();
    zero_attention(&mut m);
    let z = random_spectrum(3, 6, 6, 8);
    let got = m.frequency_domain_operator(&z).unwrap();
    let expect = operator_oracle(&m, &z, (1.5, 0.5));
    assert!(max_diff(got.re.data(), expect.re.data()) < 1e-12);
    assert!(max_diff(got.im.data(), expect.im.data()) < 1e-12);
}

#[test]
fn ablation_operators_match_oracle() {
    let z = random_spectrum(3, 6, 6, 9);
    for (v, factor) in [(Variant::NoSa, (2.0, 0.0)), (Variant::PePlusFourier, (1.0, 0.0))] {
        let m = PeSaNet::new(small(v)).unwrap();
        let got = m.frequency_domain_operator(&z).unwrap();
        let expect = operator_oracle(&m, &z, factor);
        assert!(max_diff(got.re.data(), expect.re.data()) < 1e-12, "{}", v.name());
        assert!(max_diff(got.im.data(), expect.im.data()) < 1e-12, "{}", v.name());
    }
}

#[test]
fn unretained_modes_are_dropped() {
    let m = PeSaNet::new(small(Variant::Full)).unwrap();
    // Retained wavenumbers are |k| < 3 on an axis of 6, so only index 3 is dropped.
    assert_eq!(m.retained_modes().0, &[0, 1, 2, 4, 5]);
    let mut re = Tensor::zeros(&[3, 6, 6]);
    let mut im = Tensor::zeros(&[3, 6, 6]);
    for c in 0..3 {
        for k in 0..6 {
            re.data_mut()[(c * 6 + 3) * 6 + k] = 1.0 + k as f64;
            im.data_mut()[(c * 6 + k) * 6 + 3] = -2.0;
        }
    }
    let out = m.frequency_domain_operator(&ComplexTensor::new(re, im).unwrap()).unwrap();
    assert!(out.re.data().iter().chain(out.im.data()).all(|&v| v == 0.0));
}

#[test]
fn operator_is_linear_without_attention() {
    let m = PeSaNet::new(small(Variant::NoSa)).unwrap();
    let (a, b) = (random_spectrum(3, 6, 6, 10), random_spectrum(3, 6, 6, 12));
    let (alpha, beta) = (0.7, -1.3);
    let mix = |x: &Tensor, y: &Tensor| -> Vec<f64> { x.data().iter().zip(y.data()).map(|(p, q)| alpha * p + beta * q).collect() };
    let combo = ComplexTensor::new(
        Tensor::new(vec![3, 6, 6], mix(&a.re, &b.re)).unwrap(),
        Tensor::new(vec![3, 6, 6], mix(&a.im, &b.im)).unwrap(),
    )
    .unwrap();
    let (oa, ob, oc) = (
        m.frequency_domain_operator(&a).unwrap(),
        m.frequency_domain_operator(&b).unwrap(),
        m.frequency_domain_operator(&combo).unwrap(),
    );
    assert!(max_diff(oc.re.data(), &mix(&oa.re, &ob.re)) < 1e-12);
    assert!(max_diff(oc.im.data(), &mix(&oa.im, &ob.im)) < 1e-12);
}

#[test]
fn zero_encoder_silences_spectral_block() {
    let mut m = PeSaNet::new(small(Variant::Full)).unwrap();
    m.set_param("spectral.encoder", Tensor::zeros(&[3, 2, 1, 1])).unwrap();
    let out = m.spectral_block_forward(&random_field(2, 6, 6, 13)).unwrap();
    assert!(out.data().iter().all(|&v| v == 0.0));
}

#[test]
fn every_variant_preserves_state_shape() {
    let u = random_field(2, 6, 6, 14);
    for v in Variant::ALL {
        let m = PeSaNet::new(small(v)).unwrap();
        let next = m.step(&u).unwrap();
        assert_eq!(next.shape(), [2, 6, 6], "{}", v.name());
        assert!(next.is_finite());
    }
}

#[test]
fn parameter_accounting() {
    let count = |v| PeSaNet::new(small(v)).unwrap().params().trainable_count();
    let (ew, hid) = (3, 2);
    let mlp = hid * ew + hid + ew * hid + ew;
    assert_eq!(count(Variant::Full) - count(Variant::NoSa), 4 * mlp);
    assert_eq!(count(Variant::NoSa), count(Variant::PePlusFourier));

    let no_pe = PeSaNet::new(small(Variant::NoPe)).unwrap();
    assert_eq!(no_pe.trainable_count_with_prefix("pi."), 0);
    assert_eq!(no_pe.trainable_count_with_prefix("pyconv."), 0);
    assert!(no_pe.param_id("pyconv.stencil").is_none());

    let full = PeSaNet::new(small(Variant::Full)).unwrap();
    // Two branches of 3x2x3x3 kernels plus 3 biases, then a 2x3 projection.
    assert_eq!(full.trainable_count_with_prefix("pi."), 2 * (54 + 3) + 6);
    // The stencil is frozen; only the two coefficients train.
    assert_eq!(full.trainable_count_with_prefix("pyconv."), 2);
    // Encoder 3x2, mix 2x5x5x3x3, decoder 2x3.
    assert_eq!(full.trainable_count_with_prefix("spectral."), 6 + 450 + 6);
}

#[test]
fn shared_parameters_have_identical_init_across_variants() {
    let full = PeSaNet::new(small(Variant::Full)).unwrap();
    for v in [Variant::NoSa, Variant::NoPe, Variant::PePlusFourier] {
        let other = PeSaNet::new(small(v)).unwrap();
        let mut shared = 0;
        for (_, p) in other.params().iter() {
            let q = &full.params().get(full.param_id(&p.name).unwrap()).value;
            assert_eq!(&p.value, q, "{} in {}", p.name, v.name());
            shared += 1;
        }
        assert!(shared > 0);
    }
    let mut cfg = small(Variant::Full);
    cfg.seed = 12;
    let reseeded = PeSaNet::new(cfg).unwrap();
    assert_ne!(value(&reseeded, "spectral.mix"), value(&full, "spectral.mix"));
}

fn loss_on(m: &PeSaNet, u: &Field, target: &Field) -> (Tape, Var, Bound, Var) {
    let mut tape = Tape::new();
    let bound = m.bind(&mut tape);
    let x = tape.leaf(u.to_tensor(), true);
    let y = tape.constant(target.to_tensor());
    let one = m.step_on(&mut tape, &bound, x).unwrap();
    let two = m.step_on(&mut tape, &bound, one).unwrap();
    let loss = tape.mse(two, y).unwrap();
    (tape, loss, bound, x)
}

#[test]
fn stencil_survives_training_bit_for_bit() {
    let mut m = PeSaNet::new(small(Variant::Full)).unwrap();
    let stencil_id = m.param_id("pyconv.stencil").unwrap();
    let before: Vec<u64> = m.params().get(stencil_id).value.data().iter().map(|v| v.to_bits()).collect();
    let coef_before = value(&m, "pyconv.coef");
    let u = random_field(2, 6, 6, 15);
    let target = random_field(2, 6, 6, 16);
    let mut adam = AdamState::new(m.params());
    for _ in 0..100 {
        let (mut tape, loss, _, _) = loss_on(&m, &u, &target);
        tape.backward(loss).unwrap();
        let grads = tape.param_grads(m.params());
        assert!(grads[stencil_id.index()].is_none());
        m.params_mut().zero_grad();
        m.params_mut().accumulate(&grads).unwrap();
        adam_step(m.params_mut(), &mut adam, 1e-3).unwrap();
    }
    let after: Vec<u64> = m.params().get(stencil_id).value.data().iter().map(|v| v.to_bits()).collect();
    assert_eq!(before, after);
    assert_ne!(value(&m, "pyconv.coef"), coef_before);
}

#[test]
fn gradients_match_finite_differences() {
    for v in Variant::ALL {
        let m = PeSaNet::new(small(v)).unwrap();
        let u = random_field(2, 6, 6, 17);
        let target = random_field(2, 6, 6, 18);
        let (mut tape, loss, bound, x) = loss_on(&m, &u, &target);
        tape.backward(loss).unwrap();
        let eval = |m: &PeSaNet, u: &Field| tape_loss(m, u, &target);
        let check = |analytic: f64, numeric: f64, what: &str| {
            let scale = analytic.abs().max(numeric.abs()).max(1e-6);
            assert!((analytic - numeric).abs() / scale < 1e-4, "{} {what}: {analytic} vs {numeric}", v.name());
        };
        let eps = 1e-5;
        for (id, p) in m.params().iter().filter(|(_, p)| p.trainable) {
            let g = tape.grad(bound.var(id)).expect("trainable leaf reached");
            for idx in [0, p.value.numel() / 2, p.value.numel() - 1] {
                let mut plus = m.clone();
                plus.params_mut().get_mut(id).value.data_mut()[idx] += eps;
                let mut minus = m.clone();
                minus.params_mut().get_mut(id).value.data_mut()[idx] -= eps;
                let numeric = (eval(&plus, &u) - eval(&minus, &u)) / (2.0 * eps);
                check(g.data()[idx], numeric, &format!("{}[{idx}]", p.name));
            }
        }
        let gx = tape.grad(x).unwrap();
        for idx in [0, 17, 71] {
            let mut plus = u.clone();
            plus.data_mut()[idx] += eps;
            let mut minus = u.clone();
            minus.data_mut()[idx] -= eps;
            let numeric = (eval(&m, &plus) - eval(&m, &minus)) / (2.0 * eps);
            check(gx.data()[idx], numeric, &format!("state[{idx}]"));
        }
    }
}

fn tape_loss(m: &PeSaNet, u: &Field, target: &Field) -> f64 {
    let (tape, loss, _, _) = loss_on(m, u, target);
    tape.value(loss).item()
}

#[test]
fn wrong_state_shape_names_dimension() {
    let m = PeSaNet::new(small(Variant::Full)).unwrap();
    let err = m.step(&random_field(2, 6, 5, 19)).unwrap_err();
    assert!(matches!(err, Error::ShapeMismatch { dim: "width", expected: 6, got: 5, .. }), "{err}");
    let err = m.step(&random_field(3, 6, 6, 19)).unwrap_err();
    assert!(matches!(err, Error::ShapeMismatch { dim: "channels", .. }), "{err}");
}

#[test]
fn non_finite_step_is_reported() {
    let mut m = PeSaNet::new(small(Variant::Full)).unwrap();
    m.set_param("pyconv.coef", Tensor::new(vec![2], vec![1e308, 1e308]).unwrap()).unwrap();
    let u = random_field(2, 6, 6, 20);
    assert!(matches!(m.step(&u), Err(Error::BlowUp { .. })));
}

#[test]
fn config_validation() {
    let bad = |f: fn(&mut ModelConfig)| {
        let mut c = small(Variant::Full);
        f(&mut c);
        assert!(matches!(PeSaNet::new(c), Err(Error::Config(_))));
    };
    bad(|c| c.pi_layers = 0);
    bad(|c| c.kernel_size = 4);
    bad(|c| c.modes = [5, 3]);
    bad(|c| c.modes = [0, 3]);
    bad(|c| c.pyconv_init = vec![1.0]);
    bad(|c| c.dt = 0.0);
    assert!("full".parse::<Variant>().is_ok());
    assert_eq!("pe_plus_fourier".parse::<Variant>().unwrap(), Variant::PePlusFourier);
    assert!("fno".parse::<Variant>().is_err());
}

#[test]
fn config_json_rejects_unknown_fields() {
    let mut json = serde_json::to_value(small(Variant::NoSa)).unwrap();
    assert_eq!(json["variant"], "no_sa");
    json["extra"] = 1.into();
    assert!(serde_json::from_value::<ModelConfig>(json).is_err());
}

#[test]
fn retained_index_sets() {
    assert_eq!(retained_indices(1, 8), vec![0]);
    assert_eq!(retained_indices(3, 8), vec![0, 1, 2, 6, 7]);
    assert_eq!(retained_indices(5, 8), (0..8).collect::<Vec<_>>());
    assert_eq!(retained_indices(4, 6), (0..6).collect::<Vec<_>>());
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.psck");
    let mut m = PeSaNet::new(small(Variant::Full)).unwrap();
    m.set_param("pyconv.coef", Tensor::new(vec![2], vec![0.1 + 0.2, -1e-300]).unwrap()).unwrap();
    save_checkpoint(&m, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back.config(), m.config());
    for ((_, a), (_, b)) in back.params().iter().zip(m.params().iter()) {
        assert_eq!(a.name, b.name);
        assert_eq!(a.trainable, b.trainable);
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.value), bits(&b.value));
    }
    let u = random_field(2, 6, 6, 21);
    assert_eq!(back.step(&u).unwrap(), m.step(&u).unwrap());
    assert_eq!(&std::fs::read(&path).unwrap()[..5], b"PSCK\x01");
}

#[test]
fn checkpoint_corruption_is_detected() {
    let m = PeSaNet::new(small(Variant::Full)).unwrap();
    let bytes = encode_checkpoint(&m).unwrap();

    let mut bad = bytes.clone();
    bad[1] = b'X';
    assert!(matches!(decode_checkpoint(&bad), Err(Error::BadMagic { .. })));

    let mut bad = bytes.clone();
    bad[4] = 9;
    assert!(matches!(decode_checkpoint(&bad), Err(Error::UnsupportedVersion(9))));

    assert!(matches!(decode_checkpoint(&bytes[..bytes.len() - 8]), Err(Error::Truncated(_))));

    let mut extra = bytes.clone();
    extra.push(0);
    assert!(matches!(decode_checkpoint(&extra), Err(Error::SizeMismatch { .. })));
}

#[test]
fn checkpoint_must_match_config_skeleton() {
    // Records from a full model cannot load under a config for another variant.
    let full = PeSaNet::new(small(Variant::Full)).unwrap();
    let no_sa = PeSaNet::new(small(Variant::NoSa)).unwrap();
    let bytes = encode_checkpoint(&full).unwrap();
    let len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let config = serde_json::to_vec(no_sa.config()).unwrap();
    let mut spliced = bytes[..5].to_vec();
    spliced.extend_from_slice(&(config.len() as u32).to_le_bytes());
    spliced.extend_from_slice(&config);
    spliced.extend_from_slice(&bytes[9 + len..]);
    assert!(matches!(decode_checkpoint(&spliced), Err(Error::CheckpointMismatch(_))));

    // Same parameter count, different shape.
    let mut wide = small(Variant::Full);
    wide.pi_channels = 4;
    let config = serde_json::to_vec(&wide).unwrap();
    let mut spliced = bytes[..5].to_vec();
    spliced.extend_from_slice(&(config.len() as u32).to_le_bytes());
    spliced.extend_from_slice(&config);
    spliced.extend_from_slice(&bytes[9 + len..]);
    match decode_checkpoint(&spliced) {
        Err(Error::CheckpointMismatch(msg)) => assert!(msg.contains("pi.kernel.0"), "{msg}"),
        other => panic!("unexpected {other:?}"),
    }
}
