use kdsr::degradation::{
    degrade, gaussian8_sigmas, AnisotropicSpec, BlurKernel, DegradationSpec, KernelParams,
};
use kdsr::diffops::named::dense;
use kdsr::diffops::{kl_loss, Tensor};
use kdsr::imaging::{pixel_shuffle, pixel_unshuffle, psnr_y, rgb_to_y, Image};
use kdsr::kd_ide::{IdeConfig, KdIde};
use proptest::collection::vec;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn image_from(c: usize, h: usize, w: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::new(
        c,
        h,
        w,
        (0..c * h * w).map(|_| rng.random::<f32>()).collect(),
    )
    .unwrap()
}

fn logits(n: usize, f: usize, values: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(&[n, f], values[..n * f].to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shuffle_inverts_unshuffle(n in 1usize..3, c in 1usize..4, r in 1usize..4, hb in 1usize..4, wb in 1usize..4, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = kdsr::diffops::gradcheck::random_tensor::<f64>(&[n, c, hb * r, wb * r], &mut rng);
        let packed = pixel_unshuffle(&x, r).unwrap();
        prop_assert_eq!(packed.shape(), &[n, c * r * r, hb, wb]);
        let mut a = x.data().to_vec();
        let mut b = packed.data().to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        prop_assert_eq!(a, b);
        prop_assert_eq!(pixel_shuffle(&packed, r).unwrap(), x);
    }

    #[test]
    fn psnr_symmetric_and_falls_with_error(seed: u64, gain in 1.1f32..4.0) {
        let reference = image_from(3, 12, 12, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let noise: Vec<f32> = (0..reference.data().len()).map(|_| rng.random_range(-0.02f32..0.02)).collect();
        let perturbed = |g: f32| {
            let data = reference.data().iter().zip(&noise).map(|(v, n)| v + g * n).collect();
            Image::from_unclamped(3, 12, 12, data).unwrap()
        };
        let (near, far) = (perturbed(1.0), perturbed(gain));
        let p = psnr_y(&reference, &near, 2).unwrap();
        prop_assert!((p - psnr_y(&near, &reference, 2).unwrap()).abs() < 1e-12);
        prop_assert!(psnr_y(&reference, &far, 2).unwrap() < p);
    }

    #[test]
    fn luma_stays_in_studio_range(seed: u64) {
        let y = rgb_to_y(&image_from(3, 5, 7, seed)).unwrap();
        prop_assert!(y.data().iter().all(|&v| (16.0 / 255.0 - 1e-6..=235.0 / 255.0 + 1e-6).contains(&v)));
    }

    #[test]
    fn kernels_are_normalised_and_point_symmetric(
        l1 in 0.2f64..4.0, l2 in 0.2f64..4.0, theta in 0.0f64..std::f64::consts::PI,
        half in 1usize..11,
    ) {
        let size = 2 * half + 1;
        let sigma = l1.sqrt();
        for k in [
            BlurKernel::isotropic(sigma, size).unwrap(),
            BlurKernel::anisotropic(AnisotropicSpec { lambda1: l1, lambda2: l2, theta }, size).unwrap(),
        ] {
            prop_assert!(k.weights().iter().all(|&w| w >= 0.0));
            prop_assert!((k.weights().iter().sum::<f64>() - 1.0).abs() < 1e-6);
            let h = half as isize;
            for dy in -h..=h {
                for dx in -h..=h {
                    prop_assert!((k.weight_at_offset(dx, dy) - k.weight_at_offset(-dx, -dy)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn equal_eigenvalues_reduce_to_isotropic(sigma in 0.2f64..4.0, theta in 0.0f64..std::f64::consts::PI) {
        let iso = BlurKernel::isotropic(sigma, 21).unwrap();
        let spec = AnisotropicSpec { lambda1: sigma * sigma, lambda2: sigma * sigma, theta };
        let aniso = BlurKernel::anisotropic(spec, 21).unwrap();
        for (a, b) in iso.weights().iter().zip(aniso.weights()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn noiseless_degrade_is_linear(seed: u64, a in 0.0f32..0.5, b in 0.0f32..0.5, sigma in 0.2f64..4.0, scale in 1usize..5) {
        let (h, w) = (4 * scale, 3 * scale);
        let x = image_from(3, h, w, seed);
        let y = image_from(3, h, w, seed.wrapping_add(1));
        let mix = Image::new(3, h, w, x.data().iter().zip(y.data()).map(|(p, q)| a * p + b * q).collect()).unwrap();
        let spec = DegradationSpec::isotropic(sigma, scale, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let dx = degrade(&x, &spec, &mut rng).unwrap();
        let dy = degrade(&y, &spec, &mut rng).unwrap();
        let dm = degrade(&mix, &spec, &mut rng).unwrap();
        prop_assert_eq!((dm.height(), dm.width()), (h / scale, w / scale));
        for ((m, p), q) in dm.data().iter().zip(dx.data()).zip(dy.data()) {
            prop_assert!((m - (a * p + b * q)).abs() < 1e-5);
        }
        // identical inputs give identical outputs
        prop_assert_eq!(degrade(&x, &spec, &mut rng).unwrap(), dx);
    }

    #[test]
    fn kl_vanishes_on_equal_logits_and_never_goes_negative(
        n in 1usize..4, f in 2usize..10, p in vec(-8.0f64..8.0, 40), q in vec(-8.0f64..8.0, 40),
    ) {
        let (tp, tq) = (logits(n, f, &p), logits(n, f, &q));
        prop_assert!(kl_loss(&tp, &tp).unwrap().value.abs() < 1e-9);
        prop_assert!(kl_loss(&tp, &tq).unwrap().value >= -1e-9);
    }

    #[test]
    fn kl_ignores_logit_shifts(
        n in 1usize..4, f in 2usize..10, p in vec(-8.0f64..8.0, 40), q in vec(-8.0f64..8.0, 40),
        sp in -50.0f64..50.0, sq in -50.0f64..50.0,
    ) {
        let (tp, tq) = (logits(n, f, &p), logits(n, f, &q));
        let base = kl_loss(&tp, &tq).unwrap().value;
        let shifted = kl_loss(&tp.map(|v| v + sp), &tq.map(|v| v + sq)).unwrap().value;
        prop_assert!((base - shifted).abs() < 1e-9);
    }

    #[test]
    fn compressed_vector_is_affine_in_the_wide_one(seed: u64, alpha in -2.0f64..2.0) {
        let ide = KdIde::new(IdeConfig::student(4, 1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = ide.init_params::<f64>(&mut rng);
        let x = kdsr::diffops::gradcheck::random_tensor::<f64>(&[1, 3, 5, 5], &mut rng);
        let (pair, _) = ide.forward(&params, &x).unwrap();
        prop_assert_eq!(&dense(&params, "compress", &pair.d_prime).unwrap(), &pair.d);
        let u = kdsr::diffops::gradcheck::random_tensor::<f64>(&[1, 16], &mut rng);
        let v = kdsr::diffops::gradcheck::random_tensor::<f64>(&[1, 16], &mut rng);
        let mut mixed = u.clone();
        mixed.scale(alpha);
        mixed.add_scaled(&v, 1.0 - alpha).unwrap();
        let du = dense(&params, "compress", &u).unwrap();
        let dv = dense(&params, "compress", &v).unwrap();
        let dm = dense(&params, "compress", &mixed).unwrap();
        for ((m, a), b) in dm.data().iter().zip(du.data()).zip(dv.data()) {
            prop_assert!((m - (alpha * a + (1.0 - alpha) * b)).abs() < 1e-6);
        }
    }
}

#[test]
fn worked_two_logit_example() {
    let teacher = Tensor::from_vec(&[1, 2], vec![0.0, 0.0]).unwrap();
    let student = Tensor::from_vec(&[1, 2], vec![2f64.ln(), 0.0]).unwrap();
    let expected = 0.5 * (0.75f64).ln() + 0.5 * (1.5f64).ln();
    let got = kl_loss(&teacher, &student).unwrap().value;
    assert!((got - expected).abs() < 1e-12);
    assert!((got - 0.058891).abs() < 1e-6);
}

#[test]
fn kl_nonnegative_on_ten_thousand_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10_000 {
        let f = rng.random_range(2..16);
        let p: Vec<f64> = (0..f).map(|_| rng.random_range(-10.0..10.0)).collect();
        let q: Vec<f64> = (0..f).map(|_| rng.random_range(-10.0..10.0)).collect();
        let v = kl_loss(&logits(1, f, &p), &logits(1, f, &q)).unwrap().value;
        assert!(v >= -1e-9, "{v}");
    }
}

#[test]
fn gaussian8_widths() {
    let got = gaussian8_sigmas();
    for (i, s) in got.iter().enumerate() {
        assert!((s - (1.8 + 0.2 * i as f64)).abs() < 1e-12);
    }
}

#[test]
fn custom_kernels_must_be_valid() {
    assert!(BlurKernel::from_weights(3, vec![1.0; 8]).is_err());
    assert!(BlurKernel::from_weights(4, vec![1.0; 16]).is_err());
    assert!(BlurKernel::from_weights(3, vec![-1.0; 9]).is_err());
    assert!(
        DegradationSpec::new(BlurKernel::delta(3).unwrap(), KernelParams::Custom, 0, 0.0).is_err()
    );
    assert!(
        DegradationSpec::new(BlurKernel::delta(3).unwrap(), KernelParams::Custom, 2, -1.0).is_err()
    );
}
