use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random_field(shape: [usize; 4], seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Field::from_fn(shape, |_, _, _, _| rng.random_range(-1.0..1.0)).unwrap()
}

/// O(N^2) DFT of one plane over the full spectrum.
fn naive_dft(plane: &[f64], nx: usize, ny: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); nx * ny];
    for kx in 0..nx {
        for ky in 0..ny {
            let mut acc = Complex64::default();
            for x in 0..nx {
                for y in 0..ny {
                    let th = -2.0 * PI * ((kx * x) as f64 / nx as f64 + (ky * y) as f64 / ny as f64);
                    acc += plane[x * ny + y] * Complex64::from_polar(1.0, th);
                }
            }
            out[kx * ny + ky] = acc;
        }
    }
    out
}

#[test]
fn constant_field_has_only_dc() {
    let f = Field::from_fn([1, 1, 4, 4], |_, _, _, _| 2.5).unwrap();
    let s = rfft2(&f, NormMode::Backward).unwrap();
    assert_eq!(s.shape(), [1, 1, 4, 3]);
    for kx in 0..4 {
        for ky in 0..3 {
            let z = s.get(0, 0, kx, ky);
            if kx == 0 && ky == 0 {
                assert!((z.re - 40.0).abs() < 1e-12 && z.im.abs() < 1e-12);
            } else {
                assert!(z.norm() < 1e-12);
            }
        }
    }
}

#[test]
fn cosine_along_x_hits_two_bins() {
    let f = Field::from_fn([1, 1, 8, 8], |_, _, x, _| (2.0 * PI * x as f64 / 8.0).cos()).unwrap();
    let s = rfft2(&f, NormMode::Backward).unwrap();
    for kx in 0..8 {
        for ky in 0..5 {
            let m = s.get(0, 0, kx, ky).norm();
            if ky == 0 && (kx == 1 || kx == 7) {
                assert!((m - 32.0).abs() < 1e-10);
            } else {
                assert!(m < 1e-10, "unexpected energy at ({kx},{ky})");
            }
        }
    }
}

#[test]
fn matches_naive_dft_and_parseval() {
    let f = random_field([1, 1, 6, 6], 7);
    let s = rfft2(&f, NormMode::Backward).unwrap();
    let full = naive_dft(f.plane(0, 0), 6, 6);
    for kx in 0..6 {
        for ky in 0..4 {
            assert!((s.get(0, 0, kx, ky) - full[kx * 6 + ky]).norm() < 1e-12);
        }
    }
    let energy: f64 = f.data().iter().map(|v| v * v).sum();
    let spec: f64 = full.iter().map(|z| z.norm_sqr()).sum::<f64>() / 36.0;
    assert!((energy - spec).abs() / energy < 1e-10);
}

#[test]
fn ortho_is_scaled_backward() {
    let f = random_field([2, 1, 8, 4], 3);
    let b = rfft2(&f, NormMode::Backward).unwrap();
    let o = rfft2(&f, NormMode::Ortho).unwrap();
    let k = 1.0 / 32f64.sqrt();
    for (x, y) in b.data().iter().zip(o.data()) {
        assert!((x * k - y).norm() < 1e-12);
    }
    let back = irfft2(&o, 8, 4, NormMode::Ortho).unwrap();
    for (a, b) in back.data().iter().zip(f.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn irfft2_examples() {
    let zero = SpectralField::new(vec![Complex64::default(); 12], [1, 1, 4, 3], 4, NormMode::Backward).unwrap();
    let f = irfft2(&zero, 4, 4, NormMode::Backward).unwrap();
    assert!(f.data().iter().all(|&v| v == 0.0));

    let mut dc = vec![Complex64::default(); 12];
    dc[0] = Complex64::new(16.0 * 1.75, 0.0);
    let s = SpectralField::new(dc, [1, 1, 4, 3], 4, NormMode::Backward).unwrap();
    let f = irfft2(&s, 4, 4, NormMode::Backward).unwrap();
    assert!(f.data().iter().all(|&v| (v - 1.75).abs() < 1e-14));

    assert!(matches!(irfft2(&s, 4, 6, NormMode::Backward), Err(Error::Shape(_))));
}

#[test]
fn rejects_non_finite() {
    assert!(matches!(
        Field::new(vec![0.0, f64::NAN, 0.0, 0.0], [1, 1, 2, 2]),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn round_trip_on_all_listed_sizes() {
    let sizes = [4, 6, 8, 16, 32, 64];
    for (i, &nx) in sizes.iter().enumerate() {
        for &ny in &sizes {
            let f = random_field([1, 2, nx, ny], (i * 100 + ny) as u64);
            for norm in [NormMode::Backward, NormMode::Ortho] {
                let back = irfft2(&rfft2(&f, norm).unwrap(), nx, ny, norm).unwrap();
                let scale = f.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
                for (a, b) in back.data().iter().zip(f.data()) {
                    assert!((a - b).abs() <= 1e-12 * scale.max(1.0), "{nx}x{ny} {norm:?}");
                }
            }
        }
    }
}

#[test]
fn avg_pool_examples() {
    let f = Field::new(vec![1.0, 3.0, 5.0, 7.0], [1, 1, 2, 2]).unwrap();
    let p = avg_pool2(&f, 2, 2).unwrap();
    assert_eq!(p.shape(), [1, 1, 1, 1]);
    assert_eq!(p.data(), &[4.0]);

    let c = Field::from_fn([2, 1, 8, 8], |_, _, _, _| -0.5).unwrap();
    for k in [1, 2, 4, 8] {
        assert!(avg_pool2(&c, k, k).unwrap().data().iter().all(|&v| v == -0.5));
    }

    let checker = Field::from_fn([1, 1, 4, 4], |_, _, x, y| if (x + y) % 2 == 0 { 1.0 } else { -1.0 }).unwrap();
    assert!(avg_pool2(&checker, 2, 2).unwrap().data().iter().all(|&v| v == 0.0));

    assert!(matches!(avg_pool2(&c, 9, 9), Err(Error::Shape(_))));
}

#[test]
fn interpolate_examples() {
    let one = small_field(vec![3.0], [1, 1, 1, 1]).unwrap();
    let up = interpolate2(&one, 4, 4, InterpMode::Bilinear).unwrap();
    assert!(up.data().iter().all(|&v| v == 3.0));

    let c = Field::from_fn([1, 1, 2, 2], |_, _, _, _| 0.25).unwrap();
    for mode in [InterpMode::Bilinear, InterpMode::Nearest] {
        assert!(interpolate2(&c, 5, 7, mode).unwrap().data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    // golden values for the half-pixel bilinear convention
    let f = Field::new(vec![0.0, 1.0, 0.0, 1.0], [1, 1, 2, 2]).unwrap();
    let up = interpolate2(&f, 2, 4, InterpMode::Bilinear).unwrap();
    assert_eq!(up.data(), &[0.0, 0.25, 0.75, 1.0, 0.0, 0.25, 0.75, 1.0]);

    assert!(matches!("bicubic".parse::<InterpMode>(), Err(Error::Config(_))));
}

#[test]
fn pool_then_upsample_restores_block_constant_field() {
    let f = Field::from_fn([1, 2, 8, 8], |_, c, x, y| (c + 1) as f64 * ((x / 4) * 3 + y / 4) as f64).unwrap();
    let back = interpolate2(&avg_pool2(&f, 4, 4).unwrap(), 8, 8, InterpMode::Nearest).unwrap();
    assert_eq!(back.data(), f.data());
}

proptest! {
    #[test]
    fn rfft2_is_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let f = random_field([1, 1, 8, 6], seed);
        let g = random_field([1, 1, 8, 6], seed + 1);
        let lhs = rfft2(&f.axpby(a, &g, b).unwrap(), NormMode::Backward).unwrap();
        let fs = rfft2(&f, NormMode::Backward).unwrap();
        let gs = rfft2(&g, NormMode::Backward).unwrap();
        for i in 0..lhs.data().len() {
            let rhs = fs.data()[i] * a + gs.data()[i] * b;
            prop_assert!((lhs.data()[i] - rhs).norm() < 1e-12 * 48.0);
        }
    }

    #[test]
    fn parseval_backward(seed in 0u64..1000, nx in 2usize..12, ny in 2usize..12) {
        let f = random_field([1, 1, nx, ny], seed);
        let s = rfft2(&f, NormMode::Backward).unwrap();
        let nyr = half_len(ny);
        let mut spec = 0.0;
        for kx in 0..nx {
            for ky in 0..nyr {
                spec += fft::hermitian_weight(ky, ny) * s.get(0, 0, kx, ky).norm_sqr();
            }
        }
        spec /= (nx * ny) as f64;
        let energy: f64 = f.data().iter().map(|v| v * v).sum();
        prop_assert!((energy - spec).abs() <= 1e-10 * energy);
    }
}
