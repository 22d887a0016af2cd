use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::tensor_fft::Field;

fn plane(nx: usize, ny: usize, f: impl Fn(f64, f64) -> f64) -> Field {
    Field::from_fn([1, 1, nx, ny], |_, _, i, j| f(i as f64 / nx as f64, j as f64 / ny as f64)).unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn l2(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[test]
fn heat_single_mode_decays_exactly() {
    let (nu, t) = (0.01, 0.7);
    let u0 = plane(16, 16, |x, _| (TAU * x).sin());
    let u = advdiff_evolve(&u0, nu, (0.0, 0.0), t).unwrap();
    let decay = (-nu * TAU * TAU * t).exp();
    let expect: Vec<f64> = u0.data().iter().map(|v| v * decay).collect();
    assert!(max_diff(u.data(), &expect) < 1e-12);
}

#[test]
fn heat_keeps_constants_and_nu_zero_is_identity() {
    let c = plane(8, 8, |_, _| 1.5);
    let u = advdiff_evolve(&c, 0.3, (0.0, 0.0), 2.0).unwrap();
    assert!(max_diff(u.data(), c.data()) < 1e-13);

    let ds = gen_heat(2, 16, 16, 4, 0.0, 0.1, 5, IcSpec::default()).unwrap();
    for t in 1..4 {
        assert!(max_diff(ds.frame(1, t).unwrap().data(), ds.frame(1, 0).unwrap().data()) < 1e-12);
    }
}

#[test]
fn advection_shifts_by_one_cell() {
    let n = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let u0 = Field::new(random_ic(n, n, 4, &mut rng), [1, 1, n, n]).unwrap();
    // velocity 1 in x for time 1/n moves the field one cell
    let u = advdiff_evolve(&u0, 0.0, (1.0, 0.0), 1.0 / n as f64).unwrap();
    for i in 0..n {
        for j in 0..n {
            let src = u0.get(0, 0, (i + n - 1) % n, j);
            assert!((u.get(0, 0, i, j) - src).abs() < 1e-12);
        }
    }
    let later = advdiff_evolve(&u0, 0.0, (0.3, -0.7), 2.3).unwrap();
    assert!((l2(later.data()) - l2(u0.data())).abs() < 1e-10 * l2(u0.data()));
}

#[test]
fn advdiff_with_zero_velocity_is_heat() {
    let a = gen_advdiff(2, 16, 16, 3, 0.02, (0.0, 0.0), 0.05, 11, IcSpec::default()).unwrap();
    let h = gen_heat(2, 16, 16, 3, 0.02, 0.05, 11, IcSpec::default()).unwrap();
    assert_eq!(a.data(), h.data());
    assert_eq!(a.meta.pde, "advdiff");
    assert_eq!(h.meta.params["nu"], 0.02);
}

#[test]
fn heat_frames_follow_the_exact_solution() {
    let ds = gen_heat(1, 16, 16, 5, 0.01, 0.1, 2, IcSpec::default()).unwrap();
    let u0 = ds.frame(0, 0).unwrap();
    let u4 = advdiff_evolve(&u0, 0.01, (0.0, 0.0), 0.4).unwrap();
    assert!(max_diff(ds.frame(0, 4).unwrap().data(), u4.data()) < 1e-12);
}

#[test]
fn random_ic_is_real_bandlimited_and_unit_variance() {
    let (n, k) = (32, 6);
    let mut var = 0.0;
    let draws = 200;
    for s in 0..draws {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let u = random_ic(n, n, k, &mut rng);
        var += u.iter().map(|v| v * v).sum::<f64>() / (n * n) as f64;
        let f = Field::new(u, [1, 1, n, n]).unwrap();
        let spec = crate::tensor_fft::rfft2(&f, crate::tensor_fft::NormMode::Backward).unwrap();
        for kx in 0..n {
            for ky in 0..n / 2 + 1 {
                let sx = if kx <= n / 2 { kx } else { n - kx };
                if sx * sx + ky * ky > k * k {
                    assert!(spec.get(0, 0, kx, ky).norm() < 1e-9);
                }
            }
        }
    }
    let var = var / draws as f64;
    assert!((var - 1.0).abs() < 0.1, "mean variance {var}");
}

#[test]
fn random_ic_is_grid_independent() {
    let draw = |n| {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        random_ic(n, n, 8, &mut rng)
    };
    let (coarse, fine) = (draw(32), draw(64));
    for i in 0..32 {
        for j in 0..32 {
            assert!((coarse[i * 32 + j] - fine[2 * i * 64 + 2 * j]).abs() < 1e-12);
        }
    }
}

#[test]
fn ic_band_limit_must_be_resolved() {
    assert_eq!(IcSpec::default().resolve(32, 64).unwrap(), 8);
    assert!(IcSpec { k_max: Some(8) }.resolve(16, 16).is_err());
    assert!(gen_heat(1, 16, 16, 2, 0.1, 0.1, 0, IcSpec { k_max: Some(8) }).is_err());
}

#[test]
fn generator_arguments_validated() {
    assert!(matches!(gen_heat(1, 16, 16, 1, 0.1, 0.1, 0, IcSpec::default()), Err(Error::Config(_))));
    assert!(matches!(gen_heat(0, 16, 16, 3, 0.1, 0.1, 0, IcSpec::default()), Err(Error::Config(_))));
    assert!(matches!(gen_heat(1, 16, 16, 3, -0.1, 0.1, 0, IcSpec::default()), Err(Error::Config(_))));
    assert!(matches!(gen_heat(1, 16, 16, 3, 0.1, 0.0, 0, IcSpec::default()), Err(Error::Config(_))));
}

fn cos_mode(nx: usize, ny: usize, kx: f64, ky: f64) -> Vec<f64> {
    (0..nx * ny)
        .map(|p| (kx * TAU * (p / ny) as f64 / nx as f64 + ky * TAU * (p % ny) as f64 / ny as f64).cos())
        .collect()
}

#[test]
fn kolmogorov_zero_state_stays_zero_without_forcing() {
    let mut s = KolmogorovSolver::new(16, 16, 100.0, 0, 0.01).unwrap();
    let mut w = s.to_spectral(&[0.0; 256]);
    for _ in 0..10 {
        s.step(&mut w).unwrap();
    }
    assert!(w.iter().all(|z| *z == Complex64::default()));
}

#[test]
fn kolmogorov_single_mode_decays_viscously() {
    let (re, h, steps) = (50.0, 0.01, 100);
    let mut s = KolmogorovSolver::new(16, 16, re, 0, h).unwrap();
    let w0 = cos_mode(16, 16, 2.0, 1.0);
    let mut w = s.to_spectral(&w0);
    for _ in 0..steps {
        s.step(&mut w).unwrap();
    }
    let decay = (-5.0 * h * steps as f64 / re).exp();
    let expect: Vec<f64> = w0.iter().map(|v| v * decay).collect();
    assert!(max_diff(&s.to_physical(&w), &expect) < 1e-6);
}

#[test]
fn kolmogorov_conserves_mean_vorticity() {
    let (n, h) = (32, 0.005);
    let mut s = KolmogorovSolver::new(n, n, 200.0, 4, h).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let w0: Vec<f64> = random_ic(n, n, 6, &mut rng).iter().map(|v| v + 0.25).collect();
    let mut w = s.to_spectral(&w0);
    let m0 = w[0].re;
    for _ in 0..50 {
        s.step(&mut w).unwrap();
    }
    assert!((w[0].re - m0).abs() < 1e-12 * m0.abs());
    let mean = |v: &[f64]| v.iter().sum::<f64>() / (n * n) as f64;
    let phys = s.to_physical(&w);
    assert!((mean(&phys) - mean(&w0)).abs() < 1e-10);
}

#[test]
fn forced_flow_fills_high_wavenumbers() {
    let p = KolmogorovParams {
        warmup: 0,
        ..KolmogorovParams::default()
    };
    let ds = gen_kolmogorov(1, 32, 32, 21, &p, 0).unwrap();
    // 20 snapshots of 10 substeps: 200 solver steps
    let last = ds.frame(0, 20).unwrap();
    let spec = crate::tensor_fft::rfft2(&last, crate::tensor_fft::NormMode::Backward).unwrap();
    let (mut hi, mut tot) = (0.0, 0.0);
    for kx in 0..32 {
        for ky in 0..17 {
            let sx = if kx <= 16 { kx } else { 32 - kx } as f64;
            let e = spec.get(0, 0, kx, ky).norm_sqr() * if ky == 0 || ky == 16 { 1.0 } else { 2.0 };
            tot += e;
            if (sx * sx + (ky * ky) as f64).sqrt() > 8.0 {
                hi += e;
            }
        }
    }
    assert!(hi / tot >= 0.05, "fraction above radius 8: {}", hi / tot);
}

#[test]
fn kolmogorov_rejects_large_steps() {
    let mut s = KolmogorovSolver::new(32, 32, 100.0, 4, 1.0).unwrap();
    let w0: Vec<f64> = cos_mode(32, 32, 1.0, 1.0).iter().map(|v| 10.0 * v).collect();
    let mut w = s.to_spectral(&w0);
    w[0] = Complex64::default();
    // a second mode so the nonlinear term is active
    let extra = s.to_spectral(&cos_mode(32, 32, 2.0, 0.0));
    w.iter_mut().zip(&extra).for_each(|(a, b)| *a += 10.0 * b);
    assert!(matches!(s.step(&mut w), Err(Error::StepSize { .. })));
    assert!(KolmogorovSolver::new(12, 12, 100.0, 4, 0.01).is_err());
    assert!(KolmogorovSolver::new(15, 16, 100.0, 1, 0.01).is_err());
    let _ = PI;
}

#[test]
fn kolmogorov_dataset_is_reproducible() {
    let p = KolmogorovParams {
        warmup: 2,
        substeps: 4,
        ..KolmogorovParams::default()
    };
    let a = gen_kolmogorov(2, 16, 16, 3, &p, 7).unwrap();
    let b = gen_kolmogorov(2, 16, 16, 3, &p, 7).unwrap();
    assert_eq!(a.data(), b.data());
    assert_eq!(a.meta.field_names, vec!["vorticity".to_string()]);
    assert_eq!(a.meta.lengths, (TAU, TAU));
}

fn small_dataset() -> Dataset {
    gen_advdiff(3, 8, 8, 4, 0.01, (0.5, -0.25), 0.1, 9, IcSpec::default()).unwrap()
}

#[test]
fn fldb_round_trip_at_single_precision() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_dataset();
    write_dataset(&ds, dir.path()).unwrap();
    let back = read_dataset(dir.path()).unwrap();
    assert_eq!(back.meta, ds.meta);
    let rounded: Vec<f64> = ds.data().iter().map(|&v| v as f32 as f64).collect();
    assert_eq!(back.data(), rounded.as_slice());

    let bytes = std::fs::read(dir.path().join(DATA_FILE)).unwrap();
    assert_eq!(bytes.len(), 4 * 3 * 4 * 8 * 8);
    assert_eq!(&bytes[..4], &(ds.data()[0] as f32).to_le_bytes());
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join(META_FILE)).unwrap()).unwrap();
    assert_eq!(meta["magic"], FLDB_MAGIC);
    assert_eq!(meta["schema_version"], SCHEMA_VERSION);
}

#[test]
fn fldb_write_is_byte_reproducible() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    small_dataset().write(d1.path()).unwrap();
    small_dataset().write(d2.path()).unwrap();
    for f in [META_FILE, DATA_FILE] {
        assert_eq!(std::fs::read(d1.path().join(f)).unwrap(), std::fs::read(d2.path().join(f)).unwrap());
    }
}

fn edit_meta(dir: &std::path::Path, f: impl Fn(&mut serde_json::Value)) {
    let p = dir.join(META_FILE);
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
    f(&mut v);
    std::fs::write(&p, v.to_string()).unwrap();
}

#[test]
fn fldb_rejects_corrupt_inputs() {
    let fresh = || {
        let dir = tempfile::tempdir().unwrap();
        small_dataset().write(dir.path()).unwrap();
        dir
    };
    let is_format = |r: Result<Dataset>| matches!(r, Err(Error::Format { .. }));

    let d = fresh();
    let p = d.path().join(DATA_FILE);
    let bytes = std::fs::read(&p).unwrap();
    std::fs::write(&p, &bytes[..bytes.len() - 4]).unwrap();
    assert!(is_format(read_dataset(d.path())));

    let d = fresh();
    edit_meta(d.path(), |v| v["n_traj"] = 4.into());
    assert!(is_format(read_dataset(d.path())));

    let d = fresh();
    edit_meta(d.path(), |v| v["schema_version"] = 2.into());
    assert!(is_format(read_dataset(d.path())));

    let d = fresh();
    edit_meta(d.path(), |v| v["magic"] = "NOPE".into());
    assert!(is_format(read_dataset(d.path())));

    let d = fresh();
    std::fs::write(d.path().join(META_FILE), "{not json").unwrap();
    assert!(is_format(read_dataset(d.path())));

    let d = fresh();
    let p = d.path().join(DATA_FILE);
    let mut bytes = std::fs::read(&p).unwrap();
    bytes[..4].copy_from_slice(&f32::NAN.to_le_bytes());
    std::fs::write(&p, bytes).unwrap();
    assert!(is_format(read_dataset(d.path())));

    let d = tempfile::tempdir().unwrap();
    assert!(matches!(read_dataset(d.path()), Err(Error::Io { .. })));
}

#[test]
fn pairs_and_windows() {
    let ds = small_dataset();
    let (x, y) = ds.one_step_pairs(1..3).unwrap();
    assert_eq!(x.shape(), [6, 1, 8, 8]);
    assert_eq!(x.batch_range(4, 5).unwrap(), ds.frame(2, 1).unwrap());
    assert_eq!(y.batch_range(4, 5).unwrap(), ds.frame(2, 2).unwrap());

    let (u0, targets) = ds.rollout_window(0..3, 0, 3).unwrap();
    assert_eq!(u0.shape(), [3, 1, 8, 8]);
    assert_eq!(targets.len(), 3);
    assert_eq!(targets[2].batch_range(1, 2).unwrap(), ds.frame(1, 3).unwrap());
    assert!(ds.rollout_window(0..1, 1, 3).is_err());
    assert!(ds.frame(3, 0).is_err());
}

