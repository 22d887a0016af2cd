use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::spectra::radial_bin_map;

fn random_field(rng: &mut ChaCha8Rng, shape: [usize; 4]) -> Field {
    Field::from_fn(shape, |_, _, _, _| rng.random_range(-1.0..1.0)).unwrap()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(1e-300)
}

/// Cutoffs that give three non-degenerate bands where the grid allows it.
fn spec_for(nx: usize, ny: usize) -> RadialSpec {
    let m1 = radial_bin_map(nx, ny, 1, 2).unwrap().n_bins();
    let lo = (m1 / 3).max(1);
    let hi = (2 * m1 / 3).max(lo + 1);
    radial_bin_map(nx, ny, lo, hi).unwrap()
}

#[test]
fn oracle_suite_random_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for case in 0..100 {
        let nx = 2 * rng.random_range(2..=16);
        let ny = 2 * rng.random_range(2..=16);
        let b = rng.random_range(1..=3);
        let c = rng.random_range(1..=2);
        let p = random_field(&mut rng, [b, c, nx, ny]).with_lengths(1.0 + case as f64 * 0.01, 2.0);
        let y = random_field(&mut rng, [b, c, nx, ny]).with_lengths(1.0 + case as f64 * 0.01, 2.0);
        let tol = 1e-9;
        let ctx = format!("case {case} [{b},{c},{nx},{ny}]");
        assert!(close(rmse(&p, &y).unwrap(), reference::rmse(&p, &y), tol), "rmse {ctx}");
        assert!(close(nrmse(&p, &y).unwrap(), reference::nrmse(&p, &y), tol), "nrmse {ctx}");
        assert!(close(max_error(&p, &y).unwrap(), reference::max_error(&p, &y), tol), "max {ctx}");
        assert!(close(brmse(&p, &y).unwrap(), reference::brmse(&p, &y), tol), "brmse {ctx}");
        assert!(close(crmse(&p, &y).unwrap(), reference::crmse(&p, &y), tol), "crmse {ctx}");
        assert!(close(vrmse(&p, &y).unwrap(), reference::vrmse(&p, &y, VRMSE_EPS), tol), "vrmse {ctx}");
        let (m, w) = melr_wlr(&p, &y).unwrap();
        let (rm, rw) = reference::melr_wlr(&p, &y);
        assert!(close(m, rm, tol) && close(w, rw, tol), "melr/wlr {ctx}");
        let spec = spec_for(nx, ny);
        let (il, ih) = spec.cutoffs();
        let got = frmse_bands(&p, &y, &spec).unwrap();
        let want = reference::frmse_bands(&p, &y, il, ih);
        for (g, r) in [(got.0, want.0), (got.1, want.1), (got.2, want.2)] {
            assert!(close(g, r, tol) || (g == 0.0 && r == 0.0), "frmse {ctx}: {got:?} vs {want:?}");
        }
        let steps = [p.clone(), y.clone()];
        let other = [y.clone(), p.clone()];
        let pr = pearson_by_timestep(&steps, &other).unwrap();
        let rr = reference::pearson_by_timestep(&steps, &other);
        assert!(pr.iter().zip(&rr).all(|(a, b)| close(*a, *b, tol)), "pearson {ctx}");
    }
}

#[test]
fn odd_grids_for_spatial_metrics() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..20 {
        let nx = rng.random_range(2..=33);
        let ny = rng.random_range(2..=33);
        let p = random_field(&mut rng, [2, 1, nx, ny]);
        let y = random_field(&mut rng, [2, 1, nx, ny]);
        assert!(close(brmse(&p, &y).unwrap(), reference::brmse(&p, &y), 1e-9));
        assert!(close(crmse(&p, &y).unwrap(), reference::crmse(&p, &y), 1e-9));
        assert!(close(nrmse(&p, &y).unwrap(), reference::nrmse(&p, &y), 1e-9));
    }
}

#[test]
fn trivial_fixtures() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let y = random_field(&mut rng, [2, 2, 8, 8]);
    let spec = spec_for(8, 8);
    let r = MetricReport::evaluate(&[y.clone()], &[y.clone()], &spec).unwrap();
    assert!(r.overall.named().iter().all(|&(_, v)| v == 0.0), "{r:?}");
    assert_eq!(r.pearson_by_t, vec![1.0]);

    let doubled = y.map(|v| 2.0 * v).unwrap();
    assert!(close(nrmse(&doubled, &y).unwrap(), 1.0, 1e-15));

    // energy scaled by e in every bin: log ratio is exactly 1 everywhere
    let scaled = y.map(|v| v * std::f64::consts::E.sqrt()).unwrap();
    let (m, w) = melr_wlr(&scaled, &y).unwrap();
    assert!(close(m, 1.0, 1e-12) && close(w, 1.0, 1e-12), "{m} {w}");
}

#[test]
fn hand_examples() {
    let (m, w) = log_ratio(&[std::f64::consts::E, 3.0], &[1.0, 3.0]).unwrap();
    assert!(close(m, 0.5, 1e-15) && close(w, 0.25, 1e-15));
    // a zero reference bin is skipped, a zero predicted bin is clamped
    let (m, _) = log_ratio(&[5.0, 1.0], &[0.0, 1.0]).unwrap();
    assert_eq!(m, 0.0);
    assert!(log_ratio(&[0.0, 1.0], &[1.0, 1.0]).unwrap().0.is_finite());
    assert!(log_ratio(&[1.0], &[0.0]).is_none());

    let y = Field::from_fn([1, 1, 4, 4], |_, _, x, yy| (x * 4 + yy) as f64 + 1.0).unwrap();
    let mut p = y.clone().into_data();
    p[5] += 0.5;
    let p = Field::new(p, [1, 1, 4, 4]).unwrap();
    assert_eq!(max_error(&p, &y).unwrap(), 0.5);
    // interior-only error is invisible at the boundary
    assert_eq!(brmse(&p, &y).unwrap(), 0.0);
    let shifted = y.map(|v| v + 0.25).unwrap();
    assert!(close(crmse(&shifted, &y).unwrap(), 0.25, 1e-15));
    assert!(close(brmse(&shifted, &y).unwrap(), 0.25, 1e-15));
    let zero_mean = Field::from_fn([1, 1, 4, 4], |_, _, x, _| if x < 2 { 1.0 } else { -1.0 }).unwrap();
    assert_eq!(crmse(&y.axpby(1.0, &zero_mean, 1.0).unwrap(), &y).unwrap(), 0.0);

    let two = Field::from_fn([1, 2, 2, 2], |_, c, x, yy| if c == 0 { (x + yy) as f64 / 2.0 } else { 3.0 * (x * yy) as f64 }).unwrap();
    assert_eq!(max_error(&two, &Field::zeros([1, 2, 2, 2]).unwrap()).unwrap(), 2.0);

    let mu = y.data().iter().sum::<f64>() / 16.0;
    let flat = y.map(|_| mu).unwrap();
    assert!(close(vrmse(&flat, &y).unwrap(), 1.0, 1e-9));
    let hand = Field::new(vec![1.0, 2.0, 3.0, 4.0], [1, 1, 2, 2]).unwrap();
    let hp = Field::new(vec![1.0, 2.0, 3.0, 6.0], [1, 1, 2, 2]).unwrap();
    // mse = 1, var = 1.25
    assert!(close(vrmse(&hp, &hand).unwrap(), (1.0 / (1.25 + VRMSE_EPS)).sqrt(), 1e-15));

    assert_eq!(rel_pct_diff(3.0, 3.0).unwrap(), 0.0);
    assert!(close(rel_pct_diff(0.8, 1.0).unwrap(), -20.0, 1e-12));
    assert_eq!(rel_pct_diff(2.0, 1.0).unwrap(), 100.0);
    assert!(matches!(rel_pct_diff(1.0, 0.0), Err(Error::DegenerateBaseline)));
}

#[test]
fn degenerate_inputs() {
    let z = Field::zeros([1, 1, 4, 4]).unwrap();
    let p = z.map(|_| 1.0).unwrap();
    assert!(matches!(nrmse(&p, &z), Err(Error::DegenerateTarget(_))));
    assert!(matches!(melr_wlr(&p, &z), Err(Error::DegenerateTarget(_))));
    assert!(matches!(rmse(&p, &Field::zeros([1, 1, 4, 2]).unwrap()), Err(Error::Shape(_))));
    // constant fields: clamped denominator, no NaN
    assert_eq!(pearson(&[1.0; 4], &[2.0; 4]), 0.0);
}

#[test]
fn pearson_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let y = random_field(&mut rng, [2, 1, 8, 8]);
    let affine = y.map(|v| 3.0 * v - 2.0).unwrap();
    let neg = y.map(|v| -v).unwrap();
    let r = pearson_by_timestep(&[affine, neg], &[y.clone(), y.clone()]).unwrap();
    assert!(close(r[0], 1.0, 1e-12) && close(r[1], -1.0, 1e-12));
}

#[test]
fn frmse_shares_loss_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let p = random_field(&mut rng, [2, 3, 16, 16]);
    let y = random_field(&mut rng, [2, 3, 16, 16]);
    let spec = radial_bin_map(16, 16, 2, 5).unwrap();
    let bands = radial_freq_loss(&p, &y, &spec, &LossConfig::default()).unwrap().bands;
    assert_eq!(frmse_bands(&p, &y, &spec).unwrap(), bands.means());
}

#[test]
fn report_serialisation() {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let spec = spec_for(8, 8);
    let p: Vec<Field> = (0..3).map(|_| random_field(&mut rng, [2, 1, 8, 8])).collect();
    let y: Vec<Field> = (0..3).map(|_| random_field(&mut rng, [2, 1, 8, 8])).collect();
    let r = MetricReport::evaluate(&p, &y, &spec).unwrap();
    assert_eq!(r.by_step.len(), 3);
    let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(v["nrmse"].as_f64().unwrap(), r.overall.nrmse);
    assert_eq!(v["pearson_by_t"].as_array().unwrap().len(), 3);
    let back: MetricReport = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(back, r);
    let mut buf = Vec::new();
    r.write_csv_to(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "metric,timestep,value");
    assert_eq!(lines.len(), 1 + 11 + 3 * 11 + 3);
    assert!(lines[1].starts_with("rmse,all,"));
    assert!(lines.last().unwrap().starts_with("pearson,2,"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn nrmse_scale_invariant(seed in any::<u64>(), a in prop_oneof![-5.0..-0.1f64, 0.1..5.0f64]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_field(&mut rng, [2, 2, 6, 6]);
        let y = random_field(&mut rng, [2, 2, 6, 6]);
        let base = nrmse(&p, &y).unwrap();
        let scaled = nrmse(&p.map(|v| a * v).unwrap(), &y.map(|v| a * v).unwrap()).unwrap();
        prop_assert!(close(scaled, base, 1e-12));
    }

    #[test]
    fn pearson_affine_invariant(seed in any::<u64>(), a in 0.1..10.0f64, b in -5.0..5.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_field(&mut rng, [1, 1, 8, 8]);
        let y = random_field(&mut rng, [1, 1, 8, 8]);
        let base = pearson(p.data(), y.data());
        let moved: Vec<f64> = p.data().iter().map(|v| a * v + b).collect();
        prop_assert!((pearson(&moved, y.data()) - base).abs() < 1e-12);
    }

    #[test]
    fn boundary_and_conservation_depend_on_residual_only(seed in any::<u64>(), shift in -10.0..10.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_field(&mut rng, [2, 1, 8, 6]);
        let y = random_field(&mut rng, [2, 1, 8, 6]);
        let off = random_field(&mut rng, [2, 1, 8, 6]).map(|v| v * shift).unwrap();
        let (p2, y2) = (p.axpby(1.0, &off, 1.0).unwrap(), y.axpby(1.0, &off, 1.0).unwrap());
        prop_assert!(close(brmse(&p2, &y2).unwrap(), brmse(&p, &y).unwrap(), 1e-9));
        prop_assert!(close(crmse(&p2, &y2).unwrap(), crmse(&p, &y).unwrap(), 1e-6));
    }

    #[test]
    fn errors_nonnegative(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_field(&mut rng, [1, 2, 8, 8]);
        let y = random_field(&mut rng, [1, 2, 8, 8]);
        let s = ScalarMetrics::compute(&p, &y, &spec_for(8, 8)).unwrap();
        prop_assert!(s.named().iter().all(|&(_, v)| v >= 0.0 && v.is_finite()));
    }
}
