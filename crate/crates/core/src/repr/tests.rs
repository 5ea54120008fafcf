use super::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// O(n²) oracle: distance from each voxel centre to the nearest site centre.
fn brute_force_edt(mask: &PhaseMask) -> Vec<f64> {
    let h = mask.spacing();
    let sites: Vec<[usize; 3]> = (0..mask.len())
        .filter(|&i| mask.data()[i])
        .map(|i| mask.coords(i))
        .collect();
    (0..mask.len())
        .map(|i| {
            let [x, y, z] = mask.coords(i);
            sites
                .iter()
                .map(|&[a, b, c]| {
                    let d = |p: usize, q: usize| (p as i64 - q as i64).pow(2);
                    ((d(x, a) + d(y, b) + d(z, c)) as f64).sqrt() * h
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

fn random_mask(rng: &mut ChaCha8Rng, dims: [usize; 3], p: f64) -> PhaseMask {
    PhaseMask::from_fn(dims, |_, _, _| rng.random_bool(p))
}

fn ball(n: usize, centre: [f64; 3], r: f64) -> PhaseMask {
    PhaseMask::from_fn([n; 3], |x, y, z| {
        let d2 = (x as f64 - centre[0]).powi(2) + (y as f64 - centre[1]).powi(2) + (z as f64 - centre[2]).powi(2);
        d2 <= r * r
    })
}

#[test]
fn edt_single_centre_voxel() {
    let mut mask = PhaseMask::filled([3; 3], false);
    mask.set(1, 1, 1, true);
    let d = edt(&mask).unwrap();
    let h = 1.0 / 3.0;
    assert_eq!(*d.get(1, 1, 1), 0.0);
    assert_eq!(*d.get(0, 1, 1), h);
    assert_eq!(*d.get(0, 0, 1), 2f64.sqrt() * h);
    assert_eq!(*d.get(2, 2, 2), 3f64.sqrt() * h);
}

#[test]
fn edt_full_and_empty() {
    let d = edt(&PhaseMask::filled([5, 4, 3], true)).unwrap();
    assert!(d.data().iter().all(|&v| v == 0.0));
    assert!(edt(&PhaseMask::filled([5, 4, 3], false)).is_none());
}

#[test]
fn edt_matches_brute_force_on_random_masks() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..50 {
        let dims = [rng.random_range(1..=12), rng.random_range(1..=12), rng.random_range(1..=12)];
        let p = [0.01, 0.05, 0.2, 0.5, 0.9][trial % 5];
        let mut mask = random_mask(&mut rng, dims, p);
        if mask.count() == 0 {
            mask.set(0, 0, 0, true);
        }
        let fast = edt(&mask).unwrap();
        let slow = brute_force_edt(&mask);
        for (a, b) in fast.data().iter().zip(&slow) {
            assert!((a - b).abs() <= 1e-12, "trial {trial}: {a} vs {b}");
        }
    }
}

#[test]
fn half_space_gives_half_voxel_layers() {
    let n = 8;
    let mask = PhaseMask::from_fn([n; 3], |x, _, _| x < n / 2);
    let s = signed_distance(&mask);
    let h = 1.0 / n as f32;
    for y in 0..n {
        for z in 0..n {
            assert_eq!(*s.grid.get(n / 2 - 1, y, z), -h / 2.0);
            assert_eq!(*s.grid.get(n / 2, y, z), h / 2.0);
            assert_eq!(*s.grid.get(0, y, z), -(3.5 * h));
        }
    }
    s.validate().unwrap();
}

#[test]
fn single_phase_sentinels() {
    let s = signed_distance(&PhaseMask::filled([8; 3], true));
    assert!(s.grid.data().iter().all(|&v| v == -(3f32.sqrt())));
    let s = signed_distance(&PhaseMask::filled([8; 3], false));
    assert!(s.grid.data().iter().all(|&v| v == 3f32.sqrt()));
}

#[test]
fn sphere_sdf_tracks_analytic_distance() {
    let n = 48;
    let h = 1.0 / n as f64;
    let mask = ball(n, [24.0; 3], 10.0);
    let s = signed_distance(&mask);
    for x in 0..n {
        let analytic = (x as f64 - 24.0).abs() * h - 10.0 * h;
        let got = *s.grid.get(x, 24, 24) as f64;
        assert!((got - analytic).abs() <= h + 1e-7, "x={x}: {got} vs {analytic}");
    }
}

#[test]
fn tanh_point_values() {
    assert_eq!(tanh_profile(0.0, 0.1), 0.5);
    let eps = 1.0 / 32.0;
    let v = tanh_profile(-2.0 * eps, eps);
    assert!((v - (1.0 + 1f64.tanh()) / 2.0).abs() < 1e-15);
    assert!((v - 0.88079).abs() < 1e-5);
    let grid = VoxelGrid::from_vec([1, 1, 3], vec![0.0, -0.0625, 0.0625]).unwrap();
    let t = to_tanh(&InterfaceField::new(grid, Representation::Sdf), eps).unwrap();
    assert_eq!(t.grid.data()[0], 0.5);
    assert!((t.grid.data()[1] - 0.88079).abs() < 1e-5);
    assert!((t.grid.data()[2] - 0.11920).abs() < 1e-5);
}

#[test]
fn tanh_rejects_bad_epsilon_and_non_sdf() {
    let sdf = signed_distance(&ball(8, [4.0; 3], 2.0));
    assert!(matches!(to_tanh(&sdf, 0.0), Err(Error::Config(_))));
    assert!(matches!(to_tanh(&sdf, -1.0), Err(Error::Config(_))));
    let sharp = to_sharp(&sdf).unwrap();
    assert!(to_tanh(&sharp, 0.1).is_err());
}

fn max_thin_gap(n: usize, eps: f64) -> f32 {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mask = random_mask(&mut rng, [n; 3], 0.3);
    let sdf = signed_distance(&mask);
    let thin = to_tanh(&sdf, eps).unwrap();
    let sharp = to_sharp(&sdf).unwrap();
    thin.grid
        .data()
        .iter()
        .zip(sharp.grid.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max)
}

#[test]
fn thin_tanh_gap_is_set_by_the_half_voxel_offset() {
    // the closest voxels sit at |s| = h/2, so the gap is (1 - tanh(h / 4eps)) / 2
    let eps = 1.0 / 1024.0;
    for n in [32usize, 64] {
        let h = 1.0 / n as f64;
        let floor = (1.0 - (h / (4.0 * eps)).tanh()) / 2.0;
        let gap = max_thin_gap(n, eps) as f64;
        assert!((gap - floor).abs() < 1e-6, "n={n}: {gap} vs {floor}");
    }
    assert!(max_thin_gap(32, eps) < 1e-6);
}

#[test]
fn sharp_point_values() {
    let grid = VoxelGrid::from_vec([3, 1, 1], vec![-0.3, 0.2, 0.0]).unwrap();
    let h = to_sharp(&InterfaceField::new(grid, Representation::Sdf)).unwrap();
    assert_eq!(h.grid.data(), &[1.0, 0.0, 0.5]);
}

#[test]
fn binarize_threshold_rule() {
    let g = VoxelGrid::filled([4; 3], 0.4999);
    let m = binarize(&InterfaceField::new(g, Representation::Tanh { epsilon: 0.1 }));
    assert_eq!(m.count(), 0);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mask = random_mask(&mut rng, [6, 7, 5], 0.4);
    let sharp = InterfaceField::new(mask.to_volume(), Representation::Sharp);
    assert_eq!(binarize(&sharp), mask);
}

#[test]
fn labels_roundtrip() {
    for r in Representation::default_sweep() {
        assert_eq!(Representation::parse_label(&r.label()).unwrap(), r);
    }
    assert_eq!(
        Representation::parse_label("tanh 0.25").unwrap(),
        Representation::Tanh { epsilon: 0.25 }
    );
    assert!(Representation::parse_label("vof").is_err());
}

fn mask_strategy() -> impl Strategy<Value = PhaseMask> {
    (1usize..=9, 1usize..=9, 1usize..=9, any::<u64>(), 0.0f64..=1.0).prop_map(|(a, b, c, seed, p)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        random_mask(&mut rng, [a, b, c], p)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sdf_binarizes_back_to_mask(mask in mask_strategy()) {
        let sdf = signed_distance(&mask);
        prop_assert_eq!(binarize(&sdf), mask.clone());
        sdf.validate().unwrap();
        let sharp = to_sharp(&sdf).unwrap();
        prop_assert_eq!(binarize(&sharp), mask);
    }

    #[test]
    fn tanh_binarizes_back_to_mask(mask in mask_strategy(), log_eps in -4.0f64..0.0) {
        let eps = 10f64.powf(log_eps);
        let sdf = signed_distance(&mask);
        let t = to_tanh(&sdf, eps).unwrap();
        t.validate().unwrap();
        prop_assert_eq!(binarize(&t), mask);
    }

    #[test]
    fn neighbouring_sdf_values_are_lipschitz(mask in mask_strategy()) {
        let sdf = signed_distance(&mask);
        let g = &sdf.grid;
        let h = g.spacing();
        let [nx, ny, nz] = g.dims();
        for z in 0..nz { for y in 0..ny { for x in 0..nx {
            let v = *g.get(x, y, z) as f64;
            for (dx, dy, dz) in [(1, 0, 0), (0, 1, 0), (0, 0, 1)] {
                if x + dx < nx && y + dy < ny && z + dz < nz {
                    let u = *g.get(x + dx, y + dy, z + dz) as f64;
                    prop_assert!((v - u).abs() <= h * 3f64.sqrt() + 1e-6);
                }
            }
        }}}
    }

    #[test]
    fn tanh_is_monotone_in_s(a in -1.0f64..1.0, b in -1.0f64..1.0, log_eps in -3.0f64..0.0) {
        let eps = 10f64.powf(log_eps);
        prop_assume!(a < b && (b - a) / eps > 1e-6 && a.abs() / eps < 15.0 && b.abs() / eps < 15.0);
        prop_assert!(tanh_profile(a, eps) > tanh_profile(b, eps));
    }

    #[test]
    fn thinner_interfaces_are_closer_to_sharp(mask in mask_strategy(), e1 in 1e-3f64..0.5, ratio in 1.01f64..10.0) {
        let sdf = signed_distance(&mask);
        let sharp = to_sharp(&sdf).unwrap();
        let thin = to_tanh(&sdf, e1).unwrap();
        let thick = to_tanh(&sdf, e1 * ratio).unwrap();
        for ((t, k), h) in thin.grid.data().iter().zip(thick.grid.data()).zip(sharp.grid.data()) {
            prop_assert!((t - h).abs() <= (k - h).abs());
        }
    }
}
