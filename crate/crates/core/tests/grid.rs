use cylwalk::grid::{
    build_grid, compute_schedule, default_d, detect_excursions, expected_exit_local_time, floor_three_quarters, hitting_factor,
    parse_ratio, Constraints, GridSpec,
};
use cylwalk::rng::replica_rng;
use cylwalk::walk::{run_lazy_walk, Horizon, LazyWalkParams};
use num_rational::Ratio;
use proptest::prelude::*;

fn ratio_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn structural(a_n: u64, h: u64, d: u64) -> GridSpec {
    GridSpec {
        a_n,
        h,
        d,
        specials: vec![0],
        constraints: Constraints::Structural,
    }
}

/// Dense solve of `(I - P) x = b` for the lazy walk killed outside
/// `(lo, hi)`, with unknowns `lo+1 ..= hi-1`.
fn killed_lazy_solve(lo: i64, hi: i64, gamma: f64, b: &[f64]) -> Vec<f64> {
    let n = (hi - lo - 1) as usize;
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        a[i][i] = gamma;
        if i > 0 {
            a[i][i - 1] = -gamma / 2.0;
        }
        if i + 1 < n {
            a[i][i + 1] = -gamma / 2.0;
        }
    }
    let mut x = b.to_vec();
    // Thomas algorithm
    for i in 1..n {
        let m = a[i][i - 1] / a[i - 1][i - 1];
        a[i][i] -= m * a[i - 1][i];
        x[i] -= m * x[i - 1];
    }
    for i in (0..n).rev() {
        let next = if i + 1 < n { a[i][i + 1] * x[i + 1] } else { 0.0 };
        x[i] = (x[i] - next) / a[i][i];
    }
    x
}

#[test]
fn exit_local_time_matches_a_linear_solve() {
    for (h, gamma) in [(7u64, Ratio::new(1u64, 3)), (12, Ratio::from_integer(1))] {
        let hi = h as i64;
        let n = (2 * h - 1) as usize;
        for target in [-3i64, 0, 5] {
            // Green function column at `target`: visits to target before exit
            let mut b = vec![0.0; n];
            b[(target + hi - 1) as usize] = 1.0;
            let g = killed_lazy_solve(-hi, hi, ratio_f64(gamma), &b);
            // started at target: E_target[L^target] with the grid point at 0 is
            // (h^2 - target^2)/(gamma h)
            let got = ratio_f64(expected_exit_local_time(target, 0, h, gamma).unwrap());
            assert!((got - g[(target + hi - 1) as usize]).abs() < 1e-9, "{got}");
        }
    }
    assert!(expected_exit_local_time(10, 0, 10, Ratio::from_integer(1)).is_err());
}

#[test]
fn hitting_factor_is_harmonic_and_matches_simulation() {
    let (h, z) = (9u64, 2i64);
    for from in -8i64..=8 {
        let f = ratio_f64(hitting_factor(from, z, 0, h).unwrap());
        if from != z {
            let l = ratio_f64(hitting_factor(from - 1, z, 0, h).unwrap_or(Ratio::from_integer(0)));
            let r = ratio_f64(hitting_factor(from + 1, z, 0, h).unwrap_or(Ratio::from_integer(0)));
            assert!((f - 0.5 * (l + r)).abs() < 1e-12);
        } else {
            assert_eq!(f, 1.0);
        }
    }
    let params = LazyWalkParams::new(Ratio::new(1, 2)).unwrap();
    let trials = 20_000u64;
    let mut hits = 0u64;
    for r in 0..trials {
        let mut rng = replica_rng(4, r);
        let mut hit = false;
        let mut stop = |_: u64, w: i64| {
            hit |= w == z;
            hit || w <= -(h as i64) || w >= h as i64
        };
        run_lazy_walk(params, -5, &mut stop, &mut rng, |_, _| {});
        hits += hit as u64;
    }
    let p = ratio_f64(hitting_factor(-5, z, 0, h).unwrap());
    let sd = (p * (1.0 - p) / trials as f64).sqrt();
    assert!((hits as f64 / trials as f64 - p).abs() < 5.0 * sd);
}

#[test]
fn hand_built_path_gives_the_expected_schedule() {
    // specials {0}, h = 5, d = 1: C has components [-1, 1], [9, 11], [19, 21], ...
    let grid = build_grid(structural(1000, 5, 1)).unwrap();
    let mut path: Vec<i64> = (0..=5).collect();
    path.extend([4, 3, 2, 1]);
    path.extend(2..=19);
    let log = detect_excursions(&path, &grid);
    let r = &log.records;
    assert_eq!(r.len(), 4);
    assert_eq!((r[0].r, r[0].z_r, r[0].center, r[0].d, r[0].z_d), (0, 0, 0, Some(5), Some(5)));
    assert_eq!((r[1].r, r[1].z_r, r[1].center, r[1].d, r[1].z_d), (9, 1, 0, Some(13), Some(5)));
    assert_eq!((r[2].r, r[2].z_r, r[2].center, r[2].d, r[2].z_d), (17, 9, 10, Some(23), Some(15)));
    assert_eq!((r[3].r, r[3].z_r, r[3].center, r[3].d), (27, 19, 20, None));
    assert_eq!(log.returns_to(0, 4), 2);
    assert_eq!(log.completed(), 3);
}

#[test]
fn schedule_numbers() {
    let spec = structural(1000, 5, 1);
    let s = compute_schedule(&spec, Ratio::from_integer(1), Ratio::from_integer(1)).unwrap();
    let size = 16 + 25 - 1;
    assert_eq!(s.t, 1_000_000);
    assert_eq!(s.sigma, 1_000_000 / size);
    let q = floor_three_quarters(s.sigma) as u128;
    let sig = s.sigma as u128;
    assert!(q.pow(4) <= sig.pow(3) && (q + 1).pow(4) > sig.pow(3));
    assert_eq!(s.k_star + q as u64, s.sigma);
    assert_eq!(s.k_upper_star, s.sigma + q as u64);
    assert_eq!(floor_three_quarters(16), 8);
    assert_eq!(floor_three_quarters(81), 27);
    assert_eq!(default_d(1000), 100);
    assert_eq!(default_d(8), 4);
}

#[test]
fn ratios_parse_exactly() {
    assert_eq!(parse_ratio("1/3").unwrap(), Ratio::new(1, 3));
    assert_eq!(parse_ratio("0.25").unwrap(), Ratio::new(1, 4));
    assert_eq!(parse_ratio("4").unwrap(), Ratio::from_integer(4));
    for bad in ["", "1/0", "-1", "a", "1.2.3"] {
        assert!(parse_ratio(bad).is_err(), "{bad}");
    }
}

#[test]
fn strict_constraints_are_enforced() {
    let mut spec = structural(1000, 5, 1);
    spec.constraints = Constraints::Strict;
    assert!(build_grid(spec.clone()).is_err());
    spec.a_n = 100_000;
    spec.h = 100;
    spec.d = 3;
    assert!(build_grid(spec.clone()).is_ok());
    spec.specials = vec![0, 5000];
    assert!(build_grid(spec).is_err());
}

proptest! {
    #[test]
    fn schedule_alternates_on_random_paths(seed in 0u64..200) {
        let grid = build_grid(structural(10_000, 6, 2)).unwrap();
        let mut rng = replica_rng(seed, 0);
        let mut path = Vec::new();
        run_lazy_walk(LazyWalkParams::simple(), 0, &mut Horizon(3000), &mut rng, |_, z| path.push(z));
        let log = detect_excursions(&path, &grid);
        let mut last = None;
        for rec in &log.records {
            prop_assert!(grid.in_c(rec.z_r));
            prop_assert_eq!(grid.c_component(rec.z_r), Some(rec.center));
            if let Some(prev) = last {
                prop_assert!(rec.r > prev);
            }
            match (rec.d, rec.z_d) {
                (Some(d), Some(zd)) => {
                    prop_assert!(d >= rec.r);
                    prop_assert_eq!(zd.abs_diff(rec.center), 6);
                    last = Some(d);
                }
                _ => prop_assert!(std::ptr::eq(rec, log.records.last().unwrap())),
            }
        }
    }
}
