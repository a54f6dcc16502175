use cylwalk::interlacement::{green_asymptotic, vacancy_probability_closed_form, InterlacementSampler, SamplerOptions};
use cylwalk::lattice::{LatticePoint, Pattern};
use cylwalk::rng::map_replicas;

#[test]
fn single_site_vacancy_follows_the_closed_form() {
    let sampler = InterlacementSampler::new(&Pattern::origin(3), SamplerOptions::default()).unwrap();
    let u = 0.8;
    let n = 20_000u64;
    let samples = map_replicas(n, 31, |_, rng| sampler.sample_vacant(u, rng).unwrap());
    let vacant = samples.iter().filter(|s| s.bits[0]).count() as f64 / n as f64;
    let p = vacancy_probability_closed_form(u, sampler.cap());
    let bias = samples.iter().map(|s| s.bias_bound).fold(0.0, f64::max);
    let sd = (p * (1.0 - p) / n as f64).sqrt();
    assert!((vacant - p).abs() <= 4.0 * sd + bias, "{vacant} vs {p}");
    // the number of trajectories is Poisson(u cap)
    let mean_traj = samples.iter().map(|s| s.n_traj as f64).sum::<f64>() / n as f64;
    let lam = u * sampler.cap();
    assert!((mean_traj - lam).abs() < 5.0 * (lam / n as f64).sqrt());
}

#[test]
fn coupled_levels_are_nested() {
    let b = Pattern::new([LatticePoint::origin(3), LatticePoint::unit(3, 0), LatticePoint::unit(3, 1)]).unwrap();
    let sampler = InterlacementSampler::new(&b, SamplerOptions::default()).unwrap();
    let levels = [0.25, 0.5, 1.0, 2.0];
    for draw in map_replicas(500, 8, |_, rng| sampler.sample_coupled(&levels, rng).unwrap()) {
        for pair in draw.windows(2) {
            for (lo, hi) in pair[0].bits.iter().zip(&pair[1].bits) {
                // vacant at the higher level implies vacant at the lower one
                assert!(!*hi || *lo);
            }
        }
    }
}

#[test]
fn level_zero_is_fully_vacant() {
    let sampler = InterlacementSampler::new(&Pattern::block(&[2, 2, 1]), SamplerOptions::default()).unwrap();
    let s = map_replicas(10, 1, |_, rng| sampler.sample_vacant(0.0, rng).unwrap());
    assert!(s.iter().all(|x| x.n_traj == 0 && x.bits.iter().all(|&b| b)));
}

#[test]
fn rejects_low_dimension_and_bad_levels() {
    assert!(InterlacementSampler::new(&Pattern::origin(2), SamplerOptions::default()).is_err());
    let sampler = InterlacementSampler::new(&Pattern::origin(3), SamplerOptions::default()).unwrap();
    let mut rng = cylwalk::rng::replica_rng(0, 0);
    assert!(sampler.sample_vacant(-1.0, &mut rng).is_err());
    assert!(sampler.sample_vacant(f64::NAN, &mut rng).is_err());
}

#[test]
fn green_constant_in_three_dimensions() {
    // g(x) ~ 3 / (2 pi |x|) in Z^3
    let r = 7.0;
    assert!((green_asymptotic(3, r) - 3.0 / (2.0 * std::f64::consts::PI * r)).abs() < 1e-12);
}
