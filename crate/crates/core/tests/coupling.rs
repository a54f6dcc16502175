use cylwalk::coupling::{first_return, sample_conditional_excursion, ConditionalExcursionSpec};
use cylwalk::grid::{build_grid, Constraints, GridSpec};
use cylwalk::lattice::{Site, TorusParams, TorusTable};
use cylwalk::rng::map_replicas;
use cylwalk::stats::{chi_square_uniform, ks_two_sample};
use cylwalk::walk::{run_lazy_walk, ExitInterval, LazyWalkParams};

fn grid(h: u64, d: u64) -> cylwalk::grid::Grid {
    build_grid(GridSpec {
        a_n: 10_000,
        h,
        d,
        specials: vec![0],
        constraints: Constraints::Structural,
    })
    .unwrap()
}

#[test]
fn conditional_excursion_height_is_a_conditioned_lazy_walk() {
    let g = grid(8, 2);
    let params = TorusParams::new(4, 2).unwrap();
    let table = TorusTable::new(params);
    let spec = ConditionalExcursionSpec::new(&g, -1, 8).unwrap();
    assert!((spec.acceptance_probability() - 7.0 / 16.0).abs() < 1e-15);

    let n = 4000u64;
    let sampled = map_replicas(n, 21, |_, rng| sample_conditional_excursion(&spec, &table, rng).unwrap());
    for seg in &sampled {
        let last = seg.path.last().unwrap();
        assert_eq!(last.z, 8);
        assert!(seg.path[..seg.path.len() - 1].iter().all(|s| s.z.abs() < 8));
    }
    let durations: Vec<f64> = sampled.iter().map(|s| (s.path.len() - 1) as f64).collect();
    let lowest: Vec<f64> = sampled.iter().map(|s| s.path.iter().map(|p| p.z).min().unwrap() as f64).collect();

    // reference: lazy walk with gamma = 1/(d+1), kept only when it leaves at the top
    let lazy = LazyWalkParams::cylinder(2);
    let reference = map_replicas(n, 22, |_, rng| loop {
        let mut low = -1i64;
        let mut stop = ExitInterval { lo: -8, hi: 8 };
        let s = run_lazy_walk(lazy, -1, &mut stop, rng, |_, z| low = low.min(z));
        if s.final_z == 8 {
            break (s.steps as f64, low as f64);
        }
    });
    let ref_d: Vec<f64> = reference.iter().map(|r| r.0).collect();
    let ref_m: Vec<f64> = reference.iter().map(|r| r.1).collect();
    assert!(ks_two_sample(&durations, &ref_d).p_value > 1e-3);
    assert!(ks_two_sample(&lowest, &ref_m).p_value > 1e-3);

    let attempts = sampled.iter().map(|s| s.attempts as f64).sum::<f64>() / n as f64;
    let p = spec.acceptance_probability();
    // attempts are geometric with mean 1/p and variance (1-p)/p^2
    let se = ((1.0 - p) / (p * p) / n as f64).sqrt();
    assert!((attempts - 1.0 / p).abs() < 5.0 * se);
}

#[test]
fn exit_heights_must_be_interval_ends() {
    let g = grid(8, 2);
    assert!(ConditionalExcursionSpec::new(&g, 0, 7).is_err());
    assert!(ConditionalExcursionSpec::new(&g, 5, 8).is_err());
}

#[test]
fn first_return_after_a_long_crossing_is_horizontally_uniform() {
    let g = grid(30, 3);
    let params = TorusParams::new(3, 2).unwrap();
    let table = TorusTable::new(params);
    let start = Site { y: 0, z: 30 };
    let hits = map_replicas(3000, 5, |_, rng| first_return(&table, &g, start, rng));
    let mut counts = vec![0u64; params.volume() as usize];
    for s in &hits {
        assert!(g.in_c(s.z));
        counts[s.y as usize] += 1;
    }
    assert!(chi_square_uniform(&counts).p_value > 1e-4, "{counts:?}");
}
