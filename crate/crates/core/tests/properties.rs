use proptest::prelude::*;
use sphere_bridge::manifold::{geodesic_distance, sample_uniform};
use sphere_bridge::net::{DriftModel, NetConfig};
use sphere_bridge::ode::{flow_endpoints, FlowDirection, OdeOptions, ProbabilityFlow};
use sphere_bridge::rng::{stream, Streams};
use sphere_bridge::sde::{geodesic_random_walk_parallel, Direction, NoiseSchedule, TimeGrid};
use sphere_bridge::SpherePoint;

fn model(width: usize, seed: u64, scale: f64) -> DriftModel {
    let mut m = DriftModel::new(NetConfig { width, ..NetConfig::default() }, &mut stream(seed, &[]));
    let mut rng = stream(seed, &[7]);
    let n = m.param_count();
    for p in &mut m.params_mut()[n - (3 * width + 3)..] {
        *p = scale * (rand::Rng::gen::<f64>(&mut rng) - 0.5);
    }
    m
}

fn points(n: usize, seed: u64) -> Vec<SpherePoint> {
    let mut rng = stream(seed, &[]);
    (0..n).map(|_| sample_uniform(&mut rng)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn walks_stay_on_the_sphere(seed in 0u64..1000, peak in 0.01f64..20.0, steps in 1usize..40) {
        let m = model(8, seed, 4.0);
        let schedule = NoiseSchedule::new(1.0, peak, peak * 0.05).unwrap();
        let grid = TimeGrid::uniform(1.0, steps).unwrap();
        let tr = geodesic_random_walk_parallel(&m, &schedule, &grid, Direction::Forward, 1.0, &points(16, seed), &Streams::new(seed, 1));
        for p in tr.terminal() {
            prop_assert!((p.coords().norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn walks_repeat_for_a_fixed_worker_count(seed in 0u64..1000, workers in 1usize..5) {
        let m = model(8, seed, 1.0);
        let schedule = NoiseSchedule::default();
        let grid = TimeGrid::uniform(1.0, 5).unwrap();
        let xs = points(23, seed);
        let run = || geodesic_random_walk_parallel(&m, &schedule, &grid, Direction::Backward, 1.0, &xs, &Streams::new(seed, workers)).terminal();
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn checkpoints_round_trip_bitwise(seed in 0u64..1000, width in 1usize..24) {
        let m = model(width, seed, 2.0);
        let back = DriftModel::from_bytes(&m.to_bytes()).unwrap();
        prop_assert_eq!(m.params(), back.params());
        prop_assert_eq!(m.to_bytes(), back.to_bytes());
    }

    #[test]
    fn truncated_checkpoints_are_rejected(seed in 0u64..1000, cut in 1usize..64) {
        let bytes = model(4, seed, 1.0).to_bytes();
        let cut = cut.min(bytes.len() - 1);
        prop_assert!(DriftModel::from_bytes(&bytes[..bytes.len() - cut]).is_err());
    }

    #[test]
    fn flow_is_invertible(seed in 0u64..1000) {
        let (f, b) = (model(8, seed, 1.0), model(8, seed + 1, 1.0));
        let flow = ProbabilityFlow::new(&f, &b);
        let opts = OdeOptions { steps: 100, ..OdeOptions::default() };
        let xs = points(8, seed);
        let there = flow_endpoints(&flow, 1.0, &xs, FlowDirection::Noising, &opts).unwrap();
        let back = flow_endpoints(&flow, 1.0, &there, FlowDirection::Generating, &opts).unwrap();
        for (a, b) in xs.iter().zip(&back) {
            prop_assert!(geodesic_distance(a, b) < 1e-6);
        }
    }
}
