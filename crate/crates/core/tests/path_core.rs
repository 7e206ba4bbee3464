use conc_lab::path::{default_block_weights, make_grid, metric_dominance_check, MultiPath, PathMetric, TimeGrid};
use conc_lab::rng::{fill_normals, member_rng};
use proptest::prelude::*;

fn random_walk(grid: TimeGrid, dim: usize, seed: u64, member: u64) -> MultiPath {
    let mut rng = member_rng(seed, member);
    let comps = (0..dim)
        .map(|_| {
            let mut z = vec![0.0; grid.len()];
            fill_normals(&mut rng, &mut z);
            let mut acc = 0.0;
            z.iter()
                .map(|v| {
                    acc += v * grid.dt().sqrt();
                    acc
                })
                .collect()
        })
        .collect();
    MultiPath::new(grid, comps).unwrap()
}

/// Direct evaluation: one pass per (time, coordinate) cell with no shared helpers.
fn oracle(metric: &PathMetric, a: &MultiPath, b: &MultiPath) -> f64 {
    let n = a.dim();
    let len = a.grid().len();
    let diff = |i: usize, k: usize| (a.component(i)[k] - b.component(i)[k]).abs();
    match metric {
        PathMetric::Uniform => {
            let mut m = 0.0_f64;
            for k in 0..len {
                for i in 0..n {
                    if diff(i, k) > m {
                        m = diff(i, k);
                    }
                }
            }
            m
        }
        PathMetric::AveragedUniform => {
            let mut total = 0.0;
            for i in 0..n {
                let mut s = 0.0_f64;
                for k in 0..len {
                    s = s.max(diff(i, k));
                }
                total += s * s;
            }
            (total / n as f64).sqrt()
        }
        PathMetric::UniformEuclidean => (0..len)
            .map(|k| ((0..n).map(|i| diff(i, k).powi(2)).sum::<f64>() / n as f64).sqrt())
            .fold(0.0, f64::max),
        PathMetric::LocallyUniform { weights } => {
            let blocks = a.grid().horizon().ceil() as usize;
            (1..=blocks)
                .map(|block| {
                    let d = (0..len)
                        .filter(|&k| a.grid().time(k) <= block as f64 + 1e-9)
                        .flat_map(|k| (0..n).map(move |i| (i, k)))
                        .map(|(i, k)| diff(i, k))
                        .fold(0.0, f64::max);
                    weights[block - 1] * d / (1.0 + d)
                })
                .fold(0.0, f64::max)
        }
    }
}

fn all_metrics(horizon: f64) -> Vec<PathMetric> {
    vec![
        PathMetric::Uniform,
        PathMetric::AveragedUniform,
        PathMetric::UniformEuclidean,
        PathMetric::LocallyUniform {
            weights: default_block_weights(0.3, horizon.ceil() as usize),
        },
    ]
}

#[test]
fn three_dimensional_pairs_match_scan_oracle() {
    let g = make_grid(3.5, 0.01).unwrap();
    for j in 0..50 {
        let a = random_walk(g, 3, 11, 2 * j);
        let b = random_walk(g, 3, 11, 2 * j + 1);
        for m in all_metrics(3.5) {
            let got = m.eval(&a, &b).unwrap();
            let want = oracle(&m, &a, &b);
            assert!((got - want).abs() <= 1e-12, "{}: {got} vs {want}", m.name());
        }
    }
}

#[test]
fn dominance_holds_on_random_pairs() {
    let g = make_grid(1.0, 0.01).unwrap();
    for j in 0..1000u64 {
        let dim = 1 + (j % 6) as usize;
        let a = random_walk(g, dim, 12, 2 * j);
        let b = random_walk(g, dim, 12, 2 * j + 1);
        let rep = metric_dominance_check(&a, &b).unwrap();
        assert!(rep.holds, "pair {j}: {rep:?}");
        assert!(rep.uniform_euclidean <= rep.averaged_uniform);
    }
}

#[test]
fn constant_shift_dominance_is_equality() {
    let g = make_grid(1.0, 0.1).unwrap();
    let a = random_walk(g, 4, 13, 0);
    let b = a.map(|v| v + 0.75);
    let rep = metric_dominance_check(&a, &b).unwrap();
    assert!((rep.uniform_euclidean - 0.75).abs() < 1e-12);
    assert!((rep.averaged_uniform - 0.75).abs() < 1e-12);
    assert!(rep.holds);
}

fn arb_case() -> impl Strategy<Value = (f64, [Vec<Vec<f64>>; 3])> {
    (1usize..4, prop::sample::select(vec![1.0, 2.5])).prop_flat_map(|(dim, t)| {
        let len = make_grid(t, 0.25).unwrap().len();
        let one = move || prop::collection::vec(prop::collection::vec(-50.0..50.0f64, len), dim);
        (Just(t), (one(), one(), one()).prop_map(|(a, b, c)| [a, b, c]))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn metric_axioms_on_random_triples((t, [a, b, c]) in arb_case()) {
        let g = make_grid(t, 0.25).unwrap();
        let (a, b, c) = (MultiPath::new(g, a).unwrap(), MultiPath::new(g, b).unwrap(), MultiPath::new(g, c).unwrap());
        for m in all_metrics(t) {
            let ab = m.eval(&a, &b).unwrap();
            let ba = m.eval(&b, &a).unwrap();
            let ac = m.eval(&a, &c).unwrap();
            let cb = m.eval(&c, &b).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, ba);
            prop_assert_eq!(m.eval(&a, &a).unwrap(), 0.0);
            prop_assert!(ab <= ac + cb + 1e-12, "{}: {} > {} + {}", m.name(), ab, ac, cb);
            if a != b {
                prop_assert!(ab > 0.0);
            }
        }
    }

    #[test]
    fn common_shift_invariance(shift in prop::collection::vec(-10.0..10.0f64, 9), seed in 0u64..1000) {
        let g = make_grid(2.0, 0.25).unwrap();
        let a = random_walk(g, 2, seed, 0);
        let b = random_walk(g, 2, seed, 1);
        let s = MultiPath::new(g, vec![shift.clone(), shift.iter().map(|v| -v).collect()]).unwrap();
        let add = |x: &MultiPath| x.zip_with(&s, |p, q| p + q).unwrap();
        for m in all_metrics(2.0) {
            let before = m.eval(&a, &b).unwrap();
            let after = m.eval(&add(&a), &add(&b)).unwrap();
            prop_assert!((before - after).abs() <= 1e-12 * (1.0 + before));
        }
    }
}
