use proptest::prelude::*;
use sdecouple::montecarlo::{mc_run, Welford};
use sdecouple::noise::{bridge_refine, sample_brownian};
use sdecouple::solvers::{euler_visit, solve_at_one, time_near_level};
use sdecouple::{euler, FinePath, Grid, PiecewiseLipschitzFn, SdeSpec, SeedStream};

/// Nondecreasing drift: a staircase plus a common nonnegative slope.
fn monotone_drift() -> impl Strategy<Value = PiecewiseLipschitzFn> {
    (
        proptest::collection::btree_set(-300i32..300, 1..5),
        proptest::collection::vec(0.0f64..2.0, 5),
        -1.0f64..1.0,
        0.0f64..1.5,
    )
        .prop_map(|(bps, jumps, base, slope)| {
            let bps: Vec<f64> = bps.into_iter().map(|b| b as f64 / 100.0).collect();
            let mut level = base;
            let mut pieces = vec![(level, slope)];
            for j in &jumps[..bps.len()] {
                level += j;
                pieces.push((level, slope));
            }
            PiecewiseLipschitzFn::from_affine(bps, &pieces).unwrap()
        })
}

fn random_path() -> impl Strategy<Value = FinePath> {
    proptest::collection::btree_set(1u32..4096, 1..200).prop_flat_map(|pts| {
        let mut times = vec![0.0];
        times.extend(pts.into_iter().map(|k| k as f64 / 4096.0));
        times.push(1.0);
        let len = times.len();
        (Just(times), proptest::collection::vec(-0.3f64..0.3, len - 1)).prop_map(|(times, steps)| {
            let mut values = vec![0.0];
            for z in steps {
                values.push(values.last().unwrap() + z);
            }
            FinePath::new(Grid::new(times).unwrap(), values).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn monotone_drift_preserves_initial_order(
        f in monotone_drift(),
        path in random_path(),
        x0 in -3.0f64..3.0,
        gap in 0.0f64..2.0,
    ) {
        let y0 = x0 + gap;
        let lo = euler(&SdeSpec::new(f.clone(), x0).unwrap(), &path);
        let hi = euler(&SdeSpec::new(f, y0).unwrap(), &path);
        for (a, b) in lo.values.iter().zip(&hi.values) {
            prop_assert!(a <= b, "{} > {}", a, b);
        }
    }

    #[test]
    fn shift_moves_the_trajectory(
        f in monotone_drift(),
        path in random_path(),
        x0 in -2.0f64..2.0,
        a in -3.0f64..3.0,
    ) {
        let base = euler(&SdeSpec::new(f.clone(), x0).unwrap(), &path);
        let moved = euler(&SdeSpec::new(f.shifted(a), x0 + a).unwrap(), &path);
        for (u, v) in base.values.iter().zip(&moved.values) {
            prop_assert!((v - (u + a)).abs() <= 1e-9 * (1.0 + u.abs() + a.abs()), "{} vs {}", v, u + a);
        }
    }

    #[test]
    fn shift_is_exact_on_dyadic_inputs(
        levels in proptest::collection::vec(-64i32..64, 3),
        bps in proptest::collection::btree_set(-64i32..64, 2),
        steps in proptest::collection::vec(-64i32..64, 64),
        x0 in -64i32..64,
        a in -64i32..64,
    ) {
        let d = |k: i32| k as f64 / 32.0;
        let bps: Vec<f64> = bps.into_iter().map(d).collect();
        let pieces: Vec<(f64, f64)> = levels.iter().map(|&l| (d(l), 0.0)).collect();
        let f = PiecewiseLipschitzFn::from_affine(bps, &pieces).unwrap();
        let mut values = vec![0.0];
        for &z in &steps {
            values.push(values.last().unwrap() + d(z));
        }
        let path = FinePath::new(Grid::uniform(64), values).unwrap();
        let base = euler(&SdeSpec::new(f.clone(), d(x0)).unwrap(), &path);
        let moved = euler(&SdeSpec::new(f.shifted(d(a)), d(x0) + d(a)).unwrap(), &path);
        for (u, v) in base.values.iter().zip(&moved.values) {
            prop_assert_eq!(*v, u + d(a));
        }
    }
}

#[test]
fn pure_noise_and_terminal_value() {
    let grid = Grid::uniform(100);
    let path = sample_brownian(&grid, &mut SeedStream::new(4, "pure", 0).rng());
    let spec = SdeSpec::new(PiecewiseLipschitzFn::constant(0.0), 0.75).unwrap();
    let traj = euler(&spec, &path);
    for (x, w) in traj.values.iter().zip(path.values()) {
        assert_eq!(*x, 0.75 + w);
    }
    assert_eq!(solve_at_one(&spec, &path), traj.at_end());
    let mut seen = 0;
    euler_visit(spec.drift(), spec.x0(), grid.times(), path.values(), |j, x| {
        assert_eq!(x, traj.values[j]);
        seen += 1;
    });
    assert_eq!(seen, 101);
}

#[test]
fn refinement_differences_shrink() {
    let spec = SdeSpec::new(PiecewiseLipschitzFn::indicator_nonneg(), 0.0).unwrap();
    let reps = 10_000;
    let gaps: Vec<Welford> = [8usize, 16, 32, 64]
        .iter()
        .map(|&r| {
            let (g, finer) = (Grid::uniform(r), Grid::uniform(2 * r));
            let mut acc = Welford::default();
            for i in 0..reps {
                let s = SeedStream::new(17, format!("consistency/{r}"), i);
                let w = sample_brownian(&g, &mut s.rng());
                let w2 = bridge_refine(&w, &finer, &mut s.child("bridge").rng()).unwrap();
                acc.push((solve_at_one(&spec, &w) - solve_at_one(&spec, &w2)).abs());
            }
            acc
        })
        .collect();
    for pair in gaps.windows(2) {
        let se = pair[0].stderr().hypot(pair[1].stderr());
        assert!(pair[1].mean() < pair[0].mean() + 2.0 * se, "{} !< {}", pair[1].mean(), pair[0].mean());
    }
    assert!(gaps[3].mean() < gaps[0].mean());
}

#[test]
fn time_near_the_jump_scales_with_width() {
    let spec = SdeSpec::new(PiecewiseLipschitzFn::indicator_nonneg(), 0.0).unwrap();
    let grid = Grid::uniform(1024);
    let near = |eps: f64| {
        mc_run(
            "near",
            10_000,
            |s| {
                let w = sample_brownian(&grid, &mut s.rng());
                time_near_level(&euler(&spec, &w), 0.0, eps)
            },
            23,
        )
    };
    let (small, large) = (near(0.05), near(0.1));
    let (c_small, c_large) = (small.mean / 0.05, large.mean / 0.1);
    assert!(c_small > 0.0 && c_large > 0.0);
    let ratio = c_small / c_large;
    assert!((0.5..=2.0).contains(&ratio), "C(0.05) = {c_small}, C(0.1) = {c_large}");
}
