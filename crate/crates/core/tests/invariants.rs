use crossdiff::domain::{integrate, Boundary, Field, GridSpec, State};
use crossdiff::model::{
    convolve, convolve_direct, convolve_fft, darcy_flux, from_reduced_state, pressure_value,
    to_reduced_state, weighted_reduction, AnalyticProfile, GrowthFn, Kernel, KernelSet, ModelSpec,
    PressureLaw,
};
use crossdiff::scenarios::{demo_model, ModelPreset};
use crossdiff::solver::{run, stable_dt, step, SolverParams};
use proptest::prelude::*;

fn grid(n: usize, boundary: Boundary) -> GridSpec {
    GridSpec::new(-2.0, 2.0, n, boundary).unwrap()
}

fn density(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![1 => Just(0.0), 4 => 0.0..2.0f64], n)
}

fn state_pair(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (density(n), density(n))
}

fn kernel_model(alpha: f64, eps: f64) -> ModelSpec {
    ModelSpec {
        kernels: KernelSet {
            k11: Some(Kernel::gaussian(0.3, 0.2)),
            k12: Some(Kernel::gaussian(-0.2, 0.3)),
            k21: None,
            k22: Some(Kernel::gaussian(0.1, 0.15)),
        },
        ..ModelSpec {
            pressure: PressureLaw::new(alpha),
            ..demo_model(eps)
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn step_preserves_positivity_and_mass(
        (u, v) in state_pair(48),
        alpha in prop_oneof![Just(1.0), Just(1.5), Just(2.0), Just(3.0)],
        eps in 0.0..0.2f64,
        periodic in any::<bool>(),
    ) {
        let boundary = if periodic { Boundary::Periodic } else { Boundary::NoFlux };
        let g = grid(48, boundary);
        let model = kernel_model(alpha, eps);
        let mut state = State::new(0.0, Field::new(g, u).unwrap(), Field::new(g, v).unwrap()).unwrap();
        let (mu, mv) = (integrate(&state.u), integrate(&state.v));
        for _ in 0..20 {
            let dt = stable_dt(&state, &model, &g, 0.4).unwrap();
            state = step(&state, &model, dt).unwrap();
        }
        prop_assert!(state.u.min() >= 0.0 && state.v.min() >= 0.0);
        prop_assert!((integrate(&state.u) - mu).abs() <= 1e-12 * mu.max(1e-300));
        prop_assert!((integrate(&state.v) - mv).abs() <= 1e-12 * mv.max(1e-300));
    }

    #[test]
    fn darcy_fluxes_sum_to_total_flux((u, v) in state_pair(32), alpha in 0.5..4.0f64) {
        let g = grid(32, Boundary::Periodic);
        let state = State::new(0.0, Field::new(g, u).unwrap(), Field::new(g, v).unwrap()).unwrap();
        let law = PressureLaw::new(alpha);
        let (qu, qv) = darcy_flux(&state, &law).unwrap();
        let s = state.total();
        let dx = g.dx();
        for k in 0..=32 {
            let (l, r) = ((k + 31) % 32, k % 32);
            let total = (law.power(s.values[r]) - law.power(s.values[l])) / (alpha * dx);
            let scale = total.abs().max(1.0);
            if s.values[l] > 0.0 && s.values[r] > 0.0 {
                prop_assert!((qu.values[k] + qv.values[k] - total).abs() <= 1e-13 * scale);
            } else if s.values[l] == 0.0 && s.values[r] == 0.0 {
                prop_assert!(qu.values[k] == 0.0 && qv.values[k] == 0.0);
            }
        }
    }

    #[test]
    fn convolution_is_linear_and_shift_equivariant(
        a in prop::collection::vec(-1.0..1.0f64, 64),
        b in prop::collection::vec(-1.0..1.0f64, 64),
        c in -3.0..3.0f64,
        shift in 0usize..64,
    ) {
        let g = grid(64, Boundary::Periodic);
        let k = Kernel::gaussian(1.3, 0.3).sample(&g).unwrap();
        let fa = Field::new(g, a.clone()).unwrap();
        let fb = Field::new(g, b.clone()).unwrap();
        let lin = convolve(&fa.zip_map(&fb, |x, y| x + c * y), &k).unwrap();
        let ca = convolve(&fa, &k).unwrap();
        let cb = convolve(&fb, &k).unwrap();
        for i in 0..64 {
            prop_assert!((lin.values[i] - ca.values[i] - c * cb.values[i]).abs() < 1e-13 * (1.0 + c.abs()) * 10.0);
        }
        let rotated: Vec<f64> = (0..64).map(|i| a[(i + 64 - shift) % 64]).collect();
        let cr = convolve(&Field::new(g, rotated).unwrap(), &k).unwrap();
        for i in 0..64 {
            prop_assert!((cr.values[i] - ca.values[(i + 64 - shift) % 64]).abs() < 1e-13);
        }
    }

    #[test]
    fn pressure_is_increasing(alpha in 0.05..5.0f64, s in 1e-6..10.0f64, ds in 1e-6..1.0f64) {
        let law = PressureLaw::new(alpha);
        prop_assert!(pressure_value(s + ds, &law).unwrap() > pressure_value(s, &law).unwrap());
    }

    #[test]
    fn swapping_species_swaps_outputs((u, v) in state_pair(40)) {
        let g = grid(40, Boundary::NoFlux);
        let mut model = kernel_model(2.0, 0.05);
        model.growth.g1 = GrowthFn::Logistic { rate: 1.0, cap: 3.0 };
        let state = State::new(0.0, Field::new(g, u).unwrap(), Field::new(g, v).unwrap()).unwrap();
        let dt = stable_dt(&state, &model, &g, 0.4).unwrap();
        let a = step(&state, &model, dt).unwrap();
        let b = step(&state.swapped(), &model.swapped(), dt).unwrap();
        prop_assert_eq!(a.u.values, b.v.values);
        prop_assert_eq!(a.v.values, b.u.values);
    }
}

#[test]
fn direct_and_fft_convolution_agree() {
    for n in [256, 2048, 4096] {
        let g = grid(n, Boundary::Periodic);
        let f = Field::from_fn(g, |x| {
            (-(x - 0.3) * (x - 0.3) * 4.0).exp() + 0.2 * (3.0 * x).sin().abs()
        });
        for kernel in [Kernel::gaussian(0.7, 0.1), Kernel::gaussian(-1.2, 0.45)] {
            let k = kernel.sample(&g).unwrap();
            let a = convolve_direct(&f, &k).unwrap();
            let b = convolve_fft(&f, &k).unwrap();
            let err = a
                .values
                .iter()
                .zip(&b.values)
                .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            assert!(err < 1e-10, "n={n}: {err:e}");
        }
    }
    let g = grid(256, Boundary::NoFlux);
    let f = Field::from_fn(g, |x| 1.0 + x * x);
    let k = Kernel::gaussian(1.0, 0.2).sample(&g).unwrap();
    let a = convolve_direct(&f, &k).unwrap();
    let b = convolve_fft(&f, &k).unwrap();
    assert!(a
        .values
        .iter()
        .zip(&b.values)
        .all(|(x, y)| (x - y).abs() < 1e-10));
}

#[test]
fn weighted_reduction_matches_direct_solve_per_step() {
    let g = grid(200, Boundary::Periodic);
    let weighted = ModelSpec {
        pressure: PressureLaw::weighted(2.0, 2.0, 1.0),
        ..kernel_model(2.0, 0.02)
    };
    let reduced = weighted_reduction(&weighted).unwrap();
    let law = weighted.pressure;
    let mut direct = State::new(
        0.0,
        Field::from_fn(g, |x| 0.6 * (-(x + 0.5) * (x + 0.5) * 6.0).exp()),
        Field::from_fn(g, |x| 0.9 * (-(x - 0.4) * (x - 0.4) * 5.0).exp()),
    )
    .unwrap();
    let mut scaled = to_reduced_state(&direct, &law).unwrap();
    for _ in 0..200 {
        let dt = stable_dt(&direct, &weighted, &g, 0.4).unwrap();
        direct = step(&direct, &weighted, dt).unwrap();
        scaled = step(&scaled, &reduced, dt).unwrap();
        let back = from_reduced_state(&scaled, &law).unwrap();
        for (a, b) in direct
            .u
            .values
            .iter()
            .chain(&direct.v.values)
            .zip(back.u.values.iter().chain(&back.v.values))
        {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn presets_conserve_mass_over_long_runs() {
    let g = grid(128, Boundary::Periodic);
    for preset in [
        ModelPreset::Demo,
        ModelPreset::Heat,
        ModelPreset::PorousMedium,
        ModelPreset::Confined,
    ] {
        let model = preset.model(0.01);
        let initial = State::new(
            0.0,
            Field::from_fn(g, |x| 0.5 * (-(x + 0.5) * (x + 0.5) * 4.0).exp()),
            Field::from_fn(g, |x| 0.7 * (-(x - 0.5) * (x - 0.5) * 4.0).exp()),
        )
        .unwrap();
        let params = SolverParams::new(0.5).with_output_every(50);
        let traj = run(&initial, &model, &params, &g).unwrap();
        assert!(
            traj.max_mass_drift() <= 1e-12,
            "{}: {:e}",
            preset.name(),
            traj.max_mass_drift()
        );
        assert_eq!(traj.clipped_mass, 0.0);
    }
}

#[test]
fn vacuum_species_stays_empty() {
    let g = grid(64, Boundary::NoFlux);
    let mut model = kernel_model(2.0, 0.1);
    model.velocity.v2 = AnalyticProfile::Quadratic { coeff: 1.0 };
    let initial = State::new(
        0.0,
        Field::zeros(g),
        Field::from_fn(g, |x| (1.0 - x * x).max(0.0)),
    )
    .unwrap();
    let traj = run(&initial, &model, &SolverParams::new(0.3), &g).unwrap();
    assert!(traj
        .snapshots
        .iter()
        .all(|s| s.u.values.iter().all(|&x| x == 0.0)));
}
