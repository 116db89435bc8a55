//! Randomized invariants of the state, noise, integration and phase layers.

use std::f64::consts::PI;

use memphase::noise::{derive_seed, sample_noise, GeneratorKind, NoiseGenerator};
use memphase::oracle::analytic::{
    dephasing_markov_value, dephasing_phase_analytic, dephasing_phase_at_period, dephasing_shift,
};
use memphase::phase::{ensemble_phase_decomposition, pancharatnam_states, solid_angle_geodesic_closed, EnsembleSums};
use memphase::qsd::{
    earliest_pole, integrate_states, integrate_trajectory, normalize_trajectory, OOperatorKind, OOperatorSpec,
    Trajectory,
};
use memphase::stats::{nearest_branch, wrap_angle};
use memphase::types::{bloch_vector, initial_state, BathSpectrum, CouplingKind, PureState, SystemModel, TimeGrid, C64};
use proptest::prelude::*;

fn coupling() -> impl Strategy<Value = CouplingKind> {
    prop_oneof![Just(CouplingKind::Dissipative), Just(CouplingKind::Dephasing)]
}

fn state() -> impl Strategy<Value = PureState> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("nonzero", |(a, b, c, d)| a * a + b * b + c * c + d * d > 1e-2)
        .prop_map(|(a, b, c, d)| PureState::new(C64::new(a, b), C64::new(c, d)))
}

/// Parameters kept away from Riccati poles and numerical overflow.
fn setup() -> impl Strategy<Value = (SystemModel, BathSpectrum)> {
    (coupling(), 0.0..PI, 0.2..1.0f64, 0.2..5.0f64, 0.0..1.0f64)
        .prop_map(|(c, theta, lambda, gamma, center)| {
            (
                SystemModel::new(1.0, lambda, c, theta).unwrap(),
                BathSpectrum::new(1.0, gamma, center).unwrap(),
            )
        })
        .prop_filter("no pole before 2π", |(m, b)| {
            m.coupling == CouplingKind::Dephasing || earliest_pole(m, b).is_none_or(|t| t > 2.5 * PI)
        })
}

fn trajectory(m: &SystemModel, b: &BathSpectrum, n_steps: usize, seed: u64) -> Trajectory {
    let grid = TimeGrid::new(2.0 * PI, n_steps).unwrap();
    let ospec = OOperatorSpec::for_model(m, b, &grid).unwrap();
    let noise = sample_noise(b, &grid, seed, GeneratorKind::Recursive).unwrap();
    integrate_trajectory(m, b, &ospec, &noise).unwrap()
}

fn bloch_close(a: [f64; 3], b: [f64; 3], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn initial_state_sits_at_polar_angle(theta in 0.0..=PI) {
        let s = initial_state(theta).unwrap();
        prop_assert!(s.up.re >= 0.0 && s.down.re >= 0.0);
        prop_assert_eq!(s.up.im, 0.0);
        prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-15);
        let v = bloch_vector(&s).unwrap();
        prop_assert!(bloch_close(v, [theta.sin(), 0.0, theta.cos()], 1e-12));
    }

    #[test]
    fn theta_outside_range_is_rejected(theta in prop_oneof![-10.0..-1e-9, PI + 1e-9..10.0]) {
        prop_assert!(initial_state(theta).is_err());
    }

    #[test]
    fn grid_ends_exactly_on_t_final(t_final in 1e-3..1e3f64, n_steps in 2usize..5000) {
        let g = TimeGrid::new(t_final, n_steps).unwrap();
        prop_assert_eq!(g.len(), n_steps + 1);
        prop_assert_eq!(g.time(0), 0.0);
        prop_assert_eq!(g.time(n_steps), t_final);
        let t: Vec<f64> = g.times().collect();
        prop_assert!(t.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn wrap_angle_is_principal_and_congruent(x in -1e3..1e3f64, r in -20.0..20.0f64) {
        let w = wrap_angle(x);
        prop_assert!(w > -PI && w <= PI);
        let k = (x - w) / (2.0 * PI);
        prop_assert!((k - k.round()).abs() < 1e-9);
        let b = nearest_branch(x, r);
        prop_assert!((b - r).abs() <= PI + 1e-12);
        prop_assert!(wrap_angle(b - x).abs() < 1e-9);
    }

    #[test]
    fn derived_seeds_are_deterministic_and_distinct(root in any::<u64>(), i in 0u64..1 << 40) {
        prop_assert_eq!(derive_seed(root, i), derive_seed(root, i));
        prop_assert_ne!(derive_seed(root, i), derive_seed(root, i + 1));
        prop_assert_ne!(derive_seed(root, i), derive_seed(root.wrapping_add(1), i));
    }

    #[test]
    fn noise_paths_are_reproducible(
        gamma in 0.05..50.0f64,
        center in -2.0..2.0f64,
        seed in any::<u64>(),
        kind in prop_oneof![Just(GeneratorKind::Recursive), Just(GeneratorKind::CovarianceFactor)],
    ) {
        let bath = BathSpectrum::new(1.0, gamma, center).unwrap();
        let grid = TimeGrid::new(3.0, 60).unwrap();
        let a = sample_noise(&bath, &grid, seed, kind).unwrap();
        let b = NoiseGenerator::new(&bath, &grid, kind).unwrap().sample(seed);
        prop_assert_eq!(a.values.len(), grid.len());
        prop_assert!(a.values.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
        prop_assert_eq!(a.values, b.values);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn integration_is_linear((m, b) in setup(), seed in any::<u64>(), x in state(), y in state(), k in -2.0..2.0f64) {
        let grid = TimeGrid::new(2.0 * PI, 400).unwrap();
        let ospec = OOperatorSpec::for_model(&m, &b, &grid).unwrap();
        let noise = sample_noise(&b, &grid, seed, GeneratorKind::Recursive).unwrap();
        let sum = x.add(&y.scale(C64::new(k, 0.5)));
        let v = integrate_states(&m, &ospec, &noise, &[x, y, sum]).unwrap();
        prop_assert_eq!(v[0][0], x);
        for (j, ((p, q), r)) in v[0].iter().zip(&v[1]).zip(&v[2]).enumerate() {
            let combined = p.add(&q.scale(C64::new(k, 0.5)));
            let scale = 1.0 + r.max_abs();
            prop_assert!(combined.add(&r.scale_real(-1.0)).max_abs() <= 1e-9 * scale, "step {}", j);
        }
    }

    #[test]
    fn geometric_phase_is_gauge_invariant((m, b) in setup(), seed in any::<u64>(), phases in prop::collection::vec(-PI..PI, 401)) {
        let traj = trajectory(&m, &b, 400, seed);
        let d = pancharatnam_states(&traj.states).unwrap();
        let regauged: Vec<_> = traj
            .states
            .iter()
            .zip(&phases)
            .map(|(s, &p)| s.scale(C64::from_polar(1.0, p)))
            .collect();
        let e = pancharatnam_states(&regauged).unwrap();
        prop_assert!(wrap_angle(d.gamma_geo - e.gamma_geo).abs() < 1e-10);
    }

    #[test]
    fn decomposition_identity_holds((m, b) in setup(), seed in any::<u64>()) {
        let d = pancharatnam_states(&trajectory(&m, &b, 400, seed).states).unwrap();
        prop_assert!([d.gamma_tot, d.gamma_dyn, d.gamma_geo].iter().all(|x| x.is_finite()));
        prop_assert!(wrap_angle(d.gamma_tot - d.gamma_dyn - d.gamma_geo).abs() < 1e-10);
    }

    #[test]
    fn normalization_preserves_bloch_path((m, b) in setup(), seed in any::<u64>()) {
        let traj = trajectory(&m, &b, 200, seed);
        let normed = normalize_trajectory(&traj, 1e-300).unwrap();
        let p = traj.bloch_path().unwrap();
        let q = normed.bloch_path().unwrap();
        prop_assert_eq!(p.len(), traj.states.len());
        for (u, v) in p.points().iter().zip(q.points()) {
            let n: f64 = u.iter().map(|x| x * x).sum();
            prop_assert!((n - 1.0).abs() < 1e-12);
            prop_assert!(bloch_close(*u, *v, 1e-12));
        }
    }

    #[test]
    fn ensemble_reduction_ignores_trajectory_order((m, b) in setup(), root in any::<u64>(), rotation in 1usize..40) {
        let trajs: Vec<_> = (0..40).map(|i| trajectory(&m, &b, 200, derive_seed(root, i))).collect();
        let mut permuted = trajs.clone();
        permuted.rotate_left(rotation);
        permuted.reverse();
        match (ensemble_phase_decomposition(&trajs), ensemble_phase_decomposition(&permuted)) {
            (Ok(a), Ok(c)) => {
                prop_assert!((a.gamma_tot - c.gamma_tot).abs() < 1e-9);
                prop_assert!((a.gamma_dyn - c.gamma_dyn).abs() < 1e-9);
                prop_assert!((a.gamma_geo - c.gamma_geo).abs() < 1e-9);
            }
            (Err(_), Err(_)) => {}
            (a, c) => prop_assert!(false, "order changed the outcome: {:?} vs {:?}", a, c),
        }
    }

    #[test]
    fn merged_block_sums_match_one_pass((m, b) in setup(), root in any::<u64>(), split in 1usize..19) {
        let trajs: Vec<_> = (0..20).map(|i| trajectory(&m, &b, 100, derive_seed(root, i))).collect();
        let grid = trajs[0].grid;
        let mut whole = EnsembleSums::new(&grid, false);
        trajs.iter().for_each(|t| whole.accumulate_trajectory(t));
        let mut left = EnsembleSums::new(&grid, false);
        let mut right = EnsembleSums::new(&grid, false);
        trajs[..split].iter().for_each(|t| left.accumulate_trajectory(t));
        trajs[split..].iter().for_each(|t| right.accumulate_trajectory(t));
        left.merge(&right);
        let a = memphase::phase::ensemble_phases(&[whole]);
        let c = memphase::phase::ensemble_phases(&[left]);
        if let (Ok(a), Ok(c)) = (a, c) {
            prop_assert!((a.total.value - c.total.value).abs() < 1e-9);
            prop_assert!((a.dynamical.value - c.dynamical.value).abs() < 1e-9);
        }
    }

    #[test]
    fn riccati_matches_closed_form(lambda in 0.2..1.5f64, gamma in 0.1..20.0f64, center in 0.0..1.5f64) {
        let m = SystemModel::new(1.0, lambda, CouplingKind::Dissipative, 1.0).unwrap();
        let b = BathSpectrum::new(1.0, gamma, center).unwrap();
        let grid = TimeGrid::with_step(2.0 * PI, 1e-3).unwrap();
        prop_assume!(earliest_pole(&m, &b).is_none_or(|t| t > 1.5 * grid.t_final()));
        let closed = OOperatorSpec::build(OOperatorKind::DissipativeClosedForm, &m, &b, &grid).unwrap();
        let ode = OOperatorSpec::build(OOperatorKind::DissipativeRiccati, &m, &b, &grid).unwrap();
        prop_assert_eq!(closed.at(0), C64::new(0.0, 0.0));
        prop_assert_eq!(ode.at(0), C64::new(0.0, 0.0));
        let dev = (0..grid.len()).map(|j| (closed.at(j) - ode.at(j)).norm()).fold(0.0, f64::max);
        prop_assert!(dev <= 1e-7, "deviation {dev:e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn half_solid_angle_tracks_geometric_phase(theta in 0.2..2.9f64, gamma in 0.3..5.0f64, seed in any::<u64>()) {
        let m = SystemModel::new(1.0, 1.0, CouplingKind::Dissipative, theta).unwrap();
        let b = BathSpectrum::new(1.0, gamma, 0.0).unwrap();
        prop_assume!(earliest_pole(&m, &b).is_none_or(|t| t > 2.5 * PI));
        let traj = trajectory(&m, &b, 6284, seed);
        let d = pancharatnam_states(&traj.states).unwrap();
        match solid_angle_geodesic_closed(&traj.bloch_path().unwrap()) {
            Ok(omega) => prop_assert!(wrap_angle(0.5 * omega - d.gamma_geo).abs() < 1e-2),
            Err(e) => prop_assert!(matches!(e, memphase::Error::GeodesicAmbiguous), "{e}"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn resonant_dephasing_reduces_to_closed_system(theta in 0.0..=PI, gamma in 0.05..100.0f64, lambda in 0.0..2.0f64) {
        let b = BathSpectrum::new(1.0, gamma, 0.0).unwrap();
        let at_period = dephasing_phase_at_period(theta, 1.0, lambda, &b);
        prop_assert!((at_period - dephasing_markov_value(theta)).abs() < 1e-12);
        let general = dephasing_phase_analytic(theta, 1.0, lambda, &b, 2.0 * PI).unwrap();
        prop_assert!(wrap_angle(general - dephasing_markov_value(theta)).abs() < 1e-10);
    }

    #[test]
    fn dephasing_shift_is_theta_independent(theta in 0.0..=PI, gamma in 0.05..100.0f64, lambda in 0.1..2.0f64) {
        let b = BathSpectrum::new(1.0, gamma, 1.0).unwrap();
        let shift = dephasing_shift(1.0, lambda, 1.0, gamma);
        let implied = dephasing_markov_value(theta) - dephasing_phase_at_period(theta, 1.0, lambda, &b);
        prop_assert!((implied - shift).abs() < 1e-10, "{implied} vs {shift}");
    }

    #[test]
    fn analytic_phases_are_deterministic(theta in 0.0..=PI, gamma in 0.1..10.0f64, t in 0.1..6.3f64) {
        let b = BathSpectrum::new(1.0, gamma, 1.0).unwrap();
        let a = dephasing_phase_analytic(theta, 1.0, 1.0, &b, t).unwrap();
        let c = dephasing_phase_analytic(theta, 1.0, 1.0, &b, t).unwrap();
        prop_assert_eq!(a.to_bits(), c.to_bits());
    }
}
