use hkdelay::analysis::{check_ci, contraction_constants};
use hkdelay::dynamics::{rhs_general, rhs_multi_leader, SystemState};
use hkdelay::io::{parse_csv, write_csv, TrajectoryTable};
use hkdelay::{
    eval_kernel, integrate, AdjacencyMask, DelayMatrix, History, HistoryBuffer, InfluenceKernel, Kernels,
    ModelVariant, OpinionVec, ScenarioConfig,
};
use proptest::prelude::*;

fn kernel() -> impl Strategy<Value = InfluenceKernel> {
    prop_oneof![
        (0.1f64..3.0).prop_map(|l| InfluenceKernel::constant(l).unwrap()),
        (0.0f64..2.0, 0.1f64..2.0).prop_map(|(c, s)| InfluenceKernel::gaussian(c, s).unwrap()),
        prop::collection::vec(0.05f64..2.0, 2..5).prop_map(|vals| {
            InfluenceKernel::tabulated(vals.iter().enumerate().map(|(k, v)| (k as f64, *v)).collect()).unwrap()
        }),
    ]
}

fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-4.0f64..4.0, d)
}

fn general(xs: Vec<f64>, chi: AdjacencyMask, tau: f64, kernel: InfluenceKernel) -> ScenarioConfig {
    let n = xs.len();
    ScenarioConfig {
        variant: ModelVariant::General,
        n,
        d: 1,
        chi,
        delays: DelayMatrix::uniform(n, tau).unwrap(),
        leader_delays: vec![],
        kernels: Kernels::all_shared(kernel),
        histories: xs.into_iter().map(|x| History::Constant(OpinionVec(vec![x]))).collect(),
        leader_histories: vec![],
        step_h: 0.05,
        horizon_t: 3.0,
    }
}

fn velocities(s: &ScenarioConfig) -> Vec<f64> {
    let buffer = HistoryBuffer::from_scenario(s);
    let state = buffer.state_at_index(buffer.len() - 1);
    let mut out = SystemState::zeros(0.0, s.d, s.n, s.leader_count());
    match s.variant {
        ModelVariant::General => rhs_general(&state, &buffer, s, &mut out).unwrap(),
        _ => rhs_multi_leader(&state, &buffer, s, &mut out).unwrap(),
    }
    out.as_slice().to_vec()
}

proptest! {
    #[test]
    fn kernel_stays_between_ball_infimum_and_sup(k in kernel(), x in point(2), y in point(2)) {
        let w = eval_kernel(&k, &OpinionVec(x.clone()), &OpinionVec(y.clone())).unwrap();
        let bound = OpinionVec(x).norm().max(OpinionVec(y).norm());
        prop_assert!(w > 0.0);
        prop_assert!(w <= k.sup());
        prop_assert!(k.inf_on_ball(bound).unwrap() <= w + 1e-15);
    }

    #[test]
    fn kernel_is_translation_invariant(k in kernel(), x in point(3), y in point(3), v in point(3)) {
        let shift = |p: &[f64]| OpinionVec(p.iter().zip(&v).map(|(a, b)| a + b).collect());
        let base = eval_kernel(&k, &OpinionVec(x.clone()), &OpinionVec(y.clone())).unwrap();
        let moved = eval_kernel(&k, &shift(&x), &shift(&y)).unwrap();
        prop_assert!((base - moved).abs() <= 1e-12 * base.max(1.0));
    }

    #[test]
    fn ci_is_permutation_equivariant(
        bits in prop::collection::vec(any::<bool>(), 30),
        levels in prop::collection::vec(0u8..2, 30),
        perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle(),
    ) {
        let n = 6;
        let cell = |i: usize, j: usize| i * (n - 1) + if j > i { j - 1 } else { j };
        let chi = AdjacencyMask::from_fn(n, |i, j| i != j && bits[cell(i, j)]);
        let tau = DelayMatrix::from_fn(n, |i, j| if i == j { 0.0 } else { 1.0 + levels[cell(i, j)] as f64 }).unwrap();
        let chi_p = AdjacencyMask::from_fn(n, |i, j| chi.get(perm[i], perm[j]));
        let tau_p = DelayMatrix::from_fn(n, |i, j| tau.get(perm[i], perm[j])).unwrap();
        prop_assert_eq!(check_ci(&chi, &tau).unwrap().holds, check_ci(&chi_p, &tau_p).unwrap().holds);
    }

    #[test]
    fn general_velocity_is_additive_over_disjoint_masks(
        xs in prop::collection::vec(-3.0f64..3.0, 4),
        split in prop::collection::vec(0u8..3, 16),
        k in kernel(),
    ) {
        let pick = |want: u8| AdjacencyMask::from_fn(4, |i, j| split[i * 4 + j] == want);
        let both = AdjacencyMask::from_fn(4, |i, j| split[i * 4 + j] != 2);
        let a = velocities(&general(xs.clone(), pick(0), 1.0, k.clone()));
        let b = velocities(&general(xs.clone(), pick(1), 1.0, k.clone()));
        let ab = velocities(&general(xs, both, 1.0, k));
        for i in 0..4 {
            prop_assert!((a[i] + b[i] - ab[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn leaders_ignore_followers(
        followers in prop::collection::vec(-3.0f64..3.0, 4),
        other in prop::collection::vec(-3.0f64..3.0, 4),
        leaders in prop::collection::vec(-3.0f64..3.0, 3),
    ) {
        let build = |xs: &[f64]| ScenarioConfig {
            variant: ModelVariant::MultiLeader { m: 3 },
            n: 4,
            d: 1,
            chi: AdjacencyMask::complete(4),
            delays: DelayMatrix::uniform(4, 1.0).unwrap(),
            leader_delays: vec![1.0, 0.5, 2.0],
            kernels: Kernels::all_shared(InfluenceKernel::gaussian(1.0, 1.0).unwrap()),
            histories: xs.iter().map(|&x| History::Constant(OpinionVec(vec![x]))).collect(),
            leader_histories: leaders.iter().map(|&y| History::Constant(OpinionVec(vec![y]))).collect(),
            step_h: 0.1,
            horizon_t: 1.0,
        };
        let a = velocities(&build(&followers));
        let b = velocities(&build(&other));
        prop_assert_eq!(&a[4..], &b[4..]);
    }

    #[test]
    fn runs_are_deterministic_and_round_trip_through_csv(
        xs in prop::collection::vec(-3.0f64..3.0, 3..6),
        tau in 0.1f64..1.0,
        k in kernel(),
    ) {
        let n = xs.len();
        let s = general(xs, AdjacencyMask::complete(n), tau, k);
        let a = integrate(&s).unwrap();
        let b = integrate(&s).unwrap();
        let ta = TrajectoryTable::from_trajectory(&a);
        prop_assert_eq!(&ta, &TrajectoryTable::from_trajectory(&b));
        prop_assert_eq!(parse_csv(&write_csv(&ta)).unwrap(), ta);
    }

    #[test]
    fn certified_rate_falls_with_delay(psi in 0.01f64..1.0, t1 in 0.1f64..5.0, dt in 0.1f64..5.0, n in 3usize..30) {
        let g = |tau| contraction_constants(&ModelVariant::General, n, 1.0, psi, tau).gamma;
        prop_assert!(g(t1 + dt) < g(t1));
    }
}
