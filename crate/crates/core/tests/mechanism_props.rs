use pemr::eval::{level_metrics, EpisodeResult};
use pemr::gridworld::{Action, AgentPose, Heading, NUM_ACTIONS};
use pemr::policy::{
    argmax, recall_decide, EpisodeTrace, FragmentMatrix, RecallBuffer, RecallStrategy,
    RecallWeights, StepRecord,
};
use pemr::tensorkit::{log_softmax, sigmoid, sigmoid_bce, softmax, softmax_xent};
use pemr::training::{compute_reward, discounted_returns, RewardInput, RewardWeights};
use proptest::prelude::*;

fn distribution() -> impl Strategy<Value = [f64; NUM_ACTIONS]> {
    prop::array::uniform4(-5.0f64..5.0).prop_map(|v| {
        let p = softmax(&v);
        [p[0], p[1], p[2], p[3]]
    })
}

fn buffer() -> impl Strategy<Value = (usize, Vec<Vec<[f64; NUM_ACTIONS]>>)> {
    (1usize..6).prop_flat_map(|k| {
        (
            Just(k),
            prop::collection::vec(prop::collection::vec(distribution(), k), 1..10),
        )
    })
}

fn fill(k: usize, fragments: &[Vec<[f64; NUM_ACTIONS]>]) -> RecallBuffer {
    let mut buf = RecallBuffer::new(k);
    for (t, rows) in fragments.iter().enumerate() {
        buf.push(FragmentMatrix { t, rows: rows.clone() });
    }
    buf
}

type Ep = (Vec<(f64, bool, bool)>, (f64, bool, bool), bool, bool);

fn episode() -> impl Strategy<Value = Ep> {
    let frame = (0.0f64..20.0, any::<bool>(), any::<bool>());
    (prop::collection::vec(frame.clone(), 0..8), frame, any::<bool>(), any::<bool>())
}

fn result(ep: &Ep) -> EpisodeResult {
    let pose = AgentPose::new(1, 1, Heading::E);
    let (steps, last, stopped, correct) = ep;
    EpisodeResult {
        level: 10,
        answer: 0,
        correct: *correct,
        trace: EpisodeTrace {
            sample_id: "p".into(),
            start: pose,
            steps: steps
                .iter()
                .map(|&(dist, room, vis)| StepRecord {
                    pose,
                    action: Action::Forward,
                    collided: false,
                    yhat: None,
                    fragment: None,
                    dist,
                    in_target_room: room,
                    target_visible: vis,
                })
                .collect(),
            final_pose: pose,
            final_dist: last.0,
            final_in_room: last.1,
            final_visible: last.2,
            stopped: *stopped,
            forced: !*stopped,
            observations: Vec::new(),
        },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn softmax_keeps_the_argmax(v in prop::collection::vec(-30.0f64..30.0, 2..10)) {
        prop_assert_eq!(argmax(&softmax(&v)), argmax(&v));
    }

    #[test]
    fn decisions_ignore_a_constant_shift(v in prop::array::uniform4(-10.0f64..10.0), c in -50.0f64..50.0) {
        let shifted = v.map(|x| x + c);
        prop_assert_eq!(argmax(&softmax(&shifted)), argmax(&softmax(&v)));
        prop_assert_eq!(argmax(&shifted), argmax(&v));
    }

    #[test]
    fn unit_weights_b_is_a((k, frags) in buffer()) {
        let buf = fill(k, &frags);
        let a = recall_decide(&buf, &RecallWeights::unit(RecallStrategy::A, k)).unwrap();
        let b = recall_decide(&buf, &RecallWeights::unit(RecallStrategy::B, k)).unwrap();
        prop_assert_eq!(a.0.map(f64::to_bits), b.0.map(f64::to_bits));
        prop_assert_eq!(a.1, b.1);
    }

    #[test]
    fn buffer_holds_at_most_k((k, frags) in buffer()) {
        let buf = fill(k, &frags);
        prop_assert_eq!(buf.len(), frags.len().min(k));
    }

    #[test]
    fn xent_gradient_is_tangent(v in prop::collection::vec(-20.0f64..20.0, 2..10), t in any::<prop::sample::Index>()) {
        let target = t.index(v.len());
        let (loss, g) = softmax_xent(&v, target).unwrap();
        prop_assert!(loss.is_finite() && loss >= 0.0);
        prop_assert!(g.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn primitives_stay_finite(v in prop::collection::vec(-20.0f64..20.0, 1..10), bits in any::<u16>()) {
        let mask: Vec<f64> = (0..v.len()).map(|i| ((bits >> (i % 16)) & 1) as f64).collect();
        prop_assert!(softmax(&v).iter().all(|x| x.is_finite()));
        prop_assert!(log_softmax(&v).iter().all(|x| x.is_finite()));
        prop_assert!(v.iter().all(|&x| sigmoid(x).is_finite()));
        let (l, g) = sigmoid_bce(&v, &mask).unwrap();
        prop_assert!(l.is_finite() && g.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn reward_is_linear_in_its_weights(a in 0usize..4, collided in any::<bool>(), progress in -1.5f64..1.5, answer in prop::option::of(any::<bool>()), s in 0.1f64..3.0) {
        let input = RewardInput { action: Action::from_index(a), collided, progress, answer };
        let w = RewardWeights::default();
        let scaled = RewardWeights { r1: s * w.r1, r2: s * w.r2, r3: s * w.r3 };
        let r = compute_reward(&input, &w);
        prop_assert!((compute_reward(&input, &scaled) - s * r).abs() < 1e-12);
        let parts = compute_reward(&input, &RewardWeights { r1: w.r1, r2: 0.0, r3: 0.0 })
            + compute_reward(&input, &RewardWeights { r1: 0.0, r2: w.r2, r3: 0.0 })
            + compute_reward(&input, &RewardWeights { r1: 0.0, r2: 0.0, r3: w.r3 });
        prop_assert!((parts - r).abs() < 1e-12);
    }

    #[test]
    fn returns_match_double_sum(r in prop::collection::vec(-2.0f64..2.0, 0..60), gi in 0usize..4) {
        let gamma = [0.0, 0.5, 0.99, 1.0][gi];
        let g = discounted_returns(&r, gamma);
        for t in 0..r.len() {
            let brute: f64 = (t..r.len()).map(|u| gamma.powi((u - t) as i32) * r[u]).sum();
            prop_assert!((g[t] - brute).abs() < 1e-9);
        }
    }

    #[test]
    fn metrics_are_order_free(eps in prop::collection::vec(episode(), 1..12), seed in any::<u64>(), w in 1usize..6) {
        let results: Vec<EpisodeResult> = eps.iter().map(result).collect();
        let mut shuffled = results.clone();
        let n = shuffled.len();
        for i in (1..n).rev() {
            shuffled.swap(i, (seed as usize).wrapping_mul(i + 7) % (i + 1));
        }
        let a = level_metrics(10, &results, w).unwrap();
        let b = level_metrics(10, &shuffled, w).unwrap();
        for (x, y) in [(a.d_delta, b.d_delta), (a.d_t, b.d_t), (a.r_e, b.r_e), (a.r_t, b.r_t), (a.o_m, b.o_m), (a.o_t, b.o_t), (a.o_delta, b.o_delta), (a.acc, b.acc)] {
            prop_assert!((x - y).abs() < 1e-12);
        }
        prop_assert_eq!(a.r_delta, a.r_e - a.r_t);
        if !a.o_degenerate {
            prop_assert_eq!(a.o_delta, 1.0 - a.o_t / a.o_m);
        }
    }

    #[test]
    fn distance_decomposes(ep in episode()) {
        let r = result(&ep);
        let m = level_metrics(10, std::slice::from_ref(&r), 5).unwrap();
        prop_assert!((m.d_delta + m.d_t - r.trace.d0()).abs() < 1e-12);
    }
}
