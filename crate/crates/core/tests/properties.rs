mod common;

use cmpg::classify::{classify, guaranteed_reach, Verdict};
use cmpg::etr;
use cmpg::format::{parse_game, serialize_game};
use cmpg::game::{Player, StationaryStrategy, StrategyProbs};
use cmpg::generators::{gen_lower_bound, lower_bound_sigma_star};
use cmpg::mdp::{best_response_potentials, default_pi_cap};
use cmpg::rational::{ratio, to_f64};
use cmpg::record::fingerprint;
use cmpg::solvers::{self, SolverConfig};
use common::*;
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn random_strategy(rng: &mut ChaCha8Rng, g: &cmpg::game::Game, player: Player) -> StationaryStrategy {
    let probs = (0..g.num_states())
        .map(|s| {
            let w: Vec<f64> = (0..g.actions(player, s).len()).map(|_| rng.gen_range(0.05..1.0)).collect();
            let t: f64 = w.iter().sum();
            w.iter().map(|x| x / t).collect()
        })
        .collect();
    StationaryStrategy::new(g, player, StrategyProbs::Float(probs)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Swapping roles through the witness turns a payoff of `v` into `1 − v`.
    #[test]
    fn mirrored_profiles_sum_to_one(seed in any::<u64>(), k in 2u32..4, den in 14i64..40) {
        let eta = ratio(1, den.max(4 * k as i64 + 5));
        let (g, w) = gen_lower_bound(k, &eta).unwrap();
        let mut rng = rng(seed);
        let s1 = random_strategy(&mut rng, &g, Player::One);
        let s2 = random_strategy(&mut rng, &g, Player::Two);
        let a = g.state_index("a").unwrap();
        let v = solvers::evaluate_profile(&g, &s1, &s2, a).unwrap();
        let m1 = w.mirror(&g, &s2).unwrap();
        let m2 = w.mirror(&g, &s1).unwrap();
        prop_assert_eq!(m1.player(), Player::One);
        let v_bar = solvers::evaluate_profile(&g, &m1, &m2, w.state_map[a]).unwrap();
        prop_assert!((v + v_bar - 1.0).abs() < 1e-9, "{} + {}", v, v_bar);
    }

    #[test]
    fn profile_evaluation_matches_stationary_distribution(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let n = rng.gen_range(1..=4);
        let g = random_game_where(&mut rng, n, 3, 3, |g| classify(g).is_ergodic());
        let s1 = random_strategy(&mut rng, &g, Player::One);
        let s2 = random_strategy(&mut rng, &g, Player::Two);
        let mut p = vec![vec![0.0; n]; n];
        let mut r = vec![0.0; n];
        for s in 0..n {
            for (i, x) in s1.at(s).iter().enumerate() {
                for (j, y) in s2.at(s).iter().enumerate() {
                    let t = g.transition(s, i, j);
                    r[s] += x * y * to_f64(&t.reward);
                    for (u, q) in &t.successors {
                        p[s][*u] += x * y * to_f64(q);
                    }
                }
            }
        }
        let want = stationary_gain(&p, &r);
        for s in 0..n {
            let got = solvers::evaluate_profile(&g, &s1, &s2, s).unwrap();
            prop_assert!((got - want).abs() < 1e-9, "{} vs {}", got, want);
        }
    }

    #[test]
    fn classification_is_consistent(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let n = rng.gen_range(1..=6);
        let g = random_game(&mut rng, n, 2, 2);
        let c = classify(&g);
        for comp in &c.components {
            for &s in comp {
                for (_, _, t) in g.pairs(s) {
                    prop_assert!(t.successors.iter().all(|(u, _)| comp.binary_search(u).is_ok()));
                }
            }
            for &t in comp {
                prop_assert!(comp.iter().all(|s| guaranteed_reach(&g, &[t]).contains(s)));
            }
        }
        if c.sure_test() {
            prop_assert!(c.almost_sure_test());
        }
        match c.verdict {
            Verdict::Ergodic => prop_assert_eq!(c.components.len(), 1),
            Verdict::SureErgodic => prop_assert!(c.sure_test()),
            Verdict::AlmostSureErgodic => prop_assert!(c.almost_sure_test() && !c.sure_test()),
            Verdict::None => prop_assert!(!c.almost_sure_test()),
        }
    }

    #[test]
    fn game_documents_round_trip(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let n = rng.gen_range(1..=5);
        let g = random_game(&mut rng, n, 3, 4);
        let text = serialize_game(&g);
        let back = parse_game(&text).unwrap();
        prop_assert_eq!(serialize_game(&back), text);
        prop_assert_eq!(fingerprint(&back), fingerprint(&g));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Strategy iteration never claims more than the value, and with a fine
    /// grid gets close to it; the unrounded fixpoint lands in the bracket.
    #[test]
    fn strategy_iteration_agrees_with_value_iteration(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let n = rng.gen_range(2..=4);
        let g = random_game_where(&mut rng, n, 3, 3, |g| classify(g).is_ergodic());
        let vi = solvers::value_iteration(&g, 20_000, false).unwrap();
        let (lo, hi) = vi.bracket;
        let si = solvers::var_hoffman_karp(&g, &ratio(1, 1), 0, Some(500), &SolverConfig::default()).unwrap();
        prop_assert!(si.gain <= hi + 1e-9, "gain {} above bracket [{}, {}]", si.gain, lo, hi);
        prop_assert!(si.gain >= lo - 0.05, "gain {} far below bracket [{}, {}]", si.gain, lo, hi);
        let a = etr::fixpoint_assignment(&g, 0, 200).unwrap();
        let v = a["g"] * g.reward_scale_f64();
        prop_assert!(lo - 1e-7 <= v && v <= hi + 1e-7, "fixpoint {} outside [{}, {}]", v, lo, hi);
    }
}

#[test]
fn expected_return_time_of_the_slow_chain() {
    // Every state of the family has one action per player, so one profile
    // covers all of them.
    for (k, den) in [(2u32, 16i64), (3, 20), (4, 24)] {
        let eta = ratio(1, den);
        let (g, _) = gen_lower_bound(k, &eta).unwrap();
        let s1 = StationaryStrategy::uniform(&g, Player::One);
        let s2 = StationaryStrategy::uniform(&g, Player::Two);
        let a = g.state_index("a").unwrap();
        let inv = (den as f64).powi(k as i32);
        for name in [format!("s{k}"), format!("s{k}_bar")] {
            let l = solvers::hitting_time(&g, &s1, &s2, g.state_index(&name).unwrap(), a).unwrap();
            assert!(inv < l && l < k as f64 * inv && l < 2.0 * inv + k as f64, "k={k}: {l} vs {inv}");
        }
    }
}

#[test]
fn low_patience_strategy_value_follows_the_closed_form() {
    // Against the reply that plays j1 at c and j2 at c_bar (entering the slow
    // chains), the value is the renewal ratio over one cycle through a.
    let eta = ratio(1, 16);
    let (g, _) = gen_lower_bound(2, &eta).unwrap();
    let star = lower_bound_sigma_star(&g, 2, &eta).unwrap();
    let a = g.state_index("a").unwrap();
    let br = best_response_potentials(&g, &star, a, default_pi_cap(&g)).unwrap();
    let reply = StationaryStrategy::positional(&g, Player::Two, &br.policy).unwrap();
    let v = solvers::evaluate_profile(&g, &star, &reply, a).unwrap();
    assert!((br.gain - v).abs() < 1e-9);
    assert!(v < 23.0 / 48.0, "{v}");
}
