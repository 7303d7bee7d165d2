//! Seeded Monte Carlo checks of the learners' statistical properties.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use segfeed::binary::{
    bpv_bonus, segbits_tran_delta_prime, BinaryOptions, BonusParams, SegBiTSState, TransitionEstimate,
};
use segfeed::feedback::{gen_binary_feedback, gen_sum_feedback};
use segfeed::instances::{build, InstanceRecipe};
use segfeed::logistic::ConfidenceParams;
use segfeed::mdp::{enumerate_stationary_policies, occupancy, plan_optimal, simulate_episode, DEFAULT_POLICY_CAP};
use segfeed::sum::{beta, elinucb_lambda, total_visitation_bonus, ucb_index, LinUcbTran, SumDataset, SumOptions};
use segfeed::{MdpSpec, Policy, Transition};

fn sum_instance(m: usize) -> MdpSpec {
    build(&InstanceRecipe::SumExperiment { horizon: 20, num_segments: m, r_max: 0.5, optimal_action: 0 }).unwrap()
}

/// 2 states, 2 actions with distinct rewards; action 1 mostly switches state.
fn small_spec(horizon: usize, m: usize) -> MdpSpec {
    MdpSpec {
        num_states: 2,
        num_actions: 2,
        horizon,
        num_segments: m,
        r_max: 0.5,
        reward: vec![0.1, -0.3, 0.5, 0.2],
        transition: Transition::new(2, 2, vec![0.8, 0.2, 0.15, 0.85, 0.3, 0.7, 0.9, 0.1]).unwrap(),
        init_dist: vec![0.6, 0.4],
    }
}

#[test]
fn ridge_estimate_of_a_policy_value_is_consistent() {
    let spec = sum_instance(2);
    let theta_star = spec.reward_vector();
    let policy = Policy::constant(spec.horizon, spec.num_states, 0);
    let phi = occupancy(&spec.transition, &spec.init_dist, &policy, spec.horizon).into_inner();
    let lambda = elinucb_lambda(spec.horizon, spec.r_max, spec.num_segments);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut data = SumDataset::new(spec.dim(), lambda).unwrap();
    for _ in 0..2000 {
        let traj = simulate_episode(&spec, &policy, &mut rng);
        let fb = gen_sum_feedback(&traj, &theta_star, spec.num_segments, &mut rng).unwrap();
        data.push_episode(&traj, &fb, spec.num_segments).unwrap();
    }
    let theta_hat = data.ridge_fit().unwrap();
    // θ̂ = Σ⁻¹Xᵀy with per-segment noise variance H/m, so Var(φᵀθ̂) = (H/m)·φᵀΣ⁻¹(Σ - λI)Σ⁻¹φ
    let chol = data.factor().unwrap();
    let u = chol.solve(&phi);
    let gram_u = data.sigma() * &u - &u * lambda;
    let std = (spec.segment_len() as f64 * u.dot(&gram_u)).sqrt();
    let err = (phi.dot(&theta_hat) - phi.dot(&theta_star)).abs();
    assert!(err <= 3.0 * std, "error {err} vs std {std}");
}

#[test]
fn linucb_tran_index_of_the_optimum_is_optimistic() {
    let delta = 0.05;
    let (seeds, episodes) = (200, 15);
    let spec = small_spec(4, 2);
    let theta_star = spec.reward_vector();
    let policies = enumerate_stationary_policies(2, 2, spec.horizon, DEFAULT_POLICY_CAP).unwrap();
    let values: Vec<f64> = policies
        .iter()
        .map(|p| occupancy(&spec.transition, &spec.init_dist, p, spec.horizon).dot(&theta_star))
        .collect();
    let (star, v_star) = values.iter().copied().enumerate().fold((0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
    let (mut optimistic, mut total) = (0usize, 0usize);
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut learner = LinUcbTran::new(&spec, delta, episodes, policies.clone(), &SumOptions::default()).unwrap();
        for k in 0..episodes {
            let p_hat = learner.estimate().p_hat();
            let counts = learner.estimate().counts(true);
            let phi_hat = occupancy(&p_hat, &spec.init_dist, &policies[star], spec.horizon).into_inner();
            let theta_hat = learner.data().ridge_fit().unwrap();
            let chol = learner.data().factor().unwrap();
            let index = ucb_index(&phi_hat, &theta_hat, &chol, beta(k as f64, learner.params()))
                + total_visitation_bonus(
                    &p_hat,
                    counts,
                    &spec.init_dist,
                    &policies[star],
                    spec.horizon,
                    learner.log_term(),
                );
            total += 1;
            if v_star <= index {
                optimistic += 1;
            }
            let policy = learner.select().unwrap();
            let traj = simulate_episode(&spec, &policy, &mut rng);
            let fb = gen_sum_feedback(&traj, &theta_star, spec.num_segments, &mut rng).unwrap();
            learner.observe(&traj, &fb).unwrap();
        }
    }
    let rate = optimistic as f64 / total as f64;
    assert!(rate >= 1.0 - delta, "optimistic in {rate} of episodes");
}

#[test]
fn segbits_tran_sample_is_optimistic_often_enough() {
    let delta = 0.05;
    let (seeds, episodes) = (200, 20);
    let spec = small_spec(4, 2);
    let theta_star = spec.reward_vector();
    let (_, v_star) = plan_optimal(&spec.transition, &spec.init_dist, &spec.reward, spec.horizon);
    let delta_prime = segbits_tran_delta_prime(delta);
    let params = ConfidenceParams {
        num_states: 2,
        num_actions: 2,
        horizon: spec.horizon,
        num_segments: spec.num_segments,
        r_max: spec.r_max,
        lambda: 1.0,
        delta_prime,
    };
    let bonus = BonusParams {
        num_episodes: episodes,
        horizon: spec.horizon,
        r_max: spec.r_max,
        delta_prime,
        num_states: 2,
        num_actions: 2,
    };
    let mut optimistic = 0usize;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let mut state = SegBiTSState::new(params, BinaryOptions::default()).unwrap();
        let mut est = TransitionEstimate::new(2, 2);
        for _ in 0..episodes {
            // the planner's value is (φ̂^{π^k})ᵀθ̃^b for the policy it returns
            let theta = state.sample_reward(&mut rng).unwrap() + bpv_bonus(est.counts(true), &bonus);
            let (policy, v_hat) = plan_optimal(&est.p_hat(), &spec.init_dist, theta.as_slice(), spec.horizon);
            if v_hat > v_star {
                optimistic += 1;
            }
            let traj = simulate_episode(&spec, &policy, &mut rng);
            let fb = gen_binary_feedback(&traj, &theta_star, spec.num_segments, &mut rng).unwrap();
            state.update(&traj, &fb).unwrap();
            est.update(&traj).unwrap();
        }
    }
    // counting every episode as one where the concentration events hold makes the bound conservative
    let n = (seeds as usize * episodes) as f64;
    let p0 = 1.0 / (2.0 * (2.0 * std::f64::consts::PI * std::f64::consts::E).sqrt());
    let rate = optimistic as f64 / n;
    assert!(rate >= p0 - 3.0 * (p0 * (1.0 - p0) / n).sqrt(), "optimistic in {rate} of episodes");
}
