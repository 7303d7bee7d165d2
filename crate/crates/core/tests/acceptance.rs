//! Acceptance run: prints one PASS/FAIL line per criterion.
//!
//! Built with `harness = false` so the report reaches the terminal under
//! `cargo test`. A FAIL line is a finding, not a test failure; only a panic
//! (a bug in this driver) makes the target fail.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use segfeed::binary::{segbits_delta_prime, BinaryOptions, SegBiTSState, TransitionEstimate};
use segfeed::design::{
    design_for_spec, round_schedule, solve_e_optimal, CovarianceMethod, DesignProblem, DEFAULT_GAMMA,
};
use segfeed::feedback::{gen_binary_feedback, gen_sum_feedback, sigmoid};
use segfeed::harness::{emit_results, run_sweep, Algorithm, ExperimentConfig, SweepResult};
use segfeed::instances::{build, InstanceRecipe};
use segfeed::linalg::{cholesky, inv_quadratic_form, inverse_spectral_norm, min_eigenvalue, sym_eigen};
use segfeed::logistic::{alpha, lambda_matrix, mle_fit, neg_log_likelihood, nu, BinaryDataset, ConfidenceParams};
use segfeed::mdp::{enumerate_stationary_policies, occupancy, plan_optimal, simulate_episode, DEFAULT_POLICY_CAP};
use segfeed::rng::{cell_stream, StreamKind};
use segfeed::sum::{
    beta, bonus_recursion, elinucb_delta_prime, elinucb_lambda, elinucb_select, linucb_tran_delta_prime, tran_log_term,
    visitation_value, ELinUcb, SumDataset, SumOptions, SumParams,
};
use segfeed::{MdpSpec, Policy, Transition};

const M_GRID: [usize; 5] = [1, 2, 4, 10, 20];
const DELTA: f64 = 0.005;

#[derive(Default)]
struct Report {
    passed: usize,
    failed: Vec<String>,
}

impl Report {
    fn line(&mut self, id: &str, ok: bool, detail: impl AsRef<str>) {
        println!("{} {id}: {}", if ok { "PASS" } else { "FAIL" }, detail.as_ref());
        if ok {
            self.passed += 1;
        } else {
            self.failed.push(id.to_string());
        }
    }

    fn info(&self, id: &str, detail: impl AsRef<str>) {
        println!("INFO {id}: {}", detail.as_ref());
    }
}

fn config(value: serde_json::Value) -> ExperimentConfig {
    let cfg: ExperimentConfig = serde_json::from_value(value).expect("config parses");
    cfg.validate().expect("config is valid");
    cfg
}

fn random_transition(rng: &mut ChaCha8Rng, n_s: usize, n_a: usize) -> Transition {
    let mut probs = Vec::with_capacity(n_s * n_a * n_s);
    for _ in 0..n_s * n_a {
        let row: Vec<f64> = (0..n_s).map(|_| rng.random::<f64>() + 0.05).collect();
        let total: f64 = row.iter().sum();
        probs.extend(row.iter().map(|x| x / total));
    }
    Transition::new(n_s, n_a, probs).unwrap()
}

fn random_dist(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

fn random_policy(rng: &mut ChaCha8Rng, horizon: usize, n_s: usize, n_a: usize) -> Policy {
    let table = (0..horizon * n_s).map(|_| rng.random_range(0..n_a)).collect();
    Policy::nonstationary(horizon, n_s, table).unwrap()
}

fn random_spec(rng: &mut ChaCha8Rng, n_s: usize, n_a: usize, horizon: usize, m: usize) -> MdpSpec {
    let spec = MdpSpec {
        num_states: n_s,
        num_actions: n_a,
        horizon,
        num_segments: m,
        r_max: 0.5,
        reward: (0..n_s * n_a).map(|_| rng.random_range(-0.5..0.5)).collect(),
        transition: random_transition(rng, n_s, n_a),
        init_dist: random_dist(rng, n_s),
    };
    spec.validate().unwrap();
    spec
}

fn cell_means(result: &SweepResult, alg: Algorithm) -> Vec<Option<f64>> {
    M_GRID
        .iter()
        .map(|&m| {
            let failed = result.failures.iter().any(|f| f.algorithm == alg && f.m == m);
            if failed {
                None
            } else {
                result.cell(alg, m).map(|c| c.mean)
            }
        })
        .collect()
}

fn fmt_means(means: &[Option<f64>]) -> String {
    M_GRID
        .iter()
        .zip(means)
        .map(|(m, v)| match v {
            Some(v) => format!("m={m}: {v:.1}"),
            None => format!("m={m}: failed"),
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn strictly_decreasing(means: &[Option<f64>]) -> bool {
    means.iter().all(Option::is_some) && means.windows(2).all(|w| w[0].unwrap() > w[1].unwrap())
}

/// Binary feedback: regret falls as `m` grows.
fn criterion_1(report: &mut Report) {
    let cfg = config(json!({
        "instance": {"family": "binary_experiment", "horizon": 20, "r_max": 0.5},
        "algorithms": ["segbits", "segbits_tran"],
        "K": 5000,
        "m_values": M_GRID,
        "seeds": {"base_seed": 0, "repeats": 20},
        "delta": DELTA,
    }));
    let start = Instant::now();
    let result = run_sweep(&cfg).expect("binary sweep runs");
    let elapsed = start.elapsed().as_secs_f64();

    let segbits = cell_means(&result, Algorithm::Segbits);
    report.line("1 segbits ordering", strictly_decreasing(&segbits), fmt_means(&segbits));
    match (segbits[1], segbits[4]) {
        (Some(r2), Some(r20)) => {
            let ratio = r20 / r2;
            report.line(
                "1 segbits ratio",
                ratio <= 0.5 * 1.2,
                format!("regret(20)/regret(2) = {ratio:.4} (limit 0.6)"),
            );
        }
        _ => report.line("1 segbits ratio", false, "missing cell"),
    }
    let tran = cell_means(&result, Algorithm::SegbitsTran);
    report.line("1 segbits_tran ordering", strictly_decreasing(&tran), fmt_means(&tran));
    report.line("1 runtime", elapsed <= 900.0, format!("{elapsed:.0}s for 200 runs (limit 900s)"));
}

/// Sum feedback: regret is insensitive to `m`.
fn criterion_2(report: &mut Report) {
    let cfg = config(json!({
        "instance": {"family": "sum_experiment", "horizon": 20, "r_max": 0.5},
        "algorithms": ["elinucb", "linucb_tran"],
        "K": 1000,
        "m_values": M_GRID,
        "seeds": {"base_seed": 0, "repeats": 20},
        "delta": DELTA,
    }));
    let start = Instant::now();
    let result = run_sweep(&cfg).expect("sum sweep runs");
    let elapsed = start.elapsed().as_secs_f64();

    for alg in [Algorithm::Elinucb, Algorithm::LinucbTran] {
        let means = cell_means(&result, alg);
        let ok: Vec<f64> = means.iter().flatten().copied().collect();
        let ratio = |v: &[f64]| v.iter().copied().fold(f64::MIN, f64::max) / v.iter().copied().fold(f64::MAX, f64::min);
        let id = format!("2 {alg} max/min");
        if ok.len() == means.len() {
            let r = ratio(&ok);
            report.line(&id, r <= 2.0, format!("{r:.4} (limit 2.0); {}", fmt_means(&means)));
        } else {
            let first =
                result.failures.iter().find(|f| f.algorithm == alg).map(|f| f.error.clone()).unwrap_or_default();
            report.line(&id, false, format!("{}; first error: {first}", fmt_means(&means)));
            if ok.len() >= 2 {
                report.info(&id, format!("ratio over the cells that ran: {:.4}", ratio(&ok)));
            }
        }
        let init: Vec<String> = result
            .records
            .iter()
            .filter(|r| r.algorithm == alg && r.seed == 0 && r.initialization_episodes > 0)
            .map(|r| format!("m={}: {}", r.m, r.initialization_episodes))
            .collect();
        if !init.is_empty() {
            report.info(&id, format!("design episodes inside K = 1000: {}", init.join(", ")));
        }
    }
    report.line("2 runtime", elapsed <= 600.0, format!("{elapsed:.0}s for 200 runs (limit 600s)"));

    // supplementary: how often LinUCB-Tran plays an optimal policy late in the run
    for m in M_GRID {
        let records: Vec<_> =
            result.records.iter().filter(|r| r.algorithm == Algorithm::LinucbTran && r.m == m).collect();
        let hits: usize =
            records.iter().map(|r| r.instant[r.instant.len() - 200..].iter().filter(|&&g| g <= 1e-9).count()).sum();
        let rate = hits as f64 / (200 * records.len()).max(1) as f64;
        report.line(
            &format!("2+ linucb_tran optimal share m={m}"),
            rate >= 0.9,
            format!("{rate:.3} of the last 200 episodes over {} seeds (limit 0.9)", records.len()),
        );
    }
}

/// E-LinUCB selection on top of a large pre-collected dataset of random stationary policies.
fn elinucb_abundant(report: &mut Report) {
    let m = 2;
    let spec =
        build(&InstanceRecipe::SumExperiment { horizon: 20, num_segments: m, r_max: 0.5, optimal_action: 0 }).unwrap();
    let theta_star = spec.reward_vector();
    let policies =
        enumerate_stationary_policies(spec.num_states, spec.num_actions, spec.horizon, DEFAULT_POLICY_CAP).unwrap();
    let occupancies: Vec<DVector<f64>> =
        policies.iter().map(|p| occupancy(&spec.transition, &spec.init_dist, p, spec.horizon).into_inner()).collect();
    let values: Vec<f64> = occupancies.iter().map(|phi| phi.dot(&theta_star)).collect();
    let v_star = values.iter().copied().fold(f64::MIN, f64::max);
    let params = SumParams {
        num_states: spec.num_states,
        num_actions: spec.num_actions,
        horizon: spec.horizon,
        num_segments: m,
        r_max: spec.r_max,
        lambda: elinucb_lambda(spec.horizon, spec.r_max, m),
        delta_prime: elinucb_delta_prime(DELTA),
    };
    let (prefill, episodes, tail) = (20_000, 150, 100);
    let (mut hits, mut worst) = (0usize, usize::MAX);
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + seed);
        let mut data = SumDataset::new(spec.dim(), params.lambda).unwrap();
        let mut played = 0usize;
        let play = |policy: &Policy, data: &mut SumDataset, rng: &mut ChaCha8Rng| {
            let traj = simulate_episode(&spec, policy, rng);
            let fb = gen_sum_feedback(&traj, &theta_star, m, rng).unwrap();
            data.push_episode(&traj, &fb, m).unwrap();
        };
        for _ in 0..prefill {
            let j = rng.random_range(0..policies.len());
            play(&policies[j], &mut data, &mut rng);
            played += 1;
        }
        let mut seed_hits = 0;
        for k in 0..episodes {
            let j = elinucb_select(&data, &occupancies, beta(played as f64, &params)).unwrap();
            if k >= episodes - tail && values[j] >= v_star - 1e-9 {
                seed_hits += 1;
            }
            play(&policies[j], &mut data, &mut rng);
            played += 1;
        }
        hits += seed_hits;
        worst = worst.min(seed_hits);
    }
    let rate = hits as f64 / (20 * tail) as f64;
    report.line(
        "2+ elinucb abundant data",
        rate >= 0.95,
        format!("optimal in {rate:.3} of the last {tail} episodes over 20 seeds after {prefill} random episodes, m={m} (limit 0.95; worst seed {worst}/{tail})"),
    );
}

/// Random segment data: `k` episodes of `m` segments with `H/m` visits each.
fn random_binary_data(rng: &mut ChaCha8Rng, dim: usize, k: usize, m: usize, h: usize, lambda: f64) -> BinaryDataset {
    let mut data = BinaryDataset::new(dim, lambda).unwrap();
    for _ in 0..k * m {
        let mut phi = DVector::zeros(dim);
        for _ in 0..h / m {
            phi[rng.random_range(0..dim)] += 1.0;
        }
        data.push(&phi, rng.random_bool(0.5)).unwrap();
    }
    data
}

fn criterion_3a(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(301);
    let (mut det_bad, mut dom_bad) = (0, 0);
    let mut worst_dom = f64::INFINITY;
    for _ in 0..1000 {
        let dim = rng.random_range(2..=6);
        let h = [4, 6, 12][rng.random_range(0..3)];
        let divisors: Vec<usize> = (1..=h).filter(|m| h % m == 0).collect();
        let m = divisors[rng.random_range(0..divisors.len())];
        let k = rng.random_range(1..=30);
        let lambda = [0.5, 1.0, 2.0][rng.random_range(0..3)];
        let r_max = 0.5;
        let data = random_binary_data(&mut rng, dim, k, m, h, lambda);
        let theta = DVector::from_fn(dim, |_, _| rng.random_range(-r_max..r_max));
        let lam = lambda_matrix(&theta, &data).unwrap();

        let log_det: f64 = sym_eigen(&lam).0.iter().map(|e| e.ln()).sum();
        let log_bound = dim as f64 * (((h * h) as f64 * 0.25 * k as f64) / (dim * m) as f64 + lambda).ln();
        if log_det > log_bound + 1e-9_f64.ln_1p() {
            det_bad += 1;
        }

        let a = alpha(h, r_max, m);
        let sigma = data.gram() + DMatrix::identity(dim, dim) * (a * lambda);
        let gap = min_eigenvalue(&(lam * a - sigma));
        worst_dom = worst_dom.min(gap);
        if gap < -1e-9 {
            dom_bad += 1;
        }
    }
    report.line("3a det bound", det_bad == 0, format!("{det_bad} violations in 1000 datasets"));
    report.line(
        "3a sigma <= alpha lambda",
        dom_bad == 0,
        format!("{dom_bad} violations in 1000 datasets (smallest eigenvalue of the gap {worst_dom:.3e})"),
    );
}

fn criterion_3b(report: &mut Report) {
    // one state, two actions, unit-length segments: K0 stays small enough to pass
    let spec: MdpSpec = serde_json::from_value(json!({
        "num_states": 1, "num_actions": 2, "horizon": 2, "num_segments": 2, "r_max": 0.5,
        "reward": [0.5, 0.2], "transition": [1.0, 1.0], "init_dist": [1.0],
    }))
    .unwrap();
    let design =
        design_for_spec(&spec, DEFAULT_POLICY_CAP, DEFAULT_GAMMA, elinucb_delta_prime(DELTA), CovarianceMethod::Exact)
            .expect("design solves");
    let episodes = 5000;
    let theta_star = spec.reward_vector();
    let (mut violations, mut checked) = (0usize, 0usize);
    let mut worst: f64 = 0.0;
    let mut min_eig_ok = 0;
    for seed in 0..20 {
        let mut learner = ELinUcb::new(&spec, DELTA, &design, &SumOptions::default()).unwrap();
        let mut env = cell_stream(seed, spec.num_segments, StreamKind::Environment);
        for _ in 0..episodes {
            let post_init = !learner.in_initialization();
            if learner.completed_episodes() == learner.k0() {
                let d = spec.dim();
                let gram = learner.data().sigma() - DMatrix::identity(d, d) * learner.data().lambda();
                if min_eigenvalue(&gram) >= (spec.horizon * spec.horizon) as f64 {
                    min_eig_ok += 1;
                }
            }
            let policy = learner.select().unwrap();
            let traj = simulate_episode(&spec, &policy, &mut env);
            if post_init {
                let p = learner.data().elliptical_potential(&traj, spec.num_segments).unwrap();
                worst = worst.max(p);
                checked += 1;
                if p > 1.0 + 1e-9 {
                    violations += 1;
                }
            }
            let fb = gen_sum_feedback(&traj, &theta_star, spec.num_segments, &mut env).unwrap();
            learner.observe(&traj, &fb).unwrap();
        }
    }
    report.line(
        "3b post-init potential",
        violations == 0 && checked > 0,
        format!("{violations} violations over {checked} episodes, 20 seeds, K0 = {} (max {worst:.3e})", design.k0),
    );
    report.info("3b design eigenvalue", format!("min eigenvalue of the design Gram >= H^2 on {min_eig_ok}/20 seeds"));
}

fn random_psd(rng: &mut ChaCha8Rng, d: usize, rank: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    for _ in 0..rank {
        let v = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        m += &v * v.transpose();
    }
    m
}

fn criterion_3c(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (mut solved, mut declined, mut bad) = (0, 0, 0);
    while solved + declined < 50 {
        let d = rng.random_range(2..=4);
        let n = rng.random_range(d..=d + 4);
        let mats: Vec<_> = (0..n)
            .map(|_| {
                let rank = rng.random_range(1..=d);
                random_psd(&mut rng, d, rank)
            })
            .collect();
        let policies = (0..n).map(|j| Policy::constant(1, 1, j)).collect();
        let problem = DesignProblem::new(policies, mats, DEFAULT_GAMMA, 0.01).unwrap();
        let Ok(sol) = solve_e_optimal(&problem) else { continue };
        let k0 = (d as f64 / (DEFAULT_GAMMA * DEFAULT_GAMMA)).ceil() as u64 + rng.random_range(0..200);
        match round_schedule(&problem, &sol.weights, k0) {
            Ok(schedule) => {
                solved += 1;
                let realized = inverse_spectral_norm(&schedule.realized(&problem));
                let continuous = inverse_spectral_norm(&(problem.mixture(&sol.weights) * k0 as f64));
                if schedule.len() != k0 || realized > (1.0 + DEFAULT_GAMMA) * continuous * (1.0 + 1e-9) {
                    bad += 1;
                }
            }
            Err(_) => declined += 1,
        }
    }
    report.line(
        "3c rounding guarantee",
        bad == 0,
        format!("{bad} bad schedules returned as success; {solved} rounded, {declined} reported as errors"),
    );
}

fn criterion_3d(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(304);
    let spec = random_spec(&mut rng, 2, 2, 3, 1);
    let target_policy = random_policy(&mut rng, spec.horizon, 2, 2);
    let truth = occupancy(&spec.transition, &spec.init_dist, &target_policy, spec.horizon);
    let delta_prime = linucb_tran_delta_prime(DELTA);
    let histories = 200;
    let sizes = [30, 300, 3000, 30000];
    let mut violations = 0;
    let mut tightest = f64::INFINITY;
    for i in 0..histories {
        let episodes = sizes[i % sizes.len()];
        let mut est = TransitionEstimate::new(2, 2);
        for _ in 0..episodes {
            let behaviour = random_policy(&mut rng, spec.horizon, 2, 2);
            est.update(&simulate_episode(&spec, &behaviour, &mut rng)).unwrap();
        }
        let p_hat = est.p_hat();
        let counts = est.counts(true);
        let log_term = tran_log_term(2, 2, spec.horizon, episodes, delta_prime);
        let estimate = occupancy(&p_hat, &spec.init_dist, &target_policy, spec.horizon);
        let mut ok = true;
        for s in 0..2 {
            for a in 0..2 {
                let g = visitation_value(&p_hat, &target_policy, (s, a), spec.horizon);
                let b = bonus_recursion(&p_hat, counts, &target_policy, &g, spec.horizon, log_term)
                    .initial_value(&spec.init_dist);
                let err = (estimate[2 * s + a] - truth[2 * s + a]).abs();
                tightest = tightest.min(b - err);
                if err > b {
                    ok = false;
                }
            }
        }
        if !ok {
            violations += 1;
        }
    }
    let sigma = (delta_prime * (1.0 - delta_prime) / histories as f64).sqrt();
    let rate = violations as f64 / histories as f64;
    let limit = delta_prime + 3.0 * sigma;
    report.line(
        "3d visitation error",
        rate <= limit,
        format!(
            "violation rate {rate:.4} over {histories} histories (limit {limit:.4}); smallest margin {tightest:.3e}"
        ),
    );
}

fn criterion_3e(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(305);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (n_s, n_a, h) = (rng.random_range(1..=4), rng.random_range(1..=3), rng.random_range(1..=6));
        let transition = random_transition(&mut rng, n_s, n_a);
        let init = random_dist(&mut rng, n_s);
        let policy = random_policy(&mut rng, h, n_s, n_a);
        let occ = occupancy(&transition, &init, &policy, h);
        for s in 0..n_s {
            for a in 0..n_a {
                let g = visitation_value(&transition, &policy, (s, a), h);
                let expected: f64 = init.iter().zip(&g[0]).map(|(p, v)| p * v).sum();
                worst = worst.max((expected - occ[s * n_a + a]).abs());
            }
        }
    }
    report.line("3e G equals occupancy", worst <= 1e-9, format!("max deviation {worst:.3e} over 100 pairs"));
}

fn criterion_4(report: &mut Report) {
    // stationarity on one coordinate: c·μ(c·t) + t = c
    let mut worst_mle: f64 = 0.0;
    for c in [0.5, 1.0, 2.0, 3.0, 5.0, 10.0, 20.0] {
        let mut data = BinaryDataset::new(4, 1.0).unwrap();
        data.push_sparse(&[(2, c)], true).unwrap();
        let theta = mle_fit(&data, None).unwrap();
        let f = |t: f64| c * sigmoid(c * t) + t - c;
        let (mut lo, mut hi) = (0.0, c);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let off: f64 = [0, 1, 3].iter().map(|&j| theta[j].abs()).sum();
        worst_mle = worst_mle.max((theta[2] - 0.5 * (lo + hi)).abs()).max(off);
    }
    report.line("4 MLE vs bisection", worst_mle <= 1e-6, format!("max error {worst_mle:.3e}"));

    let mut rng = ChaCha8Rng::seed_from_u64(400);
    let mut worst_ridge: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.random_range(2..=8);
        let lambda = rng.random_range(0.1..10.0);
        let mut data = SumDataset::new(d, lambda).unwrap();
        // existing data, then one more observation folded in by Sherman-Morrison
        for _ in 0..rng.random_range(0..5) {
            let f: Vec<(usize, f64)> = (0..d).map(|j| (j, rng.random_range(0.0..3.0_f64).floor())).collect();
            data.push_sparse(&f, rng.random_range(-2.0..2.0)).unwrap();
        }
        let sigma_inv = data.sigma().clone().try_inverse().unwrap();
        let xty = data.xty().clone();
        let phi = DVector::from_fn(d, |_, _| rng.random_range(0.0..4.0_f64).floor());
        let r = rng.random_range(-3.0..3.0);
        let u = &sigma_inv * &phi;
        let updated = &sigma_inv - &u * u.transpose() / (1.0 + phi.dot(&u));
        let want = updated * (xty + &phi * r);
        let sparse: Vec<(usize, f64)> = phi.iter().enumerate().map(|(j, &v)| (j, v)).collect();
        data.push_sparse(&sparse, r).unwrap();
        let got = data.ridge_fit().unwrap();
        worst_ridge = worst_ridge.max((got - want).amax());
    }
    report.line("4 ridge vs Sherman-Morrison", worst_ridge <= 1e-10, format!("max error {worst_ridge:.3e}"));

    let mut worst_grad: f64 = 0.0;
    for _ in 0..50 {
        let dim = rng.random_range(2..=6);
        let (k, lambda) = (rng.random_range(1..20), rng.random_range(0.5..2.0));
        let data = random_binary_data(&mut rng, dim, k, 2, 6, lambda);
        let theta = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
        let (_, grad, _) = neg_log_likelihood(&theta, &data).unwrap();
        let step = 1e-5;
        let fd = DVector::from_fn(dim, |j, _| {
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            plus[j] += step;
            minus[j] -= step;
            let v = |t: &DVector<f64>| neg_log_likelihood(t, &data).unwrap().0;
            (v(&plus) - v(&minus)) / (2.0 * step)
        });
        worst_grad = worst_grad.max((fd - &grad).norm() / grad.norm().max(1.0));
    }
    report.line(
        "4 MLE gradient vs finite differences",
        worst_grad <= 1e-6,
        format!("max relative error {worst_grad:.3e}"),
    );
}

/// Every count vector of total `len` over `dim` coordinates.
fn segment_features(dim: usize, len: usize) -> Vec<DVector<f64>> {
    if dim == 1 {
        return vec![DVector::from_element(1, len as f64)];
    }
    let mut out = Vec::new();
    for first in 0..=len {
        for rest in segment_features(dim - 1, len - first) {
            out.push(DVector::from_fn(dim, |j, _| if j == 0 { first as f64 } else { rest[j - 1] }));
        }
    }
    out
}

fn criterion_5(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let spec = random_spec(&mut rng, 2, 2, 4, 2);
    let theta_star = spec.reward_vector();
    let params = ConfidenceParams {
        num_states: 2,
        num_actions: 2,
        horizon: spec.horizon,
        num_segments: spec.num_segments,
        r_max: spec.r_max,
        lambda: 1.0,
        delta_prime: segbits_delta_prime(DELTA),
    };
    let features = segment_features(spec.dim(), spec.segment_len());
    let datasets = 200;
    let episodes = 100;
    let mut covered = 0;
    let mut first_covered: Option<SegBiTSState> = None;
    for _ in 0..datasets {
        let mut state = SegBiTSState::new(params, BinaryOptions::default()).unwrap();
        for _ in 0..episodes {
            let policy = random_policy(&mut rng, spec.horizon, 2, 2);
            let traj = simulate_episode(&spec, &policy, &mut rng);
            let fb = gen_binary_feedback(&traj, &theta_star, spec.num_segments, &mut rng).unwrap();
            state.update(&traj, &fb).unwrap();
        }
        let theta_hat = state.theta_hat().unwrap().clone();
        let chol = cholesky(state.sigma()).unwrap();
        let radius = state.alpha().sqrt() * nu(episodes as f64, &params);
        let holds = features.iter().all(|phi| {
            (phi.dot(&theta_star) - phi.dot(&theta_hat)).abs() <= radius * inv_quadratic_form(&chol, phi).sqrt()
        });
        if holds {
            covered += 1;
            first_covered.get_or_insert(state);
        }
    }
    let sigma = (DELTA * (1.0 - DELTA) / datasets as f64).sqrt();
    let rate = covered as f64 / datasets as f64;
    let limit = 1.0 - DELTA - 3.0 * sigma;
    report.line(
        "5 confidence coverage",
        rate >= limit,
        format!("{covered}/{datasets} datasets covered (rate {rate:.4}, limit {limit:.4})"),
    );

    let Some(mut state) = first_covered else {
        report.line("5 anti-concentration", false, "no dataset with the confidence event to sample from");
        return;
    };
    let (best, _) = plan_optimal(&spec.transition, &spec.init_dist, spec.reward.as_slice(), spec.horizon);
    let phi_star = occupancy(&spec.transition, &spec.init_dist, &best, spec.horizon).into_inner();
    let target = phi_star.dot(&theta_star);
    let draws = 100_000;
    let mut noise = ChaCha8Rng::seed_from_u64(501);
    let mut above = 0;
    for _ in 0..draws {
        if phi_star.dot(&state.sample_reward(&mut noise).unwrap()) > target {
            above += 1;
        }
    }
    let p0 = 1.0 / (2.0 * (2.0 * std::f64::consts::PI * std::f64::consts::E).sqrt());
    let limit = p0 - 3.0 * (p0 * (1.0 - p0) / draws as f64).sqrt();
    let rate = above as f64 / draws as f64;
    report.line(
        "5 anti-concentration",
        rate >= limit,
        format!("optimistic rate {rate:.4} over {draws} draws (limit {limit:.4})"),
    );
}

fn criterion_6(report: &mut Report) {
    let binary = config(json!({
        "instance": {"family": "binary_experiment", "horizon": 20, "r_max": 0.5},
        "algorithms": ["segbits", "segbits_tran"],
        "K": 150,
        "m_values": [2, 10],
        "seeds": [3, 4, 5],
        "delta": DELTA,
    }));
    let sum = config(json!({
        "instance": {"family": "sum_experiment", "horizon": 20, "r_max": 0.5},
        "algorithms": ["elinucb", "linucb_tran"],
        "K": 60,
        "m_values": [2, 10],
        "seeds": [3, 4, 5],
        "delta": DELTA,
    }));
    let dir = tempfile::tempdir().unwrap();
    let mut identical = true;
    let mut detail = Vec::new();
    for (name, cfg) in [("binary", binary), ("sum", sum)] {
        let mut runs = Vec::new();
        for (i, threads) in [Some(1), Some(3), Some(1)].into_iter().enumerate() {
            let mut c = cfg.clone();
            c.threads = threads;
            let out = dir.path().join(format!("{name}-{i}"));
            let result = run_sweep(&c).expect("sweep runs");
            emit_results(&result, &c, &out).expect("results are written");
            runs.push(std::fs::read(out.join("curves.csv")).unwrap());
        }
        let same = runs.windows(2).all(|w| w[0] == w[1]);
        identical &= same;
        detail.push(format!("{name}: {} bytes x3 {}", runs[0].len(), if same { "identical" } else { "differ" }));
    }
    report.line("6 determinism", identical, detail.join("; "));
}

fn main() {
    // `cargo test` forwards filters and flags; `--list` must print nothing
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut report = Report::default();
    let start = Instant::now();
    criterion_3a(&mut report);
    criterion_3b(&mut report);
    criterion_3c(&mut report);
    criterion_3d(&mut report);
    criterion_3e(&mut report);
    criterion_4(&mut report);
    criterion_5(&mut report);
    criterion_6(&mut report);
    elinucb_abundant(&mut report);
    criterion_2(&mut report);
    criterion_1(&mut report);
    println!(
        "acceptance: {} passed, {} failed ({}) in {:.0}s",
        report.passed,
        report.failed.len(),
        report.failed.join(", "),
        start.elapsed().as_secs_f64()
    );
}
