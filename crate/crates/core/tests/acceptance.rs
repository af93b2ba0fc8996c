//! End-to-end acceptance checks. Each test prints one PASS/FAIL line to stderr
//! (uncaptured, so it shows up in plain `cargo test` output) before asserting.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sgnav::controllers::{ControllerId, DdpgAgent, DdpgConfig};
use sgnav::harness::{evaluate_checkpoint, run_grid, train, ConfigSummary, ExperimentConfig, GridReport, TrainOptions};
use sgnav::nn::{grad_check, relative_error, Mlp, FD_STEP};
use sgnav::sim::{ActionBounds, Observation};
use sgnav::switch::{
    policy_gradient, BreakOrder, Construction, ControlVariates, ControlVariatesConfig, EpisodeTrace, SwitchConfig,
    SwitchPolicy, TraceStep,
};

const TOL_SIMPLEX: f64 = 1e-9;
const TOL_GRAD: f64 = 1e-4;
const BANDIT_EPISODES: usize = 100_000;
const SE_BOUND: f64 = 3.0;

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let mut err = std::io::stderr().lock();
    let tag = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(err, "[{tag}] criterion {id:>2} {name}: {detail}");
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Single linear layer whose logits are the input itself (first `head` coordinates).
fn logit_passthrough(construction: Construction, order: BreakOrder) -> SwitchPolicy {
    let cfg = SwitchConfig {
        construction,
        order,
        hidden: vec![],
        ..SwitchConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut policy = SwitchPolicy::new(3, &ControllerId::ALL, &cfg, &mut rng).unwrap();
    if let Some(net) = policy.network_mut() {
        let layer = &mut net.layers_mut()[0];
        let (o, i) = (layer.out_dim(), layer.in_dim());
        for r in 0..o {
            for c in 0..i {
                layer.weights_mut()[r * i + c] = if r == c { 1.0 } else { 0.0 };
            }
        }
        layer.bias_mut().iter_mut().for_each(|b| *b = 0.0);
    }
    policy
}

#[test]
fn c01_simplex() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let kinds = [
        (
            "stick-breaking order 1",
            Construction::StickBreaking,
            BreakOrder::DdpgPidOa,
        ),
        (
            "stick-breaking order 2",
            Construction::StickBreaking,
            BreakOrder::DdpgOaPid,
        ),
        ("softmax", Construction::Softmax, BreakOrder::DdpgPidOa),
        ("uniform", Construction::Uniform, BreakOrder::DdpgPidOa),
    ];
    let mut all = true;
    let mut detail = Vec::new();
    for (label, construction, order) in kinds {
        let policy = logit_passthrough(construction, order);
        let mut worst_sum: f64 = 0.0;
        let mut min_p = f64::INFINITY;
        for n in 0..10_000 {
            // mostly moderate logits, with some far into saturation
            let scale = if n % 10 == 0 { 40.0 } else { 4.0 };
            let logits: Vec<f64> = (0..3).map(|_| scale * normal(&mut rng)).collect();
            let xi = policy.distribution(&logits).unwrap();
            worst_sum = worst_sum.max((xi.iter().sum::<f64>() - 1.0).abs());
            min_p = min_p.min(xi.iter().copied().fold(f64::INFINITY, f64::min));
        }
        let ok = min_p >= 0.0 && worst_sum < TOL_SIMPLEX;
        all &= ok;
        detail.push(format!("{label} min xi {min_p:.1e} max |sum-1| {worst_sum:.1e}"));
    }
    report(1, "simplex", all, &detail.join("; "));
    assert!(all);
}

fn relu_safe(nets: &[&Mlp], inputs: &[&[f64]], batch: usize) -> bool {
    nets.iter()
        .zip(inputs)
        .all(|(net, x)| net.forward_trace(x, batch).unwrap().min_relu_margin(net) > 1e-3)
}

fn random_state(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Actor objective recomputed from forward passes only:
/// `mean_i Q(x_i, mu(x_i)) - lambda * mean_i |z_i|^2`, with `z` recovered by
/// inverting the output squashing.
fn actor_objective(agent: &DdpgAgent, states: &[f64], batch: usize) -> f64 {
    let dim = agent.state_dim();
    let mu = agent.actor().forward_batch(states, batch).unwrap();
    let lambda = agent.config().preact_penalty;
    let mut total = 0.0;
    for b in 0..batch {
        let (v, w) = (mu[2 * b], mu[2 * b + 1]);
        let mut input = states[b * dim..(b + 1) * dim].to_vec();
        input.extend([v, w]);
        let q = agent.critic().forward(&input).unwrap()[0];
        let zv = (v / (1.0 - v)).ln();
        let zw = w.atanh();
        total += q - lambda * (zv * zv + zw * zw);
    }
    total / batch as f64
}

#[test]
fn c02_gradient_fidelity() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let dim = Observation::feature_dim(3, 10);
    let mut lines = Vec::new();
    let mut all = true;

    // actor, through the critic's action gradient
    let config = DdpgConfig {
        hidden: vec![24, 24],
        ..DdpgConfig::default()
    };
    let mut agent = DdpgAgent::new(dim, ActionBounds::default(), config, &mut rng);
    for w in agent.actor_mut().layers_mut().last_mut().unwrap().weights_mut() {
        *w *= 100.0;
    }
    for w in agent.critic_mut().layers_mut().last_mut().unwrap().weights_mut() {
        *w *= 100.0;
    }
    let batch = 4;
    let states = loop {
        let s: Vec<f64> = (0..batch).flat_map(|_| random_state(&mut rng, dim)).collect();
        let mu = agent.actor().forward_batch(&s, batch).unwrap();
        let mut joint = Vec::new();
        for b in 0..batch {
            joint.extend_from_slice(&s[b * dim..(b + 1) * dim]);
            joint.extend_from_slice(&mu[2 * b..2 * b + 2]);
        }
        if relu_safe(&[agent.actor(), agent.critic()], &[&s, &joint], batch) {
            break s;
        }
    };
    let tape = agent.actor_gradient(&states, batch, agent.critic()).unwrap();
    let analytic = tape.flat();
    let mut probe = agent.clone();
    let mut worst: f64 = 0.0;
    for (k, a) in analytic.iter().enumerate() {
        let orig = probe.actor().param(k);
        probe.actor_mut().set_param(k, orig + FD_STEP);
        let up = actor_objective(&probe, &states, batch);
        probe.actor_mut().set_param(k, orig - FD_STEP);
        let down = actor_objective(&probe, &states, batch);
        probe.actor_mut().set_param(k, orig);
        worst = worst.max(relative_error(*a, (up - down) / (2.0 * FD_STEP)));
    }
    all &= worst < TOL_GRAD;
    lines.push(format!("actor {worst:.1e}"));

    // critic
    let joint: Vec<f64> = (0..batch).flat_map(|_| random_state(&mut rng, dim + 2)).collect();
    let r = grad_check(agent.critic(), &joint, TOL_GRAD).unwrap();
    all &= r.passed;
    lines.push(format!("critic {:.1e}", r.max_rel_error));

    // switch log-probability, every construction with parameters
    for (label, construction, order) in [
        ("switch sb1", Construction::StickBreaking, BreakOrder::DdpgPidOa),
        ("switch sb2", Construction::StickBreaking, BreakOrder::DdpgOaPid),
        ("switch softmax", Construction::Softmax, BreakOrder::DdpgPidOa),
    ] {
        let cfg = SwitchConfig {
            construction,
            order,
            ..SwitchConfig::default()
        };
        let mut policy = SwitchPolicy::new(dim, &ControllerId::ALL, &cfg, &mut rng).unwrap();
        for w in policy
            .network_mut()
            .unwrap()
            .layers_mut()
            .last_mut()
            .unwrap()
            .weights_mut()
        {
            *w *= 300.0;
        }
        let x = loop {
            let x = random_state(&mut rng, dim);
            if relu_safe(&[policy.network().unwrap()], &[&x], 1) {
                break x;
            }
        };
        let mut worst: f64 = 0.0;
        for s in 0..3 {
            let analytic = policy.log_prob_gradient(&x, s).unwrap().unwrap().flat();
            let mut probe = policy.clone();
            for (k, a) in analytic.iter().enumerate() {
                let net = probe.network_mut().unwrap();
                let orig = net.param(k);
                net.set_param(k, orig + FD_STEP);
                let up = probe.log_distribution(&x).unwrap()[s];
                probe.network_mut().unwrap().set_param(k, orig - FD_STEP);
                let down = probe.log_distribution(&x).unwrap()[s];
                probe.network_mut().unwrap().set_param(k, orig);
                worst = worst.max(relative_error(*a, (up - down) / (2.0 * FD_STEP)));
            }
        }
        all &= worst < TOL_GRAD;
        lines.push(format!("{label} {worst:.1e}"));
    }

    // input-dependent baseline
    let mut cv = ControlVariates::new(dim, &ControlVariatesConfig::default(), &mut rng);
    for w in cv.network_mut().layers_mut().last_mut().unwrap().weights_mut() {
        *w *= 100.0;
    }
    let xs = loop {
        let xs: Vec<f64> = (0..batch).flat_map(|_| random_state(&mut rng, dim)).collect();
        if relu_safe(&[cv.network()], &[&xs], batch) {
            break xs;
        }
    };
    let r = grad_check(cv.network(), &xs, TOL_GRAD).unwrap();
    all &= r.passed;
    lines.push(format!("b(x) {:.1e}", r.max_rel_error));

    report(2, "gradient fidelity (max rel. error < 1e-4)", all, &lines.join(", "));
    assert!(all);
}

/// Two equally likely contexts, three arms, Gaussian reward noise.
struct Bandit {
    means: [[f64; 3]; 2],
    noise: f64,
}

const BANDIT: Bandit = Bandit {
    means: [[1.0, 3.0, 2.0], [4.0, 0.5, 2.5]],
    noise: 1.0,
};

fn context(c: usize) -> Vec<f64> {
    if c == 0 {
        vec![1.0, 0.0]
    } else {
        vec![0.0, 1.0]
    }
}

fn bandit_policy(construction: Construction, seed: u64) -> SwitchPolicy {
    let cfg = SwitchConfig {
        construction,
        hidden: vec![],
        ..SwitchConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policy = SwitchPolicy::new(2, &ControllerId::ALL, &cfg, &mut rng).unwrap();
    let net = policy.network_mut().unwrap();
    for k in 0..net.num_params() {
        net.set_param(k, 0.8 * normal(&mut rng));
    }
    policy
}

fn expected_reward(policy: &SwitchPolicy) -> f64 {
    (0..2)
        .map(|c| {
            let xi = policy.distribution(&context(c)).unwrap();
            0.5 * xi.iter().zip(BANDIT.means[c]).map(|(p, r)| p * r).sum::<f64>()
        })
        .sum()
}

/// Exact gradient of the expected reward by central differences.
fn exact_gradient(policy: &SwitchPolicy) -> Vec<f64> {
    let mut probe = policy.clone();
    let n = policy.network().unwrap().num_params();
    (0..n)
        .map(|k| {
            let orig = probe.network().unwrap().param(k);
            probe.network_mut().unwrap().set_param(k, orig + FD_STEP);
            let up = expected_reward(&probe);
            probe.network_mut().unwrap().set_param(k, orig - FD_STEP);
            let down = expected_reward(&probe);
            probe.network_mut().unwrap().set_param(k, orig);
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

fn bandit_episode(policy: &SwitchPolicy, episode: usize, rng: &mut ChaCha8Rng) -> EpisodeTrace {
    let c = usize::from(rng.random_bool(0.5));
    let x = context(c);
    let xi = policy.distribution(&x).unwrap();
    let d = policy.decide(&xi, rng).unwrap();
    let r = BANDIT.means[c][d.index] + BANDIT.noise * normal(rng);
    EpisodeTrace {
        episode,
        steps: vec![TraceStep {
            observation: x,
            xi,
            decision: d.index,
            log_prob: d.log_prob,
        }],
        rewards: vec![r],
        ret: r,
    }
}

/// Running per-component mean and variance.
#[derive(Default)]
struct Moments {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn push(&mut self, g: &[f64]) {
        if self.mean.is_empty() {
            self.mean = vec![0.0; g.len()];
            self.m2 = vec![0.0; g.len()];
        }
        self.n += 1.0;
        for (k, v) in g.iter().enumerate() {
            let d = v - self.mean[k];
            self.mean[k] += d / self.n;
            self.m2[k] += d * (v - self.mean[k]);
        }
    }

    fn variance(&self, k: usize) -> f64 {
        self.m2[k] / (self.n - 1.0)
    }

    fn total_variance(&self) -> f64 {
        (0..self.mean.len()).map(|k| self.variance(k)).sum()
    }
}

fn warmed_variates(policy: &SwitchPolicy, rng: &mut ChaCha8Rng, episodes: usize) -> ControlVariates {
    let mut cv = ControlVariates::new(2, &ControlVariatesConfig::default(), rng);
    for n in 0..episodes {
        let t = bandit_episode(policy, n, rng);
        cv.update(std::slice::from_ref(&t)).unwrap();
    }
    cv
}

#[test]
fn c03_reinforce_unbiased() {
    let mut all = true;
    let mut lines = Vec::new();
    for (label, construction, with_cv) in [
        ("stick-breaking", Construction::StickBreaking, false),
        ("softmax", Construction::Softmax, false),
        ("stick-breaking + control variates", Construction::StickBreaking, true),
    ] {
        let policy = bandit_policy(construction, 3);
        let exact = exact_gradient(&policy);
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let cv = with_cv.then(|| warmed_variates(&policy, &mut rng, 2_000));
        let mut m = Moments::default();
        for n in 0..BANDIT_EPISODES {
            let t = bandit_episode(&policy, n, &mut rng);
            let (tape, _) = policy_gradient(&policy, cv.as_ref(), std::slice::from_ref(&t)).unwrap();
            m.push(&tape.unwrap().flat());
        }
        let worst = (0..exact.len())
            .map(|k| (m.mean[k] - exact[k]).abs() / (m.variance(k) / m.n).sqrt())
            .fold(0.0f64, f64::max);
        let ok = worst < SE_BOUND;
        all &= ok;
        lines.push(format!(
            "{label}: max |MC - exact| = {worst:.2} SE over {} components",
            exact.len()
        ));
    }
    report(3, "REINFORCE unbiased on the bandit", all, &lines.join("; "));
    assert!(all);
}

#[test]
fn c04_control_variates_reduce_variance() {
    let mut ratios = Vec::new();
    for seed in 0..5u64 {
        let policy = bandit_policy(Construction::StickBreaking, 100 + seed);
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let mut cv = warmed_variates(&policy, &mut rng, 2_000);
        let (mut plain, mut centred) = (Moments::default(), Moments::default());
        for n in 0..20_000 {
            let t = bandit_episode(&policy, n, &mut rng);
            let batch = std::slice::from_ref(&t);
            let (g0, _) = policy_gradient(&policy, None, batch).unwrap();
            let (g1, _) = policy_gradient(&policy, Some(&cv), batch).unwrap();
            plain.push(&g0.unwrap().flat());
            centred.push(&g1.unwrap().flat());
            cv.update(batch).unwrap();
        }
        ratios.push(centred.total_variance() / plain.total_variance());
    }
    let ok = ratios.iter().all(|r| *r < 1.0);
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    report(
        4,
        "control variates cut gradient variance",
        ok,
        &format!("var ratio per seed [{}]", shown.join(", ")),
    );
    assert!(ok);
}

#[test]
fn c05_vanilla_open_world() {
    let mut cfg = ExperimentConfig::preset("vanilla").unwrap();
    cfg.world = "open".into();
    cfg.total_steps = 20_000;
    let mut rates = Vec::new();
    for seed in [0u64, 1, 2] {
        let run = train(&cfg, seed, &TrainOptions::default()).unwrap();
        let r = evaluate_checkpoint(&run.checkpoint, None, 100, true, seed).unwrap();
        rates.push(r.success_rate);
    }
    let good = rates.iter().filter(|r| **r >= 0.9).count();
    let ok = good >= 2;
    report(
        5,
        "vanilla DDPG sanity, open world, 20k steps",
        ok,
        &format!("eval success per seed {rates:?}, {good}/3 >= 0.9"),
    );
    assert!(ok);
}

const GRID: [&str; 6] = ["sguidance", "vanilla", "ddpg_pid", "ddpg_oa", "uniform", "argmax"];

fn grid() -> &'static GridReport {
    static REPORT: OnceLock<GridReport> = OnceLock::new();
    REPORT.get_or_init(|| {
        let configs: Vec<ExperimentConfig> = GRID.iter().map(|n| ExperimentConfig::preset(n).unwrap()).collect();
        run_grid(&configs, None, None, None).unwrap()
    })
}

fn summary(name: &str) -> &'static ConfigSummary {
    let s = grid().get(name).unwrap();
    assert!(s.failures().is_empty(), "{name}: {:?}", s.failures());
    s
}

/// Mean across checkpoints of the inter-seed variance over the last 10k steps.
fn final_window_variance(s: &ConfigSummary) -> f64 {
    let last = s.aggregate.last().map_or(0, |r| r.step);
    let rows: Vec<f64> = s
        .aggregate
        .iter()
        .filter(|r| r.step + 10_000 > last)
        .map(|r| r.variance)
        .collect();
    rows.iter().sum::<f64>() / rows.len() as f64
}

fn final_mean(s: &ConfigSummary) -> f64 {
    s.final_mean().unwrap()
}

#[test]
fn c06_sguidance_beats_vanilla() {
    let (sg, va) = (summary("sguidance"), summary("vanilla"));
    let behind: Vec<usize> = sg
        .aggregate
        .iter()
        .zip(&va.aggregate)
        .filter(|(a, b)| a.step > 10_000 && a.mean < b.mean)
        .map(|(a, _)| a.step)
        .collect();
    let (fs, fv) = (final_mean(sg), final_mean(va));
    let (vs, vv) = (final_window_variance(sg), final_window_variance(va));
    let ok = behind.is_empty() && fs > fv && vs < vv;
    report(
        6,
        "SGuidance vs vanilla",
        ok,
        &format!(
            "checkpoints after 10k where SGuidance trails {behind:?}; final mean {fs:.3} vs {fv:.3}; final-window variance {vs:.3} vs {vv:.3}"
        ),
    );
    assert!(ok);
}

#[test]
fn c07_controller_subsets() {
    let f: BTreeMap<&str, f64> = ["sguidance", "ddpg_pid", "ddpg_oa", "vanilla"]
        .into_iter()
        .map(|n| (n, final_mean(summary(n))))
        .collect();
    let best_pair = f["ddpg_pid"].max(f["ddpg_oa"]);
    let ok = f["sguidance"] >= best_pair && best_pair >= f["vanilla"];
    let pid_vs_oa = if f["ddpg_pid"] > f["ddpg_oa"] {
        "DDPG+PID ahead of DDPG+OA"
    } else {
        "DDPG+OA ahead of DDPG+PID"
    };
    report(
        7,
        "controller subsets ordering",
        ok,
        &format!(
            "final means sguidance {:.3}, ddpg_pid {:.3}, ddpg_oa {:.3}, vanilla {:.3}; {pid_vs_oa} (not gated)",
            f["sguidance"], f["ddpg_pid"], f["ddpg_oa"], f["vanilla"]
        ),
    );
    assert!(ok);
}

#[test]
fn c08_switch_mechanisms() {
    let (sg, un, am) = (summary("sguidance"), summary("uniform"), summary("argmax"));
    let (fs, fu) = (final_mean(sg), final_mean(un));
    let (vs, va) = (final_window_variance(sg), final_window_variance(am));
    let ok = fs >= fu && va > vs;
    report(
        8,
        "stochastic vs uniform and argmax switches",
        ok,
        &format!("final mean sguidance {fs:.3} vs uniform {fu:.3}; final-window variance argmax {va:.3} vs sguidance {vs:.3}"),
    );
    assert!(ok);
}

#[test]
fn c09_turn_off() {
    let cfg = ExperimentConfig::preset("turnoff").unwrap();
    let run = train(&cfg, 0, &TrainOptions::default()).unwrap();
    let anneal = cfg.turnoff.anneal_steps;
    let (ok, detail) = match (run.metrics.anneal_start, &run.pre_anneal) {
        (Some(start), Some(pre)) if start + anneal <= cfg.total_steps => {
            let before = evaluate_checkpoint(pre, None, 100, false, 0).unwrap();
            let after = evaluate_checkpoint(&run.checkpoint, None, 100, true, 0).unwrap();
            let gap = (after.success_rate - before.success_rate).abs();
            (
                gap <= 0.10,
                format!(
                    "usage below {} at step {start}; success pre-anneal {:.2} (switched), final {:.2} (DDPG alone), gap {:.2}",
                    cfg.turnoff.threshold, before.success_rate, after.success_rate, gap
                ),
            )
        }
        (Some(start), _) => (
            false,
            format!(
                "anneal started at {start} but did not finish within {} steps",
                cfg.total_steps
            ),
        ),
        (None, _) => {
            let last = run.metrics.checkpoints.last().map_or(f64::NAN, |c| c.usage_fraction);
            (
                false,
                format!(
                    "heuristic usage never fell below {}; last {last:.3}",
                    cfg.turnoff.threshold
                ),
            )
        }
    };
    report(9, "heuristic turn-off", ok, &detail);
    assert!(ok);
}

fn read_dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect()
}

#[test]
fn c10_reduction_identity() {
    let tmp = tempfile::tempdir().unwrap();
    let mut same = true;
    let mut episodes = 0;
    for seed in [0u64, 1] {
        let mut files = Vec::new();
        for name in ["ddpg_only", "vanilla"] {
            let mut cfg = ExperimentConfig::preset(name).unwrap();
            cfg.total_steps = 10_000;
            let dir = tmp.path().join(format!("{name}_{seed}"));
            let run = train(&cfg, seed, &TrainOptions::to_dir(&dir)).unwrap();
            episodes += run.metrics.episodes.len();
            files.push(std::fs::read(dir.join("curves.csv")).unwrap());
        }
        same &= files[0] == files[1];
    }
    report(
        10,
        "forced {DDPG} switch equals the vanilla path",
        same,
        &format!("curves.csv byte-identical for seeds 0 and 1 ({episodes} episodes in total)"),
    );
    assert!(same);
}

#[test]
fn c11_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let mut mismatched = Vec::new();
    let mut compared = 0;
    for name in ["sguidance", "vanilla", "turnoff"] {
        let mut cfg = ExperimentConfig::preset(name).unwrap();
        cfg.total_steps = 4_000;
        let a = tmp.path().join(format!("{name}_a"));
        let b = tmp.path().join(format!("{name}_b"));
        train(&cfg, 5, &TrainOptions::to_dir(&a)).unwrap();
        train(&cfg, 5, &TrainOptions::to_dir(&b)).unwrap();
        let (fa, fb) = (read_dir_bytes(&a), read_dir_bytes(&b));
        if fa.keys().ne(fb.keys()) {
            mismatched.push(format!("{name}: file sets differ"));
        }
        for (file, bytes) in &fa {
            compared += 1;
            if fb.get(file) != Some(bytes) {
                mismatched.push(format!("{name}/{file}"));
            }
        }
    }
    let ok = mismatched.is_empty();
    report(
        11,
        "determinism",
        ok,
        &format!("{compared} files compared, mismatches {mismatched:?}"),
    );
    assert!(ok);
}
