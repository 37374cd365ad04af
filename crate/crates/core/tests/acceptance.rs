//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Pass criterion numbers as arguments to
//! run a subset, e.g. `cargo test --test acceptance -- 1 7`.

use std::time::Instant;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::statistics::Statistics;

use seqbed::belief::{ess, transform_unit, ParticleSet};
use seqbed::engine::{RunConfig, RunState, RunStatus};
use seqbed::models::{CellSettings, ModelSpec, Observation};
use seqbed::optimizer::{expected_improvement, log_marginal_likelihood, matern52};
use seqbed::posterior::{modes, summarize, MarginalSummary, POSTERIOR_SAMPLES};
use seqbed::ratio::{train_ratio, LfireConfig, SummaryMatrix};
use seqbed::rng::{SeedNode, Stream};
use seqbed::utilities::{
    bd_from_fits, bd_stable_from_fits, estimate_mi, estimate_mi_weighted, fit_at_design, mi_from_fits, reference_mi,
    Aggregation, UtilityConfig,
};

const RUNS: u64 = 10;
const PARTICLES: usize = 1000;

const C1_GRID: usize = 20;
const C1_MIN_PEARSON: f64 = 0.85;
const C1_MAX_SECS: f64 = 600.0;

const C2_GRID: usize = 20;
const C2_MIN_ORDERED: usize = 8;
const C2_MIN_BIMODAL: usize = 8;
const C2_MODE_FLOOR: f64 = 0.1;
const C2_OMEGA_TRUE: f64 = 0.5;
const C2_T_STAR: f64 = 2.196;
const C2_Y_STAR: f64 = 0.790;

const C3_B_TRUE: f64 = 1.5;
const C3_MAX_WIDTH: f64 = 0.8;
const C3_MIN_COVERED: usize = 8;
const C3_FIRST_DESIGN: (f64, f64) = (0.6, 1.4);
const C3_MIN_FIRST_DESIGN: usize = 8;
const C3_MAX_SECS: f64 = 1800.0;

const C4_TRUE: [f64; 2] = [0.15, 0.05];
const C4_MIN_COVERED: usize = 7;
const C4_FIRST_DESIGN: (f64, f64) = (0.25, 1.0);
const C4_MIN_FIRST_DESIGN: usize = 7;

const C5_PARTICLES: usize = 150;
const C5_ITERATIONS: usize = 3;
const C5_MIN_TOP_QUARTILE: usize = 6;

const C6_ROUND_TRIP: f64 = 1e-12;
const C6_LFIRE_MAE: f64 = 0.15;
const C6_GRAD_REL: f64 = 1e-4;
const C6_CHI2_ALPHA: f64 = 0.001;

const C7_GRID: usize = 10;
const C7_MAX_POOLED_SE: f64 = 2.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn prior_particles(model: &ModelSpec, n: usize, seed: SeedNode) -> ParticleSet {
    ParticleSet::uniform(model.sample_prior(n, &mut seed.stream(Stream::Prior).rng()), model.bounds())
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    a.iter().copied().covariance(b.iter().copied()) / (a.iter().copied().std_dev() * b.iter().copied().std_dev())
}

fn argmax(xs: &[f64], ys: &[f64]) -> f64 {
    let i = (0..ys.len()).max_by(|&i, &j| ys[i].total_cmp(&ys[j])).unwrap();
    xs[i]
}

fn campaign(model: ModelSpec, seed: u64, particles: usize, iterations: usize) -> RunState {
    let cfg = RunConfig { model, seed, particles, iterations, ..Default::default() };
    let mut state = RunState::new(cfg).expect("valid config");
    state.advance().expect("campaign runs");
    state
}

fn contains(iv: (f64, f64), x: f64) -> bool {
    iv.0 <= x && x <= iv.1
}

fn c1_mi_vs_reference() -> Outcome {
    let start = Instant::now();
    let model = ModelSpec::oscillation();
    let root = SeedNode::new(101);
    let prior = prior_particles(&model, PARTICLES, root);
    let cfg = UtilityConfig::default();
    let grid = model.design_domain().linspace(C1_GRID);
    let mut est = Vec::new();
    let mut reference = Vec::new();
    for &d in &grid {
        est.push(estimate_mi(d, &prior, &model, PARTICLES, root.child(1), &cfg).unwrap().value);
        reference.push(reference_mi(&model, d, PARTICLES, PARTICLES, root.child(2)).unwrap().value);
    }
    let r = pearson(&est, &reference);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        r >= C1_MIN_PEARSON && secs <= C1_MAX_SECS,
        format!("pearson r = {r:.3} (min {C1_MIN_PEARSON}), {secs:.0} s (max {C1_MAX_SECS:.0} s)"),
    )
}

/// Exactly two KDE modes above the floor, one of them inside an HPD region
/// that also holds the true value.
fn is_bimodal_around_truth(m: &MarginalSummary) -> bool {
    let peaks = modes(&m.grid, &m.density, C2_MODE_FLOOR);
    peaks.len() == 2 && m.hpd_regions.iter().any(|&r| contains(r, C2_OMEGA_TRUE) && peaks.iter().any(|&x| contains(r, x)))
}

fn c2_utility_shapes() -> Outcome {
    let model = ModelSpec::oscillation();
    let cfg = UtilityConfig::default();
    let update_cfg = RunConfig::default().update_lfire();
    let grid = model.design_domain().linspace(C2_GRID);
    let (mut ordered, mut bimodal, mut own_bimodal) = (0, 0, 0);
    let mut notes = Vec::new();
    for seed in 0..RUNS {
        let root = SeedNode::new(200 + seed);
        let prior = prior_particles(&model, PARTICLES, root);
        let (mut mi, mut bd) = (Vec::new(), Vec::new());
        for &d in &grid {
            let fits = fit_at_design(&model, d, &prior.thetas, &prior, &cfg.lfire, root.child(1)).unwrap();
            mi.push(mi_from_fits(&fits, None, &cfg).unwrap().value);
            bd.push(bd_from_fits(&fits, Aggregation::Median, cfg.singular_cap).value);
        }
        let (t_mi, t_bd) = (argmax(&grid, &mi), argmax(&grid, &bd));
        ordered += usize::from(t_mi > t_bd);

        let fits = fit_at_design(&model, C2_T_STAR, &prior.thetas, &prior, &update_cfg, root.child(2)).unwrap();
        let mut belief = prior.clone();
        belief.update_weights(&fits.models, &model.summary(&Observation::Scalar(C2_Y_STAR))).unwrap();
        let ok = is_bimodal_around_truth(&summarize(&belief, &["omega"], POSTERIOR_SAMPLES, &mut root.child(3).rng()).marginals[0]);
        bimodal += usize::from(ok);

        let state = campaign(model.clone(), 200 + seed, PARTICLES, 1);
        let own = is_bimodal_around_truth(&state.posterior(1).unwrap().marginals[0]);
        own_bimodal += usize::from(own);
        notes.push(format!("{t_mi:.2}/{t_bd:.2}/{}/{:.2}", if ok { "ok" } else { "x" }, state.history[0].design));
    }
    outcome(
        ordered >= C2_MIN_ORDERED && bimodal >= C2_MIN_BIMODAL,
        format!(
            "MI grid argmax later than BD-Opt in {ordered}/{RUNS} (min {C2_MIN_ORDERED}); k=1 posterior after y = {C2_Y_STAR} at t = {C2_T_STAR} bimodal with a mode region covering {C2_OMEGA_TRUE} in {bimodal}/{RUNS} (min {C2_MIN_BIMODAL}); same shape at the run's own d1 in {own_bimodal}/{RUNS} (not gated) [t_mi/t_bd/bimodal/own d1: {}]",
            notes.join(" ")
        ),
    )
}

fn c3_death_campaign() -> Outcome {
    let start = Instant::now();
    let (mut covered, mut first) = (0, 0);
    let mut notes = Vec::new();
    for seed in 0..RUNS {
        let state = campaign(ModelSpec::death(), 300 + seed, PARTICLES, 4);
        let m = &state.posterior(4).unwrap().marginals[0];
        let ok = contains(m.hpdi, C3_B_TRUE) && m.width() <= C3_MAX_WIDTH;
        covered += usize::from(ok);
        let d1 = state.history[0].design;
        first += usize::from(contains(C3_FIRST_DESIGN, d1));
        notes.push(format!("[{:.2},{:.2}]@{d1:.2}", m.hpdi.0, m.hpdi.1));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        covered >= C3_MIN_COVERED && first >= C3_MIN_FIRST_DESIGN && secs <= C3_MAX_SECS,
        format!(
            "HPDI covers {C3_B_TRUE} with width <= {C3_MAX_WIDTH} in {covered}/{RUNS} (min {C3_MIN_COVERED}); d1 in {C3_FIRST_DESIGN:?} in {first}/{RUNS} (min {C3_MIN_FIRST_DESIGN}); {secs:.0} s (max {C3_MAX_SECS:.0} s) [{}]",
            notes.join(" ")
        ),
    )
}

fn c4_sir_campaign() -> Outcome {
    let (mut covered, mut first) = (0, 0);
    let mut notes = Vec::new();
    for seed in 0..RUNS {
        let state = campaign(ModelSpec::sir(), 400 + seed, PARTICLES, 4);
        let post = state.posterior(4).unwrap();
        let ok = post.marginals.iter().zip(C4_TRUE).all(|(m, t)| contains(m.hpdi, t));
        covered += usize::from(ok);
        let d1 = state.history[0].design;
        first += usize::from(contains(C4_FIRST_DESIGN, d1));
        notes.push(format!("{}@{d1:.2}", if ok { "ok" } else { "miss" }));
    }
    outcome(
        covered >= C4_MIN_COVERED && first >= C4_MIN_FIRST_DESIGN,
        format!(
            "both HPDIs cover {C4_TRUE:?} in {covered}/{RUNS} (min {C4_MIN_COVERED}); d1 in {C4_FIRST_DESIGN:?} in {first}/{RUNS} (min {C4_MIN_FIRST_DESIGN}) [{}]",
            notes.join(" ")
        ),
    )
}

fn c5_cell_desk_scale() -> Outcome {
    let settings = CellSettings { rows: 14, cols: 18, initial_cells: 40, initial_rows: 5, frames: 72 };
    let cutoff = 1.0 + 0.75 * f64::from(settings.frames - 1);
    let (mut done, mut top) = (0, 0);
    let mut designs = Vec::new();
    for seed in 0..RUNS {
        let state = campaign(ModelSpec::Cell(settings.clone()), 500 + seed, C5_PARTICLES, C5_ITERATIONS);
        done += usize::from(state.status == RunStatus::Done && state.completed() == C5_ITERATIONS);
        let d1 = state.history[0].design;
        top += usize::from(d1 >= cutoff);
        designs.push(format!("{d1}"));
    }
    outcome(
        done == RUNS as usize && top >= C5_MIN_TOP_QUARTILE,
        format!(
            "{done}/{RUNS} runs completed; d1 >= {cutoff:.2} in {top}/{RUNS} (min {C5_MIN_TOP_QUARTILE}) [d1: {}]",
            designs.join(" ")
        ),
    )
}

fn check(failures: &mut Vec<String>, name: &str, ok: bool) {
    if !ok {
        failures.push(name.to_string());
    }
}

fn c6_property_suites() -> Outcome {
    let mut failed = Vec::new();
    let mut rng = SeedNode::new(600).rng();

    check(
        &mut failed,
        "ess",
        ess(&[1.0; 50]).unwrap() == 50.0 && ess(&[0.0, 3.0, 0.0]).unwrap() == 1.0 && (ess(&[1.0, 1.0, 2.0]).unwrap() - 16.0 / 6.0).abs() < 1e-12,
    );

    let model = ModelSpec::sir();
    let mut p = prior_particles(&model, 500, SeedNode::new(601));
    for (i, w) in p.log_weights.iter_mut().enumerate() {
        *w = if i % 50 == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    p.resample(1000, &mut rng).unwrap();
    let inside = p.thetas.iter().all(|t| t.iter().zip(&p.bounds).all(|(v, b)| b.0 <= *v && *v <= b.1));
    check(&mut failed, "resample", inside && p.log_weights.iter().all(|&w| w == 0.0) && p.ess().unwrap() == 500.0);

    let probs = [0.1, 0.2, 0.3, 0.4];
    let q = ParticleSet {
        thetas: (0..4).map(|i| vec![f64::from(i)]).collect(),
        log_weights: probs.iter().map(|w: &f64| w.ln()).collect(),
        iteration: 1,
        bounds: vec![(0.0, 3.0)],
    };
    let n = 40_000;
    let mut counts = [0usize; 4];
    q.sample_indices(n, &mut rng).into_iter().for_each(|i| counts[i] += 1);
    let stat: f64 = counts.iter().zip(probs).map(|(&c, p)| (c as f64 - p * n as f64).powi(2) / (p * n as f64)).sum();
    check(&mut failed, "chi2", stat < ChiSquared::new(3.0).unwrap().inverse_cdf(1.0 - C6_CHI2_ALPHA));

    let pts: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.random_range(0.0..0.5), rng.random_range(0.0..0.005)]).collect();
    let (unit, _, scaler) = transform_unit(&pts, &[(0.0, 0.5), (0.0, 0.005)]);
    let back = scaler.inverse(&unit);
    let err = pts.iter().flatten().zip(back.iter().flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    check(&mut failed, "unit round trip", err <= C6_ROUND_TRIP);

    let rows = |mu: f64, rng: &mut seqbed::rng::Rng| {
        let dist = Normal::new(mu, 1.0).unwrap();
        let mut m = SummaryMatrix::new(2);
        for _ in 0..2000 {
            let y: f64 = dist.sample(rng);
            m.push(&[y, y * y]).unwrap();
        }
        m
    };
    let like = rows(1.0, &mut rng);
    let marg = rows(0.0, &mut rng);
    let fit = train_ratio(&[1.0], 0.0, &like, &marg, &LfireConfig::default()).unwrap();
    let ys: Vec<f64> = (0..=100).map(|i| -2.0 + 0.05 * f64::from(i)).collect();
    // N(1,1) against N(0,1): log r(y) = y - 1/2
    let mae = ys.iter().map(|&y| (fit.log_ratio(&[y, y * y]).unwrap() - (y - 0.5)).abs()).sum::<f64>() / ys.len() as f64;
    check(&mut failed, "lfire gaussian", mae < C6_LFIRE_MAE);

    let phi0 = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let ei_ok = (expected_improvement(1.0, 0.3, 1.0) - 0.3 * phi0).abs() < 1e-12
        && expected_improvement(0.5, 0.0, 1.0) == 0.0
        && (0..1000).all(|_| expected_improvement(rng.random_range(-5.0..5.0), rng.random_range(0.0..3.0), rng.random_range(-5.0..5.0)) >= 0.0);
    check(&mut failed, "expected improvement", ei_ok);

    let s5 = 5f64.sqrt();
    let at_l = (1.0 + s5 + 5.0 / 3.0) * (-s5).exp();
    check(&mut failed, "matern", (matern52(0.3, 0.3, 0.7, 2.5) - 2.5).abs() < 1e-12 && (matern52(1.0, 1.7, 0.7, 1.0) - at_l).abs() < 1e-12);

    let mut grad_ok = true;
    for _ in 0..20 {
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..1.0)).collect();
        let y: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let lp = [rng.random_range(-2.0..0.5), rng.random_range(-1.0..1.0), rng.random_range(-4.0..-1.0)];
        let (_, g) = log_marginal_likelihood(&x, &y, lp).unwrap();
        for j in 0..3 {
            let h = 1e-5;
            let (mut up, mut dn) = (lp, lp);
            up[j] += h;
            dn[j] -= h;
            let fd = (log_marginal_likelihood(&x, &y, up).unwrap().0 - log_marginal_likelihood(&x, &y, dn).unwrap().0) / (2.0 * h);
            grad_ok &= (g[j] - fd).abs() <= C6_GRAD_REL * fd.abs().max(1.0);
        }
    }
    check(&mut failed, "gp gradient", grad_ok);

    let osc = ModelSpec::oscillation();
    let prior = prior_particles(&osc, 300, SeedNode::new(602));
    let mut jensen = true;
    for d in [0.8, 1.6, 2.4] {
        let fits = fit_at_design(&osc, d, &prior.thetas, &prior, &LfireConfig::default(), SeedNode::new(603)).unwrap();
        let mean_bd = bd_from_fits(&fits, Aggregation::Mean, 1e12).value;
        jensen &= bd_stable_from_fits(&fits, 1e12).value <= mean_bd.ln() + 1e-12;
    }
    check(&mut failed, "jensen", jensen);

    let small = || {
        let mut cfg = RunConfig { model: ModelSpec::sir(), particles: 60, iterations: 3, seed: 604, ..Default::default() };
        cfg.bo.budget = Some(8);
        let mut s = RunState::new(cfg).unwrap();
        s.advance().unwrap();
        s.to_json()
    };
    check(&mut failed, "determinism", small() == small());

    outcome(failed.is_empty(), if failed.is_empty() { "all 10 suites pass".into() } else { format!("failed: {}", failed.join(", ")) })
}

fn c7_weighted_equivalence() -> Outcome {
    let model = ModelSpec::death();
    let root = SeedNode::new(700);
    let prior = prior_particles(&model, PARTICLES, root);
    let cfg = UtilityConfig::default();
    let hi = model.design_domain().upper();
    let mut worst: f64 = 0.0;
    let mut agree = 0;
    for i in 1..=C7_GRID {
        let d = hi * i as f64 / C7_GRID as f64;
        let seed = root.child(i as u64);
        let a = estimate_mi(d, &prior, &model, PARTICLES, seed, &cfg).unwrap();
        let b = estimate_mi_weighted(d, &prior, &model, seed, &cfg).unwrap();
        let pooled = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
        let z = (a.value - b.value).abs() / pooled;
        worst = worst.max(z);
        agree += usize::from(z <= C7_MAX_POOLED_SE);
    }
    outcome(agree == C7_GRID, format!("{agree}/{C7_GRID} designs agree within {C7_MAX_POOLED_SE} pooled SE (worst {worst:.2})"))
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, fn() -> Outcome); 7] = [
        (1, "MI vs nested Monte Carlo reference", c1_mi_vs_reference),
        (2, "utility-shape ordering and k=1 bimodality", c2_utility_shapes),
        (3, "death campaign", c3_death_campaign),
        (4, "SIR campaign", c4_sir_campaign),
        (5, "cell campaign (desk scale)", c5_cell_desk_scale),
        (6, "property suites", c6_property_suites),
        (7, "weighted MI equivalence at k=1", c7_weighted_equivalence),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        failed += usize::from(!o.pass);
        println!(
            "criterion {id} [{}] {name}: {} ({:.0} s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
