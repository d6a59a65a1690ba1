//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::path::Path;
use std::time::{Duration, Instant};

use ses_core::cem::{init_distribution, Budget, FinalizeMode};
use ses_core::field::{NoiseField, Shape};
use ses_core::harness::config::{RunConfig, Strategy};
use ses_core::harness::run::{execute, run};
use ses_core::harness::theory::validate_theory;
use ses_core::reward::{evaluate_batch, ranking_consistency, Scorer};
use ses_core::rng::SeedStreams;
use ses_core::spectral::{fit_power_law, radial_psd, synthesize_power_law_field, RadialProfile};
use ses_core::subspace::{decouple, reconstruct};
use ses_core::wavelet::{dwt2, idwt2, pyramid_energy};

const TAU_0: f64 = 0.85;
const SEEDS: u64 = 20;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn benchmark(strategy: Strategy, seed: u64, budget: u64) -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/benchmark.toml");
    let mut c = RunConfig::load(&path).expect("benchmark config");
    c.strategy = strategy;
    c.seed = seed;
    c.budget_nre = budget;
    c.cem.finalize_mode = FinalizeMode::BestSeen;
    c
}

fn best_score(cfg: &RunConfig) -> f64 {
    let scorer = cfg.scorer().unwrap();
    execute(cfg, scorer.as_ref()).unwrap().best.score
}

fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
}

fn wavelet_exactness() -> Outcome {
    let start = Instant::now();
    let mut worst_rec: f64 = 0.0;
    let mut worst_parseval: f64 = 0.0;
    let streams = SeedStreams::new(1);
    let combos: Vec<(usize, usize, usize)> = [1, 4]
        .into_iter()
        .flat_map(|c| [32, 64].into_iter().flat_map(move |n| (1..=4).map(move |j| (c, n, j))))
        .collect();
    for i in 0..200 {
        let (c, n, j) = combos[i % combos.len()];
        let x = NoiseField::standard_normal(Shape::new(c, n, n), &mut streams.stream("field", i as u64));
        let p = dwt2(&x, j).unwrap();
        let y = idwt2(&p).unwrap();
        worst_rec = worst_rec.max(y.distance(&x).unwrap() / x.norm());
        worst_parseval = worst_parseval.max((pyramid_energy(&p) - x.energy()).abs() / x.energy());
    }
    let elapsed = start.elapsed();
    outcome(
        worst_rec <= 1e-10 && worst_parseval <= 1e-10 && elapsed < Duration::from_secs(5),
        format!(
            "200 fields: max reconstruction error {worst_rec:.2e}, max Parseval error {worst_parseval:.2e} (limit 1e-10), {:.2}s (limit 5s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn prior_validity() -> Outcome {
    let shape = Shape::new(4, 64, 64);
    let streams = SeedStreams::new(2);
    let mut ll = Vec::with_capacity(100_000);
    let mut i = 0;
    while ll.len() < 100_000 {
        let x = NoiseField::standard_normal(shape, &mut streams.stream("ll", i));
        ll.extend_from_slice(dwt2(&x, 4).unwrap().ll().as_slice());
        i += 1;
    }
    ll.truncate(100_000);
    let v_ll = sample_variance(&ll);

    // one entry per independent (u, anchor) pair; entries of a single field
    // share coarse coefficients and are not independent
    let mut entries = Vec::with_capacity(10_000);
    for k in 0..10_000u64 {
        let mut rng = streams.stream("reconstruct", k);
        let anchor = NoiseField::standard_normal(shape, &mut rng);
        let (_, s) = decouple(&anchor, 4).unwrap();
        let u = init_distribution(s.low_dim()).sample(&mut rng);
        let x = reconstruct(&u, &s).unwrap();
        entries.push(x.as_slice()[(k as usize * 1637) % shape.len()]);
    }
    let v_rec = sample_variance(&entries);
    let ok = |v: f64| (0.985..=1.015).contains(&v);
    outcome(
        ok(v_ll) && ok(v_rec),
        format!("LL variance {v_ll:.4} over 1e5 coefficients, reconstruction variance {v_rec:.4} over 1e4 entries (window [0.985, 1.015])"),
    )
}

fn spectral_scaling() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for beta in [1.0, 1.3, 2.0] {
        let r = validate_theory(beta, 64, 8, 400, 0).unwrap();
        let slope = r.closed_form.fit.exponent;
        let slope_ok = (slope - r.target_slope).abs() <= 0.1;
        let err = r.max_relative_error();
        let dec = r.all_decreasing();
        pass &= slope_ok && err <= 0.02 && dec;
        parts.push(format!(
            "beta {beta}: slope {slope:.4} (target {:.2} +-0.1), max band error {:.2}% (limit 2%), decreasing {dec}",
            r.target_slope,
            100.0 * err
        ));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(120);
    outcome(pass, format!("{}; {:.1}s (limit 120s)", parts.join("; "), elapsed.as_secs_f64()))
}

fn dimensionality() -> Outcome {
    let x = NoiseField::zeros(Shape::new(4, 64, 64));
    let (u, s) = decouple(&x, 4).unwrap();
    let expected = 4 * 64 * 64 / 4usize.pow(4);
    outcome(
        u.len() == 64 && s.low_dim() == 64 && expected == 64,
        format!("(4, 64, 64) at level 4: low-frequency dimension {} (expected D/4^J = {expected})", s.low_dim()),
    )
}

fn search_effectiveness() -> Outcome {
    let start = Instant::now();
    let (mut ses, mut bon) = (Vec::new(), Vec::new());
    for seed in 0..SEEDS {
        ses.push(best_score(&benchmark(Strategy::Ses, seed, 200)));
        bon.push(best_score(&benchmark(Strategy::Bon, seed, 200)));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let wins = ses.iter().zip(&bon).filter(|(s, b)| s > b).count();
    let elapsed = start.elapsed();
    let pass = mean(&ses) >= mean(&bon) && wins as f64 >= 0.7 * SEEDS as f64 && elapsed < Duration::from_secs(300);
    outcome(
        pass,
        format!(
            "NRE 200 over {SEEDS} seeds: SES mean {:.2}, best-of-N mean {:.2}, SES wins {wins}/{SEEDS} (need >= 70%), {:.1}s (limit 300s)",
            mean(&ses),
            mean(&bon),
            elapsed.as_secs_f64()
        ),
    )
}

fn scaling_monotone() -> Outcome {
    let budgets = [50u64, 100, 200, 400];
    let means: Vec<f64> = budgets
        .iter()
        .map(|&b| (0..SEEDS).map(|s| best_score(&benchmark(Strategy::Ses, s, b))).sum::<f64>() / SEEDS as f64)
        .collect();
    let pass = means.windows(2).all(|w| w[1] >= w[0]);
    let text: Vec<String> = budgets.iter().zip(&means).map(|(b, m)| format!("{b}: {m:.2}")).collect();
    outcome(pass, format!("SES mean best over {SEEDS} seeds by budget: {}", text.join(", ")))
}

fn evolutionary_dynamics() -> Outcome {
    let cfg = benchmark(Strategy::Ses, 0, 200);
    let scorer = cfg.scorer().unwrap();
    let out = execute(&cfg, scorer.as_ref()).unwrap();
    let mu: Vec<f64> = out.records.iter().map(|r| r.mu_norm.unwrap()).collect();
    let var: Vec<f64> = out.records.iter().map(|r| r.var_trace_mean.unwrap()).collect();
    let start_mu = init_distribution(out.distribution.as_ref().unwrap().dim()).mu.iter().map(|m| m.abs()).sum::<f64>();
    let last = *mu.last().unwrap();
    // plateau: the last quarter of generations stays within 10% of the final norm
    let tail = &mu[mu.len() * 3 / 4..];
    let plateau = tail.iter().all(|m| (m - last).abs() <= 0.1 * last);
    let floor = cfg.cem.variance_floor;
    let var_ok = *var.last().unwrap() < var[0] && var.iter().all(|&v| v >= floor);
    outcome(
        start_mu == 0.0 && last > 0.0 && plateau && var_ok,
        format!(
            "||mu|| 0 -> {:.3} (first update) -> {last:.3} (final), plateau {plateau}; mean sigma2 {:.3e} (first update) -> {:.3e} (final), min {:.3e} (floor {floor:e})",
            mu[0],
            var[0],
            var.last().unwrap(),
            var.iter().copied().fold(f64::MAX, f64::min)
        ),
    )
}

fn budget_and_determinism() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let tmp = tempfile::tempdir().unwrap();
    for strategy in [Strategy::Ses, Strategy::Bon, Strategy::Zon, Strategy::RandomSubspace] {
        for budget in [57u64, 200] {
            let cfg = benchmark(strategy, 3, budget);
            let expected = match strategy {
                Strategy::Ses => 10 * (budget / 10),
                Strategy::Zon => cfg.zo_config().n_iter as u64 * cfg.zo.batch as u64,
                _ => budget,
            };
            let scorer = cfg.scorer().unwrap();
            let out = execute(&cfg, scorer.as_ref());
            let consumed = out.as_ref().map_or(0, |o| o.log.len() as u64);
            let recorded = out.as_ref().map_or(0, |o| o.nre_used());
            if consumed != expected || recorded != expected {
                pass = false;
                parts.push(format!("{} at {budget}: used {consumed}, expected {expected}", strategy.name()));
            }
        }
        let cfg = benchmark(strategy, 4, 200);
        let dirs = ["a", "b", "par"].map(|d| tmp.path().join(format!("{}-{d}", strategy.name())));
        run(&cfg, &dirs[0]).unwrap();
        run(&cfg, &dirs[1]).unwrap();
        let mut par = cfg.clone();
        par.parallel = true;
        run(&par, &dirs[2]).unwrap();
        let read = |d: &Path| std::fs::read(d.join("records.csv")).unwrap();
        let same = read(&dirs[0]) == read(&dirs[1]) && read(&dirs[0]) == read(&dirs[2]);
        if !same {
            pass = false;
            parts.push(format!("{} records.csv differs between reruns", strategy.name()));
        }
    }
    if parts.is_empty() {
        parts.push("all four strategies consume exactly their computed NRE at budgets 57 and 200; records.csv byte-identical across two serial runs and one parallel run".into());
    }
    outcome(pass, parts.join("; "))
}

fn proxy_consistency() -> Outcome {
    let cfg = benchmark(Strategy::Bon, 5, 200);
    let proxy = cfg.flow_scorer(10).unwrap();
    let accurate = cfg.flow_scorer(50).unwrap();
    let streams = SeedStreams::new(5);
    let mut taus = Vec::new();
    for rep in 0..20 {
        let mut rng = streams.stream("candidates", rep);
        let xs: Vec<NoiseField> = (0..50).map(|_| NoiseField::standard_normal(proxy.shape(), &mut rng)).collect();
        let p: Vec<f64> = evaluate_batch(&proxy, &Budget::new(50), &xs, true).unwrap().iter().map(|e| e.score).collect();
        let a: Vec<f64> = evaluate_batch(&accurate, &Budget::new(50), &xs, true).unwrap().iter().map(|e| e.score).collect();
        taus.push(ranking_consistency(&p, &a).unwrap());
    }
    let min = taus.iter().copied().fold(f64::MAX, f64::min);
    let mean = taus.iter().sum::<f64>() / taus.len() as f64;
    outcome(
        min >= TAU_0,
        format!("Kendall tau-b, 10 vs 50 steps, 20 sets of 50 candidates: min {min:.3}, mean {mean:.3} (threshold {TAU_0})"),
    )
}

fn psd_fidelity() -> Outcome {
    let shape = Shape::new(4, 64, 64);
    let streams = SeedStreams::new(6);
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, exponent) in [-1.29f64, -2.05].into_iter().enumerate() {
        let mut rng = streams.stream("power_law", k as u64);
        let profiles: Vec<RadialProfile> = (0..32)
            .map(|_| radial_psd(&synthesize_power_law_field(shape, -exponent, &mut rng), 8).unwrap())
            .collect();
        let fit = fit_power_law(&RadialProfile::average(&profiles).unwrap()).unwrap();
        pass &= (fit.exponent - exponent).abs() <= 0.1;
        parts.push(format!("exponent {exponent}: fitted {:.4}", fit.exponent));
    }
    let mut rng = streams.stream("white", 0);
    let profiles: Vec<RadialProfile> = (0..32)
        .map(|_| radial_psd(&NoiseField::standard_normal(shape, &mut rng), 8).unwrap())
        .collect();
    let flat = RadialProfile::average(&profiles).unwrap().flatness_ratio();
    pass &= flat < 1.5;
    parts.push(format!("Gaussian flatness ratio {flat:.4} (limit 1.5)"));
    outcome(pass, format!("{} (tolerance +-0.1, 32 realizations)", parts.join(", ")))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("wavelet exactness", wavelet_exactness),
        ("prior validity", prior_validity),
        ("spectral scaling prediction", spectral_scaling),
        ("dimensionality accounting", dimensionality),
        ("search effectiveness", search_effectiveness),
        ("scaling monotonicity", scaling_monotone),
        ("evolutionary dynamics", evolutionary_dynamics),
        ("budget exactness and determinism", budget_and_determinism),
        ("proxy ranking consistency", proxy_consistency),
        ("psd fidelity", psd_fidelity),
    ];
    let mut failures = 0;
    for (name, check) in criteria {
        let o = check();
        if !o.pass {
            failures += 1;
        }
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
