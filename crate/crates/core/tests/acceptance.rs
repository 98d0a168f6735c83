//! One PASS/FAIL line per acceptance criterion. Runs without the libtest
//! harness so the lines come out in order with their timings.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use carbonsim::government::equality;
use carbonsim::runner::run_audited;
use carbonsim::trace::{replay, verify};
use carbonsim::{run_episode, EntPolicySpec, EpisodeSpec, EpisodeTrace, EventKind, GovPolicySpec, SimConfig, Verdict};
use common::{
    book_matches_oracle, formula_errors, mann_whitney_greater, mixed_specs, mutate_line, random_stream, SplitMix,
};
use rayon::prelude::*;

type Outcome = Result<String, String>;

fn formulas() -> Outcome {
    let errs = formula_errors();
    let cases: usize = errs.iter().map(|e| e.cases).sum();
    let worst = errs.iter().map(|e| e.worst).fold(0.0, f64::max);
    let misses: usize = errs.iter().map(|e| e.strict_misses).sum();
    let detail = format!("{cases} inputs, worst {worst:.2e}, {misses} plain-relative misses");
    if cases < 10_000 {
        return Err(format!("only {cases} inputs"));
    }
    match errs.iter().find(|e| e.worst > 1e-12) {
        Some(e) => Err(format!("{}: {:.2e}; {detail}", e.name, e.worst)),
        None => Ok(detail),
    }
}

fn gini() -> Outcome {
    let mut rng = SplitMix::new(31);
    for _ in 0..10_000 {
        let xs: Vec<f64> = (0..5)
            .map(|_| if rng.below(4) == 0 { 0.0 } else { rng.uniform(0.0, 1e4) })
            .collect();
        let eq = equality(&xs);
        let positive = xs.iter().filter(|&&x| x > 0.0).count();
        if !(eq <= 1.0 && (eq > 0.0 || positive < 2)) {
            return Err(format!("{xs:?} -> {eq}"));
        }
        let k = rng.uniform(1e-3, 1e3);
        let scaled: Vec<f64> = xs.iter().map(|x| x * k).collect();
        if (equality(&scaled) - eq).abs() > 1e-12 {
            return Err(format!("{xs:?} not scale invariant under {k}"));
        }
    }
    if equality(&[3.5; 5]) != 1.0 || equality(&[0.0, 0.0, 0.0, 8.0, 0.0]) != 0.0 {
        return Err("extremes".into());
    }
    Ok("10000 vectors".into())
}

fn order_book() -> Outcome {
    let mut rng = SplitMix::new(2024);
    for i in 0..1_000 {
        let ops = random_stream(&mut rng, 4, 10);
        book_matches_oracle(&ops).map_err(|e| format!("stream {i}: {e}"))?;
    }
    Ok("1000 streams".into())
}

fn audits() -> Outcome {
    let specs = mixed_specs(100, 501);
    let n = specs
        .par_iter()
        .map(|s| {
            run_audited(s)
                .map(|_| ())
                .map_err(|e| format!("{} seed {}: {e}", s.gov, s.seed))
        })
        .collect::<Result<Vec<_>, _>>()?
        .len();
    Ok(format!("{n} episodes"))
}

fn determinism() -> Outcome {
    let specs = mixed_specs(50, 502);
    let mut rng = SplitMix::new(503);
    let mut mutations = 0;
    for s in &specs {
        let tr = run_episode(s).map_err(|e| e.to_string())?;
        let text = tr.to_jsonl();
        if replay(&tr.header).map_err(|e| e.to_string())?.to_jsonl() != text {
            return Err(format!("seed {} replay differs", s.seed));
        }
        let i = 1 + rng.below(tr.events.len() as u64) as usize;
        if let Some(bad) = mutate_line(&text, i) {
            match verify(&bad).map_err(|e| e.to_string())? {
                Verdict::Diverged { line, .. } if line == i => mutations += 1,
                v => return Err(format!("mutation at line {i}: {v:?}")),
            }
        }
    }
    Ok(format!("50 replays, {mutations} mutations located"))
}

fn telescoping() -> Outcome {
    let traces = run_all(&mixed_specs(100, 504))?;
    for tr in &traces {
        for e in &tr.summary.enterprises {
            if (e.reward_sum - e.utility).abs() > 1e-9 * e.utility.abs().max(1.0) {
                return Err(format!("seed {}: {} vs {}", tr.header.seed, e.reward_sum, e.utility));
            }
        }
        let swf = tr.summary.metrics.swf;
        if (tr.summary.government_reward_sum - swf).abs() > 1e-9 * swf.abs().max(1.0) {
            return Err(format!(
                "seed {}: government {} vs {swf}",
                tr.header.seed, tr.summary.government_reward_sum
            ));
        }
    }
    Ok("100 episodes".into())
}

fn allocation() -> Outcome {
    let mut specs = mixed_specs(60, 505);
    specs.extend(GovPolicySpec::all_baselines().into_iter().map(|gov| EpisodeSpec {
        config: SimConfig::default(),
        seed: 7,
        gov,
        ent: EntPolicySpec::Scripted,
        punishment: 20.0,
    }));
    let mut events = 0;
    for tr in run_all(&specs)? {
        let budget = tr.header.config.total_credit_budget;
        let mut cumulative = 0.0;
        for e in &tr.events {
            if let EventKind::Allocation {
                period_total,
                project_share,
                grants,
                ..
            } = &e.kind
            {
                let granted: f64 = grants.iter().sum();
                if (project_share - 0.1 * period_total).abs() > 1e-9 || (granted - 0.9 * period_total).abs() > 1e-9 {
                    return Err(format!("t {}: {project_share} + {granted} of {period_total}", e.t));
                }
                cumulative += period_total;
                if cumulative > budget + 1e-9 {
                    return Err(format!("cumulative {cumulative} over {budget}"));
                }
                events += 1;
            }
        }
        let baseline = tr.header.gov_policy != GovPolicySpec::Random.to_string();
        if baseline && (cumulative - budget).abs() > 1e-9 {
            return Err(format!(
                "{} left {} unallocated",
                tr.header.gov_policy,
                budget - cumulative
            ));
        }
    }
    Ok(format!("{events} allocation events"))
}

fn run_all(specs: &[EpisodeSpec]) -> Result<Vec<EpisodeTrace>, String> {
    specs
        .par_iter()
        .map(|s| run_episode(s).map_err(|e| e.to_string()))
        .collect()
}

/// Scripted episodes over 30 seeds for one government policy and punishment.
fn sample(gov: &str, punishment: f64) -> Result<Vec<EpisodeTrace>, String> {
    let specs: Vec<EpisodeSpec> = (0..30)
        .map(|seed| EpisodeSpec {
            config: SimConfig::default(),
            seed: 1000 + seed,
            gov: gov.parse().unwrap(),
            ent: EntPolicySpec::Scripted,
            punishment,
        })
        .collect();
    run_all(&specs)
}

fn directional() -> Outcome {
    let of = |traces: &[EpisodeTrace], f: fn(&EpisodeTrace) -> f64| traces.iter().map(f).collect::<Vec<f64>>();
    let emissions = |t: &EpisodeTrace| t.summary.cumulative_emissions;
    let prod = |t: &EpisodeTrace| t.summary.metrics.prod;
    let excess = |t: &EpisodeTrace| t.summary.excess_emissions;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;

    let flat = sample("flat-si", 20.0)?;
    let dec = sample("decreasing-si", 20.0)?;
    let conv = sample("convex-si", 20.0)?;
    let lax = sample("flat-si", 0.0)?;
    let strict = sample("flat-si", SimConfig::default().max_punishment)?;
    let (flat_em, dec_em) = (of(&flat, emissions), of(&dec, emissions));
    let (flat_prod, dec_prod) = (of(&flat, prod), of(&dec, prod));
    let (flat_ex, dec_ex, conv_ex) = (of(&flat, excess), of(&dec, excess), of(&conv, excess));
    let (lax_ex, strict_ex) = (of(&lax, excess), of(&strict, excess));

    // Each entry: label, sample expected to be larger, sample expected smaller.
    let comparisons: [(&str, &[f64], &[f64]); 5] = [
        ("emissions flat > decreasing", &flat_em, &dec_em),
        ("prod flat > decreasing", &flat_prod, &dec_prod),
        ("excess flat > decreasing", &flat_ex, &dec_ex),
        ("excess flat > convex", &flat_ex, &conv_ex),
        ("excess p=0 > p=max", &lax_ex, &strict_ex),
    ];
    let mut parts = Vec::new();
    let mut failed = false;
    for (label, hi, lo) in comparisons {
        let p = mann_whitney_greater(hi, lo);
        let ok = mean(hi) > mean(lo) && p < 0.05;
        failed |= !ok;
        parts.push(format!(
            "{label}: {:.1} vs {:.1}, p={p:.1e}{}",
            mean(hi),
            mean(lo),
            if ok { "" } else { " FAILED" }
        ));
    }
    let detail = parts.join("; ");
    if failed {
        Err(detail)
    } else {
        Ok(detail)
    }
}

fn performance() -> Outcome {
    let spec = EpisodeSpec {
        config: SimConfig::default(),
        seed: 9,
        gov: "flat-si".parse().unwrap(),
        ent: EntPolicySpec::Scripted,
        punishment: 20.0,
    };
    run_episode(&spec).map_err(|e| e.to_string())?;
    let mut times: Vec<Duration> = (0..10)
        .map(|i| {
            let s = EpisodeSpec {
                seed: i,
                ..spec.clone()
            };
            let start = Instant::now();
            run_episode(&s).unwrap();
            start.elapsed()
        })
        .collect();
    times.sort();
    let median = times[times.len() / 2];

    let sweep: Vec<EpisodeSpec> = GovPolicySpec::all_baselines()
        .into_iter()
        .flat_map(|gov| (0..10).map(move |seed| (gov, seed)))
        .map(|(gov, seed)| EpisodeSpec {
            gov,
            seed,
            ..spec.clone()
        })
        .collect();
    let start = Instant::now();
    let n = run_all(&sweep)?.len();
    let sweep_time = start.elapsed();
    let detail = format!("median episode {median:.1?}, {n}-episode sweep {sweep_time:.2?}");
    if median < Duration::from_millis(100) && n == 90 && sweep_time < Duration::from_secs(10) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// A named check with its time budget in seconds.
type Criterion = (&'static str, fn() -> Outcome, u64);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("formula exactness", formulas, 10),
        ("gini properties", gini, 5),
        ("order-book oracle", order_book, 30),
        ("conservation audits", audits, 60),
        ("determinism and replay", determinism, 30),
        ("telescoping rewards", telescoping, 60),
        ("allocation arithmetic", allocation, 60),
        ("directional reproduction", directional, 300),
        ("performance", performance, 60),
    ];
    let mut failures = 0;
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(d) if elapsed > Duration::from_secs(budget) => Err(format!("{d}; over the {budget} s budget")),
            other => other,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        failures += outcome.is_err() as usize;
        println!("{tag} {name} [{elapsed:.2?}] {detail}");
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
