//! Acceptance gate: one PASS/FAIL line per criterion. Runs without the libtest
//! harness so the lines always reach the output.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use scrp::bay::{Configuration, Geometry};
use scrp::bounds::{blocking_bound, lookahead_bound, lookahead_bound_with, BoundKind};
use scrp::exact::{brute_force_crp, solve_exact};
use scrp::experiments::{run_all, single_batch_sweep, write_rows, Method, RunConfig};
use scrp::heuristics::{exact_policy_value, Policy};
use scrp::instance::{Instance, InstanceOrder, Model};
use scrp::io::{generate, random_instance, write_instance, BatchLaw, GenRecipe};
use scrp::solver::{brute_force_expectimax, pbfs, pbfsa, sample_count};

const TOL: f64 = 1e-9;
const NO_LIMIT: Option<Duration> = None;
const MODELS: [Model; 2] = [Model::Batch, Model::Online];
const SCORED: [Policy; 5] = [
    Policy::ExpectedGroup,
    Policy::ExpectedMinMax,
    Policy::ExpectedReshuffleIndex,
    Policy::Leveling,
    Policy::Random,
];

type Outcome = Result<String, String>;

fn g(t: usize, s: usize) -> Geometry {
    Geometry::new(t, s).unwrap()
}

fn walkthrough() -> Instance {
    Instance::from_labels(g(3, 3), &[vec![1], vec![5, 5], vec![1, 4, 1]]).unwrap()
}

fn f(inst: &Instance, model: Model) -> f64 {
    pbfs(inst, BoundKind::LookAhead(1), model, NO_LIMIT)
        .unwrap()
        .expected_relocations
}

fn check(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c1_worked_example() -> Outcome {
    let inst = walkthrough();
    let mut parts = Vec::new();
    let mut ok = true;
    for model in MODELS {
        let t = Instant::now();
        let v = pbfs(&inst, BoundKind::LookAhead(1), model, NO_LIMIT).map_err(|e| e.to_string())?;
        let secs = t.elapsed().as_secs_f64();
        ok &= (v.expected_relocations - 13.0 / 6.0).abs() <= TOL && secs < 1.0;
        parts.push(format!("{}={:.10} in {secs:.3}s", model.name(), v.expected_relocations));
    }
    check(ok, format!("{} (want 13/6)", parts.join(", ")))
}

fn c2_deterministic_crp() -> Outcome {
    // relocation walkthrough bay
    let c = Configuration::from_labels(g(3, 3), &[vec![3], vec![5, 6], vec![1, 4, 2]]).unwrap();
    let t = Instant::now();
    let a = solve_exact(&c).map_err(|e| e.to_string())?.relocations;
    let b = brute_force_crp(&c).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    check(a == 3 && b == 3 && secs < 1.0, format!("solve_exact={a} brute_force={b} in {secs:.3}s (want 3)"))
}

fn c3_bound_golden_values() -> Outcome {
    let c = Configuration::from_labels_relaxed(g(3, 3), &[vec![1], vec![3], vec![1, 3, 4]]).unwrap();
    let b = blocking_bound(&c);
    let b1 = lookahead_bound(&c, BoundKind::LookAhead(1));
    check(b == 2.0 && b1 == 2.5, format!("b={b} b1={b1} (want 2, 2.5)"))
}

fn c4_oracle_equivalence(corpus: &[Instance]) -> Outcome {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for inst in corpus {
        for model in MODELS {
            let o = brute_force_expectimax(inst, model).map_err(|e| e.to_string())?;
            worst = worst.max((f(inst, model) - o.expected_relocations).abs());
        }
    }
    let secs = t.elapsed().as_secs_f64();
    check(
        worst <= TOL && secs < 300.0 && corpus.len() >= 100,
        format!("{} instances x 2 models, max |pbfs - oracle| = {worst:e}, {secs:.1}s", corpus.len()),
    )
}

fn c5_bound_chain(corpus: &[Instance]) -> Outcome {
    let mut violations = Vec::new();
    let mut comparisons = 0;
    for (i, inst) in corpus.iter().enumerate() {
        let order = InstanceOrder::new(inst);
        let b = lookahead_bound_with(&inst.initial, BoundKind::Blocking, &order);
        let b1 = lookahead_bound_with(&inst.initial, BoundKind::LookAhead(1), &order);
        let b2 = lookahead_bound_with(&inst.initial, BoundKind::LookAhead(2), &order);
        for model in MODELS {
            let fv = f(inst, model);
            let mut chain = vec![("b", b), ("b1", b1), ("b2", b2), ("f", fv)];
            for p in SCORED {
                let h = exact_policy_value(inst, p, model).map_err(|e| e.to_string())?;
                if h.expected_relocations + TOL < fv {
                    violations.push(format!("#{i} {} f > {}", model.name(), p.name()));
                }
                comparisons += 1;
            }
            for w in chain.windows(2) {
                comparisons += 1;
                if w[0].1 > w[1].1 + TOL {
                    violations.push(format!("#{i} {} {}={} > {}={}", model.name(), w[0].0, w[0].1, w[1].0, w[1].1));
                }
            }
            chain.clear();
        }
    }
    check(
        violations.is_empty(),
        format!("{comparisons} comparisons, {} violations {:?}", violations.len(), violations.iter().take(3).collect::<Vec<_>>()),
    )
}

fn c6_few_containers() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut bad = Vec::new();
    let mut n = 0;
    while n < 50 {
        let s = 2 + n % 4;
        let t = 2 + n % 3;
        let c = 1 + (n * 7) % s;
        let sizes = common::batch_sizes(&mut rng, c, 3);
        let inst = random_instance(g(t, s), &sizes, &mut rng).unwrap();
        let order = InstanceOrder::new(&inst);
        let b = scrp::bounds::blocking_bound_with(&inst.initial, &order);
        for model in MODELS {
            let fv = f(&inst, model);
            let lev = exact_policy_value(&inst, Policy::Leveling, model)
                .map_err(|e| e.to_string())?
                .expected_relocations;
            if fv != b || lev != b {
                bad.push(format!("{} {}: f={fv:e} L={lev:e} b={b:e}", inst.initial, model.name()));
            }
        }
        n += 1;
    }
    check(
        bad.is_empty(),
        format!("50 instances x 2 models with C <= S, {} mismatches (exact equality) {bad:?}", bad.len()),
    )
}

fn c7_model_gap(corpus: &[Instance]) -> Outcome {
    let mut violations = 0;
    for inst in corpus {
        if f(inst, Model::Batch) > f(inst, Model::Online) + TOL {
            violations += 1;
        }
    }
    let gen = generate(&GenRecipe {
        tiers: 4,
        stacks: 4,
        fill: 0.75,
        batch_law: BatchLaw::Fixed(4),
        count: 100,
        seed: 7,
    })
    .map_err(|e| e.to_string())?;
    let mut diffs = Vec::new();
    for inst in &gen {
        let fb = f(inst, Model::Batch);
        let fo = f(inst, Model::Online);
        if fb > fo + TOL {
            violations += 1;
        }
        if fb > 0.0 {
            diffs.push(100.0 * (fo - fb) / fb);
        }
    }
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let max = diffs.iter().copied().fold(0.0, f64::max);
    check(
        violations == 0 && mean > 0.0,
        format!(
            "{violations} violations over {} instances; T=4 S=4 C=12 W=3: mean difference {mean:.3}%, max {max:.3}%",
            corpus.len() + gen.len()
        ),
    )
}

/// Small instances whose batches are large enough that both error budgets sample.
fn sampling_corpus() -> Vec<(Instance, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let shapes: [&[usize]; 6] = [&[6, 1], &[1, 6], &[6, 2], &[7, 1], &[1, 7], &[2, 6]];
    let mut out = Vec::new();
    let mut k = 0;
    while out.len() < 20 && k < 2000 {
        let inst = random_instance(g(3, 4), shapes[k % shapes.len()], &mut rng).unwrap();
        k += 1;
        let samples = |eps| {
            pbfsa(&inst, BoundKind::LookAhead(1), eps, Model::Batch, 0, NO_LIMIT)
                .unwrap()
                .stats
                .samples
        };
        if samples(0.25) > 0 && samples(0.5) > 0 {
            let fv = f(&inst, Model::Batch);
            out.push((inst, fv));
        }
    }
    out
}

fn c8_sampling_guarantee() -> Outcome {
    let corpus = sampling_corpus();
    let runs = 500;
    let mut lines = Vec::new();
    let mut ok = corpus.len() == 20 && sample_count(2.0, 0.5) == 26;
    for eps in [0.25, 0.5] {
        let mut worst_mae: f64 = 0.0;
        let mut worst_bias: f64 = 0.0;
        let mut sampled_runs = 0;
        for (inst, fv) in &corpus {
            let mut abs = 0.0;
            let mut signed = 0.0;
            for seed in 0..runs {
                let v = pbfsa(inst, BoundKind::LookAhead(1), eps, Model::Batch, seed, NO_LIMIT)
                    .map_err(|e| e.to_string())?;
                if v.stats.samples > 0 {
                    sampled_runs += 1;
                }
                abs += (v.expected_relocations - fv).abs();
                signed += v.expected_relocations - fv;
            }
            worst_mae = worst_mae.max(abs / runs as f64);
            worst_bias = worst_bias.min(signed / runs as f64);
        }
        ok &= worst_mae <= eps && worst_bias >= -eps;
        lines.push(format!(
            "eps={eps}: max mean|err|={worst_mae:.4}, min mean err={worst_bias:.4}, sampled runs {sampled_runs}/{}",
            runs as usize * corpus.len()
        ));
    }
    check(
        ok,
        format!("{} instances; {}; N(2, 0.5)={}", corpus.len(), lines.join("; "), sample_count(2.0, 0.5)),
    )
}

fn c9_conjecture_sweep() -> Outcome {
    let t = Instant::now();
    let sweep = single_batch_sweep(g(3, 3), 6);
    let mut max_gap: f64 = 0.0;
    let mut counter = 0;
    for (_, inst) in &sweep {
        let fo = f(inst, Model::Online);
        let lev = exact_policy_value(inst, Policy::Leveling, Model::Online)
            .map_err(|e| e.to_string())?
            .expected_relocations;
        let gap = (fo - lev).abs();
        max_gap = max_gap.max(gap);
        if gap > TOL {
            counter += 1;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    check(
        counter == 0 && secs < 600.0,
        format!("{} single-batch bays, max gap {max_gap:e}, {counter} counterexamples, {secs:.1}s", sweep.len()),
    )
}

fn c10_heuristic_orderings() -> Outcome {
    let cells = [(3, 5, 0.5), (4, 4, 0.5)];
    let mut ok = true;
    let mut lines = Vec::new();
    for (ci, &(t, s, mu)) in cells.iter().enumerate() {
        let insts = generate(&GenRecipe {
            tiers: t,
            stacks: s,
            fill: mu,
            batch_law: BatchLaw::default(),
            count: 30,
            seed: 100 + ci as u64,
        })
        .map_err(|e| e.to_string())?;
        let mut sums = [0.0; SCORED.len()];
        let mut opt_sum = 0.0;
        let mut beaten = 0;
        for inst in &insts {
            let fv = f(inst, Model::Batch);
            opt_sum += fv;
            for (k, &p) in SCORED.iter().enumerate() {
                let h = exact_policy_value(inst, p, Model::Batch)
                    .map_err(|e| e.to_string())?
                    .expected_relocations;
                sums[k] += h;
                if fv > h + TOL {
                    beaten += 1;
                }
            }
        }
        let n = insts.len() as f64;
        let m: Vec<f64> = sums.iter().map(|x| x / n).collect();
        let (eg, em, eri, lev, rnd) = (m[0], m[1], m[2], m[3], m[4]);
        let ordered = eg <= eri + TOL && em <= eri + TOL && eri <= lev + TOL && lev <= rnd + TOL;
        ok &= ordered && beaten == 0 && insts.len() >= 30;
        lines.push(format!(
            "T={t} S={s} mu={mu} n={}: pbfs {:.3} EG {eg:.3} EM {em:.3} ERI {eri:.3} L {lev:.3} Random {rnd:.3}{}{}",
            insts.len(),
            opt_sum / n,
            if ordered { "" } else { " ORDER VIOLATED" },
            if beaten == 0 { String::new() } else { format!(" pbfs above a heuristic {beaten}x") }
        ));
    }
    check(ok, lines.join("; "))
}

fn c11_determinism() -> Outcome {
    let insts: Vec<(String, Instance)> = generate(&GenRecipe {
        tiers: 3,
        stacks: 4,
        fill: 0.6,
        batch_law: BatchLaw::default(),
        count: 8,
        seed: 11,
    })
    .map_err(|e| e.to_string())?
    .into_iter()
    .enumerate()
    .map(|(i, inst)| (format!("inst-{i:03}"), inst))
    .collect();
    let render = |jobs: usize| {
        let cfg = RunConfig {
            samples: 300,
            seed: 42,
            jobs,
            ..RunConfig::default()
        };
        let mut buf = Vec::new();
        write_rows(&mut buf, &run_all(&insts, &Method::bench_set(), &cfg), false).unwrap();
        buf
    };
    let a = render(1);
    let same_again = a == render(1);
    let same_parallel = a == render(4);
    let text = |seed| {
        generate(&GenRecipe {
            tiers: 4,
            stacks: 4,
            fill: 0.75,
            batch_law: BatchLaw::Fixed(4),
            count: 5,
            seed,
        })
        .unwrap()
        .iter()
        .map(write_instance)
        .collect::<String>()
    };
    let same_gen = text(3) == text(3);
    check(
        same_again && same_parallel && same_gen,
        format!(
            "bench CSV {} bytes: repeat {same_again}, 1 vs 4 threads {same_parallel}; generator bytes {same_gen}",
            a.len()
        ),
    )
}

fn main() -> ExitCode {
    let corpus = common::small_corpus(120, 4);
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("worked example 13/6 in both models", Box::new(c1_worked_example)),
        ("deterministic relocation optimum 3", Box::new(c2_deterministic_crp)),
        ("bound golden values b=2, b1=2.5", Box::new(c3_bound_golden_values)),
        ("pbfs equals brute-force expectimax", Box::new(|| c4_oracle_equivalence(&corpus))),
        ("b <= b1 <= b2 <= f <= heuristics", Box::new(|| c5_bound_chain(&corpus))),
        ("C <= S: pbfs = leveling = b", Box::new(c6_few_containers)),
        ("batch model never worse than online", Box::new(|| c7_model_gap(&corpus))),
        ("pbfsa mean error within epsilon", Box::new(c8_sampling_guarantee)),
        ("leveling optimal online on single batches", Box::new(c9_conjecture_sweep)),
        ("heuristic orderings on generated cells", Box::new(c10_heuristic_orderings)),
        ("byte-identical CSV under a seed", Box::new(c11_determinism)),
    ];
    // `cargo test --test acceptance -- 6 8` runs only the listed criteria
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        let t = Instant::now();
        let (tag, detail) = match run() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {tag}: {name} | {detail} [{:.1}s]", i + 1, t.elapsed().as_secs_f64());
    }
    let ran = if only.is_empty() { criteria.len() } else { only.len() };
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
