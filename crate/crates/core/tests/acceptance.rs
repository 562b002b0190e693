//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use biasaudit::calibration::{calibrate_roc, sweep_scores, ThresholdPolicy};
use biasaudit::cohort::AttributeSchema;
use biasaudit::metrics::{fairness_delta, GroupKey, GroupRates};
use biasaudit::pipeline::{audit, run_all, AnalysisOptions, RunConfig};
use biasaudit::report::{format_rate, SeedRecord};
use biasaudit::stats::{
    chi_square_sf, fit_ols, kruskal_wallis, reg_incomplete_beta, student_t_sf_two_sided,
    DesignMatrix,
};
use biasaudit::synth::{generate, AttributeEffect, EffectTarget, SynthConfig};
use biasaudit::trials::{generate_trials, score_trials, PairLabel, TrialPolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn scored_audit(config: &SynthConfig, schema: &AttributeSchema) -> biasaudit::report::AuditBundle {
    let out = generate(config, schema).expect("synth");
    let trials = generate_trials(
        &out.cohort,
        &TrialPolicy::default(),
        config.seed.wrapping_add(1),
    )
    .expect("pairs");
    let trials = score_trials(&trials, &out.cohort).expect("score");
    audit(
        &trials,
        &out.cohort,
        schema,
        &AnalysisOptions::default(),
        SeedRecord::default(),
    )
    .expect("audit")
}

// 1. Pair-protocol arithmetic
fn pair_protocol() -> Outcome {
    let schema = AttributeSchema::standard();
    let config = SynthConfig {
        seed: 1,
        ..SynthConfig::balanced(&schema, 20).unwrap()
    };
    let out = generate(&config, &schema).unwrap();
    let trials = generate_trials(&out.cohort, &TrialPolicy::default(), 2).unwrap();
    let mut bad = 0;
    for ident in &trials.identities {
        let g = ident
            .pairs
            .iter()
            .filter(|p| p.label == PairLabel::Genuine)
            .count();
        let i = ident
            .pairs
            .iter()
            .filter(|p| p.label == PairLabel::Impostor)
            .count();
        if g != 6 || i != 50 {
            bad += 1;
        }
    }
    outcome(
        bad == 0 && trials.identities.len() == 120,
        format!(
            "{} identities, {bad} off the 6/50 split",
            trials.identities.len()
        ),
    )
}

// 2. Calibration oracle
fn calibration_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut details = Vec::new();
    let mut pass = true;
    for quantized in [false, true] {
        let mut genuine = Vec::new();
        let mut impostor = Vec::new();
        for _ in 0..1000 {
            let is_genuine = rng.random::<f64>() < 0.3;
            let mut s: f64 = if is_genuine {
                0.3 + 0.5 * rng.random::<f64>()
            } else {
                0.6 * rng.random::<f64>()
            };
            if quantized {
                s = (s * 50.0).round() / 50.0;
            }
            if is_genuine {
                genuine.push(s)
            } else {
                impostor.push(s)
            }
        }
        let roc = sweep_scores(&genuine, &impostor).unwrap();
        let (ng, ni) = (genuine.len(), impostor.len());
        let mut mismatches = 0;
        for pt in &roc.points {
            let fa = impostor.iter().filter(|&&s| s > pt.tau).count();
            let fr = genuine.iter().filter(|&&s| s <= pt.tau).count();
            if fa != pt.false_accepts
                || fr != pt.false_rejects
                || pt.far != fa as f64 / ni as f64
                || pt.frr != fr as f64 / ng as f64
            {
                mismatches += 1;
            }
        }
        let eer = calibrate_roc(&roc, ThresholdPolicy::Eer).unwrap();
        let gap = (eer.far - eer.frr).abs();
        let best = roc
            .points
            .iter()
            .map(|p| (p.far - p.frr).abs())
            .fold(f64::INFINITY, f64::min);
        // largest single step of either rate between adjacent candidates
        let bound = roc
            .points
            .windows(2)
            .map(|w| f64::max((w[1].far - w[0].far).abs(), (w[1].frr - w[0].frr).abs()))
            .fold(0.0, f64::max);
        let ok = mismatches == 0 && gap <= best + 1e-15 && gap <= bound;
        pass &= ok;
        details.push(format!(
            "{}: {} candidates, {mismatches} recount mismatches, |FAR-FRR|={gap:.5} (bound {bound:.5})",
            if quantized { "tied" } else { "continuous" },
            roc.points.len()
        ));
    }
    outcome(pass, details.join("; "))
}

// 3. Rate/delta arithmetic
fn delta_arithmetic() -> Outcome {
    let group = |far, frr| GroupRates {
        key: GroupKey(vec![None]),
        label: String::new(),
        far: Some(far),
        frr: Some(frr),
        member_count: 1,
    };
    let d_far = fairness_delta(&group(0.051, 0.0), &group(0.044, 0.0))
        .unwrap()
        .delta_far;
    let d_frr = fairness_delta(&group(0.0, 0.087), &group(0.0, 0.061))
        .unwrap()
        .delta_frr;
    let pass = format_rate(d_far) == "0.007"
        && format_rate(d_frr) == "0.026"
        && (d_far - 0.007).abs() < 1e-12
        && (d_frr - 0.026).abs() < 1e-12;
    outcome(
        pass,
        format!("dFAR={} dFRR={}", format_rate(d_far), format_rate(d_frr)),
    )
}

// 4. Statistics kernel accuracy
fn special_functions() -> Outcome {
    let data = include_str!("data/special_oracle.csv");
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut count = 0;
    for line in data.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let dof: usize = f[1].parse().unwrap();
        let x: f64 = f[2].parse().unwrap();
        let expected: f64 = f[5].parse().unwrap();
        let got = match f[0] {
            "student_t" => student_t_sf_two_sided(x, dof).unwrap(),
            "chi_square" => chi_square_sf(x, dof).unwrap(),
            "incomplete_beta" => {
                let a: f64 = f[3].parse().unwrap();
                let b: f64 = f[4].parse().unwrap();
                reg_incomplete_beta(a, b, x).unwrap()
            }
            other => panic!("unknown oracle row {other}"),
        };
        let e = worst.entry(f[0]).or_insert(0.0);
        *e = e.max((got - expected).abs());
        count += 1;
    }
    let pass = count == 150 && worst.len() == 3 && worst.values().all(|&e| e <= 1e-8);
    let detail = worst
        .iter()
        .map(|(k, v)| format!("{k} max err {v:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(pass, format!("{count} points; {detail}"))
}

fn random_design(rng: &mut ChaCha8Rng, n: usize, f: usize) -> DesignMatrix<f64> {
    let ids = (0..n).map(|i| format!("r{i}")).collect();
    let cols = (0..f)
        .map(|j| {
            let col: Vec<f64> = (0..n)
                .map(|_| {
                    if j % 4 == 3 {
                        f64::from(rng.random::<f64>() < 0.4)
                    } else {
                        rng.random::<f64>() * (1.0 + j as f64)
                    }
                })
                .collect();
            (format!("x{j}"), col)
        })
        .collect();
    DesignMatrix::with_intercept(ids, cols).unwrap()
}

// 5. OLS recovery
fn ols_recovery() -> Outcome {
    let (n, f) = (500, 21);
    let beta: Vec<f64> = (0..=f)
        .map(|j| {
            if j == 0 {
                0.3
            } else {
                (j as f64 - 10.0) / 20.0
            }
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random_design(&mut rng, n, f);
    let y = x.predict(&beta);
    let exact = fit_ols(&x, &y).unwrap();
    let max_err = exact
        .coefficients
        .iter()
        .zip(&beta)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let noise = Normal::new(0.0, 0.1).unwrap();
    let covered: Vec<Vec<bool>> = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let x = random_design(&mut rng, n, f);
            let y: Vec<f64> = x
                .predict(&beta)
                .into_iter()
                .map(|v| v + noise.sample(&mut rng))
                .collect();
            let fit = fit_ols(&x, &y).unwrap();
            (0..=f)
                .map(|j| (fit.coefficients[j] - beta[j]).abs() <= 3.0 * fit.std_errors[j])
                .collect()
        })
        .collect();
    let per_coef: Vec<usize> = (0..=f)
        .map(|j| covered.iter().filter(|run| run[j]).count())
        .collect();
    let total: usize = per_coef.iter().sum();
    let coverage = total as f64 / (100.0 * (f + 1) as f64);
    let min = *per_coef.iter().min().unwrap();
    outcome(
        max_err <= 1e-8 && coverage >= 0.99,
        format!(
            "noiseless max err {max_err:.1e}; noisy 3-SE coverage {:.2}% pooled over {} coefficients (per-coefficient min {min}/100)",
            100.0 * coverage,
            f + 1
        ),
    )
}

// 6. Type-I calibration
fn type_one() -> Outcome {
    let schema = AttributeSchema::standard();
    let counts: Vec<(usize, usize)> = (0..50u64)
        .into_par_iter()
        .map(|seed| {
            let config = SynthConfig {
                seed: 600 + seed,
                ..SynthConfig::balanced(&schema, 50).unwrap()
            };
            let bundle = scored_audit(&config, &schema);
            let a = &bundle.analyses[0];
            let mut sig = 0;
            let mut all = 0;
            for r in [&a.explanatory_far, &a.explanatory_frr]
                .into_iter()
                .flatten()
            {
                for p in r.regression.p_values.iter().skip(1) {
                    all += 1;
                    sig += usize::from(*p < 0.05);
                }
            }
            (sig, all)
        })
        .collect();
    let sig: usize = counts.iter().map(|c| c.0).sum();
    let all: usize = counts.iter().map(|c| c.1).sum();
    let rate = sig as f64 / all as f64;
    outcome(
        rate <= 0.10,
        format!(
            "{sig}/{all} coefficient tests at p<0.05 ({:.2}%)",
            100.0 * rate
        ),
    )
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Sign of far(woman-side) - far(man-side) for every delta between a
/// Woman group and a Man group with the same collapse pattern, labelled
/// woman-side first.
fn gender_signs(report: &serde_json::Value) -> (Option<i8>, Vec<(String, i8)>) {
    let deltas = report["analyses"][0]["deltas"]
        .as_array()
        .expect("deltas array");
    let mut marginal = None;
    let mut combined = Vec::new();
    for d in deltas {
        let ki = &d["key_i"];
        let kj = &d["key_j"];
        let g = |k: &serde_json::Value| k[0].as_u64();
        let orient = match (g(ki), g(kj)) {
            (Some(1), Some(0)) => 1.0,
            (Some(0), Some(1)) => -1.0,
            _ => continue,
        };
        let s = sign(orient * d["delta_far"].as_f64().expect("numeric delta"));
        if ki[1].is_null() && kj[1].is_null() {
            marginal = Some(s);
        } else if !ki[1].is_null() && !kj[1].is_null() {
            let (gi, gj) = (
                d["group_i"].as_str().unwrap(),
                d["group_j"].as_str().unwrap(),
            );
            let label = if orient > 0.0 {
                format!("{gi} vs {gj}")
            } else {
                format!("{gj} vs {gi}")
            };
            combined.push((label, s));
        }
    }
    (marginal, combined)
}

// 7. Simpson reversal reproduction
fn simpson() -> Outcome {
    let schema = AttributeSchema::standard();
    let results: Vec<(u64, bool, bool)> = (0..10u64)
        .into_par_iter()
        .map(|seed| {
            let dir = tempfile::tempdir().unwrap();
            let config = RunConfig {
                seed: 70 + seed,
                plant_simpson: true,
                synth: SynthConfig::balanced(&schema, 40).unwrap(),
                ..Default::default()
            };
            run_all(&config, &schema, dir.path()).unwrap();
            let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
            let report: serde_json::Value = serde_json::from_str(&text).unwrap();
            let (marginal, combined) = gender_signs(&report);
            let m = marginal.unwrap_or(0);
            let any_reversal = m != 0 && combined.iter().any(|(_, s)| *s == -m);
            let gt: serde_json::Value = serde_json::from_str(
                &std::fs::read_to_string(dir.path().join("cohort/ground_truth.json")).unwrap(),
            )
            .unwrap();
            let pattern = &gt["simpson"];
            let planted_pair = format!(
                "{} / {} vs {} / {}",
                pattern["cell_i"][0].as_str().unwrap(),
                pattern["cell_i"][1].as_str().unwrap(),
                pattern["cell_j"][0].as_str().unwrap(),
                pattern["cell_j"][1].as_str().unwrap()
            );
            let planted_ok = m == pattern["expected_marginal_sign"].as_i64().unwrap() as i8
                && combined.iter().any(|(l, s)| {
                    *l == planted_pair
                        && *s == pattern["expected_cell_sign"].as_i64().unwrap() as i8
                });
            (seed, any_reversal, planted_ok)
        })
        .collect();
    let reversed = results.iter().filter(|r| r.1).count();
    let planted = results.iter().filter(|r| r.2).count();
    outcome(
        reversed == 10 && planted == 10,
        format!("reversal in {reversed}/10 seeds; planted sign pattern matched in {planted}/10"),
    )
}

// 8. Planted-effect recovery
fn planted_effect() -> Outcome {
    let schema = AttributeSchema::standard();
    let runs: Vec<(bool, bool, f64)> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let mut config = SynthConfig {
                seed: 800 + seed,
                ..SynthConfig::balanced(&schema, 300).unwrap()
            };
            config.attribute_effects.push(AttributeEffect {
                variable: "smile".into(),
                target: EffectTarget::FarLike,
                strength: 0.1,
            });
            let bundle = scored_audit(&config, &schema);
            let r = bundle.analyses[0].explanatory_far.as_ref().unwrap();
            let corr = r
                .correlations
                .iter()
                .find(|c| c.column == "smile")
                .unwrap()
                .result
                .unwrap();
            let (coef, p) = r.regression.coefficient("smile").unwrap();
            (
                corr.r > 0.0 && corr.p_value < 0.01,
                coef > 0.0 && p < 0.05,
                coef,
            )
        })
        .collect();
    let corr_ok = runs.iter().filter(|r| r.0).count();
    let reg_ok = runs.iter().filter(|r| r.1).count();
    let mean_shift = runs.iter().map(|r| r.2).sum::<f64>() / runs.len() as f64;
    outcome(
        corr_ok >= 19 && reg_ok >= 19 && mean_shift >= 0.05,
        format!(
            "mean FAR shift across the smile range {mean_shift:.3}; correlation recovered {corr_ok}/20, regression {reg_ok}/20"
        ),
    )
}

fn normal_upper_tail(z: f64) -> f64 {
    // composite Simpson rule on the standard normal density over [z, z + 12]
    let steps = 20_000;
    let h = 12.0 / steps as f64;
    let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = pdf(z) + pdf(z + 12.0);
    for k in 1..steps {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * pdf(z + k as f64 * h);
    }
    s * h / 3.0
}

// 9. Kruskal-Wallis oracle
fn kruskal_oracle() -> Outcome {
    let a: Vec<f64> = (1..=5).map(f64::from).collect();
    let b: Vec<f64> = (6..=10).map(f64::from).collect();
    let kw = kruskal_wallis(&[a, b]).unwrap();
    // ranks equal the values: R1 = 15, R2 = 40, N = 10
    let h_hand =
        12.0 / (10.0 * 11.0) * (15.0f64.powi(2) / 5.0 + 40.0f64.powi(2) / 5.0) - 3.0 * 11.0;
    // chi-square with one degree of freedom is the square of a standard normal
    let p_oracle = 2.0 * normal_upper_tail(h_hand.sqrt());
    let pass = (kw.h - 6.818).abs() <= 0.001
        && (kw.h - h_hand).abs() < 1e-12
        && (kw.p_value - 0.009).abs() <= 0.001
        && (kw.p_value - p_oracle).abs() < 1e-9;
    outcome(
        pass,
        format!(
            "H={:.6} (hand {h_hand:.6}), p={:.6} (oracle {p_oracle:.6})",
            kw.h, kw.p_value
        ),
    )
}

fn collect_files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

// 10. Determinism across runs and thread counts
fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        "threshold_policies = [\"eer\", \"far@0.01\"]\nplant_simpson = true\n\n[synth]\ndim = 256\n",
    )
    .unwrap();
    let bin = env!("CARGO_BIN_EXE_biasaudit");
    let mut bundles = Vec::new();
    for (name, threads) in [("a", "1"), ("b", "4"), ("c", "4")] {
        let out = dir.path().join(name);
        let status = Command::new(bin)
            .args(["run-all", "--config"])
            .arg(&config)
            .args(["--seed", "2024", "--threads", threads, "--out"])
            .arg(&out)
            .output()
            .unwrap();
        if !status.status.success() {
            return outcome(
                false,
                format!(
                    "run-all failed: {}",
                    String::from_utf8_lossy(&status.stderr)
                ),
            );
        }
        bundles.push(collect_files(&out));
    }
    let identical = bundles.windows(2).all(|w| w[0] == w[1]);
    let has_report = bundles[0].contains_key("report.json");
    outcome(
        identical && has_report && bundles[0].len() > 5,
        format!(
            "{} files per bundle, byte-identical across 3 runs (1, 4, 4 threads): {identical}",
            bundles[0].len()
        ),
    )
}

type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: Vec<Criterion> = vec![
        (
            1,
            "pair-protocol arithmetic",
            Duration::from_secs(1),
            pair_protocol,
        ),
        (
            2,
            "calibration recount oracle",
            Duration::from_secs(5),
            calibration_oracle,
        ),
        (
            3,
            "rate/delta arithmetic",
            Duration::from_secs(1),
            delta_arithmetic,
        ),
        (
            4,
            "statistics kernel accuracy",
            Duration::from_secs(10),
            special_functions,
        ),
        (5, "OLS recovery", Duration::from_secs(60), ols_recovery),
        (6, "type-I calibration", Duration::from_secs(300), type_one),
        (
            7,
            "Simpson reversal reproduction",
            Duration::from_secs(120),
            simpson,
        ),
        (
            8,
            "planted-effect recovery",
            Duration::from_secs(300),
            planted_effect,
        ),
        (
            9,
            "Kruskal-Wallis oracle",
            Duration::from_secs(1),
            kruskal_oracle,
        ),
        (10, "determinism", Duration::from_secs(120), determinism),
    ];
    let mut failed = 0;
    for (n, name, budget, run) in criteria {
        let start = Instant::now();
        let o = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= budget;
        let pass = o.pass && in_time;
        failed += usize::from(!pass);
        println!(
            "{} criterion {n:>2} ({name}): {} [{:.2}s of {}s]",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all 10 criteria passed");
}
