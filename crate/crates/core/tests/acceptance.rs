//! Acceptance suite. Run with `cargo test --test acceptance -- --nocapture`
//! to see one PASS/FAIL line per criterion.

mod common;

use std::fs;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use sdfloc::channel::{received_power_dbm, synthesize_window, window_rng};
use sdfloc::cli::{cmd_run, THREADS_ENV};
use sdfloc::dfs::{spectral_moments, DfsEstimator, DopplerSample, EstimatorMode};
use sdfloc::fusion::{classify_conditions, fuse_arithmetic, fuse_weighted};
use sdfloc::sdf::{pair_from_a, pairwise_estimate};
use sdfloc::sim::{Scope, Stats};
use sdfloc::{
    run_simulation, run_sweep, Condition, FusionRule, LinkClass, LocalEstimate, NodeReport,
    ReceivedWindow, Scenario, Vec3,
};

use common::{canonical, shipped_scenario_path};

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(n: u32, name: &str, o: &Outcome) -> bool {
    println!(
        "[{}] criterion {n}: {name}: {}",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail
    );
    o.pass
}

/// Every ordering of `0..n`.
fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn exact_inversion() -> Outcome {
    let scenario = canonical(20, Condition::Los, f64::NEG_INFINITY);
    let start = Instant::now();
    let r = run_simulation(&scenario, scenario.seed).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let err = *r.per_uav[0].errors.last().unwrap();
    Outcome {
        pass: err < 0.01 && elapsed < 1.0,
        detail: format!("final error {err:.2e} m (< 0.01 m), runtime {elapsed:.3} s (< 1 s)"),
    }
}

fn hand_checked_pair() -> Outcome {
    let (x, y) = pair_from_a(0.0, 0.5, 5.0, 1.0, 10.0, 0.0).unwrap();
    let sample = |t: f64, a: f64| {
        let f = 1.0 / (1.0 + a * a).sqrt();
        DopplerSample {
            t,
            f_d_hat: f * 10.0,
            normalized_f: f,
            power: 0.0,
            mode: EstimatorMode::LosPeak,
        }
    };
    let (xs, ys) = pairwise_estimate(&sample(0.0, 0.5), &sample(5.0, 1.0), 10.0, 0.0).unwrap();
    let worst = [(x - 100.0).abs(), (y - 50.0).abs(), (xs - 100.0).abs(), (ys - 50.0).abs()]
        .into_iter()
        .fold(0.0, f64::max);
    Outcome {
        pass: worst <= 1e-9,
        detail: format!("(x, |y|) = ({x}, {y}), from samples ({xs}, {ys}); max deviation {worst:.1e} (<= 1e-9)"),
    }
}

struct SweepFacts {
    weighted: Stats,
    arithmetic: Stats,
    ratio: Stats,
    per_uav: Vec<(u32, f64)>,
    elapsed: f64,
}

fn shipped_sweep() -> SweepFacts {
    let scenario = Scenario::load(&shipped_scenario_path()).unwrap();
    let seeds: Vec<u64> = (0..30).map(|i| scenario.seed + i).collect();
    let start = Instant::now();
    let sweep = run_sweep(&scenario, &seeds).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let stats = |scope: Scope| sweep.per_scope.iter().find(|p| p.0 == scope).unwrap().1;
    SweepFacts {
        weighted: stats(Scope::Weighted),
        arithmetic: stats(Scope::Arithmetic),
        ratio: sweep.improvement_ratio,
        per_uav: scenario.uavs.iter().map(|u| (u.id, stats(Scope::Uav(u.id)).median)).collect(),
        elapsed,
    }
}

fn cooperative_gain(f: &SweepFacts) -> Outcome {
    let ratio = f.ratio.median;
    Outcome {
        pass: f.weighted.median < f.arithmetic.median && (2.0..=5.0).contains(&ratio) && f.elapsed < 60.0,
        detail: format!(
            "median weighted {:.1} m < arithmetic {:.1} m; median ratio {ratio:.2} (mean {:.2} +/- {:.2}) in [2, 5]; 30 seeds in {:.1} s (< 60 s)",
            f.weighted.median, f.arithmetic.median, f.ratio.mean, f.ratio.std, f.elapsed
        ),
    }
}

fn per_uav_magnitudes(f: &SweepFacts) -> Outcome {
    let values: Vec<f64> = f.per_uav.iter().map(|p| p.1).collect();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let listed: Vec<String> = f.per_uav.iter().map(|(id, v)| format!("uav{id} {v:.0}")).collect();
    Outcome {
        pass: values.iter().all(|v| (10.0..=500.0).contains(v)) && hi / lo >= 2.0,
        detail: format!(
            "median route averages [{}] m all in [10, 500]; max/min {:.2} (>= 2)",
            listed.join(", "),
            hi / lo
        ),
    }
}

fn dfs_accuracy() -> Outcome {
    let (fs, n) = (200.0, 200);
    let est = DfsEstimator::new(n);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let f = rng.random_range(-10.0..10.0);
        let samples: Vec<Complex64> = (0..n)
            .map(|i| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * f * (i as f64 + 0.5) / fs))
            .collect();
        let w = ReceivedWindow {
            uav_id: 1,
            t_start: 0.0,
            sample_rate: fs,
            received_power: received_power_dbm(&samples),
            samples,
            true_condition: Condition::Los,
        };
        let s = est.estimate(&w, 10.0, EstimatorMode::LosPeak).unwrap();
        worst = worst.max((s.f_d_hat - f).abs());
    }

    let los = canonical(20, Condition::Los, f64::NEG_INFINITY);
    let nlos = canonical(20, Condition::Nlos, f64::NEG_INFINITY);
    let mut min_ratio = f64::INFINITY;
    for k in 0..20u64 {
        let spread = |s: &Scenario| {
            let w = synthesize_window(s, 1, k as f64, &mut window_rng(9, 1, k)).unwrap();
            spectral_moments(&est, &est.power_spectrum(&w.samples), fs, fs / 2.0).1
        };
        min_ratio = min_ratio.min(spread(&nlos) / spread(&los));
    }
    Outcome {
        pass: worst < 0.05 && min_ratio >= 10.0,
        detail: format!(
            "max |error| over 100 tones {worst:.2e} Hz (< 0.05); smallest NLOS/LOS spectral spread ratio over 20 windows {min_ratio:.0} (>= 10)"
        ),
    }
}

fn fusion_patterns() -> Outcome {
    let perms = permutations(5);
    let mut failures = Vec::new();
    for mask in 0u32..32 {
        let los: Vec<bool> = (0..5).map(|i| mask & (1 << i) != 0).collect();
        let reports: Vec<NodeReport> = (0..5)
            .map(|i| {
                let power = if los[i] { -70.0 - i as f64 } else { -95.0 + 0.5 * i as f64 };
                let p = Vec3::new(100.0 * i as f64 + 3.0, -40.0 * i as f64, 0.5 * i as f64);
                NodeReport::new(
                    i as u32 + 1,
                    10.5,
                    power,
                    Some(LocalEstimate {
                        uav_id: i as u32 + 1,
                        t: 10.5,
                        position_world: p,
                        position_local: p,
                        residual: 0.0,
                        n_pairs_used: 1,
                    }),
                )
            })
            .collect();

        let mut classified = reports.clone();
        classify_conditions(&mut classified, 6.0).unwrap();
        // with no LOS node every power is within 6 dB of the strongest
        let expected: Vec<LinkClass> = (0..5)
            .map(|i| if los[i] || mask == 0 { LinkClass::LosUsable } else { LinkClass::Nlos })
            .collect();
        let got: Vec<LinkClass> = classified.iter().map(|r| r.classified_condition).collect();
        if got != expected {
            failures.push(format!("mask {mask:05b}: classes {got:?}"));
        }

        let weighted = fuse_weighted(&classified).unwrap();
        let arithmetic = fuse_arithmetic(&classified).unwrap();
        let usable: Vec<&NodeReport> = classified
            .iter()
            .filter(|r| r.classified_condition == LinkClass::LosUsable)
            .collect();
        let oracle = usable.iter().fold(Vec3::zeros(), |acc, r| acc + r.estimate.as_ref().unwrap().position_world)
            / usable.len() as f64;
        if weighted.position_world != oracle || weighted.rule_used != FusionRule::Weighted {
            failures.push(format!("mask {mask:05b}: weighted mean {:?}", weighted.position_world));
        }

        for p in &perms {
            let shuffled: Vec<NodeReport> = p.iter().map(|&i| classified[i].clone()).collect();
            if fuse_weighted(&shuffled).unwrap() != weighted || fuse_arithmetic(&shuffled).unwrap() != arithmetic {
                failures.push(format!("mask {mask:05b}: order {p:?} changes the result"));
                break;
            }
        }

        let mut all_nlos = classified.clone();
        all_nlos.iter_mut().for_each(|r| r.classified_condition = LinkClass::Nlos);
        let fallback = fuse_weighted(&all_nlos).unwrap();
        if fallback.position_world != arithmetic.position_world
            || fallback.contributing_ids != arithmetic.contributing_ids
            || fallback.rule_used != FusionRule::WeightedFallbackArithmetic
        {
            failures.push(format!("mask {mask:05b}: fallback differs from arithmetic"));
        }
    }
    Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("32 condition patterns x {} orderings, exact equality throughout", perms.len())
        } else {
            failures.join("; ")
        },
    }
}

fn determinism() -> Outcome {
    const FILES: [&str; 4] = ["per_uav_errors.csv", "fused_errors.csv", "doppler_curves.csv", "summary.csv"];
    let dir = tempfile::tempdir().unwrap();
    let path = shipped_scenario_path();
    let read = |d: &std::path::Path| FILES.map(|f| fs::read(d.join(f)).unwrap());

    cmd_run(&path, None, &dir.path().join("a")).unwrap();
    cmd_run(&path, None, &dir.path().join("b")).unwrap();
    let reference = read(&dir.path().join("a"));
    let mut same = reference == read(&dir.path().join("b"));

    for threads in ["1", "2", "8"] {
        let out = dir.path().join(format!("t{threads}"));
        let status = Command::new(env!("CARGO_BIN_EXE_sdf-sim"))
            .args(["run", "--scenario", path.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .env(THREADS_ENV, threads)
            .status()
            .unwrap();
        same &= status.success() && read(&out) == reference;
    }
    Outcome {
        pass: same,
        detail: format!(
            "cmd_run twice in-process and via the binary with {THREADS_ENV}=1, 2, 8: CSVs {}",
            if same { "byte-identical" } else { "differ" }
        ),
    }
}

#[test]
fn acceptance() {
    let sweep = shipped_sweep();
    let results = [
        report(1, "exact inversion, noise-free single pass", &exact_inversion()),
        report(2, "hand-checked pair", &hand_checked_pair()),
        report(3, "cooperative gain on the shipped scenario", &cooperative_gain(&sweep)),
        report(4, "per-UAV error magnitudes", &per_uav_magnitudes(&sweep)),
        report(5, "DFS estimator accuracy", &dfs_accuracy()),
        report(6, "fusion rules over all 5-node patterns", &fusion_patterns()),
        report(7, "determinism across runs and thread counts", &determinism()),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    assert_eq!(passed, results.len());
}
