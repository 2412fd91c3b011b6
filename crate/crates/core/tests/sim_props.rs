mod common;

use sdfloc::scenario::UavConfig;
use sdfloc::sim::{RunSummary, Scope, SimError};
use sdfloc::{run_simulation, run_sweep, Condition, LinkClass, Scenario};

use common::{canonical, segment};

fn mixed_fleet(noise: f64) -> Scenario {
    let uav = |id: u32, y: f64| UavConfig {
        id,
        trajectory: vec![segment([-100.0, y, 100.0], [1.0, 0.0, 0.0], 10.0, 0.0, 30.0)],
    };
    let mut s = common::scenario(
        [100.0, 0.0, 0.0],
        vec![uav(1, -150.0), uav(2, 150.0), uav(3, -160.0)],
        Condition::Los,
        noise,
        3,
    );
    s.timeline.tracks.insert(2, vec![(0.0, Condition::Olos)]);
    s.timeline.tracks.insert(3, vec![(0.0, Condition::Nlos)]);
    s
}

#[test]
fn identical_seed_gives_identical_result() {
    let s = mixed_fleet(-100.0);
    assert_eq!(run_simulation(&s, 8).unwrap(), run_simulation(&s, 8).unwrap());
}

#[test]
fn series_share_time_axis_and_means() {
    let r = run_simulation(&mixed_fleet(-100.0), 4).unwrap();
    let n = r.time_axis.len();
    assert!(n > 0);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    for u in &r.per_uav {
        assert_eq!(u.errors.len(), n);
        assert!((u.route_avg - mean(&u.errors)).abs() < 1e-9);
    }
    for f in [&r.arithmetic, &r.weighted] {
        assert_eq!(f.errors.len(), n);
        assert_eq!(f.rules.len(), n);
        assert!((f.route_avg - mean(&f.errors)).abs() < 1e-9);
    }
    assert_eq!(r.envelope_min.len(), n);
    assert_eq!(r.envelope_max.len(), n);
    for (i, (lo, hi)) in r.envelope_min.iter().zip(&r.envelope_max).enumerate() {
        assert!(lo <= hi);
        for u in &r.per_uav {
            assert!(*lo <= u.errors[i] && u.errors[i] <= *hi);
        }
    }
}

#[test]
fn history_never_exceeds_capacity() {
    let mut s = mixed_fleet(-100.0);
    s.dfs_history_len = 7;
    let r = run_simulation(&s, 1).unwrap();
    let longest = r.windows.iter().flatten().map(|w| w.history_len).max().unwrap();
    assert!(longest <= 7);
    assert_eq!(longest, 7);
}

#[test]
fn estimates_depend_only_on_past_windows() {
    let full = mixed_fleet(-100.0);
    let full_run = run_simulation(&full, 6).unwrap();
    let mut short = full.clone();
    for u in &mut short.uavs {
        u.trajectory[0].duration = 12.0;
    }
    let short_run = run_simulation(&short, 6).unwrap();
    assert_eq!(short_run.windows.len(), 12);
    assert_eq!(short_run.windows[..], full_run.windows[..12]);
}

#[test]
fn seeds_change_errors_not_axes_or_classes() {
    let s = mixed_fleet(-100.0);
    let a = run_simulation(&s, 1).unwrap();
    let b = run_simulation(&s, 2).unwrap();
    assert_eq!(a.time_axis, b.time_axis);
    assert_ne!(a.per_uav, b.per_uav);
    let classes = |r: &sdfloc::SimResult| -> Vec<LinkClass> {
        r.windows.iter().flatten().map(|w| w.condition_classified).collect()
    };
    assert_eq!(classes(&a), classes(&b));
    // only the LOS UAV is within the default 6 dB of the strongest power
    assert!(a
        .windows
        .iter()
        .flatten()
        .all(|w| (w.uav_id == 1) == (w.condition_classified == LinkClass::LosUsable)));
}

#[test]
fn noise_free_single_pass_converges() {
    let r = run_simulation(&canonical(20, Condition::Los, f64::NEG_INFINITY), 0).unwrap();
    let last = *r.per_uav[0].errors.last().unwrap();
    assert!(last < 0.01, "final error {last}");
}

#[test]
fn sweep_of_one_seed_matches_run() {
    let s = mixed_fleet(-100.0);
    let sweep = run_sweep(&s, &[42]).unwrap();
    let single = RunSummary::from_result(&run_simulation(&s, 42).unwrap());
    assert_eq!(sweep.runs, vec![single.clone()]);
    for (scope, stats) in &sweep.per_scope {
        let v = single.get(*scope).unwrap();
        assert_eq!(stats.mean, v);
        assert_eq!(stats.median, v);
        assert_eq!(stats.std, 0.0);
    }
    assert_eq!(sweep.improvement_ratio.mean, single.improvement_ratio);
    assert!(sweep.per_scope.iter().any(|p| p.0 == Scope::Weighted));
}

#[test]
fn empty_seed_list_is_rejected() {
    assert!(matches!(run_sweep(&mixed_fleet(-100.0), &[]), Err(SimError::NoSeeds)));
}
