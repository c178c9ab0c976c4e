//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sfcsim::engine::{
    predump_closed_form, predump_schedule, simulate, simulate_with_specs, EventKind, EventLog, PhaseKind,
};
use sfcsim::experiment::run_repetitions;
use sfcsim::metrics::{calibrate, extract, CalibrationBounds, CalibrationTargets, SummaryStats};
use sfcsim::model::{
    validate_scenario, BasePattern, InstanceSpec, InterMecLink, MecNode, PatternKind, Scenario, SfcSpec,
};
use sfcsim::patterns::{build_plan, build_plan_for, compute_reservation};

struct Verdict {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

impl Verdict {
    fn new(pass: bool, summary: impl Into<String>) -> Self {
        Self {
            pass,
            summary: summary.into(),
            details: Vec::new(),
        }
    }
}

fn presets() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../presets")
}

fn load<T: serde::de::DeserializeOwned>(name: &str) -> T {
    let path = presets().join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn calibrated() -> Scenario {
    load("paper_sfc.json")
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}

fn noise_free(s: &Scenario) -> EventLog {
    let plan = build_plan_for(s).expect("plan");
    simulate_with_specs(s, &plan, &s.sfc.instances).expect("simulate")
}

fn base_scenario(instances: Vec<InstanceSpec>) -> Scenario {
    Scenario {
        source: MecNode {
            id: "src".into(),
            cpu_capacity_pct: 100.0,
        },
        destination: MecNode {
            id: "dst".into(),
            cpu_capacity_pct: 100.0,
        },
        link: InterMecLink {
            capacity_bytes_per_s: 3e9,
            latency_s: 0.0,
            reservable_fraction: 1.0,
        },
        sfc: SfcSpec { instances },
        pattern: PatternKind::new(BasePattern::Asynchronous),
        migration_bandwidth_limit_bytes_per_s: None,
        background_transfers: 0,
        repetitions: 1,
        base_seed: 0,
        noise_sigma: 0.0,
        predump_stop_threshold_bytes: 65_536.0,
        predump_max_iters: 5,
        reconnect_delay_s: 0.0,
        cpu_cost_pct: sfcsim::model::default_cpu_costs(),
        reservation_tolerance: 0.10,
        reservation_rate_tol_bytes_per_s: 1_000.0,
    }
}

fn instance(name: &str, v: [f64; 8]) -> InstanceSpec {
    InstanceSpec {
        name: name.into(),
        disk_delta_bytes: v[0],
        mem_delta_bytes: v[1],
        dirty_rate_bytes_per_s: v[2],
        state_overhead_bytes: v[3],
        restore_time_s: v[4],
        phase_overhead_s: [
            (PhaseKind::DiskCopy, v[5]),
            (PhaseKind::PreDump, v[6]),
            (PhaseKind::Dump, v[7]),
        ]
        .into_iter()
        .collect(),
        nominal_image_bytes: 0.0,
    }
}

/// Geometric sum of the first `k` pre-dump iterations.
fn geometric_shipped(m0: f64, q: f64, k: u32) -> f64 {
    if q == 1.0 {
        m0 * f64::from(k)
    } else {
        m0 * (1.0 - q.powi(k as i32)) / (1.0 - q)
    }
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        let r = 10f64.powf(rng.random_range(5.0..8.0));
        let dirty = if k % 10 == 0 {
            r * rng.random_range(1.0..3.0)
        } else {
            r * rng.random_range(0.0..0.9)
        };
        let inst = instance(
            "x",
            [
                rng.random_range(0.0..1e7),
                rng.random_range(0.0..1e7),
                dirty,
                rng.random_range(0.0..1e6),
                rng.random_range(0.0..3.0),
                rng.random_range(0.0..5.0),
                rng.random_range(0.0..5.0),
                rng.random_range(0.0..1.0),
            ],
        );
        let mut s = base_scenario(vec![inst.clone()]);
        s.migration_bandwidth_limit_bytes_per_s = Some(r);
        s.link.latency_s = rng.random_range(0.0..0.05);
        s.reconnect_delay_s = rng.random_range(0.0..1.0);
        s.predump_stop_threshold_bytes = rng.random_range(0.0..1e6);
        s.predump_max_iters = rng.random_range(1..9);

        let cf = predump_closed_form(
            inst.mem_delta_bytes,
            dirty,
            r,
            s.predump_stop_threshold_bytes,
            s.predump_max_iters,
        )
        .unwrap();
        let q = dirty / r;
        let iters = cf.iterations.len() as u32;
        let lat = s.link.latency_s;
        let downtime =
            (cf.final_dirty_bytes + inst.state_overhead_bytes) / r + inst.overhead(PhaseKind::Dump) + lat + inst.restore_time_s;
        let total = inst.disk_delta_bytes / r
            + inst.overhead(PhaseKind::DiskCopy)
            + lat
            + geometric_shipped(inst.mem_delta_bytes, q, iters) / r
            + inst.overhead(PhaseKind::PreDump)
            + lat
            + downtime;

        let m = extract(&noise_free(&s)).unwrap();
        let got = &m.instances[0];
        worst = worst
            .max(rel(got.total_time_s, total))
            .max(rel(got.downtime_s, downtime))
            .max(rel(m.sfc_total_time_s, total + s.reconnect_delay_s));
    }
    let elapsed = start.elapsed();
    Verdict::new(
        worst <= 1e-9 && elapsed < Duration::from_secs(5),
        format!("single-instance phase sum: 1000 draws, max rel err {worst:.2e} (≤ 1e-9), {elapsed:.2?} (< 5 s)"),
    )
}

fn criterion_2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut index_mismatch = 0;
    let mut flag_mismatch = 0;
    let mut divergent = 0;
    for _ in 0..10_000 {
        let m0 = 10f64.powf(rng.random_range(3.0..9.0));
        let r = 10f64.powf(rng.random_range(4.0..9.0));
        let d = r * rng.random_range(0.0..2.0);
        if d >= r {
            divergent += 1;
        }
        let th = m0 * rng.random_range(0.0..0.5);
        let max_iters = rng.random_range(1..12);
        let a = predump_schedule(m0, d, r, th, max_iters).unwrap();
        let b = predump_closed_form(m0, d, r, th, max_iters).unwrap();
        if a.iterations.len() != b.iterations.len() {
            index_mismatch += 1;
            continue;
        }
        if a.converged != b.converged {
            flag_mismatch += 1;
        }
        for (x, y) in a.iterations.iter().zip(&b.iterations) {
            worst = worst.max(rel(*y, *x));
        }
        worst = worst.max(rel(b.final_dirty_bytes, a.final_dirty_bytes));
    }
    Verdict::new(
        worst <= 1e-9 && index_mismatch == 0 && flag_mismatch == 0,
        format!(
            "pre-dump closed form vs loop: 10000 tuples ({divergent} with d ≥ r), stop-index mismatches {index_mismatch}, flag mismatches {flag_mismatch}, max rel err {worst:.2e}"
        ),
    )
}

fn criterion_3() -> Verdict {
    let start = Instant::now();
    let base: Scenario = load("paper_base.json");
    let targets: CalibrationTargets = load("paper_targets.json");
    let bounds: CalibrationBounds = load("paper_bounds.json");
    let fit = calibrate(&base, &targets, &bounds).expect("calibration runs");

    let mut details = Vec::new();
    let mut worst: f64 = 0.0;
    for row in &targets.rows {
        let s = fit.scenario.with_bandwidth(Some(row.bandwidth_bytes_per_s));
        let mut s = s;
        s.noise_sigma = 0.0;
        let m = extract(&noise_free(&s)).unwrap();
        let im = m.instance(&row.instance).unwrap();
        for (label, target, got) in [
            ("downtime", row.downtime_s.unwrap(), im.downtime_s),
            ("total", row.total_time_s.unwrap(), im.total_time_s),
        ] {
            let e = (got - target) / target;
            worst = worst.max(e.abs());
            details.push(format!(
                "{:<6} {:>10} B/s {:<8} target {:>7.3} simulated {:>7.3} ({:+.1}%)",
                row.instance,
                row.bandwidth_bytes_per_s,
                label,
                target,
                got,
                100.0 * e
            ));
        }
    }
    let elapsed = start.elapsed();
    let mut v = Verdict::new(
        worst <= 0.15 && elapsed < Duration::from_secs(60),
        format!("target reproduction after calibration: 12 cells, max |rel err| {:.1}% (≤ 15%), {elapsed:.2?} (< 60 s)", 100.0 * worst),
    );
    v.details = details;
    v
}

fn criterion_4() -> Verdict {
    let s = calibrated();
    let capacity = s.link.capacity_bytes_per_s;
    let mut pass = true;
    let mut details = Vec::new();

    let mut full = s.clone();
    full.noise_sigma = 0.0;
    full.migration_bandwidth_limit_bytes_per_s = None;
    let full_m = extract(&noise_free(&full)).unwrap();

    let mut reserved = full.clone();
    reserved.pattern = PatternKind::network_aware(BasePattern::Asynchronous);
    reserved.reservation_tolerance = 0.10;
    let res_m = extract(&noise_free(&reserved)).unwrap();

    for (i, inst) in s.sfc.instances.iter().enumerate() {
        let r = compute_reservation(
            inst,
            &s.link,
            s.predump_policy(),
            0.10,
            s.reservation_rate_tol_bytes_per_s,
        )
        .unwrap();
        let frac = r / capacity;
        let d_full = full_m.instances[i].downtime_s;
        let d_res = res_m.instances[i].downtime_s;
        let dev = (d_res - d_full) / d_full;
        let ok = frac <= 0.001 && dev.abs() <= 0.10;
        pass &= ok;
        details.push(format!(
            "{:<6} r = {:.0} B/s, r/capacity = {:.5} (≤ 0.001), downtime {:.3} s at r vs {:.3} s full ({:+.1}%, within 10%)",
            inst.name,
            r,
            frac,
            d_res,
            d_full,
            100.0 * dev
        ));
    }
    let mut v = Verdict::new(pass, "reservation sizing on calibrated scenario, tolerance 0.10");
    v.details = details;
    v
}

fn criterion_5() -> Verdict {
    let s = calibrated().with_bandwidth(Some(2e6));
    let mut cells = Vec::new();
    for base in BasePattern::ALL {
        let mut c = s.clone();
        c.pattern = PatternKind::new(base);
        c.repetitions = 10;
        cells.push(run_repetitions(&c).expect("repetitions"));
    }
    let total = |k: usize| cells[k].mean(|m| m.sfc_total_time_s);
    let peak = |k: usize| cells[k].mean(|m| m.peak_cpu_source_pct);
    let (a, w, r) = (0, 1, 2);
    let order = total(a) < total(w) && total(w) < total(r);
    let gap = total(w) - total(a);
    let gap_ok = (1.0..=5.0).contains(&gap);
    let cpu_ok = peak(r) < peak(w) && peak(w) <= peak(a);
    let mut down_ok = true;
    let mut details = vec![
        format!(
            "mean SFC total: async {:.3} s, wait_for_me {:.3} s, round_robin {:.3} s -> async < wfm < rr: {}",
            total(a),
            total(w),
            total(r),
            order
        ),
        format!("wait_for_me - async = {gap:.3} s, required 1..5 s: {gap_ok}"),
        format!(
            "mean peak source CPU: rr {:.1}, wfm {:.1}, async {:.1} -> rr < wfm ≤ async: {}",
            peak(r),
            peak(w),
            peak(a),
            cpu_ok
        ),
    ];
    for (i, inst) in s.sfc.instances.iter().enumerate() {
        let da = cells[a].mean(|m| m.instances[i].downtime_s);
        let dw = cells[w].mean(|m| m.instances[i].downtime_s);
        down_ok &= dw >= da;
        details.push(format!("{} mean downtime: wfm {dw:.3} s ≥ async {da:.3} s: {}", inst.name, dw >= da));
    }
    let mut v = Verdict::new(
        order && gap_ok && cpu_ok && down_ok,
        "pattern ordering at 2 MB/s, 10 reps, seed fixed",
    );
    v.details = details;
    v
}

fn criterion_6() -> Verdict {
    let s = calibrated();
    let i = s.sfc.index_of("video").expect("video instance");
    let mean_downtime = |bw: f64| {
        let c = run_repetitions(&s.with_bandwidth(Some(bw))).expect("repetitions");
        c.mean(|m| m.instances[i].downtime_s)
    };
    let full = mean_downtime(s.link.capacity_bytes_per_s);
    let low = mean_downtime(3e5);
    let mid = mean_downtime(2e6);
    let ratio_low = low / full;
    let ratio_mid = mid / full;
    Verdict::new(
        (2.0..=4.0).contains(&ratio_low) && (ratio_mid - 1.0).abs() <= 0.10,
        format!(
            "bandwidth sweep shape (video, async): 0.3 MB/s / full = {ratio_low:.3} (2..4), 2 MB/s / full = {ratio_mid:.3} (within 10%)"
        ),
    )
}

// ---------------------------------------------------------------- properties

fn instance_strategy() -> impl Strategy<Value = [f64; 8]> {
    (
        0.0..5e6f64,
        0.0..5e6f64,
        0.0..3e6f64,
        0.0..1e6f64,
        0.0..2.0f64,
        0.0..2.0f64,
        0.0..2.0f64,
        0.0..1.0f64,
    )
        .prop_map(|(a, b, c, d, e, f, g, h)| [a, b, c, d, e, f, g, h])
}

fn scenario_strategy() -> impl Strategy<Value = Scenario> {
    let shape = (
        prop::collection::vec(instance_strategy(), 1..=4),
        0usize..3,
        any::<bool>(),
        prop::option::of(1e5..1e8f64),
        0u32..3,
        0.0..0.05f64,
    );
    let knobs = (
        0.01..1.0f64,
        any::<u64>(),
        0.0..0.2f64,
        1u32..8,
        0.0..2e5f64,
        0.0..1.0f64,
    );
    (shape, knobs).prop_map(
        |((insts, base, na, limit, background, latency), (fraction, seed, sigma, iters, th, reconnect))| {
            let instances = insts
                .into_iter()
                .enumerate()
                .map(|(i, v)| instance(&format!("nf{i}"), v))
                .collect();
            let mut s = base_scenario(instances);
            let base = BasePattern::ALL[base];
            s.pattern = if na {
                PatternKind::network_aware(base)
            } else {
                PatternKind::new(base)
            };
            s.migration_bandwidth_limit_bytes_per_s = limit;
            s.background_transfers = background;
            s.link.latency_s = latency;
            s.link.reservable_fraction = fraction;
            s.base_seed = seed;
            s.noise_sigma = sigma;
            s.predump_max_iters = iters;
            s.predump_stop_threshold_bytes = th;
            s.reconnect_delay_s = reconnect;
            if !validate_scenario(&s).is_empty() {
                // reservations too large for the cap: lift the cap
                s.link.reservable_fraction = 1.0;
            }
            s
        },
    )
}

type Prop = fn(&Scenario, f64, f64) -> Result<(), TestCaseError>;

fn run_log(s: &Scenario) -> Result<EventLog, TestCaseError> {
    prop_assume!(validate_scenario(s).is_empty());
    let plan = build_plan_for(s).map_err(|e| TestCaseError::fail(e.to_string()))?;
    simulate(s, &plan, 0).map_err(|e| TestCaseError::fail(e.to_string()))
}

fn prop_conservation(s: &Scenario) -> Result<(), TestCaseError> {
    let log = run_log(s)?;
    let cap = s.link.capacity_bytes_per_s * (1.0 + 1e-9);
    for a in &log.allocation_trace {
        prop_assert!(a.total_rate_bytes_per_s <= cap, "rate {} > capacity", a.total_rate_bytes_per_s);
        if let (Some(limit), false) = (s.migration_bandwidth_limit_bytes_per_s, s.pattern.network_aware) {
            prop_assert!(a.total_rate_bytes_per_s <= limit * (1.0 + 1e-9), "rate {} > limit {limit}", a.total_rate_bytes_per_s);
        }
    }
    for t in &log.transfers {
        prop_assert!((t.shipped_bytes - t.requested_bytes).abs() <= 1e-6 * t.requested_bytes.max(1.0));
    }
    Ok(())
}

fn prop_reservation_cap(s: &Scenario) -> Result<(), TestCaseError> {
    let log = run_log(s)?;
    for a in &log.allocation_trace {
        prop_assert!(a.total_reserved_bytes_per_s <= log.reservable_bytes_per_s * (1.0 + 1e-9));
    }
    Ok(())
}

fn prop_grant_balance(s: &Scenario) -> Result<(), TestCaseError> {
    let log = run_log(s)?;
    let expected = if s.pattern.network_aware { s.sfc.len() } else { 0 };
    prop_assert_eq!(log.grants_issued, expected);
    prop_assert_eq!(log.grants_released, expected);
    prop_assert_eq!(
        log.events_of(EventKind::ReservationGranted).count(),
        log.events_of(EventKind::ReservationReleased).count()
    );
    Ok(())
}

fn prop_plan_shape(s: &Scenario) -> Result<(), TestCaseError> {
    for base in BasePattern::ALL {
        for na in [false, true] {
            let kind = if na { PatternKind::network_aware(base) } else { PatternKind::new(base) };
            let plan = build_plan(kind, &s.sfc);
            prop_assert!(plan.is_acyclic());
            prop_assert_eq!(plan.tasks.len(), 4 * s.sfc.len() + 1);
            prop_assert_eq!(plan.topological_order().map(|o| o.len()), Some(plan.tasks.len()));
        }
    }
    Ok(())
}

fn prop_round_robin_serial(s: &Scenario) -> Result<(), TestCaseError> {
    let mut s = s.clone();
    s.pattern.base = BasePattern::RoundRobin;
    if !validate_scenario(&s).is_empty() {
        s.link.reservable_fraction = 1.0;
    }
    let log = run_log(&s)?;
    let mut spans: Vec<(f64, f64)> = log.transfers.iter().map(|t| (t.start_s, t.end_s)).collect();
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in spans.windows(2) {
        prop_assert!(w[1].0 >= w[0].1 - 1e-9, "overlap {:?} {:?}", w[0], w[1]);
    }
    for a in &log.allocation_trace {
        prop_assert!(a.active_transfers <= 1);
    }
    Ok(())
}

fn prop_barrier(s: &Scenario) -> Result<(), TestCaseError> {
    let mut s = s.clone();
    s.pattern.base = BasePattern::WaitForMe;
    if !validate_scenario(&s).is_empty() {
        s.link.reservable_fraction = 1.0;
    }
    let log = run_log(&s)?;
    let first_freeze = log.events_of(EventKind::FreezeStart).map(|e| e.time_s).fold(f64::INFINITY, f64::min);
    let last_predump = log
        .events_of(EventKind::TaskEnd)
        .filter(|e| e.phase == Some(PhaseKind::PreDump))
        .map(|e| e.time_s)
        .fold(f64::NEG_INFINITY, f64::max);
    prop_assert!(first_freeze >= last_predump, "freeze {first_freeze} before pre-dump end {last_predump}");
    Ok(())
}

/// One instance, no contention, rates `lo < hi` both above the dirty rate.
fn prop_downtime_monotone(s: &Scenario, lo_factor: f64, log_ratio: f64) -> Result<(), TestCaseError> {
    let mut single = s.clone();
    single.sfc.instances.truncate(1);
    single.pattern = PatternKind::new(BasePattern::Asynchronous);
    single.background_transfers = 0;
    single.noise_sigma = 0.0;
    let d = single.sfc.instances[0].dirty_rate_bytes_per_s;
    let lo = d * lo_factor + 1e4;
    let hi = lo * (1.0 + 10f64.powf(log_ratio));
    let at = |r: f64| -> Result<f64, TestCaseError> {
        let mut t = single.clone();
        t.migration_bandwidth_limit_bytes_per_s = Some(r);
        let log = run_log(&t)?;
        Ok(extract(&log).map_err(|e| TestCaseError::fail(e.to_string()))?.instances[0].downtime_s)
    };
    let (d_lo, d_hi) = (at(lo)?, at(hi)?);
    prop_assert!(d_hi <= d_lo * (1.0 + 1e-12), "downtime {d_hi} at {hi} B/s > {d_lo} at {lo} B/s (dirty {d})");
    Ok(())
}

fn prop_seed_determinism(s: &Scenario) -> Result<(), TestCaseError> {
    let a = run_log(s)?;
    let b = run_log(s)?;
    prop_assert_eq!(&a.events, &b.events);
    prop_assert_eq!(a.to_csv(), b.to_csv());
    Ok(())
}

fn criterion_7() -> Verdict {
    let start = Instant::now();
    let props: [(&str, Prop); 8] = [
        ("bandwidth conservation", |s, _, _| prop_conservation(s)),
        ("reservation cap respected", |s, _, _| prop_reservation_cap(s)),
        ("grant/release balance", |s, _, _| prop_grant_balance(s)),
        ("plan acyclic with 4n+1 tasks", |s, _, _| prop_plan_shape(s)),
        ("round robin has no transfer overlap", |s, _, _| prop_round_robin_serial(s)),
        ("wait-for-me barrier ordering", |s, _, _| prop_barrier(s)),
        ("downtime non-increasing in rate (d < r)", prop_downtime_monotone),
        ("seed determinism", |s, _, _| prop_seed_determinism(s)),
    ];
    let mut pass = true;
    let mut details = Vec::new();
    for (name, prop) in props {
        let config = Config {
            cases: 500,
            failure_persistence: None,
            max_shrink_iters: 2_000,
            ..Config::default()
        };
        let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
        // rate factors for the monotonicity check: lo = d * f + 1e4, hi = lo * (1 + 10^x)
        let strategy = (scenario_strategy(), 1.0..6.0f64, -4.0..0.5f64);
        let result = runner.run(&strategy, |(s, f, x)| prop(&s, f, x));
        match result {
            Ok(()) => details.push(format!("ok   {name} (500 scenarios)")),
            Err(e) => {
                pass = false;
                let msg = match e {
                    proptest::test_runner::TestError::Fail(reason, (s, _, _)) => {
                        let first = &s.sfc.instances[0];
                        format!(
                            "{reason}; shrunk case: mem {} B, dirty {} B/s, threshold {} B, max_iters {}",
                            first.mem_delta_bytes,
                            first.dirty_rate_bytes_per_s,
                            s.predump_stop_threshold_bytes,
                            s.predump_max_iters
                        )
                    }
                    other => other.to_string(),
                };
                details.push(format!("FAIL {name}: {msg}"));
            }
        }
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(120);
    let mut v = Verdict::new(pass, format!("property suite: 8 properties x 500 scenarios, {elapsed:.2?} (< 120 s)"));
    v.details = details;
    v
}

fn criterion_8() -> Verdict {
    // (mean, std, reference ci95, reference cv)
    let rows = [
        ("dummy 0.3 MB", 2.674, 0.075, 0.056, 0.028),
        ("video 0.3 MB", 4.397, 0.076, 0.057, 0.017),
        ("dummy 3 GB", 1.189, 0.049, 0.037, 0.041),
        ("video 3 GB", 1.429, 0.047, 0.035, 0.033),
        ("dummy 2 MB", 1.222, 0.066, 0.05, 0.054),
        ("video 2 MB", 1.571, 0.056, 0.042, 0.036),
    ];
    let mut pass = true;
    let mut details = Vec::new();
    for (label, mean, std, ci, cv) in rows {
        let s = SummaryStats::from_moments(mean, std, 10).unwrap();
        let (e_ci, e_cv) = (rel(s.ci95, ci), rel(s.cv, cv));
        pass &= e_ci <= 0.10 && e_cv <= 0.10;
        details.push(format!(
            "{label:<13} ci95 {:.4} vs {ci} ({:.1}%), cv {:.4} vs {cv} ({:.1}%)",
            s.ci95,
            100.0 * e_ci,
            s.cv,
            100.0 * e_cv
        ));
    }
    let simple = sfcsim::metrics::summarize(&[1.0, 2.0, 3.0]).unwrap();
    let t2 = 4.302_652_729_749_464_f64;
    let simple_ok = simple.mean == 2.0
        && simple.std == 1.0
        && simple.cv == 0.5
        && (simple.ci95 - t2 / 3f64.sqrt()).abs() <= 1e-12;
    let constant = sfcsim::metrics::summarize(&[7.5; 6]).unwrap();
    let constant_ok = constant.std == 0.0 && constant.ci95 == 0.0 && constant.cv == 0.0 && constant.mean == 7.5;
    details.push(format!("{{1,2,3}}: mean 2, std 1, cv 0.5, ci95 t(2)/sqrt(3): {simple_ok}"));
    details.push(format!("constant samples: std, ci95, cv all 0: {constant_ok}"));
    let mut v = Verdict::new(
        pass && simple_ok && constant_ok,
        "Student-t statistics vs reference rows (±10%) and exact small cases",
    );
    v.details = details;
    v
}

fn main() {
    let criteria: [(u8, fn() -> Verdict); 8] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
    ];
    let mut failed = Vec::new();
    for (id, f) in criteria {
        let v = f();
        println!("{} criterion {id}: {}", if v.pass { "PASS" } else { "FAIL" }, v.summary);
        for d in &v.details {
            println!("      {d}");
        }
        if !v.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 8 criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
