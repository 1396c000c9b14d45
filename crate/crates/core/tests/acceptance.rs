//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::HashSet;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use swarmlink_core::bench::{compute_metrics, run_comparison, BenchConfig, ComparisonReport, Configuration};
use swarmlink_core::haptic::{encode_pattern, MotionDirection, PatternConfig, PatternLabel, PatternSchedule};
use swarmlink_core::impedance::{critically_damped, derive_constants, discretize, AxisState, ImpedanceParams};
use swarmlink_core::sim::trace::{events_to_jsonl, parse_csv, parse_events, rows_to_csv};
use swarmlink_core::sim::{
    replay, run_config, run_scenario, HandConfig, HandSource, ScenarioConfig, Simulation, StartLayout, WorldCommand,
};
use swarmlink_core::topology::TopologyKind;
use swarmlink_core::trajectory::Segment;
use swarmlink_core::Vec3;

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn square_config() -> ScenarioConfig {
    ScenarioConfig::from_json(include_str!("../../../configs/square.json")).expect("shipped square config")
}

fn critical_damping() -> Result<String, String> {
    let p = ImpedanceParams::new(1.9, 12.6, 20.88, 3.0).map_err(|e| e.to_string())?;
    let c = derive_constants(&p).map_err(|e| e.to_string())?;
    ensure((c.omega_n - 3.315).abs() <= 0.02, || format!("omega_n = {}", c.omega_n))?;
    ensure((c.zeta - 1.0).abs() <= 0.001, || format!("zeta = {}", c.zeta))?;
    Ok(format!("omega_n = {:.4} rad/s, zeta = {:.5}", c.omega_n, c.zeta))
}

/// Classic RK4 on `M·ẍ + D·ẋ + K·x = F` with a fixed substep.
fn rk4(p: &ImpedanceParams, x: f64, v: f64, force: f64, duration: f64, h: f64) -> (f64, f64) {
    let f = |x: f64, v: f64| (v, (force - p.damping * v - p.stiffness * x) / p.mass);
    let steps = (duration / h).round().max(1.0) as usize;
    let h = duration / steps as f64;
    let (mut x, mut v) = (x, v);
    for _ in 0..steps {
        let (k1x, k1v) = f(x, v);
        let (k2x, k2v) = f(x + 0.5 * h * k1x, v + 0.5 * h * k1v);
        let (k3x, k3v) = f(x + 0.5 * h * k2x, v + 0.5 * h * k2v);
        let (k4x, k4v) = f(x + h * k3x, v + h * k3v);
        x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
        v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    }
    (x, v)
}

fn random_params(rng: &mut ChaCha8Rng) -> ImpedanceParams {
    let m = rng.random_range(0.2..5.0);
    let k = rng.random_range(0.5..120.0);
    critically_damped(m, k, 3.0).expect("valid")
}

fn propagator_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p = random_params(&mut rng);
        for t in [0.001, 0.01, 0.05] {
            let link = discretize(&p, t).map_err(|e| e.to_string())?;
            let s = AxisState::new(rng.random_range(-1.0..1.0), rng.random_range(-2.0..2.0));
            let force = rng.random_range(-5.0..5.0);
            let got = link.step_axis(s, force);
            let (x, v) = rk4(&p, s.dx, s.dv, force, t, 1e-5);
            let err = (got.dx - x).abs().max((got.dv - v).abs());
            worst = worst.max(err);
            ensure(err <= 1e-6, || format!("M={} K={} T={t}: error {err:e}", p.mass, p.stiffness))?;
        }
        let zero = discretize(&p, 0.0).map_err(|e| e.to_string())?;
        ensure(zero.a_d == [[1.0, 0.0], [0.0, 1.0]] && zero.b_d == [0.0, 0.0], || {
            format!("A_d(0) = {:?}, B_d(0) = {:?}", zero.a_d, zero.b_d)
        })?;
        let (t1, t2) = (rng.random_range(0.001..0.05), rng.random_range(0.001..0.05));
        let (l1, l2, l12) =
            (discretize(&p, t1).unwrap(), discretize(&p, t2).unwrap(), discretize(&p, t1 + t2).unwrap());
        for i in 0..2 {
            for j in 0..2 {
                let composed: f64 = (0..2).map(|k| l2.a_d[i][k] * l1.a_d[k][j]).sum();
                ensure((composed - l12.a_d[i][j]).abs() <= 1e-9, || format!("semigroup A[{i}][{j}] off"))?;
            }
            let composed_b: f64 = (0..2).map(|k| l2.a_d[i][k] * l1.b_d[k]).sum::<f64>() + l2.b_d[i];
            ensure((composed_b - l12.b_d[i]).abs() <= 1e-9, || format!("semigroup B[{i}] off"))?;
        }
    }
    Ok(format!("300 steps vs RK4, worst component error {worst:.2e}; identity and semigroup hold"))
}

fn no_overshoot_energy() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let p = ImpedanceParams::default();
    let link = discretize(&p, 0.01).map_err(|e| e.to_string())?;
    let mut worst_rise: f64 = 0.0;
    for n in 0..1000 {
        let x0: f64 = rng.random_range(-1.0..1.0);
        let mut s = AxisState::new(x0, 0.0);
        let mut energy = link.energy(s);
        for k in 0..1000 {
            s = link.step_axis(s, 0.0);
            ensure(s.dx == 0.0 || s.dx.signum() == x0.signum(), || format!("case {n}: sign change at step {k}"))?;
            let e = link.energy(s);
            worst_rise = worst_rise.max(e - energy);
            ensure(e <= energy + 1e-9, || format!("case {n}: energy rose by {:e} at step {k}", e - energy))?;
            energy = e;
        }
    }
    Ok(format!("1000 displacements x 1000 steps: no sign change, largest energy rise {worst_rise:.1e}"))
}

fn comparison() -> Result<ComparisonReport, String> {
    run_comparison(&BenchConfig::new(square_config())).map(|c| c.report).map_err(|e| e.to_string())
}

fn benchmark_ordering() -> Result<String, String> {
    let start = Instant::now();
    let r = comparison()?;
    let m = |c: Configuration| r.get(c).average;
    let star = m(Configuration::ImpedanceStar);
    let apf = m(Configuration::PotentialField);
    for other in [Configuration::ImpedanceRing, Configuration::ImpedanceTree] {
        let o = m(other);
        ensure(star.mean_error_x <= o.mean_error_x && star.mean_error_y <= o.mean_error_y, || {
            format!(
                "star ({:.4}, {:.4}) vs {} ({:.4}, {:.4})",
                star.mean_error_x,
                star.mean_error_y,
                other.name(),
                o.mean_error_x,
                o.mean_error_y
            )
        })?;
    }
    for c in [Configuration::ImpedanceRing, Configuration::ImpedanceTree, Configuration::ImpedanceStar] {
        let o = m(c);
        ensure(o.mean_error_x < apf.mean_error_x && o.mean_error_y < apf.mean_error_y, || {
            format!("{} not below potential field", c.name())
        })?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 120.0, || format!("took {secs:.1} s"))?;
    Ok(format!(
        "mean |err| x/y: ring {:.3}/{:.3}, tree {:.3}/{:.3}, star {:.3}/{:.3}, apf {:.3}/{:.3} (reported 0.13/0.14, 0.14/0.16, 0.10/0.11, 0.22/0.22); {secs:.1} s",
        m(Configuration::ImpedanceRing).mean_error_x,
        m(Configuration::ImpedanceRing).mean_error_y,
        m(Configuration::ImpedanceTree).mean_error_x,
        m(Configuration::ImpedanceTree).mean_error_y,
        star.mean_error_x,
        star.mean_error_y,
        apf.mean_error_x,
        apf.mean_error_y
    ))
}

fn velocity_ordering() -> Result<String, String> {
    let r = comparison()?;
    let apf = r.get(Configuration::PotentialField).average.max_speed;
    let mut parts = Vec::new();
    for c in [Configuration::ImpedanceRing, Configuration::ImpedanceTree, Configuration::ImpedanceStar] {
        let v = r.get(c).average.max_speed;
        ensure(v > apf, || format!("{} max speed {v:.3} <= apf {apf:.3}", c.name()))?;
        parts.push(format!("{} {v:.3}", c.name()));
    }
    ensure((r.reference_max_speed - 0.65).abs() <= 0.01, || format!("reference max {}", r.reference_max_speed))?;
    ensure((r.reference_mean_speed - 0.18).abs() <= 0.02, || format!("reference mean {}", r.reference_mean_speed))?;
    Ok(format!(
        "max XY speed {} > apf {apf:.3} (reported 0.69-0.70 > 0.47); reference max {:.3}, mean {:.3} m/s",
        parts.join(", "),
        r.reference_max_speed,
        r.reference_mean_speed
    ))
}

fn safety_bound() -> Result<String, String> {
    let mut cfg = square_config();
    cfg.topology.kind = TopologyKind::Star;
    cfg.plant = cfg.plant.noise_free();
    let HandConfig::Square(square) = cfg.hand else { return Err("square hand expected".into()) };
    let reference = square.generate(cfg.dt).map_err(|e| e.to_string())?;
    let offsets = cfg.topology.build(cfg.impedance.params().unwrap()).map_err(|e| e.to_string())?.offsets;
    let trace = run_scenario(&cfg, HandSource::Trajectory(reference.clone()), reference.len() as u64 - 1)
        .map_err(|e| e.to_string())?;
    let mut worst_cruise: f64 = 0.0;
    for r in &trace.rows {
        let s = reference.at_tick(r.tick as usize);
        if s.segment == Segment::Cruise {
            let err = r.position - (s.position + offsets[r.drone_id]);
            worst_cruise = worst_cruise.max(err.norm_xy());
        }
    }
    let mut min_dist = f64::INFINITY;
    for tick_rows in trace.rows.chunks(offsets.len()) {
        for (i, a) in tick_rows.iter().enumerate() {
            min_dist = min_dist.min(a.position.distance(a.hand));
            for b in &tick_rows[i + 1..] {
                min_dist = min_dist.min(a.position.distance(b.position));
            }
        }
    }
    ensure(worst_cruise < 0.15, || format!("cruise error {worst_cruise:.4} m"))?;
    ensure(min_dist > 0.15, || format!("min distance {min_dist:.4} m"))?;
    Ok(format!("max cruise error {worst_cruise:.4} m (< 0.15), min inter-agent distance {min_dist:.3} m (> 0.15)"))
}

fn pattern_codec() -> Result<String, String> {
    let cfg = PatternConfig::default();
    let mut seen: Vec<PatternSchedule> = Vec::new();
    for label in PatternLabel::all() {
        let back: PatternLabel =
            label.to_string().parse().map_err(|e: swarmlink_core::haptic::PatternError| e.to_string())?;
        ensure(back == label, || format!("{label} did not round-trip"))?;
        let s = encode_pattern(label.surface, label.direction, &cfg).map_err(|e| e.to_string())?;
        let json = PatternSchedule::from_json(&s.to_json()).map_err(|e| e.to_string())?;
        ensure(json == s, || format!("{label} schedule JSON did not round-trip"))?;
        let expected = match label.to_string().chars().next() {
            Some('S') => 3.3,
            Some('E') => 8.0,
            _ => 100.0,
        };
        ensure(s.actuators.iter().flatten().all(|e| e.frequency_hz == expected), || format!("{label} frequency"))?;
        seen.push(s);
    }
    ensure(seen.len() == 12, || format!("{} labels", seen.len()))?;
    let distinct: HashSet<String> = seen.iter().map(|s| serde_json::to_string(&s.actuators).unwrap()).collect();
    ensure(distinct.len() == 12, || format!("only {} distinct schedules", distinct.len()))?;
    for s in seen.iter().filter(|s| s.label.direction == MotionDirection::Right) {
        let left = seen
            .iter()
            .find(|o| o.label.surface == s.label.surface && o.label.direction == MotionDirection::Left)
            .unwrap();
        for f in 0..3 {
            ensure(s.actuators[f] == left.actuators[2 - f], || {
                format!("{} is not mirrored by {}", s.label, left.label)
            })?;
        }
    }
    Ok("12 labels round-trip, carriers 3.3/8/100 Hz, 12 distinct schedules, Right/Left mirrored".into())
}

fn determinism() -> Result<String, String> {
    let cfg = square_config();
    let a = run_config(&cfg).map_err(|e| e.to_string())?;
    let b = run_config(&cfg).map_err(|e| e.to_string())?;
    ensure(a.to_csv() == b.to_csv(), || "scripted traces differ".into())?;
    ensure(a.events_jsonl() == b.events_jsonl(), || "event logs differ".into())?;

    // a steered session: targets, topology change, pattern, disengage and re-engage
    let live = ScenarioConfig {
        seed: 99,
        hand: HandConfig::Live { initial: Vec3::new(0.0, 0.0, 1.0), smoothing_s: 0.1 },
        start: StartLayout::Ground,
        duration_s: None,
        ..square_config()
    };
    let mut sim = Simulation::new(live.clone()).map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    let script: Vec<(u64, WorldCommand)> = vec![
        (300, WorldCommand::SetHandTarget { x: 0.4, y: 0.0, z: 1.0 }),
        (420, WorldCommand::SetHandTarget { x: 0.4, y: 0.5, z: 1.1 }),
        (500, WorldCommand::SetTopology { kind: TopologyKind::Ring }),
        (520, WorldCommand::TriggerPattern { label: "RR".parse().unwrap() }),
        (650, WorldCommand::Disengage {}),
        (700, WorldCommand::Engage {}),
        (900, WorldCommand::SetHandTarget { x: -0.2, y: 0.1, z: 0.9 }),
    ];
    for tick in 0..1200u64 {
        for (_, c) in script.iter().filter(|(t, _)| *t == tick) {
            sim.enqueue(c.clone());
        }
        sim.step().map_err(|e| e.to_string())?;
        rows.extend(sim.rows());
    }
    let csv = rows_to_csv(&rows);
    let events = events_to_jsonl(sim.events());
    let replayed =
        replay(&live, &parse_csv(&csv).map_err(|e| e.to_string())?, &parse_events(&events).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    ensure(replayed.to_csv() == csv, || "replayed live session differs".into())?;
    Ok(format!(
        "two runs byte-identical ({} bytes); 1200-tick steered session replays byte-identically",
        a.to_csv().len()
    ))
}

fn lag_property() -> Result<String, String> {
    let lag = |stiffness_scale: f64| -> Result<f64, String> {
        let mut cfg = square_config();
        cfg.topology.kind = TopologyKind::Star;
        cfg.impedance.stiffness *= stiffness_scale;
        cfg.impedance.damping = None;
        let HandConfig::Square(square) = cfg.hand else { return Err("square hand expected".into()) };
        let reference = square.generate(cfg.dt).map_err(|e| e.to_string())?;
        let offsets = cfg.topology.build(cfg.impedance.params().unwrap()).map_err(|e| e.to_string())?.offsets;
        let trace = run_scenario(&cfg, HandSource::Trajectory(reference.clone()), reference.len() as u64 - 1)
            .map_err(|e| e.to_string())?;
        Ok(compute_metrics(&trace.rows, &reference.samples, &offsets).map_err(|e| e.to_string())?.lag_s)
    };
    let base = lag(1.0)?;
    let doubled = lag(4.0)?;
    let p = square_config().impedance.params().unwrap();
    let w = derive_constants(&p).unwrap().omega_n;
    ensure(doubled < base, || format!("lag {base:.2} s at omega_n {w:.2} vs {doubled:.2} s at {:.2}", 2.0 * w))?;
    Ok(format!("lag {base:.2} s at omega_n {w:.2} rad/s -> {doubled:.2} s at {:.2} rad/s", 2.0 * w))
}

fn main() -> ExitCode {
    let checks: [(&str, Check); 9] = [
        ("critical damping parameters", critical_damping),
        ("propagator oracle", propagator_oracle),
        ("no overshoot and energy decay", no_overshoot_energy),
        ("benchmark error ordering", benchmark_ordering),
        ("velocity ordering and reference speeds", velocity_ordering),
        ("safety bound on noise-free star", safety_bound),
        ("pattern codec", pattern_codec),
        ("determinism and session replay", determinism),
        ("tracking lag shrinks with stiffer links", lag_property),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let ms = start.elapsed().as_millis();
        match result {
            Ok(detail) => println!("PASS  {name}: {detail} [{ms} ms]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail} [{ms} ms]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
