//! Acceptance suite: one PASS/FAIL line per criterion. Expected values are
//! computed here, independently of the library code under test.

use chainswarm::allocation::{auction, CostTable};
use chainswarm::cli::run_to_dir;
use chainswarm::engine::{FailurePlan, RunStatus, Sim, SimSpec, Spawn};
use chainswarm::geom::{Position, Vec3};
use chainswarm::msg::{ChainId, RobotId, RobotKind, Role};
use chainswarm::planner::{check_reachable, plan, PlanMode, PlannerConfig};
use chainswarm::radio::{classify_zone, link_quality, RadioConfig, Zone};
use chainswarm::scenario::{load_scenario, ScenarioSpec, SweepAxis};
use chainswarm::stigmergy::Stigmergy;
use chainswarm::world::{parse_map, Cell, GridMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::path::{Path, PathBuf};
use std::time::Instant;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

// ---------------------------------------------------------------- link model

fn link_model() -> Verdict {
    let t0 = Instant::now();
    let cfg = RadioConfig::default();
    let (z, delta) = (cfg.range, cfg.near_field);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let d = rng.gen_range(delta..z);
        worst = worst.max((link_quality(d, &cfg) - (-5.0 * d / z).exp()).abs());
    }
    let below = [0.0, 0.5 * delta, delta * (1.0 - 1e-9)].iter().all(|&d| link_quality(d, &cfg) == 1.0);
    let beyond = [z, z + 1e-9, 2.0 * z].iter().all(|&d| link_quality(d, &cfg) == 0.0);
    let zones = [
        (1.4, Zone::Safe),
        (1.4 + 1e-9, Zone::Critical),
        (1.6, Zone::Critical),
        (1.6 + 1e-9, Zone::BreakAway),
        (1.8, Zone::BreakAway),
        (1.8 + 1e-9, Zone::OutOfRange),
        (0.0, Zone::Safe),
    ];
    let zones_ok = (cfg.safe, cfg.critical, cfg.break_away) == (1.4, 1.6, 1.8)
        && zones.iter().all(|&(d, want)| classify_zone(d, &cfg) == want);
    let secs = t0.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-12 && below && beyond && zones_ok && secs < 1.0,
        format!("max |e - exp(-5d/Z)| = {worst:.1e} over 1000 d, plateaus {below}/{beyond}, zones {zones_ok}, {secs:.3} s"),
    )
}

// ---------------------------------------------------------------- allocation

/// Exhaustive optimum over injective robot -> task maps covering
/// min(robots, tasks) tasks.
fn brute_force(costs: &[Vec<f64>], tasks: usize) -> f64 {
    fn go(costs: &[Vec<f64>], r: usize, used: &mut [bool], left: usize, acc: f64, best: &mut f64) {
        if left == 0 {
            *best = best.min(acc);
            return;
        }
        if r == costs.len() || costs.len() - r < left {
            return;
        }
        go(costs, r + 1, used, left, acc, best);
        for t in 0..used.len() {
            if !used[t] {
                used[t] = true;
                go(costs, r + 1, used, left - 1, acc + costs[r][t], best);
                used[t] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    let need = costs.len().min(tasks);
    go(costs, 0, &mut vec![false; tasks], need, 0.0, &mut best);
    best
}

fn allocation() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut infeasible, mut over, mut worst) = (0, 0, 1.0f64);
    for _ in 0..200 {
        let robots = rng.gen_range(1..=5);
        let tasks = rng.gen_range(1..=5);
        // bid costs are robot-to-target distances
        let pt = |rng: &mut ChaCha8Rng| (rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0));
        let targets: Vec<(f64, f64)> = (0..tasks).map(|_| pt(&mut rng)).collect();
        let rows: Vec<Vec<f64>> = (0..robots)
            .map(|_| {
                let (x, y) = pt(&mut rng);
                targets.iter().map(|(tx, ty)| ((x - tx).powi(2) + (y - ty).powi(2)).sqrt()).collect()
            })
            .collect();
        let table: CostTable = rows.iter().enumerate().map(|(i, r)| (RobotId(i as u32), r.clone())).collect();
        let a = auction(&table, tasks).expect("well-formed table");
        let mut robot_seen = vec![false; robots];
        let mut ok = a.len() == robots.min(tasks);
        let mut cost = 0.0;
        for (&t, r) in &a {
            let ri = r.0 as usize;
            ok &= t < tasks && ri < robots && !robot_seen[ri];
            if ri < robots {
                robot_seen[ri] = true;
                cost += rows[ri][t];
            }
        }
        if !ok {
            infeasible += 1;
            continue;
        }
        let opt = brute_force(&rows, tasks);
        let ratio = if opt > 0.0 { cost / opt } else { 1.0 };
        worst = worst.max(ratio);
        if ratio > 2.0 + 1e-12 {
            over += 1;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    verdict(
        infeasible == 0 && over == 0 && secs < 10.0,
        format!("200 instances: {infeasible} infeasible, {over} above 2x optimum, worst ratio {worst:.3}, {secs:.2} s"),
    )
}

// ---------------------------------------------------------------- stigmergy

fn topology(kind: &str, n: usize) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    let mut link = |a: usize, b: usize| {
        adj[a].push(b);
        adj[b].push(a);
    };
    match kind {
        "line" => (1..n).for_each(|i| link(i - 1, i)),
        "ring" => (0..n).for_each(|i| link(i, (i + 1) % n)),
        _ => (1..n).for_each(|i| link(0, i)),
    }
    adj
}

fn diameter(adj: &[Vec<usize>]) -> usize {
    (0..adj.len())
        .map(|s| {
            let mut dist = vec![usize::MAX; adj.len()];
            dist[s] = 0;
            let mut q = VecDeque::from([s]);
            while let Some(u) = q.pop_front() {
                for &v in &adj[u] {
                    if dist[v] == usize::MAX {
                        dist[v] = dist[u] + 1;
                        q.push_back(v);
                    }
                }
            }
            dist.into_iter().max().unwrap()
        })
        .max()
        .unwrap()
}

fn stigmergy() -> Verdict {
    let n = 20;
    let mut worst: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    let mut failures = 0;
    for kind in ["line", "ring", "star"] {
        let adj = topology(kind, n);
        let diam = diameter(&adj);
        for seed in 0..50u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut nodes: Vec<Stigmergy> = (0..n).map(|i| Stigmergy::new(RobotId(i as u32))).collect();
            // some pre-existing state so the put must win over older entries
            for _ in 0..rng.gen_range(0..4) {
                let i = rng.gen_range(0..n);
                nodes[i].put("k", vec![1]).unwrap();
            }
            // settle the background before the measured put
            for _ in 0..3 * n {
                step(&mut nodes, &adj);
            }
            let src = rng.gen_range(0..n);
            let value = vec![rng.gen::<u8>(), 42];
            nodes[src].put("k", value.clone()).unwrap();
            let mut rounds = 0;
            while rounds <= diam + 1 && !nodes.iter().all(|s| s.peek("k").map(|e| e.value == value).unwrap_or(false)) {
                step(&mut nodes, &adj);
                rounds += 1;
            }
            let e = worst.entry(kind).or_insert((0, diam));
            e.0 = e.0.max(rounds);
            if rounds > diam + 1 {
                failures += 1;
            }
        }
    }
    let summary: Vec<String> = worst.iter().map(|(k, (r, d))| format!("{k} {r}/{}", d + 1)).collect();
    verdict(failures == 0, format!("worst rounds/bound {}, {failures} of 150 late", summary.join(", ")))
}

/// One synchronous delivery round: every outbox goes to graph neighbours.
fn step(nodes: &mut [Stigmergy], adj: &[Vec<usize>]) {
    let outs: Vec<_> = nodes.iter_mut().map(|s| s.drain_outbox()).collect();
    for (u, msgs) in outs.iter().enumerate() {
        for &v in &adj[u] {
            for m in msgs {
                nodes[v].on_message(m);
            }
        }
    }
}

// ---------------------------------------------------------------- helpers

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn scenario(name: &str) -> ScenarioSpec {
    load_scenario(&scenarios().join(format!("{name}.scenario"))).expect("bundled scenario")
}

fn resolve(s: &ScenarioSpec, seed: u64) -> SimSpec {
    let mut one = s.clone();
    one.seed = seed;
    let mut spec = one.resolve(&scenarios()).expect("resolves");
    spec.record_trajectory = false;
    spec
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn pos(sim: &Sim, id: RobotId) -> Position {
    sim.robot(id).position
}

/// Root-to-end distances along a chain, measured here from positions.
fn chain_links(sim: &Sim, chain: ChainId) -> Vec<f64> {
    let root = sim.robots().iter().find(|r| r.role == Role::Root).map(|r| r.id).expect("root");
    let mut prev = pos(sim, root);
    sim.chain_members(chain)
        .into_iter()
        .map(|id| {
            let p = pos(sim, id);
            let d = p.dist(prev);
            prev = p;
            d
        })
        .collect()
}

// ---------------------------------------------------------------- connectivity

fn connectivity() -> Verdict {
    let t0 = Instant::now();
    let base = scenario("open_field");
    let (mut complete, mut breaks, mut loose, mut worst_edge, mut worst_done) = (0, 0usize, 0, 0.0f64, 0.0f64);
    for seed in 1..=30u64 {
        let spec = resolve(&base, seed);
        assert_eq!((spec.map.width(), spec.map.height(), spec.roster.len()), (20, 20, 10));
        assert_eq!((spec.mission.targets.len(), spec.mission.links, spec.control.dt), (1, 1, 0.1));
        let (d_s, d_b) = (spec.radio.safe, spec.radio.break_away);
        let mut sim = Sim::new(spec).unwrap();
        // an edge is held to d_b once it has been inside d_s
        let mut held = std::collections::BTreeSet::new();
        while sim.status().is_none() {
            sim.step();
            for (_, p, c) in sim.confirmed_edges() {
                let d = pos(&sim, p).dist(pos(&sim, c));
                if d <= d_s {
                    held.insert((p, c));
                }
                if held.contains(&(p, c)) {
                    worst_edge = worst_edge.max(d);
                    if d > d_b {
                        breaks += 1;
                    }
                }
            }
        }
        breaks += sim.metrics().violations;
        if sim.status() == Some(RunStatus::Complete) {
            complete += 1;
            let links = chain_links(&sim, ChainId(0));
            let m = links.iter().copied().fold(0.0, f64::max);
            worst_done = worst_done.max(m);
            if m > d_s + 0.05 {
                loose += 1;
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    verdict(
        complete == 30 && breaks == 0 && loose == 0 && secs < 120.0,
        format!(
            "30 runs: {complete} complete, {breaks} edge ticks beyond d_b (max {worst_edge:.3} m), {loose} completed chains with a link > d_s + 0.05 (max {worst_done:.3} m), {secs:.1} s"
        ),
    )
}

// ---------------------------------------------------------------- insertion

/// Root, networker and worker stretched toward an unreachable-by-three
/// target; a fourth robot is parked out of radio range and then brought
/// next to the root.
fn insertion() -> Verdict {
    let mut base = scenario("open_field");
    base.robots.ground = 3;
    base.mission.targets = vec![[18.0, 10.0, 0.0]];
    base.max_ticks = 20_000;
    let mut spec = resolve(&base, 1);
    let d_s = spec.radio.safe;
    let far = Vec3::flat(1.0, 1.0);
    spec.roster.push(Spawn { kind: RobotKind::Ground, position: far });
    let extra = RobotId(3);
    let mut sim = Sim::new(spec).unwrap();
    let settle = |sim: &mut Sim, members: usize| -> Option<f64> {
        let mut still = 0;
        let start = sim.tick();
        while sim.tick() < start + 6000 {
            sim.step();
            let ids = sim.chain_members(ChainId(0));
            let moving = ids.iter().any(|id| sim.robot(*id).velocity.norm() > 1e-3);
            still = if ids.len() == members && !moving { still + 1 } else { 0 };
            if still >= 100 {
                return Some(chain_links(sim, ChainId(0)).iter().sum());
            }
        }
        None
    };
    let Some(before) = settle(&mut sim, 2) else {
        return verdict(false, "three-robot chain never reached equilibrium");
    };
    let root = pos(&sim, RobotId(0));
    sim.teleport(extra, root + Vec3::flat(-0.5, 0.4));
    let Some(after) = settle(&mut sim, 3) else {
        return verdict(false, format!("no equilibrium after insertion (length before {before:.3} m)"));
    };
    let gain = after - before;
    verdict(
        (gain - d_s).abs() <= 0.05 * d_s,
        format!("chain length {before:.3} -> {after:.3} m, gain {gain:.3} m vs d_s = {d_s} (tolerance 5%)"),
    )
}

// ---------------------------------------------------------------- consecutive failures

fn consecutive() -> Verdict {
    let base = scenario("consecutive_failure");
    let mut medians = Vec::new();
    let (mut unhealed, mut loose, mut wrong_size) = (0, 0, 0);
    for (_, variant) in base.variants(SweepAxis::FailureFactor).unwrap() {
        let mut rec = Vec::new();
        for seed in 1..=20u64 {
            let spec = resolve(&variant, seed);
            let (d_s, dt) = (spec.radio.safe, spec.control.dt);
            let mut sim = Sim::new(spec).unwrap();
            let mut sized = false;
            while sim.status().is_none() {
                sim.step();
                if !sized && sim.all_complete() {
                    sized = true;
                    // networkers only: the last member is the worker
                    if sim.chain_members(ChainId(0)).len() != 7 {
                        wrong_size += 1;
                    }
                }
            }
            let healed = sim.status() == Some(RunStatus::Complete)
                && !sim.metrics().heal_events.is_empty()
                && sim.metrics().violations == 0;
            if !healed {
                unhealed += 1;
                continue;
            }
            if chain_links(&sim, ChainId(0)).iter().any(|d| *d > d_s + 0.05) {
                loose += 1;
            }
            let worst = sim.metrics().recovery_ticks().into_iter().max().unwrap_or(0);
            rec.push(worst as f64 * dt);
        }
        medians.push(median(rec));
    }
    let monotone = medians.windows(2).all(|w| w[1] >= w[0]);
    let shown: Vec<String> = medians.iter().map(|m| format!("{m:.2}")).collect();
    verdict(
        unhealed == 0 && loose == 0 && wrong_size == 0 && monotone,
        format!(
            "k = 1..5, 20 seeds each: {unhealed} unhealed, {loose} loose chains, {wrong_size} chains not 6 networkers; median recovery s [{}]",
            shown.join(", ")
        ),
    )
}

// ---------------------------------------------------------------- random failures

fn random_failures() -> Verdict {
    let base = scenario("random_failure");
    let mut rows = Vec::new();
    for (_, variant) in base.variants(SweepAxis::RandomCap).unwrap() {
        let FailurePlan::Random { cap, .. } = variant.failures else { unreachable!("random plan") };
        let (mut done, mut times) = (0, Vec::new());
        for seed in 1..=20u64 {
            let spec = resolve(&variant, seed);
            assert_eq!(spec.roster.len(), 25);
            let dt = spec.control.dt;
            let mut sim = Sim::new(spec).unwrap();
            sim.run();
            if let Some(t) = sim.metrics().all_complete {
                done += 1;
                times.push(t as f64 * dt);
            }
        }
        rows.push((cap, done, median(times)));
    }
    let base_median = rows.iter().find(|r| r.0 == 0.0).map(|r| r.2).expect("F = 0 variant");
    let mut pass = true;
    for &(cap, done, m) in &rows {
        if cap <= 0.3 + 1e-9 {
            pass &= done == 20;
        }
        if (cap - 0.3).abs() < 1e-9 {
            pass &= m <= 1.5 * base_median;
        }
        if cap >= 0.5 - 1e-9 {
            pass &= m > base_median;
        }
    }
    let shown: Vec<String> = rows.iter().map(|(c, d, m)| format!("F={c}: {d}/20 {m:.1} s")).collect();
    verdict(pass, shown.join(", "))
}

// ---------------------------------------------------------------- multi-link parity

fn parity() -> Verdict {
    let mut pass = true;
    let mut shown = Vec::new();
    for map in ["small_arena", "medium_den", "large_arena"] {
        let base = scenario(map);
        let mut per_links = Vec::new();
        for (_, variant) in base.variants(SweepAxis::Links).unwrap() {
            let links = variant.mission.links;
            let mut ticks = Vec::new();
            for seed in 1..=10u64 {
                let spec = resolve(&variant, seed);
                assert_eq!(spec.roster.len(), 25);
                assert!(spec.map.width() <= 100 && spec.map.height() <= 100);
                let mut sim = Sim::new(spec).unwrap();
                sim.run();
                ticks.extend(sim.metrics().completion.values().map(|t| *t as f64));
            }
            per_links.push((links, ticks.len(), median(ticks)));
        }
        let single = per_links.iter().find(|r| r.0 == 1).map(|r| r.2).expect("one-link variant");
        for &(links, n, m) in &per_links {
            pass &= n == 10 * links as usize && m <= 1.3 * single;
            shown.push(format!("{map} C{links} {:.2}x ({n} chains)", m / single));
        }
    }
    verdict(pass, shown.join(", "))
}

// ---------------------------------------------------------------- heterogeneity

fn heterogeneity() -> Verdict {
    let base = scenario("wall_window");
    let probe = resolve(&base, 1);
    let flyers = probe.roster.iter().filter(|s| s.kind == RobotKind::Flying).count();
    let root = probe.roster[0].position;
    let target = probe.mission.targets[0];
    let ground_ok = check_reachable(&probe.map, root, target, PlanMode::Ground2D).unwrap();
    // the wall occupies row 9; anything at y >= 10 is past it
    let (mut complete, mut trespass) = (0, 0);
    for seed in 1..=10u64 {
        let mut sim = Sim::new(resolve(&base, seed)).unwrap();
        while sim.status().is_none() {
            sim.step();
            trespass += sim
                .robots()
                .iter()
                .filter(|r| r.role != Role::Failed && r.position.y >= 10.0 && r.kind != RobotKind::Flying)
                .count();
        }
        complete += usize::from(sim.status() == Some(RunStatus::Complete));
    }
    verdict(
        !ground_ok && flyers >= 2 && complete == 10 && trespass == 0,
        format!("ground reachable {ground_ok}, {flyers} flyers, {complete}/10 complete, {trespass} ground robot ticks past the wall"),
    )
}

// ---------------------------------------------------------------- planner quality

/// 8-connected grid search between cell centers; a diagonal needs both
/// orthogonal neighbors free.
fn grid_shortest(map: &GridMap, from: (i64, i64), to: (i64, i64)) -> Option<f64> {
    let (w, h) = (map.width() as i64, map.height() as i64);
    let free = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && map.cell_free(Cell::new(x, y, 0));
    let idx = |x: i64, y: i64| (y * w + x) as usize;
    let octile = |x: i64, y: i64| {
        let (dx, dy) = ((x - to.0).abs() as f64, (y - to.1).abs() as f64);
        dx.max(dy) + (std::f64::consts::SQRT_2 - 1.0) * dx.min(dy)
    };
    // costs in micrometres keep the heap ordering exact
    let q = |c: f64| (c * 1e6).round() as u64;
    let mut best = vec![f64::INFINITY; (w * h) as usize];
    let mut heap = BinaryHeap::new();
    best[idx(from.0, from.1)] = 0.0;
    heap.push(Reverse((q(octile(from.0, from.1)), from.0, from.1)));
    while let Some(Reverse((_, x, y))) = heap.pop() {
        let g = best[idx(x, y)];
        if (x, y) == to {
            return Some(g);
        }
        for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)] {
            let (nx, ny) = (x + dx, y + dy);
            if !free(nx, ny) || (dx != 0 && dy != 0 && (!free(x + dx, y) || !free(x, y + dy))) {
                continue;
            }
            let ng = g + if dx != 0 && dy != 0 { std::f64::consts::SQRT_2 } else { 1.0 };
            if ng < best[idx(nx, ny)] - 1e-12 {
                best[idx(nx, ny)] = ng;
                heap.push(Reverse((q(ng + octile(nx, ny)), nx, ny)));
            }
        }
    }
    None
}

fn planner_quality() -> Verdict {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("maps");
    let mut cfg = PlannerConfig::for_safe_distance(9.5);
    cfg.budget = 20_000;
    cfg.smoothing = false;
    let mut pass = true;
    let mut shown = Vec::new();
    for name in ["small_arena", "medium_den", "large_arena"] {
        let text = std::fs::read_to_string(dir.join(format!("{name}.map"))).unwrap();
        let map = parse_map(&text, 1.0, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cell = |rng: &mut ChaCha8Rng| loop {
            let c = (rng.gen_range(0..map.width() as i64), rng.gen_range(0..map.height() as i64));
            if map.cell_free(Cell::new(c.0, c.1, 0)) {
                break c;
            }
        };
        let (mut good, mut failed, mut worst) = (0, 0, 0.0f64);
        let mut queries = 0;
        while queries < 50 {
            let (a, b) = (cell(&mut rng), cell(&mut rng));
            let Some(oracle) = grid_shortest(&map, a, b).filter(|d| *d > 0.0) else { continue };
            queries += 1;
            let mut prng = ChaCha8Rng::seed_from_u64(1000 + queries);
            let start = map.cell_to_ground(a.0, a.1);
            let target = map.cell_to_ground(b.0, b.1);
            match plan(&map, start, target, PlanMode::Ground2D, &cfg, &mut prng) {
                Some(p) => {
                    let ratio = p.length() / oracle;
                    worst = worst.max(ratio);
                    good += usize::from(ratio <= 1.5);
                }
                None => failed += 1,
            }
        }
        pass &= good >= 45;
        shown.push(format!("{name} {good}/50 within 1.5x ({failed} unsolved, worst {worst:.2})"));
    }
    verdict(pass, shown.join(", "))
}

// ---------------------------------------------------------------- determinism

fn determinism() -> Verdict {
    let mut names: Vec<PathBuf> = std::fs::read_dir(scenarios())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "scenario"))
        .collect();
    names.sort();
    let mut differing = Vec::new();
    for path in &names {
        let spec = load_scenario(path).unwrap();
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        for d in &dirs {
            run_to_dir(&spec, &scenarios(), false, d.path(), false).unwrap();
        }
        for file in ["trajectory.csv", "metrics.csv"] {
            let read = |d: &tempfile::TempDir| std::fs::read(d.path().join(file)).unwrap();
            if read(&dirs[0]) != read(&dirs[1]) {
                differing.push(format!("{}/{file}", spec.name));
            }
        }
    }
    verdict(
        differing.is_empty(),
        format!("{} scenarios run twice, differing files: {:?}", names.len(), differing),
    )
}

fn main() {
    let criteria: Vec<(&str, fn() -> Verdict)> = vec![
        ("1 link model exactness", link_model),
        ("2 connectivity maintenance", connectivity),
        ("3 insertion adds one safe distance", insertion),
        ("4 consecutive-failure recovery", consecutive),
        ("5 random-failure robustness", random_failures),
        ("6 multi-link parity", parity),
        ("7 heterogeneity", heterogeneity),
        ("8 allocation quality", allocation),
        ("9 planner quality", planner_quality),
        ("10 stigmergy convergence", stigmergy),
        ("11 determinism", determinism),
    ];
    // ACCEPTANCE_ONLY=3,7 runs a subset by leading number
    let only: Option<Vec<String>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').map(|s| s.trim().to_string()).collect());
    let mut failed = 0;
    for (name, f) in criteria {
        let number = name.split(' ').next().unwrap_or_default();
        if only.as_ref().is_some_and(|o| !o.iter().any(|x| x == number)) {
            continue;
        }
        let t0 = Instant::now();
        let v = f();
        failed += usize::from(!v.pass);
        println!("[{}] {name}: {} ({:.1} s)", if v.pass { "PASS" } else { "FAIL" }, v.detail, t0.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
