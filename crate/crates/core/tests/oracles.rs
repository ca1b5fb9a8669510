//! Independent reference computations checked against the library.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet, VecDeque};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spot_core::blockworld::{BlockConfig, BlockState, BlockWorld, Task, ToppleModel};
use spot_core::gridworld::{
    ideal_action_count, wavefront, Cell, GridWorld, Heading, Layout, Pose, FORWARD, TURN_LEFT, TURN_RIGHT,
};
use spot_core::rewards::discounted_backfill;
use spot_core::{Environment, Termination};

fn random_layout(rng: &mut ChaCha8Rng) -> (Layout, Pose) {
    loop {
        let (w, h) = (rng.gen_range(4..12), rng.gen_range(4..12));
        let mut cells = vec![Cell::Wall; w * h];
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                cells[y * w + x] = match rng.gen_range(0..10) {
                    0 | 1 => Cell::Wall,
                    2 | 3 => Cell::Lava,
                    _ => Cell::Empty,
                };
            }
        }
        let goal = (rng.gen_range(1..w - 1), rng.gen_range(1..h - 1));
        cells[goal.1 * w + goal.0] = Cell::Goal;
        let open: Vec<(usize, usize)> = (0..w * h)
            .map(|i| (i % w, i / w))
            .filter(|&(x, y)| cells[y * w + x] == Cell::Empty)
            .collect();
        if open.is_empty() {
            continue;
        }
        let (x, y) = open[rng.gen_range(0..open.len())];
        let heading = Heading::ALL[rng.gen_range(0..4)];
        return (Layout::new(w, h, cells).unwrap(), Pose { x, y, heading });
    }
}

fn open_cell(layout: &Layout, x: i64, y: i64) -> bool {
    matches!(layout.cell_at(x, y), Cell::Empty | Cell::Goal)
}

/// Dijkstra from the goal with unit edge weights.
fn dijkstra(layout: &Layout) -> HashMap<(usize, usize), u32> {
    let mut dist = HashMap::new();
    let mut heap = BinaryHeap::new();
    heap.push(Reverse((0u32, layout.goal())));
    while let Some(Reverse((d, (x, y)))) = heap.pop() {
        if dist.contains_key(&(x, y)) {
            continue;
        }
        dist.insert((x, y), d);
        for (dx, dy) in [(0i64, 1i64), (1, 0), (0, -1), (-1, 0)] {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if open_cell(layout, nx, ny) && !dist.contains_key(&(nx as usize, ny as usize)) {
                heap.push(Reverse((d + 1, (nx as usize, ny as usize))));
            }
        }
    }
    dist
}

fn pose_bfs(layout: &Layout, start: Pose) -> Option<u32> {
    let mut seen = HashSet::from([start]);
    let mut queue = VecDeque::from([(start, 0u32)]);
    while let Some((p, d)) = queue.pop_front() {
        if (p.x, p.y) == layout.goal() {
            return Some(d);
        }
        let (dx, dy) = p.heading.delta();
        let (nx, ny) = (p.x as i64 + dx, p.y as i64 + dy);
        let mut next = vec![
            Pose {
                heading: p.heading.left(),
                ..p
            },
            Pose {
                heading: p.heading.right(),
                ..p
            },
        ];
        if open_cell(layout, nx, ny) {
            next.push(Pose {
                x: nx as usize,
                y: ny as usize,
                ..p
            });
        }
        for n in next {
            if seen.insert(n) {
                queue.push_back((n, d + 1));
            }
        }
    }
    None
}

#[test]
fn wavefront_matches_dijkstra_on_random_layouts() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let (layout, _) = random_layout(&mut rng);
        let field = wavefront(&layout);
        let reference = dijkstra(&layout);
        for y in 0..layout.height() {
            for x in 0..layout.width() {
                assert_eq!(field.get(x, y), reference.get(&(x, y)).copied(), "cell ({x}, {y})");
            }
        }
    }
}

#[test]
fn ideal_count_matches_pose_bfs_on_random_layouts() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut reachable = 0;
    for _ in 0..100 {
        let (layout, start) = random_layout(&mut rng);
        let got = ideal_action_count(&layout, start);
        assert_eq!(got, pose_bfs(&layout, start));
        reachable += usize::from(got.is_some());
    }
    assert!(reachable > 20, "only {reachable} solvable layouts drawn");
}

#[test]
fn progress_rises_along_wavefront_greedy_paths() {
    for seed in 0..100 {
        let mut env = GridWorld::generate(seed);
        let mut last = env.progress();
        assert_eq!(last, 0.0);
        while !env.is_terminal() {
            let field = env.field().clone();
            let p = env.pose();
            let here = field.get(p.x, p.y).unwrap();
            let (dx, dy) = p.heading.delta();
            let (fx, fy) = (p.x as i64 + dx, p.y as i64 + dy);
            let downhill = open_cell(env.layout(), fx, fy) && field.get(fx as usize, fy as usize) == Some(here - 1);
            let action = if downhill { FORWARD } else { TURN_LEFT };
            let step = env.step(action).unwrap();
            let now = step.outcome.progress_after;
            if action == FORWARD {
                assert!(now > last, "seed {seed}: forward {last} -> {now}");
            } else {
                assert_eq!(now, last);
            }
            last = now;
        }
        assert_eq!(last, 1.0);
        assert!(env.step_count() >= env.ideal_actions());
    }
}

#[test]
fn masked_grid_actions_never_enter_lava() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut lava = 0;
    let mut steps = 0;
    for seed in 0.. {
        let mut env = GridWorld::generate(seed);
        while !env.is_terminal() {
            let allowed = env.mask().allowed_actions();
            let a = allowed[rng.gen_range(0..allowed.len())];
            if env.step(a).unwrap().termination == Some(Termination::LavaDeath) {
                lava += 1;
            }
            steps += 1;
        }
        if steps >= 100_000 {
            break;
        }
    }
    assert_eq!(lava, 0);
}

#[test]
fn turns_never_change_progress() {
    let mut env = GridWorld::generate(3);
    for a in [TURN_LEFT, TURN_RIGHT, TURN_RIGHT] {
        let o = env.step(a).unwrap().outcome;
        assert_eq!(o.progress_before, o.progress_after);
        assert!(!o.success);
    }
}

// ------------------------------------------------------------ block world

fn no_topple(task: Task) -> BlockConfig {
    BlockConfig {
        topple: ToppleModel::NEVER,
        ..BlockConfig::new(task)
    }
}

/// Fewest actions to completion found by breadth-first search, up to `depth`.
fn shortest_plan(env: &BlockWorld, depth: u32) -> Option<u32> {
    let mut seen = HashSet::from([env.block_state().clone()]);
    let mut frontier = vec![env.clone()];
    for d in 1..=depth {
        let mut next = Vec::new();
        for w in &frontier {
            for a in w.mask().allowed_actions() {
                let mut child = w.clone();
                let step = child.step(a).unwrap();
                if step.termination == Some(Termination::Complete) {
                    return Some(d);
                }
                if step.termination.is_none() && seen.insert(child.block_state().clone()) {
                    next.push(child);
                }
            }
        }
        frontier = next;
    }
    None
}

#[test]
fn planner_agrees_with_stack_ideal_counts() {
    for (k, ideal) in [(2u8, 2u32), (3, 4), (4, 6)] {
        let cfg = no_topple(Task::StackOf(k));
        for seed in 0..3 {
            let env = BlockWorld::reset(seed, &cfg).unwrap();
            assert_eq!(env.ideal_actions(), ideal);
            assert_eq!(shortest_plan(&env, ideal), Some(ideal), "stack of {k}, seed {seed}");
        }
    }
}

#[test]
fn clear_all_needs_one_grasp_per_block() {
    let cfg = no_topple(Task::ClearAll);
    let env = BlockWorld::reset(5, &cfg).unwrap();
    assert_eq!(shortest_plan(&env, 4), Some(env.ideal_actions()));
    assert_eq!(shortest_plan(&env, 3), None);
}

/// Reads the text form back into cell heights and evaluates the task predicate.
fn progress_from_text(text: &str, task: Task, n_blocks: usize) -> f64 {
    let mut heights: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    let mut removed = 0;
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("cell ") {
            let (coords, ids) = rest.split_once(':').unwrap();
            let mut it = coords.split_whitespace().map(|v| v.parse::<i64>().unwrap());
            let (x, y) = (it.next().unwrap(), it.next().unwrap());
            let count = ids.trim().trim_matches(|c| c == '[' || c == ']').split_whitespace().count();
            heights.insert((x, y), count);
        } else if let Some(rest) = line.strip_prefix("removed:") {
            removed = rest.trim().trim_matches(|c| c == '[' || c == ']').split_whitespace().count();
        }
    }
    let ratio = |v: usize, k: u8| (v as f64 / f64::from(k)).min(1.0);
    match task {
        Task::StackOf(k) => ratio(heights.values().copied().max().unwrap_or(0), k),
        Task::RowOf(k) => {
            let single = |x: i64, y: i64| heights.get(&(x, y)) == Some(&1);
            let mut best = 0;
            for &(x, y) in heights.keys() {
                for (dx, dy) in [(1, 0), (0, 1)] {
                    if single(x - dx, y - dy) {
                        continue;
                    }
                    let mut n = 0;
                    while single(x + n * dx, y + n * dy) {
                        n += 1;
                    }
                    best = best.max(n as usize);
                }
            }
            ratio(best, k)
        }
        Task::ClearAll => removed as f64 / n_blocks as f64,
    }
}

#[test]
fn progress_matches_text_evaluator_on_random_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut checked = 0;
    for task in [Task::StackOf(4), Task::RowOf(3), Task::RowOf(4), Task::ClearAll] {
        let cfg = BlockConfig::new(task);
        let mut env = BlockWorld::reset(0, &cfg).unwrap();
        let mut episode = 0;
        while checked < 2_500 * (1 + task_index(task)) {
            if env.is_terminal() {
                episode += 1;
                env = BlockWorld::reset(episode, &cfg).unwrap();
            }
            let s = env.block_state();
            let want = progress_from_text(&s.to_text(), task, cfg.num_blocks);
            assert_eq!(s.progress(), want, "{task}:\n{}", s.to_text());
            checked += 1;
            let allowed = env.mask().allowed_actions();
            env.step(allowed[rng.gen_range(0..allowed.len())]).unwrap();
        }
    }
    assert!(checked >= 10_000);
}

fn task_index(task: Task) -> usize {
    match task {
        Task::StackOf(_) => 0,
        Task::RowOf(3) => 1,
        Task::RowOf(_) => 2,
        Task::ClearAll => 3,
    }
}

fn assert_conserved(s: &BlockState, n: usize) {
    let mut ids: Vec<u8> = s.stacks.iter().flatten().copied().collect();
    ids.extend(s.gripper);
    ids.extend(&s.removed);
    ids.sort_unstable();
    let expected: Vec<u8> = (0..n as u8).collect();
    assert_eq!(ids, expected, "{}", s.to_text());
}

#[test]
fn blocks_are_conserved_under_random_actions() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let tasks = [Task::StackOf(4), Task::RowOf(4), Task::ClearAll];
    let mut actions = 0;
    let mut episode = 0;
    while actions < 100_000 {
        let cfg = BlockConfig::new(tasks[episode as usize % tasks.len()]);
        let mut env = BlockWorld::reset(episode, &cfg).unwrap();
        while !env.is_terminal() {
            // Unmasked, so certain failures are exercised too.
            let a = rng.gen_range(0..env.num_actions());
            let step = env.step(a).unwrap();
            assert!((0.0..=1.0).contains(&step.outcome.progress_after));
            assert_conserved(env.block_state(), cfg.num_blocks);
            actions += 1;
        }
        episode += 1;
    }
}

#[test]
fn discounted_backfill_scales_the_final_reward() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..200 {
        let n = rng.gen_range(1..20);
        let r: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
        let got = discounted_backfill(&r, 0.65);
        for t in 0..n {
            let want = 0.65f64.powi((n - 1 - t) as i32) * r[n - 1];
            assert!((got[t] - want).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Every action the mask removes fails when executed anyway.
    #[test]
    fn masked_block_actions_fail(seed in 0u64..10_000, walk in 0usize..40, task in 0usize..3) {
        let task = [Task::StackOf(4), Task::RowOf(4), Task::ClearAll][task];
        let cfg = BlockConfig::new(task);
        let mut env = BlockWorld::reset(seed, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..walk {
            if env.is_terminal() {
                break;
            }
            let allowed = env.mask().allowed_actions();
            env.step(allowed[rng.gen_range(0..allowed.len())]).unwrap();
        }
        prop_assume!(!env.is_terminal());
        let mask = env.mask();
        prop_assert!(mask.any());
        for a in 0..env.num_actions() {
            if !mask.allows(a) {
                let mut probe = env.clone();
                let step = probe.step(a).unwrap();
                prop_assert!(!step.outcome.success, "masked action {a} succeeded");
                prop_assert_eq!(probe.block_state(), env.block_state());
            }
        }
    }

    /// Forward is masked exactly when it would end in lava or bump a wall.
    #[test]
    fn grid_mask_matches_facing_cell(seed in 0u64..10_000, turns in 0usize..4, moves in 0usize..10) {
        let mut env = GridWorld::generate(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..moves {
            let allowed = env.mask().allowed_actions();
            env.step(allowed[rng.gen_range(0..allowed.len())]).unwrap();
            if env.is_terminal() {
                return Ok(());
            }
        }
        for _ in 0..turns {
            env.step(TURN_RIGHT).unwrap();
            if env.is_terminal() {
                return Ok(());
            }
        }
        let p = env.pose();
        let (dx, dy) = p.heading.delta();
        let ahead = env.layout().cell_at(p.x as i64 + dx, p.y as i64 + dy);
        prop_assert_eq!(env.mask().allows(FORWARD), matches!(ahead, Cell::Empty | Cell::Goal));
        prop_assert!(env.mask().allows(TURN_LEFT) && env.mask().allows(TURN_RIGHT));
    }
}
