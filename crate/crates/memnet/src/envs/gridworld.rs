//! A 4-position corridor with 4 facing directions: 16 states, rendered to
//! 16x16 screens, plus a tabular Q-learning collector.
//!
//! State id = position * 4 + direction (0=N, 1=E, 2=S, 3=W). The goal is
//! position 3; reaching it ends the episode with reward +1, every other
//! step costs 0.01. Episodes start at position 0 facing east.

use crate::error::{Error, Result};
use crate::short_term::{Sample, ShortTermMemory};
use crate::tensor::{Rng, Tensor};

pub const NUM_STATES: usize = 16;
pub const NUM_ACTIONS: usize = 3;
pub const SCREEN_SIDE: usize = 16;
pub const SCREEN_PIXELS: usize = SCREEN_SIDE * SCREEN_SIDE;
/// Position 0, facing east.
pub const START_STATE: usize = 1;
/// Episodes are cut off after this many steps.
pub const STEP_LIMIT: usize = 50;

pub const TURN_LEFT: usize = 0;
pub const TURN_RIGHT: usize = 1;
pub const FORWARD: usize = 2;

const GOAL_POSITION: usize = 3;

fn check_state(state_id: usize) -> Result<(usize, usize)> {
    if state_id >= NUM_STATES {
        return Err(Error::IndexOutOfRange {
            what: "gridworld state",
            index: state_id,
            len: NUM_STATES,
        });
    }
    Ok((state_id / 4, state_id % 4))
}

/// One transition. `done` holds exactly when the next position is the goal.
pub fn env_step(state_id: usize, action: usize) -> Result<(usize, f64, bool)> {
    let (mut pos, mut dir) = check_state(state_id)?;
    match action {
        TURN_LEFT => dir = (dir + 3) % 4,
        TURN_RIGHT => dir = (dir + 1) % 4,
        FORWARD => {
            if dir == 1 && pos < 3 {
                pos += 1;
            } else if dir == 3 && pos > 0 {
                pos -= 1;
            }
        }
        _ => {
            return Err(Error::Contract {
                op: "env_step",
                msg: format!("action {action} is not in 0..{NUM_ACTIONS}"),
            })
        }
    }
    let next = pos * 4 + dir;
    let done = pos == GOAL_POSITION;
    let reward = if done { 1.0 } else { -0.01 };
    Ok((next, reward, done))
}

/// Pure render of a state: background 0, corridor band 0.25, a 4x4 agent
/// block at 1.0 with a 2x2 direction notch at 0.5 cut into it.
pub fn render_screen(state_id: usize) -> Result<Tensor> {
    let (pos, dir) = check_state(state_id)?;
    let mut px = vec![0.0f64; SCREEN_PIXELS];
    let mut put = |r: usize, c: usize, v: f64| px[r * SCREEN_SIDE + c] = v;

    for r in 6..=9 {
        for c in 0..SCREEN_SIDE {
            put(r, c, 0.25);
        }
    }
    let left = 4 * pos;
    for r in 6..=9 {
        for c in left..=left + 3 {
            put(r, c, 1.0);
        }
    }
    let (rows, cols) = match dir {
        0 => (6..=7, left + 1..=left + 2),
        1 => (7..=8, left + 2..=left + 3),
        2 => (8..=9, left + 1..=left + 2),
        _ => (7..=8, left..=left + 1),
    };
    for r in rows {
        for c in cols.clone() {
            put(r, c, 0.5);
        }
    }
    Tensor::new(vec![SCREEN_PIXELS], px)
}

/// State-action values for the 16x3 table.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    values: Tensor,
}

impl QTable {
    pub fn zeros() -> Self {
        QTable {
            values: Tensor::zeros(vec![NUM_STATES, NUM_ACTIONS]),
        }
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values.data()[state * NUM_ACTIONS + action]
    }

    fn set(&mut self, state: usize, action: usize, v: f64) {
        self.values.data_mut()[state * NUM_ACTIONS + action] = v;
    }

    /// Highest-value action; ties go to the lowest index.
    pub fn greedy_action(&self, state: usize) -> usize {
        let row = self.values.row(state);
        let mut best = 0;
        for (a, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = a;
            }
        }
        best
    }

    fn max_value(&self, state: usize) -> f64 {
        self.values
            .row(state)
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Tabular Q-learning with epsilon-greedy behavior from the fixed start.
pub fn train_q_policy(
    episodes: usize,
    alpha: f64,
    gamma: f64,
    epsilon: f64,
    rng: &mut Rng,
) -> QTable {
    let mut q = QTable::zeros();
    for _ in 0..episodes {
        let mut state = START_STATE;
        for _ in 0..STEP_LIMIT {
            let action = if rng.uniform() < epsilon {
                rng.below(NUM_ACTIONS)
            } else {
                q.greedy_action(state)
            };
            let (next, reward, done) = env_step(state, action).expect("valid by construction");
            let target = reward + gamma * q.max_value(next);
            let updated = q.get(state, action) + alpha * (target - q.get(state, action));
            q.set(state, action, updated);
            state = next;
            if done {
                break;
            }
        }
    }
    q
}

/// States visited by one greedy episode from the start, in order, including
/// the terminal state. Capped at the step limit.
pub fn greedy_rollout(q: &QTable) -> Vec<usize> {
    let mut state = START_STATE;
    let mut visited = vec![state];
    for _ in 0..STEP_LIMIT {
        let (next, _, done) = env_step(state, q.greedy_action(state)).expect("valid state");
        visited.push(next);
        state = next;
        if done {
            break;
        }
    }
    visited
}

/// Sum of rewards of one episode under uniformly random actions.
pub fn random_rollout_return(rng: &mut Rng) -> f64 {
    let mut state = START_STATE;
    let mut total = 0.0;
    for _ in 0..STEP_LIMIT {
        let (next, reward, done) = env_step(state, rng.below(NUM_ACTIONS)).expect("valid state");
        total += reward;
        state = next;
        if done {
            break;
        }
    }
    total
}

/// Rolls out the greedy policy and stores every visited state's rendered
/// screen under its state id. Greedy collection deliberately leaves
/// off-path state queues empty.
pub fn collect_screens(
    q: &QTable,
    episodes: usize,
    mem: &mut ShortTermMemory,
    _rng: &mut Rng,
) -> Result<()> {
    if mem.num_classes() != NUM_STATES {
        return Err(Error::Contract {
            op: "collect_screens",
            msg: format!(
                "memory has {} classes, gridworld needs {NUM_STATES}",
                mem.num_classes()
            ),
        });
    }
    for _ in 0..episodes {
        for state in greedy_rollout(q) {
            mem.insert(Sample {
                class_id: state,
                payload: render_screen(state)?,
            })?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_moves_east() {
        // Position 0 facing east: forward reaches position 1, small penalty.
        let (next, reward, done) = env_step(1, FORWARD).unwrap();
        assert_eq!(next, 5);
        assert_eq!(reward, -0.01);
        assert!(!done);
    }

    #[test]
    fn goal_step_rewards_and_finishes() {
        // Position 2 facing east: forward reaches the goal.
        let (next, reward, done) = env_step(9, FORWARD).unwrap();
        assert_eq!(next, 13);
        assert_eq!(reward, 1.0);
        assert!(done);
    }

    #[test]
    fn wall_blocks_westward_move() {
        // Position 0 facing west: forward is a no-op.
        let (next, _, done) = env_step(3, FORWARD).unwrap();
        assert_eq!(next, 3);
        assert!(!done);
    }

    #[test]
    fn invalid_action_and_state_are_rejected() {
        assert!(matches!(env_step(0, 3), Err(Error::Contract { .. })));
        assert!(matches!(
            env_step(16, FORWARD),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn transitions_stay_in_state_space_and_done_matches_goal() {
        for state in 0..NUM_STATES {
            for action in 0..NUM_ACTIONS {
                let (next, _, done) = env_step(state, action).unwrap();
                assert!(next < NUM_STATES);
                assert_eq!(done, next / 4 == 3);
            }
        }
    }

    #[test]
    fn renders_are_pairwise_distinct_and_pure() {
        let screens: Vec<Tensor> = (0..NUM_STATES).map(|s| render_screen(s).unwrap()).collect();
        for i in 0..NUM_STATES {
            assert_eq!(screens[i].data(), render_screen(i).unwrap().data());
            for j in i + 1..NUM_STATES {
                assert_ne!(screens[i].data(), screens[j].data(), "{i} vs {j}");
            }
        }
    }

    #[test]
    fn render_palette_and_agent_pixel_count() {
        for s in 0..NUM_STATES {
            let screen = render_screen(s).unwrap();
            let ones = screen.data().iter().filter(|&&v| v == 1.0).count();
            assert_eq!(ones, 12, "state {s}");
            for &v in screen.data() {
                assert!(
                    v == 0.0 || v == 0.25 || v == 0.5 || v == 1.0,
                    "state {s} pixel {v}"
                );
            }
        }
    }

    #[test]
    fn trained_greedy_policy_reaches_goal_quickly() {
        let mut rng = Rng::new(12);
        let q = train_q_policy(500, 0.1, 0.9, 0.1, &mut rng);
        let path = greedy_rollout(&q);
        assert!(path.len() <= 10, "greedy path {path:?}");
        assert_eq!(path.last().unwrap() / 4, 3);
    }

    #[test]
    fn degenerate_gamma_learns_immediate_rewards() {
        let mut rng = Rng::new(5);
        let q = train_q_policy(200, 1.0, 0.0, 0.3, &mut rng);
        // Visited pairs converge to their immediate reward.
        assert!((q.get(START_STATE, TURN_LEFT) - (-0.01)).abs() < 1e-12);
        let goal_entry = q.get(9, FORWARD);
        assert!((goal_entry - 1.0).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_table() {
        let a = train_q_policy(100, 0.1, 0.9, 0.1, &mut Rng::new(77));
        let b = train_q_policy(100, 0.1, 0.9, 0.1, &mut Rng::new(77));
        assert_eq!(a.values().data(), b.values().data());
    }

    #[test]
    fn greedy_beats_random_policy() {
        let mut rng = Rng::new(2);
        let q = train_q_policy(500, 0.1, 0.9, 0.1, &mut rng);
        let greedy_return: f64 = {
            let mut state = START_STATE;
            let mut total = 0.0;
            for _ in 0..STEP_LIMIT {
                let (next, r, done) = env_step(state, q.greedy_action(state)).unwrap();
                total += r;
                state = next;
                if done {
                    break;
                }
            }
            total
        };
        let mut random_mean = 0.0;
        for _ in 0..100 {
            random_mean += random_rollout_return(&mut rng);
        }
        random_mean /= 100.0;
        assert!(
            greedy_return > random_mean,
            "{greedy_return} vs {random_mean}"
        );
    }

    #[test]
    fn greedy_collection_fills_only_path_states() {
        let mut rng = Rng::new(12);
        let q = train_q_policy(500, 0.1, 0.9, 0.1, &mut rng);
        let mut mem = ShortTermMemory::new(NUM_STATES, 64);
        collect_screens(&q, 3, &mut mem, &mut rng).unwrap();

        let path: std::collections::HashSet<usize> = greedy_rollout(&q).into_iter().collect();
        let counts = mem.class_counts();
        for (state, &count) in counts.iter().enumerate() {
            if path.contains(&state) {
                assert!(count > 0, "state {state} on path but empty");
            } else {
                assert_eq!(count, 0, "state {state} off path but non-empty");
            }
        }
        // Three episodes of the same deterministic path, bounded by capacity.
        let per_visit: usize = counts.iter().sum();
        assert_eq!(per_visit, 3 * path.len());
    }

    #[test]
    fn collect_requires_sixteen_classes() {
        let q = QTable::zeros();
        let mut mem = ShortTermMemory::new(4, 8);
        let mut rng = Rng::new(0);
        assert!(matches!(
            collect_screens(&q, 1, &mut mem, &mut rng),
            Err(Error::Contract { .. })
        ));
    }
}
