//! Consensus-based single-task auction. Every robot evaluates the same bid
//! table, so the outcome is identical wherever it is computed.

use crate::msg::RobotId;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AllocationError {
    #[error("brute-force oracle is limited to {max} robots, got {got}")]
    TooLarge { max: usize, got: usize },
    #[error("cost matrix row {row} has {got} entries, expected {expected}")]
    Ragged { row: usize, got: usize, expected: usize },
}

/// `costs[task][robot]` style input keyed by ids.
pub type CostTable = BTreeMap<RobotId, Vec<f64>>;

/// Cheapest task not yet taken; ties go to the lower task index.
pub fn local_bid(costs: &[f64], taken: &BTreeSet<usize>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (t, &c) in costs.iter().enumerate() {
        if taken.contains(&t) || !c.is_finite() {
            continue;
        }
        if best.map(|(_, bc)| c < bc).unwrap_or(true) {
            best = Some((t, c));
        }
    }
    best
}

/// Resolves one round of bids `(robot, task, cost)`: the lowest cost wins
/// each task, ties going to the lower robot id.
pub fn consensus_round(bids: &[(RobotId, usize, f64)]) -> BTreeMap<usize, RobotId> {
    let mut winners: BTreeMap<usize, (f64, RobotId)> = BTreeMap::new();
    for &(r, t, c) in bids {
        let e = winners.entry(t).or_insert((c, r));
        if c < e.0 || (c == e.0 && r < e.1) {
            *e = (c, r);
        }
    }
    winners.into_iter().map(|(t, (_, r))| (t, r)).collect()
}

/// Runs bid/consensus rounds until every task is assigned or no unassigned
/// robot can bid. Returns task -> robot.
pub fn auction(costs: &CostTable, tasks: usize) -> Result<BTreeMap<usize, RobotId>, AllocationError> {
    for (i, row) in costs.values().enumerate() {
        if row.len() != tasks {
            return Err(AllocationError::Ragged { row: i, got: row.len(), expected: tasks });
        }
    }
    let mut assigned: BTreeMap<usize, RobotId> = BTreeMap::new();
    let mut busy: BTreeSet<RobotId> = BTreeSet::new();
    loop {
        let taken: BTreeSet<usize> = assigned.keys().copied().collect();
        let bids: Vec<(RobotId, usize, f64)> = costs
            .iter()
            .filter(|(r, _)| !busy.contains(r))
            .filter_map(|(r, row)| local_bid(row, &taken).map(|(t, c)| (*r, t, c)))
            .collect();
        if bids.is_empty() {
            return Ok(assigned);
        }
        for (t, r) in consensus_round(&bids) {
            assigned.insert(t, r);
            busy.insert(r);
        }
    }
}

/// Total cost of an assignment.
pub fn assignment_cost(costs: &CostTable, assignment: &BTreeMap<usize, RobotId>) -> f64 {
    assignment.iter().map(|(t, r)| costs[r][*t]).sum()
}

pub const ORACLE_MAX_ROBOTS: usize = 8;

/// Exhaustive minimum-cost assignment covering `min(tasks, robots)` tasks.
pub fn optimal_oracle(costs: &CostTable, tasks: usize) -> Result<f64, AllocationError> {
    if costs.len() > ORACLE_MAX_ROBOTS {
        return Err(AllocationError::TooLarge { max: ORACLE_MAX_ROBOTS, got: costs.len() });
    }
    let rows: Vec<&Vec<f64>> = costs.values().collect();
    let need = tasks.min(rows.len());
    fn go(rows: &[&Vec<f64>], r: usize, used: &mut Vec<bool>, left: usize, acc: f64, best: &mut f64) {
        if left == 0 {
            *best = best.min(acc);
            return;
        }
        if rows.len() - r < left {
            return;
        }
        // robot r idles
        go(rows, r + 1, used, left, acc, best);
        for t in 0..used.len() {
            if !used[t] && rows[r][t].is_finite() {
                used[t] = true;
                go(rows, r + 1, used, left - 1, acc + rows[r][t], best);
                used[t] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(&rows, 0, &mut vec![false; tasks], need, 0.0, &mut best);
    Ok(best)
}
