use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use super::world::GridWorld;
use crate::types::{Cell, Move};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Route {
    Moves(Vec<Move>),
    Unreachable,
}

impl Route {
    pub fn len(&self) -> Option<usize> {
        match self {
            Route::Moves(m) => Some(m.len()),
            Route::Unreachable => None,
        }
    }
}

/// Shortest 4-connected route from `from` to `goal` over the world's static
/// obstacles plus `avoid`. A* with the Manhattan heuristic; ties resolve on
/// cell order, so the result is deterministic.
pub fn plan_route(world: &GridWorld, from: Cell, goal: Cell, avoid: &BTreeSet<Cell>) -> Route {
    if from == goal {
        return Route::Moves(Vec::new());
    }
    let free = |c: Cell| world.passable(c) && !avoid.contains(&c);
    if !free(goal) {
        return Route::Unreachable;
    }
    let mut best: BTreeMap<Cell, u32> = BTreeMap::new();
    let mut came: BTreeMap<Cell, (Cell, Move)> = BTreeMap::new();
    let mut open = BinaryHeap::new();
    best.insert(from, 0);
    open.push(Reverse((from.manhattan(goal), 0u32, from)));
    while let Some(Reverse((_, g, at))) = open.pop() {
        if at == goal {
            let mut moves = Vec::new();
            let mut c = goal;
            while c != from {
                let (prev, mv) = came[&c];
                moves.push(mv);
                c = prev;
            }
            moves.reverse();
            return Route::Moves(moves);
        }
        if best.get(&at).is_some_and(|b| *b < g) {
            continue;
        }
        for mv in Move::ALL {
            let next = at.step(mv);
            if !free(next) {
                continue;
            }
            let ng = g + 1;
            if best.get(&next).is_none_or(|b| ng < *b) {
                best.insert(next, ng);
                came.insert(next, (at, mv));
                open.push(Reverse((ng + next.manhattan(goal), ng, next)));
            }
        }
    }
    Route::Unreachable
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    fn empty(n: i32) -> GridWorld {
        GridWorld {
            width: n,
            height: n,
            obstacles: BTreeSet::new(),
            humans: vec![],
            robot: Cell::new(0, 0),
            goal: Cell::new(0, 0),
            tick: 0,
        }
    }

    fn bfs_len(w: &GridWorld, from: Cell, goal: Cell) -> Option<usize> {
        let mut dist = BTreeMap::from([(from, 0usize)]);
        let mut q = VecDeque::from([from]);
        while let Some(c) = q.pop_front() {
            if c == goal {
                return Some(dist[&c]);
            }
            for (dx, dy) in [(0, 1), (1, 0), (0, -1), (-1, 0)] {
                let n = Cell::new(c.x + dx, c.y + dy);
                if w.passable(n) && !dist.contains_key(&n) {
                    dist.insert(n, dist[&c] + 1);
                    q.push_back(n);
                }
            }
        }
        None
    }

    #[test]
    fn already_at_goal() {
        let w = empty(5);
        assert_eq!(
            plan_route(&w, Cell::new(0, 0), Cell::new(0, 0), &BTreeSet::new()),
            Route::Moves(vec![])
        );
    }

    #[test]
    fn corner_to_corner_matches_bfs() {
        let w = empty(5);
        let r = plan_route(&w, Cell::new(0, 0), Cell::new(4, 4), &BTreeSet::new());
        assert_eq!(r.len(), bfs_len(&w, Cell::new(0, 0), Cell::new(4, 4)));
        assert_eq!(r.len(), Some(8));
    }

    #[test]
    fn walled_goal_is_unreachable() {
        let mut w = empty(5);
        w.obstacles = [Cell::new(3, 4), Cell::new(4, 3)].into_iter().collect();
        assert_eq!(
            plan_route(&w, Cell::new(0, 0), Cell::new(4, 4), &BTreeSet::new()),
            Route::Unreachable
        );
    }

    #[test]
    fn avoided_cells_are_routed_around() {
        let w = empty(3);
        let avoid = [Cell::new(1, 0)].into_iter().collect();
        let Route::Moves(m) = plan_route(&w, Cell::new(0, 0), Cell::new(2, 0), &avoid) else {
            panic!()
        };
        assert_eq!(m.len(), 4);
        let mut c = Cell::new(0, 0);
        for mv in m {
            c = c.step(mv);
            assert_ne!(c, Cell::new(1, 0));
        }
        assert_eq!(c, Cell::new(2, 0));
    }
}
