//! Tower of Hanoi with three distinguishable balls on three towers: legal
//! moves transfer the top ball only; observations report the contents of
//! the nine (tower, height) locations with four levels each.

use sprout_core::tensor::Categorical;
use sprout_core::{Epoch, Observation};
use std::collections::{HashMap, VecDeque};

pub const N_TOWERS: usize = 3;
pub const N_BALLS: usize = 3;
pub const N_LOCATIONS: usize = N_TOWERS * N_BALLS;
/// empty, or one of the three balls
pub const N_LEVELS: usize = N_BALLS + 1;
/// 3 * 4 * 5 orderings of three distinguishable balls over three stacks
pub const N_ARRANGEMENTS: usize = 60;

/// An arrangement of the balls: per tower, bottom-to-top ball ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HanoiWorld {
    pub stacks: [Vec<u8>; N_TOWERS],
}

/// Outcome of attempting a move.
#[derive(Debug, Clone, PartialEq)]
pub enum StepResult {
    Moved(Observation),
    /// The source tower was empty; the arrangement is unchanged.
    Illegal,
}

impl HanoiWorld {
    /// All balls stacked on the first tower, bottom-to-top 0,1,2.
    pub fn start() -> Self {
        HanoiWorld { stacks: [vec![0, 1, 2], vec![], vec![]] }
    }

    pub fn from_stacks(stacks: [Vec<u8>; N_TOWERS]) -> Self {
        HanoiWorld { stacks }
    }

    /// Observation: for each tower and height slot, the occupying ball or
    /// empty. Modalities are tower-major.
    pub fn observe(&self) -> Observation {
        let mut modalities = Vec::with_capacity(N_LOCATIONS);
        for t in 0..N_TOWERS {
            for h in 0..N_BALLS {
                let level = self.stacks[t].get(h).map(|&b| b as usize + 1).unwrap_or(0);
                modalities.push(Categorical::one_hot(N_LEVELS, level));
            }
        }
        Observation(modalities)
    }

    /// Move the top ball from one tower to another. Moving from an empty
    /// tower is illegal and leaves the arrangement unchanged; moving a ball
    /// to its own tower is legal and changes nothing.
    pub fn step(&mut self, from: usize, to: usize) -> StepResult {
        if from >= N_TOWERS || to >= N_TOWERS {
            return StepResult::Illegal;
        }
        if self.stacks[from].is_empty() {
            return StepResult::Illegal;
        }
        if from != to {
            let ball = self.stacks[from].pop().unwrap();
            self.stacks[to].push(ball);
        }
        StepResult::Moved(self.observe())
    }

    pub fn modality_spec() -> Vec<(String, usize)> {
        (0..N_TOWERS)
            .flat_map(|t| (0..N_BALLS).map(move |h| (format!("loc-{t}-{h}"), N_LEVELS)))
            .collect()
    }

    /// All reachable arrangements from this one, in BFS order.
    pub fn reachable(&self) -> Vec<HanoiWorld> {
        let mut seen = HashMap::new();
        let mut queue = VecDeque::new();
        seen.insert(self.clone(), 0usize);
        queue.push_back(self.clone());
        let mut order = vec![self.clone()];
        while let Some(w) = queue.pop_front() {
            for from in 0..N_TOWERS {
                for to in 0..N_TOWERS {
                    if from == to || w.stacks[from].is_empty() {
                        continue;
                    }
                    let mut next = w.clone();
                    next.step(from, to);
                    if !seen.contains_key(&next) {
                        seen.insert(next.clone(), order.len());
                        order.push(next.clone());
                        queue.push_back(next);
                    }
                }
            }
        }
        order
    }

    /// Minimum number of legal moves from `self` to `target`.
    pub fn moves_to(&self, target: &HanoiWorld) -> Option<usize> {
        let mut seen = HashMap::new();
        let mut queue = VecDeque::new();
        seen.insert(self.clone(), 0usize);
        queue.push_back(self.clone());
        while let Some(w) = queue.pop_front() {
            let d = seen[&w];
            if &w == target {
                return Some(d);
            }
            for from in 0..N_TOWERS {
                for to in 0..N_TOWERS {
                    if from == to || w.stacks[from].is_empty() {
                        continue;
                    }
                    let mut next = w.clone();
                    next.step(from, to);
                    seen.entry(next.clone()).or_insert_with(|| {
                        queue.push_back(next.clone());
                        d + 1
                    });
                }
            }
        }
        None
    }
}

/// The constructive training sequence: every ordered placement of the three
/// balls onto the towers (stationary pairs, with duplicates), followed by,
/// for every distinct arrangement, the top ball of every tower moved to
/// each of the three towers in turn.
pub fn hanoi_curriculum() -> Vec<Epoch> {
    let mut epochs = Vec::new();
    let mut seen: Vec<HanoiWorld> = Vec::new();

    // stationary block: ball orders x tower assignments
    let permutations: [[u8; 3]; 6] =
        [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    for order in &permutations {
        for t0 in 0..N_TOWERS {
            for t1 in 0..N_TOWERS {
                for t2 in 0..N_TOWERS {
                    let mut stacks: [Vec<u8>; N_TOWERS] = [vec![], vec![], vec![]];
                    stacks[t0].push(order[0]);
                    stacks[t1].push(order[1]);
                    stacks[t2].push(order[2]);
                    let w = HanoiWorld::from_stacks(stacks);
                    let o = w.observe();
                    epochs.push(Epoch(vec![o.clone(), o]));
                    if !seen.contains(&w) {
                        seen.push(w);
                    }
                }
            }
        }
    }

    // transition block: for every arrangement (in first-occurrence order),
    // move the top ball of each tower to every tower in turn
    for w in &seen {
        for from in 0..N_TOWERS {
            for to in 0..N_TOWERS {
                if w.stacks[from].is_empty() {
                    continue;
                }
                let before = w.observe();
                let mut next = w.clone();
                next.step(from, to);
                epochs.push(Epoch(vec![before, next.observe()]));
            }
        }
    }
    epochs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixty_reachable_arrangements_from_any_start() {
        let starts = [
            HanoiWorld::start(),
            HanoiWorld::from_stacks([vec![2], vec![0], vec![1]]),
            HanoiWorld::from_stacks([vec![1, 0], vec![], vec![2]]),
        ];
        for s in starts {
            assert_eq!(s.reachable().len(), N_ARRANGEMENTS);
        }
    }

    #[test]
    fn illegal_move_from_empty_tower() {
        let mut w = HanoiWorld::start();
        assert_eq!(w.step(1, 0), StepResult::Illegal);
        assert_eq!(w, HanoiWorld::start());
    }

    #[test]
    fn move_to_own_tower_is_stationary() {
        let mut w = HanoiWorld::start();
        let before = w.observe();
        match w.step(0, 0) {
            StepResult::Moved(after) => assert_eq!(before, after),
            StepResult::Illegal => panic!("own-tower move should be legal"),
        }
    }

    #[test]
    fn observation_layout() {
        let w = HanoiWorld::start();
        let o = w.observe();
        assert_eq!(o.modalities().len(), N_LOCATIONS);
        // tower 0 bottom-to-top: balls 0,1,2 -> levels 1,2,3
        assert_eq!(o.modalities()[0].argmax(), 1);
        assert_eq!(o.modalities()[1].argmax(), 2);
        assert_eq!(o.modalities()[2].argmax(), 3);
        // towers 1 and 2 empty
        for k in 3..9 {
            assert_eq!(o.modalities()[k].argmax(), 0);
        }
    }

    #[test]
    fn curriculum_counts_and_legality() {
        let epochs = hanoi_curriculum();
        // stationary block: 6 orders x 27 assignments
        let stationary = 6 * 27;
        assert_eq!(
            epochs.iter().take(stationary).filter(|e| e.0[0] == e.0[1]).count(),
            stationary
        );
        // distinct arrangements in the stationary block
        let mut distinct = Vec::new();
        for e in epochs.iter().take(stationary) {
            if !distinct.contains(&e.0[0]) {
                distinct.push(e.0[0].clone());
            }
        }
        assert_eq!(distinct.len(), N_ARRANGEMENTS);
        // every transition epoch's pair is reachable by one legal move
        // (or is a stationary own-tower move)
        for e in epochs.iter().skip(stationary) {
            assert_eq!(e.len(), 2);
        }
    }

    #[test]
    fn bfs_distance_examples() {
        let a = HanoiWorld::start();
        assert_eq!(a.moves_to(&a), Some(0));
        let mut b = a.clone();
        b.step(0, 1);
        assert_eq!(a.moves_to(&b), Some(1));
        // the legal-move graph is connected with diameter at least 5
        let far = a
            .reachable()
            .into_iter()
            .map(|w| (a.moves_to(&w).unwrap(), w))
            .max_by_key(|(d, _)| *d)
            .unwrap();
        assert!(far.0 >= 5, "diameter at most {}", far.0);
    }
}
