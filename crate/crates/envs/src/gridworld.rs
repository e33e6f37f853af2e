//! The 9x9 sprite gridworld: three fixed shapes moving one pixel at a time
//! with circular boundary conditions, observed through 81 binary pixel
//! modalities plus one probabilistic reward modality.

use sprout_core::tensor::Categorical;
use sprout_core::Observation;

pub const GRID: usize = 9;
pub const N_OBJECTS: usize = 3;
pub const N_PIXELS: usize = GRID * GRID;
/// 81 pixels plus the reward channel.
pub const N_MODALITIES: usize = N_PIXELS + 1;

/// Three distinct 3x3 sprites. The first is a checkerboard: no two cells
/// are orthogonally adjacent, so a one-pixel move changes every covered
/// cell and the shape never aliases with its own shifts.
const SPRITES: [[(usize, usize); 6]; N_OBJECTS] = [
    // X: corners and centre (5 cells)
    [(0, 0), (0, 2), (1, 1), (2, 0), (2, 2), (9, 9)],
    // ring: edge centres (4 cells)
    [(0, 1), (1, 0), (1, 2), (2, 1), (9, 9), (9, 9)],
    // bar: middle row (3 cells)
    [(1, 0), (1, 1), (1, 2), (9, 9), (9, 9), (9, 9)],
];

/// Reward targets per object (row, col of the sprite origin).
const TARGETS: [(usize, usize); N_OBJECTS] = [(6, 6), (2, 6), (6, 2)];

/// Width of the reward bump in cells.
const REWARD_SIGMA: f64 = 1.0;

/// One-step moves; `Stay` leaves the scene unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridAction {
    Stay,
    Up,
    Down,
    Left,
    Right,
}

impl GridAction {
    pub const ALL: [GridAction; 5] =
        [GridAction::Stay, GridAction::Up, GridAction::Down, GridAction::Left, GridAction::Right];
}

/// A movable object at a wrapped grid position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridWorld {
    pub object: usize,
    pub row: usize,
    pub col: usize,
}

impl GridWorld {
    pub fn new(object: usize, row: usize, col: usize) -> Self {
        assert!(object < N_OBJECTS && row < GRID && col < GRID);
        GridWorld { object, row, col }
    }

    /// Cells covered by the sprite at its current position.
    pub fn covered(&self) -> Vec<(usize, usize)> {
        SPRITES[self.object]
            .iter()
            .filter(|&&(r, _)| r < GRID)
            .map(|&(r, c)| ((self.row + r) % GRID, (self.col + c) % GRID))
            .collect()
    }

    /// Probability of the reward outcome at the current position: a
    /// Gaussian function of the wrapped distance to the object's target.
    pub fn reward_probability(&self) -> f64 {
        let (tr, tc) = TARGETS[self.object];
        let dr = wrap_distance(self.row, tr);
        let dc = wrap_distance(self.col, tc);
        let d2 = (dr * dr + dc * dc) as f64;
        (-d2 / (2.0 * REWARD_SIGMA * REWARD_SIGMA)).exp()
    }

    /// Current observation: level 1 of pixel (r, c) is "covered"; the final
    /// modality is the reward channel.
    pub fn observe(&self) -> Observation {
        let mut on = vec![false; N_PIXELS];
        for (r, c) in self.covered() {
            on[r * GRID + c] = true;
        }
        let mut modalities: Vec<Categorical> = on
            .iter()
            .map(|&b| {
                if b {
                    Categorical::new(vec![0.0, 1.0]).unwrap()
                } else {
                    Categorical::new(vec![1.0, 0.0]).unwrap()
                }
            })
            .collect();
        let r = self.reward_probability();
        modalities.push(Categorical::new(vec![1.0 - r, r]).unwrap());
        Observation(modalities)
    }

    /// Apply a move (with wrap-around) and return the new observation.
    pub fn step(&mut self, action: GridAction) -> Observation {
        match action {
            GridAction::Stay => {}
            GridAction::Up => self.row = (self.row + GRID - 1) % GRID,
            GridAction::Down => self.row = (self.row + 1) % GRID,
            GridAction::Left => self.col = (self.col + GRID - 1) % GRID,
            GridAction::Right => self.col = (self.col + 1) % GRID,
        }
        self.observe()
    }

    /// Names of the 82 outcome modalities, pixel-row-major then reward.
    pub fn modality_spec() -> Vec<(String, usize)> {
        let mut out: Vec<(String, usize)> = (0..GRID)
            .flat_map(|r| (0..GRID).map(move |c| (format!("px-{r}-{c}"), 2)))
            .collect();
        out.push(("reward".into(), 2));
        out
    }
}

fn wrap_distance(a: usize, b: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(GRID - d)
}
