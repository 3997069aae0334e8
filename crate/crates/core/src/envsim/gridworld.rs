//! Multi-layout gridworld. Each task is one hand-authored ASCII layout.
//!
//! Layout characters: `#` wall, `.` floor, `C` coin, `G` goal, `S` start.
//! Observations are a one-hot encoding of the agent cell over the flattened
//! grid, so layouts of the same size share one observation space.

use std::fs;
use std::path::Path;

use super::ContextVector;
use crate::error::{Error, Result};

pub const MAX_EPISODE_LEN: usize = 100;
pub const STEP_PENALTY: f64 = -0.01;
pub const COIN_REWARD: f64 = 1.0;
pub const GOAL_REWARD: f64 = 10.0;

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;
pub const NUM_ACTIONS: usize = 4;

pub const BUILTIN_LAYOUTS: [&str; 3] = [
    include_str!("../../assets/layouts/layout_0.txt"),
    include_str!("../../assets/layouts/layout_1.txt"),
    include_str!("../../assets/layouts/layout_2.txt"),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub width: usize,
    pub height: usize,
    pub walls: Vec<bool>,
    pub coins: Vec<usize>,
    pub goal: usize,
    pub start: usize,
}

impl Layout {
    pub fn parse(text: &str) -> Result<Self> {
        let rows: Vec<&str> = text.lines().map(str::trim_end).filter(|l| !l.is_empty()).collect();
        let height = rows.len();
        if height == 0 {
            return Err(Error::Config("empty layout".into()));
        }
        let width = rows[0].chars().count();
        let mut walls = Vec::with_capacity(width * height);
        let (mut coins, mut goal, mut start) = (Vec::new(), None, None);
        for (r, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(Error::Config(format!("layout row {r} has inconsistent width")));
            }
            for (c, ch) in row.chars().enumerate() {
                let cell = r * width + c;
                walls.push(ch == '#');
                match ch {
                    '#' | '.' => {}
                    'C' => coins.push(cell),
                    'G' if goal.is_none() => goal = Some(cell),
                    'S' if start.is_none() => start = Some(cell),
                    'G' | 'S' => return Err(Error::Config(format!("layout has more than one `{ch}`"))),
                    other => return Err(Error::Config(format!("unknown layout character `{other}`"))),
                }
            }
        }
        if coins.len() > 64 {
            return Err(Error::Config("layouts support at most 64 coins".into()));
        }
        Ok(Layout {
            width,
            height,
            walls,
            coins,
            goal: goal.ok_or_else(|| Error::Config("layout has no goal `G`".into()))?,
            start: start.ok_or_else(|| Error::Config("layout has no start `S`".into()))?,
        })
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    pub fn is_wall(&self, cell: usize) -> bool {
        self.walls[cell]
    }

    /// Cell reached by `action` from `cell`; walls and the grid edge block.
    pub fn target(&self, cell: usize, action: usize) -> Result<usize> {
        let (r, c) = (cell / self.width, cell % self.width);
        let (nr, nc) = match action {
            UP if r > 0 => (r - 1, c),
            DOWN if r + 1 < self.height => (r + 1, c),
            LEFT if c > 0 => (r, c - 1),
            RIGHT if c + 1 < self.width => (r, c + 1),
            UP | DOWN | LEFT | RIGHT => (r, c),
            other => return Err(Error::Env(format!("gridworld action {other} out of range"))),
        };
        let next = nr * self.width + nc;
        Ok(if self.walls[next] { cell } else { next })
    }

    pub fn initial_state(&self) -> GridState {
        GridState {
            pos: self.start,
            coins_left: if self.coins.is_empty() { 0 } else { u64::MAX >> (64 - self.coins.len()) },
            steps: 0,
        }
    }

    pub fn observe(&self, state: &GridState) -> Vec<f64> {
        let mut x = vec![0.0; self.cells()];
        x[state.pos] = 1.0;
        x
    }
}

/// Agent cell, bitmask of coins still on the board, steps taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridState {
    pub pos: usize,
    pub coins_left: u64,
    pub steps: usize,
}

/// Applies one move. Reward: step penalty, +1 per coin consumed, +10 on
/// reaching the goal (which terminates). Also terminates at `max_len` steps.
pub fn step_layout(layout: &Layout, state: &GridState, action: usize, max_len: usize) -> Result<(GridState, f64, bool)> {
    let pos = layout.target(state.pos, action)?;
    let mut next = GridState {
        pos,
        coins_left: state.coins_left,
        steps: state.steps + 1,
    };
    let mut reward = STEP_PENALTY;
    if let Some(i) = layout.coins.iter().position(|&c| c == pos) {
        if next.coins_left & (1 << i) != 0 {
            next.coins_left &= !(1 << i);
            reward += COIN_REWARD;
        }
    }
    let at_goal = pos == layout.goal;
    if at_goal {
        reward += GOAL_REWARD;
    }
    Ok((next, reward, at_goal || next.steps >= max_len))
}

/// Resolves the layout selected by `context.values[0]`.
pub fn layout_for<'a>(layouts: &'a [Layout], context: &ContextVector) -> Result<&'a Layout> {
    let raw = context
        .values
        .first()
        .copied()
        .ok_or_else(|| Error::Env("gridworld context is empty".into()))?;
    if raw < 0.0 || raw.fract() != 0.0 || raw as usize >= layouts.len() {
        return Err(Error::Env(format!("invalid layout index {raw} ({} layouts)", layouts.len())));
    }
    Ok(&layouts[raw as usize])
}

pub fn step_gridworld(
    layouts: &[Layout],
    state: &GridState,
    action: usize,
    context: &ContextVector,
) -> Result<(GridState, f64, bool)> {
    step_layout(layout_for(layouts, context)?, state, action, MAX_EPISODE_LEN)
}

pub fn builtin_layouts() -> Vec<Layout> {
    BUILTIN_LAYOUTS
        .iter()
        .map(|t| Layout::parse(t).expect("built-in layouts are valid"))
        .collect()
}

/// Loads every `*.txt` layout in `dir`, sorted by file name. All layouts must
/// share one size.
pub fn load_layouts(dir: &Path) -> Result<Vec<Layout>> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    paths.sort();
    let mut layouts = Vec::with_capacity(paths.len());
    for p in &paths {
        let layout = Layout::parse(&fs::read_to_string(p)?)
            .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
        layouts.push(layout);
    }
    check_same_size(&layouts)?;
    Ok(layouts)
}

pub(crate) fn check_same_size(layouts: &[Layout]) -> Result<()> {
    let first = layouts
        .first()
        .ok_or_else(|| Error::Config("no gridworld layouts found".into()))?;
    if layouts.iter().any(|l| l.width != first.width || l.height != first.height) {
        return Err(Error::Config("gridworld layouts must share one size".into()));
    }
    Ok(())
}
