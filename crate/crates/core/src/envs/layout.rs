use std::collections::VecDeque;
use std::path::Path;

use crate::error::{LwailError, Result};

/// `(row, col)` grid coordinates; row 0 is the top line of the ASCII layout.
pub type Cell = (usize, usize);

/// Move order shared by the grid action set and BFS tie-breaking.
pub const MOVES: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

/// Point-mass U-maze: start bottom-left, goal top-left, joined on the right.
pub const POINT_UMAZE: &str = "\
#####
#G..#
###.#
#S..#
#####
";

/// Grid U-maze with a 5×5 free interior. A wall juts in from the left so the
/// start and goal corridors are separated.
pub const GRID_UMAZE: &str = "\
#######
#G....#
#.....#
####..#
#.....#
#S....#
#######
";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MazeLayout {
    width: usize,
    height: usize,
    walls: Vec<bool>,
    start: Cell,
    goal: Cell,
}

impl MazeLayout {
    /// Parses `#` wall, `.` free, `S` start, `G` goal, one row per line.
    /// Blank lines are skipped; every row must have the same width.
    pub fn parse(text: &str) -> Result<Self> {
        let mut walls = Vec::new();
        let mut width = None;
        let mut start = None;
        let mut goal = None;
        let mut height = 0;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let w = line.chars().count();
            match width {
                None => width = Some(w),
                Some(prev) if prev != w => {
                    return Err(LwailError::Parse {
                        line: lineno + 1,
                        msg: format!("row width {w} differs from {prev}"),
                    })
                }
                _ => {}
            }
            for (c, ch) in line.chars().enumerate() {
                let cell = (height, c);
                match ch {
                    '#' => walls.push(true),
                    '.' => walls.push(false),
                    'S' | 'G' => {
                        let slot = if ch == 'S' { &mut start } else { &mut goal };
                        if slot.is_some() {
                            return Err(LwailError::Parse {
                                line: lineno + 1,
                                msg: format!("second '{ch}' marker"),
                            });
                        }
                        *slot = Some(cell);
                        walls.push(false);
                    }
                    other => {
                        return Err(LwailError::Parse {
                            line: lineno + 1,
                            msg: format!("unexpected character {other:?} at column {}", c + 1),
                        })
                    }
                }
            }
            height += 1;
        }
        let width = width.ok_or(LwailError::Parse { line: 1, msg: "empty layout".into() })?;
        let start = start.ok_or(LwailError::Parse { line: height, msg: "no 'S' marker".into() })?;
        let goal = goal.ok_or(LwailError::Parse { line: height, msg: "no 'G' marker".into() })?;
        let layout = Self { width, height, walls, start, goal };
        if layout.bfs_distances(start)[layout.index(goal)].is_none() {
            return Err(LwailError::InvalidInput("goal is not reachable from start".into()));
        }
        Ok(layout)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn point_umaze() -> Self {
        Self::parse(POINT_UMAZE).expect("built-in layout parses")
    }

    pub fn grid_umaze() -> Self {
        Self::parse(GRID_UMAZE).expect("built-in layout parses")
    }

    /// Same walls with different start and goal cells.
    pub fn with_endpoints(&self, start: Cell, goal: Cell) -> Result<Self> {
        if self.is_wall(start) || self.is_wall(goal) {
            return Err(LwailError::InvalidInput("start and goal must be free cells".into()));
        }
        let layout = Self { start, goal, ..self.clone() };
        if layout.bfs_distances(start)[layout.index(goal)].is_none() {
            return Err(LwailError::InvalidInput("goal is not reachable from start".into()));
        }
        Ok(layout)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn start(&self) -> Cell {
        self.start
    }

    pub fn goal(&self) -> Cell {
        self.goal
    }

    pub fn index(&self, (r, c): Cell) -> usize {
        r * self.width + c
    }

    /// Out-of-bounds cells count as walls.
    pub fn is_wall(&self, (r, c): Cell) -> bool {
        r >= self.height || c >= self.width || self.walls[r * self.width + c]
    }

    pub fn is_wall_at(&self, r: isize, c: isize) -> bool {
        r < 0 || c < 0 || self.is_wall((r as usize, c as usize))
    }

    /// Free cells in row-major order.
    pub fn free_cells(&self) -> Vec<Cell> {
        (0..self.height)
            .flat_map(|r| (0..self.width).map(move |c| (r, c)))
            .filter(|&cell| !self.is_wall(cell))
            .collect()
    }

    /// Cell reached by move `a`; bumping into a wall stays put.
    pub fn neighbor(&self, (r, c): Cell, a: usize) -> Cell {
        let (dr, dc) = MOVES[a];
        let (nr, nc) = (r as isize + dr, c as isize + dc);
        if self.is_wall_at(nr, nc) {
            (r, c)
        } else {
            (nr as usize, nc as usize)
        }
    }

    /// Shortest move counts from `from`, indexed by [`MazeLayout::index`].
    pub fn bfs_distances(&self, from: Cell) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.width * self.height];
        if self.is_wall(from) {
            return dist;
        }
        dist[self.index(from)] = Some(0);
        let mut queue = VecDeque::from([from]);
        while let Some(cell) = queue.pop_front() {
            let d = dist[self.index(cell)].unwrap();
            for a in 0..MOVES.len() {
                let next = self.neighbor(cell, a);
                if dist[self.index(next)].is_none() {
                    dist[self.index(next)] = Some(d + 1);
                    queue.push_back(next);
                }
            }
        }
        dist
    }

    /// Shortest path `from → to` inclusive of both ends. Ties are broken by
    /// the order of [`MOVES`].
    pub fn shortest_path(&self, from: Cell, to: Cell) -> Option<Vec<Cell>> {
        let to_goal = self.bfs_distances(to);
        let mut d = to_goal[self.index(from)]?;
        let mut path = vec![from];
        let mut cur = from;
        while d > 0 {
            cur = (0..MOVES.len())
                .map(|a| self.neighbor(cur, a))
                .find(|&n| to_goal[self.index(n)] == Some(d - 1))
                .expect("BFS layers are contiguous");
            path.push(cur);
            d -= 1;
        }
        Some(path)
    }

    /// First move of a shortest path towards `to`, or `None` when already there
    /// or unreachable.
    pub fn greedy_move(&self, from: Cell, to: Cell, to_dist: &[Option<usize>]) -> Option<usize> {
        if from == to {
            return None;
        }
        let d = to_dist[self.index(from)]?;
        (0..MOVES.len()).find(|&a| to_dist[self.index(self.neighbor(from, a))] == Some(d - 1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_layouts_parse() {
        let p = MazeLayout::point_umaze();
        assert_eq!((p.width(), p.height()), (5, 5));
        assert_eq!(p.start(), (3, 1));
        assert_eq!(p.goal(), (1, 1));
        assert_eq!(p.free_cells().len(), 7);
        let g = MazeLayout::grid_umaze();
        assert_eq!((g.width(), g.height()), (7, 7));
        assert_eq!(g.free_cells().len(), 22);
    }

    #[test]
    fn point_umaze_distance_goes_around() {
        let p = MazeLayout::point_umaze();
        assert_eq!(p.bfs_distances(p.start())[p.index(p.goal())], Some(6));
    }

    #[test]
    fn ragged_rows_are_rejected_with_line() {
        let err = MazeLayout::parse("###\n#S#G\n").unwrap_err();
        assert!(matches!(err, LwailError::Parse { line: 2, .. }));
    }

    #[test]
    fn unreachable_goal_is_rejected() {
        assert!(MazeLayout::parse("#####\n#S#G#\n#####\n").is_err());
    }

    #[test]
    fn wall_bump_stays() {
        let p = MazeLayout::point_umaze();
        assert_eq!(p.neighbor((3, 1), 0), (3, 1));
        assert_eq!(p.neighbor((3, 1), 3), (3, 2));
    }

    #[test]
    fn shortest_path_length_matches_distance() {
        let g = MazeLayout::grid_umaze();
        let path = g.shortest_path(g.start(), g.goal()).unwrap();
        let d = g.bfs_distances(g.start())[g.index(g.goal())].unwrap();
        assert_eq!(path.len(), d + 1);
        for w in path.windows(2) {
            let (a, b) = (w[0], w[1]);
            assert_eq!(a.0.abs_diff(b.0) + a.1.abs_diff(b.1), 1);
        }
    }
}
