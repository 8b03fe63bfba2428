use std::fmt;

/// State of a single occupancy-grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum CellState {
    Free = 0,
    Occupied = 1,
    /// Only valid in agent maps; ground-truth grids never contain it.
    Unknown = 2,
}

/// Integer cell index. Signed so that off-map neighbours (e.g. waypoints
/// past the border) can still be represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Cell {
    pub row: i32,
    pub col: i32,
}

impl Cell {
    pub const fn new(row: i32, col: i32) -> Self {
        Self { row, col }
    }

    pub fn offset(self, action: Action) -> Self {
        Self::new(self.row + action.di as i32, self.col + action.dj as i32)
    }

    /// Euclidean distance between cell centroids, in cell units.
    pub fn distance(self, other: Cell) -> f64 {
        let dr = (self.row - other.row) as f64;
        let dc = (self.col - other.col) as f64;
        (dr * dr + dc * dc).sqrt()
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// A displacement `(di, dj)` with both components in `{-1, 0, 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Action {
    pub di: i8,
    pub dj: i8,
}

impl Action {
    pub const COUNT: usize = 9;

    /// Fixed action ordering, row-major over `(di, dj)`. Every tie-break
    /// in the crate ("lowest action index") refers to this order.
    pub const ALL: [Action; 9] = [
        Action::new(-1, -1),
        Action::new(-1, 0),
        Action::new(-1, 1),
        Action::new(0, -1),
        Action::new(0, 0),
        Action::new(0, 1),
        Action::new(1, -1),
        Action::new(1, 0),
        Action::new(1, 1),
    ];

    pub const NULL: Action = Action::new(0, 0);
    pub const NULL_INDEX: usize = 4;

    pub const fn new(di: i8, dj: i8) -> Self {
        Self { di, dj }
    }

    pub fn index(self) -> usize {
        ((self.di + 1) * 3 + (self.dj + 1)) as usize
    }

    pub fn from_index(index: usize) -> Option<Action> {
        Self::ALL.get(index).copied()
    }

    pub fn is_null(self) -> bool {
        self.di == 0 && self.dj == 0
    }

    pub fn is_diagonal(self) -> bool {
        self.di != 0 && self.dj != 0
    }

    pub fn norm(self) -> f64 {
        ((self.di as f64).powi(2) + (self.dj as f64).powi(2)).sqrt()
    }

    pub fn dot(self, other: Action) -> f64 {
        (self.di as i32 * other.di as i32 + self.dj as i32 * other.dj as i32) as f64
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.di, self.dj)
    }
}

/// Row-major raster of [`CellState`]s.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    height: usize,
    width: usize,
    resolution: f32,
    cells: Vec<CellState>,
}

impl OccupancyGrid {
    pub fn filled(height: usize, width: usize, resolution: f32, state: CellState) -> Self {
        Self {
            height,
            width,
            resolution,
            cells: vec![state; height * width],
        }
    }

    /// Builds a grid from rows of glyphs: `.` free, `#` occupied, `?` unknown.
    /// Handy for tests and fixtures.
    pub fn from_ascii(rows: &[&str]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        let mut cells = Vec::with_capacity(height * width);
        for row in rows {
            assert_eq!(row.chars().count(), width, "ragged ascii grid");
            cells.extend(row.chars().map(|ch| match ch {
                '.' => CellState::Free,
                '#' => CellState::Occupied,
                '?' => CellState::Unknown,
                other => panic!("unexpected glyph {other:?}"),
            }));
        }
        Self {
            height,
            width,
            resolution: 1.0,
            cells,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn resolution(&self) -> f32 {
        self.resolution
    }

    pub fn cells(&self) -> &[CellState] {
        &self.cells
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.row >= 0
            && cell.col >= 0
            && (cell.row as usize) < self.height
            && (cell.col as usize) < self.width
    }

    #[inline]
    fn index(&self, cell: Cell) -> usize {
        debug_assert!(self.in_bounds(cell), "cell {cell} outside {}x{}", self.height, self.width);
        cell.row as usize * self.width + cell.col as usize
    }

    /// State at `cell`, or `None` when it lies outside the map.
    #[inline]
    pub fn get(&self, cell: Cell) -> Option<CellState> {
        if self.in_bounds(cell) {
            Some(self.cells[self.index(cell)])
        } else {
            None
        }
    }

    /// Panics on out-of-bounds access.
    #[inline]
    pub fn state(&self, cell: Cell) -> CellState {
        assert!(self.in_bounds(cell), "cell {cell} outside {}x{}", self.height, self.width);
        self.cells[self.index(cell)]
    }

    #[inline]
    pub fn set(&mut self, cell: Cell, state: CellState) {
        assert!(self.in_bounds(cell), "cell {cell} outside {}x{}", self.height, self.width);
        let idx = self.index(cell);
        self.cells[idx] = state;
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        self.get(cell) == Some(CellState::Free)
    }

    pub fn count(&self, state: CellState) -> usize {
        self.cells.iter().filter(|&&s| s == state).count()
    }

    /// Iterates every in-map cell in row-major order.
    pub fn iter_cells(&self) -> impl Iterator<Item = (Cell, CellState)> + '_ {
        let width = self.width;
        self.cells
            .iter()
            .enumerate()
            .map(move |(idx, &s)| (Cell::new((idx / width) as i32, (idx % width) as i32), s))
    }

    pub fn same_shape(&self, other: &OccupancyGrid) -> bool {
        self.height == other.height && self.width == other.width
    }
}
