//! Dense 2D grids and the connected-component / morphology helpers shared by
//! the height-map, object-map and change-mask stages.

use std::collections::VecDeque;

/// Row-major 2D grid; cell `(i, j)` lives at `j * nx + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2<T> {
    nx: usize,
    ny: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid2<T> {
    pub fn filled(nx: usize, ny: usize, value: T) -> Self {
        Self {
            nx,
            ny,
            data: vec![value; nx * ny],
        }
    }
}

impl<T> Grid2<T> {
    pub fn from_vec(nx: usize, ny: usize, data: Vec<T>) -> Option<Self> {
        (data.len() == nx * ny).then_some(Self { nx, ny, data })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    pub fn get(&self, i: isize, j: isize) -> Option<&T> {
        if i < 0 || j < 0 || i as usize >= self.nx || j as usize >= self.ny {
            None
        } else {
            Some(&self.data[j as usize * self.nx + i as usize])
        }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid2<U> {
        Grid2 {
            nx: self.nx,
            ny: self.ny,
            data: self.data.iter().map(f).collect(),
        }
    }

    /// In-bounds 8-neighbours of cell `idx`.
    pub fn neighbors8(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let (i, j) = self.coords(idx);
        let (i, j) = (i as isize, j as isize);
        (-1isize..=1)
            .flat_map(move |dj| (-1isize..=1).map(move |di| (di, dj)))
            .filter(|&(di, dj)| di != 0 || dj != 0)
            .filter_map(move |(di, dj)| {
                let (a, b) = (i + di, j + dj);
                (a >= 0 && b >= 0 && (a as usize) < self.nx && (b as usize) < self.ny)
                    .then(|| b as usize * self.nx + a as usize)
            })
    }
}

impl<T> std::ops::Index<(usize, usize)> for Grid2<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[j * self.nx + i]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Grid2<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[j * self.nx + i]
    }
}

/// 8-connected component labeling of the cells where `mask` is true.
///
/// Labels start at 1 and are assigned in row-major order of each component's
/// first cell; background cells get 0. Returns the label grid and the number
/// of components.
pub fn label_components(mask: &Grid2<bool>) -> (Grid2<u32>, u32) {
    let mut labels = Grid2::filled(mask.nx(), mask.ny(), 0u32);
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..mask.len() {
        if !mask.as_slice()[start] || labels.as_slice()[start] != 0 {
            continue;
        }
        next += 1;
        labels.as_mut_slice()[start] = next;
        queue.push_back(start);
        while let Some(idx) = queue.pop_front() {
            for nb in mask.neighbors8(idx) {
                if mask.as_slice()[nb] && labels.as_slice()[nb] == 0 {
                    labels.as_mut_slice()[nb] = next;
                    queue.push_back(nb);
                }
            }
        }
    }
    (labels, next)
}

/// Cell indices of every component, indexed by `label - 1`.
pub fn component_cells(labels: &Grid2<u32>, count: u32) -> Vec<Vec<usize>> {
    let mut cells = vec![Vec::new(); count as usize];
    for (idx, &l) in labels.as_slice().iter().enumerate() {
        if l > 0 {
            cells[l as usize - 1].push(idx);
        }
    }
    cells
}

/// Binary dilation with a `(2r+1)²` square structuring element.
pub fn dilate_square(mask: &Grid2<bool>, radius: usize) -> Grid2<bool> {
    if radius == 0 {
        return mask.clone();
    }
    let (nx, ny) = (mask.nx(), mask.ny());
    let r = radius as isize;
    // Separable: rows, then columns.
    let mut rows = Grid2::filled(nx, ny, false);
    for j in 0..ny {
        for i in 0..nx {
            if mask[(i, j)] {
                let lo = (i as isize - r).max(0) as usize;
                let hi = ((i as isize + r) as usize).min(nx - 1);
                for a in lo..=hi {
                    rows[(a, j)] = true;
                }
            }
        }
    }
    let mut out = Grid2::filled(nx, ny, false);
    for j in 0..ny {
        for i in 0..nx {
            if rows[(i, j)] {
                let lo = (j as isize - r).max(0) as usize;
                let hi = ((j as isize + r) as usize).min(ny - 1);
                for b in lo..=hi {
                    out[(i, b)] = true;
                }
            }
        }
    }
    out
}
