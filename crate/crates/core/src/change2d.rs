//! Height-map differencing, mask denoising and changed-blob candidates.

use nalgebra::{Isometry3, Point3};

use crate::error::{Error, Result};
use crate::grid::{dilate_square, label_components, component_cells, Grid2};
use crate::planesdf::{grid_csv, write_pgm, HeightMap, ObjectMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellState {
    Unknown,
    Unchanged,
    Changed,
}

/// Ternary mask over the source height map.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeMask {
    pub cells: Grid2<CellState>,
}

impl ChangeMask {
    pub fn filled(nx: usize, ny: usize, state: CellState) -> Self {
        Self {
            cells: Grid2::filled(nx, ny, state),
        }
    }

    pub fn count(&self, state: CellState) -> usize {
        self.cells.as_slice().iter().filter(|&&s| s == state).count()
    }

    pub fn changed_cells(&self) -> Vec<usize> {
        self.indices(CellState::Changed)
    }

    fn indices(&self, state: CellState) -> Vec<usize> {
        self.cells
            .as_slice()
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == state)
            .map(|(i, _)| i)
            .collect()
    }

    /// unknown = 0, unchanged = 128, changed = 255.
    pub fn to_pgm(&self) -> Vec<u8> {
        let px: Vec<u8> = self
            .cells
            .as_slice()
            .iter()
            .map(|s| match s {
                CellState::Unknown => 0,
                CellState::Unchanged => 128,
                CellState::Changed => 255,
            })
            .collect();
        write_pgm(self.cells.nx(), self.cells.ny(), &px)
    }

    /// `-1` unknown, `0` unchanged, `1` changed.
    pub fn to_csv(&self) -> String {
        grid_csv(&self.cells, |st, out| {
            out.push_str(match st {
                CellState::Unknown => "-1",
                CellState::Unchanged => "0",
                CellState::Changed => "1",
            })
        })
    }
}

/// Source-cell comparison against the 2×2 block of target cells at
/// `(⌊x'⌋ + i, ⌊y'⌋ + j)`, where `(x', y')` is the projected cell center in
/// target cell units (cell centers at integers).
///
/// A source cell is changed if every usable neighbor differs by more than
/// `delta_h`, unchanged if at least one is within `delta_h`, and unknown if
/// no neighbor is usable (outside the grid or unobserved) or the source cell
/// itself is unobserved.
pub fn compare_height_maps(
    src: &HeightMap,
    tgt: &HeightMap,
    transform: &Isometry3<f64>,
    delta_h: f64,
) -> Result<ChangeMask> {
    if (src.cell_size() - tgt.cell_size()).abs() > 1e-12 * src.cell_size().max(tgt.cell_size()) {
        return Err(Error::Validation(format!(
            "height map cell sizes differ: {} vs {}",
            src.cell_size(),
            tgt.cell_size()
        )));
    }
    if !(src.cell_size() > 0.0) {
        return Err(Error::Validation("height map cell size must be positive".into()));
    }
    let cs = tgt.cell_size();
    let mut out = ChangeMask::filled(src.nx(), src.ny(), CellState::Unknown);
    for j in 0..src.ny() {
        for i in 0..src.nx() {
            let h = src.cells()[(i, j)];
            if h < 0.0 {
                continue;
            }
            let c = src.cell_center(i, j);
            let p = transform * Point3::new(c[0], c[1], 0.0);
            let x = snap((p.x - tgt.origin()[0]) / cs - 0.5);
            let y = snap((p.y - tgt.origin()[1]) / cs - 0.5);
            let (x0, y0) = (x.floor() as isize, y.floor() as isize);
            let mut usable = 0;
            let mut close = 0;
            for (di, dj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                if let Some(ht) = tgt.value(x0 + di, y0 + dj) {
                    if ht >= 0.0 {
                        usable += 1;
                        if (ht - h).abs() <= delta_h {
                            close += 1;
                        }
                    }
                }
            }
            out.cells[(i, j)] = match (usable, close) {
                (0, _) => CellState::Unknown,
                (_, 0) => CellState::Changed,
                _ => CellState::Unchanged,
            };
        }
    }
    Ok(out)
}

/// Removes float noise from a projected coordinate that should be integral.
fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r
    } else {
        x
    }
}

/// Drops changed clusters below `min_cluster_cells`, then grows the rest by
/// a square of the given radius. Unknown cells are never overwritten.
pub fn denoise_mask(mask: &ChangeMask, min_cluster_cells: usize, dilation_radius: usize) -> ChangeMask {
    let changed = mask.cells.map(|&s| s == CellState::Changed);
    let (labels, count) = label_components(&changed);
    let mut keep = Grid2::filled(changed.nx(), changed.ny(), false);
    for cells in component_cells(&labels, count) {
        if cells.len() >= min_cluster_cells {
            for c in cells {
                keep.as_mut_slice()[c] = true;
            }
        }
    }
    let grown = dilate_square(&keep, dilation_radius);
    let mut out = mask.clone();
    for (idx, s) in out.cells.as_mut_slice().iter_mut().enumerate() {
        if *s == CellState::Unknown {
            continue;
        }
        *s = if grown.as_slice()[idx] {
            CellState::Changed
        } else {
            CellState::Unchanged
        };
    }
    out
}

/// A region forwarded to 3D validation.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobCandidate {
    /// Object-map label, or `None` for a cluster of changed cells lying on
    /// no blob.
    pub blob: Option<u32>,
    /// Changed cells inside the region.
    pub changed: Vec<usize>,
    /// Cells the verdict applies to: the blob plus its claimed halo, or the
    /// cluster itself.
    pub footprint: Vec<usize>,
    pub overlap: f64,
}

/// One candidate per blob with `|changed ∩ blob| / |blob| ≥ min_overlap`,
/// followed by one candidate per 8-connected cluster of the remaining
/// changed cells that lie on no blob.
///
/// A blob candidate's footprint also claims the off-blob changed cells
/// within `halo` cells of the blob (the ring left by dilating its changes),
/// so the blob's verdict decides them too.
pub fn extract_candidates(
    mask: &ChangeMask,
    objects: &ObjectMap,
    min_overlap: f64,
    halo: usize,
) -> Result<Vec<BlobCandidate>> {
    if mask.cells.nx() != objects.labels.nx() || mask.cells.ny() != objects.labels.ny() {
        return Err(Error::Validation("change mask and object map shapes differ".into()));
    }
    let (nx, ny) = (mask.cells.nx(), mask.cells.ny());
    let is_changed = |c: usize| mask.cells.as_slice()[c] == CellState::Changed;
    let mut free: Vec<bool> = (0..mask.cells.len())
        .map(|c| is_changed(c) && objects.labels.as_slice()[c] == 0)
        .collect();
    let mut out = Vec::new();
    for blob in &objects.blobs {
        let changed: Vec<usize> = blob.cells.iter().copied().filter(|&c| is_changed(c)).collect();
        let overlap = changed.len() as f64 / blob.cells.len() as f64;
        if changed.is_empty() || overlap < min_overlap {
            continue;
        }
        let mut footprint = blob.cells.clone();
        if halo > 0 {
            let mut own = Grid2::filled(nx, ny, false);
            for &c in &blob.cells {
                own.as_mut_slice()[c] = true;
            }
            for (c, near) in dilate_square(&own, halo).as_slice().iter().enumerate() {
                if *near && free[c] {
                    free[c] = false;
                    footprint.push(c);
                }
            }
            footprint.sort_unstable();
        }
        out.push(BlobCandidate {
            blob: Some(blob.label),
            changed,
            footprint,
            overlap,
        });
    }
    let free = Grid2::from_vec(nx, ny, free).expect("shape checked");
    let (labels, count) = label_components(&free);
    for cells in component_cells(&labels, count) {
        out.push(BlobCandidate {
            blob: None,
            changed: cells.clone(),
            footprint: cells,
            overlap: 1.0,
        });
    }
    Ok(out)
}
