use std::fmt::Write as _;
use std::io::{Read, Write};

use nalgebra::Vector3;

use super::{HeightMap, SdfVolume};
use crate::error::{Error, Result};
use crate::geometry::PlanePose;
use crate::grid::Grid2;

const MAGIC: &[u8; 8] = b"PSDFVOL\0";
const VERSION: u32 = 1;

/// One CSV row per grid row `j`, cells in increasing `i`.
pub fn height_map_csv(map: &HeightMap) -> String {
    grid_csv(map.cells(), |h, s| {
        if *h < 0.0 {
            s.push_str("-1");
        } else {
            let _ = write!(s, "{h:.6}");
        }
    })
}

pub fn label_grid_csv(labels: &Grid2<u32>) -> String {
    grid_csv(labels, |l, s| {
        let _ = write!(s, "{l}");
    })
}

pub(crate) fn grid_csv<T>(grid: &Grid2<T>, mut cell: impl FnMut(&T, &mut String)) -> String {
    let mut s = String::new();
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            if i > 0 {
                s.push(',');
            }
            cell(&grid[(i, j)], &mut s);
        }
        s.push('\n');
    }
    s
}

/// 8-bit map: unobserved is 0, heights in `[0, band]` scale to 1..=255.
pub fn height_map_pgm(map: &HeightMap, band: f64) -> Vec<u8> {
    let bytes = map
        .cells()
        .as_slice()
        .iter()
        .map(|&h| {
            if h < 0.0 {
                0
            } else {
                (1.0 + (h / band).clamp(0.0, 1.0) * 254.0).round() as u8
            }
        })
        .collect::<Vec<_>>();
    write_pgm(map.nx(), map.ny(), &bytes)
}

/// Binary (P5) PGM; row `j = 0` is the first image row.
pub fn write_pgm(nx: usize, ny: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{nx} {ny}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Serializes a volume and its plane pose.
///
/// Layout, little-endian: magic, `u32` version, 3 × `u32` dims, `f64` voxel
/// size, 3 × `f64` origin, 3 × `f64` normal, `f64` offset, `f64` truncation,
/// `f64` occupancy threshold, `f64` plane clearance, then `nx·ny·nz` `f32`
/// distances followed by as many `f32` weights.
pub fn write_volume(volume: &SdfVolume, pose: &PlanePose, mut w: impl Write) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for d in volume.dims() {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    let mut header = vec![volume.voxel_size()];
    header.extend(volume.origin());
    header.extend(pose.normal.iter());
    header.extend([
        pose.offset,
        volume.truncation(),
        volume.occupancy_threshold(),
        volume.plane_clearance(),
    ]);
    for x in header {
        w.write_all(&x.to_le_bytes())?;
    }
    let mut body = Vec::with_capacity(volume.len() * 8);
    for &phi in volume.phi_raw() {
        body.extend_from_slice(&(phi as f32).to_le_bytes());
    }
    for &wt in volume.weight_raw() {
        body.extend_from_slice(&wt.to_le_bytes());
    }
    w.write_all(&body)
}

/// Inverse of [`write_volume`]. Distances come back at `f32` precision.
pub fn read_volume(mut r: impl Read) -> Result<(SdfVolume, PlanePose)> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)
        .map_err(|e| Error::io("<volume>", e))?;
    let mut cur = Cursor { buf: &buf, pos: 0 };
    if cur.take(8)? != MAGIC {
        return Err(Error::Validation("not a volume file (bad magic)".into()));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::Validation(format!("unsupported volume version {version}")));
    }
    let dims = [cur.u32()? as usize, cur.u32()? as usize, cur.u32()? as usize];
    let voxel_size = cur.f64()?;
    let origin = [cur.f64()?, cur.f64()?, cur.f64()?];
    let normal = Vector3::new(cur.f64()?, cur.f64()?, cur.f64()?);
    let offset = cur.f64()?;
    let truncation = cur.f64()?;
    let occupancy = cur.f64()?;
    let clearance = cur.f64()?;
    let n = dims[0]
        .checked_mul(dims[1])
        .and_then(|x| x.checked_mul(dims[2]))
        .ok_or_else(|| Error::Validation("volume dims overflow".into()))?;
    let mut vol = SdfVolume::empty(origin, voxel_size, dims, truncation).with_occupancy(occupancy, clearance);
    let mut phi = Vec::with_capacity(n);
    for _ in 0..n {
        phi.push(cur.f32()? as f64);
    }
    for (idx, p) in phi.into_iter().enumerate() {
        let w = cur.f32()?;
        vol.weight[idx] = w;
        vol.phi[idx] = if w > 0.0 { p } else { f64::NAN };
    }
    if cur.pos != buf.len() {
        return Err(Error::Validation("trailing bytes after volume body".into()));
    }
    Ok((vol, PlanePose::new(normal, offset)))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.buf.len() {
            return Err(Error::Validation("truncated volume file".into()));
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
