use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Point3;

use super::PointCloud;
use crate::error::{Error, Result};

/// `x,y,z[,r,g,b]` per line; `#` starts a comment, blank lines are skipped.
/// Either every point has a color or none does.
pub(super) fn parse(text: &str, path: &Path) -> Result<PointCloud> {
    let mut points = Vec::new();
    let mut colors: Vec<[u8; 3]> = Vec::new();
    let mut has_color = None;
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let colored = match fields.len() {
            3 => false,
            6 => true,
            k => return Err(Error::parse(path, n, format!("expected 3 or 6 fields, found {k}"))),
        };
        if *has_color.get_or_insert(colored) != colored {
            return Err(Error::parse(path, n, "mixed colored and uncolored rows"));
        }
        let mut v = [0.0f64; 6];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f
                .parse()
                .map_err(|_| Error::parse(path, n, format!("non-numeric field `{f}`")))?;
        }
        if !v[..3].iter().all(|c| c.is_finite()) {
            return Err(Error::parse(path, n, "non-finite coordinate"));
        }
        points.push(Point3::new(v[0], v[1], v[2]));
        if colored {
            colors.push([v[3], v[4], v[5]].map(|c| c.round().clamp(0.0, 255.0) as u8));
        }
    }
    Ok(PointCloud {
        points,
        colors: (has_color == Some(true)).then_some(colors),
    })
}

pub(super) fn format(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(cloud.len() * 40);
    for (i, p) in cloud.points.iter().enumerate() {
        let _ = write!(out, "{:.6},{:.6},{:.6}", p.x, p.y, p.z);
        if let Some(c) = &cloud.colors {
            let [r, g, b] = c[i];
            let _ = write!(out, ",{r},{g},{b}");
        }
        out.push('\n');
    }
    out
}
