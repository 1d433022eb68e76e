use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Point3;

use super::PointCloud;
use crate::error::{Error, Result};

struct Element {
    name: String,
    count: usize,
    properties: Vec<String>,
}

/// Parses an ASCII PLY document; returns the vertex positions, colors when
/// `red green blue` are present, and labels when a `label` property exists.
pub(super) fn parse(text: &str, path: &Path) -> Result<(PointCloud, Option<Vec<u32>>)> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let err = |line: usize, msg: &str| Error::parse(path, line, msg);

    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(err(1, "missing `ply` magic line")),
    }

    let mut elements: Vec<Element> = Vec::new();
    let mut header_end = None;
    for (n, line) in lines.by_ref() {
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                if tok.next() != Some("ascii") {
                    return Err(err(n, "only `format ascii 1.0` is supported"));
                }
            }
            Some("comment") | Some("obj_info") | None => {}
            Some("element") => {
                let name = tok.next().ok_or_else(|| err(n, "element without name"))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| err(n, "element count is not an integer"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| err(n, "property before any element"))?;
                let name = tok.last().ok_or_else(|| err(n, "property without name"))?;
                el.properties.push(name.to_string());
            }
            Some("end_header") => {
                header_end = Some(n);
                break;
            }
            Some(other) => return Err(err(n, &format!("unexpected header keyword `{other}`"))),
        }
    }
    let mut last_line = header_end.ok_or_else(|| err(text.lines().count().max(1), "missing end_header"))?;

    let mut cloud = PointCloud::default();
    let mut labels = None;
    for el in &elements {
        if el.name != "vertex" {
            for _ in 0..el.count {
                last_line = lines
                    .next()
                    .ok_or_else(|| err(last_line + 1, &format!("truncated `{}` element", el.name)))?
                    .0;
            }
            continue;
        }
        let find = |name: &str| el.properties.iter().position(|p| p == name);
        let (ix, iy, iz) = match (find("x"), find("y"), find("z")) {
            (Some(x), Some(y), Some(z)) => (x, y, z),
            _ => return Err(err(1, "vertex element lacks x/y/z properties")),
        };
        let rgb = match (find("red"), find("green"), find("blue")) {
            (Some(r), Some(g), Some(b)) => Some([r, g, b]),
            _ => None,
        };
        let label_idx = find("label");

        cloud.points.reserve(el.count);
        let mut colors = rgb.map(|_| Vec::with_capacity(el.count));
        let mut lbl = label_idx.map(|_| Vec::with_capacity(el.count));
        let mut values = Vec::with_capacity(el.properties.len());
        for k in 0..el.count {
            let (n, line) = lines.next().ok_or_else(|| {
                err(
                    last_line + 1,
                    &format!("expected {} vertices, found {k}", el.count),
                )
            })?;
            last_line = n;
            values.clear();
            for t in line.split_whitespace() {
                values.push(
                    t.parse::<f64>()
                        .map_err(|_| err(n, &format!("non-numeric field `{t}`")))?,
                );
            }
            if values.len() != el.properties.len() {
                return Err(err(
                    n,
                    &format!(
                        "expected {} fields, found {}",
                        el.properties.len(),
                        values.len()
                    ),
                ));
            }
            let p = Point3::new(values[ix], values[iy], values[iz]);
            if !p.iter().all(|c| c.is_finite()) {
                return Err(err(n, "non-finite coordinate"));
            }
            cloud.points.push(p);
            if let (Some(c), Some([r, g, b])) = (colors.as_mut(), rgb) {
                c.push([to_u8(values[r]), to_u8(values[g]), to_u8(values[b])]);
            }
            if let (Some(l), Some(li)) = (lbl.as_mut(), label_idx) {
                if values[li] < 0.0 || values[li].fract() != 0.0 {
                    return Err(err(n, "label must be a non-negative integer"));
                }
                l.push(values[li] as u32);
            }
        }
        cloud.colors = colors;
        labels = lbl;
    }
    if !elements.iter().any(|e| e.name == "vertex") {
        return Err(err(header_end.unwrap_or(1), "no vertex element"));
    }
    Ok((cloud, labels))
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

pub(super) fn format(cloud: &PointCloud, labels: Option<&[u32]>) -> String {
    let mut out = String::with_capacity(64 + cloud.len() * 40);
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", cloud.len());
    out.push_str("property float x\nproperty float y\nproperty float z\n");
    if cloud.colors.is_some() {
        out.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    if labels.is_some() {
        out.push_str("property int label\n");
    }
    out.push_str("end_header\n");
    for (i, p) in cloud.points.iter().enumerate() {
        let _ = write!(out, "{:.6} {:.6} {:.6}", p.x, p.y, p.z);
        if let Some(c) = &cloud.colors {
            let [r, g, b] = c[i];
            let _ = write!(out, " {r} {g} {b}");
        }
        if let Some(l) = labels {
            let _ = write!(out, " {}", l[i]);
        }
        out.push('\n');
    }
    out
}
