//! Closed-form eigen-decomposition of symmetric 3×3 matrices.
//!
//! Eigenvalues come from the trigonometric solution of the characteristic
//! cubic; eigenvectors are built from cross products of the rows of
//! `A − λI`, with the second vector solved in the orthogonal complement of
//! the first so the basis stays orthonormal when eigenvalues nearly repeat.

use nalgebra::{Matrix3, Vector3};

/// Eigenpairs sorted by descending eigenvalue. Each eigenvector is unit
/// length with its largest-magnitude component positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetricEigen3 {
    pub values: [f64; 3],
    pub vectors: [Vector3<f64>; 3],
}

impl SymmetricEigen3 {
    pub fn new(a: &Matrix3<f64>) -> Self {
        let (vals, vecs) = solve(a);
        let mut order = [0usize, 1, 2];
        order.sort_by(|&i, &j| vals[j].total_cmp(&vals[i]));
        Self {
            values: order.map(|i| vals[i]),
            vectors: order.map(|i| canonical_sign(vecs[i])),
        }
    }

    /// `Q Λ Qᵀ`.
    pub fn recompose(&self) -> Matrix3<f64> {
        let mut m = Matrix3::zeros();
        for (l, e) in self.values.iter().zip(&self.vectors) {
            m += e * e.transpose() * *l;
        }
        m
    }
}

fn canonical_sign(v: Vector3<f64>) -> Vector3<f64> {
    let mut k = 0;
    for i in 1..3 {
        if v[i].abs() > v[k].abs() {
            k = i;
        }
    }
    if v[k] < 0.0 {
        -v
    } else {
        v
    }
}

/// Ascending eigenvalues with matching eigenvectors.
fn solve(a: &Matrix3<f64>) -> ([f64; 3], [Vector3<f64>; 3]) {
    let identity = [Vector3::x(), Vector3::y(), Vector3::z()];
    let max_abs = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max_abs == 0.0 {
        return ([0.0; 3], identity);
    }
    if a[(0, 1)] == 0.0 && a[(0, 2)] == 0.0 && a[(1, 2)] == 0.0 {
        return ([a[(0, 0)], a[(1, 1)], a[(2, 2)]], identity);
    }
    let inv = 1.0 / max_abs;
    let (a00, a01, a02) = (a[(0, 0)] * inv, a[(0, 1)] * inv, a[(0, 2)] * inv);
    let (a11, a12, a22) = (a[(1, 1)] * inv, a[(1, 2)] * inv, a[(2, 2)] * inv);

    let norm = a01 * a01 + a02 * a02 + a12 * a12;
    let q = (a00 + a11 + a22) / 3.0;
    let (b00, b11, b22) = (a00 - q, a11 - q, a22 - q);
    let p = ((b00 * b00 + b11 * b11 + b22 * b22 + 2.0 * norm) / 6.0).sqrt();
    if p == 0.0 {
        return ([q * max_abs; 3], identity);
    }

    let c00 = b11 * b22 - a12 * a12;
    let c01 = a01 * b22 - a12 * a02;
    let c02 = a01 * a12 - b11 * a02;
    let det = (b00 * c00 - a01 * c01 + a02 * c02) / (p * p * p);
    let half_det = (0.5 * det).clamp(-1.0, 1.0);
    let angle = half_det.acos() / 3.0;
    const TWO_THIRDS_PI: f64 = 2.094_395_102_393_195_5;
    let beta2 = 2.0 * angle.cos();
    let beta0 = 2.0 * (angle + TWO_THIRDS_PI).cos();
    let beta1 = -(beta0 + beta2);
    let evals = [q + p * beta0, q + p * beta1, q + p * beta2];

    let s = Matrix3::new(a00, a01, a02, a01, a11, a12, a02, a12, a22);
    let mut evecs = [Vector3::zeros(); 3];
    if half_det >= 0.0 {
        evecs[2] = eigenvector_from_rows(&s, evals[2]);
        evecs[1] = eigenvector_in_complement(&s, &evecs[2], evals[1]);
        evecs[0] = evecs[1].cross(&evecs[2]);
    } else {
        evecs[0] = eigenvector_from_rows(&s, evals[0]);
        evecs[1] = eigenvector_in_complement(&s, &evecs[0], evals[1]);
        evecs[2] = evecs[0].cross(&evecs[1]);
    }
    (evals.map(|e| e * max_abs), evecs)
}

/// Eigenvector for a simple eigenvalue: the largest cross product of two
/// rows of `A − λI`.
fn eigenvector_from_rows(a: &Matrix3<f64>, eval: f64) -> Vector3<f64> {
    let r0 = Vector3::new(a[(0, 0)] - eval, a[(0, 1)], a[(0, 2)]);
    let r1 = Vector3::new(a[(0, 1)], a[(1, 1)] - eval, a[(1, 2)]);
    let r2 = Vector3::new(a[(0, 2)], a[(1, 2)], a[(2, 2)] - eval);
    let candidates = [r0.cross(&r1), r0.cross(&r2), r1.cross(&r2)];
    let best = candidates
        .iter()
        .max_by(|x, y| x.norm_squared().total_cmp(&y.norm_squared()))
        .copied()
        .unwrap_or_else(Vector3::zeros);
    let n = best.norm();
    if n > 0.0 {
        best / n
    } else {
        Vector3::x()
    }
}

fn orthogonal_complement(w: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let u = if w.x.abs() > w.y.abs() {
        let inv = 1.0 / (w.x * w.x + w.z * w.z).sqrt();
        Vector3::new(-w.z * inv, 0.0, w.x * inv)
    } else {
        let inv = 1.0 / (w.y * w.y + w.z * w.z).sqrt();
        Vector3::new(0.0, w.z * inv, -w.y * inv)
    };
    (u, w.cross(&u))
}

/// Solves the 2×2 problem restricted to the plane orthogonal to `known`.
fn eigenvector_in_complement(a: &Matrix3<f64>, known: &Vector3<f64>, eval: f64) -> Vector3<f64> {
    let (u, v) = orthogonal_complement(known);
    let au = a * u;
    let av = a * v;
    let mut m00 = u.dot(&au) - eval;
    let mut m01 = u.dot(&av);
    let mut m11 = v.dot(&av) - eval;
    let (abs00, abs01, abs11) = (m00.abs(), m01.abs(), m11.abs());
    if abs00.max(abs01) >= abs11 {
        if abs00.max(abs01) > 0.0 {
            if abs00 >= abs01 {
                m01 /= m00;
                m00 = 1.0 / (1.0 + m01 * m01).sqrt();
                m01 *= m00;
            } else {
                m00 /= m01;
                m01 = 1.0 / (1.0 + m00 * m00).sqrt();
                m00 *= m01;
            }
            u * m01 - v * m00
        } else {
            u
        }
    } else if abs11 > 0.0 {
        if abs11 >= abs01 {
            m01 /= m11;
            m11 = 1.0 / (1.0 + m01 * m01).sqrt();
            m01 *= m11;
        } else {
            m11 /= m01;
            m01 = 1.0 / (1.0 + m11 * m11).sqrt();
            m11 *= m01;
        }
        u * m11 - v * m01
    } else {
        u
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_matrix() {
        let e = SymmetricEigen3::new(&Matrix3::from_diagonal(&Vector3::new(1.0, 3.0, 2.0)));
        assert_eq!(e.values, [3.0, 2.0, 1.0]);
        assert!((e.vectors[0] - Vector3::y()).norm() < 1e-15);
        assert!((e.vectors[2] - Vector3::x()).norm() < 1e-15);
    }

    #[test]
    fn zero_and_scaled_identity() {
        let z = SymmetricEigen3::new(&Matrix3::zeros());
        assert_eq!(z.values, [0.0; 3]);
        let i = SymmetricEigen3::new(&(Matrix3::identity() * 2.5));
        assert_eq!(i.values, [2.5; 3]);
        assert!((i.recompose() - Matrix3::identity() * 2.5).norm() < 1e-15);
    }

    #[test]
    fn repeated_eigenvalue_stays_orthonormal() {
        // eigenvalues 4, 1, 1
        let a = Matrix3::new(2.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 2.0);
        let e = SymmetricEigen3::new(&a);
        assert!((e.values[0] - 4.0).abs() < 1e-12);
        assert!((e.values[1] - 1.0).abs() < 1e-12 && (e.values[2] - 1.0).abs() < 1e-12);
        for i in 0..3 {
            for j in 0..3 {
                let d = e.vectors[i].dot(&e.vectors[j]);
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        assert!((e.recompose() - a).norm() < 1e-12);
    }
}
