//! Smoothing preconditioner for vertex updates: `u = (I + λL)⁻² g`.
//!
//! Solved as two sequential systems `(I + λL) y = g`, `(I + λL) u = y`, each
//! by Jacobi-preconditioned conjugate gradients, independently per
//! coordinate.

use crate::error::{Error, Result};
use crate::geometry::UniformLaplacian;
use crate::math::Vec3;

/// Relative residual each of the two inner solves is driven to.
pub const CG_TOLERANCE: f64 = 1e-10;

fn apply_a(l: &UniformLaplacian, lambda: f64, x: &[f64]) -> Vec<f64> {
    l.apply(x).iter().zip(x).map(|(lx, &xi)| xi + lambda * lx).collect()
}

/// Solve `(I + λL) x = b` by Jacobi-preconditioned CG.
pub fn solve_shifted(l: &UniformLaplacian, lambda: f64, b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if lambda == 0.0 || b_norm == 0.0 {
        return Ok(b.to_vec());
    }
    let inv_diag: Vec<f64> = (0..n).map(|i| 1.0 / (1.0 + lambda * l.degree(i) as f64)).collect();
    let mut x: Vec<f64> = b.iter().zip(&inv_diag).map(|(b, d)| b * d).collect();
    let ax = apply_a(l, lambda, &x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let max_iter = 10 * n.max(1);
    let mut res = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    for _ in 0..max_iter {
        if res <= CG_TOLERANCE * b_norm {
            return Ok(x);
        }
        let ap = apply_a(l, lambda, &p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if res <= CG_TOLERANCE * b_norm {
        Ok(x)
    } else {
        Err(Error::SolverDiverged { iterations: max_iter, residual: res / b_norm })
    }
}

/// `u = (I + λL)⁻² g` for one scalar field.
pub fn precondition_scalar(l: &UniformLaplacian, lambda: f64, g: &[f64]) -> Result<Vec<f64>> {
    let y = solve_shifted(l, lambda, g)?;
    solve_shifted(l, lambda, &y)
}

/// `u = (I + λL)⁻² g` applied per coordinate.
pub fn precondition(l: &UniformLaplacian, lambda: f64, g: &[Vec3]) -> Result<Vec<Vec3>> {
    if lambda == 0.0 {
        return Ok(g.to_vec());
    }
    let mut out = vec![Vec3::ZERO; g.len()];
    for axis in 0..3 {
        let comp: Vec<f64> = g.iter().map(|v| v[axis]).collect();
        let u = precondition_scalar(l, lambda, &comp)?;
        for (o, u) in out.iter_mut().zip(u) {
            match axis {
                0 => o.x = u,
                1 => o.y = u,
                _ => o.z = u,
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives;

    #[test]
    fn lambda_zero_is_identity() {
        let l = UniformLaplacian::build(&primitives::icosphere(1, 1.0));
        let g: Vec<Vec3> = (0..l.len()).map(|i| Vec3::new(i as f64, -(i as f64), 0.5)).collect();
        assert_eq!(precondition(&l, 0.0, &g).unwrap(), g);
    }

    #[test]
    fn constants_pass_through() {
        let l = UniformLaplacian::build(&primitives::icosphere(1, 1.0));
        let g = vec![Vec3::new(0.3, -1.0, 2.0); l.len()];
        for u in precondition(&l, 19.0, &g).unwrap() {
            assert!((u - Vec3::new(0.3, -1.0, 2.0)).length() < 1e-9);
        }
    }
}
