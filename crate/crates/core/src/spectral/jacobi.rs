//! Cyclic Jacobi rotations for dense real symmetric matrices.

/// Result of a converged Jacobi run: unsorted eigenvalues and the matching
/// eigenvectors stored one per row (`vectors[k*n..(k+1)*n]`).
#[derive(Debug, Clone)]
pub struct JacobiOutput {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
    pub sweeps: usize,
}

/// Failure to reach the off-diagonal tolerance within the sweep cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobiStall {
    pub sweeps: usize,
    pub worst_off_diagonal: f64,
}

/// Maximum number of full cyclic sweeps.
pub const MAX_SWEEPS: usize = 60;

/// Convergence target on the off-diagonal Frobenius norm, relative to the
/// Frobenius norm of the input.
pub const OFF_TOLERANCE: f64 = 1e-15;

/// Diagonalizes the row-major symmetric `n x n` matrix `a` (consumed).
///
/// Only the symmetric part is meaningful; the caller guarantees symmetry.
pub fn jacobi_eigen(mut a: Vec<f64>, n: usize) -> Result<JacobiOutput, JacobiStall> {
    assert_eq!(a.len(), n * n, "matrix storage does not match n");
    // rows of `v` are the eigenvectors
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let fro = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n <= 1 || fro == 0.0 {
        let values = (0..n).map(|i| a[i * n + i]).collect();
        return Ok(JacobiOutput { values, vectors: v, sweeps: 0 });
    }
    let target = OFF_TOLERANCE * fro;
    let negligible = 1e-3 * f64::EPSILON * target;

    let mut sweeps = 0;
    loop {
        let off = off_norm(&a, n);
        if off <= target {
            break;
        }
        if sweeps == MAX_SWEEPS {
            return Err(JacobiStall { sweeps, worst_off_diagonal: worst_off(&a, n) });
        }
        sweeps += 1;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() <= negligible {
                    continue;
                }
                rotate(&mut a, &mut v, n, p, q);
            }
        }
    }
    let values = (0..n).map(|i| a[i * n + i]).collect();
    Ok(JacobiOutput { values, vectors: v, sweeps })
}

fn off_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for p in 0..n {
        for q in p + 1..n {
            s += a[p * n + q] * a[p * n + q];
        }
    }
    (2.0 * s).sqrt()
}

fn worst_off(a: &[f64], n: usize) -> f64 {
    let mut w = 0.0_f64;
    for p in 0..n {
        for q in p + 1..n {
            w = w.max(a[p * n + q].abs());
        }
    }
    w
}

/// One plane rotation annihilating `a[p][q]` (Rutishauser's update).
fn rotate(a: &mut [f64], v: &mut [f64], n: usize, p: usize, q: usize) {
    let apq = a[p * n + q];
    let app = a[p * n + p];
    let aqq = a[q * n + q];
    let theta = (aqq - app) / (2.0 * apq);
    let t = if theta.is_infinite() {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let tau = s / (1.0 + c);

    a[p * n + p] = app - t * apq;
    a[q * n + q] = aqq + t * apq;
    a[p * n + q] = 0.0;
    a[q * n + p] = 0.0;

    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = a[p * n + k];
        let akq = a[q * n + k];
        let new_p = akp - s * (akq + tau * akp);
        let new_q = akq + s * (akp - tau * akq);
        a[p * n + k] = new_p;
        a[k * n + p] = new_p;
        a[q * n + k] = new_q;
        a[k * n + q] = new_q;
    }
    for k in 0..n {
        let vp = v[p * n + k];
        let vq = v[q * n + k];
        v[p * n + k] = vp - s * (vq + tau * vp);
        v[q * n + k] = vq + s * (vp - tau * vq);
    }
}
