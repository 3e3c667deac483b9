//! Small dense linear-algebra helpers shared by the geometry stack.
//!
//! Everything here is desk scale (n <= 8 or so); clarity over speed.

use nalgebra::{DMatrix, DVector};

/// Eigenvalue-sign counts (neg, zero, pos) of a symmetric matrix, with the
/// zero band set by `tol` relative to the largest absolute eigenvalue.
pub fn inertia(m: &DMatrix<f64>, tol: f64) -> (usize, usize, usize) {
    let ev = m.clone().symmetric_eigenvalues();
    let scale = ev.amax().max(f64::MIN_POSITIVE);
    let (mut neg, mut zero, mut pos) = (0, 0, 0);
    for &l in ev.iter() {
        if l < -tol * scale {
            neg += 1;
        } else if l > tol * scale {
            pos += 1;
        } else {
            zero += 1;
        }
    }
    (neg, zero, pos)
}

/// Numerical rank from singular values, threshold relative to the largest.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = m.clone().singular_values();
    let top = sv.max();
    if top <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}

/// v^T m w.
pub fn bilinear(m: &DMatrix<f64>, v: &DVector<f64>, w: &DVector<f64>) -> f64 {
    (m * w).dot(v)
}

/// Positive proxy sum_ij |m_ij||v_i||w_j|, the scale against which
/// near-null causal character is judged.
pub fn abs_bilinear(m: &DMatrix<f64>, v: &DVector<f64>, w: &DVector<f64>) -> f64 {
    let n = v.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += m[(i, j)].abs() * v[i].abs() * w[j].abs();
        }
    }
    s
}
