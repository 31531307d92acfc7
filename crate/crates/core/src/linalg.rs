//! Small dense helpers for 3×3 systems.

use crate::error::{Error, Result};
use num_complex::Complex64;

pub type Mat3 = [[f64; 3]; 3];

pub fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Solves `m x = b` by Gaussian elimination with partial pivoting.
pub fn solve_n<const N: usize>(m: &[[f64; N]; N], b: &[f64; N]) -> Result<[f64; N]> {
    let mut a = *m;
    let mut r = *b;
    let scale = a
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0_f64, |s, v| s.max(v.abs()));
    for col in 0..N {
        let piv = (col..N)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[piv][col].abs() <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Singular(format!("pivot {col} vanishes")));
        }
        a.swap(col, piv);
        r.swap(col, piv);
        for row in col + 1..N {
            let f = a[row][col] / a[col][col];
            for k in col..N {
                a[row][k] -= f * a[col][k];
            }
            r[row] -= f * r[col];
        }
    }
    let mut x = [0.0; N];
    for i in (0..N).rev() {
        let s: f64 = (i + 1..N).map(|k| a[i][k] * x[k]).sum();
        x[i] = (r[i] - s) / a[i][i];
    }
    Ok(x)
}

/// Eigenvalues of a real 3×3 matrix, sorted by descending real part
/// (ties broken by descending imaginary part).
pub fn eigenvalues3(m: &Mat3) -> [Complex64; 3] {
    let tr = m[0][0] + m[1][1] + m[2][2];
    let minors = m[0][0] * m[1][1] - m[0][1] * m[1][0] + m[0][0] * m[2][2] - m[0][2] * m[2][0]
        + m[1][1] * m[2][2]
        - m[1][2] * m[2][1];
    let det = det3(m);
    // characteristic polynomial λ³ + a λ² + b λ + c
    let mut ev = cubic_roots(-tr, minors, -det);
    ev.sort_by(|p, q| q.re.total_cmp(&p.re).then(q.im.total_cmp(&p.im)));
    ev
}

/// Roots of λ³ + a λ² + b λ + c with one real root polished by Newton and
/// the remaining quadratic factor solved directly.
pub fn cubic_roots(a: f64, b: f64, c: f64) -> [Complex64; 3] {
    let p = |l: f64| ((l + a) * l + b) * l + c;
    let dp = |l: f64| (3.0 * l + 2.0 * a) * l + b;
    // Cardano for a starting real root
    let q = (a * a - 3.0 * b) / 9.0;
    let r = (2.0 * a * a * a - 9.0 * a * b + 27.0 * c) / 54.0;
    let mut root = if r * r < q * q * q {
        let th = (r / (q * q * q).sqrt()).clamp(-1.0, 1.0).acos();
        -2.0 * q.sqrt() * (th / 3.0).cos() - a / 3.0
    } else {
        let s = -r.signum() * (r.abs() + (r * r - q * q * q).sqrt()).cbrt();
        let t = if s != 0.0 { q / s } else { 0.0 };
        s + t - a / 3.0
    };
    for _ in 0..50 {
        let d = dp(root);
        if d == 0.0 {
            break;
        }
        let step = p(root) / d;
        root -= step;
        if step.abs() <= 1e-16 * root.abs().max(1.0) {
            break;
        }
    }
    // deflate: λ² + e λ + f
    let e = a + root;
    let f = b + e * root;
    let disc = e * e - 4.0 * f;
    let (r2, r3) = if disc >= 0.0 {
        let sgn = if e >= 0.0 { 1.0 } else { -1.0 };
        let big = -0.5 * (e + sgn * disc.sqrt());
        let other = if big != 0.0 { f / big } else { 0.0 };
        (Complex64::new(big, 0.0), Complex64::new(other, 0.0))
    } else {
        let im = 0.5 * (-disc).sqrt();
        (Complex64::new(-0.5 * e, im), Complex64::new(-0.5 * e, -im))
    };
    [Complex64::new(root, 0.0), r2, r3]
}
