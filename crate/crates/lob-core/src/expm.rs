//! Dense matrix exponential by scaling-and-squaring with a fixed
//! degree-13 Pade approximant.
//!
//! Reference path for operator-level checks on small truncations (a few
//! hundred states); not tuned for large matrices.

use nalgebra::DMatrix;

/// Maximum absolute column sum.
pub fn one_norm(a: &DMatrix<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Maximum absolute row sum: the operator norm on sup-norm function space.
pub fn sup_operator_norm(a: &DMatrix<f64>) -> f64 {
    (0..a.nrows())
        .map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// `exp(a)` for a square matrix.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), a.ncols(), "matrix exponential needs a square matrix");
    let n = a.nrows();
    let theta13 = 5.371920351148152;
    let norm = one_norm(a);
    let s = if norm <= theta13 { 0 } else { (norm / theta13).log2().ceil() as i32 };
    let a = a / 2f64.powi(s);

    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let b = &PADE13;
    let u_inner = &a6 * (b[13] * &a6 + b[11] * &a4 + b[9] * &a2) + b[7] * &a6 + b[5] * &a4 + b[3] * &a2 + b[1] * &id;
    let u = &a * u_inner;
    let v = &a6 * (b[12] * &a6 + b[10] * &a4 + b[8] * &a2) + b[6] * &a6 + b[4] * &a4 + b[2] * &a2 + b[0] * &id;

    let lhs = &v - &u;
    let rhs = &v + &u;
    let mut r = lhs.lu().solve(&rhs).expect("Pade denominator is invertible");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let z = DMatrix::<f64>::zeros(4, 4);
        assert_eq!(max_abs_diff(&expm(&z), &DMatrix::identity(4, 4)), 0.0);
    }

    #[test]
    fn diagonal_and_nilpotent() {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, 0.5, 3.0]));
        let e = expm(&d);
        for (i, &x) in [-1.0f64, 0.5, 3.0].iter().enumerate() {
            assert!((e[(i, i)] - x.exp()).abs() < 1e-12);
        }
        let n = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e = expm(&n);
        let want = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(max_abs_diff(&e, &want) < 1e-14);
    }

    #[test]
    fn rotation_block() {
        let t = 0.7f64;
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -t, t, 0.0]);
        let e = expm(&a);
        let want = DMatrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()]);
        assert!(max_abs_diff(&e, &want) < 1e-14);
    }

    #[test]
    fn agrees_with_taylor_series_after_scaling() {
        // pseudo-random entries, norm pushed past the scaling threshold
        let mut vals = Vec::new();
        let mut x = 0.37f64;
        for _ in 0..36 {
            x = (x * 997.0 + 0.1).fract();
            vals.push(3.0 * (x - 0.5));
        }
        let a = DMatrix::from_vec(6, 6, vals) * 4.0;
        let mut taylor = DMatrix::<f64>::identity(6, 6);
        let mut term = DMatrix::<f64>::identity(6, 6);
        for k in 1..120 {
            term = &term * &a / k as f64;
            taylor += &term;
        }
        let rel = max_abs_diff(&expm(&a), &taylor) / one_norm(&taylor);
        assert!(rel < 1e-12, "relative error {}", rel);
    }

    #[test]
    fn generator_exponential_is_stochastic() {
        // 3-state chain generator: rows sum to zero
        let l = DMatrix::from_row_slice(3, 3, &[-2.0, 1.5, 0.5, 0.3, -0.3, 0.0, 0.0, 2.0, -2.0]);
        let p = expm(&(l * 0.8));
        for i in 0..3 {
            let row_sum: f64 = p.row(i).iter().sum();
            assert!((row_sum - 1.0).abs() < 1e-12);
            assert!(p.row(i).iter().all(|&v| v >= -1e-13));
        }
    }
}
