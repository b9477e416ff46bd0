//! Trigonometric differentiation on the equispaced periodic grid
//! t_i = 2 pi i / N, N even.

use std::f64::consts::PI;

use faer::Mat;

use crate::vec2::Vec2;

/// First column of the periodic differentiation matrix: the derivative at
/// t_0 of the band-limited interpolant of the k-th unit vector is `c[N-k]`.
/// Entry k holds D_{k,0} = (-1)^k cot(k h / 2) / 2.
fn stencil(n: usize) -> Vec<f64> {
    let h = 2.0 * PI / n as f64;
    (0..n)
        .map(|k| {
            if k == 0 {
                0.0
            } else {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                0.5 * sign / (0.5 * k as f64 * h).tan()
            }
        })
        .collect()
}

/// Dense N x N differentiation matrix in the parameter t.
pub fn diff_matrix(n: usize) -> Mat<f64> {
    let c = stencil(n);
    Mat::from_fn(n, n, |i, j| c[(i + n - j) % n])
}

/// Derivative in t of periodic samples. Exact for trigonometric polynomials
/// of degree below N/2.
pub fn derivative(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let c = stencil(n);
    (0..n)
        .map(|i| {
            let mut s = 0.0;
            for (j, fj) in f.iter().enumerate() {
                s += c[(i + n - j) % n] * fj;
            }
            s
        })
        .collect()
}

pub fn derivative_vec(f: &[Vec2]) -> Vec<Vec2> {
    let xs: Vec<f64> = f.iter().map(|v| v.x).collect();
    let ys: Vec<f64> = f.iter().map(|v| v.y).collect();
    derivative(&xs).into_iter().zip(derivative(&ys)).map(|(x, y)| Vec2::new(x, y)).collect()
}

/// Equispaced parameter grid.
pub fn grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).collect()
}

/// Trigonometric interpolant of periodic samples evaluated on a grid `factor`
/// times finer, together with its first and second derivatives in t.
pub fn interpolate(f: &[f64], factor: usize) -> [Vec<f64>; 3] {
    let n = f.len();
    let half = n / 2;
    let t = grid(n);
    // f(t) = a0/2 + sum_{k<N/2} (a_k cos kt + b_k sin kt) + (a_{N/2}/2) cos(N t / 2)
    let mut a = vec![0.0; half + 1];
    let mut b = vec![0.0; half + 1];
    for k in 0..=half {
        for (j, fj) in f.iter().enumerate() {
            let (s, c) = (k as f64 * t[j]).sin_cos();
            a[k] += fj * c;
            b[k] += fj * s;
        }
        a[k] *= 2.0 / n as f64;
        b[k] *= 2.0 / n as f64;
    }
    a[0] *= 0.5;
    a[half] *= 0.5;
    b[half] = 0.0;
    let m = n * factor;
    let tf = grid(m);
    let mut out = [vec![0.0; m], vec![0.0; m], vec![0.0; m]];
    for (i, &ti) in tf.iter().enumerate() {
        let (mut v, mut d, mut dd) = (a[0], 0.0, 0.0);
        for k in 1..=half {
            let kf = k as f64;
            let (s, c) = (kf * ti).sin_cos();
            v += a[k] * c + b[k] * s;
            d += kf * (-a[k] * s + b[k] * c);
            dd -= kf * kf * (a[k] * c + b[k] * s);
        }
        out[0][i] = v;
        out[1][i] = d;
        out[2][i] = dd;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_on_trig_polynomials() {
        let n = 32;
        let t = grid(n);
        let f: Vec<f64> = t.iter().map(|&s| (3.0 * s).sin() + 0.5 * (15.0 * s).cos()).collect();
        let df = derivative(&f);
        for (i, &s) in t.iter().enumerate() {
            let exact = 3.0 * (3.0 * s).cos() - 7.5 * (15.0 * s).sin();
            assert!((df[i] - exact).abs() < 1e-12, "{} vs {}", df[i], exact);
        }
    }

    #[test]
    fn matrix_matches_convolution() {
        let n = 16;
        let d = diff_matrix(n);
        let f: Vec<f64> = (0..n).map(|i| ((i * 7) % 5) as f64).collect();
        let df = derivative(&f);
        for i in 0..n {
            let s: f64 = (0..n).map(|j| d[(i, j)] * f[j]).sum();
            assert!((s - df[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn interpolation_reproduces_trig_polynomials() {
        let n = 16;
        let f: Vec<f64> = grid(n).iter().map(|&s| 1.0 + (2.0 * s).cos() - 0.5 * (5.0 * s).sin()).collect();
        let [v, d, dd] = interpolate(&f, 3);
        for (i, &s) in grid(3 * n).iter().enumerate() {
            assert!((v[i] - (1.0 + (2.0 * s).cos() - 0.5 * (5.0 * s).sin())).abs() < 1e-13);
            assert!((d[i] - (-2.0 * (2.0 * s).sin() - 2.5 * (5.0 * s).cos())).abs() < 1e-12);
            assert!((dd[i] - (-4.0 * (2.0 * s).cos() + 12.5 * (5.0 * s).sin())).abs() < 1e-11);
        }
    }

    #[test]
    fn constants_differentiate_to_zero() {
        let df = derivative(&[2.5; 24]);
        assert!(df.iter().all(|v| v.abs() < 1e-13));
    }
}
