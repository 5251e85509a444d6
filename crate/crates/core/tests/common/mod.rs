//! Brute-force oracles and random systems shared by the integration tests.
#![allow(dead_code)]

use loopshape::RationalTf;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Expand `(z - r_1)...(z - r_n)` directly, descending coefficients.
pub fn poly_from_roots(roots: &[Complex64]) -> Vec<f64> {
    let mut c = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); c.len() + 1];
        for i in 0..c.len() {
            next[i] += c[i];
            next[i + 1] -= c[i] * r;
        }
        c = next;
    }
    c.into_iter().map(|v| v.re).collect()
}

/// `n` roots with modulus at most `radius`, as real roots or conjugate pairs.
pub fn random_roots<R: Rng>(rng: &mut R, n: usize, min_radius: f64, radius: f64) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let m = rng.random_range(min_radius..radius);
        if n - out.len() >= 2 && rng.random_bool(0.5) {
            let th = rng.random_range(0.1..3.0);
            out.push(Complex64::from_polar(m, th));
            out.push(Complex64::from_polar(m, -th));
        } else {
            let s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            out.push(Complex64::new(s * m, 0.0));
        }
    }
    out
}

/// Random stable proper system of exactly `order` poles.
pub fn random_stable_tf<R: Rng>(rng: &mut R, order: usize, radius: f64, fs: f64) -> RationalTf {
    let poles = random_roots(rng, order, 0.05, radius);
    let nz = rng.random_range(0..=order);
    let zeros = random_roots(rng, nz, 0.0, 0.95);
    let gain = rng.random_range(0.5..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let num: Vec<f64> = poly_from_roots(&zeros).iter().map(|c| c * gain).collect();
    RationalTf::new(num, poly_from_roots(&poles), fs).unwrap()
}

/// Difference-equation simulation from zero initial state.
pub fn simulate(num: &[f64], den: &[f64], x: &[f64]) -> Vec<f64> {
    let n = den.len() - 1;
    let mut b = vec![0.0; den.len() - num.len()];
    b.extend_from_slice(num);
    let mut y = vec![0.0; x.len()];
    for k in 0..x.len() {
        let mut acc = 0.0;
        for i in 0..=n {
            if k >= i {
                acc += b[i] * x[k - i];
            }
        }
        for i in 1..=n {
            if k >= i {
                acc -= den[i] * y[k - i];
            }
        }
        y[k] = acc / den[0];
    }
    y
}

pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Hankel singular values of `(A, B, C)` from the two Gramians, summed as
/// `Σ A^k B B^T (A^T)^k` until the terms vanish.
pub fn gramian_hsv(
    a: &nalgebra::DMatrix<f64>,
    b: &nalgebra::DVector<f64>,
    c: &nalgebra::RowDVector<f64>,
) -> Vec<f64> {
    let n = a.nrows();
    let mut wc = nalgebra::DMatrix::<f64>::zeros(n, n);
    let mut wo = nalgebra::DMatrix::<f64>::zeros(n, n);
    let mut ak_b = b.clone();
    let mut ct_ak = c.transpose();
    for _ in 0..20_000 {
        wc += &ak_b * ak_b.transpose();
        wo += &ct_ak * ct_ak.transpose();
        ak_b = a * ak_b;
        ct_ak = a.transpose() * ct_ak;
        if ak_b.norm() < 1e-18 && ct_ak.norm() < 1e-18 {
            break;
        }
    }
    // eigenvalues of Wc Wo = eigenvalues of L^T Wo L with Wc = L L^T
    let l = nalgebra::Cholesky::new(wc).expect("controllable").l();
    let m = l.transpose() * wo * &l;
    let mut s: Vec<f64> = m
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|v| v.max(0.0).sqrt())
        .collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Controllable canonical form of a strictly proper `num / den`.
pub fn companion(
    tf: &RationalTf,
) -> (
    nalgebra::DMatrix<f64>,
    nalgebra::DVector<f64>,
    nalgebra::RowDVector<f64>,
) {
    let den = tf.den();
    let n = den.len() - 1;
    let lead = den[0];
    let mut num = vec![0.0; den.len() - tf.num().len()];
    num.extend_from_slice(tf.num());
    assert!(num[0].abs() < 1e-15, "strictly proper only");
    let a = nalgebra::DMatrix::from_fn(n, n, |i, j| {
        if i == 0 {
            -den[j + 1] / lead
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    let mut b = nalgebra::DVector::zeros(n);
    b[0] = 1.0;
    let c = nalgebra::RowDVector::from_fn(n, |_, j| num[j + 1] / lead);
    (a, b, c)
}
