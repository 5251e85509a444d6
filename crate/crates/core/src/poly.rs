//! Real polynomials in descending powers and simultaneous root finding.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative size below which leading coefficients are treated as zero.
pub const TRIM_TOLERANCE: f64 = 1e-14;

pub fn norm(p: &[f64]) -> f64 {
    crate::signal::l2_norm(p)
}

/// Drop leading coefficients smaller than `TRIM_TOLERANCE * ||p||`. The zero
/// polynomial becomes `[0.0]`.
pub fn trim(p: &[f64]) -> Vec<f64> {
    let tol = TRIM_TOLERANCE * norm(p);
    match p.iter().position(|c| c.abs() > tol) {
        Some(i) => p[i..].to_vec(),
        None => vec![0.0],
    }
}

/// Drop exactly-zero leading coefficients only.
pub fn trim_exact(p: &[f64]) -> Vec<f64> {
    match p.iter().position(|&c| c != 0.0) {
        Some(i) => p[i..].to_vec(),
        None => vec![0.0],
    }
}

pub fn degree(p: &[f64]) -> usize {
    trim_exact(p).len() - 1
}

pub fn is_zero(p: &[f64]) -> bool {
    p.iter().all(|&c| c == 0.0)
}

pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    crate::signal::convolve_slices(a, b)
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().max(b.len());
    let mut out = vec![0.0; n];
    for (o, v) in out[n - a.len()..].iter_mut().zip(a) {
        *o += v;
    }
    for (o, v) in out[n - b.len()..].iter_mut().zip(b) {
        *o += v;
    }
    out
}

pub fn scale(p: &[f64], g: f64) -> Vec<f64> {
    p.iter().map(|c| c * g).collect()
}

/// Multiply by `z^n`.
pub fn shift_up(p: &[f64], n: usize) -> Vec<f64> {
    let mut out = p.to_vec();
    out.extend(std::iter::repeat_n(0.0, n));
    out
}

pub fn eval(p: &[f64], z: Complex64) -> Complex64 {
    p.iter()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

pub fn eval_real(p: &[f64], x: f64) -> f64 {
    p.iter().fold(0.0, |acc, &c| acc * x + c)
}

fn eval_complex(p: &[Complex64], z: Complex64) -> Complex64 {
    p.iter()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

/// Monic real polynomial with the given roots. Complex roots are expected in
/// conjugate pairs; the imaginary residue of the product is discarded.
pub fn from_roots(roots: &[Complex64]) -> Vec<f64> {
    let mut acc = vec![Complex64::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); acc.len() + 1];
        for (i, &c) in acc.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        acc = next;
    }
    acc.iter().map(|c| c.re).collect()
}

/// Quotient and remainder of `num / den`.
pub fn divide(num: &[f64], den: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let den = trim_exact(den);
    let num = trim_exact(num);
    if num.len() < den.len() {
        return (vec![0.0], num);
    }
    let mut rem = num.clone();
    let nq = num.len() - den.len() + 1;
    let mut q = vec![0.0; nq];
    for i in 0..nq {
        let c = rem[i] / den[0];
        q[i] = c;
        for (j, &d) in den.iter().enumerate() {
            rem[i + j] -= c * d;
        }
    }
    let rem = rem[nq..].to_vec();
    (q, if rem.is_empty() { vec![0.0] } else { rem })
}

const MAX_ITERATIONS: usize = 500;

/// All complex roots of `p` (descending coefficients) by the Aberth-Ehrlich
/// simultaneous iteration, followed by Newton polishing.
///
/// Every returned root satisfies `|p(r)| < 1e-10 * ||p||_2`; otherwise
/// `RootsNotConverged` carries the worst residual.
pub fn roots(p: &[f64]) -> Result<Vec<Complex64>> {
    let p = trim_exact(p);
    if p.len() <= 1 {
        return Ok(Vec::new());
    }
    // exact zero roots
    let mut zeros_at_origin = 0;
    let mut core = p.clone();
    while core.len() > 1 && *core.last().unwrap() == 0.0 {
        core.pop();
        zeros_at_origin += 1;
    }
    let mut out = vec![Complex64::new(0.0, 0.0); zeros_at_origin];
    if core.len() > 1 {
        out.extend(aberth(&core)?);
    }
    let scale = norm(&p);
    let worst = out.iter().map(|&r| residual(&p, r)).fold(0.0f64, f64::max);
    if worst >= 1e-10 * scale {
        return Err(Error::RootsNotConverged {
            iterations: MAX_ITERATIONS,
            max_residual: worst,
        });
    }
    out.sort_by(|a, b| {
        b.norm()
            .partial_cmp(&a.norm())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.re.partial_cmp(&a.re).unwrap_or(std::cmp::Ordering::Equal))
            .then(b.im.partial_cmp(&a.im).unwrap_or(std::cmp::Ordering::Equal))
    });
    Ok(out)
}

fn residual(p: &[f64], r: Complex64) -> f64 {
    // residual of the polynomial normalized so a root of modulus > 1 is not
    // penalized by the size of r^n
    let n = p.len() - 1;
    let m = r.norm().max(1.0);
    eval(p, r).norm() / m.powi(n as i32)
}

fn aberth(p: &[f64]) -> Result<Vec<Complex64>> {
    let n = p.len() - 1;
    let lead = p[0];
    let monic: Vec<Complex64> = p.iter().map(|&c| Complex64::new(c / lead, 0.0)).collect();
    let dmonic: Vec<Complex64> = monic[..n]
        .iter()
        .enumerate()
        .map(|(i, &c)| c * (n - i) as f64)
        .collect();

    // initial guesses on a circle whose radius is the geometric mean of the
    // root moduli, offset in angle to break real-axis symmetry
    let radius = {
        let c0 = monic[n].norm();
        if c0 > 0.0 {
            c0.powf(1.0 / n as f64)
        } else {
            1.0
        }
    };
    let radius = radius.max(1e-3);
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / n as f64 + 0.4;
            Complex64::from_polar(radius, theta)
        })
        .collect();

    let mut converged = false;
    for _ in 0..MAX_ITERATIONS {
        let mut max_step = 0.0f64;
        for k in 0..n {
            let pk = eval_complex(&monic, z[k]);
            if pk == Complex64::new(0.0, 0.0) {
                continue;
            }
            let dk = eval_complex(&dmonic, z[k]);
            let ratio = pk / dk;
            let sum: Complex64 = (0..n)
                .filter(|&j| j != k)
                .map(|j| {
                    let d = z[k] - z[j];
                    if d == Complex64::new(0.0, 0.0) {
                        Complex64::new(0.0, 0.0)
                    } else {
                        d.inv()
                    }
                })
                .sum();
            let step = ratio / (Complex64::new(1.0, 0.0) - ratio * sum);
            if step.is_finite() {
                z[k] -= step;
                max_step = max_step.max(step.norm() / z[k].norm().max(1e-300));
            }
        }
        if max_step < 1e-15 {
            converged = true;
            break;
        }
    }

    // Newton polish on the original polynomial
    for r in &mut z {
        for _ in 0..3 {
            let pv = eval_complex(&monic, *r);
            let dv = eval_complex(&dmonic, *r);
            if dv.norm() == 0.0 {
                break;
            }
            let step = pv / dv;
            let cand = *r - step;
            if cand.is_finite() && eval_complex(&monic, cand).norm() <= pv.norm() {
                *r = cand;
            } else {
                break;
            }
        }
    }

    // snap numerically real roots onto the real axis
    for r in &mut z {
        if r.im.abs() <= 1e-12 * r.norm().max(1.0) {
            r.im = 0.0;
        }
    }

    if !converged {
        let worst = z.iter().map(|&r| residual(p, r)).fold(0.0f64, f64::max);
        if worst >= 1e-10 * norm(p) {
            return Err(Error::RootsNotConverged {
                iterations: MAX_ITERATIONS,
                max_residual: worst,
            });
        }
    }
    Ok(z)
}
