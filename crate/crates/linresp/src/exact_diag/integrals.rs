//! Closed-form `∫_0^β t^n e^{zt} dt` with a Gibbs weight folded in so no exponent is positive.

use crate::linalg::C64;

/// `M_j(z) = ∫_0^β t^j e^{zt} dt` for `j = 0..=n`, assuming `Re z ≤ 0`.
fn moments(n: usize, z: C64, beta: f64) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); n + 1];
    if z.norm() * beta <= 2.0 {
        for (j, slot) in out.iter_mut().enumerate() {
            // Σ_k z^k β^{j+k+1} / (k! (j+k+1))
            let mut term = C64::new(beta.powi(j as i32 + 1), 0.0);
            let mut sum = term / (j as f64 + 1.0);
            for k in 1..60 {
                term *= z * beta / k as f64;
                let add = term / (j + k + 1) as f64;
                sum += add;
                if add.norm() < 1e-18 * sum.norm() {
                    break;
                }
            }
            *slot = sum;
        }
    } else {
        let e = (z * beta).exp();
        out[0] = (e - 1.0) / z;
        for j in 1..=n {
            out[j] = (e * beta.powi(j as i32) - out[j - 1] * j as f64) / z;
        }
    }
    out
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `e^{lw} ∫_0^β t^n e^{zt} dt`.
pub(super) fn weighted_moment(n: usize, lw: f64, z: C64, beta: f64) -> C64 {
    if z.re <= 0.0 {
        return moments(n, z, beta)[n] * lw.exp();
    }
    // t = β - u
    let pref = C64::from_polar((lw + beta * z.re).exp(), beta * z.im);
    let m = moments(n, -z, beta);
    let mut s = C64::new(0.0, 0.0);
    for k in 0..=n {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        s += m[k] * (binom(n, k) * beta.powi((n - k) as i32) * sign);
    }
    pref * s
}

/// `e^{lw} ∫_0^β dt e^{At} ∫_0^t ds e^{Bs}`.
pub(super) fn weighted_d2(lw: f64, a: C64, b: C64, beta: f64) -> C64 {
    if b.norm() * beta < 1e-5 {
        // (e^{Bt} - 1)/B = t + B t^2/2 + B^2 t^3/6 + …
        return weighted_moment(1, lw, a, beta) + b * 0.5 * weighted_moment(2, lw, a, beta) + b * b / 6.0 * weighted_moment(3, lw, a, beta);
    }
    (weighted_moment(0, lw, a + b, beta) - weighted_moment(0, lw, a, beta)) / b
}
