//! Bessel-family special functions used by the DtN boundary operator and the
//! Matern covariance.
//!
//! `J_n`/`Y_n` use ascending series for small argument, Stokes asymptotics for
//! large argument, Miller's normalized downward recurrence for `J_n` at high
//! order and stable upward recurrence for `Y_n`. `K_nu` combines Temme's
//! series with the Steed continued fraction.

use crate::error::{Error, Result};
use num_complex::Complex64;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
/// Argument threshold between ascending series and asymptotic expansion.
const ASYMPTOTIC_Z: f64 = 12.0;
const MAX_ITER: usize = 500;

/// Gamma function.
pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

fn series_j0(z: f64) -> f64 {
    let w = 0.25 * z * z;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..MAX_ITER {
        let kf = k as f64;
        term *= -w / (kf * kf);
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1.0) {
            break;
        }
    }
    sum
}

fn series_j1(z: f64) -> f64 {
    let w = 0.25 * z * z;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..MAX_ITER {
        let kf = k as f64;
        term *= -w / (kf * (kf + 1.0));
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1.0) {
            break;
        }
    }
    0.5 * z * sum
}

fn series_y0(z: f64) -> f64 {
    let w = 0.25 * z * z;
    let mut term = 1.0;
    let mut harmonic = 0.0;
    let mut sum = 0.0;
    for k in 1..MAX_ITER {
        let kf = k as f64;
        term *= w / (kf * kf);
        harmonic += 1.0 / kf;
        let contrib = if k % 2 == 1 { term } else { -term } * harmonic;
        sum += contrib;
        if term.abs() * harmonic < 1e-17 * sum.abs().max(1.0) {
            break;
        }
    }
    core::f64::consts::FRAC_2_PI * (((0.5 * z).ln() + EULER_GAMMA) * series_j0(z) + sum)
}

fn series_y1(z: f64) -> f64 {
    // Y1 = (2/pi) ln(z/2) J1 - 2/(pi z)
    //      - (z/(2 pi)) sum_k (psi(k+1) + psi(k+2)) (-z^2/4)^k / (k! (k+1)!)
    let w = 0.25 * z * z;
    let mut term = 1.0; // (-w)^k / (k! (k+1)!)
    let mut hk = 0.0; // H_k
    let mut hk1 = 1.0; // H_{k+1}
    let mut sum = term * (-2.0 * EULER_GAMMA + hk + hk1);
    for k in 1..MAX_ITER {
        let kf = k as f64;
        term *= -w / (kf * (kf + 1.0));
        hk += 1.0 / kf;
        hk1 += 1.0 / (kf + 1.0);
        let contrib = term * (-2.0 * EULER_GAMMA + hk + hk1);
        sum += contrib;
        if term.abs() * (hk + hk1 + 2.0) < 1e-17 * sum.abs().max(1.0) {
            break;
        }
    }
    core::f64::consts::FRAC_2_PI * (0.5 * z).ln() * series_j1(z) - 2.0 / (core::f64::consts::PI * z)
        - z / (2.0 * core::f64::consts::PI) * sum
}

/// Stokes asymptotic P/Q sums for order 0 or 1, valid for large `z`.
fn asymptotic_pq(order: u32, z: f64) -> (f64, f64) {
    let mu = 4.0 * (order as f64) * (order as f64);
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut prev = f64::INFINITY;
    for k in 0..30usize {
        let kf = k as f64;
        let factor = (mu - (2.0 * kf + 1.0) * (2.0 * kf + 1.0)) / ((kf + 1.0) * 8.0 * z);
        term *= factor;
        if term.abs() >= prev {
            break; // asymptotic series started diverging
        }
        prev = term.abs();
        // k even -> contributes to Q slot (odd a-index), alternate signs pairwise
        let idx = k + 1;
        let signed = match idx % 4 {
            0 => term,
            1 => term,
            2 => -term,
            _ => -term,
        };
        if idx % 2 == 0 {
            p += signed;
        } else {
            q += signed;
        }
        if term.abs() < 1e-17 {
            break;
        }
    }
    (p, q)
}

fn asymptotic_jy(order: u32, z: f64) -> (f64, f64) {
    let (p, q) = asymptotic_pq(order, z);
    let chi = z - (0.5 * order as f64 + 0.25) * core::f64::consts::PI;
    let amp = (2.0 / (core::f64::consts::PI * z)).sqrt();
    (
        amp * (p * chi.cos() - q * chi.sin()),
        amp * (p * chi.sin() + q * chi.cos()),
    )
}

fn j0(z: f64) -> f64 {
    if z < ASYMPTOTIC_Z {
        series_j0(z)
    } else {
        asymptotic_jy(0, z).0
    }
}

fn j1(z: f64) -> f64 {
    if z < ASYMPTOTIC_Z {
        series_j1(z)
    } else {
        asymptotic_jy(1, z).0
    }
}

fn y0(z: f64) -> f64 {
    if z < ASYMPTOTIC_Z {
        series_y0(z)
    } else {
        asymptotic_jy(0, z).1
    }
}

fn y1(z: f64) -> f64 {
    if z < ASYMPTOTIC_Z {
        series_y1(z)
    } else {
        asymptotic_jy(1, z).1
    }
}

/// Bessel function of the first kind, integer order `n >= 0`, `z > 0`.
pub fn bessel_j(n: u32, z: f64) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::Domain(format!("bessel_j requires z > 0, got {z}")));
    }
    match n {
        0 => Ok(j0(z)),
        1 => Ok(j1(z)),
        _ => {
            if z > n as f64 && z >= ASYMPTOTIC_Z {
                // upward recurrence is stable while the order stays below z
                let mut jm = j0(z);
                let mut jc = j1(z);
                for k in 1..n {
                    let next = 2.0 * k as f64 / z * jc - jm;
                    jm = jc;
                    jc = next;
                }
                Ok(jc)
            } else {
                Ok(miller_j(n, z))
            }
        }
    }
}

/// Miller's downward recurrence normalized by J_0 + 2 sum J_{2k} = 1.
fn miller_j(n: u32, z: f64) -> f64 {
    let start = {
        let base = (n as usize).max(z.ceil() as usize) + 60;
        base + (base % 2) // even start index
    };
    let mut fp = 0.0_f64; // f_{m+1}
    let mut fc = 1e-300_f64; // f_m
    let mut target = 0.0;
    let mut norm = 0.0; // accumulates f_0 + 2 f_2 + 2 f_4 + ...
    for m in (0..=start).rev() {
        let fm = 2.0 * (m as f64 + 1.0) / z * fc - fp;
        fp = fc;
        fc = fm;
        if m == n as usize {
            target = fc;
        }
        if m % 2 == 0 {
            norm += if m == 0 { fc } else { 2.0 * fc };
        }
        // rescale to avoid overflow of the unnormalized recurrence
        if fc.abs() > 1e280 {
            fp /= 1e280;
            fc /= 1e280;
            target /= 1e280;
            norm /= 1e280;
        }
    }
    target / norm
}

/// Bessel function of the second kind, integer order `n >= 0`, `z > 0`.
pub fn bessel_y(n: u32, z: f64) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::Domain(format!("bessel_y requires z > 0, got {z}")));
    }
    match n {
        0 => Ok(y0(z)),
        1 => Ok(y1(z)),
        _ => {
            let mut ym = y0(z);
            let mut yc = y1(z);
            for k in 1..n {
                let next = 2.0 * k as f64 / z * yc - ym;
                ym = yc;
                yc = next;
            }
            Ok(yc)
        }
    }
}

/// Logarithmic derivative of the first-kind Hankel function,
/// `rho_n(z) = H_n^(1)'(z) / H_n^(1)(z)`.
///
/// Negative orders reduce to `|n|` (the ratio is even in the order). The
/// computation carries a shared binary scale through the `Y` recurrence so
/// high orders at small argument cannot overflow.
pub fn hankel_log_derivative(n: i32, z: f64) -> Result<Complex64> {
    if !(z > 0.0) {
        return Err(Error::Domain(format!(
            "hankel_log_derivative requires z > 0, got {z}"
        )));
    }
    let n = n.unsigned_abs();
    if n == 0 {
        let h0 = Complex64::new(j0(z), y0(z));
        let h1 = Complex64::new(j1(z), y1(z));
        return Ok(-h1 / h0);
    }
    // Scaled upward recurrence: actual Y_k = stored * 2^(512 * scale).
    let mut ym = y0(z);
    let mut yc = y1(z);
    let mut scale = 0i32;
    for k in 1..n {
        let next = 2.0 * k as f64 / z * yc - ym;
        ym = yc;
        yc = next;
        if yc.abs() > 1e280 {
            ym = libm::ldexp(ym, -512);
            yc = libm::ldexp(yc, -512);
            scale += 1;
        }
    }
    // J underflows harmlessly once Y has been rescaled.
    let jm = libm::ldexp(bessel_j(n - 1, z)?, -512 * scale);
    let jc = libm::ldexp(bessel_j(n, z)?, -512 * scale);
    let hm = Complex64::new(jm, ym);
    let hc = Complex64::new(jc, yc);
    Ok(hm / hc - Complex64::new(n as f64 / z, 0.0))
}

/// Modified Bessel function of the second kind, real order, `z > 0`.
///
/// `K` is even in the order, so negative `nu` is folded to `|nu|`.
pub fn bessel_k(nu: f64, z: f64) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::Domain(format!("bessel_k requires z > 0, got {z}")));
    }
    let nu = nu.abs();
    let n = nu.round();
    let u = nu - n; // |u| <= 1/2
    let (ku, ku1) = if z <= 2.0 {
        temme_k(u, z)?
    } else {
        steed_k(u, z)?
    };
    let steps = n as usize;
    if steps == 0 {
        return Ok(ku);
    }
    let mut kprev = ku;
    let mut kcur = ku1;
    for i in 1..steps {
        let v = u + i as f64;
        let knext = kprev + 2.0 * v / z * kcur;
        kprev = kcur;
        kcur = knext;
    }
    Ok(kcur)
}

/// Temme's series for K_u, K_{u+1}; requires `z <= 2`, `|u| <= 1/2`.
fn temme_k(u: f64, z: f64) -> Result<(f64, f64)> {
    use core::f64::consts::PI;
    let gp = gamma(1.0 + u) - 1.0;
    let gm = gamma(1.0 - u) - 1.0;
    let a = (0.5 * z).ln();
    let b = (u * a).exp();
    let sigma = -a * u;
    let c = if u.abs() < f64::EPSILON {
        1.0
    } else {
        (PI * u).sin() / (PI * u)
    };
    let d = if sigma.abs() < f64::EPSILON {
        1.0
    } else {
        sigma.sinh() / sigma
    };
    let gamma1 = if u.abs() < f64::EPSILON {
        -EULER_GAMMA
    } else {
        0.5 / u * (gp - gm) * c
    };
    let gamma2 = 0.5 * (2.0 + gp + gm) * c;

    let mut p = (gp + 1.0) / (2.0 * b);
    let mut q = (1.0 + gm) * b / 2.0;
    let mut f = (sigma.cosh() * gamma1 - d * a * gamma2) / c;
    let mut h = p;
    let mut coef = 1.0;
    let mut sum = coef * f;
    let mut sum1 = coef * h;
    for k in 1..MAX_ITER {
        let kf = k as f64;
        f = (kf * f + p + q) / (kf * kf - u * u);
        p /= kf - u;
        q /= kf + u;
        h = p - kf * f;
        coef *= z * z / (4.0 * kf);
        sum += coef * f;
        sum1 += coef * h;
        if (coef * f).abs() < sum.abs() * f64::EPSILON {
            return Ok((sum, 2.0 * sum1 / z));
        }
    }
    Err(Error::Domain(format!(
        "temme series for K did not converge (u={u}, z={z})"
    )))
}

/// Steed's continued fraction for K_u, K_{u+1}; requires `z > 1`.
fn steed_k(u: f64, z: f64) -> Result<(f64, f64)> {
    use core::f64::consts::PI;
    let mut a = u * u - 0.25;
    let mut b = 2.0 * (z + 1.0);
    let mut d = 1.0 / b;
    let mut delta = d;
    let mut f = d;
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut q = -a;
    let mut c = -a;
    let mut s = 1.0 + q * delta;
    for k in 2..MAX_ITER {
        let kf = k as f64;
        a -= 2.0 * (kf - 1.0);
        b += 2.0;
        d = 1.0 / (a * d + b);
        delta *= b * d - 1.0;
        f += delta;
        let t = (prev - (b - 2.0) * cur) / a;
        prev = cur;
        cur = t;
        c *= -a / kf;
        q += c * t;
        s += q * delta;
        if (q * delta).abs() < s.abs() * f64::EPSILON * 0.5 {
            let ku = (PI / (2.0 * z)).sqrt() * (-z).exp() / s;
            let ku1 = ku * (0.5 + u + z + (u * u - 0.25) * f) / z;
            return Ok((ku, ku1));
        }
    }
    Err(Error::Domain(format!(
        "continued fraction for K did not converge (u={u}, z={z})"
    )))
}
