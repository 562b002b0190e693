//! Log-gamma, regularized incomplete beta/gamma and the distribution tails
//! built on them.

use super::StatsError;
use crate::Scalar;

const MAX_ITER: usize = 10_000;

fn domain<T: Scalar>(what: &str, v: T) -> StatsError {
    StatsError::Domain(format!("{what} = {v}"))
}

/// Natural log of the gamma function for `x > 0`.
///
/// Shifts the argument up to at least 10 with the recurrence
/// Γ(x) = Γ(x + n) / (x (x + 1) ... (x + n − 1)) and then applies the
/// Stirling series through the z⁻¹⁵ term.
pub fn ln_gamma<T: Scalar>(x: T) -> Result<T, StatsError> {
    if !x.is_finite() || x <= T::zero() {
        return Err(domain("ln_gamma x", x));
    }
    let ten = T::lit(10.0);
    let mut z = x;
    let mut prod = T::one();
    while z < ten {
        prod = prod * z;
        z = z + T::one();
    }
    // B_2k / (2k (2k-1)), k = 1..8
    const STIRLING: [f64; 8] = [
        1.0 / 12.0,
        -1.0 / 360.0,
        1.0 / 1260.0,
        -1.0 / 1680.0,
        1.0 / 1188.0,
        -691.0 / 360_360.0,
        1.0 / 156.0,
        -3617.0 / 122_400.0,
    ];
    let inv = z.recip();
    let inv2 = inv * inv;
    let mut series = T::zero();
    let mut pow = inv;
    for c in STIRLING {
        series = series + T::lit(c) * pow;
        pow = pow * inv2;
    }
    let half_ln_2pi = T::lit(0.918_938_533_204_672_8);
    let stirling = (z - T::lit(0.5)) * z.ln() - z + half_ln_2pi + series;
    Ok(stirling - prod.ln())
}

/// ln B(a, b) = ln Γ(a) + ln Γ(b) − ln Γ(a + b).
pub fn ln_beta<T: Scalar>(a: T, b: T) -> Result<T, StatsError> {
    Ok(ln_gamma(a)? + ln_gamma(b)? - ln_gamma(a + b)?)
}

/// Regularized incomplete beta function I_x(a, b).
///
/// Evaluated with the modified Lentz continued fraction, using the
/// reflection I_x(a, b) = 1 − I_{1−x}(b, a) on the side where the fraction
/// converges slowly.
pub fn reg_incomplete_beta<T: Scalar>(a: T, b: T, x: T) -> Result<T, StatsError> {
    if !(a > T::zero()) || !a.is_finite() {
        return Err(domain("incomplete beta a", a));
    }
    if !(b > T::zero()) || !b.is_finite() {
        return Err(domain("incomplete beta b", b));
    }
    if !(x >= T::zero() && x <= T::one()) {
        return Err(domain("incomplete beta x", x));
    }
    if x == T::zero() {
        return Ok(T::zero());
    }
    if x == T::one() {
        return Ok(T::one());
    }
    let ln_front = a * x.ln() + b * (-x).ln_1p() - ln_beta(a, b)?;
    let front = ln_front.exp();
    let two = T::lit(2.0);
    if x < (a + T::one()) / (a + b + two) {
        Ok(front * beta_cf(a, b, x)? / a)
    } else {
        Ok(T::one() - front * beta_cf(b, a, T::one() - x)? / b)
    }
}

fn beta_cf<T: Scalar>(a: T, b: T, x: T) -> Result<T, StatsError> {
    let one = T::one();
    let two = T::lit(2.0);
    let tiny = T::min_positive_value() / T::epsilon();
    let eps = T::epsilon();
    let qab = a + b;
    let qap = a + one;
    let qam = a - one;
    let mut c = one;
    let mut d = one - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = d.recip();
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = T::from_count(m);
        let m2 = two * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = d.recip();
        h = h * d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = d.recip();
        let del = d * c;
        h = h * del;
        if (del - one).abs() <= eps {
            return Ok(h);
        }
    }
    Err(StatsError::NoConvergence("incomplete beta"))
}

/// Regularized upper incomplete gamma Q(a, x) = Γ(a, x) / Γ(a).
pub fn reg_upper_gamma<T: Scalar>(a: T, x: T) -> Result<T, StatsError> {
    if !(a > T::zero()) || !a.is_finite() {
        return Err(domain("incomplete gamma a", a));
    }
    if !(x >= T::zero()) {
        return Err(domain("incomplete gamma x", x));
    }
    if x == T::zero() {
        return Ok(T::one());
    }
    if x.is_infinite() {
        return Ok(T::zero());
    }
    let ln_front = a * x.ln() - x - ln_gamma(a)?;
    if x < a + T::one() {
        // lower series: P = e^{-x} x^a / Γ(a) * Σ x^n / (a (a+1) ... (a+n))
        let mut ap = a;
        let mut del = a.recip();
        let mut sum = del;
        for _ in 0..MAX_ITER {
            ap = ap + T::one();
            del = del * x / ap;
            sum = sum + del;
            if del.abs() < sum.abs() * T::epsilon() {
                let p = sum * ln_front.exp();
                return Ok((T::one() - p).max(T::zero()));
            }
        }
        Err(StatsError::NoConvergence("incomplete gamma series"))
    } else {
        let one = T::one();
        let tiny = T::min_positive_value() / T::epsilon();
        let mut b = x + one - a;
        let mut c = tiny.recip();
        let mut d = b.recip();
        let mut h = d;
        for i in 1..=MAX_ITER {
            let i = T::from_count(i);
            let an = -i * (i - a);
            b = b + T::lit(2.0);
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = d.recip();
            let del = d * c;
            h = h * del;
            if (del - one).abs() <= T::epsilon() {
                return Ok(ln_front.exp() * h);
            }
        }
        Err(StatsError::NoConvergence(
            "incomplete gamma continued fraction",
        ))
    }
}

/// Two-sided Student-t tail probability P(|T| ≥ |t|) with `dof` degrees of freedom.
pub fn student_t_sf_two_sided<T: Scalar>(t: T, dof: usize) -> Result<T, StatsError> {
    if dof < 1 {
        return Err(StatsError::Domain("student t dof must be >= 1".into()));
    }
    if t.is_nan() {
        return Err(domain("student t statistic", t));
    }
    if t == T::zero() {
        return Ok(T::one());
    }
    if t.is_infinite() {
        return Ok(T::zero());
    }
    let nu = T::from_count(dof);
    // nu / (nu + t^2) as 1 / (1 + (t / sqrt(nu))^2)
    let ratio = t / nu.sqrt();
    let x = (T::one() + ratio * ratio).recip();
    let p = reg_incomplete_beta(nu / T::lit(2.0), T::lit(0.5), x)?;
    Ok(p.min(T::one()).max(T::zero()))
}

/// Chi-square upper tail P(X ≥ x) with `dof` degrees of freedom.
pub fn chi_square_sf<T: Scalar>(x: T, dof: usize) -> Result<T, StatsError> {
    if dof < 1 {
        return Err(StatsError::Domain("chi-square dof must be >= 1".into()));
    }
    if !(x >= T::zero()) {
        return Err(domain("chi-square x", x));
    }
    let half = T::lit(0.5);
    reg_upper_gamma(T::from_count(dof) * half, x * half)
}

/// Upper tail of the F distribution with (`d1`, `d2`) degrees of freedom.
pub fn f_sf<T: Scalar>(f: T, d1: usize, d2: usize) -> Result<T, StatsError> {
    if d1 < 1 || d2 < 1 {
        return Err(StatsError::Domain(format!("F dof ({d1}, {d2})")));
    }
    if f.is_nan() {
        return Err(domain("F statistic", f));
    }
    if f <= T::zero() {
        return Ok(T::one());
    }
    if f.is_infinite() {
        return Ok(T::zero());
    }
    let n1 = T::from_count(d1);
    let n2 = T::from_count(d2);
    let x = n2 / (n2 + n1 * f);
    let half = T::lit(0.5);
    reg_incomplete_beta(n2 * half, n1 * half, x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn ln_gamma_known_values() {
        close(ln_gamma(1.0).unwrap(), 0.0, 1e-14);
        close(ln_gamma(2.0).unwrap(), 0.0, 1e-14);
        close(ln_gamma(0.5).unwrap(), 0.572_364_942_924_700_1, 1e-12);
        // ln(9!) = ln 362880
        close(ln_gamma(10.0).unwrap(), 362_880f64.ln(), 1e-12);
    }

    #[test]
    fn ln_gamma_rejects_non_positive() {
        assert!(ln_gamma(0.0).is_err());
        assert!(ln_gamma(-1.5).is_err());
        assert!(ln_gamma(f64::NAN).is_err());
    }

    #[test]
    fn incomplete_beta_boundaries_and_uniform() {
        assert_eq!(reg_incomplete_beta(2.0, 3.0, 0.0).unwrap(), 0.0);
        assert_eq!(reg_incomplete_beta(2.0, 3.0, 1.0).unwrap(), 1.0);
        for x in [0.1, 0.25, 0.5, 0.9] {
            close(reg_incomplete_beta(1.0, 1.0, x).unwrap(), x, 1e-14);
        }
        // I_x(2,3) = 6x^2 - 8x^3 + 3x^4, at x = 1/2: 1.5 - 1 + 0.1875
        close(reg_incomplete_beta(2.0, 3.0, 0.5).unwrap(), 0.6875, 1e-13);
        assert!(reg_incomplete_beta(0.0, 1.0, 0.5).is_err());
        assert!(reg_incomplete_beta(1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn student_t_closed_forms() {
        assert_eq!(student_t_sf_two_sided(0.0, 5).unwrap(), 1.0);
        close(student_t_sf_two_sided(1.0, 1).unwrap(), 0.5, 1e-13);
        // Cauchy: 1 - 2/pi * atan(t)
        let t = 3.7;
        close(
            student_t_sf_two_sided(t, 1).unwrap(),
            1.0 - 2.0 / std::f64::consts::PI * f64::atan(t),
            1e-13,
        );
        assert!(student_t_sf_two_sided(1.0, 0).is_err());
        assert_eq!(
            student_t_sf_two_sided(2.0, 7).unwrap(),
            student_t_sf_two_sided(-2.0, 7).unwrap()
        );
    }

    #[test]
    fn chi_square_closed_forms() {
        assert_eq!(chi_square_sf(0.0, 3).unwrap(), 1.0);
        close(chi_square_sf(2.0 * 2f64.ln(), 2).unwrap(), 0.5, 1e-14);
        for x in [0.3, 1.0, 4.5, 20.0] {
            close(chi_square_sf(x, 2).unwrap(), (-x / 2.0).exp(), 1e-14);
        }
        assert!(chi_square_sf(-1.0, 2).is_err());
        assert!(chi_square_sf(1.0, 0).is_err());
    }

    #[test]
    fn f_matches_t_squared() {
        // F(1, d) = T(d)^2
        for (t, d) in [(0.7, 3usize), (2.1, 12), (4.0, 40)] {
            close(
                f_sf(t * t, 1, d).unwrap(),
                student_t_sf_two_sided(t, d).unwrap(),
                1e-12,
            );
        }
    }

    #[test]
    fn single_precision_is_usable() {
        let p: f32 = student_t_sf_two_sided(2.228f32, 10).unwrap();
        assert!((p - 0.05).abs() < 1e-3);
        let l: f32 = ln_gamma(0.5f32).unwrap();
        assert!((l - 0.572_364_9).abs() < 1e-5);
    }
}
