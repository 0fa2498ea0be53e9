//! Small special-function and one-dimensional numerics kit.

use crate::scalar::{lit, Real};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// ln Γ(x) for x > 0.
pub fn ln_gamma<T: Real>(x: T) -> T {
    let half = lit::<T>(0.5);
    if x < half {
        // reflection
        let pi = T::pi();
        return (pi / (pi * x).sin()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut acc = lit::<T>(LANCZOS[0]);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc += lit::<T>(c) / (x + T::usize(i));
    }
    let t = x + lit::<T>(LANCZOS_G) + half;
    half * (T::two_pi()).ln() + (x + half) * t.ln() - t + acc.ln()
}

/// Binomial coefficient C(n, k) as a float.
pub fn binomial<T: Real>(n: usize, k: usize) -> T {
    if k > n {
        return T::zero();
    }
    let k = k.min(n - k);
    let mut r = T::one();
    for i in 0..k {
        r = r * T::usize(n - i) / T::usize(i + 1);
    }
    r
}

/// Generalized binomial C(-1/2, t).
pub fn binom_minus_half<T: Real>(t: usize) -> T {
    let mut r = T::one();
    for i in 0..t {
        r = r * (lit::<T>(-0.5) - T::usize(i)) / T::usize(i + 1);
    }
    r
}

pub fn factorial<T: Real>(n: usize) -> T {
    (1..=n).fold(T::one(), |a, i| a * T::usize(i))
}

const GK_X: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GK_WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T) -> (T, T) {
    let half = lit::<T>(0.5);
    let c = half * (a + b);
    let h = half * (b - a);
    let fc = f(c);
    let mut k = fc * lit::<T>(GK_WK[7]);
    let mut g = fc * lit::<T>(GK_WG[3]);
    for i in 0..7 {
        let dx = h * lit::<T>(GK_X[i]);
        let s = f(c - dx) + f(c + dx);
        k += s * lit::<T>(GK_WK[i]);
        if i % 2 == 1 {
            g += s * lit::<T>(GK_WG[i / 2]);
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) integral of `f` over [a, b].
///
/// Subdivides the worst panel until the summed error estimate is below `tol`
/// (or at roundoff level relative to the value), with at most 500 panels.
pub fn integrate<T: Real, F: Fn(T) -> T>(f: F, a: T, b: T, tol: T) -> T {
    let (v, e) = gk15(&f, a, b);
    let mut panels = vec![(a, b, v, e)];
    loop {
        let err: T = panels.iter().fold(T::zero(), |acc, p| acc + p.3);
        let val: T = panels.iter().fold(T::zero(), |acc, p| acc + p.2);
        let floor = lit::<T>(50.0) * T::default_epsilon() * val.abs();
        if err <= tol.max(floor) || panels.len() >= 500 {
            return val;
        }
        let (imax, _) = panels
            .iter()
            .enumerate()
            .fold((0, T::zero()), |best, (i, p)| if p.3 > best.1 { (i, p.3) } else { best });
        let (lo, hi, _, _) = panels.swap_remove(imax);
        let mid = lit::<T>(0.5) * (lo + hi);
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        panels.push((lo, mid, v1, e1));
        panels.push((mid, hi, v2, e2));
    }
}

/// Brent's method on a bracketing interval.
pub fn brent_root<T: Real, F: Fn(T) -> T>(f: F, mut a: T, mut b: T, tol: T) -> Option<T> {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == T::zero() {
        return Some(a);
    }
    if fb == T::zero() {
        return Some(b);
    }
    if fa * fb > T::zero() {
        return None;
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    let two = lit::<T>(2.0);
    let half = lit::<T>(0.5);
    for _ in 0..200 {
        if (fb > T::zero()) == (fc > T::zero()) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = two * T::default_epsilon() * b.abs() + half * tol;
        let xm = half * (c - b);
        if xm.abs() <= tol1 || fb == T::zero() {
            return Some(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = two * xm * s;
                q = T::one() - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (two * xm * qq * (qq - r) - (b - a) * (r - T::one()));
                q = (qq - T::one()) * (r - T::one()) * (s - T::one());
            }
            if p > T::zero() {
                q = -q;
            }
            p = p.abs();
            let m1 = lit::<T>(3.0) * xm * q - (tol1 * q).abs();
            let m2 = (e * q).abs();
            if two * p < m1.min(m2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else if xm > T::zero() { tol1 } else { -tol1 };
        fb = f(b);
    }
    Some(b)
}

/// Golden-section search for the maximum of a unimodal function on [a, b].
pub fn golden_max<T: Real, F: Fn(T) -> T>(f: F, mut a: T, mut b: T, tol: T) -> (T, T) {
    let r = lit::<T>(0.618_033_988_749_894_8);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (b - a).abs() > tol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_values() {
        assert!((ln_gamma(5.0f64) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5f64) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
        assert!((ln_gamma(10.3f64) - 13.482_036_786_138_36).abs() < 1e-10);
    }

    #[test]
    fn quadrature_gaussian() {
        let v = integrate(|x: f64| (-x * x).exp(), -8.0, 8.0, 1e-14);
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn brent_cos() {
        let r = brent_root(|x: f64| x.cos(), 1.0, 2.0, 1e-15).unwrap();
        assert!((r - std::f64::consts::FRAC_PI_2).abs() < 1e-14);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial::<f64>(6, 3), 20.0);
        assert!((binom_minus_half::<f64>(2) - 0.375).abs() < 1e-16);
    }
}
