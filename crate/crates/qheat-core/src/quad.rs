//! Quadrature building blocks.
//!
//! Three regimes show up in this crate and each gets its own tool:
//!
//! * smooth integrands on finite intervals: [`adaptive_simpson`],
//! * principal-value integrals with a simple pole: [`pv_integral`],
//! * oscillatory half-line transforms of decaying kernels:
//!   [`half_line_fourier`], which grades panels densely near the origin and
//!   then walks period-length panels until the remainder is negligible.
//!
//! Gauss-Legendre nodes are computed once per order by Newton iteration on
//! the Legendre recurrence; orders in use are small (8..32) so the setup cost
//! is irrelevant.

use crate::error::{Error, Result};
use crate::scalar::{Cplx, Scalar};

/// Fixed-order Gauss-Legendre rule on a reference interval [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
}

impl<T: Scalar> GaussLegendre<T> {
    /// Build an `n`-point rule. Nodes solve P_n(x) = 0 by Newton iteration
    /// started from the Chebyshev estimate cos(pi (i + 3/4) / (n + 1/2)).
    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "need at least a 2-point rule");
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre_pair(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre_pair(n, x);
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes.push(T::of(x));
            weights.push(T::of(w));
        }
        GaussLegendre { nodes, weights }
    }

    /// Integrate a complex-valued function over [a, b].
    pub fn integrate<F>(&self, a: T, b: T, f: F) -> Cplx<T>
    where
        F: Fn(T) -> Cplx<T>,
    {
        let half = T::of(0.5);
        let mid = (a + b) * half;
        let rad = (b - a) * half;
        let mut acc = Cplx::new(T::zero(), T::zero());
        for (x, w) in self.nodes.iter().zip(self.weights.iter()) {
            acc = acc + f(mid + rad * *x) * Cplx::new(*w, T::zero());
        }
        acc * Cplx::new(rad, T::zero())
    }

    /// Integrate a real-valued function over [a, b].
    pub fn integrate_real<F>(&self, a: T, b: T, f: F) -> T
    where
        F: Fn(T) -> T,
    {
        let half = T::of(0.5);
        let mid = (a + b) * half;
        let rad = (b - a) * half;
        let mut acc = T::zero();
        for (x, w) in self.nodes.iter().zip(self.weights.iter()) {
            acc += f(mid + rad * *x) * *w;
        }
        acc * rad
    }
}

/// Value and derivative of the Legendre polynomial P_n at x, via the
/// three-term recurrence. Plain f64: node locations are converted to the
/// working scalar after refinement.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0f64;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Adaptive Simpson integration of a smooth real function on [a, b].
///
/// The tolerance is relative to the magnitude of the first whole-interval
/// estimate; if that estimate is essentially zero an absolute tolerance of
/// the same size takes over. Exceeding the depth cap with the error still
/// above tolerance is reported as a failure rather than silently accepted.
pub fn adaptive_simpson<T, F>(f: &F, a: T, b: T, rel_tol: T, context: &str) -> Result<T>
where
    T: Scalar,
    F: Fn(T) -> T,
{
    let half = T::of(0.5);
    let sixth = T::of(1.0 / 6.0);
    // Pre-scan on a uniform grid so the error scale reflects the integrand
    // even when it is concentrated in a small part of a long interval.
    const PANELS: usize = 16;
    let step = (b - a) / T::of(PANELS as f64);
    let mut starts = [(T::zero(), T::zero(), T::zero(), T::zero(), T::zero()); PANELS];
    let mut scale = T::zero();
    for (k, slot) in starts.iter_mut().enumerate() {
        let lo = a + step * T::of(k as f64);
        let hi = if k + 1 == PANELS { b } else { lo + step };
        let m = (lo + hi) * half;
        let fa = f(lo);
        let fm = f(m);
        let fb = f(hi);
        let s = (fa + T::of(4.0) * fm + fb) * (hi - lo) * sixth;
        *slot = (lo, hi, fa, fm, fb);
        scale += s.abs();
    }
    // Geometric endpoint probes: mass hiding in a sliver next to a or b is
    // invisible to the uniform scan and would make the error budget
    // unreachably small. The probes only ever raise the scale.
    let width = b - a;
    let mut frac = half;
    for _ in 0..48 {
        let w = width * frac;
        scale = scale.max(f(a + w).abs() * w).max(f(b - w).abs() * w);
        frac = frac * half;
    }
    if scale == T::zero() {
        return Ok(T::zero());
    }
    let eps = rel_tol * scale / T::of(PANELS as f64);
    let mut acc = T::zero();
    for (lo, hi, fa, fm, fb) in starts {
        let s = (fa + T::of(4.0) * fm + fb) * (hi - lo) * sixth;
        acc += simpson_step(f, lo, hi, fa, fm, fb, s, eps, 50, context)?;
    }
    Ok(acc)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<T, F>(
    f: &F,
    a: T,
    b: T,
    fa: T,
    fm: T,
    fb: T,
    s: T,
    eps: T,
    depth: usize,
    context: &str,
) -> Result<T>
where
    T: Scalar,
    F: Fn(T) -> T,
{
    let half = T::of(0.5);
    let sixth = T::of(1.0 / 6.0);
    let four = T::of(4.0);
    let m = (a + b) * half;
    let lm = (a + m) * half;
    let rm = (m + b) * half;
    let flm = f(lm);
    let frm = f(rm);
    let sl = (fa + four * flm + fm) * (m - a) * sixth;
    let sr = (fm + four * frm + fb) * (b - m) * sixth;
    let err = sl + sr - s;
    if err.abs() <= T::of(15.0) * eps {
        return Ok(sl + sr + err / T::of(15.0));
    }
    if depth == 0 {
        return Err(Error::QuadratureFailure {
            context: context.to_string(),
        });
    }
    let left = simpson_step(f, a, m, fa, flm, fm, sl, eps * half, depth - 1, context)?;
    let right = simpson_step(f, m, b, fm, frm, fb, sr, eps * half, depth - 1, context)?;
    Ok(left + right)
}

/// Principal value of int_0^upper g(nu) / (omega - nu) dnu for a smooth g
/// and a pole strictly inside (0, upper).
///
/// A symmetric window of half-width d around the pole is folded into
/// int_0^d [g(omega - s) - g(omega + s)] / s ds, whose integrand tends to
/// -2 g'(omega) and is smooth; the remaining side intervals are regular.
pub fn pv_integral<T, F>(g: &F, omega: T, upper: T, rel_tol: T, context: &str) -> Result<T>
where
    T: Scalar,
    F: Fn(T) -> T,
{
    if !(omega > T::zero() && omega < upper) {
        return Err(Error::QuadratureFailure {
            context: format!("{context}: pole outside integration range"),
        });
    }
    let d = omega.min(upper - omega).min(T::one()) * T::of(0.5);
    let folded = |s: T| {
        if s == T::zero() {
            // Gauss nodes never land here, but guard the removable point.
            T::zero()
        } else {
            (g(omega - s) - g(omega + s)) / s
        }
    };
    let gl = GaussLegendre::<T>::new(32);
    // The folded integrand is smooth but its derivatives grow towards s = 0;
    // split [0, d] geometrically so each panel sees a comparable variation.
    let mut window = T::zero();
    let mut hi = d;
    for _ in 0..40 {
        let lo = hi * T::of(0.25);
        window += gl.integrate_real(lo, hi, folded);
        hi = lo;
        if hi < T::of(1e-14) * d {
            break;
        }
    }
    window += gl.integrate_real(T::zero(), hi, folded);
    let left = if omega - d > T::zero() {
        adaptive_simpson(&|nu: T| g(nu) / (omega - nu), T::zero(), omega - d, rel_tol, context)?
    } else {
        T::zero()
    };
    let right = if upper - (omega + d) > T::zero() {
        adaptive_simpson(&|nu: T| g(nu) / (omega - nu), omega + d, upper, rel_tol, context)?
    } else {
        T::zero()
    };
    Ok(window + left + right)
}

/// Panel layout for oscillatory half-line transforms.
#[derive(Debug, Clone)]
pub struct OscConfig<T> {
    /// Panel length while the integrand still has structure.
    pub dense_panel: T,
    /// Switch from dense to tail panels at this time.
    pub dense_until: T,
    /// Tail panel length, normally one oscillation period.
    pub tail_panel: T,
    /// Stop once `decay_panels` consecutive tail panels contribute less than
    /// `decay_rel` times the scale of the accumulated result.
    pub decay_rel: T,
    pub decay_panels: usize,
    /// Hard horizon; reaching it without convergence is an error.
    pub t_max: T,
    /// Gauss-Legendre order per panel.
    pub order: usize,
}

/// Compute int_0^inf f(t) e^{i omega t} dt for a decaying f by graded panels.
///
/// `scale_floor` sets the magnitude against which panel contributions are
/// judged negligible; the running accumulated magnitude is folded in as well
/// so a transform with a large value is not over-resolved.
pub fn half_line_fourier<T, F>(
    f: &F,
    omega: T,
    cfg: &OscConfig<T>,
    scale_floor: T,
) -> Result<Cplx<T>>
where
    T: Scalar,
    F: Fn(T) -> Cplx<T>,
{
    let gl = GaussLegendre::<T>::new(cfg.order);
    let phase = |t: T| {
        let arg = omega * t;
        Cplx::new(arg.cos(), arg.sin())
    };
    let mut acc = Cplx::new(T::zero(), T::zero());
    let mut t = T::zero();
    // Dense sweep over the structured part of the kernel.
    while t < cfg.dense_until {
        let hi = (t + cfg.dense_panel).min(cfg.dense_until);
        acc = acc + gl.integrate(t, hi, |u| f(u) * phase(u));
        t = hi;
    }
    // Period-length tail panels with a consecutive-decay stop.
    let mut quiet = 0usize;
    while t < cfg.t_max {
        let hi = (t + cfg.tail_panel).min(cfg.t_max);
        let panel = gl.integrate(t, hi, |u| f(u) * phase(u));
        acc = acc + panel;
        t = hi;
        let thresh = cfg.decay_rel * (scale_floor + acc.norm());
        if panel.norm() < thresh {
            quiet += 1;
            if quiet >= cfg.decay_panels {
                return Ok(acc);
            }
        } else {
            quiet = 0;
        }
    }
    Err(Error::NonDecayingKernel {
        horizon: cfg.t_max.as_f64(),
    })
}

/// Integrate f(t) e^{i omega t} over a finite interval, splitting into panels
/// no longer than `panel_max`. Used for the short counting-field segments.
pub fn finite_fourier<T, F>(f: &F, a: T, b: T, omega: T, panel_max: T, order: usize) -> Cplx<T>
where
    T: Scalar,
    F: Fn(T) -> Cplx<T>,
{
    let gl = GaussLegendre::<T>::new(order);
    let phase = |t: T| {
        let arg = omega * t;
        Cplx::new(arg.cos(), arg.sin())
    };
    if a == b {
        return Cplx::new(T::zero(), T::zero());
    }
    if b < a {
        // Oriented interval: swap the endpoints and flip the sign.
        return -finite_fourier(f, b, a, omega, panel_max, order);
    }
    let span = b - a;
    let n = (span / panel_max).ceil().as_f64().max(1.0) as usize;
    let step = span / T::of(n as f64);
    let mut acc = Cplx::new(T::zero(), T::zero());
    let mut lo = a;
    for k in 0..n {
        let hi = if k + 1 == n { b } else { lo + step };
        acc = acc + gl.integrate(lo, hi, |u| f(u) * phase(u));
        lo = hi;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_on_polynomials() {
        let gl = GaussLegendre::<f64>::new(8);
        // An 8-point rule integrates degree 15 exactly: x^14 on [0, 1].
        let got = gl.integrate_real(0.0, 1.0, |x| x.powi(14));
        assert!((got - 1.0 / 15.0).abs() < 1e-15);
    }

    #[test]
    fn adaptive_simpson_decaying_exponential() {
        let f = |x: f64| (-x).exp();
        let got = adaptive_simpson(&f, 0.0, 40.0, 1e-12, "exp").unwrap();
        assert!((got - 1.0).abs() < 1e-10);
    }

    #[test]
    fn pv_against_closed_form() {
        // PV int_0^U 1/(w - nu) dnu = ln(w / (U - w)).
        let w = 1.3f64;
        let u = 10.0f64;
        let got = pv_integral(&|_nu: f64| 1.0, w, u, 1e-12, "const").unwrap();
        let want = (w / (u - w)).ln();
        assert!((got - want).abs() < 1e-10, "got {got} want {want}");
    }

    #[test]
    fn pv_with_exponential_weight() {
        // PV int_0^U e^{-nu} / (w - nu) dnu = e^{-w} [Ei(w) - Ei(w - U)];
        // with w = 2, U = 30 the second term is ~2e-14 and drops out.
        let w = 2.0f64;
        let u = 30.0f64;
        let g = |nu: f64| (-nu).exp();
        let got = pv_integral(&g, w, u, 1e-12, "exp").unwrap();
        let ei_2 = 4.954234356001890; // Ei(2)
        let want = (-w).exp() * ei_2;
        assert!((got - want).abs() < 1e-9, "got {got} want {want}");
    }

    #[test]
    fn fourier_of_exponential_decay() {
        // int_0^inf e^{-t} e^{i w t} dt = 1 / (1 - i w).
        let w = 3.7f64;
        let cfg = OscConfig {
            dense_panel: 0.2,
            dense_until: 10.0,
            tail_panel: std::f64::consts::PI / w,
            decay_rel: 1e-13,
            decay_panels: 3,
            t_max: 200.0,
            order: 16,
        };
        let got = half_line_fourier(&|t: f64| Cplx::new((-t).exp(), 0.0), w, &cfg, 1.0).unwrap();
        let want = Cplx::new(1.0, -w).inv();
        assert!((got - want).norm() < 1e-12);
    }

    #[test]
    fn fourier_flags_non_decaying_input() {
        let cfg = OscConfig {
            dense_panel: 0.5,
            dense_until: 5.0,
            tail_panel: 1.0,
            decay_rel: 1e-13,
            decay_panels: 3,
            t_max: 50.0,
            order: 16,
        };
        let err = half_line_fourier(&|_t: f64| Cplx::new(1.0, 0.0), 2.0, &cfg, 1.0).unwrap_err();
        matches!(err, Error::NonDecayingKernel { .. })
            .then_some(())
            .expect("expected a horizon error");
    }

    #[test]
    fn finite_fourier_matches_closed_form() {
        // int_a^b e^{i w t} dt = (e^{i w b} - e^{i w a}) / (i w).
        let (a, b, w) = (-0.4f64, 0.9f64, 5.0f64);
        let got = finite_fourier(&|_t: f64| Cplx::new(1.0, 0.0), a, b, w, 0.3, 16);
        let iw = Cplx::new(0.0, w);
        let want = ((iw * b).exp() - (iw * a).exp()) / iw;
        assert!((got - want).norm() < 1e-13);
    }
}
