//! Bath-only quantities: spectral density, Bose occupation, renormalization
//! factor, phase function Q(tau), and the polaron correlation kernels built
//! from it.
//!
//! All bath sums are taken in the continuum limit with the super-Ohmic
//! spectral density J(w) = pi a w^3 e^{-w/wc} / wc^2. For that form the phase
//! admits a closed form in terms of the trigamma function,
//!
//!   Q(tau) = a (1 - x^2)/(1 + x^2)^2 - 2 i a x/(1 + x^2)^2
//!          + (2 a T^2/wc^2) Re psi_1(1 + T/wc - i T tau),   x = wc tau,
//!
//! which the kernels use directly because rate integrals evaluate Q at
//! thousands of points; the defining quadrature remains available and the
//! two are cross-checked in tests.

use crate::error::{Error, Result};
use crate::quad::{adaptive_simpson, GaussLegendre};
use crate::scalar::{Cplx, Scalar};
use crate::special::trigamma;

/// One bosonic reservoir.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathSpec<T> {
    /// Dimensionless coupling strength.
    pub alpha: T,
    /// Cutoff frequency of the super-Ohmic spectrum.
    pub omega_c: T,
    /// Temperature (k_B = 1).
    pub temperature: T,
}

/// Tolerances for the defining bath integrals.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureConfig<T> {
    pub rel_tol: T,
}

impl<T: Scalar> Default for QuadratureConfig<T> {
    fn default() -> Self {
        QuadratureConfig {
            rel_tol: T::of(1e-12),
        }
    }
}

/// Bose occupation n(w) = 1/(e^{w/T} - 1). Negative w is allowed and obeys
/// n(-w) = -(1 + n(w)); w = 0 is singular and must be handled by the caller.
pub fn bose_occupation<T: Scalar>(temperature: T, omega: T) -> Result<T> {
    if omega == T::zero() {
        return Err(Error::ZeroFrequency);
    }
    Ok((omega / temperature).exp_m1().recip())
}

impl<T: Scalar> BathSpec<T> {
    /// Check parameter ranges, including the supported temperature floor.
    pub fn validate(&self) -> Result<()> {
        if self.alpha < T::zero() || self.omega_c <= T::zero() {
            return Err(Error::InvalidSpec(format!(
                "bath needs alpha >= 0 and omega_c > 0, got alpha={}, omega_c={}",
                self.alpha, self.omega_c
            )));
        }
        let min_t = T::of(1e-3) * self.omega_c;
        if self.temperature < min_t {
            return Err(Error::TemperatureTooLow {
                t: self.temperature.as_f64(),
                min: min_t.as_f64(),
            });
        }
        Ok(())
    }

    /// Super-Ohmic spectral density J(w) = pi a w^3 e^{-w/wc} / wc^2, w >= 0.
    pub fn spectral_density(&self, omega: T) -> Result<T> {
        if omega < T::zero() {
            return Err(Error::NegativeFrequency(omega.as_f64()));
        }
        let x = omega / self.omega_c;
        Ok(T::of(std::f64::consts::PI) * self.alpha * omega * x * x * (-x).exp())
    }

    /// K(w) = J(w)/(pi w^2) = (a/wc^2) w e^{-w/wc}, the measure every phase
    /// integral is taken against. Defined for w >= 0.
    pub fn spectral_k(&self, omega: T) -> T {
        if omega < T::zero() {
            return T::zero();
        }
        self.alpha / (self.omega_c * self.omega_c) * omega * (-omega / self.omega_c).exp()
    }

    /// Upper integration limit for bath integrals: far enough out that both
    /// the e^{-w/wc} cutoff and the thermal factor are below 1e-16.
    pub fn omega_max(&self) -> T {
        let stretch = T::of(40.0).max(T::of(10.0) * self.omega_c / self.temperature);
        self.omega_c * stretch
    }

    /// Renormalization factor eta = exp[-int_0^inf K(w) coth(w/2T) dw],
    /// evaluated by adaptive quadrature.
    pub fn renorm_factor(&self, quadrature: &QuadratureConfig<T>) -> Result<T> {
        self.validate()?;
        if self.alpha == T::zero() {
            return Ok(T::one());
        }
        let two_t = self.temperature + self.temperature;
        let a_over = self.alpha / (self.omega_c * self.omega_c);
        let f = |w: T| {
            if w == T::zero() {
                // K(w) coth(w/2T) -> (a/wc^2) * 2T as w -> 0.
                a_over * two_t
            } else {
                self.spectral_k(w) / (w / two_t).tanh()
            }
        };
        let integral = adaptive_simpson(&f, T::zero(), self.omega_max(), quadrature.rel_tol, "renorm_factor")?;
        // The integral equals Q(0); eta^2 e^{Q(0)} = 1 fixes the exponent.
        Ok((-integral * T::of(0.5)).exp())
    }

    /// Phase function Q(tau) in closed form via the trigamma function.
    pub fn phase(&self, tau: T) -> Cplx<T> {
        let a = self.alpha;
        let wc = self.omega_c;
        let t = self.temperature;
        let x = wc * tau;
        let den = {
            let d = T::one() + x * x;
            d * d
        };
        let vac_re = a * (T::one() - x * x) / den;
        let vac_im = -(a + a) * x / den;
        let z = Cplx::new(T::one() + t / wc, -(t * tau));
        let thermal = (a + a) * t * t / (wc * wc) * trigamma(z).re;
        Cplx::new(vac_re + thermal, vac_im)
    }

    /// Q(tau) from its defining integral
    /// int_0^inf K(w) [coth(w/2T) cos w tau - i sin w tau] dw,
    /// by fixed panels short enough for both the cutoff and the oscillation.
    /// Used to audit the closed form.
    pub fn phase_quadrature(&self, tau: T) -> Cplx<T> {
        let gl = GaussLegendre::<T>::new(32);
        let two_t = self.temperature + self.temperature;
        let a_over = self.alpha / (self.omega_c * self.omega_c);
        let f = |w: T| {
            let re = if w == T::zero() {
                a_over * two_t
            } else {
                self.spectral_k(w) / (w / two_t).tanh()
            };
            let arg = w * tau;
            Cplx::new(re * arg.cos(), -self.spectral_k(w) * arg.sin())
        };
        let panel = (self.omega_c * T::of(0.5))
            .min(T::of(std::f64::consts::PI) / (T::of(2.0) * (T::one() + tau.abs())));
        let hi = self.omega_max();
        let n = (hi / panel).ceil().as_f64() as usize;
        let step = hi / T::of(n as f64);
        let mut acc = Cplx::new(T::zero(), T::zero());
        let mut lo = T::zero();
        for _ in 0..n {
            acc = acc + gl.integrate(lo, lo + step, f);
            lo += step;
        }
        acc
    }
}

/// Which polaron correlation kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
}

/// A bath with its phase function cached for kernel evaluation. A kernel
/// holds one component in two-terminal mode or two components (hot and cold)
/// for the composite left reservoir in three-terminal mode; phases add and
/// the renormalization factors multiply.
#[derive(Debug, Clone)]
pub struct BathKernel<T> {
    components: Vec<BathSpec<T>>,
    /// Renormalization factor eta (product over components).
    pub eta: T,
    /// ln(eta^2) = -Q(0), cached so kernels can use e^{Q(tau) - Q(0)} forms
    /// that make identities like D(0) = (delta/2)^2 exact.
    pub eta_sq_log: T,
}

impl<T: Scalar> BathKernel<T> {
    pub fn new(spec: BathSpec<T>) -> Result<Self> {
        spec.validate()?;
        let q0 = spec.phase(T::zero()).re;
        Ok(BathKernel {
            components: vec![spec],
            eta: (-q0 * T::of(0.5)).exp(),
            eta_sq_log: -q0,
        })
    }

    /// Composite kernel for a qubit coupled to two reservoirs at once.
    pub fn composite(hot: BathSpec<T>, cold: BathSpec<T>) -> Result<Self> {
        hot.validate()?;
        cold.validate()?;
        let q0 = hot.phase(T::zero()).re + cold.phase(T::zero()).re;
        Ok(BathKernel {
            components: vec![hot, cold],
            eta: (-q0 * T::of(0.5)).exp(),
            eta_sq_log: -q0,
        })
    }

    pub fn components(&self) -> &[BathSpec<T>] {
        &self.components
    }

    pub fn is_composite(&self) -> bool {
        self.components.len() > 1
    }

    /// Temperature, defined only for a single-component kernel.
    pub fn temperature(&self) -> Option<T> {
        if self.components.len() == 1 {
            Some(self.components[0].temperature)
        } else {
            None
        }
    }

    /// Total phase Q(tau), summed over components.
    pub fn phase(&self, tau: T) -> Cplx<T> {
        let mut q = Cplx::new(T::zero(), T::zero());
        for c in &self.components {
            q = q + c.phase(tau);
        }
        q
    }

    /// Polaron correlation kernel:
    /// C_x = (eta delta / 2)^2 [cosh Q - 1], C_y = (eta delta / 2)^2 sinh Q.
    /// A counting field enters as a real shift of tau, applied by the caller.
    pub fn correlation_xy(&self, delta: T, axis: Axis, tau: T) -> Cplx<T> {
        let amp = {
            let a = self.eta * delta * T::of(0.5);
            a * a
        };
        let q = self.phase(tau);
        let body = match axis {
            Axis::X => q.cosh() - Cplx::new(T::one(), T::zero()),
            Axis::Y => q.sinh(),
        };
        body * Cplx::new(amp, T::zero())
    }

    /// Blip kernel D(tau) = (delta/2)^2 eta^2 e^{Q(tau)}, computed as
    /// (delta/2)^2 e^{Q(tau) - Q(0)} so that D(0) = (delta/2)^2 exactly.
    pub fn niba_kernel(&self, delta: T, tau: T) -> Cplx<T> {
        let amp = {
            let a = delta * T::of(0.5);
            a * a
        };
        let q = self.phase(tau) + Cplx::new(self.eta_sq_log, T::zero());
        q.exp() * Cplx::new(amp, T::zero())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(alpha: f64, omega_c: f64, t: f64) -> BathSpec<f64> {
        BathSpec {
            alpha,
            omega_c,
            temperature: t,
        }
    }

    #[test]
    fn spectral_density_values() {
        let b = spec(1.0, 5.0, 1.5);
        assert_eq!(b.spectral_density(0.0).unwrap(), 0.0);
        // J(wc) = pi * wc / e.
        let got = b.spectral_density(5.0).unwrap();
        assert!((got - 5.778636748954608).abs() < 1e-12);
        // Maximum sits at 3 wc.
        let peak = b.spectral_density(15.0).unwrap();
        assert!(peak > b.spectral_density(14.9).unwrap());
        assert!(peak > b.spectral_density(15.1).unwrap());
        assert!(b.spectral_density(-1.0).is_err());
    }

    #[test]
    fn bose_values_and_reflection() {
        let n = bose_occupation(0.6f64, 1.2).unwrap();
        assert!((n - 0.156517642749665652).abs() < 1e-15);
        let n2 = bose_occupation(2.0f64, 1.2).unwrap();
        assert!((n2 - 1.216369215160870795).abs() < 1e-14);
        for (t, w) in [(1.5f64, 0.8f64), (0.5, 1.2), (2.0, 0.1)] {
            let plus = bose_occupation(t, w).unwrap();
            let minus = bose_occupation(t, -w).unwrap();
            assert!((minus + 1.0 + plus).abs() < 1e-13);
        }
        assert!(bose_occupation(1.0f64, 0.0).is_err());
    }

    #[test]
    fn renorm_factor_reference_values() {
        let quad = QuadratureConfig::default();
        assert_eq!(spec(0.0, 5.0, 1.5).renorm_factor(&quad).unwrap(), 1.0);
        let cases = [
            (0.05, 5.0, 1.5, 0.9703444761688526),
            (0.01, 5.0, 1.5, 0.9939972607724360),
            (3.0, 5.0, 2.0, 0.1363989592881430),
            (3.0, 5.0, 0.2, 0.2214722862390532),
            (5.0, 5.0, 2.0, 0.0361425198190344),
        ];
        for (a, wc, t, want) in cases {
            let got = spec(a, wc, t).renorm_factor(&quad).unwrap();
            assert!(
                (got - want).abs() < 1e-11 * want.max(1e-3),
                "eta({a},{wc},{t}) = {got}, want {want}"
            );
        }
        // Monotone decrease with coupling strength.
        let e1 = spec(0.5, 5.0, 1.5).renorm_factor(&quad).unwrap();
        let e2 = spec(1.0, 5.0, 1.5).renorm_factor(&quad).unwrap();
        assert!(e2 < e1 && e1 < 1.0);
    }

    #[test]
    fn phase_closed_form_reference_values() {
        let b = spec(5.0, 5.0, 2.0);
        let q0 = b.phase(0.0);
        assert!(q0.im.abs() < 1e-15);
        assert!((q0.re - 6.640570544847356).abs() < 1e-12);
        let q = b.phase(0.7);
        assert!((q.re - 0.2281096107588283).abs() < 1e-13);
        assert!((q.im + 0.1993592025631897).abs() < 1e-13);
        let weak = spec(0.05, 5.0, 1.5).phase(0.3);
        assert!((weak.re - 0.0024436131117666888).abs() < 1e-15);
        assert!((weak.im + 0.0142011834319526635).abs() < 1e-15);
    }

    #[test]
    fn phase_time_reversal_and_decay() {
        let b = spec(5.0, 5.0, 2.0);
        for tau in [0.1, 0.7, 3.0, 10.0] {
            let q = b.phase(tau);
            let qm = b.phase(-tau);
            assert!((qm - q.conj()).norm() < 1e-15);
        }
        assert!(b.phase(400.0).norm() < 1e-4);
    }

    #[test]
    fn phase_matches_defining_quadrature() {
        for b in [spec(0.05, 5.0, 1.5), spec(5.0, 5.0, 2.0), spec(1.0, 5.0, 0.2)] {
            for tau in [0.0, 0.3, 0.7, 2.0] {
                let closed = b.phase(tau);
                let quad = b.phase_quadrature(tau);
                assert!(
                    (closed - quad).norm() < 1e-9,
                    "Q mismatch at alpha={}, tau={tau}: {closed} vs {quad}",
                    b.alpha
                );
            }
        }
    }

    #[test]
    fn phase_imaginary_part_is_temperature_independent() {
        let cold = spec(1.0, 5.0, 0.5).phase_quadrature(0.9);
        let hot = spec(1.0, 5.0, 2.0).phase_quadrature(0.9);
        assert!((cold.im - hot.im).abs() < 1e-10);
    }

    #[test]
    fn renorm_and_phase_are_consistent() {
        let quad = QuadratureConfig::default();
        for b in [spec(0.01, 5.0, 1.5), spec(0.5, 5.0, 0.5), spec(5.0, 5.0, 2.0)] {
            let eta = b.renorm_factor(&quad).unwrap();
            let q0 = b.phase(0.0).re;
            assert!(
                (eta * eta * q0.exp() - 1.0).abs() < 1e-10,
                "eta^2 e^Q0 != 1 at alpha={}",
                b.alpha
            );
        }
    }

    #[test]
    fn composite_kernel_combines_components() {
        let hot = spec(3.0, 5.0, 2.0);
        let cold = spec(3.0, 5.0, 0.2);
        let k = BathKernel::composite(hot, cold).unwrap();
        // eta_L = eta_hot * eta_cold.
        assert!((k.eta - 0.030208589354172567).abs() < 1e-12);
        // Identical components double the phase.
        let twin = BathKernel::composite(hot, hot).unwrap();
        let single = BathKernel::new(hot).unwrap();
        let tau = 0.4;
        assert!((twin.phase(tau) - single.phase(tau) * Cplx::new(2.0, 0.0)).norm() < 1e-15);
        // A free component reduces to the other bath.
        let off = BathKernel::composite(hot, spec(0.0, 5.0, 0.2)).unwrap();
        assert!((off.phase(tau) - single.phase(tau)).norm() < 1e-15);
        assert!((off.eta - single.eta).abs() < 1e-15);
    }

    #[test]
    fn correlation_kernels_reduce_and_decay() {
        let k = BathKernel::new(spec(5.0, 5.0, 2.0)).unwrap();
        assert_eq!(k.correlation_xy(0.0, Axis::X, 0.3).norm(), 0.0);
        assert_eq!(k.correlation_xy(0.0, Axis::Y, 0.3).norm(), 0.0);
        // C_x(0) against a direct evaluation of the stated composition.
        let q0 = k.phase(0.0);
        let want = (k.eta * 0.5) * (k.eta * 0.5) * (q0.cosh().re - 1.0);
        let got = k.correlation_xy(1.0, Axis::X, 0.0);
        assert!((got.re - want).abs() < 1e-12 * want.abs());
        assert!(got.im.abs() < 1e-15);
        // Kernels vanish at long times.
        assert!(k.correlation_xy(1.0, Axis::X, 300.0).norm() < 1e-6);
        assert!(k.correlation_xy(1.0, Axis::Y, 300.0).norm() < 1e-6);
        // Hermiticity in tau.
        for tau in [0.2, 1.1] {
            for axis in [Axis::X, Axis::Y] {
                let p = k.correlation_xy(1.0, axis, tau);
                let m = k.correlation_xy(1.0, axis, -tau);
                assert!((m - p.conj()).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn niba_kernel_identities() {
        let k = BathKernel::new(spec(5.0, 5.0, 2.0)).unwrap();
        let d0 = k.niba_kernel(1.0, 0.0);
        assert!((d0.re - 0.25).abs() < 1e-15);
        assert!(d0.im.abs() < 1e-15);
        let d = k.niba_kernel(1.0, 0.8);
        let dm = k.niba_kernel(1.0, -0.8);
        assert!((dm - d.conj()).norm() < 1e-16);
        // Long-time plateau (delta/2)^2 eta^2.
        let far = k.niba_kernel(1.0, 500.0);
        let plateau = 0.25 * k.eta * k.eta;
        assert!((far.re - plateau).abs() < 1e-5 * plateau.max(1e-6));
    }

    #[test]
    fn temperature_floor_is_enforced() {
        let b = spec(1.0, 5.0, 1e-4);
        assert!(matches!(
            b.validate(),
            Err(Error::TemperatureTooLow { .. })
        ));
        assert!(BathKernel::new(b).is_err());
    }
}
