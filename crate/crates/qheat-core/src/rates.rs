//! Transition-rate integrals: half-Fourier transforms of the polaron
//! correlation kernels, full-Fourier blip rates, and the weak-coupling
//! sequential rates.
//!
//! The kernels decay only algebraically at finite temperature (the phase
//! falls off like 1/tau^2), so a naive truncated transform converges slowly.
//! Every transform here first splits off the part of the kernel that is
//! linear in the phase Q and handles it in closed form:
//!
//!   int_0^inf Q(tau) e^{i w tau} dtau = gamma_Q(w),
//!
//! whose real part is pi K(|w|) multiplied by the emission or absorption
//! occupation factor and whose imaginary part is a principal-value integral.
//! What remains under the numeric integral (sinh Q - Q, cosh Q - 1,
//! e^Q - 1 - Q) decays at least like 1/tau^4 and is integrated on graded
//! panels: short ones while the kernel has structure, then period-length
//! ones until the remainder is negligible.
//!
//! Counting fields enter as real shifts of the kernel argument. A shift
//! factors exactly into a phase times the unshifted transform plus a short
//! segment integral over [-chi, 0], which is evaluated directly; dressed
//! rates therefore reuse the cached base rates.

use crate::bath::{bose_occupation, Axis, BathKernel, BathSpec};
use crate::error::{Error, Result};
use crate::quad::{adaptive_simpson, finite_fourier, half_line_fourier, pv_integral, OscConfig};
use crate::scalar::{Cplx, Scalar};
use std::collections::HashMap;
use std::sync::RwLock;

/// Numerical controls for the rate integrals.
#[derive(Debug, Clone, Copy)]
pub struct RateConfig<T> {
    /// Hard horizon for the panel walks.
    pub t_max: T,
    /// Relative decay threshold that ends a tail walk.
    pub decay_rel: T,
    /// Consecutive quiet panels required to stop.
    pub decay_panels: usize,
    /// Gauss-Legendre order per panel.
    pub order: usize,
    /// Relative tolerance of the principal-value side integrals.
    pub pv_rel_tol: T,
    /// Scales all panel lengths; halving it is a convergence diagnostic.
    pub panel_scale: T,
}

impl<T: Scalar> Default for RateConfig<T> {
    fn default() -> Self {
        RateConfig {
            t_max: T::of(500.0),
            decay_rel: T::of(1e-13),
            decay_panels: 3,
            order: 16,
            pv_rel_tol: T::of(1e-11),
            panel_scale: T::one(),
        }
    }
}

/// Which half-Fourier sign a generator entry needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RateSign {
    Plus,
    Minus,
}

/// One rate evaluation request.
#[derive(Debug, Clone, Copy)]
pub struct RateRequest<T> {
    pub axis: Axis,
    pub sign: RateSign,
    /// Bohr frequency.
    pub omega: T,
    /// Counting field (0 when the bath is not counted).
    pub chi: T,
}

/// Direction of a weak-coupling sequential process.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Absorb,
    Emit,
}

/// Sequential rate J(E) n(E)/2 (absorb) or J(E)(1 + n(E))/2 (emit), with the
/// spectral density extended oddly to negative gaps so that absorbing across
/// a negative gap equals emitting across the positive one.
pub fn redfield_sequential_rate<T: Scalar>(
    bath: &BathSpec<T>,
    e_gap: T,
    direction: Direction,
) -> Result<T> {
    if e_gap == T::zero() {
        return Err(Error::ZeroGap);
    }
    let j = {
        let mag = bath.spectral_density(e_gap.abs())?;
        if e_gap > T::zero() {
            mag
        } else {
            -mag
        }
    };
    let n = bose_occupation(bath.temperature, e_gap)?;
    let half = T::of(0.5);
    Ok(match direction {
        Direction::Absorb => j * n * half,
        Direction::Emit => j * (T::one() + n) * half,
    })
}

/// cosh(q) - 1 without cancellation, via 2 sinh^2(q/2).
fn cosh_m1<T: Scalar>(q: Cplx<T>) -> Cplx<T> {
    let h = q * Cplx::new(T::of(0.5), T::zero());
    let s = h.sinh();
    s * s * Cplx::new(T::of(2.0), T::zero())
}

/// sinh(q) - q, series below |q| = 1e-3 to avoid cancellation.
fn sinh_m_lin<T: Scalar>(q: Cplx<T>) -> Cplx<T> {
    if q.norm() < T::of(1e-3) {
        let q2 = q * q;
        let one = Cplx::new(T::one(), T::zero());
        let c1 = Cplx::new(T::of(1.0 / 20.0), T::zero());
        let c2 = Cplx::new(T::of(1.0 / 840.0), T::zero());
        q * q2 * Cplx::new(T::of(1.0 / 6.0), T::zero()) * (one + q2 * (c1 + q2 * c2))
    } else {
        q.sinh() - q
    }
}

/// e^q - 1 - q, series below |q| = 1e-3.
fn exp_m1_m_lin<T: Scalar>(q: Cplx<T>) -> Cplx<T> {
    if q.norm() < T::of(1e-3) {
        let one = Cplx::new(T::one(), T::zero());
        let c = |x: f64| Cplx::new(T::of(x), T::zero());
        let tail = one + q * (c(1.0 / 3.0) + q * (c(1.0 / 12.0) + q * (c(1.0 / 60.0) + q * c(1.0 / 360.0))));
        q * q * c(0.5) * tail
    } else {
        q.exp() - Cplx::new(T::one(), T::zero()) - q
    }
}

/// Closed-plus-PV evaluation of gamma_Q(w) = int_0^inf Q(tau) e^{i w tau} dtau
/// for a single bath component.
///
/// Writing Q as an integral over the spectral measure K and folding the
/// half-line time integral gives
///   Re gamma_Q(w) = pi K(|w|) (1 + n(w))  for w > 0,
///                 = pi K(|w|) n(|w|)      for w < 0,
///                 = pi alpha T / wc^2     at w = 0,
///   Im gamma_Q(w) = PV int_0^inf K(nu) [(1+n)/(w-nu) + n/(w+nu)] dnu,
/// with Im gamma_Q(0) = -alpha/wc in closed form.
pub fn gamma_q<T: Scalar>(spec: &BathSpec<T>, omega: T, pv_rel_tol: T) -> Result<Cplx<T>> {
    let t = spec.temperature;
    let pi = T::of(std::f64::consts::PI);
    // Common small-frequency limit of K(nu) n(nu) and K(nu)(1 + n(nu)).
    let q_limit = spec.alpha * t / (spec.omega_c * spec.omega_c);
    let k_emit = |nu: T| {
        // K(nu) (1 + n(nu)) for nu >= 0.
        if nu == T::zero() {
            q_limit
        } else {
            spec.spectral_k(nu) * (T::one() + bose_occupation(t, nu).unwrap())
        }
    };
    let k_absorb = |nu: T| {
        // K(nu) n(nu) for nu >= 0.
        if nu == T::zero() {
            q_limit
        } else {
            spec.spectral_k(nu) * bose_occupation(t, nu).unwrap()
        }
    };
    if spec.alpha == T::zero() {
        return Ok(Cplx::new(T::zero(), T::zero()));
    }
    if omega == T::zero() {
        return Ok(Cplx::new(pi * q_limit, -spec.alpha / spec.omega_c));
    }
    let upper = spec.omega_max() + T::of(4.0) * omega.abs();
    let (re, im) = if omega > T::zero() {
        let re = pi * k_emit(omega);
        let singular = pv_integral(&k_emit, omega, upper, pv_rel_tol, "gamma_q emit")?;
        let regular = adaptive_simpson(
            &|nu: T| k_absorb(nu) / (omega + nu),
            T::zero(),
            upper,
            pv_rel_tol,
            "gamma_q absorb side",
        )?;
        (re, singular + regular)
    } else {
        let w = -omega;
        let re = pi * k_absorb(w);
        let singular = pv_integral(&k_absorb, w, upper, pv_rel_tol, "gamma_q absorb")?;
        let regular = adaptive_simpson(
            &|nu: T| k_emit(nu) / (omega - nu),
            T::zero(),
            upper,
            pv_rel_tol,
            "gamma_q emit side",
        )?;
        (re, regular - singular)
    };
    Ok(Cplx::new(re, im))
}

/// Cache key kinds for the memoized transforms.
const KIND_GAMMA_X: u8 = 0;
const KIND_GAMMA_Y: u8 = 1;
const KIND_KAPPA: u8 = 2;
const KIND_GAMMA_Q_TOTAL: u8 = 3;
const KIND_GAMMA_Q_COMP: u8 = 8; // + component index
const KIND_SHIFTED_X: u8 = 16; // + axis index * 4 + component index

fn axis_index(axis: Axis) -> u8 {
    match axis {
        Axis::X => 0,
        Axis::Y => 1,
    }
}

/// Rate engine for one reservoir: owns the bath kernel, the qubit tunneling
/// strength it dresses, and a cache of base (chi = 0) transforms.
#[derive(Debug)]
pub struct RateEngine<T> {
    kernel: BathKernel<T>,
    delta: T,
    cfg: RateConfig<T>,
    /// Where the dense panel sweep hands over to period-length panels.
    t_switch: T,
    /// Largest component cutoff; sets the dense panel length.
    wc_max: T,
    /// Magnitude scale of the kernels, used for decay thresholds.
    kernel_scale: T,
    cache: RwLock<HashMap<(u8, u64), Cplx<T>>>,
    /// Component-shifted transforms, keyed by (kind, omega bits, chi bits).
    shifted_cache: RwLock<HashMap<(u8, u64, u64), Cplx<T>>>,
}

impl<T: Scalar> RateEngine<T> {
    pub fn new(kernel: BathKernel<T>, delta: T, cfg: RateConfig<T>) -> Self {
        let wc_max = kernel
            .components()
            .iter()
            .map(|c| c.omega_c)
            .fold(T::zero(), |a, b| a.max(b));
        // Probe |Q| outward to find where kernel structure has died down.
        let step = wc_max.recip();
        let mut t_switch = T::of(3.0) * step;
        let mut t = t_switch;
        for _ in 0..(30.0 * wc_max.as_f64()) as usize {
            if kernel.phase(t).norm() < T::of(0.3) {
                break;
            }
            t += step;
            t_switch = t;
        }
        let q0 = kernel.phase(T::zero());
        let kernel_scale = cosh_m1(q0)
            .norm()
            .max(q0.sinh().norm())
            .max(q0.norm())
            .max(T::of(1e-12));
        RateEngine {
            kernel,
            delta,
            cfg,
            t_switch,
            wc_max,
            kernel_scale,
            cache: RwLock::new(HashMap::new()),
            shifted_cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn kernel(&self) -> &BathKernel<T> {
        &self.kernel
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn config(&self) -> &RateConfig<T> {
        &self.cfg
    }

    /// Entry counts of the (base, counting-shifted) transform caches.
    pub fn cache_stats(&self) -> (usize, usize) {
        (
            self.cache.read().unwrap().len(),
            self.shifted_cache.read().unwrap().len(),
        )
    }

    /// (eta delta / 2)^2, the prefactor of both polaron kernels.
    fn amp(&self) -> T {
        let a = self.kernel.eta * self.delta * T::of(0.5);
        a * a
    }

    /// (delta/2)^2 eta^2, the prefactor of the blip kernel.
    fn amp_niba(&self) -> T {
        let a = self.delta * T::of(0.5);
        a * a * self.kernel.eta_sq_log.exp()
    }

    fn osc_cfg(&self, omega: T) -> OscConfig<T> {
        let dense = T::of(0.5) / self.wc_max * self.cfg.panel_scale;
        let tail = T::of(std::f64::consts::PI) / omega.abs().max(T::of(0.25))
            * self.cfg.panel_scale;
        OscConfig {
            dense_panel: dense,
            dense_until: self.t_switch,
            tail_panel: tail,
            decay_rel: self.cfg.decay_rel,
            decay_panels: self.cfg.decay_panels,
            t_max: self.cfg.t_max,
            order: self.cfg.order,
        }
    }

    fn cached<F>(&self, kind: u8, omega: T, f: F) -> Result<Cplx<T>>
    where
        F: FnOnce() -> Result<Cplx<T>>,
    {
        let key = (kind, omega.as_f64().to_bits());
        if let Some(v) = self.cache.read().unwrap().get(&key) {
            return Ok(*v);
        }
        let v = f()?;
        self.cache.write().unwrap().insert(key, v);
        Ok(v)
    }

    /// Sum of gamma_Q over the kernel components.
    pub fn gamma_q_total(&self, omega: T) -> Result<Cplx<T>> {
        self.cached(KIND_GAMMA_Q_TOTAL, omega, || {
            let mut acc = Cplx::new(T::zero(), T::zero());
            for c in self.kernel.components() {
                acc = acc + gamma_q(c, omega, self.cfg.pv_rel_tol)?;
            }
            Ok(acc)
        })
    }

    fn gamma_q_component(&self, comp: usize, omega: T) -> Result<Cplx<T>> {
        self.cached(KIND_GAMMA_Q_COMP + comp as u8, omega, || {
            gamma_q(&self.kernel.components()[comp], omega, self.cfg.pv_rel_tol)
        })
    }

    /// Base half-Fourier transform Gamma_{a,+}(chi=0, omega)
    /// = int_0^inf C_a(tau) e^{i omega tau} dtau, memoized.
    pub fn gamma_plus(&self, axis: Axis, omega: T) -> Result<Cplx<T>> {
        let kind = match axis {
            Axis::X => KIND_GAMMA_X,
            Axis::Y => KIND_GAMMA_Y,
        };
        self.cached(kind, omega, || {
            let amp = Cplx::new(self.amp(), T::zero());
            let cfg = self.osc_cfg(omega);
            match axis {
                Axis::X => {
                    let f = |tau: T| cosh_m1(self.kernel.phase(tau));
                    let h = half_line_fourier(&f, omega, &cfg, self.kernel_scale)?;
                    Ok(h * amp)
                }
                Axis::Y => {
                    // sinh Q = (sinh Q - Q) + Q; the linear part is analytic.
                    let f = |tau: T| sinh_m_lin(self.kernel.phase(tau));
                    let h = half_line_fourier(&f, omega, &cfg, self.kernel_scale)?;
                    let g = self.gamma_q_total(omega)?;
                    Ok((h + g) * amp)
                }
            }
        })
    }

    /// Counting-shifted transform
    /// Gamma_{a,+}(chi, omega) = int_0^inf C_a(tau - chi) e^{i omega tau} dtau
    ///   = e^{i omega chi} [Gamma_{a,+}(0, omega) + int_{-chi}^0 C_a e^{i omega u} du].
    /// `keep_lamb_shift = false` drops the imaginary (level-shift) part of the
    /// base transform while leaving the counting structure intact.
    pub fn gamma_plus_shifted(
        &self,
        axis: Axis,
        omega: T,
        chi: T,
        keep_lamb_shift: bool,
    ) -> Result<Cplx<T>> {
        let base = self.gamma_plus(axis, omega)?;
        let base = if keep_lamb_shift {
            base
        } else {
            Cplx::new(base.re, T::zero())
        };
        if chi == T::zero() {
            return Ok(base);
        }
        // The segment kernel already carries the (eta delta/2)^2 prefactor.
        let seg = finite_fourier(
            &|u: T| self.kernel.correlation_xy(self.delta, axis, u),
            -chi,
            T::zero(),
            omega,
            T::of(0.5) / self.wc_max,
            self.cfg.order,
        );
        let arg = omega * chi;
        let phase = Cplx::new(arg.cos(), arg.sin());
        Ok(phase * (base + seg))
    }

    /// Full rate dispatch:
    /// Gamma_{a,+}(chi, omega) as above;
    /// Gamma_{a,-}(chi, omega) = conj(Gamma_{a,+}(-chi, -omega)).
    pub fn gamma_half_fourier(&self, req: &RateRequest<T>) -> Result<Cplx<T>> {
        self.gamma_signed(req, true)
    }

    /// As `gamma_half_fourier` with control over the level-shift part.
    pub fn gamma_signed(&self, req: &RateRequest<T>, keep_lamb_shift: bool) -> Result<Cplx<T>> {
        match req.sign {
            RateSign::Plus => {
                self.gamma_plus_shifted(req.axis, req.omega, req.chi, keep_lamb_shift)
            }
            RateSign::Minus => Ok(self
                .gamma_plus_shifted(req.axis, -req.omega, -req.chi, keep_lamb_shift)?
                .conj()),
        }
    }

    /// Kernel value at tau = 0, the boundary term of d Gamma / d chi.
    pub fn correlation_at_zero(&self, axis: Axis) -> Cplx<T> {
        self.kernel.correlation_xy(self.delta, axis, T::zero())
    }

    /// Half-Fourier transform with the counting shift applied to a single
    /// component of a composite kernel: the correlation is built from
    /// Q_rest(tau) + Q_comp(tau - chi). Only the shifted component's linear
    /// phase term picks up the e^{i omega chi} factor and segment integral;
    /// the nonlinear remainder is re-integrated numerically.
    ///
    /// With `keep_lamb_shift = false` the imaginary part of the unshifted base
    /// transform is removed under the dressing phase, matching the
    /// whole-bath convention.
    pub fn gamma_plus_component_shifted(
        &self,
        axis: Axis,
        omega: T,
        comp: usize,
        chi: T,
        keep_lamb_shift: bool,
    ) -> Result<Cplx<T>> {
        if chi == T::zero() {
            return self.gamma_plus_shifted(axis, omega, T::zero(), keep_lamb_shift);
        }
        let comps = self.kernel.components();
        assert!(comp < comps.len(), "no such kernel component");
        let key = (
            KIND_SHIFTED_X + axis_index(axis) * 4 + comp as u8,
            omega.as_f64().to_bits(),
            chi.as_f64().to_bits(),
        );
        let hit = self.shifted_cache.read().unwrap().get(&key).copied();
        if let Some(v) = hit {
            return self.strip_lamb(axis, omega, chi, v, keep_lamb_shift);
        }
        let q_shifted = |tau: T| {
            let mut q = Cplx::new(T::zero(), T::zero());
            for (i, c) in comps.iter().enumerate() {
                let arg = if i == comp { tau - chi } else { tau };
                q = q + c.phase(arg);
            }
            q
        };
        let cfg = self.osc_cfg(omega);
        let amp = Cplx::new(self.amp(), T::zero());
        let full = match axis {
            Axis::X => {
                let f = |tau: T| cosh_m1(q_shifted(tau));
                half_line_fourier(&f, omega, &cfg, self.kernel_scale)? * amp
            }
            Axis::Y => {
                let f = |tau: T| sinh_m_lin(q_shifted(tau));
                let h = half_line_fourier(&f, omega, &cfg, self.kernel_scale)?;
                let mut lin = Cplx::new(T::zero(), T::zero());
                for (i, c) in comps.iter().enumerate() {
                    let g = self.gamma_q_component(i, omega)?;
                    if i == comp {
                        let seg = finite_fourier(
                            &|u: T| c.phase(u),
                            -chi,
                            T::zero(),
                            omega,
                            T::of(0.5) / self.wc_max,
                            self.cfg.order,
                        );
                        let arg = omega * chi;
                        lin = lin + Cplx::new(arg.cos(), arg.sin()) * (g + seg);
                    } else {
                        lin = lin + g;
                    }
                }
                (h + lin) * amp
            }
        };
        self.shifted_cache.write().unwrap().insert(key, full);
        self.strip_lamb(axis, omega, chi, full, keep_lamb_shift)
    }

    /// Remove the level-shift (imaginary) part of the chi = 0 base transform
    /// underneath the counting phase: Gamma(chi) - i Im Gamma(0) e^{i w chi}.
    fn strip_lamb(
        &self,
        axis: Axis,
        omega: T,
        chi: T,
        full: Cplx<T>,
        keep_lamb_shift: bool,
    ) -> Result<Cplx<T>> {
        if keep_lamb_shift {
            return Ok(full);
        }
        let base_im = self.gamma_plus(axis, omega)?.im;
        let arg = omega * chi;
        Ok(full - Cplx::new(arg.cos(), arg.sin()) * Cplx::new(T::zero(), base_im))
    }

    /// Blip rate kappa(E) = int_-inf^inf D(tau) e^{i E tau} dtau, real and
    /// nonnegative. For E = 0 the constant long-time plateau of D makes the
    /// integral horizon-limited; it is regularized over [-t_max, t_max] and
    /// grows linearly with that horizon (only decoupled devices hit E = 0).
    pub fn niba_rate(&self, e_gap: T) -> Result<T> {
        let v = self.cached(KIND_KAPPA, e_gap, || {
            let amp2 = self.amp_niba();
            let cfg = self.osc_cfg(e_gap);
            let scale = self.kernel.phase(T::zero()).re.exp().max(T::one());
            let f = |tau: T| exp_m1_m_lin(self.kernel.phase(tau));
            let h = half_line_fourier(&f, e_gap, &cfg, scale)?;
            let g = self.gamma_q_total(e_gap)?;
            let two = T::of(2.0);
            let mut kappa = two * (h.re + g.re);
            if e_gap == T::zero() {
                // The subtracted constant contributes its horizon length.
                kappa += two * self.cfg.t_max;
            }
            Ok(Cplx::new(amp2 * kappa, T::zero()))
        })?;
        let kappa = v.re;
        let floor = -T::of(1e-12) * self.amp_niba().max(T::of(1e-30));
        if kappa < floor {
            return Err(Error::QuadratureFailure {
                context: format!("blip rate at E = {} came out negative: {}", e_gap, kappa),
            });
        }
        Ok(kappa.max(T::zero()))
    }

    /// Counting-dressed blip rate: exactly a phase on the cached base rate.
    pub fn niba_rate_counted(&self, e_gap: T, chi: T) -> Result<Cplx<T>> {
        let kappa = self.niba_rate(e_gap)?;
        let arg = e_gap * chi;
        Ok(Cplx::new(arg.cos(), arg.sin()) * Cplx::new(kappa, T::zero()))
    }

    /// Blip rate with the counting shift applied to a single component of a
    /// composite kernel: kappa_v(E; chi) with only Q_v evaluated at tau - chi.
    /// Via D(-tau; chi) = conj(D(tau; -chi)) this is
    /// H[D(.;chi)](E) + conj(H[D(.;-chi)](E)), each half evaluated with the
    /// linear-in-Q parts in closed form.
    pub fn niba_rate_component_counted(
        &self,
        e_gap: T,
        comp: usize,
        chi: T,
    ) -> Result<Cplx<T>> {
        if e_gap == T::zero() {
            return Err(Error::ZeroGap);
        }
        let plus = self.niba_half_shifted(e_gap, comp, chi)?;
        let minus = self.niba_half_shifted(e_gap, comp, -chi)?.conj();
        Ok((plus + minus) * Cplx::new(self.amp_niba(), T::zero()))
    }

    /// H[e^{Q_rest + Q_comp(. - chi)}](E) with 1 and the linear phase terms
    /// split off: the constant gives i/E, the unshifted components give their
    /// gamma_Q, and the shifted one gives a phase times gamma_Q plus a short
    /// segment integral.
    fn niba_half_shifted(&self, e_gap: T, comp: usize, chi: T) -> Result<Cplx<T>> {
        let comps = self.kernel.components();
        assert!(comp < comps.len(), "no such kernel component");
        let q_shifted = |tau: T| {
            let mut q = Cplx::new(T::zero(), T::zero());
            for (i, c) in comps.iter().enumerate() {
                let arg = if i == comp { tau - chi } else { tau };
                q = q + c.phase(arg);
            }
            q
        };
        let cfg = self.osc_cfg(e_gap);
        let scale = self.kernel.phase(T::zero()).re.exp().max(T::one());
        let f = |tau: T| exp_m1_m_lin(q_shifted(tau));
        let h_rem = half_line_fourier(&f, e_gap, &cfg, scale)?;
        let h_const = Cplx::new(T::zero(), e_gap.recip());
        let mut h_lin = Cplx::new(T::zero(), T::zero());
        for (i, _) in comps.iter().enumerate() {
            if i == comp {
                let g = self.gamma_q_component(i, e_gap)?;
                let seg = finite_fourier(
                    &|u: T| comps[i].phase(u),
                    -chi,
                    T::zero(),
                    e_gap,
                    T::of(0.5) / self.wc_max,
                    self.cfg.order,
                );
                let arg = e_gap * chi;
                h_lin = h_lin + Cplx::new(arg.cos(), arg.sin()) * (g + seg);
            } else {
                h_lin = h_lin + self.gamma_q_component(i, e_gap)?;
            }
        }
        Ok(h_rem + h_const + h_lin)
    }

    /// Lowest-order two-phonon approximation to Re Gamma_{x,+}:
    /// (eta delta/2)^2 (pi/2) (q * q)(omega) with q the spectral weight of Q
    /// (emission branch for positive frequency, absorption for negative).
    /// Asymptotic oracle for the x-channel as alpha -> 0.
    pub fn gamma_x_lowest_order(&self, omega: T) -> Result<T> {
        let comps = self.kernel.components();
        let q_weight = |nu: T| {
            let mut acc = T::zero();
            for c in comps {
                let t = c.temperature;
                acc += if nu == T::zero() {
                    c.alpha * t / (c.omega_c * c.omega_c)
                } else if nu > T::zero() {
                    c.spectral_k(nu) * (T::one() + bose_occupation(t, nu).unwrap())
                } else {
                    c.spectral_k(-nu) * bose_occupation(t, -nu).unwrap()
                };
            }
            acc
        };
        let l = comps
            .iter()
            .map(|c| c.omega_max())
            .fold(T::zero(), |a, b| a.max(b));
        // Integrand kinks sit at nu = 0 and nu = omega; split there.
        let mut cuts = vec![-l, T::zero(), omega, omega + l];
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let f = |nu: T| q_weight(nu) * q_weight(omega - nu);
        let mut acc = T::zero();
        for w in cuts.windows(2) {
            if w[1] > w[0] {
                acc += adaptive_simpson(&f, w[0], w[1], self.cfg.pv_rel_tol, "x convolution")?;
            }
        }
        Ok(self.amp() * T::of(std::f64::consts::PI * 0.5) * acc)
    }
}

/// (1 - e^{-i x chi}) / (i x), the finite-window Fourier factor
/// int_{-chi}^0 e^{i x u} du, evaluated stably near x = 0.
fn window_factor<T: Scalar>(x: T, chi: T) -> Cplx<T> {
    let y = x * chi;
    if y.abs() < T::of(1e-4) {
        // chi (sin y / y - i (1 - cos y)/y), expanded
        let y2 = y * y;
        let re = T::one() - y2 / T::of(6.0) + y2 * y2 / T::of(120.0);
        let im = -y * T::of(0.5) + y * y2 / T::of(24.0);
        Cplx::new(re * chi, im * chi)
    } else {
        // 1 - cos y = 2 sin^2(y/2) avoids cancellation for small y.
        let s = (y * T::of(0.5)).sin();
        let re = y.sin() / y;
        let im = -(s * s * T::of(2.0)) / y;
        Cplx::new(re * chi, im * chi)
    }
}

/// Lab-frame rates for the weak-coupling master equation: the coupling is
/// (sigma_z/2) per qubit, so the spectral weight is J(|nu|)/(4 pi) times the
/// emission or absorption occupation. These rates need no time integration;
/// the half-Fourier transform is pi S(omega) plus a principal-value integral.
#[derive(Debug)]
pub struct SpectralRates<T> {
    components: Vec<BathSpec<T>>,
    pv_rel_tol: T,
    base: RwLock<HashMap<u64, Cplx<T>>>,
    segs: RwLock<HashMap<(u64, u64), Cplx<T>>>,
}

impl<T: Scalar> SpectralRates<T> {
    pub fn new(kernel: &BathKernel<T>, pv_rel_tol: T) -> Self {
        SpectralRates {
            components: kernel.components().to_vec(),
            pv_rel_tol,
            base: RwLock::new(HashMap::new()),
            segs: RwLock::new(HashMap::new()),
        }
    }

    /// S_z(nu): emission branch for nu > 0, absorption for nu < 0, 0 at 0
    /// (super-Ohmic J kills the thermal enhancement).
    pub fn spectral_weight(&self, nu: T) -> T {
        if nu == T::zero() {
            return T::zero();
        }
        let quarter = T::of(0.25 / std::f64::consts::PI);
        let mut acc = T::zero();
        for c in &self.components {
            let j = c.spectral_density(nu.abs()).unwrap();
            let occ = if nu > T::zero() {
                T::one() + bose_occupation(c.temperature, nu).unwrap()
            } else {
                bose_occupation(c.temperature, -nu).unwrap()
            };
            acc += j * occ * quarter;
        }
        acc
    }

    fn upper(&self, omega: T) -> T {
        self.components
            .iter()
            .map(|c| c.omega_max())
            .fold(T::zero(), |a, b| a.max(b))
            + T::of(4.0) * omega.abs()
    }

    /// Gamma_z(omega) = pi S_z(omega) + i PV int S_z(nu)/(omega - nu) d nu.
    pub fn gamma_z(&self, omega: T) -> Result<Cplx<T>> {
        let key = omega.as_f64().to_bits();
        if let Some(v) = self.base.read().unwrap().get(&key) {
            return Ok(*v);
        }
        let pi = T::of(std::f64::consts::PI);
        let v = if omega == T::zero() {
            // PV reduces to -int_0^inf J(nu)/(4 pi nu) d nu = -alpha wc / 2
            // per component (closed form for the cubic-exponential J).
            let mut im = T::zero();
            for c in &self.components {
                im -= c.alpha * c.omega_c * T::of(0.5);
            }
            Cplx::new(T::zero(), im)
        } else {
            let upper = self.upper(omega);
            let s_pos = |nu: T| self.spectral_weight(nu);
            let s_neg = |nu: T| self.spectral_weight(-nu);
            let re = pi * self.spectral_weight(omega);
            let im = if omega > T::zero() {
                let singular = pv_integral(&s_pos, omega, upper, self.pv_rel_tol, "gamma_z emit")?;
                let regular = adaptive_simpson(
                    &|nu: T| s_neg(nu) / (omega + nu),
                    T::zero(),
                    upper,
                    self.pv_rel_tol,
                    "gamma_z absorb side",
                )?;
                singular + regular
            } else {
                let singular =
                    pv_integral(&s_neg, -omega, upper, self.pv_rel_tol, "gamma_z absorb")?;
                let regular = adaptive_simpson(
                    &|nu: T| s_pos(nu) / (omega - nu),
                    T::zero(),
                    upper,
                    self.pv_rel_tol,
                    "gamma_z emit side",
                )?;
                regular - singular
            };
            Cplx::new(re, im)
        };
        self.base.write().unwrap().insert(key, v);
        Ok(v)
    }

    /// Counting-dressed rate; the time-domain segment integral is folded back
    /// through the spectral weight:
    /// int_{-chi}^0 C_z(u) e^{i w u} du = int S_z(nu) window(w - nu; chi) d nu.
    pub fn gamma_z_shifted(&self, omega: T, chi: T, keep_lamb_shift: bool) -> Result<Cplx<T>> {
        let base = self.gamma_z(omega)?;
        let base = if keep_lamb_shift {
            base
        } else {
            Cplx::new(base.re, T::zero())
        };
        if chi == T::zero() {
            return Ok(base);
        }
        let seg_key = (omega.as_f64().to_bits(), chi.as_f64().to_bits());
        let hit = self.segs.read().unwrap().get(&seg_key).copied();
        let seg = match hit {
            Some(v) => v,
            None => {
                let upper = self.upper(omega);
                let f = |nu: T| self.spectral_weight(nu) * window_factor(omega - nu, chi).re;
                let g = |nu: T| self.spectral_weight(nu) * window_factor(omega - nu, chi).im;
                let mut re = T::zero();
                let mut im = T::zero();
                for (a, b) in [(-upper, T::zero()), (T::zero(), upper)] {
                    re += adaptive_simpson(&f, a, b, self.pv_rel_tol, "seg re")?;
                    im += adaptive_simpson(&g, a, b, self.pv_rel_tol, "seg im")?;
                }
                let v = Cplx::new(re, im);
                self.segs.write().unwrap().insert(seg_key, v);
                v
            }
        };
        let arg = omega * chi;
        Ok(Cplx::new(arg.cos(), arg.sin()) * (base + seg))
    }

    /// Dispatch matching the polaron engine's sign convention:
    /// Gamma_-(chi, w) = conj(Gamma_+(-chi, -w)).
    pub fn gamma_z_signed(
        &self,
        sign: RateSign,
        omega: T,
        chi: T,
        keep_lamb_shift: bool,
    ) -> Result<Cplx<T>> {
        match sign {
            RateSign::Plus => self.gamma_z_shifted(omega, chi, keep_lamb_shift),
            RateSign::Minus => Ok(self
                .gamma_z_shifted(-omega, -chi, keep_lamb_shift)?
                .conj()),
        }
    }

    /// C_z(0) = int S_z, the boundary term of the counting derivative.
    pub fn correlation_at_zero(&self) -> Result<T> {
        let upper = self.upper(T::zero());
        let f = |nu: T| self.spectral_weight(nu);
        let mut acc = T::zero();
        for (a, b) in [(-upper, T::zero()), (T::zero(), upper)] {
            acc += adaptive_simpson(&f, a, b, self.pv_rel_tol, "c_z(0)")?;
        }
        Ok(acc)
    }
}
