//! Counting-field-tilted generators, steady states, and current cumulants.
//!
//! Three generator families share one interface:
//!
//! * [`Scheme::NePtre`]: the polaron-frame master equation, a 16x16
//!   vectorized superoperator whose gain terms carry the counting field of
//!   the monitored reservoir. Valid from weak to strong coupling.
//! * [`Scheme::Redfield`]: the weak-coupling equation in the lab frame,
//!   either as the full 16x16 non-secular superoperator or as a 4x4
//!   eigenstate-population rate matrix ([`RedfieldForm`]).
//! * [`Scheme::Niba`]: a 4x4 kinetic matrix over the local product states
//!   with blip-integral rates, the strong-coupling limit.
//!
//! A [`TiltedGenerator`] assembles the dim x dim complex matrix `L(chi)` on
//! demand. At `chi = 0` the matrix is trace preserving and its null vector is
//! the steady state; the eigenvalue branch through 0 is the cumulant
//! generating function of heat deposited in the counted reservoir, and its
//! chi-derivatives at 0 are the current and the noise.
//!
//! Vectorization is column stacking: entry (i, j) of a 4x4 density matrix
//! lives at index `j*4 + i`, so `vec(A rho B) = (B^T kron A) vec(rho)`.

use std::sync::{Arc, RwLock};

use crate::bath::{bose_occupation, Axis, BathKernel, BathSpec};
use crate::error::{Error, Result};
use crate::linalg::{eig_values, eigenvector_for, vdot, vnorm, CMat, Lu};
use crate::model::{
    local_basis_energies, sigma_x, sigma_y, sigma_z, PolaronFrame, Side, SystemSpec, Terminal,
};
use crate::rates::{redfield_sequential_rate, Direction, RateConfig, RateEngine, SpectralRates};
use crate::scalar::{cre, Cplx, Scalar};

/// Which master-equation treatment backs a generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Redfield,
    NePtre,
    Niba,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Redfield => "redfield",
            Scheme::NePtre => "ne-ptre",
            Scheme::Niba => "niba",
        }
    }
}

/// Realization of the Redfield scheme: the full 16x16 superoperator, or the
/// 4x4 rate matrix over eigenstate populations that it reduces to once
/// coherences have died out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RedfieldForm {
    Full,
    Population,
}

/// Numerical policy for generator assembly and the cumulant extraction.
#[derive(Debug, Clone)]
pub struct SolverOptions<T> {
    /// Frame eigenvalues closer than this are treated as a quasi-degenerate
    /// cluster and may be replaced by product vectors (polaron frame only;
    /// the lab-frame Redfield generators always keep raw eigenvectors).
    pub cluster_tol: T,
    /// Transition frequencies within this distance share a Bohr group.
    pub bohr_tol: T,
    /// Drop cross-frequency dissipator terms (diagnostic; default keeps the
    /// full non-secular generator).
    pub secular: bool,
    /// Discard the principal-value (imaginary) parts of the half-range rates.
    pub neglect_lamb_shift: bool,
    /// Step for the finite-difference cumulant stencil.
    pub chi_step: T,
    /// An eigenvalue of L(0) below this magnitude counts as a zero mode.
    pub zero_mode_tol: T,
    /// Which Redfield realization `Scheme::Redfield` builds.
    pub redfield_form: RedfieldForm,
    /// Quadrature controls forwarded to the rate engines.
    pub rate_config: RateConfig<T>,
}

impl<T: Scalar> Default for SolverOptions<T> {
    fn default() -> Self {
        SolverOptions {
            cluster_tol: T::of(0.05),
            bohr_tol: T::of(1e-9),
            secular: false,
            neglect_lamb_shift: false,
            chi_step: T::of(1e-4),
            zero_mode_tol: T::of(1e-9),
            redfield_form: RedfieldForm::Full,
            rate_config: RateConfig::default(),
        }
    }
}

/// Null vector of L(0), normalized to unit trace.
#[derive(Debug, Clone)]
pub struct SteadyState<T> {
    /// Density matrix in the generator's working basis (frame eigenbasis for
    /// the 16-dimensional machines, diagonal in the kinetic bases).
    pub rho: CMat<T>,
    /// Real parts of the diagonal.
    pub populations: [T; 4],
    /// max_k |(L v)_k| of the returned vector under the original generator.
    pub residual: T,
}

/// First (and optionally second) cumulant of the counted heat.
#[derive(Debug, Clone, Copy)]
pub struct CumulantResult<T> {
    /// Mean heat current into the counted reservoir.
    pub current: T,
    /// Zero-frequency noise, present for `order == 2`.
    pub noise: Option<T>,
    /// Finite-difference step used on the counting field.
    pub chi_step: T,
    /// Stencil label: "central+richardson" (order 1) or "central" (order 2).
    pub method: &'static str,
}

/// Kinetic input of the strong-coupling scheme: the four local transition
/// energies and the eight blip rates connecting the product states
/// 1 = uu, 2 = ud, 3 = du, 4 = dd. `k12_r` is the 1 -> 2 rate, which flips
/// the right qubit and deposits `e12` into the right reservoir; the other
/// names follow the same pattern, with `_l` rates tied to the left reservoir.
#[derive(Debug, Clone, Copy)]
pub struct NibaRateTable<T> {
    pub e12: T,
    pub e34: T,
    pub e13: T,
    pub e24: T,
    pub k12_r: T,
    pub k21_r: T,
    pub k34_r: T,
    pub k43_r: T,
    pub k13_l: T,
    pub k31_l: T,
    pub k24_l: T,
    pub k42_l: T,
}

impl<T: Scalar> NibaRateTable<T> {
    /// Mean level splittings seen from each side: ((e13+e24)/2, (e12+e34)/2).
    pub fn splittings(&self) -> (T, T) {
        let half = T::of(0.5);
        ((self.e13 + self.e24) * half, (self.e12 + self.e34) * half)
    }

    /// The closed-form population and loop formulas hold only when both
    /// qubits share one splitting.
    fn require_symmetric(&self) -> Result<()> {
        let (l, r) = self.splittings();
        let scale = l.abs().max(r.abs()).max(T::one());
        if (l - r).abs() > T::of(1e-9) * scale {
            return Err(Error::AsymmetricSplitting {
                left: l.as_f64(),
                right: r.as_f64(),
            });
        }
        Ok(())
    }
}

/// Both directed loop currents of the strong-coupling network and their
/// difference, the net current.
#[derive(Debug, Clone, Copy)]
pub struct LoopCurrents<T> {
    /// 1 -> 2 -> 4 -> 3 -> 1 contribution.
    pub forward: T,
    /// 1 -> 3 -> 4 -> 2 -> 1 contribution.
    pub backward: T,
    pub total: T,
}

/// Net heat flow through one eigenstate pair of the population machine.
#[derive(Debug, Clone, Copy)]
pub struct TransitionCurrent<T> {
    /// Eigenstate indices, `energies[upper] > energies[lower]`.
    pub upper: usize,
    pub lower: usize,
    pub gap: T,
    pub current: T,
}

/// Symmetrized normalization polynomial of the kinetic network. The second
/// half is the first with the left and right rate families exchanged, which
/// restores the 1 <-> 4, 2 <-> 3 relabeling symmetry the half misses.
fn niba_norm_half<T: Scalar>(
    k13l: T,
    k31l: T,
    k24l: T,
    k42l: T,
    k12r: T,
    k21r: T,
    k34r: T,
    k43r: T,
) -> T {
    let half = T::of(0.5);
    k13l * k42l * k21r
        + k31l * k24l * k43r
        + k31l * k42l * k21r
        + k31l * k42l * k12r
        + k31l * k24l * k12r
        + (k13l + k12r) * (k24l * k43r + k24l * k34r * half)
}

fn niba_norm<T: Scalar>(t: &NibaRateTable<T>) -> T {
    niba_norm_half(
        t.k13_l, t.k31_l, t.k24_l, t.k42_l, t.k12_r, t.k21_r, t.k34_r, t.k43_r,
    ) + niba_norm_half(
        t.k12_r, t.k21_r, t.k34_r, t.k43_r, t.k13_l, t.k31_l, t.k24_l, t.k42_l,
    )
}

/// Closed-form steady populations of the kinetic network. The four numerators
/// over the symmetrized normalization sum to one identically; requires a
/// symmetric splitting (see [`NibaRateTable::splittings`]).
pub fn analytic_niba_populations<T: Scalar>(t: &NibaRateTable<T>) -> Result<[T; 4]> {
    t.require_symmetric()?;
    let a = niba_norm(t);
    let p1 = t.k31_l * t.k21_r * t.k43_r
        + t.k42_l * t.k21_r * t.k34_r
        + t.k31_l * t.k42_l * t.k21_r
        + t.k31_l * t.k24_l * t.k43_r;
    let p2 = t.k31_l * t.k12_r * t.k43_r
        + (t.k13_l + t.k12_r) * t.k42_l * t.k34_r
        + t.k31_l * t.k42_l * t.k12_r;
    let p3 = t.k21_r * t.k13_l * t.k42_l
        + (t.k13_l + t.k12_r) * t.k43_r * t.k24_l
        + t.k21_r * t.k43_r * t.k13_l;
    let p4 = t.k31_l * t.k24_l * t.k12_r
        + t.k21_r * t.k34_r * t.k13_l
        + (t.k13_l + t.k12_r) * t.k24_l * t.k34_r;
    Ok([p1 / a, p2 / a, p3 / a, p4 / a])
}

/// The two directed-loop terms of the simplified strong-coupling current.
/// Each loop moves `e12 - e34` between the reservoirs per cycle; their
/// difference equals the transition-resolved current on the analytic
/// populations.
pub fn niba_loop_currents<T: Scalar>(t: &NibaRateTable<T>) -> Result<LoopCurrents<T>> {
    t.require_symmetric()?;
    let a = niba_norm(t);
    let four_u = t.e12 - t.e34;
    let forward = four_u * t.k12_r * t.k24_l * t.k43_r * t.k31_l / a;
    let backward = four_u * t.k21_r * t.k13_l * t.k34_r * t.k42_l / a;
    Ok(LoopCurrents {
        forward,
        backward,
        total: forward - backward,
    })
}

/// Directed kinetic edges: (from, to, energy released to the edge's
/// reservoir, rate, reservoir side), states 0-indexed.
fn niba_edges<T: Scalar>(t: &NibaRateTable<T>) -> [(usize, usize, T, T, Side); 8] {
    [
        (0, 1, t.e12, t.k12_r, Side::Right),
        (1, 0, -t.e12, t.k21_r, Side::Right),
        (2, 3, t.e34, t.k34_r, Side::Right),
        (3, 2, -t.e34, t.k43_r, Side::Right),
        (0, 2, t.e13, t.k13_l, Side::Left),
        (2, 0, -t.e13, t.k31_l, Side::Left),
        (1, 3, t.e24, t.k24_l, Side::Left),
        (3, 1, -t.e24, t.k42_l, Side::Left),
    ]
}

fn niba_matrix_whole<T: Scalar>(t: &NibaRateTable<T>, counted: Option<Side>, chi: T) -> CMat<T> {
    let mut l = CMat::zeros(4, 4);
    for (from, to, gap, rate, side) in niba_edges(t) {
        // Gains of the counted reservoir pick up the deposit phase; losses
        // never do, which keeps every column sum zero at chi = 0.
        let gain = if counted == Some(side) && chi != T::zero() {
            Cplx::from_polar(rate, gap * chi)
        } else {
            cre(rate)
        };
        l[(to, from)] += gain;
        l[(from, from)] -= cre(rate);
    }
    l
}

fn niba_matrix_complex<T: Scalar>(t: &NibaRateTable<T>, counted: Side, chi: Cplx<T>) -> CMat<T> {
    let mut l = CMat::zeros(4, 4);
    for (from, to, gap, rate, side) in niba_edges(t) {
        let gain = if side == counted {
            // e^{i gap chi} for complex chi.
            Cplx::from_polar(rate * (-gap * chi.im).exp(), gap * chi.re)
        } else {
            cre(rate)
        };
        l[(to, from)] += gain;
        l[(from, from)] -= cre(rate);
    }
    l
}

/// Kinetic generator with the counting field on the right-reservoir gains,
/// exactly the four-state matrix the strong-coupling scheme solves.
pub fn build_niba_generator<T: Scalar>(t: &NibaRateTable<T>, chi: T) -> CMat<T> {
    niba_matrix_whole(t, Some(Side::Right), chi)
}

/// How a dissipator channel participates in the counting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CountMode {
    None,
    Whole,
    Component(usize),
}

fn counted_mode(counted: Terminal, side: Side) -> CountMode {
    match (counted, side) {
        (Terminal::Left, Side::Left) | (Terminal::Right, Side::Right) => CountMode::Whole,
        (Terminal::LeftHot, Side::Left) => CountMode::Component(0),
        (Terminal::LeftCold, Side::Left) => CountMode::Component(1),
        _ => CountMode::None,
    }
}

/// Half-range rate source of one dissipator channel.
enum ChannelRate<T: Scalar> {
    /// Polaron-frame channel: one of the two hyperbolic kernels.
    Polaron {
        engine: Arc<RateEngine<T>>,
        axis: Axis,
    },
    /// Lab-frame channel: the bare spectral rates of a sigma_z coupling.
    Spectral { rates: Arc<SpectralRates<T>> },
}

impl<T: Scalar> ChannelRate<T> {
    fn plus(&self, omega: T, chi: T, mode: CountMode, keep_lamb: bool) -> Result<Cplx<T>> {
        match self {
            ChannelRate::Polaron { engine, axis } => match mode {
                CountMode::Component(c) => {
                    engine.gamma_plus_component_shifted(*axis, omega, c, chi, keep_lamb)
                }
                CountMode::Whole => engine.gamma_plus_shifted(*axis, omega, chi, keep_lamb),
                CountMode::None => engine.gamma_plus_shifted(*axis, omega, T::zero(), keep_lamb),
            },
            ChannelRate::Spectral { rates } => match mode {
                CountMode::Component(_) => Err(Error::InvalidSpec(
                    "component counting is not available for the lab-frame rates".into(),
                )),
                CountMode::Whole => rates.gamma_z_shifted(omega, chi, keep_lamb),
                CountMode::None => rates.gamma_z_shifted(omega, T::zero(), keep_lamb),
            },
        }
    }

    /// Gamma_-(chi, omega) = conj(Gamma_+(-chi, -omega)).
    fn minus(&self, omega: T, chi: T, mode: CountMode, keep_lamb: bool) -> Result<Cplx<T>> {
        Ok(self.plus(-omega, -chi, mode, keep_lamb)?.conj())
    }
}

/// One bath coupling: a rate source plus the Bohr decomposition of its
/// system operator in the working frame.
struct Channel<T: Scalar> {
    side: Side,
    rate: ChannelRate<T>,
    groups: Vec<(T, CMat<T>)>,
}

/// 16-dimensional machines (polaron frame and full lab-frame Redfield).
struct LindbladCore<T: Scalar> {
    frame: PolaronFrame<T>,
    channels: Vec<Channel<T>>,
    left_engine: Option<Arc<RateEngine<T>>>,
    right_engine: Option<Arc<RateEngine<T>>>,
}

/// Eigenstate-population rate machine (weak coupling, coherences dropped).
struct PopulationCore<T: Scalar> {
    energies: Vec<T>,
    sides: Vec<PopulationSide<T>>,
}

struct PopulationSide<T: Scalar> {
    side: Side,
    components: Vec<BathSpec<T>>,
    /// weight[n][m] = |<n| sigma_z,side |m>|^2 in the eigenbasis.
    weight: [[T; 4]; 4],
}

/// Blip-rate kinetic machine; engines kept for component-counted rates.
struct NibaCore<T: Scalar> {
    table: NibaRateTable<T>,
    engines: [Arc<RateEngine<T>>; 2],
}

enum Machine<T: Scalar> {
    Lindblad(LindbladCore<T>),
    Population(PopulationCore<T>),
    Niba(NibaCore<T>),
}

impl<T: Scalar> Machine<T> {
    fn dim(&self) -> usize {
        match self {
            Machine::Lindblad(_) => 16,
            _ => 4,
        }
    }

    fn form_name(&self) -> &'static str {
        match self {
            Machine::Lindblad(_) => "full",
            Machine::Population(_) => "population",
            Machine::Niba(_) => "kinetic",
        }
    }
}

/// l += c * (a kron b); `a` indexes the column space of the stacked density
/// matrix, `b` the row space.
fn add_kron<T: Scalar>(l: &mut CMat<T>, c: Cplx<T>, a: &CMat<T>, b: &CMat<T>) {
    let n = a.rows();
    for ja in 0..n {
        for ja2 in 0..n {
            let ca = c * a[(ja, ja2)];
            if ca.re == T::zero() && ca.im == T::zero() {
                continue;
            }
            for ib in 0..n {
                for ib2 in 0..n {
                    l[(ja * n + ib, ja2 * n + ib2)] += ca * b[(ib, ib2)];
                }
            }
        }
    }
}

/// l += c * (I kron b): left multiplication vec(b rho).
fn add_kron_right<T: Scalar>(l: &mut CMat<T>, c: Cplx<T>, b: &CMat<T>) {
    let n = b.rows();
    for j in 0..n {
        for r in 0..n {
            for s in 0..n {
                l[(j * n + r, j * n + s)] += c * b[(r, s)];
            }
        }
    }
}

/// l += c * (b^T kron I): right multiplication vec(rho b).
fn add_kron_left<T: Scalar>(l: &mut CMat<T>, c: Cplx<T>, b: &CMat<T>) {
    let n = b.rows();
    for j in 0..n {
        for j2 in 0..n {
            let cb = c * b[(j2, j)];
            if cb.re == T::zero() && cb.im == T::zero() {
                continue;
            }
            for i in 0..n {
                l[(j * n + i, j2 * n + i)] += cb;
            }
        }
    }
}

impl<T: Scalar> LindbladCore<T> {
    /// Per-group rate prefetch: gains at the channel's counting shift,
    /// losses always at chi = 0.
    fn channel_rates(
        ch: &Channel<T>,
        mode: CountMode,
        chi: T,
        keep_lamb: bool,
    ) -> Result<(Vec<Cplx<T>>, Vec<Cplx<T>>, Vec<Cplx<T>>, Vec<Cplx<T>>)> {
        let m = ch.groups.len();
        let mut gain_p = Vec::with_capacity(m);
        let mut gain_m = Vec::with_capacity(m);
        let mut loss_p = Vec::with_capacity(m);
        let mut loss_m = Vec::with_capacity(m);
        for (w, _) in &ch.groups {
            gain_p.push(ch.rate.plus(*w, chi, mode, keep_lamb)?);
            gain_m.push(ch.rate.minus(*w, chi, mode, keep_lamb)?);
            loss_p.push(ch.rate.plus(*w, T::zero(), mode, keep_lamb)?);
            loss_m.push(ch.rate.minus(*w, T::zero(), mode, keep_lamb)?);
        }
        Ok((gain_p, gain_m, loss_p, loss_m))
    }

    fn matrix(&self, counted: Terminal, options: &SolverOptions<T>, chi: T) -> Result<CMat<T>> {
        let e = &self.frame.energies;
        let n = e.len();
        let mut l = CMat::zeros(n * n, n * n);
        for i in 0..n {
            for j in 0..n {
                let k = j * n + i;
                l[(k, k)] += Cplx::new(T::zero(), -(e[i] - e[j]));
            }
        }
        let keep_lamb = !options.neglect_lamb_shift;
        for ch in &self.channels {
            let mode = counted_mode(counted, ch.side);
            let (gain_p, gain_m, loss_p, loss_m) =
                Self::channel_rates(ch, mode, chi, keep_lamb)?;
            for (i1, (w1, p1)) in ch.groups.iter().enumerate() {
                let p1t = p1.transpose();
                for (i2, (w2, p2)) in ch.groups.iter().enumerate() {
                    if options.secular && (*w1 + *w2).abs() > options.bohr_tol {
                        continue;
                    }
                    let p12 = p1.matmul(p2);
                    // Gain vec(P2 rho P1), losses vec(P1 P2 rho) and
                    // vec(rho P1 P2); each ordered pair preserves the trace.
                    add_kron(&mut l, gain_m[i1] + gain_p[i2], &p1t, p2);
                    add_kron_right(&mut l, -loss_p[i2], &p12);
                    add_kron_left(&mut l, -loss_m[i1], &p12);
                }
            }
        }
        Ok(l)
    }

    /// d(dominant eigenvalue)/d(i chi) at chi = 0 by first-order perturbation
    /// with the trace functional as the left null vector: the correlation
    /// boundary terms of the gain derivatives are real and cancel, leaving
    /// sum over pairs of (w2 G+(w2) - w1 G-(w1)) Tr[P1 P2 rho].
    fn derivative_current(
        &self,
        counted: Terminal,
        options: &SolverOptions<T>,
        rho: &CMat<T>,
    ) -> Result<T> {
        let side = match counted {
            Terminal::Left => Side::Left,
            Terminal::Right => Side::Right,
            _ => {
                return Err(Error::InvalidSpec(
                    "the closed current formula needs whole-reservoir counting; use \
                     cumulant(1) for a component of the split reservoir"
                        .into(),
                ))
            }
        };
        let keep_lamb = !options.neglect_lamb_shift;
        let mut acc = Cplx::new(T::zero(), T::zero());
        for ch in self.channels.iter().filter(|c| c.side == side) {
            let mode = CountMode::Whole;
            let m = ch.groups.len();
            let mut plus0 = Vec::with_capacity(m);
            let mut minus0 = Vec::with_capacity(m);
            for (w, _) in &ch.groups {
                plus0.push(ch.rate.plus(*w, T::zero(), mode, keep_lamb)?);
                minus0.push(ch.rate.minus(*w, T::zero(), mode, keep_lamb)?);
            }
            for (i1, (w1, p1)) in ch.groups.iter().enumerate() {
                for (i2, (w2, p2)) in ch.groups.iter().enumerate() {
                    if options.secular && (*w1 + *w2).abs() > options.bohr_tol {
                        continue;
                    }
                    let p12 = p1.matmul(p2);
                    let mut tr = Cplx::new(T::zero(), T::zero());
                    for a in 0..p12.rows() {
                        for b in 0..p12.cols() {
                            tr += p12[(a, b)] * rho[(b, a)];
                        }
                    }
                    acc += (plus0[i2] * cre(*w2) - minus0[i1] * cre(*w1)) * tr;
                }
            }
        }
        Ok(acc.re)
    }
}

impl<T: Scalar> PopulationCore<T> {
    fn matrix(&self, counted: Terminal, chi: T) -> Result<CMat<T>> {
        let mut l = CMat::zeros(4, 4);
        for s in &self.sides {
            let mode = counted_mode(counted, s.side);
            for (ci, bath) in s.components.iter().enumerate() {
                let dressed = match mode {
                    CountMode::Whole => true,
                    CountMode::Component(c) => c == ci,
                    CountMode::None => false,
                };
                for m in 0..4 {
                    for n in 0..4 {
                        if m == n {
                            continue;
                        }
                        let gap = self.energies[m] - self.energies[n];
                        if gap.abs() <= T::of(1e-12) {
                            continue;
                        }
                        let w = s.weight[n][m];
                        if w == T::zero() {
                            continue;
                        }
                        let rate = redfield_sequential_rate(bath, gap, Direction::Emit)? * w;
                        let gain = if dressed && chi != T::zero() {
                            Cplx::from_polar(rate, gap * chi)
                        } else {
                            cre(rate)
                        };
                        l[(n, m)] += gain;
                        l[(m, m)] -= cre(rate);
                    }
                }
            }
        }
        Ok(l)
    }

    /// Side components feeding the counted terminal, with their dressing
    /// restricted to one component when a split reservoir is counted.
    fn counted_components(&self, counted: Terminal) -> Result<Vec<&BathSpec<T>>> {
        let mut out = Vec::new();
        for s in &self.sides {
            match counted_mode(counted, s.side) {
                CountMode::Whole => out.extend(s.components.iter()),
                CountMode::Component(c) => out.push(&s.components[c]),
                CountMode::None => {}
            }
        }
        if out.is_empty() {
            return Err(Error::InvalidSpec(
                "counted terminal does not feed this generator".into(),
            ));
        }
        Ok(out)
    }

    fn side_for(&self, counted: Terminal) -> Result<&PopulationSide<T>> {
        let side = match counted {
            Terminal::Left => Side::Left,
            Terminal::Right => Side::Right,
            Terminal::LeftHot | Terminal::LeftCold => Side::Left,
        };
        self.sides
            .iter()
            .find(|s| s.side == side)
            .ok_or_else(|| Error::InvalidSpec("counted side missing from generator".into()))
    }

    /// Net pairwise flux into the counted reservoir:
    /// sum over gaps of gap (emit p_upper - absorb p_lower).
    fn net_flux_current(&self, counted: Terminal, populations: &[T; 4]) -> Result<T> {
        let side = self.side_for(counted)?;
        let comps = self.counted_components(counted)?;
        let mut acc = T::zero();
        for bath in comps {
            for m in 0..4 {
                for n in 0..4 {
                    let gap = self.energies[m] - self.energies[n];
                    if gap <= T::of(1e-12) {
                        continue;
                    }
                    let down = redfield_sequential_rate(bath, gap, Direction::Emit)?
                        * side.weight[n][m];
                    let up = redfield_sequential_rate(bath, -gap, Direction::Emit)?
                        * side.weight[m][n];
                    acc += gap * (down * populations[m] - up * populations[n]);
                }
            }
        }
        Ok(acc)
    }
}

impl<T: Scalar> NibaCore<T> {
    fn matrix(&self, counted: Terminal, chi: T) -> Result<CMat<T>> {
        match counted {
            Terminal::Left => Ok(niba_matrix_whole(&self.table, Some(Side::Left), chi)),
            Terminal::Right => Ok(niba_matrix_whole(&self.table, Some(Side::Right), chi)),
            Terminal::LeftHot | Terminal::LeftCold => {
                let comp = if counted == Terminal::LeftHot { 0 } else { 1 };
                let mut l = CMat::zeros(4, 4);
                for (from, to, gap, rate, side) in niba_edges(&self.table) {
                    // At chi = 0 the component-counted rate equals the plain
                    // blip rate; use the cached table value so the matrix is
                    // bit-identical across counted terminals.
                    let gain = if side == Side::Left && chi != T::zero() {
                        self.engines[0].niba_rate_component_counted(gap, comp, chi)?
                    } else {
                        cre(rate)
                    };
                    l[(to, from)] += gain;
                    l[(from, from)] -= cre(rate);
                }
                Ok(l)
            }
        }
    }

    /// Transition-resolved current into the counted reservoir.
    fn analytic_current(&self, counted: Terminal, p: &[T; 4]) -> Result<T> {
        let t = &self.table;
        match counted {
            Terminal::Right => Ok(t.e12 * (t.k12_r * p[0] - t.k21_r * p[1])
                + t.e34 * (t.k34_r * p[2] - t.k43_r * p[3])),
            Terminal::Left => Ok(t.e13 * (t.k13_l * p[0] - t.k31_l * p[2])
                + t.e24 * (t.k24_l * p[1] - t.k42_l * p[3])),
            _ => Err(Error::InvalidSpec(
                "the kinetic current formula needs whole-reservoir counting; use \
                 cumulant(1) for a component of the split reservoir"
                    .into(),
            )),
        }
    }
}

/// Wrap or validate a caller-supplied polaron rate engine.
fn polaron_engine<T: Scalar>(
    kernel: BathKernel<T>,
    delta: T,
    cfg: RateConfig<T>,
    supplied: Option<Arc<RateEngine<T>>>,
) -> Result<Arc<RateEngine<T>>> {
    match supplied {
        None => Ok(Arc::new(RateEngine::new(kernel, delta, cfg))),
        Some(e) => {
            if e.kernel().components() != kernel.components() || e.delta() != delta {
                return Err(Error::InvalidSpec(
                    "supplied rate engine does not match the system description".into(),
                ));
            }
            Ok(e)
        }
    }
}

/// A counting-field-parameterized generator for one scheme, one system, and
/// one counted terminal. Assembly is lazy: [`TiltedGenerator::matrix`] builds
/// the dim x dim complex matrix at any real counting field.
pub struct TiltedGenerator<T: Scalar> {
    scheme: Scheme,
    counted: Terminal,
    options: SolverOptions<T>,
    machine: Arc<Machine<T>>,
    /// Unit-normalized steady vector at chi = 0, the branch-tracking
    /// reference for the cumulant generating function.
    steady_vec: RwLock<Option<Arc<Vec<Cplx<T>>>>>,
}

impl<T: Scalar> Clone for TiltedGenerator<T> {
    fn clone(&self) -> Self {
        TiltedGenerator {
            scheme: self.scheme,
            counted: self.counted,
            options: self.options.clone(),
            machine: Arc::clone(&self.machine),
            steady_vec: RwLock::new(self.steady_vec.read().unwrap().clone()),
        }
    }
}

/// Polaron-frame generator matrix at one counting-field value.
pub fn build_neptre_generator<T: Scalar>(
    spec: &SystemSpec<T>,
    counted: Terminal,
    chi: T,
    options: &SolverOptions<T>,
) -> Result<CMat<T>> {
    TiltedGenerator::build(spec, Scheme::NePtre, counted, options)?.matrix(chi)
}

/// Lab-frame weak-coupling generator matrix at one counting-field value; the
/// realization (full or population) follows `options.redfield_form`.
pub fn build_redfield_generator<T: Scalar>(
    spec: &SystemSpec<T>,
    counted: Terminal,
    chi: T,
    options: &SolverOptions<T>,
) -> Result<CMat<T>> {
    TiltedGenerator::build(spec, Scheme::Redfield, counted, options)?.matrix(chi)
}

impl<T: Scalar> TiltedGenerator<T> {
    pub fn build(
        spec: &SystemSpec<T>,
        scheme: Scheme,
        counted: Terminal,
        options: &SolverOptions<T>,
    ) -> Result<Self> {
        Self::build_with_engines(spec, scheme, counted, options, None, None)
    }

    /// Like [`TiltedGenerator::build`], but reuses caller-supplied rate
    /// engines (and their caches) for the polaron-frame schemes. Engines must
    /// match the system description; the Redfield schemes use lab-frame rate
    /// sources of their own and ignore these arguments.
    pub fn build_with_engines(
        spec: &SystemSpec<T>,
        scheme: Scheme,
        counted: Terminal,
        options: &SolverOptions<T>,
        left: Option<Arc<RateEngine<T>>>,
        right: Option<Arc<RateEngine<T>>>,
    ) -> Result<Self> {
        spec.validate()?;
        let machine = match scheme {
            Scheme::NePtre => {
                let le = polaron_engine(
                    spec.left_kernel()?,
                    spec.left.delta,
                    options.rate_config,
                    left,
                )?;
                let re = polaron_engine(
                    spec.right_kernel()?,
                    spec.right.delta,
                    options.rate_config,
                    right,
                )?;
                let frame = PolaronFrame::build(
                    spec,
                    le.kernel().eta,
                    re.kernel().eta,
                    options.cluster_tol,
                )?;
                let mut channels = Vec::with_capacity(4);
                for (side, engine) in [(Side::Left, &le), (Side::Right, &re)] {
                    for axis in [Axis::X, Axis::Y] {
                        let op = match axis {
                            Axis::X => sigma_x::<T>(side),
                            Axis::Y => sigma_y::<T>(side),
                        };
                        channels.push(Channel {
                            side,
                            rate: ChannelRate::Polaron {
                                engine: Arc::clone(engine),
                                axis,
                            },
                            groups: frame.bohr_groups(&op, options.bohr_tol),
                        });
                    }
                }
                Machine::Lindblad(LindbladCore {
                    frame,
                    channels,
                    left_engine: Some(le),
                    right_engine: Some(re),
                })
            }
            Scheme::Redfield => {
                // Lab frame: undressed Hamiltonian, no cluster purge, since
                // its eigenvectors are genuinely delocalized.
                let frame = PolaronFrame::build(spec, T::one(), T::one(), T::zero())?;
                match options.redfield_form {
                    RedfieldForm::Full => {
                        let mut channels = Vec::with_capacity(2);
                        for side in [Side::Left, Side::Right] {
                            let kernel = match side {
                                Side::Left => spec.left_kernel()?,
                                Side::Right => spec.right_kernel()?,
                            };
                            let rates = Arc::new(SpectralRates::new(
                                &kernel,
                                options.rate_config.pv_rel_tol,
                            ));
                            channels.push(Channel {
                                side,
                                rate: ChannelRate::Spectral { rates },
                                groups: frame.bohr_groups(&sigma_z::<T>(side), options.bohr_tol),
                            });
                        }
                        Machine::Lindblad(LindbladCore {
                            frame,
                            channels,
                            left_engine: None,
                            right_engine: None,
                        })
                    }
                    RedfieldForm::Population => {
                        let mut sides = Vec::with_capacity(2);
                        for side in [Side::Left, Side::Right] {
                            let kernel = match side {
                                Side::Left => spec.left_kernel()?,
                                Side::Right => spec.right_kernel()?,
                            };
                            let s = frame
                                .vectors
                                .dagger()
                                .matmul(&sigma_z::<T>(side).matmul(&frame.vectors));
                            let mut weight = [[T::zero(); 4]; 4];
                            for n in 0..4 {
                                for m in 0..4 {
                                    weight[n][m] = s[(n, m)].norm_sqr();
                                }
                            }
                            sides.push(PopulationSide {
                                side,
                                components: kernel.components().to_vec(),
                                weight,
                            });
                        }
                        Machine::Population(PopulationCore {
                            energies: frame.energies.clone(),
                            sides,
                        })
                    }
                }
            }
            Scheme::Niba => {
                let le = polaron_engine(
                    spec.left_kernel()?,
                    spec.left.delta,
                    options.rate_config,
                    left,
                )?;
                let re = polaron_engine(
                    spec.right_kernel()?,
                    spec.right.delta,
                    options.rate_config,
                    right,
                )?;
                let en = local_basis_energies(spec.u, spec.left.epsilon, spec.right.epsilon);
                let (e12, e34, e13, e24) =
                    (en.gap(1, 2), en.gap(3, 4), en.gap(1, 3), en.gap(2, 4));
                let table = NibaRateTable {
                    e12,
                    e34,
                    e13,
                    e24,
                    k12_r: re.niba_rate(e12)?,
                    k21_r: re.niba_rate(-e12)?,
                    k34_r: re.niba_rate(e34)?,
                    k43_r: re.niba_rate(-e34)?,
                    k13_l: le.niba_rate(e13)?,
                    k31_l: le.niba_rate(-e13)?,
                    k24_l: le.niba_rate(e24)?,
                    k42_l: le.niba_rate(-e24)?,
                };
                Machine::Niba(NibaCore {
                    table,
                    engines: [le, re],
                })
            }
        };
        let gen = TiltedGenerator {
            scheme,
            counted,
            options: options.clone(),
            machine: Arc::new(machine),
            steady_vec: RwLock::new(None),
        };
        gen.validate_counted()?;
        Ok(gen)
    }

    /// Same machine, different counted terminal. The chi = 0 matrix does not
    /// depend on the counted terminal, so the steady-state cache carries over.
    pub fn with_counted(&self, counted: Terminal) -> Result<Self> {
        let gen = TiltedGenerator {
            scheme: self.scheme,
            counted,
            options: self.options.clone(),
            machine: Arc::clone(&self.machine),
            steady_vec: RwLock::new(self.steady_vec.read().unwrap().clone()),
        };
        gen.validate_counted()?;
        Ok(gen)
    }

    fn validate_counted(&self) -> Result<()> {
        match self.counted {
            Terminal::Left | Terminal::Right => Ok(()),
            Terminal::LeftHot | Terminal::LeftCold => {
                let split_required = Err(Error::InvalidSpec(
                    "counting one left-reservoir component requires the split left \
                     reservoir of the three-terminal topology"
                        .into(),
                ));
                match &*self.machine {
                    Machine::Lindblad(core) => match &core.left_engine {
                        Some(e) if e.kernel().is_composite() => Ok(()),
                        Some(_) => split_required,
                        None => Err(Error::InvalidSpec(
                            "component counting is not available for the Redfield \
                             generators; build the NE-PTRE or NIBA generator instead"
                                .into(),
                        )),
                    },
                    Machine::Population(_) => Err(Error::InvalidSpec(
                        "component counting is not available for the Redfield \
                         generators; build the NE-PTRE or NIBA generator instead"
                            .into(),
                    )),
                    Machine::Niba(core) => {
                        if core.engines[0].kernel().is_composite() {
                            Ok(())
                        } else {
                            split_required
                        }
                    }
                }
            }
        }
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn counted(&self) -> Terminal {
        self.counted
    }

    pub fn options(&self) -> &SolverOptions<T> {
        &self.options
    }

    /// 16 for the superoperator machines, 4 for the population machines.
    pub fn dim(&self) -> usize {
        self.machine.dim()
    }

    /// Working frame of the superoperator machines.
    pub fn frame(&self) -> Option<&PolaronFrame<T>> {
        match &*self.machine {
            Machine::Lindblad(core) => Some(&core.frame),
            _ => None,
        }
    }

    /// Eigenstate (or local-state) energies of the working basis.
    pub fn basis_energies(&self) -> Vec<T> {
        match &*self.machine {
            Machine::Lindblad(core) => core.frame.energies.clone(),
            Machine::Population(core) => core.energies.clone(),
            Machine::Niba(core) => {
                let t = &core.table;
                // Local energies up to a constant: E1 - E2 = e12 and so on.
                let half = T::of(0.5);
                let e1 = (t.e12 + t.e13) * half;
                vec![e1, e1 - t.e12, e1 - t.e13, e1 - t.e12 - t.e24]
            }
        }
    }

    pub fn left_engine(&self) -> Option<&Arc<RateEngine<T>>> {
        match &*self.machine {
            Machine::Lindblad(core) => core.left_engine.as_ref(),
            Machine::Niba(core) => Some(&core.engines[0]),
            Machine::Population(_) => None,
        }
    }

    pub fn right_engine(&self) -> Option<&Arc<RateEngine<T>>> {
        match &*self.machine {
            Machine::Lindblad(core) => core.right_engine.as_ref(),
            Machine::Niba(core) => Some(&core.engines[1]),
            Machine::Population(_) => None,
        }
    }

    /// Blip-rate table of the kinetic machine.
    pub fn niba_table(&self) -> Result<&NibaRateTable<T>> {
        match &*self.machine {
            Machine::Niba(core) => Ok(&core.table),
            _ => Err(Error::SchemeMismatch {
                expected: "niba".into(),
                found: self.scheme.name().into(),
            }),
        }
    }

    /// The generator matrix at a real counting field.
    pub fn matrix(&self, chi: T) -> Result<CMat<T>> {
        match &*self.machine {
            Machine::Lindblad(core) => core.matrix(self.counted, &self.options, chi),
            Machine::Population(core) => core.matrix(self.counted, chi),
            Machine::Niba(core) => core.matrix(self.counted, chi),
        }
    }

    /// Kinetic generator continued to complex counting arguments, needed for
    /// the fluctuation-symmetry checks. Only the kinetic machine supports
    /// this (the superoperator rates are built for real shifts), and only for
    /// whole-reservoir counting.
    pub fn matrix_counted_complex(&self, chi: Cplx<T>) -> Result<CMat<T>> {
        let core = match &*self.machine {
            Machine::Niba(core) => core,
            _ => {
                return Err(Error::SchemeMismatch {
                    expected: "niba".into(),
                    found: self.scheme.name().into(),
                })
            }
        };
        let side = match self.counted {
            Terminal::Left => Side::Left,
            Terminal::Right => Side::Right,
            _ => {
                return Err(Error::InvalidSpec(
                    "complex counting arguments support whole-reservoir counting only".into(),
                ))
            }
        };
        Ok(niba_matrix_complex(&core.table, side, chi))
    }

    /// Null vector of L(0) normalized to unit trace, with uniqueness checks.
    pub fn steady_state(&self) -> Result<SteadyState<T>> {
        let l = self.matrix(T::zero())?;
        let d = l.rows();
        let evs = eig_values(&l)?;
        let mut mags: Vec<T> = evs.iter().map(|z| z.norm()).collect();
        mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if mags[0] >= self.options.zero_mode_tol {
            return Err(Error::InvalidSpec(format!(
                "generator has no zero mode: smallest eigenvalue magnitude {:e}",
                mags[0]
            )));
        }
        if mags[1] < self.options.zero_mode_tol {
            return Err(Error::DegenerateSteadyState {
                gap: mags[1].as_f64(),
            });
        }
        // Replace the first row by the trace functional; it is a left null
        // vector supported on the diagonal positions, so the discarded row
        // is recovered by the others and the system stays consistent.
        let mut a = l.clone();
        for c in 0..d {
            a[(0, c)] = Cplx::new(T::zero(), T::zero());
        }
        if d == 16 {
            for i in 0..4 {
                a[(0, i * 4 + i)] = cre(T::one());
            }
        } else {
            for c in 0..d {
                a[(0, c)] = cre(T::one());
            }
        }
        let mut rhs = vec![Cplx::new(T::zero(), T::zero()); d];
        rhs[0] = cre(T::one());
        // The deleted-row system can be severely ill-conditioned (weak
        // dissipative rows next to order-one coherent rows), so polish the
        // LU solution by iterative refinement until the residual stalls.
        let lu = Lu::factor(&a)?;
        let mut v = lu.solve(&rhs);
        let floor = T::epsilon() * a.frobenius();
        let mut prev = T::infinity();
        for _ in 0..64 {
            let av = a.matvec(&v);
            let mut r = vec![Cplx::new(T::zero(), T::zero()); d];
            let mut rmax = T::zero();
            for k in 0..d {
                r[k] = rhs[k] - av[k];
                rmax = rmax.max(r[k].norm());
            }
            if rmax <= floor || rmax >= prev {
                break;
            }
            prev = rmax;
            let dx = lu.solve(&r);
            for (vk, dk) in v.iter_mut().zip(dx.iter()) {
                *vk += *dk;
            }
        }
        let resid = l
            .matvec(&v)
            .iter()
            .map(|z| z.norm())
            .fold(T::zero(), T::max);
        let (rho, populations) = if d == 16 {
            let rho = devectorize(&v, 4);
            let mut p = [T::zero(); 4];
            for (i, pi) in p.iter_mut().enumerate() {
                *pi = rho[(i, i)].re;
            }
            (rho, p)
        } else {
            let mut rho = CMat::zeros(4, 4);
            let mut p = [T::zero(); 4];
            for i in 0..4 {
                rho[(i, i)] = v[i];
                p[i] = v[i].re;
            }
            (rho, p)
        };
        Ok(SteadyState {
            rho,
            populations,
            residual: resid,
        })
    }

    /// Unit-normalized steady vector, cached after the first solve.
    fn steady_unit_vector(&self) -> Result<Arc<Vec<Cplx<T>>>> {
        let hit = self.steady_vec.read().unwrap().clone();
        if let Some(v) = hit {
            return Ok(v);
        }
        let ss = self.steady_state()?;
        let mut v = if self.dim() == 16 {
            vectorize(&ss.rho)
        } else {
            (0..4).map(|i| ss.rho[(i, i)]).collect()
        };
        let nrm = vnorm(&v);
        for z in v.iter_mut() {
            *z = *z / cre(nrm);
        }
        let arc = Arc::new(v);
        *self.steady_vec.write().unwrap() = Some(Arc::clone(&arc));
        Ok(arc)
    }

    /// Cumulant generating function: the eigenvalue branch of L(chi)
    /// continuously connected to the chi = 0 zero mode. Selection is by
    /// maximal real part with eigenvector-overlap tracking among near-ties;
    /// if the connected branch is overtaken, the scan fails rather than
    /// silently jumping branch.
    pub fn cgf(&self, chi: T) -> Result<Cplx<T>> {
        let l = self.matrix(chi)?;
        let refv = self.steady_unit_vector()?;
        connected_eigenvalue(&l, &refv, true)
    }

    /// Generating-function branch at a complex counting argument (kinetic
    /// machine only). The spectrum-level symmetry checks need the dominant
    /// branch, so near-tie overlap selection is used without the strict
    /// crossing guard.
    pub fn cgf_complex(&self, chi: Cplx<T>) -> Result<Cplx<T>> {
        let l = self.matrix_counted_complex(chi)?;
        let refv = self.steady_unit_vector()?;
        connected_eigenvalue(&l, &refv, false)
    }

    /// Current (order 1) or current and noise (order 2) of the counted heat,
    /// by central differences of the generating function in the counting
    /// field. Order 1 uses steps h and h/2 with one Richardson extrapolation.
    pub fn cumulant(&self, order: u32) -> Result<CumulantResult<T>> {
        if order != 1 && order != 2 {
            return Err(Error::InvalidSpec(format!(
                "cumulant order must be 1 or 2, got {order}"
            )));
        }
        let h = self.options.chi_step;
        let gph = self.cgf(h)?;
        let gmh = self.cgf(-h)?;
        let gp2 = self.cgf(h * T::of(0.5))?;
        let gm2 = self.cgf(-h * T::of(0.5))?;
        // dG/d(i chi) at 0: -i (G(h) - G(-h)) / (2h), Richardson over h, h/2.
        let d_h = (gph - gmh) * Cplx::new(T::zero(), -T::of(0.5) / h);
        let d_h2 = (gp2 - gm2) * Cplx::new(T::zero(), -T::one() / h);
        let current = ((d_h2 * cre(T::of(4.0)) - d_h) * cre(T::of(1.0 / 3.0))).re;
        if order == 1 {
            return Ok(CumulantResult {
                current,
                noise: None,
                chi_step: h,
                method: "central+richardson",
            });
        }
        let g0 = self.cgf(T::zero())?;
        // d^2 G / d(i chi)^2 = -(d^2 G / d chi^2).
        let noise = -((gph + gmh - g0 * cre(T::of(2.0))).re) / (h * h);
        Ok(CumulantResult {
            current,
            noise: Some(noise),
            chi_step: h,
            method: "central",
        })
    }

    /// Closed-form steady current into the counted reservoir, one formula
    /// per scheme: perturbative eigenvalue derivative for the superoperator
    /// machines, net pairwise flux for the population machine, and the
    /// transition-resolved kinetic current for the kinetic machine.
    pub fn analytic_current(&self, steady: &SteadyState<T>) -> Result<T> {
        match &*self.machine {
            Machine::Lindblad(core) => {
                core.derivative_current(self.counted, &self.options, &steady.rho)
            }
            Machine::Population(core) => {
                core.net_flux_current(self.counted, &steady.populations)
            }
            Machine::Niba(core) => core.analytic_current(self.counted, &steady.populations),
        }
    }

    /// Emission-weighted form of the population-machine current: every
    /// ordered eigenstate pair contributes gap/2 J(gap) (1 + n(gap)) with the
    /// spectral density extended oddly. Algebraically equal to the net
    /// pairwise flux; kept as an independent code path for cross-checks.
    pub fn redfield_flux_emission_form(&self, steady: &SteadyState<T>) -> Result<T> {
        let core = match &*self.machine {
            Machine::Population(core) => core,
            _ => {
                return Err(Error::SchemeMismatch {
                    expected: "redfield (population form)".into(),
                    found: format!("{} ({})", self.scheme.name(), self.machine.form_name()),
                })
            }
        };
        let side = core.side_for(self.counted)?;
        let comps = core.counted_components(self.counted)?;
        let half = T::of(0.5);
        let mut acc = T::zero();
        for bath in comps {
            for m in 0..4 {
                for n in 0..4 {
                    if m == n {
                        continue;
                    }
                    let gap = core.energies[m] - core.energies[n];
                    if gap.abs() <= T::of(1e-12) {
                        continue;
                    }
                    let j_odd = {
                        let mag = bath.spectral_density(gap.abs())?;
                        if gap > T::zero() {
                            mag
                        } else {
                            -mag
                        }
                    };
                    let occ = bose_occupation(bath.temperature, gap)?;
                    acc += gap * half * j_odd * (T::one() + occ)
                        * side.weight[n][m]
                        * steady.populations[m];
                }
            }
        }
        Ok(acc)
    }

    /// Net current through each eigenstate pair of the population machine,
    /// into the counted reservoir; the entries sum to the total current.
    pub fn transition_currents(
        &self,
        steady: &SteadyState<T>,
    ) -> Result<Vec<TransitionCurrent<T>>> {
        let core = match &*self.machine {
            Machine::Population(core) => core,
            _ => {
                return Err(Error::SchemeMismatch {
                    expected: "redfield (population form)".into(),
                    found: format!("{} ({})", self.scheme.name(), self.machine.form_name()),
                })
            }
        };
        let side = core.side_for(self.counted)?;
        let comps = core.counted_components(self.counted)?;
        let p = &steady.populations;
        let mut out = Vec::new();
        for m in 0..4 {
            for n in 0..m {
                // energies ascend, so m is the upper state of the pair.
                let gap = core.energies[m] - core.energies[n];
                if gap <= T::of(1e-12) {
                    continue;
                }
                let mut cur = T::zero();
                for bath in &comps {
                    let down =
                        redfield_sequential_rate(bath, gap, Direction::Emit)? * side.weight[n][m];
                    let up =
                        redfield_sequential_rate(bath, -gap, Direction::Emit)? * side.weight[m][n];
                    cur += gap * (down * p[m] - up * p[n]);
                }
                out.push(TransitionCurrent {
                    upper: m,
                    lower: n,
                    gap,
                    current: cur,
                });
            }
        }
        Ok(out)
    }

    /// The two right-reservoir transition terms of the kinetic current
    /// (the e12 edge and the e34 edge), independent of the counted terminal.
    pub fn niba_edge_currents(&self, steady: &SteadyState<T>) -> Result<(T, T)> {
        let core = match &*self.machine {
            Machine::Niba(core) => core,
            _ => {
                return Err(Error::SchemeMismatch {
                    expected: "niba".into(),
                    found: self.scheme.name().into(),
                })
            }
        };
        let t = &core.table;
        let p = &steady.populations;
        Ok((
            t.e12 * (t.k12_r * p[0] - t.k21_r * p[1]),
            t.e34 * (t.k34_r * p[2] - t.k43_r * p[3]),
        ))
    }

    /// Integrate d(rho)/dt = L(0) rho from `rho0` and report the state at
    /// each requested time. Times must be non-negative and strictly
    /// increasing. The population machines evolve the diagonal of `rho0` and
    /// return diagonal states.
    pub fn propagate_dynamics(&self, rho0: &CMat<T>, t_grid: &[T]) -> Result<Vec<CMat<T>>> {
        if t_grid.is_empty() {
            return Err(Error::TooFewPoints { need: 1, got: 0 });
        }
        if t_grid[0] < T::zero() {
            return Err(Error::InvalidSpec("propagation times must be >= 0".into()));
        }
        for w in t_grid.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidSpec(
                    "propagation times must be strictly increasing".into(),
                ));
            }
        }
        if rho0.rows() != 4 || rho0.cols() != 4 {
            return Err(Error::InvalidSpec("initial state must be 4x4".into()));
        }
        let tr = rho0.trace();
        if (tr.re - T::one()).abs() > T::of(1e-6) || tr.im.abs() > T::of(1e-6) {
            return Err(Error::InvalidSpec("initial state must have unit trace".into()));
        }
        if rho0.hermiticity_defect() > T::of(1e-6) {
            return Err(Error::InvalidSpec("initial state must be Hermitian".into()));
        }
        let l = self.matrix(T::zero())?;
        let dim = l.rows();
        let mut y: Vec<Cplx<T>> = if dim == 16 {
            vectorize(rho0)
        } else {
            (0..4).map(|i| rho0[(i, i)]).collect()
        };
        let mut t = T::zero();
        let fro = l.frobenius();
        let mut dt = (T::of(0.1) / fro.max(T::of(1e-12))).min(T::one());
        let mut out = Vec::with_capacity(t_grid.len());
        for &target in t_grid {
            loop {
                let remaining = target - t;
                if remaining <= T::epsilon() * target.abs().max(T::one()) {
                    break;
                }
                let h = dt.min(remaining);
                let clipped = h < dt;
                let (ynew, err) = dp54_step(&l, &y, h);
                let ynorm = y.iter().map(|z| z.norm()).fold(T::zero(), T::max);
                let tol = T::of(1e-12) + T::of(1e-10) * ynorm;
                if err <= tol {
                    t += h;
                    y = ynew;
                    let fac = if err == T::zero() {
                        T::of(5.0)
                    } else {
                        (T::of(0.9) * (tol / err).powf(T::of(0.2)))
                            .min(T::of(5.0))
                            .max(T::of(0.2))
                    };
                    let next = h * fac;
                    dt = if clipped { dt.max(next) } else { next };
                } else {
                    let fac = (T::of(0.9) * (tol / err).powf(T::of(0.2))).max(T::of(0.2));
                    dt = h * fac;
                }
                if dt < T::of(1e-14) * t.abs().max(T::one()) {
                    return Err(Error::StepSizeUnderflow { t: t.as_f64() });
                }
            }
            if dim == 16 {
                out.push(devectorize(&y, 4));
            } else {
                let mut m = CMat::zeros(4, 4);
                for i in 0..4 {
                    m[(i, i)] = y[i];
                }
                out.push(m);
            }
        }
        Ok(out)
    }
}

fn vectorize<T: Scalar>(rho: &CMat<T>) -> Vec<Cplx<T>> {
    let n = rho.rows();
    let mut v = vec![Cplx::new(T::zero(), T::zero()); n * n];
    for j in 0..n {
        for i in 0..n {
            v[j * n + i] = rho[(i, j)];
        }
    }
    v
}

fn devectorize<T: Scalar>(v: &[Cplx<T>], n: usize) -> CMat<T> {
    let mut m = CMat::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            m[(i, j)] = v[j * n + i];
        }
    }
    m
}

/// Eigenvalue of `l` connected to the reference vector. Candidates are
/// ranked by real part; the pick maximizes eigenvector overlap with `refv`.
/// Strict mode scans the top four and fails with `BranchCrossing` when the
/// overlap pick is no longer within a tie of the top; non-strict mode only
/// disambiguates genuine near-ties. The pick is refined by two rounds of a
/// two-sided Rayleigh quotient.
fn connected_eigenvalue<T: Scalar>(
    l: &CMat<T>,
    refv: &[Cplx<T>],
    strict: bool,
) -> Result<Cplx<T>> {
    let mut evs = eig_values(l)?;
    evs.sort_by(|a, b| b.re.partial_cmp(&a.re).unwrap());
    let radius = evs.iter().map(|z| z.norm()).fold(T::zero(), T::max);
    let tie = T::of(1e-9) * radius.max(T::one());
    let top = evs[0].re;
    let candidates: Vec<Cplx<T>> = if strict {
        evs.iter().take(4).copied().collect()
    } else {
        evs.iter().copied().filter(|z| z.re >= top - tie).collect()
    };
    let pick = if candidates.len() == 1 {
        candidates[0]
    } else {
        let mut best = candidates[0];
        let mut best_ov = T::of(-1.0);
        for &cand in &candidates {
            let v = eigenvector_for(l, cand)?;
            let ov = vdot(refv, &v).norm();
            if ov > best_ov {
                best_ov = ov;
                best = cand;
            }
        }
        best
    };
    if strict && pick.re < top - tie {
        return Err(Error::BranchCrossing);
    }
    rayleigh_polish(l, pick)
}

/// Two-sided Rayleigh refinement: mu = (u* L v) / (u* v) with v and u the
/// right and left eigenvectors from inverse iteration. Falls back to the
/// one-sided quotient when the vectors are nearly biorthogonal.
fn rayleigh_polish<T: Scalar>(l: &CMat<T>, mu0: Cplx<T>) -> Result<Cplx<T>> {
    let lt = l.dagger();
    let mut mu = mu0;
    for _ in 0..2 {
        let v = eigenvector_for(l, mu)?;
        let u = eigenvector_for(&lt, mu.conj())?;
        let lv = l.matvec(&v);
        let den = vdot(&u, &v);
        mu = if den.norm() < T::of(1e-8) {
            vdot(&v, &lv)
        } else {
            vdot(&u, &lv) / den
        };
    }
    Ok(mu)
}

fn axpyv<T: Scalar>(y: &[Cplx<T>], h: T, terms: &[(f64, &[Cplx<T>])]) -> Vec<Cplx<T>> {
    let mut out = y.to_vec();
    for (c, k) in terms {
        let hc = cre(h * T::of(*c));
        for (o, ki) in out.iter_mut().zip(k.iter()) {
            *o += hc * *ki;
        }
    }
    out
}

/// One Dormand-Prince 5(4) step; returns the fifth-order state and the
/// max-norm of the embedded error estimate.
fn dp54_step<T: Scalar>(l: &CMat<T>, y: &[Cplx<T>], h: T) -> (Vec<Cplx<T>>, T) {
    let k1 = l.matvec(y);
    let k2 = l.matvec(&axpyv(y, h, &[(0.2, &k1)]));
    let k3 = l.matvec(&axpyv(y, h, &[(3.0 / 40.0, &k1), (9.0 / 40.0, &k2)]));
    let k4 = l.matvec(&axpyv(
        y,
        h,
        &[(44.0 / 45.0, &k1), (-56.0 / 15.0, &k2), (32.0 / 9.0, &k3)],
    ));
    let k5 = l.matvec(&axpyv(
        y,
        h,
        &[
            (19372.0 / 6561.0, &k1),
            (-25360.0 / 2187.0, &k2),
            (64448.0 / 6561.0, &k3),
            (-212.0 / 729.0, &k4),
        ],
    ));
    let k6 = l.matvec(&axpyv(
        y,
        h,
        &[
            (9017.0 / 3168.0, &k1),
            (-355.0 / 33.0, &k2),
            (46732.0 / 5247.0, &k3),
            (49.0 / 176.0, &k4),
            (-5103.0 / 18656.0, &k5),
        ],
    ));
    let y5 = axpyv(
        y,
        h,
        &[
            (35.0 / 384.0, &k1),
            (500.0 / 1113.0, &k3),
            (125.0 / 192.0, &k4),
            (-2187.0 / 6784.0, &k5),
            (11.0 / 84.0, &k6),
        ],
    );
    let k7 = l.matvec(&y5);
    let y4 = axpyv(
        y,
        h,
        &[
            (5179.0 / 57600.0, &k1),
            (7571.0 / 16695.0, &k3),
            (393.0 / 640.0, &k4),
            (-92097.0 / 339200.0, &k5),
            (187.0 / 2100.0, &k6),
            (1.0 / 40.0, &k7),
        ],
    );
    let err = y5
        .iter()
        .zip(y4.iter())
        .map(|(a, b)| (*a - *b).norm())
        .fold(T::zero(), T::max);
    (y5, err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eigh, solve};
    use crate::model::{LeftBath, LocalBasisEnergies, QubitSpec, Topology};

    fn bath(alpha: f64, t: f64) -> BathSpec<f64> {
        BathSpec {
            alpha,
            omega_c: 5.0,
            temperature: t,
        }
    }

    fn two_terminal(alpha: f64, eps: f64, tl: f64, tr: f64) -> SystemSpec<f64> {
        SystemSpec {
            u: 0.1,
            left: QubitSpec {
                epsilon: eps,
                delta: 1.0,
            },
            right: QubitSpec {
                epsilon: eps,
                delta: 1.0,
            },
            topology: Topology::TwoTerminal,
            left_bath: LeftBath::Single(bath(alpha, tl)),
            right_bath: bath(alpha, tr),
        }
    }

    fn three_terminal(alpha: f64, eps: f64, th: f64, tc: f64, tr: f64) -> SystemSpec<f64> {
        SystemSpec {
            u: 0.1,
            left: QubitSpec {
                epsilon: eps,
                delta: 1.0,
            },
            right: QubitSpec {
                epsilon: eps,
                delta: 1.0,
            },
            topology: Topology::ThreeTerminal,
            left_bath: LeftBath::Split {
                hot: bath(alpha, th),
                cold: bath(alpha, tc),
            },
            right_bath: bath(alpha, tr),
        }
    }

    fn opts() -> SolverOptions<f64> {
        SolverOptions::default()
    }

    /// max over columns of |trace-functional row sum|.
    fn trace_defect(l: &CMat<f64>) -> f64 {
        let d = l.rows();
        let mut worst = 0.0f64;
        for c in 0..d {
            let mut s = Cplx::new(0.0, 0.0);
            if d == 16 {
                for i in 0..4 {
                    s += l[(i * 4 + i, c)];
                }
            } else {
                for r in 0..d {
                    s += l[(r, c)];
                }
            }
            worst = worst.max(s.norm());
        }
        worst
    }

    fn synthetic_table() -> NibaRateTable<f64> {
        NibaRateTable {
            e12: 1.2,
            e34: 0.8,
            e13: 1.2,
            e24: 0.8,
            k12_r: 0.31,
            k21_r: 0.12,
            k34_r: 0.23,
            k43_r: 0.055,
            k13_l: 0.27,
            k31_l: 0.09,
            k24_l: 0.19,
            k42_l: 0.048,
        }
    }

    fn null_space_populations(l: &CMat<f64>) -> [f64; 4] {
        let mut a = l.clone();
        for c in 0..4 {
            a[(0, c)] = Cplx::new(1.0, 0.0);
        }
        let mut rhs = vec![Cplx::new(0.0, 0.0); 4];
        rhs[0] = Cplx::new(1.0, 0.0);
        let v = solve(&a, &rhs).unwrap();
        [v[0].re, v[1].re, v[2].re, v[3].re]
    }

    #[test]
    fn neptre_generator_preserves_trace() {
        let spec = two_terminal(0.5, 1.0, 1.5, 0.5);
        let gen = TiltedGenerator::build(&spec, Scheme::NePtre, Terminal::Right, &opts()).unwrap();
        assert!(trace_defect(&gen.matrix(0.0).unwrap()) < 1e-10);
        let mut sec = opts();
        sec.secular = true;
        let gen2 = TiltedGenerator::build(&spec, Scheme::NePtre, Terminal::Right, &sec).unwrap();
        assert!(trace_defect(&gen2.matrix(0.0).unwrap()) < 1e-10);
    }

    #[test]
    fn redfield_generators_preserve_trace() {
        let spec = two_terminal(0.01, 1.0, 1.5, 0.5);
        let full =
            TiltedGenerator::build(&spec, Scheme::Redfield, Terminal::Right, &opts()).unwrap();
        assert!(trace_defect(&full.matrix(0.0).unwrap()) < 1e-10);
        let mut popt = opts();
        popt.redfield_form = RedfieldForm::Population;
        let pop = TiltedGenerator::build(&spec, Scheme::Redfield, Terminal::Right, &popt).unwrap();
        assert!(trace_defect(&pop.matrix(0.0).unwrap()) < 1e-12);
    }

    #[test]
    fn zero_tunneling_leaves_coherent_part_only() {
        let mut spec = two_terminal(0.5, 1.0, 1.5, 0.5);
        spec.left.delta = 0.0;
        spec.right.delta = 0.0;
        let gen = TiltedGenerator::build(&spec, Scheme::NePtre, Terminal::Right, &opts()).unwrap();
        let l = gen.matrix(0.0).unwrap();
        let e = gen.frame().unwrap().energies.clone();
        for i in 0..4 {
            for j in 0..4 {
                let k = j * 4 + i;
                let want = Cplx::new(0.0, -(e[i] - e[j]));
                assert!((l[(k, k)] - want).norm() < 1e-12);
            }
        }
        for r in 0..16 {
            for c in 0..16 {
                if r != c {
                    assert!(l[(r, c)].norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn niba_generator_is_proper_rate_matrix() {
        let spec = two_terminal(5.0, 1.0, 1.5, 0.5);
        let gen = TiltedGenerator::build(&spec, Scheme::Niba, Terminal::Right, &opts()).unwrap();
        let l = gen.matrix(0.0).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                assert!(l[(r, c)].im.abs() < 1e-15);
                if r != c {
                    assert!(l[(r, c)].re >= 0.0);
                }
            }
        }
        assert!(trace_defect(&l) < 1e-12);
        // Counting dresses gains only: the chi != 0 matrix keeps the same
        // diagonal and rotates the counted gains by e^{i gap chi}.
        let t = gen.niba_table().unwrap();
        let lx = gen.matrix(0.3).unwrap();
        let want = Cplx::from_polar(t.k12_r, t.e12 * 0.3);
        assert!((lx[(1, 0)] - want).norm() < 1e-15);
        assert!((lx[(0, 0)] - l[(0, 0)]).norm() < 1e-15);
    }

    #[test]
    fn niba_equilibrium_reaches_gibbs_state() {
        let spec = two_terminal(5.0, 1.0, 1.0, 1.0);
        let gen = TiltedGenerator::build(&spec, Scheme::Niba, Terminal::Right, &opts()).unwrap();
        let ss = gen.steady_state().unwrap();
        let en: LocalBasisEnergies<f64> = local_basis_energies(0.1, 1.0, 1.0);
        let e = en.e;
        let z: f64 = e.iter().map(|x| (-x / 1.0).exp()).sum();
        for i in 0..4 {
            let want = (-e[i]).exp() / z;
            assert!(
                (ss.populations[i] - want).abs() < 1e-8 * want.max(1e-3),
                "population {i}: {} vs {}",
                ss.populations[i],
                want
            );
        }
        assert!(gen.analytic_current(&ss).unwrap().abs() < 1e-9);
        let cur = gen.cumulant(1).unwrap();
        assert!(cur.current.abs() < 1e-9);
    }

    #[test]
    fn decoupled_qubits_carry_no_current() {
        let mut spec = two_terminal(5.0, 1.0, 1.5, 0.5);
        spec.u = 0.0;
        let gen = TiltedGenerator::build(&spec, Scheme::Niba, Terminal::Right, &opts()).unwrap();
        let ss = gen.steady_state().unwrap();
        assert!(gen.analytic_current(&ss).unwrap().abs() < 1e-10);
        let loops = niba_loop_currents(gen.niba_table().unwrap()).unwrap();
        assert_eq!(loops.forward, 0.0);
        assert_eq!(loops.backward, 0.0);
    }

    #[test]
    fn niba_analytic_oracles_hold_at_strong_coupling() {
        // alpha = 5, eps = 1, U = 0.1, T = 2 +- 0.5.
        let spec = two_terminal(5.0, 1.0, 2.5, 1.5);
        let gen = TiltedGenerator::build(&spec, Scheme::Niba, Terminal::Right, &opts()).unwrap();
        let table = *gen.niba_table().unwrap();
        let ss = gen.steady_state().unwrap();
        let analytic = analytic_niba_populations(&table).unwrap();
        let sum: f64 = analytic.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        for i in 0..4 {
            assert!(
                (analytic[i] - ss.populations[i]).abs() < 1e-10,
                "population {i}: {} vs {}",
                analytic[i],
                ss.populations[i]
            );
        }
        let current = gen.analytic_current(&ss).unwrap();
        let loops = niba_loop_currents(&table).unwrap();
        assert!((loops.total - current).abs() < 1e-12);
        let (e12_part, e34_part) = gen.niba_edge_currents(&ss).unwrap();
        assert!((e12_part + e34_part - current).abs() < 1e-15);
        // First cumulant against the closed form.
        let fcs = gen.cumulant(1).unwrap();
        assert!(
            ((fcs.current - current) / current).abs() < 1e-6,
            "fcs {} vs analytic {}",
            fcs.current,
            current
        );
    }

    #[test]
    fn synthetic_table_identities() {
        // Mirror-symmetric rates: the two intermediate states are equivalent.
        let mut t = synthetic_table();
        t.k13_l = t.k12_r;
        t.k31_l = t.k21_r;
        t.k24_l = t.k34_r;
        t.k42_l = t.k43_r;
        let p = analytic_niba_populations(&t).unwrap();
        assert!((p[1] - p[2]).abs() < 1e-15);
        // Detailed balance at one temperature pins the Gibbs ratios.
        let temp = 0.9f64;
        let db = |e: f64, base: f64| (base, base * (-e / temp).exp());
        let (k12, k21) = db(1.2, 0.31);
        let (k34, k43) = db(0.8, 0.23);
        let (k13, k31) = db(1.2, 0.27);
        let (k24, k42) = db(0.8, 0.19);
        let g = NibaRateTable {
            e12: 1.2,
            e34: 0.8,
            e13: 1.2,
            e24: 0.8,
            k12_r: k12,
            k21_r: k21,
            k34_r: k34,
            k43_r: k43,
            k13_l: k13,
            k31_l: k31,
            k24_l: k24,
            k42_l: k42,
        };
        let pg = analytic_niba_populations(&g).unwrap();
        let sum: f64 = pg.iter().sum();
        assert!((sum - 1.0).abs() < 1e-14);
        // State 1 sits highest: E1 - E2 = e12 > 0, so p2/p1 = e^{+e12/T}.
        let r2 = (1.2f64 / temp).exp();
        let r4 = (2.0f64 / temp).exp();
        assert!((pg[1] / pg[0] - r2).abs() < 1e-12 * r2);
        assert!((pg[2] / pg[0] - r2).abs() < 1e-12 * r2);
        assert!((pg[3] / pg[0] - r4).abs() < 1e-12 * r4);
        // Null space of the assembled matrix agrees with the closed form.
        let t2 = synthetic_table();
        let l = build_niba_generator(&t2, 0.0);
        assert!(trace_defect(&l) < 1e-15);
        let pn = null_space_populations(&l);
        let pa = analytic_niba_populations(&t2).unwrap();
        for i in 0..4 {
            assert!((pn[i] - pa[i]).abs() < 1e-13);
        }
        let loops = niba_loop_currents(&t2).unwrap();
        let right_current = t2.e12 * (t2.k12_r * pa[0] - t2.k21_r * pa[1])
            + t2.e34 * (t2.k34_r * pa[2] - t2.k43_r * pa[3]);
        assert!((loops.total - right_current).abs() < 1e-13);
        // Asymmetric splittings are rejected.
        let mut bad = synthetic_table();
        bad.e13 = 1.5;
        assert!(matches!(
            analytic_niba_populations(&bad),
            Err(Error::AsymmetricSplitting { .. })
        ));
        // Counting phase lands on the right-bath gains.
        let lx = build_niba_generator(&t2, 0.25);
        let want = Cplx::from_polar(t2.k12_r, t2.e12 * 0.25);
        assert!((lx[(1, 0)] - want).norm() < 1e-15);
        let want_l = Cplx::new(t2.k13_l, 0.0);
        assert!((lx[(2, 0)] - want_l).norm() < 1e-15);
    }

    #[test]
    fn cgf_vanishes_at_zero_and_conjugates() {
        let spec = two_terminal(0.5, 1.0, 1.5, 0.5);
        let gen = TiltedGenerator::build(&spec, Scheme::NePtre, Terminal::Right, &opts()).unwrap();
        assert!(gen.cgf(0.0).unwrap().norm() < 1e-10);
        let gp = gen.cgf(0.05).unwrap();
        let gm = gen.cgf(-0.05).unwrap();
        assert!((gm - gp.conj()).norm() < 1e-10);
        let two = gen.cumulant(2).unwrap();
        assert!(two.noise.unwrap() >= -1e-8);
    }

    #[test]
    fn gallavotti_cohen_symmetry_holds_for_kinetic_generator() {
        let spec = two_terminal(5.0, 1.0, 2.5, 1.5);
        let gen = TiltedGenerator::build(&spec, Scheme::Niba, Terminal::Right, &opts()).unwrap();
        let sigma = 1.0 / 1.5 - 1.0 / 2.5;
        for &chi in &[0.03, 0.06, 0.09] {
            let g = gen.cgf(chi).unwrap();
            let g_shifted = gen.cgf_complex(Cplx::new(-chi, sigma)).unwrap();
            assert!(
                (g - g_shifted).norm() < 1e-6,
                "chi = {chi}: {g} vs {g_shifted}"
            );
        }
    }

    #[test]
    fn first_cumulant_matches_derivative_current_neptre() {
        let spec = two_terminal(0.5, 1.0, 1.5, 0.5);
        let gen = TiltedGenerator::build(&spec, Scheme::NePtre, Terminal::Right, &opts()).unwrap();
        let ss = gen.steady_state().unwrap();
        let analytic = gen.analytic_current(&ss).unwrap();
        let fcs = gen.cumulant(1).unwrap();
        assert!(
            ((fcs.current - analytic) / analytic).abs() < 1e-6,
            "fcs {} vs analytic {}",
            fcs.current,
            analytic
        );
    }

    #[test]
    fn first_cumulant_matches_analytic_current_redfield() {
        let spec = two_terminal(0.01, 1.0, 1.5, 0.5);
        let full =
            TiltedGenerator::build(&spec, Scheme::Redfield, Terminal::Right, &opts()).unwrap();
        let ss = full.steady_state().unwrap();
        let analytic = full.analytic_current(&ss).unwrap();
        let fcs = full.cumulant(1).unwrap();
        assert!(
            ((fcs.current - analytic) / analytic).abs() < 1e-6,
            "full: fcs {} vs analytic {}",
            fcs.current,
            analytic
        );
        let mut popt = opts();
        popt.redfield_form = RedfieldForm::Population;
        let pop = TiltedGenerator::build(&spec, Scheme::Redfield, Terminal::Right, &popt).unwrap();
        let ssp = pop.steady_state().unwrap();
        let analytic_p = pop.analytic_current(&ssp).unwrap();
        let fcs_p = pop.cumulant(1).unwrap();
        assert!(
            ((fcs_p.current - analytic_p) / analytic_p).abs() < 1e-6,
            "population: fcs {} vs analytic {}",
            fcs_p.current,
            analytic_p
        );
        // Steady coherences are small but not zero: cross-frequency terms feed
        // them at O(rate/gap) and the imaginary rate parts rotate that feed into
        // phase with the current functional, so the full generator sits ~1e-2
        // from the population reduction. Stripping the imaginary parts leaves
        // only the quadrature-suppressed residue.
        let gap = ((analytic - analytic_p) / analytic).abs();
        assert!(gap < 3e-2, "full {} vs population {}", analytic, analytic_p);
        let mut nolamb = opts();
        nolamb.neglect_lamb_shift = true;
        let bare =
            TiltedGenerator::build(&spec, Scheme::Redfield, Terminal::Right, &nolamb).unwrap();
        let ssb = bare.steady_state().unwrap();
        let analytic_b = bare.analytic_current(&ssb).unwrap();
        let gap_b = ((analytic_b - analytic_p) / analytic_p).abs();
        assert!(gap_b < 5e-4, "real-rate full {} vs population {}", analytic_b, analytic_p);
        assert!(gap_b < gap / 10.0, "imaginary parts dominate the mismatch");
        // Emission-weighted and net-flux forms are the same quantity.
        let emission = pop.redfield_flux_emission_form(&ssp).unwrap();
        assert!((emission - analytic_p).abs() < 1e-12 * analytic_p.abs().max(1.0));
        // Pairwise transition currents resolve the total.
        let parts = pop.transition_currents(&ssp).unwrap();
        let total: f64 = parts.iter().map(|p| p.current).sum();
        assert!((total - analytic_p).abs() < 1e-12 * analytic_p.abs().max(1.0));
        // All pairwise gaps survive: the qubit-qubit coupling splits the
        // near-degenerate middle pair by about 2U.
        assert_eq!(parts.len(), 6);
    }

    #[test]
    fn counting_left_reservoir_flips_current_sign() {
        let spec = two_terminal(5.0, 1.0, 1.5, 0.5);
        let gen = TiltedGenerator::build(&spec, Scheme::Niba, Terminal::Right, &opts()).unwrap();
        let ss = gen.steady_state().unwrap();
        let i_r = gen.analytic_current(&ss).unwrap();
        let i_l = gen
            .with_counted(Terminal::Left)
            .unwrap()
            .analytic_current(&ss)
            .unwrap();
        assert!((i_l + i_r).abs() < 1e-12, "niba: {i_l} + {i_r}");
        let spec2 = two_terminal(0.01, 1.0, 1.5, 0.5);
        let mut popt = opts();
        popt.redfield_form = RedfieldForm::Population;
        let red =
            TiltedGenerator::build(&spec2, Scheme::Redfield, Terminal::Right, &popt).unwrap();
        let ss2 = red.steady_state().unwrap();
        let j_r = red.analytic_current(&ss2).unwrap();
        let j_l = red
            .with_counted(Terminal::Left)
            .unwrap()
            .analytic_current(&ss2)
            .unwrap();
        // Kinetic generators balance the two counted currents exactly.
        assert!((j_l + j_r).abs() < 1e-12, "redfield population: {j_l} + {j_r}");
        let full =
            TiltedGenerator::build(&spec2, Scheme::Redfield, Terminal::Right, &opts()).unwrap();
        let ssf = full.steady_state().unwrap();
        let f_r = full.analytic_current(&ssf).unwrap();
        let f_l = full
            .with_counted(Terminal::Left)
            .unwrap()
            .analytic_current(&ssf)
            .unwrap();
        // Cross-frequency terms spoil strict balance at the coherence-feedback
        // order; the defect must stay far below the current itself.
        assert!((f_l + f_r).abs() < 3e-2 * f_r.abs(), "redfield full: {f_l} + {f_r}");
    }

    #[test]
    fn steady_state_is_physical() {
        let spec = two_terminal(0.5, 1.0, 1.5, 0.5);
        let gen = TiltedGenerator::build(&spec, Scheme::NePtre, Terminal::Right, &opts()).unwrap();
        let ss = gen.steady_state().unwrap();
        assert!((ss.rho.trace().re - 1.0).abs() < 1e-10);
        assert!(ss.rho.trace().im.abs() < 1e-12);
        assert!(ss.rho.hermiticity_defect() < 1e-10);
        assert!(ss.residual < 1e-10);
        let (evals, _) = eigh(&ss.rho, 1e-15).unwrap();
        for e in evals {
            assert!(e >= -1e-9);
        }
    }

    #[test]
    fn propagation_holds_the_steady_state() {
        let spec = two_terminal(0.5, 1.0, 1.5, 0.5);
        let gen = TiltedGenerator::build(&spec, Scheme::NePtre, Terminal::Right, &opts()).unwrap();
        let ss = gen.steady_state().unwrap();
        let traj = gen.propagate_dynamics(&ss.rho, &[0.5, 1.0, 2.0]).unwrap();
        for state in &traj {
            assert!((state.trace().re - 1.0).abs() < 1e-9);
            let mut dev = 0.0f64;
            for i in 0..4 {
                for j in 0..4 {
                    dev = dev.max((state[(i, j)] - ss.rho[(i, j)]).norm());
                }
            }
            assert!(dev < 1e-9, "deviation {dev}");
        }
    }

    #[test]
    fn propagation_reaches_the_null_space_state() {
        let spec = two_terminal(5.0, 1.0, 2.5, 1.5);
        let gen = TiltedGenerator::build(&spec, Scheme::Niba, Terminal::Right, &opts()).unwrap();
        let l = gen.matrix(0.0).unwrap();
        let evs = eig_values(&l).unwrap();
        let slow = evs
            .iter()
            .map(|z| z.re.abs())
            .filter(|r| *r > 1e-9)
            .fold(f64::INFINITY, f64::min);
        let horizon = 200.0 / slow;
        let mut rho0 = CMat::zeros(4, 4);
        rho0[(0, 0)] = Cplx::new(1.0, 0.0);
        let traj = gen.propagate_dynamics(&rho0, &[horizon]).unwrap();
        let ss = gen.steady_state().unwrap();
        for i in 0..4 {
            let got = traj[0][(i, i)].re;
            assert!(
                (got - ss.populations[i]).abs() < 1e-8,
                "population {i}: {got} vs {}",
                ss.populations[i]
            );
        }
    }

    #[test]
    fn full_redfield_coherences_decay() {
        let spec = two_terminal(0.01, 1.0, 1.5, 0.5);
        let gen =
            TiltedGenerator::build(&spec, Scheme::Redfield, Terminal::Right, &opts()).unwrap();
        // Product state |uu><uu| carries coherences in the eigenbasis.
        let frame = gen.frame().unwrap();
        let v = frame.vectors.clone();
        let mut local = CMat::zeros(4, 4);
        local[(0, 0)] = Cplx::new(1.0, 0.0);
        let rho0 = v.dagger().matmul(&local.matmul(&v));
        let offdiag = |m: &CMat<f64>| {
            let mut worst = 0.0f64;
            for i in 0..4 {
                for j in 0..4 {
                    if i != j {
                        worst = worst.max(m[(i, j)].norm());
                    }
                }
            }
            worst
        };
        let start = offdiag(&rho0);
        assert!(start > 1e-2);
        let traj = gen.propagate_dynamics(&rho0, &[5000.0]).unwrap();
        assert!((traj[0].trace().re - 1.0).abs() < 1e-9);
        assert!(offdiag(&traj[0]) < start / 100.0);
    }

    #[test]
    fn component_counting_needs_split_reservoir() {
        let spec = two_terminal(0.01, 1.0, 1.5, 0.5);
        let red =
            TiltedGenerator::build(&spec, Scheme::Redfield, Terminal::Right, &opts()).unwrap();
        assert!(red.with_counted(Terminal::LeftHot).is_err());
        assert!(matches!(
            TiltedGenerator::build(&spec, Scheme::NePtre, Terminal::LeftHot, &opts()),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn three_terminal_component_currents_balance() {
        let spec = three_terminal(5.0, 1.0, 2.0, 0.2, 1.0);
        let gen = TiltedGenerator::build(&spec, Scheme::Niba, Terminal::Right, &opts()).unwrap();
        let ss = gen.steady_state().unwrap();
        let i_r = gen.analytic_current(&ss).unwrap();
        let fcs_r = gen.cumulant(1).unwrap().current;
        assert!(((fcs_r - i_r) / i_r).abs() < 1e-6);
        let i_hot = gen
            .with_counted(Terminal::LeftHot)
            .unwrap()
            .cumulant(1)
            .unwrap()
            .current;
        let i_cold = gen
            .with_counted(Terminal::LeftCold)
            .unwrap()
            .cumulant(1)
            .unwrap()
            .current;
        // Component currents add up to the whole-reservoir current and all
        // three terminals balance at steady state.
        let i_left = gen
            .with_counted(Terminal::Left)
            .unwrap()
            .analytic_current(&ss)
            .unwrap();
        assert!(
            (i_hot + i_cold - i_left).abs() < 1e-8,
            "{i_hot} + {i_cold} vs {i_left}"
        );
        assert!(
            (i_hot + i_cold + i_r).abs() < 1e-8,
            "sum {}",
            i_hot + i_cold + i_r
        );
    }

    #[test]
    fn shared_engines_reproduce_the_generator() {
        let spec = two_terminal(0.5, 1.0, 1.5, 0.5);
        let gen = TiltedGenerator::build(&spec, Scheme::Niba, Terminal::Right, &opts()).unwrap();
        let le = Arc::clone(gen.left_engine().unwrap());
        let re = Arc::clone(gen.right_engine().unwrap());
        let gen2 = TiltedGenerator::build_with_engines(
            &spec,
            Scheme::Niba,
            Terminal::Right,
            &opts(),
            Some(le),
            Some(re),
        )
        .unwrap();
        let a = gen.matrix(0.0).unwrap();
        let b = gen2.matrix(0.0).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(a[(r, c)], b[(r, c)]);
            }
        }
        // A mismatched engine is rejected.
        let other = Arc::new(RateEngine::new(
            spec.left_kernel().unwrap(),
            0.5,
            RateConfig::default(),
        ));
        assert!(TiltedGenerator::build_with_engines(
            &spec,
            Scheme::Niba,
            Terminal::Right,
            &opts(),
            Some(other),
            None,
        )
        .is_err());
    }

    #[test]
    fn cumulant_rejects_unsupported_orders() {
        let spec = two_terminal(0.01, 1.0, 1.5, 0.5);
        let mut popt = opts();
        popt.redfield_form = RedfieldForm::Population;
        let gen = TiltedGenerator::build(&spec, Scheme::Redfield, Terminal::Right, &popt).unwrap();
        assert!(matches!(gen.cumulant(0), Err(Error::InvalidSpec(_))));
        assert!(matches!(gen.cumulant(3), Err(Error::InvalidSpec(_))));
    }
}
