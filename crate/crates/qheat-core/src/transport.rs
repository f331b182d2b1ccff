//! Sweeps and derived transport observables.
//!
//! This module turns single-point solver results into the quantities the
//! device physics is actually judged by: temperature-bias scans with
//! negative-differential-conductance detection, loop and transition-current
//! decompositions of the steady current, per-terminal currents of the
//! three-terminal configuration, and heat-amplification factors obtained by
//! differentiating those currents along the right-bath temperature.
//!
//! Grid points of a sweep are independent solves and are evaluated in
//! parallel; output rows always follow grid order.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{LeftBath, SystemSpec, Terminal, Topology};
use crate::rates::RateEngine;
use crate::scalar::Scalar;
use crate::solver::{
    niba_loop_currents, LoopCurrents, NibaRateTable, RedfieldForm, Scheme, SolverOptions,
    TiltedGenerator, TransitionCurrent,
};

/// Which system parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Temperature bias about the fixed mean of the base temperatures:
    /// T_L = T0 + x/2, T_R = T0 - x/2. Two-terminal only.
    DeltaT,
    /// Coupling strength of both reservoirs at once. Two-terminal only.
    AlphaBoth,
    /// Coupling strength of the right reservoir alone.
    AlphaRight,
    /// Right-reservoir temperature.
    TR,
    /// Splitting energy of both qubits at once.
    Epsilon,
    /// Qubit-qubit coupling strength.
    U,
}

/// Whether sweep currents are reported raw or divided by the sweep maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    None,
    /// Divide by the largest current found in this sweep, so different
    /// coupling strengths become comparable on one plot.
    PerAlphaMax,
}

/// A one-parameter family of steady-current evaluations.
#[derive(Debug, Clone)]
pub struct SweepSpec<T> {
    pub base: SystemSpec<T>,
    pub axis: SweepAxis,
    pub grid: Vec<T>,
    pub scheme: Scheme,
    pub normalization: Normalization,
}

impl<T: Scalar> SweepSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::TooFewPoints { need: 1, got: 0 });
        }
        for w in self.grid.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidSpec(
                    "sweep grid must be strictly increasing".into(),
                ));
            }
        }
        self.base.validate()
    }
}

/// One grid point of a sweep. Solver failures are recorded, not propagated,
/// so a sweep survives isolated bad points (for example a temperature pushed
/// below the supported range).
#[derive(Debug, Clone)]
pub struct SweepPoint<T> {
    pub x: T,
    /// Current into the right reservoir after the requested normalization.
    pub value: Option<T>,
    /// Unnormalized current.
    pub raw: Option<T>,
    /// Failure description when the solver could not produce this point.
    pub note: Option<String>,
}

/// Ordered sweep results plus the normalizing scale.
#[derive(Debug, Clone)]
pub struct SweepTable<T> {
    pub points: Vec<SweepPoint<T>>,
    /// Largest raw current over the successful points.
    pub peak: Option<T>,
}

impl<T: Scalar> SweepTable<T> {
    /// Successful (x, raw current) pairs in grid order.
    pub fn valid(&self) -> Vec<(T, T)> {
        self.points
            .iter()
            .filter_map(|p| p.raw.map(|c| (p.x, c)))
            .collect()
    }
}

/// Turnover diagnostics of a bias sweep.
#[derive(Debug, Clone)]
pub struct NdtcReport<T> {
    /// Bias at the interior maximum, from a quadratic fit through the three
    /// points around the grid argmax; absent when the maximum sits on an
    /// endpoint.
    pub turnover: Option<T>,
    /// True when some slope turns negative after an earlier positive one.
    pub has_ndtc: bool,
    /// Finite-difference dI/dx per grid point, one-sided at the ends.
    pub di_dx: Vec<T>,
}

/// Pairwise eigenstate currents of the weak-coupling population machine.
#[derive(Debug, Clone)]
pub struct TransitionDecomposition<T> {
    /// All pairwise channels, grid order (upper > lower, energies ascending).
    pub parts: Vec<TransitionCurrent<T>>,
    pub total: T,
    /// The four largest channels by magnitude, as (upper, lower) indices.
    pub dominant: Vec<(usize, usize)>,
}

/// Per-terminal steady currents of the three-terminal configuration,
/// each positive when flowing out of the system into that reservoir.
#[derive(Debug, Clone, Copy)]
pub struct TerminalCurrents<T> {
    pub i_lh: T,
    pub i_lc: T,
    pub i_r: T,
}

/// Heat-amplification factors along a right-temperature grid.
///
/// The scalar `beta_lh`/`beta_lc`/`theta` summarize the grid point with the
/// largest finite hot-branch factor; the per-point vectors carry the whole
/// scan. Divergent points (right-current slope vanishing at a turnover) are
/// flagged and excluded from the factors, keeping every stored number finite.
#[derive(Debug, Clone)]
pub struct AmplificationReport<T> {
    /// Largest finite hot-branch factor |dI_Lh/dI_R| on the grid.
    pub beta_lh: T,
    /// Cold-branch factor at that same grid point.
    pub beta_lc: T,
    /// 0 when dI_Lh/dI_R > 0 at that point, 1 when negative.
    pub theta: u8,
    pub tr_grid: Vec<T>,
    pub i_r: Vec<T>,
    pub i_lh: Vec<T>,
    pub i_lc: Vec<T>,
    pub divergence_flags: Vec<bool>,
    /// Per-point factors; None where flagged divergent.
    pub beta_lh_grid: Vec<Option<T>>,
    pub beta_lc_grid: Vec<Option<T>>,
    /// Per-point branch choice, same convention as `theta`.
    pub theta_grid: Vec<u8>,
    /// Raw slope triples (dI_R, dI_Lh, dI_Lc) per dT_R, kept so divergent
    /// points stay inspectable.
    pub slopes: Vec<(T, T, T)>,
}

/// Coupling threshold scan for bias-induced turnover.
#[derive(Debug, Clone)]
pub struct PartialCouplingReport<T> {
    pub alpha_r: Vec<T>,
    pub has_ndtc: Vec<bool>,
    /// Smallest grid coupling showing a turnover.
    pub onset: Option<T>,
}

/// The base system with one parameter replaced by `x` along `axis`.
pub fn apply_axis<T: Scalar>(
    base: &SystemSpec<T>,
    axis: SweepAxis,
    x: T,
) -> Result<SystemSpec<T>> {
    let mut s = base.clone();
    let two = T::of(2.0);
    match axis {
        SweepAxis::DeltaT => match &mut s.left_bath {
            LeftBath::Single(lb) => {
                let t0 = (lb.temperature + s.right_bath.temperature) / two;
                lb.temperature = t0 + x / two;
                s.right_bath.temperature = t0 - x / two;
            }
            LeftBath::Split { .. } => {
                return Err(Error::InvalidSpec(
                    "temperature-bias sweeps need a single left bath".into(),
                ))
            }
        },
        SweepAxis::AlphaBoth => {
            match &mut s.left_bath {
                LeftBath::Single(lb) => lb.alpha = x,
                LeftBath::Split { .. } => {
                    return Err(Error::InvalidSpec(
                        "two-sided coupling sweeps need a single left bath".into(),
                    ))
                }
            }
            s.right_bath.alpha = x;
        }
        SweepAxis::AlphaRight => s.right_bath.alpha = x,
        SweepAxis::TR => s.right_bath.temperature = x,
        SweepAxis::Epsilon => {
            s.left.epsilon = x;
            s.right.epsilon = x;
        }
        SweepAxis::U => s.u = x,
    }
    Ok(s)
}

fn point_current<T: Scalar>(
    base: &SystemSpec<T>,
    axis: SweepAxis,
    x: T,
    scheme: Scheme,
    options: &SolverOptions<T>,
) -> Result<T> {
    let s = apply_axis(base, axis, x)?;
    let gen = TiltedGenerator::build(&s, scheme, Terminal::Right, options)?;
    let ss = gen.steady_state()?;
    gen.analytic_current(&ss)
}

/// Steady right-bath current at every grid point of `spec`.
pub fn current_sweep<T: Scalar>(
    spec: &SweepSpec<T>,
    options: &SolverOptions<T>,
) -> Result<SweepTable<T>> {
    spec.validate()?;
    let raw: Vec<(T, std::result::Result<T, String>)> = spec
        .grid
        .par_iter()
        .map(|&x| {
            let r = point_current(&spec.base, spec.axis, x, spec.scheme, options)
                .map_err(|e| e.to_string());
            (x, r)
        })
        .collect();
    let peak = raw
        .iter()
        .filter_map(|(_, r)| r.as_ref().ok().copied())
        .fold(None::<T>, |acc, c| {
            Some(acc.map_or(c, |a| if c > a { c } else { a }))
        });
    let scale = match spec.normalization {
        Normalization::None => None,
        Normalization::PerAlphaMax => peak.filter(|p| p.abs() > T::zero()),
    };
    let points = raw
        .into_iter()
        .map(|(x, r)| match r {
            Ok(c) => SweepPoint {
                x,
                value: Some(scale.map_or(c, |s| c / s)),
                raw: Some(c),
                note: None,
            },
            Err(msg) => SweepPoint {
                x,
                value: None,
                raw: None,
                note: Some(msg),
            },
        })
        .collect();
    Ok(SweepTable { points, peak })
}

/// Slope analysis of a current-versus-bias table.
///
/// Slopes are central differences at interior points and one-sided at the
/// ends. A turnover is a grid argmax away from both endpoints, localized by
/// the vertex of the parabola through its three bracketing points.
pub fn detect_ndtc<T: Scalar>(xs: &[T], ys: &[T]) -> Result<NdtcReport<T>> {
    let n = xs.len();
    if n < 4 || ys.len() < 4 {
        return Err(Error::TooFewPoints {
            need: 4,
            got: n.min(ys.len()),
        });
    }
    if n != ys.len() {
        return Err(Error::InvalidSpec(
            "slope analysis needs one current per grid point".into(),
        ));
    }
    for w in xs.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidSpec(
                "slope analysis needs a strictly increasing grid".into(),
            ));
        }
    }
    let mut di_dx = Vec::with_capacity(n);
    for i in 0..n {
        let (lo, hi) = if i == 0 {
            (0, 1)
        } else if i == n - 1 {
            (n - 2, n - 1)
        } else {
            (i - 1, i + 1)
        };
        di_dx.push((ys[hi] - ys[lo]) / (xs[hi] - xs[lo]));
    }
    let mut seen_positive = false;
    let mut has_ndtc = false;
    for &s in &di_dx {
        if s > T::zero() {
            seen_positive = true;
        } else if s < T::zero() && seen_positive {
            has_ndtc = true;
            break;
        }
    }
    let mut argmax = 0;
    for (i, &y) in ys.iter().enumerate() {
        if y > ys[argmax] {
            argmax = i;
        }
    }
    let turnover = if argmax > 0 && argmax < n - 1 {
        let k = argmax;
        let d1 = (ys[k] - ys[k - 1]) / (xs[k] - xs[k - 1]);
        let d2 = (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k]);
        let a2 = (d2 - d1) / (xs[k + 1] - xs[k - 1]);
        if a2 < T::zero() {
            // vertex of y = y[k-1] + d1 (x - x[k-1]) + a2 (x - x[k-1])(x - x[k])
            Some((xs[k - 1] + xs[k]) / T::of(2.0) - d1 / (T::of(2.0) * a2))
        } else {
            Some(xs[k])
        }
    } else {
        None
    };
    Ok(NdtcReport {
        turnover,
        has_ndtc,
        di_dx,
    })
}

/// [`detect_ndtc`] over the successful points of a sweep. Raw currents are
/// used; turnover location is invariant under the positive normalization.
pub fn detect_ndtc_table<T: Scalar>(table: &SweepTable<T>) -> Result<NdtcReport<T>> {
    let pairs = table.valid();
    let xs: Vec<T> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<T> = pairs.iter().map(|p| p.1).collect();
    detect_ndtc(&xs, &ys)
}

/// Directed-cycle split of the strong-coupling kinetic current.
pub fn loop_decomposition<T: Scalar>(table: &NibaRateTable<T>) -> Result<LoopCurrents<T>> {
    niba_loop_currents(table)
}

/// Eigenstate-pair decomposition of the weak-coupling current, computed on
/// the population machine counting the right reservoir.
pub fn transition_current_decomposition<T: Scalar>(
    base: &SystemSpec<T>,
    options: &SolverOptions<T>,
) -> Result<TransitionDecomposition<T>> {
    let mut o = options.clone();
    o.redfield_form = RedfieldForm::Population;
    let gen = TiltedGenerator::build(base, Scheme::Redfield, Terminal::Right, &o)?;
    let ss = gen.steady_state()?;
    let parts = gen.transition_currents(&ss)?;
    let total = parts.iter().fold(T::zero(), |acc, p| acc + p.current);
    let mut order: Vec<usize> = (0..parts.len()).collect();
    order.sort_by(|&a, &b| {
        parts[b]
            .current
            .abs()
            .partial_cmp(&parts[a].current.abs())
            .expect("transition currents are finite")
    });
    let dominant = order
        .iter()
        .take(4)
        .map(|&i| (parts[i].upper, parts[i].lower))
        .collect();
    Ok(TransitionDecomposition {
        parts,
        total,
        dominant,
    })
}

/// Per-terminal currents of a three-terminal device, all counted on one
/// shared steady state. The right current comes from the generator's
/// counting-field derivative; the two left components come from first
/// cumulants with component counting, which only the polaron-frame schemes
/// support.
pub fn three_terminal_currents<T: Scalar>(
    spec: &SystemSpec<T>,
    scheme: Scheme,
    options: &SolverOptions<T>,
) -> Result<TerminalCurrents<T>> {
    if spec.topology != Topology::ThreeTerminal {
        return Err(Error::InvalidSpec(
            "per-component currents need the split left bath".into(),
        ));
    }
    let gen = TiltedGenerator::build(spec, scheme, Terminal::Right, options)?;
    terminal_currents(&gen)
}

fn terminal_currents<T: Scalar>(gen: &TiltedGenerator<T>) -> Result<TerminalCurrents<T>> {
    let ss = gen.steady_state()?;
    let i_r = gen.analytic_current(&ss)?;
    let i_lh = gen.with_counted(Terminal::LeftHot)?.cumulant(1)?.current;
    let i_lc = gen.with_counted(Terminal::LeftCold)?.cumulant(1)?.current;
    Ok(TerminalCurrents { i_lh, i_lc, i_r })
}

fn currents_at_tr<T: Scalar>(
    base: &SystemSpec<T>,
    scheme: Scheme,
    tr: T,
    options: &SolverOptions<T>,
    left: Option<Arc<RateEngine<T>>>,
) -> Result<TerminalCurrents<T>> {
    let mut s = base.clone();
    s.right_bath.temperature = tr;
    let gen =
        TiltedGenerator::build_with_engines(&s, scheme, Terminal::Right, options, left, None)?;
    terminal_currents(&gen)
}

/// Amplification factors beta = |dI_L,component / dI_R| along `tr_grid`.
///
/// Derivatives are central differences in the right-bath temperature with
/// one Richardson pass (steps `dt_step` and `dt_step`/2). The left reservoir
/// never changes across the grid, so its rate engine and caches are shared by
/// every evaluation.
pub fn amplification_scan<T: Scalar>(
    base: &SystemSpec<T>,
    scheme: Scheme,
    tr_grid: &[T],
    dt_step: T,
    options: &SolverOptions<T>,
) -> Result<AmplificationReport<T>> {
    if base.topology != Topology::ThreeTerminal {
        return Err(Error::InvalidSpec(
            "amplification factors need the split left bath".into(),
        ));
    }
    if tr_grid.is_empty() {
        return Err(Error::TooFewPoints { need: 1, got: 0 });
    }
    if dt_step <= T::zero() {
        return Err(Error::InvalidSpec(
            "temperature-derivative step must be positive".into(),
        ));
    }
    // Warm the shared left engine once; every grid solve reuses its caches.
    let mut probe_spec = base.clone();
    probe_spec.right_bath.temperature = tr_grid[0];
    let probe = TiltedGenerator::build(&probe_spec, scheme, Terminal::Right, options)?;
    let left = probe.left_engine().cloned();

    struct Row<T> {
        center: TerminalCurrents<T>,
        slopes: (T, T, T),
    }
    let rows: Vec<Result<Row<T>>> = tr_grid
        .par_iter()
        .map(|&tr| {
            let center = currents_at_tr(base, scheme, tr, options, left.clone())?;
            let h = dt_step;
            let half = h / T::of(2.0);
            let fp = currents_at_tr(base, scheme, tr + h, options, left.clone())?;
            let fm = currents_at_tr(base, scheme, tr - h, options, left.clone())?;
            let fp2 = currents_at_tr(base, scheme, tr + half, options, left.clone())?;
            let fm2 = currents_at_tr(base, scheme, tr - half, options, left.clone())?;
            let richardson = |p: T, m: T, p2: T, m2: T| {
                let d1 = (p - m) / (T::of(2.0) * h);
                let d2 = (p2 - m2) / h;
                (T::of(4.0) * d2 - d1) / T::of(3.0)
            };
            let sr = richardson(fp.i_r, fm.i_r, fp2.i_r, fm2.i_r);
            let slh = richardson(fp.i_lh, fm.i_lh, fp2.i_lh, fm2.i_lh);
            let slc = richardson(fp.i_lc, fm.i_lc, fp2.i_lc, fm2.i_lc);
            Ok(Row {
                center,
                slopes: (sr, slh, slc),
            })
        })
        .collect();

    let n = tr_grid.len();
    let mut report = AmplificationReport {
        beta_lh: T::zero(),
        beta_lc: T::zero(),
        theta: 0,
        tr_grid: tr_grid.to_vec(),
        i_r: Vec::with_capacity(n),
        i_lh: Vec::with_capacity(n),
        i_lc: Vec::with_capacity(n),
        divergence_flags: Vec::with_capacity(n),
        beta_lh_grid: Vec::with_capacity(n),
        beta_lc_grid: Vec::with_capacity(n),
        theta_grid: Vec::with_capacity(n),
        slopes: Vec::with_capacity(n),
    };
    for row in rows {
        let row = row?;
        report.i_r.push(row.center.i_r);
        report.i_lh.push(row.center.i_lh);
        report.i_lc.push(row.center.i_lc);
        report.slopes.push(row.slopes);
    }
    // A point is divergent when the right-current slope vanishes there or
    // crosses zero before the next point: the quotients blow up across the
    // I_R turnover, so both bracketing points carry the flag.
    for i in 0..n {
        let (sr, slh, _) = report.slopes[i];
        let tiny = sr.abs() < T::of(1e-10) * slh.abs();
        let cross_next = i + 1 < n && sr * report.slopes[i + 1].0 < T::zero();
        let cross_prev = i > 0 && report.slopes[i - 1].0 * sr < T::zero();
        report.divergence_flags.push(tiny || cross_next || cross_prev);
    }
    let mut best: Option<(T, T, u8)> = None;
    for i in 0..n {
        if report.divergence_flags[i] {
            report.beta_lh_grid.push(None);
            report.beta_lc_grid.push(None);
            report.theta_grid.push(0);
            continue;
        }
        let (sr, slh, slc) = report.slopes[i];
        let b_lh = (slh / sr).abs();
        let b_lc = (slc / sr).abs();
        let theta = if slh / sr > T::zero() { 0 } else { 1 };
        report.beta_lh_grid.push(Some(b_lh));
        report.beta_lc_grid.push(Some(b_lc));
        report.theta_grid.push(theta);
        if best.map_or(true, |(b, _, _)| b_lh > b) {
            best = Some((b_lh, b_lc, theta));
        }
    }
    if let Some((b_lh, b_lc, theta)) = best {
        report.beta_lh = b_lh;
        report.beta_lc = b_lc;
        report.theta = theta;
    }
    Ok(report)
}

/// Bias sweep per right-coupling value, reporting where turnover first
/// appears. The left coupling stays at its base value.
pub fn partial_coupling_scan<T: Scalar>(
    base: &SystemSpec<T>,
    alpha_r_grid: &[T],
    dt_grid: &[T],
    scheme: Scheme,
    options: &SolverOptions<T>,
) -> Result<PartialCouplingReport<T>> {
    if alpha_r_grid.is_empty() {
        return Err(Error::TooFewPoints { need: 1, got: 0 });
    }
    let mut report = PartialCouplingReport {
        alpha_r: alpha_r_grid.to_vec(),
        has_ndtc: Vec::with_capacity(alpha_r_grid.len()),
        onset: None,
    };
    for &ar in alpha_r_grid {
        let point = apply_axis(base, SweepAxis::AlphaRight, ar)?;
        let sweep = SweepSpec {
            base: point,
            axis: SweepAxis::DeltaT,
            grid: dt_grid.to_vec(),
            scheme,
            normalization: Normalization::None,
        };
        let table = current_sweep(&sweep, options)?;
        let found = detect_ndtc_table(&table)?.has_ndtc;
        report.has_ndtc.push(found);
        if found && report.onset.is_none() {
            report.onset = Some(ar);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::BathSpec;
    use crate::model::QubitSpec;

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
            left_bath: LeftBath::Single(BathSpec {
                alpha,
                omega_c: 5.0,
                temperature: tl,
            }),
            right_bath: BathSpec {
                alpha,
                omega_c: 5.0,
                temperature: tr,
            },
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
                hot: BathSpec {
                    alpha,
                    omega_c: 5.0,
                    temperature: th,
                },
                cold: BathSpec {
                    alpha,
                    omega_c: 5.0,
                    temperature: tc,
                },
            },
            right_bath: BathSpec {
                alpha,
                omega_c: 5.0,
                temperature: tr,
            },
        }
    }

    #[test]
    fn axis_application_preserves_mean_temperature() {
        let base = two_terminal(5.0, 1.0, 2.0, 2.0);
        let s = apply_axis(&base, SweepAxis::DeltaT, 1.0).unwrap();
        let (tl, tr) = match s.left_bath {
            LeftBath::Single(b) => (b.temperature, s.right_bath.temperature),
            _ => unreachable!(),
        };
        assert_eq!(tl, 2.5);
        assert_eq!(tr, 1.5);
        let s2 = apply_axis(&base, SweepAxis::AlphaBoth, 0.7).unwrap();
        match s2.left_bath {
            LeftBath::Single(b) => assert_eq!(b.alpha, 0.7),
            _ => unreachable!(),
        }
        assert_eq!(s2.right_bath.alpha, 0.7);
        let s3 = apply_axis(&base, SweepAxis::Epsilon, 0.3).unwrap();
        assert_eq!(s3.left.epsilon, 0.3);
        assert_eq!(s3.right.epsilon, 0.3);
    }

    #[test]
    fn slope_analysis_flags_only_interior_maxima() {
        let xs: Vec<f64> = (0..12).map(|i| 0.2 * i as f64).collect();
        let rising: Vec<f64> = xs.iter().map(|x| x * (1.0 + 0.1 * x)).collect();
        let r = detect_ndtc(&xs, &rising).unwrap();
        assert!(!r.has_ndtc);
        assert!(r.turnover.is_none());
        // parabola peaking inside the grid is found to quadratic accuracy
        let humped: Vec<f64> = xs.iter().map(|x| x * (2.0 - x) / 2.0).collect();
        let r = detect_ndtc(&xs, &humped).unwrap();
        assert!(r.has_ndtc);
        let t = r.turnover.unwrap();
        assert!((t - 1.0).abs() < 1e-12, "turnover {t}");
        assert!(matches!(
            detect_ndtc(&xs[..3], &humped[..3]),
            Err(Error::TooFewPoints { need: 4, got: 3 })
        ));
    }

    #[test]
    fn turnover_location_survives_normalization() {
        let xs: Vec<f64> = (0..10).map(|i| 0.3 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * (2.4 - x)).collect();
        let peak = ys.iter().cloned().fold(f64::MIN, f64::max);
        let scaled: Vec<f64> = ys.iter().map(|y| y / peak).collect();
        let a = detect_ndtc(&xs, &ys).unwrap();
        let b = detect_ndtc(&xs, &scaled).unwrap();
        assert_eq!(a.has_ndtc, b.has_ndtc);
        let (ta, tb) = (a.turnover.unwrap(), b.turnover.unwrap());
        assert!((ta - tb).abs() < 1e-12);
    }

    #[test]
    fn zero_bias_point_carries_no_current() {
        let sweep = SweepSpec {
            base: two_terminal(5.0, 1.0, 2.0, 2.0),
            axis: SweepAxis::DeltaT,
            grid: vec![0.0, 0.5],
            scheme: Scheme::Niba,
            normalization: Normalization::None,
        };
        let table = current_sweep(&sweep, &SolverOptions::default()).unwrap();
        let i0 = table.points[0].raw.unwrap();
        assert!(i0.abs() < 1e-9, "equilibrium current {i0}");
        assert!(table.points[1].raw.unwrap() > 0.0);
    }

    #[test]
    fn strong_coupling_bias_sweep_turns_over() {
        let sweep = SweepSpec {
            base: two_terminal(5.0, 1.0, 2.0, 2.0),
            axis: SweepAxis::DeltaT,
            grid: (0..10).map(|i| 0.4 * i as f64).collect(),
            scheme: Scheme::Niba,
            normalization: Normalization::PerAlphaMax,
        };
        let table = current_sweep(&sweep, &SolverOptions::default()).unwrap();
        let report = detect_ndtc_table(&table).unwrap();
        assert!(report.has_ndtc);
        assert!(report.turnover.is_some());
        // normalized values peak at one
        let top = table
            .points
            .iter()
            .filter_map(|p| p.value)
            .fold(f64::MIN, f64::max);
        assert!((top - 1.0).abs() < 1e-14);
        // splitting energy is necessary: the symmetric device stays monotone
        let flat = SweepSpec {
            base: two_terminal(5.0, 0.0, 2.0, 2.0),
            axis: SweepAxis::DeltaT,
            grid: (0..10).map(|i| 0.4 * i as f64).collect(),
            scheme: Scheme::Niba,
            normalization: Normalization::None,
        };
        let table = current_sweep(&flat, &SolverOptions::default()).unwrap();
        assert!(!detect_ndtc_table(&table).unwrap().has_ndtc);
    }

    #[test]
    fn transition_channels_resolve_the_weak_coupling_current() {
        let base = two_terminal(0.01, 1.0, 1.5, 0.5);
        let opts = SolverOptions::default();
        let dec = transition_current_decomposition(&base, &opts).unwrap();
        let mut o = opts.clone();
        o.redfield_form = RedfieldForm::Population;
        let gen = TiltedGenerator::build(&base, Scheme::Redfield, Terminal::Right, &o).unwrap();
        let ss = gen.steady_state().unwrap();
        let total = gen.analytic_current(&ss).unwrap();
        assert!((dec.total - total).abs() < 1e-10 * total.abs().max(1.0));
        // the extreme and middle pairs barely conduct at small U
        for p in &dec.parts {
            let extreme = p.upper == 3 && p.lower == 0;
            let middle = p.upper == 2 && p.lower == 1;
            if extreme || middle {
                assert!(
                    p.current.abs() < 0.05 * total.abs(),
                    "pair ({}, {}) carries {}",
                    p.upper,
                    p.lower,
                    p.current
                );
                assert!(!dec.dominant.contains(&(p.upper, p.lower)));
            }
        }
        assert_eq!(dec.dominant.len(), 4);
    }

    #[test]
    fn three_terminal_currents_balance() {
        let spec = three_terminal(5.0, 1.0, 2.0, 0.2, 0.5);
        let opts = SolverOptions::default();
        let t = three_terminal_currents(&spec, Scheme::Niba, &opts).unwrap();
        let sum = t.i_lh + t.i_lc + t.i_r;
        assert!(sum.abs() < 1e-8, "imbalance {sum:e}");
        // the right current from counting statistics equals the kinetic
        // net-flux formula on the same steady state
        let gen = TiltedGenerator::build(&spec, Scheme::Niba, Terminal::Right, &opts).unwrap();
        let ss = gen.steady_state().unwrap();
        let analytic = gen.analytic_current(&ss).unwrap();
        let fcs = gen.cumulant(1).unwrap().current;
        assert!((fcs - analytic).abs() < 1e-10, "{fcs} vs {analytic}");
    }

    #[test]
    fn equilibrium_three_terminal_currents_vanish() {
        let spec = three_terminal(5.0, 1.0, 0.8, 0.8, 0.8);
        let t = three_terminal_currents(&spec, Scheme::Niba, &SolverOptions::default()).unwrap();
        assert!(t.i_lh.abs() < 1e-9);
        assert!(t.i_lc.abs() < 1e-9);
        assert!(t.i_r.abs() < 1e-9);
    }

    #[test]
    fn amplification_scan_reports_finite_factors() {
        let spec = three_terminal(5.0, 1.0, 2.0, 0.2, 0.0);
        let grid = [0.45, 0.5, 0.55];
        let opts = SolverOptions::default();
        let rep = amplification_scan(&spec, Scheme::Niba, &grid, 1e-3, &opts).unwrap();
        assert_eq!(rep.i_r.len(), 3);
        assert_eq!(rep.divergence_flags.len(), 3);
        for (i, flag) in rep.divergence_flags.iter().enumerate() {
            if *flag {
                assert!(rep.beta_lh_grid[i].is_none());
                continue;
            }
            let b_lh = rep.beta_lh_grid[i].unwrap();
            let b_lc = rep.beta_lc_grid[i].unwrap();
            assert!(b_lh >= 0.0 && b_lh.is_finite());
            // branch identity from energy conservation
            let sign = if rep.theta_grid[i] == 0 { 1.0 } else { -1.0 };
            let predicted = (sign * b_lh + 1.0).abs();
            assert!(
                (b_lc - predicted).abs() < 1e-5 * predicted.max(1.0),
                "beta_lc {b_lc} vs {predicted}"
            );
        }
        assert!(rep.beta_lh > 0.0);
    }
}
