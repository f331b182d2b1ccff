//! Cross-module invariant suite.
//!
//! Each check exercises an identity the physics guarantees independently of
//! any particular solver run: detailed balance of the blip rates, the
//! renormalization-factor identity, trace preservation of every generator,
//! energy conservation of the kinetic three-terminal currents, positivity of
//! the zero-frequency noise, and the vanishing of the cumulant generating
//! function at zero counting field. The command-line `validate` subcommand is
//! a thin printer around [`run_invariant_suite`].
//!
//! The suite is deliberately concrete (f64): it is a diagnostic harness, and
//! f64 is the supported precision of the rate quadratures.

use std::time::Instant;

use crate::bath::{BathKernel, BathSpec, QuadratureConfig};
use crate::error::Result;
use crate::model::{LeftBath, QubitSpec, SystemSpec, Terminal, Topology};
use crate::rates::{RateConfig, RateEngine};
use crate::scalar::Cplx;
use crate::solver::{RedfieldForm, Scheme, SolverOptions, TiltedGenerator};
use crate::transport::three_terminal_currents;

/// How many parameter combinations each check walks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridSize {
    /// A few seconds: one or two cases per check.
    Small,
    /// The whole advertised grid.
    Full,
}

/// Outcome of one invariant check.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    /// Largest residual found over the grid.
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Number of parameter combinations exercised.
    pub cases: usize,
    pub seconds: f64,
}

/// All checks plus the overall verdict.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Relative defect of the detailed-balance ratio `up/down = e^{gap/T}`.
/// Exposed so harnesses can feed deliberately corrupted rates through the
/// same arithmetic the suite uses.
pub fn kms_pair_residual(rate_up: f64, rate_down: f64, gap: f64, temperature: f64) -> f64 {
    let want = (gap / temperature).exp();
    ((rate_up / rate_down) - want).abs() / want
}

fn bath(alpha: f64, temperature: f64) -> BathSpec<f64> {
    BathSpec {
        alpha,
        omega_c: 5.0,
        temperature,
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

fn three_terminal_spec(alpha: f64, tr: f64) -> SystemSpec<f64> {
    SystemSpec {
        u: 0.1,
        left: QubitSpec {
            epsilon: 1.0,
            delta: 1.0,
        },
        right: QubitSpec {
            epsilon: 1.0,
            delta: 1.0,
        },
        topology: Topology::ThreeTerminal,
        left_bath: LeftBath::Split {
            hot: bath(alpha, 2.0),
            cold: bath(alpha, 0.2),
        },
        right_bath: bath(alpha, tr),
    }
}

/// Trace functional applied to every column of the generator at zero
/// counting field: exactly zero for a probability- or trace-preserving
/// machine.
fn trace_defect(gen: &TiltedGenerator<f64>) -> Result<f64> {
    let l = gen.matrix(0.0)?;
    let d = gen.dim();
    let mut worst = 0.0f64;
    for c in 0..d {
        let mut s = Cplx::new(0.0, 0.0);
        if d == 16 {
            for j in 0..4 {
                s += l[(j * 5, c)];
            }
        } else {
            for r in 0..d {
                s += l[(r, c)];
            }
        }
        worst = worst.max(s.norm());
    }
    Ok(worst)
}

fn timed<F>(name: &'static str, tolerance: f64, body: F) -> Result<CheckResult>
where
    F: FnOnce() -> Result<(f64, usize)>,
{
    let start = Instant::now();
    let (max_residual, cases) = body()?;
    Ok(CheckResult {
        name,
        max_residual,
        tolerance,
        pass: max_residual < tolerance,
        cases,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn check_kms(grid: GridSize) -> Result<CheckResult> {
    timed("kms detailed balance", 1e-6, || {
        let (alphas, temps, gaps): (&[f64], &[f64], &[f64]) = match grid {
            GridSize::Small => (&[5.0], &[0.5, 2.0], &[0.8]),
            GridSize::Full => (&[1.0, 5.0], &[0.5, 2.0], &[0.4, 0.8, 1.2]),
        };
        let mut worst = 0.0f64;
        let mut cases = 0;
        for &a in alphas {
            for &t in temps {
                let engine =
                    RateEngine::new(BathKernel::new(bath(a, t))?, 1.0, RateConfig::default());
                for &e in gaps {
                    let up = engine.niba_rate(e)?;
                    let down = engine.niba_rate(-e)?;
                    worst = worst.max(kms_pair_residual(up, down, e, t));
                    cases += 1;
                }
            }
        }
        Ok((worst, cases))
    })
}

fn check_renormalization(grid: GridSize) -> Result<CheckResult> {
    timed("renormalization identity", 1e-10, || {
        let specs: &[BathSpec<f64>] = match grid {
            GridSize::Small => &[BathSpec {
                alpha: 5.0,
                omega_c: 5.0,
                temperature: 0.5,
            }],
            GridSize::Full => &[
                BathSpec {
                    alpha: 1.0,
                    omega_c: 5.0,
                    temperature: 0.5,
                },
                BathSpec {
                    alpha: 5.0,
                    omega_c: 5.0,
                    temperature: 0.5,
                },
                BathSpec {
                    alpha: 5.0,
                    omega_c: 5.0,
                    temperature: 2.0,
                },
                BathSpec {
                    alpha: 0.05,
                    omega_c: 5.0,
                    temperature: 1.5,
                },
            ],
        };
        let quad = QuadratureConfig::default();
        let mut worst = 0.0f64;
        for s in specs {
            // closed-form eta against the quadrature evaluation of
            // exp(-Q(0)/2): same identity, independent arithmetic
            let closed = BathKernel::new(*s)?.eta;
            let integrated = s.renorm_factor(&quad)?;
            worst = worst.max((closed / integrated - 1.0).abs());
        }
        Ok((worst, specs.len()))
    })
}

fn check_trace_preservation(grid: GridSize) -> Result<CheckResult> {
    timed("trace preservation", 1e-10, || {
        let opts = SolverOptions::default();
        let mut pop = opts.clone();
        pop.redfield_form = RedfieldForm::Population;
        let mut worst = 0.0f64;
        let mut cases = 0;
        let mut push = |gen: &TiltedGenerator<f64>| -> Result<()> {
            worst = worst.max(trace_defect(gen)?);
            cases += 1;
            Ok(())
        };
        let weak = two_terminal(0.01, 1.0, 1.5, 0.5);
        let strong = two_terminal(5.0, 1.0, 1.5, 0.5);
        push(&TiltedGenerator::build(
            &weak,
            Scheme::Redfield,
            Terminal::Right,
            &opts,
        )?)?;
        push(&TiltedGenerator::build(
            &weak,
            Scheme::Redfield,
            Terminal::Right,
            &pop,
        )?)?;
        push(&TiltedGenerator::build(
            &strong,
            Scheme::Niba,
            Terminal::Right,
            &opts,
        )?)?;
        if grid == GridSize::Full {
            push(&TiltedGenerator::build(
                &strong,
                Scheme::NePtre,
                Terminal::Right,
                &opts,
            )?)?;
            push(&TiltedGenerator::build(
                &two_terminal(0.5, 0.0, 1.5, 0.5),
                Scheme::NePtre,
                Terminal::Right,
                &opts,
            )?)?;
            push(&TiltedGenerator::build(
                &three_terminal_spec(5.0, 0.5),
                Scheme::Niba,
                Terminal::Right,
                &opts,
            )?)?;
        }
        Ok((worst, cases))
    })
}

fn check_three_terminal_balance(grid: GridSize) -> Result<CheckResult> {
    timed("three-terminal energy balance", 1e-8, || {
        let trs: &[f64] = match grid {
            GridSize::Small => &[0.5],
            GridSize::Full => &[0.4, 0.8, 1.2],
        };
        let opts = SolverOptions::default();
        let mut worst = 0.0f64;
        for &tr in trs {
            let t = three_terminal_currents(&three_terminal_spec(5.0, tr), Scheme::Niba, &opts)?;
            worst = worst.max((t.i_lh + t.i_lc + t.i_r).abs());
        }
        Ok((worst, trs.len()))
    })
}

fn check_noise_positivity(grid: GridSize) -> Result<CheckResult> {
    timed("noise positivity", 1e-8, || {
        let opts = SolverOptions::default();
        let mut runs: Vec<TiltedGenerator<f64>> = vec![
            TiltedGenerator::build(
                &two_terminal(5.0, 1.0, 1.5, 0.5),
                Scheme::Niba,
                Terminal::Right,
                &opts,
            )?,
            TiltedGenerator::build(
                &two_terminal(5.0, 0.0, 1.5, 0.5),
                Scheme::Niba,
                Terminal::Right,
                &opts,
            )?,
        ];
        if grid == GridSize::Full {
            runs.push(TiltedGenerator::build(
                &two_terminal(0.01, 1.0, 1.5, 0.5),
                Scheme::Redfield,
                Terminal::Right,
                &opts,
            )?);
            runs.push(TiltedGenerator::build(
                &two_terminal(0.5, 1.0, 1.5, 0.5),
                Scheme::NePtre,
                Terminal::Right,
                &opts,
            )?);
        }
        let mut worst = 0.0f64;
        let cases = runs.len();
        for gen in &runs {
            let noise = gen
                .cumulant(2)?
                .noise
                .expect("order-2 cumulant carries noise");
            worst = worst.max((-noise).max(0.0));
        }
        Ok((worst, cases))
    })
}

fn check_cgf_zero(grid: GridSize) -> Result<CheckResult> {
    timed("generating function at zero field", 1e-10, || {
        let opts = SolverOptions::default();
        let mut gens: Vec<TiltedGenerator<f64>> = vec![TiltedGenerator::build(
            &two_terminal(5.0, 1.0, 1.5, 0.5),
            Scheme::Niba,
            Terminal::Right,
            &opts,
        )?];
        if grid == GridSize::Full {
            gens.push(TiltedGenerator::build(
                &two_terminal(0.01, 1.0, 1.5, 0.5),
                Scheme::Redfield,
                Terminal::Right,
                &opts,
            )?);
            gens.push(TiltedGenerator::build(
                &two_terminal(0.5, 1.0, 1.5, 0.5),
                Scheme::NePtre,
                Terminal::Right,
                &opts,
            )?);
        }
        let mut worst = 0.0f64;
        let cases = gens.len();
        for gen in &gens {
            worst = worst.max(gen.cgf(0.0)?.norm());
        }
        Ok((worst, cases))
    })
}

/// Run every invariant check on the requested grid.
pub fn run_invariant_suite(grid: GridSize) -> Result<ValidationReport> {
    Ok(ValidationReport {
        checks: vec![
            check_kms(grid)?,
            check_renormalization(grid)?,
            check_trace_preservation(grid)?,
            check_three_terminal_balance(grid)?,
            check_noise_positivity(grid)?,
            check_cgf_zero(grid)?,
        ],
    })
}
