//! Steady-state heat transport and full counting statistics for two-qubit
//! spin-boson devices.
//!
//! The crate models a pair of coupled qubits, each attached to its own
//! bosonic heat bath (with an optional composite two-component bath on the
//! left qubit), and computes steady-state heat currents, current cumulants,
//! negative differential thermal conductance and heat amplification under
//! three treatments of the system-bath coupling:
//!
//! * a polaron-transformed Redfield equation valid from weak to strong
//!   coupling (`Scheme::NePtre`),
//! * a standard weak-coupling Redfield equation (`Scheme::Redfield`),
//! * a noninteracting-blip kinetic description of the strong-coupling limit
//!   (`Scheme::Niba`).
//!
//! Units: hbar = k_B = 1 throughout; energies, temperatures, rates and
//! currents are all expressed in units of the qubit tunneling splitting
//! unless stated otherwise.
//!
//! The numeric core is generic over the floating-point scalar via
//! [`scalar::Scalar`]; concrete f64 aliases are exported at the crate root.

pub mod bath;
pub mod error;
pub mod linalg;
pub mod model;
pub mod quad;
pub mod rates;
pub mod scalar;
pub mod solver;
pub mod special;
pub mod transport;
pub mod validate;

pub use bath::Axis;
pub use error::{Error, Result};
pub use model::{Side, Terminal, Topology};
pub use scalar::{Cplx, Scalar};
pub use solver::{RedfieldForm, Scheme};
pub use transport::{Normalization, SweepAxis};
pub use validate::{run_invariant_suite, CheckResult, GridSize, ValidationReport};

/// f64 bath description.
pub type BathSpec = bath::BathSpec<f64>;
/// f64 bath kernel with precomputed renormalization data.
pub type BathKernel = bath::BathKernel<f64>;
/// f64 system description.
pub type SystemSpec = model::SystemSpec<f64>;
/// f64 qubit parameters.
pub type QubitSpec = model::QubitSpec<f64>;
/// f64 polaron-frame eigensystem.
pub type PolaronFrame = model::PolaronFrame<f64>;
/// f64 rate engine.
pub type RateEngine = rates::RateEngine<f64>;
/// f64 solver options.
pub type SolverOptions = solver::SolverOptions<f64>;
/// f64 tilted generator.
pub type TiltedGenerator = solver::TiltedGenerator<f64>;
/// f64 steady state.
pub type SteadyState = solver::SteadyState<f64>;
/// f64 cumulant result.
pub type CumulantResult = solver::CumulantResult<f64>;
/// f64 kinetic rate table.
pub type NibaRateTable = solver::NibaRateTable<f64>;
/// f64 loop-current decomposition.
pub type LoopCurrents = solver::LoopCurrents<f64>;
/// f64 transition-resolved current.
pub type TransitionCurrent = solver::TransitionCurrent<f64>;
/// f64 sweep description.
pub type SweepSpec = transport::SweepSpec<f64>;
/// f64 sweep results.
pub type SweepTable = transport::SweepTable<f64>;
/// f64 sweep row.
pub type SweepPoint = transport::SweepPoint<f64>;
/// f64 turnover diagnostics.
pub type NdtcReport = transport::NdtcReport<f64>;
/// f64 eigenstate-pair current decomposition.
pub type TransitionDecomposition = transport::TransitionDecomposition<f64>;
/// f64 per-terminal currents.
pub type TerminalCurrents = transport::TerminalCurrents<f64>;
/// f64 amplification scan results.
pub type AmplificationReport = transport::AmplificationReport<f64>;
/// f64 coupling-threshold scan results.
pub type PartialCouplingReport = transport::PartialCouplingReport<f64>;
