//! Two-qubit system construction: Hamiltonians, eigensystems, and the
//! Bohr-frequency decomposition of coupling operators.
//!
//! Basis ordering is fixed as (|uu>, |ud>, |du>, |dd>) = states 1..4, with
//! sigma_z|u> = +|u>. All 4x4 operators in this module are expressed in that
//! product basis unless stated otherwise.

use crate::bath::{BathKernel, BathSpec};
use crate::error::{Error, Result};
use crate::linalg::{eigh, rephase_largest_positive, vdot, vnorm, CMat};
use crate::scalar::{Cplx, Scalar};

/// Which qubit a local operator acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

/// A reservoir terminal. `LeftHot`/`LeftCold` name the two components of the
/// composite left reservoir in three-terminal mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Terminal {
    Left,
    LeftHot,
    LeftCold,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    TwoTerminal,
    ThreeTerminal,
}

/// One qubit: splitting energy and bare tunneling strength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitSpec<T> {
    pub epsilon: T,
    pub delta: T,
}

/// The left qubit's reservoir: a single bath, or a hot/cold pair coupled
/// simultaneously (three-terminal mode).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LeftBath<T> {
    Single(BathSpec<T>),
    Split {
        hot: BathSpec<T>,
        cold: BathSpec<T>,
    },
}

/// Full device description.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec<T> {
    /// Inter-qubit coupling strength (the sigma_z sigma_z term).
    pub u: T,
    pub left: QubitSpec<T>,
    pub right: QubitSpec<T>,
    pub topology: Topology,
    pub left_bath: LeftBath<T>,
    pub right_bath: BathSpec<T>,
}

impl<T: Scalar> SystemSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if self.left.delta < T::zero() || self.right.delta < T::zero() {
            return Err(Error::InvalidSpec("tunneling delta must be >= 0".into()));
        }
        match (&self.topology, &self.left_bath) {
            (Topology::TwoTerminal, LeftBath::Single(b)) => b.validate()?,
            (Topology::ThreeTerminal, LeftBath::Split { hot, cold }) => {
                hot.validate()?;
                cold.validate()?;
            }
            _ => {
                return Err(Error::InvalidSpec(
                    "topology and left-bath shape disagree: TwoTerminal takes a single \
                     left bath, ThreeTerminal takes a hot/cold pair"
                        .into(),
                ))
            }
        }
        self.right_bath.validate()
    }

    /// Kernel for the left reservoir (composite in three-terminal mode).
    pub fn left_kernel(&self) -> Result<BathKernel<T>> {
        match &self.left_bath {
            LeftBath::Single(b) => BathKernel::new(*b),
            LeftBath::Split { hot, cold } => BathKernel::composite(*hot, *cold),
        }
    }

    pub fn right_kernel(&self) -> Result<BathKernel<T>> {
        BathKernel::new(self.right_bath)
    }

    pub fn qubit(&self, side: Side) -> &QubitSpec<T> {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }
}

/// Diagonal of U sigma_z sigma_z + sum_v (eps_v/2) sigma_z in the product
/// basis: the local state energies E_1..E_4.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalBasisEnergies<T> {
    pub e: [T; 4],
}

pub fn local_basis_energies<T: Scalar>(u: T, eps_l: T, eps_r: T) -> LocalBasisEnergies<T> {
    let half = T::of(0.5);
    let s = (eps_l + eps_r) * half;
    let d = (eps_l - eps_r) * half;
    LocalBasisEnergies {
        e: [u + s, -u + d, -u - d, u - s],
    }
}

impl<T: Scalar> LocalBasisEnergies<T> {
    /// Gap E_i - E_j, one-based state labels.
    pub fn gap(&self, i: usize, j: usize) -> T {
        self.e[i - 1] - self.e[j - 1]
    }
}

/// sigma_z acting on one qubit, embedded in the two-qubit product basis.
pub fn sigma_z<T: Scalar>(side: Side) -> CMat<T> {
    let mut m = CMat::zeros(4, 4);
    let one = Cplx::new(T::one(), T::zero());
    // Left spin is up for states 0, 1; right spin is up for states 0, 2.
    let signs: [f64; 4] = match side {
        Side::Left => [1.0, 1.0, -1.0, -1.0],
        Side::Right => [1.0, -1.0, 1.0, -1.0],
    };
    for (i, s) in signs.iter().enumerate() {
        m[(i, i)] = one * Cplx::new(T::of(*s), T::zero());
    }
    m
}

/// sigma_x acting on one qubit, embedded in the two-qubit product basis.
pub fn sigma_x<T: Scalar>(side: Side) -> CMat<T> {
    let mut m = CMat::zeros(4, 4);
    let one = Cplx::new(T::one(), T::zero());
    let pairs: [(usize, usize); 2] = match side {
        Side::Left => [(0, 2), (1, 3)],
        Side::Right => [(0, 1), (2, 3)],
    };
    for (i, j) in pairs {
        m[(i, j)] = one;
        m[(j, i)] = one;
    }
    m
}

/// sigma_y acting on one qubit, embedded in the two-qubit product basis.
pub fn sigma_y<T: Scalar>(side: Side) -> CMat<T> {
    let mut m = CMat::zeros(4, 4);
    let mi = Cplx::new(T::zero(), -T::one());
    let pairs: [(usize, usize); 2] = match side {
        Side::Left => [(0, 2), (1, 3)],
        Side::Right => [(0, 1), (2, 3)],
    };
    // <up|sigma_y|down> = -i with the up state first in each pair.
    for (i, j) in pairs {
        m[(i, j)] = mi;
        m[(j, i)] = -mi;
    }
    m
}

/// Polaron-frame system Hamiltonian
/// U sigma_z sigma_z + sum_v [(eps_v/2) sigma_z + (eta_v delta_v/2) sigma_x].
/// With eta_l = eta_r = 1 this is also the lab-frame system Hamiltonian.
pub fn build_polaron_hamiltonian<T: Scalar>(
    spec: &SystemSpec<T>,
    eta_l: T,
    eta_r: T,
) -> CMat<T> {
    let e = local_basis_energies(spec.u, spec.left.epsilon, spec.right.epsilon);
    let half = T::of(0.5);
    let mut h = CMat::zeros(4, 4);
    for i in 0..4 {
        h[(i, i)] = Cplx::new(e.e[i], T::zero());
    }
    let tl = eta_l * spec.left.delta * half;
    let tr = eta_r * spec.right.delta * half;
    let xl = sigma_x::<T>(Side::Left).scale(Cplx::new(tl, T::zero()));
    let xr = sigma_x::<T>(Side::Right).scale(Cplx::new(tr, T::zero()));
    h.add_assign(&xl);
    h.add_assign(&xr);
    h
}

/// Eigensystem of a Hermitian 4x4 with the crate-wide conventions: ascending
/// eigenvalues, orthonormal columns, largest-magnitude component positive.
pub fn eigensystem<T: Scalar>(h: &CMat<T>) -> Result<(Vec<T>, CMat<T>)> {
    eigh(h, T::of(1e-15))
}

/// Bohr decomposition of an operator: groups of matrix elements sharing a
/// transition frequency omega = E_m - E_n within `freq_tol`. Entry (n, m) of
/// the operator in the eigenbasis lands in the group for E_m - E_n. The
/// groups satisfy sum_omega P(omega) = op and P(omega)^dagger = P(-omega).
pub fn bohr_decompose<T: Scalar>(
    op_local: &CMat<T>,
    energies: &[T],
    vectors: &CMat<T>,
    freq_tol: T,
) -> Vec<(T, CMat<T>)> {
    let n = energies.len();
    let s = vectors.dagger().matmul(&op_local.matmul(vectors));
    // Collect candidate frequencies and cluster them.
    let mut freqs: Vec<T> = Vec::new();
    for m in 0..n {
        for nn in 0..n {
            freqs.push(energies[m] - energies[nn]);
        }
    }
    freqs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut reps: Vec<T> = Vec::new();
    for f in freqs {
        match reps.last() {
            Some(&r) if (f - r).abs() <= freq_tol => {}
            _ => reps.push(f),
        }
    }
    let mut groups: Vec<(T, CMat<T>)> = reps
        .iter()
        .map(|&w| (w, CMat::zeros(n, n)))
        .collect();
    for nn in 0..n {
        for m in 0..n {
            let w = energies[m] - energies[nn];
            let idx = groups
                .iter()
                .enumerate()
                .min_by(|(_, (a, _)), (_, (b, _))| {
                    (w - *a).abs().partial_cmp(&(w - *b).abs()).unwrap()
                })
                .map(|(i, _)| i)
                .unwrap();
            let cur = groups[idx].1[(nn, m)];
            groups[idx].1[(nn, m)] = cur + s[(nn, m)];
        }
    }
    let scale = s.frobenius().max(T::of(1e-300));
    groups.retain(|(_, p)| p.frobenius() > T::of(1e-14) * scale);
    groups
}

/// Working frame for the polaron-transformed solver.
///
/// Starts from the eigensystem of the transformed Hamiltonian. Eigenvalues
/// closer than `cluster_tol` are treated as a quasi-degenerate cluster; when
/// such a cluster lies almost entirely in a product-state subspace (every
/// dominant product weight above 1/2), its columns are replaced by the exact
/// product vectors and the remaining columns are re-orthonormalized. In the
/// strong-coupling regime, where the renormalized tunneling is tiny, this
/// removes spurious inter-cluster coherences that the perturbative generator
/// cannot damp correctly; energies are Rayleigh quotients in the final frame.
/// `cluster_tol = 0` disables the replacement and keeps raw eigenvectors.
#[derive(Debug, Clone)]
pub struct PolaronFrame<T> {
    pub eta_l: T,
    pub eta_r: T,
    pub h_prime: CMat<T>,
    /// Frame energies, ascending.
    pub energies: Vec<T>,
    /// Frame vectors as columns over the product basis.
    pub vectors: CMat<T>,
    /// Product-basis indices that replaced eigenvector columns.
    pub purged: Vec<usize>,
}

impl<T: Scalar> PolaronFrame<T> {
    pub fn build(
        spec: &SystemSpec<T>,
        eta_l: T,
        eta_r: T,
        cluster_tol: T,
    ) -> Result<Self> {
        let h = build_polaron_hamiltonian(spec, eta_l, eta_r);
        let (evals, mut v) = eigensystem(&h)?;
        let n = evals.len();
        let mut purged: Vec<usize> = Vec::new();
        if cluster_tol > T::zero() {
            // Partition ascending eigenvalues into adjacent clusters.
            let mut clusters: Vec<Vec<usize>> = vec![vec![0]];
            for i in 1..n {
                if evals[i] - evals[i - 1] < cluster_tol {
                    clusters.last_mut().unwrap().push(i);
                } else {
                    clusters.push(vec![i]);
                }
            }
            let mut purged_cols: Vec<usize> = Vec::new();
            for cluster in clusters.iter().filter(|c| c.len() > 1) {
                // Weight of each product state inside the cluster subspace.
                let mut weights: Vec<(usize, T)> = (0..n)
                    .map(|p| {
                        let w = cluster
                            .iter()
                            .map(|&i| v[(p, i)].norm_sqr())
                            .fold(T::zero(), |s, x| s + x);
                        (p, w)
                    })
                    .collect();
                weights.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
                let mut chosen: Vec<usize> =
                    weights.iter().take(cluster.len()).map(|&(p, _)| p).collect();
                if weights
                    .iter()
                    .take(cluster.len())
                    .all(|&(_, w)| w > T::of(0.5))
                {
                    chosen.sort_unstable();
                    for (&col, &p) in cluster.iter().zip(chosen.iter()) {
                        let mut e = vec![Cplx::new(T::zero(), T::zero()); n];
                        e[p] = Cplx::new(T::one(), T::zero());
                        v.set_col(col, &e);
                        purged_cols.push(col);
                        purged.push(p);
                    }
                }
            }
            if !purged_cols.is_empty() {
                // Re-orthonormalize the untouched columns against the purged
                // set and each other, in ascending column order.
                let mut done: Vec<Vec<Cplx<T>>> =
                    purged_cols.iter().map(|&c| v.col(c)).collect();
                for j in 0..n {
                    if purged_cols.contains(&j) {
                        continue;
                    }
                    let mut col = v.col(j);
                    for q in &done {
                        let proj = vdot(q, &col);
                        for i in 0..n {
                            let sub = q[i] * proj;
                            col[i] = col[i] - sub;
                        }
                    }
                    let nrm = vnorm(&col);
                    if nrm < T::of(0.5) {
                        return Err(Error::EigenFailure { iters: 0 });
                    }
                    let inv = Cplx::new(nrm.recip(), T::zero());
                    for z in col.iter_mut() {
                        *z = *z * inv;
                    }
                    rephase_largest_positive(&mut col);
                    v.set_col(j, &col);
                    done.push(v.col(j));
                }
            }
        }
        // Rayleigh energies in the final frame, then sort columns ascending.
        let hv = h.matmul(&v);
        let mut pairs: Vec<(T, usize)> = (0..n)
            .map(|j| (vdot(&v.col(j), &hv.col(j)).re, j))
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let energies: Vec<T> = pairs.iter().map(|&(e, _)| e).collect();
        let mut vectors = CMat::zeros(n, n);
        for (dst, &(_, src)) in pairs.iter().enumerate() {
            vectors.set_col(dst, &v.col(src));
        }
        Ok(PolaronFrame {
            eta_l,
            eta_r,
            h_prime: h,
            energies,
            vectors,
            purged,
        })
    }

    /// Bohr groups of a local-basis operator in this frame.
    pub fn bohr_groups(&self, op_local: &CMat<T>, freq_tol: T) -> Vec<(T, CMat<T>)> {
        bohr_decompose(op_local, &self.energies, &self.vectors, freq_tol)
    }

    /// The system Hamiltonian expressed in the frame basis (diagonal of the
    /// frame energies plus residual couplings the purge left in place).
    pub fn h_in_frame(&self) -> CMat<T> {
        self.vectors.dagger().matmul(&self.h_prime.matmul(&self.vectors))
    }
}
