//! Iterative schemes and the driver that runs them with telemetry.

mod admm;
mod record;
mod splitting;

use std::str::FromStr;

use ndarray::Axis;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cost::telemetry_energy;
use crate::error::{Error, Result};
use crate::grid::{
    assemble_boundary_target, extract_boundary, BoundaryValues, CenteredField, GridDims, SpatialGrid,
    StaggeredField,
};
use crate::operators::{divergence, interpolate, interpolation_norm};
use crate::prox::{centered_divergence, CostModel, PoissonBackend, ProxScratch};

pub use admm::{admm_dual_step, AdmmState};
pub use record::{ConvergenceRecord, RecordRow, CSV_HEADER};
pub use splitting::{DrState, PdState, SolverState};

/// Iterates whose norm exceeds this are treated as diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Splitting scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    /// DR with `G1 = J(V) + i_C(U)`, `G2 = i_{V = I(U)}`.
    ADr,
    /// [`Algorithm::ADr`] with the two functions swapped.
    ADrPrime,
    /// DR on two copies of `(U, V)` tied by a diagonal constraint.
    SDr,
    /// [`Algorithm::SDr`] with the two functions swapped.
    SDrPrime,
    PrimalDual,
    /// DR on the centered grid, constraint first then energy.
    CenteredDr,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::ADr,
        Algorithm::ADrPrime,
        Algorithm::SDr,
        Algorithm::SDrPrime,
        Algorithm::PrimalDual,
        Algorithm::CenteredDr,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::ADr => "a-dr",
            Algorithm::ADrPrime => "a-dr2",
            Algorithm::SDr => "s-dr",
            Algorithm::SDrPrime => "s-dr2",
            Algorithm::PrimalDual => "pd",
            Algorithm::CenteredDr => "centered",
        }
    }

    pub fn is_douglas_rachford(&self) -> bool {
        !matches!(self, Algorithm::PrimalDual)
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dr" => Ok(Algorithm::ADr),
            _ => Algorithm::ALL
                .into_iter()
                .find(|a| a.name() == s)
                .ok_or_else(|| Error::Configuration(format!("unknown solver {s:?}"))),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Algorithm choice and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    /// DR step.
    pub gamma: f64,
    /// DR relaxation, in `(0, 2)`.
    pub alpha: f64,
    /// PD dual step.
    pub sigma: f64,
    /// PD primal step; `None` picks `0.99 / (sigma |I|^2)`.
    pub tau: Option<f64>,
    /// PD extrapolation, in `[0, 1]`.
    pub theta: f64,
    pub max_iter: usize,
    /// Stop once the relative change of the density drops below this.
    pub tol: f64,
    /// Telemetry cadence; 0 disables the record.
    pub log_every: usize,
    /// Seed of a small perturbation of the initial interior momentum.
    pub seed: Option<u64>,
    pub backend: PoissonBackend,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            algorithm: Algorithm::ADr,
            gamma: 1.0 / 75.0,
            alpha: 1.998,
            sigma: 85.0,
            tau: None,
            theta: 1.0,
            max_iter: 1000,
            tol: 1e-8,
            log_every: 1,
            seed: None,
            backend: PoissonBackend::Spectral,
        }
    }
}

impl SolverConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        SolverConfig {
            algorithm,
            ..SolverConfig::default()
        }
    }

    /// Checks the parameters and resolves the PD primal step.
    pub fn validate(&self, dims: GridDims) -> Result<Steps> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Configuration(format!("{name} must be positive and finite, got {v}")))
            }
        };
        if !(self.tol >= 0.0) {
            return Err(Error::Configuration(format!("tolerance must be nonnegative, got {}", self.tol)));
        }
        if self.algorithm.is_douglas_rachford() {
            positive("gamma", self.gamma)?;
            if !(self.alpha > 0.0 && self.alpha < 2.0) {
                return Err(Error::Configuration(format!(
                    "alpha must lie in (0, 2), got {}",
                    self.alpha
                )));
            }
            return Ok(Steps {
                gamma: self.gamma,
                alpha: self.alpha,
                ..Steps::default()
            });
        }
        positive("sigma", self.sigma)?;
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::Configuration(format!("theta must lie in [0, 1], got {}", self.theta)));
        }
        let norm = interpolation_norm(dims)?;
        let tau = match self.tau {
            Some(t) => {
                positive("tau", t)?;
                t
            }
            None => 0.99 / (self.sigma * norm * norm),
        };
        let product = self.sigma * tau * norm * norm;
        if product >= 1.0 {
            return Err(Error::Configuration(format!(
                "primal-dual steps need sigma * tau * |I|^2 < 1, got {product}"
            )));
        }
        Ok(Steps {
            sigma: self.sigma,
            tau,
            theta: self.theta,
            interp_norm: norm,
            ..Steps::default()
        })
    }
}

/// Validated step sizes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Steps {
    pub gamma: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub tau: f64,
    pub theta: f64,
    pub interp_norm: f64,
}

/// Grid, endpoint densities and cost of one transport problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    dims: GridDims,
    b0: BoundaryValues,
    cost: CostModel,
}

impl Problem {
    /// `f0` and `f1` must have equal mass (see
    /// [`crate::grid::validate_and_normalize`]).
    pub fn new(dims: GridDims, f0: &SpatialGrid, f1: &SpatialGrid, cost: CostModel) -> Result<Self> {
        let b0 = assemble_boundary_target(dims, f0, f1)?;
        cost.check_dims(dims)?;
        let flux = b0.net_flux();
        if !(flux.abs() <= 1e-12 * b0.flux_scale()) {
            return Err(Error::Feasibility(format!(
                "f0 and f1 have different masses (net flux {flux:e})"
            )));
        }
        Ok(Problem { dims, b0, cost })
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn boundary(&self) -> &BoundaryValues {
        &self.b0
    }

    pub fn cost(&self) -> &CostModel {
        &self.cost
    }

    /// Zero momentum, density linear in time between the endpoints.
    pub fn initial_staggered(&self, seed: Option<u64>) -> StaggeredField {
        let mut u = StaggeredField::linear_interpolation(self.dims, self.b0.f0(), self.b0.f1())
            .expect("boundary matches dims");
        if let Some(seed) = seed {
            let scale = self
                .b0
                .f0()
                .iter()
                .chain(self.b0.f1().iter())
                .fold(0.0f64, |m, &v| m.max(v));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for a in 0..self.dims.dim() {
                let mut m = u.m_mut(a);
                let last = m.len_of(Axis(a)) - 1;
                for (idx, v) in m.indexed_iter_mut() {
                    let i = [idx.0, idx.1][a];
                    let noise = 1e-4 * scale * (rng.random::<f64>() - 0.5);
                    if i > 0 && i < last {
                        *v += noise;
                    }
                }
            }
        }
        u
    }

    /// Zero momentum, density linear in time on the centered grid.
    pub fn initial_centered(&self) -> CenteredField {
        let mut v = CenteredField::zeros(self.dims);
        let p = self.dims.p() as f64;
        for (j, mut slab) in v.f_mut().axis_iter_mut(Axis(2)).enumerate() {
            let s = j as f64 / p;
            ndarray::Zip::from(&mut slab)
                .and(self.b0.f0())
                .and(self.b0.f1())
                .for_each(|o, &a, &b| *o = (1.0 - s) * a + s * b);
        }
        v
    }
}

/// Result of [`solve`].
#[derive(Debug, Clone)]
pub struct SolveOutput {
    /// Staggered solution (absent for the centered-grid scheme).
    pub staggered: Option<StaggeredField>,
    /// Centered solution: `I(U)` for staggered schemes.
    pub centered: CenteredField,
    /// Latest output of the energy prox (exactly zero where the weight is
    /// infinite).
    pub prox_density: CenteredField,
    pub record: ConvergenceRecord,
    pub iterations: usize,
    /// Whether the tolerance was met before the budget ran out.
    pub converged: bool,
}

/// A solver instance: problem, validated steps, scratch space and state.
#[derive(Debug)]
pub struct Solver {
    problem: Problem,
    config: SolverConfig,
    steps: Steps,
    scratch: ProxScratch,
    state: SolverState,
}

impl Solver {
    pub fn new(problem: Problem, config: SolverConfig) -> Result<Self> {
        let steps = config.validate(problem.dims())?;
        let scratch = ProxScratch::new(problem.dims(), config.backend);
        let state = SolverState::initial(&problem, &config);
        Ok(Solver {
            problem,
            config,
            steps,
            scratch,
            state,
        })
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn steps(&self) -> Steps {
        self.steps
    }

    pub fn scratch(&self) -> &ProxScratch {
        &self.scratch
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    /// Replaces the state; its variant must match the algorithm.
    pub fn set_state(&mut self, state: SolverState) -> Result<()> {
        if state.algorithm_family() != self.state.algorithm_family() {
            return Err(Error::Configuration("state does not match the configured algorithm".into()));
        }
        self.state = state;
        Ok(())
    }

    pub fn iteration(&self) -> usize {
        self.state.iteration()
    }

    /// One iteration of the configured scheme.
    pub fn step(&mut self) -> Result<()> {
        splitting::step(
            &mut self.state,
            self.config.algorithm,
            &self.steps,
            &self.problem,
            &self.scratch,
        )
    }

    /// Reported staggered iterate.
    pub fn staggered(&self) -> Option<StaggeredField> {
        self.state.staggered()
    }

    /// Reported centered iterate.
    pub fn centered(&self) -> CenteredField {
        self.state.centered()
    }

    /// Reported iterate as `(momentum components, density)`.
    fn reported(&self) -> (Vec<ndarray::Array3<f64>>, ndarray::Array3<f64>) {
        match self.state.staggered() {
            Some(u) => u.into_parts(),
            None => self.state.centered().into_parts(),
        }
    }

    fn telemetry(&self, delta_f: f64) -> Result<RecordRow> {
        let centered = self.centered();
        let (objective, infeasible) = telemetry_energy(&centered, self.problem.cost())?;
        let (min_f, div_residual, boundary_residual) = match self.staggered() {
            Some(u) => (
                u.f().iter().copied().fold(f64::INFINITY, f64::min),
                divergence(&u).iter().fold(0.0f64, |m, v| m.max(v.abs())),
                extract_boundary(&u).max_abs_diff(self.problem.boundary()),
            ),
            None => {
                let p = self.problem.dims().p();
                let f = centered.f();
                let b = self.problem.boundary();
                let mut bres = 0.0f64;
                for (x, y) in f.index_axis(Axis(2), 0).iter().zip(b.f0().iter()) {
                    bres = bres.max((x - y).abs());
                }
                for (x, y) in f.index_axis(Axis(2), p).iter().zip(b.f1().iter()) {
                    bres = bres.max((x - y).abs());
                }
                for a in 0..self.problem.dims().dim() {
                    let m = centered.m(a);
                    let last = m.len_of(Axis(a)) - 1;
                    bres = m.index_axis(Axis(a), last).iter().fold(bres, |acc, v| acc.max(v.abs()));
                }
                (
                    f.iter().copied().fold(f64::INFINITY, f64::min),
                    centered_divergence(&centered)
                        .iter()
                        .fold(0.0f64, |m, v| m.max(v.abs())),
                    bres,
                )
            }
        };
        Ok(RecordRow {
            iter: self.iteration(),
            objective,
            min_f,
            div_residual,
            boundary_residual,
            delta_f,
            infeasible_cells: infeasible,
        })
    }

    /// Runs until the budget is spent or the density stops changing.
    pub fn run(mut self) -> Result<SolveOutput> {
        let mut record = ConvergenceRecord::default();
        let mut converged = false;
        let mut previous = self.reported();
        let budget = self.config.max_iter;
        for it in 1..=budget {
            self.step()?;
            let current = self.reported();
            let (delta_f, norm_f) = change(&current.1, &previous.1);
            let (delta_m, norm_m) = current
                .0
                .iter()
                .zip(&previous.0)
                .map(|(a, b)| change(a, b))
                .fold((0.0, 0.0), |(d, n), (x, y)| (d + x * x, n + y * y));
            let (delta_m, norm_m) = (delta_m.sqrt(), norm_m.sqrt());
            let size = self.state.iterate_norm();
            let log_now = self.config.log_every > 0 && (it % self.config.log_every == 0 || it == budget);
            if !size.is_finite() || size > DIVERGENCE_THRESHOLD {
                if let Ok(row) = self.telemetry(delta_f) {
                    record.push(row);
                }
                return Err(Error::Divergence {
                    iteration: it,
                    reason: format!("iterate norm {size:e}"),
                    record: Box::new(record),
                });
            }
            // the density alone can stall while the momentum still moves
            let tol = self.config.tol;
            let done = delta_f < tol * norm_f && delta_m < tol * norm_m.max(norm_f);
            if log_now || done {
                let row = self.telemetry(delta_f)?;
                let objective = row.objective;
                let feasible = row.infeasible_cells == 0;
                record.push(row);
                if !objective.is_finite() || (feasible && objective > DIVERGENCE_THRESHOLD) {
                    return Err(Error::Divergence {
                        iteration: it,
                        reason: format!("objective {objective:e}"),
                        record: Box::new(record),
                    });
                }
            }
            previous = current;
            if done {
                converged = true;
                break;
            }
        }
        Ok(SolveOutput {
            staggered: self.staggered(),
            centered: self.centered(),
            prox_density: self.state.prox_density(self.config.algorithm),
            iterations: self.iteration(),
            record,
            converged,
        })
    }
}

/// `(|a - b|, |b|)` in the Frobenius norm.
fn change(a: &ndarray::Array3<f64>, b: &ndarray::Array3<f64>) -> (f64, f64) {
    let mut diff2 = 0.0;
    let mut norm2 = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        diff2 += (x - y) * (x - y);
        norm2 += y * y;
    }
    (diff2.sqrt(), norm2.sqrt())
}

/// Runs `config` on `problem` from the default initialization.
pub fn solve(problem: &Problem, config: &SolverConfig) -> Result<SolveOutput> {
    Solver::new(problem.clone(), config.clone())?.run()
}

/// `I(U)` of the initial staggered field, shared by the DR initializations.
pub(crate) fn coupled_initial(u: &StaggeredField) -> crate::field::FieldPair {
    crate::field::FieldPair {
        u: u.clone(),
        v: interpolate(u),
    }
}
