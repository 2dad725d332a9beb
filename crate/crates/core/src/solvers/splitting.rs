//! Douglas–Rachford and primal-dual iterations.

use crate::error::Result;
use crate::field::{FieldOps, FieldPair, FieldQuad};
use crate::grid::{CenteredField, StaggeredField};
use crate::operators::{interpolate, interpolate_adjoint};
use crate::prox::{
    project_centered_constraints, project_constraints, project_coupling, prox_energy, ProxScratch,
};

use super::{coupled_initial, Algorithm, Problem, SolverConfig, Steps};

/// Douglas–Rachford variables. `x` is the first prox evaluated in the last
/// iteration, `prox1(2z - w)`, and is what the solver reports.
#[derive(Debug, Clone, PartialEq)]
pub struct DrState<T> {
    pub z: T,
    pub w: T,
    pub x: T,
    pub iteration: usize,
}

impl<T: FieldOps> DrState<T> {
    pub fn new(z: T) -> Self {
        DrState {
            w: z.clone(),
            x: z.clone(),
            z,
            iteration: 0,
        }
    }

    /// `w += alpha (prox1(2z - w) - z)`, then `z = prox2(w)`.
    pub fn step(
        &mut self,
        alpha: f64,
        prox1: impl FnOnce(&T) -> Result<T>,
        prox2: impl FnOnce(&T) -> Result<T>,
    ) -> Result<()> {
        let reflected = T::lincomb(2.0, &self.z, -1.0, &self.w);
        let x = prox1(&reflected)?;
        self.w.axpy(alpha, &x);
        self.w.axpy(-alpha, &self.z);
        self.z = prox2(&self.w)?;
        self.x = x;
        self.iteration += 1;
        Ok(())
    }

    fn norm(&self) -> f64 {
        self.z.norm().max(self.w.norm()).max(self.x.norm())
    }
}

/// Primal-dual variables. `y` is the latest energy-prox output.
#[derive(Debug, Clone, PartialEq)]
pub struct PdState {
    pub u: StaggeredField,
    pub upsilon: StaggeredField,
    pub v: CenteredField,
    pub y: CenteredField,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolverState {
    /// A-DR and A-DR'.
    Split(DrState<FieldPair>),
    /// S-DR and S-DR'.
    Symmetric(DrState<FieldQuad>),
    PrimalDual(PdState),
    Centered(DrState<CenteredField>),
}

impl SolverState {
    pub(crate) fn initial(problem: &Problem, config: &SolverConfig) -> Self {
        let u0 = problem.initial_staggered(config.seed);
        match config.algorithm {
            Algorithm::ADr | Algorithm::ADrPrime => SolverState::Split(DrState::new(coupled_initial(&u0))),
            Algorithm::SDr | Algorithm::SDrPrime => {
                let pair = coupled_initial(&u0);
                SolverState::Symmetric(DrState::new(FieldQuad {
                    primary: pair.clone(),
                    copy: pair,
                }))
            }
            Algorithm::PrimalDual => SolverState::PrimalDual(PdState {
                upsilon: u0.clone(),
                v: CenteredField::zeros(problem.dims()),
                y: interpolate(&u0),
                u: u0,
                iteration: 0,
            }),
            Algorithm::CenteredDr => SolverState::Centered(DrState::new(problem.initial_centered())),
        }
    }

    pub(crate) fn algorithm_family(&self) -> u8 {
        match self {
            SolverState::Split(_) => 0,
            SolverState::Symmetric(_) => 1,
            SolverState::PrimalDual(_) => 2,
            SolverState::Centered(_) => 3,
        }
    }

    pub fn iteration(&self) -> usize {
        match self {
            SolverState::Split(s) => s.iteration,
            SolverState::Symmetric(s) => s.iteration,
            SolverState::PrimalDual(s) => s.iteration,
            SolverState::Centered(s) => s.iteration,
        }
    }

    pub(crate) fn iterate_norm(&self) -> f64 {
        match self {
            SolverState::Split(s) => s.norm(),
            SolverState::Symmetric(s) => s.norm(),
            SolverState::PrimalDual(s) => s.u.norm().max(s.v.norm()),
            SolverState::Centered(s) => s.norm(),
        }
    }

    pub fn staggered(&self) -> Option<StaggeredField> {
        match self {
            SolverState::Split(s) => Some(s.x.u.clone()),
            SolverState::Symmetric(s) => Some(s.x.primary.u.clone()),
            SolverState::PrimalDual(s) => Some(s.u.clone()),
            SolverState::Centered(_) => None,
        }
    }

    pub fn centered(&self) -> CenteredField {
        match self {
            SolverState::Centered(s) => s.x.clone(),
            _ => interpolate(&self.staggered().expect("staggered scheme")),
        }
    }

    /// Latest output of the energy prox, which `algorithm` evaluates either
    /// first (`x`) or second (`z`).
    pub fn prox_density(&self, algorithm: Algorithm) -> CenteredField {
        let energy_first = matches!(algorithm, Algorithm::ADr | Algorithm::SDr);
        match self {
            SolverState::Split(s) if energy_first => s.x.v.clone(),
            SolverState::Split(s) => s.z.v.clone(),
            SolverState::Symmetric(s) if energy_first => s.x.primary.v.clone(),
            SolverState::Symmetric(s) => s.z.primary.v.clone(),
            SolverState::PrimalDual(s) => s.y.clone(),
            SolverState::Centered(s) => s.z.clone(),
        }
    }
}

fn prox_split(z: &FieldPair, steps: &Steps, problem: &Problem, scratch: &ProxScratch) -> Result<FieldPair> {
    Ok(FieldPair {
        u: project_constraints(&z.u, problem.boundary(), scratch)?,
        v: prox_energy(&z.v, steps.gamma, problem.cost())?,
    })
}

fn prox_coupling(z: &FieldPair, scratch: &ProxScratch) -> Result<FieldPair> {
    let (u, v) = project_coupling(&z.u, &z.v, scratch)?;
    Ok(FieldPair { u, v })
}

fn prox_quad(z: &FieldQuad, steps: &Steps, problem: &Problem, scratch: &ProxScratch) -> Result<FieldQuad> {
    Ok(FieldQuad {
        primary: prox_split(&z.primary, steps, problem, scratch)?,
        copy: prox_coupling(&z.copy, scratch)?,
    })
}

fn prox_diagonal(z: &FieldQuad) -> FieldQuad {
    let mean = FieldPair::lincomb(0.5, &z.primary, 0.5, &z.copy);
    FieldQuad {
        primary: mean.clone(),
        copy: mean,
    }
}

/// One iteration of `algorithm` on `state`.
pub(crate) fn step(
    state: &mut SolverState,
    algorithm: Algorithm,
    steps: &Steps,
    problem: &Problem,
    scratch: &ProxScratch,
) -> Result<()> {
    match (state, algorithm) {
        (SolverState::Split(s), Algorithm::ADr) => s.step(
            steps.alpha,
            |z| prox_split(z, steps, problem, scratch),
            |z| prox_coupling(z, scratch),
        ),
        (SolverState::Split(s), Algorithm::ADrPrime) => s.step(
            steps.alpha,
            |z| prox_coupling(z, scratch),
            |z| prox_split(z, steps, problem, scratch),
        ),
        (SolverState::Symmetric(s), Algorithm::SDr) => s.step(
            steps.alpha,
            |z| prox_quad(z, steps, problem, scratch),
            |z| Ok(prox_diagonal(z)),
        ),
        (SolverState::Symmetric(s), Algorithm::SDrPrime) => s.step(
            steps.alpha,
            |z| Ok(prox_diagonal(z)),
            |z| prox_quad(z, steps, problem, scratch),
        ),
        (SolverState::Centered(s), Algorithm::CenteredDr) => s.step(
            steps.alpha,
            |z| project_centered_constraints(z, problem.boundary(), scratch),
            |z| prox_energy(z, steps.gamma, problem.cost()),
        ),
        (SolverState::PrimalDual(s), Algorithm::PrimalDual) => pd_step(s, steps, problem, scratch),
        (_, alg) => Err(crate::error::Error::Configuration(format!(
            "state does not belong to algorithm {alg}"
        ))),
    }
}

/// One primal-dual iteration:
/// `V+ = prox_{sigma J*}(V + sigma I(Y))`, `U+ = proj_C(U - tau I*(V+))`,
/// `Y+ = U+ + theta (U+ - U)`.
pub fn pd_step(state: &mut PdState, steps: &Steps, problem: &Problem, scratch: &ProxScratch) -> Result<()> {
    let sigma = steps.sigma;
    let mut x = interpolate(&state.upsilon);
    x.scale(sigma);
    x.axpy(1.0, &state.v);
    // Moreau: prox_{sigma J*}(x) = x - sigma prox_{J / sigma}(x / sigma)
    let mut scaled = x.clone();
    scaled.scale(1.0 / sigma);
    let y = prox_energy(&scaled, 1.0 / sigma, problem.cost())?;
    x.axpy(-sigma, &y);
    let v = x;

    let mut descent = interpolate_adjoint(&v);
    descent.scale(-steps.tau);
    descent.axpy(1.0, &state.u);
    let u = project_constraints(&descent, problem.boundary(), scratch)?;

    let upsilon = StaggeredField::lincomb(1.0 + steps.theta, &u, -steps.theta, &state.u);
    state.u = u;
    state.upsilon = upsilon;
    state.v = v;
    state.y = y;
    state.iteration += 1;
    Ok(())
}
