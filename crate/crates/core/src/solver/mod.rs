//! Operator-splitting time integration of the monodomain model.
//!
//! Each step advances the reaction ODEs with forward Euler and then applies
//! one explicit diffusion update `V ← V − dt·K′V` (first-order Godunov
//! splitting; the interpolating trial functions make the mass matrix the
//! identity, so no solve is needed). The same loop drives either the
//! collocation operator or the structured-grid FEM reference, which keeps
//! cross-method comparisons free of integration differences.
//!
//! The explicit step is subject to the Gershgorin-style bound returned by
//! [`stability_bound`]; a configured `dt` above the bound is reported as a
//! warning, never silently altered, and divergence is caught by the
//! non-finite guard during the run.

pub mod fem;
pub mod metrics;
pub mod output;

use crate::approximants::{build_all, RbfParams, ShapeError};
use crate::assembly::{assemble_system, AssemblyError, DiffusionField, SystemMatrices};
use crate::ionic::{react_step, CellStateField, IonicError, IonicModel, StimulusProtocol};
use crate::node_cloud::{build_support_knn, build_support_radius, CloudError, KdTree, NodeCloud};
use crate::point::Point;
use crate::scalar::Real;
use crate::sparse::CsrMatrix;
use fem::{assemble_fem, FemOperator};
use metrics::{LatMap, LatTracker};
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Cloud(#[from] CloudError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Ionic(#[from] IonicError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("the FEM reference solver needs a structured grid cloud")]
    NotStructured,
    #[error("solution became non-finite at t = {t} ms; dt exceeds the stable step")]
    Unstable { t: f64 },
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("metric input invalid: {0}")]
    MetricInput(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    Mcm,
    Fem,
}

/// How support domains are built.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SupportSpec<T> {
    /// All nodes within `alpha_sd * h`.
    Radius { alpha_sd: T },
    /// The k nearest nodes.
    Knn { k: usize },
}

/// Initial transmembrane potential.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialCondition {
    /// Model resting potential everywhere.
    Rest,
    /// `V = cos(π (x − x_min) / L_x)`: the slowest diffusion mode along x,
    /// used for validation against the closed-form decay rate.
    CosineX,
}

/// Everything one run needs. Distances in cm, times in ms, diffusion in
/// cm²/ms.
#[derive(Clone, Debug)]
pub struct SimulationConfig<T> {
    pub cloud: NodeCloud<T>,
    pub solver: SolverKind,
    pub trial: RbfParams<T>,
    pub support: SupportSpec<T>,
    pub d0: T,
    pub rho: T,
    /// Region labels with zero conductivity.
    pub scar_regions: Vec<u32>,
    pub model: IonicModel<T>,
    /// Per-region parameter overrides of the same model kind.
    pub region_overrides: Vec<(u32, IonicModel<T>)>,
    pub stimulus: Option<StimulusProtocol<T>>,
    pub reaction_substeps: usize,
    pub dt: T,
    pub t_total: T,
    pub initial: InitialCondition,
    /// Snapshot cadence in ms; the final state is always snapshotted.
    pub snapshot_every: Option<T>,
    pub probes: Vec<Point<T>>,
    /// First-crossing threshold for activation maps; defaults to halfway
    /// between rest and plateau.
    pub lat_threshold: Option<T>,
    pub penalty_alpha: T,
}

impl<T: Real> SimulationConfig<T> {
    fn validate(&self) -> Result<(), SolverError> {
        if self.dt <= T::zero() {
            return Err(SolverError::BadConfig("dt must be positive".into()));
        }
        if self.t_total < self.dt {
            return Err(SolverError::BadConfig("t_total must be at least one step".into()));
        }
        if self.reaction_substeps == 0 {
            return Err(SolverError::BadConfig("reaction_substeps must be at least 1".into()));
        }
        if self.penalty_alpha < T::zero() {
            return Err(SolverError::BadConfig("penalty_alpha must be non-negative".into()));
        }
        if let Some(p) = &self.stimulus {
            p.validate()?;
        }
        let (lo, hi) = self.cloud.bbox();
        let margin = self.cloud.h();
        for (k, p) in self.probes.iter().enumerate() {
            for a in 0..self.cloud.dim() {
                if p.coord(a) < lo.coord(a) - margin || p.coord(a) > hi.coord(a) + margin {
                    return Err(SolverError::BadConfig(format!("probe {k} lies outside the domain")));
                }
            }
        }
        Ok(())
    }
}

/// Everything one run produces, in memory. [`RunOutput::write_to`] lays it
/// out on disk in the documented formats.
#[derive(Clone, Debug)]
pub struct RunOutput<T> {
    pub times: Vec<T>,
    pub probe_nodes: Vec<usize>,
    /// One trace per probe, aligned with `times`.
    pub probe_traces: Vec<Vec<T>>,
    /// `(step, t, V)` at the snapshot cadence plus the final state.
    pub snapshots: Vec<(usize, T, Vec<T>)>,
    pub lat: LatMap<T>,
    pub final_v: Vec<T>,
    /// Gershgorin step bound of the operator actually used.
    pub dt_max: f64,
    pub setup_seconds: f64,
    pub loop_seconds: f64,
}

impl<T: Real> RunOutput<T> {
    pub fn final_snapshot(&self) -> &[T] {
        &self.final_v
    }

    /// Write `cloud.txt`, `traces.csv`, `lat.txt` and `snapshot_*.vtk` into
    /// `dir`, creating it if needed.
    pub fn write_to(&self, dir: &Path, cloud: &NodeCloud<T>) -> Result<(), SolverError> {
        std::fs::create_dir_all(dir)?;
        let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join("cloud.txt"))?);
        crate::node_cloud::format::write_cloud(cloud, &mut w)?;
        drop(w);
        output::write_traces(&dir.join("traces.csv"), &self.times, &self.probe_traces)?;
        output::write_lat(&dir.join("lat.txt"), cloud, &self.lat)?;
        for (step, t, v) in &self.snapshots {
            let name = format!("snapshot_{step:06}.vtk");
            let title = format!("V at t={} ms", t.to64());
            output::write_snapshot(&dir.join(name), cloud, "V", v, &title)?;
        }
        Ok(())
    }
}

/// Explicit step bound `dt_max = 2 / max_I Σ_J |K′_IJ|` for the assembled
/// operator; unbounded when the operator is zero.
pub fn stability_bound<T: Real>(k_prime: &CsrMatrix<T>) -> T {
    let worst = k_prime.max_abs_row_sum();
    if worst == T::zero() {
        T::of(f64::INFINITY)
    } else {
        T::of(2.0) / worst
    }
}

/// One explicit diffusion update `V ← V − dt (K′ V)`.
pub fn step_diffusion<T: Real>(v: &mut [T], k_prime: &CsrMatrix<T>, dt: T, scratch: &mut [T]) {
    k_prime.matvec(v, scratch);
    for (vi, ki) in v.iter_mut().zip(scratch.iter()) {
        *vi -= dt * *ki;
    }
}

enum DiffusionOp<T: Real> {
    Mcm(Box<SystemMatrices<T>>),
    Fem(FemOperator<T>),
}

impl<T: Real> DiffusionOp<T> {
    fn step(&self, v: &mut [T], dt: T, scratch: &mut [T]) {
        match self {
            DiffusionOp::Mcm(sys) => step_diffusion(v, &sys.k_prime, dt, scratch),
            DiffusionOp::Fem(fem) => fem.step(v, dt, scratch),
        }
    }

    fn dt_max(&self) -> T {
        match self {
            DiffusionOp::Mcm(sys) => stability_bound(&sys.k_prime),
            DiffusionOp::Fem(fem) => fem.dt_max(),
        }
    }
}

/// Assemble the collocation operators for `config` (shape functions,
/// penalized flux, divergence, K′). Exposed for operator inspection and the
/// matrix dump.
pub fn assemble_mcm_system<T: Real>(config: &SimulationConfig<T>) -> Result<SystemMatrices<T>, SolverError> {
    let cloud = &config.cloud;
    let supports = match config.support {
        SupportSpec::Radius { alpha_sd } => build_support_radius(cloud, alpha_sd)?,
        SupportSpec::Knn { k } => build_support_knn(cloud, k)?,
    };
    let shapes = build_all(cloud, supports, &config.trial)?;
    let diff = DiffusionField::new(cloud, config.d0, config.rho, &config.scar_regions)?;
    Ok(assemble_system(cloud, &shapes, &diff, config.penalty_alpha)?)
}

/// Run the meshfree mixed-collocation solver.
pub fn run_simulation<T: Real>(config: &SimulationConfig<T>) -> Result<RunOutput<T>, SolverError> {
    config.validate()?;
    let setup = Instant::now();
    let sys = assemble_mcm_system(config)?;
    let op = DiffusionOp::Mcm(Box::new(sys));
    let setup_seconds = setup.elapsed().as_secs_f64();
    time_loop(config, op, setup_seconds)
}

/// Run the structured-grid FEM reference solver with the same splitting and
/// cell models.
pub fn fem_reference_run<T: Real>(config: &SimulationConfig<T>) -> Result<RunOutput<T>, SolverError> {
    config.validate()?;
    let setup = Instant::now();
    let diff = DiffusionField::new(&config.cloud, config.d0, config.rho, &config.scar_regions)?;
    let fem = assemble_fem(&config.cloud, &diff)?;
    let op = DiffusionOp::Fem(fem);
    let setup_seconds = setup.elapsed().as_secs_f64();
    time_loop(config, op, setup_seconds)
}

/// Dispatch on the configured solver kind.
pub fn run<T: Real>(config: &SimulationConfig<T>) -> Result<RunOutput<T>, SolverError> {
    match config.solver {
        SolverKind::Mcm => run_simulation(config),
        SolverKind::Fem => fem_reference_run(config),
    }
}

fn resolve_probes<T: Real>(cloud: &NodeCloud<T>, probes: &[Point<T>]) -> Vec<usize> {
    if probes.is_empty() {
        return Vec::new();
    }
    let tree = KdTree::build(cloud.points(), cloud.dim());
    probes.iter().map(|p| tree.knn(p, 1)[0].0 as usize).collect()
}

fn time_loop<T: Real>(
    config: &SimulationConfig<T>,
    op: DiffusionOp<T>,
    setup_seconds: f64,
) -> Result<RunOutput<T>, SolverError> {
    let cloud = &config.cloud;
    let n = cloud.len();
    let dt = config.dt;
    let n_steps = (config.t_total / dt).to64().round() as usize;
    let dt_max = op.dt_max();
    if dt > dt_max {
        log::warn!(
            "dt = {} ms exceeds the explicit stability bound {} ms; expect divergence",
            dt.to64(),
            dt_max.to64()
        );
    }

    let mut field = CellStateField::with_region_models(config.model, &config.region_overrides, cloud)?;
    if config.initial == InitialCondition::CosineX {
        let (lo, hi) = cloud.bbox();
        let lx = hi.x - lo.x;
        if lx <= T::zero() {
            return Err(SolverError::BadConfig("cosine initial condition needs x extent".into()));
        }
        for (v, p) in field.v.iter_mut().zip(cloud.points()) {
            *v = (T::pi() * (p.x - lo.x) / lx).cos();
        }
    }

    let (rest_v, _) = config.model.resting();
    let threshold = config
        .lat_threshold
        .unwrap_or_else(|| rest_v + (config.model.plateau() - rest_v) * T::of(0.5));
    let stim = config.stimulus.as_ref().map(|p| (p, p.node_mask(cloud)));
    let probe_nodes = resolve_probes(cloud, &config.probes);
    let cadence = config
        .snapshot_every
        .map(|every| ((every / dt).to64().round() as usize).max(1));

    let mut tracker = LatTracker::new(threshold, &field.v);
    let mut times = Vec::with_capacity(n_steps + 1);
    times.push(T::zero());
    let mut probe_traces: Vec<Vec<T>> = probe_nodes.iter().map(|_| Vec::with_capacity(n_steps + 1)).collect();
    for (k, &node) in probe_nodes.iter().enumerate() {
        probe_traces[k].push(field.v[node]);
    }
    let mut snapshots = Vec::new();
    if cadence.is_some() {
        snapshots.push((0usize, T::zero(), field.v.clone()));
    }

    let stepping = Instant::now();
    let mut prev = vec![T::zero(); n];
    let mut scratch = vec![T::zero(); n];
    for step in 1..=n_steps {
        let t_prev = dt * T::of_usize(step - 1);
        prev.copy_from_slice(&field.v);
        react_step(
            &mut field,
            dt,
            config.reaction_substeps,
            stim.as_ref().map(|(p, mask)| (*p, mask.as_slice())),
            t_prev,
        )?;
        op.step(&mut field.v, dt, &mut scratch);
        if field.v.iter().any(|x| !x.is_finite()) {
            return Err(SolverError::Unstable { t: (dt * T::of_usize(step)).to64() });
        }
        tracker.observe(t_prev, dt, &prev, &field.v);
        let t_now = dt * T::of_usize(step);
        times.push(t_now);
        for (k, &node) in probe_nodes.iter().enumerate() {
            probe_traces[k].push(field.v[node]);
        }
        if let Some(c) = cadence {
            if step % c == 0 && step != n_steps {
                snapshots.push((step, t_now, field.v.clone()));
            }
        }
    }
    let t_end = dt * T::of_usize(n_steps);
    snapshots.push((n_steps, t_end, field.v.clone()));
    let loop_seconds = stepping.elapsed().as_secs_f64();

    Ok(RunOutput {
        times,
        probe_nodes,
        probe_traces,
        snapshots,
        lat: tracker.finish(),
        final_v: field.v,
        dt_max: dt_max.to64(),
        setup_seconds,
        loop_seconds,
    })
}
