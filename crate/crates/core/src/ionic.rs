//! Ionic cell models and stimulus protocols.
//!
//! The reaction half of the operator splitting: per-node ODEs for the
//! transmembrane potential and the gating state, advanced with forward Euler
//! substeps. Two published two-variable models are provided, both with a
//! dimensionless potential resting at 0 with a plateau near 1:
//!
//! * FitzHugh–Nagumo: `dV/dt = c1·V(V−a)(1−V) − c2·w`, `dw/dt = b(V − d·w)`.
//! * Mitchell–Schaeffer: `dV/dt = h·V²(1−V)/τ_in − V/τ_out`, with the gate
//!   opening below `v_gate` at rate `1/τ_open` and closing above it at rate
//!   `1/τ_close`.
//!
//! The model enum is open for extension; anything that provides a resting
//! state, a plateau estimate and a right-hand side plugs into the solver.

use crate::node_cloud::NodeCloud;
use crate::point::Point;
use crate::scalar::Real;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IonicError {
    #[error("reaction substep count must be at least 1")]
    ZeroSubsteps,
    #[error("non-finite state at node {node}, t = {t} ms; time step too large for stability")]
    NonFinite { node: usize, t: f64 },
    #[error("stimulus protocol invalid: {0}")]
    BadProtocol(String),
    #[error("diastolic-threshold bracket not found in [0, {a_max}]; model does not excite")]
    NoBracket { a_max: f64 },
    #[error("region override mixes model kinds; all regions must use the same state layout")]
    MixedModels,
    #[error("{context}: expected {expect} entries, got {got}")]
    SizeMismatch { context: &'static str, expect: usize, got: usize },
}

/// FitzHugh–Nagumo parameters (dimensionless potential in [0, 1]).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FhnParams<T> {
    pub a: T,
    pub b: T,
    pub c1: T,
    pub c2: T,
    pub d: T,
}

impl<T: Real> Default for FhnParams<T> {
    fn default() -> Self {
        FhnParams { a: T::of(0.13), b: T::of(0.013), c1: T::of(0.26), c2: T::of(0.1), d: T::one() }
    }
}

/// Mitchell–Schaeffer parameters in ms (standard published values).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MsParams<T> {
    pub tau_in: T,
    pub tau_out: T,
    pub tau_open: T,
    pub tau_close: T,
    pub v_gate: T,
}

impl<T: Real> Default for MsParams<T> {
    fn default() -> Self {
        MsParams {
            tau_in: T::of(0.3),
            tau_out: T::of(6.0),
            tau_open: T::of(120.0),
            tau_close: T::of(150.0),
            v_gate: T::of(0.13),
        }
    }
}

/// Pluggable cell model. `Passive` has no reaction term and is used for
/// pure-diffusion validation runs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum IonicModel<T> {
    Passive,
    FitzHughNagumo(FhnParams<T>),
    MitchellSchaeffer(MsParams<T>),
}

impl<T: Real> IonicModel<T> {
    pub fn n_gates(&self) -> usize {
        match self {
            IonicModel::Passive => 0,
            IonicModel::FitzHughNagumo(_) | IonicModel::MitchellSchaeffer(_) => 1,
        }
    }

    /// Stable resting state (V, gates).
    pub fn resting(&self) -> (T, [T; 1]) {
        match self {
            IonicModel::Passive => (T::zero(), [T::zero()]),
            IonicModel::FitzHughNagumo(_) => (T::zero(), [T::zero()]),
            IonicModel::MitchellSchaeffer(_) => (T::zero(), [T::one()]),
        }
    }

    /// Plateau potential used for threshold classification and LAT defaults.
    pub fn plateau(&self) -> T {
        T::one()
    }

    /// Reaction right-hand side: `dV/dt` and `dgates/dt`.
    pub fn rhs(&self, v: T, gates: &[T], dgates: &mut [T]) -> T {
        match self {
            IonicModel::Passive => T::zero(),
            IonicModel::FitzHughNagumo(p) => {
                let w = gates[0];
                dgates[0] = p.b * (v - p.d * w);
                p.c1 * v * (v - p.a) * (T::one() - v) - p.c2 * w
            }
            IonicModel::MitchellSchaeffer(p) => {
                let h = gates[0];
                dgates[0] = if v < p.v_gate { (T::one() - h) / p.tau_open } else { -h / p.tau_close };
                h * v * v * (T::one() - v) / p.tau_in - v / p.tau_out
            }
        }
    }
}

/// Geometric or explicit stimulus target.
#[derive(Clone, Debug, PartialEq)]
pub enum StimulusRegion<T> {
    /// Nodes with `x <= x0` (planar stimulus from the left).
    XBelow(T),
    /// Nodes within `radius` of `center`.
    Ball { center: Point<T>, radius: T },
    /// Explicit node list (e.g. early-activation sites).
    Nodes(Vec<u32>),
}

/// Periodic square-pulse stimulus applied to a node region.
#[derive(Clone, Debug, PartialEq)]
pub struct StimulusProtocol<T> {
    pub region: StimulusRegion<T>,
    /// Added to dV/dt while active (reaction units, 1/ms for the
    /// dimensionless models).
    pub amplitude: T,
    /// Time of the first pulse onset, ms.
    pub start: T,
    /// Pulse duration t_d, ms.
    pub duration: T,
    /// Beat period t_T, ms (ignored when `count <= 1`).
    pub period: T,
    /// Number of beats.
    pub count: u32,
}

impl<T: Real> StimulusProtocol<T> {
    pub fn validate(&self) -> Result<(), IonicError> {
        if !self.amplitude.is_finite() {
            return Err(IonicError::BadProtocol("amplitude must be finite".into()));
        }
        if self.duration <= T::zero() {
            return Err(IonicError::BadProtocol("duration must be positive".into()));
        }
        if self.count > 1 && self.duration >= self.period {
            return Err(IonicError::BadProtocol(format!(
                "duration {} must be shorter than period {}",
                self.duration, self.period
            )));
        }
        Ok(())
    }

    /// Is the pulse on at time `t` (ms)?
    pub fn active(&self, t: T) -> bool {
        let tau = t - self.start;
        if tau < T::zero() || self.count == 0 {
            return false;
        }
        if self.count == 1 {
            return tau < self.duration;
        }
        let beat = (tau / self.period).floor();
        if beat.to64() >= f64::from(self.count) {
            return false;
        }
        tau - beat * self.period < self.duration
    }

    /// Per-node membership mask of the stimulus region.
    pub fn node_mask(&self, cloud: &NodeCloud<T>) -> Vec<bool> {
        match &self.region {
            StimulusRegion::XBelow(x0) => cloud.points().iter().map(|p| p.x <= *x0).collect(),
            StimulusRegion::Ball { center, radius } => {
                let r2 = *radius * *radius;
                cloud.points().iter().map(|p| p.dist2(center) <= r2).collect()
            }
            StimulusRegion::Nodes(ids) => {
                let mut mask = vec![false; cloud.len()];
                for &id in ids {
                    if (id as usize) < mask.len() {
                        mask[id as usize] = true;
                    }
                }
                mask
            }
        }
    }
}

/// Per-node electrophysiological state: potential plus gating variables,
/// with a model per region label.
#[derive(Clone, Debug)]
pub struct CellStateField<T> {
    pub v: Vec<T>,
    gates: Vec<T>,
    n_gates: usize,
    /// Per-node index into `models`.
    model_of: Vec<u32>,
    models: Vec<IonicModel<T>>,
}

impl<T: Real> CellStateField<T> {
    /// Every node at the resting state of `model`.
    pub fn at_rest(model: IonicModel<T>, cloud: &NodeCloud<T>) -> Self {
        Self::with_region_models(model, &[], cloud).expect("uniform model cannot mix kinds")
    }

    /// Base model everywhere, except regions with an override. Overrides may
    /// change parameters but not the model kind.
    pub fn with_region_models(
        base: IonicModel<T>,
        overrides: &[(u32, IonicModel<T>)],
        cloud: &NodeCloud<T>,
    ) -> Result<Self, IonicError> {
        for (_, m) in overrides {
            if std::mem::discriminant(m) != std::mem::discriminant(&base) {
                return Err(IonicError::MixedModels);
            }
        }
        let mut models = vec![base];
        let mut model_of = vec![0u32; cloud.len()];
        for &(region, m) in overrides {
            models.push(m);
            let idx = (models.len() - 1) as u32;
            for i in 0..cloud.len() {
                if cloud.region(i) == region {
                    model_of[i] = idx;
                }
            }
        }
        let n_gates = base.n_gates();
        let n = cloud.len();
        let mut v = vec![T::zero(); n];
        let mut gates = vec![T::zero(); n * n_gates];
        for i in 0..n {
            let (rv, rg) = models[model_of[i] as usize].resting();
            v[i] = rv;
            gates[i * n_gates..(i + 1) * n_gates].copy_from_slice(&rg[..n_gates]);
        }
        Ok(CellStateField { v, gates, n_gates, model_of, models })
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn n_gates(&self) -> usize {
        self.n_gates
    }

    pub fn gates_of(&self, node: usize) -> &[T] {
        &self.gates[node * self.n_gates..(node + 1) * self.n_gates]
    }

    pub fn model_of(&self, node: usize) -> &IonicModel<T> {
        &self.models[self.model_of[node] as usize]
    }
}

/// Advance the reaction term by `dt` with forward Euler substeps, adding the
/// stimulus current to nodes inside the region while a pulse is active.
///
/// `t` is the time at the start of the step; stimulus windows are evaluated
/// at each substep time. Per-node updates are independent and run in
/// parallel.
pub fn react_step<T: Real>(
    field: &mut CellStateField<T>,
    dt: T,
    substeps: usize,
    protocol: Option<(&StimulusProtocol<T>, &[bool])>,
    t: T,
) -> Result<(), IonicError> {
    if substeps == 0 {
        return Err(IonicError::ZeroSubsteps);
    }
    if let Some((p, mask)) = protocol {
        p.validate()?;
        if mask.len() != field.len() {
            return Err(IonicError::SizeMismatch { context: "stimulus mask", expect: field.len(), got: mask.len() });
        }
    }
    let sub_dt = dt / T::of_usize(substeps);
    // Stimulus activity only depends on time, not the node: evaluate the
    // window once per substep.
    let mut stim_on = vec![false; substeps];
    let mut stim_amp = T::zero();
    if let Some((p, _)) = protocol {
        stim_amp = p.amplitude;
        for (s, on) in stim_on.iter_mut().enumerate() {
            *on = p.active(t + sub_dt * T::of_usize(s));
        }
    }
    let n_gates = field.n_gates;
    let models = field.models.clone();
    let model_of = &field.model_of;
    let bad = std::sync::atomic::AtomicUsize::new(usize::MAX);
    field
        .v
        .par_iter_mut()
        .zip(field.gates.par_chunks_mut(n_gates.max(1)))
        .enumerate()
        .for_each(|(i, (v, gates))| {
            let model = &models[model_of[i] as usize];
            let stimulated = protocol.map(|(_, mask)| mask[i]).unwrap_or(false);
            let mut dgates = [T::zero(); 1];
            for s in 0..substeps {
                let mut dv = model.rhs(*v, &gates[..n_gates], &mut dgates[..n_gates.max(1)]);
                if stimulated && stim_on[s] {
                    dv += stim_amp;
                }
                *v += sub_dt * dv;
                for (g, d) in gates.iter_mut().zip(&dgates[..n_gates]) {
                    *g += sub_dt * *d;
                }
            }
            if !v.is_finite() {
                bad.store(i, std::sync::atomic::Ordering::Relaxed);
            }
        });
    let bad = bad.load(std::sync::atomic::Ordering::Relaxed);
    if bad != usize::MAX {
        return Err(IonicError::NonFinite { node: bad, t: t.to64() });
    }
    Ok(())
}

/// Minimal single-cell stimulus amplitude that elicits an action potential
/// from rest, found by bisection (20 iterations) on a `t_d`-long pulse.
/// "Excited" means the potential exceeds 80% of the model plateau within
/// 50 ms. The search bracket is `[0, 1000]` reaction units.
pub fn diastolic_threshold<T: Real>(model: &IonicModel<T>, t_d: T) -> Result<T, IonicError> {
    let a_max = T::of(1000.0);
    let excites = |amp: T| -> bool {
        let dt = T::of(0.005);
        let horizon = T::of(50.0);
        let target = model.plateau() * T::of(0.8);
        let (mut v, mut gates) = model.resting();
        let mut dgates = [T::zero(); 1];
        let steps = (horizon / dt).to64() as usize;
        for s in 0..steps {
            let t = dt * T::of_usize(s);
            let mut dv = model.rhs(v, &gates, &mut dgates);
            if t < t_d {
                dv += amp;
            }
            v += dt * dv;
            for (g, d) in gates.iter_mut().zip(&dgates) {
                *g += dt * *d;
            }
            if v >= target {
                return true;
            }
        }
        false
    };
    if excites(T::zero()) || !excites(a_max) {
        return Err(IonicError::NoBracket { a_max: a_max.to64() });
    }
    let mut lo = T::zero();
    let mut hi = a_max;
    for _ in 0..20 {
        let mid = (lo + hi) * T::of(0.5);
        if excites(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((lo + hi) * T::of(0.5))
}
