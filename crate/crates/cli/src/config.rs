//! Run configuration files: bracketed sections of `key = value` pairs (TOML)
//! with strict unknown-key rejection, lowered into the solver configuration.
//!
//! Units are fixed: lengths in cm, times in ms, diffusion in cm²/ms.

use crate::CliError;
use mcm_core::approximants::{RbfParams, TrialKind};
use mcm_core::ionic::{FhnParams, IonicModel, MsParams, StimulusProtocol, StimulusRegion};
use mcm_core::node_cloud::{self, format as cloud_format, generate_regular_grid, immerse_grid};
use mcm_core::solver::{InitialCondition, SimulationConfig, SolverKind, SupportSpec};
use mcm_core::{Cloud, Point};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub geometry: Geometry,
    pub solver: Solver,
    pub supports: Supports,
    pub approximant: Approximant,
    pub diffusion: Diffusion,
    pub ionic: Ionic,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stimulus: Option<Stimulus>,
    pub time: Time,
    pub output: Output,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    /// grid | cloud_file | immersed
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extent: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jitter: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jitter_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub surface: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Solver {
    /// mcm | fem
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub penalty_alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lat_threshold: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Supports {
    /// radius | knn
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_sd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Approximant {
    /// rpi | mki
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nugget: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diffusion {
    pub d0: f64,
    pub rho: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fiber: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scar_regions: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ionic {
    /// ms | fhn | none
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reaction_substeps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ms: Option<MsOverride>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fhn: Option<FhnOverride>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub region_override: Vec<RegionOverride>,
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsOverride {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_in: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_out: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_open: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_close: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_gate: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FhnOverride {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionOverride {
    pub region: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ms: Option<MsOverride>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fhn: Option<FhnOverride>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stimulus {
    /// x_below | ball | nodes
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nodes: Vec<u32>,
    pub amplitude: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    pub duration: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Time {
    pub dt: f64,
    pub t_total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    pub dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot_every: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probes: Vec<[f64; 3]>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config parse error: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Build the node cloud described by the geometry section. Paths are
    /// resolved relative to `base` (the config file's directory).
    pub fn build_cloud(&self, base: &Path) -> Result<Cloud, CliError> {
        let g = &self.geometry;
        let mut cloud = match g.kind.as_str() {
            "grid" => {
                let extent = g
                    .extent
                    .as_ref()
                    .ok_or_else(|| CliError::Config("geometry.extent required for kind = \"grid\"".into()))?;
                let h = g.h.ok_or_else(|| CliError::Config("geometry.h required for kind = \"grid\"".into()))?;
                if extent.len() != 2 && extent.len() != 3 {
                    return Err(CliError::Config("geometry.extent needs 2 or 3 entries".into()));
                }
                let mut cloud = generate_regular_grid(extent, h, extent.len())
                    .map_err(|e| CliError::Config(e.to_string()))?;
                if let Some(j) = g.jitter {
                    if j > 0.0 {
                        cloud.jitter_interior(j, g.jitter_seed.unwrap_or(1));
                    }
                }
                cloud
            }
            "cloud_file" => {
                let path = g
                    .path
                    .as_ref()
                    .ok_or_else(|| CliError::Config("geometry.path required for kind = \"cloud_file\"".into()))?;
                let full = base.join(path);
                let file = File::open(&full)
                    .map_err(|e| CliError::Config(format!("cannot open cloud {}: {e}", full.display())))?;
                let mut cloud = cloud_format::read_cloud(BufReader::new(file), g.h)
                    .map_err(|e| CliError::Config(e.to_string()))?;
                if let Some(surf) = &g.surface {
                    let mesh = load_surface(&base.join(surf))?;
                    cloud_format::assign_normals_from_surface(&mut cloud, &mesh);
                }
                cloud
            }
            "immersed" => {
                let surf = g
                    .surface
                    .as_ref()
                    .ok_or_else(|| CliError::Config("geometry.surface required for kind = \"immersed\"".into()))?;
                let spacing = g
                    .spacing
                    .ok_or_else(|| CliError::Config("geometry.spacing required for kind = \"immersed\"".into()))?;
                let mesh = load_surface(&base.join(surf))?;
                immerse_grid(&mesh, spacing).map_err(|e| CliError::Config(e.to_string()))?
            }
            other => {
                return Err(CliError::Config(format!(
                    "geometry.kind must be grid, cloud_file or immersed, got {other:?}"
                )))
            }
        };
        if let Some(f) = self.diffusion.fiber {
            let v = mcm_core::nalgebra::Vector3::new(f[0], f[1], f[2]);
            if v.norm() == 0.0 {
                return Err(CliError::Config("diffusion.fiber must be a nonzero vector".into()));
            }
            cloud.set_fibers(v);
        }
        cloud.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cloud)
    }

    fn trial(&self, dim: usize) -> Result<RbfParams<f64>, CliError> {
        let kind = match self.approximant.kind.as_str() {
            "rpi" => TrialKind::Rpi,
            "mki" => TrialKind::Mki,
            other => return Err(CliError::Config(format!("approximant.kind must be rpi or mki, got {other:?}"))),
        };
        let mut params = RbfParams::defaults_for_dim(kind, dim);
        if let Some(a) = self.approximant.alpha_c {
            params.alpha_c = a;
        }
        if let Some(q) = self.approximant.q {
            params.q_exp = q;
        }
        if let Some(n) = self.approximant.nugget {
            params.nugget = n;
        }
        params.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(params)
    }

    fn support(&self) -> Result<SupportSpec<f64>, CliError> {
        match self.supports.kind.as_str() {
            "radius" => {
                let alpha_sd = self
                    .supports
                    .alpha_sd
                    .ok_or_else(|| CliError::Config("supports.alpha_sd required for kind = \"radius\"".into()))?;
                Ok(SupportSpec::Radius { alpha_sd })
            }
            "knn" => {
                let k = self
                    .supports
                    .k
                    .ok_or_else(|| CliError::Config("supports.k required for kind = \"knn\"".into()))?;
                Ok(SupportSpec::Knn { k })
            }
            other => Err(CliError::Config(format!("supports.kind must be radius or knn, got {other:?}"))),
        }
    }

    fn base_model(&self) -> Result<IonicModel<f64>, CliError> {
        match self.ionic.model.as_str() {
            "none" => Ok(IonicModel::Passive),
            "ms" => Ok(IonicModel::MitchellSchaeffer(apply_ms(MsParams::default(), self.ionic.ms))),
            "fhn" => Ok(IonicModel::FitzHughNagumo(apply_fhn(FhnParams::default(), self.ionic.fhn))),
            other => Err(CliError::Config(format!("ionic.model must be ms, fhn or none, got {other:?}"))),
        }
    }

    fn region_overrides(&self, base: IonicModel<f64>) -> Result<Vec<(u32, IonicModel<f64>)>, CliError> {
        let mut out = Vec::new();
        for o in &self.ionic.region_override {
            let model = match base {
                IonicModel::MitchellSchaeffer(p) => {
                    if o.fhn.is_some() {
                        return Err(CliError::Config("region_override.fhn given for an ms model".into()));
                    }
                    IonicModel::MitchellSchaeffer(apply_ms(p, o.ms))
                }
                IonicModel::FitzHughNagumo(p) => {
                    if o.ms.is_some() {
                        return Err(CliError::Config("region_override.ms given for an fhn model".into()));
                    }
                    IonicModel::FitzHughNagumo(apply_fhn(p, o.fhn))
                }
                IonicModel::Passive => {
                    return Err(CliError::Config("region_override has no effect on model = \"none\"".into()))
                }
            };
            out.push((o.region, model));
        }
        Ok(out)
    }

    fn stimulus(&self) -> Result<Option<StimulusProtocol<f64>>, CliError> {
        let Some(s) = &self.stimulus else { return Ok(None) };
        let region = match s.kind.as_str() {
            "x_below" => StimulusRegion::XBelow(
                s.x0.ok_or_else(|| CliError::Config("stimulus.x0 required for kind = \"x_below\"".into()))?,
            ),
            "ball" => {
                let c = s
                    .center
                    .ok_or_else(|| CliError::Config("stimulus.center required for kind = \"ball\"".into()))?;
                let r = s
                    .radius
                    .ok_or_else(|| CliError::Config("stimulus.radius required for kind = \"ball\"".into()))?;
                StimulusRegion::Ball { center: Point::new(c[0], c[1], c[2]), radius: r }
            }
            "nodes" => {
                if s.nodes.is_empty() {
                    return Err(CliError::Config("stimulus.nodes must list node ids for kind = \"nodes\"".into()));
                }
                StimulusRegion::Nodes(s.nodes.clone())
            }
            other => {
                return Err(CliError::Config(format!(
                    "stimulus.kind must be x_below, ball or nodes, got {other:?}"
                )))
            }
        };
        Ok(Some(StimulusProtocol {
            region,
            amplitude: s.amplitude,
            start: s.start.unwrap_or(0.0),
            duration: s.duration,
            period: s.period.unwrap_or(1000.0),
            count: s.count.unwrap_or(1),
        }))
    }

    /// Lower the parsed file into a solver configuration. `base` resolves
    /// relative paths in the geometry section.
    pub fn lower(&self, base: &Path) -> Result<SimulationConfig<f64>, CliError> {
        let cloud = self.build_cloud(base)?;
        let solver = match self.solver.kind.as_str() {
            "mcm" => SolverKind::Mcm,
            "fem" => SolverKind::Fem,
            other => return Err(CliError::Config(format!("solver.kind must be mcm or fem, got {other:?}"))),
        };
        let initial = match self.solver.initial.as_deref() {
            None | Some("rest") => InitialCondition::Rest,
            Some("cosine_x") => InitialCondition::CosineX,
            Some(other) => {
                return Err(CliError::Config(format!(
                    "solver.initial must be rest or cosine_x, got {other:?}"
                )))
            }
        };
        let trial = self.trial(cloud.dim())?;
        let support = self.support()?;
        let model = self.base_model()?;
        let region_overrides = self.region_overrides(model)?;
        let stimulus = self.stimulus()?;
        Ok(SimulationConfig {
            cloud,
            solver,
            trial,
            support,
            d0: self.diffusion.d0,
            rho: self.diffusion.rho,
            scar_regions: self.diffusion.scar_regions.clone(),
            model,
            region_overrides,
            stimulus,
            reaction_substeps: self.ionic.reaction_substeps.unwrap_or(1),
            dt: self.time.dt,
            t_total: self.time.t_total,
            initial,
            snapshot_every: self.output.snapshot_every,
            probes: self.output.probes.iter().map(|p| Point::new(p[0], p[1], p[2])).collect(),
            lat_threshold: self.solver.lat_threshold,
            penalty_alpha: self.solver.penalty_alpha.unwrap_or(1e6),
        })
    }

    pub fn output_dir(&self, base: &Path) -> PathBuf {
        base.join(&self.output.dir)
    }
}

pub fn load_surface(path: &Path) -> Result<node_cloud::SurfaceMesh<f64>, CliError> {
    let file =
        File::open(path).map_err(|e| CliError::Config(format!("cannot open surface {}: {e}", path.display())))?;
    cloud_format::read_surface_mesh(BufReader::new(file)).map_err(|e| CliError::Config(e.to_string()))
}

fn apply_ms(mut p: MsParams<f64>, o: Option<MsOverride>) -> MsParams<f64> {
    if let Some(o) = o {
        if let Some(v) = o.tau_in {
            p.tau_in = v;
        }
        if let Some(v) = o.tau_out {
            p.tau_out = v;
        }
        if let Some(v) = o.tau_open {
            p.tau_open = v;
        }
        if let Some(v) = o.tau_close {
            p.tau_close = v;
        }
        if let Some(v) = o.v_gate {
            p.v_gate = v;
        }
    }
    p
}

fn apply_fhn(mut p: FhnParams<f64>, o: Option<FhnOverride>) -> FhnParams<f64> {
    if let Some(o) = o {
        if let Some(v) = o.a {
            p.a = v;
        }
        if let Some(v) = o.b {
            p.b = v;
        }
        if let Some(v) = o.c1 {
            p.c1 = v;
        }
        if let Some(v) = o.c2 {
            p.c2 = v;
        }
        if let Some(v) = o.d {
            p.d = v;
        }
    }
    p
}
