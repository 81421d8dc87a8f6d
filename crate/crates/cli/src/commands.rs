//! Implementations of the four subcommands.

use crate::config::{load_surface, ConfigFile};
use crate::CliError;
use mcm_core::approximants::{run_diagnostics, RbfParams, TrialKind};
use mcm_core::node_cloud::{build_support_knn, build_support_radius, format as cloud_format, immerse_grid};
use mcm_core::solver::{self, assemble_mcm_system, metrics, output as run_output, SolverKind};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

pub fn simulate(config_path: &Path, output_override: Option<&Path>, dump_matrices: bool) -> Result<(), CliError> {
    let cfg = ConfigFile::load(config_path)?;
    let base = config_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let sim = cfg.lower(&base)?;
    let out_dir = output_override.map(PathBuf::from).unwrap_or_else(|| cfg.output_dir(&base));

    println!(
        "cloud: {} nodes (dim {}), h = {} cm",
        sim.cloud.len(),
        sim.cloud.dim(),
        sim.cloud.h()
    );
    let n_steps = (sim.t_total / sim.dt).round() as usize;
    println!("solver: {}, dt = {} ms, {} steps", cfg.solver.kind, sim.dt, n_steps);

    let result = solver::run(&sim)?;
    if sim.dt > result.dt_max {
        eprintln!(
            "warning: dt = {} ms exceeds the explicit stability bound {:.6} ms",
            sim.dt, result.dt_max
        );
    }
    result.write_to(&out_dir, &sim.cloud)?;
    std::fs::write(out_dir.join("config_used.toml"), cfg.to_toml()).map_err(|e| CliError::Io(e.to_string()))?;
    if dump_matrices {
        if sim.solver != SolverKind::Mcm {
            return Err(CliError::Config("--dump-matrices applies to the mcm solver only".into()));
        }
        let sys = assemble_mcm_system(&sim)?;
        for (name, m) in [("m", &sys.m), ("k_a", &sys.k_a), ("k_s", &sys.k_s), ("k_prime", &sys.k_prime)] {
            let path = out_dir.join(format!("{name}.coo"));
            let mut w = BufWriter::new(File::create(&path).map_err(|e| CliError::Io(e.to_string()))?);
            m.write_coo(&mut w).map_err(|e| CliError::Io(e.to_string()))?;
        }
        println!("operators dumped in coordinate format");
    }
    println!("stability bound: dt_max = {:.6} ms", result.dt_max);
    println!("setup (supports + trial functions + assembly): {:.3} s", result.setup_seconds);
    println!("time loop ({n_steps} steps): {:.3} s", result.loop_seconds);
    println!("outputs written to {}", out_dir.display());
    Ok(())
}

pub fn immerse(surface: &Path, spacing: f64, output: &Path) -> Result<(), CliError> {
    let mesh = load_surface(surface)?;
    println!("surface: {} vertices, {} triangles", mesh.n_vertices(), mesh.n_triangles());
    println!("suggested spacing (2x mean triangle perimeter): {:.6} cm", mesh.suggested_spacing());
    let cloud = immerse_grid(&mesh, spacing).map_err(|e| CliError::Config(e.to_string()))?;
    let interior = (0..cloud.len()).filter(|&i| !cloud.is_boundary(i)).count();
    println!(
        "immersed cloud at spacing {} cm: {} interior + {} surface = {} nodes",
        spacing,
        interior,
        cloud.len() - interior,
        cloud.len()
    );
    let mut w = BufWriter::new(File::create(output).map_err(|e| CliError::Io(e.to_string()))?);
    cloud_format::write_cloud(&cloud, &mut w).map_err(|e| CliError::Io(e.to_string()))?;
    println!("cloud written to {}", output.display());
    Ok(())
}

fn load_run_cloud(dir: &Path) -> Result<mcm_core::Cloud, CliError> {
    let path = dir.join("cloud.txt");
    let file = File::open(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    cloud_format::read_cloud(BufReader::new(file), None).map_err(|e| CliError::Config(e.to_string()))
}

fn final_snapshot(dir: &Path) -> Result<(usize, Vec<f64>), CliError> {
    let mut best: Option<(usize, PathBuf)> = None;
    for entry in std::fs::read_dir(dir).map_err(|e| CliError::Io(e.to_string()))? {
        let entry = entry.map_err(|e| CliError::Io(e.to_string()))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(step) = name.strip_prefix("snapshot_").and_then(|s| s.strip_suffix(".vtk")) {
            if let Ok(step) = step.parse::<usize>() {
                if best.as_ref().map(|(b, _)| step > *b).unwrap_or(true) {
                    best = Some((step, entry.path()));
                }
            }
        }
    }
    let (step, path) = best.ok_or_else(|| CliError::Config(format!("no snapshots in {}", dir.display())))?;
    let (_, values) = run_output::read_snapshot(&path)?;
    Ok((step, values))
}

pub fn compare(dir_a: &Path, dir_b: &Path) -> Result<(), CliError> {
    let cloud_a = load_run_cloud(dir_a)?;
    let cloud_b = load_run_cloud(dir_b)?;
    if cloud_a.len() != cloud_b.len() {
        return Err(CliError::Config(format!(
            "clouds differ: {} vs {} nodes",
            cloud_a.len(),
            cloud_b.len()
        )));
    }
    for i in 0..cloud_a.len() {
        if cloud_a.point(i) != cloud_b.point(i) {
            return Err(CliError::Config(format!("clouds differ at node {i}")));
        }
    }
    println!("clouds match: {} nodes", cloud_a.len());

    let (step_a, snap_a) = final_snapshot(dir_a)?;
    let (step_b, snap_b) = final_snapshot(dir_b)?;
    if step_a != step_b {
        println!("note: final snapshots at different steps ({step_a} vs {step_b})");
    }
    let nrms = metrics::nrms(&snap_a, &snap_b)?;
    println!("final snapshot NRMS (B as reference): {nrms}");

    let (t_a, traces_a) = run_output::read_traces(&dir_a.join("traces.csv"))?;
    let (t_b, traces_b) = run_output::read_traces(&dir_b.join("traces.csv"))?;
    if t_a != t_b {
        return Err(CliError::Config("trace time grids differ".into()));
    }
    if traces_a.len() != traces_b.len() {
        return Err(CliError::Config("probe counts differ".into()));
    }
    for (k, (a, b)) in traces_a.iter().zip(&traces_b).enumerate() {
        println!("TPD probe{k}: {}", metrics::tpd(a, b)?);
    }

    let lat_a = run_output::read_lat(&dir_a.join("lat.txt"))?;
    let lat_b = run_output::read_lat(&dir_b.join("lat.txt"))?;
    for (label, keep_boundary) in [("interior", false), ("boundary", true)] {
        let mean = |rows: &[(mcm_core::Point<f64>, bool, Option<f64>)]| -> Option<f64> {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|(_, b, t)| *b == keep_boundary && t.is_some())
                .map(|(_, _, t)| t.unwrap())
                .collect();
            if vals.is_empty() {
                None
            } else {
                Some(vals.iter().sum::<f64>() / vals.len() as f64)
            }
        };
        let fmt = |m: Option<f64>| m.map(|v| format!("{v:.4} ms")).unwrap_or_else(|| "n/a".into());
        println!("mean LAT {label}: A = {}, B = {}", fmt(mean(&lat_a)), fmt(mean(&lat_b)));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn shapecheck(
    cloud_path: &Path,
    trial: &str,
    alpha_c: f64,
    q: Option<f64>,
    nugget: f64,
    support: &str,
    alpha_sd: f64,
    k: usize,
    h: Option<f64>,
) -> Result<(), CliError> {
    let file = File::open(cloud_path).map_err(|e| CliError::Io(format!("{}: {e}", cloud_path.display())))?;
    let cloud = cloud_format::read_cloud(BufReader::new(file), h).map_err(|e| CliError::Config(e.to_string()))?;
    let kind = match trial {
        "rpi" => TrialKind::Rpi,
        "mki" => TrialKind::Mki,
        other => return Err(CliError::Config(format!("--trial must be rpi or mki, got {other:?}"))),
    };
    let mut params = RbfParams::defaults_for_dim(kind, cloud.dim());
    params.alpha_c = alpha_c;
    params.nugget = nugget;
    if let Some(q) = q {
        params.q_exp = q;
    }
    params.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let table = match support {
        "radius" => build_support_radius(&cloud, alpha_sd).map_err(|e| CliError::Config(e.to_string()))?,
        "knn" => build_support_knn(&cloud, k).map_err(|e| CliError::Config(e.to_string()))?,
        other => return Err(CliError::Config(format!("--support must be radius or knn, got {other:?}"))),
    };
    println!(
        "cloud: {} nodes (dim {}), h = {} cm; trial: {trial} (alpha_c = {}, q = {}), supports: {support}",
        cloud.len(),
        cloud.dim(),
        cloud.h(),
        params.alpha_c,
        params.q_exp
    );
    let diag = run_diagnostics(&cloud, &table, &params);
    let checks = [
        ("partition of unity", diag.max_partition_error, 1e-9),
        ("kronecker delta", diag.max_delta_error, 1e-8),
        ("gradient vs finite differences", diag.max_gradient_fd_error, 1e-5),
        ("affine reproduction", diag.max_affine_error, 1e-9),
        ("gradient partition (scaled by h)", diag.max_gradient_partition, 1e-7),
    ];
    let mut all_ok = diag.failed_nodes.is_empty();
    for (name, value, tol) in checks {
        let ok = value <= tol;
        all_ok &= ok;
        println!("{name}: max error {value:.3e} (tolerance {tol:.0e}) {}", if ok { "PASS" } else { "FAIL" });
    }
    println!("worst condition estimate: {:.3e}", diag.worst_condition);
    if !diag.failed_nodes.is_empty() {
        println!("{} nodes failed to factorize:", diag.failed_nodes.len());
        for (node, why) in diag.failed_nodes.iter().take(10) {
            println!("  node {node}: {why}");
        }
        if diag.failed_nodes.len() > 10 {
            println!("  ... and {} more", diag.failed_nodes.len() - 10);
        }
    }
    if all_ok {
        println!("all checks passed");
        Ok(())
    } else {
        Err(CliError::Numerical("shape-function invariants violated; see report above".into()))
    }
}
