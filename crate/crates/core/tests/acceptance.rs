//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line with the measured values.
//!
//! Criterion 4 (support-dilation NRMS trend) is asserted exactly as stated
//! and is expected to fail on this configuration; the mechanism analysis
//! lives with the test. Everything else is expected green.

use mcm_core::approximants::{run_diagnostics, RbfParams, TrialKind};
use mcm_core::ionic::{IonicModel, MsParams, StimulusProtocol, StimulusRegion};
use mcm_core::node_cloud::{
    build_support_radius, generate_regular_grid, immerse_grid, SurfaceMesh,
};
use mcm_core::solver::{
    fem_reference_run, metrics::nrms, metrics::tpd, run_simulation, InitialCondition,
    SimulationConfig, SolverKind, SupportSpec,
};
use mcm_core::{Cloud, Config, Point};
use std::f64::consts::PI;
use std::time::Instant;

/// Frozen single-cell Mitchell–Schaeffer diastolic threshold for a 1 ms
/// pulse (bisection oracle; see the ionic unit tests).
const MS_THRESHOLD: f64 = 0.053_882_598_876_953_125;

fn base_config(cloud: Cloud) -> Config {
    SimulationConfig {
        cloud,
        solver: SolverKind::Mcm,
        trial: RbfParams::defaults_2d(TrialKind::Rpi),
        support: SupportSpec::Radius { alpha_sd: 2.8 },
        d0: 0.0013,
        rho: 0.2,
        scar_regions: vec![],
        model: IonicModel::MitchellSchaeffer(MsParams::default()),
        region_overrides: vec![],
        stimulus: None,
        reaction_substeps: 1,
        dt: 0.05,
        t_total: 10.0,
        initial: InitialCondition::Rest,
        snapshot_every: None,
        probes: vec![],
        lat_threshold: None,
        penalty_alpha: 1e6,
    }
}

fn left_stimulus() -> StimulusProtocol<f64> {
    // Ten single-cell thresholds over a two-node-deep face for 2 ms: the
    // paper's 2x threshold does not ignite tissue through the splitting at
    // these spacings (diffusive loading absorbs the pulse).
    StimulusProtocol {
        region: StimulusRegion::XBelow(0.11),
        amplitude: 10.0 * MS_THRESHOLD,
        start: 0.0,
        duration: 2.0,
        period: 1000.0,
        count: 1,
    }
}

#[test]
fn criterion_1_approximant_suite() {
    let start = Instant::now();
    // Support dilation 2.25 (a member of the production sweep): all four
    // tolerances hold there with margin; larger dilations push the pinned
    // 1e-6*h finite-difference step below the f64 evaluation-noise floor.
    let alpha_sd = 2.25;
    let grid_2d = generate_regular_grid(&[1.0, 1.0], 0.04, 2).unwrap();
    let grid_3d = generate_regular_grid(&[1.0, 1.0, 1.0], 0.125, 3).unwrap();
    let mut jittered = generate_regular_grid(&[1.0, 1.0], 0.03125, 2).unwrap();
    jittered.jitter_interior(0.2, 12345);
    assert!(jittered.len() >= 1000);

    let mut worst: Vec<(String, f64, f64, f64, f64)> = Vec::new();
    for (name, cloud) in [("2d grid", &grid_2d), ("3d grid", &grid_3d), ("jittered", &jittered)] {
        let supports = build_support_radius(cloud, alpha_sd).unwrap();
        for kind in [TrialKind::Rpi, TrialKind::Mki] {
            let params = RbfParams::defaults_for_dim(kind, cloud.dim());
            let d = run_diagnostics(cloud, &supports, &params);
            assert!(d.failed_nodes.is_empty(), "{name} {kind:?}: {:?}", d.failed_nodes.first());
            assert!(d.max_partition_error <= 1e-9, "{name} {kind:?} PoU {}", d.max_partition_error);
            assert!(d.max_delta_error <= 1e-8, "{name} {kind:?} delta {}", d.max_delta_error);
            assert!(d.max_affine_error <= 1e-9, "{name} {kind:?} affine {}", d.max_affine_error);
            assert!(
                d.max_gradient_fd_error <= 1e-5,
                "{name} {kind:?} grad-vs-FD {}",
                d.max_gradient_fd_error
            );
            worst.push((
                format!("{name}/{kind:?}"),
                d.max_partition_error,
                d.max_delta_error,
                d.max_affine_error,
                d.max_gradient_fd_error,
            ));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "criterion 1 runtime {elapsed:.1}s");
    let max = |i: usize| worst.iter().map(|w| match i {
        1 => w.1,
        2 => w.2,
        3 => w.3,
        _ => w.4,
    }).fold(0.0f64, f64::max);
    println!(
        "criterion 1 (approximant suite): PASS — PoU {:.1e} <= 1e-9, delta {:.1e} <= 1e-8, affine {:.1e} <= 1e-9, grad-FD {:.1e} <= 1e-5, {:.1}s",
        max(1), max(2), max(3), max(4), elapsed
    );
}

#[test]
fn criterion_2_operator_suite() {
    // M = identity, K' annihilates constants, and the sign convention is
    // dissipative: the slowest cosine mode decays at its analytic rate.
    let mut cfg = base_config(generate_regular_grid(&[1.0, 1.0], 0.05, 2).unwrap());
    cfg.d0 = 0.001;
    cfg.rho = 1.0;
    let sys = mcm_core::solver::assemble_mcm_system(&cfg).unwrap();
    let n = cfg.cloud.len();
    let mut max_m_err = 0.0f64;
    for i in 0..n {
        let (cols, vals) = sys.m.row(i);
        for (&c, &v) in cols.iter().zip(vals) {
            let want = if c as usize == i { 1.0 } else { 0.0 };
            max_m_err = max_m_err.max((v - want).abs());
        }
    }
    assert!(max_m_err <= 1e-8, "M identity error {max_m_err}");
    let mut max_row_rel = 0.0f64;
    for i in 0..n {
        let (_, vals) = sys.k_prime.row(i);
        let sum: f64 = vals.iter().sum();
        let norm: f64 = vals.iter().map(|v| v.abs()).sum();
        if norm > 0.0 {
            max_row_rel = max_row_rel.max(sum.abs() / norm);
        }
    }
    assert!(max_row_rel <= 1e-8, "K' row sum relative error {max_row_rel}");

    cfg.model = IonicModel::Passive;
    cfg.initial = InitialCondition::CosineX;
    cfg.t_total = 20.0;
    let out = run_simulation(&cfg).unwrap();
    let factor = (-0.001 * PI * PI * 20.0).exp();
    let corner = out.final_v[0]; // node at x = 0 where cos(pi x) = 1
    assert!(corner > 0.0 && corner < 1.0, "cosine mode must decay, got {corner}");
    assert!(
        (corner - factor).abs() <= 0.05 * factor,
        "decay factor {corner:.4} vs analytic {factor:.4}"
    );
    println!(
        "criterion 2 (operator suite): PASS — |M-I| {max_m_err:.1e} <= 1e-8, K' row sums {max_row_rel:.1e} <= 1e-8, cosine decay {corner:.4} vs {factor:.4}"
    );
}

fn criterion3_config(kind: TrialKind, solver: SolverKind) -> Config {
    let mut cfg = base_config(generate_regular_grid(&[1.0, 1.0], 0.02, 2).unwrap());
    cfg.solver = solver;
    cfg.trial = RbfParams::defaults_2d(kind);
    cfg.d0 = 0.001;
    cfg.rho = 1.0;
    cfg.model = IonicModel::Passive;
    cfg.initial = InitialCondition::CosineX;
    cfg.dt = 0.05;
    cfg.t_total = 100.0;
    cfg
}

#[test]
fn criterion_3_analytic_diffusion() {
    let exact: Vec<f64> = {
        let cloud = generate_regular_grid(&[1.0, 1.0], 0.02, 2).unwrap();
        let factor = (-0.001 * PI * PI * 100.0).exp();
        cloud.points().iter().map(|p| (PI * p.x).cos() * factor).collect()
    };
    let mut report = String::new();
    for (label, kind, solver) in [
        ("MCM-RPI", TrialKind::Rpi, SolverKind::Mcm),
        ("MCM-MKI", TrialKind::Mki, SolverKind::Mcm),
        ("FEM", TrialKind::Rpi, SolverKind::Fem),
    ] {
        let start = Instant::now();
        let cfg = criterion3_config(kind, solver);
        let out = match solver {
            SolverKind::Mcm => run_simulation(&cfg).unwrap(),
            SolverKind::Fem => fem_reference_run(&cfg).unwrap(),
        };
        let err = nrms(&out.final_v, &exact).unwrap();
        let elapsed = start.elapsed().as_secs_f64();
        assert!(err <= 0.02, "{label}: NRMS {err} vs closed form");
        assert!(elapsed < 60.0, "{label}: runtime {elapsed:.1}s");
        report.push_str(&format!("{label} {err:.2e} "));
    }
    println!("criterion 3 (analytic diffusion): PASS — NRMS vs closed form {report}<= 0.02");
}

fn criterion4_config(kind: TrialKind, alpha_sd: f64, solver: SolverKind) -> Config {
    let mut cfg = base_config(generate_regular_grid(&[1.0, 1.0, 1.0], 0.05, 3).unwrap());
    cfg.solver = solver;
    // alpha_c = 0.6 keeps the assembled operator dissipative across the
    // whole dilation sweep; at the 2D-paper value 1.03 several sweep members
    // carry boundary-localized modes with negative eigenvalues and the
    // explicit run diverges (see the decisions ledger).
    cfg.trial = RbfParams { kind, alpha_c: 0.6, q_exp: 1.82, nugget: 0.0 };
    cfg.support = SupportSpec::Radius { alpha_sd };
    cfg.stimulus = Some(left_stimulus());
    cfg.dt = 0.05;
    cfg.t_total = 15.0;
    cfg
}

#[test]
fn criterion_4_support_dilation_trend() {
    // Scaled reproduction of the support-dilation convergence figure:
    // NRMS(MCM vs FEM, final snapshot) over alpha_sd in {2.25 .. 3.50} must
    // be monotonically non-increasing with a 2x overall drop.
    //
    // This criterion is asserted exactly as stated and is EXPECTED TO FAIL
    // with the two-variable substitute cell model: the original trend is
    // driven by the stiff human-ventricular upstroke interacting with
    // support size at 61^3 scale. With the gentler front here, collocation
    // and FEM front positions agree to about one node at every dilation, so
    // the final-snapshot NRMS is quantized by whole-node front offsets and
    // is flat across the sweep instead of falling 2x. The sweep table is
    // printed for inspection; the full configuration study is in the
    // decisions ledger.
    let start = Instant::now();
    let sweep = [2.25, 2.5, 2.75, 3.0, 3.25, 3.5];
    let fem = fem_reference_run(&criterion4_config(TrialKind::Rpi, 2.8, SolverKind::Fem)).unwrap();
    let mut all_ok = true;
    for kind in [TrialKind::Rpi, TrialKind::Mki] {
        let mut series = Vec::new();
        for &alpha_sd in &sweep {
            let out = run_simulation(&criterion4_config(kind, alpha_sd, SolverKind::Mcm)).unwrap();
            series.push(nrms(&out.final_v, &fem.final_v).unwrap());
        }
        let monotone = series.windows(2).all(|w| w[1] <= w[0]);
        let halved = series[series.len() - 1] <= 0.5 * series[0];
        let ok = monotone && halved;
        all_ok &= ok;
        println!(
            "criterion 4 ({kind:?} dilation sweep): {} — NRMS {:?}, monotone: {monotone}, final <= 0.5*initial: {halved}",
            if ok { "PASS" } else { "FAIL" },
            series.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>()
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 1200.0, "criterion 4 runtime {elapsed:.0}s");
    assert!(
        all_ok,
        "criterion 4: the dilation sweep is not monotonically non-increasing with a 2x drop at desk scale (expected red; see ledger)"
    );
}

fn criterion5_config(h: f64, solver: SolverKind) -> Config {
    let mut cfg = base_config(generate_regular_grid(&[2.0, 2.0], h, 2).unwrap());
    cfg.solver = solver;
    cfg.stimulus = Some(left_stimulus());
    cfg.dt = 0.05;
    cfg.t_total = 45.0;
    cfg.probes = vec![Point::xy(1.0, 1.0)];
    cfg
}

#[test]
fn criterion_5_refinement_trend() {
    let start = Instant::now();
    let mut tpds = Vec::new();
    for h in [0.1, 0.05, 0.025] {
        let mcm = run_simulation(&criterion5_config(h, SolverKind::Mcm)).unwrap();
        let fem = fem_reference_run(&criterion5_config(h, SolverKind::Fem)).unwrap();
        tpds.push(tpd(&mcm.probe_traces[0], &fem.probe_traces[0]).unwrap());
    }
    let elapsed = start.elapsed().as_secs_f64();
    // Trend as stated: the center-probe TPD decreases from the coarsest to
    // the finest spacing. (The paper's own TPD sequence is not monotone in
    // between, and neither is ours guaranteed to be.)
    assert!(
        tpds[2] < tpds[0],
        "TPD must decrease from h=0.1 ({:.4}) to h=0.025 ({:.4})",
        tpds[0],
        tpds[2]
    );
    assert!(elapsed < 900.0, "criterion 5 runtime {elapsed:.0}s");
    println!(
        "criterion 5 (refinement trend): PASS — TPD {:.4} (h=0.1) -> {:.4} (h=0.05) -> {:.4} (h=0.025), {elapsed:.0}s",
        tpds[0], tpds[1], tpds[2]
    );
}

#[test]
fn criterion_6_anisotropy_ratio() {
    // Fiber along x with rho = 0.2: rescaling by sqrt(D) makes the
    // monodomain equation isotropic, so the activation contour is an
    // ellipse with axis ratio sqrt(1/rho) = sqrt(5) at every time.
    let h = 0.02;
    let center = Point::xy(1.5, 0.8);
    let mut cfg = base_config(generate_regular_grid(&[3.0, 1.6], h, 2).unwrap());
    cfg.stimulus = Some(StimulusProtocol {
        region: StimulusRegion::Ball { center, radius: 0.05 },
        amplitude: 10.0 * MS_THRESHOLD,
        start: 0.0,
        duration: 2.0,
        period: 1000.0,
        count: 1,
    });
    cfg.dt = 0.02;
    cfg.t_total = 30.0;
    let out = run_simulation(&cfg).unwrap();
    let cloud = &cfg.cloud;
    let t_iso = 24.0;
    // Interpolated contour crossing along a ray of lattice nodes.
    let crossing = |pts: &mut Vec<(f64, Option<f64>)>| -> f64 {
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut best = 0.0;
        for w in pts.windows(2) {
            if let (Some(a), Some(b)) = (w[0].1, w[1].1) {
                if a <= t_iso && b > t_iso {
                    best = w[0].0 + (t_iso - a) / (b - a) * (w[1].0 - w[0].0);
                }
            }
        }
        best
    };
    let mut half_axes = [0.0f64; 4];
    for (k, (axis, sign)) in [(0usize, 1.0f64), (0, -1.0), (1, 1.0), (1, -1.0)].iter().enumerate() {
        let mut ray: Vec<(f64, Option<f64>)> = (0..cloud.len())
            .filter(|&i| {
                let p = cloud.point(i);
                let along = (p.coord(*axis) - center.coord(*axis)) * sign;
                let perp = if *axis == 0 { p.y - center.y } else { p.x - center.x };
                perp.abs() < 1e-12 && along >= 0.0
            })
            .map(|i| {
                let p = cloud.point(i);
                ((p.coord(*axis) - center.coord(*axis)) * sign, out.lat.times[i])
            })
            .collect();
        half_axes[k] = crossing(&mut ray);
    }
    let a = 0.5 * (half_axes[0] + half_axes[1]);
    let b = 0.5 * (half_axes[2] + half_axes[3]);
    assert!(a > 0.5 && b > 0.2, "contour too small: a={a}, b={b}");
    let ratio = a / b;
    let want = 5.0f64.sqrt();
    assert!(
        (ratio - want).abs() <= 0.1 * want,
        "axis ratio {ratio:.4} vs sqrt(5) = {want:.4}"
    );
    println!(
        "criterion 6 (anisotropy): PASS — LAT contour semi-axes {a:.3} / {b:.3} cm, ratio {ratio:.4} = sqrt(5) ± {:.1}%",
        (ratio / want - 1.0).abs() * 100.0
    );
}

#[test]
fn criterion_7_immersed_grid() {
    // Interior nodes of an immersed cloud must all pass containment.
    let sphere = SurfaceMesh::icosphere(1.0, 2);
    let cloud = immerse_grid(&sphere, 0.1).unwrap();
    let mut interior = 0;
    for i in 0..cloud.len() {
        if !cloud.is_boundary(i) {
            interior += 1;
            assert!(sphere.contains(cloud.point(i)), "interior node {i} fails containment");
        }
    }
    assert!(interior > 100);

    // Containment fraction on a cell-centered 12^3 sample of the bounding
    // cube matches the ball volume fraction pi/6 within 5% relative. The
    // count is frozen against the convex half-space oracle (see the mesh
    // unit tests).
    let n = 12;
    let mut inside = 0usize;
    for iz in 0..n {
        for iy in 0..n {
            for ix in 0..n {
                let p = Point::new(
                    -1.0 + (ix as f64 + 0.5) * 2.0 / n as f64,
                    -1.0 + (iy as f64 + 0.5) * 2.0 / n as f64,
                    -1.0 + (iz as f64 + 0.5) * 2.0 / n as f64,
                );
                if sphere.contains(&p) {
                    inside += 1;
                }
            }
        }
    }
    assert_eq!(inside, 912);
    let fraction = inside as f64 / (n * n * n) as f64;
    let want = PI / 6.0;
    let rel = (fraction - want).abs() / want;
    assert!(rel <= 0.05, "fraction {fraction:.4} vs pi/6 {want:.4} ({:.1}% off)", rel * 100.0);
    println!(
        "criterion 7 (immersed grid): PASS — {interior} interior nodes all contained; volume fraction {fraction:.4} vs pi/6 = {want:.4} ({:.1}% relative)",
        rel * 100.0
    );
}

#[test]
fn criterion_8_determinism() {
    // Repeated runs of the criteria 3-5 configurations must produce
    // byte-identical output files.
    let base = std::env::temp_dir().join("mcm_acceptance_determinism");
    let _ = std::fs::remove_dir_all(&base);
    let mut checked_files = 0usize;
    let mut run_pair = |label: &str, cfg: &Config| {
        let dirs = [base.join(format!("{label}_a")), base.join(format!("{label}_b"))];
        for dir in &dirs {
            let out = match cfg.solver {
                SolverKind::Mcm => run_simulation(cfg).unwrap(),
                SolverKind::Fem => fem_reference_run(cfg).unwrap(),
            };
            out.write_to(dir, &cfg.cloud).unwrap();
        }
        let mut names: Vec<String> = std::fs::read_dir(&dirs[0])
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        assert!(!names.is_empty());
        for name in names {
            let a = std::fs::read(dirs[0].join(&name)).unwrap();
            let b = std::fs::read(dirs[1].join(&name)).unwrap();
            assert_eq!(a, b, "{label}/{name} differs between identical runs");
            checked_files += 1;
        }
    };
    let mut c3 = criterion3_config(TrialKind::Rpi, SolverKind::Mcm);
    c3.snapshot_every = Some(50.0);
    c3.probes = vec![Point::xy(0.5, 0.5)];
    run_pair("c3", &c3);
    let mut c4 = criterion4_config(TrialKind::Mki, 2.25, SolverKind::Mcm);
    c4.snapshot_every = Some(10.0);
    c4.probes = vec![Point::new(0.5, 0.5, 0.5)];
    run_pair("c4", &c4);
    let mut c5 = criterion5_config(0.05, SolverKind::Mcm);
    c5.snapshot_every = Some(20.0);
    run_pair("c5", &c5);
    println!("criterion 8 (determinism): PASS — {checked_files} output files byte-identical across repeated runs");
}
