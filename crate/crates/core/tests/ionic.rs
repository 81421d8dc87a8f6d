//! Single-cell oracle test: the action potential duration from the solver's
//! reaction stepping at a coarse dt must match a hand-written fine-step
//! reference integration of the Mitchell–Schaeffer equations.

use mcm_core::ionic::{
    diastolic_threshold, react_step, CellStateField, IonicModel, MsParams, StimulusProtocol,
    StimulusRegion,
};
use mcm_core::node_cloud::generate_regular_grid;

/// Duration with V above 10% of the peak amplitude, i.e. the action
/// potential duration at 90% repolarization.
fn apd90(ts: &[f64], vs: &[f64]) -> f64 {
    let peak = vs.iter().cloned().fold(f64::MIN, f64::max);
    let thr = 0.1 * peak;
    let mut first = None;
    let mut last = 0.0;
    for (&t, &v) in ts.iter().zip(vs) {
        if v >= thr {
            first.get_or_insert(t);
            last = t;
        }
    }
    last - first.expect("no activation")
}

#[test]
fn ms_apd90_coarse_step_matches_fine_reference() {
    let params = MsParams::<f64>::default();
    let model = IonicModel::MitchellSchaeffer(params);
    let amp = 2.0 * diastolic_threshold(&model, 1.0).unwrap();
    let t_total = 500.0;

    // Reference: scalar forward-Euler integration of the model equations
    // written out by hand, dt = 0.001 ms.
    let fine = {
        let dt = 0.001;
        let steps = (t_total / dt) as usize;
        let mut v = 0.0f64;
        let mut h = 1.0f64;
        let mut ts = Vec::with_capacity(steps);
        let mut vs = Vec::with_capacity(steps);
        for s in 0..steps {
            let t = dt * s as f64;
            let mut dv = h * v * v * (1.0 - v) / params.tau_in - v / params.tau_out;
            if t < 1.0 {
                dv += amp;
            }
            let dh = if v < params.v_gate { (1.0 - h) / params.tau_open } else { -h / params.tau_close };
            v += dt * dv;
            h += dt * dh;
            ts.push(t + dt);
            vs.push(v);
        }
        apd90(&ts, &vs)
    };

    // Implementation path at dt = 0.1 ms through the field machinery.
    let coarse = {
        let cloud = generate_regular_grid(&[1.0, 1.0], 0.5, 2).unwrap();
        let mut field = CellStateField::at_rest(model, &cloud);
        let protocol = StimulusProtocol {
            region: StimulusRegion::XBelow(2.0),
            amplitude: amp,
            start: 0.0,
            duration: 1.0,
            period: 1000.0,
            count: 1,
        };
        let mask = protocol.node_mask(&cloud);
        let dt = 0.1;
        let steps = (t_total / dt) as usize;
        let mut ts = Vec::with_capacity(steps);
        let mut vs = Vec::with_capacity(steps);
        for s in 0..steps {
            react_step(&mut field, dt, 1, Some((&protocol, &mask)), dt * s as f64).unwrap();
            ts.push(dt * (s + 1) as f64);
            vs.push(field.v[0]);
        }
        apd90(&ts, &vs)
    };

    let rel = (coarse - fine).abs() / fine;
    assert!(
        rel <= 0.02,
        "APD90 mismatch: coarse {coarse:.3} ms vs fine {fine:.3} ms ({:.2}%)",
        rel * 100.0
    );
    // Physiological sanity for the published parameter set.
    assert!(fine > 100.0 && fine < 400.0, "APD90 {fine}");
}
