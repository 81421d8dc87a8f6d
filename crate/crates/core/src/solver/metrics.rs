//! Comparison metrics: NRMS, TPD and local activation time maps.

use crate::scalar::Real;
use super::SolverError;

/// Root-mean-square difference normalized by the range of the reference
/// field: `NRMS = rms(a - b) / (max b - min b)`.
pub fn nrms<T: Real>(v_a: &[T], v_b: &[T]) -> Result<T, SolverError> {
    if v_a.len() != v_b.len() {
        return Err(SolverError::MetricInput(format!(
            "NRMS needs equal lengths, got {} and {}",
            v_a.len(),
            v_b.len()
        )));
    }
    if v_a.len() < 2 {
        return Err(SolverError::MetricInput("NRMS needs at least 2 samples".into()));
    }
    let mut lo = v_b[0];
    let mut hi = v_b[0];
    let mut sum2 = T::zero();
    for (&a, &b) in v_a.iter().zip(v_b) {
        if b < lo {
            lo = b;
        }
        if b > hi {
            hi = b;
        }
        let d = a - b;
        sum2 += d * d;
    }
    let range = hi - lo;
    if range <= T::zero() {
        return Err(SolverError::MetricInput("NRMS reference field is constant (zero range)".into()));
    }
    Ok((sum2 / T::of_usize(v_a.len())).sqrt() / range)
}

/// Mean absolute difference between two traces on the same time grid.
pub fn tpd<T: Real>(trace_a: &[T], trace_b: &[T]) -> Result<T, SolverError> {
    if trace_a.len() != trace_b.len() {
        return Err(SolverError::MetricInput(format!(
            "TPD needs aligned traces, got {} and {} samples",
            trace_a.len(),
            trace_b.len()
        )));
    }
    if trace_a.is_empty() {
        return Err(SolverError::MetricInput("TPD needs at least one sample".into()));
    }
    let sum: T = trace_a.iter().zip(trace_b).map(|(&a, &b)| (a - b).abs()).sum();
    Ok(sum / T::of_usize(trace_a.len()))
}

/// Per-node first activation times; `None` means the node never crossed the
/// threshold.
#[derive(Clone, Debug)]
pub struct LatMap<T> {
    pub threshold: T,
    pub times: Vec<Option<T>>,
}

impl<T: Real> LatMap<T> {
    pub fn mean_over(&self, mask: impl Fn(usize) -> bool) -> Option<T> {
        let mut sum = T::zero();
        let mut count = 0usize;
        for (i, t) in self.times.iter().enumerate() {
            if let Some(t) = t {
                if mask(i) {
                    sum += *t;
                    count += 1;
                }
            }
        }
        if count == 0 {
            None
        } else {
            Some(sum / T::of_usize(count))
        }
    }
}

/// Streaming first-upward-crossing detector with linear interpolation
/// between steps, so full potential histories never need to be stored.
pub struct LatTracker<T> {
    threshold: T,
    times: Vec<Option<T>>,
}

impl<T: Real> LatTracker<T> {
    /// Initialize from the state at `t = 0`; nodes already at or above the
    /// threshold activate at time zero.
    pub fn new(threshold: T, v0: &[T]) -> Self {
        let times = v0.iter().map(|&v| if v >= threshold { Some(T::zero()) } else { None }).collect();
        LatTracker { threshold, times }
    }

    /// Record a step from `t_prev` to `t_prev + dt`.
    pub fn observe<'a>(&mut self, t_prev: T, dt: T, v_prev: &'a [T], v_new: &'a [T]) {
        for (i, (&a, &b)) in v_prev.iter().zip(v_new).enumerate() {
            if self.times[i].is_some() {
                continue;
            }
            if a < self.threshold && b >= self.threshold {
                let frac = (self.threshold - a) / (b - a);
                self.times[i] = Some(t_prev + dt * frac);
            }
        }
    }

    pub fn finish(self) -> LatMap<T> {
        LatMap { threshold: self.threshold, times: self.times }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn nrms_of_identical_fields_is_zero() {
        let v = vec![0.5, 1.0, -0.75, 2.0];
        assert_eq!(nrms(&v, &v).unwrap(), 0.0);
    }

    #[test]
    fn nrms_of_constant_offset_is_offset_over_range() {
        let b = vec![0.0, 1.0, 2.0, 4.0];
        let c = 0.6;
        let a: Vec<f64> = b.iter().map(|x| x + c).collect();
        assert_abs_diff_eq!(nrms(&a, &b).unwrap(), c / 4.0, epsilon = 1e-15);
    }

    #[test]
    fn nrms_matches_direct_formula_on_random_pair() {
        let a = vec![0.21, -0.37, 1.44, 0.08, -1.91];
        let b = vec![0.33, 0.12, 1.02, -0.55, -1.13];
        // Direct recomputation of the formula.
        let n = a.len() as f64;
        let rms = (a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n).sqrt();
        let range = 1.02 - (-1.13);
        assert_abs_diff_eq!(nrms(&a, &b).unwrap(), rms / range, epsilon = 1e-15);
    }

    #[test]
    fn nrms_rejects_constant_reference() {
        let a = vec![1.0, 2.0];
        let b = vec![3.0, 3.0];
        assert!(nrms(&a, &b).is_err());
    }

    #[test]
    fn tpd_spot_values() {
        let a = vec![1.0, 2.0, 3.0];
        assert_eq!(tpd(&a, &a).unwrap(), 0.0);
        let b: Vec<f64> = a.iter().map(|x| x + 1.0).collect();
        assert_eq!(tpd(&b, &a).unwrap(), 1.0);
        assert!(tpd(&a, &[1.0]).is_err());
    }

    #[test]
    fn tpd_matches_direct_recomputation() {
        let a: Vec<f64> = vec![0.0, 0.9, 0.75, 0.4, 0.1];
        let b = vec![0.05, 0.7, 0.9, 0.35, 0.2];
        let direct = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / 5.0;
        assert_abs_diff_eq!(tpd(&a, &b).unwrap(), direct, epsilon = 1e-15);
    }

    #[test]
    fn lat_interpolates_crossing_time() {
        let mut tracker = LatTracker::new(0.5, &[0.0, 0.6]);
        // Node 1 starts above threshold: activation at t = 0.
        tracker.observe(0.0, 0.1, &[0.0, 0.6], &[0.25, 0.7]);
        tracker.observe(0.1, 0.1, &[0.25, 0.7], &[1.0, 0.8]);
        let lat = tracker.finish();
        let t0 = lat.times[0].unwrap();
        assert!(t0 > 0.1 && t0 < 0.2, "t0 = {t0}");
        assert_abs_diff_eq!(t0, 0.1 + 0.1 * (0.5 - 0.25) / 0.75, epsilon = 1e-15);
        assert_eq!(lat.times[1], Some(0.0));
    }

    #[test]
    fn lat_never_is_none_and_mean_respects_masks() {
        let mut tracker = LatTracker::new(0.5_f64, &[0.0, 0.0]);
        tracker.observe(0.0, 1.0, &[0.0, 0.0], &[0.1, 1.0]);
        let lat = tracker.finish();
        assert_eq!(lat.times[0], None);
        assert!(lat.times[1].is_some());
        assert!(lat.mean_over(|i| i == 0).is_none());
        assert_abs_diff_eq!(lat.mean_over(|_| true).unwrap(), 0.5, epsilon = 1e-15);
    }
}
