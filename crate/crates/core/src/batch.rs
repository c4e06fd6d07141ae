//! Many independent runs at once: scenario batches, measurement-noise
//! Monte Carlo sweeps and bulk wrench evaluation.
//!
//! With the `parallel` feature the work is spread over the rayon pool;
//! without it everything runs on the calling thread. Results are returned in
//! input order either way, and every run is a pure function of its input, so
//! both paths produce identical output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::airframe::{frame_wrench, AirframeConfig, AirframeError, Frame, FrameWrench};
use crate::dynamics::Vec2;
use crate::geometry::EulerAngles;
use crate::sim::{run_scenario, RunOutput, ScenarioConfig, SimError, TrackingMetrics};

pub type RunResult = Result<RunOutput, SimError>;

pub fn run_batch_sequential(scenarios: &[ScenarioConfig]) -> Vec<RunResult> {
    scenarios.iter().map(run_scenario).collect()
}

#[cfg(feature = "parallel")]
pub fn run_batch_parallel(scenarios: &[ScenarioConfig]) -> Vec<RunResult> {
    scenarios.par_iter().map(run_scenario).collect()
}

/// Runs every scenario, in parallel when the `parallel` feature is on.
pub fn run_batch(scenarios: &[ScenarioConfig]) -> Vec<RunResult> {
    #[cfg(feature = "parallel")]
    {
        run_batch_parallel(scenarios)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_batch_sequential(scenarios)
    }
}

/// Copies of `base` differing only in seed, `base.seed + i` for `i < count`.
pub fn noise_variants(base: &ScenarioConfig, count: usize) -> Vec<ScenarioConfig> {
    (0..count as u64)
        .map(|i| {
            let mut s = base.clone();
            s.seed = base.seed.wrapping_add(i);
            s.name = format!("{}#{}", base.name, s.seed);
            s
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub runs: usize,
    pub diverged: usize,
    pub mean_rms_position: f64,
    pub worst_rms_position: f64,
    pub mean_rms_attitude: f64,
    pub worst_rms_attitude: f64,
}

/// Aggregates metrics over a batch. Diverged runs are counted but excluded
/// from the statistics.
pub fn summarize(results: &[RunResult]) -> SweepSummary {
    let ok: Vec<&TrackingMetrics> = results
        .iter()
        .filter_map(|r| r.as_ref().ok().map(|o| &o.metrics))
        .collect();
    let n = ok.len().max(1) as f64;
    let mean = |f: fn(&TrackingMetrics) -> f64| ok.iter().map(|m| f(m)).sum::<f64>() / n;
    let worst = |f: fn(&TrackingMetrics) -> f64| ok.iter().map(|m| f(m)).fold(0.0, f64::max);
    SweepSummary {
        runs: results.len(),
        diverged: results.len() - ok.len(),
        mean_rms_position: mean(|m| m.rms_position_error),
        worst_rms_position: worst(|m| m.rms_position_error),
        mean_rms_attitude: mean(|m| m.rms_attitude_error),
        worst_rms_attitude: worst(|m| m.rms_attitude_error),
    }
}

/// Measurement-noise Monte Carlo: `count` seeds of `base`.
pub fn noise_sweep(base: &ScenarioConfig, count: usize) -> (Vec<RunResult>, SweepSummary) {
    let results = run_batch(&noise_variants(base, count));
    let summary = summarize(&results);
    (results, summary)
}

/// One frame operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WrenchSample {
    pub frame: Frame,
    pub tilt: Vec2,
    pub speeds: [f64; 3],
}

fn wrench(s: &WrenchSample, cfg: &AirframeConfig) -> Result<FrameWrench, AirframeError> {
    frame_wrench(
        &EulerAngles::tilt(s.tilt.x, s.tilt.y),
        &s.speeds,
        cfg,
        s.frame,
    )
}

pub fn evaluate_wrenches_sequential(
    samples: &[WrenchSample],
    cfg: &AirframeConfig,
) -> Vec<Result<FrameWrench, AirframeError>> {
    samples.iter().map(|s| wrench(s, cfg)).collect()
}

/// Frame force and moment at every sample.
pub fn evaluate_wrenches(
    samples: &[WrenchSample],
    cfg: &AirframeConfig,
) -> Vec<Result<FrameWrench, AirframeError>> {
    #[cfg(feature = "parallel")]
    {
        samples.par_iter().map(|s| wrench(s, cfg)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        evaluate_wrenches_sequential(samples, cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::sim::NoiseConfig;

    #[test]
    fn batch_matches_sequential() {
        let mut base = ScenarioConfig::hover(Vec3::new(0.0, 0.0, 1.0), 1.0);
        base.noise = NoiseConfig {
            position: 0.01,
            attitude: 0.002,
            ..Default::default()
        };
        let variants = noise_variants(&base, 4);
        let a = run_batch(&variants);
        let b = run_batch_sequential(&variants);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.as_ref().unwrap(), y.as_ref().unwrap());
        }
        assert_ne!(a[0].as_ref().unwrap().log, a[1].as_ref().unwrap().log);
    }

    #[test]
    fn summary_counts_divergence() {
        let mut crash = ScenarioConfig::hover(Vec3::new(0.0, 0.0, 1.5), 3.0);
        crash.actuators_enabled = false;
        let fine = ScenarioConfig::hover(Vec3::new(0.0, 0.0, 1.0), 1.0);
        let s = summarize(&run_batch(&[crash, fine]));
        assert_eq!((s.runs, s.diverged), (2, 1));
        assert!(s.worst_rms_position < 1e-4);
    }

    #[test]
    fn wrenches_match_sequential() {
        let cfg = AirframeConfig::default();
        let samples: Vec<WrenchSample> = (0..64)
            .map(|i| WrenchSample {
                frame: if i % 2 == 0 {
                    Frame::Top
                } else {
                    Frame::Bottom
                },
                tilt: Vec2::new(0.01 * i as f64 - 0.3, 0.2 - 0.005 * i as f64),
                speeds: [10.0 * i as f64, 500.0, 900.0],
            })
            .collect();
        let a = evaluate_wrenches(&samples, &cfg);
        let b = evaluate_wrenches_sequential(&samples, &cfg);
        assert_eq!(a, b);
    }
}
