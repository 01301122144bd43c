use std::hint::black_box;
use std::time::Instant;

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::dynamics::PedestrianState;
use crate::predictor::{PredictionTree, Predictor};
use crate::rl_baseline::{Pace, RlModel, SampledPrediction};

pub const BENCH_HORIZONS: [usize; 4] = [50, 100, 150, 200];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub taus: Vec<usize>,
    pub iterations: usize,
    pub rl_samples: usize,
    pub alpha: f64,
    pub start: PedestrianState,
    /// Goal id the sampling baseline heads for.
    pub goal: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub method: String,
    pub tau: usize,
    pub iterations: usize,
    pub mean_s: f64,
    pub median_s: f64,
    /// Digest of the last output, for checking the timed work.
    pub checksum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeTable {
    pub rows: Vec<Timing>,
}

impl RuntimeTable {
    pub fn timing(&self, method: &str, tau: usize) -> Option<&Timing> {
        self.rows.iter().find(|r| r.method == method && r.tau == tau)
    }

    /// Mean RL runtime over mean LQR runtime.
    pub fn ratio(&self, tau: usize) -> Option<f64> {
        Some(self.timing("rl", tau)?.mean_s / self.timing("lqr", tau)?.mean_s)
    }
}

pub fn tree_checksum(tree: &PredictionTree) -> f64 {
    tree.leaves()
        .map(|b| {
            let m = b.last_belief();
            m.mean.x + m.mean.y + m.cov.trace()
        })
        .sum()
}

pub fn samples_checksum(s: &SampledPrediction) -> f64 {
    s.mean.last().map_or(0.0, |m| m[0] + m[1])
}

fn time<T>(iterations: usize, mut f: impl FnMut() -> Result<T, EvalError>) -> Result<(f64, f64, T), EvalError> {
    let mut durations = Vec::with_capacity(iterations);
    let mut last = None;
    for _ in 0..iterations.max(1) {
        let start = Instant::now();
        let out = black_box(f()?);
        durations.push(start.elapsed().as_secs_f64());
        last = Some(out);
    }
    let mean = durations.iter().sum::<f64>() / durations.len() as f64;
    durations.sort_by(f64::total_cmp);
    let n = durations.len();
    let median = if n % 2 == 1 {
        durations[n / 2]
    } else {
        0.5 * (durations[n / 2 - 1] + durations[n / 2])
    };
    Ok((mean, median, last.unwrap()))
}

pub fn run_lqr(predictor: &Predictor, start: &PedestrianState, tau: usize) -> Result<PredictionTree, EvalError> {
    Ok(predictor.predict_horizon(start, &Matrix4::zeros(), tau)?)
}

pub fn run_rl(model: &RlModel, config: &BenchConfig, tau: usize) -> Result<SampledPrediction, EvalError> {
    let pace = Pace::Speed {
        speed: config.start.v,
        t_s: 0.1,
    };
    Ok(model.sample(
        config.goal,
        config.start.position(),
        config.alpha,
        tau,
        config.rl_samples,
        pace,
        config.seed,
    )?)
}

/// Wall-clock time per prediction call for both methods, gains and value
/// functions already solved. Runs on a single worker thread.
pub fn benchmark(predictor: &Predictor, model: &RlModel, config: &BenchConfig) -> Result<RuntimeTable, EvalError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .expect("single-thread pool");
    pool.install(|| {
        let mut rows = Vec::new();
        for &tau in &config.taus {
            let (mean_s, median_s, tree) = time(config.iterations, || run_lqr(predictor, &config.start, tau))?;
            rows.push(Timing {
                method: "lqr".into(),
                tau,
                iterations: config.iterations,
                mean_s,
                median_s,
                checksum: tree_checksum(&tree),
            });
            let (mean_s, median_s, s) = time(config.iterations, || run_rl(model, config, tau))?;
            rows.push(Timing {
                method: "rl".into(),
                tau,
                iterations: config.iterations,
                mean_s,
                median_s,
                checksum: samples_checksum(&s),
            });
        }
        Ok(RuntimeTable { rows })
    })
}
