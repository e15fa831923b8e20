//! Benchmark driver. Each (variant, case) cell follows the reset → init →
//! execute-N× → average process: a fresh tokio runtime and a freshly
//! deployed, pre-seeded system per cell, then all runs back-to-back on it
//! without reset (every run uses its own actors, so runs stay independent
//! where it matters). Virtual mode pauses the runtime clock: sleeps resolve
//! instantly in wall time but accumulate exact virtual durations, making
//! timings reproducible on any machine. Real mode measures actual elapsed
//! time.

use serde::{Deserialize, Serialize};

use crate::deploy::{Deployment, DeploymentSpec};
use crate::testcase::{run_case, CaseCounts, CaseOutcome, TestCase};
use crate::variant::Variant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TimeMode {
    #[default]
    Virtual,
    Real,
}

impl std::str::FromStr for TimeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "virtual" => Ok(Self::Virtual),
            "real" => Ok(Self::Real),
            other => Err(format!("unknown time mode `{other}` (expected virtual|real)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub runs: usize,
    pub time_mode: TimeMode,
    pub counts: CaseCounts,
    /// Overrides the variant's standard engine count (scaling studies).
    pub engine_override: Option<usize>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            runs: 5,
            time_mode: TimeMode::Virtual,
            counts: CaseCounts::default(),
            engine_override: None,
        }
    }
}

/// All runs of one (variant, case) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub variant: Variant,
    pub case: TestCase,
    pub engine_count: usize,
    pub runs_ms: Vec<f64>,
}

impl BenchResult {
    pub fn mean_ms(&self) -> f64 {
        if self.runs_ms.is_empty() {
            return 0.0;
        }
        self.runs_ms.iter().sum::<f64>() / self.runs_ms.len() as f64
    }

    pub fn min_ms(&self) -> f64 {
        self.runs_ms.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_ms(&self) -> f64 {
        self.runs_ms.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Executes one cell: deploy fresh, run the scenario `options.runs` times
/// back-to-back, and return every run's full outcome in order.
pub fn run_cell(variant: Variant, case: TestCase, options: &BenchOptions) -> Vec<CaseOutcome> {
    let runtime = match options.time_mode {
        TimeMode::Virtual => tokio::runtime::Builder::new_current_thread()
            .enable_all()
            .start_paused(true)
            .build(),
        TimeMode::Real => tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build(),
    }
    .expect("runtime construction cannot fail with these settings");

    runtime.block_on(async {
        let mut spec = DeploymentSpec::bench(variant);
        if options.engine_override.is_some() {
            spec.engine_count = options.engine_override;
        }
        let deployment = Deployment::build(spec).expect("bench deployment is always valid");
        let mut outcomes = Vec::with_capacity(options.runs);
        for run in 0..options.runs {
            outcomes.push(run_case(&deployment, case, &options.counts, &format!("run{run}")).await);
        }
        outcomes
    })
}

/// Single execution on a fresh deployment (a one-run cell).
pub fn run_once(variant: Variant, case: TestCase, options: &BenchOptions) -> CaseOutcome {
    let single = BenchOptions { runs: 1, ..options.clone() };
    run_cell(variant, case, &single).into_iter().next().expect("one run requested")
}

/// Runs the full matrix; results come back in (variant, case) order with
/// `options.runs` samples per cell.
pub fn run_matrix(
    variants: &[Variant],
    cases: &[TestCase],
    options: &BenchOptions,
) -> Vec<BenchResult> {
    let mut results = Vec::with_capacity(variants.len() * cases.len());
    for &variant in variants {
        for &case in cases {
            let runs_ms =
                run_cell(variant, case, options).iter().map(|o| o.duration_ms).collect();
            results.push(BenchResult {
                variant,
                case,
                engine_count: options.engine_override.unwrap_or_else(|| variant.engine_count()),
                runs_ms,
            });
        }
    }
    results
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_options() -> BenchOptions {
        BenchOptions { runs: 2, counts: CaseCounts::scaled(0.1), ..BenchOptions::default() }
    }

    #[test]
    fn back_to_back_virtual_runs_are_reproducible() {
        let options = quick_options();
        let result = run_matrix(&[Variant::ZtaBc], &[TestCase::Tc4], &options);
        assert_eq!(result.len(), 1);
        let cell = &result[0];
        assert_eq!(cell.runs_ms.len(), 2);
        assert!(cell.runs_ms[0] > 0.0);
        // Same deployment, consecutive executions: the accumulated state
        // (chain length, stored readings) must not bend the timings.
        assert_eq!(cell.runs_ms[0], cell.runs_ms[1], "paused-clock runs are deterministic");
        assert_eq!(cell.engine_count, 3);
    }

    #[test]
    fn sync_reads_cost_more_than_async_acks_under_validation() {
        let options = quick_options();
        let tc3 = run_once(Variant::ZtaBc, TestCase::Tc3, &options);
        let tc4 = run_once(Variant::ZtaBc, TestCase::Tc4, &options);
        // Same op count after scaling; reads carry the full validation round.
        assert_eq!(tc3.operations(), tc4.operations());
        assert!(
            tc4.duration_ms > tc3.duration_ms * 2.0,
            "expected sync reads ({:.1}ms) to dominate async acks ({:.1}ms)",
            tc4.duration_ms,
            tc3.duration_ms
        );
    }

    #[test]
    fn engine_override_is_reflected() {
        let mut options = quick_options();
        options.engine_override = Some(6);
        let result = run_matrix(&[Variant::NoBc], &[TestCase::Tc1], &options);
        assert_eq!(result[0].engine_count, 6);
    }
}
