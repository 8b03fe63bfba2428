//! CSV outputs. Column sets are fixed; every float is written with six
//! decimals so identical runs produce identical bytes.
//!
//! | file                 | columns |
//! |----------------------|---------|
//! | `train_log.csv`      | `update,steps,mean_reward,policy_loss,value_loss` |
//! | `reward_curve.csv`   | `step,sma_reward` |
//! | `coverage_curve.csv` | `variant,step,median_cov,std_cov` |
//! | `coverage_at.csv`    | `variant,env_seed,step,coverage` |
//! | `interventions.csv`  | `variant,env_seed,interventions,steps,proportion` |
//! | `episodes.csv`       | `variant,env_seed,final_coverage,steps_to_80,steps_to_90,steps_to_95,steps_to_99` |
//! | `summary.csv`        | `variant,envs,steps,median_cov_at,std_cov_at,median_intervention,median_steps_to_95` |
//! | `sweep.csv`          | `label,h,w,n_o,envs,steps,median_cov_at,std_cov_at,median_intervention` |

use std::fmt::Write as _;
use std::path::Path;

use shieldnav::ppo::{moving_average, UpdateRecord};

use crate::eval::{coverage_profile, median, std_dev, EvalRecord};
use crate::HarnessError;

pub const TRAIN_LOG_HEADER: &str = "update,steps,mean_reward,policy_loss,value_loss";

/// Evaluation results for one labelled policy.
#[derive(Debug, Clone)]
pub struct LabelledRecords<'a> {
    pub label: &'a str,
    pub records: &'a [EvalRecord],
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}

pub fn train_log_row(r: &UpdateRecord) -> String {
    format!(
        "{},{},{:.6},{:.6},{:.6}",
        r.update, r.steps, r.mean_reward, r.policy_loss, r.value_loss
    )
}

/// Trailing `window`-step moving average of per-step rewards, sampled every
/// `every` steps.
pub fn reward_curve_csv(step_rewards: &[f32], window: usize, every: usize, step_offset: usize) -> String {
    let sma = moving_average(step_rewards, window);
    let mut s = String::from("step,sma_reward\n");
    let every = every.max(1);
    for (i, v) in sma.iter().enumerate() {
        let step = i + 1;
        if step % every == 0 || step == sma.len() {
            writeln!(s, "{},{:.6}", step + step_offset, v).unwrap();
        }
    }
    s
}

pub fn coverage_curve_csv(sets: &[LabelledRecords]) -> String {
    let mut s = String::from("variant,step,median_cov,std_cov\n");
    for set in sets {
        for (t, (m, sd)) in coverage_profile(set.records).iter().enumerate() {
            writeln!(s, "{},{},{:.6},{:.6}", set.label, t + 1, m, sd).unwrap();
        }
    }
    s
}

pub fn coverage_at_csv(sets: &[LabelledRecords], step: usize) -> String {
    let mut s = String::from("variant,env_seed,step,coverage\n");
    for set in sets {
        for r in set.records {
            let at = step.min(r.steps());
            writeln!(s, "{},{},{},{:.6}", set.label, r.env_seed, at, r.coverage_at(at)).unwrap();
        }
    }
    s
}

pub fn interventions_csv(sets: &[LabelledRecords]) -> String {
    let mut s = String::from("variant,env_seed,interventions,steps,proportion\n");
    for set in sets {
        for r in set.records {
            writeln!(
                s,
                "{},{},{},{},{:.6}",
                set.label,
                r.env_seed,
                r.interventions(),
                r.steps(),
                r.intervention_proportion()
            )
            .unwrap();
        }
    }
    s
}

pub fn episodes_csv(sets: &[LabelledRecords]) -> String {
    let mut s = String::from("variant,env_seed,final_coverage,steps_to_80,steps_to_90,steps_to_95,steps_to_99\n");
    for set in sets {
        for r in set.records {
            let final_cov = r.coverage.last().copied().unwrap_or(0.0);
            let reach: Vec<String> = r
                .steps_to
                .iter()
                .map(|t| t.map(|v| v.to_string()).unwrap_or_default())
                .collect();
            writeln!(s, "{},{},{:.6},{}", set.label, r.env_seed, final_cov, reach.join(",")).unwrap();
        }
    }
    s
}

/// Aggregate statistics of one record set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub envs: usize,
    pub steps: usize,
    pub coverage_step: usize,
    pub median_cov_at: f64,
    pub std_cov_at: f64,
    pub median_intervention: f64,
    /// Median over environments of steps to 95 % coverage, counting
    /// environments that never reach it as `steps + 1`.
    pub median_steps_to_95: f64,
}

pub fn summarize(records: &[EvalRecord], coverage_step: usize) -> Summary {
    let steps = records.iter().map(EvalRecord::steps).min().unwrap_or(0);
    let at = coverage_step.min(steps);
    let cov: Vec<f64> = records.iter().map(|r| r.coverage_at(at)).collect();
    let int: Vec<f64> = records.iter().map(EvalRecord::intervention_proportion).collect();
    let t95: Vec<f64> = records
        .iter()
        .map(|r| r.steps_to[2].map_or(r.steps() as f64 + 1.0, |t| t as f64))
        .collect();
    Summary {
        envs: records.len(),
        steps,
        coverage_step: at,
        median_cov_at: median(&cov),
        std_cov_at: std_dev(&cov),
        median_intervention: median(&int),
        median_steps_to_95: median(&t95),
    }
}

pub fn summary_csv(sets: &[LabelledRecords], coverage_step: usize) -> String {
    let mut s = String::from("variant,envs,steps,median_cov_at,std_cov_at,median_intervention,median_steps_to_95\n");
    for set in sets {
        let m = summarize(set.records, coverage_step);
        writeln!(
            s,
            "{},{},{},{:.6},{:.6},{:.6},{:.1}",
            set.label, m.envs, m.steps, m.median_cov_at, m.std_cov_at, m.median_intervention, m.median_steps_to_95
        )
        .unwrap();
    }
    s
}

/// Writes the evaluation bundle for `sets` into `dir`.
pub fn write_eval_bundle(dir: &Path, sets: &[LabelledRecords], coverage_step: usize) -> Result<(), HarnessError> {
    write_file(&dir.join("coverage_curve.csv"), &coverage_curve_csv(sets))?;
    write_file(&dir.join("coverage_at.csv"), &coverage_at_csv(sets, coverage_step))?;
    write_file(&dir.join("interventions.csv"), &interventions_csv(sets))?;
    write_file(&dir.join("episodes.csv"), &episodes_csv(sets))?;
    write_file(&dir.join("summary.csv"), &summary_csv(sets, coverage_step))
}
