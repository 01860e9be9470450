//! Ablation experiments: critic type and training-time randomization.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::algo::CriticKind;
use crate::config::{RndMode, RunConfig};
use crate::error::Result;
use crate::nn::GaussianPolicy;
use crate::runtime::{sweep, SweepKind, SweepPoint};
use crate::train::{load_assets, policy_from_checkpoint, train, MetricsRow};

pub const CURVES_HEADER: &str = "variant,seed,update,steps,episodes,mean_episode_length,mean_reward";
pub const SUMMARY_HEADER: &str = "variant,update,steps,seeds,mean_episode_length,std_episode_length,mean_reward,std_reward";
pub const ROBUSTNESS_HEADER: &str = "variant,sweep,value,episodes,success_rate,mean_length,mean_mimic,mean_tracking_error";

/// Learning curve of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub variant: String,
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
}

impl Curve {
    /// Control steps after which the running mean episode length (over the
    /// last `window` updates) first reaches `threshold`.
    pub fn samples_to_threshold(&self, threshold: f64, window: usize) -> Option<usize> {
        samples_to_threshold(&self.rows, threshold, window)
    }
}

pub fn samples_to_threshold(rows: &[MetricsRow], threshold: f64, window: usize) -> Option<usize> {
    let window = window.max(1);
    (0..rows.len()).find_map(|i| {
        let lo = (i + 1).saturating_sub(window);
        let span = &rows[lo..=i];
        let mean = span.iter().map(|r| r.mean_episode_length).sum::<f64>() / span.len() as f64;
        (span.len() == window && mean >= threshold).then_some(rows[i].steps)
    })
}

fn critic_name(kind: CriticKind) -> &'static str {
    match kind {
        CriticKind::Distributional => "distributional",
        CriticKind::Scalar => "scalar",
    }
}

fn rnd_name(mode: RndMode) -> &'static str {
    match mode {
        RndMode::Simple => "simple",
        RndMode::None => "none",
    }
}

fn run_dir(root: Option<&Path>, name: String) -> Option<std::path::PathBuf> {
    root.map(|r| r.join(name))
}

/// Trains the distributional and the scalar critic with every seed.
/// With `out`, each run writes into `out/<variant>_seed<k>/`.
pub fn critic_ablation(base: &RunConfig, seeds: &[u64], out: Option<&Path>, mut progress: impl FnMut(&str, u64, &MetricsRow)) -> Result<Vec<Curve>> {
    let mut curves = Vec::new();
    for kind in [CriticKind::Distributional, CriticKind::Scalar] {
        for &seed in seeds {
            let mut cfg = base.clone();
            cfg.train.critic = kind;
            cfg.train.seed = seed;
            let variant = critic_name(kind);
            let dir = run_dir(out, format!("{variant}_seed{seed}"));
            let outcome = train(&cfg, dir.as_deref(), |row| progress(variant, seed, row))?;
            curves.push(Curve {
                variant: variant.to_string(),
                seed,
                rows: outcome.rows,
            });
        }
    }
    Ok(curves)
}

pub fn curves_csv(curves: &[Curve]) -> String {
    let mut out = format!("{CURVES_HEADER}\n");
    for c in curves {
        for r in &c.rows {
            let _ = writeln!(out, "{},{},{},{},{},{},{}", c.variant, c.seed, r.update, r.steps, r.episodes, r.mean_episode_length, r.reward.total);
        }
    }
    out
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean and population standard deviation across seeds at every update
/// index that all seeds of a variant reached.
pub fn summary_csv(curves: &[Curve]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    let mut variants: Vec<&str> = Vec::new();
    for c in curves {
        if !variants.contains(&c.variant.as_str()) {
            variants.push(&c.variant);
        }
    }
    for v in variants {
        let group: Vec<&Curve> = curves.iter().filter(|c| c.variant == v).collect();
        let n = group.iter().map(|c| c.rows.len()).min().unwrap_or(0);
        for i in 0..n {
            let lens: Vec<f64> = group.iter().map(|c| c.rows[i].mean_episode_length).collect();
            let rews: Vec<f64> = group.iter().map(|c| c.rows[i].reward.total).collect();
            let (ml, sl) = mean_std(&lens);
            let (mr, sr) = mean_std(&rews);
            let r = &group[0].rows[i];
            let _ = writeln!(out, "{v},{},{},{},{ml},{sl},{mr},{sr}", r.update, r.steps, group.len());
        }
    }
    out
}

/// Robustness of one trained policy.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessResult {
    pub variant: String,
    pub seed: u64,
    pub points: Vec<SweepPoint>,
}

/// Trains with and without randomization for every seed, then evaluates each
/// policy over the given sweeps with `episodes` episodes per point.
pub fn rnd_ablation(
    base: &RunConfig,
    seeds: &[u64],
    sweeps: &[(SweepKind, Vec<f64>)],
    episodes: usize,
    out: Option<&Path>,
    mut progress: impl FnMut(&str, u64, &MetricsRow),
) -> Result<Vec<RobustnessResult>> {
    let (model, motion) = load_assets(base)?;
    let motion = Arc::new(motion);
    let mut results = Vec::new();
    for mode in [RndMode::Simple, RndMode::None] {
        for &seed in seeds {
            let mut cfg = base.clone();
            cfg.rnd = mode;
            cfg.train.seed = seed;
            let variant = rnd_name(mode);
            let dir = run_dir(out, format!("rnd_{variant}_seed{seed}"));
            let outcome = train(&cfg, dir.as_deref(), |row| progress(variant, seed, row))?;
            let policy = policy_from_checkpoint(&outcome.checkpoint)?;
            let points = robustness_sweeps(&policy, &model, &motion, &cfg, sweeps, episodes)?;
            results.push(RobustnessResult {
                variant: variant.to_string(),
                seed,
                points,
            });
        }
    }
    Ok(results)
}

fn robustness_sweeps(
    policy: &GaussianPolicy,
    model: &crate::sim::RobotModel,
    motion: &Arc<crate::motion::ReferenceMotion>,
    cfg: &RunConfig,
    sweeps: &[(SweepKind, Vec<f64>)],
    episodes: usize,
) -> Result<Vec<SweepPoint>> {
    let mut points = Vec::new();
    for (kind, values) in sweeps {
        // Evaluation seeds are shared so both variants face identical episodes.
        points.extend(sweep(Some(policy), model, motion, &cfg.env, *kind, values, episodes, 0)?);
    }
    Ok(points)
}

pub fn robustness_csv(results: &[RobustnessResult]) -> String {
    let mut out = format!("seed,{ROBUSTNESS_HEADER}\n");
    for res in results {
        for p in &res.points {
            let r = &p.report;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                res.seed,
                res.variant,
                p.kind.name(),
                p.value,
                r.episodes,
                r.success_rate,
                r.mean_length,
                r.mean_mimic,
                r.mean_tracking_error
            );
        }
    }
    out
}

/// Success rate per (variant, sweep, value), averaged over seeds.
pub fn mean_success(results: &[RobustnessResult], variant: &str, kind: SweepKind, value: f64) -> Option<f64> {
    let rates: Vec<f64> = results
        .iter()
        .filter(|r| r.variant == variant)
        .flat_map(|r| r.points.iter())
        .filter(|p| p.kind == kind && p.value == value)
        .map(|p| p.report.success_rate)
        .collect();
    (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64)
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}
