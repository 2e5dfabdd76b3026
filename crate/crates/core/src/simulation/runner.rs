//! Replicate loop.
//!
//! Replicate `k` draws from a ChaCha8 stream seeded with the master seed and
//! stream number `k`, so its data do not depend on how replicates are spread
//! over threads. Results are reduced in replicate order, which makes the
//! summary bitwise reproducible for any worker count.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sampling::sample_case_control;
use super::scenarios::{LogMeanForm, NormalScale, ScenarioKind, ScenarioModel};
use super::summary::{SimulationSummary, SummaryRow};
use crate::error::{Error, Result};
use crate::estimators::{fit_cont, fit_ipw, fit_naive, ContOptions};
use crate::model::{CaseControlDesign, EstimatorKind};

pub const DEFAULT_POOL_SIZE: usize = 50_000;

/// Simulation run configuration, loadable from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Built-in scenario; ignored when `model` is given.
    #[serde(default)]
    pub scenario: Option<ScenarioKind>,
    /// Custom data-generating model.
    #[serde(default)]
    pub model: Option<ScenarioModel>,
    pub replicates: usize,
    pub seed: u64,
    /// Worker threads; 0 uses the rayon default.
    #[serde(default)]
    pub threads: usize,
    #[serde(default = "default_pool")]
    pub pool_size: usize,
    #[serde(default)]
    pub normal_scale: NormalScale,
    #[serde(default)]
    pub log_mean_form: LogMeanForm,
    /// Prevalence used for the weights. By default the prevalence of each
    /// generated population.
    #[serde(default)]
    pub prevalence: Option<f64>,
    /// Estimator labels to run (`IPW`, `pooled`, `Dind`, or a selection
    /// variant label). All by default.
    #[serde(default)]
    pub estimators: Option<Vec<String>>,
    #[serde(default)]
    pub refresh_h1: bool,
}

fn default_pool() -> usize {
    DEFAULT_POOL_SIZE
}

impl SimulationConfig {
    pub fn builtin(kind: ScenarioKind, replicates: usize, seed: u64) -> Self {
        Self {
            scenario: Some(kind),
            model: None,
            replicates,
            seed,
            threads: 0,
            pool_size: DEFAULT_POOL_SIZE,
            normal_scale: NormalScale::Sd,
            log_mean_form: LogMeanForm::Consistent,
            prevalence: None,
            estimators: None,
            refresh_h1: false,
        }
    }

    pub fn resolve_model(&self) -> Result<ScenarioModel> {
        let model = match (&self.model, self.scenario) {
            (Some(m), _) => m.clone(),
            (None, Some(kind)) => kind.model(self.normal_scale, self.log_mean_form),
            (None, None) => return Err(Error::invalid("configuration names no scenario")),
        };
        model.validate()?;
        Ok(model)
    }
}

/// One estimator as run inside the replicate loop.
#[derive(Debug, Clone, PartialEq)]
struct Job {
    label: String,
    kind: EstimatorKind,
    selection: Option<Vec<usize>>,
}

fn jobs(model: &ScenarioModel, wanted: Option<&[String]>) -> Result<Vec<Job>> {
    let mut all: Vec<Job> = model
        .selection_variants
        .iter()
        .map(|v| Job {
            label: v.label.clone(),
            kind: EstimatorKind::Cont,
            selection: Some(v.columns.clone()),
        })
        .collect();
    for kind in [EstimatorKind::Ipw, EstimatorKind::Pooled, EstimatorKind::Dind] {
        all.push(Job {
            label: kind.to_string(),
            kind,
            selection: None,
        });
    }
    match wanted {
        None => Ok(all),
        Some(labels) => labels
            .iter()
            .map(|l| {
                all.iter()
                    .find(|j| j.label.eq_ignore_ascii_case(l))
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("unknown estimator label `{l}`")))
            })
            .collect(),
    }
}

type Draw = Result<(DVector<f64>, DVector<f64>)>;

struct Replicate {
    prevalence: f64,
    fits: Vec<Draw>,
}

fn run_one(cfg: &SimulationConfig, model: &ScenarioModel, jobs: &[Job], k: usize) -> Result<Replicate> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(k as u64);
    let pop = model.generate(&mut rng, cfg.pool_size)?;
    let prevalence = cfg.prevalence.unwrap_or_else(|| pop.prevalence());
    let (sample, _) = sample_case_control(&pop.data, model.n_cases, model.n_controls, &mut rng)?;
    let design = CaseControlDesign::new(prevalence, model.n_cases, model.n_controls)?;
    let opts = ContOptions {
        refresh_h1: cfg.refresh_h1,
        ..ContOptions::default()
    };
    let fits = jobs
        .iter()
        .map(|job| {
            let fit = match job.kind {
                EstimatorKind::Cont => {
                    let cols = job.selection.as_deref().unwrap_or(&[]);
                    fit_cont(&sample.with_selection_columns(cols)?, model.link, &design, &opts)
                }
                EstimatorKind::Ipw => fit_ipw(&sample, model.link, &design),
                kind => fit_naive(&sample, model.link, kind),
            }?;
            Ok((fit.beta.clone(), fit.beta_std_errors()))
        })
        .collect();
    Ok(Replicate { prevalence, fits })
}

/// Runs all replicates and summarizes every estimator and coefficient.
/// Failed fits are excluded from the statistics and counted.
pub fn run_replicates(cfg: &SimulationConfig) -> Result<SimulationSummary> {
    if cfg.replicates == 0 {
        return Err(Error::invalid("need at least one replicate"));
    }
    let model = cfg.resolve_model()?;
    let jobs = jobs(&model, cfg.estimators.as_deref())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let replicates: Vec<Result<Replicate>> = pool.install(|| {
        (0..cfg.replicates)
            .into_par_iter()
            .map(|k| run_one(cfg, &model, &jobs, k))
            .collect()
    });

    let truth = model.true_beta();
    let q = truth.len();
    let mut draws: Vec<Vec<Vec<(f64, f64)>>> = vec![vec![Vec::new(); q]; jobs.len()];
    let mut failed = vec![0usize; jobs.len()];
    let mut prevalence_sum = 0.0;
    let mut n_generated = 0usize;
    for rep in &replicates {
        let rep = match rep {
            Ok(r) => r,
            Err(_) => {
                failed.iter_mut().for_each(|f| *f += 1);
                continue;
            }
        };
        prevalence_sum += rep.prevalence;
        n_generated += 1;
        for (j, fit) in rep.fits.iter().enumerate() {
            match fit {
                Ok((beta, se)) if beta.iter().chain(se.iter()).all(|v| v.is_finite()) => {
                    for c in 0..q {
                        draws[j][c].push((beta[c], se[c]));
                    }
                }
                _ => failed[j] += 1,
            }
        }
    }

    let mut rows = Vec::with_capacity(jobs.len() * q);
    for (j, job) in jobs.iter().enumerate() {
        for c in 0..q {
            rows.push(SummaryRow::from_draws(
                &job.label,
                &model.coefficient_names[c],
                truth[c],
                &draws[j][c],
                failed[j],
            ));
        }
    }
    Ok(SimulationSummary {
        scenario: model.name.clone(),
        replicates: cfg.replicates,
        seed: cfg.seed,
        mean_prevalence: if n_generated > 0 {
            prevalence_sum / n_generated as f64
        } else {
            f64::NAN
        },
        rows,
    })
}
