//! Experiment execution: prepares data and hyperparameters from a config,
//! dispatches to the local simulation or a transport role, and emits the
//! metrics CSV, the run manifest and the final model.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use crate::dataset::{
    normalize_dataset_rows, normalize_matrix_rows, normalize_rows, parse_libsvm, relabel, split_matrix,
    vertical_split, LabeledDataset, LabelMap, PartitionSpec, PartyShard,
};
use crate::engine::{self, EngineState, HyperParams, RunTrace};
use crate::harness::baseline::evaluate_scores;
use crate::harness::config::{ExperimentConfig, LossScaleConfig, Role, RowNormalize};
use crate::harness::manifest::write_manifest;
use crate::harness::metrics::{write_metrics_csv, MetricsRecord};
use crate::harness::HarnessError;
use crate::objective::{LogisticLoss, LossProfile, SeparableLoss};
use crate::privacy::{calibrate_sigma, sensitivity_bound, total_budget, GaussianNoise, PrivacyParams};
use crate::transport::{
    accept_parties, bind_ephemeral, coordinator_serve, party_serve, CoordinatorSetup, PartySetup, TcpLink,
};

/// Everything resolved and materialized for one run.
pub struct PreparedExperiment {
    pub spec: PartitionSpec,
    pub shards: Vec<PartyShard>,
    pub loss: LogisticLoss,
    pub label_map: LabelMap,
    pub test_blocks: Vec<DMatrix<f64>>,
    pub test_labels: DVector<f64>,
    pub hyper: HyperParams,
    pub lambda: f64,
    pub loss_scale: f64,
    pub privacy: Option<PreparedPrivacy>,
}

#[derive(Debug, Clone)]
pub struct PreparedPrivacy {
    pub params: PrivacyParams,
    pub sigma_multiplier: f64,
    /// Calibrated per-party noise levels, multiplier applied.
    pub sigmas: Vec<f64>,
    pub ball: f64,
}

impl PreparedExperiment {
    pub fn noise_sigmas(&self) -> Option<Vec<f64>> {
        self.privacy.as_ref().map(|p| p.sigmas.clone())
    }

    pub fn ball(&self) -> Option<f64> {
        self.privacy.as_ref().map(|p| p.ball)
    }
}

/// Load the datasets, resolve hyperparameters and calibrate noise.
pub fn prepare(config: &ExperimentConfig) -> Result<PreparedExperiment, HarnessError> {
    config.validate()?;
    let (train, test) = load_pair(config)?;
    prepare_from_data(config, train, test)
}

/// Same as [`prepare`] but on in-memory datasets (used by the sweep and the
/// test suites to skip file I/O).
pub fn prepare_from_data(
    config: &ExperimentConfig,
    train: LabeledDataset,
    test: LabeledDataset,
) -> Result<PreparedExperiment, HarnessError> {
    let spec = PartitionSpec::new(config.partition.clone()).map_err(HarnessError::Dataset)?;
    if spec.total_features() != train.n_features() {
        return Err(HarnessError::Config(format!(
            "partition: widths sum to {} but the dataset has {} features",
            spec.total_features(),
            train.n_features()
        )));
    }

    let (train, map) = relabel(&train).map_err(HarnessError::Dataset)?;
    let test = apply_label_map(&test, map)?;

    let normalize = config
        .row_normalize
        .unwrap_or(if config.privacy.is_some() { RowNormalize::PerParty } else { RowNormalize::Off });
    let (train, test) = match normalize {
        RowNormalize::FullRow => (normalize_dataset_rows(&train).0, normalize_dataset_rows(&test).0),
        _ => (train, test),
    };

    let mut shards = vertical_split(&train, &spec).map_err(HarnessError::Dataset)?;
    let mut test_blocks = split_matrix(test.features(), &spec).map_err(HarnessError::Dataset)?;
    if normalize == RowNormalize::PerParty {
        shards = shards.iter().map(|s| normalize_rows(s).0).collect();
        test_blocks = test_blocks.iter().map(|b| normalize_matrix_rows(b).0).collect();
    }

    let n = train.n_samples();
    let loss_scale = match config.loss_scale {
        LossScaleConfig::One => 1.0,
        LossScaleConfig::InverseN => 1.0 / n as f64,
    };
    let lambda = config.hyper.lambda.unwrap_or(1e-4 * n as f64 * loss_scale);
    let loss = LogisticLoss::new(train.labels().clone(), loss_scale);
    let profile = LossProfile { lipschitz: loss.lipschitz(), convex: true };

    let rho = match config.hyper.rho {
        Some(rho) => rho,
        None => engine::recommend_rho(&shards, &profile, lambda).map_err(HarnessError::Engine)?,
    };
    let hyper = HyperParams {
        rho,
        lambda,
        max_epochs: config.hyper.max_epochs,
        lyapunov_tol: config.hyper.lyapunov_tol,
        seed: config.hyper.seed,
    };

    let privacy = match &config.privacy {
        Some(pc) => {
            let params = pc.to_params(config.hyper.seed);
            params.validate().map_err(|e| HarnessError::Config(format!("privacy: {e}")))?;
            let mut sigmas = Vec::with_capacity(shards.len());
            for shard in &shards {
                let bound = sensitivity_bound(lambda, params.c1, params.b1, rho, shards.len(), shard.width())
                    .map_err(|e| HarnessError::Config(format!("privacy: {e}")))?;
                let sigma = calibrate_sigma(bound, params.epsilon, params.delta)
                    .map_err(|e| HarnessError::Config(format!("privacy: {e}")))?;
                sigmas.push(sigma * pc.sigma_multiplier);
            }
            Some(PreparedPrivacy { params, sigma_multiplier: pc.sigma_multiplier, sigmas, ball: params.b1 })
        }
        None => None,
    };

    Ok(PreparedExperiment {
        spec,
        shards,
        loss,
        label_map: map,
        test_blocks,
        test_labels: test.labels().clone(),
        hyper,
        lambda,
        loss_scale,
        privacy,
    })
}

fn load_pair(config: &ExperimentConfig) -> Result<(LabeledDataset, LabeledDataset), HarnessError> {
    let read = |path: &PathBuf, dim: Option<usize>| -> Result<LabeledDataset, HarnessError> {
        let file = std::fs::File::open(path)
            .map_err(|e| HarnessError::Dataset(crate::dataset::DatasetError::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", path.display()),
            ))))?;
        parse_libsvm(std::io::BufReader::new(file), dim).map_err(HarnessError::Dataset)
    };
    let train = read(&config.train_path, config.force_dim)?;
    let test = read(&config.test_path, config.force_dim)?;
    if train.n_features() == test.n_features() {
        return Ok((train, test));
    }
    // Re-read the narrower file pinned to the common width.
    let d = train.n_features().max(test.n_features());
    let train = read(&config.train_path, Some(d))?;
    let test = read(&config.test_path, Some(d))?;
    Ok((train, test))
}

fn apply_label_map(ds: &LabeledDataset, map: LabelMap) -> Result<LabeledDataset, HarnessError> {
    let mut labels = DVector::zeros(ds.n_samples());
    for (i, &v) in ds.labels().iter().enumerate() {
        labels[i] = if v == map.negative || v == -1.0 {
            -1.0
        } else if v == map.positive || v == 1.0 {
            1.0
        } else {
            return Err(HarnessError::Config(format!(
                "test label {v} matches neither raw training label ({} or {})",
                map.negative, map.positive
            )));
        };
    }
    Ok(LabeledDataset::new(ds.features().clone(), labels))
}

/// Outcome of a run, with the per-epoch metrics and the final model blocks.
pub struct RunSummary {
    pub metrics: Vec<MetricsRecord>,
    pub trace: Option<RunTrace>,
    pub model: Vec<DVector<f64>>,
    pub rho: f64,
    pub lambda: f64,
    pub assumption_pass: Option<bool>,
}

impl RunSummary {
    pub fn final_test_log_loss(&self) -> Option<f64> {
        self.metrics.last().map(|m| m.test_log_loss)
    }
}

/// Builds per-epoch metrics rows from engine diagnostics.
pub struct MetricsCollector<'a> {
    prep: &'a PreparedExperiment,
    start: Instant,
    pub rows: Vec<MetricsRecord>,
}

impl<'a> MetricsCollector<'a> {
    pub fn new(prep: &'a PreparedExperiment) -> Self {
        Self { prep, start: Instant::now(), rows: Vec::new() }
    }

    pub fn observe(&mut self, state: &EngineState, record: &crate::engine::DiagnosticsRecord) {
        let mut scores = DVector::<f64>::zeros(self.prep.test_labels.len());
        for (block, x) in self.prep.test_blocks.iter().zip(&state.x) {
            scores += block * x;
        }
        let (test_log_loss, test_accuracy) =
            evaluate_scores(&scores, &self.prep.test_labels).expect("test dimensions checked in prepare");
        let epsilon_spent = match &self.prep.privacy {
            Some(p) => total_budget(p.params.epsilon, p.params.delta, record.t, p.params.delta_prime).0,
            None => 0.0,
        };
        self.rows.push(MetricsRecord {
            epoch: record.t,
            train_objective: record.objective,
            test_log_loss,
            test_accuracy,
            primal_residual: record.primal_residual,
            lyapunov: record.lyapunov,
            epsilon_spent,
            wall_ms: self.start.elapsed().as_millis() as u64,
        });
    }
}

/// Run the local in-process simulation for a prepared experiment.
pub fn execute_local(prep: &PreparedExperiment) -> Result<(Vec<MetricsRecord>, RunTrace), HarnessError> {
    let sigmas = prep.noise_sigmas();
    let mut collector = MetricsCollector::new(prep);
    let trace = engine::run(
        &prep.shards,
        &prep.loss,
        &prep.hyper,
        prep.ball(),
        sigmas.as_deref(),
        |state, record| collector.observe(state, record),
    )
    .map_err(HarnessError::Run)?;
    Ok((collector.rows, trace))
}

/// Full experiment: prepare, execute per the configured role, write outputs.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunSummary, HarnessError> {
    let prep = prepare(config)?;
    match config.role {
        Role::LocalSim => {
            let (metrics, trace) = execute_local(&prep)?;
            write_outputs(config, &prep, &metrics, &trace)?;
            Ok(summary_from(metrics, trace, &prep))
        }
        Role::Coordinator => {
            let listen = config.listen.as_deref().expect("validated");
            let timeout = Duration::from_secs(config.io_timeout_secs);
            let links = crate::transport::listen_for_parties(listen, prep.shards.len(), timeout)?;
            let sigmas = prep.noise_sigmas();
            let setup = CoordinatorSetup {
                shards: &prep.shards,
                loss: &prep.loss,
                hyper: &prep.hyper,
                ball: prep.ball(),
                noise_sigmas: sigmas.as_deref(),
            };
            let mut collector = MetricsCollector::new(&prep);
            let trace = coordinator_serve(links, &setup, |state, record| collector.observe(state, record))?;
            let metrics = collector.rows;
            write_outputs(config, &prep, &metrics, &trace)?;
            Ok(summary_from(metrics, trace, &prep))
        }
        Role::Party => {
            let wire_id = config.party_id.expect("validated");
            let shard_index = wire_id as usize - 1;
            let connect = config.connect.as_deref().expect("validated");
            let timeout = Duration::from_secs(config.io_timeout_secs);
            let mut link = TcpLink::connect(connect, timeout)?;
            let noise = prep
                .privacy
                .as_ref()
                .map(|p| GaussianNoise::for_party(p.sigmas[shard_index], prep.hyper.seed, shard_index));
            let x = party_serve(
                &mut link,
                PartySetup {
                    shard: &prep.shards[shard_index],
                    wire_id,
                    lambda: prep.hyper.lambda,
                    rho: prep.hyper.rho,
                    ball: prep.ball(),
                    noise,
                },
            )?;
            write_model_json(&model_path(config), &prep, std::slice::from_ref(&x), Some(wire_id))?;
            Ok(RunSummary {
                metrics: Vec::new(),
                trace: None,
                model: vec![x],
                rho: prep.hyper.rho,
                lambda: prep.lambda,
                assumption_pass: None,
            })
        }
    }
}

/// Run a two-party-style experiment fully in process but over loopback TCP:
/// spawns one thread per party and the coordinator in the calling thread.
/// Used by examples and equivalence tests.
pub fn run_distributed_loopback(config: &ExperimentConfig) -> Result<RunSummary, HarnessError> {
    let prep = prepare(config)?;
    let timeout = Duration::from_secs(config.io_timeout_secs);
    let (listener, addr) = bind_ephemeral()?;

    let mut handles = Vec::new();
    for (idx, shard) in prep.shards.iter().enumerate() {
        let shard = shard.clone();
        let wire_id = idx as u16 + 1;
        let hyper = prep.hyper;
        let ball = prep.ball();
        let noise = prep.privacy.as_ref().map(|p| GaussianNoise::for_party(p.sigmas[idx], hyper.seed, idx));
        handles.push(std::thread::spawn(move || -> Result<DVector<f64>, HarnessError> {
            let mut link = TcpLink::connect(addr, timeout)?;
            let x = party_serve(
                &mut link,
                PartySetup { shard: &shard, wire_id, lambda: hyper.lambda, rho: hyper.rho, ball, noise },
            )?;
            Ok(x)
        }));
    }

    let links = accept_parties(&listener, prep.shards.len(), timeout)?;
    let sigmas = prep.noise_sigmas();
    let setup = CoordinatorSetup {
        shards: &prep.shards,
        loss: &prep.loss,
        hyper: &prep.hyper,
        ball: prep.ball(),
        noise_sigmas: sigmas.as_deref(),
    };
    let mut collector = MetricsCollector::new(&prep);
    let trace = coordinator_serve(links, &setup, |state, record| collector.observe(state, record))?;
    for handle in handles {
        handle.join().expect("party thread panicked")?;
    }
    let metrics = collector.rows;
    write_outputs(config, &prep, &metrics, &trace)?;
    Ok(summary_from(metrics, trace, &prep))
}

fn summary_from(metrics: Vec<MetricsRecord>, trace: RunTrace, prep: &PreparedExperiment) -> RunSummary {
    RunSummary {
        model: trace.final_state.x.clone(),
        assumption_pass: Some(trace.assumption.pass),
        rho: prep.hyper.rho,
        lambda: prep.lambda,
        metrics,
        trace: Some(trace),
    }
}

fn model_path(config: &ExperimentConfig) -> PathBuf {
    let mut p = config.output_csv.clone();
    p.set_extension("model.json");
    p
}

fn write_outputs(
    config: &ExperimentConfig,
    prep: &PreparedExperiment,
    metrics: &[MetricsRecord],
    trace: &RunTrace,
) -> Result<(), HarnessError> {
    if let Some(dir) = config.output_csv.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    write_metrics_csv(&config.output_csv, metrics)?;
    write_manifest(config)?;
    write_model_json(&model_path(config), prep, &trace.final_state.x, None)?;
    Ok(())
}

fn write_model_json(
    path: &PathBuf,
    prep: &PreparedExperiment,
    xs: &[DVector<f64>],
    party: Option<u16>,
) -> Result<(), HarnessError> {
    let model = serde_json::json!({
        "partition": prep.spec.widths(),
        "rho": prep.hyper.rho,
        "lambda": prep.lambda,
        "loss_scale": prep.loss_scale,
        "party": party,
        "x": xs.iter().map(|x| x.as_slice().to_vec()).collect::<Vec<_>>(),
    });
    std::fs::write(path, serde_json::to_string_pretty(&model).expect("model serializes"))?;
    Ok(())
}
