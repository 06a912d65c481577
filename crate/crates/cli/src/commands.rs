use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use qmon_core::data::{holdout_split, load_csv, load_schema, save_schema, synth_generate, write_csv, DataError, SplitPlan};
use qmon_core::doe::{envelope_csv, run_doe, DoeError, OperatingPoint, Response};
use qmon_core::ensemble::{
    generate_pool, select_by_accuracy, select_sad, train_fuser, ClassifierPool, EnsembleError, PoolSpec, Strategy,
};
use qmon_core::eval::{
    confusion, confusion_table, crossval, crossval_table, mcnemar_u, rates_table, CrossValReport, EvalError, McNemar,
    RateReport, Timing,
};
use qmon_core::rng::derive_seed;
use qmon_core::store::{config_digest, model_id, ModelRecord, ModelStore, RecordMetadata, StoreError};
use qmon_core::{Dataset, EnsembleModel, Family, Fusion, Schema};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::{Cli, Command, CrossvalArgs, DataArgs, DoeArgs, EvalArgs, Invalid, ModelArgs, PoolArgs, SelectArgs, ServeArgs, SynthArgs};

const SPLIT_TAG: u64 = 10;
const POOL_TAG: u64 = 11;
const FUSER_TAG: u64 = 12;
const CROSSVAL_TAG: u64 = 13;

pub fn run(cli: &Cli, config: &PipelineConfig) -> Result<()> {
    fs::create_dir_all(&cli.out).with_context(|| format!("cannot create {}", cli.out.display()))?;
    match &cli.command {
        Command::Synth(a) => synth(cli, config, a),
        Command::Pool(a) => pool(cli, config, a),
        Command::Select(a) => select(cli, config, a),
        Command::Eval(a) => eval(cli, config, a),
        Command::Crossval(a) => run_crossval(cli, config, a),
        Command::Doe(a) => doe(cli, config, a),
        Command::Serve(a) => serve(cli, a),
    }
}

fn invalid(e: impl std::fmt::Display) -> anyhow::Error {
    Invalid(e.to_string()).into()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| invalid(format!("invalid {}: {e}", path.display())))
}

fn or_out(cli: &Cli, given: &Option<PathBuf>, name: &str) -> PathBuf {
    given.clone().unwrap_or_else(|| cli.out.join(name))
}

fn load_data(cli: &Cli, args: &DataArgs) -> Result<Dataset> {
    let schema = load_schema(&or_out(cli, &args.schema, "schema.json")).map_err(invalid)?;
    load_csv(&or_out(cli, &args.data, "data.csv"), &schema).map_err(invalid)
}

fn ensemble_error(e: EnsembleError) -> anyhow::Error {
    match e {
        EnsembleError::InvalidConfig(_)
        | EnsembleError::InvalidFusion(_)
        | EnsembleError::NoRealScore { .. }
        | EnsembleError::EmptyPool => invalid(e),
        e => e.into(),
    }
}

fn store_error(e: StoreError) -> anyhow::Error {
    match e {
        StoreError::Io { .. } | StoreError::Json(_) => e.into(),
        e => invalid(e),
    }
}

fn synth(cli: &Cli, config: &PipelineConfig, args: &SynthArgs) -> Result<()> {
    let schema = match &args.schema {
        Some(p) => load_schema(p).map_err(invalid)?,
        None => Schema::lacquering(),
    };
    let n = args.n.unwrap_or(config.n);
    let rate = args.defect_rate.unwrap_or(config.defect_rate);
    let (data, truth) = synth_generate(&schema, n, rate, cli.seed).map_err(|e| match e {
        DataError::Empty | DataError::UnsatisfiableTarget(_) => invalid(e),
        e => e.into(),
    })?;
    write_csv(&cli.out.join("data.csv"), &data)?;
    save_schema(&cli.out.join("schema.json"), &schema)?;
    write_json(&cli.out.join("ground_truth.json"), &truth)?;
    println!(
        "{} rows, {} defects ({:.1}%), written to {}",
        data.len(),
        data.labels().iter().filter(|&&l| l == 1).count(),
        100.0 * data.defect_rate(),
        cli.out.display()
    );
    Ok(())
}

/// Everything `select` and `eval` need from the pool step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolArtifact {
    pub seed: u64,
    pub split: SplitPlan,
    pub spec: PoolSpec,
    pub pool: ClassifierPool,
}

fn split_samples(data: &Dataset, art: &PoolArtifact) -> Result<(qmon_core::Samples, qmon_core::Samples)> {
    let n = data.len();
    if art.split.train.iter().chain(&art.split.validation).any(|&i| i >= n)
        || art.split.train.len() + art.split.validation.len() != n
    {
        return Err(invalid(format!("pool was built on a different dataset than the {n} rows given")));
    }
    let validation = data.samples(&art.split.validation);
    if validation.y != art.pool.predictions.truth {
        return Err(invalid("pool validation labels do not match the data"));
    }
    Ok((data.samples(&art.split.train), validation))
}

fn pool(cli: &Cli, config: &PipelineConfig, args: &PoolArgs) -> Result<()> {
    let data = load_data(cli, &args.data)?;
    let mut spec = config.pool.clone();
    if let Some(c) = args.count {
        spec.count = c;
    }
    if let Some(names) = &args.families {
        spec.families = names
            .iter()
            .map(|n| n.parse::<Family>().map_err(invalid))
            .collect::<Result<_>>()?;
    }
    let split = holdout_split(data.len(), config.holdout_fraction, derive_seed(cli.seed, &[SPLIT_TAG])).map_err(invalid)?;
    let train = data.samples(&split.train);
    let validation = data.samples(&split.validation);
    let pool = generate_pool(&train, &validation, &spec, derive_seed(cli.seed, &[POOL_TAG])).map_err(ensemble_error)?;

    let errors = pool.error_rates();
    let mut rows = Vec::new();
    for family in &spec.families {
        let e: Vec<f64> = pool
            .classifiers
            .iter()
            .zip(&errors)
            .filter(|(c, _)| c.family() == *family)
            .map(|(_, &e)| e)
            .collect();
        let failed = pool.failed.iter().filter(|f| f.family == *family).count();
        let best = e.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = e.iter().sum::<f64>() / e.len().max(1) as f64;
        rows.push(format!(
            "{family:<5} {:>4} trained  {failed:>3} failed  best {:.1}%  mean {:.1}%",
            e.len(),
            100.0 * best,
            100.0 * mean
        ));
    }
    for f in &pool.failed {
        log::warn!("{} replicate {} failed: {}", f.family, f.replicate, f.reason);
    }
    let artifact = PoolArtifact {
        seed: cli.seed,
        split,
        spec,
        pool,
    };
    write_json(&cli.out.join("pool.json"), &artifact)?;
    println!(
        "pool: {} train rows, {} validation rows",
        artifact.split.train.len(),
        artifact.split.validation.len()
    );
    for r in rows {
        println!("{r}");
    }
    Ok(())
}

fn parse_strategy(s: &str) -> Result<Strategy> {
    match s.trim().to_ascii_lowercase().as_str() {
        "accuracy" => Ok(Strategy::Accuracy),
        "sad" => Ok(Strategy::Sad),
        "pruning" | "fuser" => Ok(Strategy::Pruning),
        other => Err(invalid(format!("unknown strategy {other:?} (accuracy, sad, pruning)"))),
    }
}

fn validation_rates(ensemble: &EnsembleModel, validation: &qmon_core::Samples) -> Result<(Vec<u8>, RateReport)> {
    let preds: Vec<u8> = ensemble
        .predict_many(&validation.x)?
        .into_iter()
        .map(|(c, _)| c)
        .collect();
    let m = confusion(&validation.y, &preds)?;
    Ok((preds, m.rates()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SelectReport {
    model: String,
    defect: String,
    strategy: Strategy,
    fusion: Fusion,
    members: usize,
    families: BTreeMap<Family, usize>,
    pool_indices: Vec<usize>,
    validation: RateReport,
    trace: Vec<qmon_core::ensemble::TraceStep>,
}

fn select(cli: &Cli, config: &PipelineConfig, args: &SelectArgs) -> Result<()> {
    let data = load_data(cli, &args.data)?;
    let art: PoolArtifact = read_json(&or_out(cli, &args.pool, "pool.json"))?;
    let (train, validation) = split_samples(&data, &art)?;

    let fusion = match &args.fusion {
        Some(f) => Some(f.parse::<Fusion>().map_err(invalid)?),
        None => None,
    };
    let strategy = match &args.strategy {
        Some(s) => Some(parse_strategy(s)?),
        None => None,
    };
    let (strategy, fusion) = match (strategy, fusion) {
        (Some(Strategy::Pruning), None) | (None, Some(Fusion::Trained)) => (Strategy::Pruning, Fusion::Trained),
        (Some(Strategy::Pruning), Some(Fusion::Trained)) => (Strategy::Pruning, Fusion::Trained),
        (Some(Strategy::Pruning), Some(f)) => {
            return Err(invalid(format!("strategy pruning trains a fuser; fusion {f} does not apply")))
        }
        (Some(s), Some(Fusion::Trained)) => {
            return Err(invalid(format!("trained fusion is built by strategy pruning, not {s}")))
        }
        (s, f) => {
            let s = s.unwrap_or(config.strategy);
            let f = if s == Strategy::Pruning {
                Fusion::Trained
            } else {
                f.unwrap_or(config.select.fusion)
            };
            (s, f)
        }
    };
    if strategy == Strategy::Manual {
        return Err(invalid("strategy manual cannot be selected from a pool"));
    }

    let mut select_config = config.select.clone();
    select_config.fusion = fusion;
    let fuser_seed = derive_seed(cli.seed, &[FUSER_TAG]);
    let ensemble = match strategy {
        Strategy::Accuracy => select_by_accuracy(&art.pool, &select_config),
        Strategy::Sad => select_sad(&art.pool, &select_config),
        _ => train_fuser(&art.pool, &train, &validation, &config.fuser, fuser_seed),
    }
    .map_err(ensemble_error)?;

    let defect = args.defect.clone().unwrap_or_else(|| config.defect.clone());
    let metadata = RecordMetadata {
        seed: cli.seed,
        seeds: [
            ("split".to_string(), art.split.seed),
            ("pool".to_string(), derive_seed(art.seed, &[POOL_TAG])),
            ("fuser".to_string(), fuser_seed),
        ]
        .into(),
        config_digest: config_digest(config)?,
        training_rows: train.len(),
    };
    let record = ModelRecord::new(
        &defect,
        data.encoder().clone(),
        ensemble,
        OperatingPoint::reference(data.schema(), data.raw()),
        metadata,
    );
    let store = ModelStore::open(cli.out.join("store")).map_err(store_error)?;
    let id = store.save(&record).map_err(store_error)?;

    let (_, rates) = validation_rates(&record.ensemble, &validation)?;
    let mut families = BTreeMap::new();
    for m in &record.ensemble.members {
        *families.entry(m.family()).or_insert(0) += 1;
    }
    let report = SelectReport {
        model: id.clone(),
        defect,
        strategy,
        fusion,
        members: record.ensemble.len(),
        families,
        pool_indices: record.ensemble.provenance.pool_indices.clone(),
        validation: rates,
        trace: record.ensemble.provenance.trace.clone(),
    };
    write_json(&cli.out.join("select_report.json"), &report)?;
    let name = format!("ensemble {strategy}/{fusion}");
    println!("stored model {id:?} with {} members", report.members);
    print!("{}", rates_table(&[(name, rates, Some(report.members))]));
    Ok(())
}

fn load_record(cli: &Cli, config: &PipelineConfig, args: &ModelArgs) -> Result<ModelRecord> {
    let store = ModelStore::open(or_out(cli, &args.store, "store")).map_err(store_error)?;
    let id = match &args.model {
        Some(id) => id.clone(),
        None => model_id(&config.defect).map_err(invalid)?,
    };
    store.load(&id).map_err(store_error)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EvalRow {
    name: String,
    size: Option<usize>,
    rates: RateReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct McNemarRow {
    name: String,
    versus: String,
    /// `None` when the two never disagree on correctness.
    test: Option<McNemar>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EvalReport {
    model: String,
    rows: Vec<EvalRow>,
    best: String,
    mcnemar: Vec<McNemarRow>,
}

fn eval(cli: &Cli, config: &PipelineConfig, args: &EvalArgs) -> Result<()> {
    let data = load_data(cli, &args.data)?;
    let art: PoolArtifact = read_json(&or_out(cli, &args.pool, "pool.json"))?;
    let (_, validation) = split_samples(&data, &art)?;
    let record = load_record(cli, config, &args.model)?;
    if record.ensemble.input_width() != data.width() {
        return Err(invalid("stored model does not match the data's encoding"));
    }

    let (ens_preds, _) = validation_rates(&record.ensemble, &validation)?;
    let strategy = record.ensemble.provenance.strategy;
    let mut named: Vec<(String, Vec<u8>, Option<usize>)> = vec![(
        format!("ensemble {strategy}/{}", record.ensemble.fusion),
        ens_preds,
        Some(record.ensemble.len()),
    )];
    let preds = &art.pool.predictions;
    for family in &art.spec.families {
        let best = (0..art.pool.len())
            .filter(|&j| art.pool.classifiers[j].family() == *family)
            .min_by_key(|&j| (preds.error_count(j), j));
        if let Some(j) = best {
            named.push((format!("best {family}"), preds.classes[j].clone(), None));
        }
    }

    let mut rows = Vec::new();
    let mut table_rows = Vec::new();
    let mut confusions = String::new();
    for (name, p, size) in &named {
        let m = confusion(&validation.y, p)?;
        let rates = m.rates();
        table_rows.push((name.clone(), rates, *size));
        confusions.push('\n');
        confusions.push_str(&confusion_table(name, &m));
        rows.push(EvalRow {
            name: name.clone(),
            size: *size,
            rates,
        });
    }
    let best = (0..named.len())
        .min_by(|&a, &b| rows[a].rates.s01.total_cmp(&rows[b].rates.s01).then(a.cmp(&b)))
        .expect("at least the ensemble");
    let mut mcnemar = Vec::new();
    let mut lines = String::new();
    for (i, (name, p, _)) in named.iter().enumerate() {
        if i == best {
            continue;
        }
        let test = match mcnemar_u(&validation.y, &named[best].1, p) {
            Ok(t) => Some(t),
            Err(EvalError::IdenticalDisagreement) => None,
            Err(e) => return Err(e.into()),
        };
        lines.push_str(&match &test {
            Some(t) => format!(
                "{name} vs {}: U = {:.3}, {}\n",
                named[best].0,
                t.u,
                if t.reject { "significant at 5%" } else { "not significant" }
            ),
            None => format!("{name} vs {}: identical correctness\n", named[best].0),
        });
        mcnemar.push(McNemarRow {
            name: name.clone(),
            versus: named[best].0.clone(),
            test,
        });
    }
    let report = EvalReport {
        model: model_id(&record.defect).map_err(invalid)?,
        best: named[best].0.clone(),
        rows,
        mcnemar,
    };
    write_json(&cli.out.join("eval_report.json"), &report)?;
    let text = format!(
        "{}\nMcNemar against {}\n{lines}{confusions}",
        rates_table(&table_rows),
        report.best
    );
    write_text(&cli.out.join("eval.txt"), &text)?;
    print!("{text}");
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TimingRow {
    trainer: String,
    timing: Option<Timing>,
}

fn run_crossval(cli: &Cli, config: &PipelineConfig, args: &CrossvalArgs) -> Result<()> {
    let data = load_data(cli, &args.data)?;
    let samples = data.all_samples();
    let k = args.k.unwrap_or(config.crossval.k);
    let seed = derive_seed(cli.seed, &[CROSSVAL_TAG]);
    let mut reports: Vec<CrossValReport> = Vec::new();
    for trainer in &config.crossval.trainers {
        log::info!("cross-validating {}", trainer.label());
        let r = crossval(&samples, trainer, k, seed).map_err(|e| match e {
            EvalError::Data(_) | EvalError::Empty => invalid(e),
            e => e.into(),
        })?;
        reports.push(r);
    }
    print!("{}", crossval_table(&reports));
    let timing: Vec<TimingRow> = reports
        .iter_mut()
        .map(|r| TimingRow {
            trainer: r.trainer.clone(),
            timing: r.timing.take(),
        })
        .collect();
    write_json(&cli.out.join("crossval.json"), &reports)?;
    write_json(&cli.out.join("crossval_timing.json"), &timing)?;
    write_text(&cli.out.join("crossval.txt"), &crossval_table(&reports))?;
    Ok(())
}

fn doe(cli: &Cli, config: &PipelineConfig, args: &DoeArgs) -> Result<()> {
    let record = load_record(cli, config, &args.model)?;
    let mut op = record.reference.clone();
    if let Some(path) = &args.operating_point {
        let given: BTreeMap<String, f64> = read_json(path)?;
        op.values.extend(given);
    }
    let mut levels = config.doe.levels.clone();
    if let Some(l) = args.levels {
        levels.default = l;
    }
    let response = match args.response.as_deref().map(str::to_ascii_lowercase).as_deref() {
        None => config.doe.response,
        Some("incidence") => Response::Incidence,
        Some("score") => Response::Score,
        Some(other) => return Err(invalid(format!("unknown response {other:?} (incidence, score)"))),
    };
    let result = run_doe(&record.ensemble, &record.encoder, &op, &levels, response).map_err(|e| match e {
        DoeError::Ensemble(_) | DoeError::DimensionMismatch { .. } => anyhow::Error::from(e),
        e => invalid(e),
    })?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    write_json(&cli.out.join("doe.json"), &result)?;
    let dir = cli.out.join("envelope");
    fs::create_dir_all(&dir)?;
    for fe in &result.envelope.factors {
        write_text(&dir.join(format!("{}.csv", fe.factor)), &envelope_csv(fe))?;
    }
    let mut text = format!("{} runs x {} members\n", result.runs, result.members);
    for r in &result.recommendations {
        text.push_str(&format!("{r}\n"));
    }
    write_text(&cli.out.join("recommendations.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn serve(cli: &Cli, args: &ServeArgs) -> Result<()> {
    let store = or_out(cli, &args.store, "store");
    let addr: std::net::SocketAddr = args
        .bind
        .parse()
        .map_err(|e| invalid(format!("invalid bind address {:?}: {e}", args.bind)))?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime
        .block_on(qmon_service::serve(&store, addr))
        .map_err(|e| match e {
            qmon_service::ServiceError::NoModels | qmon_service::ServiceError::Store(_) => invalid(e),
            e => e.into(),
        })
}
