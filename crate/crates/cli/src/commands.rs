//! Subcommand implementations. Each returns the lines it reports on
//! stdout and writes its artifacts under the configured output directory.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use gcnn_core::model::{build_model, Checkpoint, Grouping, LayerGeometry, Model, ModelSpec};
use gcnn_core::spectral::{read_assignment, write_assignment, GroupAssignment};
use gcnn_core::trainer::{evaluate, linear_baseline, train, validation_split, write_history, EvalReport};
use gcnn_core::tsdata::{write_csv, RepairReport, StandardizeReport, WindowManifest, WindowedRegressionSet};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{parse_network, RunConfig};
use crate::pipeline::{cluster_inputs, prepare, Prepared};
use crate::CliError;

fn out_path(cfg: &RunConfig, name: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(&cfg.out)?;
    Ok(cfg.out.join(name))
}

/// Writes a CSV body behind a `# config_hash=` comment line.
fn write_csv_file(path: &Path, hash: &str, body: &[u8]) -> Result<(), CliError> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "# config_hash={hash}")?;
    f.write_all(body)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// One-line summary of a layer plan.
pub fn describe_plan(plan: &[LayerGeometry]) -> String {
    let convs: Vec<&LayerGeometry> = plan.iter().filter(|l| l.kind == "conv" || l.kind == "rcl").collect();
    let dense: Vec<usize> = plan.iter().filter(|l| l.kind == "dense").map(|l| l.channels).collect();
    let kinds: Vec<&str> = plan.iter().map(|l| l.kind.as_str()).collect();
    format!(
        "layers={kinds:?} widths={:?} channels={:?} groups={} dense={dense:?}",
        convs.iter().map(|l| l.width).collect::<Vec<_>>(),
        convs.iter().map(|l| l.channels).collect::<Vec<_>>(),
        convs.first().map_or(1, |l| l.groups),
    )
}

#[derive(Debug, Serialize, Deserialize)]
struct IngestManifest {
    config_hash: String,
    source: String,
    raw_series: usize,
    kept_series: Vec<String>,
    time_steps: usize,
    repair: RepairReport,
    standardize: StandardizeReport,
    windows: WindowManifest,
}

pub fn cmd_ingest(cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    let hash = cfg.hash();
    let prep = prepare(cfg, &cfg.data.target)?;
    let mut body = Vec::new();
    write_csv(&mut body, &prep.data)?;
    write_csv_file(&out_path(cfg, "dataset.csv")?, &hash, &body)?;
    let manifest = IngestManifest {
        config_hash: hash,
        source: cfg.data.path.display().to_string(),
        raw_series: prep.raw_series,
        kept_series: prep.data.names().to_vec(),
        time_steps: prep.data.len(),
        repair: prep.repair.clone(),
        standardize: prep.standardize.clone(),
        windows: WindowManifest::new(&prep.train, &prep.test),
    };
    write_json(&out_path(cfg, "manifest.json")?, &manifest)?;
    let drops = prep.repair.drops.len() + prep.standardize.drops.len();
    let mut lines = vec![format!(
        "ingest: {} of {} series kept, {} dropped, {} gap fills, {} train / {} test samples",
        prep.data.n_series(),
        prep.raw_series,
        drops,
        prep.repair.fills.len(),
        prep.train.len(),
        prep.test.len()
    )];
    for d in prep.repair.drops.iter().chain(&prep.standardize.drops) {
        lines.push(format!("dropped {}: {:?}", d.series, d.reason));
    }
    Ok(lines)
}

#[derive(Debug, Serialize, Deserialize)]
struct ClusterReport {
    config_hash: String,
    k: usize,
    ncut: f64,
    cut: f64,
    groups: Vec<Vec<String>>,
}

pub fn cmd_cluster(cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    if cfg.model.grouping != Grouping::Explicit {
        return Err(CliError::Config("model.grouping: cluster requires `explicit`".into()));
    }
    let hash = cfg.hash();
    let prep = prepare(cfg, &cfg.data.target)?;
    let c = cluster_inputs(cfg, &prep)?;
    let mut body = Vec::new();
    write_assignment(&mut body, &c.names, &c.assignment)?;
    write_csv_file(&out_path(cfg, "assignment.csv")?, &hash, &body)?;
    let groups: Vec<Vec<String>> = (0..c.assignment.k())
        .map(|g| c.assignment.members(g).into_iter().map(|i| c.names[i].clone()).collect())
        .collect();
    let report = ClusterReport {
        config_hash: hash,
        k: c.assignment.k(),
        ncut: c.ncut,
        cut: c.cut,
        groups,
    };
    write_json(&out_path(cfg, "cluster.json")?, &report)?;
    Ok(vec![format!(
        "cluster: k={} ncut={} sizes={:?}",
        report.k,
        report.ncut,
        c.assignment.group_sizes()
    )])
}

/// Assignment aligned with the set's channel order, from the configured
/// file or from clustering.
fn explicit_assignment(cfg: &RunConfig, prep: &Prepared) -> Result<GroupAssignment, CliError> {
    let Some(path) = &cfg.model.assignment else {
        return Ok(cluster_inputs(cfg, prep)?.assignment);
    };
    let (names, a) = read_assignment(fs::File::open(path)?)?;
    let channels = prep.train.channel_names();
    let mut labels = Vec::with_capacity(channels.len());
    for ch in channels {
        let i = names
            .iter()
            .position(|n| n == ch)
            .ok_or_else(|| CliError::Config(format!("model.assignment: no group for series `{ch}`")))?;
        labels.push(a.labels()[i]);
    }
    if names.len() != channels.len() {
        return Err(CliError::Config(format!(
            "model.assignment: {} entries for {} input series",
            names.len(),
            channels.len()
        )));
    }
    Ok(GroupAssignment::new(labels, a.k())?)
}

fn build_for(cfg: &RunConfig, spec: &ModelSpec, prep: &Prepared) -> Result<Model, CliError> {
    let assignment = match spec.grouping {
        Grouping::Explicit => Some(explicit_assignment(cfg, prep)?),
        _ => None,
    };
    Ok(build_model(spec, assignment.as_ref(), cfg.seed)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct TrainReport {
    config_hash: String,
    param_count: usize,
    layer_plan: Vec<LayerGeometry>,
    best_epoch: usize,
    best_val_srmse: Option<f64>,
    fit_samples: usize,
    val_samples: usize,
    test_srmse: Option<f64>,
    test_rmse: f64,
}

pub fn cmd_train(cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    let hash = cfg.hash();
    let prep = prepare(cfg, &cfg.data.target)?;
    let spec = cfg.model_spec(prep.train.n_channels())?;
    let model = build_for(cfg, &spec, &prep)?;
    let plan = spec.geometry()?;
    let params = model.count_params();
    let outcome = train(model, &prep.train, &cfg.train_config())?;
    let best = &outcome.model;

    let mut ck = Vec::new();
    Checkpoint::from_model(best, &hash).write(&mut ck)?;
    fs::write(out_path(cfg, "checkpoint.json")?, ck)?;
    let mut hist = Vec::new();
    write_history(&mut hist, &outcome.history)?;
    write_csv_file(&out_path(cfg, "history.csv")?, &hash, &hist)?;
    if let Some(u) = best.coefficients() {
        let k = u.shape()[1];
        let mut body = String::from("series_name");
        for g in 1..=k {
            body.push_str(&format!(",u{g}"));
        }
        body.push('\n');
        for (i, name) in prep.train.channel_names().iter().enumerate() {
            body.push_str(name);
            for g in 0..k {
                body.push_str(&format!(",{}", u.at2(i, g)));
            }
            body.push('\n');
        }
        write_csv_file(&out_path(cfg, "coefficients.csv")?, &hash, body.as_bytes())?;
    }
    let test = evaluate(best, &prep.test, "test")?;
    let report = TrainReport {
        config_hash: hash,
        param_count: params,
        layer_plan: plan.clone(),
        best_epoch: outcome.best_epoch,
        best_val_srmse: outcome.best().val_srmse,
        fit_samples: outcome.fit_samples,
        val_samples: outcome.val_samples,
        test_srmse: test.srmse,
        test_rmse: test.rmse,
    };
    write_json(&out_path(cfg, "train_report.json")?, &report)?;
    Ok(vec![
        format!("plan: {}", describe_plan(&plan)),
        format!("param_count: {params}"),
        format!(
            "train: best epoch {} of {}, val srmse {}, test srmse {}",
            outcome.best_epoch,
            outcome.history.len(),
            fmt_opt(report.best_val_srmse),
            fmt_opt(test.srmse)
        ),
    ])
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.6}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSplit {
    Test,
    Validation,
    Train,
}

impl EvalSplit {
    fn suffix(self) -> &'static str {
        match self {
            EvalSplit::Test => "",
            EvalSplit::Validation => "_validation",
            EvalSplit::Train => "_train",
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct EvalFile {
    config_hash: String,
    checkpoint: String,
    checkpoint_config_hash: String,
    split: String,
    #[serde(flatten)]
    report: EvalReport,
}

fn eval_set(cfg: &RunConfig, prep: &Prepared, split: EvalSplit) -> Result<WindowedRegressionSet, CliError> {
    Ok(match split {
        EvalSplit::Test => prep.test.clone(),
        EvalSplit::Train => validation_split(&prep.train, cfg.train.val_fraction)?.0,
        EvalSplit::Validation => validation_split(&prep.train, cfg.train.val_fraction)?
            .1
            .ok_or_else(|| CliError::Config("train.val_fraction = 0 leaves no validation slice".into()))?,
    })
}

pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path, split: EvalSplit) -> Result<Vec<String>, CliError> {
    let hash = cfg.hash();
    let file = fs::File::open(checkpoint)
        .map_err(|e| CliError::Data(format!("cannot open checkpoint {}: {e}", checkpoint.display())))?;
    let ck = Checkpoint::read(std::io::BufReader::new(file))?;
    let model = ck.to_model()?;
    let prep = prepare(cfg, &cfg.data.target)?;
    let set = eval_set(cfg, &prep, split)?;
    let report = evaluate(&model, &set, &format!("checkpoint:{}", ck.config_hash))?;

    let mut body = String::from("t,target,prediction\n");
    for i in 0..set.len() {
        body.push_str(&format!(
            "{},{},{}\n",
            set.time_label(i),
            report.targets[i],
            report.predictions[i]
        ));
    }
    let sfx = split.suffix();
    write_csv_file(&out_path(cfg, &format!("predictions{sfx}.csv"))?, &hash, body.as_bytes())?;
    let line = format!(
        "eval: {} samples, srmse {}, rmse {:.6}, se {:.6}",
        report.samples,
        fmt_opt(report.srmse),
        report.rmse,
        report.se
    );
    let out = EvalFile {
        config_hash: hash,
        checkpoint: checkpoint.display().to_string(),
        checkpoint_config_hash: ck.config_hash,
        split: format!("{split:?}").to_lowercase(),
        report,
    };
    write_json(&out_path(cfg, &format!("eval_report{sfx}.json"))?, &out)?;
    Ok(vec![line])
}

/// Spec of `network` with the configured geometry. Ungrouped networks get
/// `k` times the per-group channels so budgets match.
fn network_spec(cfg: &RunConfig, network: &str, input_channels: usize) -> Result<ModelSpec, CliError> {
    let (family, grouping) = parse_network(network)?;
    if cfg.model.k == 0 {
        return Err(CliError::Config(format!("model.k: is required for network `{network}`")));
    }
    let mut c = cfg.clone();
    c.model.family = family;
    c.model.grouping = grouping;
    if grouping == Grouping::None && cfg.model.preset.is_none() {
        c.model.channels = cfg.model.channels.iter().map(|ch| ch * cfg.model.k).collect();
    }
    c.model_spec(input_channels)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub repeat: usize,
    pub target: String,
    pub model: String,
    pub srmse: Option<f64>,
    pub rmse: f64,
    pub param_count: usize,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Target names for each repeat.
fn compare_targets(cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    if !cfg.compare.targets.is_empty() {
        return Ok(cfg.compare.targets.clone());
    }
    let prep = prepare(cfg, &cfg.data.target)?;
    let names = prep.data.names();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let picks: Vec<String> = if cfg.compare.repeats <= names.len() {
        sample(&mut rng, names.len(), cfg.compare.repeats)
            .into_iter()
            .map(|i| names[i].clone())
            .collect()
    } else {
        use rand::Rng;
        (0..cfg.compare.repeats)
            .map(|_| names[rng.gen_range(0..names.len())].clone())
            .collect()
    };
    Ok(picks)
}

fn write_compare_summary(cfg: &RunConfig, hash: &str, order: &[String], rows: &[CompareRow]) -> Result<Vec<String>, CliError> {
    let mut body = String::from("model,mean_srmse,std_srmse,runs\n");
    let mut lines = Vec::new();
    for m in order {
        let vals: Vec<f64> = rows.iter().filter(|r| &r.model == m).filter_map(|r| r.srmse).collect();
        if vals.is_empty() {
            continue;
        }
        let (mean, std) = mean_std(&vals);
        body.push_str(&format!("{m},{mean},{std},{}\n", vals.len()));
        lines.push(format!("{m:>20}  {mean:.4} ± {std:.4}  (n={})", vals.len()));
    }
    write_csv_file(&out_path(cfg, "compare.csv")?, hash, body.as_bytes())?;
    Ok(lines)
}

/// Runs the baselines and every configured network over repeated target
/// picks. Completed rows are kept on disk when a member run fails.
pub fn cmd_compare(cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    let hash = cfg.hash();
    let targets = compare_targets(cfg)?;
    let mut order: Vec<String> = cfg
        .compare
        .ridge_lambdas
        .iter()
        .map(|&l| if l == 0.0 { "linear".to_string() } else { format!("ridge({l})") })
        .collect();
    order.extend(cfg.compare.networks.iter().cloned());

    let runs_path = out_path(cfg, "compare_runs.csv")?;
    let mut runs = fs::File::create(&runs_path)?;
    writeln!(runs, "# config_hash={hash}")?;
    writeln!(runs, "repeat,target,model,srmse,rmse,param_count")?;
    let mut rows: Vec<CompareRow> = Vec::new();

    let mut run_all = |rows: &mut Vec<CompareRow>| -> Result<(), CliError> {
        for (r, target) in targets.iter().enumerate() {
            let mut rc = cfg.clone();
            rc.seed = cfg.seed.wrapping_add(r as u64);
            let prep = prepare(&rc, target)?;
            let mut push = |rows: &mut Vec<CompareRow>, model: &str, rep: &EvalReport, params: usize| -> Result<(), CliError> {
                let row = CompareRow {
                    repeat: r + 1,
                    target: target.clone(),
                    model: model.to_string(),
                    srmse: rep.srmse,
                    rmse: rep.rmse,
                    param_count: params,
                };
                writeln!(
                    runs,
                    "{},{},{},{},{},{}",
                    row.repeat,
                    row.target,
                    row.model,
                    row.srmse.map_or_else(String::new, |v| v.to_string()),
                    row.rmse,
                    row.param_count
                )?;
                runs.flush()?;
                rows.push(row);
                Ok(())
            };
            for (i, &lambda) in cfg.compare.ridge_lambdas.iter().enumerate() {
                let (fit, rep) = linear_baseline(&prep.train, &prep.test, lambda)?;
                push(rows, &order[i], &rep, fit.weights.len() + 1)?;
            }
            for net in &cfg.compare.networks {
                let spec = network_spec(&rc, net, prep.train.n_channels())?;
                let model = build_for(&rc, &spec, &prep)?;
                let params = model.count_params();
                let outcome = train(model, &prep.train, &rc.train_config())?;
                let rep = evaluate(&outcome.model, &prep.test, net)?;
                push(rows, net, &rep, params)?;
            }
        }
        Ok(())
    };
    let result = run_all(&mut rows);
    let mut lines = write_compare_summary(cfg, &hash, &order, &rows)?;
    result?;
    lines.insert(0, format!("compare: {} target picks {:?}", targets.len(), targets));
    Ok(lines)
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamCountReport {
    config_hash: String,
    grouping: Grouping,
    param_count: usize,
    vanilla_param_count: usize,
    layer_plan: Vec<LayerGeometry>,
}

/// Round-robin groups: the count does not depend on group membership.
fn balanced(n: usize, k: usize) -> Result<GroupAssignment, CliError> {
    Ok(GroupAssignment::new((0..n).map(|i| i % k).collect(), k)?)
}

pub fn cmd_param_count(cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    let hash = cfg.hash();
    let n = match cfg.model.preset {
        Some(p) => p.input_channels(),
        None => prepare(cfg, &cfg.data.target)?.train.n_channels(),
    };
    let spec = cfg.model_spec(n)?;
    let assignment = (spec.grouping == Grouping::Explicit)
        .then(|| balanced(n, spec.k))
        .transpose()?;
    let model = build_model(&spec, assignment.as_ref(), cfg.seed)?;
    let mut vanilla = spec.clone();
    if spec.is_grouped() {
        for (i, s) in vanilla.stages.iter_mut().enumerate() {
            s.channels = spec.stage_channels(i);
        }
        vanilla.grouping = Grouping::None;
        vanilla.k = 1;
    }
    let vanilla_count = build_model(&vanilla, None, cfg.seed)?.count_params();
    let plan = spec.geometry()?;
    let report = ParamCountReport {
        config_hash: hash,
        grouping: spec.grouping,
        param_count: model.count_params(),
        vanilla_param_count: vanilla_count,
        layer_plan: plan.clone(),
    };
    write_json(&out_path(cfg, "param_count.json")?, &report)?;
    let mut lines = vec![
        format!("plan: {}", describe_plan(&plan)),
        format!("param_count: {}", report.param_count),
        format!("vanilla_param_count: {vanilla_count}"),
    ];
    if spec.is_grouped() {
        let rel = if report.param_count < vanilla_count { "<" } else { ">=" };
        lines.push(format!(
            "grouped {} {rel} vanilla {vanilla_count} (ratio {:.4})",
            report.param_count,
            report.param_count as f64 / vanilla_count as f64
        ));
    }
    Ok(lines)
}
