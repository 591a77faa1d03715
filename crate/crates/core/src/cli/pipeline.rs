use std::collections::HashMap;
use std::fmt::{Display, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{CliError, RunConfig, SampleSource};
use crate::logic::{predicate, print, BinaryOp, LogicalForm, ObjectPredicate};
use crate::meaning::{make_sample, WorldSample};
use crate::net::{load_checkpoint, object_accuracy, save_checkpoint, train_with_history, GeneratedScenes, ModelParams};
use crate::probe::{
    collect_alignments, collect_binary_triples, collect_negation_pairs, evaluate_operator, evaluate_theories,
    fit_binary_operator, fit_unary_operator, pca_project, read_operator, write_operator, AgreementReport, AlignedPair,
    LinearOperator, OperatorRole, TestItems,
};
use crate::scene::{annotate_scene, generate_scene, ingest_dataset, serialize_dataset, AnnotatedScene, AttributeSchema};
use crate::seeds::mix;

type Result<T> = std::result::Result<T, CliError>;

trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T, E: Display> StageExt<T> for std::result::Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| CliError::Stage {
            stage,
            message: e.to_string(),
        })
    }
}

fn fail<T>(stage: &'static str, message: impl Into<String>) -> Result<T> {
    Err(CliError::Stage {
        stage,
        message: message.into(),
    })
}

/// Published agreement values (objects, worlds, tables) per table and row.
pub const REFERENCE: &[(&str, &str, [f64; 3])] = &[
    ("theories", "random", [0.50, 0.00, 0.00]),
    ("theories", "literal", [0.74, 0.27, 0.05]),
    ("theories", "human", [0.92, 0.63, 0.35]),
    ("negation", "random", [0.50, 0.00, 0.00]),
    ("negation", "literal", [0.50, 0.12, 0.03]),
    ("negation", "negation", [0.97, 0.81, 0.45]),
    ("disjunction", "random", [0.50, 0.00, 0.00]),
    ("disjunction", "literal", [0.58, 0.09, 0.01]),
    ("disjunction", "disjunction", [0.92, 0.54, 0.19]),
    ("conjunction", "random", [0.50, 0.00, 0.00]),
    ("conjunction", "literal", [0.81, 0.19, 0.01]),
    ("conjunction", "conjunction", [0.90, 0.56, 0.37]),
];

const ROLES: [OperatorRole; 3] = [OperatorRole::Negation, OperatorRole::Disjunction, OperatorRole::Conjunction];

/// File layout of an output directory.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub dir: PathBuf,
}

impl Artifacts {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn train_data(&self) -> PathBuf {
        self.dir.join("train.jsonl")
    }

    pub fn test_data(&self) -> PathBuf {
        self.dir.join("test.jsonl")
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.dir.join("model.ckpt")
    }

    pub fn train_report(&self) -> PathBuf {
        self.dir.join("train-report.txt")
    }

    pub fn theories(&self) -> PathBuf {
        self.dir.join("theories.txt")
    }

    pub fn operator(&self, role: OperatorRole) -> PathBuf {
        self.dir.join(format!("operator-{}.txt", role.name()))
    }

    pub fn operator_report(&self, role: OperatorRole) -> PathBuf {
        self.dir.join(format!("report-{}.txt", role.name()))
    }

    pub fn pca(&self, role: OperatorRole) -> PathBuf {
        self.dir.join(format!("pca-{}.csv", role.name()))
    }

    pub fn summary(&self) -> PathBuf {
        self.dir.join("summary.txt")
    }

    fn create(&self, stage: &'static str) -> Result<()> {
        fs::create_dir_all(&self.dir).stage(stage)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Generates one split. Scene `i` is drawn from `(split seed, 2i)` and
/// annotated from `(split seed, 2i + 1)`.
pub fn generate_split(config: &RunConfig, schema: &AttributeSchema, split: Split) -> Result<Vec<AnnotatedScene>> {
    let (seed, count) = match split {
        Split::Train => (mix(config.seeds().data, 0), config.train_scenes),
        Split::Test => (mix(config.seeds().data, 1), config.test_scenes),
    };
    (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let (scene, form) = generate_scene(mix(seed, 2 * i), schema, &config.scenes)?;
            annotate_scene(
                mix(seed, 2 * i + 1),
                schema,
                scene,
                form,
                &config.scenes.sampler,
                &config.annotators,
            )
        })
        .collect::<std::result::Result<Vec<_>, _>>()
        .stage("gen-data")
}

fn dataset_path(config: &RunConfig, split: Split) -> PathBuf {
    let arts = Artifacts::new(&config.out_dir);
    match split {
        Split::Train => config.train_dataset.clone().unwrap_or_else(|| arts.train_data()),
        Split::Test => config.test_dataset.clone().unwrap_or_else(|| arts.test_data()),
    }
}

fn load_split(config: &RunConfig, schema: &AttributeSchema, split: Split, stage: &'static str) -> Result<Vec<AnnotatedScene>> {
    let path = dataset_path(config, split);
    ingest_dataset(&path, schema).map_err(|e| CliError::Stage {
        stage,
        message: format!("{}: {e}", path.display()),
    })
}

fn load_model(schema: &AttributeSchema, path: &Path, stage: &'static str) -> Result<ModelParams> {
    let (params, model) = load_checkpoint(path).map_err(|e| CliError::Stage {
        stage,
        message: format!("{}: {e}", path.display()),
    })?;
    if model.feature_dim != schema.feature_dim() {
        return fail(
            stage,
            format!(
                "checkpoint expects {} object features, the schema has {}",
                model.feature_dim,
                schema.feature_dim()
            ),
        );
    }
    Ok(params)
}

fn world_sample(config: &RunConfig, schema: &AttributeSchema, stage: &'static str) -> Result<WorldSample> {
    let seed = config.seeds().sample;
    match config.sample_source {
        SampleSource::Generated => make_sample(seed, schema, config.sample_size, config.scenes.bounds).stage(stage),
        SampleSource::Dataset => {
            let train = load_split(config, schema, Split::Train, stage)?;
            WorldSample::from_dataset(seed, &train, config.sample_size).stage(stage)
        }
    }
}

fn stamp(report: &mut AgreementReport, config: &RunConfig) {
    report.push_meta("config_digest", config.digest());
    for (k, v) in config.seeds().entries() {
        report.push_meta(k, v);
    }
    report.push_meta(
        "sample_source",
        match config.sample_source {
            SampleSource::Generated => "generated",
            SampleSource::Dataset => "dataset",
        },
    );
}

fn write_text(path: &Path, text: &str, stage: &'static str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::Stage {
        stage,
        message: format!("{}: {e}", path.display()),
    })
}

#[derive(Debug, Clone)]
pub struct GenOutcome {
    pub train_path: PathBuf,
    pub test_path: PathBuf,
    pub train_count: usize,
    pub test_count: usize,
}

/// Writes the train and test splits into the output directory.
pub fn cmd_gen_data(config: &RunConfig) -> Result<GenOutcome> {
    let schema = config.schema()?;
    let arts = Artifacts::new(&config.out_dir);
    arts.create("gen-data")?;
    let train = generate_split(config, &schema, Split::Train)?;
    let test = generate_split(config, &schema, Split::Test)?;
    serialize_dataset(&train, &schema, &arts.train_data()).stage("gen-data")?;
    serialize_dataset(&test, &schema, &arts.test_data()).stage("gen-data")?;
    Ok(GenOutcome {
        train_path: arts.train_data(),
        test_path: arts.test_data(),
        train_count: train.len(),
        test_count: test.len(),
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub report: AgreementReport,
    pub accuracy: f64,
}

/// Trains on a fresh scene stream and scores object accuracy on the test
/// split (the configured test file if there is one, else a regenerated
/// copy of the split).
pub fn cmd_train(config: &RunConfig) -> Result<TrainOutcome> {
    const STAGE: &str = "train";
    let schema = config.schema()?;
    let arts = Artifacts::new(&config.out_dir);
    arts.create(STAGE)?;
    let model = config.model_config(&schema);
    let mut source = GeneratedScenes {
        schema: schema.clone(),
        config: config.scenes.clone(),
        seed: mix(config.seeds().train, 1),
    };
    let (params, losses) = train_with_history(&model, &mut source).stage(STAGE)?;
    save_checkpoint(&params, &model, &arts.checkpoint()).stage(STAGE)?;

    let heldout = match &config.test_dataset {
        Some(_) => load_split(config, &schema, Split::Test, STAGE)?,
        None => generate_split(config, &schema, Split::Test)?,
    };
    let scenes: Vec<_> = heldout.into_iter().map(|a| a.scene).collect();
    let accuracy = object_accuracy(&params, &scenes, &schema).stage(STAGE)?;

    let mut report = AgreementReport::new("training", config.seeds().sample, config.sample_size);
    stamp(&mut report, config);
    report.push_meta("train_steps", model.train_steps);
    report.push_meta("heldout_scenes", scenes.len());
    report.push_meta("heldout_accuracy", format!("{accuracy:.6}"));
    let window = losses.len().min(100);
    if window > 0 {
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        report.push_meta("loss_first", format!("{:.6}", mean(&losses[..window])));
        report.push_meta("loss_last", format!("{:.6}", mean(&losses[losses.len() - window..])));
    }
    write_text(&arts.train_report(), &report.to_text(), STAGE)?;
    Ok(TrainOutcome {
        checkpoint: arts.checkpoint(),
        report,
        accuracy,
    })
}

fn with_overrides(config: &RunConfig, dataset: Option<&Path>) -> RunConfig {
    let mut c = config.clone();
    if let Some(d) = dataset {
        c.test_dataset = Some(d.to_path_buf());
    }
    c
}

/// Random, literal and human agreement on the test split.
pub fn cmd_eval_theories(config: &RunConfig, checkpoint: Option<&Path>, dataset: Option<&Path>) -> Result<AgreementReport> {
    const STAGE: &str = "eval-theories";
    let config = &with_overrides(config, dataset);
    let schema = config.schema()?;
    let arts = Artifacts::new(&config.out_dir);
    arts.create(STAGE)?;
    let params = load_model(&schema, checkpoint.unwrap_or(&arts.checkpoint()), STAGE)?;
    let test = load_split(config, &schema, Split::Test, STAGE)?;
    let sample = world_sample(config, &schema, STAGE)?;
    let mut report = evaluate_theories(&params, &test, &sample, &schema, mix(config.seeds().theory, 0)).stage(STAGE)?;
    stamp(&mut report, config);
    write_text(&arts.theories(), &report.to_text(), STAGE)?;
    Ok(report)
}

fn role_stream(role: OperatorRole) -> u64 {
    match role {
        OperatorRole::Negation => 1,
        OperatorRole::Conjunction => 2,
        OperatorRole::Disjunction => 3,
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub operator: LinearOperator,
    pub operator_path: PathBuf,
    pub report: AgreementReport,
    pub report_path: PathBuf,
}

/// Fits an operator on alignments from the train split and evaluates it on
/// alignments from the test split.
pub fn cmd_fit_op(
    config: &RunConfig,
    checkpoint: Option<&Path>,
    dataset: Option<&Path>,
    role: OperatorRole,
) -> Result<FitOutcome> {
    const STAGE: &str = "fit-op";
    let config = &with_overrides(config, dataset);
    let schema = config.schema()?;
    let arts = Artifacts::new(&config.out_dir);
    arts.create(STAGE)?;
    let params = load_model(&schema, checkpoint.unwrap_or(&arts.checkpoint()), STAGE)?;
    let train = load_split(config, &schema, Split::Train, STAGE)?;
    let test = load_split(config, &schema, Split::Test, STAGE)?;
    let sample = world_sample(config, &schema, STAGE)?;
    let aligned_train = collect_alignments(&params, &train, &sample, &schema).stage(STAGE)?;
    let aligned_test = collect_alignments(&params, &test, &sample, &schema).stage(STAGE)?;

    let name = role.name();
    let (operator, fit_items, test_triples) = match role.binary_op() {
        None => {
            let pairs = collect_negation_pairs(&aligned_train, &schema).stage(STAGE)?;
            if pairs.is_empty() {
                return fail(STAGE, format!("no aligned pairs for {name} in the training split"));
            }
            let op = fit_unary_operator(pairs.iter().map(|p| p.vectors(&aligned_train)), config.ridge).stage(STAGE)?;
            (op, pairs.len(), Vec::new())
        }
        Some(bop) => {
            let triples = collect_binary_triples(&aligned_train, &schema, bop).stage(STAGE)?;
            if triples.is_empty() {
                return fail(STAGE, format!("no aligned pairs for {name} in the training split"));
            }
            let op = fit_binary_operator(triples.iter().map(|t| t.vectors(&aligned_train)), config.ridge, role)
                .stage(STAGE)?;
            let held = collect_binary_triples(&aligned_test, &schema, bop).stage(STAGE)?;
            (op, triples.len(), held)
        }
    };
    let items = match role.binary_op() {
        None => TestItems::Unary(&aligned_test),
        Some(_) => TestItems::Binary(&aligned_test, &test_triples),
    };
    let empty = match &items {
        TestItems::Unary(a) => a.is_empty(),
        TestItems::Binary(_, t) => t.is_empty(),
    };
    if empty {
        return fail(STAGE, format!("no aligned pairs for {name} in the held-out split"));
    }
    let seed = mix(config.seeds().theory, role_stream(role));
    let mut report = evaluate_operator(&params, &operator, items, &sample, &schema, seed).stage(STAGE)?;
    stamp(&mut report, config);
    report.push_meta("aligned_train", aligned_train.len());
    report.push_meta("aligned_test", aligned_test.len());
    report.push_meta("fit_items", fit_items);

    write_operator(&operator, &arts.operator(role)).stage(STAGE)?;
    write_text(&arts.operator_report(role), &report.to_text(), STAGE)?;
    Ok(FitOutcome {
        operator,
        operator_path: arts.operator(role),
        report,
        report_path: arts.operator_report(role),
    })
}

#[derive(Debug, Clone)]
pub struct PcaOutcome {
    pub path: PathBuf,
    pub points: usize,
    pub explained_variance: Vec<f64>,
}

/// Labels equivalent forms with the text of the first one seen.
struct Labels {
    schema: AttributeSchema,
    seen: HashMap<ObjectPredicate, String>,
}

impl Labels {
    fn label(&mut self, form: &LogicalForm) -> Result<String> {
        let p = predicate(form, &self.schema).stage("pca")?;
        Ok(self.seen.entry(p).or_insert_with(|| print(form)).clone())
    }
}

/// Projects raw test-split messages and their operator images onto two
/// principal components.
pub fn cmd_pca(config: &RunConfig, checkpoint: Option<&Path>, dataset: Option<&Path>, role: OperatorRole) -> Result<PcaOutcome> {
    const STAGE: &str = "pca";
    let config = &with_overrides(config, dataset);
    let schema = config.schema()?;
    let arts = Artifacts::new(&config.out_dir);
    let op_path = arts.operator(role);
    if !op_path.exists() {
        return fail(STAGE, format!("missing operator {}; run fit-op first", op_path.display()));
    }
    let operator = read_operator(&op_path).stage(STAGE)?;
    if operator.role != role {
        return fail(STAGE, format!("{} holds a {} operator", op_path.display(), operator.role.name()));
    }
    let params = load_model(&schema, checkpoint.unwrap_or(&arts.checkpoint()), STAGE)?;
    let test = load_split(config, &schema, Split::Test, STAGE)?;
    let sample = world_sample(config, &schema, STAGE)?;
    let aligned = collect_alignments(&params, &test, &sample, &schema).stage(STAGE)?;

    let mut labels = Labels {
        schema: schema.clone(),
        seen: HashMap::new(),
    };
    // (vector, label, transformed)
    let mut points: Vec<(Vec<f64>, String, bool)> = Vec::new();
    for a in &aligned {
        points.push((a.message.values.clone(), labels.label(&a.form)?, false));
    }
    match role.binary_op() {
        None => {
            for a in &aligned {
                let form = LogicalForm::not(a.form.clone());
                points.push((operator.apply(&a.message.values).values, labels.label(&form)?, true));
            }
        }
        Some(bop) => {
            for (i, j) in argument_pairs(&aligned, &schema, bop)? {
                let form = bop.apply(aligned[i].form.clone(), aligned[j].form.clone());
                let v = operator.apply_pair(&aligned[i].message.values, &aligned[j].message.values);
                points.push((v.values, labels.label(&form)?, true));
            }
        }
    }
    let vectors: Vec<Vec<f64>> = points.iter().map(|p| p.0.clone()).collect();
    let projection = pca_project(&vectors, 2).stage(STAGE)?;

    let mut out = String::new();
    writeln!(out, "# config_digest {}", config.digest()).unwrap();
    for (k, v) in config.seeds().entries() {
        writeln!(out, "# {k} {v}").unwrap();
    }
    writeln!(out, "# operator {}", role.name()).unwrap();
    writeln!(
        out,
        "# explained_variance {:.6} {:.6}",
        projection.explained_variance[0], projection.explained_variance[1]
    )
    .unwrap();
    writeln!(out, "x,y,label,kind").unwrap();
    for ((_, label, transformed), xy) in points.iter().zip(&projection.coordinates) {
        let kind = if *transformed { "transformed" } else { "raw" };
        writeln!(out, "{:.6},{:.6},{label},{kind}", xy[0], xy[1]).unwrap();
    }
    write_text(&arts.pca(role), &out, STAGE)?;
    Ok(PcaOutcome {
        path: arts.pca(role),
        points: points.len(),
        explained_variance: projection.explained_variance,
    })
}

fn argument_pairs(aligned: &[AlignedPair], schema: &AttributeSchema, op: BinaryOp) -> Result<Vec<(usize, usize)>> {
    let mut pairs: Vec<(usize, usize)> = collect_binary_triples(aligned, schema, op)
        .stage("pca")?
        .into_iter()
        .map(|t| (t.left.min(t.right), t.left.max(t.right)))
        .collect();
    pairs.sort_unstable();
    pairs.dedup();
    Ok(pairs)
}

#[derive(Debug, Clone)]
pub struct ReproduceOutcome {
    pub summary_path: PathBuf,
    pub summary: String,
    pub accuracy: f64,
    pub theories: AgreementReport,
    pub operators: Vec<AgreementReport>,
}

fn summary_row(out: &mut String, table: &str, report: &AgreementReport) {
    for &(_, label, reference) in REFERENCE.iter().filter(|r| r.0 == table) {
        match report.row(label) {
            Some(r) => writeln!(
                out,
                "{label:<12} measured {:.3}/{:.3}/{:.3}  published {:.2}/{:.2}/{:.2}  count {}",
                r.agreement.objects,
                r.agreement.worlds,
                r.agreement.tables,
                reference[0],
                reference[1],
                reference[2],
                r.count
            )
            .unwrap(),
            None => writeln!(
                out,
                "{label:<12} measured -  published {:.2}/{:.2}/{:.2}  count 0",
                reference[0], reference[1], reference[2]
            )
            .unwrap(),
        }
    }
    for n in &report.notes {
        writeln!(out, "note {n}").unwrap();
    }
}

/// gen-data, train, eval-theories, then fit-op and pca for each operator,
/// finishing with a summary next to the published values.
pub fn cmd_reproduce(config: &RunConfig) -> Result<ReproduceOutcome> {
    let mut config = config.clone();
    let gen = cmd_gen_data(&config)?;
    config.train_dataset = Some(gen.train_path);
    config.test_dataset = Some(gen.test_path);
    let trained = cmd_train(&config)?;
    let theories = cmd_eval_theories(&config, None, None)?;
    let mut operators = Vec::new();
    for role in ROLES {
        operators.push(cmd_fit_op(&config, None, None, role)?.report);
        cmd_pca(&config, None, None, role)?;
    }

    let mut out = String::new();
    writeln!(out, "summary").unwrap();
    writeln!(out, "config_digest {}", config.digest()).unwrap();
    for (k, v) in config.seeds().entries() {
        writeln!(out, "{k} {v}").unwrap();
    }
    writeln!(out, "sample_size {}", config.sample_size).unwrap();
    writeln!(out, "train_scenes {} test_scenes {}", gen.train_count, gen.test_count).unwrap();
    writeln!(out, "heldout_accuracy {:.4}", trained.accuracy).unwrap();
    writeln!(out).unwrap();
    writeln!(out, "[theories] objects/worlds/tables").unwrap();
    summary_row(&mut out, "theories", &theories);
    for report in &operators {
        writeln!(out).unwrap();
        writeln!(out, "[{}] objects/worlds/tables", report.title).unwrap();
        for key in ["aligned_train", "aligned_test", "fit_items"] {
            if let Some(v) = report.meta(key) {
                writeln!(out, "{key} {v}").unwrap();
            }
        }
        summary_row(&mut out, &report.title, report);
    }
    let arts = Artifacts::new(&config.out_dir);
    write_text(&arts.summary(), &out, "reproduce")?;
    Ok(ReproduceOutcome {
        summary_path: arts.summary(),
        summary: out,
        accuracy: trained.accuracy,
        theories,
        operators,
    })
}
