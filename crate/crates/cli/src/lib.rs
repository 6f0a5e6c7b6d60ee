//! Command-line front end for the `finid` library.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use finid::curve::PlanarCurve;
use finid::encode::{encode_fin, BiometricDescriptor, DescriptorType, FinContour, Role};
use finid::finspace::{per_bin_ap, rank_identities, train_reliability_model, LabelledQuery};
use finid::io::{
    atomic_write, bins_csv, load_index, load_model, pr_csv, ranked_csv, read_dataset, store_index,
    store_model, write_dataset, ContourFile, ContourRecord, ModelKind, RunConfig,
};
use finid::lnbnn::{
    evaluate_identification, ClassifyOptions, IdentificationReport, IdentityIndex, RankedResult,
};
use finid::stroke::{
    detect_fins, evaluate_detection, train_quality_model, uniform_thresholds, DetectParams,
    DetectionImage, EvalDetection, RegionContour, ShapeOnly,
};
use finid::synth::{generate_dataset, generate_population, region_pool};

#[derive(Parser, Debug)]
#[command(
    name = "finid",
    version,
    about = "Fin contour detection, encoding and identification"
)]
pub struct Cli {
    /// Run configuration (TOML); defaults apply to missing keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic population and dataset.
    Synth(SynthArgs),
    /// Train or apply the stroke-quality detector on region pools.
    #[command(subcommand)]
    Detect(DetectCommand),
    /// Encode one fin contour into descriptors.
    Encode(EncodeArgs),
    /// Build a descriptor index from reference contours.
    Index(IndexArgs),
    /// Rank identities for a query contour.
    Identify(IdentifyArgs),
    /// Train the fin-space reliability model.
    FinspaceTrain(FinspaceTrainArgs),
    /// Evaluate identification or detection.
    #[command(subcommand)]
    Evaluate(EvaluateCommand),
    /// Collect evaluation results into one table.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub individuals: usize,
    /// Observations per individual (one reference, the rest queries).
    #[arg(long)]
    pub per: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a synthetic region pool with its true contour per
    /// individual under `pools/`.
    #[arg(long)]
    pub region_pools: bool,
}

#[derive(Subcommand, Debug)]
pub enum DetectCommand {
    /// Train the quality regressor. Closed curves of each pool file are
    /// candidate regions; the first open curve is the true fin contour.
    Train {
        #[arg(long = "pool", required = true, num_args = 1..)]
        pools: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Detect fin strokes in one region pool.
    Run {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Detected strokes, best first.
        #[arg(long)]
        out: PathBuf,
        /// Keep at most this many detections.
        #[arg(long)]
        top: Option<usize>,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum RoleArg {
    Reference,
    Query,
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    #[arg(long)]
    pub contour: PathBuf,
    /// Curve to encode (defaults to the first).
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long, value_enum, default_value_t = RoleArg::Query)]
    pub role: RoleArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct IndexArgs {
    /// Dataset manifest; its reference entries are indexed.
    #[arg(long, conflicts_with = "contour")]
    pub manifest: Option<PathBuf>,
    /// Contour files whose curves carry `class=` labels.
    #[arg(long, num_args = 1..)]
    pub contour: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Families {
    Dogn,
    Normal,
    Both,
}

impl Families {
    fn options(self, n_scales: usize) -> ClassifyOptions {
        match self {
            Families::Dogn => ClassifyOptions::dogn(n_scales),
            Families::Both => ClassifyOptions::both_families(n_scales),
            Families::Normal => ClassifyOptions {
                weights: vec![1.0; n_scales],
                families: vec![DescriptorType::Normal],
            },
        }
    }
}

#[derive(Args, Debug)]
pub struct IdentifyArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub query: PathBuf,
    #[arg(long)]
    pub name: Option<String>,
    /// Fin-space reliability model; without it the baseline ranking is used.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Families::Dogn)]
    pub families: Families,
    /// Ranked CSV (`rank,class,score`); stdout if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FinspaceTrainArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Manifest whose query entries are the training queries.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-bin AP of held-out pairs as CSV.
    #[arg(long)]
    pub bins_out: Option<PathBuf>,
    /// Cross-validated evaluation of the held-out rankings as JSON.
    #[arg(long)]
    pub heldout_out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum EvaluateCommand {
    /// AP / mAP of ranking the manifest's queries against an index.
    Identification {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Rank with this fin-space model instead of the baseline.
        #[arg(long, conflicts_with = "cross_validate")]
        model: Option<PathBuf>,
        /// Rank with fin-space models trained by two-fold cross-validation.
        #[arg(long)]
        cross_validate: bool,
        #[arg(long, value_enum, default_value_t = Families::Dogn)]
        families: Families,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        pr_out: Option<PathBuf>,
    },
    /// Detection AP over quality thresholds for labelled region pools.
    Detection {
        #[arg(long = "pool", required = true, num_args = 1..)]
        pools: Vec<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Evaluation JSON files.
    #[arg(long = "eval", required = true, num_args = 1..)]
    pub evals: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Identification results as written by `evaluate identification`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub method: String,
    pub queries: usize,
    pub report: IdentificationReport,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    if cli.verbose {
        let _ = env_logger::Builder::new()
            .filter_level(log::LevelFilter::Info)
            .try_init();
    }
    let config = match &cli.config {
        Some(p) => RunConfig::read(p).with_context(|| format!("reading config {}", p.display()))?,
        None => RunConfig::default(),
    };
    let ctx = Ctx {
        config,
        explicit_config: cli.config.is_some(),
    };
    match cli.command {
        Command::Synth(a) => ctx.synth(a),
        Command::Detect(c) => ctx.detect(c),
        Command::Encode(a) => ctx.encode(a),
        Command::Index(a) => ctx.index(a),
        Command::Identify(a) => ctx.identify(a),
        Command::FinspaceTrain(a) => ctx.finspace_train(a),
        Command::Evaluate(c) => ctx.evaluate(c),
        Command::Report(a) => report(a),
    }
}

/// Machine-readable error record for a failed run.
pub fn error_record(err: &anyhow::Error) -> serde_json::Value {
    let lib = err.chain().find_map(|e| e.downcast_ref::<finid::Error>());
    let mut rec = serde_json::json!({
        "error": lib.map_or("error", finid::Error::kind),
        "message": format!("{err:#}"),
    });
    if let Some(finid::Error::Parse { offset, .. }) = lib {
        rec["offset"] = (*offset).into();
    }
    rec
}

struct Ctx {
    config: RunConfig,
    explicit_config: bool,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    atomic_write(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn read_contours(path: &Path) -> Result<ContourFile> {
    ContourFile::read(path).with_context(|| format!("reading {}", path.display()))
}

fn pick_fin(path: &Path, name: Option<&str>) -> Result<FinContour> {
    let file = read_contours(path)?;
    let rec = match name {
        Some(n) => file.curves.iter().find(|c| c.name == n),
        None => file.curves.first(),
    }
    .ok_or_else(|| anyhow!("{}: no matching curve", path.display()))?;
    Ok(rec.to_fin()?)
}

fn read_pool(path: &Path) -> Result<(Vec<RegionContour>, Option<PlanarCurve>)> {
    let file = read_contours(path)?;
    let mut regions = Vec::new();
    let mut truth = None;
    for c in &file.curves {
        if c.curve.is_closed() {
            regions.push(c.to_region()?);
        } else if truth.is_none() {
            truth = Some(c.curve.clone());
        }
    }
    Ok((regions, truth))
}

impl Ctx {
    fn detect_params(&self) -> Result<DetectParams> {
        Ok(DetectParams {
            regions: self.config.detect_regions,
            keypoints: self.config.detect_keypoints,
            scale_space: self.config.detection_params()?,
            nms_overlap: self.config.nms_overlap,
            tolerance: self.config.boundary_tolerance,
        })
    }

    fn load_index(&self, path: &Path) -> Result<IdentityIndex> {
        let expected = self.explicit_config.then(|| self.config.index_hash());
        load_index(path, expected.as_ref())
            .with_context(|| format!("loading index {}", path.display()))
    }

    fn synth(&self, a: SynthArgs) -> Result<()> {
        let population = generate_population(a.individuals, a.seed)?;
        let dataset = generate_dataset(
            &population,
            a.per,
            &self.config.perturbation_ranges(),
            a.seed,
        )?;
        write_dataset(&a.out, &dataset)?;
        if a.region_pools {
            fs::create_dir_all(a.out.join("pools"))?;
            for ind in &population {
                let (regions, truth) = region_pool(ind, a.seed ^ u64::from(ind.id))?;
                let mut curves: Vec<ContourRecord> = regions
                    .into_iter()
                    .enumerate()
                    .map(|(i, r)| ContourRecord {
                        hierarchy_rank: Some(r.hierarchy_rank),
                        ..ContourRecord::new(format!("region{i:03}"), r.boundary)
                    })
                    .collect();
                curves.push(ContourRecord {
                    class: Some(ind.id),
                    ..ContourRecord::new("truth", truth)
                });
                ContourFile::new(curves)
                    .write(&a.out.join(format!("pools/ind{:03}.contour", ind.id)))?;
            }
        }
        log::info!(
            "wrote {} contours to {}",
            dataset.entries.len(),
            a.out.display()
        );
        Ok(())
    }

    fn detect(&self, c: DetectCommand) -> Result<()> {
        let params = self.detect_params()?;
        match c {
            DetectCommand::Train { pools, out } => {
                let mut images = Vec::with_capacity(pools.len());
                for p in &pools {
                    let (regions, truth) = read_pool(p)?;
                    let truth =
                        truth.ok_or_else(|| anyhow!("{}: no open truth curve", p.display()))?;
                    images.push((regions, truth));
                }
                let forest = train_quality_model(
                    &images,
                    &params,
                    &self.config.quality_forest(),
                    &ShapeOnly,
                )?;
                store_model(ModelKind::Quality { forest }, &out)?;
            }
            DetectCommand::Run {
                pool,
                model,
                out,
                top,
            } => {
                let ModelKind::Quality { forest } = load_model(&model)? else {
                    bail!("{} is not a stroke quality model", model.display());
                };
                let (regions, _) = read_pool(&pool)?;
                let mut found = detect_fins(&regions, &params, &forest, &ShapeOnly)?;
                if let Some(k) = top {
                    found.truncate(k);
                }
                let curves = found
                    .into_iter()
                    .enumerate()
                    .map(|(i, s)| ContourRecord::new(format!("stroke{i:03}"), s.stroke.points))
                    .collect();
                ContourFile::new(curves).write(&out)?;
            }
        }
        Ok(())
    }

    fn encode(&self, a: EncodeArgs) -> Result<()> {
        #[derive(Serialize)]
        struct Dump<'a> {
            format: &'static str,
            version: u32,
            role: Role,
            keypoints: &'a [usize],
            tip_proportion: f64,
            degenerate: usize,
            descriptors: &'a [BiometricDescriptor],
        }
        let fin = pick_fin(&a.contour, a.name.as_deref())?;
        let role = match a.role {
            RoleArg::Reference => Role::Reference,
            RoleArg::Query => Role::Query,
        };
        let enc = encode_fin(&fin, role, &self.config.encode_config())?;
        write_json(
            &a.out,
            &Dump {
                format: "finid-descriptors",
                version: 1,
                role,
                keypoints: &enc.keypoints,
                tip_proportion: enc.tip_proportion,
                degenerate: enc.degenerate,
                descriptors: &enc.descriptors,
            },
        )
    }

    fn index(&self, a: IndexArgs) -> Result<()> {
        let refs: Vec<(FinContour, u32)> = if let Some(m) = &a.manifest {
            read_dataset(m)?
                .references()
                .map(|e| (e.fin.clone(), e.class))
                .collect()
        } else {
            let mut refs = Vec::new();
            for p in &a.contour {
                for c in read_contours(p)?.curves {
                    let class = c
                        .class
                        .ok_or_else(|| anyhow!("{}: curve {} has no class", p.display(), c.name))?;
                    refs.push((c.to_fin()?, class));
                }
            }
            refs
        };
        if refs.is_empty() {
            bail!("no reference contours given");
        }
        let index =
            IdentityIndex::build(&refs, &self.config.encode_config(), self.config.exact_mode)?
                .with_finspace(self.config.finspace_config())?;
        store_index(&index, &a.out)?;
        log::info!("indexed {} descriptors", index.references().len());
        Ok(())
    }

    fn reliability_model(&self, path: &Path) -> Result<finid::finspace::ReliabilityModel> {
        match load_model(path)? {
            ModelKind::Reliability { model } => Ok(model),
            _ => bail!("{} is not a fin-space reliability model", path.display()),
        }
    }

    fn identify(&self, a: IdentifyArgs) -> Result<()> {
        let index = self.load_index(&a.index)?;
        let fin = pick_fin(&a.query, a.name.as_deref())?;
        let matches = index.match_query(&fin)?;
        let ranked = match &a.model {
            Some(m) => rank_identities(&matches, &index, &self.reliability_model(m)?)?,
            None => index.classify(&matches, &a.families.options(index.n_scales())),
        };
        if let Some(flag) = &ranked.flag {
            log::warn!("{flag}");
        }
        let csv = ranked_csv(&ranked);
        match &a.out {
            Some(p) => write_text(p, &csv),
            None => {
                print!("{csv}");
                Ok(())
            }
        }
    }

    fn queries(
        &self,
        index: &IdentityIndex,
        manifest: &Path,
    ) -> Result<Vec<(finid::lnbnn::QueryMatches, u32)>> {
        let dataset = read_dataset(manifest)?;
        dataset
            .queries()
            .map(|e| Ok((index.match_query(&e.fin)?, e.class)))
            .collect()
    }

    fn finspace_train(&self, a: FinspaceTrainArgs) -> Result<()> {
        let index = self.load_index(&a.index)?;
        let qs = self.queries(&index, &a.manifest)?;
        let labelled: Vec<LabelledQuery> = qs
            .iter()
            .map(|(m, c)| LabelledQuery {
                matches: m,
                class: *c,
            })
            .collect();
        let outcome = train_reliability_model(&labelled, &index, &self.config.reliability())?;
        store_model(
            ModelKind::Reliability {
                model: outcome.model.clone(),
            },
            &a.out,
        )?;
        if let Some(p) = &a.bins_out {
            write_text(p, &bins_csv(&per_bin_ap(&labelled, &index)))?;
        }
        if let Some(p) = &a.heldout_out {
            let results: Vec<(RankedResult, u32)> = outcome
                .held_out
                .into_iter()
                .zip(qs.iter().map(|q| q.1))
                .collect();
            write_json(p, &record("finspace-cv", &results))?;
        }
        Ok(())
    }

    fn evaluate(&self, c: EvaluateCommand) -> Result<()> {
        match c {
            EvaluateCommand::Identification {
                index,
                manifest,
                model,
                cross_validate,
                families,
                out,
                pr_out,
            } => {
                let index = self.load_index(&index)?;
                let qs = self.queries(&index, &manifest)?;
                let (method, results): (String, Vec<(RankedResult, u32)>) = if cross_validate {
                    let labelled: Vec<LabelledQuery> = qs
                        .iter()
                        .map(|(m, c)| LabelledQuery {
                            matches: m,
                            class: *c,
                        })
                        .collect();
                    let outcome =
                        train_reliability_model(&labelled, &index, &self.config.reliability())?;
                    (
                        "finspace-cv".into(),
                        outcome
                            .held_out
                            .into_iter()
                            .zip(qs.iter().map(|q| q.1))
                            .collect(),
                    )
                } else if let Some(m) = &model {
                    let model = self.reliability_model(m)?;
                    let results = qs
                        .iter()
                        .map(|(m, c)| Ok((rank_identities(m, &index, &model)?, *c)))
                        .collect::<Result<Vec<_>>>()?;
                    ("finspace".into(), results)
                } else {
                    let opts = families.options(index.n_scales());
                    let name = format!("lnbnn-{}", format!("{families:?}").to_lowercase());
                    (
                        name,
                        qs.iter()
                            .map(|(m, c)| (index.classify(m, &opts), *c))
                            .collect(),
                    )
                };
                let rec = record(&method, &results);
                if let Some(p) = &pr_out {
                    write_text(p, &pr_csv(&rec.report.pr))?;
                }
                write_json(&out, &rec)
            }
            EvaluateCommand::Detection { pools, model, out } => {
                let params = self.detect_params()?;
                let ModelKind::Quality { forest } = load_model(&model)? else {
                    bail!("{} is not a stroke quality model", model.display());
                };
                let mut images = Vec::with_capacity(pools.len());
                for p in &pools {
                    let (regions, truth) = read_pool(p)?;
                    let truth =
                        truth.ok_or_else(|| anyhow!("{}: no open truth curve", p.display()))?;
                    let found = detect_fins(&regions, &params, &forest, &ShapeOnly)?;
                    let detections = found
                        .iter()
                        .map(|s| {
                            let q = finid::boundary::contour_f_measure(
                                &s.stroke.points,
                                &truth,
                                params.tolerance,
                            )?
                            .f;
                            Ok(EvalDetection {
                                f_pred: s.score.f_pred,
                                quality: vec![q],
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    images.push(DetectionImage {
                        detections,
                        n_truths: 1,
                    });
                }
                write_json(&out, &evaluate_detection(&images, &uniform_thresholds(20)))
            }
        }
    }
}

fn record(method: &str, results: &[(RankedResult, u32)]) -> EvaluationRecord {
    EvaluationRecord {
        method: method.to_string(),
        queries: results.len(),
        report: evaluate_identification(results),
    }
}

fn report(a: ReportArgs) -> Result<()> {
    let mut csv = String::from("source,method,queries,ap,map,top1\n");
    for p in &a.evals {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let rec: EvaluationRecord = serde_json::from_str(&text)
            .with_context(|| format!("{} is not an evaluation record", p.display()))?;
        let source = p
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            source, rec.method, rec.queries, rec.report.ap, rec.report.map, rec.report.top1
        ));
    }
    write_text(&a.out, &csv)
}
