//! `stylevec`: runs the style-vector pipeline one stage at a time inside a
//! run directory.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use stylevec_core::adapter::{PlayerId, RoutingTensor};
use stylevec_core::game::{Attribute, AttributeProfile};
use stylevec_core::persist::report::{
    cosine_histogram, curve_rows, profile_row, roc_rows, steering_rows, winrate_rows, HistogramRow,
};
use stylevec_core::persist::{
    load_checkpoint, load_config, load_datasets, read_summary, save_checkpoint, save_config, save_datasets, write_csv,
    write_json, Checkpoint, Summary,
};
use stylevec_core::pipeline::{
    clustering, fit_fewshot, gen_data, gen_population, interpolation, merge_check, probe_fitted, probe_set, steering,
    stylometry_seen, stylometry_unseen, within_consistency, ClusteringReport, FewshotVectors, GameData,
    InterpolationReport, MergeReport, Population, RunConfig, SteeringReport,
};
use stylevec_core::stylelab::{ConsistencyResult, StylometryResult};
use stylevec_core::trainer::{eval_per_player, finetune_mhr, train_base, CurvePoint, EvalTable, Split};
use stylevec_core::{Error, PolicyNet, Result};

#[derive(Parser, Debug)]
#[command(name = "stylevec", version, about = "Style vectors for a synthetic two-player game")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Run config (TOML). Defaults to <out>/config.toml, then built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run directory for all artifacts.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,
    /// Overrides the root seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample players and partition them into base, fine-tuning, and few-shot sets.
    GenPopulation,
    /// Simulate every player's games.
    GenData,
    /// Train the base behavioral-cloning model.
    TrainBase,
    /// Fine-tune adapters and per-player style vectors.
    Finetune,
    /// Fit style vectors for held-out game sets with the network frozen.
    Fewshot,
    /// Identify seen and unseen players by cosine similarity.
    Stylometry,
    /// Compare vectors fit on disjoint subsets of the same players.
    Consistency,
    /// Fit vectors on merged player pairs.
    MergeCheck,
    /// Measure attribute profiles of every fine-tuned style.
    Probe,
    /// Build style deltas and steer players with them.
    Steer {
        /// Attribute to steer (repeatable); defaults to the config list.
        #[arg(long = "attribute")]
        attributes: Vec<Attribute>,
        /// Steering strength (repeatable for a sweep); defaults to the config value.
        #[arg(long = "strength", allow_negative_numbers = true)]
        strengths: Vec<f64>,
    },
    /// Win rate along blends of weak and strong styles.
    Interpolate {
        #[arg(long)]
        pairs: Option<usize>,
        #[arg(long)]
        games: Option<usize>,
    },
    /// Write every CSV report from the completed stages.
    Report {
        /// Histogram bins over [-1, 1].
        #[arg(long, default_value_t = 40)]
        bins: usize,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 3,
        Error::MissingArtifact(_) => 4,
        Error::Format(_) | Error::Json(_) => 5,
        Error::Argument(_) => 6,
        Error::Dimension { .. } => 7,
        Error::Contract(_) => 8,
        Error::Divergence(_) => 9,
        Error::Io(_) => 10,
    }
}

const USAGE_EXIT: u8 = 2;

fn report_error(class: &str, message: &str) {
    let body = serde_json::json!({ "error": { "class": class, "message": message } });
    eprintln!("{body}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report_error("usage", e.to_string().trim());
            return ExitCode::from(USAGE_EXIT);
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!(
                "{}",
                serde_json::json!({ "ok": true, "summary": summary.display().to_string() })
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            report_error(e.class(), &e.to_string());
            ExitCode::from(exit_code(&e))
        }
    }
}

struct Run {
    cfg: RunConfig,
    out: PathBuf,
}

impl Run {
    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn summary<T: Serialize>(&self, command: &str, result: T) -> Result<PathBuf> {
        let path = self.path(&format!("{command}.json"));
        write_json(&path, &Summary::new(command, &self.cfg, result)?)?;
        Ok(path)
    }

    fn read<T: for<'de> Deserialize<'de>>(&self, command: &str) -> Result<T> {
        let path = self.path(&format!("{command}.json"));
        match read_summary::<T>(&path) {
            Err(Error::MissingArtifact(_)) => Err(Error::MissingArtifact(format!(
                "{} (run `stylevec {command}` first)",
                path.display()
            ))),
            other => other.map(|s| s.result),
        }
    }

    fn population(&self) -> Result<Population> {
        self.read("gen-population")
    }

    fn data(&self) -> Result<GameData> {
        let by_id = |v: Vec<_>| -> BTreeMap<PlayerId, _> {
            v.into_iter()
                .map(|d: stylevec_core::population::PlayerDataset| (d.player(), d))
                .collect()
        };
        let games = load_datasets(&self.path("data/games.bin")).map_err(upstream("gen-data"))?;
        let seen = load_datasets(&self.path("data/seen-query.bin")).map_err(upstream("gen-data"))?;
        Ok(GameData {
            datasets: by_id(games),
            seen_query: by_id(seen),
        })
    }

    fn checkpoint(&self, name: &str, stage: &'static str) -> Result<Checkpoint> {
        load_checkpoint(&self.path(&format!("checkpoints/{name}.json"))).map_err(upstream(stage))
    }

    fn base(&self) -> Result<PolicyNet<f32>> {
        self.checkpoint("base", "train-base")?
            .net
            .ok_or_else(|| Error::Format("base checkpoint holds no network".into()))
    }

    fn finetuned(&self) -> Result<(PolicyNet<f32>, RoutingTensor<f32>)> {
        let c = self.checkpoint("finetuned", "finetune")?;
        match (c.net, c.routing) {
            (Some(n), Some(z)) => Ok((n, z)),
            _ => Err(Error::Format(
                "fine-tuned checkpoint needs a network and routing".into(),
            )),
        }
    }

    fn routing(&self, name: &str) -> Result<RoutingTensor<f32>> {
        self.checkpoint(name, "fewshot")?
            .routing
            .ok_or_else(|| Error::Format(format!("{name} holds no routing rows")))
    }

    fn fewshot(&self) -> Result<FewshotVectors> {
        Ok(FewshotVectors {
            reference: self.routing("fewshot-reference")?,
            unseen_query: self.routing("fewshot-unseen-query")?.rows().collect(),
            seen_query: self.routing("fewshot-seen-query")?.rows().collect(),
        })
    }
}

fn upstream(stage: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::MissingArtifact(what) => Error::MissingArtifact(format!("{what} (run `stylevec {stage}` first)")),
        other => other,
    }
}

fn resolve_config(common: &Common) -> Result<RunConfig> {
    let stored = common.out.join("config.toml");
    let mut cfg = match &common.config {
        Some(p) => load_config(p)?,
        None if stored.exists() => load_config(&stored)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn rows_of(styles: &[stylevec_core::StyleVector<f32>], cfg: &RunConfig) -> Result<RoutingTensor<f32>> {
    let mut z = RoutingTensor::new(cfg.net.modules, cfg.net.heads);
    for s in styles {
        let p = s
            .player
            .ok_or_else(|| Error::Argument("style vector without a player id".into()))?;
        z.push(s, p)?;
    }
    Ok(z)
}

#[derive(Debug, Serialize, Deserialize)]
struct DataSummary {
    players: usize,
    games: usize,
    samples: usize,
    seen_query_players: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct BaseSummary {
    best_epoch: usize,
    pooled_test_accuracy: f64,
    curve: Vec<CurvePoint>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FinetuneSummary {
    best_epoch: usize,
    warnings: Vec<String>,
    base_test: EvalTable,
    finetuned_test: EvalTable,
    curve: Vec<CurvePoint>,
}

#[derive(Debug, Serialize, Deserialize)]
struct StylometrySummary {
    seen_top1: f64,
    unseen_top1: f64,
    seen: StylometryResult,
    unseen: StylometryResult,
    clustering: ClusteringReport,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProbeSummary {
    profiles: Vec<(PlayerId, AttributeProfile)>,
}

fn run(cli: Cli) -> Result<PathBuf> {
    let cfg = resolve_config(&cli.common)?;
    let run = Run {
        cfg,
        out: cli.common.out.clone(),
    };
    let cfg = &run.cfg;
    match cli.command {
        Command::GenPopulation => {
            let pop = gen_population(cfg)?;
            save_config(&run.path("config.toml"), cfg)?;
            run.summary("gen-population", pop)
        }
        Command::GenData => {
            let pop = run.population()?;
            let data = gen_data(cfg, &pop)?;
            let all: Vec<_> = data.datasets.values().collect();
            let seen: Vec<_> = data.seen_query.values().collect();
            save_datasets(&run.path("data/games.bin"), &all)?;
            save_datasets(&run.path("data/seen-query.bin"), &seen)?;
            run.summary(
                "gen-data",
                DataSummary {
                    players: all.len(),
                    games: all.iter().map(|d| d.n_games()).sum(),
                    samples: all.iter().map(|d| d.n_samples()).sum(),
                    seen_query_players: seen.len(),
                },
            )
        }
        Command::TrainBase => {
            let pop = run.population()?;
            let data = run.data()?;
            let out = train_base(&data.select(&pop.partition.base)?, cfg.net, &cfg.train, &cfg.streams())?;
            save_checkpoint(
                &run.path("checkpoints/base.json"),
                &Checkpoint {
                    net: Some(out.net),
                    routing: None,
                },
            )?;
            run.summary(
                "train-base",
                BaseSummary {
                    best_epoch: out.best_epoch,
                    pooled_test_accuracy: out.test_accuracy,
                    curve: out.curve,
                },
            )
        }
        Command::Finetune => {
            let pop = run.population()?;
            let data = run.data()?;
            let base = run.base()?;
            let sets = data.select(&pop.partition.finetune)?;
            let out = finetune_mhr(&base, &sets, &cfg.train, &cfg.streams())?;
            let refs: Vec<_> = sets.iter().collect();
            let base_test = eval_per_player(&base, None, &refs, Split::Test)?;
            let finetuned_test = eval_per_player(&out.net, Some(&out.routing), &refs, Split::Test)?;
            save_checkpoint(
                &run.path("checkpoints/finetuned.json"),
                &Checkpoint {
                    net: Some(out.net),
                    routing: Some(out.routing),
                },
            )?;
            run.summary(
                "finetune",
                FinetuneSummary {
                    best_epoch: out.best_epoch,
                    warnings: out.warnings,
                    base_test,
                    finetuned_test,
                    curve: out.curve,
                },
            )
        }
        Command::Fewshot => {
            let pop = run.population()?;
            let data = run.data()?;
            let (net, _) = run.finetuned()?;
            let fv = fit_fewshot(cfg, &net, &pop, &data)?;
            let save = |name: &str, z: RoutingTensor<f32>| {
                save_checkpoint(
                    &run.path(&format!("checkpoints/{name}.json")),
                    &Checkpoint {
                        net: None,
                        routing: Some(z),
                    },
                )
            };
            save("fewshot-reference", fv.reference.clone())?;
            save("fewshot-unseen-query", rows_of(&fv.unseen_query, cfg)?)?;
            save("fewshot-seen-query", rows_of(&fv.seen_query, cfg)?)?;
            run.summary(
                "fewshot",
                serde_json::json!({
                    "reference": fv.reference.len(),
                    "unseen_query": fv.unseen_query.len(),
                    "seen_query": fv.seen_query.len(),
                }),
            )
        }
        Command::Stylometry => {
            let pop = run.population()?;
            let (_, z) = run.finetuned()?;
            let fv = run.fewshot()?;
            let seen = stylometry_seen(&z, &fv)?;
            let unseen = stylometry_unseen(&z, &fv)?;
            run.summary(
                "stylometry",
                StylometrySummary {
                    seen_top1: seen.top1(),
                    unseen_top1: unseen.top1(),
                    clustering: clustering(cfg, &pop, &z)?,
                    seen,
                    unseen,
                },
            )
        }
        Command::Consistency => {
            let pop = run.population()?;
            let data = run.data()?;
            let (net, _) = run.finetuned()?;
            let (_, result) = within_consistency(cfg, &net, &pop, &data)?;
            run.summary("consistency", result)
        }
        Command::MergeCheck => {
            let data = run.data()?;
            let (net, z) = run.finetuned()?;
            run.summary("merge-check", merge_check(cfg, &net, &z, &data)?)
        }
        Command::Probe => {
            let (net, z) = run.finetuned()?;
            let probes = probe_set(cfg)?;
            run.summary(
                "probe",
                ProbeSummary {
                    profiles: probe_fitted(&net, &z, &probes)?,
                },
            )
        }
        Command::Steer { attributes, strengths } => {
            let (net, z) = run.finetuned()?;
            let profiles: ProbeSummary = run.read("probe")?;
            let probes = probe_set(cfg)?;
            let attributes = if attributes.is_empty() {
                cfg.analysis.steer_attributes.clone()
            } else {
                attributes
            };
            let strengths = if strengths.is_empty() {
                vec![cfg.analysis.steer_strength]
            } else {
                strengths
            };
            let mut reports = Vec::new();
            for &s in &strengths {
                let mut c = cfg.clone();
                c.analysis.steer_strength = s;
                for &a in &attributes {
                    reports.push(steering(&c, &net, &z, &profiles.profiles, &probes, a)?);
                }
            }
            run.summary("steer", reports)
        }
        Command::Interpolate { pairs, games } => {
            let (net, z) = run.finetuned()?;
            let mut c = cfg.clone();
            if let Some(p) = pairs {
                c.analysis.interpolation_pairs = p;
            }
            if let Some(g) = games {
                c.analysis.interpolation_games = g;
            }
            run.summary("interpolate", interpolation(&c, &net, &z)?)
        }
        Command::Report { bins } => report(&run, bins),
    }
}

fn report(run: &Run, bins: usize) -> Result<PathBuf> {
    if bins == 0 {
        return Err(Error::Argument("--bins must be positive".into()));
    }
    let base: BaseSummary = run.read("train-base")?;
    let ft: FinetuneSummary = run.read("finetune")?;
    let stylo: StylometrySummary = run.read("stylometry")?;
    let cons: ConsistencyResult = run.read("consistency")?;
    let merge: MergeReport = run.read("merge-check")?;
    let probe: ProbeSummary = run.read("probe")?;
    let steer: Vec<SteeringReport> = run.read("steer")?;
    let interp: InterpolationReport = run.read("interpolate")?;
    let pop = run.population()?;
    let dir = run.path("reports");

    let mut curve = curve_rows("base", &base.curve);
    curve.extend(curve_rows("finetune", &ft.curve));
    write_csv(&dir.join("training_curve.csv"), curve)?;

    let merge_avg: Vec<f64> = merge.pairs.iter().map(|p| p.cos_average).collect();
    let merge_pop: Vec<f64> = merge
        .pairs
        .iter()
        .flat_map(|p| p.cos_baseline.iter().copied())
        .collect();
    let mut hist: Vec<HistogramRow> = Vec::new();
    hist.extend(cosine_histogram("within_player", &cons.within, bins));
    hist.extend(cosine_histogram("cross_player", &cons.cross, bins));
    hist.extend(cosine_histogram("merged_vs_average", &merge_avg, bins));
    hist.extend(cosine_histogram("merged_vs_random_row", &merge.cos_random, bins));
    hist.extend(cosine_histogram("merged_vs_population", &merge_pop, bins));
    write_csv(&dir.join("cosine_histograms.csv"), hist)?;

    write_csv(&dir.join("winrate_vs_lambda.csv"), winrate_rows(&interp))?;
    write_csv(&dir.join("steering_deltas.csv"), steer.iter().flat_map(steering_rows))?;
    let mut roc = roc_rows("seen", &stylo.seen.roc());
    roc.extend(roc_rows("unseen", &stylo.unseen.roc()));
    write_csv(&dir.join("roc.csv"), roc)?;
    let profiles = probe
        .profiles
        .iter()
        .map(|(p, prof)| Ok(profile_row(*p, pop.spec(*p)?.cluster, prof)))
        .collect::<Result<Vec<_>>>()?;
    write_csv(&dir.join("attribute_profiles.csv"), profiles)?;

    run.summary(
        "report",
        serde_json::json!({
            "finetune_mean_test_accuracy": ft.finetuned_test.mean,
            "base_mean_test_accuracy": ft.base_test.mean,
            "seen_top1": stylo.seen_top1,
            "unseen_top1": stylo.unseen_top1,
            "adjusted_rand": stylo.clustering.adjusted_rand,
            "consistency_gap": cons.gap(),
            "merge_fraction_closer_to_average": merge.fraction_closer_to_average,
            "interpolation_spearman": interp.pooled_spearman,
            "steering": steer.iter().map(|s| serde_json::json!({
                "attribute": s.attribute,
                "strength": s.strength,
                "fraction_increased": s.fraction_increased,
                "mean_on_target": s.mean_on_target,
                "mean_abs_off_target": s.mean_abs_off_target,
            })).collect::<Vec<_>>(),
            "csv": [
                "reports/training_curve.csv",
                "reports/cosine_histograms.csv",
                "reports/winrate_vs_lambda.csv",
                "reports/steering_deltas.csv",
                "reports/roc.csv",
                "reports/attribute_profiles.csv",
            ],
        }),
    )
}
