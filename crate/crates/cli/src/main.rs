//! Experiment harness for the vvplab library.
//!
//! Every subcommand writes its artifact atomically (temp file + rename) and
//! drops a `<out>.manifest.json` beside it recording the command line, merged
//! configuration, seed, and artifact hashes. Identical invocations reproduce
//! byte-identical artifacts.
//!
//! Exit codes: 0 success, 1 construction/runtime failure (structured JSON on
//! stderr), 2 flag/validation errors.

mod manifest;
mod output;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use vvplab::adversary::gap_experiment;
use vvplab::bounds::rademacher_estimate;
use vvplab::instance::LearnerContract;
use vvplab::learners::{projected_sgd_contract, sgd_train, SgdConfig, StepSize};
use vvplab::reduction::{run_reduction, sco_library, ReductionConfig};
use vvplab::seed::derive_seed;
use vvplab::shatter::{LabelingSet, ShatterInstance, ShatterParams};
use vvplab::{SignVectorSet, VvpError};

use manifest::ManifestBuilder;

#[derive(Parser)]
#[command(name = "vvplab", version, about = "Hard-instance constructions and experiments for convex vector-valued prediction")]
struct Cli {
    /// Master seed; all randomness derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads (default: VVPLAB_JOBS or all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a certified near-orthogonal unit-vector family, write it as JSON.
    Signset {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        #[arg(long, default_value_t = 10)]
        max_restarts: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a shattering instance and brute-force its ±ε margins.
    #[command(name = "shatter-verify")]
    ShatterVerify {
        #[arg(long)]
        d1: usize,
        #[arg(long)]
        d2: usize,
        #[arg(long = "B")]
        b: usize,
        #[arg(long = "J")]
        j: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        /// `all` or `random:<count>`.
        #[arg(long, default_value = "all")]
        labelings: String,
        #[arg(long)]
        out: PathBuf,
        /// Also store the instance (params, both families, W0) as JSON.
        #[arg(long)]
        save_instance: Option<PathBuf>,
    },
    /// Adversarial-ERM gap experiment on a stored instance.
    #[command(name = "erm-gap")]
    ErmGap {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        sample_size: usize,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train projected subgradient SGD on a stored instance, write the model.
    Sgd {
        #[arg(long)]
        instance: PathBuf,
        /// Training-sample size, drawn i.i.d. uniform from the support.
        #[arg(long)]
        n: usize,
        /// Update steps (default: one pass, = n).
        #[arg(long)]
        steps: Option<usize>,
        /// Constant step size (default: 1/(G·√T)).
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert a library optimization problem and run the full pipeline.
    Reduce {
        /// linear | point_distance | coordinate_median.
        #[arg(long)]
        problem: String,
        #[arg(long, default_value_t = 10)]
        d: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        #[arg(long, default_value = "sgd")]
        learner: String,
        /// Index-encoding scale (default 4b/δ).
        #[arg(long)]
        c: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo Rademacher complexity of a stored instance's family.
    Rademacher {
        #[arg(long)]
        instance: PathBuf,
        /// Sample size, drawn i.i.d. uniform from the support.
        #[arg(long)]
        n: usize,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-product gap-experiment sweep over shattering parameters.
    Sweep {
        /// JSON config with base parameters; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// `key=v1,v2,...`; repeatable, at most twice. Keys: n, trials, d1,
        /// d2, k, B, J, eps, tau.
        #[arg(long)]
        vary: Vec<String>,
        #[arg(long)]
        d1: Option<usize>,
        #[arg(long)]
        d2: Option<usize>,
        #[arg(long = "B")]
        b: Option<usize>,
        #[arg(long = "J")]
        j: Option<usize>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        sample_size: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

enum CliError {
    /// Flag-level validation problems; exit 2.
    Usage(String),
    /// Construction or runtime failures; exit 1 with JSON on stderr.
    Run { kind: String, message: String },
}

impl From<VvpError> for CliError {
    fn from(e: VvpError) -> Self {
        let kind = match &e {
            VvpError::SignSetConstruction { .. } => "construction",
            VvpError::BoundCheckFailed { .. } => "bound-check",
            VvpError::Serialization(_) => "serialization",
            VvpError::TooLarge(_) => "too-large",
            _ => "invalid-input",
        };
        CliError::Run {
            kind: kind.into(),
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run {
            kind: "io".into(),
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let jobs = cli
        .jobs
        .or_else(|| {
            std::env::var("VVPLAB_JOBS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .filter(|&j| j > 0);
    if let Some(j) = jobs {
        // Ignore the error when a pool already exists (tests call run twice).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(CliError::Run { kind, message }) => {
            eprintln!("{}", json!({ "error": message, "kind": kind }));
            ExitCode::from(1)
        }
    }
}

fn load_instance(path: &PathBuf) -> Result<ShatterInstance, CliError> {
    let text = std::fs::read_to_string(path)?;
    Ok(ShatterInstance::from_json(&text)?)
}

fn parse_labelings(spec: &str, seed: u64) -> Result<LabelingSet, CliError> {
    if spec == "all" {
        return Ok(LabelingSet::All);
    }
    if let Some(count) = spec.strip_prefix("random:") {
        let count: usize = count
            .parse()
            .map_err(|_| CliError::Usage(format!("bad labeling count in {spec:?}")))?;
        return Ok(LabelingSet::Random {
            count,
            seed: derive_seed(seed, 0x1AB),
        });
    }
    Err(CliError::Usage(format!(
        "--labelings expects `all` or `random:<count>`, got {spec:?}"
    )))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let seed = cli.seed;
    let jobs = rayon::current_num_threads();
    match cli.command {
        Command::Signset {
            d,
            count,
            tau,
            max_restarts,
            out,
        } => {
            let config = json!({
                "d": d, "count": count, "tau": tau,
                "max_restarts": max_restarts, "seed": seed,
            });
            let set = SignVectorSet::build(d, count, tau, max_restarts, seed)?;
            let certificate = set.verify()?;
            let mut mb = ManifestBuilder::new(seed, jobs, config);
            let text = serde_json::to_string_pretty(&set)
                .map_err(|e| VvpError::Serialization(e.to_string()))?;
            mb.write_artifact(&out, text.as_bytes())?;
            mb.finish(&out)?;
            println!(
                "signset: {count} vectors in R^{d}, certificate {certificate:.6} ≤ τ = {tau}"
            );
            Ok(())
        }

        Command::ShatterVerify {
            d1,
            d2,
            b,
            j,
            eps,
            tau,
            labelings,
            out,
            save_instance,
        } => {
            let params = ShatterParams {
                d1,
                d2,
                examples_per_block: b,
                blocks: j,
                margin: eps,
                tau,
            };
            params.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let set = parse_labelings(&labelings, seed)?;
            let config = json!({
                "params": params, "labelings": labelings, "seed": seed,
            });
            let inst = ShatterInstance::build(params, seed)?;
            let report = inst.verify_shattering(&set)?;
            let mut mb = ManifestBuilder::new(seed, jobs, config);
            let text = serde_json::to_string_pretty(&report)
                .map_err(|e| VvpError::Serialization(e.to_string()))?;
            mb.write_artifact(&out, text.as_bytes())?;
            if let Some(path) = save_instance {
                mb.write_artifact(&path, inst.to_json()?.as_bytes())?;
            }
            mb.finish(&out)?;
            println!(
                "shatter-verify: {} labelings × {} examples, pass = {}, worst violation {:.3e}",
                report.labelings_checked, report.n_examples, report.pass, report.worst_violation
            );
            Ok(())
        }

        Command::ErmGap {
            instance,
            sample_size,
            trials,
            out,
        } => {
            let inst = load_instance(&instance)?;
            let n = inst.params().n_examples();
            if sample_size == 0 || sample_size > n {
                return Err(CliError::Usage(format!(
                    "--sample-size {sample_size} must lie in 1..={n}"
                )));
            }
            let config = json!({
                "instance": instance.display().to_string(),
                "params": inst.params(),
                "sample_size": sample_size, "trials": trials, "seed": seed,
            });
            let rows = gap_experiment(&inst, sample_size, trials, seed)?;
            let mut csv = String::from("trial,unseen_fraction,empirical_loss,excess\n");
            for r in &rows {
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    r.trial, r.unseen_fraction, r.empirical_loss, r.excess
                ));
            }
            let mut mb = ManifestBuilder::new(seed, jobs, config);
            mb.write_artifact(&out, csv.as_bytes())?;
            mb.finish(&out)?;
            let mean: f64 = rows.iter().map(|r| r.excess).sum::<f64>() / rows.len().max(1) as f64;
            println!(
                "erm-gap: {trials} trials, mean excess {mean:.6} ({:.4}·ε)",
                mean / inst.params().margin
            );
            Ok(())
        }

        Command::Sgd {
            instance,
            n,
            steps,
            eta,
            out,
        } => {
            let inst = load_instance(&instance)?;
            if n == 0 {
                return Err(CliError::Usage("--n must be ≥ 1".into()));
            }
            let steps = steps.unwrap_or(n);
            let config = json!({
                "instance": instance.display().to_string(),
                "n": n, "steps": steps, "eta": eta, "seed": seed,
            });
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
            let support = inst.vvp().n_inputs();
            let sample: Vec<usize> = (0..n).map(|_| rng.gen_range(0..support)).collect();
            let mut cfg = SgdConfig::one_pass(n);
            cfg.steps = steps;
            if let Some(e) = eta {
                cfg.step = StepSize::Constant(e);
            }
            let model = sgd_train(inst.vvp(), &sample, &cfg, derive_seed(seed, 2))?;
            let population = inst.vvp().population_loss(&model)?;
            let w_star =
                inst.labeling_matrix(&vec![false; inst.params().n_examples()])?;
            let excess = population - inst.vvp().population_loss(&w_star)?;
            let mut mb = ManifestBuilder::new(seed, jobs, config);
            let text = serde_json::to_string_pretty(&model)
                .map_err(|e| VvpError::Serialization(e.to_string()))?;
            mb.write_artifact(&out, text.as_bytes())?;
            mb.finish(&out)?;
            println!(
                "sgd: {steps} steps on {n} samples, population loss {population:.6}, excess {excess:.6}"
            );
            Ok(())
        }

        Command::Reduce {
            problem,
            d,
            n,
            seeds,
            learner,
            c,
            out,
        } => {
            if seeds == 0 || n == 0 {
                return Err(CliError::Usage("--seeds and --n must be ≥ 1".into()));
            }
            let contract: LearnerContract = match learner.as_str() {
                "sgd" => projected_sgd_contract(2.0, 2f64.sqrt()),
                other => {
                    return Err(CliError::Usage(format!(
                        "unknown learner {other:?}; expected sgd"
                    )))
                }
            };
            let sco = sco_library(&problem, d)?;
            let config = json!({
                "problem": problem, "d": d, "n": n, "seeds": seeds,
                "learner": learner, "c": c, "seed": seed,
            });
            let cfg = ReductionConfig { n, c, seed };
            let seed_list: Vec<u64> = (0..seeds as u64).map(|i| seed.wrapping_add(i)).collect();
            let rows = run_reduction(&sco, &contract, &cfg, &seed_list)?;
            let mut csv =
                String::from("seed,n,c,delta,vvp_rate_eps_n,measured_excess,bound\n");
            for r in &rows {
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    r.seed, r.n, r.c, r.delta, r.vvp_rate_eps_n, r.measured_excess, r.bound
                ));
            }
            let mut mb = ManifestBuilder::new(seed, jobs, config);
            mb.write_artifact(&out, csv.as_bytes())?;
            mb.finish(&out)?;
            let mean: f64 =
                rows.iter().map(|r| r.measured_excess).sum::<f64>() / rows.len() as f64;
            let rate = rows[0].vvp_rate_eps_n;
            println!(
                "reduce: mean excess {mean:.6} vs bound {:.6} (2ε(n) = {:.6}, 10/√n = {:.6})",
                rows[0].bound,
                2.0 * rate,
                10.0 / (n as f64).sqrt()
            );
            Ok(())
        }

        Command::Rademacher {
            instance,
            n,
            trials,
            out,
        } => {
            let inst = load_instance(&instance)?;
            if n == 0 || trials == 0 {
                return Err(CliError::Usage("--n and --trials must be ≥ 1".into()));
            }
            let config = json!({
                "instance": instance.display().to_string(),
                "n": n, "trials": trials, "seed": seed,
            });
            let support = inst.params().n_examples();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
            let sample: Vec<usize> = (0..n).map(|_| rng.gen_range(0..support)).collect();
            let est = rademacher_estimate(&inst, &sample, trials, derive_seed(seed, 2))?;
            let mut mb = ManifestBuilder::new(seed, jobs, config);
            let text = serde_json::to_string_pretty(&est)
                .map_err(|e| VvpError::Serialization(e.to_string()))?;
            mb.write_artifact(&out, text.as_bytes())?;
            mb.finish(&out)?;
            println!(
                "rademacher: estimate {:.6} ± {:.2e} ≤ bound {:.6}",
                est.value, est.standard_error, est.bound
            );
            Ok(())
        }

        Command::Sweep {
            config,
            vary,
            d1,
            d2,
            b,
            j,
            eps,
            tau,
            sample_size,
            trials,
            out,
        } => {
            let mut base = match &config {
                Some(path) => {
                    let text = std::fs::read_to_string(path)?;
                    serde_json::from_str::<sweep::SweepBase>(&text)
                        .map_err(|e| CliError::Usage(format!("bad config: {e}")))?
                }
                None => sweep::SweepBase::default(),
            };
            if let Some(v) = d1 {
                base.d1 = v;
            }
            if let Some(v) = d2 {
                base.d2 = v;
            }
            if let Some(v) = b {
                base.b = v;
            }
            if let Some(v) = j {
                base.j = v;
            }
            if let Some(v) = eps {
                base.eps = v;
            }
            if let Some(v) = tau {
                base.tau = v;
            }
            if let Some(v) = sample_size {
                base.sample_size = v;
            }
            if let Some(v) = trials {
                base.trials = v;
            }
            let varies = vary
                .iter()
                .map(|s| sweep::parse_vary(s))
                .collect::<Result<Vec<_>, _>>()
                .map_err(CliError::Usage)?;
            if varies.len() > 2 {
                return Err(CliError::Usage(
                    "at most two --vary variables are supported".into(),
                ));
            }
            let merged = json!({
                "base": base, "vary": vary, "seed": seed,
            });
            let csv = sweep::run_sweep(&base, &varies, seed).map_err(|message| {
                CliError::Run {
                    kind: "sweep".into(),
                    message,
                }
            })?;
            let mut mb = ManifestBuilder::new(seed, jobs, merged);
            mb.write_artifact(&out, csv.as_bytes())?;
            mb.finish(&out)?;
            println!("sweep: wrote {}", out.display());
            Ok(())
        }
    }
}
