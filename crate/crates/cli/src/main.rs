//! `pbd`: generate, sample, learn, sparsify and compare Poisson binomial
//! distributions from the command line.

use clap::{Args, Parser, Subcommand};
use pbd_core::io::{canonical_json, read_model, read_samples, write_model, write_samples, write_text};
use pbd_core::learner::{proper_learn, Branch, LearnConfig};
use pbd_core::oracle::{corpus_model, lower_bound_report, tv_exact};
use pbd_core::structure::sparsify;
use pbd_core::{canonicalize, Error, PbdModel};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "pbd", version, about = "Proper learning of Poisson binomial distributions")]
struct Cli {
    /// Accuracy parameter, in (0, 0.5).
    #[arg(long, global = true, default_value_t = 0.1)]
    epsilon: f64,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "PBD_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a model JSON: explicit parameters, a corpus model, or a random one.
    Gen(GenArgs),
    /// Draw samples from a model.
    Sample(SampleArgs),
    /// Learn a model from a sample file.
    Learn(LearnArgs),
    /// Reduce the number of distinct parameters of a model.
    Sparsify(SparsifyArgs),
    /// Exact total variation distance between two models.
    Tv { a: PathBuf, b: PathBuf },
    /// Two far-apart parameter sets with nearly equal distributions.
    DemoLowerbound {
        #[arg(long)]
        n: usize,
    },
    /// Learn every model of a seed range of the corpus and write CSV.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated parameters; overrides the random model.
    #[arg(long, value_delimiter = ',')]
    params: Option<Vec<f64>>,
    /// Emit corpus model number `seed` instead of uniform parameters.
    #[arg(long)]
    corpus: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct LearnArgs {
    #[arg(long)]
    samples: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    max_systems: Option<u64>,
    #[arg(long)]
    constant_c: Option<f64>,
    /// Learned model destination; the report goes to stdout.
    #[arg(long)]
    out: PathBuf,
    /// Include wall-clock time in the report (makes it non-reproducible).
    #[arg(long)]
    timings: bool,
}

#[derive(Args, Debug)]
struct SparsifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, default_value_t = 1)]
    from: u64,
    #[arg(long, default_value_t = 50)]
    to: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    max_systems: Option<u64>,
    #[arg(long)]
    constant_c: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

/// Independent per-task seed from the master seed.
fn derive_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

fn config(eps: f64, seed: u64, c: Option<f64>, max_systems: Option<u64>) -> LearnConfig {
    let mut cfg = LearnConfig::new(eps);
    cfg.seed = seed;
    if let Some(c) = c {
        cfg.c = c;
    }
    if let Some(m) = max_systems {
        cfg.max_systems = m;
    }
    cfg
}

fn print_json(v: &Value) -> Result<(), Error> {
    println!("{}", canonical_json(v)?);
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    let eps = cli.epsilon;
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::Epsilon(eps));
    }
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Gen(a) => {
            let model = if let Some(params) = a.params {
                canonicalize(&params)?
            } else if a.corpus {
                corpus_model(a.seed)
            } else {
                let n = a.n.ok_or_else(|| Error::InvalidArgument("gen needs --n, --params or --corpus".into()))?;
                let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
                canonicalize(&(0..n).map(|_| rng.random::<f64>()).collect::<Vec<_>>())?
            };
            if let Some(n) = a.n {
                if n != model.n() {
                    return Err(Error::InvalidArgument(format!("--n {n} disagrees with the model's n {}", model.n())));
                }
            }
            write_model(&a.out, &model)
        }
        Command::Sample(a) => {
            let model = read_model(&a.model)?;
            write_samples(&a.out, &model.sample(a.count, a.seed))
        }
        Command::Learn(a) => {
            let samples = read_samples(&a.samples, Some(a.n))?;
            let cfg = config(eps, a.seed, a.constant_c, a.max_systems);
            let report = proper_learn(&samples, a.n, &cfg)?;
            write_model(&a.out, &report.output)?;
            let mut v = serde_json::to_value(&report)?;
            if !a.timings {
                v.as_object_mut().unwrap().remove("wall_time_s");
            }
            print_json(&v)
        }
        Command::Sparsify(a) => {
            let model = read_model(&a.model)?;
            let out = sparsify(&model, eps)?;
            write_model(&a.out, &out.model)?;
            let r = &out.report;
            print_json(&json!({
                "distinct_before": r.distinct_before,
                "distinct_after": r.distinct_after,
                "tv_exact": tv_exact(&model, &out.model),
                "mean_delta": r.mean_delta,
                "var_delta": r.var_delta,
                "fallback_bands": r.fallback_bands.len(),
            }))
        }
        Command::Tv { a, b } => {
            let tv = tv_exact(&read_model(&a)?, &read_model(&b)?);
            println!("{}", canonical_json(&tv)?);
            Ok(())
        }
        Command::DemoLowerbound { n } => print_json(&serde_json::to_value(lower_bound_report(n)?)?),
        Command::Bench(a) => bench(eps, &a),
    }
}

fn bench(eps: f64, a: &BenchArgs) -> Result<(), Error> {
    if a.from > a.to {
        return Err(Error::InvalidArgument(format!("empty seed range {}..={}", a.from, a.to)));
    }
    let mut csv = String::from("seed,n,epsilon,regime,systems_tried,tv,wall_time_s\n");
    for seed in a.from..=a.to {
        let truth: PbdModel = corpus_model(seed);
        let cfg = config(eps, derive_seed(a.seed, 2 * seed + 1), a.constant_c, a.max_systems);
        let samples = truth.sample(cfg.sample_budget(), derive_seed(a.seed, 2 * seed));
        let start = std::time::Instant::now();
        let (regime, tried, tv) = match proper_learn(&samples, truth.n(), &cfg) {
            Ok(r) => {
                let regime = match (r.branch, r.system_regime) {
                    (Branch::ShiftedBinomial, _) => "shifted_binomial".to_string(),
                    (_, Some(g)) => format!("{g:?}").to_lowercase(),
                    _ => "system".to_string(),
                };
                (regime, r.systems_tried, tv_exact(&truth, &r.output))
            }
            Err(Error::Exhausted { tried, .. }) => ("exhausted".to_string(), tried, f64::NAN),
            Err(e) => return Err(e),
        };
        let row = format!("{seed},{},{eps},{regime},{tried},{tv},{:.3}", truth.n(), start.elapsed().as_secs_f64());
        // progress on stderr; the table itself goes to --out
        eprintln!("{row}");
        writeln!(csv, "{row}").unwrap();
    }
    write_text(&a.out, &csv)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let report = json!({"error": "usage", "message": e.to_string().trim_end()});
            eprintln!("{}", canonical_json(&report).unwrap_or_else(|_| report.to_string()));
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut report = json!({"error": e.kind(), "message": e.to_string()});
            if let Error::Exhausted { tried, free_count } = e {
                report["systems_tried"] = json!(tried);
                report["free_count"] = json!(free_count);
            }
            eprintln!("{}", canonical_json(&report).unwrap_or_else(|_| report.to_string()));
            if matches!(e, Error::Exhausted { .. }) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
