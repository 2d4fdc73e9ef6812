use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use dksel::bench::{scaling_suite, write_bench_csv, BenchConfig};
use dksel::metrics::{pareto_sweep, summarize, write_eval_csv, DEFAULT_THETAS};
use dksel::model::{relevance_from_query, TIGHT_LAMBDA};
use dksel::synth::{synth_corpus, SynthConfig};
use dksel::{fw, io, Error, InitStrategy, Method, QueryContext, SelectParams, SelectionVector};

#[derive(Parser)]
#[command(name = "dksel", version, about = "Diverse top-k selection over embedding pools")]
struct Cli {
    /// Worker threads for sweeps, benchmarks and large matrix products
    /// (overrides DKSEL_THREADS; default 1).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select k items for one query and write a JSON report.
    Select(SelectArgs),
    /// Evaluate methods over a theta grid and write per-query CSV records.
    Sweep(SweepArgs),
    /// Time methods over a (k, theta) grid.
    Bench(BenchArgs),
    /// Generate a synthetic clustered corpus with gold sets.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Fw,
    Mmr,
    Dpp,
    Topk,
    Exact,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Fw => Method::Fw,
            MethodArg::Mmr => Method::Mmr,
            MethodArg::Dpp => Method::Dpp,
            MethodArg::Topk => Method::TopK,
            MethodArg::Exact => Method::Exact,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Topk,
    Uniform,
}

#[derive(Args)]
struct SolverFlags {
    #[arg(long, default_value_t = TIGHT_LAMBDA)]
    lambda: f64,
    /// Accept lambda < 2 (the relaxation is then no longer tight).
    #[arg(long)]
    allow_small_lambda: bool,
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-9)]
    gap_tol: f64,
}

impl SolverFlags {
    fn params(&self, k: usize, theta: f64) -> SelectParams {
        SelectParams {
            lambda: self.lambda,
            max_iters: self.max_iters,
            gap_tol: self.gap_tol,
            allow_small_lambda: self.allow_small_lambda,
            ..SelectParams::new(k, theta)
        }
    }
}

#[derive(Args)]
struct SelectArgs {
    /// Candidate pool (DKSEL1 file).
    #[arg(long)]
    pool: PathBuf,
    /// Query embeddings (DKSEL1 file); row chosen by --query-row.
    #[arg(long, conflicts_with = "relevance", required_unless_present = "relevance")]
    query: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    query_row: usize,
    /// JSON array of n precomputed relevance scores, instead of --query.
    #[arg(long)]
    relevance: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "fw")]
    method: MethodArg,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0.5)]
    theta: f64,
    /// Recorded in the report; every method is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "topk")]
    init: InitArg,
    #[command(flatten)]
    solver: SolverFlags,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    pool: PathBuf,
    /// Gold file (JSON lines).
    #[arg(long)]
    gold: PathBuf,
    /// Query embeddings referenced by `embedding_ref` in the gold file.
    #[arg(long)]
    query_pool: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "fw,mmr,dpp,topk")]
    methods: Vec<MethodArg>,
    /// Comma-separated theta grid; 0.1,...,0.9 by default.
    #[arg(long, value_delimiter = ',')]
    thetas: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[command(flatten)]
    solver: SolverFlags,
    /// Per-query CSV output.
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON with per-(method, theta) means.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    pool: PathBuf,
    /// Query embeddings (DKSEL1 file).
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "fw,mmr")]
    methods: Vec<MethodArg>,
    #[arg(long, value_delimiter = ',', default_value = "25,100")]
    k_values: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.7,0.9")]
    thetas: Vec<f64>,
    #[arg(long, default_value_t = 2)]
    warmup: usize,
    #[arg(long, default_value_t = 5)]
    runs: usize,
    #[command(flatten)]
    solver: SolverFlags,
    /// CSV output; the config is written next to it with a `.json` extension.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 20_000)]
    n: usize,
    #[arg(long, default_value_t = 256)]
    d: usize,
    #[arg(long, default_value_t = 100)]
    clusters: usize,
    #[arg(long, default_value_t = 20)]
    redundancy: usize,
    #[arg(long, default_value_t = 200)]
    queries: usize,
    #[arg(long, default_value_t = 5)]
    relevant_per_query: usize,
    #[arg(long, default_value_t = 0.6)]
    spread: f64,
    #[arg(long, default_value_t = 0.45)]
    duplicate_noise: f64,
    #[arg(long, default_value_t = 0.3)]
    query_noise: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Directory receiving pool.bin, queries.bin, gold.jsonl and synth.json.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Serialize)]
struct SelectConfig<'a> {
    pool: &'a Path,
    query: Option<&'a Path>,
    query_row: Option<usize>,
    relevance: Option<&'a Path>,
    method: Method,
    seed: u64,
    threads: usize,
    params: &'a SelectParams,
}

#[derive(Serialize)]
struct SelectOutput<'a> {
    config: SelectConfig<'a>,
    #[serde(flatten)]
    report: dksel::SolveReport,
    certificate: Option<fw::VertexCertificate>,
}

fn select(args: &SelectArgs) -> Result<(), Error> {
    let pool = io::load_embeddings(&args.pool)?;
    let c = match (&args.query, &args.relevance) {
        (Some(qpath), _) => {
            let queries = io::load_embeddings(qpath)?;
            if args.query_row >= queries.len() {
                return Err(Error::InvalidParams(format!(
                    "--query-row {} out of range for {} query rows",
                    args.query_row,
                    queries.len()
                )));
            }
            relevance_from_query(&pool, queries.row(args.query_row))?
        }
        (None, Some(rpath)) => {
            let text = std::fs::read_to_string(rpath).map_err(|e| Error::Io {
                path: rpath.clone(),
                source: e,
            })?;
            let scores: Vec<f64> = serde_json::from_str(&text).map_err(|source| Error::Json {
                context: rpath.display().to_string(),
                source,
            })?;
            QueryContext::from_relevance("cli", scores, None)?.relevance
        }
        (None, None) => unreachable!("clap requires --query or --relevance"),
    };
    let init = match args.init {
        InitArg::Topk => InitStrategy::TopK,
        InitArg::Uniform => InitStrategy::Uniform,
    };
    let params = args.solver.params(args.k, args.theta).with_init(init);
    let method = Method::from(args.method);
    let report = method.select(&pool, &c, &params)?;
    let certificate = matches!(method, Method::Fw | Method::Exact)
        .then(|| {
            let x = SelectionVector::indicator(pool.len(), &report.selected);
            fw::certify_vertex(&pool, &c, &x, &params)
        })
        .transpose()?;
    let out = SelectOutput {
        config: SelectConfig {
            pool: &args.pool,
            query: args.query.as_deref(),
            query_row: args.query.as_ref().map(|_| args.query_row),
            relevance: args.relevance.as_deref(),
            method,
            seed: args.seed,
            threads: dksel::linalg::threads(),
            params: &params,
        },
        report,
        certificate,
    };
    match &args.out {
        Some(path) => {
            io::write_json(path, &out)?;
            println!("{}", path.display());
        }
        None => println!("{}", to_json(&out)?),
    }
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Result<String, Error> {
    serde_json::to_string_pretty(v).map_err(|source| Error::Json {
        context: "report".into(),
        source,
    })
}

fn sweep(args: &SweepArgs) -> Result<(), Error> {
    let pool = io::load_embeddings(&args.pool)?;
    let query_pool = args.query_pool.as_ref().map(io::load_embeddings).transpose()?;
    let queries = io::load_gold(&args.gold, &pool, query_pool.as_ref())?;
    let methods: Vec<Method> = args.methods.iter().map(|&m| m.into()).collect();
    let thetas = if args.thetas.is_empty() {
        DEFAULT_THETAS.to_vec()
    } else {
        args.thetas.clone()
    };
    let params = args.solver.params(args.k, 0.5);
    let records = pareto_sweep(&pool, &queries, &methods, &thetas, &params)?;
    io::write_with(&args.out, |w| write_eval_csv(w, &records))?;
    println!("{}", args.out.display());
    if let Some(path) = &args.summary {
        io::write_json(path, &summarize(&records))?;
        println!("{}", path.display());
    }
    let failed = records.iter().filter(|r| r.failed()).count();
    if failed > 0 {
        log::warn!("{failed} of {} sweep records failed", records.len());
    }
    if !records.is_empty() && failed == records.len() {
        return Err(Error::Format(format!(
            "all {failed} sweep records failed; first error: {}",
            records[0].error.as_deref().unwrap_or("")
        )));
    }
    Ok(())
}

fn bench(args: &BenchArgs) -> Result<(), Error> {
    let pool = io::load_embeddings(&args.pool)?;
    let qpool = io::load_embeddings(&args.queries)?;
    let queries = qpool
        .rows()
        .enumerate()
        .map(|(i, q)| QueryContext::from_query(&pool, format!("q{i:04}"), q.to_vec(), None))
        .collect::<Result<Vec<_>, _>>()?;
    let mut config = BenchConfig::new(
        args.methods.iter().map(|&m| m.into()).collect(),
        args.k_values.clone(),
        args.thetas.clone(),
    );
    config.warmup = args.warmup;
    config.runs = args.runs;
    config.lambda = args.solver.lambda;
    config.max_iters = args.solver.max_iters;
    config.gap_tol = args.solver.gap_tol;
    config.pool = serde_json::json!({
        "pool": args.pool,
        "queries": args.queries,
        "n": pool.len(),
        "d": pool.dim(),
    });
    let results = scaling_suite(&pool, &queries, &config)?;
    io::write_with(&args.out, |w| write_bench_csv(w, &results))?;
    let sidecar = args.out.with_extension("json");
    io::write_json(&sidecar, &config)?;
    println!("{}", args.out.display());
    println!("{}", sidecar.display());
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<(), Error> {
    let config = SynthConfig {
        n: args.n,
        d: args.d,
        clusters: args.clusters,
        redundancy: args.redundancy,
        queries: args.queries,
        relevant_per_query: args.relevant_per_query,
        spread: args.spread,
        duplicate_noise: args.duplicate_noise,
        query_noise: args.query_noise,
        seed: args.seed,
    };
    let corpus = synth_corpus(&config)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::Io {
        path: args.out_dir.clone(),
        source: e,
    })?;
    let pool_path = args.out_dir.join("pool.bin");
    let query_path = args.out_dir.join("queries.bin");
    let gold_path = args.out_dir.join("gold.jsonl");
    let config_path = args.out_dir.join("synth.json");
    io::write_embeddings(&pool_path, &corpus.pool)?;
    io::write_embeddings(&query_path, &corpus.query_pool)?;
    let records: Vec<io::GoldRecord> = corpus
        .queries
        .iter()
        .enumerate()
        .map(|(row, q)| io::GoldRecord {
            query_id: q.id.clone(),
            embedding: None,
            embedding_ref: Some(row),
            gold: q.gold.clone().unwrap_or_default(),
        })
        .collect();
    io::write_gold_records(&gold_path, &records)?;
    io::write_json(&config_path, &config)?;
    for p in [&pool_path, &query_path, &gold_path, &config_path] {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        // Read once by the library on first use, which has not happened yet.
        std::env::set_var("DKSEL_THREADS", t.to_string());
    }
    let result = match &cli.command {
        Command::Select(a) => select(a),
        Command::Sweep(a) => sweep(a),
        Command::Bench(a) => bench(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dksel: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
