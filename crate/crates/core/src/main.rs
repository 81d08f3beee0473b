use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use optevo::engine::{compute_update, init_state, update_emas};
use optevo::integrity::{sphere_check, SphereConfig};
use optevo::mutation::MutationMask;
use optevo::plot::{self, Axis, SurfaceSpec};
use optevo::schedules::{Clock, OneCycle};
use optevo::search::{self, EliminationStage, SearchConfig};
use optevo::surrogate::{fitness, make_dataset, DataConfig, DatasetKind, FitnessConfig};
use optevo::{catalog, format, OptimizerGenome};

#[derive(Parser)]
#[command(name = "optevo", version, about = "Evolve and inspect optimizer update rules")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run, resume, seed or post-process a genetic search
    #[command(subcommand)]
    Search(SearchCmd),
    /// Run the integrity checks on a genome
    Check {
        genome: String,
        /// Grid size for the decay range check
        #[arg(long, default_value_t = 1000)]
        grid: u64,
    },
    /// Feed a gradient trace (CSV: step, g values) through a genome and print the updates
    Eval {
        genome: String,
        trace: PathBuf,
        /// Weight value held fixed for every element
        #[arg(long, default_value_t = 0.0)]
        w: f64,
        /// Clock horizon; defaults to the number of trace rows
        #[arg(long = "T")]
        total: Option<u64>,
    },
    /// Score genomes with the surrogate fitness and print a table
    Bench {
        #[arg(required = true)]
        genomes: Vec<String>,
        #[command(flatten)]
        data: DataArgs,
        /// Multiplier on every step budget
        #[arg(long, default_value_t = 1.0)]
        budget_scale: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Inspect the catalog of known optimizers
    #[command(subcommand)]
    Catalog(CatalogCmd),
    /// Emit plot data as CSV
    #[command(subcommand)]
    Plot(PlotCmd),
    /// Pretty-print a genome as a formula
    Fmt { genome: String },
}

#[derive(Args, Clone)]
struct DataArgs {
    /// two_moons, blobs, spirals or a path to a CSV file with a `label` column
    #[arg(long, default_value = "two_moons")]
    dataset: String,
}

impl DataArgs {
    fn apply(&self, cfg: &mut DataConfig) {
        match DatasetKind::from_name(&self.dataset) {
            Some(kind) => cfg.kind = kind,
            None => {
                cfg.kind = DatasetKind::Csv;
                cfg.path = Some(PathBuf::from(&self.dataset));
            }
        }
    }
}

#[derive(Args, Clone)]
struct SearchArgs {
    /// JSON search configuration; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    /// Run directory (must be missing or empty)
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    init_factor: Option<usize>,
    #[arg(long)]
    dataset: Option<String>,
    /// Multiplier on every fitness step budget
    #[arg(long)]
    budget_scale: Option<f64>,
    /// full or decay_only
    #[arg(long)]
    mask: Option<String>,
    /// Worker threads for fitness evaluation
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Stop after this many timesteps (resume later)
    #[arg(long)]
    stop_after: Option<usize>,
}

#[derive(Subcommand)]
enum SearchCmd {
    /// Start a new search
    Run(SearchArgs),
    /// Continue a search from its checkpoint
    Resume {
        dir: PathBuf,
        /// Must match the seed recorded in the run configuration
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Start a search with every particle set to a catalog optimizer
    SeedFromCatalog {
        name: String,
        #[command(flatten)]
        args: SearchArgs,
    },
    /// Staged re-evaluation of genomes, printing the final ranking
    Eliminate {
        /// Genome files, catalog names or run directories
        #[arg(required = true)]
        genomes: Vec<String>,
        #[arg(long)]
        seed: u64,
        /// Stages as keep:base:budget_scale:repeats, comma separated
        #[arg(long)]
        stages: Option<String>,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 1.0)]
        budget_scale: f64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

#[derive(Subcommand)]
enum CatalogCmd {
    /// List catalog entries
    List,
    /// Print the canonical genome text of an entry
    Export { name: String },
}

#[derive(Subcommand)]
enum PlotCmd {
    /// The primitive decay schedules
    Schedules {
        #[arg(long = "T", default_value_t = 1000)]
        total: u64,
    },
    /// Decay multipliers on each decayed connection of a genome
    Decay {
        genome: String,
        #[arg(long = "T", default_value_t = 1000)]
        total: u64,
    },
    /// The catalog learning-rate schedules with the one-cycle base
    Lr {
        #[arg(long = "T", default_value_t = 96000)]
        total: u64,
        /// Divide each column by its maximum
        #[arg(long)]
        normalize: bool,
    },
    /// Update value over a grid of two state quantities
    Surface {
        genome: String,
        #[arg(long, default_value = "g")]
        x: String,
        #[arg(long, default_value = "v_hat")]
        y: String,
        #[arg(long, default_value_t = -5.0)]
        lo: f64,
        #[arg(long, default_value_t = 5.0)]
        hi: f64,
        #[arg(long, default_value_t = 41)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        t: u64,
        #[arg(long = "T", default_value_t = 96000)]
        total: u64,
    },
}

/// Marks errors caused by bad input rather than a failed computation.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

fn load_genome(arg: &str) -> Result<OptimizerGenome> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = fs::read_to_string(path).with_context(|| format!("reading {arg}"))?;
        return format::deserialize(text.trim()).with_context(|| format!("parsing {arg}"));
    }
    catalog::build(arg)
        .map(|e| e.genome)
        .map_err(|_| config_err(format!("`{arg}` is neither a genome file nor a catalog name")))
}

fn print(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    if !text.ends_with('\n') {
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn search_config(args: &SearchArgs) -> Result<SearchConfig> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", p.display())))?
        }
        None => SearchConfig::default(),
    };
    cfg.seed = args.seed;
    if let Some(v) = args.n {
        cfg.n = v;
    }
    if let Some(v) = args.k {
        cfg.k = v;
    }
    if let Some(v) = args.t {
        cfg.t = v;
    }
    if let Some(v) = args.init_factor {
        cfg.init_factor = v;
    }
    if let Some(d) = &args.dataset {
        DataArgs { dataset: d.clone() }.apply(&mut cfg.data);
    }
    if let Some(s) = args.budget_scale {
        if !(s > 0.0) {
            return Err(config_err("--budget-scale must be positive"));
        }
        cfg.fitness = cfg.fitness.scaled(s);
    }
    if let Some(m) = &args.mask {
        cfg.mask = match m.as_str() {
            "full" => MutationMask::Full,
            "decay_only" => MutationMask::DecayOnly,
            other => return Err(config_err(format!("unknown mask `{other}`"))),
        };
    }
    Ok(cfg)
}

fn parse_stages(s: &str) -> Result<Vec<EliminationStage>> {
    s.split(',')
        .map(|part| {
            let f: Vec<&str> = part.trim().split(':').collect();
            if f.len() != 4 {
                return Err(config_err(format!("stage `{part}` is not keep:base:budget_scale:repeats")));
            }
            let bad = |_| config_err(format!("stage `{part}` has a non-numeric field"));
            Ok(EliminationStage {
                keep: f[0].parse().map_err(bad)?,
                base: f[1].parse().map_err(bad)?,
                budget_scale: f[2].parse().map_err(|_| config_err(format!("stage `{part}` has a bad budget_scale")))?,
                repeats: f[3].parse().map_err(bad)?,
            })
        })
        .collect()
}

fn run_search_cmd(args: &SearchArgs, seed_genome: Option<&str>, command: &str) -> Result<()> {
    let mut cfg = search_config(args)?;
    if let Some(name) = seed_genome {
        cfg.seed_genome = Some(name.to_string());
    }
    let run = search::run_search_in(&args.out, &cfg, args.jobs, args.stop_after, args.config.as_deref())?;
    let done = run.history.len();
    eprintln!("{command}: {done}/{} timesteps in {}", cfg.t, args.out.display());
    if done == cfg.t {
        print(&fs::read_to_string(args.out.join("ranking.csv"))?)?;
    }
    Ok(())
}

fn genomes_for_eliminate(args: &[String]) -> Result<Vec<OptimizerGenome>> {
    let mut out = Vec::new();
    for a in args {
        let p = Path::new(a);
        if p.is_dir() {
            let ck: search::Checkpoint = serde_json::from_str(&fs::read_to_string(p.join("checkpoint.json"))?)
                .with_context(|| format!("reading checkpoint in {a}"))?;
            out.extend(ck.particles.into_iter().map(|x| x.genome));
        } else {
            out.push(load_genome(a)?);
        }
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Search(cmd) => match cmd {
            SearchCmd::Run(args) => run_search_cmd(&args, None, "search run"),
            SearchCmd::SeedFromCatalog { name, args } => {
                catalog::build(&name).map_err(|e| config_err(e.to_string()))?;
                run_search_cmd(&args, Some(&name), "search seed-from-catalog")
            }
            SearchCmd::Resume { dir, seed, jobs } => {
                let cfg: SearchConfig = serde_json::from_str(
                    &fs::read_to_string(dir.join("config.json")).with_context(|| format!("reading {}", dir.display()))?,
                )?;
                if cfg.seed != seed {
                    return Err(config_err(format!("--seed {seed} does not match the run's seed {}", cfg.seed)));
                }
                let run = search::resume_search(&dir, jobs)?;
                eprintln!("search resume: {}/{} timesteps in {}", run.history.len(), cfg.t, dir.display());
                print(&fs::read_to_string(dir.join("ranking.csv"))?)
            }
            SearchCmd::Eliminate { genomes, seed, stages, data, budget_scale, jobs } => {
                let genomes = genomes_for_eliminate(&genomes)?;
                let stages = match stages {
                    Some(s) => parse_stages(&s)?,
                    None => {
                        let n = genomes.len();
                        vec![EliminationStage { keep: n.div_ceil(2).max(1), base: 16, budget_scale: 1.0, repeats: 3 }]
                    }
                };
                let mut dc = DataConfig::default();
                data.apply(&mut dc);
                let dataset = make_dataset(&dc)?;
                let fc = FitnessConfig::default().scaled(budget_scale);
                let res = search::eliminate(&genomes, &stages, &dataset, &fc, seed, jobs)?;
                let mut w = csv::Writer::from_writer(Vec::new());
                let mut header = vec!["rank".to_string(), "uid".to_string(), "eliminated_at".to_string()];
                header.extend((0..stages.len()).map(|i| format!("stage{i}_mean")));
                header.push("genome".into());
                w.write_record(&header)?;
                for (i, r) in res.ranking.iter().enumerate() {
                    let mut row = vec![
                        (i + 1).to_string(),
                        r.genome.uid.clone(),
                        r.eliminated_at.map_or(String::new(), |s| s.to_string()),
                    ];
                    row.extend((0..stages.len()).map(|s| r.stage_means.get(s).map_or(String::new(), |m| m.to_string())));
                    row.push(format::serialize(&r.genome));
                    w.write_record(&row)?;
                }
                print(&String::from_utf8(w.into_inner()?)?)
            }
        },
        Command::Check { genome, grid } => {
            let g = load_genome(&genome)?;
            let decays_ok =
                g.graph.decays().iter().all(|(_, _, dg)| optevo::integrity::decay_range_check(dg, grid));
            let v = sphere_check(&g, &SphereConfig::default());
            let mut out = String::from("lr,final_loss\n");
            for (lr, loss) in &v.losses {
                out.push_str(&format!("{lr},{loss}\n"));
            }
            out.push_str(&format!(
                "# initial_loss={} best_lr={} sphere_passed={} decays_in_range={} passed={}\n",
                v.initial_loss,
                v.best_lr,
                v.passed,
                decays_ok,
                v.passed && decays_ok
            ));
            print(&out)
        }
        Command::Eval { genome, trace, w, total } => {
            let g = load_genome(&genome)?;
            let mut rdr = csv::Reader::from_path(&trace).with_context(|| format!("reading {}", trace.display()))?;
            let mut rows: Vec<Vec<f64>> = Vec::new();
            for (i, rec) in rdr.records().enumerate() {
                let rec = rec?;
                let vals: Vec<f64> = rec
                    .iter()
                    .skip(1)
                    .map(|f| f.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| config_err(format!("{} line {}: {e}", trace.display(), i + 2)))?;
                if vals.is_empty() || rows.first().is_some_and(|r| r.len() != vals.len()) {
                    return Err(config_err(format!("{} line {}: inconsistent gradient width", trace.display(), i + 2)));
                }
                rows.push(vals);
            }
            if rows.is_empty() {
                return Err(config_err("trace has no rows"));
            }
            let n = rows[0].len();
            let total = total.unwrap_or(rows.len() as u64).max(rows.len() as u64);
            let mut state = init_state(&g, n, 0);
            let wv = vec![w; n];
            let mut out = String::from("step");
            for i in 0..n {
                out.push_str(&format!(",u{i}"));
            }
            out.push('\n');
            for (t, gr) in rows.iter().enumerate() {
                update_emas(&mut state, gr);
                let (u, _) = compute_update(&g, &mut state, gr, &wv, Clock::new(t as u64, total));
                state.step += 1;
                out.push_str(&t.to_string());
                for v in u {
                    out.push_str(&format!(",{v}"));
                }
                out.push('\n');
            }
            print(&out)
        }
        Command::Bench { genomes, data, budget_scale, seed } => {
            if !(budget_scale > 0.0) {
                return Err(config_err("--budget-scale must be positive"));
            }
            let mut dc = DataConfig::default();
            data.apply(&mut dc);
            let dataset = make_dataset(&dc)?;
            let fc = FitnessConfig { seed, ..FitnessConfig::default().scaled(budget_scale) };
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["genome", "best_val_acc", "best_lr", "stage_reached", "steps_run"])?;
            for name in &genomes {
                let g = load_genome(name)?;
                let r = fitness(&g, &dataset, &fc);
                let stage = serde_json::to_value(r.stage_reached)?;
                w.write_record([
                    name.clone(),
                    r.best_val_acc.to_string(),
                    r.best_lr.to_string(),
                    stage.as_str().unwrap_or_default().to_string(),
                    r.steps_run.to_string(),
                ])?;
            }
            print(&String::from_utf8(w.into_inner()?)?)
        }
        Command::Catalog(CatalogCmd::List) => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["name", "momentum", "formula", "notes"])?;
            for e in catalog::all() {
                w.write_record([
                    e.name,
                    e.genome.momentum.name(),
                    &format::pretty_print(&e.genome).replace('\n', "; "),
                    e.notes,
                ])?;
            }
            print(&String::from_utf8(w.into_inner()?)?)
        }
        Command::Catalog(CatalogCmd::Export { name }) => {
            let e = catalog::build(&name).map_err(|e| config_err(e.to_string()))?;
            print(&format::serialize(&e.genome))
        }
        Command::Plot(p) => {
            let table = match p {
                PlotCmd::Schedules { total } => plot::schedules_table(total)?,
                PlotCmd::Decay { genome, total } => plot::decay_table(&load_genome(&genome)?, total)?,
                PlotCmd::Lr { total, normalize } => plot::lr_table(total, &OneCycle::default(), normalize)?,
                PlotCmd::Surface { genome, x, y, lo, hi, points, t, total } => {
                    let axis = |s: &str| Axis::from_name(s).ok_or_else(|| config_err(format!("unknown axis `{s}`")));
                    let clock = Clock::try_new(t, total).ok_or_else(|| config_err("need 0 <= t <= T and T > 0"))?;
                    let spec = SurfaceSpec { x: axis(&x)?, y: axis(&y)?, lo, hi, points, clock };
                    plot::surface(&load_genome(&genome)?, &spec)?
                }
            };
            print(&table.to_csv()?)
        }
        Command::Fmt { genome } => print(&format::pretty_print(&load_genome(&genome)?)),
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<optevo::Error>() {
        Some(optevo::Error::Io(_)) | Some(optevo::Error::Json(_)) => 3,
        Some(_) => 2,
        None => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
