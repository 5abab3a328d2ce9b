use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use fitpa::pointtree::DEFAULT_NODE_CAP;
use fitpa::rng::substream;
use fitpa::{Embellishment, FitnessModel, FitnessSequence};
use fitpa_cli::experiments::{self, Generator};
use fitpa_cli::table::Table;

const DEFAULT_MODEL: &str = r#"{"kind":"point_mass","params":{"value":1.0},"x1":1.0}"#;

/// Simulation experiments for preferential attachment trees with additive
/// random fitness.
#[derive(Debug, Parser)]
#[command(name = "fitpa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Fitness model as inline JSON or a path to a JSON file.
    #[arg(long, default_value = DEFAULT_MODEL)]
    model: String,
    #[arg(long)]
    seed: u64,
    /// Output file; the resolved configuration goes to `<out>.meta.json`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GenArg {
    Sequential,
    Urn,
    Embellished,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MomentKind {
    /// E[S_{k,n}^p].
    S,
    /// Conditional in-degree means.
    Mori,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write one tree as an edge list `child parent`.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long = "gen", value_enum)]
        generator: GenArg,
        #[arg(long)]
        n: usize,
        /// JSON file `{"probed": [...], "edges": [[child, parent], ...]}`.
        #[arg(long)]
        embellishment: Option<PathBuf>,
    },
    /// Neighbourhood-shape TV against the point tree over an n-grid.
    LocalLimit {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', required = true)]
        n_grid: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        r: usize,
        #[arg(long, default_value_t = 10_000)]
        reps: u64,
        #[arg(long, default_value_t = DEFAULT_NODE_CAP)]
        node_cap: usize,
    },
    /// Degree histograms at a uniform vertex and its parent, with the limits.
    Degree {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 100_000)]
        reps: u64,
        #[arg(long, default_value_t = 1000)]
        k_max: u64,
    },
    /// Root-case coupling failure rates over an n-grid.
    Couple {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "1000,10000,100000")]
        n_grid: Vec<usize>,
        #[arg(long, default_value_t = 10_000)]
        reps: u64,
    },
    /// Exact moment tables for one fitness sequence.
    Moments {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value_t = MomentKind::S)]
        table: MomentKind,
        /// Vertices k for the S table (default: all of 1..=n).
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        p_max: u32,
        #[arg(long)]
        l: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, default_value_t = 0)]
        w: u64,
    },
    /// Concentration diagnostics for the stick-breaking products.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "100,1000,10000,100000")]
        n_grid: Vec<usize>,
        #[arg(long, default_value_t = 1000)]
        reps: u64,
    },
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

fn usage<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Usage(e.into())
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

fn load_model(text: &str) -> Result<FitnessModel, Failure> {
    let json = if text.trim_start().starts_with('{') {
        text.to_string()
    } else {
        fs::read_to_string(text).with_context(|| format!("reading model file {text}")).map_err(usage)?
    };
    FitnessModel::from_json(&json).map_err(usage)
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialise");
    s.push('\n');
    s
}

/// Writes the main output and the sidecar `{command, config, results}`.
fn emit(common: &Common, command: &str, config: Value, body: Output, results: Value) -> Result<(), Failure> {
    let meta = json!({ "command": command, "config": config, "results": results });
    let text = match (common.format, body) {
        (Format::Csv, Output::Table(t)) => t.to_csv(),
        (Format::Json, Output::Table(t)) => pretty(&json!({ "config": meta["config"], "rows": t.to_json_rows() })),
        (Format::Csv, Output::Text(s)) => s,
        (_, Output::Json(v)) => pretty(&json!({ "config": meta["config"], "data": v })),
        (Format::Json, Output::Text(s)) => pretty(&json!({ "config": meta["config"], "data": s })),
    };
    fs::write(&common.out, text)
        .with_context(|| format!("writing {}", common.out.display()))
        .map_err(runtime)?;
    let side = sidecar_path(&common.out);
    fs::write(&side, pretty(&meta))
        .with_context(|| format!("writing {}", side.display()))
        .map_err(runtime)?;
    Ok(())
}

enum Output {
    Table(Table),
    Text(String),
    Json(Value),
}

fn common_config(common: &Common, model: &FitnessModel) -> Value {
    json!({
        "model": model.spec(),
        "seed": common.seed,
        "out": common.out.display().to_string(),
        "format": match common.format { Format::Csv => "csv", Format::Json => "json" },
    })
}

fn merge(mut base: Value, extra: Value) -> Value {
    if let (Value::Object(b), Value::Object(e)) = (&mut base, extra) {
        b.extend(e);
    }
    base
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Generate {
            common,
            generator,
            n,
            embellishment,
        } => {
            let model = load_model(&common.model)?;
            let generator = match generator {
                GenArg::Sequential => Generator::Sequential,
                GenArg::Urn => Generator::Urn,
                GenArg::Embellished => Generator::Embellished,
            };
            if n < 1 {
                return Err(usage(anyhow!("--n must be at least 1")));
            }
            let emb = match (generator, &embellishment) {
                (Generator::Embellished, None) => {
                    return Err(usage(anyhow!("--gen embellished requires --embellishment <file>")))
                }
                (Generator::Embellished, Some(path)) => {
                    let text = fs::read_to_string(path)
                        .with_context(|| format!("reading {}", path.display()))
                        .map_err(usage)?;
                    Some(Embellishment::from_json(&text, n).map_err(usage)?)
                }
                _ => None,
            };
            let tree = experiments::generate(&model, generator, n, emb.as_ref(), common.seed).map_err(runtime)?;
            let config = merge(
                common_config(&common, &model),
                json!({
                    "generator": generator.as_str(),
                    "n": n,
                    "embellishment": embellishment.map(|p| p.display().to_string()),
                }),
            );
            let body = match common.format {
                Format::Csv => Output::Text(tree.to_edge_list()),
                Format::Json => Output::Json(tree.to_json()),
            };
            emit(&common, "generate", config, body, json!({ "edges": n.saturating_sub(1) }))
        }
        Command::LocalLimit {
            common,
            n_grid,
            r,
            reps,
            node_cap,
        } => {
            let model = load_model(&common.model)?;
            experiments::check_grid(&n_grid).map_err(usage)?;
            if reps == 0 {
                return Err(usage(anyhow!("--reps must be positive")));
            }
            let table = experiments::local_limit(&model, &n_grid, &[r], reps, node_cap, common.seed).map_err(runtime)?;
            let config = merge(
                common_config(&common, &model),
                json!({ "n_grid": n_grid, "r": r, "reps": reps, "node_cap": node_cap }),
            );
            let results = json!({ "tv_upper_bound": table.column("tv_upper_bound") });
            emit(&common, "local-limit", config, Output::Table(table), results)
        }
        Command::Degree { common, n, reps, k_max } => {
            let model = load_model(&common.model)?;
            if n < 2 || reps == 0 || k_max == 0 {
                return Err(usage(anyhow!("need --n ≥ 2, --reps > 0 and --k-max > 0")));
            }
            let exp = experiments::degree_experiment(&model, n, reps, k_max, common.seed).map_err(runtime)?;
            let config = merge(
                common_config(&common, &model),
                json!({ "n": n, "reps": reps, "k_max": k_max }),
            );
            let results = json!({
                "tv_root": exp.tv_root,
                "tv_ancestor": exp.tv_ancestor,
                "ancestor_samples": exp.ancestor.total(),
            });
            emit(&common, "degree", config, Output::Table(exp.table()), results)
        }
        Command::Couple { common, n_grid, reps } => {
            let model = load_model(&common.model)?;
            experiments::check_grid(&n_grid).map_err(usage)?;
            if reps == 0 {
                return Err(usage(anyhow!("--reps must be positive")));
            }
            let reports =experiments::couple(&model, &n_grid, reps, common.seed).map_err(runtime)?;
            let config = merge(
                common_config(&common, &model),
                json!({ "n_grid": n_grid, "reps": reps, "probe": "root" }),
            );
            let results = Value::Array(reports.iter().map(|r| r.to_json()).collect());
            emit(&common, "couple", config, Output::Table(experiments::couple_table(&reports)), results)
        }
        Command::Moments {
            common,
            n,
            table,
            k,
            p_max,
            l,
            m,
            w,
        } => {
            let model = load_model(&common.model)?;
            if n < 1 {
                return Err(usage(anyhow!("--n must be at least 1")));
            }
            let seq = match model.point_mass_value() {
                Some(v) => FitnessSequence::constant(&model, n, v),
                None => fitpa::fitness::sample_fitness_sequence(&model, n, &mut substream(common.seed, 0)),
            }
            .map_err(runtime)?;
            let (out, extra) = match table {
                MomentKind::S => {
                    let ks: Vec<usize> = if k.is_empty() { (1..=n).collect() } else { k.clone() };
                    if ks.iter().any(|&k| k < 1 || k > n) || p_max < 1 {
                        return Err(usage(anyhow!("need 1 ≤ k ≤ n and --p-max ≥ 1")));
                    }
                    (
                        experiments::moments_table(&seq, &ks, p_max).map_err(runtime)?,
                        json!({ "table": "s", "k": ks, "p_max": p_max }),
                    )
                }
                MomentKind::Mori => {
                    let (Some(l), Some(m)) = (l, m) else {
                        return Err(usage(anyhow!("--table mori requires --l and --m")));
                    };
                    if !(1 <= l && l <= m && m <= n) {
                        return Err(usage(anyhow!("need 1 ≤ l ≤ m ≤ n")));
                    }
                    (
                        experiments::mori_table(&seq, l, m, w).map_err(runtime)?,
                        json!({ "table": "mori", "l": l, "m": m, "w": w }),
                    )
                }
            };
            let config = merge(common_config(&common, &model), merge(json!({ "n": n }), extra));
            emit(&common, "moments", config, Output::Table(out), json!({}))
        }
        Command::Diagnose { common, n_grid, reps } => {
            let model = load_model(&common.model)?;
            experiments::check_grid(&n_grid).map_err(usage)?;
            if reps == 0 {
                return Err(usage(anyhow!("--reps must be positive")));
            }
            let table = experiments::diagnose(&model, &n_grid, reps, common.seed).map_err(runtime)?;
            let config = merge(common_config(&common, &model), json!({ "n_grid": n_grid, "reps": reps }));
            let results = json!({ "mean_max_deviation": table.column("mean_max_deviation") });
            emit(&common, "diagnose", config, Output::Table(table), results)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
