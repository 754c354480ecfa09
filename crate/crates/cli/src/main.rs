use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use ptree_core::engine::{
    check_conditions, run_engine, scenarios, tpath_dot, trace_from_jsonl, trace_to_jsonl, tree_dot, EngineConfig,
    TraceRecord,
};
use ptree_core::fsplit_subtree::{build_splitting_subtree, unsplit_siblings, Catalog, FsplitConfig, Source};
use ptree_core::split_sim::{
    nodes_without_split, pair_disagreements, rederive_phi, run_split, SplitConfig, SplitEvent, SplitRecord,
};
use ptree_core::tower::{build_tower, TowerConfig};
use ptree_core::trees::ftree_check;

const SCHEMA: u32 = 1;

const EXIT_FAILURE: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_VIOLATION: u8 = 3;

#[derive(Parser)]
#[command(name = "ptree", version, about = "Stagewise tree constructions with checkable traces")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// scenario file (JSON)
    config: Option<PathBuf>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long, env = "PTREE_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the priority-tree engine
    RunEngine {
        #[command(flatten)]
        common: Common,
        /// bundled scenario to use instead of a file
        #[arg(long)]
        bundled: Option<String>,
        /// also write DOT files for these stages
        #[arg(long = "dot-stage")]
        dot_stages: Vec<u64>,
    },
    /// Run the splitting-functional construction
    RunSplit {
        #[command(flatten)]
        common: Common,
    },
    /// Build a totally splitting subtree
    RunFsplit {
        #[command(flatten)]
        common: Common,
    },
    /// Materialize a tower of levels
    RunTower {
        #[command(flatten)]
        common: Common,
    },
    /// Re-check a saved trace, or the trace named by a `check` scenario
    Check { trace: PathBuf },
    /// Write DOT for one stage of an engine trace
    ExportDot {
        trace: PathBuf,
        #[arg(long)]
        stage: u64,
        /// `tpath` or `tree`
        #[arg(long, default_value = "tpath")]
        what: String,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Body {
    Engine {
        #[serde(default)]
        bundled: Option<String>,
        #[serde(default)]
        config: Option<EngineConfig>,
    },
    Split {
        #[serde(default)]
        config: SplitConfig,
    },
    Fsplit {
        source: Source,
        oracle: Catalog,
        config: FsplitConfig,
    },
    Tower {
        config: TowerConfig,
    },
    Check {
        trace: PathBuf,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct Scenario {
    schema: u32,
    #[serde(default)]
    name: Option<String>,
    #[serde(flatten)]
    body: Body,
}

/// Failure carrying its exit code.
struct Fail(u8, String);

impl Fail {
    fn invalid(msg: impl Into<String>) -> Fail {
        Fail(EXIT_INVALID, msg.into())
    }
    fn io(path: &Path, e: std::io::Error) -> Fail {
        Fail(EXIT_FAILURE, format!("{}: {e}", path.display()))
    }
}

fn load(path: &Path) -> Result<Scenario, Fail> {
    let text = fs::read_to_string(path).map_err(|e| Fail::io(path, e))?;
    let sc: Scenario = serde_json::from_str(&text)
        .map_err(|e| Fail::invalid(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column())))?;
    if sc.schema != SCHEMA {
        return Err(Fail::invalid(format!("{}: unsupported schema {} (expected {SCHEMA})", path.display(), sc.schema)));
    }
    Ok(sc)
}

fn stem(common: &Common, name: Option<&str>, fallback: &str) -> String {
    name.map(str::to_string)
        .or_else(|| common.config.as_ref().and_then(|p| p.file_stem()).map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_else(|| fallback.to_string())
}

fn write(dir: &Path, file: &str, text: &str) -> Result<PathBuf, Fail> {
    fs::create_dir_all(dir).map_err(|e| Fail::io(dir, e))?;
    let p = dir.join(file);
    fs::write(&p, text).map_err(|e| Fail::io(&p, e))?;
    Ok(p)
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value");
    s.push('\n');
    s
}

fn verdict(name: &str, problems: usize) -> Result<(), Fail> {
    if problems == 0 {
        println!("{name}: ok");
        Ok(())
    } else {
        Err(Fail(EXIT_VIOLATION, format!("{name}: {problems} violation(s)")))
    }
}

fn engine_summary(trace: &[TraceRecord], cfg: Option<&EngineConfig>) -> serde_json::Value {
    let violations = check_conditions(trace);
    let last = trace.last().map_or(0, |r| r.stage);
    let tpath: Vec<_> = trace
        .iter()
        .filter(|r| r.stage == last)
        .map(|r| {
            json!({
                "node": r.node,
                "module": r.module.to_string(),
                "sigma": r.sigma,
                "outcome": r.outcome.and_then(|o| o.number()),
            })
        })
        .collect();
    let ht = ptree_core::engine::ht_tables(trace).remove(&last).unwrap_or_default();
    json!({
        "stages": last + 1,
        "tpath": tpath,
        "ht": ht,
        "config": cfg,
        "violations": violations,
    })
}

fn run_engine_cmd(common: &Common, bundled: Option<String>, dot_stages: &[u64]) -> Result<(), Fail> {
    let (name, mut cfg) = match (&common.config, &bundled) {
        (Some(p), None) => {
            let sc = load(p)?;
            let Body::Engine { bundled, config } = sc.body else {
                return Err(Fail::invalid(format!("{}: not an engine scenario", p.display())));
            };
            let cfg = match (bundled, config) {
                (_, Some(c)) => c,
                (Some(b), None) => scenarios::bundled(&b)
                    .ok_or_else(|| Fail::invalid(format!("{}: unknown bundled scenario {b:?}", p.display())))?,
                (None, None) => EngineConfig::default(),
            };
            (sc.name, cfg)
        }
        (None, Some(b)) => {
            let cfg = scenarios::bundled(b).ok_or_else(|| {
                Fail::invalid(format!("unknown bundled scenario {b:?}; known: {}", scenarios::NAMES.join(", ")))
            })?;
            (Some(b.clone()), cfg)
        }
        (Some(_), Some(_)) => return Err(Fail::invalid("give either a config file or --bundled, not both")),
        (None, None) => return Err(Fail::invalid("a config file or --bundled is required")),
    };
    if let Some(h) = common.horizon {
        cfg.horizon = h;
    }
    if let Some(d) = common.depth {
        cfg.max_depth = d;
    }
    cfg.validate().map_err(|e| Fail::invalid(format!("engine config: {e}")))?;
    let name = stem(common, name.as_deref(), "engine");
    let e = run_engine(&cfg).map_err(|e| Fail(EXIT_FAILURE, e.to_string()))?;
    let trace = e.trace();
    write(&common.out_dir, &format!("{name}.trace.jsonl"), &trace_to_jsonl(trace))?;
    let summary = engine_summary(trace, Some(&cfg));
    write(&common.out_dir, &format!("{name}.summary.json"), &pretty(&summary))?;
    for &s in dot_stages {
        write(&common.out_dir, &format!("{name}.tpath-{s}.dot"), &tpath_dot(trace, s))?;
        write(&common.out_dir, &format!("{name}.tree-{s}.dot"), &tree_dot(trace, s))?;
    }
    println!("stages: {}  nodes: {}  truncated stages: {}", e.stage(), e.node_count(), e.truncated_stages().len());
    verdict(&name, summary["violations"].as_array().map_or(0, Vec::len))
}

fn split_jsonl(trace: &[SplitRecord]) -> String {
    let mut out = String::new();
    for r in trace {
        out.push_str(&serde_json::to_string(r).expect("record"));
        out.push('\n');
    }
    out
}

fn run_split_cmd(common: &Common) -> Result<(), Fail> {
    let (name, mut cfg) = match &common.config {
        Some(p) => match load(p)? {
            Scenario { name, body: Body::Split { config }, .. } => (name, config),
            _ => return Err(Fail::invalid(format!("{}: not a split scenario", p.display()))),
        },
        None => (None, SplitConfig::default()),
    };
    if common.horizon.is_some() {
        cfg.horizon = common.horizon;
    }
    if let Some(d) = common.depth {
        cfg.depth = d;
    }
    let name = stem(common, name.as_deref(), "split");
    let sim = run_split(&cfg).map_err(|e| Fail::invalid(format!("split config: {e}")))?;
    write(&common.out_dir, &format!("{name}.trace.jsonl"), &split_jsonl(sim.trace()))?;
    let unsplit = nodes_without_split(&sim);
    let disagree = pair_disagreements(sim.trace());
    let (ok, total) = rederive_phi(sim.trace(), cfg.branching, cfg.depth);
    let summary = json!({
        "stages": sim.stage(),
        "phi_entries": total,
        "phi_rederived": ok,
        "nodes_without_split": unsplit,
        "pair_disagreements": disagree,
        "families": sim.family().len(),
        "config": cfg,
    });
    write(&common.out_dir, &format!("{name}.summary.json"), &pretty(&summary))?;
    println!("Φ entries: {total} (re-derived {ok})  families: {}", sim.family().len());
    verdict(&name, unsplit.len() + disagree.len() + (total - ok))
}

fn run_fsplit_cmd(common: &Common) -> Result<(), Fail> {
    let p = common.config.as_ref().ok_or_else(|| Fail::invalid("run-fsplit needs a config file"))?;
    let (name, source, oracle, mut cfg) = match load(p)? {
        Scenario { name, body: Body::Fsplit { source, oracle, config }, .. } => (name, source, oracle, config),
        _ => return Err(Fail::invalid(format!("{}: not an fsplit scenario", p.display()))),
    };
    if let Some(d) = common.depth {
        cfg.depth = d;
    }
    let name = stem(common, name.as_deref(), "fsplit");
    let r = build_splitting_subtree(&source, &oracle, &cfg).map_err(|e| Fail(EXIT_VIOLATION, format!("{name}: {e}")))?;
    let bad_tree = ftree_check(&r.t_hat).len();
    let unsplit = unsplit_siblings(&r.t_hat, &oracle);
    let out = json!({
        "v": r.v,
        "t_hat": r.t_hat,
        "steps": r.steps,
        "ftree_violations": bad_tree,
        "unsplit_siblings": unsplit,
    });
    write(&common.out_dir, &format!("{name}.result.json"), &pretty(&out))?;
    println!("nodes: {}", r.t_hat.len());
    verdict(&name, bad_tree + unsplit.len())
}

fn run_tower_cmd(common: &Common) -> Result<(), Fail> {
    let p = common.config.as_ref().ok_or_else(|| Fail::invalid("run-tower needs a config file"))?;
    let (name, mut cfg) = match load(p)? {
        Scenario { name, body: Body::Tower { config }, .. } => (name, config),
        _ => return Err(Fail::invalid(format!("{}: not a tower scenario", p.display()))),
    };
    if let Some(h) = common.horizon {
        cfg.horizon = h;
    }
    if let Some(d) = common.depth {
        cfg.depth = d;
    }
    let name = stem(common, name.as_deref(), "tower");
    let h = build_tower(&cfg).map_err(|e| Fail::invalid(format!("tower config: {e}")))?;
    write(&common.out_dir, &format!("{name}.tower.json"), &(h.to_json() + "\n"))?;
    let bad = h.boundary_disagreements();
    for lv in h.levels.values() {
        println!(
            "level {}: copylen {}  members {}  engines {}",
            lv.beta,
            lv.copy.copylen,
            lv.tree.len(),
            lv.instances.len()
        );
    }
    verdict(&name, bad.len())
}

fn read_trace(path: &Path) -> Result<String, Fail> {
    fs::read_to_string(path).map_err(|e| Fail::io(path, e))
}

fn is_split_trace(text: &str) -> bool {
    text.lines().next().is_some_and(|l| l.contains("\"event\""))
}

fn check_cmd(path: &Path) -> Result<(), Fail> {
    let text = read_trace(path)?;
    let name = path.display().to_string();
    if is_split_trace(&text) {
        let trace: Vec<SplitRecord> = text
            .lines()
            .enumerate()
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| Fail::invalid(format!("{name}:{}: {e}", i + 1))))
            .collect::<Result<_, _>>()?;
        let sigmas = trace.iter().filter_map(|r| match &r.event {
            SplitEvent::Define { sigma, .. } => Some(sigma),
            _ => None,
        });
        let (mut depth, mut branching) = (0, 0);
        for s in sigmas {
            depth = depth.max(s.len());
            branching = branching.max(s.max_entry().map_or(0, |m| m + 1));
        }
        let (ok, total) = rederive_phi(&trace, branching, depth);
        let disagree = pair_disagreements(&trace);
        println!("Φ entries: {total} (re-derived {ok})  pair disagreements: {}", disagree.len());
        return verdict(&name, (total - ok) + disagree.len());
    }
    let trace = trace_from_jsonl(&text).map_err(|(line, e)| Fail::invalid(format!("{name}:{line}: {e}")))?;
    let v = check_conditions(&trace);
    for x in &v {
        println!("stage {} node {:?} [{}] {}", x.stage, x.node, x.condition, x.detail);
    }
    verdict(&name, v.len())
}

fn export_dot_cmd(path: &Path, stage: u64, what: &str) -> Result<(), Fail> {
    let text = read_trace(path)?;
    let name = path.display().to_string();
    let trace = trace_from_jsonl(&text).map_err(|(line, e)| Fail::invalid(format!("{name}:{line}: {e}")))?;
    let dot = match what {
        "tpath" => tpath_dot(&trace, stage),
        "tree" => tree_dot(&trace, stage),
        other => return Err(Fail::invalid(format!("unknown export {other:?}; use tpath or tree"))),
    };
    print!("{dot}");
    Ok(())
}

/// A `check` scenario file names the trace to re-check, relative to itself.
fn check_target(path: &Path) -> Result<PathBuf, Fail> {
    if path.extension().is_some_and(|e| e == "json") {
        return match load(path)? {
            Scenario { body: Body::Check { trace }, .. } => Ok(path.parent().unwrap_or(Path::new(".")).join(trace)),
            _ => Err(Fail::invalid(format!("{}: not a check scenario", path.display()))),
        };
    }
    Ok(path.to_path_buf())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::RunEngine { common, bundled, dot_stages } => run_engine_cmd(common, bundled.clone(), dot_stages),
        Cmd::RunSplit { common } => run_split_cmd(common),
        Cmd::RunFsplit { common } => run_fsplit_cmd(common),
        Cmd::RunTower { common } => run_tower_cmd(common),
        Cmd::Check { trace } => check_target(trace).and_then(|p| check_cmd(&p)),
        Cmd::ExportDot { trace, stage, what } => export_dot_cmd(trace, *stage, what),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
