//! Stagewise priority-tree construction. Given an approximation `ρ` of a
//! tree `S`, a list of functionals and an oracle prefix `X`, builds the
//! stagewise tree `T_s` and the partial f-tree `ĥT_s`, and records one trace
//! record per visited node per stage.
//!
//! The ω-branching of the domain is cut at `max_branch` successors and
//! `max_depth` levels; everything else follows the module semantics.

mod check;
pub mod scenarios;

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx::{OracleApprox, Stable};
use crate::functionals::{FuncError, Functional};
use crate::strings_codes::{code_sat, pair, FinString};
use crate::trees::{is_tree, FTree, Tree};

pub use check::{check_conditions, ht_tables, Violation};

pub const ROOT: usize = 0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("functional {e} at node {node}: {err}")]
    Func { e: usize, node: usize, err: FuncError },
    #[error("outcome number overflow at node {0}")]
    Overflow(usize),
    #[error("condition {condition} violated at node {node}: {detail}")]
    Invariant { condition: &'static str, node: usize, detail: String },
}

fn default_horizon() -> u64 {
    200
}
fn default_branch() -> u64 {
    3
}
fn default_depth() -> usize {
    2
}
fn default_budget() -> usize {
    4096
}
fn full_oracle() -> OracleApprox {
    OracleApprox::constant(1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    #[serde(default = "full_oracle")]
    pub oracle: OracleApprox,
    /// Explicit stable membership table; overrides `oracle` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_table: Option<Vec<FinString>>,
    #[serde(default)]
    pub functionals: Vec<Functional>,
    #[serde(default)]
    pub x: FinString,
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    #[serde(default = "default_branch")]
    pub max_branch: u64,
    #[serde(default = "default_depth")]
    pub max_depth: usize,
    #[serde(default = "default_budget")]
    pub node_budget: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            oracle: full_oracle(),
            s_table: None,
            functionals: Vec::new(),
            x: FinString::empty(),
            horizon: default_horizon(),
            max_branch: default_branch(),
            max_depth: default_depth(),
            node_budget: default_budget(),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        self.oracle.validate().map_err(|e| EngineError::Config(e.to_string()))?;
        if let Some(t) = &self.s_table {
            let set: BTreeSet<FinString> = t.iter().cloned().collect();
            if !is_tree(&set) {
                return Err(EngineError::Config("s_table is not closed under prefixes".into()));
            }
        }
        if self.max_branch == 0 {
            return Err(EngineError::Config("max_branch must be positive".into()));
        }
        if self.node_budget == 0 {
            return Err(EngineError::Config("node_budget must be positive".into()));
        }
        if self.x.entries().iter().any(|&b| b > 1) {
            return Err(EngineError::Config("X must be a binary string".into()));
        }
        Ok(())
    }

    /// The approximation the H modules read.
    pub fn effective_oracle(&self) -> OracleApprox {
        match &self.s_table {
            Some(t) => OracleApprox::from_members(&t.iter().cloned().collect()),
            None => self.oracle.clone(),
        }
    }

    /// Domain strings the run works on: entries below `max_branch`, length
    /// at most `max_depth`.
    pub fn domain(&self) -> Vec<FinString> {
        if self.max_branch == 0 {
            return vec![FinString::empty()];
        }
        crate::strings_codes::all_strings(self.max_depth, self.max_branch - 1)
    }

    /// `ĥT(σ)↓` in the limit: every proper prefix in S and `S(σ)` converges.
    pub fn expect_defined(&self, sigma: &FinString) -> bool {
        let o = self.effective_oracle();
        let proper = sigma.pred().is_none_or(|p| o.in_s(&p));
        proper && o.stable_value(sigma) != Stable::Divergent
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModuleKind {
    HPlus { sigma: FinString },
    /// `Sⁿ_e`; `e = -1` is the branch-splitting module.
    S { n: u64, e: i64 },
    P { e: u64 },
    L { e: u64 },
    /// `Lᵐ_i`
    Link { m: u64, i: u64 },
    H { sigma: FinString },
    /// no module: successor of a negative H outcome or of the depth cap
    Idle,
}

impl fmt::Display for ModuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModuleKind::HPlus { sigma } => write!(f, "H+{sigma}"),
            ModuleKind::S { n, e } => write!(f, "S[{n},{e}]"),
            ModuleKind::P { e } => write!(f, "P[{e}]"),
            ModuleKind::L { e } => write!(f, "L[{e}]"),
            ModuleKind::Link { m, i } => write!(f, "L[{i}]^{m}"),
            ModuleKind::H { sigma } => write!(f, "H{sigma}"),
            ModuleKind::Idle => write!(f, "idle"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    /// P: found a string incompatible with `Φ_e(X)`
    Neq,
    /// P: nothing found yet
    Up,
    /// L: no pending link
    Down,
    /// L: waiting on the link registered by this node
    Link { node: usize },
    /// S: no splitting yet
    Flat,
    Bot0,
    Bot1 { n: u64 },
    Div { n: u64, m: u64 },
    H { i: u8, n: u64, m: u64 },
    /// single-outcome modules
    Pass,
}

impl Outcome {
    pub fn number(&self) -> Option<u64> {
        Some(match *self {
            Outcome::Neq | Outcome::Down | Outcome::Flat | Outcome::Pass => 0,
            Outcome::Up | Outcome::Bot0 => 1,
            Outcome::Link { node } => node as u64 + 1,
            Outcome::Bot1 { n } => n.checked_mul(2)?.checked_add(2)?,
            Outcome::Div { n, m } => pair(n, m).ok()?.checked_mul(2)?.checked_add(3)?,
            Outcome::H { i, n, m } => pair(n, m).ok()?.checked_mul(2)?.checked_add(i as u64)?,
        })
    }
}

/// The successor set of a module.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Successors {
    /// `(outcome number, δ)` pairs; `δ = Some(n)` means `σ⌢n`
    Finite(Vec<(u64, Option<u64>)>),
    /// parameterized outcome families, all with `δ = ε`
    Family(&'static str),
}

pub fn successors(m: &ModuleKind) -> Successors {
    match m {
        ModuleKind::P { .. } => Successors::Finite(vec![(0, None), (1, None)]),
        ModuleKind::HPlus { .. } | ModuleKind::Link { .. } => Successors::Finite(vec![(0, None)]),
        ModuleKind::S { n, e: -1 } => Successors::Finite(vec![(0, Some(*n)), (0, None)]),
        ModuleKind::S { .. } => Successors::Family("flat, bot0, (bot1,n), (div,n,m)"),
        ModuleKind::L { .. } => Successors::Family("down, link(node)"),
        ModuleKind::H { .. } => Successors::Family("(i,n,m)"),
        ModuleKind::Idle => Successors::Finite(vec![]),
    }
}

/// A Mout or Mext assignment made while visiting a node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "field", rename_all = "snake_case")]
pub enum SetEvent {
    Mout { node: usize, value: FinString },
    Mext { node: usize, n: u64, value: FinString },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub stage: u64,
    pub node: usize,
    pub parent: Option<usize>,
    /// outcome number of the edge from the parent
    pub edge: Option<u64>,
    pub delta: Option<u64>,
    pub alpha: FinString,
    pub sigma: FinString,
    pub module: ModuleKind,
    /// `s_ξ`
    pub visit: u64,
    pub mout: Option<FinString>,
    pub outcome: Option<Outcome>,
    pub sets: Vec<SetEvent>,
    pub enumerated: Vec<FinString>,
}

#[derive(Debug, Clone, Default)]
struct SplitMemo {
    tau0: Option<FinString>,
    tau1: Option<FinString>,
    n_hat: u64,
    m_hat: u64,
    /// distinct outputs seen above `Mext₀` while no pair is known
    seen: Vec<(FinString, FinString)>,
    split0: BTreeMap<u64, BTreeSet<(u64, FinString)>>,
    split1: BTreeMap<u64, BTreeSet<(u64, FinString)>>,
    index: HashMap<FinString, u64>,
    scanned_n: Option<u64>,
    scanned_upto: Option<u64>,
}

#[derive(Debug, Clone)]
struct Registrant {
    node: usize,
    delta: FinString,
    m: u64,
    scanned_upto: Option<u64>,
}

#[derive(Debug, Clone, Default)]
enum ModState {
    #[default]
    None,
    P { neq: bool, scanned_upto: Option<u64> },
    L { queue: VecDeque<Registrant> },
    H { tau: FinString, hist: BTreeMap<(u64, u8), u64> },
    S(Box<SplitMemo>),
}

#[derive(Debug, Clone)]
struct Node {
    alpha: FinString,
    sigma: FinString,
    parent: Option<usize>,
    edge: Option<u64>,
    delta: Option<u64>,
    module: ModuleKind,
    mout: Option<FinString>,
    mexts: Vec<FinString>,
    visits: u64,
    /// keyed by (outcome, 0 for `σ⌢n`, 1 for ε)
    children: BTreeMap<(u64, u8), usize>,
    state: ModState,
}

/// Read-only view of a node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NodeInfo {
    pub id: usize,
    pub alpha: FinString,
    pub sigma: FinString,
    pub parent: Option<usize>,
    pub module: ModuleKind,
    pub mout: Option<FinString>,
    pub mexts: Vec<FinString>,
    pub visits: u64,
}

static EMPTY: Functional = Functional::Empty;

pub struct Engine {
    cfg: EngineConfig,
    oracle: OracleApprox,
    nodes: Vec<Node>,
    tree: BTreeSet<FinString>,
    pending: Vec<FinString>,
    log: Vec<FinString>,
    log_start: Vec<usize>,
    stage: u64,
    max_int: u64,
    trace: Vec<TraceRecord>,
    truncated: Vec<u64>,
    cur_sets: Vec<SetEvent>,
    cur_enum: Vec<FinString>,
}

struct Step {
    outcome: Option<Outcome>,
    next: Vec<usize>,
}

fn key(x: &FinString) -> (u64, FinString) {
    (code_sat(x), x.clone())
}

impl Engine {
    pub fn new(cfg: EngineConfig) -> Result<Engine, EngineError> {
        cfg.validate()?;
        let oracle = cfg.effective_oracle();
        let root = Node {
            alpha: FinString::empty(),
            sigma: FinString::empty(),
            parent: None,
            edge: None,
            delta: None,
            module: ModuleKind::HPlus { sigma: FinString::empty() },
            mout: Some(FinString::empty()),
            mexts: Vec::new(),
            visits: 0,
            children: BTreeMap::new(),
            state: ModState::None,
        };
        Ok(Engine {
            cfg,
            oracle,
            nodes: vec![root],
            tree: std::iter::once(FinString::empty()).collect(),
            pending: Vec::new(),
            log: Vec::new(),
            log_start: Vec::new(),
            stage: 0,
            max_int: 0,
            trace: Vec::new(),
            truncated: Vec::new(),
            cur_sets: Vec::new(),
            cur_enum: Vec::new(),
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    /// Number of completed stages.
    pub fn stage(&self) -> u64 {
        self.stage
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn into_trace(self) -> Vec<TraceRecord> {
        self.trace
    }

    /// Stages at which the node budget cut the visit short.
    pub fn truncated_stages(&self) -> &[u64] {
        &self.truncated
    }

    /// `T_s` for the current stage.
    pub fn tree(&self) -> Tree {
        let depth = self.tree.iter().map(|x| x.len()).max().unwrap_or(0);
        Tree::new(self.tree.clone(), depth).expect("enumeration keeps T closed")
    }

    pub fn node(&self, id: usize) -> Option<NodeInfo> {
        self.nodes.get(id).map(|n| NodeInfo {
            id,
            alpha: n.alpha.clone(),
            sigma: n.sigma.clone(),
            parent: n.parent,
            module: n.module.clone(),
            mout: n.mout.clone(),
            mexts: n.mexts.clone(),
            visits: n.visits,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Node ids visited at `stage`, in visiting order.
    pub fn tpath(&self, stage: u64) -> Vec<usize> {
        self.trace.iter().filter(|r| r.stage == stage).map(|r| r.node).collect()
    }

    /// `ĥT` at the last completed stage.
    pub fn ht(&self) -> FTree {
        match self.stage.checked_sub(1) {
            Some(last) => ht_tables(&self.trace).remove(&last).unwrap_or_default(),
            None => FTree::new(),
        }
    }

    pub fn run(&mut self, horizon: u64) -> Result<(), EngineError> {
        while self.stage < horizon {
            self.run_stage()?;
        }
        Ok(())
    }

    fn func(&self, e: usize) -> &Functional {
        self.cfg.functionals.get(e).unwrap_or(&EMPTY)
    }

    fn fresh(&mut self) -> u64 {
        self.max_int = self.max_int.max(self.stage) + 1;
        self.max_int
    }

    fn enumerate(&mut self, node: usize, x: FinString) -> Result<(), EngineError> {
        let s = self.stage;
        let ok_pred = x.pred().is_some_and(|p| self.tree.contains(&p));
        if !ok_pred || code_sat(&x) <= s {
            return Err(EngineError::Invariant {
                condition: "enumeration",
                node,
                detail: format!("cannot enumerate {x} at stage {s}"),
            });
        }
        if let Some(m) = x.max_entry() {
            self.max_int = self.max_int.max(m);
        }
        self.cur_enum.push(x.clone());
        self.pending.push(x);
        Ok(())
    }

    fn set_mout(&mut self, node: usize, value: FinString) {
        if self.nodes[node].mout.as_ref() == Some(&value) {
            return;
        }
        self.nodes[node].mout = Some(value.clone());
        self.cur_sets.push(SetEvent::Mout { node, value });
    }

    fn set_mext(&mut self, node: usize, n: u64, value: FinString) -> Result<(), EngineError> {
        let len = self.nodes[node].mexts.len() as u64;
        if n > len {
            return Err(EngineError::Invariant {
                condition: "output",
                node,
                detail: format!("Mext {n} set before Mext {len}"),
            });
        }
        if n < len {
            if self.nodes[node].mexts[n as usize] == value {
                return Ok(());
            }
            self.nodes[node].mexts[n as usize] = value.clone();
        } else {
            self.nodes[node].mexts.push(value.clone());
        }
        self.cur_sets.push(SetEvent::Mext { node, n, value });
        Ok(())
    }

    /// `Mext_j(dst) = Mext_{j+shift}(src)` for the indices `dst` lacks.
    fn copy_mexts(&mut self, src: usize, dst: usize, shift: usize) -> Result<(), EngineError> {
        let have = self.nodes[dst].mexts.len();
        let todo: Vec<FinString> =
            self.nodes[src].mexts.iter().skip(have + shift).cloned().collect();
        for (j, m) in todo.into_iter().enumerate() {
            self.set_mext(dst, (have + j) as u64, m)?;
        }
        Ok(())
    }

    fn extensions(&self, tau: &FinString) -> Vec<FinString> {
        self.tree.range(tau.clone()..).take_while(|x| tau.is_prefix_of(x)).cloned().collect()
    }

    /// A ⊑-maximal extension of `τ` in `T_s`, least code first.
    fn max_ext(&self, tau: &FinString) -> FinString {
        let mut best: Option<(u64, FinString)> = None;
        let mut it = self.tree.range(tau.clone()..).take_while(|x| tau.is_prefix_of(x)).peekable();
        while let Some(x) = it.next() {
            let leaf = !matches!(it.peek(), Some(y) if x.is_prefix_of(y));
            if leaf {
                let k = key(x);
                if best.as_ref().is_none_or(|b| k < *b) {
                    best = Some(k);
                }
            }
        }
        best.map_or_else(|| tau.clone(), |b| b.1)
    }

    /// Members of `T_s` enumerated at stages `≥ from`.
    fn enumerated_since(&self, from: u64) -> &[FinString] {
        let i = self.log_start.get(from as usize).copied().unwrap_or(self.log.len());
        &self.log[i..]
    }

    fn path(&self, id: usize) -> Vec<usize> {
        let mut p = vec![id];
        let mut c = id;
        while let Some(q) = self.nodes[c].parent {
            p.push(q);
            c = q;
        }
        p.reverse();
        p
    }

    fn assign_module(&self, parent: usize, outcome: u64, delta: Option<u64>) -> ModuleKind {
        let p = &self.nodes[parent];
        let sigma = match delta {
            Some(n) => p.sigma.push(n),
            None => p.sigma.clone(),
        };
        let anc = self.path(parent);
        match &p.module {
            ModuleKind::H { sigma } if outcome % 2 == 1 => ModuleKind::HPlus { sigma: sigma.clone() },
            ModuleKind::H { .. } | ModuleKind::Idle => ModuleKind::Idle,
            ModuleKind::HPlus { sigma } if sigma.len() < self.cfg.max_depth => {
                ModuleKind::S { n: 0, e: sigma.len() as i64 }
            }
            ModuleKind::HPlus { .. } => ModuleKind::Idle,
            ModuleKind::S { n, e } if *e >= 0 => ModuleKind::S { n: *n, e: e - 1 },
            ModuleKind::S { n, .. } if delta.is_none() => {
                ModuleKind::S { n: n + 1, e: p.sigma.len() as i64 }
            }
            ModuleKind::S { .. } => {
                let used: BTreeSet<u64> = anc
                    .iter()
                    .filter_map(|&a| match self.nodes[a].module {
                        ModuleKind::P { e } => Some(e),
                        _ => None,
                    })
                    .collect();
                ModuleKind::P { e: (0..).find(|e| !used.contains(e)).unwrap() }
            }
            ModuleKind::P { .. } => {
                let used: BTreeSet<u64> = anc
                    .iter()
                    .filter_map(|&a| match self.nodes[a].module {
                        ModuleKind::L { e } => Some(e),
                        _ => None,
                    })
                    .collect();
                ModuleKind::L { e: (0..).find(|e| !used.contains(e)).unwrap() }
            }
            ModuleKind::L { e } | ModuleKind::Link { i: e, .. } => {
                // L_i on the path whose ↓ outcome the new node extends
                let mut below: Option<u64> = None;
                let full: Vec<(usize, u64)> = anc
                    .iter()
                    .enumerate()
                    .map(|(k, &a)| {
                        let next_edge = if k + 1 < anc.len() {
                            self.nodes[anc[k + 1]].edge.unwrap()
                        } else {
                            outcome
                        };
                        (a, next_edge)
                    })
                    .collect();
                for (a, next_edge) in full {
                    if let ModuleKind::L { e: i } = self.nodes[a].module {
                        if i < *e && next_edge == 0 {
                            below = Some(below.map_or(i, |b: u64| b.max(i)));
                        }
                    }
                }
                match below {
                    Some(i) => {
                        let used: BTreeSet<u64> = anc
                            .iter()
                            .filter_map(|&a| match self.nodes[a].module {
                                ModuleKind::Link { m, i: j } if j == i => Some(m),
                                _ => None,
                            })
                            .collect();
                        ModuleKind::Link { m: (0..).find(|m| !used.contains(m)).unwrap(), i }
                    }
                    None => ModuleKind::H { sigma },
                }
            }
        }
    }

    fn child(&mut self, parent: usize, outcome: u64, delta: Option<u64>) -> (usize, bool) {
        let k = (outcome, if delta.is_some() { 0 } else { 1 });
        if let Some(&c) = self.nodes[parent].children.get(&k) {
            return (c, false);
        }
        let module = self.assign_module(parent, outcome, delta);
        let p = &self.nodes[parent];
        let node = Node {
            alpha: p.alpha.push(outcome),
            sigma: match delta {
                Some(n) => p.sigma.push(n),
                None => p.sigma.clone(),
            },
            parent: Some(parent),
            edge: Some(outcome),
            delta,
            module,
            mout: None,
            mexts: Vec::new(),
            visits: 0,
            children: BTreeMap::new(),
            state: ModState::None,
        };
        let id = self.nodes.len();
        self.nodes.push(node);
        self.nodes[parent].children.insert(k, id);
        (id, true)
    }

    fn number(&self, node: usize, o: Outcome) -> Result<u64, EngineError> {
        o.number().ok_or(EngineError::Overflow(node))
    }

    pub fn run_stage(&mut self) -> Result<(), EngineError> {
        let s = self.stage;
        let mut stack = vec![ROOT];
        let mut visited = Vec::new();
        while let Some(id) = stack.pop() {
            if visited.len() >= self.cfg.node_budget {
                self.truncated.push(s);
                break;
            }
            visited.push(id);
            let step = self.visit(id)?;
            let n = &self.nodes[id];
            self.trace.push(TraceRecord {
                stage: s,
                node: id,
                parent: n.parent,
                edge: n.edge,
                delta: n.delta,
                alpha: n.alpha.clone(),
                sigma: n.sigma.clone(),
                module: n.module.clone(),
                visit: n.visits,
                mout: n.mout.clone(),
                outcome: step.outcome,
                sets: std::mem::take(&mut self.cur_sets),
                enumerated: std::mem::take(&mut self.cur_enum),
            });
            stack.extend(step.next.into_iter().rev());
        }
        for id in visited {
            self.nodes[id].visits += 1;
        }
        self.log_start.push(self.log.len());
        for x in std::mem::take(&mut self.pending) {
            self.tree.insert(x.clone());
            self.log.push(x);
        }
        self.stage += 1;
        Ok(())
    }

    fn visit(&mut self, id: usize) -> Result<Step, EngineError> {
        let first = self.nodes[id].visits == 0;
        if self.nodes[id].mout.is_none() {
            return Err(EngineError::Invariant {
                condition: "output",
                node: id,
                detail: "visited without Mout".into(),
            });
        }
        let module = self.nodes[id].module.clone();
        if first {
            self.first_visit(id, &module);
            return Ok(Step { outcome: None, next: vec![] });
        }
        match module {
            ModuleKind::HPlus { sigma } => self.step_hplus(id, &sigma),
            ModuleKind::S { n, e: -1 } => self.step_branch(id, n),
            ModuleKind::S { e, .. } => self.step_split(id, e as usize),
            ModuleKind::P { e } => self.step_p(id, e as usize),
            ModuleKind::L { e } => self.step_l(id, e as usize),
            ModuleKind::Link { .. } => {
                let (c, _) = self.child(id, 0, None);
                Ok(Step { outcome: Some(Outcome::Pass), next: vec![c] })
            }
            ModuleKind::H { sigma } => self.step_h(id, &sigma),
            ModuleKind::Idle => Ok(Step { outcome: None, next: vec![] }),
        }
    }

    fn first_visit(&mut self, id: usize, module: &ModuleKind) {
        let mout = self.nodes[id].mout.clone().unwrap();
        match module {
            ModuleKind::H { .. } => {
                let tau = self.max_ext(&mout);
                self.nodes[id].state = ModState::H { tau, hist: BTreeMap::new() };
            }
            ModuleKind::Link { m, i } => {
                let owner = self
                    .path(id)
                    .into_iter()
                    .rev()
                    .find(|&a| self.nodes[a].module == ModuleKind::L { e: *i });
                if let Some(a) = owner {
                    let reg = Registrant { node: id, delta: mout, m: *m, scanned_upto: None };
                    match &mut self.nodes[a].state {
                        ModState::L { queue } => queue.push_back(reg),
                        st => *st = ModState::L { queue: VecDeque::from([reg]) },
                    }
                }
            }
            _ => {}
        }
    }

    fn step_hplus(&mut self, id: usize, sigma: &FinString) -> Result<Step, EngineError> {
        let v = self.nodes[id].visits;
        let mout = self.nodes[id].mout.clone().unwrap();
        let (c, _) = self.child(id, 0, None);
        if sigma.len() >= self.cfg.max_depth {
            self.set_mout(c, mout);
            return Ok(Step { outcome: Some(Outcome::Pass), next: vec![c] });
        }
        if v == 1 {
            let m = self.max_ext(&mout);
            self.set_mout(c, m);
        }
        let base = self.nodes[c].mout.clone().unwrap();
        let k = self.fresh();
        let tau = base.push(k);
        self.enumerate(id, tau.clone())?;
        self.set_mext(c, v - 1, tau)?;
        Ok(Step { outcome: Some(Outcome::Pass), next: vec![c] })
    }

    fn step_branch(&mut self, id: usize, n: u64) -> Result<Step, EngineError> {
        let node = &self.nodes[id];
        let mout = node.mout.clone().unwrap();
        let head = node.mexts.first().cloned().ok_or(EngineError::Invariant {
            condition: "output",
            node: id,
            detail: "branching module has no Mext".into(),
        })?;
        let mut next = Vec::new();
        let (left, _) = self.child(id, 0, Some(n));
        self.set_mout(left, head);
        next.push(left);
        if n + 1 < self.cfg.max_branch {
            let (right, _) = self.child(id, 0, None);
            self.set_mout(right, mout);
            self.copy_mexts(id, right, 1)?;
            next.push(right);
        }
        Ok(Step { outcome: Some(Outcome::Pass), next })
    }

    fn fire(&self, e: usize, node: usize, tau: &FinString) -> Result<FinString, EngineError> {
        self.func(e)
            .eval(tau, &self.cfg.x, self.stage)
            .map_err(|err| EngineError::Func { e, node, err })
    }

    fn step_p(&mut self, id: usize, e: usize) -> Result<Step, EngineError> {
        let s = self.stage;
        let mout = self.nodes[id].mout.clone().unwrap();
        let (neq, scanned) = match self.nodes[id].state {
            ModState::P { neq, scanned_upto } => (neq, scanned_upto),
            _ => (false, None),
        };
        let mut neq = neq;
        if !neq {
            let phi = self
                .func(e)
                .eval_oracle(&self.cfg.x, s)
                .map_err(|err| EngineError::Func { e, node: id, err })?;
            let full = scanned.is_none() || s <= self.func(e).stable_stage();
            let mut cands: Vec<FinString> = if full {
                self.extensions(&mout)
            } else {
                self.enumerated_since(scanned.unwrap())
                    .iter()
                    .filter(|x| mout.is_prefix_of(x))
                    .cloned()
                    .collect()
            };
            cands.sort_by_key(key);
            if let Some(tau) = cands.into_iter().find(|t| t.incompatible(&phi)) {
                neq = true;
                let target = self.max_ext(&tau);
                let (c, _) = self.child(id, 0, None);
                self.set_mout(c, target);
            }
        }
        self.nodes[id].state = ModState::P { neq, scanned_upto: Some(s) };
        let o = if neq { Outcome::Neq } else { Outcome::Up };
        let (c, fresh) = self.child(id, self.number(id, o)?, None);
        if fresh || self.nodes[c].mout.is_none() {
            self.set_mout(c, mout);
        }
        Ok(Step { outcome: Some(o), next: vec![c] })
    }

    fn step_l(&mut self, id: usize, e: usize) -> Result<Step, EngineError> {
        let s = self.stage;
        let mout = self.nodes[id].mout.clone().unwrap();
        let mut queue = match std::mem::take(&mut self.nodes[id].state) {
            ModState::L { queue } => queue,
            _ => VecDeque::new(),
        };
        let stable = s > self.func(e).stable_stage();
        let result = loop {
            let Some(head) = queue.front_mut() else {
                break None;
            };
            let mut cands: Vec<FinString> = match head.scanned_upto {
                Some(from) if stable => self
                    .enumerated_since(from)
                    .iter()
                    .filter(|x| head.delta.is_prefix_of(x))
                    .cloned()
                    .collect(),
                _ => self.extensions(&head.delta),
            };
            cands.sort_by_key(key);
            let mut hit = None;
            for t in cands {
                if self.fire(e, id, &t)?.len() as u64 > head.m {
                    hit = Some(t);
                    break;
                }
            }
            match hit {
                Some(t) => {
                    let reg = queue.pop_front().unwrap();
                    let target = self.max_ext(&t);
                    let (c, _) = self.child(reg.node, 0, None);
                    self.set_mout(c, target);
                }
                None => {
                    head.scanned_upto = Some(s);
                    break Some((head.node, head.delta.clone()));
                }
            }
        };
        self.nodes[id].state = ModState::L { queue };
        let (o, out) = match result {
            None => (Outcome::Down, mout),
            Some((node, delta)) => (Outcome::Link { node }, delta),
        };
        let (c, _) = self.child(id, self.number(id, o)?, None);
        if self.nodes[c].mout.is_none() {
            self.set_mout(c, out);
        }
        Ok(Step { outcome: Some(o), next: vec![c] })
    }

    fn evidence(&self, sigma: &FinString, nh: u64, i: u8, k: u64) -> bool {
        let s = self.stage;
        let regime = self.oracle.outer_regime_start(sigma);
        let top = (nh + k).min(nh.max(regime) + 1);
        (nh..=top).all(|n| self.oracle.count_inner(sigma, n, s, i) > k)
    }

    fn step_h(&mut self, id: usize, sigma: &FinString) -> Result<Step, EngineError> {
        let (tau, mut hist) = match std::mem::take(&mut self.nodes[id].state) {
            ModState::H { tau, hist } => (tau, hist),
            _ => unreachable!("H state is set on the first visit"),
        };
        let top = hist.keys().map(|k| k.0).max().map_or(0, |n| n + 1);
        let mut pick = None;
        'search: for nh in 0..=top {
            for i in 0..2u8 {
                let k = hist.get(&(nh, i)).copied().unwrap_or(0);
                if self.evidence(sigma, nh, i, k) {
                    pick = Some((nh, i));
                    break 'search;
                }
            }
        }
        let (nh, i) = pick.expect("a fresh index always has evidence at x = 0");
        let m: u64 = hist.range(..(nh, i)).map(|(_, v)| v).sum();
        *hist.entry((nh, i)).or_insert(0) += 1;
        let o = Outcome::H { i, n: nh, m };
        let (c, fresh) = self.child(id, self.number(id, o)?, None);
        if fresh {
            let x = tau.push(self.fresh());
            self.enumerate(id, x.clone())?;
            self.set_mout(c, x);
        }
        self.nodes[id].state = ModState::H { tau, hist };
        Ok(Step { outcome: Some(o), next: vec![c] })
    }

    /// Refreshes the splitter tables of an `Sⁿ_e` node once `τ₀, τ₁` are known.
    fn scan_splitters(&mut self, id: usize, e: usize, memo: &mut SplitMemo) -> Result<(), EngineError> {
        let s = self.stage;
        let visits = self.nodes[id].visits;
        let t0 = self.fire(e, id, memo.tau0.as_ref().unwrap())?;
        let t1 = self.fire(e, id, memo.tau1.as_ref().unwrap())?;
        if s <= self.func(e).stable_stage() {
            memo.split0.clear();
            memo.split1.clear();
            memo.index.clear();
            memo.scanned_n = None;
            memo.scanned_upto = None;
        }
        let test = |this: &Self, memo: &mut SplitMemo, n: u64, x: &FinString| {
            let out = this.fire(e, id, x)?;
            if out.incompatible(&t0) {
                memo.split0.entry(n).or_default().insert(key(x));
            }
            if out.incompatible(&t1) {
                memo.split1.entry(n).or_default().insert(key(x));
            }
            Ok::<(), EngineError>(())
        };
        if let Some(from) = memo.scanned_upto {
            for x in self.enumerated_since(from).to_vec() {
                for p in x.prefixes() {
                    if let Some(&n) = memo.index.get(&p) {
                        test(self, memo, n, &x)?;
                    }
                }
            }
        }
        let start = memo.scanned_n.map_or(1, |n| n + 1);
        let top = visits.min(self.nodes[id].mexts.len() as u64 - 1);
        for n in start..=top {
            let base = self.nodes[id].mexts[n as usize].clone();
            memo.index.insert(base.clone(), n);
            for x in self.extensions(&base) {
                test(self, memo, n, &x)?;
            }
            memo.scanned_n = Some(n);
        }
        memo.scanned_upto = Some(s);
        Ok(())
    }

    fn step_split(&mut self, id: usize, e: usize) -> Result<Step, EngineError> {
        let s = self.stage;
        let mut memo = match std::mem::take(&mut self.nodes[id].state) {
            ModState::S(m) => m,
            _ => Box::default(),
        };
        let mout = self.nodes[id].mout.clone().unwrap();
        let visits = self.nodes[id].visits;
        let base0 = self.nodes[id].mexts.first().cloned().ok_or(EngineError::Invariant {
            condition: "output",
            node: id,
            detail: "splitting module has no Mext".into(),
        })?;
        let step = if memo.tau0.is_none() {
            if s <= self.func(e).stable_stage() {
                memo.seen.clear();
                memo.scanned_upto = None;
            }
            let mut fresh: Vec<FinString> = match memo.scanned_upto {
                None => self.extensions(&base0),
                Some(from) => self
                    .enumerated_since(from)
                    .iter()
                    .filter(|x| base0.is_prefix_of(x))
                    .cloned()
                    .collect(),
            };
            fresh.sort_by_key(key);
            memo.scanned_upto = Some(s);
            let mut found = None;
            'outer: for x in fresh {
                let out = self.fire(e, id, &x)?;
                for (rep, rout) in &memo.seen {
                    if rout.incompatible(&out) {
                        found = Some((rep.clone(), x));
                        break 'outer;
                    }
                }
                if !memo.seen.iter().any(|(_, o)| *o == out) {
                    memo.seen.push((x, out));
                }
            }
            match found {
                Some((a, b)) => {
                    let t0 = self.max_ext(&a);
                    memo.tau1 = Some(self.max_ext(&b));
                    memo.tau0 = Some(t0.clone());
                    memo.seen.clear();
                    memo.scanned_upto = None;
                    let (c, _) = self.child(id, 1, None);
                    self.set_mout(c, mout);
                    self.set_mext(c, 0, t0)?;
                    Step { outcome: Some(Outcome::Bot0), next: vec![c] }
                }
                None => {
                    let (c, _) = self.child(id, 0, None);
                    self.set_mout(c, mout);
                    self.copy_mexts(id, c, 0)?;
                    Step { outcome: Some(Outcome::Flat), next: vec![c] }
                }
            }
        } else {
            self.scan_splitters(id, e, &mut memo)?;
            let pick = |map: &BTreeMap<u64, BTreeSet<(u64, FinString)>>, above: u64| {
                map.range(above + 1..=visits)
                    .next()
                    .map(|(&n, set)| (n, set.iter().next().unwrap().1.clone()))
            };
            if let Some((n, t)) = pick(&memo.split0, memo.n_hat) {
                memo.n_hat = n;
                memo.m_hat = n;
                let target = self.max_ext(&t);
                let (c, _) = self.child(id, 1, None);
                let sv = self.nodes[c].visits;
                self.set_mout(c, mout);
                self.set_mext(c, sv, target)?;
                Step { outcome: Some(Outcome::Bot0), next: vec![c] }
            } else {
                let (o, src) = match pick(&memo.split1, memo.m_hat) {
                    Some((n, t)) => {
                        memo.m_hat = n;
                        (Outcome::Bot1 { n: memo.n_hat }, Some(t))
                    }
                    None => (Outcome::Div { n: memo.n_hat, m: memo.m_hat }, None),
                };
                let (c, fresh) = self.child(id, self.number(id, o)?, None);
                let sv = self.nodes[c].visits;
                if fresh {
                    self.set_mout(c, mout);
                    let x = memo.tau1.as_ref().unwrap().push(self.fresh());
                    self.enumerate(id, x.clone())?;
                    self.set_mext(c, 0, x)?;
                }
                let t = match src {
                    Some(t) => t,
                    None => {
                        let j = (memo.m_hat + sv + 1) as usize;
                        self.nodes[id].mexts.get(j).cloned().ok_or(EngineError::Invariant {
                            condition: "output",
                            node: id,
                            detail: format!("Mext {j} missing"),
                        })?
                    }
                };
                let target = self.max_ext(&t);
                self.set_mext(c, sv + 1, target)?;
                Step { outcome: Some(o), next: vec![c] }
            }
        };
        self.nodes[id].state = ModState::S(memo);
        Ok(step)
    }
}

/// Runs a scenario to its horizon.
pub fn run_engine(cfg: &EngineConfig) -> Result<Engine, EngineError> {
    let mut e = Engine::new(cfg.clone())?;
    e.run(cfg.horizon)?;
    Ok(e)
}

/// One JSON object per line.
pub fn trace_to_jsonl(trace: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in trace {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn trace_from_jsonl(text: &str) -> Result<Vec<TraceRecord>, (usize, String)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| (i + 1, e.to_string())))
        .collect()
}

/// DOT rendering of the nodes visited at `stage`.
pub fn tpath_dot(trace: &[TraceRecord], stage: u64) -> String {
    let mut out = String::from("digraph tpath {\n  node [shape=box];\n");
    for r in trace.iter().filter(|r| r.stage == stage) {
        let label = match r.outcome.and_then(|o| o.number()) {
            Some(o) => format!("{} {} o={}", r.module, r.sigma, o),
            None => format!("{} {}", r.module, r.sigma),
        };
        out.push_str(&format!("  n{} [label=\"{}\"];\n", r.node, label));
        if let Some(p) = r.parent {
            out.push_str(&format!("  n{} -> n{} [label=\"{}\"];\n", p, r.node, r.edge.unwrap_or(0)));
        }
    }
    out.push_str("}\n");
    out
}

/// DOT rendering of `T_s` rebuilt from the trace.
pub fn tree_dot(trace: &[TraceRecord], stage: u64) -> String {
    let mut members: BTreeSet<FinString> = std::iter::once(FinString::empty()).collect();
    for r in trace.iter().filter(|r| r.stage < stage) {
        members.extend(r.enumerated.iter().cloned());
    }
    let ids: BTreeMap<&FinString, usize> = members.iter().enumerate().map(|(i, m)| (m, i)).collect();
    let mut out = String::from("digraph T {\n");
    for (m, i) in &ids {
        out.push_str(&format!("  t{} [label=\"{}\"];\n", i, m));
        if let Some(p) = m.pred() {
            out.push_str(&format!("  t{} -> t{};\n", ids[&p], i));
        }
    }
    out.push_str("}\n");
    out
}
