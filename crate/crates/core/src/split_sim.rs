//! Stagewise construction of a functional over an approximated f-tree so that
//! splittings appear above every node while designated path pairs keep
//! comparable images.
//!
//! `Φ(τ)` is fixed once, at stage `⌜τ⌝`, as `Φ(τ⁻)⌢[q_s(τ⁻)]⌢l_s(τ⁻)`. The
//! `q` part alone yields the splittings; the `l` part is steered by the
//! `f`/`g` families built on the working subtree.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::strings_codes::{code_sat, FinString};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SplitError {
    #[error("branching must be at least 3, got {0}")]
    Branching(u64),
    #[error("flip at {sigma} is outside the domain")]
    FlipOutside { sigma: FinString },
    #[error("flip value {value} at {sigma} must be at least the branching and unused")]
    FlipValue { sigma: FinString, value: u64 },
    #[error("image {0} falls outside the coded universe")]
    Uncoded(FinString),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coding {
    /// depth-first numbering of the bounded universe: prefixes first,
    /// siblings in order, each subtree contiguous
    #[default]
    Preorder,
    Cantor,
}

/// At `stage`, `T(σ)` and everything above it is withdrawn; `σ` comes back
/// with last entry `value`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flip {
    pub sigma: FinString,
    pub stage: u64,
    pub value: u64,
}

fn d_depth() -> usize {
    4
}
fn d_branch() -> u64 {
    4
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitConfig {
    #[serde(default = "d_depth")]
    pub depth: usize,
    #[serde(default = "d_branch")]
    pub branching: u64,
    #[serde(default)]
    pub coding: Coding,
    /// entry bound of the coded universe; at least the branching and above
    /// every flip value
    #[serde(default)]
    pub alphabet: Option<u64>,
    #[serde(default)]
    pub flips: Vec<Flip>,
    #[serde(default)]
    pub horizon: Option<u64>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { depth: d_depth(), branching: d_branch(), coding: Coding::Preorder, alphabet: None, flips: vec![], horizon: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fam {
    F,
    G,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SplitEvent {
    Define { sigma: FinString, image: FinString },
    Undefine { sigma: FinString },
    Phi { tau: FinString, value: FinString, q: u64, l: FinString },
    L { tau: FinString, value: FinString },
    Set { owner: FinString, fam: Fam, n: u64, value: FinString, case: char },
    Unset { owner: FinString, fam: Fam, n: u64 },
    Injure { tau: FinString },
    Block { tau: FinString },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub stage: u64,
    #[serde(flatten)]
    pub event: SplitEvent,
}

/// `(start, end, image)`: `T_s(σ) = image` for `start ≤ s < end`.
type Interval = (u64, Option<u64>, FinString);

struct Coder {
    alphabet: u64,
    depth: usize,
    coding: Coding,
}

impl Coder {
    fn subtree(&self, h: usize) -> u64 {
        (0..=h).map(|k| self.alphabet.pow(k as u32)).sum()
    }

    fn code(&self, x: &FinString) -> Option<u64> {
        if x.len() > self.depth || x.entries().iter().any(|&v| v >= self.alphabet) {
            return None;
        }
        Some(match self.coding {
            Coding::Cantor => code_sat(x),
            Coding::Preorder => {
                let mut c = 0;
                for (k, &v) in x.entries().iter().enumerate() {
                    c += 1 + v * self.subtree(self.depth - k - 1);
                }
                c
            }
        })
    }
}

pub struct SplitSim {
    cfg: SplitConfig,
    coder: Coder,
    horizon: u64,
    domain: Vec<FinString>,
    sched: BTreeMap<FinString, Vec<Interval>>,
    by_code: BTreeMap<u64, Vec<FinString>>,
    phi: HashMap<FinString, FinString>,
    l: HashMap<FinString, FinString>,
    fam: BTreeMap<(FinString, Fam, u64), FinString>,
    /// working-tree entries: σ ↦ (image, q, since)
    work: BTreeMap<FinString, (FinString, u64, u64)>,
    stage: u64,
    trace: Vec<SplitRecord>,
}

impl SplitSim {
    pub fn new(cfg: SplitConfig) -> Result<SplitSim, SplitError> {
        if cfg.branching < 3 {
            return Err(SplitError::Branching(cfg.branching));
        }
        let alphabet = cfg
            .flips
            .iter()
            .map(|f| f.value + 1)
            .max()
            .unwrap_or(0)
            .max(cfg.branching)
            .max(cfg.alphabet.unwrap_or(0));
        let coder = Coder { alphabet, depth: cfg.depth, coding: cfg.coding };
        let domain = crate::strings_codes::all_strings(cfg.depth, cfg.branching - 1);
        let sched = build_schedule(&cfg, &coder, &domain)?;
        let mut by_code: BTreeMap<u64, Vec<FinString>> = BTreeMap::new();
        for x in crate::strings_codes::all_strings(cfg.depth, alphabet - 1) {
            let c = coder.code(&x).unwrap();
            by_code.entry(c).or_default().push(x);
        }
        let last_code = match cfg.coding {
            Coding::Preorder => *by_code.keys().next_back().unwrap(),
            Coding::Cantor => sched
                .values()
                .flatten()
                .map(|(st, _, _)| *st)
                .filter(|&s| s != u64::MAX)
                .max()
                .unwrap_or(0),
        };
        let last_flip = cfg.flips.iter().map(|f| f.stage).max().unwrap_or(0);
        let horizon = cfg.horizon.unwrap_or(last_code.max(last_flip) + 64);
        Ok(SplitSim {
            cfg,
            coder,
            horizon,
            domain,
            sched,
            by_code,
            phi: HashMap::new(),
            l: HashMap::new(),
            fam: BTreeMap::new(),
            work: BTreeMap::new(),
            stage: 0,
            trace: Vec::new(),
        })
    }

    pub fn config(&self) -> &SplitConfig {
        &self.cfg
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn stage(&self) -> u64 {
        self.stage
    }

    pub fn trace(&self) -> &[SplitRecord] {
        &self.trace
    }

    pub fn code(&self, x: &FinString) -> Option<u64> {
        self.coder.code(x)
    }

    pub fn get_phi(&self, tau: &FinString) -> Option<&FinString> {
        self.phi.get(tau)
    }

    /// Longest defined `f` and `g` prefixes built for `σ`.
    pub fn get_pair(&self, sigma: &FinString) -> (Option<FinString>, Option<FinString>) {
        let chain = |k: Fam| {
            let mut last = None;
            for n in 0.. {
                match self.fam.get(&(sigma.clone(), k, n)) {
                    Some(v) => last = Some(v.clone()),
                    None => break,
                }
            }
            last
        };
        (chain(Fam::F), chain(Fam::G))
    }

    pub fn family(&self) -> &BTreeMap<(FinString, Fam, u64), FinString> {
        &self.fam
    }

    /// `T_s(σ)` per the schedule.
    pub fn t_at(&self, sigma: &FinString, s: u64) -> Option<&FinString> {
        interval_at(&self.sched, sigma, s).map(|iv| &iv.2)
    }

    /// The f-tree at the end of the schedule.
    pub fn t_final(&self) -> BTreeMap<FinString, FinString> {
        self.domain
            .iter()
            .filter_map(|d| self.t_at(d, self.horizon).map(|i| (d.clone(), i.clone())))
            .collect()
    }

    fn def_stage(&self, sigma: &FinString, s: u64) -> Option<u64> {
        interval_at(&self.sched, sigma, s).map(|iv| iv.0)
    }

    fn children(&self, sigma: &FinString) -> impl Iterator<Item = FinString> + '_ {
        let b = if sigma.len() < self.cfg.depth { self.cfg.branching } else { 0 };
        let sigma = sigma.clone();
        (0..b).map(move |m| sigma.push(m))
    }

    /// Node of the domain whose image at `s` is `tau`.
    fn owner_of(&self, tau: &FinString, s: u64) -> Option<FinString> {
        // images keep the domain's length
        self.domain
            .iter()
            .filter(|d| d.len() == tau.len())
            .find(|d| self.t_at(d, s) == Some(tau))
            .cloned()
    }

    /// `q_s(τ)`: definition stage of the most senior defined immediate
    /// extension, or 0.
    fn q_of(&self, sigma: &FinString, s: u64) -> u64 {
        self.children(sigma).filter_map(|c| self.def_stage(&c, s)).min().unwrap_or(0)
    }

    fn push(&mut self, event: SplitEvent) {
        self.trace.push(SplitRecord { stage: self.stage, event });
    }

    pub fn run(&mut self) {
        while self.stage <= self.horizon {
            self.run_stage();
        }
    }

    fn phi_prime(&self, sigma: &FinString, tau: &FinString) -> Option<FinString> {
        let (_, q, _) = self.work.get(sigma)?;
        self.phi.get(tau).map(|p| p.push(*q))
    }

    pub fn run_stage(&mut self) {
        let s = self.stage;
        // schedule changes
        let mut evs = Vec::new();
        for d in &self.domain {
            let now = self.t_at(d, s).cloned();
            let before = s.checked_sub(1).and_then(|p| self.t_at(d, p).cloned());
            if now != before {
                evs.push(match now {
                    Some(image) => SplitEvent::Define { sigma: d.clone(), image },
                    None => SplitEvent::Undefine { sigma: d.clone() },
                });
            }
        }
        for e in evs {
            self.push(e);
        }

        // Φ at code deadlines
        let due = self.by_code.get(&s).cloned().unwrap_or_default();
        for tau in due {
            let (value, q, l) = match tau.pred() {
                None => (FinString::empty(), 0, FinString::empty()),
                Some(p) => {
                    let q = self.owner_of(&p, s).map_or(0, |o| self.q_of(&o, s));
                    let l = self.l.get(&p).cloned().unwrap_or_default();
                    let base = self.phi.get(&p).cloned().unwrap_or_default();
                    (base.push(q).concat(&l), q, l)
                }
            };
            self.phi.insert(tau.clone(), value.clone());
            self.push(SplitEvent::Phi { tau, value, q, l });
        }

        // working tree and injuries from its changes
        let next = self.working_tree(s);
        let mut by_seniority: Vec<(u64, FinString)> =
            self.work.iter().map(|(d, (_, _, since))| (*since, d.clone())).collect();
        by_seniority.sort();
        let changed: Vec<FinString> = self
            .work
            .iter()
            .filter(|(d, (img, q, _))| next.get(*d).is_none_or(|(i2, q2, _)| i2 != img || q2 != q))
            .map(|(d, _)| d.clone())
            .collect();
        let mut to_injure = BTreeSet::new();
        for d in &changed {
            let pos = by_seniority.iter().position(|(_, x)| x == d).unwrap();
            for (_, x) in &by_seniority[pos..] {
                to_injure.insert(self.work[x].0.clone());
            }
        }
        for tau in to_injure {
            self.injure(tau);
        }
        self.work = next;

        // act in order of seniority
        let mut order: Vec<(u64, FinString)> =
            self.work.iter().map(|(d, (_, _, since))| (*since, d.clone())).collect();
        order.sort();
        let mut blocked: Vec<FinString> = Vec::new();
        for (_, sigma) in order {
            let Some((tau, _, _)) = self.work.get(&sigma).cloned() else { continue };
            if blocked.iter().any(|b| b.is_prefix_of(&tau)) {
                continue;
            }
            if let Some(b) = self.act(&sigma, &tau) {
                blocked.push(b);
            }
        }
        self.stage += 1;
    }

    fn working_tree(&self, s: u64) -> BTreeMap<FinString, (FinString, u64, u64)> {
        let mut out: BTreeMap<FinString, (FinString, u64, u64)> = BTreeMap::new();
        // the domain is in shortlex order, so parents come first
        for d in &self.domain {
            let Some(img) = self.t_at(d, s) else { continue };
            let q = self.q_of(d, s);
            if d.len() < self.cfg.depth && q == 0 {
                continue;
            }
            if let Some(p) = d.pred() {
                let Some((_, pq, _)) = out.get(&p) else { continue };
                if self.coder.code(img).unwrap_or(u64::MAX) < *pq {
                    continue;
                }
            }
            let since = match self.work.get(d) {
                Some((i, q0, since)) if i == img && *q0 == q => *since,
                _ => s,
            };
            out.insert(d.clone(), (img.clone(), q, since));
        }
        out
    }

    fn set_l(&mut self, tau: &FinString, value: FinString) {
        let old = self.l.get(tau).cloned().unwrap_or_default();
        if old != value {
            self.l.insert(tau.clone(), value.clone());
            self.push(SplitEvent::L { tau: tau.clone(), value });
        }
    }

    fn injure(&mut self, tau: FinString) {
        let mut work = vec![tau];
        let mut done = BTreeSet::new();
        while let Some(t) = work.pop() {
            if !done.insert(t.clone()) {
                continue;
            }
            self.push(SplitEvent::Injure { tau: t.clone() });
            self.set_l(&t, FinString::empty());
            let hit: Vec<(FinString, Fam, u64)> =
                self.fam.iter().filter(|(_, v)| t.is_prefix_of(v)).map(|(k, _)| k.clone()).collect();
            for (owner, k, n) in hit {
                if self.fam.remove(&(owner.clone(), k, n)).is_none() {
                    continue;
                }
                self.push(SplitEvent::Unset { owner: owner.clone(), fam: k, n });
                let from = if k == Fam::F { n } else { n + 1 };
                let more: Vec<FinString> = self
                    .fam
                    .iter()
                    .filter(|((o, _, m), _)| *o == owner && *m >= from)
                    .map(|(_, v)| v.clone())
                    .collect();
                work.extend(more);
                if k == Fam::F && n == 0 {
                    if let Some((img, _, _)) = self.work.get(&owner) {
                        work.push(img.clone());
                    }
                }
            }
        }
    }

    fn define(&mut self, owner: &FinString, k: Fam, n: u64, value: FinString, case: char) {
        self.injure(value.clone());
        self.fam.insert((owner.clone(), k, n), value.clone());
        self.push(SplitEvent::Set { owner: owner.clone(), fam: k, n, value, case });
    }

    /// Most senior working-tree child of `σ` whose image passes `ok`.
    fn senior_child<F: Fn(&Self, &FinString, &FinString) -> bool>(
        &self,
        sigma: &FinString,
        ok: F,
    ) -> Option<FinString> {
        let mut kids: Vec<(u64, FinString, FinString)> = self
            .children(sigma)
            .filter_map(|c| self.work.get(&c).map(|(img, _, since)| (*since, c, img.clone())))
            .collect();
        kids.sort();
        kids.into_iter().find(|(_, c, img)| ok(self, c, img)).map(|(_, _, img)| img)
    }

    fn find_role(&self, tau: &FinString, k: Fam) -> Option<(FinString, u64)> {
        self.fam
            .iter()
            .find(|((o, kk, n), v)| {
                *kk == k && *v == tau && !self.fam.contains_key(&(o.clone(), k, n + 1))
            })
            .map(|((o, _, n), _)| (o.clone(), *n))
    }

    fn node_of(&self, img: &FinString) -> Option<FinString> {
        self.work.iter().find(|(_, (i, _, _))| i == img).map(|(d, _)| d.clone())
    }

    fn phi_prime_img(&self, img: &FinString) -> Option<FinString> {
        self.node_of(img).and_then(|d| self.phi_prime(&d, img))
    }

    /// Runs the first applicable case for `τ = W_s(σ)`. Returns `Some(τ)`
    /// when τ's extensions are to be skipped this stage.
    fn act(&mut self, sigma: &FinString, tau: &FinString) -> Option<FinString> {
        for (k, other) in [(Fam::F, Fam::G), (Fam::G, Fam::F)] {
            let Some((owner, n)) = self.find_role(tau, k) else { continue };
            // f-case aims at g^n, g-case at f^{n+1}
            let target_n = if k == Fam::F { n } else { n + 1 };
            let Some(target) = self.fam.get(&(owner.clone(), other, target_n)).cloned() else {
                self.push(SplitEvent::Block { tau: tau.clone() });
                return Some(tau.clone());
            };
            let (Some(goal), Some(mine)) = (self.phi_prime_img(&target), self.phi_prime(sigma, tau)) else {
                return None;
            };
            let cur = mine.concat(&self.l.get(tau).cloned().unwrap_or_default());
            if !goal.is_prefix_of(&cur) && mine.is_prefix_of(&goal) {
                self.set_l(tau, FinString(goal.entries()[mine.len()..].to_vec()));
            }
            let found = self.senior_child(sigma, |me, c, img| {
                me.phi_prime(c, img).is_some_and(|p| goal.is_prefix_of(&p))
            });
            if let Some(img) = found {
                self.define(&owner, k, n + 1, img, if k == Fam::F { 'A' } else { 'B' });
            }
            return None;
        }
        let f0 = self.fam.get(&(sigma.clone(), Fam::F, 0)).cloned();
        let g0 = self.fam.get(&(sigma.clone(), Fam::G, 0)).cloned();
        match (f0, g0) {
            (Some(f0), None) => {
                let goal = self.phi_prime_img(&f0)?;
                let found = self.senior_child(sigma, |me, c, img| {
                    *img != f0 && me.phi_prime(c, img).is_some_and(|p| goal.is_prefix_of(&p))
                });
                if let Some(img) = found {
                    self.define(sigma, Fam::G, 0, img, 'C');
                }
            }
            (None, _) if !self.fam.values().any(|v| v == tau) => {
                let img = self.senior_child(sigma, |_, _, _| true)?;
                let (Some(goal), Some(mine)) = (self.phi_prime_img(&img), self.phi_prime(sigma, tau)) else {
                    return None;
                };
                self.define(sigma, Fam::F, 0, img, 'D');
                if mine.is_prefix_of(&goal) {
                    self.set_l(tau, FinString(goal.entries()[mine.len()..].to_vec()));
                }
            }
            _ => {}
        }
        None
    }
}

fn interval_at<'a>(sched: &'a BTreeMap<FinString, Vec<Interval>>, sigma: &FinString, s: u64) -> Option<&'a Interval> {
    sched.get(sigma)?.iter().find(|(a, b, _)| *a <= s && b.is_none_or(|b| s < b))
}

fn build_schedule(
    cfg: &SplitConfig,
    coder: &Coder,
    domain: &[FinString],
) -> Result<BTreeMap<FinString, Vec<Interval>>, SplitError> {
    let mut sched: BTreeMap<FinString, Vec<Interval>> = BTreeMap::new();
    let code = |x: &FinString| coder.code(x).ok_or_else(|| SplitError::Uncoded(x.clone()));
    // identity images, each defined once both codes have passed
    for d in domain {
        let mut start = code(d)?.saturating_add(1);
        if let Some(p) = d.pred() {
            start = start.max(sched[&p][0].0);
        }
        sched.insert(d.clone(), vec![(start, None, d.clone())]);
    }
    let mut flips = cfg.flips.clone();
    flips.sort_by_key(|f| f.stage);
    let mut used: BTreeSet<(FinString, u64)> = BTreeSet::new();
    for f in &flips {
        let Some(last) = f.sigma.last() else {
            return Err(SplitError::FlipOutside { sigma: f.sigma.clone() });
        };
        if !sched.contains_key(&f.sigma) {
            return Err(SplitError::FlipOutside { sigma: f.sigma.clone() });
        }
        let parent = f.sigma.pred().unwrap();
        if f.value < cfg.branching || f.value == last || !used.insert((parent.clone(), f.value)) {
            return Err(SplitError::FlipValue { sigma: f.sigma.clone(), value: f.value });
        }
        let parent_img = sched[&parent].last().unwrap().2.clone();
        let base = parent_img.push(f.value);
        for d in domain.iter().filter(|d| f.sigma.is_prefix_of(d)) {
            let ivs = sched.get_mut(d).unwrap();
            let cur = ivs.last_mut().unwrap();
            if cur.0 >= f.stage {
                ivs.pop();
            } else {
                cur.1 = Some(f.stage);
            }
            let img = base.concat(&FinString(d.entries()[f.sigma.len()..].to_vec()));
            let mut start = (f.stage + 1).max(code(d)? + 1).max(code(&img)?.saturating_add(1));
            if let Some(p) = d.pred().filter(|p| f.sigma.is_prefix_of(p)) {
                start = start.max(sched[&p].last().unwrap().0);
            }
            sched.get_mut(d).unwrap().push((start, None, img));
        }
    }
    Ok(sched)
}

/// Re-derives every `Φ` entry of a trace from the schedule and `l` events it
/// records. Returns `(matching, total)`.
pub fn rederive_phi(trace: &[SplitRecord], branching: u64, depth: usize) -> (usize, usize) {
    let mut t: BTreeMap<FinString, (FinString, u64)> = BTreeMap::new();
    let mut phi: HashMap<FinString, FinString> = HashMap::new();
    let mut l: HashMap<FinString, FinString> = HashMap::new();
    let (mut ok, mut total) = (0, 0);
    for r in trace {
        match &r.event {
            SplitEvent::Define { sigma, image } => {
                t.insert(sigma.clone(), (image.clone(), r.stage));
            }
            SplitEvent::Undefine { sigma } => {
                t.remove(sigma);
            }
            SplitEvent::L { tau, value } => {
                l.insert(tau.clone(), value.clone());
            }
            SplitEvent::Phi { tau, value, .. } => {
                total += 1;
                let expect = match tau.pred() {
                    None => FinString::empty(),
                    Some(p) => {
                        let owner = t.iter().find(|(_, (img, _))| *img == p).map(|(d, _)| d.clone());
                        let q = owner
                            .filter(|o| o.len() < depth)
                            .map(|o| {
                                (0..branching)
                                    .filter_map(|m| t.get(&o.push(m)).map(|x| x.1))
                                    .min()
                                    .unwrap_or(0)
                            })
                            .unwrap_or(0);
                        let base = phi.get(&p).cloned().unwrap_or_default();
                        base.push(q).concat(&l.get(&p).cloned().unwrap_or_default())
                    }
                };
                if expect == *value {
                    ok += 1;
                }
                phi.insert(tau.clone(), value.clone());
            }
            _ => {}
        }
    }
    (ok, total)
}

/// Stages and owners at which a built `f`/`g` pair had incomparable images.
pub fn pair_disagreements(trace: &[SplitRecord]) -> Vec<(u64, FinString)> {
    let mut phi: HashMap<FinString, FinString> = HashMap::new();
    let mut fam: BTreeMap<(FinString, Fam, u64), FinString> = BTreeMap::new();
    let mut out = Vec::new();
    let mut i = 0;
    while i < trace.len() {
        let s = trace[i].stage;
        while i < trace.len() && trace[i].stage == s {
            match &trace[i].event {
                SplitEvent::Phi { tau, value, .. } => {
                    phi.insert(tau.clone(), value.clone());
                }
                SplitEvent::Set { owner, fam: k, n, value, .. } => {
                    fam.insert((owner.clone(), *k, *n), value.clone());
                }
                SplitEvent::Unset { owner, fam: k, n } => {
                    fam.remove(&(owner.clone(), *k, *n));
                }
                _ => {}
            }
            i += 1;
        }
        let owners: BTreeSet<&FinString> = fam.keys().map(|k| &k.0).collect();
        for o in owners {
            let top = |k: Fam| {
                (0..).map_while(|n| fam.get(&(o.clone(), k, n))).last().and_then(|v| phi.get(v))
            };
            if let (Some(a), Some(b)) = (top(Fam::F), top(Fam::G)) {
                if !a.compatible(b) {
                    out.push((s, o.clone()));
                }
            }
        }
    }
    out
}

/// Non-terminal nodes of the final tree without two immediate extensions
/// whose images are incompatible.
pub fn nodes_without_split(sim: &SplitSim) -> Vec<FinString> {
    let t = sim.t_final();
    t.keys()
        .filter(|d| d.len() < sim.cfg.depth)
        .filter(|d| {
            let imgs: Vec<&FinString> = sim
                .children(d)
                .filter_map(|c| t.get(&c))
                .filter_map(|img| sim.get_phi(img))
                .collect();
            !imgs.iter().enumerate().any(|(i, a)| imgs[i + 1..].iter().any(|b| a.incompatible(b)))
        })
        .cloned()
        .collect()
}

pub fn run_split(cfg: &SplitConfig) -> Result<SplitSim, SplitError> {
    let mut sim = SplitSim::new(cfg.clone())?;
    sim.run();
    Ok(sim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::s;

    #[test]
    fn preorder_codes() {
        let c = Coder { alphabet: 3, depth: 2, coding: Coding::Preorder };
        assert_eq!(c.code(&s![]), Some(0));
        assert_eq!(c.code(&s![0]), Some(1));
        assert_eq!(c.code(&s![0, 2]), Some(4));
        assert_eq!(c.code(&s![1]), Some(5));
        assert_eq!(c.code(&s![2, 2]), Some(12));
        assert_eq!(c.code(&s![3]), None);
    }

    #[test]
    fn schedule_respects_codes_and_parents() {
        let cfg = SplitConfig { depth: 2, branching: 3, ..Default::default() };
        let sim = SplitSim::new(cfg).unwrap();
        assert_eq!(sim.t_at(&s![], 0), None);
        assert_eq!(sim.t_at(&s![], 1), Some(&s![]));
        assert_eq!(sim.t_at(&s![1], 5), None);
        assert_eq!(sim.t_at(&s![1], 6), Some(&s![1]));
    }

    #[test]
    fn flips_withdraw_and_replace() {
        let cfg = SplitConfig {
            depth: 2,
            branching: 3,
            flips: vec![Flip { sigma: s![1], stage: 20, value: 3 }],
            ..Default::default()
        };
        let sim = SplitSim::new(cfg).unwrap();
        assert_eq!(sim.t_at(&s![1, 0], 19), Some(&s![1, 0]));
        assert_eq!(sim.t_at(&s![1, 0], 20), None);
        assert_eq!(sim.t_final()[&s![1, 0]], s![3, 0]);
        let bad = SplitConfig { flips: vec![Flip { sigma: s![1], stage: 5, value: 2 }], ..Default::default() };
        assert!(SplitSim::new(bad).is_err());
    }
}
