//! Table-driven computable functionals with stages, and e-splitting.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::strings_codes::FinString;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FuncError {
    #[error("computation consults X below {need} but only {have} bits are given")]
    XBeyondPrefix { need: usize, have: usize },
}

/// When `input ⊑ τ`, `x_use ⊑ X` and the stage has reached `stage`, append
/// `output`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub input: FinString,
    #[serde(default)]
    pub x_use: FinString,
    #[serde(default)]
    pub stage: u64,
    pub output: Vec<u64>,
}

/// A rule for the functional run on the oracle alone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleRule {
    pub x_use: FinString,
    #[serde(default)]
    pub stage: u64,
    pub output: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Functional {
    /// never produces output
    Empty,
    Identity,
    Constant { value: FinString },
    Table {
        #[serde(default)]
        rules: Vec<Rule>,
        #[serde(default)]
        oracle_rules: Vec<OracleRule>,
    },
}

fn check_use(x_use: &FinString, x: &FinString) -> Result<bool, FuncError> {
    if x_use.len() > x.len() && x.is_prefix_of(x_use) {
        return Err(FuncError::XBeyondPrefix { need: x_use.len(), have: x.len() });
    }
    Ok(x_use.is_prefix_of(x))
}

impl Functional {
    /// `Φ(τ ⊕ X)` after `s` steps, cut to length `|τ|`.
    ///
    /// Table rules that match `τ` and `X` are taken in order of input length
    /// (then use length, then table position); the output is the
    /// concatenation of the longest run of them that has already fired by
    /// stage `s`. This makes the result monotone in both `τ` and `s`.
    pub fn eval(&self, tau: &FinString, x: &FinString, s: u64) -> Result<FinString, FuncError> {
        let mut out = match self {
            Functional::Empty => Vec::new(),
            Functional::Identity => tau.0.clone(),
            Functional::Constant { value } => value.0.clone(),
            Functional::Table { rules, .. } => {
                let mut hits = Vec::new();
                for (i, r) in rules.iter().enumerate() {
                    if r.input.is_prefix_of(tau) && check_use(&r.x_use, x)? {
                        hits.push((r.input.len(), r.x_use.len(), i));
                    }
                }
                hits.sort_unstable();
                let mut out = Vec::new();
                for (_, _, i) in hits {
                    if rules[i].stage > s {
                        break;
                    }
                    out.extend_from_slice(&rules[i].output);
                }
                out
            }
        };
        out.truncate(tau.len());
        Ok(FinString(out))
    }

    /// `Φ_s(X)`: the functional with the oracle as its only input.
    pub fn eval_oracle(&self, x: &FinString, s: u64) -> Result<FinString, FuncError> {
        Ok(match self {
            Functional::Empty => FinString::empty(),
            Functional::Identity => x.clone(),
            Functional::Constant { value } => value.clone(),
            Functional::Table { oracle_rules, .. } => {
                let mut hits = Vec::new();
                for (i, r) in oracle_rules.iter().enumerate() {
                    if check_use(&r.x_use, x)? {
                        hits.push((r.x_use.len(), i));
                    }
                }
                hits.sort_unstable();
                let mut out = Vec::new();
                for (_, i) in hits {
                    if oracle_rules[i].stage > s {
                        break;
                    }
                    out.extend_from_slice(&oracle_rules[i].output);
                }
                FinString(out)
            }
        })
    }

    /// First stage from which no output changes.
    pub fn stable_stage(&self) -> u64 {
        match self {
            Functional::Table { rules, oracle_rules } => rules
                .iter()
                .map(|r| r.stage)
                .chain(oracle_rules.iter().map(|r| r.stage))
                .max()
                .unwrap_or(0),
            _ => 0,
        }
    }

    /// Largest oracle position any rule might consult.
    pub fn max_use(&self) -> usize {
        match self {
            Functional::Table { rules, oracle_rules } => rules
                .iter()
                .map(|r| r.x_use.len())
                .chain(oracle_rules.iter().map(|r| r.x_use.len()))
                .max()
                .unwrap_or(0),
            _ => 0,
        }
    }
}

/// The outputs on `τ₀` and `τ₁` disagree somewhere both are defined.
pub fn e_split(
    f: &Functional,
    t0: &FinString,
    t1: &FinString,
    x: &FinString,
    s: u64,
) -> Result<bool, FuncError> {
    Ok(f.eval(t0, x, s)?.incompatible(&f.eval(t1, x, s)?))
}
