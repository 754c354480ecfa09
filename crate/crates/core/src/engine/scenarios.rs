//! Bundled engine scenarios.

use std::collections::BTreeMap;

use super::EngineConfig;
use crate::approx::{OracleApprox, Schedule};
use crate::functionals::{Functional, OracleRule};
use crate::s;

pub const NAMES: [&str; 5] =
    ["full-S-no-splits", "dead-node", "oscillating", "splitting-rich", "p-success"];

fn base() -> EngineConfig {
    EngineConfig { x: s![1, 0, 1, 1, 0, 0, 1, 0], horizon: 2000, ..EngineConfig::default() }
}

pub fn bundled(name: &str) -> Option<EngineConfig> {
    let mut cfg = base();
    match name {
        "full-S-no-splits" => {}
        "dead-node" => {
            cfg.oracle.dead.insert(s![1]);
        }
        "oscillating" => {
            cfg.oracle.schedules.insert(s![0], Schedule::Oscillating);
        }
        "splitting-rich" => {
            cfg.functionals = vec![Functional::Identity; 4];
        }
        "p-success" => {
            cfg.functionals = vec![
                Functional::Table {
                    rules: vec![],
                    oracle_rules: vec![
                        OracleRule { x_use: s![], stage: 0, output: vec![2] },
                        OracleRule { x_use: s![1], stage: 40, output: vec![0] },
                    ],
                },
                Functional::Identity,
                Functional::Constant { value: s![0, 0, 0] },
            ];
        }
        _ => return None,
    }
    Some(cfg)
}

/// Scenarios whose approximation converges everywhere.
pub fn is_stable(cfg: &EngineConfig) -> bool {
    !cfg.effective_oracle().schedules.values().any(|s| matches!(s, Schedule::Oscillating))
}

/// `ρ` that is stably 1 exactly on `members`, with 0 elsewhere.
pub fn table_oracle(members: &[crate::strings_codes::FinString]) -> OracleApprox {
    OracleApprox {
        default: 0,
        dead: Default::default(),
        schedules: members.iter().map(|m| (m.clone(), Schedule::constant(1))).collect::<BTreeMap<_, _>>(),
    }
}
