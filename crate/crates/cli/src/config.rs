//! TOML schema for `simulate`.
//!
//! ```toml
//! seed = 7
//! replications = 100000
//! layout = "table3"          # summary | table2 | table3 | table4
//!
//! [[scenario]]
//! id = "p0.4-n60"
//! p = 0.4                    # or p_l / p_h
//! q = 0.8                    # or q_l / q_h
//! phi = 0.0
//! utilities = [1.0, 0.8, 0.2, 0.0]   # or delta / d margins
//! n1 = 60
//! n2 = 140
//!
//! [scenario.tte]             # optional survival block
//! rho_c = 0.7
//! ```

use std::collections::BTreeSet;

use doseopt_core::sim::{BinaryConfig, PluginProtocol, SimConfig, TteConfig, DEFAULT_REPLICATIONS};
use doseopt_core::UtilitySpec;
use toml::{Table, Value};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Summary,
    Table2,
    Table3,
    Table4,
}

#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub id: String,
    pub config: SimConfig,
}

#[derive(Debug, Clone)]
pub struct SimFile {
    pub seed: u64,
    pub replications: u64,
    pub layout: Layout,
    pub scenarios: Vec<ScenarioSpec>,
}

const TOP_KEYS: &[&str] = &["seed", "replications", "layout", "plugin", "scenario"];
const SCENARIO_KEYS: &[&str] = &[
    "id", "p", "p_l", "p_h", "q", "q_l", "q_h", "phi", "utilities", "delta", "d", "lambda_u", "n1", "n2", "p0",
    "alpha", "plugin", "tte",
];
const TTE_KEYS: &[&str] = &["rho_c", "lambda0", "t_entry", "t_admin", "tau", "n_control", "alpha"];

/// Collects every schema problem before failing.
struct Checker {
    errors: Vec<String>,
}

impl Checker {
    fn unknown(&mut self, path: &str, table: &Table, allowed: &[&str]) {
        for key in table.keys() {
            if !allowed.contains(&key.as_str()) {
                self.errors.push(format!("{path}{key}: unknown key"));
            }
        }
    }

    fn float(&mut self, path: &str, table: &Table, key: &str) -> Option<f64> {
        match table.get(key)? {
            Value::Float(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            _ => {
                self.errors.push(format!("{path}{key}: expected a number"));
                None
            }
        }
    }

    fn uint(&mut self, path: &str, table: &Table, key: &str) -> Option<u64> {
        match table.get(key)? {
            Value::Integer(i) if *i >= 0 => Some(*i as u64),
            _ => {
                self.errors.push(format!("{path}{key}: expected a non-negative integer"));
                None
            }
        }
    }

    fn string(&mut self, path: &str, table: &Table, key: &str) -> Option<String> {
        match table.get(key)? {
            Value::String(s) => Some(s.clone()),
            _ => {
                self.errors.push(format!("{path}{key}: expected a string"));
                None
            }
        }
    }

    fn required<T>(&mut self, path: &str, key: &str, v: Option<T>, table: &Table) -> Option<T> {
        if v.is_none() && !table.contains_key(key) {
            self.errors.push(format!("{path}{key}: required"));
        }
        v
    }

    fn plugin(&mut self, path: &str, table: &Table) -> Option<PluginProtocol> {
        let s = self.string(path, table, "plugin")?;
        match s.as_str() {
            "selected_arm" => Some(PluginProtocol::SelectedArm),
            "pooled_arms" => Some(PluginProtocol::PooledArms),
            _ => {
                self.errors.push(format!("{path}plugin: expected \"selected_arm\" or \"pooled_arms\""));
                None
            }
        }
    }

    /// A value given either once (`key`) or per dose (`key_l`, `key_h`).
    fn pair(&mut self, path: &str, t: &Table, key: &str) -> Option<(f64, f64)> {
        let (kl, kh) = (format!("{key}_l"), format!("{key}_h"));
        let both = self.float(path, t, key);
        let (l, h) = (self.float(path, t, &kl), self.float(path, t, &kh));
        match (both, l, h) {
            (Some(v), None, None) => Some((v, v)),
            (None, Some(l), Some(h)) => Some((l, h)),
            _ if t.contains_key(key) && (t.contains_key(&kl) || t.contains_key(&kh)) => {
                self.errors.push(format!("{path}{key}: give either {key} or {kl}/{kh}, not both"));
                None
            }
            _ if !t.contains_key(key) && !t.contains_key(&kl) && !t.contains_key(&kh) => {
                self.errors.push(format!("{path}{key}: required (or {kl} and {kh})"));
                None
            }
            _ if t.contains_key(&kl) != t.contains_key(&kh) => {
                self.errors.push(format!("{path}{key}: {kl} and {kh} must be given together"));
                None
            }
            _ => None,
        }
    }

    fn utilities(&mut self, path: &str, t: &Table) -> Option<UtilitySpec> {
        if let Some(v) = t.get("utilities") {
            if t.contains_key("delta") || t.contains_key("d") {
                self.errors.push(format!("{path}utilities: give either utilities or delta/d, not both"));
                return None;
            }
            let scores: Option<Vec<f64>> = match v {
                Value::Array(a) if a.len() == 4 => a
                    .iter()
                    .map(|x| match x {
                        Value::Float(f) => Some(*f),
                        Value::Integer(i) => Some(*i as f64),
                        _ => None,
                    })
                    .collect(),
                _ => None,
            };
            let Some(s) = scores else {
                self.errors.push(format!("{path}utilities: expected an array of four numbers"));
                return None;
            };
            return match UtilitySpec::new([s[0], s[1], s[2], s[3]]) {
                Ok(u) => Some(u),
                Err(e) => {
                    self.errors.push(format!("{path}utilities: {e}"));
                    None
                }
            };
        }
        let delta = self.float(path, t, "delta");
        let d = self.float(path, t, "d");
        match (delta, d) {
            (Some(delta), Some(d)) => match UtilitySpec::from_margins(delta, d) {
                Ok(u) => Some(u),
                Err(e) => {
                    self.errors.push(format!("{path}delta/d: {e}"));
                    None
                }
            },
            _ if !t.contains_key("delta") && !t.contains_key("d") => {
                self.errors.push(format!("{path}utilities: required (or delta and d)"));
                None
            }
            _ => {
                if t.contains_key("delta") != t.contains_key("d") {
                    self.errors.push(format!("{path}delta/d: must be given together"));
                }
                None
            }
        }
    }
}

fn tte_block(c: &mut Checker, path: &str, t: &Table, alpha: f64) -> Option<TteConfig> {
    c.unknown(path, t, TTE_KEYS);
    let mut cfg = TteConfig::weekly(0.0);
    cfg.alpha = alpha;
    let rho = c.float(path, t, "rho_c");
    let rho = c.required(path, "rho_c", rho, t);
    for (key, slot) in [
        ("lambda0", &mut cfg.lambda0),
        ("t_entry", &mut cfg.t_entry),
        ("t_admin", &mut cfg.t_admin),
        ("tau", &mut cfg.tau),
        ("alpha", &mut cfg.alpha),
    ] {
        if let Some(v) = c.float(path, t, key) {
            *slot = v;
        }
    }
    cfg.n_control = c.uint(path, t, "n_control");
    cfg.rho_c = rho?;
    Some(cfg)
}

fn scenario(c: &mut Checker, index: usize, t: &Table, defaults: (u64, u64, PluginProtocol)) -> Option<ScenarioSpec> {
    let path = format!("scenario[{index}].");
    let path = path.as_str();
    c.unknown(path, t, SCENARIO_KEYS);
    let id = c.string(path, t, "id");
    let id = c.required(path, "id", id, t);
    let p = c.pair(path, t, "p");
    let q = c.pair(path, t, "q");
    let u = c.utilities(path, t);
    let n1 = c.uint(path, t, "n1");
    let n1 = c.required(path, "n1", n1, t);
    let n2 = c.uint(path, t, "n2");
    let n2 = c.required(path, "n2", n2, t);
    let phi = c.float(path, t, "phi").unwrap_or(0.0);
    let lambda_u = c.float(path, t, "lambda_u").unwrap_or(0.0);
    let p0 = c.float(path, t, "p0");
    let alpha = c.float(path, t, "alpha").unwrap_or(0.025);
    let plugin = c.plugin(path, t).unwrap_or(defaults.2);
    let tte = match t.get("tte") {
        Some(Value::Table(tt)) => Some(tte_block(c, &format!("{path}tte."), tt, alpha)),
        Some(_) => {
            c.errors.push(format!("{path}tte: expected a table"));
            None
        }
        None => None,
    };
    let tte = match tte {
        Some(None) => return None,
        Some(Some(x)) => Some(x),
        None => None,
    };
    let (id, (p_l, p_h), (q_l, q_h), utilities, n1, n2) = (id?, p?, q?, u?, n1?, n2?);
    let config = SimConfig {
        p_l,
        p_h,
        q_l,
        q_h,
        phi,
        utilities,
        lambda_u,
        n1,
        n2,
        replications: defaults.0,
        seed: defaults.1,
        scenario_key: crate::manifest::scenario_key(&id),
        binary: BinaryConfig { p0: p0.unwrap_or(p_l), alpha },
        tte,
        plugin,
    };
    if let Err(e) = config.validate() {
        c.errors.push(format!("{path}: {e}"));
        return None;
    }
    Some(ScenarioSpec { id, config })
}

pub fn parse(text: &str) -> CliResult<SimFile> {
    let root: Table = text.parse().map_err(|e| CliError::usage(format!("config is not valid TOML: {e}")))?;
    let mut c = Checker { errors: Vec::new() };
    c.unknown("", &root, TOP_KEYS);
    let seed = c.uint("", &root, "seed").unwrap_or(1);
    let replications = c.uint("", &root, "replications").unwrap_or(DEFAULT_REPLICATIONS);
    let plugin = c.plugin("", &root).unwrap_or_default();
    let layout = match c.string("", &root, "layout").as_deref() {
        None | Some("summary") => Layout::Summary,
        Some("table2") => Layout::Table2,
        Some("table3") => Layout::Table3,
        Some("table4") => Layout::Table4,
        Some(other) => {
            c.errors.push(format!("layout: unknown layout {other:?} (summary, table2, table3, table4)"));
            Layout::Summary
        }
    };
    let mut scenarios = Vec::new();
    match root.get("scenario") {
        None => {}
        Some(Value::Array(items)) => {
            for (i, item) in items.iter().enumerate() {
                match item {
                    Value::Table(t) => {
                        if let Some(s) = scenario(&mut c, i, t, (replications, seed, plugin)) {
                            scenarios.push(s);
                        }
                    }
                    _ => c.errors.push(format!("scenario[{i}]: expected a table")),
                }
            }
        }
        Some(_) => c.errors.push("scenario: expected an array of tables ([[scenario]])".into()),
    }
    if layout == Layout::Table4 {
        for s in &scenarios {
            if s.config.tte.is_none() {
                c.errors.push(format!("scenario {}: layout table4 needs a [scenario.tte] block", s.id));
            }
        }
    }
    let mut seen = BTreeSet::new();
    for s in &scenarios {
        if !seen.insert(s.id.as_str()) {
            c.errors.push(format!("duplicate scenario id {:?}", s.id));
        }
    }
    if !c.errors.is_empty() {
        return Err(CliError::usage(format!("invalid config:\n  {}", c.errors.join("\n  "))));
    }
    Ok(SimFile { seed, replications, layout, scenarios })
}
