//! TOML experiment files.
//!
//! Every key is optional; an empty file gives the standard three-page
//! experiment. Action indices in the file are 1-based.
//!
//! ```toml
//! seed = 0
//! runs = 100
//! steps = 14000
//! batch_size = 1000
//! regret_mode = "realized"        # or "expected"
//! agents = ["mdp_with_bandits", "interaction_bandits", "independent_bandits", "q_learning"]
//! workers = 0                     # 0 uses every core
//!
//! [flow]
//! pages = 3
//! candidates = 3                  # or one count per page: [3, 4, 3]
//! context = "none"                # or "categorical:3"
//! base_rate = 0.1
//! alpha1 = 1.0
//! alpha_c = 1.0
//! alpha2 = 2.0
//!
//! [[flow.incompatible]]
//! page = 2
//! pairs = [[1, 3]]                # (previous, current)
//!
//! [bandit]
//! beta = 1.0
//! prior_mean = 0.0
//! prior_var = 1.0
//! context_main_later = true
//!
//! [q_learning]
//! learning_rate = 0.05
//! discount = 1.0
//! epsilon_start = 0.05
//! epsilon_end = 0.01
//!
//! [forms.mdp_with_bandits]        # optional; or `pages = [...]`, one per page
//! first = "R_i ~ 1 + a_i"
//! later = "R_i ~ 1 + a_i + a_prev + a_prev:a_i"
//!
//! [sweep]
//! axis = "pages"                  # or "alpha2"
//! values = [2, 3, 4, 5, 6]
//!
//! [output]
//! ground_truth = false
//! state = false
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use flowbandit_core::agents::{AgentKind, BanditAgent, BanditSettings, QLearningConfig};
use flowbandit_core::features::{ContextSchema, FlowShape, Response, Terms};
use flowbandit_core::harness::{ExperimentConfig, RegretMode};
use flowbandit_core::sim::Alphas;
use serde::Deserialize;

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputOptions {
    /// Write `ground_truth/run_<j>.csv` and `ground_truth/oracle.csv`.
    pub ground_truth: bool,
    /// Write the final agent state of every run as JSON.
    pub state: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Pages,
    Alpha2,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Pages => "pages",
            SweepAxis::Alpha2 => "alpha2",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One point of a sweep with its fully built experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub experiment: ExperimentConfig,
}

impl SweepPoint {
    /// The value as written in file names and the plot table.
    pub fn label(&self) -> String {
        format!("{}", self.value)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
}

/// A validated experiment file.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub experiment: ExperimentConfig,
    pub sweep: Option<Sweep>,
    pub output: OutputOptions,
    /// Worker threads; 0 lets the pool pick.
    pub workers: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config::from_raw(RawConfig::default()).expect("defaults are valid")
    }
}

impl Config {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_owned(), source })?;
        Self::parse(&text, overrides)
    }

    /// Parse TOML text, apply `key=value` overrides, and validate.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let raw: RawConfig = if overrides.is_empty() {
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?
        } else {
            // Parse once as a typed config so file errors keep their line numbers.
            toml::from_str::<RawConfig>(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
            let mut table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
            for o in overrides {
                apply_override(&mut table, o)?;
            }
            table.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(format!("after overrides: {e}")))?
        };
        Self::from_raw(raw)
    }

    fn from_raw(raw: RawConfig) -> Result<Self, ConfigError> {
        let experiment = raw.build(None)?;
        let sweep = match &raw.sweep {
            None => None,
            Some(s) => Some(raw.sweep_points(s)?),
        };
        Ok(Config { experiment, sweep, output: raw.output, workers: raw.workers })
    }
}

/// `a.b.c=value`; values are TOML literals, falling back to a bare string.
fn apply_override(table: &mut toml::Table, item: &str) -> Result<(), ConfigError> {
    let (key, value) = item.split_once('=').ok_or_else(|| ConfigError::Override(item.into()))?;
    let key = key.trim();
    let value = value.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(ConfigError::Override(item.into()));
    }
    let value = match toml::from_str::<toml::Table>(&format!("v = {value}")) {
        Ok(mut t) => t.remove("v").expect("just inserted"),
        Err(_) => toml::Value::String(value.into()),
    };
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("non-empty key");
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| ConfigError::invalid(key, format!("`{p}` is not a table")))?;
    }
    cur.insert(last.into(), value);
    Ok(())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawConfig {
    seed: u64,
    runs: usize,
    steps: usize,
    batch_size: usize,
    regret_mode: RegretMode,
    agents: Vec<AgentKind>,
    workers: usize,
    flow: RawFlow,
    bandit: RawBandit,
    q_learning: RawQ,
    forms: BTreeMap<String, RawForm>,
    sweep: Option<RawSweep>,
    output: OutputOptions,
}

impl Default for RawConfig {
    fn default() -> Self {
        let d = ExperimentConfig::default();
        RawConfig {
            seed: d.seed,
            runs: d.runs,
            steps: d.steps,
            batch_size: d.batch_size,
            regret_mode: d.regret_mode,
            agents: d.agents,
            workers: 0,
            flow: RawFlow::default(),
            bandit: RawBandit::default(),
            q_learning: RawQ::default(),
            forms: BTreeMap::new(),
            sweep: None,
            output: OutputOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Candidates {
    Uniform(usize),
    PerPage(Vec<usize>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawFlow {
    pages: Option<usize>,
    candidates: Candidates,
    context: String,
    base_rate: f64,
    alpha1: f64,
    alpha_c: f64,
    alpha2: f64,
    incompatible: Vec<RawIncompatible>,
}

impl Default for RawFlow {
    fn default() -> Self {
        let d = ExperimentConfig::default();
        RawFlow {
            pages: None,
            candidates: Candidates::Uniform(3),
            context: "none".into(),
            base_rate: d.base_rate,
            alpha1: d.alphas.alpha1,
            alpha_c: d.alphas.alpha_c,
            alpha2: d.alphas.alpha2,
            incompatible: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIncompatible {
    page: usize,
    pairs: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawBandit {
    beta: f64,
    prior_mean: f64,
    prior_var: f64,
    context_main_later: bool,
}

impl Default for RawBandit {
    fn default() -> Self {
        let d = BanditSettings::default();
        RawBandit {
            beta: d.beta,
            prior_mean: d.prior_mean,
            prior_var: d.prior_var,
            context_main_later: d.context_main_later,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawQ {
    learning_rate: f64,
    discount: f64,
    epsilon_start: f64,
    epsilon_end: f64,
}

impl Default for RawQ {
    fn default() -> Self {
        let d = QLearningConfig::default();
        RawQ {
            learning_rate: d.learning_rate,
            discount: d.discount,
            epsilon_start: d.epsilon_start,
            epsilon_end: d.epsilon_end,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawForm {
    pages: Option<Vec<String>>,
    first: Option<String>,
    later: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    axis: String,
    values: Vec<f64>,
}

fn parse_context(s: &str) -> Result<ContextSchema, ConfigError> {
    let bad = || ConfigError::invalid("flow.context", format!("expected `none` or `categorical:k`, got `{s}`"));
    let s = s.trim();
    if s == "none" {
        return Ok(ContextSchema::None);
    }
    let (kind, k) = s.split_once(':').ok_or_else(bad)?;
    let k: usize = k.trim().parse().map_err(|_| bad())?;
    match kind.trim() {
        "categorical" => Ok(ContextSchema::Categorical(k)),
        "numeric" => Ok(ContextSchema::Numeric(k)),
        _ => Err(bad()),
    }
}

/// File key for a field name reported by the core validator.
fn key_for(name: &str) -> String {
    match name {
        "alpha1" | "alpha_c" | "alpha2" | "alphas" | "base_rate" | "candidates" | "context" | "incompatible"
        | "pages" => format!("flow.{name}"),
        "beta" | "prior_mean" | "prior_var" => format!("bandit.{name}"),
        "learning_rate" | "discount" | "epsilon_start" | "epsilon_end" => format!("q_learning.{name}"),
        _ => name.into(),
    }
}

fn from_core(e: flowbandit_core::Error) -> ConfigError {
    use flowbandit_core::Error as E;
    match e {
        E::InvalidArgument { name, reason } => ConfigError::invalid(key_for(name), reason),
        E::InvalidForm(reason) => ConfigError::invalid("forms", reason),
        E::EnumerationLimit { .. } => ConfigError::invalid("flow.candidates", e.to_string()),
        other => ConfigError::invalid("flow", other.to_string()),
    }
}

impl RawConfig {
    fn shape(&self, pages_override: Option<usize>) -> Result<FlowShape, ConfigError> {
        let candidates = match (&self.flow.candidates, pages_override.or(self.flow.pages)) {
            (Candidates::Uniform(n), pages) => vec![*n; pages.unwrap_or(3)],
            (Candidates::PerPage(list), Some(p)) if p != list.len() => {
                return Err(ConfigError::invalid(
                    "flow.pages",
                    format!("{p} pages but {} candidate counts", list.len()),
                ))
            }
            (Candidates::PerPage(list), _) => list.clone(),
        };
        let mut shape = FlowShape::new(candidates).map_err(from_core)?;
        for inc in &self.flow.incompatible {
            let key = "flow.incompatible";
            if inc.page < 2 || inc.page > shape.pages() {
                return Err(ConfigError::invalid(key, format!("page {} must lie in 2..={}", inc.page, shape.pages())));
            }
            let page = inc.page - 1;
            let mut pairs = Vec::with_capacity(inc.pairs.len());
            for &[p, c] in &inc.pairs {
                if p == 0 || c == 0 {
                    return Err(ConfigError::invalid(key, "action indices are 1-based"));
                }
                pairs.push((p - 1, c - 1));
            }
            let merged: Vec<(usize, usize)> = shape.incompatible(page).iter().copied().chain(pairs).collect();
            shape = shape.with_incompatible(page, merged).map_err(|e| match e {
                flowbandit_core::Error::InvalidArgument { reason, .. } => ConfigError::invalid(key, reason),
                other => ConfigError::invalid(key, other.to_string()),
            })?;
        }
        Ok(shape)
    }

    fn forms(
        &self,
        shape: &FlowShape,
        context: ContextSchema,
        bandit: BanditSettings,
    ) -> Result<Vec<(AgentKind, Vec<Terms>)>, ConfigError> {
        let mut out = Vec::new();
        for (name, form) in &self.forms {
            let base = format!("forms.{name}");
            let kind: AgentKind =
                name.parse().map_err(|e: flowbandit_core::Error| ConfigError::invalid(&base, e.to_string()))?;
            if kind == AgentKind::QLearning {
                return Err(ConfigError::invalid(base, "q_learning has no model forms"));
            }
            let want = if kind.uses_long_term_reward() { Response::LongTerm } else { Response::ShortTerm };
            let parse = |key: String, formula: &str| -> Result<Terms, ConfigError> {
                let (response, terms) = Terms::parse(formula).map_err(|e| ConfigError::invalid(&key, e.to_string()))?;
                if response != want {
                    let lhs = if want == Response::LongTerm { "G" } else { "R" };
                    return Err(ConfigError::invalid(key, format!("{kind} models `{lhs}` on the left-hand side")));
                }
                Ok(terms)
            };
            let terms = match &form.pages {
                Some(list) => {
                    if form.first.is_some() || form.later.is_some() {
                        return Err(ConfigError::invalid(
                            format!("{base}.pages"),
                            "give either `pages` or `first`/`later`",
                        ));
                    }
                    if list.len() != shape.pages() {
                        return Err(ConfigError::invalid(
                            format!("{base}.pages"),
                            format!("need {} formulas, got {}", shape.pages(), list.len()),
                        ));
                    }
                    list.iter().map(|f| parse(format!("{base}.pages"), f)).collect::<Result<Vec<_>, _>>()?
                }
                None => {
                    let first = match &form.first {
                        Some(f) => parse(format!("{base}.first"), f)?,
                        None => BanditAgent::standard_terms(kind, 0, context, bandit),
                    };
                    let later = match &form.later {
                        Some(f) => Some(parse(format!("{base}.later"), f)?),
                        None => None,
                    };
                    (0..shape.pages())
                        .map(|p| match (p, later) {
                            (0, _) => first,
                            (_, Some(t)) => t,
                            (_, None) => BanditAgent::standard_terms(kind, p, context, bandit),
                        })
                        .collect()
                }
            };
            out.push((kind, terms));
        }
        Ok(out)
    }

    fn build(&self, point: Option<(SweepAxis, f64)>) -> Result<ExperimentConfig, ConfigError> {
        let pages = match point {
            Some((SweepAxis::Pages, v)) => Some(v as usize),
            _ => None,
        };
        let alpha2 = match point {
            Some((SweepAxis::Alpha2, v)) => v,
            _ => self.flow.alpha2,
        };
        let shape = self.shape(pages)?;
        let context = parse_context(&self.flow.context)?;
        let bandit = BanditSettings {
            prior_mean: self.bandit.prior_mean,
            prior_var: self.bandit.prior_var,
            beta: self.bandit.beta,
            context_main_later: self.bandit.context_main_later,
        };
        let q = QLearningConfig {
            learning_rate: self.q_learning.learning_rate,
            discount: self.q_learning.discount,
            epsilon_start: self.q_learning.epsilon_start,
            epsilon_end: self.q_learning.epsilon_end,
        };
        let forms = self.forms(&shape, context, bandit)?;
        let cfg = ExperimentConfig {
            shape,
            context,
            alphas: Alphas::new(self.flow.alpha1, self.flow.alpha_c, alpha2),
            base_rate: self.flow.base_rate,
            steps: self.steps,
            batch_size: self.batch_size,
            runs: self.runs,
            agents: self.agents.clone(),
            bandit,
            q_learning: q,
            seed: self.seed,
            regret_mode: self.regret_mode,
            forms,
        };
        cfg.validate().map_err(from_core)?;
        Ok(cfg)
    }

    fn sweep_points(&self, s: &RawSweep) -> Result<Sweep, ConfigError> {
        let axis = match s.axis.as_str() {
            "pages" => SweepAxis::Pages,
            "alpha2" => SweepAxis::Alpha2,
            other => {
                return Err(ConfigError::invalid("sweep.axis", format!("expected `pages` or `alpha2`, got `{other}`")))
            }
        };
        if s.values.is_empty() {
            return Err(ConfigError::invalid("sweep.values", "list at least one value"));
        }
        if axis == SweepAxis::Pages {
            if matches!(self.flow.candidates, Candidates::PerPage(_)) {
                return Err(ConfigError::invalid(
                    "flow.candidates",
                    "a pages sweep needs one candidate count for all pages",
                ));
            }
            if !self.flow.incompatible.is_empty() {
                return Err(ConfigError::invalid("flow.incompatible", "not supported with a pages sweep"));
            }
            if let Some(v) = s.values.iter().find(|v| !(v.fract() == 0.0 && **v >= 1.0)) {
                return Err(ConfigError::invalid(
                    "sweep.values",
                    format!("page counts must be positive integers, got {v}"),
                ));
            }
        }
        let points = s
            .values
            .iter()
            .map(|&value| Ok(SweepPoint { value, experiment: self.build(Some((axis, value)))? }))
            .collect::<Result<Vec<_>, ConfigError>>()?;
        Ok(Sweep { axis, points })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn err(text: &str) -> ConfigError {
        Config::parse(text, &[]).unwrap_err()
    }

    fn key_of(e: ConfigError) -> String {
        match e {
            ConfigError::Invalid { key, .. } => key,
            other => panic!("expected a validation error, got {other}"),
        }
    }

    #[test]
    fn empty_file_gives_standard_experiment() {
        let c = Config::parse("", &[]).unwrap();
        assert_eq!(c.experiment, ExperimentConfig::default());
        assert!(c.sweep.is_none());
        assert_eq!(c, Config::default());
    }

    #[test]
    fn flow_section() {
        let c = Config::parse(
            "[flow]\ncandidates = [2, 3]\ncontext = \"categorical:3\"\nalpha2 = 0.0\n\
             [[flow.incompatible]]\npage = 2\npairs = [[1, 3]]\n",
            &[],
        )
        .unwrap();
        let e = &c.experiment;
        assert_eq!(e.shape.all_candidates(), &[2, 3]);
        assert_eq!(e.context, ContextSchema::Categorical(3));
        assert_eq!(e.alphas.alpha2, 0.0);
        assert!(!e.shape.is_feasible(1, Some(0), 2));
    }

    #[test]
    fn validation_errors_name_the_key() {
        assert_eq!(key_of(err("batch_size = 300\nsteps = 1000")), "steps");
        assert_eq!(key_of(err("[flow]\nbase_rate = 1.5")), "flow.base_rate");
        assert_eq!(key_of(err("[flow]\nalpha2 = -1.0")), "flow.alpha2");
        assert_eq!(key_of(err("[flow]\ncontext = \"bogus\"")), "flow.context");
        assert_eq!(key_of(err("[bandit]\nprior_var = 0.0")), "bandit.prior_var");
        assert_eq!(key_of(err("[q_learning]\nlearning_rate = 2.0")), "q_learning.learning_rate");
        assert_eq!(
            key_of(err("[[flow.incompatible]]\npage = 2\npairs = [[1, 1], [1, 2], [1, 3]]")),
            "flow.incompatible"
        );
        assert_eq!(key_of(err("[sweep]\naxis = \"pages\"\nvalues = []")), "sweep.values");
        assert_eq!(key_of(err("[sweep]\naxis = \"alpha1\"\nvalues = [1.0]")), "sweep.axis");
        assert_eq!(key_of(err("[flow]\ncandidates = 10\npages = 7")), "flow.candidates");
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let e = err("seed = 1\nruns = \"many\"\n");
        assert!(matches!(e, ConfigError::Parse(_)));
        assert!(e.to_string().contains("line 2"), "{e}");
        let e = err("seed = 1\n\n[flow]\nalpha3 = 1.0\n");
        assert!(e.to_string().contains("line 4") && e.to_string().contains("alpha3"), "{e}");
    }

    #[test]
    fn overrides_apply_after_parsing() {
        let c = Config::parse("[flow]\nalpha2 = 2.0\n", &["flow.alpha2=0.5".into(), "runs=7".into()]).unwrap();
        assert_eq!(c.experiment.alphas.alpha2, 0.5);
        assert_eq!(c.experiment.runs, 7);
        let c = Config::parse("", &["flow.context=categorical:2".into(), "regret_mode=expected".into()]).unwrap();
        assert_eq!(c.experiment.context, ContextSchema::Categorical(2));
        assert_eq!(c.experiment.regret_mode, RegretMode::Expected);
        let e = Config::parse("", &["steps=1001".into()]).unwrap_err();
        assert_eq!(key_of(e), "steps");
        assert!(matches!(Config::parse("", &["nokey".into()]).unwrap_err(), ConfigError::Override(_)));
        assert!(matches!(Config::parse("", &["bogus=1".into()]).unwrap_err(), ConfigError::Parse(_)));
    }

    #[test]
    fn form_overrides() {
        let c = Config::parse(
            "[forms.mdp_with_bandits]\nfirst = \"R ~ a_i\"\nlater = \"R ~ a_i + a_prev\"\n\
             [forms.interaction_bandits]\npages = [\"G ~ a_i\", \"G ~ a_i\", \"G ~ a_i + a_prev:a_i\"]\n",
            &[],
        )
        .unwrap();
        let forms = &c.experiment.forms;
        assert_eq!(forms.len(), 2);
        let mdp = &forms.iter().find(|(k, _)| *k == AgentKind::MdpWithBandits).unwrap().1;
        assert!(mdp[1].previous_action && !mdp[1].previous_by_current);
        assert_eq!(key_of(err("[forms.mdp_with_bandits]\nfirst = \"G ~ a_i\"")), "forms.mdp_with_bandits.first");
        assert_eq!(key_of(err("[forms.mdp_with_bandits]\nfirst = \"R ~ a_prev\"")), "forms");
        assert_eq!(key_of(err("[forms.q_learning]\nfirst = \"R ~ a_i\"")), "forms.q_learning");
        assert_eq!(
            key_of(err("[forms.independent_bandits]\npages = [\"R ~ a_i\"]")),
            "forms.independent_bandits.pages"
        );
    }

    #[test]
    fn sweeps_build_every_point() {
        let c = Config::parse("[sweep]\naxis = \"pages\"\nvalues = [2, 3, 4, 5, 6]\n", &[]).unwrap();
        let s = c.sweep.unwrap();
        assert_eq!(s.axis, SweepAxis::Pages);
        let pages: Vec<usize> = s.points.iter().map(|p| p.experiment.shape.pages()).collect();
        assert_eq!(pages, vec![2, 3, 4, 5, 6]);
        let combos: Vec<u128> = s.points.iter().map(|p| p.experiment.shape.combinations()).collect();
        assert_eq!(combos, vec![9, 27, 81, 243, 729]);
        assert_eq!(s.points[0].label(), "2");

        let c = Config::parse("[sweep]\naxis = \"alpha2\"\nvalues = [0.0, 0.5, 1.0, 2.0]\n", &[]).unwrap();
        let s = c.sweep.unwrap();
        assert_eq!(s.points[1].experiment.alphas.alpha2, 0.5);
        assert_eq!(s.points[1].label(), "0.5");
        assert_eq!(key_of(err("[sweep]\naxis = \"pages\"\nvalues = [2.5]")), "sweep.values");
    }
}
