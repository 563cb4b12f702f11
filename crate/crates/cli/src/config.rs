//! Run configuration: a flat TOML file, overridden field by field by flags.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use gvcplm::sim::scenario::ScenarioSpec;
use gvcplm::sim::study::Method;
use gvcplm::{Criterion, Family, Kernel, PenaltyKind, RoleMap};
use serde::{Deserialize, Serialize};

pub const COMMANDS: [&str; 5] = ["fit", "select", "test", "bandwidth", "simulate"];
pub const STUDIES: [&str; 5] = ["selection", "timing", "power", "calibration", "rase"];

/// Every setting of a run. Parsed from TOML with all fields optional;
/// `validate` fills defaults and returns the resolved form, which serializes
/// back into a file that reproduces the run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<String>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,

    // data commands
    pub data: Option<PathBuf>,
    pub roles: Option<PathBuf>,
    /// Prepend a constant column to X.
    pub intercept: Option<bool>,
    pub family: Option<String>,
    pub kernel: Option<String>,
    pub h: Option<f64>,
    /// Treat `h` as MSE-optimal and shrink it to the `n^(-1/3)` order.
    pub undersmooth: Option<bool>,
    pub exact_alpha: Option<bool>,

    // penalty
    pub penalty: Option<String>,
    pub a: Option<f64>,
    pub q: Option<f64>,
    /// `gcv` or `fixed`.
    pub lambda_policy: Option<String>,
    pub lambda: Option<f64>,
    pub lambda_grid: Option<Vec<f64>>,
    pub criterion: Option<String>,
    pub max_d: Option<usize>,

    // test
    /// One-based X columns whose coefficient functions are set to zero under the null.
    pub null_x: Option<Vec<usize>>,
    pub bootstrap: Option<usize>,

    // bandwidth
    pub h_grid: Option<Vec<f64>>,
    pub folds: Option<usize>,

    // simulate
    pub study: Option<String>,
    pub scenario: Option<String>,
    pub n: Option<usize>,
    pub methods: Option<Vec<String>>,
    pub reps: Option<usize>,
    pub d_values: Option<Vec<usize>>,
    pub deltas: Option<Vec<f64>>,
    pub levels: Option<Vec<f64>>,
    /// One-based X column tested in the GLRT studies.
    pub tested: Option<usize>,
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f; } )*
    };
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, Vec<String>> {
        toml::from_str(text).map_err(|e| vec![format!("config: {}", e.message())])
    }

    pub fn read(path: &Path) -> Result<Self, Vec<String>> {
        let text = std::fs::read_to_string(path).map_err(|e| vec![format!("config {}: {e}", path.display())])?;
        Self::from_toml(&text)
    }

    /// Fields set in `top` replace those in `self`.
    pub fn overlay(mut self, top: RunConfig) -> Self {
        overlay!(
            self, top, command, seed, output, data, roles, intercept, family, kernel, h, undersmooth, exact_alpha,
            penalty, a, q, lambda_policy, lambda, lambda_grid, criterion, max_d, null_x, bootstrap, h_grid, folds,
            study, scenario, n, methods, reps, d_values, deltas, levels, tested
        );
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn command(&self) -> &str {
        self.command.as_deref().unwrap_or("")
    }

    pub fn family_parsed(&self) -> Family {
        self.family.as_deref().unwrap_or("").parse().expect("validated")
    }

    pub fn kernel_parsed(&self) -> Kernel {
        self.kernel.as_deref().unwrap_or("epanechnikov").parse().expect("validated")
    }

    pub fn penalty_kind(&self) -> PenaltyKind {
        penalty_kind(self.penalty.as_deref().unwrap_or("none"), self.a, self.q).expect("validated")
    }

    pub fn criterion_parsed(&self) -> Criterion {
        self.criterion.as_deref().unwrap_or("bic").parse().expect("validated")
    }

    pub fn methods_parsed(&self) -> Vec<Method> {
        self.methods
            .iter()
            .flatten()
            .map(|m| m.parse().expect("validated"))
            .collect()
    }

    /// The scenario with the `n` and `h` overrides applied and the run seed.
    pub fn scenario_spec(&self) -> ScenarioSpec {
        let mut spec = ScenarioSpec::preset(self.scenario.as_deref().unwrap_or("")).expect("validated");
        if let Some(n) = self.n {
            spec.n = n;
        }
        if let Some(h) = self.h {
            spec.h = h;
        }
        if let Some(f) = &self.family {
            spec.family = f.parse().expect("validated");
        }
        spec.seed = self.seed.unwrap_or(0);
        spec
    }
}

fn penalty_kind(name: &str, a: Option<f64>, q: Option<f64>) -> Result<PenaltyKind, String> {
    let kind = match PenaltyKind::from_str(name).map_err(|e| e.to_string())? {
        PenaltyKind::Scad { a: default } => PenaltyKind::Scad { a: a.unwrap_or(default) },
        PenaltyKind::Lq { q: default } => PenaltyKind::Lq { q: q.unwrap_or(default) },
        other => other,
    };
    kind.validate().map_err(|e| e.to_string())?;
    Ok(kind)
}

fn require<T>(errs: &mut Vec<String>, v: &Option<T>, name: &str, why: &str) {
    if v.is_none() {
        errs.push(format!("`{name}` is required {why}"));
    }
}

fn parse_check<T: FromStr>(errs: &mut Vec<String>, v: &Option<String>, name: &str)
where
    T::Err: std::fmt::Display,
{
    if let Some(s) = v {
        if let Err(e) = s.parse::<T>() {
            errs.push(format!("`{name}`: {e}"));
        }
    }
}

fn positive(errs: &mut Vec<String>, v: Option<f64>, name: &str) {
    if let Some(x) = v {
        if !(x > 0.0 && x.is_finite()) {
            errs.push(format!("`{name}` must be positive, got {x}"));
        }
    }
}

fn positive_list(errs: &mut Vec<String>, v: &Option<Vec<f64>>, name: &str) {
    if let Some(xs) = v {
        if xs.is_empty() {
            errs.push(format!("`{name}` must not be empty"));
        }
        if let Some(x) = xs.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
            errs.push(format!("`{name}` entries must be positive, got {x}"));
        }
    }
}

/// Checks everything and collects every problem; on success returns the
/// config with defaults filled in.
pub fn validate(raw: &RunConfig) -> Result<RunConfig, Vec<String>> {
    let mut c = raw.clone();
    let mut errs = Vec::new();
    let command = match c.command.as_deref() {
        Some(cmd) if COMMANDS.contains(&cmd) => cmd.to_string(),
        Some(other) => {
            errs.push(format!("`command` must be one of {}, got `{other}`", COMMANDS.join(", ")));
            String::new()
        }
        None => {
            errs.push(format!("`command` is required (one of {})", COMMANDS.join(", ")));
            String::new()
        }
    };
    c.output.get_or_insert_with(|| PathBuf::from("gvcplm-out"));
    let stochastic = matches!(command.as_str(), "test" | "bandwidth" | "simulate");
    if stochastic {
        require(&mut errs, &c.seed, "seed", &format!("for `{command}`"));
    }
    let data_command = command != "simulate";

    if data_command {
        let why = "for data commands";
        require(&mut errs, &c.data, "data", why);
        require(&mut errs, &c.roles, "roles", why);
        require(&mut errs, &c.family, "family", why);
        if command != "bandwidth" {
            require(&mut errs, &c.h, "h", why);
        }
        for (v, name) in [(&c.data, "data"), (&c.roles, "roles")] {
            if let Some(p) = v {
                if !p.is_file() {
                    errs.push(format!("`{name}`: file {} does not exist", p.display()));
                }
            }
        }
        if let Some(p) = c.roles.as_ref().filter(|p| p.is_file()) {
            match std::fs::read_to_string(p) {
                Ok(text) => {
                    if let Err(problems) = RoleMap::parse(&text) {
                        errs.extend(problems);
                    }
                }
                Err(e) => errs.push(format!("`roles`: {e}")),
            }
        }
        c.intercept.get_or_insert(true);
        c.kernel.get_or_insert_with(|| "epanechnikov".into());
        c.undersmooth.get_or_insert(false);
        c.exact_alpha.get_or_insert(false);
    }
    parse_check::<Family>(&mut errs, &c.family, "family");
    parse_check::<Kernel>(&mut errs, &c.kernel, "kernel");
    positive(&mut errs, c.h, "h");

    match command.as_str() {
        "fit" | "select" => {
            let default_penalty = if command == "fit" { "none" } else { "scad" };
            let name = c.penalty.get_or_insert_with(|| default_penalty.into()).clone();
            match penalty_kind(&name, c.a, c.q) {
                Ok(PenaltyKind::Scad { a }) => c.a = Some(a),
                Ok(PenaltyKind::Lq { q }) => c.q = Some(q),
                Ok(PenaltyKind::L0) if command == "fit" => {
                    errs.push("`penalty = \"l0\"` is fitted by exhaustive search; use the `select` command".into())
                }
                Ok(PenaltyKind::L0) => {
                    c.criterion.get_or_insert_with(|| "bic".into());
                    parse_check::<Criterion>(&mut errs, &c.criterion, "criterion");
                    c.max_d.get_or_insert(gvcplm::subset::DEFAULT_MAX_D);
                }
                Ok(PenaltyKind::None) if command == "select" => {
                    errs.push("`select` needs a penalty (scad, l1, lq or l0)".into())
                }
                Ok(_) => {}
                Err(e) => errs.push(format!("`penalty`: {e}")),
            }
            let default_policy = if command == "fit" { "fixed" } else { "gcv" };
            let policy = c.lambda_policy.get_or_insert_with(|| default_policy.into()).clone();
            match policy.as_str() {
                "gcv" => positive_list(&mut errs, &c.lambda_grid, "lambda_grid"),
                "fixed" => {
                    let penalized = !matches!(c.penalty.as_deref(), Some("none") | Some("l0"));
                    if penalized {
                        require(&mut errs, &c.lambda, "lambda", "when `lambda_policy = \"fixed\"`");
                    }
                    if let Some(l) = c.lambda {
                        if !(l >= 0.0 && l.is_finite()) {
                            errs.push(format!("`lambda` must be >= 0, got {l}"));
                        }
                    }
                }
                other => errs.push(format!("`lambda_policy` must be `gcv` or `fixed`, got `{other}`")),
            }
        }
        "test" => {
            require(&mut errs, &c.null_x, "null_x", "for `test`");
            if let Some(v) = &c.null_x {
                if v.is_empty() || v.contains(&0) {
                    errs.push("`null_x` lists one-based X columns and must not be empty".into());
                }
            }
            let b = *c.bootstrap.get_or_insert(1000);
            if b == 0 {
                errs.push("`bootstrap` must be at least 1".into());
            }
        }
        "bandwidth" => {
            require(&mut errs, &c.h_grid, "h_grid", "for `bandwidth`");
            positive_list(&mut errs, &c.h_grid, "h_grid");
            if *c.folds.get_or_insert(5) < 2 {
                errs.push("`folds` must be at least 2".into());
            }
        }
        "simulate" => validate_simulate(&mut c, &mut errs),
        _ => {
            if c.command.is_none() {
                errs.push("data commands also need `data`, `roles`, `family` and `h`; `simulate` needs `scenario` and `seed`".into());
            }
        }
    }
    if errs.is_empty() {
        Ok(c)
    } else {
        Err(errs)
    }
}

fn validate_simulate(c: &mut RunConfig, errs: &mut Vec<String>) {
    require(errs, &c.scenario, "scenario", "for `simulate`");
    if let Some(name) = &c.scenario {
        if let Err(e) = ScenarioSpec::preset(name) {
            errs.push(format!("`scenario`: {e}"));
        }
    }
    let study = c.study.get_or_insert_with(|| "selection".into()).clone();
    if !STUDIES.contains(&study.as_str()) {
        errs.push(format!("`study` must be one of {}, got `{study}`", STUDIES.join(", ")));
    }
    if let Some(n) = c.n {
        if n < 10 {
            errs.push(format!("`n` must be at least 10, got {n}"));
        }
    }
    let reps = *c.reps.get_or_insert(100);
    if reps == 0 {
        errs.push("`reps` must be at least 1".into());
    }
    match study.as_str() {
        "selection" | "timing" => {
            let default: Vec<String> = match study.as_str() {
                "selection" => Method::ALL.iter().map(|m| m.label().to_ascii_lowercase()).collect(),
                _ => vec!["bic".into(), "scad".into()],
            };
            let methods = c.methods.get_or_insert(default);
            if methods.is_empty() {
                errs.push("`methods` must not be empty".into());
            }
            for m in methods.iter() {
                if let Err(e) = m.parse::<Method>() {
                    errs.push(format!("`methods`: {e}"));
                }
            }
            if study == "timing" {
                let d = c.d_values.get_or_insert_with(|| vec![8, 9, 10]);
                if d.is_empty() || d.iter().any(|&v| v == 0 || v > gvcplm::subset::DEFAULT_MAX_D) {
                    errs.push(format!("`d_values` must be non-empty with entries in 1..={}", gvcplm::subset::DEFAULT_MAX_D));
                }
            }
        }
        "power" | "calibration" => {
            let levels = c.levels.get_or_insert_with(|| vec![0.05]);
            if levels.is_empty() || levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
                errs.push("`levels` must be non-empty with entries in (0, 1)".into());
            }
            let default_b = if study == "power" { 1000 } else { 200 };
            if *c.bootstrap.get_or_insert(default_b) == 0 {
                errs.push("`bootstrap` must be at least 1".into());
            }
            let tested = *c.tested.get_or_insert(2);
            if let Ok(spec) = ScenarioSpec::preset(c.scenario.as_deref().unwrap_or("")) {
                if tested == 0 || tested > spec.p() {
                    errs.push(format!("`tested` must be in 1..={}, got {tested}", spec.p()));
                }
            }
            if study == "power" {
                let deltas = c.deltas.get_or_insert_with(|| vec![0.0, 0.4, 0.8, 1.2, 1.6, 2.0]);
                if deltas.is_empty() || deltas.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
                    errs.push("`deltas` must be non-empty with entries >= 0".into());
                }
            }
        }
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_names_the_required_fields() {
        let errs = validate(&RunConfig::default()).unwrap_err();
        assert!(errs[0].contains("`command` is required"));
        assert!(errs.iter().any(|e| e.contains("`data`") && e.contains("`scenario`")));
    }

    #[test]
    fn flags_win_over_file_values() {
        let file = RunConfig::from_toml("command = \"simulate\"\nseed = 3\nreps = 10\nscenario = \"example41\"").unwrap();
        let flags = RunConfig {
            reps: Some(4),
            ..Default::default()
        };
        let c = file.overlay(flags);
        assert_eq!((c.reps, c.seed), (Some(4), Some(3)));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("comand = \"fit\"").is_err());
    }

    #[test]
    fn resolved_simulate_config_round_trips() {
        let raw = RunConfig {
            command: Some("simulate".into()),
            scenario: Some("example41".into()),
            seed: Some(7),
            ..Default::default()
        };
        let resolved = validate(&raw).unwrap();
        let again = RunConfig::from_toml(&resolved.to_toml()).unwrap();
        assert_eq!(validate(&again).unwrap(), resolved);
        let spec = resolved.scenario_spec();
        assert_eq!((spec.n, spec.h, spec.seed), (200, 0.125, 7));
    }

    #[test]
    fn seed_is_mandatory_for_stochastic_commands() {
        let raw = RunConfig {
            command: Some("simulate".into()),
            scenario: Some("example41".into()),
            ..Default::default()
        };
        let errs = validate(&raw).unwrap_err();
        assert!(errs.iter().any(|e| e.contains("`seed`")));
    }
}
