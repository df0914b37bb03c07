//! Experiment configuration files.
//!
//! One `key = value` pair per line; `#` starts a comment. Keys:
//!
//! | key | values | default |
//! |-----|--------|---------|
//! | `mode` | `forward`, `dual-quenched`, `dual-annealed`, `range`, `exact` | set by the CLI subcommand |
//! | `dim` | 1, 2, 3 | 1 |
//! | `L` | torus side (forward, exact, optional for dual-quenched) | none |
//! | `kernel` | `nn`, `power` | `nn` |
//! | `alpha`, `cutoff` | power-law index in (0,2) and truncation | none |
//! | `disorder` | `bernoulli`, `deterministic`, `atoms` (alias `table`) | none |
//! | `q`, `b` | Bernoulli mass at 0 and bias value | none |
//! | `atoms` | `b:p, b:p, ...` | none |
//! | `observable` | `site`, `product`, `file` | `site` |
//! | `sites` | `0;1` or `0,0;1,0` | origin |
//! | `observable_file` | path of a local-function table | none |
//! | `t_grid` | `log:a:b:n`, `lin:a:b:n` or `t1, t2, ...` | none |
//! | `replicas` | integer >= 2 | 1000 |
//! | `seed` | 64-bit integer | 0 |
//! | `nu` | range penalty | 1 |
//! | `width_cap` | exact range chain width cap | 400 |
//! | `window` | fit window `a:b` | last decade of `t_grid` |
//! | `lambda` | eigenvalue for non-nearest-neighbour kernels | none |

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::disorder::DisorderLaw;
use crate::kernel::Kernel;
use crate::localfn::LocalFunction;
use crate::site::{parse_sites, Site, Torus};

/// A config problem; `line` is 1-based, 0 when no single line is at fault.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{}", if *.line == 0 { format!("config: {}", .msg) } else { format!("config line {}: {}", .line, .msg) })]
pub struct ConfigError {
    pub line: usize,
    pub msg: String,
}

impl ConfigError {
    fn at(line: usize, msg: impl Into<String>) -> ConfigError {
        ConfigError { line, msg: msg.into() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Forward,
    DualQuenched,
    DualAnnealed,
    Range,
    Exact,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Forward => "forward",
            Mode::DualQuenched => "dual-quenched",
            Mode::DualAnnealed => "dual-annealed",
            Mode::Range => "range",
            Mode::Exact => "exact",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        [Mode::Forward, Mode::DualQuenched, Mode::DualAnnealed, Mode::Range, Mode::Exact]
            .into_iter()
            .find(|m| m.as_str() == s)
    }

    fn needs_torus(self) -> bool {
        matches!(self, Mode::Forward | Mode::Exact)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelSpec {
    NearestNeighbor,
    PowerLaw { alpha: f64, cutoff: u32 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Option<Mode>,
    pub dim: usize,
    pub side: Option<usize>,
    pub kernel: KernelSpec,
    pub disorder: Option<DisorderLaw>,
    pub observable: LocalFunction,
    pub t_grid: Vec<f64>,
    pub replicas: u64,
    pub seed: u64,
    pub nu: f64,
    pub width_cap: usize,
    pub window: Option<(f64, f64)>,
    pub lambda: Option<f64>,
    lines: HashMap<&'static str, usize>,
}

const KEYS: &[&str] = &[
    "mode",
    "dim",
    "L",
    "kernel",
    "alpha",
    "cutoff",
    "disorder",
    "q",
    "b",
    "atoms",
    "observable",
    "sites",
    "observable_file",
    "t_grid",
    "replicas",
    "seed",
    "nu",
    "width_cap",
    "window",
    "lambda",
];

impl ExperimentConfig {
    pub fn new(mode: Mode) -> ExperimentConfig {
        ExperimentConfig {
            mode: Some(mode),
            dim: 1,
            side: None,
            kernel: KernelSpec::NearestNeighbor,
            disorder: None,
            observable: LocalFunction::single_site(Site::ORIGIN),
            t_grid: Vec::new(),
            replicas: 1000,
            seed: 0,
            nu: 1.0,
            width_cap: 400,
            window: None,
            lambda: None,
            lines: HashMap::new(),
        }
    }

    pub fn read(path: &Path) -> Result<ExperimentConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::at(0, format!("cannot read {}: {e}", path.display())))?;
        ExperimentConfig::parse_in(&text, path.parent())
    }

    pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::parse_in(text, None)
    }

    /// Parses `text`; relative `observable_file` paths resolve against `base`.
    pub fn parse_in(text: &str, base: Option<&Path>) -> Result<ExperimentConfig, ConfigError> {
        let mut raw: HashMap<&'static str, (usize, String)> = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::at(n, format!("expected `key = value`, got `{line}`")))?;
            let k = k.trim();
            let key = KEYS
                .iter()
                .find(|&&known| known == k)
                .ok_or_else(|| ConfigError::at(n, format!("unknown key `{k}`")))?;
            let v = v.trim().trim_matches('"').to_string();
            if v.is_empty() {
                return Err(ConfigError::at(n, format!("empty value for `{k}`")));
            }
            if let Some((first, _)) = raw.insert(key, (n, v)) {
                return Err(ConfigError::at(n, format!("`{k}` already set on line {first}")));
            }
        }

        let mut cfg = ExperimentConfig::new(Mode::Forward);
        cfg.mode = None;
        cfg.lines = raw.iter().map(|(k, (n, _))| (*k, *n)).collect();
        let get = |k: &str| raw.get(k).map(|(n, v)| (*n, v.as_str()));

        if let Some((n, v)) = get("mode") {
            cfg.mode = Some(Mode::parse(v).ok_or_else(|| ConfigError::at(n, format!("unknown mode `{v}`")))?);
        }
        if let Some((n, v)) = get("dim") {
            cfg.dim = parse_num(n, "dim", v)?;
        }
        if let Some((n, v)) = get("L") {
            cfg.side = Some(parse_num(n, "L", v)?);
        }
        let alpha = get("alpha").map(|(n, v)| parse_num::<f64>(n, "alpha", v)).transpose()?;
        let cutoff = get("cutoff").map(|(n, v)| parse_num::<u32>(n, "cutoff", v)).transpose()?;
        cfg.kernel = match get("kernel") {
            None | Some((_, "nn")) => {
                if let Some((n, _)) = get("alpha").or(get("cutoff")) {
                    return Err(ConfigError::at(n, "`alpha`/`cutoff` need `kernel = power`"));
                }
                KernelSpec::NearestNeighbor
            }
            Some((n, "power")) => KernelSpec::PowerLaw {
                alpha: alpha.ok_or_else(|| ConfigError::at(n, "`kernel = power` needs `alpha`"))?,
                cutoff: cutoff.ok_or_else(|| ConfigError::at(n, "`kernel = power` needs `cutoff`"))?,
            },
            Some((n, v)) => return Err(ConfigError::at(n, format!("unknown kernel `{v}`"))),
        };

        cfg.disorder = parse_disorder(&get)?;

        if let Some((n, v)) = get("t_grid") {
            cfg.t_grid = parse_grid(v).map_err(|m| ConfigError::at(n, m))?;
        }
        if let Some((n, v)) = get("replicas") {
            cfg.replicas = parse_num(n, "replicas", v)?;
        }
        if let Some((n, v)) = get("seed") {
            cfg.seed = parse_num(n, "seed", v)?;
        }
        if let Some((n, v)) = get("nu") {
            cfg.nu = parse_num(n, "nu", v)?;
        }
        if let Some((n, v)) = get("width_cap") {
            cfg.width_cap = parse_num(n, "width_cap", v)?;
        }
        if let Some((n, v)) = get("window") {
            cfg.window = Some(parse_window(v).map_err(|m| ConfigError::at(n, m))?);
        }
        if let Some((n, v)) = get("lambda") {
            cfg.lambda = Some(parse_num(n, "lambda", v)?);
        }

        let sites = match get("sites") {
            Some((n, v)) => Some(parse_sites(v, cfg.dim).map_err(|e| ConfigError::at(n, e.to_string()))?),
            None => None,
        };
        cfg.observable = match get("observable") {
            None | Some((_, "site")) => {
                let s = sites.unwrap_or_else(|| vec![Site::ORIGIN]);
                if s.len() != 1 {
                    let n = cfg.lines.get("sites").copied().unwrap_or(0);
                    return Err(ConfigError::at(n, "`observable = site` takes exactly one site"));
                }
                LocalFunction::single_site(s[0])
            }
            Some((n, "product")) => {
                let s = sites.ok_or_else(|| ConfigError::at(n, "`observable = product` needs `sites`"))?;
                LocalFunction::product(s).map_err(|e| ConfigError::at(n, e.to_string()))?
            }
            Some((n, "file")) => {
                let (fl, file) = get("observable_file")
                    .ok_or_else(|| ConfigError::at(n, "`observable = file` needs `observable_file`"))?;
                let path = match base {
                    Some(b) if Path::new(file).is_relative() => b.join(file),
                    _ => Path::new(file).to_path_buf(),
                };
                LocalFunction::read(&path, cfg.dim).map_err(|e| ConfigError::at(fl, e.to_string()))?
            }
            Some((n, v)) => return Err(ConfigError::at(n, format!("unknown observable `{v}`"))),
        };

        cfg.validate()?;
        Ok(cfg)
    }

    fn line_of(&self, key: &str) -> usize {
        self.lines.get(key).copied().unwrap_or(0)
    }

    pub fn mode(&self) -> Result<Mode, ConfigError> {
        self.mode.ok_or_else(|| ConfigError::at(0, "no `mode` given"))
    }

    /// Cross-field checks; fields set programmatically are checked too.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(1..=3).contains(&self.dim) {
            return Err(ConfigError::at(self.line_of("dim"), format!("dim must be 1..=3, got {}", self.dim)));
        }
        self.build_kernel()?;
        if !self.t_grid.is_empty() {
            check_grid(&self.t_grid).map_err(|m| ConfigError::at(self.line_of("t_grid"), m))?;
        }
        if self.replicas < 2 {
            return Err(ConfigError::at(self.line_of("replicas"), "replicas must be >= 2"));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(ConfigError::at(self.line_of("nu"), "nu must be positive"));
        }
        if let Some((a, b)) = self.window {
            if !(a > 0.0 && b > a) {
                return Err(ConfigError::at(self.line_of("window"), "window needs 0 < a < b"));
            }
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(ConfigError::at(self.line_of("lambda"), "lambda must be positive"));
            }
        }
        if let Some(s) = self.side {
            Torus::new(self.dim, s).map_err(|e| ConfigError::at(self.line_of("L"), e.to_string()))?;
        }
        if self.observable.support().iter().any(|s| s.0[self.dim..].iter().any(|&c| c != 0)) {
            return Err(ConfigError::at(self.line_of("sites"), "observable sites exceed the dimension"));
        }
        let Some(mode) = self.mode else {
            return Ok(());
        };
        if self.t_grid.is_empty() {
            return Err(ConfigError::at(0, "no `t_grid` given"));
        }
        if mode != Mode::Range && self.disorder.is_none() {
            return Err(ConfigError::at(0, format!("mode `{}` needs `disorder`", mode.as_str())));
        }
        if mode.needs_torus() && self.side.is_none() {
            return Err(ConfigError::at(self.line_of("mode"), format!("mode `{}` needs `L`", mode.as_str())));
        }
        if matches!(mode, Mode::DualAnnealed | Mode::Range) && self.side.is_some() {
            return Err(ConfigError::at(
                self.line_of("L"),
                format!("mode `{}` runs on the infinite lattice; drop `L`", mode.as_str()),
            ));
        }
        if mode == Mode::Exact {
            let sites = self.torus().map(|t| t.len()).unwrap_or(0);
            if sites > crate::exact::MAX_EXACT_SITES {
                return Err(ConfigError::at(
                    self.line_of("L"),
                    format!("exact mode handles at most {} sites, torus has {sites}", crate::exact::MAX_EXACT_SITES),
                ));
            }
        }
        if let Some(t) = self.torus() {
            crate::forward::support_on_torus(&self.observable, t)
                .map_err(|e| ConfigError::at(self.line_of("sites"), e.to_string()))?;
        }
        Ok(())
    }

    pub fn build_kernel(&self) -> Result<Kernel, ConfigError> {
        let r = match self.kernel {
            KernelSpec::NearestNeighbor => Kernel::nearest_neighbor(self.dim),
            KernelSpec::PowerLaw { alpha, cutoff } => {
                if self.dim != 1 {
                    return Err(ConfigError::at(self.line_of("kernel"), "power-law kernels are 1-d"));
                }
                Kernel::power_law(alpha, cutoff)
            }
        };
        r.map_err(|e| ConfigError::at(self.line_of("kernel"), e.to_string()))
    }

    pub fn torus(&self) -> Option<Torus> {
        self.side.and_then(|s| Torus::new(self.dim, s).ok())
    }

    pub fn law(&self) -> Result<&DisorderLaw, ConfigError> {
        self.disorder.as_ref().ok_or_else(|| ConfigError::at(0, "no `disorder` given"))
    }

    /// Fit window: explicit, else the last decade of the grid.
    pub fn fit_window(&self) -> (f64, f64) {
        self.window.unwrap_or_else(|| {
            let hi = self.t_grid.last().copied().unwrap_or(1.0);
            (hi / 10.0, hi)
        })
    }

    pub fn alpha(&self) -> f64 {
        match self.kernel {
            KernelSpec::NearestNeighbor => 2.0,
            KernelSpec::PowerLaw { alpha, .. } => alpha,
        }
    }

    /// Normalized text of every setting, the input of the config hash.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let mode = self.mode.map_or("unset", Mode::as_str);
        let _ = writeln!(s, "mode = {mode}");
        let _ = writeln!(s, "dim = {}", self.dim);
        if let Some(l) = self.side {
            let _ = writeln!(s, "L = {l}");
        }
        match self.kernel {
            KernelSpec::NearestNeighbor => s.push_str("kernel = nn\n"),
            KernelSpec::PowerLaw { alpha, cutoff } => {
                let _ = writeln!(s, "kernel = power\nalpha = {alpha}\ncutoff = {cutoff}");
            }
        }
        if let Some(law) = &self.disorder {
            let atoms: Vec<String> = law.atoms().iter().map(|(b, p)| format!("{b}:{p}")).collect();
            let _ = writeln!(s, "disorder = atoms\natoms = {}", atoms.join(", "));
        }
        let sites: Vec<String> = self.observable.support().iter().map(|x| x.display(self.dim)).collect();
        let table: Vec<String> = self.observable.table().iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "observable.sites = {}", sites.join(";"));
        let _ = writeln!(s, "observable.table = {}", table.join(" "));
        let grid: Vec<String> = self.t_grid.iter().map(|t| t.to_string()).collect();
        let _ = writeln!(s, "t_grid = {}", grid.join(", "));
        let _ = writeln!(s, "replicas = {}", self.replicas);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "nu = {}", self.nu);
        let _ = writeln!(s, "width_cap = {}", self.width_cap);
        let (a, b) = self.fit_window();
        let _ = writeln!(s, "window = {a}:{b}");
        if let Some(l) = self.lambda {
            let _ = writeln!(s, "lambda = {l}");
        }
        s
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse()
        .map_err(|_| ConfigError::at(line, format!("cannot parse `{v}` for `{key}`")))
}

fn parse_disorder<'a>(
    get: &impl Fn(&str) -> Option<(usize, &'a str)>,
) -> Result<Option<DisorderLaw>, ConfigError> {
    let Some((n, kind)) = get("disorder") else {
        for k in ["q", "b", "atoms"] {
            if let Some((n, _)) = get(k) {
                return Err(ConfigError::at(n, format!("`{k}` needs `disorder`")));
            }
        }
        return Ok(None);
    };
    let num = |k: &str| -> Result<f64, ConfigError> {
        let (kn, v) = get(k).ok_or_else(|| ConfigError::at(n, format!("`disorder = {kind}` needs `{k}`")))?;
        parse_num(kn, k, v)
    };
    let law = match kind {
        "bernoulli" => DisorderLaw::bernoulli(num("q")?, num("b")?),
        "deterministic" => DisorderLaw::deterministic(num("b")?),
        "atoms" | "table" => {
            let (an, text) = get("atoms").ok_or_else(|| ConfigError::at(n, format!("`disorder = {kind}` needs `atoms`")))?;
            let mut atoms = Vec::new();
            for part in text.split(',') {
                let (b, p) = part
                    .trim()
                    .split_once(':')
                    .ok_or_else(|| ConfigError::at(an, format!("atom `{}` is not `b:p`", part.trim())))?;
                atoms.push((parse_num(an, "atoms", b.trim())?, parse_num(an, "atoms", p.trim())?));
            }
            DisorderLaw::new(atoms)
        }
        other => return Err(ConfigError::at(n, format!("unknown disorder `{other}`"))),
    };
    law.map(Some).map_err(|e| ConfigError::at(n, e.to_string()))
}

/// `log:a:b:n`, `lin:a:b:n`, `a:b:n` (linear) or a comma-separated list.
pub fn parse_grid(v: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = v.split(':').map(str::trim).collect();
    let spaced = |a: &str, b: &str, n: &str, log: bool| -> Result<Vec<f64>, String> {
        let a: f64 = a.parse().map_err(|_| format!("bad grid start `{a}`"))?;
        let b: f64 = b.parse().map_err(|_| format!("bad grid end `{b}`"))?;
        let n: usize = n.parse().map_err(|_| format!("bad grid size `{n}`"))?;
        if n < 2 || !(b > a) {
            return Err("grid needs n >= 2 and end > start".into());
        }
        if log && !(a > 0.0) {
            return Err("log grid needs a positive start".into());
        }
        Ok((0..n)
            .map(|i| {
                let s = i as f64 / (n - 1) as f64;
                if i == n - 1 {
                    b
                } else if log {
                    a * (b / a).powf(s)
                } else {
                    a + (b - a) * s
                }
            })
            .collect())
    };
    let grid = match parts.as_slice() {
        ["log", a, b, n] => spaced(a, b, n, true)?,
        ["lin", a, b, n] | [a, b, n] => spaced(a, b, n, false)?,
        [list] => list
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|_| format!("bad time `{}`", x.trim())))
            .collect::<Result<_, _>>()?,
        _ => return Err(format!("cannot parse time grid `{v}`")),
    };
    check_grid(&grid)?;
    Ok(grid)
}

fn check_grid(grid: &[f64]) -> Result<(), String> {
    if grid.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err("times must be positive and finite".into());
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err("times must be strictly increasing".into());
    }
    Ok(())
}

/// `a:b`.
pub fn parse_window(v: &str) -> Result<(f64, f64), String> {
    let (a, b) = v.split_once(':').ok_or_else(|| format!("window `{v}` is not `a:b`"))?;
    let a: f64 = a.trim().parse().map_err(|_| format!("bad window start `{a}`"))?;
    let b: f64 = b.trim().parse().map_err(|_| format!("bad window end `{b}`"))?;
    if !(a > 0.0 && b > a) {
        return Err("window needs 0 < a < b".into());
    }
    Ok((a, b))
}
