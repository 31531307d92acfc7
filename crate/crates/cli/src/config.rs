use crate::error::CliError;
use ewsdyn::ews::{CritCurveUnits, EWSConfig, TheoremOptions};
use ewsdyn::integrator::IntegratorConfig;
use ewsdyn::normal_form::TransformMode;
use ewsdyn::ModelParams;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Everything a command needs, after merging the config file and flags.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: ModelParams,
    pub ic: Option<[f64; 3]>,
    pub t_final: Option<f64>,
    pub rtol: f64,
    pub atol: f64,
    pub k: usize,
    pub n: Option<usize>,
    pub n_fit: usize,
    pub alpha: f64,
    pub crit_units: CritCurveUnits,
    pub cushion: f64,
    pub transform: TransformMode,
    pub ds: f64,
    pub fsn_bracket: (f64, f64),
    pub h_range: (f64, f64),
    pub h_step: f64,
    pub out: PathBuf,
    pub format: Format,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            params: ModelParams::default(),
            ic: None,
            t_final: None,
            rtol: 1e-8,
            atol: 1e-10,
            k: 5,
            n: Some(41),
            n_fit: 18,
            alpha: -0.04,
            crit_units: CritCurveUnits::Published,
            cushion: 0.0,
            transform: TransformMode::Full,
            ds: 0.002,
            fsn_bracket: (0.2, 0.3),
            h_range: (0.05, 0.45),
            h_step: 0.005,
            out: PathBuf::from("out"),
            format: Format::Csv,
        }
    }
}

fn num(key: &str, v: &str) -> Result<f64, CliError> {
    v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| CliError::Config(format!("{key}: `{v}` is not a finite number")))
}

fn int(key: &str, v: &str) -> Result<usize, CliError> {
    v.parse::<usize>().map_err(|_| CliError::Config(format!("{key}: `{v}` is not a nonnegative integer")))
}

pub fn parse_triple(key: &str, v: &str) -> Result<[f64; 3], CliError> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(CliError::Config(format!("{key}: expected three comma-separated numbers, got `{v}`")));
    }
    Ok([num(key, parts[0])?, num(key, parts[1])?, num(key, parts[2])?])
}

fn pair(key: &str, v: &str) -> Result<(f64, f64), CliError> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(CliError::Config(format!("{key}: expected two comma-separated numbers, got `{v}`")));
    }
    Ok((num(key, parts[0])?, num(key, parts[1])?))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let p = &mut self.params;
        match key {
            "h" => p.h = num(key, value)?,
            "beta1" => p.beta1 = num(key, value)?,
            "beta2" => p.beta2 = num(key, value)?,
            "c" => p.c = num(key, value)?,
            "d" => p.d = num(key, value)?,
            "a12" => p.a12 = num(key, value)?,
            "a21" => p.a21 = num(key, value)?,
            "zeta" => p.zeta = num(key, value)?,
            "ic" => self.ic = Some(parse_triple(key, value)?),
            "tfinal" => self.t_final = Some(num(key, value)?),
            "rtol" => self.rtol = num(key, value)?,
            "atol" => self.atol = num(key, value)?,
            "k" => self.k = int(key, value)?,
            "n" => self.n = if value == "all" { None } else { Some(int(key, value)?) },
            "n_fit" => self.n_fit = int(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "crit_units" => {
                self.crit_units = match value {
                    "published" => CritCurveUnits::Published,
                    "tau" => CritCurveUnits::Tau,
                    _ => return Err(CliError::Config(format!("crit_units: `{value}` is not published|tau"))),
                }
            }
            "cushion" => self.cushion = num(key, value)?,
            "transform" => {
                self.transform = match value {
                    "full" => TransformMode::Full,
                    "leading-order" => TransformMode::LeadingOrder,
                    _ => return Err(CliError::Config(format!("transform: `{value}` is not full|leading-order"))),
                }
            }
            "ds" => self.ds = num(key, value)?,
            "fsn_bracket" => self.fsn_bracket = pair(key, value)?,
            "h_range" => self.h_range = pair(key, value)?,
            "h_step" => self.h_step = num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "format" => {
                self.format = match value {
                    "csv" => Format::Csv,
                    "json" => Format::Json,
                    _ => return Err(CliError::Config(format!("format: `{value}` is not csv|json"))),
                }
            }
            _ => return Err(CliError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Reads `key = value` lines; `#` starts a comment.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = RunConfig::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("{}:{}: expected `key = value`", path.display(), no + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.params.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.ews().validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.integrator(1.0).validate().map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(t) = self.t_final {
            if !(t > 0.0) {
                return Err(CliError::Config("tfinal must be positive".into()));
            }
        }
        if !(self.ds > 0.0) || !(self.h_step > 0.0) {
            return Err(CliError::Config("ds and h_step must be positive".into()));
        }
        if self.n_fit < 2 {
            return Err(CliError::Config("n_fit must be at least 2".into()));
        }
        Ok(())
    }

    pub fn ews(&self) -> EWSConfig {
        EWSConfig {
            k: self.k,
            n: self.n,
            crit_units: self.crit_units,
            theorem: TheoremOptions { cushion: self.cushion, ..Default::default() },
            ..Default::default()
        }
    }

    pub fn integrator(&self, t_final: f64) -> IntegratorConfig {
        IntegratorConfig::default().with_t_final(t_final).with_tolerances(self.rtol, self.atol)
    }

    pub fn require_ic(&self) -> Result<[f64; 3], CliError> {
        self.ic.ok_or_else(|| CliError::Config("an initial condition is required (--ic X,Y,Z or `ic = ...`)".into()))
    }
}
