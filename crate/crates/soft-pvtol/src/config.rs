//! Plain-text scenario files: one `key = value` per line, `#` comments.
//!
//! Keys mirror the configuration field paths (dot-separated, 1-based
//! indices for vector entries). Unknown and duplicate keys are hard
//! errors; missing keys keep the stock defaults, so an empty file runs the
//! bundled tracking scenario.
//!
//! ```text
//! # full key set (values shown are the defaults)
//! t_end = 40.0
//! h = 0.01
//! substeps = 1
//! reference = PAPER_TRAJECTORY      # PRESCRIBED_SMOOTH | HOVER
//! ideal_wrench = false
//! output = sim_log.csv
//! params.m = 5.0
//! params.m_l = 1.0
//! params.m_r = 1.0
//! params.I = 1.0
//! params.I_l = 0.1
//! params.I_r = 0.1
//! params.l_l = 0.5
//! params.l_r = 0.5
//! params.epsilon = 0.0
//! params.g = 9.8
//! gains.K.1 = 2.55          # ... gains.K.5
//! gains.Lambda.1 = 1.0      # ... gains.Lambda.5
//! kernel.delta = 0.1
//! kernel.mode = CONSTANT_LIMIT      # SERIES
//! solver.initial_guess.1 = 20.0     # ... .4
//! solver.tolerance = 1e-10
//! solver.max_iterations = 50
//! solver.damping = 1.0
//! solver.thrust_limit = 200.0
//! filter.time_constant = 0.05
//! initial.q.1 = 5.0         # ... initial.q.5
//! initial.qdot.1 = 0.0      # ... initial.qdot.5
//! ```

use crate::controller::Gains;
use crate::kernels::KernelMode;
use crate::simulator::{ReferenceKind, SimConfig, SimConfigError};
use std::collections::HashSet;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: invalid value for `{key}`: {msg}")]
    InvalidValue {
        line: usize,
        key: String,
        msg: String,
    },
    #[error(transparent)]
    Gains(#[from] crate::controller::GainsError),
    #[error(transparent)]
    Validation(#[from] SimConfigError),
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
}

/// Parses a scenario from config text and validates it.
pub fn parse_sim_config(text: &str) -> Result<SimConfig, ConfigError> {
    let cfg = parse_unvalidated(text)?;
    cfg.validate().map_err(ConfigError::Validation)?;
    Ok(cfg)
}

/// Loads and validates a scenario file.
pub fn load_sim_config(path: &Path) -> Result<SimConfig, ConfigError> {
    parse_sim_config(&std::fs::read_to_string(path)?)
}

/// Parses without the final semantic validation. The verification CLI uses
/// this so deliberately invalid parameter sets reach the validation suite
/// instead of failing at load time.
pub fn parse_unvalidated(text: &str) -> Result<SimConfig, ConfigError> {
    let mut cfg = SimConfig::default();
    let mut k = *Gains::default().k();
    let mut lambda = *Gains::default().lambda();
    let mut seen: HashSet<String> = HashSet::new();

    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        let content = content.trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::Syntax {
                line,
                text: content.to_string(),
            });
        };
        let key = key.trim();
        let value = value.trim();
        if !seen.insert(key.to_string()) {
            return Err(ConfigError::DuplicateKey {
                line,
                key: key.to_string(),
            });
        }

        let bad = |msg: String| ConfigError::InvalidValue {
            line,
            key: key.to_string(),
            msg,
        };
        let as_f64 = |v: &str| -> Result<f64, ConfigError> {
            v.parse::<f64>().map_err(|e| bad(e.to_string()))
        };
        let as_u32 = |v: &str| -> Result<u32, ConfigError> {
            v.parse::<u32>().map_err(|e| bad(e.to_string()))
        };
        let as_bool = |v: &str| -> Result<bool, ConfigError> {
            match v {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => Err(bad("expected true or false".to_string())),
            }
        };

        match key {
            "t_end" => cfg.t_end = as_f64(value)?,
            "h" => cfg.h = as_f64(value)?,
            "substeps" => cfg.substeps = as_u32(value)?,
            "reference" => {
                cfg.reference = ReferenceKind::parse(value).ok_or_else(|| {
                    bad("expected PAPER_TRAJECTORY, PRESCRIBED_SMOOTH, or HOVER".to_string())
                })?
            }
            "ideal_wrench" => cfg.ideal_wrench = as_bool(value)?,
            "output" => cfg.output = Some(PathBuf::from(value)),
            "params.m" => cfg.params.m = as_f64(value)?,
            "params.m_l" => cfg.params.m_l = as_f64(value)?,
            "params.m_r" => cfg.params.m_r = as_f64(value)?,
            "params.I" => cfg.params.i_body = as_f64(value)?,
            "params.I_l" => cfg.params.i_l = as_f64(value)?,
            "params.I_r" => cfg.params.i_r = as_f64(value)?,
            "params.l_l" => cfg.params.l_l = as_f64(value)?,
            "params.l_r" => cfg.params.l_r = as_f64(value)?,
            "params.epsilon" => cfg.params.epsilon = as_f64(value)?,
            "params.g" => cfg.params.g = as_f64(value)?,
            "kernel.delta" => cfg.kernel.delta = as_f64(value)?,
            "kernel.mode" => {
                cfg.kernel.mode = KernelMode::parse(value)
                    .ok_or_else(|| bad("expected CONSTANT_LIMIT or SERIES".to_string()))?
            }
            "solver.tolerance" => cfg.solver.tolerance = as_f64(value)?,
            "solver.max_iterations" => cfg.solver.max_iterations = as_u32(value)?,
            "solver.damping" => cfg.solver.damping = as_f64(value)?,
            "solver.thrust_limit" => cfg.solver.thrust_limit = as_f64(value)?,
            "filter.time_constant" => cfg.filter_time_constant = as_f64(value)?,
            _ => {
                if let Some(rest) = key.strip_prefix("gains.K.") {
                    let i = vec_index(rest, 5).ok_or_else(|| bad("index must be 1..=5".into()))?;
                    k[i] = as_f64(value)?;
                } else if let Some(rest) = key.strip_prefix("gains.Lambda.") {
                    let i = vec_index(rest, 5).ok_or_else(|| bad("index must be 1..=5".into()))?;
                    lambda[i] = as_f64(value)?;
                } else if let Some(rest) = key.strip_prefix("solver.initial_guess.") {
                    let i = vec_index(rest, 4).ok_or_else(|| bad("index must be 1..=4".into()))?;
                    cfg.solver.initial_guess[i] = as_f64(value)?;
                } else if let Some(rest) = key.strip_prefix("initial.q.") {
                    let i = vec_index(rest, 5).ok_or_else(|| bad("index must be 1..=5".into()))?;
                    cfg.initial.q[i] = as_f64(value)?;
                } else if let Some(rest) = key.strip_prefix("initial.qdot.") {
                    let i = vec_index(rest, 5).ok_or_else(|| bad("index must be 1..=5".into()))?;
                    cfg.initial.qdot[i] = as_f64(value)?;
                } else {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: key.to_string(),
                    });
                }
            }
        }
    }

    cfg.gains = Gains::new(k, lambda)?;
    Ok(cfg)
}

fn vec_index(s: &str, n: usize) -> Option<usize> {
    let i: usize = s.parse().ok()?;
    (1..=n).contains(&i).then(|| i - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_stock_scenario() {
        let cfg = parse_sim_config("").unwrap();
        assert_eq!(cfg.t_end, 40.0);
        assert_eq!(cfg.h, 0.01);
        assert_eq!(cfg.reference, ReferenceKind::PaperTrajectory);
        assert_eq!(cfg.params.m, 5.0);
        assert_eq!(cfg.initial.q[0], 5.0);
        assert_eq!(cfg.steps(), 4000);
    }

    #[test]
    fn comments_and_blank_lines() {
        let cfg = parse_sim_config("# a comment\n\n t_end = 10.0  # trailing\n").unwrap();
        assert_eq!(cfg.t_end, 10.0);
    }

    #[test]
    fn full_key_set_round_trip() {
        let text = "\
t_end = 12.5
h = 0.02
substeps = 2
reference = HOVER
ideal_wrench = true
output = run.csv
params.m = 4.0
params.m_l = 0.8
params.m_r = 0.9
params.I = 1.2
params.I_l = 0.15
params.I_r = 0.12
params.l_l = 0.45
params.l_r = 0.55
params.epsilon = 0.1
params.g = 9.81
gains.K.1 = 3.0
gains.K.3 = 12.0
gains.Lambda.5 = 8.0
kernel.delta = 0.2
kernel.mode = SERIES
solver.initial_guess.1 = 15.0
solver.initial_guess.4 = 0.1
solver.tolerance = 1e-9
solver.max_iterations = 40
solver.damping = 0.8
solver.thrust_limit = 150.0
filter.time_constant = 0.08
initial.q.1 = 0.0
initial.q.2 = 1.0
initial.q.3 = 0.0
initial.q.4 = 0.1
initial.q.5 = -0.1
initial.qdot.2 = 0.5
";
        let cfg = parse_sim_config(text).unwrap();
        assert_eq!(cfg.t_end, 12.5);
        assert_eq!(cfg.substeps, 2);
        assert_eq!(cfg.reference, ReferenceKind::Hover);
        assert!(cfg.ideal_wrench);
        assert_eq!(cfg.output.as_deref(), Some(Path::new("run.csv")));
        assert_eq!(cfg.params.i_l, 0.15);
        assert_eq!(cfg.gains.k()[0], 3.0);
        assert_eq!(cfg.gains.k()[2], 12.0);
        assert_eq!(cfg.gains.k()[1], 2.55); // untouched default
        assert_eq!(cfg.gains.lambda()[4], 8.0);
        assert_eq!(cfg.kernel.mode, KernelMode::Series);
        assert_eq!(cfg.solver.initial_guess, [15.0, 10.0, 0.4, 0.1]);
        assert_eq!(cfg.filter_time_constant, 0.08);
        assert_eq!(cfg.initial.q[1], 1.0);
        assert_eq!(cfg.initial.qdot[1], 0.5);
    }

    #[test]
    fn unknown_key_is_hard_error() {
        let err = parse_sim_config("params.mass = 3.0").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey { line: 1, .. }));
    }

    #[test]
    fn duplicate_key_is_hard_error() {
        let err = parse_sim_config("h = 0.01\nh = 0.02").unwrap_err();
        assert!(matches!(err, ConfigError::DuplicateKey { line: 2, .. }));
    }

    #[test]
    fn missing_equals_is_syntax_error() {
        let err = parse_sim_config("t_end 40").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 1, .. }));
    }

    #[test]
    fn negative_mass_names_the_invariant() {
        let err = parse_sim_config("params.m = -5.0").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('m') && msg.contains("positive"), "{msg}");
    }

    #[test]
    fn out_of_range_index_rejected() {
        assert!(parse_sim_config("gains.K.6 = 1.0").is_err());
        assert!(parse_sim_config("gains.K.0 = 1.0").is_err());
        assert!(parse_sim_config("solver.initial_guess.5 = 1.0").is_err());
    }

    #[test]
    fn bad_mode_token_rejected() {
        assert!(parse_sim_config("kernel.mode = smooth").is_err());
        assert!(parse_sim_config("reference = CIRCLE").is_err());
        assert!(parse_sim_config("ideal_wrench = yes").is_err());
    }

    #[test]
    fn unvalidated_parse_defers_semantics() {
        let cfg = parse_unvalidated("params.m = -5.0").unwrap();
        assert_eq!(cfg.params.m, -5.0);
        assert!(cfg.validate().is_err());
    }
}
