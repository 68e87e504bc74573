//! `key=value` training configuration files.
//!
//! One key per line, `#` starts a comment, blank lines are ignored. Unknown
//! keys and repeated keys are errors.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::trainer::TrainConfig;

pub const REQUIRED_KEYS: [&str; 6] = [
    "variant",
    "k",
    "steps",
    "batch_size",
    "learning_rate",
    "seed",
];

pub const OPTIONAL_KEYS: [&str; 15] = [
    "margin",
    "scale",
    "ratio",
    "l",
    "weight_decay",
    "optimizer",
    "momentum",
    "beta1",
    "beta2",
    "eps",
    "warmup_steps",
    "log_interval",
    "embed_dim",
    "center_init",
    "monitor_size",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    /// Number of classes the label file must declare.
    pub k: usize,
    /// Expected positives per sample; checked against uniform label lists.
    pub l: Option<usize>,
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("invalid value `{value}` for key `{key}`")))
}

/// Splits `key=value`, trimming both sides.
pub fn split_assignment(line: &str) -> Result<(&str, &str)> {
    let (k, v) = line
        .split_once('=')
        .ok_or_else(|| Error::InvalidConfig(format!("expected key=value, got `{line}`")))?;
    let (k, v) = (k.trim(), v.trim());
    if k.is_empty() {
        return Err(Error::InvalidConfig(format!("empty key in `{line}`")));
    }
    Ok((k, v))
}

impl RunConfig {
    fn empty() -> Self {
        Self {
            train: TrainConfig::default(),
            k: 0,
            l: None,
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "variant" => t.loss.variant = value.parse()?,
            "k" => self.k = parse_value(key, value)?,
            "steps" => t.steps = parse_value(key, value)?,
            "batch_size" => t.batch_size = parse_value(key, value)?,
            "learning_rate" => t.learning_rate = parse_value(key, value)?,
            "seed" => t.seed = parse_value(key, value)?,
            "margin" => t.loss.margin = parse_value(key, value)?,
            "scale" => t.loss.scale = parse_value(key, value)?,
            "ratio" => t.loss.ratio = parse_value(key, value)?,
            "l" => self.l = Some(parse_value(key, value)?),
            "weight_decay" => t.weight_decay = parse_value(key, value)?,
            "optimizer" => t.optimizer = value.parse()?,
            "momentum" => t.momentum = parse_value(key, value)?,
            "beta1" => t.beta1 = parse_value(key, value)?,
            "beta2" => t.beta2 = parse_value(key, value)?,
            "eps" => t.eps = parse_value(key, value)?,
            "warmup_steps" => t.warmup_steps = parse_value(key, value)?,
            "log_interval" => t.log_interval = parse_value(key, value)?,
            "embed_dim" => t.embed_dim = parse_value(key, value)?,
            "center_init" => t.center_init = value.parse()?,
            "monitor_size" => t.monitor_size = parse_value(key, value)?,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown config key `{other}`"
                )))
            }
        }
        Ok(())
    }

    /// Parses a config file body, then applies `overrides` in order.
    pub fn parse(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::empty();
        let mut seen: Vec<String> = Vec::new();
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = split_assignment(line)?;
            if seen.iter().any(|s| s == k) {
                return Err(Error::InvalidConfig(format!("duplicate config key `{k}`")));
            }
            cfg.set(k, v)?;
            seen.push(k.to_string());
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
            if !seen.contains(k) {
                seen.push(k.clone());
            }
        }
        if let Some(missing) = REQUIRED_KEYS.iter().find(|k| !seen.iter().any(|s| s == *k)) {
            return Err(Error::MissingConfigKey(missing.to_string()));
        }
        if cfg.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, overrides)
    }

    /// Fully resolved key=value lines, in a fixed order.
    pub fn to_key_values(&self) -> String {
        let t = &self.train;
        let mut out = String::new();
        let mut put = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(out, "{k}={v}");
        };
        put("variant", &t.loss.variant);
        put("k", &self.k);
        put("steps", &t.steps);
        put("batch_size", &t.batch_size);
        put("learning_rate", &t.learning_rate);
        put("seed", &t.seed);
        put("margin", &t.loss.margin);
        put("scale", &t.loss.scale);
        put("ratio", &t.loss.ratio);
        if let Some(l) = self.l {
            put("l", &l);
        }
        put("weight_decay", &t.weight_decay);
        put("optimizer", &t.optimizer);
        put("momentum", &t.momentum);
        put("beta1", &t.beta1);
        put("beta2", &t.beta2);
        put("eps", &t.eps);
        put("warmup_steps", &t.warmup_steps);
        put("log_interval", &t.log_interval);
        put("embed_dim", &t.embed_dim);
        put("center_init", &t.center_init);
        put("monitor_size", &t.monitor_size);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::LossVariant;

    const BASE: &str = "# toy run\nvariant = MLCD\nk=40\nsteps=10 # short\nbatch_size=8\nlearning_rate=0.01\nseed=3\n";

    #[test]
    fn parses_required_and_defaults() {
        let c = RunConfig::parse(BASE, &[]).unwrap();
        assert_eq!(c.train.loss.variant, LossVariant::Mlcd);
        assert_eq!(c.k, 40);
        assert_eq!(c.train.steps, 10);
        assert_eq!(c.train.weight_decay, 0.2);
    }

    #[test]
    fn missing_key_is_named() {
        let text = BASE.replace("seed=3\n", "");
        match RunConfig::parse(&text, &[]) {
            Err(Error::MissingConfigKey(k)) => assert_eq!(k, "seed"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overrides_win_and_can_supply_required_keys() {
        let text = BASE.replace("seed=3\n", "");
        let c = RunConfig::parse(
            &text,
            &[("seed".into(), "9".into()), ("steps".into(), "1".into())],
        )
        .unwrap();
        assert_eq!(c.train.seed, 9);
        assert_eq!(c.train.steps, 1);
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed() {
        assert!(RunConfig::parse(&format!("{BASE}colour=red\n"), &[]).is_err());
        assert!(RunConfig::parse(&format!("{BASE}k=3\n"), &[]).is_err());
        assert!(RunConfig::parse(&format!("{BASE}margin\n"), &[]).is_err());
        assert!(RunConfig::parse(&BASE.replace("k=40", "k=x"), &[]).is_err());
    }

    #[test]
    fn round_trips_through_key_values() {
        let c = RunConfig::parse(&format!("{BASE}l=2\noptimizer=sgd\n"), &[]).unwrap();
        assert_eq!(RunConfig::parse(&c.to_key_values(), &[]).unwrap(), c);
    }
}
