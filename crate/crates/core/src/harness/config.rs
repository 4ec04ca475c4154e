//! Experiment configuration: flat `key=value` files with repeated keys for
//! lists, overridden key by key from the command line.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::iflow::MAX_ORDER;
use crate::predictors::{MlpConfig, Predictor, RidgeConfig};

use super::data::SyntheticSpec;

/// Raw `key -> values` pairs in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, Vec<String>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = Self::default();
        for (k, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected key=value", k + 1))
            })?;
            raw.push(key.trim(), value.trim());
        }
        Ok(raw)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn push(&mut self, key: &str, value: &str) {
        self.entries.entry(key.to_string()).or_default().push(value.to_string());
    }

    /// Replaces every value of `key`.
    pub fn set(&mut self, key: &str, values: Vec<String>) {
        self.entries.insert(key.to_string(), values);
    }

    pub fn get(&self, key: &str) -> Option<&[String]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    fn last(&self, key: &str) -> Option<&str> {
        self.get(key).and_then(|v| v.last()).map(String::as_str)
    }

    /// All values of `key`, each split on commas.
    fn list(&self, key: &str) -> Vec<String> {
        self.get(key)
            .unwrap_or(&[])
            .iter()
            .flat_map(|v| v.split(','))
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect()
    }

    fn scalar<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.last(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse {v:?}")))
            })
            .transpose()
    }
}

const KNOWN_KEYS: &[&str] = &[
    "dataset",
    "methods",
    "alpha",
    "replicates",
    "train-size",
    "beta",
    "test-fraction",
    "weights",
    "predictor",
    "lambda",
    "intercept",
    "hidden-units",
    "epochs",
    "batch-size",
    "learning-rate",
    "if-order",
    "cv-folds",
    "tau-grid",
    "out",
    "seed",
    "workers",
    "max-rows",
    "timing",
    "synthetic-size",
    "synthetic-slope",
    "synthetic-noise",
    "synthetic-hetero",
];

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Csv(PathBuf),
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightSource {
    Oracle,
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Naive,
    Jackknife,
    JackknifePlus,
    JackknifeMm,
    CvPlus,
    Split,
    WeightedSplit,
    Jaw,
    Jawa(usize),
    JackknifeIf(usize),
    JackknifePlusIf(usize),
    JackknifeMmIf(usize),
}

impl Method {
    /// Methods driven by likelihood-ratio weights.
    pub fn is_weighted(self) -> bool {
        matches!(self, Method::Jaw | Method::Jawa(_) | Method::WeightedSplit)
    }

    pub fn if_order(self) -> Option<usize> {
        match self {
            Method::Jawa(k)
            | Method::JackknifeIf(k)
            | Method::JackknifePlusIf(k)
            | Method::JackknifeMmIf(k) => Some(k),
            _ => None,
        }
    }

    /// Methods with an error-assessment counterpart.
    pub fn supports_assessment(self) -> bool {
        matches!(
            self,
            Method::Jaw
                | Method::Jawa(_)
                | Method::JackknifePlus
                | Method::JackknifePlusIf(_)
                | Method::CvPlus
                | Method::Split
                | Method::WeightedSplit
        )
    }

    /// Parses one name; names without an order suffix expand over `orders`.
    fn parse_all(name: &str, orders: &[usize]) -> Result<Vec<Method>> {
        let fixed = match name {
            "naive" => Some(Method::Naive),
            "jackknife" => Some(Method::Jackknife),
            "jackknife-plus" => Some(Method::JackknifePlus),
            "jackknife-mm" => Some(Method::JackknifeMm),
            "cv-plus" => Some(Method::CvPlus),
            "split" => Some(Method::Split),
            "weighted-split" => Some(Method::WeightedSplit),
            "jaw" => Some(Method::Jaw),
            _ => None,
        };
        if let Some(m) = fixed {
            return Ok(vec![m]);
        }
        let families: [(&str, fn(usize) -> Method); 4] = [
            ("jawa", Method::Jawa),
            ("jackknife-plus-if", Method::JackknifePlusIf),
            ("jackknife-mm-if", Method::JackknifeMmIf),
            ("jackknife-if", Method::JackknifeIf),
        ];
        for (prefix, make) in families {
            if name == prefix {
                return Ok(orders.iter().map(|k| make(*k)).collect());
            }
            if let Some(k) = name.strip_prefix(prefix).and_then(|r| r.strip_prefix('-')) {
                let k: usize = k
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("unknown method {name:?}")))?;
                check_order(k)?;
                return Ok(vec![make(k)]);
            }
        }
        Err(Error::InvalidConfig(format!("unknown method {name:?}")))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Naive => write!(f, "naive"),
            Method::Jackknife => write!(f, "jackknife"),
            Method::JackknifePlus => write!(f, "jackknife-plus"),
            Method::JackknifeMm => write!(f, "jackknife-mm"),
            Method::CvPlus => write!(f, "cv-plus"),
            Method::Split => write!(f, "split"),
            Method::WeightedSplit => write!(f, "weighted-split"),
            Method::Jaw => write!(f, "jaw"),
            Method::Jawa(k) => write!(f, "jawa-{k}"),
            Method::JackknifeIf(k) => write!(f, "jackknife-if-{k}"),
            Method::JackknifePlusIf(k) => write!(f, "jackknife-plus-if-{k}"),
            Method::JackknifeMmIf(k) => write!(f, "jackknife-mm-if-{k}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match Method::parse_all(s, &[])?.as_slice() {
            [m] => Ok(*m),
            _ => Err(Error::InvalidConfig(format!("method {s:?} needs an order suffix"))),
        }
    }
}

fn check_order(k: usize) -> Result<()> {
    if (1..=MAX_ORDER).contains(&k) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("if-order {k} outside 1..={MAX_ORDER}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub methods: Vec<Method>,
    pub alpha: f64,
    pub replicates: usize,
    pub train_size: usize,
    /// Tilting vector on standardized features; empty means no shift.
    pub beta: Vec<f64>,
    pub test_fraction: f64,
    pub weights: WeightSource,
    pub predictor: Predictor,
    pub cv_folds: usize,
    /// Points in the τ grid for error-assessment AUROC; 0 disables it.
    pub tau_grid: usize,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub workers: usize,
    pub max_rows: Option<usize>,
    /// Fills the `runtime_ms` column, which makes output nondeterministic.
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::Synthetic(SyntheticSpec::default()),
            methods: vec![Method::Jaw, Method::JackknifePlus, Method::Split, Method::WeightedSplit],
            alpha: 0.1,
            replicates: 10,
            train_size: 200,
            beta: Vec::new(),
            test_fraction: 0.5,
            weights: WeightSource::Oracle,
            predictor: Predictor::Ridge(RidgeConfig {
                lambda: 1e-3,
                intercept: true,
            }),
            cv_folds: 10,
            tau_grid: 0,
            out: None,
            seed: 0,
            workers: 1,
            max_rows: None,
            timing: false,
        }
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::InvalidConfig(format!("{key}: expected a boolean, got {v:?}"))),
    }
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        if let Some(k) = raw.entries.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            return Err(Error::InvalidConfig(format!("unknown key {k:?}")));
        }
        let mut cfg = Self::default();

        let mut synthetic = SyntheticSpec::default();
        if let Some(v) = raw.scalar("synthetic-size")? {
            synthetic.size = v;
        }
        if let Some(v) = raw.scalar("synthetic-slope")? {
            synthetic.slope = v;
        }
        if let Some(v) = raw.scalar("synthetic-noise")? {
            synthetic.noise = v;
        }
        if let Some(v) = raw.scalar("synthetic-hetero")? {
            synthetic.hetero = v;
        }
        cfg.dataset = match raw.last("dataset") {
            None | Some("synthetic") => DatasetSource::Synthetic(synthetic),
            Some(path) => DatasetSource::Csv(PathBuf::from(path)),
        };

        cfg.alpha = raw.scalar("alpha")?.unwrap_or(cfg.alpha);
        cfg.replicates = raw.scalar("replicates")?.unwrap_or(cfg.replicates);
        cfg.train_size = raw.scalar("train-size")?.unwrap_or(cfg.train_size);
        cfg.test_fraction = raw.scalar("test-fraction")?.unwrap_or(cfg.test_fraction);
        cfg.cv_folds = raw.scalar("cv-folds")?.unwrap_or(cfg.cv_folds);
        cfg.tau_grid = raw.scalar("tau-grid")?.unwrap_or(cfg.tau_grid);
        cfg.seed = raw.scalar("seed")?.unwrap_or(cfg.seed);
        cfg.workers = raw.scalar("workers")?.unwrap_or(cfg.workers);
        cfg.max_rows = raw.scalar("max-rows")?;
        cfg.out = raw.last("out").map(PathBuf::from);
        if let Some(v) = raw.last("timing") {
            cfg.timing = parse_bool("timing", v)?;
        }
        cfg.beta = raw
            .list("beta")
            .iter()
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::InvalidConfig(format!("beta: cannot parse {v:?}")))
            })
            .collect::<Result<_>>()?;
        cfg.weights = match raw.last("weights") {
            None | Some("oracle") => WeightSource::Oracle,
            Some("estimated") => WeightSource::Estimated,
            Some(v) => return Err(Error::InvalidConfig(format!("weights: unknown source {v:?}"))),
        };
        cfg.predictor = predictor_from_raw(raw)?;

        let orders: Vec<usize> = if raw.get("if-order").is_some() {
            raw.list("if-order")
                .iter()
                .map(|v| {
                    let k = v
                        .parse()
                        .map_err(|_| Error::InvalidConfig(format!("if-order: cannot parse {v:?}")))?;
                    check_order(k)?;
                    Ok(k)
                })
                .collect::<Result<_>>()?
        } else {
            vec![1]
        };
        if raw.get("methods").is_some() {
            let mut methods = Vec::new();
            for name in raw.list("methods") {
                for m in Method::parse_all(&name, &orders)? {
                    if !methods.contains(&m) {
                        methods.push(m);
                    }
                }
            }
            cfg.methods = methods;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail(format!("alpha {} outside (0, 1)", self.alpha));
        }
        if self.replicates == 0 {
            return fail("replicates must be >= 1".into());
        }
        if self.train_size < 2 {
            return fail("train-size must be >= 2".into());
        }
        if !(self.test_fraction > 0.0 && self.test_fraction <= 1.0) {
            return fail(format!("test-fraction {} outside (0, 1]", self.test_fraction));
        }
        if self.workers == 0 {
            return fail("workers must be >= 1".into());
        }
        if self.methods.is_empty() {
            return fail("no methods configured".into());
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return fail("beta must be finite".into());
        }
        if self.methods.contains(&Method::CvPlus) && self.cv_folds < 2 {
            return fail("cv-folds must be >= 2".into());
        }
        if let DatasetSource::Synthetic(s) = &self.dataset {
            if s.size <= self.train_size {
                return fail("synthetic-size must exceed train-size".into());
            }
        }
        Ok(())
    }
}

fn predictor_from_raw(raw: &RawConfig) -> Result<Predictor> {
    let lambda: Option<f64> = raw.scalar("lambda")?;
    if lambda.is_some_and(|l| !(l >= 0.0)) {
        return Err(Error::InvalidConfig("lambda must be >= 0".into()));
    }
    match raw.last("predictor").unwrap_or("ridge") {
        "ridge" => Ok(Predictor::Ridge(RidgeConfig {
            lambda: lambda.unwrap_or(1e-3),
            intercept: match raw.last("intercept") {
                Some(v) => parse_bool("intercept", v)?,
                None => true,
            },
        })),
        "mlp" => {
            let d = MlpConfig::default();
            Ok(Predictor::Mlp(MlpConfig {
                hidden_units: raw.scalar("hidden-units")?.unwrap_or(d.hidden_units),
                l2_lambda: lambda.unwrap_or(d.l2_lambda),
                epochs: raw.scalar("epochs")?.unwrap_or(d.epochs),
                batch_size: raw.scalar("batch-size")?.unwrap_or(d.batch_size),
                learning_rate: raw.scalar("learning-rate")?.unwrap_or(d.learning_rate),
                seed: 0,
            }))
        }
        "constant-mean" => Ok(Predictor::ConstantMean),
        other => Err(Error::InvalidConfig(format!("unknown predictor {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_file_with_repeated_keys() {
        let raw = RawConfig::parse(
            "# comment\nmethods = jaw\nmethods=jawa, split\nif-order=1\nif-order=3\nalpha=0.2\nbeta=1.5\n",
        )
        .unwrap();
        let cfg = ExperimentConfig::from_raw(&raw).unwrap();
        assert_eq!(
            cfg.methods,
            vec![Method::Jaw, Method::Jawa(1), Method::Jawa(3), Method::Split]
        );
        assert_eq!(cfg.alpha, 0.2);
        assert_eq!(cfg.beta, vec![1.5]);
    }

    #[test]
    fn cli_values_replace_file_values() {
        let mut raw = RawConfig::parse("methods=jaw\nmethods=split\nseed=3").unwrap();
        raw.set("methods", vec!["naive".into()]);
        let cfg = ExperimentConfig::from_raw(&raw).unwrap();
        assert_eq!(cfg.methods, vec![Method::Naive]);
        assert_eq!(cfg.seed, 3);
    }

    #[test]
    fn method_names_round_trip() {
        for m in [
            Method::Naive,
            Method::JackknifeMm,
            Method::CvPlus,
            Method::WeightedSplit,
            Method::Jawa(2),
            Method::JackknifeIf(3),
            Method::JackknifePlusIf(1),
            Method::JackknifeMmIf(2),
        ] {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert!("jawa".parse::<Method>().is_err());
        assert!("jawa-4".parse::<Method>().is_err());
    }

    #[test]
    fn rejects_bad_configs() {
        for text in ["alpha=1.5", "bogus=1", "replicates=0", "methods=magic", "weights=guess", "line without equals"] {
            let parsed = RawConfig::parse(text).and_then(|r| ExperimentConfig::from_raw(&r));
            assert!(matches!(parsed, Err(Error::InvalidConfig(_))), "{text}");
        }
    }

    #[test]
    fn predictor_keys() {
        let raw = RawConfig::parse("predictor=mlp\nlambda=4\nhidden-units=7").unwrap();
        match ExperimentConfig::from_raw(&raw).unwrap().predictor {
            Predictor::Mlp(c) => assert_eq!((c.l2_lambda, c.hidden_units), (4.0, 7)),
            p => panic!("{p:?}"),
        }
    }
}
