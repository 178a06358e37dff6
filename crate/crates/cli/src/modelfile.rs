//! Model files.
//!
//! A model file is TOML. Built-in families need `model` plus their
//! hyperparameters, and `data` for the families that take observations:
//!
//! ```toml
//! model = "beta-binomial"
//! p = 2
//! q = 8
//! a = 1
//! b = 1
//! ```
//!
//! Custom models spell out the kernel in the expression language:
//!
//! ```toml
//! model = "custom"
//! n = 10
//! proper_prior = true
//! loglik = "sum(log(theta)*x + log(1-theta)*(1-x))"
//! logprior = "0"
//! data = "1,0,0,0,0,1,0,0,0,0"
//!
//! [params]
//! theta = "unit"
//! ```
//!
//! `data` is an array, a comma-separated string, or `{ file = "path" }`
//! naming a file with one number per line (relative paths resolve against
//! the model file's directory). Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use laplace_core::exprlang::parse_expression;
use laplace_core::model::{builtin_model, Family};
use laplace_core::{Domain, ModelSpec, ParameterDescriptor};
use toml::{Table, Value};

use crate::error::{CliError, CliResult};

const CUSTOM_KEYS: [&str; 7] = ["model", "params", "loglik", "logprior", "data", "n", "proper_prior"];

/// A model file after parsing.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub path: PathBuf,
    pub spec: ModelSpec,
    /// The common-rate model M2 when the file describes two treatments.
    pub alternative: Option<ModelSpec>,
    /// `None` for custom models.
    pub family: Option<Family>,
    pub hyper: BTreeMap<String, f64>,
    pub data: Vec<f64>,
}

impl LoadedModel {
    pub fn parameter_names(&self) -> Vec<String> {
        self.spec.parameters().iter().map(|p| p.name.clone()).collect()
    }

    pub fn display_name(&self) -> String {
        self.path.display().to_string()
    }
}

pub fn load_model(path: &Path) -> CliResult<LoadedModel> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::model_file("Unreadable", format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut m = parse_model(&text, base)?;
    m.path = path.to_path_buf();
    if m.family.is_none() {
        let stem = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        m.spec = m.spec.with_label(format!("custom({stem})"));
    }
    Ok(m)
}

pub fn parse_model(text: &str, base_dir: &Path) -> CliResult<LoadedModel> {
    let table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::model_file("TomlSyntax", e.message().to_string()))?;
    let name = match table.get("model") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(CliError::model_file("InvalidValue", "`model` must be a string")),
        None => return Err(CliError::model_file("MissingKey", "`model` is required")),
    };
    let data = match table.get("data") {
        Some(v) => parse_data_value(v, base_dir)?,
        None => Vec::new(),
    };
    if name == "custom" {
        return custom(&table, data);
    }

    let family: Family = name.parse().map_err(|e: laplace_core::Error| CliError::model_file(e.code(), e.to_string()))?;
    let mut hyper = BTreeMap::new();
    for (key, value) in &table {
        if key == "model" || (key == "data" && family.needs_data()) {
            continue;
        }
        if !family.hyper_keys().contains(&key.as_str()) {
            return Err(CliError::model_file("UnknownKey", format!("`{key}` is not a key of a {family} model file")));
        }
        hyper.insert(key.clone(), number(key, value)?);
    }
    let built = builtin_model(&name, &hyper, &data).map_err(|e| CliError::model_file(e.code(), e.to_string()))?;
    let mut models = built.models.into_iter();
    let spec = models.next().expect("a builtin yields at least one model");
    Ok(LoadedModel { path: PathBuf::new(), spec, alternative: models.next(), family: Some(family), hyper, data })
}

fn custom(table: &Table, data: Vec<f64>) -> CliResult<LoadedModel> {
    if let Some(k) = table.keys().find(|k| !CUSTOM_KEYS.contains(&k.as_str())) {
        return Err(CliError::model_file("UnknownKey", format!("`{k}` is not a key of a custom model file")));
    }
    let required = |k: &str| table.get(k).ok_or_else(|| CliError::model_file("MissingKey", format!("custom models require `{k}`")));

    let params = match required("params")? {
        Value::Table(t) if !t.is_empty() => t,
        _ => return Err(CliError::model_file("InvalidValue", "`params` must be a table of name = domain")),
    };
    let mut descriptors = Vec::with_capacity(params.len());
    for (name, v) in params {
        let Value::String(d) = v else {
            return Err(CliError::model_file("InvalidValue", format!("domain of `{name}` must be a string")));
        };
        descriptors.push(ParameterDescriptor::new(name.clone(), parse_domain(d)?));
    }
    let names: Vec<String> = descriptors.iter().map(|p| p.name.clone()).collect();

    let n = match required("n")? {
        Value::Integer(n) if *n >= 1 => *n as usize,
        _ => return Err(CliError::model_file("InvalidValue", "`n` must be a positive integer")),
    };
    let proper = match table.get("proper_prior") {
        None => false,
        Some(Value::Boolean(b)) => *b,
        Some(_) => return Err(CliError::model_file("InvalidValue", "`proper_prior` must be true or false")),
    };

    let mut compiled = Vec::with_capacity(2);
    for key in ["loglik", "logprior"] {
        let Value::String(text) = required(key)? else {
            return Err(CliError::model_file("InvalidValue", format!("`{key}` must be a string")));
        };
        let expr = parse_expression(text).map_err(|e| CliError::model_file(e.code(), format!("{key}: {e}")))?;
        if expr.contains_sum() && data.is_empty() {
            return Err(CliError::model_file("MissingData", format!("{key} uses sum(...) but the file has no data")));
        }
        compiled.push(expr.compile(&names).map_err(|e| CliError::model_file(e.code(), format!("{key}: {e}")))?);
    }
    let (loglik, logprior) = (compiled.remove(0), compiled.remove(0));

    let shared = Arc::new(data.clone());
    let kernel = move |t: &[f64]| match (loglik.eval(t, Some(&shared)), logprior.eval(t, Some(&shared))) {
        (Ok(a), Ok(b)) => a + b,
        _ => f64::NAN,
    };
    let spec = ModelSpec::new("custom", descriptors, n, kernel)
        .map_err(|e| CliError::model_file(e.code(), e.to_string()))?
        .with_proper_prior(proper);
    Ok(LoadedModel { path: PathBuf::new(), spec, alternative: None, family: None, hyper: BTreeMap::new(), data })
}

/// `real`, `positive`, `unit` and `simplex` or `simplex:<block>`.
fn parse_domain(text: &str) -> CliResult<Domain> {
    Ok(match text.trim() {
        "real" => Domain::Real,
        "positive" => Domain::Positive,
        "unit" | "unit-interval" => Domain::UnitInterval,
        "simplex" => Domain::Simplex { block: 0 },
        other => match other.strip_prefix("simplex:").map(|b| b.trim().parse::<usize>()) {
            Some(Ok(block)) => Domain::Simplex { block },
            _ => return Err(CliError::model_file("UnknownDomain", format!("unknown domain `{other}`"))),
        },
    })
}

fn number(key: &str, v: &Value) -> CliResult<f64> {
    match v {
        Value::Integer(i) => Ok(*i as f64),
        Value::Float(f) => Ok(*f),
        _ => Err(CliError::model_file("InvalidValue", format!("`{key}` must be a number"))),
    }
}

fn parse_data_value(v: &Value, base_dir: &Path) -> CliResult<Vec<f64>> {
    match v {
        Value::Array(items) => items.iter().map(|x| number("data", x)).collect(),
        Value::String(s) => s
            .split(',')
            .map(|t| t.trim())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>().map_err(|_| CliError::model_file("InvalidData", format!("`{t}` is not a number"))))
            .collect(),
        Value::Table(t) => {
            if let Some(k) = t.keys().find(|k| k.as_str() != "file") {
                return Err(CliError::model_file("UnknownKey", format!("`data.{k}` is not a recognised key")));
            }
            match t.get("file") {
                Some(Value::String(f)) => read_data_file(&base_dir.join(f)),
                _ => Err(CliError::model_file("InvalidValue", "`data.file` must be a path")),
            }
        }
        _ => Err(CliError::model_file("InvalidValue", "`data` must be an array, a string or a table")),
    }
}

/// One number per line; `#` starts a comment, blank lines are skipped.
pub fn read_data_file(path: &Path) -> CliResult<Vec<f64>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::model_file("Unreadable", format!("{}: {e}", path.display())))?;
    parse_data(&text).map_err(|(line, t)| {
        CliError::model_file("InvalidData", format!("{}:{line}: `{t}` is not a number", path.display()))
    })
}

fn parse_data(text: &str) -> Result<Vec<f64>, (usize, String)> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        match body.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            _ => return Err((i + 1, body.to_string())),
        }
    }
    Ok(out)
}
