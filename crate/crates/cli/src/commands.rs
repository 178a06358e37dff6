use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::time::Instant;

use laplace_core::exprlang::{parse_expression, Expr};
use laplace_core::laplace::{bayes_factor, mixture_select, posterior_from_log_marginals};
use laplace_core::montecarlo::{importance_expectation_with, posterior_mode_estimate, McOptions};
use laplace_core::{DensityGrid, GFunction, Laplace, LaplaceOptions, MomentReport};
use serde_json::{json, Map, Value};

use crate::args::{
    BayesFactorArgs, Cli, CompareArgs, DensityArgs, MarginalArgs, MethodArg, MixtureArgs, ModelPosteriorArgs, MomentsArgs,
};
use crate::error::{CliError, CliResult};
use crate::modelfile::{load_model, read_data_file, LoadedModel};
use crate::oracle::{parameter_moments, two_treatment_bayes_factor, Exact};
use crate::report::{full, num, nums, Report};

/// What a subcommand produced.
pub struct Output {
    pub report: Report,
    /// Human-readable table printed above the report in text mode.
    pub table: Option<String>,
    /// Density grid for the CSV writer, with its destination.
    pub grid: Option<(DensityGrid, Option<PathBuf>)>,
}

impl Output {
    fn report(report: Report) -> Self {
        Self { report, table: None, grid: None }
    }
}

/// `g` as typed on the command line. A bare parameter name becomes a
/// coordinate projection and a number a constant, so both keep their exact
/// derivatives; anything else is evaluated by the expression interpreter.
pub fn build_g(text: &str, model: &LoadedModel) -> CliResult<GFunction> {
    let expr = parse_expression(text).map_err(|e| CliError::Usage { code: e.code(), message: format!("--g: {e}") })?;
    let names = model.parameter_names();
    match &expr {
        Expr::Param(n) => {
            if let Some(i) = names.iter().position(|m| m == n) {
                return Ok(GFunction::coordinate(i, n.clone()));
            }
        }
        Expr::Number(c) => return Ok(GFunction::constant(*c)),
        _ => {}
    }
    let compiled = expr.compile(&names).map_err(|e| CliError::Usage { code: e.code(), message: format!("--g: {e}") })?;
    if expr.contains_sum() && model.data.is_empty() {
        return Err(CliError::Usage { code: "MissingData", message: "--g uses sum(...) but the model has no data".into() });
    }
    let data = model.data.clone();
    Ok(GFunction::new(text, move |t: &[f64]| compiled.eval(t, Some(&data)).unwrap_or(f64::NAN)))
}

fn exact_for(model: &LoadedModel, g: &str) -> Option<Exact> {
    match parse_expression(g).ok()? {
        Expr::Param(n) => parameter_moments(model, &n),
        _ => None,
    }
}

fn named(names: &[String], values: &[f64]) -> Value {
    let mut m = Map::new();
    for (n, v) in names.iter().zip(values) {
        m.insert(n.clone(), num(*v));
    }
    Value::Object(m)
}

fn relative_error(approx: f64, exact: f64) -> f64 {
    (approx / exact - 1.0).abs()
}

fn header(command: &str, model: &LoadedModel) -> Report {
    let mut r = Report::new(command);
    r.set("model", model.display_name()).set("label", model.spec.label());
    r
}

fn expectation(lap: &Laplace, g: &GFunction, method: MethodArg, shift: Option<f64>) -> CliResult<MomentReport> {
    Ok(match method.method() {
        None => lap.expectation_auto(g)?,
        Some(m) => lap.expectation_nonpositive(g, m, shift)?,
    })
}

pub fn moments(args: &MomentsArgs) -> CliResult<Output> {
    let start = Instant::now();
    let model = load_model(&args.model)?;
    let g = build_g(&args.g, &model)?;
    let lap = Laplace::new(&model.spec)?;
    let e = expectation(&lap, &g, args.method, args.shift)?;
    let sq = lap.expectation_auto(&g.product(&g))?;
    let variance = sq.expectation - e.expectation * e.expectation;
    let names = model.parameter_names();

    let mut warnings = e.warnings.clone();
    if variance < 0.0 {
        warnings.push(format!(
            "approximate variance is negative ({variance:e}); E(g^2) and E(g) were approximated separately"
        ));
    }
    let mut r = header("moments", &model);
    r.set("g", args.g.as_str())
        .set("method", e.method.name())
        .set_num("expectation", e.expectation)
        .set_num("variance", variance)
        .set("negative_variance", variance < 0.0)
        .set("posterior_mode", named(&names, &e.theta_hat_2))
        .set("numerator_minimizer", named(&names, &e.theta_hat_1))
        .set("iterations", json!({ "numerator": e.iterations.0, "denominator": e.iterations.1 }))
        .set("positive_definite", json!({ "numerator": e.positive_definite.0, "denominator": e.positive_definite.1 }));
    if let Some(c) = e.shift {
        r.set_num("shift", c);
    }
    if let Some(x) = exact_for(&model, &args.g) {
        let mut m = Map::new();
        m.insert("mean".into(), num(x.mean));
        m.insert("expectation_relative_error".into(), num(relative_error(e.expectation, x.mean)));
        if let Some(v) = x.variance {
            m.insert("variance".into(), num(v));
            m.insert("variance_relative_error".into(), num(relative_error(variance, v)));
        }
        r.set("exact", Value::Object(m));
    }
    r.set("warnings", warnings).set_num("elapsed_ms", start.elapsed().as_secs_f64() * 1e3);
    Ok(Output::report(r))
}

fn grid_report(r: &mut Report, grid: &DensityGrid, output: &Option<PathBuf>, json: bool) {
    r.set("normalization", grid.normalization.name())
        .set("points", grid.len())
        .set("valid_points", grid.valid.iter().filter(|v| **v).count())
        .set_num("mass", grid.mass())
        .set(
            "failures",
            grid.failures
                .iter()
                .map(|(i, why)| json!({ "index": i, "abscissa": num(grid.abscissae[*i]), "reason": why }))
                .collect::<Vec<_>>(),
        );
    match output {
        Some(p) => {
            r.set("output", p.display().to_string());
        }
        None if json => {
            r.set(
                "grid",
                json!({
                    "abscissa": nums(&grid.abscissae),
                    "density": nums(&grid.densities()),
                    "log_density": nums(&grid.log_densities),
                }),
            );
        }
        None => {}
    }
}

pub fn marginal(args: &MarginalArgs, json: bool) -> CliResult<Output> {
    let start = Instant::now();
    let model = load_model(&args.model)?;
    let lap = Laplace::new(&model.spec)?;
    let points = args.grid.map(|g| g.points());
    let grid = lap.marginal_density(&args.param, points.as_deref(), args.normalize)?;
    let mut r = header("marginal", &model);
    r.set("param", args.param.as_str());
    grid_report(&mut r, &grid, &args.output, json);
    r.set_num("elapsed_ms", start.elapsed().as_secs_f64() * 1e3);
    Ok(Output { report: r, table: None, grid: Some((grid, args.output.clone())) })
}

pub fn density(args: &DensityArgs, json: bool) -> CliResult<Output> {
    let start = Instant::now();
    let model = load_model(&args.model)?;
    let g = build_g(&args.g, &model)?;
    let lap = Laplace::new(&model.spec)?;
    let grid = lap.nonlinear_density(&g, Some(&args.grid.points()), args.normalize)?;
    let mut r = header("density", &model);
    r.set("g", args.g.as_str());
    grid_report(&mut r, &grid, &args.output, json);
    r.set_num("elapsed_ms", start.elapsed().as_secs_f64() * 1e3);
    Ok(Output { report: r, table: None, grid: Some((grid, args.output.clone())) })
}

pub fn bayes(args: &BayesFactorArgs) -> CliResult<Output> {
    let start = Instant::now();
    let first = load_model(&args.model)?;
    let (second_spec, second_name, exact) = match &args.model2 {
        Some(p) => {
            let m = load_model(p)?;
            (m.spec.clone(), m.display_name(), None)
        }
        None => match &first.alternative {
            Some(alt) => (alt.clone(), format!("{} (common rate)", first.display_name()), two_treatment_bayes_factor(&first)),
            None => return Err(CliError::usage("bayes-factor needs --model2 unless the model file describes two treatments")),
        },
    };
    let b = bayes_factor(&first.spec, &second_spec)?;
    let mut r = header("bayes-factor", &first);
    r.set("model2", second_name)
        .set("label2", second_spec.label())
        .set_num("log_b12", b.log_b12)
        .set_num("b12", b.bayes_factor())
        .set("log_marginals", nums(&[b.log_marginals.0, b.log_marginals.1]))
        .set("dims", json!([b.dims.0, b.dims.1]))
        .set_num("dim_correction", b.dim_correction)
        .set("log_det_sigmas", nums(&[b.log_det_sigmas.0, b.log_det_sigmas.1]))
        .set("minimizers", json!([nums(&b.minimizers.0), nums(&b.minimizers.1)]));
    if let Some(x) = exact {
        r.set("exact", json!({ "b12": num(x), "relative_error": num(relative_error(b.bayes_factor(), x)) }));
    }
    r.set_num("elapsed_ms", start.elapsed().as_secs_f64() * 1e3);
    Ok(Output::report(r))
}

pub fn model_posterior(args: &ModelPosteriorArgs) -> CliResult<Output> {
    let start = Instant::now();
    let models = args.models.iter().map(|p| load_model(p)).collect::<CliResult<Vec<_>>>()?;
    let priors = if args.priors.is_empty() {
        vec![1.0 / models.len() as f64; models.len()]
    } else if args.priors.len() == models.len() {
        args.priors.clone()
    } else {
        return Err(CliError::usage(format!("{} models but {} priors", models.len(), args.priors.len())));
    };
    let mut logs = Vec::with_capacity(models.len());
    for m in &models {
        logs.push(Laplace::new(&m.spec)?.log_marginal_likelihood()?.log_value);
    }
    let post = posterior_from_log_marginals(&logs, &priors)?;
    let mut r = Report::new("model-posterior");
    let rows: Vec<Value> = models
        .iter()
        .enumerate()
        .map(|(i, m)| {
            json!({
                "model": m.display_name(),
                "label": m.spec.label(),
                "log_marginal": num(logs[i]),
                "prior": num(priors[i]),
                "posterior": num(post[i]),
            })
        })
        .collect();
    r.set("models", rows).set("posterior", nums(&post)).set_num("elapsed_ms", start.elapsed().as_secs_f64() * 1e3);
    Ok(Output::report(r))
}

pub fn mixture(args: &MixtureArgs) -> CliResult<Output> {
    let start = Instant::now();
    let data = read_data_file(&args.data)?;
    let prior = (!args.priors.is_empty()).then_some(args.priors.as_slice());
    let s = mixture_select(&data, args.kmax as usize, prior, LaplaceOptions::default())?;
    let mut r = Report::new("mixture-select");
    let fits: Vec<Value> = s
        .fits
        .iter()
        .map(|f| {
            json!({
                "k": f.k,
                "weights": nums(&f.weights),
                "means": nums(&f.means),
                "variances": nums(&f.variances),
                "log_marginal": num(f.log_marginal),
                "log_laplace": num(f.log_laplace),
                "ordered": f.ordered,
                "iterations": f.iterations,
            })
        })
        .collect();
    r.set("data", args.data.display().to_string())
        .set("n", data.len())
        .set("kmax", args.kmax)
        .set("fits", fits)
        .set("failures", s.failures.iter().map(|(k, why)| json!({ "k": k, "reason": why })).collect::<Vec<_>>())
        .set("prior", nums(&s.prior))
        .set("posterior", nums(&s.posterior))
        .set("most_probable_k", s.most_probable())
        .set_num("elapsed_ms", start.elapsed().as_secs_f64() * 1e3);
    Ok(Output::report(r))
}

pub fn compare(args: &CompareArgs, cli: &Cli) -> CliResult<Output> {
    let start = Instant::now();
    let model = load_model(&args.model)?;
    let g = build_g(&args.g, &model)?;
    let lap = Laplace::new(&model.spec)?;
    let e = expectation(&lap, &g, args.method, None)?;
    let opts = McOptions { threads: cli.threads as usize, ..Default::default() };
    let mc = importance_expectation_with(&model.spec, &g, args.mc_samples, cli.seed, &opts)?;
    let mode = posterior_mode_estimate(&model.spec, &g)?;
    let exact = exact_for(&model, &args.g);
    let z = (e.expectation - mc.mean) / mc.standard_error;
    let within = (e.expectation - mc.mean).abs() <= 3.0 * mc.standard_error;

    let err = |v: f64| exact.map(|x| num(relative_error(v, x.mean))).unwrap_or(Value::Null);
    let mut r = header("compare", &model);
    r.set("g", args.g.as_str())
        .set(
            "laplace",
            json!({ "estimate": num(e.expectation), "method": e.method.name(), "relative_error": err(e.expectation) }),
        )
        .set(
            "monte_carlo",
            json!({
                "estimate": num(mc.mean),
                "standard_error": num(mc.standard_error),
                "effective_sample_size": num(mc.effective_sample_size),
                "samples": mc.n_samples,
                "seed": mc.seed,
                "relative_error": err(mc.mean),
            }),
        )
        .set("posterior_mode", json!({ "estimate": num(mode), "relative_error": err(mode) }));
    if let Some(x) = exact {
        r.set_num("exact", x.mean);
    }
    r.set_num("laplace_minus_mc_in_se", z).set("within_3se", within).set_num("elapsed_ms", start.elapsed().as_secs_f64() * 1e3);

    let mut table = String::new();
    let rel = |v: f64| exact.map_or_else(|| "-".to_string(), |x| format!("{:.3e}", relative_error(v, x.mean)));
    let _ = writeln!(table, "{:<16}{:<26}{:<14}{}", "method", "estimate", "std.error", "rel.error");
    let _ = writeln!(table, "{:<16}{:<26}{:<14}{}", "laplace", full(e.expectation), "-", rel(e.expectation));
    let _ = writeln!(table, "{:<16}{:<26}{:<14}{}", "monte-carlo", full(mc.mean), format!("{:.3e}", mc.standard_error), rel(mc.mean));
    let _ = writeln!(table, "{:<16}{:<26}{:<14}{}", "posterior-mode", full(mode), "-", rel(mode));
    if let Some(x) = exact {
        let _ = writeln!(table, "{:<16}{:<26}{:<14}{}", "exact", full(x.mean), "-", "-");
    }
    Ok(Output { report: r, table: Some(table), grid: None })
}

pub fn open_output(path: &PathBuf) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}
