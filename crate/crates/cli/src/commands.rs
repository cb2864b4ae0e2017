use std::path::{Path, PathBuf};

use clap::Args;
use pfregen::birthdeath::{
    compare_truncation, first_passage_constant, first_passage_scaled, BirthDeathParams, UpperBoundary,
};
use pfregen::exact::{check_abscissa_gap, largest_row_sum_state, taboo_decompose, DEFAULT_TOL};
use pfregen::graph::analyze_graph;
use pfregen::kernel::{
    estimate_kernel_pf, oracle_lambda, GaussianMixtureKernel, GridKernel, KernelConfig, UniformKillKernel,
};
use pfregen::matrix::NormalizationResult;
use pfregen::mc::{run_mc, with_threads, CiMethod, McConfig, DEFAULT_CI_LEVEL, DEFAULT_N_MAX};
use pfregen::minorize::{certify_minorization, certify_block_minorization, theta_gap_bound, MinorizationFailure, MinorizationCertificate};
use pfregen::twist::{doob_transform, uniqueness_probe, verify_power_limit, verify_stationarity};
use pfregen::{load_matrix, normalize, solve_exact, ExactOptions};
use serde_json::{json, Value};

use crate::report::{to_value, ErrorInfo, Timings};
use crate::{GlobalArgs, KernelChoice, Upper};

/// Largest state space for the dense verification passes.
const DENSE_LIMIT: usize = 200;

pub struct Outcome {
    pub config: Value,
    pub result: Value,
    pub diagnostics: Value,
}

pub struct Failure {
    pub config: Value,
    pub error: ErrorInfo,
}

type Run = Result<Outcome, Failure>;

fn finish(config: Value, body: Result<(Value, Value), ErrorInfo>) -> Run {
    match body {
        Ok((result, diagnostics)) => Ok(Outcome {
            config,
            result,
            diagnostics,
        }),
        Err(error) => Err(Failure { config, error }),
    }
}

/// JSON number, or a string for non-finite values.
fn extended(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        json!("nan")
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

fn load(path: &Path, timings: &mut Timings) -> Result<NormalizationResult, ErrorInfo> {
    timings.time("load", || {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ErrorInfo::usage("io", format!("{}: {e}", path.display())))?;
        Ok(normalize(&load_matrix(&text)?)?)
    })
}

fn check_state(z: Option<usize>, n: usize) -> Result<(), ErrorInfo> {
    match z {
        Some(z) if z >= n => Err(ErrorInfo::usage(
            "invalid_state",
            format!("state {z} out of range for {n} states"),
        )),
        _ => Ok(()),
    }
}

fn check_threads(threads: Option<usize>) -> Result<(), ErrorInfo> {
    if threads == Some(0) {
        return Err(ErrorInfo::usage("invalid_config", "threads must be positive"));
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub file: PathBuf,
    /// Terms of the power-limit error curve.
    #[arg(long, default_value_t = 50)]
    pub power_terms: usize,
    /// Random starting vectors for the uniqueness probe.
    #[arg(long, default_value_t = 10)]
    pub probe_trials: usize,
}

pub fn solve(a: &SolveArgs, g: &GlobalArgs, seed: u64, timings: &mut Timings) -> Run {
    let tol = g.tol.unwrap_or(DEFAULT_TOL);
    let config = json!({
        "file": a.file,
        "z": g.z,
        "tol": tol,
        "seed": seed,
        "threads": g.threads,
        "power_terms": a.power_terms,
        "probe_trials": a.probe_trials,
    });
    let body = (|| {
        check_threads(g.threads)?;
        let NormalizationResult { b, s } = load(&a.file, timings)?;
        check_state(g.z, b.n())?;
        with_threads(g.threads, || {
            let graph = timings.time("graph", || analyze_graph(&b));
            let sol = timings.time("solve", || solve_exact(&b, ExactOptions { z: g.z, tol }))?;
            let twist = timings.time("twist", || match doob_transform(&b, &sol) {
                Ok(tc) => json!({
                    "pi_star": tc.pi_star,
                    "stationarity_residual": verify_stationarity(&tc),
                    "normalizer": tc.normalizer,
                }),
                Err(e) => json!({ "error": e.to_string() }),
            });
            let dense = b.n() <= DENSE_LIMIT;
            let power_limit = if dense {
                timings.time("power_limit", || {
                    match verify_power_limit(&b, &sol, graph.period, a.power_terms) {
                        Ok(errors) => json!({ "period": graph.period, "errors": errors }),
                        Err(e) => json!({ "period": graph.period, "error": e.to_string() }),
                    }
                })
            } else {
                Value::Null
            };
            let uniqueness = if dense && a.probe_trials > 0 {
                to_value(&timings.time("uniqueness", || {
                    uniqueness_probe(&b, &sol, graph.period, a.probe_trials, seed)
                }))
            } else {
                Value::Null
            };
            let result = json!({
                "n": b.n(),
                "scale": s,
                "lambda_g": s * sol.lambda_star,
                "graph": graph,
                "solution": sol,
                "normalizer": sol.normalizer(),
                "twist": twist,
                "power_limit": power_limit,
                "uniqueness": uniqueness,
            });
            let diagnostics = json!({
                "h_residual": sol.h_residual,
                "eig_residuals": sol.eig_residuals,
                "bracket_collapsed": sol.bracket_collapsed,
            });
            Ok((result, diagnostics))
        })
    })();
    finish(config, body)
}

#[derive(Debug, Args)]
pub struct McArgs {
    pub file: PathBuf,
    /// Number of simulated regeneration cycles.
    #[arg(long, alias = "n-cycles", default_value_t = 100_000)]
    pub cycles: usize,
    /// Step cap per cycle.
    #[arg(long, default_value_t = DEFAULT_N_MAX)]
    pub n_max: usize,
    #[arg(long, default_value_t = DEFAULT_CI_LEVEL)]
    pub ci_level: f64,
    /// Percentile bootstrap with this many resamples instead of the delta method.
    #[arg(long)]
    pub bootstrap: Option<usize>,
    /// Paths per state for the eigenvector estimates; omitted skips them.
    #[arg(long)]
    pub u_paths: Option<usize>,
}

pub fn mc(a: &McArgs, g: &GlobalArgs, seed: u64, timings: &mut Timings) -> Run {
    let cfg = McConfig {
        seed,
        n_cycles: a.cycles,
        n_max: a.n_max,
        z_override: g.z,
        ci_level: a.ci_level,
        threads: g.threads,
        ci_method: a
            .bootstrap
            .map_or(CiMethod::Delta, |resamples| CiMethod::Bootstrap { resamples }),
        tol: g.tol.unwrap_or(DEFAULT_TOL),
        u_paths: a.u_paths,
    };
    let mut config = to_value(&cfg);
    config["file"] = json!(a.file);
    let body = (|| {
        cfg.validate()?;
        let NormalizationResult { b, s } = load(&a.file, timings)?;
        let rep = timings.time("simulate", || run_mc(&b, &cfg))?;
        let result = json!({
            "n": b.n(),
            "scale": s,
            "lambda_hat": rep.lambda_hat,
            "lambda_ci": rep.lambda_ci,
            "lambda_halfwidth": rep.lambda_halfwidth,
            "lambda_g": s * rep.lambda_hat,
            "lambda_g_ci": (s * rep.lambda_ci.0, s * rep.lambda_ci.1),
            "truncated_fraction": rep.truncated_fraction,
            "report": rep,
        });
        let diagnostics = json!({
            "n_survived": rep.n_survived,
            "n_truncated": rep.n_truncated,
            "mean_cycle_steps": rep.mean_cycle_steps,
        });
        Ok((result, diagnostics))
    })();
    finish(config, body)
}

#[derive(Debug, Args)]
pub struct ConditionsArgs {
    pub file: PathBuf,
    /// Largest block length tried for the minorization search.
    #[arg(long, default_value_t = 10)]
    pub m_max: usize,
}

fn certificate_value(r: &Result<MinorizationCertificate, MinorizationFailure>) -> Value {
    match r {
        Ok(c) => json!({ "holds": true, "certificate": c }),
        Err(f) => json!({ "holds": false, "failure": f, "message": f.to_string() }),
    }
}

pub fn conditions(a: &ConditionsArgs, g: &GlobalArgs, timings: &mut Timings) -> Run {
    let config = json!({
        "file": a.file,
        "z": g.z,
        "m_max": a.m_max,
        "threads": g.threads,
    });
    let body = (|| {
        check_threads(g.threads)?;
        if a.m_max == 0 {
            return Err(ErrorInfo::usage("invalid_config", "m_max must be positive"));
        }
        let NormalizationResult { b, s } = load(&a.file, timings)?;
        check_state(g.z, b.n())?;
        with_threads(g.threads, || {
            let graph = timings.time("graph", || analyze_graph(&b));
            let single = timings.time("minorization", || match g.z {
                Some(v) => certify_minorization(&b, v),
                None => certify_block_minorization(&b, 1),
            });
            let block = timings.time("block_minorization", || certify_block_minorization(&b, a.m_max));
            let z = g.z.unwrap_or_else(|| largest_row_sum_state(&b));
            let gap = if graph.irreducible {
                taboo_decompose(&b, z).ok().map(|td| check_abscissa_gap(&b, &td))
            } else {
                None
            };
            let bound = match (&gap, single.as_ref().or(block.as_ref())) {
                (Some(t), Ok(cert)) => extended(theta_gap_bound(cert, t.theta1)),
                _ => Value::Null,
            };
            let result = json!({
                "n": b.n(),
                "scale": s,
                "graph": graph,
                "minorization": certificate_value(&single),
                "block_minorization": certificate_value(&block),
                "abscissae": gap.as_ref().map(|t| json!({
                    "z": z,
                    "theta1": extended(t.theta1),
                    "theta2": extended(t.theta2),
                    "satisfied": t.satisfied,
                })),
                "theta2_lower_bound": bound,
            });
            Ok((result, json!({})))
        })
    })();
    finish(config, body)
}

#[derive(Debug, Args)]
pub struct BdArgs {
    /// Up-step probability.
    #[arg(long)]
    pub p: f64,
    /// Number of levels kept.
    #[arg(long = "L", alias = "levels", default_value_t = 2000)]
    pub levels: usize,
    #[arg(long, value_enum, default_value_t = Upper::Killed)]
    pub upper: Upper,
    /// Levels used for the eigenvector shape comparison.
    #[arg(long, default_value_t = 20)]
    pub shape_points: usize,
}

pub fn bd(a: &BdArgs, g: &GlobalArgs, timings: &mut Timings) -> Run {
    let config = json!({
        "p": a.p,
        "levels": a.levels,
        "upper": a.upper,
        "shape_points": a.shape_points,
        "threads": g.threads,
    });
    let body = (|| {
        check_threads(g.threads)?;
        let upper = match a.upper {
            Upper::Killed => UpperBoundary::Killed,
            Upper::Reflecting => UpperBoundary::Reflecting,
        };
        let params = BirthDeathParams::new(a.p, a.levels)?.with_upper(upper);
        let cmp = with_threads(g.threads, || timings.time("solve", || compare_truncation(&params, a.shape_points)))?;
        let passage: Vec<Value> = [10, 100, 500, 1000, 2000]
            .iter()
            .map(|&n| json!({ "n": n, "scaled_pmf": first_passage_scaled(a.p, n) }))
            .collect();
        let result = json!({
            "comparison": cmp,
            "first_passage": {
                "limit_constant": first_passage_constant(a.p),
                "scaled": passage,
            },
        });
        let diagnostics = json!({ "eig_residuals": cmp.eig_residuals });
        Ok((result, diagnostics))
    })();
    finish(config, body)
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    #[arg(long, value_enum, default_value_t = KernelChoice::Flagship)]
    pub kernel: KernelChoice,
    /// Number of simulated regeneration cycles.
    #[arg(long, default_value_t = 100_000)]
    pub cycles: usize,
    /// Cells of the discretized oracle.
    #[arg(long, default_value_t = 200)]
    pub grid: usize,
    /// Block cap per cycle.
    #[arg(long, default_value_t = DEFAULT_N_MAX)]
    pub n_max: usize,
    /// Paths per query point for the eigenfunction.
    #[arg(long, default_value_t = 10_000)]
    pub u_paths: usize,
    /// Bins of the eigenmeasure histogram.
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    /// Killing probability of the uniform kernel.
    #[arg(long, default_value_t = 0.2)]
    pub kill: f64,
    /// Block length of the uniform kernel.
    #[arg(long, default_value_t = 2)]
    pub block: usize,
}

fn run_kernel<K: GridKernel>(model: &K, a: &KernelArgs, cfg: &KernelConfig<f64>, timings: &mut Timings) -> Result<(Value, Value), ErrorInfo> {
    let est = timings.time("simulate", || estimate_kernel_pf(model, cfg))?;
    let oracle = timings.time("oracle", || oracle_lambda(model, a.grid))?;
    let (lo, hi) = model.domain();
    let within = (est.lambda_b - oracle).abs() <= 3.0 * est.lambda_b_halfwidth;
    let result = json!({
        "m": est.m,
        "lambda_b": est.lambda_b,
        "lambda_b_halfwidth": est.lambda_b_halfwidth,
        "lambda_b_ci": est.lambda_b_ci,
        "lambda_block": est.lambda_block,
        "theta_block": est.theta_block,
        "oracle_lambda": oracle,
        "oracle_grid": a.grid,
        "within_three_halfwidths": within,
        "constants": { "c1": est.c1, "c2": est.c2, "delta": est.delta },
        "coin_range": est.coin_range,
        "u": est.u,
        "eta": {
            "total_mass": est.eta.total,
            "histogram": { "lo": lo, "hi": hi, "mass": est.eta.histogram(lo, hi, a.bins) },
        },
    });
    let diagnostics = json!({
        "n_cycles": est.n_cycles,
        "n_survived": est.n_survived,
        "n_truncated": est.n_truncated,
        "mean_blocks": est.mean_blocks,
    });
    Ok((result, diagnostics))
}

pub fn kernel(a: &KernelArgs, g: &GlobalArgs, seed: u64, timings: &mut Timings) -> Run {
    let tol = g.tol.unwrap_or(DEFAULT_TOL);
    let query_points = vec![0.1, 0.5, 0.9];
    let config = json!({
        "kernel": a.kernel,
        "cycles": a.cycles,
        "seed": seed,
        "grid": a.grid,
        "n_max": a.n_max,
        "u_paths": a.u_paths,
        "bins": a.bins,
        "kill": a.kill,
        "block": a.block,
        "tol": tol,
        "threads": g.threads,
        "query_points": query_points,
    });
    let cfg = KernelConfig {
        seed,
        n_cycles: a.cycles,
        n_max: a.n_max,
        tol,
        threads: g.threads,
        query_points,
        u_paths: a.u_paths,
        ..KernelConfig::default()
    };
    let body = (|| {
        check_threads(g.threads)?;
        if a.bins == 0 {
            return Err(ErrorInfo::usage("invalid_config", "bins must be positive"));
        }
        match a.kernel {
            KernelChoice::Flagship => run_kernel(&GaussianMixtureKernel::default(), a, &cfg, timings),
            KernelChoice::Uniform => {
                if !(0.0..1.0).contains(&a.kill) || a.block == 0 {
                    return Err(ErrorInfo::usage(
                        "domain",
                        "kill must lie in [0, 1) and block must be positive",
                    ));
                }
                let model = UniformKillKernel { kill: a.kill, m: a.block };
                run_kernel(&model, a, &cfg, timings)
            }
        }
    })();
    finish(config, body)
}
