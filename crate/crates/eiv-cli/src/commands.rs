use serde::Serialize;
use std::path::Path;
use std::time::Instant;

use eiv::inference::{default_init, fit_mle, test_hypothesis, FitResult, TestOptions};
use eiv::likelihood::{observed_info, LikelihoodContext};
use eiv::linalg::sym_eigenvalues;
use eiv::montecarlo::{rejection_study, SimReport};
use eiv::skovgaard::TestResult;
use eiv::{DensityGenerator, EivError};

use crate::config::{parse_null_spec, ModelConfig, SimFile};
use crate::csv_in::{read_csv, to_dataset};
use crate::json_out::to_json_string;
use crate::manifest::RunManifest;
use crate::{table, CliError, EXIT_NUMERICAL};

#[derive(Serialize)]
struct CoordOut {
    group: usize,
    name: String,
    value: f64,
}

#[derive(Serialize)]
struct FitSummary {
    converged: bool,
    loglik: f64,
    grad_inf_norm: f64,
    iterations: usize,
    restarts_used: usize,
    parameters: Vec<CoordOut>,
}

#[derive(Serialize)]
struct InfoSummary {
    min_eigenvalue: f64,
    max_eigenvalue: f64,
}

#[derive(Serialize)]
struct FitDocument {
    manifest: RunManifest,
    fit: FitBody,
}

#[derive(Serialize)]
struct FitBody {
    #[serde(flatten)]
    summary: FitSummary,
    observed_information: Option<InfoSummary>,
}

fn fit_summary(ctx: &LikelihoodContext, fit: &FitResult) -> FitSummary {
    let spec = &ctx.spec;
    let s = spec.params_per_group();
    let parameters = (0..spec.p)
        .flat_map(|k| {
            let block = fit.theta.block(k).to_vec();
            (0..s).map(move |i| (k, i, block[i]))
        })
        .map(|(k, i, value)| CoordOut {
            group: k + 1,
            name: spec.coord_name(i),
            value,
        })
        .collect();
    FitSummary {
        converged: fit.converged,
        loglik: fit.loglik,
        grad_inf_norm: fit.grad_inf_norm,
        iterations: fit.iterations,
        restarts_used: fit.restarts_used,
        parameters,
    }
}

fn build_ctx(data_path: &Path, model_path: &Path) -> Result<LikelihoodContext, CliError> {
    let model_text = std::fs::read_to_string(model_path)
        .map_err(|e| CliError::input(format!("{}: {e}", model_path.display())))?;
    let model = ModelConfig::parse(&model_text)?;
    let loaded = read_csv(data_path, model.l, model.p)?;
    let spec = model.model_spec(loaded.group_sizes.clone())?;
    let dataset = to_dataset(&spec, &loaded)?;
    let family = model.family()?;
    let generator = DensityGenerator::from_family(family, model.l + 1, model.nu)
        .map_err(|e| CliError::input(e.to_string()))?;
    LikelihoodContext::new(spec, generator, dataset).map_err(|e| CliError::input(e.to_string()))
}

fn write_out(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::internal(format!("{}: {e}", path.display())))
}

pub fn cmd_fit(
    data_path: &Path,
    model_path: &Path,
    out_path: &Path,
    seed: u64,
) -> Result<u8, CliError> {
    let started = Instant::now();
    let ctx = build_ctx(data_path, model_path)?;
    let init = default_init(&ctx).map_err(|e| match e {
        EivError::Initialization(_) => CliError::input(e.to_string()),
        other => CliError::numerical(other.to_string()),
    })?;
    let fit = fit_mle(&ctx, &init, None, seed).map_err(|e| CliError::numerical(e.to_string()))?;

    let observed_information = observed_info(&ctx, &fit.theta).ok().map(|info| {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for block in info.blocks() {
            for e in sym_eigenvalues(block) {
                min = min.min(e);
                max = max.max(e);
            }
        }
        InfoSummary {
            min_eigenvalue: min,
            max_eigenvalue: max,
        }
    });

    let mut manifest = RunManifest::new("fit", &[data_path, model_path], seed)?;
    manifest.timings.wall_clock_secs = started.elapsed().as_secs_f64();
    let converged = fit.converged;
    let doc = FitDocument {
        manifest,
        fit: FitBody {
            summary: fit_summary(&ctx, &fit),
            observed_information,
        },
    };
    write_out(
        out_path,
        &to_json_string(&doc).map_err(|e| CliError::internal(e.to_string()))?,
    )?;
    Ok(if converged { 0 } else { EXIT_NUMERICAL })
}

#[derive(Serialize)]
struct TestDocument {
    manifest: RunManifest,
    test: TestBody,
}

#[derive(Serialize)]
struct TestBody {
    #[serde(flatten)]
    result: TestResult,
    full_fit: FitSummary,
    restricted_fit: FitSummary,
}

pub fn cmd_test(
    data_path: &Path,
    model_path: &Path,
    null_spec: &str,
    out_path: &Path,
    seed: u64,
) -> Result<u8, CliError> {
    let started = Instant::now();
    let ctx = build_ctx(data_path, model_path)?;
    let hypothesis = parse_null_spec(&ctx.spec, null_spec)?;
    let options = TestOptions {
        seed,
        ..TestOptions::default()
    };
    let output = test_hypothesis(&ctx, &hypothesis, &options).map_err(|e| match e {
        EivError::InvalidHypothesis(_) => CliError::input(e.to_string()),
        other => CliError::numerical(other.to_string()),
    })?;

    let mut manifest = RunManifest::new("test", &[data_path, model_path], seed)?;
    manifest.timings.wall_clock_secs = started.elapsed().as_secs_f64();
    let doc = TestDocument {
        manifest,
        test: TestBody {
            result: output.result,
            full_fit: fit_summary(&ctx, &output.full),
            restricted_fit: fit_summary(&ctx, &output.restricted),
        },
    };
    write_out(
        out_path,
        &to_json_string(&doc).map_err(|e| CliError::internal(e.to_string()))?,
    )?;
    Ok(0)
}

#[derive(Serialize)]
struct SimRowOut {
    n_k: usize,
    q: usize,
    #[serde(flatten)]
    report: SimReport,
}

#[derive(Serialize)]
struct SimDocument {
    manifest: RunManifest,
    report: SimBody,
}

#[derive(Serialize)]
struct SimBody {
    rows: Vec<SimRowOut>,
}

pub fn cmd_simulate(
    config_path: &Path,
    out_path: &Path,
    reps: Option<usize>,
    seed: Option<u64>,
    threads: Option<usize>,
) -> Result<u8, CliError> {
    let started = Instant::now();
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| CliError::input(format!("{}: {e}", config_path.display())))?;
    let file = SimFile::parse(&text)?;
    let rows = file.rows(reps, seed)?;
    let threads = threads
        .or_else(|| {
            std::env::var("EIV_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(0);

    let mut out_rows = Vec::with_capacity(rows.len());
    for row in &rows {
        let report = rejection_study(&row.config, threads)
            .map_err(|e| CliError::numerical(e.to_string()))?;
        out_rows.push(SimRowOut {
            n_k: row.n_k,
            q: row.q,
            report,
        });
    }

    let levels = rows
        .first()
        .map(|r| r.config.levels.clone())
        .unwrap_or_default();
    let table_rows: Vec<(usize, usize, &SimReport)> =
        out_rows.iter().map(|r| (r.n_k, r.q, &r.report)).collect();
    print!("{}", table::render(&table_rows, &levels));

    let effective_seed = seed.unwrap_or(file.study.seed);
    let mut manifest = RunManifest::new("simulate", &[config_path], effective_seed)?;
    manifest.timings.wall_clock_secs = started.elapsed().as_secs_f64();
    let doc = SimDocument {
        manifest,
        report: SimBody { rows: out_rows },
    };
    write_out(
        out_path,
        &to_json_string(&doc).map_err(|e| CliError::internal(e.to_string()))?,
    )?;
    Ok(0)
}
