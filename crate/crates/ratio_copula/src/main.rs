//! Command-line front end: fit, eval, sample, gen, diagnose.
//!
//! Data output goes to stdout or `--out`; diagnostics and the resolved
//! configuration go to stderr so pipelines can consume the CSV cleanly.
//! Exit codes: 2 I/O or format error, 3 invalid input, 4 numerical failure.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ratio_copula::baselines::{GaussianCopula, GaussianKdeCopula};
use ratio_copula::classifier::{MlpSpec, ModelSpec, PolyLogisticSpec, TrainConfig};
use ratio_copula::error::Error;
use ratio_copula::estimator::{fit_ratio_copula, GuideChoice, RatioCopula};
use ratio_copula::gaussian::{estimate_correlation, kl_gaussian_copula, CorrelationMatrix};
use ratio_copula::io::{
    format_float, read_csv_path, read_pgm_path, write_data_csv, write_metrics_csv,
};
use ratio_copula::marginals::{
    fit_marginals, pseudo_to_latent, to_pseudo, DataMatrix, PseudoObs,
};
use ratio_copula::metrics::{
    avg_loglik, gen_gaussian_copula, gen_gaussian_mixture_copula, gen_image_copula,
};
use ratio_copula::sampling::{sample_copula, sample_data, HmcConfig};

#[derive(Parser)]
#[command(
    name = "ratio-copula",
    about = "Classification-based copula density estimation",
    version
)]
struct Cli {
    /// Optional `key = value` config file; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a ratio copula to a CSV dataset.
    Fit(FitArgs),
    /// Evaluate average copula log-likelihood on a test CSV.
    Eval(EvalArgs),
    /// Draw samples from a fitted model via HMC.
    Sample(SampleArgs),
    /// Generate synthetic copula datasets.
    Gen(GenArgs),
    /// Report latent-correlation diagnostics for a dataset.
    Diagnose(DiagnoseArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Training data CSV (rows = observations).
    data: PathBuf,
    /// Guide mode: auto, plain, or guided.
    #[arg(long)]
    guide: Option<String>,
    /// Model family: mlp or poly.
    #[arg(long)]
    model: Option<String>,
    /// Polynomial degree (poly model).
    #[arg(long)]
    degree: Option<usize>,
    /// Hidden widths, comma separated (mlp model).
    #[arg(long)]
    widths: Option<String>,
    /// Noise-to-data ratio nu.
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Adam step size.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output model file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Fitted model file (omit when using --baseline).
    model: Option<PathBuf>,
    /// Test data CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Evaluate an analytic baseline instead of a model: gaussian or kde.
    #[arg(long)]
    baseline: Option<String>,
    /// Treat the input as pseudo-observations already in (0,1).
    #[arg(long)]
    pseudo: bool,
    /// Output CSV for per-row log-densities.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    /// Fitted model file.
    model: PathBuf,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_name = "STEP")]
    hmc_step: Option<f64>,
    #[arg(long)]
    leapfrog: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output scale: pseudo or data.
    #[arg(long)]
    scale: Option<String>,
    /// Thinned single-chain mode: emit every K-th state.
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// Generator kind: gauss, mixture, or image.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dim: Option<usize>,
    /// Equicorrelation for kind=gauss.
    #[arg(long, allow_negative_numbers = true)]
    rho: Option<f64>,
    /// Component correlations for kind=mixture.
    #[arg(long, allow_negative_numbers = true)]
    rho1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    rho2: Option<f64>,
    /// PGM image path for kind=image.
    #[arg(long)]
    image: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// Data CSV to diagnose.
    data: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let file_config = match load_config(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let result = match &cli.command {
        Command::Fit(a) => cmd_fit(a, &file_config),
        Command::Eval(a) => cmd_eval(a, &file_config),
        Command::Sample(a) => cmd_sample(a, &file_config),
        Command::Gen(a) => cmd_gen(a, &file_config),
        Command::Diagnose(a) => cmd_diagnose(a, &file_config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    let code = match e {
        Error::Io(_) | Error::Format(_) => 2,
        Error::Invalid(_) | Error::DimensionMismatch { .. } | Error::NonFinite { .. } => 3,
        Error::Numerical(_) => 4,
    };
    ExitCode::from(code)
}

type FileConfig = HashMap<String, String>;

fn load_config(path: Option<&Path>) -> Result<FileConfig, Error> {
    let mut map = HashMap::new();
    let Some(path) = path else { return Ok(map) };
    let text = std::fs::read_to_string(path)?;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::invalid(format!(
                "config line {}: expected `key = value`",
                lineno + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// Resolve one option: explicit flag wins, then the config file, then the
/// default. Consumed keys are removed so leftovers can be rejected.
fn resolve<T: std::str::FromStr>(
    flag: Option<T>,
    config: &mut FileConfig,
    key: &str,
    default: T,
) -> Result<T, Error> {
    if let Some(v) = flag {
        config.remove(key);
        return Ok(v);
    }
    match config.remove(key) {
        Some(raw) => raw
            .parse()
            .map_err(|_| Error::invalid(format!("config key {key}: cannot parse {raw:?}"))),
        None => Ok(default),
    }
}

fn reject_unknown(config: &FileConfig) -> Result<(), Error> {
    if let Some(key) = config.keys().next() {
        return Err(Error::invalid(format!("unknown config key {key:?}")));
    }
    Ok(())
}

fn log_config(entries: &[(&str, String)]) {
    for (k, v) in entries {
        eprintln!("config: {k} = {v}");
    }
}

fn write_out(out: Option<&Path>, body: &[u8]) -> Result<(), Error> {
    match out {
        Some(path) => {
            std::fs::write(path, body)?;
        }
        None => {
            std::io::stdout().write_all(body)?;
        }
    }
    Ok(())
}

fn cmd_fit(args: &FitArgs, file_config: &FileConfig) -> Result<(), Error> {
    let mut cfg = file_config.clone();
    let guide = resolve(args.guide.clone(), &mut cfg, "guide", "auto".to_string())?;
    let model = resolve(args.model.clone(), &mut cfg, "model", "mlp".to_string())?;
    let degree = resolve(args.degree, &mut cfg, "degree", 5)?;
    let widths = resolve(args.widths.clone(), &mut cfg, "widths", String::new())?;
    let nu = resolve(args.nu, &mut cfg, "nu", 10.0)?;
    let epochs = resolve(args.epochs, &mut cfg, "epochs", 500)?;
    let lr = resolve(args.lr, &mut cfg, "lr", 1e-3)?;
    let seed = resolve(args.seed, &mut cfg, "seed", 0)?;
    let out = match &args.out {
        Some(p) => Some(p.clone()),
        None => {
            cfg.remove("out").map(PathBuf::from)
        }
    };
    reject_unknown(&cfg)?;
    log_config(&[
        ("data", args.data.display().to_string()),
        ("guide", guide.clone()),
        ("model", model.clone()),
        ("degree", degree.to_string()),
        ("widths", widths.clone()),
        ("nu", nu.to_string()),
        ("epochs", epochs.to_string()),
        ("lr", lr.to_string()),
        ("seed", seed.to_string()),
        (
            "out",
            out.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "-".into()),
        ),
    ]);

    let guide_choice = match guide.as_str() {
        "auto" => GuideChoice::Auto,
        "plain" => GuideChoice::Plain,
        "guided" => GuideChoice::Guided,
        other => return Err(Error::invalid(format!("unknown guide mode {other:?}"))),
    };
    let data = read_csv_path(&args.data)?;
    let d = data.n_cols();
    let spec = match model.as_str() {
        "mlp" => {
            let mut spec = MlpSpec::default_for_dim(d);
            if !widths.is_empty() {
                let parsed: Result<Vec<usize>, _> =
                    widths.split(',').map(|w| w.trim().parse()).collect();
                let parsed = parsed
                    .map_err(|_| Error::invalid(format!("cannot parse widths {widths:?}")))?;
                spec.residual = vec![true; parsed.len()];
                spec.hidden_widths = parsed;
            }
            ModelSpec::Mlp(spec)
        }
        "poly" => ModelSpec::Poly(PolyLogisticSpec::new(d, degree, true)?),
        other => return Err(Error::invalid(format!("unknown model family {other:?}"))),
    };
    let train_cfg = TrainConfig { nu, epochs, learning_rate: lr, seed, ..Default::default() };
    let (copula, report) = fit_ratio_copula(&data, spec, &train_cfg, guide_choice)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(path) = &out {
        copula.save(path)?;
        eprintln!("model written to {}", path.display());
    }
    let mut body = Vec::new();
    write_metrics_csv(
        &mut body,
        &[
            ("z_estimate".into(), report.z_estimate),
            ("final_loss".into(), report.final_loss()),
            ("kl_exact".into(), report.kl_exact),
            ("kl_bound".into(), report.kl_bound),
            ("guided".into(), if report.guided { 1.0 } else { 0.0 }),
            ("epochs".into(), report.loss_trace.len() as f64),
            ("wall_time_secs".into(), report.wall_time_secs),
        ],
    )?;
    write_out(None, &body)
}

fn test_pseudo(data: &DataMatrix, pseudo_flag: bool, model: Option<&RatioCopula>) -> Result<PseudoObs, Error> {
    if pseudo_flag {
        PseudoObs::new(data.values().to_vec(), data.n_cols())
    } else {
        match model {
            Some(c) => to_pseudo(data, c.marginals()),
            None => {
                let marginals = fit_marginals(data)?;
                to_pseudo(data, &marginals)
            }
        }
    }
}

fn cmd_eval(args: &EvalArgs, file_config: &FileConfig) -> Result<(), Error> {
    let mut cfg = file_config.clone();
    let baseline = match &args.baseline {
        Some(b) => Some(b.clone()),
        None => cfg.remove("baseline"),
    };
    let data_path = match &args.data {
        Some(p) => p.clone(),
        None => cfg
            .remove("data")
            .map(PathBuf::from)
            .ok_or_else(|| Error::invalid("eval needs --data"))?,
    };
    let out = match &args.out {
        Some(p) => Some(p.clone()),
        None => cfg.remove("out").map(PathBuf::from),
    };
    reject_unknown(&cfg)?;
    log_config(&[
        (
            "model",
            args.model
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_else(|| "-".into()),
        ),
        ("data", data_path.display().to_string()),
        ("baseline", baseline.clone().unwrap_or_else(|| "-".into())),
        ("pseudo", args.pseudo.to_string()),
    ]);

    let data = read_csv_path(&data_path)?;
    let (logpdf, u): (Box<dyn Fn(&[f64]) -> ratio_copula::Result<f64>>, PseudoObs) =
        match (&baseline, &args.model) {
            (Some(kind), _) => {
                let u = test_pseudo(&data, args.pseudo, None)?;
                let latent = pseudo_to_latent(&u);
                match kind.as_str() {
                    "gaussian" => {
                        let sigma = estimate_correlation(&latent)?;
                        let gc = GaussianCopula::new(sigma);
                        (Box::new(move |row: &[f64]| gc.logpdf_row(row)), u)
                    }
                    "kde" => {
                        let kc = GaussianKdeCopula::fit(latent)?;
                        (Box::new(move |row: &[f64]| kc.logpdf_row(row)), u)
                    }
                    other => {
                        return Err(Error::invalid(format!("unknown baseline {other:?}")))
                    }
                }
            }
            (None, Some(model_path)) => {
                let c = RatioCopula::load(model_path)?;
                if c.dim() != data.n_cols() {
                    return Err(Error::DimensionMismatch {
                        expected: c.dim(),
                        found: data.n_cols(),
                    });
                }
                let u = test_pseudo(&data, args.pseudo, Some(&c))?;
                (Box::new(move |row: &[f64]| c.log_copula_pdf_row(row)), u)
            }
            (None, None) => {
                return Err(Error::invalid("eval needs a model file or --baseline"))
            }
        };

    let per_row: ratio_copula::Result<Vec<f64>> =
        (0..u.n_rows()).map(|i| logpdf(u.row(i))).collect();
    let per_row = per_row?;
    let ll = avg_loglik(|row| logpdf(row), &u)?;
    eprintln!("avg_loglik = {}", format_float(ll));

    let mut body = Vec::new();
    writeln!(body, "metric,value").map_err(Error::Io)?;
    writeln!(body, "avg_loglik,{}", format_float(ll)).map_err(Error::Io)?;
    for (i, v) in per_row.iter().enumerate() {
        writeln!(body, "log_density_{i},{}", format_float(*v)).map_err(Error::Io)?;
    }
    write_out(out.as_deref(), &body)
}

fn cmd_sample(args: &SampleArgs, file_config: &FileConfig) -> Result<(), Error> {
    let mut cfg = file_config.clone();
    let n = resolve(args.n, &mut cfg, "n", 1000)?;
    let step = resolve(args.hmc_step, &mut cfg, "hmc_step", 0.1)?;
    let leapfrog = resolve(args.leapfrog, &mut cfg, "leapfrog", 20)?;
    let burnin = resolve(args.burnin, &mut cfg, "burnin", 100)?;
    let seed = resolve(args.seed, &mut cfg, "seed", 0)?;
    let scale = resolve(args.scale.clone(), &mut cfg, "scale", "pseudo".to_string())?;
    let thin = match args.thin {
        Some(t) => Some(t),
        None => cfg
            .remove("thin")
            .map(|raw| {
                raw.parse::<usize>()
                    .map_err(|_| Error::invalid(format!("config key thin: cannot parse {raw:?}")))
            })
            .transpose()?,
    };
    let out = match &args.out {
        Some(p) => Some(p.clone()),
        None => cfg.remove("out").map(PathBuf::from),
    };
    reject_unknown(&cfg)?;
    log_config(&[
        ("model", args.model.display().to_string()),
        ("n", n.to_string()),
        ("hmc_step", step.to_string()),
        ("leapfrog", leapfrog.to_string()),
        ("burnin", burnin.to_string()),
        ("seed", seed.to_string()),
        ("scale", scale.clone()),
        ("thin", thin.map(|t| t.to_string()).unwrap_or_else(|| "-".into())),
    ]);

    let c = RatioCopula::load(&args.model)?;
    let hmc = HmcConfig {
        step_size: step,
        leapfrog_steps: leapfrog,
        burnin_iterations: burnin,
        seed,
        thin,
    };
    let mut body = Vec::new();
    let stats = match scale.as_str() {
        "pseudo" => {
            let (u, stats) = sample_copula(&c, n, &hmc)?;
            let names: Vec<String> = (0..c.dim()).map(|j| format!("u{j}")).collect();
            ratio_copula::io::write_csv(&mut body, &names, u.values(), c.dim())?;
            stats
        }
        "data" => {
            let (data, stats) = sample_data(&c, n, &hmc)?;
            write_data_csv(&mut body, &data)?;
            stats
        }
        other => return Err(Error::invalid(format!("unknown scale {other:?}"))),
    };
    for w in &stats.warnings {
        eprintln!("warning: {w}");
    }
    eprintln!(
        "acceptance_rate = {:.4}, divergences = {}",
        stats.acceptance_rate(),
        stats.divergences
    );
    write_out(out.as_deref(), &body)
}

fn equicorrelation(d: usize, rho: f64) -> Result<CorrelationMatrix, Error> {
    let mut sigma = vec![rho; d * d];
    for i in 0..d {
        sigma[i * d + i] = 1.0;
    }
    CorrelationMatrix::new(sigma, d)
        .map_err(|e| Error::invalid(format!("invalid correlation (rho = {rho}, d = {d}): {e}")))
}

fn cmd_gen(args: &GenArgs, file_config: &FileConfig) -> Result<(), Error> {
    let mut cfg = file_config.clone();
    let kind = resolve(args.kind.clone(), &mut cfg, "kind", "gauss".to_string())?;
    let n = resolve(args.n, &mut cfg, "n", 1000)?;
    let seed = resolve(args.seed, &mut cfg, "seed", 0)?;
    let dim = resolve(args.dim, &mut cfg, "dim", 2)?;
    let rho = resolve(args.rho, &mut cfg, "rho", 0.8)?;
    let rho1 = resolve(args.rho1, &mut cfg, "rho1", 0.8)?;
    let rho2 = resolve(args.rho2, &mut cfg, "rho2", -0.8)?;
    let image = match &args.image {
        Some(p) => Some(p.clone()),
        None => cfg.remove("image").map(PathBuf::from),
    };
    let out = match &args.out {
        Some(p) => Some(p.clone()),
        None => cfg.remove("out").map(PathBuf::from),
    };
    reject_unknown(&cfg)?;
    log_config(&[
        ("kind", kind.clone()),
        ("n", n.to_string()),
        ("seed", seed.to_string()),
        ("dim", dim.to_string()),
        ("rho", rho.to_string()),
        ("rho1", rho1.to_string()),
        ("rho2", rho2.to_string()),
        (
            "image",
            image.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "-".into()),
        ),
    ]);

    let u = match kind.as_str() {
        "gauss" => gen_gaussian_copula(n, &equicorrelation(dim, rho)?, seed),
        "mixture" => gen_gaussian_mixture_copula(
            n,
            &equicorrelation(dim, rho1)?,
            &equicorrelation(dim, rho2)?,
            seed,
        )?,
        "image" => {
            let path = image.ok_or_else(|| Error::invalid("kind=image needs --image"))?;
            let img = read_pgm_path(&path)?;
            gen_image_copula(&img, n, seed)?
        }
        other => return Err(Error::invalid(format!("unknown generator kind {other:?}"))),
    };
    let d = u.n_cols();
    let names: Vec<String> = (0..d).map(|j| format!("u{j}")).collect();
    let mut body = Vec::new();
    ratio_copula::io::write_csv(&mut body, &names, u.values(), d)?;
    write_out(out.as_deref(), &body)
}

fn cmd_diagnose(args: &DiagnoseArgs, file_config: &FileConfig) -> Result<(), Error> {
    let cfg = file_config.clone();
    reject_unknown(&cfg)?;
    log_config(&[("data", args.data.display().to_string())]);

    let data = read_csv_path(&args.data)?;
    let marginals = fit_marginals(&data)?;
    let pseudo = to_pseudo(&data, &marginals)?;
    let latent = pseudo_to_latent(&pseudo);
    let corr = estimate_correlation(&latent)?;
    let kl = kl_gaussian_copula(&corr);

    let mut rows: Vec<(String, f64)> = corr
        .eigenvalues()
        .iter()
        .enumerate()
        .map(|(i, &e)| (format!("eigenvalue_{i}"), e))
        .collect();
    rows.push(("kl_exact".into(), kl.exact_kl));
    rows.push(("kl_bound".into(), kl.bound));
    rows.push(("kl_warning".into(), if kl.bound > 20.0 { 1.0 } else { 0.0 }));
    if kl.bound > 20.0 {
        eprintln!(
            "warning: KL bound {:.1} nats exceeds the 20-nat threshold; \
             plain density-ratio estimation may fail",
            kl.bound
        );
    }
    let mut body = Vec::new();
    write_metrics_csv(&mut body, &rows)?;
    write_out(None, &body)
}
