#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use simplerules::data::{encode, load_csv, stratified_kfold, CsvOptions, Dataset, EncodingSpec};
use simplerules::error::{Error, ErrorKind, Result};
use simplerules::glm::{cv_select, LassoConfig};
use simplerules::metrics::{cv_sweep, SweepConfig, SweepModel};
use simplerules::noise::{estimate_gamma, theory_grid, WithinClassVariance};
use simplerules::pipeline::{run_pipeline, PipelineConfig};
use simplerules::policy::{write_estimates_csv, CaseSet, SensitivityParams, SurfaceConfig};
use simplerules::selection::SelectionConfig;
use simplerules::srr::{build_scorecard, SrrConfig};
use simplerules::synth::{bail_encoding, generate, GeneratorConfig, HiddenU};

/// Integer-weight scorecards and offline policy evaluation.
#[derive(Debug, Parser, Serialize)]
#[command(name = "simplerules", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
enum Command {
    /// Build a scorecard (select k features, lasso, round to [-M, M]).
    Train(TrainArgs),
    /// Cross-validated AUC/accuracy over a grid of k and M.
    Evaluate(EvaluateArgs),
    /// Estimate outcome rates of scorecard and risk-model policies.
    PolicyEval(PolicyArgs),
    /// Min/max policy estimates under a hidden-confounder grid.
    SensitivitySweep(SweepArgs),
    /// Closed-form AUC after additive score noise over a grid.
    TheoryCurve(TheoryArgs),
    /// Write a synthetic release-decision cohort.
    SynthGen(SynthArgs),
}

#[derive(Debug, Args, Serialize)]
struct DataArgs {
    /// Input CSV.
    #[arg(long)]
    input: PathBuf,
    /// Binary outcome column.
    #[arg(long)]
    label: String,
    /// Value of the label column treated as the positive class.
    #[arg(long)]
    positive: Option<String>,
    /// Column holding the observed decision (release/withhold).
    #[arg(long)]
    action_column: Option<String>,
    /// Column holding a decision-maker or other group id.
    #[arg(long)]
    group_column: Option<String>,
    /// Columns to drop.
    #[arg(long, value_delimiter = ',')]
    ignore: Vec<String>,
    /// Encoding JSON file, or `bail` for the built-in age/prior-FTA bins.
    #[arg(long)]
    encoding: Option<String>,
}

#[derive(Debug, Args, Serialize)]
struct RuleArgs {
    /// Feature budget.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Weight bound.
    #[arg(long = "M", default_value_t = 3)]
    m: u32,
    /// Select individual indicator columns instead of whole groups.
    #[arg(long)]
    per_indicator: bool,
    /// Penalty grid size.
    #[arg(long, default_value_t = 100)]
    n_lambda: usize,
}

impl RuleArgs {
    fn srr(&self) -> Result<SrrConfig> {
        if !(2..=1000).contains(&self.n_lambda) {
            return Err(Error::InvalidArgument(
                "--n-lambda must be in 2..=1000".into(),
            ));
        }
        Ok(SrrConfig {
            selection: SelectionConfig {
                grouped: !self.per_indicator,
                ..Default::default()
            },
            lasso: LassoConfig {
                n_lambda: self.n_lambda,
                ..Default::default()
            },
        })
    }
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    rule: RuleArgs,
    /// Release iff score < threshold.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// With an action column, also fit on withheld cases.
    #[arg(long)]
    all_actions: bool,
    /// Report the noise ratio of the card against the full-feature lasso.
    #[arg(long)]
    gamma: bool,
    /// Directory for scorecard.txt and scorecard.json.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9,10")]
    k_values: Vec<usize>,
    #[arg(long = "M-values", value_delimiter = ',', default_value = "1,2,3")]
    m_values: Vec<u32>,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    per_indicator: bool,
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct PolicyArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    rule: RuleArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Shift the construct/surface/evaluate roles by this many folds.
    #[arg(long, default_value_t = 0)]
    rotate: usize,
    #[arg(long, default_value_t = 10)]
    inner_folds: usize,
    /// Thresholds of the full-feature risk policy.
    #[arg(long, default_value_t = 20)]
    risk_points: usize,
    /// Also report exact values from oracle columns when present.
    #[arg(long)]
    oracle: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
enum Regime {
    /// alpha = log 2, shifts in {-log 2, 0, log 2}, p_u in 0.1..0.9.
    Moderate,
    /// alpha = log 3, shifts in {-log 3, 0, log 3}, p_u in 0.1..0.9.
    Extreme,
}

#[derive(Debug, Args, Serialize)]
struct SweepArgs {
    #[command(flatten)]
    policy: PolicyArgs,
    #[arg(long, value_enum, default_values_t = vec![Regime::Moderate, Regime::Extreme])]
    regime: Vec<Regime>,
}

#[derive(Debug, Args, Serialize)]
struct TheoryArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.6,0.7,0.8,0.9,0.95")]
    auc_values: Vec<f64>,
    /// Gamma grid from 0 to this value.
    #[arg(long, default_value_t = 2.0)]
    gamma_max: f64,
    #[arg(long, default_value_t = 41)]
    gamma_points: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    #[arg(long, default_value_t = 50_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    noise_features: usize,
    /// Hidden covariate as `p_u,alpha,delta_release,delta_withhold`.
    #[arg(long, value_delimiter = ',', num_args = 4)]
    hidden_u: Option<Vec<f64>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| io_err(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn io_err(p: &Path, e: io::Error) -> Error {
    simplerules::error::DataError::Io {
        path: p.display().to_string(),
        source: e,
    }
    .into()
}

fn header(out: &mut dyn Write, cfg: &impl Serialize) -> Result<()> {
    writeln!(out, "# config: {}", serde_json::to_string(cfg)?)
        .map_err(|e| io_err(Path::new("<output>"), e))
}

fn load(args: &DataArgs) -> Result<Dataset> {
    let mut opts = CsvOptions::new(args.label.clone());
    opts.action_column = args.action_column.clone();
    opts.group_column = args.group_column.clone();
    opts.positive_label = args.positive.clone();
    opts.ignore = args.ignore.clone();
    opts.read_oracle = true;
    let ds = load_csv(&args.input, &opts)?;
    let spec = match args.encoding.as_deref() {
        None => return Ok(ds),
        Some("bail") => bail_encoding(),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_err(Path::new(path), e))?;
            EncodingSpec::from_json(&text)?
        }
    };
    Ok(encode(&ds, &spec)?)
}

fn train(args: &TrainArgs) -> Result<()> {
    let mut ds = load(&args.data)?;
    if ds.actions().is_some() && !args.all_actions {
        ds = ds.restrict_to_action(simplerules::data::Action::Release)?;
    }
    let cfg = args.rule.srr()?;
    let folds = stratified_kfold(ds.labels(), args.folds, args.seed)?;
    let mut card = build_scorecard(&ds, args.rule.k, args.rule.m, &folds, &cfg)?;
    card.threshold = args.threshold;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| io_err(&args.out_dir, e))?;
    let table = card.render_table();
    let txt = args.out_dir.join("scorecard.txt");
    std::fs::write(&txt, &table).map_err(|e| io_err(&txt, e))?;
    let json = args.out_dir.join("scorecard.json");
    std::fs::write(&json, card.to_json()).map_err(|e| io_err(&json, e))?;
    print!("{table}");
    if args.gamma {
        let prov = card.provenance.as_ref().expect("built card");
        if prov.scale_factor > 0.0 {
            let full = cv_select(ds.x(), ds.labels(), &folds, &cfg.lasso)?;
            let true_scores = full
                .selected_fit()
                .expect("selection set")
                .linear_scores(ds.x())?;
            let simple = card.score_dataset(&ds)?;
            let m = estimate_gamma(
                &true_scores,
                &simple,
                prov.scale_factor,
                ds.labels(),
                WithinClassVariance::Unweighted,
            )?;
            println!(
                "noise ratio gamma = {:.4} (sigma = {:.4}, sigma_eps = {:.4})",
                m.gamma, m.sigma, m.sigma_eps
            );
        } else {
            println!("noise ratio undefined: every weight is zero");
        }
    }
    Ok(())
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let ds = load(&args.data)?;
    let folds = stratified_kfold(ds.labels(), args.folds, args.seed)?;
    let cfg = SweepConfig {
        srr: SrrConfig {
            selection: SelectionConfig {
                grouped: !args.per_indicator,
                ..Default::default()
            },
            ..Default::default()
        },
        seed: args.seed,
        ..Default::default()
    };
    let result = cv_sweep(&ds, &args.k_values, &args.m_values, &folds, &cfg)?;
    let mut out = output(args.out.as_deref())?;
    header(&mut out, args)?;
    result.write_csv(&mut out)?;
    if let Some(a) = result.mean_auc(SweepModel::FullLasso, None, None) {
        eprintln!("full-feature lasso mean AUC {a:.4}");
    }
    for e in result.errors() {
        eprintln!(
            "warning: {} k={:?} M={:?} fold {}: {}",
            e.model.as_str(),
            e.k,
            e.m,
            e.fold,
            e.error.as_deref().unwrap_or("")
        );
    }
    Ok(())
}

fn pipeline(args: &PolicyArgs) -> Result<(simplerules::pipeline::Pipeline, CaseSet)> {
    if args.data.action_column.is_none() {
        return Err(Error::InvalidArgument("--action-column is required".into()));
    }
    let cases = CaseSet::from_dataset(load(&args.data)?)?;
    let cfg = PipelineConfig {
        k: args.rule.k,
        m: args.rule.m,
        seed: args.seed,
        inner_folds: args.inner_folds,
        rotation: args.rotate,
        risk_model: args.risk_points > 0,
        released_only: true,
        srr: args.rule.srr()?,
        surface: SurfaceConfig::default(),
    };
    let p = run_pipeline(&cases, &cfg)?;
    if !p.leaked_rows().is_empty() {
        return Err(Error::Policy(
            "evaluation fold overlaps a fitting fold".into(),
        ));
    }
    Ok((p, cases))
}

fn roles_suffix(p: &simplerules::pipeline::Pipeline) -> String {
    format!(
        "{},{},{}",
        p.roles.construct, p.roles.surface, p.roles.evaluate
    )
}

fn policy_eval(args: &PolicyArgs) -> Result<()> {
    let (p, _) = pipeline(args)?;
    let mut rows = Vec::new();
    for c in p.candidates(args.risk_points)? {
        rows.push(p.estimate(&c)?);
        if args.oracle && p.evaluation.dataset().potential_outcomes().is_some() {
            rows.push(p.oracle(&c)?);
        }
    }
    for r in &mut rows {
        r.regime = "none".into();
    }
    let mut buf = Vec::new();
    write_estimates_csv(&rows, &mut buf)?;
    let mut out = output(args.out.as_deref())?;
    header(&mut out, args)?;
    // append fold provenance to every row
    let text = String::from_utf8(buf).expect("utf8 csv");
    let suffix = roles_suffix(&p);
    for (i, line) in text.lines().enumerate() {
        let extra = if i == 0 {
            "construct_fold,surface_fold,evaluate_fold".to_string()
        } else {
            suffix.clone()
        };
        writeln!(out, "{line},{extra}").map_err(|e| io_err(Path::new("<output>"), e))?;
    }
    eprint!("{}", p.scorecard.render_table());
    Ok(())
}

fn sensitivity(args: &SweepArgs) -> Result<()> {
    let (p, _) = pipeline(&args.policy)?;
    let mut out = output(args.policy.out.as_deref())?;
    header(&mut out, args)?;
    let werr = |e: io::Error| io_err(Path::new("<output>"), e);
    writeln!(out, "policy,threshold,action_rate,baseline,min,max,regime,construct_fold,surface_fold,evaluate_fold").map_err(werr)?;
    let suffix = roles_suffix(&p);
    for regime in &args.regime {
        let (name, grid) = match regime {
            Regime::Moderate => ("moderate", SensitivityParams::regime_moderate()),
            Regime::Extreme => ("extreme", SensitivityParams::regime_extreme()),
        };
        for c in p.candidates(args.policy.risk_points)? {
            let b = p.band(&c, &grid)?;
            writeln!(
                out,
                "{},{},{},{},{},{},{name},{suffix}",
                c.name, c.threshold, b.action_rate, b.baseline, b.min, b.max
            )
            .map_err(werr)?;
        }
    }
    Ok(())
}

fn theory(args: &TheoryArgs) -> Result<()> {
    if args.gamma_points < 2 || !(args.gamma_max > 0.0) {
        return Err(Error::InvalidArgument(
            "need --gamma-points >= 2 and --gamma-max > 0".into(),
        ));
    }
    let step = args.gamma_max / (args.gamma_points - 1) as f64;
    let gammas: Vec<f64> = (0..args.gamma_points).map(|i| i as f64 * step).collect();
    let grid = theory_grid(&args.auc_values, &gammas)?;
    let mut out = output(args.out.as_deref())?;
    header(&mut out, args)?;
    let werr = |e: io::Error| io_err(Path::new("<output>"), e);
    writeln!(out, "auc_y,gamma,auc_hat").map_err(werr)?;
    for (a, g, h) in grid {
        writeln!(out, "{a},{g},{h}").map_err(werr)?;
    }
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<()> {
    let hidden_u = args.hidden_u.as_ref().map(|v| HiddenU {
        p_u: v[0],
        alpha: v[1],
        delta_release: v[2],
        delta_withhold: v[3],
    });
    let cfg = GeneratorConfig {
        n: args.n,
        seed: args.seed,
        noise_features: args.noise_features,
        hidden_u,
        ..Default::default()
    };
    let cohort = generate(&cfg)?;
    let mut out = output(args.out.as_deref())?;
    header(&mut out, args)?;
    cohort.write_csv(&mut out)?;
    out.flush().map_err(|e| io_err(Path::new("<output>"), e))?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::PolicyEval(a) => policy_eval(a),
        Command::SensitivitySweep(a) => sensitivity(a),
        Command::TheoryCurve(a) => theory(a),
        Command::SynthGen(a) => synth(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(match e.kind() {
                ErrorKind::Usage => 2,
                ErrorKind::Data => 3,
                ErrorKind::Numerical => 4,
            })
        }
    }
}
