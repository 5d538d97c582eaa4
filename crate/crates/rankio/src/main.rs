//! Command-line front end for fitting mixing distributions, running
//! compound selections, tracing selection boundaries, Monte Carlo studies,
//! and the longitudinal ranking pipeline.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use rankio::{
    aggregate_window, assign_grades, fit_known_var_to_ghat, fit_panel_to_ghat, rank_units,
    read_ghat, read_known_var_csv, read_long_csv, read_panel_csv, transition_matrix, GradeScheme,
    RankReport, RankRule, RankioError, Result, RunManifest, Window,
};
use ranksel::mixture::KnownVarObs;
use ranksel::npmle::FitOptions;
use ranksel::posterior::{efron_morris, norm_cdf, post_mean_known_var, tail_prob_known_var};
use ranksel::selection::{
    boundary_curve_known_var, select, select_by_score, SelectionConfig, Tail,
};
use ranksel::simlab::{run_study, Dgp, Rule};

#[derive(Parser)]
#[command(
    name = "rankio",
    version,
    about = "Empirical Bayes ranking and selection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a mixing distribution from observations and write it as JSON.
    Fit(FitArgs),
    /// Select top units under capacity and false-discovery constraints.
    Select(SelectArgs),
    /// Trace the selection boundary t(sigma) for a fitted distribution.
    Boundary(BoundaryArgs),
    /// Run a Monte Carlo study of competing selection rules.
    Simulate(SimulateArgs),
    /// Rank units from longitudinal count data and assign grades.
    Rank(RankArgs),
    /// Estimate the grade transition matrix across consecutive windows.
    GradesTransitions(TransitionsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    KnownVar,
    Panel,
}

#[derive(Clone, Copy, ValueEnum)]
enum TailArg {
    Upper,
    Lower,
}

impl TailArg {
    fn to_tail(self) -> Tail {
        match self {
            TailArg::Upper => Tail::Upper,
            TailArg::Lower => Tail::Lower,
        }
    }

    fn name(self) -> &'static str {
        match self {
            TailArg::Upper => "upper",
            TailArg::Lower => "lower",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectRuleArg {
    Tp,
    Pm,
    Js,
    Em,
    Mle,
    Pval,
}

#[derive(Args)]
struct FitArgs {
    /// CSV with header `y,sigma` (known-var) or `ybar,s,t` (panel).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Number of candidate atoms per dimension.
    #[arg(long)]
    grid: Option<usize>,
    /// Smooth the fitted distribution with the default bandwidth.
    #[arg(long)]
    smooth: bool,
    /// Output path; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    /// CSV with header `y,sigma`.
    #[arg(long)]
    input: PathBuf,
    /// Fitted mixing distribution JSON.
    #[arg(long)]
    g: PathBuf,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, value_enum, default_value = "upper")]
    tail: TailArg,
    #[arg(long, value_enum, default_value = "tp")]
    rule: SelectRuleArg,
    /// Selection report JSON path; stdout when omitted.
    #[arg(long)]
    out_json: Option<PathBuf>,
    /// Per-unit CSV path.
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

#[derive(Args)]
struct BoundaryArgs {
    /// Fitted mixing distribution JSON.
    #[arg(long)]
    g: PathBuf,
    #[arg(long)]
    alpha: f64,
    /// Tail-probability level traced; defaults to the capacity-free 0.5.
    #[arg(long)]
    lambda: Option<f64>,
    /// Noise-scale grid `start:end:steps`.
    #[arg(long)]
    sigma_range: String,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// One of: student-t, discrete3, zeronull3, normal-normal, nix,
    /// bivariate, teacher-va.
    #[arg(long)]
    dgp: String,
    /// Degrees of freedom for the student-t process.
    #[arg(long, default_value_t = 3.0)]
    df: f64,
    /// Comma-separated rule names (see `simulate --help`), e.g. OTP,KWsTP.
    #[arg(long)]
    rules: String,
    /// Comma-separated capacity levels.
    #[arg(long)]
    alphas: String,
    /// Comma-separated false-discovery levels; `none` disables the constraint.
    #[arg(long)]
    gammas: String,
    #[arg(long)]
    reps: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct RankArgs {
    /// CSV with header `unit_id,period,observed,expected`.
    #[arg(long)]
    input: PathBuf,
    /// Inclusive period window, e.g. 2004:2006.
    #[arg(long)]
    window: String,
    /// Grade scheme: `default` or labels:proportions like `A,B,C:0.3,0.5,0.2`.
    #[arg(long, default_value = "default")]
    scheme: String,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, value_enum, default_value = "upper")]
    tail: TailArg,
    /// Ranking rule: TP, PM, MLE, Poisson-MLE, Pvalue, James-Stein, Efron-Morris.
    #[arg(long, default_value = "TP")]
    rule: String,
    /// Drop units missing any period inside the window.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    require_complete: bool,
    /// Smooth the fitted mixing distribution before scoring.
    #[arg(long)]
    smooth: bool,
    /// Output JSON path; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct TransitionsArgs {
    /// CSV with header `unit_id,period,observed,expected`.
    #[arg(long)]
    input: PathBuf,
    /// Comma-separated windows, e.g. 2004:2006,2007:2009.
    #[arg(long)]
    windows: String,
    #[arg(long, default_value = "default")]
    scheme: String,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    require_complete: bool,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Select(args) => cmd_select(args),
        Command::Boundary(args) => cmd_boundary(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Rank(args) => cmd_rank(args),
        Command::GradesTransitions(args) => cmd_transitions(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("rankio: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn write_out(path: &Option<PathBuf>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct WithManifest<T: Serialize> {
    manifest: RunManifest,
    #[serde(flatten)]
    payload: T,
}

fn to_pretty_json<T: Serialize>(manifest: RunManifest, payload: T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(&WithManifest { manifest, payload })?;
    text.push('\n');
    Ok(text)
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let manifest = RunManifest::new(
        "fit",
        None,
        json!({
            "input": args.input.display().to_string(),
            "grid": args.grid,
            "smooth": args.smooth,
        }),
    );
    let ghat = match args.model {
        ModelArg::KnownVar => {
            let opts = FitOptions {
                grid_points: args.grid.unwrap_or(FitOptions::default().grid_points),
                ..FitOptions::default()
            };
            let obs = read_known_var_csv(&args.input)?;
            fit_known_var_to_ghat(&obs, &opts, args.smooth)?
        }
        ModelArg::Panel => {
            if args.smooth {
                return Err(RankioError::Usage(
                    "--smooth applies to known-var fits only".into(),
                ));
            }
            let opts = FitOptions {
                grid_points: args.grid.unwrap_or(FitOptions::panel_default().grid_points),
                ..FitOptions::panel_default()
            };
            let obs = read_panel_csv(&args.input)?;
            fit_panel_to_ghat(&obs, &opts)?
        }
    };
    write_out(&args.output, &to_pretty_json(manifest, ghat)?)
}

#[derive(Serialize)]
struct SelectionRow {
    index: usize,
    y: f64,
    sigma: f64,
    score: f64,
    v: f64,
    selected: bool,
}

#[derive(Serialize)]
struct SelectionReport {
    rule: String,
    alpha: f64,
    gamma: Option<f64>,
    tail: String,
    theta_cutoff: f64,
    lambda_cap: f64,
    lambda_fdr: f64,
    lambda_star: f64,
    n_selected: usize,
    est_fdr: f64,
    rows: Vec<SelectionRow>,
}

fn cmd_select(args: SelectArgs) -> Result<()> {
    let obs = read_known_var_csv(&args.input)?;
    let g = read_ghat(&args.g)?.to_discrete()?;
    let cfg = SelectionConfig::new(args.alpha, args.gamma, args.tail.to_tail())?;
    let cutoff = match cfg.tail {
        Tail::Upper => g.upper_tail_cutoff(cfg.alpha)?,
        Tail::Lower => g.lower_tail_cutoff(cfg.alpha)?,
    };
    let v: Vec<f64> = obs
        .iter()
        .map(|o| match cfg.tail {
            Tail::Upper => tail_prob_known_var(o, &g, cutoff),
            Tail::Lower => ranksel::posterior::lower_tail_prob_known_var(o, &g, cutoff),
        })
        .collect();
    let orient = match cfg.tail {
        Tail::Upper => 1.0,
        Tail::Lower => -1.0,
    };
    let (rule_name, scores): (&str, Vec<f64>) = match args.rule {
        SelectRuleArg::Tp => ("tp", v.clone()),
        SelectRuleArg::Pm => (
            "pm",
            obs.iter()
                .map(|o| orient * post_mean_known_var(o, &g))
                .collect(),
        ),
        SelectRuleArg::Js => ("js", james_stein_scores(&obs, orient)?),
        SelectRuleArg::Em => (
            "em",
            efron_morris(&obs)?
                .into_iter()
                .map(|m| orient * m)
                .collect(),
        ),
        SelectRuleArg::Mle => ("mle", obs.iter().map(|o| orient * o.y()).collect()),
        SelectRuleArg::Pval => (
            "pval",
            obs.iter()
                .map(|o| norm_cdf(orient * (o.y() - cutoff) / o.sigma()))
                .collect(),
        ),
    };
    let result = if matches!(args.rule, SelectRuleArg::Tp) {
        select(&v, &cfg)?
    } else {
        select_by_score(&scores, &v, &cfg)?
    };
    let selected: std::collections::BTreeSet<usize> = result.selected.iter().copied().collect();
    let rows: Vec<SelectionRow> = obs
        .iter()
        .enumerate()
        .map(|(i, o)| SelectionRow {
            index: i,
            y: o.y(),
            sigma: o.sigma(),
            score: scores[i],
            v: v[i],
            selected: selected.contains(&i),
        })
        .collect();
    let report = SelectionReport {
        rule: rule_name.to_string(),
        alpha: cfg.alpha,
        gamma: cfg.gamma,
        tail: args.tail.name().to_string(),
        theta_cutoff: cutoff,
        lambda_cap: result.lambda_cap,
        lambda_fdr: result.lambda_fdr,
        lambda_star: result.lambda_star,
        n_selected: result.n_selected,
        est_fdr: result.est_fdr,
        rows,
    };
    if let Some(csv_path) = &args.out_csv {
        let mut w = csv::Writer::from_path(csv_path)
            .map_err(|e| RankioError::Data(format!("{}: {e}", csv_path.display())))?;
        for row in &report.rows {
            w.serialize(row)
                .map_err(|e| RankioError::Data(format!("{}: {e}", csv_path.display())))?;
        }
        w.flush()?;
    }
    let manifest = RunManifest::new(
        "select",
        None,
        json!({
            "input": args.input.display().to_string(),
            "g": args.g.display().to_string(),
            "alpha": args.alpha,
            "gamma": args.gamma,
            "tail": args.tail.name(),
            "rule": rule_name,
        }),
    );
    write_out(&args.out_json, &to_pretty_json(manifest, report)?)
}

fn james_stein_scores(obs: &[KnownVarObs], orient: f64) -> Result<Vec<f64>> {
    let n = obs.len() as f64;
    if obs.len() <= 3 {
        return Err(RankioError::Data("shrinkage needs more than 3 rows".into()));
    }
    let mu = obs.iter().map(|o| o.y()).sum::<f64>() / n;
    let ss: f64 = obs.iter().map(|o| (o.y() - mu).powi(2)).sum();
    let s2bar = obs.iter().map(|o| o.sigma() * o.sigma()).sum::<f64>() / n;
    let shrink = if ss > 0.0 {
        (1.0 - (n - 3.0) * s2bar / ss).max(0.0)
    } else {
        0.0
    };
    Ok(obs
        .iter()
        .map(|o| orient * (mu + shrink * (o.y() - mu)))
        .collect())
}

fn parse_sigma_range(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(RankioError::Usage(format!(
            "--sigma-range '{text}' is not start:end:steps"
        )));
    }
    let lo: f64 = parts[0]
        .parse()
        .map_err(|_| RankioError::Usage(format!("bad sigma start '{}'", parts[0])))?;
    let hi: f64 = parts[1]
        .parse()
        .map_err(|_| RankioError::Usage(format!("bad sigma end '{}'", parts[1])))?;
    let steps: usize = parts[2]
        .parse()
        .map_err(|_| RankioError::Usage(format!("bad sigma step count '{}'", parts[2])))?;
    if lo.is_nan() || lo <= 0.0 || hi < lo || steps < 2 {
        return Err(RankioError::Usage(format!(
            "--sigma-range '{text}' must satisfy 0 < start <= end, steps >= 2"
        )));
    }
    let step = (hi - lo) / (steps - 1) as f64;
    Ok((0..steps).map(|i| lo + step * i as f64).collect())
}

fn cmd_boundary(args: BoundaryArgs) -> Result<()> {
    // Validate option shapes before touching the filesystem so malformed
    // flags report as usage errors.
    let sigmas = parse_sigma_range(&args.sigma_range)?;
    let lambda = args.lambda.unwrap_or(0.5);
    let g = read_ghat(&args.g)?.to_discrete()?;
    let points = boundary_curve_known_var(&g, args.alpha, lambda, &sigmas)?;
    let mut out = String::from("sigma,t,finite\n");
    for p in &points {
        out.push_str(&format!("{},{},{}\n", p.sigma, p.t, p.finite));
    }
    let manifest = RunManifest::new(
        "boundary",
        None,
        json!({
            "g": args.g.display().to_string(),
            "alpha": args.alpha,
            "lambda": lambda,
            "sigma_range": args.sigma_range,
        }),
    );
    // CSV payload plus a manifest comment header for provenance.
    let manifest_line = format!("# {}\n", serde_json::to_string(&manifest)?);
    write_out(&args.output, &(manifest_line + &out))
}

fn parse_dgp(name: &str, df: f64) -> Result<Dgp> {
    let dgp = match name.to_ascii_lowercase().as_str() {
        "student-t" | "studentt" => Dgp::StudentT {
            df,
            grid_points: 401,
        },
        "discrete3" => Dgp::Discrete3,
        "zeronull3" => Dgp::ZeroNull3,
        "normal-normal" | "normalnormal" => Dgp::NormalNormal {
            sigma_theta_sq: 1.0,
            sigma_lo: 0.5,
            sigma_hi: 1.5,
        },
        "nix" => Dgp::Nix {
            hyper: ranksel::posterior::NixHyper::new(0.0, 1.0, 6.0, 1.0)
                .map_err(RankioError::from)?,
            t_count: 9,
        },
        "bivariate" => Dgp::BivariateDiscrete { t_count: 9 },
        "teacher-va" | "teacherva" => Dgp::TeacherVa,
        other => {
            return Err(RankioError::Usage(format!(
                "unknown data-generating process '{other}'"
            )))
        }
    };
    Ok(dgp)
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let dgp = parse_dgp(&args.dgp, args.df)?;
    let rules: Vec<Rule> = args
        .rules
        .split(',')
        .map(|r| Rule::from_name(r.trim()).map_err(|e| RankioError::Usage(e.to_string())))
        .collect::<Result<_>>()?;
    let alphas: Vec<f64> = args
        .alphas
        .split(',')
        .map(|a| {
            a.trim()
                .parse()
                .map_err(|_| RankioError::Usage(format!("bad alpha '{a}'")))
        })
        .collect::<Result<_>>()?;
    let gammas: Vec<Option<f64>> = args
        .gammas
        .split(',')
        .map(|g| {
            let g = g.trim();
            if g.eq_ignore_ascii_case("none") {
                Ok(None)
            } else {
                g.parse()
                    .map(Some)
                    .map_err(|_| RankioError::Usage(format!("bad gamma '{g}'")))
            }
        })
        .collect::<Result<_>>()?;
    let rows = run_study(
        &dgp,
        &rules,
        &alphas,
        &gammas,
        args.reps,
        args.n,
        args.seed,
        &FitOptions::study_default(),
    )?;
    let manifest = RunManifest::new(
        "simulate",
        Some(args.seed),
        json!({
            "dgp": args.dgp,
            "df": args.df,
            "rules": args.rules,
            "alphas": args.alphas,
            "gammas": args.gammas,
            "reps": args.reps,
            "n": args.n,
        }),
    );
    let mut out = format!("# {}\n", serde_json::to_string(&manifest)?);
    out.push_str("rule,alpha,gamma,power,fdr,sel_prop,se_power,se_fdr,replications\n");
    for r in &rows {
        let gamma = r.gamma.map_or("none".to_string(), |g| g.to_string());
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.rule,
            r.alpha,
            gamma,
            r.power,
            r.fdr,
            r.sel_prop,
            r.se_power,
            r.se_fdr,
            r.replications
        ));
    }
    write_out(&args.output, &out)
}

fn parse_scheme(text: &str) -> Result<GradeScheme> {
    if text == "default" {
        return Ok(GradeScheme::default());
    }
    let (labels, props) = text
        .split_once(':')
        .ok_or_else(|| RankioError::Usage(format!("scheme '{text}' is not labels:proportions")))?;
    let labels: Vec<String> = labels.split(',').map(|l| l.trim().to_string()).collect();
    let proportions: Vec<f64> = props
        .split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| RankioError::Usage(format!("bad proportion '{p}'")))
        })
        .collect::<Result<_>>()?;
    let scheme = GradeScheme {
        labels,
        proportions,
    };
    scheme.validate()?;
    Ok(scheme)
}

#[derive(Serialize)]
struct RankOutput {
    window: Window,
    dropped_units: usize,
    report: RankReport,
    grades: Vec<(String, String)>,
}

fn ranked_ids(report: &RankReport) -> Vec<String> {
    report.units.iter().map(|u| u.unit_id.clone()).collect()
}

fn cmd_rank(args: RankArgs) -> Result<()> {
    let window = Window::parse(&args.window)?;
    let scheme = parse_scheme(&args.scheme)?;
    let rule = RankRule::from_name(&args.rule)?;
    let records = read_long_csv(&args.input)?;
    let agg = aggregate_window(&records, window, args.require_complete)?;
    let cfg = SelectionConfig::new(args.alpha, args.gamma, args.tail.to_tail())?;
    let report = rank_units(&agg.stats, rule, &cfg, &FitOptions::default(), args.smooth)?;
    let grades = assign_grades(&ranked_ids(&report), &scheme)?;
    let manifest = RunManifest::new(
        "rank",
        None,
        json!({
            "input": args.input.display().to_string(),
            "window": args.window,
            "scheme": args.scheme,
            "alpha": args.alpha,
            "gamma": args.gamma,
            "tail": args.tail.name(),
            "rule": rule.name(),
            "require_complete": args.require_complete,
            "smooth": args.smooth,
        }),
    );
    let output = RankOutput {
        window,
        dropped_units: agg.dropped_units,
        report,
        grades,
    };
    write_out(&args.output, &to_pretty_json(manifest, output)?)
}

fn parse_windows(text: &str) -> Result<Vec<Window>> {
    let windows: Vec<Window> = text
        .split(',')
        .map(|w| Window::parse(w.trim()))
        .collect::<Result<_>>()?;
    if windows.len() < 2 {
        return Err(RankioError::Usage(
            "transitions need at least two windows".into(),
        ));
    }
    Ok(windows)
}

fn cmd_transitions(args: TransitionsArgs) -> Result<()> {
    let windows = parse_windows(&args.windows)?;
    let scheme = parse_scheme(&args.scheme)?;
    let records = read_long_csv(&args.input)?;
    let cfg = SelectionConfig::new(0.1, None, Tail::Upper)?;
    // Grade every window independently, then track units present in all of
    // them.
    let mut per_window: Vec<std::collections::BTreeMap<String, String>> = Vec::new();
    for window in &windows {
        let agg = aggregate_window(&records, *window, args.require_complete)?;
        let report = rank_units(
            &agg.stats,
            RankRule::Tp,
            &cfg,
            &FitOptions::study_default(),
            false,
        )?;
        let grades = assign_grades(&ranked_ids(&report), &scheme)?;
        per_window.push(grades.into_iter().collect());
    }
    let mut histories: Vec<Vec<String>> = Vec::new();
    for unit in per_window[0].keys() {
        let mut h = Vec::with_capacity(per_window.len());
        for w in &per_window {
            match w.get(unit) {
                Some(label) => h.push(label.clone()),
                None => break,
            }
        }
        if h.len() == per_window.len() {
            histories.push(h);
        }
    }
    let tm = transition_matrix(&histories, &scheme.labels)?;
    let manifest = RunManifest::new(
        "grades-transitions",
        None,
        json!({
            "input": args.input.display().to_string(),
            "windows": args.windows,
            "scheme": args.scheme,
            "require_complete": args.require_complete,
            "units_tracked": histories.len(),
        }),
    );
    let mut out = format!("# {}\n", serde_json::to_string(&manifest)?);
    out.push_str("from");
    for l in &tm.labels {
        out.push_str(&format!(",{l}"));
    }
    out.push_str(",uniform_fallback\n");
    for (i, label) in tm.labels.iter().enumerate() {
        out.push_str(label);
        for x in &tm.rows[i] {
            out.push_str(&format!(",{x}"));
        }
        out.push_str(&format!(",{}\n", tm.uniform_rows[i]));
    }
    write_out(&args.output, &out)
}
