use blbound::bounds::{
    lower_bound_global, lower_bound_localized, upper_bound_global, upper_bound_localized, upper_bound_variant,
    BoundReport, BoundValue,
};
use blbound::datum::{
    exponential_entropy, is_globally_critical, projector_reduction, total_acuity, LocalizedRegularizedDatum,
};
use blbound::lieb_oracle::{bl_limit, maximize_gaussian, OracleOptions, Schedule};
use blbound::linalg::Subspace;
use blbound::perceptivity::{beta_min_estimate, check_perceptivity, PerceptivityVerdict, SearchBudget};
use blbound::visual::{fit_slope, visual_check, PointCloud};

use crate::error::CliError;
use crate::input::{DatumFile, Overrides};
use crate::report::{key, num, nums, Layout, Report, Table};

/// A report and, when the requested quantity is infinite or a hypothesis
/// failed, the reason.
#[derive(Debug)]
pub struct Outcome {
    pub report: Report,
    pub failure: Option<String>,
}

impl Outcome {
    fn success(report: Report) -> Self {
        Self { report, failure: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Kind {
    Upper,
    UpperVariant,
    Lower,
    UpperLocalized,
    LowerLocalized,
}

impl Kind {
    fn is_upper(self) -> bool {
        matches!(self, Self::Upper | Self::UpperVariant | Self::UpperLocalized)
    }
}

fn budget(seed: u64) -> SearchBudget {
    SearchBudget { seed, ..SearchBudget::default() }
}

/// Library errors that express a failed precondition rather than bad input.
fn classify(e: blbound::Error) -> CliError {
    match e {
        blbound::Error::NotSurjective { .. } | blbound::Error::RankDeficient { .. } => CliError::Hypothesis(e.to_string()),
        other => CliError::Library(other),
    }
}

pub fn analyze(file: &DatumFile, seed: u64) -> Result<Outcome, CliError> {
    let datum = &file.datum;
    let (critical, defect) = is_globally_critical(datum);
    let acuity = total_acuity(datum);
    let entropy = exponential_entropy(datum);
    let distortion = match projector_reduction(datum) {
        Ok((_, u)) => Some(u),
        Err(blbound::Error::NotSurjective { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let (beta_min, witness) = beta_min_estimate(datum, &budget(seed))?;

    let mut report = Report::new(format!("datum analysis: {} maps on R^{}", datum.len(), datum.ambient_dim()));
    let mut maps = Table::new(["map", "dim", "weight", "singular values"], Layout::Aligned);
    for (j, (l, q)) in datum.maps().iter().zip(datum.weights()).enumerate() {
        maps.row([j.to_string(), l.rows().to_string(), num(*q), nums(l.singular_values())]);
    }
    report.table(maps);
    let distortion_text = distortion.map_or_else(|| "undefined (not surjective)".to_owned(), num);
    let mut summary = Table::new(["quantity", "value"], Layout::Aligned);
    summary.row(["ambient dimension".to_owned(), datum.ambient_dim().to_string()]);
    summary.row(["criticality defect".to_owned(), num(defect)]);
    summary.row(["globally critical".to_owned(), critical.to_string()]);
    summary.row(["acuity".to_owned(), num(acuity)]);
    summary.row(["exponential entropy".to_owned(), num(entropy)]);
    summary.row(["distortion".to_owned(), distortion_text.clone()]);
    summary.row(["beta_min estimate".to_owned(), format!("{} (witness of dimension {})", num(beta_min), witness.dim())]);
    report.table(summary);

    report.field("d", datum.ambient_dim().to_string());
    report.field("maps", datum.len().to_string());
    report.field("weights", nums(datum.weights()));
    for (j, l) in datum.maps().iter().enumerate() {
        report.field(format!("sigma_{j}"), nums(l.singular_values()));
    }
    report.field("defect", num(defect));
    report.field("critical", critical.to_string());
    report.field("acuity", num(acuity));
    report.field("entropy", num(entropy));
    report.field("distortion", distortion.map_or_else(|| "undefined".to_owned(), num));
    report.field("beta_min", num(beta_min));
    report.field("beta_min_witness_dim", witness.dim().to_string());
    if let Some(a) = &file.alphas {
        report.field("alphas", nums(a));
    }
    report.field("beta", num(file.beta.unwrap_or(beta_min)));
    Ok(Outcome::success(report))
}

pub struct BoundArgs {
    pub kind: Kind,
    pub alphas: Vec<f64>,
    pub beta: Option<f64>,
    pub w: Option<Subspace>,
    pub t: Option<f64>,
    pub eps: Option<f64>,
    pub force_unknown: bool,
    pub overrides: Overrides,
    pub seed: u64,
    pub sweep: Vec<f64>,
}

/// Thresholds from the command line, then the overrides, then the file; a
/// single value applies to every map.
fn resolve_alphas(cli: &[f64], overrides: &Overrides, file: &DatumFile) -> Result<Vec<f64>, CliError> {
    let n = file.datum.len();
    let raw = if !cli.is_empty() {
        cli.to_vec()
    } else if let Some(a) = overrides.alphas.as_ref().or(file.alphas.as_ref()) {
        a.clone()
    } else {
        return Err(CliError::Usage("no thresholds given: pass --alpha, --overrides or set alphas in the datum file".into()));
    };
    match raw.len() {
        1 => Ok(vec![raw[0]; n]),
        m if m == n => Ok(raw),
        m => Err(CliError::Usage(format!("expected 1 or {n} thresholds, got {m}"))),
    }
}

fn resolve_beta(cli: Option<f64>, overrides: &Overrides, file: &DatumFile) -> Result<f64, CliError> {
    let beta = cli.or(overrides.beta).or(file.beta).unwrap_or(0.0);
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(CliError::Usage(format!("beta must be finite and non-negative, got {beta}")));
    }
    Ok(beta)
}

fn localized(file: &DatumFile, t: Option<f64>, eps: Option<f64>) -> Result<LocalizedRegularizedDatum, CliError> {
    match (t, eps) {
        (Some(t), Some(eps)) => Ok(LocalizedRegularizedDatum::isotropic(file.datum.clone(), t, eps)?),
        (None, None) => file.localized().unwrap_or_else(|| {
            Err(CliError::Usage("upper-localized needs regs and loc in the datum file, or both --t and --eps".into()))
        }),
        _ => Err(CliError::Usage("--t and --eps must be given together".into())),
    }
}

struct Evaluated {
    bound: BoundReport,
    verdict: Option<PerceptivityVerdict>,
}

fn evaluate(file: &DatumFile, args: &BoundArgs, alphas: &[f64], beta: f64) -> Result<Evaluated, CliError> {
    let datum = &file.datum;
    let budget = budget(args.seed);
    let single = || -> Result<f64, CliError> {
        if alphas.iter().any(|a| *a != alphas[0]) {
            return Err(CliError::Usage("lower bounds take a single threshold".into()));
        }
        Ok(alphas[0])
    };
    let w = || args.w.clone().unwrap_or_else(|| Subspace::full(datum.ambient_dim()));
    Ok(match args.kind {
        Kind::Upper => {
            let v = check_perceptivity(datum, alphas, 0.0, &budget)?;
            Evaluated { bound: upper_bound_global(datum, alphas, &v, args.force_unknown)?, verdict: Some(v) }
        }
        Kind::UpperVariant => {
            let (proj, _) = projector_reduction(datum).map_err(classify)?;
            let v = check_perceptivity(&proj, alphas, 0.0, &budget)?;
            Evaluated { bound: upper_bound_variant(datum, alphas, &v, args.force_unknown)?, verdict: Some(v) }
        }
        Kind::UpperLocalized => {
            let lrd = localized(file, args.t, args.eps)?;
            let v = check_perceptivity(datum, alphas, beta, &budget)?;
            let bound = upper_bound_localized(&lrd, alphas, beta, &v, args.force_unknown).map_err(classify)?;
            Evaluated { bound, verdict: Some(v) }
        }
        Kind::Lower => Evaluated { bound: lower_bound_global(datum, single()?, &w())?, verdict: None },
        Kind::LowerLocalized => {
            let t = args.t.ok_or_else(|| CliError::Usage("lower-localized needs --t".into()))?;
            Evaluated { bound: lower_bound_localized(datum, t, single()?, &w())?, verdict: None }
        }
    })
}

pub fn bound(file: &DatumFile, args: &BoundArgs) -> Result<Outcome, CliError> {
    let beta = resolve_beta(args.beta, &args.overrides, file)?;
    if !args.sweep.is_empty() {
        return sweep(file, args, beta);
    }
    let alphas = resolve_alphas(&args.alphas, &args.overrides, file)?;
    let Evaluated { bound, verdict } = evaluate(file, args, &alphas, beta)?;

    let mut report = Report::new(format!("{} bound", bound.kind));
    let mut table = Table::new(["quantity", "value"], Layout::Aligned);
    table.row(["kind".to_owned(), bound.kind.to_string()]);
    table.row(["value".to_owned(), bound.value.to_string()]);
    for h in &bound.hypotheses {
        table.row([format!("hypothesis: {}", h.name), format!("{} ({})", if h.passed { "pass" } else { "FAIL" }, h.verdict)]);
    }
    for (k, v) in &bound.inputs {
        table.row([k.clone(), v.clone()]);
    }
    if let Some(v) = &verdict {
        table.row(["perceptivity method".to_owned(), v.method.to_string()]);
        table.row(["perceptivity min slack".to_owned(), num(v.min_slack)]);
    }
    report.table(table);

    report.field("kind", bound.kind.to_string());
    report.field("value", bound.value.to_string());
    report.field("finite", bound.value.is_finite().to_string());
    for h in &bound.hypotheses {
        report.field(format!("hypothesis.{}", key(&h.name)), if h.passed { "pass" } else { "fail" });
        report.field(format!("hypothesis.{}.verdict", key(&h.name)), h.verdict.clone());
    }
    for (k, v) in &bound.inputs {
        report.field(format!("input.{k}"), v.clone());
    }
    if let Some(v) = &verdict {
        report.field("perceptivity.status", v.status.to_string());
        report.field("perceptivity.method", v.method.to_string());
        report.field("perceptivity.min_slack", num(v.min_slack));
    }
    let failure = match &bound.value {
        BoundValue::Finite(_) => None,
        BoundValue::Infinite { failed } => {
            report.field("failed", failed.clone());
            Some(format!("hypothesis failed: {failed}"))
        }
    };
    Ok(Outcome { report, failure })
}

fn sweep(file: &DatumFile, args: &BoundArgs, beta: f64) -> Result<Outcome, CliError> {
    if !args.kind.is_upper() {
        return Err(CliError::Usage("--alpha-sweep applies to upper bounds only".into()));
    }
    let n = file.datum.len();
    let mut report = Report::new(format!("threshold sweep of the {:?} bound", args.kind).to_lowercase());
    let mut table = Table::new(["alpha", "value", "perceptivity"], Layout::Tabs);
    let mut values = Vec::with_capacity(args.sweep.len());
    for &a in &args.sweep {
        let e = evaluate(file, args, &vec![a; n], beta)?;
        let status = e.verdict.as_ref().map_or_else(String::new, |v| v.status.to_string());
        table.row([num(a), e.bound.value.to_string(), status]);
        values.push(e.bound.value.finite().unwrap_or(f64::INFINITY));
    }
    report.table(table);
    report.field("sweep_alphas", nums(&args.sweep));
    report.field("sweep_values", nums(&values));
    let best = values.iter().enumerate().filter(|(_, v)| v.is_finite()).min_by(|a, b| a.1.total_cmp(b.1));
    let failure = match best {
        Some((i, v)) => {
            report.field("best_alpha", num(args.sweep[i]));
            report.field("best_value", num(*v));
            None
        }
        None => Some("no threshold in the sweep gives a finite bound".to_owned()),
    };
    Ok(Outcome { report, failure })
}

pub struct OracleArgs {
    pub schedule: Option<(u32, u32)>,
    pub seed: u64,
    pub restarts: usize,
    pub max_iter: usize,
}

/// Rows of a long trace kept in a report: evenly spaced, plus the last.
const TRACE_ROWS: usize = 20;

pub fn oracle(file: &DatumFile, args: &OracleArgs) -> Result<Outcome, CliError> {
    let opts = OracleOptions { seed: args.seed, restarts: args.restarts, max_iter: args.max_iter, ..OracleOptions::default() };
    if let (None, Some(lrd)) = (args.schedule, file.localized()) {
        return single_oracle(&lrd?, &opts);
    }
    let (t_dec, e_dec) = args.schedule.unwrap_or((6, 6));
    let schedule = Schedule::decades(t_dec, e_dec);
    let est = bl_limit(&file.datum, &schedule, &opts)?;

    let mut report = Report::new(format!("Gaussian oracle along a {}x{} schedule", t_dec + 1, e_dec + 1));
    let mut table = Table::new(["t", "eps", "value", "iterations", "converged"], Layout::Tabs);
    for p in &est.trace {
        table.row([num(p.t), num(p.eps), num(p.value), p.iterations.to_string(), p.converged.to_string()]);
    }
    report.table(table);
    let mut summary = Table::new(["quantity", "value"], Layout::Aligned);
    summary.row(["estimate", &num(est.estimate)]);
    summary.row(["extrapolated", &num(est.extrapolated)]);
    if !est.converged() {
        summary.row(["warning", "some schedule points did not converge"]);
    }
    report.table(summary);

    report.field("estimate", num(est.estimate));
    report.field("extrapolated", num(est.extrapolated));
    report.field("converged", est.converged().to_string());
    report.field("seed", args.seed.to_string());
    report.field("restarts", args.restarts.to_string());
    report.field("t_values", nums(schedule.t_values()));
    report.field("eps_values", nums(schedule.eps_values()));
    report.field("trace", nums(&est.trace.iter().map(|p| p.value).collect::<Vec<_>>()));
    Ok(Outcome::success(report))
}

fn single_oracle(lrd: &LocalizedRegularizedDatum, opts: &OracleOptions) -> Result<Outcome, CliError> {
    let res = maximize_gaussian(lrd, opts)?;
    let mut report = Report::new("Gaussian oracle on the localized datum of the file");
    let mut table = Table::new(["iteration", "value"], Layout::Tabs);
    let len = res.functional_trace.len();
    let stride = len.div_ceil(TRACE_ROWS).max(1);
    for (i, v) in res.functional_trace.iter().enumerate() {
        if i % stride == 0 || i + 1 == len {
            table.row([i.to_string(), num(*v)]);
        }
    }
    report.table(table);
    let mut summary = Table::new(["quantity", "value"], Layout::Aligned);
    summary.row(["value", &num(res.value)]);
    summary.row(["iterations", &res.iterations.to_string()]);
    if !res.converged {
        summary.row(["warning", "the ascent did not converge"]);
    }
    report.table(summary);

    report.field("value", num(res.value));
    report.field("iterations", res.iterations.to_string());
    report.field("converged", res.converged.to_string());
    report.field("seed", opts.seed.to_string());
    report.field("restarts", opts.restarts.to_string());
    report.field("trace", nums(&res.functional_trace));
    Ok(Outcome::success(report))
}

pub struct VisualArgs {
    pub cloud: PointCloud,
    pub deltas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub beta: Option<f64>,
    pub force_unknown: bool,
    pub seed: u64,
}

pub fn visual(file: &DatumFile, args: &VisualArgs) -> Result<Outcome, CliError> {
    let datum = &file.datum;
    if !datum.is_projector_datum() {
        return Err(CliError::Hypothesis("the visual inequality needs a datum of orthogonal projections".into()));
    }
    if args.cloud.is_empty() {
        return Err(CliError::Hypothesis("the point cloud is empty".into()));
    }
    if args.deltas.is_empty() {
        return Err(CliError::Usage("--delta-sweep needs at least one scale".into()));
    }
    let overrides = Overrides::default();
    let alphas = resolve_alphas(&args.alphas, &overrides, file)?;
    let beta = resolve_beta(args.beta, &overrides, file)?;
    let verdict = check_perceptivity(datum, &alphas, beta, &budget(args.seed))?;

    let mut report = Report::new(format!("visual inequality on {} points", args.cloud.len()));
    let mut table = Table::new(["delta", "lhs", "rhs", "ratio", "constant"], Layout::Tabs);
    let mut ratios = Vec::with_capacity(args.deltas.len());
    let mut lhs = Vec::with_capacity(args.deltas.len());
    let mut rhs = Vec::with_capacity(args.deltas.len());
    let mut constant = f64::NAN;
    let mut hypotheses = Vec::new();
    for &delta in &args.deltas {
        let r = visual_check(datum, &args.cloud, delta, &alphas, beta, &verdict, args.force_unknown)?;
        table.row([num(delta), num(r.lhs), num(r.rhs), num(r.ratio), num(r.constant_estimate)]);
        lhs.push(r.lhs);
        rhs.push(r.rhs);
        ratios.push(r.ratio);
        constant = r.constant_estimate;
        hypotheses = r.hypotheses;
    }
    report.table(table);
    let slope = if args.deltas.len() >= 2 {
        let xs: Vec<f64> = args.deltas.iter().map(|d| -d.ln()).collect();
        let ys: Vec<f64> = ratios.iter().map(|r| r.ln()).collect();
        Some(fit_slope(&xs, &ys)?)
    } else {
        None
    };
    let mut summary = Table::new(["quantity", "value"], Layout::Aligned);
    summary.row(["slope of log ratio in log(1/delta)".to_owned(), slope.map_or_else(|| "undefined".to_owned(), num)]);
    summary.row(["perceptivity".to_owned(), verdict.status.to_string()]);
    report.table(summary);

    report.field("deltas", nums(&args.deltas));
    report.field("lhs", nums(&lhs));
    report.field("rhs", nums(&rhs));
    report.field("ratios", nums(&ratios));
    report.field("constant", num(constant));
    report.field("slope", slope.map_or_else(|| "undefined".to_owned(), num));
    report.field("alphas", nums(&alphas));
    report.field("beta", num(beta));
    report.field("perceptivity.status", verdict.status.to_string());
    let failed: Vec<&str> = hypotheses.iter().filter(|h| !h.passed).map(|h| h.name.as_str()).collect();
    for h in &hypotheses {
        report.field(format!("hypothesis.{}", key(&h.name)), if h.passed { "pass" } else { "fail" });
    }
    let failure = (!failed.is_empty()).then(|| format!("hypothesis failed: {}", failed.join(", ")));
    Ok(Outcome { report, failure })
}
