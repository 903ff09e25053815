use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use ctda::baselines::{fit_bayes, fit_ols, predict, LinearModel};
use ctda::coupling::{
    build_dtm, local_mi_approx, perturb_distribution, score_table, solve_coupling, CouplingReport,
    ScoreMap,
};
use ctda::data::{
    align, load_csv, load_images_csv, AlignedSeries, ImageDataset, TimeKind, TimeSeries,
};
use ctda::equalizer::select_length;
use ctda::fusion::{
    fuse, fuse_online, select_channels, CombiningMode, FusionChannel, FusionModel, SelectionPolicy,
};
use ctda::scoring::{
    error_vs_noise_curve, learn_pooled_source, score_dataset, score_dataset_per_pixel,
    score_table_for_input, score_table_for_output, separation_error, smooth_counts, ScoredItem,
};
use ctda::stats::{
    exact_mutual_information, load_channel, load_distribution, parametric_channel, Channel,
    DiscreteDistribution, MAX_NOISE_LEVEL,
};

use crate::args::*;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Compute(String),
}

impl From<ctda::Error> for CliError {
    fn from(e: ctda::Error) -> Self {
        if e.is_usage() {
            CliError::Usage(e.to_string())
        } else {
            CliError::Compute(e.to_string())
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Serialize)]
struct Envelope<'a, P: Serialize> {
    config: &'a Cli,
    version: &'static str,
    seed: u64,
    #[serde(flatten)]
    payload: P,
}

fn write_file(path: &Path, contents: &[u8]) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}

fn write_json<P: Serialize>(path: &Path, cli: &Cli, payload: P) -> CliResult<()> {
    let env = Envelope {
        config: cli,
        version: env!("CARGO_PKG_VERSION"),
        seed: cli.seed,
        payload,
    };
    let mut text =
        serde_json::to_string_pretty(&env).map_err(|e| CliError::Compute(e.to_string()))?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn write_csv<I, R>(path: &Path, header: &str, rows: I) -> CliResult<()>
where
    I: IntoIterator<Item = R>,
    R: AsRef<[String]>,
{
    let mut out = Vec::new();
    writeln!(out, "{header}").expect("in-memory write");
    for r in rows {
        writeln!(out, "{}", r.as_ref().join(",")).expect("in-memory write");
    }
    write_file(path, &out)
}

fn check_fraction(frac: f64) -> CliResult<()> {
    if frac > 0.0 && frac <= 1.0 {
        Ok(())
    } else {
        Err(usage(format!("--train-frac must be in (0, 1], got {frac}")))
    }
}

/// Loads and aligns `inputs` followed by `target` (last column).
fn load_aligned(
    inputs: &[PathBuf],
    target: &Path,
    series: &SeriesArgs,
) -> CliResult<AlignedSeries<f64>> {
    let mut all: Vec<TimeSeries<f64>> = Vec::with_capacity(inputs.len() + 1);
    for p in inputs
        .iter()
        .map(PathBuf::as_path)
        .chain(std::iter::once(target))
    {
        all.push(load_csv(p, &series.time_col, &series.value_col)?);
    }
    let mut names: Vec<&str> = all.iter().map(TimeSeries::name).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(usage("series file stems must be distinct"));
    }
    Ok(align(&all, series.align.into())?)
}

fn mse(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (mut sse, mut n) = (0.0, 0usize);
    for (a, b) in pairs {
        sse += (a - b) * (a - b);
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        sse / n as f64
    }
}

fn prediction_rows(kind: TimeKind, ts: &[i64], y_true: &[f64], y_hat: &[f64]) -> Vec<[String; 4]> {
    ts.iter()
        .zip(y_true)
        .zip(y_hat)
        .map(|((&t, &y), &p)| {
            [
                kind.format(t),
                y.to_string(),
                p.to_string(),
                (y - p).abs().to_string(),
            ]
        })
        .collect()
}

const PREDICTIONS_HEADER: &str = "date,y_true,y_hat,abs_err";

#[derive(Debug, Serialize, Deserialize)]
struct ModelsFile {
    target: String,
    time_kind: TimeKind,
    train_rows: usize,
    /// Timestamp of the first row after the training block.
    test_start: Option<i64>,
    test_start_date: Option<String>,
    channels: Vec<FusionChannel<f64>>,
}

#[derive(Serialize)]
struct ChannelReport<'a> {
    name: &'a str,
    length: usize,
    training_mse: f64,
    validation_mse: f64,
}

pub fn fit(cli: &Cli, a: &FitArgs) -> CliResult<()> {
    check_fraction(a.train_frac)?;
    let data = load_aligned(&a.input, &a.target, &a.series)?;
    let rows = data.rows();
    let train_rows = (rows as f64 * a.train_frac).floor() as usize;
    let m = a.input.len();
    let y = &data.column(m)[..train_rows];
    let channels = (0..m)
        .into_par_iter()
        .map(|i| {
            let model = select_length(
                &data.column(i)[..train_rows],
                y,
                a.max_length,
                a.select.into(),
                a.mode.into(),
            )?;
            Ok(FusionChannel {
                name: data.names[i].clone(),
                model,
            })
        })
        .collect::<ctda::Result<Vec<_>>>()?;
    for c in &channels {
        if c.model.degenerate {
            eprintln!("warning: channel {} has a degenerate fit", c.name);
        }
        println!(
            "{}\tL={}\ttraining_mse={}\tvalidation_mse={}",
            c.name, c.model.length, c.model.training_mse, c.model.validation_mse
        );
    }
    let test_start = data.timestamps.get(train_rows).copied();
    let payload = ModelsFile {
        target: data.names[m].clone(),
        time_kind: data.kind,
        train_rows,
        test_start,
        test_start_date: test_start.map(|t| data.kind.format(t)),
        channels,
    };
    write_json(&a.out, cli, payload)
}

fn read_models(path: &Path) -> CliResult<ModelsFile> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| usage(format!("invalid models file {}: {e}", path.display())))
}

#[derive(Serialize)]
struct InferReport<'a> {
    fusion: &'a FusionModel<f64>,
    forced_best: bool,
    online_window: Option<usize>,
    test_rows: usize,
    channel_test_mse: Vec<(&'a str, f64)>,
    test_mse: f64,
    reports: Vec<ChannelReport<'a>>,
}

pub fn infer(cli: &Cli, a: &InferArgs) -> CliResult<()> {
    let models = read_models(&a.models)?;
    if models.channels.is_empty() {
        return Err(usage("models file has no channels"));
    }
    let stem = |p: &PathBuf| p.file_stem().map(|s| s.to_string_lossy().into_owned());
    let mut ordered = Vec::with_capacity(models.channels.len());
    for c in &models.channels {
        let path = a
            .inputs
            .iter()
            .find(|p| stem(p).as_deref() == Some(c.name.as_str()))
            .ok_or_else(|| usage(format!("no input file for channel {}", c.name)))?;
        ordered.push(path.clone());
    }
    for p in &a.inputs {
        if !ordered.contains(p) {
            eprintln!(
                "warning: {} matches no fitted channel and is ignored",
                p.display()
            );
        }
    }
    let data = load_aligned(&ordered, &a.target, &a.series)?;
    let m = ordered.len();
    let y = data.column(m);
    let rows = data.rows();
    let test_row = match models.test_start {
        Some(ts) => data.timestamps.partition_point(|&t| t < ts),
        None => rows,
    };
    if test_row >= rows {
        return Err(usage("no rows after the training block"));
    }

    let policy = match (a.select_top, a.select_threshold) {
        (Some(k), _) => SelectionPolicy::TopK(k),
        (None, Some(t)) => SelectionPolicy::MseThreshold(t),
        (None, None) => SelectionPolicy::TopK(m),
    };
    let selection = select_channels(&models.channels, policy)?;
    if let Some(w) = &selection.warning {
        eprintln!("warning: {w}");
    }
    if selection.forced_best {
        eprintln!("warning: no channel met the threshold; keeping the best one");
    }
    let chosen: Vec<FusionChannel<f64>> = selection
        .indices
        .iter()
        .map(|&i| models.channels[i].clone())
        .collect();
    let inputs: Vec<&[f64]> = selection.indices.iter().map(|&i| data.column(i)).collect();
    let train_inputs: Vec<&[f64]> = inputs.iter().map(|x| &x[..test_row]).collect();
    let mode: CombiningMode = a.fusion.into();
    if a.online_window.is_some() && mode != CombiningMode::MrcInverseMse {
        return Err(usage("--online-window requires --fusion mrc"));
    }
    let model = FusionModel::fit(mode, chosen, Some((&train_inputs, &y[..test_row])))?;
    if model.degenerate {
        eprintln!("warning: combining weights came from a singular system");
    }
    let h = model.mode_of_channels().horizon();
    let longest = model
        .channels
        .iter()
        .map(|c| c.model.length)
        .max()
        .unwrap_or(0);
    let start = test_row.max(longest);
    let end = rows.saturating_sub(h);
    if start >= end {
        return Err(CliError::Compute(format!(
            "test block has no rows with {longest} samples of history"
        )));
    }
    let y_hat: Vec<f64> = match a.online_window {
        Some(w) => fuse_online(&model, &inputs, y, start..end, w)?,
        None => (start..end)
            .map(|n| fuse(&model, &inputs, n))
            .collect::<ctda::Result<_>>()?,
    };
    let y_true = &y[start + h..end + h];
    let ts = &data.timestamps[start + h..end + h];
    write_csv(
        &a.out,
        PREDICTIONS_HEADER,
        prediction_rows(data.kind, ts, y_true, &y_hat),
    )?;

    let mut channel_test_mse = Vec::new();
    for (c, x) in model.channels.iter().zip(&inputs) {
        let out = c.model.outputs(x, start..end)?;
        let e = mse(out.into_iter().zip(y_true.iter().copied()));
        println!(
            "{}\talpha={}\ttest_mse={e}",
            c.name,
            model.alphas[channel_test_mse.len()]
        );
        channel_test_mse.push((c.name.as_str(), e));
    }
    let test_mse = mse(y_hat.iter().copied().zip(y_true.iter().copied()));
    println!("test_mse\t{test_mse}");
    if let Some(path) = &a.report {
        let reports = model
            .channels
            .iter()
            .map(|c| ChannelReport {
                name: &c.name,
                length: c.model.length,
                training_mse: c.model.training_mse,
                validation_mse: c.model.validation_mse,
            })
            .collect();
        write_json(
            path,
            cli,
            InferReport {
                fusion: &model,
                forced_best: selection.forced_best,
                online_window: a.online_window,
                test_rows: y_hat.len(),
                channel_test_mse,
                test_mse,
                reports,
            },
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct BaselineReport<'a> {
    model: &'a LinearModel<f64>,
    train_rows: usize,
    test_mse: f64,
}

pub fn baseline(cli: &Cli, a: &BaselineArgs) -> CliResult<()> {
    check_fraction(a.train_frac)?;
    let data = load_aligned(&a.inputs, &a.target, &a.series)?;
    let m = a.inputs.len();
    let rows = data.rows();
    let train_rows = (rows as f64 * a.train_frac).floor() as usize;
    let inputs: Vec<&[f64]> = (0..m).map(|i| data.column(i)).collect();
    let train: Vec<&[f64]> = inputs.iter().map(|x| &x[..train_rows]).collect();
    let y = data.column(m);
    let model = match a.method {
        MethodArg::Ols => {
            if a.prior_var.is_some() || a.noise_var.is_some() {
                eprintln!("warning: --prior-var/--noise-var only apply to --method bayes");
            }
            fit_ols(&train, &y[..train_rows], a.lag)?
        }
        MethodArg::Bayes => {
            let noise = match a.noise_var {
                Some(v) => v,
                None => {
                    let ols = fit_ols(&train, &y[..train_rows], a.lag)?;
                    if ols.residual_mse > 0.0 {
                        ols.residual_mse
                    } else {
                        f64::EPSILON
                    }
                }
            };
            fit_bayes(
                &train,
                &y[..train_rows],
                a.lag,
                a.prior_var.unwrap_or(1.0),
                noise,
            )?
        }
    };
    if model.degenerate {
        eprintln!("warning: regressors are rank deficient");
    }
    let start = train_rows.max(a.lag);
    if start >= rows {
        return Err(usage("no rows after the training block"));
    }
    let y_hat: Vec<f64> = (start..rows)
        .map(|n| predict(&model, &inputs, n))
        .collect::<ctda::Result<_>>()?;
    let y_true = &y[start..];
    write_csv(
        &a.out,
        PREDICTIONS_HEADER,
        prediction_rows(data.kind, &data.timestamps[start..], y_true, &y_hat),
    )?;
    let test_mse = mse(y_hat.iter().copied().zip(y_true.iter().copied()));
    println!("test_mse\t{test_mse}");
    if let Some(path) = &a.model_out {
        write_json(
            path,
            cli,
            BaselineReport {
                model: &model,
                train_rows,
                test_mse,
            },
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Perturbation {
    delta: f64,
    conditional_plus: Vec<f64>,
    conditional_minus: Vec<f64>,
    local_mi: f64,
    exact_mi: f64,
}

#[derive(Serialize)]
struct CoupleOutput {
    #[serde(flatten)]
    solution: CouplingReport<f64>,
    dropped_inputs: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    perturbation: Option<Perturbation>,
}

pub fn couple(cli: &Cli, a: &CoupleArgs) -> CliResult<()> {
    let channel: Channel<f64> = load_channel(&a.channel)?;
    let source: DiscreteDistribution<f64> = load_distribution(&a.source)?;
    let dtm = build_dtm(&channel, &source)?;
    let solution = solve_coupling(&dtm)?;
    let table = score_table(&solution, &dtm);
    if solution.degenerate_subspace {
        eprintln!("warning: the second singular value is not simple");
    }
    let perturbation = match a.delta {
        None => None,
        Some(delta) => {
            let plus = perturb_distribution(&source, &solution.psi_x, delta, 1)?;
            let minus = perturb_distribution(&source, &solution.psi_x, delta, -1)?;
            let p_u = DiscreteDistribution::uniform(2)?;
            let neg: Vec<f64> = solution.psi_x.iter().map(|v| -v).collect();
            let local_mi = local_mi_approx(&p_u, &[solution.psi_x.clone(), neg], delta)?;
            let exact_mi = exact_mutual_information(&p_u, &[plus.clone(), minus.clone()])?;
            Some(Perturbation {
                delta,
                conditional_plus: plus.probs().to_vec(),
                conditional_minus: minus.probs().to_vec(),
                local_mi,
                exact_mi,
            })
        }
    };
    println!("sigma_2\t{}", solution.second_singular_value);
    write_json(
        &a.out,
        cli,
        CoupleOutput {
            solution: CouplingReport::new(&solution, &table),
            dropped_inputs: dtm.dropped_inputs.clone(),
            perturbation,
        },
    )
}

fn parse_dims(s: &str) -> CliResult<(usize, usize)> {
    let bad = || usage(format!("dims must look like WxH, got {s:?}"));
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let w: usize = w.trim().parse().map_err(|_| bad())?;
    let h: usize = h.trim().parse().map_err(|_| bad())?;
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok((w, h))
}

fn parse_list(s: &str, what: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| usage(format!("invalid number {v:?} in {what}")))
        })
        .collect()
}

fn fmt_opt<T: Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn score_rows(items: &[ScoredItem<f64>]) -> Vec<[String; 3]> {
    items
        .iter()
        .map(|s| [s.index.to_string(), fmt_opt(s.label), s.score.to_string()])
        .collect()
}

#[derive(Serialize)]
struct ScoreReport {
    mode: ScoreModeArg,
    n_images: usize,
    separation_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    score: Option<ScoreMap<f64>>,
}

fn score_source(dataset: &ImageDataset, smooth: bool) -> CliResult<DiscreteDistribution<f64>> {
    if smooth {
        let mut counts = vec![0usize; dataset.alphabet_size()];
        dataset
            .images()
            .iter()
            .flatten()
            .for_each(|&s| counts[s] += 1);
        Ok(smooth_counts(&counts)?)
    } else {
        Ok(learn_pooled_source(dataset.pixels())?)
    }
}

pub fn score(cli: &Cli, a: &ScoreArgs) -> CliResult<()> {
    let dims = a.dims.as_deref().map(parse_dims).transpose()?;
    let channel: Channel<f64> = match (&a.channel, a.channel_e) {
        (Some(path), _) => load_channel(path)?,
        (None, Some(e)) => {
            if !(0.0..=MAX_NOISE_LEVEL).contains(&e) {
                return Err(usage(format!(
                    "--channel-e must be in [0, {MAX_NOISE_LEVEL}], got {e}"
                )));
            }
            parametric_channel(e)?
        }
        (None, None) => return Err(usage("one of --channel-e or --channel is required")),
    };
    let alphabet = a.alphabet.or(Some(channel.outputs()));
    let dataset = load_images_csv(&a.images, dims, alphabet)?;
    let (items, table) = match a.mode {
        ScoreModeArg::Pooled => {
            let table = match &a.clean_images {
                Some(path) => {
                    let clean = load_images_csv(path, dims, Some(channel.inputs()))?;
                    score_table_for_input(&score_source(&clean, a.smooth)?, &channel)?
                }
                None => score_table_for_output(&score_source(&dataset, a.smooth)?, &channel)?,
            };
            (score_dataset(&dataset, &table)?, Some(table))
        }
        ScoreModeArg::PerPixel => {
            if a.clean_images.is_some() {
                return Err(usage("--clean-images is only supported in pooled mode"));
            }
            (score_dataset_per_pixel(&dataset, &channel)?.items, None)
        }
    };
    write_csv(&a.out, "index,label,score", score_rows(&items))?;
    let sep = if dataset.labels().is_some() {
        match separation_error(&items) {
            Ok(e) => {
                println!("separation_error\t{e}");
                Some(e)
            }
            Err(e) => {
                eprintln!("warning: separation error unavailable: {e}");
                None
            }
        }
    } else {
        None
    };
    if let Some(path) = &a.report {
        write_json(
            path,
            cli,
            ScoreReport {
                mode: a.mode,
                n_images: dataset.len(),
                separation_error: sep,
                score: table.map(|t| ScoreMap(t.scores)),
            },
        )?;
    }
    Ok(())
}

/// Parses `start:stop:step` (inclusive of `stop`) or a comma separated list.
pub fn parse_grid(s: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let grid = match parts.as_slice() {
        [one] => parse_list(one, "--e-grid")?,
        [start, stop, step] => {
            let num = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| usage(format!("invalid number {v:?} in --e-grid")))
            };
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if step.is_nan() || step <= 0.0 || stop < start {
                return Err(usage("--e-grid needs start <= stop and step > 0"));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            (0..count)
                .map(|i| {
                    let v = start + i as f64 * step;
                    (v * 1e12).round() / 1e12
                })
                .collect()
        }
        _ => return Err(usage(format!("cannot parse --e-grid {s:?}"))),
    };
    if let Some(e) = grid.iter().find(|e| !(0.0..=MAX_NOISE_LEVEL).contains(*e)) {
        return Err(usage(format!(
            "noise level {e} outside [0, {MAX_NOISE_LEVEL}]"
        )));
    }
    Ok(grid)
}

pub fn sweep(cli: &Cli, a: &SweepArgs) -> CliResult<()> {
    let grid = parse_grid(&a.e_grid)?;
    let (w, h) = parse_dims(&a.dims)?;
    let dist = |s: &str, flag: &str| -> CliResult<DiscreteDistribution<f64>> {
        DiscreteDistribution::new(parse_list(s, flag)?).map_err(|e| usage(format!("{flag}: {e}")))
    };
    let pa = dist(&a.p_a, "--pA")?;
    let pb = dist(&a.p_b, "--pB")?;
    if pa.len() != 4 || pb.len() != 4 {
        return Err(usage("--pA and --pB need four probabilities"));
    }
    if a.n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let GenArg::TwoClass = a.gen;
    let curve = error_vs_noise_curve([&pa, &pb], (w, h), a.n, &grid, cli.seed)?;
    for r in &curve {
        println!("e={}\terror={}", r.e, r.error_probability);
    }
    write_csv(
        &a.out,
        "e,error_probability,n_images,seed",
        curve.iter().map(|r| {
            [
                r.e.to_string(),
                r.error_probability.to_string(),
                r.n_images.to_string(),
                r.seed.to_string(),
            ]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        let g = parse_grid("0:0.25:0.025").unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!(g[10], 0.25);
        assert_eq!(g[3], 0.075);
        assert_eq!(parse_grid("0.1").unwrap(), vec![0.1]);
        assert_eq!(parse_grid("0,0.05,0.2").unwrap(), vec![0.0, 0.05, 0.2]);
        assert!(parse_grid("0:0.3:0.1").is_err());
        assert!(parse_grid("0:1").is_err());
        assert!(parse_grid("0.2:0.1:0.05").is_err());
    }

    #[test]
    fn dims_parsing() {
        assert_eq!(parse_dims("19x19").unwrap(), (19, 19));
        assert_eq!(parse_dims("4X2").unwrap(), (4, 2));
        assert!(parse_dims("19").is_err());
        assert!(parse_dims("0x3").is_err());
    }
}
