//! One function per subcommand. Each writes its files under `out` and
//! returns a short human-readable report for stdout.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use statrs::statistics::{Data, OrderStatistics};

use msprobit::diagnostics::effective_sample_size;
use msprobit::distributions::RandomStream;
use msprobit::metrics::{evaluate_splits, predict_class_probs, rank_score, EvalMetric, Sample, Standardizer};
use msprobit::sampler::{run_chains, tune_proposal, DrawSet};
use msprobit::simulate::{run_experiment, simulate_dataset, Metric, ModelKind};

use crate::config::ConfigFile;
use crate::error::{CliError, CliResult};
use crate::io::{self, fmt_f64};

fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn model_name(model: ModelKind) -> String {
    model.to_string()
}

pub fn simulate(config: &ConfigFile, seed: u64, out: &Path) -> CliResult<String> {
    let spec = config.sim_spec()?;
    let truth = simulate_dataset(&spec, &mut RandomStream::new(seed))?;
    let data = truth.dataset();
    io::write_dataset(&out.join("dataset.csv"), &data)?;
    io::write_truth(&out.join("truth.csv"), &truth)?;
    Ok(format!(
        "simulated {} observations on {} scales with {} features (seed {seed})\nwrote {}",
        data.n(),
        data.num_scales(),
        data.p(),
        out.join("dataset.csv").display()
    ))
}

/// Posterior summary: one row per parameter.
pub fn summary_rows(draws: &DrawSet) -> Vec<Vec<String>> {
    let first = &draws.draws[0];
    let mut names: Vec<String> = (1..=first.beta.len()).map(|k| format!("beta_{k}")).collect();
    for (s, g) in first.gammas.iter().enumerate() {
        names.extend((1..=g.len()).map(|c| format!("gamma_{}_{c}", s + 1)));
    }
    let flat: Vec<Vec<f64>> = draws
        .draws
        .iter()
        .map(|d| d.beta.iter().chain(d.gammas.iter().flatten()).copied().collect())
        .collect();
    let columns: Vec<Vec<f64>> = (0..names.len()).map(|j| flat.iter().map(|row| row[j]).collect()).collect();
    let num_chains = draws.chain_ids.iter().max().map_or(0, |m| m + 1);

    let mut stats: Vec<(f64, f64, [f64; 3], f64)> = Vec::with_capacity(names.len());
    for values in &columns {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let mut data = Data::new(values.clone());
        let q = [data.quantile(0.025), data.quantile(0.5), data.quantile(0.975)];
        let ess: f64 = (0..num_chains)
            .map(|c| {
                let chain: Vec<f64> = values.iter().zip(&draws.chain_ids).filter(|(_, &id)| id == c).map(|(v, _)| *v).collect();
                if chain.is_empty() { 0.0 } else { effective_sample_size(&chain) }
            })
            .sum();
        stats.push((mean, sd, q, ess));
    }

    // rank coefficients by posterior sd, 1 = least uncertain
    let p = first.beta.len();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| stats[a].1.total_cmp(&stats[b].1).then(a.cmp(&b)));
    let mut rank = vec![String::new(); names.len()];
    for (r, &k) in order.iter().enumerate() {
        rank[k] = (r + 1).to_string();
    }

    names
        .into_iter()
        .enumerate()
        .map(|(j, name)| {
            let (mean, sd, q, ess) = stats[j];
            let mcse = if ess > 0.0 { sd / ess.sqrt() } else { f64::NAN };
            vec![
                name,
                fmt_f64(mean),
                fmt_f64(sd),
                fmt_f64(q[0]),
                fmt_f64(q[1]),
                fmt_f64(q[2]),
                fmt_f64(ess),
                fmt_f64(mcse),
                std::mem::take(&mut rank[j]),
            ]
        })
        .collect()
}

fn summary_header() -> Vec<String> {
    header(&["parameter", "mean", "sd", "q2.5", "q50", "q97.5", "ess", "mcse", "sd_rank"])
}

pub fn fit(
    dataset: &Path,
    config: &ConfigFile,
    seed: u64,
    chains: usize,
    standardize: bool,
    out: &Path,
) -> CliResult<String> {
    let mut data = io::read_dataset(dataset)?;
    let mut report = String::new();
    if standardize {
        let t = Standardizer::fit(data.features())?;
        io::write_standardizer(&out.join("standardizer.csv"), &t)?;
        data = io::standardize(&data, &t)?;
    }
    let mut chain_config = config.chain_config(data.p(), data.num_scales(), seed)?;
    if let Some(target) = config.tuning_target() {
        let tuned = tune_proposal(&data, &chain_config, target)?;
        let _ = writeln!(report, "tuned proposal sd: {:?}", tuned.proposal_sd);
        chain_config.proposal_sd = tuned.proposal_sd;
    }
    let start = Instant::now();
    let draws = run_chains(&data, &chain_config, chains)?;
    let elapsed = start.elapsed();

    io::write_draws(&out.join("draws.csv"), &draws)?;
    io::write_csv(&out.join("summary.csv"), &summary_header(), summary_rows(&draws))?;
    let rates = draws.accept_rate();
    let acceptance = (0..data.num_scales()).map(|s| {
        vec![
            (s + 1).to_string(),
            fmt_f64(chain_config.proposal_sd[s]),
            draws.accepted[s].to_string(),
            draws.proposed[s].to_string(),
            fmt_f64(rates[s]),
        ]
    });
    io::write_csv(
        &out.join("acceptance.csv"),
        &header(&["scale_id", "proposal_sd", "accepted", "proposed", "rate"]),
        acceptance,
    )?;

    let _ = writeln!(
        report,
        "{} chain(s), {} sweeps each, {} stored draws in {:.2} s",
        chains,
        chain_config.total_sweeps(),
        draws.len(),
        elapsed.as_secs_f64()
    );
    for (s, r) in rates.iter().enumerate() {
        let _ = writeln!(report, "scale {}: threshold acceptance rate {r:.3}", s + 1);
    }
    let _ = write!(report, "wrote {}", out.join("draws.csv").display());
    Ok(report)
}

pub fn predict(
    draws_path: &Path,
    dataset: &Path,
    scale: usize,
    transform: Option<&Path>,
    out: &Path,
) -> CliResult<String> {
    let draws = io::read_draws(draws_path)?;
    let mut data = io::read_dataset(dataset)?;
    if let Some(t) = transform {
        data = io::standardize(&data, &io::read_standardizer(t)?)?;
    }
    let num_scales = draws.draws[0].gammas.len();
    if scale == 0 || scale > num_scales {
        return Err(CliError::Validation(format!("target scale {scale} unknown; the draws cover scales 1..={num_scales}")));
    }
    if data.p() != draws.draws[0].beta.len() {
        return Err(CliError::Validation(format!(
            "dataset has {} features, draws have {}",
            data.p(),
            draws.draws[0].beta.len()
        )));
    }
    let s = scale - 1;
    let num_classes = draws.draws[0].gammas[s].len() + 1;
    let mut names = vec!["row", "scale_id", "label"].into_iter().map(String::from).collect::<Vec<_>>();
    names.extend((1..=num_classes).map(|c| format!("p_{c}")));
    names.extend(["map_class".to_string(), "rank_score".to_string()]);

    let mut rows = Vec::with_capacity(data.n());
    for i in 0..data.n() {
        let x = data.row(i);
        let mut probs = vec![0.0; num_classes];
        for d in &draws.draws {
            for (acc, p) in probs.iter_mut().zip(predict_class_probs(d, &x, s)?) {
                *acc += p;
            }
        }
        probs.iter_mut().for_each(|p| *p /= draws.len() as f64);
        let map = probs
            .iter()
            .enumerate()
            .fold(0, |best, (c, &p)| if p > probs[best] { c } else { best });
        let mut row = vec![(i + 1).to_string(), data.scale_id(i).to_string(), data.label(i).to_string()];
        row.extend(probs.iter().map(|&p| fmt_f64(p)));
        row.push((map + 1).to_string());
        row.push(fmt_f64(rank_score(&draws, &x)?));
        rows.push(row);
    }
    let path = out.join("predictions.csv");
    io::write_csv(&path, &names, rows)?;
    Ok(format!("predicted {} observations onto scale {scale}\nwrote {}", data.n(), path.display()))
}

pub fn evaluate(
    dataset: &Path,
    config: &ConfigFile,
    seed: u64,
    chains: usize,
    standardize: bool,
    out: &Path,
) -> CliResult<String> {
    let data = io::read_dataset(dataset)?;
    let spec = config.split_spec(chains, standardize)?;
    let chain_config = config.chain_config(data.p(), data.num_scales(), seed)?;
    let report = evaluate_splits(&data, &spec, &chain_config, &RandomStream::new(seed))?;

    let samples = report.samples.iter().map(|r| {
        vec![
            (r.split + 1).to_string(),
            model_name(r.model),
            (r.scale + 1).to_string(),
            r.metric.to_string(),
            (r.draw + 1).to_string(),
            fmt_f64(r.value),
        ]
    });
    io::write_csv(
        &out.join("metrics.csv"),
        &header(&["split_id", "model", "scale", "metric", "draw_id", "value"]),
        samples,
    )?;
    let diffs = report.differences.iter().map(|d| {
        vec![
            (d.split + 1).to_string(),
            (d.scale + 1).to_string(),
            d.metric.to_string(),
            fmt_f64(d.mean_multi),
            fmt_f64(d.mean_single),
            fmt_f64(d.diff),
        ]
    });
    io::write_csv(
        &out.join("differences.csv"),
        &header(&["split_id", "scale", "metric", "mean_multi", "mean_single", "diff"]),
        diffs,
    )?;

    let mut text = format!("{} splits at training fraction {:.4}\n", spec.num_splits, spec.fraction);
    for s in 0..data.num_scales() {
        for metric in [EvalMetric::F1Macro(Sample::Out), EvalMetric::TauB(Sample::Out), EvalMetric::Harmonic(Sample::Out)] {
            let _ = writeln!(
                text,
                "scale {}: multi-scale better on {:.0}% of splits for {metric}",
                s + 1,
                100.0 * report.multi_better_fraction(s, metric)
            );
        }
    }
    let _ = write!(text, "wrote {}", out.join("metrics.csv").display());
    Ok(text)
}

pub fn experiment(config: &ConfigFile, seed: u64, chains: usize, out: &Path) -> CliResult<String> {
    let spec = config.experiment_spec(seed, chains)?;
    let report = run_experiment(&spec)?;

    let records = report.records.iter().map(|r| {
        vec![
            (r.replication + 1).to_string(),
            model_name(r.model),
            (r.scale + 1).to_string(),
            r.metric.to_string(),
            fmt_f64(r.posterior_mean),
        ]
    });
    io::write_csv(
        &out.join("rmse.csv"),
        &header(&["replication", "model", "scale", "metric", "posterior_mean"]),
        records,
    )?;
    let draws = report.draws.iter().map(|r| {
        vec![
            (r.replication + 1).to_string(),
            model_name(r.model),
            (r.scale + 1).to_string(),
            r.metric.to_string(),
            (r.draw + 1).to_string(),
            fmt_f64(r.value),
        ]
    });
    io::write_csv(
        &out.join("rmse_draws.csv"),
        &header(&["replication", "model", "scale", "metric", "draw_id", "value"]),
        draws,
    )?;
    let ratios = report.ratios.iter().map(|r| {
        vec![
            (r.replication + 1).to_string(),
            (r.scale + 1).to_string(),
            r.metric.to_string(),
            fmt_f64(r.multi),
            fmt_f64(r.single),
            fmt_f64(r.ratio),
        ]
    });
    io::write_csv(
        &out.join("ratios.csv"),
        &header(&["replication", "scale", "metric", "multi", "single", "ratio"]),
        ratios,
    )?;
    let failures = report.failures.iter().map(|f| vec![(f.replication + 1).to_string(), f.message.clone()]);
    io::write_csv(&out.join("failures.csv"), &header(&["replication", "message"]), failures)?;

    let mut text = format!(
        "{} of {} replications completed\n",
        report.completed_replications(),
        spec.replications
    );
    for s in 0..spec.sim.num_scales() {
        for metric in Metric::ALL {
            let ratios: Vec<f64> = report.ratios_for(s, metric).map(|r| r.ratio).collect();
            if ratios.is_empty() {
                continue;
            }
            let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
            let wins = ratios.iter().filter(|&&r| r < 1.0).count();
            let _ = writeln!(
                text,
                "scale {}: {metric} ratio multi/single mean {mean:.3}, multi better in {wins}/{}",
                s + 1,
                ratios.len()
            );
        }
    }
    let _ = write!(text, "wrote {}", out.join("ratios.csv").display());
    Ok(text)
}

/// Summary CSV of a draws file, to `out/summary.csv` or returned as text.
pub fn summarize(draws_path: &Path, out: Option<&Path>) -> CliResult<String> {
    let draws = io::read_draws(draws_path)?;
    let rows = summary_rows(&draws);
    match out {
        Some(dir) => {
            let path = dir.join("summary.csv");
            io::write_csv(&path, &summary_header(), rows)?;
            Ok(format!("summarised {} draws\nwrote {}", draws.len(), path.display()))
        }
        None => Ok(String::from_utf8(io::csv_bytes(&summary_header(), rows)).expect("csv is utf-8")),
    }
}
