use super::Chain;
use crate::distributions::RandomStream;
use crate::error::{Error, Result};
use crate::model::{ChainConfig, Dataset};

pub const DEFAULT_TARGET_RATE: f64 = 0.234;

const WINDOW_SWEEPS: usize = 200;
const MAX_WINDOWS: usize = 20;
const TOLERANCE: f64 = 0.05;

/// Stream index reserved for pilot runs, away from chain ids.
const PILOT_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct TuningOutcome {
    pub proposal_sd: Vec<f64>,
    /// Realised acceptance rate per window, one row per scale.
    pub trajectory: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
struct Bracket {
    below: Option<f64>,
    above: Option<f64>,
    done: bool,
}

/// Pilot-run tuning of the per-scale threshold proposal sd.
///
/// After one discarded warm-up window, each 200-sweep window doubles the sd
/// of a scale accepting too often and halves it for one accepting too
/// rarely. Once a scale has been seen on both sides of the target the sd is
/// bisected geometrically instead. A scale is settled when a window lands
/// within ±0.05 of the target. Pilot sweeps are never stored.
pub fn tune_proposal(dataset: &Dataset, config: &ChainConfig, target_rate: f64) -> Result<TuningOutcome> {
    if !(target_rate > 0.0 && target_rate < 1.0) {
        return Err(Error::Config(format!("target acceptance rate must be in (0, 1), got {target_rate}")));
    }
    let rng = RandomStream::new(config.seed).split(PILOT_STREAM);
    let mut chain = Chain::new(dataset, config, rng)?;
    let scales = dataset.num_scales();

    run_window(&mut chain)?;

    let mut sd = config.proposal_sd.clone();
    let mut brackets = vec![Bracket { below: None, above: None, done: false }; scales];
    let mut trajectory = vec![Vec::new(); scales];
    for _ in 0..MAX_WINDOWS {
        chain.set_proposal_sd(sd.clone());
        chain.reset_acceptance();
        run_window(&mut chain)?;
        for s in 0..scales {
            if brackets[s].done {
                continue;
            }
            let rate = chain.accepted()[s] as f64 / chain.proposed()[s] as f64;
            trajectory[s].push(rate);
            let b = &mut brackets[s];
            if (rate - target_rate).abs() <= TOLERANCE {
                b.done = true;
                continue;
            }
            // A larger sd lowers the acceptance rate.
            if rate > target_rate {
                b.below = Some(sd[s]);
            } else {
                b.above = Some(sd[s]);
            }
            sd[s] = match (b.below, b.above) {
                (Some(lo), Some(hi)) => (lo * hi).sqrt(),
                (Some(lo), None) => lo * 2.0,
                (None, Some(hi)) => hi / 2.0,
                (None, None) => unreachable!(),
            };
        }
        if brackets.iter().all(|b| b.done) {
            return Ok(TuningOutcome { proposal_sd: sd, trajectory });
        }
    }
    Err(Error::Tuning { trajectory })
}

fn run_window(chain: &mut Chain<'_>) -> Result<()> {
    for _ in 0..WINDOW_SWEEPS {
        let sweep = chain.sweeps() + 1;
        chain.sweep().map_err(|e| Error::Sampler { chain: 0, sweep, source: Box::new(e) })?;
    }
    Ok(())
}
