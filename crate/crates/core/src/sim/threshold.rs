//! Threshold estimation by bisection on the average syndrome-bit entropy.
//!
//! Every probe decodes the all-zero word (the channels are symmetric and
//! the decoders commute with adding a codeword) over the same noise
//! realizations, so the entropy is a deterministic function of the
//! channel parameter for a fixed seed.

use rayon::prelude::*;

use crate::bitmatrix::BitMatrix;
use crate::channel::{sigma_from_ebn0, ChannelModel, Received};
use crate::decoders::{decode_bec_hybrid, decode_binary_bp, decode_hybrid_sepr, HybridSchedule};
use crate::error::{Error, Result};
use crate::representation::{EPRMatrix, GeneratorSet};

/// Codes shorter than this many active bits skip the construction gate.
pub const GATE_MIN_BITS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdChannel {
    /// Gaussian channel swept in Eb/N0 dB at the given rate.
    EbN0 { rate: f64 },
    /// Erasure channel swept in erasure probability.
    Bec,
}

#[derive(Debug, Clone, Copy)]
pub enum ThresholdCode<'a> {
    /// Binary BP on a plain parity-check matrix.
    Binary(&'a BitMatrix),
    /// The hybrid decoder (or its erasure form) on an extended matrix.
    Extended { omega_e: &'a EPRMatrix, gens: &'a GeneratorSet },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdConfig {
    pub channel: ThresholdChannel,
    /// Search interval; either order.
    pub lo: f64,
    pub hi: f64,
    pub tolerance: f64,
    pub target_entropy: f64,
    pub frames: usize,
    /// Decoding iterations per frame.
    pub iterations: usize,
    /// Round shape for the hybrid decoder; rounds are derived from `iterations`.
    pub schedule: HybridSchedule,
    pub seed: u64,
}

impl ThresholdConfig {
    pub fn ebn0(rate: f64, lo: f64, hi: f64) -> Self {
        ThresholdConfig {
            channel: ThresholdChannel::EbN0 { rate },
            lo,
            hi,
            tolerance: 0.05,
            target_entropy: 1e-3,
            frames: 20,
            iterations: 200,
            schedule: HybridSchedule::standard(),
            seed: 1,
        }
    }

    pub fn bec(lo: f64, hi: f64) -> Self {
        ThresholdConfig {
            channel: ThresholdChannel::Bec,
            tolerance: 0.005,
            ..ThresholdConfig::ebn0(0.5, lo, hi)
        }
    }

    fn hybrid_schedule(&self) -> HybridSchedule {
        let per_round = self.schedule.mu + self.schedule.nu;
        HybridSchedule {
            rounds: self.iterations.div_ceil(per_round).max(1),
            ..self.schedule
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub param: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdEstimate {
    /// Midpoint of the final bracket.
    pub t_b: f64,
    /// Final bracket, `good` meeting the target and `bad` not.
    pub good: f64,
    pub bad: f64,
    pub target_entropy: f64,
    /// "dB" or "erasure probability".
    pub unit: &'static str,
    pub trace: Vec<Probe>,
}

fn h2(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}

/// Average syndrome-bit entropy after decoding at channel parameter `param`.
///
/// Gaussian channel: binary entropy of each check's empirical probability
/// of being unsatisfied, averaged over checks. Erasure channel: a check
/// still touching an erasure has an unknown syndrome bit (one bit of
/// entropy), so the value is the mean fraction of such checks.
pub fn syndrome_entropy(code: ThresholdCode<'_>, cfg: &ThresholdConfig, param: f64) -> Result<f64> {
    let (n, n_checks) = match code {
        ThresholdCode::Binary(h) => (h.n_cols(), h.n_rows()),
        ThresholdCode::Extended { omega_e, .. } => (omega_e.matrix().n_cols(), omega_e.matrix().n_rows()),
    };
    if n_checks == 0 {
        return Ok(0.0);
    }
    let zeros = vec![0u8; n];
    let ch = match cfg.channel {
        ThresholdChannel::EbN0 { rate } => ChannelModel::biawgn(sigma_from_ebn0(param, rate), cfg.seed)?,
        ThresholdChannel::Bec => ChannelModel::bec(param, cfg.seed)?,
    };
    let sched = cfg.hybrid_schedule();
    let syndromes: Vec<Vec<bool>> = (0..cfg.frames as u64)
        .into_par_iter()
        .map(|f| {
            let rx = ch.transmit(&zeros, f);
            match (code, &rx) {
                (ThresholdCode::Binary(h), Received::Reals(_)) => {
                    Ok(decode_binary_bp(h, &ch.llrs(&rx)?, cfg.iterations)?.final_syndrome)
                }
                (ThresholdCode::Extended { omega_e, gens }, Received::Reals(_)) => {
                    let mask = gens.column_mask();
                    let llr: Vec<f64> = ch.llrs(&rx)?.iter().zip(&mask).map(|(&l, &a)| if a { l } else { 0.0 }).collect();
                    Ok(decode_hybrid_sepr(omega_e, gens, &llr, &sched)?.final_syndrome)
                }
                (ThresholdCode::Extended { omega_e, gens }, Received::Erasures { bits, erased }) => {
                    Ok(decode_bec_hybrid(omega_e, gens, bits, erased, &sched, None)?.final_syndrome)
                }
                _ => Err(Error::ModeMismatch(
                    "erasure thresholds need an extended code and the erasure decoder".into(),
                )),
            }
        })
        .collect::<Result<_>>()?;
    let mut counts = vec![0usize; n_checks];
    for s in &syndromes {
        for (c, &u) in s.iter().enumerate() {
            counts[c] += usize::from(u);
        }
    }
    let f = cfg.frames as f64;
    let total: f64 = match cfg.channel {
        ThresholdChannel::EbN0 { .. } => counts.iter().map(|&k| h2(k as f64 / f)).sum(),
        ThresholdChannel::Bec => counts.iter().map(|&k| k as f64 / f).sum(),
    };
    Ok(total / n_checks as f64)
}

/// Bisection for the worst channel at which the entropy stays at or below
/// the target.
pub fn estimate_threshold(code: ThresholdCode<'_>, cfg: &ThresholdConfig) -> Result<ThresholdEstimate> {
    if cfg.frames == 0 || cfg.iterations == 0 || !(cfg.tolerance > 0.0) {
        return Err(Error::InvalidArgument("frames, iterations and tolerance must be positive".into()));
    }
    let (small, large) = if cfg.lo <= cfg.hi { (cfg.lo, cfg.hi) } else { (cfg.hi, cfg.lo) };
    // larger Eb/N0 is a better channel; larger erasure probability is worse
    let (mut good, mut bad, unit) = match cfg.channel {
        ThresholdChannel::EbN0 { .. } => (large, small, "dB"),
        ThresholdChannel::Bec => (small, large, "erasure probability"),
    };
    let mut trace = Vec::new();
    let mut probe = |x: f64| -> Result<f64> {
        let e = syndrome_entropy(code, cfg, x)?;
        trace.push(Probe { param: x, entropy: e });
        Ok(e)
    };
    let eg = probe(good)?;
    let eb = probe(bad)?;
    if !(eg <= cfg.target_entropy && eb > cfg.target_entropy) {
        return Err(Error::NotBracketing(format!(
            "entropy {eg:.3e} at {good} and {eb:.3e} at {bad} against target {:.3e}",
            cfg.target_entropy
        )));
    }
    while (good - bad).abs() > cfg.tolerance {
        let mid = 0.5 * (good + bad);
        if probe(mid)? <= cfg.target_entropy {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Ok(ThresholdEstimate {
        t_b: 0.5 * (good + bad),
        good,
        bad,
        target_entropy: cfg.target_entropy,
        unit,
        trace,
    })
}

/// Quick Eb/N0 threshold of an extended matrix, used to screen constructions.
pub fn gate_estimate(epr: &EPRMatrix, seed: u64) -> Result<f64> {
    let gens = epr.generators();
    let active = epr.active_len().max(1);
    let rate = (1.0 - epr.matrix().rank_f2() as f64 / active as f64).max(1e-3);
    let cfg = ThresholdConfig {
        tolerance: 0.1,
        target_entropy: 1e-2,
        frames: 16,
        iterations: 40,
        seed,
        ..ThresholdConfig::ebn0(rate, -2.0, 8.0)
    };
    estimate_threshold(ThresholdCode::Extended { omega_e: epr, gens: &gens }, &cfg).map(|e| e.t_b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{CodeSpec, Mode};
    use crate::gf::FieldContext;
    use crate::representation::NonBinaryMatrix;
    use std::sync::Arc;

    fn spec() -> CodeSpec {
        let ctx = Arc::new(FieldContext::new(2).unwrap());
        let mother = crate::fixtures::gallager12();
        let rows = (0..mother.n_rows())
            .map(|i| mother.row(i).iter().map(|&j| (j, 1 + (i as u32 + j) % 3)).collect())
            .collect();
        CodeSpec::plain(NonBinaryMatrix::new(ctx, 12, rows).unwrap(), Mode::Extended).unwrap()
    }

    #[test]
    fn entropy_falls_with_quality() {
        let s = spec();
        let code = ThresholdCode::Extended { omega_e: &s.omega_e, gens: &s.gens };
        let cfg = ThresholdConfig { frames: 40, iterations: 20, ..ThresholdConfig::bec(0.0, 1.0) };
        let vals: Vec<f64> = [0.0, 0.3, 0.6, 1.0].iter().map(|&d| syndrome_entropy(code, &cfg, d).unwrap()).collect();
        assert_eq!(vals[0], 0.0);
        assert_eq!(vals[3], 1.0);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]), "{vals:?}");
    }

    #[test]
    fn bisection_brackets() {
        let s = spec();
        let code = ThresholdCode::Extended { omega_e: &s.omega_e, gens: &s.gens };
        let cfg = ThresholdConfig { frames: 30, iterations: 20, target_entropy: 0.05, ..ThresholdConfig::bec(0.0, 1.0) };
        let est = estimate_threshold(code, &cfg).unwrap();
        assert!((est.good - est.bad).abs() <= cfg.tolerance);
        assert!(est.good < est.bad);
        for pr in &est.trace {
            if pr.param <= est.good {
                assert!(pr.entropy <= cfg.target_entropy);
            }
            if pr.param >= est.bad {
                assert!(pr.entropy > cfg.target_entropy);
            }
        }
    }

    #[test]
    fn non_bracketing_rejected() {
        let s = spec();
        let code = ThresholdCode::Extended { omega_e: &s.omega_e, gens: &s.gens };
        let cfg = ThresholdConfig { frames: 10, iterations: 10, ..ThresholdConfig::bec(0.9, 1.0) };
        assert!(matches!(estimate_threshold(code, &cfg), Err(Error::NotBracketing(_))));
        let h = s.img.matrix().clone();
        assert!(syndrome_entropy(ThresholdCode::Binary(&h), &cfg, 0.5).is_err());
    }
}
