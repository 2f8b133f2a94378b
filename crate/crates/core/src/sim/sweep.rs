//! Monte-Carlo sweeps over a grid of channel parameters.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::channel::{extend_erasures, extend_llrs, ChannelModel, CodeSpec, Mode, Received};
use crate::decoders::{
    decode_bec_hybrid, decode_binary_bp, decode_hard_epr, decode_hybrid_sepr, decode_qspa, symbol_priors,
    with_symbols, DecodeResult, DecodeStatus, DecoderKind, HybridSchedule,
};
use crate::error::{Error, Result};
use crate::representation::extend_codeword;

/// What the grid values mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelParam {
    /// Crossover probability.
    Bsc,
    /// Erasure probability.
    Bec,
    /// Eb/N0 in dB, using the rate of the transmitted word.
    EbN0,
    /// Noise standard deviation.
    Sigma,
}

impl FromStr for ChannelParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "bsc" => ChannelParam::Bsc,
            "bec" => ChannelParam::Bec,
            "ebn0" | "awgn" => ChannelParam::EbN0,
            "sigma" => ChannelParam::Sigma,
            _ => return Err(Error::InvalidArgument(format!("unknown channel {s:?}"))),
        })
    }
}

impl fmt::Display for ChannelParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChannelParam::Bsc => "bsc",
            ChannelParam::Bec => "bec",
            ChannelParam::EbN0 => "ebn0",
            ChannelParam::Sigma => "sigma",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopRule {
    pub min_frame_errors: u64,
    pub max_frames: u64,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            min_frame_errors: 100,
            max_frames: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub decoder: DecoderKind,
    pub channel: ChannelParam,
    pub grid: Vec<f64>,
    pub stop: StopRule,
    pub schedule: HybridSchedule,
    pub seed: u64,
    pub mode: Mode,
    /// Frames decoded between stop-rule checks. Results depend on this
    /// value but not on the number of workers.
    pub batch: usize,
    /// Worker threads; 0 uses the rayon default.
    pub threads: usize,
    /// Fill the `seconds` column.
    pub timing: bool,
}

impl ExperimentPlan {
    pub fn new(decoder: DecoderKind, channel: ChannelParam, grid: Vec<f64>) -> Self {
        ExperimentPlan {
            decoder,
            channel,
            grid,
            stop: StopRule::default(),
            schedule: HybridSchedule::standard(),
            seed: 1,
            mode: Mode::Base,
            batch: 64,
            threads: 0,
            timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidArgument("empty channel grid".into()));
        }
        if self.stop.min_frame_errors == 0 || self.stop.max_frames == 0 || self.batch == 0 {
            return Err(Error::InvalidArgument("stop rule and batch size must be positive".into()));
        }
        let is_bec = self.channel == ChannelParam::Bec;
        match self.decoder {
            DecoderKind::Bec if !is_bec => {
                return Err(Error::ModeMismatch("the erasure decoder needs a BEC grid".into()))
            }
            DecoderKind::Hepr if is_bec => {
                return Err(Error::ModeMismatch("use the bec decoder on erasure channels".into()))
            }
            DecoderKind::Qspa | DecoderKind::Seb if self.mode == Mode::Extended => {
                return Err(Error::ModeMismatch(format!(
                    "{} decodes the base word; extended transmission is not supported",
                    self.decoder
                )))
            }
            _ => {}
        }
        Ok(())
    }
}

/// Outcome of one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub channel_param: f64,
    pub frames: u64,
    pub bit_errors: u64,
    pub frame_errors: u64,
    pub undetected: u64,
    pub ber: f64,
    pub fer: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_iters: f64,
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub decoder: DecoderKind,
    pub channel: ChannelParam,
    pub mode: Mode,
    pub bits_per_frame: usize,
    pub points: Vec<PointResult>,
}

pub const CSV_HEADER: &str =
    "channel_param,frames,bit_errors,frame_errors,undetected,ber,fer,ci_low,ci_high,mean_iters,seconds";

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for p in &self.points {
            s.push_str(&format!(
                "{},{},{},{},{},{:.6e},{:.6e},{:.6e},{:.6e},{:.4},{}\n",
                p.channel_param,
                p.frames,
                p.bit_errors,
                p.frame_errors,
                p.undetected,
                p.ber,
                p.fer,
                p.ci_low,
                p.ci_high,
                p.mean_iters,
                p.seconds.map(|t| format!("{t:.3}")).unwrap_or_default()
            ));
        }
        s
    }
}

/// Result of decoding a single frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FrameOutcome {
    pub bit_errors: u64,
    pub frame_error: bool,
    pub undetected: bool,
    pub iterations: usize,
}

/// Channel for one grid point of a plan.
pub fn channel_for(plan: &ExperimentPlan, spec: &CodeSpec, value: f64, point: usize) -> Result<ChannelModel> {
    let seed = plan.seed ^ (point as u64).wrapping_mul(0xa076_1d64_78bd_642f);
    match plan.channel {
        ChannelParam::Bsc => ChannelModel::bsc(value, seed),
        ChannelParam::Bec => ChannelModel::bec(value, seed),
        ChannelParam::Sigma => ChannelModel::biawgn(value, seed),
        ChannelParam::EbN0 => ChannelModel::biawgn_ebn0(value, spec.rate_for(plan.mode), seed),
    }
}

/// Hard decisions of whatever the receiver saw.
fn hard_bits(rx: &Received) -> Vec<u8> {
    match rx {
        Received::Bits(b) => b.clone(),
        Received::Erasures { bits, .. } => bits.clone(),
        Received::Reals(y) => y.iter().map(|&v| u8::from(v < 0.0)).collect(),
    }
}

/// Runs `decoder` on one received frame of `spec`.
pub fn decode_frame(
    spec: &CodeSpec,
    decoder: DecoderKind,
    ch: &ChannelModel,
    rx: &Received,
    mode: Mode,
    sched: &HybridSchedule,
) -> Result<DecodeResult> {
    let p = spec.p();
    let mask = spec.gens.column_mask();
    let masked = |mut v: Vec<f64>| {
        v.iter_mut().zip(&mask).for_each(|(l, &a)| {
            if !a {
                *l = 0.0
            }
        });
        v
    };
    match decoder {
        DecoderKind::Qspa => decode_qspa(&spec.h, &symbol_priors(&ch.llrs(rx)?, p), sched.max_iter()),
        DecoderKind::Seb => Ok(with_symbols(decode_binary_bp(spec.img.matrix(), &ch.llrs(rx)?, sched.max_iter())?, p)),
        DecoderKind::Sepr | DecoderKind::Ser => {
            let llr = match mode {
                Mode::Base => extend_llrs(&ch.llrs(rx)?, &spec.gens)?,
                Mode::Extended => masked(ch.llrs(rx)?),
            };
            decode_hybrid_sepr(&spec.omega_e, &spec.gens, &llr, sched)
        }
        DecoderKind::Hepr => {
            let v = match mode {
                Mode::Base => extend_codeword(&hard_bits(rx), p, Some(&spec.gens))?.bits,
                Mode::Extended => hard_bits(rx),
            };
            decode_hard_epr(&spec.omega_e, &spec.gens, &v, sched)
        }
        DecoderKind::Bec => {
            let Received::Erasures { bits, erased } = rx else {
                return Err(Error::ModeMismatch("the erasure decoder needs a BEC reception".into()));
            };
            let (vb, ve) = match mode {
                Mode::Base => extend_erasures(bits, erased, &spec.gens)?,
                Mode::Extended => (bits.clone(), erased.clone()),
            };
            decode_bec_hybrid(&spec.omega_e, &spec.gens, &vb, &ve, sched, None)
        }
    }
}

/// Encodes, transmits and decodes frame `frame`.
pub fn run_frame(
    spec: &CodeSpec,
    plan: &ExperimentPlan,
    ch: &ChannelModel,
    frame: u64,
) -> Result<FrameOutcome> {
    let (_, xbar) = spec.random_codeword(plan.seed, frame);
    let word = spec.channel_word(&xbar, plan.mode);
    let rx = ch.transmit(&word, frame);
    let r = decode_frame(spec, plan.decoder, ch, &rx, plan.mode, &plan.schedule)?;
    let mut bit_errors = r.xbar_hat.iter().zip(&xbar).filter(|(a, b)| a != b).count() as u64;
    if let Some(res) = r.residual_erasures {
        // undetermined bits are errors even when the zero guess happens to match
        bit_errors = bit_errors.max(res as u64);
    }
    let frame_error = bit_errors > 0;
    Ok(FrameOutcome {
        bit_errors,
        frame_error,
        undetected: frame_error && r.status == DecodeStatus::Converged,
        iterations: r.iterations,
    })
}

/// Two-sided interval on the bit error rate from the per-frame error
/// counts, widened by `sqrt 2` so that it covers an independent re-run.
fn ber_interval(sum: f64, sum_sq: f64, frames: u64, nbits: usize) -> (f64, f64) {
    let f = frames as f64;
    let denom = f * nbits as f64;
    if sum == 0.0 {
        return (0.0, (3.0 / denom).min(1.0));
    }
    let ber = sum / denom;
    let var = if frames > 1 { (sum_sq - sum * sum / f) / (f - 1.0) } else { sum * sum };
    let se = (var / f).sqrt() / nbits as f64;
    let z = 1.959_964 * std::f64::consts::SQRT_2;
    ((ber - z * se).max(0.0), (ber + z * se).min(1.0))
}

/// Runs the plan on `spec`. Identical plans give identical results for any
/// number of workers.
pub fn run_sweep(spec: &CodeSpec, plan: &ExperimentPlan) -> Result<SweepResult> {
    plan.validate()?;
    let plain;
    let dec_spec = if plan.decoder == DecoderKind::Ser {
        plain = spec.with_plain_omega()?;
        &plain
    } else {
        spec
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.threads)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let nbits = spec.np();
    let mut points = Vec::with_capacity(plan.grid.len());
    for (pi, &value) in plan.grid.iter().enumerate() {
        let ch = channel_for(plan, dec_spec, value, pi)?;
        let start = Instant::now();
        let (mut frames, mut bit_errors, mut frame_errors, mut undetected, mut iters) = (0u64, 0u64, 0u64, 0u64, 0u64);
        let mut sum_sq = 0.0;
        while frames < plan.stop.max_frames && frame_errors < plan.stop.min_frame_errors {
            let end = (frames + plan.batch as u64).min(plan.stop.max_frames);
            let base = (pi as u64) << 40;
            let outcomes: Vec<FrameOutcome> = pool.install(|| {
                (frames..end)
                    .into_par_iter()
                    .map(|f| run_frame(dec_spec, plan, &ch, base | f))
                    .collect::<Result<Vec<_>>>()
            })?;
            for o in &outcomes {
                bit_errors += o.bit_errors;
                sum_sq += (o.bit_errors * o.bit_errors) as f64;
                frame_errors += u64::from(o.frame_error);
                undetected += u64::from(o.undetected);
                iters += o.iterations as u64;
            }
            frames = end;
        }
        let (ci_low, ci_high) = ber_interval(bit_errors as f64, sum_sq, frames, nbits);
        points.push(PointResult {
            channel_param: value,
            frames,
            bit_errors,
            frame_errors,
            undetected,
            ber: bit_errors as f64 / (frames as f64 * nbits as f64),
            fer: frame_errors as f64 / frames as f64,
            ci_low,
            ci_high,
            mean_iters: iters as f64 / frames as f64,
            seconds: plan.timing.then(|| start.elapsed().as_secs_f64()),
        });
    }
    Ok(SweepResult {
        decoder: plan.decoder,
        channel: plan.channel,
        mode: plan.mode,
        bits_per_frame: nbits,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf::FieldContext;
    use crate::representation::NonBinaryMatrix;
    use std::sync::Arc;

    fn fixture() -> CodeSpec {
        let ctx = Arc::new(FieldContext::new(3).unwrap());
        let mother = crate::fixtures::gallager12();
        let rows = (0..mother.n_rows())
            .map(|i| mother.row(i).iter().map(|&j| (j, 1 + (3 * i as u32 + j) % 7)).collect())
            .collect();
        CodeSpec::plain(NonBinaryMatrix::new(ctx, 12, rows).unwrap(), Mode::Base).unwrap()
    }

    #[test]
    fn clean_channel_is_error_free() {
        let spec = fixture();
        for d in DecoderKind::ALL {
            let ch = if d == DecoderKind::Bec { ChannelParam::Bec } else { ChannelParam::Bsc };
            let mut plan = ExperimentPlan::new(d, ch, vec![0.0]);
            plan.stop.max_frames = 40;
            let r = run_sweep(&spec, &plan).unwrap();
            let pt = &r.points[0];
            assert_eq!((pt.ber, pt.fer, pt.frames), (0.0, 0.0, 40), "{d}");
        }
    }

    #[test]
    fn incompatible_plans_rejected() {
        let spec = fixture();
        let mut plan = ExperimentPlan::new(DecoderKind::Seb, ChannelParam::EbN0, vec![1.0]);
        plan.mode = Mode::Extended;
        assert!(matches!(run_sweep(&spec, &plan), Err(Error::ModeMismatch(_))));
        let plan = ExperimentPlan::new(DecoderKind::Bec, ChannelParam::Bsc, vec![0.1]);
        assert!(run_sweep(&spec, &plan).is_err());
        let plan = ExperimentPlan::new(DecoderKind::Sepr, ChannelParam::Bsc, vec![]);
        assert!(run_sweep(&spec, &plan).is_err());
    }

    #[test]
    fn worker_count_does_not_matter() {
        let spec = fixture();
        let mut plan = ExperimentPlan::new(DecoderKind::Sepr, ChannelParam::EbN0, vec![1.0, 2.0]);
        plan.stop = StopRule {
            min_frame_errors: 10,
            max_frames: 300,
        };
        plan.batch = 16;
        plan.threads = 1;
        let a = run_sweep(&spec, &plan).unwrap().to_csv();
        plan.threads = 4;
        let b = run_sweep(&spec, &plan).unwrap().to_csv();
        assert_eq!(a, b);
        assert!(a.starts_with(CSV_HEADER));
        assert_eq!(a.lines().count(), 3);
    }

    #[test]
    fn ber_within_fer_bound() {
        let spec = fixture();
        let mut plan = ExperimentPlan::new(DecoderKind::Hepr, ChannelParam::Bsc, vec![0.05]);
        plan.stop.max_frames = 200;
        let r = run_sweep(&spec, &plan).unwrap();
        let pt = &r.points[0];
        assert!(pt.ber <= pt.fer + 1e-15);
        assert!(pt.undetected <= pt.frame_errors);
        assert!(pt.ci_low <= pt.ber && pt.ber <= pt.ci_high);
    }
}
