use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::SessionRecord;
use crate::dsp::{Cue, Label, PreprocessConfig, RawRecording, N_CHANNELS};
use crate::error::{Error, Result};

/// Per-session electrode drift.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    /// Log-normal sigma of the per-channel gain.
    pub gain_sigma: f64,
    /// Size of the antisymmetric perturbation in the `I + eps * A` mixing matrix.
    pub mix_epsilon: f64,
    /// Log-normal sigma of the background noise level.
    pub noise_sigma: f64,
}

impl DriftSpec {
    pub const NONE: DriftSpec = DriftSpec {
        gain_sigma: 0.0,
        mix_epsilon: 0.0,
        noise_sigma: 0.0,
    };

    /// Every component multiplied by `k`.
    pub fn scaled(self, k: f64) -> DriftSpec {
        DriftSpec {
            gain_sigma: self.gain_sigma * k,
            mix_epsilon: self.mix_epsilon * k,
            noise_sigma: self.noise_sigma * k,
        }
    }
}

impl Default for DriftSpec {
    fn default() -> Self {
        DriftSpec {
            gain_sigma: 0.35,
            mix_epsilon: 0.35,
            noise_sigma: 0.2,
        }
    }
}

/// Parameters of the synthetic multi-session motor-movement dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub n_sessions: usize,
    pub trials_per_session: usize,
    pub runs_per_session: usize,
    pub fs: u32,
    pub n_channels: usize,
    pub mu_freq_hz: f64,
    /// Bandwidth (Gaussian sigma) of the mu rhythm, Hz.
    pub mu_bandwidth_hz: f64,
    /// RMS of each hemisphere's mu source, microvolts.
    pub mu_amplitude: f64,
    /// Fractional attenuation of the contralateral mu rhythm during the cue.
    pub erd_depth: f64,
    /// RMS of the per-channel 1/f background, microvolts.
    pub noise_level: f64,
    /// Amplitude of the 50 Hz line interference, microvolts.
    pub line_noise: f64,
    pub drift: DriftSpec,
    /// Extra trials recorded under the first session's conditions and held
    /// out of every workflow, used to measure forgetting.
    pub probe_trials: usize,
    pub cue_s: f64,
    /// Rest between cues is drawn uniformly from this range, seconds.
    pub rest_s: (f64, f64),
    pub seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            n_sessions: 7,
            trials_per_session: 100,
            runs_per_session: 10,
            fs: 500,
            n_channels: N_CHANNELS,
            mu_freq_hz: 10.0,
            mu_bandwidth_hz: 1.0,
            mu_amplitude: 8.0,
            erd_depth: 0.5,
            noise_level: 6.0,
            line_noise: 5.0,
            drift: DriftSpec::default(),
            probe_trials: 40,
            cue_s: 4.0,
            rest_s: (1.5, 2.5),
            seed: 0,
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_sessions == 0 || self.runs_per_session == 0 {
            return bad("n_sessions and runs_per_session must be positive".into());
        }
        if self.trials_per_session != self.runs_per_session * 10 {
            return bad(format!(
                "trials_per_session ({}) must equal 10 x runs_per_session ({})",
                self.trials_per_session, self.runs_per_session
            ));
        }
        if self.n_channels != N_CHANNELS {
            return bad(format!("the montage has {N_CHANNELS} channels, got {}", self.n_channels));
        }
        if !(0.0..=1.0).contains(&self.erd_depth) {
            return bad(format!("erd_depth must be in [0, 1], got {}", self.erd_depth));
        }
        if self.fs == 0 || !(self.mu_freq_hz > 0.0) || self.mu_freq_hz >= f64::from(self.fs) / 2.0 {
            return bad("mu frequency must lie below Nyquist".into());
        }
        for (name, v) in [
            ("mu_bandwidth_hz", self.mu_bandwidth_hz),
            ("cue_s", self.cue_s),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("mu_amplitude", self.mu_amplitude),
            ("noise_level", self.noise_level),
            ("line_noise", self.line_noise),
            ("drift.gain_sigma", self.drift.gain_sigma),
            ("drift.mix_epsilon", self.drift.mix_epsilon),
            ("drift.noise_sigma", self.drift.noise_sigma),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if !(self.rest_s.0 >= 0.0) || self.rest_s.1 < self.rest_s.0 {
            return bad(format!("invalid rest range {:?}", self.rest_s));
        }
        Ok(())
    }
}

/// A generated dataset: the sessions in chronological order plus the
/// held-out probe set recorded under session-1 conditions.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub sessions: Vec<SessionRecord>,
    pub probe: SessionRecord,
}

/// Session transform emulating electrode displacement between days.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionDrift {
    pub gains: Vec<f64>,
    /// Row-major `n x n` mixing matrix.
    pub mixing: Vec<f64>,
    pub noise_scale: f64,
}

impl SessionDrift {
    fn draw(spec: &DriftSpec, n: usize, rng: &mut impl Rng) -> Self {
        let mut normal = || rng.sample::<f64, _>(StandardNormal);
        let gains = (0..n).map(|_| (spec.gain_sigma * normal()).exp()).collect();
        let mut mixing = vec![0.0; n * n];
        for i in 0..n {
            mixing[i * n + i] = 1.0;
            for j in i + 1..n {
                let a = spec.mix_epsilon * normal() / (n as f64).sqrt();
                mixing[i * n + j] += a;
                mixing[j * n + i] -= a;
            }
        }
        let noise_scale = (spec.noise_sigma * normal()).exp();
        SessionDrift {
            gains,
            mixing,
            noise_scale,
        }
    }
}

const SIGNAL_STREAM: u64 = 1;
const DRIFT_STREAM: u64 = 2;
const PROBE_INDEX: u64 = 1 << 20;

fn rng_for(seed: u64, session: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(session * 4 + stream);
    rng
}

fn normalize_rms(mut x: Vec<f64>, rms: f64) -> Vec<f64> {
    let power = x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64;
    if power > 0.0 {
        let k = rms / power.sqrt();
        x.iter_mut().for_each(|v| *v *= k);
    }
    x
}

/// Two independent seeded Gaussian noise signals with the amplitude
/// spectrum `shape(f)`, each scaled to the requested RMS.
///
/// Complex white noise is filtered with a real, symmetric frequency
/// response, so the real and imaginary parts of the result are independent
/// real signals with the same spectrum.
fn shaped_noise_pair(n: usize, fs: f64, rms: f64, rng: &mut impl Rng, shape: impl Fn(f64) -> f64) -> [Vec<f64>; 2] {
    if n == 0 || rms == 0.0 {
        return [vec![0.0; n], vec![0.0; n]];
    }
    // Synthesize on a power-of-two grid and keep the first `n` samples.
    let len = n.next_power_of_two();
    let mut buf: Vec<Complex<f64>> = (0..len)
        .map(|_| Complex::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let bin = k.min(len - k);
        *c *= shape(bin as f64 * fs / len as f64);
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let re = buf[..n].iter().map(|c| c.re).collect();
    let im = buf[..n].iter().map(|c| c.im).collect();
    [normalize_rms(re, rms), normalize_rms(im, rms)]
}

fn pink(f: f64) -> f64 {
    if f < 0.5 {
        0.0
    } else {
        1.0 / f.sqrt()
    }
}

/// Projection of the two hemisphere mu sources onto the montage: channels
/// 0..4 lie over the left hemisphere, 4..8 over the right.
fn projection(channel: usize) -> [f64; 2] {
    const NEAR: [f64; 4] = [1.0, 0.85, 0.6, 0.4];
    const FAR: [f64; 4] = [0.15, 0.1, 0.05, 0.0];
    if channel < 4 {
        [NEAR[channel], FAR[channel]]
    } else {
        [FAR[channel - 4], NEAR[channel - 4]]
    }
}

/// Cue labels for one session: each run is a block of five of one class
/// then five of the other, the leading class alternating between runs.
pub fn session_labels(runs: usize) -> Vec<Label> {
    (0..runs)
        .flat_map(|r| {
            let first = if r % 2 == 0 { Label::Left } else { Label::Right };
            std::iter::repeat(first).take(5).chain(std::iter::repeat(first.other()).take(5))
        })
        .collect()
}

/// Continuous raw recording of one session (before preprocessing).
pub fn generate_recording(spec: &GeneratorSpec, labels: &[Label], drift: &SessionDrift, rng: &mut impl Rng) -> Result<RawRecording> {
    let fs = f64::from(spec.fs);
    let cue_len = (spec.cue_s * fs).round() as usize;
    let lead = (2.0 * fs) as usize;
    let mut cues = Vec::with_capacity(labels.len());
    let mut t = lead;
    for &label in labels {
        cues.push(Cue { onset: t, label });
        let rest = rng.gen_range(spec.rest_s.0..=spec.rest_s.1);
        t += cue_len + (rest * fs).round() as usize;
    }
    let n = t + lead;

    // Mu sources with the event-related desynchronization envelope.
    let (mu_f, mu_bw) = (spec.mu_freq_hz, spec.mu_bandwidth_hz);
    let mu_shape = |f: f64| (-0.5 * ((f - mu_f) / mu_bw).powi(2)).exp();
    let mut sources = shaped_noise_pair(n, fs, spec.mu_amplitude, rng, mu_shape);
    let ramp = (0.25 * fs) as usize;
    for cue in &cues {
        // Moving the left hand desynchronizes the right hemisphere.
        let hemi = match cue.label {
            Label::Left => 1,
            Label::Right => 0,
        };
        let end = cue.onset + cue_len;
        for i in cue.onset.saturating_sub(ramp)..(end + ramp).min(n) {
            let depth = if i < cue.onset {
                (i + ramp - cue.onset) as f64 / ramp as f64
            } else if i >= end {
                (end + ramp - i) as f64 / ramp as f64
            } else {
                1.0
            };
            sources[hemi][i] *= 1.0 - spec.erd_depth * depth;
        }
    }

    let nc = spec.n_channels;
    let noise_rms = spec.noise_level * drift.noise_scale;
    let mut clean: Vec<Vec<f64>> = Vec::with_capacity(nc);
    while clean.len() < nc {
        clean.extend(shaped_noise_pair(n, fs, noise_rms, rng, pink));
    }
    clean.truncate(nc);
    for (c, row) in clean.iter_mut().enumerate() {
        let [wl, wr] = projection(c);
        for ((v, &l), &r) in row.iter_mut().zip(&sources[0]).zip(&sources[1]) {
            *v += wl * l + wr * r;
        }
    }

    let w = 2.0 * std::f64::consts::PI * 50.0 / fs;
    let mut channels = Vec::with_capacity(nc);
    let mut mixed = vec![0.0f64; n];
    for r in 0..nc {
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        mixed.iter_mut().for_each(|v| *v = 0.0);
        for (c, x) in clean.iter().enumerate() {
            let m = drift.mixing[r * nc + c];
            if m != 0.0 {
                for (acc, &xi) in mixed.iter_mut().zip(x) {
                    *acc += m * xi;
                }
            }
        }
        let g = drift.gains[r];
        let row: Vec<f32> = mixed
            .iter()
            .enumerate()
            .map(|(i, &v)| (g * v + spec.line_noise * (w * i as f64 + phase).sin()) as f32)
            .collect();
        channels.push(row);
    }
    RawRecording::new(spec.fs, channels, cues)
}

/// The drift transform applied to session `index` (0-based).
pub fn session_drift(spec: &GeneratorSpec, index: usize) -> SessionDrift {
    SessionDrift::draw(&spec.drift, spec.n_channels, &mut rng_for(spec.seed, index as u64, DRIFT_STREAM))
}

fn build_session(spec: &GeneratorSpec, pre: &PreprocessConfig, index: usize, signal_index: u64, labels: &[Label]) -> Result<SessionRecord> {
    let drift = session_drift(spec, index);
    let mut rng = rng_for(spec.seed, signal_index, SIGNAL_STREAM);
    let raw = generate_recording(spec, labels, &drift, &mut rng)?;
    let trials = pre.run(&raw, index as u32 + 1)?;
    Ok(SessionRecord {
        fs: spec.fs,
        trials,
    })
}

/// Generates every session and the probe set, preprocessed into trial windows.
pub fn generate_dataset(spec: &GeneratorSpec) -> Result<Dataset> {
    generate_dataset_with(spec, &PreprocessConfig::default())
}

pub fn generate_dataset_with(spec: &GeneratorSpec, pre: &PreprocessConfig) -> Result<Dataset> {
    spec.validate()?;
    let labels = session_labels(spec.runs_per_session);
    let sessions = (0..spec.n_sessions)
        .map(|s| build_session(spec, pre, s, s as u64, &labels))
        .collect::<Result<Vec<_>>>()?;
    let probe_labels: Vec<Label> = session_labels(spec.probe_trials.div_ceil(10))
        .into_iter()
        .take(spec.probe_trials)
        .collect();
    let probe = build_session(spec, pre, 0, PROBE_INDEX, &probe_labels)?;
    Ok(Dataset { sessions, probe })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_follow_run_blocks() {
        let l = session_labels(10);
        assert_eq!(l.len(), 100);
        assert_eq!(l.iter().filter(|&&x| x == Label::Left).count(), 50);
        assert!(l[..5].iter().all(|&x| x == Label::Left));
        assert!(l[5..10].iter().all(|&x| x == Label::Right));
        assert!(l[10..15].iter().all(|&x| x == Label::Right));
    }

    #[test]
    fn zero_drift_is_identity() {
        let spec = GeneratorSpec {
            drift: DriftSpec::NONE,
            ..GeneratorSpec::default()
        };
        let d = session_drift(&spec, 3);
        assert!(d.gains.iter().all(|&g| g == 1.0));
        assert_eq!(d.noise_scale, 1.0);
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(d.mixing[i * 8 + j], if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn shaped_noise_has_requested_rms() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for x in shaped_noise_pair(5000, 500.0, 3.0, &mut rng, pink) {
            let rms = (x.iter().map(|v| v * v).sum::<f64>() / 5000.0).sqrt();
            assert!((rms - 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let s = GeneratorSpec {
            trials_per_session: 90,
            ..GeneratorSpec::default()
        };
        assert!(s.validate().is_err());
        let s = GeneratorSpec {
            erd_depth: 1.5,
            ..GeneratorSpec::default()
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn small_dataset_shape_and_determinism() {
        let spec = GeneratorSpec {
            n_sessions: 2,
            trials_per_session: 20,
            runs_per_session: 2,
            probe_trials: 10,
            seed: 7,
            ..GeneratorSpec::default()
        };
        let a = generate_dataset(&spec).unwrap();
        let b = generate_dataset(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sessions.len(), 2);
        assert_eq!(a.sessions[1].trials.len(), 20);
        assert_eq!(a.sessions[1].trials[0].session_id, 2);
        assert_eq!(a.probe.trials.len(), 10);
        assert_ne!(a.probe.trials[0].data(), a.sessions[0].trials[0].data());
    }
}
