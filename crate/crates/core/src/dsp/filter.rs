use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use super::recording::RawRecording;
use crate::error::{Error, Result};

/// Poles closer to the unit circle than this are rejected.
const STABILITY_MARGIN: f64 = 1e-9;

/// One second-order section, normalized so that `a0 == 1`:
///
/// `y[n] = b0 x[n] + b1 x[n-1] + b2 x[n-2] - a1 y[n-1] - a2 y[n-2]`
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    /// Complex response at normalized angular frequency `omega` (rad/sample).
    pub fn response(&self, omega: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -omega);
        let z2 = z1 * z1;
        let num = self.b0 + z1 * self.b1 + z2 * self.b2;
        let den = 1.0 + z1 * self.a1 + z2 * self.a2;
        num / den
    }

    /// Roots of `z^2 + a1 z + a2`.
    pub fn poles(&self) -> [Complex64; 2] {
        let disc = Complex64::new(self.a1 * self.a1 - 4.0 * self.a2, 0.0).sqrt();
        [(-self.a1 + disc) / 2.0, (-self.a1 - disc) / 2.0]
    }

    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.norm() < 1.0 - STABILITY_MARGIN)
    }

    fn scaled(self, g: f64) -> Biquad {
        Biquad {
            b0: self.b0 * g,
            b1: self.b1 * g,
            b2: self.b2 * g,
            ..self
        }
    }
}

/// Ordered second-order sections applied one after the other.
#[derive(Clone, Debug, PartialEq)]
pub struct BiquadCascade {
    fs: f64,
    stages: Vec<Biquad>,
}

impl BiquadCascade {
    pub fn new(fs: f64, stages: Vec<Biquad>) -> Result<Self> {
        if !(fs > 0.0) {
            return Err(Error::Parameter(format!("sampling rate {fs} must be positive")));
        }
        if let Some(i) = stages.iter().position(|s| !s.is_stable()) {
            return Err(Error::Design(format!("section {i} has a pole on or outside the unit circle")));
        }
        Ok(BiquadCascade { fs, stages })
    }

    pub fn stages(&self) -> &[Biquad] {
        &self.stages
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn response_at(&self, freq_hz: f64) -> Complex64 {
        let omega = 2.0 * PI * freq_hz / self.fs;
        self.stages
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(omega))
    }

    pub fn magnitude_at(&self, freq_hz: f64) -> f64 {
        self.response_at(freq_hz).norm()
    }

    /// Magnitude in dB. Exact zeros map to negative infinity.
    pub fn gain_db(&self, freq_hz: f64) -> f64 {
        20.0 * self.magnitude_at(freq_hz).log10()
    }

    /// Filters one channel from a zero initial state (transposed direct form II).
    pub fn filter(&self, input: &[f32]) -> Vec<f32> {
        let mut buf: Vec<f64> = input.iter().map(|&v| f64::from(v)).collect();
        for s in &self.stages {
            let (mut z1, mut z2) = (0.0f64, 0.0f64);
            for v in buf.iter_mut() {
                let x = *v;
                let y = s.b0 * x + z1;
                z1 = s.b1 * x - s.a1 * y + z2;
                z2 = s.b2 * x - s.a2 * y;
                *v = y;
            }
        }
        buf.into_iter().map(|v| v as f32).collect()
    }

    /// Concatenates two cascades running at the same rate.
    pub fn then(mut self, other: &BiquadCascade) -> Result<BiquadCascade> {
        if self.fs != other.fs {
            return Err(Error::Parameter(format!(
                "cannot chain cascades at {} Hz and {} Hz",
                self.fs, other.fs
            )));
        }
        self.stages.extend_from_slice(&other.stages);
        Ok(self)
    }
}

/// Causal, channel-independent filtering; each channel starts from zero state.
pub fn apply_filter(cascade: &BiquadCascade, rec: &RawRecording) -> RawRecording {
    rec.map_channels(|ch| cascade.filter(ch))
}

/// Butterworth band-pass of total order `order` (so `order / 2` sections),
/// designed by bilinear transform with pre-warped band edges.
pub fn design_bandpass(fs: f64, low: f64, high: f64, order: usize) -> Result<BiquadCascade> {
    if !(fs > 0.0) || !(low > 0.0) || !(low < high) || !(high < fs / 2.0) {
        return Err(Error::Parameter(format!(
            "band-pass edges must satisfy 0 < low < high < fs/2, got low={low} high={high} fs={fs}"
        )));
    }
    if !matches!(order, 2 | 4 | 6 | 8) {
        return Err(Error::Parameter(format!("band-pass order must be 2, 4, 6 or 8, got {order}")));
    }
    let proto_order = order / 2;
    let k = 2.0 * fs;
    let w_lo = k * (PI * low / fs).tan();
    let w_hi = k * (PI * high / fs).tan();
    let bw = w_hi - w_lo;
    let w0_sq = w_lo * w_hi;

    // Low-pass prototype poles on the unit semicircle in the left half plane.
    // Only the upper-half-plane member of each conjugate pair (and the real
    // pole for odd orders) is kept; its band-pass images pair with their conjugates.
    let mut pole_pairs: Vec<Complex64> = Vec::with_capacity(proto_order);
    for i in 0..proto_order {
        let theta = PI * (2 * i + proto_order + 1) as f64 / (2 * proto_order) as f64;
        let p = Complex64::from_polar(1.0, theta);
        if p.im > 1e-12 {
            let scaled = p * bw;
            let disc = (scaled * scaled - 4.0 * w0_sq).sqrt();
            pole_pairs.push((scaled + disc) / 2.0);
            pole_pairs.push((scaled - disc) / 2.0);
        } else if p.im.abs() <= 1e-12 {
            let scaled = p.re * bw;
            let disc = Complex64::new(scaled * scaled - 4.0 * w0_sq, 0.0).sqrt();
            pole_pairs.push((scaled + disc) / 2.0);
        }
    }

    let omega0 = 2.0 * (w0_sq.sqrt() / k).atan();
    let mut stages = Vec::with_capacity(proto_order);
    for s in pole_pairs {
        let z = (k + s) / (k - s);
        let raw = Biquad {
            b0: 1.0,
            b1: 0.0,
            b2: -1.0,
            a1: -2.0 * z.re,
            a2: z.norm_sqr(),
        };
        let g = raw.response(omega0).norm();
        if !(g.is_finite() && g > 0.0) {
            return Err(Error::Design(format!("degenerate section gain {g}")));
        }
        stages.push(raw.scaled(1.0 / g));
    }
    BiquadCascade::new(fs, stages)
}

/// Second-order notch with its zero pair on the unit circle at `f0`.
pub fn design_notch(fs: f64, f0: f64, q: f64) -> Result<BiquadCascade> {
    if !(fs > 0.0) || !(f0 > 0.0) || !(f0 < fs / 2.0) {
        return Err(Error::Parameter(format!(
            "notch frequency must satisfy 0 < f0 < fs/2, got f0={f0} fs={fs}"
        )));
    }
    if !(q > 0.0) {
        return Err(Error::Parameter(format!("notch quality factor must be positive, got {q}")));
    }
    let w0 = 2.0 * PI * f0 / fs;
    let alpha = w0.sin() / (2.0 * q);
    let a0 = 1.0 + alpha;
    let cos = w0.cos();
    let stage = Biquad {
        b0: 1.0 / a0,
        b1: -2.0 * cos / a0,
        b2: 1.0 / a0,
        a1: -2.0 * cos / a0,
        a2: (1.0 - alpha) / a0,
    };
    BiquadCascade::new(fs, vec![stage])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn db(x: f64) -> f64 {
        20.0 * x.log10()
    }

    #[test]
    fn bandpass_has_order_over_two_stable_sections() {
        for order in [2, 4, 6, 8] {
            let c = design_bandpass(500.0, 0.5, 100.0, order).unwrap();
            assert_eq!(c.stages().len(), order / 2);
            assert!(c.stages().iter().all(Biquad::is_stable));
        }
    }

    #[test]
    fn bandpass_response_contract() {
        let c = design_bandpass(500.0, 0.5, 100.0, 4).unwrap();
        assert_eq!(c.magnitude_at(0.0), 0.0);
        assert!(db(c.magnitude_at(10.0)).abs() < 1.0);
        for edge in [0.5, 100.0] {
            let g = db(c.magnitude_at(edge));
            assert!((g + 3.0).abs() <= 0.5, "edge {edge} Hz at {g} dB");
        }
    }

    #[test]
    fn bandpass_rejects_bad_parameters() {
        assert!(matches!(design_bandpass(500.0, 1.0, 1.0, 4), Err(Error::Parameter(_))));
        assert!(matches!(design_bandpass(500.0, 0.5, 260.0, 4), Err(Error::Parameter(_))));
        assert!(matches!(design_bandpass(500.0, 0.0, 100.0, 4), Err(Error::Parameter(_))));
        assert!(matches!(design_bandpass(500.0, 0.5, 100.0, 3), Err(Error::Parameter(_))));
    }

    #[test]
    fn notch_response_contract() {
        let c = design_notch(500.0, 50.0, 30.0).unwrap();
        assert_eq!(c.stages().len(), 1);
        assert!(db(c.magnitude_at(50.0)) <= -30.0);
        assert!(db(c.magnitude_at(45.0)) >= -3.0);
        let zeros_radius = c.stages()[0].b2 / c.stages()[0].b0;
        assert!((zeros_radius - 1.0).abs() < 1e-12);
    }

    #[test]
    fn notch_rejects_above_nyquist() {
        assert!(matches!(design_notch(500.0, 300.0, 30.0), Err(Error::Parameter(_))));
        assert!(matches!(design_notch(500.0, 50.0, 0.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn zero_input_stays_zero() {
        let c = design_bandpass(500.0, 0.5, 100.0, 4).unwrap();
        assert!(c.filter(&[0.0; 1000]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn notch_kills_steady_state_50hz() {
        let c = design_notch(500.0, 50.0, 30.0).unwrap();
        let x: Vec<f32> = (0..20_000)
            .map(|n| (2.0 * PI * 50.0 * n as f64 / 500.0).sin() as f32)
            .collect();
        let y = c.filter(&x);
        let tail = y[15_000..].iter().fold(0.0f32, |m, v| m.max(v.abs()));
        assert!(tail <= 0.032, "steady-state amplitude {tail}");
    }

    #[test]
    fn bandpass_removes_dc() {
        let c = design_bandpass(500.0, 0.5, 100.0, 4).unwrap();
        let y = c.filter(&vec![1.0; 20_000]);
        assert!(y[19_000..].iter().all(|v| v.abs() < 1e-3));
    }

    #[test]
    fn chaining_requires_equal_rates() {
        let a = design_notch(500.0, 50.0, 30.0).unwrap();
        let b = design_notch(250.0, 50.0, 30.0).unwrap();
        assert!(a.clone().then(&b).is_err());
        assert_eq!(a.clone().then(&a).unwrap().stages().len(), 2);
    }
}
