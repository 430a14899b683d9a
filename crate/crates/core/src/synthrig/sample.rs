use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Pose, Result, Rig, RigError};

pub const DEFAULT_FRAME_RATE: f64 = 24.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    /// Smooth sinusoidal sweep of every controller, starting at the neutral pose.
    Clip,
    /// Independent uniform samples over each controller range.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlSequence {
    pub frame_rate: f64,
    pub frames: Vec<Pose>,
    /// Set when values were deliberately pushed outside controller ranges.
    pub out_of_range: bool,
}

/// Sweep frequency in Hz of scalar dimension `d`. Golden-ratio spacing keeps
/// every pair of frequencies incommensurate.
fn clip_frequency(d: usize) -> f64 {
    let golden = 0.618_033_988_749_894_9;
    0.15 + 0.2 * ((d + 1) as f64 * golden).fract()
}

pub fn sample_animation(rig: &Rig, frames: usize, mode: SampleMode, seed: u64) -> Result<ControlSequence> {
    if frames == 0 {
        return Err(RigError::BadParameter("frame count must be at least 1".into()));
    }
    let dims: Vec<([f64; 2], f64)> =
        rig.controllers.iter().flat_map(|c| c.range.iter().copied().zip(c.neutral.iter().copied())).collect();
    let out = match mode {
        SampleMode::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..frames).map(|_| dims.iter().map(|(r, _)| rng.gen_range(r[0]..=r[1])).collect()).collect()
        }
        SampleMode::Clip => (0..frames)
            .map(|f| {
                let t = f as f64 / DEFAULT_FRAME_RATE;
                dims.iter()
                    .enumerate()
                    .map(|(d, (r, neutral))| {
                        let u0 = ((neutral - r[0]) / (r[1] - r[0])).clamp(0.0, 1.0);
                        let phase = (1.0 - 2.0 * u0).acos();
                        let u = 0.5 - 0.5 * (std::f64::consts::TAU * clip_frequency(d) * t + phase).cos();
                        // Keep the neutral frame exact.
                        if f == 0 { *neutral } else { r[0] + u * (r[1] - r[0]) }
                    })
                    .collect()
            })
            .collect(),
    };
    Ok(ControlSequence { frame_rate: DEFAULT_FRAME_RATE, frames: out, out_of_range: false })
}

/// For every base pose and every scalar dimension, the pose with that
/// dimension set to `factor * max`. Flagged as out of range.
pub fn out_of_range_poses(rig: &Rig, base: &[Pose], factor: f64) -> ControlSequence {
    let maxima: Vec<f64> = rig.controllers.iter().flat_map(|c| c.range.iter().map(|r| r[1])).collect();
    let mut frames = Vec::with_capacity(base.len() * maxima.len());
    for pose in base {
        for (d, &hi) in maxima.iter().enumerate() {
            let mut p = pose.clone();
            p[d] = factor * hi;
            frames.push(p);
        }
    }
    ControlSequence { frame_rate: DEFAULT_FRAME_RATE, frames, out_of_range: true }
}
