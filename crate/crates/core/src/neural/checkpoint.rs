//! `DAXM` checkpoint: a list of [`TrainState`]s, little-endian.
//!
//! ```text
//! "DAXM" u32 version=1 u8 dtype(4|8) u64 n_states
//! per state:
//!   u64 n_widths, u64 widths[n]; u64 n_layers, u8 activation[n_layers]
//!   u64 n, T params[n]; u64 n, T adam_m[n]; u64 n, T adam_v[n]; u64 adam_step
//!   u64 epoch; f64 best_val_loss
//!   u8 rng_seed[32]; u64 rng_stream; u128 rng_word_pos
//!   u64 n_epochs; per epoch: f64 train_loss, u8 has_val, f64 val_loss
//! ```

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Activation, Adam, EpochLog, Mlp, NeuralError, Result, TrainState};
use crate::binio::{BinError, ByteReader, ByteWriter};
use crate::scalar::Real;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DAXM";
pub const CHECKPOINT_VERSION: u32 = 1;

pub(crate) fn write_mlp<T: Real>(w: &mut ByteWriter, net: &Mlp<T>) {
    w.usizes(net.widths());
    w.len(net.activations().len());
    for a in net.activations() {
        w.u8(a.tag());
    }
    w.reals(net.params());
}

pub(crate) fn read_mlp<T: Real>(r: &mut ByteReader) -> Result<Mlp<T>> {
    let widths = r.usizes()?;
    let n = r.len()?;
    let acts = (0..n)
        .map(|_| {
            let tag = r.u8()?;
            Activation::from_tag(tag).ok_or_else(|| BinError::Malformed(format!("activation tag {tag}")))
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Mlp::from_parts(widths, acts, r.reals()?)
}

fn write_state<T: Real>(w: &mut ByteWriter, s: &TrainState<T>) {
    write_mlp(w, &s.net);
    w.reals(&s.adam.m);
    w.reals(&s.adam.v);
    w.u64(s.adam.step);
    w.u64(s.epoch);
    w.f64(s.best_val_loss);
    w.bytes(&s.rng.get_seed());
    w.u64(s.rng.get_stream());
    w.u128(s.rng.get_word_pos());
    w.len(s.history.len());
    for e in &s.history {
        w.f64(e.train_loss);
        w.u8(u8::from(e.val_loss.is_some()));
        w.f64(e.val_loss.unwrap_or(0.0));
    }
}

fn read_state<T: Real>(r: &mut ByteReader) -> Result<TrainState<T>> {
    let net = read_mlp::<T>(r)?;
    let m = r.reals()?;
    let v = r.reals()?;
    if m.len() != net.param_count() || v.len() != net.param_count() {
        return Err(BinError::Malformed("optimizer moments do not match parameter count".into()).into());
    }
    let adam = Adam { m, v, step: r.u64()? };
    let epoch = r.u64()?;
    let best_val_loss = r.f64()?;
    let seed: [u8; 32] = r.take(32)?.try_into().unwrap();
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(r.u64()?);
    rng.set_word_pos(r.u128()?);
    let n = r.len()?;
    let mut history = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let train_loss = r.f64()?;
        let has_val = r.u8()? != 0;
        let val = r.f64()?;
        history.push(EpochLog { train_loss, val_loss: has_val.then_some(val) });
    }
    Ok(TrainState { net, adam, rng, epoch, best_val_loss, history })
}

pub fn encode_checkpoint<T: Real>(states: &[TrainState<T>]) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.u8(T::DTYPE_TAG);
    w.len(states.len());
    for s in states {
        write_state(&mut w, s);
    }
    w.buf
}

pub fn decode_checkpoint<T: Real>(bytes: &[u8]) -> Result<Vec<TrainState<T>>> {
    let mut r = ByteReader::new(bytes);
    r.magic(CHECKPOINT_MAGIC)?;
    r.version(CHECKPOINT_VERSION)?;
    r.dtype::<T>()?;
    let n = r.len()?;
    let states = (0..n).map(|_| read_state(&mut r)).collect::<Result<Vec<_>>>()?;
    if !r.is_at_end() {
        return Err(BinError::Malformed("trailing bytes".into()).into());
    }
    Ok(states)
}

/// Written to a temporary file first, then renamed over `path`.
pub fn save_checkpoint<T: Real>(states: &[TrainState<T>], path: &Path) -> Result<()> {
    atomic_write(path, &encode_checkpoint(states))?;
    Ok(())
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<Vec<TrainState<T>>> {
    decode_checkpoint(&std::fs::read(path)?)
}

pub(crate) fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

impl From<BinError> for NeuralError {
    fn from(e: BinError) -> Self {
        NeuralError::Format(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::neural::{train, TrainConfig, TrainTask};

    fn trained() -> TrainState<f32> {
        let x = Matrix::from_rows(&[vec![0.0f32, 1.0], vec![1.0, 0.0], vec![0.5, 0.5]]);
        let y = Matrix::from_rows(&[vec![1.0f32], vec![0.0], vec![0.3]]);
        let mut t = [TrainTask { state: TrainState::init(&[2, 4, 1], 1).unwrap(), x: x.clone(), y: y.clone(), validation: Some((x, y)) }];
        train(&mut t, &TrainConfig { epochs: 5, lr: 0.01, batch_size: Some(2), ..TrainConfig::default() }, None).unwrap();
        let [t] = t;
        t.state
    }

    #[test]
    fn save_load_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.daxm");
        let s = trained();
        save_checkpoint(&[s.clone()], &p).unwrap();
        let back = load_checkpoint::<f32>(&p).unwrap();
        assert_eq!(back.len(), 1);
        assert!(back[0].bitwise_eq(&s));
        assert_eq!(encode_checkpoint(&back), std::fs::read(&p).unwrap());
    }

    #[test]
    fn bad_files_are_rejected() {
        let bytes = encode_checkpoint(&[trained()]);
        let mut wrong = bytes.clone();
        wrong[..4].copy_from_slice(b"DAXB");
        assert!(matches!(decode_checkpoint::<f32>(&wrong), Err(NeuralError::Format(BinError::Magic { .. }))));
        let mut ver = bytes.clone();
        ver[4] = 9;
        assert!(matches!(decode_checkpoint::<f32>(&ver), Err(NeuralError::Format(BinError::Version { found: 9, .. }))));
        assert!(matches!(decode_checkpoint::<f64>(&bytes), Err(NeuralError::Format(BinError::Dtype { .. }))));
        for cut in [3, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(decode_checkpoint::<f32>(&bytes[..cut]).is_err(), "cut at {cut}");
        }
    }
}
