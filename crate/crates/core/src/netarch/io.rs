//! Binary weight file.
//!
//! Layout (all integers little-endian `u32` unless noted):
//!
//! ```text
//! "MCNN"  version  patch_size  conv_mode(u8: 0 valid, 1 same)
//! filters[6]  fc_units[2]  dropout_keep(f32)  class_count
//! then, as little-endian f32, in order:
//!   conv1..conv6: kernels, bias, gamma, beta, running mean, running var
//!   fc1:          weights, bias, gamma, beta, running mean, running var
//!   fc2:          weights, bias
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::network::{build_network, NetworkWeights};
use super::spec::{NetworkSpec, CONV_LAYERS};
use crate::error::{Error, Result};
use crate::neuralcore::ConvMode;

pub const WEIGHT_FILE_MAGIC: &[u8; 4] = b"MCNN";
pub const WEIGHT_FILE_VERSION: u32 = 1;

fn values_in_order(w: &NetworkWeights) -> Vec<&[f64]> {
    let mut v: Vec<&[f64]> = Vec::new();
    for c in &w.convs {
        v.extend([
            c.kernels.data(),
            c.bias.data(),
            c.bn.gamma.data(),
            c.bn.beta.data(),
            &c.bn.running.mean[..],
            &c.bn.running.var[..],
        ]);
    }
    v.extend([w.fc1.weights.data(), w.fc1.bias.data()]);
    if let Some(bn) = &w.fc1.bn {
        v.extend([
            bn.gamma.data(),
            bn.beta.data(),
            &bn.running.mean[..],
            &bn.running.var[..],
        ]);
    }
    v.extend([w.fc2.weights.data(), w.fc2.bias.data()]);
    v
}

fn values_in_order_mut(w: &mut NetworkWeights) -> Vec<&mut [f64]> {
    let mut v: Vec<&mut [f64]> = Vec::new();
    for c in &mut w.convs {
        v.push(c.kernels.data_mut());
        v.push(c.bias.data_mut());
        v.push(c.bn.gamma.data_mut());
        v.push(c.bn.beta.data_mut());
        v.push(&mut c.bn.running.mean[..]);
        v.push(&mut c.bn.running.var[..]);
    }
    v.push(w.fc1.weights.data_mut());
    v.push(w.fc1.bias.data_mut());
    if let Some(bn) = &mut w.fc1.bn {
        v.push(bn.gamma.data_mut());
        v.push(bn.beta.data_mut());
        v.push(&mut bn.running.mean[..]);
        v.push(&mut bn.running.var[..]);
    }
    v.push(w.fc2.weights.data_mut());
    v.push(w.fc2.bias.data_mut());
    v
}

pub fn encode_weights(w: &NetworkWeights) -> Vec<u8> {
    let s = &w.spec;
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHT_FILE_MAGIC);
    out.extend_from_slice(&WEIGHT_FILE_VERSION.to_le_bytes());
    out.extend_from_slice(&(s.patch_size as u32).to_le_bytes());
    out.push(match s.conv_mode {
        ConvMode::Valid => 0,
        ConvMode::Same => 1,
    });
    for f in s.filter_counts {
        out.extend_from_slice(&(f as u32).to_le_bytes());
    }
    for u in s.fc_units {
        out.extend_from_slice(&(u as u32).to_le_bytes());
    }
    out.extend_from_slice(&(s.dropout_keep as f32).to_le_bytes());
    out.extend_from_slice(&(s.class_count as u32).to_le_bytes());
    for block in values_in_order(w) {
        for &v in block {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn save_weights(w: &NetworkWeights, path: impl AsRef<Path>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_weights(w))?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(Error::Truncated)?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn decode_weights(bytes: &[u8]) -> Result<NetworkWeights> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).map_err(|_| Error::BadFormat)? != WEIGHT_FILE_MAGIC {
        return Err(Error::BadFormat);
    }
    let version = r.u32()?;
    if version != WEIGHT_FILE_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let patch_size = r.u32()? as usize;
    let conv_mode = match r.take(1)?[0] {
        0 => ConvMode::Valid,
        1 => ConvMode::Same,
        other => return Err(Error::SpecMismatch(format!("unknown conv mode code {other}"))),
    };
    let mut filter_counts = [0; CONV_LAYERS];
    for f in &mut filter_counts {
        *f = r.u32()? as usize;
    }
    let fc_units = [r.u32()? as usize, r.u32()? as usize];
    let dropout_keep = r.f32()? as f64;
    let class_count = r.u32()? as usize;
    let spec = NetworkSpec {
        patch_size,
        conv_mode,
        filter_counts,
        fc_units,
        dropout_keep,
        class_count,
    };
    spec.validate().map_err(|e| Error::SpecMismatch(e.to_string()))?;
    let mut w = build_network(&spec, 0)?;
    for block in values_in_order_mut(&mut w) {
        for v in block.iter_mut() {
            *v = r.f32()? as f64;
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::SpecMismatch(format!(
            "{} trailing bytes after the parameters the header describes",
            bytes.len() - r.pos
        )));
    }
    Ok(w)
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<NetworkWeights> {
    decode_weights(&fs::read(path)?)
}

/// Loads weights and checks they were built for `expected`.
pub fn load_weights_expecting(path: impl AsRef<Path>, expected: &NetworkSpec) -> Result<NetworkWeights> {
    let w = load_weights(path)?;
    if w.spec != *expected {
        return Err(Error::SpecMismatch(format!(
            "file holds N={} {} {:?}, expected N={} {} {:?}",
            w.spec.patch_size,
            w.spec.conv_mode,
            w.spec.filter_counts,
            expected.patch_size,
            expected.conv_mode,
            expected.filter_counts
        )));
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralcore::Phase;
    use crate::tensor::Tensor;

    fn spec() -> NetworkSpec {
        NetworkSpec::new(9, ConvMode::Same).with_filters([2, 3, 2, 3, 2, 2])
    }

    #[test]
    fn round_trip_is_bitwise() {
        let mut w = build_network(&spec(), 3).unwrap();
        // make running stats non-trivial
        let x = Tensor::new(&[2, 1, 9, 9], (0..162).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let (_, cache) = w.forward(&x, Phase::Train, 1).unwrap();
        w.commit_running_stats(&cache);
        w.round_to_storage();
        let back = decode_weights(&encode_weights(&w)).unwrap();
        assert_eq!(back, w);
        assert_eq!(back.fingerprint(), w.fingerprint());
        assert_eq!(back.predict(&x).unwrap(), w.predict(&x).unwrap());
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode_weights(&build_network(&spec(), 1).unwrap());
        bytes[0] = b'X';
        assert!(matches!(decode_weights(&bytes), Err(Error::BadFormat)));
    }

    #[test]
    fn wrong_version() {
        let mut bytes = encode_weights(&build_network(&spec(), 1).unwrap());
        bytes[4] = 9;
        assert!(matches!(decode_weights(&bytes), Err(Error::UnsupportedVersion(9))));
    }

    #[test]
    fn truncated() {
        let bytes = encode_weights(&build_network(&spec(), 1).unwrap());
        assert!(matches!(
            decode_weights(&bytes[..bytes.len() - 3]),
            Err(Error::Truncated)
        ));
        assert!(matches!(decode_weights(&bytes[..10]), Err(Error::Truncated)));
    }

    #[test]
    fn mode_mismatch_on_expecting_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("valid.mcnn");
        let valid = NetworkSpec::new(43, ConvMode::Valid).with_filters([2; 6]);
        save_weights(&build_network(&valid, 1).unwrap(), &path).unwrap();
        let mut same = valid.clone();
        same.conv_mode = ConvMode::Same;
        assert!(matches!(
            load_weights_expecting(&path, &same),
            Err(Error::SpecMismatch(_))
        ));
        assert!(load_weights_expecting(&path, &valid).is_ok());
    }
}
