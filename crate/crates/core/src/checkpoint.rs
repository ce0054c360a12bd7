//! Checkpoint files: a short text header describing the network, then the
//! flat parameter vector as little-endian `f64`.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::network::{Activation, FourierFeatures, MlpParams, NetworkConfig};
use crate::scalar::Scalar;

const MAGIC: &str = "NINTCKPT";
const VERSION: &str = "1";

fn theta_bytes<T: Scalar>(theta: &[T]) -> Vec<u8> {
    theta.iter().flat_map(|v| v.to_f64_lossy().to_le_bytes()).collect()
}

/// Hex SHA-256 of the parameters widened to `f64`.
pub fn theta_digest<T: Scalar>(params: &MlpParams<T>) -> String {
    Sha256::digest(theta_bytes(params.theta()))
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

pub fn encode<T: Scalar>(config: &NetworkConfig, params: &MlpParams<T>) -> Vec<u8> {
    let mut header = format!("{MAGIC}\nversion={VERSION}\n");
    let _ = writeln!(header, "depth={}", config.depth);
    let _ = writeln!(header, "width={}", config.width);
    let _ = writeln!(header, "in_dim={}", config.in_dim);
    let _ = writeln!(header, "out_dim={}", config.out_dim);
    let _ = writeln!(header, "activation={}", config.activation.name());
    let _ = writeln!(header, "omega0={:?}", config.omega0);
    if let Some(ff) = config.fourier_features {
        let _ = writeln!(header, "fourier_count={}", ff.count);
        let _ = writeln!(header, "fourier_scale={:?}", ff.scale);
    }
    let _ = writeln!(header, "init_seed={}", config.init_seed);
    let _ = writeln!(header, "theta_len={}", params.len());
    header.push_str("end\n");
    let mut out = header.into_bytes();
    out.extend(theta_bytes(params.theta()));
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<(NetworkConfig, MlpParams<f64>)> {
    let bad = |why: String| Error::decode(path, why);
    let mut config = NetworkConfig::siren(1, 1, 1, 1);
    let mut fourier_count = None;
    let mut fourier_scale = None;
    let mut theta_len = None;
    let mut offset = 0;
    let mut lines = 0;
    loop {
        let rest = &bytes[offset..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("header is not terminated by `end`".into()))?;
        let line = std::str::from_utf8(&rest[..end]).map_err(|_| bad("header is not UTF-8".into()))?;
        offset += end + 1;
        lines += 1;
        if lines == 1 {
            if line != MAGIC {
                return Err(bad("not a checkpoint file".into()));
            }
            continue;
        }
        if line == "end" {
            break;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("malformed header line `{line}`")))?;
        let num = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| bad(format!("`{key}` is not an integer")))
        };
        let real = |v: &str| v.parse::<f64>().map_err(|_| bad(format!("`{key}` is not a number")));
        match key {
            "version" if value == VERSION => {}
            "version" => return Err(bad(format!("unsupported version {value}"))),
            "depth" => config.depth = num(value)?,
            "width" => config.width = num(value)?,
            "in_dim" => config.in_dim = num(value)?,
            "out_dim" => config.out_dim = num(value)?,
            "activation" => config.activation = Activation::parse(value)?,
            "omega0" => config.omega0 = real(value)?,
            "fourier_count" => fourier_count = Some(num(value)?),
            "fourier_scale" => fourier_scale = Some(real(value)?),
            "init_seed" => config.init_seed = value.parse().map_err(|_| bad("`init_seed` is not an integer".into()))?,
            "theta_len" => theta_len = Some(num(value)?),
            other => return Err(bad(format!("unknown header key `{other}`"))),
        }
    }
    if let (Some(count), Some(scale)) = (fourier_count, fourier_scale) {
        config.fourier_features = Some(FourierFeatures { count, scale });
    }
    config.validate()?;
    let theta_len = theta_len.ok_or_else(|| bad("missing theta_len".into()))?;
    let payload = &bytes[offset..];
    if payload.len() != theta_len * 8 {
        return Err(bad(format!(
            "expected {} parameter bytes, found {}",
            theta_len * 8,
            payload.len()
        )));
    }
    let theta = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let params = MlpParams::from_theta(&config, theta)?;
    Ok((config, params))
}

pub fn save<T: Scalar>(path: &Path, config: &NetworkConfig, params: &MlpParams<T>) -> Result<()> {
    std::fs::write(path, encode(config, params)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(NetworkConfig, MlpParams<f64>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_siren_and_fourier() {
        let mut relu = NetworkConfig::relu(3, 8, 2, 3);
        relu.fourier_features = Some(FourierFeatures { count: 4, scale: 2.5 });
        relu.init_seed = 17;
        for config in [NetworkConfig::siren(3, 8, 2, 1), relu] {
            let params = MlpParams::<f64>::init(&config).unwrap();
            let (back_config, back) = decode(&encode(&config, &params), Path::new("x")).unwrap();
            assert_eq!(back_config, config);
            assert_eq!(back.theta(), params.theta());
            assert_eq!(back.fourier(), params.fourier());
            assert_eq!(theta_digest(&back), theta_digest(&params));
        }
    }

    #[test]
    fn rejects_corrupt_files() {
        let config = NetworkConfig::siren(2, 4, 2, 1);
        let params = MlpParams::<f64>::init(&config).unwrap();
        let good = encode(&config, &params);
        assert!(decode(&good[..good.len() - 1], Path::new("x")).is_err());
        assert!(decode(b"PNG\n", Path::new("x")).is_err());
        assert!(decode(b"NINTCKPT\nversion=2\nend\n", Path::new("x")).is_err());
    }

    #[test]
    fn digest_tracks_parameters() {
        let config = NetworkConfig::siren(2, 4, 2, 1);
        let a = MlpParams::<f64>::init(&config).unwrap();
        let mut b = a.clone();
        assert_eq!(theta_digest(&a).len(), 64);
        b.theta_mut()[0] += 1.0;
        assert_ne!(theta_digest(&a), theta_digest(&b));
    }
}
