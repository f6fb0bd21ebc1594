//! Little-endian binary serialization of [`NetworkParams`].
//!
//! Layout: magic `PRNET`, `u16` version, `u32` layer count, `u32` input
//! width, the input standardizer, then per layer its spec followed by weights (row-major),
//! bias, and for batch-norm layers gamma, beta, running mean, running variance.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::activation::Activation;
use super::network::{BatchNorm, DenseLayer, LayerSpec, NetworkParams, Standardizer};
use crate::error::{Error, Result};

pub const NETWORK_MAGIC: &[u8; 5] = b"PRNET";
pub const NETWORK_VERSION: u16 = 1;

pub fn write_network<W: Write>(mut w: W, net: &NetworkParams) -> Result<()> {
    w.write_all(NETWORK_MAGIC)?;
    w.write_all(&NETWORK_VERSION.to_le_bytes())?;
    w.write_all(&(net.layers().len() as u32).to_le_bytes())?;
    w.write_all(&(net.n_inputs() as u32).to_le_bytes())?;
    let s = net.standardizer();
    write_f64s(&mut w, &s.mean)?;
    write_f64s(&mut w, &s.std)?;
    for l in net.layers() {
        let spec = l.spec;
        w.write_all(&(spec.n_in as u32).to_le_bytes())?;
        w.write_all(&(spec.n_out as u32).to_le_bytes())?;
        w.write_all(&[spec.activation.code(), u8::from(spec.batch_norm)])?;
        w.write_all(&spec.dropout_rate.to_le_bytes())?;
        write_f64s(&mut w, l.weights.as_slice().expect("standard layout"))?;
        write_f64s(&mut w, l.bias.as_slice().expect("standard layout"))?;
        if let Some(bn) = &l.batch_norm {
            for v in [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var] {
                write_f64s(&mut w, v.as_slice().expect("standard layout"))?;
            }
        }
    }
    Ok(())
}

pub fn read_network<R: Read>(mut r: R) -> Result<NetworkParams> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != NETWORK_MAGIC {
        return Err(Error::Format("not a network file (bad magic)".into()));
    }
    let version = u16::from_le_bytes(read_array(&mut r)?);
    if version != NETWORK_VERSION {
        return Err(Error::Format(format!("unsupported network version {version}")));
    }
    let n_layers = u32::from_le_bytes(read_array(&mut r)?) as usize;
    if n_layers == 0 || n_layers > 64 {
        return Err(Error::Format(format!("implausible layer count {n_layers}")));
    }
    let n_inputs = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let mean = read_f64s(&mut r, n_inputs)?;
    let std = read_f64s(&mut r, n_inputs)?;
    let input = Standardizer { mean, std };
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let n_in = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let n_out = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let [act, bn] = read_array::<2, _>(&mut r)?;
        let activation = Activation::from_code(act)
            .ok_or_else(|| Error::Format(format!("unknown activation code {act}")))?;
        let batch_norm = match bn {
            0 => false,
            1 => true,
            b => return Err(Error::Format(format!("bad batch-norm flag {b}"))),
        };
        let dropout_rate = f64::from_le_bytes(read_array(&mut r)?);
        let spec = LayerSpec {
            n_in,
            n_out,
            activation,
            batch_norm,
            dropout_rate,
        };
        let weights = Array2::from_shape_vec((n_in, n_out), read_f64s(&mut r, n_in * n_out)?)
            .map_err(|e| Error::Format(e.to_string()))?;
        let bias = Array1::from(read_f64s(&mut r, n_out)?);
        let batch_norm = if batch_norm {
            Some(BatchNorm {
                gamma: Array1::from(read_f64s(&mut r, n_out)?),
                beta: Array1::from(read_f64s(&mut r, n_out)?),
                running_mean: Array1::from(read_f64s(&mut r, n_out)?),
                running_var: Array1::from(read_f64s(&mut r, n_out)?),
            })
        } else {
            None
        };
        layers.push(DenseLayer {
            spec,
            weights,
            bias,
            batch_norm,
        });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after network".into()));
    }
    NetworkParams::from_layers(layers, input)
}

pub fn save_network(path: &Path, net: &NetworkParams) -> Result<()> {
    let mut buf = Vec::new();
    write_network(&mut buf, net)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_network(path: &Path) -> Result<NetworkParams> {
    read_network(std::io::BufReader::new(std::fs::File::open(path)?))
}

fn write_f64s<W: Write>(w: &mut W, v: &[f64]) -> Result<()> {
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    if n > 1 << 26 {
        return Err(Error::Format(format!("implausible tensor size {n}")));
    }
    (0..n).map(|_| Ok(f64::from_le_bytes(read_array(r)?))).collect()
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(b)
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("network file is truncated".into())
    } else {
        Error::Io(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::mlp_specs;

    fn net() -> NetworkParams {
        let mut n =
            NetworkParams::new(&mlp_specs(3, &[5, 4], 2, Activation::Softmax, true, 0.1), 9).unwrap();
        n.set_standardizer(Standardizer {
            mean: vec![1.0, 2.0, 3.0],
            std: vec![0.5, 1.5, 2.5],
        })
        .unwrap();
        n
    }

    #[test]
    fn round_trip_is_exact() {
        let n = net();
        let mut buf = Vec::new();
        write_network(&mut buf, &n).unwrap();
        let back = read_network(buf.as_slice()).unwrap();
        assert_eq!(back, n);
        let mut again = Vec::new();
        write_network(&mut again, &back).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let mut buf = Vec::new();
        write_network(&mut buf, &net()).unwrap();
        assert!(matches!(read_network(&buf[..buf.len() - 3]), Err(Error::Format(_))));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_network(bad.as_slice()), Err(Error::Format(_))));
        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(read_network(long.as_slice()), Err(Error::Format(_))));
    }
}
