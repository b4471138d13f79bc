//! Model checkpoints.
//!
//! Both formats share one container: 4-byte magic, version `u32 = 1`,
//! `d: u32`, `K: u32`, then `f64` parameters row-major. `SDCM` (hash layer)
//! stores weights (d×K) and bias (K). `SDCI` (ITQ) stores the mean (d),
//! PCA basis (d×K) and rotation (K×K).

use std::path::Path;

use super::bytes::{dim_u32, put_u32, read_file, write_file, ByteReader};
use super::FORMAT_VERSION;
use crate::baselines::ItqModel;
use crate::error::{Error, Result};
use crate::hash_model::HashModel;
use crate::linalg::Matrix;
use crate::scalar::Scalar;

pub const MODEL_MAGIC: &[u8; 4] = b"SDCM";
pub const ITQ_MAGIC: &[u8; 4] = b"SDCI";

/// Any model that can be loaded from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    Hash(HashModel<f64>),
    Itq(ItqModel),
}

fn header(out: &mut Vec<u8>, magic: &[u8; 4], d: usize, k: usize) -> Result<()> {
    out.extend_from_slice(magic);
    put_u32(out, FORMAT_VERSION);
    put_u32(out, dim_u32(d, "d")?);
    put_u32(out, dim_u32(k, "K")?);
    Ok(())
}

fn put_f64s(out: &mut Vec<u8>, vals: impl IntoIterator<Item = f64>) {
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_model<T: Scalar>(model: &HashModel<T>) -> Result<Vec<u8>> {
    let (d, k) = (model.input_dim(), model.k_bits());
    let mut out = Vec::with_capacity(16 + (d * k + k) * 8);
    header(&mut out, MODEL_MAGIC, d, k)?;
    put_f64s(&mut out, model.weights().as_slice().iter().map(|v| v.as_f64()));
    put_f64s(&mut out, model.bias().iter().map(|v| v.as_f64()));
    Ok(out)
}

pub fn encode_itq_checkpoint(model: &ItqModel) -> Result<Vec<u8>> {
    let (d, k) = (model.input_dim(), model.k_bits());
    let mut out = Vec::with_capacity(16 + (d + d * k + k * k) * 8);
    header(&mut out, ITQ_MAGIC, d, k)?;
    put_f64s(&mut out, model.mean().iter().copied());
    put_f64s(&mut out, model.pca().as_slice().iter().copied());
    put_f64s(&mut out, model.rotation().as_slice().iter().copied());
    Ok(out)
}

fn dims(r: &mut ByteReader<'_>) -> Result<(usize, usize)> {
    let at = r.offset();
    let d = r.u32("d")? as usize;
    let k = r.u32("K")? as usize;
    if d == 0 || k == 0 {
        return Err(Error::Format {
            offset: at,
            msg: format!("model dimensions must be positive, got d={d}, K={k}"),
        });
    }
    Ok((d, k))
}

fn checked(r: &ByteReader<'_>, a: usize, b: usize) -> Result<usize> {
    a.checked_mul(b).ok_or_else(|| r.fail("parameter count overflows"))
}

pub fn decode_checkpoint(buf: &[u8]) -> Result<Checkpoint> {
    let mut r = ByteReader::new(buf);
    let magic = r.take(4, "magic")?;
    let is_itq = match magic {
        m if m == MODEL_MAGIC => false,
        m if m == ITQ_MAGIC => true,
        m => {
            return Err(Error::Format {
                offset: 0,
                msg: format!("bad magic {:?}, expected SDCM or SDCI", String::from_utf8_lossy(m)),
            })
        }
    };
    r.version(FORMAT_VERSION)?;
    let (d, k) = dims(&mut r)?;
    let ckpt = if is_itq {
        let mean = r.f64s(d, "mean")?;
        let pca = r.f64s(checked(&r, d, k)?, "pca basis")?;
        let rot = r.f64s(checked(&r, k, k)?, "rotation")?;
        Checkpoint::Itq(ItqModel::from_parts(
            mean,
            Matrix::from_vec(d, k, pca)?,
            Matrix::from_vec(k, k, rot)?,
        )?)
    } else {
        let w = r.f64s(checked(&r, d, k)?, "weights")?;
        let b = r.f64s(k, "bias")?;
        Checkpoint::Hash(HashModel::new(Matrix::from_vec(d, k, w)?, b)?)
    };
    r.finish()?;
    Ok(ckpt)
}

pub fn write_model<T: Scalar>(path: impl AsRef<Path>, model: &HashModel<T>) -> Result<()> {
    write_file(path.as_ref(), &encode_model(model)?)
}

pub fn write_itq(path: impl AsRef<Path>, model: &ItqModel) -> Result<()> {
    write_file(path.as_ref(), &encode_itq_checkpoint(model)?)
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    decode_checkpoint(&read_file(path.as_ref())?)
}

pub fn read_model(path: impl AsRef<Path>) -> Result<HashModel<f64>> {
    match read_checkpoint(path)? {
        Checkpoint::Hash(m) => Ok(m),
        Checkpoint::Itq(_) => Err(Error::Format {
            offset: 0,
            msg: "expected an SDCM hash model, found an SDCI checkpoint".into(),
        }),
    }
}

pub fn read_itq(path: impl AsRef<Path>) -> Result<ItqModel> {
    match read_checkpoint(path)? {
        Checkpoint::Itq(m) => Ok(m),
        Checkpoint::Hash(_) => Err(Error::Format {
            offset: 0,
            msg: "expected an SDCI checkpoint, found an SDCM hash model".into(),
        }),
    }
}
