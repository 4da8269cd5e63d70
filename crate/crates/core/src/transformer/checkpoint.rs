//! Binary checkpoint: `FPT1`, little-endian `u32` layer count, then per
//! layer `rows, cols` as `u32`, row-major `f32` weights, `f32` biases, a
//! `u32` batch-norm flag and, when set, `gamma, beta, running mean,
//! running var`. A trailer holds the output offset as `u32` length plus
//! `f32` values.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::mlp::{BatchNorm, Dense, Mlp};
use super::MlpTransformer;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MAGIC: &[u8; 4] = b"FPT1";

fn put_u32(out: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{v} does not fit in u32")))?;
    out.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f32s<'a, T: Real + 'a>(out: &mut impl Write, values: impl IntoIterator<Item = &'a T>) -> Result<()> {
    for v in values {
        out.write_all(&(v.as_f64() as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn write_checkpoint<T: Real>(out: &mut impl Write, model: &MlpTransformer<T>) -> Result<()> {
    out.write_all(MAGIC)?;
    let layers = &model.net().layers;
    put_u32(out, layers.len())?;
    for layer in layers {
        put_u32(out, layer.rows())?;
        put_u32(out, layer.cols())?;
        put_f32s(out, layer.weight.iter())?;
        put_f32s(out, layer.bias.iter())?;
        match &layer.bn {
            None => put_u32(out, 0)?,
            Some(bn) => {
                put_u32(out, 1)?;
                for a in [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var] {
                    put_f32s(out, a.iter())?;
                }
            }
        }
    }
    put_u32(out, model.output_offset().len())?;
    put_f32s(out, model.output_offset().iter())?;
    Ok(())
}

pub fn save_checkpoint<T: Real>(path: &Path, model: &MlpTransformer<T>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(&mut out, model)?;
    out.flush()?;
    Ok(())
}

struct Cursor<'a>(&'a [u8]);

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.0.len() < n {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let (head, rest) = self.0.split_at(n);
        self.0 = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn f32s<T: Real>(&mut self, n: usize) -> Result<Vec<T>> {
        let bytes = self.take(
            n.checked_mul(4)
                .ok_or_else(|| Error::Checkpoint("size overflow".into()))?,
        )?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| T::lit(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect())
    }

    fn vec<T: Real>(&mut self, n: usize) -> Result<Array1<T>> {
        Ok(Array1::from(self.f32s(n)?))
    }
}

pub fn read_checkpoint<T: Real>(input: &mut impl Read) -> Result<MlpTransformer<T>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut c = Cursor(&bytes);
    if c.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic, expected FPT1".into()));
    }
    let count = c.u32()?;
    let mut layers = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let (rows, cols) = (c.u32()?, c.u32()?);
        let weight = Array2::from_shape_vec((rows, cols), c.f32s(rows * cols)?).expect("sized read");
        let bias = c.vec(rows)?;
        let bn = match c.u32()? {
            0 => None,
            1 => Some(BatchNorm {
                gamma: c.vec(rows)?,
                beta: c.vec(rows)?,
                running_mean: c.vec(rows)?,
                running_var: c.vec(rows)?,
            }),
            f => return Err(Error::Checkpoint(format!("bad batch-norm flag {f}"))),
        };
        layers.push(Dense { weight, bias, bn });
    }
    let n = c.u32()?;
    let offset = c.vec(n)?;
    if !c.0.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", c.0.len())));
    }
    MlpTransformer::from_parts(Mlp { layers }, offset)
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<MlpTransformer<T>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    read_checkpoint(&mut std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_through_f32() {
        let m = MlpTransformer::<f32>::new(8, 2);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &m).unwrap();
        assert_eq!(&buf[..4], MAGIC);
        let back: MlpTransformer<f32> = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(back, m);
        let mut again = Vec::new();
        write_checkpoint(&mut again, &back).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn corrupt_input_rejected() {
        let m = MlpTransformer::<f64>::new(4, 0);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &m).unwrap();
        assert!(read_checkpoint::<f64>(&mut &buf[..buf.len() - 3]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_checkpoint::<f64>(&mut bad.as_slice()).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_checkpoint::<f64>(&mut extra.as_slice()).is_err());
    }
}
