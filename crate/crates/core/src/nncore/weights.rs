//! Flat binary weight container.
//!
//! Layout (all integers little-endian u32): magic `SNW1`, version, parameter
//! count, then per parameter: name length, UTF-8 name, rank, dims, and the
//! values as little-endian f32.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::params::ModelParams;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SNW1";
pub const VERSION: u32 = 1;

fn put_u32(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::data(format!("value {v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|e| Error::data(format!("truncated weight file: {e}")))?;
    Ok(u32::from_le_bytes(buf))
}

pub fn write_weights(params: &ModelParams, w: &mut impl Write) -> Result<()> {
    w.write_all(MAGIC)?;
    put_u32(w, VERSION as usize)?;
    put_u32(w, params.len())?;
    for p in params.iter() {
        put_u32(w, p.name().len())?;
        w.write_all(p.name().as_bytes())?;
        put_u32(w, p.shape().len())?;
        for &d in p.shape() {
            put_u32(w, d)?;
        }
        for &v in p.value() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_weights(r: &mut impl Read) -> Result<ModelParams> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|e| Error::data(format!("truncated weight file: {e}")))?;
    if &magic != MAGIC {
        return Err(Error::data(format!("bad weight file magic {magic:?}")));
    }
    let version = get_u32(r)?;
    if version != VERSION {
        return Err(Error::data(format!("unsupported weight file version {version}")));
    }
    let count = get_u32(r)? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = get_u32(r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)
            .map_err(|e| Error::data(format!("truncated parameter name: {e}")))?;
        let name = String::from_utf8(name).map_err(|_| Error::data("parameter name is not UTF-8"))?;
        let rank = get_u32(r)? as usize;
        let shape = (0..rank).map(|_| get_u32(r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let mut raw = vec![0u8; len * 4];
        r.read_exact(&mut raw)
            .map_err(|e| Error::data(format!("truncated values for `{name}`: {e}")))?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        entries.push((name, shape, values));
    }
    ModelParams::from_loaded(entries)
}

pub fn save_weights(params: &ModelParams, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_weights(params, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<ModelParams> {
    read_weights(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::params::Init;

    fn sample() -> ModelParams {
        let mut p = ModelParams::new(9);
        p.register("conv.weight", &[2, 3, 3, 3], Init::FanInUniform { fan_in: 27, gain: 1.0 }).unwrap();
        p.register("conv.bias", &[2], Init::Constant(-0.125)).unwrap();
        p.register("héad", &[], Init::Constant(3.5)).unwrap();
        p
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let p = sample();
        let mut buf = Vec::new();
        write_weights(&p, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"SNW1");
        let q = read_weights(&mut buf.as_slice()).unwrap();
        assert_eq!(q.len(), p.len());
        for (a, b) in p.iter().zip(q.iter()) {
            assert_eq!(a.name(), b.name());
            assert_eq!(a.shape(), b.shape());
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a.value()), bits(b.value()));
        }
        let mut again = Vec::new();
        write_weights(&q, &mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn header_layout() {
        let mut p = ModelParams::new(0);
        p.register("ab", &[1], Init::Constant(1.0)).unwrap();
        let mut buf = Vec::new();
        write_weights(&p, &mut buf).unwrap();
        let expected: Vec<u8> = [
            b"SNW1".to_vec(),
            1u32.to_le_bytes().to_vec(),
            1u32.to_le_bytes().to_vec(),
            2u32.to_le_bytes().to_vec(),
            b"ab".to_vec(),
            1u32.to_le_bytes().to_vec(),
            1u32.to_le_bytes().to_vec(),
            1.0f32.to_le_bytes().to_vec(),
        ]
        .concat();
        assert_eq!(buf, expected);
    }

    #[test]
    fn rejects_corrupt_files() {
        let mut buf = Vec::new();
        write_weights(&sample(), &mut buf).unwrap();
        assert!(read_weights(&mut &buf[..buf.len() - 1]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_weights(&mut bad.as_slice()).is_err());
    }
}
