//! Little-endian 64-bit primitives shared by the binary file formats
//! (graph snapshot, encoder state, parameter checkpoint).

use std::io::{self, Read, Write};

pub fn write_u64<W: Write>(w: &mut W, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub fn write_i64<W: Write>(w: &mut W, v: i64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub fn write_f64<W: Write>(w: &mut W, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub fn write_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    write_u64(w, s.len() as u64)?;
    w.write_all(s.as_bytes())
}

pub fn write_f64_slice<W: Write>(w: &mut W, xs: &[f64]) -> io::Result<()> {
    write_u64(w, xs.len() as u64)?;
    xs.iter().try_for_each(|&x| write_f64(w, x))
}

pub fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_i64<R: Read>(r: &mut R) -> io::Result<i64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(i64::from_le_bytes(b))
}

pub fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Reads a length prefix and rejects lengths above `limit`, so a corrupt
/// file cannot trigger a huge allocation.
pub fn read_len<R: Read>(r: &mut R, limit: u64) -> io::Result<usize> {
    let n = read_u64(r)?;
    if n > limit {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("length {n} exceeds limit {limit}"),
        ));
    }
    Ok(n as usize)
}

pub fn read_str<R: Read>(r: &mut R) -> io::Result<String> {
    let n = read_len(r, 1 << 24)?;
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

pub fn read_f64_vec<R: Read>(r: &mut R) -> io::Result<Vec<f64>> {
    let n = read_len(r, 1 << 32)?;
    (0..n).map(|_| read_f64(r)).collect()
}

/// Checks an 8-byte magic tag followed by a version word.
pub fn expect_header<R: Read>(r: &mut R, magic: &[u8; 8], version: u64) -> io::Result<()> {
    let mut m = [0u8; 8];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("bad magic, expected {}", String::from_utf8_lossy(magic)),
        ));
    }
    let v = read_u64(r)?;
    if v != version {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("unsupported version {v}, expected {version}"),
        ));
    }
    Ok(())
}

pub fn write_header<W: Write>(w: &mut W, magic: &[u8; 8], version: u64) -> io::Result<()> {
    w.write_all(magic)?;
    write_u64(w, version)
}
