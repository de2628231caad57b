//! Little-endian helpers for the on-disk formats.

use std::io::{self, Read, Write};

pub(crate) fn bad_data(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

pub(crate) fn write_u32(w: &mut impl Write, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn write_u64(w: &mut impl Write, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn write_f64(w: &mut impl Write, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn write_len(w: &mut impl Write, len: usize) -> io::Result<()> {
    let len = u32::try_from(len).map_err(|_| bad_data("length exceeds u32"))?;
    write_u32(w, len)
}

pub(crate) fn write_str(w: &mut impl Write, s: &str) -> io::Result<()> {
    write_len(w, s.len())?;
    w.write_all(s.as_bytes())
}

pub(crate) fn read_array<const N: usize>(r: &mut impl Read) -> io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

pub(crate) fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    read_array(r).map(u32::from_le_bytes)
}

pub(crate) fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    read_array(r).map(u64::from_le_bytes)
}

pub(crate) fn read_f64(r: &mut impl Read) -> io::Result<f64> {
    read_array(r).map(f64::from_le_bytes)
}

pub(crate) fn read_str(r: &mut impl Read) -> io::Result<String> {
    let len = read_u32(r)? as usize;
    let mut buf = Vec::new();
    r.take(len as u64).read_to_end(&mut buf)?;
    if buf.len() != len {
        return Err(io::ErrorKind::UnexpectedEof.into());
    }
    String::from_utf8(buf).map_err(|_| bad_data("string is not valid UTF-8"))
}

pub(crate) fn expect_magic(r: &mut impl Read, magic: &[u8; 8], what: &str) -> io::Result<()> {
    let got: [u8; 8] = read_array(r)?;
    if &got != magic {
        return Err(bad_data(format!("not a {what} file (bad magic)")));
    }
    Ok(())
}

pub(crate) fn expect_version(r: &mut impl Read, version: u32, what: &str) -> io::Result<()> {
    let got = read_u32(r)?;
    if got != version {
        return Err(bad_data(format!(
            "unsupported {what} version {got} (expected {version})"
        )));
    }
    Ok(())
}
