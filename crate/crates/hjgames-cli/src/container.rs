//! Bit-exact value-function container, format "VF01".
//!
//! Little-endian layout:
//!
//! ```text
//! magic            4 bytes  "VF01"
//! version          u32      currently 1
//! n                u32      state dimensions
//! axes             (n+1) x (u32 count, f64 min, f64 max), state axes then z
//! stamp count      u32
//! stamps           f64 x count, ascending
//! variant code     u8       0..=3
//! mode code        u8       0..=2
//! payload          f64 x (count x nodes), stamp-major, row-major per field
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use hjgames_core::{build_grid, Axis, EquationVariant, PlayerMode, RealValueFunction};

use crate::CliError;

pub const MAGIC: [u8; 4] = *b"VF01";
pub const VERSION: u32 = 1;

fn variant_code(v: EquationVariant) -> u8 {
    match v {
        EquationVariant::P1TimeVarying => 0,
        EquationVariant::P1TimeInvariant => 1,
        EquationVariant::P2TimeVarying => 2,
        EquationVariant::P2TimeInvariant => 3,
    }
}

fn variant_from_code(c: u8) -> Result<EquationVariant, CliError> {
    Ok(match c {
        0 => EquationVariant::P1TimeVarying,
        1 => EquationVariant::P1TimeInvariant,
        2 => EquationVariant::P2TimeVarying,
        3 => EquationVariant::P2TimeInvariant,
        _ => return Err(CliError::config(format!("bad variant code {c}"))),
    })
}

fn mode_code(m: PlayerMode) -> u8 {
    match m {
        PlayerMode::Upper => 0,
        PlayerMode::Lower => 1,
        PlayerMode::OptCtrl => 2,
    }
}

fn mode_from_code(c: u8) -> Result<PlayerMode, CliError> {
    Ok(match c {
        0 => PlayerMode::Upper,
        1 => PlayerMode::Lower,
        2 => PlayerMode::OptCtrl,
        _ => return Err(CliError::config(format!("bad mode code {c}"))),
    })
}

/// Writes the container atomically (temp file + rename).
pub fn write_value_function(path: &Path, vf: &RealValueFunction) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d),
        None => tempfile::NamedTempFile::new_in("."),
    }
    .map_err(|e| CliError::config(format!("cannot create temp file: {e}")))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        write_into(&mut w, vf)?;
        w.flush()
            .map_err(|e| CliError::config(format!("write failed: {e}")))?;
    }
    tmp.persist(path)
        .map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

fn write_into<W: Write>(w: &mut W, vf: &RealValueFunction) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::config(format!("write failed: {e}"));
    w.write_all(&MAGIC).map_err(io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    let grid = vf.grid();
    let n = grid.state_dim() as u32;
    w.write_all(&n.to_le_bytes()).map_err(io)?;
    for ax in grid.axes() {
        w.write_all(&(ax.count() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(&ax.min().to_le_bytes()).map_err(io)?;
        w.write_all(&ax.max().to_le_bytes()).map_err(io)?;
    }
    w.write_all(&(vf.times().len() as u32).to_le_bytes()).map_err(io)?;
    for t in vf.times() {
        w.write_all(&t.to_le_bytes()).map_err(io)?;
    }
    w.write_all(&[variant_code(vf.variant())]).map_err(io)?;
    w.write_all(&[mode_code(vf.mode())]).map_err(io)?;
    for snap in vf.snapshots() {
        for v in snap.values() {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    Ok(())
}

/// Reads and validates a container.
pub fn read_value_function(path: &Path) -> Result<RealValueFunction, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::config(format!("cannot open {}: {e}", path.display())))?;
    let mut r = BufReader::new(file);
    let bad = |msg: &str| CliError::config(format!("malformed container {}: {msg}", path.display()));

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
    if magic != MAGIC {
        return Err(bad("wrong magic bytes"));
    }
    let version = read_u32(&mut r).map_err(|_| bad("truncated version"))?;
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let n = read_u32(&mut r).map_err(|_| bad("truncated dimension count"))? as usize;
    if n == 0 || n > 7 {
        return Err(bad(&format!("implausible state dimension {n}")));
    }
    let mut axes = Vec::with_capacity(n + 1);
    for _ in 0..n + 1 {
        let count = read_u32(&mut r).map_err(|_| bad("truncated axis"))? as usize;
        let min = read_f64(&mut r).map_err(|_| bad("truncated axis"))?;
        let max = read_f64(&mut r).map_err(|_| bad("truncated axis"))?;
        axes.push(Axis::new(min, max, count).map_err(|e| bad(&format!("bad axis: {e}")))?);
    }
    let stamps = read_u32(&mut r).map_err(|_| bad("truncated stamp count"))? as usize;
    if stamps < 2 {
        return Err(bad("needs at least 2 stamps"));
    }
    let mut times = Vec::with_capacity(stamps);
    for _ in 0..stamps {
        times.push(read_f64(&mut r).map_err(|_| bad("truncated stamps"))?);
    }
    let mut codes = [0u8; 2];
    r.read_exact(&mut codes).map_err(|_| bad("truncated codes"))?;
    let variant = variant_from_code(codes[0])?;
    let mode = mode_from_code(codes[1])?;

    let z_axis = axes.pop().unwrap();
    let grid = Arc::new(build_grid(axes, z_axis, 0)?);
    let nodes = grid.num_points();
    let mut snapshots = Vec::with_capacity(stamps);
    for _ in 0..stamps {
        let mut field = vec![0.0f64; nodes];
        let mut buf = vec![0u8; nodes * 8];
        r.read_exact(&mut buf).map_err(|_| bad("truncated payload"))?;
        for (slot, chunk) in field.iter_mut().zip(buf.chunks_exact(8)) {
            *slot = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        snapshots.push(field);
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|_| bad("read error"))? != 0 {
        return Err(bad("trailing bytes after payload"));
    }
    Ok(RealValueFunction::from_parts(grid, times, snapshots, variant, mode)?)
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
