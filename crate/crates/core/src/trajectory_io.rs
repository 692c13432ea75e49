//! Trajectory export formats.
//!
//! * CSV: header `t,x1,...,xN`, then one line per retained step with the
//!   1-based time index followed by N values in `{0,1}`.
//! * Binary (little-endian):
//!
//!   | offset | size | field                                   |
//!   |--------|------|-----------------------------------------|
//!   | 0      | 4    | magic `MFGT`                            |
//!   | 4      | 4    | version, `u32` = 1                      |
//!   | 8      | 8    | N, `u64`                                |
//!   | 16     | 8    | T, `u64`                                |
//!   | 24     | 8    | environment seed, `u64`                 |
//!   | 32     | 8    | burn-in steps, `u64`                    |
//!   | 40     | ...  | T rows of `ceil(N/8)` bytes             |
//!
//!   Component i of a row is bit `i % 8` (least significant first) of byte
//!   `i / 8`; padding bits are zero.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};

use crate::bits::BitMatrix;
use crate::error::{Error, Result};
use crate::simulator::Trajectory;

pub const MAGIC: &[u8; 4] = b"MFGT";

pub fn write_csv<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    write!(w, "t")?;
    for i in 1..=traj.n() {
        write!(w, ",x{i}")?;
    }
    writeln!(w)?;
    let mut line = String::with_capacity(2 * traj.n() + 12);
    for t in 0..traj.t() {
        line.clear();
        line.push_str(&(t + 1).to_string());
        for i in 0..traj.n() {
            line.push(',');
            line.push(if traj.get(t, i) { '1' } else { '0' });
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Trajectory> {
    let bad = |reason: String| Error::Format { what: "trajectory csv", reason };
    let mut lines = BufReader::new(input).lines();
    let header = lines.next().ok_or_else(|| bad("empty input".into()))??;
    let n = header.trim_end().split(',').count().saturating_sub(1);
    if !header.starts_with('t') {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        fields.next();
        let row: Vec<u8> = fields
            .map(|f| match f {
                "0" => Ok(0),
                "1" => Ok(1),
                other => Err(bad(format!("line {}: value {other:?}", k + 2))),
            })
            .collect::<Result<_>>()?;
        if row.len() != n {
            return Err(bad(format!("line {}: expected {n} values, found {}", k + 2, row.len())));
        }
        rows.push(row);
    }
    let mut states = BitMatrix::zeros(rows.len(), n);
    for (t, row) in rows.iter().enumerate() {
        for (i, &x) in row.iter().enumerate() {
            states.set(t, i, x == 1);
        }
    }
    Ok(Trajectory::from_states(states, 0, 0))
}

pub fn write_binary<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    w.write_all(MAGIC)?;
    w.write_all(&1u32.to_le_bytes())?;
    for v in [traj.n() as u64, traj.t() as u64, traj.env_seed(), traj.burn_in() as u64] {
        w.write_all(&v.to_le_bytes())?;
    }
    for t in 0..traj.t() {
        w.write_all(&traj.states().row_bytes(t))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary<R: Read>(input: R) -> Result<Trajectory> {
    let bad = |reason: &str| Error::Format { what: "trajectory binary", reason: reason.to_string() };
    let mut r = BufReader::new(input);
    let mut head = [0u8; 40];
    r.read_exact(&mut head).map_err(|_| bad("truncated header"))?;
    if &head[0..4] != MAGIC {
        return Err(bad("bad magic"));
    }
    if u32::from_le_bytes(head[4..8].try_into().unwrap()) != 1 {
        return Err(bad("unsupported version"));
    }
    let field = |k: usize| u64::from_le_bytes(head[8 + 8 * k..16 + 8 * k].try_into().unwrap());
    let (n, t, env_seed, burn_in) = (field(0) as usize, field(1) as usize, field(2), field(3) as usize);
    let row_len = n.div_ceil(8);
    let mut states = BitMatrix::zeros(t, n);
    let mut buf = vec![0u8; row_len];
    for row in 0..t {
        r.read_exact(&mut buf).map_err(|_| bad("truncated rows"))?;
        states.set_row_from_bytes(row, &buf);
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(bad("trailing bytes"));
    }
    Ok(Trajectory::from_states(states, env_seed, burn_in))
}

/// Binary if the file starts with the magic, CSV otherwise.
pub fn read_any(bytes: &[u8]) -> Result<Trajectory> {
    if bytes.starts_with(MAGIC) {
        read_binary(bytes)
    } else {
        read_csv(bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn traj_strategy() -> impl Strategy<Value = Vec<Vec<u8>>> {
        (1usize..80, 1usize..20).prop_flat_map(|(n, t)| prop::collection::vec(prop::collection::vec(0u8..2, n), t))
    }

    proptest! {
        #[test]
        fn binary_and_csv_round_trip(rows in traj_strategy()) {
            let traj = Trajectory::from_rows(&rows).unwrap();
            let mut bin = Vec::new();
            write_binary(&traj, &mut bin).unwrap();
            prop_assert_eq!(read_any(&bin).unwrap(), traj.clone());
            let mut csv = Vec::new();
            write_csv(&traj, &mut csv).unwrap();
            let back = read_any(&csv).unwrap();
            prop_assert_eq!(back.states(), traj.states());
        }
    }

    #[test]
    fn csv_layout() {
        let traj = Trajectory::from_rows(&[vec![1, 0, 1], vec![0, 0, 1]]).unwrap();
        let mut out = Vec::new();
        write_csv(&traj, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "t,x1,x2,x3\n1,1,0,1\n2,0,0,1\n");
    }

    #[test]
    fn binary_layout() {
        let traj = Trajectory::from_rows(&[vec![1, 0, 1, 0, 0, 0, 0, 0, 1]]).unwrap();
        let mut out = Vec::new();
        write_binary(&traj, &mut out).unwrap();
        assert_eq!(&out[..4], b"MFGT");
        assert_eq!(out.len(), 40 + 2);
        assert_eq!(&out[40..], &[0b0000_0101, 0b0000_0001]);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_binary(&b"MFGT\x01\x00"[..]).is_err());
        assert!(read_csv(&b"t,x1\n1,2\n"[..]).is_err());
        assert!(read_csv(&b"t,x1,x2\n1,1\n"[..]).is_err());
    }
}
