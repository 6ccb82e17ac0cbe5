//! On-disk formats. All numeric file data is little-endian f64.
//!
//! Matrix text format: a `rows cols` header line, then one line per row of
//! whitespace-separated decimal floats. Matrix binary format: u64 rows,
//! u64 cols, then row-major f64 payload.
//!
//! Update stream text format, one record per line:
//!
//! ```text
//! name;k;u=v1,v2,...;v=w1,w2,...
//! ```
//!
//! where `u` carries `k * rows` values and `v` carries `k * cols` values,
//! both column-major (first column first). Blank lines and `#` comments are
//! skipped. The binary stream uses the same u64/f64 primitives per record:
//! name length, name bytes, k, rows, cols, u payload, v payload.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::delta::RankKUpdate;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub fn write_matrix_text(m: &Matrix<f64>, w: &mut impl Write) -> Result<()> {
    writeln!(w, "{} {}", m.rows(), m.cols())?;
    for i in 0..m.rows() {
        let row: Vec<String> = (0..m.cols()).map(|j| format!("{}", m.get(i, j))).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

pub fn read_matrix_text(r: &mut impl BufRead) -> Result<Matrix<f64>> {
    let mut header = String::new();
    if r.read_line(&mut header)? == 0 {
        return Err(Error::data("matrix file is empty"));
    }
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(Error::data(format!("bad matrix header `{}`", header.trim())));
    }
    let rows: usize = dims[0]
        .parse()
        .map_err(|_| Error::data(format!("bad row count `{}`", dims[0])))?;
    let cols: usize = dims[1]
        .parse()
        .map_err(|_| Error::data(format!("bad column count `{}`", dims[1])))?;
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        let mut line = String::new();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::data(format!("matrix row {} missing", i + 1)));
        }
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::data(format!("bad float `{tok}` in matrix row {}", i + 1)))?;
            data.push(v);
        }
        if data.len() != (i + 1) * cols {
            return Err(Error::data(format!(
                "matrix row {} has {} values, expected {}",
                i + 1,
                data.len() - i * cols,
                cols
            )));
        }
    }
    Matrix::new(rows, cols, data)
}

pub fn write_matrix_binary(m: &Matrix<f64>, w: &mut impl Write) -> Result<()> {
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    for v in m.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

pub fn read_matrix_binary(r: &mut impl Read) -> Result<Matrix<f64>> {
    let rows = read_u64(r)? as usize;
    let cols = read_u64(r)? as usize;
    if rows.checked_mul(cols).is_none() || rows * cols > (1 << 32) {
        return Err(Error::data(format!("implausible matrix shape {rows}x{cols}")));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(read_f64(r)?);
    }
    Matrix::new(rows, cols, data)
}

/// Reads a matrix file, choosing binary for a `.bin` extension, text otherwise.
pub fn read_matrix_file(path: &Path) -> Result<Matrix<f64>> {
    let f = File::open(path)?;
    let mut r = BufReader::new(f);
    if path.extension().map_or(false, |e| e == "bin") {
        read_matrix_binary(&mut r)
    } else {
        read_matrix_text(&mut r)
    }
}

pub fn write_matrix_file(m: &Matrix<f64>, path: &Path) -> Result<()> {
    let f = File::create(path)?;
    let mut w = BufWriter::new(f);
    if path.extension().map_or(false, |e| e == "bin") {
        write_matrix_binary(m, &mut w)
    } else {
        write_matrix_text(m, &mut w)
    }
}

/// Column-major values -> rows x k matrix.
fn from_col_major(rows: usize, k: usize, vals: &[f64], what: &str, record: usize) -> Result<Matrix<f64>> {
    if vals.len() != rows * k {
        return Err(Error::data(format!(
            "record {record}: `{what}` has {} values, expected {} ({} rows x rank {})",
            vals.len(),
            rows * k,
            rows,
            k
        )));
    }
    Ok(Matrix::from_fn(rows, k, |i, j| vals[j * rows + i]))
}

fn parse_float_list(s: &str, what: &str, record: usize) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Error::data(format!("record {record}: bad float `{}` in `{what}`", tok.trim())))
        })
        .collect()
}

/// Parses one text record. `k` divides both value lists; row/column counts of
/// the target matrix are recovered from the list lengths.
fn parse_stream_record(line: &str, record: usize) -> Result<RankKUpdate<f64>> {
    let parts: Vec<&str> = line.split(';').collect();
    if parts.len() != 4 {
        return Err(Error::data(format!(
            "record {record}: expected `name;k;u=...;v=...`, got {} fields",
            parts.len()
        )));
    }
    let name = parts[0].trim();
    if name.is_empty() {
        return Err(Error::data(format!("record {record}: empty matrix name")));
    }
    let k: usize = parts[1]
        .trim()
        .parse()
        .map_err(|_| Error::data(format!("record {record}: bad rank `{}`", parts[1].trim())))?;
    if k == 0 {
        return Err(Error::data(format!("record {record}: rank must be at least 1")));
    }
    let u_part = parts[2]
        .trim()
        .strip_prefix("u=")
        .ok_or_else(|| Error::data(format!("record {record}: third field must start with `u=`")))?;
    let v_part = parts[3]
        .trim()
        .strip_prefix("v=")
        .ok_or_else(|| Error::data(format!("record {record}: fourth field must start with `v=`")))?;
    let u_vals = parse_float_list(u_part, "u", record)?;
    let v_vals = parse_float_list(v_part, "v", record)?;
    if u_vals.len() % k != 0 {
        return Err(Error::data(format!(
            "record {record}: `u` length {} is not a multiple of rank {k}",
            u_vals.len()
        )));
    }
    if v_vals.len() % k != 0 {
        return Err(Error::data(format!(
            "record {record}: `v` length {} is not a multiple of rank {k}",
            v_vals.len()
        )));
    }
    let rows = u_vals.len() / k;
    let cols = v_vals.len() / k;
    if rows == 0 || cols == 0 {
        return Err(Error::data(format!("record {record}: empty factor")));
    }
    let u = from_col_major(rows, k, &u_vals, "u", record)?;
    let v = from_col_major(cols, k, &v_vals, "v", record)?;
    RankKUpdate::new(name, u, v)
}

pub fn read_update_stream_text(r: &mut impl BufRead) -> Result<Vec<RankKUpdate<f64>>> {
    let mut out = Vec::new();
    let mut record = 0usize;
    for line in r.lines() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        record += 1;
        out.push(parse_stream_record(trimmed, record)?);
    }
    Ok(out)
}

pub fn write_update_stream_text(updates: &[RankKUpdate<f64>], w: &mut impl Write) -> Result<()> {
    for up in updates {
        let k = up.rank();
        let mut u_vals = Vec::with_capacity(up.u.rows() * k);
        for j in 0..k {
            for i in 0..up.u.rows() {
                u_vals.push(format!("{}", up.u.get(i, j)));
            }
        }
        let mut v_vals = Vec::with_capacity(up.v.rows() * k);
        for j in 0..k {
            for i in 0..up.v.rows() {
                v_vals.push(format!("{}", up.v.get(i, j)));
            }
        }
        writeln!(w, "{};{};u={};v={}", up.name, k, u_vals.join(","), v_vals.join(","))?;
    }
    Ok(())
}

pub fn read_update_stream_binary(r: &mut impl Read) -> Result<Vec<RankKUpdate<f64>>> {
    let mut out = Vec::new();
    let mut record = 0usize;
    loop {
        let mut len_buf = [0u8; 8];
        match r.read_exact(&mut len_buf) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        record += 1;
        let name_len = u64::from_le_bytes(len_buf) as usize;
        if name_len == 0 || name_len > 4096 {
            return Err(Error::data(format!("record {record}: implausible name length {name_len}")));
        }
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::data(format!("record {record}: name is not UTF-8")))?;
        let k = read_u64(r)? as usize;
        let rows = read_u64(r)? as usize;
        let cols = read_u64(r)? as usize;
        let mut u_vals = Vec::with_capacity(rows * k);
        for _ in 0..rows * k {
            u_vals.push(read_f64(r)?);
        }
        let mut v_vals = Vec::with_capacity(cols * k);
        for _ in 0..cols * k {
            v_vals.push(read_f64(r)?);
        }
        let u = from_col_major(rows, k, &u_vals, "u", record)?;
        let v = from_col_major(cols, k, &v_vals, "v", record)?;
        out.push(RankKUpdate::new(&name, u, v)?);
    }
    Ok(out)
}

pub fn write_update_stream_binary(updates: &[RankKUpdate<f64>], w: &mut impl Write) -> Result<()> {
    for up in updates {
        let k = up.rank();
        w.write_all(&(up.name.len() as u64).to_le_bytes())?;
        w.write_all(up.name.as_bytes())?;
        w.write_all(&(k as u64).to_le_bytes())?;
        w.write_all(&(up.u.rows() as u64).to_le_bytes())?;
        w.write_all(&(up.v.rows() as u64).to_le_bytes())?;
        for j in 0..k {
            for i in 0..up.u.rows() {
                w.write_all(&up.u.get(i, j).to_le_bytes())?;
            }
        }
        for j in 0..k {
            for i in 0..up.v.rows() {
                w.write_all(&up.v.get(i, j).to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Reads an update stream, binary for `.bin`, text otherwise.
pub fn read_update_stream_file(path: &Path) -> Result<Vec<RankKUpdate<f64>>> {
    let f = File::open(path)?;
    let mut r = BufReader::new(f);
    if path.extension().map_or(false, |e| e == "bin") {
        read_update_stream_binary(&mut r)
    } else {
        read_update_stream_text(&mut r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{rng_from_seed, seeded_matrix};
    use std::io::Cursor;

    #[test]
    fn matrix_text_round_trip_is_lossless() {
        let m = seeded_matrix::<f64>(3, 4, &mut rng_from_seed(42));
        let mut buf = Vec::new();
        write_matrix_text(&m, &mut buf).unwrap();
        let back = read_matrix_text(&mut Cursor::new(buf)).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn matrix_binary_round_trip_is_lossless() {
        let m = seeded_matrix::<f64>(5, 2, &mut rng_from_seed(7));
        let mut buf = Vec::new();
        write_matrix_binary(&m, &mut buf).unwrap();
        let back = read_matrix_binary(&mut Cursor::new(buf)).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn stream_text_parses_column_major_factors() {
        let text = "# comment\nA;2;u=1,2,3,4,5,6;v=7,8,9,10\n";
        let ups = read_update_stream_text(&mut Cursor::new(text)).unwrap();
        assert_eq!(ups.len(), 1);
        let up = &ups[0];
        assert_eq!(up.name, "A");
        assert_eq!(up.rank(), 2);
        assert_eq!(up.u.shape(), (3, 2));
        assert_eq!(up.v.shape(), (2, 2));
        // first column of u is 1,2,3
        assert_eq!(up.u.get(0, 0), 1.0);
        assert_eq!(up.u.get(2, 0), 3.0);
        assert_eq!(up.u.get(0, 1), 4.0);
        assert_eq!(up.v.get(0, 0), 7.0);
        assert_eq!(up.v.get(1, 1), 10.0);
    }

    #[test]
    fn stream_text_round_trip() {
        let text = "A;1;u=1,2;v=3,4,5\nB;2;u=1,2,3,4;v=5,6,7,8\n";
        let ups = read_update_stream_text(&mut Cursor::new(text)).unwrap();
        let mut buf = Vec::new();
        write_update_stream_text(&ups, &mut buf).unwrap();
        let again = read_update_stream_text(&mut Cursor::new(buf)).unwrap();
        assert_eq!(ups.len(), again.len());
        for (a, b) in ups.iter().zip(&again) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.u, b.u);
            assert_eq!(a.v, b.v);
        }
    }

    #[test]
    fn stream_binary_round_trip() {
        let text = "A;1;u=1,2;v=3,4,5\nlongername;2;u=1,2,3,4;v=5,6,7,8\n";
        let ups = read_update_stream_text(&mut Cursor::new(text)).unwrap();
        let mut buf = Vec::new();
        write_update_stream_binary(&ups, &mut buf).unwrap();
        let again = read_update_stream_binary(&mut Cursor::new(buf)).unwrap();
        assert_eq!(ups.len(), again.len());
        for (a, b) in ups.iter().zip(&again) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.u, b.u);
            assert_eq!(a.v, b.v);
        }
    }

    #[test]
    fn malformed_records_carry_the_record_index() {
        let text = "A;1;u=1,2;v=3,4\nB;2;u=1,2,3;v=1,2\n";
        match read_update_stream_text(&mut Cursor::new(text)) {
            Err(Error::Data { msg }) => assert!(msg.contains("record 2"), "msg: {msg}"),
            other => panic!("expected data error, got {other:?}"),
        }
        let bad = "A;x;u=1;v=1\n";
        match read_update_stream_text(&mut Cursor::new(bad)) {
            Err(Error::Data { msg }) => assert!(msg.contains("record 1"), "msg: {msg}"),
            other => panic!("expected data error, got {other:?}"),
        }
    }
}
