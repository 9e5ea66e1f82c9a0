//! Plain-text dump of a [`ConeProgram`] for offline cross-checking.
//!
//! Each block is a header line `name rows cols` followed by the dense matrix,
//! one row per line, 17 significant digits. Infinite bounds are written as
//! `inf` / `-inf`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::{ConeProgram, LinRow, SocRow};
use crate::error::{Error, Result};

const MAGIC: &str = "cone_program 1";

fn put_matrix(out: &mut String, name: &str, m: &DMatrix<f64>) {
    let _ = writeln!(out, "{name} {} {}", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.16e}", m[(i, j)])).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

fn put_vector(out: &mut String, name: &str, v: &DVector<f64>) {
    put_matrix(out, name, &DMatrix::from_column_slice(1, v.len(), v.as_slice()));
}

fn put_scalar(out: &mut String, name: &str, v: f64) {
    put_matrix(out, name, &DMatrix::from_element(1, 1, v));
}

pub fn to_text(p: &ConeProgram) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "n {}", p.n);
    put_matrix(&mut out, "H", &p.h);
    put_vector(&mut out, "f", &p.f);
    put_scalar(&mut out, "cost_offset", p.cost_offset);
    put_matrix(&mut out, "Aeq", &p.a_eq);
    put_vector(&mut out, "beq", &p.b_eq);
    put_vector(&mut out, "lb", &p.lb);
    put_vector(&mut out, "ub", &p.ub);
    let _ = writeln!(out, "soc_rows {}", p.soc_rows.len());
    for r in &p.soc_rows {
        put_matrix(&mut out, "F", &r.f);
        put_vector(&mut out, "g", &r.g);
        put_vector(&mut out, "a", &r.a);
        put_scalar(&mut out, "b", r.b);
    }
    let _ = writeln!(out, "lin_rows {}", p.lin_rows.len());
    for r in &p.lin_rows {
        put_vector(&mut out, "c", &r.c);
        put_scalar(&mut out, "d", r.d);
    }
    out
}

struct Reader<'a> {
    tokens: std::str::SplitWhitespace<'a>,
}

impl Reader<'_> {
    fn token(&mut self) -> Result<&str, String> {
        self.tokens.next().ok_or_else(|| "unexpected end of file".to_string())
    }

    fn expect(&mut self, name: &str) -> Result<(), String> {
        let t = self.token()?;
        if t == name {
            Ok(())
        } else {
            Err(format!("expected `{name}`, found `{t}`"))
        }
    }

    fn count(&mut self) -> Result<usize, String> {
        let t = self.token()?;
        t.parse().map_err(|_| format!("bad count `{t}`"))
    }

    fn number(&mut self) -> Result<f64, String> {
        let t = self.token()?;
        t.parse().map_err(|_| format!("bad number `{t}`"))
    }

    fn matrix(&mut self, name: &str) -> Result<DMatrix<f64>, String> {
        self.expect(name)?;
        let (r, c) = (self.count()?, self.count()?);
        let mut data = Vec::with_capacity(r * c);
        for _ in 0..r * c {
            data.push(self.number()?);
        }
        Ok(DMatrix::from_row_slice(r, c, &data))
    }

    fn vector(&mut self, name: &str) -> Result<DVector<f64>, String> {
        let m = self.matrix(name)?;
        Ok(DVector::from_column_slice(m.as_slice()))
    }

    fn scalar(&mut self, name: &str) -> Result<f64, String> {
        let m = self.matrix(name)?;
        if m.len() != 1 {
            return Err(format!("`{name}` must be 1x1"));
        }
        Ok(m[0])
    }
}

pub fn from_text(text: &str) -> Result<ConeProgram, String> {
    let body = text.strip_prefix(MAGIC).ok_or("missing header line")?;
    let mut r = Reader { tokens: body.split_whitespace() };
    r.expect("n")?;
    let n = r.count()?;
    let mut p = ConeProgram::new(n);
    p.h = r.matrix("H")?;
    p.f = r.vector("f")?;
    p.cost_offset = r.scalar("cost_offset")?;
    p.a_eq = r.matrix("Aeq")?;
    p.b_eq = r.vector("beq")?;
    p.lb = r.vector("lb")?;
    p.ub = r.vector("ub")?;
    r.expect("soc_rows")?;
    for _ in 0..r.count()? {
        let f = r.matrix("F")?;
        let g = r.vector("g")?;
        let a = r.vector("a")?;
        let b = r.scalar("b")?;
        p.soc_rows.push(SocRow { f, g, a, b });
    }
    r.expect("lin_rows")?;
    for _ in 0..r.count()? {
        let c = r.vector("c")?;
        let d = r.scalar("d")?;
        p.lin_rows.push(LinRow { c, d });
    }
    if let Some(t) = r.tokens.next() {
        return Err(format!("trailing data starting at `{t}`"));
    }
    p.validate()?;
    Ok(p)
}

pub fn write_fixture(path: &Path, p: &ConeProgram) -> Result<()> {
    std::fs::write(path, to_text(p)).map_err(|e| Error::io(path, e))
}

pub fn read_fixture(path: &Path) -> Result<ConeProgram> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_text(&text).map_err(|message| Error::Parse { path: path.to_path_buf(), message })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_is_exact() {
        let mut p = ConeProgram::new(2);
        p.h = DMatrix::from_row_slice(2, 2, &[2.0, 0.1, 0.1, 1.0 / 3.0]);
        p.f = DVector::from_vec(vec![-1.0, std::f64::consts::PI]);
        p.cost_offset = 0.125;
        p.ub[1] = 4.0;
        p.soc_rows.push(SocRow {
            f: DMatrix::identity(2, 2),
            g: DVector::from_vec(vec![1e-300, -2.5]),
            a: DVector::from_vec(vec![0.0, 1.0]),
            b: 7.0,
        });
        p.lin_rows.push(LinRow { c: DVector::from_vec(vec![1.0, 1.0]), d: -0.3 });
        let q = from_text(&to_text(&p)).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn truncated_text_is_rejected() {
        let text = to_text(&ConeProgram::new(3));
        assert!(from_text(&text[..text.len() / 2]).is_err());
    }
}
