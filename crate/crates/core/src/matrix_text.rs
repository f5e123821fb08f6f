//! Plain-text surface format used by tests and stage dumps.
//!
//! ```text
//! h w res_x res_y
//! z z z ...        (h·w whitespace-separated heights, NA for missing)
//! ```
//!
//! Values are written in shortest round-trip form, so read∘write is exact.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::surface::{SurfaceError, SurfaceMatrix};

#[derive(Debug, Error)]
pub enum MatrixTextError {
    #[error("line {line}, column {column}: {message}")]
    ParseError {
        line: usize,
        column: usize,
        message: String,
    },
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

struct Token<'a> {
    text: &'a str,
    line: usize,
    column: usize,
}

fn tokens(text: &str) -> impl Iterator<Item = Token<'_>> {
    text.lines().enumerate().flat_map(|(l, line)| {
        let base = line.as_ptr() as usize;
        line.split_whitespace().map(move |t| Token {
            text: t,
            line: l + 1,
            column: t.as_ptr() as usize - base + 1,
        })
    })
}

fn err(tok: &Token, message: impl Into<String>) -> MatrixTextError {
    MatrixTextError::ParseError {
        line: tok.line,
        column: tok.column,
        message: message.into(),
    }
}

pub fn parse_matrix_text(text: &str) -> Result<SurfaceMatrix, MatrixTextError> {
    let mut toks = tokens(text);
    let eof = |what: &str| MatrixTextError::ParseError {
        line: text.lines().count().max(1),
        column: 1,
        message: format!("unexpected end of input, expected {what}"),
    };
    let mut header = Vec::with_capacity(4);
    for what in ["h", "w", "res_x", "res_y"] {
        header.push((what, toks.next().ok_or_else(|| eof(what))?));
    }
    let dim = |(what, tok): &(&str, Token)| -> Result<usize, MatrixTextError> {
        tok.text.parse().map_err(|_| err(tok, format!("{what} must be a non-negative integer")))
    };
    let res = |(what, tok): &(&str, Token)| -> Result<f64, MatrixTextError> {
        tok.text.parse().map_err(|_| err(tok, format!("{what} must be a number")))
    };
    let (h, w) = (dim(&header[0])?, dim(&header[1])?);
    let (rx, ry) = (res(&header[2])?, res(&header[3])?);
    let n = h * w;
    let mut cells = Vec::with_capacity(n);
    for tok in toks {
        if cells.len() == n {
            return Err(err(&tok, format!("extra value beyond the declared {h}x{w} grid")));
        }
        if tok.text == "NA" {
            cells.push(None);
        } else {
            let v: f64 = tok.text.parse().map_err(|_| err(&tok, format!("bad value {:?}", tok.text)))?;
            if !v.is_finite() {
                return Err(err(&tok, "non-finite value; use NA for missing"));
            }
            cells.push(Some(v));
        }
    }
    if cells.len() != n {
        return Err(eof(&format!("{n} values, found {}", cells.len())));
    }
    Ok(SurfaceMatrix::from_vec(h, w, cells, rx, ry)?)
}

pub fn render_matrix_text(surface: &SurfaceMatrix) -> String {
    let mut out = String::with_capacity(surface.len() * 12);
    let _ = writeln!(out, "{} {} {} {}", surface.rows(), surface.cols(), surface.res_x(), surface.res_y());
    for i in 0..surface.rows() {
        for (j, v) in surface.row(i).iter().enumerate() {
            if j > 0 {
                out.push(' ');
            }
            match v {
                Some(z) => {
                    let _ = write!(out, "{z:?}");
                }
                None => out.push_str("NA"),
            }
        }
        out.push('\n');
    }
    out
}

pub fn read_matrix_text(path: impl AsRef<Path>) -> Result<SurfaceMatrix, MatrixTextError> {
    parse_matrix_text(&std::fs::read_to_string(path)?)
}

pub fn write_matrix_text(surface: &SurfaceMatrix, path: impl AsRef<Path>) -> Result<(), MatrixTextError> {
    std::fs::write(path, render_matrix_text(surface))?;
    Ok(())
}
