//! SDPA sparse format (`.dat-s`) reader.
//!
//! The file describes `max b'y  s.t.  sum_i y_i A_i - A0 PSD`. It is loaded
//! as the pencil form `min <dvec, x>  s.t.  G0 + sum_i x_i G_i PSD` with
//! `dvec = -b`, `G_i = A_i` and `G0 = -A0`. Multiple blocks are concatenated
//! into one block-diagonal matrix; a negative block size declares a diagonal
//! block whose entries must sit on the diagonal.

use super::{EqConstraints, InstanceForm, MatrixMapping, NsdpInstance, Quadratic};
use crate::error::{Error, Result};
use crate::symmat::SymMatrix;
use std::path::Path;

struct Tokens {
    items: Vec<(usize, String)>,
    pos: usize,
}

impl Tokens {
    fn new(text: &str) -> Self {
        let mut items = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let trimmed = line.trim_start();
            if trimmed.starts_with('*') || trimmed.starts_with('"') {
                continue;
            }
            for tok in line
                .split(|c: char| c.is_whitespace() || matches!(c, ',' | '(' | ')' | '{' | '}'))
            {
                if !tok.is_empty() {
                    items.push((lineno + 1, tok.to_string()));
                }
            }
        }
        Tokens { items, pos: 0 }
    }

    fn line(&self) -> usize {
        self.items
            .get(self.pos.min(self.items.len().saturating_sub(1)))
            .map(|(l, _)| *l)
            .unwrap_or(0)
    }

    fn next(&mut self, what: &str) -> Result<(usize, &str)> {
        match self.items.get(self.pos) {
            Some((line, tok)) => {
                self.pos += 1;
                Ok((*line, tok.as_str()))
            }
            None => Err(Error::Parse {
                line: self.line(),
                msg: format!("unexpected end of file, expected {what}"),
            }),
        }
    }

    fn next_usize(&mut self, what: &str) -> Result<usize> {
        let (line, tok) = self.next(what)?;
        tok.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("expected {what}, found {tok:?}"),
        })
    }

    fn next_i64(&mut self, what: &str) -> Result<i64> {
        let (line, tok) = self.next(what)?;
        // Block sizes sometimes appear as floats ("2.0"); accept the integer part.
        tok.parse::<i64>()
            .or_else(|_| tok.parse::<f64>().map(|f| f as i64))
            .map_err(|_| Error::Parse { line, msg: format!("expected {what}, found {tok:?}") })
    }

    fn next_f64(&mut self, what: &str) -> Result<f64> {
        let (line, tok) = self.next(what)?;
        tok.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("expected {what}, found {tok:?}"),
        })
    }

    fn exhausted(&self) -> bool {
        self.pos >= self.items.len()
    }
}

/// Parses SDPA sparse text into a pencil-form instance.
pub fn load_sdpa_str(text: &str, name: &str) -> Result<NsdpInstance> {
    let mut toks = Tokens::new(text);
    let m = toks.next_usize("number of constraint matrices")?;
    let nblocks = toks.next_usize("number of blocks")?;
    let mut sizes = Vec::with_capacity(nblocks);
    for _ in 0..nblocks {
        sizes.push(toks.next_i64("block size")?);
    }
    let mut offsets = Vec::with_capacity(nblocks);
    let mut n = 0usize;
    for &s in &sizes {
        offsets.push(n);
        n += s.unsigned_abs() as usize;
    }

    let mut bvec = Vec::with_capacity(m);
    for _ in 0..m {
        bvec.push(toks.next_f64("objective coefficient")?);
    }

    let mut a0 = SymMatrix::zeros(n);
    let mut amats: Vec<SymMatrix> = (0..m).map(|_| SymMatrix::zeros(n)).collect();
    while !toks.exhausted() {
        let line = toks.items[toks.pos].0;
        let matno = toks.next_usize("matrix index")?;
        let blkno = toks.next_usize("block index")?;
        let i = toks.next_usize("row index")?;
        let j = toks.next_usize("column index")?;
        let v = toks.next_f64("entry value")?;
        if matno > m {
            return Err(Error::Parse { line, msg: format!("matrix index {matno} exceeds m = {m}") });
        }
        if blkno == 0 || blkno > nblocks {
            return Err(Error::Parse { line, msg: format!("block index {blkno} out of range") });
        }
        let size = sizes[blkno - 1];
        let extent = size.unsigned_abs() as usize;
        if i == 0 || j == 0 || i > extent || j > extent {
            return Err(Error::Parse {
                line,
                msg: format!("entry ({i},{j}) outside block of size {extent}"),
            });
        }
        if size < 0 && i != j {
            return Err(Error::Parse {
                line,
                msg: format!("off-diagonal entry ({i},{j}) in diagonal block {blkno}"),
            });
        }
        let gi = offsets[blkno - 1] + i - 1;
        let gj = offsets[blkno - 1] + j - 1;
        let target = if matno == 0 { &mut a0 } else { &mut amats[matno - 1] };
        target.add_at(gi.min(gj), gi.max(gj), v);
    }

    let dvec: Vec<f64> = bvec.iter().map(|b| -b).collect();
    NsdpInstance::new(
        name.to_string(),
        InstanceForm::Lmi,
        Quadratic::linear(dvec),
        EqConstraints::default(),
        MatrixMapping::affine(a0.scale(-1.0), amats),
    )
}

/// Loads an SDPA sparse file.
pub fn load_sdpa(path: &Path) -> Result<NsdpInstance> {
    let text = std::fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sdpa".to_string());
    load_sdpa_str(&text, &name)
}
