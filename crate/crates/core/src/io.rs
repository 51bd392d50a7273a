//! Plain-text formats: void sets, displacements, neighbor models and field
//! rasters.
//!
//! Void-set file:
//! ```text
//! dim 3
//! eps 0.125
//! count 2
//! 0 0 0
//! 1 0 0
//! ```
//! Indices are written in lexicographic order; the reader accepts any order
//! and drops duplicates.
//!
//! Displacement file: `dim d`, `eps <x>`, `delta <x>`, then one line per site
//! with `d` integers followed by `d` reals.
//!
//! Neighbor model: one bond per line, `d` integer components of `ξ` followed
//! by the coefficient. Blank lines and `#` comments are ignored.

use std::fmt::Write as _;

use crate::elastic::Displacement;
use crate::error::{Error, Result};
use crate::lattice::{Index, IndexSet, LatticeDomain, VoidSet};
use crate::mesoscale::SmoothSetSample;
use crate::surface::NeighborModel;

/// Dimension-erased contents of a void-set file.
#[derive(Clone, Debug, PartialEq)]
pub struct VoidSetFile {
    pub dim: usize,
    pub eps: f64,
    /// Deduplicated, lexicographically sorted.
    pub indices: Vec<Vec<i64>>,
}

impl VoidSetFile {
    pub fn to_set<const D: usize>(&self, domain: Option<&LatticeDomain<D>>) -> Result<VoidSet<D>> {
        if self.dim != D {
            return Err(Error::DimensionMismatch { expected: D, found: self.dim });
        }
        if let Some(dom) = domain {
            if (dom.eps() - self.eps).abs() > 1e-12 * self.eps.abs().max(1.0) {
                return Err(Error::Invalid(format!(
                    "void set lattice spacing {} does not match domain spacing {}",
                    self.eps,
                    dom.eps()
                )));
            }
        }
        let idx: Vec<Index<D>> = self.indices.iter().map(|v| to_index::<D>(v)).collect();
        match domain {
            Some(dom) => dom.void_set(idx),
            None => Ok(IndexSet::from_indices(idx)),
        }
    }
}

fn to_index<const D: usize>(v: &[i64]) -> Index<D> {
    let mut i = [0; D];
    i.copy_from_slice(v);
    i
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn header<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    key: &str,
    last_line: usize,
) -> Result<(usize, &'a str)> {
    let (ln, l) = lines.next().ok_or_else(|| parse_err(last_line + 1, format!("missing `{key}` header")))?;
    let mut it = l.split_whitespace();
    if it.next() != Some(key) {
        return Err(parse_err(ln, format!("expected `{key} <value>`, found `{l}`")));
    }
    let v = it.next().ok_or_else(|| parse_err(ln, format!("`{key}` needs a value")))?;
    if it.next().is_some() {
        return Err(parse_err(ln, format!("trailing tokens after `{key}`")));
    }
    Ok((ln, v))
}

fn parse_dim(ln: usize, v: &str) -> Result<usize> {
    match v.parse::<usize>() {
        Ok(d @ (2 | 3)) => Ok(d),
        _ => Err(parse_err(ln, format!("dimension must be 2 or 3, found `{v}`"))),
    }
}

fn parse_positive(ln: usize, key: &str, v: &str) -> Result<f64> {
    match v.parse::<f64>() {
        Ok(x) if x > 0.0 && x.is_finite() => Ok(x),
        _ => Err(parse_err(ln, format!("`{key}` must be a positive number, found `{v}`"))),
    }
}

pub fn parse_void_set(text: &str) -> Result<VoidSetFile> {
    let mut lines = content_lines(text);
    let (ln, v) = header(&mut lines, "dim", 0)?;
    let dim = parse_dim(ln, v)?;
    let (ln, v) = header(&mut lines, "eps", ln)?;
    let eps = parse_positive(ln, "eps", v)?;
    let (ln, v) = header(&mut lines, "count", ln)?;
    let count: usize = v.parse().map_err(|_| parse_err(ln, format!("invalid count `{v}`")))?;
    let mut last = ln;
    let mut indices = Vec::with_capacity(count);
    for (ln, l) in lines {
        last = ln;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != dim {
            return Err(parse_err(ln, format!("expected {dim} integers, found {} tokens", toks.len())));
        }
        let mut idx = Vec::with_capacity(dim);
        for t in toks {
            idx.push(t.parse::<i64>().map_err(|_| parse_err(ln, format!("invalid integer `{t}`")))?);
        }
        indices.push(idx);
    }
    if indices.len() != count {
        return Err(parse_err(last, format!("count says {count} indices, found {}", indices.len())));
    }
    indices.sort();
    indices.dedup();
    Ok(VoidSetFile { dim, eps, indices })
}

pub fn write_void_set<const D: usize>(e: &VoidSet<D>, eps: f64) -> String {
    let mut s = format!("dim {D}\neps {eps}\ncount {}\n", e.len());
    for i in e.iter() {
        let parts: Vec<String> = i.iter().map(|v| v.to_string()).collect();
        s.push_str(&parts.join(" "));
        s.push('\n');
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct DisplacementFile {
    pub dim: usize,
    pub eps: f64,
    pub delta: f64,
    pub entries: Vec<(Vec<i64>, Vec<f64>)>,
}

impl DisplacementFile {
    /// Overwrites the listed sites of `u`; sites outside `U` are errors.
    pub fn apply_to<const D: usize>(&self, u: &mut Displacement<D>) -> Result<()> {
        if self.dim != D {
            return Err(Error::DimensionMismatch { expected: D, found: self.dim });
        }
        for (i, v) in &self.entries {
            let idx = to_index::<D>(i);
            if !u.domain().in_u(&idx) {
                return Err(Error::OutOfDomain(format!("displacement site {idx:?} lies outside U")));
            }
            let mut val = [0.0; D];
            val.copy_from_slice(v);
            u.set(&idx, val);
        }
        Ok(())
    }
}

pub fn parse_displacement(text: &str) -> Result<DisplacementFile> {
    let mut lines = content_lines(text);
    let (ln, v) = header(&mut lines, "dim", 0)?;
    let dim = parse_dim(ln, v)?;
    let (ln, v) = header(&mut lines, "eps", ln)?;
    let eps = parse_positive(ln, "eps", v)?;
    let (ln, v) = header(&mut lines, "delta", ln)?;
    let delta = parse_positive(ln, "delta", v)?;
    let mut entries: Vec<(Vec<i64>, Vec<f64>)> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (ln, l) in lines {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 2 * dim {
            return Err(parse_err(ln, format!("expected {dim} integers and {dim} reals, found {} tokens", toks.len())));
        }
        let idx = toks[..dim]
            .iter()
            .map(|t| t.parse::<i64>().map_err(|_| parse_err(ln, format!("invalid integer `{t}`"))))
            .collect::<Result<Vec<_>>>()?;
        let val = toks[dim..]
            .iter()
            .map(|t| match t.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(parse_err(ln, format!("invalid real `{t}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if !seen.insert(idx.clone()) {
            return Err(parse_err(ln, format!("site {idx:?} listed twice")));
        }
        entries.push((idx, val));
    }
    Ok(DisplacementFile { dim, eps, delta, entries })
}

/// Every site of `U` with its value, in lexicographic order.
pub fn write_displacement<const D: usize>(u: &Displacement<D>, delta: f64) -> String {
    let dom = u.domain();
    let mut s = format!("dim {D}\neps {}\ndelta {delta}\n", dom.eps());
    for i in dom.u_box().iter() {
        let v = u.get(&i);
        for a in 0..D {
            let _ = write!(s, "{} ", i[a]);
        }
        let vals: Vec<String> = v.iter().map(|x| format!("{x:.17e}")).collect();
        s.push_str(&vals.join(" "));
        s.push('\n');
    }
    s
}

pub fn parse_neighbor_model<const D: usize>(text: &str) -> Result<NeighborModel<D>> {
    let mut bonds = Vec::new();
    for (ln, l) in content_lines(text) {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != D + 1 {
            return Err(parse_err(ln, format!("expected {D} bond components and a coefficient, found {} tokens", toks.len())));
        }
        let mut xi = [0i64; D];
        for a in 0..D {
            xi[a] = toks[a].parse().map_err(|_| parse_err(ln, format!("invalid integer `{}`", toks[a])))?;
        }
        let c: f64 = match toks[D].parse::<f64>() {
            Ok(c) if c.is_finite() => c,
            _ => return Err(parse_err(ln, format!("invalid coefficient `{}`", toks[D]))),
        };
        bonds.push((xi, c));
    }
    NeighborModel::new(bonds)
}

/// Fine-grid field of a smoothing sample: `#` header lines, then the values
/// in row-major order (last axis fastest), one row of the last axis per line,
/// 9 significant digits.
pub fn write_raster<const D: usize>(s: &SmoothSetSample<D>) -> String {
    let shape = s.fine_box.shape();
    let h = s.h() * s.scale;
    let mut origin = [0.0; D];
    for a in 0..D {
        origin[a] = s.scale * (-0.5 + (s.fine_box.lo[a] as f64 + 0.5) / s.m as f64) + s.offset[a];
    }
    let fmt_list = |v: &[f64]| v.iter().map(|x| format!("{x:.8e}")).collect::<Vec<_>>().join(" ");
    let mut out = String::new();
    let _ = writeln!(out, "# dim {D}");
    let _ = writeln!(out, "# shape {}", shape.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" "));
    let _ = writeln!(out, "# cell {h:.8e}");
    let _ = writeln!(out, "# first_center {}", fmt_list(&origin));
    let _ = writeln!(out, "# level {:.8e}", s.t);
    let row = shape[D - 1].max(1);
    for chunk in s.field.chunks(row) {
        out.push_str(&fmt_list(chunk));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn void_set_round_trip() {
        let e = IndexSet::from_indices(vec![[1i64, 0, 0], [0, 0, 0], [-3, 2, 1]]);
        let text = write_void_set(&e, 0.125);
        assert!(text.starts_with("dim 3\neps 0.125\ncount 3\n-3 2 1\n0 0 0\n"));
        let f = parse_void_set(&text).unwrap();
        assert_eq!(f.to_set::<3>(None).unwrap(), e);
    }

    #[test]
    fn duplicates_are_dropped() {
        let f = parse_void_set("dim 2\neps 0.5\ncount 3\n1 1\n0 0\n1 1\n").unwrap();
        assert_eq!(f.indices, vec![vec![0, 0], vec![1, 1]]);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let cases = [
            ("dim 4\neps 1\ncount 0\n", 1),
            ("dim 2\neps -1\ncount 0\n", 2),
            ("dim 2\neps 1\ncount 1\n1 x\n", 4),
            ("dim 2\neps 1\ncount 1\n1 2 3\n", 4),
            ("dim 2\neps 1\ncount 2\n1 2\n", 4),
            ("dim 2\n", 2),
        ];
        for (text, line) in cases {
            match parse_void_set(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn out_of_domain_and_dimension_errors() {
        let dom = LatticeDomain::<2>::cube(0.5, 4, 1).unwrap();
        let f = parse_void_set("dim 2\neps 0.5\ncount 1\n100 0\n").unwrap();
        assert!(matches!(f.to_set(Some(&dom)), Err(Error::OutOfDomain(_))));
        assert!(matches!(f.to_set::<3>(None), Err(Error::DimensionMismatch { expected: 3, found: 2 })));
    }

    #[test]
    fn neighbor_model_lines() {
        let m = parse_neighbor_model::<2>("# nn\n1 0 1.0\n-1 0 1.0\n0 1 1.0\n0 -1 1.0\n").unwrap();
        assert_eq!(m.bonds().len(), 4);
        assert!(parse_neighbor_model::<2>("1 0 1.0\n").is_err());
        assert!(parse_neighbor_model::<2>("2 0 1.0\n-2 0 1.0\n").is_err());
        assert!(matches!(parse_neighbor_model::<2>("1 0\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn displacement_round_trip() {
        let dom = LatticeDomain::<2>::cube(0.5, 2, 1).unwrap();
        let u = Displacement::from_fn(&dom, &VoidSet::empty(), |x| [x[0] * 0.25, -x[1] / 3.0]);
        let text = write_displacement(&u, 1e-3);
        let f = parse_displacement(&text).unwrap();
        assert_eq!(f.delta, 1e-3);
        let mut v = Displacement::zero(&dom);
        f.apply_to(&mut v).unwrap();
        assert_eq!(v.max_abs_difference(&u), 0.0);
    }
}
