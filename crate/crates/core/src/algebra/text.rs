//! Deterministic text serialization of polynomials: one line per monomial,
//! `k=<ints> alpha=<ints> beta=<slot:deg pairs> re=<float> im=<float>`,
//! lexicographically sorted. Slots index the doubled normal lattice:
//! `0..L-1` are the xi copies of the sorted normal sites, `L..2L-1` the eta
//! copies. A leading `# caps ...` line pins the storage caps so dumps parse
//! back exactly.

use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex;
use smallvec::SmallVec;

use super::{Caps, LatticeConfig, MultiIndex, TfPoly};
use crate::error::Result;
use crate::{CoreError, Scalar};

impl<S: Scalar> TfPoly<S> {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let caps = self.caps();
        writeln!(
            out,
            "# caps kmax={} deg_r={} deg_z={}",
            caps.k_max, caps.deg_r, caps.deg_z
        )
        .unwrap();
        for (idx, c) in self.sorted_terms() {
            let k = join_ints(idx.k.iter().map(|&v| v as i64));
            let alpha = join_ints(idx.alpha.iter().map(|&v| v as i64));
            let beta = if idx.beta.is_empty() {
                "-".to_string()
            } else {
                idx.beta
                    .iter()
                    .map(|&(s, d)| format!("{s}:{d}"))
                    .collect::<Vec<_>>()
                    .join(";")
            };
            writeln!(out, "k={k} alpha={alpha} beta={beta} re={:e} im={:e}", c.re, c.im).unwrap();
        }
        out
    }

    pub fn from_text(text: &str, lattice: Arc<LatticeConfig<S>>) -> Result<Self> {
        let mut caps: Option<Caps> = None;
        let mut poly: Option<TfPoly<S>> = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("# caps ") {
                let mut kmax = None;
                let mut deg_r = None;
                let mut deg_z = None;
                for field in rest.split_whitespace() {
                    let (key, val) = field
                        .split_once('=')
                        .ok_or_else(|| parse_err(lineno, "malformed caps field"))?;
                    match key {
                        "kmax" => kmax = val.parse::<u16>().ok(),
                        "deg_r" => deg_r = val.parse::<u8>().ok(),
                        "deg_z" => deg_z = val.parse::<u8>().ok(),
                        _ => return Err(parse_err(lineno, "unknown caps field")),
                    }
                }
                let c = Caps::new(
                    kmax.ok_or_else(|| parse_err(lineno, "missing kmax"))?,
                    deg_r.ok_or_else(|| parse_err(lineno, "missing deg_r"))?,
                    deg_z.ok_or_else(|| parse_err(lineno, "missing deg_z"))?,
                );
                caps = Some(c);
                poly = Some(TfPoly::zero(lattice.clone(), c));
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let caps = caps.ok_or_else(|| parse_err(lineno, "monomial before caps header"))?;
            let _ = caps;
            let poly_ref = poly.as_mut().unwrap();
            let mut fields = line.split_whitespace();
            let k_str = expect_field(&mut fields, "k", lineno)?;
            let a_str = expect_field(&mut fields, "alpha", lineno)?;
            let b_str = expect_field(&mut fields, "beta", lineno)?;
            let re_str = expect_field(&mut fields, "re", lineno)?;
            let im_str = expect_field(&mut fields, "im", lineno)?;
            let k: SmallVec<[i16; 4]> = parse_ints(k_str, lineno)?;
            let alpha: SmallVec<[u8; 4]> = parse_ints(a_str, lineno)?;
            if k.len() != lattice.n_tangential() || alpha.len() != lattice.n_tangential() {
                return Err(parse_err(lineno, "k/alpha length mismatch with lattice"));
            }
            let mut beta: SmallVec<[(u16, u8); 6]> = SmallVec::new();
            if b_str != "-" {
                for pair in b_str.split(';') {
                    let (s, d) = pair
                        .split_once(':')
                        .ok_or_else(|| parse_err(lineno, "malformed beta pair"))?;
                    let slot: u16 = s.parse().map_err(|_| parse_err(lineno, "bad slot"))?;
                    if slot as usize >= lattice.n_slots() {
                        return Err(parse_err(lineno, "slot outside lattice"));
                    }
                    let deg: u8 = d.parse().map_err(|_| parse_err(lineno, "bad degree"))?;
                    beta.push((slot, deg));
                }
            }
            let re: f64 = re_str.parse().map_err(|_| parse_err(lineno, "bad re"))?;
            let im: f64 = im_str.parse().map_err(|_| parse_err(lineno, "bad im"))?;
            poly_ref.insert_checked(
                MultiIndex { k, alpha, beta },
                Complex::new(S::sc(re), S::sc(im)),
            )?;
        }
        poly.ok_or_else(|| CoreError::Parse("empty polynomial text".into()))
    }
}

fn join_ints(vals: impl Iterator<Item = i64>) -> String {
    let v: Vec<String> = vals.map(|x| x.to_string()).collect();
    v.join(",")
}

fn parse_ints<T: std::str::FromStr, const N: usize>(
    s: &str,
    lineno: usize,
) -> Result<SmallVec<[T; N]>>
where
    [T; N]: smallvec::Array<Item = T>,
{
    s.split(',')
        .map(|x| x.parse::<T>().map_err(|_| parse_err(lineno, "bad integer")))
        .collect()
}

fn expect_field<'a>(
    fields: &mut impl Iterator<Item = &'a str>,
    key: &str,
    lineno: usize,
) -> Result<&'a str> {
    let f = fields
        .next()
        .ok_or_else(|| parse_err(lineno, "missing field"))?;
    f.strip_prefix(key)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| parse_err(lineno, "unexpected field"))
}

fn parse_err(lineno: usize, what: &str) -> CoreError {
    CoreError::Parse(format!("line {}: {what}", lineno + 1))
}
