//! Line-oriented coefficient dumps: header "d N components reality_tag",
//! then "ℓ_1 … ℓ_d j re im" per mode, component by component.

use super::{Reality, Shape, TorusFunction};
use crate::error::{Error, Result};
use num_complex::Complex64 as C64;
use std::fmt::Write;

pub fn write_dump(u: &TorusFunction) -> String {
    let sh = u.shape();
    let mut out = String::new();
    writeln!(out, "{} {} {} {}", u.d, u.n, u.ncomp(), u.reality.tag()).unwrap();
    for c in &u.comps {
        for (i, v) in c.iter().enumerate() {
            let (ell, j) = sh.decode(i);
            for l in &ell[..u.d] {
                write!(out, "{l} ").unwrap();
            }
            writeln!(out, "{j} {:.17e} {:.17e}", v.re, v.im).unwrap();
        }
    }
    out
}

pub fn parse_dump(text: &str) -> Result<TorusFunction> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let head: Vec<&str> = lines.next().ok_or_else(|| Error::Config("empty dump".into()))?.split_whitespace().collect();
    if head.len() != 4 {
        return Err(Error::Config("bad dump header".into()));
    }
    let parse_usize = |s: &str| s.parse::<usize>().map_err(|e| Error::Config(format!("dump header: {e}")));
    let d = parse_usize(head[0])?;
    let n = parse_usize(head[1])?;
    let nc = parse_usize(head[2])?;
    let reality = Reality::from_tag(head[3]).ok_or_else(|| Error::Config(format!("unknown reality tag {}", head[3])))?;
    if !(1..=3).contains(&d) || !(1..=2).contains(&nc) {
        return Err(Error::Config("dump dimensions out of range".into()));
    }
    let sh = Shape::new(d, n);
    let mut comps = vec![vec![C64::new(0.0, 0.0); sh.len()]; nc];
    for c in comps.iter_mut() {
        for slot in c.iter_mut() {
            let line = lines.next().ok_or_else(|| Error::Config("truncated dump".into()))?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != d + 3 {
                return Err(Error::Config(format!("bad dump record: {line}")));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Config(format!("dump value: {e}")));
            *slot = C64::new(num(f[d + 1])?, num(f[d + 2])?);
        }
    }
    Ok(TorusFunction::from_components(d, n, comps, reality))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier_core::random_analytic;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dump_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = random_analytic(&mut rng, 2, 3, 1.0, 0.3, false).pair();
        let text = write_dump(&u);
        assert!(text.starts_with("2 3 2 conjugate-pair\n"));
        let v = parse_dump(&text).unwrap();
        assert_eq!(u, v);
    }
}
