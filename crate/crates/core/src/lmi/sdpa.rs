//! Export of the margin-maximization problem in SDPA sparse format.

use std::io::{self, Write};

use super::ipm::Sdp;
use super::problem::ConicProblem;

/// Writes `min -t  s.t.  Σ yᵢFᵢ - F₀ ⪰ 0` with `y = [x; t]`.
pub fn write_sdpa<W: Write>(problem: &ConicProblem, t_max: f64, out: &mut W) -> io::Result<()> {
    let sdp = Sdp::from_problem(problem, t_max);
    writeln!(out, "\"margin maximization; variables: {} + t\"", problem.n_vars())?;
    writeln!(out, "{}", sdp.m)?;
    let nlp = sdp.lp_c.len();
    let nblocks = sdp.blocks.len() + usize::from(nlp > 0);
    writeln!(out, "{nblocks}")?;
    let mut sizes: Vec<String> = sdp.blocks.iter().map(|b| b.c.nrows().to_string()).collect();
    if nlp > 0 {
        sizes.push(format!("-{nlp}"));
    }
    writeln!(out, "{}", sizes.join(" "))?;
    let c: Vec<String> = sdp.b.iter().map(|v| format!("{}", -v)).collect();
    writeln!(out, "{}", c.join(" "))?;
    for (k, bl) in sdp.blocks.iter().enumerate() {
        let d = bl.c.nrows();
        for i in 0..d {
            for j in i..d {
                let v = bl.c[(i, j)];
                if v != 0.0 {
                    writeln!(out, "0 {} {} {} {:e}", k + 1, i + 1, j + 1, -v)?;
                }
            }
        }
        for (var, entries) in &bl.a {
            for &(r, cc, v) in entries {
                if r <= cc {
                    writeln!(out, "{} {} {} {} {:e}", var + 1, k + 1, r + 1, cc + 1, -v)?;
                }
            }
        }
    }
    if nlp > 0 {
        let blk = sdp.blocks.len() + 1;
        for (r, v) in sdp.lp_c.iter().enumerate() {
            if *v != 0.0 {
                writeln!(out, "0 {blk} {0} {0} {1:e}", r + 1, -v)?;
            }
        }
        for (r, row) in sdp.lp_rows.iter().enumerate() {
            for (var, a) in row {
                writeln!(out, "{} {blk} {1} {1} {2:e}", var + 1, r + 1, -a)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmi::AffineScalar;

    #[test]
    fn header_lists_blocks() {
        let mut p = ConicProblem::new(vec!["p".into()]);
        p.add_scalar("p >= 1", AffineScalar { constant: -1.0, terms: vec![(0, 1.0)] }, 0.0, 1.0);
        let mut buf = Vec::new();
        write_sdpa(&p, 1.0, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "2");
        assert_eq!(lines[2], "1");
        assert_eq!(lines[3], "-5");
        assert_eq!(lines[4], "-0 -1");
    }
}
