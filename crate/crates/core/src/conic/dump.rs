//! Plain-text dump of the embedded problem for cross-checking with external
//! conic solvers.
//!
//! Line-oriented, whitespace separated, `#` starts a comment:
//!
//! ```text
//! irs-cran-conic 1
//! theta <n>                      # Θ̂ is 2n×2n symmetric PSD, Θ_ii = 1
//! omega <L> <m>                  # Ω̂_l are 2m×2m symmetric PSD
//! noise <σ²>
//! objective <constant>
//! c theta <i> <j> <v>            # upper-triangle entries (i ≤ j) of each
//! c omega <l> <i> <j> <v>        # coefficient, 0-based, embedded indices
//! constraint <k> <constant> <rhs> quant <l...> side <l...>
//! a <k> theta <i> <j> <v>
//! a <k> omega <l> <i> <j> <v>
//! ```
//!
//! Traces follow the embedding convention: a coefficient `Â` contributes
//! `½ Tr(Â X̂)`, and constraint `k` reads
//! `½Σ Tr(ÂX̂) + constant − ½Σ_{side} log|σ²I + Ω̂_l| − ½Σ_{quant} log|Ω̂_l| ≤ rhs`.
//! Entries with magnitude below `1e-300` are omitted.

use std::io::Write;

use super::embed::EmbeddedProblem;
use crate::error::Result;
use crate::linalg::RMat;

fn entries<W: Write>(out: &mut W, prefix: &str, m: &RMat) -> Result<()> {
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            let v = m[(i, j)];
            if v.abs() > 1e-300 {
                writeln!(out, "{prefix} {i} {j} {v:e}")?;
            }
        }
    }
    Ok(())
}

fn list(v: &[usize]) -> String {
    v.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn write_problem<W: Write>(prob: &EmbeddedProblem, mut out: W) -> Result<()> {
    let n = prob.objective_theta.nrows() / 2;
    let m = prob.objective_omega.first().map_or(0, |b| b.nrows() / 2);
    writeln!(out, "irs-cran-conic 1")?;
    writeln!(out, "theta {n}")?;
    writeln!(out, "omega {} {m}", prob.objective_omega.len())?;
    writeln!(out, "noise {:e}", prob.noise)?;
    writeln!(out, "objective {:e}", prob.objective_constant)?;
    entries(&mut out, "c theta", &prob.objective_theta)?;
    for (l, b) in prob.objective_omega.iter().enumerate() {
        entries(&mut out, &format!("c omega {l}"), b)?;
    }
    for (k, con) in prob.constraints.iter().enumerate() {
        writeln!(out, "constraint {k} {:e} {:e} quant {} side {}", con.constant, con.rhs, list(&con.quant), list(&con.side))?;
        entries(&mut out, &format!("a {k} theta"), &con.theta)?;
        for (l, b) in con.omega.iter().enumerate() {
            entries(&mut out, &format!("a {k} omega {l}"), b)?;
        }
    }
    Ok(())
}
