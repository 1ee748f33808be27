//! Machine-readable outputs: CSV plot data for the profile, corrector basis
//! and ε-ladders, plus the FNV-1a fingerprints every report embeds so a run
//! can be traced back to its exact inputs.

use std::io::Write;
use std::path::Path;

use crate::corrector::CorrectorBasis;
use crate::error::Result;
use crate::profile::WaveProfile;

/// 64-bit FNV-1a of a byte string; used to fingerprint configs and inputs.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

pub fn fingerprint_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(format!("{:016x}", fnv1a(&bytes)))
}

pub fn fingerprint_str(text: &str) -> String {
    format!("{:016x}", fnv1a(text.as_bytes()))
}

/// Writes rows of f64 columns with a header line. Values are printed with
/// `{:.17e}` so identical runs produce byte-identical files.
pub fn write_csv(path: &Path, header: &str, rows: &[Vec<f64>]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{header}")?;
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                write!(out, ",")?;
            }
            write!(out, "{v:.17e}")?;
            first = false;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Profile curves: xi, u, v, du, dv, ddv.
pub fn profile_csv(path: &Path, profile: &WaveProfile) -> Result<()> {
    let rows: Vec<Vec<f64>> = (0..profile.grid.n)
        .map(|i| {
            vec![
                profile.grid.points[i],
                profile.u[i],
                profile.v[i],
                profile.du[i],
                profile.dv[i],
                profile.ddv[i],
            ]
        })
        .collect();
    write_csv(path, "xi,u,v,du,dv,ddv", &rows)
}

/// Corrector basis curves: xi, Q_A, Q_B, dQ_A, dQ_B, H_A, H_B.
pub fn basis_csv(path: &Path, basis: &CorrectorBasis) -> Result<()> {
    let rows: Vec<Vec<f64>> = (0..basis.grid.n)
        .map(|i| {
            vec![
                basis.grid.points[i],
                basis.q_a[i],
                basis.q_b[i],
                basis.dq_a[i],
                basis.dq_b[i],
                basis.h_a[i],
                basis.h_b[i],
            ]
        })
        .collect();
    write_csv(path, "xi,Q_A,Q_B,dQ_A,dQ_B,H_A,H_B", &rows)
}

/// Operator matrix dump as (row, col, value) triplets.
pub fn matrix_csv(path: &Path, op: &crate::linop::LineOperator) -> Result<()> {
    let rows: Vec<Vec<f64>> = op
        .matrix_triplets()
        .into_iter()
        .map(|(r, c, v)| vec![r as f64, c as f64, v])
        .collect();
    write_csv(path, "row,col,value", &rows)
}

/// ε-ladder rows: eps, S_direct, S_asym, S_ac, rel_err, newton_iters.
pub fn ladder_csv(
    path: &Path,
    eps: &[f64],
    s_direct: &[f64],
    s_asym: f64,
    s_ac: f64,
    rel_err: &[f64],
    newton_iters: &[usize],
) -> Result<()> {
    let rows: Vec<Vec<f64>> = (0..eps.len())
        .map(|i| {
            vec![
                eps[i],
                s_direct[i],
                s_asym,
                s_ac,
                rel_err[i],
                newton_iters[i] as f64,
            ]
        })
        .collect();
    write_csv(path, "eps,S_direct,S_asym,S_ac,rel_err,newton_iters", &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprint_is_stable() {
        assert_eq!(fingerprint_str("sharplim"), fingerprint_str("sharplim"));
        assert_ne!(fingerprint_str("a"), fingerprint_str("b"));
    }

    #[test]
    fn empty_ladder_writes_header_only() {
        let dir = std::env::temp_dir().join("sharplim_report_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ladder.csv");
        ladder_csv(&path, &[], &[], 0.0, 0.0, &[], &[]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.trim(), "eps,S_direct,S_asym,S_ac,rel_err,newton_iters");
    }
}
