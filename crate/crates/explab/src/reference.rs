//! Reference solutions: fine-step runs of a named method (or classic RK4 on
//! the corrected w-form), cached to disk keyed by problem, grid, recipe and
//! correction.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use expint::correction::Correction;
use expint::scheme::{
    integrate, CorrectionMode, IntegrateOptions, StepSequence,
};
use expint::Error;
use sha2::{Digest, Sha256};

use crate::problems::{AnyProblem, Assembled};
use crate::LabError;

/// Reference state at the final time for the given assembled problem,
/// integrating with `method` at constant step `tau`. Results are cached in
/// `cache_dir` when provided.
pub fn reference_solution(
    asm: &Assembled,
    method: &str,
    tau: f64,
    cache_dir: Option<&Path>,
) -> Result<Vec<f64>, LabError> {
    let key = cache_key(asm, method, tau);
    if let Some(dir) = cache_dir {
        if let Some(hit) = read_cache(&cache_path(dir, &key), asm.operator.dim()) {
            return Ok(hit);
        }
    }
    let state = compute_reference(asm, method, tau)?;
    if let Some(dir) = cache_dir {
        let _ = fs::create_dir_all(dir);
        let _ = write_cache(&cache_path(dir, &key), &state);
    }
    Ok(state)
}

fn compute_reference(asm: &Assembled, method: &str, tau: f64) -> Result<Vec<f64>, LabError> {
    let steps = StepSequence::constant_with_tau(asm.horizon, tau)?;
    if method == "rk4" {
        return rk4_reference(asm, &steps);
    }
    let m = expint::scheme::registry_get(method)?;
    let traj = integrate(asm.problem.as_ref(), &m, &steps, &IntegrateOptions::default())?;
    Ok(traj.final_state)
}

/// Classic RK4 on the corrected homogeneous form w' = Aw + g(t,w) with
/// g = f(t, w+z) + k (semilinear) or g = f(t) + k (linear); u = w + z.
fn rk4_reference(asm: &Assembled, steps: &StepSequence) -> Result<Vec<f64>, LabError> {
    let op = asm.operator.as_ref();
    let CorrectionMode::Field(corr) = asm.problem.correction() else {
        return Err(LabError::Lib(Error::InvalidCorrection(
            "the RK4 reference needs a correction field".into(),
        )));
    };
    let corr: &Arc<dyn Correction> = corr;
    let g = |t: f64, w: &[f64]| -> Result<Vec<f64>, LabError> {
        let mut out = match &asm.problem {
            AnyProblem::Linear(p) => p.source.sample(t, &op.meta().coords)?,
            AnyProblem::Semilinear(p) => {
                let z = corr.z(t)?;
                let u: Vec<f64> = w.iter().zip(&z).map(|(a, b)| a + b).collect();
                (p.nonlinearity)(t, &u)
            }
        };
        let k = corr.k(t)?;
        for (o, kv) in out.iter_mut().zip(&k) {
            *o += kv;
        }
        Ok(out)
    };
    let rhs = |t: f64, w: &[f64]| -> Result<Vec<f64>, LabError> {
        let mut aw = op.apply(w)?;
        let gw = g(t, w)?;
        for (a, b) in aw.iter_mut().zip(&gw) {
            *a += b;
        }
        Ok(aw)
    };

    let initial = match &asm.problem {
        AnyProblem::Linear(p) => &p.initial,
        AnyProblem::Semilinear(p) => &p.initial,
    };
    let z0 = corr.z(0.0)?;
    let mut w: Vec<f64> = initial.iter().zip(&z0).map(|(a, b)| a - b).collect();
    let mut t = 0.0;
    let n = w.len();
    for (step, &tau) in steps.steps().iter().enumerate() {
        let k1 = rhs(t, &w)?;
        let mut tmp: Vec<f64> = (0..n).map(|i| w[i] + 0.5 * tau * k1[i]).collect();
        let k2 = rhs(t + 0.5 * tau, &tmp)?;
        for i in 0..n {
            tmp[i] = w[i] + 0.5 * tau * k2[i];
        }
        let k3 = rhs(t + 0.5 * tau, &tmp)?;
        for i in 0..n {
            tmp[i] = w[i] + tau * k3[i];
        }
        let k4 = rhs(t + tau, &tmp)?;
        for i in 0..n {
            w[i] += tau / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        t += tau;
        if !w.iter().all(|x| x.is_finite()) {
            return Err(LabError::Lib(Error::Diverged { step }));
        }
    }
    let z_end = corr.z(t)?;
    Ok(w.iter().zip(&z_end).map(|(a, b)| a + b).collect())
}

fn cache_key(asm: &Assembled, method: &str, tau: f64) -> String {
    let mut h = Sha256::new();
    h.update(format!(
        "explab-ref-v1|{}|n={}|dim={}|method={method}|tau={:016x}|corr={}",
        asm.id,
        asm.grid_n,
        asm.operator.dim(),
        tau.to_bits(),
        asm.correction_name,
    ));
    let digest = h.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn cache_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("ref_{key}.bin"))
}

const MAGIC: &[u8; 6] = b"XREF1\n";

fn read_cache(path: &Path, dim: usize) -> Option<Vec<f64>> {
    let bytes = fs::read(path).ok()?;
    if bytes.len() != MAGIC.len() + 8 + 8 * dim || &bytes[..MAGIC.len()] != MAGIC {
        return None;
    }
    let len = u64::from_le_bytes(bytes[MAGIC.len()..MAGIC.len() + 8].try_into().ok()?) as usize;
    if len != dim {
        return None;
    }
    let mut out = Vec::with_capacity(dim);
    for chunk in bytes[MAGIC.len() + 8..].chunks_exact(8) {
        out.push(f64::from_le_bytes(chunk.try_into().ok()?));
    }
    Some(out)
}

fn write_cache(path: &Path, state: &[f64]) -> std::io::Result<()> {
    let mut bytes = Vec::with_capacity(MAGIC.len() + 8 + 8 * state.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(state.len() as u64).to_le_bytes());
    for v in state {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{assemble, build_problem};

    #[test]
    fn cache_round_trips_bit_exactly() {
        let dir = std::env::temp_dir().join(format!("explab-test-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let spec = build_problem("ex2").unwrap();
        let asm = assemble(&spec, 24, "analytic:affine").unwrap();
        let a = reference_solution(&asm, "gauss-quadrature:2", 0.01, Some(&dir)).unwrap();
        let b = reference_solution(&asm, "gauss-quadrature:2", 0.01, Some(&dir)).unwrap();
        assert_eq!(a, b);
        let uncached = reference_solution(&asm, "gauss-quadrature:2", 0.01, None).unwrap();
        assert_eq!(a, uncached);
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn rk4_reference_agrees_with_exponential_run() {
        // same semi-discrete limit: both references approximate u(T)
        let spec = build_problem("ex2").unwrap();
        let asm = assemble(&spec, 32, "analytic:quadratic").unwrap();
        let a = reference_solution(&asm, "gauss-quadrature:2", 1.0 / 400.0, None).unwrap();
        let b = reference_solution(&asm, "rk4", 1.0 / 4000.0, None).unwrap();
        let diff = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-8, "rk4 vs exponential reference differ by {diff:e}");
    }
}
