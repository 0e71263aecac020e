//! Joint sample paths of the driving noise.
//!
//! Each path carries the jump events, the diffusion increments of the
//! forward component, the increments of the backward Brownian motion and the
//! basis increments `dH^(k)`. Randomness is drawn from counter-keyed
//! streams, so generation is order independent across paths and intervals
//! and embarrassingly parallel.

use crate::basis::MartingaleBasis;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::levy::LevyCharacteristics;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use std::io::{Read, Write};

const STREAM_JUMPS: u64 = 1;
const STREAM_DIFFUSION: u64 = 2;
const STREAM_BACKWARD: u64 = 3;

pub(crate) fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Deterministic RNG keyed by (seed, path, interval, stream). Jump streams
/// additionally mix the atom size bits so coupled runs on truncated models
/// reuse the same randomness per atom.
pub fn stream_rng(seed: u64, path: u64, interval: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = seed;
    for (i, word) in [path, interval, stream, 0xA5A5_5A5A].iter().enumerate() {
        state = splitmix(state ^ word.wrapping_mul(splitmix(i as u64 + 1)));
        key[i * 8..(i + 1) * 8].copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

fn atom_stream_tag(size: f64) -> u64 {
    STREAM_JUMPS ^ splitmix(size.to_bits())
}

/// One jump event inside a path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub atom: u32,
}

/// A single simulated path on the grid.
#[derive(Clone, Debug, Default)]
pub struct Path {
    /// Jump events sorted by time.
    pub jumps: Vec<JumpEvent>,
    /// Cumulative noise values at the nodes (canonical decomposition).
    pub l_values: Vec<f64>,
    /// Diffusion increments `N(0, \int_i c ds)`; empty when `c = 0`.
    pub dw: Vec<f64>,
    /// Backward Brownian increments `N(0, dt_i)`.
    pub db: Vec<f64>,
    /// Basis increments, row-major `[interval][k]`.
    pub dh: Vec<f64>,
}

impl Path {
    pub fn dh_at(&self, interval: usize, k: usize, dim: usize) -> f64 {
        self.dh[interval * dim + k]
    }

    /// Jump events falling in `[nodes[i], nodes[i+1])`.
    pub fn jumps_in(&self, grid: &TimeGrid, interval: usize) -> &[JumpEvent] {
        let lo = self.jumps.partition_point(|j| j.time < grid.nodes[interval]);
        let hi = self.jumps.partition_point(|j| j.time < grid.nodes[interval + 1]);
        &self.jumps[lo..hi]
    }
}

/// A batch of simulated paths plus the data shared between them.
#[derive(Clone, Debug)]
pub struct PathBatch {
    pub grid: TimeGrid,
    pub dim: usize,
    pub seed: u64,
    pub paths: Vec<Path>,
    /// Compensator of the basis increments per interval and component:
    /// `comp[i][k] = sum_j p_k(e_j) \int_i lambda_j ds`.
    pub h_compensator: Vec<Vec<f64>>,
    /// `\int_i gamma^2 ds` per interval (proportional modulation).
    pub gamma_sq: Vec<f64>,
    /// `\int_i c ds` per interval.
    pub c_int: Vec<f64>,
    /// Path drift integral per interval.
    pub drift_int: Vec<f64>,
}

/// Shared per-interval tables used by the per-path generator.
struct IntervalTables {
    lam_int: Vec<Vec<f64>>,  // [interval][atom]
    lam_sup: Vec<Vec<f64>>,  // [interval][atom]
    lam_const: Vec<bool>,    // [atom]
    h_compensator: Vec<Vec<f64>>,
    gamma_sq: Vec<f64>,
    c_int: Vec<f64>,
    drift_int: Vec<f64>,
}

fn build_tables(
    chars: &LevyCharacteristics,
    basis: &MartingaleBasis,
    grid: &TimeGrid,
) -> IntervalTables {
    let n = grid.n_steps();
    let n_atoms = chars.atoms.len();
    let mut lam_int = vec![vec![0.0; n_atoms]; n];
    let mut lam_sup = vec![vec![0.0; n_atoms]; n];
    let lam_const: Vec<bool> = chars.atoms.iter().map(|a| a.intensity.is_const()).collect();
    let mut h_comp = vec![vec![0.0; basis.dim]; n];
    let mut gamma_sq = vec![0.0; n];
    let mut c_int = vec![0.0; n];
    let mut drift_int = vec![0.0; n];
    for i in 0..n {
        let (a, b) = (grid.nodes[i], grid.nodes[i + 1]);
        for (j, atom) in chars.atoms.iter().enumerate() {
            lam_int[i][j] = atom.intensity.integrate(a, b);
            lam_sup[i][j] = atom.intensity.sup_bound(a, b).max(0.0);
        }
        for k in 0..basis.dim {
            h_comp[i][k] = chars
                .atoms
                .iter()
                .enumerate()
                .map(|(j, atom)| basis.p(k, atom.size) * lam_int[i][j])
                .sum();
        }
        gamma_sq[i] = basis.gamma_sq_integral(chars, 0, a, b);
        c_int[i] = crate::timefn::integrate(&|t| chars.c(t), a, b);
        drift_int[i] = crate::timefn::integrate(&|t| chars.path_drift(t), a, b);
    }
    IntervalTables {
        lam_int,
        lam_sup,
        lam_const,
        h_compensator: h_comp,
        gamma_sq,
        c_int,
        drift_int,
    }
}

fn generate_path(
    chars: &LevyCharacteristics,
    basis: &MartingaleBasis,
    grid: &TimeGrid,
    tables: &IntervalTables,
    seed: u64,
    path_idx: u64,
) -> Path {
    let n = grid.n_steps();
    let dim = basis.dim;
    let has_c = chars.has_diffusion();
    let mut jumps: Vec<JumpEvent> = Vec::new();
    let mut dw = if has_c { vec![0.0; n] } else { Vec::new() };
    let mut db = vec![0.0; n];
    let mut dh = vec![0.0; n * dim];
    let mut l_values = vec![0.0; n + 1];

    for i in 0..n {
        let (t0, t1) = (grid.nodes[i], grid.nodes[i + 1]);
        let dt = t1 - t0;
        let mut interval_jumps: Vec<JumpEvent> = Vec::new();
        for (j, atom) in chars.atoms.iter().enumerate() {
            let mut rng = stream_rng(seed, path_idx, i as u64, atom_stream_tag(atom.size));
            if tables.lam_const[j] {
                let mean = tables.lam_int[i][j];
                if mean > 0.0 {
                    let count = Poisson::new(mean).unwrap().sample(&mut rng) as usize;
                    for _ in 0..count {
                        let t = t0 + dt * rng.gen::<f64>();
                        interval_jumps.push(JumpEvent { time: t, atom: j as u32 });
                    }
                }
            } else {
                // thinning against the interval majorant
                let majorant = tables.lam_sup[i][j];
                if majorant > 0.0 {
                    if !majorant.is_finite() {
                        // guarded at validation time; defensive here
                        continue;
                    }
                    let count = Poisson::new(majorant * dt).unwrap().sample(&mut rng) as usize;
                    for _ in 0..count {
                        let t = t0 + dt * rng.gen::<f64>();
                        let accept = rng.gen::<f64>() * majorant;
                        if accept < atom.intensity.eval(t) {
                            interval_jumps.push(JumpEvent { time: t, atom: j as u32 });
                        }
                    }
                }
            }
        }
        interval_jumps.sort_by(|a, b| a.time.partial_cmp(&b.time).unwrap());

        let mut dwi = 0.0;
        if has_c {
            let mut rng = stream_rng(seed, path_idx, i as u64, STREAM_DIFFUSION);
            let z: f64 = StandardNormal.sample(&mut rng);
            dwi = z * tables.c_int[i].sqrt();
            dw[i] = dwi;
        }
        {
            let mut rng = stream_rng(seed, path_idx, i as u64, STREAM_BACKWARD);
            let z: f64 = StandardNormal.sample(&mut rng);
            db[i] = z * dt.sqrt();
        }

        let mut dl_jumps = 0.0;
        for k in 0..dim {
            let mut v = -tables.h_compensator[i][k] + basis.alpha_n1(k) * dwi;
            for ev in &interval_jumps {
                v += basis.p(k, chars.atoms[ev.atom as usize].size);
            }
            dh[i * dim + k] = v;
        }
        for ev in &interval_jumps {
            dl_jumps += chars.atoms[ev.atom as usize].size;
        }
        l_values[i + 1] = l_values[i] + tables.drift_int[i] + dwi + dl_jumps;
        jumps.extend(interval_jumps);
    }

    Path { jumps, l_values, dw, db, dh }
}

/// Simulate a reproducible batch; identical `(seed, grid, n_paths)` give
/// bit-identical output regardless of thread count.
pub fn simulate_batch(
    chars: &LevyCharacteristics,
    basis: &MartingaleBasis,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathBatch> {
    if n_paths == 0 {
        return Err(Error::InvalidConfig("zero paths requested".into()));
    }
    for (i, atom) in chars.atoms.iter().enumerate() {
        for w in grid.nodes.windows(2) {
            let s = atom.intensity.sup_bound(w[0], w[1]);
            if !s.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite intensity majorant for atom {i} on [{}, {}]",
                    w[0], w[1]
                )));
            }
        }
    }
    let tables = build_tables(chars, basis, grid);
    let paths: Vec<Path> = (0..n_paths)
        .into_par_iter()
        .map(|p| generate_path(chars, basis, grid, &tables, seed, p as u64))
        .collect();
    Ok(PathBatch {
        grid: grid.clone(),
        dim: basis.dim,
        seed,
        paths,
        h_compensator: tables.h_compensator,
        gamma_sq: tables.gamma_sq,
        c_int: tables.c_int,
        drift_int: tables.drift_int,
    })
}

/// Stream paths through a reducer without materializing the batch; the fold
/// runs over fixed-size chunks in index order, so the reduction is
/// deterministic.
pub fn fold_paths<T: Send>(
    chars: &LevyCharacteristics,
    basis: &MartingaleBasis,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
    init: impl Fn() -> T + Sync,
    fold: impl Fn(&mut T, usize, &Path) + Sync,
    merge: impl Fn(&mut T, T),
) -> Result<T>
where
    T: Send,
{
    if n_paths == 0 {
        return Err(Error::InvalidConfig("zero paths requested".into()));
    }
    let tables = build_tables(chars, basis, grid);
    const CHUNK: usize = 1024;
    let chunk_results: Vec<T> = (0..n_paths.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut acc = init();
            let lo = chunk * CHUNK;
            let hi = (lo + CHUNK).min(n_paths);
            for p in lo..hi {
                let path = generate_path(chars, basis, grid, &tables, seed, p as u64);
                fold(&mut acc, p, &path);
            }
            acc
        })
        .collect();
    let mut it = chunk_results.into_iter();
    let mut total = it.next().unwrap();
    for part in it {
        merge(&mut total, part);
    }
    Ok(total)
}

/// Compensator/diffusion-corrected basis increment over one interval,
/// recomputed from the raw jump events. `simulate_batch` already stores the
/// same values; this is the reference path used by tests and by consumers
/// holding only events.
pub fn h_increments(
    basis: &MartingaleBasis,
    chars: &LevyCharacteristics,
    batch: &PathBatch,
    path: &Path,
    interval: usize,
) -> Result<Vec<f64>> {
    if interval >= batch.grid.n_steps() {
        return Err(Error::InvalidConfig(format!("interval {interval} out of range")));
    }
    let dwi = if path.dw.is_empty() { 0.0 } else { path.dw[interval] };
    let mut out = vec![0.0; basis.dim];
    for (k, o) in out.iter_mut().enumerate() {
        let mut v = -batch.h_compensator[interval][k] + basis.alpha_n1(k) * dwi;
        for ev in path.jumps_in(&batch.grid, interval) {
            v += basis.p(k, chars.atoms[ev.atom as usize].size);
        }
        *o = v;
    }
    Ok(out)
}

/// Backward Ito sum: `sum_i G(tau_{i+1}) dB_i` with right-endpoint values.
/// `integrand` holds `G(tau_1), ..., G(tau_N)`.
pub fn backward_integral(path: &Path, integrand: &[f64]) -> Result<f64> {
    if integrand.len() != path.db.len() {
        return Err(Error::LengthMismatch { expected: path.db.len(), got: integrand.len() });
    }
    Ok(integrand.iter().zip(&path.db).map(|(g, db)| g * db).sum())
}

/// Forward predictable sum: `sum_i sum_k Z^k(tau_i) dH^k_i` with
/// left-endpoint values. `z` is row-major `[interval][k]`.
pub fn forward_integral(path: &Path, dim: usize, z: &[f64]) -> Result<f64> {
    let n = path.db.len();
    if z.len() != n * dim {
        return Err(Error::LengthMismatch { expected: n * dim, got: z.len() });
    }
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..dim {
            acc += z[i * dim + k] * path.dh[i * dim + k];
        }
    }
    Ok(acc)
}

// --- binary cache ------------------------------------------------------

const CACHE_MAGIC: &[u8; 5] = b"LBDS1";

/// Write the batch as a little-endian binary cache.
pub fn write_cache<W: Write>(batch: &PathBatch, w: &mut W) -> Result<()> {
    w.write_all(CACHE_MAGIC)?;
    let n = batch.grid.n_steps() as u64;
    let n_paths = batch.paths.len() as u64;
    let dim = batch.dim as u64;
    let has_dw = batch.paths.first().map(|p| !p.dw.is_empty()).unwrap_or(false) as u64;
    for v in [n_paths, n, dim, has_dw, batch.seed] {
        w.write_all(&v.to_le_bytes())?;
    }
    for x in &batch.grid.nodes {
        w.write_all(&x.to_le_bytes())?;
    }
    for row in &batch.h_compensator {
        for x in row {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    for x in batch.gamma_sq.iter().chain(&batch.c_int).chain(&batch.drift_int) {
        w.write_all(&x.to_le_bytes())?;
    }
    for p in &batch.paths {
        w.write_all(&(p.jumps.len() as u64).to_le_bytes())?;
        for j in &p.jumps {
            w.write_all(&j.time.to_le_bytes())?;
            w.write_all(&(j.atom as u64).to_le_bytes())?;
        }
        for x in p.l_values.iter().chain(&p.dw).chain(&p.db).chain(&p.dh) {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Read a batch previously written by `write_cache`.
pub fn read_cache<R: Read>(r: &mut R) -> Result<PathBatch> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(Error::InvalidConfig("bad cache magic".into()));
    }
    let n_paths = read_u64(r)? as usize;
    let n = read_u64(r)? as usize;
    let dim = read_u64(r)? as usize;
    let has_dw = read_u64(r)? != 0;
    let seed = read_u64(r)?;
    let mut nodes = vec![0.0; n + 1];
    for x in nodes.iter_mut() {
        *x = read_f64(r)?;
    }
    let grid = TimeGrid::from_nodes(nodes)?;
    let mut h_compensator = vec![vec![0.0; dim]; n];
    for row in h_compensator.iter_mut() {
        for x in row.iter_mut() {
            *x = read_f64(r)?;
        }
    }
    let mut gamma_sq = vec![0.0; n];
    let mut c_int = vec![0.0; n];
    let mut drift_int = vec![0.0; n];
    for arr in [&mut gamma_sq, &mut c_int, &mut drift_int] {
        for x in arr.iter_mut() {
            *x = read_f64(r)?;
        }
    }
    let mut paths = Vec::with_capacity(n_paths);
    for _ in 0..n_paths {
        let n_jumps = read_u64(r)? as usize;
        let mut jumps = Vec::with_capacity(n_jumps);
        for _ in 0..n_jumps {
            let time = read_f64(r)?;
            let atom = read_u64(r)? as u32;
            jumps.push(JumpEvent { time, atom });
        }
        let mut l_values = vec![0.0; n + 1];
        for x in l_values.iter_mut() {
            *x = read_f64(r)?;
        }
        let mut dw = if has_dw { vec![0.0; n] } else { Vec::new() };
        for x in dw.iter_mut() {
            *x = read_f64(r)?;
        }
        let mut db = vec![0.0; n];
        for x in db.iter_mut() {
            *x = read_f64(r)?;
        }
        let mut dh = vec![0.0; n * dim];
        for x in dh.iter_mut() {
            *x = read_f64(r)?;
        }
        paths.push(Path { jumps, l_values, dw, db, dh });
    }
    Ok(PathBatch { grid, dim, seed, paths, h_compensator, gamma_sq, c_int, drift_int })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::build_basis;
    use crate::levy::{JumpAtom, LevyCharacteristics, Modulation};
    use crate::timefn::TimeFn;
    use approx::assert_abs_diff_eq;

    fn poisson_model(rate: f64) -> LevyCharacteristics {
        LevyCharacteristics::new(
            1.0,
            TimeFn::Const(0.0),
            TimeFn::Const(0.0),
            vec![JumpAtom::constant(1.0, rate)],
            Modulation::Proportional,
        )
    }

    #[test]
    fn zero_intensity_gives_zero_paths() {
        let chars = LevyCharacteristics::new(
            1.0,
            TimeFn::Const(0.0),
            TimeFn::Const(0.0),
            vec![JumpAtom::constant(1.0, 0.0)],
            Modulation::General,
        );
        // an atom with zero weight leaves no basis direction; use a tiny one
        let basis_model = poisson_model(1e-9);
        let basis = build_basis(&basis_model).unwrap();
        let grid = TimeGrid::uniform(0.0, 1.0, 8).unwrap();
        let batch = simulate_batch(&chars, &basis, &grid, 16, 7).unwrap();
        for p in &batch.paths {
            assert!(p.jumps.is_empty());
            for v in &p.l_values {
                assert_eq!(*v, 0.0);
            }
            for i in 0..grid.n_steps() {
                assert_eq!(p.dh_at(i, 0, 1), 0.0);
            }
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let chars = poisson_model(2.0);
        let basis = build_basis(&chars).unwrap();
        let grid = TimeGrid::uniform(0.0, 1.0, 16).unwrap();
        let b1 = simulate_batch(&chars, &basis, &grid, 64, 42).unwrap();
        let b2 = simulate_batch(&chars, &basis, &grid, 64, 42).unwrap();
        for (p, q) in b1.paths.iter().zip(&b2.paths) {
            assert_eq!(p.jumps, q.jumps);
            assert_eq!(p.l_values, q.l_values);
            assert_eq!(p.db, q.db);
            assert_eq!(p.dh, q.dh);
        }
    }

    #[test]
    fn poisson_mean_jump_count() {
        let chars = poisson_model(2.0);
        let basis = build_basis(&chars).unwrap();
        let grid = TimeGrid::uniform(0.0, 1.0, 10).unwrap();
        let n = 100_000usize;
        let (count, _) = fold_paths(
            &chars,
            &basis,
            &grid,
            n,
            1234,
            || (0.0f64, 0usize),
            |acc, _, p| {
                acc.0 += p.jumps.len() as f64;
                acc.1 += 1;
            },
            |a, b| {
                a.0 += b.0;
                a.1 += b.1;
            },
        )
        .map(|acc| (acc.0, acc.1))
        .unwrap();
        let mean = count / n as f64;
        let tol = 3.0 * (2.0f64 / n as f64).sqrt();
        assert!((mean - 2.0).abs() <= tol, "mean {mean}, tol {tol}");
    }

    #[test]
    fn h_increment_matches_compensator_formula() {
        let chars = poisson_model(2.0);
        let basis = build_basis(&chars).unwrap();
        let grid = TimeGrid::uniform(0.0, 1.0, 100).unwrap();
        let batch = simulate_batch(&chars, &basis, &grid, 32, 5).unwrap();
        let s = 1.0 / 2.0f64.sqrt();
        for p in &batch.paths {
            for i in 0..grid.n_steps() {
                let k = p.jumps_in(&grid, i).len() as f64;
                let expected = k * s - 2.0 * 0.01 * s;
                assert_abs_diff_eq!(p.dh_at(i, 0, 1), expected, epsilon = 1e-12);
                let rec = h_increments(&basis, &chars, &batch, p, i).unwrap();
                assert_abs_diff_eq!(rec[0], p.dh_at(i, 0, 1), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn symmetric_jumps_cancel_in_first_component() {
        // one +1 jump and one -1 jump: q1 constant, p1 odd, so the jump part
        // of dH^(1) cancels before the compensator
        let chars = LevyCharacteristics::new(
            1.0,
            TimeFn::Const(0.0),
            TimeFn::Const(0.0),
            vec![JumpAtom::constant(1.0, 1.0), JumpAtom::constant(-1.0, 1.0)],
            Modulation::Proportional,
        );
        let basis = build_basis(&chars).unwrap();
        let p0 = basis.p(0, 1.0) + basis.p(0, -1.0);
        assert_abs_diff_eq!(p0, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn backward_integral_examples() {
        let chars = poisson_model(1.0);
        let basis = build_basis(&chars).unwrap();
        let grid = TimeGrid::uniform(0.0, 1.0, 20).unwrap();
        let batch = simulate_batch(&chars, &basis, &grid, 8, 3).unwrap();
        for p in &batch.paths {
            let zero = backward_integral(p, &vec![0.0; 20]).unwrap();
            assert_eq!(zero, 0.0);
            let one = backward_integral(p, &vec![1.0; 20]).unwrap();
            let total: f64 = p.db.iter().sum();
            assert_abs_diff_eq!(one, total, epsilon = 1e-15);
        }
        assert!(backward_integral(&batch.paths[0], &[1.0]).is_err());
    }

    #[test]
    fn forward_integral_examples() {
        let chars = poisson_model(2.0);
        let basis = build_basis(&chars).unwrap();
        let grid = TimeGrid::uniform(0.0, 1.0, 25).unwrap();
        let batch = simulate_batch(&chars, &basis, &grid, 8, 9).unwrap();
        for p in &batch.paths {
            let zeros = forward_integral(p, 1, &vec![0.0; 25]).unwrap();
            assert_eq!(zeros, 0.0);
            // Z = 1 telescopes to H_T - H_0
            let ones = forward_integral(p, 1, &vec![1.0; 25]).unwrap();
            let h_total: f64 = (0..25).map(|i| p.dh_at(i, 0, 1)).sum();
            assert_abs_diff_eq!(ones, h_total, epsilon = 1e-14);
        }
    }

    #[test]
    fn cache_round_trip_is_exact() {
        let chars = LevyCharacteristics::new(
            1.0,
            TimeFn::Const(0.1),
            TimeFn::Const(0.5),
            vec![JumpAtom::constant(1.0, 2.0), JumpAtom::constant(-0.5, 1.0)],
            Modulation::Proportional,
        );
        let basis = build_basis(&chars).unwrap();
        let grid = TimeGrid::uniform(0.0, 1.0, 12).unwrap();
        let batch = simulate_batch(&chars, &basis, &grid, 10, 77).unwrap();
        let mut buf = Vec::new();
        write_cache(&batch, &mut buf).unwrap();
        let read = read_cache(&mut buf.as_slice()).unwrap();
        assert_eq!(read.dim, batch.dim);
        assert_eq!(read.seed, batch.seed);
        for (p, q) in batch.paths.iter().zip(&read.paths) {
            assert_eq!(p.jumps, q.jumps);
            assert_eq!(p.l_values, q.l_values);
            assert_eq!(p.dw, q.dw);
            assert_eq!(p.db, q.db);
            assert_eq!(p.dh, q.dh);
        }
    }
}
