//! Cylindrical Wiener increments in the coordinates `h_1, h_2, …` of `U`.
//!
//! Each increment is a pure function of `(seed, path_id, step, mode)`: the
//! ChaCha8 stream is selected by `path_id`, and every time step owns a fixed
//! window of the keystream starting at `step * ROW_STRIDE`. Within a row the
//! modes are drawn in order, so generating `m` modes yields exactly the first
//! `m` columns of a wider draw. Galerkin levels of different size therefore
//! see the same Brownian path through `truncate`.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SpdeError};
use crate::scalar::Scalar;

/// Keystream words reserved per time step.
const ROW_STRIDE: u128 = 1 << 32;

pub const DUMP_MAGIC: &[u8; 8] = b"SPDEWNR1";

#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath<T> {
    m_modes: usize,
    n_steps: usize,
    dt: T,
    /// Row-major `[n_steps × m_modes]`.
    increments: Vec<T>,
    seed: u64,
    path_id: u64,
}

impl<T: Scalar> NoisePath<T> {
    /// Draws `N(0, dt)` increments for `m_modes` directions over `n_steps` steps.
    pub fn sample(m_modes: usize, n_steps: usize, dt: T, seed: u64, path_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path_id);
        let sd = dt.sqrt();
        let mut increments = Vec::with_capacity(n_steps * m_modes);
        for step in 0..n_steps {
            if m_modes == 0 {
                break;
            }
            rng.set_word_pos(step as u128 * ROW_STRIDE);
            for _ in 0..m_modes {
                let z: f64 = rng.sample(StandardNormal);
                increments.push(sd * T::lit(z));
            }
        }
        Self {
            m_modes,
            n_steps,
            dt,
            increments,
            seed,
            path_id,
        }
    }

    /// Builds a path from explicit increments (row-major).
    pub fn from_increments(
        m_modes: usize,
        n_steps: usize,
        dt: T,
        increments: Vec<T>,
        seed: u64,
        path_id: u64,
    ) -> Result<Self> {
        if increments.len() != m_modes * n_steps {
            return Err(SpdeError::DimensionMismatch {
                expected: m_modes * n_steps,
                got: increments.len(),
            });
        }
        Ok(Self {
            m_modes,
            n_steps,
            dt,
            increments,
            seed,
            path_id,
        })
    }

    pub fn m_modes(&self) -> usize {
        self.m_modes
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path_id(&self) -> u64 {
        self.path_id
    }

    pub fn increments(&self) -> &[T] {
        &self.increments
    }

    pub fn row(&self, step: usize) -> &[T] {
        &self.increments[step * self.m_modes..(step + 1) * self.m_modes]
    }

    /// Keeps the first `m_keep` directions: the projection `Q_n` with `n = m_keep`.
    pub fn truncate(&self, m_keep: usize) -> Result<Self> {
        if m_keep > self.m_modes {
            return Err(SpdeError::InvalidTruncation {
                keep: m_keep,
                available: self.m_modes,
            });
        }
        let increments = (0..self.n_steps)
            .flat_map(|s| self.row(s)[..m_keep].iter().copied())
            .collect();
        Ok(Self {
            m_modes: m_keep,
            n_steps: self.n_steps,
            dt: self.dt,
            increments,
            seed: self.seed,
            path_id: self.path_id,
        })
    }

    /// Sums increments in blocks of `factor` steps.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.n_steps.is_multiple_of(factor) {
            return Err(SpdeError::IndivisibleFactor {
                factor,
                n_steps: self.n_steps,
            });
        }
        let n_coarse = self.n_steps / factor;
        let mut increments = vec![T::zero(); n_coarse * self.m_modes];
        for c in 0..n_coarse {
            let out = &mut increments[c * self.m_modes..(c + 1) * self.m_modes];
            for s in c * factor..(c + 1) * factor {
                for (o, &v) in out.iter_mut().zip(self.row(s)) {
                    *o += v;
                }
            }
        }
        Ok(Self {
            m_modes: self.m_modes,
            n_steps: n_coarse,
            dt: self.dt * T::from_usize_lossy(factor),
            increments,
            seed: self.seed,
            path_id: self.path_id,
        })
    }

    /// `W(T)` per direction.
    pub fn terminal_value(&self) -> Vec<T> {
        let mut w = vec![T::zero(); self.m_modes];
        for s in 0..self.n_steps {
            for (o, &v) in w.iter_mut().zip(self.row(s)) {
                *o += v;
            }
        }
        w
    }

    /// Writes the increments as `SPDEWNR1`, `u32 n_steps`, `u32 m_modes`
    /// (little endian) followed by row-major little-endian `f64` values.
    pub fn write_dump<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e: std::io::Error| SpdeError::NoiseDump(e.to_string());
        let n_steps = u32::try_from(self.n_steps)
            .map_err(|_| SpdeError::NoiseDump("n_steps exceeds u32".into()))?;
        let m_modes = u32::try_from(self.m_modes)
            .map_err(|_| SpdeError::NoiseDump("m_modes exceeds u32".into()))?;
        out.write_all(DUMP_MAGIC).map_err(io)?;
        out.write_all(&n_steps.to_le_bytes()).map_err(io)?;
        out.write_all(&m_modes.to_le_bytes()).map_err(io)?;
        for v in &self.increments {
            out.write_all(&v.as_f64().to_le_bytes()).map_err(io)?;
        }
        Ok(())
    }

    /// Reads a dump written by [`NoisePath::write_dump`]. The header does not
    /// carry `dt`, `seed` or `path_id`; the caller supplies them.
    pub fn read_dump<R: Read>(mut input: R, dt: T, seed: u64, path_id: u64) -> Result<Self> {
        let io = |e: std::io::Error| SpdeError::NoiseDump(e.to_string());
        let mut header = [0u8; 16];
        input.read_exact(&mut header).map_err(io)?;
        if &header[..8] != DUMP_MAGIC {
            return Err(SpdeError::NoiseDump("bad magic".into()));
        }
        let n_steps = u32::from_le_bytes(header[8..12].try_into().expect("4 bytes")) as usize;
        let m_modes = u32::from_le_bytes(header[12..16].try_into().expect("4 bytes")) as usize;
        let mut body = Vec::new();
        input.read_to_end(&mut body).map_err(io)?;
        if body.len() != 8 * n_steps * m_modes {
            return Err(SpdeError::NoiseDump(format!(
                "expected {} payload bytes, found {}",
                8 * n_steps * m_modes,
                body.len()
            )));
        }
        let increments = body
            .chunks_exact(8)
            .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect();
        Self::from_increments(m_modes, n_steps, dt, increments, seed, path_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn same_key_same_path() {
        let a = NoisePath::<f64>::sample(3, 50, 0.01, 7, 2);
        let b = NoisePath::<f64>::sample(3, 50, 0.01, 7, 2);
        assert_eq!(a, b);
        let c = NoisePath::<f64>::sample(3, 50, 0.01, 7, 3);
        assert_ne!(a.increments(), c.increments());
    }

    #[test]
    fn narrower_draw_is_prefix_of_wider_draw() {
        let wide = NoisePath::<f64>::sample(16, 40, 0.02, 1, 0);
        let narrow = NoisePath::<f64>::sample(5, 40, 0.02, 1, 0);
        assert_eq!(wide.truncate(5).unwrap(), narrow);
    }

    #[test]
    fn moments_of_increments() {
        // CLT and chi-square concentration oracles for 10^5 draws.
        let dt = 0.01;
        let p = NoisePath::<f64>::sample(10, 10_000, dt, 42, 0);
        let n = p.increments().len() as f64;
        let mean = p.increments().iter().sum::<f64>() / n;
        let var = p
            .increments()
            .iter()
            .map(|x| (x - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        assert!(mean.abs() <= 4.0 * (dt / n).sqrt(), "mean {mean}");
        assert!((var / dt - 1.0).abs() <= 0.05, "var {var}");
    }

    #[test]
    fn columns_are_uncorrelated() {
        let p = NoisePath::<f64>::sample(2, 20_000, 1.0, 9, 4);
        let n = p.n_steps() as f64;
        let cross: f64 = (0..p.n_steps())
            .map(|s| p.row(s)[0] * p.row(s)[1])
            .sum::<f64>()
            / n;
        assert!(cross.abs() <= 4.0 / n.sqrt());
    }

    #[test]
    fn truncate_edges() {
        let p = NoisePath::<f64>::sample(4, 10, 0.1, 0, 0);
        assert_eq!(p.truncate(4).unwrap(), p);
        let z = p.truncate(0).unwrap();
        assert_eq!(z.m_modes(), 0);
        assert!(z.increments().is_empty());
        assert!(matches!(
            p.truncate(5),
            Err(SpdeError::InvalidTruncation { .. })
        ));
    }

    #[test]
    fn coarsen_edges() {
        let p = NoisePath::<f64>::sample(3, 12, 0.1, 0, 0);
        assert_eq!(p.coarsen(1).unwrap(), p);
        let whole = p.coarsen(12).unwrap();
        assert_eq!(whole.n_steps(), 1);
        for (a, b) in whole.row(0).iter().zip(p.terminal_value()) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        assert!(matches!(
            p.coarsen(5),
            Err(SpdeError::IndivisibleFactor { .. })
        ));
        assert!(matches!(
            p.coarsen(0),
            Err(SpdeError::IndivisibleFactor { .. })
        ));
    }

    #[test]
    fn coarsened_variance_scales_with_factor() {
        let dt = 0.001;
        let p = NoisePath::<f64>::sample(10, 40_000, dt, 5, 1)
            .coarsen(4)
            .unwrap();
        let n = p.increments().len() as f64;
        let var = p.increments().iter().map(|x| x * x).sum::<f64>() / n;
        assert!((var / (4.0 * dt) - 1.0).abs() <= 0.05);
        assert!((p.dt() - 4.0 * dt).abs() < 1e-15);
    }

    #[test]
    fn dump_round_trip_and_header() {
        let p = NoisePath::<f64>::sample(3, 5, 0.1, 8, 1);
        let mut buf = Vec::new();
        p.write_dump(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"SPDEWNR1");
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 5);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 3);
        assert_eq!(buf.len(), 16 + 8 * 15);
        let back = NoisePath::<f64>::read_dump(&buf[..], 0.1, 8, 1).unwrap();
        assert_eq!(back, p);
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(NoisePath::<f64>::read_dump(&bad[..], 0.1, 8, 1).is_err());
        assert!(NoisePath::<f64>::read_dump(&buf[..20], 0.1, 8, 1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn truncation_nests(seed in any::<u64>(), a in 0usize..8, b in 0usize..8) {
            let (a, b) = if b <= a { (a, b) } else { (b, a) };
            let p = NoisePath::<f64>::sample(8, 6, 0.5, seed, 0);
            prop_assert_eq!(p.truncate(a).unwrap().truncate(b).unwrap(), p.truncate(b).unwrap());
        }

        #[test]
        fn coarsen_commutes_with_truncate(seed in any::<u64>(), m in 0usize..6, f in prop::sample::select(vec![1usize, 2, 3, 4, 6, 12])) {
            let p = NoisePath::<f64>::sample(6, 12, 0.25, seed, 3);
            prop_assert_eq!(
                p.truncate(m).unwrap().coarsen(f).unwrap(),
                p.coarsen(f).unwrap().truncate(m).unwrap()
            );
        }

        #[test]
        fn coarsen_preserves_terminal_value(seed in any::<u64>(), f in prop::sample::select(vec![1usize, 2, 5, 10, 25, 50])) {
            let p = NoisePath::<f64>::sample(4, 50, 0.02, seed, 1);
            let c = p.coarsen(f).unwrap();
            for (a, b) in c.terminal_value().iter().zip(p.terminal_value()) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
    }
}
