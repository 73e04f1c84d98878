//! Shared bookkeeping for the entry-wise samplers.
//!
//! All three samplers need the linear coefficients of `n·tr(Ω²S)` with one
//! entry free and the rest fixed. Keeping `M = ΩS` current makes each of them
//! O(1), and each accepted change costs O(p).

use crate::types::{PrecisionState, SampleCovariance};

pub(crate) struct Workspace {
    pub(crate) p: usize,
    /// row-major copy of S
    s_rows: Vec<f64>,
    /// row-major M = ΩS
    m: Vec<f64>,
    pub(crate) state: PrecisionState,
    nonzero: usize,
}

impl Workspace {
    pub(crate) fn new(s: &SampleCovariance, state: PrecisionState) -> Self {
        let p = s.p();
        assert_eq!(state.p(), p, "state and covariance dimensions differ");
        let mut s_rows = vec![0.0; p * p];
        for j in 0..p {
            for k in 0..p {
                s_rows[j * p + k] = s.get(j, k);
            }
        }
        let mut ws = Workspace {
            p,
            s_rows,
            m: vec![0.0; p * p],
            nonzero: 0,
            state,
        };
        ws.refresh();
        ws
    }

    /// Recomputes `M` from scratch, discarding accumulated rounding.
    pub(crate) fn refresh(&mut self) {
        let p = self.p;
        self.m.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..p {
            let d = self.state.diag()[j];
            add_scaled(&mut self.m[j * p..(j + 1) * p], d, &self.s_rows[j * p..(j + 1) * p]);
        }
        let mut nonzero = 0;
        for ix in crate::types::pairs(p) {
            let w = self.state.offdiag()[ix.flat];
            if w != 0.0 {
                nonzero += 1;
                let (j, k) = (ix.j, ix.k);
                add_scaled(&mut self.m[j * p..(j + 1) * p], w, &self.s_rows[k * p..(k + 1) * p]);
                add_scaled(&mut self.m[k * p..(k + 1) * p], w, &self.s_rows[j * p..(j + 1) * p]);
            }
        }
        self.nonzero = nonzero;
    }

    #[inline]
    pub(crate) fn s(&self, j: usize, k: usize) -> f64 {
        self.s_rows[j * self.p + k]
    }

    /// Number of nonzero off-diagonal entries in the current state.
    #[inline]
    pub(crate) fn nonzero(&self) -> usize {
        self.nonzero
    }

    /// `b_jk = Σ_{l≠k} ω_jl s_kl + Σ_{l≠j} ω_lk s_jl`.
    #[inline]
    pub(crate) fn pair_linear(&self, j: usize, k: usize, flat: usize) -> f64 {
        let p = self.p;
        let w = self.state.offdiag()[flat];
        self.m[j * p + k] + self.m[k * p + j] - w * (self.s(j, j) + self.s(k, k))
    }

    /// `b_j = Σ_{l≠j} ω_jl s_jl`.
    #[inline]
    pub(crate) fn diag_linear(&self, j: usize) -> f64 {
        self.m[j * self.p + j] - self.state.diag()[j] * self.s(j, j)
    }

    pub(crate) fn set_offdiag(&mut self, j: usize, k: usize, flat: usize, value: f64) {
        let old = self.state.offdiag()[flat];
        if old == value {
            return;
        }
        match (old != 0.0, value != 0.0) {
            (false, true) => self.nonzero += 1,
            (true, false) => self.nonzero -= 1,
            _ => {}
        }
        let delta = value - old;
        let p = self.p;
        self.state.set_offdiag(flat, value);
        add_scaled(&mut self.m[j * p..(j + 1) * p], delta, &self.s_rows[k * p..(k + 1) * p]);
        add_scaled(&mut self.m[k * p..(k + 1) * p], delta, &self.s_rows[j * p..(j + 1) * p]);
    }

    pub(crate) fn set_diag(&mut self, j: usize, value: f64) {
        let delta = value - self.state.diag()[j];
        if delta == 0.0 {
            return;
        }
        let p = self.p;
        self.state.set_diag(j, value);
        add_scaled(&mut self.m[j * p..(j + 1) * p], delta, &self.s_rows[j * p..(j + 1) * p]);
    }
}

#[inline]
fn add_scaled(dst: &mut [f64], a: f64, src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += a * s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use crate::types::pairs;
    use nalgebra::DMatrix;
    use rand::Rng;

    fn brute_pair_linear(st: &PrecisionState, s: &SampleCovariance, j: usize, k: usize) -> f64 {
        let p = st.p();
        let a: f64 = (0..p).filter(|&l| l != k).map(|l| st.get(j, l) * s.get(k, l)).sum();
        let b: f64 = (0..p).filter(|&l| l != j).map(|l| st.get(l, k) * s.get(j, l)).sum();
        a + b
    }

    #[test]
    fn incremental_matches_direct_after_updates() {
        let mut rng = SeededRng::new(5, 0);
        let p = 6;
        let y = DMatrix::from_fn(20, p, |_, _| rng.random_range(-1.0..1.0));
        let s = SampleCovariance::from_data(&y, false).unwrap();
        let mut ws = Workspace::new(&s, PrecisionState::identity(p));
        for _ in 0..200 {
            let ix = crate::types::PairIndex::from_flat(rng.random_range(0..15), p);
            let v = if rng.random_bool(0.3) {
                0.0
            } else {
                rng.random_range(-0.5..0.5)
            };
            ws.set_offdiag(ix.j, ix.k, ix.flat, v);
            let j = rng.random_range(0..p);
            ws.set_diag(j, rng.random_range(0.5..2.0));
        }
        for ix in pairs(p) {
            let direct = brute_pair_linear(&ws.state, &s, ix.j, ix.k);
            assert!((ws.pair_linear(ix.j, ix.k, ix.flat) - direct).abs() < 1e-12);
        }
        for j in 0..p {
            let direct: f64 = (0..p)
                .filter(|&l| l != j)
                .map(|l| ws.state.get(j, l) * s.get(j, l))
                .sum();
            assert!((ws.diag_linear(j) - direct).abs() < 1e-12);
        }
        assert_eq!(ws.nonzero(), ws.state.density());
    }
}
