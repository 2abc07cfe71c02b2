//! Shared test helpers: independent planar-angle oracles and random
//! generators. The oracles work from closed-form boundary rays, not from
//! the margin-scan machinery under test.

#![allow(dead_code)]

use conedyn::linalg::{make_splitting, RealVector, Splitting, Subspace};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn v2(x: f64, y: f64) -> RealVector {
    RealVector::from_vec(vec![x, y])
}

pub fn span(v: RealVector) -> Subspace {
    Subspace::span(&[v]).unwrap()
}

/// Random unit vector in R^d.
pub fn unit<R: Rng>(d: usize, rng: &mut R) -> RealVector {
    conedyn::linalg::random_unit_vector(d, rng)
}

/// Random k-dimensional subspace of R^d.
pub fn random_subspace<R: Rng>(d: usize, k: usize, rng: &mut R) -> Subspace {
    loop {
        let m = DMatrix::from_fn(d, k, |_, _| conedyn::linalg::sample_gaussian(rng));
        if let Ok(s) = Subspace::new(m) {
            return s;
        }
    }
}

/// Random complementary splitting with a minimum opening angle, so that
/// projection norms stay bounded.
pub fn random_splitting<R: Rng>(d: usize, k: usize, rng: &mut R) -> Splitting {
    loop {
        let e = random_subspace(d, k, rng);
        let f = random_subspace(d, d - k, rng);
        if let Ok(s) = make_splitting(&e, &f) {
            if s.min_principal_sine() > 0.05 {
                return s;
            }
        }
    }
}

/// A planar cone as a pair of boundary rays: for the splitting-norm cone
/// over unit directions (e, f) with opening l, the boundary rays are
/// e − l·f and e + l·f (closed form, no margins involved).
#[derive(Debug, Clone, Copy)]
pub struct PlanarArcOracle {
    pub lo: f64,
    pub hi: f64,
}

impl PlanarArcOracle {
    pub fn from_cone_data(e_dir: &RealVector, f_dir: &RealVector, opening: f64) -> Self {
        let b1 = e_dir - f_dir * opening;
        let b2 = e_dir + f_dir * opening;
        let c = e_dir[1].atan2(e_dir[0]);
        let pi = std::f64::consts::PI;
        // Boundary line offsets from the core axis, folded to (−π/2, π/2].
        let fold = |v: &RealVector| -> f64 {
            let mut off = (v[1].atan2(v[0]) - c).rem_euclid(pi);
            if off > pi / 2.0 {
                off -= pi;
            }
            off
        };
        let (mut n1, mut n2) = (fold(&b1), fold(&b2));
        if n1 > n2 {
            std::mem::swap(&mut n1, &mut n2);
        }
        // The section arc must contain the core axis (offset 0). When both
        // boundary offsets share a sign, the arc wraps around the far side.
        let (lo, hi) = if n1 <= 0.0 && n2 >= 0.0 {
            (c + n1, c + n2)
        } else if n1 > 0.0 {
            (c + n2 - pi, c + n1)
        } else {
            (c + n2, c + n1 + pi)
        };
        PlanarArcOracle { lo, hi }
    }

    /// Arc of the image cone under an invertible map: a dense fan of rays
    /// is mapped and the image angles are unwrapped sequentially, which is
    /// robust for arcs of any width below π.
    pub fn map_through(&self, m: &DMatrix<f64>) -> Self {
        let pi = std::f64::consts::PI;
        let samples = 129;
        let mut prev: Option<f64> = None;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..samples {
            let t = self.lo + (self.hi - self.lo) * (i as f64) / (samples as f64 - 1.0);
            let w = m * v2(t.cos(), t.sin());
            let mut a = w[1].atan2(w[0]);
            if let Some(p) = prev {
                while a - p > pi / 2.0 {
                    a -= pi;
                }
                while p - a > pi / 2.0 {
                    a += pi;
                }
            }
            prev = Some(a);
            lo = lo.min(a);
            hi = hi.max(a);
        }
        PlanarArcOracle { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Line-angle distance folded to [0, π/2].
pub fn line_dist(a: f64, b: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let mut d = (a - b).rem_euclid(pi);
    if d > pi / 2.0 {
        d = pi - d;
    }
    d
}

/// Oracle separation of an image arc from the complement of a target arc:
/// sine of the minimal boundary line angle, zero if the image pokes out.
pub fn separation_oracle(image: &PlanarArcOracle, target: &PlanarArcOracle) -> f64 {
    let pi = std::f64::consts::PI;
    let span_t = (target.hi - target.lo).rem_euclid(pi);
    let s1 = (image.lo - target.lo).rem_euclid(pi);
    let s2 = s1 + (image.hi - image.lo).rem_euclid(pi);
    if s2 > span_t + 1e-12 {
        return 0.0;
    }
    let d = line_dist(s1, 0.0)
        .min(line_dist(s1, span_t))
        .min(line_dist(s2, 0.0))
        .min(line_dist(s2, span_t))
        .min(pi / 2.0);
    d.sin()
}
