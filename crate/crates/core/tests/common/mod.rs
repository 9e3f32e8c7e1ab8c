#![allow(dead_code)]

pub mod oracle;

use std::f64::consts::PI;

use g2mhd::cli::{random_solenoidal, Case, RunConfig};
use g2mhd::fields::{CellField, NodeField, VectorField};
use g2mhd::grid::{Grid, Layout};
use g2mhd::timestepper::Forcing;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_node(g: &Grid, r: &mut ChaCha8Rng) -> NodeField {
    NodeField {
        values: (0..g.len(Layout::Node)).map(|_| r.gen_range(-1.0..1.0)).collect(),
    }
}

pub fn random_cell(g: &Grid, r: &mut ChaCha8Rng) -> CellField {
    CellField {
        values: (0..g.len(Layout::Cell)).map(|_| r.gen_range(-1.0..1.0)).collect(),
    }
}

/// Random face field with zero wall faces.
pub fn random_faces(g: &Grid, r: &mut ChaCha8Rng) -> VectorField {
    let mut v = VectorField {
        x: (0..g.len(Layout::XFace)).map(|_| r.gen_range(-1.0..1.0)).collect(),
        y: (0..g.len(Layout::YFace)).map(|_| r.gen_range(-1.0..1.0)).collect(),
    };
    v.zero_boundary(g);
    v
}

pub fn solenoidal(g: &Grid, r: &mut ChaCha8Rng) -> VectorField {
    random_solenoidal(g, r).unwrap()
}

/// Smooth, time-dependent body force.
pub fn body_force(amp: f64) -> Forcing {
    Forcing::new(move |x, y, t| {
        [
            amp * (PI * x).sin() * (2.0 * PI * y).cos() * (1.0 + t).cos(),
            amp * (2.0 * x - y).sin() * (PI * y).sin(),
        ]
    })
}

pub fn decay_config(n: usize, alpha: f64, dt: f64, steps: usize, seed: u64) -> RunConfig {
    RunConfig {
        case: Case::Decay,
        nx: n,
        ny: n,
        alpha,
        dt,
        t_final: dt * steps as f64,
        seed,
        ..RunConfig::default()
    }
}
