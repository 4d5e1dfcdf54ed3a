//! Residuals frozen from an independent dense NumPy implementation that
//! assembles the canonical basis and the mode kernels from scratch.

use std::sync::Arc;

use polariton::diagonalize::{annihilator_global, fano_residual};
use polariton::green::mode_sweep;
use polariton::oracle::diagonal_form_check;
use polariton::*;

struct Frozen {
    model: ModelId,
    n: usize,
    nodes: usize,
    field: f64,
    medium: f64,
    /// `None` where the conjugate equation sits at roundoff.
    conjugate: Option<f64>,
    master: f64,
    annihilator: f64,
}

const CASES: &[Frozen] = &[
    Frozen {
        model: ModelId::LocalLorentz,
        n: 1,
        nodes: 8,
        field: 1.116479572001196,
        medium: 0.5008612732335861,
        conjugate: None,
        master: 0.8956599778265721,
        annihilator: 0.006883768283932258,
    },
    Frozen {
        model: ModelId::UniaxialLocal,
        n: 1,
        nodes: 8,
        field: 1.1097393872252121,
        medium: 0.499323824475233,
        conjugate: None,
        master: 0.8685969479515391,
        annihilator: 0.013903190488683033,
    },
    Frozen {
        model: ModelId::GaussianNonlocal,
        n: 2,
        nodes: 4,
        field: 2.481545726448782,
        medium: 0.8884789067091778,
        conjugate: Some(1.3071876068785662),
        master: 2.0007772495120726,
        annihilator: 0.00375866993663915,
    },
];

fn close(got: f64, want: f64) -> bool {
    (got - want).abs() <= 1e-8 * want.abs()
}

#[test]
fn kernels_match_dense_reference() {
    for case in CASES {
        let lat = Arc::new(Lattice::new(case.n, 1.0).unwrap());
        let grid = FrequencyGrid::midpoint(case.nodes, 3.0, 2.0).unwrap();
        let t = build_model(case.model, lat, &grid, &ModelParams::default()).unwrap();
        let chi = Susceptibility::new(&t);
        let greens = mode_sweep(&chi).unwrap();
        let f = mode_coefficients(&t, &greens).unwrap();
        let fs = structure_tensor(&t).unwrap();

        let r = fano_residual(&f, &t, fs.kernel()).unwrap();
        let id = case.model;
        assert!(r.ratio < 1e-14, "{id}: {r:?}");
        assert!(close(r.field, case.field), "{id}: field {}", r.field);
        assert!(close(r.medium, case.medium), "{id}: medium {}", r.medium);
        match case.conjugate {
            Some(want) => assert!(close(r.conjugate, want), "{id}: conjugate {}", r.conjugate),
            None => assert!(r.conjugate < 1e-14, "{id}: conjugate {}", r.conjugate),
        }

        let h = assemble_hamiltonian(&t, fs.kernel()).unwrap();
        let m = diagonal_form_check(&h, &f);
        assert!(close(m.global, case.master), "{id}: master {}", m.global);
        let a = annihilator_global(&f, &t);
        assert!(close(a, case.annihilator), "{id}: annihilator {a}");
    }
}
