mod common;

use std::path::Path;
use std::process::{Command, Output};

use g2mhd::cli::{execute, parse_ledger, read_fields, Case, RunConfig, LEDGER_HEADER, OUTPUT_DIR_ENV};
use g2mhd::fields::{l2_norm, Field};
use g2mhd::grid::Layout;
use g2mhd::mms::polynomial_case;

fn bin(args: &[&str], out_dir: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_g2mhd"));
    cmd.args(args);
    match out_dir {
        Some(d) => cmd.env(OUTPUT_DIR_ENV, d),
        None => cmd.env_remove(OUTPUT_DIR_ENV),
    };
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.cfg");
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn verify_command_passes() {
    let out = bin(&["verify", "--n", "12", "--seed", "4"], None);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}\n{}", String::from_utf8_lossy(&out.stderr));
    assert!(!text.contains("FAIL"));
    assert!(text.lines().count() >= 5);
}

#[test]
fn usage_errors_exit_nonzero() {
    assert_eq!(bin(&[], None).status.code(), Some(2));
    assert_eq!(bin(&["frobnicate"], None).status.code(), Some(2));
    assert_eq!(bin(&["eoc", "sideways", "x.cfg"], None).status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "case = decay\nnx = 8\nny = 8\ndt = 0.1\nt_final = 0.2\nalpha = 0.1\nnu = -1\n");
    let out = bin(&["run", &cfg], Some(dir.path()));
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 7"), "{err}");
}

#[test]
fn zero_data_give_zero_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "case = custom\nnx = 8\nny = 6\ndt = 0.05\nt_final = 0.1\nalpha = 0.3\nnu = 1\n",
    );
    let out = bin(&["run", &cfg], Some(dir.path()));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("ledger.csv")).unwrap();
    assert_eq!(text.lines().next(), Some(LEDGER_HEADER));
    let rows = parse_ledger(&text).unwrap();
    assert_eq!(rows.len(), 3);
    for (n, r) in rows.iter().enumerate() {
        assert_eq!(r.step, n);
        let values = [
            r.norm_u_alpha_sq,
            r.norm_h_sq,
            r.norm_z_sq,
            r.seminorm_u_sq,
            r.seminorm_h_sq,
            r.diff_u_alpha_sq,
            r.diff_h_sq,
            r.diff_z_sq,
            r.work_f,
            r.norm_p_sq,
            r.norm_omega_sq,
            r.norm_ah,
            r.identity_residual,
            r.max_div_u,
            r.max_div_h,
        ];
        assert!(values.iter().all(|v| *v == 0.0), "row {n}: {values:?}");
    }
}

#[test]
fn ledger_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        nx: 10,
        ny: 8,
        ly: 0.8,
        dt: 0.02,
        t_final: 0.1,
        ..common::decay_config(10, 0.2, 0.02, 5, 9)
    };
    let out = execute(&cfg, dir.path()).unwrap();
    let rows = parse_ledger(&std::fs::read_to_string(dir.path().join("ledger.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), out.ledger.rows().len());
    let mut total = 0.0;
    for (a, b) in rows.iter().zip(out.ledger.rows()) {
        assert_eq!(a.step, b.step);
        assert_eq!(a.picard_iters, b.picard_iters);
        for (x, y) in [
            (a.t, b.t),
            (a.norm_u_alpha_sq, b.norm_u_alpha_sq),
            (a.norm_z_sq, b.norm_z_sq),
            (a.diff_u_alpha_sq, b.diff_u_alpha_sq),
            (a.norm_p_sq, b.norm_p_sq),
            (a.identity_residual, b.identity_residual),
            (a.max_div_h, b.max_div_h),
        ] {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        if a.step > 0 {
            total += a.diff_u_alpha_sq;
        }
        assert_eq!(total.to_bits(), b.totals.diff_u_alpha_sq.to_bits());
    }
}

#[test]
fn manufactured_dump_matches_reported_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        case: Case::Mms,
        nx: 16,
        ny: 16,
        dt: 0.05,
        t_final: 0.2,
        alpha: 0.0,
        dump_every: 4,
        ..RunConfig::default()
    };
    let out = execute(&cfg, dir.path()).unwrap();
    let (g, s) = read_fields(&dir.path().join("fields_000004.txt")).unwrap();
    assert_eq!(s, out.final_state);
    assert!(dir.path().join("fields_000000.txt").exists());

    let case = polynomial_case(cfg.amplitude_u, cfg.amplitude_h);
    let (mut worst, mut peak) = (0.0_f64, 0.0_f64);
    for (layout, vals, c) in [(Layout::XFace, &s.u.x, 0), (Layout::YFace, &s.u.y, 1)] {
        let (ni, nj) = g.dims(layout);
        for j in 0..nj {
            for i in 0..ni {
                let (x, y) = g.position(layout, i, j);
                let exact = case.velocity(x, y, s.t)[c];
                worst = worst.max((vals[j * ni + i] - exact).abs());
                peak = peak.max(exact.abs());
            }
        }
    }
    let (eu, _) = out.mms_errors.unwrap();
    // The L2 error cannot exceed the pointwise error on the unit square.
    assert!(eu <= worst * (1.0 + 1e-12), "{eu:e} vs {worst:e}");
    // Four backward Euler steps of 0.05 leave roughly a tenth of the signal.
    assert!(worst < 0.25 * peak, "{worst:e} vs {peak:e}");
    assert!(eu < 0.25 * l2_norm(&g, &s.u));
    assert!(s.u.is_finite() && s.h.is_finite());
}

#[test]
fn eoc_command_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "case = mms\nnx = 8\nny = 8\ndt = 0.05\nt_final = 0.1\nalpha = 0.1\nnu = 1\nlevels = 3\n",
    );
    let out = bin(&["eoc", "space", &cfg], Some(dir.path()));
    let code = out.status.code();
    assert!(code == Some(0) || code == Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("eoc_space.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("level,h,k,err_u_alpha,err_h,eoc_u,eoc_h"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].ends_with("indeterminate,indeterminate"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("space EOC window"));
}
