use dynot_core::grid::{validate_and_normalize, GridDims};
use dynot_core::io::{
    frame_name, load_density, load_mask, parse_pgm, read_raw, save_run, write_pgm, DensityFormat, RawTensor,
    RunManifest, CONVERGENCE_FILE, MANIFEST_FILE, TENSOR_FILE,
};
use dynot_core::solvers::CSV_HEADER;
use dynot_core::{solve, Algorithm, CostModel, Problem, SolverConfig};
use ndarray::Array2;

fn small_run(p: usize) -> dynot_core::SolveOutput {
    let dims = GridDims::new_1d(6, p).unwrap();
    let a = Array2::from_shape_fn((7, 1), |(i, _)| 1.0 + i as f64);
    let b = Array2::from_shape_fn((7, 1), |(i, _)| 7.0 - i as f64);
    let pair = validate_and_normalize(&a, &b, 0.0, true).unwrap();
    let problem = Problem::new(dims, &pair.f0, &pair.f1, CostModel::quadratic()).unwrap();
    let mut c = SolverConfig::new(Algorithm::PrimalDual);
    c.max_iter = 20;
    solve(&problem, &c).unwrap()
}

#[test]
fn run_directory_layout() {
    let out = small_run(32);
    let dir = tempfile::tempdir().unwrap();
    let mut manifest = RunManifest::new();
    manifest.set("solver", "pd");
    let written = save_run(dir.path(), &out, &manifest).unwrap();
    let frames: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("frame_"))
        .collect();
    assert_eq!(frames.len(), 33);
    assert!(dir.path().join("frame_000.pgm").exists());
    assert!(dir.path().join("frame_032.pgm").exists());
    assert_eq!(frame_name(32), "frame_032.pgm");
    assert_eq!(written.len(), 36);

    let csv = std::fs::read_to_string(dir.path().join(CONVERGENCE_FILE)).unwrap();
    assert_eq!(csv.lines().next(), Some(CSV_HEADER));
    assert_eq!(CSV_HEADER, "iter,J,min_f,div_residual,boundary_residual,delta_f");
    assert_eq!(csv.lines().count(), 21);

    let tensor = read_raw(&dir.path().join(TENSOR_FILE)).unwrap();
    assert_eq!(tensor.to_centered(out.centered.dims()).unwrap(), out.centered);

    let text = std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(RunManifest::parse(&text).unwrap(), manifest);
}

#[test]
fn frames_use_the_global_maximum() {
    let out = small_run(4);
    let dir = tempfile::tempdir().unwrap();
    save_run(dir.path(), &out, &RunManifest::new()).unwrap();
    let f = out.centered.f();
    let max = f.iter().copied().fold(0.0f64, f64::max);
    let mut brightest = 0.0f64;
    for j in 0..=4 {
        let g = load_density(&dir.path().join(frame_name(j)), DensityFormat::Pgm).unwrap();
        for (x, v) in g.iter().enumerate() {
            assert!((v - f[[x, 0, j]].max(0.0) / max).abs() <= 0.5 / 255.0 + 1e-12);
        }
        brightest = brightest.max(g.iter().copied().fold(0.0, f64::max));
    }
    assert_eq!(brightest, 1.0);
}

#[test]
fn raw_round_trip_is_bitwise() {
    let out = small_run(5);
    let t = RawTensor::from_centered(&out.centered);
    let back = dynot_core::io::parse_raw(&t.to_bytes()).unwrap();
    assert_eq!(back, t);
    assert_eq!(&t.to_bytes()[..4], b"OTDT");
}

#[test]
fn densities_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("a.csv");
    std::fs::write(&csv, "1, 2, 3\n").unwrap();
    let g = load_density(&csv, DensityFormat::from_path(&csv).unwrap()).unwrap();
    assert_eq!(g.dim(), (3, 1));
    assert_eq!(g.column(0).to_vec(), vec![1.0, 2.0, 3.0]);

    let pgm = dir.path().join("flat.pgm");
    std::fs::write(&pgm, "P2\n3 2\n255\n7 7 7\n7 7 7\n").unwrap();
    let g = load_density(&pgm, DensityFormat::Pgm).unwrap();
    let pair = validate_and_normalize(&g, &g, 0.0, true).unwrap();
    assert!(pair.f0.iter().all(|&v| (v - 1.0 / 6.0).abs() < 1e-15));
}

#[test]
fn written_frames_parse_back() {
    let dir = tempfile::tempdir().unwrap();
    let g = Array2::from_shape_fn((4, 3), |(x, y)| (x + 4 * y) as f64);
    let path = dir.path().join("g.pgm");
    write_pgm(&path, g.view(), 11.0).unwrap();
    let back = parse_pgm(&std::fs::read(&path).unwrap()).unwrap();
    assert_eq!(back.dim(), (4, 3));
    for (a, b) in back.iter().zip(g.iter()) {
        assert!((a - b / 11.0).abs() <= 0.5 / 255.0);
    }
}

#[test]
fn static_masks_repeat_over_time() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mask.pgm");
    std::fs::write(&path, "P2\n3 3\n1\n0 1 0\n0 1 0\n0 0 0\n").unwrap();
    let dims = GridDims::new_2d(2, 2, 3).unwrap();
    let mask = load_mask(&path, DensityFormat::Pgm, dims).unwrap();
    assert_eq!(mask.dim(), (3, 3, 4));
    for t in 0..4 {
        assert!(mask[[1, 0, t]] && mask[[1, 1, t]] && !mask[[1, 2, t]] && !mask[[0, 0, t]]);
    }
    assert!(load_mask(&path, DensityFormat::Pgm, GridDims::new_2d(3, 2, 3).unwrap()).is_err());
}
