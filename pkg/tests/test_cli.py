import pytest

from rdch.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_SOLVER, OUTPUT_ENV, main

BASE = """
mesh.dimension = {dim}
mesh.cells = {cells}
model.sigma = 5e-5
solver.scheme = {scheme}
solver.dt_initial = {dt}
solver.t_end = {t_end}
output.snapshot_every = 2
"""


def write_cfg(tmp_path, name="run.cfg", dim=1, cells=20, scheme="nonlinear", dt=1e-4, t_end=5e-4, extra=""):
    p = tmp_path / name
    p.write_text(BASE.format(dim=dim, cells=cells, scheme=scheme, dt=dt, t_end=t_end) + extra)
    return p


@pytest.fixture(autouse=True)
def no_env_output(monkeypatch):
    monkeypatch.delenv(OUTPUT_ENV, raising=False)


def test_run_writes_outputs(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "-o", str(out)]) == EXIT_OK
    names = sorted(p.name for p in out.iterdir())
    assert "series.csv" in names and "snap_0.csv" in names
    assert "steps=" in capsys.readouterr().out


def test_run_2d_writes_vtk(tmp_path):
    cfg = write_cfg(tmp_path, dim=2, cells=4, t_end=2e-4)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "-o", str(out)]) == EXIT_OK
    assert any(p.suffix == ".vtk" for p in out.iterdir())


def test_reruns_are_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path, extra="initial.seed = 7\n")
    main(["run", str(cfg), "-o", str(tmp_path / "a")])
    main(["run", str(cfg), "-o", str(tmp_path / "b")])
    for p in (tmp_path / "a").iterdir():
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()


def test_env_var_sets_output(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path)
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    assert main(["run", str(cfg)]) == EXIT_OK
    assert (tmp_path / "env" / "series.csv").exists()
    # -o still wins
    assert main(["run", str(cfg), "-o", str(tmp_path / "flag")]) == EXIT_OK
    assert (tmp_path / "flag" / "series.csv").exists()


def test_config_error_exit(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("mesh.dimension = 3\n")
    assert main(["run", str(p)]) == EXIT_CONFIG
    assert "mesh.dimension" in capsys.readouterr().err


def test_missing_config_is_io_error(tmp_path):
    assert main(["run", str(tmp_path / "nope.cfg")]) == EXIT_IO


def test_unwritable_output_is_io_error(tmp_path):
    cfg = write_cfg(tmp_path)
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["run", str(cfg), "-o", str(blocker / "sub")]) == EXIT_IO


def test_solver_failure_exit(tmp_path, capsys):
    cfg = write_cfg(tmp_path, extra="solver.picard_max_iter = 1\nsolver.picard_tol = 1e-15\n")
    assert main(["run", str(cfg), "-o", str(tmp_path / "o")]) == EXIT_SOLVER
    assert "at step 1" in capsys.readouterr().err


def test_scan_single_point(tmp_path):
    cfg = write_cfg(tmp_path, extra="scan.dt_min = 1e-5\nscan.dt_max = 1e-5\nscan.n_points = 1\nscan.sigmas = 1e-4\n")
    assert main(["scan-stability", str(cfg), "-o", str(tmp_path / "s")]) == EXIT_OK
    lines = (tmp_path / "s" / "stability_0.0001.csv").read_text().splitlines()
    assert lines[0] == "dt,rho" and len(lines) == 2


def test_convergence_study(tmp_path):
    extra = "initial.profile = cosine\nstudy.mesh_sizes = 10, 20\nstudy.t_end = 1e-3\n"
    cfg = write_cfg(tmp_path, scheme="linear", extra=extra)
    assert main(["convergence-study", str(cfg), "-o", str(tmp_path / "c")]) == EXIT_OK
    assert len((tmp_path / "c" / "convergence.csv").read_text().splitlines()) == 2


@pytest.mark.parametrize(
    "extra",
    ["study.mesh_sizes = 10, 15\ninitial.profile = cosine\n", "study.mesh_sizes = 10, 20\n"],
)
def test_convergence_study_rejections(tmp_path, extra):
    cfg = write_cfg(tmp_path, extra=extra)
    assert main(["convergence-study", str(cfg), "-o", str(tmp_path / "c")]) == EXIT_CONFIG


def test_validate_mesh(tmp_path, capsys):
    cfg = write_cfg(tmp_path, dim=2, cells=8)
    assert main(["validate-mesh", str(cfg)]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert float(out[0].split("=")[1]) == pytest.approx(2**0.5 / 8)  # diameter = hypotenuse
    assert "G_h=6" in out and "acute=true" in out


def test_version_and_usage(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == 2
