"""Tests for benchmarks.py: sampling, timing helpers, sweeps, speed-ups and CSV output."""

import subprocess
from unittest.mock import MagicMock, patch

import numpy as np
import pytest

from src.__version__ import __version__
from src.benchmarks import (
    _fe_cells,
    _median_row,
    add_speedups,
    digest,
    fe_bench,
    loglog_slope,
    matpoint_bench,
    path_scan_records,
    peak_memory,
    random_deformations,
    read_csv,
    time_repeated,
    version_string,
    write_csv,
)
from src.constants import CSV_SCHEMA_VERSION, LOADING_PATHS
from src.mesh import twist_cube_model
from src.schemas import BenchRecord, PathScanRecord
from src.tensors import det3


def _record(**kwargs):
    base = {"experiment": "matpoint", "architecture": "micnn", "mode": "cgo", "kind": "median"}
    return BenchRecord(**{**base, **kwargs})


class TestProvenance:
    def test_digest_is_short_and_stable(self):
        a = np.linspace(0.0, 1.0, 7)
        assert len(digest(a)) == 16
        assert digest(a) == digest(a.copy())
        assert digest(a, a) != digest(a)

    def test_digest_sees_last_bit(self):
        a = np.array([1.0, 2.0])
        b = a.copy()
        b[1] = np.nextafter(b[1], 3.0)
        assert digest(a) != digest(b)

    @patch("src.benchmarks.subprocess.run")
    def test_version_with_git(self, mock_run):
        mock_run.return_value = MagicMock(returncode=0, stdout="v1.0-3-gabc123\n")
        assert version_string() == f"{__version__}+v1.0-3-gabc123"

    @patch("src.benchmarks.subprocess.run")
    def test_version_without_git(self, mock_run):
        mock_run.side_effect = OSError("git not installed")
        assert version_string() == __version__

    @patch("src.benchmarks.subprocess.run")
    def test_version_outside_repository(self, mock_run):
        mock_run.return_value = MagicMock(returncode=128, stdout="")
        assert version_string() == __version__

    @patch("src.benchmarks.subprocess.run")
    def test_version_on_timeout(self, mock_run):
        mock_run.side_effect = subprocess.TimeoutExpired(cmd="git", timeout=5)
        assert version_string() == __version__


class TestSampling:
    def test_random_deformations(self):
        f = random_deformations(500, np.random.default_rng(0))
        assert f.shape == (500, 3, 3)
        assert np.min(det3(f)) > 0.2

    def test_same_seed_same_draw(self):
        a = random_deformations(50, np.random.default_rng(9))
        b = random_deformations(50, np.random.default_rng(9))
        np.testing.assert_array_equal(a, b)


class TestTimingHelpers:
    def test_warmup_runs_are_not_timed(self):
        calls = []
        times = time_repeated(lambda: calls.append(1), repetitions=3)
        assert len(calls) == 4
        assert len(times) == 3
        assert all(t >= 1 for t in times)

    def test_peak_memory_sees_numpy_allocations(self):
        assert peak_memory(lambda: np.ones(1_000_000)) >= 8_000_000

    def test_loglog_slope(self):
        assert loglog_slope([1, 2, 4, 8], [3, 12, 48, 192]) == pytest.approx(2.0)

    def test_median_row(self):
        rows = [_record(kind="raw", repetition=i, total_ns=t, constitutive_ns=t) for i, t in enumerate([5, 1, 3])]
        median = _median_row(rows)
        assert median.kind == "median"
        assert median.repetition == -1
        assert median.total_ns == 3
        assert rows[0].kind == "raw"


class TestSpeedups:
    def test_vs_batch_one_and_fd(self):
        records = [
            _record(batch_size=1, total_ns=100),
            _record(batch_size=32, total_ns=20),
            _record(mode="fd", batch_size=32, total_ns=200),
            _record(kind="raw", batch_size=32, total_ns=10),
        ]
        add_speedups(records)
        assert records[0].speedup_vs_batch1 == 1.0
        assert records[1].speedup_vs_batch1 == pytest.approx(5.0)
        assert records[1].speedup_vs_fd == pytest.approx(10.0)
        assert records[2].speedup_vs_fd is None
        assert records[3].speedup_vs_batch1 is None

    def test_vs_single_worker(self):
        records = [
            _record(experiment="fe", assembly="partitioned", batch_size=64, workers=1, total_ns=90),
            _record(experiment="fe", assembly="partitioned", batch_size=64, workers=3, total_ns=30),
        ]
        add_speedups(records)
        assert records[1].speedup_vs_single_worker == pytest.approx(3.0)
        assert records[0].speedup_vs_single_worker == 1.0

    def test_fe_cells(self):
        cells = _fe_cells(["trad", "global", "batch", "partitioned"], [1, 64], [1, 2], n_qp=512)
        assert cells == [
            ("trad", 1, 1),
            ("global", 512, 1),
            ("batch", 1, 1),
            ("batch", 64, 1),
            ("partitioned", 1, 1),
            ("partitioned", 1, 2),
            ("partitioned", 64, 1),
            ("partitioned", 64, 2),
        ]


class TestMatpointBench:
    def test_rows_and_digests(self, gent_thomas):
        records = matpoint_bench(gent_thomas, [16], [1, 4], ["cgo", "fd"], repetitions=2, seed=5)
        assert len(records) == 12
        raw = [r for r in records if r.kind == "raw"]
        medians = [r for r in records if r.kind == "median"]
        assert len(raw) == 8 and len(medians) == 4
        for mode in ("cgo", "fd"):
            assert len({r.digest for r in records if r.mode == mode}) == 1
        batched = next(r for r in medians if r.mode == "cgo" and r.batch_size == 4)
        assert batched.speedup_vs_batch1 is not None
        assert batched.speedup_vs_fd is not None
        assert all(r.peak_bytes > 0 for r in records)


class TestFeBench:
    @patch("src.benchmarks.twist_cube_model")
    def test_cells_agree_bitwise(self, mock_cube, gent_thomas):
        mock_cube.side_effect = lambda n: twist_cube_model(n, angle=0.3, axial=0.1)
        records = fe_bench(
            gent_thomas,
            mesh_sizes=[2],
            assemblies=["trad", "batch", "partitioned"],
            batch_sizes=[1, 8],
            workers=[1, 2],
            repetitions=1,
            load_steps=2,
        )
        raw = [r for r in records if r.kind == "raw"]
        assert len(raw) == 7
        assert all(r.converged for r in raw)
        assert len({r.digest for r in raw}) == 1
        assert all(r.n_dofs == 81 and r.mesh_n == 2 for r in raw)
        assert all(r.max_trace_c > 3.0 for r in raw)
        two = next(r for r in records if r.kind == "median" and r.workers == 2 and r.batch_size == 8)
        assert two.speedup_vs_single_worker is not None

    @patch("src.benchmarks.newton_solve")
    @patch("src.benchmarks.twist_cube_model")
    def test_failed_solve_is_recorded(self, mock_cube, mock_solve, gent_thomas):
        from src.errors import ConvergenceError

        mock_cube.side_effect = lambda n: twist_cube_model(n, angle=0.3, axial=0.1)
        mock_solve.side_effect = ConvergenceError("load step failed", load_factor=0.25)
        records = fe_bench(gent_thomas, [1], ["batch"], [8], [1], repetitions=2, load_steps=1)
        raw = [r for r in records if r.kind == "raw"]
        assert len(raw) == 2
        assert not any(r.converged for r in raw)
        assert "load step failed" in raw[0].error


class TestPathScanRecords:
    def test_gent_thomas_matches_itself(self, gent_thomas):
        records = path_scan_records(gent_thomas, 0.5, 4)
        assert len(records) == 5 * len(LOADING_PATHS)
        assert {r.path for r in records} == set(LOADING_PATHS)
        assert all(r.psi_model == r.psi_reference for r in records)

    def test_domain_violation_is_recorded(self, gent_thomas):
        records = path_scan_records(gent_thomas, -1.0, 2, paths=("UT", "SS"))
        bad = [r for r in records if r.error]
        assert len(bad) == 1
        assert bad[0].path == "UT"
        assert np.isnan(bad[0].psi_model)


class TestCsv:
    def test_header_and_rows(self, tmp_path):
        path = str(tmp_path / "mp.csv")
        records = [_record(batch_size=1, total_ns=100), _record(batch_size=4, total_ns=50, speedup_vs_batch1=2.0)]
        with patch("src.benchmarks.version_string", return_value="9.9.9"):
            write_csv(path, records, config={"seed": 1})
        lines = open(path, encoding="utf-8").read().splitlines()
        assert lines[0] == f"# ncm-fe benchmark schema {CSV_SCHEMA_VERSION}"
        assert lines[1] == "# version: 9.9.9"
        assert lines[2] == '# config: {"seed": 1}'
        rows = read_csv(path)
        assert len(rows) == 2
        assert list(rows[0]) == list(BenchRecord.model_fields)
        assert rows[0]["speedup_vs_batch1"] == ""
        assert rows[1]["speedup_vs_batch1"] == "2.0"
        assert {r["version"] for r in rows} == {"9.9.9"}
        assert {r["config"] for r in rows} == {'{"seed": 1}'}

    def test_path_scan_kind(self, tmp_path):
        path = str(tmp_path / "ps.csv")
        write_csv(path, [PathScanRecord(path="UT", gamma=0.1, psi_model=1.0, psi_reference=1.1)], kind="path-scan")
        assert open(path, encoding="utf-8").readline().startswith("# ncm-fe path-scan schema")
        assert list(read_csv(path)[0]) == ["path", "gamma", "psi_model", "psi_reference", "error"]

    def test_stdout(self, capsys):
        write_csv("-", [_record()])
        out = capsys.readouterr().out
        assert out.startswith("# ncm-fe benchmark schema")
        assert "experiment,kind,architecture" in out


@pytest.mark.slow
class TestScaling:
    """Timing slopes use the fastest of several runs; sizes stay clear of the fixed-cost regime."""

    def test_material_point_time_is_linear_in_points(self, gent_thomas):
        from src.constitutive import eval_sweep

        counts = [8192, 32768, 131072]
        best = []
        for n in counts:
            f = random_deformations(n, np.random.default_rng(1))
            best.append(min(time_repeated(lambda f=f: eval_sweep(gent_thomas, f, 1024), 5)))
        assert loglog_slope(counts, best) == pytest.approx(1.0, abs=0.15)

    def test_assembly_time_is_linear_in_dofs(self, gent_thomas):
        from src.assembly import assemble, build_pattern
        from src.models import AssemblyTimings, MaterialBatch

        dofs, best = [], []
        for n in (6, 8, 10, 12):
            fe = twist_cube_model(n)
            pattern = build_pattern(fe)
            batch = MaterialBatch(512)
            u = np.zeros(fe.dofmap.n_dofs)
            runs = []
            for _ in range(6):
                timings = AssemblyTimings()
                assemble(gent_thomas, fe, u, "batch", n_batch=512, pattern=pattern, timings=timings, batch=batch)
                runs.append(timings.constitutive_ns + timings.other_ns)
            dofs.append(fe.dofmap.n_dofs)
            # first run is warm-up
            best.append(min(runs[1:]))
        assert loglog_slope(dofs, best) == pytest.approx(1.0, abs=0.15)


@pytest.mark.slow
class TestMatpointSweepShape:
    @pytest.fixture(scope="class")
    def sweep(self):
        from src.weights import load_model

        model = load_model("micnn-example")
        records = matpoint_bench(model, [1024], [1, 32, 1024], ["cgo"], repetitions=3, seed=0)
        records += matpoint_bench(model, [1024], [1024], ["fd"], repetitions=3, seed=0)
        add_speedups(records)
        return {(r.mode, r.batch_size): r for r in records if r.kind == "median"}

    def test_closed_form_beats_finite_differences(self, sweep):
        assert sweep[("cgo", 1024)].speedup_vs_fd >= 10.0

    def test_batching_beats_single_points(self, sweep):
        batched = min(sweep[("cgo", b)].total_ns for b in (32, 1024))
        assert batched < sweep[("cgo", 1)].total_ns

    def test_no_degradation_at_largest_batch(self, sweep):
        best = min(sweep[("cgo", b)].total_ns for b in (1, 32, 1024))
        assert sweep[("cgo", 1024)].total_ns <= 1.5 * best
