import json
from pathlib import Path

import pytest

from vectormesh.cli import EXIT_CONFIG, EXIT_OK, EXIT_UNSUPPORTED, main


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_list_workloads_counts(capsys):
    code, out, _ = run_cli(capsys, "list-workloads")
    rows = [l for l in out.splitlines()[1:] if l.strip()]
    assert code == EXIT_OK
    assert len(rows) >= 15 + 5

    code, out, _ = run_cli(capsys, "list-workloads", "--filter", "TY")
    assert code == EXIT_OK
    assert len([l for l in out.splitlines()[1:] if l.strip()]) == 7

    code, out, _ = run_cli(capsys, "list-workloads", "--filter", "none-such")
    assert code == EXIT_OK
    assert len([l for l in out.splitlines()[1:] if l.strip()]) == 0


def test_schedule_prints_exact_rational(capsys):
    code, out, _ = run_cli(capsys, "schedule", "--workload", "gemm:64,64,64")
    assert code == EXIT_OK
    d = dict(l.split("\t", 1) for l in out.splitlines() if "\t" in l)
    assert d["bandwidth_per_mac"] == "1/16"


def test_schedule_tile_override_respected(capsys):
    code, out, _ = run_cli(
        capsys, "schedule", "--workload", "gemm:64,64,64", "--tile", "16,16,8"
    )
    assert code == EXIT_OK
    d = dict(l.split("\t", 1) for l in out.splitlines() if "\t" in l)
    assert d["tile_extents"] == "16,16,8"


def test_schedule_oversized_tile_lists_capacity(capsys):
    code, _, err = run_cli(
        capsys, "schedule", "--workload", "gemm:256,256,256", "--tile", "256,256,256"
    )
    assert code == EXIT_CONFIG
    assert "words" in err


def test_simulate_writes_reproducible_stats(tmp_path, capsys):
    args = ("simulate", "--workload", "gemm:16,16,16", "--seed", "3")
    code, _, _ = run_cli(capsys, *args, "--out", str(tmp_path / "a"))
    assert code == EXIT_OK
    code, _, _ = run_cli(capsys, *args, "--out", str(tmp_path / "b"))
    assert code == EXIT_OK
    a = (tmp_path / "a" / "stats.tsv").read_bytes()
    b = (tmp_path / "b" / "stats.tsv").read_bytes()
    assert a == b
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["schema"] == 1


def test_simulate_embeds_manifest_hash(tmp_path, capsys):
    code, out, _ = run_cli(
        capsys, "simulate", "--workload", "gemm:8,8,8", "--out", str(tmp_path)
    )
    assert code == EXIT_OK
    stats = dict(
        l.split("\t", 1) for l in (tmp_path / "stats.tsv").read_text().splitlines()[1:]
    )
    assert len(stats["manifest_hash"]) == 64


def test_unsupported_workload_exit_code(capsys):
    code, _, err = run_cli(
        capsys, "simulate", "--arch", "systolic", "--workload", "CORR S3"
    )
    assert code == EXIT_UNSUPPORTED
    assert "unsupported" in err.lower()


def test_unknown_config_key_rejected(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"schema": 1, "arch": "vectormesh", "bogus": 1}))
    code, _, err = run_cli(capsys, "simulate", "--config", str(cfg))
    assert code == EXIT_CONFIG
    assert "bogus" in err


def test_wrong_schema_rejected(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"schema": 99}))
    code, _, err = run_cli(capsys, "simulate", "--config", str(cfg))
    assert code == EXIT_CONFIG


def test_config_file_drives_run(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({
        "schema": 1, "arch": "vectormesh", "workload": "gemm:8,8,8",
        "seed": 5, "pes": 128,
    }))
    code, out, _ = run_cli(capsys, "simulate", "--config", str(cfg))
    assert code == EXIT_OK
    d = dict(l.split("\t", 1) for l in out.splitlines() if "\t" in l)
    assert d["workload"] == "gemm:8,8,8"
    assert d["seed"] == "5"


def test_sweep_single_cell_and_report(tmp_path, capsys):
    code, out, _ = run_cli(
        capsys, "sweep", "--arch", "vectormesh", "--workload", "TY CONV1",
        "--pes", "128", "--spatial", "14", "--out", str(tmp_path),
    )
    assert code == EXIT_OK
    assert (tmp_path / "report.tsv").exists()
    assert "aggregate" in out

    code, out, _ = run_cli(
        capsys, "report", "--input", str(tmp_path / "report.tsv"), "--out", str(tmp_path)
    )
    assert code == EXIT_OK
    series = list(tmp_path.glob("roofline_*.tsv"))
    assert series
    body = series[0].read_text().splitlines()
    assert body[0] == "workload\toi_macs_per_byte\tgops"


def test_sweep_records_unsupported_cells(tmp_path, capsys):
    code, out, _ = run_cli(
        capsys, "sweep", "--arch", "systolic", "--workload", "CORR S3",
        "--pes", "128", "--spatial", "16", "--out", str(tmp_path),
    )
    assert code == EXIT_OK  # the sweep continues; the cell is marked
    assert "FAILED" in out and "unsupported" in out
