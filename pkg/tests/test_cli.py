import json
import random
from pathlib import Path

import jsonschema
import pytest

from cvrpcut.cli import main
from cvrpcut.instance import generate_random, parse_cvrplib, serialize_cvrplib
from cvrpcut.lp import solve_lp
from cvrpcut.relaxation import (
    FractionalSolution,
    build_relaxation,
    solution_from_lp,
    solution_to_json_dict,
)

from oracles import integer_solution, random_feasible_partition

SCHEMA_DIR = Path(__file__).resolve().parent.parent / "docs" / "schemas"


def check_schema(data, name):
    schema = json.loads((SCHEMA_DIR / name).read_text())
    jsonschema.validate(instance=data, schema=schema)


def write_instance(tmp_path, n_customers=10, seed=5, name="toy"):
    inst = generate_random(n_customers, seed=seed)
    path = tmp_path / f"{name}.vrp"
    path.write_text(serialize_cvrplib(inst))
    return inst, path


def test_gen_writes_reparseable_files(tmp_path, capsys):
    rc = main(
        [
            "gen",
            "--size",
            "6",
            "--count",
            "2",
            "--seed",
            "9",
            "--out-dir",
            str(tmp_path / "batch"),
        ]
    )
    assert rc == 0
    printed = capsys.readouterr().out.strip().splitlines()
    assert len(printed) == 2
    for line, seed in zip(printed, (9, 10)):
        inst = parse_cvrplib(Path(line).read_text())
        assert inst == generate_random(6, seed=seed)


def test_root_solve_writes_result_and_cut_log(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    inst, path = write_instance(tmp_path, n_customers=9, seed=12)
    rc = main(["root-solve", str(path), "--max-iter", "15", "--jobs", "2"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "lower bound" in out and "cuts" in out
    result = json.loads((tmp_path / "toy.result.json").read_text())
    check_schema(result, "result.schema.json")
    assert result["instance"] == inst.name
    assert result["status"] in ("converged", "max-iterations")
    lines = (tmp_path / "toy.cuts.jsonl").read_text().splitlines()
    assert len(lines) == result["cuts"]["rci"] + result["cuts"]["fci"]
    for line in lines:
        check_schema(json.loads(line), "cut-log.schema.json")


def test_root_solve_zero_rounds_equals_plain_relaxation(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    inst, path = write_instance(tmp_path, n_customers=8, seed=4)
    rc = main(["root-solve", str(path), "--max-iter", "0"])
    assert rc == 0
    result = json.loads((tmp_path / "toy.result.json").read_text())
    lp, _ = build_relaxation(inst)
    assert result["lower_bound"] == pytest.approx(float(solve_lp(lp).objective))
    assert result["iterations"] == 0
    assert (tmp_path / "toy.cuts.jsonl").read_text() == ""


def test_root_solve_output_is_byte_identical_across_runs(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    _, path = write_instance(tmp_path, n_customers=11, seed=33)
    flags = [
        "--strategy",
        "coarsen+graphchip",
        "--policy",
        "pi_greedy",
        "--fci",
        "--fci-gate",
        "1e9",
        "--seed",
        "7",
        "--max-iter",
        "5",
    ]
    blobs = []
    for tag, jobs in (("a", "1"), ("b", "1"), ("c", "4")):
        rc = main(
            ["root-solve", str(path), *flags, "--jobs", jobs]
            + ["--out-result", f"{tag}.json", "--out-cuts", f"{tag}.jsonl"]
        )
        assert rc == 0
        blobs.append(
            (
                (tmp_path / f"{tag}.json").read_bytes(),
                (tmp_path / f"{tag}.jsonl").read_bytes(),
            )
        )
    assert blobs[0] == blobs[1] == blobs[2]


def test_separate_on_integer_point_prints_nothing(tmp_path, capsys):
    inst, path = write_instance(tmp_path, n_customers=7, seed=21)
    part = random_feasible_partition(inst, random.Random(0))
    frac = FractionalSolution(n=inst.n, edges=integer_solution(part))
    sol_path = tmp_path / "point.json"
    sol_path.write_text(json.dumps(solution_to_json_dict(frac)))
    check_schema(json.loads(sol_path.read_text()), "solution.schema.json")
    rc = main(["separate", str(path), str(sol_path), "--strategy", "exact"])
    assert rc == 0
    assert capsys.readouterr().out == ""


def test_separate_emits_schema_clean_cut_lines(tmp_path, capsys):
    inst, path = write_instance(tmp_path, n_customers=10, seed=2)
    lp, edges = build_relaxation(inst)
    sol = solve_lp(lp)
    frac = solution_from_lp(inst.n, edges, sol.x, float(sol.objective))
    sol_path = tmp_path / "root.json"
    sol_path.write_text(json.dumps(solution_to_json_dict(frac)))
    out_path = tmp_path / "cuts.jsonl"
    rc = main(
        [
            "separate",
            str(path),
            str(sol_path),
            "--strategy",
            "exact",
            "--out",
            str(out_path),
        ]
    )
    assert rc == 0
    assert str(out_path) in capsys.readouterr().out
    lines = out_path.read_text().splitlines()
    assert lines
    for line in lines:
        entry = json.loads(line)
        check_schema(entry, "cut-log.schema.json")
        assert entry["iteration"] == 0


def test_separate_dimension_mismatch_fails_cleanly(tmp_path, capsys):
    _, path = write_instance(tmp_path, n_customers=7, seed=3)
    sol_path = tmp_path / "wrong.json"
    sol_path.write_text(json.dumps({"n": 4, "edges": [[0, 1, 1.0]]}))
    rc = main(["separate", str(path), str(sol_path)])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_bpp_reports_the_three_bounds(tmp_path, capsys):
    out_path = tmp_path / "bpp.json"
    rc = main(
        [
            "bpp",
            "--cap",
            "144",
            "--items",
            "602:split,662:split",
            "--out",
            str(out_path),
        ]
    )
    assert rc == 0
    report = json.loads(out_path.read_text())
    check_schema(report, "bpp.schema.json")
    assert report["items"] == [144] * 8 + [86, 26]
    assert report["l2"] == report["exact"] == report["ffd"] == 9
    assert json.loads(capsys.readouterr().out) == report


def test_bpp_rejects_oversized_plain_items(capsys):
    rc = main(["bpp", "--cap", "10", "--items", "11"])
    assert rc == 2
    assert ":split" in capsys.readouterr().err
    rc = main(["bpp", "--cap", "10", "--items", ","])
    assert rc == 2


def test_sensitivity_report_matches_schema(tmp_path, capsys):
    out_path = tmp_path / "sens.json"
    rc = main(
        [
            "sensitivity",
            "--gen-sizes",
            "8",
            "--gen-count",
            "2",
            "--seed",
            "3",
            "--jobs",
            "2",
            "--out",
            str(out_path),
        ]
    )
    assert rc == 0
    report = json.loads(out_path.read_text())
    check_schema(report, "sensitivity.schema.json")
    assert len({row["instance"] for row in report["rows"]}) == 2
    table = capsys.readouterr().out
    assert "d2(m,m+1)" in table


def test_diversity_report_matches_schema(tmp_path, capsys):
    out_path = tmp_path / "div.json"
    rc = main(
        [
            "diversity",
            "--gen-sizes",
            "8",
            "--seeds",
            "0,1,2",
            "--policies",
            "greedy,roulette",
            "--out",
            str(out_path),
        ]
    )
    assert rc == 0
    report = json.loads(out_path.read_text())
    check_schema(report, "diversity.schema.json")
    greedy_rows = [r for r in report["rows"] if r["policy"] == "greedy"]
    assert greedy_rows and all(r["mean_d3"] == 1.0 for r in greedy_rows)
    assert report["summary"]["greedy"]["mean"] == 1.0


def test_study_instances_from_files(tmp_path, capsys):
    inst, path = write_instance(tmp_path, n_customers=6, seed=8)
    rc = main(["sensitivity", str(path)])
    assert rc == 0
    # the table shows the embedded instance name, not the file stem
    assert inst.name in capsys.readouterr().out
    rc = main(["sensitivity"])
    assert rc == 2  # neither files nor --gen-sizes


def test_missing_file_exits_two(capsys):
    rc = main(["root-solve", "/nonexistent/foo.vrp"])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_unsupported_distance_type_exits_two(tmp_path, capsys):
    path = tmp_path / "geo.vrp"
    path.write_text(
        "NAME : geo\nTYPE : CVRP\nDIMENSION : 2\nEDGE_WEIGHT_TYPE : GEO\n"
        "CAPACITY : 10\nNODE_COORD_SECTION\n1 0 0\n2 1 1\nDEMAND_SECTION\n"
        "1 0\n2 5\nDEPOT_SECTION\n1\n-1\nEOF\n"
    )
    rc = main(["root-solve", str(path)])
    assert rc == 2
    assert "EUC_2D" in capsys.readouterr().err


def test_log_env_var_is_accepted(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("CVRPCUT_LOG", "WARNING")
    rc = main(["bpp", "--cap", "6", "--items", "3,3,3"])
    assert rc == 0
    report = json.loads(capsys.readouterr().out)
    assert report["exact"] == 2
