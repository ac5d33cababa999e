"""Exit codes, report envelopes, and artifact determinism of the CLI."""

from __future__ import annotations

import json

import pytest

from steinerlab import cli
from steinerlab.absorber import book_from_json, random_divisible_leave
from steinerlab.core import RGraph
from steinerlab.fileio import format_intvector, format_rgraph, parse_decomposition
from steinerlab.util import derive_rng


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr().out
    return code, out


def run_json(argv, capsys):
    code, out = run(argv, capsys)
    return code, json.loads(out)


class TestBuild:
    def test_small_design_artifact(self, tmp_path, capsys):
        out = tmp_path / "sts9.txt"
        code, rep = run_json(
            ["build", "--q", "3", "--r", "2", "--n", "9", "--seed", "0",
             "--out", str(out)],
            capsys,
        )
        assert code == 0
        assert rep["outcome"] == "ok"
        assert rep["artifact_version"] == "1"
        assert rep["config"]["n"] == 9
        assert "wall_clock_s" in rep
        assert rep["artifact"]["path"] == str(out)
        blocks = parse_decomposition(out.read_text())
        assert len(blocks) == 12
        assert b"wall_clock" not in out.read_bytes()

    def test_divisibility_exit(self, capsys):
        code, rep = run_json(["build", "--q", "3", "--r", "2", "--n", "8"], capsys)
        assert code == 2
        assert rep["error"]["kind"] == "divisibility"

    def test_failure_names_stage(self, capsys):
        code, rep = run_json(
            ["build", "--q", "3", "--r", "2", "--n", "13", "--rho", "1/2",
             "--attempts", "2"],
            capsys,
        )
        assert code == 3
        assert rep["outcome"] == "failed"
        assert rep["failure_stage"]
        assert all(a["ok"] is False for a in rep["attempts"])

    def test_byte_identical_reruns(self, tmp_path, capsys):
        outs = []
        for name in ("a.txt", "b.txt"):
            path = tmp_path / name
            code, _ = run(
                ["build", "--q", "3", "--r", "2", "--n", "13", "--seed", "4",
                 "--out", str(path)],
                capsys,
            )
            assert code == 0
            outs.append(path.read_bytes())
        assert outs[0] == outs[1]

    def test_built_design_passes_verify(self, tmp_path, capsys):
        design = tmp_path / "sts13.txt"
        graph = tmp_path / "k13.txt"
        code, _ = run(
            ["build", "--q", "3", "--r", "2", "--n", "13", "--out", str(design)],
            capsys,
        )
        assert code == 0
        graph.write_text(format_rgraph(RGraph.complete(13, 2)))
        code, rep = run_json(["verify", str(graph), str(design)], capsys)
        assert code == 0
        assert rep["ok"] and rep["divisible"]["ok"]


class TestVerify:
    @pytest.fixture()
    def fano(self, tmp_path, capsys):
        graph = tmp_path / "k7.txt"
        design = tmp_path / "fano.txt"
        graph.write_text(format_rgraph(RGraph.complete(7, 2)))
        code, _ = run(
            ["build", "--q", "3", "--r", "2", "--n", "7", "--out", str(design)],
            capsys,
        )
        assert code == 0
        return graph, design

    def test_ok(self, fano, capsys):
        graph, design = fano
        code, rep = run_json(["verify", str(graph), str(design)], capsys)
        assert code == 0 and rep["ok"]

    def test_duplicated_block_names_edge(self, fano, tmp_path, capsys):
        graph, design = fano
        text = design.read_text()
        first = text.splitlines()[0]
        bad = tmp_path / "dup.txt"
        bad.write_text(text + first + "\n")
        code, rep = run_json(["verify", str(graph), str(bad)], capsys)
        assert code == 3
        assert not rep["ok"]
        assert rep["violation"]["witness"]

    def test_truncated_file_reports_line(self, fano, tmp_path, capsys):
        graph, design = fano
        bad = tmp_path / "trunc.txt"
        bad.write_text(design.read_text() + "5 6\n")
        code, rep = run_json(["verify", str(graph), str(bad)], capsys)
        assert code == 4
        assert "line" in rep["error"]["message"]

    def test_missing_file(self, fano, capsys):
        graph, _ = fano
        code, rep = run_json(["verify", str(graph), "/nonexistent/d.txt"], capsys)
        assert code == 4


class TestSimulate:
    def test_nibble_csv_determinism(self, tmp_path, capsys):
        outs = []
        for name in ("n1.csv", "n2.csv"):
            path = tmp_path / name
            code, rep = run_json(
                ["simulate", "nibble", "--n", "30", "--q", "3", "--r", "2",
                 "--seed", "1", "--out", str(path)],
                capsys,
            )
            assert code == 0
            assert rep["selected"] > 0
            outs.append(path.read_bytes())
        assert outs[0] == outs[1]
        assert outs[0].startswith(b"i,")

    def test_nibble_csv_stdout_matches_artifact(self, tmp_path, capsys):
        path = tmp_path / "n.csv"
        code, out = run(
            ["simulate", "nibble", "--n", "30", "--seed", "1",
             "--out", str(path), "--format", "csv"],
            capsys,
        )
        assert code == 0
        assert out.encode() == path.read_bytes()

    def test_reserve_certificate(self, tmp_path, capsys):
        path = tmp_path / "cert.json"
        code, rep = run_json(
            ["simulate", "reserve", "--n", "200", "--q", "3", "--r", "2",
             "--rho", "0.0278", "--seed", "7", "--out", str(path)],
            capsys,
        )
        assert code == 0
        assert rep["bounded"] is True
        assert rep["extension_counts"]["min"] is not None
        payload = json.loads(path.read_text())
        assert payload["ok"] == rep["ok"]

    def test_process_cover_abort_is_data(self, capsys):
        # seed 29 samples an empty reserve, so the first root cannot extend
        code, rep = run_json(
            ["simulate", "process", "--type", "cover", "--n", "8", "--q", "3",
             "--r", "2", "--rho", "0.99", "--seed", "29", "--count", "3"],
            capsys,
        )
        assert code == 0
        assert rep["reserve_edges"] == 0
        assert rep["completed"] is False
        assert rep["abort_index"] == 1
        assert rep["images"] == 0

    def test_process_window(self, capsys):
        code, rep = run_json(
            ["simulate", "process", "--type", "window", "--n", "40", "--q", "3",
             "--r", "2", "--rho", "0.2", "--seed", "1", "--count", "4"],
            capsys,
        )
        assert code == 0
        assert rep["type"] == "window"
        assert rep["roots"] == 4


class TestDumps:
    def test_decode_json(self, capsys):
        code, rep = run_json(["decode", "--q", "3", "--r", "2"], capsys)
        assert code == 0
        assert rep["N"] == 6
        assert rep["entries"] == 10
        assert rep["max_coefficient"] <= 2 ** 3 * 2

    def test_decode_csv(self, capsys):
        code, out = run(["decode", "--q", "3", "--r", "2", "--format", "csv"], capsys)
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "clique,coeff"
        assert len(lines) == 11

    def test_decode_text(self, capsys):
        code, out = run(["decode", "--q", "3", "--r", "2", "--format", "text"], capsys)
        assert code == 0
        assert "N: 6" in out

    def test_omega_dump(self, capsys):
        code, rep = run_json(["omega", "--q", "3", "--r", "2"], capsys)
        assert code == 0
        assert rep["valid"] is True
        assert rep["edges"] == 171
        assert rep["upsilon_plus"] == rep["upsilon_minus"] == 57

    def test_boost_half_sums_exact(self, capsys):
        code, rep = run_json(
            ["boost", "--n", "20", "--q", "3", "--r", "2", "--seed", "2"],
            capsys,
        )
        assert code == 0
        assert rep["all_exact"] is True
        assert rep["positivity"]["ok"] is True

    def test_report_dir_env(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv(cli.REPORT_DIR_ENV, str(tmp_path))
        code, rep = run_json(["decode", "--q", "3", "--r", "2"], capsys)
        assert code == 0
        assert rep["artifact"]["path"] == str(tmp_path / "decoder-q3r2.json")
        assert (tmp_path / "decoder-q3r2.json").exists()


@pytest.fixture(scope="module")
def book_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli-absorber") / "book.json"
    code = cli.main(
        ["absorber", "build", "--q", "2", "--r", "1", "--n", "4000",
         "--rho", "0.85", "--seed", "5", "--out", str(path)]
    )
    assert code == 0
    return path


class TestAbsorberCommands:
    def test_build_report(self, book_path, capsys):
        capsys.readouterr()
        code, rep = run_json(
            ["absorber", "build", "--q", "2", "--r", "1", "--n", "4000",
             "--rho", "0.85", "--seed", "5"],
            capsys,
        )
        assert code == 0
        assert rep["base_cliques"] >= 3
        assert rep["copies"] > 0
        assert rep["caveats"]

    def test_solve_round_trip(self, book_path, tmp_path, capsys):
        book = book_from_json(book_path.read_text())
        L = random_divisible_leave(book, derive_rng(1, "cli-leave"))
        leave = tmp_path / "leave.txt"
        leave.write_text(format_intvector(L))
        out = tmp_path / "absorbed.txt"
        code, rep = run_json(
            ["absorber", "solve", "--book", str(book_path),
             "--leave", str(leave), "--out", str(out)],
            capsys,
        )
        assert code == 0
        assert rep["verified"] is True
        assert rep["design_size"] == len(parse_decomposition(out.read_text()))

    def test_solve_rejects_indivisible(self, book_path, tmp_path, capsys):
        book = book_from_json(book_path.read_text())
        edge = sorted(book.R.edges)[0]
        leave = tmp_path / "odd.txt"
        leave.write_text(f"+1: {edge[0]}\n")
        code, rep = run_json(
            ["absorber", "solve", "--book", str(book_path), "--leave", str(leave)],
            capsys,
        )
        assert code == 2

    def test_solve_rejects_foreign_support(self, book_path, tmp_path, capsys):
        leave = tmp_path / "foreign.txt"
        leave.write_text("+1: 1\n+1: 2\n")
        code, rep = run_json(
            ["absorber", "solve", "--book", str(book_path), "--leave", str(leave)],
            capsys,
        )
        assert code == 5

    def test_build_stage_failure_exit(self, capsys):
        code, rep = run_json(
            ["absorber", "build", "--q", "2", "--r", "1", "--n", "150",
             "--rho", "0.6", "--seed", "0"],
            capsys,
        )
        assert code == 3
        assert rep["error"]["kind"].startswith("stage:")


class TestUsageErrors:
    def test_unknown_command(self, capsys):
        code, rep = run_json(["conjure"], capsys)
        assert code == 5

    def test_bad_flag_value(self, capsys):
        code, rep = run_json(["build", "--q", "three", "--n", "7"], capsys)
        assert code == 5

    def test_bad_fraction(self, capsys):
        code, rep = run_json(
            ["build", "--q", "3", "--r", "2", "--n", "7", "--rho", "zero"],
            capsys,
        )
        assert code == 5

    def test_csv_rejected_where_undefined(self, capsys):
        code, rep = run_json(
            ["simulate", "reserve", "--n", "30", "--format", "csv"], capsys
        )
        assert code == 5
