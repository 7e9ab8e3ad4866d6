import subprocess
import sys

import pytest

from stackdet.cli import (
    EXIT_COVERAGE,
    EXIT_FORMAT,
    EXIT_IO,
    EXIT_OK,
    EXIT_VALIDATION,
    main,
)

SYNTH_ARGS = [
    "synth", "--blacklist", "6", "--background", "8", "--dim", "8",
    "--intra-std", "0.05", "--n-test", "60", "--seed", "21",
]


@pytest.fixture
def corpus_dir(tmp_path):
    out = tmp_path / "corpus"
    assert main(SYNTH_ARGS + ["--out", str(out)]) == EXIT_OK
    return out


class TestSynthCommand:
    def test_writes_expected_files(self, corpus_dir):
        names = {p.name for p in corpus_dir.iterdir()}
        assert "trn_blacklist.csv" in names
        assert "bl_matching.csv" in names
        assert "tst_key.csv" in names

    def test_matching_line_count(self, corpus_dir):
        lines = (corpus_dir / "bl_matching.csv").read_text().strip().splitlines()
        assert len(lines) == 6

    def test_byte_identical_runs(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        assert main(SYNTH_ARGS + ["--out", str(a)]) == EXIT_OK
        assert main(SYNTH_ARGS + ["--out", str(b)]) == EXIT_OK
        for path in a.iterdir():
            assert path.read_bytes() == (b / path.name).read_bytes()


class TestValidateCommand:
    def test_explicit_profile_passes(self, corpus_dir, capsys):
        code = main(
            [
                "validate", str(corpus_dir / "trn_blacklist.csv"),
                "--speakers", "6", "--utts-per-speaker", "3", "--total", "18",
            ]
        )
        assert code == EXIT_OK
        assert "PASS" in capsys.readouterr().out

    def test_deviation_fails(self, corpus_dir, capsys):
        code = main(
            [
                "validate", str(corpus_dir / "trn_blacklist.csv"),
                "--speakers", "7", "--utts-per-speaker", "3", "--total", "21",
            ]
        )
        assert code == EXIT_VALIDATION
        assert "FAIL" in capsys.readouterr().out

    def test_truncated_file_fails(self, corpus_dir, tmp_path, capsys):
        lines = (corpus_dir / "trn_blacklist.csv").read_text().splitlines()
        clipped = tmp_path / "clipped.csv"
        clipped.write_text("\n".join(lines[:-1]) + "\n")
        code = main(
            [
                "validate", str(clipped),
                "--speakers", "6", "--utts-per-speaker", "3", "--total", "18",
            ]
        )
        assert code == EXIT_VALIDATION

    def test_parse_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("not a valid line\n")
        assert main(["validate", str(bad)]) == EXIT_FORMAT

    def test_no_profile_just_reports(self, corpus_dir, capsys):
        code = main(["validate", str(corpus_dir / "tst_mix.csv")])
        assert code == EXIT_OK
        assert "no profile" in capsys.readouterr().out

    def test_matching_flag(self, corpus_dir, capsys):
        code = main(
            [
                "validate", str(corpus_dir / "tst_mix.csv"),
                "--matching", str(corpus_dir / "bl_matching.csv"),
            ]
        )
        assert code == EXIT_OK
        assert "6 blacklist speakers" in capsys.readouterr().out


def run_score(corpus_dir, out_path, *extra):
    return main(
        [
            "score",
            "--train-blacklist", str(corpus_dir / "trn_blacklist.csv"),
            "--matching", str(corpus_dir / "bl_matching.csv"),
            "--test", str(corpus_dir / "tst_mix.csv"),
            "--out", str(out_path),
            *extra,
        ]
    )


class TestScoreCommand:
    def test_submission_covers_test_set(self, corpus_dir, tmp_path):
        out = tmp_path / "sub.csv"
        assert run_score(corpus_dir, out) == EXIT_OK
        rows = out.read_text().strip().splitlines()
        test_lines = (corpus_dir / "tst_mix.csv").read_text().strip().splitlines()
        assert len(rows) == len(test_lines)
        for row in rows:
            assert len(row.split(",")) == 3

    def test_mnorm_off_same_coverage_different_scores(self, corpus_dir, tmp_path):
        full = tmp_path / "full.csv"
        off = tmp_path / "off.csv"
        assert run_score(corpus_dir, full, "--mnorm", "full") == EXIT_OK
        assert run_score(corpus_dir, off, "--mnorm", "off") == EXIT_OK
        ids_full = [line.split(",")[0] for line in full.read_text().splitlines()]
        ids_off = [line.split(",")[0] for line in off.read_text().splitlines()]
        assert ids_full == ids_off
        assert full.read_bytes() != off.read_bytes()

    def test_worker_count_does_not_change_output(self, corpus_dir, tmp_path):
        one = tmp_path / "w1.csv"
        four = tmp_path / "w4.csv"
        assert run_score(corpus_dir, one, "--workers", "1") == EXIT_OK
        assert run_score(corpus_dir, four, "--workers", "4") == EXIT_OK
        assert one.read_bytes() == four.read_bytes()

    def test_missing_matching_file(self, corpus_dir, tmp_path, capsys):
        code = main(
            [
                "score",
                "--train-blacklist", str(corpus_dir / "trn_blacklist.csv"),
                "--matching", str(corpus_dir / "nope.csv"),
                "--test", str(corpus_dir / "tst_mix.csv"),
                "--out", str(tmp_path / "sub.csv"),
            ]
        )
        assert code == EXIT_IO
        assert "nope.csv" in capsys.readouterr().err


class TestEvaluateCommand:
    @pytest.fixture
    def submission(self, corpus_dir, tmp_path):
        out = tmp_path / "sub.csv"
        assert run_score(corpus_dir, out) == EXIT_OK
        return out

    def test_machine_output(self, corpus_dir, submission, capsys):
        code = main(
            [
                "evaluate",
                "--submission", str(submission),
                "--key", str(corpus_dir / "tst_key.csv"),
                "--matching", str(corpus_dir / "bl_matching.csv"),
                "--machine",
            ]
        )
        assert code == EXIT_OK
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "top_s_eer=0.000000"
        assert out[1] == "top_1_eer=0.000000"
        assert out[2] == "trials=60"

    def test_human_output(self, corpus_dir, submission, capsys):
        code = main(
            [
                "evaluate",
                "--submission", str(submission),
                "--key", str(corpus_dir / "tst_key.csv"),
                "--matching", str(corpus_dir / "bl_matching.csv"),
            ]
        )
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "top-S EER" in out
        assert "top-1 EER" in out

    def test_det_out_writes_point_files(self, corpus_dir, submission, tmp_path, capsys):
        prefix = tmp_path / "plots" / "det"
        code = main(
            [
                "evaluate",
                "--submission", str(submission),
                "--key", str(corpus_dir / "tst_key.csv"),
                "--matching", str(corpus_dir / "bl_matching.csv"),
                "--det-out", str(prefix),
                "--machine",
            ]
        )
        assert code == EXIT_OK
        for suffix in ("top_s", "top_1"):
            path = tmp_path / "plots" / f"det_{suffix}.csv"
            assert path.read_text().startswith("theta,p_miss,p_fa\n")

    def test_coverage_mismatch_exit_code(self, corpus_dir, submission, tmp_path, capsys):
        clipped = tmp_path / "partial.csv"
        lines = submission.read_text().splitlines()
        clipped.write_text("\n".join(lines[:-1]) + "\n")
        code = main(
            [
                "evaluate",
                "--submission", str(clipped),
                "--key", str(corpus_dir / "tst_key.csv"),
                "--matching", str(corpus_dir / "bl_matching.csv"),
            ]
        )
        assert code == EXIT_COVERAGE
        assert "missing" in capsys.readouterr().err

    def test_malformed_submission_exit_code(self, corpus_dir, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("oops\n")
        code = main(
            [
                "evaluate",
                "--submission", str(bad),
                "--key", str(corpus_dir / "tst_key.csv"),
                "--matching", str(corpus_dir / "bl_matching.csv"),
            ]
        )
        assert code == EXIT_FORMAT


class TestDetCommand:
    def test_writes_both_curves(self, corpus_dir, tmp_path):
        sub = tmp_path / "sub.csv"
        assert run_score(corpus_dir, sub) == EXIT_OK
        code = main(
            [
                "det",
                "--submission", str(sub),
                "--key", str(corpus_dir / "tst_key.csv"),
                "--matching", str(corpus_dir / "bl_matching.csv"),
                "--out", str(tmp_path / "det"),
            ]
        )
        assert code == EXIT_OK
        assert (tmp_path / "det_top_s.csv").exists()
        assert (tmp_path / "det_top_1.csv").exists()


def test_console_script_help():
    result = subprocess.run(
        [sys.executable, "-m", "stackdet.cli", "--help"],
        capture_output=True, text=True,
    )
    assert result.returncode == 0
    assert "validate" in result.stdout
    assert "synth" in result.stdout
