from __future__ import annotations

import json
import math
import subprocess
import sys

import numpy as np
import pytest

from fracmc.cli import main, resolve_config
from fracmc.fileio import read_csv_rows
from fracmc.rng import PseudoSource


def run(tmp_path, *args, out="out"):
    d = tmp_path / out
    code = main(list(args) + ["--out", str(d)])
    return code, d


def files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


# ---------------------------------------------------------------- gen-fbm


def test_gen_fbm_outputs(tmp_path, capsys):
    code, d = run(tmp_path, "gen-fbm", "--H", "0.1", "--T", "0.5", "--n", "50", "--N", "2000",
                  "--scheme", "hybrid", "--seed", "42", "--write-cov")
    assert code == 0
    header, rows = read_csv_rows(d / "errors.csv")
    assert header == ["N", "H", "T", "n", "eps1", "eps2", "eps3", "source"]
    assert rows[0][0] == "2000" and rows[0][-1] == "pseudo"
    assert all(float(v) >= 0 for v in rows[0][4:7])
    assert {"moments.csv", "errors.json", "covariance.csv", "manifest.json"} <= set(files(d))
    assert "eps1=" in capsys.readouterr().out


def test_gen_fbm_reproducible_and_thread_invariant(tmp_path):
    args = ["gen-fbm", "--n", "32", "--N", "9000", "--seed", "7", "--scheme", "davies-harte",
            "--write-paths", "bin"]
    _, a = run(tmp_path, *args, "--threads", "1", out="a")
    _, b = run(tmp_path, *args, "--threads", "3", out="b")
    fa, fb = files(a), files(b)
    fa.pop("manifest.json"), fb.pop("manifest.json")
    assert fa == fb


def test_rerun_from_manifest(tmp_path):
    _, a = run(tmp_path, "gen-fbm", "--n", "20", "--N", "500", "--seed", "3", "--H", "0.3",
               out="a")
    _, b = run(tmp_path, "gen-fbm", "--config", str(a / "manifest.json"), out="b")
    assert files(a) == files(b)


def test_cholesky_guard(tmp_path, capsys):
    code, _ = run(tmp_path, "gen-fbm", "--scheme", "cholesky", "--n", "5000")
    assert code == 1
    assert "2048" in capsys.readouterr().err


@pytest.mark.parametrize("args", [["gen-fbm", "--H", "1.2"], ["gen-fbm", "--N", "0"],
                                  ["gen-fbm", "--scheme", "wavelet"], ["no-such-command"]])
def test_config_errors_exit_1(tmp_path, args):
    assert run(tmp_path, *args)[0] == 1


def test_entropy_file_too_small(tmp_path, words_file, capsys):
    path = words_file(PseudoSource(1).words(1000))
    code, _ = run(tmp_path, "gen-fbm", "--n", "10", "--N", "100", "--scheme", "davies-harte",
                  "--entropy-file", str(path))
    assert code == 2
    assert "2000" in capsys.readouterr().err


def test_entropy_manifest(tmp_path, words_file):
    path = words_file(PseudoSource(1).words(5000))
    code, d = run(tmp_path, "gen-fbm", "--n", "10", "--N", "100", "--scheme", "davies-harte",
                  "--entropy-file", str(path), "--entropy-offset", "16")
    assert code == 0
    man = json.loads((d / "manifest.json").read_text())
    assert man["entropy"]["first_word"] == 16 and man["entropy"]["next_unused_word"] == 2016
    assert man["config"]["seed"] is None


# ---------------------------------------------------------------- configuration


def test_config_precedence(tmp_path, monkeypatch):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("# comment\nH = 0.3\nn = 40\nscheme = davies-harte\n")
    monkeypatch.setenv("FRACMC_OUTPUT_DIR", str(tmp_path / "envout"))
    cfg = resolve_config(["gen-fbm", "--config", str(cfg_file), "--n", "80"])
    assert cfg["H"] == 0.3 and cfg["n"] == 80 and cfg["scheme"] == "davies-harte"
    assert cfg["T"] == 0.5 and cfg["out"] == str(tmp_path / "envout")


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("FRACMC_OUTPUT_DIR", str(tmp_path / "envout"))
    assert main(["rand-check", "--words", "10000", "--seed", "1"]) == 0
    assert (tmp_path / "envout" / "sanity.json").exists()


def test_bad_config_file(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("H 0.3\n")
    assert run(tmp_path, "gen-fbm", "--config", str(bad))[0] == 1
    bad.write_text("colour = blue\n")
    assert run(tmp_path, "gen-fbm", "--config", str(bad))[0] == 1
    assert run(tmp_path, "gen-fbm", "--config", str(tmp_path / "missing.cfg"))[0] == 1


# ---------------------------------------------------------------- estimate-hurst


def test_estimate_hurst_rfsv(tmp_path):
    code, d = run(tmp_path, "estimate-hurst", "--simulate-rfsv", "--H", "0.14", "--n", "5000",
                  "--seed", "11")
    assert code == 0
    res = json.loads((d / "hurst.json").read_text())
    assert abs(res["scaling"]["H_hat"] - 0.14) <= 0.03
    header, rows = read_csv_rows(d / "surface.csv")
    assert header == ["q", "delta", "m"] and len(rows) == 5 * 30
    assert read_csv_rows(d / "zeta.csv")[0] == ["q", "zeta", "r2"]
    assert len(read_csv_rows(d / "logvol.csv")[1]) == 5001


def test_estimate_hurst_from_csv(tmp_path):
    rng = np.random.default_rng(3)
    rv = np.exp(2 * np.cumsum(rng.normal(0, 0.05, 3000)) - 9)
    src = tmp_path / "rv.csv"
    src.write_text("date,rv\n" + "".join(f"d{i},{float(v)!r}\n" for i, v in enumerate(rv)))
    code, d = run(tmp_path, "estimate-hurst", "--input", str(src), "--column", "rv",
                  "--transform", "half-log")
    assert code == 0
    res = json.loads((d / "hurst.json").read_text())
    assert abs(res["scaling"]["H_hat"] - 0.5) < 0.1 and res["samples"] == 3000


def test_estimate_hurst_constant_series(tmp_path, capsys):
    src = tmp_path / "c.csv"
    src.write_text("\n".join(["1.5"] * 500))
    assert run(tmp_path, "estimate-hurst", "--input", str(src))[0] == 2
    assert "DegenerateSeries" in capsys.readouterr().err


def test_estimate_hurst_needs_input(tmp_path):
    assert run(tmp_path, "estimate-hurst")[0] == 1


# ---------------------------------------------------------------- price-tvo


def test_price_tvo_44_strikes(tmp_path):
    code, d = run(tmp_path, "price-tvo", "--n", "50", "--N", "2000", "--strikes", "0.6:1.4:44",
                  "--seed", "5")
    assert code == 0
    for side in ("call", "put"):
        header, rows = read_csv_rows(d / f"prices_{side}.csv")
        assert header[:15] == ["K", "T", "side", "price", "se", "ci_lo", "ci_hi", "N", "n", "H",
                               "rho", "nu", "sigma0", "sigma_bar", "source_label"]
        assert len(rows) == 44 and {r[2] for r in rows} == {side}


def test_price_tvo_oracle_column(tmp_path):
    code, d = run(tmp_path, "price-tvo", "--nu", "0", "--n", "50", "--N", "20000",
                  "--strikes", "0.8,1,1.25", "--side", "call", "--seed", "6")
    assert code == 0
    header, rows = read_csv_rows(d / "prices_call.csv")
    zi = header.index("z_score")
    assert all(abs(float(r[zi])) <= 3 for r in rows)


def test_price_tvo_convergence(tmp_path):
    code, d = run(tmp_path, "price-tvo", "--n", "20", "--N", "1000", "--convergence",
                  "1000,5000,10000", "--side", "put", "--seed", "7")
    assert code == 0
    header, rows = read_csv_rows(d / "convergence_put.csv")
    assert header == ["N", "price", "se", "ci_lo", "ci_hi"]
    assert [r[0] for r in rows] == ["1000", "5000", "10000"]
    assert run(tmp_path, "price-tvo", "--convergence", "5000,1000", out="bad")[0] == 1


def test_price_tvo_entropy_too_small(tmp_path, words_file, capsys):
    path = words_file(PseudoSource(2).words(10**4))
    code, _ = run(tmp_path, "price-tvo", "--n", "50", "--N", "1000", "--entropy-file", str(path))
    assert code == 2
    err = capsys.readouterr().err
    assert "100000" in err and "10000" in err


# ---------------------------------------------------------------- rand-check


def test_rand_check_pass_and_export(tmp_path, capsys):
    code, d = run(tmp_path, "rand-check", "--seed", "2023", "--export", "1000000")
    assert code == 0
    assert (d / "words.bin").stat().st_size == 4_000_000
    rep = json.loads((d / "sanity.json").read_text())
    assert rep["all_pass"] is True


def test_rand_check_zero_file_fails(tmp_path, words_file):
    path = words_file(np.zeros(20000, dtype=np.uint32))
    code, d = run(tmp_path, "rand-check", "--entropy-file", str(path), "--words", "20000")
    assert code == 2
    assert json.loads((d / "sanity.json").read_text())["all_pass"] is False


def test_rand_check_export_passthrough(tmp_path, words_file):
    path = words_file(PseudoSource(9).words(30000))
    code, d = run(tmp_path, "rand-check", "--entropy-file", str(path), "--words", "20000",
                  "--export", "30000")
    assert code == 0
    assert (d / "words.bin").read_bytes() == path.read_bytes()


def test_truncated_entropy_file(tmp_path):
    p = tmp_path / "t.bin"
    p.write_bytes(b"\x00" * 4001)
    assert run(tmp_path, "rand-check", "--entropy-file", str(p))[0] == 2


# ---------------------------------------------------------------- realized-var


def _write_prices(path, closes):
    path.write_text("date,open,close\n"
                    + "".join(f"2020-{i:04d},0,{float(c)!r}\n" for i, c in enumerate(closes)))


def test_realized_var_constant(tmp_path):
    src = tmp_path / "px.csv"
    _write_prices(src, [100.0] * 60)
    code, d = run(tmp_path, "realized-var", "--input", str(src), "--window", "21")
    assert code == 0
    header, rows = read_csv_rows(d / "realized_vol.csv")
    assert header == ["date", "realized_vol"] and len(rows) == 39
    assert all(float(r[1]) == 0.0 for r in rows)


def test_realized_var_gbm(tmp_path):
    rng = np.random.default_rng(12)
    r = rng.normal(-0.5 * 0.04 / 252, 0.2 / math.sqrt(252), 2520)
    src = tmp_path / "px.csv"
    _write_prices(src, 100 * np.exp(np.concatenate([[0.0], np.cumsum(r)])))
    code, d = run(tmp_path, "realized-var", "--input", str(src))
    assert code == 0
    vols = [float(r[1]) for r in read_csv_rows(d / "realized_vol.csv")[1]]
    assert 0.17 <= np.median(vols) <= 0.23


def test_realized_var_errors(tmp_path, capsys):
    src = tmp_path / "px.csv"
    _write_prices(src, [1.0, 1.1, 1.2])
    assert run(tmp_path, "realized-var", "--input", str(src), "--window", "21")[0] == 2
    assert "WindowTooLong" in capsys.readouterr().err
    assert run(tmp_path, "realized-var")[0] == 1
    assert run(tmp_path, "realized-var", "--input", str(tmp_path / "none.csv"))[0] == 2


# ---------------------------------------------------------------- entry points


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "fracmc", "--version"], capture_output=True,
                         text=True)
    assert res.returncode == 0 and res.stdout.startswith("fracmc ")
    res = subprocess.run([sys.executable, "-m", "fracmc", "gen-fbm", "--n", "10", "--N", "100",
                          "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
