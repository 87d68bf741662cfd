import csv
import io
import json
import math
import os

import pytest

from hslab import exponents as ex
from hslab.cli import load_config, main, UsageError
from hslab.radial import RadialField, make_grid
from hslab.solver import SolutionBundle, Status

BUBBLE = "[params]\nn = 3\nalpha = 2\np = 5\nq = 5\nsigma1 = 0\nsigma2 = 0\n"
COARSE = "[grid]\nN = 512\n"


def write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_classify_bubble(tmp_path, capsys):
    code, out, _ = run(capsys, "classify", "--config", write(tmp_path, BUBBLE))
    assert code == 0
    d = json.loads(out)
    assert d["schema_version"] == 1
    assert d["regime"]["kind"] == "Critical"
    assert d["rate_laws"]["slow"] == {"u": 0.5, "v": 0.5}


def test_classify_rejects_small_pq(tmp_path, capsys):
    cfg = BUBBLE.replace("p = 5", "p = 0.5").replace("q = 5", "q = 1")
    code, _, err = run(capsys, "classify", "--config", write(tmp_path, cfg))
    assert code == 2 and "pq" in err


@pytest.mark.parametrize("text", [BUBBLE.replace("q = 5\n", ""),
                                  BUBBLE + "colour = red\n",
                                  BUBBLE + "[nowhere]\nx = 1\n",
                                  BUBBLE.replace("p = 5", "p = five"),
                                  "no section header\n"])
def test_config_errors_exit_2(tmp_path, capsys, text):
    code, _, err = run(capsys, "classify", "--config", write(tmp_path, text))
    assert code == 2 and err


def test_usage_errors(capsys):
    assert run(capsys, "frobnicate")[0] == 2
    assert run(capsys, "classify", "--jobs", "0")[0] == 2
    assert run(capsys, "classify", "--config", "/nonexistent/x.ini")[0] == 2


def test_load_config_types(tmp_path):
    cfg = load_config(write(tmp_path, BUBBLE + "[sweep]\nn = 3\nalpha = 2\np = 4, 5\n"
                            "q = 5\nsigma1 = 0\nsigma2 = 0\nsolve = no\n"))
    assert cfg["params"]["p"] == 5.0
    assert cfg["sweep"]["p"] == [4.0, 5.0] and cfg["sweep"]["solve"] is False
    with pytest.raises(UsageError):
        load_config(write(tmp_path, "[grid]\nN = 1.5\n", "bad.ini"))


@pytest.fixture(scope="module")
def solved(tmp_path_factory):
    d = tmp_path_factory.mktemp("solve")
    cfg = d / "run.ini"
    cfg.write_text(BUBBLE + COARSE)
    out = d / "bubble.json"
    assert main(["solve", "--config", str(cfg), "--out", str(out)]) == 0
    return out


def test_solve_writes_bundle(solved):
    d = json.loads(solved.read_text())
    assert d["schema_version"] == 1 and d["status"] == "Converged"
    assert len(d["u"]["values"]) == 512


def test_solve_subcritical_exit_3(tmp_path, capsys):
    cfg = BUBBLE.replace("p = 5", "p = 4").replace("q = 5", "q = 4") + COARSE
    code, _, err = run(capsys, "solve", "--config", write(tmp_path, cfg),
                       "--out", str(tmp_path / "s.json"))
    assert code == 3 and "NoFixedPoint" in err
    assert json.loads((tmp_path / "s.json").read_text())["status"].startswith("NoFixedPoint")


def test_solve_iteration_limit_exit_4(tmp_path, capsys):
    cfg = BUBBLE + COARSE + "[solver]\nmax_iterations = 2\ninit = slow\n"
    code, _, _ = run(capsys, "solve", "--config", write(tmp_path, cfg),
                     "--out", str(tmp_path / "s.json"))
    assert code == 4


def test_solve_unwritable_output(tmp_path, capsys):
    code, _, err = run(capsys, "solve", "--config", write(tmp_path, BUBBLE),
                       "--out", str(tmp_path / "missing" / "s.json"))
    assert code == 2 and "writable" in err


def test_solve_rejects_bad_init(tmp_path, capsys):
    cfg = BUBBLE + "[solver]\ninit = gaussian\n"
    assert run(capsys, "solve", "--config", write(tmp_path, cfg))[0] == 2


def test_analyze_bubble(solved, tmp_path, capsys):
    out = tmp_path / "a.json"
    code, _, _ = run(capsys, "analyze", str(solved), "--out", str(out))
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["schema_version"] == 1
    assert rep["rates"]["verdict"] == "FastDecay"
    assert rep["constants"]["A0"] == pytest.approx((3 / (4 * math.pi)) ** 0.25, rel=1e-3)
    rows = list(csv.reader(io.StringIO((tmp_path / "a.csv").read_text())))
    assert rows[0][0] == "r" and len(rows) == 513


def test_analyze_slow_synthetic(tmp_path, capsys):
    g = make_grid(1e-4, 1e4, 512)
    slow = lambda r: (1 + r * r) ** -0.25
    f = RadialField.from_function(g, slow, theta=0.5)
    b = SolutionBundle(ex.validate(3, 2, 5, 5, 0, 0), f, f, Status.CONVERGED, (),
                       (math.nan, math.nan))
    path = tmp_path / "slow.json"
    path.write_text(json.dumps(b.to_dict()))
    code, out, _ = run(capsys, "analyze", str(path))
    assert code == 0
    rep = json.loads(out)
    assert rep["rates"]["verdict"] == "SlowDecay"
    assert "DivergentIntegral" in rep["pohozaev"]["error"]


def test_analyze_bad_files(solved, tmp_path, capsys):
    cut = tmp_path / "cut.json"
    cut.write_text(solved.read_text()[:500])
    assert run(capsys, "analyze", str(cut))[0] == 2
    assert run(capsys, "analyze", str(tmp_path / "absent.json"))[0] == 2
    assert run(capsys, "analyze")[0] == 2
    d = json.loads(solved.read_text())
    d["schema_version"] = 7
    old = tmp_path / "old.json"
    old.write_text(json.dumps(d))
    assert run(capsys, "analyze", str(old))[0] == 2


SWEEP = ("[sweep]\nn = 3\nalpha = 2\np = {p}\nq = {q}\nsigma1 = 0\nsigma2 = 0\n"
         "solve = {solve}\n")


def sweep_rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_sweep_grid_of_classifications(tmp_path, capsys):
    cfg = write(tmp_path, SWEEP.format(p="3, 4, 5", q="4, 5, 6", solve="no"))
    code, out, _ = run(capsys, "sweep", "--config", cfg)
    assert code == 0
    rows = sweep_rows(out)
    assert len(rows) == 9
    assert all(r["schema_version"] == "1" for r in rows)
    crit = [r for r in rows if r["p"] == "5.0" and r["q"] == "5.0"]
    assert crit[0]["regime"] == "Critical" and crit[0]["status"] == ""


def test_sweep_empty_range_is_header_only(tmp_path, capsys):
    cfg = write(tmp_path, SWEEP.format(p="", q="5", solve="no"))
    code, out, _ = run(capsys, "sweep", "--config", cfg)
    assert code == 0
    assert out.count("\n") == 1 and out.startswith("schema_version,")


def test_sweep_records_invalid_rows(tmp_path, capsys):
    cfg = write(tmp_path, SWEEP.format(p="0.1, 5", q="5", solve="no"))
    rows = sweep_rows(run(capsys, "sweep", "--config", cfg)[1])
    assert "DomainError" in rows[0]["error"] and rows[1]["error"] == ""


def test_sweep_solves_and_is_deterministic(tmp_path, capsys):
    cfg = write(tmp_path, SWEEP.format(p="4, 5", q="5", solve="yes") + COARSE)
    outs = []
    for jobs in ("1", "2", "1"):
        out = tmp_path / f"sweep{len(outs)}.csv"
        assert run(capsys, "sweep", "--config", cfg, "--jobs", jobs, "--out", str(out))[0] == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1] == outs[2]
    rows = sweep_rows(outs[0].decode())
    crit = rows[1]
    assert crit["regime"] == "Critical"
    assert crit["status"] == "Converged" and crit["verdict"] == "FastDecay"
    assert rows[0]["status"].startswith("NoFixedPoint")


HLS = "[hls]\nn = 3\nalpha = 2\nsigma1 = 0\nsigma2 = 0\nr = 1.2\n"


def test_hls_check_default(tmp_path, capsys):
    code, out, _ = run(capsys, "hls-check", "--config", write(tmp_path, HLS + COARSE))
    assert code == 0
    rep = json.loads(out)
    assert rep["schema_version"] == 1
    assert rep["check"]["valid"]
    assert rep["indices"]["s"] == pytest.approx(1.2)
    assert rep["dilation"]["variation"] <= 1e-6
    assert "brute" not in rep


def test_hls_check_bad_indices(tmp_path, capsys):
    bad = HLS.replace("sigma1 = 0", "sigma1 = 1.8").replace("r = 1.2", "r = 2")
    code, _, err = run(capsys, "hls-check", "--config", write(tmp_path, bad))
    assert code == 2 and "sigma1/n < 1 - 1/r" in err
    explicit = HLS + "s = 1.3\n"
    assert run(capsys, "hls-check", "--config", write(tmp_path, explicit, "e.ini"))[0] == 2


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
def test_hls_check_brute_row(tmp_path, capsys):
    code, out, _ = run(capsys, "hls-check", "--config", write(tmp_path, HLS + "brute = yes\n"))
    assert code == 0
    assert json.loads(out)["brute"]["rel_err"] <= 1e-5


def test_cache_flag_writes_table(tmp_path, capsys):
    cache = tmp_path / "cache"
    cache.mkdir()
    cfg = write(tmp_path, HLS.replace("alpha = 2", "alpha = 1.7") + COARSE)
    assert run(capsys, "hls-check", "--config", cfg, "--cache", str(cache))[0] == 0
    assert os.listdir(cache)
