import json
import subprocess
import sys

import numpy as np
import pytest

from mstem.cli import DataError, ingest_csv, main
from mstem.noise import generate_noise
from mstem.signal import make_scenario


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def scenario4_csv(tmp_path):
    sig, truth = make_scenario(4, slope_change=0.3, jump=30.0, alt_slope=0.15)
    y = sig.sampled() + generate_noise(3000, 1.0, 1.0, seed=2)
    path = tmp_path / "series.csv"
    path.write_text("t,y\n" + "".join(f"{i + 1},{float(v)!r}\n" for i, v in enumerate(y)))
    return path, sig, truth


class TestIngest:
    def test_single_column(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("1.0\n2.0\n3.0")
        y, origin = ingest_csv(p)
        assert list(y) == [1.0, 2.0, 3.0] and origin == 1.0

    def test_header_and_time(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("t,y\n5,0.5\n6,0.25\n")
        y, origin = ingest_csv(p)
        assert list(y) == [0.5, 0.25] and origin == 5.0

    def test_gap_names_row(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("t,y\n1,0\n2,0\n4,0\n")
        with pytest.raises(DataError, match="line 4"):
            ingest_csv(p)

    def test_non_numeric_row(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("1\n2\nabc\n")
        with pytest.raises(DataError, match="line 3"):
            ingest_csv(p)

    def test_ragged(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("1,2\n2\n")
        with pytest.raises(DataError, match="line 2"):
            ingest_csv(p)

    def test_missing(self, tmp_path):
        with pytest.raises(DataError):
            ingest_csv(tmp_path / "nope.csv")


class TestDetect:
    def test_mixture(self, scenario4_csv, capsys):
        path, _, truth = scenario4_csv
        code, out, _ = run(["detect", "--input", str(path), "--mode", "mixture", "--sigma0", "1"], capsys)
        assert code == 0
        doc = json.loads(out)
        assert doc["schema"] == "mstem/1"
        types = [d["type"] for d in doc["detections"]]
        assert types == [t.kind.value for t in truth]
        locs = np.array([d["location"] for d in doc["detections"]])
        assert np.max(np.abs(locs - [t.location for t in truth])) < 10
        assert set(doc["estimated_sigma0"]) == {"TypeI", "TypeII"}

    def test_pure_noise(self, tmp_path, capsys):
        p = tmp_path / "noise.csv"
        p.write_text("\n".join(repr(float(v)) for v in generate_noise(1500, 1.0, 1.0, seed=1)))
        code, out, _ = run(["detect", "--input", str(p), "--mode", "type1"], capsys)
        assert code == 0
        assert len(json.loads(out)["detections"]) <= 2

    def test_missing_input(self, tmp_path, capsys):
        code, _, err = run(["detect", "--input", str(tmp_path / "missing.csv")], capsys)
        assert code == 3 and "data error" in err

    def test_no_input(self, capsys):
        assert run(["detect"], capsys)[0] == 3

    def test_too_short(self, tmp_path, capsys):
        p = tmp_path / "short.csv"
        p.write_text("\n".join(["0"] * 50))
        assert run(["detect", "--input", str(p)], capsys)[0] == 3

    def test_bad_alpha(self, scenario4_csv, capsys):
        path, _, _ = scenario4_csv
        assert run(["detect", "--input", str(path), "--alpha", "1.5"], capsys)[0] == 2

    def test_bad_flag(self, capsys):
        assert run(["detect", "--bogus"], capsys)[0] == 2

    def test_output_file(self, scenario4_csv, tmp_path, capsys):
        path, _, _ = scenario4_csv
        out = tmp_path / "det.json"
        code, stdout, _ = run(["detect", "--input", str(path), "--sigma0", "1", "--output", str(out)], capsys)
        assert code == 0 and stdout == ""
        assert json.loads(out.read_text())["schema"] == "mstem/1"


class TestEvaluate:
    def test_round_trip(self, scenario4_csv, tmp_path, capsys):
        path, sig, _ = scenario4_csv
        det = tmp_path / "det.json"
        truth = tmp_path / "truth.json"
        truth.write_text(sig.to_json())
        assert run(["detect", "--input", str(path), "--sigma0", "1", "--output", str(det)], capsys)[0] == 0
        args = ["evaluate", "--input", str(det), "--truth", str(truth)]
        code, first, _ = run(args, capsys)
        assert code == 0
        rep = json.loads(first)["report"]
        assert rep["fdp"] == 0.0 and rep["power"] == 1.0 and rep["J"] == 18
        # re-reading the same document scores identically
        assert run(args, capsys)[1] == first

    def test_scenario_truth(self, scenario4_csv, tmp_path, capsys):
        path, _, _ = scenario4_csv
        det = tmp_path / "det.json"
        run(["detect", "--input", str(path), "--sigma0", "1", "--output", str(det)], capsys)
        code, out, _ = run(["evaluate", "--input", str(det), "--scenario", "4"], capsys)
        assert code == 0 and json.loads(out)["report"]["J"] == 18

    def test_bad_document(self, tmp_path, capsys):
        p = tmp_path / "x.json"
        p.write_text("{}")
        assert run(["evaluate", "--input", str(p)], capsys)[0] == 3


class TestSimulate:
    def test_bytes_stable(self, tmp_path, capsys):
        args = ["simulate", "--scenario", "1", "--reps", "1", "--seed", "7", "--threads", "1"]
        a = run(args + ["--csv", str(tmp_path / "a.csv")], capsys)
        b = run(args + ["--csv", str(tmp_path / "b.csv")], capsys)
        assert a[0] == 0 and a[1] == b[1]
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        doc = json.loads(a[1])
        assert doc["schema"] == "mstem/1" and doc["summary"]["n"] == 1

    def test_sweep(self, tmp_path, capsys):
        csv = tmp_path / "sweep.csv"
        args = ["simulate", "--scenario", "2", "--reps", "2", "--snr-sweep", "20:40:2", "--threads", "1", "--csv", str(csv)]
        code, out, _ = run(args, capsys)
        assert code == 0
        assert len(json.loads(out)["sweep"]) == 2
        lines = csv.read_text().splitlines()
        assert lines[0] == "snr,metric,value" and len(lines) == 1 + 2 * 5

    def test_bad_sweep(self, capsys):
        assert run(["simulate", "--snr-sweep", "1:2"], capsys)[0] == 2

    def test_bad_scenario(self, capsys):
        assert run(["simulate", "--scenario", "9"], capsys)[0] == 2


class TestTheory:
    def test_values(self, capsys):
        code, out, _ = run(["theory", "--A", str(1 / 150), "--dk", "0.1"], capsys)
        assert code == 0
        doc = json.loads(out)
        assert doc["sigma"]["1"] == pytest.approx(0.011788, abs=1e-6)
        assert doc["extrema_density"]["1"] == pytest.approx(0.05008, abs=1e-5)
        assert doc["extrema_density"]["2"] == pytest.approx(0.05925, abs=1e-5)
        assert doc["eta"]["1"] == pytest.approx(0.774597, abs=1e-6)
        assert doc["eta"]["2"] == pytest.approx(0.845154, abs=1e-6)
        assert doc["fdr_limit"]["TypeI"] == pytest.approx(0.0403, abs=1e-4)
        assert doc["snr"]["value"] == pytest.approx(2.777, abs=1e-3)

    def test_eta_independent_of_bandwidth(self, capsys):
        doc = json.loads(run(["theory", "--gamma", "3", "--nu", "7"], capsys)[1])
        assert doc["eta"]["2"] == pytest.approx(0.845154, abs=1e-6)

    def test_dense_limit_is_config_error(self, capsys):
        assert run(["theory", "--A", "0.02"], capsys)[0] == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "mstem", "theory"], capture_output=True, text=True, check=True)
    assert json.loads(out.stdout)["schema"] == "mstem/1"
