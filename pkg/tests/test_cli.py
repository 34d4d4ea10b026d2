import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from rrgen.cli import main
from rrgen.numerics import RngStream, gauss_draw
from rrgen.sysid import InnovationModel, IoRecord, MarkovEstimate, identify


# tau carries L*l degrees of freedom but is thresholded at (L-1)*l, so the
# nominal no-fault rate at L=20, l=1, alpha=0.005 is P(chi2_20 > 38.58) ~ 0.75%;
# finite identification data fattens the tail a little more.
NO_FAULT_CEILING = 0.02


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def predictor_data(tmp_path):
    """Fault-free identification record and a faulty detection record."""
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"model": "predictor", "n": 2000,
                               "fault": {"start": 400, "end": 700, "height": 5.0}}))
    assert run("simulate", "--config", cfg, "--seed", 1, "--no-fault", "--out", tmp_path / "id") == 0
    assert run("simulate", "--config", cfg, "--seed", 2, "--out", tmp_path / "det") == 0
    return tmp_path


class TestUsage:
    def test_no_command(self, capsys):
        assert run() == 2
        assert "usage" in capsys.readouterr().err

    def test_bare_subcommand(self, capsys):
        assert run("fx") == 2
        assert "usage: rrgen fx" in capsys.readouterr().err

    def test_seed_required(self, tmp_path, capsys):
        assert run("simulate", "--out", tmp_path) == 2
        assert "seed" in capsys.readouterr().err

    def test_missing_file_named(self, tmp_path, capsys):
        missing = tmp_path / "nope.csv"
        assert run("identify", "--data", missing, "--out", tmp_path) == 2
        assert str(missing) in capsys.readouterr().err

    def test_bad_config(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text('{"L": 1}')
        assert run("fx", "--config", cfg, "--seed", 0, "--out", tmp_path) == 4
        cfg.write_text("not json")
        assert run("fx", "--config", cfg, "--seed", 0, "--out", tmp_path) == 4

    def test_flags_override_config(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text('{"n": 50, "seed": 3}')
        assert run("simulate", "--config", cfg, "--n", 20, "--no-fault", "--out", tmp_path) == 0
        assert len(rows(tmp_path / "data.csv")) == 20

    def test_module_entry_point(self, tmp_path):
        out = subprocess.run([sys.executable, "-m", "rrgen", "simulate", "--seed", "4", "--n", "10",
                              "--no-fault", "--out", str(tmp_path)], capture_output=True, text=True)
        assert out.returncode == 0 and out.stdout.strip().endswith("data.csv")


class TestIdentify:
    def test_noiseless_static_gain_is_rejected(self, tmp_path, capsys):
        u = gauss_draw(RngStream(0), 100)
        IoRecord(u, 2 * u).to_csv(tmp_path / "d.csv")
        assert run("identify", "--data", tmp_path / "d.csv", "--p", 1, "--out", tmp_path) == 3
        assert "excitation" in capsys.readouterr().err

    def test_static_gain_d_block(self, tmp_path):
        rng = RngStream(0)
        u = gauss_draw(rng, 200)
        IoRecord(u, 2 * u + gauss_draw(rng, 200, 1e-4)).to_csv(tmp_path / "d.csv")
        assert run("identify", "--data", tmp_path / "d.csv", "--p", 1, "--out", tmp_path) == 0
        doc = json.loads((tmp_path / "markov.json").read_text())
        assert doc["schema_version"] == 1
        assert MarkovEstimate.from_dict(doc).D[0, 0] == pytest.approx(2.0, abs=1e-3)

    def test_matches_library_bit_for_bit(self, predictor_data):
        out = predictor_data / "id"
        assert run("identify", "--data", out / "data.csv", "--p", 4, "--out", out) == 0
        est, gram = identify(IoRecord.from_csv(out / "data.csv"), 4)
        doc = json.loads((out / "markov.json").read_text())
        assert np.array_equal(MarkovEstimate.from_dict(doc).xi_hat, est.xi_hat)
        assert np.array_equal(np.array(json.loads((out / "gram.json").read_text())["g"]), gram.g)

    def test_malformed_csv(self, tmp_path):
        (tmp_path / "d.csv").write_text("u_1,y_1\n1,oops\n")
        assert run("identify", "--data", tmp_path / "d.csv", "--out", tmp_path) == 3


class TestDetect:
    def identify(self, d, p=4):
        assert run("identify", "--data", d / "id" / "data.csv", "--p", p, "--out", d / "id") == 0

    def test_fault_profile(self, predictor_data):
        d = predictor_data
        self.identify(d)
        assert run("detect", "--data", d / "det" / "data.csv", "--markov", d / "id" / "markov.json",
                   "--L", 20, "--alpha", 0.005, "--sigma-e", 1.0, "--out", d / "det") == 0
        trace = rows(d / "det" / "trace.csv")
        k = np.array([int(r["k"]) for r in trace])
        alarm = np.array([r["alarm"] == "1" for r in trace])
        inside = (k >= 400) & (k < 700 + 19)
        assert alarm[inside].mean() > 0.9
        assert alarm[~inside].mean() <= NO_FAULT_CEILING

    def test_no_fault_rate(self, predictor_data):
        d = predictor_data
        self.identify(d)
        assert run("detect", "--data", d / "id" / "data.csv", "--markov", d / "id" / "markov.json",
                   "--L", 20, "--sigma-e", 1.0, "--out", d / "nf") == 0
        alarm = [r["alarm"] == "1" for r in rows(d / "nf" / "trace.csv")]
        assert np.mean(alarm) <= NO_FAULT_CEILING

    def test_exact_noise_free_data(self, predictor_data, tmp_path):
        # Noise-free records of a finite-order plant are exactly predictable,
        # so identification needs the noisy record; detection then runs on
        # the noise-free response of the same plant.
        self.identify(predictor_data)
        plant = InnovationModel.from_predictor(0.5, 1.0, 0.3, 1.0, 0.5, 1.0)
        u = gauss_draw(RngStream(3), 300)
        IoRecord(u, plant.simulate(u, None)[0].y).to_csv(tmp_path / "d.csv")
        assert run("detect", "--data", tmp_path / "d.csv", "--markov", predictor_data / "id" / "markov.json",
                   "--L", 10, "--sigma-e", 1.0, "--out", tmp_path) == 0
        assert not any(r["alarm"] == "1" for r in rows(tmp_path / "trace.csv"))

    def test_short_record(self, predictor_data, tmp_path):
        d = predictor_data
        self.identify(d)
        rec = IoRecord.from_csv(d / "det" / "data.csv")
        IoRecord(rec.u[:10], rec.y[:10]).to_csv(tmp_path / "short.csv")
        assert run("detect", "--data", tmp_path / "short.csv", "--markov", d / "id" / "markov.json",
                   "--L", 20, "--out", tmp_path) == 3


class TestSweep:
    def test_single_cell_and_determinism(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text('{"run_length": 200}')
        args = ("sweep", "--config", cfg, "--seed", 5, "--L-list", "10", "--snr-list", "20",
                "--trials", 2, "--snr-trials", 10)
        assert run(*args, "--out", tmp_path / "a") == 0
        assert run(*args, "--out", tmp_path / "b") == 0
        assert len(rows(tmp_path / "a" / "far_sweep.csv")) == 1
        for name in ("far_sweep.csv", "snr_table.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_far_improves_with_snr(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text('{"run_length": 400}')
        assert run("sweep", "--config", cfg, "--seed", 6, "--L-list", "5,10,20,40", "--snr-list=-20,0,20",
                   "--trials", 10, "--snr-trials", 10, "--out", tmp_path) == 0
        far = {(int(r["L"]), float(r["snr_db"])): float(r["far"]) for r in rows(tmp_path / "far_sweep.csv")}
        for L in (5, 10, 20, 40):
            assert far[(L, -20.0)] >= far[(L, 0.0)] >= far[(L, 20.0)]


class TestFx:
    def test_two_pass_reference_scenario(self, tmp_path):
        assert run("fx", "--seed", 0, "--out", tmp_path) == 0
        for name in ("trace.csv", "ranges.csv", "formats.json", "fx_trace.csv", "op_count.json",
                     "reference_comparison.json"):
            assert (tmp_path / name).is_file()
        cmp_rows = json.loads((tmp_path / "reference_comparison.json").read_text())["rows"]
        fixed = {r["name"]: r["proposed"] for r in cmp_rows}
        # data-independent rows of the reference table are reproduced exactly
        assert fixed["N"] == "Q(0,4,0)" and fixed["i"] == "Q(0,4,0)" and fixed["u"] == "Q(0,2,0)"
        assert fixed["dhat"] == "Q(0,8,6)" and fixed["count"] == "Q(0,11,0)"
        ops = json.loads((tmp_path / "op_count.json").read_text())
        assert ops["schema_version"] == 1 and ops["fixed"]["dividers"] == 3

    def test_wide_formats_track_float(self, tmp_path):
        from rrgen.fixedpoint import wide_formats, write_formats_json

        write_formats_json(wide_formats(64, 40), tmp_path / "wide.json")
        assert run("fx", "--seed", 0, "--formats", tmp_path / "wide.json", "--out", tmp_path) == 0
        fx = rows(tmp_path / "fx_trace.csv")
        diffs = [abs(float(r["tau_fx"]) - float(r["tau_float"])) for r in fx if r["tau_fx"]]
        assert max(diffs) < 1e-5

    def test_missing_variable_format(self, tmp_path):
        (tmp_path / "f.json").write_text('{"schema_version": 1, "formats": {"r": {"signed": true, "word": 12, "frac": 6}}}')
        assert run("fx", "--seed", 0, "--formats", tmp_path / "f.json", "--out", tmp_path) == 4

    def test_deterministic(self, tmp_path):
        for sub in ("a", "b"):
            assert run("fx", "--seed", 9, "--config", write(tmp_path, {"run_length": 300, "fault": {"start": 100, "end": 200, "height": 5.0}}),
                       "--out", tmp_path / sub) == 0
        for name in ("fx_trace.csv", "formats.json", "op_count.json", "ranges.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def write(tmp_path, doc):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    return path
