import csv
import json
import math

import numpy as np
import pytest

from qtwins.cli import ExperimentConfig, main, parse_state


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(text):
    rows = list(csv.reader(text.splitlines()))
    body = [r for r in rows if not r[0].startswith("#")]
    footer = dict(r[0][2:].split("=", 1) for r in rows if r[0].startswith("#"))
    return body[0], [[float(v) for v in r] for r in body[1:]], footer


def cplx(z):
    return complex(z["re"], z["im"])


class TestReconstruct:
    def test_h_noiseless(self, capsys):
        code, out, _ = run(capsys, "reconstruct", "--state", "h", "--no-sampling", "--seed", "1")
        assert code == 0
        doc = json.loads(out)
        q = np.array([[cplx(z) for z in row] for row in doc["quasi_distribution"]])
        np.testing.assert_allclose(q, [[0.5, 0], [0.5, 0]], atol=1e-12)
        assert doc["fidelities"]["density_mle"] > 0.9999
        assert all(c["passed"] for c in doc["cross_checks"])
        assert doc["config"]["seed"] == 1

    def test_qwp_45(self, capsys):
        code, out, _ = run(capsys, "reconstruct", "--state", "qwp:45", "--no-sampling", "--seed", "0")
        amps = [cplx(z) for z in json.loads(out)["wavefunction"]["amplitudes"]]
        assert code == 0 and abs(abs(amps[0]) ** 2 - 0.5) < 1e-10

    def test_qudit_config_file(self, capsys, tmp_path, rng):
        amps = rng.normal(size=4) + 1j * rng.normal(size=4)
        amps /= np.linalg.norm(amps)
        cfg = {
            "schema_version": 1,
            "dimension": 4,
            "input_state": {"amplitudes": [{"re": a.real, "im": a.imag} for a in amps]},
            "sampling": False,
            "seed": 3,
        }
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        code, out, _ = run(capsys, "reconstruct", "--config", str(path))
        doc = json.loads(out)
        assert code == 0
        assert doc["fidelities"]["wavefunction"] > 1 - 1e-9
        assert doc["fidelities"]["density_raw"] > 1 - 1e-9

    def test_flags_override_config(self, capsys, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"schema_version": 1, "input_state": "v", "seed": 5}))
        code, out, _ = run(capsys, "reconstruct", "--config", str(path), "--state", "h", "--no-sampling")
        doc = json.loads(out)
        assert code == 0 and doc["config"]["seed"] == 5
        assert abs(cplx(doc["quasi_distribution"][0][0]) - 0.5) < 1e-12

    def test_invalid_config(self, capsys, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"schema_version": 1, "visibility": 2.0}))
        code, _, err = run(capsys, "reconstruct", "--config", str(path))
        assert code == 2 and "invalid config" in err

    def test_unknown_schema(self, capsys, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"schema_version": 99}))
        assert run(capsys, "reconstruct", "--config", str(path))[0] == 2

    def test_generated_seed_echoed(self, capsys):
        code, out, _ = run(capsys, "reconstruct", "--state", "d", "--mean-counts", "1000")
        assert code == 0 and isinstance(json.loads(out)["config"]["seed"], int)

    def test_out_file(self, capsys, tmp_path):
        out = tmp_path / "r.csv"
        code, text, _ = run(capsys, "reconstruct", "--state", "h", "--no-sampling", "--seed", "1", "--format", "csv", "--out", str(out))
        assert code == 0 and text == ""
        cols, rows, _ = read_csv(out.read_text())
        assert cols == ["x", "y", "re", "im", "re_err", "im_err"] and len(rows) == 4


class TestDelayScan:
    def test_noiseless_gaussian(self, capsys):
        code, out, _ = run(capsys, "delay-scan", "--state", "h", "--no-sampling", "--tau-range=-3:3:13", "--seed", "2")
        cols, rows, footer = read_csv(out)
        assert code == 0
        assert cols == ["tau", "re_est", "im_est", "re_err", "im_err", "re_theory", "im_theory"]
        assert len(rows) == 13
        for tau, re, im, *_ in rows:
            assert abs(re - 0.5 * math.exp(-tau * tau / 2)) < 1e-12 and abs(im) < 1e-15
        assert footer["check gaussian_law"] == "pass"
        assert footer["seed"] == "2"

    def test_byte_identical(self, capsys):
        argv = ("delay-scan", "--state", "d", "--tau-range=-2:2:5", "--seed", "17", "--mean-counts", "1000")
        assert run(capsys, *argv)[1] == run(capsys, *argv)[1]

    def test_crlf(self, capsys):
        out = run(capsys, "delay-scan", "--state", "h", "--no-sampling", "--seed", "1")[1]
        assert out.endswith("\r\n")


class TestWpScan:
    def test_default_grid(self, capsys):
        code, out, _ = run(capsys, "wp-scan", "--no-sampling", "--seed", "0")
        cols, rows, footer = read_csv(out)
        assert code == 0 and len(rows) == 18
        first = dict(zip(cols, rows[0]))
        assert first["theta_deg"] == 0 and abs(first["re_alpha"] - 1) < 1e-12
        assert footer["check alpha_formula"] == "pass"

    def test_requires_qubits(self, capsys):
        assert run(capsys, "wp-scan", "--dimension", "3", "--seed", "0")[0] == 2


class TestHomDip:
    def test_footer(self, capsys):
        code, out, _ = run(capsys, "hom-dip", "--no-sampling", "--visibility", "0.96", "--tau-range=-6:6:61", "--seed", "0")
        _, rows, footer = read_csv(out)
        assert code == 0 and len(rows) == 61
        assert abs(float(footer["fitted_visibility"]) - 0.96) < 0.005
        assert footer["check width_recovered"] == "pass"


class TestFidelityBench:
    def test_values(self, capsys):
        code, out, _ = run(capsys, "fidelity-bench", "--dims", "2,3,4", "--trials", "5", "--seed", "1")
        cols, rows, footer = read_csv(out)
        table = {int(r[0]): dict(zip(cols, r)) for r in rows}
        assert code == 0
        assert abs(table[2]["analytic_clone_fidelity"] - 5 / 6) < 1e-15
        assert abs(table[3]["measured_clone_fidelity"] - 0.75) < 1e-12
        assert table[4]["settings"] == 16
        assert all(v == "pass" for k, v in footer.items() if k.startswith("check"))


class TestStateParsing:
    @pytest.mark.parametrize("name, amps", [
        ("h", [1, 0]),
        ("v", [0, 1]),
        ("d", [1 / math.sqrt(2), 1 / math.sqrt(2)]),
        ("r", [1j / math.sqrt(2), 1 / math.sqrt(2)]),
    ])
    def test_presets(self, name, amps):
        amps = np.array(amps)
        np.testing.assert_allclose(parse_state(name, 2), np.outer(amps, amps.conj()), atol=1e-15)

    def test_renormalizes(self, caplog):
        rho = parse_state({"amplitudes": [1, 1]}, 2)
        assert abs(np.trace(rho) - 1) < 1e-12
        assert "renormalized" in caplog.text

    def test_rejects_non_positive_density(self):
        from qtwins.cli import ConfigError

        with pytest.raises(ConfigError):
            parse_state({"density": [[1.5, 0], [0, -0.5]]}, 2)

    def test_defaults_validate(self):
        cfg = ExperimentConfig()
        cfg.validate()
        assert len(cfg.thetas_deg) == 18
