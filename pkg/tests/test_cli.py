import csv
import io
import json

import numpy as np
import pytest

from wstate.cli import main, render_selftest, selftest_checks
from wstate.network import MultiportSpec


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestRun:
    def test_n3_feedforward(self, capsys):
        code, out, _ = run_cli(capsys, "run", "--n", "3", "--ph", "0.6667", "--feedforward", "--output", "json")
        assert code == 0
        doc = json.loads(out)
        assert doc["data"]["total_success_probability"] == pytest.approx(4 / 27, rel=1e-4)
        assert doc["meta"]["config"] == {"n": 3, "ph": 0.6667, "feedforward": True, "analytic": False}
        assert doc["meta"]["mode"] == "simulation"

    def test_n2_half(self, capsys):
        code, out, _ = run_cli(capsys, "run", "--n", "2", "--ph", "0.5", "--output", "json")
        assert json.loads(out)["data"]["total_success_probability"] == pytest.approx(0.125, abs=1e-15)

    def test_extreme_ph_keeps_fidelity(self, capsys):
        _, out, _ = run_cli(capsys, "run", "--n", "2", "--ph", "0.999", "--output", "json")
        doc = json.loads(out)["data"]
        assert doc["total_success_probability"] < 1e-3
        assert all(abs(r["fidelity_corrected"] - 1) < 1e-9 for r in doc["outcomes"])
        assert doc["outcomes"][0]["fidelity_raw"] == pytest.approx(1)

    def test_over_cap(self, capsys):
        code, _, err = run_cli(capsys, "run", "--n", "9")
        assert code == 3 and "--analytic" in err

    def test_over_cap_analytic(self, capsys):
        code, out, _ = run_cli(capsys, "run", "--n", "20", "--analytic", "--feedforward", "--output", "csv")
        assert code == 0
        rows = list(csv.DictReader(io.StringIO(out)))
        assert rows[-1]["k"] == "total" and rows[-1]["mode"] == "analytic"
        assert float(rows[-1]["probability"]) == pytest.approx(19**19 / 20**20, rel=1e-12)

    def test_analytic_matches_simulation(self, capsys):
        _, a, _ = run_cli(capsys, "run", "--n", "4", "--analytic", "--output", "json")
        _, s, _ = run_cli(capsys, "run", "--n", "4", "--output", "json")
        ra, rs = json.loads(a)["data"]["outcomes"], json.loads(s)["data"]["outcomes"]
        for x, y in zip(ra, rs):
            for key in ("probability", "fidelity_raw", "fidelity_corrected"):
                assert x[key] == pytest.approx(y[key], abs=1e-12)
            assert np.allclose(np.exp(1j * np.array(x["phases"])), np.exp(1j * np.array(y["phases"])))

    @pytest.mark.parametrize("argv", [["run", "--n", "x"], ["run", "--ph", "1.5"], ["run", "--n", "1"], ["bogus"]])
    def test_usage_errors(self, capsys, argv):
        try:
            code = main(argv)
        except SystemExit as exc:  # argparse failures
            code = exc.code
        assert code == 1

    def test_dump_circuit(self, capsys, tmp_path):
        path = tmp_path / "c.json"
        run_cli(capsys, "run", "--n", "2", "--dump-circuit", str(path))
        stages = json.loads(path.read_text())
        assert stages[0]["label"] == "input PBS layer"
        composed = stages[-1]
        mat = np.array([[complex(re, im) for re, im in row] for row in composed["matrix"]])
        assert mat.shape == (len(composed["output_modes"]), len(composed["input_modes"]))
        assert np.allclose(mat.conj().T @ mat, np.eye(3), atol=1e-10)


class TestSweep:
    def test_argmax(self, capsys):
        code, out, _ = run_cli(capsys, "sweep", "--n", "4", "--steps", "999", "--output", "csv")
        assert code == 0
        assert out.strip().splitlines()[-1].startswith("# argmax_ph=0.75")

    def test_single_point(self, capsys):
        _, sweep_out, _ = run_cli(capsys, "sweep", "--n", "3", "--ph-min", "0.4", "--ph-max", "0.4", "--steps", "1", "--output", "json")
        _, run_out, _ = run_cli(capsys, "run", "--n", "3", "--ph", "0.4", "--output", "json")
        assert json.loads(sweep_out)["data"]["max_probability"] == json.loads(run_out)["data"]["total_success_probability"]

    def test_matches_formula(self, capsys):
        _, out, _ = run_cli(capsys, "sweep", "--n", "5", "--steps", "17", "--output", "json")
        for s in json.loads(out)["data"]["samples"]:
            p = s["p_h"]
            assert abs(s["probability"] - (1 - p) * p**4 / 5) <= 1e-10

    def test_bad_range(self, capsys):
        code, _, _ = run_cli(capsys, "sweep", "--n", "3", "--ph-min", "0.8", "--ph-max", "0.2")
        assert code == 1


class TestCompare:
    def test_rows(self, capsys):
        _, out, _ = run_cli(capsys, "compare", "--n-max", "12", "--output", "csv")
        rows = {int(r["N"]): r for r in csv.DictReader(io.StringIO(out))}
        assert float(rows[3]["quantum_fusion"]) == pytest.approx(0.12)
        assert float(rows[3]["fusion_xphase"]) == 0.5
        assert float(rows[2]["ours_no_ff"]) == 0.125
        for n, r in rows.items():
            assert float(r["ours_ff"]) == pytest.approx(n * float(r["ours_no_ff"]), rel=1e-14)


class TestLoss:
    def test_n3(self, capsys):
        _, out, _ = run_cli(capsys, "loss", "--n", "3", "--drop", "1", "--output", "json")
        doc = json.loads(out)["data"]
        assert doc["W"]["all_zeros_weight"] == pytest.approx(1 / 3)
        assert doc["W"]["one_excitation_weight"] == pytest.approx(2 / 3)
        assert doc["W"]["w_block_fidelity"] == pytest.approx(1)
        assert doc["GHZ"]["ghz_mixture_distance"] < 1e-15

    def test_n5_drop4(self, capsys):
        _, out, _ = run_cli(capsys, "loss", "--n", "5", "--drop", "4", "--output", "json")
        assert json.loads(out)["data"]["W"]["diagonal"] == pytest.approx([0.8, 0.2])

    def test_drop_zero_rejected(self, capsys):
        assert run_cli(capsys, "loss", "--n", "3", "--drop", "0")[0] == 1


class TestSelftest:
    def test_fresh(self, capsys):
        code, out, _ = run_cli(capsys, "selftest")
        assert code == 0 and "FAIL" not in out

    def test_tampered_phase(self):
        def tampered(n):
            gamma = MultiportSpec(n).gamma()
            gamma[1] *= np.exp(0.4j)  # extra phase on input port s_2
            return MultiportSpec(n, "custom", gamma)

        res = selftest_checks(multiport=tampered)
        assert not any(res["fidelity_raw"].values())
        assert all(res["fidelity_corrected"].values())
        assert all(res["unitarity"].values())

    def test_tampered_non_unitary(self):
        def broken(n):
            gamma = MultiportSpec(n).gamma()
            gamma[0, 0] *= 1.5
            return MultiportSpec(n, "custom", gamma)

        res = selftest_checks(multiport=broken)
        assert not any(res["unitarity"].values())
        assert "FAIL" in render_selftest(res)


class TestOutputContract:
    def test_deterministic(self, capsys):
        outs = [run_cli(capsys, "run", "--n", "3", "--output", fmt)[1] for fmt in ("json", "json", "csv", "csv")]
        assert outs[0] == outs[1] and outs[2] == outs[3]

    def test_json_round_trip(self, capsys, tmp_path):
        path = tmp_path / "o.json"
        run_cli(capsys, "sweep", "--n", "3", "--steps", "7", "--output", "json", "--out", str(path))
        doc = json.loads(path.read_text())
        for s in doc["data"]["samples"]:
            p = s["p_h"]
            assert abs(s["probability"] - (1 - p) * p**2 / 3) < 1e-15
        assert json.loads(json.dumps(doc)) == doc
        assert float(repr(doc["data"]["max_probability"])) == doc["data"]["max_probability"]

    def test_config_file_and_precedence(self, capsys, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"n": 2, "ph": 0.5, "feedforward": True, "output": "json"}))
        doc = json.loads(run_cli(capsys, "run", "--config", str(cfg))[1])
        assert doc["data"]["total_success_probability"] == pytest.approx(0.25)
        doc = json.loads(run_cli(capsys, "run", "--config", str(cfg), "--n", "3")[1])
        assert doc["meta"]["config"]["n"] == 3

    def test_config_hyphen_keys(self, capsys, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"n": 3, "ph-min": 0.2, "ph-max": 0.4, "steps": 3, "output": "json"}))
        doc = json.loads(run_cli(capsys, "sweep", "--config", str(cfg))[1])
        assert [s["p_h"] for s in doc["data"]["samples"]] == pytest.approx([0.2, 0.3, 0.4])

    def test_bad_config_key(self, capsys, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"colour": "red"}))
        assert run_cli(capsys, "run", "--config", str(cfg))[0] == 1
