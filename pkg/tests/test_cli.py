import csv
import json
import math

import pytest

from tlid.config import reset_config
from tlid.errors import DomainError
from tlid.main import _parse_sweep, main


def _rows(text):
    return list(csv.DictReader(line for line in text.splitlines() if not line.startswith("#")))


def _strip_manifest(doc):
    return {k: v for k, v in doc.items() if k != "manifest"}


class TestMoments:
    def test_negbin(self, run_cli):
        code, out, _ = run_cli("moments", "--family", "negbin", "--alpha", "2", "--p", "0.5")
        assert code == 0
        doc = json.loads(out)
        assert (doc["mu"], doc["sigma2"]) == (pytest.approx(2.0), pytest.approx(4.0))
        assert doc["b"] == pytest.approx(2.0)
        assert doc["a"] == 0.0
        assert doc["branch"] == "UpperBranch"
        assert doc["manifest"]["command"] == "moments"

    def test_gamma_fixed_point(self, run_cli):
        code, out, _ = run_cli("moments", "--family", "gamma", "--alpha", "1", "--beta", "3", "--free", "beta")
        assert code == 0
        doc = json.loads(out)
        assert doc["b"] == pytest.approx(2.0)
        assert doc["branch"] == "FixedPoint"

    def test_singular_mean_gives_null_exponent(self, run_cli):
        code, out, _ = run_cli("moments", "--family", "negbin", "--alpha", "1", "--p", "0.5")
        assert code == 0
        doc = json.loads(out)
        assert doc["b"] is None
        assert doc["branch"] == "Singular"

    def test_rescale(self, run_cli):
        code, out, _ = run_cli("moments", "--family", "gamma", "--alpha", "2", "--beta", "1", "--rescale", "3")
        doc = json.loads(out)
        assert doc["a"] == pytest.approx(math.log(3.0))
        assert doc["sigma2"] == pytest.approx(6.0)
        assert doc["rescaled_family"] == {"alpha": pytest.approx(2.0 / 3.0), "beta": pytest.approx(3.0)}

    def test_tweble_unit_alpha_is_a_domain_error(self, run_cli):
        code, out, err = run_cli("moments", "--family", "tweble", "--alpha", "1", "--theta", "1")
        assert code == 2
        assert out == ""
        assert err.startswith("error[DOMAIN]:")

    def test_missing_family(self, run_cli):
        code, _, err = run_cli("moments", "--alpha", "1")
        assert code == 2
        assert "--family" in err


class TestCurve:
    def test_tweble_negative_sweep(self, run_cli):
        code, out, _ = run_cli("curve", "--family", "tweble", "--theta", "1", "--free", "alpha",
                               "--sweep=-2,-1,0,0.5")
        assert code == 0
        assert out.startswith("# manifest=")
        assert "# critical=" in out
        b = [float(r["b"]) for r in _rows(out)]
        assert b == [pytest.approx(4 / 3), pytest.approx(1.5), pytest.approx(2.0), pytest.approx(3.0)]

    def test_singularity_comment(self, run_cli):
        code, out, _ = run_cli("curve", "--family", "negbin", "--alpha", "1", "--sweep", "0.4,0.5,0.6")
        assert code == 0
        assert "# singularity p_c=0.5 left_sign=-1 right_sign=+1" in out
        middle = _rows(out)[1]
        assert middle["b"] == "nan"
        assert middle["branch"] == "Singular"
        assert middle["excluded"] == "true"

    def test_output_file(self, run_cli, tmp_path):
        path = tmp_path / "curve.csv"
        code, out, _ = run_cli("curve", "--family", "gamma", "--beta", "2", "--sweep", "1:5:5", "--output", str(path))
        assert code == 0 and out == ""
        assert len(_rows(path.read_text())) == 5

    def test_bad_sweep(self, run_cli):
        code, _, err = run_cli("curve", "--family", "gamma", "--beta", "2", "--sweep", "1:5")
        assert code == 2
        assert "start:stop:num" in err


def test_parse_sweep():
    assert list(_parse_sweep("0:1:3")) == [0.0, 0.5, 1.0]
    assert list(_parse_sweep("-1,2.5")) == [-1.0, 2.5]
    with pytest.raises(DomainError):
        _parse_sweep("0:1:0")


class TestSdCheck:
    def test_polya_aeppli(self, run_cli):
        code, out, _ = run_cli("sd-check", "--family", "polya-aeppli", "--alpha", "1", "--p", "0.3")
        assert code == 0
        doc = json.loads(out)
        assert doc["verdict"] == "SD"
        assert doc["r"] == pytest.approx(0.7)
        assert doc["order"] == 64
        claim = doc["reference_claim"]
        assert claim["claimed"] == "NotSD"
        assert claim["discrepancy"] is True

    def test_polya_aeppli_not_sd(self, run_cli):
        code, out, _ = run_cli("sd-check", "--family", "polya-aeppli", "--alpha", "1", "--p", "0.6", "--order", "32")
        doc = json.loads(out)
        assert doc["verdict"] == "NotSD"
        assert doc["first_negative_index"] == 1
        assert doc["order"] == 32

    def test_tweble_witness(self, run_cli):
        code, out, _ = run_cli("sd-check", "--family", "tweble", "--alpha=-1", "--theta", "1")
        assert code == 0
        doc = json.loads(out)
        assert doc["verdict"] == "NotSD"
        assert doc["lambda_c"] == pytest.approx(1.0)
        assert doc["l0_prime_at_witness"] < 0.0

    def test_gamma(self, run_cli):
        code, out, _ = run_cli("sd-check", "--family", "gamma", "--alpha", "2", "--beta", "1")
        doc = json.loads(out)
        assert doc["verdict"] == "SD"
        assert doc["phi0_at_1"] == pytest.approx(math.exp(-1.0))

    def test_cpgeo_numerator(self, run_cli):
        code, out, _ = run_cli("sd-check", "--family", "cpgeo", "--alpha", "0.5", "--p", "0.3")
        doc = json.loads(out)
        assert doc["numerator_nonnegative"] is True
        assert doc["reference_claim"]["claimed"] is None


class TestSimulate:
    ARGS = ("simulate", "--process", "disaster", "--alpha", "1", "--p", "0.5", "--seed", "11",
            "--paths", "3000", "--burn-in", "60", "--block-size", "1000")

    def test_disaster_summary(self, run_cli):
        code, out, _ = run_cli(*self.ARGS)
        assert code == 0
        doc = json.loads(out)
        assert doc["manifest"]["seed"] == 11
        assert doc["config"]["n_paths"] == 3000
        assert doc["target_mean"] == pytest.approx(1.0)
        assert set(doc["mean"]) == {"point", "stderr", "ci95_low", "ci95_high", "n"}
        assert abs(doc["mean"]["point"] - 1.0) < 5.0 * doc["mean"]["stderr"]
        assert 0.0 <= doc["tv_to_limit"] <= 1.0

    def test_reproducible(self, run_cli):
        first = json.loads(run_cli(*self.ARGS)[1])
        second = json.loads(run_cli(*self.ARGS, "--threads", "3")[1])
        assert first["mean"] == second["mean"]
        assert first["variance"] == second["variance"]

    def test_samples_file(self, run_cli, tmp_path):
        path = tmp_path / "samples.csv"
        code, _, _ = run_cli(*self.ARGS, "--samples", str(path))
        assert code == 0
        rows = _rows(path.read_text())
        assert len(rows) == 3000
        assert set(rows[0]) == {"path", "value", "events"}

    def test_seed_is_mandatory(self):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "--process", "disaster", "--alpha", "1", "--p", "0.5", "--no-log-file"])
        assert exc.value.code == 2

    def test_death_immigration_from_cluster(self, run_cli):
        code, out, _ = run_cli("simulate", "--process", "death-immigration", "--rate", "0.5",
                               "--cluster", "geometric:0.5", "--seed", "2", "--paths", "2000", "--horizon", "10")
        assert code == 0
        doc = json.loads(out)
        assert doc["rate"] == 0.5
        assert doc["target_zero_probability"] == pytest.approx(0.5, abs=1e-4)

    def test_death_immigration_from_family(self, run_cli):
        code, out, _ = run_cli("simulate", "--process", "death-immigration", "--family", "negbin",
                               "--alpha", "1", "--p", "0.5", "--seed", "2", "--paths", "2000")
        assert code == 0
        assert json.loads(out)["rate"] == pytest.approx(0.5)

    def test_death_immigration_needs_sd_law(self, run_cli):
        code, _, err = run_cli("simulate", "--process", "death-immigration", "--family", "polya-aeppli",
                               "--alpha", "1", "--p", "0.7", "--seed", "2", "--paths", "100")
        assert code == 2
        assert err.startswith("error[NOT_SD]:")

    def test_ou_gamma(self, run_cli):
        code, out, _ = run_cli("simulate", "--process", "ou-gamma", "--alpha", "2", "--beta", "1",
                               "--seed", "4", "--paths", "2000", "--horizon", "1")
        doc = json.loads(out)
        assert doc["target_zero_jump_probability"] == pytest.approx(math.exp(-2.0))
        assert 0.0 <= doc["ks_to_limit"] <= 1.0

    def test_tweble_cutoff_rejected(self, run_cli):
        code, _, err = run_cli("simulate", "--process", "ou-tweble", "--alpha", "0.5", "--theta", "1",
                               "--seed", "4", "--paths", "10", "--eps", "1")
        assert code == 2
        assert err.startswith("error[CONFIG]:")


class TestFit:
    def test_from_curve_csv(self, run_cli, tmp_path):
        path = tmp_path / "curve.csv"
        run_cli("curve", "--family", "gamma", "--beta", "2", "--sweep", "0.5:8:6", "--output", str(path))
        code, out, _ = run_cli("fit", "--csv", str(path))
        assert code == 0
        doc = json.loads(out)
        assert doc["a_hat"] == pytest.approx(math.log(2.0), abs=1e-10)
        assert doc["b_hat"] == pytest.approx(1.0, abs=1e-10)
        assert doc["n_points"] == 6

    def test_from_sweep_with_rescale(self, run_cli):
        code, out, _ = run_cli("fit", "--family", "gamma", "--alpha", "4", "--free", "beta",
                               "--sweep", "0.5,1,2,4", "--rescale", "3")
        doc = json.loads(out)
        assert doc["a_hat"] == pytest.approx(math.log(3.0) - math.log(4.0), abs=1e-10)
        assert doc["b_hat"] == pytest.approx(2.0, abs=1e-10)

    def test_needs_a_source(self, run_cli):
        code, _, err = run_cli("fit")
        assert code == 2
        assert "--csv" in err


class TestConfigAndReplay:
    def test_config_file_sets_defaults(self, run_cli, tmp_path):
        path = tmp_path / "tlid.toml"
        path.write_text("order = 32\n")
        base = ("sd-check", "--family", "negbin", "--alpha", "1", "--p", "0.5", "--config", str(path))
        assert json.loads(run_cli(*base)[1])["order"] == 32
        assert json.loads(run_cli(*base, "--order", "48")[1])["order"] == 48

    def test_config_file_unknown_key(self, run_cli, tmp_path):
        path = tmp_path / "tlid.toml"
        path.write_text("colour = 1\n")
        code, _, err = run_cli("moments", "--family", "gamma", "--alpha", "1", "--beta", "1", "--config", str(path))
        assert code == 2
        assert err.startswith("error[CONFIG]:")

    def test_threads_from_environment(self, run_cli, monkeypatch):
        monkeypatch.setenv("TLID_THREADS", "2")
        reset_config()
        code, out, _ = run_cli(*TestSimulate.ARGS)
        assert json.loads(out)["config"]["workers"] == 2

    def test_replay_reproduces_output(self, run_cli, tmp_path):
        code, out, _ = run_cli(*TestSimulate.ARGS)
        path = tmp_path / "run.json"
        path.write_text(out)
        code, replayed, _ = run_cli("replay", str(path))
        assert code == 0
        assert _strip_manifest(json.loads(replayed)) == _strip_manifest(json.loads(out))

    def test_replay_of_curve_csv(self, run_cli, tmp_path):
        code, out, _ = run_cli("curve", "--family", "negbin", "--alpha", "2", "--sweep", "0.1:0.9:5")
        path = tmp_path / "curve.csv"
        path.write_text(out)
        code, replayed, _ = run_cli("replay", str(path))
        assert code == 0
        assert _rows(replayed) == _rows(out)

    def test_replay_needs_manifest(self, run_cli, tmp_path):
        path = tmp_path / "plain.json"
        path.write_text("{}")
        code, _, err = run_cli("replay", str(path))
        assert code == 2
        assert err.startswith("error[CONFIG]:")


def test_log_file_written(tmp_path):
    log_dir = tmp_path / "run-logs"
    code = main(["moments", "--family", "gamma", "--alpha", "2", "--beta", "1", "--log-dir", str(log_dir)])
    assert code == 0
    (log_file,) = log_dir.glob("tlid_*.log")
    assert "started" in log_file.read_text()


def test_bad_log_level(run_cli):
    code, _, err = run_cli("moments", "--family", "gamma", "--alpha", "2", "--beta", "1", "--log-level", "LOUD")
    assert code == 2
    assert err.startswith("error[CONFIG]:")
