"""End-to-end checks of the command-line front end.

Everything runs in-process through ``main(argv)``, which returns the exit
code, so there is no subprocess overhead and capsys sees the output.
"""
import json

import numpy as np
import pytest

from lilbound.cli import (EXIT_CENSORED, EXIT_DIVERGENT, EXIT_DOMAIN,
                          EXIT_OK, main)


def run_cli(capsys, argv):
    """Invoke the CLI and return (exit_code, stdout, stderr)."""
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def read_csv(path):
    """Parse one of our output files into (header, rows of floats)."""
    lines = path.read_text().strip().split("\n")
    header = lines[0].split(",")
    rows = [[float(c) for c in line.split(",")] for line in lines[1:]]
    return header, rows


# ---------------------------------------------------------------------------
# conjugate
# ---------------------------------------------------------------------------

def test_conjugate_stdout_exact(capsys):
    """The quadratic conjugate at 0, 1, 2 is exactly 0, 1/2, 2."""
    code, out, _ = run_cli(capsys, ["conjugate", "--phi", "phi2",
                                    "--u", "0,1,2"])
    assert code == EXIT_OK
    assert out == "u,phi_star\n0,0\n1,0.5\n2,2\n"


def test_conjugate_json_flag(capsys):
    code, out, _ = run_cli(capsys, ["conjugate", "--phi", "phi2",
                                    "--u", "0,1,2", "--json"])
    assert code == EXIT_OK
    payload = json.loads(out)
    assert payload["u"] == [0.0, 1.0, 2.0]
    assert payload["phi_star"] == [0.0, 0.5, 2.0]


def test_conjugate_out_dir_twins(tmp_path, capsys):
    """conjugate.csv and conjugate.json carry identical numbers."""
    code, _, _ = run_cli(capsys, ["conjugate", "--phi", "power:q=3",
                                  "--u", "0.5,1,4,9",
                                  "--out-dir", str(tmp_path)])
    assert code == EXIT_OK
    header, rows = read_csv(tmp_path / "conjugate.csv")
    assert header == ["u", "phi_star"]
    payload = json.loads((tmp_path / "conjugate.json").read_text())
    assert payload["phi"] == "power:q=3"
    for row, u, val in zip(rows, payload["u"], payload["phi_star"]):
        assert row == [u, val]  # %.17g round-trips float64 exactly


def test_conjugate_rejects_negative_point(capsys):
    code, _, err = run_cli(capsys, ["conjugate", "--phi", "phi2",
                                    "--u", "1,-2"])
    assert code == EXIT_DOMAIN
    assert "error:" in err


@pytest.mark.parametrize("argv, registry_hint", [
    (["conjugate", "--phi", "exp", "--u", "1"], "phi2"),
    (["bound", "--norming", "poly:2"], "vr:R"),
    (["bound", "--model", "brownian"], "chaos:d=D"),
    (["bound", "--sigma", "table:x"], "powerlaw:gamma=G"),
])
def test_unknown_ids_name_their_registry(capsys, argv, registry_hint):
    """A typo in any id exits 2 and echoes the registry of valid ids."""
    code, _, err = run_cli(capsys, argv)
    assert code == EXIT_DOMAIN
    assert registry_hint in err


# ---------------------------------------------------------------------------
# norm
# ---------------------------------------------------------------------------

def test_norm_on_gaussian_sample(tmp_path, capsys):
    sample = tmp_path / "sample.csv"
    values = np.random.default_rng(11).standard_normal(4000)
    sample.write_text("# synthetic gaussian\n"
                      + "\n".join(f"{x:.9f}" for x in values) + "\n")
    code, out, _ = run_cli(capsys, ["norm", "--sample", str(sample),
                                    "--out-dir", str(tmp_path)])
    assert code == EXIT_OK
    assert "b_norm=" in out and "g_norm=" in out
    header, rows = read_csv(tmp_path / "norms.csv")
    assert header[:2] == ["b_norm", "g_norm"]
    b_norm = rows[0][0]
    assert 0.85 < b_norm < 1.15, f"gaussian b-norm should be near 1: {b_norm}"
    payload = json.loads((tmp_path / "norms.json").read_text())
    assert payload["sample_size"] == 4000


def test_norm_missing_sample_file(capsys):
    code, _, err = run_cli(capsys, ["norm", "--sample", "/nonexistent.csv"])
    assert code == EXIT_DOMAIN
    assert "error:" in err


# ---------------------------------------------------------------------------
# bound
# ---------------------------------------------------------------------------

def test_bound_writes_decreasing_grid(tmp_path, capsys):
    code, out, _ = run_cli(capsys, [
        "bound", "--u-grid", "log:2:6:5", "--ratio-grid", "log:2:8:6",
        "--out-dir", str(tmp_path)])
    assert code == EXIT_OK
    assert "minimal bound" in out
    header, rows = read_csv(tmp_path / "bound.csv")
    assert header == ["u", "bound", "ratio_chosen", "k_used"]
    bounds = [r[1] for r in rows]
    assert len(bounds) == 5
    assert all(b > 0 for b in bounds)
    assert all(a >= b for a, b in zip(bounds, bounds[1:])), \
        "bound must not increase along an increasing u grid"
    payload = json.loads((tmp_path / "bound.json").read_text())
    assert payload["config"]["u_grid"] == "log:2:6:5"


def test_bound_divergent_norming_exits_4(tmp_path, capsys):
    """A constant norming cannot absorb the growing sums: exit 4."""
    code, _, err = run_cli(capsys, [
        "bound", "--norming", "const:1", "--u-grid", "3,4",
        "--out-dir", str(tmp_path)])
    assert code == EXIT_DIVERGENT
    assert "diverges" in err
    # the report is still written so the failure can be inspected
    assert (tmp_path / "bound.json").exists()


def test_bad_grid_spec_exits_2(capsys):
    code, _, err = run_cli(capsys, ["bound", "--u-grid", "log:1:8"])
    assert code == EXIT_DOMAIN
    assert "u grid" in err


def test_invalid_seed_rejected(capsys):
    code, _, err = run_cli(capsys, ["simulate", "--seed", "0"])
    assert code == EXIT_DOMAIN
    assert "seed" in err


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def test_simulate_censor_guard(tmp_path, capsys):
    """Fewer than 1000 paths cannot beat the count threshold anywhere."""
    code, _, err = run_cli(capsys, [
        "simulate", "--paths", "500", "--out-dir", str(tmp_path)])
    assert code == EXIT_CENSORED
    assert not (tmp_path / "tails.csv").exists()
    assert "increase paths" in err


def test_simulate_small_run(tmp_path, capsys):
    code, out, _ = run_cli(capsys, [
        "simulate", "--horizon", "64", "--paths", "2000",
        "--u-grid", "0.8,1.2", "--seed", "7", "--out-dir", str(tmp_path)])
    assert code == EXIT_OK
    assert "tails written" in out
    header, rows = read_csv(tmp_path / "tails.csv")
    assert header == ["u", "w_hat", "ci_low", "ci_high"]
    for _, w_hat, ci_low, ci_high in rows:
        assert ci_low <= w_hat <= ci_high


def test_simulate_weighted_model(tmp_path, capsys):
    code, _, _ = run_cli(capsys, [
        "simulate", "--model", "weightedA:beta=1,r=3", "--horizon", "64",
        "--paths", "2000", "--u-grid", "0.5,1", "--seed", "7",
        "--out-dir", str(tmp_path)])
    assert code == EXIT_OK
    payload = json.loads((tmp_path / "tails.json").read_text())
    assert payload["w_hat"][0] >= payload["w_hat"][1]


def test_simulate_rerun_is_byte_identical(tmp_path, capsys):
    argv = ["simulate", "--horizon", "128", "--paths", "2000",
            "--u-grid", "0.8,1.2", "--seed", "5", "--out-dir", str(tmp_path)]
    assert run_cli(capsys, argv)[0] == EXIT_OK
    first = {name: (tmp_path / name).read_bytes()
             for name in ("tails.csv", "tails.json")}
    assert run_cli(capsys, argv)[0] == EXIT_OK
    for name, blob in first.items():
        assert (tmp_path / name).read_bytes() == blob, name


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def test_verify_exact_sandwich(tmp_path, capsys):
    """Enumeration route: lower <= exact tail <= calibrated bound, exit 0."""
    code, out, _ = run_cli(capsys, [
        "verify", "--exact", "--horizon", "12", "--u-grid", "lin:1:2:4",
        "--out-dir", str(tmp_path)])
    assert code == EXIT_OK
    assert "C_hat=" in out

    header, rows = read_csv(tmp_path / "sandwich.csv")
    assert header == ["u", "lower_bound", "w_hat", "ci_high",
                      "bound_at_Chat_u"]
    assert len(rows) == 4
    for _, lower, w_hat, ci_high, bound in rows:
        assert lower <= w_hat <= ci_high <= bound

    calibration = json.loads((tmp_path / "calibration.json").read_text())
    assert 0.01 <= calibration["c_hat"] <= 100.0
    assert calibration["margin"] >= 1.0
    assert not calibration["capped"]

    # exact tails are rational: the fraction column round-trips the float
    tails = json.loads((tmp_path / "tails.json").read_text())
    for text, value in zip(tails["w_fraction"], tails["w_hat"]):
        num, den = text.split("/")
        assert float(int(num)) / float(int(den)) == value


def test_verify_csv_json_twins_agree(tmp_path, capsys):
    code, _, _ = run_cli(capsys, [
        "verify", "--exact", "--horizon", "10", "--u-grid", "lin:1:2:3",
        "--out-dir", str(tmp_path)])
    assert code == EXIT_OK
    _, rows = read_csv(tmp_path / "sandwich.csv")
    payload = json.loads((tmp_path / "sandwich.json").read_text())
    for i, key in enumerate(("u", "lower_bound", "w_hat", "ci_high",
                             "bound_at_Chat_u")):
        assert [row[i] for row in rows] == payload[key], key


def test_verify_config_file_with_flag_override(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"horizon": 10, "u_grid": "lin:1:2:5",
                               "seed": 3}))
    out_dir = tmp_path / "out"
    # the flag grid (3 points) must win over the config grid (5 points)
    code, _, _ = run_cli(capsys, [
        "verify", "--exact", "--config", str(cfg),
        "--u-grid", "lin:1:2:3", "--out-dir", str(out_dir)])
    assert code == EXIT_OK
    _, rows = read_csv(out_dir / "sandwich.csv")
    assert len(rows) == 3
    echoed = json.loads((out_dir / "calibration.json").read_text())["config"]
    assert echoed["u_grid"] == "lin:1:2:3"
    assert echoed["horizon"] == 10


def test_unknown_config_key_exits_2(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"horizont": 5}))
    code, _, err = run_cli(capsys, ["verify", "--config", str(cfg)])
    assert code == EXIT_DOMAIN
    assert "unknown config keys" in err and "horizon" in err


def test_malformed_config_exits_2(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text("{not json")
    code, _, err = run_cli(capsys, ["verify", "--config", str(cfg)])
    assert code == EXIT_DOMAIN
    assert "error:" in err


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------

def test_models_lists_registries(capsys):
    code, out, _ = run_cli(capsys, ["models"])
    assert code == EXIT_OK
    for token in ("chaos:d=D", "weightedA:beta=B", "phi2", "vr:R",
                  "powerlaw:gamma=G"):
        assert token in out
