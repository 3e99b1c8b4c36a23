import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from ivdist.cli import main, parse_learner_config
from ivdist.serialize import canonical_json

GOLDEN = Path(__file__).parent / "golden"

SIXROW_ARGS = ["--outcome-col", "y", "--treat-col", "d", "--assign-col", "z",
               "--stratum-col", "s", "--covariate-cols", "x"]


def run_estimate(tmp_path, *extra, name="out"):
    out = tmp_path / name
    code = main(["estimate", "--input", str(GOLDEN / "sixrow.csv"), *SIXROW_ARGS,
                 "--learner", "zero", "--thresholds", "2.5,5.5", "--seed", "0",
                 "--output", str(out), *extra])
    return code, out


def test_estimate_golden_bytes(tmp_path):
    code, out = run_estimate(tmp_path)
    assert code == 0
    got = (out.with_suffix(".json")).read_bytes()
    want = (GOLDEN / "sixrow_cli_expected.json").read_bytes()
    assert got == want


def test_estimate_values_match_hand_oracle(tmp_path, sixrow_expected):
    _, out = run_estimate(tmp_path)
    payload = json.loads(out.with_suffix(".json").read_text())
    want = sixrow_expected["zero_learner"]
    np.testing.assert_allclose(payload["beta"], want["beta"], atol=1e-12)
    np.testing.assert_allclose(payload["omega_hat"], want["omega_hat"], atol=1e-10)
    np.testing.assert_allclose(payload["ci_lower"], want["ci_lower"], atol=1e-10)
    np.testing.assert_allclose(payload["ci_upper"], want["ci_upper"], atol=1e-10)


def test_estimate_json_roundtrip_bytes(tmp_path):
    _, out = run_estimate(tmp_path)
    raw = out.with_suffix(".json").read_bytes()
    assert canonical_json(json.loads(raw)).encode() == raw


def test_estimate_meta_block(tmp_path):
    _, out = run_estimate(tmp_path)
    meta = json.loads(out.with_suffix(".json").read_text())["meta"]
    assert set(meta) == {"version", "seed", "config_hash"}
    assert meta["seed"] == 0
    # rerun from a different directory layout: hash is path-independent
    copy = tmp_path / "copy.csv"
    shutil.copy(GOLDEN / "sixrow.csv", copy)
    out2 = tmp_path / "out2"
    main(["estimate", "--input", str(copy), *SIXROW_ARGS, "--learner", "zero",
          "--thresholds", "2.5,5.5", "--seed", "0", "--output", str(out2)])
    meta2 = json.loads(out2.with_suffix(".json").read_text())["meta"]
    assert meta2 == meta


def test_estimate_missing_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["estimate", "--input", "x.csv", "--treat-col", "d",
              "--assign-col", "z", "--stratum-col", "s", "--output", "o"])
    assert exc.value.code == 2


def test_estimate_library_error_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("y,d,z\n1,0,0\n")  # no stratum column
    code = main(["estimate", "--input", str(bad), *SIXROW_ARGS[:-2],
                 "--stratum-col", "s", "--learner", "zero",
                 "--seed", "0", "--output", str(tmp_path / "o")])
    assert code == 1
    assert "MissingColumnError" in capsys.readouterr().err


def test_estimate_weak_first_stage_exits_1(tmp_path, capsys):
    # equal (z, d) cells make the first stage exactly zero
    rng = np.random.default_rng(12)
    cells = [(z, d) for z in (0, 1) for d in (0, 1) for _ in range(50)]
    p = tmp_path / "noise.csv"
    lines = ["y,d,z,s"] + [f"{rng.standard_normal():.4f},{d},{z},1"
                           for z, d in cells]
    p.write_text("\n".join(lines) + "\n")
    code = main(["estimate", "--input", str(p), "--outcome-col", "y",
                 "--treat-col", "d", "--assign-col", "z", "--stratum-col", "s",
                 "--learner", "zero", "--quantile-count", "3", "--seed", "0",
                 "--output", str(tmp_path / "o")])
    assert code == 1
    assert "WeakFirstStageError" in capsys.readouterr().err


def test_estimate_bootstrap_and_interval(tmp_path):
    from ivdist.simulation import DgpConfig, generate

    gen = generate(DgpConfig(n_strata=2, covariate_dim=1), 200, seed=2)
    s = gen.sample
    p = tmp_path / "gen.csv"
    lines = ["y,d,z,s,x"] + [
        f"{float(s.outcome[i])!r},{s.treatment_received[i]},{s.assignment[i]},"
        f"{s.stratum[i]},{float(s.covariates[i, 0])!r}" for i in range(s.n)]
    p.write_text("\n".join(lines) + "\n")
    out = tmp_path / "boot"
    code = main(["estimate", "--input", str(p), *SIXROW_ARGS,
                 "--learner", "zero", "--quantile-count", "3",
                 "--inference", "bootstrap", "--draws", "16",
                 "--effect", "interval", "--seed", "0", "--output", str(out)])
    assert code == 0
    payload = json.loads(out.with_suffix(".json").read_text())
    assert payload["method"] == "bootstrap"
    assert payload["B"] == 16
    assert payload["effect"] == "interval"


def test_estimate_csv_format(tmp_path):
    code, out = run_estimate(tmp_path, "--format", "csv", name="csvonly")
    assert code == 0
    assert not out.with_suffix(".json").exists()
    text = out.with_suffix(".csv").read_bytes()
    assert text.startswith(b"threshold,beta,se,ci_lower,ci_upper\r\n")


def test_learner_config_file(tmp_path):
    cfg = tmp_path / "learner.cfg"
    cfg.write_text("n_trees = 4\nmax_depth = 2  # shallow\nlearning_rate = 0.3\n")
    assert parse_learner_config(cfg) == {"n_trees": "4", "max_depth": "2",
                                         "learning_rate": "0.3"}
    code, out = run_estimate(tmp_path, "--learner-config", str(cfg), name="cfg")
    assert code == 0  # zero learner ignores the options but parsing must work


def test_learner_config_bad_key_exits_2(tmp_path, capsys):
    cfg = tmp_path / "learner.cfg"
    cfg.write_text("nonsense = 1\n")
    code, _ = run_estimate(tmp_path, "--learner-config", str(cfg), name="bad")
    assert code == 2


def test_simulate_deterministic_files(tmp_path):
    args = ["simulate", "--benchmark-defaults", "--n", "300", "--reps", "5",
            "--estimators", "unadjusted", "--ref-size", "20000", "--seed", "7"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(args + ["--output", str(a)]) == 0
    assert main(args + ["--output", str(b)]) == 0
    assert a.with_suffix(".json").read_bytes() == b.with_suffix(".json").read_bytes()
    assert a.with_suffix(".csv").read_bytes() == b.with_suffix(".csv").read_bytes()


def test_simulate_csv_shape(tmp_path):
    out = tmp_path / "sim"
    code = main(["simulate", "--n", "300", "--reps", "2", "--ref-size", "20000",
                 "--threads", "1", "--estimators", "unadjusted,linear-adjusted",
                 "--quantiles", "0.25,0.5,0.75", "--seed", "3",
                 "--learner-config", "/dev/null", "--output", str(out)])
    assert code == 0
    lines = out.with_suffix(".csv").read_text().strip().splitlines()
    assert lines[0] == "estimator,quantile,rmse,ci_length,coverage"
    assert len(lines) == 1 + 2 * 3


def test_simulate_unknown_estimator_exits_2(tmp_path):
    code = main(["simulate", "--estimators", "magic", "--seed", "1",
                 "--output", str(tmp_path / "x")])
    assert code == 2


def test_randomize_block_and_determinism(tmp_path):
    src = tmp_path / "units.csv"
    src.write_text("unit,s\n" + "\n".join(f"u{i},{i % 2}" for i in range(16)) + "\n")
    args = ["randomize", "--input", str(src), "--stratum-col", "s",
            "--scheme", "block", "--block-size", "4", "--seed", "5"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--output", str(a)]) == 0
    assert main(args + ["--output", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    import pandas as pd
    df = pd.read_csv(a)
    assert list(df.columns) == ["unit", "s", "assignment"]
    for s in (0, 1):
        assert df[df.s == s].assignment.sum() == 4  # 8 rows, two blocks of 4


def test_randomize_existing_column_exits_2(tmp_path):
    src = tmp_path / "units.csv"
    src.write_text("s,assignment\n1,0\n1,1\n")
    code = main(["randomize", "--input", str(src), "--stratum-col", "s",
                 "--seed", "1", "--output", str(tmp_path / "o.csv")])
    assert code == 2


def test_randomize_block_requires_size(tmp_path):
    src = tmp_path / "units.csv"
    src.write_text("s\n1\n1\n")
    code = main(["randomize", "--input", str(src), "--stratum-col", "s",
                 "--scheme", "block", "--seed", "1",
                 "--output", str(tmp_path / "o.csv")])
    assert code == 2


def test_seed_drawn_and_printed_when_absent(tmp_path, capsys):
    src = tmp_path / "units.csv"
    src.write_text("s\n1\n1\n1\n1\n")
    code = main(["randomize", "--input", str(src), "--stratum-col", "s",
                 "--output", str(tmp_path / "o.csv")])
    assert code == 0
    assert "seed:" in capsys.readouterr().out


def test_estimate_bad_level_exits_2(tmp_path):
    code, _ = run_estimate(tmp_path, "--level", "1.5", name="lvl")
    assert code == 2


def test_simulate_bad_reps_exits_2(tmp_path):
    code = main(["simulate", "--reps", "0", "--seed", "1",
                 "--output", str(tmp_path / "x")])
    assert code == 2
