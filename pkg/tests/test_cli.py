import csv
import json
import warnings

import numpy as np
import pytest

from rabitherm import cli
from rabitherm.cache import CacheCorruptionWarning, DecompositionCache
from rabitherm.eigensolver import KERNEL_CALLS, compute_decomposition, decompose_params, params_hash, use_store
from rabitherm.errors import ConfigError
from rabitherm.hamiltonian import ModelParams


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def write_config(tmp_path, document, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(document))
    return str(path)


def test_spectrum_uncoupled_closed_form(tmp_path):
    assert cli.main(["spectrum", "--g", "0", "--lambda", "0", "--ntr", "12", "--out", str(tmp_path)]) == 0
    header, data = read_csv(tmp_path / "spectrum.csv")
    assert header == ["index", "energy", "parity", "mean_n"]
    expected = np.sort(np.concatenate([np.arange(13) - 0.5, np.arange(13) + 0.5]))
    np.testing.assert_allclose(data[:, 1], expected, atol=1e-12)
    side = json.loads((tmp_path / "spectrum.json").read_text())
    assert side["config"]["model"] == {"omega": 1.0, "g": 0.0, "lambda": 0.0, "n_tr": 12}
    assert side["seed"] == 0 and side["file"] == "spectrum.csv"
    assert {"code_version", "matrix_version", "convergence"} <= side.keys()


def test_potentials_output(tmp_path):
    assert cli.main(["potentials", "--out", str(tmp_path)]) == 0
    header, data = read_csv(tmp_path / "potentials.csv")
    assert header == ["x", "V_minus", "V_plus"]
    assert data.shape == (2001, 3)
    assert np.all(data[:, 2] >= data[:, 1])
    summary = json.loads((tmp_path / "potentials.json").read_text())["summary"]
    assert summary["crossing_gap"] == pytest.approx(1.0, abs=1e-12)


def test_levelstats_reference_columns(tmp_path):
    cfg = write_config(tmp_path, {"model": {"g": 2.0, "n_tr": 80}, "options": {"window": [0, 40]}})
    assert cli.main(["levelstats", "--config", cfg, "--out", str(tmp_path)]) == 0
    header, data = read_csv(tmp_path / "levelstats_histogram.csv")
    assert header[-2:] == ["poisson", "wigner_dyson"]
    np.testing.assert_allclose(data[:, 4], np.exp(-data[:, 2]))
    spacings = read_csv(tmp_path / "levelstats_spacings.csv")[1][:, 0]
    assert spacings.mean() == pytest.approx(1.0)


def test_csv_full_precision(tmp_path):
    cli.write_csv(tmp_path / "v.csv", ("a",), np.array([[0.1], [1 / 3]]))
    text = (tmp_path / "v.csv").read_text().splitlines()
    assert float(text[2]) == 1 / 3 and float(text[1]) == 0.1


def test_flags_override_config(tmp_path):
    cfg = write_config(tmp_path, {"model": {"g": 3.0, "n_tr": 5}, "seed": 4})
    args = cli.build_parser().parse_args(["spectrum", "--config", cfg, "--g", "1.5", "--seed", "9"])
    config = cli.config_from_args(args)
    assert config.model["g"] == 1.5 and config.model["n_tr"] == 5 and config.seed == 9


@pytest.mark.parametrize(
    "document, path",
    [
        ({"model": {"gg": 1.0}}, "model.gg"),
        ({"model": {"g": "ten"}}, "model.g"),
        ({"model": {"n_tr": -1}}, "model.n_tr"),
        ({"options": {"bogus": 1}}, "options.bogus"),
        ({"options": {"window": [5, 1]}}, "options.window"),
        ({"schema_version": 2}, "schema_version"),
        ({"seed": -1}, "seed"),
        ({"convergence": {"tol": 0}}, "convergence.tol"),
    ],
)
def test_config_errors_name_the_field(document, path):
    with pytest.raises(ConfigError) as info:
        cli.build_config(document, "levelstats")
    assert info.value.path == path


def test_exit_code_config(tmp_path, capsys):
    cfg = write_config(tmp_path, {"model": {"g": -1.0}})
    assert cli.main(["spectrum", "--config", cfg]) == cli.EXIT_CONFIG
    assert "model.g" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["spectrum", "--config", str(bad)]) == cli.EXIT_CONFIG
    assert cli.main(["nonsense"]) == cli.EXIT_CONFIG


def test_exit_code_resource_cap(tmp_path):
    cfg = write_config(tmp_path, {"model": {"n_tr": 64}, "convergence": {"max_n_tr": 32}})
    assert cli.main(["spectrum", "--config", cfg, "--out", str(tmp_path)]) == cli.EXIT_RESOURCE
    cfg = write_config(tmp_path, {"model": {"g": 6.0}, "convergence": {"start": 4, "max_n_tr": 16}})
    assert cli.main(["spectrum", "--config", cfg, "--out", str(tmp_path)]) == cli.EXIT_RESOURCE
    assert not (tmp_path / "spectrum.csv").exists()


def test_exit_code_numerical(tmp_path):
    # a grid far smaller than the state support raises GridError
    cfg = write_config(tmp_path, {
        "model": {"g": 1.0, "lambda": 0.3, "n_tr": 40},
        "options": {"extent": 1.0, "points": 16, "time": 10.0},
    })
    assert cli.main(["wigner", "--config", cfg, "--out", str(tmp_path)]) == cli.EXIT_NUMERICAL


def test_cache_round_trip_bit_exact(tmp_path):
    p = ModelParams(1.0, 1.7, 0.4, 20)
    cache = DecompositionCache(tmp_path)
    fresh = compute_decomposition(p)
    cache.store(fresh)
    back = cache.load(params_hash(p))
    assert np.array_equal(back.energies, fresh.energies)
    assert np.array_equal(back.vectors, fresh.vectors)


def test_second_run_does_no_kernel_work(tmp_path):
    args = ["spectrum", "--g", "2.3", "--lambda", "0.7", "--ntr", "30", "--cache", str(tmp_path / "c")]
    assert cli.main(args + ["--out", str(tmp_path / "a")]) == 0
    before = KERNEL_CALLS["count"]
    assert cli.main(args + ["--out", str(tmp_path / "b")]) == 0
    assert KERNEL_CALLS["count"] == before
    assert (tmp_path / "a" / "spectrum.csv").read_bytes() == (tmp_path / "b" / "spectrum.csv").read_bytes()


def test_corrupt_entry_warns_and_recomputes(tmp_path):
    p = ModelParams(1.0, 0.9, 0.2, 10)
    cache = DecompositionCache(tmp_path)
    previous = use_store(cache)
    try:
        good = decompose_params(p).energies.copy()
        cache.path(params_hash(p)).write_bytes(b"garbage")
        use_store(cache)  # drop the in-memory memo
        with pytest.warns(CacheCorruptionWarning):
            again = decompose_params(p)
    finally:
        use_store(previous)
    assert np.array_equal(again.energies, good)
    assert cache.misses == 2
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert cache.load(params_hash(p)) is not None


def test_wrong_key_entry_rejected(tmp_path):
    a, b = ModelParams(1.0, 1.0, 0.0, 6), ModelParams(1.0, 1.1, 0.0, 6)
    cache = DecompositionCache(tmp_path)
    cache.store(compute_decomposition(a)).rename(cache.path(params_hash(b)))
    with pytest.warns(CacheCorruptionWarning):
        assert cache.load(params_hash(b)) is None


def test_auto_truncation_recorded(tmp_path):
    assert cli.main(["spectrum", "--g", "1.0", "--lambda", "0.5", "--ntr", "auto", "--out", str(tmp_path)]) == 0
    side = json.loads((tmp_path / "spectrum.json").read_text())
    conv = side["convergence"]
    assert conv["mode"] == "auto" and conv["change_on_doubling"] < conv["tol"]
    assert side["n_tr"] == side["config"]["model"]["n_tr"] == conv["history"][-2]["n_tr"]


@pytest.mark.parametrize(
    "experiment, document",
    [
        ("quench-stats", {"model": {"g": 2.0, "lambda": 1.0, "n_tr": 30}, "options": {"n_samples": 500}}),
        ("gaussianity", {"model": {"g": 2.0, "lambda": 1.0, "n_tr": 30}, "options": {"n_samples": 500}}),
        ("classical", {"options": {"t_end": 50.0, "lyapunov_t": 50.0}}),
        ("sweep", {"model": {"n_tr": 30}, "options": {"g_values": [0.5, 1.0], "workers": 2}}),
    ],
)
def test_runs_are_bit_identical(tmp_path, experiment, document):
    cfg = write_config(tmp_path, document)
    for name in ("a", "b"):
        assert cli.main([experiment, "--config", cfg, "--seed", "3", "--out", str(tmp_path / name)]) == 0
    produced = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert produced
    for name in produced:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_no_temporary_files_left(tmp_path):
    assert cli.main(["potentials", "--out", str(tmp_path)]) == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["potentials.csv", "potentials.json"]
