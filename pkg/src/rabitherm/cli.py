"""Command-line front end.

Each subcommand runs one experiment and writes plot-ready CSV tables,
each with a JSON provenance sidecar, into the output directory::

    rabitherm levelstats --g 10 --lambda 2 --out runs/levels
    rabitherm sweep --config sweep.json --cache ~/.cache/rabitherm

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 resource cap reached.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import diagnostics as dg
from . import quench as qn
from . import semiclassical as sc
from . import wigner as wg
from .cache import DecompositionCache
from .eigensolver import decompose_params, use_store
from .errors import ConfigError, NumericalError, ResourceCapError
from .hamiltonian import MATRIX_VERSION, ModelParams, ObservableKind, build_observable, build_parity

SCHEMA_VERSION = 1

EXPERIMENTS = ("spectrum", "levelstats", "quench-stats", "gaussianity", "wigner", "classical", "sweep", "potentials")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_RESOURCE = 4

_MODEL_KEYS = ("omega", "g", "lambda", "n_tr")
_INITIAL_KEYS = ("omega", "g", "lambda")

DEFAULT_MODEL = {"omega": 1.0, "g": 10.0, "lambda": 2.0, "n_tr": "auto"}
DEFAULT_INITIAL = {"omega": 1.0, "g": 0.1, "lambda": 0.0}
DEFAULT_CONVERGENCE = {"tol": None, "start": 16, "max_n_tr": 4096}

# experiment -> (convergence target, default tolerance); None: no truncation involved
AUTO_TARGET = {
    "spectrum": (dg.Quantity.LOW_SPECTRUM, 1e-8),
    "levelstats": (dg.Quantity.WINDOW_SPECTRUM, 1e-8),
    "quench-stats": (dg.Quantity.QUENCH_MEAN_N, 1e-6),
    "gaussianity": (dg.Quantity.QUENCH_MEAN_N, 1e-6),
    "wigner": (dg.Quantity.QUENCH_MEAN_N, 1e-6),
    "sweep": (dg.Quantity.QUENCH_MEAN_N, 1e-6),
    "classical": None,
    "potentials": None,
}


def _number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _positive_int(v):
    return isinstance(v, int) and not isinstance(v, bool) and v > 0


def _window(v):
    return isinstance(v, list) and len(v) == 2 and all(_number(x) for x in v) and v[0] < v[1]


def _choice(*allowed):
    return lambda v: v in allowed


def _optional(check):
    return lambda v: v is None or check(v)


# option name -> (default, validator, description of valid values)
OPTIONS = {
    "spectrum": {
        "n_levels": (0, lambda v: isinstance(v, int) and v >= 0, "integer >= 0 (0 = all)"),
    },
    "levelstats": {
        "window": ([0.0, 250.0], _window, "[E_min, E_max] with E_min < E_max"),
        "bins": ("fd", lambda v: v == "fd" or _positive_int(v), "'fd' or a positive integer"),
        "alpha": (0.01, lambda v: _number(v) and 0 < v < 1, "number in (0, 1)"),
    },
    "quench-stats": {
        "n_samples": (qn.DEFAULT_N_SAMPLES, _positive_int, "positive integer"),
        "t_burn": (qn.DEFAULT_T_BURN, lambda v: _number(v) and v >= 0, "number >= 0"),
        "t_max": (qn.DEFAULT_T_MAX, _number, "number > t_burn"),
    },
    "gaussianity": {
        "n_samples": (qn.DEFAULT_N_SAMPLES, lambda v: _positive_int(v) and v >= 100, "integer >= 100"),
        "t_burn": (qn.DEFAULT_T_BURN, lambda v: _number(v) and v >= 0, "number >= 0"),
        "t_max": (qn.DEFAULT_T_MAX, _number, "number > t_burn"),
        "alpha": (0.05, lambda v: _number(v) and 0 < v < 1, "number in (0, 1)"),
        "bins": (60, _positive_int, "positive integer"),
    },
    "wigner": {
        "source": ("evolved_state", _choice("evolved_state", "eigenstate"), "'evolved_state' or 'eigenstate'"),
        "time": (5e5, _number, "finite number"),
        "energy": (0.0, _number, "finite number"),
        "points": (512, lambda v: _positive_int(v) and v >= 3, "integer >= 3 (a minimum unless extent is set)"),
        "extent": (None, _optional(lambda v: _number(v) and v > 0), "positive number or null"),
    },
    "classical": {
        "energy": (0.0, _number, "finite number"),
        "x": (1.0, _number, "finite number"),
        "Z": (0.3, lambda v: _number(v) and abs(v) < 1, "number in (-1, 1)"),
        "dphi": (2.4, _number, "finite number"),
        "sign": (1, _choice(1, -1), "+1 or -1"),
        "t_end": (1e3, lambda v: _number(v) and v > 0, "positive number"),
        "dt": (0.5, lambda v: _number(v) and v > 0, "positive number"),
        "coords": ("cartesian", _choice("cartesian", "chart"), "'cartesian' or 'chart'"),
        "surface": ("Z", _choice("x", "p", "Z"), "'x', 'p' or 'Z'"),
        "surface_level": (0.0, _number, "finite number"),
        "surface_direction": (1, _choice(1, -1), "+1 or -1"),
        "record": (["x", "p"], lambda v: isinstance(v, list) and len(v) == 2
                   and all(r in ("x", "p", "Z", "dphi") for r in v), "two of x, p, Z, dphi"),
        "lyapunov_t": (1e4, lambda v: _number(v) and v >= 0, "number >= 0 (0 skips)"),
        "lyapunov_interval": (1.0, lambda v: _number(v) and v > 0, "positive number"),
        "lyapunov_d0": (1e-8, lambda v: _number(v) and v > 0, "positive number"),
    },
    "sweep": {
        "g_values": ([float(g) for g in range(1, 11)],
                     lambda v: isinstance(v, list) and len(v) > 0 and all(_number(g) and g >= 0 for g in v),
                     "non-empty list of numbers >= 0"),
        "workers": (None, _optional(_positive_int), "positive integer or null (all cores)"),
    },
    "potentials": {
        "x_min": (-25.0, _number, "finite number"),
        "x_max": (25.0, _number, "finite number > x_min"),
        "points": (2001, lambda v: _positive_int(v) and v >= 2, "integer >= 2"),
    },
}


@dataclass
class RunConfig:
    experiment: str
    model: dict = field(default_factory=lambda: dict(DEFAULT_MODEL))
    quench_initial: dict = field(default_factory=lambda: dict(DEFAULT_INITIAL))
    seed: int = 0
    output_dir: str = "."
    cache_dir: str | None = None
    convergence: dict = field(default_factory=lambda: dict(DEFAULT_CONVERGENCE))
    options: dict = field(default_factory=dict)

    def params(self, n_tr: int = 0) -> ModelParams:
        m = self.model
        return ModelParams(m["omega"], m["g"], m["lambda"], n_tr)

    def initial_params(self, n_tr: int = 0) -> ModelParams:
        m = self.quench_initial
        return ModelParams(m["omega"], m["g"], m["lambda"], n_tr)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "experiment": self.experiment,
            "model": dict(self.model),
            "quench_initial": dict(self.quench_initial),
            "seed": self.seed,
            "convergence": dict(self.convergence),
            "options": copy.deepcopy(self.options),
        }


def _merge_params(section: dict, defaults: dict, keys, path: str) -> dict:
    if not isinstance(section, dict):
        raise ConfigError("expected an object", path)
    out = dict(defaults)
    for key, value in section.items():
        if key not in keys:
            raise ConfigError(f"unknown field (expected one of {', '.join(keys)})", f"{path}.{key}")
        if key == "n_tr":
            if value != "auto" and not (isinstance(value, int) and not isinstance(value, bool) and value >= 0):
                raise ConfigError("must be a non-negative integer or 'auto'", f"{path}.n_tr")
        elif not _number(value):
            raise ConfigError("must be a finite number", f"{path}.{key}")
        out[key] = value
    if out["g"] < 0:
        raise ConfigError("must be >= 0", f"{path}.g")
    return out


def build_config(document: dict, experiment: str) -> RunConfig:
    """Validate a configuration document and fill in defaults."""
    if not isinstance(document, dict):
        raise ConfigError("configuration must be a JSON object", "$")
    known = {"schema_version", "experiment", "model", "quench_initial", "seed",
             "output_dir", "cache_dir", "convergence", "options"}
    for key in document:
        if key not in known:
            raise ConfigError("unknown field", key)
    version = document.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema version {version!r} (expected {SCHEMA_VERSION})", "schema_version")
    doc_exp = document.get("experiment", experiment)
    if doc_exp != experiment:
        raise ConfigError(f"config is for {doc_exp!r} but {experiment!r} was requested", "experiment")
    seed = document.get("seed", 0)
    if not (isinstance(seed, int) and not isinstance(seed, bool) and seed >= 0):
        raise ConfigError("must be a non-negative integer", "seed")
    for key in ("output_dir", "cache_dir"):
        if document.get(key) is not None and not isinstance(document[key], str):
            raise ConfigError("must be a string path", key)

    conv = dict(DEFAULT_CONVERGENCE)
    for key, value in (document.get("convergence") or {}).items():
        if key not in conv:
            raise ConfigError("unknown field", f"convergence.{key}")
        ok = _optional(lambda v: _number(v) and v > 0)(value) if key == "tol" else _positive_int(value)
        if not ok:
            raise ConfigError("invalid value", f"convergence.{key}")
        conv[key] = value

    raw_options = document.get("options") or {}
    if not isinstance(raw_options, dict):
        raise ConfigError("expected an object", "options")
    table = OPTIONS[experiment]
    options = {name: copy.deepcopy(spec[0]) for name, spec in table.items()}
    for key, value in raw_options.items():
        if key not in table:
            raise ConfigError(f"unknown option for {experiment}", f"options.{key}")
        if not table[key][1](value):
            raise ConfigError(f"expected {table[key][2]}", f"options.{key}")
        options[key] = value
    _check_option_relations(experiment, options)

    return RunConfig(
        experiment,
        _merge_params(document.get("model", {}), DEFAULT_MODEL, _MODEL_KEYS, "model"),
        _merge_params(document.get("quench_initial", {}), DEFAULT_INITIAL, _INITIAL_KEYS, "quench_initial"),
        seed,
        document.get("output_dir") or ".",
        document.get("cache_dir"),
        conv,
        options,
    )


def _check_option_relations(experiment: str, options: dict):
    if "t_max" in options and options["t_max"] <= options["t_burn"]:
        raise ConfigError("must exceed t_burn", "options.t_max")
    if experiment == "potentials" and options["x_max"] <= options["x_min"]:
        raise ConfigError("must exceed x_min", "options.x_max")


# ---------------------------------------------------------------- artifacts


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def _atomic_write(path: Path, write):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            write(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: Path, columns, data):
    """CSV with one header row and 17 significant digits."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data[None, :]
    _atomic_write(
        Path(path),
        lambda fh: np.savetxt(fh, data, delimiter=",", header=",".join(columns), comments="", fmt="%.17g"),
    )


def write_json(path: Path, document: dict):
    text = json.dumps(_jsonable(document), indent=2, sort_keys=True) + "\n"
    _atomic_write(Path(path), lambda fh: fh.write(text))


@dataclass
class Artifact:
    name: str
    columns: tuple
    data: np.ndarray


@dataclass
class Result:
    artifacts: list
    summary: dict
    n_tr: int | None = None
    convergence: dict | None = None


def emit(result: Result, config: RunConfig, out_dir: Path) -> list[Path]:
    """Write every artifact and its sidecar ``<name>.json``."""
    written = []
    resolved = config.to_dict()
    if result.n_tr is not None:
        resolved["model"]["n_tr"] = result.n_tr
    for art in result.artifacts:
        csv_path = out_dir / f"{art.name}.csv"
        write_csv(csv_path, art.columns, art.data)
        write_json(
            out_dir / f"{art.name}.json",
            {
                "file": csv_path.name,
                "columns": list(art.columns),
                "code_version": __version__,
                "matrix_version": MATRIX_VERSION,
                "config": resolved,
                "seed": config.seed,
                "n_tr": result.n_tr,
                "convergence": result.convergence,
                "summary": result.summary,
            },
        )
        written.append(csv_path)
    return written


# ---------------------------------------------------------------- experiments


def resolve_n_tr(config: RunConfig, **quantity_kwargs) -> tuple[int, dict]:
    """Truncation from the config, running the doubling schedule for ``'auto'``."""
    conv = config.convergence
    n_tr = config.model["n_tr"]
    if n_tr != "auto":
        if n_tr > conv["max_n_tr"]:
            raise ResourceCapError(f"n_tr = {n_tr} exceeds max_n_tr = {conv['max_n_tr']}")
        return n_tr, {"mode": "fixed", "n_tr": n_tr}
    quantity, default_tol = AUTO_TARGET[config.experiment]
    tol = conv["tol"] if conv["tol"] is not None else default_tol
    res = dg.convergence_sweep(
        config.params(), quantity, tol, start=conv["start"], max_n_tr=conv["max_n_tr"], **quantity_kwargs
    )
    history = [
        {"n_tr": n, "value_head": np.atleast_1d(v)[:5]} for n, v in res.history
    ]
    return res.n_tr, {
        "mode": "auto",
        "quantity": res.quantity.value,
        "tol": tol,
        "change_on_doubling": res.change,
        "history": history,
    }


def _quench_setup(config: RunConfig):
    n_tr, conv = resolve_n_tr(config, initial=config.initial_params())
    state = qn.quench(config.initial_params(n_tr), config.params(n_tr))
    n_eig = qn.to_eigenbasis(build_observable(ObservableKind.N, n_tr), state.decomposition)
    return n_tr, conv, state, n_eig


def run_spectrum(config: RunConfig) -> Result:
    n_tr, conv = resolve_n_tr(config)
    dec = decompose_params(config.params(n_tr))
    k = config.options["n_levels"] or dec.dim
    v = dec.vectors[:, :k]
    parity = np.einsum("ik,i,ik->k", v, np.diag(build_parity(n_tr).sym), v)
    mean_n = np.einsum("ik,i,ik->k", v, np.diag(build_observable(ObservableKind.N, n_tr).sym), v)
    data = np.column_stack([np.arange(k), dec.energies[:k], parity, mean_n])
    summary = {"levels": k, "ground_energy": dec.energies[0]}
    return Result([Artifact("spectrum", ("index", "energy", "parity", "mean_n"), data)], summary, n_tr, conv)


def run_levelstats(config: RunConfig) -> Result:
    opts = config.options
    window = tuple(opts["window"])
    n_tr, conv = resolve_n_tr(config, window=window)
    dec = decompose_params(config.params(n_tr))
    hist = dg.spacing_histogram(dec, window, bins=opts["bins"])
    s = dg.level_spacings(dec, window)
    test = dg.spacing_ks_test(s, alpha=opts["alpha"])
    edges = hist.bin_edges
    centre = 0.5 * (edges[1:] + edges[:-1])
    poisson, wd = dg.reference_distributions(centre)
    table = np.column_stack([edges[:-1], edges[1:], centre, hist.counts, poisson, wd])
    summary = {
        "levels_in_window": s.size + 1,
        "mean_spacing": hist.mean_spacing,
        "ks_poisson": test.ks_poisson,
        "ks_wigner_dyson": test.ks_wigner_dyson,
        "critical_value": test.critical,
        "alpha": test.alpha,
        "rejects_poisson": test.rejects_poisson,
        "rejects_wigner_dyson": test.rejects_wigner_dyson,
    }
    if config.model["lambda"] == 0.0:
        try:
            splits, mean_spacing = dg.pair_splittings(dec.energies, upper=0.0)
        except ValueError:
            splits = np.zeros(0)
        if splits.size:
            summary["pairing_below_zero"] = {
                "pairs": splits.size,
                "mean_spacing": mean_spacing,
                "max_splitting": splits.max(),
                "fraction_below_1e-3_spacing": float(np.mean(splits < 1e-3 * mean_spacing)),
            }
    arts = [
        Artifact("levelstats_histogram", ("s_left", "s_right", "s_center", "density", "poisson", "wigner_dyson"), table),
        Artifact("levelstats_spacings", ("spacing",), s[:, None]),
    ]
    return Result(arts, summary, n_tr, conv)


def run_quench_stats(config: RunConfig) -> Result:
    opts = config.options
    n_tr, conv, state, n_eig = _quench_setup(config)
    window = (opts["t_burn"], opts["t_max"])
    mean = qn.long_time_average(state, n_eig)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        delta = qn.long_time_variance(state, n_eig, "spectral", n_samples=opts["n_samples"], window=window,
                                      seed=config.seed)
    sampled = qn.sampled_statistics(state, n_eig, opts["n_samples"], window, config.seed)
    dec = state.decomposition
    mc = dg.microcanonical_average(dec, n_eig, state.energy)
    row = [
        config.model["g"], state.energy, mean, delta, delta / mean if mean else math.nan,
        dg.ipr(state.coeffs), mc, sampled.mean, sampled.std, sampled.mean_stderr, sampled.std_stderr,
        qn.discarded_weight(state),
    ]
    cols = ("g", "energy", "mean_n", "delta_n", "ratio", "ipr", "microcanonical_n",
            "sampled_mean_n", "sampled_delta_n", "sampled_mean_stderr", "sampled_delta_stderr", "discarded_weight")
    gamma = dg.eigenstate_population(state)
    pop = np.column_stack([np.arange(dec.dim), dec.energies, gamma, np.cumsum(gamma)])
    summary = dict(zip(cols, row))
    summary["peak_index"] = int(np.argmax(gamma))
    summary["warnings"] = [str(w.message) for w in caught]
    arts = [
        Artifact("quench_stats", cols, np.array(row)),
        Artifact("population", ("index", "energy", "weight", "cumulative"), pop),
    ]
    return Result(arts, summary, n_tr, conv)


def run_gaussianity(config: RunConfig) -> Result:
    opts = config.options
    n_tr, conv, state, n_eig = _quench_setup(config)
    rep = dg.gaussianity_test(state, n_eig, opts["n_samples"], opts["t_max"], config.seed, opts["t_burn"],
                              opts["alpha"])
    times = qn.sample_times(opts["n_samples"], opts["t_burn"], opts["t_max"], config.seed)
    density, edges = np.histogram(rep.samples, bins=opts["bins"], density=True)
    centre = 0.5 * (edges[1:] + edges[:-1])
    z = (centre - rep.reference_mean) / rep.reference_sigma
    normal = np.exp(-0.5 * z * z) / (rep.reference_sigma * math.sqrt(2 * math.pi))
    summary = {
        "ks_statistic": rep.ks_statistic,
        "critical_value": rep.critical_value,
        "alpha": rep.alpha,
        "passed": rep.passed,
        "reference_mean": rep.reference_mean,
        "reference_sigma": rep.reference_sigma,
    }
    arts = [
        Artifact("gaussianity_samples", ("time", "n_bar"), np.column_stack([times, rep.samples])),
        Artifact("gaussianity_histogram", ("left", "right", "center", "density", "normal_density"),
                 np.column_stack([edges[:-1], edges[1:], centre, density, normal])),
    ]
    return Result(arts, summary, n_tr, conv)


def run_wigner(config: RunConfig) -> Result:
    opts = config.options
    n_tr, conv, state, _ = _quench_setup(config)
    dec = state.decomposition
    summary = {"source": opts["source"]}
    if opts["source"] == "eigenstate":
        idx = int(np.argmin(np.abs(dec.energies - opts["energy"])))
        psi = dec.vectors[:, idx]
        time = None
        summary.update(eigen_index=idx, eigen_energy=dec.energies[idx])
    else:
        time = float(opts["time"])
        psi = wg.state_at_time(state, time)
    rho = wg.reduce_field(psi)
    if opts["extent"] is None:
        grid = wg.default_grid(config.model["g"], rho, opts["points"])
    else:
        grid = wg.GridSpec(opts["extent"], opts["extent"], opts["points"])
    w = wg.wigner_transform(rho, grid, time=time, source=opts["source"])
    summary.update(
        time=time,
        extent=grid.x_max,
        points=grid.points,
        normalization=w.normalization(),
        negativity_volume=w.negativity_volume(),
        imag_residue=w.imag_residue,
        origin_check=w.origin_check,
        support_fraction=w.support_fraction,
        marginal_error=float(np.max(np.abs(w.position_marginal() - w.position_density))),
    )
    xx, pp = np.meshgrid(w.x_axis, w.p_axis, indexing="ij")
    data = np.column_stack([xx.ravel(), pp.ravel(), w.values.ravel()])
    return Result([Artifact("wigner", ("x", "p", "W"), data)], summary, n_tr, conv)


def run_classical(config: RunConfig) -> Result:
    opts = config.options
    params = config.params()
    s0 = sc.state_on_shell(opts["energy"], params, opts["x"], opts["Z"], opts["dphi"], opts["sign"])
    traj = sc.integrate(s0, params, opts["t_end"], opts["dt"], coords=opts["coords"])
    surface = sc.SurfaceSpec(opts["surface"], opts["surface_level"], opts["surface_direction"], tuple(opts["record"]))
    arts = [
        Artifact("classical_trajectory", ("t", "x", "p", "Z", "dphi", "H"),
                 np.column_stack([traj.times, traj.states, traj.energies])),
    ]
    summary = {
        "initial_state": [s0.x, s0.p, s0.Z, s0.dphi],
        "energy_drift": traj.energy_drift,
        "relative_energy_drift": traj.relative_energy_drift,
        "steps": traj.steps,
        "rtol": traj.rtol,
        "atol": traj.atol,
    }
    try:
        sec = sc.poincare_section(traj, surface)
    except ValueError:
        summary["section_points"] = 0
    else:
        arts.append(Artifact("classical_section", ("t", *surface.record, "H"),
                             np.column_stack([sec.times, sec.points, sec.energies])))
        summary["section_points"] = sec.points.shape[0]
        summary["section_max_shell_error"] = float(np.max(np.abs(sec.energies - traj.energies[0])))
    if opts["lyapunov_t"] > 0:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            lyap = sc.lyapunov_largest(s0, params, opts["lyapunov_t"], interval=opts["lyapunov_interval"],
                                       d0=opts["lyapunov_d0"], seed=config.seed)
        arts.append(Artifact("lyapunov", ("t", "exponent"), np.column_stack([lyap.times, lyap.history])))
        summary.update(lyapunov_exponent=lyap.exponent, lyapunov_converged=lyap.converged,
                       warnings=[str(w.message) for w in caught])
    return Result(arts, summary)


def run_sweep(config: RunConfig) -> Result:
    opts = config.options
    conv = config.convergence
    n_tr = config.model["n_tr"]
    if n_tr != "auto" and n_tr > conv["max_n_tr"]:
        raise ResourceCapError(f"n_tr = {n_tr} exceeds max_n_tr = {conv['max_n_tr']}")
    template = config.params(0 if n_tr == "auto" else n_tr)
    tol = conv["tol"] if conv["tol"] is not None else AUTO_TARGET["sweep"][1]
    workers = opts["workers"] or os.cpu_count() or 1
    rows = dg.variance_sweep(
        opts["g_values"], template, config.initial_params(), tol=tol, start=conv["start"],
        max_n_tr=conv["max_n_tr"], workers=workers, initializer=_install_cache, initargs=(config.cache_dir,),
    )
    data = np.array([r.as_tuple() for r in rows])
    g = data[:, 0]
    upper = g >= 0.5 * (g.min() + g.max())
    summary = {"workers": workers, "tol": tol}
    if np.count_nonzero(upper) >= 2 and np.all(data[upper, 1] > 0) and np.all(g[upper] > 0):
        summary.update(
            slope_delta_n=dg.loglog_slope(g[upper], data[upper, 1]),
            slope_mean_n=dg.loglog_slope(g[upper], data[upper, 2]),
        )
    summary.update(
        ratio_at_max_g=float(data[np.argmax(g), 3]),
        ratio_strictly_decreasing=dg.is_strictly_decreasing(data[np.argsort(g), 3]),
    )
    convergence = {"mode": "auto per point" if n_tr == "auto" else "fixed", "n_tr_per_point": data[:, 5]}
    return Result([Artifact("sweep", dg.SweepRow.COLUMNS, data)], summary, None, convergence)


def run_potentials(config: RunConfig) -> Result:
    opts = config.options
    params = config.params()
    x = np.linspace(opts["x_min"], opts["x_max"], opts["points"])
    vm, vp = sc.adiabatic_potentials(x, params)
    summary = {"min_gap_on_grid": float(np.min(vp - vm))}
    if params.g > 0:
        xc = -params.lam / (math.sqrt(2.0) * params.g)
        a, b = sc.adiabatic_potentials(xc, params)
        summary.update(crossing_x=xc, crossing_gap=b - a)
    return Result([Artifact("potentials", ("x", "V_minus", "V_plus"), np.column_stack([x, vm, vp]))], summary)


RUNNERS = {
    "spectrum": run_spectrum,
    "levelstats": run_levelstats,
    "quench-stats": run_quench_stats,
    "gaussianity": run_gaussianity,
    "wigner": run_wigner,
    "classical": run_classical,
    "sweep": run_sweep,
    "potentials": run_potentials,
}


def _install_cache(cache_dir):
    use_store(DecompositionCache(cache_dir) if cache_dir else None)


def run(config: RunConfig) -> list[Path]:
    """Execute ``config`` and write its artifacts; returns the CSV paths."""
    previous = use_store(DecompositionCache(config.cache_dir) if config.cache_dir else None)
    try:
        result = RUNNERS[config.experiment](config)
    finally:
        use_store(previous)
    return emit(result, config, Path(config.output_dir))


# ---------------------------------------------------------------- argument parsing


def _ntr(text: str):
    if text == "auto":
        return "auto"
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer or 'auto', got {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError("n_tr must be >= 0")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rabitherm", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON configuration file")
    common.add_argument("--seed", type=int, help="seed for all random choices")
    common.add_argument("--out", help="output directory")
    common.add_argument("--cache", help="eigendecomposition cache directory")
    common.add_argument("--ntr", type=_ntr, help="boson truncation, or 'auto' for the doubling schedule")
    common.add_argument("--omega", type=float)
    common.add_argument("--g", type=float)
    common.add_argument("--lambda", dest="lam", type=float)
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
    for name in EXPERIMENTS:
        sub.add_parser(name, parents=[common], help=f"run the {name} experiment")
    return parser


def config_from_args(args) -> RunConfig:
    document = {}
    if args.config is not None:
        try:
            document = json.loads(args.config.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}", str(args.config)) from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}",
                              str(args.config)) from None
        if not isinstance(document, dict):
            raise ConfigError("configuration must be a JSON object", "$")
    document = copy.deepcopy(document)
    model = document.setdefault("model", {})
    if not isinstance(model, dict):
        raise ConfigError("expected an object", "model")
    for flag, key in (("omega", "omega"), ("g", "g"), ("lam", "lambda"), ("ntr", "n_tr")):
        value = getattr(args, flag)
        if value is not None:
            model[key] = value
    if args.seed is not None:
        document["seed"] = args.seed
    if args.out is not None:
        document["output_dir"] = args.out
    if args.cache is not None:
        document["cache_dir"] = args.cache
    return build_config(document, args.experiment)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        config = config_from_args(args)
        paths = run(config)
    except ResourceCapError as exc:
        print(f"rabitherm: resource cap: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except NumericalError as exc:
        print(f"rabitherm: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"rabitherm: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for p in paths:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
