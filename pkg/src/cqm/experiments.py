"""Config-driven experiment runner.

Each experiment id carries a default parameter set that regenerates one of
the shipped reference datasets (QFI evolution and coupling sweeps, the
lambda-g QFI map, quadrature sensitivity curves, inverted-variance
evolutions, the peak-ratio and finite-frequency scaling runs, and the
decoherence run).
Configs are flat key=value text; command-line --set overrides win.  Outputs
are CSV files with a '#'-prefixed JSON metadata header carrying the full
resolved config, so a dataset can be regenerated bit-identically (the wall
time field is the only non-deterministic entry).

Cells (the unit of parallelism and of resume) fail independently: a failed
cell is recorded in its rows' status column and the run continues.  Re-running
onto an existing output with an identical config recomputes failed cells only.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import CqmError, ConfigError, NonPositiveData, RegimeError
from .model import ModelParams, Regime, effective_oscillator
from . import closed_form as cf
from . import fock
from . import lindblad as lb

_STATUS_OK = "ok"
_STATUS_SATURATED = "saturated"


# ----------------------------------------------------------------------
# config keys, parsing, experiment registry
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class _Key:
    default: str
    kind: str  # "float" | "int" | "grid" (float array from a:b:n or comma list)
    doc: str


def _parse_value(text: str, kind: str):
    text = text.strip()
    if kind == "float":
        return float(text)
    if kind == "int":
        return int(text)
    if kind == "grid":
        if ":" in text:
            parts = text.split(":")
            if len(parts) != 3:
                raise ConfigError(f"grid '{text}' must be start:stop:num or a comma list")
            start, stop, num = float(parts[0]), float(parts[1]), int(parts[2])
            return np.linspace(start, stop, num)
        return np.array([float(p) for p in text.split(",") if p.strip() != ""])
    raise ConfigError(f"unknown key kind {kind}")


_COMMON = {
    "omega": _Key("1.0", "float", "boson frequency (sets the time/energy unit)"),
    "Omega": _Key("1e4", "float", "qubit frequency (oracle engines only)"),
    "state_dim": _Key("6", "int", "Fock dimension of the reference initial state"),
}

_EXPERIMENTS: dict[str, dict] = {
    "qfi-evolution": {
        "doc": "QFI vs time for couplings near a tuned critical point",
        "engines": ("closed", "oracle", "both"),
        "engine": "closed",
        "keys": {
            **_COMMON,
            "lam": _Key("-0.2475", "float", "quadratic-term strength"),
            "g": _Key("0.097,0.098,0.099", "grid", "couplings, one curve per value"),
            "t": _Key("0:1000:200", "grid", "time grid (units of 1/omega)"),
        },
    },
    "qfi-vs-g": {
        "doc": "QFI vs coupling at a fixed time for several lambda values",
        "engines": ("closed",),
        "engine": "closed",
        "keys": {
            **_COMMON,
            "lam": _Key("0,-0.05,-0.10,-0.15,-0.20", "grid", "quadratic strengths"),
            "g": _Key("0.02:1.10:200", "grid", "coupling grid"),
            "t": _Key("1000", "float", "evaluation time"),
        },
    },
    "qfi-map": {
        "doc": "log10 QFI on a dense lambda-g grid at a fixed time",
        "engines": ("closed",),
        "engine": "closed",
        "keys": {
            **_COMMON,
            "lam": _Key("-0.245:0.25:100", "grid", "lambda grid (rows)"),
            "g": _Key("0.02:1.40:139", "grid", "coupling grid (columns)"),
            "t": _Key("1000", "float", "evaluation time"),
        },
    },
    "quadrature-vs-g": {
        "doc": "quadrature mean vs coupling at a fixed time",
        "engines": ("closed", "oracle", "both"),
        "engine": "closed",
        "keys": {
            **_COMMON,
            "lam": _Key("0,-0.2,-0.247", "grid", "quadratic strengths"),
            "g": _Key("0.02:1.20:220", "grid", "coupling grid"),
            "t": _Key("75", "float", "evaluation time"),
        },
    },
    "inverted-variance": {
        "doc": "inverted-variance evolution for paired (g, lambda) cases",
        "engines": ("closed", "oracle", "both"),
        "engine": "closed",
        "keys": {
            **_COMMON,
            "g": _Key("0.9,0.1,0.1", "grid", "couplings, zipped with lam"),
            "lam": _Key("0,0,-0.247", "grid", "quadratic strengths, zipped with g"),
            "t_per": _Key("0:5:400", "grid", "time grid in units of tau_1 per case"),
        },
    },
    "ratio-scaling": {
        "doc": "peak inverted variance over QFI vs peak index",
        "engines": ("closed", "oracle", "both"),
        "engine": "both",
        "keys": {
            **_COMMON,
            "g": _Key("0.9,0.1", "grid", "couplings, zipped with lam"),
            "lam": _Key("0,-0.247", "grid", "quadratic strengths, zipped with g"),
            "n": _Key("1:20:20", "grid", "peak indices"),
        },
    },
    "frequency-scaling": {
        "doc": "relative discrepancy of the inverted variance vs Omega/omega",
        "engines": ("both",),
        "engine": "both",
        "keys": {
            **_COMMON,
            "g": _Key("0.9,0.1", "grid", "couplings, zipped with lam"),
            "lam": _Key("0,-0.247", "grid", "quadratic strengths, zipped with g"),
            "eta": _Key("1e2,3e2,1e3,3e3,1e4", "grid", "frequency ratios Omega/omega"),
            "n": _Key("1", "int", "peak index of the comparison time tau_n"),
        },
    },
    "decoherence": {
        "doc": "dissipative quadrature dynamics and inverted variance",
        "engines": ("closed", "oracle", "both"),
        "engine": "both",
        "keys": {
            **_COMMON,
            "g": _Key("0.1,0.1", "grid", "couplings, zipped with lam"),
            "lam": _Key("0,-0.247", "grid", "quadratic strengths, zipped with g"),
            "gamma_minus": _Key("0.01", "float", "decay minus heating rate"),
            "gamma_plus": _Key("0.03", "float", "decay plus heating rate"),
            "t_per": _Key("0:10:600", "grid", "time grid in units of tau_1 per case"),
        },
    },
}


def experiment_ids() -> list[str]:
    return list(_EXPERIMENTS)


def config_reference(experiment: str | None = None) -> str:
    """Human-readable reference of config keys, defaults, and output columns."""
    names = [experiment] if experiment else experiment_ids()
    out = io.StringIO()
    for name in names:
        if name not in _EXPERIMENTS:
            raise ConfigError(f"unknown experiment '{name}'")
        entry = _EXPERIMENTS[name]
        out.write(f"{name}: {entry['doc']}\n")
        out.write(f"  engines: {', '.join(entry['engines'])} (default {entry['engine']})\n")
        for key, kd in entry["keys"].items():
            out.write(f"  {key:<12} [{kd.kind:>5}] default={kd.default!r:<22} {kd.doc}\n")
        for engine in entry["engines"]:
            cols, _ = _columns_for(
                ExperimentConfig(name, engine, {})
            )
            out.write(f"  columns ({engine}): {', '.join(cols)}\n")
        out.write("\n")
    return out.getvalue().rstrip("\n")


@dataclass(frozen=True)
class ExperimentConfig:
    """A fully resolved experiment configuration."""

    experiment: str
    engine: str
    values: dict = field(default_factory=dict)

    def canonical(self) -> dict:
        vals = {
            k: (v.tolist() if isinstance(v, np.ndarray) else v)
            for k, v in sorted(self.values.items())
        }
        return {"experiment": self.experiment, "engine": self.engine, "values": vals}

    def hash(self) -> str:
        payload = json.dumps(self.canonical(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def read_config_file(path: str) -> dict[str, str]:
    """Flat key = value text; '#' starts a comment."""
    raw: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            raw[key.strip()] = value.strip()
    return raw


def build_config(
    experiment: str,
    config_file: str | None = None,
    overrides: list[str] | dict[str, str] | None = None,
    engine: str | None = None,
) -> ExperimentConfig:
    """Resolve defaults, an optional config file, and --set overrides."""
    if experiment not in _EXPERIMENTS:
        raise ConfigError(
            f"unknown experiment '{experiment}'; choose from {', '.join(experiment_ids())}"
        )
    entry = _EXPERIMENTS[experiment]
    raw = {k: kd.default for k, kd in entry["keys"].items()}
    chosen_engine = entry["engine"]
    file_values = read_config_file(config_file) if config_file else {}
    if isinstance(overrides, dict):
        override_values = dict(overrides)
    else:
        override_values = {}
        for item in overrides or []:
            if "=" not in item:
                raise ConfigError(f"--set needs key=value, got '{item}'")
            key, _, value = item.partition("=")
            override_values[key.strip()] = value.strip()
    for source in (file_values, override_values):
        for key, value in source.items():
            if key == "engine":
                chosen_engine = value
                continue
            if key not in entry["keys"]:
                raise ConfigError(f"unknown key '{key}' for experiment '{experiment}'")
            raw[key] = value
    if engine is not None:
        chosen_engine = engine
    if chosen_engine not in entry["engines"]:
        raise ConfigError(
            f"engine '{chosen_engine}' not supported by '{experiment}' "
            f"(choose from {', '.join(entry['engines'])})"
        )
    try:
        values = {k: _parse_value(raw[k], kd.kind) for k, kd in entry["keys"].items()}
    except (ValueError, ConfigError) as exc:
        raise ConfigError(f"bad value in config for '{experiment}': {exc}") from exc
    cfg = ExperimentConfig(experiment, chosen_engine, values)
    _validate_config(cfg)
    return cfg


def _validate_config(cfg: ExperimentConfig) -> None:
    v = cfg.values
    if not v["omega"] > 0 or not v["Omega"] > 0:
        raise ConfigError("omega and Omega must be positive")
    if v.get("state_dim", 6) < 5:
        raise ConfigError("state_dim must be >= 5")
    for key in ("g", "lam", "t", "t_per", "eta", "n"):
        if key in v and np.size(v[key]) == 0:
            raise ConfigError(f"grid '{key}' is empty")
    zipped = {"inverted-variance", "ratio-scaling", "frequency-scaling", "decoherence"}
    if cfg.experiment in zipped and np.size(v["g"]) != np.size(v["lam"]):
        raise ConfigError("g and lam are zipped case lists and must have equal length")
    for lam in np.atleast_1d(v["lam"]):
        if not 1.0 + 4.0 * lam / v["omega"] > 0:
            raise ConfigError(f"lam = {lam} violates 1 + 4*lam/omega > 0")


# ----------------------------------------------------------------------
# datasets
# ----------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


@dataclass
class Dataset:
    """Columns with units, stringly-typed rows, and a metadata block."""

    columns: list[str]
    units: dict
    rows: list[list[str]]
    metadata: dict

    def column(self, name: str) -> np.ndarray:
        idx = self.columns.index(name)
        return np.array([float(r[idx]) for r in self.rows])

    def str_column(self, name: str) -> list[str]:
        idx = self.columns.index(name)
        return [r[idx] for r in self.rows]

    @property
    def failed_cells(self) -> set[int]:
        c = self.columns.index("cell")
        s = self.columns.index("status")
        return {int(r[c]) for r in self.rows if r[s].startswith("failed")}

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            meta = dict(self.metadata)
            meta["columns"] = {c: self.units.get(c, "") for c in self.columns}
            fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.columns)
            writer.writerows(self.rows)

    @classmethod
    def read_csv(cls, path: str) -> "Dataset":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline()
            if not header.startswith("# "):
                raise ConfigError(f"{path} lacks the JSON metadata header")
            metadata = json.loads(header[2:])
            reader = csv.reader(fh)
            columns = next(reader)
            rows = [row for row in reader if row]
        units = metadata.pop("columns", {})
        return cls(columns, units, rows, metadata)


# ----------------------------------------------------------------------
# per-experiment cell computation
# ----------------------------------------------------------------------

def _params(v: dict, g: float, lam: float) -> ModelParams:
    return ModelParams(omega=v["omega"], Omega=v["Omega"], g=float(g), lam=float(lam))


def _qfi_any_regime(params: ModelParams, t, state) -> tuple[str, np.ndarray]:
    """(regime name, QFI values) from the matching closed form."""
    regime = effective_oscillator(params).regime
    if regime is Regime.NORMAL:
        return regime.value, np.atleast_1d(cf.qfi_g(params, t, cf.var_n(state, params)).value)
    if regime is Regime.SUPERRADIANT:
        return regime.value, np.atleast_1d(
            cf.qfi_g_beyond(params, t, cf.var_n_beyond(state, params)).value
        )
    raise RegimeError("on the critical line")


def _cells_for(cfg: ExperimentConfig) -> list[dict]:
    v = cfg.values
    name = cfg.experiment
    if name == "qfi-evolution":
        return [{"g": g} for g in v["g"]]
    if name in ("qfi-vs-g", "quadrature-vs-g"):
        return [{"lam": lam, "g": g} for lam in v["lam"] for g in v["g"]]
    if name == "qfi-map":
        return [{"lam": lam} for lam in v["lam"]]
    if name in ("inverted-variance", "ratio-scaling", "decoherence"):
        return [{"g": g, "lam": lam} for g, lam in zip(v["g"], v["lam"])]
    if name == "frequency-scaling":
        return [
            {"g": g, "lam": lam, "eta": eta}
            for g, lam in zip(v["g"], v["lam"])
            for eta in v["eta"]
        ]
    raise ConfigError(f"unknown experiment '{name}'")


def _columns_for(cfg: ExperimentConfig) -> tuple[list[str], dict]:
    both = cfg.engine == "both"
    name = cfg.experiment
    meta = ["cell", "status"]
    u_t = "1/omega"
    if name == "qfi-evolution":
        cols = ["lam", "g", "t", "qfi_closed", "qfi_oracle", "rel_dev", "n_cut"] if both else (
            ["lam", "g", "t", "qfi", "n_cut"] if cfg.engine == "oracle" else ["lam", "g", "t", "qfi"]
        )
        units = {"t": u_t, "qfi": "1", "qfi_closed": "1", "qfi_oracle": "1"}
    elif name == "qfi-vs-g":
        cols = ["lam", "g", "t", "regime", "qfi"]
        units = {"t": u_t, "qfi": "1"}
    elif name == "qfi-map":
        cols = ["lam", "g", "t", "log10_qfi"]
        units = {"t": u_t, "log10_qfi": "1"}
    elif name == "quadrature-vs-g":
        base = ["lam", "g", "t", "regime"]
        if both:
            cols = base + ["x_mean_closed", "x_mean_oracle", "rel_dev", "n_cut"]
        elif cfg.engine == "oracle":
            cols = base + ["x_mean", "n_cut"]
        else:
            cols = base + ["x_mean"]
        units = {"t": u_t, "x_mean": "1"}
    elif name == "inverted-variance":
        phys = ["x_mean", "x_deriv_g", "x_var", "inv_var"]
        if both:
            cols = ["lam", "g", "t"]
            for p in phys:
                cols += [f"{p}_closed", f"{p}_oracle", f"{p}_rel_dev"]
            cols += ["n_cut"]
        elif cfg.engine == "oracle":
            cols = ["lam", "g", "t"] + phys + ["n_cut"]
        else:
            cols = ["lam", "g", "t"] + phys
        units = {"t": u_t}
    elif name == "ratio-scaling":
        cols = ["lam", "g", "n", "tau_n", "ratio_analytic"]
        if cfg.engine in ("oracle", "both"):
            cols += ["ratio_numeric", "rel_dev", "n_cut"]
        units = {"tau_n": u_t}
    elif name == "frequency-scaling":
        cols = ["lam", "g", "eta", "n", "tau_n", "inv_var_exact", "inv_var_limit",
                "delta", "abs_delta", "n_cut"]
        units = {"tau_n": u_t}
    elif name == "decoherence":
        phys = ["x_mean", "x_var", "inv_var"]
        cols = ["lam", "g", "gamma_minus", "gamma_plus", "t"]
        if both:
            for p in phys:
                cols += [f"{p}_closed", f"{p}_oracle", f"{p}_rel_dev"]
        else:
            cols += phys
        units = {"t": u_t, "gamma_minus": "omega", "gamma_plus": "omega"}
    else:
        raise ConfigError(f"unknown experiment '{name}'")
    return cols + meta, units


def _rel_dev(closed: np.ndarray, oracle: np.ndarray) -> np.ndarray:
    """Deviation relative to the closed-form curve scale (sup-norm style)."""
    scale = np.abs(closed).max()
    if scale == 0.0:
        scale = 1.0
    return np.abs(oracle - closed) / scale


def _compute_cell(cfg: ExperimentConfig, cell: dict) -> list[dict]:
    """Rows (column -> python value) for one cell; may raise CqmError."""
    v = cfg.values
    name = cfg.experiment
    engine = cfg.engine
    state = cf.default_initial_state(v["state_dim"])

    if name == "qfi-evolution":
        params = _params(v, cell["g"], v["lam"])
        ts = v["t"]
        closed = cf.qfi_g(params, ts, cf.var_n(state, params)).value
        rows = []
        if engine == "closed":
            for t, q in zip(ts, closed):
                rows.append({"lam": v["lam"], "g": cell["g"], "t": t, "qfi": q})
            return rows
        oracle, n_cut = fock.generator_qfi_grid(params, ts, psi0=state, return_n_cut=True)
        if engine == "oracle":
            for t, q in zip(ts, oracle):
                rows.append({"lam": v["lam"], "g": cell["g"], "t": t, "qfi": q, "n_cut": n_cut})
            return rows
        dev = _rel_dev(closed, oracle)
        for t, qc, qo, d in zip(ts, closed, oracle, dev):
            rows.append({
                "lam": v["lam"], "g": cell["g"], "t": t,
                "qfi_closed": qc, "qfi_oracle": qo, "rel_dev": d, "n_cut": n_cut,
            })
        return rows

    if name == "qfi-vs-g":
        params = _params(v, cell["g"], cell["lam"])
        try:
            regime, q = _qfi_any_regime(params, v["t"], state)
        except RegimeError:
            return [{
                "lam": cell["lam"], "g": cell["g"], "t": v["t"],
                "regime": Regime.CRITICAL.value, "qfi": np.inf,
                "status": _STATUS_SATURATED,
            }]
        return [{"lam": cell["lam"], "g": cell["g"], "t": v["t"],
                 "regime": regime, "qfi": float(q[0])}]

    if name == "qfi-map":
        rows = []
        for g in v["g"]:
            params = _params(v, g, cell["lam"])
            try:
                _, q = _qfi_any_regime(params, v["t"], state)
                rows.append({"lam": cell["lam"], "g": g, "t": v["t"],
                             "log10_qfi": float(np.log10(q[0]))})
            except RegimeError:
                rows.append({"lam": cell["lam"], "g": g, "t": v["t"],
                             "log10_qfi": np.inf, "status": _STATUS_SATURATED})
        return rows

    if name == "quadrature-vs-g":
        params = _params(v, cell["g"], cell["lam"])
        regime = effective_oscillator(params).regime
        base = {"lam": cell["lam"], "g": cell["g"], "t": v["t"], "regime": regime.value}
        if regime is Regime.CRITICAL:
            base["status"] = _STATUS_SATURATED
            return [base]
        closed = (
            cf.x_mean(params, v["t"]) if regime is Regime.NORMAL
            else cf.x_mean_beyond(params, v["t"])
        )
        if engine == "closed":
            return [{**base, "x_mean": closed}]
        series = fock.quadrature_series(params, [v["t"]], psi0=state)
        oracle = float(series.x_mean[0])
        if engine == "oracle":
            return [{**base, "x_mean": oracle, "n_cut": series.n_cut}]
        dev = abs(oracle - closed) / max(abs(closed), 1e-300)
        return [{**base, "x_mean_closed": closed, "x_mean_oracle": oracle,
                 "rel_dev": dev, "n_cut": series.n_cut}]

    if name == "inverted-variance":
        params = _params(v, cell["g"], cell["lam"])
        tau1 = float(cf.optimal_times(params, 1)[0])
        ts = v["t_per"] * tau1
        base = {"lam": cell["lam"], "g": cell["g"]}
        closed = {
            "x_mean": np.atleast_1d(cf.x_mean(params, ts)),
            "x_deriv_g": np.atleast_1d(cf.x_deriv_g(params, ts)),
            "x_var": np.atleast_1d(cf.x_variance(params, ts)),
            "inv_var": np.atleast_1d(cf.inverted_variance(params, ts)),
        }
        if engine == "closed":
            return [
                {**base, "t": t, **{k: closed[k][i] for k in closed}}
                for i, t in enumerate(ts)
            ]
        series = fock.quadrature_series(params, ts, psi0=state)
        oracle = {"x_mean": series.x_mean, "x_deriv_g": series.x_deriv_g,
                  "x_var": series.x_var, "inv_var": series.inv_var}
        if engine == "oracle":
            return [
                {**base, "t": t, **{k: oracle[k][i] for k in oracle}, "n_cut": series.n_cut}
                for i, t in enumerate(ts)
            ]
        devs = {k: _rel_dev(closed[k], oracle[k]) for k in closed}
        rows = []
        for i, t in enumerate(ts):
            row = {**base, "t": t, "n_cut": series.n_cut}
            for k in closed:
                row[f"{k}_closed"] = closed[k][i]
                row[f"{k}_oracle"] = oracle[k][i]
                row[f"{k}_rel_dev"] = devs[k][i]
            rows.append(row)
        return rows

    if name == "ratio-scaling":
        params = _params(v, cell["g"], cell["lam"])
        ns = np.asarray(np.rint(v["n"]), dtype=int)
        taus = cf.optimal_times(params, int(ns.max()))
        analytic = cf.ig_fg_ratio(state, params)
        rows = []
        if engine == "closed":
            for n in ns:
                rows.append({"lam": cell["lam"], "g": cell["g"], "n": int(n),
                             "tau_n": taus[n - 1], "ratio_analytic": analytic})
            return rows
        sel = taus[ns - 1]
        series = fock.quadrature_series(params, sel, psi0=state)
        qfis = fock.generator_qfi_grid(params, sel, psi0=state)
        numeric = series.inv_var / qfis
        for i, n in enumerate(ns):
            rows.append({
                "lam": cell["lam"], "g": cell["g"], "n": int(n), "tau_n": sel[i],
                "ratio_analytic": analytic, "ratio_numeric": numeric[i],
                "rel_dev": abs(numeric[i] - analytic) / analytic,
                "n_cut": series.n_cut,
            })
        return rows

    if name == "frequency-scaling":
        params = _params(v, cell["g"], cell["lam"])
        point = fock.finite_frequency_point(params, cell["eta"], n=v["n"])
        return [{
            "lam": cell["lam"], "g": cell["g"], "eta": point.eta, "n": point.n,
            "tau_n": point.tau, "inv_var_exact": point.inv_var_exact,
            "inv_var_limit": point.inv_var_limit, "delta": point.delta,
            "abs_delta": abs(point.delta), "n_cut": point.n_cut,
        }]

    if name == "decoherence":
        params = _params(v, cell["g"], cell["lam"])
        rates = lb.DecayRates.from_plus_minus(v["gamma_plus"], v["gamma_minus"])
        tau1 = float(cf.optimal_times(params, 1)[0])
        ts = v["t_per"] * tau1
        base = {"lam": cell["lam"], "g": cell["g"],
                "gamma_minus": rates.gamma_minus, "gamma_plus": rates.gamma_plus}
        closed = {
            "x_mean": np.atleast_1d(lb.x_mean_dissipative(params, rates, ts)),
            "x_var": np.atleast_1d(lb.x_variance_dissipative(params, rates, ts)),
            "inv_var": np.atleast_1d(lb.inverted_variance_dissipative(params, rates, ts)),
        }
        if engine == "closed":
            return [{**base, "t": t, **{k: closed[k][i] for k in closed}}
                    for i, t in enumerate(ts)]
        # the ODE runs from t = 0; prepend it when the grid starts later
        ode_ts = ts if ts[0] == 0.0 else np.concatenate([[0.0], ts])
        skip = len(ode_ts) - len(ts)
        traj = lb.integrate_moments(lb.REFERENCE_STATE_MOMENTS, params, rates, ode_ts)
        dxdg = np.atleast_1d(lb.x_deriv_g_dissipative(params, rates, ts))
        oracle = {
            "x_mean": traj.moment("x")[skip:],
            "x_var": traj.x_variance()[skip:],
            "inv_var": dxdg**2 / traj.x_variance()[skip:],
        }
        if engine == "oracle":
            return [{**base, "t": t, **{k: oracle[k][i] for k in oracle}}
                    for i, t in enumerate(ts)]
        devs = {k: _rel_dev(closed[k], oracle[k]) for k in closed}
        rows = []
        for i, t in enumerate(ts):
            row = {**base, "t": t}
            for k in closed:
                row[f"{k}_closed"] = closed[k][i]
                row[f"{k}_oracle"] = oracle[k][i]
                row[f"{k}_rel_dev"] = devs[k][i]
            rows.append(row)
        return rows

    raise ConfigError(f"unknown experiment '{name}'")


def _run_cell(args: tuple) -> tuple[int, list[list[str]]]:
    """Worker: compute one cell and render its rows as strings."""
    cfg_canonical, index, cell, columns = args
    cfg = ExperimentConfig(
        cfg_canonical["experiment"],
        cfg_canonical["engine"],
        {k: (np.asarray(v) if isinstance(v, list) else v)
         for k, v in cfg_canonical["values"].items()},
    )
    try:
        rows = _compute_cell(cfg, cell)
    except CqmError as exc:
        row = {**{k: cell.get(k, np.nan) for k in ("lam", "g", "eta")},
               "status": f"failed:{type(exc).__name__}"}
        rows = [row]
    rendered = []
    for row in rows:
        row.setdefault("status", _STATUS_OK)
        row["cell"] = index
        rendered.append([_fmt(row.get(c, np.nan)) for c in columns])
    return index, rendered


# ----------------------------------------------------------------------
# the runner
# ----------------------------------------------------------------------

def run(
    cfg: ExperimentConfig,
    jobs: int | None = None,
    resume: Dataset | None = None,
) -> Dataset:
    """Execute every cell of ``cfg`` and assemble the Dataset.

    With ``resume`` (a previously written Dataset whose config hash matches),
    rows of cells that completed are reused verbatim and only failed cells
    are recomputed.
    """
    started = time.monotonic()
    columns, units = _columns_for(cfg)
    cells = _cells_for(cfg)
    reuse: dict[int, list[list[str]]] = {}
    if resume is not None:
        if resume.metadata.get("config_hash") != cfg.hash():
            raise ConfigError("resume dataset was produced by a different config")
        failed = resume.failed_cells
        cell_col = resume.columns.index("cell")
        for row in resume.rows:
            idx = int(row[cell_col])
            if idx not in failed:
                reuse.setdefault(idx, []).append(row)
    todo = [i for i in range(len(cells)) if i not in reuse]
    canonical = cfg.canonical()
    args = [(canonical, i, cells[i], columns) for i in todo]
    results: dict[int, list[list[str]]] = {}
    jobs = jobs if jobs is not None else (os.cpu_count() or 1)
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for index, rendered in pool.map(_run_cell, args, chunksize=8):
                results[index] = rendered
    else:
        for a in args:
            index, rendered = _run_cell(a)
            results[index] = rendered
    rows: list[list[str]] = []
    for i in range(len(cells)):
        rows.extend(reuse.get(i, results.get(i, [])))
    status_idx = columns.index("status")
    n_failed = sum(1 for r in rows if r[status_idx].startswith("failed"))
    metadata = {
        "experiment": cfg.experiment,
        "engine": cfg.engine,
        "config": canonical["values"],
        "config_hash": cfg.hash(),
        "version": __version__,
        "cells_total": len(cells),
        "cells_computed": len(todo),
        "cells_failed_now": n_failed,
        "wall_time_s": round(time.monotonic() - started, 3),
    }
    dataset = Dataset(columns, units, rows, metadata)
    if cfg.experiment == "frequency-scaling" and n_failed == 0:
        _attach_slopes(dataset)
    return dataset


def _attach_slopes(dataset: Dataset) -> None:
    lam = dataset.column("lam")
    g = dataset.column("g")
    eta = dataset.column("eta")
    delta = dataset.column("abs_delta")
    slopes = {}
    for case in sorted(set(zip(lam.tolist(), g.tolist()))):
        mask = (lam == case[0]) & (g == case[1])
        fit = fit_loglog_slope((eta[mask], delta[mask]))
        slopes[f"lam={_fmt(case[0])},g={_fmt(case[1])}"] = {
            "slope": fit.slope, "stderr": fit.stderr,
        }
    dataset.metadata["loglog_slopes"] = slopes


def sweep_map(cfg: ExperimentConfig, jobs: int | None = None) -> Dataset:
    """The dense lambda-g map; thin alias of run() for the map experiment."""
    if cfg.experiment != "qfi-map":
        raise ConfigError("sweep_map expects a qfi-map config")
    return run(cfg, jobs=jobs)


# ----------------------------------------------------------------------
# slope fitting
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class SlopeFit:
    slope: float
    stderr: float
    intercept: float


def fit_loglog_slope(
    data: "Dataset | tuple",
    x_col: str = "eta",
    y_col: str = "abs_delta",
) -> SlopeFit:
    """Least-squares slope of log(y) vs log(x) with its standard error.

    Accepts a Dataset (columns named by x_col/y_col) or an (x, y) pair.
    """
    if isinstance(data, Dataset):
        x, y = data.column(x_col), data.column(y_col)
    else:
        x, y = (np.asarray(a, dtype=float) for a in data)
    if len(x) < 5:
        raise NonPositiveData(f"need >= 5 points, got {len(x)}")
    if np.any(x <= 0) or np.any(y <= 0):
        raise NonPositiveData("log-log fit needs strictly positive data")
    lx, ly = np.log(x), np.log(y)
    design = np.vstack([np.ones_like(lx), lx]).T
    coef, *_ = np.linalg.lstsq(design, ly, rcond=None)
    residual = ly - design @ coef
    dof = max(1, len(x) - 2)
    sigma2 = float(residual @ residual) / dof
    cov = sigma2 * np.linalg.inv(design.T @ design)
    return SlopeFit(slope=float(coef[1]), stderr=float(np.sqrt(cov[1, 1])),
                    intercept=float(coef[0]))
