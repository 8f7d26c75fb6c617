"""JSON run configuration: model, experiment and solver sections.

A configuration is a JSON object with up to three keys.  "model" either
names a builtin ("mueller-koehler") or spells out dimensions, expression
strings and certificate constants; "experiment" holds horizon, period,
step count, initial state and history; "solver" overrides tolerances,
iteration caps and the restart seed.  Histories accept explicit columns
or the shorthands "steady" and "constant:x,u" (filled with the output at
that point).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError
from .history import HistoryState, constant_history, steady_history
from .model import (
    DissipativityCertificate,
    SteadyState,
    SystemModel,
    validate_certificate,
)
from .ocp import SolverOptions

BUILTIN_MODELS = ("mueller-koehler",)

_MUELLER_KOEHLER = {
    "n": 1,
    "m": 1,
    "f": ["x1 * u1"],
    "ell": "(x1 - 3)^2 + u1^2",
    "h": ["2*x1 + u1 - 5"],
    "z_lower": [-10.0, -10.0],
    "z_upper": [10.0, 10.0],
    "lam": "1.5 * (x1 - 2)",
    "lambda_bar": [1.0],
    "a": 0.25,
    "omega": 2.0,
    "L_h": 3.0,
    "steady_state": {"x": [2.0], "u": [1.0]},
}


@dataclass
class RunConfig:
    """Fully resolved configuration ready to execute."""

    model: SystemModel
    cert: DissipativityCertificate
    ss: SteadyState
    N: int = 12
    T: int = 6
    K: int = 30
    x0: Optional[np.ndarray] = None
    history_spec: str | list = "steady"
    options: SolverOptions = field(default_factory=SolverOptions)
    epsilon: float = 0.1

    def history(self) -> HistoryState:
        return parse_history(self.history_spec, self.model, self.ss, self.T)

    def initial_state(self) -> np.ndarray:
        return self.ss.x_s.copy() if self.x0 is None else self.x0


def builtin_model_data(name: str) -> dict:
    if name != "mueller-koehler":
        raise ConfigError(
            f"unknown builtin model {name!r}; available: {', '.join(BUILTIN_MODELS)}"
        )
    return dict(_MUELLER_KOEHLER)


def _build_model(data: dict):
    try:
        n = int(data["n"])
        m = int(data["m"])
        f_sources = list(data["f"])
        ell_source = data["ell"]
        h_sources = list(data["h"])
        z_lower = data["z_lower"]
        z_upper = data["z_upper"]
    except KeyError as exc:
        raise ConfigError(f"model definition missing key {exc.args[0]!r}") from None
    model = SystemModel.from_expressions(
        n=n,
        m=m,
        f_sources=f_sources,
        ell_source=ell_source,
        h_sources=h_sources,
        z_lower=z_lower,
        z_upper=z_upper,
    )
    try:
        cert = DissipativityCertificate.from_expression(
            n=n,
            lam_source=data["lam"],
            lambda_bar=data["lambda_bar"],
            a=data["a"],
            omega=data["omega"],
            L_h=data["L_h"],
        )
    except KeyError as exc:
        raise ConfigError(f"certificate missing key {exc.args[0]!r}") from None
    return model, cert


def _resolve_steady_state(model, data: dict) -> SteadyState:
    from .model import solve_steady_state

    given = data.get("steady_state")
    if given is None:
        return solve_steady_state(model)
    x_s = np.atleast_1d(np.asarray(given["x"], dtype=float))
    u_s = np.atleast_1d(np.asarray(given["u"], dtype=float))
    return SteadyState(
        x_s=x_s,
        u_s=u_s,
        ell_s=float(model.ell(x_s, u_s)),
        h_s=np.atleast_1d(np.asarray(model.h(x_s, u_s), dtype=float)),
    )


def parse_history(spec, model, ss, T: int) -> HistoryState:
    """Build the initial history from a shorthand or explicit columns."""
    if isinstance(spec, str):
        text = spec.strip()
        if text == "steady":
            return steady_history(ss.h_s, T)
        if text.startswith("constant:"):
            parts = [float(v) for v in text[len("constant:") :].split(",")]
            if len(parts) != model.n + model.m:
                raise ConfigError(
                    f"constant history needs {model.n + model.m} numbers (x then u)"
                )
            x_hat = np.array(parts[: model.n])
            u_hat = np.array(parts[model.n :])
            h_val = np.atleast_1d(np.asarray(model.h(x_hat, u_hat), dtype=float))
            return constant_history(h_val, T)
        # explicit columns: semicolons separate columns, commas entries
        columns = [
            [float(v) for v in col.split(",")] for col in text.split(";") if col.strip()
        ]
        spec = columns
    cols = np.asarray(spec, dtype=float)
    if cols.ndim == 1:
        cols = cols.reshape(1, -1) if model.p == 1 else cols.reshape(-1, 1)
    if cols.shape[0] == T - 1 and cols.shape[1] == model.p and cols.shape[0] != cols.shape[1]:
        cols = cols.T  # accept row-per-step layout
    if cols.shape != (model.p, T - 1):
        raise ConfigError(
            f"history must have shape ({model.p}, {T - 1}), got {cols.shape}"
        )
    return HistoryState(columns=cols, T=T)


def load_config(
    path: Optional[str] = None,
    model_name: Optional[str] = None,
    overrides: Optional[dict] = None,
) -> RunConfig:
    """Assemble a RunConfig from a JSON file and/or a builtin model name.

    overrides maps experiment/solver field names to values (CLI flags);
    None values are ignored.
    """
    raw: dict = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("top-level configuration must be a JSON object")

    model_section = raw.get("model", {})
    if isinstance(model_section, str):
        model_section = {"builtin": model_section}
    if model_name is not None:
        model_section = {"builtin": model_name}
    if "builtin" in model_section or not model_section:
        data = builtin_model_data(model_section.get("builtin", "mueller-koehler"))
        data.update({k: v for k, v in model_section.items() if k != "builtin"})
    else:
        data = model_section
    model, cert = _build_model(data)
    ss = _resolve_steady_state(model, data)
    validate_certificate(cert, ss)

    exp = dict(raw.get("experiment", {}))
    solver = dict(raw.get("solver", {}))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key in ("feas_tol", "stat_tol", "penalty_init", "penalty_growth",
                   "penalty_max", "max_outer", "max_inner", "seed"):
            solver[key] = value
        else:
            exp[key] = value

    known = {f.name for f in SolverOptions.__dataclass_fields__.values()}
    bad = set(solver) - known
    if bad:
        raise ConfigError(f"unknown solver options: {sorted(bad)}")
    options = SolverOptions(**solver)

    N = int(exp.get("N", 12))
    T = int(exp.get("T", 6))
    K = int(exp.get("K", 30))
    if T < 1 or N < T:
        raise ConfigError(f"need N >= T >= 1, got N={N}, T={T}")
    if K < 1:
        raise ConfigError(f"K must be >= 1, got K={K}")
    x0 = exp.get("x0")
    if x0 is not None:
        if isinstance(x0, str):
            x0 = [float(v) for v in x0.split(",")]
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        if x0.shape != (model.n,):
            raise ConfigError(f"x0 must have {model.n} entries")
    epsilon = float(exp.get("eps", exp.get("epsilon", 0.1)))
    config = RunConfig(
        model=model,
        cert=cert,
        ss=ss,
        N=N,
        T=T,
        K=K,
        x0=x0,
        history_spec=exp.get("history", "steady"),
        options=options,
        epsilon=epsilon,
    )
    config.history()  # validate early
    return config
