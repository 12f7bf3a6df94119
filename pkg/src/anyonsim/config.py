"""Run configuration: schema validation, presets, and model assembly.

A run configuration is a single JSON object. Unknown keys are rejected and
every cross-reference (link endpoints against ``n_sites``, state dimension
against the manifold) is checked; failures raise :class:`ConfigError`
carrying the dotted path of the offending entry.

Precedence when assembling the effective configuration:
preset defaults < configuration file < ``--set`` overrides.
"""

from __future__ import annotations

import copy
import json
import math
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .linalg import bloch_state, pure_state_density
from .noise import BathSpectrum, CorrelationMatrix, OrnsteinUhlenbeck, QuantumBath, Wiener
from .operators import HilbertSpace, Link, build_jw_anyon_ops, exchange_current, number_operator
from .trajectories import SimulationGrid, StochasticModel, two_mode_model

_PI = math.pi

PRESETS: dict[str, dict] = {
    "fig2": {
        "system": {
            "manifold": "two_mode",
            "theta": 0.0,
            "links": [
                {"i": 1, "j": 0, "amplitude": 0.1, "phase_offset": 0.0},
                {"i": 1, "j": 0, "amplitude": 0.1, "phase_offset": 0.0},
            ],
        },
        "noise": {"kind": "wiener", "d_phi": 1.0, "correlation": {"xi": 0.0}},
        "initial_state": {"kind": "bloch", "r": [1.0, 0.0, 0.0]},
        "sweep": {
            "parameter": "xi",
            "values": [0.0, 0.5, 0.9],
            "theta_grid": {"start": 0.0, "stop": _PI, "points": 721},
        },
    },
    "two-link-dfs": {
        "system": {
            "manifold": "two_mode",
            "theta": 0.0,
            "links": [
                {"i": 1, "j": 0, "amplitude": 0.1, "phase_offset": 0.0},
                {"i": 1, "j": 0, "amplitude": 0.1, "phase_offset": _PI / 2},
            ],
        },
        "noise": {"kind": "wiener", "d_phi": 1.0, "correlation": {"xi": 1.0}},
        "dfs": {"verify_dynamics": True, "horizon_over_J": 10.0},
    },
    "ep-sweep": {
        "system": {
            "manifold": "two_mode",
            "theta": 0.0,
            "links": [{"i": 1, "j": 0, "amplitude": 1.0, "phase_offset": 0.0}],
        },
        "noise": {"kind": "wiener", "d_phi": 1.0, "correlation": {"xi": 0.0}},
        "spectrum": {"model": "collective_loss", "gamma": 1.0},
        "sweep": {"parameter": "xi", "values": [round(x, 10) for x in np.linspace(-1.0, 1.0, 41).tolist()]},
    },
    "converge": {
        "system": {
            "manifold": "two_mode",
            "theta": _PI / 2,
            "links": [{"i": 1, "j": 0, "amplitude": 0.1, "phase_offset": 0.0}],
        },
        "noise": {"kind": "wiener", "d_phi": 1.0, "correlation": {"xi": 0.0}},
        "initial_state": {"kind": "bloch", "r": [0.0, 1.0, 0.0]},
        "grid": {"t_final": 250.0, "dt": 0.05, "record_stride": 100},
        "ensemble": {"n_traj": 10000, "master_seed": 20260809},
        "converge": {"threshold": 0.02},
    },
    "algebra": {
        "system": {"manifold": "lattice", "n_sites": 2, "cutoff": 1, "theta": 0.0},
        "algebra": {"theta_values": [round(k * _PI / 4, 12) for k in range(8)]},
    },
    "lifetime": {
        "system": {
            "manifold": "two_mode",
            "theta": _PI / 2,
            "links": [{"i": 1, "j": 0, "amplitude": 0.1, "phase_offset": 0.0}],
        },
        "noise": {"kind": "wiener", "d_phi": 1.0, "correlation": {"xi": 0.0}, "gamma_res": 0.0},
        "initial_state": {"kind": "bloch", "r": [1.0, 0.0, 0.0]},
    },
}

COMMAND_DEFAULT_PRESET = {
    "algebra-check": "algebra",
    "sweep": "fig2",
    "converge": "converge",
    "spectrum": "ep-sweep",
    "lifetime": "lifetime",
    "dfs": "two-link-dfs",
}


def deep_merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config_file(path: str | Path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}")
    if not isinstance(data, dict):
        raise ConfigError("top-level config must be a JSON object")
    return data


def _parse_set_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_override(config: dict, assignment: str) -> dict:
    """Apply one ``--set path.to.key=value`` override (JSON-parsed value)."""
    if "=" not in assignment:
        raise ConfigError(f"--set needs KEY=VALUE, got {assignment!r}")
    path, raw = assignment.split("=", 1)
    keys = path.strip().split(".")
    if not all(keys):
        raise ConfigError(f"bad --set path {path!r}")
    out = copy.deepcopy(config)
    node = out
    for k, key in enumerate(keys[:-1]):
        nxt = keys[k + 1]
        if key.isdigit():
            idx = int(key)
            if not isinstance(node, list) or idx >= len(node):
                raise ConfigError("list index out of range", ".".join(keys[: k + 1]))
            node = node[idx]
        else:
            if not isinstance(node, dict):
                raise ConfigError("cannot descend into a scalar", ".".join(keys[: k + 1]))
            if key not in node:
                node[key] = [] if nxt.isdigit() else {}
            node = node[key]
    last = keys[-1]
    value = _parse_set_value(raw)
    if last.isdigit():
        idx = int(last)
        if not isinstance(node, list):
            raise ConfigError("cannot index a non-list", path)
        if idx == len(node):
            node.append(value)
        elif idx < len(node):
            node[idx] = value
        else:
            raise ConfigError("list index out of range", path)
    else:
        if not isinstance(node, dict):
            raise ConfigError("cannot assign into a scalar", path)
        node[last] = value
    return out


# ---------------------------------------------------------------------------
# validation


def _check_keys(section: dict, allowed: set[str], path: str):
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)}", path)


def _require(section: dict, key: str, path: str):
    if key not in section:
        raise ConfigError(f"missing required key {key!r}", path)
    return section[key]


def _number(value, path: str, minimum=None, maximum=None, strict_min=False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", path)
    v = float(value)
    if not math.isfinite(v):
        raise ConfigError("value must be finite", path)
    if minimum is not None and (v < minimum or (strict_min and v <= minimum)):
        raise ConfigError(f"value {v} below minimum {minimum}", path)
    if maximum is not None and v > maximum:
        raise ConfigError(f"value {v} above maximum {maximum}", path)
    return v


def _integer(value, path: str, minimum=None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"expected an integer, got {value!r}", path)
    if minimum is not None and value < minimum:
        raise ConfigError(f"value {value} below minimum {minimum}", path)
    return value


def validate_config(config: dict) -> dict:
    """Validate a full configuration; returns it unchanged on success."""
    if not isinstance(config, dict):
        raise ConfigError("config must be an object")
    _check_keys(
        config,
        {"system", "noise", "initial_state", "grid", "ensemble", "sweep", "spectrum", "converge", "dfs", "algebra", "workers"},
        "config",
    )

    system = config.get("system", {})
    _check_keys(system, {"manifold", "n_sites", "cutoff", "theta", "site_energies", "links"}, "system")
    manifold = system.get("manifold", "two_mode")
    if manifold not in ("two_mode", "lattice"):
        raise ConfigError(f"manifold must be two_mode or lattice, got {manifold!r}", "system.manifold")
    n_sites = _integer(system.get("n_sites", 2), "system.n_sites", minimum=1)
    _integer(system.get("cutoff", 1), "system.cutoff", minimum=1)
    _number(system.get("theta", 0.0), "system.theta")
    energies = system.get("site_energies")
    if energies is not None:
        if not isinstance(energies, list):
            raise ConfigError("site_energies must be a list", "system.site_energies")
        expected = 2 if manifold == "two_mode" else n_sites
        if len(energies) != expected:
            raise ConfigError(f"need {expected} site energies, got {len(energies)}", "system.site_energies")
        for k, e in enumerate(energies):
            _number(e, f"system.site_energies.{k}")
    links = system.get("links", [])
    if not isinstance(links, list):
        raise ConfigError("links must be a list", "system.links")
    for k, link in enumerate(links):
        path = f"system.links.{k}"
        if not isinstance(link, dict):
            raise ConfigError("link must be an object", path)
        _check_keys(link, {"i", "j", "amplitude", "phase_offset"}, path)
        i = _integer(_require(link, "i", path), f"{path}.i", minimum=0)
        j = _integer(_require(link, "j", path), f"{path}.j", minimum=0)
        if i == j:
            raise ConfigError("link endpoints must differ", path)
        bound = 2 if manifold == "two_mode" else n_sites
        if i >= bound or j >= bound:
            raise ConfigError(f"link endpoint outside 0..{bound - 1}", path)
        _number(link.get("amplitude", 1.0), f"{path}.amplitude", minimum=0.0)
        _number(link.get("phase_offset", 0.0), f"{path}.phase_offset")

    noise = config.get("noise", {})
    _check_keys(noise, {"kind", "d_phi", "sigma", "tau_c", "bath", "correlation", "gamma_res"}, "noise")
    kind = noise.get("kind", "wiener")
    if kind not in ("wiener", "ou", "quantum"):
        raise ConfigError(f"noise kind must be wiener, ou or quantum, got {kind!r}", "noise.kind")
    if kind == "wiener":
        _number(noise.get("d_phi", 1.0), "noise.d_phi", minimum=0.0)
    elif kind == "ou":
        _number(_require(noise, "sigma", "noise"), "noise.sigma", minimum=0.0)
        _number(_require(noise, "tau_c", "noise"), "noise.tau_c", minimum=0.0, strict_min=True)
    else:
        bath = _require(noise, "bath", "noise")
        _check_keys(bath, {"coupling", "temperature", "cutoff", "family"}, "noise.bath")
        _number(_require(bath, "coupling", "noise.bath"), "noise.bath.coupling", minimum=0.0)
        _number(_require(bath, "temperature", "noise.bath"), "noise.bath.temperature", minimum=0.0)
        _number(_require(bath, "cutoff", "noise.bath"), "noise.bath.cutoff", minimum=0.0, strict_min=True)
    corr = noise.get("correlation", {})
    _check_keys(corr, {"xi", "matrix"}, "noise.correlation")
    if "xi" in corr and "matrix" in corr:
        raise ConfigError("give either xi or matrix, not both", "noise.correlation")
    if "xi" in corr:
        _number(corr["xi"], "noise.correlation.xi", minimum=-1.0, maximum=1.0)
    if "matrix" in corr:
        m = corr["matrix"]
        if not isinstance(m, list) or not all(isinstance(row, list) for row in m):
            raise ConfigError("matrix must be a list of rows", "noise.correlation.matrix")
        n = len(m)
        if any(len(row) != n for row in m):
            raise ConfigError("matrix must be square", "noise.correlation.matrix")
        for r, row in enumerate(m):
            for c, v in enumerate(row):
                _number(v, f"noise.correlation.matrix.{r}.{c}")
        if links and n != len(links):
            raise ConfigError(f"{n}x{n} correlation matrix for {len(links)} links", "noise.correlation.matrix")
    _number(noise.get("gamma_res", 0.0), "noise.gamma_res", minimum=0.0)

    state = config.get("initial_state", {"kind": "bloch", "r": [1.0, 0.0, 0.0]})
    _check_keys(state, {"kind", "r", "site", "re", "im"}, "initial_state")
    skind = state.get("kind", "bloch")
    if skind == "bloch":
        r = state.get("r", [1.0, 0.0, 0.0])
        if not (isinstance(r, list) and len(r) == 3):
            raise ConfigError("bloch state needs a 3-component r", "initial_state.r")
        for k, v in enumerate(r):
            _number(v, f"initial_state.r.{k}")
        if math.hypot(*[float(v) for v in r]) > 1.0 + 1e-12:
            raise ConfigError("Bloch vector norm exceeds 1", "initial_state.r")
        if manifold != "two_mode":
            raise ConfigError("bloch states require the two_mode manifold", "initial_state")
    elif skind == "site":
        site = _integer(_require(state, "site", "initial_state"), "initial_state.site", minimum=0)
        bound = 2 if manifold == "two_mode" else n_sites
        if site >= bound:
            raise ConfigError(f"site {site} outside 0..{bound - 1}", "initial_state.site")
    elif skind == "vector":
        re = _require(state, "re", "initial_state")
        im = state.get("im", [0.0] * len(re))
        if not (isinstance(re, list) and isinstance(im, list) and len(re) == len(im)):
            raise ConfigError("vector state needs matching re/im lists", "initial_state")
        for k, v in enumerate(list(re) + list(im)):
            _number(v, "initial_state.vector_component")
    else:
        raise ConfigError(f"unknown state kind {skind!r}", "initial_state.kind")

    if "grid" in config:
        grid = config["grid"]
        _check_keys(grid, {"t_final", "dt", "record_stride"}, "grid")
        tf = _number(_require(grid, "t_final", "grid"), "grid.t_final", minimum=0.0, strict_min=True)
        dt = _number(_require(grid, "dt", "grid"), "grid.dt", minimum=0.0, strict_min=True)
        if dt > tf:
            raise ConfigError("dt must not exceed t_final", "grid.dt")
        if "record_stride" in grid and grid["record_stride"] is not None:
            _integer(grid["record_stride"], "grid.record_stride", minimum=1)

    if "ensemble" in config:
        ens = config["ensemble"]
        _check_keys(ens, {"n_traj", "master_seed"}, "ensemble")
        _integer(ens.get("n_traj", 1000), "ensemble.n_traj", minimum=2)
        seed = _integer(ens.get("master_seed", 0), "ensemble.master_seed", minimum=0)
        if seed >= 2**64:
            raise ConfigError("master_seed must fit in 64 bits", "ensemble.master_seed")

    if "sweep" in config:
        sweep = config["sweep"]
        _check_keys(sweep, {"parameter", "values", "theta_grid"}, "sweep")
        param = sweep.get("parameter", "xi")
        if param not in ("xi", "gamma"):
            raise ConfigError(f"sweep parameter must be xi or gamma, got {param!r}", "sweep.parameter")
        values = sweep.get("values", [])
        if not isinstance(values, list) or not values:
            raise ConfigError("sweep values must be a nonempty list", "sweep.values")
        for k, v in enumerate(values):
            _number(v, f"sweep.values.{k}")
            if param == "xi":
                _number(v, f"sweep.values.{k}", minimum=-1.0, maximum=1.0)
        if "theta_grid" in sweep:
            tg = sweep["theta_grid"]
            _check_keys(tg, {"start", "stop", "points", "values"}, "sweep.theta_grid")
            if "values" in tg:
                if not isinstance(tg["values"], list) or not tg["values"]:
                    raise ConfigError("theta grid values must be a nonempty list", "sweep.theta_grid.values")
                for k, v in enumerate(tg["values"]):
                    _number(v, f"sweep.theta_grid.values.{k}")
            else:
                _number(tg.get("start", 0.0), "sweep.theta_grid.start")
                _number(tg.get("stop", _PI), "sweep.theta_grid.stop")
                _integer(tg.get("points", 721), "sweep.theta_grid.points", minimum=1)

    if "spectrum" in config:
        spec = config["spectrum"]
        _check_keys(spec, {"model", "gamma", "gap_tol_rel", "kappa_tol", "refine_rounds"}, "spectrum")
        model = spec.get("model", "dephasing")
        if model not in ("dephasing", "collective_loss"):
            raise ConfigError(f"spectrum model must be dephasing or collective_loss, got {model!r}", "spectrum.model")
        _number(spec.get("gamma", 1.0), "spectrum.gamma", minimum=0.0)
        _number(spec.get("gap_tol_rel", 1e-3), "spectrum.gap_tol_rel", minimum=0.0, strict_min=True)
        _number(spec.get("kappa_tol", 1e3), "spectrum.kappa_tol", minimum=0.0, strict_min=True)
        _integer(spec.get("refine_rounds", 3), "spectrum.refine_rounds", minimum=0)

    if "converge" in config:
        conv = config["converge"]
        _check_keys(conv, {"threshold"}, "converge")
        _number(conv.get("threshold", 0.02), "converge.threshold", minimum=0.0, strict_min=True)

    if "dfs" in config:
        dfs = config["dfs"]
        _check_keys(dfs, {"verify_dynamics", "horizon_over_J"}, "dfs")
        if not isinstance(dfs.get("verify_dynamics", True), bool):
            raise ConfigError("verify_dynamics must be a boolean", "dfs.verify_dynamics")
        _number(dfs.get("horizon_over_J", 10.0), "dfs.horizon_over_J", minimum=0.0, strict_min=True)

    if "algebra" in config:
        alg = config["algebra"]
        _check_keys(alg, {"theta_values"}, "algebra")
        vals = alg.get("theta_values", [])
        if not isinstance(vals, list) or not vals:
            raise ConfigError("theta_values must be a nonempty list", "algebra.theta_values")
        for k, v in enumerate(vals):
            _number(v, f"algebra.theta_values.{k}")

    if "workers" in config:
        _integer(config["workers"], "workers", minimum=1)
    return config


# ---------------------------------------------------------------------------
# model assembly


def noise_spec_from_config(noise: dict):
    kind = noise.get("kind", "wiener")
    if kind == "wiener":
        return Wiener(float(noise.get("d_phi", 1.0)))
    if kind == "ou":
        return OrnsteinUhlenbeck(float(noise["sigma"]), float(noise["tau_c"]))
    bath = noise["bath"]
    return QuantumBath(
        BathSpectrum(
            coupling=float(bath["coupling"]),
            temperature=float(bath["temperature"]),
            cutoff=float(bath["cutoff"]),
            family=bath.get("family", "ohmic"),
        )
    )


def correlation_from_config(noise: dict, n_links: int) -> CorrelationMatrix:
    corr = noise.get("correlation", {})
    if "matrix" in corr:
        return CorrelationMatrix(np.asarray(corr["matrix"], dtype=float))
    xi = float(corr.get("xi", 0.0))
    if n_links == 1:
        return CorrelationMatrix(np.array([[1.0]]))
    m = np.eye(n_links) + xi * (np.ones((n_links, n_links)) - np.eye(n_links))
    return CorrelationMatrix(m)


def diffusion_constant(noise: dict) -> float:
    """Phase-diffusion constant entering Gamma = 2 J^2 x for the configured noise."""
    spec = noise_spec_from_config(noise)
    if isinstance(spec, Wiener):
        return spec.d_phi
    if isinstance(spec, OrnsteinUhlenbeck):
        return spec.sigma**2 * spec.tau_c
    from .noise import ohmic_sff0

    return ohmic_sff0(spec.spectrum)


def links_from_config(system: dict) -> list[Link]:
    links = system.get("links", [])
    if not links:
        links = [{"i": 1, "j": 0, "amplitude": 0.1, "phase_offset": 0.0}]
    return [
        Link(
            i=int(l["i"]),
            j=int(l["j"]),
            amplitude=float(l.get("amplitude", 1.0)),
            phase_offset=float(l.get("phase_offset", 0.0)),
        )
        for l in links
    ]


def initial_state_from_config(state: dict, dim: int) -> np.ndarray:
    kind = state.get("kind", "bloch")
    if kind == "bloch":
        if dim != 2:
            raise ConfigError("bloch states require a two-dimensional manifold", "initial_state")
        return bloch_state(np.asarray(state.get("r", [1.0, 0.0, 0.0]), dtype=float))
    if kind == "site":
        vec = np.zeros(dim, dtype=complex)
        vec[int(state["site"])] = 1.0
        return pure_state_density(vec)
    re = np.asarray(state["re"], dtype=float)
    im = np.asarray(state.get("im", np.zeros_like(re)), dtype=float)
    vec = re + 1j * im
    if vec.size != dim:
        raise ConfigError(f"vector state has {vec.size} components for dimension {dim}", "initial_state")
    nrm = np.linalg.norm(vec)
    if nrm == 0.0:
        raise ConfigError("vector state must be nonzero", "initial_state")
    return pure_state_density(vec / nrm)


def grid_from_config(config: dict) -> SimulationGrid:
    grid = config.get("grid", {"t_final": 10.0, "dt": 0.01})
    return SimulationGrid(
        t_final=float(grid["t_final"]),
        dt=float(grid["dt"]),
        record_stride=grid.get("record_stride"),
    )


def site_hamiltonian(space: HilbertSpace, energies) -> np.ndarray:
    h = np.zeros((space.dim, space.dim), dtype=complex)
    for site, eps in enumerate(energies):
        if eps != 0.0:
            h += float(eps) * number_operator(space, site)
    return h


def model_from_config(config: dict) -> StochasticModel:
    """Build the trajectory model (two-mode or lattice manifold).

    White and quantum noise fold the diffusion constant (d_phi or S_FF(0);
    the quantum bath shares the classical Lindblad reduction) into the link
    amplitudes, so the sampled increments keep unit-diagonal correlations;
    OU noise keeps the amplitudes bare and carries (sigma, tau_c) on the
    model.
    """
    system = config.get("system", {})
    noise = config.get("noise", {})
    state = config.get("initial_state", {"kind": "bloch", "r": [1.0, 0.0, 0.0]})
    manifold = system.get("manifold", "two_mode")
    theta = float(system.get("theta", 0.0))
    links = links_from_config(system)
    D = correlation_from_config(noise, len(links))
    if noise.get("kind", "wiener") == "ou":
        ou = (float(noise["sigma"]), float(noise["tau_c"]))
        amplitudes = [l.amplitude for l in links]
    else:
        ou = None
        d_eff = math.sqrt(diffusion_constant(noise))
        amplitudes = [l.amplitude * d_eff for l in links]

    if manifold == "two_mode":
        rho0 = initial_state_from_config(state, 2)
        energies = system.get("site_energies")
        h0 = np.diag(np.asarray(energies, dtype=complex)) if energies else None
        return two_mode_model(
            theta,
            amplitudes,
            D,
            rho0,
            offsets=[l.phase_offset for l in links],
            h0=h0,
            ou=ou,
        )

    space = HilbertSpace(int(system.get("n_sites", 2)), int(system.get("cutoff", 1)))
    ops = build_jw_anyon_ops(space, theta)
    currents = tuple(exchange_current(ops, l, theta) for l in links)
    hops = []
    for l in links:
        phase = np.exp(1j * (theta + l.phase_offset))
        hops.append(phase * (ops[l.i].conj().T @ ops[l.j]))
    rho0 = initial_state_from_config(state, space.dim)
    energies = system.get("site_energies", [0.0] * space.n_sites)
    h0 = site_hamiltonian(space, energies)
    return StochasticModel(
        h0=h0 if np.any(h0) else None,
        currents=currents,
        amplitudes=np.asarray(amplitudes, dtype=float),
        correlations=D,
        rho0=rho0,
        hop_terms=tuple(hops),
        ou=ou,
    )
