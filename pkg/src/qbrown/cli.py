"""Scenario runner and verification harness.

    qbrown <command> --config <file.json> [--out DIR] [--seed N]

Commands: dsf-scan, evolve-me, evolve-fp, coeffs, verify, choi.  Every run
writes ``manifest.json`` next to its artifacts.  Exit status is 0 on
success, 1 on invalid configuration and 2 on a numerical contract violation.
"""

import argparse
import csv
import json
import platform
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import fp_brownian as fp
from . import gas_dsf
from . import megrid as me
from . import opalg
from .errors import ContractViolation, DomainError, ResourceError
from .gas_dsf import GasSpec, Statistics
from .kernel import KernelSpec

COMMANDS = ("dsf-scan", "evolve-me", "evolve-fp", "coeffs", "verify", "choi")
MODULES = ("gas_dsf", "megrid", "fp_brownian", "opalg")
EXIT_OK, EXIT_INVALID, EXIT_CONTRACT = 0, 1, 2


class ConfigError(DomainError):
    pass


def fmt(x):
    """Shortest round-trip decimal form of a float."""
    return repr(float(x))


@dataclass
class ScenarioConfig:
    command: str
    params: dict
    output_dir: Path
    seed: int = 0

    def to_dict(self):
        return {"command": self.command, "output_dir": str(self.output_dir),
                "seed": self.seed, **self.params}


def parse_config(raw, command=None, out=None, seed=None):
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object", field="config")
    params = dict(raw)
    cmd = command or params.pop("command", None)
    params.pop("command", None)
    if cmd not in COMMANDS:
        raise ConfigError(f"unknown command {cmd!r}", field="command")
    out_dir = Path(out or params.pop("output_dir", "qbrown_out"))
    params.pop("output_dir", None)
    seed = int(seed if seed is not None else params.pop("seed", 0))
    params.pop("seed", None)
    return ScenarioConfig(cmd, params, out_dir, seed)


# ---------------------------------------------------------------------------
# config -> domain objects


def _block(params, name, required=True):
    if name not in params:
        if required:
            raise ConfigError(f"missing block {name!r}", field=name)
        return {}
    blk = params[name]
    if not isinstance(blk, dict):
        raise ConfigError(f"{name!r} must be an object", field=name)
    return blk


def _build(cls, blk, name):
    try:
        return cls(**blk)
    except TypeError as exc:
        raise ConfigError(f"{name}: {exc}", field=name) from None


def _number(params, name, default=None, positive=True):
    if name not in params:
        if default is None:
            raise ConfigError(f"missing parameter {name!r}", field=name)
        return default
    try:
        v = float(params[name])
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number", field=name) from None
    if not np.isfinite(v) or (positive and not v > 0):
        raise ConfigError(f"{name} must be finite{' and > 0' if positive else ''}", field=name)
    return v


def build_gas(params):
    return _build(GasSpec, _block(params, "gas"), "gas")


def build_kernel(params):
    return _build(KernelSpec, _block(params, "kernel"), "kernel")


def build_generator(params):
    gas, kernel = build_gas(params), build_kernel(params)
    lattice = _build(me.MomentumLattice, _block(params, "lattice"), "lattice")
    corrupt = _block(params, "corrupt", required=False)
    q_max = params.get("q_max")
    try:
        return me.GeneratorSpec(
            lattice, gas, kernel, _number(params, "M"), model=params.get("model"),
            q_max=None if q_max is None else float(q_max),
            factorized=bool(params.get("factorized", True)),
            anticommutator_scale=float(corrupt.get("anticommutator_scale", 1.0)),
            coherence_scale=float(corrupt.get("coherence_scale", 1.0)))
    except ValueError as exc:
        if isinstance(exc, DomainError):
            raise
        raise ConfigError(str(exc), field="model") from None


def build_rho0(params, lattice):
    blk = _block(params, "rho0")
    kind = blk.get("type", "diagonal-gaussian")
    if kind == "diagonal-gaussian":
        p0 = np.broadcast_to(np.asarray(blk.get("p0", 0.0), float), (lattice.dim,))
        rho = me.gaussian_state(lattice, p0, _number(blk, "width"))
    elif kind == "pure-momentum":
        p0 = np.broadcast_to(np.asarray(blk.get("p0", 0.0), float), (lattice.dim,))
        rho = me.pure_momentum_state(lattice, p0)
    elif kind == "canonical":
        rho = me.canonical_state(lattice, _number(params, "M"), build_gas(params).beta)
    elif kind == "custom":
        rho = read_matrix_csv(blk["csv"], lattice.size)
    else:
        raise ConfigError(f"unknown rho0 type {kind!r}", field="rho0")
    return me.validate_state(rho)


def _axis(spec, name):
    if isinstance(spec, dict):
        return np.linspace(float(spec["start"]), float(spec["stop"]), int(spec["num"]))
    try:
        return np.atleast_1d(np.asarray(spec, dtype=float))
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a list or {{start, stop, num}}", field=name) from None


# ---------------------------------------------------------------------------
# artifacts


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, (str, int, np.integer)) else fmt(v) for v in row])


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    return str(o)


def write_matrix_csv(path, rho):
    n = rho.shape[0]
    rows = ((i, j, rho[i, j].real, rho[i, j].imag) for i in range(n) for j in range(n))
    write_csv(path, ["row", "col", "re", "im"], rows)


def read_matrix_csv(path, size):
    rho = np.zeros((size, size), dtype=complex)
    with open(path) as fh:
        for rec in csv.DictReader(fh):
            rho[int(rec["row"]), int(rec["col"])] = float(rec["re"]) + 1j * float(rec["im"])
    return rho


# ---------------------------------------------------------------------------
# commands


def run_dsf_scan(cfg):
    gas = build_gas(cfg.params)
    blk = _block(cfg.params, "dsf")
    model = gas_dsf.DsfModel(blk.get("model", gas_dsf.default_model(gas.statistics)))
    q = _axis(blk.get("q"), "q")
    E = _axis(blk.get("E"), "E")
    S = gas_dsf.evaluate_dsf(gas, q[:, None], E[None, :], model)
    rows = ((qi, Ej, S[i, j], model.value) for i, qi in enumerate(q) for j, Ej in enumerate(E))
    write_csv(cfg.output_dir / "dsf.csv", ["q", "E", "S", "model"], rows)
    write_json(cfg.output_dir / "dsf.json", {"gas": gas.to_dict(), "model": model.value,
                                             "columns": ["q", "E", "S", "model"]})
    return {"points": int(S.size), "min_S": float(S.min())}, ["dsf.csv", "dsf.json"]


def run_coeffs(cfg):
    gas, kernel = build_gas(cfg.params), build_kernel(cfg.params)
    M = _number(cfg.params, "M")
    dim = int(cfg.params.get("dim", 3))
    c = fp.compute_coefficients(gas, M, kernel, dim=dim)
    out = c.to_dict()
    out["gamma_over_D_pp"] = c.gamma / c.D_pp if c.D_pp else None
    out["inputs"] = {"gas": gas.to_dict(), "kernel": kernel.to_dict(), "M": M, "dim": dim}
    write_json(cfg.output_dir / "coeffs.json", out)
    return {"gamma_over_D_pp": out["gamma_over_D_pp"]}, ["coeffs.json"]


def run_evolve_me(cfg):
    gen = build_generator(cfg.params)
    rho0 = build_rho0(cfg.params, gen.lattice)
    t = _number(cfg.params, "t", positive=False)
    norm = me.generator_norm(gen)
    dt = _number(cfg.params, "dt", default=0.05 / norm if norm > 0 else max(t, 1.0))
    stride = int(cfg.params.get("checkpoint_stride", 0)) or max(int(round(t / dt)), 1)
    p = gen.lattice.momenta()
    E = gen.energies
    rows, files = [], []

    def callback(step, time_, rho):
        f = np.diag(rho).real
        pm = np.zeros(3)
        pm[:gen.lattice.dim] = f @ p
        mineig = float(np.linalg.eigvalsh(rho)[0])
        rows.append((time_, *pm, f @ E, np.trace(rho).real, mineig))
        name = f"state_{step}.csv"
        write_matrix_csv(cfg.output_dir / name, rho)
        files.append(name)

    try:
        res = me.evolve(gen, rho0, t, dt, checkpoint_stride=stride, callback=callback)
    finally:
        write_csv(cfg.output_dir / "moments.csv",
                  ["t", "px", "py", "pz", "E", "trace", "mineig"], rows)
    mon = res.monitors()
    mon.update(dt=dt, generator_norm=norm)
    return mon, files + ["moments.csv"]


def run_evolve_fp(cfg):
    gas, kernel = build_gas(cfg.params), build_kernel(cfg.params)
    M = _number(cfg.params, "M")
    c = fp.compute_coefficients(gas, M, kernel, dim=int(cfg.params.get("dim", 1)))
    blk = _block(cfg.params, "fp")
    p = fp.momentum_grid(int(blk.get("n_p", 200)), _number(blk, "p_max"))
    mode = blk.get("mode", "momentum")
    width = _number(blk, "width", default=np.sqrt(M / gas.beta))
    if mode == "momentum":
        f0 = fp.gaussian_field(p, float(blk.get("p0", 0.0)), width)
    elif mode == "full":
        nx = int(blk.get("n_x", 64))
        x_max = _number(blk, "x_max")
        x = -x_max + 2 * x_max / nx * np.arange(nx)
        f0 = fp.gaussian_field(p, float(blk.get("p0", 0.0)), width, x=x,
                               x0=float(blk.get("x0", 0.0)),
                               x_width=_number(blk, "x_width", default=x_max / 8))
    else:
        raise ConfigError(f"unknown fp mode {mode!r}", field="mode")
    t = _number(blk, "t", positive=False)
    dt = _number(blk, "dt")
    record_every = int(blk.get("record_every", 0)) or max(int(round(t / dt)), 1)
    files = []

    def callback(step, time_, f):
        name = f"wigner_{step}.csv"
        nx_, np_ = f.values.shape
        rows = ((i, j, f.values[i, j]) for i in range(nx_) for j in range(np_))
        write_csv(cfg.output_dir / name, ["x_index", "p_index", "value"], rows)
        files.append(name)

    run = fp.evolve_wigner(c, f0, t, dt, integrator=blk.get("integrator", "exact"),
                           record_every=record_every, callback=callback)
    write_csv(cfg.output_dir / "fp_moments.csv", ["t", "p", "E", "mass"], run.history)
    return ({"steps": run.steps, "mass_drift": run.mass_drift, "coefficients": c.to_dict()},
            files + ["fp_moments.csv"])


def run_choi(cfg):
    gen = build_generator(cfg.params)
    norm = me.generator_norm(gen)
    dt = _number(cfg.params, "dt", default=0.01 / norm if norm > 0 else 1.0, positive=False)
    mineig = me.choi_min_eigenvalue(gen, dt, max_sites=int(cfg.params.get("max_sites", 16)))
    passed = mineig >= -1e-10
    write_json(cfg.output_dir / "choi.json", {"dt": dt, "min_eigenvalue": mineig,
                                              "threshold": -1e-10, "pass": passed,
                                              "generator": gen.to_dict()})
    if not passed:
        raise ContractViolation(f"Choi minimum eigenvalue {mineig:.3g} < -1e-10",
                                invariant="complete_positivity")
    return {"min_eigenvalue": mineig, "dt": dt}, ["choi.json"]


def run_verify(cfg):
    selection = cfg.params.get("modules", list(MODULES))
    corrupt = bool(cfg.params.get("corrupt_generator", False))
    report = verify_suite(set(selection), cfg.seed, corrupt_generator=corrupt)
    write_json(cfg.output_dir / "verify_report.json", report)
    failed = [f"{mod}.{name}" for mod, checks in report.items()
              for name, chk in checks.items() if not chk["pass"]]
    mon = {"checks": sum(len(v) for v in report.values()), "failed": failed,
           "invariants": report}
    if failed:
        exc = ContractViolation("failed checks: " + ", ".join(failed), invariant=failed[0])
        exc.monitors, exc.artifacts = mon, ["verify_report.json"]
        raise exc
    return mon, ["verify_report.json"]

RUNNERS = {
    "dsf-scan": run_dsf_scan, "coeffs": run_coeffs, "evolve-me": run_evolve_me,
    "evolve-fp": run_evolve_fp, "choi": run_choi, "verify": run_verify,
}


# ---------------------------------------------------------------------------
# verification suite


def _check(value, threshold, op="<"):
    value = float(value)
    if op == "<":
        ok = value < threshold
    elif op == ">":
        ok = value > threshold
    elif op == ">=":
        ok = value >= threshold
    else:
        ok = True
    return {"value": value, "threshold": threshold, "op": op, "pass": bool(ok)}


def _random_gases(rng, statistics, count):
    out = []
    for _ in range(count):
        z_hi = 0.95 if statistics is Statistics.BOSE else 3.0
        out.append(GasSpec(statistics, m=rng.uniform(0.5, 2), beta=rng.uniform(0.5, 2),
                           z=rng.uniform(0, z_hi), n=rng.uniform(0.5, 2)))
    return out


def random_kinematics(rng, gas, size):
    """(q, E) pairs spread over the thermal peak: the Gaussian exponent
    beta (2mE + q^2)^2 / (8 m q^2) is uniform on x^2 with |x| < 5."""
    q = rng.uniform(0.1, 5.0, size)
    x = rng.uniform(-5.0, 5.0, size)
    E = (x * np.sqrt(8 * gas.m / gas.beta) * q - q ** 2) / (2 * gas.m)
    return q, E


def _rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    scale = np.maximum(np.abs(b), 1e-300)
    return float(np.max(np.where((a == 0) & (b == 0), 0.0, np.abs(a - b) / scale)))


def _suite_gas_dsf(rng):
    checks = {}
    eq, db, neg = 0.0, 0.0, np.inf
    for stat, pair in ((Statistics.BOSE, ("BoseLog", "BoseArth")),
                       (Statistics.FERMI, ("FermiLog", "FermiArth"))):
        for gas in _random_gases(rng, stat, 10):
            q, E = random_kinematics(rng, gas, 100)
            a = gas_dsf.evaluate_dsf(gas, q, E, pair[0])
            b = gas_dsf.evaluate_dsf(gas, q, E, pair[1])
            eq = max(eq, _rel(b, a))
    for stat in Statistics:
        for gas in _random_gases(rng, stat, 10):
            q, E = random_kinematics(rng, gas, 100)
            s = gas_dsf.evaluate_dsf(gas, q, E)
            db = max(db, _rel(s, np.exp(-gas.beta * E) * gas_dsf.evaluate_dsf(gas, q, -E)))
            neg = min(neg, float(s.min()))
    checks["form_equivalence"] = _check(eq, 1e-12)
    checks["detailed_balance"] = _check(db, 1e-10)
    checks["nonnegativity"] = _check(neg, 0.0, ">=")

    q, E = np.meshgrid(np.linspace(0.2, 4, 12), np.linspace(-6, 6, 13))
    devs = []
    for z in (1e-3, 5e-4):
        mb = gas_dsf.evaluate_dsf(GasSpec("MaxwellBoltzmann", z=z), q, E)
        d = max(np.abs(gas_dsf.evaluate_dsf(GasSpec(s, z=z), q, E) / mb - 1).max()
                for s in ("Bose", "Fermi"))
        devs.append(d)
    checks["classical_limit"] = _check(devs[0], 5e-3)
    checks["classical_limit_order"] = _check(abs(devs[1] / devs[0] - 0.5), 0.05)

    gas = GasSpec("MaxwellBoltzmann", z=0.3)
    q = rng.uniform(0.2, 3, 1000)
    E1, E2 = rng.uniform(-3, 3, (2, 1000))
    S = lambda E: gas_dsf.evaluate_dsf(gas, q, E)
    ratio = S(0.5 * (E1 + E2)) / np.sqrt(S(E1) * S(E2))
    checks["factorization_mb"] = _check(_rel(ratio, gas_dsf.mean_energy_excess(gas, q, E1, E2)), 1e-12)
    Sb = lambda E: gas_dsf.evaluate_dsf(gas, q, E, "BrownianLimitMB")
    checks["factorization_brownian"] = _check(_rel(Sb(0.5 * (E1 + E2)), np.sqrt(Sb(E1) * Sb(E2))), 1e-12)

    grid = gas_dsf.ModeGrid(32, 12.0 / 32)
    qv = np.array([3, 0, 0]) * grid.spacing
    edges = gas_dsf.aligned_energy_edges(gas, grid, qv, -6, 6)
    hist = gas_dsf.dsf_discrete_oracle(gas, grid, qv, edges)
    centres = 0.5 * (edges[1:] + edges[:-1])
    ref = gas_dsf.evaluate_dsf(gas, np.linalg.norm(qv), centres)
    heavy = hist * np.diff(edges) > 0.01 * np.sum(hist * np.diff(edges))
    checks["oracle_convergence"] = _check(np.abs(hist[heavy] / ref[heavy] - 1).max(), 0.05)
    return checks


def fixture_generator(sites=8, **corrupt):
    """The small 1D Brownian-limit lattice used by the structure checks."""
    gas = GasSpec("MaxwellBoltzmann", m=1.0, beta=1.0, z=0.5, n=1.0)
    return me.GeneratorSpec(me.MomentumLattice(1, sites, 0.5), gas,
                            KernelSpec.gaussian(0.3, 1.0), M=10.0,
                            model="BrownianLimitMB", **corrupt)


def scalar_rate_oracle(gen, f):
    """d f/dt of the classical linear Boltzmann equation, written as plain
    loops over lattice sites and transfers."""
    lat = gen.lattice
    idx = lat.multi_index()
    lookup = {tuple(v): i for i, v in enumerate(idx)}
    p = lat.momenta()
    out = np.zeros(len(f))
    ks = gen.channels.k
    for i in range(len(f)):
        for k in ks:
            q = k * lat.dp
            s = tuple(idx[i] - k)
            d = tuple(idx[i] + k)
            if lat.wrap:
                s = tuple(np.mod(s, lat.sites))
                d = tuple(np.mod(d, lat.sites))
            if s in lookup:
                out[i] += float(gen.rate(q, p[lookup[s]])) * f[lookup[s]]
            if d in lookup:
                out[i] -= float(gen.rate(q, p[i])) * f[i]
    return out


def _suite_megrid(rng, corrupt=False):
    checks = {}
    gen = fixture_generator()
    D = gen.size
    scale = gen.total_rate()
    h = rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D))
    rho = h @ h.conj().T
    rho /= np.trace(rho).real
    L = me.apply_generator(gen, rho)
    checks["generator_trace"] = _check(abs(np.trace(L)) / scale, 1e-12)
    checks["generator_hermiticity"] = _check(np.abs(L - L.conj().T).max() / scale, 1e-12)

    f = rng.uniform(0, 1, D)
    f /= f.sum()
    diag = np.diag(me.apply_generator(gen, np.diag(f).astype(complex))).real
    checks["classical_reduction"] = _check(np.abs(diag - scalar_rate_oracle(gen, f)).max() / scale, 1e-12)

    p = gen.lattice.momenta()
    worst = 0.0
    for k in gen.channels.k:
        q = k * gen.lattice.dp
        w_fwd = gen.rate(q, p)
        w_bwd = gen.rate(-q, p + q)
        dE = gas_dsf.energy_transfer(q, p, gen.M)
        worst = max(worst, _rel(w_fwd / w_bwd, np.exp(-gen.gas.beta * dE)))
    checks["rate_detailed_balance"] = _check(worst, 1e-10)

    w0 = me.canonical_state(gen.lattice, gen.M, gen.gas.beta)
    resid = np.abs(np.linalg.eigvalsh(me.apply_generator(gen, w0))).sum()
    checks["canonical_stationarity"] = _check(resid / scale, 1e-10)

    norm = me.generator_norm(gen)
    cp_gen = fixture_generator(coherence_scale=1.5) if corrupt else gen
    checks["complete_positivity"] = _check(me.choi_min_eigenvalue(cp_gen, 0.01 / norm), -1e-10, ">=")

    rho0 = me.gaussian_state(gen.lattice, [0.75], 0.6)
    res = me.evolve(gen, rho0, 2000 * 0.1 / norm, 0.1 / norm, checkpoint_stride=500)
    checks["trace_drift"] = _check(res.trace_drift, 1e-9)
    checks["hermiticity_correction"] = _check(res.hermiticity_correction, 1e-11)
    checks["state_positivity"] = _check(res.min_eigenvalue, -1e-8, ">=")
    return checks


def _suite_fp(rng):
    checks = {}
    gas = GasSpec("MaxwellBoltzmann", m=1.0, beta=1.0, z=1.0, n=1.0)
    kernel = KernelSpec.gaussian(1.0, 1.0)
    M = rng.uniform(1, 20)
    c = fp.compute_coefficients(gas, M, kernel)
    checks["relation_D_xx"] = _check(abs(c.D_xx / c.D_pp / (gas.beta * gas.hbar / (4 * M)) ** 2 - 1), 1e-14)
    checks["relation_gamma"] = _check(abs(c.gamma / c.D_pp / (gas.beta / (2 * M)) - 1), 1e-14)
    alpha = 1 / (2 * kernel.sigma ** 2) + gas.beta / (8 * gas.m)
    closed = 4 * np.pi ** 3 / 3 * gas.m ** 2 * kernel.t0 ** 2 / (gas.beta * gas.hbar * alpha ** 2)
    checks["quadrature_gaussian"] = _check(abs(c.D_pp / closed - 1), 1e-8)

    z = 0.5
    g = {s: fp.compute_coefficients(GasSpec(s, z=z), M, kernel).gamma_eff
         for s in ("MaxwellBoltzmann", "Bose", "Fermi")}
    checks["bose_factor"] = _check(abs(g["Bose"] / g["MaxwellBoltzmann"] * (1 - z) - 1), 1e-14)
    checks["fermi_factor"] = _check(abs(g["Fermi"] / g["MaxwellBoltzmann"] * (1 + z) - 1), 1e-14)

    c1 = fp.FPCoefficients.from_dpp(1.0, 2.0, 1.0, dim=1)
    p = fp.momentum_grid(200, 8 * np.sqrt(2.0))
    f0 = fp.stationary_field(c1, p)
    tau = 1 / (2 * c1.gamma)
    run = fp.evolve_wigner(c1, f0, 10 * tau, tau / 20)
    checks["fp_stationarity"] = _check(np.linalg.norm(run.field.values - f0.values)
                                       / np.linalg.norm(f0.values), 1e-6)
    checks["fp_mass"] = _check(run.mass_drift, 1e-8)

    f1 = fp.gaussian_field(p, 3.0, 0.7)
    run = fp.evolve_wigner(c1, f1, 1.5 / (2 * c1.gamma), tau / 40, record_every=4)
    t, pm, _, _ = np.array(run.history).T
    checks["fp_momentum_decay"] = _check(abs(me.relaxation_rate(t, pm) / (2 * c1.gamma) - 1), 0.01)
    return checks


def _suite_opalg(rng):
    rep = opalg.verify_report(seed=int(rng.integers(2 ** 31)))
    return {
        "residual_equivalence": _check(rep["residual_equivalence"], 1e-10),
        "residual_negative_control": _check(rep["residual_negative_control"], 1e-3, ">"),
        "residual_translate": _check(rep["residual_translate"], 1e-12),
        "residual_rotate": _check(rep["residual_rotate"], 1e-11),
        "duality_gap": _check(rep["duality_gap"], 1e-11),
        "truncation_leakage": _check(rep["truncation_leakage"], None, "report"),
    }


def verify_suite(selection, seed=0, corrupt_generator=False):
    """Seeded structural checks per module.

    Returns ``{module: {check: {value, threshold, op, pass}}}``; identical
    inputs give an identical report.
    """
    selection = set(selection)
    if not selection:
        raise ConfigError("verify selection must not be empty", field="modules")
    unknown = selection - set(MODULES)
    if unknown:
        raise ConfigError(f"unknown modules {sorted(unknown)}", field="modules")
    suites = {
        "gas_dsf": _suite_gas_dsf,
        "megrid": lambda r: _suite_megrid(r, corrupt_generator),
        "fp_brownian": _suite_fp,
        "opalg": _suite_opalg,
    }
    report = {}
    for i, name in enumerate(MODULES):
        if name in selection:
            report[name] = suites[name](np.random.default_rng([seed, i]))
    return report


# ---------------------------------------------------------------------------
# entry point


def _versions():
    return {"qbrown": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def run_scenario(cfg):
    """Run one scenario; returns the exit status and writes the manifest."""
    try:
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: output_dir: {exc}", file=sys.stderr)
        return EXIT_INVALID
    manifest = {"command": cfg.command, "config": cfg.to_dict(), "versions": _versions()}
    start = time.perf_counter()
    status = EXIT_OK
    try:
        monitors, artifacts = RUNNERS[cfg.command](cfg)
        manifest.update(status="ok", monitors=monitors, artifacts=artifacts)
    except ContractViolation as exc:
        status = EXIT_CONTRACT
        manifest.update(status="contract_violation", error=str(exc),
                        invariant=exc.invariant, step=exc.step,
                        monitors=getattr(exc, "monitors", {}),
                        artifacts=getattr(exc, "artifacts", []))
        print(f"contract violation [{exc.invariant}]: {exc}", file=sys.stderr)
    except (DomainError, ResourceError, KeyError, ValueError) as exc:
        status = EXIT_INVALID
        fieldname = getattr(exc, "field", None) or (exc.args[0] if isinstance(exc, KeyError) else None)
        manifest.update(status="invalid_config", error=str(exc), field=fieldname)
        print(f"error: field {fieldname!r}: {exc}", file=sys.stderr)
    manifest["wall_time_s"] = time.perf_counter() - start
    write_json(cfg.output_dir / "manifest.json", manifest)
    return status


def main(argv=None):
    ap = argparse.ArgumentParser(prog="qbrown", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="JSON scenario file")
    ap.add_argument("--out", default=None, help="output directory")
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args(argv)
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
        cfg = parse_config(raw, args.command, args.out, args.seed)
    except (OSError, json.JSONDecodeError, DomainError) as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return run_scenario(cfg)


if __name__ == "__main__":
    sys.exit(main())
