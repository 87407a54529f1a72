"""Acceptance battery: one test per criterion, each printing a PASS/FAIL line.

Runs at the stated tolerances and sample sizes; expect roughly ten minutes.
"""
import math
import time
from pathlib import Path

import numpy as np
import pytest
import yaml

from fracheat.config import from_dict
from fracheat.experiments import (_solver_setup, gamma_quadrature, operator_constant_ratios, run_experiment)
from fracheat.heatkernel import damped_cos_integral, damped_exp_integral, damped_sin_integral, gamma_abs2, gamma_t
from fracheat.solver import REGULAR_REGIME, ROUGH_REGIME, picard_solve
from fracheat.specfun import c1_quadrature, classical_integral_quadrature, renorm_constants

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
LINES: list = []


@pytest.fixture(scope="module", autouse=True)
def summary(request):
    yield
    tr = request.config.pluginmanager.get_plugin("terminalreporter")
    if tr is not None and LINES:
        tr.write_line("")
        tr.write_line("acceptance summary")
        for line in LINES:
            tr.write_line(line)


def verdict(num, name, passed, detail, elapsed, budget):
    ok = bool(passed) and elapsed < budget
    line = f"criterion {num:2d} {'PASS' if ok else 'FAIL'}  {name}  {detail}  [{elapsed:.1f}s < {budget:g}s]"
    LINES.append(line)
    print(line)
    return ok


def load(name, **override):
    doc = yaml.safe_load((CONFIGS / f"{name}.yaml").read_text())
    doc.update(override)
    return from_dict(doc)


def run(name, tmp_path, **override):
    return run_experiment(load(name, **override), str(tmp_path / name), threads=4)


def checks_of(result, prefix=""):
    return [c for c in result.checks if c.name.startswith(prefix)]


def describe(checks):
    return "; ".join(f"{c.name}: {c.detail}" for c in checks)


def test_01_gamma_closed_form():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    t, xi, r = rng.uniform(0, 1, 10_000), rng.uniform(-50, 50, 10_000), rng.uniform(0, 50, 10_000)
    closed = gamma_abs2(t, xi, r)
    e1 = float(np.max(np.abs(closed - np.abs(gamma_t(t, xi, r)) ** 2)))
    e2 = float(np.max(np.abs(closed - np.abs(gamma_quadrature(t, xi, r)) ** 2)))
    el = time.perf_counter() - t0
    assert verdict(1, "gamma closed form", max(e1, e2) <= 1e-12, f"err={e1:.2e}/{e2:.2e}", el, 5)


def test_02_damped_antiderivatives():
    from scipy import integrate
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    err = 0.0
    for _ in range(100):
        a, x, T = rng.uniform(0.1, 2.0), rng.uniform(0.1, 3.0), rng.uniform(0.5, 5.0)
        for fn, f in ((damped_sin_integral, lambda y: np.sin(T * y) * np.exp(-T * x * y)),
                      (damped_cos_integral, lambda y: np.cos(T * y) * np.exp(-T * x * y)),
                      (damped_exp_integral, lambda y: np.exp(-2 * T * x * y))):
            err = max(err, abs(fn(a, x, T) - integrate.quad(f, 0, a, epsabs=1e-14, epsrel=1e-13)[0]))
    el = time.perf_counter() - t0
    assert verdict(2, "antiderivatives", err <= 1e-10, f"err={err:.2e}", el, 5)


def test_03_classical_integral():
    t0 = time.perf_counter()
    err = max(abs(classical_integral_quadrature(b) - math.pi / math.sin(math.pi * b))
              for b in (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9))
    el = time.perf_counter() - t0
    assert verdict(3, "classical integral", err <= 1e-6, f"err={err:.2e}", el, 5)


def test_04_renorm_constants():
    t0 = time.perf_counter()
    err = max(abs(renorm_constants(a, k).c1 - c1_quadrature(a, k))
              for a in np.linspace(0.2, 1.8, 5) for k in np.linspace(0.1, 1.0, 5))
    e2 = abs(renorm_constants(1.0, 0.0).c2 - math.pi / 2)
    el = time.perf_counter() - t0
    assert verdict(4, "c1 digamma / c2(1)", err <= 1e-8 and e2 <= 1e-10, f"err={err:.2e}/{e2:.1e}", el, 60)


def test_05_sigma_asymptotics(tmp_path):
    t0 = time.perf_counter()
    crit = run("sigma-critical", tmp_path)
    geo = run("sigma-geometric", tmp_path)
    el = time.perf_counter() - t0
    cs = crit.checks + geo.checks
    assert verdict(5, "sigma asymptotics", len(cs) == 3 and all(c.passed for c in cs), describe(cs), el, 120)


def test_06_covariance(tmp_path):
    t0 = time.perf_counter()
    cs = checks_of(run("noise-cov-d1", tmp_path), "covariance") + checks_of(run("noise-cov-d2", tmp_path),
                                                                            "covariance")
    el = time.perf_counter() - t0
    assert verdict(6, "covariance vs cell-sum oracle", len(cs) == 6 and all(c.passed for c in cs),
                   describe(cs), el, 180)


def test_07_wick_centering(tmp_path):
    t0 = time.perf_counter()
    cs = checks_of(run("noise-cov-d1", tmp_path, samples=10_000), "wick")
    el = time.perf_counter() - t0
    assert verdict(7, "Wick centering and Isserlis", len(cs) == 10 and all(c.passed for c in cs),
                   describe(cs), el, 120)


def test_08_cauchy_decay(tmp_path):
    t0 = time.perf_counter()
    cs = run("cauchy-h1", tmp_path).checks + run("cauchy-h2", tmp_path).checks
    el = time.perf_counter() - t0
    assert verdict(8, "Cauchy decay H1/H2", len(cs) == 4 and all(c.passed for c in cs), describe(cs), el, 300)


def test_09_explosion_dichotomy(tmp_path):
    t0 = time.perf_counter()
    cs = run("wick-explosive", tmp_path).checks + run("wick-rough", tmp_path).checks
    el = time.perf_counter() - t0
    assert verdict(9, "explosion dichotomy", len(cs) == 2 and all(c.passed for c in cs), describe(cs), el, 600)


def test_10_rough_2d(tmp_path):
    t0 = time.perf_counter()
    cs = run("wick-2d", tmp_path).checks
    el = time.perf_counter() - t0
    assert verdict(10, "d=2 rough construction", len(cs) == 2 and all(c.passed for c in cs), describe(cs), el, 900)


def test_11_solver(tmp_path):
    t0 = time.perf_counter()
    cs = run("solve-regular", tmp_path).checks + run("solve-rough", tmp_path).checks
    zero_ok = True
    for name, regime in (("solve-regular", REGULAR_REGIME), ("solve-rough", ROUGH_REGIME)):
        sc = _solver_setup(load(name, phi=0.0), regime)
        z = np.zeros((sc.steps + 1,) + sc.grid.shape)
        state, _ = picard_solve(sc, z, z)
        zero_ok &= bool(np.all(state.v == 0.0))
    el = time.perf_counter() - t0
    ok = len(cs) == 4 and all(c.passed for c in cs) and zero_ok
    assert verdict(11, "solver self-consistency", ok, describe(cs) + f"; zero data exact: {zero_ok}", el, 600)


def test_12_solution_convergence(tmp_path):
    t0 = time.perf_counter()
    cs = run("converge-regular", tmp_path).checks + run("converge-rough", tmp_path).checks
    el = time.perf_counter() - t0
    assert verdict(12, "solution convergence in n", len(cs) == 2 and all(c.passed for c in cs),
                   describe(cs), el, 900)


def test_13_operator_stability():
    t0 = time.perf_counter()
    ratios = operator_constant_ratios(2024)
    el = time.perf_counter() - t0
    detail = "; ".join(f"{k}: {v:.3f}" for k, v in ratios.items())
    assert verdict(13, "operator constants within x2", all(v <= 2.0 for v in ratios.values()), detail, el, 300)


def test_14_determinism(tmp_path):
    t0 = time.perf_counter()
    a = run_experiment(load("noise-cov-d1"), str(tmp_path / "a"), threads=1)
    b = run_experiment(load("noise-cov-d1"), str(tmp_path / "b"), threads=4)
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
               for f in ("noise-cov.csv", "noise-cov.ndjson"))
    el = time.perf_counter() - t0
    assert verdict(14, "byte-identical reruns", same and a.status == b.status, f"identical={same}", el, 60)
