import itertools

import numpy as np
import pytest

from ofd.opt_core import LinearProgram, MilpProgram, Status, WarmHighs, solve_lp


def random_lp(rng, m, n, bounded=True):
    """Random LP with a known feasible point; bounded when ``bounded``."""
    A = rng.normal(size=(m, n))
    v0 = rng.uniform(0, 1, n)
    b = A @ v0 + rng.uniform(0.1, 1.0, m)
    c = rng.normal(size=n)
    hi = np.full(n, 5.0) if bounded else np.full(n, np.inf)
    return LinearProgram(c, A, "<=", b, np.zeros(n), hi)


def enumerate_milp(m: MilpProgram):
    """Best objective over every binary pattern, one warm-started LP per pattern."""
    base = m.base
    bins = list(m.binary_indices)
    warm = WarmHighs(base)
    best = np.inf
    for pattern in itertools.product((0.0, 1.0), repeat=len(bins)):
        lo, hi = base.lo.copy(), base.hi.copy()
        lo[bins] = pattern
        hi[bins] = pattern
        res = warm.solve(lo=lo, hi=hi)
        if res.status is Status.OPTIMAL:
            best = min(best, res.objective)
    return best


def monolithic_beta(x_bar, G, E, d):
    """min beta over (F >= 0, z, beta >= 0) with F G = E and F x_bar <= E z + beta d."""
    m, k = E.shape[0], G.shape[0]
    T = G.shape[1]
    nF = m * k
    n = nF + T + 1
    Aeq = np.zeros((m * T, n))
    for i in range(m):
        for t in range(T):
            Aeq[i * T + t, i * k:(i + 1) * k] = G[:, t]
    Aub = np.zeros((m, n))
    for i in range(m):
        Aub[i, i * k:(i + 1) * k] = x_bar
    Aub[:, nF:nF + T] = -E
    Aub[:, -1] = -d
    c = np.zeros(n)
    c[-1] = 1.0
    lo = np.concatenate([np.zeros(nF), np.full(T, -np.inf), [0.0]])
    lp = LinearProgram(c, np.vstack([Aeq, Aub]), ["=="] * (m * T) + ["<="] * m,
                       np.concatenate([E.ravel(), np.zeros(m)]), lo)
    return solve_lp(lp, backend="highs").objective


def dykstra_pgd(C):
    """Projected gradient on 0.5 ||x||^2 over {x : x >= c_n for all n}, projections by Dykstra."""
    k = C.shape[1]
    normals = [(-np.eye(k)[i], -c[i]) for c in C for i in range(k)]

    def project(v):
        x = v.copy()
        incr = [np.zeros(k) for _ in normals]
        for _ in range(200):
            prev = x.copy()
            for j, (a, b) in enumerate(normals):
                y = x + incr[j]
                viol = a @ y - b
                x_new = y - max(viol, 0.0) * a / (a @ a)
                incr[j] = y - x_new
                x = x_new
            if np.max(np.abs(x - prev)) < 1e-15:
                break
        return x

    x = np.zeros(k)
    for _ in range(200):
        x_new = project(x - 0.5 * x)
        if np.max(np.abs(x_new - x)) < 1e-15:
            break
        x = x_new
    return x


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the test session
ACCEPTANCE = []


@pytest.fixture
def record():
    def add(criterion, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'}  criterion {criterion}: {detail}"
        ACCEPTANCE.append(line)
        print(line)
        return passed
    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
