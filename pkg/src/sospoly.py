"""
Includes the quartic W(A1, A2, B1, B2), which is nonnegative but not a sum of
squares, its minimization, the constraint argument excluding a sum-of-squares
decomposition, and averages of W over moment tables.
"""

import logging
import unittest
import numpy as np
from joblib import Parallel, delayed
from scipy.optimize import brentq, minimize
from inequalities import table_from_scenario
from util import DEFAULT_SEED

logger = logging.getLogger(__name__)

CROSS = 3 * np.sqrt(3) / 4
GRID = np.linspace(-3, 3, 13)


class PolyPoint:
    """
    A point (A1, A2, B1, B2) of the real variables of W.
    """

    __slots__ = ["a1", "a2", "b1", "b2"]

    def __init__(self, a1, a2, b1, b2):
        self.a1, self.a2, self.b1, self.b2 = float(a1), float(a2), float(b1), float(b2)
        assert np.all(np.isfinite(self.as_array())), "Coordinates must be finite"

    def as_array(self):
        return np.array([self.a1, self.a2, self.b1, self.b2])

    @classmethod
    def from_array(cls, x):
        return cls(*np.asarray(x, dtype=float))

    def __repr__(self):
        return "PolyPoint({:.6g}, {:.6g}, {:.6g}, {:.6g})".format(*self.as_array())


def _coords(p):
    x = p.as_array() if isinstance(p, PolyPoint) else np.asarray(p, dtype=float)
    return x[..., 0], x[..., 1], x[..., 2], x[..., 3]


def eval_w(p):
    """
    W = A1^2 + A2^2 + B1^2 + B2^2 + (A1^2 + A2^2)(B1^2 + B2^2)
        - (3 sqrt(3)/4) ((A1^2 - A2^2)(B1 + B2) + (B1^2 - B2^2)(A1 + A2)).

    Parameters
    ----------
    p (PolyPoint | array-like):
        A point, or an array of points along the last axis.
    """
    a1, a2, b1, b2 = _coords(p)
    sa, sb = a1 ** 2 + a2 ** 2, b1 ** 2 + b2 ** 2
    cross = (a1 ** 2 - a2 ** 2) * (b1 + b2) + (b1 ** 2 - b2 ** 2) * (a1 + a2)
    return sa + sb + sa * sb - CROSS * cross


def grad_w(p):
    a1, a2, b1, b2 = _coords(p)
    sa, sb = a1 ** 2 + a2 ** 2, b1 ** 2 + b2 ** 2
    da = b1 ** 2 - b2 ** 2
    db = a1 ** 2 - a2 ** 2
    return np.stack(
        [
            2 * a1 * (1 + sb) - CROSS * (2 * a1 * (b1 + b2) + da),
            2 * a2 * (1 + sb) - CROSS * (-2 * a2 * (b1 + b2) + da),
            2 * b1 * (1 + sa) - CROSS * (db + 2 * b1 * (a1 + a2)),
            2 * b2 * (1 + sa) - CROSS * (db - 2 * b2 * (a1 + a2)),
        ],
        axis=-1,
    )


def rotate(p):
    """
    Coordinates (A+, A-, B+, B-) with sqrt(2) A+- = A1 +- A2 and the same for B.
    """
    a1, a2, b1, b2 = _coords(p)
    r = np.sqrt(2)
    return (a1 + a2) / r, (a1 - a2) / r, (b1 + b2) / r, (b1 - b2) / r


def eval_w_rotated(p):
    """
    W in rotated coordinates, A^2 + B^2 + A^2 B^2 - 3 sqrt(3/2) A+ B+ (A- + B-) with
    A^2 = A+^2 + A-^2 and B^2 = B+^2 + B-^2.
    """
    ap, am, bp, bm = rotate(p)
    a_sq, b_sq = ap ** 2 + am ** 2, bp ** 2 + bm ** 2
    return a_sq + b_sq + a_sq * b_sq - 3 * np.sqrt(1.5) * ap * bp * (am + bm)


def grid_minimum():
    """
    Best point of the 13^4 grid over [-3, 3]^4.
    """
    mesh = np.stack(np.meshgrid(GRID, GRID, GRID, GRID, indexing="ij"), axis=-1)
    points = mesh.reshape(-1, 4)
    values = eval_w(points)
    best = int(np.argmin(values))
    return float(values[best]), points[best]


def local_minimum(start):
    """
    BFGS minimization of W with the analytic gradient.

    Returns
    -------
    tuple:
        Value of W at the minimum and the minimizer as an array.
    """
    start = start.as_array() if isinstance(start, PolyPoint) else start
    res = minimize(eval_w, start, jac=grad_w, method="BFGS", options={"gtol": 1e-10})
    return float(res.fun), res.x


@delayed
def _local_run(start):
    return local_minimum(start)


def min_w_runs(restarts, seed=DEFAULT_SEED, n_jobs=1):
    """
    Local minimizations of W from the best grid point and from `restarts` uniform
    random starts in [-3, 3]^4.

    Returns
    -------
    list:
        (start index, value, PolyPoint) per run, the grid start first.
    """
    assert restarts >= 1, "At least one restart is needed"
    rng = np.random.default_rng(seed)
    _, grid_best = grid_minimum()
    starts = [grid_best] + list(rng.uniform(-3, 3, (restarts, 4)))

    outputs = Parallel(n_jobs=n_jobs)(_local_run(s) for s in starts)
    return [
        (i, value, PolyPoint.from_array(x)) for i, (value, x) in enumerate(outputs)
    ]


def min_w(restarts, seed=DEFAULT_SEED, n_jobs=1):
    """
    Smallest value of W found by multi-start local descent.

    Returns
    -------
    tuple:
        (value, PolyPoint). The value is a numerical minimum, not a proof.
    """
    runs = min_w_runs(restarts, seed, n_jobs)
    _, value, point = min(runs, key=lambda run: (run[1], run[0]))
    logger.info("Minimum of W over %d runs: %g at %s", len(runs), value, point)
    return value, point


def max_t_factor():
    """
    Maximum of t^2 (2 - t) over t in [0, 2], from the root of its derivative.

    Returns
    -------
    tuple:
        (t, value), i.e. (4/3, 32/27).
    """
    t = brentq(lambda t: 4 * t - 3 * t ** 2, 1, 2, xtol=1e-14)
    return t, t ** 2 * (2 - t)


def _min_violation(s):
    """
    Smallest achievable max(alpha^2 - 1, delta^2 - 1, (s - alpha)^2 + (s - delta)^2 - 1)
    over real alpha, delta, in epigraph form.
    """
    constraints = [
        {"type": "ineq", "fun": lambda v: v[2] - (v[0] ** 2 - 1)},
        {"type": "ineq", "fun": lambda v: v[2] - (v[1] ** 2 - 1)},
        {"type": "ineq", "fun": lambda v: v[2] - ((s - v[0]) ** 2 + (s - v[1]) ** 2 - 1)},
    ]
    best = np.inf
    for x0 in ([0, 0, 10], [s / 2, s / 2, 10], [1, -1, 10], [-1, 1, 10]):
        res = minimize(
            lambda v: v[2],
            x0,
            method="SLSQP",
            constraints=constraints,
            options={"ftol": 1e-14, "maxiter": 500},
        )
        if res.success:
            best = min(best, float(res.fun))
    return best


def non_sos_certificate(s=1.5 ** 1.5):
    """
    Decide whether the coefficient constraints of a sum-of-squares decomposition of
    W can be met.

    Matching monomials forces alpha + gamma = s and delta + xi = s, while the
    quadratic terms bound alpha^2, delta^2 and gamma^2 + xi^2 by 1 each. Then
    s^2 <= alpha^2 + gamma^2 + delta^2 + xi^2 <= 3, which fails for
    s = (3/2)^(3/2).

    Parameters
    ----------
    s (float) (default = (3/2)^(3/2)):
        Right hand side of the equality constraints; W itself uses the default.

    Returns
    -------
    dict:
        The bounds, the verdict ("Infeasible" or "Feasible"), the numerically
        minimized largest constraint violation and the t-factor check.
    """
    lower = s ** 2 / 2 + s ** 2 / 2
    upper = 3.0
    t, t_value = max_t_factor()
    report = {
        "s": s,
        "lower_bound": lower,
        "upper_bound": upper,
        "verdict": "Infeasible" if lower > upper else "Feasible",
        "min_violation": _min_violation(s),
        "t_argmax": t,
        "t_max": t_value,
    }
    logger.info("Sum-of-squares constraints with s=%g: %s", s, report["verdict"])
    return report


def avg_w(t):
    """
    Average of W on a moment table with two choices per party, expanded into the
    measurable monomials A_x^k B_y^l.
    """
    a2 = [t.a_moment(x, 2) for x in (1, 2)]
    b2 = [t.b_moment(y, 2) for y in (1, 2)]
    m = t.moment
    quartic = sum(m(x, y, 2, 2) for x in (1, 2) for y in (1, 2))
    cross = sum(m(1, y, 2, 1) - m(2, y, 2, 1) for y in (1, 2)) + sum(
        m(x, 1, 1, 2) - m(x, 2, 1, 2) for x in (1, 2)
    )
    return sum(a2) + sum(b2) + quartic - CROSS * cross


def quantum_avg_w(s):
    """
    Quantum average of W for a scenario with two choices per party.
    """
    assert s.m_a == 2 and s.m_b == 2, "W needs two choices per party"
    return avg_w(table_from_scenario(s))


def scan_quantum_w(n, seed=DEFAULT_SEED):
    """
    Evaluate <W> on random two-qubit states and Hermitian observables.

    Returns
    -------
    dict:
        Number of samples, smallest average with its sample index, and a message.
        Finding no negative average is evidence, not a proof.
    """
    from qcore import Observable, random_hermitian, random_state
    from scenarios import BipartiteScenario

    rng = np.random.default_rng(seed)
    values = np.empty(n)
    for i in range(n):
        s = BipartiteScenario(
            random_state(2, 2, rng),
            [Observable("A", x, random_hermitian(2, rng)) for x in (1, 2)],
            [Observable("B", y, random_hermitian(2, rng)) for y in (1, 2)],
        )
        values[i] = quantum_avg_w(s)

    best = int(np.argmin(values))
    violated = values[best] < -1e-9
    return {
        "samples": n,
        "seed": seed,
        "min_avg_w": float(values[best]),
        "argmin_sample": best,
        "message": "violation found in sample {}".format(best)
        if violated
        else "no violation found in {} samples".format(n),
    }


class TestSospoly(unittest.TestCase):
    def test_eval_examples(self):
        self.assertEqual(eval_w(PolyPoint(0, 0, 0, 0)), 0)
        self.assertAlmostEqual(eval_w(PolyPoint(1, 1, 1, 1)), 8, places=12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        h = 1e-6
        for _ in range(100):
            x = rng.uniform(-2, 2, 4)
            g = grad_w(x)
            fd = np.array(
                [(eval_w(x + h * e) - eval_w(x - h * e)) / (2 * h) for e in np.eye(4)]
            )
            assert np.max(np.abs(g - fd)) <= 1e-6 * max(1, np.max(np.abs(g)))

    def test_rotated_identity(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(-3, 3, (10000, 4))
        assert np.max(np.abs(eval_w(x) - eval_w_rotated(x))) <= 1e-10

    def test_bound_chain(self):
        rng = np.random.default_rng(3)
        x = rng.normal(0, 2, (100000, 4))
        ap, am, bp, bm = rotate(x)
        a = np.sqrt(ap ** 2 + am ** 2)
        b = np.sqrt(bp ** 2 + bm ** 2)
        root = np.sqrt(a ** 2 + b ** 2)

        bound = (2 / 3) ** 1.5 * a * b * root
        assert np.all(np.abs(ap * bp * (am + bm)) <= bound * (1 + 1e-12) + 1e-15)

        amgm = a ** 2 + b ** 2 + a ** 2 * b ** 2
        assert np.all(amgm >= 2 * root * a * b * (1 - 1e-12))

    def test_grid_points_nonnegative(self):
        value, _ = grid_minimum()
        assert value >= -1e-12

    def test_local_minimum_near_origin(self):
        value, x = local_minimum(PolyPoint(0.1, 0, 0, 0))
        assert 0 <= value <= 1e-10
        assert np.linalg.norm(x) <= 1e-4

    def test_min_w(self):
        for seed in range(100):
            value, _ = min_w(2, seed=seed)
            assert value >= -1e-8, (seed, value)

    def test_min_w_parallel_is_deterministic(self):
        serial = min_w_runs(3, seed=7)
        parallel = min_w_runs(3, seed=7, n_jobs=2)
        self.assertEqual([r[1] for r in serial], [r[1] for r in parallel])

    def test_t_factor(self):
        t, value = max_t_factor()
        assert abs(t - 4 / 3) <= 1e-10
        assert abs(value - 32 / 27) <= 1e-10

    def test_non_sos_certificate(self):
        report = non_sos_certificate()
        self.assertAlmostEqual(report["lower_bound"], 3.375, places=12)
        self.assertEqual(report["upper_bound"], 3)
        self.assertEqual(report["verdict"], "Infeasible")
        assert report["min_violation"] > 0.1
        expected = 2 * 3.375 / (1 + np.sqrt(2)) ** 2 - 1
        assert abs(report["min_violation"] - expected) <= 1e-6

        relaxed = non_sos_certificate(1.0)
        self.assertEqual(relaxed["verdict"], "Feasible")
        assert relaxed["min_violation"] <= 0
        # alpha = gamma = delta = xi = 1/2 meets every constraint
        alpha = delta = 0.5
        violation = max(alpha ** 2 - 1, (1 - alpha) ** 2 + (1 - delta) ** 2 - 1)
        assert violation <= 0

    def test_quantum_avg_w_zero_observables(self):
        from qcore import BipartiteState, Observable
        from scenarios import BipartiteScenario

        zero = np.zeros((2, 2))
        s = BipartiteScenario(
            BipartiteState([[1, 0], [0, 0]]),
            [Observable("A", x, zero) for x in (1, 2)],
            [Observable("B", y, zero) for y in (1, 2)],
        )
        self.assertEqual(quantum_avg_w(s), 0)

    def test_avg_w_matches_pointwise_average(self):
        from inequalities import table_from_lhv_samples

        rng = np.random.default_rng(4)
        a = rng.uniform(-2, 2, (50, 2))
        b = rng.uniform(-2, 2, (50, 2))
        expected = np.mean(eval_w(np.hstack([a, b])))
        self.assertAlmostEqual(avg_w(table_from_lhv_samples(a, b)), expected, places=10)

    def test_classical_avg_w_nonnegative(self):
        from inequalities import table_from_lhv_samples

        rng = np.random.default_rng(5)
        for i in range(100000):
            n = 1 if i % 10 else 5
            t = table_from_lhv_samples(
                rng.uniform(-3, 3, (n, 2)), rng.uniform(-3, 3, (n, 2))
            )
            assert avg_w(t) >= -1e-9

    def test_quantum_scan(self):
        report = scan_quantum_w(10000, seed=6)
        assert report["min_avg_w"] >= -1e-9
        self.assertEqual(report["message"], "no violation found in 10000 samples")


if __name__ == "__main__":
    unittest.main()
