"""
Includes the derivative-free search for inequality violations over two-qubit
states and observables.
"""

import csv
import functools
import io
import logging
import unittest
import numpy as np
from joblib import Parallel, delayed
from scipy.optimize import minimize
from inequalities import NegativeSecondMoment, get_evaluator, table_from_scenario
from qcore import PAULI, BipartiteState, Observable, schmidt
from scenarios import BipartiteScenario, bell_three_choices, tilted_two_choices
from util import DEFAULT_SEED, format_float

logger = logging.getLogger(__name__)

# Simplex coefficients of scipy's non-adaptive Nelder-Mead.
SIMPLEX = {"reflection": 1.0, "expansion": 2.0, "contraction": 0.5, "shrink": 0.5}
DEFAULT_MAX_EVALS = 2000
XATOL = 1e-10

_SIGMAS = [PAULI["X"], PAULI["Y"], PAULI["Z"]]


class SearchSpace:
    """
    Parameters of a two-qubit scenario: the Schmidt angle theta of the state
    cos(theta)|00> + sin(theta)|11>, then (offset, nx, ny, nz) per observable, A
    choices first. An observable is offset*I + n.sigma, or the projector
    (I + n.sigma/|n|)/2 when `projectors_only`, which ignores the offset.
    """

    __slots__ = ["m_a", "m_b", "projectors_only"]

    def __init__(self, m_a, m_b, projectors_only=False):
        assert m_a >= 1 and m_b >= 1, "Each party needs at least one choice"
        self.m_a = m_a
        self.m_b = m_b
        self.projectors_only = projectors_only

    @property
    def size(self):
        return 1 + 4 * (self.m_a + self.m_b)

    def _observable(self, party, choice, block):
        offset, n = block[0], np.asarray(block[1:])
        if self.projectors_only:
            norm = np.linalg.norm(n)
            n = n / norm if norm > 0 else np.array([0.0, 0.0, 1.0])
            offset, n = 0.5, n / 2
        op = offset * PAULI["I"] + sum(c * s for c, s in zip(n, _SIGMAS))
        return Observable(party, choice, op)

    def decode(self, params):
        """
        Build the scenario of a parameter vector.
        """
        params = np.asarray(params, dtype=float)
        assert params.shape == (self.size,), "Expected {} parameters".format(self.size)

        theta = params[0]
        state = BipartiteState([[np.cos(theta), 0], [0, np.sin(theta)]])
        blocks = params[1:].reshape(-1, 4)
        obs_a = [self._observable("A", x + 1, blocks[x]) for x in range(self.m_a)]
        obs_b = [
            self._observable("B", y + 1, blocks[self.m_a + y]) for y in range(self.m_b)
        ]
        return BipartiteScenario(state, obs_a, obs_b)

    def encode(self, s):
        """
        Parameters of an equivalent scenario: the state is moved to its Schmidt
        basis with the observables, which are then expanded in Pauli matrices.
        """
        assert (s.m_a, s.m_b) == (self.m_a, self.m_b), "Scenario shape does not match"
        coeffs, u, v = schmidt(s.state)
        theta = np.arctan2(coeffs[1], coeffs[0])

        def expand(op, basis):
            rotated = np.conj(basis).T @ op @ basis
            return [np.real(np.trace(rotated)) / 2] + [
                np.real(np.trace(rotated @ sigma)) / 2 for sigma in _SIGMAS
            ]

        blocks = [expand(o.op, u) for o in s.obs_a] + [expand(o.op, v) for o in s.obs_b]
        return np.concatenate([[theta], np.ravel(blocks)])

    def random_start(self, rng):
        """
        Uniform start: theta in [0, 2 pi), offsets in [-2, 2], Bloch components in
        [-1, 1].
        """
        blocks = np.column_stack(
            [
                rng.uniform(-2, 2, self.m_a + self.m_b),
                rng.uniform(-1, 1, (self.m_a + self.m_b, 3)),
            ]
        )
        return np.concatenate([[rng.uniform(0, 2 * np.pi)], blocks.ravel()])


class SearchResult:
    """
    Outcome of one or several simplex runs.

    Attributes
    ----------
    margin (float):
        Smallest margin over all evaluated points.

    params (numpy.ndarray):
        Parameters of that point.

    ineq (str):
        Inequality name.

    evaluations (int):
        Number of objective evaluations.

    seed (int | None):
        Seed of the run, None for explicit starts.

    budget_exhausted (bool):
        True if the run stopped on the evaluation budget instead of the simplex
        diameter.

    trace (list):
        Best margin after each iteration, nonincreasing.

    start (int):
        Index of the start within a multi-start run.
    """

    __slots__ = [
        "margin",
        "params",
        "ineq",
        "evaluations",
        "seed",
        "budget_exhausted",
        "trace",
        "start",
    ]

    def __init__(
        self,
        margin,
        params,
        ineq,
        evaluations,
        seed=None,
        budget_exhausted=False,
        trace=None,
        start=0,
    ):
        self.margin = float(margin)
        self.params = np.asarray(params, dtype=float)
        self.ineq = ineq
        self.evaluations = int(evaluations)
        self.seed = seed
        self.budget_exhausted = bool(budget_exhausted)
        self.trace = trace or []
        self.start = start

    def to_dict(self):
        return {
            "ineq": self.ineq,
            "margin": self.margin,
            "params": self.params.tolist(),
            "evaluations": self.evaluations,
            "seed": self.seed,
            "budget_exhausted": self.budget_exhausted,
            "start": self.start,
        }


def objective(params, space, ineq):
    """
    Margin of the named inequality at the scenario of `params`; negative means
    violated. Points with a negative square-root argument score +inf.
    """
    evaluate = get_evaluator(ineq)
    try:
        return evaluate(table_from_scenario(space.decode(params))).margin
    except NegativeSecondMoment:
        return np.inf


class _Tracker:
    """
    Remember the best point over all evaluations of a function.
    """

    def __init__(self, fun):
        self.fun = fun
        self.best = np.inf
        self.best_x = None
        self.count = 0

    def __call__(self, x):
        value = self.fun(x)
        self.count += 1
        if value < self.best or self.best_x is None:
            self.best, self.best_x = value, np.array(x)
        return value


def nelder_mead(fun, x0, max_evals=DEFAULT_MAX_EVALS, ineq=None, seed=None, start=0):
    """
    Simplex descent from x0, ending when the simplex diameter is below 1e-10 or
    after `max_evals` evaluations.

    Parameters
    ----------
    fun (callable):
        Function of a parameter vector.

    x0 (array-like):
        Start point.

    max_evals (int) (default = DEFAULT_MAX_EVALS):
        Evaluation budget, at least len(x0) + 1.

    ineq (str) (default = None):
        Name stored in the result.

    seed, start (default = None, 0):
        Provenance stored in the result.

    Returns
    -------
    SearchResult:
        Best point over all evaluations; `budget_exhausted` is set when the budget
        ran out first.
    """
    x0 = np.asarray(x0, dtype=float)
    assert max_evals >= x0.size + 1, "Budget must cover the initial simplex"

    tracker = _Tracker(fun)
    trace = []

    def callback(intermediate_result):
        trace.append(min(float(intermediate_result.fun), trace[-1] if trace else np.inf))

    res = minimize(
        tracker,
        x0,
        method="Nelder-Mead",
        callback=callback,
        options={"xatol": XATOL, "fatol": np.inf, "maxfev": max_evals, "adaptive": False},
    )
    exhausted = res.status in (1, 2)
    if exhausted:
        logger.debug("Simplex run %d stopped on the budget at %g", start, tracker.best)
    return SearchResult(
        tracker.best,
        tracker.best_x,
        ineq,
        tracker.count,
        seed=seed,
        budget_exhausted=exhausted,
        trace=trace,
        start=start,
    )


def known_starts(space, ineq):
    """
    Parameters of the known violating constructions that fit the space: the Bell
    construction for the three-choice inequalities and the tilted family at
    phi = pi/6 for the two-choice one.
    """
    shape = (space.m_a, space.m_b)
    if shape == (3, 3) and ineq in ("in33", "in33r"):
        return [space.encode(bell_three_choices())]
    if shape == (2, 2) and ineq == "ine22":
        return [space.encode(tilted_two_choices(np.pi / 6))]
    return []


@delayed
def _start_job(space, ineq, x0, max_evals, seed, start):
    fun = functools.partial(objective, space=space, ineq=ineq)
    return nelder_mead(fun, x0, max_evals, ineq=ineq, seed=seed, start=start)


def multi_start(
    space,
    ineq,
    n_starts,
    seed=DEFAULT_SEED,
    max_evals=DEFAULT_MAX_EVALS,
    n_jobs=1,
    include_known=True,
):
    """
    Run the simplex search from known constructions and `n_starts` random starts.

    Returns
    -------
    tuple:
        The best SearchResult (ties go to the lowest start index) and the list of
        all results in start order.
    """
    assert n_starts >= 1, "At least one start is needed"
    get_evaluator(ineq)

    rng = np.random.default_rng(seed)
    starts = known_starts(space, ineq) if include_known else []
    starts += [space.random_start(rng) for _ in range(n_starts)]

    results = Parallel(n_jobs=n_jobs)(
        _start_job(space, ineq, x0, max_evals, seed, i) for i, x0 in enumerate(starts)
    )
    best = min(results, key=lambda r: (r.margin, r.start))
    logger.info(
        "Searched %s from %d starts, best margin %.12g at start %d",
        ineq,
        len(starts),
        best.margin,
        best.start,
    )
    return best, results


def trace_to_csv(results):
    """
    CSV with columns start, iteration, margin.
    """
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["start", "iteration", "margin"])
    for r in results:
        for i, margin in enumerate(r.trace):
            writer.writerow([r.start, i, format_float(margin)])
    return out.getvalue()


class TestSearch(unittest.TestCase):
    def test_objective_at_known_points(self):
        space = SearchSpace(3, 3)
        margin = objective(space.encode(bell_three_choices()), space, "in33")
        assert abs(margin + 1 / 8) <= 1e-10

        space = SearchSpace(2, 2)
        margin = objective(space.encode(tilted_two_choices(np.pi / 6)), space, "ine22")
        assert abs(margin + 0.05) <= 1e-8

        margin = objective(space.encode(tilted_two_choices(0)), space, "ine22")
        assert abs(margin) <= 1e-8

    def test_encode_preserves_table(self):
        from qcore import random_hermitian, random_state

        rng = np.random.default_rng(1)
        space = SearchSpace(2, 3)
        s = BipartiteScenario(
            random_state(2, 2, rng),
            [Observable("A", x, random_hermitian(2, rng)) for x in (1, 2)],
            [Observable("B", y, random_hermitian(2, rng)) for y in (1, 2, 3)],
        )
        again = space.decode(space.encode(s))
        np.testing.assert_allclose(
            table_from_scenario(again).entries, table_from_scenario(s).entries, atol=1e-10
        )

    def test_projector_mode(self):
        space = SearchSpace(3, 3, projectors_only=True)
        s = space.decode(space.random_start(np.random.default_rng(2)))
        for o in s.obs_a + s.obs_b:
            assert np.max(np.abs(o.op @ o.op - o.op)) <= 1e-12

        margin = objective(space.encode(bell_three_choices()), space, "in33")
        assert abs(margin + 1 / 8) <= 1e-10

    def test_quadratic_bowl(self):
        result = nelder_mead(lambda x: float(np.sum(x ** 2)), np.ones(4), max_evals=5000)
        assert result.margin <= 1e-8
        assert not result.budget_exhausted

    def test_budget_flag(self):
        result = nelder_mead(lambda x: float(np.sum(x ** 2)), np.ones(4), max_evals=10)
        assert result.budget_exhausted
        assert result.evaluations <= 10 + 4 + 2

    def test_trace_nonincreasing(self):
        space = SearchSpace(2, 2)
        fun = functools.partial(objective, space=space, ineq="ine22")
        result = nelder_mead(fun, space.random_start(np.random.default_rng(3)), 500)
        assert result.trace
        assert all(b <= a for a, b in zip(result.trace, result.trace[1:]))
        assert result.margin <= result.trace[-1]

    def test_in33_search(self):
        best, results = multi_start(
            SearchSpace(3, 3), "in33", 100, seed=4, max_evals=200, n_jobs=-1
        )
        assert best.margin <= -1 / 8 + 1e-6
        self.assertEqual(len(results), 101)

    def test_in33_projector_search(self):
        best, _ = multi_start(
            SearchSpace(3, 3, projectors_only=True), "in33", 5, seed=5, max_evals=300
        )
        assert best.margin <= -1 / 8 + 1e-6

    def test_ine22_search(self):
        best, _ = multi_start(SearchSpace(2, 2), "ine22", 20, seed=6, max_evals=400)
        assert best.margin <= -0.05 + 1e-6

    def test_no_cfrd_violation(self):
        best, _ = multi_start(
            SearchSpace(2, 2), "cfrd", 100, seed=7, max_evals=200, n_jobs=-1
        )
        assert best.margin >= -1e-6

    def test_known_start_not_lost(self):
        space = SearchSpace(3, 3)
        x0 = known_starts(space, "in33")[0]
        fun = functools.partial(objective, space=space, ineq="in33")
        result = nelder_mead(fun, x0, max_evals=100)
        assert result.margin <= -1 / 8 + 1e-10

    def test_determinism(self):
        space = SearchSpace(2, 2)
        a, _ = multi_start(space, "ine22", 3, seed=8, max_evals=100)
        b, _ = multi_start(space, "ine22", 3, seed=8, max_evals=100, n_jobs=2)
        self.assertEqual(a.margin, b.margin)
        np.testing.assert_array_equal(a.params, b.params)
        self.assertEqual(a.start, b.start)

    def test_trace_csv(self):
        _, results = multi_start(SearchSpace(2, 2), "cfrd", 1, seed=9, max_evals=50)
        lines = trace_to_csv(results).splitlines()
        self.assertEqual(lines[0], "start,iteration,margin")
        assert len(lines) > 1


if __name__ == "__main__":
    unittest.main()
