"""
Includes the explicit local hidden variable model that reproduces every moment up
to second-second order of a maximally entangled state, when A has two choices and
B has any number of choices.

For |psi> = sum_{j<N} |jj>/sqrt(N) the quantum averages read
<A x B> = Tr(A_N B*_N)/N, where X_N is the upper-left N x N block and B* the
entrywise conjugate. The model below distributes this trace over pairs of
eigenvectors of A+ and A-, and puts a Gaussian (or a point) on B in each cell.
"""

import json
import logging
import unittest
import numpy as np
from inequalities import MomentTable
from qcore import (
    DimensionMismatch,
    EigenDecomposition,
    Observable,
    hermitian_eigen,
    random_hermitian,
    random_projector,
)
from util import TOLERANCES, MomentError

logger = logging.getLogger(__name__)


class NegativeVariance(MomentError):
    """Raised when a cell violates <b>^2 <= <b^2> p beyond tolerance."""

    pass


class NotMaximallyEntangledContext(MomentError):
    """Raised when the Schmidt dimension is below 1."""

    pass


class Conditional:
    """
    Distribution of one B outcome inside a cell: a Gaussian, or a point when the
    variance is zero.
    """

    __slots__ = ["mean", "variance"]

    def __init__(self, mean, variance):
        self.mean = float(mean)
        self.variance = float(variance) if variance > TOLERANCES["lhv_variance"] else 0.0

    @property
    def is_delta(self):
        return self.variance == 0.0

    def moment(self, l):
        return (1.0, self.mean, self.mean ** 2 + self.variance)[l]

    def to_dict(self):
        if self.is_delta:
            return {"kind": "delta", "point": self.mean}
        return {"kind": "gaussian", "mean": self.mean, "variance": self.variance}


class LhvCell:
    """
    One value pair (a+, a-) of the hidden variables with its weight and the B
    conditionals, one per B choice.
    """

    __slots__ = ["weight", "a_plus", "a_minus", "conditionals"]

    def __init__(self, weight, a_plus, a_minus, conditionals):
        self.weight = float(weight)
        self.a_plus = float(a_plus)
        self.a_minus = float(a_minus)
        self.conditionals = conditionals


class LhvModel:
    """
    Attributes
    ----------
    n (int):
        Schmidt dimension of the reproduced state.

    cells (list):
        LhvCell objects with positive weight.

    m_b (int):
        Number of B choices.

    dropped_moment (float):
        Sum of |<b>| + <b^2> over cells dropped for vanishing weight. Nonzero means
        the model misses some quantum moments.

    c_branches (int):
        Number of B choices for which the off-block correction was applied.
    """

    __slots__ = ["n", "cells", "m_b", "dropped_moment", "c_branches"]

    def __init__(self, n, cells, m_b, dropped_moment=0.0, c_branches=0):
        self.n = n
        self.cells = cells
        self.m_b = m_b
        self.dropped_moment = float(dropped_moment)
        self.c_branches = c_branches

    @property
    def total_weight(self):
        return sum(cell.weight for cell in self.cells)

    def to_dict(self):
        return {
            "n": self.n,
            "m_b": self.m_b,
            "dropped_moment": self.dropped_moment,
            "c_branches": self.c_branches,
            "cells": [
                {
                    "weight": cell.weight,
                    "a_plus": cell.a_plus,
                    "a_minus": cell.a_minus,
                    "conditionals": [c.to_dict() for c in cell.conditionals],
                }
                for cell in self.cells
            ],
        }


def model_to_json(model):
    return json.dumps(model.to_dict())


def cell_moments(u, w, b, n):
    """
    Unnormalized conditional moments of one B observable in every cell.

    Parameters
    ----------
    u, w (numpy.ndarray):
        First n rows of the eigenvector matrices of A+ and A-.

    b (numpy.ndarray):
        B matrix.

    n (int):
        Schmidt dimension.

    Returns
    -------
    tuple:
        first[i, j] = <b> and second[i, j] = <b^2> of cell (a+_i, a-_j), then the
        vectors c(a+_i) and c(a-_j).
    """
    b_conj = np.conj(b)[:n, :n]
    # positive semidefinite: the off-block part of B squared
    c_op = np.conj(b @ b)[:n, :n] - b_conj @ b_conj

    overlap = np.conj(u).T @ w  # <a+_i|1_N|a-_j>
    cross = (np.conj(w).T @ b_conj @ u).T  # <a-_j|B*|a+_i>, indexed [i, j]

    first = np.real(overlap * cross) / n
    second = np.abs(cross) ** 2 / n

    c_plus = np.real(np.einsum("ki,kl,li->i", np.conj(u), c_op, u)) / n
    c_minus = np.real(np.einsum("kj,kl,lj->j", np.conj(w), c_op, w)) / n
    c = c_plus.sum()
    if c > TOLERANCES["lhv_c"]:
        second = second + np.outer(c_plus, c_minus) / c
    return first, second, c_plus, c_minus


def build_lhv(n, dim_a, a_plus, a_minus, bs, eig_plus=None, eig_minus=None):
    """
    Construct the hidden variable model of the maximally entangled state.

    The weight of cell (a+, a-) is |<a+|1_N|a->|^2/N. Given the cell, each B_y is
    independent with the first two moments that make the model agree with the
    quantum ones.

    Parameters
    ----------
    n (int):
        Schmidt dimension N; the state is sum_{j<N} |jj>/sqrt(N).

    dim_a (int):
        Local dimension of A, at least N.

    a_plus, a_minus (qcore.Observable):
        The two observables of A.

    bs (list):
        Observables of B, of dimension at least N.

    eig_plus, eig_minus (qcore.EigenDecomposition) (default = None):
        Eigenbases to use, computed if None. Degenerate observables admit many.

    Raises
    ------
    NotMaximallyEntangledContext:
        If n < 1.

    NegativeVariance:
        If some cell has <b>^2 > <b^2> p by more than the tolerance.

    Returns
    -------
    LhvModel:
        The model.
    """
    if n < 1:
        raise NotMaximallyEntangledContext("Schmidt dimension must be positive")
    for op in [a_plus, a_minus]:
        if op.dim != dim_a:
            raise DimensionMismatch("{} does not have dim {}".format(op, dim_a))
    if dim_a < n or any(b.dim < n for b in bs):
        raise DimensionMismatch("Local dims must be at least {}".format(n))

    eig_plus = eig_plus or hermitian_eigen(a_plus.op)
    eig_minus = eig_minus or hermitian_eigen(a_minus.op)
    u = eig_plus.vectors[:n, :]
    w = eig_minus.vectors[:n, :]

    weights = np.abs(np.conj(u).T @ w) ** 2 / n
    keep = weights > TOLERANCES["lhv_cell"]

    moments = [cell_moments(u, w, b.op, n) for b in bs]
    c_branches = sum(c_plus.sum() > TOLERANCES["lhv_c"] for _, _, c_plus, _ in moments)

    dropped = 0.0
    for first, second, _, _ in moments:
        gap = second * weights - first ** 2
        if np.any(gap[keep] < -TOLERANCES["lhv_gap"]):
            raise NegativeVariance(
                "Cell moments break <b>^2 <= <b^2> p by {}".format(-gap[keep].min())
            )
        dropped += float(np.sum(np.abs(first[~keep]) + second[~keep]))

    cells = []
    for i, j in zip(*np.nonzero(keep)):
        p = weights[i, j]
        conditionals = []
        for first, second, _, _ in moments:
            gap = max(second[i, j] * p - first[i, j] ** 2, 0.0)
            conditionals.append(Conditional(first[i, j] / p, gap / p ** 2))
        cells.append(
            LhvCell(p, eig_plus.values[i], eig_minus.values[j], conditionals)
        )

    model = LhvModel(n, cells, len(bs), dropped, int(c_branches))
    total = model.total_weight + float(np.sum(weights[~keep]))
    assert abs(total - 1) <= TOLERANCES["marginal"], "Cell weights must sum to 1"

    if dropped > TOLERANCES["lhv_agreement"]:
        logger.warning(
            "Dropped %d zero-weight cells carrying moments %g",
            int(np.sum(~keep)),
            dropped,
        )
    logger.debug("Built a model with %d cells", len(cells))
    return model


def lhv_moments(model):
    """
    Integrate the model in closed form.

    Returns
    -------
    inequalities.MomentTable:
        Table with A choices (A+, A-) and the B choices of the model.
    """
    entries = np.zeros((2, model.m_b, 3, 3))
    for cell in model.cells:
        for x, value in enumerate([cell.a_plus, cell.a_minus]):
            a_pow = value ** np.arange(3)
            for y, cond in enumerate(cell.conditionals):
                b_pow = np.array([cond.moment(l) for l in range(3)])
                entries[x, y] += cell.weight * np.outer(a_pow, b_pow)
    entries[:, :, 0, 0] = 1
    return MomentTable(entries, marginal_tol=TOLERANCES["lhv_agreement"])


def sample_lhv(model, n_samples, seed):
    """
    Draw hidden variables: a cell by weight, then every B_y independently.

    Returns
    -------
    tuple:
        Arrays a_plus (n,), a_minus (n,) and b (n, m_b).
    """
    assert n_samples >= 1, "Draw at least one sample"
    rng = np.random.default_rng(seed)
    weights = np.array([cell.weight for cell in model.cells])
    idx = rng.choice(len(weights), size=n_samples, p=weights / weights.sum())

    a_plus = np.array([cell.a_plus for cell in model.cells])[idx]
    a_minus = np.array([cell.a_minus for cell in model.cells])[idx]
    means = np.array([[c.mean for c in cell.conditionals] for cell in model.cells])
    stds = np.sqrt(
        np.array([[c.variance for c in cell.conditionals] for cell in model.cells])
    )
    b = means[idx] + stds[idx] * rng.standard_normal((n_samples, model.m_b))
    return a_plus, a_minus, b


def verify_lhv(model, scenario):
    """
    Compare the model with the quantum moments of the scenario.

    Returns
    -------
    tuple:
        Largest absolute moment discrepancy and whether all weights and variances
        are nonnegative.
    """
    from inequalities import table_from_scenario

    quantum = table_from_scenario(scenario)
    discrepancy = float(np.max(np.abs(lhv_moments(model).entries - quantum.entries)))
    semipositive = all(
        cell.weight >= 0 and all(c.variance >= 0 for c in cell.conditionals)
        for cell in model.cells
    )
    return discrepancy, semipositive


def random_lhv_input(n, dim_a, dim_b, n_b, rng, projectors=False):
    """
    Random observables for property checks: A+ and A- (random projectors of random
    rank between 1 and dim_a - 1 if `projectors`, Hermitian otherwise) and `n_b` Hermitian B observables.
    """
    if projectors:
        assert dim_a >= 2, "Proper projectors need dim_a >= 2"
        ops = [random_projector(dim_a, int(rng.integers(1, dim_a)), rng) for _ in "+-"]
    else:
        ops = [random_hermitian(dim_a, rng) for _ in "+-"]
    a_plus, a_minus = [Observable("A", x, op) for x, op in enumerate(ops, start=1)]
    bs = [Observable("B", y, random_hermitian(dim_b, rng)) for y in range(1, n_b + 1)]
    return a_plus, a_minus, bs


class TestLhv(unittest.TestCase):
    @staticmethod
    def quantum_scenario(n, a_plus, a_minus, bs):
        from scenarios import maximally_entangled_two_choices

        return maximally_entangled_two_choices(
            n, a_plus.dim, bs[0].dim, a_plus.op, a_minus.op, [b.op for b in bs]
        )

    def check(self, n, a_plus, a_minus, bs, tol=1e-10):
        model = build_lhv(n, a_plus.dim, a_plus, a_minus, bs)
        discrepancy, semipositive = verify_lhv(
            model, self.quantum_scenario(n, a_plus, a_minus, bs)
        )
        assert discrepancy <= tol, discrepancy
        assert semipositive
        return model

    def test_identity_b(self):
        rng = np.random.default_rng(0)
        for n in (1, 2, 3):
            a_plus, a_minus, _ = random_lhv_input(n, n, n, 0, rng)
            model = self.check(n, a_plus, a_minus, [Observable("B", 1, np.eye(n))])
            for cell in model.cells:
                assert cell.conditionals[0].is_delta
                self.assertAlmostEqual(cell.conditionals[0].mean, 1, places=9)

            table = lhv_moments(model)
            for x in (1, 2):
                for k in (0, 1, 2):
                    for l in (1, 2):
                        self.assertAlmostEqual(
                            table.moment(x, 1, k, l), table.moment(x, 1, k, 0), places=9
                        )

    def test_two_projectors(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            a_plus = Observable("A", 1, random_projector(2, 1, rng))
            a_minus = Observable("A", 2, random_projector(2, 1, rng))
            bs = [Observable("B", 1, random_hermitian(2, rng))]
            model = self.check(2, a_plus, a_minus, bs)
            self.assertEqual(model.c_branches, 0)

    def test_padded_b_uses_off_block(self):
        rng = np.random.default_rng(2)
        a_plus, a_minus, bs = random_lhv_input(2, 2, 3, 2, rng)
        model = self.check(2, a_plus, a_minus, bs)
        self.assertEqual(model.c_branches, 2)

    def test_random_inputs(self):
        rng = np.random.default_rng(500)
        for i in range(500):
            n = int(rng.integers(2, 5))
            dim_a = n + int(rng.integers(0, 3))
            dim_b = n + int(rng.integers(0, 3))
            n_b = int(rng.integers(1, 4))
            a_plus, a_minus, bs = random_lhv_input(
                n, dim_a, dim_b, n_b, rng, projectors=bool(i % 2)
            )
            model = self.check(n, a_plus, a_minus, bs, tol=1e-9)
            assert all(cell.weight > 0 for cell in model.cells)

            u = hermitian_eigen(a_plus.op).vectors[:n, :]
            w = hermitian_eigen(a_minus.op).vectors[:n, :]
            weights = np.abs(np.conj(u).T @ w) ** 2 / n
            for b in bs:
                first, second, c_plus, c_minus = cell_moments(u, w, b.op, n)
                assert np.all(first ** 2 <= second * weights + 1e-12)
                assert abs(c_plus.sum() - c_minus.sum()) <= 1e-10
                assert np.all(c_plus >= -1e-12) and np.all(c_minus >= -1e-12)

    def test_basis_independence(self):
        from qcore import random_unitary

        rng = np.random.default_rng(3)

        a_plus = Observable("A", 1, random_projector(3, 1, rng))
        a_minus = Observable("A", 2, random_hermitian(3, rng))
        bs = [Observable("B", 1, random_hermitian(3, rng))]

        eig = hermitian_eigen(a_plus.op)
        # eigenvalue 0 is twice degenerate, rotate its eigenspace
        rotated = np.array(eig.vectors)
        rotated[:, :2] = rotated[:, :2] @ random_unitary(2, rng)
        other = EigenDecomposition(eig.values, rotated)

        t1 = lhv_moments(build_lhv(3, 3, a_plus, a_minus, bs, eig_plus=eig))
        t2 = lhv_moments(build_lhv(3, 3, a_plus, a_minus, bs, eig_plus=other))
        assert np.max(np.abs(t1.entries - t2.entries)) <= 1e-9

    def test_zero_weight_cells_do_not_matter(self):
        a_plus = Observable("A", 1, np.diag([1.0, 0.0]))
        a_minus = Observable("A", 2, np.diag([2.0, 0.0]))
        bs = [Observable("B", 1, np.diag([0.3, -1.2]))]
        model = self.check(2, a_plus, a_minus, bs, tol=1e-12)
        self.assertEqual(len(model.cells), 2)
        self.assertEqual(model.dropped_moment, 0)

    def test_same_operator_drops_cells(self):
        # A+ = A- in the same basis leaves only diagonal cells, which cannot carry
        # the cross terms of B
        rng = np.random.default_rng(5)
        op = random_hermitian(2, rng)
        a_plus, a_minus = Observable("A", 1, op), Observable("A", 2, op)
        bs = [Observable("B", 1, random_hermitian(2, rng))]
        with self.assertLogs(logger, level="WARNING"):
            model = build_lhv(2, 2, a_plus, a_minus, bs)
        assert model.dropped_moment > 0

    def test_errors(self):
        rng = np.random.default_rng(6)
        a_plus, a_minus, bs = random_lhv_input(2, 2, 2, 1, rng)
        with self.assertRaises(NotMaximallyEntangledContext):
            build_lhv(0, 2, a_plus, a_minus, bs)
        with self.assertRaises(DimensionMismatch):
            build_lhv(3, 2, a_plus, a_minus, bs)

    def test_sampling(self):
        rng = np.random.default_rng(7)
        a_plus = Observable("A", 1, random_projector(2, 1, rng))
        a_minus = Observable("A", 2, random_projector(2, 1, rng))
        bs = [Observable("B", 1, random_hermitian(2, rng))]
        model = build_lhv(2, 2, a_plus, a_minus, bs)
        table = lhv_moments(model)

        n = 1000000
        ap, am, b = sample_lhv(model, n, seed=8)
        product = ap * b[:, 0]
        error = product.std() / np.sqrt(n)
        assert abs(product.mean() - table.moment(1, 1, 1, 1)) <= 5 * error

        again = sample_lhv(model, 1000, seed=9)
        np.testing.assert_array_equal(again[2], sample_lhv(model, 1000, seed=9)[2])

    def test_delta_sampling_is_deterministic_per_cell(self):
        rng = np.random.default_rng(10)
        a_plus, a_minus, _ = random_lhv_input(2, 2, 2, 0, rng)
        model = build_lhv(2, 2, a_plus, a_minus, [Observable("B", 1, 2 * np.eye(2))])
        _, _, b = sample_lhv(model, 100, seed=1)
        np.testing.assert_allclose(b, 2, atol=1e-9)

    def test_json(self):
        rng = np.random.default_rng(11)
        a_plus, a_minus, bs = random_lhv_input(2, 2, 2, 1, rng)
        d = json.loads(model_to_json(build_lhv(2, 2, a_plus, a_minus, bs)))
        assert abs(sum(c["weight"] for c in d["cells"]) - 1) <= 1e-10
        assert d["cells"][0]["conditionals"][0]["kind"] in ("gaussian", "delta")


if __name__ == "__main__":
    unittest.main()
