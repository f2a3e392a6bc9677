"""
Includes the MomentTable class and evaluators for the moment-based inequalities,
including the null-event transform.
"""

import csv
import io
import json
import logging
import unittest
import numpy as np
from qcore import moment
from util import TOLERANCES, MomentError, format_float

logger = logging.getLogger(__name__)

POWERS = (0, 1, 2)

# eval_in33 on null_mix(bell, r) has margin 1 - 9r/8, which is zero at r = 8/9.
IN33_NULL_CROSSOVER = 8 / 9


class InvalidTable(MomentError):
    """Raised when moments break the MomentTable invariants."""

    pass


class EmptySample(MomentError):
    """Raised when no classical samples are given."""

    pass


class NotEnoughChoices(MomentError):
    """Raised when a table has fewer choices than the inequality needs."""

    pass


class ShapeMismatch(MomentError):
    """Raised when Salles-class coefficients do not match the table."""

    pass


class NegativeSecondMoment(MomentError):
    """Raised when a square-root argument is negative beyond the clamp tolerance."""

    pass


class RateOutOfRange(MomentError):
    """Raised when the entanglement rate is outside (0, 1]."""

    pass


class UnknownInequality(MomentError):
    """Raised when an inequality name is not registered."""

    pass


class MomentTable:
    """
    All measurable moments <A_x^k B_y^l> for k, l in {0, 1, 2}.

    Attributes
    ----------
    entries (numpy.ndarray):
        Real array of shape (mA, mB, 3, 3); entries[x-1, y-1, k, l] = <A_x^k B_y^l>.

    null_rate (float) (default = 1.0):
        Product of the entanglement rates folded in by `null_mix`.

    marginal_tol (float | None) (default = TOLERANCES["marginal"]):
        Tolerance of the no-signaling check of marginals. None skips it, which is
        meant for statistical estimates.

    clamp_tol (float) (default = TOLERANCES["clamp"]):
        Square-root arguments in [-clamp_tol, 0) are treated as 0 by evaluators.
        Statistical tables use a wider value.
    """

    __slots__ = ["entries", "null_rate", "clamp_tol"]

    def __init__(
        self,
        entries,
        null_rate=1.0,
        marginal_tol=TOLERANCES["marginal"],
        clamp_tol=TOLERANCES["clamp"],
    ):
        """
        Initialize the MomentTable object. Look at the class docstring for details.
        """
        entries = np.array(entries, dtype=float)
        if entries.ndim != 4 or entries.shape[2:] != (3, 3) or min(entries.shape) < 1:
            raise InvalidTable("Entries must have shape (mA, mB, 3, 3)")

        if np.any(np.abs(entries[:, :, 0, 0] - 1) > TOLERANCES["marginal"]):
            raise InvalidTable("Zeroth moments must equal 1")

        if marginal_tol is not None:
            a_spread = np.ptp(entries[:, :, :, 0], axis=1)
            b_spread = np.ptp(entries[:, :, 0, :], axis=0)
            if max(np.max(a_spread), np.max(b_spread)) > marginal_tol:
                raise InvalidTable("Marginals depend on the other party's choice")

            if np.min(entries[:, :, 2, 0]) < -clamp_tol or np.min(
                entries[:, :, 0, 2]
            ) < -clamp_tol:
                raise InvalidTable("Second moments must be nonnegative")

        entries.setflags(write=False)
        self.entries = entries
        self.null_rate = float(null_rate)
        self.clamp_tol = float(clamp_tol)

    @property
    def m_a(self):
        return self.entries.shape[0]

    @property
    def m_b(self):
        return self.entries.shape[1]

    def moment(self, x, y, k, l):
        """
        <A_x^k B_y^l> with choices counted from 1.
        """
        return float(self.entries[x - 1, y - 1, k, l])

    def a_moment(self, x, k):
        """
        <A_x^k>, averaged over the choices of B (all equal for exact tables).
        """
        return float(np.mean(self.entries[x - 1, :, k, 0]))

    def b_moment(self, y, l):
        """
        <B_y^l>, averaged over the choices of A (all equal for exact tables).
        """
        return float(np.mean(self.entries[:, y - 1, 0, l]))

    def restrict(self, choices_a, choices_b):
        """
        Sub-table of the given choices (counted from 1), in the given order.
        """
        ia = [x - 1 for x in choices_a]
        ib = [y - 1 for y in choices_b]
        return MomentTable(
            self.entries[np.ix_(ia, ib)],
            null_rate=self.null_rate,
            marginal_tol=None,
            clamp_tol=self.clamp_tol,
        )

    def to_dict(self):
        return {
            "m_a": self.m_a,
            "m_b": self.m_b,
            "null_rate": self.null_rate,
            "clamp_tol": self.clamp_tol,
            "entries": self.entries.tolist(),
        }

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d, marginal_tol=TOLERANCES["marginal"]):
        return cls(
            d["entries"],
            null_rate=d.get("null_rate", 1.0),
            marginal_tol=marginal_tol,
            clamp_tol=d.get("clamp_tol", TOLERANCES["clamp"]),
        )

    @classmethod
    def from_json(cls, text, marginal_tol=TOLERANCES["marginal"]):
        return cls.from_dict(json.loads(text), marginal_tol)

    def to_csv(self):
        """
        Flat CSV with columns x, y, k, l, value (choices counted from 1).
        """
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["x", "y", "k", "l", "value"])
        for (x, y, k, l), value in np.ndenumerate(self.entries):
            writer.writerow([x + 1, y + 1, k, l, format_float(value)])
        return out.getvalue()

    @classmethod
    def from_csv(cls, text, null_rate=1.0, marginal_tol=TOLERANCES["marginal"]):
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise InvalidTable("CSV has no rows")
        m_a = max(int(r["x"]) for r in rows)
        m_b = max(int(r["y"]) for r in rows)
        entries = np.full((m_a, m_b, 3, 3), np.nan)
        for r in rows:
            entries[int(r["x"]) - 1, int(r["y"]) - 1, int(r["k"]), int(r["l"])] = float(
                r["value"]
            )
        if np.isnan(entries).any():
            raise InvalidTable("CSV does not fill every entry")
        return cls(entries, null_rate=null_rate, marginal_tol=marginal_tol)

    def __eq__(self, other):
        return (
            np.array_equal(self.entries, other.entries)
            and self.null_rate == other.null_rate
        )


class InequalityReport:
    """
    Both sides of an inequality lhs >= rhs evaluated on a table.

    Attributes
    ----------
    name (str):
        Name of the inequality.

    lhs, rhs (float):
        Left and right hand sides.

    margin (float):
        lhs - rhs; negative margin certifies a violation.

    satisfied (bool):
        True if margin >= -TOLERANCES["violation"].
    """

    __slots__ = ["name", "lhs", "rhs", "margin", "satisfied"]

    def __init__(self, name, lhs, rhs):
        self.name = name
        self.lhs = float(lhs)
        self.rhs = float(rhs)
        self.margin = self.lhs - self.rhs
        self.satisfied = bool(self.margin >= -TOLERANCES["violation"])

    @property
    def verdict(self):
        return "SATISFIED" if self.satisfied else "VIOLATED"

    def to_dict(self):
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "satisfied": self.satisfied,
            "verdict": self.verdict,
        }

    def __repr__(self):
        return "{}: lhs={:.12g} rhs={:.12g} margin={:.6g} {}".format(
            self.name, self.lhs, self.rhs, self.margin, self.verdict
        )


def table_from_scenario(s):
    """
    Fill every entry of the table with the exact quantum moment.

    Parameters
    ----------
    s (scenarios.BipartiteScenario):
        State and per-party observables.

    Returns
    -------
    MomentTable:
        Quantum moment table.
    """
    entries = np.empty((len(s.obs_a), len(s.obs_b), 3, 3))
    for i, a in enumerate(s.obs_a):
        for j, b in enumerate(s.obs_b):
            for k in POWERS:
                for l in POWERS:
                    entries[i, j, k, l] = moment(s.state, a, b, k, l)
    return MomentTable(entries)


def table_from_lhv_samples(samples_a, samples_b, weights=None):
    """
    Empirical moment table of hidden-variable samples.

    Parameters
    ----------
    samples_a (array-like):
        (n, mA) values of A_x per sample.

    samples_b (array-like):
        (n, mB) values of B_y per sample.

    weights (array-like) (default = None):
        Nonnegative sample weights, uniform if None.

    Raises
    ------
    EmptySample:
        If there is no sample or all weights are zero.

    Returns
    -------
    MomentTable:
        Table of weighted averages.
    """
    a = np.atleast_2d(np.asarray(samples_a, dtype=float))
    b = np.atleast_2d(np.asarray(samples_b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise EmptySample("No samples given")
    assert a.shape[0] == b.shape[0], "A and B samples must have the same count"

    if weights is None:
        w = np.full(a.shape[0], 1 / a.shape[0])
    else:
        w = np.asarray(weights, dtype=float)
        assert np.all(w >= 0), "Weights must be nonnegative"
        if w.sum() <= 0:
            raise EmptySample("All weights are zero")
        w = w / w.sum()

    a_pow = a[:, :, None] ** np.array(POWERS)
    b_pow = b[:, :, None] ** np.array(POWERS)
    entries = np.einsum("n,nxk,nyl->xykl", w, a_pow, b_pow)
    return MomentTable(entries, marginal_tol=TOLERANCES["marginal_sampled"])


def null_mix(t, r):
    """
    Mix the table with the null event A = B = 0 at entanglement rate r. Every entry
    with k + l >= 1 is multiplied by r.

    Raises
    ------
    RateOutOfRange:
        If r is not in (0, 1].
    """
    if not 0 < r <= 1:
        raise RateOutOfRange("Rate must be in (0, 1], got {}".format(r))

    entries = t.entries * r
    entries[:, :, 0, 0] = 1
    return MomentTable(
        entries,
        null_rate=t.null_rate * r,
        marginal_tol=None,
        clamp_tol=t.clamp_tol,
    )


def _require(t, m, name):
    if t.m_a < m or t.m_b < m:
        raise NotEnoughChoices(
            "{} needs {} choices per party, table has ({}, {})".format(
                name, m, t.m_a, t.m_b
            )
        )


def _root(value, tol):
    """
    Square root of a second moment, clamping floating-point dust.
    """
    if value < 0:
        if value < -tol:
            raise NegativeSecondMoment(
                "Square-root argument {} is below -{}".format(value, tol)
            )
        logger.debug("Clamped square-root argument %g to 0", value)
        value = 0.0
    return np.sqrt(value)


def eval_cfrd(t):
    """
    Evaluate sum <A_x^2 B_y^2> >= (<A1B1> - <A2B2>)^2 + (<A1B2> + <A2B1>)^2
    over choices 1, 2.
    """
    _require(t, 2, "cfrd")
    m = t.moment
    lhs = sum(m(x, y, 2, 2) for x in (1, 2) for y in (1, 2))
    rhs = (m(1, 1, 1, 1) - m(2, 2, 1, 1)) ** 2 + (m(1, 2, 1, 1) + m(2, 1, 1, 1)) ** 2
    return InequalityReport("cfrd", lhs, rhs)


# The two linear forms that turn the Salles class into the CFRD inequality.
CFRD_COEFFS = np.array([[[1, 0], [0, -1]], [[0, 1], [1, 0]]], dtype=float)


def eval_salles_class(t, coeffs):
    """
    Evaluate sum_xy <A_x^2 B_y^2> >= sum_i (sum_xy t_ixy <A_x B_y>)^2.

    Parameters
    ----------
    t (MomentTable):
        Moment table.

    coeffs (array-like):
        Array t_ixy of shape (n_forms, mA, mB), finite.

    Raises
    ------
    ShapeMismatch:
        If the coefficient shape does not match the table.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.ndim != 3 or coeffs.shape[1:] != (t.m_a, t.m_b):
        raise ShapeMismatch(
            "Coefficients of shape {} do not fit a ({}, {}) table".format(
                coeffs.shape, t.m_a, t.m_b
            )
        )
    assert np.all(np.isfinite(coeffs)), "Coefficients must be finite"

    lhs = float(np.sum(t.entries[:, :, 2, 2]))
    forms = np.einsum("ixy,xy->i", coeffs, t.entries[:, :, 1, 1])
    rhs = float(np.sum(forms ** 2))
    return InequalityReport("salles", lhs, rhs)


def normalize_salles(coeffs):
    """
    Scale coefficients so that sum_i ||T_i||_2^2 <= 1. Pointwise
    sum_i (a^T T_i b)^2 <= |a|^2 |b|^2 then holds, and by Jensen the inequality
    holds for every classical distribution.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    total = sum(np.linalg.norm(c, 2) ** 2 for c in coeffs)
    if total <= 1:
        return coeffs
    return coeffs / np.sqrt(total)


def _in33(m, tol, name):
    """
    Both sides of the three-choice inequality on an entries array m[x, y, k, l]
    (choices counted from 0).
    """

    def sq(x, y):
        return m[x - 1, y - 1, 2, 2]

    def root2(x1, y1, x2, y2):
        return 2 * _root(sq(x1, y1), tol) * _root(sq(x2, y2), tol)

    lhs = (
        sq(1, 2)
        + sq(2, 3)
        + sq(3, 1)
        + root2(1, 3, 2, 2)
        + root2(2, 1, 3, 3)
        + root2(3, 2, 1, 1)
    )
    rhs = 2 * (m[0, 1, 1, 1] + m[1, 2, 1, 1] + m[2, 0, 1, 1]) - 1
    return InequalityReport(name, lhs, rhs)


def eval_in33(t):
    """
    Evaluate the three-choice inequality

        <A1^2B2^2> + <A2^2B3^2> + <A3^2B1^2>
        + 2 sqrt(<A1^2B3^2><A2^2B2^2>) + 2 sqrt(<A2^2B1^2><A3^2B3^2>)
        + 2 sqrt(<A3^2B2^2><A1^2B1^2>) >= 2(<A1B2> + <A2B3> + <A3B1>) - 1.

    It follows from <(A1B2 + A2B3 + A3B1 - 1)^2> >= 0 and the CBS inequality.
    """
    _require(t, 3, "in33")
    return _in33(t.entries, t.clamp_tol, "in33")


# Row k of each matrix gives (1 - A)^k in powers of A; the matrix is an involution.
_FLIP = np.array([[1, 0, 0], [1, -1, 0], [1, -2, 1]], dtype=float)
_KEEP = np.eye(3)


def _substitute(entries, flip_a, flip_b):
    """
    Replace A_x by 1 - A_x for x in flip_a and B_y by 1 - B_y for y in flip_b
    (choices counted from 1) in every moment of the entries array.
    """
    out = np.empty_like(entries)
    for x in range(entries.shape[0]):
        ma = _FLIP if x + 1 in flip_a else _KEEP
        for y in range(entries.shape[1]):
            mb = _FLIP if y + 1 in flip_b else _KEEP
            out[x, y] = ma @ entries[x, y] @ mb.T
    return out


def primed_table(t):
    """
    Moments an experimenter records when measuring A'1 = 1 - A1 and B'2 = 1 - B2
    instead of A1 and B2, at entanglement rate t.null_rate. In the null event all
    recorded values are 0, including A'1 and B'2.

    Parameters
    ----------
    t (MomentTable):
        Table over the original variables, null-mixed with `null_mix`.

    Returns
    -------
    MomentTable:
        Table over (A'1, A2, A3, ...) and (B1, B'2, B3, ...).
    """
    _require(t, 3, "in33r")
    scaled = np.array(t.entries)
    # the non-null part carries total weight r
    scaled[:, :, 0, 0] = t.null_rate
    primed = _substitute(scaled, flip_a=(1,), flip_b=(2,))
    primed[:, :, 0, 0] = 1
    return MomentTable(
        primed, null_rate=t.null_rate, marginal_tol=None, clamp_tol=t.clamp_tol
    )


def eval_in33r(t):
    """
    Evaluate the three-choice inequality rewritten in A'1 = 1 - A1 and
    B'2 = 1 - B2, e.g. <(1 - A'1)^2 (1 - B'2)^2> in place of <A1^2 B2^2>. Each
    expression in primed variables is expanded into moments of the primed table,
    so the constant terms cancel between both sides and the margin scales with
    the entanglement rate instead of being dominated by the null event.

    Parameters
    ----------
    t (MomentTable):
        Table over the original variables, null-mixed with `null_mix`.
    """
    primed = primed_table(t)
    expanded = _substitute(primed.entries, flip_a=(1,), flip_b=(2,))
    return _in33(expanded, t.clamp_tol, "in33r")


def eval_in33_restricted(t):
    """
    Evaluate <A1^2B2^2> + <A2^2B3^2> + <A3^2B1^2> + 1 >= 2(<A1B2> + <A2B3> + <A3B1>),
    the simpler form valid classically when A_z B_z = 0 for z = 1, 2, 3.
    """
    _require(t, 3, "in33_restricted")
    m = t.moment
    lhs = m(1, 2, 2, 2) + m(2, 3, 2, 2) + m(3, 1, 2, 2) + 1
    rhs = 2 * (m(1, 2, 1, 1) + m(2, 3, 1, 1) + m(3, 1, 1, 1))
    return InequalityReport("in33_restricted", lhs, rhs)


def eval_ine22(t):
    """
    Evaluate the two-choice inequality

        <A1^2B2^2> + <B1^2A2^2> + <(A1+B1)^2>/4
        + sqrt(<(A1-B1)^2>) (sqrt(<A1^2B2^2>) + sqrt(<A2^2B1^2>))
        + 2 sqrt(<A1^2B1^2><A2^2B2^2>) >= 2(<A1^2B2> + <B1^2A2>).

    It follows from (A1B2 + B1A2 - (A1+B1)/2)^2 >= 0 and the CBS inequality.
    """
    _require(t, 2, "ine22")
    m = t.moment
    tol = t.clamp_tol

    a1_sq = t.a_moment(1, 2)
    b1_sq = t.b_moment(1, 2)
    sum_sq = a1_sq + 2 * m(1, 1, 1, 1) + b1_sq
    diff_sq = a1_sq - 2 * m(1, 1, 1, 1) + b1_sq

    lhs = (
        m(1, 2, 2, 2)
        + m(2, 1, 2, 2)
        + sum_sq / 4
        + _root(diff_sq, tol) * (_root(m(1, 2, 2, 2), tol) + _root(m(2, 1, 2, 2), tol))
        + 2 * _root(m(1, 1, 2, 2), tol) * _root(m(2, 2, 2, 2), tol)
    )
    rhs = 2 * (m(1, 2, 2, 1) + m(2, 1, 1, 2))
    return InequalityReport("ine22", lhs, rhs)


INEQUALITIES = {
    "cfrd": eval_cfrd,
    "in33": eval_in33,
    "in33r": eval_in33r,
    "ine22": eval_ine22,
}


def get_evaluator(name):
    """
    Look up a registered inequality evaluator by name.

    Raises
    ------
    UnknownInequality:
        If the name is not registered.
    """
    if name not in INEQUALITIES:
        raise UnknownInequality(
            "Unknown inequality '{}', choose from {}".format(name, sorted(INEQUALITIES))
        )
    return INEQUALITIES[name]


class TestInequalities(unittest.TestCase):
    def setUp(self):
        from scenarios import bell_three_choices, tilted_two_choices

        self.bell = table_from_scenario(bell_three_choices())
        self.tilted = table_from_scenario(tilted_two_choices(np.pi / 6))

    @staticmethod
    def random_classical(rng, n_samples, m_a, m_b):
        """
        Random classical samples, a fifth of them heavy-tailed up to |A| = 1e3.
        """
        if rng.random() < 0.2:
            a = rng.standard_cauchy((n_samples, m_a)).clip(-1e3, 1e3)
            b = rng.standard_cauchy((n_samples, m_b)).clip(-1e3, 1e3)
        else:
            a = rng.uniform(-2, 2, (n_samples, m_a))
            b = rng.uniform(-2, 2, (n_samples, m_b))
        return a, b

    @staticmethod
    def assert_sound(report):
        scale = max(1.0, abs(report.lhs), abs(report.rhs))
        assert report.margin >= -1e-9 * scale, report

    def test_bell_table(self):
        for x in (1, 2, 3):
            for y in (1, 2, 3):
                expected = (1 - np.cos(2 * np.pi * (x - y) / 3)) / 4
                assert abs(self.bell.moment(x, y, 1, 1) - expected) <= 1e-12
                assert abs(self.bell.moment(x, y, 2, 2) - expected) <= 1e-12

    def test_bell_table_matches_fixture(self):
        from util import get_data_path, load_json

        fixture = MomentTable.from_dict(load_json(get_data_path("test_data/bell_table.json")))
        np.testing.assert_allclose(self.bell.entries, fixture.entries, atol=1e-12)

    def test_product_state_table(self):
        from qcore import BipartiteState, Observable
        from scenarios import BipartiteScenario

        p0 = np.diag([1.0, 0.0])
        s = BipartiteScenario(
            BipartiteState([[1, 0], [0, 0]]),
            [Observable("A", 1, p0)],
            [Observable("B", 1, p0)],
        )
        t = table_from_scenario(s)
        np.testing.assert_allclose(t.entries[0, 0], np.ones((3, 3)), atol=1e-14)

    def test_tilted_table(self):
        for k in (1, 2):
            for l in (1, 2):
                self.assertAlmostEqual(self.tilted.moment(1, 2, k, l), 3 / 40, places=12)
                self.assertAlmostEqual(self.tilted.moment(1, 1, k, l), 1 / 10, places=12)

    def test_invalid_table(self):
        entries = np.array(self.bell.entries)
        entries[0, 1, 1, 0] += 1e-3
        with self.assertRaises(InvalidTable):
            MomentTable(entries)

    def test_lhv_samples_examples(self):
        t = table_from_lhv_samples([[1, 1, 1]], [[1, 1, 1]])
        np.testing.assert_allclose(t.entries, np.ones((3, 3, 3, 3)))

        t = table_from_lhv_samples([[2, 0]], [[0, 3]])
        self.assertEqual(t.moment(1, 2, 2, 2), 36)

        rng = np.random.default_rng(3)
        n = 40000
        t = table_from_lhv_samples(
            rng.choice([-1, 1], (n, 2)), rng.choice([-1, 1], (n, 2))
        )
        for x in (1, 2):
            for y in (1, 2):
                assert abs(t.moment(x, y, 1, 1)) <= 5 / np.sqrt(n)

        with self.assertRaises(EmptySample):
            table_from_lhv_samples(np.empty((0, 2)), np.empty((0, 2)))

    def test_cfrd_examples(self):
        report = eval_cfrd(self.bell.restrict([1, 2], [1, 2]))
        assert report.satisfied

        zero = np.zeros((2, 2, 3, 3))
        zero[:, :, 0, 0] = 1
        report = eval_cfrd(MomentTable(zero))
        assert report.lhs == 0 and report.rhs == 0 and report.satisfied

        with self.assertRaises(NotEnoughChoices):
            eval_cfrd(self.bell.restrict([1], [1, 2]))

    def test_salles_reproduces_cfrd(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            a, b = self.random_classical(rng, 20, 2, 2)
            t = table_from_lhv_samples(a, b)
            cfrd = eval_cfrd(t)
            salles = eval_salles_class(t, CFRD_COEFFS)
            self.assertAlmostEqual(cfrd.lhs, salles.lhs, delta=1e-12 * max(1, cfrd.lhs))
            self.assertAlmostEqual(cfrd.rhs, salles.rhs, delta=1e-12 * max(1, cfrd.rhs))

        report = eval_salles_class(self.bell, np.zeros((2, 3, 3)))
        assert report.rhs == 0 and report.satisfied

        with self.assertRaises(ShapeMismatch):
            eval_salles_class(self.bell, np.zeros((2, 2, 2)))

    def test_in33_bell(self):
        report = eval_in33(self.bell)
        assert abs(report.lhs - 9 / 8) <= 1e-12
        assert abs(report.rhs - 10 / 8) <= 1e-12
        assert abs(report.margin + 1 / 8) <= 1e-12
        assert not report.satisfied

        zero = np.zeros((3, 3, 3, 3))
        zero[:, :, 0, 0] = 1
        report = eval_in33(MomentTable(zero))
        assert report.lhs == 0 and report.rhs == -1 and report.satisfied

    def test_restricted_in33_bell(self):
        report = eval_in33_restricted(self.bell)
        self.assertAlmostEqual(report.lhs, 9 / 8 + 1, places=12)
        self.assertAlmostEqual(report.rhs, 18 / 8, places=12)

    def test_negative_second_moment(self):
        entries = np.array(self.bell.entries)
        entries[0, 0, 2, 2] = -1e-6
        with self.assertRaises(NegativeSecondMoment):
            eval_in33(MomentTable(entries))

        entries[0, 0, 2, 2] = -1e-13
        report = eval_in33(MomentTable(entries))
        self.assertAlmostEqual(report.margin, -1 / 8, places=12)

    def test_null_mix(self):
        np.testing.assert_array_equal(null_mix(self.bell, 1).entries, self.bell.entries)
        half = null_mix(self.bell, 0.5)
        self.assertAlmostEqual(half.moment(1, 2, 1, 1), 3 / 16, places=12)
        self.assertEqual(half.moment(1, 2, 0, 0), 1)

        tiny = null_mix(self.bell, 1e-9)
        self.assertAlmostEqual(eval_in33(tiny).margin, 1, places=8)

        with self.assertRaises(RateOutOfRange):
            null_mix(self.bell, 0)
        with self.assertRaises(RateOutOfRange):
            null_mix(self.bell, 1.5)

    def test_null_mix_preserves_invariants(self):
        for r in np.linspace(0.01, 1, 25):
            mixed = null_mix(self.bell, r)
            MomentTable(mixed.entries)  # full invariant check

    def test_in33r(self):
        unscaled = eval_in33r(self.bell)
        self.assertAlmostEqual(unscaled.margin, eval_in33(self.bell).margin, places=12)

        for r in (1, 0.5, 0.1, 0.01):
            mixed = null_mix(self.bell, r)
            report = eval_in33r(mixed)
            assert not report.satisfied, r
            self.assertAlmostEqual(report.margin, -r / 8, places=12)
            if r <= 0.5:
                assert eval_in33(mixed).satisfied, r

    def test_primed_table_is_complementary_projection(self):
        from qcore import Observable
        from scenarios import bell_three_choices, BipartiteScenario

        bell = bell_three_choices()
        complement = BipartiteScenario(
            bell.state,
            [Observable("A", 1, np.eye(2) - bell.obs_a[0].op)] + bell.obs_a[1:],
            [bell.obs_b[0], Observable("B", 2, np.eye(2) - bell.obs_b[1].op)]
            + bell.obs_b[2:],
        )
        expected = table_from_scenario(complement)
        for r in (1, 0.3):
            primed = primed_table(null_mix(self.bell, r))
            np.testing.assert_allclose(
                primed.entries, null_mix(expected, r).entries, atol=1e-12
            )

    def test_in33_null_crossover(self):
        lo, hi = 1e-6, 1.0
        for _ in range(60):
            mid = (lo + hi) / 2
            if eval_in33(null_mix(self.bell, mid)).satisfied:
                lo = mid
            else:
                hi = mid
        self.assertAlmostEqual(lo, IN33_NULL_CROSSOVER, delta=1e-9)

    def test_ine22_tilted(self):
        report = eval_ine22(self.tilted)
        assert abs(report.lhs - 0.25) <= 1e-12
        assert abs(report.rhs - 0.3) <= 1e-12
        assert abs(report.margin + 0.05) <= 1e-12
        assert not report.satisfied

    def test_ine22_scales_with_null_rate(self):
        for r in (1, 0.1, 0.01):
            report = eval_ine22(null_mix(self.tilted, r))
            self.assertAlmostEqual(report.margin, -0.05 * r, delta=1e-12)
            assert not report.satisfied

    def test_ine22_maximally_entangled(self):
        from scenarios import tilted_two_choices

        report = eval_ine22(table_from_scenario(tilted_two_choices(np.pi / 4)))
        assert abs(report.margin) <= 1e-10

    def test_classical_soundness(self):
        rng = np.random.default_rng(2024)
        evaluators = [eval_cfrd, eval_in33, eval_in33r, eval_ine22]
        for i in range(100000):
            # single deterministic assignments are the extreme points
            n_samples = 1 if i % 10 else 20
            a, b = self.random_classical(rng, n_samples, 3, 3)
            t = table_from_lhv_samples(a, b)
            if i % 7 == 0:
                t = null_mix(t, rng.uniform(0.01, 1))
            for evaluate in evaluators:
                self.assert_sound(evaluate(t))
            if i % 10 == 0:
                coeffs = normalize_salles(rng.normal(size=(2, 3, 3)))
                self.assert_sound(eval_salles_class(t, coeffs))

    def test_quantum_cfrd_soundness(self):
        from qcore import Observable, random_hermitian, random_state
        from scenarios import BipartiteScenario

        rng = np.random.default_rng(500)
        for _ in range(500):
            s = BipartiteScenario(
                random_state(2, 2, rng),
                [Observable("A", x, random_hermitian(2, rng)) for x in (1, 2)],
                [Observable("B", y, random_hermitian(2, rng)) for y in (1, 2)],
            )
            t = table_from_scenario(s)
            self.assert_sound(eval_cfrd(t))
            coeffs = normalize_salles(rng.normal(size=(3, 2, 2)))
            self.assert_sound(eval_salles_class(t, coeffs))

    def test_serialization_round_trip(self):
        rng = np.random.default_rng(8)
        a, b = self.random_classical(rng, 7, 3, 2)
        t = null_mix(table_from_lhv_samples(a, b), 0.3)

        again = MomentTable.from_json(t.to_json(), marginal_tol=None)
        np.testing.assert_array_equal(again.entries, t.entries)
        self.assertEqual(again.null_rate, t.null_rate)

        again = MomentTable.from_csv(t.to_csv(), null_rate=0.3, marginal_tol=None)
        np.testing.assert_array_equal(again.entries, t.entries)

    def test_registry(self):
        self.assertIs(get_evaluator("in33"), eval_in33)
        with self.assertRaises(UnknownInequality):
            get_evaluator("chsh")


if __name__ == "__main__":
    unittest.main()
