"""
Includes the canonical quantum scenarios: the three-choice Bell construction, the
tilted two-choice family and the maximally entangled counterpart of a hidden
variable construction.
"""

import json
import logging
import unittest
import numpy as np
from inequalities import eval_ine22, null_mix, table_from_scenario
from qcore import BipartiteState, DimensionMismatch, Observable, maximally_entangled
from util import MomentError

logger = logging.getLogger(__name__)


class PhiOutOfRange(MomentError):
    """Raised when the tilt angle is outside [0, pi/2)."""

    pass


class BipartiteScenario:
    """
    A shared state and the observables each party can choose from.

    Attributes
    ----------
    state (qcore.BipartiteState):
        Pure state.

    obs_a (list):
        Observables of A, choice indices 1, 2, ...

    obs_b (list):
        Observables of B, choice indices 1, 2, ...
    """

    __slots__ = ["state", "obs_a", "obs_b"]

    def __init__(self, state, obs_a, obs_b):
        obs_a = list(obs_a)
        obs_b = list(obs_b)
        assert obs_a and obs_b, "Each party needs at least one observable"

        for party, obs, dim in [("A", obs_a, state.dim_a), ("B", obs_b, state.dim_b)]:
            for i, o in enumerate(obs, start=1):
                assert o.party == party, "Observable {} is listed under {}".format(o, party)
                assert o.choice == i, "Choice indices must be contiguous from 1"
                if o.dim != dim:
                    raise DimensionMismatch(
                        "{} has dim {}, state has {}".format(o, o.dim, dim)
                    )

        self.state = state
        self.obs_a = obs_a
        self.obs_b = obs_b

    @property
    def m_a(self):
        return len(self.obs_a)

    @property
    def m_b(self):
        return len(self.obs_b)


def _projector(vec):
    v = np.asarray(vec, dtype=complex)
    return np.outer(v, np.conj(v))


def bell_three_choices():
    """
    State (|+-> - |-+>)/sqrt(2) with the projectors
    A_x = B_x = [[1, e^(2 pi i x/3)], [e^(-2 pi i x/3), 1]]/2 for x = 1, 2, 3,
    i.e. projections along three axes 120 degrees apart.
    """
    state = BipartiteState(np.array([[0, 1], [-1, 0]]) / np.sqrt(2))

    def proj(x):
        w = np.exp(2j * np.pi * x / 3)
        return np.array([[1, w], [np.conj(w), 1]]) / 2

    return BipartiteScenario(
        state,
        [Observable("A", x, proj(x)) for x in (1, 2, 3)],
        [Observable("B", y, proj(y)) for y in (1, 2, 3)],
    )


def tilted_amplitudes(phi):
    """
    Schmidt coefficients (alpha, beta) of the tilted family. alpha and beta are
    proportional to sin^2(phi) and cos^2(phi).
    """
    if not 0 <= phi < np.pi / 2:
        raise PhiOutOfRange("Phi must be in [0, pi/2), got {}".format(phi))
    s2, c2 = np.sin(phi) ** 2, np.cos(phi) ** 2
    norm = np.sqrt(s2 ** 2 + c2 ** 2)
    return s2 / norm, c2 / norm


def tilted_two_choices(phi):
    """
    State alpha|++> + beta|--> with A1 = B1 = |+><+|, A2 = |n+><n+| and
    B2 = |n-><n-| where |n+-> = cos(phi)|+> +- sin(phi)|->.

    Parameters
    ----------
    phi (float):
        Tilt angle in [0, pi/2). pi/4 gives the maximally entangled state and 0 a
        product state.

    Raises
    ------
    PhiOutOfRange:
        If phi is outside [0, pi/2).
    """
    alpha, beta = tilted_amplitudes(phi)
    state = BipartiteState([[alpha, 0], [0, beta]])
    plus = _projector([1, 0])
    n_plus = _projector([np.cos(phi), np.sin(phi)])
    n_minus = _projector([np.cos(phi), -np.sin(phi)])
    return BipartiteScenario(
        state,
        [Observable("A", 1, plus), Observable("A", 2, n_plus)],
        [Observable("B", 1, plus), Observable("B", 2, n_minus)],
    )


def ine22_closed_form(phi):
    """
    Reduced sides of the two-choice inequality on the tilted family,
    (alpha^2 (2cos^2(phi) + 1), 4 alpha^2 cos^2(phi)).
    """
    alpha, _ = tilted_amplitudes(phi)
    c2 = np.cos(phi) ** 2
    return alpha ** 2 * (2 * c2 + 1), 4 * alpha ** 2 * c2


def sweep_ine22(phi_grid):
    """
    Evaluate the two-choice inequality along the tilted family.

    Parameters
    ----------
    phi_grid (iterable):
        Angles in [0, pi/2).

    Returns
    -------
    list:
        One dict per angle with the keys phi, lhs, rhs and margin.
    """
    rows = []
    for phi in phi_grid:
        report = eval_ine22(table_from_scenario(tilted_two_choices(phi)))
        rows.append(
            {"phi": float(phi), "lhs": report.lhs, "rhs": report.rhs, "margin": report.margin}
        )
    logger.info("Swept the two-choice inequality over %d angles", len(rows))
    return rows


def null_mixed_bell(r):
    """
    Moment table of the Bell construction when a pair is produced only at rate r.
    """
    return null_mix(table_from_scenario(bell_three_choices()), r)


def maximally_entangled_two_choices(n, dim_a, dim_b, a_plus, a_minus, bs):
    """
    Quantum scenario of the state sum_{j<n} |jj>/sqrt(n) with the two A choices
    a_plus, a_minus and the given B observables (matrices).
    """
    return BipartiteScenario(
        maximally_entangled(n, dim_a, dim_b),
        [Observable("A", 1, a_plus), Observable("A", 2, a_minus)],
        [Observable("B", y, b) for y, b in enumerate(bs, start=1)],
    )


def _to_pairs(m):
    m = np.asarray(m)
    return np.stack([m.real, m.imag], axis=-1).tolist()


def _from_pairs(pairs):
    arr = np.asarray(pairs, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def scenario_to_dict(s):
    return {
        "state": _to_pairs(s.state.amplitudes),
        "obs_a": [_to_pairs(o.op) for o in s.obs_a],
        "obs_b": [_to_pairs(o.op) for o in s.obs_b],
    }


def scenario_from_dict(d):
    return BipartiteScenario(
        BipartiteState(_from_pairs(d["state"])),
        [Observable("A", x, _from_pairs(m)) for x, m in enumerate(d["obs_a"], start=1)],
        [Observable("B", y, _from_pairs(m)) for y, m in enumerate(d["obs_b"], start=1)],
    )


def scenario_to_json(s):
    """
    Serialize the scenario; complex numbers are stored as [re, im] pairs.
    """
    return json.dumps(scenario_to_dict(s))


def scenario_from_json(text):
    return scenario_from_dict(json.loads(text))


# Named constructions reachable from the command line, called with the tilt angle
# (ignored by bell).
SCENARIOS = {
    "bell": lambda phi: bell_three_choices(),
    "tilted": tilted_two_choices,
}


class TestScenarios(unittest.TestCase):
    def test_bell_projectors(self):
        s = bell_three_choices()
        for o in s.obs_a + s.obs_b:
            assert np.max(np.abs(o.op @ o.op - o.op)) <= 1e-12

    def test_bell_cyclic_symmetry(self):
        t = table_from_scenario(bell_three_choices())
        shifted = np.roll(t.entries, shift=(1, 1), axis=(0, 1))
        np.testing.assert_allclose(shifted, t.entries, atol=1e-12)

    def test_bell_correlators(self):
        t = table_from_scenario(bell_three_choices())
        for x in (1, 2, 3):
            for y in (1, 2, 3):
                expected = 0 if x == y else 3 / 8
                assert abs(t.moment(x, y, 1, 1) - expected) <= 1e-12

    def test_tilted_amplitudes(self):
        alpha, beta = tilted_amplitudes(np.pi / 4)
        self.assertAlmostEqual(alpha, 1 / np.sqrt(2), places=12)
        self.assertAlmostEqual(beta, 1 / np.sqrt(2), places=12)

        self.assertEqual(tilted_amplitudes(0), (0, 1))

        alpha, _ = tilted_amplitudes(np.pi / 6)
        self.assertAlmostEqual(alpha ** 2, 1 / 10, places=12)

        for phi in (-0.1, np.pi / 2, 2.0):
            with self.assertRaises(PhiOutOfRange):
                tilted_two_choices(phi)

    def test_tilted_projectors(self):
        s = tilted_two_choices(0.3)
        for o in s.obs_a + s.obs_b:
            assert np.max(np.abs(o.op @ o.op - o.op)) <= 1e-12

    def test_sweep_examples(self):
        rows = sweep_ine22([0, np.pi / 6, np.pi / 4])
        assert abs(rows[0]["margin"]) <= 1e-10
        assert abs(rows[1]["margin"] + 0.05) <= 1e-12
        assert abs(rows[2]["margin"]) <= 1e-10

    def test_violation_window(self):
        grid = np.linspace(0, np.pi / 2, 1000, endpoint=False)
        for row in sweep_ine22(grid):
            phi, margin = row["phi"], row["margin"]
            lhs, rhs = ine22_closed_form(phi)
            assert abs(margin - (lhs - rhs)) <= 1e-12, phi
            if 1e-9 < phi < np.pi / 4 - 1e-9:
                assert margin < 0, phi
            elif phi >= np.pi / 4 - 1e-9:
                assert margin >= -1e-10, phi
            else:
                assert abs(margin) <= 1e-10, phi

    def test_null_mixed_bell(self):
        t = null_mixed_bell(0.5)
        self.assertAlmostEqual(t.moment(1, 2, 1, 1), 3 / 16, places=12)
        self.assertEqual(t.null_rate, 0.5)

    def test_maximally_entangled_two_choices(self):
        s = maximally_entangled_two_choices(
            2, 3, 4, np.diag([1, 0, 0]), np.diag([0, 1, 2]), [np.eye(4)]
        )
        t = table_from_scenario(s)
        self.assertAlmostEqual(t.moment(1, 1, 1, 1), 1 / 2, places=12)
        self.assertAlmostEqual(t.moment(2, 1, 2, 0), 1 / 2, places=12)

    def test_scenario_json(self):
        s = bell_three_choices()
        again = scenario_from_json(scenario_to_json(s))
        np.testing.assert_array_equal(again.state.amplitudes, s.state.amplitudes)
        assert again.obs_a == s.obs_a and again.obs_b == s.obs_b

    def test_named_scenarios(self):
        bell = SCENARIOS["bell"](0.3)
        self.assertEqual((bell.m_a, bell.m_b), (3, 3))
        tilted = SCENARIOS["tilted"](np.pi / 6)
        np.testing.assert_array_equal(
            tilted.state.amplitudes, tilted_two_choices(np.pi / 6).state.amplitudes
        )

    def test_dimension_mismatch(self):
        with self.assertRaises(DimensionMismatch):
            BipartiteScenario(
                BipartiteState([[1, 0], [0, 0]]),
                [Observable("A", 1, np.eye(3))],
                [Observable("B", 1, np.eye(2))],
            )


if __name__ == "__main__":
    unittest.main()
