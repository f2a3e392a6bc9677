"""
Includes small dense Hermitian linear algebra, bipartite pure states, observables
and exact quantum moments.
"""

import logging
import unittest
import numpy as np
from util import TOLERANCES, MomentError

logger = logging.getLogger(__name__)

PARTIES = ("A", "B")


class NotHermitian(MomentError):
    """Raised when an operator fails the Hermiticity check."""

    pass


class NoConvergence(MomentError):
    """Raised when the eigensolver does not converge."""

    pass


class DimensionMismatch(MomentError):
    """Raised when operator and state dimensions do not fit together."""

    pass


class PowerOutOfRange(MomentError):
    """Raised when a moment power is outside {0, 1, 2}."""

    pass


def as_matrix(m):
    """
    Convert the given array-like object into a read-only square complex matrix.

    Parameters
    ----------
    m (array-like):
        Square matrix.

    Returns
    -------
    numpy.ndarray:
        Complex (dim, dim) array, not writeable.
    """
    arr = np.array(m, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise DimensionMismatch("Matrix must be square, got shape {}".format(arr.shape))
    arr.setflags(write=False)
    return arr


def hermitian_tol(m):
    """
    Default Hermiticity tolerance of `m`: relative to the largest entry, with the
    same value as an absolute floor.
    """
    scale = float(np.max(np.abs(m))) if np.size(m) else 0.0
    return TOLERANCES["hermitian"] * max(scale, 1.0)


def is_hermitian(m, tol=None):
    """
    Check max |M[i][j] - conj(M[j][i])| <= tol.

    Parameters
    ----------
    m (numpy.ndarray):
        Square matrix.

    tol (float) (default = None):
        Tolerance. If None, `hermitian_tol(m)` is used.
    """
    if tol is None:
        tol = hermitian_tol(m)
    return float(np.max(np.abs(m - np.conj(m).T))) <= tol


def tensor(a, b):
    """
    Kronecker product, (a x b)[(i*dimB+k), (j*dimB+l)] = a[i][j] * b[k][l].
    """
    return as_matrix(np.kron(as_matrix(a), as_matrix(b)))


class EigenDecomposition:
    """
    Eigenvalues (ascending) and orthonormal eigenvectors (columns).

    Attributes
    ----------
    values (numpy.ndarray):
        Real eigenvalues in ascending order.

    vectors (numpy.ndarray):
        Unitary matrix whose columns are the eigenvectors.
    """

    __slots__ = ["values", "vectors"]

    def __init__(self, values, vectors):
        self.values = np.asarray(values, dtype=float)
        self.vectors = as_matrix(vectors)

    def reconstruct(self):
        return self.vectors @ np.diag(self.values) @ np.conj(self.vectors).T


def hermitian_eigen(m, tol=None):
    """
    Diagonalize a Hermitian matrix. Within degenerate clusters the returned basis is
    an arbitrary orthonormal one.

    Parameters
    ----------
    m (array-like):
        Hermitian matrix.

    tol (float) (default = None):
        Hermiticity tolerance, `hermitian_tol(m)` if None.

    Raises
    ------
    NotHermitian:
        If `m` is not Hermitian within `tol`.

    NoConvergence:
        If LAPACK does not converge.

    Returns
    -------
    EigenDecomposition:
        Ascending eigenvalues and eigenvectors.
    """
    m = as_matrix(m)
    if not is_hermitian(m, tol):
        raise NotHermitian("Matrix is not Hermitian within tolerance")

    # eigh reads one triangle only, symmetrize first
    sym = (m + np.conj(m).T) / 2
    try:
        values, vectors = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as e:
        raise NoConvergence(str(e)) from e

    return EigenDecomposition(values, vectors)


def matrix_power(m, k):
    """
    Power k in {0, 1, 2} of a square matrix, identity for k = 0.
    """
    if k not in (0, 1, 2):
        raise PowerOutOfRange("Power must be 0, 1 or 2, got {}".format(k))
    return as_matrix(np.linalg.matrix_power(np.asarray(m), k))


class Observable:
    """
    Hermitian operator measured by one party for one choice.

    Attributes
    ----------
    party (str):
        "A" or "B".

    choice (int):
        Choice index, starting from 1.

    op (numpy.ndarray):
        Hermitian matrix.
    """

    __slots__ = ["party", "choice", "op"]

    def __init__(self, party, choice, op):
        assert party in PARTIES, "Party can be A or B"
        assert int(choice) >= 1, "Choice indices start from 1"

        op = as_matrix(op)
        if not is_hermitian(op):
            raise NotHermitian(
                "Observable {}{} is not Hermitian".format(party, choice)
            )

        self.party = party
        self.choice = int(choice)
        self.op = op

    @property
    def dim(self):
        return self.op.shape[0]

    def __eq__(self, other):
        return (
            self.party == other.party
            and self.choice == other.choice
            and np.array_equal(self.op, other.op)
        )

    def __repr__(self):
        return "Observable({}{}, dim={})".format(self.party, self.choice, self.dim)


class BipartiteState:
    """
    Pure state of two parties, amplitudes[i][j] being the coefficient of |ij>.

    Attributes
    ----------
    amplitudes (numpy.ndarray):
        Complex (dimA, dimB) array with unit Frobenius norm.
    """

    __slots__ = ["amplitudes"]

    def __init__(self, amplitudes):
        amps = np.array(amplitudes, dtype=complex)
        if amps.ndim != 2 or min(amps.shape) < 1:
            raise DimensionMismatch(
                "Amplitudes must be a 2D array, got shape {}".format(amps.shape)
            )

        norm = float(np.sum(np.abs(amps) ** 2))
        if abs(norm - 1) > TOLERANCES["normalization"]:
            raise DimensionMismatch("State is not normalized: norm^2 = {}".format(norm))

        amps.setflags(write=False)
        self.amplitudes = amps

    @property
    def dim_a(self):
        return self.amplitudes.shape[0]

    @property
    def dim_b(self):
        return self.amplitudes.shape[1]

    def vector(self):
        """Flat state vector in the product basis, index i*dimB + j."""
        return self.amplitudes.reshape(-1)

    @classmethod
    def normalized(cls, amplitudes):
        amps = np.array(amplitudes, dtype=complex)
        return cls(amps / np.linalg.norm(amps))


def _apply(state, op_a, op_b):
    """
    Amplitudes of (op_a x op_b)|psi>, computed as op_a Psi op_b^T.
    """
    op_a = as_matrix(op_a)
    op_b = as_matrix(op_b)
    if op_a.shape[0] != state.dim_a or op_b.shape[0] != state.dim_b:
        raise DimensionMismatch(
            "Operators of dims ({}, {}) do not fit state of dims ({}, {})".format(
                op_a.shape[0], op_b.shape[0], state.dim_a, state.dim_b
            )
        )
    return op_a @ state.amplitudes @ op_b.T


def expectation(state, op_a, op_b):
    """
    Average <psi|(op_a x op_b)|psi> of Hermitian local operators.

    Parameters
    ----------
    state (BipartiteState):
        Pure state.

    op_a, op_b (numpy.ndarray):
        Hermitian operators of party A and B.

    Raises
    ------
    DimensionMismatch:
        If operator dims do not match the state.

    NotHermitian:
        If the imaginary part exceeds TOLERANCES["imaginary"].

    Returns
    -------
    float:
        Real part of the average. The imaginary part has to vanish.
    """
    value = complex(np.vdot(state.amplitudes, _apply(state, op_a, op_b)))
    if abs(value.imag) > TOLERANCES["imaginary"]:
        raise NotHermitian(
            "Average of local operators has imaginary part {}".format(value.imag)
        )
    return value.real


def moment(state, a, b, k, l):
    """
    Quantum moment <A^k B^l> = <psi|A^k x B^l|psi> for k, l in {0, 1, 2}.
    Even powers are computed as the squared norm of (A^(k/2) x B^(l/2))|psi>, so
    second moments are nonnegative and analytic zeros stay tiny.

    Parameters
    ----------
    state (BipartiteState):
        Pure state.

    a (Observable):
        Observable of party A.

    b (Observable):
        Observable of party B.

    k, l (int):
        Powers, 0, 1 or 2.

    Raises
    ------
    PowerOutOfRange:
        If k or l is not in {0, 1, 2}.

    Returns
    -------
    float:
        The moment.
    """
    if k not in (0, 1, 2) or l not in (0, 1, 2):
        raise PowerOutOfRange("Powers must be 0, 1 or 2, got ({}, {})".format(k, l))
    assert a.party == "A" and b.party == "B", "Moments pair an A with a B observable"

    if k % 2 == 0 and l % 2 == 0:
        half = _apply(state, matrix_power(a.op, k // 2), matrix_power(b.op, l // 2))
        return float(np.sum(np.abs(half) ** 2))

    return expectation(state, matrix_power(a.op, k), matrix_power(b.op, l))


def schmidt(state):
    """
    Schmidt decomposition |psi> = sum_j c_j |u_j>|v_j>.

    Parameters
    ----------
    state (BipartiteState):
        Pure state.

    Returns
    -------
    tuple:
        Coefficients (descending, nonnegative), basis_a (columns u_j) and
        basis_b (columns v_j).
    """
    u, s, vh = np.linalg.svd(state.amplitudes)
    # Psi = U diag(s) Vh, so v_j is the j-th row of Vh
    return s, u[:, : len(s)], vh[: len(s), :].T


def maximally_entangled(n, dim_a=None, dim_b=None):
    """
    State sum_{j<n} |jj>/sqrt(n), padded to the given local dimensions.
    """
    dim_a = dim_a or n
    dim_b = dim_b or n
    assert n >= 1 and dim_a >= n and dim_b >= n, "Local dims must be at least n"

    amps = np.zeros((dim_a, dim_b), dtype=complex)
    amps[np.arange(n), np.arange(n)] = 1 / np.sqrt(n)
    return BipartiteState(amps)


def random_hermitian(dim, rng, scale=1.0):
    """
    Random Hermitian matrix (Gaussian entries, symmetrized).

    Parameters
    ----------
    dim (int):
        Dimension.

    rng (numpy.random.Generator):
        Random generator.

    scale (float) (default = 1.0):
        Standard deviation of the entries.
    """
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return as_matrix(scale * (g + np.conj(g).T) / 2)


def random_unitary(dim, rng):
    """
    Haar random unitary via QR of a complex Gaussian matrix.
    """
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(g)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_projector(dim, rank, rng):
    """
    Random orthogonal projector of the given rank.
    """
    assert 0 <= rank <= dim, "Rank must be between 0 and dim"
    q = random_unitary(dim, rng)[:, :rank]
    return as_matrix(q @ np.conj(q).T)


def random_state(dim_a, dim_b, rng):
    """
    Random pure state of the given local dimensions.
    """
    g = rng.normal(size=(dim_a, dim_b)) + 1j * rng.normal(size=(dim_a, dim_b))
    return BipartiteState.normalized(g)


PAULI = {
    "I": as_matrix([[1, 0], [0, 1]]),
    "X": as_matrix([[0, 1], [1, 0]]),
    "Y": as_matrix([[0, -1j], [1j, 0]]),
    "Z": as_matrix([[1, 0], [0, -1]]),
}


class TestQcore(unittest.TestCase):
    @staticmethod
    def bell():
        amps = np.array([[0, 1], [-1, 0]]) / np.sqrt(2)
        return BipartiteState(amps)

    @staticmethod
    def equatorial(x):
        phase = np.exp(2j * np.pi * x / 3)
        return np.array([[1, phase], [np.conj(phase), 1]]) / 2

    def test_tensor(self):
        np.testing.assert_array_equal(tensor(np.eye(2), np.eye(2)), np.eye(4))
        p = np.diag([1, 0])
        np.testing.assert_array_equal(tensor(p, p), np.diag([1, 0, 0, 0]))

        rng = np.random.default_rng(1)
        a = random_hermitian(2, rng)
        b = random_hermitian(3, rng)
        t = tensor(a, b)
        for i, j, k, l in [(0, 1, 2, 0), (1, 1, 1, 2), (0, 0, 0, 0)]:
            assert t[i * 3 + k, j * 3 + l] == a[i, j] * b[k, l]

    def test_pauli_xx_on_bell(self):
        bell = self.bell()
        x = PAULI["X"]
        vec = bell.vector()
        explicit = np.vdot(vec, tensor(x, x) @ vec).real
        self.assertAlmostEqual(explicit, -1.0, places=12)
        self.assertAlmostEqual(expectation(bell, x, x), -1.0, places=12)

    def test_hermitian_eigen_examples(self):
        eig = hermitian_eigen(np.diag([3.0, 1.0, 2.0]))
        np.testing.assert_allclose(eig.values, [1, 2, 3])
        np.testing.assert_allclose(np.abs(eig.vectors), np.eye(3)[:, [1, 2, 0]])

        eig = hermitian_eigen(PAULI["X"])
        np.testing.assert_allclose(eig.values, [-1, 1], atol=1e-14)
        plus = np.array([1, 1]) / np.sqrt(2)
        self.assertAlmostEqual(abs(np.vdot(plus, eig.vectors[:, 1])), 1.0, places=12)

    def test_hermitian_eigen_reconstruction(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            m = random_hermitian(5, rng)
            eig = hermitian_eigen(m)
            scale = 1 + np.max(np.abs(eig.values))
            assert np.max(np.abs(eig.reconstruct() - m)) <= 1e-10 * scale
            gram = np.conj(eig.vectors).T @ eig.vectors
            assert np.max(np.abs(gram - np.eye(5))) <= 1e-10
            assert np.all(np.diff(eig.values) >= 0)

    def test_not_hermitian(self):
        with self.assertRaises(NotHermitian):
            hermitian_eigen([[0, 1], [0, 0]])
        with self.assertRaises(NotHermitian):
            Observable("A", 1, [[1, 1j], [1j, 1]])

    def test_expectation_examples(self):
        bell = self.bell()
        a1 = self.equatorial(1)
        b2 = self.equatorial(2)
        self.assertAlmostEqual(expectation(bell, a1, a1), 0.0, places=12)
        self.assertAlmostEqual(expectation(bell, a1, b2), 3 / 8, places=12)
        self.assertAlmostEqual(expectation(bell, np.eye(2), np.eye(2)), 1.0, places=12)

        with self.assertRaises(DimensionMismatch):
            expectation(bell, np.eye(3), np.eye(2))
        with self.assertRaises(NotHermitian):
            expectation(bell, 1j * np.eye(2), np.eye(2))

    def test_moment_examples(self):
        bell = self.bell()
        a = Observable("A", 1, self.equatorial(1))
        b = Observable("B", 1, self.equatorial(1))
        self.assertAlmostEqual(moment(bell, a, b, 0, 0), 1.0, places=12)
        assert abs(moment(bell, a, b, 2, 2)) <= 1e-30

        with self.assertRaises(PowerOutOfRange):
            moment(bell, a, b, 3, 0)

    def test_expectation_is_real(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            state = random_state(2, 3, rng)
            a = random_hermitian(2, rng)
            b = random_hermitian(3, rng)
            value = complex(np.vdot(state.amplitudes, a @ state.amplitudes @ b.T))
            assert abs(value.imag) <= 1e-10
            expectation(state, a, b)

    def test_projector_second_moment_nonnegative(self):
        rng = np.random.default_rng(12)
        for _ in range(200):
            state = random_state(3, 2, rng)
            a = Observable("A", 1, random_projector(3, 1, rng))
            b = Observable("B", 1, random_hermitian(2, rng))
            assert moment(state, a, b, 2, 0) >= -1e-10

    def test_moment_matches_explicit_product(self):
        rng = np.random.default_rng(13)
        for _ in range(100):
            state = random_state(2, 2, rng)
            a = Observable("A", 1, random_hermitian(2, rng))
            b = Observable("B", 1, random_hermitian(2, rng))
            vec = state.vector()
            for k in range(3):
                for l in range(3):
                    op = tensor(matrix_power(a.op, k), matrix_power(b.op, l))
                    explicit = np.vdot(vec, op @ vec).real
                    assert abs(explicit - moment(state, a, b, k, l)) <= 1e-12

    def test_schmidt_examples(self):
        product = BipartiteState([[1, 0], [0, 0]])
        coeffs, _, _ = schmidt(product)
        np.testing.assert_allclose(coeffs, [1, 0], atol=1e-14)

        coeffs, _, _ = schmidt(self.bell())
        np.testing.assert_allclose(coeffs, [1 / np.sqrt(2)] * 2, atol=1e-14)

        phi = np.pi / 6
        norm = np.sqrt(np.sin(phi) ** 4 + np.cos(phi) ** 4)
        alpha, beta = np.sin(phi) ** 2 / norm, np.cos(phi) ** 2 / norm
        state = BipartiteState([[alpha, 0], [0, beta]])
        coeffs, _, _ = schmidt(state)
        np.testing.assert_allclose(coeffs, [3 / np.sqrt(10), 1 / np.sqrt(10)], atol=1e-12)
        np.testing.assert_allclose(
            coeffs, np.linalg.svd(state.amplitudes, compute_uv=False), atol=1e-14
        )

    def test_schmidt_reconstruction_and_invariance(self):
        rng = np.random.default_rng(14)
        for _ in range(100):
            state = random_state(3, 2, rng)
            coeffs, u, v = schmidt(state)
            assert abs(np.sum(coeffs ** 2) - 1) <= 1e-12
            assert np.all(np.diff(coeffs) <= 0)
            rebuilt = (u * coeffs) @ v.T
            assert np.max(np.abs(rebuilt - state.amplitudes)) <= 1e-10

            ua = random_unitary(3, rng)
            ub = random_unitary(2, rng)
            rotated = BipartiteState(ua @ state.amplitudes @ ub.T)
            np.testing.assert_allclose(schmidt(rotated)[0], coeffs, atol=1e-10)

    def test_maximally_entangled_padding(self):
        state = maximally_entangled(2, 3, 4)
        coeffs, _, _ = schmidt(state)
        np.testing.assert_allclose(coeffs[:2], [1 / np.sqrt(2)] * 2, atol=1e-14)
        assert state.dim_a == 3 and state.dim_b == 4


if __name__ == "__main__":
    unittest.main()
