"""
Includes the Monte-Carlo simulation of weak Gaussian measurements and the
recovery of intrinsic moments, either by subtracting the detection noise or by
correlating twin detectors.
"""

import csv
import io
import logging
import unittest
import numpy as np
from joblib import Parallel, delayed
from scipy.linalg import expm
from inequalities import MomentTable, eval_in33
from qcore import as_matrix, hermitian_eigen
from util import (
    DEFAULT_G,
    DEFAULT_SAMPLES,
    DEFAULT_SEED,
    TOLERANCES,
    MomentError,
    format_float,
)

logger = logging.getLogger(__name__)

SCHEMES = ("subtract", "twin")


class ConfigError(MomentError):
    """Raised when a weak measurement configuration is invalid."""

    pass


class SchemeMismatch(MomentError):
    """Raised when records do not have the shape the scheme expects."""

    pass


class WeakConfig:
    """
    Settings of a simulated weak measurement.

    Attributes
    ----------
    g (float) (default = DEFAULT_G):
        Measurement strength; each detector adds Gaussian noise of variance 1/4g.

    scheme (str) (default = "subtract"):
        "subtract" (one detector per party, noise removed analytically) or "twin"
        (two detectors per party, noise removed by cross-correlation).

    samples (int) (default = DEFAULT_SAMPLES):
        Records per pair of choices.

    seed (int) (default = DEFAULT_SEED):
        Root seed of every random stream.
    """

    __slots__ = ["g", "scheme", "samples", "seed"]

    def __init__(
        self, g=DEFAULT_G, scheme="subtract", samples=DEFAULT_SAMPLES, seed=DEFAULT_SEED
    ):
        if not (np.isfinite(g) and g > 0):
            raise ConfigError("Strength g must be positive, got {}".format(g))
        if scheme not in SCHEMES:
            raise ConfigError("Scheme must be one of {}, got {}".format(SCHEMES, scheme))
        if int(samples) != samples or samples < 1:
            raise ConfigError("Samples must be a positive integer, got {}".format(samples))
        if int(seed) != seed or seed < 0:
            raise ConfigError("Seed must be a nonnegative integer, got {}".format(seed))

        self.g = float(g)
        self.scheme = scheme
        self.samples = int(samples)
        self.seed = int(seed)

    @property
    def noise_variance(self):
        return 1 / (4 * self.g)

    def to_dict(self):
        return {
            "g": self.g,
            "scheme": self.scheme,
            "samples": self.samples,
            "seed": self.seed,
        }


class OutcomeRecords:
    """
    Detector outcomes of one pair of choices, one entry per run. `a_prime` and
    `b_prime` are None in the subtract scheme.
    """

    __slots__ = ["a", "b", "a_prime", "b_prime"]

    def __init__(self, a, b, a_prime=None, b_prime=None):
        assert (a_prime is None) == (b_prime is None), "Twin outcomes come in pairs"
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.a_prime = None if a_prime is None else np.asarray(a_prime, dtype=float)
        self.b_prime = None if b_prime is None else np.asarray(b_prime, dtype=float)

    @property
    def is_twin(self):
        return self.a_prime is not None

    def __len__(self):
        return len(self.a)


class EstimatedMoments:
    """
    Estimated moments <A^k B^l> of one pair of choices with their standard errors.
    An infinite error means the error could not be determined (one record).
    """

    __slots__ = ["values", "errors"]

    def __init__(self, values, errors):
        errors = np.asarray(errors, dtype=float)
        assert np.all(errors >= 0), "Standard errors must be nonnegative"
        self.values = np.asarray(values, dtype=float)
        self.errors = errors

    def to_dict(self):
        undetermined = ~np.isfinite(self.errors)
        return {
            "values": self.values.tolist(),
            "errors": np.where(undetermined, None, self.errors).tolist(),
            "undetermined": bool(undetermined.any()),
        }


def sample_projective(state, a, b, n, rng):
    """
    Draw eigenvalue pairs (A, B) from the joint projective distribution
    |<u_i v_j|psi>|^2 of the two observables.

    Parameters
    ----------
    state (qcore.BipartiteState):
        Pure state.

    a, b (qcore.Observable):
        Observables of A and B.

    n (int):
        Number of draws.

    rng (numpy.random.Generator):
        Random generator.

    Returns
    -------
    tuple:
        Arrays of the drawn A and B values.
    """
    eig_a = hermitian_eigen(a.op)
    eig_b = hermitian_eigen(b.op)
    # <u_i v_j|psi> = (U^dagger Psi conj(V))_ij
    overlaps = np.conj(eig_a.vectors).T @ state.amplitudes @ np.conj(eig_b.vectors)
    probs = (np.abs(overlaps) ** 2).ravel()
    idx = rng.choice(probs.size, size=n, p=probs / probs.sum())
    i, j = np.divmod(idx, eig_b.values.size)
    return eig_a.values[i], eig_b.values[j]


def add_detection_noise(values_a, values_b, cfg, rng):
    """
    Add independent Gaussian detection noise of variance 1/4g to every detector.
    The twin scheme reads each eigenvalue with two detectors.
    """
    std = np.sqrt(cfg.noise_variance)
    n = len(values_a)
    a = values_a + rng.normal(0, std, n)
    b = values_b + rng.normal(0, std, n)
    if cfg.scheme == "subtract":
        return OutcomeRecords(a, b)
    a_prime = values_a + rng.normal(0, std, n)
    b_prime = values_b + rng.normal(0, std, n)
    return OutcomeRecords(a, b, a_prime, b_prime)


def _statistics(records, v):
    """
    Per-record statistics whose means are unbiased estimates of <A^k B^l>.
    """
    a, b = records.a, records.b
    stats = np.empty((3, 3, len(records)))
    stats[0, 0] = 1
    if records.is_twin:
        ap, bp = records.a_prime, records.b_prime
        aa, bb = a * ap, b * bp
        a_mean, b_mean = (a + ap) / 2, (b + bp) / 2
        stats[1, 0] = a_mean
        stats[2, 0] = aa
        stats[0, 1] = b_mean
        stats[0, 2] = bb
        stats[1, 1] = a_mean * b_mean
        stats[2, 1] = aa * b_mean
        stats[1, 2] = a_mean * bb
        stats[2, 2] = aa * bb
    else:
        a2, b2 = a ** 2, b ** 2
        stats[1, 0] = a
        stats[2, 0] = a2 - v
        stats[0, 1] = b
        stats[0, 2] = b2 - v
        stats[1, 1] = a * b
        stats[2, 1] = a2 * b - v * b
        stats[1, 2] = a * b2 - v * a
        stats[2, 2] = a2 * b2 - v * a2 - v * b2 + v ** 2
    return stats


def estimate_moments(records, cfg):
    """
    Recover intrinsic moments from noisy records.

    In the subtract scheme <a^2> = <A^2> + 1/4g and
    <a^2 b^2> = <A^2 B^2> + <A^2>/4g + <B^2>/4g + 1/16g^2 are inverted. In the twin
    scheme the independent noises of a and a' cancel in <a a'> = <A^2>, and
    <a a' b b'> = <A^2 B^2> needs no correction.

    Raises
    ------
    SchemeMismatch:
        If the records do not fit cfg.scheme.

    Returns
    -------
    EstimatedMoments:
        Means of the per-record statistics, with their sample standard deviation
        over sqrt(n) as error. This equals the jackknife error of the mean.
    """
    if records.is_twin != (cfg.scheme == "twin"):
        raise SchemeMismatch(
            "Records {} twin outcomes but the scheme is {}".format(
                "have" if records.is_twin else "lack", cfg.scheme
            )
        )

    stats = _statistics(records, cfg.noise_variance)
    n = len(records)
    values = stats.mean(axis=2)
    if n > 1:
        errors = stats.std(axis=2, ddof=1) / np.sqrt(n)
    else:
        errors = np.full((3, 3), np.inf)
    values[0, 0], errors[0, 0] = 1.0, 0.0
    return EstimatedMoments(values, errors)


def simulate_pair(state, a, b, cfg, seed_seq):
    """
    Sample, add noise and estimate for one pair of choices. The projective draw
    and the noise use one generator in this order.
    """
    rng = np.random.default_rng(seed_seq)
    values_a, values_b = sample_projective(state, a, b, cfg.samples, rng)
    records = add_detection_noise(values_a, values_b, cfg, rng)
    return estimate_moments(records, cfg), records


@delayed
def _pair_job(state, a, b, cfg, seed_seq, keep_records):
    estimate, records = simulate_pair(state, a, b, cfg, seed_seq)
    return estimate, records if keep_records else None


def table_from_weak(s, cfg, n_jobs=1, keep_records=False):
    """
    Simulate every pair of choices independently and assemble the estimates.

    Parameters
    ----------
    s (scenarios.BipartiteScenario):
        Scenario to measure.

    cfg (WeakConfig):
        Measurement settings.

    n_jobs (int) (default = 1):
        Number of joblib workers, -1 for all cores. Results do not depend on it.

    keep_records (bool) (default = False):
        If True, also return the raw records per pair.

    Returns
    -------
    tuple:
        The MomentTable, the (mA, mB, 3, 3) array of standard errors and, if
        requested, a list of ((x, y), OutcomeRecords).
    """
    pairs = [(x, y) for x in range(s.m_a) for y in range(s.m_b)]
    children = np.random.SeedSequence(cfg.seed).spawn(len(pairs))

    outputs = Parallel(n_jobs=n_jobs)(
        _pair_job(s.state, s.obs_a[x], s.obs_b[y], cfg, child, keep_records)
        for (x, y), child in zip(pairs, children)
    )

    entries = np.empty((s.m_a, s.m_b, 3, 3))
    errors = np.empty_like(entries)
    for (x, y), (estimate, _) in zip(pairs, outputs):
        entries[x, y] = estimate.values
        errors[x, y] = estimate.errors

    clamp_tol = max(5 * float(np.max(errors)), TOLERANCES["clamp"])
    table = MomentTable(entries, marginal_tol=None, clamp_tol=clamp_tol)
    logger.info(
        "Estimated a (%d, %d) table from %d %s records per pair at g=%g",
        s.m_a,
        s.m_b,
        cfg.samples,
        cfg.scheme,
        cfg.g,
    )

    if keep_records:
        records = [((x + 1, y + 1), rec) for (x, y), (_, rec) in zip(pairs, outputs)]
        return table, errors, records
    return table, errors


def bootstrap_margin(table, errors, evaluator, n_boot=200, seed=DEFAULT_SEED):
    """
    Parametric bootstrap of an inequality margin: entries are redrawn as
    independent Gaussians around the estimates with their standard errors.

    Returns
    -------
    float:
        Standard deviation of the margin, nan if some error is undetermined.
    """
    errors = np.asarray(errors, dtype=float)
    if not np.all(np.isfinite(errors)):
        return float("nan")

    rng = np.random.default_rng(seed)
    margins = np.empty(n_boot)
    for i in range(n_boot):
        entries = table.entries + errors * rng.standard_normal(errors.shape)
        entries[:, :, 0, 0] = 1
        redrawn = MomentTable(
            entries, null_rate=table.null_rate, marginal_tol=None, clamp_tol=np.inf
        )
        margins[i] = evaluator(redrawn).margin
    return float(np.std(margins, ddof=1))


def kraus_operator(op, g, outcome):
    """
    K(a) = (2g/pi)^(1/4) exp(-g (op - a)^2) of a Gaussian weak measurement.
    """
    op = as_matrix(op)
    shifted = op - outcome * np.eye(op.shape[0])
    return (2 * g / np.pi) ** 0.25 * expm(-g * shifted @ shifted)


def detection_noise_density(a, g):
    """
    Density sqrt(2g/pi) exp(-2g a^2) of the detection noise.
    """
    return np.sqrt(2 * g / np.pi) * np.exp(-2 * g * np.asarray(a) ** 2)


def outcome_density(state, obs, g, grid):
    """
    Density Tr K(a) rho K(a)^dagger of the outcome a of a weak measurement of
    `obs`, rho being the reduced state of the observable's party.
    """
    amps = state.amplitudes
    rho = amps @ np.conj(amps).T if obs.party == "A" else amps.T @ np.conj(amps)
    out = []
    for a in np.atleast_1d(grid):
        k = kraus_operator(obs.op, g, a)
        out.append(np.real(np.trace(k @ rho @ np.conj(k).T)))
    return np.array(out)


def records_to_csv(records):
    """
    CSV of raw records with columns x, y, a, a_prime, b, b_prime. The primed
    columns are empty in the subtract scheme.

    Parameters
    ----------
    records (list):
        ((x, y), OutcomeRecords) pairs as returned by `table_from_weak`.
    """
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["x", "y", "a", "a_prime", "b", "b_prime"])
    for (x, y), rec in records:
        for i in range(len(rec)):
            a_prime = format_float(rec.a_prime[i]) if rec.is_twin else ""
            b_prime = format_float(rec.b_prime[i]) if rec.is_twin else ""
            writer.writerow(
                [x, y, format_float(rec.a[i]), a_prime, format_float(rec.b[i]), b_prime]
            )
    return out.getvalue()


class TestWeakmeas(unittest.TestCase):
    def setUp(self):
        from scenarios import bell_three_choices

        self.bell = bell_three_choices()

    def test_config_validation(self):
        for kwargs in [{"g": 0}, {"g": -1}, {"scheme": "triple"}, {"samples": 0}]:
            with self.assertRaises(ConfigError):
                WeakConfig(**kwargs)

    def test_sample_projective_bell(self):
        rng = np.random.default_rng(1)
        a, b = sample_projective(
            self.bell.state, self.bell.obs_a[0], self.bell.obs_b[0], 100000, rng
        )
        assert not np.any((a > 0.5) & (b > 0.5))

        n = 100000
        a, b = sample_projective(
            self.bell.state, self.bell.obs_a[0], self.bell.obs_b[1], n, rng
        )
        ab = a * b
        assert abs(ab.mean() - 3 / 8) <= 5 * ab.std() / np.sqrt(n)

    def test_sample_projective_product(self):
        from qcore import BipartiteState, Observable

        p0 = np.diag([1.0, 0.0])
        a, b = sample_projective(
            BipartiteState([[1, 0], [0, 0]]),
            Observable("A", 1, p0),
            Observable("B", 1, p0),
            50,
            np.random.default_rng(0),
        )
        assert np.all(a == 1) and np.all(b == 1)

    def test_noise_levels(self):
        rng = np.random.default_rng(2)
        n = 200000
        zeros = np.zeros(n)

        rec = add_detection_noise(zeros, zeros, WeakConfig(g=0.25, samples=n), rng)
        assert abs(np.var(rec.a) - 1) <= 5 * np.sqrt(2 / n)

        cfg = WeakConfig(g=0.5, scheme="twin", samples=n)
        rec = add_detection_noise(zeros, zeros, cfg, rng)
        diff = rec.a - rec.a_prime
        assert abs(diff.mean()) <= 5 * np.sqrt(1 / n)
        assert abs(np.var(diff) - 2 / (4 * 0.5)) <= 5 * np.sqrt(2 / n)

        rec = add_detection_noise(np.ones(100), zeros[:100], WeakConfig(g=1e8), rng)
        assert np.max(np.abs(rec.a - 1)) <= 1e-3

    def test_scheme_mismatch(self):
        rec = OutcomeRecords([0.1, 0.2], [0.3, 0.4])
        with self.assertRaises(SchemeMismatch):
            estimate_moments(rec, WeakConfig(scheme="twin"))

    def test_noiseless_limit(self):
        from inequalities import table_from_scenario

        cfg = WeakConfig(g=1e8, samples=200000, seed=5)
        table, _ = table_from_weak(self.bell, cfg)
        exact = table_from_scenario(self.bell)
        assert np.max(np.abs(table.entries - exact.entries)) <= 1e-2
        for x in (1, 2, 3):
            for y in (1, 2, 3):
                assert abs(table.moment(x, y, 2, 2) - exact.moment(x, y, 2, 2)) <= 1e-2

    def test_recovery_both_schemes(self):
        n = 1000000
        for scheme in SCHEMES:
            cfg = WeakConfig(g=0.5, scheme=scheme, samples=n, seed=11)
            rng = np.random.default_rng(np.random.SeedSequence(11))
            values = sample_projective(
                self.bell.state, self.bell.obs_a[0], self.bell.obs_b[1], n, rng
            )
            est = estimate_moments(add_detection_noise(*values, cfg, rng), cfg)
            assert abs(est.values[2, 2] - 3 / 8) <= 5 * est.errors[2, 2], scheme

    def test_in33_violation_recovered(self):
        for scheme in SCHEMES:
            cfg = WeakConfig(g=0.5, scheme=scheme, samples=1000000, seed=3)
            table, errors = table_from_weak(self.bell, cfg, n_jobs=-1)
            report = eval_in33(table)
            sigma = bootstrap_margin(table, errors, eval_in33, n_boot=200, seed=4)
            assert sigma > 0, scheme
            assert abs(report.margin + 1 / 8) <= 5 * sigma, (scheme, report, sigma)

    def test_ine22_twin_recovered(self):
        from inequalities import eval_ine22
        from scenarios import tilted_two_choices

        cfg = WeakConfig(g=0.5, scheme="twin", samples=1000000, seed=3)
        table, errors = table_from_weak(tilted_two_choices(np.pi / 6), cfg, n_jobs=-1)
        report = eval_ine22(table)
        sigma = bootstrap_margin(table, errors, eval_ine22, n_boot=200, seed=4)
        assert sigma > 0
        assert abs(report.margin + 0.05) <= 5 * sigma, (report, sigma)

    def test_pure_noise(self):
        from qcore import Observable

        zero = Observable("A", 1, np.zeros((2, 2)))
        cfg = WeakConfig(g=0.5, samples=100000, seed=6)
        rng = np.random.default_rng(6)
        zero_b = Observable("B", 1, np.zeros((2, 2)))
        values = sample_projective(self.bell.state, zero, zero_b, cfg.samples, rng)
        est = estimate_moments(add_detection_noise(*values, cfg, rng), cfg)
        assert abs(est.values[2, 0]) <= 5 * est.errors[2, 0]
        assert abs(est.values[2, 2]) <= 5 * est.errors[2, 2]

    def test_subtraction_unbiased(self):
        a_obs = self.bell.obs_a[0]
        b_obs = self.bell.obs_b[1]
        cfg = WeakConfig(g=0.5, samples=10000)
        children = np.random.SeedSequence(9).spawn(200)
        estimates = np.array(
            [simulate_pair(self.bell.state, a_obs, b_obs, cfg, c)[0].values[2, 0] for c in children]
        )
        sem = estimates.std(ddof=1) / np.sqrt(len(estimates))
        assert abs(estimates.mean() - 0.5) <= 5 * sem

    def test_twin_has_no_noise_bias(self):
        a_obs = self.bell.obs_a[0]
        b_obs = self.bell.obs_b[1]
        weak = simulate_pair(
            self.bell.state, a_obs, b_obs, WeakConfig(g=0.1, scheme="twin", samples=100000), np.random.SeedSequence(1)
        )[0]
        strong = simulate_pair(
            self.bell.state, a_obs, b_obs, WeakConfig(g=10, scheme="twin", samples=100000), np.random.SeedSequence(2)
        )[0]
        combined = np.hypot(weak.errors[2, 0], strong.errors[2, 0])
        assert abs(weak.values[2, 0] - strong.values[2, 0]) <= 5 * combined

    def test_determinism(self):
        cfg = WeakConfig(g=0.5, scheme="twin", samples=1000, seed=42)
        t1, e1, r1 = table_from_weak(self.bell, cfg, keep_records=True)
        t2, e2, r2 = table_from_weak(self.bell, cfg, n_jobs=2, keep_records=True)
        np.testing.assert_array_equal(t1.entries, t2.entries)
        np.testing.assert_array_equal(e1, e2)
        self.assertEqual(records_to_csv(r1), records_to_csv(r2))

    def test_errors_shrink_with_samples(self):
        a_obs = self.bell.obs_a[0]
        b_obs = self.bell.obs_b[1]
        small = simulate_pair(
            self.bell.state, a_obs, b_obs, WeakConfig(samples=10000), np.random.SeedSequence(3)
        )[0]
        large = simulate_pair(
            self.bell.state, a_obs, b_obs, WeakConfig(samples=40000), np.random.SeedSequence(4)
        )[0]
        ratio = small.errors[1, 1] / large.errors[1, 1]
        assert abs(ratio - 2) <= 0.4

    def test_single_record(self):
        cfg = WeakConfig(samples=1, seed=1)
        table, errors = table_from_weak(self.bell, cfg)
        assert table.m_a == 3
        assert np.isinf(errors[0, 0, 2, 2])

        est = EstimatedMoments(table.entries[0, 0], errors[0, 0])
        summary = est.to_dict()
        assert summary["undetermined"] and summary["errors"][2][2] is None
        assert summary["errors"][0][0] == 0

    def test_records_csv(self):
        cfg = WeakConfig(scheme="subtract", samples=3, seed=1)
        _, _, records = table_from_weak(self.bell, cfg, keep_records=True)
        lines = records_to_csv(records).splitlines()
        self.assertEqual(lines[0], "x,y,a,a_prime,b,b_prime")
        self.assertEqual(len(lines), 1 + 9 * 3)
        assert lines[1].startswith("1,1,") and ",," in lines[1]

    def test_kraus_density_overlay(self):
        g = 0.7
        obs = self.bell.obs_a[1]
        grid = np.linspace(-2, 3, 11)
        density = outcome_density(self.bell.state, obs, g, grid)

        # reduced state of the singlet is I/2, so eigenvalues 0 and 1 are equally likely
        eig = hermitian_eigen(obs.op)
        expected = sum(
            0.5 * detection_noise_density(grid - value, g) for value in eig.values
        )
        np.testing.assert_allclose(density, expected, atol=1e-10)

    def test_kraus_completeness(self):
        g = 0.5
        obs = self.bell.obs_b[0]
        grid = np.linspace(-8, 9, 4001)
        step = grid[1] - grid[0]
        total = sum(
            np.conj(kraus_operator(obs.op, g, a)).T @ kraus_operator(obs.op, g, a)
            for a in grid
        ) * step
        np.testing.assert_allclose(total, np.eye(2), atol=1e-6)


if __name__ == "__main__":
    unittest.main()
