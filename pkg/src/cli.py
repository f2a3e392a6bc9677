"""
Command-line frontend. Every command writes a JSON report (and CSV data where
useful) into the output folder and logs into logs/<command>.log.

Exit codes: 0 expected outcome, 1 unexpected verdict, 2 usage error, 3 numerical
failure.

Usage: python3 src/cli.py [--config FILE] [--threads N] [--out-dir DIR] COMMAND ...
"""

import contextlib
import logging
import os
import unittest
import click
import numpy as np
from joblib import Parallel, delayed
from inequalities import (
    IN33_NULL_CROSSOVER,
    INEQUALITIES,
    null_mix,
    table_from_scenario,
)
from lhv import build_lhv, random_lhv_input, verify_lhv
from qcore import Observable
from scenarios import (
    SCENARIOS,
    maximally_entangled_two_choices,
    scenario_from_json,
    scenario_to_dict,
    sweep_ine22,
)
from search import SIMPLEX, SearchSpace, multi_start, trace_to_csv
from sospoly import min_w_runs, non_sos_certificate, scan_quantum_w
from util import (
    DEFAULT_G,
    DEFAULT_SAMPLES,
    DEFAULT_SEED,
    TOLERANCES,
    MomentError,
    dump_json,
    format_float,
    get_log_path,
    get_results_dir,
    init_log,
    load_json,
    sort_dict,
    timestamp,
)
from weakmeas import (
    ConfigError,
    EstimatedMoments,
    WeakConfig,
    bootstrap_margin,
    records_to_csv,
    table_from_weak,
)

logger = logging.getLogger(__name__)

EXIT_UNEXPECTED = 1
EXIT_NUMERICAL = 3

DEFAULT_PHI = float(np.pi / 6)
# Search shapes and the margins the known constructions reach.
SEARCH_SHAPES = {"in33": (3, 3), "in33r": (3, 3), "ine22": (2, 2), "cfrd": (2, 2)}
KNOWN_MARGINS = {"in33": -1 / 8, "in33r": -1 / 8, "ine22": -0.05}


@contextlib.contextmanager
def command_log(ctx):
    """
    Log the command into its own file and turn domain errors into exit codes.
    """
    handler = init_log(get_log_path(ctx.info_name), mode="w")
    logger.info("Started '%s' at %s", ctx.info_name, timestamp())
    try:
        yield
    except ConfigError as e:
        raise click.UsageError(str(e), ctx) from e
    except MomentError as e:
        logger.error("%s: %s", type(e).__name__, e)
        click.echo("Error: {}: {}".format(type(e).__name__, e), err=True)
        ctx.exit(EXIT_NUMERICAL)
    finally:
        logger.info("Ended '%s'", ctx.info_name)
        logging.getLogger().removeHandler(handler)
        handler.close()


def effective_config(ctx):
    """
    Group and command options as used, for the report header.
    """
    config = dict(ctx.parent.params) if ctx.parent else {}
    config.pop("config", None)
    config.update(ctx.params)
    return sort_dict({k: list(v) if isinstance(v, tuple) else v for k, v in config.items()})


def write_report(ctx, file_name, payload):
    path = os.path.join(ctx.obj["out_dir"], file_name)
    dump_json(path, {"command": ctx.info_name, "config": effective_config(ctx), **payload})
    click.echo("Report: {}".format(path))
    return path


def write_text(ctx, file_name, text):
    path = os.path.join(ctx.obj["out_dir"], file_name)
    with open(path, "w", encoding="utf8") as f:
        f.write(text)
    click.echo("Data: {}".format(path))
    return path


@click.group()
@click.option(
    "--config",
    type=click.Path(exists=True, dir_okay=False),
    help="JSON file mapping command names to option defaults.",
)
@click.option("--threads", default=-1, show_default=True, help="Worker cap, -1 for all cores.")
@click.option(
    "--out-dir",
    envvar="MOMENTBELL_OUTPUT_DIR",
    type=click.Path(file_okay=False),
    help="Output folder (default: results/).",
)
@click.pass_context
def cli(ctx, config, threads, out_dir):
    """Moment-based tests of local realism."""
    if config:
        ctx.default_map = load_json(config)
    ctx.obj = {"threads": threads, "out_dir": get_results_dir(out_dir)}


def load_scenario(name, phi, scenario_file):
    """
    Scenario from a JSON file if given, otherwise the named construction.
    """
    if scenario_file:
        with open(scenario_file, encoding="utf8") as f:
            return scenario_from_json(f.read())
    return SCENARIOS[name](phi)


def expected_violation(name, null_rate, phi):
    if name == "cfrd":
        return False
    if name == "in33":
        return null_rate > IN33_NULL_CROSSOVER
    if name == "ine22":
        return 0 < phi < np.pi / 4
    return True


@cli.command()
@click.argument("name", type=click.Choice(sorted(INEQUALITIES)))
@click.option("--null-rate", default=1.0, show_default=True, help="Entanglement rate r.")
@click.option("--phi", default=DEFAULT_PHI, show_default=True, help="Tilt angle for ine22.")
@click.option(
    "--scenario-file",
    type=click.Path(exists=True, dir_okay=False),
    help="Scenario JSON to evaluate instead of the canonical one.",
)
@click.pass_context
def verify(ctx, name, null_rate, phi, scenario_file):
    """Evaluate an inequality on its canonical quantum scenario."""
    with command_log(ctx):
        s = load_scenario("tilted" if name == "ine22" else "bell", phi, scenario_file)
        table = table_from_scenario(s)
        if null_rate != 1:
            table = null_mix(table, null_rate)

        report = INEQUALITIES[name](table)
        # no expectation for user scenarios
        expected = None if scenario_file else expected_violation(name, null_rate, phi)
        click.echo(repr(report))
        logger.info("%r", report)
        write_report(
            ctx,
            "verify_{}.json".format(name),
            {
                "report": report.to_dict(),
                "expected_violation": expected,
                "scenario": scenario_to_dict(s),
            },
        )
        if expected is not None and report.satisfied == expected:
            ctx.exit(EXIT_UNEXPECTED)


@cli.command()
@click.option("--phi-start", default=0.0, show_default=True)
@click.option("--phi-end", default=float(np.pi / 4), show_default=True)
@click.option("--steps", default=100, show_default=True, type=click.IntRange(min=2))
@click.option("--out", default="sweep_ine22.csv", show_default=True, help="CSV file name.")
@click.pass_context
def sweep(ctx, phi_start, phi_end, steps, out):
    """Sweep the two-choice inequality over the tilted family."""
    with command_log(ctx):
        rows = sweep_ine22(np.linspace(phi_start, phi_end, steps))
        lines = ["phi,lhs,rhs,margin"] + [
            ",".join(format_float(row[k]) for k in ("phi", "lhs", "rhs", "margin"))
            for row in rows
        ]
        write_text(ctx, out, "\n".join(lines) + "\n")

        deepest = min(rows, key=lambda row: row["margin"])
        click.echo(
            "Deepest violation: margin {:.12g} at phi {:.12g}".format(
                deepest["margin"], deepest["phi"]
            )
        )


def simulated_inequalities(s):
    if min(s.m_a, s.m_b) >= 3:
        return ("in33", "in33r", "cfrd")
    return ("ine22", "cfrd")


@cli.command()
@click.option("--scenario", default="bell", type=click.Choice(sorted(SCENARIOS)))
@click.option("--phi", default=DEFAULT_PHI, show_default=True)
@click.option(
    "--scenario-file",
    type=click.Path(exists=True, dir_okay=False),
    help="Scenario JSON, overrides --scenario.",
)
@click.option("--g", "gs", multiple=True, type=float, help="Strength(s); repeat for a sweep.")
@click.option("--scheme", default="subtract", type=click.Choice(["subtract", "twin"]))
@click.option("--samples", default=DEFAULT_SAMPLES, show_default=True)
@click.option("--seed", default=DEFAULT_SEED, show_default=True)
@click.option("--n-boot", default=200, show_default=True)
@click.option("--records/--no-records", default=False, help="Also write raw records.")
@click.pass_context
def simulate(
    ctx, scenario, phi, scenario_file, gs, scheme, samples, seed, n_boot, records
):
    """Simulate weak measurements and test the recovered moments."""
    with command_log(ctx):
        s = load_scenario(scenario, phi, scenario_file)
        if scenario_file:
            scenario = os.path.splitext(os.path.basename(scenario_file))[0]
        exact = table_from_scenario(s)
        runs = []
        consistent = True
        for g in gs or (DEFAULT_G,):
            cfg = WeakConfig(g=g, scheme=scheme, samples=samples, seed=seed)
            outputs = table_from_weak(
                s, cfg, n_jobs=ctx.obj["threads"], keep_records=records
            )
            table, errors = outputs[:2]
            if records:
                write_text(
                    ctx, "records_{}_g{:g}.csv".format(scenario, g), records_to_csv(outputs[2])
                )

            verdicts = []
            for name in simulated_inequalities(s):
                report = INEQUALITIES[name](table)
                target = INEQUALITIES[name](exact).margin
                sigma = bootstrap_margin(table, errors, INEQUALITIES[name], n_boot, seed)
                if np.isnan(sigma):
                    distance, consistency = None, "undetermined"
                    logger.warning("g=%g %s: sigma undetermined, margin unchecked", g, name)
                else:
                    gap = abs(report.margin - target)
                    distance = (report.margin - target) / sigma if sigma > 0 else None
                    ok = gap <= 5 * sigma or gap <= TOLERANCES["violation"]
                    consistency = "consistent" if ok else "inconsistent"
                    consistent = consistent and consistency == "consistent"
                verdicts.append(
                    {
                        **report.to_dict(),
                        "sigma": None if np.isnan(sigma) else sigma,
                        "exact_margin": target,
                        "sigma_distance": distance,
                        "consistency": consistency,
                    }
                )
                click.echo("g={:g} {!r} sigma={:.3g} {}".format(g, report, sigma, consistency))

            runs.append(
                {
                    "g": g,
                    "table": [
                        [EstimatedMoments(table.entries[x, y], errors[x, y]).to_dict()
                         for y in range(table.m_b)]
                        for x in range(table.m_a)
                    ],
                    "inequalities": verdicts,
                }
            )

        write_report(
            ctx,
            "simulate_{}_{}.json".format(scenario, scheme),
            {"scenario": scenario_to_dict(s), "runs": runs},
        )
        if not consistent:
            ctx.exit(EXIT_UNEXPECTED)


@delayed
def _lhv_trial(n, dim_a, dim_b, n_b, seed_seq, projectors, identity_b):
    rng = np.random.default_rng(seed_seq)
    a_plus, a_minus, bs = random_lhv_input(n, dim_a, dim_b, n_b, rng, projectors)
    if identity_b:
        bs = [Observable("B", 1, np.eye(dim_b))]
    model = build_lhv(n, dim_a, a_plus, a_minus, bs)
    s = maximally_entangled_two_choices(
        n, dim_a, dim_b, a_plus.op, a_minus.op, [b.op for b in bs]
    )
    discrepancy, semipositive = verify_lhv(model, s)
    return {
        "discrepancy": discrepancy,
        "semipositive": semipositive,
        "c_branches": model.c_branches,
        "dropped_moment": model.dropped_moment,
        "cells": len(model.cells),
    }


@cli.command("lhv-check")
@click.option("--n", default=2, show_default=True, type=click.IntRange(min=2))
@click.option("--dim-a", type=int, help="Local dim of A (default: n).")
@click.option("--dim-b", type=int, help="Local dim of B (default: n).")
@click.option("--n-b", default=2, show_default=True, type=click.IntRange(min=1))
@click.option("--trials", default=100, show_default=True, type=click.IntRange(min=1))
@click.option("--seed", default=DEFAULT_SEED, show_default=True)
@click.option("--projectors/--hermitian", default=False, help="Kind of A observables.")
@click.option("--identity-b", is_flag=True, help="Use B = identity only.")
@click.pass_context
def lhv_check(ctx, n, dim_a, dim_b, n_b, trials, seed, projectors, identity_b):
    """Check the hidden variable model against quantum moments."""
    with command_log(ctx):
        dim_a, dim_b = dim_a or n, dim_b or n
        if dim_a < n or dim_b < n:
            raise click.BadParameter("Local dims must be at least n", ctx)

        children = np.random.SeedSequence(seed).spawn(trials)
        results = Parallel(n_jobs=ctx.obj["threads"])(
            _lhv_trial(n, dim_a, dim_b, n_b, c, projectors, identity_b) for c in children
        )
        worst = max(r["discrepancy"] for r in results)
        passed = worst <= TOLERANCES["lhv_agreement"] and all(
            r["semipositive"] for r in results
        )
        c_count = sum(r["c_branches"] > 0 for r in results)
        logger.info("%d trials, max discrepancy %g", trials, worst)
        click.echo(
            "{} trials: max discrepancy {:.3g}, off-block branch in {} trials, {}".format(
                trials, worst, c_count, "PASSED" if passed else "FAILED"
            )
        )
        write_report(
            ctx,
            "lhv_check.json",
            {
                "max_discrepancy": worst,
                "passed": passed,
                "c_branch_trials": c_count,
                "trials": results,
            },
        )
        if not passed:
            ctx.exit(EXIT_UNEXPECTED)


@cli.command()
@click.option("--restarts", default=100, show_default=True, type=click.IntRange(min=1))
@click.option("--seed", default=DEFAULT_SEED, show_default=True)
@click.option("--quantum-scan", default=0, show_default=True, help="Random quantum samples of <W>.")
@click.pass_context
def poly(ctx, restarts, seed, quantum_scan):
    """Minimize W and check its sum-of-squares constraints."""
    with command_log(ctx):
        runs = min_w_runs(restarts, seed, n_jobs=ctx.obj["threads"])
        lines = ["seed,start,value,a1,a2,b1,b2"] + [
            ",".join([str(seed), str(i)] + [format_float(v) for v in [value, *p.as_array()]])
            for i, value, p in runs
        ]
        write_text(ctx, "poly_min_w.csv", "\n".join(lines) + "\n")

        _, value, point = min(runs, key=lambda run: (run[1], run[0]))
        certificate = non_sos_certificate()
        payload = {
            "min_w": value,
            "argmin": point.as_array().tolist(),
            "certificate": certificate,
        }
        click.echo("min W = {:.3g} at {!r}".format(value, point))
        click.echo(
            "Sum-of-squares constraints: {} ({:.12g} > {:.12g})".format(
                certificate["verdict"],
                certificate["lower_bound"],
                certificate["upper_bound"],
            )
        )
        if quantum_scan:
            payload["quantum_scan"] = scan_quantum_w(quantum_scan, seed)
            click.echo(payload["quantum_scan"]["message"])

        write_report(ctx, "poly.json", payload)
        if value < -1e-8 or certificate["verdict"] != "Infeasible":
            ctx.exit(EXIT_UNEXPECTED)


@cli.command()
@click.argument("ineq", type=click.Choice(sorted(SEARCH_SHAPES)))
@click.option("--restarts", default=100, show_default=True, type=click.IntRange(min=1))
@click.option("--seed", default=DEFAULT_SEED, show_default=True)
@click.option("--max-evals", default=2000, show_default=True)
@click.option("--projectors-only", is_flag=True, help="Rank-1 projector observables.")
@click.pass_context
def search(ctx, ineq, restarts, seed, max_evals, projectors_only):
    """Search for violations with multi-start Nelder-Mead."""
    with command_log(ctx):
        space = SearchSpace(*SEARCH_SHAPES[ineq], projectors_only=projectors_only)
        if max_evals < space.size + 1:
            raise click.BadParameter(
                "--max-evals must be at least {}".format(space.size + 1), ctx
            )
        best, results = multi_start(
            space, ineq, restarts, seed, max_evals, n_jobs=ctx.obj["threads"]
        )
        write_text(ctx, "search_{}_trace.csv".format(ineq), trace_to_csv(results))

        if ineq in KNOWN_MARGINS:
            expected = best.margin <= KNOWN_MARGINS[ineq] + 1e-6
        else:
            expected = best.margin >= -1e-6
        click.echo(
            "Best {} margin {:.12g} (start {}, {} evaluations)".format(
                ineq, best.margin, best.start, best.evaluations
            )
        )
        write_report(
            ctx,
            "search_{}.json".format(ineq),
            {
                "simplex": SIMPLEX,
                "best": best.to_dict(),
                "starts": [r.to_dict() for r in results],
            },
        )
        if not expected:
            ctx.exit(EXIT_UNEXPECTED)


class TestCli(unittest.TestCase):
    def setUp(self):
        import tempfile
        from click.testing import CliRunner

        self.tmp = tempfile.TemporaryDirectory()
        self.runner = CliRunner()

    def tearDown(self):
        self.tmp.cleanup()

    def invoke(self, *args):
        return self.runner.invoke(
            cli, ["--out-dir", self.tmp.name, "--threads", "1", *args]
        )

    def report(self, file_name):
        return load_json(os.path.join(self.tmp.name, file_name))

    def test_verify_in33(self):
        result = self.invoke("verify", "in33")
        self.assertEqual(result.exit_code, 0, result.output)
        assert "VIOLATED" in result.output
        report = self.report("verify_in33.json")["report"]
        assert abs(report["lhs"] - 1.125) <= 1e-12
        assert abs(report["rhs"] - 1.25) <= 1e-12

    def test_verify_cfrd(self):
        result = self.invoke("verify", "cfrd")
        self.assertEqual(result.exit_code, 0, result.output)
        assert "SATISFIED" in result.output

    def test_verify_null_rate(self):
        result = self.invoke("verify", "in33", "--null-rate", "0.01")
        self.assertEqual(result.exit_code, 0, result.output)
        assert "SATISFIED" in result.output

        result = self.invoke("verify", "in33r", "--null-rate", "0.01")
        self.assertEqual(result.exit_code, 0, result.output)
        assert "VIOLATED" in result.output

        result = self.invoke("verify", "ine22", "--null-rate", "0.01")
        self.assertEqual(result.exit_code, 0, result.output)
        assert "VIOLATED" in result.output
        assert abs(self.report("verify_ine22.json")["report"]["margin"] + 0.0005) <= 1e-12

    def test_verify_ine22_and_config_echo(self):
        result = self.invoke("verify", "ine22")
        self.assertEqual(result.exit_code, 0, result.output)
        doc = self.report("verify_ine22.json")
        assert abs(doc["report"]["margin"] + 0.05) <= 1e-12
        self.assertEqual(doc["config"]["phi"], DEFAULT_PHI)
        self.assertEqual(doc["config"]["threads"], 1)

    def test_config_file(self):
        path = os.path.join(self.tmp.name, "config.json")
        dump_json(path, {"verify": {"null_rate": 0.01}})
        result = self.runner.invoke(
            cli, ["--config", path, "--out-dir", self.tmp.name, "verify", "in33"]
        )
        self.assertEqual(result.exit_code, 0, result.output)
        assert "SATISFIED" in result.output

        # flags override the file
        result = self.runner.invoke(
            cli,
            ["--config", path, "--out-dir", self.tmp.name, "verify", "in33", "--null-rate", "1"],
        )
        assert "VIOLATED" in result.output

    def test_usage_and_numerical_errors(self):
        self.assertEqual(self.invoke("verify", "chsh").exit_code, 2)
        self.assertEqual(self.invoke("sweep", "--steps", "1").exit_code, 2)
        self.assertEqual(self.invoke("verify", "ine22", "--phi", "2.0").exit_code, 3)
        self.assertEqual(self.invoke("verify", "in33", "--null-rate", "0").exit_code, 3)
        self.assertEqual(self.invoke("simulate", "--g", "0").exit_code, 2)

    def test_sweep(self):
        result = self.invoke("sweep", "--steps", "2")
        self.assertEqual(result.exit_code, 0, result.output)
        with open(os.path.join(self.tmp.name, "sweep_ine22.csv")) as f:
            lines = f.read().splitlines()
        self.assertEqual(lines[0], "phi,lhs,rhs,margin")
        self.assertEqual(len(lines), 3)
        for line in lines[1:]:
            assert abs(float(line.split(",")[3])) <= 1e-10

        self.invoke("sweep", "--steps", "100", "--out", "window.csv")
        with open(os.path.join(self.tmp.name, "window.csv")) as f:
            margins = [float(line.split(",")[3]) for line in f.read().splitlines()[1:]]
        assert all(m < 0 for m in margins[1:-1])

    def test_simulate(self):
        args = ["simulate", "--g", "1e8", "--samples", "20000", "--seed", "3"]
        result = self.invoke(*args)
        self.assertEqual(result.exit_code, 0, result.output)
        first = self.report("simulate_bell_subtract.json")
        verdicts = {v["name"]: v["verdict"] for v in first["runs"][0]["inequalities"]}
        self.assertEqual(verdicts, {"in33": "VIOLATED", "in33r": "VIOLATED", "cfrd": "SATISFIED"})

        self.invoke(*args)
        self.assertEqual(first, self.report("simulate_bell_subtract.json"))

    def test_simulate_g_sweep_and_records(self):
        result = self.invoke(
            "simulate", "--scenario", "tilted", "--scheme", "twin", "--g", "1e6",
            "--g", "1e8", "--samples", "2000", "--records",
        )
        self.assertEqual(result.exit_code, 0, result.output)
        doc = self.report("simulate_tilted_twin.json")
        self.assertEqual([run["g"] for run in doc["runs"]], [1e6, 1e8])
        for run in doc["runs"]:
            names = [v["name"] for v in run["inequalities"]]
            self.assertEqual(names, ["ine22", "cfrd"])
            assert all(v["consistency"] == "consistent" for v in run["inequalities"])
        assert os.path.exists(os.path.join(self.tmp.name, "records_tilted_g1e+06.csv"))

    def test_simulate_single_record(self):
        result = self.invoke("simulate", "--samples", "1", "--g", "0.5")
        self.assertEqual(result.exit_code, 0, result.output)
        assert "undetermined" in result.output
        run = self.report("simulate_bell_subtract.json")["runs"][0]
        assert run["table"][0][0]["undetermined"]
        for verdict in run["inequalities"]:
            self.assertEqual(verdict["consistency"], "undetermined")
            self.assertIsNone(verdict["sigma"])
            self.assertIsNone(verdict["sigma_distance"])

    def scenario_file(self):
        from scenarios import scenario_to_json, tilted_two_choices

        path = os.path.join(self.tmp.name, "tilted_pi6.json")
        with open(path, "w", encoding="utf8") as f:
            f.write(scenario_to_json(tilted_two_choices(np.pi / 6)))
        return path

    def test_verify_scenario_file(self):
        path = self.scenario_file()
        result = self.invoke("verify", "ine22", "--scenario-file", path)
        self.assertEqual(result.exit_code, 0, result.output)
        assert "VIOLATED" in result.output
        doc = self.report("verify_ine22.json")
        assert abs(doc["report"]["margin"] + 0.05) <= 1e-12
        self.assertIsNone(doc["expected_violation"])
        self.assertEqual(doc["scenario"], load_json(path))

    def test_simulate_scenario_file(self):
        path = self.scenario_file()
        result = self.invoke(
            "simulate", "--scenario-file", path, "--g", "1e8", "--samples", "2000"
        )
        self.assertEqual(result.exit_code, 0, result.output)
        doc = self.report("simulate_tilted_pi6_subtract.json")
        self.assertEqual(doc["scenario"], load_json(path))
        names = [v["name"] for v in doc["runs"][0]["inequalities"]]
        self.assertEqual(names, ["ine22", "cfrd"])

    def test_lhv_check(self):
        result = self.invoke("lhv-check", "--n", "2", "--trials", "20")
        self.assertEqual(result.exit_code, 0, result.output)

        result = self.invoke("lhv-check", "--n", "3", "--dim-b", "5", "--trials", "5")
        self.assertEqual(result.exit_code, 0, result.output)
        assert self.report("lhv_check.json")["c_branch_trials"] > 0

        result = self.invoke("lhv-check", "--identity-b", "--trials", "5")
        self.assertEqual(result.exit_code, 0, result.output)
        assert self.report("lhv_check.json")["max_discrepancy"] <= 1e-12

    def test_poly(self):
        result = self.invoke("poly", "--restarts", "2", "--quantum-scan", "20")
        self.assertEqual(result.exit_code, 0, result.output)
        with open(os.path.join(self.tmp.name, "poly_min_w.csv")) as f:
            lines = f.read().splitlines()
        self.assertEqual(lines[0], "seed,start,value,a1,a2,b1,b2")
        self.assertEqual(len(lines), 4)
        assert all(line.startswith(str(DEFAULT_SEED) + ",") for line in lines[1:])
        doc = self.report("poly.json")
        self.assertEqual(doc["certificate"]["verdict"], "Infeasible")
        self.assertAlmostEqual(doc["certificate"]["lower_bound"], 3.375, places=12)
        assert doc["min_w"] >= -1e-8
        assert "no violation found" in doc["quantum_scan"]["message"]

    def test_search(self):
        result = self.invoke("search", "in33", "--restarts", "2", "--max-evals", "100")
        self.assertEqual(result.exit_code, 0, result.output)
        assert self.report("search_in33.json")["best"]["margin"] <= -1 / 8 + 1e-6

        result = self.invoke("search", "cfrd", "--restarts", "3", "--max-evals", "100")
        self.assertEqual(result.exit_code, 0, result.output)


if __name__ == "__main__":
    cli()
