"""
Includes constants, paths, logging and error helpers used by different scripts.
"""

from datetime import datetime
import logging
import unittest
import json
import os


# These parameters are used wherever they are needed in the source code.
# So, any change here will affect everywhere (experiments, tests, CLI etc.).
TOLERANCES = {
    "hermitian": 1e-12,  # relative to max |entry|, with the same absolute floor
    "normalization": 1e-12,
    "reconstruction": 1e-10,
    "imaginary": 1e-10,
    "marginal": 1e-10,
    "marginal_sampled": 1e-6,
    "clamp": 1e-12,  # square-root arguments in [-clamp, 0) become 0
    "violation": 1e-12,  # margin < -violation means violated
    "degenerate": 1e-9,
    "lhv_weight": 1e-14,
    "lhv_variance": 1e-14,
    "lhv_gap": 1e-12,
    "lhv_c": 1e-14,
    "lhv_cell": 1e-15,
    "lhv_agreement": 1e-9,
}

DEFAULT_SEED = 20240101
DEFAULT_G = 0.5
DEFAULT_SAMPLES = 100000

_root = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..")


class MomentError(Exception):
    """Base class of every numerical or domain error raised by the scripts."""

    pass


def get_data_path(file_name):
    """
    Specify the path of a file under the data folder. This method is used wherever
    fixtures or datasets are read in the source code.

    Parameters
    ----------
    file_name (str):
        Path relative to the data folder, e.g. "test_data/bell_table.json".
    """
    return os.path.normpath(os.path.join(_root, "data", file_name))


def get_results_dir(out_dir=None):
    """
    Specify the output folder. An explicit `out_dir` wins, then the
    MOMENTBELL_OUTPUT_DIR environment variable, then the results folder.

    Parameters
    ----------
    out_dir (str) (default = None):
        Explicit output folder.

    Returns
    -------
    str:
        Existing output folder.
    """
    path = out_dir or os.environ.get("MOMENTBELL_OUTPUT_DIR") or os.path.join(
        _root, "results"
    )
    os.makedirs(path, exist_ok=True)
    return os.path.normpath(path)


def get_log_path(run_name):
    """
    Specify the log file of a run. One log file is kept for each command.

    Parameters
    ----------
    run_name (str):
        Name of the run, e.g. "verify".
    """
    log_dir = os.path.join(_root, "logs")
    os.makedirs(log_dir, exist_ok=True)
    return os.path.normpath(os.path.join(log_dir, "{}.log".format(run_name)))


def init_log(log_path, mode="a", level=logging.INFO):
    """
    Route the log records of every module to the file in `log_path`. Each line
    starts with the time string.

    Parameters
    ----------
    log_path (str):
        Path to log file.

    mode (str) (default = 'a'):
        'a' (append) or 'w' (write). 'a' appends to the existing log file.
        'w' overwrites the existing log file.

    level (int) (default = logging.INFO):
        Lowest level written to the file.

    Returns
    -------
    logging.Handler:
        The attached handler, so callers can detach it.
    """
    assert mode in ["a", "w"], "Log mode can be 'a' (append) or 'w' (write)"

    handler = logging.FileHandler(log_path, mode=mode, encoding="utf8")
    handler.setFormatter(logging.Formatter("%(asctime)s: %(message)s"))
    root = logging.getLogger()
    root.addHandler(handler)
    root.setLevel(min(root.level or level, level))
    return handler


def format_float(value):
    """
    Format a float with 17 significant digits, so it round-trips exactly.
    """
    return "{:.17g}".format(value)


def dump_json(path, obj):
    """
    Dump the given object into a JSON file. Overwrite if a file with the given
    name already exists.

    Parameters
    ----------
    path (str):
        Path of the JSON file.

    obj (dict | list):
        JSON serializable object.
    """
    with open(path, "w", encoding="utf8") as f:
        json.dump(obj, f, indent=2)


def load_json(path):
    """
    Load a JSON file.

    Parameters
    ----------
    path (str):
        Path of the JSON file.

    Returns
    -------
    dict | list:
        Parsed content.
    """
    with open(path, encoding="utf8") as f:
        return json.load(f)


def timestamp():
    """
    Current time string used in report headers.
    """
    return datetime.today().isoformat(timespec="seconds")


def sort_dict(d, by_value=False, reverse=False):
    """
    Sort the given dictionary.
    If `by_value=True`, sort by values. Othwerwise sort by keys.
    If `reverse=True`, sort in descending order. Otherwise sort in ascending order.

    Parameters
    ----------
    d (dict):
        Any dictionary.

    by_value (bool) (default = False):
        If True, sort by values. Othwerwise sort by keys.

    reverse (bool) (default = False):
        If True, sort in descending order. If False, sort in ascending order.

    Returns
    -------
    dict:
        Sorted copy of the given dictionary.
    """
    if by_value:
        return {k: d[k] for k in sorted(d, key=lambda x: d[x], reverse=reverse)}
    else:
        return {k: d[k] for k in sorted(d, reverse=reverse)}


class TestUtil(unittest.TestCase):
    def test_sort_dict(self):
        d = {"in33": -0.125, "cfrd": 0.5, "ine22": -0.05}

        assert sort_dict(d, by_value=True) == {
            "in33": -0.125,
            "ine22": -0.05,
            "cfrd": 0.5,
        }, "Testing 'sort_dict' with 'by_value=True' failed."

        assert list(sort_dict(d, reverse=True)) == [
            "ine22",
            "in33",
            "cfrd",
        ], "Testing 'sort_dict' with 'reverse=True' failed."

    def test_format_float_round_trip(self):
        for value in [3 / 8, 1 / 3, -0.125, 2.0 ** -40, 1e300]:
            assert float(format_float(value)) == value

    def test_results_dir_env(self):
        import tempfile

        with tempfile.TemporaryDirectory() as tmp:
            target = os.path.join(tmp, "out")
            old = os.environ.get("MOMENTBELL_OUTPUT_DIR")
            os.environ["MOMENTBELL_OUTPUT_DIR"] = target
            try:
                assert get_results_dir() == os.path.normpath(target)
                assert os.path.isdir(target)
                assert get_results_dir(tmp) == os.path.normpath(tmp)
            finally:
                if old is None:
                    del os.environ["MOMENTBELL_OUTPUT_DIR"]
                else:
                    os.environ["MOMENTBELL_OUTPUT_DIR"] = old


if __name__ == "__main__":
    unittest.main()
