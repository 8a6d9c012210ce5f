import numpy as np
import pytest

from tlid.config import reset_config
from tlid.main import main
from tlid.processes import SimConfig
from tlid.ui import reset_console


@pytest.fixture(autouse=True)
def fresh_config(tmp_path, monkeypatch):
    """Every test starts from built-in settings with logs under tmp_path."""
    monkeypatch.delenv("TLID_THREADS", raising=False)
    monkeypatch.setenv("TLID_LOG_DIR", str(tmp_path / "logs"))
    reset_console()
    config = reset_config()
    yield config
    reset_config()


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(20240601))


@pytest.fixture
def sim_config():
    def make(n_paths=4000, seed=7, **overrides):
        overrides.setdefault("block_size", 1024)
        return SimConfig(n_paths=n_paths, seed=seed, **overrides)
    return make


@pytest.fixture
def run_cli(capsys):
    """Run the CLI without a log file; returns (exit code, stdout, stderr)."""
    def run(*argv):
        code = main([*argv, "--no-log-file"])
        captured = capsys.readouterr()
        return code, captured.out, captured.err
    return run
