import dataclasses

import pytest

from prebledc.config import ExperimentConfig
from prebledc.experiment import build_target, obtain_h_bl

_ACCEPTANCE: list[tuple[str, bool, str]] = []


def record_criterion(name: str, ok: bool, detail: str = "") -> None:
    _ACCEPTANCE.append((name, ok, detail))


@pytest.fixture(scope="session")
def acceptance():
    return record_criterion


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")


@pytest.fixture(scope="session")
def default_cfg():
    return ExperimentConfig()


@pytest.fixture(scope="session")
def default_target(default_cfg):
    return build_target(default_cfg, default_cfg.link)


@pytest.fixture(scope="session")
def default_h_bl(default_cfg):
    return obtain_h_bl(default_cfg)


@pytest.fixture
def small_cfg(tmp_path):
    """Short frames and a shallow Monte Carlo for pipeline plumbing tests."""
    cfg = ExperimentConfig(out_dir=str(tmp_path / "out"))
    return dataclasses.replace(
        cfg,
        signal=dataclasses.replace(cfg.signal, n_bits=4096),
        gs=dataclasses.replace(cfg.gs, n_iter=30),
        ffe=dataclasses.replace(cfg.ffe, n_taps=11, train_symbols=1500),
        phase1=dataclasses.replace(cfg.phase1, ffe_taps=11, train_symbols=2000),
        mc=dataclasses.replace(cfg.mc, max_bits=3 * 4096),
        sweep=dataclasses.replace(cfg.sweep, values=(-12.0, -8.0, -4.0)),
    )
