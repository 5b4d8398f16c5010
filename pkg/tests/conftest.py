"""Shared fixtures and the per-criterion acceptance summary."""
from __future__ import annotations

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

_CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    number, title = marker.args
    entry = _CRITERIA.setdefault(number, {"title": title, "ok": True, "notes": []})
    if report.failed or (report.when == "setup" and report.skipped):
        entry["ok"] = False
    for key, value in item.user_properties:
        if key == "measured":
            entry["notes"].append(value)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        status = "PASS" if entry["ok"] else "FAIL"
        notes = "; ".join(dict.fromkeys(entry["notes"]))
        tr.write_line(f"[{status}] {number:>2}. {entry['title']}" + (f" ({notes})" if notes else ""))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def desk_run(tmp_path_factory):
    """Desk-preset training on sphere/torus samples, shared by several tests."""
    import time

    from pu_transformer.data import generate_dataset, save_checkpoint
    from pu_transformer.model import ModelConfig, init_params
    from pu_transformer.train import eval_loss, normalized_pairs, preset, train

    cfg = ModelConfig()
    records = generate_dataset(["sphere", "torus"], 256, 4, 64, seed=0)
    held_out = generate_dataset(["sphere", "torus"], 256, 4, 8, seed=1)
    hx, hy = normalized_pairs(held_out)
    init = init_params(cfg, 0)
    loss_init = eval_loss(init, cfg, hx, hy)
    t0 = time.perf_counter()
    best, manifest = train(records, cfg, preset("desk", seed=0), params=init_params(cfg, 0))
    seconds = time.perf_counter() - t0
    loss_trained = eval_loss(best, cfg, hx, hy)
    ckpt = tmp_path_factory.mktemp("desk") / "desk.ckpt"
    save_checkpoint(best, cfg, ckpt)
    return dict(cfg=cfg, params=best, manifest=manifest, seconds=seconds, loss_init=loss_init,
                loss_trained=loss_trained, checkpoint=ckpt)
