from __future__ import annotations

from pathlib import Path

import pytest

from trendvote.synthlab import SynthConfig, generate

FIXTURES = Path(__file__).parent / "fixtures"

_acceptance: dict[int, dict] = {}


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def small_corpus_dir(tmp_path_factory) -> Path:
    """A 60-day synthetic corpus written to disk, with a config that splits it 20/20/20."""
    out = tmp_path_factory.mktemp("corpus")
    corpus = generate(SynthConfig(n_days=60, items_per_day=6, relevance_rate=0.6, seed=11))
    corpus.write(out)
    days = [d.target_date for d in corpus.days]
    (out / "run.ini").write_text(
        "[data]\nnews = news.jsonl\nprices = prices.csv\n\n"
        "[splits]\n"
        f"train = {days[0]}..{days[19]}\n"
        f"valid = {days[20]}..{days[39]}\n"
        f"test = {days[40]}..{days[59]}\n\n"
        "[backend]\ntruth = truth.jsonl\n",
        encoding="utf-8",
    )
    return out


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("acceptance")
    if marker is None or call.when not in ("setup", "call"):
        return
    number, title = marker.args
    entry = _acceptance.setdefault(number, {"title": title, "ok": True, "ran": False})
    if call.when == "call":
        entry["ran"] = True
    if call.excinfo is not None:
        entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance):
        entry = _acceptance[number]
        status = "PASS" if entry["ok"] and entry["ran"] else "FAIL"
        terminalreporter.write_line(f"[{status}] {number:>2}. {entry['title']}")
