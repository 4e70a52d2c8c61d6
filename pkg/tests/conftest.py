import pytest

from fuse_ensemble.dataset import Batch, Manifest, ScoreBlock, VerifierSpec, normalize_block


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def record(request):
    """Print and keep one acceptance line: ``record(number, passed, detail)``."""
    def _record(number, passed, detail):
        line = f"CRITERION {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        request.config._acceptance_lines.append(line)
        return passed
    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split(":")[0].split()[-1])):
            terminalreporter.write_line(line)


def make_block(raw, query_id="q0", labels=None, answer_keys=None, kinds=None):
    import numpy as np

    raw = np.asarray(raw, dtype=np.float64)
    m = raw.shape[1]
    kinds = kinds or ["real"] * m
    manifest = Manifest(tuple(VerifierSpec(f"v{j + 1}", kinds[j], (-1.0, 1.0))
                              for j in range(m)), "test")
    rids = tuple(f"r{i}" for i in range(raw.shape[0]))
    return ScoreBlock(query_id, rids, raw, normalize_block(raw), manifest,
                      labels=None if labels is None else np.asarray(labels, dtype=np.int8),
                      answer_keys=None if answer_keys is None else tuple(answer_keys))


def make_batch(blocks):
    return Batch(tuple(blocks), blocks[0].manifest)
