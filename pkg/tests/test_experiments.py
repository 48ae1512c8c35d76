import numpy as np

from branchsim.config import preset, replace
from branchsim.experiments import CHUNK, chunk_rng, chunks, run


def test_chunks_cover_replicas():
    parts = chunks(12_345)
    assert sum(n for _, n in parts) == 12_345
    assert [c for c, _ in parts] == list(range(len(parts)))
    assert all(n == CHUNK for _, n in parts[:-1])


def test_chunk_streams_are_independent_of_order():
    a = chunk_rng(1, 1, 3).random(5)
    chunk_rng(1, 1, 2).random(5)
    assert np.array_equal(a, chunk_rng(1, 1, 3).random(5))
    assert not np.array_equal(a, chunk_rng(1, 2, 3).random(5))


def _cfg(tmp_path, name, **kw):
    return replace(preset(name), output_dir=str(tmp_path), **kw)


def test_forest_run_independent_of_workers(tmp_path):
    cfg = _cfg(tmp_path, "case-a", replicas=2 * CHUNK + 500, t_grid=(5.0, 10.0, 20.0))
    one = run(cfg, workers=1, write=False)
    many = run(cfg, workers=3, write=False)
    assert one["estimates"] == many["estimates"]
    assert one["checks"] == many["checks"]


def test_renewal_run_independent_of_workers(tmp_path):
    cfg = _cfg(tmp_path, "renewal-only", replicas=CHUNK + 10, t_grid=(10.0, 100.0, 1000.0))
    assert run(cfg, workers=1, write=False)["estimates"] == run(cfg, workers=2, write=False)["estimates"]


def test_same_seed_same_report(tmp_path):
    cfg = _cfg(tmp_path, "finite-mean-subcritical", replicas=400, t_grid=(5.0, 10.0, 20.0))
    a, b = run(cfg, write=False), run(cfg, write=False)
    assert a["estimates"] == b["estimates"]
    c = run(replace(cfg, seed=cfg.seed + 1), write=False)
    assert c["estimates"] != a["estimates"]


def test_infinite_variance_offspring_skips_conservation(tmp_path):
    rep = run(_cfg(tmp_path, "case-a", replicas=300, t_grid=(5.0, 10.0, 20.0)), write=False)
    cons = next(c for c in rep["checks"] if c["id"] == "population-conservation")
    assert cons["skipped"] and cons["passed"] is None
    assert rep["predicted"]["critical_dimensions"]["regime"] == "CaseA"
