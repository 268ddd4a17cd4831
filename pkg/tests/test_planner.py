import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from ntt.config import MODES
from ntt.planner import (build_params, complete_trajectory, direct_trajectory, encode_nav_instance,
                         mode_prefixes, plan, score_candidates, select_target)
from ntt.tokens import STAGE1_PREFIXES

from oracles import Dense, planner_instance

T = lambda a: torch.tensor(a, dtype=torch.float64)


def test_equation_oracles_100_instances(small_cfg):
    rng = np.random.default_rng(0)
    worst = 0.0
    for i in range(100):
        params = build_params(small_cfg, seed=i)
        D = Dense(params, small_cfg)
        nodes, ego, cands, tok, tmask, cmask = planner_instance(rng, small_cfg)
        with torch.no_grad():
            nav = encode_nav_instance(params, small_cfg, T(nodes), T(ego))
            probs = score_candidates(params, small_cfg, T(cands), nav, T(tok), torch.tensor(tmask),
                                     torch.tensor(cmask))
            target = T(cands[int(rng.integers(len(cands)))])
            traj = complete_trajectory(params, small_cfg, target, nav, T(tok), torch.tensor(tmask))
            direct = direct_trajectory(params, small_cfg, nav, T(tok), torch.tensor(tmask))
        ref_nav = D.nav(nodes, ego)
        worst = max(worst, np.abs(nav.numpy() - ref_nav).max(),
                    np.abs(probs.numpy() - D.scores(cands, ref_nav, tok, tmask, cmask)).max(),
                    np.abs(traj.numpy() - D.complete(target.numpy(), ref_nav, tok, tmask)).max(),
                    np.abs(direct.numpy() - D.complete(None, ref_nav, tok, tmask, False)).max())
    assert worst < 1e-12


def test_nav_encoding_permutation_invariant(small_cfg):
    params = build_params(small_cfg, 1)
    rng = np.random.default_rng(1)
    nodes = rng.normal(size=(10, 4))
    with torch.no_grad():
        a = encode_nav_instance(params, small_cfg, T(nodes), T([1.0, 2.0]))
        b = encode_nav_instance(params, small_cfg, T(nodes[rng.permutation(10)]), T([1.0, 2.0]))
    assert torch.allclose(a, b, atol=1e-14)
    with pytest.raises(ValueError):
        encode_nav_instance(params, small_cfg, torch.zeros(0, 4, dtype=torch.float64), T([0.0, 0.0]))


def test_distribution_sums_to_one_and_is_permutation_equivariant(small_cfg):
    rng = np.random.default_rng(2)
    for i in range(50):
        params = build_params(small_cfg, i)
        nodes, ego, cands, tok, tmask, _ = planner_instance(rng, small_cfg)
        perm = rng.permutation(len(cands))
        with torch.no_grad():
            nav = encode_nav_instance(params, small_cfg, T(nodes), T(ego))
            p = score_candidates(params, small_cfg, T(cands), nav, T(tok), torch.tensor(tmask))
            pp = score_candidates(params, small_cfg, T(cands[perm]), nav, T(tok), torch.tensor(tmask))
        assert abs(float(p.sum()) - 1) < 1e-12
        assert torch.equal(p[perm], pp)


def test_batched_scoring_matches_single(small_cfg):
    params = build_params(small_cfg, 0)
    rng = np.random.default_rng(3)
    nav = T(rng.normal(size=(3, small_cfg.d)))
    cands, tok = T(rng.normal(size=(3, 7, 2)) * 10), T(rng.normal(size=(3, 4, small_cfg.d)))
    with torch.no_grad():
        batched = score_candidates(params, small_cfg, cands, nav, tok)
        for b in range(3):
            assert torch.allclose(batched[b], score_candidates(params, small_cfg, cands[b], nav[b], tok[b]),
                                  atol=1e-14)


@given(st.lists(st.integers(0, 4), min_size=1, max_size=25))
@settings(max_examples=200)
def test_select_target_is_lowest_index_argmax(vals):
    probs = np.array(vals, dtype=float)
    coords = np.stack([np.arange(len(vals)), -np.arange(len(vals))], axis=1).astype(float)
    best = max(range(len(vals)), key=lambda i: (probs[i], -i))
    assert np.array_equal(select_target(probs, coords), coords[best])
    assert torch.equal(select_target(T(probs)[None], T(coords)[None])[0], T(coords[best]))


def test_mode_prefixes():
    for m in MODES:
        assert set(STAGE1_PREFIXES) <= set(mode_prefixes(m))
    assert "cmd_emb" in mode_prefixes("tgt_cmd") and "nav." not in mode_prefixes("tgt_cmd")
    assert not any(p.startswith("scorer.") for p in mode_prefixes("no_target"))
    with pytest.raises(ValueError):
        mode_prefixes("bogus")


def test_plan_end_to_end(tiny_dataset, small_cfg):
    scene = tiny_dataset.val[0]
    params = build_params(small_cfg, 0)
    res = plan(scene, params, small_cfg, "tgt_path")
    assert res.trajectory.points.shape == (small_cfg.k, 2)
    assert abs(res.probs.sum() - 1) < 1e-12
    assert np.array_equal(res.target, res.candidates.coords[int(np.argmax(res.probs))])
    rec = res.record(top=10)
    assert len(rec["top_candidates"]) == min(10, len(res.candidates))
    probs = [c["prob"] for c in rec["top_candidates"]]
    assert probs == sorted(probs, reverse=True)
    none = plan(scene, params, small_cfg, "no_target").record()
    assert none["target"] is None and none["top_candidates"] == []
