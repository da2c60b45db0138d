import numpy as np
import pytest

from egoact.gradcheck import (TOL, GradcheckReport, check_hlstm, check_scorer, random_hlstm_instance,
                              random_scorer_instance, rel_error, run_suite)


def test_rel_error_floor():
    assert rel_error(0.0, 0.0) == 0.0
    assert rel_error(1e-9, 0.0) == pytest.approx(1e-4)
    assert rel_error(2.0, 1.0) == 0.5


def test_small_suite_passes_and_lists_blocks():
    rep = run_suite(n_scorer=5, n_hlstm_per_beta=2, seed=3)
    assert rep.passed and rep.instances == 11
    names = set(rep.blocks)
    assert {"scorer.W_p", "scorer.W_z", "scorer.b", "level1.W_f", "level2.b_o", "shot_head.W"} <= names
    assert rep.lines()[-1].startswith("worst:")


@pytest.mark.parametrize("fault", ["scorer.W_z", "level1.W_f", "level2.W_i", "shot_head.b"])
def test_injected_sign_flip_is_caught_and_named(fault):
    rep = run_suite(n_scorer=3, n_hlstm_per_beta=2, betas=(0.5,), seed=1, fault=fault)
    assert not rep.passed
    assert rep.worst[0] == fault
    assert [k for k, v in rep.blocks.items() if v.max_rel >= TOL] == [fault]


def test_scorer_instances_have_clear_argmax():
    rng = np.random.default_rng(0)
    for _ in range(20):
        params, batch = random_scorer_instance(rng)
        for fr, _ in batch:
            S = np.sort(fr.secondaries @ params.W_z.T, axis=0)
            if S.shape[0] > 1:
                assert np.min(S[-1] - S[-2]) >= 1e-3


def test_checks_accumulate_instances():
    rng = np.random.default_rng(2)
    rep = GradcheckReport()
    check_scorer(*random_scorer_instance(rng), rep)
    params, seqs = random_hlstm_instance(rng)
    check_hlstm(params, seqs, 1.0, rep)
    assert rep.instances == 2 and rep.passed
