from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from learnfam.data import Dataset
from learnfam.errors import InsufficientGroups
from learnfam.modelsel import Candidate, cross_validate, fit_fold, fold_assignment, held_out_pairs
from learnfam.sim import LAPLACE_STUDY, SimConfig, generate
from learnfam.spectral import eval_T


@pytest.fixture(scope="module")
def laplace():
    return generate(dataclasses.replace(LAPLACE_STUDY, m=1000, n=200, theta_sd=0.2, seed=3))


def test_folds_balanced_and_reproducible():
    a = fold_assignment(23, 5, seed=1)
    assert np.array_equal(a, fold_assignment(23, 5, seed=1))
    counts = np.bincount(a, minlength=5)
    assert counts.max() - counts.min() <= 1


def test_consecutive_pairing():
    assert held_out_pairs([9, 2, 4, 7, 3]) == [(2, 3), (4, 7)]


def test_identical_candidates_pick_first(laplace):
    rep = cross_validate(laplace, [Candidate.spline(5), Candidate.spline(5)], folds=2, seed=0)
    assert rep.rejections[0] == rep.rejections[1]
    assert rep.chosen == 0


def test_richer_basis_beats_df3(laplace):
    rep = cross_validate(laplace, [Candidate.spline(3), Candidate.spline(11), Candidate.spline(25)], seed=0)
    assert max(rep.rejections[1], rep.rejections[2]) > rep.rejections[0]
    assert rep.best.df in (11, 25)


def test_null_data_rejects_at_alpha():
    data = generate(SimConfig("laplace", m=2000, n=100, theta_sd=0.0, seed=4))
    rep = cross_validate(data, [Candidate.spline(3), Candidate.spline(11)], folds=5, seed=1)
    for r in rep.rejections:
        # 1000 null pairs at alpha = 0.05; 99.9% binomial band
        assert 25 <= r <= 78


def test_no_leakage(laplace):
    # the fit for a fold must not change when that fold's data are altered
    assign = fold_assignment(laplace.m, 5, seed=0)
    train = np.flatnonzero(assign != 0)
    test = np.flatnonzero(assign == 0)
    before = fit_fold(laplace, Candidate.spline(11), train)
    vals = laplace.values.copy()
    held = np.isin(laplace.group, test)
    vals[held] = vals[held] * 3 + 100
    perturbed = Dataset(vals, laplace.group, laplace.labels)
    after = fit_fold(perturbed, Candidate.spline(11), train)
    grid = np.linspace(-3, 3, 61)
    assert np.array_equal(eval_T(before, grid), eval_T(after, grid))


def test_too_many_folds(laplace):
    small = laplace.subset(np.arange(9))
    with pytest.raises(InsufficientGroups):
        cross_validate(small, [Candidate.spline(3), Candidate.spline(5)], folds=5)


def test_csv_export(tmp_path, laplace):
    rep = cross_validate(laplace.subset(np.arange(200)), [Candidate.spline(3), Candidate.spline(7)], folds=2)
    path = tmp_path / "cv.csv"
    rep.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "basis,df,rejections,chosen"
    assert sum(int(line.split(",")[-1]) for line in lines[1:]) == 1


def test_deterministic(laplace):
    small = laplace.subset(np.arange(300))
    cands = [Candidate.spline(3), Candidate.spline(7)]
    a = cross_validate(small, cands, folds=3, seed=5)
    b = cross_validate(small, cands, folds=3, seed=5, workers=2)
    assert a.rejections == b.rejections and a.chosen == b.chosen
