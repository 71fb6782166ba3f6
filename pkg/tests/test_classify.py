import logging
import math

import numpy as np
import pytest

from lbpsdg.classify import (BinaryMachine, DegenerateFoldError, EvalReport, KernelSpec, SvmModel, auto_gamma,
                             kernel_matrix, kernel_value, loso_evaluate, loso_splits, relative_rr, smo_solve, train)


def blobs(n_per, centers, seed=0, spread=0.3):
    rng = np.random.default_rng(seed)
    x, y = [], []
    for k, c in enumerate(centers):
        x.append(rng.normal(c, spread, (n_per, len(c))))
        y += [f"c{k}"] * n_per
    return np.abs(np.vstack(x)), y


def test_kernel_examples():
    assert kernel_value([1, 2], [3, 1], KernelSpec("linear")) == 5
    a = np.array([0.2, 0.3, 0.5])
    assert kernel_value(a, a, KernelSpec("chi_square", gamma=0.7)) == 1.0
    assert kernel_value([1, 0], [0, 1], KernelSpec("chi_square", gamma=1.0)) == pytest.approx(math.exp(-2))


def test_kernel_errors():
    with pytest.raises(ValueError, match="mismatch"):
        kernel_value([1, 2], [1, 2, 3], KernelSpec("linear"))
    with pytest.raises(ValueError, match="non-negative"):
        kernel_matrix([[1.0, -1.0]], [[1.0, 1.0]], "chi_square", 1.0)
    with pytest.raises(ValueError):
        KernelSpec("rbf")
    with pytest.raises(ValueError):
        KernelSpec("linear", c=0)


def test_chi_square_kernel_psd():
    rng = np.random.default_rng(0)
    x = rng.dirichlet(np.ones(12), size=30)
    K = kernel_matrix(x, x, "chi_square", auto_gamma(x))
    assert np.allclose(K, K.T)
    assert np.linalg.eigvalsh(K).min() > -1e-9
    assert np.allclose(np.diag(K), 1.0)


def test_auto_gamma_definition():
    x = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    d01 = 2.0
    d02 = 1.0
    d12 = 1.0
    assert auto_gamma(x) == pytest.approx(3 / (d01 + d02 + d12))


@pytest.mark.parametrize("kind", ["linear", "chi_square"])
def test_smo_satisfies_kkt(kind):
    x, lab = blobs(15, [(1, 2, 1), (2, 1, 1.5)], seed=1, spread=0.6)
    y = np.where(np.array(lab) == "c0", 1.0, -1.0)
    K = kernel_matrix(x, x, kind, None if kind == "linear" else auto_gamma(x))
    c = 1.0
    alpha, rho, _ = smo_solve(K, y, c, tol=1e-6)
    assert abs(alpha @ y) < 1e-8
    assert (alpha >= -1e-12).all() and (alpha <= c + 1e-12).all()
    margin = y * (K @ (alpha * y) - rho)
    tol = 1e-3
    assert (margin[alpha < 1e-9] >= 1 - tol).all()
    assert (margin[alpha > c - 1e-9] <= 1 + tol).all()
    free = (alpha > 1e-9) & (alpha < c - 1e-9)
    assert np.allclose(margin[free], 1, atol=tol)


@pytest.mark.parametrize("kind", ["linear", "chi_square"])
def test_separable_blobs_perfect(kind):
    x, y = blobs(20, [(1, 1, 5), (5, 1, 1), (1, 5, 1)])
    model = train(x, y, KernelSpec(kind, c=10))
    assert model.predict(x) == y
    assert len(model.machines) == 3


def test_training_deterministic():
    x, y = blobs(10, [(1, 1), (2, 2)], seed=3, spread=0.8)
    a = train(x, y, KernelSpec("chi_square"))
    b = train(x, y, KernelSpec("chi_square"))
    assert a.gamma == b.gamma
    for ma, mb in zip(a.machines, b.machines):
        assert ma.coef.tobytes() == mb.coef.tobytes() and ma.rho == mb.rho


def test_vote_tie_goes_to_lowest_class():
    # constant decisions forming a cycle: a beats b, c beats a, b beats c
    def machine(pos, neg, rho):
        return BinaryMachine(pos, neg, np.array([0]), np.array([0.0]), rho, 0)

    model = SvmModel(["a", "b", "c"], "linear", None, 1.0, np.ones((1, 1)),
                     [machine(0, 1, -1.0), machine(0, 2, 1.0), machine(1, 2, -1.0)])
    assert model.decision_votes([[5.0]]).tolist() == [[1, 1, 1]]
    assert model.predict([[5.0]]) == ["a"]


def test_train_errors():
    with pytest.raises(ValueError, match="two classes"):
        train([[1.0], [2.0]], ["a", "a"], KernelSpec())
    with pytest.raises(ValueError, match="non-finite"):
        train([[1.0], [np.nan]], ["a", "b"], KernelSpec())
    with pytest.raises(ValueError, match="length"):
        train([[1.0]], ["a", "b"], KernelSpec())


def test_non_convergence_logged(caplog):
    x, y = blobs(20, [(1, 1), (1.2, 1.1)], seed=2, spread=1.0)
    yy = np.where(np.array(y) == "c0", 1.0, -1.0)
    with caplog.at_level(logging.WARNING, logger="lbpsdg.classify"):
        smo_solve(x @ x.T, yy, 100.0, tol=1e-12, max_iter=3)
    assert "max_iter" in caplog.text


def test_one_hot_features_rr_one():
    classes = ["neg", "pos", "sur"]
    feats, labels, subjects = [], [], []
    for s in range(6):
        for k, c in enumerate(classes):
            f = np.zeros(3)
            f[k] = 1.0
            feats.append(f)
            labels.append(c)
            subjects.append(f"s{s}")
    rep = loso_evaluate(feats, labels, subjects, KernelSpec("linear"))
    assert rep.overall_rr == 1.0
    assert rep.confusion.tolist() == [[6, 0, 0], [0, 6, 0], [0, 0, 6]]


def test_loso_fold_structure():
    rng = np.random.default_rng(0)
    subjects = [f"sub{rng.integers(26):02d}" for _ in range(255)]
    subjects[:26] = [f"sub{i:02d}" for i in range(26)]
    labels = [["a", "b", "c"][i % 3] for i in range(255)]
    feats = rng.uniform(0, 1, (255, 4))
    splits = list(loso_splits(subjects))
    assert len(splits) == 26
    assert [s for s, _, _ in splits] == sorted(set(subjects))
    tested = np.concatenate([te for _, _, te in splits])
    assert sorted(tested.tolist()) == list(range(255))
    for s, tr, te in splits:
        assert s not in {subjects[i] for i in tr}
    rep = loso_evaluate(feats, labels, subjects, KernelSpec("linear"))
    assert len(rep.folds) == 26 and rep.confusion.sum() == 255
    assert rep.overall_rr == pytest.approx(np.trace(rep.confusion) / 255, abs=1e-12)


def test_rr_is_pooled_not_macro():
    # fold sizes 1 and 3 separate the two averages
    feats = [[1, 0], [0, 1], [1, 0], [0, 1], [1, 0], [0, 1], [0.9, 0.1]]
    labels = ["a", "b", "a", "b", "a", "b", "b"]
    subjects = ["x", "x", "y", "y", "z", "z", "w"]
    rep = loso_evaluate(feats, labels, subjects, KernelSpec("linear", c=10))
    assert rep.overall_rr == pytest.approx(6 / 7)
    assert rep.macro_fold_rr == pytest.approx(3 / 4)


def test_loso_invariant_to_sample_permutation():
    x, y = blobs(12, [(1, 2), (2, 1)], seed=4, spread=0.7)
    subj = [f"s{i % 4}" for i in range(len(y))]
    perm = np.random.default_rng(1).permutation(len(y))
    a = loso_evaluate(x, y, subj, KernelSpec("chi_square"))
    b = loso_evaluate(x[perm], [y[i] for i in perm], [subj[i] for i in perm], KernelSpec("chi_square"))
    assert np.array_equal(a.confusion, b.confusion)


def test_degenerate_fold():
    feats = [[1.0, 0], [0, 1.0], [1.0, 0.1], [0.2, 1.0]]
    labels = ["a", "b", "a", "a"]
    subjects = ["s1", "s1", "s2", "s3"]  # holding out s1 leaves only class a
    with pytest.raises(DegenerateFoldError, match="s1"):
        loso_evaluate(feats, labels, subjects, KernelSpec())
    rep = loso_evaluate(feats, labels, subjects, KernelSpec(), skip_degenerate=True)
    assert rep.folds[0].skipped and rep.confusion.sum() == 2


def test_single_subject_rejected():
    with pytest.raises(ValueError, match="two subjects"):
        loso_evaluate([[1.0], [2.0]], ["a", "b"], ["s", "s"], KernelSpec())


def test_relative_rr():
    assert relative_rr(0.6968, 0.6480) == pytest.approx(0.0488, abs=1e-12)
    assert relative_rr(0.5, 0.5) == 0
    with pytest.raises(ValueError):
        relative_rr(1.2, 0.5)


def test_report_dict():
    rep = EvalReport(["a", "b"], np.array([[2, 1], [0, 3]]), [])
    d = rep.to_dict()
    assert d["overall_rr"] == pytest.approx(5 / 6)
    assert d["confusion"] == [[2, 1], [0, 3]]
