import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.special import ndtr

from lscox.grf import MaternSpec
from lscox.model import CONSTANT, ClassSpec, FIXED_EFFECTS, GAUSSIAN, \
    LevelSpec, LscpModel, Thresholds, assemble_log_intensity, \
    class_probabilities, classify


def two_class_model(sigma_eps=0.1):
    return LscpModel(
        level=LevelSpec(field=MaternSpec(1.0, 0.5, 1.0)),
        thresholds=Thresholds((0.0,)),
        sigma_eps=sigma_eps,
        classes=(
            ClassSpec(GAUSSIAN, field=MaternSpec(1.0, 0.4, 1.0), mean=5.0),
            ClassSpec(CONSTANT, mean=4.0),
        ),
    )


def test_thresholds_edges_and_validation():
    t = Thresholds((-1.0, 0.5))
    assert t.n_classes == 3
    assert t.edges[0] == -np.inf and t.edges[-1] == np.inf
    assert_allclose(t.edges[1:3], [-1.0, 0.5])
    with pytest.raises(ValueError):
        Thresholds((0.5, 0.5))
    with pytest.raises(ValueError):
        Thresholds((1.0, -1.0))


def test_class_spec_validation():
    with pytest.raises(ValueError):
        ClassSpec("mystery")
    with pytest.raises(ValueError):
        ClassSpec(GAUSSIAN)  # needs a field
    with pytest.raises(ValueError):
        ClassSpec(CONSTANT, field=MaternSpec(1.0, 0.3))
    with pytest.raises(ValueError):
        ClassSpec(FIXED_EFFECTS)  # needs coefficients
    c = ClassSpec(FIXED_EFFECTS, beta=[1.0, -0.5])
    assert not c.has_field
    assert c.cov(0.0) == 0.0


def test_level_spec_unit_variance_enforced():
    with pytest.raises(ValueError):
        LevelSpec(field=MaternSpec(2.0, 0.5, 1.0))


def test_model_class_threshold_count_mismatch():
    with pytest.raises(ValueError):
        LscpModel(level=LevelSpec(field=MaternSpec(1.0, 0.5)),
                  thresholds=Thresholds((0.0,)),
                  sigma_eps=0.0,
                  classes=(ClassSpec(CONSTANT, mean=1.0),) * 3)


def test_model_requires_covariates_for_beta():
    with pytest.raises(ValueError):
        LscpModel(level=LevelSpec(field=MaternSpec(1.0, 0.5)),
                  thresholds=Thresholds(()),
                  sigma_eps=0.0,
                  classes=(ClassSpec(FIXED_EFFECTS, beta=[1.0]),))


def test_class_mean_surfaces():
    cov = np.stack([np.full((2, 3), 2.0), np.arange(6.0).reshape(2, 3)])
    model = LscpModel(
        level=LevelSpec(field=MaternSpec(1.0, 0.5)),
        thresholds=Thresholds((0.0,)),
        sigma_eps=0.0,
        classes=(
            ClassSpec(FIXED_EFFECTS, beta=[1.0, 0.5]),
            ClassSpec(CONSTANT, mean=3.0),
        ),
        covariates=cov,
    )
    surf = model.class_mean(0)
    assert_allclose(surf, 2.0 + 0.5 * np.arange(6.0).reshape(2, 3))
    assert model.class_mean(1) == 3.0
    stack = model.mean_stack((2, 3))
    assert stack.shape == (2, 2, 3)
    assert_allclose(stack[1], 3.0)


def test_class_probabilities_sum_to_one():
    t = Thresholds((-0.5, 0.7))
    v = np.linspace(-3, 3, 50).reshape(5, 10)
    p = class_probabilities(v, t, sigma_eps=0.3)
    assert p.shape == (3, 5, 10)
    assert_allclose(p.sum(axis=0), 1.0, atol=1e-12)
    assert (p >= 0).all()


def test_class_probabilities_probit_values():
    t = Thresholds((0.0,))
    p = class_probabilities(np.array([0.2]), t, sigma_eps=0.5)
    # P(class 0) = Phi((0 - 0.2)/0.5)
    assert_allclose(p[0, 0], ndtr(-0.4))
    assert_allclose(p[1, 0], 1.0 - ndtr(-0.4))


def test_class_probabilities_degenerate_nugget():
    t = Thresholds((0.0, 1.0))
    v = np.array([-0.3, 0.0, 0.4, 1.0, 1.5])
    p = class_probabilities(v, t, sigma_eps=0.0)
    # upper edge closed: values exactly at a threshold take the lower class
    assert_allclose(p[:, 0], [1, 0, 0])
    assert_allclose(p[:, 1], [1, 0, 0])
    assert_allclose(p[:, 2], [0, 1, 0])
    assert_allclose(p[:, 3], [0, 1, 0])
    assert_allclose(p[:, 4], [0, 0, 1])


def test_classify_matches_degenerate_probabilities():
    t = Thresholds((-0.2, 0.9))
    v = np.array([[-1.0, -0.2], [0.3, 2.0]])
    labels = classify(v, t)
    assert labels.tolist() == [[0, 0], [1, 2]]
    p = class_probabilities(v, t, sigma_eps=0.0)
    assert_allclose(np.argmax(p, axis=0), labels)


def test_assemble_log_intensity_selects_by_class():
    fields = np.stack([np.full((2, 2), 1.0), np.full((2, 2), 10.0)])
    means = np.stack([np.full((2, 2), 0.5), np.full((2, 2), -1.0)])
    gamma = np.array([[0, 1], [1, 0]])
    out = assemble_log_intensity(fields, means, gamma)
    assert_allclose(out, [[1.5, 9.0], [9.0, 1.5]])
    with pytest.raises(ValueError):
        assemble_log_intensity(fields, means, np.array([[0, 2], [0, 0]]))
    with pytest.raises(ValueError):
        assemble_log_intensity(fields, means[:1], gamma)


def test_model_accessors():
    model = two_class_model()
    assert model.n_classes == 2
    assert model.classes[0].has_field
    assert not model.classes[1].has_field
    with pytest.raises(ValueError):
        two_class_model(sigma_eps=-0.1)
