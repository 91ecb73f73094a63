import numpy as np
import pytest

from core.errors import DomainError
from core.rng import RngStream
from model.evaluation import icc, mixture_mean, mixture_sd
from model.state import ItemParameters, MixtureParameters, ModelOptions, PriorSpec
from simulation import (
    ItemGenerator,
    SimulationDesign,
    design_from_settings,
    draw_prior_mixture,
    draw_prior_state,
    missing_mask,
    simulate_dataset,
)


def test_same_design_same_dataset(study1_mixture):
    design = SimulationDesign(J=300, I=10, mixture=study1_mixture, missing_rate=0.2, seed=5)
    first, truth_1 = simulate_dataset(design)
    second, truth_2 = simulate_dataset(design)
    np.testing.assert_array_equal(first.values, second.values)
    np.testing.assert_array_equal(first.observed, second.observed)
    np.testing.assert_array_equal(truth_1.theta, truth_2.theta)
    np.testing.assert_array_equal(truth_1.items.c, truth_2.items.c)


def test_seed_changes_dataset(study1_mixture):
    a, _ = simulate_dataset(SimulationDesign(J=200, I=10, mixture=study1_mixture, seed=1))
    b, _ = simulate_dataset(SimulationDesign(J=200, I=10, mixture=study1_mixture, seed=2))
    assert not np.array_equal(a.values, b.values)


def test_near_certain_guessing_answers_everything():
    items = ItemParameters(a=[1.0, 1.0], b=[0.0, 0.0], c=[1 - 1e-12, 0.2])
    design = SimulationDesign(J=500, I=2, mixture=MixtureParameters.standard_normal(), items=items)
    responses, truth = simulate_dataset(design)
    assert np.all(responses.values[:, 0] == 1)
    assert truth.items is items


def test_study1_ability_moments(study1_mixture):
    design = SimulationDesign(J=5000, I=5, mixture=study1_mixture, seed=11)
    _, truth = simulate_dataset(design)
    assert truth.theta.mean() == pytest.approx(mixture_mean(study1_mixture), abs=0.06)
    assert truth.theta.var() == pytest.approx(mixture_sd(study1_mixture) ** 2, abs=0.12)
    assert np.mean(truth.W == 1) == pytest.approx(0.2, abs=0.03)


def test_missing_rate_matches_design(study1_mixture):
    design = SimulationDesign(J=2000, I=109, mixture=study1_mixture, missing_rate=0.67, seed=3)
    responses, _ = simulate_dataset(design)
    per_person = responses.observed.sum(axis=1)
    assert per_person.mean() == pytest.approx(109 * 0.33, abs=0.5)
    assert responses.n_observed == int(responses.observed.sum())


def test_missing_mask_keeps_every_row_and_column():
    observed = missing_mask(50, 3, 0.95, RngStream(2))
    assert observed.any(axis=1).all()
    assert observed.any(axis=0).all()


def test_responses_follow_icc():
    items = ItemParameters(a=np.full(20, 1.3), b=np.full(20, 0.2), c=np.full(20, 0.2))
    design = SimulationDesign(J=20_000, I=20, mixture=MixtureParameters.standard_normal(), items=items, seed=8)
    responses, truth = simulate_dataset(design)
    prob = icc(truth.theta, 1.3, 0.2, 0.2)
    edges = np.quantile(truth.theta, np.linspace(0, 1, 11))
    bins = np.clip(np.searchsorted(edges, truth.theta, side='right') - 1, 0, 9)
    for k in range(10):
        rows = bins == k
        freq = responses.values[rows].mean()
        expected = prob[rows].mean()
        se = np.sqrt(np.sum(prob[rows] * (1 - prob[rows])) * 20) / (rows.sum() * 20)
        assert abs(freq - expected) < 4 * se


def test_unidentified_truth_needs_flag():
    mixture = MixtureParameters(p=[0.4, 0.6], mu=[0.0, 1.0], sigma2=[1.0, 1.0])
    with pytest.raises(DomainError, match='unidentified_truth'):
        SimulationDesign(J=10, I=2, mixture=mixture)
    design = SimulationDesign(J=10, I=2, mixture=mixture, unidentified_truth=True)
    responses, _ = simulate_dataset(design)
    assert responses.J == 10


@pytest.mark.parametrize('kwargs', [{'J': 0}, {'missing_rate': 1.0}])
def test_design_validation(kwargs):
    base = {'J': 10, 'I': 2, 'mixture': MixtureParameters.standard_normal()}
    with pytest.raises(DomainError):
        SimulationDesign(**(base | kwargs))


def test_item_generator_respects_model_and_bounds():
    priors = PriorSpec(c_lower=0.0, c_upper=0.15)
    items = ItemGenerator.from_priors(priors).draw(500, RngStream(1))
    assert np.all(items.c < 0.15)
    assert np.all(items.a > 0)
    one_pl = ItemGenerator(item_model='1pno').draw(50, RngStream(1))
    assert np.all(one_pl.a == 1.0)
    assert np.all(one_pl.c == 0.0)
    assert np.all(ItemGenerator(item_model='2pno').draw(50, RngStream(1)).c == 0.0)


def test_prior_mixture_is_identified():
    priors = PriorSpec(nig_beta=1.0, nig_d=3.0, nig_e=2.0)
    root = RngStream(12)
    for t in range(200):
        mixture = draw_prior_mixture(priors, ModelOptions(K=3), root.substream(t))
        mixture.check_identified()


def test_prior_state_shapes():
    items, mixture, theta, W = draw_prior_state(PriorSpec(nig_beta=1.0, nig_d=3.0, nig_e=2.0), ModelOptions(K=2), 40, 6, RngStream(4))
    assert items.I == 6
    assert theta.shape == W.shape == (40,)
    assert mixture.K == 2
    assert set(np.unique(W)) <= {0, 1}


def test_design_from_settings_overrides():
    settings = {'J': 5000, 'I': 50, 'p': [0.8, 0.2], 'mu': [0.0, 2.5], 'sigma2': [1.0, 0.25]}
    design = design_from_settings(settings, seed=3, J=100, missing_rate=0.1)
    assert (design.J, design.I, design.missing_rate, design.seed) == (100, 50, 0.1, 3)
    with pytest.raises(DomainError, match='sigma2'):
        design_from_settings({'J': 10, 'I': 2, 'p': [1.0], 'mu': [0.0]}, seed=1)
