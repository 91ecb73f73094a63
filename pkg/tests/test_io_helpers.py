import json

import numpy as np
import pandas as pd
import pytest

from core.errors import InputError, PostprocessingError
from core.rng import RngStream
from engine.chain import SamplerConfig, run_chain
from io_helpers import (
    DRAWS_ITEMS_FILE,
    DRAWS_THETA_RESCALED_FILE,
    META_FILE,
    atomic_write_json,
    chain_meta,
    check_disk_space,
    get_config_dir,
    read_chain,
    read_responses,
    read_truth_theta,
    write_chain,
    write_responses,
    write_truth,
)
from model.state import ItemParameters, MixtureParameters, PriorSpec, RescaleSpec
from simulation import draw_abilities, simulate_responses


def _csv(tmp_path, text, name='responses.csv'):
    path = tmp_path / name
    path.write_text(text, encoding='utf-8')
    return path


# ── Responses ──

def test_read_responses_with_missing_cells(tmp_path):
    responses = read_responses(_csv(tmp_path, "q1,q2,q3\n1,0,NA\n0, 1 ,1\n1,,0\n"))
    assert responses.item_names == ('q1', 'q2', 'q3')
    np.testing.assert_array_equal(responses.observed, [[1, 1, 0], [1, 1, 1], [1, 0, 1]])
    np.testing.assert_array_equal(responses.values, [[1, 0, 0], [0, 1, 1], [1, 0, 0]])


def test_read_responses_names_bad_cell(tmp_path):
    with pytest.raises(InputError) as info:
        read_responses(_csv(tmp_path, "q1,q2\n1,0\n0,yes\n"))
    assert (info.value.row, info.value.column) == (2, 'q2')
    assert 'responses.csv' in str(info.value)


@pytest.mark.parametrize('text, message', [
    ('', 'empty'),
    ('q1,q2\n', 'no rows'),
    ('q1,q2\nNA,NA\n1,0\n', 'no items'),
])
def test_read_responses_rejects_degenerate_files(tmp_path, text, message):
    with pytest.raises(InputError, match=message):
        read_responses(_csv(tmp_path, text))


def test_read_responses_missing_file(tmp_path):
    with pytest.raises(InputError, match='not found'):
        read_responses(tmp_path / 'absent.csv')


def test_write_responses_uses_na_token(tmp_path, tiny_responses):
    path = write_responses(tmp_path / 'out.csv', tiny_responses)
    lines = path.read_text(encoding='utf-8').splitlines()
    assert lines[0] == 'item_1,item_2,item_3'
    assert lines[3] == '1,1,NA'
    again = read_responses(path)
    np.testing.assert_array_equal(again.observed, tiny_responses.observed)
    np.testing.assert_array_equal(again.values, tiny_responses.values)


# ── Truth ──

def test_truth_files(tmp_path, study1_mixture):
    items = ItemParameters(a=[1.0, 2.0], b=[0.0, 0.5], c=[0.1, 0.2])
    theta, W = draw_abilities(study1_mixture, 30, RngStream(1))
    paths = write_truth(tmp_path, items, theta, W, study1_mixture, ('q1', 'q2'))
    assert [p.name for p in paths] == ['truth_items.csv', 'truth_theta.csv', 'truth_mixture.csv']
    np.testing.assert_allclose(read_truth_theta(tmp_path), theta, rtol=1e-12)
    components = pd.read_csv(tmp_path / 'truth_theta.csv')['component']
    assert set(components) <= {1, 2}


def test_truth_theta_missing(tmp_path):
    with pytest.raises(PostprocessingError):
        read_truth_theta(tmp_path)


# ── Draws ──

@pytest.fixture(scope='module')
def fitted(tmp_path_factory):
    gen_items = ItemParameters(a=np.full(5, 1.2), b=np.linspace(-1, 1, 5), c=np.full(5, 0.15))
    theta, _ = draw_abilities(MixtureParameters(p=[0.8, 0.2], mu=[0.0, 2.5], sigma2=[1.0, 0.25]), 40, RngStream(2))
    responses = simulate_responses(gen_items, theta, RngStream(3))
    config = SamplerConfig(iterations=24, burn_in=4, seed=5, progress_every=0)
    chain = run_chain(responses, PriorSpec(), 2, config)
    out_dir = tmp_path_factory.mktemp('fit')
    write_chain(out_dir, chain, RescaleSpec(m=50.0, s=10.0))
    atomic_write_json(out_dir / META_FILE, chain_meta(chain))
    return chain, out_dir


def test_read_chain_reproduces_draws_exactly(fitted):
    chain, out_dir = fitted
    restored = read_chain(out_dir)
    for name in ('a', 'b', 'c', 'p', 'mu', 'sigma2', 'theta', 'iterations'):
        np.testing.assert_array_equal(getattr(restored, name), getattr(chain, name))
    assert restored.options == chain.options
    assert restored.config == chain.config
    assert restored.priors == chain.priors
    assert restored.acceptance_rates() == chain.acceptance_rates()


def test_rescaled_draws_file(fitted):
    chain, out_dir = fitted
    frame = pd.read_csv(out_dir / DRAWS_THETA_RESCALED_FILE, float_precision='round_trip')
    expected = chain.rescaled_theta(RescaleSpec(m=50.0, s=10.0))
    np.testing.assert_allclose(frame.drop(columns='iteration').to_numpy(), expected)


def test_meta_is_json(fitted):
    _, out_dir = fitted
    meta = json.loads((out_dir / META_FILE).read_text(encoding='utf-8'))
    assert meta['K'] == 2
    assert meta['retained_draws'] == 20
    assert set(meta['acceptance_rates']) == {'ab', 'p'}


def test_read_chain_rejects_empty_draw_file(fitted, tmp_path):
    _, out_dir = fitted
    for source in out_dir.iterdir():
        (tmp_path / source.name).write_bytes(source.read_bytes())
    (tmp_path / DRAWS_ITEMS_FILE).write_text('', encoding='utf-8')
    with pytest.raises(PostprocessingError, match='empty'):
        read_chain(tmp_path)


def test_read_chain_needs_meta(tmp_path):
    with pytest.raises(PostprocessingError, match='metadata'):
        read_chain(tmp_path)


# ── Filesystem ──

def test_atomic_write_leaves_no_temp_file(tmp_path):
    atomic_write_json(tmp_path / 'x.json', {'a': 1})
    assert json.loads((tmp_path / 'x.json').read_text(encoding='utf-8')) == {'a': 1}
    assert not list(tmp_path.glob('*.tmp'))


def test_atomic_write_into_missing_directory_raises(tmp_path):
    with pytest.raises(OSError):
        atomic_write_json(tmp_path / 'absent' / 'x.json', {})
    assert not (tmp_path / 'absent').exists()


def test_config_dir_override(config_dir):
    assert get_config_dir() == str(config_dir)
    assert config_dir.is_dir()


def test_disk_space_reports_megabytes(tmp_path):
    enough, available_mb = check_disk_space(tmp_path, 1)
    assert enough
    assert available_mb > 0
