import json

import numpy as np
import pytest

from rieszEL.cli import config_hash, main, parse_args
from rieszEL.common.kernels import PowerLaw
from rieszEL.common.measures import GridDensity


@pytest.fixture
def semicircle_csv(tmp_path):
    path = tmp_path / 'semicircle.csv'
    GridDensity.from_function(
        lambda x: np.sqrt(np.maximum(2 - x**2, 0)) / np.pi, -2, 2,
        401).to_csv(str(path))
    return str(path)


@pytest.fixture
def uniform_csv(tmp_path):
    path = tmp_path / 'uniform.csv'
    GridDensity(-1, 1, np.full(201, 0.5)).to_csv(str(path))
    return str(path)


def test_check_kernel_exit_codes():
    assert main(['check-kernel', '--alpha', '2', '--lambda', '0']) == 0
    assert main(['check-kernel', '--alpha', '2', '--lambda', '1.5']) == 2, \
        "lambda outside (-1, min(1, alpha)) is a usage error"


def test_usage_errors_exit_with_two():
    assert main(['minimize', '--n', '10']) == 2
    assert main(['check-lemmas', '--trials', '0']) == 2
    assert main(['no-such-command']) == 2
    assert main(['verify-el']) == 2, "--density is required"


def test_verify_el_writes_outputs(tmp_path, semicircle_csv):
    out = tmp_path / 'run'
    assert main(['verify-el', '--density', semicircle_csv, '--out',
                 str(out)]) == 0
    manifest = json.loads((out / 'manifest.json').read_text())
    assert manifest['command'] == 'verify-el'
    assert set(manifest['outputs']) >= {'potential.csv', 'el_report.json'}
    report = json.loads((out / 'el_report.json').read_text())
    assert report['passed']


def test_uniform_density_is_a_negative_verdict(uniform_csv):
    assert main(['verify-el', '--density', uniform_csv]) == 1
    assert main(['regularity', '--density', uniform_csv]) == 1


def test_json_flag_prints_the_report(capsys, semicircle_csv):
    assert main(['essential-limits', '--density', semicircle_csv, '--xbar',
                 '0.5', '--json']) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload['point'] == 0.5
    assert payload['h_L'] < 0.05


def test_config_file_is_overridden_by_command_line(tmp_path):
    cfg = tmp_path / 'config.json'
    cfg.write_text('{"trials": 0, "lemma": "convex"}')
    assert main(['check-lemmas', '--load_config', str(cfg)]) == 2
    args = parse_args(['check-lemmas', '--load_config', str(cfg),
                       '--trials', '3'])
    assert args.trials == 3 and args.lemma == 'convex'


def test_unreadable_config_file(tmp_path):
    assert main(['check-kernel', '--load_config',
                 str(tmp_path / 'missing.json')]) == 2


def test_config_hash_ignores_output_options():
    a = parse_args(['check-kernel', '--alpha', '3'])
    b = parse_args(['check-kernel', '--alpha', '3', '--json', '--out', 'x'])
    c = parse_args(['check-kernel', '--alpha', '2'])
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(c)


def test_replay_of_malformed_instance(tmp_path):
    path = tmp_path / 'bad.json'
    path.write_text(json.dumps({'lemma': 'convex', 'x': 1.0}))
    assert main(['check-lemmas', '--replay', str(path)]) == 2


def test_mollify_command(tmp_path, uniform_csv):
    out = tmp_path / 'moll'
    assert main(['mollify', '--density', uniform_csv, '--delta', '0.1',
                 '--check-bound', '--out', str(out)]) == 0
    report = json.loads((out / 'mollify.json').read_text())
    assert report['max_derivative'] <= report['derivative_bound']
    assert (out / 'mollified.csv').exists()
    assert main(['mollify', '--density', uniform_csv, '--delta',
                 '0.01']) == 2, "delta below four grid cells"


def test_second_derivative_command(tmp_path):
    path = tmp_path / 'F.json'
    path.write_text(json.dumps({'lo': -1, 'hi': 1, 'terms': [
        {'kind': 'bump', 'a': 1.0, 'm': 0.0, 'w': 1.0}]}))
    assert main(['second-derivative', '--function', str(path), '--x',
                 '0']) == 0
    assert main(['second-derivative']) == 2


def test_ladder_needs_a_jump(uniform_csv):
    assert main(['build-ladder', '--density', uniform_csv, '--xbar',
                 '0']) == 2


def test_replay_with_decomposition(tmp_path):
    path = tmp_path / 'instance.json'
    path.write_text(json.dumps({
        'lemma': 'convex', 'kernel': PowerLaw(2, 0).spec(), 'x': 0.7,
        'decompose': True,
        'function': {'alpha': 0.0, 'beta': 0.5, 'critical': ['beta'],
                     'terms': [{'kind': 'bump', 'a': 1.0, 'm': 0.25,
                                'w': 0.25}]}
    }))
    out = tmp_path / 'replay'
    assert main(['check-lemmas', '--replay', str(path), '--out',
                 str(out)]) == 0
    replayed = json.loads((out / 'replay.json').read_text())
    pieces = replayed['instances'][0]['result']['pieces']
    assert [p['kind'] for p in pieces] == ['increasing', 'decreasing']
    assert all(p['agree'] for p in pieces)


def test_check_lemmas_on_sampled_function(tmp_path):
    t = np.linspace(0.0, 0.5, 11)
    path = tmp_path / 'F.csv'
    np.savetxt(path, np.column_stack([t, t * (0.5 - t)**2]), delimiter=',',
               header='t,F', comments='')
    out = tmp_path / 'single'
    assert main(['check-lemmas', '--function', str(path), '--lemma',
                 'convex', '--critical', 'beta', '--at', '0.7', '--out',
                 str(out)]) == 0
    report = json.loads((out / 'check_function.json').read_text())
    assert not report['violated']
    assert report['instance']['function']['critical'] == ['beta']
    assert main(['check-lemmas', '--function', str(path), '--lemma',
                 'concave', '--at', '0.7']) == 2, \
        "concave needs both x and y"
    assert main(['check-lemmas', '--function', str(path)]) == 2, \
        "a single function needs a single lemma"
