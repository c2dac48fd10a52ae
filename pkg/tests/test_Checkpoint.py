import json
import os
import zipfile

import numpy as np
import pytest
import torch

from DISTAIN.Checkpoint import (CheckpointState, load_checkpoint,
                                optimizer_from_state, optimizer_to_state,
                                save_checkpoint)
from DISTAIN.Misc import CheckpointError


def sample_state():
    gen = torch.Generator().manual_seed(0)
    tensors = {
        'model.w': torch.randn(3, 4, generator=gen),
        'model.b': torch.randn(4, generator=gen, dtype=torch.float64),
        'rng.torch': torch.randint(0, 255, (16,), generator=gen,
                                   dtype=torch.uint8),
        'flags': torch.tensor([True, False, True]),
        'scale': torch.tensor(0.25),
        'counts': np.arange(6, dtype=np.int64).reshape(2, 3),
    }

    return CheckpointState(tensors, {'step': 12, 'fingerprint': 'abc'},
                           'model:\n  depth: 1\n')


def test_round_trip_is_bit_exact(tmp_path):
    path = os.path.join(tmp_path, 'ckpt.zip')
    state = sample_state()
    save_checkpoint(path, state)

    loaded = load_checkpoint(path)
    assert set(loaded.tensors) == set(state.tensors)
    for name, value in state.tensors.items():
        expected = torch.as_tensor(value)
        assert loaded.tensors[name].dtype == expected.dtype
        assert loaded.tensors[name].shape == expected.shape
        assert torch.equal(loaded.tensors[name], expected)

    assert loaded.step == 12 and loaded.fingerprint == 'abc'
    assert loaded.meta['version'] == 1
    assert loaded.config_text == state.config_text
    assert set(loaded.section('model')) == {'w', 'b'}
    assert not os.path.exists(path + '.tmp')


def test_fingerprint_check(tmp_path):
    path = os.path.join(tmp_path, 'ckpt.zip')
    save_checkpoint(path, sample_state())

    load_checkpoint(path, expected_fingerprint='abc')
    with pytest.raises(CheckpointError):
        load_checkpoint(path, expected_fingerprint='xyz')
    assert load_checkpoint(path, 'xyz', override=True).step == 12


def test_corrupt_checkpoints(tmp_path):
    path = os.path.join(tmp_path, 'ckpt.zip')

    with open(path, 'wb') as f:
        f.write(b'not a zip file')
    with pytest.raises(CheckpointError):
        load_checkpoint(path)

    with pytest.raises(CheckpointError):
        load_checkpoint(os.path.join(tmp_path, 'missing.zip'))

    with zipfile.ZipFile(path, 'w') as archive:
        archive.writestr('manifest.txt', '')
        archive.writestr('meta.json', '{}')
    with pytest.raises(CheckpointError):
        load_checkpoint(path)

    with zipfile.ZipFile(path, 'w') as archive:
        archive.writestr('manifest.txt', 'w <f4 10 0 40\n')
        archive.writestr('payload.bin', b'\0'*8)
        archive.writestr('meta.json', json.dumps({'version': 1}))
        archive.writestr('config.yaml', '')
    with pytest.raises(CheckpointError):
        load_checkpoint(path)

    save_checkpoint(path, CheckpointState({}, {'version': 99}))
    # save_checkpoint stamps the current version.
    assert load_checkpoint(path).meta['version'] == 1

    with zipfile.ZipFile(path, 'w') as archive:
        for member in ('manifest.txt', 'payload.bin', 'config.yaml'):
            archive.writestr(member, '')
        archive.writestr('meta.json', json.dumps({'version': 99}))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_whitespace_names_are_rejected(tmp_path):
    with pytest.raises(CheckpointError):
        save_checkpoint(os.path.join(tmp_path, 'ckpt.zip'),
                        CheckpointState({'bad name': torch.zeros(1)}))


def test_optimizer_state_round_trip(tmp_path):
    torch.manual_seed(0)
    model = torch.nn.Linear(3, 2)
    optimizer = torch.optim.AdamW(model.parameters(), lr=1e-2)
    for _ in range(3):
        optimizer.zero_grad()
        model(torch.randn(5, 3)).pow(2).sum().backward()
        optimizer.step()

    tensors, meta = optimizer_to_state(optimizer)
    path = os.path.join(tmp_path, 'ckpt.zip')
    save_checkpoint(path, CheckpointState(tensors, {'optimizer': meta}))
    state = load_checkpoint(path)

    clone = torch.optim.AdamW(model.parameters(), lr=1.0)
    optimizer_from_state(clone, state)

    assert clone.param_groups[0]['lr'] == 1e-2
    original = optimizer.state_dict()['state']
    restored = clone.state_dict()['state']
    for idx in original:
        for key, value in original[idx].items():
            assert torch.equal(torch.as_tensor(restored[idx][key]),
                               torch.as_tensor(value))


def test_scalars_keep_their_shape(tmp_path):
    path = os.path.join(tmp_path, 'ckpt.zip')
    save_checkpoint(path, CheckpointState({'a': torch.tensor(3.0),
                                           'b': np.float32(0.5),
                                           'c': torch.tensor([3.0])}))

    loaded = load_checkpoint(path)
    assert loaded.tensors['a'].shape == ()
    assert loaded.tensors['b'].shape == ()
    assert loaded.tensors['c'].shape == (1,)
    assert loaded.tensors['a'].item() == 3.0
