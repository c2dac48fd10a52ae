#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Created on Thu Sep 17 16:44:02 2026

Portable checkpoint container. A checkpoint is an uncompressed zip archive
holding

    manifest.txt  one line per tensor: name dtype shape offset nbytes
    payload.bin   raw little-endian tensor bytes
    meta.json     format version, config fingerprint, step and other state
    config.yaml   normalised run configuration
"""
import json
import os
import zipfile
from dataclasses import dataclass, field

import numpy as np
import torch

from DISTAIN.Misc import CheckpointError


FORMAT_VERSION = 1
MEMBERS = ('manifest.txt', 'payload.bin', 'meta.json', 'config.yaml')


@dataclass
class CheckpointState:
    tensors: dict
    meta: dict = field(default_factory=dict)
    config_text: str = ''

    @property
    def step(self):
        return int(self.meta.get('step', 0))

    @property
    def fingerprint(self):
        return self.meta.get('fingerprint')

    def section(self, prefix):
        '''
        Tensors whose names start with 'prefix.', with the prefix removed.
        '''

        n = len(prefix) + 1
        return {name[n:]: t for name, t in self.tensors.items()
                if name.startswith(prefix + '.')}


def _shape_text(shape):
    return ','.join(str(s) for s in shape) if len(shape) else '-'


def _parse_shape(text):
    return () if text == '-' else tuple(int(s) for s in text.split(','))


def save_checkpoint(path, state):
    '''
    Write a CheckpointState to 'path'. The archive is written to a temporary
    file first and moved into place.

    Parameters
    ----------
    path : str
        Output file.
    state : CheckpointState
        Tensors (torch or numpy), metadata (JSON serialisable) and config
        text.

    Returns
    -------
    None.

    '''

    lines, chunks = [], []
    offset = 0
    for name in sorted(state.tensors):
        if any(c.isspace() for c in name):
            raise CheckpointError("Tensor name '%s' contains whitespace."
                                  % name)

        value = state.tensors[name]
        if torch.is_tensor(value):
            value = value.detach().cpu().contiguous().numpy()
        # 0-d values stay 0-d.
        array = np.asarray(value, order='C')
        array = array.astype(array.dtype.newbyteorder('<'), copy=False)

        data = array.tobytes()
        lines.append('%s %s %s %d %d' % (name, array.dtype.str,
                                         _shape_text(array.shape), offset,
                                         len(data)))
        chunks.append(data)
        offset += len(data)

    meta = dict(state.meta)
    meta['version'] = FORMAT_VERSION

    tmp = path + '.tmp'
    with zipfile.ZipFile(tmp, 'w', compression=zipfile.ZIP_STORED) as archive:
        archive.writestr('manifest.txt', '\n'.join(lines) + '\n')
        archive.writestr('payload.bin', b''.join(chunks))
        archive.writestr('meta.json', json.dumps(meta, indent=1,
                                                 sort_keys=True))
        archive.writestr('config.yaml', state.config_text)
    os.replace(tmp, path)

    return None


def load_checkpoint(path, expected_fingerprint=None, override=False):
    '''
    Read a checkpoint written by save_checkpoint().

    Parameters
    ----------
    path : str
        Checkpoint file.
    expected_fingerprint : str, optional
        Fingerprint of the current config. A mismatch raises CheckpointError
        unless 'override' is True. The default is None (no check).
    override : bool, optional
        Accept a mismatched fingerprint. The default is False.

    Returns
    -------
    CheckpointState
        Tensors are returned as torch tensors.

    '''

    try:
        with zipfile.ZipFile(path) as archive:
            missing = [m for m in MEMBERS if m not in archive.namelist()]
            if missing:
                raise CheckpointError("Checkpoint '%s' lacks %s."
                                      % (path, ', '.join(missing)))
            manifest = archive.read('manifest.txt').decode('utf-8')
            payload = archive.read('payload.bin')
            meta = json.loads(archive.read('meta.json').decode('utf-8'))
            config_text = archive.read('config.yaml').decode('utf-8')
    except (OSError, zipfile.BadZipFile, ValueError) as err:
        raise CheckpointError("Cannot read checkpoint '%s': %s" % (path, err))

    if meta.get('version') != FORMAT_VERSION:
        raise CheckpointError("Unsupported checkpoint version %s."
                              % meta.get('version'))

    if expected_fingerprint is not None and not override and \
            meta.get('fingerprint') != expected_fingerprint:
        raise CheckpointError("Checkpoint '%s' was written for a different "
                              "model configuration (fingerprint %s, expected "
                              "%s)." % (path, meta.get('fingerprint'),
                                        expected_fingerprint))

    tensors = {}
    for line in manifest.splitlines():
        if not line.strip():
            continue
        try:
            name, dtype, shape, offset, nbytes = line.split()
            dtype = np.dtype(dtype)
            shape = _parse_shape(shape)
            offset, nbytes = int(offset), int(nbytes)
        except (ValueError, TypeError) as err:
            raise CheckpointError("Malformed manifest line '%s': %s"
                                  % (line, err))

        count = int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(payload) or count*dtype.itemsize != nbytes:
            raise CheckpointError("Tensor '%s' does not fit the payload."
                                  % name)

        array = np.frombuffer(payload, dtype=dtype, count=count,
                              offset=offset).reshape(shape)
        tensors[name] = torch.from_numpy(array.astype(dtype.newbyteorder('='),
                                                      copy=True))

    return CheckpointState(tensors, meta, config_text)


def optimizer_to_state(optimizer):
    '''
    Split an optimizer state_dict into tensors ('optim.<param>.<key>') and
    JSON metadata (param groups and non-tensor per-parameter values).
    '''

    sd = optimizer.state_dict()
    tensors, scalars = {}, {}
    for idx, values in sd['state'].items():
        for key, value in values.items():
            if torch.is_tensor(value):
                tensors['optim.%d.%s' % (idx, key)] = value
            else:
                scalars['%d.%s' % (idx, key)] = value

    return tensors, {'param_groups': sd['param_groups'],
                     'scalars': scalars}


def optimizer_from_state(optimizer, state):
    '''
    Restore an optimizer from a CheckpointState written with
    optimizer_to_state().
    '''

    per_param = {}
    for name, value in state.section('optim').items():
        idx, key = name.split('.', 1)
        per_param.setdefault(int(idx), {})[key] = value
    for name, value in state.meta['optimizer']['scalars'].items():
        idx, key = name.split('.', 1)
        per_param.setdefault(int(idx), {})[key] = value

    optimizer.load_state_dict({
        'state': per_param,
        'param_groups': state.meta['optimizer']['param_groups']})

    return None
