#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Created on Fri Sep 18 10:15:39 2026

Training of the dual-stream denoiser, checkpointing and resumption, and the
conditioning / loss ablation study.
"""
import contextlib
import hashlib
import json
import os

import numpy as np
import pandas as pd
import torch

from DISTAIN.Checkpoint import (CheckpointState, load_checkpoint,
                                optimizer_from_state, optimizer_to_state,
                                save_checkpoint)
from DISTAIN.Conditioning import encode_semantic, make_semantic_encoder
from DISTAIN.DenoiserDiT import (CONDITIONING_MODES, ExponentialMovingAverage,
                                 denoise, make_denoiser)
from DISTAIN.LatentCodec import (encode_images, fit_autoencoder,
                                 fit_latent_scale, make_codec)
from DISTAIN.Metrics import evaluate_corpus
from DISTAIN.Misc import (CheckpointError, DataError, NumericalError,
                          high_frequency_energy, stable_seed)
from DISTAIN.NoiseSchedule import forward_diffuse
from DISTAIN.Objective import LOSS_PRESETS, hybrid_loss, loss_components
from DISTAIN.RunConfig import (fingerprint, load_config, normalized_yaml,
                               resolve_data_path, with_overrides)
from DISTAIN.SamplerCFG import translate
from DISTAIN.SyntheticSlides import (HER2_LEVELS, TEST_OFFSET,
                                     generate_dataset, load_paired_dir)


LOSS_LOG_COLUMNS = ['step', 'loss', 'mse', 'l1', 'lr']


def stack_images(pairs, attr):
    return torch.as_tensor(np.stack([getattr(p, attr) for p in pairs]),
                           dtype=torch.float32)


def level_indices(pairs):
    return [HER2_LEVELS.index(p.label) if p.label in HER2_LEVELS else -1
            for p in pairs]


def load_training_pairs(config, display_progress=False):
    '''
    Training pairs from data.he_dir / data.ihc_dir when set, otherwise the
    synthetic training split.
    '''

    data = config.data
    if data.he_dir is not None:
        return load_paired_dir(resolve_data_path(data.he_dir),
                               resolve_data_path(data.ihc_dir),
                               data.image_size,
                               resolve_data_path(data.labels_file))

    return generate_dataset(data.synthetic, data.train_count, 0,
                            display_progress)


class Trainer(object):
    def __init__(self, config, output_dir=None, codec=None,
                 semantic_encoder=None, display_progress=True):
        '''
        Owns the denoiser, codec, semantic encoder, optimiser and random
        state of one training run.

        Parameters
        ----------
        config : RunConfig
            Run configuration.
        output_dir : str, optional
            Directory for the loss log, checkpoints and diagnostics. The
            default is None (nothing is written).
        codec : Codec, optional
            Already fitted codec to share (e.g. between ablation runs). The
            default is None (built from config.codec).
        semantic_encoder : SemanticEncoder, optional
            Already fitted encoder to share. The default is None.
        display_progress : bool, optional
            The default is True.

        '''

        self.config = config
        self.output_dir = output_dir
        self.display_progress = display_progress
        seed = config.optimizer.seed
        opt = config.optimizer

        self.schedule = config.schedule.build()
        self.model = make_denoiser(config.model, seed=seed)

        self.codec_ready = codec is not None
        self.scale_ready = codec is not None
        self.codec = codec if codec is not None else \
            make_codec(config.codec, seed=seed)
        if config.codec.kind == 'fixed_orthogonal':
            self.codec_ready = True

        self.encoder_ready = semantic_encoder is not None or \
            config.conditioning.semantic == 'random_projection'
        self.semantic_encoder = semantic_encoder if semantic_encoder is not \
            None else make_semantic_encoder(config.conditioning.semantic,
                                            config.model.d_sem,
                                            config.data.image_size, seed=seed)

        self.optimizer = torch.optim.AdamW(
            self.model.parameters(), lr=opt.lr, betas=(opt.beta1, opt.beta2),
            weight_decay=opt.weight_decay)
        self.ema = ExponentialMovingAverage(self.model, opt.ema_decay) \
            if opt.ema else None

        self.generator = torch.Generator().manual_seed(seed)
        self.batch_rng = np.random.default_rng([seed, 1])
        self.step = 0
        self.loss_log = []

        self.he_latents = None
        self.ihc_latents = None
        self.c_sem = None

        return None

    @classmethod
    def from_checkpoint(cls, path, overrides=(), config=None, override=False,
                        display_progress=False):
        '''
        Rebuild a trainer from a checkpoint for inference. The config stored
        in the checkpoint is used unless 'config' is given, and 'overrides'
        (e.g. guidance settings) are applied on top.
        '''

        state = load_checkpoint(path)
        if config is None:
            config = load_config(text=state.config_text, overrides=overrides)
        elif overrides:
            config = with_overrides(config, overrides)

        trainer = cls(config, display_progress=display_progress)
        trainer.restore(state, override=override)

        return trainer

    def prepare_data(self, pairs=None):
        '''
        Fit the codec, latent scale and semantic encoder as needed, and
        cache the scaled training latents and semantic embeddings.

        Parameters
        ----------
        pairs : list of SlidePair, optional
            Training pairs. The default is None (see load_training_pairs).

        Returns
        -------
        None.

        '''

        if pairs is None:
            pairs = load_training_pairs(self.config, self.display_progress)
        if not pairs:
            raise DataError("No training pairs.")

        he = stack_images(pairs, 'he')
        ihc = stack_images(pairs, 'ihc')
        seed = self.config.optimizer.seed

        if not self.codec_ready:
            ct = self.config.codec_training
            fit_autoencoder(self.codec, torch.cat([he, ihc]), ct.steps,
                            ct.batch_size, ct.lr, seed, self.display_progress)
            self.codec_ready = True

        he_lat = encode_images(self.codec, he)
        ihc_lat = encode_images(self.codec, ihc)
        if not self.scale_ready:
            self.codec.set_scale(fit_latent_scale([he_lat, ihc_lat]))
            self.scale_ready = True

        if not self.encoder_ready:
            steps = self.config.conditioning.encoder_steps
            self.semantic_encoder.fit(he, level_indices(pairs), steps,
                                      seed=seed,
                                      display_progress=self.display_progress)
            self.encoder_ready = True

        scale = float(self.codec.scale_factor)
        self.he_latents = he_lat*scale
        self.ihc_latents = ihc_lat*scale
        self.c_sem = encode_semantic(he, self.semantic_encoder)

        return None

    def train_step(self):
        '''
        One optimisation step on a random batch. Returns the log record.
        '''

        if self.ihc_latents is None:
            raise DataError("prepare_data() must be called before training.")

        cfg = self.config
        B = cfg.optimizer.batch_size
        idx = self.batch_rng.integers(0, len(self.ihc_latents), size=B)
        index = torch.as_tensor(idx)

        x0 = self.ihc_latents[index]
        t = torch.randint(0, self.schedule.T, (B,), generator=self.generator)
        eps = torch.randn(x0.shape, generator=self.generator)
        x_t = forward_diffuse(x0, t, eps, self.schedule)

        conditioner = self.model.conditioner
        bundle = conditioner.build(self.c_sem[index], self.he_latents[index])
        bundle = conditioner.apply_cfg_dropout(bundle,
                                               cfg.conditioning.p_drop,
                                               self.generator)

        self.model.train()
        eps_pred = denoise(self.model, x_t, t, bundle)
        loss = hybrid_loss(eps, eps_pred, cfg.loss)

        if not torch.isfinite(loss):
            value = loss.item()
            self._dump_failure(idx, value)
            raise NumericalError("Non-finite loss %g at step %d."
                                 % (value, self.step))

        self.optimizer.zero_grad()
        loss.backward()
        self.optimizer.step()
        if self.ema is not None:
            self.ema.update(self.model)

        with torch.no_grad():
            mse, l1 = loss_components(eps, eps_pred)
        self.step += 1
        record = {'step': self.step, 'loss': loss.item(), 'mse': mse.item(),
                  'l1': l1.item(),
                  'lr': self.optimizer.param_groups[0]['lr']}
        self.loss_log.append(record)

        return record

    def _dump_failure(self, idx, loss):
        state = self.generator.get_state().numpy().tobytes()
        info = {'step': self.step, 'loss': repr(loss),
                'batch_indices': [int(i) for i in idx],
                'generator_digest': hashlib.sha256(state).hexdigest()}

        if self.output_dir is not None:
            os.makedirs(self.output_dir, exist_ok=True)
            path = os.path.join(self.output_dir,
                                'nonfinite_step%07d.json' % self.step)
            with open(path, 'w') as f:
                json.dump(info, f, indent=1)

        return info

    @contextlib.contextmanager
    def _locked(self):
        if self.output_dir is None:
            yield
            return

        os.makedirs(self.output_dir, exist_ok=True)
        lock = os.path.join(self.output_dir, '.lock')
        try:
            fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise DataError("Output directory '%s' is locked by another run "
                            "(remove '%s' if it is stale)."
                            % (self.output_dir, lock))
        try:
            os.write(fd, str(os.getpid()).encode('ascii'))
            os.close(fd)
            yield
        finally:
            os.remove(lock)

    def train(self, steps=None):
        '''
        Run the remaining optimisation steps (config.optimizer.steps in
        total, or 'steps' more when given), writing the loss log and
        periodic checkpoints to output_dir.

        Returns
        -------
        pandas.DataFrame
            The loss log.

        '''

        opt = self.config.optimizer
        target = opt.steps if steps is None else self.step + steps
        if self.ihc_latents is None:
            self.prepare_data()

        with self._locked():
            while self.step < target:
                record = self.train_step()

                if self.display_progress and (record['step'] % opt.log_every
                                              == 0 or record['step'] == 1):
                    print('step=%d: loss=%g (mse=%g, l1=%g)'
                          % (record['step'], record['loss'], record['mse'],
                             record['l1']))

                if self.output_dir is not None and opt.checkpoint_every > 0 \
                        and self.step % opt.checkpoint_every == 0:
                    self.save(os.path.join(self.output_dir,
                                           'checkpoint_%07d.zip' % self.step))

            if self.output_dir is not None:
                self.save(os.path.join(self.output_dir, 'last.zip'))
                self.loss_frame().to_csv(os.path.join(self.output_dir,
                                                      'loss_log.csv'),
                                         index=False)

        return self.loss_frame()

    def loss_frame(self):
        return pd.DataFrame(self.loss_log, columns=LOSS_LOG_COLUMNS)

    def state(self):
        '''
        Everything needed to continue the run identically.
        '''

        tensors = {}
        for prefix, module in (('model', self.model), ('codec', self.codec),
                               ('semantic', self.semantic_encoder)):
            for name, value in module.state_dict().items():
                tensors['%s.%s' % (prefix, name)] = value

        if self.ema is not None:
            tensors.update(self.ema.state_dict())

        optim_tensors, optim_meta = optimizer_to_state(self.optimizer)
        tensors.update(optim_tensors)
        tensors['rng.torch'] = self.generator.get_state()

        meta = {'fingerprint': fingerprint(self.config),
                'step': self.step,
                'optimizer': optim_meta,
                'numpy_rng': self.batch_rng.bit_generator.state,
                'loss_log': self.loss_log,
                'codec_ready': self.codec_ready,
                'scale_ready': self.scale_ready,
                'encoder_ready': self.encoder_ready}

        return CheckpointState(tensors, meta, normalized_yaml(self.config))

    def save(self, path):
        save_checkpoint(path, self.state())

        return None

    def restore(self, state, override=False):
        '''
        Load a CheckpointState into this trainer. A checkpoint written for a
        different model configuration raises CheckpointError unless
        'override' is True.
        '''

        if not override and state.fingerprint != fingerprint(self.config):
            raise CheckpointError("Checkpoint was written for a different "
                                  "model configuration.")

        self.model.load_state_dict(state.section('model'))
        self.codec.load_state_dict(state.section('codec'))
        self.semantic_encoder.load_state_dict(state.section('semantic'))
        self.semantic_encoder.freeze()

        if self.ema is None and state.section('ema'):
            decay = self.config.optimizer.ema_decay
            self.ema = ExponentialMovingAverage(self.model, decay)
        if self.ema is not None and state.section('ema'):
            self.ema.load_state_dict(state.tensors)

        if 'optimizer' in state.meta:
            optimizer_from_state(self.optimizer, state)
        self.generator.set_state(state.tensors['rng.torch'])
        self.batch_rng.bit_generator.state = state.meta['numpy_rng']
        self.step = state.step
        self.loss_log = [dict(r) for r in state.meta.get('loss_log', [])]
        self.codec_ready = bool(state.meta.get('codec_ready', True))
        self.scale_ready = bool(state.meta.get('scale_ready', True))
        self.encoder_ready = bool(state.meta.get('encoder_ready', True))

        return None

    def resume(self, path, override=False, pairs=None):
        '''
        Continue a run from a checkpoint file: restore all state and the loss
        log, then rebuild the cached latents with the restored codec.
        '''

        state = load_checkpoint(path, fingerprint(self.config), override)
        self.restore(state, override=True)
        self.prepare_data(pairs)

        return None

    def translate_images(self, images, guidance=None, batch_size=16,
                         use_ema=False):
        '''
        Translate H&E images (N, H, W, 3) in batches. Batch k is sampled
        with seed stable_seed(guidance.seed, str(k)).

        Returns
        -------
        numpy.ndarray
            Generated IHC images (N, H, W, 3).

        '''

        g = self.config.guidance if guidance is None else guidance
        images = torch.as_tensor(np.asarray(images), dtype=torch.float32)
        outputs = []

        with self.ema_weights(use_ema):
            for k, start in enumerate(range(0, len(images), batch_size)):
                gk = type(g)(g.scale, stable_seed(g.seed, str(k)), g.steps)
                out = translate(images[start:start + batch_size], self.model,
                                self.codec, self.schedule, gk,
                                self.semantic_encoder)
                outputs.append(out.numpy().astype(np.float64))

        return np.concatenate(outputs)

    @contextlib.contextmanager
    def ema_weights(self, use_ema=True):
        if not use_ema or self.ema is None:
            yield
            return

        self.ema.apply_shadow(self.model)
        try:
            yield
        finally:
            self.ema.restore(self.model)


def ablation_variants():
    '''
    (group, variant, overrides) of the ablation study: the four conditioning
    modes with the configured loss, and the four loss presets with dual
    cross-attention.
    '''

    variants = [('conditioning', mode, ['model.conditioning_mode=%s' % mode])
                for mode in CONDITIONING_MODES]
    for name, w in LOSS_PRESETS.items():
        variants.append(('loss', name,
                         ['model.conditioning_mode=dual_cross_attn',
                          'loss.lambda_mse=%r' % w.lambda_mse,
                          'loss.lambda_l1=%r' % w.lambda_l1]))

    return variants


def run_ablation(config, seeds=(0,), output_dir=None, test_pairs=None,
                 display_progress=True):
    '''
    Train and evaluate every ablation variant under identical seeds, data
    and step budgets.

    Parameters
    ----------
    config : RunConfig
        Base configuration.
    seeds : sequence of int, optional
        Training seeds. The default is (0,).
    output_dir : str, optional
        Where per-run logs and the result tables are written. The default is
        None.
    test_pairs : list of SlidePair, optional
        Evaluation pairs. The default is the synthetic test split.
    display_progress : bool, optional
        The default is True.

    Returns
    -------
    runs : pandas.DataFrame
        One row per (variant, seed) with scm, ssim, psnr and hf_energy.
    summary : pandas.DataFrame
        Mean per variant, ranked by scm within each group.

    '''

    train_pairs = load_training_pairs(config, display_progress)
    if test_pairs is None:
        test_pairs = generate_dataset(config.data.synthetic,
                                      config.data.test_count, TEST_OFFSET)
    test_he = np.stack([p.he for p in test_pairs])

    rows = []
    for seed in seeds:
        shared_codec, shared_encoder = None, None

        for group, variant, overrides in ablation_variants():
            cfg = with_overrides(config, overrides +
                                 ['optimizer.seed=%d' % seed])
            run_dir = None if output_dir is None else \
                os.path.join(output_dir, '%s_seed%d' % (variant, seed))

            if display_progress:
                print('ablation: %s (seed %d)' % (variant, seed))

            trainer = Trainer(cfg, run_dir, shared_codec, shared_encoder,
                              display_progress=False)
            trainer.prepare_data(train_pairs)
            shared_codec, shared_encoder = trainer.codec, \
                trainer.semantic_encoder
            trainer.train()

            generated = trainer.translate_images(test_he)
            report = evaluate_corpus(
                (p.id, gen, p.ihc, p.label)
                for p, gen in zip(test_pairs, generated))
            overall = report.group_means().loc['overall']

            rows.append({'group': group, 'variant': variant, 'seed': seed,
                         'scm': overall['scm'], 'ssim': overall['ssim'],
                         'psnr': overall['psnr'],
                         'hf_energy': float(np.mean(
                             [high_frequency_energy(g) for g in generated]))})

    runs = pd.DataFrame(rows)
    summary = runs.groupby(['group', 'variant'], sort=False)[
        ['scm', 'ssim', 'psnr', 'hf_energy']].mean().reset_index()
    summary = summary.sort_values(['group', 'scm'],
                                  ascending=[True, False]).reset_index(
                                      drop=True)
    summary.insert(2, 'rank', summary.groupby('group').cumcount() + 1)

    if output_dir is not None:
        os.makedirs(output_dir, exist_ok=True)
        runs.to_csv(os.path.join(output_dir, 'ablation_runs.csv'),
                    index=False)
        summary.to_csv(os.path.join(output_dir, 'ablation_summary.csv'),
                       index=False)
        with open(os.path.join(output_dir, 'ablation_summary.txt'), 'w') as f:
            f.write(summary.to_string(index=False) + '\n')

    return runs, summary
