#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Created on Mon Sep 21 11:52:07 2026

Command-line interface: train, translate, evaluate, ablate and
make-synthetic. Exit codes are 0 on success, 1 for usage or configuration
errors, 2 for data errors and 3 for numerical failures.
"""
import argparse
import os
import sys
import warnings

import numpy as np
import torch
from skimage import io

from DISTAIN.Metrics import WindowSpec, evaluate_corpus
from DISTAIN.Misc import (ConfigError, DataError, DistainError,
                          NumericalError, image_to_uint8, stable_seed)
from DISTAIN.RunConfig import load_config, with_overrides
from DISTAIN.SamplerCFG import GuidanceConfig, translate
from DISTAIN.SyntheticSlides import (generate_dataset, list_images,
                                     load_paired_dir, read_image,
                                     split_offsets, write_pairs_dir)
from DISTAIN.Trainer import Trainer, run_ablation


EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _add_config_arguments(parser):
    parser.add_argument('--config', help='YAML run configuration.')
    parser.add_argument('--set', dest='overrides', action='append',
                        default=[], metavar='KEY=VALUE',
                        help="Config override, e.g. 'optimizer.lr=1e-4'. "
                        "May be repeated.")

    return None


def _flag_overrides(args, mapping):
    '''
    Dotlist overrides for the flags in 'mapping' (attribute -> config key)
    that were given on the command line.
    '''

    out = []
    for attr, key in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            out.append('%s=%s' % (key, value))

    return out


def build_parser():
    parser = _Parser(prog='distain',
                     description='Virtual H&E to IHC staining with a '
                     'dual-stream latent diffusion transformer.')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('train', help='Train a model.')
    _add_config_arguments(p)
    p.add_argument('--output', required=True, help='Run directory.')
    p.add_argument('--resume', help='Checkpoint to continue from.')
    p.add_argument('--steps', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--lr', type=float)
    p.add_argument('--batch-size', type=int)
    p.add_argument('--ema', action='store_const', const=True)
    p.add_argument('--override-fingerprint', action='store_true')
    p.add_argument('--quiet', action='store_true')

    p = sub.add_parser('translate', help='Translate a directory of H&E '
                       'images.')
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--input', required=True, help='Directory of H&E images.')
    p.add_argument('--output', required=True)
    p.add_argument('--config', help='Expected run configuration; its '
                   'fingerprint must match the checkpoint.')
    p.add_argument('--set', dest='overrides', action='append', default=[],
                   metavar='KEY=VALUE')
    p.add_argument('--guidance-scale', type=float)
    p.add_argument('--seed', type=int)
    p.add_argument('--steps', type=int, help='Sampling steps (strided '
                   'sampling when below T).')
    p.add_argument('--use-ema', action='store_true')
    p.add_argument('--override-fingerprint', action='store_true')

    p = sub.add_parser('evaluate', help='Compare generated and ground-truth '
                       'images.')
    p.add_argument('--generated', required=True)
    p.add_argument('--truth', required=True)
    p.add_argument('--labels', help='CSV with columns id,label.')
    p.add_argument('--output', default='.')
    p.add_argument('--image-size', type=int)
    p.add_argument('--window', choices=['gaussian', 'uniform'],
                   default='gaussian')
    p.add_argument('--color', choices=['luma', 'per_channel'],
                   default='luma')
    p.add_argument('--scm-multiscale', action='store_true')

    p = sub.add_parser('ablate', help='Conditioning and loss ablation.')
    _add_config_arguments(p)
    p.add_argument('--output', required=True)
    p.add_argument('--seeds', type=int, nargs='+', default=[0])
    p.add_argument('--steps', type=int)

    p = sub.add_parser('make-synthetic', help='Write synthetic H&E/IHC '
                       'pairs.')
    _add_config_arguments(p)
    p.add_argument('--output', required=True)
    p.add_argument('--count', type=int)
    p.add_argument('--test-count', type=int)
    p.add_argument('--image-size', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--misalignment', type=float)
    p.add_argument('--label-distribution', choices=['uniform', 'bci'])
    p.add_argument('--auto-override', action='store_true')

    return parser


def cmd_train(args):
    overrides = args.overrides + _flag_overrides(args, {
        'steps': 'optimizer.steps', 'seed': 'optimizer.seed',
        'lr': 'optimizer.lr', 'batch_size': 'optimizer.batch_size',
        'ema': 'optimizer.ema'})
    config = load_config(args.config, overrides)

    trainer = Trainer(config, args.output, display_progress=not args.quiet)
    if args.resume:
        trainer.resume(args.resume, override=args.override_fingerprint)
    log = trainer.train()

    if len(log):
        print('Finished at step %d, loss=%g' % (trainer.step,
                                                log['loss'].iloc[-1]))

    return EXIT_OK


def cmd_translate(args):
    overrides = args.overrides + _flag_overrides(args, {
        'guidance_scale': 'guidance.scale', 'seed': 'guidance.seed',
        'steps': 'guidance.steps'})
    config = load_config(args.config, overrides) if args.config else None

    names = list_images(args.input)
    if not names:
        warnings.warn("No images found in '%s'." % args.input)
        return EXIT_OK

    trainer = Trainer.from_checkpoint(args.checkpoint, overrides, config,
                                      override=args.override_fingerprint)
    g = trainer.config.guidance
    os.makedirs(args.output, exist_ok=True)

    with trainer.ema_weights(args.use_ema):
        for stem, name in names.items():
            try:
                he = read_image(os.path.join(args.input, name),
                                trainer.config.data.image_size)
            except (OSError, ValueError) as err:
                warnings.warn("Skipping unreadable image '%s': %s"
                              % (name, err))
                continue

            gi = GuidanceConfig(g.scale, stable_seed(g.seed, name), g.steps)
            out = translate(torch.as_tensor(he, dtype=torch.float32),
                            trainer.model, trainer.codec, trainer.schedule,
                            gi, trainer.semantic_encoder)
            io.imsave(os.path.join(args.output, stem + '.png'),
                      image_to_uint8(out.numpy()), check_contrast=False)
            print('translated %s' % name)

    return EXIT_OK


def cmd_evaluate(args):
    window = WindowSpec(kind=args.window, color=args.color)

    # Truth is read as the 'source' side so that a labels.csv next to the
    # ground-truth directory is picked up.
    pairs = load_paired_dir(args.truth, args.generated, args.image_size,
                            args.labels)
    report = evaluate_corpus(((p.id, p.ihc, p.he, p.label) for p in pairs),
                             window, args.scm_multiscale)

    os.makedirs(args.output, exist_ok=True)
    report.to_csv(os.path.join(args.output, 'report.csv'))
    table = report.summary_table()
    with open(os.path.join(args.output, 'summary.txt'), 'w') as f:
        f.write(table + '\n')
    print(table)

    return EXIT_OK


def cmd_ablate(args):
    overrides = args.overrides + _flag_overrides(args, {
        'steps': 'optimizer.steps'})
    config = load_config(args.config, overrides)

    _, summary = run_ablation(config, args.seeds, args.output)
    print(summary.to_string(index=False))

    return EXIT_OK


def cmd_make_synthetic(args):
    overrides = args.overrides + _flag_overrides(args, {
        'count': 'data.train_count', 'test_count': 'data.test_count',
        'seed': 'data.synthetic.seed',
        'misalignment': 'data.synthetic.misalignment_px',
        'label_distribution': 'data.synthetic.label_distribution'})
    config = load_config(args.config, overrides)
    if args.image_size is not None:
        f = config.codec.compression_factor
        if args.image_size % f:
            raise ConfigError("'--image-size' must be a multiple of the "
                              "compression factor %d." % f)
        config = with_overrides(config, [
            'data.image_size=%d' % args.image_size,
            'data.synthetic.image_size=%d' % args.image_size,
            'model.latent_size=%d' % (args.image_size//f)])
    spec = config.data.synthetic

    splits = split_offsets(config.data.train_count, config.data.test_count)
    for split, (offset, count) in splits.items():
        pairs = generate_dataset(spec, count, offset)
        write_pairs_dir(pairs, os.path.join(args.output, split),
                        args.auto_override)
        levels, counts = np.unique([p.label for p in pairs],
                                   return_counts=True)
        print('%s: %d pairs (%s)' % (split, len(pairs), ', '.join(
            '%s: %d' % (lv, n) for lv, n in zip(levels, counts))))

    return EXIT_OK


COMMANDS = {'train': cmd_train, 'translate': cmd_translate,
            'evaluate': cmd_evaluate, 'ablate': cmd_ablate,
            'make-synthetic': cmd_make_synthetic}


def main(argv=None):
    '''
    Run the command line and return the exit code.
    '''

    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except (ConfigError, ValueError) as err:
        print('error: %s' % err, file=sys.stderr)
        return EXIT_USAGE
    except DataError as err:
        print('data error: %s' % err, file=sys.stderr)
        return EXIT_DATA
    except NumericalError as err:
        print('numerical error: %s' % err, file=sys.stderr)
        return EXIT_NUMERIC
    except DistainError as err:
        print('error: %s' % err, file=sys.stderr)
        return EXIT_USAGE
