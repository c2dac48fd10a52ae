#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Created on Wed Sep 23 14:30:05 2026

Train the default desk configuration on synthetic pairs, translate the test
split and report PSNR, SSIM and SCM per HER2 level.
"""
import numpy as np

from DISTAIN import Trainer, evaluate_corpus, generate_dataset, load_config
from DISTAIN.Misc import plot_loss_curve, plot_translations
from DISTAIN.SyntheticSlides import TEST_OFFSET


output_dir = "Runs/toy"
config = load_config(overrides=['optimizer.steps=2000',
                                'guidance.steps=100'])

trainer = Trainer(config, output_dir)
log = trainer.train()
plot_loss_curve(log)


# Translate the held-out split.
test = generate_dataset(config.data.synthetic, config.data.test_count,
                        TEST_OFFSET)
generated = trainer.translate_images(np.stack([p.he for p in test]))

report = evaluate_corpus((p.id, g, p.ihc, p.label)
                         for p, g in zip(test, generated))
print(report.summary_table())

plot_translations([p.he for p in test[:4]], list(generated[:4]),
                  [p.ihc for p in test[:4]],
                  titles=[p.label for p in test[:4]])
